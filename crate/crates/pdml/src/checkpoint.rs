//! Binary checkpoints for networks, ensembles, agents and replay buffers.
//!
//! Network file: `u64` LE header length, JSON header `{"layer_sizes": [...]}`,
//! then every parameter as an `f64` LE in the network's storage order.
//!
//! Buffer file: `u64` LE header length, JSON header
//! `{"version", "state_dim", "action_dim", "capacity", "counts_per_policy"}`,
//! then one block per policy segment in ascending id order: `u32` policy id,
//! `u32` record count, and per record `u64` sequence number, state, action,
//! reward, next state (all `f64` LE) and a `u8` done flag.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pdml_core::ensemble::{EnsembleDynamicsModel, RunningNormalizer};
use pdml_core::nn::Mlp;
use pdml_core::policy::{GaussianHead, VarianceBounds};
use pdml_core::sac::{SacAgent, SacConfig};
use pdml_core::{PolicyId, ReplayBuffer, Transition};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const BUFFER_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    layer_sizes: Vec<usize>,
}

fn write_header<W: Write, H: Serialize>(w: &mut W, header: &H) -> std::io::Result<()> {
    let json = serde_json::to_vec(header).map_err(std::io::Error::other)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)
}

fn read_header<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R) -> std::io::Result<H> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "header length is implausible",
        ));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    serde_json::from_slice(&buf)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_network<W: Write>(w: &mut W, net: &Mlp) -> std::io::Result<()> {
    write_header(
        w,
        &NetworkHeader {
            layer_sizes: net.layer_sizes().to_vec(),
        },
    )?;
    write_f64s(w, net.params())
}

pub fn read_network<R: Read>(r: &mut R) -> Result<Mlp> {
    let header: NetworkHeader = read_header(r).map_err(|e| AppError::format("network", e))?;
    let n = Mlp::param_count(&header.layer_sizes);
    let params = read_f64s(r, n).map_err(|e| AppError::format("network", e))?;
    Ok(Mlp::from_params(&header.layer_sizes, params)?)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| AppError::io(&tmp, e))?;
    w.flush().map_err(|e| AppError::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| AppError::io(path, e))?,
    ))
}

pub fn save_network(path: &Path, net: &Mlp) -> Result<()> {
    write_atomic(path, |w| write_network(w, net))
}

pub fn load_network(path: &Path) -> Result<Mlp> {
    read_network(&mut open(path)?).map_err(|e| match e {
        AppError::Format { message, .. } => AppError::format(path, message),
        other => other,
    })
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)
    })
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| AppError::format(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    state_dim: usize,
    action_dim: usize,
    members: usize,
    bounds: VarianceBounds,
    normalizer: RunningNormalizer,
}

/// One network file per member plus `ensemble.json` with the bounds and
/// input statistics.
pub fn save_ensemble(dir: &Path, model: &EnsembleDynamicsModel) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut files = Vec::new();
    for (i, m) in model.members().iter().enumerate() {
        let p = dir.join(format!("member_{i}.bin"));
        save_network(&p, &m.net)?;
        files.push(p);
    }
    let meta = EnsembleMeta {
        state_dim: model.state_dim(),
        action_dim: model.action_dim(),
        members: model.ensemble_size(),
        bounds: model.members()[0].bounds,
        normalizer: model.normalizer.clone(),
    };
    let p = dir.join("ensemble.json");
    save_json(&p, &meta)?;
    files.push(p);
    Ok(files)
}

pub fn load_ensemble(dir: &Path, learning_rate: f64) -> Result<EnsembleDynamicsModel> {
    let meta: EnsembleMeta = load_json(&dir.join("ensemble.json"))?;
    let mut members = Vec::with_capacity(meta.members);
    for i in 0..meta.members {
        let net = load_network(&dir.join(format!("member_{i}.bin")))?;
        members.push(GaussianHead::new(net, meta.bounds)?);
    }
    Ok(EnsembleDynamicsModel::from_parts(
        meta.state_dim,
        meta.action_dim,
        members,
        meta.normalizer,
        learning_rate,
    )?)
}

#[derive(Serialize, Deserialize)]
struct AgentMeta {
    state_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    log_alpha: f64,
    bounds: VarianceBounds,
    config: SacConfig,
}

const AGENT_NETS: [&str; 5] = ["actor", "q1", "q2", "q1_target", "q2_target"];

pub fn save_agent(dir: &Path, agent: &SacAgent) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let nets = [
        &agent.actor.net,
        &agent.q1,
        &agent.q2,
        &agent.q1_target,
        &agent.q2_target,
    ];
    let mut files = Vec::new();
    for (name, net) in AGENT_NETS.iter().zip(nets) {
        let p = dir.join(format!("{name}.bin"));
        save_network(&p, net)?;
        files.push(p);
    }
    let sq = &agent.squash;
    let meta = AgentMeta {
        state_dim: agent.state_dim(),
        action_low: sq
            .center
            .iter()
            .zip(&sq.scale)
            .map(|(c, s)| c - s)
            .collect(),
        action_high: sq
            .center
            .iter()
            .zip(&sq.scale)
            .map(|(c, s)| c + s)
            .collect(),
        log_alpha: agent.log_alpha,
        bounds: agent.actor.bounds,
        config: agent.config.clone(),
    };
    let p = dir.join("agent.json");
    save_json(&p, &meta)?;
    files.push(p);
    Ok(files)
}

/// Restores parameters; optimizer moments start fresh.
pub fn load_agent(dir: &Path) -> Result<SacAgent> {
    let meta: AgentMeta = load_json(&dir.join("agent.json"))?;
    let mut agent = SacAgent::new(
        meta.state_dim,
        &meta.action_low,
        &meta.action_high,
        meta.config,
        &mut pdml_core::rng::stream(0, 0),
    )?;
    let mut nets = Vec::with_capacity(AGENT_NETS.len());
    for name in AGENT_NETS {
        let net = load_network(&dir.join(format!("{name}.bin")))?;
        nets.push(net);
    }
    let mut it = nets.into_iter();
    let mut next = |expect: &Mlp| -> Result<Mlp> {
        let n = it.next().expect("five agent networks");
        if n.layer_sizes() != expect.layer_sizes() {
            return Err(AppError::format(
                dir,
                "agent network shape does not match its config",
            ));
        }
        Ok(n)
    };
    agent.actor = GaussianHead::new(next(&agent.actor.net)?, meta.bounds)?;
    agent.q1 = next(&agent.q1)?;
    agent.q2 = next(&agent.q2)?;
    agent.q1_target = next(&agent.q1_target)?;
    agent.q2_target = next(&agent.q2_target)?;
    agent.log_alpha = meta.log_alpha;
    agent.reset_optimizers();
    Ok(agent)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct BufferHeader {
    pub version: u32,
    pub state_dim: usize,
    pub action_dim: usize,
    pub capacity: usize,
    pub counts_per_policy: BTreeMap<u32, usize>,
}

pub fn write_buffer<W: Write>(w: &mut W, buffer: &ReplayBuffer) -> std::io::Result<()> {
    let counts = buffer.counts_per_policy();
    write_header(
        w,
        &BufferHeader {
            version: BUFFER_FORMAT_VERSION,
            state_dim: buffer.state_dim(),
            action_dim: buffer.action_dim(),
            capacity: buffer.capacity(),
            counts_per_policy: counts.iter().map(|(id, &c)| (id.0, c)).collect(),
        },
    )?;
    for (&id, &count) in &counts {
        w.write_all(&id.0.to_le_bytes())?;
        w.write_all(&(count as u32).to_le_bytes())?;
        for (seq, t) in buffer.segment(id) {
            w.write_all(&seq.to_le_bytes())?;
            write_f64s(w, &t.state)?;
            write_f64s(w, &t.action)?;
            write_f64s(w, &[t.reward])?;
            write_f64s(w, &t.next_state)?;
            w.write_all(&[t.done as u8])?;
        }
    }
    Ok(())
}

pub fn read_buffer<R: Read>(r: &mut R) -> Result<ReplayBuffer> {
    let bad = |e: std::io::Error| AppError::format("buffer", e);
    let header: BufferHeader = read_header(r).map_err(bad)?;
    if header.version != BUFFER_FORMAT_VERSION {
        return Err(AppError::format(
            "buffer",
            format!("unsupported version {}", header.version),
        ));
    }
    let (sd, ad) = (header.state_dim, header.action_dim);
    let mut records: Vec<(u64, Transition)> = Vec::new();
    for (&id, &count) in &header.counts_per_policy {
        let got_id = read_u32(r).map_err(bad)?;
        let got_count = read_u32(r).map_err(bad)? as usize;
        if got_id != id || got_count != count {
            return Err(AppError::format(
                "buffer",
                format!("segment {got_id} does not match the header"),
            ));
        }
        for _ in 0..count {
            let mut seq = [0u8; 8];
            r.read_exact(&mut seq).map_err(bad)?;
            let state = read_f64s(r, sd).map_err(bad)?;
            let action = read_f64s(r, ad).map_err(bad)?;
            let reward = read_f64s(r, 1).map_err(bad)?[0];
            let next_state = read_f64s(r, sd).map_err(bad)?;
            let mut done = [0u8; 1];
            r.read_exact(&mut done).map_err(bad)?;
            records.push((
                u64::from_le_bytes(seq),
                Transition {
                    state,
                    action,
                    reward,
                    next_state,
                    done: done[0] != 0,
                    policy_id: PolicyId(id),
                },
            ));
        }
    }
    records.sort_by_key(|(seq, _)| *seq);
    let mut buffer = ReplayBuffer::new(sd, ad, header.capacity)?;
    for (seq, t) in records {
        buffer.push_with_seq(seq, t)?;
    }
    Ok(buffer)
}

pub fn save_buffer(path: &Path, buffer: &ReplayBuffer) -> Result<()> {
    write_atomic(path, |w| write_buffer(w, buffer))
}

pub fn load_buffer(path: &Path) -> Result<ReplayBuffer> {
    read_buffer(&mut open(path)?).map_err(|e| match e {
        AppError::Format { message, .. } => AppError::format(path, message),
        other => other,
    })
}
