//! Real-sample buffer segmented by the policy that generated each transition.
//!
//! Eviction is global FIFO over insertion order. Sampling is two-stage: a
//! policy id is drawn from the mixture weights restricted to the ids that are
//! still stored, then a transition is drawn uniformly inside that segment.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Identifier of a policy snapshot; equals its index in the historical sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyId(pub u32);

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type WeightMap = BTreeMap<PolicyId, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub policy_id: PolicyId,
}

/// Every `HOLDOUT_STRIDE`-th inserted transition is reserved for validation.
pub const HOLDOUT_STRIDE: u64 = 10;

/// Which part of the buffer a sampling call draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    /// Transitions not reserved for validation.
    Train,
    /// Every tenth inserted transition.
    Holdout,
}

impl Subset {
    #[inline]
    fn contains(self, seq: u64) -> bool {
        let holdout = seq % HOLDOUT_STRIDE == HOLDOUT_STRIDE - 1;
        match self {
            Subset::All => true,
            Subset::Train => !holdout,
            Subset::Holdout => holdout,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    seq: u64,
    transition: Transition,
}

#[derive(Debug, Clone, Default)]
struct Segment {
    entries: VecDeque<Entry>,
    holdout: usize,
}

impl Segment {
    fn count(&self, subset: Subset) -> usize {
        match subset {
            Subset::All => self.entries.len(),
            Subset::Train => self.entries.len() - self.holdout,
            Subset::Holdout => self.holdout,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    segments: BTreeMap<PolicyId, Segment>,
    order: VecDeque<PolicyId>,
    next_seq: u64,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || state_dim == 0 || action_dim == 0 {
            return Err(Error::precondition(
                "buffer dimensions and capacity must be positive",
            ));
        }
        Ok(Self {
            state_dim,
            action_dim,
            capacity,
            segments: BTreeMap::new(),
            order: VecDeque::new(),
            next_seq: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Sequence number the next pushed transition will receive.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn policy_ids(&self) -> impl Iterator<Item = PolicyId> + '_ {
        self.segments.keys().copied()
    }

    pub fn segment_len(&self, id: PolicyId) -> usize {
        self.segments.get(&id).map_or(0, |s| s.entries.len())
    }

    pub fn counts_per_policy(&self) -> BTreeMap<PolicyId, usize> {
        self.segments
            .iter()
            .map(|(&k, s)| (k, s.entries.len()))
            .collect()
    }

    /// Stored transitions of one policy with their global sequence numbers,
    /// oldest first.
    pub fn segment(&self, id: PolicyId) -> impl Iterator<Item = (u64, &Transition)> + '_ {
        self.segments
            .get(&id)
            .into_iter()
            .flat_map(|s| s.entries.iter().map(|e| (e.seq, &e.transition)))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.segments
            .values()
            .flat_map(|s| s.entries.iter().map(|e| &e.transition))
    }

    pub fn iter_subset(&self, subset: Subset) -> impl Iterator<Item = &Transition> + '_ {
        self.segments.values().flat_map(move |s| {
            s.entries
                .iter()
                .filter(move |e| subset.contains(e.seq))
                .map(|e| &e.transition)
        })
    }

    fn validate(&self, t: &Transition) -> Result<()> {
        if t.state.len() != self.state_dim {
            return Err(Error::dims(
                "transition state",
                self.state_dim,
                t.state.len(),
            ));
        }
        if t.next_state.len() != self.state_dim {
            return Err(Error::dims(
                "transition next_state",
                self.state_dim,
                t.next_state.len(),
            ));
        }
        if t.action.len() != self.action_dim {
            return Err(Error::dims(
                "transition action",
                self.action_dim,
                t.action.len(),
            ));
        }
        Ok(())
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        let seq = self.next_seq;
        self.push_with_seq(seq, transition)
    }

    /// Pushes with an explicit sequence number (used when restoring a
    /// checkpoint). Sequence numbers must be strictly increasing.
    pub fn push_with_seq(&mut self, seq: u64, transition: Transition) -> Result<()> {
        self.validate(&transition)?;
        if seq < self.next_seq {
            return Err(Error::precondition("sequence numbers must increase"));
        }
        let id = transition.policy_id;
        let seg = self.segments.entry(id).or_default();
        if Subset::Holdout.contains(seq) {
            seg.holdout += 1;
        }
        seg.entries.push_back(Entry { seq, transition });
        self.order.push_back(id);
        self.next_seq = seq + 1;
        while self.order.len() > self.capacity {
            self.evict_oldest();
        }
        Ok(())
    }

    fn evict_oldest(&mut self) {
        let Some(id) = self.order.pop_front() else {
            return;
        };
        let seg = self
            .segments
            .get_mut(&id)
            .expect("order references a live segment");
        let old = seg
            .entries
            .pop_front()
            .expect("segment in order is non-empty");
        if Subset::Holdout.contains(old.seq) {
            seg.holdout -= 1;
        }
        if seg.entries.is_empty() {
            self.segments.remove(&id);
        }
    }

    /// Weight of each stored policy proportional to its segment size, which
    /// makes two-stage sampling uniform over transitions.
    pub fn uniform_weights(&self) -> Result<WeightMap> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.len() as f64;
        Ok(self
            .segments
            .iter()
            .map(|(&id, s)| (id, s.entries.len() as f64 / n))
            .collect())
    }

    fn segment_sampler(
        &self,
        weights: &WeightMap,
        subset: Subset,
    ) -> Result<(Vec<PolicyId>, WeightedIndex<f64>)> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut ids = Vec::new();
        let mut ws = Vec::new();
        for (id, &w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::precondition(alloc::format!(
                    "weight of policy {id} is negative or non-finite"
                )));
            }
            if let Some(seg) = self.segments.get(id) {
                if w > 0.0 && seg.count(subset) > 0 {
                    ids.push(*id);
                    ws.push(w);
                }
            }
        }
        if ids.is_empty() {
            return Err(Error::ZeroWeights);
        }
        let dist = WeightedIndex::new(&ws).map_err(|_| Error::ZeroWeights)?;
        Ok((ids, dist))
    }

    fn draw_in_segment<R: Rng + ?Sized>(
        &self,
        id: PolicyId,
        subset: Subset,
        rng: &mut R,
    ) -> &Transition {
        let seg = &self.segments[&id];
        let n = seg.entries.len();
        loop {
            let e = &seg.entries[rng.random_range(0..n)];
            if subset.contains(e.seq) {
                return &e.transition;
            }
        }
    }

    /// Two-stage weighted sampling with replacement from `subset`.
    pub fn sample_subset<R: Rng + ?Sized>(
        &self,
        weights: &WeightMap,
        batch_size: usize,
        subset: Subset,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        if batch_size == 0 {
            return Err(Error::precondition("batch size must be at least one"));
        }
        let (ids, dist) = self.segment_sampler(weights, subset)?;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let id = ids[dist.sample(rng)];
            out.push(self.draw_in_segment(id, subset, rng));
        }
        Ok(out)
    }

    pub fn sample_weighted<R: Rng + ?Sized>(
        &self,
        weights: &WeightMap,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        self.sample_subset(weights, batch_size, Subset::All, rng)
    }

    /// Rollout start states drawn like [`Self::sample_weighted`].
    pub fn sample_initial_states<R: Rng + ?Sized>(
        &self,
        weights: &WeightMap,
        count: usize,
        rng: &mut R,
    ) -> Result<Matrix> {
        let batch = self.sample_weighted(weights, count, rng)?;
        Matrix::from_rows(self.state_dim, batch.iter().map(|t| t.state.as_slice()))
    }

    /// Uniform sample over all stored transitions, with replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        let w = self.uniform_weights()?;
        self.sample_weighted(&w, batch_size, rng)
    }
}
