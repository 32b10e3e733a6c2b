//! Collapsed allocation sampler for a single (possibly heated) chain.
//!
//! One cycle is ten iterations of: a Gibbs scan over the allocations, one
//! attempt each of the three block moves on `z | K`, and one
//! absorption/ejection attempt on `(K, z)`. After the tenth iteration the
//! weights and success probabilities are drawn from their full conditionals
//! and the missing entries are re-imputed.
//!
//! A chain at heat `h` targets the collapsed posterior raised to the power
//! `h`. Heating applies to the target only: every Metropolis-Hastings ratio
//! is `h * (log target ratio) + log proposal ratio`, and the Gibbs
//! conditionals are tempered before normalisation.

mod ejection;
mod gibbs;
mod moves;
mod params;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AllocationState, BinaryDataset, CollapsedPosterior, Hyperparams, ThetaP};

pub use ejection::{ejection_probability, solve_ejection_alpha, EjectionTable};

#[doc(hidden)]
pub use ejection::{absorb_labels, eject_labels, ejection_path_terms, PathTerms};

/// Number of sampler iterations in one cycle.
pub const ITERATIONS_PER_CYCLE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    M1,
    M2,
    M3,
    Eject,
    Absorb,
}

impl MoveKind {
    pub const ALL: [MoveKind; 5] = [
        MoveKind::M1,
        MoveKind::M2,
        MoveKind::M3,
        MoveKind::Eject,
        MoveKind::Absorb,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounter {
    pub proposed: u64,
    pub accepted: u64,
}

/// Proposal and acceptance counts per Metropolis-Hastings move type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MoveStats {
    counters: [MoveCounter; 5],
}

impl MoveStats {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        let c = &mut self.counters[kind.index()];
        c.proposed += 1;
        c.accepted += accepted as u64;
    }

    pub fn get(&self, kind: MoveKind) -> MoveCounter {
        self.counters[kind.index()]
    }

    pub fn merge(&mut self, other: &MoveStats) {
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            a.proposed += b.proposed;
            a.accepted += b.accepted;
        }
    }
}

impl Serialize for MoveStats {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(5))?;
        for kind in MoveKind::ALL {
            map.serialize_entry(&kind, &self.get(kind))?;
        }
        map.end()
    }
}

/// Which update steps run inside an iteration. All enabled by default;
/// the toggles exist so that each move can be checked in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveSet {
    pub gibbs: bool,
    pub m1: bool,
    pub m2: bool,
    pub m3: bool,
    pub eject_absorb: bool,
}

impl Default for MoveSet {
    fn default() -> Self {
        Self {
            gibbs: true,
            m1: true,
            m2: true,
            m3: true,
            eject_absorb: true,
        }
    }
}

/// Per-chain scratch buffers, reused across moves.
#[derive(Debug, Clone, Default)]
struct Scratch {
    weights: Vec<f64>,
    members: Vec<usize>,
    labels: Vec<usize>,
    order: Vec<usize>,
    s_a: Vec<u32>,
    s_b: Vec<u32>,
    s_c: Vec<u32>,
    s_d: Vec<u32>,
    z_alt: Vec<usize>,
}

/// The part of a chain that moves between chain slots when a swap is
/// accepted.
#[derive(Debug, Clone)]
pub struct ChainPayload {
    pub alloc: AllocationState,
    pub log_post: f64,
    pub last_params: Option<ThetaP>,
}

/// One chain: its state, heat, random stream and bookkeeping.
#[derive(Debug, Clone)]
pub struct ChainState {
    payload: ChainPayload,
    heat: f64,
    rng: ChaCha8Rng,
    stats: MoveStats,
    scratch: Scratch,
}

impl ChainState {
    pub fn alloc(&self) -> &AllocationState {
        &self.payload.alloc
    }

    pub fn heat(&self) -> f64 {
        self.heat
    }

    /// Cached log collapsed posterior of the current allocation.
    pub fn log_post(&self) -> f64 {
        self.payload.log_post
    }

    pub fn last_params(&self) -> Option<&ThetaP> {
        self.payload.last_params.as_ref()
    }

    pub fn stats(&self) -> &MoveStats {
        &self.stats
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn payload(&self) -> &ChainPayload {
        &self.payload
    }

    /// Exchanges states with `other`; heats, random streams and move
    /// statistics stay with their chain slots.
    pub fn swap_payload(&mut self, other: &mut ChainState) {
        std::mem::swap(&mut self.payload, &mut other.payload);
    }
}

/// Read-only sampler context shared by all chains of a run.
#[derive(Debug, Clone)]
pub struct AllocationSampler {
    posterior: CollapsedPosterior,
    ejection: EjectionTable,
    missing: Vec<usize>,
    moves: MoveSet,
}

impl AllocationSampler {
    pub fn new(data: &BinaryDataset, hyper: &Hyperparams) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            posterior: CollapsedPosterior::new(data.n(), data.d(), hyper)?,
            ejection: EjectionTable::new(data.n(), hyper.ejection_target),
            missing: data.missing_positions(),
            moves: MoveSet::default(),
        })
    }

    pub fn with_moves(mut self, moves: MoveSet) -> Self {
        self.moves = moves;
        self
    }

    pub fn posterior(&self) -> &CollapsedPosterior {
        &self.posterior
    }

    pub fn hyper(&self) -> &Hyperparams {
        self.posterior.hyper()
    }

    pub fn ejection_table(&self) -> &EjectionTable {
        &self.ejection
    }

    /// Chain wrapping an existing allocation.
    pub fn chain(&self, alloc: AllocationState, heat: f64, rng: ChaCha8Rng) -> Result<ChainState> {
        if !(heat > 0.0 && heat <= 1.0) {
            return Err(Error::InvalidConfig(format!("heat {heat} outside (0, 1]")));
        }
        if alloc.n() != self.posterior.n()
            || alloc.d() != self.posterior.d()
            || alloc.kmax() != self.hyper().kmax
        {
            return Err(Error::DimensionMismatch(
                "allocation state does not match the sampler".into(),
            ));
        }
        alloc.audit()?;
        let log_post = self.posterior.log_posterior(&alloc);
        Ok(ChainState {
            payload: ChainPayload {
                alloc,
                log_post,
                last_params: None,
            },
            heat,
            rng,
            stats: MoveStats::default(),
            scratch: Scratch::default(),
        })
    }

    /// Chain started at `K = 1` with missing entries imputed uniformly at
    /// random.
    pub fn initial_chain(&self, data: &BinaryDataset, heat: f64, mut rng: ChaCha8Rng) -> Result<ChainState> {
        let mut completed = data.values().to_vec();
        for &idx in &self.missing {
            completed[idx] = rng.random_range(0..2u8);
        }
        let alloc = AllocationState::single_cluster(completed, data.d(), self.hyper().kmax)?;
        self.chain(alloc, heat, rng)
    }

    /// One absorption/ejection attempt. Returns the move type tried and
    /// whether it was accepted, or `None` if nothing could be proposed.
    pub fn absorb_or_eject(&self, c: &mut ChainState) -> Option<(MoveKind, bool)> {
        let k = c.payload.alloc.k();
        let pe = ejection_probability(k, self.hyper().kmax);
        if pe == 0.0 && k < 2 {
            return None;
        }
        if c.rng.random::<f64>() < pe {
            self.eject(c).map(|acc| (MoveKind::Eject, acc))
        } else {
            self.absorb(c).map(|acc| (MoveKind::Absorb, acc))
        }
    }

    /// One iteration: Gibbs scan, M1, M2, M3, absorption/ejection.
    pub fn iterate(&self, c: &mut ChainState) {
        if self.moves.gibbs {
            self.gibbs_scan(c);
        }
        if self.moves.m1 {
            if let Some(acc) = self.move_m1(c) {
                c.stats.record(MoveKind::M1, acc);
            }
        }
        if self.moves.m2 {
            if let Some(acc) = self.move_m2(c) {
                c.stats.record(MoveKind::M2, acc);
            }
        }
        if self.moves.m3 {
            if let Some(acc) = self.move_m3(c) {
                c.stats.record(MoveKind::M3, acc);
            }
        }
        if self.moves.eject_absorb {
            if let Some((kind, acc)) = self.absorb_or_eject(c) {
                c.stats.record(kind, acc);
            }
        }
    }

    /// A full cycle: ten iterations, then parameter draws and imputation.
    pub fn run_cycle(&self, c: &mut ChainState) {
        for _ in 0..ITERATIONS_PER_CYCLE {
            self.iterate(c);
        }
        self.refresh_log_post(c);
        let params = self.draw_params(c);
        if !self.missing.is_empty() {
            self.impute_missing(c, &params);
            c.payload.log_post = self.posterior.log_posterior(&c.payload.alloc);
        }
        c.payload.last_params = Some(params);
    }

    /// Recomputes the cached log posterior; in debug builds also checks the
    /// incrementally maintained value and the sufficient statistics.
    fn refresh_log_post(&self, c: &mut ChainState) {
        let fresh = self.posterior.log_posterior(&c.payload.alloc);
        if cfg!(debug_assertions) {
            if let Err(e) = c.payload.alloc.audit() {
                panic!("sufficient statistic audit failed: {e}");
            }
            let drift = (fresh - c.payload.log_post).abs();
            assert!(
                drift <= 1e-8 * fresh.abs().max(1.0),
                "cached log posterior drifted by {drift}"
            );
        }
        c.payload.log_post = fresh;
    }

    /// Accepts with probability `min(1, exp(log_ratio))`.
    fn accept(rng: &mut ChaCha8Rng, log_ratio: f64) -> bool {
        if log_ratio >= 0.0 {
            return true;
        }
        // 1 - U lies in (0, 1]
        (1.0 - rng.random::<f64>()).ln() < log_ratio
    }

    /// Audited log posterior recomputed from scratch; for tests.
    pub fn fresh_log_post(&self, c: &ChainState) -> Result<f64> {
        c.payload.alloc.audit()?;
        Ok(self.posterior.log_posterior(&c.payload.alloc))
    }

    /// Missing positions re-imputed in the last cycle, as flat indices.
    pub fn missing_positions(&self) -> &[usize] {
        &self.missing
    }
}

/// Draws an ordered pair of distinct labels from `0..k`, `k >= 2`.
fn distinct_pair(rng: &mut ChaCha8Rng, k: usize) -> (usize, usize) {
    let a = rng.random_range(0..k);
    let mut b = rng.random_range(0..k - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Samples an index from unnormalised log weights scaled by `heat`.
fn sample_tempered(rng: &mut ChaCha8Rng, log_weights: &[f64], heat: f64) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|w| (heat * (w - max)).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (idx, w) in log_weights.iter().enumerate() {
        u -= (heat * (w - max)).exp();
        if u < 0.0 {
            return idx;
        }
    }
    log_weights.len() - 1
}
