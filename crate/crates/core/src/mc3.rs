//! Metropolis-coupled MCMC: several heated copies of the allocation sampler
//! run side by side and propose a state swap after every cycle.
//!
//! Every chain slot owns a ChaCha8 stream derived from the master seed, and
//! swap decisions come from a separate coordinator stream. Chains advance in
//! parallel between swap barriers, so results do not depend on scheduling.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BinaryDataset, Hyperparams, ThetaP};
use crate::sampler::{AllocationSampler, ChainState, MoveStats};

/// Stream reserved for swap decisions; chain `c` uses stream `c + 1`.
const COORDINATOR_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Heat of each chain; the first must be exactly 1.
    pub heats: Vec<f64>,
    /// Total number of cycles.
    pub cycles: usize,
    /// Leading cycles whose cold-chain draws are discarded.
    pub burn: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Config with the default heat ladder for `n_chains` chains.
    pub fn new(n_chains: usize, cycles: usize, burn: usize, seed: u64) -> Self {
        Self {
            heats: default_heats(n_chains),
            cycles,
            burn,
            seed,
            threads: None,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.heats.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self.heats.first() {
            None => return bad("at least one chain is required".into()),
            Some(&h) if h != 1.0 => return bad(format!("the first heat must be 1, got {h}")),
            _ => {}
        }
        if let Some(h) = self.heats.iter().find(|h| !(**h > 0.0 && **h <= 1.0)) {
            return bad(format!("heats must lie in (0, 1], got {h}"));
        }
        if self.burn >= self.cycles {
            return bad(format!(
                "burn-in ({}) must be smaller than the number of cycles ({})",
                self.burn, self.cycles
            ));
        }
        if self.threads == Some(0) {
            return bad("thread count must be positive".into());
        }
        Ok(())
    }
}

/// `n` heats spaced linearly from 1 down to 0.3.
pub fn default_heats(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (1.0 - t) + 0.3 * t
            })
            .collect(),
    }
}

/// One retained cold-chain sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub k: usize,
    /// 0-based labels.
    pub z: Vec<usize>,
    pub params: ThetaP,
    pub log_post: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SwapCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl SwapCounts {
    /// Accepted over proposed, or `None` if nothing was proposed.
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TraceStore {
    /// `K` of every chain slot after every cycle (`cycles` rows).
    pub k_trace: Vec<Vec<usize>>,
    /// Cold-chain draws after burn-in.
    pub draws: Vec<PosteriorDraw>,
    pub swaps: SwapCounts,
    /// Move statistics per chain slot.
    pub move_stats: Vec<MoveStats>,
    pub heats: Vec<f64>,
    pub burn: usize,
}

impl TraceStore {
    /// Cold-chain `K` after burn-in.
    pub fn cold_k(&self) -> Vec<usize> {
        self.draws.iter().map(|d| d.k).collect()
    }
}

/// Log acceptance probability of swapping the states of chains at heats
/// `h_i` and `h_j` with log posteriors `l_i` and `l_j`.
pub fn swap_log_acceptance(h_i: f64, l_i: f64, h_j: f64, l_j: f64) -> f64 {
    ((h_i - h_j) * (l_j - l_i)).min(0.0)
}

/// Proposes exchanging the states of two chains and performs the exchange
/// if accepted.
pub fn propose_swap(ci: &mut ChainState, cj: &mut ChainState, rng: &mut ChaCha8Rng) -> bool {
    let log_acc = swap_log_acceptance(ci.heat(), ci.log_post(), cj.heat(), cj.log_post());
    let accepted = log_acc >= 0.0 || (1.0 - rng.random::<f64>()).ln() < log_acc;
    if accepted {
        ci.swap_payload(cj);
    }
    accepted
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs the coupled chains and collects the traces.
pub fn run(data: &BinaryDataset, hyper: &Hyperparams, config: &RunConfig) -> Result<TraceStore> {
    config.validate()?;
    let sampler = AllocationSampler::new(data, hyper)?;
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker threads: {e}")))?
            .install(|| run_with(&sampler, data, config)),
        None => run_with(&sampler, data, config),
    }
}

fn run_with(sampler: &AllocationSampler, data: &BinaryDataset, config: &RunConfig) -> Result<TraceStore> {
    let mut chains = config
        .heats
        .iter()
        .enumerate()
        .map(|(c, &heat)| sampler.initial_chain(data, heat, stream(config.seed, c as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let mut coordinator = stream(config.seed, COORDINATOR_STREAM);
    let n_chains = chains.len();
    let mut store = TraceStore {
        k_trace: Vec::with_capacity(config.cycles),
        draws: Vec::with_capacity(config.cycles - config.burn),
        swaps: SwapCounts::default(),
        move_stats: Vec::new(),
        heats: config.heats.clone(),
        burn: config.burn,
    };
    let report_every = (config.cycles / 20).max(1);

    for cycle in 0..config.cycles {
        chains.par_iter_mut().for_each(|c| sampler.run_cycle(c));

        if n_chains > 1 {
            let i = coordinator.random_range(0..n_chains);
            let mut j = coordinator.random_range(0..n_chains - 1);
            if j >= i {
                j += 1;
            }
            let (lo, hi) = (i.min(j), i.max(j));
            let (left, right) = chains.split_at_mut(hi);
            store.swaps.proposed += 1;
            if propose_swap(&mut left[lo], &mut right[0], &mut coordinator) {
                store.swaps.accepted += 1;
            }
        }

        store.k_trace.push(chains.iter().map(|c| c.alloc().k()).collect());
        if cycle >= config.burn {
            let cold = &chains[0];
            store.draws.push(PosteriorDraw {
                k: cold.alloc().k(),
                z: cold.alloc().z().to_vec(),
                params: cold
                    .last_params()
                    .cloned()
                    .expect("parameters are drawn every cycle"),
                log_post: cold.log_post(),
            });
        }

        if (cycle + 1) % report_every == 0 || cycle + 1 == config.cycles {
            let swap_rate = store
                .swaps
                .rate()
                .map_or_else(|| "n/a".to_string(), |r| format!("{:.1}%", 100.0 * r));
            info!(
                "cycle {}/{} ({:.0}%): cold chain K = {}, swap acceptance {}",
                cycle + 1,
                config.cycles,
                100.0 * (cycle + 1) as f64 / config.cycles as f64,
                chains[0].alloc().k(),
                swap_rate
            );
        }
    }
    store.move_stats = chains.iter().map(|c| c.stats().clone()).collect();
    Ok(store)
}
