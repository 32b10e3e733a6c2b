use super::{sample_tempered, AllocationSampler, ChainState};
use crate::model::AllocationState;

impl AllocationSampler {
    /// Untempered log weights of the full conditional of `z_i` over the
    /// current `K` labels, with observation `i` excluded from the statistics.
    /// Differences between entries are exact log-posterior differences.
    pub fn conditional_log_weights(&self, alloc: &AllocationState, i: usize) -> Vec<f64> {
        let mut tmp = alloc.clone();
        tmp.detach(i);
        let row = alloc.row(i);
        (0..tmp.k())
            .map(|k| self.posterior.log_join_weight(k, tmp.n_k(k), tmp.s_k(k), row))
            .collect()
    }

    /// Systematic scan over observations, each reallocated from its
    /// tempered collapsed full conditional.
    pub fn gibbs_scan(&self, c: &mut ChainState) {
        let k = c.payload.alloc.k();
        if k == 1 {
            return;
        }
        let post = &self.posterior;
        let mut weights = std::mem::take(&mut c.scratch.weights);
        weights.resize(k, 0.0);
        let alloc = &mut c.payload.alloc;
        for i in 0..alloc.n() {
            let old = alloc.label(i);
            alloc.detach(i);
            let row = alloc.row(i);
            for (label, w) in weights.iter_mut().enumerate() {
                *w = post.log_join_weight(label, alloc.n_k(label), alloc.s_k(label), row);
            }
            let new = sample_tempered(&mut c.rng, &weights, c.heat);
            alloc.insert(i, new);
            c.payload.log_post += weights[new] - weights[old];
        }
        c.scratch.weights = weights;
    }
}
