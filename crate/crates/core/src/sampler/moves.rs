//! Metropolis-Hastings moves on `z | K` that update two components at once.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{distinct_pair, AllocationSampler, ChainState};
use crate::model::AllocationState;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn add_row(acc: &mut [u32], row: &[u8]) {
    for (a, &v) in acc.iter_mut().zip(row) {
        *a += v as u32;
    }
}

fn sub_row(acc: &mut [u32], row: &[u8]) {
    for (a, &v) in acc.iter_mut().zip(row) {
        *a -= v as u32;
    }
}

fn reset(buf: &mut Vec<u32>, d: usize) {
    buf.clear();
    buf.resize(d, 0);
}

impl AllocationSampler {
    fn pair_term(&self, alloc: &AllocationState, pair: (usize, usize)) -> f64 {
        let post = &self.posterior;
        post.cluster_term(pair.0, alloc.n_k(pair.0), alloc.s_k(pair.0))
            + post.cluster_term(pair.1, alloc.n_k(pair.1), alloc.s_k(pair.1))
    }

    /// Move 1: the members of two components are each reassigned to one of
    /// the two with probability 1/2. The proposal is symmetric.
    pub fn move_m1(&self, c: &mut ChainState) -> Option<bool> {
        let alloc = &c.payload.alloc;
        let k = alloc.k();
        if k < 2 {
            return None;
        }
        let d = alloc.d();
        let pair = distinct_pair(&mut c.rng, k);
        let sc = &mut c.scratch;
        sc.members.clear();
        sc.members
            .extend((0..alloc.n()).filter(|&i| alloc.label(i) == pair.0 || alloc.label(i) == pair.1));
        sc.labels.clear();
        reset(&mut sc.s_a, d);
        reset(&mut sc.s_b, d);
        let (mut n_a, mut n_b) = (0, 0);
        for &i in &sc.members {
            if c.rng.random::<bool>() {
                sc.labels.push(pair.0);
                add_row(&mut sc.s_a, alloc.row(i));
                n_a += 1;
            } else {
                sc.labels.push(pair.1);
                add_row(&mut sc.s_b, alloc.row(i));
                n_b += 1;
            }
        }
        let post = &self.posterior;
        let delta = post.cluster_term(pair.0, n_a, &sc.s_a) + post.cluster_term(pair.1, n_b, &sc.s_b)
            - self.pair_term(alloc, pair);
        let accepted = Self::accept(&mut c.rng, c.heat * delta);
        if accepted {
            c.payload
                .alloc
                .commit_pair(pair, &sc.members, &sc.labels, [(n_a, &sc.s_a), (n_b, &sc.s_b)]);
            c.payload.log_post += delta;
        }
        Some(accepted)
    }

    /// Log of the ratio reverse/forward proposal mass of Move 2 when `moved`
    /// of `n_from` members leave for a component currently holding `n_to`,
    /// with inclusion probability `u`.
    pub fn m2_log_proposal_ratio(n_from: usize, n_to: usize, moved: usize, u: f64) -> f64 {
        // forward: u^m (1-u)^(n_from - m); reverse: u^m (1-u)^n_to
        (n_to as f64 - (n_from - moved) as f64) * (1.0 - u).ln()
    }

    /// Move 2: a random subset of the first component (inclusion
    /// probability `u ~ U(0, 1)`, shared by the reverse move) moves to the
    /// second.
    pub fn move_m2(&self, c: &mut ChainState) -> Option<bool> {
        let alloc = &c.payload.alloc;
        let k = alloc.k();
        if k < 2 {
            return None;
        }
        let d = alloc.d();
        let (from, to) = distinct_pair(&mut c.rng, k);
        let u: f64 = c.rng.random();
        let sc = &mut c.scratch;
        sc.members.clear();
        for i in 0..alloc.n() {
            if alloc.label(i) == from && c.rng.random::<f64>() < u {
                sc.members.push(i);
            }
        }
        let moved = sc.members.len();
        if moved == 0 {
            return Some(true);
        }
        let (n_from, n_to) = (alloc.n_k(from), alloc.n_k(to));
        sc.s_a.clear();
        sc.s_a.extend_from_slice(alloc.s_k(from));
        sc.s_b.clear();
        sc.s_b.extend_from_slice(alloc.s_k(to));
        for &i in &sc.members {
            sub_row(&mut sc.s_a, alloc.row(i));
            add_row(&mut sc.s_b, alloc.row(i));
        }
        debug_assert_eq!(sc.s_a.len(), d);
        let post = &self.posterior;
        let delta = post.cluster_term(from, n_from - moved, &sc.s_a)
            + post.cluster_term(to, n_to + moved, &sc.s_b)
            - self.pair_term(alloc, (from, to));
        let log_ratio = c.heat * delta + Self::m2_log_proposal_ratio(n_from, n_to, moved, u);
        let accepted = Self::accept(&mut c.rng, log_ratio);
        if accepted {
            sc.labels.clear();
            sc.labels.resize(moved, to);
            c.payload.alloc.commit_pair(
                (from, to),
                &sc.members,
                &sc.labels,
                [(n_from - moved, &sc.s_a), (n_to + moved, &sc.s_b)],
            );
            c.payload.log_post += delta;
        }
        Some(accepted)
    }

    /// Log probability that Move 3, visiting `order` (members of the two
    /// components of `pair`), assigns them `labels` in turn. Each step uses
    /// the two-component full conditional given the members already placed,
    /// tempered by `heat`.
    pub fn m3_path_log_prob(
        &self,
        alloc: &AllocationState,
        pair: (usize, usize),
        order: &[usize],
        labels: &[usize],
        heat: f64,
    ) -> f64 {
        let d = alloc.d();
        let mut s = [vec![0u32; d], vec![0u32; d]];
        let mut n = [0usize; 2];
        let mut total = 0.0;
        for (&i, &l) in order.iter().zip(labels) {
            let row = alloc.row(i);
            let wa = self.posterior.log_join_weight(pair.0, n[0], &s[0], row);
            let wb = self.posterior.log_join_weight(pair.1, n[1], &s[1], row);
            let diff = heat * (wb - wa);
            let side = usize::from(l == pair.1);
            total -= if side == 0 {
                softplus(diff)
            } else {
                softplus(-diff)
            };
            n[side] += 1;
            add_row(&mut s[side], row);
        }
        total
    }

    /// Move 3: the pooled members of two components are revisited in random
    /// order and reallocated sequentially from the two-component full
    /// conditional given those already reallocated.
    pub fn move_m3(&self, c: &mut ChainState) -> Option<bool> {
        let alloc = &c.payload.alloc;
        let k = alloc.k();
        if k < 2 {
            return None;
        }
        let d = alloc.d();
        let pair = distinct_pair(&mut c.rng, k);
        let sc = &mut c.scratch;
        sc.order.clear();
        sc.order
            .extend((0..alloc.n()).filter(|&i| alloc.label(i) == pair.0 || alloc.label(i) == pair.1));
        if sc.order.is_empty() {
            return Some(true);
        }
        sc.order.shuffle(&mut c.rng);

        let post = &self.posterior;
        reset(&mut sc.s_a, d);
        reset(&mut sc.s_b, d);
        reset(&mut sc.s_c, d);
        reset(&mut sc.s_d, d);
        sc.labels.clear();
        let (mut n_a, mut n_b) = (0, 0);
        let (mut n_c, mut n_d) = (0, 0);
        let mut log_fwd = 0.0;
        let mut log_rev = 0.0;
        for &i in &sc.order {
            let row = alloc.row(i);

            let wa = post.log_join_weight(pair.0, n_a, &sc.s_a, row);
            let wb = post.log_join_weight(pair.1, n_b, &sc.s_b, row);
            let diff = c.heat * (wb - wa);
            // P(first) = 1 / (1 + e^diff)
            if c.rng.random::<f64>() * (1.0 + diff.exp()) < 1.0 {
                log_fwd -= softplus(diff);
                sc.labels.push(pair.0);
                add_row(&mut sc.s_a, row);
                n_a += 1;
            } else {
                log_fwd -= softplus(-diff);
                sc.labels.push(pair.1);
                add_row(&mut sc.s_b, row);
                n_b += 1;
            }

            // replay of the current allocation under the same order
            let wc = post.log_join_weight(pair.0, n_c, &sc.s_c, row);
            let wd = post.log_join_weight(pair.1, n_d, &sc.s_d, row);
            let diff = c.heat * (wd - wc);
            if alloc.label(i) == pair.0 {
                log_rev -= softplus(diff);
                add_row(&mut sc.s_c, row);
                n_c += 1;
            } else {
                log_rev -= softplus(-diff);
                add_row(&mut sc.s_d, row);
                n_d += 1;
            }
        }
        let delta = post.cluster_term(pair.0, n_a, &sc.s_a) + post.cluster_term(pair.1, n_b, &sc.s_b)
            - self.pair_term(alloc, pair);
        let accepted = Self::accept(&mut c.rng, c.heat * delta + log_rev - log_fwd);
        if accepted {
            c.payload
                .alloc
                .commit_pair(pair, &sc.order, &sc.labels, [(n_a, &sc.s_a), (n_b, &sc.s_b)]);
            c.payload.log_post += delta;
        }
        Some(accepted)
    }
}
