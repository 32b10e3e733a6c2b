use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use super::{AllocationSampler, ChainState};
use crate::model::{ThetaP, THETA_EPS};

impl AllocationSampler {
    /// Draws `p | K, z ~ Dirichlet(gamma_k + n_k)` and
    /// `theta_kj | K, z, x ~ Beta(alpha + s_kj, beta + n_k - s_kj)`.
    ///
    /// Always drawn from the untempered conditionals.
    pub fn draw_params(&self, c: &mut ChainState) -> ThetaP {
        let alloc = &c.payload.alloc;
        let h = self.hyper();
        let (k, d) = (alloc.k(), alloc.d());
        let p = if k == 1 {
            vec![1.0]
        } else {
            let mut g: Vec<f64> = (0..k)
                .map(|l| {
                    Gamma::new(h.gamma[l] + alloc.n_k(l) as f64, 1.0)
                        .expect("positive shape")
                        .sample(&mut c.rng)
                })
                .collect();
            let total: f64 = g.iter().sum();
            if total > 0.0 {
                g.iter_mut().for_each(|v| *v /= total);
            } else {
                // every gamma draw underflowed: fall back to the posterior mean
                let denom: f64 = (0..k).map(|l| h.gamma[l] + alloc.n_k(l) as f64).sum();
                for (l, v) in g.iter_mut().enumerate() {
                    *v = (h.gamma[l] + alloc.n_k(l) as f64) / denom;
                }
            }
            g
        };
        let mut theta = Vec::with_capacity(k * d);
        for l in 0..k {
            let nk = alloc.n_k(l) as f64;
            for &s in alloc.s_k(l) {
                let s = s as f64;
                let t = Beta::new(h.alpha + s, h.beta + nk - s)
                    .expect("positive shapes")
                    .sample(&mut c.rng);
                theta.push(t.clamp(THETA_EPS, 1.0 - THETA_EPS));
            }
        }
        ThetaP { p, theta, d }
    }

    /// Redraws every missing entry from its cluster's Bernoulli given
    /// `params`, keeping the sufficient statistics in sync.
    pub fn impute_missing(&self, c: &mut ChainState, params: &ThetaP) {
        let alloc = &mut c.payload.alloc;
        let d = alloc.d();
        for &idx in &self.missing {
            let (i, j) = (idx / d, idx % d);
            let t = params.theta_at(alloc.label(i), j);
            let v = u8::from(c.rng.random::<f64>() < t);
            alloc.set_value(i, j, v);
        }
    }
}
