//! Absorption/ejection moves that change the number of components by one.
//!
//! Ejection picks a component `j`, moves a Beta-binomial subset of its
//! members to a new component (label `K`), then exchanges the new label with
//! a uniformly chosen label `b` in `0..=K`. Absorption picks an ordered pair
//! (absorbing, absorbed), merges them and moves the last label into the gap.
//! The two are exact reverses of each other on labelled allocations.
//!
//! Several proposal paths can connect the same pair of labelled states (most
//! visibly when an empty component is ejected or absorbed), so acceptance
//! ratios use the total proposal mass summed over all paths; see
//! [`ejection_path_terms`].

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{distinct_pair, AllocationSampler, ChainState};
use crate::model::log_sum_exp;

const ALPHA_MIN: f64 = 1e-3;
const ALPHA_MAX: f64 = 1e6;

/// Probability of attempting an ejection at `k` components.
pub fn ejection_probability(k: usize, kmax: usize) -> f64 {
    if k >= kmax {
        0.0
    } else if k <= 1 {
        1.0
    } else {
        0.5
    }
}

/// `ln [B(a + m, a + r) / B(a, a)]` as a finite product, which stays
/// accurate for very large `a`.
fn log_beta_ratio(a: f64, m: usize, r: usize) -> f64 {
    let rising = |x: f64, len: usize| (0..len).map(|t| (x + t as f64).ln()).sum::<f64>();
    rising(a, m) + rising(a, r) - rising(2.0 * a, m + r)
}

/// Log probability that a `Beta(a, a)`-mixed binomial split of `n` members
/// ejects none of them.
fn log_empty_split(a: f64, n: usize) -> f64 {
    log_beta_ratio(a, 0, n)
}

/// Finds `a` with `B(a, a + n) / B(a, a) = target`.
///
/// The ratio decreases from `1/2` (as `a -> 0`) to `2^-n` (as `a -> inf`),
/// so targets outside that range have no root; the nearest end of the
/// search bracket `[1e-3, 1e6]` is returned instead. For `n <= 1` the ratio
/// does not depend on `a`; 1 is returned for `n = 0`.
pub fn solve_ejection_alpha(n: usize, target: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let log_target = target.ln();
    let residual = |ln_a: f64| log_empty_split(ln_a.exp(), n) - log_target;
    let (mut lo, mut hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    let (f_lo, f_hi) = (residual(lo), residual(hi));
    if f_lo <= 0.0 {
        return ALPHA_MIN;
    }
    if f_hi >= 0.0 {
        return ALPHA_MAX;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid);
        if f == 0.0 || hi - lo < 1e-14 {
            return mid.exp();
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// `alpha~` for every possible size of the ejecting component.
#[derive(Debug, Clone)]
pub struct EjectionTable {
    alpha: Vec<f64>,
}

impl EjectionTable {
    pub fn new(n: usize, target: f64) -> Self {
        Self {
            alpha: (0..=n).map(|m| solve_ejection_alpha(m, target)).collect(),
        }
    }

    pub fn alpha(&self, size: usize) -> f64 {
        self.alpha[size]
    }

    /// Log probability that ejection from a component of `size` members
    /// selects one particular subset of `moved` members (`p_e` integrated
    /// out).
    pub fn log_subset_mass(&self, size: usize, moved: usize) -> f64 {
        if size == 0 {
            return 0.0;
        }
        log_beta_ratio(self.alpha[size], moved, size - moved)
    }
}

/// Labels after ejecting `moved` from `j` into new label `k` and exchanging
/// labels `b` and `k`.
pub fn eject_labels(z: &[usize], k: usize, moved: &[usize], b: usize) -> Vec<usize> {
    let mut out = z.to_vec();
    for &i in moved {
        out[i] = k;
    }
    if b != k {
        for l in out.iter_mut() {
            if *l == b {
                *l = k;
            } else if *l == k {
                *l = b;
            }
        }
    }
    out
}

/// Labels after absorbing `absorbed` into `absorbing` in a state with
/// `k_plus` components; the last label is moved into the gap.
pub fn absorb_labels(z: &[usize], k_plus: usize, absorbing: usize, absorbed: usize) -> Vec<usize> {
    let last = k_plus - 1;
    z.iter()
        .map(|&l| {
            let l = if l == absorbed { absorbing } else { l };
            if l == last && absorbed != last {
                absorbed
            } else {
                l
            }
        })
        .collect()
}

/// Path sums for a pair of states `z` (`k` components) and `z_new`
/// (`k + 1` components) connected by ejection/absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTerms {
    /// `ln sum` over ejection paths `z -> z_new` of the subset mass. The
    /// common factor `1 / (k (k + 1))` of component and label choice is
    /// left out.
    pub ln_forward: f64,
    /// `ln` of the number of ordered absorption pairs mapping `z_new` to `z`.
    pub ln_reverse: f64,
}

/// Computes [`PathTerms`] for `z -> z_new`, or `None` if no ejection
/// connects them.
///
/// Let `D` be the labels below `k` whose member sets differ between the two
/// states. Valid transitions have `|D| <= 2`:
/// * `D = {}`: an empty component was ejected. Paths: ejection from any `a`
///   with the new label left last or swapped with `a` (2 each), or with the
///   new label swapped into an empty component `b` (one per `a != b`).
/// * `D = {d}`: a non-empty split of `d` (2 paths), plus, if `d` is empty
///   in `z_new`, an empty ejection from any `a != d` swapped into `d`.
/// * `D = {a, b}`: split of `a` with the new cluster placed at `b` and the
///   old `b` moved to the last label.
pub fn ejection_path_terms(
    z: &[usize],
    k: usize,
    z_new: &[usize],
    table: &EjectionTable,
) -> Option<PathTerms> {
    let mut n_old = vec![0usize; k];
    let mut n_new = vec![0usize; k + 1];
    let mut cross = vec![0usize; k];
    let mut diff: Vec<usize> = Vec::with_capacity(2);
    for (&l, &m) in z.iter().zip(z_new) {
        if l >= k || m > k {
            return None;
        }
        n_old[l] += 1;
        n_new[m] += 1;
        if m == k {
            cross[l] += 1;
        }
        if l != m {
            for c in [l, m] {
                if c < k && !diff.contains(&c) {
                    if diff.len() == 2 {
                        return None;
                    }
                    diff.push(c);
                }
            }
        }
    }
    let empty_split = |a: usize| table.log_subset_mass(n_old[a], 0);
    let ln2 = std::f64::consts::LN_2;
    let mut forward: Vec<f64> = Vec::new();
    let reverse = match diff[..] {
        [] => {
            if n_new[k] != 0 {
                return None;
            }
            forward.extend((0..k).map(|a| ln2 + empty_split(a)));
            let empties: Vec<usize> = (0..k).filter(|&b| n_old[b] == 0).collect();
            for &b in &empties {
                forward.extend((0..k).filter(|&a| a != b).map(empty_split));
            }
            2 * k + (k - 1) * empties.len()
        }
        [d] => {
            forward.push(ln2 + table.log_subset_mass(n_old[d], n_new[k]));
            let mut count = 2;
            if n_new[d] == 0 {
                forward.extend((0..k).filter(|&a| a != d).map(empty_split));
                count += k - 1;
            }
            count
        }
        [d1, d2] => {
            let mut count = 0;
            for (a, b) in [(d1, d2), (d2, d1)] {
                if cross[b] == n_old[b] && n_new[k] == n_old[b] {
                    forward.push(table.log_subset_mass(n_old[a], n_new[b]));
                    count += 1;
                }
            }
            if count == 0 {
                return None;
            }
            count
        }
        _ => unreachable!(),
    };
    Some(PathTerms {
        ln_forward: log_sum_exp(forward.iter().copied()),
        ln_reverse: (reverse as f64).ln(),
    })
}

impl AllocationSampler {
    /// Log acceptance ratio of an ejection from a state with `k`
    /// components, before tempering the target part: returns
    /// `(log proposal ratio, ...)` folded with `heat * delta`.
    fn ejection_log_ratio(&self, k: usize, heat: f64, delta: f64, terms: PathTerms) -> f64 {
        let kmax = self.hyper().kmax;
        heat * delta + (1.0 - ejection_probability(k + 1, kmax)).ln() - ejection_probability(k, kmax).ln()
            + terms.ln_reverse
            - terms.ln_forward
    }

    /// Ejection: `K -> K + 1`. Returns `None` at `K = Kmax`.
    pub fn eject(&self, c: &mut ChainState) -> Option<bool> {
        let alloc = &c.payload.alloc;
        let k = alloc.k();
        if k >= self.hyper().kmax {
            return None;
        }
        let d = alloc.d();
        let j = c.rng.random_range(0..k);
        let n_j = alloc.n_k(j);
        let a = self.ejection.alpha(n_j);
        let p_e = if n_j == 0 {
            0.0
        } else {
            Beta::new(a, a)
                .expect("alpha~ is positive and finite")
                .sample(&mut c.rng)
        };
        let sc = &mut c.scratch;
        sc.members.clear();
        for i in 0..alloc.n() {
            if alloc.label(i) == j && c.rng.random::<f64>() < p_e {
                sc.members.push(i);
            }
        }
        let b = c.rng.random_range(0..=k);

        // statistics of the ejected set and of what stays behind
        sc.s_a.clear();
        sc.s_a.resize(d, 0);
        for &i in &sc.members {
            for (acc, &v) in sc.s_a.iter_mut().zip(alloc.row(i)) {
                *acc += v as u32;
            }
        }
        sc.s_b.clear();
        sc.s_b
            .extend(alloc.s_k(j).iter().zip(&sc.s_a).map(|(&s, &e)| s - e));
        let n_e = sc.members.len();
        let n_rem = n_j - n_e;

        let post = &self.posterior;
        let mut delta = post.k_constant(k + 1) - post.k_constant(k) - post.cluster_term(j, n_j, alloc.s_k(j));
        if b == k {
            delta += post.cluster_term(j, n_rem, &sc.s_b) + post.cluster_term(k, n_e, &sc.s_a);
        } else if b == j {
            delta += post.cluster_term(j, n_e, &sc.s_a) + post.cluster_term(k, n_rem, &sc.s_b);
        } else {
            delta += post.cluster_term(j, n_rem, &sc.s_b)
                + post.cluster_term(b, n_e, &sc.s_a)
                + post.cluster_term(k, alloc.n_k(b), alloc.s_k(b))
                - post.cluster_term(b, alloc.n_k(b), alloc.s_k(b));
        }

        sc.z_alt = eject_labels(alloc.z(), k, &sc.members, b);
        let Some(terms) = ejection_path_terms(alloc.z(), k, &sc.z_alt, &self.ejection) else {
            debug_assert!(false, "ejection proposal has no path back");
            return Some(false);
        };
        let log_ratio = self.ejection_log_ratio(k, c.heat, delta, terms);
        let accepted = Self::accept(&mut c.rng, log_ratio);
        if accepted {
            let alloc = &mut c.payload.alloc;
            alloc.push_cluster(&c.scratch.members);
            alloc.swap_labels(b, k);
            c.payload.log_post += delta;
        }
        Some(accepted)
    }

    /// Absorption: `K -> K - 1`. Returns `None` at `K = 1`.
    pub fn absorb(&self, c: &mut ChainState) -> Option<bool> {
        let alloc = &c.payload.alloc;
        let k_plus = alloc.k();
        if k_plus < 2 {
            return None;
        }
        let k = k_plus - 1;
        let last = k;
        let (a, b) = distinct_pair(&mut c.rng, k_plus);
        let post = &self.posterior;
        let sc = &mut c.scratch;

        sc.s_a.clear();
        sc.s_a
            .extend(alloc.s_k(a).iter().zip(alloc.s_k(b)).map(|(&x, &y)| x + y));
        let merged = alloc.n_k(a) + alloc.n_k(b);
        let mut delta = post.k_constant(k)
            - post.k_constant(k_plus)
            - post.cluster_term(a, alloc.n_k(a), alloc.s_k(a))
            - post.cluster_term(b, alloc.n_k(b), alloc.s_k(b));
        if b == last {
            delta += post.cluster_term(a, merged, &sc.s_a);
        } else if a == last {
            delta += post.cluster_term(b, merged, &sc.s_a);
        } else {
            delta += post.cluster_term(a, merged, &sc.s_a)
                + post.cluster_term(b, alloc.n_k(last), alloc.s_k(last))
                - post.cluster_term(last, alloc.n_k(last), alloc.s_k(last));
        }

        sc.z_alt = absorb_labels(alloc.z(), k_plus, a, b);
        let Some(terms) = ejection_path_terms(&sc.z_alt, k, alloc.z(), &self.ejection) else {
            debug_assert!(false, "absorption proposal has no ejection path back");
            return Some(false);
        };
        // reciprocal of the matching ejection ratio
        let log_ratio = -self.ejection_log_ratio(k, c.heat, -delta, terms);
        let accepted = Self::accept(&mut c.rng, log_ratio);
        if accepted {
            c.payload.alloc.merge(a, b);
            c.payload.log_post += delta;
        }
        Some(accepted)
    }
}
