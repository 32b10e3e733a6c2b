//! Label-switching post-processing of the cold-chain sample.
//!
//! Draws are conditioned on the modal number of components and their labels
//! are permuted so that component `k` means the same thing in every draw.
//! A permutation `perm` maps draw labels to reference labels: label `l` of a
//! draw becomes `perm[l]`.

pub mod hungarian;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::mc3::PosteriorDraw;
use crate::model::{BinaryDataset, ThetaP};

/// Default iteration cap for the iterative methods.
pub const DEFAULT_MAX_ITER: usize = 100;

/// Floor applied to probabilities before taking logs.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "STEPHENS")]
    Stephens,
    #[serde(rename = "ECR")]
    Ecr,
    #[serde(rename = "ECR.ITERATIVE.1")]
    EcrIterative1,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Stephens, Method::Ecr, Method::EcrIterative1];

    pub fn name(self) -> &'static str {
        match self {
            Method::Stephens => "STEPHENS",
            Method::Ecr => "ECR",
            Method::EcrIterative1 => "ECR.ITERATIVE.1",
        }
    }
}

/// Empirical distribution of `K` and its mode (ties go to the smaller `K`).
/// Returns `None` for an empty trace.
pub fn modal_k(ks: &[usize]) -> Option<(usize, BTreeMap<usize, f64>)> {
    if ks.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in ks {
        *counts.entry(k).or_default() += 1;
    }
    let mut best = (0, 0);
    for (&k, &c) in &counts {
        if c > best.1 {
            best = (k, c);
        }
    }
    let total = ks.len() as f64;
    Some((
        best.0,
        counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect(),
    ))
}

/// Permutation of draw labels maximising agreement with `pivot`.
fn match_to_pivot(z: &[usize], pivot: &[usize], k: usize) -> Vec<usize> {
    let mut cost = vec![vec![0.0; k]; k];
    for (&a, &b) in z.iter().zip(pivot) {
        cost[a][b] -= 1.0;
    }
    hungarian::solve(&cost)
}

/// ECR against a fixed pivot allocation.
pub fn ecr_with_pivot(allocs: &[&[usize]], pivot: &[usize], k: usize) -> Vec<Vec<usize>> {
    allocs.iter().map(|z| match_to_pivot(z, pivot, k)).collect()
}

/// Index of the draw with the highest log posterior (first on ties).
pub fn map_index(log_posts: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (t, &l) in log_posts.iter().enumerate() {
        if best.is_none_or(|b| l > log_posts[b]) {
            best = Some(t);
        }
    }
    best
}

/// ECR with the MAP draw as pivot.
pub fn ecr_pivot(allocs: &[&[usize]], log_posts: &[f64], k: usize) -> Vec<Vec<usize>> {
    match map_index(log_posts) {
        Some(t) => ecr_with_pivot(allocs, allocs[t], k),
        None => Vec::new(),
    }
}

/// Result of an iterative relabeling method.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeFit {
    pub perms: Vec<Vec<usize>>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration (empty for ECR-iterative-1).
    pub objective: Vec<f64>,
}

fn identity_perms(t: usize, k: usize) -> Vec<Vec<usize>> {
    vec![(0..k).collect(); t]
}

/// ECR-iterative-1: alternate a majority-vote pivot under the current
/// permutations with ECR against that pivot, starting from identities.
pub fn ecr_iterative1(allocs: &[&[usize]], k: usize, max_iter: usize) -> IterativeFit {
    let n = allocs.first().map_or(0, |z| z.len());
    let mut perms = identity_perms(allocs.len(), k);
    let mut counts = vec![0usize; k];
    for iter in 1..=max_iter {
        let pivot: Vec<usize> = (0..n)
            .map(|i| {
                counts.iter_mut().for_each(|c| *c = 0);
                for (z, p) in allocs.iter().zip(&perms) {
                    counts[p[z[i]]] += 1;
                }
                argmax_first(counts.iter().map(|&c| c as f64))
            })
            .collect();
        let next = ecr_with_pivot(allocs, &pivot, k);
        let done = next == perms;
        perms = next;
        if done {
            return IterativeFit {
                perms,
                iterations: iter,
                converged: true,
                objective: Vec::new(),
            };
        }
    }
    IterativeFit {
        perms,
        iterations: max_iter,
        converged: false,
        objective: Vec::new(),
    }
}

fn argmax_first(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Component responsibilities `P[i][l]` (row-major `n x k`) of a draw,
/// using the observed entries of `data` only.
pub fn responsibilities(params: &ThetaP, data: &BinaryDataset) -> Vec<f64> {
    let (n, d, k) = (data.n(), data.d(), params.k());
    let log_p: Vec<f64> = params.p.iter().map(|&p| p.max(PROB_FLOOR).ln()).collect();
    let log_t: Vec<f64> = params.theta.iter().map(|&t| t.ln()).collect();
    let log_1t: Vec<f64> = params.theta.iter().map(|&t| (-t).ln_1p()).collect();
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut out[i * k..(i + 1) * k];
        for (l, w) in row.iter_mut().enumerate() {
            let mut acc = log_p[l];
            for j in 0..d {
                match data.value(i, j) {
                    Some(1) => acc += log_t[l * d + j],
                    Some(_) => acc += log_1t[l * d + j],
                    None => {}
                }
            }
            *w = acc;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|w| (w - max).exp()).sum();
        row.iter_mut().for_each(|w| *w = (*w - max).exp() / total);
    }
    out
}

/// Mean of the permuted matrices: `mean[i][perm[l]] += P[i][l] / T`.
fn permuted_mean(probs: &[Vec<f64>], perms: &[Vec<usize>], n: usize, k: usize) -> Vec<f64> {
    let mut mean = vec![0.0; n * k];
    let scale = 1.0 / probs.len() as f64;
    for (p, perm) in probs.iter().zip(perms) {
        for i in 0..n {
            for l in 0..k {
                mean[i * k + perm[l]] += scale * p[i * k + l];
            }
        }
    }
    mean
}

/// `cost[l][c] = sum_i P[i][l] ln(P[i][l] / mean[i][c])`.
fn kl_costs(p: &[f64], log_mean: &[f64], n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut cost = vec![vec![0.0; k]; k];
    for i in 0..n {
        for l in 0..k {
            let pil = p[i * k + l];
            if pil <= 0.0 {
                continue;
            }
            let self_term = pil * pil.max(PROB_FLOOR).ln();
            for (c, slot) in cost[l].iter_mut().enumerate() {
                *slot += self_term - pil * log_mean[i * k + c];
            }
        }
    }
    cost
}

/// Stephens' KL relabeling on per-draw classification matrices
/// (row-major `n x k`).
pub fn stephens_kl(probs: &[Vec<f64>], n: usize, k: usize, max_iter: usize) -> IterativeFit {
    let mut perms = identity_perms(probs.len(), k);
    let mut objective: Vec<f64> = Vec::new();
    for iter in 1..=max_iter {
        let log_mean: Vec<f64> = permuted_mean(probs, &perms, n, k)
            .into_iter()
            .map(|m| m.max(PROB_FLOOR).ln())
            .collect();
        let mut total = 0.0;
        let next: Vec<Vec<usize>> = probs
            .iter()
            .map(|p| {
                let cost = kl_costs(p, &log_mean, n, k);
                let perm = hungarian::solve(&cost);
                total += hungarian::cost_of(&cost, &perm);
                perm
            })
            .collect();
        if let Some(&prev) = objective.last() {
            debug_assert!(
                total <= prev + 1e-9 * prev.abs().max(1.0),
                "KL objective increased from {prev} to {total}"
            );
        }
        objective.push(total);
        let done = next == perms;
        perms = next;
        if done {
            return IterativeFit {
                perms,
                iterations: iter,
                converged: true,
                objective,
            };
        }
    }
    IterativeFit {
        perms,
        iterations: max_iter,
        converged: false,
        objective,
    }
}

/// `p` and `theta` with component `l` moved to `perm[l]`.
pub fn permute_params(params: &ThetaP, perm: &[usize]) -> ThetaP {
    let (k, d) = (params.k(), params.d);
    let mut p = vec![0.0; k];
    let mut theta = vec![0.0; k * d];
    for l in 0..k {
        p[perm[l]] = params.p[l];
        theta[perm[l] * d..(perm[l] + 1) * d].copy_from_slice(params.theta_row(l));
    }
    ThetaP { p, theta, d }
}

/// Row-major `n x k` frequencies of each relabelled allocation.
pub fn allocation_frequencies(allocs: &[&[usize]], perms: &[Vec<usize>], n: usize, k: usize) -> Vec<f64> {
    let mut freq = vec![0.0; n * k];
    let scale = 1.0 / allocs.len() as f64;
    for (z, perm) in allocs.iter().zip(perms) {
        for (i, &l) in z.iter().enumerate() {
            freq[i * k + perm[l]] += scale;
        }
    }
    freq
}

/// Row argmax of a row-major `n x k` matrix (first on ties).
pub fn row_argmax(m: &[f64], k: usize) -> Vec<usize> {
    m.chunks(k).map(|row| argmax_first(row.iter().copied())).collect()
}

/// Per-method output of relabeling.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub perms: Vec<Vec<usize>>,
    pub params: Vec<ThetaP>,
    /// Relabelled allocation frequencies, row-major `n x Kmap`.
    pub class_probs: Vec<f64>,
    pub membership: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl MethodResult {
    /// Applies one permutation `global` (old label -> new label) to every
    /// draw of this method.
    pub fn relabel_globally(&mut self, global: &[usize]) {
        let k = global.len();
        for perm in &mut self.perms {
            perm.iter_mut().for_each(|l| *l = global[*l]);
        }
        for params in &mut self.params {
            *params = permute_params(params, global);
        }
        let old = std::mem::take(&mut self.class_probs);
        self.class_probs = vec![0.0; old.len()];
        for (i, row) in old.chunks(k).enumerate() {
            for (l, &v) in row.iter().enumerate() {
                self.class_probs[i * k + global[l]] = v;
            }
        }
        self.membership = row_argmax(&self.class_probs, k);
    }

    /// Observations assigned to each label.
    pub fn occupancy(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &l in &self.membership {
            counts[l] += 1;
        }
        counts
    }
}

/// Relabelled draws at the modal number of components.
#[derive(Debug, Clone)]
pub struct RelabeledSample {
    pub kmap: usize,
    pub k_pmf: BTreeMap<usize, f64>,
    /// Indices into the full draw list of the draws with `K = kmap`.
    pub draw_indices: Vec<usize>,
    pub n: usize,
    /// In [`Method::ALL`] order.
    pub methods: Vec<MethodResult>,
    /// Mean Stephens-relabelled responsibilities, row-major `n x Kmap`.
    pub stephens_probs: Vec<f64>,
}

impl RelabeledSample {
    pub fn method(&self, m: Method) -> &MethodResult {
        self.methods
            .iter()
            .find(|r| r.method == m)
            .expect("all methods are present")
    }
}

/// Conditions `draws` on the modal `K` and applies the three relabeling
/// methods. With `Kmap = 1` every permutation is the identity. Returns
/// `None` for an empty sample.
pub fn relabel(draws: &[PosteriorDraw], data: &BinaryDataset, max_iter: usize) -> Option<RelabeledSample> {
    let ks: Vec<usize> = draws.iter().map(|d| d.k).collect();
    let (kmap, k_pmf) = modal_k(&ks)?;
    let draw_indices: Vec<usize> = (0..draws.len()).filter(|&t| draws[t].k == kmap).collect();
    let kept: Vec<&PosteriorDraw> = draw_indices.iter().map(|&t| &draws[t]).collect();
    let allocs: Vec<&[usize]> = kept.iter().map(|d| d.z.as_slice()).collect();
    let n = data.n();
    let probs: Vec<Vec<f64>> = kept.iter().map(|d| responsibilities(&d.params, data)).collect();

    let fits: Vec<(Method, IterativeFit)> = if kmap == 1 {
        Method::ALL
            .iter()
            .map(|&m| {
                let fit = IterativeFit {
                    perms: identity_perms(kept.len(), 1),
                    iterations: 0,
                    converged: true,
                    objective: Vec::new(),
                };
                (m, fit)
            })
            .collect()
    } else {
        let log_posts: Vec<f64> = kept.iter().map(|d| d.log_post).collect();
        vec![
            (Method::Stephens, stephens_kl(&probs, n, kmap, max_iter)),
            (
                Method::Ecr,
                IterativeFit {
                    perms: ecr_pivot(&allocs, &log_posts, kmap),
                    iterations: 1,
                    converged: true,
                    objective: Vec::new(),
                },
            ),
            (Method::EcrIterative1, ecr_iterative1(&allocs, kmap, max_iter)),
        ]
    };

    let mut stephens_probs = Vec::new();
    let methods = fits
        .into_iter()
        .map(|(method, fit)| {
            if method == Method::Stephens {
                stephens_probs = permuted_mean(&probs, &fit.perms, n, kmap);
            }
            let params = kept
                .iter()
                .zip(&fit.perms)
                .map(|(d, perm)| permute_params(&d.params, perm))
                .collect();
            let class_probs = allocation_frequencies(&allocs, &fit.perms, n, kmap);
            let membership = row_argmax(&class_probs, kmap);
            MethodResult {
                method,
                perms: fit.perms,
                params,
                class_probs,
                membership,
                iterations: fit.iterations,
                converged: fit.converged,
            }
        })
        .collect();
    Some(RelabeledSample {
        kmap,
        k_pmf,
        draw_indices,
        n,
        methods,
        stephens_probs,
    })
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for one value).
    pub sd: f64,
    /// Quantiles at [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Mean, standard deviation and quantiles (linear interpolation between
/// order statistics) of a nonempty sample.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_LEVELS.map(|q| {
        let h = (n - 1.0) * q;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    });
    Some(Summary { mean, sd, quantiles })
}

/// Global relabeling of `membership` (labels `0..k`) that best matches
/// `truth`. Labels matched to a truth class get that class's index among
/// the sorted distinct truth labels; unmatched labels get the following
/// indices in increasing order. Returns the map old label -> new label.
pub fn align_to_truth<T: Ord + Copy>(membership: &[usize], truth: &[T], k: usize) -> Vec<usize> {
    let classes: Vec<T> = {
        let mut c = truth.to_vec();
        c.sort();
        c.dedup();
        c
    };
    let size = k.max(classes.len());
    let mut cost = vec![vec![0.0; size]; size];
    for (&m, t) in membership.iter().zip(truth) {
        let c = classes.binary_search(t).expect("class is present");
        cost[m][c] -= 1.0;
    }
    let assign = hungarian::solve(&cost);
    let mut next = classes.len();
    let mut map = vec![0; k];
    for (label, slot) in map.iter_mut().enumerate() {
        if assign[label] < classes.len() {
            *slot = assign[label];
        } else {
            *slot = next;
            next += 1;
        }
    }
    map
}

/// Turns an injective label map into a permutation of `0..map.len()` that
/// keeps the relative order of the targets.
pub fn compress_labels(map: &[usize]) -> Vec<usize> {
    map.iter()
        .map(|&m| map.iter().filter(|&&o| o < m).count())
        .collect()
}
