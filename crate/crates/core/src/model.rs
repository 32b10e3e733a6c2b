//! Data model and closed-form log densities of the Bernoulli mixture.
//!
//! Everything here is evaluated in the log domain. The collapsed posterior of
//! `(K, z)` integrates the mixture weights and the success probabilities out
//! analytically, so it only depends on the cluster sizes `n_k` and the
//! per-feature success counts `s_kj`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Lower/upper clamp applied to success probabilities before taking logs.
pub const THETA_EPS: f64 = 1e-12;

/// An `n x d` binary matrix with an observation mask.
///
/// Missing positions hold `0` in `values`; consumers must consult `observed`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    n: usize,
    d: usize,
    values: Vec<u8>,
    observed: Vec<bool>,
}

impl BinaryDataset {
    pub fn new(n: usize, d: usize, values: Vec<u8>, observed: Vec<bool>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != n * d || observed.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {n}x{d} matrix, got {} values and {} mask entries",
                n * d,
                values.len(),
                observed.len()
            )));
        }
        let mut values = values;
        for (idx, (v, &obs)) in values.iter_mut().zip(&observed).enumerate() {
            if obs && *v > 1 {
                return Err(Error::Parse {
                    line: idx / d + 1,
                    column: idx % d + 1,
                    message: format!("value {v} is not binary"),
                });
            }
            if !obs {
                *v = 0;
            }
        }
        for i in 0..n {
            if !observed[i * d..(i + 1) * d].iter().any(|&o| o) {
                return Err(Error::AllMissingRow(i + 1));
            }
        }
        Ok(Self {
            n,
            d,
            values,
            observed,
        })
    }

    /// Builds a dataset from rows where `None` marks a missing entry.
    pub fn from_rows(rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = rows[0].len();
        let mut values = Vec::with_capacity(n * d);
        let mut observed = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} entries, expected {d}",
                    i + 1,
                    row.len()
                )));
            }
            for v in row {
                values.push(v.unwrap_or(0));
                observed.push(v.is_some());
            }
        }
        Self::new(n, d, values, observed)
    }

    /// Fully observed dataset from a row-major 0/1 buffer.
    pub fn complete(n: usize, d: usize, values: Vec<u8>) -> Result<Self> {
        Self::new(n, d, values, vec![true; n * d])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn value(&self, i: usize, j: usize) -> Option<u8> {
        let idx = i * self.d + j;
        self.observed[idx].then_some(self.values[idx])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.d + j]
    }

    /// Row-major values; missing positions read as 0.
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn rows_with_missing(&self) -> usize {
        self.observed
            .chunks(self.d)
            .filter(|row| row.iter().any(|&o| !o))
            .count()
    }

    pub fn has_missing(&self) -> bool {
        self.observed.iter().any(|&o| !o)
    }

    /// Flat (row-major) indices of the missing entries.
    pub fn missing_positions(&self) -> Vec<usize> {
        self.observed
            .iter()
            .enumerate()
            .filter_map(|(idx, &o)| (!o).then_some(idx))
            .collect()
    }
}

/// Prior on the number of clusters, supported on `1..=kmax`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorK {
    /// Poisson with mean 1 truncated to `1..=kmax`.
    #[serde(rename = "poisson")]
    TruncatedPoisson,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kmax: usize,
    pub prior_k: PriorK,
    /// Dirichlet parameters; the first `K` entries are used at dimension `K`.
    pub gamma: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Target probability of ejecting an empty component.
    pub ejection_target: f64,
}

impl Hyperparams {
    /// Defaults: `gamma = 1`, `alpha = beta = 1`, ejection target 0.2.
    pub fn new(kmax: usize, prior_k: PriorK) -> Self {
        Self {
            kmax,
            prior_k,
            gamma: vec![1.0; kmax],
            alpha: 1.0,
            beta: 1.0,
            ejection_target: 0.2,
        }
    }

    pub fn with_theta_prior(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparams(msg));
        if self.kmax < 2 {
            return bad(format!("kmax must be at least 2, got {}", self.kmax));
        }
        if self.gamma.len() != self.kmax {
            return bad(format!(
                "gamma has {} entries, expected kmax = {}",
                self.gamma.len(),
                self.kmax
            ));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return bad(format!("gamma entries must be positive, got {g}"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.ejection_target > 0.0 && self.ejection_target < 1.0) {
            return bad(format!(
                "ejection target must lie in (0, 1), got {}",
                self.ejection_target
            ));
        }
        Ok(())
    }
}

/// Log prior mass of `k` clusters.
pub fn log_prior_k(k: usize, h: &Hyperparams) -> Result<f64> {
    if k == 0 || k > h.kmax {
        return Err(Error::KOutOfRange { k, kmax: h.kmax });
    }
    Ok(match h.prior_k {
        PriorK::Uniform => -(h.kmax as f64).ln(),
        PriorK::TruncatedPoisson => {
            // exp(-lambda) cancels in the truncation
            let log_norm = log_sum_exp((1..=h.kmax).map(|j| -ln_factorial(j)));
            -ln_factorial(k) - log_norm
        }
    })
}

/// Log of the normalising constant of the Dirichlet and Beta priors at `k`
/// clusters and `d` features.
pub fn log_ck(k: usize, d: usize, h: &Hyperparams) -> Result<f64> {
    if k == 0 || k > h.kmax || k > h.gamma.len() {
        return Err(Error::KOutOfRange { k, kmax: h.kmax });
    }
    let g = &h.gamma[..k];
    let dirichlet = ln_gamma(g.iter().sum()) - g.iter().map(|&x| ln_gamma(x)).sum::<f64>();
    let beta = ln_gamma(h.alpha + h.beta) - ln_gamma(h.alpha) - ln_gamma(h.beta);
    Ok(dirichlet + (k * d) as f64 * beta)
}

fn ln_factorial(k: usize) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Current `(K, z)` together with its sufficient statistics and the data
/// completed by the current imputations of the missing entries.
///
/// Labels are 0-based internally. Storage is sized for `kmax` clusters so
/// that changes of `K` never reallocate.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState {
    k: usize,
    d: usize,
    z: Vec<usize>,
    nk: Vec<usize>,
    skj: Vec<u32>,
    x: Vec<u8>,
}

impl AllocationState {
    /// Builds a state from completed data (`n x d`, row-major, every entry 0/1)
    /// and an allocation with labels in `0..k`.
    pub fn new(completed: Vec<u8>, d: usize, kmax: usize, k: usize, z: Vec<usize>) -> Result<Self> {
        if k == 0 || k > kmax {
            return Err(Error::KOutOfRange { k, kmax });
        }
        let n = z.len();
        if d == 0 || completed.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "completed data has {} entries, expected {n}x{d}",
                completed.len()
            )));
        }
        if let Some(bad) = completed.iter().find(|&&v| v > 1) {
            return Err(Error::InconsistentState(format!("non-binary value {bad}")));
        }
        if let Some(&bad) = z.iter().find(|&&l| l >= k) {
            return Err(Error::InconsistentState(format!("label {bad} outside 0..{k}")));
        }
        let mut state = Self {
            k,
            d,
            z,
            nk: vec![0; kmax],
            skj: vec![0; kmax * d],
            x: completed,
        };
        state.recompute();
        Ok(state)
    }

    /// Everything in one cluster, data completed with `completed`.
    pub fn single_cluster(completed: Vec<u8>, d: usize, kmax: usize) -> Result<Self> {
        let n = completed.len() / d.max(1);
        Self::new(completed, d, kmax, 1, vec![0; n])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kmax(&self) -> usize {
        self.nk.len()
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn label(&self, i: usize) -> usize {
        self.z[i]
    }

    pub fn n_k(&self, k: usize) -> usize {
        self.nk[k]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.nk[..self.k]
    }

    pub fn s_k(&self, k: usize) -> &[u32] {
        &self.skj[k * self.d..(k + 1) * self.d]
    }

    /// Data with missing entries replaced by their current imputations.
    pub fn completed(&self) -> &[u8] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Observation indices currently in cluster `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.z[i] == k).collect()
    }

    fn recompute(&mut self) {
        self.nk.iter_mut().for_each(|v| *v = 0);
        self.skj.iter_mut().for_each(|v| *v = 0);
        let d = self.d;
        for (i, &k) in self.z.iter().enumerate() {
            self.nk[k] += 1;
            let s = &mut self.skj[k * d..(k + 1) * d];
            for (acc, &v) in s.iter_mut().zip(&self.x[i * d..(i + 1) * d]) {
                *acc += v as u32;
            }
        }
    }

    /// Checks the cached statistics against a recomputation from scratch.
    pub fn audit(&self) -> Result<()> {
        let mut fresh = self.clone();
        fresh.recompute();
        if let Some(&bad) = self.z.iter().find(|&&l| l >= self.k) {
            return Err(Error::InconsistentState(format!(
                "label {bad} outside 0..{}",
                self.k
            )));
        }
        if fresh.nk != self.nk {
            return Err(Error::InconsistentState(format!(
                "cluster sizes {:?} != recomputed {:?}",
                self.sizes(),
                fresh.sizes()
            )));
        }
        if fresh.skj != self.skj {
            return Err(Error::InconsistentState(
                "success counts differ from recomputation".into(),
            ));
        }
        Ok(())
    }

    /// Removes observation `i` from the statistics of its current cluster.
    /// The label is left untouched and must be restored with [`Self::insert`].
    pub(crate) fn detach(&mut self, i: usize) {
        let k = self.z[i];
        let d = self.d;
        self.nk[k] -= 1;
        for (acc, &v) in self.skj[k * d..(k + 1) * d]
            .iter_mut()
            .zip(&self.x[i * d..(i + 1) * d])
        {
            *acc -= v as u32;
        }
    }

    pub(crate) fn insert(&mut self, i: usize, k: usize) {
        let d = self.d;
        self.z[i] = k;
        self.nk[k] += 1;
        for (acc, &v) in self.skj[k * d..(k + 1) * d]
            .iter_mut()
            .zip(&self.x[i * d..(i + 1) * d])
        {
            *acc += v as u32;
        }
    }

    /// Overwrites the labels of `members` and the statistics of two clusters.
    pub(crate) fn commit_pair(
        &mut self,
        pair: (usize, usize),
        members: &[usize],
        labels: &[usize],
        stats: [(usize, &[u32]); 2],
    ) {
        for (&i, &l) in members.iter().zip(labels) {
            self.z[i] = l;
        }
        let d = self.d;
        for (k, (nk, s)) in [pair.0, pair.1].into_iter().zip(stats) {
            self.nk[k] = nk;
            self.skj[k * d..(k + 1) * d].copy_from_slice(s);
        }
    }

    /// Opens label `k` (the new last label) with the given members moved
    /// from their current clusters.
    pub(crate) fn push_cluster(&mut self, moved: &[usize]) {
        let new = self.k;
        self.k += 1;
        for &i in moved {
            self.detach(i);
            self.insert(i, new);
        }
    }

    /// Merges `absorbed` into `absorbing`; the last label then takes the
    /// place of `absorbed` so labels stay contiguous.
    pub(crate) fn merge(&mut self, absorbing: usize, absorbed: usize) {
        let d = self.d;
        let last = self.k - 1;
        for i in 0..self.z.len() {
            if self.z[i] == absorbed {
                self.z[i] = absorbing;
            }
        }
        self.nk[absorbing] += self.nk[absorbed];
        for j in 0..d {
            self.skj[absorbing * d + j] += self.skj[absorbed * d + j];
        }
        if absorbed != last {
            for l in self.z.iter_mut() {
                if *l == last {
                    *l = absorbed;
                }
            }
            self.nk[absorbed] = self.nk[last];
            self.skj.copy_within(last * d..(last + 1) * d, absorbed * d);
        }
        self.nk[last] = 0;
        self.skj[last * d..(last + 1) * d].iter_mut().for_each(|v| *v = 0);
        self.k -= 1;
    }

    /// Exchanges labels `a` and `b` together with their statistics.
    pub(crate) fn swap_labels(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for l in self.z.iter_mut() {
            if *l == a {
                *l = b;
            } else if *l == b {
                *l = a;
            }
        }
        self.nk.swap(a, b);
        let d = self.d;
        for j in 0..d {
            self.skj.swap(a * d + j, b * d + j);
        }
    }

    /// Sets completed entry `(i, j)` and keeps the statistics in sync.
    pub(crate) fn set_value(&mut self, i: usize, j: usize, v: u8) {
        let idx = i * self.d + j;
        let old = self.x[idx];
        if old == v {
            return;
        }
        self.x[idx] = v;
        let s = &mut self.skj[self.z[i] * self.d + j];
        if v == 1 {
            *s += 1;
        } else {
            *s -= 1;
        }
    }
}

/// Mixture weights and success probabilities for `K` clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaP {
    pub p: Vec<f64>,
    /// `K x d`, row-major.
    pub theta: Vec<f64>,
    pub d: usize,
}

impl ThetaP {
    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn theta_row(&self, k: usize) -> &[f64] {
        &self.theta[k * self.d..(k + 1) * self.d]
    }

    pub fn theta_at(&self, k: usize, j: usize) -> f64 {
        self.theta[k * self.d + j]
    }
}

/// `sum_k [n_k log p_k + sum_j (s_kj log theta_kj + (n_k - s_kj) log(1 - theta_kj))]`.
pub fn log_complete_likelihood(s: &AllocationState, params: &ThetaP) -> Result<f64> {
    if params.k() != s.k() || params.d != s.d() || params.theta.len() != s.k() * s.d() {
        return Err(Error::DimensionMismatch(format!(
            "parameters are {}x{}, state is {}x{}",
            params.k(),
            params.d,
            s.k(),
            s.d()
        )));
    }
    let mut total = 0.0;
    for k in 0..s.k() {
        let nk = s.n_k(k);
        if nk == 0 {
            continue;
        }
        total += nk as f64 * params.p[k].ln();
        for (&skj, &t) in s.s_k(k).iter().zip(params.theta_row(k)) {
            let t = t.clamp(THETA_EPS, 1.0 - THETA_EPS);
            total += skj as f64 * t.ln() + (nk as f64 - skj as f64) * (1.0 - t).ln();
        }
    }
    Ok(total)
}

/// Collapsed posterior of `(K, z)` with precomputed log-gamma tables.
///
/// All counts are bounded by `n`, so every `lgamma(alpha + s)`-style term
/// the sampler needs is a table lookup.
#[derive(Debug, Clone)]
pub struct CollapsedPosterior {
    n: usize,
    d: usize,
    hyper: Hyperparams,
    lg_a: Vec<f64>,
    lg_b: Vec<f64>,
    lg_ab: Vec<f64>,
    ln_a: Vec<f64>,
    ln_b: Vec<f64>,
    ln_ab: Vec<f64>,
    // kmax x (n + 1)
    lg_g: Vec<f64>,
    ln_g: Vec<f64>,
    // indexed by K, entry 0 unused
    k_const: Vec<f64>,
}

impl CollapsedPosterior {
    pub fn new(n: usize, d: usize, hyper: &Hyperparams) -> Result<Self> {
        if hyper.gamma.len() < hyper.kmax {
            return Err(Error::InvalidHyperparams(format!(
                "gamma has {} entries, expected {}",
                hyper.gamma.len(),
                hyper.kmax
            )));
        }
        let (a, b) = (hyper.alpha, hyper.beta);
        let table = |f: &dyn Fn(f64) -> f64| (0..=n).map(|c| f(c as f64)).collect::<Vec<_>>();
        let mut lg_g = Vec::with_capacity(hyper.kmax * (n + 1));
        let mut ln_g = Vec::with_capacity(hyper.kmax * (n + 1));
        for &g in &hyper.gamma[..hyper.kmax] {
            lg_g.extend((0..=n).map(|c| ln_gamma(g + c as f64)));
            ln_g.extend((0..=n).map(|c| (g + c as f64).ln()));
        }
        let mut k_const = vec![f64::NAN; hyper.kmax + 1];
        for (k, slot) in k_const.iter_mut().enumerate().skip(1) {
            let gamma_sum: f64 = hyper.gamma[..k].iter().sum();
            *slot = log_prior_k(k, hyper)? + log_ck(k, d, hyper)? - ln_gamma(n as f64 + gamma_sum);
        }
        Ok(Self {
            n,
            d,
            hyper: hyper.clone(),
            lg_a: table(&|c| ln_gamma(a + c)),
            lg_b: table(&|c| ln_gamma(b + c)),
            lg_ab: table(&|c| ln_gamma(a + b + c)),
            ln_a: table(&|c| (a + c).ln()),
            ln_b: table(&|c| (b + c).ln()),
            ln_ab: table(&|c| (a + b + c).ln()),
            lg_g,
            ln_g,
            k_const,
        })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Terms of the log posterior that depend on `K` only.
    pub fn k_constant(&self, k: usize) -> f64 {
        self.k_const[k]
    }

    /// Contribution of one cluster with label `label`, size `nk` and success
    /// counts `s`.
    pub fn cluster_term(&self, label: usize, nk: usize, s: &[u32]) -> f64 {
        let mut acc = self.lg_g[label * (self.n + 1) + nk] - self.d as f64 * self.lg_ab[nk];
        for &sj in s {
            let sj = sj as usize;
            acc += self.lg_a[sj] + self.lg_b[nk - sj];
        }
        acc
    }

    /// Unnormalised log of the full conditional of one observation with
    /// completed values `row` joining cluster `label`, given that cluster's
    /// statistics with the observation removed.
    pub fn log_join_weight(&self, label: usize, nk: usize, s: &[u32], row: &[u8]) -> f64 {
        let mut acc = self.ln_g[label * (self.n + 1) + nk] - self.d as f64 * self.ln_ab[nk];
        for (&sj, &x) in s.iter().zip(row) {
            let sj = sj as usize;
            acc += if x == 1 { self.ln_a[sj] } else { self.ln_b[nk - sj] };
        }
        acc
    }

    /// Log collapsed posterior of `s`, up to a constant not depending on
    /// `(K, z)`.
    pub fn log_posterior(&self, s: &AllocationState) -> f64 {
        let k = s.k();
        let mut acc = self.k_constant(k);
        for label in 0..k {
            acc += self.cluster_term(label, s.n_k(label), s.s_k(label));
        }
        acc
    }
}

/// Log collapsed posterior of `(K, z)` with the statistics audited first.
pub fn log_collapsed_posterior(s: &AllocationState, h: &Hyperparams) -> Result<f64> {
    s.audit()?;
    if s.kmax() > h.kmax {
        return Err(Error::DimensionMismatch(format!(
            "state sized for kmax {} but hyperparameters have kmax {}",
            s.kmax(),
            h.kmax
        )));
    }
    Ok(CollapsedPosterior::new(s.n(), s.d(), h)?.log_posterior(s))
}
