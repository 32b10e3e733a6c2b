//! Synthetic data from a Bernoulli mixture, with rows randomly thinned by
//! missing entries.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{BinaryDataset, ThetaP};

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    /// Symmetric Dirichlet(1, ..., 1).
    Dirichlet,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSource {
    /// Independent Uniform(0, 1) per component and feature.
    Uniform,
    /// Row-major `K x d`.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub d: usize,
    pub k_true: usize,
    pub weights: WeightSource,
    pub theta: ThetaSource,
    /// Probability that a row receives missing entries.
    pub missing_row_prob: f64,
    /// Success probability of the Binomial(d, .) count of missing entries
    /// in such a row.
    pub missing_fraction: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Dirichlet weights, uniform success probabilities, and missing
    /// entries in 20% of rows, each losing a Binomial(d, 0.3) count.
    pub fn new(n: usize, d: usize, k_true: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            k_true,
            weights: WeightSource::Dirichlet,
            theta: ThetaSource::Uniform,
            missing_row_prob: 0.2,
            missing_fraction: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.d == 0 || self.k_true == 0 {
            return bad("n, d and the number of components must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.missing_row_prob) || !(0.0..=1.0).contains(&self.missing_fraction) {
            return bad("missingness probabilities must lie in [0, 1]".into());
        }
        if self.missing_row_prob > 0.0 && self.missing_fraction >= 1.0 {
            return bad("a missing fraction of 1 would blank whole rows".into());
        }
        if let WeightSource::Fixed(w) = &self.weights {
            let sum: f64 = w.iter().sum();
            if w.len() != self.k_true || w.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-9
            {
                return bad("fixed weights must be K nonnegative values summing to 1".into());
            }
        }
        if let ThetaSource::Fixed(t) = &self.theta {
            if t.len() != self.k_true * self.d || t.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return bad("fixed theta must be K x d values in [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: BinaryDataset,
    /// 0-based true allocations.
    pub z_true: Vec<usize>,
    pub params: ThetaP,
}

pub fn generate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d, k) = (spec.n, spec.d, spec.k_true);
    let p = match &spec.weights {
        WeightSource::Fixed(w) => w.clone(),
        WeightSource::Dirichlet => {
            let g = Gamma::new(1.0, 1.0).expect("valid shape");
            let draws: Vec<f64> = (0..k).map(|_| g.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|v| v / total).collect()
        }
    };
    let theta = match &spec.theta {
        ThetaSource::Fixed(t) => t.clone(),
        ThetaSource::Uniform => (0..k * d).map(|_| rng.random::<f64>()).collect(),
    };
    let cumulative: Vec<f64> = p
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let z_true: Vec<usize> = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * cumulative[k - 1];
            cumulative.iter().position(|&c| u < c).unwrap_or(k - 1)
        })
        .collect();
    let mut values = vec![0u8; n * d];
    for (i, &zi) in z_true.iter().enumerate() {
        for j in 0..d {
            values[i * d + j] = u8::from(rng.random::<f64>() < theta[zi * d + j]);
        }
    }
    let mut observed = vec![true; n * d];
    let count_law = Binomial::new(d as u64, spec.missing_fraction).expect("valid binomial");
    for i in 0..n {
        if rng.random::<f64>() >= spec.missing_row_prob {
            continue;
        }
        let count = loop {
            let c = count_law.sample(&mut rng) as usize;
            if c < d {
                break c;
            }
        };
        for j in sample(&mut rng, d, count) {
            observed[i * d + j] = false;
            values[i * d + j] = 0;
        }
    }
    Ok(Simulated {
        data: BinaryDataset::new(n, d, values, observed)?,
        z_true,
        params: ThetaP { p, theta, d },
    })
}
