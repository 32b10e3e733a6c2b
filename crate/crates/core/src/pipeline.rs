//! End-to-end runs and the files they leave behind.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::data::format_dataset;
use crate::error::{Error, Result};
use crate::mc3::{self, RunConfig, TraceStore};
use crate::metrics::{adjusted_rand_index, rand_index, ConfusionMatrix};
use crate::model::{BinaryDataset, Hyperparams, PriorK, ThetaP};
use crate::relabel::{self, compress_labels, Method, RelabeledSample, Summary, DEFAULT_MAX_ITER};
use crate::sampler::MoveStats;
use crate::simgen::Simulated;
use crate::zoo::Zoo;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Creates `dir`, refusing to reuse an existing path.
pub fn create_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Column names `theta.<k>.<j>` then `p.<k>`, 1-based.
pub fn parameter_names(k: usize, d: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=k)
        .flat_map(|c| (1..=d).map(move |j| format!("theta.{c}.{j}")))
        .collect();
    names.extend((1..=k).map(|c| format!("p.{c}")));
    names
}

fn parameter_row(params: &ThetaP) -> impl Iterator<Item = f64> + '_ {
    params.theta.iter().chain(&params.p).copied()
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{item}").expect("writing to a string");
    }
    out
}

fn parameter_csv<'a>(draws: impl Iterator<Item = &'a ThetaP>, k: usize, d: usize) -> String {
    let mut out = join(parameter_names(k, d)) + "\n";
    for params in draws {
        out += &join(parameter_row(params));
        out.push('\n');
    }
    out
}

fn matrix_csv(m: &[f64], k: usize) -> String {
    let mut out = join((1..=k).map(|c| format!("cluster.{c}"))) + "\n";
    for row in m.chunks(k) {
        out += &join(row);
        out.push('\n');
    }
    out
}

fn summary_csv(names: &[String], summaries: &[Summary]) -> String {
    let mut out = String::from("variable,mean,sd,q2.5,q25,q50,q75,q97.5\n");
    for (name, s) in names.iter().zip(summaries) {
        out += &join(
            std::iter::once(name.clone()).chain(
                [s.mean, s.sd]
                    .into_iter()
                    .chain(s.quantiles)
                    .map(|v| v.to_string()),
            ),
        );
        out.push('\n');
    }
    out
}

/// Posterior summary of every parameter of a relabelled sample.
pub fn parameter_summaries(draws: &[ThetaP]) -> Vec<Summary> {
    let Some(first) = draws.first() else {
        return Vec::new();
    };
    let width = first.theta.len() + first.p.len();
    let rows: Vec<Vec<f64>> = draws.iter().map(|p| parameter_row(p).collect()).collect();
    (0..width)
        .map(|c| {
            let column: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            relabel::summarize(&column).expect("nonempty sample")
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub iterations: usize,
    pub converged: bool,
    /// Observations per cluster under the single-best allocation.
    pub occupancy: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_rand_index: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SwapSummary {
    pub proposed: u64,
    pub accepted: u64,
    pub acceptance_rate: Option<f64>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub n: usize,
    pub d: usize,
    pub missing_entries: usize,
    pub rows_with_missing: usize,
    pub kmax: usize,
    pub cluster_prior: PriorK,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub ejection_target: f64,
    pub heats: Vec<f64>,
    pub cycles: usize,
    pub burn: usize,
    pub seed: u64,
    pub retained_draws: usize,
    /// Posterior probability of each number of clusters.
    pub k_posterior: BTreeMap<usize, f64>,
    pub kmap: usize,
    pub kmap_probability: f64,
    pub swaps: SwapSummary,
    pub methods: BTreeMap<Method, MethodSummary>,
}

#[derive(Debug, Serialize)]
struct ChainMoves<'a> {
    chain: usize,
    heat: f64,
    moves: &'a MoveStats,
}

/// Everything produced by [`run_to_dir`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: TraceStore,
    pub relabeled: RelabeledSample,
    pub summary: RunSummary,
    /// ECR-relabelled parameter summaries in [`parameter_names`] order.
    pub parameter_summary: Vec<Summary>,
}

/// Runs the coupled sampler, post-processes the cold chain and writes all
/// outputs into `out_dir`, which must not exist yet.
///
/// With `z_true`, each method's labels are globally permuted to best match
/// it; the MCMC and the relabeling themselves are unaffected.
pub fn run_to_dir(
    data: &BinaryDataset,
    hyper: &Hyperparams,
    config: &RunConfig,
    z_true: Option<&[u32]>,
    out_dir: &Path,
) -> Result<RunOutcome> {
    hyper.validate()?;
    config.validate()?;
    if let Some(t) = z_true {
        if t.len() != data.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} true labels for {} observations",
                t.len(),
                data.n()
            )));
        }
    }
    create_output_dir(out_dir)?;
    info!(
        "{} observations, {} features, {} missing entries in {} rows",
        data.n(),
        data.d(),
        data.missing_count(),
        data.rows_with_missing()
    );

    let trace = mc3::run(data, hyper, config)?;
    let mut relabeled =
        relabel::relabel(&trace.draws, data, DEFAULT_MAX_ITER).expect("burn < cycles leaves draws");
    let kmap = relabeled.kmap;
    let d = data.d();

    let mut methods = BTreeMap::new();
    for result in &mut relabeled.methods {
        let (mut ri, mut ari) = (None, None);
        if let Some(truth) = z_true {
            let map = relabel::align_to_truth(&result.membership, truth, kmap);
            result.relabel_globally(&compress_labels(&map));
            ri = Some(rand_index(&result.membership, truth)?);
            ari = Some(adjusted_rand_index(&result.membership, truth)?);
        }
        methods.insert(
            result.method,
            MethodSummary {
                iterations: result.iterations,
                converged: result.converged,
                occupancy: result.occupancy(kmap),
                rand_index: ri,
                adjusted_rand_index: ari,
            },
        );
    }

    let cold_k = trace.cold_k();
    let dir = out_dir;
    write(&dir.join("K.mcmc.csv"), format!("K\n{}\n", join_lines(&cold_k)))?;
    let mut all = join((1..=trace.heats.len()).map(|c| format!("chain.{c}"))) + "\n";
    for row in &trace.k_trace {
        all += &join(row);
        all.push('\n');
    }
    write(&dir.join("K.allChains.csv"), all)?;
    write(
        &dir.join(format!("rawMCMC.mapK.{kmap}.csv")),
        parameter_csv(
            relabeled.draw_indices.iter().map(|&t| &trace.draws[t].params),
            kmap,
            d,
        ),
    )?;

    let ecr = relabeled.method(Method::Ecr);
    write(
        &dir.join("parameters.ecr.mcmc.csv"),
        parameter_csv(ecr.params.iter(), kmap, d),
    )?;
    let parameter_summary = parameter_summaries(&ecr.params);
    write(
        &dir.join("parameterSummary.ecr.csv"),
        summary_csv(&parameter_names(kmap, d), &parameter_summary),
    )?;
    write(
        &dir.join("classificationProbabilities.ecr.csv"),
        matrix_csv(&ecr.class_probs, kmap),
    )?;
    write(
        &dir.join("classificationProbabilities.stephens.csv"),
        matrix_csv(&relabeled.stephens_probs, kmap),
    )?;
    let mut membership = join(Method::ALL.iter().map(|m| m.name())) + "\n";
    for i in 0..data.n() {
        membership += &join(Method::ALL.iter().map(|&m| relabeled.method(m).membership[i] + 1));
        membership.push('\n');
    }
    write(&dir.join("clusterMembershipPerMethod.csv"), membership)?;

    let kmap_probability = relabeled.k_pmf[&kmap];
    let summary = RunSummary {
        n: data.n(),
        d,
        missing_entries: data.missing_count(),
        rows_with_missing: data.rows_with_missing(),
        kmax: hyper.kmax,
        cluster_prior: hyper.prior_k,
        alpha: hyper.alpha,
        beta: hyper.beta,
        gamma: hyper.gamma.clone(),
        ejection_target: hyper.ejection_target,
        heats: config.heats.clone(),
        cycles: config.cycles,
        burn: config.burn,
        seed: config.seed,
        retained_draws: trace.draws.len(),
        k_posterior: relabeled.k_pmf.clone(),
        kmap,
        kmap_probability,
        swaps: SwapSummary {
            proposed: trace.swaps.proposed,
            accepted: trace.swaps.accepted,
            acceptance_rate: trace.swaps.rate(),
        },
        methods,
    };
    write(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    let moves: Vec<ChainMoves> = trace
        .move_stats
        .iter()
        .zip(&trace.heats)
        .enumerate()
        .map(|(c, (moves, &heat))| ChainMoves {
            chain: c + 1,
            heat,
            moves,
        })
        .collect();
    write(
        &dir.join("moveStats.json"),
        serde_json::to_string_pretty(&moves)? + "\n",
    )?;

    info!("{}", describe(&summary));
    Ok(RunOutcome {
        trace,
        relabeled,
        summary,
        parameter_summary,
    })
}

fn join_lines<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")
}

/// Human-readable digest of a run.
pub fn describe(s: &RunSummary) -> String {
    let mut out = String::from("posterior distribution of the number of clusters:\n");
    for (k, p) in &s.k_posterior {
        writeln!(out, "  K = {k}: {p:.3}").expect("writing to a string");
    }
    writeln!(out, "most probable K: {} ({:.3})", s.kmap, s.kmap_probability).expect("writing to a string");
    if let Some(rate) = s.swaps.acceptance_rate {
        writeln!(out, "chain swap acceptance: {:.1}%", 100.0 * rate).expect("writing to a string");
    }
    out += "cluster sizes per method:\n";
    for (method, m) in &s.methods {
        writeln!(out, "  {:<16}{}", method.name(), join(&m.occupancy)).expect("writing to a string");
    }
    out
}

/// Writes `data.csv` (with `NA` for missing entries), `zTrue.csv` (1-based)
/// and `trueParameters.csv` into a new directory.
pub fn write_simulation(sim: &Simulated, dir: &Path) -> Result<Vec<PathBuf>> {
    create_output_dir(dir)?;
    let files = [
        (dir.join("data.csv"), format_dataset(&sim.data)),
        (
            dir.join("zTrue.csv"),
            format!(
                "z\n{}\n",
                join_lines(&sim.z_true.iter().map(|z| z + 1).collect::<Vec<_>>())
            ),
        ),
        (
            dir.join("trueParameters.csv"),
            parameter_csv(std::iter::once(&sim.params), sim.params.k(), sim.params.d),
        ),
    ];
    for (path, contents) in &files {
        write(path, contents)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Writes the preprocessed zoo matrix (`zoo.csv`, with a header of feature
/// names) and its classes (`zooClasses.csv`) into a new directory.
pub fn write_zoo(zoo: &Zoo, dir: &Path) -> Result<Vec<PathBuf>> {
    create_output_dir(dir)?;
    let matrix = join(&zoo.feature_names) + "\n" + &format_dataset(&zoo.data);
    let classes = format!("class\n{}\n", join_lines(&zoo.classes));
    let files = [
        (dir.join("zoo.csv"), matrix),
        (dir.join("zooClasses.csv"), classes),
    ];
    for (path, contents) in &files {
        write(path, contents)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Agreement between an estimated and a reference labeling.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub confusion: ConfusionMatrix<u32, u32>,
    pub rand_index: f64,
    pub adjusted_rand_index: f64,
    /// Number of distinct estimated clusters.
    pub clusters: usize,
}

pub fn score(membership: &[u32], truth: &[u32]) -> Result<ScoreReport> {
    let confusion = ConfusionMatrix::new(membership, truth)?;
    Ok(ScoreReport {
        clusters: confusion.row_labels.len(),
        rand_index: rand_index(membership, truth)?,
        adjusted_rand_index: adjusted_rand_index(membership, truth)?,
        confusion,
    })
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "confusion matrix (rows: estimate, columns: truth)")?;
        write!(f, "{:>8}", "")?;
        for t in &c.col_labels {
            write!(f, "{t:>6}")?;
        }
        writeln!(f)?;
        for (label, row) in c.row_labels.iter().zip(&c.counts) {
            write!(f, "{label:>8}")?;
            for v in row {
                write!(f, "{v:>6}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "clusters: {}", self.clusters)?;
        writeln!(f, "rand index: {}", self.rand_index)?;
        write!(f, "adjusted rand index: {}", self.adjusted_rand_index)
    }
}
