//! Reference solves, metrics and the config-driven experiment drivers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::d3ca::{run_d3ca_observed, sdca_step, D3caConfig, DualAveraging};
use crate::data::{generate_dataset, partition_dataset, read_libsvm, Dataset, SyntheticConfig};
use crate::engine::{default_threads, rng_stream, sample_index, ClusterSim};
use crate::error::{Error, Result};
use crate::losses::{block_dual_contribution, dual_objective, primal_objective};
use crate::model::{DualVector, LossKind, PartitionedData, PrimalVector, ProblemSpec, RunHistory};
use crate::radisa::{run_radisa_observed, MarginMode, RadisaConfig, RadisaVariant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub gap_tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-8, max_epochs: 20_000, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub f_star: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub epochs: usize,
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Serial SDCA on the whole dataset until the duality gap certifies
/// `F - D <= gap_tol * max(1, |F|)`.
///
/// Each epoch visits every observation once in a fresh random order. `w` is
/// rebuilt from `alpha` before each certificate so drift cannot fake one.
pub fn reference_solve(data: &PartitionedData, spec: &ProblemSpec, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    if !(opts.gap_tol > 0.0) {
        return Err(Error::InvalidConfig(format!("gap tolerance must be positive, got {}", opts.gap_tol)));
    }
    let single = if data.grid().workers() == 1 {
        data.clone()
    } else {
        let ds = crate::data::assemble(data)?;
        partition_dataset(&ds, 1, 1, None)?.data
    };
    let block = single.block(0, 0);
    let n = block.rows();
    let sigma_n = spec.sigma_n();
    let norms: Vec<f64> = (0..n).map(|i| block.matrix.row(i).norm_sq()).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; spec.m];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_stream(opts.seed, "reference", &[]);
    let mut gap = f64::INFINITY;
    for epoch in 1..=opts.max_epochs {
        for i in (1..n).rev() {
            order.swap(i, sample_index(&mut rng, i + 1));
        }
        for &i in &order {
            let row = block.matrix.row(i);
            let Ok(step) = sdca_step(spec.loss, alpha[i], row.dot(&w), block.labels[i], sigma_n, norms[i], 1.0) else {
                continue;
            };
            if step != 0.0 {
                alpha[i] += step;
                row.axpy(step / sigma_n, &mut w);
            }
        }
        w = block_dual_contribution(block, &alpha);
        w.iter_mut().for_each(|v| *v /= sigma_n);
        let wv = PrimalVector { blocks: vec![w.clone()] };
        let av = DualVector { blocks: vec![alpha.clone()] };
        let f = primal_objective(&wv, &single, spec)?;
        let d = dual_objective(&av, &single, spec)?;
        gap = f - d;
        if gap <= opts.gap_tol * f.abs().max(1.0) {
            return Ok(ReferenceSolution { f_star: f, dual_value: d, gap, epochs: epoch, w, alpha });
        }
    }
    Err(Error::MaxIterationsExceeded { epochs: opts.max_epochs, gap })
}

/// `(f_t - f_star) / f_star`. A negative value means `f_star` was not
/// converged; it is returned as-is after a warning.
pub fn relative_optimality(f_t: f64, f_star: f64) -> Result<f64> {
    if !(f_star > 0.0) {
        return Err(Error::NonPositiveReference(f_star));
    }
    let r = (f_t - f_star) / f_star;
    if r < 0.0 {
        log::warn!("objective {f_t} is below the reference {f_star}; the reference is not converged");
    }
    Ok(r)
}

/// `(t_1 / t_P) * 100`.
pub fn weak_scaling_efficiency(t1: f64, tp: f64) -> Result<f64> {
    if !(t1 > 0.0 && tp > 0.0) {
        return Err(Error::NonPositiveTime { t1, tp });
    }
    Ok(t1 / tp * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    D3ca,
    Radisa,
    RadisaAvg,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::D3ca => "d3ca",
            Solver::Radisa => "radisa",
            Solver::RadisaAvg => "radisa-avg",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d3ca" => Ok(Solver::D3ca),
            "radisa" => Ok(Solver::Radisa),
            "radisa-avg" => Ok(Solver::RadisaAvg),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Fixed iteration budget, one row per iteration.
    Convergence,
    /// Fixed dataset, growing `P x Q`; stops at the target.
    Strong,
    /// Fixed block size, growing `P`; stops at the target and reports efficiency.
    Weak,
}

/// Where the data of an experiment comes from. Either `libsvm`, a total
/// `rows x cols`, or a per-block `rows_per_block x cols_per_block`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub libsvm: Option<PathBuf>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub rows_per_block: Option<usize>,
    pub cols_per_block: Option<usize>,
    #[serde(default = "one")]
    pub density: f64,
    /// Weak scaling: one sweep per density.
    pub densities: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    pub shuffle_seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct D3caSection {
    pub lambdas: Option<Vec<f64>>,
    #[serde(default = "one_usize")]
    pub local_passes: usize,
    #[serde(default)]
    pub beta_stepsize: bool,
    #[serde(default)]
    pub row_share: bool,
}

fn one_usize() -> usize {
    1
}

impl Default for D3caSection {
    fn default() -> Self {
        Self { lambdas: None, local_passes: 1, beta_stepsize: false, row_share: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadisaSection {
    pub lambdas: Option<Vec<f64>>,
    /// Inner steps `L` per block.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Strong scaling: total inner steps per column block, split as `L = total / P`.
    pub inner_total: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub gamma_grid: Option<Vec<f64>>,
    /// Multiply `gamma` by `P`; defaults to on for strong scaling.
    pub scale_gamma_with_p: Option<bool>,
    #[serde(default = "one_usize")]
    pub gradient_lag: usize,
}

fn default_batch() -> usize {
    100
}

fn default_gamma() -> f64 {
    0.1
}

impl Default for RadisaSection {
    fn default() -> Self {
        Self {
            lambdas: None,
            batch: default_batch(),
            inner_total: None,
            gamma: default_gamma(),
            gamma_grid: None,
            scale_gamma_with_p: None,
            gradient_lag: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub solvers: Vec<Solver>,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    /// Used by every solver without its own list.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// `(P, Q)` cells.
    pub cells: Vec<(usize, usize)>,
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Relative optimality that ends strong and weak runs.
    #[serde(default = "default_target")]
    pub target: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    pub threads: Option<usize>,
    pub data: DataSection,
    #[serde(default)]
    pub d3ca: D3caSection,
    #[serde(default)]
    pub radisa: RadisaSection,
}

fn default_loss() -> LossKind {
    LossKind::Hinge
}

fn default_iters() -> usize {
    50
}

fn default_target() -> f64 {
    0.05
}

fn default_gap_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentSpec>,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for e in &file.experiments {
            e.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("experiment {:?}: {msg}", self.name)));
        if self.cells.is_empty() {
            return bad("no (P, Q) cells".into());
        }
        if let Some(&(p, q)) = self.cells.iter().find(|&&(p, q)| p * q == 0) {
            return bad(format!("cell ({p}, {q}) has no workers"));
        }
        if self.solvers.is_empty() {
            return bad("no solvers".into());
        }
        for &s in &self.solvers {
            if self.lambdas_for(s).is_empty() {
                return bad(format!("no lambda for {}", s.name()));
            }
            if self.lambdas_for(s).iter().any(|&l| !(l > 0.0)) {
                return bad("lambda must be positive".into());
            }
        }
        if self.iters == 0 {
            return bad("iters must be at least 1".into());
        }
        let d = &self.data;
        let sources = [d.libsvm.is_some(), d.rows.is_some() || d.cols.is_some(), d.rows_per_block.is_some() || d.cols_per_block.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return bad("data needs exactly one of libsvm, rows/cols, rows_per_block/cols_per_block".into());
        }
        if d.rows.is_some() != d.cols.is_some() || d.rows_per_block.is_some() != d.cols_per_block.is_some() {
            return bad("data dimensions come in pairs".into());
        }
        if self.kind == ExperimentKind::Weak {
            if d.rows_per_block.is_none() {
                return bad("weak scaling needs rows_per_block and cols_per_block".into());
            }
            let qs: Vec<usize> = self.cells.iter().map(|c| c.1).collect();
            if qs.iter().any(|&q| q != qs[0]) {
                return bad("weak scaling holds Q fixed".into());
            }
        }
        if let Some(total) = self.radisa.inner_total {
            if let Some(&(p, _)) = self.cells.iter().find(|&&(p, _)| total % p != 0) {
                return bad(format!("inner_total {total} is not divisible by P = {p}"));
            }
        }
        Ok(())
    }

    fn lambdas_for(&self, solver: Solver) -> &[f64] {
        let own = match solver {
            Solver::D3ca => self.d3ca.lambdas.as_deref(),
            Solver::Radisa | Solver::RadisaAvg => self.radisa.lambdas.as_deref(),
        };
        own.unwrap_or(&self.lambdas)
    }

    fn densities(&self) -> Vec<f64> {
        self.data.densities.clone().unwrap_or_else(|| vec![self.data.density])
    }

    /// `L` for a cell: `inner_total / P` when set, else `batch`.
    pub fn inner_steps(&self, p: usize) -> usize {
        self.radisa.inner_total.map_or(self.radisa.batch, |total| total / p)
    }

    fn scale_gamma(&self) -> bool {
        self.radisa.scale_gamma_with_p.unwrap_or(self.kind == ExperimentKind::Strong)
    }

    fn gammas(&self) -> Vec<f64> {
        self.radisa.gamma_grid.clone().unwrap_or_else(|| vec![self.radisa.gamma])
    }
}

/// One line of the experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub solver: String,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub lambda: f64,
    pub iter: usize,
    pub rel_opt: f64,
    /// Cumulative counted reduction phases.
    pub reduce_ops: u64,
    pub scalars_communicated: u64,
    pub wall_seconds: f64,
    pub primal: f64,
    pub f_star: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub solver: String,
    pub density: f64,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub lambda: f64,
    pub seconds: f64,
    pub efficiency: f64,
}

/// Identifies one run; handed to the time source.
#[derive(Debug, Clone, PartialEq)]
pub struct CellId {
    pub solver: Solver,
    pub p: usize,
    pub q: usize,
    pub lambda: f64,
    pub density: f64,
}

/// Maps a run and its measured time to the time reported for it.
/// Tests substitute scripted timings here.
pub type TimeSource<'a> = &'a mut dyn FnMut(&CellId, f64) -> f64;

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<CsvRow>,
    pub efficiency: Vec<EfficiencyRow>,
    /// `gamma` chosen per RADiSA cell when a grid was searched.
    pub chosen_gamma: Vec<(Solver, usize, usize, f64, f64)>,
}

struct Trace {
    rows: Vec<CsvRow>,
    /// Wall seconds until the target was first met, else the whole run.
    seconds: f64,
    reached: bool,
}

#[allow(clippy::too_many_arguments)]
fn trace_rows(
    solver: Solver,
    (p, q): (usize, usize),
    spec: &ProblemSpec,
    density: f64,
    f_star: f64,
    history: &RunHistory,
    times: &[f64],
    stop_at: Option<f64>,
) -> Result<Trace> {
    let mut rows = Vec::new();
    let mut reached = false;
    for (rec, &secs) in history.records.iter().zip(times) {
        let rel_opt = relative_optimality(rec.primal_value, f_star)?;
        rows.push(CsvRow {
            solver: solver.name().into(),
            p,
            q,
            lambda: spec.lambda,
            iter: rec.t,
            rel_opt,
            reduce_ops: rec.reduce_ops,
            scalars_communicated: rec.elements_communicated,
            wall_seconds: secs,
            primal: rec.primal_value,
            f_star,
            density,
        });
        if stop_at.is_some_and(|target| rel_opt <= target) {
            reached = true;
            break;
        }
    }
    let seconds = rows.last().map_or(0.0, |r| r.wall_seconds);
    Ok(Trace { rows, seconds, reached })
}

/// Runs one solver on `data`, returning its history and the cumulative wall
/// time at each iteration.
pub fn run_solver(
    solver: Solver,
    data: &PartitionedData,
    spec: &ProblemSpec,
    sim: &ClusterSim,
    d3ca: &D3caConfig,
    radisa: &RadisaConfig,
    f_star: Option<f64>,
) -> Result<(RunHistory, Vec<f64>)> {
    let start = Instant::now();
    let mut times = Vec::new();
    let history = match solver {
        Solver::D3ca => run_d3ca_observed(data, spec, d3ca, sim, f_star, |_, _, _| times.push(start.elapsed().as_secs_f64()))?.history,
        Solver::Radisa | Solver::RadisaAvg => {
            let variant = if solver == Solver::Radisa { RadisaVariant::Disjoint } else { RadisaVariant::Avg };
            let config = RadisaConfig { variant, ..radisa.clone() };
            run_radisa_observed(data, spec, &config, sim, f_star, |_, _| times.push(start.elapsed().as_secs_f64()))?.history
        }
    };
    Ok((history, times))
}

fn load_dataset(e: &ExperimentSpec, p: usize, q: usize, density: f64) -> Result<Dataset> {
    let d = &e.data;
    if let Some(path) = &d.libsvm {
        return read_libsvm(path);
    }
    let cfg = match (d.rows, d.cols, d.rows_per_block, d.cols_per_block) {
        (Some(rows), Some(cols), _, _) => SyntheticConfig::new(1, 1, rows, cols, density, d.seed),
        (_, _, Some(rpb), Some(cpb)) => SyntheticConfig::new(p, q, rpb, cpb, density, d.seed),
        _ => return Err(Error::Config(format!("experiment {:?} has no data source", e.name))),
    };
    generate_dataset(&cfg)
}

/// Runs every experiment in `file` and writes `<name>.csv` (and, for weak
/// scaling, `<name>_efficiency.csv`) into `out_dir`.
pub fn run_experiment(file: &ExperimentFile, out_dir: &Path, timer: Option<TimeSource<'_>>) -> Result<Vec<ExperimentReport>> {
    let mut identity = |_: &CellId, t: f64| t;
    let timer: TimeSource<'_> = match timer {
        Some(t) => t,
        None => &mut identity,
    };
    std::fs::create_dir_all(out_dir)?;
    let mut reports = Vec::new();
    for e in &file.experiments {
        let report = run_one(e, &mut *timer)?;
        write_rows(out_dir.join(format!("{}.csv", e.name)), &report.rows)?;
        if e.kind == ExperimentKind::Weak {
            write_rows(out_dir.join(format!("{}_efficiency.csv", e.name)), &report.efficiency)?;
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Runs a single experiment without writing anything.
pub fn run_one(e: &ExperimentSpec, timer: TimeSource<'_>) -> Result<ExperimentReport> {
    e.validate()?;
    let threads = e.threads.unwrap_or_else(default_threads);
    let stop_at = (e.kind != ExperimentKind::Convergence).then_some(e.target);
    let mut report = ExperimentReport::default();
    // f* per (density, cell for weak scaling, lambda); strong and convergence
    // runs share one dataset across cells.
    let mut references: BTreeMap<(u64, usize, u64), f64> = BTreeMap::new();
    let mut shared: BTreeMap<u64, Dataset> = BTreeMap::new();
    let mut weak_times: Vec<(CellId, f64)> = Vec::new();

    for density in e.densities() {
        for &(p, q) in &e.cells {
            let per_cell = e.kind == ExperimentKind::Weak || e.data.rows_per_block.is_some();
            let ds = if per_cell {
                load_dataset(e, p, q, density)?
            } else {
                match shared.get(&density.to_bits()) {
                    Some(ds) => ds.clone(),
                    None => {
                        let ds = load_dataset(e, p, q, density)?;
                        shared.insert(density.to_bits(), ds.clone());
                        ds
                    }
                }
            };
            let data = partition_dataset(&ds, p, q, e.data.shuffle_seed)?.data;
            let sim = ClusterSim::with_threads(p * q, threads)?;
            for &solver in &e.solvers {
                for &lambda in e.lambdas_for(solver) {
                    let spec = ProblemSpec::new(ds.n(), ds.m(), lambda, e.loss)?;
                    let key = (density.to_bits(), if per_cell { p * 1_000_003 + q } else { 0 }, lambda.to_bits());
                    let f_star = match references.get(&key) {
                        Some(&f) => f,
                        None => {
                            let opts = ReferenceOptions { gap_tol: e.gap_tol, seed: e.seed, ..Default::default() };
                            let f = reference_solve(&data, &spec, &opts)?.f_star;
                            references.insert(key, f);
                            f
                        }
                    };
                    let d3ca = D3caConfig {
                        outer_iters: e.iters,
                        local_passes: e.d3ca.local_passes,
                        use_beta_stepsize: e.d3ca.beta_stepsize,
                        averaging: if e.d3ca.row_share { DualAveraging::RowShare } else { DualAveraging::AllBlocks },
                        seed: e.seed,
                    };
                    let gammas = if solver == Solver::D3ca { vec![e.radisa.gamma] } else { e.gammas() };
                    let mut best: Option<(Trace, f64)> = None;
                    for gamma in gammas {
                        let radisa = RadisaConfig {
                            batch_size: e.inner_steps(p),
                            gamma,
                            outer_iters: e.iters,
                            variant: RadisaVariant::Disjoint,
                            seed: e.seed,
                            gradient_lag: e.radisa.gradient_lag,
                            scale_step_with_p: e.scale_gamma(),
                            margins: MarginMode::Partial,
                        };
                        sim.reset_stats();
                        let (history, times) = run_solver(solver, &data, &spec, &sim, &d3ca, &radisa, Some(f_star))?;
                        let trace = trace_rows(solver, (p, q), &spec, density, f_star, &history, &times, stop_at)?;
                        let better = match &best {
                            None => true,
                            Some((b, _)) => rank(&trace) < rank(b),
                        };
                        if better {
                            best = Some((trace, gamma));
                        }
                    }
                    let (trace, gamma) = best.expect("at least one gamma");
                    if solver != Solver::D3ca && e.radisa.gamma_grid.is_some() {
                        log::info!("{} P={p} Q={q} lambda={lambda}: best gamma {gamma}", solver.name());
                        report.chosen_gamma.push((solver, p, q, lambda, gamma));
                    }
                    if stop_at.is_some() && !trace.reached {
                        log::warn!("{} P={p} Q={q} lambda={lambda} missed the target {} in {} iterations", solver.name(), e.target, e.iters);
                    }
                    let id = CellId { solver, p, q, lambda, density };
                    let seconds = timer(&id, trace.seconds);
                    if e.kind == ExperimentKind::Weak {
                        weak_times.push((id, seconds));
                    }
                    report.rows.extend(trace.rows);
                }
            }
        }
    }
    report.efficiency = efficiency_table(&weak_times)?;
    Ok(report)
}

/// Orders traces by iterations needed to reach the target (when it is
/// reached), then by final relative optimality.
fn rank(trace: &Trace) -> (usize, f64) {
    let last = trace.rows.last();
    let iters = if trace.reached { last.map_or(usize::MAX, |r| r.iter) } else { usize::MAX };
    (iters, last.map_or(f64::INFINITY, |r| r.rel_opt))
}

/// Efficiency of every cell against the smallest `P` sharing its solver,
/// density and lambda.
pub fn efficiency_table(times: &[(CellId, f64)]) -> Result<Vec<EfficiencyRow>> {
    let mut out = Vec::with_capacity(times.len());
    for (id, seconds) in times {
        let base = times
            .iter()
            .filter(|(o, _)| o.solver == id.solver && o.density == id.density && o.lambda == id.lambda && o.q == id.q)
            .min_by_key(|(o, _)| o.p)
            .expect("the cell itself qualifies");
        out.push(EfficiencyRow {
            solver: id.solver.name().into(),
            density: id.density,
            p: id.p,
            q: id.q,
            lambda: id.lambda,
            seconds: *seconds,
            efficiency: weak_scaling_efficiency(base.1, *seconds)?,
        });
    }
    Ok(out)
}

pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Rows of an externally produced baseline curve: `solver, iter, rel_opt`
/// plus any of the standard columns.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BaselineRow {
    pub solver: String,
    pub iter: usize,
    pub rel_opt: f64,
    #[serde(rename = "P", default)]
    pub p: Option<usize>,
    #[serde(rename = "Q", default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
}

pub fn read_baseline(path: impl AsRef<Path>) -> Result<Vec<BaselineRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Relative optimality levels reported by [`summarize`].
pub const REPORT_TARGETS: [f64; 3] = [0.05, 0.01, 0.001];

/// One line per `(solver, P, Q, lambda)` series: iterations to each report
/// target, the final relative optimality and communication totals. Baseline
/// series are listed with their iteration counts only.
pub fn summarize(rows: &[CsvRow], baseline: &[BaselineRow]) -> String {
    let mut series: BTreeMap<(String, usize, usize, u64, u64), Vec<&CsvRow>> = BTreeMap::new();
    for r in rows {
        series.entry((r.solver.clone(), r.p, r.q, r.lambda.to_bits(), r.density.to_bits())).or_default().push(r);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>3} {:>3} {:>9} {:>7} {:>6} {:>6} {:>6} {:>12} {:>8} {:>14}",
        "solver", "P", "Q", "lambda", "density", "<=5%", "<=1%", "<=.1%", "final", "reduces", "scalars"
    );
    let first = |rs: &[&CsvRow], target: f64| rs.iter().find(|r| r.rel_opt <= target).map_or("-".to_string(), |r| r.iter.to_string());
    for ((solver, p, q, lambda, density), rs) in &series {
        let last = rs.last().unwrap();
        let _ = writeln!(
            out,
            "{:<12} {:>3} {:>3} {:>9.1e} {:>7} {:>6} {:>6} {:>6} {:>12.4e} {:>8} {:>14}",
            solver,
            p,
            q,
            f64::from_bits(*lambda),
            f64::from_bits(*density),
            first(rs, REPORT_TARGETS[0]),
            first(rs, REPORT_TARGETS[1]),
            first(rs, REPORT_TARGETS[2]),
            last.rel_opt,
            last.reduce_ops,
            last.scalars_communicated
        );
    }
    let mut base: BTreeMap<String, Vec<&BaselineRow>> = BTreeMap::new();
    for b in baseline {
        base.entry(b.solver.clone()).or_default().push(b);
    }
    for (solver, rs) in &base {
        let hit = |target: f64| rs.iter().find(|r| r.rel_opt <= target).map_or("-".to_string(), |r| r.iter.to_string());
        let _ = writeln!(
            out,
            "{:<12} {:>3} {:>3} {:>9} {:>7} {:>6} {:>6} {:>6} {:>12.4e} {:>8} {:>14}",
            format!("{solver}*"),
            "-",
            "-",
            "-",
            "-",
            hit(REPORT_TARGETS[0]),
            hit(REPORT_TARGETS[1]),
            hit(REPORT_TARGETS[2]),
            rs.last().unwrap().rel_opt,
            "-",
            "-"
        );
    }
    out
}
