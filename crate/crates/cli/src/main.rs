use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddopt::d3ca::{D3caConfig, DualAveraging};
use ddopt::data::{assemble, generate_dataset, partition_dataset, read_cache, read_libsvm, write_cache, write_libsvm, Dataset, SyntheticConfig};
use ddopt::engine::{ClusterSim, THREADS_ENV};
use ddopt::harness::{self, CsvRow, ExperimentFile, ReferenceOptions, Solver};
use ddopt::radisa::{MarginMode, RadisaConfig};
use ddopt::{LossKind, PartitionedData, ProblemSpec};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ddopt", version, about = "Doubly distributed D3CA and RADiSA on a simulated cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as a binary cache or LIBSVM text.
    Generate(GenerateArgs),
    /// Train one solver and print its per-iteration history.
    Train(TrainArgs),
    /// Solve to a tight duality gap and print the reference objective.
    Reference(ReferenceArgs),
    /// Run every experiment of a TOML file and write CSV reports.
    Experiment(ExperimentArgs),
    /// Summarize experiment CSVs, optionally next to a baseline curve.
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// LIBSVM input file.
    #[arg(long, conflicts_with_all = ["cache", "rows"])]
    libsvm: Option<PathBuf>,
    /// Binary cache written by `generate`.
    #[arg(long, conflicts_with = "rows")]
    cache: Option<PathBuf>,
    /// Synthetic rows.
    #[arg(long, requires = "cols")]
    rows: Option<usize>,
    /// Synthetic columns.
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    /// Synthetic density in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Shuffle rows and columns with this seed before tiling.
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        if let Some(path) = &self.libsvm {
            return read_libsvm(path).with_context(|| format!("reading {}", path.display()));
        }
        if let Some(path) = &self.cache {
            let (_, data) = read_cache(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(assemble(&data)?);
        }
        match (self.rows, self.cols) {
            (Some(rows), Some(cols)) => Ok(generate_dataset(&SyntheticConfig::new(1, 1, rows, cols, self.density, self.data_seed))?),
            _ => bail!("give one of --libsvm, --cache or --rows/--cols"),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: usize,
    #[arg(long)]
    rows_per_block: usize,
    #[arg(long)]
    cols_per_block: usize,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Cache)]
    format: Format,
    /// Only print the shape and nonzero count.
    #[arg(long)]
    dry_run: bool,
    #[arg(long, required_unless_present = "dry_run")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Cache,
    Libsvm,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Hinge,
    Logistic,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Hinge => LossKind::Hinge,
            LossArg::Logistic => LossKind::Logistic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MarginArg {
    Partial,
    Anchored,
}

#[derive(Args)]
struct ProblemArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Hinge)]
    loss: LossArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    solver: SolverArg,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// RADiSA inner steps per outer iteration.
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Try several step sizes and keep the one with the lowest final objective.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    /// Multiply gamma by P.
    #[arg(long)]
    scale_gamma_with_p: bool,
    #[arg(long, default_value_t = 1)]
    gradient_lag: usize,
    #[arg(long, value_enum, default_value_t = MarginArg::Partial)]
    margins: MarginArg,
    /// D3CA local passes.
    #[arg(long, default_value_t = 1)]
    local_passes: usize,
    #[arg(long)]
    beta_stepsize: bool,
    /// Average D3CA increments over Q instead of P Q.
    #[arg(long)]
    row_share: bool,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Reference objective: a number, or `auto` to solve for it first.
    #[arg(long)]
    fstar: Option<String>,
    /// Write the history as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    D3ca,
    Radisa,
    RadisaAvg,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::D3ca => Solver::D3ca,
            SolverArg::Radisa => Solver::Radisa,
            SolverArg::RadisaAvg => Solver::RadisaAvg,
        }
    }
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_epochs: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file with one or more `[[experiment]]` tables.
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// CSV files written by `experiment` or `train`.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    /// Baseline curve with columns `solver, iter, rel_opt`.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Reference(a) => reference(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = SyntheticConfig::new(a.p, a.q, a.rows_per_block, a.cols_per_block, a.density, a.seed);
    cfg.validate()?;
    let (n, m) = cfg.shape();
    println!("n={n} m={m} P={} Q={} nonzeros={}", a.p, a.q, cfg.nonzeros());
    if a.dry_run {
        return Ok(());
    }
    let out = a.out.expect("required by clap");
    let ds = generate_dataset(&cfg)?;
    match a.format {
        Format::Cache => write_cache(&out, &partition_dataset(&ds, a.p, a.q, None)?.data, a.density, a.seed)?,
        Format::Libsvm => write_libsvm(&ds, std::io::BufWriter::new(std::fs::File::create(&out)?))?,
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn problem(args: &ProblemArgs, p: usize, q: usize) -> Result<(PartitionedData, ProblemSpec)> {
    let ds = args.data.load()?;
    let spec = ProblemSpec::new(ds.n(), ds.m(), args.lambda, args.loss.into())?;
    let data = partition_dataset(&ds, p, q, args.data.shuffle_seed)?.data;
    Ok((data, spec))
}

fn train(a: TrainArgs) -> Result<()> {
    let (data, spec) = problem(&a.problem, a.p, a.q)?;
    let f_star = match a.fstar.as_deref() {
        None => None,
        Some("auto") => {
            let sol = harness::reference_solve(&data, &spec, &ReferenceOptions { seed: a.problem.seed, ..Default::default() })?;
            log::info!("reference f* = {:.12} after {} epochs", sol.f_star, sol.epochs);
            Some(sol.f_star)
        }
        Some(v) => Some(v.parse::<f64>().with_context(|| format!("--fstar must be a number or `auto`, got {v:?}"))?),
    };
    let threads = a.threads.unwrap_or_else(ddopt::engine::default_threads);
    let sim = ClusterSim::with_threads(a.p * a.q, threads)?;
    let solver: Solver = a.solver.into();
    let d3ca = D3caConfig {
        outer_iters: a.iters,
        local_passes: a.local_passes,
        use_beta_stepsize: a.beta_stepsize,
        averaging: if a.row_share { DualAveraging::RowShare } else { DualAveraging::AllBlocks },
        seed: a.problem.seed,
    };
    let gammas = a.gamma_grid.clone().unwrap_or_else(|| vec![a.gamma]);
    let mut best: Option<(f64, ddopt::RunHistory, Vec<f64>)> = None;
    for &gamma in &gammas {
        let radisa = RadisaConfig {
            batch_size: a.batch,
            gamma,
            outer_iters: a.iters,
            seed: a.problem.seed,
            gradient_lag: a.gradient_lag,
            scale_step_with_p: a.scale_gamma_with_p,
            margins: match a.margins {
                MarginArg::Partial => MarginMode::Partial,
                MarginArg::Anchored => MarginMode::Anchored,
            },
            ..Default::default()
        };
        sim.reset_stats();
        let (history, times) = harness::run_solver(solver, &data, &spec, &sim, &d3ca, &radisa, f_star)?;
        let last = history.last().map_or(f64::INFINITY, |r| r.primal_value);
        if solver != Solver::D3ca && gammas.len() > 1 {
            log::info!("gamma {gamma}: final objective {last:.10}");
        }
        if best.as_ref().map_or(true, |(_, h, _)| last < h.last().map_or(f64::INFINITY, |r| r.primal_value)) {
            best = Some((gamma, history, times));
        }
    }
    let (gamma, history, times) = best.expect("at least one gamma");
    if solver != Solver::D3ca {
        println!("# gamma {gamma}");
    }
    println!("{:>5} {:>18} {:>12} {:>12} {:>8} {:>12}", "iter", "primal", "gap", "rel_opt", "reduces", "scalars");
    let mut rows = Vec::with_capacity(history.len());
    for (r, secs) in history.records.iter().zip(times) {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
        println!(
            "{:>5} {:>18.12} {:>12} {:>12} {:>8} {:>12}",
            r.t,
            r.primal_value,
            fmt(r.duality_gap()),
            fmt(r.rel_opt),
            r.reduce_ops,
            r.elements_communicated
        );
        rows.push(CsvRow {
            solver: solver.name().into(),
            p: a.p,
            q: a.q,
            lambda: spec.lambda,
            iter: r.t,
            rel_opt: r.rel_opt.unwrap_or(f64::NAN),
            reduce_ops: r.reduce_ops,
            scalars_communicated: r.elements_communicated,
            wall_seconds: secs,
            primal: r.primal_value,
            f_star: f_star.unwrap_or(f64::NAN),
            density: data.nnz() as f64 / (spec.n as f64 * spec.m as f64),
        });
    }
    if let Some(path) = &a.csv {
        harness::write_rows(path, &rows)?;
    }
    Ok(())
}

fn reference(a: ReferenceArgs) -> Result<()> {
    let (data, spec) = problem(&a.problem, 1, 1)?;
    let opts = ReferenceOptions { gap_tol: a.gap_tol, max_epochs: a.max_epochs, seed: a.problem.seed };
    let sol = harness::reference_solve(&data, &spec, &opts)?;
    println!("f_star={:.15} dual={:.15} gap={:.3e} epochs={}", sol.f_star, sol.dual_value, sol.gap, sol.epochs);
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let file = ExperimentFile::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    let reports = harness::run_experiment(&file, &a.out, None)?;
    for (e, r) in file.experiments.iter().zip(&reports) {
        println!("{}: {} rows -> {}", e.name, r.rows.len(), a.out.join(format!("{}.csv", e.name)).display());
        for (solver, p, q, lambda, gamma) in &r.chosen_gamma {
            println!("  {} P={p} Q={q} lambda={lambda}: gamma {gamma}", solver.name());
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.csv {
        rows.extend(harness::read_rows(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let baseline = match &a.baseline {
        Some(path) => harness::read_baseline(path)?,
        None => Vec::new(),
    };
    print!("{}", harness::summarize(&rows, &baseline));
    Ok(())
}
