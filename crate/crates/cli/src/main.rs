use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpfix::analysis::evaluate_fixed_points;
use bpfix::bp::{beliefs, run_bp, BpInit, BpOptions, BpStatus};
use bpfix::codes::{decode_threshold, default_eps_grid, DecodeMethod};
use bpfix::exact::{enumerate_exact, enumerate_exact_factor};
use bpfix::experiments::{random_grid_trial, slice, summarize, sweep, timing_report, Axis, ModelKind, SweepSpec};
use bpfix::homotopy::{SolutionSet, SolveOptions, Solver};
use bpfix::model::{load_model, LoadedModel};
use bpfix::polysys::{build_bp_system, build_factor_bp_system, parse_system, stats, write_system, PolynomialSystem};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bpfix", version, about = "Find and score every fixed point of loopy belief propagation")]
struct Cli {
    /// Seed for liftings, start systems and random draws.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for path tracking (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact marginals by enumeration.
    Exact {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run loopy BP and print beliefs.
    Bp(BpArgs),
    /// Write the fixed-point polynomial system of a model.
    System {
        #[arg(long)]
        model: PathBuf,
        /// Print equation counts and degrees instead of the system.
        #[arg(long)]
        stats: bool,
    },
    /// Solve a polynomial system (from a system file or a model file).
    Solve {
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        system: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Score every fixed point of a pairwise model against the exact marginals.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Sweep a uniform model over a (J, theta) grid.
    Sweep {
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Full 41x41 resolution instead of the quick default.
        #[arg(long)]
        full: bool,
        /// Print the mean MSE per combination mode as a final comment.
        #[arg(long)]
        summary: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Magnetization of every fixed point along J at fixed theta.
    Slice {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        j_lo: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        j_hi: f64,
        #[arg(long, default_value_t = 41)]
        j_count: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// 3x3 grids with random couplings and fields.
    RandomTrials {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Parameters are drawn from U(-k, k).
        #[arg(long, default_value_t = 3.0)]
        k: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Decode a single flipped bit of the (7,4) Hamming code.
    Hamming {
        #[arg(long, value_parser = ["1", "6"])]
        flip: String,
        #[arg(long, default_value = "exact")]
        method: String,
    },
    /// Time the solver phases on one model.
    Timing {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        j: f64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        theta: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Args)]
struct BpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// `uniform` or `random:SEED`.
    #[arg(long, default_value = "uniform")]
    init: String,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Mixed-cell strategy: `auto`, `zonotope` or `lifting-dfs`.
    #[arg(long, default_value = "auto")]
    cells: String,
    /// Solve the unreduced message system.
    #[arg(long)]
    no_reduce: bool,
    /// Largest fraction of unresolved paths before a solve fails.
    #[arg(long, default_value_t = 0.05)]
    max_unresolved: f64,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions { cells: self.cells.clone(), reduce: !self.no_reduce, max_unresolved: self.max_unresolved, ..Default::default() }
    }
}

#[derive(Args)]
struct FamilyArgs {
    /// `grid:RxC` or `complete:N`.
    #[arg(long, default_value = "grid:3x3")]
    kind: String,
    /// Branching for region labels; defaults to mean degree minus one.
    #[arg(long)]
    branching: Option<u32>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    j_lo: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    j_hi: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    theta_lo: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    theta_hi: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 17)]
    count: usize,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    let bad = || format!("model kind `{s}` is not `grid:RxC` or `complete:N`");
    let (name, size) = s.split_once(':').ok_or_else(bad)?;
    match name {
        "grid" => {
            let (r, c) = size.split_once('x').ok_or_else(bad)?;
            Ok(ModelKind::Grid { rows: r.parse().map_err(|_| bad())?, cols: c.parse().map_err(|_| bad())? })
        }
        "complete" => Ok(ModelKind::Complete { n: size.parse().map_err(|_| bad())? }),
        _ => Err(bad()),
    }
}

fn parse_init(s: &str) -> Result<BpInit, String> {
    match s.split_once(':') {
        None if s == "uniform" => Ok(BpInit::Uniform),
        Some(("random", seed)) => seed.parse().map(BpInit::Random).map_err(|_| format!("bad seed in `{s}`")),
        _ => Err(format!("init `{s}` is not `uniform` or `random:SEED`")),
    }
}

type Failure = Box<dyn std::error::Error>;

struct Output {
    inner: Box<dyn Write>,
}

impl Output {
    fn open(path: Option<&Path>) -> io::Result<Self> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout())),
        };
        let mut out = Self { inner };
        let invocation: Vec<String> = std::env::args().collect();
        writeln!(out.inner, "# {}", invocation.join(" "))?;
        Ok(out)
    }

    fn comment(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.inner, "# {text}")
    }

    fn csv(&mut self) -> csv::Writer<&mut dyn Write> {
        csv::Writer::from_writer(&mut *self.inner)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_pairwise(path: &Path) -> Result<bpfix::model::PairwiseModel, Failure> {
    match load_model(path)? {
        LoadedModel::Pairwise { model, .. } => Ok(model),
        LoadedModel::Factor(_) => Err("this command needs a pairwise model".into()),
    }
}

fn system_of(path: &Path) -> Result<PolynomialSystem, Failure> {
    Ok(match load_model(path)? {
        LoadedModel::Pairwise { model, .. } => build_bp_system(&model),
        LoadedModel::Factor(fg) => build_factor_bp_system(&fg)?,
    })
}

fn write_solutions(out: &mut Output, sols: &SolutionSet) -> Result<(), Failure> {
    let d = &sols.diagnostics;
    out.comment(&format!(
        "bkk {} strategy {} paths {} success {} diverged {} singular_endpoints {} unresolved {}",
        sols.bkk,
        sols.strategy,
        sols.raw_paths.len(),
        d.success,
        d.diverged,
        d.singular_endpoints,
        d.unresolved()
    ))?;
    let n = sols.distinct_complex.first().map_or(0, |s| s.point.len());
    let mut w = out.csv();
    let mut header = vec!["index".to_string(), "is_real".into(), "is_positive".into(), "residual".into()];
    for v in 1..=n {
        header.push(format!("v{v}_re"));
        header.push(format!("v{v}_im"));
    }
    w.write_record(&header)?;
    for (i, s) in sols.distinct_complex.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            sols.real_solutions.contains(&i).to_string(),
            sols.positive_real.contains(&i).to_string(),
            s.residual.to_string(),
        ];
        for c in &s.point {
            rec.push(c.re.to_string());
            rec.push(c.im.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    let mut out = Output::open(cli.out.as_deref())?;
    let solver = Solver::default();
    let seed = cli.seed;
    match cli.command {
        Command::Exact { model } => match load_model(&model)? {
            LoadedModel::Pairwise { model, .. } => {
                let ex = enumerate_exact(&model)?;
                out.comment(&format!("log_partition {}", ex.log_partition))?;
                let mut w = out.csv();
                w.write_record(["node", "p_plus"])?;
                for (i, p) in ex.marginals.iter().enumerate() {
                    w.write_record([i.to_string(), p.to_string()])?;
                }
                w.flush()?;
            }
            LoadedModel::Factor(fg) => {
                let ex = enumerate_exact_factor(&fg)?;
                out.comment(&format!("log_partition {}", ex.log_partition))?;
                let mut w = out.csv();
                w.write_record(["var", "p_one"])?;
                for (i, p) in ex.marginals.iter().enumerate() {
                    w.write_record([i.to_string(), p[1].to_string()])?;
                }
                w.flush()?;
            }
        },
        Command::Bp(a) => {
            let model = load_pairwise(&a.model)?;
            let opts = BpOptions {
                max_iters: a.max_iters,
                tolerance: a.tol,
                damping: a.damping,
                init: parse_init(&a.init)?,
                ..Default::default()
            };
            let run = run_bp(&model, &opts)?;
            let b = beliefs(&model, &run.final_messages)?;
            {
                let mut w = out.csv();
                w.write_record(["node", "belief_plus"])?;
                for (i, p) in b.iter().enumerate() {
                    w.write_record([i.to_string(), p.to_string()])?;
                }
                w.flush()?;
            }
            out.comment(&format!("status {} iterations {}", run.status.name(), run.iterations))?;
            out.inner.flush()?;
            return Ok(match run.status {
                BpStatus::Converged => ExitCode::SUCCESS,
                BpStatus::MaxIters => ExitCode::from(2),
                BpStatus::LimitCycle(_) => ExitCode::from(3),
            });
        }
        Command::System { model, stats: want_stats } => {
            let sys = system_of(&model)?;
            if want_stats {
                let st = stats(&sys);
                let mut w = out.csv();
                w.write_record(["scope", "degree", "equations"])?;
                for (d, k) in &st.degree_profile {
                    w.write_record(["total", &d.to_string(), &k.to_string()])?;
                }
                for (d, k) in &st.message_degree_profile {
                    w.write_record(["message", &d.to_string(), &k.to_string()])?;
                }
                w.flush()?;
                drop(w);
                out.comment(&format!(
                    "equations {} total_degree {} message_total_degree {}",
                    st.num_equations, st.total_degree, st.message_total_degree
                ))?;
            } else {
                write!(out.inner, "{}", write_system(&sys))?;
            }
        }
        Command::Solve { system, model, solver: s } => {
            let sys = match (system, model) {
                (Some(p), _) => parse_system(&std::fs::read_to_string(p)?)?,
                (None, Some(m)) => system_of(&m)?,
                (None, None) => return Err("either --system or --model is required".into()),
            };
            let sols = solver.solve(&sys, seed, &s.options())?;
            write_solutions(&mut out, &sols)?;
        }
        Command::Analyze { model, solver: s } => {
            let model = load_pairwise(&model)?;
            let sols = solver.solve(&build_bp_system(&model), seed, &s.options())?;
            let reports = evaluate_fixed_points(&model, &sols)?;
            let mut w = out.csv();
            let mut header: Vec<String> =
                ["fp_index", "stable", "spectral_radius", "bethe_logZ", "mse", "mean_magnetization"].map(String::from).to_vec();
            header.extend((0..model.node_count()).map(|i| format!("belief_{i}")));
            w.write_record(&header)?;
            for (i, r) in reports.iter().enumerate() {
                let mut rec = vec![
                    i.to_string(),
                    r.stable.to_string(),
                    r.spectral_radius.to_string(),
                    r.bethe_log_z.to_string(),
                    r.mse_vs_exact.to_string(),
                    r.mean_magnetization.to_string(),
                ];
                rec.extend(r.beliefs.iter().map(|b| b.to_string()));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Command::Sweep { family, grid, full, summary, solver: s } => {
            let count = if full { 41 } else { grid.count };
            let spec = SweepSpec {
                kind: parse_kind(&family.kind)?,
                j: Axis { lo: grid.j_lo, hi: grid.j_hi, count, offset: true },
                theta: Axis { lo: grid.theta_lo, hi: grid.theta_hi, count, offset: true },
                seed,
                solve: s.options(),
                bp: BpOptions::default(),
                branching: family.branching,
            };
            let points = sweep(&spec, &solver)?;
            let rows: Vec<_> = points.into_iter().map(|p| p.row).collect();
            {
                let mut w = out.csv();
                w.write_record([
                    "j", "theta", "region", "bp_status", "bp_iterations", "bp_mse", "distinct", "real", "positive", "stable",
                    "mse_all", "mse_stable", "mse_max", "mse_min", "unresolved_paths", "error",
                ])?;
                for r in &rows {
                    w.write_record([
                        r.j.to_string(),
                        r.theta.to_string(),
                        r.region.name().to_string(),
                        r.bp_status.clone(),
                        r.bp_iterations.to_string(),
                        r.bp_mse.to_string(),
                        r.distinct.to_string(),
                        r.real.to_string(),
                        r.positive.to_string(),
                        r.stable.to_string(),
                        r.mse_all.to_string(),
                        fmt_opt(r.mse_stable),
                        r.mse_max.to_string(),
                        r.mse_min.to_string(),
                        r.unresolved_paths.to_string(),
                        r.error.clone().unwrap_or_default(),
                    ])?;
                }
                w.flush()?;
            }
            if summary {
                if let Some(m) = summarize(&rows) {
                    out.comment(&format!(
                        "mean mse over {} rows: stable {} all {} max {} min {} bp {}",
                        m.rows, m.stable, m.all, m.max, m.min, m.bp
                    ))?;
                }
            }
        }
        Command::Slice { family, theta, j_lo, j_hi, j_count, solver: s } => {
            let axis = Axis { lo: j_lo, hi: j_hi, count: j_count, offset: false };
            let rows = slice(parse_kind(&family.kind)?, theta, &axis, seed, &s.options(), &solver)?;
            let mut w = out.csv();
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Command::RandomTrials { count, k, solver: s } => {
            let (rows, summary) = random_grid_trial(count, k, seed, &s.options(), &solver)?;
            {
                let mut w = out.csv();
                w.write_record(["trial", "bp_status", "bp_converged", "bp_mse", "positive", "stable", "best_mse", "error"])?;
                for r in &rows {
                    w.write_record([
                        r.trial.to_string(),
                        r.bp_status.clone(),
                        r.bp_converged.to_string(),
                        r.bp_mse.to_string(),
                        r.positive.to_string(),
                        r.stable.to_string(),
                        r.best_mse.to_string(),
                        r.error.clone().unwrap_or_default(),
                    ])?;
                }
                w.flush()?;
            }
            out.comment(&format!(
                "trials {} bp_converged {} unique_fixed_point {} failed {}",
                summary.trials, summary.bp_converged, summary.unique_fixed_point, summary.failed
            ))?;
        }
        Command::Hamming { flip, method } => {
            let method: DecodeMethod = method.parse()?;
            let curve = decode_threshold(flip.parse()?, method, &default_eps_grid(), seed)?;
            {
                let mut w = out.csv();
                w.write_record(["epsilon", "p_bit_zero"])?;
                for p in &curve.points {
                    w.write_record([p.epsilon.to_string(), p.p_bit_zero.to_string()])?;
                }
                w.flush()?;
            }
            out.comment(&format!("threshold {}", fmt_opt(curve.threshold())))?;
        }
        Command::Timing { family, j, theta, solver: s } => {
            let t = timing_report(parse_kind(&family.kind)?, j, theta, seed, &s.options())?;
            let mut w = out.csv();
            w.write_record(["phase", "seconds"])?;
            let rows = [
                ("mixed_volume", t.mixed_volume),
                ("start_system", t.start_system),
                ("path_tracking", t.tracking),
                ("post_processing", t.post_processing),
                ("bp", t.bp),
                ("total", t.total),
                ("reuse_mixed_volume", t.reuse.cells),
                ("reuse_path_tracking", t.reuse.tracking),
                ("reuse_total", t.reuse_total),
            ];
            for (name, d) in rows {
                w.write_record([name.to_string(), d.as_secs_f64().to_string()])?;
            }
            w.flush()?;
        }
    }
    out.inner.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
