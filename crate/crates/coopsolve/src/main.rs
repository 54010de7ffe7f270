//! Command-line front end: solve problem files, brute-force small ones,
//! compare methods, and run the synthetic stereo demo.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coopsolve::baselines::{icm_with_sweep_budget, simulated_annealing, AnnealConfig};
use coopsolve::harness::{
    compare_run, disparity_image, stereo_problem, stereo_synthetic, BudgetMode, ComparisonTable,
    GrayImage, MethodSpec, PropagationChoice, StereoParams,
};
use coopsolve::model::{brute_force_solve, load_problem, Assignment, Problem};
use coopsolve::solver::{
    run, LambdaSchedule, PruneMode, RunConfig, StopRules, TraceRecord, WtaPlan,
};

#[derive(Parser)]
#[command(
    name = "coopsolve",
    version,
    about = "Cooperative minimization of pairwise label energies, with annealing and \
             coordinate-descent baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a problem file with one method.
    Solve(SolveArgs),
    /// Enumerate a small problem file exactly.
    Oracle(OracleArgs),
    /// Run every method on one problem and tabulate the results.
    Compare(CompareArgs),
    /// Synthesize a stereo pair, solve it with every method, report accuracy.
    StereoDemo(StereoArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Coop,
    Sa,
    Icm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Propagation {
    Uniform,
    Neighbor,
}

impl From<Propagation> for PropagationChoice {
    fn from(p: Propagation) -> Self {
        match p {
            Propagation::Uniform => PropagationChoice::Uniform,
            Propagation::Neighbor => PropagationChoice::Neighbor,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PruneArg {
    Off,
    Margin,
    Spectral,
    Both,
}

impl From<PruneArg> for PruneMode {
    fn from(p: PruneArg) -> Self {
        match p {
            PruneArg::Off => PruneMode::Off,
            PruneArg::Margin => PruneMode::Margin,
            PruneArg::Spectral => PruneMode::Spectral,
            PruneArg::Both => PruneMode::Both,
        }
    }
}

/// Options shared by every subcommand that runs the cooperative method.
#[derive(Args, Clone)]
struct CoopOpts {
    /// Constant cooperation strength in [0,1).
    #[arg(long, conflicts_with = "lambda_ramp")]
    lambda: Option<f64>,
    /// Rising strength schedule START:END:STEP; the bare flag means
    /// 0.5:0.99:0.01.
    #[arg(
        long,
        value_name = "START:END:STEP",
        num_args = 0..=1,
        default_missing_value = "0.5:0.99:0.01"
    )]
    lambda_ramp: Option<String>,
    #[arg(long, value_enum, default_value_t = Propagation::Uniform)]
    propagation: Propagation,
    #[arg(long, value_enum, default_value_t = PruneArg::Off)]
    prune: PruneArg,
    /// Iteration cap for the cooperative dynamics.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Residual tolerance for convergence stopping; 0 disables.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Winner-take-all tightening when progress stalls (heuristic; voids
    /// bound certificates).
    #[arg(long)]
    wta: bool,
    /// Iterations without consensus before a winner-take-all round fires.
    #[arg(long, default_value_t = 10)]
    wta_stall: usize,
    /// Iterations to leave untouched before the first winner-take-all round,
    /// so the certified bound can mature first.
    #[arg(long, default_value_t = 0)]
    wta_warmup: usize,
    /// External upper bound on the optimal energy; sharpens pruning.
    #[arg(long)]
    upper_bound: Option<f64>,
}

impl CoopOpts {
    fn schedule(&self) -> Result<LambdaSchedule> {
        if let Some(l) = self.lambda {
            return Ok(LambdaSchedule::Constant(l));
        }
        match &self.lambda_ramp {
            Some(spec) => parse_ramp(spec),
            None => Ok(LambdaSchedule::default()),
        }
    }

    fn config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            schedule: self.schedule()?,
            prune: self.prune.into(),
            wta: self.wta.then(|| WtaPlan {
                warmup: self.wta_warmup,
                stall: self.wta_stall,
                ..WtaPlan::default()
            }),
            stop: StopRules {
                max_iters: self.max_iters,
                eps: self.eps,
                ..StopRules::default()
            },
            upper_bound_hint: self.upper_bound,
            ..RunConfig::default()
        })
    }
}

fn parse_ramp(spec: &str) -> Result<LambdaSchedule> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("--lambda-ramp wants START:END:STEP, got {spec:?}");
    }
    let mut nums = [0.0f64; 3];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| anyhow!("bad number {part:?} in --lambda-ramp: {e}"))?;
    }
    Ok(LambdaSchedule::Ramp { start: nums[0], end: nums[1], step: nums[2] })
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (JSON; see README.md for the schema).
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Coop)]
    method: Method,
    #[command(flatten)]
    coop: CoopOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep budget for the sa and icm methods.
    #[arg(long, default_value_t = 300)]
    budget: usize,
    /// Write per-iteration records as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the propagation matrix before solving.
    #[arg(long)]
    dump_matrix: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Write the result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    #[command(flatten)]
    coop: CoopOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep budget granted to every method.
    #[arg(long, default_value_t = 300)]
    budget: usize,
    /// Grant every method this wall-clock allowance (milliseconds) instead
    /// of a sweep budget.
    #[arg(long, value_name = "MS")]
    wall_clock_ms: Option<u64>,
    /// Write the table rows as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StereoArgs {
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    max_disparity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep budget granted to every method. Small on purpose: annealing
    /// needs hundreds of sweeps to cool, the cooperative dynamics converge
    /// in a dozen or two.
    #[arg(long, default_value_t = 16)]
    budget: usize,
    /// Constant cooperation strength; the default is a rising schedule.
    #[arg(long, conflicts_with = "lambda_ramp")]
    lambda: Option<f64>,
    /// Rising strength schedule START:END:STEP.
    #[arg(long, value_name = "START:END:STEP")]
    lambda_ramp: Option<String>,
    #[arg(long, value_enum, default_value_t = Propagation::Neighbor)]
    propagation: Propagation,
    #[arg(long, value_enum, default_value_t = PruneArg::Off)]
    prune: PruneArg,
    /// Potts discontinuity penalty.
    #[arg(long, default_value_t = 1.5)]
    smoothness: f64,
    /// Data-term truncation.
    #[arg(long, default_value_t = 20.0)]
    truncation: f64,
    /// Solve this PGM instead of a synthetic pair (needs --right).
    #[arg(long, requires = "right")]
    left: Option<PathBuf>,
    #[arg(long, requires = "left")]
    right: Option<PathBuf>,
    /// Winner-take-all tightening for the cooperative method.
    #[arg(long)]
    wta: bool,
    /// Iterations without consensus before a winner-take-all round fires.
    #[arg(long, default_value_t = 10)]
    wta_stall: usize,
    /// Iterations to leave untouched before the first winner-take-all round.
    #[arg(long, default_value_t = 0)]
    wta_warmup: usize,
    /// Write the cooperative method's disparity field as a PGM.
    #[arg(long)]
    disparity_out: Option<PathBuf>,
    /// Write the generated problem as a JSON problem file and keep going.
    #[arg(long)]
    dump_problem: Option<PathBuf>,
    /// Write the table rows as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Die quietly when the output pipe closes (`coopsolve ... | head`)
    // instead of panicking on a failed print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::StereoDemo(args) => cmd_stereo(&args),
    }
}

fn read_problem(path: &Path) -> Result<Problem> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading problem file {}", path.display()))?;
    load_problem(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, doc: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct SolveDoc {
    method: String,
    energy: f64,
    assignment: Vec<usize>,
    labels: Vec<i64>,
    iterations: usize,
    stop_reason: Option<String>,
    lower_bound: Option<f64>,
    bound_certified: Option<bool>,
    certificate: Option<f64>,
    warnings: Vec<String>,
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let problem = read_problem(&args.problem)?;
    let doc = match args.method {
        Method::Coop => {
            let config = args.coop.config()?;
            let w = PropagationChoice::from(args.coop.propagation).build(&problem)?;
            if args.dump_matrix {
                print!("{}", w.to_text());
            }
            let report = run(&problem, w, &config)?;
            if let Some(path) = &args.trace {
                let mut text = String::new();
                for rec in report.trace.iter().map(TraceRecord::from) {
                    text.push_str(&serde_json::to_string(&rec)?);
                    text.push('\n');
                }
                fs::write(path, text)
                    .with_context(|| format!("writing trace {}", path.display()))?;
            }
            for msg in &report.warnings {
                eprintln!("warning: {msg}");
            }
            println!("stop: {} after {} iterations", report.stop_reason, report.iterations);
            println!("energy: {}", report.energy);
            println!("assignment: {}", report.assignment);
            println!("labels: {:?}", problem.labels_of(&report.assignment));
            if let Some(b) = report.best_certified_bound {
                println!("lower bound: {b}");
            }
            if let Some(g) = report.certificate {
                let note = if g < 1.0 { "  (< 1: optimal when costs are integers)" } else { "" };
                println!("certificate: {g}{note}");
            }
            SolveDoc {
                method: "coop".into(),
                energy: report.energy,
                assignment: report.assignment.0.clone(),
                labels: problem.labels_of(&report.assignment),
                iterations: report.iterations,
                stop_reason: Some(report.stop_reason.to_string()),
                lower_bound: report.best_certified_bound,
                bound_certified: Some(report.bound_certified),
                certificate: report.certificate,
                warnings: report.warnings.clone(),
            }
        }
        Method::Sa => {
            let config = AnnealConfig {
                budget_sweeps: args.budget,
                seed: args.seed,
                ..AnnealConfig::default()
            };
            let report = simulated_annealing(&problem, &config)?;
            if let Some(path) = &args.trace {
                let mut text = String::new();
                for (sweep, e) in report.trace.iter().enumerate() {
                    text.push_str(&serde_json::to_string(
                        &serde_json::json!({ "sweep": sweep + 1, "best_energy": e }),
                    )?);
                    text.push('\n');
                }
                fs::write(path, text)
                    .with_context(|| format!("writing trace {}", path.display()))?;
            }
            println!("sweeps: {}", report.sweeps);
            println!("energy: {}", report.energy);
            println!("assignment: {}", report.assignment);
            println!("labels: {:?}", problem.labels_of(&report.assignment));
            SolveDoc {
                method: "sa".into(),
                energy: report.energy,
                assignment: report.assignment.0.clone(),
                labels: problem.labels_of(&report.assignment),
                iterations: report.sweeps,
                stop_reason: None,
                lower_bound: None,
                bound_certified: None,
                certificate: None,
                warnings: vec![],
            }
        }
        Method::Icm => {
            let report = icm_with_sweep_budget(&problem, args.budget.max(1), args.seed)?;
            println!("restarts: {}, sweeps: {}", report.restarts, report.sweeps);
            println!("energy: {}", report.energy);
            println!("assignment: {}", report.assignment);
            println!("labels: {:?}", problem.labels_of(&report.assignment));
            SolveDoc {
                method: "icm".into(),
                energy: report.energy,
                assignment: report.assignment.0.clone(),
                labels: problem.labels_of(&report.assignment),
                iterations: report.sweeps,
                stop_reason: None,
                lower_bound: None,
                bound_certified: None,
                certificate: None,
                warnings: vec![],
            }
        }
    };
    if let Some(path) = &args.out {
        write_json(path, &doc)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleDoc {
    energy: f64,
    assignment: Vec<usize>,
    labels: Vec<i64>,
    optima: usize,
    truncated: bool,
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let problem = read_problem(&args.problem)?;
    let result = brute_force_solve(&problem)?;
    println!("optimal energy: {}", result.optimal_energy);
    println!("optimum: {}", result.optimum);
    println!("labels: {:?}", problem.labels_of(&result.optimum));
    println!(
        "optima: {}{}",
        result.all_optima.len(),
        if result.truncated { " (enumeration truncated)" } else { "" }
    );
    if let Some(path) = &args.out {
        write_json(
            path,
            &OracleDoc {
                energy: result.optimal_energy,
                assignment: result.optimum.0.clone(),
                labels: problem.labels_of(&result.optimum),
                optima: result.all_optima.len(),
                truncated: result.truncated,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRowDoc {
    method: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn table_docs(table: &ComparisonTable) -> Vec<CompareRowDoc> {
    table
        .rows
        .iter()
        .map(|row| match &row.outcome {
            Ok(o) => CompareRowDoc {
                method: row.method.clone(),
                ok: true,
                energy: Some(o.energy),
                iterations: Some(o.iterations),
                wall_ms: Some(o.wall.as_secs_f64() * 1e3),
                lower_bound: o.lower_bound,
                certificate: o.certificate,
                assignment: Some(o.assignment.0.clone()),
                error: None,
            },
            Err(msg) => CompareRowDoc {
                method: row.method.clone(),
                ok: false,
                energy: None,
                iterations: None,
                wall_ms: None,
                lower_bound: None,
                certificate: None,
                assignment: None,
                error: Some(msg.clone()),
            },
        })
        .collect()
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let problem = read_problem(&args.problem)?;
    let methods = vec![
        MethodSpec::Cooperative {
            config: args.coop.config()?,
            propagation: args.coop.propagation.into(),
        },
        MethodSpec::Annealing(AnnealConfig { seed: args.seed, ..AnnealConfig::default() }),
        MethodSpec::Icm { seed: args.seed },
    ];
    let budget = match args.wall_clock_ms {
        Some(ms) => BudgetMode::EqualWallClock(Duration::from_millis(ms)),
        None => BudgetMode::EqualSweeps(args.budget),
    };
    let table = compare_run(&problem, &methods, budget)?;
    print!("{table}");
    if let Some(path) = &args.out {
        write_json(path, &table_docs(&table))?;
    }
    if table.rows.iter().all(|r| r.outcome.is_err()) {
        bail!("every method failed");
    }
    Ok(())
}

#[derive(Serialize)]
struct StereoDoc {
    width: usize,
    height: usize,
    max_disparity: usize,
    seed: u64,
    truth_energy: Option<f64>,
    rows: Vec<CompareRowDoc>,
    accuracy: Vec<Option<f64>>,
}

fn cmd_stereo(args: &StereoArgs) -> Result<()> {
    let (left, right, truth) = match (&args.left, &args.right) {
        (Some(l), Some(r)) => (
            GrayImage::read_from(l)?,
            GrayImage::read_from(r)?,
            None,
        ),
        _ => {
            let (l, r, t) =
                stereo_synthetic(args.width, args.height, args.max_disparity, args.seed)?;
            (l, r, Some(t))
        }
    };
    let params = StereoParams {
        max_disparity: args.max_disparity,
        data_truncation: args.truncation,
        smoothness_weight: args.smoothness,
    };
    let problem = stereo_problem(&left, &right, &params)?;
    if let Some(path) = &args.dump_problem {
        fs::write(path, coopsolve::model::save_problem(&problem))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote problem file to {}", path.display());
    }
    println!(
        "instance: {}x{} pixels, {} disparities, {} variables, {} edges",
        left.width(),
        left.height(),
        args.max_disparity,
        problem.num_variables(),
        problem.constraints().len()
    );
    let truth_energy = match &truth {
        Some(t) => Some(problem.energy(&Assignment(t.clone()))?),
        None => None,
    };
    if let Some(e) = truth_energy {
        println!("ground-truth energy: {e}");
    }

    let schedule = if let Some(l) = args.lambda {
        LambdaSchedule::Constant(l)
    } else if let Some(spec) = &args.lambda_ramp {
        parse_ramp(spec)?
    } else {
        // Rises fast so the certified bound matures within a small sweep
        // budget.
        LambdaSchedule::Ramp { start: 0.3, end: 0.999, step: 0.1 }
    };
    let config = RunConfig {
        schedule,
        prune: args.prune.into(),
        wta: args.wta.then(|| WtaPlan {
            warmup: args.wta_warmup,
            stall: args.wta_stall,
            ..WtaPlan::default()
        }),
        ..RunConfig::default()
    };
    let methods = vec![
        MethodSpec::Cooperative { config, propagation: args.propagation.into() },
        MethodSpec::Annealing(AnnealConfig { seed: args.seed, ..AnnealConfig::default() }),
        MethodSpec::Icm { seed: args.seed },
    ];
    let table = compare_run(&problem, &methods, BudgetMode::EqualSweeps(args.budget))?;
    print!("{table}");

    let accuracy: Vec<Option<f64>> = table
        .rows
        .iter()
        .map(|row| match (&row.outcome, &truth) {
            (Ok(o), Some(t)) => {
                let hits = o.assignment.0.iter().zip(t).filter(|(a, b)| a == b).count();
                Some(hits as f64 / t.len() as f64)
            }
            _ => None,
        })
        .collect();
    for (row, acc) in table.rows.iter().zip(&accuracy) {
        if let Some(a) = acc {
            println!("{} matches ground truth on {:.1}% of pixels", row.method, a * 100.0);
        }
    }

    if let Some(path) = &args.disparity_out {
        let coop = table
            .rows
            .iter()
            .find(|r| r.method == "cooperative")
            .and_then(|r| r.outcome.as_ref().ok())
            .ok_or_else(|| anyhow!("cooperative method produced no result"))?;
        disparity_image(&coop.assignment.0, left.width(), left.height(), args.max_disparity)?
            .write_to(path)?;
        println!("wrote disparity field to {}", path.display());
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &StereoDoc {
                width: left.width(),
                height: left.height(),
                max_disparity: args.max_disparity,
                seed: args.seed,
                truth_energy,
                rows: table_docs(&table),
                accuracy,
            },
        )?;
    }
    Ok(())
}
