//! `drotree`: solve, classify, assess, sweep and generate scenario-tree
//! instances of the multistage total-variation DRO problem.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 infeasible or unbounded
//! instance, 4 oracle disagreement under `classify --oracle --strict`, 1 any
//! other failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use drotree::effectiveness::{C2MassRule, ClassifyOptions};
use drotree::gen::{gen_random, gen_water_analog, RandomParams, WaterParams};
use drotree::lp::write_cplex_lp;
use drotree::oracle::{assess_leaf, assess_node, assess_paths, assess_realizations, RemovalSet};
use drotree::report::{
    classify_report, sweep_csv, sweep_point, to_json, AssessmentBody, AssessmentEntry, AssessmentReport,
    SolutionReport, SweepRow,
};
use drotree::solver::{build_extensive, solve_benders, solve_extensive, BendersOptions, SolveOutcome, SolverKind};
use drotree::{load_instance, Error, ScenarioTree};

#[derive(Parser, Debug)]
#[command(name = "drotree", version, about = "Multistage TV-ball DRO: solve and identify effective scenarios")]
struct Cli {
    /// Worker threads for oracle checks and sweeps (default: $DROTREE_JOBS,
    /// else available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an instance and write the optimal policy.
    Solve(SolveArgs),
    /// Label realizations and scenario paths as effective or ineffective.
    Classify(ClassifyArgs),
    /// Re-solve with scenario paths or realizations removed.
    Assess(AssessArgs),
    /// Solve and classify over a grid of radii.
    Sweep(SweepArgs),
    /// Generate an instance file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Extensive,
    Benders,
    /// Run both and check that the objectives agree.
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum C2RuleArg {
    C2Only,
    C1PlusC2,
}

impl From<C2RuleArg> for ClassifyOptions {
    fn from(r: C2RuleArg) -> Self {
        ClassifyOptions {
            c2_rule: match r {
                C2RuleArg::C2Only => C2MassRule::C2Only,
                C2RuleArg::C1PlusC2 => C2MassRule::C1PlusC2,
            },
        }
    }
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Override every stage radius with this value.
    #[arg(long)]
    gamma: Option<f64>,
}

impl InstanceArgs {
    fn load(&self) -> Result<ScenarioTree> {
        let tree = load_instance(&self.instance).with_context(|| format!("loading {}", self.instance.display()))?;
        match self.gamma {
            Some(g) => Ok(tree.with_uniform_gamma(g)?),
            None => Ok(tree),
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long, value_enum, default_value = "extensive")]
    solver: SolverArg,
    /// Relative gap tolerance for Benders.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Benders pass limit.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the extensive-form LP in CPLEX LP format.
    #[arg(long)]
    lp_dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Check every label against the re-solved assessment problems.
    #[arg(long)]
    oracle: bool,
    /// With --oracle, exit with status 4 on any disagreement.
    #[arg(long, requires = "oracle")]
    strict: bool,
    #[arg(long, value_enum, default_value = "c2-only")]
    c2_rule: C2RuleArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a Graphviz rendering of the labels.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "removal")]
struct RemovalArgs {
    /// Comma-separated leaf ids.
    #[arg(long, value_delimiter = ',')]
    paths: Option<Vec<String>>,
    /// Comma-separated ids of realizations at one stage.
    #[arg(long, value_delimiter = ',')]
    realizations: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[command(flatten)]
    removal: RemovalArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Grid `start:stop:step`, applied to every stage.
    #[arg(long)]
    gamma: String,
    #[arg(long, value_enum, default_value = "extensive")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "c2-only")]
    c2_rule: C2RuleArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "kind")]
struct GenKind {
    /// Random instance: `seed,stages,branching`.
    #[arg(long)]
    random: Option<String>,
    /// Water-allocation analog with this seed.
    #[arg(long)]
    water: Option<u64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    kind: GenKind,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Decisions per stage for random instances.
    #[arg(long, default_value_t = 2)]
    n_vars: usize,
    /// Weight of the parent's demand in random instances.
    #[arg(long, default_value_t = 0.0)]
    dependence: f64,
    /// Use the same demand levels in both later stages of the water analog.
    #[arg(long)]
    symmetric: bool,
    #[arg(long)]
    out: PathBuf,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve_with(tree: &ScenarioTree, solver: SolverArg, opts: BendersOptions) -> Result<SolveOutcome> {
    Ok(match solver {
        SolverArg::Extensive => solve_extensive(tree)?,
        SolverArg::Benders => solve_benders(tree, opts)?,
        SolverArg::Both => {
            let ext = solve_extensive(tree)?;
            let ben = solve_benders(tree, opts)?;
            let rel = (ext.objective - ben.objective).abs() / ext.objective.abs().max(1.0);
            eprintln!("extensive objective {:.16e}", ext.objective);
            eprintln!("benders objective {:.16e} (gap {:.3e}, {} passes)", ben.objective, ben.gap, ben.iterations);
            eprintln!("relative difference {rel:.3e}");
            if rel > opts.tol {
                bail!("solvers disagree: relative difference {rel:.3e}");
            }
            ext
        }
    })
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let tree = args.inst.load()?;
    if let Some(p) = &args.lp_dump {
        let ext = build_extensive(&tree);
        fs::write(p, write_cplex_lp(&ext.lp, Some(&ext.names)))?;
    }
    let opts = BendersOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let outcome = solve_with(&tree, args.solver, opts)?;
    let json = to_json(&SolutionReport::new(&tree, &outcome));
    if args.out.is_some() {
        println!("objective {:.16e}", outcome.objective);
    }
    write_output(args.out.as_deref(), &json)
}

fn cmd_classify(args: &ClassifyArgs) -> Result<u8> {
    let tree = args.inst.load()?;
    let opts: ClassifyOptions = args.c2_rule.into();
    let outcome = solve_extensive(&tree)?;
    let mut report = classify_report(&tree, &outcome, opts)?;
    if args.oracle {
        let nodes = (1..tree.len())
            .into_par_iter()
            .map(|i| assess_node(&tree, &outcome, i))
            .collect::<drotree::Result<Vec<_>>>()?;
        let paths = tree
            .leaves()
            .into_par_iter()
            .map(|l| assess_leaf(&tree, &outcome, l))
            .collect::<drotree::Result<Vec<_>>>()?;
        report.attach_oracle(&nodes, &paths);
    }
    if let Some(p) = &args.dot {
        fs::write(p, report.to_dot(&tree)).with_context(|| format!("writing {}", p.display()))?;
    }
    let s = &report.summary;
    let json = to_json(&report);
    if args.out.is_some() {
        println!(
            "realizations: {} effective, {} ineffective, {} unidentified",
            s.effective, s.ineffective, s.unidentified
        );
        println!(
            "paths: {} effective, {} ineffective, {} unidentified",
            s.paths_effective, s.paths_ineffective, s.paths_unidentified
        );
        if let Some(d) = s.oracle_disagreements {
            println!("oracle disagreements: {d}");
        }
    }
    write_output(args.out.as_deref(), &json)?;
    if args.strict && report.disagreements() > 0 {
        eprintln!("error: {} labels disagree with the oracle", report.disagreements());
        return Ok(4);
    }
    Ok(0)
}

fn cmd_assess(args: &AssessArgs) -> Result<()> {
    let tree = args.inst.load()?;
    let outcome = solve_extensive(&tree)?;
    let report = match (&args.removal.paths, &args.removal.realizations) {
        (Some(ids), None) => {
            let set = RemovalSet::paths(ids);
            let r = assess_paths(&tree, &set, &outcome)?;
            AssessmentReport {
                removal: set,
                body: AssessmentBody::Single(AssessmentEntry::from(&r)),
            }
        }
        (None, Some(ids)) => {
            let set = RemovalSet::realizations(ids);
            let rs = assess_realizations(&tree, &set, &outcome)?;
            AssessmentReport {
                removal: set,
                body: AssessmentBody::PerNode {
                    results: rs.iter().map(AssessmentEntry::from).collect(),
                },
            }
        }
        _ => unreachable!("clap enforces exactly one removal kind"),
    };
    write_output(args.out.as_deref(), &to_json(&report))
}

/// Points of `start:stop:step`, rounded to 12 decimals.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| usage(format!("bad grid `{spec}`: {e}")))?;
    let [a, b, step] = parts[..] else {
        return Err(usage(format!("grid `{spec}` must be start:stop:step")));
    };
    if !(step > 0.0) || a > b || a < 0.0 || b > 1.0 {
        return Err(usage(format!("grid `{spec}` needs 0 <= start <= stop <= 1 and step > 0")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let tree = load_instance(&args.instance).with_context(|| format!("loading {}", args.instance.display()))?;
    let grid = parse_grid(&args.gamma)?;
    let solver = match args.solver {
        SolverArg::Benders => SolverKind::Benders,
        _ => SolverKind::Extensive,
    };
    let opts: ClassifyOptions = args.c2_rule.into();
    let rows = grid
        .par_iter()
        .map(|&g| sweep_point(&tree, g, solver, opts))
        .collect::<drotree::Result<Vec<SweepRow>>>()?;
    write_output(args.out.as_deref(), &sweep_csv(&rows))
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let tree = match (&args.kind.random, args.kind.water) {
        (Some(spec), None) => {
            let nums: Vec<u64> = spec
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| usage(format!("bad --random `{spec}`: {e}")))?;
            let [seed, stages, branching] = nums[..] else {
                return Err(usage(format!("--random `{spec}` must be seed,stages,branching")));
            };
            let mut p = RandomParams::new(seed, stages as usize, branching as usize, args.gamma);
            p.n_vars = args.n_vars;
            p.dependence = args.dependence;
            gen_random(&p)?
        }
        (None, Some(seed)) => {
            let mut p = WaterParams::new(seed);
            p.gamma = args.gamma;
            p.asymmetric = !args.symmetric;
            gen_water_analog(&p)?
        }
        _ => unreachable!("clap enforces exactly one generator"),
    };
    let text = serde_json::to_string_pretty(&tree.to_file())? + "\n";
    fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} nodes to {}", tree.len(), args.out.display());
    Ok(())
}

/// Marker for errors that map to the usage exit status.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: String) -> anyhow::Error {
    anyhow!(Usage(msg))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InstanceInfeasible | Error::InstanceUnbounded) => 3,
        Some(
            Error::Io(_)
            | Error::Parse(_)
            | Error::Validation { .. }
            | Error::UnknownNode(_)
            | Error::StageOutOfRange { .. }
            | Error::MixedStages(..)
            | Error::MissingXiField { .. }
            | Error::InvalidRemoval(_)
            | Error::ParamOutOfRange(_),
        ) => 2,
        _ => 1,
    }
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .or_else(|| std::env::var("DROTREE_JOBS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs(&cli)).build_global() {
        log::warn!("thread pool: {e}");
    }
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| 0),
        Command::Classify(a) => cmd_classify(a),
        Command::Assess(a) => cmd_assess(a).map(|_| 0),
        Command::Sweep(a) => cmd_sweep(a).map(|_| 0),
        Command::Gen(a) => cmd_gen(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
