//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a flat TOML file whose keys are
//! flag names (`max-iters = 3000`); flags given on the command line win.
//! Exit codes: 0 success (or feasible), 1 infeasible `verify`, 2 usage or
//! configuration error, 3 runtime error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::conditions::{verify, ConditionSystem, Thresholds, DEFAULT_AMPLIFICATION, DEFAULT_EPS_BASE};
use crate::error::Error;
use crate::es::EsConfig;
use crate::ode::{global_order, local_order, ErrorKind, OrderEstimate, TestProblem};
use crate::solver::{
    evolve_runge_kutta, pareto_front, read_jsonl, write_jsonl, Archive, ParetoSet, RkSearchConfig,
    DEFAULT_ARCHIVE_CAPACITY, DEFAULT_RESTARTS,
};
use crate::tableau::{explicit_stages_for, ButcherTableau};
use crate::trees::{enumerate_trees, MAX_ORDER};

pub const THREADS_ENV: &str = "RK_EVOLVE_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "rkdesign", version, about = "Design and verify Runge-Kutta methods")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Flat TOML file with flag values; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rooted trees up to an order, with their invariants.
    Trees(TreesArgs),
    /// The order-condition system of a method shape.
    Conditions(ConditionsArgs),
    /// Check the order of a tableau.
    Verify(VerifyArgs),
    /// Search for methods, order by order.
    Evolve(EvolveArgs),
    /// Non-dominated points of an archive.
    Pareto(ParetoArgs),
    /// Fit the convergence slope on a test problem.
    EmpiricalOrder(EmpiricalArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct TreesArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_order: Option<usize>,
    /// Print only the counts.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    counts_only: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ConditionsArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stages: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    implicit: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_base: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    amp: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct VerifyArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tableau: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    /// One threshold for every order instead of the defaults.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_base: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    amp: Option<f64>,
    /// Also fit the local error slope on the `quadratic` problem.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    empirical: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EvolveArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stages: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    implicit: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    start_order: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pop: Option<usize>,
    /// Defaults to half the population.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parents: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_base: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    amp: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    restarts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<usize>,
    /// Multiplier on order metrics above their threshold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    penalty: Option<f64>,
    /// Generations without improvement before a run stops; 0 disables.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stagnation: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_step: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    archive: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ParetoArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    archive: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    /// Inferred from the point length when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stages: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    implicit: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EmpiricalArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tableau: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    h0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<usize>,
    #[arg(long, conflicts_with = "global")]
    #[serde(default, skip_serializing_if = "is_false")]
    local: bool,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    global: bool,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

fn required<T>(value: Option<T>, flag: &str) -> Outcome<T> {
    value.ok_or_else(|| Failure::Usage(format!("missing required flag --{flag}")))
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn load_config(path: Option<&Path>) -> Outcome<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(Error::io(path, e)))?;
    text.parse::<toml::Table>()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Overlays flags onto the file table and re-reads the result, so unknown or
/// ill-typed keys in the file are rejected.
fn overlay<T: Serialize + DeserializeOwned>(flags: T, mut file: toml::Table) -> Outcome<T> {
    let given = toml::Table::try_from(&flags)
        .map_err(|e| Failure::Usage(format!("flags: {e}")))?;
    file.extend(given);
    toml::Value::Table(file)
        .try_into()
        .map_err(|e| Failure::Usage(format!("config: {e}")))
}

fn dispatch(cli: Cli) -> Outcome<i32> {
    let mut file = load_config(cli.config.as_deref())?;
    let file_format = match file.remove("format") {
        Some(v) => Some(
            v.try_into::<Format>()
                .map_err(|e| Failure::Usage(format!("config: format: {e}")))?,
        ),
        None => None,
    };
    let format = cli.format.or(file_format).unwrap_or_default();
    let mut out = String::new();
    let code = match cli.command {
        Command::Trees(a) => trees_cmd(overlay(a, file)?, format, &mut out)?,
        Command::Conditions(a) => conditions_cmd(overlay(a, file)?, format, &mut out)?,
        Command::Verify(a) => verify_cmd(overlay(a, file)?, format, &mut out)?,
        Command::Evolve(a) => evolve_cmd(overlay(a, file)?, format, &mut out)?,
        Command::Pareto(a) => pareto_cmd(overlay(a, file)?, format, &mut out)?,
        Command::EmpiricalOrder(a) => empirical_cmd(overlay(a, file)?, format, &mut out)?,
    };
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(out.as_bytes());
    let _ = stdout.flush();
    Ok(code)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn json<T: Serialize>(value: &T, out: &mut String) {
    out.push_str(&serde_json::to_string_pretty(value).expect("serializable report"));
    out.push('\n');
}

fn thresholds(eps_base: Option<f64>, amp: Option<f64>) -> Outcome<Thresholds> {
    Thresholds::from_counts(
        MAX_ORDER,
        eps_base.unwrap_or(DEFAULT_EPS_BASE),
        amp.unwrap_or(DEFAULT_AMPLIFICATION),
    )
    .map_err(|e| Failure::Usage(e.to_string()))
}

fn check_range(what: &str, value: usize, min: usize, max: usize) -> Outcome<()> {
    if (min..=max).contains(&value) {
        Ok(())
    } else {
        usage(format!("--{what} {value} is out of range [{min}, {max}]"))
    }
}

#[derive(Serialize)]
struct TreeRow {
    tree: String,
    encoding: Vec<u8>,
    order: usize,
    gamma: u64,
    alpha: u64,
    sigma: u64,
}

#[derive(Serialize)]
struct TreesReport {
    max_order: usize,
    counts: Vec<usize>,
    cumulative: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    trees: Vec<TreeRow>,
}

fn trees_cmd(a: TreesArgs, format: Format, out: &mut String) -> Outcome<i32> {
    let max_order = a.max_order.unwrap_or(10);
    check_range("max-order", max_order, 1, MAX_ORDER)?;
    let levels = enumerate_trees(max_order)?;
    let counts: Vec<usize> = levels.iter().map(Vec::len).collect();
    let cumulative = counts
        .iter()
        .scan(0, |acc, n| {
            *acc += n;
            Some(*acc)
        })
        .collect();
    let trees = if a.counts_only {
        Vec::new()
    } else {
        levels
            .iter()
            .flatten()
            .map(|(t, inv)| TreeRow {
                tree: t.to_string(),
                encoding: t.encoding().to_vec(),
                order: inv.order,
                gamma: inv.gamma,
                alpha: inv.alpha,
                sigma: inv.sigma,
            })
            .collect()
    };
    let report = TreesReport {
        max_order,
        counts,
        cumulative,
        trees,
    };
    match format {
        Format::Json => json(&report, out),
        Format::Table => {
            if !report.trees.is_empty() {
                let _ = writeln!(out, "{:<12} {:>5} {:>10} {:>8} {:>8}  tree", "encoding", "order", "gamma", "alpha", "sigma");
                for r in &report.trees {
                    let enc: String = r.encoding.iter().map(|d| d.to_string()).collect();
                    let _ = writeln!(out, "{:<12} {:>5} {:>10} {:>8} {:>8}  {}", enc, r.order, r.gamma, r.alpha, r.sigma, r.tree);
                }
                out.push('\n');
            }
            let _ = writeln!(out, "{:>5} {:>8} {:>10}", "order", "trees", "cumulative");
            for (i, (n, c)) in report.counts.iter().zip(&report.cumulative).enumerate() {
                let _ = writeln!(out, "{:>5} {:>8} {:>10}", i + 1, n, c);
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct ConditionRow {
    tree: String,
    order: usize,
    gamma: u64,
    alpha: u64,
    weight: f64,
}

#[derive(Serialize)]
struct ConditionsReport {
    stages: usize,
    explicit: bool,
    order: usize,
    dimension: usize,
    thresholds: Vec<f64>,
    trees: Vec<ConditionRow>,
}

fn conditions_cmd(a: ConditionsArgs, format: Format, out: &mut String) -> Outcome<i32> {
    let stages = required(a.stages, "stages")?;
    let order = required(a.order, "order")?;
    check_range("stages", stages, 1, 64)?;
    check_range("order", order, 1, MAX_ORDER - 1)?;
    let thr = thresholds(a.eps_base, a.amp)?;
    let system = ConditionSystem::new(stages, order, !a.implicit)?.with_thresholds(thr.clone())?;
    let report = ConditionsReport {
        stages,
        explicit: !a.implicit,
        order,
        dimension: system.dimension(),
        thresholds: thr.values()[..=order].to_vec(),
        trees: system
            .trees()
            .iter()
            .map(|tc| ConditionRow {
                tree: tc.tree.to_string(),
                order: tc.tree.order(),
                gamma: tc.gamma,
                alpha: tc.alpha,
                weight: tc.weight,
            })
            .collect(),
    };
    match format {
        Format::Json => json(&report, out),
        Format::Table => {
            let kind = if report.explicit { "explicit" } else { "implicit" };
            let _ = writeln!(out, "{kind} s={stages}, order {order}: {} parameters, trees up to order {}", report.dimension, order + 1);
            let _ = writeln!(out, "{:>5} {:>10} {:>8} {:>24}  condition", "order", "gamma", "alpha", "weight");
            for r in &report.trees {
                let _ = writeln!(out, "{:>5} {:>10} {:>8} {:>24}  sum w Phi({}) = 1/{}", r.order, r.gamma, r.alpha, num(r.weight), r.tree, r.gamma);
            }
            out.push('\n');
            let _ = writeln!(out, "{:>5} {:>24}", "order", "threshold");
            for (p, c) in report.thresholds.iter().enumerate() {
                let _ = writeln!(out, "{:>5} {:>24}", p + 1, num(*c));
            }
        }
    }
    Ok(0)
}

fn verify_cmd(a: VerifyArgs, format: Format, out: &mut String) -> Outcome<i32> {
    let path = required(a.tableau, "tableau")?;
    let order = required(a.order, "order")?;
    check_range("order", order, 1, MAX_ORDER - 1)?;
    let thr = match a.tol {
        Some(t) if t > 0.0 => Thresholds::uniform(MAX_ORDER, t),
        Some(t) => return usage(format!("--tol must be positive, got {t}")),
        None => thresholds(a.eps_base, a.amp)?,
    };
    let tableau = ButcherTableau::load(&path)?;
    let mut report = verify(&tableau, order, &thr)?;
    if a.empirical {
        let problem = TestProblem::by_name("quadratic")?;
        report.empirical_local_slope = Some(local_order(&tableau, &problem, 0.1, 6)?.slope);
    }
    match format {
        Format::Json => json(&report, out),
        Format::Table => {
            let _ = writeln!(out, "{:>5} {:>24} {:>24}  pass", "order", "metric", "threshold");
            for l in &report.metrics {
                let mark = if l.order > order { "-" } else if l.pass { "yes" } else { "no" };
                let _ = writeln!(out, "{:>5} {:>24} {:>24}  {mark}", l.order, num(l.metric), num(l.threshold));
            }
            out.push('\n');
            let _ = writeln!(out, "{:>5} {:>24}  tree", "order", "e(t)");
            for t in &report.trees {
                let _ = writeln!(out, "{:>5} {:>24}  {}", t.order, num(t.error), t.tree);
            }
            out.push('\n');
            let _ = writeln!(out, "fitness {}", num(report.fitness));
            if let Some(slope) = report.empirical_local_slope {
                let _ = writeln!(out, "local error slope {}", num(slope));
            }
            let verdict = if report.feasible { "feasible" } else { "infeasible" };
            let _ = writeln!(out, "order {order}: {verdict}");
        }
    }
    Ok(if report.feasible { 0 } else { 1 })
}

#[derive(Serialize)]
struct ArchiveCount {
    order: usize,
    points: usize,
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    stages: usize,
    explicit: bool,
    seed: u64,
    archive: String,
    max_order: Option<usize>,
    archives: Vec<ArchiveCount>,
    cycles: &'a [crate::solver::CycleSummary],
    next_order: &'a Option<crate::solver::NextOrderErrors>,
    pareto_members: usize,
}

fn evolve_cmd(a: EvolveArgs, format: Format, out: &mut String) -> Outcome<i32> {
    let stages = required(a.stages, "stages")?;
    let archive_path = required(a.archive, "archive")?;
    check_range("stages", stages, 1, 64)?;
    let population = a.pop.unwrap_or(1000);
    let parents = a.parents.unwrap_or((population / 2).max(1));
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a count, got `{v}`")))?,
        Err(_) => 0,
    };
    let defaults = EsConfig::default();
    let mut config = RkSearchConfig::new(stages, !a.implicit);
    config.start_order = a.start_order.unwrap_or(2);
    config.thresholds = thresholds(a.eps_base, a.amp)?;
    config.restarts = a.restarts.unwrap_or(DEFAULT_RESTARTS);
    config.archive_capacity = a.capacity.unwrap_or(DEFAULT_ARCHIVE_CAPACITY);
    config.penalty = a.penalty;
    config.es = EsConfig {
        population,
        parents,
        max_iterations: a.max_iters.unwrap_or(defaults.max_iterations),
        seed: a.seed.unwrap_or(0),
        initial_step: a.initial_step.unwrap_or(defaults.initial_step),
        stagnation: match a.stagnation {
            Some(0) => None,
            Some(n) => Some(n),
            None => defaults.stagnation,
        },
        threads,
        ..defaults
    };
    if let Err(e) = config.validate() {
        return usage(e.to_string());
    }
    let report = evolve_runge_kutta(&config)?;
    write_jsonl(&archive_path, &report.archives)?;

    let summary = EvolveSummary {
        stages,
        explicit: report.explicit,
        seed: config.es.seed,
        archive: archive_path.display().to_string(),
        max_order: report.max_order,
        archives: report
            .archives
            .iter()
            .map(|a| ArchiveCount {
                order: a.order(),
                points: a.len(),
            })
            .collect(),
        cycles: &report.cycles,
        next_order: &report.next_order,
        pareto_members: report.pareto.as_ref().map_or(0, |p| p.members.len()),
    };
    match format {
        Format::Json => json(&summary, out),
        Format::Table => {
            for c in &report.cycles {
                let _ = writeln!(out, "cycle q={}: {} points of order {}", c.order, c.new_solutions, c.order + 1);
                for r in &c.runs {
                    let _ = writeln!(
                        out,
                        "  run seed={:<20} seeds={:<5} generations={:<6} best={} {:?}",
                        r.seed, r.seeded_from, r.generations, num(r.best_fitness), r.termination
                    );
                }
            }
            let _ = writeln!(out, "{:>5} {:>8}", "order", "points");
            for a in &summary.archives {
                let _ = writeln!(out, "{:>5} {:>8}", a.order, a.points);
            }
            match report.max_order {
                Some(q) => {
                    let _ = writeln!(out, "q_max = {q}");
                }
                None => {
                    let _ = writeln!(out, "q_max = none");
                }
            }
            if let Some(next) = &report.next_order {
                let _ = writeln!(out, "best order-{} error coefficients:", next.order);
                for (t, e) in next.trees.iter().zip(&next.errors) {
                    let _ = writeln!(out, "  {:>24}  {t}", num(*e));
                }
            }
            let _ = writeln!(out, "pareto front: {} members", summary.pareto_members);
            let _ = writeln!(out, "archive written to {}", summary.archive);
        }
    }
    Ok(0)
}

fn pareto_cmd(a: ParetoArgs, format: Format, out: &mut String) -> Outcome<i32> {
    let path = required(a.archive, "archive")?;
    let order = required(a.order, "order")?;
    check_range("order", order, 1, MAX_ORDER - 1)?;
    let records = read_jsonl(&path)?;
    let archive = Archive::from_records(order, records);
    let explicit = !a.implicit;
    let set = match archive.records().first() {
        None => ParetoSet {
            order,
            stages: a.stages.unwrap_or(0),
            explicit,
            trees: Vec::new(),
            members: Vec::new(),
        },
        Some(first) => {
            let len = first.x.len();
            let stages = match a.stages {
                Some(s) => s,
                None if explicit => explicit_stages_for(len)
                    .ok_or_else(|| Failure::Usage(format!("no explicit stage count has {len} parameters")))?,
                None => (1..=len)
                    .find(|s| s * (s + 1) == len)
                    .ok_or_else(|| Failure::Usage(format!("no implicit stage count has {len} parameters")))?,
            };
            pareto_front(&archive, stages, explicit)?
        }
    };
    if let Some(csv_path) = &a.out {
        write_csv(csv_path, &set)?;
    }
    match format {
        Format::Json => json(&set, out),
        Format::Table => {
            let _ = writeln!(
                out,
                "order {}: {} archived, {} non-dominated on |e(t)| of order {}",
                order,
                archive.len(),
                set.members.len(),
                order + 1
            );
            for m in &set.members {
                let errs: Vec<String> = m.errors.iter().map(|e| num(*e)).collect();
                let _ = writeln!(out, "  fitness {}  e = [{}]", num(m.fitness), errs.join(", "));
            }
            if let Some(p) = &a.out {
                let _ = writeln!(out, "csv written to {}", p.display());
            }
        }
    }
    Ok(0)
}

fn write_csv(path: &Path, set: &ParetoSet) -> Outcome<()> {
    let mut header: Vec<String> = if set.stages > 0 {
        ButcherTableau::parameter_labels(set.stages, set.explicit)
    } else {
        Vec::new()
    };
    header.push("fitness".into());
    if let Ok(system) = ConditionSystem::new(set.stages.max(1), set.order, set.explicit) {
        if set.stages > 0 {
            for tc in system.trees_of_order(set.order + 1) {
                let enc: String = tc.tree.encoding().iter().map(|d| d.to_string()).collect();
                header.push(format!("e_{enc}"));
            }
        }
    }
    let io = |e: csv::Error| {
        let e = match e.into_kind() {
            csv::ErrorKind::Io(e) => e,
            other => std::io::Error::other(format!("{other:?}")),
        };
        Failure::Runtime(Error::io(path, e))
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&header).map_err(io)?;
    for m in &set.members {
        let row = m.x.iter().chain(std::iter::once(&m.fitness)).chain(&m.errors).map(|v| num(*v));
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn empirical_cmd(a: EmpiricalArgs, format: Format, out: &mut String) -> Outcome<i32> {
    let path = required(a.tableau, "tableau")?;
    let name = a.problem.unwrap_or_else(|| "quadratic".into());
    let problem = TestProblem::by_name(&name).map_err(|e| Failure::Usage(e.to_string()))?;
    let h0 = a.h0.unwrap_or(0.1);
    let levels = a.levels.unwrap_or(6);
    if a.local && a.global {
        return usage("--local and --global are exclusive");
    }
    let tableau = ButcherTableau::load(&path)?;
    let estimate: OrderEstimate = if a.global {
        global_order(&tableau, &problem, h0, levels)?
    } else {
        local_order(&tableau, &problem, h0, levels)?
    };
    match format {
        Format::Json => json(&estimate, out),
        Format::Table => {
            let kind = match estimate.kind {
                ErrorKind::Local => "local",
                ErrorKind::Global => "global",
            };
            let _ = writeln!(out, "{kind} error on {}", estimate.problem);
            let _ = writeln!(out, "{:>24} {:>24}  fitted", "h", "error");
            for ((h, e), u) in estimate.steps.iter().zip(&estimate.errors).zip(&estimate.used) {
                let _ = writeln!(out, "{:>24} {:>24}  {}", num(*h), num(*e), if *u { "yes" } else { "no" });
            }
            let _ = writeln!(out, "slope {}", num(estimate.slope));
            let _ = writeln!(out, "fit residual {}", num(estimate.residual));
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_config_file() {
        let file: toml::Table = "pop = 50\nseed = 7\nimplicit = true".parse().unwrap();
        let flags = EvolveArgs {
            pop: Some(20),
            ..Default::default()
        };
        let merged = overlay(flags, file).ok().unwrap();
        assert_eq!(merged.pop, Some(20));
        assert_eq!(merged.seed, Some(7));
        assert!(merged.implicit);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let file: toml::Table = "populaton = 50".parse().unwrap();
        assert!(matches!(
            overlay(EvolveArgs::default(), file),
            Err(Failure::Usage(_))
        ));
    }

    #[test]
    fn ill_typed_config_values_are_rejected() {
        let file: toml::Table = "max-order = \"ten\"".parse().unwrap();
        assert!(overlay(TreesArgs::default(), file).is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["rkdesign", "trees", "--max-order", "13"]), 2);
        assert_eq!(run(["rkdesign", "frobnicate"]), 2);
        assert_eq!(run(["rkdesign", "verify", "--order", "4"]), 2);
    }

    #[test]
    fn missing_files_exit_with_three() {
        assert_eq!(
            run(["rkdesign", "verify", "--tableau", "/nonexistent/t.json", "--order", "2"]),
            3
        );
    }
}
