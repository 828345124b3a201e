//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every criterion is reported even
//! when an earlier one fails; the process exits non-zero if any criterion
//! fails.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rkdesign::conditions::{error_coefficient, is_feasible_to_order, ConditionSystem, Thresholds};
use rkdesign::es::EsConfig;
use rkdesign::ode::{global_order, local_order, TestProblem};
use rkdesign::solver::{dominates, non_dominated, read_jsonl, solve_staged, StagedProblem};
use rkdesign::tableau::ButcherTableau;
use rkdesign::trees::{cumulative_counts, enumerate_trees, trees_by_order, RootedTree};

type Check = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cli(args: &[&str]) -> (Output, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_rkdesign"))
        .args(args)
        .env_remove("RK_EVOLVE_THREADS")
        .output()
        .expect("run rkdesign");
    (out, start.elapsed())
}

fn stdout_json(out: &Output) -> Result<serde_json::Value, String> {
    serde_json::from_slice(&out.stdout).map_err(|e| format!("stdout is not JSON: {e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tree_counts() -> Check {
    let expected = [1u64, 1, 2, 4, 9, 20, 48, 115, 286, 719];
    let (out, elapsed) = cli(&["trees", "--max-order", "10", "--format", "json"]);
    ensure(out.status.success(), || format!("exit status {}", out.status))?;
    let doc = stdout_json(&out)?;
    let counts: Vec<u64> = doc["counts"]
        .as_array()
        .ok_or("no counts")?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0))
        .collect();
    ensure(counts == expected, || format!("counts {counts:?}"))?;

    let (table, table_time) = cli(&["trees", "--max-order", "10"]);
    let text = String::from_utf8_lossy(&table.stdout);
    let last = text.lines().last().unwrap_or_default();
    let fields: Vec<&str> = last.split_whitespace().collect();
    ensure(fields.first() == Some(&"10") && fields.get(1) == Some(&"719"), || {
        format!("table ends with `{last}`")
    })?;
    let slowest = elapsed.max(table_time);
    ensure(slowest < Duration::from_secs(1), || format!("took {slowest:?}"))?;
    Ok(format!("counts {counts:?} in {slowest:.2?}"))
}

fn condition_counts() -> Check {
    let expected = [1usize, 2, 4, 8, 17, 37, 85, 200, 486, 1205];
    let cumulative = cumulative_counts(10).map_err(|e| e.to_string())?;
    ensure(cumulative == expected, || format!("cumulative {cumulative:?}"))?;
    let thresholds = Thresholds::default_for(10).map_err(|e| e.to_string())?;
    for (p, n) in expected.iter().enumerate() {
        let c = thresholds.get(p + 1);
        ensure(c == *n as f64 * 4e-15, || format!("c_{} = {c:e}", p + 1))?;
    }
    for (p, literal) in [(1, 4e-15), (4, 3.2e-14), (10, 4.82e-12)] {
        let c = thresholds.get(p);
        ensure(c == literal, || format!("c_{p} = {c:e}, expected {literal:e}"))?;
    }
    let system = ConditionSystem::new(3, 9, true).map_err(|e| e.to_string())?;
    let per_system: Vec<usize> = (1..=10).map(|p| system.trees_of_order(p).len()).collect();
    ensure(per_system == [1, 1, 2, 4, 9, 20, 48, 115, 286, 719], || {
        format!("condition system holds {per_system:?}")
    })?;
    Ok(format!("N_p {cumulative:?}, c_10 = {:e}", thresholds.get(10)))
}

/// Preorder parent indices (`None` for the root).
fn parents(tree: &RootedTree) -> Vec<Option<usize>> {
    fn walk(t: &RootedTree, parent: Option<usize>, out: &mut Vec<Option<usize>>) {
        let me = out.len();
        out.push(parent);
        for child in t.children() {
            walk(child, Some(me), out);
        }
    }
    let mut out = Vec::new();
    walk(tree, None, &mut out);
    out
}

/// Number of distinct labeled trees obtained by labeling the nodes with
/// `1..=n` so that labels increase away from the root.
fn brute_force_alpha(tree: &RootedTree) -> u64 {
    fn permute(
        k: usize,
        labels: &mut Vec<usize>,
        parents: &[Option<usize>],
        seen: &mut HashSet<Vec<(usize, usize)>>,
    ) {
        if k == labels.len() {
            let monotone = parents
                .iter()
                .enumerate()
                .all(|(i, p)| p.map_or(true, |p| labels[p] < labels[i]));
            if monotone {
                let mut edges: Vec<(usize, usize)> = parents
                    .iter()
                    .enumerate()
                    .filter_map(|(i, p)| p.map(|p| (labels[p], labels[i])))
                    .collect();
                edges.sort_unstable();
                seen.insert(edges);
            }
            return;
        }
        for i in k..labels.len() {
            labels.swap(k, i);
            permute(k + 1, labels, parents, seen);
            labels.swap(k, i);
        }
    }
    let parents = parents(tree);
    let mut labels: Vec<usize> = (0..parents.len()).collect();
    let mut seen = HashSet::new();
    permute(0, &mut labels, &parents, &mut seen);
    seen.len() as u64
}

fn tree_invariants() -> Check {
    let levels = enumerate_trees(10).map_err(|e| e.to_string())?;
    let mut checked = 0;
    let mut oracle = 0;
    for (tree, inv) in levels.iter().flatten() {
        let factorial: u64 = (1..=inv.order as u64).product();
        ensure(inv.alpha * inv.sigma * inv.gamma == factorial, || {
            format!("alpha*sigma*gamma != n! for {tree}")
        })?;
        checked += 1;
        if inv.order <= 6 {
            let brute = brute_force_alpha(tree);
            ensure(brute == inv.alpha, || {
                format!("alpha({tree}) = {} but brute force gives {brute}", inv.alpha)
            })?;
            oracle += 1;
        }
    }
    Ok(format!("identity on {checked} trees, labeling oracle on {oracle}"))
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

/// Dyadic probe points in `[-2, 2]` with few mantissa bits.
fn probe_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut state = seed;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) % 65) as f64 / 16.0 - 2.0
    };
    (0..count).map(|_| (0..dim).map(|_| next()).collect()).collect()
}

fn example_systems() -> Check {
    let mut worst = 0;

    // Two stages, explicit, order 2: x = (a21, w1, w2).
    let sys = ConditionSystem::new(2, 2, true).map_err(|e| e.to_string())?;
    let trees: Vec<(String, u64)> = sys
        .trees()
        .iter()
        .filter(|t| t.tree.order() <= 2)
        .map(|t| (t.tree.to_string(), t.gamma))
        .collect();
    ensure(trees == [("•".to_string(), 1), ("[•]".to_string(), 2)], || {
        format!("s=2 system {trees:?}")
    })?;
    let hand2: [fn(&[f64]) -> f64; 2] = [
        |x| 1.0 - (x[1] + x[2]),
        |x| 1.0 - 2.0 * (x[2] * x[0]),
    ];
    for x in probe_points(3, 200, 1) {
        let eval = sys.evaluate_params(&x);
        for (i, h) in hand2.iter().enumerate() {
            worst = worst.max(ulps(eval.errors[i], h(&x)));
        }
    }

    // Three stages, implicit, order 3: x = (a11..a33 row-major, w1..w3).
    let sys = ConditionSystem::new(3, 3, false).map_err(|e| e.to_string())?;
    let find = |shape: &str| -> Result<usize, String> {
        let tree: RootedTree = shape.parse().map_err(|e| format!("{e}"))?;
        sys.trees()
            .iter()
            .position(|t| t.tree == tree)
            .ok_or_else(|| format!("tree {shape} missing"))
    };
    let low: Vec<(u64, usize)> = sys
        .trees()
        .iter()
        .filter(|t| t.tree.order() <= 3)
        .map(|t| (t.gamma, t.tree.order()))
        .collect();
    ensure(low.len() == 4, || format!("s=3 system has {} equations", low.len()))?;
    let mut rhs: Vec<u64> = low.iter().map(|(g, _)| *g).collect();
    rhs.sort_unstable();
    ensure(rhs == [1, 2, 3, 6], || format!("right-hand sides 1/{rhs:?}"))?;
    let a = |x: &[f64], i: usize, j: usize| x[3 * i + j];
    let w = |x: &[f64], j: usize| x[9 + j];
    let hand3: Vec<(usize, Box<dyn Fn(&[f64]) -> f64>)> = vec![
        (find("•")?, Box::new(move |x| 1.0 - (0..3).map(|j| w(x, j)).sum::<f64>())),
        (
            find("[•]")?,
            Box::new(move |x| {
                let mut s = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        s += w(x, j) * a(x, j, k);
                    }
                }
                1.0 - 2.0 * s
            }),
        ),
        (
            find("[•,•]")?,
            Box::new(move |x| {
                let mut s = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            s += w(x, j) * a(x, j, k) * a(x, j, l);
                        }
                    }
                }
                1.0 - 3.0 * s
            }),
        ),
        (
            find("[[•]]")?,
            Box::new(move |x| {
                let mut s = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            s += w(x, j) * a(x, j, k) * a(x, k, l);
                        }
                    }
                }
                1.0 - 6.0 * s
            }),
        ),
    ];
    for x in probe_points(12, 200, 2) {
        let eval = sys.evaluate_params(&x);
        for (idx, h) in &hand3 {
            worst = worst.max(ulps(eval.errors[*idx], h(&x)));
        }
    }
    ensure(worst <= 2, || format!("residuals differ by {worst} ulp"))?;
    Ok(format!("400 probe points, max disagreement {worst} ulp"))
}

fn fixture_verification() -> Check {
    let start = Instant::now();
    let rk4 = fixture("rk4.json");
    let rk4 = rk4.to_str().unwrap();
    let (out, _) = cli(&["verify", "--tableau", rk4, "--order", "4", "--format", "json"]);
    ensure(out.status.code() == Some(0), || format!("rk4 order 4 exit {}", out.status))?;
    let doc = stdout_json(&out)?;
    let metrics = doc["metrics"].as_array().ok_or("no metrics")?;
    for line in metrics.iter().filter(|l| l["order"].as_u64().unwrap_or(99) <= 4) {
        let m = line["metric"].as_f64().ok_or("metric")?;
        ensure(m <= 1e-15, || format!("rk4 order-{} metric {m:e}", line["order"]))?;
    }
    let (out, _) = cli(&["verify", "--tableau", rk4, "--order", "5"]);
    ensure(out.status.code() == Some(1), || format!("rk4 order 5 exit {}", out.status))?;
    for i in 1..=9 {
        let path = fixture(&format!("ev44_{i}.json"));
        let (out, _) = cli(&[
            "verify",
            "--tableau",
            path.to_str().unwrap(),
            "--order",
            "4",
            "--tol",
            "1e-12",
        ]);
        ensure(out.status.code() == Some(0), || format!("ev44_{i} exit {}", out.status))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("rk4 passes 4 / fails 5, nine 4-stage fixtures pass, {elapsed:.2?}"))
}

fn empirical_order() -> Check {
    let start = Instant::now();
    let load = |name: &str| ButcherTableau::load(fixture(name)).map_err(|e| e.to_string());
    let problem = |name: &str| TestProblem::by_name(name).map_err(|e| e.to_string());
    let rk4 = global_order(&load("rk4.json")?, &problem("exp-decay")?, 0.1, 6)
        .map_err(|e| e.to_string())?
        .slope;
    let ev44 = local_order(&load("ev44_1.json")?, &problem("quadratic")?, 0.1, 6)
        .map_err(|e| e.to_string())?
        .slope;
    let ev33 = global_order(&load("ev33_1.json")?, &problem("quadratic")?, 0.1, 6)
        .map_err(|e| e.to_string())?
        .slope;
    let elapsed = start.elapsed();
    let summary = format!("rk4 global {rk4:.3}, ev44_1 local {ev44:.3}, ev33_1 global {ev33:.3}, {elapsed:.2?}");
    ensure((3.8..=4.2).contains(&rk4), || summary.clone())?;
    ensure((4.7..=5.3).contains(&ev44), || summary.clone())?;
    ensure((2.8..=3.2).contains(&ev33), || summary.clone())?;
    ensure(elapsed < Duration::from_secs(10), || summary.clone())?;
    Ok(summary)
}

const EVOLVE_ARGS: [&str; 9] = [
    "evolve", "--stages", "3", "--pop", "200", "--max-iters", "3000", "--seed", "42",
];

fn run_evolve(archive: &Path) -> Result<(serde_json::Value, Duration), String> {
    let mut args: Vec<&str> = EVOLVE_ARGS.to_vec();
    let archive = archive.to_str().unwrap();
    args.extend(["--archive", archive, "--format", "json"]);
    let (out, elapsed) = cli(&args);
    ensure(out.status.success(), || {
        format!("evolve exit {}: {}", out.status, String::from_utf8_lossy(&out.stderr))
    })?;
    Ok((stdout_json(&out)?, elapsed))
}

fn evolution(dir: &Path) -> Check {
    let archive = dir.join("run1.jsonl");
    let (doc, elapsed) = run_evolve(&archive)?;
    let q_max = doc["max_order"].as_u64();
    ensure(q_max == Some(3), || format!("q_max {q_max:?}"))?;
    let records = read_jsonl(&archive).map_err(|e| e.to_string())?;
    let thresholds = Thresholds::default_for(12).map_err(|e| e.to_string())?;
    let mut order3 = 0;
    for r in &records {
        let t = ButcherTableau::from_vector(&r.x, 3, true).map_err(|e| e.to_string())?;
        let report = is_feasible_to_order(&t, r.order, &thresholds).map_err(|e| e.to_string())?;
        ensure(report.feasible, || format!("archived point fails order {}: {:?}", r.order, r.x))?;
        if r.order == 3 {
            order3 += 1;
            ensure(report.lines.iter().all(|l| l.metric < l.threshold), || {
                "order-3 metrics above thresholds".into()
            })?;
        }
    }
    ensure(order3 >= 1, || "no order-3 point archived".into())?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "q_max 3, {order3} order-3 points, all {} records re-verified, {elapsed:.2?}",
        records.len()
    ))
}

fn staged_toy() -> Check {
    let start = Instant::now();
    let problem = StagedProblem::new(
        2,
        vec![
            Box::new(|p: &[f64]| p[0] * p[0] + p[1] * p[1] - 1.0),
            Box::new(|p: &[f64]| p[0] - p[1]),
        ],
        Box::new(|p: &[f64]| p[0].abs()),
    );
    let es = EsConfig {
        population: 100,
        parents: 50,
        max_iterations: 2000,
        seed: 42,
        ..Default::default()
    };
    let out = solve_staged(&problem, &es).map_err(|e| e.to_string())?;
    let run = out
        .final_run
        .ok_or_else(|| format!("stage {:?} failed", out.failed_stage))?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let p = &run.best_point;
    let dist = ((p[0] - h).powi(2) + (p[1] - h).powi(2)).sqrt();
    let elapsed = start.elapsed();
    ensure(dist <= 1e-3, || format!("final best {p:?} is {dist:e} away"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("final best ({:.9}, {:.9}), distance {dist:.1e}, {elapsed:.2?}", p[0], p[1]))
}

fn determinism(dir: &Path) -> Check {
    let first = dir.join("run1.jsonl");
    if !first.exists() {
        run_evolve(&first)?;
    }
    let second = dir.join("run2.jsonl");
    run_evolve(&second)?;
    let a = std::fs::read(&first).map_err(|e| e.to_string())?;
    let b = std::fs::read(&second).map_err(|e| e.to_string())?;
    ensure(!a.is_empty(), || "empty archive".into())?;
    ensure(a == b, || "archive files differ".into())?;
    Ok(format!("{} identical bytes", a.len()))
}

fn pareto() -> Check {
    // Hand-built pairs for the checker itself.
    ensure(dominates(&[1.0, 2.0, 3.0], &[1.0, 2.5, 3.0]), || "strict pair".into())?;
    ensure(!dominates(&[1.0, 2.0], &[1.0, 2.0]), || "equal points".into())?;
    ensure(!dominates(&[0.0, 3.0], &[1.0, 2.0]), || "crossing pair".into())?;
    let hand = vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![0.5, 4.0], vec![3.0, 3.0]];
    ensure(non_dominated(&hand) == [0, 2], || "hand-built front".into())?;

    let order4 = &trees_by_order(4).map_err(|e| e.to_string())?[3];
    let mut points = Vec::new();
    for i in 1..=6 {
        let t = ButcherTableau::load(fixture(&format!("ev33_{i}.json"))).map_err(|e| e.to_string())?;
        points.push(
            order4
                .iter()
                .map(|tree| error_coefficient(&t, tree).abs())
                .collect::<Vec<f64>>(),
        );
    }
    let front = non_dominated(&points);
    let mut pairs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i != j && dominates(p, q) {
                pairs.push(format!("{}>{}", i + 1, j + 1));
            }
        }
    }
    ensure(front.len() == points.len(), || {
        format!(
            "checker ok; only rows {:?} of 6 are non-dominated; dominating pairs {}",
            front.iter().map(|i| i + 1).collect::<Vec<_>>(),
            pairs.join(" ")
        )
    })?;
    Ok("checker ok; all six 3-stage rows mutually non-dominated".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let dir_path = dir.path().to_path_buf();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("tree counts", Box::new(tree_counts)),
        ("condition counts and thresholds", Box::new(condition_counts)),
        ("tree invariants", Box::new(tree_invariants)),
        ("example condition systems", Box::new(example_systems)),
        ("fixture verification", Box::new(fixture_verification)),
        ("empirical order", Box::new(empirical_order)),
        ("evolution at desk scale", {
            let d = dir_path.clone();
            Box::new(move || evolution(&d))
        }),
        ("staged solver toy problem", Box::new(staged_toy)),
        ("determinism", {
            let d = dir_path.clone();
            Box::new(move || determinism(&d))
        }),
        ("pareto front", Box::new(pareto)),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
