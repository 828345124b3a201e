//! Staged search over a chain of varieties `X_0 ⊇ X_1 ⊇ ... ⊇ X_c`.
//!
//! Stage `j` minimizes the weighted residual `H_j(x) = sum_{i<k_j} r_i |f_i(x)|`
//! starting from points archived by the previous stage. A point belongs to the
//! tube `eps(X_j)` when `H_k(x) < eps_k` for every `k <= j`; such points are
//! archived and seed the next stage.
//!
//! The Runge-Kutta specialization indexes stages by order: cycle `q` minimizes
//! the fitness `F_q` and archives every candidate that is feasible to order
//! `q + 1`. [`evolve_runge_kutta`] runs cycles `q = 2, 3, ...` until one of
//! them finds nothing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditions::{ConditionSystem, Evaluation, Thresholds, DEFAULT_AMPLIFICATION, DEFAULT_EPS_BASE};
use crate::error::{Error, Result};
use crate::es::{minimize_with, EsConfig, EsRun, Termination};
use crate::tableau::{parameter_count, ButcherTableau};
use crate::trees::MAX_ORDER;

pub const DEFAULT_ARCHIVE_CAPACITY: usize = 10_000;
pub const DEFAULT_RESTARTS: usize = 3;
pub const DEFAULT_PENALTY: f64 = 1e3;

/// One archived point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub order: usize,
    pub x: Vec<f64>,
    /// Stage (or order) index to residual metric, starting at 1.
    pub metrics: BTreeMap<usize, f64>,
    pub fitness: f64,
    #[serde(rename = "gen")]
    pub generation: usize,
    /// Seed of the ES run that found the point.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Feasible points of one stage, deduplicated bitwise.
///
/// Once `capacity` points are stored, a new point replaces the worst stored one
/// only if its fitness is strictly smaller.
#[derive(Clone, Debug)]
pub struct Archive {
    order: usize,
    capacity: usize,
    records: Vec<ArchiveRecord>,
    seen: HashSet<Vec<u64>>,
    worst: BinaryHeap<Key>,
}

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl Archive {
    pub fn new(order: usize, capacity: usize) -> Self {
        Archive {
            order,
            capacity: capacity.max(1),
            records: Vec::new(),
            seen: HashSet::new(),
            worst: BinaryHeap::new(),
        }
    }

    /// Builds an archive from records of `order`, ignoring all others.
    pub fn from_records(order: usize, records: impl IntoIterator<Item = ArchiveRecord>) -> Self {
        let mut archive = Archive::new(order, usize::MAX);
        for r in records.into_iter().filter(|r| r.order == order) {
            archive.insert(r);
        }
        archive
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ArchiveRecord] {
        &self.records
    }

    /// Returns whether the record was stored.
    pub fn insert(&mut self, record: ArchiveRecord) -> bool {
        let key = bits(&record.x);
        if self.seen.contains(&key) {
            return false;
        }
        if self.records.len() < self.capacity {
            self.worst.push(Key(record.fitness, self.records.len()));
            self.records.push(record);
            self.seen.insert(key);
            return true;
        }
        let Some(&Key(worst, slot)) = self.worst.peek() else {
            return false;
        };
        if record.fitness.total_cmp(&worst) != Ordering::Less {
            return false;
        }
        self.worst.pop();
        self.seen.remove(&bits(&self.records[slot].x));
        self.worst.push(Key(record.fitness, slot));
        self.records[slot] = record;
        self.seen.insert(key);
        true
    }

    /// Record with the smallest fitness; the earliest one on ties.
    pub fn best(&self) -> Option<&ArchiveRecord> {
        self.records
            .iter()
            .reduce(|a, b| if b.fitness < a.fitness { b } else { a })
    }

    /// Up to `count` points drawn uniformly without replacement.
    pub fn sample_points(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let k = count.min(self.records.len());
        sample(rng, self.records.len(), k)
            .into_iter()
            .map(|i| self.records[i].x.clone())
            .collect()
    }
}

/// Writes every record of `archives`, in the given order, one JSON object per
/// line.
pub fn write_jsonl<'a>(path: impl AsRef<Path>, archives: impl IntoIterator<Item = &'a Archive>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for archive in archives {
        for record in archive.records() {
            serde_json::to_writer(&mut out, record).map_err(|e| Error::json(path, e))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<ArchiveRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(records)
}

/// `a` dominates `b`: no worse in every coordinate and better in one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of the points not dominated by any other point, in input order.
pub fn non_dominated(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, p)| j != i && dominates(p, &points[i]))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ParetoMember {
    pub x: Vec<f64>,
    pub fitness: f64,
    /// Signed `e(t)` for every tree of order `order + 1`.
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParetoSet {
    pub order: usize,
    pub stages: usize,
    pub explicit: bool,
    /// Bracket notation of the trees behind `errors`.
    pub trees: Vec<String>,
    pub members: Vec<ParetoMember>,
}

/// Non-dominated archive points under `|e(t)|`, `t` of order `q + 1`, where
/// `q` is the archive order. Members are sorted by fitness (stable).
pub fn pareto_front(archive: &Archive, stages: usize, explicit: bool) -> Result<ParetoSet> {
    let q = archive.order();
    let system = ConditionSystem::new(stages, q, explicit)?;
    let range = system.order_range(q + 1);
    let trees = system.trees()[range.clone()]
        .iter()
        .map(|tc| tc.tree.to_string())
        .collect();
    let mut candidates = Vec::with_capacity(archive.len());
    for record in archive.records() {
        if record.x.len() != system.dimension() {
            return Err(Error::Dimension {
                context: "archive point",
                expected: system.dimension(),
                found: record.x.len(),
            });
        }
        let eval = system.evaluate_params(&record.x);
        candidates.push(ParetoMember {
            x: record.x.clone(),
            fitness: record.fitness,
            errors: eval.errors[range.clone()].to_vec(),
        });
    }
    let objectives: Vec<Vec<f64>> = candidates
        .iter()
        .map(|m| m.errors.iter().map(|e| e.abs()).collect())
        .collect();
    let keep: HashSet<usize> = non_dominated(&objectives).into_iter().collect();
    let mut members: Vec<ParetoMember> = candidates
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, m)| m)
        .collect();
    members.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    Ok(ParetoSet {
        order: q,
        stages,
        explicit,
        trees,
        members,
    })
}

/// Derives an independent run seed from a master seed and two indices.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(master) ^ a) ^ b.rotate_left(32))
}

pub type Generator = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Generators `f_1..f_m` split into `c` groups by the cumulative ends `k_j`.
pub struct StagedProblem {
    pub dimension: usize,
    pub generators: Vec<Generator>,
    /// Strictly increasing, last entry equal to the number of generators.
    pub group_ends: Vec<usize>,
    /// Point of the simplex, one weight per generator.
    pub weights: Vec<f64>,
    /// Tube radius of each stage.
    pub radii: Vec<f64>,
    /// Objective of the final run over the last tube.
    pub objective: Generator,
    /// Multiplier on every stage residual outside its tube in the final run.
    pub penalty: f64,
    /// Same for the residuals of earlier stages during stage runs. `None`
    /// leaves the plain `H_j`, which already contains the earlier generators.
    pub stage_penalty: Option<f64>,
    /// Divide `H_j` by the weight of its own generators.
    pub renormalize: bool,
}

/// `k_i = i * floor(m / v)` for `0 < i < v`, closed by `k_v = m`.
pub fn even_split(m: usize, v: usize) -> Vec<usize> {
    let v = v.clamp(1, m.max(1));
    let step = m / v;
    let mut ends: Vec<usize> = (1..v).map(|i| i * step).collect();
    ends.push(m);
    ends.dedup();
    ends
}

impl StagedProblem {
    /// One stage per generator, uniform weights and radii `1e-10`.
    pub fn new(dimension: usize, generators: Vec<Generator>, objective: Generator) -> Self {
        let m = generators.len();
        StagedProblem {
            dimension,
            group_ends: even_split(m, m),
            weights: vec![1.0 / m.max(1) as f64; m],
            radii: vec![1e-10; m],
            generators,
            objective,
            penalty: DEFAULT_PENALTY,
            stage_penalty: None,
            renormalize: false,
        }
    }

    /// Regroups into `v` stages of equal size; radii are reset to the first
    /// radius.
    pub fn with_even_split(mut self, v: usize) -> Self {
        self.group_ends = even_split(self.generators.len(), v);
        let eps = self.radii.first().copied().unwrap_or(1e-10);
        self.radii = vec![eps; self.group_ends.len()];
        self
    }

    pub fn stages(&self) -> usize {
        self.group_ends.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.generators.len();
        if m == 0 || self.dimension == 0 {
            return Err(Error::Config("staged problem needs generators and a dimension".into()));
        }
        let ends_ok = self.group_ends.first().is_some_and(|&k| k >= 1)
            && self.group_ends.windows(2).all(|w| w[0] < w[1])
            && self.group_ends.last() == Some(&m);
        if !ends_ok {
            return Err(Error::Config(format!(
                "group ends {:?} must increase strictly from >= 1 to {m}",
                self.group_ends
            )));
        }
        if self.weights.len() != m {
            return Err(Error::Dimension {
                context: "generator weights",
                expected: m,
                found: self.weights.len(),
            });
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&r| !(r > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config("weights must be positive and sum to 1".into()));
        }
        if self.radii.len() != self.stages() {
            return Err(Error::Dimension {
                context: "tube radii",
                expected: self.stages(),
                found: self.radii.len(),
            });
        }
        if self.radii.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("tube radii must be positive".into()));
        }
        Ok(())
    }

    /// `H_1(x), ..., H_stages(x)`.
    pub fn residuals(&self, x: &[f64], stages: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(stages);
        let mut acc = 0.0;
        let mut weight = 0.0;
        let mut i = 0;
        for &end in &self.group_ends[..stages] {
            while i < end {
                acc += self.weights[i] * self.generators[i](x).abs();
                weight += self.weights[i];
                i += 1;
            }
            out.push(if self.renormalize { acc / weight } else { acc });
        }
        out
    }

    fn penalty_of(&self, factor: f64, h: &[f64]) -> f64 {
        h.iter()
            .zip(&self.radii)
            .filter(|(v, eps)| !(*v < *eps))
            .map(|(v, _)| factor * v)
            .sum()
    }
}

#[derive(Debug)]
pub struct StagedOutcome {
    /// `archives[j]` holds the points of `eps(X_{j+1})`.
    pub archives: Vec<Archive>,
    pub stage_runs: Vec<EsRun>,
    /// Absent when a stage failed.
    pub final_run: Option<EsRun>,
    /// First stage (1-based) that archived nothing.
    pub failed_stage: Option<usize>,
}

/// Minimizes `H_1`, ..., `H_c` in turn, each stage seeded only from the
/// previous stage's archive, then minimizes the objective from the last one.
///
/// Targets of stage `j` are `eps_j / 4` (best) and `eps_j` (mean); the final
/// run uses the targets of `es`.
pub fn solve_staged(problem: &StagedProblem, es: &EsConfig) -> Result<StagedOutcome> {
    problem.validate()?;
    es.validate()?;
    let c = problem.stages();
    let mut archives: Vec<Archive> = Vec::with_capacity(c);
    let mut stage_runs = Vec::with_capacity(c);

    for stage in 1..=c {
        let run_seed = derive_seed(es.seed, stage as u64, 0);
        let seeds = match archives.last() {
            Some(prev) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(es.seed, stage as u64, 1));
                prev.sample_points(es.parents, &mut rng)
            }
            None => Vec::new(),
        };
        let eps = problem.radii[stage - 1];
        let config = EsConfig {
            seed: run_seed,
            target_best: eps / 4.0,
            target_mean: eps,
            ..es.clone()
        };
        let mut archive = Archive::new(stage, DEFAULT_ARCHIVE_CAPACITY);
        let run = minimize_with(
            |x| {
                let h = problem.residuals(x, stage);
                let extra = problem
                    .stage_penalty
                    .map_or(0.0, |factor| problem.penalty_of(factor, &h[..stage - 1]));
                (h[stage - 1] + extra, h)
            },
            problem.dimension,
            &seeds,
            &config,
            |cand, h| {
                if h.iter().zip(&problem.radii).all(|(v, eps)| v < eps) {
                    archive.insert(ArchiveRecord {
                        order: stage,
                        x: cand.x.to_vec(),
                        metrics: (1..).zip(h.iter().copied()).collect(),
                        fitness: h[stage - 1],
                        generation: cand.generation,
                        seed: run_seed,
                    });
                }
            },
        )?;
        stage_runs.push(run);
        let empty = archive.is_empty();
        archives.push(archive);
        if empty {
            return Ok(StagedOutcome {
                archives,
                stage_runs,
                final_run: None,
                failed_stage: Some(stage),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(es.seed, (c + 1) as u64, 1));
    let seeds = archives[c - 1].sample_points(es.parents, &mut rng);
    let config = EsConfig {
        seed: derive_seed(es.seed, (c + 1) as u64, 0),
        ..es.clone()
    };
    let final_run = minimize_with(
        |x| {
            let h = problem.residuals(x, c);
            ((problem.objective)(x) + problem.penalty_of(problem.penalty, &h), ())
        },
        problem.dimension,
        &seeds,
        &config,
        |_, _| {},
    )?;
    Ok(StagedOutcome {
        archives,
        stage_runs,
        final_run: Some(final_run),
        failed_stage: None,
    })
}

/// Settings of a Runge-Kutta search.
#[derive(Clone, Debug)]
pub struct RkSearchConfig {
    pub stages: usize,
    pub explicit: bool,
    pub start_order: usize,
    /// Population, budget and master seed; targets are set per cycle.
    pub es: EsConfig,
    pub thresholds: Thresholds,
    /// Extra runs per cycle after the first one.
    pub restarts: usize,
    pub archive_capacity: usize,
    /// Multiplier on order metrics `p <= q` that exceed `c_p`; `None` leaves
    /// the plain fitness.
    pub penalty: Option<f64>,
}

impl RkSearchConfig {
    pub fn new(stages: usize, explicit: bool) -> Self {
        RkSearchConfig {
            stages,
            explicit,
            start_order: 2,
            es: EsConfig::default(),
            thresholds: Thresholds::from_counts(MAX_ORDER, DEFAULT_EPS_BASE, DEFAULT_AMPLIFICATION)
                .expect("default thresholds"),
            restarts: DEFAULT_RESTARTS,
            archive_capacity: DEFAULT_ARCHIVE_CAPACITY,
            penalty: None,
        }
    }

    pub fn dimension(&self) -> usize {
        parameter_count(self.stages, self.explicit)
    }

    /// Largest cycle order `q` the thresholds and tree tables allow.
    pub fn highest_cycle(&self) -> usize {
        (MAX_ORDER - 1).min(self.thresholds.max_order()) - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::Bounds {
                what: "stages",
                value: 0,
                min: 1,
                max: usize::MAX,
            });
        }
        if !(1..=self.highest_cycle()).contains(&self.start_order) {
            return Err(Error::Bounds {
                what: "start order",
                value: self.start_order,
                min: 1,
                max: self.highest_cycle(),
            });
        }
        self.es.validate()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub seeded_from: usize,
    pub generations: usize,
    pub evaluations: usize,
    pub best_fitness: f64,
    pub termination: Termination,
}

#[derive(Debug)]
pub struct CycleOutcome {
    /// Points feasible to order `q + 1`.
    pub new_archive: Archive,
    pub runs: Vec<RunSummary>,
    pub success: bool,
}

/// One cycle at order `q`: minimizes `F_q` and archives every evaluated point
/// that is feasible to order `q + 1`.
///
/// Each of the `1 + restarts` runs draws its seeds from `old_archive` as it was
/// when the cycle started, and stops once the best fitness drops below
/// `c_{q+1} / 4`. Order-`q` feasible points met on the way are added to
/// `old_archive`.
pub fn cycle(config: &RkSearchConfig, q: usize, old_archive: &mut Archive) -> Result<CycleOutcome> {
    config.validate()?;
    if !(1..=config.highest_cycle()).contains(&q) {
        return Err(Error::Bounds {
            what: "cycle order",
            value: q,
            min: 1,
            max: config.highest_cycle(),
        });
    }
    let system = ConditionSystem::new(config.stages, q + 1, config.explicit)?
        .with_thresholds(config.thresholds.clone())?;
    let c_next = config.thresholds.get(q + 1);
    let mut new_archive = Archive::new(q + 1, config.archive_capacity);
    let mut runs = Vec::with_capacity(config.restarts + 1);

    let objective = |x: &[f64]| -> (f64, Evaluation) {
        let eval = system.evaluate_params(x);
        let mut f = system.fitness_through(&eval, q);
        if let Some(factor) = config.penalty {
            for p in 1..=q {
                let m = eval.metrics[p - 1];
                if !(m < config.thresholds.get(p)) {
                    f += factor * m;
                }
            }
        }
        (f, eval)
    };

    let inherited = old_archive.clone();
    for restart in 0..=config.restarts {
        let run_seed = derive_seed(config.es.seed, q as u64, restart as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, u64::MAX, 0));
        let seeds = inherited.sample_points(config.es.parents, &mut rng);
        let es = EsConfig {
            seed: run_seed,
            target_best: c_next / 4.0,
            target_mean: 0.0,
            ..config.es.clone()
        };
        let seeded_from = seeds.len();
        let run = minimize_with(objective, system.dimension(), &seeds, &es, |cand, eval| {
            let reached = system.feasible_order(&eval, q + 1);
            if reached < q {
                return;
            }
            let (archive, order) = if reached == q + 1 {
                (&mut new_archive, q + 1)
            } else {
                (&mut *old_archive, q)
            };
            archive.insert(ArchiveRecord {
                order,
                x: cand.x.to_vec(),
                metrics: (1..=order).zip(eval.metrics.iter().copied()).collect(),
                fitness: system.fitness_through(&eval, order),
                generation: cand.generation,
                seed: run_seed,
            });
        })?;
        runs.push(RunSummary {
            seed: run_seed,
            seeded_from,
            generations: run.generations,
            evaluations: run.evaluations,
            best_fitness: run.best_fitness,
            termination: run.termination,
        });
    }
    let success = !new_archive.is_empty();
    Ok(CycleOutcome {
        new_archive,
        runs,
        success,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CycleSummary {
    pub order: usize,
    pub runs: Vec<RunSummary>,
    pub new_solutions: usize,
    pub success: bool,
}

/// Error coefficients of the best point of the top archive at the next order.
#[derive(Clone, Debug, Serialize)]
pub struct NextOrderErrors {
    pub order: usize,
    pub x: Vec<f64>,
    pub fitness: f64,
    pub trees: Vec<String>,
    pub errors: Vec<f64>,
    pub metric: f64,
}

#[derive(Debug)]
pub struct EvolutionReport {
    pub stages: usize,
    pub explicit: bool,
    /// One archive per order touched, ascending; some may be empty.
    pub archives: Vec<Archive>,
    pub cycles: Vec<CycleSummary>,
    /// Highest order with a non-empty archive.
    pub max_order: Option<usize>,
    pub next_order: Option<NextOrderErrors>,
    pub pareto: Option<ParetoSet>,
}

impl EvolutionReport {
    pub fn archive(&self, order: usize) -> Option<&Archive> {
        self.archives.iter().find(|a| a.order() == order)
    }
}

/// Runs cycles `q = start_order, start_order + 1, ...` until a cycle archives
/// nothing (or the tree tables run out).
pub fn evolve_runge_kutta(config: &RkSearchConfig) -> Result<EvolutionReport> {
    config.validate()?;
    let mut archives: BTreeMap<usize, Archive> = BTreeMap::new();
    archives.insert(
        config.start_order,
        Archive::new(config.start_order, config.archive_capacity),
    );
    let mut cycles = Vec::new();
    let mut q = config.start_order;
    loop {
        let old = archives.get_mut(&q).expect("archive of the current order");
        let outcome = cycle(config, q, old)?;
        cycles.push(CycleSummary {
            order: q,
            runs: outcome.runs,
            new_solutions: outcome.new_archive.len(),
            success: outcome.success,
        });
        archives.insert(q + 1, outcome.new_archive);
        if !outcome.success || q >= config.highest_cycle() {
            break;
        }
        q += 1;
    }

    let max_order = archives
        .values()
        .filter(|a| !a.is_empty())
        .map(Archive::order)
        .max();
    let mut next_order = None;
    let mut pareto = None;
    if let Some(top) = max_order.map(|q| &archives[&q]) {
        let q = top.order();
        if q < MAX_ORDER {
            let system = ConditionSystem::new(config.stages, q, config.explicit)?;
            let best = top.best().expect("non-empty archive");
            let eval = system.evaluate_params(&best.x);
            let range = system.order_range(q + 1);
            next_order = Some(NextOrderErrors {
                order: q + 1,
                x: best.x.clone(),
                fitness: best.fitness,
                trees: system.trees()[range.clone()]
                    .iter()
                    .map(|tc| tc.tree.to_string())
                    .collect(),
                errors: eval.errors[range].to_vec(),
                metric: eval.metrics[q],
            });
            pareto = Some(pareto_front(top, config.stages, config.explicit)?);
        }
    }
    Ok(EvolutionReport {
        stages: config.stages,
        explicit: config.explicit,
        archives: archives.into_values().collect(),
        cycles,
        max_order,
        next_order,
        pareto,
    })
}

/// Rebuilds the tableau of an archived point.
pub fn record_tableau(record: &ArchiveRecord, stages: usize, explicit: bool) -> Result<ButcherTableau> {
    ButcherTableau::from_vector(&record.x, stages, explicit)
}
