//! Elitist covariance-adapting evolution strategy.
//!
//! Each generation recombines the best `parents` points of the population
//! into a weighted mean, samples `population` offspring from
//! `N(mean, step^2 C)`, and keeps the best `population` points of the union of
//! the old population and the offspring (plus-selection).
//!
//! * Covariance: rank-mu update from the best offspring plus a rank-one update
//!   along the evolution path of the mean ([`Adaptation::Full`]); the diagonal
//!   of that update only ([`Adaptation::Diagonal`]); or none
//!   ([`Adaptation::Isotropic`], a plain (mu+lambda)-ES).
//! * Step size: smoothed success rule. An offspring succeeds when it beats the
//!   worst parent of its generation.
//! * Randomness: `ChaCha8Rng` seeded with `seed_from_u64(config.seed)`; all
//!   sampling happens on the calling thread, so results do not depend on the
//!   number of evaluation threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adaptation {
    Full,
    Diagonal,
    Isotropic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsConfig {
    /// Offspring per generation and population size (lambda).
    pub population: usize,
    /// Recombined parents (mu).
    pub parents: usize,
    /// Generation budget.
    pub max_iterations: usize,
    /// Stop once the best fitness drops below this value.
    pub target_best: f64,
    /// Stop once the population mean fitness drops below this value.
    pub target_mean: f64,
    pub initial_step: f64,
    pub seed: u64,
    /// Stop after this many generations without an improvement of the best
    /// fitness larger than `stagnation_tol`. `None` disables the rule.
    pub stagnation: Option<usize>,
    pub stagnation_tol: f64,
    pub adaptation: Adaptation,
    /// Evaluation threads; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population: 1000,
            parents: 500,
            max_iterations: 100_000,
            target_best: 0.0,
            target_mean: 0.0,
            initial_step: 1.0,
            seed: 0,
            stagnation: Some(500),
            stagnation_tol: 1e-18,
            adaptation: Adaptation::Full,
            threads: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.parents == 0 || self.parents > self.population {
            return Err(Error::Config(format!(
                "need 1 <= parents <= population, got parents={} population={}",
                self.parents, self.population
            )));
        }
        if !(self.target_best >= 0.0 && self.target_mean >= 0.0) {
            return Err(Error::Config("targets must be non-negative".into()));
        }
        if !(self.initial_step >= 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config("initial step must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TargetHit,
    Budget,
    Stagnation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness ever seen (non-increasing).
    pub best: f64,
    pub mean: f64,
    pub std: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EsRun {
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    pub generations: usize,
    pub termination: Termination,
}

/// An evaluated point handed to observers.
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'a> {
    pub x: &'a [f64],
    pub fitness: f64,
    pub generation: usize,
}

pub fn minimize<F>(objective: F, dim: usize, seeds: &[Vec<f64>], config: &EsConfig) -> Result<EsRun>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    minimize_with(|x| (objective(x), ()), dim, seeds, config, |_, _| {})
}

/// Like [`minimize`], but the objective also returns a payload that is handed
/// to `observer` together with every evaluated point, in evaluation order
/// (seeds first).
pub fn minimize_with<F, T, O>(
    objective: F,
    dim: usize,
    seeds: &[Vec<f64>],
    config: &EsConfig,
    mut observer: O,
) -> Result<EsRun>
where
    F: Fn(&[f64]) -> (f64, T) + Sync,
    T: Send,
    O: FnMut(Candidate<'_>, T),
{
    config.validate()?;
    if dim == 0 {
        return Err(Error::Dimension {
            context: "search space",
            expected: 1,
            found: 0,
        });
    }
    if let Some(bad) = seeds.iter().find(|s| s.len() != dim) {
        return Err(Error::Dimension {
            context: "seed point",
            expected: dim,
            found: bad.len(),
        });
    }

    let pool = build_pool(config.threads)?;
    let evaluate = |points: &[Vec<f64>]| -> (Vec<f64>, Vec<T>) {
        pool.install(|| {
            points
                .par_iter()
                .map(|x| {
                    let (f, payload) = objective(x);
                    (sanitize(f), payload)
                })
                .unzip()
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lambda = config.population;
    let mut strategy = Strategy::new(dim, config);

    let mut init: Vec<Vec<f64>> = seeds.to_vec();
    while init.len() < lambda {
        init.push(
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    config.initial_step * z
                })
                .collect(),
        );
    }
    let (init_fitness, payloads) = evaluate(&init);
    let mut evaluations = init.len();
    for ((x, &f), payload) in init.iter().zip(&init_fitness).zip(payloads) {
        observer(
            Candidate {
                x,
                fitness: f,
                generation: 0,
            },
            payload,
        );
    }
    let mut population: Vec<Member> = init
        .into_iter()
        .zip(init_fitness)
        .map(|(x, fitness)| Member { x, fitness })
        .collect();
    population.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    population.truncate(lambda);

    let mut best = population[0].clone();
    let mut history = vec![stats(0, best.fitness, &population, strategy.step)];
    let mut last_improvement = 0;
    let mut generation = 0;

    let termination = loop {
        if best.fitness < config.target_best
            || (config.target_mean > 0.0 && history.last().unwrap().mean < config.target_mean)
        {
            break Termination::TargetHit;
        }
        if generation >= config.max_iterations {
            break Termination::Budget;
        }
        if let Some(window) = config.stagnation {
            if generation - last_improvement >= window {
                break Termination::Stagnation;
            }
        }
        generation += 1;

        let mean = strategy.recombine(&population);
        let offspring = strategy.sample(&mean, lambda, &mut rng);
        let (fitness, payloads) = evaluate(&offspring);
        evaluations += offspring.len();
        for ((x, &f), payload) in offspring.iter().zip(&fitness).zip(payloads) {
            observer(
                Candidate {
                    x,
                    fitness: f,
                    generation,
                },
                payload,
            );
        }

        let worst_parent = population[config.parents.min(population.len()) - 1].fitness;
        let successes = fitness.iter().filter(|&&f| f < worst_parent).count();

        let mut ranked: Vec<usize> = (0..offspring.len()).collect();
        ranked.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));

        let mut merged = std::mem::take(&mut population);
        merged.extend(
            offspring
                .iter()
                .zip(&fitness)
                .map(|(x, &f)| Member { x: x.clone(), fitness: f }),
        );
        // Stable: on ties, older members stay ahead.
        merged.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        merged.truncate(lambda);
        population = merged;

        let new_mean = strategy.recombine(&population);
        strategy.adapt(
            &mean,
            &new_mean,
            ranked.iter().map(|&i| offspring[i].as_slice()),
            successes as f64 / lambda as f64,
        );

        let prev_best = best.fitness;
        if population[0].fitness < best.fitness {
            best = population[0].clone();
        }
        if prev_best - best.fitness > config.stagnation_tol {
            last_improvement = generation;
        }
        history.push(stats(generation, best.fitness, &population, strategy.step));
    };

    Ok(EsRun {
        best_point: best.x,
        best_fitness: best.fitness,
        history,
        evaluations,
        generations: generation,
        termination,
    })
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

#[derive(Clone, Debug)]
struct Member {
    x: Vec<f64>,
    fitness: f64,
}

fn stats(generation: usize, best: f64, population: &[Member], step: f64) -> GenerationStats {
    let n = population.len() as f64;
    let mean = population.iter().map(|m| m.fitness).sum::<f64>() / n;
    let var = population
        .iter()
        .map(|m| (m.fitness - mean).powi(2))
        .sum::<f64>()
        / n;
    GenerationStats {
        generation,
        best,
        mean,
        std: var.sqrt(),
        step,
    }
}

/// Mutation distribution `N(mean, step^2 * C)` and its adaptation state.
struct Strategy {
    dim: usize,
    adaptation: Adaptation,
    weights: Vec<f64>,
    mu_eff: f64,
    step: f64,
    cov: DMatrix<f64>,
    /// `C = B diag(D^2) B^T`
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    path: DVector<f64>,
    success: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    c_p: f64,
    target_success: f64,
    damping: f64,
}

impl Strategy {
    fn new(dim: usize, config: &EsConfig) -> Self {
        let mu = config.parents;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).max(0.0))
            .collect();
        let raw = if raw.iter().sum::<f64>() > 0.0 {
            raw
        } else {
            vec![1.0; mu]
        };
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let n = dim as f64;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let mut c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let mut c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff))
            .max(0.0);
        if config.adaptation == Adaptation::Diagonal {
            let boost = (n + 2.0) / 3.0;
            c_1 = (c_1 * boost).min(0.5);
            c_mu = (c_mu * boost).min(1.0 - c_1);
        }

        Strategy {
            dim,
            adaptation: config.adaptation,
            weights,
            mu_eff,
            step: config.initial_step,
            cov: DMatrix::identity(dim, dim),
            basis: DMatrix::identity(dim, dim),
            scales: DVector::from_element(dim, 1.0),
            path: DVector::zeros(dim),
            success: 0.2,
            c_c,
            c_1,
            c_mu,
            c_p: 0.2,
            target_success: 0.2,
            damping: 1.0 + n / 8.0,
        }
    }

    fn recombine(&self, population: &[Member]) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        let mut total = 0.0;
        for (w, member) in self.weights.iter().zip(population) {
            total += w;
            for (m, x) in mean.iter_mut().zip(&member.x) {
                *m += w * x;
            }
        }
        // Short populations only happen with fewer members than parents.
        if total != 1.0 {
            mean.iter_mut().for_each(|m| *m /= total);
        }
        mean
    }

    fn sample(&self, mean: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let z = DVector::<f64>::from_iterator(
                    self.dim,
                    (0..self.dim).map(|_| StandardNormal.sample(rng)),
                );
                let y = &self.basis * z.component_mul(&self.scales);
                mean.iter()
                    .zip(y.iter())
                    .map(|(m, yi)| m + self.step * yi)
                    .collect()
            })
            .collect()
    }

    fn adapt<'a>(
        &mut self,
        old_mean: &[f64],
        new_mean: &[f64],
        ranked_offspring: impl Iterator<Item = &'a [f64]>,
        success_rate: f64,
    ) {
        self.success = (1.0 - self.c_p) * self.success + self.c_p * success_rate;
        if self.step > 0.0 && self.adaptation != Adaptation::Isotropic {
            let shift = DVector::from_iterator(
                self.dim,
                old_mean
                    .iter()
                    .zip(new_mean)
                    .map(|(o, n)| (n - o) / self.step),
            );
            self.path = &self.path * (1.0 - self.c_c)
                + shift * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt();

            let mut rank_mu = DMatrix::<f64>::zeros(self.dim, self.dim);
            for (w, x) in self.weights.iter().zip(ranked_offspring) {
                let y = DVector::from_iterator(
                    self.dim,
                    x.iter().zip(old_mean).map(|(xi, m)| (xi - m) / self.step),
                );
                rank_mu += (&y * y.transpose()) * *w;
            }
            let rank_one = &self.path * self.path.transpose();
            let mut cov = &self.cov * (1.0 - self.c_1 - self.c_mu)
                + rank_one * self.c_1
                + rank_mu * self.c_mu;
            if self.adaptation == Adaptation::Diagonal {
                cov = DMatrix::from_diagonal(&cov.diagonal());
            }
            self.set_covariance(cov);
        }
        self.step *= ((self.success - self.target_success)
            / (self.damping * (1.0 - self.target_success)))
            .exp();
    }

    /// Installs a new covariance, moving its average scale into the step so
    /// that `trace(C) == dim`.
    fn set_covariance(&mut self, cov: DMatrix<f64>) {
        let mut cov = (&cov + cov.transpose()) * 0.5;
        let scale = cov.trace() / self.dim as f64;
        if scale.is_finite() && scale > 0.0 {
            cov /= scale;
            self.step *= scale.sqrt();
        }
        let eig = SymmetricEigen::new(cov.clone());
        let ok = eig.eigenvalues.iter().all(|v| v.is_finite() && *v > 0.0)
            && eig.eigenvalues.max() / eig.eigenvalues.min() < 1e28;
        if !ok {
            // Lost positive definiteness or conditioning: restart from a sphere.
            self.cov = DMatrix::identity(self.dim, self.dim);
            self.basis = DMatrix::identity(self.dim, self.dim);
            self.scales = DVector::from_element(self.dim, 1.0);
            self.path.fill(0.0);
            return;
        }
        self.scales = eig.eigenvalues.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        self.cov = cov;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn small(seed: u64) -> EsConfig {
        EsConfig {
            population: 40,
            parents: 20,
            max_iterations: 2000,
            seed,
            ..EsConfig::default()
        }
    }

    #[test]
    fn sphere_reaches_target() {
        let config = EsConfig {
            target_best: 1e-12,
            ..small(1)
        };
        let run = minimize(sphere, 6, &[], &config).unwrap();
        assert_eq!(run.termination, Termination::TargetHit);
        assert!(run.best_fitness < 1e-12);
    }

    #[test]
    fn best_is_monotone() {
        let run = minimize(sphere, 4, &[], &small(3)).unwrap();
        for pair in run.history.windows(2) {
            assert!(pair[1].best <= pair[0].best);
        }
    }

    #[test]
    fn seeded_minimizer_is_kept() {
        let seed = vec![0.0; 5];
        let config = EsConfig {
            max_iterations: 5,
            ..small(4)
        };
        let run = minimize(sphere, 5, &[seed], &config).unwrap();
        assert_eq!(run.best_fitness, 0.0);
    }

    #[test]
    fn zero_step_keeps_fitness_constant() {
        let config = EsConfig {
            population: 10,
            parents: 1,
            max_iterations: 20,
            initial_step: 0.0,
            stagnation: None,
            ..EsConfig::default()
        };
        let start = vec![0.5, -0.25, 1.0];
        // Minimum at 2*start; the other initial points sit at the origin.
        let f = |x: &[f64]| x.iter().zip(&start).map(|(v, s)| (v - 2.0 * s).powi(2)).sum::<f64>();
        let run = minimize(f, 3, &[start.clone()], &config).unwrap();
        assert_eq!(run.best_point, start);
        assert!(run.history.iter().all(|g| g.best == f(&start)));
        assert!(run.history.iter().all(|g| g.step == 0.0));
    }

    #[test]
    fn mu_equal_lambda_still_runs() {
        let config = EsConfig {
            population: 12,
            parents: 12,
            max_iterations: 200,
            ..EsConfig::default()
        };
        let run = minimize(sphere, 3, &[], &config).unwrap();
        assert!(run.best_fitness < sphere(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = minimize(sphere, 4, &[], &small(9)).unwrap();
        let b = minimize(sphere, 4, &[], &small(9)).unwrap();
        assert_eq!(a, b);
        let c = minimize(sphere, 4, &[], &EsConfig { threads: 1, ..small(9) }).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn budget_bounds_evaluations() {
        let seeds = vec![vec![1.0; 3]; 7];
        let config = EsConfig {
            max_iterations: 15,
            stagnation: None,
            ..small(2)
        };
        let run = minimize(|x: &[f64]| sphere(x) + 1.0, 3, &seeds, &config).unwrap();
        assert_eq!(run.termination, Termination::Budget);
        assert!(run.evaluations <= config.population * (run.generations + 1) + seeds.len());
    }

    #[test]
    fn seed_dimension_mismatch() {
        let err = minimize(sphere, 3, &[vec![0.0; 2]], &small(0));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn invalid_parent_count() {
        let config = EsConfig {
            population: 4,
            parents: 5,
            ..EsConfig::default()
        };
        assert!(matches!(minimize(sphere, 2, &[], &config), Err(Error::Config(_))));
    }

    #[test]
    fn isotropic_and_diagonal_modes_converge() {
        for adaptation in [Adaptation::Isotropic, Adaptation::Diagonal] {
            let config = EsConfig {
                adaptation,
                target_best: 1e-10,
                ..small(5)
            };
            let run = minimize(sphere, 5, &[], &config).unwrap();
            assert_eq!(run.termination, Termination::TargetHit, "{adaptation:?}");
        }
    }
}
