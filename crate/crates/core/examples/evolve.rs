//! Searches explicit methods order by order and prints what each cycle found.
//!
//! Usage: `cargo run --release --example evolve -- [stages] [population] [seed]`

use rkdesign::solver::{evolve_runge_kutta, RkSearchConfig};

fn main() -> rkdesign::Result<()> {
    let mut args = std::env::args().skip(1);
    let stages: usize = args.next().map_or(3, |s| s.parse().expect("stages"));
    let population: usize = args.next().map_or(200, |s| s.parse().expect("population"));
    let seed: u64 = args.next().map_or(42, |s| s.parse().expect("seed"));

    let mut config = RkSearchConfig::new(stages, true);
    config.es.population = population;
    config.es.parents = population / 2;
    config.es.max_iterations = 3000;
    config.es.seed = seed;

    let started = std::time::Instant::now();
    let report = evolve_runge_kutta(&config)?;
    for cycle in &report.cycles {
        println!(
            "cycle q={}: {} points of order {}",
            cycle.order,
            cycle.new_solutions,
            cycle.order + 1
        );
        for run in &cycle.runs {
            println!(
                "  seeds={:4} generations={:5} best={:.3e} {:?}",
                run.seeded_from, run.generations, run.best_fitness, run.termination
            );
        }
    }
    for archive in &report.archives {
        println!("order {}: {} archived", archive.order(), archive.len());
    }
    println!("highest order reached: {:?}", report.max_order);
    if let Some(next) = &report.next_order {
        println!("smallest order-{} errors found:", next.order);
        for (tree, e) in next.trees.iter().zip(&next.errors) {
            println!("  e({tree}) = {e:.6e}");
        }
    }
    if let Some(front) = &report.pareto {
        println!("pareto front: {} members", front.members.len());
    }
    println!("elapsed: {:.2?}", started.elapsed());
    Ok(())
}
