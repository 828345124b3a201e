//! Runs a short search for 3-stage methods and prints the non-dominated
//! order-3 points under their order-4 error coefficients.

use rkdesign::solver::{cycle, pareto_front, Archive, RkSearchConfig};

fn main() -> rkdesign::Result<()> {
    let mut config = RkSearchConfig::new(3, true);
    config.es.population = 200;
    config.es.parents = 100;
    config.es.max_iterations = 2000;
    config.es.seed = 7;

    let mut order2 = Archive::new(2, config.archive_capacity);
    let found = cycle(&config, 2, &mut order2)?;
    println!("{} order-3 points", found.new_archive.len());

    let front = pareto_front(&found.new_archive, 3, true)?;
    println!("{} on the front; columns: {:?}", front.members.len(), front.trees);
    for m in &front.members {
        let errs: Vec<String> = m.errors.iter().map(|e| format!("{e:+.4e}")).collect();
        println!("F={:.4e}  [{}]", m.fitness, errs.join(", "));
    }
    Ok(())
}
