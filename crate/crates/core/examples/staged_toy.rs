//! The generic staged solver on a two-equation toy system:
//! reach the unit circle, then the diagonal, then minimize `|x|`.
//!
//! Usage: `cargo run --release --example staged_toy -- [seed]`

use rkdesign::es::EsConfig;
use rkdesign::solver::{solve_staged, StagedProblem};

fn main() -> rkdesign::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
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
        seed,
        ..Default::default()
    };
    let out = solve_staged(&problem, &es)?;
    for (archive, run) in out.archives.iter().zip(&out.stage_runs) {
        println!(
            "stage {}: {} points in the tube after {} generations ({:?})",
            archive.order(),
            archive.len(),
            run.generations,
            run.termination
        );
    }
    match (&out.final_run, out.failed_stage) {
        (Some(run), _) => {
            let p = &run.best_point;
            println!("final: x = {:.12}, y = {:.12}, |x| = {:.12}", p[0], p[1], run.best_fitness);
            println!("target: +-{:.12}", std::f64::consts::FRAC_1_SQRT_2);
        }
        (None, Some(stage)) => println!("stage {stage} found no feasible point"),
        (None, None) => unreachable!(),
    }
    Ok(())
}
