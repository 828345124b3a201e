//! Fits local and global error slopes for the shipped fixtures.

use rkdesign::ode::{global_order, local_order, TestProblem};
use rkdesign::tableau::ButcherTableau;

fn main() -> rkdesign::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let problem = TestProblem::by_name("quadratic")?;
    for name in ["euler", "midpoint", "heun", "rk4", "ev33_1", "ev44_1"] {
        let tableau = ButcherTableau::load(format!("{dir}/{name}.json"))?;
        let local = local_order(&tableau, &problem, 0.1, 6)?;
        let global = global_order(&tableau, &problem, 0.1, 6)?;
        println!(
            "{name:<9} local slope {:.3}  global slope {:.3}",
            local.slope, global.slope
        );
    }
    Ok(())
}
