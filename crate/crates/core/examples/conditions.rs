//! Builds the order-condition system of a 3-stage explicit method and
//! evaluates it on Heun's third-order method.

use rkdesign::conditions::ConditionSystem;
use rkdesign::tableau::ButcherTableau;

fn main() -> rkdesign::Result<()> {
    let system = ConditionSystem::new(3, 3, true)?;
    println!("{} parameters: {:?}", system.dimension(), ButcherTableau::parameter_labels(3, true));
    for tc in system.trees() {
        println!(
            "order {}  {:<12} sum w Phi = 1/{:<3} weight {:.6}",
            tc.tree.order(),
            tc.tree.to_string(),
            tc.gamma,
            tc.weight
        );
    }
    // Heun's third-order method.
    let heun3 = ButcherTableau::new(
        vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0 / 3.0, 0.0, 0.0],
            vec![0.0, 2.0 / 3.0, 0.0],
        ],
        vec![0.25, 0.0, 0.75],
        true,
    )?;
    let eval = system.evaluate(&heun3)?;
    for (tc, e) in system.trees().iter().zip(&eval.errors) {
        println!("e({}) = {e:+.3e}", tc.tree);
    }
    for (p, m) in eval.metrics.iter().enumerate() {
        println!("order {} metric {m:.3e} (threshold {:.3e})", p + 1, system.thresholds().get(p + 1));
    }
    println!("fitness F_3 = {:.6e}", system.fitness_of(&eval));
    Ok(())
}
