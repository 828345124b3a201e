//! Checks the order of a tableau file, by default the classical RK4 fixture.
//!
//! Usage: `cargo run --example verify -- [tableau.json] [order] [tol]`

use rkdesign::conditions::{verify, Thresholds};
use rkdesign::tableau::ButcherTableau;
use rkdesign::trees::MAX_ORDER;

fn main() -> rkdesign::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rk4.json").into());
    let order: usize = args.next().map_or(4, |s| s.parse().expect("order"));
    let thresholds = match args.next() {
        Some(tol) => Thresholds::uniform(MAX_ORDER, tol.parse().expect("tol")),
        None => Thresholds::default_for(MAX_ORDER)?,
    };
    let tableau = ButcherTableau::load(&path)?;
    let report = verify(&tableau, order, &thresholds)?;
    for line in &report.metrics {
        println!(
            "order {}: metric {:.3e} threshold {:.3e} {}",
            line.order,
            line.metric,
            line.threshold,
            if line.pass { "pass" } else { "fail" }
        );
    }
    println!(
        "{path}: {} to order {order}",
        if report.feasible { "feasible" } else { "infeasible" }
    );
    Ok(())
}
