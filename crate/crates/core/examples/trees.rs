//! Lists rooted trees with their invariants and the per-order counts.
//!
//! Usage: `cargo run --example trees -- [max_order]`

use rkdesign::trees::{cumulative_counts, enumerate_trees};

fn main() -> rkdesign::Result<()> {
    let max_order: usize = std::env::args().nth(1).map_or(5, |s| s.parse().expect("order"));
    let levels = enumerate_trees(max_order)?;
    for (p, level) in levels.iter().enumerate() {
        println!("order {}: {} trees", p + 1, level.len());
        for (tree, inv) in level {
            println!(
                "  {:<20} gamma={:<6} alpha={:<4} sigma={}",
                tree.to_string(),
                inv.gamma,
                inv.alpha,
                inv.sigma
            );
        }
    }
    println!("cumulative counts: {:?}", cumulative_counts(max_order)?);
    Ok(())
}
