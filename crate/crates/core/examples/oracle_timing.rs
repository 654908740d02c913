//! Single-threaded cost of one exhaustive solve at a few grid sizes.
//!
//! `cargo run --release --example oracle_timing`

use std::time::Instant;

use hetnet_ee::dataset::{realize_channel, sample_seed};
use hetnet_ee::solver::ExhaustiveSolver;
use hetnet_ee::NetworkConfig;

fn main() {
    let cfg = NetworkConfig::reference_scenario();
    let runs = 10;
    for levels in [4, 10, 20] {
        let solver = ExhaustiveSolver::new(&cfg, levels);
        let start = Instant::now();
        let mut best = 0.0f64;
        for i in 0..runs {
            let h = realize_channel(&cfg, sample_seed(0, i));
            best = best.max(solver.solve_sequential(&h).ee);
        }
        println!(
            "L={levels:>2}: {:>9} candidates, {:?} per solve (best EE seen {best:.4e} bit/J)",
            solver.evaluations(),
            start.elapsed() / runs as u32
        );
    }
}
