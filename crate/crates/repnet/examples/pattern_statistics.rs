//! Occurrence statistics of vertex patterns: the occurrence set of the
//! base point's R-ball, its covering radius (the repetitivity radius), and
//! the pairwise persistence depth table.
//!
//!     cargo run --example pattern_statistics

use repnet::graph::{omega_set, persistence_depth, repetitivity_radius, ColoredGraph};

fn main() -> repnet::Result<()> {
    // A 2-periodic coloring of a path: every interior pattern recurs with
    // period 2, so omega(R) <= 2 wherever the ball stays interior.
    let n = 200;
    let colors: Vec<u32> = (0..n).map(|v| 1 + (v % 2) as u32).collect();
    let g = ColoredGraph::path(n, colors)?;
    let p = (n / 2) as u32;
    // Candidate centers are restricted to the interior: within 10 of an
    // endpoint the ball sees the boundary and the pattern is different.
    let window: Vec<u32> = (10..n as u32 - 10).collect();
    for radius in [0u32, 2, 5, 10] {
        let omega = omega_set(&g, p, radius, &window)?;
        let w = repetitivity_radius(&g, p, radius, &window)?;
        println!("R = {radius}: {} occurrences, omega(R) = {w}", omega.len());
        assert!(w <= 2.0);
    }

    // Injective colors: no pattern recurs even at radius 0.
    let inj = ColoredGraph::path(12, (1..=12).collect())?;
    let sample: Vec<u32> = (0..12).collect();
    let table = persistence_depth(&inj, &sample, 4);
    println!(
        "injective path: deepest off-diagonal agreement {} (histogram {:?})",
        table.max_offdiag_depth, table.histogram
    );
    assert_eq!(table.max_offdiag_depth, -1, "no off-diagonal pair agrees at radius 0");
    Ok(())
}
