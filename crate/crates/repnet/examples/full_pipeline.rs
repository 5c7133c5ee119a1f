//! Run every stage end to end — net, perturbation, graph extraction,
//! schedule, hierarchy, analysis, distance, independent re-verification —
//! and hash the artifacts into a manifest. Rerunning with the same
//! configuration reproduces the manifest byte for byte.
//!
//!     cargo run --release --example full_pipeline

use repnet::config::RunConfig;
use repnet::pipeline::cmd_pipeline;
use repnet::report::MANIFEST_FILE;

fn main() -> repnet::Result<()> {
    let mut cfg = RunConfig::default();
    // A smaller window and depth than the shipped config, to finish fast.
    cfg.box_corners = vec![0.0, 0.0, 20.0, 20.0];
    cfg.depth = 2;
    cfg.lambda0 = 1.2;
    cfg.out = std::path::PathBuf::from("target/example-pipeline");

    let report = cmd_pipeline(&cfg)?;
    for c in &report.checks {
        println!("{} {}", if c.ok { "ok  " } else { "FAIL" }, c.name);
    }
    assert!(report.ok);

    let manifest = std::fs::read_to_string(cfg.out.join(MANIFEST_FILE))?;
    println!("\nmanifest ({} bytes):\n{manifest}", manifest.len());
    Ok(())
}
