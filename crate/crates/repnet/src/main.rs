//! Thin command-line front end: flag parsing and exit-code mapping only;
//! all behavior lives in [`repnet::pipeline`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use repnet::config::RunConfig;
use repnet::pipeline::{self, GdistArgs};
use repnet::report::Report;
use repnet::Result;

#[derive(Parser)]
#[command(
    name = "repnet",
    version,
    about = "Separated nets, corona-gap perturbations, colored-graph pattern \
             spaces and hierarchical net constructions"
)]
struct Cli {
    /// Flat `key = value` configuration file, read before flag overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for all artifacts (manifest.json included).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Ambient dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Window corners, low then high per axis: e.g. `0,0,50,50`.
    #[arg(long = "box", global = true)]
    box_corners: Option<String>,

    /// Separation scale of the generated net.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Claimed density bound of the generated net.
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Adjacency scale of the extracted graph (requires sigma >= 3 eta).
    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// Perturbation budget (requires epsilon < tau / 2).
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Base distortion of the schedule, in (1, sqrt 2).
    #[arg(long, global = true)]
    lambda0: Option<f64>,

    /// Number of schedule levels.
    #[arg(long, global = true)]
    depth: Option<usize>,

    /// Interior margin for boundary-sensitive checks.
    #[arg(long, global = true)]
    margin: Option<f64>,

    /// Largest radius probed by the metric-sandwich check.
    #[arg(long, global = true)]
    sandwich_radius: Option<f64>,

    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Extra `key=value` override (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the tau-separated eta-dense net and its certificate.
    Net,
    /// Open the corona gap around sigma by an epsilon-perturbation.
    Perturb,
    /// Extract the sigma-scale adjacency graph and check the metric sandwich.
    Graphify,
    /// Derive the parameter schedule and re-validate its inequalities.
    Schedule,
    /// Build and verify the level hierarchy on the auxiliary cycle.
    Hierarchy,
    /// Pattern statistics (occurrence sets, persistence) of the graph.
    Analyze,
    /// Pointed-ball agreement distance between two (graph, center) pairs.
    Gdist {
        /// First graph file (defaults to the pipeline's extracted graph).
        #[arg(long)]
        graph_a: Option<PathBuf>,
        /// Second graph file (defaults to the first).
        #[arg(long)]
        graph_b: Option<PathBuf>,
        #[arg(long)]
        center_a: Option<u32>,
        #[arg(long)]
        center_b: Option<u32>,
        /// Deepest radius compared.
        #[arg(long)]
        r_max: Option<u32>,
    },
    /// Re-verify every artifact in the output directory independently.
    Verify,
    /// Run all stages in order and write the artifact manifest.
    Pipeline,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = cli.dim {
        cfg.dim = v;
    }
    if let Some(v) = &cli.box_corners {
        cfg.set("box", v)?;
    }
    for (key, value) in [
        ("tau", cli.tau),
        ("eta", cli.eta),
        ("sigma", cli.sigma),
        ("epsilon", cli.epsilon),
        ("lambda0", cli.lambda0),
        ("margin", cli.margin),
        ("sandwich_radius", cli.sandwich_radius),
    ] {
        if let Some(v) = value {
            cfg.set(key, &v.to_string())?;
        }
    }
    if let Some(v) = cli.depth {
        cfg.depth = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    for pair in &cli.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            repnet::Error::Config(format!("--set expects key=value, got {pair:?}"))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Report> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Cmd::Net => pipeline::cmd_net(&cfg),
        Cmd::Perturb => pipeline::cmd_perturb(&cfg),
        Cmd::Graphify => pipeline::cmd_graphify(&cfg),
        Cmd::Schedule => pipeline::cmd_schedule(&cfg),
        Cmd::Hierarchy => pipeline::cmd_hierarchy(&cfg),
        Cmd::Analyze => pipeline::cmd_analyze(&cfg),
        Cmd::Gdist { graph_a, graph_b, center_a, center_b, r_max } => pipeline::cmd_gdist(
            &cfg,
            &GdistArgs {
                graph_a: graph_a.clone(),
                graph_b: graph_b.clone(),
                center_a: *center_a,
                center_b: *center_b,
                r_max: *r_max,
            },
        ),
        Cmd::Verify => pipeline::cmd_verify(&cfg),
        Cmd::Pipeline => pipeline::cmd_pipeline(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {} — {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            for w in &report.counterexamples {
                println!("counterexample: {w}");
            }
            if report.ok {
                println!("{}: all {} checks green", report.command, report.checks.len());
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: verification failed", report.command);
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code_for(&e) as u8)
        }
    }
}
