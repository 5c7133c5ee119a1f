//! Command implementations behind the CLI: each `cmd_*` validates the
//! configuration, (re)derives its inputs deterministically from the seed,
//! writes its artifacts under the output directory, and returns a report
//! whose booleans decide the process exit code.

use std::path::PathBuf;
use std::time::Instant;

use crate::config::RunConfig;
use crate::delone::{
    certified_covering_radius, corona_gap_perturb, corona_gap_violations, corona_volume_budget,
    delone_to_graph, euclid, generate_delone, min_separation, packing_bound,
    check_metric_sandwich, CloudPerturbation, CoronaBudget, DeloneSet, PointCloud,
};
use crate::graph::{
    gstar_distance, omega_set, persistence_depth, repetitivity_radius, ColoredGraph,
};
use crate::hierarchy::{
    build_hierarchy, density_report, level_coloring, limit_levels, verify_hierarchy,
    verify_limit_nesting, Hierarchy, LimitLevel,
};
use crate::metric::NetCertificate;
use crate::report::{par_map_ranges, write_manifest, Report, Timings};
use crate::schedule::{make_schedule, schedule_ok, verify_schedule, Schedule};
use crate::{Error, Result};

pub const POINTS_CSV: &str = "points.csv";
pub const NET_CERT_JSON: &str = "net_certificate.json";
pub const PERTURBED_CSV: &str = "perturbed.csv";
pub const PERTURBATION_JSON: &str = "perturbation.json";
pub const HIST_BEFORE_CSV: &str = "hist_before.csv";
pub const HIST_AFTER_CSV: &str = "hist_after.csv";
pub const BAND_BEFORE_CSV: &str = "band_before.csv";
pub const BAND_AFTER_CSV: &str = "band_after.csv";
pub const GRAPH_TXT: &str = "graph.txt";
pub const SCHEDULE_JSON: &str = "schedule.json";
pub const HIERARCHY_JSON: &str = "hierarchy.json";
pub const HIERARCHY_DUMP_JSON: &str = "hierarchy_dump.json";
pub const PERSISTENCE_CSV: &str = "persistence.csv";

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    Ok(())
}

fn write_report(cfg: &RunConfig, report: &Report) -> Result<()> {
    report.write(&cfg.out.join(format!("report_{}.json", report.command)))
}

// ---------------------------------------------------------------------------
// Deterministic stage inputs (regenerated from the seed, never read back).

fn stage_net(cfg: &RunConfig) -> Result<DeloneSet> {
    generate_delone(&cfg.window()?, cfg.tau, cfg.seed)
}

/// First ten points accepted by an ascending-id greedy scan that keeps the
/// frozen set free of corona-band pairs (precondition of the perturbation).
fn choose_frozen(ds: &DeloneSet, sigma: f64, rho: f64, count: usize) -> Vec<usize> {
    let mut frozen: Vec<usize> = Vec::new();
    'next: for i in 0..ds.cloud.len() {
        for &f in &frozen {
            let d = euclid(ds.cloud.point(i), ds.cloud.point(f));
            if d > sigma - rho && d < sigma + rho {
                continue 'next;
            }
        }
        frozen.push(i);
        if frozen.len() == count {
            break;
        }
    }
    frozen
}

fn stage_perturb(
    cfg: &RunConfig,
) -> Result<(DeloneSet, DeloneSet, CloudPerturbation, CoronaBudget, Vec<usize>)> {
    let ds = stage_net(cfg)?;
    let budget = corona_volume_budget(cfg.dim, cfg.tau, cfg.sigma, cfg.epsilon)?;
    let frozen = choose_frozen(&ds, cfg.sigma, budget.rho, 10);
    let (perturbed, pert, budget) = corona_gap_perturb(&ds, cfg.sigma, cfg.epsilon, &frozen)?;
    Ok((ds, perturbed, pert, budget, frozen))
}

fn stage_graph(cfg: &RunConfig) -> Result<(DeloneSet, ColoredGraph)> {
    let (_, perturbed, _, _, _) = stage_perturb(cfg)?;
    let g = delone_to_graph(&perturbed, cfg.sigma, None)?;
    Ok((perturbed, g))
}

fn stage_schedule(cfg: &RunConfig) -> Result<Schedule> {
    // The hierarchy target is a constant-colored cycle, which is vertex
    // transitive, so every repetitivity radius is exactly zero.
    make_schedule(cfg.lambda0, cfg.depth, |_, _| Ok(0.0))
}

/// The hierarchy instance: a constant-colored cycle C_N with N = ceil(4 r_top),
/// based at the antipode of vertex 0.
fn stage_hierarchy(cfg: &RunConfig) -> Result<(ColoredGraph, Hierarchy)> {
    let schedule = stage_schedule(cfg)?;
    let r_top = schedule.level(schedule.depth() - 1).r;
    let n = (4.0 * r_top).ceil() as usize;
    let g = ColoredGraph::cycle(n, vec![1; n])?;
    let p = (n / 2) as u32;
    let hier = build_hierarchy(&g, p, &schedule)?;
    Ok((g, hier))
}

/// The deepest-interior vertex of the cloud: maximal window-boundary
/// distance, ties to the smallest id.
fn interior_base(ds: &DeloneSet) -> u32 {
    let mut best = 0usize;
    let mut best_d = f64::NEG_INFINITY;
    for i in 0..ds.cloud.len() {
        let d = ds.window.boundary_distance(ds.cloud.point(i));
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best as u32
}

/// All pair distances up to `cap`, binned at `width`, emitted as
/// `bin_lo,bin_hi,count` CSV. The scan is split across workers.
fn pair_distance_histogram(cloud: &PointCloud, cap: f64, width: f64) -> Vec<u64> {
    let n = cloud.len();
    let bins = (cap / width).ceil() as usize;
    let partials = par_map_ranges(n, |range| {
        let mut counts = vec![0u64; bins];
        for i in range {
            for j in i + 1..n {
                let d = euclid(cloud.point(i), cloud.point(j));
                if d < cap {
                    counts[(d / width) as usize] += 1;
                }
            }
        }
        counts
    });
    let mut counts = vec![0u64; bins];
    for p in partials {
        for (acc, v) in counts.iter_mut().zip(p) {
            *acc += v;
        }
    }
    counts
}

fn histogram_csv(counts: &[u64], lo: f64, width: f64) -> String {
    let mut out = String::from("# bin_lo,bin_hi,count\n");
    for (k, &c) in counts.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", lo + k as f64 * width, lo + (k + 1) as f64 * width, c));
    }
    out
}

/// Pair distances restricted to a fine window around sigma, binned at
/// rho / 2, so the emptied band (sigma - rho, sigma + rho) is visible.
fn band_histogram(cloud: &PointCloud, sigma: f64, rho: f64) -> (Vec<u64>, f64, f64) {
    let width = rho / 2.0;
    let half_bins = 16i32;
    let bins = 2 * half_bins as usize;
    // Edges centered on sigma so that sigma - rho and sigma + rho are bin
    // boundaries bit-for-bit: pairs parked exactly on the closed band
    // boundary never bleed into an interior bin.
    let edges: Vec<f64> =
        (0..=bins as i32).map(|k| sigma + f64::from(k - half_bins) * width).collect();
    let lo = edges[0];
    let n = cloud.len();
    let partials = par_map_ranges(n, |range| {
        let mut counts = vec![0u64; bins];
        for i in range {
            for j in i + 1..n {
                let d = euclid(cloud.point(i), cloud.point(j));
                let k = edges.partition_point(|&e| e <= d);
                if k >= 1 && k <= bins {
                    counts[k - 1] += 1;
                }
            }
        }
        counts
    });
    let mut counts = vec![0u64; bins];
    for p in partials {
        for (acc, v) in counts.iter_mut().zip(p) {
            *acc += v;
        }
    }
    (counts, lo, width)
}

// ---------------------------------------------------------------------------
// Subcommands.

/// Generates the tau-separated, eta-dense net and its certificate.
pub fn cmd_net(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("net", cfg);
    let ds = stage_net(cfg)?;
    ds.cloud.write_csv(&cfg.out.join(POINTS_CSV))?;

    let min_sep = min_separation(&ds.cloud).unwrap_or(f64::INFINITY);
    let cert = NetCertificate {
        subset: (0..ds.cloud.len()).collect(),
        separation: Some(cfg.tau),
        covering_radius: ds.eta,
    };
    std::fs::write(cfg.out.join(NET_CERT_JSON), serde_json::to_string_pretty(&cert)?)?;

    report.measure("points", ds.cloud.len());
    report.measure("min_separation", min_sep);
    report.measure("certified_eta", ds.eta);
    report.check(
        "tau-separated",
        min_sep >= cfg.tau,
        format!("min pair distance {min_sep} vs tau {}", cfg.tau),
    );
    report.check(
        "eta-dense",
        ds.eta <= cfg.eta,
        format!("certified covering radius {} vs claimed eta {}", ds.eta, cfg.eta),
    );
    write_report(cfg, &report)?;
    Ok(report)
}

/// Opens the corona gap: perturbs the net by < epsilon so no pair distance
/// falls in (sigma - rho, sigma + rho), and emits plot-ready histograms.
pub fn cmd_perturb(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("perturb", cfg);
    let (before, after, pert, budget, frozen) = stage_perturb(cfg)?;
    after.cloud.write_csv(&cfg.out.join(PERTURBED_CSV))?;
    std::fs::write(cfg.out.join(PERTURBATION_JSON), serde_json::to_string_pretty(&pert)?)?;

    let cap = cfg.sigma + 1.0;
    let coarse = 0.05;
    for (cloud, hist_file, band_file, tag) in [
        (&before.cloud, HIST_BEFORE_CSV, BAND_BEFORE_CSV, "before"),
        (&after.cloud, HIST_AFTER_CSV, BAND_AFTER_CSV, "after"),
    ] {
        let counts = pair_distance_histogram(cloud, cap, coarse);
        std::fs::write(cfg.out.join(hist_file), histogram_csv(&counts, 0.0, coarse))?;
        let (band, lo, width) = band_histogram(cloud, cfg.sigma, budget.rho);
        std::fs::write(cfg.out.join(band_file), histogram_csv(&band, lo, width))?;
        // Strict in-band count from the exact scan; the sweep legitimately
        // parks pairs on the closed boundary sigma +- rho, which shows up in
        // the histogram's edge bins.
        let strict = corona_gap_violations(cloud, cfg.sigma, budget.rho).len();
        report.measure(&format!("band_pairs_{tag}"), strict);
    }

    let violations = corona_gap_violations(&after.cloud, cfg.sigma, budget.rho);
    for &(a, b) in violations.iter().take(8) {
        report.counterexample(format!("pair ({a}, {b}) in the corona band"));
    }
    let frozen_unmoved = frozen.iter().all(|&f| {
        before.cloud.point(f) == after.cloud.point(f)
    });
    let min_sep = min_separation(&after.cloud).unwrap_or(f64::INFINITY);

    report.measure("rho", budget.rho);
    report.measure("max_move", pert.max_move);
    report.measure("frozen", frozen.clone());
    report.measure("min_separation_after", min_sep);
    report.measure("certified_eta_after", after.eta);
    report.check(
        "band-empty",
        violations.is_empty(),
        format!("{} violating pairs in exact all-pairs scan", violations.len()),
    );
    report.check(
        "epsilon-perturbation",
        pert.max_move < cfg.epsilon,
        format!("max move {} vs epsilon {}", pert.max_move, cfg.epsilon),
    );
    report.check("frozen-unmoved", frozen_unmoved, format!("{} frozen points", frozen.len()));
    report.check(
        "separation-after",
        min_sep >= cfg.tau - 2.0 * cfg.epsilon,
        format!("min pair {} vs tau - 2 eps = {}", min_sep, cfg.tau - 2.0 * cfg.epsilon),
    );
    report.check(
        "density-after",
        after.eta <= cfg.eta + cfg.epsilon,
        format!("certified eta {} vs eta + eps = {}", after.eta, cfg.eta + cfg.epsilon),
    );
    write_report(cfg, &report)?;
    Ok(report)
}

/// Extracts the sigma-scale adjacency graph and checks the metric sandwich.
pub fn cmd_graphify(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("graphify", cfg);
    let (perturbed, g) = stage_graph(cfg)?;
    std::fs::write(cfg.out.join(GRAPH_TXT), g.to_text())?;

    let degree_bound = packing_bound(cfg.dim, cfg.tau, cfg.sigma)?;
    report.measure("vertices", g.n());
    report.measure("edges", g.edge_count());
    report.measure("max_degree", g.max_degree());
    report.measure("degree_bound", degree_bound);
    report.check("connected", g.is_connected(), "BFS reaches every vertex".to_string());
    report.check(
        "max-degree",
        u64::from(g.max_degree()) <= degree_bound,
        format!("max degree {} vs packing bound {}", g.max_degree(), degree_bound),
    );
    for r in 1..=cfg.sandwich_radius.floor() as u32 {
        let s = check_metric_sandwich(&perturbed, &g, cfg.sigma, r as f64)?;
        for f in s.failures.iter().take(4) {
            report.counterexample(f.clone());
        }
        report.check(
            &format!("sandwich-r{r}"),
            s.ok,
            format!(
                "hop ball {} in metric ball {}; metric ball {} in hop ball {} ({} / {} centers)",
                s.hop_r,
                r as f64 * cfg.sigma,
                r,
                s.hop_bound,
                s.centers_upper,
                s.centers_lower
            ),
        );
    }
    write_report(cfg, &report)?;
    Ok(report)
}

/// Derives the parameter schedule and re-validates every inequality.
pub fn cmd_schedule(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("schedule", cfg);
    let schedule = stage_schedule(cfg)?;
    std::fs::write(cfg.out.join(SCHEDULE_JSON), serde_json::to_string_pretty(&schedule)?)?;

    let checks = verify_schedule(&schedule);
    let mut min_slack = f64::INFINITY;
    for c in &checks {
        if !c.vacuous {
            min_slack = min_slack.min(c.slack);
        }
        report.check(
            &format!("{}-level-{}", c.name, c.level),
            c.satisfied,
            format!("lhs {} vs rhs {} (slack {:.4}, vacuous {})", c.lhs, c.rhs, c.slack, c.vacuous),
        );
    }
    report.measure("depth", schedule.depth());
    report.measure("lambda_capital_0", schedule.lambda_capital(0));
    report.measure("min_slack", min_slack);
    report.check(
        "all-conditions",
        schedule_ok(&checks),
        format!("{} named conditions", checks.len()),
    );
    write_report(cfg, &report)?;
    Ok(report)
}

/// Builds the level hierarchy on the auxiliary cycle and verifies every
/// clause, the limit sets, and the density bounds.
pub fn cmd_hierarchy(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("hierarchy", cfg);
    let (g, hier) = stage_hierarchy(cfg)?;
    hier.write_json(&cfg.out.join(HIERARCHY_JSON))?;
    std::fs::write(
        cfg.out.join(HIERARCHY_DUMP_JSON),
        serde_json::to_string_pretty(&hier.to_dump(&g))?,
    )?;

    report.measure("cycle_vertices", g.n());
    report.measure("base_point", hier.p);
    for lv in &hier.levels {
        report.measure(
            &format!("level_{}_{}_members", lv.i, lv.j),
            serde_json::json!({"hat": lv.hat.len(), "tilde": lv.tilde().len()}),
        );
    }
    for r in verify_hierarchy(&g, &hier)? {
        for c in r.checks.iter().filter(|c| !c.ok).take(4) {
            report.counterexample(format!("level ({},{}) {}: {}", r.i, r.j, c.name, c.detail));
        }
        report.check(
            &format!("level-{}-{}", r.i, r.j),
            r.ok,
            format!("{} clauses", r.checks.len()),
        );
    }
    let limits: Vec<LimitLevel> = (0..hier.depth() - 1)
        .map(|i| limit_levels(&hier, i))
        .collect::<Result<_>>()?;
    for c in verify_limit_nesting(&g, &hier, &limits) {
        report.check(&c.name, c.ok, c.detail);
    }
    for d in density_report(&g, &hier)? {
        report.measure(
            &format!("density_level_{}", d.i),
            serde_json::json!({
                "bound": d.bound,
                "window_radius": d.window_radius,
                "measured": if d.vacuous { serde_json::Value::Null } else { d.measured.into() },
            }),
        );
        report.check(
            &format!("density-level-{}", d.i),
            d.ok,
            format!("measured {} vs bound {} (vacuous {})", d.measured, d.bound, d.vacuous),
        );
    }
    let colors = level_coloring(g.n(), &limits);
    report.measure("base_point_color", colors[hier.p as usize]);
    write_report(cfg, &report)?;
    Ok(report)
}

/// Pattern statistics of the extracted Delone graph: occurrence sets,
/// repetitivity radii, and persistence depths. Evidence only — a window
/// cannot certify repetitivity, so failures are recorded, not fatal.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("analyze", cfg);
    let (perturbed, g) = stage_graph(cfg)?;
    let p = interior_base(&perturbed);
    let window: Vec<u32> = (0..g.n() as u32).collect();

    report.measure("base_point", p);
    for radius in 0..=cfg.margin.floor() as u32 {
        match omega_set(&g, p, radius, &window) {
            Ok(omega) => {
                report.measure(&format!("omega_count_r{radius}"), omega.len());
                let w = repetitivity_radius(&g, p, radius, &window)
                    .map(serde_json::Value::from)
                    .unwrap_or(serde_json::Value::Null);
                report.measure(&format!("omega_r{radius}"), w);
            }
            Err(e) => report.measure(&format!("omega_r{radius}"), e.to_string()),
        }
    }

    // Persistence over a fixed-size deterministic sample of the window.
    let stride = (g.n() / 24).max(1);
    let sample: Vec<u32> = (0..g.n()).step_by(stride).map(|v| v as u32).collect();
    let table = persistence_depth(&g, &sample, 3);
    let mut csv = String::from("# x,y,deepest_agreeing_radius\n");
    for &(x, y, d) in &table.pairs {
        csv.push_str(&format!("{x},{y},{d}\n"));
    }
    std::fs::write(cfg.out.join(PERSISTENCE_CSV), csv)?;
    report.measure("persistence_sample", sample.len());
    report.measure("persistence_histogram", &table.histogram);
    report.measure("persistence_max_offdiag_depth", table.max_offdiag_depth);
    report.measure("persistence_saturated_pairs", table.saturated_pairs);
    report.check(
        "analysis-complete",
        true,
        "statistics are evidence only; no repetitivity assertion".to_string(),
    );
    write_report(cfg, &report)?;
    Ok(report)
}

/// Optional inputs of `cmd_gdist`; unset fields fall back to the pipeline's
/// own extracted graph and deterministic centers.
#[derive(Clone, Debug, Default)]
pub struct GdistArgs {
    pub graph_a: Option<PathBuf>,
    pub graph_b: Option<PathBuf>,
    pub center_a: Option<u32>,
    pub center_b: Option<u32>,
    pub r_max: Option<u32>,
}

/// Pointed-ball agreement distance between two (graph, center) pairs.
pub fn cmd_gdist(cfg: &RunConfig, args: &GdistArgs) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("gdist", cfg);
    let fallback = || -> Result<(ColoredGraph, u32)> {
        let (perturbed, g) = stage_graph(cfg)?;
        let p = interior_base(&perturbed);
        Ok((g, p))
    };
    let (ga, ca) = match &args.graph_a {
        Some(path) => (ColoredGraph::read_file(path)?, args.center_a.unwrap_or(0)),
        None => {
            let (g, p) = fallback()?;
            (g, args.center_a.unwrap_or(p))
        }
    };
    let (gb, cb) = match &args.graph_b {
        Some(path) => (ColoredGraph::read_file(path)?, args.center_b.unwrap_or(0)),
        None => {
            let (g, p) = fallback()?;
            // Default: compare against the next vertex, a nontrivial probe.
            let next = (p + 1) % cfg_graph_len(&g);
            (g, args.center_b.unwrap_or(next))
        }
    };
    for (name, c, g) in [("a", ca, &ga), ("b", cb, &gb)] {
        if c as usize >= g.n() {
            return Err(Error::InvalidParameter(format!(
                "center {name} = {c} out of range for a {}-vertex graph",
                g.n()
            )));
        }
    }
    let r_max = args.r_max.unwrap_or(6);
    let d = gstar_distance(&ga, ca, &gb, cb, r_max);
    report.measure("center_a", ca);
    report.measure("center_b", cb);
    report.measure("r_max", r_max);
    report.measure("distance", d.distance);
    report.measure("depth", d.depth);
    report.measure("saturated", d.saturated);
    // Sanity anchor: the distance from a center to itself saturates.
    let self_d = gstar_distance(&ga, ca, &ga, ca, r_max);
    report.check(
        "self-distance-zero",
        self_d.saturated && self_d.distance == 0.0,
        format!("self distance {}", self_d.distance),
    );
    report.check(
        "distance-in-range",
        d.distance <= 2.0,
        format!("distance {} at depth {}", d.distance, d.depth),
    );
    write_report(cfg, &report)?;
    Ok(report)
}

fn cfg_graph_len(g: &ColoredGraph) -> u32 {
    g.n() as u32
}

/// Independent re-verification of every artifact in the output directory.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("verify", cfg);
    let out = &cfg.out;
    let window = cfg.window()?;

    // Net artifacts.
    let points = PointCloud::read_csv(&out.join(POINTS_CSV))?;
    let cert: NetCertificate =
        serde_json::from_str(&std::fs::read_to_string(out.join(NET_CERT_JSON))?)?;
    let min_sep = min_separation(&points).unwrap_or(f64::INFINITY);
    let eta = certified_covering_radius(&points, &window, cfg.tau / 8.0);
    report.check(
        "net-separation",
        cert.separation.map_or(false, |s| min_sep >= s),
        format!("measured {min_sep} vs certified {:?}", cert.separation),
    );
    report.check(
        "net-covering",
        eta <= cert.covering_radius + 1e-9,
        format!("re-certified {eta} vs certificate {}", cert.covering_radius),
    );

    // Perturbation artifacts.
    let perturbed = PointCloud::read_csv(&out.join(PERTURBED_CSV))?;
    let pert: CloudPerturbation =
        serde_json::from_str(&std::fs::read_to_string(out.join(PERTURBATION_JSON))?)?;
    let budget = corona_volume_budget(cfg.dim, cfg.tau, cfg.sigma, cfg.epsilon)?;
    let same_len = points.len() == perturbed.len();
    let max_move = (0..points.len().min(perturbed.len()))
        .map(|i| euclid(points.point(i), perturbed.point(i)))
        .fold(0.0, f64::max);
    let violations = corona_gap_violations(&perturbed, cfg.sigma, budget.rho);
    report.check(
        "perturbation-bijective",
        same_len,
        format!("{} points before, {} after", points.len(), perturbed.len()),
    );
    report.check(
        "perturbation-epsilon",
        max_move < cfg.epsilon && (max_move - pert.max_move).abs() <= 1e-12,
        format!("measured max move {max_move} vs recorded {}", pert.max_move),
    );
    report.check(
        "perturbation-band-empty",
        violations.is_empty(),
        format!("{} violating pairs", violations.len()),
    );

    // Graph artifact: must equal a fresh extraction from the perturbed cloud.
    let g = ColoredGraph::read_file(&out.join(GRAPH_TXT))?;
    let ds_after = DeloneSet {
        cloud: {
            let mut c = perturbed.clone();
            c.build_index(cfg.sigma);
            c
        },
        window: window.clone(),
        tau: cfg.tau - 2.0 * cfg.epsilon,
        eta: eta + cfg.epsilon,
    };
    let fresh = delone_to_graph(&ds_after, cfg.sigma, None)?;
    report.check(
        "graph-matches-cloud",
        g.to_text() == fresh.to_text(),
        format!("{} vertices, {} edges", g.n(), g.edge_count()),
    );

    // Schedule artifact.
    let schedule: Schedule =
        serde_json::from_str(&std::fs::read_to_string(out.join(SCHEDULE_JSON))?)?;
    let checks = verify_schedule(&schedule);
    report.check(
        "schedule-conditions",
        schedule_ok(&checks) && (schedule.lambda0 - cfg.lambda0).abs() < 1e-12,
        format!("{} conditions on depth {}", checks.len(), schedule.depth()),
    );

    // Hierarchy artifact, re-verified on a freshly rebuilt cycle.
    let hier = Hierarchy::read_json(&out.join(HIERARCHY_JSON))?;
    let r_top = hier.schedule.level(hier.depth() - 1).r;
    let n = (4.0 * r_top).ceil() as usize;
    let cycle = ColoredGraph::cycle(n, vec![1; n])?;
    let reports = verify_hierarchy(&cycle, &hier)?;
    let all_levels_ok = reports.iter().all(|r| r.ok);
    for r in reports.iter().filter(|r| !r.ok) {
        for c in r.checks.iter().filter(|c| !c.ok).take(4) {
            report.counterexample(format!("level ({},{}) {}: {}", r.i, r.j, c.name, c.detail));
        }
    }
    report.check(
        "hierarchy-levels",
        all_levels_ok,
        format!("{} levels re-verified on C_{}", reports.len(), n),
    );
    let density_ok = density_report(&cycle, &hier)?.iter().all(|d| d.ok);
    report.check("hierarchy-density", density_ok, "limit-set covering radii".to_string());

    write_report(cfg, &report)?;
    Ok(report)
}

/// Runs every stage in order, records per-stage wall clock in
/// `timings.json`, and writes `manifest.json` over all other artifacts.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<Report> {
    prepare_out(cfg)?;
    let mut report = Report::new("pipeline", cfg);
    let mut timings = Timings::default();
    let stages: [(&str, fn(&RunConfig) -> Result<Report>); 8] = [
        ("net", cmd_net),
        ("perturb", cmd_perturb),
        ("graphify", cmd_graphify),
        ("schedule", cmd_schedule),
        ("hierarchy", cmd_hierarchy),
        ("analyze", cmd_analyze),
        ("gdist", |cfg| cmd_gdist(cfg, &GdistArgs::default())),
        ("verify", cmd_verify),
    ];
    for (name, stage) in stages {
        let start = Instant::now();
        let stage_report = stage(cfg).map_err(|e| {
            Error::Verification(format!("pipeline stage {name} failed: {e}"))
        })?;
        timings.record(name, start.elapsed().as_secs_f64());
        for c in stage_report.checks.iter().filter(|c| !c.ok).take(4) {
            report.counterexample(format!("{name}/{}: {}", c.name, c.detail));
        }
        report.check(
            &format!("stage-{name}"),
            stage_report.ok,
            format!("{} checks", stage_report.checks.len()),
        );
    }
    write_report(cfg, &report)?;
    timings.write(&cfg.out)?;
    let manifest = write_manifest(&cfg.out)?;
    report.measure("artifacts", manifest.artifacts.len());
    // Rewrite the report so the artifact count is embedded, then refresh the
    // manifest to hash the final bytes.
    write_report(cfg, &report)?;
    write_manifest(&cfg.out)?;
    Ok(report)
}

/// Maps an error to the documented process exit code: 2 for configuration
/// errors, 4 for verification failures, 3 for construction failures.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidParameter(_) => 2,
        Error::Verification(_) => 4,
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn small_cfg(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.box_corners = vec![0.0, 0.0, 18.0, 18.0];
        cfg.depth = 2;
        cfg.lambda0 = 1.2;
        cfg.out = dir.to_path_buf();
        cfg
    }

    #[test]
    fn net_and_perturb_reports_green() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        let net = cmd_net(&cfg).unwrap();
        assert!(net.ok, "{:?}", net.checks);
        assert!(dir.path().join(POINTS_CSV).exists());
        let pert = cmd_perturb(&cfg).unwrap();
        assert!(pert.ok, "{:?}", pert.checks);
        assert!(dir.path().join(BAND_AFTER_CSV).exists());
        // The fine band histogram is empty strictly inside the open band
        // (bins 15..18 of 32, between the closed boundary bins).
        let text = std::fs::read_to_string(dir.path().join(BAND_AFTER_CSV)).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        for row in &rows[15..18] {
            assert!(row.ends_with(",0"), "band row not empty: {row}");
        }
    }

    #[test]
    fn full_pipeline_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut first = None;
        for dir in [dir_a.path(), dir_b.path()] {
            let cfg = small_cfg(dir);
            let report = cmd_pipeline(&cfg).unwrap();
            assert!(report.ok, "{:?}", report.counterexamples);
            let manifest = std::fs::read(dir.join(crate::report::MANIFEST_FILE)).unwrap();
            match &first {
                None => first = Some(manifest),
                Some(f) => assert_eq!(f, &manifest, "manifests differ between runs"),
            }
        }
    }

    #[test]
    fn config_errors_map_to_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.sigma = 2.0;
        let err = cmd_net(&cfg).unwrap_err();
        assert_eq!(exit_code_for(&err), 2);
    }
}
