//! Build the recursive hierarchy of separated occurrence sets on a cycle,
//! verify every clause of every level, take the limit sets, and measure
//! their density against the assembled bound.
//!
//!     cargo run --example build_hierarchy

use repnet::graph::ColoredGraph;
use repnet::hierarchy::{
    build_hierarchy, density_report, level_coloring, limit_levels, verify_hierarchy,
    verify_limit_nesting, LimitLevel,
};
use repnet::schedule::make_schedule;

fn main() -> repnet::Result<()> {
    let schedule = make_schedule(1.2, 2, |_, _| Ok(0.0))?;
    let n = (4.0 * schedule.level(1).r).ceil() as usize;
    let g = ColoredGraph::cycle(n, vec![1; n])?;
    let p = (n / 2) as u32;
    println!("cycle C_{n}, base point {p}, radii {:?}", [
        schedule.level(0).r,
        schedule.level(1).r
    ]);

    let hier = build_hierarchy(&g, p, &schedule)?;
    for lv in &hier.levels {
        println!(
            "level ({}, {}): {} members ({} fresh, {} transported), separation {}",
            lv.i,
            lv.j,
            lv.members.len(),
            lv.hat.len(),
            lv.tilde().len(),
            lv.separation
        );
    }

    for r in verify_hierarchy(&g, &hier)? {
        println!("level ({}, {}): {} clauses, all ok = {}", r.i, r.j, r.checks.len(), r.ok);
        assert!(r.ok);
    }

    let limits: Vec<LimitLevel> = (0..hier.depth() - 1)
        .map(|i| limit_levels(&hier, i))
        .collect::<repnet::Result<_>>()?;
    for c in verify_limit_nesting(&g, &hier, &limits) {
        assert!(c.ok, "{}: {}", c.name, c.detail);
    }
    for d in density_report(&g, &hier)? {
        println!(
            "limit set X_{}: covering radius {} <= bound {:.1} inside window radius {:.1}",
            d.i, d.measured, d.bound, d.window_radius
        );
        assert!(d.ok);
    }

    let colors = level_coloring(g.n(), &limits);
    println!(
        "membership coloring: base point color {}, {} vertices in some limit set",
        colors[p as usize],
        colors.iter().filter(|&&c| c > 0).count()
    );
    Ok(())
}
