//! Turn a gap-free Delone set into its sigma-scale adjacency graph and
//! check the claims that make the graph usable as a metric proxy:
//! connectivity, the packing degree bound, and the two-sided comparison
//! between hop distance and Euclidean distance.
//!
//!     cargo run --example extract_graph

use repnet::delone::{
    check_metric_sandwich, corona_gap_perturb, delone_to_graph, generate_delone, packing_bound,
    EuclideanBox,
};

fn main() -> repnet::Result<()> {
    let window = EuclideanBox::new(vec![0.0, 0.0], vec![25.0, 25.0])?;
    let (tau, sigma, epsilon) = (1.0, 3.0, 0.2);

    let ds = generate_delone(&window, tau, 7)?;
    let (ds, _, _) = corona_gap_perturb(&ds, sigma, epsilon, &[])?;
    let g = delone_to_graph(&ds, sigma, None)?;

    let bound = packing_bound(2, tau, sigma)?;
    println!(
        "{} vertices, {} edges, connected: {}, max degree {} <= packing bound {}",
        g.n(),
        g.edge_count(),
        g.is_connected(),
        g.max_degree(),
        bound
    );

    for r in 1..=4u32 {
        let s = check_metric_sandwich(&ds, &g, sigma, r as f64)?;
        println!(
            "r = {r}: hop ball {} inside metric ball {:.0}; metric ball {r} inside hop ball {} \
             ({} upper / {} lower centers) -> {}",
            s.hop_r,
            r as f64 * sigma,
            s.hop_bound,
            s.centers_upper,
            s.centers_lower,
            if s.ok { "ok" } else { "FAIL" }
        );
        assert!(s.ok, "sandwich failed: {:?}", s.failures);
    }
    Ok(())
}
