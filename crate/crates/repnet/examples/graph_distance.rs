//! The agreement distance between pointed colored graphs: 2^-R for the
//! deepest radius R at which the pointed balls are isomorphic. Also shows
//! the integer-metric rigidity check: any pointed partial map with
//! distortion below 2 that passes is an isomorphism onto its image.
//!
//!     cargo run --example graph_distance

use repnet::graph::{gstar_distance, ppqi_check, BfsScratch, ColoredGraph};

fn main() -> repnet::Result<()> {
    // A long cycle and a long path agree around interior points up to the
    // radius at which the path's endpoint becomes visible.
    let cycle = ColoredGraph::cycle(64, vec![1; 64])?;
    let path = ColoredGraph::path(64, vec![1; 64])?;
    for center in [32u32, 40, 60] {
        let d = gstar_distance(&cycle, 0, &path, center, 12);
        println!(
            "cycle@0 vs path@{center}: distance {:.6} (deepest agreeing radius {})",
            d.distance, d.depth
        );
    }
    let self_d = gstar_distance(&cycle, 0, &cycle, 5, 12);
    assert!(self_d.saturated && self_d.distance == 0.0);
    println!("vertex-transitive self comparison saturates to distance 0");

    // Identity on a radius-4 ball is a (4, 1)-quasi-isometry, hence accepted
    // and certified to be an isomorphism onto its image.
    let mut s = BfsScratch::new(cycle.n());
    let dom: Vec<u32> = s.run(&cycle, &[0], 4).to_vec();
    let map: Vec<(u32, u32)> = dom.iter().map(|&v| (v, v)).collect();
    let rep = ppqi_check(&cycle, 0, &cycle, 0, 4, 1.5, &map)?;
    println!(
        "identity map: accepted {}, iso onto image {:?}, certified radius {:?}",
        rep.accepted, rep.iso_onto_image, rep.ppqi_radius
    );
    assert!(rep.accepted && rep.iso_onto_image == Some(true));

    // Collapsing two antipodal vertices violates the lower Lipschitz bound.
    let mut bad = map.clone();
    let far = *dom.iter().max_by_key(|&&v| s.dist_of(v).unwrap()).unwrap();
    for pair in &mut bad {
        if pair.0 == far {
            pair.1 = 0;
        }
    }
    let rep = ppqi_check(&cycle, 0, &cycle, 0, 4, 1.5, &bad)?;
    println!("collapsing map: accepted {} ({} violations)", rep.accepted, rep.violations.len());
    assert!(!rep.accepted);
    Ok(())
}
