//! Decide whether two pointed colored balls are isomorphic, produce the
//! lexicographically smallest witness, and re-verify it edge by edge.
//!
//!     cargo run --example ball_isomorphism

use repnet::graph::{
    ball_isomorphism, hop_ball, verify_ball_isomorphism, BfsScratch, ColoredGraph,
};

fn main() -> repnet::Result<()> {
    // Two 6-cycles with the same color pattern, rotated: isomorphic.
    let a = ColoredGraph::cycle(6, vec![1, 2, 1, 1, 2, 1])?;
    let b = ColoredGraph::cycle(6, vec![1, 1, 2, 1, 1, 2])?;
    let mut sa = BfsScratch::new(a.n());
    let mut sb = BfsScratch::new(b.n());

    let ball_a = hop_ball(&a, &mut sa, 1, 2);
    let ball_b = hop_ball(&b, &mut sb, 2, 2);
    let iso = ball_isomorphism(&ball_a, &ball_b)?.expect("same rotated pattern");
    println!("witness (source -> image): {:?}", iso.pairs);
    assert!(verify_ball_isomorphism(&ball_a, &ball_b, &iso.pairs));

    // Recoloring one vertex inside the ball breaks it.
    let c = ColoredGraph::cycle(6, vec![1, 1, 2, 2, 1, 2])?;
    let mut sc = BfsScratch::new(c.n());
    let ball_c = hop_ball(&c, &mut sc, 2, 2);
    assert!(ball_isomorphism(&ball_a, &ball_c)?.is_none());
    println!("recolored ball correctly rejected");

    // Different radii are a caller error, not a silent false.
    let shallow = hop_ball(&b, &mut sb, 2, 1);
    assert!(ball_isomorphism(&ball_a, &shallow).is_err());
    println!("radius mismatch correctly refused");
    Ok(())
}
