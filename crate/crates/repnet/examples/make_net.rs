//! Generate a tau-separated, eta-dense point set in a Euclidean box and
//! check the net laws that define it.
//!
//!     cargo run --example make_net

use repnet::delone::{generate_delone, min_separation, EuclideanBox};

fn main() -> repnet::Result<()> {
    let window = EuclideanBox::new(vec![0.0, 0.0], vec![30.0, 30.0])?;
    let tau = 1.0;

    for seed in [0, 7, 42] {
        let ds = generate_delone(&window, tau, seed)?;
        let min_sep = min_separation(&ds.cloud).unwrap();
        println!(
            "seed {seed}: {} points, min pair distance {:.4} (>= tau = {tau}), \
             certified covering radius {:.4}",
            ds.cloud.len(),
            min_sep,
            ds.eta
        );
        assert!(min_sep >= tau, "separation law violated");
        assert!(ds.eta < tau, "a maximal tau-separated set covers at radius < tau");
    }

    println!("net laws hold for every seed");
    Ok(())
}
