//! Open a gap in the pair-distance spectrum around sigma: perturb a net by
//! strictly less than epsilon so that no pair distance falls in the open
//! band (sigma - rho, sigma + rho), keeping a frozen subset bitwise fixed.
//!
//!     cargo run --example corona_gap

use repnet::delone::{
    corona_gap_perturb, corona_gap_violations, corona_volume_budget, euclid, generate_delone,
    EuclideanBox,
};

fn main() -> repnet::Result<()> {
    let window = EuclideanBox::new(vec![0.0, 0.0], vec![25.0, 25.0])?;
    let (tau, sigma, epsilon) = (1.0, 3.0, 0.2);

    let budget = corona_volume_budget(2, tau, sigma, epsilon)?;
    println!(
        "volume budget: {} disjoint balls fit the corona, half-width rho = {:.3e}",
        budget.c, budget.rho
    );

    let ds = generate_delone(&window, tau, 7)?;
    let before = corona_gap_violations(&ds.cloud, sigma, budget.rho).len();

    // Freeze five points; the perturbation must not touch them. Frozen
    // points must be mutually band-free (a band pair between two frozen
    // points could never be repaired), so pick them by a greedy scan.
    let in_band = |d: f64| d > sigma - budget.rho && d < sigma + budget.rho;
    let mut frozen: Vec<usize> = Vec::new();
    for i in 0..ds.cloud.len() {
        if frozen.len() == 5 {
            break;
        }
        if frozen.iter().all(|&f| !in_band(euclid(ds.cloud.point(f), ds.cloud.point(i)))) {
            frozen.push(i);
        }
    }
    let (after, pert, _) = corona_gap_perturb(&ds, sigma, epsilon, &frozen)?;
    let remaining = corona_gap_violations(&after.cloud, sigma, budget.rho).len();

    println!(
        "{} points; band pairs {before} -> {remaining}; max move {:.3e} < epsilon = {epsilon}",
        ds.cloud.len(),
        pert.max_move
    );
    for &f in &frozen {
        assert_eq!(ds.cloud.point(f), after.cloud.point(f), "frozen point moved");
    }
    assert_eq!(remaining, 0, "gap not fully open");

    // The perturbed set keeps Delone constants tau - 2 eps / eta + eps.
    let min_sep = (0..after.cloud.len())
        .flat_map(|i| (i + 1..after.cloud.len()).map(move |j| (i, j)))
        .map(|(i, j)| euclid(after.cloud.point(i), after.cloud.point(j)))
        .fold(f64::INFINITY, f64::min);
    println!(
        "after: min separation {:.4} >= tau - 2 eps = {:.1}, covering claim eta + eps = {:.4}",
        min_sep,
        tau - 2.0 * epsilon,
        after.eta
    );
    assert!(min_sep >= tau - 2.0 * epsilon);
    Ok(())
}
