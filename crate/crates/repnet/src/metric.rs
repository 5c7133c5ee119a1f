//! Finite-metric-space primitives shared by the Euclidean and graph
//! backends: penumbras, separation/density predicates, greedy maximal nets
//! and perturbation bookkeeping.
//!
//! Points are opaque ids `0..space.len()`. The convention `d(∅, y) = +∞`
//! fixes the penumbra/covering edge cases.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type PointId = usize;

/// Comparison policy for separation predicates. Strict by default; the
/// tolerant mode passes `d >= K - slack` instead of `d >= K`.
#[derive(Clone, Copy, Debug)]
pub struct NumericPolicy {
    pub tolerant: bool,
    pub slack: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy { tolerant: false, slack: 1e-9 }
    }
}

impl NumericPolicy {
    pub fn strict() -> Self {
        Self::default()
    }

    pub fn tolerant() -> Self {
        NumericPolicy { tolerant: true, ..Self::default() }
    }

    /// Effective threshold for "counts as at least K apart".
    pub fn threshold(&self, k: f64) -> f64 {
        if self.tolerant {
            k - self.slack
        } else {
            k
        }
    }
}

pub trait MetricSpace {
    fn len(&self) -> usize;

    fn dist(&self, a: PointId, b: PointId) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of points at distance `< r` from `x` (open ball), including `x`
    /// itself. Backends override this with an index; the default scans.
    fn ball_open(&self, x: PointId, r: f64) -> Vec<PointId> {
        (0..self.len()).filter(|&y| self.dist(x, y) < r).collect()
    }

    /// For every point of the space, the distance to the set `q`
    /// (`+∞` when `q` is empty).
    fn dist_to_set(&self, q: &[PointId]) -> Vec<f64> {
        (0..self.len())
            .map(|x| q.iter().map(|&y| self.dist(x, y)).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Distance from a single point to a set; `+∞` when the set is empty.
pub fn dist_point_to_set<S: MetricSpace + ?Sized>(space: &S, x: PointId, q: &[PointId]) -> f64 {
    q.iter().map(|&y| space.dist(x, y)).fold(f64::INFINITY, f64::min)
}

/// CPen(Q, r) = { y : d(Q, y) <= r }. Empty Q gives the empty set.
pub fn closed_penumbra<S: MetricSpace + ?Sized>(space: &S, q: &[PointId], r: f64) -> Vec<PointId> {
    if q.is_empty() {
        return Vec::new();
    }
    space
        .dist_to_set(q)
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d <= r)
        .map(|(x, _)| x)
        .collect()
}

/// Minimum over distinct pairs of `q`; `None` when `|q| < 2`.
pub fn min_pair_distance<S: MetricSpace + ?Sized>(space: &S, q: &[PointId]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (k, &a) in q.iter().enumerate() {
        for &b in &q[k + 1..] {
            let d = space.dist(a, b);
            best = Some(best.map_or(d, |m: f64| m.min(d)));
        }
    }
    best
}

pub fn is_k_separated<S: MetricSpace + ?Sized>(space: &S, q: &[PointId], k: f64) -> bool {
    is_k_separated_with(space, q, k, NumericPolicy::strict())
}

pub fn is_k_separated_with<S: MetricSpace + ?Sized>(
    space: &S,
    q: &[PointId],
    k: f64,
    policy: NumericPolicy,
) -> bool {
    min_pair_distance(space, q).map_or(true, |m| m >= policy.threshold(k))
}

/// Smallest C with CPen(Q, C) covering the whole space.
pub fn covering_radius<S: MetricSpace + ?Sized>(space: &S, q: &[PointId]) -> Result<f64> {
    if q.is_empty() {
        return Err(Error::EmptySubset("covering_radius"));
    }
    Ok(space.dist_to_set(q).into_iter().fold(0.0, f64::max))
}

/// Covering radius restricted to an explicit ambient set.
pub fn covering_radius_within<S: MetricSpace + ?Sized>(
    space: &S,
    q: &[PointId],
    ambient: &[PointId],
) -> Result<f64> {
    if ambient.is_empty() {
        return Ok(0.0);
    }
    if q.is_empty() {
        return Err(Error::EmptySubset("covering_radius_within"));
    }
    let d = space.dist_to_set(q);
    Ok(ambient.iter().map(|&x| d[x]).fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetCertificate {
    pub subset: Vec<PointId>,
    /// `None` when the separation claim is omitted (tau <= 2*epsilon case of
    /// the perturbation lemma).
    pub separation: Option<f64>,
    pub covering_radius: f64,
}

/// Greedy maximal K-separated subset of `candidates` containing `required`,
/// scanned in the caller-supplied order. The certificate records K and the
/// covering radius within `candidates`, which is <= K by maximality.
pub fn greedy_maximal_net<S: MetricSpace + ?Sized>(
    space: &S,
    k: f64,
    required: &[PointId],
    candidates: &[PointId],
    policy: NumericPolicy,
) -> Result<NetCertificate> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("separation K = {k} must be positive")));
    }
    if !is_k_separated_with(space, required, k, policy) {
        return Err(Error::RequiredNotSeparated(k));
    }
    let threshold = policy.threshold(k);
    let mut in_net = vec![false; space.len()];
    let mut blocked = vec![false; space.len()];
    let mut net: Vec<PointId> = Vec::new();

    fn accept<S: MetricSpace + ?Sized>(
        space: &S,
        threshold: f64,
        x: PointId,
        net: &mut Vec<PointId>,
        in_net: &mut [bool],
        blocked: &mut [bool],
    ) {
        net.push(x);
        in_net[x] = true;
        for y in space.ball_open(x, threshold) {
            blocked[y] = true;
        }
    }
    for &x in required {
        if !in_net[x] {
            accept(space, threshold, x, &mut net, &mut in_net, &mut blocked);
        }
    }
    for &c in candidates {
        if !blocked[c] && !in_net[c] {
            accept(space, threshold, c, &mut net, &mut in_net, &mut blocked);
        }
    }

    let covering_radius = if net.is_empty() {
        0.0
    } else {
        covering_radius_within(space, &net, candidates)?
    };
    Ok(NetCertificate { subset: net, separation: Some(k), covering_radius })
}

/// An ε-perturbation: a pairing original id -> image id with every point
/// moved at most epsilon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Perturbation {
    pub pairing: Vec<(PointId, PointId)>,
    pub epsilon: f64,
}

/// Certificates of the image of a perturbed net (Lemma "perturbation net"):
/// separation max(0, tau - 2eps) — omitted unless tau > 2eps — and covering
/// radius eta + eps. The claims are checked to never be tighter than the
/// perturbation bound allows.
pub fn apply_perturbation<S: MetricSpace + ?Sized>(
    space: &S,
    q: &[PointId],
    tau: f64,
    eta: f64,
    pert: &Perturbation,
) -> Result<NetCertificate> {
    let mut seen_src = vec![false; space.len()];
    let mut seen_dst = vec![false; space.len()];
    if pert.pairing.len() != q.len() {
        return Err(Error::PairingNotBijective);
    }
    for &(a, b) in &pert.pairing {
        if a >= space.len() || b >= space.len() || seen_src[a] || seen_dst[b] {
            return Err(Error::PairingNotBijective);
        }
        seen_src[a] = true;
        seen_dst[b] = true;
    }
    if q.iter().any(|&x| !seen_src[x]) {
        return Err(Error::PairingNotBijective);
    }
    for &(a, b) in &pert.pairing {
        let moved = space.dist(a, b);
        if moved > pert.epsilon {
            return Err(Error::PerturbationBound { point: a, moved, epsilon: pert.epsilon });
        }
    }
    let mut image: Vec<PointId> = pert.pairing.iter().map(|&(_, b)| b).collect();
    image.sort_unstable();
    let separation = if tau > 2.0 * pert.epsilon {
        Some(tau - 2.0 * pert.epsilon)
    } else {
        None
    };
    Ok(NetCertificate { subset: image, separation, covering_radius: eta + pert.epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D point set used by most small oracles.
    struct Line(Vec<f64>);

    impl MetricSpace for Line {
        fn len(&self) -> usize {
            self.0.len()
        }
        fn dist(&self, a: PointId, b: PointId) -> f64 {
            (self.0[a] - self.0[b]).abs()
        }
    }

    #[test]
    fn penumbra_trivial_and_line() {
        let line = Line(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let all: Vec<_> = (0..5).collect();
        assert_eq!(closed_penumbra(&line, &all, 0.0), all);
        assert_eq!(closed_penumbra(&line, &[0], 2.0), vec![0, 1, 2]);
        assert!(closed_penumbra(&line, &[], 3.0).is_empty());
    }

    #[test]
    fn separation_line() {
        let line = Line(vec![0.0, 1.0, 2.0]);
        assert!(is_k_separated(&line, &[0], 5.0));
        assert!(is_k_separated(&line, &[0, 1, 2], 1.0));
        assert!(!is_k_separated(&line, &[0, 1, 2], 1.5));
    }

    #[test]
    fn covering_radius_line() {
        let line = Line((0..=10).map(|i| i as f64).collect());
        let all: Vec<_> = (0..11).collect();
        assert_eq!(covering_radius(&line, &all).unwrap(), 0.0);
        assert_eq!(covering_radius(&line, &[0, 10]).unwrap(), 5.0);
        assert!(covering_radius(&line, &[]).is_err());
    }

    #[test]
    fn greedy_line() {
        let line = Line(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let empty = greedy_maximal_net(&line, 2.0, &[], &[], NumericPolicy::strict()).unwrap();
        assert!(empty.subset.is_empty());
        let cands: Vec<_> = (0..5).collect();
        let net = greedy_maximal_net(&line, 2.0, &[], &cands, NumericPolicy::strict()).unwrap();
        assert_eq!(net.subset, vec![0, 2, 4]);
        assert!(net.covering_radius <= 2.0);
    }

    #[test]
    fn greedy_rejects_bad_required() {
        let line = Line(vec![0.0, 0.5]);
        let err = greedy_maximal_net(&line, 2.0, &[0, 1], &[0, 1], NumericPolicy::strict());
        assert!(matches!(err, Err(Error::RequiredNotSeparated(_))));
    }

    #[test]
    fn perturbation_identity() {
        let line = Line(vec![0.0, 3.0, 6.0]);
        let q = vec![0, 1, 2];
        let pert = Perturbation { pairing: vec![(0, 0), (1, 1), (2, 2)], epsilon: 0.0 };
        let cert = apply_perturbation(&line, &q, 3.0, 1.5, &pert).unwrap();
        assert_eq!(cert.separation, Some(3.0));
        assert_eq!(cert.covering_radius, 1.5);
    }

    #[test]
    fn perturbation_claims() {
        // tau = 3, eps = 1 -> separation 1, density eta + 1.
        let line = Line(vec![0.0, 3.0, 0.9, 3.1]);
        let pert = Perturbation { pairing: vec![(0, 2), (1, 3)], epsilon: 1.0 };
        let cert = apply_perturbation(&line, &[0, 1], 3.0, 2.0, &pert).unwrap();
        assert_eq!(cert.separation, Some(1.0));
        assert_eq!(cert.covering_radius, 3.0);
        // tau <= 2 eps omits the separation claim.
        let cert = apply_perturbation(&line, &[0, 1], 1.5, 2.0, &pert).unwrap();
        assert_eq!(cert.separation, None);
    }

    #[test]
    fn perturbation_rejects_non_bijection() {
        let line = Line(vec![0.0, 3.0, 0.5]);
        let pert = Perturbation { pairing: vec![(0, 2), (1, 2)], epsilon: 1.0 };
        assert!(matches!(
            apply_perturbation(&line, &[0, 1], 3.0, 2.0, &pert),
            Err(Error::PairingNotBijective)
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud2d() -> impl Strategy<Value = Vec<(f64, f64)>> {
            proptest::collection::vec(
                (0.0f64..100.0, 0.0f64..100.0),
                1..60,
            )
        }

        struct Plane(Vec<(f64, f64)>);

        impl MetricSpace for Plane {
            fn len(&self) -> usize {
                self.0.len()
            }
            fn dist(&self, a: PointId, b: PointId) -> f64 {
                let (xa, ya) = self.0[a];
                let (xb, yb) = self.0[b];
                ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt()
            }
        }

        proptest! {
            #[test]
            fn penumbra_matches_brute_force(pts in cloud2d(), r in 0.0f64..50.0) {
                let plane = Plane(pts);
                let q: Vec<_> = (0..plane.len()).step_by(3).collect();
                let got = closed_penumbra(&plane, &q, r);
                let want: Vec<_> = (0..plane.len())
                    .filter(|&x| dist_point_to_set(&plane, x, &q) <= r)
                    .collect();
                prop_assert_eq!(got, want);
            }

            #[test]
            fn greedy_net_laws(pts in cloud2d(), k in 0.5f64..20.0) {
                let plane = Plane(pts);
                let cands: Vec<_> = (0..plane.len()).collect();
                let cert =
                    greedy_maximal_net(&plane, k, &[], &cands, NumericPolicy::strict()).unwrap();
                // (a) K-separated by all-pairs scan.
                prop_assert!(is_k_separated(&plane, &cert.subset, k));
                // (b) maximal: re-inserting any excluded candidate breaks it.
                let d = plane.dist_to_set(&cert.subset);
                for &c in &cands {
                    if !cert.subset.contains(&c) {
                        prop_assert!(d[c] < k, "candidate {} is addable", c);
                    }
                }
                // (c) covering radius within candidates <= K.
                prop_assert!(cert.covering_radius <= k);
                // Determinism.
                let again =
                    greedy_maximal_net(&plane, k, &[], &cands, NumericPolicy::strict()).unwrap();
                prop_assert_eq!(cert.subset, again.subset);
            }

            #[test]
            fn increasing_union_stays_separated(pts in cloud2d(), k in 0.5f64..20.0) {
                // Lemma: an increasing union of K-separated sets is K-separated.
                let plane = Plane(pts);
                let cands: Vec<_> = (0..plane.len()).collect();
                let cert =
                    greedy_maximal_net(&plane, k, &[], &cands, NumericPolicy::strict()).unwrap();
                let mut prefix = Vec::new();
                for &x in &cert.subset {
                    prefix.push(x);
                    prop_assert!(is_k_separated(&plane, &prefix, k));
                }
            }
        }
    }
}
