//! Euclidean backend: point clouds in boxes with a uniform grid index,
//! Delone set generation with a certified covering radius, packing bounds,
//! the corona volume budget, gap-creating perturbations, and extraction of
//! colored adjacency graphs at a fixed scale.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::graph::ColoredGraph;
use crate::metric::{min_pair_distance, MetricSpace, PointId};
use crate::{Error, Result};

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Axis-aligned box `[lo, hi]` with nonempty interior.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EuclideanBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl EuclideanBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::DegenerateBox);
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::DegenerateBox);
        }
        Ok(EuclideanBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }

    /// Distance to the box boundary (0 outside).
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for ((&x, &a), &b) in p.iter().zip(&self.lo).zip(&self.hi) {
            best = best.min(x - a).min(b - x);
        }
        best.max(0.0)
    }

    pub fn max_side(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }
}

/// Uniform hash grid over cells of fixed side, mapping cell keys to point
/// ids. Supports range queries and nearest-point searches by Chebyshev
/// shells.
#[derive(Clone, Debug)]
struct GridIndex {
    cell: f64,
    map: HashMap<Vec<i64>, Vec<u32>>,
    /// Cell-key bounding box, to bound shell expansion on sparse data.
    key_lo: Vec<i64>,
    key_hi: Vec<i64>,
}

impl GridIndex {
    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|&x| (x / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, id: u32, p: &[f64]) {
        let key = self.key(p);
        for (d, &k) in key.iter().enumerate() {
            if k < self.key_lo[d] {
                self.key_lo[d] = k;
            }
            if k > self.key_hi[d] {
                self.key_hi[d] = k;
            }
        }
        self.map.entry(key).or_default().push(id);
    }

    fn remove(&mut self, id: u32, p: &[f64]) {
        let key = self.key(p);
        if let Some(v) = self.map.get_mut(&key) {
            v.retain(|&x| x != id);
            if v.is_empty() {
                self.map.remove(&key);
            }
        }
    }

    /// Visits every id stored in cells intersecting the closed box
    /// `center +- r`.
    fn visit_box(&self, center: &[f64], r: f64, mut f: impl FnMut(u32)) {
        let d = center.len();
        let lo: Vec<i64> =
            center.iter().map(|&x| ((x - r) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> =
            center.iter().map(|&x| ((x + r) / self.cell).floor() as i64).collect();
        let mut key = lo.clone();
        loop {
            if let Some(v) = self.map.get(&key) {
                for &id in v {
                    f(id);
                }
            }
            // Odometer increment over [lo, hi].
            let mut axis = d;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                if key[axis] < hi[axis] {
                    key[axis] += 1;
                    for (k, &l) in key.iter_mut().zip(&lo).skip(axis + 1) {
                        *k = l;
                    }
                    break;
                }
            }
        }
    }
}

/// Finite point set in `R^d`, optionally indexed by a uniform grid for
/// range and nearest queries.
#[derive(Clone, Debug)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    index: Option<GridIndex>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "coordinate count {} not divisible by dim {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coordinate".into()));
        }
        Ok(PointCloud { dim, coords, index: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn build_index(&mut self, cell: f64) {
        assert!(cell > 0.0 && cell.is_finite());
        let mut index = GridIndex {
            cell,
            map: HashMap::new(),
            key_lo: vec![i64::MAX; self.dim],
            key_hi: vec![i64::MIN; self.dim],
        };
        for i in 0..self.len() {
            let p = &self.coords[i * self.dim..(i + 1) * self.dim];
            let key: Vec<i64> = p.iter().map(|&x| (x / cell).floor() as i64).collect();
            for (d, &k) in key.iter().enumerate() {
                index.key_lo[d] = index.key_lo[d].min(k);
                index.key_hi[d] = index.key_hi[d].max(k);
            }
            index.map.entry(key).or_default().push(i as u32);
        }
        self.index = Some(index);
    }

    /// Moves point `i`, keeping the grid index consistent.
    pub fn set_point(&mut self, i: usize, new: &[f64]) {
        assert_eq!(new.len(), self.dim);
        if let Some(index) = &mut self.index {
            let old = self.coords[i * self.dim..(i + 1) * self.dim].to_vec();
            index.remove(i as u32, &old);
        }
        self.coords[i * self.dim..(i + 1) * self.dim].copy_from_slice(new);
        if let Some(index) = &mut self.index {
            let p = self.coords[i * self.dim..(i + 1) * self.dim].to_vec();
            index.insert(i as u32, &p);
        }
    }

    /// Appends a point (id = previous len).
    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        let id = self.len() as u32;
        self.coords.extend_from_slice(p);
        if let Some(index) = &mut self.index {
            index.insert(id, p);
        }
    }

    /// Ids within closed Euclidean distance `r` of `center`, ascending.
    pub fn within(&self, center: &[f64], r: f64) -> Vec<u32> {
        let mut out = Vec::new();
        match &self.index {
            Some(index) => {
                index.visit_box(center, r, |id| {
                    if euclid(self.point(id as usize), center) <= r {
                        out.push(id);
                    }
                });
                out.sort_unstable();
                out.dedup();
            }
            None => {
                for i in 0..self.len() {
                    if euclid(self.point(i), center) <= r {
                        out.push(i as u32);
                    }
                }
            }
        }
        out
    }

    /// Distance from `pt` to the nearest stored point (`inf` if empty),
    /// optionally skipping one id.
    pub fn nearest_dist(&self, pt: &[f64], skip: Option<usize>) -> f64 {
        match &self.index {
            Some(index) if !self.is_empty() => {
                let cell = index.cell;
                let center_key: Vec<i64> =
                    pt.iter().map(|&x| (x / cell).floor() as i64).collect();
                // Largest useful Chebyshev cell radius given the data extent.
                let span = center_key
                    .iter()
                    .zip(index.key_lo.iter().zip(&index.key_hi))
                    .map(|(&c, (&lo, &hi))| (c - lo).abs().max((hi - c).abs()))
                    .max()
                    .unwrap_or(0);
                let mut best = f64::INFINITY;
                for k in 0..=span {
                    if best.is_finite() && (k - 1).max(0) as f64 * cell > best {
                        break;
                    }
                    self.visit_shell(index, &center_key, k, |id| {
                        if skip != Some(id as usize) {
                            best = best.min(euclid(self.point(id as usize), pt));
                        }
                    });
                }
                best
            }
            _ => {
                let mut best = f64::INFINITY;
                for i in 0..self.len() {
                    if skip != Some(i) {
                        best = best.min(euclid(self.point(i), pt));
                    }
                }
                best
            }
        }
    }

    fn visit_shell(
        &self,
        index: &GridIndex,
        center_key: &[i64],
        k: i64,
        mut f: impl FnMut(u32),
    ) {
        let d = center_key.len();
        let mut key: Vec<i64> = center_key.iter().map(|&c| c - k).collect();
        loop {
            if key.iter().zip(center_key).map(|(&a, &b)| (a - b).abs()).max() == Some(k) {
                if let Some(v) = index.map.get(&key) {
                    for &id in v {
                        f(id);
                    }
                }
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                if key[axis] < center_key[axis] + k {
                    key[axis] += 1;
                    for (x, &c) in key.iter_mut().zip(center_key).skip(axis + 1) {
                        *x = c - k;
                    }
                    break;
                }
            }
        }
    }

    /// CSV with a `# dim=<d>` header line; one comma-separated point per
    /// row. Floats print in shortest round-trip form.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# dim={}\n", self.dim);
        for i in 0..self.len() {
            let p = self.point(i);
            for (k, x) in p.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str, file: &str) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut coords = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                file: file.to_string(),
                line: lineno + 1,
                reason,
            };
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("dim=") {
                    let d: usize =
                        v.trim().parse().map_err(|_| err(format!("bad dim {v:?}")))?;
                    if d == 0 {
                        return Err(err("dim must be >= 1".into()));
                    }
                    if dim.replace(d).is_some() {
                        return Err(err("duplicate dim header".into()));
                    }
                }
                continue;
            }
            let d = dim.ok_or_else(|| err("data before `# dim=<d>` header".into()))?;
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("bad float: {e}")))?;
            if row.len() != d {
                return Err(err(format!("expected {d} coordinates, got {}", row.len())));
            }
            coords.extend(row);
        }
        let dim = dim.ok_or_else(|| Error::Parse {
            file: file.to_string(),
            line: 0,
            reason: "missing `# dim=<d>` header".into(),
        })?;
        PointCloud::new(dim, coords)
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

impl MetricSpace for PointCloud {
    fn len(&self) -> usize {
        PointCloud::len(self)
    }

    fn dist(&self, a: PointId, b: PointId) -> f64 {
        euclid(self.point(a), self.point(b))
    }

    fn ball_open(&self, x: PointId, r: f64) -> Vec<PointId> {
        let c = self.point(x).to_vec();
        self.within(&c, r)
            .into_iter()
            .map(|id| id as PointId)
            .filter(|&id| euclid(self.point(id), &c) < r)
            .collect()
    }
}

/// Volume of the d-dimensional unit ball: V_0 = 1, V_1 = 2,
/// V_d = V_{d-2} * 2 pi / d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Packing bound: a tau-separated set inside a closed ball of radius delta
/// in `R^d` has at most `floor(((2 delta + tau) / tau)^d)` points.
pub fn packing_bound(d: usize, tau: f64, delta: f64) -> Result<u64> {
    if !(tau > 0.0) || !(delta >= 0.0) || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "packing_bound needs d >= 1, tau > 0, delta >= 0 (got d={d}, tau={tau}, delta={delta})"
        )));
    }
    Ok(((2.0 * delta + tau) / tau).powi(d as i32).floor() as u64)
}

/// The constants of the corona volume argument for parameters
/// (d, tau, sigma, epsilon): `C` bounds the number of coronas that can
/// constrain one replacement, `K` is the volume of the epsilon-ball of
/// candidate positions, `L = K / (2C)` is the per-corona volume budget, and
/// `rho` is the largest corona half-width whose corona volume stays within
/// `L`. Any `0 < L < K / C` works; half the ratio keeps `C * L = K/2 < K`
/// exact.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoronaBudget {
    pub dim: usize,
    pub tau: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub c: u64,
    pub k: f64,
    pub l: f64,
    pub rho: f64,
}

pub fn corona_volume_budget(d: usize, tau: f64, sigma: f64, epsilon: f64) -> Result<CoronaBudget> {
    if !(tau > 0.0) || !(sigma > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "corona budget needs tau, sigma, epsilon > 0 (got {tau}, {sigma}, {epsilon})"
        )));
    }
    if !(epsilon < tau / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be < tau/2 = {}",
            tau / 2.0
        )));
    }
    // Centers whose coronas can touch the candidate ball lie within
    // sigma + P0 + tau/2 of the point (P0 = sigma), and are (tau - 2 eps)
    // separated after earlier moves.
    let c = packing_bound(d, tau - 2.0 * epsilon, sigma + sigma + tau / 2.0)?;
    let vd = unit_ball_volume(d);
    let k = vd * epsilon.powi(d as i32);
    let l = k / (2.0 * c as f64);
    // Corona volume at half-width rho: V_d ((sigma + rho)^d - (sigma - rho)^d),
    // strictly increasing in rho; find the largest rho staying <= l.
    let vol = |rho: f64| vd * ((sigma + rho).powi(d as i32) - (sigma - rho).powi(d as i32));
    let mut hi = epsilon.min(sigma);
    if vol(hi) <= l {
        // Degenerate parameter regime; the whole range qualifies.
        return Ok(CoronaBudget { dim: d, tau, sigma, epsilon, c, k, l, rho: hi });
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vol(mid) <= l {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = lo;
    if !(rho > 0.0) {
        return Err(Error::NoPositiveRho { c, k, l });
    }
    Ok(CoronaBudget { dim: d, tau, sigma, epsilon, c, k, l, rho })
}

/// A point set that is tau-separated and eta-dense relative to its window:
/// every window point at distance >= eta from the boundary is within eta of
/// the set.
#[derive(Clone, Debug)]
pub struct DeloneSet {
    pub cloud: PointCloud,
    pub window: EuclideanBox,
    pub tau: f64,
    pub eta: f64,
}

/// Greedy maximal tau-separated subset of a pitch tau/8 lattice over the
/// window, rastered in lexicographic order. Seed 0 anchors the lattice at
/// the window corner; other seeds shift it by a deterministic offset in
/// `[0, pitch)^d`. The stored `eta` is a certified covering radius measured
/// on a probe grid (see [`certified_covering_radius`]).
pub fn generate_delone(window: &EuclideanBox, tau: f64, seed: u64) -> Result<DeloneSet> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let d = window.dim();
    let pitch = tau / 8.0;
    let mut offset = vec![0.0; d];
    if seed != 0 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for o in &mut offset {
            *o = rng.gen::<f64>() * pitch;
        }
    }
    let counts: Vec<usize> = (0..d)
        .map(|k| {
            let span = window.hi[k] - window.lo[k] - offset[k];
            if span < 0.0 {
                0
            } else {
                (span / pitch).floor() as usize + 1
            }
        })
        .collect();

    let mut cloud = PointCloud::new(d, Vec::new())?;
    cloud.build_index(tau);
    if counts.iter().all(|&c| c > 0) {
        let mut idx = vec![0usize; d];
        let mut pt = vec![0.0; d];
        'raster: loop {
            for k in 0..d {
                pt[k] = window.lo[k] + offset[k] + idx[k] as f64 * pitch;
            }
            if cloud.nearest_dist(&pt, None) >= tau {
                cloud.push(&pt);
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'raster;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < counts[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
    if cloud.is_empty() {
        let center: Vec<f64> =
            window.lo.iter().zip(&window.hi).map(|(a, b)| 0.5 * (a + b)).collect();
        cloud.push(&center);
    }
    let eta = certified_covering_radius(&cloud, window, pitch);
    Ok(DeloneSet { cloud, window: window.clone(), tau, eta })
}

/// Smallest `e` such that every window point at boundary distance >= e is
/// provably within `e` of the cloud. Covering is sampled on a probe lattice
/// of the given pitch anchored at the window corner; the quantization pad
/// `pitch * sqrt(d) / 2` makes the sampled maximum an upper bound for the
/// continuum: a point y with boundary distance >= e has a probe within pad
/// whose own boundary distance is >= e - pad, so
/// `g(e) = pad + max { dist(probe, X) : bd(probe) >= e - pad }` dominates
/// the true covering on the eroded window, and g is nonincreasing, so the
/// crossing g(e) <= e is found by bisection.
pub fn certified_covering_radius(
    cloud: &PointCloud,
    window: &EuclideanBox,
    pitch: f64,
) -> f64 {
    let d = window.dim();
    let pad = pitch * (d as f64).sqrt() / 2.0;
    let counts: Vec<usize> = (0..d)
        .map(|k| ((window.hi[k] - window.lo[k]) / pitch).floor() as usize + 1)
        .collect();
    // (boundary distance, covering distance) per probe.
    let mut probes: Vec<(f64, f64)> = Vec::new();
    let mut idx = vec![0usize; d];
    let mut pt = vec![0.0; d];
    'raster: loop {
        for k in 0..d {
            pt[k] = (window.lo[k] + idx[k] as f64 * pitch).min(window.hi[k]);
        }
        probes.push((window.boundary_distance(&pt), cloud.nearest_dist(&pt, None)));
        let mut axis = d;
        loop {
            if axis == 0 {
                break 'raster;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix_max[i] = max covering distance among probes with bd >= bd_i.
    let mut suffix_max = vec![0.0f64; probes.len() + 1];
    for i in (0..probes.len()).rev() {
        suffix_max[i] = suffix_max[i + 1].max(probes[i].1);
    }
    let g = |e: f64| -> f64 {
        let cut = e - pad;
        let first = probes.partition_point(|&(bd, _)| bd < cut);
        pad + suffix_max[first]
    };
    let mut lo = 0.0f64;
    let mut hi = g(0.0).max(pad);
    debug_assert!(g(hi) <= hi);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Record of a corona-gap perturbation: which points moved, where, and by
/// how much. Unmoved points (including the frozen set) are bitwise
/// untouched.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CloudPerturbation {
    pub epsilon: f64,
    pub sigma: f64,
    pub rho: f64,
    pub moved: Vec<MovedPoint>,
    pub max_move: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MovedPoint {
    pub id: usize,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub moved: f64,
}

const SWEEP_CELL_CAP: u64 = 2_000_000;

/// Perturbs each point of the set (skipping `frozen`, which must be
/// gap-free among itself) by strictly less than epsilon so that no pair
/// distance lands in the open band `(sigma - rho, sigma + rho)`, with rho
/// from [`corona_volume_budget`]. Points are processed in ascending id
/// order and moved only when they currently violate the band; a moved point
/// is validated against every current position, so the final configuration
/// is band-free. The result is `(tau - 2 eps)`-separated and
/// `(eta + eps)`-dense by the stability of perturbed Delone sets.
pub fn corona_gap_perturb(
    ds: &DeloneSet,
    sigma: f64,
    epsilon: f64,
    frozen: &[usize],
) -> Result<(DeloneSet, CloudPerturbation, CoronaBudget)> {
    let budget = corona_volume_budget(ds.cloud.dim(), ds.tau, sigma, epsilon)?;
    let rho = budget.rho;
    let n = ds.cloud.len();
    let mut is_frozen = vec![false; n];
    for w in frozen.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidParameter("frozen ids must be ascending unique".into()));
        }
    }
    for &i in frozen {
        if i >= n {
            return Err(Error::InvalidParameter(format!("frozen id {i} out of range")));
        }
        is_frozen[i] = true;
    }

    let mut cloud = ds.cloud.clone();
    cloud.build_index(sigma + rho);

    let in_band = |d: f64| sigma - rho < d && d < sigma + rho;
    let band_conflict = |cloud: &PointCloud, pt: &[f64], skip: usize| -> bool {
        cloud
            .within(pt, sigma + rho)
            .iter()
            .any(|&j| j as usize != skip && in_band(euclid(cloud.point(j as usize), pt)))
    };

    // Frozen points must already be mutually gap-free; they cannot be fixed.
    for &i in frozen {
        let pt = cloud.point(i).to_vec();
        let clash = cloud.within(&pt, sigma + rho).iter().any(|&j| {
            let j = j as usize;
            j != i && is_frozen[j] && in_band(euclid(cloud.point(j), &pt))
        });
        if clash {
            return Err(Error::Verification(format!(
                "frozen set has a corona-band pair involving point {i}"
            )));
        }
    }

    let res = rho.min(epsilon) / 4.0;
    let mut moved = Vec::new();
    let mut max_move = 0.0f64;
    for i in 0..n {
        if is_frozen[i] {
            continue;
        }
        let x = cloud.point(i).to_vec();
        if !band_conflict(&cloud, &x, i) {
            continue;
        }
        let cand = sweep_for_gap_free(&cloud, &x, i, epsilon, res, |cloud, pt| {
            !band_conflict(cloud, pt, i)
        })?;
        let dist = euclid(&cand, &x);
        cloud.set_point(i, &cand);
        max_move = max_move.max(dist);
        moved.push(MovedPoint { id: i, from: x, to: cand, moved: dist });
    }

    let tau_out = ds.tau - 2.0 * epsilon;
    let eta_out = ds.eta + epsilon;
    let record = CloudPerturbation { epsilon, sigma, rho, moved, max_move };
    let out = DeloneSet { cloud, window: ds.window.clone(), tau: tau_out, eta: eta_out };
    Ok((out, record, budget))
}

/// Chebyshev-shell sweep over the lattice `x + res * Z^d`, ascending shell
/// radius, lexicographic within a shell; returns the first candidate
/// strictly inside `B(x, epsilon)` accepted by `valid`. The volume argument
/// guarantees one exists; a hard cap converts pathologies into
/// [`Error::SearchExhausted`].
fn sweep_for_gap_free(
    cloud: &PointCloud,
    x: &[f64],
    id: usize,
    epsilon: f64,
    res: f64,
    valid: impl Fn(&PointCloud, &[f64]) -> bool,
) -> Result<Vec<f64>> {
    let d = x.len();
    let max_k = (epsilon / res).ceil() as i64;
    let mut visited = 0u64;
    let mut cand = vec![0.0; d];
    for k in 0..=max_k {
        let mut v: Vec<i64> = vec![-k; d];
        'shell: loop {
            if v.iter().map(|&a| a.abs()).max() == Some(k) {
                visited += 1;
                if visited > SWEEP_CELL_CAP {
                    return Err(Error::SearchExhausted { point: id });
                }
                for (c, (&xi, &vi)) in cand.iter_mut().zip(x.iter().zip(&v)) {
                    *c = xi + res * vi as f64;
                }
                if euclid(&cand, x) < epsilon && valid(cloud, &cand) {
                    return Ok(cand);
                }
            }
            // Odometer increment over [-k, k]^d.
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'shell;
                }
                axis -= 1;
                if v[axis] < k {
                    v[axis] += 1;
                    for a in v.iter_mut().skip(axis + 1) {
                        *a = -k;
                    }
                    break;
                }
            }
        }
    }
    Err(Error::SearchExhausted { point: id })
}

/// All unordered pairs with distance in the open band
/// `(sigma - rho, sigma + rho)`.
pub fn corona_gap_violations(cloud: &PointCloud, sigma: f64, rho: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..cloud.len() {
        let pt = cloud.point(i).to_vec();
        for j in cloud.within(&pt, sigma + rho) {
            let j = j as usize;
            if j > i {
                let d = euclid(cloud.point(j), &pt);
                if sigma - rho < d && d < sigma + rho {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// Colored graph with an edge exactly when `0 < d(x, y) <= sigma`. Colors
/// default to the constant color 1.
pub fn unit_disk_graph(
    cloud: &PointCloud,
    sigma: f64,
    colors: Option<Vec<u32>>,
) -> Result<ColoredGraph> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let n = cloud.len();
    let colors = colors.unwrap_or_else(|| vec![1; n]);
    if colors.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} colors for {n} points",
            colors.len()
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let pt = cloud.point(i).to_vec();
        for j in cloud.within(&pt, sigma) {
            let j = j as usize;
            if j > i {
                let d = euclid(cloud.point(j), &pt);
                if d > 0.0 {
                    edges.push((i as u32, j as u32));
                }
            }
        }
    }
    ColoredGraph::from_edges(colors, &edges)
}

/// Adjacency graph of a Delone set at scale sigma, with the claims that
/// back it enforced: requires `sigma >= 3 eta` (otherwise the connectivity
/// claim is unsupported), checks connectivity, and checks the packing
/// degree bound `deg(x) <= floor(((2 sigma + tau)/tau)^d) - 1`.
pub fn delone_to_graph(
    ds: &DeloneSet,
    sigma: f64,
    colors: Option<Vec<u32>>,
) -> Result<ColoredGraph> {
    let three_eta = 3.0 * ds.eta;
    if sigma < three_eta {
        return Err(Error::ConnectivityUnsupported { sigma, three_eta });
    }
    let g = unit_disk_graph(&ds.cloud, sigma, colors)?;
    if !g.is_connected() {
        return Err(Error::NotConnected);
    }
    let bound = packing_bound(ds.cloud.dim(), ds.tau, sigma)?;
    if u64::from(g.max_degree()) + 1 > bound {
        return Err(Error::Verification(format!(
            "max degree {} exceeds packing bound {} - 1",
            g.max_degree(),
            bound
        )));
    }
    Ok(g)
}

/// Numerical check of the metric comparison at scale sigma: hop balls sit
/// inside Euclidean balls scaled by sigma, and Euclidean balls (at interior
/// centers) sit inside hop balls of radius `floor(r / eta) + 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    pub sigma: f64,
    pub r: f64,
    pub hop_r: u32,
    pub hop_bound: u32,
    pub centers_upper: usize,
    pub centers_lower: usize,
    pub ok: bool,
    pub failures: Vec<String>,
}

pub fn check_metric_sandwich(
    ds: &DeloneSet,
    g: &ColoredGraph,
    sigma: f64,
    r: f64,
) -> Result<SandwichReport> {
    if g.n() != ds.cloud.len() {
        return Err(Error::Verification(format!(
            "graph has {} vertices for {} points",
            g.n(),
            ds.cloud.len()
        )));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
    }
    let hop_r = r.floor() as u32;
    let hop_bound = (r / ds.eta).floor() as u32 + 1;
    let mut scratch = crate::graph::BfsScratch::new(g.n());
    let mut failures = Vec::new();
    let note = |s: String, failures: &mut Vec<String>| {
        if failures.len() < 8 {
            failures.push(s);
        }
    };
    let mut centers_lower = 0usize;
    let n = ds.cloud.len();
    for x in 0..n {
        let px = ds.cloud.point(x).to_vec();
        // Upper: hop distance k implies Euclidean distance <= k * sigma.
        scratch.run(g, &[x as u32], hop_r);
        for y in 0..n as u32 {
            if let Some(k) = scratch.dist_of(y) {
                let de = euclid(ds.cloud.point(y as usize), &px);
                if de > k as f64 * sigma + 1e-9 {
                    note(
                        format!("hop({x},{y}) = {k} but |x-y| = {de} > {k} * {sigma}"),
                        &mut failures,
                    );
                }
            }
        }
        // Lower: only claimed well inside the window.
        if ds.window.boundary_distance(&px) >= r + 2.0 * ds.eta {
            centers_lower += 1;
            scratch.run(g, &[x as u32], hop_bound);
            for y in ds.cloud.within(&px, r) {
                if scratch.dist_of(y).is_none() {
                    note(
                        format!(
                            "|{x}-{y}| <= {r} but hop({x},{y}) > floor(r/eta)+1 = {hop_bound}"
                        ),
                        &mut failures,
                    );
                }
            }
        }
    }
    let ok = failures.is_empty();
    Ok(SandwichReport {
        sigma,
        r,
        hop_r,
        hop_bound,
        centers_upper: n,
        centers_lower,
        ok,
        failures,
    })
}

/// Measured minimum pairwise distance (None for < 2 points).
pub fn min_separation(cloud: &PointCloud) -> Option<f64> {
    let ids: Vec<PointId> = (0..cloud.len()).collect();
    min_pair_distance(cloud, &ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box1(lo: f64, hi: f64) -> EuclideanBox {
        EuclideanBox::new(vec![lo], vec![hi]).unwrap()
    }

    fn box2(side: f64) -> EuclideanBox {
        EuclideanBox::new(vec![0.0, 0.0], vec![side, side]).unwrap()
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-12);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn packing_bound_oracles() {
        assert_eq!(packing_bound(1, 1.0, 1.0).unwrap(), 3);
        assert_eq!(packing_bound(2, 1.0, 3.0).unwrap(), 49);
        assert!(packing_bound(2, 0.0, 1.0).is_err());
    }

    #[test]
    fn corona_budget_oracle() {
        // Frozen reference for d=2, tau=1, sigma=3, epsilon=0.2.
        let b = corona_volume_budget(2, 1.0, 3.0, 0.2).unwrap();
        assert_eq!(b.c, 513);
        let k = std::f64::consts::PI * 0.04;
        assert!((b.k - k).abs() < 1e-12);
        assert!((b.l - k / 1026.0).abs() < 1e-15);
        let rho_exact = b.l / (12.0 * std::f64::consts::PI);
        assert!((b.rho - rho_exact).abs() / rho_exact < 1e-9, "rho = {}", b.rho);
        // Budget consistency: C * L = K / 2 < K, rho positive.
        assert!(b.c as f64 * b.l < b.k);
        assert!(b.rho > 0.0);
        // epsilon >= tau/2 is rejected.
        assert!(corona_volume_budget(2, 1.0, 3.0, 0.5).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let cloud = PointCloud::new(2, vec![0.0, 0.0, 1.5, 2.0, -3.25, 4.0]).unwrap();
        let text = cloud.to_csv_string();
        assert!(text.starts_with("# dim=2\n"));
        let back = PointCloud::parse_csv(&text, "mem").unwrap();
        assert_eq!(back.to_csv_string(), text);
        assert!(PointCloud::parse_csv("1,2\n", "mem").is_err());
    }

    #[test]
    fn grid_queries_match_brute_force() {
        let coords: Vec<f64> = (0..40)
            .flat_map(|i| {
                let x = (i * 37 % 100) as f64 / 10.0;
                let y = (i * 61 % 100) as f64 / 10.0;
                [x, y]
            })
            .collect();
        let brute = PointCloud::new(2, coords.clone()).unwrap();
        let mut grid = PointCloud::new(2, coords).unwrap();
        grid.build_index(1.3);
        for i in 0..brute.len() {
            let p = brute.point(i).to_vec();
            for r in [0.5, 1.0, 2.7] {
                assert_eq!(grid.within(&p, r), brute.within(&p, r));
            }
            let probe = [p[0] + 0.3, p[1] - 0.2];
            let a = grid.nearest_dist(&probe, Some(i));
            let b = brute.nearest_dist(&probe, Some(i));
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn generate_line_example() {
        // 1-D window [0, 10], tau = 2, seed 0: the raster greedy picks
        // exactly 0, 2, 4, 6, 8, 10.
        let ds = generate_delone(&box1(0.0, 10.0), 2.0, 0).unwrap();
        let got: Vec<f64> = (0..ds.cloud.len()).map(|i| ds.cloud.point(i)[0]).collect();
        assert_eq!(got, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        // Covering on the eroded window is 1; certificate includes the
        // quantization pad.
        assert!(ds.eta >= 1.0 && ds.eta <= 1.3, "eta = {}", ds.eta);
        assert_eq!(min_separation(&ds.cloud), Some(2.0));
    }

    #[test]
    fn generate_2d_is_delone() {
        let ds = generate_delone(&box2(12.0), 1.0, 7).unwrap();
        assert!(ds.cloud.len() > 100);
        let sep = min_separation(&ds.cloud).unwrap();
        assert!(sep >= 1.0, "sep = {sep}");
        assert!(ds.eta < 1.0, "eta = {}", ds.eta);
        // Certified eta really covers: check against a fresh fine probe set.
        let fine = certified_covering_radius(&ds.cloud, &ds.window, 0.05);
        assert!(fine <= ds.eta + 1e-9, "fine = {fine}, eta = {}", ds.eta);
    }

    #[test]
    fn generate_seeds_differ_deterministically() {
        let a1 = generate_delone(&box2(6.0), 1.0, 3).unwrap();
        let a2 = generate_delone(&box2(6.0), 1.0, 3).unwrap();
        assert_eq!(a1.cloud.to_csv_string(), a2.cloud.to_csv_string());
        let b = generate_delone(&box2(6.0), 1.0, 4).unwrap();
        assert_ne!(a1.cloud.to_csv_string(), b.cloud.to_csv_string());
    }

    #[test]
    fn two_point_edge_rule() {
        let cloud = PointCloud::new(2, vec![0.0, 0.0, 3.0, 0.0]).unwrap();
        let g = unit_disk_graph(&cloud, 3.0, None).unwrap();
        assert!(g.has_edge(0, 1), "closed threshold: d = sigma is an edge");
        let g = unit_disk_graph(&cloud, 2.99, None).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn unit_grid_neighborhoods() {
        let mut coords = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                coords.push(x as f64);
                coords.push(y as f64);
            }
        }
        let cloud = PointCloud::new(2, coords).unwrap();
        let g4 = unit_disk_graph(&cloud, 1.0, None).unwrap();
        assert_eq!(g4.degree(4), 4); // center of the 3x3 grid
        assert_eq!(g4.degree(0), 2);
        let g8 = unit_disk_graph(&cloud, 1.5, None).unwrap();
        assert_eq!(g8.degree(4), 8);
        assert_eq!(g8.degree(0), 3);
    }

    #[test]
    fn gap_free_input_is_identity() {
        // Points 0 and 5 apart: nothing in the band around sigma = 3.
        let base = PointCloud::new(1, vec![0.0, 5.0]).unwrap();
        let ds = DeloneSet { cloud: base, window: box1(0.0, 5.0), tau: 5.0, eta: 2.5 };
        let (out, rec, budget) = corona_gap_perturb(&ds, 3.0, 0.3, &[]).unwrap();
        assert!(rec.moved.is_empty());
        assert_eq!(out.cloud.point(0), &[0.0]);
        assert_eq!(out.cloud.point(1), &[5.0]);
        assert!(budget.rho > 0.0);
    }

    #[test]
    fn perturbation_clears_band_and_respects_frozen() {
        let ds = generate_delone(&box2(12.0), 1.0, 7).unwrap();
        // Ids 0..3 only: the first raster row has spacing exactly 1, so
        // points 0 and 3 sit at distance sigma and could not all be frozen.
        let frozen: Vec<usize> = (0..3).collect();
        let before: Vec<Vec<f64>> = frozen.iter().map(|&i| ds.cloud.point(i).to_vec()).collect();
        let (out, rec, budget) = corona_gap_perturb(&ds, 3.0, 0.2, &frozen).unwrap();
        // Band is clear.
        assert!(corona_gap_violations(&out.cloud, 3.0, budget.rho).is_empty());
        // Moves are strict and bounded; frozen points are bitwise unmoved.
        assert!(rec.max_move < 0.2);
        for m in &rec.moved {
            assert!(m.moved < 0.2 && m.moved > 0.0);
            assert!(!frozen.contains(&m.id));
        }
        for (&i, old) in frozen.iter().zip(&before) {
            assert_eq!(out.cloud.point(i), old.as_slice());
        }
        // Separation claim tau - 2 eps holds measured.
        let sep = min_separation(&out.cloud).unwrap();
        assert!(sep >= out.tau - 1e-9, "sep = {sep}, claim = {}", out.tau);
        assert!((out.eta - (ds.eta + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn frozen_band_pair_rejected() {
        // Two frozen points exactly sigma apart sit inside the open band.
        let cloud = PointCloud::new(1, vec![0.0, 3.0]).unwrap();
        let ds = DeloneSet { cloud, window: box1(0.0, 3.0), tau: 3.0, eta: 1.5 };
        assert!(matches!(
            corona_gap_perturb(&ds, 3.0, 0.4, &[0, 1]),
            Err(Error::Verification(_))
        ));
    }

    #[test]
    fn extraction_gate_and_connectivity() {
        let ds = generate_delone(&box2(12.0), 1.0, 7).unwrap();
        assert!(3.0 >= 3.0 * ds.eta, "eta = {}", ds.eta);
        let g = delone_to_graph(&ds, 3.0, None).unwrap();
        assert!(g.is_connected());
        let bound = packing_bound(2, 1.0, 3.0).unwrap();
        assert!(u64::from(g.max_degree()) + 1 <= bound);
        // Below the gate: rejected with the claim named.
        assert!(matches!(
            delone_to_graph(&ds, 3.0 * ds.eta - 0.1, None),
            Err(Error::ConnectivityUnsupported { .. })
        ));
    }

    #[test]
    fn metric_sandwich_holds() {
        let ds = generate_delone(&box2(12.0), 1.0, 7).unwrap();
        let g = delone_to_graph(&ds, 3.0, None).unwrap();
        let rep = check_metric_sandwich(&ds, &g, 3.0, 2.0).unwrap();
        assert!(rep.ok, "failures: {:?}", rep.failures);
        assert!(rep.centers_lower > 0, "no interior centers checked");
    }
}
