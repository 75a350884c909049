//! Desk-scale 2D registration experiments measuring the bias injected by
//! two-cluster raypaths.
//!
//! The scene is a square room scanned from the center, each wall sampled
//! on a uniform lattice. A designated block of raypaths aimed at the +x
//! wall is made ambiguous: the reference holds the stable near-surface
//! point (both cluster points for a map reference) while the current scan
//! reports the near or far cluster with probability one half each, the
//! far point displaced by the gap along a common direction. With that
//! geometry the expected small-gap translation bias is exactly
//! `injected_fraction * gap / 2` for both registrars.
//!
//! The default lattice spacing divides the NDT voxel size and is phased
//! half a step off the voxel boundaries, so sub-spacing transforms move
//! no point across a voxel or association boundary; without that
//! alignment, boundary-crossing artifacts would contaminate the measured
//! bias.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegError {
    #[error("no current point found a reference match within the radius")]
    DegenerateAssociation,
    #[error("no voxel is populated in both clouds")]
    NoCommonVoxels,
}

/// Planar rigid transform: rotation by `theta` followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform2d {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Transform2d {
    pub fn identity() -> Self {
        Transform2d {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Transform2d { theta, tx, ty }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (sin, cos) = self.theta.sin_cos();
        [
            cos * p[0] - sin * p[1] + self.tx,
            sin * p[0] + cos * p[1] + self.ty,
        ]
    }

    /// `self` after `inner`: `(self ∘ inner)(p) = self(inner(p))`.
    pub fn compose(&self, inner: &Transform2d) -> Transform2d {
        let (sin, cos) = self.theta.sin_cos();
        Transform2d {
            theta: self.theta + inner.theta,
            tx: cos * inner.tx - sin * inner.ty + self.tx,
            ty: sin * inner.tx + cos * inner.ty + self.ty,
        }
    }

    pub fn inverse(&self) -> Transform2d {
        let (sin, cos) = self.theta.sin_cos();
        Transform2d {
            theta: -self.theta,
            tx: -(cos * self.tx + sin * self.ty),
            ty: -(-sin * self.tx + cos * self.ty),
        }
    }

    pub fn translation_norm(&self) -> f64 {
        (self.tx * self.tx + self.ty * self.ty).sqrt()
    }
}

/// Which reference the current scan registers against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Prior scan holding the stable near-cluster point per raypath.
    Scan,
    /// Map holding a point for each cluster of an ambiguous raypath.
    Map,
}

impl ReferenceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceKind::Scan => "scan",
            ReferenceKind::Map => "map",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    pub max_match_radius: f64,
    pub max_iterations: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_match_radius: 0.5,
            max_iterations: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdtParams {
    pub voxel_size: f64,
    pub max_iterations: usize,
}

impl Default for NdtParams {
    fn default() -> Self {
        NdtParams {
            voxel_size: 1.0,
            max_iterations: 50,
        }
    }
}

/// Experiment template: room geometry, injection, registrar parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Half side length of the square room, meters.
    pub room_half_extent: f64,
    /// Total scan points, spread evenly over the four walls.
    pub rays: usize,
    /// Cluster gap, meters.
    pub gap: f64,
    /// Fraction of rays made ambiguous.
    pub injected_fraction: f64,
    pub reference: ReferenceKind,
    pub icp: IcpParams,
    pub ndt: NdtParams,
    /// Per-coordinate Gaussian noise on every point, meters.
    pub noise_std: f64,
    /// Transform the registrar must recover (maps current onto reference).
    pub truth: Transform2d,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        // 90 points per 9 m wall: the 0.1 m spacing divides the default
        // voxel size, keeping the lattice clear of voxel boundaries
        RegistrationConfig {
            room_half_extent: 4.5,
            rays: 360,
            gap: 0.0,
            injected_fraction: 0.0,
            reference: ReferenceKind::Scan,
            icp: IcpParams::default(),
            ndt: NdtParams::default(),
            noise_std: 0.01,
            truth: Transform2d::identity(),
            seed: 0,
        }
    }
}

/// One generated trial: clouds plus the transform to recover.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub current: Vec<[f64; 2]>,
    pub reference: Vec<[f64; 2]>,
    pub truth: Transform2d,
}

fn sample_noise(noise: Option<&Normal<f64>>, rng: &mut impl Rng, p: [f64; 2]) -> [f64; 2] {
    match noise {
        Some(dist) => [p[0] + dist.sample(rng), p[1] + dist.sample(rng)],
        None => p,
    }
}

/// Generate one experiment. Ambiguous rays form a contiguous block on the
/// +x wall around the x axis; their far cluster sits `gap` meters along
/// +x so the displacement direction is common to every injected ray and
/// the block injects no net torque.
pub fn make_experiment(cfg: &RegistrationConfig, rng: &mut impl Rng) -> Experiment {
    assert!(
        cfg.rays >= 8 && cfg.rays.is_multiple_of(4),
        "rays must spread evenly over four walls"
    );
    assert!(
        (0.0..=0.25).contains(&cfg.injected_fraction),
        "injected rays must all fit on the +x wall"
    );
    assert!(cfg.gap >= 0.0 && cfg.noise_std >= 0.0);
    let n = cfg.rays;
    let per_wall = n / 4;
    let half = cfg.room_half_extent;
    let spacing = 2.0 * half / per_wall as f64;
    // half-phased lattice along each wall
    let offsets: Vec<f64> = (0..per_wall)
        .map(|j| (j as f64 + 0.5) * spacing - half)
        .collect();

    // wall order: +x, -x, +y, -y; +x wall first so injected indices are
    // the per-wall offsets closest to the axis
    let mut base_points = Vec::with_capacity(n);
    for &u in &offsets {
        base_points.push([half, u]);
    }
    for &u in &offsets {
        base_points.push([-half, u]);
    }
    for &u in &offsets {
        base_points.push([u, half]);
    }
    for &u in &offsets {
        base_points.push([u, -half]);
    }

    let injected = (cfg.injected_fraction * n as f64).round() as usize;
    let mut plus_x: Vec<usize> = (0..per_wall).collect();
    plus_x.sort_by(|&a, &b| {
        let (ya, yb) = (offsets[a].abs(), offsets[b].abs());
        ya.partial_cmp(&yb)
            .unwrap()
            .then(offsets[a].partial_cmp(&offsets[b]).unwrap())
    });
    let mut is_injected = vec![false; n];
    for &idx in plus_x.iter().take(injected) {
        is_injected[idx] = true;
    }

    let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).unwrap());
    let inv_truth = cfg.truth.inverse();
    let mut current = Vec::with_capacity(n);
    let mut reference = Vec::with_capacity(n + injected);
    for (t, &base) in base_points.iter().enumerate() {
        let far = [base[0] + cfg.gap, base[1]];
        reference.push(sample_noise(noise.as_ref(), rng, base));
        if is_injected[t] {
            if cfg.reference == ReferenceKind::Map {
                reference.push(sample_noise(noise.as_ref(), rng, far));
            }
            let observed = if rng.gen_bool(0.5) { far } else { base };
            current.push(inv_truth.apply(sample_noise(noise.as_ref(), rng, observed)));
        } else {
            current.push(inv_truth.apply(sample_noise(noise.as_ref(), rng, base)));
        }
    }
    Experiment {
        current,
        reference,
        truth: cfg.truth,
    }
}

/// Weighted closed-form rigid alignment minimizing
/// `sum w |R a + t - b|^2`.
fn rigid_align(pairs: &[([f64; 2], [f64; 2], f64)]) -> Transform2d {
    let wsum: f64 = pairs.iter().map(|(_, _, w)| w).sum();
    let mut ca = [0.0f64; 2];
    let mut cb = [0.0f64; 2];
    for (a, b, w) in pairs {
        ca[0] += w * a[0];
        ca[1] += w * a[1];
        cb[0] += w * b[0];
        cb[1] += w * b[1];
    }
    ca[0] /= wsum;
    ca[1] /= wsum;
    cb[0] /= wsum;
    cb[1] /= wsum;
    let mut dot = 0.0;
    let mut cross = 0.0;
    for (a, b, w) in pairs {
        let ax = a[0] - ca[0];
        let ay = a[1] - ca[1];
        let bx = b[0] - cb[0];
        let by = b[1] - cb[1];
        dot += w * (ax * bx + ay * by);
        cross += w * (ax * by - ay * bx);
    }
    let theta = if dot == 0.0 && cross == 0.0 {
        0.0
    } else {
        cross.atan2(dot)
    };
    let (sin, cos) = theta.sin_cos();
    Transform2d {
        theta,
        tx: cb[0] - (cos * ca[0] - sin * ca[1]),
        ty: cb[1] - (sin * ca[0] + cos * ca[1]),
    }
}

struct GridIndex {
    cell: f64,
    bins: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<[f64; 2]>,
}

impl GridIndex {
    fn build(points: &[[f64; 2]], cell: f64) -> Self {
        let mut bins: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (idx, p) in points.iter().enumerate() {
            let key = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            bins.entry(key).or_default().push(idx);
        }
        GridIndex {
            cell,
            bins,
            points: points.to_vec(),
        }
    }

    fn nearest_within(&self, q: [f64; 2], radius: f64) -> Option<usize> {
        let kx = (q[0] / self.cell).floor() as i64;
        let ky = (q[1] / self.cell).floor() as i64;
        let r2 = radius * radius;
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.bins.get(&(kx + dx, ky + dy)) else {
                    continue;
                };
                for &idx in bucket {
                    let p = self.points[idx];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                    // ties break on index so results never depend on
                    // bucket iteration order
                    let better =
                        d2 <= r2 && best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && idx < bi));
                    if better {
                        best = Some((d2, idx));
                    }
                }
            }
        }
        best.map(|(_, idx)| idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub rms: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug)]
pub struct RegistrationResult {
    pub estimated: Transform2d,
    pub truth: Transform2d,
    /// Euclidean distance between estimated and true translation, meters.
    pub translation_error: f64,
    pub trace: Vec<IterationStats>,
}

fn finish(
    estimated: Transform2d,
    truth: Transform2d,
    trace: Vec<IterationStats>,
) -> RegistrationResult {
    let translation_error =
        ((estimated.tx - truth.tx).powi(2) + (estimated.ty - truth.ty).powi(2)).sqrt();
    RegistrationResult {
        estimated,
        truth,
        translation_error,
        trace,
    }
}

const CONVERGENCE_EPS: f64 = 1e-13;

/// Iterative closest point: nearest-neighbor association within the
/// matching radius, closed-form rigid alignment, repeat. Stops when the
/// update stalls or the matched-pair RMS would increase.
pub fn run_icp(
    current: &[[f64; 2]],
    reference: &[[f64; 2]],
    params: &IcpParams,
    truth: Transform2d,
) -> Result<RegistrationResult, RegError> {
    assert!(!current.is_empty() && !reference.is_empty(), "empty cloud");
    assert!(params.max_match_radius > 0.0);
    let index = GridIndex::build(reference, params.max_match_radius);
    let mut transform = Transform2d::identity();
    let mut prev_rms = f64::INFINITY;
    let mut trace = Vec::new();
    for iteration in 0..params.max_iterations {
        let mut pairs = Vec::new();
        let mut sq_sum = 0.0;
        for p in current {
            let moved = transform.apply(*p);
            if let Some(idx) = index.nearest_within(moved, params.max_match_radius) {
                let r = reference[idx];
                sq_sum += (moved[0] - r[0]).powi(2) + (moved[1] - r[1]).powi(2);
                pairs.push((moved, r, 1.0));
            }
        }
        if pairs.is_empty() {
            return Err(RegError::DegenerateAssociation);
        }
        let rms = (sq_sum / pairs.len() as f64).sqrt();
        if rms > prev_rms {
            break; // re-association stopped helping; keep the previous fit
        }
        trace.push(IterationStats {
            iteration,
            rms,
            pairs: pairs.len(),
        });
        let delta = rigid_align(&pairs);
        transform = delta.compose(&transform);
        let step = delta.translation_norm() + delta.theta.abs();
        if (prev_rms - rms).abs() < CONVERGENCE_EPS && iteration > 0 || step < CONVERGENCE_EPS {
            break;
        }
        prev_rms = rms;
    }
    Ok(finish(transform, truth, trace))
}

fn voxel_key(p: [f64; 2], voxel: f64) -> (i64, i64) {
    ((p[0] / voxel).floor() as i64, (p[1] / voxel).floor() as i64)
}

fn voxel_centroids(points: &[[f64; 2]], voxel: f64) -> BTreeMap<(i64, i64), ([f64; 2], usize)> {
    let mut map: BTreeMap<(i64, i64), ([f64; 2], usize)> = BTreeMap::new();
    for p in points {
        let entry = map.entry(voxel_key(*p, voxel)).or_insert(([0.0, 0.0], 0));
        entry.0[0] += p[0];
        entry.0[1] += p[1];
        entry.1 += 1;
    }
    for (sum, count) in map.values_mut() {
        sum[0] /= *count as f64;
        sum[1] /= *count as f64;
    }
    map
}

/// NDT-lite: align per-voxel centroids of the current cloud to the
/// reference centroids of the same voxels, weighted by current occupancy,
/// iterating with re-binning.
pub fn run_ndt_lite(
    current: &[[f64; 2]],
    reference: &[[f64; 2]],
    params: &NdtParams,
    truth: Transform2d,
) -> Result<RegistrationResult, RegError> {
    assert!(!current.is_empty() && !reference.is_empty(), "empty cloud");
    assert!(params.voxel_size > 0.0);
    let ref_centroids = voxel_centroids(reference, params.voxel_size);
    let mut transform = Transform2d::identity();
    let mut prev_rms = f64::INFINITY;
    let mut trace = Vec::new();
    for iteration in 0..params.max_iterations {
        let moved: Vec<[f64; 2]> = current.iter().map(|p| transform.apply(*p)).collect();
        let cur_centroids = voxel_centroids(&moved, params.voxel_size);
        let mut pairs = Vec::new();
        let mut sq_sum = 0.0;
        let mut weight_sum = 0.0;
        for (key, (cur_c, count)) in &cur_centroids {
            let Some((ref_c, _)) = ref_centroids.get(key) else {
                continue;
            };
            let w = *count as f64;
            sq_sum += w * ((cur_c[0] - ref_c[0]).powi(2) + (cur_c[1] - ref_c[1]).powi(2));
            weight_sum += w;
            pairs.push((*cur_c, *ref_c, w));
        }
        if pairs.is_empty() {
            return Err(RegError::NoCommonVoxels);
        }
        let rms = (sq_sum / weight_sum).sqrt();
        if rms > prev_rms {
            break;
        }
        trace.push(IterationStats {
            iteration,
            rms,
            pairs: pairs.len(),
        });
        let delta = rigid_align(&pairs);
        transform = delta.compose(&transform);
        let step = delta.translation_norm() + delta.theta.abs();
        if (prev_rms - rms).abs() < CONVERGENCE_EPS && iteration > 0 || step < CONVERGENCE_EPS {
            break;
        }
        prev_rms = rms;
    }
    Ok(finish(transform, truth, trace))
}

/// One row of the bias sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasReportRow {
    pub gap: f64,
    pub algorithm: &'static str,
    pub reference: ReferenceKind,
    pub mean_bias: f64,
    pub std_bias: f64,
    pub max_bias: f64,
    pub trials: usize,
}

/// Sweep the cluster gap for both registrars, `trials` seeded runs per
/// cell, reporting |translation bias| statistics.
pub fn bias_report(
    base: &RegistrationConfig,
    gaps: &[f64],
    trials: usize,
) -> Result<Vec<BiasReportRow>, RegError> {
    assert!(trials >= 1, "at least one trial per cell");
    let mut rows = Vec::new();
    for (gap_idx, &gap) in gaps.iter().enumerate() {
        for (alg_idx, algorithm) in ["icp", "ndt"].iter().enumerate() {
            let mut biases = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut cfg = *base;
                cfg.gap = gap;
                cfg.truth = Transform2d::identity();
                let stream = trial_seed(base.seed, gap_idx, alg_idx, trial);
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                let exp = make_experiment(&cfg, &mut rng);
                let result = match *algorithm {
                    "icp" => run_icp(&exp.current, &exp.reference, &cfg.icp, exp.truth)?,
                    _ => run_ndt_lite(&exp.current, &exp.reference, &cfg.ndt, exp.truth)?,
                };
                biases.push(result.translation_error);
            }
            let n = biases.len() as f64;
            let mean = biases.iter().sum::<f64>() / n;
            let var = biases.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n;
            rows.push(BiasReportRow {
                gap,
                algorithm,
                reference: base.reference,
                mean_bias: mean,
                std_bias: var.sqrt(),
                max_bias: biases.iter().fold(0.0f64, |a, &b| a.max(b)),
                trials,
            });
        }
    }
    Ok(rows)
}

fn trial_seed(seed: u64, gap_idx: usize, alg_idx: usize, trial: usize) -> u64 {
    let mut z = seed ^ 0x51ed_2701_89ab_cdef;
    for part in [gap_idx as u64, alg_idx as u64, trial as u64] {
        z = z.wrapping_add(part).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Report CSV `delta,algorithm,reference,mean_bias,std_bias,max_bias,trials`.
pub fn bias_report_csv(rows: &[BiasReportRow]) -> String {
    let mut out = String::from("delta,algorithm,reference,mean_bias,std_bias,max_bias,trials\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.gap,
            r.algorithm,
            r.reference.as_str(),
            r.mean_bias,
            r.std_bias,
            r.max_bias,
            r.trials
        );
    }
    out
}
