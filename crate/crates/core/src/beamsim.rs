//! Conical-beam lidar simulator with ground-truth multi-return labels.
//!
//! Each pulse spreads its energy over a disk of sub-rays inside the
//! divergence cone. Sub-rays record their first non-passed surface hit;
//! the detector then selects one surface group per pulse, either with
//! probability proportional to the group's returned power (`Strongest`)
//! or deterministically the farthest group (`Last`). Per-pixel RNG
//! streams derive from `(seed, row, col, frame)`, so a simulation is
//! reproducible under any execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{Calibration, FrameSequence, RangeImage, RaypathId, Return};

/// Sub-ray count of the deterministic lattice used for geometric labels
/// and analytic weights.
const LABEL_SUBRAYS: usize = 512;

/// Minimum ray parameter for a hit, to shrug off self-intersections.
const T_MIN: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("analytic cluster weights support opaque surfaces only")]
    PorousUnsupported,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// Minimal 3-vector for scene geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        Vec3 {
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3 {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.x + other.x,
            y: self.y + other.y,
            z: self.z + other.z,
        }
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.x - other.x,
            y: self.y - other.y,
            z: self.z - other.z,
        }
    }
}

/// Surface geometry kinds. Porous screens pass each sub-ray with
/// probability `1 - hit_probability`, modeling foliage or glass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    InfinitePlane,
    Rectangle {
        half_width: f64,
        half_height: f64,
    },
    PorousScreen {
        hit_probability: f64,
        half_width: f64,
        half_height: f64,
    },
}

/// A parametric scene surface: position plus unit normal, with a
/// reflectivity on the Lambertian 0-1 scale (above 1 models
/// retroreflectors).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    #[serde(flatten)]
    pub kind: SurfaceKind,
    pub center: Vec3,
    pub normal: Vec3,
    pub reflectivity: f64,
}

impl Surface {
    fn is_porous(&self) -> bool {
        matches!(self.kind, SurfaceKind::PorousScreen { .. })
    }

    fn validate(&self) -> Result<(), SimError> {
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidScene(
                "surface normal must be unit length".into(),
            ));
        }
        if self.reflectivity.is_nan() || self.reflectivity < 0.0 {
            return Err(SimError::InvalidScene(
                "reflectivity must be non-negative".into(),
            ));
        }
        if let SurfaceKind::PorousScreen {
            hit_probability, ..
        } = self.kind
        {
            if !(0.0..=1.0).contains(&hit_probability) {
                return Err(SimError::InvalidScene(
                    "hit_probability must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Ray-surface intersection: distance along the ray and the incidence
    /// cosine, or `None` for a geometric miss.
    fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let denom = dir.dot(self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - origin).dot(self.normal) / denom;
        if t <= T_MIN {
            return None;
        }
        let bounded = match self.kind {
            SurfaceKind::InfinitePlane => true,
            SurfaceKind::Rectangle {
                half_width,
                half_height,
            }
            | SurfaceKind::PorousScreen {
                half_width,
                half_height,
                ..
            } => {
                let p = origin + dir.scale(t) - self.center;
                let (u, v) = orthonormal_basis(self.normal);
                p.dot(u).abs() <= half_width && p.dot(v).abs() <= half_height
            }
        };
        bounded.then_some((t, denom.abs()))
    }
}

/// Deterministic in-plane basis for a unit direction: `u = n x z`
/// normalized (falling back to `n x x` near the poles), `v = n x u`.
pub fn orthonormal_basis(normal: Vec3) -> (Vec3, Vec3) {
    let z = Vec3::new(0.0, 0.0, 1.0);
    let xu = normal.cross(z);
    let u = if xu.norm() > 1e-6 {
        xu.normalized()
    } else {
        normal.cross(Vec3::new(1.0, 0.0, 0.0)).normalized()
    };
    let v = normal.cross(u);
    (u, v)
}

/// Scene: surfaces plus the RNG seed the simulator derives its per-pixel
/// streams from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SimError> {
        for surface in &self.surfaces {
            surface.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let scene: Scene =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Which surface group a multi-echo pulse reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorPolicy {
    /// Select a group with probability proportional to its returned power.
    Strongest,
    /// Select the farthest group.
    Last,
}

/// Beam and sampling geometry for a simulated sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub origin: Vec3,
    pub rows: usize,
    pub cols: usize,
    pub calibration: Calibration,
    pub rate_hz: f64,
    /// Divergence half-angle in radians.
    pub half_angle_rad: f64,
    /// Sub-rays per pulse.
    pub subrays: usize,
    /// Gaussian range noise standard deviation in meters.
    pub range_noise_std: f64,
    pub policy: DetectorPolicy,
}

impl BeamSpec {
    /// Unit beam axis of a raypath, from the calibration grid.
    pub fn axis(&self, ray: RaypathId) -> Vec3 {
        let el = self.calibration.elevation_deg(ray.row).to_radians();
        let az = self.calibration.azimuth_deg(ray.col).to_radians();
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    fn validate(&self) {
        assert!(self.half_angle_rad > 0.0, "half angle must be positive");
        assert!(self.subrays >= 1, "need at least one sub-ray");
        assert!(
            self.range_noise_std >= 0.0,
            "noise std must be non-negative"
        );
        assert!(self.rows >= 1 && self.cols >= 1, "grid must be non-empty");
    }
}

/// What one pulse resolved to, before reduction to a [`Return`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseOutcome {
    /// Index into `scene.surfaces` of the selected group.
    pub surface: usize,
    pub range: f64,
    pub reflectance: f64,
}

struct GroupAcc {
    hits: usize,
    power: f64,
    range_sum: f64,
}

/// First non-passed surface hit along one sub-ray. Porous screens pass
/// with probability `1 - hit_probability`; opaque surfaces terminate.
fn subray_hit(
    scene: &Scene,
    origin: Vec3,
    dir: Vec3,
    rng: &mut impl Rng,
) -> Option<(usize, f64, f64)> {
    // walk intersections in distance order without collecting them
    let mut t_floor = 0.0;
    loop {
        let mut nearest: Option<(f64, usize, f64)> = None;
        for (idx, s) in scene.surfaces.iter().enumerate() {
            if let Some((t, cos)) = s.intersect(origin, dir) {
                if t > t_floor && nearest.is_none_or(|(best, _, _)| t < best) {
                    nearest = Some((t, idx, cos));
                }
            }
        }
        let (t, idx, cos) = nearest?;
        match scene.surfaces[idx].kind {
            SurfaceKind::PorousScreen {
                hit_probability, ..
            } => {
                if rng.gen::<f64>() < hit_probability {
                    return Some((idx, t, cos));
                }
                t_floor = t;
            }
            _ => return Some((idx, t, cos)),
        }
    }
}

/// Cast one pulse and report the selected surface group, or `None` when
/// no sub-ray produced a detection.
pub fn cast_pulse(
    scene: &Scene,
    axis: Vec3,
    spec: &BeamSpec,
    rng: &mut impl Rng,
) -> Option<PulseOutcome> {
    spec.validate();
    let axis = axis.normalized();
    let (u, v) = orthonormal_basis(axis);
    let tan_half = spec.half_angle_rad.tan();
    let mut groups: Vec<GroupAcc> = scene
        .surfaces
        .iter()
        .map(|_| GroupAcc {
            hits: 0,
            power: 0.0,
            range_sum: 0.0,
        })
        .collect();

    for _ in 0..spec.subrays {
        // uniform over the cone's cross-sectional disk
        let radius = rng.gen::<f64>().sqrt() * tan_half;
        let angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let offset = u.scale(radius * angle.cos()) + v.scale(radius * angle.sin());
        let dir = (axis + offset).normalized();
        if let Some((idx, t, cos)) = subray_hit(scene, spec.origin, dir, rng) {
            let acc = &mut groups[idx];
            acc.hits += 1;
            acc.power += scene.surfaces[idx].reflectivity * cos;
            acc.range_sum += t;
        }
    }

    let selected = match spec.policy {
        DetectorPolicy::Strongest => {
            let total: f64 = groups.iter().map(|g| g.power).sum();
            if total <= 0.0 {
                groups.iter().position(|g| g.hits > 0)?
            } else {
                let mut draw = rng.gen::<f64>() * total;
                let mut choice = None;
                for (idx, g) in groups.iter().enumerate() {
                    if g.power <= 0.0 {
                        continue;
                    }
                    draw -= g.power;
                    if draw <= 0.0 {
                        choice = Some(idx);
                        break;
                    }
                }
                choice.or_else(|| groups.iter().rposition(|g| g.power > 0.0))?
            }
        }
        DetectorPolicy::Last => {
            let mut farthest: Option<(usize, f64)> = None;
            for (idx, g) in groups.iter().enumerate() {
                if g.hits == 0 {
                    continue;
                }
                let mean = g.range_sum / g.hits as f64;
                if farthest.is_none_or(|(_, best)| mean > best) {
                    farthest = Some((idx, mean));
                }
            }
            farthest?.0
        }
    };

    let group = &groups[selected];
    let mut range = group.range_sum / group.hits as f64;
    if spec.range_noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.range_noise_std).expect("valid noise std");
        range += noise.sample(rng);
    }
    Some(PulseOutcome {
        surface: selected,
        range: range.max(0.0),
        reflectance: 100.0 * group.power / spec.subrays as f64,
    })
}

/// Cast one pulse and reduce it to a [`Return`].
pub fn cast_beam(scene: &Scene, axis: Vec3, spec: &BeamSpec, rng: &mut impl Rng) -> Return {
    match cast_pulse(scene, axis, spec, rng) {
        Some(outcome) => Return::hit_with_reflectance(outcome.range, outcome.reflectance),
        None => Return::miss(),
    }
}

/// splitmix64 finalizer, used to derive independent per-pixel streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one pulse, independent of every other pixel and frame.
pub fn pixel_rng(seed: u64, ray: RaypathId, frame: usize) -> ChaCha8Rng {
    let mut h = mix(seed);
    h = mix(h ^ ray.row as u64);
    h = mix(h ^ ray.col as u64);
    h = mix(h ^ frame as u64);
    ChaCha8Rng::seed_from_u64(h)
}

/// Count the distinct surfaces a beam cone touches, using a deterministic
/// sub-ray lattice. Porous screens count as touched whether or not a
/// probabilistic hit would occur; opaque surfaces shadow what lies behind
/// them.
pub fn cone_surface_count(scene: &Scene, axis: Vec3, spec: &BeamSpec) -> usize {
    let axis = axis.normalized();
    let (u, v) = orthonormal_basis(axis);
    let tan_half = spec.half_angle_rad.tan();
    let mut touched = vec![false; scene.surfaces.len()];
    for (radius, angle) in disk_lattice(LABEL_SUBRAYS) {
        let offset =
            u.scale(radius * tan_half * angle.cos()) + v.scale(radius * tan_half * angle.sin());
        let dir = (axis + offset).normalized();
        let mut t_floor = 0.0;
        loop {
            let mut nearest: Option<(f64, usize)> = None;
            for (idx, s) in scene.surfaces.iter().enumerate() {
                if let Some((t, _)) = s.intersect(spec.origin, dir) {
                    if t > t_floor && nearest.is_none_or(|(best, _)| t < best) {
                        nearest = Some((t, idx));
                    }
                }
            }
            let Some((t, idx)) = nearest else { break };
            touched[idx] = true;
            if !scene.surfaces[idx].is_porous() {
                break;
            }
            t_floor = t;
        }
    }
    touched.iter().filter(|&&t| t).count()
}

/// Fibonacci lattice over the unit disk: `(radius, angle)` pairs.
fn disk_lattice(n: usize) -> impl Iterator<Item = (f64, f64)> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n).map(move |i| {
        let radius = ((i as f64 + 0.5) / n as f64).sqrt();
        (radius, golden_angle * i as f64)
    })
}

/// Simulate `frames` revolutions over the beam grid. Returns the frame
/// sequence and a row-major label grid marking pixels whose cone
/// intersects at least two distinct surfaces.
pub fn simulate_sequence(
    scene: &Scene,
    spec: &BeamSpec,
    frames: usize,
) -> (FrameSequence, Vec<bool>) {
    assert!(frames >= 1, "need at least one frame");
    spec.validate();
    scene.validate().expect("valid scene");
    let mut labels = vec![false; spec.rows * spec.cols];
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let ray = RaypathId::new(row, col);
            labels[row * spec.cols + col] = cone_surface_count(scene, spec.axis(ray), spec) >= 2;
        }
    }
    let mut images = Vec::with_capacity(frames);
    for frame in 0..frames {
        let mut img = RangeImage::filled(spec.rows, spec.cols, spec.calibration, Return::miss());
        for row in 0..spec.rows {
            for col in 0..spec.cols {
                let ray = RaypathId::new(row, col);
                let mut rng = pixel_rng(scene.seed, ray, frame);
                img.set(row, col, cast_beam(scene, spec.axis(ray), spec, &mut rng));
            }
        }
        images.push(img);
    }
    (FrameSequence::new(images, spec.rate_hz), labels)
}

/// Expected per-surface selection weights from a dense deterministic
/// sub-ray quadrature, scene order. Opaque surfaces only.
pub fn analytic_cluster_weights(
    scene: &Scene,
    axis: Vec3,
    spec: &BeamSpec,
    dense_subrays: usize,
) -> Result<Vec<f64>, SimError> {
    if scene.surfaces.iter().any(|s| s.is_porous()) {
        return Err(SimError::PorousUnsupported);
    }
    assert!(dense_subrays >= 1);
    let axis = axis.normalized();
    let (u, v) = orthonormal_basis(axis);
    let tan_half = spec.half_angle_rad.tan();
    let mut power = vec![0.0f64; scene.surfaces.len()];
    let mut hits = vec![0usize; scene.surfaces.len()];
    let mut range_sum = vec![0.0f64; scene.surfaces.len()];
    for (radius, angle) in disk_lattice(dense_subrays) {
        let offset =
            u.scale(radius * tan_half * angle.cos()) + v.scale(radius * tan_half * angle.sin());
        let dir = (axis + offset).normalized();
        let first = scene
            .surfaces
            .iter()
            .enumerate()
            .filter_map(|(idx, s)| s.intersect(spec.origin, dir).map(|(t, cos)| (t, idx, cos)))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if let Some((t, idx, cos)) = first {
            power[idx] += scene.surfaces[idx].reflectivity * cos;
            hits[idx] += 1;
            range_sum[idx] += t;
        }
    }
    let weights = match spec.policy {
        DetectorPolicy::Strongest => {
            let total: f64 = power.iter().sum();
            if total <= 0.0 {
                vec![0.0; power.len()]
            } else {
                power.iter().map(|p| p / total).collect()
            }
        }
        DetectorPolicy::Last => {
            let farthest = (0..hits.len()).filter(|&i| hits[i] > 0).max_by(|&a, &b| {
                let ra = range_sum[a] / hits[a] as f64;
                let rb = range_sum[b] / hits[b] as f64;
                ra.partial_cmp(&rb).unwrap()
            });
            let mut w = vec![0.0; hits.len()];
            if let Some(idx) = farthest {
                w[idx] = 1.0;
            }
            w
        }
    };
    Ok(weights)
}
