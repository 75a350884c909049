//! Browser bindings for the range-ambiguity demos.
//!
//! Three interactive operations, each returning a JSON payload the static
//! page plots onto a canvas: simulate a scene and inspect its temporal
//! and spatial CDFs, fit a Gaussian mixture to sampled data, and sweep
//! the two-cluster registration bias.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use multiret::beamsim::{
    simulate_sequence, BeamSpec, DetectorPolicy, Scene, Surface, SurfaceKind, Vec3,
};
use multiret::ecdf::{ks_statistic, spatial_cdf_at, temporal_cdf, EmpiricalCdf};
use multiret::frames::{Calibration, NeighborhoodSpec, RaypathId};
use multiret::mixture::{
    auto_segment, fit_gmm, model_fit_error, segment_by_thresholds, GaussianComponent,
    GaussianMixture, DEFAULT_SIGMA_FLOOR,
};
use multiret::regimpact::{make_experiment, run_icp, run_ndt_lite, RegistrationConfig};

#[derive(Serialize)]
struct CdfJson {
    x: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
    return_fraction: f64,
    total: usize,
}

impl CdfJson {
    fn from_cdf(cdf: &EmpiricalCdf) -> Self {
        let x = cdf.jump_points();
        let pre = x.iter().map(|&v| cdf.eval_before(v)).collect();
        let post = x.iter().map(|&v| cdf.eval(v)).collect();
        CdfJson {
            x,
            pre,
            post,
            return_fraction: cdf.return_fraction(),
            total: cdf.total(),
        }
    }
}

#[derive(Serialize)]
struct MixtureJson {
    clusters: Vec<GaussianComponent>,
    fit_error: f64,
    curve_x: Vec<f64>,
    curve_f: Vec<f64>,
    curve_pdf: Vec<f64>,
}

fn mixture_json(fit: &GaussianMixture, cdf: &EmpiricalCdf) -> MixtureJson {
    let samples = cdf.samples();
    let lo = samples.first().copied().unwrap_or(0.0) - 0.5;
    let hi = samples.last().copied().unwrap_or(1.0) + 0.5;
    let rf = cdf.return_fraction();
    let n = 300;
    let mut curve_x = Vec::with_capacity(n);
    let mut curve_f = Vec::with_capacity(n);
    let mut curve_pdf = Vec::with_capacity(n);
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        curve_x.push(x);
        curve_f.push(fit.cdf(x) * rf);
        curve_pdf.push(fit.pdf(x) * rf);
    }
    MixtureJson {
        clusters: fit.clusters().to_vec(),
        fit_error: model_fit_error(fit, cdf),
        curve_x,
        curve_f,
        curve_pdf,
    }
}

fn facing_plane(distance: f64, reflectivity: f64) -> Surface {
    Surface {
        kind: SurfaceKind::InfinitePlane,
        center: Vec3::new(distance, 0.0, 0.0),
        normal: Vec3::new(-1.0, 0.0, 0.0),
        reflectivity,
    }
}

fn facing_screen(distance: f64, hit_probability: f64) -> Surface {
    Surface {
        kind: SurfaceKind::PorousScreen {
            hit_probability,
            half_width: 1e3,
            half_height: 1e3,
        },
        center: Vec3::new(distance, 0.0, 0.0),
        normal: Vec3::new(-1.0, 0.0, 0.0),
        reflectivity: 1.0,
    }
}

/// Edge of a near structure in front of a far wall: the demo's corner
/// case. The rectangle covers azimuth >= 0.
fn edge_scene(near: f64, far: f64) -> Vec<Surface> {
    let big = 1e4;
    let normal = Vec3::new(-1.0, 0.0, 0.0);
    let rect = Surface {
        kind: SurfaceKind::Rectangle {
            half_width: big,
            half_height: big,
        },
        center: Vec3::new(near, big, 0.0),
        normal,
        reflectivity: 1.0,
    };
    vec![rect, facing_plane(far, 1.0)]
}

fn preset_scene(preset: &str, hit_probability: f64, seed: u64) -> Result<Scene, String> {
    let surfaces = match preset {
        "wall" => vec![facing_plane(12.0, 1.0)],
        "window" => vec![
            facing_screen(11.2, hit_probability),
            facing_plane(14.0, 1.0),
        ],
        "foliage" => vec![facing_screen(8.0, hit_probability), facing_plane(10.0, 1.0)],
        "corner" => edge_scene(6.0, 12.0),
        other => return Err(format!("unknown preset {other}")),
    };
    Ok(Scene { surfaces, seed })
}

#[derive(Serialize)]
struct SceneCdfsJson {
    temporal: CdfJson,
    spatial: CdfJson,
    ks_distance: f64,
    ks_at: f64,
    std: Option<f64>,
    mean: Option<f64>,
    labeled_multi_return: bool,
    gmm: Option<MixtureJson>,
}

/// Simulate a preset scene and return the center raypath's temporal CDF,
/// its first-frame spatial CDF, summary stats, and an automatic mixture
/// fit of the temporal distribution.
#[wasm_bindgen]
pub fn scene_cdfs_json(
    preset: &str,
    noise_std: f64,
    hit_probability: f64,
    frames: u32,
    seed: u64,
) -> Result<String, JsError> {
    scene_cdfs_impl(preset, noise_std, hit_probability, frames, seed).map_err(|e| JsError::new(&e))
}

fn scene_cdfs_impl(
    preset: &str,
    noise_std: f64,
    hit_probability: f64,
    frames: u32,
    seed: u64,
) -> Result<String, String> {
    let scene = preset_scene(preset, hit_probability.clamp(0.0, 1.0), seed)?;
    let frames = frames.clamp(2, 400) as usize;
    let rows = 7;
    let cols = 9;
    let spec = BeamSpec {
        origin: Vec3::new(0.0, 0.0, 0.0),
        rows,
        cols,
        calibration: Calibration {
            elev_start_deg: (rows as f64 - 1.0) / 2.0 * 0.35,
            elev_step_deg: -0.35,
            az_start_deg: -(cols as f64 - 1.0) / 2.0 * 0.35,
            az_step_deg: 0.35,
        },
        rate_hz: 10.0,
        half_angle_rad: if preset == "corner" { 0.008 } else { 0.003 },
        subrays: 96,
        range_noise_std: noise_std.clamp(0.0, 0.5),
        policy: DetectorPolicy::Strongest,
    };
    let (seq, labels) = simulate_sequence(&scene, &spec, frames);
    let ray = RaypathId::new(rows / 2, cols / 2);
    let temporal = temporal_cdf(&seq, ray);
    let spatial = spatial_cdf_at(seq.frame(0), ray, NeighborhoodSpec::new(2, 2), 0);
    let ks = ks_statistic(&temporal, &spatial);
    let stats = temporal.stats().ok();

    let gmm = {
        let thresholds = auto_segment(&temporal, 0.3);
        segment_by_thresholds(&temporal, &thresholds)
            .ok()
            .and_then(|clusters| fit_gmm(&clusters, DEFAULT_SIGMA_FLOOR).ok())
            .map(|fit| mixture_json(&fit, &temporal))
    };

    let payload = SceneCdfsJson {
        temporal: CdfJson::from_cdf(&temporal),
        spatial: CdfJson::from_cdf(&spatial),
        ks_distance: ks.distance,
        ks_at: ks.at_x,
        std: stats.map(|s| s.std),
        mean: stats.map(|s| s.mean),
        labeled_multi_return: labels[(rows / 2) * cols + cols / 2],
        gmm,
    };
    serde_json::to_string(&payload).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MixtureDemoJson {
    empirical: CdfJson,
    truth: Vec<GaussianComponent>,
    fitted: Option<MixtureJson>,
    thresholds: Vec<f64>,
}

/// Sample `n` ranges from a mixture given as flattened
/// `[weight, mean, sigma, ...]` triples, then segment and refit it.
#[wasm_bindgen]
pub fn mixture_fit_json(
    components: &[f64],
    n: u32,
    min_gap: f64,
    seed: u64,
) -> Result<String, JsError> {
    mixture_fit_impl(components, n, min_gap, seed).map_err(|e| JsError::new(&e))
}

fn mixture_fit_impl(components: &[f64], n: u32, min_gap: f64, seed: u64) -> Result<String, String> {
    if components.is_empty() || !components.len().is_multiple_of(3) {
        return Err("components must be (weight, mean, sigma) triples".into());
    }
    let mut truth: Vec<GaussianComponent> = components
        .chunks(3)
        .map(|c| GaussianComponent {
            weight: c[0].max(1e-6),
            mean: c[1],
            std_dev: c[2].max(1e-4),
        })
        .collect();
    let total: f64 = truth.iter().map(|c| c.weight).sum();
    for c in &mut truth {
        c.weight /= total;
    }
    truth.sort_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap());

    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = n.clamp(10, 100_000) as usize;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut draw: f64 = rng.gen();
        let mut chosen = &truth[truth.len() - 1];
        for c in &truth {
            if draw < c.weight {
                chosen = c;
                break;
            }
            draw -= c.weight;
        }
        let dist = Normal::new(chosen.mean, chosen.std_dev).map_err(|e| e.to_string())?;
        samples.push(dist.sample(&mut rng));
    }
    let cdf = EmpiricalCdf::from_samples(samples, n, multiret::ecdf::CdfSource::Samples);
    let min_gap = min_gap.max(1e-3);
    let thresholds = auto_segment(&cdf, min_gap);
    let fitted = segment_by_thresholds(&cdf, &thresholds)
        .ok()
        .and_then(|clusters| fit_gmm(&clusters, DEFAULT_SIGMA_FLOOR).ok())
        .map(|fit| mixture_json(&fit, &cdf));

    let payload = MixtureDemoJson {
        empirical: CdfJson::from_cdf(&cdf),
        truth,
        fitted,
        thresholds,
    };
    serde_json::to_string(&payload).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct BiasDemoJson {
    icp: Vec<f64>,
    ndt: Vec<f64>,
    icp_mean: f64,
    ndt_mean: f64,
    predicted: f64,
}

/// Run the two-cluster registration experiment `trials` times and report
/// per-trial translation bias for ICP and NDT-lite against the
/// `phi * gap / 2` prediction.
#[wasm_bindgen]
pub fn registration_bias_json(
    phi: f64,
    gap: f64,
    trials: u32,
    seed: u64,
) -> Result<String, JsError> {
    registration_bias_impl(phi, gap, trials, seed).map_err(|e| JsError::new(&e))
}

fn registration_bias_impl(phi: f64, gap: f64, trials: u32, seed: u64) -> Result<String, String> {
    use rand::SeedableRng;
    let phi = phi.clamp(0.0, 0.25);
    let gap = gap.clamp(0.0, 0.45);
    let trials = trials.clamp(1, 400) as usize;
    let cfg = RegistrationConfig {
        gap,
        injected_fraction: phi,
        noise_std: 0.0,
        ..RegistrationConfig::default()
    };
    let mut icp_biases = Vec::with_capacity(trials);
    let mut ndt_biases = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9E37_79B9).wrapping_add(trial as u64),
        );
        let exp = make_experiment(&cfg, &mut rng);
        let icp = run_icp(&exp.current, &exp.reference, &cfg.icp, exp.truth)
            .map_err(|e| e.to_string())?;
        let ndt = run_ndt_lite(&exp.current, &exp.reference, &cfg.ndt, exp.truth)
            .map_err(|e| e.to_string())?;
        icp_biases.push(-icp.estimated.tx);
        ndt_biases.push(-ndt.estimated.tx);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let payload = BiasDemoJson {
        icp_mean: mean(&icp_biases),
        ndt_mean: mean(&ndt_biases),
        predicted: phi * gap / 2.0,
        icp: icp_biases,
        ndt: ndt_biases,
    };
    serde_json::to_string(&payload).map_err(|e| e.to_string())
}
