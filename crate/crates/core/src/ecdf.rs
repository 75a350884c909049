//! Empirical CDFs over range, per raypath over time and per neighborhood
//! per frame.
//!
//! Non-returns count toward the normalizer N but contribute no step, so a
//! CDF tops out at `finite_samples / N` below one whenever non-returns
//! exist. Evaluation is right-continuous: a query exactly at a sample
//! includes that sample.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{neighborhood, FrameSequence, NeighborhoodSpec, RangeImage, RaypathId};

#[derive(Debug, Error, PartialEq)]
pub enum CdfError {
    #[error("empirical CDF has no finite samples")]
    NoData,
    #[error("cdf csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Unit step: 0 for negative arguments, 1 at and above zero.
pub fn unit_step(y: f64) -> f64 {
    if y < 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Provenance of an empirical CDF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CdfSource {
    /// One raypath across frames.
    Temporal { ray: RaypathId },
    /// One neighborhood within one frame.
    Spatial { ray: RaypathId, frame: usize },
    /// One raypath across frames after patch motion compensation.
    Compensated { ray: RaypathId },
    /// Direct sample list (tests, loaded data).
    Samples,
}

/// A sub-distribution over range built from weighted step functions.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    samples: Vec<f64>,
    total: usize,
    source: CdfSource,
}

impl EmpiricalCdf {
    /// Build from raw samples. Sorts; `total` counts non-returns too and
    /// must be at least the number of finite samples.
    pub fn from_samples(mut samples: Vec<f64>, total: usize, source: CdfSource) -> Self {
        assert!(
            samples.iter().all(|s| s.is_finite()),
            "samples must be finite"
        );
        assert!(samples.len() <= total, "total must include every sample");
        assert!(total > 0, "total must be positive");
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalCdf {
            samples,
            total,
            source,
        }
    }

    /// Build from per-observation ranges where `None` is a non-return.
    pub fn from_observations<I>(observations: I, source: CdfSource) -> Self
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let mut samples = Vec::new();
        let mut total = 0usize;
        for obs in observations {
            total += 1;
            if let Some(range) = obs {
                samples.push(range);
            }
        }
        Self::from_samples(samples, total, source)
    }

    /// Sorted finite samples.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Observation count N, non-returns included.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn source(&self) -> CdfSource {
        self.source
    }

    /// Fraction of observations that produced a return; equals the CDF
    /// value at +infinity.
    pub fn return_fraction(&self) -> f64 {
        self.samples.len() as f64 / self.total as f64
    }

    /// Right-continuous evaluation: (# samples <= x) / N.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.samples.partition_point(|&s| s <= x);
        count as f64 / self.total as f64
    }

    /// Left limit: (# samples < x) / N.
    pub fn eval_before(&self, x: f64) -> f64 {
        let count = self.samples.partition_point(|&s| s < x);
        count as f64 / self.total as f64
    }

    /// Distinct sample values in ascending order (the jump points).
    pub fn jump_points(&self) -> Vec<f64> {
        let mut points = self.samples.clone();
        points.dedup();
        points
    }

    /// max - min of the finite samples; zero when fewer than two.
    pub fn span(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(first), Some(last)) => last - first,
            _ => 0.0,
        }
    }

    pub fn stats(&self) -> Result<CdfStats, CdfError> {
        if self.samples.is_empty() {
            return Err(CdfError::NoData);
        }
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        let var = self
            .samples
            .iter()
            .map(|s| (s - mean) * (s - mean))
            .sum::<f64>()
            / n;
        let min = self.samples[0];
        let max = *self.samples.last().unwrap();
        Ok(CdfStats {
            count: self.samples.len(),
            return_fraction: self.return_fraction(),
            mean,
            std: var.sqrt(),
            min,
            max,
            span: max - min,
        })
    }

    /// Jump-point CSV with pre- and post-jump values, one `x,F` pair of
    /// rows per distinct sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,F\n");
        for x in self.jump_points() {
            let _ = writeln!(out, "{},{}", x, self.eval_before(x));
            let _ = writeln!(out, "{},{}", x, self.eval(x));
        }
        out
    }
}

/// Summary statistics over the finite samples of a CDF. `std` is the
/// population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfStats {
    pub count: usize,
    pub return_fraction: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub span: f64,
}

impl CdfStats {
    /// Flat `key=value` rendering, one field per line.
    pub fn to_key_values(&self) -> String {
        format!(
            "count={}\nreturn_fraction={}\nmean={}\nstd={}\nmin={}\nmax={}\nspan={}\n",
            self.count, self.return_fraction, self.mean, self.std, self.min, self.max, self.span
        )
    }
}

/// Temporal CDF of one raypath: one observation per frame, N = K.
pub fn temporal_cdf(seq: &FrameSequence, ray: RaypathId) -> EmpiricalCdf {
    assert!(seq.contains(ray), "raypath out of bounds");
    EmpiricalCdf::from_observations(
        seq.frames().iter().map(|frame| frame.get(ray).range()),
        CdfSource::Temporal { ray },
    )
}

/// Instantaneous spatial CDF over the neighborhood of `ray` in one frame;
/// N is the effective neighborhood size after row truncation.
pub fn spatial_cdf(img: &RangeImage, ray: RaypathId, spec: NeighborhoodSpec) -> EmpiricalCdf {
    spatial_cdf_at(img, ray, spec, 0)
}

/// As [`spatial_cdf`], tagging the source with the frame index `k`.
pub fn spatial_cdf_at(
    img: &RangeImage,
    ray: RaypathId,
    spec: NeighborhoodSpec,
    frame: usize,
) -> EmpiricalCdf {
    assert!(img.contains(ray), "raypath out of bounds");
    let nb = neighborhood(img, ray, spec);
    EmpiricalCdf::from_observations(
        nb.cells.iter().map(|cell| cell.range()),
        CdfSource::Spatial { ray, frame },
    )
}

/// A right-continuous step function described by its jump points, as
/// loaded from a CDF CSV. Supports evaluation and KS comparison without
/// knowing the underlying sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCdf {
    xs: Vec<f64>,
    post: Vec<f64>,
}

impl StepCdf {
    pub fn from_csv(text: &str) -> Result<Self, CdfError> {
        let mut xs: Vec<f64> = Vec::new();
        let mut post: Vec<f64> = Vec::new();
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if trimmed != "x,F" {
                    return Err(CdfError::Csv {
                        line: line_no,
                        message: format!("expected header x,F, found {trimmed}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let mut parts = trimmed.split(',');
            let (Some(x_tok), Some(f_tok), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(CdfError::Csv {
                    line: line_no,
                    message: "expected two columns".into(),
                });
            };
            let parse = |tok: &str| {
                tok.trim().parse::<f64>().map_err(|_| CdfError::Csv {
                    line: line_no,
                    message: format!("invalid number: {tok}"),
                })
            };
            let x = parse(x_tok)?;
            let f = parse(f_tok)?;
            if !x.is_finite() || !f.is_finite() || !(0.0..=1.0 + 1e-12).contains(&f) {
                return Err(CdfError::Csv {
                    line: line_no,
                    message: "values out of range".into(),
                });
            }
            match xs.last() {
                Some(&last_x) if last_x == x => {
                    // second row for the same jump point carries the
                    // post-jump value
                    let slot = post.last_mut().unwrap();
                    if f < *slot {
                        return Err(CdfError::Csv {
                            line: line_no,
                            message: "CDF must be nondecreasing".into(),
                        });
                    }
                    *slot = f;
                }
                Some(&last_x) if last_x > x => {
                    return Err(CdfError::Csv {
                        line: line_no,
                        message: "jump points must ascend".into(),
                    });
                }
                _ => {
                    if let Some(&prev) = post.last() {
                        if f < prev - 1e-12 {
                            return Err(CdfError::Csv {
                                line: line_no,
                                message: "CDF must be nondecreasing".into(),
                            });
                        }
                    }
                    xs.push(x);
                    post.push(f);
                }
            }
        }
        if !saw_header {
            return Err(CdfError::Csv {
                line: 1,
                message: "missing header x,F".into(),
            });
        }
        Ok(StepCdf { xs, post })
    }

    pub fn jump_xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.xs.partition_point(|&v| v <= x);
        if idx == 0 {
            0.0
        } else {
            self.post[idx - 1]
        }
    }

    pub fn eval_before(&self, x: f64) -> f64 {
        let idx = self.xs.partition_point(|&v| v < x);
        if idx == 0 {
            0.0
        } else {
            self.post[idx - 1]
        }
    }

    /// Value at +infinity.
    pub fn final_fraction(&self) -> f64 {
        self.post.last().copied().unwrap_or(0.0)
    }
}

impl From<&EmpiricalCdf> for StepCdf {
    fn from(cdf: &EmpiricalCdf) -> Self {
        let xs = cdf.jump_points();
        let post = xs.iter().map(|&x| cdf.eval(x)).collect();
        StepCdf { xs, post }
    }
}

/// Kolmogorov-Smirnov statistic with the location where the supremum is
/// attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsStat {
    pub distance: f64,
    pub at_x: f64,
}

/// Supremum over x of |A(x) - B(x)|, evaluated exactly at the union of
/// jump points and just below each of them.
pub fn ks_statistic_steps(a: &StepCdf, b: &StepCdf) -> KsStat {
    let mut best = KsStat {
        distance: 0.0,
        at_x: f64::NEG_INFINITY,
    };
    let mut consider = |d: f64, x: f64| {
        if d > best.distance {
            best = KsStat {
                distance: d,
                at_x: x,
            };
        }
    };
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.xs.len() || j < b.xs.len() {
        let x = match (a.xs.get(i), b.xs.get(j)) {
            (Some(&xa), Some(&xb)) => xa.min(xb),
            (Some(&xa), None) => xa,
            (None, Some(&xb)) => xb,
            (None, None) => break,
        };
        consider((a.eval_before(x) - b.eval_before(x)).abs(), x);
        consider((a.eval(x) - b.eval(x)).abs(), x);
        while i < a.xs.len() && a.xs[i] == x {
            i += 1;
        }
        while j < b.xs.len() && b.xs[j] == x {
            j += 1;
        }
    }
    if best.at_x == f64::NEG_INFINITY {
        best.at_x = 0.0;
    }
    best
}

pub fn ks_statistic(a: &EmpiricalCdf, b: &EmpiricalCdf) -> KsStat {
    assert!(a.total() > 0 && b.total() > 0, "CDFs must be nonempty in N");
    ks_statistic_steps(&StepCdf::from(a), &StepCdf::from(b))
}

/// Supremum distance between two empirical CDFs.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    ks_statistic(a, b).distance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{Calibration, FrameSequence, RangeImage, Return};
    use proptest::prelude::*;

    fn cal() -> Calibration {
        Calibration {
            elev_start_deg: 0.0,
            elev_step_deg: -1.0,
            az_start_deg: 0.0,
            az_step_deg: 1.0,
        }
    }

    fn single_pixel_sequence(ranges: &[Option<f64>]) -> FrameSequence {
        let frames = ranges
            .iter()
            .map(|r| {
                RangeImage::filled(
                    1,
                    1,
                    cal(),
                    match r {
                        Some(v) => Return::hit(*v),
                        None => Return::miss(),
                    },
                )
            })
            .collect();
        FrameSequence::new(frames, 10.0)
    }

    /// Brute-force Eq-(1)-style evaluation used as the oracle.
    fn brute_force_eval(samples: &[f64], total: usize, x: f64) -> f64 {
        samples.iter().map(|&d| unit_step(x - d)).sum::<f64>() / total as f64
    }

    #[test]
    fn unit_step_branches() {
        assert_eq!(unit_step(-0.5), 0.0);
        assert_eq!(unit_step(0.0), 1.0);
        assert_eq!(unit_step(3.2), 1.0);
    }

    #[test]
    fn temporal_cdf_window_case() {
        // 3 of 30 frames return near 11.2 m, the rest 14 m
        let mut obs = vec![Some(14.0); 30];
        obs[3] = Some(11.2);
        obs[11] = Some(11.2);
        obs[25] = Some(11.2);
        let seq = single_pixel_sequence(&obs);
        let cdf = temporal_cdf(&seq, RaypathId::new(0, 0));
        assert_eq!(cdf.total(), 30);
        assert_eq!(cdf.eval(11.3), 0.1);
        assert_eq!(cdf.eval(14.0), 1.0);
    }

    #[test]
    fn temporal_cdf_degenerate_step() {
        let seq = single_pixel_sequence([Some(7.5); 5].as_ref());
        let cdf = temporal_cdf(&seq, RaypathId::new(0, 0));
        assert_eq!(cdf.eval(7.499999), 0.0);
        assert_eq!(cdf.eval(7.5), 1.0);
    }

    #[test]
    fn temporal_cdf_non_return_mass() {
        // counting oracle: 40 of 50 frames return, so F(inf) = 0.8
        let obs: Vec<Option<f64>> = (0..50)
            .map(|k| {
                if k % 5 == 4 {
                    None
                } else {
                    Some(10.0 + k as f64 * 0.001)
                }
            })
            .collect();
        assert_eq!(obs.iter().filter(|o| o.is_none()).count(), 10);
        let seq = single_pixel_sequence(&obs);
        let cdf = temporal_cdf(&seq, RaypathId::new(0, 0));
        assert_eq!(cdf.total(), 50);
        assert_eq!(cdf.return_fraction(), 0.8);
        assert_eq!(cdf.eval(1e9), 0.8);
    }

    #[test]
    fn all_non_return_is_empty_with_full_total() {
        let seq = single_pixel_sequence(&[None; 4]);
        let cdf = temporal_cdf(&seq, RaypathId::new(0, 0));
        assert_eq!(cdf.total(), 4);
        assert_eq!(cdf.samples().len(), 0);
        assert_eq!(cdf.eval(100.0), 0.0);
        assert_eq!(cdf.stats(), Err(CdfError::NoData));
    }

    fn patch_image(ranges: &[Option<f64>]) -> RangeImage {
        // 5x5 image holding the given ranges row-major
        assert_eq!(ranges.len(), 25);
        let cells = ranges
            .iter()
            .map(|r| match r {
                Some(v) => Return::hit(*v),
                None => Return::miss(),
            })
            .collect();
        RangeImage::new(5, 5, cal(), cells)
    }

    #[test]
    fn spatial_cdf_constant_patch() {
        let img = patch_image([Some(10.0); 25].as_ref());
        let cdf = spatial_cdf(&img, RaypathId::new(2, 2), NeighborhoodSpec::new(2, 2));
        assert_eq!(cdf.total(), 25);
        assert_eq!(cdf.eval(10.0), 1.0);
        assert_eq!(cdf.eval(9.99), 0.0);
    }

    #[test]
    fn spatial_cdf_two_cluster_counting() {
        // counting oracle: 5 cells at 11 m, 20 at 14 m -> G(12) = 5/25
        let mut ranges = vec![Some(14.0); 25];
        for slot in ranges.iter_mut().take(5) {
            *slot = Some(11.0);
        }
        let img = patch_image(&ranges);
        let cdf = spatial_cdf(&img, RaypathId::new(2, 2), NeighborhoodSpec::new(2, 2));
        assert_eq!(cdf.eval(12.0), 0.2);
    }

    #[test]
    fn spatial_cdf_non_returns_in_neighborhood() {
        // 3x3 with 2 non-returns: G(inf) = 7/9
        let mut ranges = vec![Some(10.0); 25];
        ranges[6] = None;
        ranges[7] = None;
        let img = patch_image(&ranges);
        let cdf = spatial_cdf(&img, RaypathId::new(1, 1), NeighborhoodSpec::new(1, 1));
        assert_eq!(cdf.total(), 9);
        assert_eq!(cdf.return_fraction(), 7.0 / 9.0);
    }

    #[test]
    fn one_frame_temporal_equals_point_spatial() {
        let mut obs = vec![Some(14.0); 25];
        obs[12] = Some(11.25);
        let img = patch_image(&obs);
        let seq = FrameSequence::new(vec![img.clone()], 10.0);
        let ray = RaypathId::new(2, 2);
        let t = temporal_cdf(&seq, ray);
        let s = spatial_cdf(&img, ray, NeighborhoodSpec::new(0, 0));
        assert_eq!(t.samples(), s.samples());
        assert_eq!(t.total(), s.total());
    }

    #[test]
    fn eval_boundary_cases() {
        let cdf = EmpiricalCdf::from_samples(vec![2.0, 3.0, 5.0], 4, CdfSource::Samples);
        assert_eq!(cdf.eval(1.0), 0.0);
        assert_eq!(cdf.eval(3.0), 0.5); // sample at x is counted
        assert_eq!(cdf.eval(100.0), 0.75); // saturates at return_fraction
    }

    #[test]
    fn stats_oracle_values() {
        // direct formula evaluation: mean 2, population std sqrt(2/3)
        let cdf = EmpiricalCdf::from_samples(vec![1.0, 2.0, 3.0], 3, CdfSource::Samples);
        let stats = cdf.stats().unwrap();
        assert_eq!(stats.mean, 2.0);
        assert!((stats.std - 0.816_496_580_927_726).abs() < 1e-12);
        assert_eq!(stats.span, 2.0);

        let flat = EmpiricalCdf::from_samples(vec![4.0; 6], 6, CdfSource::Samples);
        let s = flat.stats().unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.span, 0.0);

        let partial = EmpiricalCdf::from_samples(vec![1.0; 40], 50, CdfSource::Samples);
        assert_eq!(partial.stats().unwrap().return_fraction, 0.8);
    }

    #[test]
    fn ks_identity_and_singletons() {
        let a = EmpiricalCdf::from_samples(vec![1.0, 2.0, 2.5], 3, CdfSource::Samples);
        assert_eq!(ks_distance(&a, &a), 0.0);

        let s1 = EmpiricalCdf::from_samples(vec![1.0], 1, CdfSource::Samples);
        let s2 = EmpiricalCdf::from_samples(vec![2.0], 1, CdfSource::Samples);
        let stat = ks_statistic(&s1, &s2);
        assert_eq!(stat.distance, 1.0);
        assert_eq!(stat.at_x, 1.0);
    }

    #[test]
    fn ks_tail_gap_from_return_fraction() {
        let a = EmpiricalCdf::from_samples(vec![1.0, 2.0, 3.0, 4.0], 5, CdfSource::Samples);
        let b = EmpiricalCdf::from_samples(vec![1.0, 2.0, 3.0, 4.0], 4, CdfSource::Samples);
        let d = ks_distance(&a, &b);
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_preserves_evaluation() {
        let cdf = EmpiricalCdf::from_samples(vec![1.0, 1.0, 2.5, 4.0], 5, CdfSource::Samples);
        let steps = StepCdf::from_csv(&cdf.to_csv()).unwrap();
        for x in [0.5, 1.0, 1.5, 2.5, 3.0, 4.0, 9.0] {
            assert_eq!(steps.eval(x), cdf.eval(x));
            assert_eq!(steps.eval_before(x), cdf.eval_before(x));
        }
        assert_eq!(steps.final_fraction(), 0.8);
    }

    #[test]
    fn csv_malformed_rejected() {
        assert!(StepCdf::from_csv("").is_err());
        assert!(StepCdf::from_csv("x,F\n1.0\n").is_err());
        assert!(StepCdf::from_csv("x,F\n1.0,0.5\n0.5,0.7\n").is_err());
        assert!(StepCdf::from_csv("x,F\n1.0,0.8\n2.0,0.4\n").is_err());
    }

    proptest! {
        #[test]
        fn eval_matches_brute_force(
            values in proptest::collection::vec(0.0f64..100.0, 1..200),
            misses in 0usize..50,
            probes in proptest::collection::vec(-10.0f64..110.0, 20),
        ) {
            let total = values.len() + misses;
            let cdf = EmpiricalCdf::from_samples(values.clone(), total, CdfSource::Samples);
            for x in probes {
                prop_assert_eq!(cdf.eval(x), brute_force_eval(&values, total, x));
            }
            // probe exactly at samples too (right-continuity)
            for &x in values.iter().take(10) {
                prop_assert_eq!(cdf.eval(x), brute_force_eval(&values, total, x));
            }
        }

        #[test]
        fn eval_is_monotone(
            values in proptest::collection::vec(0.0f64..50.0, 1..100),
            x1 in -5.0f64..55.0,
            x2 in -5.0f64..55.0,
        ) {
            let cdf = EmpiricalCdf::from_samples(values, 120, CdfSource::Samples);
            let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            prop_assert!(cdf.eval(lo) <= cdf.eval(hi));
        }

        #[test]
        fn ks_symmetry_and_bounds(
            a in proptest::collection::vec(0.0f64..20.0, 1..60),
            b in proptest::collection::vec(0.0f64..20.0, 1..60),
            miss_a in 0usize..20,
            miss_b in 0usize..20,
        ) {
            let ca = EmpiricalCdf::from_samples(a.clone(), a.len() + miss_a, CdfSource::Samples);
            let cb = EmpiricalCdf::from_samples(b.clone(), b.len() + miss_b, CdfSource::Samples);
            let d_ab = ks_distance(&ca, &cb);
            let d_ba = ks_distance(&cb, &ca);
            prop_assert_eq!(d_ab, d_ba);
            prop_assert!((0.0..=1.0).contains(&d_ab));
            prop_assert!(d_ab >= (ca.return_fraction() - cb.return_fraction()).abs() - 1e-15);
        }

        #[test]
        fn frame_order_permutation_invariant(
            values in proptest::collection::vec(proptest::option::weighted(0.8, 0.0f64..30.0), 2..20),
            rot in 1usize..19,
        ) {
            let seq = single_pixel_sequence(&values);
            let mut rotated = values.clone();
            rotated.rotate_left(rot % values.len());
            let seq_rot = single_pixel_sequence(&rotated);
            let ray = RaypathId::new(0, 0);
            let a = temporal_cdf(&seq, ray);
            let b = temporal_cdf(&seq_rot, ray);
            prop_assert_eq!(a.samples(), b.samples());
            prop_assert_eq!(a.total(), b.total());
        }
    }
}
