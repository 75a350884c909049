//! Instantaneous multi-return detection from spatial CDFs.
//!
//! A verdict is a pure function of one frame, so there is no latency: a
//! raypath is flagged when its neighborhood range distribution shows a
//! wide span, splits into clusters, or loses too many returns. Reason
//! codes are reported because a wide span can also come from a single
//! oblique surface; SPAN flags are conservative exclusions, not proof of
//! multiple returns.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ecdf::spatial_cdf;
use crate::frames::{NeighborhoodSpec, RangeImage, RaypathId};
use crate::mixture::auto_segment;

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("verdicts ({verdicts}) and labels ({labels}) are not index-aligned")]
    LengthMismatch { verdicts: usize, labels: usize },
    #[error("mask line {line}: {message}")]
    Mask { line: usize, message: String },
}

/// Thresholds for the per-raypath classifier. Defaults sit between
/// step-like single-surface dispersion (a few centimeters) and
/// multi-return cluster gaps (a meter and more); tune per sensor with
/// [`evaluate_monitor`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorConfig {
    pub spec: NeighborhoodSpec,
    pub span_threshold: f64,
    pub min_gap: f64,
    pub min_cluster_count: usize,
    pub max_nonreturn_fraction: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            spec: NeighborhoodSpec::new(1, 1),
            span_threshold: 0.25,
            min_gap: 0.3,
            min_cluster_count: 2,
            max_nonreturn_fraction: 0.3,
        }
    }
}

/// First criterion that fired, in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlagReason {
    Span,
    Clusters,
    NonReturn,
    Clear,
}

impl fmt::Display for FlagReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlagReason::Span => "SPAN",
            FlagReason::Clusters => "CLUSTERS",
            FlagReason::NonReturn => "NONRETURN",
            FlagReason::Clear => "CLEAR",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorVerdict {
    pub ray: RaypathId,
    pub flagged: bool,
    pub span: f64,
    pub cluster_count: usize,
    pub nonreturn_fraction: f64,
    pub reason: FlagReason,
}

/// Classify one raypath from its instantaneous spatial CDF.
pub fn classify_raypath(img: &RangeImage, ray: RaypathId, cfg: &MonitorConfig) -> MonitorVerdict {
    let cdf = spatial_cdf(img, ray, cfg.spec);
    let span = cdf.span();
    let cluster_count = if cdf.samples().is_empty() {
        0
    } else {
        auto_segment(&cdf, cfg.min_gap).len() + 1
    };
    let nonreturn_fraction = 1.0 - cdf.return_fraction();
    let reason = if span > cfg.span_threshold {
        FlagReason::Span
    } else if cluster_count >= cfg.min_cluster_count {
        FlagReason::Clusters
    } else if nonreturn_fraction > cfg.max_nonreturn_fraction {
        FlagReason::NonReturn
    } else {
        FlagReason::Clear
    };
    MonitorVerdict {
        ray,
        flagged: reason != FlagReason::Clear,
        span,
        cluster_count,
        nonreturn_fraction,
        reason,
    }
}

/// Verdict for every pixel, row-major.
pub fn scan_frame(img: &RangeImage, cfg: &MonitorConfig) -> Vec<MonitorVerdict> {
    let mut verdicts = Vec::with_capacity(img.rows() * img.cols());
    for row in 0..img.rows() {
        for col in 0..img.cols() {
            verdicts.push(classify_raypath(img, RaypathId::new(row, col), cfg));
        }
    }
    verdicts
}

/// Confusion counts of flagged verdicts against ground-truth labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Score verdicts against index-aligned multi-return labels. Precision
/// and recall degenerate to 1 when their denominators are empty.
pub fn evaluate_monitor(
    verdicts: &[MonitorVerdict],
    labels: &[bool],
) -> Result<MonitorScore, MonitorError> {
    if verdicts.len() != labels.len() {
        return Err(MonitorError::LengthMismatch {
            verdicts: verdicts.len(),
            labels: labels.len(),
        });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fn_ = 0;
    for (verdict, &label) in verdicts.iter().zip(labels) {
        match (verdict.flagged, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(MonitorScore {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// PGM-style text mask: `P2`, dimensions, maxval 1, then one row of 0/1
/// values per grid row.
pub fn write_mask(rows: usize, cols: usize, flags: &[bool]) -> String {
    assert_eq!(flags.len(), rows * cols, "mask must cover the grid");
    let mut out = format!("P2\n{cols} {rows}\n1\n");
    for row in 0..rows {
        for col in 0..cols {
            if col > 0 {
                out.push(' ');
            }
            out.push(if flags[row * cols + col] { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Parse a mask produced by [`write_mask`]. Returns `(rows, cols, flags)`.
pub fn parse_mask(text: &str) -> Result<(usize, usize, Vec<bool>), MonitorError> {
    let err = |line: usize, message: &str| MonitorError::Mask {
        line,
        message: message.into(),
    };
    let mut lines = text.lines().enumerate();
    let (_, magic) = lines.next().ok_or_else(|| err(1, "empty mask"))?;
    if magic.trim() != "P2" {
        return Err(err(1, "expected P2 magic"));
    }
    let (_, dims) = lines.next().ok_or_else(|| err(2, "missing dimensions"))?;
    let mut parts = dims.split_whitespace();
    let cols: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err(2, "invalid columns"))?;
    let rows: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err(2, "invalid rows"))?;
    let (_, maxval) = lines.next().ok_or_else(|| err(3, "missing maxval"))?;
    if maxval.trim() != "1" {
        return Err(err(3, "expected maxval 1"));
    }
    let mut flags = Vec::with_capacity(rows * cols);
    for (idx, line) in lines {
        for token in line.split_whitespace() {
            match token {
                "0" => flags.push(false),
                "1" => flags.push(true),
                _ => return Err(err(idx + 1, "mask values must be 0 or 1")),
            }
        }
    }
    if flags.len() != rows * cols {
        return Err(err(
            text.lines().count(),
            "mask does not cover the declared grid",
        ));
    }
    Ok((rows, cols, flags))
}

/// Verdict table CSV `i,j,flagged,reason,span,clusters,nonreturn_fraction`.
pub fn verdicts_csv(verdicts: &[MonitorVerdict]) -> String {
    let mut out = String::from("i,j,flagged,reason,span,clusters,nonreturn_fraction\n");
    for v in verdicts {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            v.ray.row,
            v.ray.col,
            v.flagged as u8,
            v.reason,
            v.span,
            v.cluster_count,
            v.nonreturn_fraction
        );
    }
    out
}
