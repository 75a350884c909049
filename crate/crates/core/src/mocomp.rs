//! Patch-based motion compensation for a jittering handheld sensor.
//!
//! Every frame is matched against the anchor patch from frame zero by
//! minimizing the mean squared range difference over the patch; the
//! compensated temporal CDF then samples the center pixel of each optimal
//! match. Matching is integer-pixel only.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ecdf::{CdfSource, EmpiricalCdf};
use crate::frames::{FrameSequence, NeighborhoodSpec, RaypathId};

/// Pairs with a non-return on either side carry no information, so a
/// candidate needs at least this many comparable pairs to be ranked.
pub const DEFAULT_MIN_VALID_PAIRS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("patch has {found} valid pairs, fewer than the required {required}")]
    IncomparablePatch { found: usize, required: usize },
    #[error("no comparable candidate patch in frame {frame}")]
    NoMatch { frame: usize },
}

/// The optimal patch alignment for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchMatch {
    pub frame: usize,
    /// Row offset dp of the matched patch center relative to the anchor.
    pub row_offset: i64,
    /// Column offset dq, on the wrapped azimuth axis.
    pub col_offset: i64,
    /// Mean squared range difference over the valid pairs, in m^2.
    pub cost: f64,
    pub valid_pairs: usize,
}

/// Mean squared range difference between the patch centered on
/// `candidate` in frame `frame` and the anchor patch in frame 0.
/// Pairs where either cell is a non-return or falls outside the row range
/// are excluded; the cost normalizes by the remaining pair count.
pub fn patch_cost(
    seq: &FrameSequence,
    candidate: RaypathId,
    anchor: RaypathId,
    frame: usize,
    spec: NeighborhoodSpec,
) -> Result<(f64, usize), MatchError> {
    patch_cost_with_min(seq, candidate, anchor, frame, spec, DEFAULT_MIN_VALID_PAIRS)
}

pub fn patch_cost_with_min(
    seq: &FrameSequence,
    candidate: RaypathId,
    anchor: RaypathId,
    frame: usize,
    spec: NeighborhoodSpec,
    min_valid_pairs: usize,
) -> Result<(f64, usize), MatchError> {
    assert!(seq.contains(candidate), "candidate out of bounds");
    assert!(seq.contains(anchor), "anchor out of bounds");
    let base = seq.frame(0);
    let target = seq.frame(frame);
    let rows = seq.rows() as i64;
    let hr = spec.half_rows as i64;
    let hc = spec.half_cols as i64;
    let required = min_valid_pairs.max(1);

    let mut sum = 0.0;
    let mut pairs = 0usize;
    for dr in -hr..=hr {
        let anchor_row = anchor.row as i64 + dr;
        let cand_row = candidate.row as i64 + dr;
        if anchor_row < 0 || anchor_row >= rows || cand_row < 0 || cand_row >= rows {
            continue;
        }
        for dc in -hc..=hc {
            let anchor_col = base.wrap_col(anchor.col as i64 + dc);
            let cand_col = target.wrap_col(candidate.col as i64 + dc);
            let a = base.cell(anchor_row as usize, anchor_col).range();
            let c = target.cell(cand_row as usize, cand_col).range();
            if let (Some(a), Some(c)) = (a, c) {
                let diff = c - a;
                sum += diff * diff;
                pairs += 1;
            }
        }
    }
    if pairs < required {
        return Err(MatchError::IncomparablePatch {
            found: pairs,
            required,
        });
    }
    Ok((sum / pairs as f64, pairs))
}

/// Search all candidate centers within `radius` pixels of the anchor and
/// return the cost argmin. Ties break toward the smallest Chebyshev
/// offset, then the smallest `(dp, dq)` in row-major order.
pub fn best_match(
    seq: &FrameSequence,
    anchor: RaypathId,
    frame: usize,
    radius: usize,
    spec: NeighborhoodSpec,
) -> Result<PatchMatch, MatchError> {
    assert!(seq.contains(anchor), "anchor out of bounds");
    let rows = seq.rows() as i64;
    let r = radius as i64;
    let mut best: Option<(PatchMatch, (i64, i64, i64))> = None;
    for dp in -r..=r {
        let row = anchor.row as i64 + dp;
        if row < 0 || row >= rows {
            continue;
        }
        for dq in -r..=r {
            let col = seq.frame(0).wrap_col(anchor.col as i64 + dq);
            let candidate = RaypathId::new(row as usize, col);
            let Ok((cost, valid_pairs)) = patch_cost(seq, candidate, anchor, frame, spec) else {
                continue;
            };
            let key = (dp.abs().max(dq.abs()), dp, dq);
            let better = match &best {
                None => true,
                Some((incumbent, inc_key)) => {
                    cost < incumbent.cost || (cost == incumbent.cost && key < *inc_key)
                }
            };
            if better {
                best = Some((
                    PatchMatch {
                        frame,
                        row_offset: dp,
                        col_offset: dq,
                        cost,
                        valid_pairs,
                    },
                    key,
                ));
            }
        }
    }
    best.map(|(m, _)| m).ok_or(MatchError::NoMatch { frame })
}

/// Best match for every frame of the sequence, frame 0 included.
pub fn match_trace(
    seq: &FrameSequence,
    anchor: RaypathId,
    radius: usize,
    spec: NeighborhoodSpec,
) -> Vec<Result<PatchMatch, MatchError>> {
    (0..seq.frame_count())
        .map(|k| best_match(seq, anchor, k, radius, spec))
        .collect()
}

/// Motion-compensated temporal CDF: the center-pixel range of the optimal
/// match at each frame. Frames with no comparable match, or whose matched
/// center is a non-return, contribute a non-return; N stays K.
pub fn compensated_temporal_cdf(
    seq: &FrameSequence,
    anchor: RaypathId,
    radius: usize,
    spec: NeighborhoodSpec,
) -> EmpiricalCdf {
    let observations = match_trace(seq, anchor, radius, spec)
        .into_iter()
        .enumerate()
        .map(|(k, outcome)| match outcome {
            Ok(m) => {
                let row = (anchor.row as i64 + m.row_offset) as usize;
                let col = seq.frame(k).wrap_col(anchor.col as i64 + m.col_offset);
                seq.frame(k).cell(row, col).range()
            }
            Err(_) => None,
        });
    EmpiricalCdf::from_observations(observations, CdfSource::Compensated { ray: anchor })
}

/// Match trace CSV `k,dp,dq,J,valid_pairs`; frames without a comparable
/// match emit empty offset and cost fields with a zero pair count.
pub fn trace_csv(trace: &[Result<PatchMatch, MatchError>]) -> String {
    let mut out = String::from("k,dp,dq,J,valid_pairs\n");
    for (k, outcome) in trace.iter().enumerate() {
        match outcome {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    k, m.row_offset, m.col_offset, m.cost, m.valid_pairs
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{k},,,,0");
            }
        }
    }
    out
}
