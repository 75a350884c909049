//! Range-image sequences and the RIF text interchange format.
//!
//! A frame is a fully populated rows x cols grid of [`Return`]s on a
//! uniform azimuth/elevation lattice; a non-return is a value, not a hole,
//! so every raypath has exactly one observation per frame.

use std::fmt::Write as _;

use thiserror::Error;

/// File sentinel for a pulse that produced no detection.
pub const NO_RETURN_SENTINEL: f64 = -1.0;

/// Allowed numerical slack when checking that the azimuth grid spans at
/// most a full revolution.
const AZ_SPAN_SLACK_DEG: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RifError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> RifError {
    RifError::Parse {
        line,
        message: message.into(),
    }
}

/// One pulse observation: a range in meters or a non-return, plus an
/// optional reflectance on the 0-100 Lambertian scale (values above 100
/// indicate retroreflection).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Return {
    range: Option<f64>,
    reflectance: Option<f64>,
}

impl Return {
    /// A detected return at `range` meters.
    pub fn hit(range: f64) -> Self {
        assert!(
            range.is_finite() && range >= 0.0,
            "return range must be finite and non-negative, got {range}"
        );
        Return {
            range: Some(range),
            reflectance: None,
        }
    }

    pub fn hit_with_reflectance(range: f64, reflectance: f64) -> Self {
        assert!(
            reflectance.is_finite() && reflectance >= 0.0,
            "reflectance must be finite and non-negative, got {reflectance}"
        );
        Return {
            reflectance: Some(reflectance),
            ..Return::hit(range)
        }
    }

    /// The distinguished non-return value.
    pub fn miss() -> Self {
        Return {
            range: None,
            reflectance: None,
        }
    }

    pub fn range(&self) -> Option<f64> {
        self.range
    }

    pub fn reflectance(&self) -> Option<f64> {
        self.reflectance
    }

    pub fn is_return(&self) -> bool {
        self.range.is_some()
    }

    fn set_reflectance(&mut self, reflectance: Option<f64>) {
        self.reflectance = reflectance;
    }
}

/// Uniform-step beam direction grid: angle(index) = start + index * step,
/// in degrees. Row index selects elevation, column index azimuth.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Calibration {
    pub elev_start_deg: f64,
    pub elev_step_deg: f64,
    pub az_start_deg: f64,
    pub az_step_deg: f64,
}

impl Calibration {
    pub fn elevation_deg(&self, row: usize) -> f64 {
        self.elev_start_deg + row as f64 * self.elev_step_deg
    }

    pub fn azimuth_deg(&self, col: usize) -> f64 {
        self.az_start_deg + col as f64 * self.az_step_deg
    }

    fn span_ok(&self, cols: usize) -> bool {
        self.az_step_deg.abs() * cols as f64 <= 360.0 + AZ_SPAN_SLACK_DEG
    }
}

/// Grid position of a raypath: `row` is the elevation channel, `col` the
/// azimuth bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RaypathId {
    pub row: usize,
    pub col: usize,
}

impl RaypathId {
    pub fn new(row: usize, col: usize) -> Self {
        RaypathId { row, col }
    }
}

/// Half-extents of a pixel neighborhood; a 5x5 patch is `(2, 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeighborhoodSpec {
    pub half_rows: usize,
    pub half_cols: usize,
}

impl NeighborhoodSpec {
    pub fn new(half_rows: usize, half_cols: usize) -> Self {
        NeighborhoodSpec {
            half_rows,
            half_cols,
        }
    }

    /// Full patch size before any row truncation.
    pub fn cell_count(&self) -> usize {
        (2 * self.half_rows + 1) * (2 * self.half_cols + 1)
    }
}

/// One revolution of the lidar: a fully populated grid of returns.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    rows: usize,
    cols: usize,
    calibration: Calibration,
    cells: Vec<Return>,
}

impl RangeImage {
    pub fn new(rows: usize, cols: usize, calibration: Calibration, cells: Vec<Return>) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid must be at least 1x1");
        assert_eq!(cells.len(), rows * cols, "grid must be fully populated");
        assert!(
            calibration.span_ok(cols),
            "azimuth grid spans more than a revolution"
        );
        RangeImage {
            rows,
            cols,
            calibration,
            cells,
        }
    }

    /// Grid with every cell set to `value`.
    pub fn filled(rows: usize, cols: usize, calibration: Calibration, value: Return) -> Self {
        RangeImage::new(rows, cols, calibration, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }

    pub fn cell(&self, row: usize, col: usize) -> Return {
        assert!(row < self.rows && col < self.cols, "cell out of bounds");
        self.cells[row * self.cols + col]
    }

    pub fn get(&self, ray: RaypathId) -> Return {
        self.cell(ray.row, ray.col)
    }

    pub fn set(&mut self, row: usize, col: usize, value: Return) {
        assert!(row < self.rows && col < self.cols, "cell out of bounds");
        self.cells[row * self.cols + col] = value;
    }

    pub fn contains(&self, ray: RaypathId) -> bool {
        ray.row < self.rows && ray.col < self.cols
    }

    /// Wrap a signed column offset onto the periodic azimuth axis.
    pub fn wrap_col(&self, col: i64) -> usize {
        col.rem_euclid(self.cols as i64) as usize
    }

    pub fn cells(&self) -> &[Return] {
        &self.cells
    }
}

/// Time-ordered frames sharing one grid shape and calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<RangeImage>,
    rate_hz: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<RangeImage>, rate_hz: f64) -> Self {
        assert!(!frames.is_empty(), "sequence needs at least one frame");
        assert!(
            rate_hz.is_finite() && rate_hz > 0.0,
            "frame rate must be positive"
        );
        let first = &frames[0];
        assert!(
            frames.iter().all(|f| f.rows == first.rows
                && f.cols == first.cols
                && f.calibration == first.calibration),
            "all frames must share shape and calibration"
        );
        FrameSequence { frames, rate_hz }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, k: usize) -> &RangeImage {
        &self.frames[k]
    }

    pub fn frames(&self) -> &[RangeImage] {
        &self.frames
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn rows(&self) -> usize {
        self.frames[0].rows
    }

    pub fn cols(&self) -> usize {
        self.frames[0].cols
    }

    pub fn calibration(&self) -> Calibration {
        self.frames[0].calibration
    }

    pub fn contains(&self, ray: RaypathId) -> bool {
        self.frames[0].contains(ray)
    }
}

/// A pixel neighborhood. Columns wrap around the spin; rows outside the
/// grid are omitted and counted in `omitted` so distributions can
/// normalize by the effective size.
#[derive(Clone, Debug)]
pub struct Neighborhood {
    pub cells: Vec<Return>,
    pub omitted: usize,
}

impl Neighborhood {
    pub fn effective_len(&self) -> usize {
        self.cells.len()
    }
}

/// Extract the `(2*half_rows+1) x (2*half_cols+1)` block around `center`.
pub fn neighborhood(img: &RangeImage, center: RaypathId, spec: NeighborhoodSpec) -> Neighborhood {
    assert!(img.contains(center), "neighborhood center out of bounds");
    let width = 2 * spec.half_cols + 1;
    let mut cells = Vec::with_capacity(spec.cell_count());
    let mut omitted = 0;
    let hr = spec.half_rows as i64;
    let hc = spec.half_cols as i64;
    for dr in -hr..=hr {
        let row = center.row as i64 + dr;
        if row < 0 || row >= img.rows as i64 {
            omitted += width;
            continue;
        }
        for dc in -hc..=hc {
            let col = img.wrap_col(center.col as i64 + dc);
            cells.push(img.cell(row as usize, col));
        }
    }
    Neighborhood { cells, omitted }
}

/// Cartesian point projected from one range-image cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectance: Option<f64>,
}

/// Spherical-to-Cartesian projection; non-returns emit nothing.
pub fn to_point_cloud(img: &RangeImage) -> Vec<CloudPoint> {
    let cal = img.calibration;
    let mut points = Vec::new();
    for row in 0..img.rows {
        let el = cal.elevation_deg(row).to_radians();
        let (sin_el, cos_el) = el.sin_cos();
        for col in 0..img.cols {
            let ret = img.cell(row, col);
            let Some(range) = ret.range() else { continue };
            let az = cal.azimuth_deg(col).to_radians();
            points.push(CloudPoint {
                x: range * cos_el * az.cos(),
                y: range * cos_el * az.sin(),
                z: range * sin_el,
                reflectance: ret.reflectance(),
            });
        }
    }
    points
}

struct HeaderFields {
    rows: usize,
    cols: usize,
    frames: usize,
    rate_hz: f64,
    calibration: Calibration,
}

const HEADER_KEYS: [&str; 8] = [
    "rows",
    "cols",
    "frames",
    "rate_hz",
    "elev_start",
    "elev_step",
    "az_start",
    "az_step",
];

fn parse_header(line: &str) -> Result<HeaderFields, RifError> {
    let mut tokens = line.split_whitespace();
    match tokens.next() {
        Some("RIF1") => {}
        _ => return Err(parse_err(1, "expected RIF1 header")),
    }
    let mut values = [0.0f64; 8];
    for (key, slot) in HEADER_KEYS.iter().zip(values.iter_mut()) {
        let token = tokens
            .next()
            .ok_or_else(|| parse_err(1, format!("missing header field {key}")))?;
        let value = token
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| parse_err(1, format!("expected {key}=<value>, found {token}")))?;
        *slot = value
            .parse::<f64>()
            .map_err(|_| parse_err(1, format!("invalid number for {key}: {value}")))?;
        if !slot.is_finite() {
            return Err(parse_err(1, format!("{key} must be finite")));
        }
    }
    if tokens.next().is_some() {
        return Err(parse_err(1, "unexpected trailing header fields"));
    }
    let dim = |v: f64, key: &str| -> Result<usize, RifError> {
        if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
            return Err(parse_err(1, format!("{key} must be a positive integer")));
        }
        Ok(v as usize)
    };
    let header = HeaderFields {
        rows: dim(values[0], "rows")?,
        cols: dim(values[1], "cols")?,
        frames: dim(values[2], "frames")?,
        rate_hz: values[3],
        calibration: Calibration {
            elev_start_deg: values[4],
            elev_step_deg: values[5],
            az_start_deg: values[6],
            az_step_deg: values[7],
        },
    };
    if header.rate_hz <= 0.0 {
        return Err(parse_err(1, "rate_hz must be positive"));
    }
    if !header.calibration.span_ok(header.cols) {
        return Err(parse_err(1, "azimuth grid spans more than 360 degrees"));
    }
    Ok(header)
}

/// Parse every cell value of a RIF body into `grid`, calling `apply` with
/// the frame-major cell index and the raw value.
fn parse_body<F>(text: &str, header: &HeaderFields, mut apply: F) -> Result<(), RifError>
where
    F: FnMut(usize, usize, f64) -> Result<(), RifError>,
{
    let mut data_lines = 0usize;
    let rows_expected = header.frames * header.rows;
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if data_lines >= rows_expected {
            return Err(parse_err(line_no, "unexpected content after final frame"));
        }
        let mut count = 0usize;
        for token in line.split(',') {
            let token = token.trim();
            if count >= header.cols {
                return Err(parse_err(
                    line_no,
                    format!("expected {} values per row, found more", header.cols),
                ));
            }
            let value = token
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("invalid number: {token}")))?;
            if !value.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value: {token}")));
            }
            apply(data_lines * header.cols + count, line_no, value)?;
            count += 1;
        }
        if count != header.cols {
            return Err(parse_err(
                line_no,
                format!("expected {} values per row, found {count}", header.cols),
            ));
        }
        data_lines += 1;
    }
    if data_lines != rows_expected {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {rows_expected} data rows, found {data_lines}"),
        ));
    }
    Ok(())
}

/// Parse a RIF range document into a frame sequence.
pub fn parse_frames(text: &str) -> Result<FrameSequence, RifError> {
    let first = text.lines().next().unwrap_or("");
    let header = parse_header(first)?;
    let cells_per_frame = header.rows * header.cols;
    let mut cells = vec![Return::miss(); header.frames * cells_per_frame];
    parse_body(text, &header, |cell_idx, line_no, value| {
        cells[cell_idx] = if value == NO_RETURN_SENTINEL {
            Return::miss()
        } else if value < 0.0 {
            return Err(parse_err(
                line_no,
                format!("negative range other than the -1 sentinel: {value}"),
            ));
        } else {
            Return::hit(value)
        };
        Ok(())
    })?;
    let frames = cells
        .chunks(cells_per_frame)
        .map(|chunk| RangeImage::new(header.rows, header.cols, header.calibration, chunk.to_vec()))
        .collect();
    Ok(FrameSequence::new(frames, header.rate_hz))
}

/// Attach a reflectance sidecar document to an already parsed sequence.
/// The sidecar must carry an identical header; `-1` marks an absent value.
pub fn attach_reflectance(seq: &mut FrameSequence, text: &str) -> Result<(), RifError> {
    let first = text.lines().next().unwrap_or("");
    let header = parse_header(first)?;
    if header.rows != seq.rows()
        || header.cols != seq.cols()
        || header.frames != seq.frame_count()
        || header.rate_hz != seq.rate_hz()
        || header.calibration != seq.calibration()
    {
        return Err(parse_err(1, "reflectance sidecar header does not match"));
    }
    let cells_per_frame = header.rows * header.cols;
    let mut values = vec![None; header.frames * cells_per_frame];
    parse_body(text, &header, |cell_idx, line_no, value| {
        values[cell_idx] = if value == NO_RETURN_SENTINEL {
            None
        } else if value < 0.0 {
            return Err(parse_err(
                line_no,
                format!("negative reflectance other than the -1 sentinel: {value}"),
            ));
        } else {
            Some(value)
        };
        Ok(())
    })?;
    for (k, frame) in seq.frames.iter_mut().enumerate() {
        for (i, cell) in frame.cells.iter_mut().enumerate() {
            cell.set_reflectance(values[k * cells_per_frame + i]);
        }
    }
    Ok(())
}

fn write_header(out: &mut String, seq: &FrameSequence) {
    let cal = seq.calibration();
    let _ = writeln!(
        out,
        "RIF1 rows={} cols={} frames={} rate_hz={} elev_start={} elev_step={} az_start={} az_step={}",
        seq.rows(),
        seq.cols(),
        seq.frame_count(),
        seq.rate_hz(),
        cal.elev_start_deg,
        cal.elev_step_deg,
        cal.az_start_deg,
        cal.az_step_deg,
    );
}

fn write_grid<F>(seq: &FrameSequence, value: F) -> String
where
    F: Fn(Return) -> f64,
{
    let mut out = String::new();
    write_header(&mut out, seq);
    for (k, frame) in seq.frames().iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for row in 0..frame.rows() {
            for col in 0..frame.cols() {
                if col > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", value(frame.cell(row, col)));
            }
            out.push('\n');
        }
    }
    out
}

/// Serialize the range grid in canonical RIF form. `parse_frames` of the
/// result reproduces the sequence exactly.
pub fn write_frames(seq: &FrameSequence) -> String {
    write_grid(seq, |ret| ret.range().unwrap_or(NO_RETURN_SENTINEL))
}

/// Serialize the reflectance sidecar (same header, `-1` where absent).
pub fn write_reflectance(seq: &FrameSequence) -> String {
    write_grid(seq, |ret| ret.reflectance().unwrap_or(NO_RETURN_SENTINEL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_cal() -> Calibration {
        Calibration {
            elev_start_deg: 0.0,
            elev_step_deg: -1.0,
            az_start_deg: 0.0,
            az_step_deg: 1.0,
        }
    }

    fn doc(body: &str) -> String {
        format!("RIF1 rows=2 cols=2 frames=1 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n{body}")
    }

    #[test]
    fn parses_minimal_document() {
        let seq = parse_frames(&doc("1.5,2.5\n3.5,4.5\n")).unwrap();
        assert_eq!(seq.frame_count(), 1);
        assert_eq!(seq.rows(), 2);
        assert_eq!(seq.cols(), 2);
        assert_eq!(seq.frame(0).cell(0, 0).range(), Some(1.5));
        assert_eq!(seq.frame(0).cell(1, 1).range(), Some(4.5));
    }

    #[test]
    fn sentinel_maps_to_no_return() {
        let seq = parse_frames(&doc("1.5,-1\n3.5,4.5\n")).unwrap();
        assert_eq!(seq.frame(0).cell(0, 1), Return::miss());
    }

    #[test]
    fn shape_error_names_offending_line() {
        let err = parse_frames(&doc("1.5,2.5,9.0\n3.5,4.5\n")).unwrap_err();
        assert_eq!(
            err,
            RifError::Parse {
                line: 2,
                message: "expected 2 values per row, found more".into()
            }
        );
        let err = parse_frames(&doc("1.5\n3.5,4.5\n")).unwrap_err();
        match err {
            RifError::Parse { line: 2, .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn negative_range_other_than_sentinel_rejected() {
        let err = parse_frames(&doc("1.5,-0.5\n3.5,4.5\n")).unwrap_err();
        match err {
            RifError::Parse { line: 2, message } => assert!(message.contains("negative range")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_rows_rejected() {
        let err = parse_frames(&doc("1.5,2.5\n")).unwrap_err();
        match err {
            RifError::Parse { message, .. } => assert!(message.contains("expected 2 data rows")),
        }
    }

    #[test]
    fn blank_lines_between_blocks_ignored() {
        let text = "RIF1 rows=1 cols=2 frames=2 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n1,2\n\n\n3,4\n";
        let seq = parse_frames(text).unwrap();
        assert_eq!(seq.frame(1).cell(0, 1).range(), Some(4.0));
    }

    #[test]
    fn round_trip_with_no_return() {
        let seq = parse_frames(&doc("1.5,-1\n3.25,4.125\n")).unwrap();
        let text = write_frames(&seq);
        assert!(text.contains("-1"));
        assert_eq!(parse_frames(&text).unwrap(), seq);
    }

    #[test]
    fn large_sequence_header() {
        let frames = vec![
            RangeImage::filled(
                64,
                1024,
                Calibration {
                    elev_start_deg: 16.6,
                    elev_step_deg: -0.53,
                    az_start_deg: 0.0,
                    az_step_deg: 360.0 / 1024.0,
                },
                Return::hit(10.0),
            );
            30
        ];
        let text = write_frames(&FrameSequence::new(frames, 10.0));
        assert!(text.starts_with("RIF1 rows=64 cols=1024 frames=30 "));
    }

    #[test]
    fn reflectance_sidecar_round_trip() {
        let mut seq = parse_frames(&doc("1.5,-1\n3.5,4.5\n")).unwrap();
        let sidecar = doc("55.5,-1\n-1,183\n");
        attach_reflectance(&mut seq, &sidecar).unwrap();
        assert_eq!(seq.frame(0).cell(0, 0).reflectance(), Some(55.5));
        assert_eq!(seq.frame(0).cell(1, 0).reflectance(), None);
        assert_eq!(seq.frame(0).cell(1, 1).reflectance(), Some(183.0));
        let rewritten = write_reflectance(&seq);
        let mut again = parse_frames(&write_frames(&seq)).unwrap();
        attach_reflectance(&mut again, &rewritten).unwrap();
        assert_eq!(again, seq);
    }

    #[test]
    fn sidecar_header_mismatch_rejected() {
        let mut seq = parse_frames(&doc("1.5,-1\n3.5,4.5\n")).unwrap();
        let other =
            "RIF1 rows=2 cols=2 frames=2 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n1,1\n1,1\n\n1,1\n1,1\n";
        assert!(attach_reflectance(&mut seq, other).is_err());
    }

    #[test]
    fn azimuth_span_guard() {
        let text = "RIF1 rows=1 cols=400 frames=1 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n";
        assert!(parse_frames(text).is_err());
    }

    #[test]
    fn point_cloud_axis_cases() {
        let mut img = RangeImage::filled(2, 2, flat_cal(), Return::miss());
        img.set(0, 0, Return::hit(1.0));
        let points = to_point_cloud(&img);
        assert_eq!(points.len(), 1);
        let p = points[0];
        assert!((p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12 && p.z.abs() < 1e-12);

        // zenith: r=2 at el=90 degrees
        let cal = Calibration {
            elev_start_deg: 90.0,
            elev_step_deg: -1.0,
            az_start_deg: 0.0,
            az_step_deg: 1.0,
        };
        let img = RangeImage::filled(1, 1, cal, Return::hit(2.0));
        let p = to_point_cloud(&img)[0];
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && (p.z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn point_cloud_oblique_case() {
        // r=21 m at elevation -9 degrees, azimuth 0: frozen from direct
        // trigonometric evaluation of the projection.
        let cal = Calibration {
            elev_start_deg: -9.0,
            elev_step_deg: -1.0,
            az_start_deg: 0.0,
            az_step_deg: 1.0,
        };
        let img = RangeImage::filled(1, 1, cal, Return::hit(21.0));
        let p = to_point_cloud(&img)[0];
        assert!((p.x - 20.741455152497894).abs() < 5e-5);
        assert!(p.y.abs() < 1e-12);
        assert!((p.z - -3.2851237658448483).abs() < 5e-5);
    }

    #[test]
    fn neighborhood_interior_wrap_and_truncation() {
        let img = RangeImage::filled(8, 16, flat_cal(), Return::hit(5.0));
        let full = neighborhood(&img, RaypathId::new(4, 8), NeighborhoodSpec::new(2, 2));
        assert_eq!(full.cells.len(), 25);
        assert_eq!(full.omitted, 0);

        let wrapped = neighborhood(&img, RaypathId::new(4, 0), NeighborhoodSpec::new(1, 1));
        assert_eq!(wrapped.cells.len(), 9);
        assert_eq!(wrapped.omitted, 0);

        let truncated = neighborhood(&img, RaypathId::new(0, 8), NeighborhoodSpec::new(1, 1));
        assert_eq!(truncated.cells.len(), 6);
        assert_eq!(truncated.omitted, 3);
    }

    #[test]
    fn neighborhood_wrap_reads_far_column() {
        let mut img = RangeImage::filled(1, 8, flat_cal(), Return::hit(5.0));
        img.set(0, 7, Return::hit(9.0));
        let nb = neighborhood(&img, RaypathId::new(0, 0), NeighborhoodSpec::new(0, 1));
        let ranges: Vec<_> = nb.cells.iter().map(|c| c.range().unwrap()).collect();
        assert_eq!(ranges, vec![9.0, 5.0, 5.0]);
    }

    #[test]
    fn zero_spec_neighborhood_is_center() {
        let mut img = RangeImage::filled(3, 3, flat_cal(), Return::hit(5.0));
        img.set(1, 1, Return::hit(7.0));
        let nb = neighborhood(&img, RaypathId::new(1, 1), NeighborhoodSpec::new(0, 0));
        assert_eq!(nb.cells.len(), 1);
        assert_eq!(nb.cells[0].range(), Some(7.0));
        assert_eq!(nb.omitted, 0);
    }

    proptest! {
        #[test]
        fn point_cloud_preserves_range(
            range in 0.01f64..200.0,
            el in -80.0f64..80.0,
            az in 0.0f64..359.0,
        ) {
            let cal = Calibration {
                elev_start_deg: el,
                elev_step_deg: -1.0,
                az_start_deg: az,
                az_step_deg: 0.5,
            };
            let img = RangeImage::filled(1, 1, cal, Return::hit(range));
            let p = to_point_cloud(&img)[0];
            let r = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
            prop_assert!((r - range).abs() <= 1e-9 * range);
        }

        #[test]
        fn neighborhood_size_law(
            rows in 1usize..12,
            cols in 1usize..24,
            half_rows in 0usize..3,
            half_cols in 0usize..3,
            seed in 0u64..1000,
        ) {
            let center = RaypathId::new(seed as usize % rows, (seed as usize / 7) % cols);
            let cal = Calibration {
                elev_start_deg: 0.0, elev_step_deg: -1.0,
                az_start_deg: 0.0, az_step_deg: 0.1,
            };
            // mix in non-returns; they must not change the cell count
            let cells: Vec<Return> = (0..rows * cols)
                .map(|i| if (i + seed as usize).is_multiple_of(3) { Return::miss() } else { Return::hit(i as f64) })
                .collect();
            let img = RangeImage::new(rows, cols, cal, cells);
            let spec = NeighborhoodSpec::new(half_rows.min((rows - 1) / 2), half_cols);
            let nb = neighborhood(&img, center, spec);
            prop_assert_eq!(nb.cells.len() + nb.omitted, spec.cell_count());
        }

        #[test]
        fn rif_round_trip_random(
            rows in 1usize..4,
            cols in 1usize..5,
            frames in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cal = Calibration {
                elev_start_deg: rng.gen_range(-45.0..45.0),
                elev_step_deg: rng.gen_range(-2.0..-0.1),
                az_start_deg: rng.gen_range(0.0..10.0),
                az_step_deg: rng.gen_range(0.01..1.0),
            };
            let imgs: Vec<RangeImage> = (0..frames)
                .map(|_| {
                    let cells = (0..rows * cols)
                        .map(|_| {
                            if rng.gen_bool(0.2) {
                                Return::miss()
                            } else {
                                Return::hit(rng.gen_range(0.0..200.0))
                            }
                        })
                        .collect();
                    RangeImage::new(rows, cols, cal, cells)
                })
                .collect();
            let seq = FrameSequence::new(imgs, 10.0);
            let text = write_frames(&seq);
            prop_assert_eq!(parse_frames(&text).unwrap(), seq);
        }
    }
}
