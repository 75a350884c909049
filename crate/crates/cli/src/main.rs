//! `multiret`: reproducible multi-return range-ambiguity analyses.
//!
//! Every subcommand is deterministic given its inputs and `--seed`;
//! outputs are written atomically so re-running a command overwrites
//! byte-identical files. Exit codes: 0 success, 1 data error, 2 usage
//! error.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Deserialize;

use multiret::beamsim::{self, BeamSpec, DetectorPolicy, Scene};
use multiret::ecdf::{self, EmpiricalCdf, StepCdf};
use multiret::frames::{self, Calibration, FrameSequence, NeighborhoodSpec, RangeImage, RaypathId};
use multiret::mixture;
use multiret::mocomp;
use multiret::monitor::{self, MonitorConfig};
use multiret::regimpact::{self, ReferenceKind, RegistrationConfig};

enum CliError {
    Usage(String),
    Data(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

#[derive(Parser)]
#[command(
    name = "multiret",
    version,
    about = "Multi-return lidar range ambiguity: CDFs, motion compensation, GMM fits, monitoring, simulation, registration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Temporal CDF of one raypath, optionally motion-compensated
    Tcdf(TcdfArgs),
    /// Instantaneous spatial CDF over a pixel neighborhood
    Scdf(ScdfArgs),
    /// Patch motion compensation: match trace and compensated CDF
    Mocomp(MocompArgs),
    /// Fit a Gaussian mixture to a raypath's range distribution
    FitGmm(FitGmmArgs),
    /// Kolmogorov-Smirnov distance between two CDF CSV files
    Compare(CompareArgs),
    /// Flag multi-return raypaths from spatial CDFs
    Monitor(MonitorArgs),
    /// Simulate a scene into RIF frames with ground-truth labels
    Simulate(SimulateArgs),
    /// Registration bias sweep over cluster gaps
    RegExperiment(RegExperimentArgs),
    /// Export a frame as an x,y,z point cloud
    Convert(ConvertArgs),
}

/// Fill unset options from a config-file instance of the same struct.
macro_rules! merge_options {
    ($args:expr, $cfg:expr, [$($field:ident),* $(,)?]) => {
        $( if $args.$field.is_none() { $args.$field = $cfg.$field; } )*
    };
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn require<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn parse_ray(text: &str) -> CliResult<(usize, usize)> {
    let mut parts = text.split(',');
    let (Some(i), Some(j), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(usage(format!("--ray expects i,j, got {text}")));
    };
    let row = i
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad row index {i}")))?;
    let col = j
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad column index {j}")))?;
    Ok((row, col))
}

fn parse_patch(text: &str) -> CliResult<NeighborhoodSpec> {
    let mut parts = text.split('x');
    let (Some(r), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(usage(format!("--patch expects RxC, got {text}")));
    };
    let rows: usize = r
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad patch rows {r}")))?;
    let cols: usize = c
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad patch cols {c}")))?;
    if rows.is_multiple_of(2) || cols.is_multiple_of(2) || rows == 0 || cols == 0 {
        return Err(usage(format!("patch dimensions must be odd, got {text}")));
    }
    Ok(NeighborhoodSpec::new(rows / 2, cols / 2))
}

fn parse_f64_list(text: &str, flag: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--{flag}: bad number {tok}")))
        })
        .collect()
}

/// Guard numeric flags before they reach library preconditions, so bad
/// values surface as usage errors rather than panics.
fn check_positive(value: f64, flag: &str) -> CliResult<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(usage(format!("--{flag} must be positive, got {value}")))
    }
}

fn check_non_negative(value: f64, flag: &str) -> CliResult<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(usage(format!("--{flag} must be non-negative, got {value}")))
    }
}

fn load_sequence(input: &Path, reflectance: Option<&Path>) -> CliResult<FrameSequence> {
    let text = fs::read_to_string(input).map_err(|e| data(format!("{}: {e}", input.display())))?;
    let mut seq =
        frames::parse_frames(&text).map_err(|e| data(format!("{}: {e}", input.display())))?;
    if let Some(side) = reflectance {
        let side_text =
            fs::read_to_string(side).map_err(|e| data(format!("{}: {e}", side.display())))?;
        frames::attach_reflectance(&mut seq, &side_text)
            .map_err(|e| data(format!("{}: {e}", side.display())))?;
    }
    Ok(seq)
}

fn check_ray(seq: &FrameSequence, ray: RaypathId) -> CliResult<()> {
    if !seq.contains(ray) {
        return Err(usage(format!(
            "ray {},{} outside the {}x{} grid",
            ray.row,
            ray.col,
            seq.rows(),
            seq.cols()
        )));
    }
    Ok(())
}

fn out_dir(dir: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Write via a temp file and rename, so outputs appear atomically.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| data(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

// ------------------------------------------------------------- tcdf

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct TcdfArgs {
    /// RIF input document
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optional reflectance sidecar
    #[arg(long)]
    reflectance: Option<PathBuf>,
    /// Raypath as i,j
    #[arg(long)]
    ray: Option<String>,
    /// Also emit the motion-compensated CDF and match trace
    #[arg(long, action = ArgAction::SetTrue)]
    compensate: Option<bool>,
    /// Search radius in pixels for compensation
    #[arg(long)]
    radius: Option<usize>,
    /// Matching patch as RxC (odd dimensions)
    #[arg(long)]
    patch: Option<String>,
    /// Also render an SVG step plot
    #[arg(long, action = ArgAction::SetTrue)]
    svg: Option<bool>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file mirroring these flags
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_tcdf(mut args: TcdfArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: TcdfArgs = load_config(&path)?;
        merge_options!(
            args,
            cfg,
            [input, reflectance, ray, compensate, radius, patch, svg, out]
        );
    }
    let input = require(args.input, "input")?;
    let (row, col) = parse_ray(&require(args.ray, "ray")?)?;
    let ray = RaypathId::new(row, col);
    let seq = load_sequence(&input, args.reflectance.as_deref())?;
    check_ray(&seq, ray)?;
    let dir = out_dir(&args.out)?;

    let cdf = ecdf::temporal_cdf(&seq, ray);
    write_atomic(&dir.join(format!("tcdf_{row}_{col}.csv")), &cdf.to_csv())?;
    let stats = cdf
        .stats()
        .map_err(|e| data(format!("ray {row},{col}: {e}")))?;
    write_atomic(
        &dir.join(format!("tcdf_{row}_{col}_stats.txt")),
        &stats.to_key_values(),
    )?;

    let mut curves: Vec<(String, StepCdf)> = vec![("temporal".into(), StepCdf::from(&cdf))];
    if args.compensate.unwrap_or(false) {
        let radius = args.radius.unwrap_or(2);
        let patch = parse_patch(args.patch.as_deref().unwrap_or("5x5"))?;
        let trace = mocomp::match_trace(&seq, ray, radius, patch);
        write_atomic(
            &dir.join(format!("mocomp_trace_{row}_{col}.csv")),
            &mocomp::trace_csv(&trace),
        )?;
        let compensated = mocomp::compensated_temporal_cdf(&seq, ray, radius, patch);
        write_atomic(
            &dir.join(format!("tcdf_{row}_{col}_compensated.csv")),
            &compensated.to_csv(),
        )?;
        if let Ok(comp_stats) = compensated.stats() {
            write_atomic(
                &dir.join(format!("tcdf_{row}_{col}_compensated_stats.txt")),
                &comp_stats.to_key_values(),
            )?;
        }
        let ks = ecdf::ks_statistic(&cdf, &compensated);
        println!("ks_plain_vs_compensated={} at_x={}", ks.distance, ks.at_x);
        curves.push(("compensated".into(), StepCdf::from(&compensated)));
    }
    if args.svg.unwrap_or(false) {
        let refs: Vec<(&str, &StepCdf)> = curves.iter().map(|(l, c)| (l.as_str(), c)).collect();
        write_atomic(
            &dir.join(format!("tcdf_{row}_{col}.svg")),
            &svg::cdf_svg(&refs),
        )?;
    }
    Ok(())
}

// ------------------------------------------------------------- scdf

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct ScdfArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    reflectance: Option<PathBuf>,
    /// Frame index k
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    ray: Option<String>,
    /// Neighborhood as RxC, e.g. 3x3 or 5x5
    #[arg(long)]
    patch: Option<String>,
    /// Emit one CDF block per frame instead of a single frame
    #[arg(long, action = ArgAction::SetTrue)]
    all_frames: Option<bool>,
    #[arg(long, action = ArgAction::SetTrue)]
    svg: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_scdf(mut args: ScdfArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: ScdfArgs = load_config(&path)?;
        merge_options!(
            args,
            cfg,
            [input, reflectance, frame, ray, patch, all_frames, svg, out]
        );
    }
    let input = require(args.input, "input")?;
    let (row, col) = parse_ray(&require(args.ray, "ray")?)?;
    let ray = RaypathId::new(row, col);
    let patch = parse_patch(args.patch.as_deref().unwrap_or("3x3"))?;
    let seq = load_sequence(&input, args.reflectance.as_deref())?;
    check_ray(&seq, ray)?;
    let dir = out_dir(&args.out)?;

    if args.all_frames.unwrap_or(false) {
        let mut out = String::new();
        for k in 0..seq.frame_count() {
            let cdf = ecdf::spatial_cdf_at(seq.frame(k), ray, patch, k);
            out.push_str(&format!("# frame={k}\n"));
            out.push_str(&cdf.to_csv());
            out.push('\n');
        }
        write_atomic(&dir.join(format!("scdf_{row}_{col}_all.csv")), &out)?;
        return Ok(());
    }

    let k = args.frame.unwrap_or(0);
    if k >= seq.frame_count() {
        return Err(usage(format!(
            "frame {k} outside the {}-frame sequence",
            seq.frame_count()
        )));
    }
    let cdf = ecdf::spatial_cdf_at(seq.frame(k), ray, patch, k);
    write_atomic(
        &dir.join(format!("scdf_{row}_{col}_f{k}.csv")),
        &cdf.to_csv(),
    )?;
    if args.svg.unwrap_or(false) {
        let steps = StepCdf::from(&cdf);
        write_atomic(
            &dir.join(format!("scdf_{row}_{col}_f{k}.svg")),
            &svg::cdf_svg(&[("spatial", &steps)]),
        )?;
    }
    Ok(())
}

// ----------------------------------------------------------- mocomp

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct MocompArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    ray: Option<String>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    patch: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_mocomp(mut args: MocompArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: MocompArgs = load_config(&path)?;
        merge_options!(args, cfg, [input, ray, radius, patch, out]);
    }
    let input = require(args.input, "input")?;
    let (row, col) = parse_ray(&require(args.ray, "ray")?)?;
    let ray = RaypathId::new(row, col);
    let seq = load_sequence(&input, None)?;
    check_ray(&seq, ray)?;
    let radius = args.radius.unwrap_or(2);
    let patch = parse_patch(args.patch.as_deref().unwrap_or("5x5"))?;
    let dir = out_dir(&args.out)?;

    let trace = mocomp::match_trace(&seq, ray, radius, patch);
    write_atomic(
        &dir.join(format!("mocomp_trace_{row}_{col}.csv")),
        &mocomp::trace_csv(&trace),
    )?;
    let compensated = mocomp::compensated_temporal_cdf(&seq, ray, radius, patch);
    write_atomic(
        &dir.join(format!("mocomp_cdf_{row}_{col}.csv")),
        &compensated.to_csv(),
    )?;
    if let Ok(stats) = compensated.stats() {
        write_atomic(
            &dir.join(format!("mocomp_cdf_{row}_{col}_stats.txt")),
            &stats.to_key_values(),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------- fit-gmm

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct FitGmmArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    ray: Option<String>,
    /// Fit the spatial CDF of this frame instead of the temporal CDF
    #[arg(long)]
    frame: Option<usize>,
    /// Neighborhood for the spatial CDF
    #[arg(long)]
    patch: Option<String>,
    /// Manual CDF-value thresholds, ascending, e.g. 0.14,0.38,0.68
    #[arg(long)]
    thresholds: Option<String>,
    /// Range gap for automatic threshold placement, meters
    #[arg(long)]
    min_gap: Option<f64>,
    /// Lower bound on fitted standard deviations, meters
    #[arg(long)]
    sigma_floor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_fit_gmm(mut args: FitGmmArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: FitGmmArgs = load_config(&path)?;
        merge_options!(
            args,
            cfg,
            [
                input,
                ray,
                frame,
                patch,
                thresholds,
                min_gap,
                sigma_floor,
                out
            ]
        );
    }
    let input = require(args.input, "input")?;
    let (row, col) = parse_ray(&require(args.ray, "ray")?)?;
    let ray = RaypathId::new(row, col);
    let seq = load_sequence(&input, None)?;
    check_ray(&seq, ray)?;
    let dir = out_dir(&args.out)?;

    let cdf: EmpiricalCdf = match args.frame {
        Some(k) => {
            if k >= seq.frame_count() {
                return Err(usage(format!(
                    "frame {k} outside the {}-frame sequence",
                    seq.frame_count()
                )));
            }
            let patch = parse_patch(args.patch.as_deref().unwrap_or("3x3"))?;
            ecdf::spatial_cdf_at(seq.frame(k), ray, patch, k)
        }
        None => ecdf::temporal_cdf(&seq, ray),
    };

    let thresholds = match &args.thresholds {
        Some(text) => parse_f64_list(text, "thresholds")?,
        None => {
            let min_gap =
                check_positive(args.min_gap.unwrap_or(mixture::DEFAULT_MIN_GAP), "min-gap")?;
            mixture::auto_segment(&cdf, min_gap)
        }
    };
    let clusters = mixture::segment_by_thresholds(&cdf, &thresholds)
        .map_err(|e| data(format!("segmentation: {e}")))?;
    let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
    let sigma_floor = check_positive(
        args.sigma_floor.unwrap_or(mixture::DEFAULT_SIGMA_FLOOR),
        "sigma-floor",
    )?;
    let fit = mixture::fit_gmm(&clusters, sigma_floor).map_err(|e| data(format!("fit: {e}")))?;
    let fit_error = mixture::model_fit_error(&fit, &cdf);

    write_atomic(&dir.join(format!("gmm_{row}_{col}.json")), &fit.to_json())?;
    write_atomic(
        &dir.join(format!("gmm_{row}_{col}_report.csv")),
        &mixture::fit_report_csv(&fit, &sizes),
    )?;
    let summary = format!(
        "clusters={}\nthresholds={}\nfit_error={}\nsigma_floor={}\n",
        fit.clusters().len(),
        thresholds
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(","),
        fit_error,
        sigma_floor,
    );
    write_atomic(&dir.join(format!("gmm_{row}_{col}_fit.txt")), &summary)?;
    println!("fit_error={fit_error}");
    Ok(())
}

// ---------------------------------------------------------- compare

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct CompareArgs {
    /// First CDF CSV
    #[arg(long)]
    a: Option<PathBuf>,
    /// Second CDF CSV
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_compare(mut args: CompareArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: CompareArgs = load_config(&path)?;
        merge_options!(args, cfg, [a, b]);
    }
    // compare treats unreadable or malformed inputs as usage errors
    let load = |path: &Path| -> CliResult<StepCdf> {
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        StepCdf::from_csv(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    };
    let a = load(&require(args.a, "a")?)?;
    let b = load(&require(args.b, "b")?)?;
    let stat = ecdf::ks_statistic_steps(&a, &b);
    println!("ks={} at_x={}", stat.distance, stat.at_x);
    Ok(())
}

// ---------------------------------------------------------- monitor

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct MonitorArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    patch: Option<String>,
    /// Span threshold in meters
    #[arg(long)]
    span_threshold: Option<f64>,
    /// Cluster gap in meters
    #[arg(long)]
    min_gap: Option<f64>,
    /// Cluster count that triggers a flag
    #[arg(long)]
    min_clusters: Option<usize>,
    /// Non-return fraction that triggers a flag
    #[arg(long)]
    max_nonreturn: Option<f64>,
    /// Ground-truth mask for precision/recall scoring
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_monitor(mut args: MonitorArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: MonitorArgs = load_config(&path)?;
        merge_options!(
            args,
            cfg,
            [
                input,
                frame,
                patch,
                span_threshold,
                min_gap,
                min_clusters,
                max_nonreturn,
                labels,
                out
            ]
        );
    }
    let input = require(args.input, "input")?;
    let seq = load_sequence(&input, None)?;
    let k = args.frame.unwrap_or(0);
    if k >= seq.frame_count() {
        return Err(usage(format!(
            "frame {k} outside the {}-frame sequence",
            seq.frame_count()
        )));
    }
    let defaults = MonitorConfig::default();
    let min_clusters = args.min_clusters.unwrap_or(defaults.min_cluster_count);
    if min_clusters < 2 {
        return Err(usage(format!(
            "--min-clusters must be at least 2, got {min_clusters}"
        )));
    }
    let cfg = MonitorConfig {
        spec: match &args.patch {
            Some(text) => parse_patch(text)?,
            None => defaults.spec,
        },
        span_threshold: check_positive(
            args.span_threshold.unwrap_or(defaults.span_threshold),
            "span-threshold",
        )?,
        min_gap: check_positive(args.min_gap.unwrap_or(defaults.min_gap), "min-gap")?,
        min_cluster_count: min_clusters,
        max_nonreturn_fraction: check_non_negative(
            args.max_nonreturn
                .unwrap_or(defaults.max_nonreturn_fraction),
            "max-nonreturn",
        )?,
    };
    let dir = out_dir(&args.out)?;

    let img: &RangeImage = seq.frame(k);
    let verdicts = monitor::scan_frame(img, &cfg);
    let flags: Vec<bool> = verdicts.iter().map(|v| v.flagged).collect();
    write_atomic(
        &dir.join(format!("monitor_mask_f{k}.pgm")),
        &monitor::write_mask(img.rows(), img.cols(), &flags),
    )?;
    write_atomic(
        &dir.join(format!("monitor_verdicts_f{k}.csv")),
        &monitor::verdicts_csv(&verdicts),
    )?;

    if let Some(label_path) = &args.labels {
        let text = fs::read_to_string(label_path)
            .map_err(|e| data(format!("{}: {e}", label_path.display())))?;
        let (rows, cols, labels) = monitor::parse_mask(&text)
            .map_err(|e| data(format!("{}: {e}", label_path.display())))?;
        if rows != img.rows() || cols != img.cols() {
            return Err(data(format!(
                "label mask is {rows}x{cols}, frame is {}x{}",
                img.rows(),
                img.cols()
            )));
        }
        let score =
            monitor::evaluate_monitor(&verdicts, &labels).map_err(|e| data(e.to_string()))?;
        let metrics = format!(
            "precision={}\nrecall={}\ntrue_positives={}\nfalse_positives={}\ntrue_negatives={}\nfalse_negatives={}\n",
            score.precision,
            score.recall,
            score.true_positives,
            score.false_positives,
            score.true_negatives,
            score.false_negatives,
        );
        write_atomic(&dir.join(format!("monitor_metrics_f{k}.txt")), &metrics)?;
        println!("precision={} recall={}", score.precision, score.recall);
    }
    Ok(())
}

// --------------------------------------------------------- simulate

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct SimulateArgs {
    /// Scene JSON (list of surfaces)
    #[arg(long)]
    scene: Option<PathBuf>,
    /// RNG seed; required so runs are reproducible
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    elev_start: Option<f64>,
    #[arg(long)]
    elev_step: Option<f64>,
    #[arg(long)]
    az_start: Option<f64>,
    #[arg(long)]
    az_step: Option<f64>,
    /// Beam divergence half-angle, radians
    #[arg(long)]
    divergence: Option<f64>,
    #[arg(long)]
    subrays: Option<usize>,
    /// Range noise standard deviation, meters
    #[arg(long)]
    noise: Option<f64>,
    /// Detector policy: strongest or last
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    rate_hz: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_simulate(mut args: SimulateArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: SimulateArgs = load_config(&path)?;
        merge_options!(
            args,
            cfg,
            [
                scene, seed, frames, rows, cols, elev_start, elev_step, az_start, az_step,
                divergence, subrays, noise, policy, rate_hz, out
            ]
        );
    }
    let scene_path = require(args.scene, "scene")?;
    let seed = require(args.seed, "seed")?;
    let text = fs::read_to_string(&scene_path)
        .map_err(|e| data(format!("{}: {e}", scene_path.display())))?;
    let mut scene =
        Scene::from_json(&text).map_err(|e| data(format!("{}: {e}", scene_path.display())))?;
    scene.seed = seed;

    let policy = match args.policy.as_deref().unwrap_or("strongest") {
        "strongest" => DetectorPolicy::Strongest,
        "last" => DetectorPolicy::Last,
        other => return Err(usage(format!("unknown policy {other}"))),
    };
    let rows = args.rows.unwrap_or(16);
    let cols = args.cols.unwrap_or(64);
    if rows == 0 || cols == 0 {
        return Err(usage("grid dimensions must be at least 1"));
    }
    let calibration = Calibration {
        elev_start_deg: args.elev_start.unwrap_or((rows as f64 - 1.0) / 2.0 * 0.5),
        elev_step_deg: args.elev_step.unwrap_or(-0.5),
        az_start_deg: args.az_start.unwrap_or(-(cols as f64 - 1.0) / 2.0 * 0.25),
        az_step_deg: args.az_step.unwrap_or(0.25),
    };
    for (value, flag) in [
        (calibration.elev_start_deg, "elev-start"),
        (calibration.elev_step_deg, "elev-step"),
        (calibration.az_start_deg, "az-start"),
        (calibration.az_step_deg, "az-step"),
    ] {
        if !value.is_finite() {
            return Err(usage(format!("--{flag} must be finite, got {value}")));
        }
    }
    if calibration.az_step_deg.abs() * cols as f64 > 360.0 + 1e-6 {
        return Err(usage(format!(
            "azimuth grid spans {} degrees, more than a revolution",
            calibration.az_step_deg.abs() * cols as f64
        )));
    }
    let subrays = args.subrays.unwrap_or(128);
    if subrays == 0 {
        return Err(usage("--subrays must be at least 1"));
    }
    let spec = BeamSpec {
        origin: beamsim::Vec3::new(0.0, 0.0, 0.0),
        rows,
        cols,
        calibration,
        rate_hz: check_positive(args.rate_hz.unwrap_or(10.0), "rate-hz")?,
        half_angle_rad: check_positive(args.divergence.unwrap_or(0.003), "divergence")?,
        subrays,
        range_noise_std: check_non_negative(args.noise.unwrap_or(0.02), "noise")?,
        policy,
    };
    let frames_count = args.frames.unwrap_or(30);
    if frames_count == 0 {
        return Err(usage("--frames must be at least 1"));
    }
    let dir = out_dir(&args.out)?;

    let (seq, labels) = beamsim::simulate_sequence(&scene, &spec, frames_count);
    write_atomic(&dir.join("sim.rif"), &frames::write_frames(&seq))?;
    write_atomic(
        &dir.join("sim_reflectance.rif"),
        &frames::write_reflectance(&seq),
    )?;
    write_atomic(
        &dir.join("sim_labels.pgm"),
        &monitor::write_mask(spec.rows, spec.cols, &labels),
    )?;
    Ok(())
}

// --------------------------------------------------- reg-experiment

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct RegExperimentArgs {
    /// RNG seed; required so runs are reproducible
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of rays made ambiguous
    #[arg(long)]
    phi: Option<f64>,
    /// Cluster gaps to sweep, meters
    #[arg(long)]
    deltas: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Reference kind: scan or map
    #[arg(long)]
    reference: Option<String>,
    /// Per-coordinate point noise, meters
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    rays: Option<usize>,
    /// Room half extent, meters
    #[arg(long)]
    room: Option<f64>,
    /// ICP matching radius, meters
    #[arg(long)]
    r_max: Option<f64>,
    /// NDT voxel size, meters
    #[arg(long)]
    voxel: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_reg_experiment(mut args: RegExperimentArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: RegExperimentArgs = load_config(&path)?;
        merge_options!(
            args,
            cfg,
            [seed, phi, deltas, trials, reference, noise, rays, room, r_max, voxel, out]
        );
    }
    let seed = require(args.seed, "seed")?;
    let reference = match args.reference.as_deref().unwrap_or("scan") {
        "scan" => ReferenceKind::Scan,
        "map" => ReferenceKind::Map,
        other => return Err(usage(format!("unknown reference kind {other}"))),
    };
    let deltas = match &args.deltas {
        Some(text) => parse_f64_list(text, "deltas")?,
        None => vec![0.0, 0.05, 0.1, 0.2],
    };
    for &delta in &deltas {
        check_non_negative(delta, "deltas")?;
    }
    let phi = args.phi.unwrap_or(0.1);
    if !(0.0..=0.25).contains(&phi) {
        return Err(usage(format!(
            "--phi must lie in [0, 0.25] so injected rays fit on one wall, got {phi}"
        )));
    }
    let rays = args.rays.unwrap_or(RegistrationConfig::default().rays);
    if rays < 8 || !rays.is_multiple_of(4) {
        return Err(usage(format!(
            "--rays must be a multiple of 4 and at least 8, got {rays}"
        )));
    }
    let defaults = RegistrationConfig::default();
    let mut base = RegistrationConfig {
        injected_fraction: phi,
        reference,
        noise_std: check_non_negative(args.noise.unwrap_or(defaults.noise_std), "noise")?,
        rays,
        room_half_extent: check_positive(args.room.unwrap_or(defaults.room_half_extent), "room")?,
        seed,
        ..defaults
    };
    base.icp.max_match_radius =
        check_positive(args.r_max.unwrap_or(base.icp.max_match_radius), "r-max")?;
    base.ndt.voxel_size = check_positive(args.voxel.unwrap_or(base.ndt.voxel_size), "voxel")?;
    let trials = args.trials.unwrap_or(100);
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let dir = out_dir(&args.out)?;

    let rows = regimpact::bias_report(&base, &deltas, trials)
        .map_err(|e| data(format!("registration: {e}")))?;
    write_atomic(
        &dir.join("bias_report.csv"),
        &regimpact::bias_report_csv(&rows),
    )?;
    Ok(())
}

// ---------------------------------------------------------- convert

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
struct ConvertArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    reflectance: Option<PathBuf>,
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn run_convert(mut args: ConvertArgs) -> CliResult<()> {
    if let Some(path) = args.config.take() {
        let cfg: ConvertArgs = load_config(&path)?;
        merge_options!(args, cfg, [input, reflectance, frame, out]);
    }
    let input = require(args.input, "input")?;
    let seq = load_sequence(&input, args.reflectance.as_deref())?;
    let k = args.frame.unwrap_or(0);
    if k >= seq.frame_count() {
        return Err(usage(format!(
            "frame {k} outside the {}-frame sequence",
            seq.frame_count()
        )));
    }
    let dir = out_dir(&args.out)?;
    let mut out = String::from("x,y,z,reflectance\n");
    for p in frames::to_point_cloud(seq.frame(k)) {
        let refl = p.reflectance.map(|r| r.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.z, refl));
    }
    write_atomic(&dir.join(format!("cloud_f{k}.csv")), &out)?;
    Ok(())
}

// ------------------------------------------------------------- main

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Tcdf(args) => run_tcdf(args),
        Command::Scdf(args) => run_scdf(args),
        Command::Mocomp(args) => run_mocomp(args),
        Command::FitGmm(args) => run_fit_gmm(args),
        Command::Compare(args) => run_compare(args),
        Command::Monitor(args) => run_monitor(args),
        Command::Simulate(args) => run_simulate(args),
        Command::RegExperiment(args) => run_reg_experiment(args),
        Command::Convert(args) => run_convert(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => err.exit(), // help/version exit 0, usage errors exit 2
    };
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            process::exit(2);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            process::exit(1);
        }
    }
}
