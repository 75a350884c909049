//! End-to-end checks of the command-line surface: exit codes, file
//! outputs, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_multiret")
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

const SMALL_RIF: &str =
    "RIF1 rows=3 cols=4 frames=2 rate_hz=10 elev_start=1 elev_step=-1 az_start=0 az_step=0.5
10,10.1,13,13.1
10.2,10,13.2,13
10.1,10.3,12.9,13

10,10.2,13.1,13
10.1,10,13,13.2
10.2,10.1,13,12.9
";

fn write_small_rif(dir: &Path) -> PathBuf {
    let path = dir.join("in.rif");
    fs::write(&path, SMALL_RIF).unwrap();
    path
}

fn window_scene_json() -> &'static str {
    r#"{
  "surfaces": [
    {"kind": "porous_screen", "hit_probability": 0.1, "half_width": 1000.0, "half_height": 1000.0,
     "center": {"x": 11.2, "y": 0.0, "z": 0.0}, "normal": {"x": -1.0, "y": 0.0, "z": 0.0}, "reflectivity": 1.0},
    {"kind": "infinite_plane",
     "center": {"x": 14.0, "y": 0.0, "z": 0.0}, "normal": {"x": -1.0, "y": 0.0, "z": 0.0}, "reflectivity": 1.0}
  ]
}"#
}

#[test]
fn tcdf_writes_csv_and_stats_deterministically() {
    let dir = work_dir("tcdf");
    let input = write_small_rif(&dir);
    let out = dir.join("out");
    let args = [
        "tcdf",
        "--input",
        input.to_str().unwrap(),
        "--ray",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_code(&run(&args), 0);
    let csv = fs::read(out.join("tcdf_1_2.csv")).unwrap();
    let stats = fs::read_to_string(out.join("tcdf_1_2_stats.txt")).unwrap();
    assert!(stats.contains("count=2"));
    // re-running overwrites byte-identical outputs
    assert_code(&run(&args), 0);
    assert_eq!(fs::read(out.join("tcdf_1_2.csv")).unwrap(), csv);
}

#[test]
fn tcdf_out_of_bounds_ray_is_usage_error() {
    let dir = work_dir("tcdf-bad-ray");
    let input = write_small_rif(&dir);
    let out = run(&["tcdf", "--input", input.to_str().unwrap(), "--ray", "9,0"]);
    assert_code(&out, 2);
}

#[test]
fn missing_input_is_data_error() {
    let dir = work_dir("tcdf-missing");
    let out = run(&[
        "tcdf",
        "--input",
        dir.join("nope.rif").to_str().unwrap(),
        "--ray",
        "0,0",
    ]);
    assert_code(&out, 1);
}

#[test]
fn malformed_rif_is_data_error() {
    let dir = work_dir("tcdf-malformed");
    let path = dir.join("bad.rif");
    fs::write(&path, "RIF1 rows=2 cols=2 frames=1 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n1,2\n3\n").unwrap();
    let out = run(&["tcdf", "--input", path.to_str().unwrap(), "--ray", "0,0"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = run(&["tcdf", "--frobnicate"]);
    assert_code(&out, 2);
}

#[test]
fn scdf_single_frame_and_all_frames() {
    let dir = work_dir("scdf");
    let input = write_small_rif(&dir);
    let out = dir.join("out");
    assert_code(
        &run(&[
            "scdf",
            "--input",
            input.to_str().unwrap(),
            "--ray",
            "1,1",
            "--frame",
            "1",
            "--patch",
            "3x3",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    assert!(out.join("scdf_1_1_f1.csv").exists());

    assert_code(
        &run(&[
            "scdf",
            "--input",
            input.to_str().unwrap(),
            "--ray",
            "1,1",
            "--patch",
            "3x3",
            "--all-frames",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let all = fs::read_to_string(out.join("scdf_1_1_all.csv")).unwrap();
    assert_eq!(all.matches("# frame=").count(), 2);

    // bad frame index
    let bad = run(&[
        "scdf",
        "--input",
        input.to_str().unwrap(),
        "--ray",
        "1,1",
        "--frame",
        "7",
    ]);
    assert_code(&bad, 2);
}

#[test]
fn one_by_one_patch_single_frame_scdf_matches_tcdf() {
    let dir = work_dir("scdf-coincide");
    let path = dir.join("one.rif");
    fs::write(
        &path,
        "RIF1 rows=2 cols=2 frames=1 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n5,6\n7,8\n",
    )
    .unwrap();
    let out = dir.join("out");
    assert_code(
        &run(&[
            "scdf",
            "--input",
            path.to_str().unwrap(),
            "--ray",
            "0,1",
            "--patch",
            "1x1",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    assert_code(
        &run(&[
            "tcdf",
            "--input",
            path.to_str().unwrap(),
            "--ray",
            "0,1",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let scdf = fs::read_to_string(out.join("scdf_0_1_f0.csv")).unwrap();
    let tcdf = fs::read_to_string(out.join("tcdf_0_1.csv")).unwrap();
    assert_eq!(scdf, tcdf);
}

#[test]
fn compare_identical_and_malformed() {
    let dir = work_dir("compare");
    let input = write_small_rif(&dir);
    let out = dir.join("out");
    assert_code(
        &run(&[
            "tcdf",
            "--input",
            input.to_str().unwrap(),
            "--ray",
            "0,0",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let csv = out.join("tcdf_0_0.csv");
    let identical = run(&[
        "compare",
        "--a",
        csv.to_str().unwrap(),
        "--b",
        csv.to_str().unwrap(),
    ]);
    assert_code(&identical, 0);
    assert!(String::from_utf8_lossy(&identical.stdout).contains("ks=0 "));

    let bad = dir.join("bad.csv");
    fs::write(&bad, "not,a,cdf\n1,2,3\n").unwrap();
    let malformed = run(&[
        "compare",
        "--a",
        csv.to_str().unwrap(),
        "--b",
        bad.to_str().unwrap(),
    ]);
    assert_code(&malformed, 2);
}

#[test]
fn tcdf_on_simulated_wall_reports_noise_scale_std() {
    let dir = work_dir("tcdf-wall");
    let scene = dir.join("wall.json");
    fs::write(
        &scene,
        r#"{"surfaces": [{"kind": "infinite_plane",
            "center": {"x": 10.0, "y": 0.0, "z": 0.0},
            "normal": {"x": -1.0, "y": 0.0, "z": 0.0}, "reflectivity": 1.0}]}"#,
    )
    .unwrap();
    let sim = dir.join("sim");
    assert_code(
        &run(&[
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--seed",
            "2",
            "--rows",
            "4",
            "--cols",
            "8",
            "--frames",
            "50",
            "--noise",
            "0.02",
            "--out",
            sim.to_str().unwrap(),
        ]),
        0,
    );
    let out = dir.join("out");
    assert_code(
        &run(&[
            "tcdf",
            "--input",
            sim.join("sim.rif").to_str().unwrap(),
            "--ray",
            "2,4",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let stats = fs::read_to_string(out.join("tcdf_2_4_stats.txt")).unwrap();
    let std_line = stats.lines().find(|l| l.starts_with("std=")).unwrap();
    let std: f64 = std_line["std=".len()..].parse().unwrap();
    assert!(
        (0.01..0.03).contains(&std),
        "std {std} not at the 2 cm scale"
    );
}

#[test]
fn compare_differing_return_fractions_bounded_below() {
    let dir = work_dir("compare-fractions");
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    // same jump point, final fractions 0.8 vs 1.0
    fs::write(&a, "x,F\n5,0\n5,0.8\n").unwrap();
    fs::write(&b, "x,F\n5,0\n5,1\n").unwrap();
    let out = run(&[
        "compare",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let ks: f64 = stdout
        .split_whitespace()
        .next()
        .unwrap()
        .trim_start_matches("ks=")
        .parse()
        .unwrap();
    assert!(ks >= 0.2 - 1e-12);
}

#[test]
fn compare_disjoint_singletons_is_one() {
    let dir = work_dir("compare-singletons");
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    fs::write(&a, "x,F\n1,0\n1,1\n").unwrap();
    fs::write(&b, "x,F\n2,0\n2,1\n").unwrap();
    let out = run(&[
        "compare",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ks=1 "));
}

#[test]
fn mocomp_emits_trace() {
    let dir = work_dir("mocomp");
    let input = write_small_rif(&dir);
    let out = dir.join("out");
    assert_code(
        &run(&[
            "mocomp",
            "--input",
            input.to_str().unwrap(),
            "--ray",
            "1,1",
            "--radius",
            "1",
            "--patch",
            "3x3",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let trace = fs::read_to_string(out.join("mocomp_trace_1_1.csv")).unwrap();
    assert!(trace.starts_with("k,dp,dq,J,valid_pairs\n0,0,0,0,"));
}

#[test]
fn simulate_is_seed_deterministic() {
    let dir = work_dir("simulate");
    let scene = dir.join("scene.json");
    fs::write(&scene, window_scene_json()).unwrap();
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        assert_code(
            &run(&[
                "simulate",
                "--scene",
                scene.to_str().unwrap(),
                "--seed",
                "11",
                "--rows",
                "4",
                "--cols",
                "8",
                "--frames",
                "5",
                "--out",
                out.to_str().unwrap(),
            ]),
            0,
        );
    }
    assert_eq!(
        fs::read(out_a.join("sim.rif")).unwrap(),
        fs::read(out_b.join("sim.rif")).unwrap()
    );
    assert_eq!(
        fs::read(out_a.join("sim_reflectance.rif")).unwrap(),
        fs::read(out_b.join("sim_reflectance.rif")).unwrap()
    );
    assert_eq!(
        fs::read(out_a.join("sim_labels.pgm")).unwrap(),
        fs::read(out_b.join("sim_labels.pgm")).unwrap()
    );

    // a different seed changes the data
    let out_c = dir.join("c");
    assert_code(
        &run(&[
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--seed",
            "12",
            "--rows",
            "4",
            "--cols",
            "8",
            "--frames",
            "5",
            "--out",
            out_c.to_str().unwrap(),
        ]),
        0,
    );
    assert_ne!(
        fs::read(out_a.join("sim.rif")).unwrap(),
        fs::read(out_c.join("sim.rif")).unwrap()
    );
}

#[test]
fn simulate_requires_seed() {
    let dir = work_dir("simulate-seedless");
    let scene = dir.join("scene.json");
    fs::write(&scene, window_scene_json()).unwrap();
    let out = run(&["simulate", "--scene", scene.to_str().unwrap()]);
    assert_code(&out, 2);
}

#[test]
fn fit_gmm_with_paper_thresholds_yields_four_clusters() {
    let dir = work_dir("fit-gmm");
    // 50 frames of a single pixel with strictly increasing ranges
    let mut doc = String::from(
        "RIF1 rows=1 cols=1 frames=50 rate_hz=10 elev_start=0 elev_step=-1 az_start=0 az_step=1\n",
    );
    for i in 0..50 {
        doc.push_str(&format!("{}\n\n", 8.0 + 0.05 * i as f64));
    }
    let input = dir.join("ramp.rif");
    fs::write(&input, doc).unwrap();
    let out = dir.join("out");
    assert_code(
        &run(&[
            "fit-gmm",
            "--input",
            input.to_str().unwrap(),
            "--ray",
            "0,0",
            "--thresholds",
            "0.14,0.38,0.68",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let json = fs::read_to_string(out.join("gmm_0_0.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let clusters = parsed["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 4);
    assert_eq!(clusters[0]["alpha"].as_f64().unwrap(), 0.14);
    let report = fs::read_to_string(out.join("gmm_0_0_report.csv")).unwrap();
    assert!(report.starts_with("cluster,alpha,mu,sigma,count\n"));
}

#[test]
fn monitor_writes_mask_and_metrics_against_labels() {
    let dir = work_dir("monitor");
    let scene = dir.join("scene.json");
    // foliage-like screen: dense enough that spatial CDFs split
    fs::write(
        &scene,
        r#"{
  "surfaces": [
    {"kind": "porous_screen", "hit_probability": 0.5, "half_width": 1000.0, "half_height": 1000.0,
     "center": {"x": 8.0, "y": 0.0, "z": 0.0}, "normal": {"x": -1.0, "y": 0.0, "z": 0.0}, "reflectivity": 1.0},
    {"kind": "infinite_plane",
     "center": {"x": 10.0, "y": 0.0, "z": 0.0}, "normal": {"x": -1.0, "y": 0.0, "z": 0.0}, "reflectivity": 1.0}
  ]
}"#,
    )
    .unwrap();
    let sim = dir.join("sim");
    assert_code(
        &run(&[
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--seed",
            "5",
            "--rows",
            "8",
            "--cols",
            "16",
            "--frames",
            "2",
            "--out",
            sim.to_str().unwrap(),
        ]),
        0,
    );
    let out = dir.join("out");
    let result = run(&[
        "monitor",
        "--input",
        sim.join("sim.rif").to_str().unwrap(),
        "--frame",
        "0",
        "--labels",
        sim.join("sim_labels.pgm").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&result, 0);
    let mask = fs::read_to_string(out.join("monitor_mask_f0.pgm")).unwrap();
    assert!(mask.starts_with("P2\n16 8\n1\n"));
    let metrics = fs::read_to_string(out.join("monitor_metrics_f0.txt")).unwrap();
    assert!(metrics.contains("precision="));
    let verdicts = fs::read_to_string(out.join("monitor_verdicts_f0.csv")).unwrap();
    assert!(verdicts.starts_with("i,j,flagged,reason,span,clusters,nonreturn_fraction\n"));
}

#[test]
fn reg_experiment_writes_report() {
    let dir = work_dir("reg");
    let out = dir.join("out");
    assert_code(
        &run(&[
            "reg-experiment",
            "--seed",
            "9",
            "--phi",
            "0.1",
            "--deltas",
            "0,0.1",
            "--trials",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let report = fs::read_to_string(out.join("bias_report.csv")).unwrap();
    assert!(report.starts_with("delta,algorithm,reference,mean_bias,std_bias,max_bias,trials\n"));
    assert_eq!(report.lines().count(), 5);

    // seed is required
    assert_code(&run(&["reg-experiment", "--phi", "0.1"]), 2);
}

#[test]
fn convert_exports_points() {
    let dir = work_dir("convert");
    let input = write_small_rif(&dir);
    let out = dir.join("out");
    assert_code(
        &run(&[
            "convert",
            "--input",
            input.to_str().unwrap(),
            "--frame",
            "0",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let cloud = fs::read_to_string(out.join("cloud_f0.csv")).unwrap();
    assert!(cloud.starts_with("x,y,z,reflectance\n"));
    assert_eq!(cloud.lines().count(), 1 + 12);
}

#[test]
fn out_of_domain_parameters_are_usage_errors() {
    let dir = work_dir("bad-params");
    let input = write_small_rif(&dir);
    let scene = dir.join("scene.json");
    fs::write(&scene, window_scene_json()).unwrap();

    let cases: Vec<Vec<&str>> = vec![
        vec![
            "fit-gmm",
            "--input",
            input.to_str().unwrap(),
            "--ray",
            "0,0",
            "--min-gap",
            "0",
        ],
        vec![
            "monitor",
            "--input",
            input.to_str().unwrap(),
            "--span-threshold",
            "-1",
        ],
        vec![
            "monitor",
            "--input",
            input.to_str().unwrap(),
            "--min-clusters",
            "1",
        ],
        vec![
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--seed",
            "1",
            "--divergence",
            "0",
        ],
        vec![
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--seed",
            "1",
            "--az-step",
            "10",
        ],
        vec![
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--seed",
            "1",
            "--subrays",
            "0",
        ],
        vec!["reg-experiment", "--seed", "1", "--phi", "0.3"],
        vec!["reg-experiment", "--seed", "1", "--rays", "10"],
        vec!["reg-experiment", "--seed", "1", "--deltas", "-0.5"],
        vec!["reg-experiment", "--seed", "1", "--trials", "0"],
    ];
    for case in cases {
        let out = run(&case);
        assert_code(&out, 2);
    }
}

#[test]
fn config_file_mirrors_flags() {
    let dir = work_dir("config");
    let input = write_small_rif(&dir);
    let out = dir.join("out");
    let config = dir.join("tcdf.json");
    fs::write(
        &config,
        format!(
            r#"{{"input": "{}", "ray": "1,2", "out": "{}"}}"#,
            input.display(),
            out.display()
        ),
    )
    .unwrap();
    assert_code(&run(&["tcdf", "--config", config.to_str().unwrap()]), 0);
    assert!(out.join("tcdf_1_2.csv").exists());

    // explicit flags take precedence over the config file
    assert_code(
        &run(&["tcdf", "--config", config.to_str().unwrap(), "--ray", "0,0"]),
        0,
    );
    assert!(out.join("tcdf_0_0.csv").exists());

    // unknown keys in the config are rejected as usage errors
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"inptu": "x.rif"}"#).unwrap();
    assert_code(&run(&["tcdf", "--config", bad.to_str().unwrap()]), 2);
}
