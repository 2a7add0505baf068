use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use serde_json::Value;
use spectral_tori::cli::{
    apply_override, build_surface, exit_code, read_obj, run_subcommand, write_outputs, ExperimentConfig, PotentialSpec,
    RunReport, SurfaceSpec,
};
use spectral_tori::floquet1d::trace_csv;
use spectral_tori::floquet2d::samples_csv;
use spectral_tori::surface::RevolutionTorus;
use spectral_tori::{Error, FundamentalGrid};

const BIN: &str = env!("CARGO_BIN_EXE_spectral-tori");

fn run_bin(args: &[&str], threads: Option<&str>) -> (i32, String, String) {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SPECTRAL_TORI_THREADS");
    if let Some(t) = threads {
        cmd.env("SPECTRAL_TORI_THREADS", t);
    }
    let o = cmd.output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

fn is_config_err(r: &spectral_tori::Result<ExperimentConfig>) -> bool {
    matches!(r, Err(Error::Config(_)))
}

#[test]
fn default_config_round_trips_bit_identically() {
    let cfg = ExperimentConfig::default();
    let s = cfg.to_json();
    let back = ExperimentConfig::from_json_str(&s).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_json(), s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn awkward_floats_round_trip(x in -1e3f64..1e3, c in 1e-300f64..1e300, t in 1e-17f64..1e-3) {
        let mut cfg = ExperimentConfig::default();
        cfg.potential = PotentialSpec::OneDim { samples: vec![x, x / 3.0, 0.1 + 0.2], period: Some(c) };
        cfg.tolerances.willmore = t;
        cfg.lax.amplitude = 1.0 / 3.0;
        let s = cfg.to_json();
        let back = ExperimentConfig::from_json_str(&s).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), s);
    }
}

#[test]
fn missing_sections_take_defaults() {
    let cfg = ExperimentConfig::from_json_str(r#"{"grid":{"n1":32}}"#).unwrap();
    assert_eq!(cfg.grid.n1, 32);
    assert_eq!(cfg.grid.n2, 64);
    assert_eq!(cfg.scan, ExperimentConfig::default().scan);
}

#[test]
fn overrides_apply_in_order_over_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"scan":{"cutoff":4},"output":{"dir":"a"}}"#).unwrap();
    let ovs = vec![
        "scan.cutoff=5".to_string(),
        "scan.cutoff=7".to_string(),
        "surface={\"kind\":\"clifford\"}".to_string(),
        "output.dir=run1".to_string(),
        "lax.lambdas=[[0.5,0.25]]".to_string(),
    ];
    let cfg = ExperimentConfig::load(Some(&p), &ovs).unwrap();
    assert_eq!(cfg.scan.cutoff, 7);
    assert_eq!(cfg.surface, SurfaceSpec::Clifford {});
    assert_eq!(cfg.output.dir, "run1");
    assert_eq!(cfg.lax.lambdas.len(), 1);
    assert_eq!(cfg.lax.lambdas[0].im, 0.25);
    // the untouched part of the file still applies
    let cfg = ExperimentConfig::load(Some(&p), &[]).unwrap();
    assert_eq!((cfg.scan.cutoff, cfg.output.dir.as_str()), (4, "a"));
}

#[test]
fn malformed_overrides_are_config_errors() {
    let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
    for bad in ["scan.cutoff", "=3", "scan..cutoff=3", "grid.n1.x=3"] {
        assert!(matches!(apply_override(&mut v, bad), Err(Error::Config(_))), "{bad}");
    }
    assert!(is_config_err(&ExperimentConfig::load(None, &["scan.nonsense=1".into()])));
    assert!(is_config_err(&ExperimentConfig::load(None, &["surface.kind=clifford".into()])), "R and r are left over");
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        r#"{"grid":{"n1":2}}"#,
        r#"{"grid":{"n1":64,"n3":1}}"#,
        r#"{"bogus":true}"#,
        r#"{"surface":{"kind":"revolution","R":1,"r":2}}"#,
        r#"{"surface":{"kind":"revolution","R":2}}"#,
        r#"{"surface":{"kind":"sphere"}}"#,
        r#"{"surface":{"kind":"fromMeshFile","path":"/nonexistent/x.obj"}}"#,
        r#"{"lattice":{"kind":"general","gamma1":[1,0],"gamma2":[2,0]}}"#,
        r#"{"lattice":{"kind":"rectangular","a":-1,"b":1}}"#,
        r#"{"potential":{"kind":"oneDim","samples":[1]}}"#,
        r#"{"potential":{"kind":"oneDim","samples":[1,2],"period":0}}"#,
        r#"{"scan":{"cutoff":0}}"#,
        r#"{"scan":{"points":2}}"#,
        r#"{"scan":{"which":2}}"#,
        r#"{"scan":{"relThreshold":0}}"#,
        r#"{"scan":{"slice":{"kind":"lambdaPlane","re":[1,-1],"im":[0,1]}}}"#,
        r#"{"spectrum1d":{"re":[0,0]}}"#,
        r#"{"spectrum1d":{"budget":0}}"#,
        r#"{"lax":{"amplitude":9}}"#,
        r#"{"lax":{"samples":4}}"#,
        r#"{"s3":{"lambdas":[[0,0]]}}"#,
        r#"{"s3":{"placement":"sideways"}}"#,
        r#"{"moebius":{"ops":[{"kind":"homothety","factor":0}]}}"#,
        r#"{"verify":{"criteria":[13]}}"#,
        r#"{"tolerances":{"willmore":-1}}"#,
        r#"{"output":{"dir":""}}"#,
        "not json",
    ];
    for b in bad {
        let r = ExperimentConfig::from_json_str(b);
        assert!(is_config_err(&r), "{b} gave {r:?}");
        assert_eq!(exit_code(&r.unwrap_err()), 1);
    }
}

#[test]
fn empty_tables_have_a_header_line() {
    for s in [trace_csv(&[]), samples_csv(&[])] {
        assert_eq!(s.lines().count(), 1);
        assert!(s.ends_with('\n'));
        assert!(s.split(',').count() >= 4);
    }
}

#[test]
fn obj_export_and_reimport() {
    let cfg = ExperimentConfig::default();
    let (f, tor) = build_surface(&cfg).unwrap();
    let obj = f.to_obj();
    let v = obj.lines().filter(|l| l.starts_with("v ")).count();
    let faces: Vec<&str> = obj.lines().filter(|l| l.starts_with("f ")).collect();
    assert_eq!((v, faces.len()), (4096, 4096));
    for l in &faces {
        let idx: Vec<usize> = l.split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect();
        assert_eq!(idx.len(), 4);
        assert!(idx.iter().all(|&i| (1..=4096).contains(&i)));
    }
    let grid = FundamentalGrid::new(tor.unwrap().lattice(), 64, 64).unwrap();
    let g = read_obj(&obj, grid).unwrap();
    let err = f.positions().iter().zip(g.positions()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
    assert!(matches!(read_obj(&obj, FundamentalGrid::new(grid.lattice, 32, 32).unwrap()), Err(Error::Config(_))));
}

#[test]
fn mesh_file_surface_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    let tor = RevolutionTorus::new(2.0, 1.0).unwrap();
    let path = dir.path().join("t.obj");
    fs::write(&path, build_surface(&cfg).unwrap().0.to_obj()).unwrap();
    let w_builtin = run_subcommand("willmore", &cfg).unwrap().report.results["willmoreMeanCurvature"].as_f64().unwrap();
    let lat = tor.lattice();
    cfg.lattice = serde_json::from_value(serde_json::json!({"kind":"rectangular","a":lat.gamma1.re,"b":lat.gamma2.im})).unwrap();
    cfg.surface = SurfaceSpec::FromMeshFile { path: path.to_string_lossy().into() };
    let out = run_subcommand("willmore", &cfg).unwrap();
    let w = out.report.results["willmoreMeanCurvature"].as_f64().unwrap();
    assert!((w - w_builtin).abs() < 1e-8, "{w} vs {w_builtin}");
    assert!(out.report.hard_failures().is_empty());
}

#[test]
fn report_reparses_to_the_same_value() {
    let cfg = ExperimentConfig::default();
    for sub in ["kruskal", "willmore", "potential", "dual"] {
        let out = run_subcommand(sub, &cfg).unwrap();
        let s = out.report.to_json();
        let back = RunReport::from_json(&s).unwrap();
        assert_eq!(back, out.report, "{sub}");
        assert_eq!(back.to_json(), s);
        assert!(out.report.hard_failures().is_empty(), "{sub}: {:?}", out.report.hard_failures());
        assert_eq!(out.report.outputs[0], "report.json");
    }
}

#[test]
fn outputs_are_written_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_subcommand("potential", &ExperimentConfig::default()).unwrap();
    write_outputs(dir.path(), &out).unwrap();
    for name in &out.report.outputs {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(dir.path().join("potential.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 64 * 64);
    let j: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("potential.json")).unwrap()).unwrap();
    assert!(j.is_object());
}

#[test]
fn unknown_subcommand_is_a_config_error() {
    let r = run_subcommand("frobnicate", &ExperimentConfig::default());
    assert!(matches!(r, Err(Error::Config(_))));
}

fn report_bytes(dir: &Path) -> Vec<u8> {
    fs::read(dir.join("report.json")).unwrap()
}

#[test]
fn binary_reports_are_deterministic_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let args = ["spectrum2d", "--out", "out", "--override", "scan.points=21", "--override", "scan.fitC1=false"];
    let runs = [("a", "1"), ("b", "3"), ("c", "1")];
    for (name, t) in runs {
        let cwd = d.path().join(name);
        fs::create_dir_all(&cwd).unwrap();
        let o = Command::new(BIN).args(args).current_dir(&cwd).env("SPECTRAL_TORI_THREADS", t).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let out = |n: &str| d.path().join(n).join("out");
    assert_eq!(report_bytes(&out("a")), report_bytes(&out("c")));
    assert_eq!(report_bytes(&out("a")), report_bytes(&out("b")));
    assert_eq!(fs::read(out("a").join("spectrum2d.csv")).unwrap(), fs::read(out("b").join("spectrum2d.csv")).unwrap());
    let t: Value = serde_json::from_str(&fs::read_to_string(out("b").join("timing.json")).unwrap()).unwrap();
    assert_eq!(t["threads"], 3);
}

#[test]
fn binary_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = |n: &str| d.path().join(n).to_string_lossy().into_owned();

    let (code, stdout, _) = run_bin(&["willmore", "--out", &out("ok")], None);
    assert_eq!(code, 0);
    assert!(stdout.contains("0 failed"));
    assert!(Path::new(&out("ok")).join("timing.json").is_file());

    let cfgp = d.path().join("bad.json");
    fs::write(&cfgp, r#"{"grid":{"n1":1}}"#).unwrap();
    let (code, _, err) = run_bin(&["willmore", "--config", cfgp.to_str().unwrap(), "--out", &out("bad")], None);
    assert_eq!(code, 1);
    let e: Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(e["error"]["kind"], "config");
    assert!(Path::new(&out("bad")).join("error.json").is_file());

    assert_eq!(run_bin(&["willmore", "--config", "/nonexistent.json"], None).0, 1);
    assert_eq!(run_bin(&["frobnicate"], None).0, 1);
    assert_eq!(run_bin(&["willmore", "--bogus"], None).0, 1);
    assert_eq!(run_bin(&["willmore", "--out", &out("t")], Some("zero")).0, 1);
    assert_eq!(run_bin(&["--help"], None).0, 0);
    assert_eq!(run_bin(&["--version"], None).0, 0);

    let (code, _, err) = run_bin(&["s3-spectrum", "--override", "s3.lambdas=[[1e-300,0]]", "--out", &out("num")], None);
    assert_eq!(code, 2, "{err}");

    let (code, stdout, _) = run_bin(&["willmore", "--override", "tolerances.willmore=1e-30", "--out", &out("chk")], None);
    assert_eq!(code, 3);
    assert!(stdout.contains("FAIL"));
    let r: RunReport = RunReport::from_json(&fs::read_to_string(Path::new(&out("chk")).join("report.json")).unwrap()).unwrap();
    assert!(!r.hard_failures().is_empty());
}

#[test]
fn soft_checks_do_not_fail_a_run() {
    let out = run_subcommand("clifford", &ExperimentConfig::default()).unwrap();
    let hopf = out.report.checks.iter().find(|c| c.name == "hopf").unwrap();
    assert!(!hopf.passed && !hopf.hard && hopf.note.is_some());
    assert!(out.report.hard_failures().is_empty());
}
