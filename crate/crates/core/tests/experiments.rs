use std::path::Path;

use cavity_heat::experiments::{rate_study, run_config, ExperimentConfig, StudyKind};
use cavity_heat::Error;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn minimal() -> Value {
    json!({
        "geometry": {
            "shape": { "kind": "sphere" },
            "refinement": 1,
            "cluster": { "kind": "explicit", "eps": 0.1, "centers": [[0, 0, 0], [0.5, 0, 0]] }
        },
        "source": { "kind": "point", "z_star": [0, 1, 0] },
        "time": { "horizon": 1.0, "n_steps": 40 },
        "solver": { "kind": "flsim" },
        "output": {
            "points": [[0, 0, 2], [1, 1, 1]],
            "times": [0.25, 1.0],
            "field": "field.csv",
            "alphas": "alphas.csv"
        }
    })
}

fn parse(v: &Value) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::from_json_str(&v.to_string())
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn minimal_config_writes_field_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(&minimal()).unwrap();
    let out = run_config(&cfg, dir.path()).unwrap();
    assert_eq!(out.files, vec![dir.path().join("field.csv"), dir.path().join("alphas.csv")]);
    let text = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,z,t,u");
    assert_eq!(lines.len(), 5);
    assert!(!text.contains('\r'));
    for line in &lines[1..] {
        let u: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(u > 0.0);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(&minimal()).unwrap();
    let first: Vec<Vec<u8>> = run_config(&cfg, dir.path()).unwrap().files.iter().map(|p| digest(p)).collect();
    let second: Vec<Vec<u8>> = run_config(&cfg, dir.path()).unwrap().files.iter().map(|p| digest(p)).collect();
    assert_eq!(first, second);
}

#[test]
fn source_inside_cavity_is_rejected_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["source"]["z_star"] = json!([0.52, 0.0, 0.0]);
    let cfg = parse(&v).unwrap();
    match run_config(&cfg, dir.path()) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "/source/z_star"),
        other => panic!("{other:?}"),
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn schema_errors_carry_pointer_paths() {
    let cases: Vec<(Box<dyn Fn(&mut Value)>, &str)> = vec![
        (Box::new(|v| v["time"]["n_steps"] = json!(-3)), "/time/n_steps"),
        (Box::new(|v| v["geometry"]["cluster"]["eps"] = json!("small")), "/geometry/cluster/eps"),
        (Box::new(|v| v["geometry"]["cluster"]["centers"][1] = json!([1, 2])), "/geometry/cluster/centers/1"),
        (Box::new(|v| v["solver"]["kind"] = json!("magic")), "/solver"),
        (Box::new(|v| v["output"]["colour"] = json!(1)), "/output"),
    ];
    for (edit, expected) in cases {
        let mut v = minimal();
        edit(&mut v);
        match parse(&v) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with(expected), "{path} vs {expected}"),
            other => panic!("{expected}: {other:?}"),
        }
    }
}

#[test]
fn semantic_errors_carry_pointer_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<(Box<dyn Fn(&mut Value)>, &str)> = vec![
        (Box::new(|v| v["time"]["horizon"] = json!(0.0)), "/time/horizon"),
        (Box::new(|v| v["output"]["times"][1] = json!(2.0)), "/output/times/1"),
        (Box::new(|v| v["output"]["points"][0] = json!([0.5, 0.0, 0.05])), "/output/points/0"),
        (Box::new(|v| v["geometry"]["shape"] = json!({ "kind": "mesh", "path": "missing.off" })), "/geometry/shape/path"),
    ];
    for (edit, expected) in cases {
        let mut v = minimal();
        edit(&mut v);
        match run_config(&parse(&v).unwrap(), dir.path()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, expected),
            other => panic!("{expected}: {other:?}"),
        }
    }
}

#[test]
fn config_round_trips_through_json() {
    let cfg = parse(&minimal()).unwrap();
    let again = ExperimentConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn study_slope_is_reproducible() {
    let levels = StudyKind::TimestepOrder2.default_levels();
    let a = rate_study(StudyKind::TimestepOrder2, &levels).unwrap();
    let b = rate_study(StudyKind::TimestepOrder2, &levels).unwrap();
    assert_eq!(a.slope.to_bits(), b.slope.to_bits());
    assert_eq!(a.errors, b.errors);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn studies_need_three_levels() {
    assert!(matches!(rate_study(StudyKind::SingleCavityEps2, &[0.2, 0.1]), Err(Error::InvalidArgument(_))));
    assert!("no_such_study".parse::<StudyKind>().is_err());
    assert_eq!("homogenization_a13".parse::<StudyKind>().unwrap(), StudyKind::HomogenizationA13);
}
