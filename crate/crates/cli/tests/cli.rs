use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fbm_sobolev::fbm::{FbmPath, Regularization};
use fbm_sobolev::io::{write_ensemble, EnsembleSidecar};
use fbm_sobolev::{Grid, HurstParam, PathEnsemble, SamplerTag};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbm-sobolev"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sample_writes_files_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&[
            "sample",
            "--h",
            "0.5",
            "--n",
            "256",
            "--count",
            "1000",
            "--seed",
            "42",
            "--sampler",
            "cholesky",
            "--out-dir",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let side = json(&a.join("ensemble.json"));
    assert_eq!(side["h"], 0.5);
    assert_eq!(side["n"], 256);
    assert_eq!(side["count"], 1000);
    assert_eq!(side["seed"], 42);
    assert_eq!(side["sampler_tag"], "cholesky");
    assert_eq!(fs::metadata(a.join("ensemble.bin")).unwrap().len(), 8 * 256 * 1000);
    for f in ["ensemble.bin", "ensemble.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["command"], "sample");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn paley_wiener_sampler_needs_terms() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "sample",
        "--h",
        "0.3",
        "--n",
        "9",
        "--count",
        "5",
        "--seed",
        "1",
        "--sampler",
        "paley_wiener",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    let o = bin(&[
        "sample",
        "--h",
        "0.3",
        "--n",
        "9",
        "--count",
        "5",
        "--seed",
        "1",
        "--sampler",
        "paley_wiener",
        "--K",
        "50",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("ensemble.json"))["series_terms"], 50);
}

#[test]
fn hurst_out_of_range_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "sample",
        "--h",
        "1.0",
        "--n",
        "8",
        "--count",
        "2",
        "--seed",
        "1",
        "--sampler",
        "cholesky",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(0,1)"), "{}", stderr(&o));
}

#[test]
fn functional_on_zero_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new(17).unwrap();
    let h = HurstParam::new(0.5).unwrap();
    let e = PathEnsemble::new(
        grid,
        h,
        0,
        SamplerTag::Cholesky,
        vec![vec![0.0; 17]; 4],
        Regularization::default(),
    )
    .unwrap();
    assert!(e.paths.iter().all(|p| *p == FbmPath::zero(grid)));
    let (b, j) = (dir.path().join("z.bin"), dir.path().join("z.json"));
    write_ensemble(&e, &EnsembleSidecar::describe(&e), &b, &j).unwrap();
    let out = dir.path().join("f");
    let o = bin(&[
        "functional",
        "--ensemble",
        s(&b),
        "--p",
        "2",
        "--q",
        "0",
        "--a",
        "0",
        "--b",
        "0.5",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("functional.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let f: Vec<f64> = r.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(f, vec![0.0, 0.0]);
    }
}

#[test]
fn functional_mean_and_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("e");
    let o = bin(&[
        "sample",
        "--h",
        "0.5",
        "--n",
        "129",
        "--count",
        "10000",
        "--seed",
        "7",
        "--sampler",
        "circulant",
        "--out-dir",
        s(&ens),
    ]);
    assert_eq!(code(&o), 0);
    let b = ens.join("ensemble.bin");
    let out = dir.path().join("f");
    let o = bin(&[
        "functional",
        "--ensemble",
        s(&b),
        "--p",
        "1",
        "--q",
        "0",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let (mean, se, want): (f64, f64, f64) = (
        row[2].parse().unwrap(),
        row[3].parse().unwrap(),
        row[4].parse().unwrap(),
    );
    assert!((want - 1.0 / 3.0).abs() < 1e-12);
    assert!((mean - want).abs() < 5.0 * se, "{mean} ± {se}");
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);

    let o = bin(&[
        "functional",
        "--ensemble",
        s(&b),
        "--p",
        "1",
        "--q",
        "1.5",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(2p−2)H>q−1"), "{}", stderr(&o));
}

#[test]
fn eigen_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "eigen",
        "--h",
        "0.75",
        "--mesh-n",
        "64",
        "--m",
        "10",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let info = json(&dir.path().join("eigen.json"));
    assert!(info["relative_error"].as_f64().unwrap() < 0.01);
    assert!((info["exact_trace"].as_f64().unwrap() - 0.114_286).abs() < 1e-6);
    assert_eq!(
        fs::metadata(dir.path().join("eigenfunctions.bin")).unwrap().len(),
        8 * 10 * 2016
    );
    let vals: Vec<f64> = fs::read_to_string(dir.path().join("eigenvalues.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 10);
    assert!(vals.windows(2).all(|w| w[1] < w[0]));

    let o = bin(&[
        "eigen",
        "--h",
        "0.5",
        "--mesh-n",
        "12",
        "--m",
        "500",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("clamped"), "{}", stderr(&o));
    let info = json(&dir.path().join("eigen.json"));
    assert!(info["relative_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn smallball_kl_rate_and_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "smallball",
        "--target",
        "V",
        "--method",
        "kl",
        "--h",
        "0.5",
        "--n",
        "1024",
        "--eps-min",
        "0.04",
        "--eps-max",
        "1",
        "--eps-points",
        "100",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("-c_H(b-a)"));
    let fit = json(&dir.path().join("fit.json"));
    let slope = fit["fit"]["slope"].as_f64().unwrap();
    assert!((slope / -0.125 - 1.0).abs() < 0.25, "{slope}");

    for target in ["F", "DF"] {
        let o = bin(&[
            "smallball",
            "--target",
            target,
            "--method",
            "kl",
            "--h",
            "0.5",
            "--p",
            "2",
            "--q",
            "0",
            "--n",
            "64",
            "--eps-min",
            "0.1",
            "--eps-max",
            "1",
            "--eps-points",
            "10",
            "--out-dir",
            s(dir.path()),
        ]);
        assert_eq!(code(&o), 2);
    }
}

#[test]
fn smallball_df_slope_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "smallball",
        "--target",
        "DF",
        "--method",
        "mc",
        "--h",
        "0.5",
        "--p",
        "2",
        "--q",
        "0",
        "--n",
        "12",
        "--count",
        "20000",
        "--seed",
        "3",
        "--eps-min",
        "0.004",
        "--eps-max",
        "1",
        "--eps-points",
        "60",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("slopes.csv")).unwrap();
    assert!(table.starts_with("p_high,p_low,slope,n_points\n"));
    assert!(table.lines().count() >= 2, "{table}");
    assert!(fs::read_to_string(dir.path().join("curve.csv"))
        .unwrap()
        .starts_with("epsilon,prob,"));
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = bin(&[
        "smallball",
        "--target",
        "V",
        "--method",
        "mc",
        "--h",
        "0.7",
        "--n",
        "33",
        "--count",
        "3000",
        "--seed",
        "5",
        "--eps-min",
        "0.05",
        "--eps-max",
        "0.6",
        "--eps-points",
        "30",
        "--out-dir",
        s(&first),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = dir.path().join("again");
    let o = bin(&[
        "--workers",
        "2",
        "replay",
        "--manifest",
        s(&first.join("manifest.json")),
        "--out-dir",
        s(&again),
    ]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert_eq!(
        fs::read(first.join("curve.csv")).unwrap(),
        fs::read(again.join("curve.csv")).unwrap()
    );
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn verify_passes_and_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let (one, two) = (dir.path().join("w1"), dir.path().join("w2"));
    let o = bin(&["verify", "--workers", "1", "--out-dir", s(&one)]);
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    print!("{stdout}");
    assert_eq!(code(&o), 0, "{stdout}{}", stderr(&o));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 12);
    let o = bin(&["verify", "--workers", "2", "--out-dir", s(&two)]);
    assert_eq!(code(&o), 0);
    let (a, b) = (csv_files(&one), csv_files(&two));
    assert_eq!(a.len(), 13);
    assert!(a == b, "CSV outputs differ between worker counts");
    assert_eq!(json(&two.join("manifest.json"))["workers"], 2);
}

#[test]
fn verify_with_wrong_rate_constant_fails_but_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["verify", "--inject-wrong-ch", "0.3", "--out-dir", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL [ 8]"));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["exit_code"], 1);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 13);
}
