use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::Utc;
use fbm_sobolev::acceptance::{run_all, write_outputs, AcceptanceConfig};
use fbm_sobolev::fbm::{sample_cholesky, sample_circulant};
use fbm_sobolev::io::{read_ensemble, write_ensemble, EnsembleSidecar};
use fbm_sobolev::paley_wiener::{sample_series_default, SeriesVariant};
use fbm_sobolev::small_deviation::{
    c_h, fit_rate, fit_rate_window, geometric_epsilons, kl_centered_eigs, smallball_kl, smallball_mc, FitSummary,
    FitWindow, Functional, RateModel, SmallBallCurve,
};
use fbm_sobolev::sobolev::{compute_f_batch, expected_f, li_shao_exponent, path_variance_batch, SobolevParams};
use fbm_sobolev::spectral::{build_mesh, exact_trace, nystrom_eigs};
use fbm_sobolev::stats::summarize;
use fbm_sobolev::{Grid, HurstParam, PathEnsemble, SamplerTag};
use serde::Serialize;

use crate::manifest::{digest_inputs, digest_outputs, RunManifest, MANIFEST_NAME};
use crate::{
    Cli, Command, EigenArgs, FunctionalArgs, MethodArg, ReplayArgs, SampleArgs, SmallballArgs, TargetArg, VerifyArgs,
};

/// Bad arguments the core library does not check itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code_for(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<fbm_sobolev::Error>() {
        Some(fbm_sobolev::Error::Domain(_) | fbm_sobolev::Error::Constraint(_)) => 2,
        _ => 1,
    }
}

/// What a command produced, before the manifest is written.
struct Produced {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    exit_code: u8,
}

impl Produced {
    fn ok(outputs: Vec<PathBuf>) -> Self {
        Produced {
            inputs: Vec::new(),
            outputs,
            exit_code: 0,
        }
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<u8> {
    let workers = match cli.workers {
        Some(0) => return Err(usage("--workers must be at least 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if let Command::Replay(args) = &cli.command {
        return replay(args, workers);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let started_at = Utc::now().to_rfc3339();
    let (name, parameters, out_dir) = describe(&cli.command)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let produced = pool.install(|| match &cli.command {
        Command::Sample(a) => sample(a),
        Command::Functional(a) => functional(a),
        Command::Eigen(a) => eigen(a),
        Command::Smallball(a) => smallball(a),
        Command::Verify(a) => verify(a),
        Command::Replay(_) => unreachable!(),
    })?;
    let manifest = RunManifest {
        command: name.to_string(),
        argv,
        parameters,
        workers,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: Utc::now().to_rfc3339(),
        exit_code: produced.exit_code,
        inputs: digest_inputs(&produced.inputs)?,
        outputs: digest_outputs(&out_dir, &produced.outputs)?,
    };
    manifest.write(&out_dir)?;
    Ok(produced.exit_code)
}

fn describe(c: &Command) -> Result<(&'static str, serde_json::Value, PathBuf)> {
    Ok(match c {
        Command::Sample(a) => ("sample", serde_json::to_value(a)?, a.out_dir.clone()),
        Command::Functional(a) => ("functional", serde_json::to_value(a)?, a.out_dir.clone()),
        Command::Eigen(a) => ("eigen", serde_json::to_value(a)?, a.out_dir.clone()),
        Command::Smallball(a) => ("smallball", serde_json::to_value(a)?, a.out_dir.clone()),
        Command::Verify(a) => ("verify", serde_json::to_value(a)?, a.out_dir.clone()),
        Command::Replay(a) => ("replay", serde_json::to_value(a)?, a.out_dir.clone()),
    })
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn sample_ensemble(
    h: HurstParam,
    n: usize,
    count: usize,
    seed: u64,
    sampler: SamplerTag,
    k: Option<usize>,
) -> Result<PathEnsemble> {
    let grid = Grid::new(n)?;
    if count == 0 {
        return Err(usage("--count must be positive"));
    }
    Ok(match sampler {
        SamplerTag::Cholesky => sample_cholesky(h, grid, count, seed)?,
        SamplerTag::Circulant => sample_circulant(h, grid, count, seed)?,
        SamplerTag::PaleyWiener => {
            let k = k.ok_or_else(|| usage("--K is required for the paley_wiener sampler"))?;
            sample_series_default(h, k, grid, count, seed)?
        }
    })
}

fn sample(a: &SampleArgs) -> Result<Produced> {
    let h = HurstParam::new(a.h)?;
    let e = sample_ensemble(h, a.n, a.count, a.seed, a.sampler, a.k)?;
    let mut side = EnsembleSidecar::describe(&e);
    if a.sampler == SamplerTag::PaleyWiener {
        side.series_terms = a.k;
        side.series_variant = Some(SeriesVariant::default().to_string());
    }
    let bin = a.out_dir.join("ensemble.bin");
    let json = sidecar_path(&bin);
    write_ensemble(&e, &side, &bin, &json)?;
    if let Some((count, worst)) = e.regularization.clipped_eigenvalues {
        eprintln!("note: clipped {count} slightly negative embedding eigenvalues (most negative {worst:e})");
    }
    if let Some(shift) = e.regularization.cholesky_shift {
        eprintln!("note: covariance diagonal shifted by {shift:e} before factorization");
    }
    println!(
        "wrote {} paths of {} points to {}",
        e.len(),
        e.grid.len(),
        bin.display()
    );
    Ok(Produced::ok(vec![bin, json]))
}

fn functional(a: &FunctionalArgs) -> Result<Produced> {
    let json = sidecar_path(&a.ensemble);
    let (e, _) = read_ensemble(&a.ensemble, &json)?;
    let params = SobolevParams::new(a.p, a.q, e.h)?;
    let f = compute_f_batch(&e, &params);
    let v = match (a.a, a.b) {
        (Some(lo), Some(hi)) => Some(path_variance_batch(&e, lo, hi)?),
        _ => None,
    };
    let mut per_path = String::from(if v.is_some() {
        "path_index,F,V\n"
    } else {
        "path_index,F\n"
    });
    for (i, x) in f.iter().enumerate() {
        let _ = write!(per_path, "{i},{x:.17e}");
        if let Some(v) = &v {
            let _ = write!(per_path, ",{:.17e}", v[i]);
        }
        per_path.push('\n');
    }
    let mut summary = String::from("statistic,count,mean,stderr,expected\n");
    let sf = summarize(&f);
    let ef = expected_f(&params).ok();
    let _ = writeln!(
        summary,
        "F,{},{:.17e},{:.17e},{}",
        sf.count,
        sf.mean,
        sf.stderr,
        fmt_opt(ef)
    );
    println!("F: mean {:.6} ± {:.6} (expected {})", sf.mean, sf.stderr, fmt_opt(ef));
    if let (Some(v), Some(lo), Some(hi)) = (&v, a.a, a.b) {
        let sv = summarize(v);
        let ev = (hi - lo).powf(e.h.two_h()) * fbm_sobolev::small_deviation::expected_path_variance(e.h);
        let _ = writeln!(summary, "V,{},{:.17e},{:.17e},{ev:.17e}", sv.count, sv.mean, sv.stderr);
        println!(
            "V[{lo},{hi}]: mean {:.6} ± {:.6} (expected {ev:.6})",
            sv.mean, sv.stderr
        );
    }
    let p1 = a.out_dir.join("functional.csv");
    let p2 = a.out_dir.join("summary.csv");
    fs::write(&p1, per_path)?;
    fs::write(&p2, summary)?;
    Ok(Produced {
        inputs: vec![a.ensemble.clone(), json],
        outputs: vec![p1, p2],
        exit_code: 0,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.17e}"))
}

#[derive(Serialize)]
struct EigenSummary {
    h: f64,
    mesh_n: usize,
    nodes: usize,
    requested: usize,
    kept: usize,
    dropped_nonpositive: usize,
    trace: f64,
    exact_trace: f64,
    relative_error: f64,
    eigenfunction_layout: &'static str,
}

fn eigen(a: &EigenArgs) -> Result<Produced> {
    let h = HurstParam::new(a.h)?;
    if a.m == 0 {
        return Err(usage("--m must be positive"));
    }
    let mesh = build_mesh(a.mesh_n)?;
    if a.m > mesh.len() {
        eprintln!(
            "warning: --m {} exceeds the {} mesh nodes; clamped to {}",
            a.m,
            mesh.len(),
            mesh.len()
        );
    }
    let dec = nystrom_eigs(h, &mesh, a.m)?;
    let exact = exact_trace(h);
    let rel = (dec.full_trace - exact).abs() / exact;
    println!(
        "trace: nystrom {:.8}  closed form {exact:.8}  relative error {rel:.3e}",
        dec.full_trace
    );
    if dec.dropped > 0 {
        eprintln!(
            "note: {} eigenvalues at or below the positivity threshold were dropped",
            dec.dropped
        );
    }
    let vals = a.out_dir.join("eigenvalues.csv");
    let mut buf = Vec::new();
    dec.write_eigenvalues_csv(&mut buf)?;
    fs::write(&vals, buf)?;
    let funcs = a.out_dir.join("eigenfunctions.bin");
    fs::write(&funcs, dec.eigenfunction_bytes())?;
    let summary = EigenSummary {
        h: a.h,
        mesh_n: a.mesh_n,
        nodes: mesh.len(),
        requested: a.m,
        kept: dec.m(),
        dropped_nonpositive: dec.dropped,
        trace: dec.full_trace,
        exact_trace: exact,
        relative_error: rel,
        eigenfunction_layout: "little-endian f64, one row of node values per eigenfunction",
    };
    let info = a.out_dir.join("eigen.json");
    fs::write(&info, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(Produced::ok(vec![vals, funcs, info]))
}

#[derive(Serialize)]
struct SmallballReport {
    target: TargetArg,
    method: MethodArg,
    fit: Option<FitSummary>,
    /// `-c_H (b-a)` for target V, the slope the stretched-exponential fit approaches.
    reference_slope: Option<f64>,
}

#[derive(Serialize)]
struct BandSlope {
    p_high: f64,
    p_low: f64,
    slope: f64,
    n_points: usize,
}

fn sobolev_params(a: &SmallballArgs, h: HurstParam) -> Result<SobolevParams> {
    match (a.p, a.q) {
        (Some(p), Some(q)) => Ok(SobolevParams::new(p, q, h)?),
        _ => Err(usage("--p and --q are required for targets F and DF")),
    }
}

/// Log-log slopes over successive probability decades below 0.1.
fn decade_slopes(curve: &SmallBallCurve) -> Vec<BandSlope> {
    let mut out = Vec::new();
    let mut hi = 0.1f64;
    while hi > 1e-12 {
        let lo = hi / 10.0;
        let window = FitWindow { p_max: hi, p_min: lo };
        if let Ok(f) = fit_rate_window(curve, RateModel::LogLogPolynomial, window) {
            out.push(BandSlope {
                p_high: hi,
                p_low: lo,
                slope: f.slope,
                n_points: f.n_points,
            });
        }
        hi = lo;
    }
    out
}

fn smallball(a: &SmallballArgs) -> Result<Produced> {
    let h = HurstParam::new(a.h)?;
    let eps = geometric_epsilons(a.eps_min, a.eps_max, a.eps_points)?;
    let mut outputs = Vec::new();
    let (curve, model, reference) = match a.method {
        MethodArg::Kl => {
            if a.target != TargetArg::V {
                return Err(usage(
                    "--method kl applies only to target V; F and DF are not Gaussian quadratic forms, use --method mc",
                ));
            }
            let s = kl_centered_eigs(h, a.a, a.b, a.n)?;
            (
                smallball_kl(&s.mu, &eps)?,
                RateModel::stretched(h),
                Some(-c_h(h) * (a.b - a.a)),
            )
        }
        MethodArg::Mc => {
            let count = a.count.ok_or_else(|| usage("--count is required for --method mc"))?;
            let seed = a.seed.ok_or_else(|| usage("--seed is required for --method mc"))?;
            let (functional, model, reference) = match a.target {
                TargetArg::V => (
                    Functional::PathVariance { a: a.a, b: a.b },
                    RateModel::stretched(h),
                    Some(-c_h(h) * (a.b - a.a)),
                ),
                TargetArg::F => {
                    let params = sobolev_params(a, h)?;
                    let exponent = li_shao_exponent(&params)?;
                    (
                        Functional::SobolevF(params),
                        RateModel::StretchedExponential { exponent },
                        None,
                    )
                }
                TargetArg::Df => {
                    let params = sobolev_params(a, h)?;
                    let mesh_n = a.mesh_n.unwrap_or(a.n);
                    (Functional::DfNorm { params, mesh_n }, RateModel::LogLogPolynomial, None)
                }
            };
            let e = sample_ensemble(h, a.n, count, seed, a.sampler, None)?;
            (smallball_mc(&e, &functional, &eps)?, model, reference)
        }
    };
    let violations = curve.monotonicity_violations();
    if !violations.is_empty() {
        eprintln!(
            "warning: curve rises as epsilon decreases at {} points",
            violations.len()
        );
    }
    let fit = match fit_rate(&curve, model) {
        Ok(f) => Some(FitSummary::from(&f)),
        Err(e) => {
            eprintln!("warning: no rate fit: {e}");
            None
        }
    };
    match (&fit, reference) {
        (Some(f), Some(r)) => println!(
            "fitted slope {:.6}  -c_H(b-a) {r:.6}  ratio {:.4}",
            f.slope,
            f.slope / r
        ),
        (Some(f), None) => println!("fitted slope {:.6} ({})", f.slope, f.model),
        _ => {}
    }
    let curve_path = a.out_dir.join("curve.csv");
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    fs::write(&curve_path, buf)?;
    outputs.push(curve_path);
    if a.target == TargetArg::Df {
        let bands = decade_slopes(&curve);
        let mut table = String::from("p_high,p_low,slope,n_points\n");
        println!("{:>10} {:>10} {:>10} {:>8}", "p_high", "p_low", "slope", "points");
        for b in &bands {
            let _ = writeln!(table, "{:e},{:e},{:.17e},{}", b.p_high, b.p_low, b.slope, b.n_points);
            println!(
                "{:>10.1e} {:>10.1e} {:>10.4} {:>8}",
                b.p_high, b.p_low, b.slope, b.n_points
            );
        }
        let p = a.out_dir.join("slopes.csv");
        fs::write(&p, table)?;
        outputs.push(p);
    }
    let report = SmallballReport {
        target: a.target,
        method: a.method,
        fit,
        reference_slope: reference,
    };
    let p = a.out_dir.join("fit.json");
    fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")?;
    outputs.push(p);
    Ok(Produced::ok(outputs))
}

fn verify(a: &VerifyArgs) -> Result<Produced> {
    let cfg = AcceptanceConfig {
        seed: a.seed,
        c_h_override: a.inject_wrong_ch,
    };
    let outcomes = run_all(&cfg, |o, secs| println!("{} ({secs:.1}s)", o.line()))?;
    let outputs = write_outputs(&outcomes, &a.out_dir)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    Ok(Produced {
        inputs: Vec::new(),
        outputs,
        exit_code: if failed == 0 { 0 } else { 1 },
    })
}

fn replay(a: &ReplayArgs, workers: usize) -> Result<u8> {
    let original = RunManifest::read(&a.manifest)?;
    if original.command == "replay" {
        return Err(usage("cannot replay a replay manifest"));
    }
    let current = digest_inputs(
        &original
            .inputs
            .iter()
            .map(|d| PathBuf::from(&d.path))
            .collect::<Vec<_>>(),
    )?;
    if current != original.inputs {
        eprintln!("inputs changed since the original run");
        return Ok(1);
    }
    let mut argv = original.argv.clone();
    let out = a.out_dir.to_string_lossy().into_owned();
    match argv.iter().position(|s| s == "--out-dir") {
        Some(i) if i + 1 < argv.len() => argv[i + 1] = out,
        _ => {
            if let Some(s) = argv.iter_mut().find(|s| s.starts_with("--out-dir=")) {
                *s = format!("--out-dir={out}");
            } else {
                return Err(usage("manifest argv has no --out-dir"));
            }
        }
    }
    if !argv.iter().any(|s| s == "--workers" || s.starts_with("--workers=")) {
        argv.push("--workers".into());
        argv.push(workers.to_string());
    }
    let cli = <Cli as clap::Parser>::try_parse_from(&argv).map_err(|e| usage(e.to_string()))?;
    let code = run(cli, argv)?;
    let replayed = RunManifest::read(&a.out_dir.join(MANIFEST_NAME))?;
    let mut same = code == original.exit_code;
    for d in &original.outputs {
        match replayed.outputs.iter().find(|r| r.path == d.path) {
            Some(r) if r.sha256 == d.sha256 => {}
            _ => {
                println!("differs: {}", d.path);
                same = false;
            }
        }
    }
    println!(
        "{} outputs {}",
        original.outputs.len(),
        if same {
            "reproduced byte-identically"
        } else {
            "did not reproduce"
        }
    );
    Ok(if same { 0 } else { 1 })
}
