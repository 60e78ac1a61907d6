//! Full acceptance suite. Prints one PASS/FAIL line per criterion, then
//! repeats the run on a two-worker pool and compares every CSV byte for byte.

use std::process::ExitCode;

use fbm_sobolev::acceptance::{run_all, AcceptanceConfig, CriterionOutcome};

fn run_on(workers: usize, cfg: &AcceptanceConfig, verbose: bool) -> Vec<CriterionOutcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
    pool.install(|| {
        run_all(cfg, |o, secs| {
            if verbose {
                println!("{} ({secs:.1}s)", o.line());
            }
        })
    })
    .unwrap()
}

fn main() -> ExitCode {
    let cfg = AcceptanceConfig::default();
    println!("acceptance suite, seed {}", cfg.seed);
    let first = run_on(1, &cfg, true);
    let second = run_on(2, &cfg, false);
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.csv != b.csv)
        .map(|(a, _)| a.csv_name.as_str())
        .collect();
    let same_bytes = differing.is_empty();
    println!(
        "{} [12] determinism across runs: workers 1 vs 2, {} CSV files {}",
        if same_bytes { "PASS" } else { "FAIL" },
        first.len(),
        if same_bytes {
            "byte-identical".to_string()
        } else {
            format!("differ: {differing:?}")
        }
    );
    let failed: Vec<u8> = first.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("{} of {} criteria passed", first.len() - failed.len(), first.len());
    if failed.is_empty() && same_bytes {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
