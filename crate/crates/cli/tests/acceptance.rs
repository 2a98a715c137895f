//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use knn_mdp::dataset::{generate_synthetic, Dataset, NamedFunction, SyntheticSpec};
use knn_mdp::estimator::{fit_all, oracle_curves};
use knn_mdp::experiments::{benchmark_complexity, monte_carlo_risk, run_artificial, ArtificialConfig, BenchmarkConfig};
use knn_mdp::neighbors::materialize_matrix;
use knn_mdp::riskcurve::{empirical_risk, lower_envelope, to_lambda, upper_envelope, StreamingRisk};
use knn_mdp::seed;
use knn_mdp::selection::{estimate_noise_variance, mdp_select_from, Rule};
use knn_mdp::NeighborTable;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

/// Random dataset with coordinates on a coarse lattice, so exact distance
/// ties occur regularly.
fn random_instance(rng: &mut impl Rng) -> Dataset {
    let n = rng.random_range(3..=64);
    let d = rng.random_range(1..=3);
    let points = (0..n * d).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Dataset::new(points, d, y).unwrap()
}

fn dense_risk(a: &knn_mdp::neighbors::DenseMatrix, y: &[f64]) -> f64 {
    let fit = a.mul_vec(y);
    y.iter().zip(&fit).map(|(v, f)| (v - f) * (v - f)).sum::<f64>() / y.len() as f64
}

/// Picks a threshold at least `gap` away from every curve value.
fn separated_threshold(rng: &mut impl Rng, values: &[f64], gap: f64) -> f64 {
    let hi = values.iter().cloned().fold(0.0, f64::max) * 1.1 + 1e-3;
    loop {
        let s = rng.random_range(0.0..hi);
        if values.iter().all(|v| (v - s).abs() > gap) {
            return s;
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(11);
    let instances = 250;
    let mut worst = 0.0f64;
    for inst in 0..instances {
        let ds = random_instance(&mut rng);
        let n = ds.len();
        let y = ds.responses();
        let table = NeighborTable::build(&ds, inst);
        let surface = fit_all(y, &table, n).map_err(|e| e.to_string())?;
        let curve = empirical_risk(y, &surface).map_err(|e| e.to_string())?;
        let mut dense = Vec::with_capacity(n);
        for k in 1..=n {
            let a = materialize_matrix(&table, k).map_err(|e| e.to_string())?;
            let fit = a.mul_vec(y);
            for (i, f) in fit.iter().enumerate() {
                let err = (surface.fit(k, i) - f).abs();
                worst = worst.max(err);
                ensure(err <= 1e-9, || format!("instance {inst}: fit k={k} i={i} off by {err:e}"))?;
            }
            let r = dense_risk(&a, y);
            dense.push(r);
            let err = (curve.values[k - 1] - r).abs();
            ensure(err <= 1e-9, || format!("instance {inst}: R_{k} off by {err:e}"))?;
        }
        for _ in 0..3 {
            let k_start = rng.random_range(1..=n);
            let sigma_sq = separated_threshold(&mut rng, &dense[..k_start], 1e-9);
            let brute = (1..=k_start).rev().find(|&k| dense[k - 1] <= sigma_sq).unwrap();
            let got = mdp_select_from(y, &table, sigma_sq, k_start).map_err(|e| e.to_string())?;
            ensure(got.chosen_k == brute, || {
                format!("instance {inst}: mdp chose {} but brute force gives {brute}", got.chosen_k)
            })?;
            ensure(got.ks_evaluated == k_start - brute + 1, || format!("instance {inst}: wrong scan length"))?;
        }
    }
    let t = within_time(start, Duration::from_secs(30))?;
    Ok(format!("{instances} instances, max fit error {worst:.1e}, {t:.1?}"))
}

fn structural_identities() -> Outcome {
    let mut rng = seed::rng(22);
    let mut checked = 0;
    for inst in 0..100 {
        let ds = random_instance(&mut rng);
        let n = ds.len();
        let table = NeighborTable::build(&ds, inst);
        for k in 1..=n {
            let a = materialize_matrix(&table, k).map_err(|e| e.to_string())?;
            let w = 1.0 / k as f64;
            for i in 0..n {
                let row = a.row(i);
                // k entries equal to 1/k bit for bit, the rest zero, self included
                let hits = row.iter().filter(|&&v| v == w).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                ensure(hits == k && zeros == n - k && a.get(i, i) == w, || {
                    format!("instance {inst}: row {i} of A_{k} is not a {k}-neighbor average")
                })?;
            }
            let nk = n as f64 / k as f64;
            let scale = nk.max(1.0) * 1e-12;
            ensure((a.trace() - nk).abs() <= scale, || format!("instance {inst}: tr(A_{k}) = {}", a.trace()))?;
            ensure((a.gram_trace() - nk).abs() <= scale, || {
                format!("instance {inst}: tr(AᵀA) = {} for k={k}", a.gram_trace())
            })?;
            ensure(a.row_sums().iter().all(|s| (s - 1.0).abs() <= 1e-12), || {
                format!("instance {inst}: row sums of A_{k} are not 1")
            })?;
            checked += 1;
        }
        let y = ds.responses();
        let curve = empirical_risk(y, &fit_all(y, &table, n).unwrap()).unwrap();
        ensure(curve.values[0] == 0.0, || format!("instance {inst}: batch R_1 = {:e}", curve.values[0]))?;
        let mut stream = StreamingRisk::new(y, &table, n).unwrap();
        let last = stream.by_ref().last().unwrap();
        ensure(last == (1, 0.0), || format!("instance {inst}: streamed R_1 = {:e}", last.1))?;
        let truth: Vec<f64> = (0..n).map(|i| ds.point(i).iter().sum::<f64>().sin()).collect();
        let oracle = oracle_curves(&truth, &table, 0.04, n).unwrap();
        ensure(oracle.bias_sq[0] == 0.0, || format!("instance {inst}: B²(1) = {:e}", oracle.bias_sq[0]))?;
    }
    Ok(format!("{checked} matrices: n/k entries structure exact, traces and row sums within 1e-12"))
}

fn expected_risk_monte_carlo() -> Outcome {
    let start = Instant::now();
    let n = 50;
    let k_max = (n as f64).sqrt() as usize;
    let mc = monte_carlo_risk(NamedFunction::F1, 0.15, n, 3, k_max, 5000, 33).map_err(|e| e.to_string())?;
    let z = mc.max_z();
    ensure(z <= 4.0, || format!("max |z| = {z:.2} over k <= {k_max}"))?;
    let t = within_time(start, Duration::from_secs(120))?;
    Ok(format!("max |z| = {z:.2} over k = 1..={k_max}, {t:.1?}"))
}

fn smooth_function_study() -> Outcome {
    let start = Instant::now();
    let mut cfg = ArtificialConfig::fig2a(1000, 44);
    cfg.sample_sizes = vec![100];
    let report = run_artificial(&cfg).map_err(|e| e.to_string())?;
    let loss = |rule| report.row(rule, 100).map(|r| r.mean_loss).ok_or(format!("no row for {rule}"));
    let targets = [
        (Rule::Mdp, 0.00649),
        (Rule::Gcv, 0.00641),
        (Rule::Holdout, 0.00692),
        (Rule::OracleBv, 0.00622),
    ];
    let mut parts = Vec::new();
    for (rule, target) in targets {
        let got = loss(rule)?;
        let rel = got / target - 1.0;
        ensure(rel.abs() <= 0.15, || format!("{rule}: mean loss {got:.5} vs {target} ({:+.1}%)", rel * 100.0))?;
        parts.push(format!("{rule} {got:.5} ({:+.1}%)", rel * 100.0));
    }
    let (mdp, ho, oracle) = (loss(Rule::Mdp)?, loss(Rule::Holdout)?, loss(Rule::OracleBv)?);
    ensure(oracle <= mdp, || format!("oracle loss {oracle} exceeds mdp loss {mdp}"))?;
    ensure(mdp < ho, || format!("mdp loss {mdp} not below hold-out loss {ho}"))?;
    let t = within_time(start, Duration::from_secs(300))?;
    Ok(format!("{}; orderings hold, {t:.1?}", parts.join(", ")))
}

fn noise_estimator_consistency() -> Outcome {
    let mut total = 0.0;
    let seeds = 20;
    for s in 0..seeds {
        let spec = SyntheticSpec::new(NamedFunction::F1.into(), 0.15, 1000, 500 + s);
        let (ds, _) = generate_synthetic(&spec).map_err(|e| e.to_string())?;
        let table = NeighborTable::build_truncated(&ds, s, 2).map_err(|e| e.to_string())?;
        total += estimate_noise_variance(ds.responses(), &table).map_err(|e| e.to_string())?;
    }
    let mean = total / seeds as f64;
    let rel = mean / 0.0225 - 1.0;
    ensure(rel.abs() <= 0.10, || format!("mean estimate {mean:.5} ({:+.1}%)", rel * 100.0))?;
    Ok(format!("mean estimate {mean:.5} vs 0.0225 ({:+.1}%)", rel * 100.0))
}

fn complexity_mechanism() -> Outcome {
    let table = benchmark_complexity(&BenchmarkConfig::evenly_spaced(2000, 20, 55)).map_err(|e| e.to_string())?;
    for r in &table.rows {
        ensure(r.ks_evaluated == table.k_start - r.chosen_k + 1, || {
            format!("ks_evaluated {} but k_start - chosen + 1 = {}", r.ks_evaluated, table.k_start - r.chosen_k + 1)
        })?;
    }
    let full_grid = table.k_start - 1;
    ensure(table.gcv_ks_evaluated == full_grid && table.aic_ks_evaluated == full_grid, || {
        format!("gcv/aic evaluated {}/{} of {full_grid}", table.gcv_ks_evaluated, table.aic_ks_evaluated)
    })?;
    let r2 = table.fit.r_squared;
    ensure(r2 >= 0.9, || format!("linear fit R² = {r2:.3}"))?;
    Ok(format!(
        "scan lengths exact, R² = {r2:.4}, slope {:.0} ns/step; gcv and aic evaluate all {full_grid} grid values",
        table.fit.slope
    ))
}

fn is_non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn envelope_diagnostics() -> Outcome {
    let mut rng = seed::rng(66);
    let mut monotone_cases = 0;
    for inst in 0..100 {
        let ds = random_instance(&mut rng);
        let n = ds.len();
        let y = ds.responses();
        let table = NeighborTable::build(&ds, inst);
        let curve = empirical_risk(y, &fit_all(y, &table, n).unwrap()).unwrap();
        let lam = to_lambda(&curve, n);
        for i in 0..n {
            ensure(lam.lower[i] <= lam.values[i] && lam.values[i] <= lam.upper[i], || {
                format!("instance {inst}: envelopes do not bracket the curve at index {i}")
            })?;
        }
        ensure(is_non_increasing(&lam.lower) && is_non_increasing(&lam.upper), || {
            format!("instance {inst}: envelope not monotone in λ")
        })?;
        ensure(lower_envelope(&lam.lower) == lam.lower && upper_envelope(&lam.upper) == lam.upper, || {
            format!("instance {inst}: envelopes not idempotent")
        })?;
        if is_non_increasing(&lam.values) {
            monotone_cases += 1;
            ensure(lam.lower == lam.values && lam.upper == lam.values, || {
                format!("instance {inst}: envelope differs from a monotone curve")
            })?;
        }
        // a forced monotone version of the same curve
        let sorted: Vec<f64> = {
            let mut v = lam.values.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        ensure(lower_envelope(&sorted) == sorted && upper_envelope(&sorted) == sorted, || {
            format!("instance {inst}: envelope changes a sorted curve")
        })?;
        let sigma_sq = separated_threshold(&mut rng, &curve.values, 1e-9);
        let k_domain = mdp_select_from(y, &table, sigma_sq, n).unwrap().chosen_k;
        ensure(lam.discrepancy_k(sigma_sq) == Some(k_domain), || {
            format!("instance {inst}: λ-domain gives {:?}, k-domain {k_domain}", lam.discrepancy_k(sigma_sq))
        })?;
    }
    Ok(format!("100 curves ({monotone_cases} already monotone), λ- and k-domain rules agree"))
}

fn run_select(out_dir: &Path) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/d4.csv");
    let output = Command::new(env!("CARGO_BIN_EXE_knn-mdp"))
        .args(["--quiet", "select", "--target", "y", "--rule", "mdp,gcv,aic", "--sigma", "6", "--seed", "7"])
        .arg("--input")
        .arg(&fixture)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(output.status.success(), || {
        format!("exit {:?}: {}", output.status.code(), String::from_utf8_lossy(&output.stderr))
    })?;
    let read = |name: &str| std::fs::read(out_dir.join(name)).map_err(|e| format!("{name}: {e}"));
    Ok((output.stdout, read("selection.csv")?, read("manifest.json")?))
}

fn cli_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_select(dir.path())?;
    let second = run_select(dir.path())?;
    ensure(first == second, || "outputs differ between two identical runs".into())?;
    let text = String::from_utf8(first.0).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure(lines.next() == Some("rule,chosen_k,sigma_sq_used,elapsed_ns,ks_evaluated"), || {
        format!("unexpected header in {text:?}")
    })?;
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let expect = [("mdp", "2", "6"), ("gcv", "2", ""), ("aic", "2", "11")];
    ensure(rows.len() == expect.len(), || format!("expected three records, got {text:?}"))?;
    for (row, (rule, k, sigma)) in rows.iter().zip(expect) {
        ensure(row[0] == rule && row[1] == k && row[2] == sigma, || {
            format!("record {row:?}, expected rule {rule} with k = {k} and noise level {sigma:?}")
        })?;
    }
    Ok("mdp, gcv and aic choose k = 2 (aic with estimated noise 11); reruns byte-identical".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("AC1 oracle equivalence", oracle_equivalence),
        ("AC2 structural identities", structural_identities),
        ("AC3 expected risk Monte Carlo", expected_risk_monte_carlo),
        ("AC4 smooth-function study at n = 100", smooth_function_study),
        ("AC5 noise estimator consistency", noise_estimator_consistency),
        ("AC6 complexity mechanism", complexity_mechanism),
        ("AC7 envelope diagnostics", envelope_diagnostics),
        ("AC8 CLI end to end", cli_end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
