//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs every experiment at its default parameters, so
//! expect several minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use depthlab::experiments::{self, ExperimentSpec, Report};
use depthlab::numerics::special::{erfi, erfi_inv};
use depthlab::resnet::{forward, forward_multi, NetworkConfig};
use depthlab::sde::{euler_path, euler_path_multi, SdeConfig};
use depthlab::{Activation, RngStream};

type Outcome = Result<(bool, String), String>;

fn report(name: &str) -> Result<Report, String> {
    experiments::run(&ExperimentSpec::new(name)).map(|o| o.report).map_err(|e| e.to_string())
}

/// Passes when every rule of the experiment passes; lists the failures.
fn experiment(name: &str) -> Outcome {
    let r = report(name)?;
    let failed: Vec<String> = r.rules.iter().filter(|x| !x.passed).map(|x| format!("{} ({})", x.rule, x.detail)).collect();
    let detail = if failed.is_empty() {
        format!("{} rules passed", r.rules.len())
    } else {
        format!("failed: {}", failed.join("; "))
    };
    Ok((r.passed, detail))
}

/// Passes when the named rules pass; the other rules are reported only.
fn experiment_rules(name: &str, rules: &[&str]) -> Outcome {
    let r = report(name)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for rule in rules {
        let outcome = r.rule(rule).ok_or_else(|| format!("{name} has no rule {rule}"))?;
        ok &= outcome.passed;
        parts.push(format!("{rule}: {}", outcome.detail));
    }
    Ok((ok, parts.join("; ")))
}

fn erfi_round_trip() -> (bool, String) {
    let worst = (0..=10_000)
        .map(|i| -5.0 + 10.0 * i as f64 / 10_000.0)
        .map(|y| (erfi_inv(erfi(y).unwrap()).unwrap() - y).abs())
        .fold(0.0f64, f64::max);
    (worst <= 1e-10, format!("erfi round trip max error {worst:.2e}"))
}

fn smooth_relu_bound() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1.0, 10.0, 100.0] {
        let act = Activation::SmoothRelu { m };
        let worst = (0..10_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 9_999.0)
            .map(|z: f64| (act.value(z).unwrap() - z.max(0.0)).abs())
            .fold(0.0f64, f64::max);
        ok &= worst <= 1.0 / m;
        parts.push(format!("m={m}: {worst:.3e}"));
    }
    (ok, format!("sup |phi_m - relu| {}", parts.join(", ")))
}

fn absorption() -> (bool, String) {
    let cfg = NetworkConfig::new(2, 50, 1, Activation::Relu).unwrap();
    let (mut absorbed, mut moved) = (0, 0);
    for seed in 0..500 {
        let path = forward(&cfg, &[-1.0], &RngStream::new(seed)).unwrap();
        if let Some(l) = path.states.iter().position(|y| y.iter().all(|&v| v <= 0.0)) {
            absorbed += 1;
            if path.states[l..].iter().any(|y| y != &path.states[l]) {
                moved += 1;
            }
        }
    }
    let sde = SdeConfig::new(2, 100, 1.0, Activation::Relu).unwrap();
    let frozen = euler_path(&sde, &[-1.0, -0.2], &RngStream::new(1)).unwrap();
    let sde_ok = frozen.states.iter().all(|x| x == &frozen.states[0]);
    (
        moved == 0 && absorbed > 0 && sde_ok,
        format!("{absorbed} absorbed paths, {moved} moved afterwards; dead SDE start frozen: {sde_ok}"),
    )
}

fn multi_input_bitwise() -> (bool, String) {
    let cfg = NetworkConfig::new(4, 30, 2, Activation::Tanh).unwrap();
    let sde = SdeConfig::new(3, 200, 1.0, Activation::Swish).unwrap();
    let ok = (0..10).all(|seed| {
        let s = RngStream::new(seed);
        let x = vec![0.7, -0.4];
        let x0 = vec![0.2, -1.0, 0.5];
        forward_multi(&cfg, &[x.clone()], &s).unwrap().paths[0] == forward(&cfg, &x, &s).unwrap()
            && euler_path_multi(&sde, &[x0.clone()], &s).unwrap()[0] == euler_path(&sde, &x0, &s).unwrap()
    });
    (ok, "k=1 multi-input runs equal single-input runs bitwise for 10 seeds".into())
}

fn determinism() -> Outcome {
    let run = |threads: usize| -> Result<(String, String), String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| {
            let out = experiments::run(&ExperimentSpec::new("log-growth-paths")).map_err(|e| e.to_string())?;
            Ok((out.csv.to_csv_string().map_err(|e| e.to_string())?, out.report.to_json().map_err(|e| e.to_string())?))
        })
    };
    let same = run(1)? == run(8)?;
    Ok((same, format!("log-growth-paths CSV and JSON identical under 1 and 8 threads: {same}")))
}

fn properties() -> Outcome {
    let mut checks = vec![erfi_round_trip(), smooth_relu_bound(), absorption(), multi_input_bitwise()];
    let correlation = experiment("correlation-paths")?;
    checks.push((correlation.0, format!("correlation-paths {}", correlation.1)));
    checks.push(determinism()?);
    let ok = checks.iter().all(|c| c.0);
    let detail = checks.iter().map(|(p, d)| format!("[{}] {d}", if *p { "ok" } else { "fail" })).collect::<Vec<_>>().join("; ");
    Ok((ok, detail))
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 gbm-law", Box::new(|| experiment("gbm-hist"))),
        ("2 ou-law", Box::new(|| experiment("ou-hist"))),
        ("3 collapse-probability", Box::new(|| experiment("collapse-prob"))),
        ("4 quasi-gbm-mean", Box::new(|| experiment("quasi-gbm-hist"))),
        ("5 regime-change", Box::new(|| experiment("regime-change"))),
        ("6 identity-norm", Box::new(|| experiment("identity-norm"))),
        ("7 euler-order", Box::new(|| experiment("euler-order"))),
        ("8 mckean-variance", Box::new(|| experiment("mckean-variance"))),
        ("9 limit-order", Box::new(|| experiment_rules("limit-order", &["part_a_within_3se_of_quarter", "part_b_adjudication"]))),
        ("10 gradient-stability", Box::new(|| experiment("gradient-norms"))),
        ("11 property-suites", Box::new(properties)),
    ];
    let mut failures = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failures += usize::from(!passed);
        println!("{} {name}: {detail} [{:.1}s]", if passed { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
