//! Checks on the limiting diffusion itself: Euler convergence order and the
//! mean-field marginal variance.

use super::{require_activation, require_min_samples, Params, Recorder};
use crate::activations::Activation;
use crate::error::{precondition, Result};
use crate::numerics::gauss_matrix;
use crate::sde::{coupled_sup_sq_errors, mckean_marginal_check, SdeConfig};
use crate::stats::summarize;
use crate::theory::{PredictionKind, TheoryPrediction};

const EULER_SOURCE: &str = "Euler scheme error E sup |X - Y|^2 = O(delta)";
const MCKEAN_SOURCE: &str = "mean-field limit X_t ~ N(0, |x|^2 e^(t/2) / d)";

pub(super) fn euler_defaults() -> Params {
    Params {
        widths: vec![4],
        input_dim: 4,
        steps: vec![64, 256, 1024],
        samples: vec![1000],
        ..Params::base()
    }
}

pub(super) fn euler_validate(p: &Params) -> Result<()> {
    precondition(p.steps.len() >= 2, || "euler-order needs at least two step counts".into())?;
    require_min_samples(p, 2)
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub(super) fn euler_run(p: &Params, rec: &mut Recorder) -> Result<()> {
    let n = p.widths[0];
    let d = p.input_dim;
    let x = vec![1.0; d];
    let root = p.root_stream("euler-order");
    rec.table(&["steps", "dt", "samples", "rms_sup_error", "stderr"]);
    let (mut log_dt, mut log_rms) = (Vec::new(), Vec::new());
    for &steps in &p.steps {
        let cfg = SdeConfig::new(n, steps, 1.0, p.activation)?;
        let init = |s: &crate::RngStream| Ok(gauss_matrix(s, n, d, 1.0 / d as f64)?.matvec(&x));
        // the same root for every level reuses each sample's initial state
        let errors = coupled_sup_sq_errors(&cfg, p.samples_for(0), &root, init)?;
        let s = summarize(&errors)?;
        let rms = s.mean.sqrt();
        let stderr = s.stderr / (2.0 * rms);
        let dt = 1.0 / steps as f64;
        rec.row(vec![steps.into(), dt.into(), errors.len().into(), rms.into(), stderr.into()]);
        rec.measure(super::Measurement {
            label: format!("rms_sup_error_steps{steps}"),
            prediction: None,
            estimate: rms,
            stderr,
            ks: None,
            n: errors.len(),
            n_excluded: 0,
            seed: p.seed,
        });
        log_dt.push(dt.ln());
        log_rms.push(rms.ln());
    }
    let fitted = slope(&log_dt, &log_rms);
    rec.predict(TheoryPrediction::scalar("strong_order", PredictionKind::Mean, 0.5, EULER_SOURCE)?);
    rec.measure(super::Measurement {
        label: "log_log_slope".into(),
        prediction: Some(0.5),
        estimate: fitted,
        stderr: f64::NAN,
        ks: None,
        n: p.steps.len(),
        n_excluded: 0,
        seed: p.seed,
    });
    rec.rule(
        "slope_within_0.15_of_half",
        (fitted - 0.5).abs() <= 0.15,
        format!("fitted slope {fitted:.4}"),
        EULER_SOURCE,
    );
    Ok(())
}

pub(super) fn mckean_defaults() -> Params {
    Params { widths: vec![200], input_dim: 4, samples: vec![2000], ..Params::base() }
}

pub(super) fn mckean_validate(p: &Params) -> Result<()> {
    require_activation(p, |a| *a == Activation::Relu, "mckean-variance needs relu")?;
    precondition(p.steps[0].is_multiple_of(4), || "steps must be a multiple of 4".into())?;
    require_min_samples(p, 2)
}

pub(super) fn mckean_run(p: &Params, rec: &mut Recorder) -> Result<()> {
    let x = vec![1.0; p.input_dim];
    let n_samples = p.samples_for(0);
    let check = mckean_marginal_check(p.widths[0], &x, p.steps[0], n_samples, 4, &p.root_stream("mckean-variance"))?;
    rec.table(&["t", "variance", "variance_stderr", "theory", "ratio"]);
    let ratios = check.ratios();
    for (i, &t) in check.times.iter().enumerate() {
        let var = check.summaries[i].variance;
        let se = var * (2.0 / (n_samples as f64 - 1.0)).sqrt();
        rec.row(vec![t.into(), var.into(), se.into(), check.theory[i].into(), ratios[i].into()]);
        rec.predict(TheoryPrediction::scalar(format!("variance_t{t}"), PredictionKind::Variance, check.theory[i], MCKEAN_SOURCE)?);
        rec.measure(super::Measurement {
            label: format!("variance_t{t}"),
            prediction: Some(check.theory[i]),
            estimate: var,
            stderr: se,
            ks: None,
            n: n_samples,
            n_excluded: 0,
            seed: p.seed,
        });
    }
    let last = ratios[ratios.len() - 1];
    rec.rule(
        "variance_t1_within_10pct",
        (last - 1.0).abs() <= 0.10,
        format!("Var(X_1^1) / target = {last:.4}"),
        MCKEAN_SOURCE,
    );
    Ok(())
}
