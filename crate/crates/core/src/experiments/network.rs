//! Finite networks: collapse, input correlations and gradients.

use super::{require_activation, require_min_samples, require_positive_depths, Params, Recorder};
use crate::error::{precondition, Result};
use crate::export::Cell;
use crate::numerics::par_samples;
use crate::resnet::{collapse_probability, collapse_probability_at_init, forward_multi, gradient_norms, NetworkConfig};
use crate::stats::summarize;
use crate::theory::{collapse_prob_init, PredictionKind, TheoryPrediction};

const COLLAPSE_SOURCE: &str = "ReLU network stays alive forever with probability 1 - 2^-n in the depth limit";
const CORRELATION_SOURCE: &str = "correlation of two inputs follows a non-degenerate diffusion";
const GRADIENT_SOURCE: &str = "1/sqrt(L) scaling stabilises gradients; the unscaled network's gradients explode";

pub(super) fn collapse_defaults() -> Params {
    Params {
        widths: vec![1, 2, 3, 4],
        depths: vec![0, 2, 8, 32, 128],
        samples: vec![20_000],
        ..Params::base()
    }
}

pub(super) fn collapse_validate(p: &Params) -> Result<()> {
    require_activation(p, |a| a.has_dead_half_line(), "collapse has probability zero unless phi vanishes on a half-line")?;
    require_min_samples(p, 2)
}

pub(super) fn collapse_run(p: &Params, rec: &mut Recorder) -> Result<()> {
    let root = p.root_stream("collapse-prob");
    let x = vec![1.0; p.input_dim];
    rec.table(&["width", "depth", "samples", "collapses", "estimate", "ci_lo", "ci_hi"]);
    for &n in &p.widths {
        let target = collapse_prob_init(n);
        rec.predict(TheoryPrediction::scalar(format!("collapse_at_init_n{n}"), PredictionKind::Probability, target, COLLAPSE_SOURCE)?);
        let mut by_depth = Vec::new();
        for &depth in &p.depths {
            let cfg = NetworkConfig::new(n, depth.max(1), p.input_dim, p.activation)?;
            let stream = root.child("width", n as u64).child("depth", depth as u64);
            let est = if depth == 0 {
                collapse_probability_at_init(&cfg, &x, p.samples_for(0), &stream)?
            } else {
                collapse_probability(&cfg, &x, p.samples_for(0), &stream)?
            };
            rec.row(vec![
                n.into(),
                depth.into(),
                est.n_samples.into(),
                est.collapses.into(),
                est.estimate().into(),
                est.ci.0.into(),
                est.ci.1.into(),
            ]);
            rec.summary(format!("collapse_n{n}_L{depth}"), (depth == 0).then_some(target), &est.summary, None);
            if depth == 0 {
                rec.rule(
                    format!("init_n{n}_in_wilson_ci"),
                    est.ci.0 <= target && target <= est.ci.1,
                    format!("2^-{n} = {target} vs CI ({:.5}, {:.5})", est.ci.0, est.ci.1),
                    COLLAPSE_SOURCE,
                );
            } else {
                by_depth.push((depth, est.ci));
            }
        }
        by_depth.sort_by_key(|(l, _)| *l);
        if by_depth.len() >= 2 {
            let violation = by_depth.iter().enumerate().find_map(|(i, (li, ci))| {
                by_depth[i + 1..].iter().find(|(_, cj)| cj.0 > ci.1).map(|(lj, _)| (*li, *lj))
            });
            rec.rule(
                format!("n{n}_nonincreasing_in_depth"),
                violation.is_none(),
                match violation {
                    None => "no later depth is significantly above an earlier one".to_owned(),
                    Some((a, b)) => format!("CI at L={b} lies above CI at L={a}"),
                },
                COLLAPSE_SOURCE,
            );
        }
    }
    Ok(())
}

pub(super) fn correlation_defaults() -> Params {
    Params { widths: vec![20], depths: vec![200], input_dim: 2, samples: vec![10], ..Params::base() }
}

pub(super) fn correlation_validate(p: &Params) -> Result<()> {
    precondition(p.input_dim >= 2, || "correlation-paths needs --input-dim >= 2".into())?;
    require_positive_depths(p)?;
    require_min_samples(p, 1)
}

pub(super) fn correlation_run(p: &Params, rec: &mut Recorder) -> Result<()> {
    let (n, depth) = (p.widths[0], p.depths[0]);
    let cfg = NetworkConfig::new(n, depth, p.input_dim, p.activation)?;
    let mut xa = vec![0.0; p.input_dim];
    let mut xb = vec![0.0; p.input_dim];
    xa[0] = 1.0;
    xb[1] = 1.0;
    let inputs = [xa, xb];
    let curves = par_samples(&p.root_stream("correlation-paths"), "sample", p.samples_for(0), |_, s| {
        Ok(forward_multi(&cfg, &inputs, s)?.correlations(0, 1))
    })?;
    rec.table(&["sample_id", "layer", "correlation"]);
    for (i, c) in curves.iter().enumerate() {
        for (l, v) in c.iter().enumerate() {
            rec.row(vec![i.into(), l.into(), Cell::from(*v)]);
        }
    }
    let all: Vec<f64> = curves.iter().flatten().flatten().copied().collect();
    rec.rule(
        "correlations_in_unit_interval",
        all.iter().all(|c| (-1.0..=1.0).contains(c)),
        format!("{} defined values", all.len()),
        CORRELATION_SOURCE,
    );
    let terminal: Vec<f64> = curves.iter().filter_map(|c| c[depth]).collect();
    let max_abs = terminal.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    rec.rule(
        "no_degeneracy_at_final_layer",
        max_abs < 0.999,
        format!("max |c_L| = {max_abs:.4} over {} draws", terminal.len()),
        CORRELATION_SOURCE,
    );
    if terminal.len() >= 2 {
        let s = summarize(&terminal)?;
        rec.summary("terminal_correlation", None, &s, None);
    }
    Ok(())
}

pub(super) fn gradient_defaults() -> Params {
    Params { widths: vec![10], depths: vec![100], samples: vec![10], ..Params::base() }
}

pub(super) fn gradient_validate(p: &Params) -> Result<()> {
    require_positive_depths(p)?;
    require_min_samples(p, 2)
}

pub(super) fn gradient_run(p: &Params, rec: &mut Recorder) -> Result<()> {
    let (n, depth) = (p.widths[0], p.depths[0]);
    let x = vec![1.0; p.input_dim];
    let terminal = vec![1.0; n];
    let root = p.root_stream("gradient-norms");
    rec.table(&["scaled", "sample_id", "layer", "grad_norm_ratio"]);
    for scaled in [true, false] {
        let cfg = NetworkConfig::new(n, depth, p.input_dim, p.activation)?.with_scaling(scaled);
        let runs = par_samples(&root, "sample", p.samples_for(0), |_, s| gradient_norms(&cfg, &x, &terminal, s))?;
        for (i, norms) in runs.iter().enumerate() {
            // norms run from layer L down to layer 0
            for (k, v) in norms.iter().enumerate() {
                rec.row(vec![scaled.into(), i.into(), (depth - k).into(), (*v).into()]);
            }
        }
        let ratios: Vec<f64> = runs.iter().map(|r| r[depth]).collect();
        let s = summarize(&ratios)?;
        let label = if scaled { "scaled" } else { "unscaled" };
        rec.summary(format!("{label}_grad_ratio"), None, &s, None);
        let median = s.median();
        let (passed, bound) = if scaled { (median < 10.0, "< 10") } else { (median > 1e3, "> 1e3") };
        rec.rule(
            format!("{label}_median_ratio"),
            passed,
            format!("median |g_0|/|g_L| = {median:.4e}, required {bound}"),
            GRADIENT_SOURCE,
        );
    }
    Ok(())
}
