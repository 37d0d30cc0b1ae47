//! Distributional checks of the samplers against closed-form laws.

use std::f64::consts::PI;

use depthlab::activations::exotic_g;
use depthlab::numerics::par_samples;
use depthlab::sde::{euler_endpoint, gbm_exact, ou_exact, SdeConfig};
use depthlab::stats::{ks_test, summarize, KsReference};
use depthlab::theory::{ou_marginal_params, relu_width_one_log_params};
use depthlab::{Activation, RngStream};

#[test]
fn exact_gbm_is_lognormal() {
    let draws = par_samples(&RngStream::new(1), "s", 4000, |_, s| gbm_exact(2.0, 0.3, 0.7, 1.5, s)).unwrap();
    let mu = 2.0f64.ln() + (0.3 - 0.245) * 1.5;
    let ks = ks_test(&draws, &KsReference::LogNormal { mu, sigma: 0.7 * 1.5f64.sqrt() }).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn exact_ou_matches_its_marginal() {
    let (a, b, sigma, t) = (1.3, -0.4, 0.9, 0.8);
    let draws = par_samples(&RngStream::new(2), "s", 4000, |_, s| ou_exact(1.0, a, b, sigma, t, s)).unwrap();
    let decay = f64::exp(-a * t);
    let mean = decay + b * (1.0 - decay);
    let var = sigma * sigma / (2.0 * a) * (1.0 - decay * decay);
    let ks = ks_test(&draws, &KsReference::Normal { mean, sd: var.sqrt() }).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn relu_euler_endpoint_matches_geometric_brownian_motion() {
    let cfg = SdeConfig::new(1, 500, 1.0, Activation::Relu).unwrap();
    let logs = par_samples(&RngStream::new(3), "s", 3000, |_, s| Ok(euler_endpoint(&cfg, &[1.0], s)?.unwrap()[0].ln())).unwrap();
    let (mean, var) = relu_width_one_log_params(1.0, 1.0).unwrap();
    let ks = ks_test(&logs, &KsReference::Normal { mean, sd: var.sqrt() }).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn exotic_euler_endpoint_matches_ornstein_uhlenbeck() {
    let (alpha, beta) = (1.0, 0.0);
    let act = Activation::Exotic { alpha, beta };
    // a wide stop radius: the transformed process only needs the erfi domain
    let cfg = SdeConfig::new(1, 1000, 1.0, act).unwrap().with_stop_radius(Some(1e3));
    let gs = par_samples(&RngStream::new(4), "s", 3000, |_, s| {
        Ok(euler_endpoint(&cfg, &[1.0], s)?.and_then(|x| exotic_g(alpha, beta, x[0]).ok()))
    })
    .unwrap();
    let kept: Vec<f64> = gs.into_iter().flatten().collect();
    assert!(kept.len() > 2900);
    let g0 = exotic_g(alpha, beta, 1.0).unwrap();
    let (mean, var) = ou_marginal_params(g0, alpha, 1.0).unwrap();
    assert!((var - PI / 2.0 * (1.0 - (-PI / 2.0).exp())).abs() < 1e-12);
    let ks = ks_test(&kept, &KsReference::Normal { mean, sd: var.sqrt() }).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn ks_and_summary_ignore_sample_order() {
    let draws = par_samples(&RngStream::new(5), "s", 1000, |_, s| gbm_exact(1.0, 0.0, 1.0, 1.0, s)).unwrap();
    let mut shuffled = draws.clone();
    shuffled.reverse();
    shuffled.rotate_left(317);
    let reference = KsReference::LogNormal { mu: -0.5, sigma: 1.0 };
    assert_eq!(ks_test(&draws, &reference).unwrap(), ks_test(&shuffled, &reference).unwrap());
    assert_eq!(summarize(&draws).unwrap(), summarize(&shuffled).unwrap());
}
