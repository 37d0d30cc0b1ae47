//! Closed-form predictions used as Monte Carlo targets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Mean,
    Variance,
    VarianceBound,
    Probability,
    DensityParams,
}

/// A theoretical value together with a description of where it comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub label: String,
    pub kind: PredictionKind,
    #[serde(rename = "value")]
    pub values: Vec<f64>,
    pub source: String,
}

impl TheoryPrediction {
    pub fn new(label: impl Into<String>, kind: PredictionKind, values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        let p = TheoryPrediction { label: label.into(), kind, values, source: source.into() };
        precondition(!p.source.is_empty(), || format!("prediction {:?} has no source", p.label))?;
        precondition(!p.values.is_empty(), || format!("prediction {:?} has no values", p.label))?;
        if let Some(v) = p.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain { what: "theory prediction", value: *v });
        }
        Ok(p)
    }

    pub fn scalar(label: impl Into<String>, kind: PredictionKind, value: f64, source: impl Into<String>) -> Result<Self> {
        Self::new(label, kind, vec![value], source)
    }

    pub fn value(&self) -> f64 {
        self.values[0]
    }
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().replace('-', "_").as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Precondition(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

/// The two published forms of the ReLU log-norm drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanVariant {
    /// `((1 - 2^{-n})^{-1}/4 - 1/n)`, consistent with the collapse-conditioned derivation.
    #[default]
    Main,
    /// `((1 - 2^{-n})/4 - 1/n)`.
    Appendix,
}
string_enum!(MeanVariant { Main => "main", Appendix => "appendix" });

/// Order in which the width and depth limits are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitOrder {
    DepthThenWidth,
    WidthThenDepth,
}
string_enum!(LimitOrder { DepthThenWidth => "depth_then_width", WidthThenDepth => "width_then_depth" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitVariant {
    /// Exponents exactly as displayed for each order.
    #[default]
    AsStated,
    /// Both orders share the variance growth `e^{t/2}`.
    Reconciled,
}
string_enum!(LimitVariant { AsStated => "as_stated", Reconciled => "reconciled" });

fn check_interval(s: f64, t: f64) -> Result<()> {
    precondition((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) && s <= t, || {
        format!("need 0 <= s <= t <= 1, got s={s}, t={t}")
    })
}

fn survival(n: usize) -> f64 {
    1.0 - 0.5f64.powi(n as i32)
}

/// Mean of `log(|phi(X_t)| / |phi(X_s)|)` for ReLU at width `n`, conditional
/// on no collapse.
pub fn relu_log_growth_mean(n: usize, s: f64, t: f64, variant: MeanVariant) -> Result<f64> {
    precondition(n >= 1, || "width must be at least 1".into())?;
    check_interval(s, t)?;
    let q = survival(n);
    let rate = match variant {
        MeanVariant::Main => 0.25 / q - 1.0 / n as f64,
        MeanVariant::Appendix => 0.25 * q - 1.0 / n as f64,
    };
    Ok(rate * (t - s))
}

/// Upper bound `(n^{-1/2} + Gamma^{1/2})^2 (t - s)` on the variance of the
/// ReLU log-norm increment. `p2_curve` samples `u -> E phi'(X^1_u) phi'(X^2_u)`
/// on a uniform grid over `[s, t]`; a single value is read as constant.
///
/// `Gamma` is integrated by the trapezoid rule and clamped at zero.
pub fn relu_log_growth_var_bound(n: usize, s: f64, t: f64, p2_curve: &[f64]) -> Result<f64> {
    precondition(n >= 2, || format!("variance bound needs n >= 2, got {n}"))?;
    check_interval(s, t)?;
    precondition(!p2_curve.is_empty(), || "empty p2 curve".into())?;
    precondition(p2_curve.iter().all(|p| (0.0..=1.0).contains(p)), || {
        "p2 curve values must lie in [0, 1]".into()
    })?;
    let q = survival(n);
    let inv_n = 1.0 / n as f64;
    let integrand = |p2: f64| 0.25 * ((p2 - 0.25 * q * q) + inv_n * (0.5 * q - p2));
    let len = t - s;
    let integral = if p2_curve.len() == 1 {
        integrand(p2_curve[0]) * len
    } else {
        let h = len / (p2_curve.len() - 1) as f64;
        let inner: f64 = p2_curve.iter().map(|&p| integrand(p)).sum();
        let ends = integrand(p2_curve[0]) + integrand(p2_curve[p2_curve.len() - 1]);
        h * (inner - 0.5 * ends)
    };
    // Gamma is normalised per unit length, matching the (t - s) factor below.
    let gamma = if len > 0.0 { (integral / len).max(0.0) } else { 0.0 };
    Ok((inv_n.sqrt() + gamma.sqrt()).powi(2) * len)
}

/// Drift per unit time of the log post-activation norm for
/// `alpha relu(z) + beta relu(-z)`.
pub fn piecewise_mean_drift(alpha: f64, beta: f64, n: usize) -> Result<f64> {
    precondition(n >= 1, || "width must be at least 1".into())?;
    if alpha == 0.0 && beta == 0.0 {
        return Err(Error::Domain { what: "piecewise slopes (0, 0)", value: 0.0 });
    }
    let inv_n = 1.0 / n as f64;
    Ok(if alpha == 0.0 {
        beta * beta * survival(n) / 4.0 - inv_n
    } else if beta == 0.0 {
        alpha * alpha * survival(n) / 4.0 - inv_n
    } else {
        (alpha * alpha + beta * beta) / 4.0 - inv_n
    })
}

/// Probability that a width-`n` ReLU network is dead at initialisation.
pub fn collapse_prob_init(n: usize) -> f64 {
    0.5f64.powi(n as i32)
}

/// Coordinate variance multiplier on `|x|^2 / d` after both limits.
pub fn sequential_limit_variance(t: f64, order: LimitOrder, variant: LimitVariant) -> Result<f64> {
    precondition((0.0..=1.0).contains(&t), || format!("t={t} outside [0, 1]"))?;
    Ok(match (order, variant) {
        (LimitOrder::WidthThenDepth, LimitVariant::AsStated) => t.exp(),
        _ => (t / 2.0).exp(),
    })
}

/// Growth of the normalised post-activation norm after both limits, as
/// displayed for each order.
pub fn sequential_limit_norm_ratio(t: f64, order: LimitOrder) -> Result<f64> {
    precondition((0.0..=1.0).contains(&t), || format!("t={t} outside [0, 1]"))?;
    Ok(match order {
        LimitOrder::DepthThenWidth => (t / 4.0).exp(),
        LimitOrder::WidthThenDepth => (t / 2.0).exp(),
    })
}

/// Mean-reversion rate `pi alpha^2 / 4` of `g(X_t)` for the erfi activation.
pub fn exotic_ou_rate(alpha: f64) -> f64 {
    PI * alpha * alpha / 4.0
}

/// Mean and variance of `g(X_t)` for the erfi activation. The variance is
/// `2a (1 - e^{-2at})`, which is `(pi/2)(1 - e^{-2at})` at `alpha = 1`.
pub fn ou_marginal_params(g_x0: f64, alpha: f64, t: f64) -> Result<(f64, f64)> {
    precondition(t >= 0.0, || format!("t={t} must be nonnegative"))?;
    precondition(alpha != 0.0, || "alpha must be nonzero".into())?;
    let a = exotic_ou_rate(alpha);
    Ok((g_x0 * (-a * t).exp(), 2.0 * a * (-(2.0 * a * t)).exp_m1().abs()))
}

/// Law of `log X_t` for the width-one ReLU diffusion started at `x0 > 0`:
/// `(log x0 - t/2, t)`.
pub fn relu_width_one_log_params(x0: f64, t: f64) -> Result<(f64, f64)> {
    if !(x0 > 0.0) {
        return Err(Error::Domain { what: "width-one start", value: x0 });
    }
    precondition(t >= 0.0, || format!("t={t} must be nonnegative"))?;
    Ok((x0.ln() - 0.5 * t, t))
}

/// Coordinate variance `|x|^2 e^{t/2} / d` of the mean-field limit.
pub fn mckean_variance(x_norm_sq: f64, d: usize, t: f64) -> f64 {
    x_norm_sq / d as f64 * (t / 2.0).exp()
}

#[cfg(test)]
#[allow(clippy::approx_constant)] // decimal oracles are deliberate
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_examples() {
        assert_relative_eq!(relu_log_growth_mean(1, 0.0, 0.6, MeanVariant::Main).unwrap(), -0.3, epsilon = 1e-15);
        assert_relative_eq!(relu_log_growth_mean(4, 0.0, 1.0, MeanVariant::Main).unwrap(), 1.0 / 60.0, epsilon = 1e-15);
        assert_relative_eq!(relu_log_growth_mean(3, 0.0, 1.0, MeanVariant::Main).unwrap(), 2.0 / 7.0 - 1.0 / 3.0, epsilon = 1e-15);
        assert!((relu_log_growth_mean(3, 0.0, 1.0, MeanVariant::Main).unwrap() + 0.0476).abs() < 1e-4);
        assert_relative_eq!(
            relu_log_growth_mean(4, 0.2, 0.7, MeanVariant::Appendix).unwrap(),
            0.5 * (15.0 / 64.0 - 0.25),
            epsilon = 1e-15
        );
        assert!(relu_log_growth_mean(0, 0.0, 1.0, MeanVariant::Main).is_err());
        assert!(relu_log_growth_mean(2, 0.5, 0.2, MeanVariant::Main).is_err());
    }

    #[test]
    fn mean_sign_pattern() {
        let main: Vec<f64> = (1..=30).map(|n| relu_log_growth_mean(n, 0.0, 1.0, MeanVariant::Main).unwrap()).collect();
        assert!(main.windows(2).all(|w| w[0] < w[1]));
        assert!(main[2] < 0.0 && main[3] > 0.0);
        let app: Vec<f64> = (1..=30).map(|n| relu_log_growth_mean(n, 0.0, 1.0, MeanVariant::Appendix).unwrap()).collect();
        assert!(app[3] < 0.0 && app[4] > 0.0);
    }

    #[test]
    fn variance_bound_example() {
        // (0.25 - 0.140625) + 0.5 (0.375 - 0.25), quartered
        let gamma: f64 = 0.25 * (0.109375 + 0.0625);
        let expected = (0.5f64.sqrt() + gamma.sqrt()).powi(2);
        let got = relu_log_growth_var_bound(2, 0.0, 1.0, &[0.25]).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-14);
        assert!((got - 0.836_12).abs() < 1e-5);
        let curve = vec![0.25; 11];
        assert_relative_eq!(relu_log_growth_var_bound(2, 0.0, 1.0, &curve).unwrap(), expected, epsilon = 1e-14);
        assert!(relu_log_growth_var_bound(2, 0.0, 1.0, &[]).is_err());
        assert!(relu_log_growth_var_bound(1, 0.0, 1.0, &[0.2]).is_err());
        assert!(relu_log_growth_var_bound(2, 0.0, 1.0, &[1.2]).is_err());
        assert_eq!(relu_log_growth_var_bound(5, 0.3, 0.3, &[0.2]).unwrap(), 0.0);
    }

    #[test]
    fn variance_bound_large_n_and_monotone() {
        let n = 1000;
        let q = survival(n);
        let flat = relu_log_growth_var_bound(n, 0.0, 1.0, &[q * q / 4.0]).unwrap();
        // Gamma reduces to (q/2 - q^2/4) / (4n)
        let gamma = (0.5 * q - 0.25 * q * q) / (4.0 * n as f64);
        assert_relative_eq!(flat, (1.0 / (n as f64).sqrt() + gamma.sqrt()).powi(2), epsilon = 1e-15);
        let mut prev = flat;
        for k in 1..=20 {
            let p2 = q * q / 4.0 + 0.03 * k as f64;
            let b = relu_log_growth_var_bound(n, 0.0, 1.0, &[p2]).unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn piecewise_examples() {
        for n in [1, 2, 5, 20] {
            assert_relative_eq!(piecewise_mean_drift(1.0, -1.0, n).unwrap(), 0.5 - 1.0 / n as f64);
            assert_relative_eq!(
                piecewise_mean_drift(1.0, 0.0, n).unwrap(),
                relu_log_growth_mean(n, 0.0, 1.0, MeanVariant::Appendix).unwrap()
            );
        }
        assert_relative_eq!(piecewise_mean_drift(1.0, 0.9, 2).unwrap(), -0.0475, epsilon = 1e-15);
        assert!(piecewise_mean_drift(0.0, 0.0, 3).is_err());
    }

    #[test]
    fn piecewise_jump_at_poles() {
        for n in [1usize, 3, 7] {
            for coef in [0.5, 1.0, 2.0] {
                let jump = 0.5f64.powi(n as i32) * coef * coef / 4.0;
                let near = piecewise_mean_drift(1e-9, coef, n).unwrap();
                let at = piecewise_mean_drift(0.0, coef, n).unwrap();
                assert!((near - at - jump).abs() < 1e-12);
                let near = piecewise_mean_drift(coef, 1e-9, n).unwrap();
                let at = piecewise_mean_drift(coef, 0.0, n).unwrap();
                assert!((near - at - jump).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn collapse_init_matches_sign_enumeration() {
        for n in 1..=10usize {
            let all_nonpositive = (0u32..(1 << n)).filter(|mask| *mask == 0).count();
            assert_eq!(collapse_prob_init(n), all_nonpositive as f64 / (1u32 << n) as f64);
        }
        assert_eq!(collapse_prob_init(10), 1.0 / 1024.0);
    }

    #[test]
    fn sequential_limits() {
        for order in [LimitOrder::DepthThenWidth, LimitOrder::WidthThenDepth] {
            for variant in [LimitVariant::AsStated, LimitVariant::Reconciled] {
                assert_eq!(sequential_limit_variance(0.0, order, variant).unwrap(), 1.0);
            }
            assert_eq!(sequential_limit_norm_ratio(0.0, order).unwrap(), 1.0);
        }
        let dw = sequential_limit_variance(1.0, LimitOrder::DepthThenWidth, LimitVariant::AsStated).unwrap();
        assert!((dw - 1.6487).abs() < 1e-4);
        let wd = sequential_limit_variance(1.0, LimitOrder::WidthThenDepth, LimitVariant::AsStated).unwrap();
        assert!((wd - 2.7183).abs() < 1e-4);
        let rec = sequential_limit_variance(1.0, LimitOrder::WidthThenDepth, LimitVariant::Reconciled).unwrap();
        assert_eq!(rec, dw);
        assert!((sequential_limit_norm_ratio(1.0, LimitOrder::DepthThenWidth).unwrap() - 1.2840).abs() < 1e-4);
        assert!((sequential_limit_norm_ratio(1.0, LimitOrder::WidthThenDepth).unwrap() - 1.6487).abs() < 1e-4);
        assert!(sequential_limit_variance(1.5, LimitOrder::DepthThenWidth, LimitVariant::AsStated).is_err());
    }

    #[test]
    fn ou_params() {
        assert_eq!(ou_marginal_params(1.3, 1.0, 0.0).unwrap(), (1.3, 0.0));
        let (m, v) = ou_marginal_params(2.0, 1.0, 1e3).unwrap();
        assert!(m.abs() < 1e-300);
        assert_relative_eq!(v, PI / 2.0, epsilon = 1e-15);
        let (m, _) = ou_marginal_params(1.0, 1.0, 1.0).unwrap();
        assert!((m - 0.4559).abs() < 1e-4);
        assert!((exotic_ou_rate(1.0) - 0.785_398).abs() < 1e-6);
        let (_, v) = ou_marginal_params(1.0, 2.0, 1e3).unwrap();
        assert_relative_eq!(v, 2.0 * PI, epsilon = 1e-14);
    }

    #[test]
    fn baseline_at_equal_times() {
        for n in 1..6 {
            assert_eq!(relu_log_growth_mean(n, 0.4, 0.4, MeanVariant::Main).unwrap(), 0.0);
        }
        assert_eq!(mckean_variance(4.0, 4, 0.0), 1.0);
        assert!((mckean_variance(4.0, 4, 1.0) - 1.6487).abs() < 1e-4);
        assert_eq!(relu_width_one_log_params(1.0, 1.0).unwrap(), (-0.5, 1.0));
    }

    #[test]
    fn enum_parsing() {
        assert_eq!("appendix".parse::<MeanVariant>().unwrap(), MeanVariant::Appendix);
        assert_eq!("width-then-depth".parse::<LimitOrder>().unwrap(), LimitOrder::WidthThenDepth);
        assert_eq!(LimitVariant::Reconciled.to_string(), "reconciled");
        assert!("other".parse::<LimitVariant>().is_err());
    }

    #[test]
    fn prediction_validation() {
        assert!(TheoryPrediction::scalar("x", PredictionKind::Mean, f64::NAN, "src").is_err());
        assert!(TheoryPrediction::scalar("x", PredictionKind::Mean, 1.0, "").is_err());
        let p = TheoryPrediction::scalar("x", PredictionKind::Mean, 1.0, "src").unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["value"][0], 1.0);
        assert_eq!(json["kind"], "mean");
    }
}
