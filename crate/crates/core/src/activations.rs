//! Activation functions, their derivatives, and the transforms `g` that
//! turn width-one diffusions into processes with known laws.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numerics::{erfi, erfi_inv};

/// A scalar activation applied coordinatewise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// `pos * relu(z) + neg * relu(-z)`; `(1, -1)` is the identity and
    /// `(1, 0)` is ReLU.
    PiecewiseLinear { pos: f64, neg: f64 },
    /// `slope * z + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `m^{-1} (ln(1 + e^{m z}) - ln 2)`, within `1/m` of ReLU everywhere.
    SmoothRelu { m: f64 },
    /// `exp(erfi_inv(alpha z + beta)^2)`.
    Exotic { alpha: f64, beta: f64 },
    Tanh,
    Gelu,
    Swish,
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Activation {
    pub const IDENTITY: Activation = Activation::Linear {
        slope: 1.0,
        intercept: 0.0,
    };

    pub fn value(&self, z: f64) -> Result<f64> {
        Ok(match *self {
            Activation::Relu => z.max(0.0),
            Activation::PiecewiseLinear { pos, neg } => {
                if z > 0.0 {
                    pos * z
                } else if z < 0.0 {
                    -neg * z
                } else {
                    0.0
                }
            }
            Activation::Linear { slope, intercept } => slope * z + intercept,
            Activation::SmoothRelu { m } => (softplus(m * z) - LN_2) / m,
            Activation::Exotic { alpha, beta } => exotic_phi(alpha, beta, z)?,
            Activation::Tanh => z.tanh(),
            Activation::Gelu => z * std_normal_cdf(z),
            Activation::Swish => z * logistic(z),
        })
    }

    /// Derivative; at the kink of ReLU-type activations this is 0.
    pub fn derivative(&self, z: f64) -> Result<f64> {
        Ok(match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::PiecewiseLinear { pos, neg } => {
                if z > 0.0 {
                    pos
                } else if z < 0.0 {
                    -neg
                } else {
                    0.0
                }
            }
            Activation::Linear { slope, .. } => slope,
            Activation::SmoothRelu { m } => logistic(m * z),
            Activation::Exotic { alpha, beta } => {
                alpha * PI.sqrt() * erfi_inv(alpha * z + beta)?
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Gelu => {
                std_normal_cdf(z) + z * (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
            }
            Activation::Swish => {
                let s = logistic(z);
                s + z * s * (1.0 - s)
            }
        })
    }

    /// `phi` applied coordinatewise into `out`.
    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(v.len(), out.len());
        match *self {
            // hot path for the network recursions
            Activation::Relu => {
                for (o, z) in out.iter_mut().zip(v) {
                    *o = z.max(0.0);
                }
            }
            _ => {
                for (o, z) in out.iter_mut().zip(v) {
                    *o = self.value(*z)?;
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn derivative_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, z) in out.iter_mut().zip(v) {
            *o = self.derivative(*z)?;
        }
        Ok(())
    }

    /// Whether `phi` vanishes identically on a half-line, so that a layer can
    /// collapse to exactly zero post-activations with positive probability.
    pub fn has_dead_half_line(&self) -> bool {
        match *self {
            Activation::Relu => true,
            Activation::PiecewiseLinear { pos, neg } => (pos == 0.0) != (neg == 0.0),
            _ => false,
        }
    }

    /// Only locally Lipschitz; diffusions driven by it are simulated as
    /// stopped processes.
    pub fn is_locally_lipschitz_only(&self) -> bool {
        matches!(self, Activation::Exotic { .. })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Activation::Relu => write!(f, "relu"),
            Activation::PiecewiseLinear { pos, neg } => write!(f, "piecewise:{pos}:{neg}"),
            Activation::Linear { slope, intercept } => write!(f, "linear:{slope}:{intercept}"),
            Activation::SmoothRelu { m } => write!(f, "smooth-relu:{m}"),
            Activation::Exotic { alpha, beta } => write!(f, "exotic:{alpha}:{beta}"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Gelu => write!(f, "gelu"),
            Activation::Swish => write!(f, "swish"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Parses `name[:param[:param]]`, e.g. `relu`, `piecewise:1.0:-1.0`,
    /// `smooth-relu:10`, `exotic:1:0`, `identity`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params = parts
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| {
                    Error::Precondition(format!("bad activation parameter {p:?} in {s:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let arity = |k: usize| -> Result<()> {
            if params.len() == k {
                Ok(())
            } else {
                Err(Error::Precondition(format!(
                    "activation {name:?} takes {k} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        let act = match name.as_str() {
            "relu" => {
                arity(0)?;
                Activation::Relu
            }
            "identity" => {
                arity(0)?;
                Activation::IDENTITY
            }
            "piecewise" | "piecewise-linear" => {
                arity(2)?;
                Activation::PiecewiseLinear {
                    pos: params[0],
                    neg: params[1],
                }
            }
            "linear" => {
                arity(2)?;
                Activation::Linear {
                    slope: params[0],
                    intercept: params[1],
                }
            }
            "smooth-relu" | "smooth_relu" => {
                arity(1)?;
                if !(params[0] > 0.0) {
                    return Err(Error::Precondition(format!(
                        "smooth-relu sharpness must be positive, got {}",
                        params[0]
                    )));
                }
                Activation::SmoothRelu { m: params[0] }
            }
            "exotic" => {
                arity(2)?;
                Activation::Exotic {
                    alpha: params[0],
                    beta: params[1],
                }
            }
            "tanh" => {
                arity(0)?;
                Activation::Tanh
            }
            "gelu" => {
                arity(0)?;
                Activation::Gelu
            }
            "swish" | "silu" => {
                arity(0)?;
                Activation::Swish
            }
            other => {
                return Err(Error::Precondition(format!("unknown activation {other:?}")));
            }
        };
        Ok(act)
    }
}

/// The erfi-based activation `exp(erfi_inv(alpha y + beta)^2)`.
pub fn exotic_phi(alpha: f64, beta: f64, y: f64) -> Result<f64> {
    let z = erfi_inv(alpha * y + beta)?;
    Ok((z * z).exp())
}

/// `alpha sqrt(pi) erfi_inv(alpha y + beta)`; maps the width-one diffusion
/// driven by [`exotic_phi`] onto an Ornstein-Uhlenbeck process.
pub fn exotic_g(alpha: f64, beta: f64, y: f64) -> Result<f64> {
    Ok(alpha * PI.sqrt() * erfi_inv(alpha * y + beta)?)
}

/// Inverse of [`exotic_g`] in `y` (requires `alpha != 0`).
pub fn exotic_g_inv(alpha: f64, beta: f64, g: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Err(Error::Domain { what: "exotic_g_inv alpha", value: alpha });
    }
    Ok((erfi(g / (alpha * PI.sqrt()))? - beta) / alpha)
}

/// `(alpha y + beta)^gamma`, the power transform under which a linear
/// activation yields geometric Brownian motion.
pub fn gbm_transform_g(alpha: f64, beta: f64, gamma: f64, y: f64) -> Result<f64> {
    let base = alpha * y + beta;
    if !(base > 0.0) {
        return Err(Error::Domain { what: "gbm_transform_g base", value: base });
    }
    Ok(base.powf(gamma))
}

/// Drift `a = sigma^2 (gamma - 1) / (2 gamma)` of `g(X_t)` under
/// [`gbm_transform_g`].
pub fn gbm_transform_drift(sigma: f64, gamma: f64) -> f64 {
    0.5 * sigma * sigma * (gamma - 1.0) / gamma
}
