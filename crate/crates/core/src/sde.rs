//! The limiting diffusion `dX_t = n^{-1/2} |phi(X_t)| dB_t`, its coupled
//! multi-input form, and exact samplers for the closed-form special cases.

use std::ops::ControlFlow;

use serde::Serialize;

use crate::activations::Activation;
use crate::error::{precondition, Error, Result};
use crate::numerics::rng::{fill_gaussian, std_normal};
use crate::numerics::{cholesky_psd, dot, gauss_matrix, norm, par_samples, DenseMatrix, RngStream};
use crate::stats::{summarize, MonteCarloSummary};
use crate::theory;

/// Relative tolerance for treating a Cholesky pivot of the Gram block as zero.
const GRAM_PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdeConfig {
    /// State dimension.
    pub width: usize,
    /// Grid points per unit time.
    pub steps: usize,
    pub t_end: f64,
    #[serde(serialize_with = "serialize_display")]
    pub activation: Activation,
    /// Samples whose state leaves this sup-norm ball are stopped and
    /// reported as excluded.
    pub stop_radius: Option<f64>,
}

fn serialize_display<S: serde::Serializer>(a: &Activation, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(a)
}

/// Default stopping radius for activations that are only locally Lipschitz.
pub const DEFAULT_STOP_RADIUS: f64 = 10.0;

impl SdeConfig {
    pub fn new(width: usize, steps: usize, t_end: f64, activation: Activation) -> Result<Self> {
        let stop_radius = activation.is_locally_lipschitz_only().then_some(DEFAULT_STOP_RADIUS);
        let cfg = SdeConfig { width, steps, t_end, activation, stop_radius };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stop_radius(mut self, radius: Option<f64>) -> Self {
        self.stop_radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        precondition(self.width >= 1, || "state dimension must be >= 1".into())?;
        precondition(self.steps >= 1, || "steps must be >= 1".into())?;
        precondition(self.t_end > 0.0 && self.t_end.is_finite(), || {
            format!("horizon must be positive, got {}", self.t_end)
        })?;
        if let Some(r) = self.stop_radius {
            precondition(r > 0.0, || format!("stop radius must be positive, got {r}"))?;
        }
        Ok(())
    }

    /// Number of Euler steps and their length covering `[0, t_end]`.
    pub fn grid(&self) -> (usize, f64) {
        let k = ((self.steps as f64 * self.t_end).round() as usize).max(1);
        (k, self.t_end / k as f64)
    }
}

/// A discretised trajectory. `stopped` marks paths cut short at the stop
/// radius; their last state is the first one outside the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stopped: bool,
}

impl SdePath {
    pub fn terminal(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }
}

fn outside(x: &[f64], radius: Option<f64>) -> bool {
    radius.is_some_and(|r| x.iter().any(|v| v.abs() > r))
}

/// Euler scheme for `k` inputs driven by Gaussian noise with covariance
/// `(A / n) ⊗ I_n` per unit time, where `A` is the Gram matrix of
/// `phi(X^1), ..., phi(X^k)`. `visit(step, t, states)` sees every grid
/// point and may stop the run. Returns whether the stop radius was hit.
pub fn euler_visit<V>(cfg: &SdeConfig, x0: &[Vec<f64>], stream: &RngStream, mut visit: V) -> Result<bool>
where
    V: FnMut(usize, f64, &[Vec<f64>]) -> ControlFlow<()>,
{
    cfg.validate()?;
    let k = x0.len();
    let n = cfg.width;
    precondition(k >= 1, || "need at least one initial state".into())?;
    precondition(x0.iter().all(|x| x.len() == n && x.iter().all(|v| v.is_finite())), || {
        format!("initial states must be finite vectors of dimension {n}")
    })?;
    let (n_steps, dt) = cfg.grid();
    let scale = dt.sqrt() / (n as f64).sqrt();
    let mut rng = stream.rng();
    let mut states = x0.to_vec();
    let mut phi = vec![vec![0.0; n]; k];
    let mut noise = vec![0.0; k * n];
    let mut gram = DenseMatrix::zeros(k, k)?;

    if visit(0, 0.0, &states).is_break() {
        return Ok(false);
    }
    if states.iter().any(|x| outside(x, cfg.stop_radius)) {
        return Ok(true);
    }
    for step in 1..=n_steps {
        for (p, x) in phi.iter_mut().zip(&states) {
            cfg.activation.apply_into(x, p)?;
        }
        fill_gaussian(&mut rng, &mut noise, 1.0);
        if k == 1 {
            let coef = norm(&phi[0]) * scale;
            for (x, z) in states[0].iter_mut().zip(&noise) {
                *x += coef * z;
            }
        } else {
            for i in 0..k {
                for j in 0..=i {
                    let g = dot(&phi[i], &phi[j]);
                    gram[(i, j)] = g;
                    gram[(j, i)] = g;
                }
            }
            let max_diag = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max);
            let f = cholesky_psd(&gram, GRAM_PIVOT_RTOL * max_diag)?;
            for (i, x) in states.iter_mut().enumerate() {
                for j in 0..=i {
                    let coef = f[(i, j)] * scale;
                    if coef == 0.0 {
                        continue;
                    }
                    for (xv, z) in x.iter_mut().zip(&noise[j * n..(j + 1) * n]) {
                        *xv += coef * z;
                    }
                }
            }
        }
        if visit(step, step as f64 * dt, &states).is_break() {
            return Ok(false);
        }
        if states.iter().any(|x| outside(x, cfg.stop_radius)) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn record(cfg: &SdeConfig, x0: &[Vec<f64>], stream: &RngStream) -> Result<Vec<SdePath>> {
    let (n_steps, _) = cfg.grid();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(n_steps + 1); x0.len()];
    let stopped = euler_visit(cfg, x0, stream, |_, t, xs| {
        times.push(t);
        for (acc, x) in states.iter_mut().zip(xs) {
            acc.push(x.clone());
        }
        ControlFlow::Continue(())
    })?;
    Ok(states
        .into_iter()
        .map(|s| SdePath { times: times.clone(), states: s, stopped })
        .collect())
}

/// `X_{k+1} = X_k + n^{-1/2} |phi(X_k)| sqrt(dt) zeta_k`.
pub fn euler_path(cfg: &SdeConfig, x0: &[f64], stream: &RngStream) -> Result<SdePath> {
    record(cfg, &[x0.to_vec()], stream).map(|mut v| v.remove(0))
}

/// Coupled Euler paths for several initial states. The per-step noise is
/// drawn input-major, so a single input reproduces [`euler_path`] exactly.
pub fn euler_path_multi(cfg: &SdeConfig, x0: &[Vec<f64>], stream: &RngStream) -> Result<Vec<SdePath>> {
    record(cfg, x0, stream)
}

/// Endpoint of [`euler_path`] without storing the path; `None` if stopped.
pub fn euler_endpoint(cfg: &SdeConfig, x0: &[f64], stream: &RngStream) -> Result<Option<Vec<f64>>> {
    let mut last = Vec::new();
    let stopped = euler_visit(cfg, &[x0.to_vec()], stream, |_, _, xs| {
        last.clone_from(&xs[0]);
        ControlFlow::Continue(())
    })?;
    Ok((!stopped).then_some(last))
}

/// Exact sample of geometric Brownian motion
/// `x0 exp((a - sigma^2/2) t + sigma B_t)`.
pub fn gbm_exact(x0: f64, a: f64, sigma: f64, t: f64, stream: &RngStream) -> Result<f64> {
    if !(x0 > 0.0) {
        return Err(Error::Domain { what: "GBM start", value: x0 });
    }
    precondition(t >= 0.0, || format!("t={t} must be nonnegative"))?;
    let z = std_normal(&mut stream.rng());
    Ok(x0 * ((a - 0.5 * sigma * sigma) * t + sigma * t.sqrt() * z).exp())
}

/// Exact sample of the Ornstein-Uhlenbeck process
/// `dX = a (b - X) dt + sigma dB` at time `t`.
pub fn ou_exact(x0: f64, a: f64, b: f64, sigma: f64, t: f64, stream: &RngStream) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain { what: "OU mean-reversion rate", value: a });
    }
    precondition(t >= 0.0, || format!("t={t} must be nonnegative"))?;
    let decay = (-a * t).exp();
    let mean = x0 * decay + b * (1.0 - decay);
    let var = sigma * sigma / (2.0 * a) * -(-2.0 * a * t).exp_m1();
    if var == 0.0 {
        return Ok(mean);
    }
    Ok(mean + var.sqrt() * std_normal(&mut stream.rng()))
}

/// Coordinate variance of the ReLU diffusion on a time grid, with the
/// mean-field target attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McKeanCheck {
    pub times: Vec<f64>,
    /// Summary of `X_t^1` over draws at each grid time.
    pub summaries: Vec<MonteCarloSummary>,
    /// `|x|^2 e^{t/2} / d` at each grid time.
    pub theory: Vec<f64>,
}

impl McKeanCheck {
    /// Empirical variance divided by the target at each grid time.
    pub fn ratios(&self) -> Vec<f64> {
        self.summaries.iter().zip(&self.theory).map(|(s, t)| s.variance / t).collect()
    }
}

/// Runs `n_samples` ReLU diffusions of width `n` started at `W_in x` and
/// compares `Var(X_t^1)` with `|x|^2 e^{t/2} / d` at `grid_points + 1`
/// equally spaced times in `[0, 1]`.
pub fn mckean_marginal_check(
    n: usize,
    x: &[f64],
    steps: usize,
    n_samples: usize,
    grid_points: usize,
    stream: &RngStream,
) -> Result<McKeanCheck> {
    let d = x.len();
    precondition(d >= 1 && x.iter().any(|&v| v != 0.0), || "input must be nonzero".into())?;
    precondition(grid_points >= 1 && steps.is_multiple_of(grid_points), || {
        format!("steps={steps} must be a positive multiple of grid_points={grid_points}")
    })?;
    let cfg = SdeConfig::new(n, steps, 1.0, Activation::Relu)?;
    let stride = steps / grid_points;
    let rows = par_samples(stream, "sample", n_samples, |_, s| {
        let w_in = gauss_matrix(&s.child("w_in", 0), n, d, 1.0 / d as f64)?;
        let x0 = w_in.matvec(x);
        let mut firsts = Vec::with_capacity(grid_points + 1);
        euler_visit(&cfg, &[x0], &s.child("noise", 0), |step, _, xs| {
            if step % stride == 0 {
                firsts.push(xs[0][0]);
            }
            ControlFlow::Continue(())
        })?;
        Ok(firsts)
    })?;
    let x_norm_sq = dot(x, x);
    let times: Vec<f64> = (0..=grid_points).map(|g| g as f64 / grid_points as f64).collect();
    let summaries = (0..=grid_points)
        .map(|g| summarize(&rows.iter().map(|r| r[g]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let theory = times.iter().map(|&t| theory::mckean_variance(x_norm_sq, d, t)).collect();
    Ok(McKeanCheck { times, summaries, theory })
}

/// Squared sup-distance, over the coarse grid, between Euler paths with
/// `cfg.steps` and `4 cfg.steps` steps per unit time driven by the same
/// Brownian path. Returns one value per sample; `init` supplies `X_0`.
pub fn coupled_sup_sq_errors<I>(cfg: &SdeConfig, n_samples: usize, stream: &RngStream, init: I) -> Result<Vec<f64>>
where
    I: Fn(&RngStream) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let (n_coarse, dt) = cfg.grid();
    let n = cfg.width;
    let act = cfg.activation;
    let sqrt_n = (n as f64).sqrt();
    par_samples(stream, "sample", n_samples, |_, s| {
        let x0 = init(&s.child("init", 0))?;
        precondition(x0.len() == n, || format!("initial state must have dimension {n}"))?;
        let mut rng = s.child("noise", 0).rng();
        let (mut coarse, mut fine) = (x0.clone(), x0);
        let mut phi = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut z_sum = vec![0.0; n];
        let mut sup_sq: f64 = 0.0;
        let fine_scale = (dt / 4.0).sqrt() / sqrt_n;
        for _ in 0..n_coarse {
            z_sum.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..4 {
                fill_gaussian(&mut rng, &mut z, 1.0);
                act.apply_into(&fine, &mut phi)?;
                let coef = norm(&phi) * fine_scale;
                for ((x, zi), acc) in fine.iter_mut().zip(&z).zip(z_sum.iter_mut()) {
                    *x += coef * zi;
                    *acc += zi;
                }
            }
            act.apply_into(&coarse, &mut phi)?;
            // the coarse increment uses the same Brownian increment: sum of
            // four fine normals scaled by sqrt(dt/4)
            let coef = norm(&phi) * fine_scale;
            for (x, zs) in coarse.iter_mut().zip(&z_sum) {
                *x += coef * zs;
            }
            let dist_sq: f64 = coarse.iter().zip(&fine).map(|(a, b)| (a - b) * (a - b)).sum();
            sup_sq = sup_sq.max(dist_sq);
        }
        Ok(sup_sq)
    })
}
