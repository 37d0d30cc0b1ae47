//! Random residual networks `Y_l = Y_{l-1} + L^{-1/2} W_l phi(Y_{l-1})`.
//!
//! Weights are Gaussian with variance `1/d` for the input layer and `1/n`
//! for the residual blocks. They are drawn row by row from the sample's
//! stream in a fixed order (the input layer first, then `W_1, ..., W_L`)
//! and discarded as soon as they have been used.

use std::ops::ControlFlow;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::activations::Activation;
use crate::error::{precondition, Error, Result};
use crate::numerics::rng::fill_gaussian;
use crate::numerics::{dot, norm, par_samples, RngStream};
use crate::stats::{summarize, wilson_ci, MonteCarloSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkConfig {
    pub width: usize,
    pub depth: usize,
    pub input_dim: usize,
    #[serde(serialize_with = "serialize_display")]
    pub activation: Activation,
    /// Apply the `1/sqrt(L)` block scaling.
    pub scaled: bool,
}

fn serialize_display<S: serde::Serializer>(a: &Activation, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(a)
}

impl NetworkConfig {
    /// A scaled network; fails unless all dimensions are positive.
    pub fn new(width: usize, depth: usize, input_dim: usize, activation: Activation) -> Result<Self> {
        let cfg = NetworkConfig { width, depth, input_dim, activation, scaled: true };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scaling(mut self, scaled: bool) -> Self {
        self.scaled = scaled;
        self
    }

    pub fn validate(&self) -> Result<()> {
        precondition(self.width >= 1 && self.depth >= 1 && self.input_dim >= 1, || {
            format!(
                "width, depth and input dimension must be >= 1 (got n={}, L={}, d={})",
                self.width, self.depth, self.input_dim
            )
        })
    }

    fn block_coefficient(&self) -> f64 {
        let c = if self.scaled { 1.0 / (self.depth as f64).sqrt() } else { 1.0 };
        c / (self.width as f64).sqrt()
    }
}

/// Pre-activations `Y_0, ..., Y_L` of one network draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub states: Vec<Vec<f64>>,
}

impl Path {
    pub fn depth(&self) -> usize {
        self.states.len() - 1
    }

    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|s| norm(s)).collect()
    }

    /// `|phi(Y_l)|` for every layer.
    pub fn post_activation_norms(&self, activation: &Activation) -> Result<Vec<f64>> {
        self.states.iter().map(|s| Ok(norm(&activation.apply(s)?))).collect()
    }
}

fn check_input(x: &[f64], d: usize) -> Result<()> {
    precondition(x.len() == d, || format!("input has dimension {}, expected {d}", x.len()))?;
    precondition(x.iter().all(|v| v.is_finite()), || "input must be finite".into())?;
    precondition(x.iter().any(|&v| v != 0.0), || "input must be nonzero".into())
}

/// `Y_0 = W_in x` for each input, sharing one draw of `W_in`.
fn input_layer(cfg: &NetworkConfig, inputs: &[&[f64]], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let scale = 1.0 / (cfg.input_dim as f64).sqrt();
    let mut row = vec![0.0; cfg.input_dim];
    let mut out = vec![vec![0.0; cfg.width]; inputs.len()];
    for i in 0..cfg.width {
        fill_gaussian(rng, &mut row, 1.0);
        for (y, x) in out.iter_mut().zip(inputs) {
            y[i] = scale * dot(&row, x);
        }
    }
    out
}

/// Scratch space for the residual recursion over `k` coupled inputs.
struct Blocks<'a> {
    cfg: &'a NetworkConfig,
    coef: f64,
    row: Vec<f64>,
    phi: Vec<Vec<f64>>,
    incr: Vec<Vec<f64>>,
}

impl<'a> Blocks<'a> {
    fn new(cfg: &'a NetworkConfig, k: usize) -> Self {
        Blocks {
            cfg,
            coef: cfg.block_coefficient(),
            row: vec![0.0; cfg.width],
            phi: vec![vec![0.0; cfg.width]; k],
            incr: vec![vec![0.0; cfg.width]; k],
        }
    }

    /// Evaluates `phi` at the current states; returns whether all of them vanish.
    fn activate(&mut self, states: &[Vec<f64>]) -> Result<bool> {
        let mut all_zero = true;
        for (p, y) in self.phi.iter_mut().zip(states) {
            self.cfg.activation.apply_into(y, p)?;
            all_zero &= p.iter().all(|&v| v == 0.0);
        }
        Ok(all_zero)
    }

    /// One residual block. When every `phi(Y)` is exactly zero the states are
    /// left untouched and no weights are drawn.
    fn step(&mut self, states: &mut [Vec<f64>], rng: &mut ChaCha8Rng) -> Result<()> {
        if self.activate(states)? {
            return Ok(());
        }
        for i in 0..self.cfg.width {
            fill_gaussian(rng, &mut self.row, 1.0);
            for (inc, p) in self.incr.iter_mut().zip(&self.phi) {
                inc[i] = self.coef * dot(&self.row, p);
            }
        }
        for (y, inc) in states.iter_mut().zip(&self.incr) {
            for (a, b) in y.iter_mut().zip(inc) {
                *a += b;
            }
        }
        Ok(())
    }
}

/// Runs the recursion from given `Y_0` states, calling `visit(l, states)` for
/// `l = 0..=L`. The visitor may stop early.
pub fn propagate<V>(cfg: &NetworkConfig, mut states: Vec<Vec<f64>>, rng: &mut ChaCha8Rng, mut visit: V) -> Result<()>
where
    V: FnMut(usize, &[Vec<f64>]) -> ControlFlow<()>,
{
    cfg.validate()?;
    precondition(states.iter().all(|s| s.len() == cfg.width), || {
        format!("states must have dimension {}", cfg.width)
    })?;
    let mut blocks = Blocks::new(cfg, states.len());
    if visit(0, &states).is_break() {
        return Ok(());
    }
    for l in 1..=cfg.depth {
        blocks.step(&mut states, rng)?;
        if visit(l, &states).is_break() {
            break;
        }
    }
    Ok(())
}

/// One network draw: `W_in` and all blocks come from `stream`.
pub fn forward(cfg: &NetworkConfig, x: &[f64], stream: &RngStream) -> Result<Path> {
    cfg.validate()?;
    check_input(x, cfg.input_dim)?;
    let mut rng = stream.rng();
    let y0 = input_layer(cfg, &[x], &mut rng);
    record(cfg, y0, &mut rng).map(|mut p| p.remove(0))
}

/// Like [`forward`] but streams `(l, Y_l)` to `visit` instead of storing the
/// path.
pub fn forward_visit<V>(cfg: &NetworkConfig, x: &[f64], stream: &RngStream, mut visit: V) -> Result<()>
where
    V: FnMut(usize, &[f64]) -> ControlFlow<()>,
{
    cfg.validate()?;
    check_input(x, cfg.input_dim)?;
    let mut rng = stream.rng();
    let y0 = input_layer(cfg, &[x], &mut rng);
    propagate(cfg, y0, &mut rng, |l, st| visit(l, &st[0]))
}

/// Like [`forward`] but with a fixed `Y_0` instead of `W_in x`.
pub fn forward_from_state(cfg: &NetworkConfig, y0: &[f64], stream: &RngStream) -> Result<Path> {
    precondition(y0.iter().all(|v| v.is_finite()), || "initial state must be finite".into())?;
    let mut rng = stream.rng();
    record(cfg, vec![y0.to_vec()], &mut rng).map(|mut p| p.remove(0))
}

fn record(cfg: &NetworkConfig, y0: Vec<Vec<f64>>, rng: &mut ChaCha8Rng) -> Result<Vec<Path>> {
    let mut paths: Vec<Path> = y0
        .iter()
        .map(|_| Path { states: Vec::with_capacity(cfg.depth + 1) })
        .collect();
    propagate(cfg, y0, rng, |_, states| {
        for (p, s) in paths.iter_mut().zip(states) {
            p.states.push(s.clone());
        }
        ControlFlow::Continue(())
    })?;
    Ok(paths)
}

/// Several inputs pushed through one shared weight draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPath {
    pub paths: Vec<Path>,
}

impl MultiPath {
    /// Cosine similarity of `Y_l(a)` and `Y_l(b)` per layer; `None` where
    /// either state is zero.
    pub fn correlations(&self, a: usize, b: usize) -> Vec<Option<f64>> {
        self.paths[a]
            .states
            .iter()
            .zip(&self.paths[b].states)
            .map(|(u, v)| {
                let (uu, vv) = (dot(u, u), dot(v, v));
                (uu > 0.0 && vv > 0.0).then(|| (dot(u, v) / (uu * vv).sqrt()).clamp(-1.0, 1.0))
            })
            .collect()
    }
}

/// With a single input this reproduces [`forward`] exactly.
pub fn forward_multi(cfg: &NetworkConfig, inputs: &[Vec<f64>], stream: &RngStream) -> Result<MultiPath> {
    cfg.validate()?;
    precondition(!inputs.is_empty(), || "need at least one input".into())?;
    for x in inputs {
        check_input(x, cfg.input_dim)?;
    }
    let mut rng = stream.rng();
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let y0 = input_layer(cfg, &refs, &mut rng);
    Ok(MultiPath { paths: record(cfg, y0, &mut rng)? })
}

/// Monte Carlo estimate of a collapse probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseEstimate {
    pub collapses: usize,
    pub n_samples: usize,
    pub summary: MonteCarloSummary,
    /// Wilson 95% interval.
    pub ci: (f64, f64),
}

impl CollapseEstimate {
    pub fn estimate(&self) -> f64 {
        self.collapses as f64 / self.n_samples as f64
    }

    fn from_indicators(hits: &[bool]) -> Result<Self> {
        let values: Vec<f64> = hits.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
        let collapses = hits.iter().filter(|&&h| h).count();
        Ok(CollapseEstimate {
            collapses,
            n_samples: hits.len(),
            summary: summarize(&values)?,
            ci: wilson_ci(collapses, hits.len(), 0.95)?,
        })
    }
}

fn check_collapse_support(activation: &Activation) -> Result<()> {
    if activation.has_dead_half_line() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "collapse has probability zero for activation {activation}"
        )))
    }
}

/// Probability of the event that `phi(Y_l) = 0` exactly for some `l <= L`.
pub fn collapse_probability(cfg: &NetworkConfig, x: &[f64], n_samples: usize, stream: &RngStream) -> Result<CollapseEstimate> {
    cfg.validate()?;
    check_input(x, cfg.input_dim)?;
    check_collapse_support(&cfg.activation)?;
    let hits = par_samples(stream, "sample", n_samples, |_, s| {
        let mut rng = s.rng();
        let y0 = input_layer(cfg, &[x], &mut rng);
        let mut hit = false;
        let mut phi = vec![0.0; cfg.width];
        propagate(cfg, y0, &mut rng, |_, states| {
            // activation is ReLU-type here, so this cannot fail
            let _ = cfg.activation.apply_into(&states[0], &mut phi);
            hit = phi.iter().all(|&v| v == 0.0);
            if hit {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })?;
        Ok(hit)
    })?;
    CollapseEstimate::from_indicators(&hits)
}

/// Depth-zero version of [`collapse_probability`]: the probability that
/// `phi(W_in x) = 0`. `cfg.depth` is ignored.
pub fn collapse_probability_at_init(cfg: &NetworkConfig, x: &[f64], n_samples: usize, stream: &RngStream) -> Result<CollapseEstimate> {
    cfg.validate()?;
    check_input(x, cfg.input_dim)?;
    check_collapse_support(&cfg.activation)?;
    let hits = par_samples(stream, "sample", n_samples, |_, s| {
        let y0 = input_layer(cfg, &[x], &mut s.rng()).remove(0);
        Ok(cfg.activation.apply(&y0)?.iter().all(|&v| v == 0.0))
    })?;
    CollapseEstimate::from_indicators(&hits)
}

/// Backpropagates `terminal_gradient` through one network draw and returns
/// `|g_L|, |g_{L-1}|, ..., |g_0|`, each divided by `|g_L|`.
///
/// The forward pass uses the same weight order as [`forward`], so the
/// states agree with it for the same stream.
pub fn gradient_norms(cfg: &NetworkConfig, x: &[f64], terminal_gradient: &[f64], stream: &RngStream) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_input(x, cfg.input_dim)?;
    let n = cfg.width;
    precondition(terminal_gradient.len() == n, || {
        format!("terminal gradient has dimension {}, expected {n}", terminal_gradient.len())
    })?;
    let g_norm = norm(terminal_gradient);
    precondition(g_norm > 0.0 && g_norm.is_finite(), || "terminal gradient must be nonzero".into())?;

    let mut rng = stream.rng();
    let mut y = input_layer(cfg, &[x], &mut rng).remove(0);
    let coef = cfg.block_coefficient();
    let mut states = Vec::with_capacity(cfg.depth);
    let mut weights = Vec::with_capacity(cfg.depth);
    let mut phi = vec![0.0; n];
    for _ in 0..cfg.depth {
        let mut w = vec![0.0; n * n];
        fill_gaussian(&mut rng, &mut w, 1.0);
        cfg.activation.apply_into(&y, &mut phi)?;
        let incr: Vec<f64> = w.chunks_exact(n).map(|row| coef * dot(row, &phi)).collect();
        let next: Vec<f64> = y.iter().zip(&incr).map(|(a, b)| a + b).collect();
        states.push(std::mem::replace(&mut y, next));
        weights.push(w);
    }

    let mut g = terminal_gradient.to_vec();
    let mut out = Vec::with_capacity(cfg.depth + 1);
    out.push(1.0);
    let mut wt_g = vec![0.0; n];
    let mut dphi = vec![0.0; n];
    for (y_prev, w) in states.iter().zip(&weights).rev() {
        wt_g.iter_mut().for_each(|v| *v = 0.0);
        for (row, gi) in w.chunks_exact(n).zip(&g) {
            for (acc, wij) in wt_g.iter_mut().zip(row) {
                *acc += wij * gi;
            }
        }
        cfg.activation.derivative_into(y_prev, &mut dphi)?;
        for ((gj, d), v) in g.iter_mut().zip(&dphi).zip(&wt_g) {
            *gj += coef * d * v;
        }
        out.push(norm(&g) / g_norm);
    }
    Ok(out)
}
