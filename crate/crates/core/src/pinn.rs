//! Physics residual of the swing equation on a network surrogate, the
//! composite data + residual loss, and its exact gradient.
//!
//! The network sees normalized inputs `t̂ = t / t_end` and
//! `p̂ = (p1 − p_min) / (p_max − p_min)`; time derivatives are converted back
//! to physical units with the factors `1 / t_end` and `1 / t_end²`.

use serde::{Deserialize, Serialize};

use crate::dataset::{CollocationPoint, Domain, TrainingPoint};
use crate::error::{Error, Result};
use crate::mlp::{self, Evaluator, MlpParams, ParamGradient};
use crate::par::{self, Execution};
use crate::swing::SwingParams;

/// Which quantities the network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// One output `δ`; `ω` is its time derivative.
    Single,
    /// Two outputs `(δ, ω)` tied together by the extra residual `δ̇ − ω`.
    TwoOutput,
}

impl OutputMode {
    pub fn n_outputs(self) -> usize {
        match self {
            OutputMode::Single => 1,
            OutputMode::TwoOutput => 2,
        }
    }
}

/// Which physics parameters are optimized alongside the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trainable {
    pub m: bool,
    pub d: bool,
}

impl Trainable {
    pub const NONE: Trainable = Trainable { m: false, d: false };
    pub const INERTIA_AND_DAMPING: Trainable = Trainable { m: true, d: true };

    pub fn count(self) -> usize {
        self.m as usize + self.d as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub mlp: MlpParams,
    pub params: SwingParams,
    pub trainable: Trainable,
    pub norm: Domain,
    pub mode: OutputMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub mse_u: f64,
    pub mse_f: f64,
    pub total: f64,
}

/// Gradient of the loss over the physics parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhysicsGradient {
    pub m: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub network: ParamGradient,
    pub physics: PhysicsGradient,
}

/// Surrogate outputs and time derivatives in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Physical {
    u: [f64; 2],
    u_t: [f64; 2],
    u_tt: [f64; 2],
}

impl PinnModel {
    pub fn new(
        mlp: MlpParams,
        params: SwingParams,
        trainable: Trainable,
        norm: Domain,
        mode: OutputMode,
    ) -> Result<Self> {
        params.validate()?;
        norm.validate()?;
        if mlp.n_outputs() != mode.n_outputs() {
            return Err(Error::InvalidArgument(format!(
                "{mode:?} mode needs {} network outputs, got {}",
                mode.n_outputs(),
                mlp.n_outputs()
            )));
        }
        Ok(Self {
            mlp,
            params,
            trainable,
            norm,
            mode,
        })
    }

    pub fn normalize(&self, t: f64, p1: f64) -> (f64, f64) {
        (
            t / self.norm.t_end,
            (p1 - self.norm.p_min) / (self.norm.p_max - self.norm.p_min),
        )
    }

    /// True when `(t, p1)` lies outside the training box.
    pub fn is_extrapolation(&self, t: f64, p1: f64) -> bool {
        !self.norm.contains(t, p1)
    }

    /// Forward pass over `points` (physical `(t, p1)` pairs).
    fn forward_batch(&self, eval: &mut Evaluator<'_>, points: impl Iterator<Item = (f64, f64)>) {
        let inputs: Vec<(f64, f64)> = points.map(|(t, p1)| self.normalize(t, p1)).collect();
        eval.forward(&inputs);
    }

    /// Outputs at batch point `b` of the last forward pass, in physical units.
    fn physical_at(&self, eval: &Evaluator<'_>, b: usize) -> Physical {
        let inv_t = 1.0 / self.norm.t_end;
        let mut out = Physical {
            u: [0.0; 2],
            u_t: [0.0; 2],
            u_tt: [0.0; 2],
        };
        for k in 0..self.mode.n_outputs() {
            let (u, u_t, u_tt) = eval.output(k, b);
            out.u[k] = u;
            out.u_t[k] = u_t * inv_t;
            out.u_tt[k] = u_tt * inv_t * inv_t;
        }
        out
    }

    fn physical(&self, t: f64, p1: f64) -> Physical {
        let mut eval = Evaluator::new(&self.mlp, 1);
        self.forward_batch(&mut eval, std::iter::once((t, p1)));
        self.physical_at(&eval, 0)
    }
}

/// `m·δ̈ + d·δ̇ + b12·v1·v2·sin(δ) − p1` on the network's first output.
pub fn residual(model: &PinnModel, t: f64, p1: f64) -> f64 {
    let x = model.physical(t, p1);
    single_residual(&model.params, &x, p1)
}

#[inline]
fn single_residual(params: &SwingParams, x: &Physical, p1: f64) -> f64 {
    params.m * x.u_tt[0] + params.d * x.u_t[0] + params.coupling() * x.u[0].sin() - p1
}

#[inline]
fn two_output_residuals(params: &SwingParams, x: &Physical, p1: f64) -> (f64, f64) {
    let (delta, omega) = (x.u[0], x.u[1]);
    let f_omega = x.u_t[0] - omega;
    let f_delta = params.m * x.u_t[1] + params.d * omega + params.coupling() * delta.sin() - p1;
    (f_omega, f_delta)
}

/// `(f_ω, f_δ) = (δ̇ − ω, m·ω̇ + d·ω + b12·v1·v2·sin(δ) − p1)`.
pub fn residual_two_output(model: &PinnModel, t: f64, p1: f64) -> Result<(f64, f64)> {
    if model.mode != OutputMode::TwoOutput {
        return Err(Error::ModeMismatch {
            expected: "two-output",
        });
    }
    let x = model.physical(t, p1);
    Ok(two_output_residuals(&model.params, &x, p1))
}

/// Predicted rotor angle.
pub fn predict_delta(model: &PinnModel, t: f64, p1: f64) -> f64 {
    let (tn, pn) = model.normalize(t, p1);
    mlp::forward(&model.mlp, tn, pn)[0]
}

/// Predicted frequency: the exact time derivative of `δ` for a single-output
/// model, the `ω` output for a two-output model.
pub fn predict_omega(model: &PinnModel, t: f64, p1: f64) -> f64 {
    let x = model.physical(t, p1);
    match model.mode {
        OutputMode::Single => x.u_t[0],
        OutputMode::TwoOutput => x.u[1],
    }
}

/// `(δ, ω)` at each physical `(t, p1)` point, as `predict_delta` and
/// `predict_omega` would return them. Runs on the calling thread.
pub fn predict_batch(model: &PinnModel, points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.len());
    let mut eval = Evaluator::new(&model.mlp, par::CHUNK.min(points.len()));
    for chunk in points.chunks(par::CHUNK) {
        model.forward_batch(&mut eval, chunk.iter().copied());
        out.extend((0..chunk.len()).map(|b| {
            let x = model.physical_at(&eval, b);
            match model.mode {
                OutputMode::Single => (x.u[0], x.u_t[0]),
                OutputMode::TwoOutput => (x.u[0], x.u[1]),
            }
        }));
    }
    out
}

fn check_inputs(training: &[TrainingPoint], collocation: &[CollocationPoint]) -> Result<()> {
    if training.is_empty() {
        return Err(Error::EmptyInput("training points"));
    }
    if collocation.is_empty() {
        return Err(Error::EmptyInput("collocation points"));
    }
    Ok(())
}

/// Mean squared data misfit plus mean squared physics residual.
pub fn loss(
    model: &PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
) -> Result<LossReport> {
    loss_with(model, training, collocation, Execution::default())
}

pub fn loss_with(
    model: &PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
    exec: Execution,
) -> Result<LossReport> {
    check_inputs(training, collocation)?;
    let data_sum: f64 = training
        .iter()
        .map(|pt| (predict_delta(model, pt.t, pt.p1) - pt.delta).powi(2))
        .sum();
    let chunks = par::map_chunks(collocation, exec, |chunk| {
        let mut eval = Evaluator::new(&model.mlp, chunk.len());
        model.forward_batch(&mut eval, chunk.iter().map(|c| (c.t, c.p1)));
        let mut acc = 0.0;
        for (b, c) in chunk.iter().enumerate() {
            let x = model.physical_at(&eval, b);
            acc += match model.mode {
                OutputMode::Single => single_residual(&model.params, &x, c.p1).powi(2),
                OutputMode::TwoOutput => {
                    let (fw, fd) = two_output_residuals(&model.params, &x, c.p1);
                    fw * fw + fd * fd
                }
            };
        }
        acc
    });
    let residual_sum: f64 = chunks.into_iter().sum();
    Ok(report(
        data_sum / training.len() as f64,
        residual_sum / collocation.len() as f64,
    ))
}

fn report(mse_u: f64, mse_f: f64) -> LossReport {
    LossReport {
        mse_u,
        mse_f,
        total: mse_u + mse_f,
    }
}

/// Gradient of [`loss`] over the network parameters and `(m, d)`.
pub fn loss_gradient(
    model: &PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
) -> Result<LossGradient> {
    loss_and_gradient(model, training, collocation).map(|(_, g)| g)
}

pub fn loss_and_gradient(
    model: &PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
) -> Result<(LossReport, LossGradient)> {
    loss_and_gradient_with(model, training, collocation, Execution::default())
}

struct ChunkResult {
    sq_sum: f64,
    grad: Vec<f64>,
    dm: f64,
    dd: f64,
}

pub fn loss_and_gradient_with(
    model: &PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
    exec: Execution,
) -> Result<(LossReport, LossGradient)> {
    check_inputs(training, collocation)?;
    let n_params = model.mlp.len();
    let n_out = model.mode.n_outputs();
    let inv_t = 1.0 / model.norm.t_end;
    let params = &model.params;
    let coupling = params.coupling();

    // Data term: d/dθ (1/N_u) Σ (δ − y)² seeds the δ output with 2r/N_u.
    let mut grad = vec![0.0; n_params];
    let w_u = 2.0 / training.len() as f64;
    let mut data_sum = 0.0;
    for chunk in training.chunks(par::CHUNK) {
        let mut eval = Evaluator::new(&model.mlp, chunk.len());
        model.forward_batch(&mut eval, chunk.iter().map(|pt| (pt.t, pt.p1)));
        let mut seeds = vec![[0.0; 3]; chunk.len() * n_out];
        for (b, pt) in chunk.iter().enumerate() {
            let r = eval.output(0, b).0 - pt.delta;
            data_sum += r * r;
            seeds[b * n_out] = [w_u * r, 0.0, 0.0];
        }
        eval.backward(&seeds, &mut grad);
    }

    // Residual term. Seeds are in normalized time, hence the 1/t_end factors.
    let w_f = 2.0 / collocation.len() as f64;
    let chunks = par::map_chunks(collocation, exec, |chunk| {
        let mut eval = Evaluator::new(&model.mlp, chunk.len());
        model.forward_batch(&mut eval, chunk.iter().map(|c| (c.t, c.p1)));
        let mut out = ChunkResult {
            sq_sum: 0.0,
            grad: vec![0.0; n_params],
            dm: 0.0,
            dd: 0.0,
        };
        let mut seeds = vec![[0.0; 3]; chunk.len() * n_out];
        for (b, c) in chunk.iter().enumerate() {
            let x = model.physical_at(&eval, b);
            match model.mode {
                OutputMode::Single => {
                    let f = single_residual(params, &x, c.p1);
                    out.sq_sum += f * f;
                    let g = w_f * f;
                    seeds[b] = [
                        g * coupling * x.u[0].cos(),
                        g * params.d * inv_t,
                        g * params.m * inv_t * inv_t,
                    ];
                    out.dm += g * x.u_tt[0];
                    out.dd += g * x.u_t[0];
                }
                OutputMode::TwoOutput => {
                    let (fw, fd) = two_output_residuals(params, &x, c.p1);
                    out.sq_sum += fw * fw + fd * fd;
                    let (gw, gd) = (w_f * fw, w_f * fd);
                    seeds[2 * b] = [gd * coupling * x.u[0].cos(), gw * inv_t, 0.0];
                    seeds[2 * b + 1] = [-gw + gd * params.d, gd * params.m * inv_t, 0.0];
                    out.dm += gd * x.u_t[1];
                    out.dd += gd * x.u[1];
                }
            }
        }
        eval.backward(&seeds, &mut out.grad);
        out
    });

    let mut residual_sum = 0.0;
    let mut physics = PhysicsGradient::default();
    for chunk in chunks {
        residual_sum += chunk.sq_sum;
        physics.m += chunk.dm;
        physics.d += chunk.dd;
        for (g, c) in grad.iter_mut().zip(&chunk.grad) {
            *g += c;
        }
    }

    Ok((
        report(
            data_sum / training.len() as f64,
            residual_sum / collocation.len() as f64,
        ),
        LossGradient {
            network: ParamGradient(grad),
            physics,
        },
    ))
}
