//! Full-batch training of the surrogate, in forward mode (known physics) or
//! identification mode (inertia and damping learned with the network).

mod adam;
pub mod lbfgs;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use crate::checkpoint::{restore, restore_as, save as checkpoint};
use crate::dataset::{CollocationPoint, Domain, TrainingPoint};
use crate::error::{Error, Result};
use crate::mlp::init_params;
use crate::pinn::{self, LossReport, OutputMode, PinnModel, Trainable};
use crate::swing::SwingParams;
pub use adam::Adam;
pub use lbfgs::LbfgsConfig;

/// Lower bound enforced on a trainable inertia after every step.
pub const MIN_INERTIA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Forward,
    Identify,
}

/// Staircase exponential decay: `initial · factor^⌊k / every⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRate {
    pub initial: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for LearningRate {
    fn default() -> Self {
        Self {
            initial: 1e-3,
            decay_factor: 0.5,
            decay_every: 10_000,
        }
    }
}

impl LearningRate {
    pub fn at(&self, iteration: usize) -> f64 {
        let k = iteration / self.decay_every.max(1);
        self.initial * self.decay_factor.powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Convergence {
    /// Stop once the gradient infinity-norm drops below this.
    pub grad_tol: f64,
    /// Stop when the best loss improved by less than `plateau_tol` over the
    /// last `plateau_window` iterations.
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            plateau_window: 1_000,
            plateau_tol: 1e-12,
        }
    }
}

/// Initial values for the physics parameters learned in identification mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsGuess {
    pub m: f64,
    pub d: f64,
}

impl Default for PhysicsGuess {
    fn default() -> Self {
        Self { m: 0.25, d: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub learning_rate: LearningRate,
    pub seed: u64,
    pub convergence: Convergence,
    pub mode: TrainMode,
    pub output: OutputMode,
    /// Quasi-Newton refinement after the first-order phase; off when `None`.
    pub refine: Option<LbfgsConfig>,
    /// Loss above this (or non-finite) aborts training.
    pub divergence_threshold: f64,
    pub log_every: usize,
    pub init_guess: PhysicsGuess,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            learning_rate: LearningRate::default(),
            seed: 1,
            convergence: Convergence::default(),
            mode: TrainMode::Forward,
            output: OutputMode::Single,
            refine: None,
            divergence_threshold: 1e6,
            log_every: 100,
            init_guess: PhysicsGuess::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.learning_rate.initial > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mse_u: f64,
    pub mse_f: f64,
    pub total: f64,
    pub m: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    GradientTolerance,
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identified {
    pub m: f64,
    pub d: f64,
    pub m_rel_error: Option<f64>,
    pub d_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<HistoryRow>,
    pub initial: LossReport,
    #[serde(rename = "final")]
    pub final_loss: LossReport,
    pub wall_seconds: f64,
    /// First-order parameter updates performed.
    pub iterations: usize,
    pub refine_iterations: usize,
    pub stop: StopReason,
    pub identified: Option<Identified>,
}

fn project(x: &mut [f64], n_net: usize, trainable: Trainable) {
    let mut k = n_net;
    if trainable.m {
        x[k] = x[k].max(MIN_INERTIA);
        k += 1;
    }
    if trainable.d {
        x[k] = x[k].max(0.0);
    }
}

fn pack(model: &PinnModel) -> Vec<f64> {
    let mut x = model.mlp.as_slice().to_vec();
    if model.trainable.m {
        x.push(model.params.m);
    }
    if model.trainable.d {
        x.push(model.params.d);
    }
    x
}

fn unpack(model: &mut PinnModel, x: &[f64]) {
    let n = model.mlp.len();
    model.mlp.as_mut_slice().copy_from_slice(&x[..n]);
    let mut k = n;
    if model.trainable.m {
        model.params.m = x[k];
        k += 1;
    }
    if model.trainable.d {
        model.params.d = x[k];
    }
}

fn objective(
    model: &PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
) -> Result<(LossReport, Vec<f64>)> {
    let (report, grad) = pinn::loss_and_gradient(model, training, collocation)?;
    let mut g = grad.network.0;
    if model.trainable.m {
        g.push(grad.physics.m);
    }
    if model.trainable.d {
        g.push(grad.physics.d);
    }
    Ok((report, g))
}

fn history_row(iteration: usize, r: &LossReport, model: &PinnModel) -> HistoryRow {
    HistoryRow {
        iteration,
        mse_u: r.mse_u,
        mse_f: r.mse_f,
        total: r.total,
        m: model.params.m,
        d: model.params.d,
    }
}

/// Optimizes `model` in place of a fresh initialization. The returned model
/// is the best iterate seen, so its loss never exceeds the initial loss.
pub fn train(
    model: PinnModel,
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
    config: &TrainConfig,
) -> Result<(PinnModel, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let n_net = model.mlp.len();
    let trainable = model.trainable;
    let diverged = |l: &LossReport| !l.total.is_finite() || l.total > config.divergence_threshold;

    let mut current = model;
    let mut x = pack(&current);
    project(&mut x, n_net, trainable);
    unpack(&mut current, &x);

    let mut opt = Adam::new(x.len());
    let mut history = Vec::new();
    let mut best: Option<(LossReport, PinnModel)> = None;
    // Best total loss after each evaluation, for the plateau test.
    let mut best_trace: Vec<f64> = Vec::new();
    let mut initial = None;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let log_every = config.log_every.max(1);
    let mut last_row;

    loop {
        let (report, grad) = objective(&current, training, collocation)?;
        last_row = Some(history_row(iterations, &report, &current));
        if diverged(&report) {
            return Err(divergence(iterations, report.total, best, current));
        }
        initial.get_or_insert(report);
        if best.as_ref().map_or(true, |(b, _)| report.total < b.total) {
            best = Some((report, current.clone()));
        }
        let best_total = best.as_ref().unwrap().0.total;
        best_trace.push(best_total);

        let last = iterations == config.max_iterations;
        if iterations % log_every == 0 || last {
            history.push(history_row(iterations, &report, &current));
        }
        if last {
            break;
        }
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < config.convergence.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let window = config.convergence.plateau_window;
        if window > 0 && best_trace.len() > window {
            let before = best_trace[best_trace.len() - 1 - window];
            if before - best_total < config.convergence.plateau_tol {
                stop = StopReason::Plateau;
                break;
            }
        }

        opt.update(&mut x, &grad, config.learning_rate.at(iterations));
        project(&mut x, n_net, trainable);
        unpack(&mut current, &x);
        iterations += 1;
    }
    if history.last().map(|h| h.iteration) != Some(iterations) {
        history.extend(last_row);
    }

    let (mut best_report, mut best_model) = best.expect("at least one evaluation");
    let mut refine_iterations = 0;

    if let Some(refine) = &config.refine {
        let mut scratch = best_model.clone();
        let mut last_good: (LossReport, PinnModel) = (best_report, best_model.clone());
        let mut refine_err = None;
        let outcome = lbfgs::minimize(
            refine,
            pack(&best_model),
            |xv| {
                unpack(&mut scratch, xv);
                let (r, g) = objective(&scratch, training, collocation)?;
                // Divergent trial points are rejected by the line search.
                let value = if diverged(&r) { f64::INFINITY } else { r.total };
                Ok((value, g))
            },
            |xv| project(xv, n_net, trainable),
            |it, xv, _| {
                let mut m = best_model.clone();
                unpack(&mut m, xv);
                match pinn::loss(&m, training, collocation) {
                    Ok(r) => {
                        if (iterations + it) % log_every == 0 {
                            history.push(history_row(iterations + it, &r, &m));
                        }
                        if r.total < last_good.0.total {
                            last_good = (r, m);
                        }
                        true
                    }
                    Err(e) => {
                        refine_err = Some(e);
                        false
                    }
                }
            },
        )?;
        if let Some(e) = refine_err {
            return Err(e);
        }
        refine_iterations = outcome.iterations;
        if last_good.0.total < best_report.total {
            (best_report, best_model) = last_good;
        }
        history.push(history_row(iterations + refine_iterations, &best_report, &best_model));
    }

    let identified = (trainable.count() > 0).then(|| Identified {
        m: best_model.params.m,
        d: best_model.params.d,
        m_rel_error: None,
        d_rel_error: None,
    });

    Ok((
        best_model,
        TrainReport {
            history,
            initial: initial.unwrap(),
            final_loss: best_report,
            wall_seconds: start.elapsed().as_secs_f64(),
            iterations,
            refine_iterations,
            stop,
            identified,
        },
    ))
}

fn divergence(
    iteration: usize,
    loss: f64,
    best: Option<(LossReport, PinnModel)>,
    current: PinnModel,
) -> Error {
    // Before the first finite evaluation the starting model is the fallback.
    let last_finite = match best {
        Some((_, m)) => m,
        None => current,
    };
    Error::Diverged {
        iteration,
        loss,
        last_finite: Box::new(last_finite),
    }
}

/// Solves the dynamics with fully known physics parameters.
pub fn train_forward(
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
    layer_sizes: &[usize],
    params: &SwingParams,
    domain: &Domain,
    config: &TrainConfig,
) -> Result<(PinnModel, TrainReport)> {
    if config.mode != TrainMode::Forward {
        return Err(Error::InvalidArgument("train_forward needs mode = forward".into()));
    }
    let model = PinnModel::new(
        init_params(layer_sizes, config.seed)?,
        *params,
        Trainable::NONE,
        *domain,
        config.output,
    )?;
    train(model, training, collocation, config)
}

/// Learns inertia and damping jointly with the network. `known` supplies
/// `b12`, `v1`, `v2`; its `m` and `d` are replaced by `config.init_guess`.
/// Relative errors are reported when `truth = Some((m, d))`.
#[allow(clippy::too_many_arguments)]
pub fn train_identify(
    training: &[TrainingPoint],
    collocation: &[CollocationPoint],
    layer_sizes: &[usize],
    known: &SwingParams,
    domain: &Domain,
    config: &TrainConfig,
    truth: Option<(f64, f64)>,
) -> Result<(PinnModel, TrainReport)> {
    if config.mode != TrainMode::Identify {
        return Err(Error::InvalidArgument("train_identify needs mode = identify".into()));
    }
    let params = SwingParams {
        m: config.init_guess.m,
        d: config.init_guess.d,
        ..*known
    };
    let model = PinnModel::new(
        init_params(layer_sizes, config.seed)?,
        params,
        Trainable::INERTIA_AND_DAMPING,
        *domain,
        config.output,
    )?;
    let (model, mut report) = train(model, training, collocation, config)?;
    if let (Some(id), Some((m, d))) = (report.identified.as_mut(), truth) {
        id.m_rel_error = Some((id.m - m).abs() / m);
        id.d_rel_error = Some((id.d - d).abs() / d);
    }
    Ok((model, report))
}

/// Training history as CSV `iteration,mse_u,mse_f,total[,m,d]`.
pub fn write_history_csv<W: Write>(report: &TrainReport, with_physics: bool, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if with_physics {
        w.write_record(["iteration", "mse_u", "mse_f", "total", "m", "d"])?;
    } else {
        w.write_record(["iteration", "mse_u", "mse_f", "total"])?;
    }
    for h in &report.history {
        let mut rec = vec![
            h.iteration.to_string(),
            fmt_f64(h.mse_u),
            fmt_f64(h.mse_f),
            fmt_f64(h.total),
        ];
        if with_physics {
            rec.push(fmt_f64(h.m));
            rec.push(fmt_f64(h.d));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip decimal, as used in every output file.
pub(crate) fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
