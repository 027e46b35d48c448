//! Error metrics, numerical frequency recovery and the integrator versus
//! surrogate timing study.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pinn::{self, PinnModel};
use crate::swing::{self, State, SwingParams, Trajectory};

/// Speedups reported in the original study for the full grid and for a
/// single-instant query.
pub const REFERENCE_GRID_SPEEDUP: f64 = 28.0;
pub const REFERENCE_INSTANT_SPEEDUP: f64 = 87.0;

const WARM_UP: usize = 3;
const MIN_REPETITIONS: usize = 10;

/// `‖pred − exact‖₂ / ‖exact‖₂`.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> Result<f64> {
    if pred.len() != exact.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions, {} reference values",
            pred.len(),
            exact.len()
        )));
    }
    if exact.is_empty() {
        return Err(Error::EmptyInput("reference vector"));
    }
    let (num, den) = pred
        .iter()
        .zip(exact)
        .fold((0.0, 0.0), |(n, d), (p, e)| (n + (p - e) * (p - e), d + e * e));
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((num / den).sqrt())
}

/// Frequency from a uniformly sampled angle series: forward differences,
/// with a backward difference at the last sample.
pub fn recover_omega(delta: &[f64], h: f64) -> Result<Vec<f64>> {
    if delta.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "frequency recovery needs at least 2 samples, got {}",
            delta.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    let mut omega: Vec<f64> = delta.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    omega.push(*omega.last().unwrap());
    Ok(omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub p1: f64,
    pub l2_delta: f64,
    /// Frequency recovered by differencing the predicted angle.
    pub l2_omega: f64,
    /// Frequency taken from the model directly.
    pub l2_omega_model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub l2_delta: f64,
    pub l2_omega: f64,
    pub l2_omega_model: f64,
    pub trajectories: Vec<TrajectoryError>,
    /// `p1` of the trajectories with the lowest and highest angle error.
    pub best_p1: f64,
    pub worst_p1: f64,
    /// Grid samples outside the model's training box.
    pub extrapolated_points: usize,
    pub extrapolation: bool,
}

struct TrajectoryEval {
    error: TrajectoryError,
    pred_delta: Vec<f64>,
    pred_omega: Vec<f64>,
    model_omega: Vec<f64>,
    extrapolated: usize,
}

/// Step of a uniformly sampled trajectory.
fn sample_step(traj: &Trajectory) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "trajectory at p1 = {} has fewer than 2 samples",
            traj.p1
        )));
    }
    Ok(traj.times[1] - traj.times[0])
}

fn eval_trajectory(model: &PinnModel, traj: &Trajectory) -> Result<TrajectoryEval> {
    let h = sample_step(traj)?;
    let points: Vec<(f64, f64)> = traj.times.iter().map(|&t| (t, traj.p1)).collect();
    let (pred_delta, model_omega): (Vec<f64>, Vec<f64>) =
        pinn::predict_batch(model, &points).into_iter().unzip();
    let pred_omega = recover_omega(&pred_delta, h)?;
    let delta: Vec<f64> = traj.deltas().collect();
    let omega: Vec<f64> = traj.omegas().collect();
    let extrapolated = points
        .iter()
        .filter(|&&(t, p)| model.is_extrapolation(t, p))
        .count();
    Ok(TrajectoryEval {
        error: TrajectoryError {
            p1: traj.p1,
            l2_delta: relative_l2(&pred_delta, &delta)?,
            l2_omega: relative_l2(&pred_omega, &omega)?,
            l2_omega_model: relative_l2(&model_omega, &omega)?,
        },
        pred_delta,
        pred_omega,
        model_omega,
        extrapolated,
    })
}

/// Per-trajectory and pooled relative errors of `model` against `grid`.
pub fn evaluate_model(model: &PinnModel, grid: &[Trajectory]) -> Result<EvalReport> {
    evaluate_model_with(model, grid, Execution::default())
}

pub fn evaluate_model_with(
    model: &PinnModel,
    grid: &[Trajectory],
    exec: Execution,
) -> Result<EvalReport> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("evaluation grid"));
    }
    let evals = par::map(grid, exec, |traj| eval_trajectory(model, traj))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let pooled = |f: &dyn Fn(&TrajectoryEval) -> &Vec<f64>, g: &dyn Fn(&State) -> f64| {
        let pred: Vec<f64> = evals.iter().flat_map(|e| f(e).iter().copied()).collect();
        let exact: Vec<f64> = grid.iter().flat_map(|t| t.states.iter().map(g)).collect();
        relative_l2(&pred, &exact)
    };
    let l2_delta = pooled(&|e| &e.pred_delta, &|s| s.delta)?;
    let l2_omega = pooled(&|e| &e.pred_omega, &|s| s.omega)?;
    let l2_omega_model = pooled(&|e| &e.model_omega, &|s| s.omega)?;

    let trajectories: Vec<TrajectoryError> = evals.iter().map(|e| e.error).collect();
    let rank = |a: &TrajectoryError, b: &TrajectoryError| {
        a.l2_delta.total_cmp(&b.l2_delta).then(a.p1.total_cmp(&b.p1))
    };
    let best = trajectories.iter().min_by(|a, b| rank(a, b)).unwrap();
    // Highest error; ties go to the lowest p1.
    let worst = trajectories
        .iter()
        .min_by(|a, b| b.l2_delta.total_cmp(&a.l2_delta).then(a.p1.total_cmp(&b.p1)))
        .unwrap();
    let extrapolated_points = evals.iter().map(|e| e.extrapolated).sum();

    Ok(EvalReport {
        l2_delta,
        l2_omega,
        l2_omega_model,
        best_p1: best.p1,
        worst_p1: worst.p1,
        trajectories,
        extrapolated_points,
        extrapolation: extrapolated_points > 0,
    })
}

/// Per-trajectory errors as CSV `p1,l2_delta,l2_omega`.
pub fn write_trajectory_errors_csv<W: Write>(report: &EvalReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["p1", "l2_delta", "l2_omega"])?;
    for e in &report.trajectories {
        w.serialize((e.p1, e.l2_delta, e.l2_omega))?;
    }
    w.flush()?;
    Ok(())
}

/// Prediction next to ground truth as CSV
/// `t,delta_pred,delta_true,omega_pred,omega_true`; `omega_pred` is
/// recovered by differencing the predicted angle.
pub fn write_plot_csv<W: Write>(model: &PinnModel, traj: &Trajectory, writer: W) -> Result<()> {
    let e = eval_trajectory(model, traj)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "delta_pred", "delta_true", "omega_pred", "omega_true"])?;
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        w.serialize((t, e.pred_delta[k], s.delta, e.pred_omega[k], s.omega))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub t_end: f64,
    pub output_step: f64,
    /// Query time for the single-instant comparison.
    pub single_instant: f64,
    pub repetitions: usize,
    /// Surrogate queries timed together per repetition; a single query is too
    /// short for the clock.
    pub queries_per_repetition: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            t_end: 20.0,
            output_step: 0.1,
            single_instant: 10.0,
            repetitions: 15,
            queries_per_repetition: 1000,
        }
    }
}

/// Median wall-clock seconds. Every figure is per unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n_trajectories: usize,
    pub single_instant: f64,
    pub integrator_seconds_per_trajectory: f64,
    pub integrator_seconds_per_grid: f64,
    pub surrogate_seconds_per_grid: f64,
    pub integrator_seconds_to_instant: f64,
    pub surrogate_seconds_per_query: f64,
    pub grid_speedup: f64,
    pub instant_speedup: f64,
    pub reference_grid_speedup: f64,
    pub reference_instant_speedup: f64,
}

fn median_seconds(repetitions: usize, mut run: impl FnMut()) -> f64 {
    for _ in 0..WARM_UP {
        run();
    }
    let mut samples: Vec<f64> = (0..repetitions.max(MIN_REPETITIONS))
        .map(|_| {
            let start = Instant::now();
            run();
            start.elapsed().as_secs_f64()
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Seconds per surrogate query of `δ(t, p1)`, median over repetitions.
pub fn time_surrogate_query(model: &PinnModel, t: f64, p1: f64, spec: &BenchmarkSpec) -> f64 {
    let n = spec.queries_per_repetition.max(1);
    median_seconds(spec.repetitions, || {
        for _ in 0..n {
            black_box(pinn::predict_delta(black_box(model), black_box(t), black_box(p1)));
        }
    }) / n as f64
}

/// Seconds to integrate from `t = 0` to `t_end` with the reference solver.
pub fn time_integration(params: &SwingParams, p1: f64, init: State, t_end: f64, spec: &BenchmarkSpec) -> Result<f64> {
    swing::integrate(params, p1, init, t_end, t_end)?;
    Ok(median_seconds(spec.repetitions, || {
        black_box(swing::integrate(params, black_box(p1), init, t_end, t_end).unwrap());
    }))
}

/// Times the solver against the surrogate on the calling thread: the full
/// grid over `p1_samples`, and a single query at `spec.single_instant`
/// against integrating up to that instant.
pub fn benchmark(
    model: &PinnModel,
    params: &SwingParams,
    init: State,
    p1_samples: &[f64],
    spec: &BenchmarkSpec,
) -> Result<TimingReport> {
    if p1_samples.is_empty() {
        return Err(Error::EmptyInput("benchmark power levels"));
    }
    let times = swing::output_grid(spec.t_end, spec.output_step)?;
    if !(spec.single_instant > 0.0) || !spec.single_instant.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "single_instant must be > 0, got {}",
            spec.single_instant
        )));
    }
    // Fail early rather than inside the timed closure.
    for &p1 in p1_samples {
        swing::integrate(params, p1, init, spec.t_end, spec.output_step)?;
    }

    let integrator_grid = median_seconds(spec.repetitions, || {
        for &p1 in p1_samples {
            black_box(swing::integrate(params, p1, init, spec.t_end, spec.output_step).unwrap());
        }
    });
    let points: Vec<(f64, f64)> = p1_samples
        .iter()
        .flat_map(|&p1| times.iter().map(move |&t| (t, p1)))
        .collect();
    let surrogate_grid = median_seconds(spec.repetitions, || {
        black_box(pinn::predict_batch(black_box(model), &points));
    });

    let p1_mid = p1_samples[p1_samples.len() / 2];
    let integrator_instant = time_integration(params, p1_mid, init, spec.single_instant, spec)?;
    let surrogate_query = time_surrogate_query(model, spec.single_instant, p1_mid, spec);

    let n = p1_samples.len();
    Ok(TimingReport {
        n_trajectories: n,
        single_instant: spec.single_instant,
        integrator_seconds_per_trajectory: integrator_grid / n as f64,
        integrator_seconds_per_grid: integrator_grid,
        surrogate_seconds_per_grid: surrogate_grid,
        integrator_seconds_to_instant: integrator_instant,
        surrogate_seconds_per_query: surrogate_query,
        grid_speedup: integrator_grid / surrogate_grid,
        instant_speedup: integrator_instant / surrogate_query,
        reference_grid_speedup: REFERENCE_GRID_SPEEDUP,
        reference_instant_speedup: REFERENCE_INSTANT_SPEEDUP,
    })
}
