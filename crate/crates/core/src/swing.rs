//! Single-machine infinite-bus swing equation and its reference integrator.
//!
//! The model is `m·δ̈ + d·δ̇ + b12·v1·v2·sin(δ) − p1 = 0`, integrated here as the
//! first-order system `δ̇ = ω`, `ω̇ = (p1 − d·ω − b12·v1·v2·sin(δ)) / m` with an
//! adaptive Dormand–Prince 4(5) scheme. Output on the uniform grid comes from
//! the method's quartic continuous extension, so the step sequence is never
//! bent toward the output times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the swing equation, all per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingParams {
    /// Inertia constant.
    pub m: f64,
    /// Damping coefficient.
    pub d: f64,
    /// Susceptance between the machine bus and the infinite bus.
    pub b12: f64,
    pub v1: f64,
    pub v2: f64,
}

impl Default for SwingParams {
    fn default() -> Self {
        Self {
            m: 0.4,
            d: 0.15,
            b12: 0.2,
            v1: 1.0,
            v2: 1.0,
        }
    }
}

impl SwingParams {
    pub fn new(m: f64, d: f64, b12: f64, v1: f64, v2: f64) -> Result<Self> {
        let params = Self { m, d, b12, v1, v2 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.m, self.d, self.b12, self.v1, self.v2]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParams(format!("non-finite entry in {self:?}")));
        }
        let checks = [
            (self.m > 0.0, "m must be > 0"),
            (self.d >= 0.0, "d must be >= 0"),
            (self.b12 > 0.0, "b12 must be > 0"),
            (self.v1 > 0.0, "v1 must be > 0"),
            (self.v2 > 0.0, "v2 must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::InvalidParams(msg.to_string())),
            None => Ok(()),
        }
    }

    /// Electrical coupling `b12·v1·v2`, which is also the pull-out power.
    pub fn coupling(&self) -> f64 {
        self.b12 * self.v1 * self.v2
    }
}

/// Rotor angle (rad) and angular frequency deviation (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub delta: f64,
    pub omega: f64,
}

impl State {
    pub fn new(delta: f64, omega: f64) -> Self {
        Self { delta, omega }
    }

    fn to_array(self) -> [f64; 2] {
        [self.delta, self.omega]
    }

    fn from_array(y: [f64; 2]) -> Self {
        Self::new(y[0], y[1])
    }
}

/// One simulated response for a fixed mechanical power input.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub p1: f64,
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn new(p1: f64, times: Vec<f64>, states: Vec<State>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory needs matching non-empty times/states (got {} and {})",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        Ok(Self { p1, times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn deltas(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.delta)
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.omega)
    }
}

/// Time derivative `(dδ/dt, dω/dt)` of the swing equation.
pub fn swing_rhs(state: State, params: &SwingParams, p1: f64) -> State {
    let accel =
        (p1 - params.d * state.omega - params.coupling() * state.delta.sin()) / params.m;
    State::new(state.omega, accel)
}

/// Stable fixed point `(arcsin(p1 / b12·v1·v2), 0)`.
pub fn equilibrium(params: &SwingParams, p1: f64) -> Result<State> {
    let pull_out = params.coupling();
    if !(p1.abs() <= pull_out) {
        return Err(Error::NoEquilibrium { p1, pull_out });
    }
    Ok(State::new((p1 / pull_out).asin(), 0.0))
}

/// Lyapunov-style energy `½·m·ω² − p1·δ − b12·v1·v2·cos(δ)`; along solutions
/// `dE/dt = −d·ω²`.
pub fn energy(state: State, params: &SwingParams, p1: f64) -> f64 {
    0.5 * params.m * state.omega * state.omega
        - p1 * state.delta
        - params.coupling() * state.delta.cos()
}

/// Step-control settings for [`integrate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; estimated from the problem when `None`.
    pub h_init: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            max_steps: 1_000_000,
            h_init: None,
        }
    }
}

/// Integrates from `init` at `t = 0` to `t_end` with default tolerances and
/// samples the solution on `{0, output_step, …, t_end}`.
pub fn integrate(
    params: &SwingParams,
    p1: f64,
    init: State,
    t_end: f64,
    output_step: f64,
) -> Result<Trajectory> {
    integrate_with(params, p1, init, t_end, output_step, &IntegratorOptions::default())
}

/// Number of grid intervals for `t_end / output_step`, which must be integral
/// up to rounding.
pub fn grid_intervals(t_end: f64, output_step: f64) -> Result<usize> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("t_end must be > 0, got {t_end}")));
    }
    if !(output_step > 0.0) || !output_step.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "output_step must be > 0, got {output_step}"
        )));
    }
    let ratio = t_end / output_step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "output_step {output_step} does not divide t_end {t_end}"
        )));
    }
    Ok(n as usize)
}

/// Uniform output grid `k·output_step`, with the last point pinned to `t_end`.
pub fn output_grid(t_end: f64, output_step: f64) -> Result<Vec<f64>> {
    let n = grid_intervals(t_end, output_step)?;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * output_step).collect();
    times[n] = t_end;
    Ok(times)
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

type Vec2 = [f64; 2];

#[inline]
fn axpy(y: Vec2, terms: &[(f64, Vec2)], h: f64) -> Vec2 {
    let mut out = y;
    for &(c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Coefficients of the quartic dense output on one accepted step.
struct DenseStep {
    t0: f64,
    h: f64,
    r: [Vec2; 5],
}

impl DenseStep {
    fn eval(&self, t: f64) -> Vec2 {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let mut out = [0.0; 2];
        for i in 0..2 {
            let r = |j: usize| self.r[j][i];
            out[i] = r(0) + theta * (r(1) + theta1 * (r(2) + theta * (r(3) + theta1 * r(4))));
        }
        out
    }
}

fn initial_step(
    rhs: &impl Fn(Vec2) -> Vec2,
    y0: Vec2,
    f0: Vec2,
    opts: &IntegratorOptions,
    span: f64,
) -> f64 {
    // Hairer–Nørsett–Wanner starting-step heuristic for a 5th-order method.
    let scale = |y: Vec2, i: usize| opts.atol + opts.rtol * y[i].abs();
    let norm = |v: Vec2, y: Vec2| {
        (((v[0] / scale(y, 0)).powi(2) + (v[1] / scale(y, 1)).powi(2)) / 2.0).sqrt()
    };
    let dnf = norm(f0, y0);
    let dny = norm(y0, y0);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(span);
    let y1 = axpy(y0, &[(1.0, f0)], h);
    let f1 = rhs(y1);
    let der2 = norm([f1[0] - f0[0], f1[1] - f0[1]], y0) / h;
    let der12 = dnf.max(der2);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(1.0 / 5.0)
    };
    (100.0 * h).min(h1).min(span)
}

/// Adaptive Dormand–Prince integration with explicit step-control options.
pub fn integrate_with(
    params: &SwingParams,
    p1: f64,
    init: State,
    t_end: f64,
    output_step: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    params.validate()?;
    if !(init.delta.is_finite() && init.omega.is_finite()) {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }
    let times = output_grid(t_end, output_step)?;

    let rhs = |y: Vec2| swing_rhs(State::from_array(y), params, p1).to_array();

    let mut states = Vec::with_capacity(times.len());
    states.push(init);
    let mut next_out = 1;

    let mut t = 0.0;
    let mut y = init.to_array();
    let mut k1 = rhs(y);
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(&rhs, y, k1, opts, t_end));
    let mut steps = 0usize;
    let mut last_rejected = false;

    while next_out < times.len() {
        if steps >= opts.max_steps {
            return Err(Error::IntegrationFailed { p1, t_last: t });
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::IntegrationFailed { p1, t_last: t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        steps += 1;

        let k2 = rhs(axpy(y, &[(A21, k1)], h));
        let k3 = rhs(axpy(y, &[(A31, k1), (A32, k2)], h));
        let k4 = rhs(axpy(y, &[(A41, k1), (A42, k2), (A43, k3)], h));
        let k5 = rhs(axpy(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], h));
        let k6 = rhs(axpy(
            y,
            &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
            h,
        ));
        let y_new = axpy(
            y,
            &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)],
            h,
        );
        let k7 = rhs(y_new);

        let err_vec = axpy(
            [0.0; 2],
            &[(E1, k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)],
            h,
        );
        let mut err = 0.0;
        for i in 0..2 {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (err_vec[i] / sc).powi(2);
        }
        let err = (err / 2.0).sqrt();

        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }

        let fac = if err == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };

        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            let ydiff = [y_new[0] - y[0], y_new[1] - y[1]];
            let bspl = [h * k1[0] - ydiff[0], h * k1[1] - ydiff[1]];
            let dense = DenseStep {
                t0: t,
                h,
                r: [
                    y,
                    ydiff,
                    bspl,
                    [
                        ydiff[0] - h * k7[0] - bspl[0],
                        ydiff[1] - h * k7[1] - bspl[1],
                    ],
                    axpy(
                        [0.0; 2],
                        &[(D1, k1), (D3, k3), (D4, k4), (D5, k5), (D6, k6), (D7, k7)],
                        h,
                    ),
                ],
            };
            while next_out < times.len() && times[next_out] <= t_new {
                let value = if times[next_out] == t_new {
                    y_new
                } else {
                    dense.eval(times[next_out])
                };
                states.push(State::from_array(value));
                next_out += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            // No growth right after a rejection.
            h *= if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
        } else {
            h *= fac.min(1.0);
            last_rejected = true;
        }
    }

    Ok(Trajectory { p1, times, states })
}
