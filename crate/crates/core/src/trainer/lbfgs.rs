//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    /// Number of stored curvature pairs.
    pub history: usize,
    pub grad_tol: f64,
    /// Stop when the relative loss decrease stays below this for several
    /// consecutive iterations.
    pub rel_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5_000,
            history: 20,
            grad_tol: 1e-9,
            rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    MaxIterations,
    GradientTolerance,
    Stalled,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub stop: LbfgsStop,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` from `x0`.
///
/// `objective(x)` returns the value and gradient; `project` is applied to
/// every trial point (use the identity for unconstrained problems).
/// `on_iter(iteration, x, value)` runs after each accepted step; returning
/// `false` stops the loop.
pub fn minimize<F, P, C>(
    config: &LbfgsConfig,
    x0: Vec<f64>,
    mut objective: F,
    project: P,
    mut on_iter: C,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: Fn(&mut [f64]),
    C: FnMut(usize, &[f64], f64) -> bool,
{
    const C1: f64 = 1e-4;
    const MAX_BACKTRACKS: usize = 40;
    const STALL_PATIENCE: usize = 10;

    let n = x0.len();
    let mut x = x0;
    project(&mut x);
    let (mut fx, mut g) = objective(&x)?;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.history);
    let mut stalled = 0;
    let mut dir = vec![0.0; n];
    let mut alpha_buf = vec![0.0; config.history];

    for iter in 0..config.max_iterations {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.grad_tol {
            return Ok(LbfgsOutcome { x, value: fx, iterations: iter, stop: LbfgsStop::GradientTolerance });
        }

        // Two-loop recursion: dir = −H·g.
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alpha_buf[k];
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Not a descent direction; restart from steepest descent.
            pairs.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial);
            let (ft, gt) = objective(&trial)?;
            if ft.is_finite() && ft <= fx + C1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if pairs.is_empty() {
                return Ok(LbfgsOutcome { x, value: fx, iterations: iter, stop: LbfgsStop::LineSearchFailed });
            }
            pairs.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == config.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let rel = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        stalled = if rel < config.rel_tol { stalled + 1 } else { 0 };
        x = x_new;
        fx = f_new;
        g = g_new;

        if !on_iter(iter + 1, &x, fx) {
            return Ok(LbfgsOutcome { x, value: fx, iterations: iter + 1, stop: LbfgsStop::MaxIterations });
        }
        if stalled >= STALL_PATIENCE {
            return Ok(LbfgsOutcome { x, value: fx, iterations: iter + 1, stop: LbfgsStop::Stalled });
        }
    }
    Ok(LbfgsOutcome {
        x,
        value: fx,
        iterations: config.max_iterations,
        stop: LbfgsStop::MaxIterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Ok((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(
            &LbfgsConfig::default(),
            vec![-1.2, 1.0],
            rosenbrock,
            |_| {},
            |_, _, _| true,
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{out:?}");
        assert!(out.iterations < 200);
    }

    #[test]
    fn respects_projection() {
        // min (x + 1)² subject to x >= 0.
        let out = minimize(
            &LbfgsConfig::default(),
            vec![2.0],
            |x| Ok(((x[0] + 1.0).powi(2), vec![2.0 * (x[0] + 1.0)])),
            |x| x[0] = x[0].max(0.0),
            |_, _, _| true,
        )
        .unwrap();
        assert_eq!(out.x[0], 0.0);
    }
}
