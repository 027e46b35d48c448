//! Dense tanh network with exact time derivatives.
//!
//! The input is `(t, p)` in normalized coordinates. Every neuron carries the
//! triple `(value, ∂/∂t, ∂²/∂t²)` through the forward pass, using
//! `tanh' = 1 − tanh²` and `tanh'' = −2·tanh·(1 − tanh²)`. A reverse sweep over
//! that extended graph then yields parameter gradients of any linear
//! combination of `u`, `u_t` and `u_tt` in a single pass, for a whole batch
//! of inputs at once.
//!
//! Parameters live in one flat vector in canonical order: layer by layer, the
//! weight matrix row-major (`W[out][in]`) followed by the bias vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Network input width: normalized time and normalized power.
pub const INPUT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    values: Vec<f64>,
}

/// Network outputs and their first and second time derivatives, one entry per
/// output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueAndTimeDerivs {
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
    pub u_tt: Vec<f64>,
}

/// A gradient over all network parameters in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Gradients of `u`, `u_t` and `u_tt` for one output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDerivGradients {
    pub u: ParamGradient,
    pub u_t: ParamGradient,
    pub u_tt: ParamGradient,
}

fn validate_layers(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArgument(
            "a network needs at least an input and an output layer".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must be positive: {layer_sizes:?}"
        )));
    }
    if layer_sizes[0] != INPUT_DIM {
        return Err(Error::InvalidArgument(format!(
            "input layer must have {INPUT_DIM} neurons (t, p), got {}",
            layer_sizes[0]
        )));
    }
    Ok(())
}

/// Total parameter count `Σ (n_in·n_out + n_out)`.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Scaled-uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`,
/// zero biases.
pub fn init_params(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    validate_layers(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(param_count(layer_sizes));
    for w in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)));
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    Ok(MlpParams {
        layer_sizes: layer_sizes.to_vec(),
        values,
    })
}

impl MlpParams {
    /// Builds a network from a flat parameter vector in canonical order.
    pub fn from_flat(layer_sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        validate_layers(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} parameters for {layer_sizes:?}, got {}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameter".into()));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            values,
        })
    }

    /// All-zero network of the given shape.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::from_flat(layer_sizes, vec![0.0; param_count(layer_sizes)])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Offset of layer `l`'s weight block (`l` counts affine maps from 0).
    pub fn weight_offset(&self, l: usize) -> usize {
        param_count(&self.layer_sizes[..=l])
    }

    /// Offset of layer `l`'s bias block.
    pub fn bias_offset(&self, l: usize) -> usize {
        self.weight_offset(l) + self.layer_sizes[l] * self.layer_sizes[l + 1]
    }

    /// Row-major weight matrix of affine map `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let start = self.weight_offset(l);
        &self.values[start..start + self.layer_sizes[l] * self.layer_sizes[l + 1]]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        let start = self.bias_offset(l);
        &self.values[start..start + self.layer_sizes[l + 1]]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let start = self.weight_offset(l);
        let n = self.layer_sizes[l] * self.layer_sizes[l + 1];
        &mut self.values[start..start + n]
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        let start = self.bias_offset(l);
        let n = self.layer_sizes[l + 1];
        &mut self.values[start..start + n]
    }
}

/// Plain affine–tanh forward pass.
pub fn forward(params: &MlpParams, t: f64, p: f64) -> Vec<f64> {
    let width = params.layer_sizes.iter().copied().max().unwrap_or(0);
    let mut act = Vec::with_capacity(width);
    let mut next = Vec::with_capacity(width);
    act.extend([t, p]);
    let n_layers = params.n_layers();
    for l in 0..n_layers {
        let n_in = params.layer_sizes[l];
        let w = params.weights(l);
        let hidden = l + 1 < n_layers;
        next.clear();
        next.extend_from_slice(params.biases(l));
        // Same per-neuron summation order as `Evaluator::forward`, so both
        // agree bitwise; neurons accumulate independently.
        for (j, &xj) in act.iter().enumerate() {
            for (i, z) in next.iter_mut().enumerate() {
                *z += w[i * n_in + j] * xj;
            }
        }
        if hidden {
            next.iter_mut().for_each(|z| *z = z.tanh());
        }
        std::mem::swap(&mut act, &mut next);
    }
    act
}

/// Value plus exact first and second derivatives in the `t` input.
pub fn forward_with_time_derivs(params: &MlpParams, t: f64, p: f64) -> ValueAndTimeDerivs {
    let mut eval = Evaluator::new(params, 1);
    eval.forward(&[(t, p)]);
    let outs: Vec<_> = (0..params.n_outputs()).map(|k| eval.output(k, 0)).collect();
    ValueAndTimeDerivs {
        u: outs.iter().map(|o| o.0).collect(),
        u_t: outs.iter().map(|o| o.1).collect(),
        u_tt: outs.iter().map(|o| o.2).collect(),
    }
}

/// Gradients of `u`, `u_t` and `u_tt` of output neuron `output` with respect
/// to every parameter.
pub fn param_gradients(params: &MlpParams, t: f64, p: f64, output: usize) -> TimeDerivGradients {
    assert!(output < params.n_outputs(), "output index out of range");
    let mut eval = Evaluator::new(params, 1);
    eval.forward(&[(t, p)]);
    let n_out = params.n_outputs();
    let mut one = |k: usize| {
        let mut seeds = vec![[0.0; 3]; n_out];
        seeds[output][k] = 1.0;
        let mut grad = vec![0.0; params.len()];
        eval.backward(&seeds, &mut grad);
        ParamGradient(grad)
    };
    TimeDerivGradients {
        u: one(0),
        u_t: one(1),
        u_tt: one(2),
    }
}

/// Reusable buffers for forward/backward sweeps over a batch of inputs.
///
/// Buffers are neuron-major (`buf[neuron * cap + point]`) so the inner loops
/// run over points. `act*` hold post-activation triples for every layer
/// including the input; `pre1`/`pre2` hold the pre-activation derivatives
/// the reverse sweep through tanh needs.
#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub struct Evaluator<'a> {
    params: &'a MlpParams,
    offsets: Vec<usize>,
    cap: usize,
    len: usize,
    act: Vec<f64>,
    act1: Vec<f64>,
    act2: Vec<f64>,
    pre1: Vec<f64>,
    pre2: Vec<f64>,
    bar: [Vec<f64>; 3],
    next_bar: [Vec<f64>; 3],
}

impl<'a> Evaluator<'a> {
    /// Evaluator for batches of at most `cap` points.
    pub fn new(params: &'a MlpParams, cap: usize) -> Self {
        let cap = cap.max(1);
        let mut offsets = Vec::with_capacity(params.layer_sizes.len() + 1);
        let mut total = 0;
        for &n in &params.layer_sizes {
            offsets.push(total);
            total += n;
        }
        offsets.push(total);
        let widest = *params.layer_sizes.iter().max().unwrap();
        let buf = || vec![0.0; widest * cap];
        Self {
            params,
            offsets,
            cap,
            len: 0,
            act: vec![0.0; total * cap],
            act1: vec![0.0; total * cap],
            act2: vec![0.0; total * cap],
            pre1: vec![0.0; total * cap],
            pre2: vec![0.0; total * cap],
            bar: [buf(), buf(), buf()],
            next_bar: [buf(), buf(), buf()],
        }
    }

    pub fn params(&self) -> &MlpParams {
        self.params
    }

    /// Number of points in the current batch.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Runs the extended forward pass on `inputs = [(t, p), …]`.
    pub fn forward(&mut self, inputs: &[(f64, f64)]) {
        assert!(inputs.len() <= self.cap, "batch larger than evaluator capacity");
        let params = self.params;
        let n = inputs.len();
        let cap = self.cap;
        self.len = n;
        for (b, &(t, p)) in inputs.iter().enumerate() {
            self.act[b] = t;
            self.act[cap + b] = p;
        }
        self.act1[..n].fill(1.0);
        self.act1[cap..cap + n].fill(0.0);
        self.act2[..n].fill(0.0);
        self.act2[cap..cap + n].fill(0.0);

        let n_layers = params.n_layers();
        for l in 0..n_layers {
            let n_in = params.layer_sizes[l];
            let n_out = params.layer_sizes[l + 1];
            let (in_off, out_off) = (self.offsets[l], self.offsets[l + 1]);
            let w = params.weights(l);
            let bias = params.biases(l);
            let hidden = l + 1 < n_layers;

            // Inputs and outputs of a layer occupy disjoint neuron ranges.
            let (a_in, a_out) = self.act.split_at_mut(out_off * cap);
            let (a1_in, a1_out) = self.act1.split_at_mut(out_off * cap);
            let (a2_in, a2_out) = self.act2.split_at_mut(out_off * cap);
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let z = &mut a_out[i * cap..i * cap + n];
                let z1 = &mut a1_out[i * cap..i * cap + n];
                let z2 = &mut a2_out[i * cap..i * cap + n];
                z.fill(bias[i]);
                z1.fill(0.0);
                z2.fill(0.0);
                for (j, &wij) in row.iter().enumerate() {
                    let k = (in_off + j) * cap;
                    let (x, x1, x2) = (&a_in[k..k + n], &a1_in[k..k + n], &a2_in[k..k + n]);
                    axpy(wij, x, z);
                    axpy(wij, x1, z1);
                    axpy(wij, x2, z2);
                }
                let k = (out_off + i) * cap;
                self.pre1[k..k + n].copy_from_slice(z1);
                self.pre2[k..k + n].copy_from_slice(z2);
                if hidden {
                    for b in 0..n {
                        let a = z[b].tanh();
                        let s = 1.0 - a * a;
                        z[b] = a;
                        z2[b] = s * z2[b] - 2.0 * a * s * z1[b] * z1[b];
                        z1[b] *= s;
                    }
                }
            }
        }
    }

    /// `(u, u_t, u_tt)` of output `k` at batch point `b`, in normalized time.
    #[inline]
    pub fn output(&self, k: usize, b: usize) -> (f64, f64, f64) {
        let idx = (self.offsets[self.params.n_layers()] + k) * self.cap + b;
        (self.act[idx], self.act1[idx], self.act2[idx])
    }

    /// Adds `∂/∂θ Σ_b Σ_k (s0·u_k + s1·u_t,k + s2·u_tt,k)` into `grad`, where
    /// `seeds[b * n_outputs + k] = [s0, s1, s2]`. Must follow `forward`.
    pub fn backward(&mut self, seeds: &[[f64; 3]], grad: &mut [f64]) {
        let params = self.params;
        let n_layers = params.n_layers();
        let n_outputs = params.n_outputs();
        let (n, cap) = (self.len, self.cap);
        assert_eq!(seeds.len(), n * n_outputs);
        assert_eq!(grad.len(), params.len());

        for (idx, s) in seeds.iter().enumerate() {
            let (b, k) = (idx / n_outputs, idx % n_outputs);
            for c in 0..3 {
                self.bar[c][k * cap + b] = s[c];
            }
        }

        for l in (0..n_layers).rev() {
            let n_in = params.layer_sizes[l];
            let n_out = params.layer_sizes[l + 1];
            let (in_off, out_off) = (self.offsets[l], self.offsets[l + 1]);
            let [g0, g1, g2] = &mut self.bar;

            // Turn post-activation adjoints into pre-activation adjoints.
            if l + 1 < n_layers {
                for i in 0..n_out {
                    let k = (out_off + i) * cap;
                    let r = i * cap..i * cap + n;
                    let (g0, g1, g2) = (&mut g0[r.clone()], &mut g1[r.clone()], &mut g2[r]);
                    let a = &self.act[k..k + n];
                    let z1 = &self.pre1[k..k + n];
                    let z2 = &self.pre2[k..k + n];
                    for b in 0..n {
                        let s = 1.0 - a[b] * a[b];
                        let two_as = 2.0 * a[b] * s;
                        let (h0, h1, h2) = (g0[b], g1[b], g2[b]);
                        g0[b] = s * h0 - two_as * z1[b] * h1
                            + (-two_as * z2[b] - 2.0 * z1[b] * z1[b] * s * (s - 2.0 * a[b] * a[b]))
                                * h2;
                        g1[b] = s * h1 - 2.0 * two_as * z1[b] * h2;
                        g2[b] = s * h2;
                    }
                }
            }

            let w_off = params.weight_offset(l);
            let b_off = w_off + n_in * n_out;
            for i in 0..n_out {
                let r = i * cap..i * cap + n;
                let (h0, h1, h2) = (&g0[r.clone()], &g1[r.clone()], &g2[r]);
                grad[b_off + i] += h0.iter().sum::<f64>();
                let gw = &mut grad[w_off + i * n_in..w_off + (i + 1) * n_in];
                for (j, gwj) in gw.iter_mut().enumerate() {
                    let k = (in_off + j) * cap;
                    let (x, x1, x2) = (&self.act[k..k + n], &self.act1[k..k + n], &self.act2[k..k + n]);
                    *gwj += dot(h0, x) + dot(h1, x1) + dot(h2, x2);
                }
            }

            if l > 0 {
                let w = params.weights(l);
                let [n0, n1, n2] = &mut self.next_bar;
                for j in 0..n_in {
                    let r = j * cap..j * cap + n;
                    n0[r.clone()].fill(0.0);
                    n1[r.clone()].fill(0.0);
                    n2[r].fill(0.0);
                }
                for i in 0..n_out {
                    let r = i * cap..i * cap + n;
                    let (h0, h1, h2) = (&g0[r.clone()], &g1[r.clone()], &g2[r]);
                    for j in 0..n_in {
                        let wij = w[i * n_in + j];
                        let r = j * cap..j * cap + n;
                        let (o0, o1, o2) = (&mut n0[r.clone()], &mut n1[r.clone()], &mut n2[r]);
                        axpy(wij, h0, o0);
                        axpy(wij, h1, o1);
                        axpy(wij, h2, o2);
                    }
                }
                std::mem::swap(&mut self.bar, &mut self.next_bar);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FORWARD_NET: [usize; 7] = [2, 10, 10, 10, 10, 10, 1];

    #[test]
    fn single_point_forward_matches_batch_bitwise() {
        let p = init_params(&[2, 7, 5, 2], 3).unwrap();
        let inputs: Vec<(f64, f64)> = (0..40).map(|k| (0.025 * k as f64, 1.0 - 0.02 * k as f64)).collect();
        let mut eval = Evaluator::new(&p, inputs.len());
        eval.forward(&inputs);
        for (b, &(t, x)) in inputs.iter().enumerate() {
            let u = forward(&p, t, x);
            for (k, &uk) in u.iter().enumerate() {
                assert_eq!(uk.to_bits(), eval.output(k, b).0.to_bits());
            }
        }
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let p = init_params(&[2, 1], 7).unwrap();
        assert_eq!(p.len(), 3);
        let bound = 2f64.sqrt();
        assert!(p.weights(0).iter().all(|w| w.abs() <= bound));
        assert_eq!(p.biases(0), &[0.0]);
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(&FORWARD_NET, 3).unwrap(), init_params(&FORWARD_NET, 3).unwrap());
        assert_ne!(init_params(&FORWARD_NET, 3).unwrap(), init_params(&FORWARD_NET, 4).unwrap());
    }

    #[test]
    fn forward_architecture_parameter_count() {
        // 2·10+10 + 4·(10·10+10) + 10·1+1
        assert_eq!(param_count(&FORWARD_NET), 481);
        assert_eq!(init_params(&FORWARD_NET, 0).unwrap().len(), 481);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(init_params(&[2, 0, 1], 0).is_err());
        assert!(init_params(&[2], 0).is_err());
        assert!(init_params(&[3, 4, 1], 0).is_err());
        assert!(MlpParams::from_flat(&[2, 1], vec![0.0; 2]).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&FORWARD_NET).unwrap();
        assert_eq!(forward(&p, 0.3, 0.8), vec![0.0]);
        let d = forward_with_time_derivs(&p, 0.3, 0.8);
        assert_eq!((d.u[0], d.u_t[0], d.u_tt[0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn affine_network() {
        let p = MlpParams::from_flat(&[2, 1], vec![0.7, -1.3, 0.25]).unwrap();
        let (t, x) = (0.4, 0.9);
        let expected = 0.7 * t - 1.3 * x + 0.25;
        assert!((forward(&p, t, x)[0] - expected).abs() < 1e-15);
        let d = forward_with_time_derivs(&p, t, x);
        assert!((d.u[0] - expected).abs() < 1e-15);
        assert_eq!(d.u_t[0], 0.7);
        assert_eq!(d.u_tt[0], 0.0);
    }

    #[test]
    fn tiny_hidden_network_matches_hand_evaluation() {
        // [2, 1, 1]: u = v·tanh(a·t + b·p + c) + e
        let (a, b, c, v, e) = (0.8, -0.5, 0.1, 1.7, -0.2);
        let p = MlpParams::from_flat(&[2, 1, 1], vec![a, b, c, v, e]).unwrap();
        let (t, x) = (0.35, 0.6);
        let h = (a * t + b * x + c).tanh();
        let s = 1.0 - h * h;
        assert!((forward(&p, t, x)[0] - (v * h + e)).abs() < 1e-12);
        let d = forward_with_time_derivs(&p, t, x);
        assert!((d.u[0] - (v * h + e)).abs() < 1e-12);
        assert!((d.u_t[0] - v * s * a).abs() < 1e-12);
        assert!((d.u_tt[0] - v * (-2.0 * h * s) * a * a).abs() < 1e-12);
    }

    #[test]
    fn output_bias_gradient_is_one() {
        let p = init_params(&FORWARD_NET, 11).unwrap();
        let g = param_gradients(&p, 0.2, 0.4, 0);
        let last_bias = p.bias_offset(p.n_layers() - 1);
        assert_eq!(g.u.0[last_bias], 1.0);
        assert_eq!(g.u_t.0[last_bias], 0.0);
        assert_eq!(g.u_tt.0[last_bias], 0.0);
    }

    #[test]
    fn affine_network_gradients() {
        let p = MlpParams::from_flat(&[2, 1], vec![0.7, -1.3, 0.25]).unwrap();
        let (t, x) = (0.4, 0.9);
        let g = param_gradients(&p, t, x, 0);
        assert_eq!(g.u.0, vec![t, x, 1.0]);
        assert_eq!(g.u_t.0, vec![1.0, 0.0, 0.0]);
        assert!(g.u_tt.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_length_is_input_independent() {
        let p = init_params(&[2, 4, 3, 2], 5).unwrap();
        for &(t, x) in &[(0.0, 0.0), (1.0, -3.0), (100.0, 0.5)] {
            let g = param_gradients(&p, t, x, 1);
            assert_eq!(g.u.0.len(), p.len());
            assert_eq!(g.u_tt.0.len(), p.len());
        }
    }

    #[test]
    fn backward_is_linear_in_seeds() {
        let p = init_params(&[2, 5, 5, 2], 9).unwrap();
        let mut ev = Evaluator::new(&p, 1);
        ev.forward(&[(0.3, 0.7)]);
        let seeds = [[0.3, -1.1, 0.5], [2.0, 0.1, -0.4]];
        let mut combined = vec![0.0; p.len()];
        ev.backward(&seeds, &mut combined);
        let mut by_parts = vec![0.0; p.len()];
        for k in 0..2 {
            let g = param_gradients(&p, 0.3, 0.7, k);
            for (i, v) in by_parts.iter_mut().enumerate() {
                *v += seeds[k][0] * g.u.0[i] + seeds[k][1] * g.u_t.0[i] + seeds[k][2] * g.u_tt.0[i];
            }
        }
        for (a, b) in combined.iter().zip(&by_parts) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
