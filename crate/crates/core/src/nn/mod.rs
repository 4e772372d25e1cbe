//! Fully-connected ReLU Q-network stored as one flat parameter vector.
//!
//! Layer `l` occupies a contiguous `fan_in x fan_out` row-major weight block
//! followed by its `fan_out` bias entries. Hidden layers use ReLU, the output
//! layer is linear and has one unit per action.

mod hvp;
mod optim;

pub use hvp::hvp_fd;
pub use optim::{Optimizer, OptimizerKind};

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

/// Layer sizes of an MLP: input dim, one or more hidden dims, action count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    sizes: Vec<usize>,
    layers: Vec<LayerLayout>,
    param_count: usize,
}

impl NetworkSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 3 {
            return Err(Error::InvalidSpec(format!(
                "need input, at least one hidden and an output layer, got {} sizes",
                sizes.len()
            )));
        }
        if let Some(pos) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has size 0")));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            layers.push(LayerLayout {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Self {
            sizes,
            layers,
            param_count: offset,
        })
    }

    pub fn mlp(input: usize, hidden: &[usize], actions: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(actions);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn action_count(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Network parameters θ. Cloning is the way to snapshot Q_k.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: Arc<NetworkSpec>,
    values: Vec<f64>,
}

impl NetworkParams {
    /// He-normal weights (variance 2 / fan_in) and zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; spec.param_count];
        for layer in &spec.layers {
            let std = (2.0 / layer.fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let block = &mut values[layer.weight_offset..layer.bias_offset];
            for w in block.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
        Self {
            spec: Arc::new(spec.clone()),
            values,
        }
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            spec: Arc::new(spec.clone()),
            values: vec![0.0; spec.param_count],
        }
    }

    pub fn from_flat(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count {
            return Err(Error::DimensionMismatch {
                expected: spec.param_count,
                got: values.len(),
            });
        }
        Ok(Self {
            spec: Arc::new(spec.clone()),
            values,
        })
    }

    /// Same spec, new values. Cheaper than `from_flat` since the spec is shared.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            spec: Arc::clone(&self.spec),
            values,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let l = &self.spec.layers[layer];
        ArrayView2::from_shape(
            (l.fan_in, l.fan_out),
            &self.values[l.weight_offset..l.bias_offset],
        )
        .expect("layout matches spec")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let l = &self.spec.layers[layer];
        ArrayView1::from(&self.values[l.bias_offset..l.bias_offset + l.fan_out])
    }

    /// Per-layer `(weights, bias)` copies.
    pub fn to_layers(&self) -> Vec<(Array2<f64>, Array1<f64>)> {
        (0..self.spec.num_layers())
            .map(|l| (self.weights(l).to_owned(), self.bias(l).to_owned()))
            .collect()
    }

    pub fn from_layers(spec: &NetworkSpec, layers: &[(Array2<f64>, Array1<f64>)]) -> Result<Self> {
        if layers.len() != spec.num_layers() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_layers(),
                got: layers.len(),
            });
        }
        let mut values = Vec::with_capacity(spec.param_count);
        for (layout, (w, b)) in spec.layers.iter().zip(layers) {
            if w.dim() != (layout.fan_in, layout.fan_out) || b.len() != layout.fan_out {
                return Err(Error::InvalidSpec(format!(
                    "layer shape {:?}/{} does not match {}x{}",
                    w.dim(),
                    b.len(),
                    layout.fan_in,
                    layout.fan_out
                )));
            }
            values.extend(w.iter().copied());
            values.extend(b.iter().copied());
        }
        Ok(Self {
            spec: Arc::new(spec.clone()),
            values,
        })
    }

    /// Q_θ(s, ·) for a single state.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, state.len()), state)
            .expect("contiguous row");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Q-values for every row of `states`, shape `batch x actions`.
    pub fn forward_batch(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(states)?;
        let last = self.spec.num_layers() - 1;
        let mut h = self.affine(0, states);
        for l in 1..=last {
            relu_inplace(h.view_mut());
            h = self.affine(l, h.view());
        }
        Ok(h)
    }

    /// Gradient w.r.t. θ of `sum_ij out_grad[i, j] * Q_θ(states[i], j)`.
    pub fn vjp(&self, states: ArrayView2<'_, f64>, out_grad: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_input(states)?;
        if out_grad.dim() != (states.nrows(), self.spec.action_count()) {
            return Err(Error::DimensionMismatch {
                expected: states.nrows() * self.spec.action_count(),
                got: out_grad.len(),
            });
        }

        // activations[l] is the input to layer l
        let n_layers = self.spec.num_layers();
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        activations.push(states.to_owned());
        for l in 0..n_layers - 1 {
            let mut h = self.affine(l, activations[l].view());
            relu_inplace(h.view_mut());
            activations.push(h);
        }

        let mut grad = vec![0.0; self.values.len()];
        let mut g = out_grad.to_owned();
        for l in (0..n_layers).rev() {
            let layout = self.spec.layers[l];
            let gw = activations[l].t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            let (w_slot, rest) = grad[layout.weight_offset..].split_at_mut(layout.fan_in * layout.fan_out);
            for (dst, src) in w_slot.iter_mut().zip(gw.iter()) {
                *dst = *src;
            }
            rest[..layout.fan_out].copy_from_slice(gb.as_slice().expect("contiguous"));
            if l > 0 {
                let mut prev = g.dot(&self.weights(l).t());
                prev.zip_mut_with(&activations[l], |gi, &ai| {
                    if ai <= 0.0 {
                        *gi = 0.0;
                    }
                });
                g = prev;
            }
        }
        Ok(grad)
    }

    fn affine(&self, layer: usize, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = input.dot(&self.weights(layer));
        out += &self.bias(layer);
        out
    }

    fn check_input(&self, states: ArrayView2<'_, f64>) -> Result<()> {
        if states.ncols() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                got: states.ncols(),
            });
        }
        Ok(())
    }
}

fn relu_inplace(mut h: ArrayViewMut2<'_, f64>) {
    h.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Mean semi-gradient TD direction `(1/|B|) Σ δ_i ∇_θ Q_θ(s_i, a_i)`.
///
/// Adding `α` times this to θ is the DQI update; only the selected action's
/// output receives gradient, and no gradient flows through the bootstrap.
pub fn grad_td_loss(
    params: &NetworkParams,
    states: ArrayView2<'_, f64>,
    actions: &[usize],
    td_errors: &[f64],
) -> Result<Vec<f64>> {
    let n = states.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if actions.len() != n || td_errors.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: actions.len().min(td_errors.len()),
        });
    }
    let n_actions = params.spec().action_count();
    let mut out_grad = Array2::zeros((n, n_actions));
    let scale = 1.0 / n as f64;
    for (i, (&a, &delta)) in actions.iter().zip(td_errors).enumerate() {
        if a >= n_actions {
            return Err(Error::InvalidAction {
                action: a,
                count: n_actions,
            });
        }
        out_grad[[i, a]] = delta * scale;
    }
    params.vjp(states, out_grad.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::mlp(3, &[5, 4], 2).unwrap()
    }

    /// Straight-line re-implementation used as an independent forward oracle.
    fn naive_forward(p: &NetworkParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let layers = p.to_layers();
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut next = vec![0.0; b.len()];
            for j in 0..b.len() {
                let mut acc = b[j];
                for i in 0..h.len() {
                    acc += h[i] * w[[i, j]];
                }
                next[j] = if l + 1 < layers.len() { acc.max(0.0) } else { acc };
            }
            h = next;
        }
        h
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(NetworkSpec::new(vec![4, 2]).is_err());
        assert!(NetworkSpec::new(vec![4, 0, 2]).is_err());
        assert!(NetworkSpec::new(vec![]).is_err());
    }

    #[test]
    fn param_count_two_hidden_64() {
        let spec = NetworkSpec::mlp(4, &[64, 64], 2).unwrap();
        assert_eq!(spec.param_count(), 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert_eq!(spec.param_count(), 4610);
        assert_eq!(NetworkParams::init(&spec, 0).len(), 4610);
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let spec = small_spec();
        let a = NetworkParams::init(&spec, 17);
        let b = NetworkParams::init(&spec, 17);
        assert_eq!(a, b);
        assert_ne!(a, NetworkParams::init(&spec, 18));
        for l in 0..spec.num_layers() {
            assert!(a.bias(l).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn he_variance_for_fan_in_512() {
        let spec = NetworkSpec::mlp(512, &[64], 2).unwrap();
        let target = 2.0 / 512.0;
        let mut total = 0.0;
        for seed in 0..10 {
            let p = NetworkParams::init(&spec, seed);
            let w = p.weights(0);
            let n = w.len() as f64;
            let mean = w.sum() / n;
            total += w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        }
        let var = total / 10.0;
        assert!((var - target).abs() / target < 0.2, "variance {var} vs {target}");
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = NetworkParams::zeros(&small_spec());
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let spec = NetworkSpec::mlp(1, &[1], 1).unwrap();
        // w0 = -1, b0 = 0, w1 = 5, b1 = 0.25
        let p = NetworkParams::from_flat(&spec, vec![-1.0, 0.0, 5.0, 0.25]).unwrap();
        for x in [0.5, 1.0, 10.0] {
            assert_eq!(p.forward(&[x]).unwrap(), vec![0.25]);
        }
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let spec = NetworkSpec::mlp(4, &[16, 8], 3).unwrap();
        let mut p = NetworkParams::init(&spec, 5);
        for (i, v) in p.as_flat_mut().iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f64 - 3.0);
        }
        let xs = [[0.1, -0.3, 0.7, 1.2], [-1.0, 0.0, 0.5, -0.25]];
        for x in xs {
            let got = p.forward(&x).unwrap();
            let want = naive_forward(&p, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let p = NetworkParams::init(&small_spec(), 0);
        assert!(matches!(
            p.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn zero_td_errors_give_zero_gradient() {
        let p = NetworkParams::init(&small_spec(), 1);
        let states = Array2::from_shape_vec((2, 3), vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap();
        let g = grad_td_loss(&p, states.view(), &[0, 1], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let p = NetworkParams::init(&small_spec(), 2);
        let rows = vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6];
        let single = Array2::from_shape_vec((2, 3), rows.clone()).unwrap();
        let doubled = Array2::from_shape_vec((4, 3), [rows.clone(), rows].concat()).unwrap();
        let g1 = grad_td_loss(&p, single.view(), &[0, 1], &[0.3, -1.1]).unwrap();
        let g2 = grad_td_loss(&p, doubled.view(), &[0, 1, 0, 1], &[0.3, -1.1, 0.3, -1.1]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = NetworkParams::init(&small_spec(), 0);
        let states = Array2::<f64>::zeros((0, 3));
        assert!(matches!(grad_td_loss(&p, states.view(), &[], &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn single_transition_gradient_matches_finite_differences() {
        // ½δ(θ)² with the bootstrap target held fixed: ∇ = -δ ∇Q, so the
        // ascent direction δ∇Q is the negative finite-difference gradient.
        let spec = small_spec();
        let p = NetworkParams::init(&spec, 3);
        let s = [0.3, -0.2, 0.9];
        let a = 1;
        let target = 0.75;
        let loss = |theta: &[f64]| {
            let q = NetworkParams::from_flat(&spec, theta.to_vec()).unwrap().forward(&s).unwrap()[a];
            0.5 * (target - q).powi(2)
        };
        let q = p.forward(&s).unwrap()[a];
        let delta = target - q;
        let states = Array2::from_shape_vec((1, 3), s.to_vec()).unwrap();
        let g = grad_td_loss(&p, states.view(), &[a], &[delta]).unwrap();
        let eps = 1e-4;
        let mut theta = p.as_flat().to_vec();
        for i in 0..theta.len() {
            let orig = theta[i];
            theta[i] = orig + eps;
            let up = loss(&theta);
            theta[i] = orig - eps;
            let down = loss(&theta);
            theta[i] = orig;
            let fd = -(up - down) / (2.0 * eps);
            let denom = fd.abs().max(g[i].abs()).max(1e-8);
            assert!((fd - g[i]).abs() / denom < 1e-5, "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    proptest! {
        #[test]
        fn flatten_roundtrip_is_exact(seed in any::<u64>(), h1 in 1usize..12, h2 in 1usize..12) {
            let spec = NetworkSpec::mlp(3, &[h1, h2], 4).unwrap();
            let p = NetworkParams::init(&spec, seed);
            let back = NetworkParams::from_layers(&spec, &p.to_layers()).unwrap();
            prop_assert_eq!(back.as_flat(), p.as_flat());
            let again = NetworkParams::from_flat(&spec, p.as_flat().to_vec()).unwrap();
            prop_assert_eq!(again, p);
        }
    }
}
