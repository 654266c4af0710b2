//! Minimal dense networks with reverse-mode gradients, written directly
//! against flat parameter vectors so the optimiser can treat a whole network
//! as one array.
//!
//! The layout of [`Mlp::params`] is `[W1, b1, W2, b2, ...]` with each weight
//! matrix stored row-major (`out × in`). Gradients come back in the same
//! layout, which makes [`Adam`] a pure vector-to-vector update.
//!
//! Checkpoints are little-endian binary: magic `MLP1`, `u32` dimension count,
//! the dimensions, two activation codes, then every parameter as an `f64`.
//! Saving and loading an `f64` network is an exact roundtrip.

use crate::Real;
use rand::Rng;
use std::io::{Read as _, Write as _};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown activation code {0}")]
    BadActivation(u8),
    #[error("checkpoint declares no layers")]
    EmptyArchitecture,
    #[error("checkpoint dimension {0} is zero")]
    ZeroWidth(usize),
}

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<R: Real>(self, x: R) -> R {
        match self {
            Activation::Relu => x.max(R::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation. The rectifier uses the
    /// zero subgradient at exactly zero.
    fn derivative<R: Real>(self, pre: R) -> R {
        match self {
            Activation::Relu => {
                if pre > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                R::one() - t * t
            }
            Activation::Identity => R::one(),
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, NetError> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            other => Err(NetError::BadActivation(other)),
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<R> {
    /// Input to each layer; `layer_inputs[0]` is the network input.
    layer_inputs: Vec<Vec<R>>,
    /// Affine outputs before the nonlinearity, one per layer.
    pre_activations: Vec<Vec<R>>,
}

impl<R: Real> ForwardCache<R> {
    pub fn output(&self, output_activation: Activation) -> Vec<R> {
        self.pre_activations
            .last()
            .expect("cache holds at least one layer")
            .iter()
            .map(|&p| output_activation.apply(p))
            .collect()
    }
}

/// Parameter gradients (same layout as [`Mlp::params`]) plus the gradient
/// with respect to the network input.
#[derive(Clone, Debug)]
pub struct Backprop<R> {
    pub grads: Vec<R>,
    pub input_grad: Vec<R>,
}

/// Fully connected feed-forward network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<R> {
    dims: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<R>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl<R: Real> Mlp<R> {
    /// Build a network with uniform `±1/√fan_in` weights and zero biases.
    ///
    /// `dims` lists layer widths input-first, e.g. `[4, 64, 64, 2]`.
    pub fn new(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer in {dims:?}");
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in {
                params.push(R::of(rng.gen_range(-bound..bound)));
            }
            for _ in 0..fan_out {
                params.push(R::zero());
            }
        }
        Self { dims: dims.to_vec(), hidden, output, params }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims nonempty")
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 2 == self.dims.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, input: &[R]) -> Vec<R> {
        self.forward_cache(input).output(self.output)
    }

    /// Network output for a cache produced by [`Self::forward_cache`].
    pub fn output_of(&self, cache: &ForwardCache<R>) -> Vec<R> {
        cache.output(self.output)
    }

    /// Forward pass that keeps every intermediate needed by [`Self::backward`].
    pub fn forward_cache(&self, input: &[R]) -> ForwardCache<R> {
        assert_eq!(input.len(), self.dims[0], "input length vs input dim");
        let layers = self.dims.len() - 1;
        let mut layer_inputs = Vec::with_capacity(layers);
        let mut pre_activations = Vec::with_capacity(layers);
        let mut x = input.to_vec();
        let mut offset = 0usize;
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[offset..offset + n_out * n_in];
            let biases = &self.params[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            offset += n_out * (n_in + 1);
            let mut pre = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut acc = biases[o];
                for (w, xi) in row.iter().zip(&x) {
                    acc = acc + *w * *xi;
                }
                pre.push(acc);
            }
            let act = self.activation_of(l);
            let next: Vec<R> = pre.iter().map(|&p| act.apply(p)).collect();
            layer_inputs.push(x);
            pre_activations.push(pre);
            x = next;
        }
        ForwardCache { layer_inputs, pre_activations }
    }

    /// Reverse pass from `dl_dout` (gradient of a scalar loss with respect to
    /// the network output) to parameter and input gradients.
    pub fn backward(&self, cache: &ForwardCache<R>, dl_dout: &[R]) -> Backprop<R> {
        let layers = self.dims.len() - 1;
        assert_eq!(dl_dout.len(), self.output_dim(), "loss gradient vs output dim");
        assert_eq!(cache.pre_activations.len(), layers, "cache belongs to another net");

        let mut grads = vec![R::zero(); self.params.len()];
        // Gradient flowing into the current layer's activation output.
        let mut upstream = dl_dout.to_vec();
        let mut offset = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            offset -= n_out * (n_in + 1);
            let act = self.activation_of(l);
            let pre = &cache.pre_activations[l];
            let x = &cache.layer_inputs[l];
            // δ = upstream ⊙ σ'(pre)
            let delta: Vec<R> =
                upstream.iter().zip(pre).map(|(&u, &p)| u * act.derivative(p)).collect();
            let (w_slice, rest) = grads[offset..offset + n_out * (n_in + 1)]
                .split_at_mut(n_out * n_in);
            for o in 0..n_out {
                let row = &mut w_slice[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g = *g + delta[o] * *xi;
                }
                rest[o] = rest[o] + delta[o];
            }
            let weights = &self.params[offset..offset + n_out * n_in];
            let mut downstream = vec![R::zero(); n_in];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                for (d, w) in downstream.iter_mut().zip(row) {
                    *d = *d + delta[o] * *w;
                }
            }
            upstream = downstream;
        }
        Backprop { grads, input_grad: upstream }
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(b"MLP1")?;
        file.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            file.write_all(&(d as u32).to_le_bytes())?;
        }
        file.write_all(&[self.hidden.code(), self.output.code()])?;
        for &p in &self.params {
            file.write_all(&p.to64().to_le_bytes())?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != b"MLP1" {
            return Err(NetError::BadMagic(magic));
        }
        let mut u32_buf = [0u8; 4];
        file.read_exact(&mut u32_buf)?;
        let n_dims = u32::from_le_bytes(u32_buf) as usize;
        if n_dims < 2 {
            return Err(NetError::EmptyArchitecture);
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            file.read_exact(&mut u32_buf)?;
            let d = u32::from_le_bytes(u32_buf) as usize;
            if d == 0 {
                return Err(NetError::ZeroWidth(dims.len()));
            }
            dims.push(d);
        }
        let mut act = [0u8; 2];
        file.read_exact(&mut act)?;
        let hidden = Activation::from_code(act[0])?;
        let output = Activation::from_code(act[1])?;
        let mut params = Vec::with_capacity(param_count(&dims));
        let mut f64_buf = [0u8; 8];
        for _ in 0..param_count(&dims) {
            file.read_exact(&mut f64_buf)?;
            params.push(R::of(f64::from_le_bytes(f64_buf)));
        }
        Ok(Self { dims, hidden, output, params })
    }
}

/// Adam with bias correction. State length is fixed at construction and must
/// match the parameter vector on every step.
#[derive(Clone, Debug)]
pub struct Adam<R> {
    pub learning_rate: R,
    pub beta1: R,
    pub beta2: R,
    pub epsilon: R,
    m: Vec<R>,
    v: Vec<R>,
    t: u64,
}

impl<R: Real> Adam<R> {
    pub fn new(learning_rate: R, dim: usize) -> Self {
        Self {
            learning_rate,
            beta1: R::of(0.9),
            beta2: R::of(0.999),
            epsilon: R::of(1e-8),
            m: vec![R::zero(); dim],
            v: vec![R::zero(); dim],
            t: 0,
        }
    }

    /// One descent step in place: `params -= lr * m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [R], grads: &[R]) {
        assert_eq!(params.len(), self.m.len(), "parameter count vs optimiser state");
        assert_eq!(grads.len(), self.m.len(), "gradient count vs optimiser state");
        self.t += 1;
        let one = R::one();
        let bc1 = one - self.beta1.powi(self.t as i32);
        let bc2 = one - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Result of comparing analytic gradients against central finite differences.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// Worst relative parameter-gradient error.
    pub max_param_err: f64,
    /// Worst relative input-gradient error.
    pub max_input_err: f64,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn max_err(&self) -> f64 {
        self.max_param_err.max(self.max_input_err)
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Check every parameter gradient and every input gradient of the squared
/// error loss `½‖f(x) − target‖²` against central differences of width `h`.
///
/// Intended for smooth (tanh/identity) networks; rectifier kinks make finite
/// differences themselves unreliable near zero pre-activations.
pub fn gradient_check<R: Real>(
    mlp: &mut Mlp<R>,
    input: &[R],
    target: &[R],
    h: f64,
) -> GradCheckReport {
    let loss = |net: &Mlp<R>, x: &[R]| -> f64 {
        let out = net.forward(x);
        out.iter()
            .zip(target)
            .map(|(&o, &t)| {
                let d = (o - t).to64();
                0.5 * d * d
            })
            .sum()
    };
    let cache = mlp.forward_cache(input);
    let out = cache.output(mlp.output);
    let dl_dout: Vec<R> = out.iter().zip(target).map(|(&o, &t)| o - t).collect();
    let bp = mlp.backward(&cache, &dl_dout);

    let mut max_param_err = 0.0f64;
    for i in 0..mlp.param_count() {
        let orig = mlp.params[i];
        mlp.params[i] = orig + R::of(h);
        let plus = loss(mlp, input);
        mlp.params[i] = orig - R::of(h);
        let minus = loss(mlp, input);
        mlp.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        max_param_err = max_param_err.max(rel_err(bp.grads[i].to64(), numeric));
    }

    let mut max_input_err = 0.0f64;
    let mut x = input.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + R::of(h);
        let plus = loss(mlp, &x);
        x[i] = orig - R::of(h);
        let minus = loss(mlp, &x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        max_input_err = max_input_err.max(rel_err(bp.input_grad[i].to64(), numeric));
    }

    GradCheckReport { max_param_err, max_input_err, params_checked: mlp.param_count() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// 2-2-1 net with hand-set weights for exact forward checks.
    fn tiny() -> Mlp<f64> {
        let mut net = Mlp::new(&[2, 2, 1], Activation::Relu, Activation::Identity, &mut rng(0));
        // W1 = [[1, -1], [2, 0.5]], b1 = [0, -1], W2 = [[1, 1]], b2 = [0.25]
        net.params_mut().copy_from_slice(&[1.0, -1.0, 2.0, 0.5, 0.0, -1.0, 1.0, 1.0, 0.25]);
        net
    }

    #[test]
    fn forward_matches_hand_computation() {
        let net = tiny();
        // x = (1, 2): pre1 = (1*1 - 1*2, 2*1 + 0.5*2 - 1) = (-1, 2); relu = (0, 2)
        // out = 0 + 2 + 0.25 = 2.25
        assert_eq!(net.forward(&[1.0, 2.0]), vec![2.25]);
    }

    #[test]
    fn backward_matches_hand_computation() {
        let net = tiny();
        let cache = net.forward_cache(&[1.0, 2.0]);
        let bp = net.backward(&cache, &[1.0]);
        // Output layer: dW2 = relu outputs = (0, 2), db2 = 1.
        // Hidden deltas: (1*1, 1*1) gated by relu'(pre1) = (0, 1) -> (0, 1).
        // dW1 row 2 = x = (1, 2); db1 = (0, 1); input grad = W1ᵀ δ = (2, 0.5).
        assert_eq!(bp.grads, vec![0.0, 0.0, 1.0, 2.0, 0.0, 1.0, 0.0, 2.0, 1.0]);
        assert_eq!(bp.input_grad, vec![2.0, 0.5]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
        assert_eq!(Activation::Relu.derivative(-1e-300), 0.0);
    }

    #[test]
    fn init_respects_fan_in_bounds_and_zero_biases() {
        let net = Mlp::<f64>::new(&[9, 4, 2], Activation::Tanh, Activation::Tanh, &mut rng(7));
        let bound1 = 1.0 / 3.0;
        let bound2 = 0.5;
        let (w1, rest) = net.params().split_at(36);
        let (b1, rest) = rest.split_at(4);
        let (w2, b2) = rest.split_at(8);
        assert!(w1.iter().all(|w| w.abs() < bound1));
        assert!(w2.iter().all(|w| w.abs() < bound2));
        assert!(b1.iter().chain(b2).all(|&b| b == 0.0));
        // Not all-zero weights.
        assert!(w1.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Mlp::<f64>::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, &mut rng(42));
        let b = Mlp::<f64>::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, &mut rng(42));
        let c = Mlp::<f64>::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, &mut rng(43));
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn param_count_matches_layout() {
        let net = Mlp::<f64>::new(&[7, 16, 8, 3], Activation::Relu, Activation::Identity, &mut rng(1));
        assert_eq!(net.param_count(), 16 * 8 + 8 * 17 + 3 * 9);
    }

    #[test]
    fn gradient_check_passes_on_smooth_net() {
        let mut net = Mlp::<f64>::new(&[4, 8, 8, 2], Activation::Tanh, Activation::Tanh, &mut rng(3));
        let input = [0.3, -0.7, 0.1, 0.9];
        let target = [0.2, -0.4];
        let report = gradient_check(&mut net, &input, &target, 1e-5);
        assert!(report.max_err() < 1e-4, "max err {}", report.max_err());
        assert_eq!(report.params_checked, net.param_count());
    }

    #[test]
    fn adam_first_step_has_expected_size() {
        let mut opt = Adam::new(0.1, 1);
        let mut params = vec![1.0_f64];
        opt.step(&mut params, &[1.0]);
        // m̂ = 1, v̂ = 1 -> step = lr / (1 + ε).
        assert!((params[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut opt = Adam::new(0.05, 1);
        let mut params = vec![3.0_f64];
        for _ in 0..2000 {
            let g = params[0] - 0.5; // d/dx ½(x - 0.5)²
            opt.step(&mut params, &[g]);
        }
        assert!((params[0] - 0.5).abs() < 1e-3, "converged to {}", params[0]);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.mlp");
        let net = Mlp::<f64>::new(&[5, 12, 3], Activation::Relu, Activation::Tanh, &mut rng(9));
        net.save(&path).unwrap();
        let loaded = Mlp::<f64>::load(&path).unwrap();
        assert_eq!(net, loaded);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(net.forward(&x), loaded.forward(&x));
    }

    #[test]
    fn checkpoint_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad.mlp");
        std::fs::write(&bad_magic, b"NOPE\x02\x00\x00\x00").unwrap();
        assert!(matches!(Mlp::<f64>::load(&bad_magic), Err(NetError::BadMagic(_))));

        let truncated = dir.path().join("short.mlp");
        let net = Mlp::<f64>::new(&[2, 2, 1], Activation::Relu, Activation::Identity, &mut rng(0));
        net.save(&truncated).unwrap();
        let bytes = std::fs::read(&truncated).unwrap();
        std::fs::write(&truncated, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Mlp::<f64>::load(&truncated), Err(NetError::Io(_))));
    }
}
