//! Multilayer perceptron scorer, hand-derived backpropagation, Adam with a
//! step-decay schedule, and the `LCMLP1` checkpoint format.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::{matmul_with, NumericsError, Tensor, Transpose};
use crate::scalar::Scalar;

/// Hidden width of the backbone scorer.
pub const HIDDEN_WIDTH: usize = 100;
/// Number of hidden layers in the backbone scorer.
pub const HIDDEN_LAYERS: usize = 3;

const CHECKPOINT_MAGIC: &[u8; 6] = b"LCMLP1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input width mismatch: expected {expected}, got {actual}")]
    InputWidth { expected: usize, actual: usize },
    #[error("upstream gradient shape {actual:?} does not match logits shape {expected:?}")]
    UpstreamShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("layer dims must list at least an input and an output width, got {0:?}")]
    BadLayout(Vec<usize>),
    #[error("parameter/gradient mismatch in optimizer step: {0}")]
    OptimizerShape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine layer `z = x W + b` with `W` stored as `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug)]
struct ForwardCache<T> {
    /// Input to every layer: the batch itself, then each rectified hidden output.
    activations: Vec<Tensor<T>>,
    logits_shape: Vec<usize>,
}

/// Feed-forward scorer: rectifier between hidden layers, identity output.
#[derive(Clone, Debug)]
pub struct MlpScorer<T> {
    layers: Vec<DenseLayer<T>>,
    cache: Option<ForwardCache<T>>,
}

/// Gradients of a scalar objective w.r.t. every layer and the input batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients<T> {
    /// `(weight, bias)` per layer, shaped like the parameters.
    pub layers: Vec<(Tensor<T>, Tensor<T>)>,
    pub input: Tensor<T>,
}

impl<T: Scalar> MlpGradients<T> {
    pub fn flat(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.data(), b.data()])
            .collect()
    }
}

impl<T: Scalar> MlpScorer<T> {
    /// Builds a network with the given widths, initialized from `seed`.
    ///
    /// Weights and biases are drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(layer_dims, &mut rng)
    }

    pub fn with_rng<R: Rng>(layer_dims: &[usize], rng: &mut R) -> Result<Self, ModelError> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::BadLayout(layer_dims.to_vec()));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<T> {
                    (0..n)
                        .map(|_| T::of(rng.random_range(-bound..bound)))
                        .collect()
                };
                let weight = draw(fan_in * fan_out);
                let bias = draw(fan_out);
                DenseLayer {
                    weight: Tensor::new(vec![fan_in, fan_out], weight).expect("sized"),
                    bias: Tensor::new(vec![fan_out], bias).expect("sized"),
                }
            })
            .collect();
        Ok(Self {
            layers,
            cache: None,
        })
    }

    /// The backbone used for both branches: `[d_in, h, h, h, classes]`.
    pub fn backbone(d_in: usize, classes: usize, seed: u64) -> Result<Self, ModelError> {
        let mut dims = vec![d_in];
        dims.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
        dims.push(classes);
        Self::new(&dims, seed)
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::BadLayout(vec![]));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(ModelError::BadLayout(vec![pair[0].fan_out(), pair[1].fan_in()]));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.fan_out() {
                return Err(ModelError::BadLayout(vec![layer.bias.len(), layer.fan_out()]));
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(DenseLayer::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter slices in `(weight, bias)` order per layer.
    pub fn parameters(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        self.cache = None;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.data_mut()])
            .collect()
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<(), ModelError> {
        let expected = self.input_dim();
        if batch.shape().len() != 2 || batch.cols() != expected {
            return Err(ModelError::InputWidth {
                expected,
                actual: batch.cols(),
            });
        }
        Ok(())
    }

    fn affine(layer: &DenseLayer<T>, input: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut z = matmul_with(input, &layer.weight, Transpose::None)?;
        let bias = layer.bias.data();
        for i in 0..z.rows() {
            for (v, &b) in z.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    fn relu(z: &mut Tensor<T>) {
        for v in z.data_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }

    /// Logits for an `[n, d]` batch without touching the backward cache.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        self.check_input(batch)?;
        let mut current = Self::affine(&self.layers[0], batch)?;
        for layer in &self.layers[1..] {
            Self::relu(&mut current);
            current = Self::affine(layer, &current)?;
        }
        current.check_finite("forward logits")?;
        Ok(current)
    }

    /// Logits for an `[n, d]` batch; activations are cached for [`Self::backward`].
    pub fn forward(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        self.check_input(batch)?;
        self.cache = None;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        let last = self.layers.len() - 1;
        let mut output = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Self::affine(layer, &activations[i])?;
            if i < last {
                Self::relu(&mut z);
                activations.push(z);
            } else {
                output = Some(z);
            }
        }
        let logits = output.expect("at least one layer");
        logits.check_finite("forward logits")?;
        self.cache = Some(ForwardCache {
            activations,
            logits_shape: logits.shape().to_vec(),
        });
        Ok(logits)
    }

    /// Backpropagates `upstream` (dObjective/dLogits) through the cached forward.
    pub fn backward(&self, upstream: &Tensor<T>) -> Result<MlpGradients<T>, ModelError> {
        let cache = self.cache.as_ref().ok_or(ModelError::NoCachedForward)?;
        if upstream.shape() != cache.logits_shape.as_slice() {
            return Err(ModelError::UpstreamShape {
                expected: cache.logits_shape.clone(),
                actual: upstream.shape().to_vec(),
            });
        }
        let mut delta = upstream.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            let grad_w = matmul_with(input, &delta, Transpose::Left)?;
            let mut grad_b = Tensor::zeros(vec![layer.fan_out()]);
            for r in 0..delta.rows() {
                for (g, &d) in grad_b.data_mut().iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            grads.push((grad_w, grad_b));
            let mut next = matmul_with(&delta, &layer.weight, Transpose::Right)?;
            if i > 0 {
                // rectifier derivative: the cached hidden output is positive iff active
                for (g, &a) in next.data_mut().iter_mut().zip(input.data()) {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            delta = next;
        }
        grads.reverse();
        Ok(MlpGradients {
            layers: grads,
            input: delta,
        })
    }

    pub fn has_cached_forward(&self) -> bool {
        self.cache.is_some()
    }

    /// Applies one optimizer step with the given gradients.
    pub fn apply_adam(&mut self, adam: &mut AdamState<T>, grads: &MlpGradients<T>) -> Result<(), ModelError> {
        let g = grads.flat();
        let mut p = self.parameters_mut();
        adam.step(&mut p, &g)
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            out.write_all(&(layer.fan_in() as u32).to_le_bytes())?;
            out.write_all(&(layer.fan_out() as u32).to_le_bytes())?;
            for &v in layer.weight.data().iter().chain(layer.bias.data()) {
                out.write_all(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cursor = ByteCursor { bytes: &bytes, pos: 0 };
        let magic = cursor.take(CHECKPOINT_MAGIC.len())?;
        if magic != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let count = cursor.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let fan_in = cursor.u32()? as usize;
            let fan_out = cursor.u32()? as usize;
            let n_weight = fan_in
                .checked_mul(fan_out)
                .ok_or_else(|| ModelError::Checkpoint("layer size overflow".into()))?;
            let weight = cursor.f32s(n_weight)?;
            let bias = cursor.f32s(fan_out)?;
            layers.push(DenseLayer {
                weight: Tensor::new(vec![fan_in, fan_out], weight)?,
                bias: Tensor::new(vec![fan_out], bias)?,
            });
        }
        if cursor.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - cursor.pos
            )));
        }
        Self::from_layers(layers)
    }
}

impl<T: Scalar> PartialEq for MlpScorer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ModelError::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>, ModelError> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| ModelError::Checkpoint("length overflow".into()))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect())
    }
}

/// Adam hyperparameters plus a multiplicative step-decay schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `(iteration, factor)`: updates after `iteration` use `lr * factor`.
    pub decay_schedule: Vec<(u64, f64)>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_schedule: vec![(10_000, 0.5)],
        }
    }
}

impl AdamConfig {
    /// Learning rate used by the `step`-th update (1-based).
    pub fn effective_lr(&self, step: u64) -> f64 {
        self.decay_schedule
            .iter()
            .filter(|(at, _)| step > *at)
            .fold(self.learning_rate, |lr, (_, f)| lr * f)
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments for parameter slices of the given lengths.
    pub fn new(config: AdamConfig, lengths: &[usize]) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_model(config: AdamConfig, model: &MlpScorer<T>) -> Self {
        let lengths: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
        Self::new(config, &lengths)
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<(), ModelError> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(ModelError::OptimizerShape(format!(
                "{} parameter groups, {} gradient groups, {} moment groups",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[i].len() {
                return Err(ModelError::OptimizerShape(format!(
                    "group {i}: {} parameters vs {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        let cfg = &self.config;
        let lr = T::of(cfg.effective_lr(t));
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let one = T::one();
        let c1 = T::of(1.0 - cfg.beta1.powf(t as f64));
        let c2 = T::of(1.0 - cfg.beta2.powf(t as f64));
        let eps = T::of(cfg.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;

    fn batch(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    fn zero_model(dims: &[usize]) -> MlpScorer<f64> {
        let mut m = MlpScorer::new(dims, 0).unwrap();
        for p in m.parameters_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let m = zero_model(&[4, 5, 5, 5, 3]);
        let out = m.predict(&batch(3, 4, 1)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.shape(), &[3, 3]);
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut eye = vec![0.0f64; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let layer = DenseLayer {
            weight: Tensor::new(vec![3, 3], eye).unwrap(),
            bias: Tensor::zeros(vec![3]),
        };
        let m = MlpScorer::from_layers(vec![layer]).unwrap();
        let x = batch(2, 3, 4);
        assert_eq!(m.predict(&x).unwrap(), x);
    }

    #[test]
    fn input_width_mismatch_is_reported() {
        let m = MlpScorer::<f64>::new(&[4, 3], 0).unwrap();
        match m.predict(&batch(1, 5, 0)) {
            Err(ModelError::InputWidth { expected: 4, actual: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backbone_has_three_hidden_layers() {
        let m = MlpScorer::<f32>::backbone(12, 4, 1).unwrap();
        assert_eq!(m.layer_dims(), vec![12, 100, 100, 100, 4]);
    }

    #[test]
    fn backward_requires_forward() {
        let m = MlpScorer::<f64>::new(&[2, 2], 0).unwrap();
        let up = Tensor::zeros(vec![1, 2]);
        assert!(matches!(m.backward(&up), Err(ModelError::NoCachedForward)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut m = MlpScorer::<f64>::new(&[3, 4, 4, 2], 9).unwrap();
        let x = batch(5, 3, 2);
        let logits = m.forward(&x).unwrap();
        let g = m.backward(&Tensor::zeros(logits.shape().to_vec())).unwrap();
        for (w, b) in &g.layers {
            assert!(w.data().iter().chain(b.data()).all(|&v| v == 0.0));
        }
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_network_matches_finite_differences() {
        let dims = [2, 2, 2, 2, 2];
        let mut m = MlpScorer::<f64>::new(&dims, 3).unwrap();
        let x = batch(1, 2, 5);
        let upstream = Tensor::new(vec![1, 2], vec![0.7, -1.3]).unwrap();
        m.forward(&x).unwrap();
        let g = m.backward(&upstream).unwrap();
        let objective = |m: &MlpScorer<f64>, x: &Tensor<f64>| -> f64 {
            let out = m.predict(x).unwrap();
            out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
        };
        let r = finite_difference_check(|p| objective(&m, p), &x, &g.input, 1e-6).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        for layer in 0..dims.len() - 1 {
            let w = m.layers[layer].weight.clone();
            let report = finite_difference_check(
                |p| {
                    let mut probe = m.clone();
                    probe.layers[layer].weight = p.clone();
                    objective(&probe, &x)
                },
                &w,
                &g.layers[layer].0,
                1e-6,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "layer {layer}: {report:?}");
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_per_sample_gradients() {
        let mut m = MlpScorer::<f64>::new(&[3, 6, 6, 2], 11).unwrap();
        let x = batch(4, 3, 6);
        let up = batch(4, 2, 7);
        m.forward(&x).unwrap();
        let full = m.backward(&up).unwrap();
        let mut summed: Vec<Vec<f64>> = full.flat().iter().map(|s| vec![0.0; s.len()]).collect();
        for i in 0..4 {
            let xi = Tensor::from_rows(&[x.row(i)]).unwrap();
            let ui = Tensor::from_rows(&[up.row(i)]).unwrap();
            m.forward(&xi).unwrap();
            let gi = m.backward(&ui).unwrap();
            for (acc, part) in summed.iter_mut().zip(gi.flat()) {
                acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
            }
            assert_eq!(gi.input.row(0), full.input.row(i));
        }
        for (acc, whole) in summed.iter().zip(full.flat()) {
            for (a, b) in acc.iter().zip(whole) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_model() {
        let a = MlpScorer::<f32>::backbone(10, 3, 42).unwrap();
        let b = MlpScorer::<f32>::backbone(10, 3, 42).unwrap();
        assert_eq!(a, b);
        let x = Tensor::new(vec![2, 10], (0..20).map(|i| i as f32 * 0.1).collect()).unwrap();
        let (ya, yb) = (a.predict(&x).unwrap(), b.predict(&x).unwrap());
        assert!(ya.data().iter().zip(yb.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(a, MlpScorer::<f32>::backbone(10, 3, 43).unwrap());
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut p = vec![1.0f64, -2.0];
        let mut adam = AdamState::new(AdamConfig::default(), &[2]);
        adam.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn adam_zero_lr_never_moves() {
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let mut p = vec![0.3f64, 0.4];
        let mut adam = AdamState::new(cfg, &[2]);
        for k in 0..50 {
            adam.step(&mut [&mut p], &[&[k as f64, -1.5]]).unwrap();
        }
        assert_eq!(p, vec![0.3, 0.4]);
    }

    #[test]
    fn adam_constant_gradient_moves_lr_per_step() {
        // m_hat = g and v_hat = g^2 exactly, so each step is lr * g / (|g| + eps).
        let lr = 0.01;
        let g = 0.37;
        let mut p = vec![0.0f64];
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: lr,
                decay_schedule: vec![],
                ..AdamConfig::default()
            },
            &[1],
        );
        let mut prev = 0.0;
        for _ in 0..200 {
            adam.step(&mut [&mut p], &[&[g]]).unwrap();
            let delta = p[0] - prev;
            assert!((delta + lr * g / (g + 1e-8)).abs() < 1e-12);
            prev = p[0];
        }
    }

    #[test]
    fn schedule_halves_after_milestone() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            decay_schedule: vec![(2, 0.5)],
            ..AdamConfig::default()
        };
        assert_eq!(cfg.effective_lr(1), 0.01);
        assert_eq!(cfg.effective_lr(2), 0.01);
        assert_eq!(cfg.effective_lr(3), 0.005);
        assert_eq!(AdamConfig::default().effective_lr(10_001), 0.005);
    }

    #[test]
    fn optimizer_rejects_mismatched_groups() {
        let mut adam = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(adam.step(&mut [&mut p], &[&[0.0; 3]]).is_err());
        assert_eq!(adam.step_count, 0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = MlpScorer::<f32>::backbone(7, 3, 5).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"LCMLP1");
        let back = MlpScorer::<f32>::load(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let m = MlpScorer::<f32>::new(&[2, 2], 5).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert!(MlpScorer::<f32>::load(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[5] = b'2';
        assert!(MlpScorer::<f32>::load(bad.as_slice()).is_err());
    }
}
