//! Fully-connected multi-label classifier for Format 0 decoding.
//!
//! The network maps 25 inputs (real and imaginary parts of the 12 received
//! samples plus the expected UE count) through ReLU hidden layers to 12
//! sigmoid outputs, one per cyclic shift. The default shape is
//! `25 -> 512 -> 512 -> 512 -> 12`.
//!
//! Everything works on mini-batches stored row-major, one sample per row.
//! Parameters are generic over [`Real`] so gradients can be checked in
//! `f64` while training and model files use `f32`.

mod io;
mod linalg;
mod train;

pub use io::{load_model, load_model_expecting, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use linalg::{Real, View};
pub use train::{evaluate, train, EpochLog, Hyper, TrainOutcome};

use crate::error::{Error, Result};
use crate::muxdatagen::PucchRecord;
use crate::rng::SimRng;
use crate::waveform::{AlphaSet, CyclicShiftIndex, N_SC};

pub const INPUT_LEN: usize = 2 * N_SC + 1;
pub const OUTPUT_LEN: usize = N_SC;
pub const UCINET0_ARCH: [usize; 5] = [INPUT_LEN, 512, 512, 512, OUTPUT_LEN];

/// Trainable parameter count `sum(fan_in * fan_out + fan_out)` over
/// consecutive layer sizes.
pub fn param_count(arch: &[usize]) -> usize {
    arch.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// One network input row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInput {
    pub x: [f32; INPUT_LEN],
}

impl ModelInput {
    /// Received samples plus the expected UE count `n_tilde`, fed as
    /// `n_tilde * meta_scale`.
    pub fn new(iq: &[f32; 2 * N_SC], n_tilde: u8, meta_scale: f32) -> Result<Self> {
        if n_tilde as usize > N_SC {
            return Err(Error::Domain(format!("expected UE count {n_tilde} exceeds 12")));
        }
        let mut x = [0f32; INPUT_LEN];
        x[..2 * N_SC].copy_from_slice(iq);
        x[2 * N_SC] = n_tilde as f32 * meta_scale;
        Ok(Self { x })
    }

    pub fn from_record(r: &PucchRecord, n_tilde: u8, meta_scale: f32) -> Result<Self> {
        Self::new(&r.iq, n_tilde, meta_scale)
    }
}

/// A dense layer `z = W a + b`, `W` stored row-major `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![T::zero(); fan_in * fan_out],
            biases: vec![T::zero(); fan_out],
        }
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(self.biases.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// Network weights. `generation` changes whenever the parameters are
/// updated so that forward caches from older weights are rejected.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    layers: Vec<Dense<T>>,
    generation: u64,
}

impl<T: PartialEq> PartialEq for ModelParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Gradients and momentum buffers share the parameter layout.
pub type Gradients<T> = Vec<Dense<T>>;
pub type Velocity<T> = Vec<Dense<T>>;

fn validate_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 || arch.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!(
            "architecture {arch:?} needs at least two non-zero layer sizes"
        )));
    }
    Ok(())
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(arch: &[usize]) -> Result<Self> {
        validate_arch(arch)?;
        Ok(Self {
            layers: arch.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            generation: 0,
        })
    }

    /// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: &[usize], rng: &mut SimRng) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        for layer in &mut p.layers {
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::from_f64((2.0 * rng.uniform() - 1.0) * limit);
            }
        }
        Ok(p)
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.fan_in * l.fan_out || l.biases.len() != l.fan_out {
                return Err(Error::Config(format!("layer {i} buffers do not match its shape")));
            }
            if i > 0 && layers[i - 1].fan_out != l.fan_in {
                return Err(Error::Config(format!("layer {i} fan-in mismatches previous fan-out")));
            }
        }
        let p = Self { layers, generation: 0 };
        validate_arch(&p.arch())?;
        Ok(p)
    }

    /// Layer sizes from input to output.
    pub fn arch(&self) -> Vec<usize> {
        let mut a = vec![self.layers[0].fan_in];
        a.extend(self.layers.iter().map(|l| l.fan_out));
        a
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Mutable access; bumps the generation.
    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.arch())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Vec<Dense<T>> {
        self.layers.iter().map(|l| Dense::zeros(l.fan_in, l.fan_out)).collect()
    }

    /// Forward pass over `batch` rows of `inputs`.
    pub fn forward(&self, inputs: &[T], batch: usize, mode: Mode<'_>) -> Result<ForwardPass<T>> {
        let n_in = self.input_len();
        if inputs.len() != batch * n_in {
            return Err(Error::Config(format!(
                "expected {} inputs for batch {batch}, got {}",
                batch * n_in,
                inputs.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite network input".into()));
        }
        let (dropout, mut rng, train) = match mode {
            Mode::Infer => (0.0, None, false),
            Mode::Train { dropout, rng } => {
                if !(0.0..1.0).contains(&dropout) {
                    return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
                }
                (dropout, Some(rng), true)
            }
        };
        let keep_scale = T::from_f64(1.0 / (1.0 - dropout));

        let n_layers = self.layers.len();
        let mut activations: Vec<Vec<T>> = Vec::with_capacity(n_layers);
        let mut preacts: Vec<Vec<T>> = Vec::with_capacity(n_layers);
        let mut masks: Vec<Option<Vec<T>>> = Vec::with_capacity(n_layers);
        let mut current = inputs.to_vec();

        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = vec![T::zero(); batch * layer.fan_out];
            for row in z.chunks_exact_mut(layer.fan_out) {
                row.copy_from_slice(&layer.biases);
            }
            T::gemm(
                View::row_major(&current, batch, layer.fan_in),
                View::row_major(&layer.weights, layer.fan_out, layer.fan_in).transposed(),
                T::one(),
                &mut z,
            );
            if li + 1 == n_layers {
                if train {
                    activations.push(current);
                }
                current = z;
                break;
            }
            let mut h: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
            let mask = match rng.as_deref_mut() {
                Some(rng) if dropout > 0.0 => {
                    let m: Vec<T> = (0..h.len())
                        .map(|_| if rng.uniform() < dropout { T::zero() } else { keep_scale })
                        .collect();
                    for (v, s) in h.iter_mut().zip(&m) {
                        *v = *v * *s;
                    }
                    Some(m)
                }
                _ => None,
            };
            if train {
                activations.push(current);
                preacts.push(z);
                masks.push(mask);
            }
            current = h;
        }

        let cache = train.then(|| Cache {
            generation: self.generation,
            arch: self.arch(),
            batch,
            activations,
            preacts,
            masks,
        });
        Ok(ForwardPass {
            batch,
            logits: current,
            cache,
        })
    }

    /// Gradients of the mean batch BCE loss for a train-mode pass.
    pub fn backward(&self, pass: &ForwardPass<T>, labels: &[AlphaSet]) -> Result<Gradients<T>> {
        let cache = pass
            .cache
            .as_ref()
            .ok_or_else(|| Error::Config("backward needs a train-mode forward cache".into()))?;
        if cache.generation != self.generation || cache.arch != self.arch() {
            return Err(Error::Config("forward cache is stale for these parameters".into()));
        }
        if labels.len() != cache.batch {
            return Err(Error::Config(format!(
                "{} labels for a batch of {}",
                labels.len(),
                cache.batch
            )));
        }
        let batch = cache.batch;
        let n_out = self.output_len();
        let scale = T::from_f64(1.0 / (n_out * batch) as f64);

        // dL/dz at the output: (sigmoid(z) - y) / (n_out * batch)
        let mut delta: Vec<T> = pass
            .logits
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let y = if labels[i / n_out].contains_index(i % n_out) { T::one() } else { T::zero() };
                (sigmoid(z) - y) * scale
            })
            .collect();

        let mut grads = self.zeros_like();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a_prev = &cache.activations[li];
            let g = &mut grads[li];
            T::gemm(
                View::row_major(&delta, batch, layer.fan_out).transposed(),
                View::row_major(a_prev, batch, layer.fan_in),
                T::zero(),
                &mut g.weights,
            );
            for row in delta.chunks_exact(layer.fan_out) {
                for (gb, &d) in g.biases.iter_mut().zip(row) {
                    *gb = *gb + d;
                }
            }
            if li == 0 {
                break;
            }
            let mut d_prev = vec![T::zero(); batch * layer.fan_in];
            T::gemm(
                View::row_major(&delta, batch, layer.fan_out),
                View::row_major(&layer.weights, layer.fan_out, layer.fan_in),
                T::zero(),
                &mut d_prev,
            );
            let z_prev = &cache.preacts[li - 1];
            match &cache.masks[li - 1] {
                Some(mask) => {
                    for ((d, &z), &m) in d_prev.iter_mut().zip(z_prev).zip(mask) {
                        *d = if z > T::zero() { *d * m } else { T::zero() };
                    }
                }
                None => {
                    for (d, &z) in d_prev.iter_mut().zip(z_prev) {
                        if z <= T::zero() {
                            *d = T::zero();
                        }
                    }
                }
            }
            delta = d_prev;
        }
        Ok(grads)
    }
}

impl ModelParams<f32> {
    /// Inference-mode output probabilities for one input.
    pub fn probabilities(&self, input: &ModelInput) -> Result<Vec<f32>> {
        let pass = self.forward(&input.x, 1, Mode::Infer)?;
        Ok(pass.probabilities())
    }
}

/// How dropout is handled in a forward pass.
pub enum Mode<'a> {
    /// Deterministic, no dropout, no cache.
    Infer,
    /// Inverted dropout with drop probability `dropout`; keeps a cache for
    /// [`ModelParams::backward`].
    Train { dropout: f64, rng: &'a mut SimRng },
}

#[derive(Debug, Clone)]
struct Cache<T> {
    generation: u64,
    arch: Vec<usize>,
    batch: usize,
    /// Input to each layer (after dropout for hidden layers).
    activations: Vec<Vec<T>>,
    /// Hidden-layer pre-activations.
    preacts: Vec<Vec<T>>,
    /// Per hidden layer: 0 or `1/(1-p)` per unit, absent when `p = 0`.
    masks: Vec<Option<Vec<T>>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub batch: usize,
    /// Output pre-activations, `batch x n_out`.
    pub logits: Vec<T>,
    cache: Option<Cache<T>>,
}

impl<T: Real> ForwardPass<T> {
    pub fn probabilities(&self) -> Vec<T> {
        self.logits.iter().map(|&z| sigmoid(z)).collect()
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Post-dropout activations of hidden layer `i` (train mode only).
    pub fn hidden_activation(&self, i: usize) -> Option<&[T]> {
        self.cache.as_ref()?.activations.get(i + 1).map(Vec::as_slice)
    }

    /// Mean BCE over the batch.
    pub fn loss(&self, labels: &[AlphaSet]) -> Result<T> {
        if self.batch == 0 || labels.len() != self.batch {
            return Err(Error::Config(format!(
                "{} labels for a batch of {}",
                labels.len(),
                self.batch
            )));
        }
        let n_out = self.logits.len() / self.batch;
        let total = self
            .logits
            .chunks_exact(n_out)
            .zip(labels)
            .fold(T::zero(), |acc, (z, &l)| acc + bce_loss(z, l));
        Ok(total / T::from_f64(self.batch as f64))
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Mean over outputs of `max(z,0) - z*y + ln(1 + exp(-|z|))`.
pub fn bce_loss<T: Real>(logits: &[T], label: AlphaSet) -> T {
    let total = logits.iter().enumerate().fold(T::zero(), |acc, (i, &z)| {
        let y = if label.contains_index(i) { T::one() } else { T::zero() };
        acc + z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
    });
    total / T::from_f64(logits.len() as f64)
}

/// Classical momentum: `v <- momentum * v + g`, `w <- w - lr * v`.
pub fn sgd_step<T: Real>(
    params: &mut ModelParams<T>,
    vel: &mut Velocity<T>,
    grads: &Gradients<T>,
    lr: T,
    momentum: T,
) -> Result<()> {
    let shapes_match = |other: &[Dense<T>]| {
        other.len() == params.layers.len()
            && other
                .iter()
                .zip(&params.layers)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    };
    if !shapes_match(vel) || !shapes_match(grads) {
        return Err(Error::Config("gradient or velocity shape mismatch".into()));
    }
    for ((layer, v), g) in params.layers_mut().iter_mut().zip(vel.iter_mut()).zip(grads) {
        for ((w, v), g) in layer.values_mut().zip(v.values_mut()).zip(g.values()) {
            *v = momentum * *v + *g;
            *w = *w - lr * *v;
        }
    }
    Ok(())
}

/// Largest relative error between backprop and central finite differences
/// (step `eps`) over every parameter of a freshly initialized `f64` model
/// with at most 12 outputs, on a random batch. Dropout masks are held fixed
/// by replaying the same generator state. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(arch: &[usize], seed: u64, batch: usize, dropout: f64, eps: f64, floor: f64) -> Result<f64> {
    let n_out = *arch.last().unwrap_or(&0);
    if n_out > N_SC {
        return Err(Error::Config(format!("gradient check supports at most 12 outputs, got {n_out}")));
    }
    let mut rng = SimRng::new(seed);
    let mut params = ModelParams::<f64>::init(arch, &mut rng)?;
    for l in params.layers_mut() {
        for b in &mut l.biases {
            *b = 0.2 * (2.0 * rng.uniform() - 1.0);
        }
    }
    let x: Vec<f64> = (0..batch * arch[0]).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    let labels = (0..batch)
        .map(|_| AlphaSet::from_mask(rng.below(1 << n_out) as u16))
        .collect::<Result<Vec<_>>>()?;
    let mask_rng = rng;

    let loss_at = |p: &ModelParams<f64>| -> Result<f64> {
        let mut r = mask_rng.clone();
        p.forward(&x, batch, Mode::Train { dropout, rng: &mut r })?.loss(&labels)
    };
    let mut r = mask_rng.clone();
    let pass = params.forward(&x, batch, Mode::Train { dropout, rng: &mut r })?;
    let grads = params.backward(&pass, &labels)?;

    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (li, g) in grads.iter().enumerate() {
        let analytic: Vec<f64> = g.values().copied().collect();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = *probe.layers[li].values().nth(j).expect("index in range");
            let mut shifted = |v: f64| -> Result<f64> {
                *probe.layers_mut()[li].values_mut().nth(j).expect("index in range") = v;
                loss_at(&probe)
            };
            let numeric = (shifted(orig + eps)? - shifted(orig - eps)?) / (2.0 * eps);
            *probe.layers_mut()[li].values_mut().nth(j).expect("index in range") = orig;
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// How the 12 output probabilities become a predicted shift set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Every output strictly above the threshold.
    Threshold(f64),
    /// The `n_tilde` most probable outputs.
    TopK,
}

impl Default for Decision {
    fn default() -> Self {
        Decision::Threshold(0.5)
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "top-k" {
            return Ok(Decision::TopK);
        }
        if s == "threshold" {
            return Ok(Decision::default());
        }
        if let Some(t) = s.strip_prefix("threshold:") {
            let t: f64 = t
                .parse()
                .map_err(|_| Error::Config(format!("bad threshold '{t}'")))?;
            return Ok(Decision::Threshold(t));
        }
        Err(Error::Config(format!(
            "unknown decision '{s}' (expected threshold:<p> or top-k)"
        )))
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Threshold(t) => write!(f, "threshold:{t}"),
            Decision::TopK => f.write_str("top-k"),
        }
    }
}

pub fn predict_labels<T: Real>(probs: &[T], threshold: f64) -> AlphaSet {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| Real::to_f64(p) > threshold)
        .map(|(i, _)| CyclicShiftIndex::wrapping(i as i64))
        .collect()
}

pub fn decide<T: Real>(probs: &[T], decision: Decision, n_tilde: u8) -> AlphaSet {
    match decision {
        Decision::Threshold(t) => predict_labels(probs, t),
        Decision::TopK => {
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| {
                probs[b]
                    .partial_cmp(&probs[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order
                .into_iter()
                .take(n_tilde as usize)
                .map(|i| CyclicShiftIndex::wrapping(i as i64))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ix: &[u8]) -> AlphaSet {
        ix.iter().map(|&i| CyclicShiftIndex::new(i).unwrap()).collect()
    }

    fn random_inputs(rng: &mut SimRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect()
    }

    #[test]
    fn param_counts() {
        assert_eq!(param_count(&UCINET0_ARCH), 544_780);
        assert_eq!(param_count(&[25, 512]), 13_312);
        assert_eq!(param_count(&[512, 512]), 262_656);
        assert_eq!(param_count(&[512, 12]), 6_156);
        assert_eq!(param_count(&[25, 64, 12]), 2_444);
        assert_eq!(param_count(&[25, 12]), 312);
    }

    #[test]
    fn zero_params_give_half() {
        let p = ModelParams::<f32>::zeros(&UCINET0_ARCH).unwrap();
        let input = ModelInput::new(&[0.3; 24], 4, 1.0).unwrap();
        let probs = p.probabilities(&input).unwrap();
        assert_eq!(probs.len(), 12);
        assert!(probs.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn outputs_in_open_unit_interval() {
        let mut rng = SimRng::new(1);
        let p = ModelParams::<f32>::init(&UCINET0_ARCH, &mut rng).unwrap();
        let x: Vec<f32> = (0..25 * 8).map(|i| (i as f32 * 0.37).sin() * 3.0).collect();
        let probs = p.forward(&x, 8, Mode::Infer).unwrap().probabilities();
        assert_eq!(probs.len(), 8 * 12);
        assert!(probs.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = ModelParams::<f32>::zeros(&[25, 4, 12]).unwrap();
        let mut x = vec![0f32; 25];
        x[3] = f32::NAN;
        assert!(matches!(p.forward(&x, 1, Mode::Infer), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_dropout_train_equals_infer() {
        let mut rng = SimRng::new(2);
        let p = ModelParams::<f64>::init(&[25, 16, 16, 12], &mut rng).unwrap();
        let x = random_inputs(&mut rng, 25 * 3);
        let infer = p.forward(&x, 3, Mode::Infer).unwrap();
        let train = p
            .forward(&x, 3, Mode::Train { dropout: 0.0, rng: &mut rng })
            .unwrap();
        assert_eq!(infer.logits, train.logits);
        assert!(!infer.has_cache() && train.has_cache());
    }

    #[test]
    fn infer_is_deterministic() {
        let mut rng = SimRng::new(3);
        let p = ModelParams::<f32>::init(&[25, 32, 12], &mut rng).unwrap();
        let x: Vec<f32> = (0..25).map(|i| i as f32 / 10.0).collect();
        let a = p.forward(&x, 1, Mode::Infer).unwrap().logits;
        let b = p.forward(&x, 1, Mode::Infer).unwrap().logits;
        assert_eq!(a, b);
    }

    #[test]
    fn bce_values() {
        let l = bce_loss(&[0.0f64], set(&[0]));
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = bce_loss(&[50.0f64], set(&[0]));
        assert!(l >= 0.0 && l < 1e-20);
        let l = bce_loss(&[-1000.0f64, 1000.0], set(&[1]));
        assert!(l.is_finite() && l < 1e-300);
    }

    #[test]
    fn bce_matches_naive_formula() {
        let mut rng = SimRng::new(4);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..12).map(|_| 16.0 * rng.uniform() - 8.0).collect();
            let label = AlphaSet::from_mask(rng.below(4096) as u16).unwrap();
            let naive: f64 = z
                .iter()
                .enumerate()
                .map(|(i, &z)| {
                    let s = 1.0 / (1.0 + (-z).exp());
                    let y = if label.contains_index(i) { 1.0 } else { 0.0 };
                    -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
                })
                .sum::<f64>()
                / 12.0;
            let stable = bce_loss(&z, label);
            assert!((naive - stable).abs() < 1e-6);
            assert!(stable > 0.0);
        }
    }

    #[test]
    fn single_layer_gradient_is_outer_product() {
        let mut rng = SimRng::new(5);
        let p = ModelParams::<f64>::init(&[25, 12], &mut rng).unwrap();
        let x = random_inputs(&mut rng, 25);
        let label = set(&[1, 7]);
        let pass = p
            .forward(&x, 1, Mode::Train { dropout: 0.0, rng: &mut rng })
            .unwrap();
        let g = p.backward(&pass, &[label]).unwrap();
        let probs = pass.probabilities();
        for o in 0..12 {
            let y = if label.contains_index(o) { 1.0 } else { 0.0 };
            let d = (probs[o] - y) / 12.0;
            assert!((g[0].biases[o] - d).abs() < 1e-15);
            for i in 0..25 {
                assert!((g[0].weights[o * 25 + i] - d * x[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dropped_units_get_no_gradient() {
        let mut rng = SimRng::new(6);
        let p = ModelParams::<f64>::init(&[25, 64, 12], &mut rng).unwrap();
        let x = random_inputs(&mut rng, 25);
        let pass = p
            .forward(&x, 1, Mode::Train { dropout: 0.5, rng: &mut rng })
            .unwrap();
        let g = p.backward(&pass, &[set(&[3])]).unwrap();
        let h = pass.hidden_activation(0).unwrap();
        let mut dropped = 0;
        for (u, &hv) in h.iter().enumerate() {
            if hv == 0.0 {
                dropped += 1;
                assert_eq!(g[0].biases[u], 0.0);
                assert!(g[0].weights[u * 25..(u + 1) * 25].iter().all(|&w| w == 0.0));
                assert!((0..12).all(|o| g[1].weights[o * 64 + u] == 0.0));
            }
        }
        assert!(dropped > 10);
    }

    #[test]
    fn backward_requires_fresh_train_cache() {
        let mut rng = SimRng::new(7);
        let mut p = ModelParams::<f64>::init(&[25, 8, 12], &mut rng).unwrap();
        let x = random_inputs(&mut rng, 25);
        let infer = p.forward(&x, 1, Mode::Infer).unwrap();
        assert!(p.backward(&infer, &[set(&[0])]).is_err());

        let pass = p
            .forward(&x, 1, Mode::Train { dropout: 0.0, rng: &mut rng })
            .unwrap();
        let g = p.backward(&pass, &[set(&[0])]).unwrap();
        let mut v = p.zeros_like();
        sgd_step(&mut p, &mut v, &g, 0.1, 0.9).unwrap();
        assert!(p.backward(&pass, &[set(&[0])]).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = SimRng::new(8);
        let p = ModelParams::<f64>::init(&[25, 32, 12], &mut rng).unwrap();
        let x = random_inputs(&mut rng, 25);
        let draws = 10_000;
        let batch: Vec<f64> = x.iter().cycle().take(25 * draws).copied().collect();
        let pass = p
            .forward(&batch, draws, Mode::Train { dropout: 0.5, rng: &mut rng })
            .unwrap();
        let h = pass.hidden_activation(0).unwrap();
        let l = &p.layers()[0];
        for u in 0..32 {
            let z: f64 = l.biases[u] + (0..25).map(|i| l.weights[u * 25 + i] * x[i]).sum::<f64>();
            let infer = z.max(0.0);
            let mean = (0..draws).map(|d| h[d * 32 + u]).sum::<f64>() / draws as f64;
            if infer == 0.0 {
                assert_eq!(mean, 0.0);
            } else {
                assert!((mean / infer - 1.0).abs() < 0.02, "unit {u}: {mean} vs {infer}");
            }
        }
    }

    #[test]
    fn sgd_hand_computed_steps() {
        let mut p = ModelParams::<f64>::zeros(&[1, 1]).unwrap();
        p.layers_mut()[0].weights[0] = 1.0;
        let mut v = p.zeros_like();
        let mut g = p.zeros_like();
        g[0].weights[0] = 1.0;
        sgd_step(&mut p, &mut v, &g, 0.1, 0.9).unwrap();
        assert!((p.layers()[0].weights[0] - 0.9).abs() < 1e-12);
        assert!((v[0].weights[0] - 1.0).abs() < 1e-12);
        sgd_step(&mut p, &mut v, &g, 0.1, 0.9).unwrap();
        assert!((v[0].weights[0] - 1.9).abs() < 1e-12);
        assert!((p.layers()[0].weights[0] - 0.71).abs() < 1e-12);

        // g = 0: velocity decays geometrically, plain SGD when momentum = 0.
        let zero = p.zeros_like();
        sgd_step(&mut p, &mut v, &zero, 0.1, 0.9).unwrap();
        assert!((v[0].weights[0] - 1.71).abs() < 1e-12);
        let mut q = ModelParams::<f64>::zeros(&[1, 1]).unwrap();
        let mut vq = q.zeros_like();
        sgd_step(&mut q, &mut vq, &g, 0.5, 0.0).unwrap();
        sgd_step(&mut q, &mut vq, &g, 0.5, 0.0).unwrap();
        assert!((q.layers()[0].weights[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let err = gradient_check(&[25, 8, 12], seed, 4, 0.0, 1e-4, 1e-7).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
            let err = gradient_check(&[25, 8, 8, 12], seed, 3, 0.5, 1e-4, 1e-7).unwrap();
            assert!(err <= 1e-4, "seed {seed} with dropout: {err}");
        }
    }

    #[test]
    fn decisions() {
        let mut probs = vec![0.2f64; 12];
        probs[0] = 0.9;
        assert_eq!(predict_labels(&probs, 0.5), set(&[0]));
        assert!(predict_labels(&[0.4f64; 12], 0.5).is_empty());
        assert_eq!(predict_labels(&[0.4f64; 12], 0.0).len(), 12);
        probs[5] = 0.3;
        assert_eq!(decide(&probs, Decision::TopK, 2), set(&[0, 5]));
        // ties go to the lower index
        assert_eq!(decide(&probs, Decision::TopK, 3), set(&[0, 1, 5]));
        assert_eq!("threshold:0.7".parse::<Decision>().unwrap(), Decision::Threshold(0.7));
        assert_eq!("top-k".parse::<Decision>().unwrap(), Decision::TopK);
        assert!("median".parse::<Decision>().is_err());
    }
}
