//! Fixed micro-CNN: conv(8,3×3) → ReLU → maxpool 2×2 → conv(16,3×3) → ReLU →
//! maxpool 2×2 → dense(1) → sigmoid. Convolutions are stride 1, no padding.

mod io;
mod train;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use io::{decode_model, encode_model, load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use train::{accuracy, train, EpochLog, Optimizer, TrainConfig, TrainOutcome};

const KERNEL: usize = 3;

/// Activation names exposed through [`ForwardTrace::activations`], input side first.
pub const LAYERS: [&str; 4] = ["conv1", "pool1", "conv2", "pool2"];

/// Architecture descriptor. Filter counts are fixed; only the input size varies
/// (64×64 in production, smaller in tests).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Architecture {
    pub fn new(input_height: usize, input_width: usize) -> Result<Self> {
        let arch = Self { conv1_filters: 8, conv2_filters: 16, kernel: KERNEL, pool: 2, input_height, input_width };
        let (ph, pw) = arch.pool2_dims();
        if input_height < 10 || input_width < 10 || ph == 0 || pw == 0 {
            return Err(Error::InvalidArgument(format!("input {input_height}x{input_width} too small for the micro-CNN")));
        }
        Ok(arch)
    }

    pub fn conv1_dims(&self) -> (usize, usize) {
        (self.input_height - 2, self.input_width - 2)
    }

    pub fn pool1_dims(&self) -> (usize, usize) {
        let (h, w) = self.conv1_dims();
        (h / 2, w / 2)
    }

    pub fn conv2_dims(&self) -> (usize, usize) {
        let (h, w) = self.pool1_dims();
        (h.saturating_sub(2), w.saturating_sub(2))
    }

    pub fn pool2_dims(&self) -> (usize, usize) {
        let (h, w) = self.conv2_dims();
        (h / 2, w / 2)
    }

    pub fn hidden(&self) -> usize {
        let (h, w) = self.pool2_dims();
        self.conv2_filters * h * w
    }

    pub fn activation_shape(&self, layer: &str) -> Result<Vec<usize>> {
        let (c, (h, w)) = match layer {
            "conv1" => (self.conv1_filters, self.conv1_dims()),
            "pool1" => (self.conv1_filters, self.pool1_dims()),
            "conv2" => (self.conv2_filters, self.conv2_dims()),
            "pool2" => (self.conv2_filters, self.pool2_dims()),
            other => return Err(Error::UnknownLayer(other.to_string())),
        };
        Ok(vec![c, h, w])
    }

    /// Parameter names and shapes in file order.
    pub fn param_shapes(&self) -> [(&'static str, Vec<usize>); 6] {
        let k = self.kernel;
        [
            ("conv1.weight", vec![self.conv1_filters, 1, k, k]),
            ("conv1.bias", vec![self.conv1_filters]),
            ("conv2.weight", vec![self.conv2_filters, self.conv1_filters, k, k]),
            ("conv2.bias", vec![self.conv2_filters]),
            ("dense.weight", vec![1, self.hidden()]),
            ("dense.bias", vec![1]),
        ]
    }
}

/// Weights plus architecture of the micro-CNN. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot<S> {
    arch: Architecture,
    params: Vec<Tensor<S>>,
    class_names: [String; 2],
    seed: u64,
}

pub fn default_class_names() -> [String; 2] {
    ["circle".to_string(), "triangle".to_string()]
}

impl<S: Scalar> ModelSnapshot<S> {
    /// Uniform(−√(1/fan_in), √(1/fan_in)) initialization for weights and biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_ins = [KERNEL * KERNEL, arch.conv1_filters * KERNEL * KERNEL, arch.hidden()];
        let params = arch
            .param_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (_, shape))| {
                let bound = (1.0 / fan_ins[i / 2] as f64).sqrt();
                Tensor::from_fn(shape, |_| S::of(rng.gen_range(-bound..bound)))
            })
            .collect();
        Self { arch, params, class_names: default_class_names(), seed }
    }

    pub fn zeros(arch: Architecture) -> Self {
        let params = arch.param_shapes().into_iter().map(|(_, s)| Tensor::zeros(s)).collect();
        Self { arch, params, class_names: default_class_names(), seed: 0 }
    }

    pub fn from_params(arch: Architecture, named: Vec<(String, Tensor<S>)>, class_names: [String; 2], seed: u64) -> Result<Self> {
        let expected = arch.param_shapes();
        if named.len() != expected.len() {
            return Err(Error::dims(format!("{} parameter tensors", expected.len()), named.len()));
        }
        let mut params = Vec::with_capacity(named.len());
        for ((name, tensor), (want_name, want_shape)) in named.into_iter().zip(expected) {
            if name != want_name || tensor.shape() != want_shape.as_slice() {
                return Err(Error::dims(format!("{want_name} {want_shape:?}"), format!("{name} {:?}", tensor.shape())));
            }
            tensor.check_finite(&name)?;
            params.push(tensor);
        }
        Ok(Self { arch, params, class_names, seed })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_size(&self) -> (usize, usize) {
        (self.arch.input_height, self.arch.input_width)
    }

    pub fn class_names(&self) -> &[String; 2] {
        &self.class_names
    }

    pub fn with_class_names(mut self, names: [String; 2]) -> Self {
        self.class_names = names;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> impl Iterator<Item = (&'static str, &Tensor<S>)> {
        self.arch.param_shapes().into_iter().map(|(n, _)| n).zip(self.params.iter())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<S>> {
        self.params().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    /// Replaces one parameter tensor, keeping its shape.
    pub fn set_param(&mut self, name: &str, data: Vec<S>) -> Result<()> {
        let idx = self
            .arch
            .param_shapes()
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
        let shape = self.params[idx].shape().to_vec();
        self.params[idx] = Tensor::new(shape, data)?;
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ModelSnapshot<T> {
        ModelSnapshot {
            arch: self.arch,
            params: self.params.iter().map(Tensor::cast).collect(),
            class_names: self.class_names.clone(),
            seed: self.seed,
        }
    }

    fn check_input(&self, image: &Image<S>) -> Result<()> {
        if image.dims() != self.input_size() {
            return Err(Error::dims(format!("{:?}", self.input_size()), format!("{:?}", image.dims())));
        }
        Ok(())
    }

    pub(crate) fn run(&self, image: &Image<S>) -> Result<Trace<S>> {
        self.check_input(image)?;
        let a = &self.arch;
        let (h, w) = self.input_size();
        let (c1h, c1w) = a.conv1_dims();
        let c1_pre = conv3x3(image.pixels(), 1, h, w, self.params[0].data(), self.params[1].data(), a.conv1_filters);
        let c1 = relu(&c1_pre);
        let (p1, p1_idx) = maxpool2(&c1, a.conv1_filters, c1h, c1w);
        let (p1h, p1w) = a.pool1_dims();
        let c2_pre = conv3x3(&p1, a.conv1_filters, p1h, p1w, self.params[2].data(), self.params[3].data(), a.conv2_filters);
        let c2 = relu(&c2_pre);
        let (c2h, c2w) = a.conv2_dims();
        let (p2, p2_idx) = maxpool2(&c2, a.conv2_filters, c2h, c2w);
        let logit = dot(&p2, self.params[4].data()) + self.params[5].data()[0];
        if !logit.is_finite() {
            return Err(Error::NonFinite("logit".into()));
        }
        Ok(Trace { c1_pre, c1, p1, p1_idx, c2_pre, c2, p2, p2_idx, logit })
    }

    /// Model forward pass with the activations of every hidden layer.
    pub fn forward(&self, image: &Image<S>) -> Result<ForwardTrace<S>> {
        let t = self.run(image)?;
        let a = &self.arch;
        let mut activations = BTreeMap::new();
        for (name, data) in [("conv1", t.c1), ("pool1", t.p1), ("conv2", t.c2), ("pool2", t.p2)] {
            activations.insert(name.to_string(), Tensor::new(a.activation_shape(name)?, data)?);
        }
        Ok(ForwardTrace { logit: t.logit, confidence: sigmoid(t.logit.as_f64()), activations })
    }

    /// P(positive class | image).
    pub fn confidence(&self, image: &Image<S>) -> Result<f64> {
        Ok(sigmoid(self.run(image)?.logit.as_f64()))
    }

    /// ∂logit/∂A for the named post-activation tensor A, same shape as A.
    pub fn grad_wrt_activations(&self, image: &Image<S>, layer: &str) -> Result<Tensor<S>> {
        let shape = self.arch.activation_shape(layer)?;
        let trace = self.run(image)?;
        let grads = self.backward(&trace, None, layer);
        let data = match layer {
            "pool2" => grads.d_p2,
            "conv2" => grads.d_c2,
            "pool1" => grads.d_p1,
            _ => grads.d_c1,
        };
        Tensor::new(shape, data)
    }

    /// Activations and their logit gradients in one pass (GradCAM's inputs).
    pub fn activation_and_grad(&self, image: &Image<S>, layer: &str) -> Result<(Tensor<S>, Tensor<S>)> {
        let shape = self.arch.activation_shape(layer)?;
        let trace = self.run(image)?;
        let grads = self.backward(&trace, None, layer);
        let (act, grad) = match layer {
            "pool2" => (trace.p2, grads.d_p2),
            "conv2" => (trace.c2, grads.d_c2),
            "pool1" => (trace.p1, grads.d_p1),
            _ => (trace.c1, grads.d_c1),
        };
        Ok((Tensor::new(shape.clone(), act)?, Tensor::new(shape, grad)?))
    }

    /// Logit computed by resuming the forward pass at a named activation.
    pub fn logit_from_activation(&self, layer: &str, activation: &Tensor<S>) -> Result<S> {
        let shape = self.arch.activation_shape(layer)?;
        if activation.shape() != shape.as_slice() {
            return Err(Error::dims(format!("{shape:?}"), format!("{:?}", activation.shape())));
        }
        let a = &self.arch;
        let mut x = activation.data().to_vec();
        let mut stage = LAYERS.iter().position(|l| *l == layer).unwrap_or(0);
        while stage < 3 {
            x = match stage {
                0 => {
                    let (h, w) = a.conv1_dims();
                    maxpool2(&x, a.conv1_filters, h, w).0
                }
                1 => {
                    let (h, w) = a.pool1_dims();
                    relu(&conv3x3(&x, a.conv1_filters, h, w, self.params[2].data(), self.params[3].data(), a.conv2_filters))
                }
                _ => {
                    let (h, w) = a.conv2_dims();
                    maxpool2(&x, a.conv2_filters, h, w).0
                }
            };
            stage += 1;
        }
        Ok(dot(&x, self.params[4].data()) + self.params[5].data()[0])
    }

    /// Reverse pass from d(logit) = 1, stopping early at `stop_at` unless
    /// parameter gradients are requested. `param_grads` is (accumulators,
    /// dloss/dlogit, model input).
    pub(crate) fn backward(&self, t: &Trace<S>, param_grads: Option<(&mut [Vec<S>], S, &[S])>, stop_at: &str) -> ActivationGrads<S> {
        let a = &self.arch;
        let (p1h, p1w) = a.pool1_dims();
        let d_p2 = self.params[4].data().to_vec();
        let mut out = ActivationGrads { d_p2, d_c2: Vec::new(), d_p1: Vec::new(), d_c1: Vec::new() };
        let need_params = param_grads.is_some();
        if stop_at == "pool2" && !need_params {
            return out;
        }
        out.d_c2 = unpool(&out.d_p2, &t.p2_idx, t.c2.len());
        if stop_at == "conv2" && !need_params {
            return out;
        }
        let d_c2_pre = relu_backward(&out.d_c2, &t.c2_pre);
        out.d_p1 = conv3x3_backward_input(&d_c2_pre, self.params[2].data(), a.conv1_filters, a.conv2_filters, p1h, p1w);
        let mut d_c1_pre = Vec::new();
        if stop_at == "conv1" || need_params {
            out.d_c1 = unpool(&out.d_p1, &t.p1_idx, t.c1.len());
            d_c1_pre = relu_backward(&out.d_c1, &t.c1_pre);
        }
        if let Some((grads, scale, input)) = param_grads {
            let (h, w) = self.input_size();
            let (g1, rest) = grads.split_at_mut(2);
            let (g1w, g1b) = g1.split_at_mut(1);
            conv3x3_backward_weights(&d_c1_pre, input, 1, h, w, a.conv1_filters, scale, &mut g1w[0], &mut g1b[0]);
            let (g2w, g2b) = rest.split_at_mut(1);
            conv3x3_backward_weights(&d_c2_pre, &t.p1, a.conv1_filters, p1h, p1w, a.conv2_filters, scale, &mut g2w[0], &mut g2b[0]);
            for (g, &p) in grads[4].iter_mut().zip(&t.p2) {
                *g = *g + scale * p;
            }
            grads[5][0] = grads[5][0] + scale;
        }
        out
    }
}

/// Result of [`ModelSnapshot::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<S> {
    pub logit: S,
    /// sigmoid(logit), evaluated in 64-bit so saturation happens late.
    pub confidence: f64,
    pub activations: BTreeMap<String, Tensor<S>>,
}

pub(crate) struct Trace<S> {
    c1_pre: Vec<S>,
    c1: Vec<S>,
    p1: Vec<S>,
    p1_idx: Vec<u32>,
    c2_pre: Vec<S>,
    c2: Vec<S>,
    p2: Vec<S>,
    p2_idx: Vec<u32>,
    pub(crate) logit: S,
}

pub(crate) struct ActivationGrads<S> {
    d_p2: Vec<S>,
    d_c2: Vec<S>,
    d_p1: Vec<S>,
    d_c1: Vec<S>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

fn relu<S: Scalar>(x: &[S]) -> Vec<S> {
    x.iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect()
}

fn relu_backward<S: Scalar>(grad: &[S], pre: &[S]) -> Vec<S> {
    grad.iter().zip(pre).map(|(&g, &p)| if p > S::zero() { g } else { S::zero() }).collect()
}

/// Valid 3×3 convolution, stride 1. `weight` is [out_c, in_c, 3, 3].
fn conv3x3<S: Scalar>(input: &[S], in_c: usize, h: usize, w: usize, weight: &[S], bias: &[S], out_c: usize) -> Vec<S> {
    let (oh, ow) = (h - 2, w - 2);
    let mut out = vec![S::zero(); out_c * oh * ow];
    for (oc, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..in_c {
            let src = &input[ic * h * w..(ic + 1) * h * w];
            let kern = &weight[(oc * in_c + ic) * 9..(oc * in_c + ic + 1) * 9];
            for y in 0..oh {
                let row_out = &mut plane[y * ow..(y + 1) * ow];
                for ky in 0..3 {
                    let row_in = &src[(y + ky) * w..(y + ky + 1) * w];
                    let (k0, k1, k2) = (kern[ky * 3], kern[ky * 3 + 1], kern[ky * 3 + 2]);
                    for (x, o) in row_out.iter_mut().enumerate() {
                        *o = *o + k0 * row_in[x] + k1 * row_in[x + 1] + k2 * row_in[x + 2];
                    }
                }
            }
        }
    }
    out
}

fn conv3x3_backward_input<S: Scalar>(d_out: &[S], weight: &[S], in_c: usize, out_c: usize, h: usize, w: usize) -> Vec<S> {
    let (oh, ow) = (h - 2, w - 2);
    let mut d_in = vec![S::zero(); in_c * h * w];
    for oc in 0..out_c {
        let g = &d_out[oc * oh * ow..(oc + 1) * oh * ow];
        for ic in 0..in_c {
            let kern = &weight[(oc * in_c + ic) * 9..(oc * in_c + ic + 1) * 9];
            let dst = &mut d_in[ic * h * w..(ic + 1) * h * w];
            for y in 0..oh {
                let grow = &g[y * ow..(y + 1) * ow];
                for ky in 0..3 {
                    let row = &mut dst[(y + ky) * w..(y + ky + 1) * w];
                    for kx in 0..3 {
                        let k = kern[ky * 3 + kx];
                        for (x, &gv) in grow.iter().enumerate() {
                            row[x + kx] = row[x + kx] + k * gv;
                        }
                    }
                }
            }
        }
    }
    d_in
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward_weights<S: Scalar>(
    d_out: &[S],
    input: &[S],
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    scale: S,
    d_weight: &mut [S],
    d_bias: &mut [S],
) {
    let (oh, ow) = (h - 2, w - 2);
    for oc in 0..out_c {
        let g = &d_out[oc * oh * ow..(oc + 1) * oh * ow];
        d_bias[oc] = d_bias[oc] + scale * g.iter().copied().sum::<S>();
        for ic in 0..in_c {
            let src = &input[ic * h * w..(ic + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = S::zero();
                    for y in 0..oh {
                        let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        acc = acc + dot(&g[y * ow..(y + 1) * ow], row);
                    }
                    let idx = (oc * in_c + ic) * 9 + ky * 3 + kx;
                    d_weight[idx] = d_weight[idx] + scale * acc;
                }
            }
        }
    }
}

/// 2×2 max pool, floor semantics. Returns pooled values and flat argmax indices.
fn maxpool2<S: Scalar>(input: &[S], c: usize, h: usize, w: usize) -> (Vec<S>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = ch * h * w + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ch * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

fn unpool<S: Scalar>(grad: &[S], idx: &[u32], len: usize) -> Vec<S> {
    let mut out = vec![S::zero(); len];
    for (&g, &i) in grad.iter().zip(idx) {
        out[i as usize] = out[i as usize] + g;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> Architecture {
        Architecture::new(12, 14).unwrap()
    }

    fn random_image<S: Scalar>(h: usize, w: usize, seed: u64) -> Image<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, (0..h * w).map(|_| S::of(rng.gen::<f64>())).collect()).unwrap()
    }

    #[test]
    fn geometry_for_64() {
        let a = Architecture::new(64, 64).unwrap();
        assert_eq!(a.conv1_dims(), (62, 62));
        assert_eq!(a.pool1_dims(), (31, 31));
        assert_eq!(a.conv2_dims(), (29, 29));
        assert_eq!(a.pool2_dims(), (14, 14));
        assert_eq!(a.hidden(), 16 * 14 * 14);
        assert!(Architecture::new(8, 64).is_err());
    }

    #[test]
    fn zero_weights_give_half() {
        let m = ModelSnapshot::<f32>::zeros(small_arch());
        let img = random_image::<f32>(12, 14, 1);
        assert_eq!(m.confidence(&img).unwrap(), 0.5);
    }

    #[test]
    fn forward_is_deterministic() {
        let m = ModelSnapshot::<f32>::init(small_arch(), 3);
        let img = random_image::<f32>(12, 14, 4);
        assert_eq!(m.forward(&img).unwrap(), m.forward(&img).unwrap());
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let m = ModelSnapshot::<f32>::init(small_arch(), 3);
        let img = random_image::<f32>(14, 12, 4);
        assert!(matches!(m.forward(&img), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_dense_weights_zero_gradient() {
        let mut m = ModelSnapshot::<f32>::init(small_arch(), 5);
        let hidden = m.arch().hidden();
        m.set_param("dense.weight", vec![0.0; hidden]).unwrap();
        let img = random_image::<f32>(12, 14, 6);
        for layer in LAYERS {
            let g = m.grad_wrt_activations(&img, layer).unwrap();
            assert!(g.data().iter().all(|&v| v == 0.0), "{layer}");
        }
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // conv2 bias very negative: every conv2 unit is dead, so nothing upstream matters
        let mut m = ModelSnapshot::<f64>::init(small_arch(), 7);
        m.set_param("conv2.bias", vec![-1e3; 16]).unwrap();
        let img = random_image::<f64>(12, 14, 8);
        let g = m.grad_wrt_activations(&img, "pool1").unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_layer() {
        let m = ModelSnapshot::<f32>::init(small_arch(), 3);
        let img = random_image::<f32>(12, 14, 4);
        assert!(matches!(m.grad_wrt_activations(&img, "dense"), Err(Error::UnknownLayer(_))));
    }

    #[test]
    fn resuming_forward_reproduces_logit() {
        let m = ModelSnapshot::<f64>::init(small_arch(), 9);
        let img = random_image::<f64>(12, 14, 10);
        let trace = m.forward(&img).unwrap();
        for layer in LAYERS {
            let l = m.logit_from_activation(layer, &trace.activations[layer]).unwrap();
            assert!((l - trace.logit).abs() < 1e-12, "{layer}");
        }
    }

    #[test]
    fn confidence_matches_sigmoid_of_logit() {
        let m = ModelSnapshot::<f32>::init(small_arch(), 11);
        let t = m.forward(&random_image::<f32>(12, 14, 12)).unwrap();
        assert_eq!(t.confidence, sigmoid(t.logit as f64));
        assert!(t.confidence > 0.0 && t.confidence < 1.0);
    }
}
