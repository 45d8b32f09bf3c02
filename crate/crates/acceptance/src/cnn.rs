//! Loop-by-loop forward pass and finite-difference gradient probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcont::image::{Image, LabeledImage};
use semcont::nn::{train, Architecture, ModelSnapshot, Optimizer, TrainConfig};
use semcont::shapegen::{render, ShapeSpec};
use semcont::tensor::Tensor;
use semcont::Scalar;

use crate::Check;

fn param<S: Scalar>(model: &ModelSnapshot<S>, name: &str) -> Vec<f64> {
    model.param(name).expect("known parameter").data().iter().map(|v| v.as_f64()).collect()
}

/// Valid 3×3 cross-correlation over `[c][h][w]` input with `[o][c][3][3]` weights.
fn conv(input: &[f64], c: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let o = bias.len();
    let (oh, ow) = (h - 2, w - 2);
    let mut out = vec![0.0; o * oh * ow];
    for f in 0..o {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[f];
                for ch in 0..c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += weight[((f * c + ch) * 3 + ky) * 3 + kx] * input[(ch * h + y + ky) * w + x + kx];
                        }
                    }
                }
                out[(f * oh + y) * ow + x] = acc;
            }
        }
    }
    out
}

fn pool(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let at = |dy: usize, dx: usize| input[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                out[(ch * oh + y) * ow + x] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
            }
        }
    }
    out
}

/// Logit computed in 64-bit with plain nested loops.
pub fn naive_logit<S: Scalar>(model: &ModelSnapshot<S>, image: &Image<S>) -> f64 {
    let a = model.arch();
    let (h, w) = (a.input_height, a.input_width);
    let x: Vec<f64> = image.pixels().iter().map(|v| v.as_f64()).collect();
    let relu = |v: Vec<f64>| v.into_iter().map(|z| z.max(0.0)).collect::<Vec<_>>();
    let c1 = relu(conv(&x, 1, h, w, &param(model, "conv1.weight"), &param(model, "conv1.bias")));
    let p1 = pool(&c1, a.conv1_filters, h - 2, w - 2);
    let (h1, w1) = ((h - 2) / 2, (w - 2) / 2);
    let c2 = relu(conv(&p1, a.conv1_filters, h1, w1, &param(model, "conv2.weight"), &param(model, "conv2.bias")));
    let p2 = pool(&c2, a.conv2_filters, h1 - 2, w1 - 2);
    let dense = param(model, "dense.weight");
    p2.iter().zip(&dense).map(|(p, d)| p * d).sum::<f64>() + param(model, "dense.bias")[0]
}

pub fn triangle_image<S: Scalar>(rotation_deg: f64) -> Image<S> {
    render(&ShapeSpec { rotation_deg, ..ShapeSpec::triangle() }).expect("default triangle renders")
}

pub fn circle_image<S: Scalar>() -> Image<S> {
    render(&ShapeSpec::circle()).expect("default circle renders")
}

/// Untrained 64×64 model.
fn probe_model(seed: u64) -> ModelSnapshot<f64> {
    ModelSnapshot::init(Architecture::new(64, 64).expect("64x64 fits"), seed)
}

/// Central difference with step `h`, or `None` near a ReLU or pooling kink:
/// either the quarter step disagrees, or the one-sided slopes differ by an
/// amount that does not shrink with the step.
fn central_difference(f: &dyn Fn(f64) -> f64, x0: f64, h: f64) -> Option<f64> {
    let mid = f(x0);
    let slopes = |step: f64| ((f(x0 + step) - mid) / step, (mid - f(x0 - step)) / step);
    let ((fwd, bwd), (fwd_q, bwd_q)) = (slopes(h), slopes(h / 4.0));
    let (coarse, fine) = ((fwd + bwd) / 2.0, (fwd_q + bwd_q) / 2.0);
    let scale = 1e-6 + coarse.abs().max(fine.abs());
    let jump = (fwd - bwd).abs();
    if (coarse - fine).abs() > 1e-5 * scale || (jump > 1e-9 * scale && (fwd_q - bwd_q).abs() > 0.5 * jump) {
        return None;
    }
    Some(coarse)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProbeStats {
    pub probes: usize,
    pub kinks_skipped: usize,
    pub max_relative_error: f64,
}

/// ∂logit/∂A for the GradCAM layer against finite differences of the
/// resumed forward pass, at random positions of A.
pub fn activation_gradient_probes(layer: &str, probes: usize, seed: u64) -> ProbeStats {
    let model = probe_model(seed);
    let image = triangle_image::<f64>(17.0);
    let (act, grad) = model.activation_and_grad(&image, layer).expect("known layer");
    let live: Vec<usize> = (0..grad.len()).filter(|&k| grad.data()[k] != 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut stats = ProbeStats::default();
    while stats.probes < probes {
        // every other probe lands where the analytic gradient is nonzero
        let k = if stats.probes % 2 == 0 && !live.is_empty() { live[rng.gen_range(0..live.len())] } else { rng.gen_range(0..act.len()) };
        let f = |v: f64| {
            let mut a: Tensor<f64> = act.clone();
            a.data_mut()[k] = v;
            model.logit_from_activation(layer, &a).expect("shape matches")
        };
        match central_difference(&f, act.data()[k], 1e-3) {
            Some(fd) => {
                stats.max_relative_error = stats.max_relative_error.max(relative_error(grad.data()[k], fd));
                stats.probes += 1;
            }
            None => stats.kinks_skipped += 1,
        }
    }
    stats
}

fn bce(model: &ModelSnapshot<f64>, data: &[LabeledImage<f64>]) -> f64 {
    data.iter()
        .map(|d| {
            let c = model.confidence(&d.image).expect("valid input");
            if d.label == 1 {
                -c.ln()
            } else {
                -(1.0 - c).ln()
            }
        })
        .sum::<f64>()
        / data.len() as f64
}

/// Parameter gradients of the training loss, read off one plain SGD step on
/// a two-image batch, against finite differences of the loss.
pub fn parameter_gradient_probes(probes: usize, seed: u64) -> ProbeStats {
    let model = probe_model(seed);
    let data = vec![LabeledImage { image: triangle_image::<f64>(9.0), label: 1 }, LabeledImage { image: circle_image::<f64>(), label: 0 }];
    let lr = 1e-3;
    let cfg = TrainConfig { epochs: 1, batch_size: 2, learning_rate: lr, seed, optimizer: Optimizer::Sgd };
    let stepped = train(&model, &data, &cfg).expect("one step trains").model;
    let names: Vec<&'static str> = model.params().map(|(n, _)| n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    let mut stats = ProbeStats::default();
    while stats.probes < probes {
        let name = names[rng.gen_range(0..names.len())];
        let before = param(&model, name);
        let k = rng.gen_range(0..before.len());
        let analytic = (before[k] - param(&stepped, name)[k]) / lr;
        let f = |v: f64| {
            let mut m = model.clone();
            let mut values = before.clone();
            values[k] = v;
            m.set_param(name, values).expect("same shape");
            bce(&m, &data)
        };
        match central_difference(&f, before[k], 1e-3) {
            Some(fd) => {
                let err = if analytic.abs().max(fd.abs()) < 1e-9 { 0.0 } else { relative_error(analytic, fd) };
                stats.max_relative_error = stats.max_relative_error.max(err);
                stats.probes += 1;
            }
            None => stats.kinks_skipped += 1,
        }
    }
    stats
}

/// GradCAM layer gradients (100 probes) plus training-loss parameter gradients.
pub fn gradient_suite(seed: u64) -> Check {
    let act = activation_gradient_probes("conv2", 100, seed);
    let deep = activation_gradient_probes("conv1", 50, seed + 1);
    let params = parameter_gradient_probes(100, seed + 2);
    let worst = act.max_relative_error.max(deep.max_relative_error).max(params.max_relative_error);
    Check {
        passed: worst <= 1e-3,
        detail: format!(
            "max relative error conv2 {:.1e} ({} probes), conv1 {:.1e} ({} probes), parameters {:.1e} ({} probes); kinks skipped {}",
            act.max_relative_error,
            act.probes,
            deep.max_relative_error,
            deep.probes,
            params.max_relative_error,
            params.probes,
            act.kinks_skipped + deep.kinks_skipped + params.kinks_skipped
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_forward_matches() {
        for seed in 0..3 {
            let model = ModelSnapshot::<f32>::init(Architecture::new(64, 64).unwrap(), seed);
            for image in [triangle_image::<f32>(seed as f64 * 20.0), circle_image::<f32>()] {
                let got = model.forward(&image).unwrap().logit as f64;
                let want = naive_logit(&model, &image);
                assert!((got - want).abs() <= 1e-5 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_suite_passes() {
        let check = gradient_suite(3);
        println!("{}", check.detail);
        assert!(check.passed, "{}", check.detail);
    }
}
