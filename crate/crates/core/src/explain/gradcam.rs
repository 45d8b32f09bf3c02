use serde::{Deserialize, Serialize};

use super::{bilinear_resize, SaliencyMap};
use crate::error::Result;
use crate::image::Image;
use crate::nn::ModelSnapshot;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCamConfig {
    pub layer: String,
    pub upsample: Upsample,
}

impl Default for GradCamConfig {
    fn default() -> Self {
        Self { layer: "conv2".into(), upsample: Upsample::Bilinear }
    }
}

/// Channel weights α_k (spatial mean of ∂logit/∂A^k) and the pre-ReLU
/// combination Σ_k α_k A^k at the layer's resolution.
pub fn class_activation<S: Scalar>(model: &ModelSnapshot<S>, image: &Image<S>, layer: &str) -> Result<(Vec<S>, Tensor<S>)> {
    let (act, grad) = model.activation_and_grad(image, layer)?;
    let (c, h, w) = (act.shape()[0], act.shape()[1], act.shape()[2]);
    let plane = h * w;
    let alphas: Vec<S> = grad.data().chunks_exact(plane).map(|g| g.iter().copied().sum::<S>() / S::of(plane as f64)).collect();
    let mut combo = vec![S::zero(); plane];
    for (k, a) in act.data().chunks_exact(plane).enumerate().take(c) {
        for (o, &v) in combo.iter_mut().zip(a) {
            *o = *o + alphas[k] * v;
        }
    }
    Ok((alphas, Tensor::new(vec![h, w], combo)?))
}

/// ReLU(Σ_k α_k A^k) upsampled to the input size. An all-zero result is
/// returned with `empty` set rather than as an error.
pub fn gradcam<S: Scalar>(model: &ModelSnapshot<S>, image: &Image<S>, cfg: &GradCamConfig) -> Result<SaliencyMap<S>> {
    let (_, combo) = class_activation(model, image, &cfg.layer)?;
    let (h, w) = (combo.shape()[0], combo.shape()[1]);
    let cam: Vec<S> = combo.data().iter().map(|&v| v.max(S::zero())).collect();
    let (oh, ow) = image.dims();
    let values = match cfg.upsample {
        Upsample::Bilinear => bilinear_resize(&cam, h, w, oh, ow),
        Upsample::Nearest => (0..oh).flat_map(|y| (0..ow).map(move |x| (y, x))).map(|(y, x)| cam[(y * h / oh) * w + x * w / ow]).collect(),
    };
    let mut map = SaliencyMap::new(ow, oh, values, "gradcam", None)?;
    map.empty = map.is_all_zero();
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use rand::{Rng, SeedableRng};

    fn image(seed: u64) -> Image<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::new(16, 16, (0..256).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn zero_dense_weights_flag_empty() {
        let mut m = ModelSnapshot::<f64>::init(Architecture::new(16, 16).unwrap(), 1);
        let n = m.arch().hidden();
        m.set_param("dense.weight", vec![0.0; n]).unwrap();
        let map = gradcam(&m, &image(2), &GradCamConfig::default()).unwrap();
        assert!(map.empty && map.is_all_zero());
    }

    #[test]
    fn non_negative_and_deterministic() {
        let m = ModelSnapshot::<f32>::init(Architecture::new(16, 16).unwrap(), 3);
        let img = image(4).cast::<f32>();
        let a = gradcam(&m, &img, &GradCamConfig::default()).unwrap();
        assert_eq!(a, gradcam(&m, &img, &GradCamConfig::default()).unwrap());
        assert!(a.values().iter().all(|&v| v >= 0.0));
        assert_eq!((a.width(), a.height()), (16, 16));
    }
}
