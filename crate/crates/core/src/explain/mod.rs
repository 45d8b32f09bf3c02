//! Saliency-map explainers. RISE, LIME and KernelSHAP only query confidences;
//! GradCAM needs the built-in network's activation gradients.

mod blackbox;
mod gradcam;
mod io;
mod kernelshap;
mod lime;
mod masks;
mod rise;
mod segments;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::ModelSnapshot;
use crate::scalar::Scalar;

pub use blackbox::{serve_classifier, ProcessClassifier};
pub use gradcam::{class_activation, gradcam, GradCamConfig, Upsample};
pub use io::{load_maps, save_maps, MapArchive, SALIENCY_FORMAT_VERSION};
pub use kernelshap::{kernelshap, shapley_kernel_weight, KernelShapConfig};
pub use lime::{lime, lime_kernel_weight, LimeConfig};
pub use masks::MaskSet;
pub use rise::{rise, rise_with_masks, RiseConfig};
pub use segments::SegmentGrid;

/// Anything that maps an image to P(positive class).
pub trait Classifier<S: Scalar>: Sync {
    fn confidence(&self, image: &Image<S>) -> Result<f64>;
}

impl<S: Scalar> Classifier<S> for ModelSnapshot<S> {
    fn confidence(&self, image: &Image<S>) -> Result<f64> {
        ModelSnapshot::confidence(self, image)
    }
}

impl<S: Scalar, F> Classifier<S> for F
where
    F: Fn(&Image<S>) -> f64 + Sync,
{
    fn confidence(&self, image: &Image<S>) -> Result<f64> {
        Ok(self(image))
    }
}

pub(crate) fn checked_confidence<S: Scalar, C: Classifier<S> + ?Sized>(model: &C, image: &Image<S>) -> Result<f64> {
    let c = model.confidence(image)?;
    if !c.is_finite() {
        return Err(Error::NonFinite("classifier confidence".into()));
    }
    Ok(c)
}

/// Real-valued attribution heatmap over the input pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<S> {
    width: usize,
    height: usize,
    values: Vec<S>,
    explainer_id: String,
    rng_seed: Option<u64>,
    /// Set when the explainer produced nothing (all-zero GradCAM map).
    pub empty: bool,
}

impl<S: Scalar> SaliencyMap<S> {
    pub fn new(width: usize, height: usize, values: Vec<S>, explainer_id: impl Into<String>, rng_seed: Option<u64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dims(width * height, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("saliency map".into()));
        }
        Ok(Self { width, height, values, explainer_id: explainer_id.into(), rng_seed, empty: false })
    }

    pub fn zeros(width: usize, height: usize, explainer_id: impl Into<String>) -> Self {
        Self { width, height, values: vec![S::zero(); width * height], explainer_id: explainer_id.into(), rng_seed: None, empty: false }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn explainer_id(&self) -> &str {
        &self.explainer_id
    }

    pub fn rng_seed(&self) -> Option<u64> {
        self.rng_seed
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|v| *v == S::zero())
    }
}

/// Min-max rescale to [0,1]; constant maps become all zeros.
pub fn normalize_map<S: Scalar>(map: &SaliencyMap<S>) -> Result<SaliencyMap<S>> {
    if map.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("saliency map".into()));
    }
    let lo = map.values.iter().copied().fold(S::infinity(), S::min);
    let hi = map.values.iter().copied().fold(S::neg_infinity(), S::max);
    let range = hi - lo;
    let values = if range > S::zero() {
        map.values.iter().map(|&v| ((v - lo) / range).min(S::one())).collect()
    } else {
        vec![S::zero(); map.values.len()]
    };
    Ok(SaliencyMap { values, ..map.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainerId {
    Rise,
    Lime,
    Gradcam,
    Kernelshap,
}

impl ExplainerId {
    pub fn key(self) -> &'static str {
        match self {
            ExplainerId::Rise => "rise",
            ExplainerId::Lime => "lime",
            ExplainerId::Gradcam => "gradcam",
            ExplainerId::Kernelshap => "kernelshap",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ExplainerId::Rise => "RISE",
            ExplainerId::Lime => "LIME",
            ExplainerId::Gradcam => "GradCAM",
            ExplainerId::Kernelshap => "KernelSHAP",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rise" => Ok(ExplainerId::Rise),
            "lime" => Ok(ExplainerId::Lime),
            "gradcam" => Ok(ExplainerId::Gradcam),
            "kernelshap" | "shap" => Ok(ExplainerId::Kernelshap),
            other => Err(Error::InvalidArgument(format!("unknown explainer `{other}`"))),
        }
    }
}

/// Frozen defaults for every explainer; echoed into output metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub rise: RiseConfig,
    pub lime: LimeConfig,
    pub kernelshap: KernelShapConfig,
    pub gradcam: GradCamConfig,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            rise: RiseConfig::default(),
            lime: LimeConfig::default(),
            kernelshap: KernelShapConfig::default(),
            gradcam: GradCamConfig::default(),
        }
    }
}

impl ExplainerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rise.seed = seed;
        self.lime.seed = seed;
        self.kernelshap.seed = seed;
        self
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.rise.baseline = Some(baseline);
        self.lime.baseline = Some(baseline);
        self.kernelshap.baseline = Some(baseline);
        self
    }

    /// JSON echo of the settings that apply to one explainer.
    pub fn echo(&self, id: ExplainerId) -> serde_json::Value {
        let v = match id {
            ExplainerId::Rise => serde_json::to_value(&self.rise),
            ExplainerId::Lime => serde_json::to_value(&self.lime),
            ExplainerId::Kernelshap => serde_json::to_value(&self.kernelshap),
            ExplainerId::Gradcam => serde_json::to_value(&self.gradcam),
        };
        v.unwrap_or(serde_json::Value::Null)
    }

    pub fn seed(&self, id: ExplainerId) -> Option<u64> {
        match id {
            ExplainerId::Rise => Some(self.rise.seed),
            ExplainerId::Lime => Some(self.lime.seed),
            ExplainerId::Kernelshap => Some(self.kernelshap.seed),
            ExplainerId::Gradcam => None,
        }
    }
}

/// The model behind an explanation: the built-in CNN or an opaque classifier.
#[derive(Clone, Copy)]
pub enum ModelRef<'a, S: Scalar> {
    Builtin(&'a ModelSnapshot<S>),
    BlackBox(&'a dyn Classifier<S>),
}

impl<S: Scalar> ModelRef<'_, S> {
    pub fn confidence(&self, image: &Image<S>) -> Result<f64> {
        match self {
            ModelRef::Builtin(m) => m.confidence(image),
            ModelRef::BlackBox(c) => checked_confidence(*c, image),
        }
    }

    pub fn classifier(&self) -> &dyn Classifier<S> {
        match self {
            ModelRef::Builtin(m) => *m,
            ModelRef::BlackBox(c) => *c,
        }
    }
}

/// Runs one explainer on one image.
pub fn explain<S: Scalar>(model: ModelRef<'_, S>, image: &Image<S>, id: ExplainerId, cfg: &ExplainerConfig) -> Result<SaliencyMap<S>> {
    match id {
        ExplainerId::Rise => rise(model.classifier(), image, &cfg.rise),
        ExplainerId::Lime => lime(model.classifier(), image, &cfg.lime),
        ExplainerId::Kernelshap => kernelshap(model.classifier(), image, &cfg.kernelshap),
        ExplainerId::Gradcam => match model {
            ModelRef::Builtin(m) => gradcam(m, image, &cfg.gradcam),
            ModelRef::BlackBox(_) => Err(Error::InvalidArgument("GradCAM needs the built-in model".into())),
        },
    }
}

/// Perturbation baseline: the configured level, else the image's corner
/// pixel (the uniform background for the shape datasets).
pub(crate) fn resolve_baseline<S: Scalar>(baseline: Option<f64>, image: &Image<S>) -> S {
    baseline.map(S::of).unwrap_or_else(|| image.get(0, 0))
}

/// Bilinear resize with half-pixel centers and clamped edges.
pub(crate) fn bilinear_resize<S: Scalar>(src: &[S], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<S> {
    let axis = |d: usize, s: usize, n_dst: usize| {
        let pos = ((d as f64 + 0.5) * s as f64 / n_dst as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, pos - i0 as f64)
    };
    let cols: Vec<_> = (0..dw).map(|x| axis(x, sw, dw)).collect();
    let mut out = Vec::with_capacity(dh * dw);
    for y in 0..dh {
        let (y0, y1, fy) = axis(y, sh, dh);
        for &(x0, x1, fx) in &cols {
            let v = |yy: usize, xx: usize| src[yy * sw + xx].as_f64();
            let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
            let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
            out.push(S::of(top * (1.0 - fy) + bottom * fy));
        }
    }
    out
}
