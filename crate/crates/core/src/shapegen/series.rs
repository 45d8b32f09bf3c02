use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render, ShapeKind, ShapeSpec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Rotation,
    Contrast,
    Transition,
}

impl SeriesKind {
    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::Rotation => "rotation",
            SeriesKind::Contrast => "contrast",
            SeriesKind::Transition => "transition",
        }
    }
}

/// Generator parameters, enough to regenerate the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub base: ShapeSpec,
    pub n_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_deg: Option<f64>,
}

impl SeriesMeta {
    pub fn background_level(&self) -> f64 {
        self.base.background_level
    }
}

/// Ordered frames with strictly increasing variation indicators; frame 0 is
/// the reference at the identity transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSeries<S> {
    kind: SeriesKind,
    frames: Vec<Image<S>>,
    thetas: Vec<f64>,
    meta: SeriesMeta,
}

impl<S: Scalar> VariationSeries<S> {
    pub fn new(kind: SeriesKind, frames: Vec<Image<S>>, thetas: Vec<f64>, meta: SeriesMeta) -> Result<Self> {
        if frames.len() != thetas.len() {
            return Err(Error::dims(format!("{} thetas", frames.len()), thetas.len()));
        }
        if frames.is_empty() {
            return Err(Error::InvalidArgument("series has no frames".into()));
        }
        if thetas.windows(2).any(|w| !(w[1] > w[0])) || thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("thetas must be finite and strictly increasing".into()));
        }
        let dims = frames[0].dims();
        if frames.iter().any(|f| f.dims() != dims) {
            return Err(Error::InvalidArgument("frames differ in size".into()));
        }
        Ok(Self { kind, frames, thetas, meta })
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn reference(&self) -> &Image<S> {
        &self.frames[0]
    }

    pub fn frames(&self) -> &[Image<S>] {
        &self.frames
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Pixel MSD of each frame against the reference.
    pub fn image_distances(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.msd(self.reference()).unwrap_or(f64::NAN)).collect()
    }
}

/// θ_i = i/(n−1), the normalized indicator shared by contrast and transition.
fn unit_thetas(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn check_frames(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("a series needs at least 2 frames, got {n}")));
    }
    Ok(())
}

fn render_all<S: Scalar>(specs: Vec<ShapeSpec>) -> Result<Vec<Image<S>>> {
    specs.par_iter().map(render).collect()
}

/// Triangle rotated by θ_i = i·total_deg/(n−1) degrees clockwise.
pub fn make_rotation_series<S: Scalar>(base: &ShapeSpec, n_frames: usize, total_deg: f64) -> Result<VariationSeries<S>> {
    check_frames(n_frames)?;
    if base.kind != ShapeKind::Triangle {
        return Err(Error::InvalidArgument("rotation series needs a triangle base".into()));
    }
    if !(total_deg > 0.0) {
        return Err(Error::InvalidArgument("total rotation must be positive".into()));
    }
    base.validate()?;
    let thetas: Vec<f64> = (0..n_frames).map(|i| i as f64 * total_deg / (n_frames - 1) as f64).collect();
    let specs = thetas.iter().map(|&t| ShapeSpec { rotation_deg: base.rotation_deg + t, ..base.clone() }).collect();
    let meta = SeriesMeta { base: base.clone(), n_frames, total_deg: Some(total_deg) };
    VariationSeries::new(SeriesKind::Rotation, render_all(specs)?, thetas, meta)
}

/// Fill level linearly approaches the background; θ is the contrast reduction
/// fraction and the last frame is the bare background.
pub fn make_contrast_series<S: Scalar>(base: &ShapeSpec, n_frames: usize) -> Result<VariationSeries<S>> {
    check_frames(n_frames)?;
    if !(base.contrast() > 0.0) {
        return Err(Error::InvalidArgument("contrast series needs a base with non-zero contrast".into()));
    }
    base.validate()?;
    let thetas = unit_thetas(n_frames);
    let (fill, bg) = (base.fill_level, base.background_level);
    let specs = thetas.iter().map(|&t| ShapeSpec { fill_level: fill + t * (bg - fill), ..base.clone() }).collect();
    let meta = SeriesMeta { base: base.clone(), n_frames, total_deg: None };
    VariationSeries::new(SeriesKind::Contrast, render_all(specs)?, thetas, meta)
}

/// Circle morphing into the equilateral triangle at fixed rotation and contrast.
pub fn make_transition_series<S: Scalar>(base_circle: &ShapeSpec, n_frames: usize) -> Result<VariationSeries<S>> {
    check_frames(n_frames)?;
    if base_circle.kind != ShapeKind::Circle {
        return Err(Error::InvalidArgument("transition series needs a circle base".into()));
    }
    base_circle.validate()?;
    let thetas = unit_thetas(n_frames);
    let specs = thetas.iter().map(|&t| base_circle.with_kind(ShapeKind::Morph(t))).collect();
    let meta = SeriesMeta { base: base_circle.clone(), n_frames, total_deg: None };
    VariationSeries::new(SeriesKind::Transition, render_all(specs)?, thetas, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Image<f64>, b: &Image<f64>) -> f64 {
        a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn two_frame_rotation_spans_symmetry_period() {
        let s = make_rotation_series::<f64>(&ShapeSpec::triangle(), 2, 120.0).unwrap();
        assert_eq!(s.thetas(), &[0.0, 120.0]);
        assert!(max_abs_diff(&s.frames()[0], &s.frames()[1]) <= 1e-6);
    }

    #[test]
    fn default_rotation_thetas() {
        let s = make_rotation_series::<f32>(&ShapeSpec::triangle(), 100, 120.0).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.thetas()[0], 0.0);
        assert!((s.thetas()[1] - 120.0 / 99.0).abs() < 1e-12);
        assert!((s.thetas()[1] - 1.2121).abs() < 1e-4);
        assert_eq!(s.thetas()[99], 120.0);
        assert_eq!(s.reference(), &render::<f32>(&ShapeSpec::triangle()).unwrap());
    }

    #[test]
    fn rotation_image_distance_rises_then_oscillates() {
        let s = make_rotation_series::<f64>(&ShapeSpec::triangle(), 100, 120.0).unwrap();
        let d = s.image_distances();
        let first_30 = s.thetas().iter().take_while(|&&t| t <= 30.0).count();
        assert!(d[..first_30].windows(2).all(|w| w[1] > w[0]), "{:?}", &d[..first_30]);
        // back to the start after one period, peak near 60°
        let peak = d.iter().cloned().fold(0.0, f64::max);
        assert!(d[99] < 1e-12);
        let argmax = d.iter().position(|&v| v == peak).unwrap();
        assert!((s.thetas()[argmax] - 60.0).abs() < 3.0);
    }

    #[test]
    fn contrast_series_fades_to_background() {
        let base = ShapeSpec::triangle();
        let s = make_contrast_series::<f32>(&base, 100).unwrap();
        assert_eq!(s.reference(), &render::<f32>(&base).unwrap());
        let last = &s.frames()[99];
        assert!(last.pixels().iter().all(|&p| p == last.pixels()[0]));
        let d = s.image_distances();
        assert!(d.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn contrast_needs_contrast() {
        let flat = ShapeSpec { fill_level: 0.9, ..ShapeSpec::triangle() };
        assert!(make_contrast_series::<f32>(&flat, 10).is_err());
    }

    #[test]
    fn transition_endpoints_and_smoothness() {
        let s = make_transition_series::<f64>(&ShapeSpec::circle(), 100).unwrap();
        assert_eq!(s.reference(), &render::<f64>(&ShapeSpec::circle()).unwrap());
        assert!(max_abs_diff(&s.frames()[99], &render(&ShapeSpec::triangle()).unwrap()) <= 1e-6);
        let mut steps: Vec<f64> = s.frames().windows(2).map(|w| w[1].msd(&w[0]).unwrap()).collect();
        let max = steps.iter().cloned().fold(0.0, f64::max);
        steps.sort_by(f64::total_cmp);
        let median = steps[steps.len() / 2];
        assert!(max < 10.0 * median, "max {max} median {median}");
    }

    #[test]
    fn too_few_frames() {
        assert!(make_rotation_series::<f32>(&ShapeSpec::triangle(), 1, 120.0).is_err());
        assert!(make_contrast_series::<f32>(&ShapeSpec::triangle(), 1).is_err());
        assert!(make_transition_series::<f32>(&ShapeSpec::circle(), 0).is_err());
        assert!(make_transition_series::<f32>(&ShapeSpec::triangle(), 10).is_err());
    }

    #[test]
    fn non_increasing_thetas_rejected() {
        let f = Image::<f32>::filled(4, 4, 0.5);
        let meta = SeriesMeta { base: ShapeSpec::triangle(), n_frames: 2, total_deg: None };
        let err = VariationSeries::new(SeriesKind::Contrast, vec![f.clone(), f], vec![0.0, 0.0], meta);
        assert!(err.is_err());
    }
}
