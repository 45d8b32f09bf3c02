use crate::error::{Error, Result};
use crate::explain::{normalize_map, SaliencyMap};
use crate::image::Image;
use crate::scalar::Scalar;

const GAP: usize = 2;

/// Every `stride`-th map as a grayscale panel, normalized per map; darker
/// means higher attribution.
pub fn strip_panels<S: Scalar>(maps: &[SaliencyMap<S>], stride: usize) -> Result<Vec<Image<f32>>> {
    if stride < 1 {
        return Err(Error::InvalidArgument("strip stride must be at least 1".into()));
    }
    if maps.is_empty() {
        return Err(Error::InvalidArgument("no saliency maps for the strip".into()));
    }
    maps.iter()
        .step_by(stride)
        .map(|m| {
            let n = normalize_map(m)?;
            Ok(Image::from_raw(m.width(), m.height(), n.values().iter().map(|v| 1.0 - v.as_f32().clamp(0.0, 1.0)).collect()))
        })
        .collect()
}

/// Panels side by side with a mid-gray gap.
pub fn saliency_strip<S: Scalar>(maps: &[SaliencyMap<S>], stride: usize) -> Result<Image<f32>> {
    let panels = strip_panels(maps, stride)?;
    let (h, w) = panels[0].dims();
    let total_w = panels.len() * w + (panels.len() - 1) * GAP;
    let mut pixels = vec![0.5f32; total_w * h];
    for (k, p) in panels.iter().enumerate() {
        let x0 = k * (w + GAP);
        for y in 0..h {
            pixels[y * total_w + x0..y * total_w + x0 + w].copy_from_slice(&p.pixels()[y * w..(y + 1) * w]);
        }
    }
    Ok(Image::from_raw(total_w, h, pixels))
}
