use std::fmt::Write as _;

use crate::continuity::{Mode, SeriesEvaluation};
use crate::error::{Error, Result};
use crate::explain::ExplainerId;
use crate::metrics::DistanceKind;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub width: u32,
    pub height: u32,
    pub confidence_overlay: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { width: 720, height: 420, confidence_overlay: true }
    }
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    v.iter().map(|x| if range > 0.0 { (x - lo) / range } else { 0.0 }).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline per (explainer, distance) over a shared series, all axes
/// min-max normalized. Points are ordered by x.
pub fn relational_plot(evals: &[SeriesEvaluation], mode: Mode, opts: &PlotOptions) -> Result<String> {
    let first = evals.first().ok_or_else(|| Error::InvalidArgument("nothing to plot".into()))?;
    if let Some(other) = evals.iter().find(|e| e.series_id != first.series_id || e.len() != first.len()) {
        return Err(Error::InvalidArgument(format!("cannot mix series `{}` and `{}` in one plot", first.series_id, other.series_id)));
    }
    let (w, h) = (opts.width as f64, opts.height as f64);
    let (left, right, top, bottom) = (60.0, 190.0, 36.0, 52.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let px = |x: f64| left + x * pw;
    let py = |y: f64| top + (1.0 - y) * ph;

    let xs = normalize(first.axis(mode));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));

    let x_label = match mode {
        Mode::VariationIndexed => "variation θ (normalized)",
        Mode::ConfidenceIndexed => "|Δ confidence| (normalized)",
    };
    let title = format!("{}: saliency distance to reference", first.series_id);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#, opts.width, opts.height, opts.width, opts.height);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, opts.width, opts.height);
    let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(&title));
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(s, r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, px(0.0), py(t), px(1.0), py(t));
        let _ = writeln!(s, r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, px(t), py(0.0), px(t), py(1.0));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.2}</text>"#, left - 6.0, py(t) + 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#, px(t), top + ph + 16.0);
    }
    let _ = writeln!(s, r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">saliency distance (normalized)</text>"#, top + ph / 2.0, top + ph / 2.0);

    let mut legend: Vec<(String, String, bool)> = Vec::new();
    let polyline = |s: &mut String, ys: &[f64], color: &str, dashed: bool| {
        let pts: Vec<String> = order.iter().map(|&i| format!("{:.2},{:.2}", px(xs[i]), py(ys[i]))).collect();
        let dash = if dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" "));
    };
    let mut k = 0;
    for e in evals {
        for kind in DistanceKind::ALL {
            let Some(d) = e.distances.get(&kind) else { continue };
            let color = PALETTE[k % PALETTE.len()];
            let dashed = kind == DistanceKind::Wasserstein1;
            polyline(&mut s, &normalize(d), color, dashed);
            let name = ExplainerId::parse(&e.explainer_id).map(|x| x.display_name().to_string()).unwrap_or_else(|_| e.explainer_id.clone());
            legend.push((format!("{name} {}", kind.name()), color.to_string(), dashed));
            k += 1;
        }
    }
    if opts.confidence_overlay {
        polyline(&mut s, &normalize(&first.confidences), "#555555", true);
        legend.push(("confidence".into(), "#555555".into(), true));
    }
    for (i, (label, color, dashed)) in legend.iter().enumerate() {
        let y = top + 10.0 + 18.0 * i as f64;
        let x = left + pw + 14.0;
        let dash = if *dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, x + 24.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 30.0, y + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
