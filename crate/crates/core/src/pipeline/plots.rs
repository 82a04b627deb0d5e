//! SVG figures: eigenvalue scatter, mode-amplitude heatmap and
//! reconstruction overlay.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::koopman::{reconstruction_error, KoopmanModel, ModeAmplitudes, C64};

/// Half-width of the eigenvalue plot frame.
pub const EIGEN_FRAME: f64 = 1.2;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect class=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        w / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Scatter of eigenvalues in the complex plane over `[-1.2, 1.2]²` with a
/// dashed unit circle. Points outside the frame are pinned to its edge and
/// drawn as triangles instead of dots.
pub fn eigen_plot_svg(eigvals: &[C64]) -> String {
    let scale = (SIZE - 2.0 * MARGIN) / (2.0 * EIGEN_FRAME);
    let px = |re: f64| MARGIN + (re + EIGEN_FRAME) * scale;
    let py = |im: f64| MARGIN + (EIGEN_FRAME - im) * scale;
    let mut s = header(SIZE, SIZE, "Koopman eigenvalues");
    let _ = writeln!(
        s,
        "<rect class=\"frame\" x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{0}\" height=\"{0}\" fill=\"none\" stroke=\"black\"/>",
        SIZE - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>\n<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>",
        px(-EIGEN_FRAME),
        py(0.0),
        px(EIGEN_FRAME),
        py(0.0),
        px(0.0),
        py(-EIGEN_FRAME),
        px(0.0),
        py(EIGEN_FRAME)
    );
    let _ = writeln!(
        s,
        "<circle class=\"unit\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>",
        px(0.0),
        py(0.0),
        scale
    );
    for l in eigvals {
        let (re, im) = (l.re.clamp(-EIGEN_FRAME, EIGEN_FRAME), l.im.clamp(-EIGEN_FRAME, EIGEN_FRAME));
        let (x, y) = (px(re), py(im));
        if re != l.re || im != l.im {
            let _ = writeln!(
                s,
                "<polygon class=\"marker overflow\" points=\"{},{} {},{} {},{}\" fill=\"red\"><title>{} {:+}i</title></polygon>",
                x,
                y - 5.0,
                x - 4.5,
                y + 4.0,
                x + 4.5,
                y + 4.0,
                l.re,
                l.im
            );
        } else {
            let _ = writeln!(
                s,
                "<rect class=\"marker\" x=\"{}\" y=\"{}\" width=\"5\" height=\"5\" fill=\"#1f77b4\"/>",
                x - 2.5,
                y - 2.5
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Re λ</text>",
        SIZE / 2.0,
        SIZE - 10.0
    );
    let _ = writeln!(
        s,
        "<text x=\"12\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">Im λ</text>",
        SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Scatter of the model's retained eigenvalues.
pub fn emit_eigen_plot(model: &KoopmanModel, path: &Path) -> Result<()> {
    write(path, &eigen_plot_svg(model.retained_eigvals()))
}

/// One row per mode, one column per time index; grey level is linear from 0
/// (black) to the matrix maximum (white).
pub fn mode_heatmap_svg(amps: &ModeAmplitudes) -> Result<String> {
    let (modes, steps) = (amps.modes(), amps.steps());
    if modes == 0 || steps == 0 {
        return Err(Error::InvalidParameter("empty amplitude matrix".into()));
    }
    let max = amps.max();
    let cw = ((SIZE * 1.5 - 2.0 * MARGIN) / steps as f64).max(1.0);
    let ch = ((SIZE - 2.0 * MARGIN) / modes as f64).max(4.0);
    let (w, h) = (2.0 * MARGIN + cw * steps as f64, 2.0 * MARGIN + ch * modes as f64);
    let mut s = header(w, h, "Mode amplitudes |b_k λ_k^t|");
    for (k, row) in amps.rows.iter().enumerate() {
        for (t, &a) in row.iter().enumerate() {
            let g = if max > 0.0 { (255.0 * a / max).round() as u8 } else { 0 };
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{cw}\" height=\"{ch}\" fill=\"rgb({g},{g},{g})\"/>",
                MARGIN + cw * t as f64,
                MARGIN + ch * k as f64
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">time index</text>",
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">mode</text>", h / 2.0);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_mode_heatmap(amps: &ModeAmplitudes, path: &Path) -> Result<()> {
    write(path, &mode_heatmap_svg(amps)?)
}

/// Original (blue) and reconstructed (orange) traces against time in
/// seconds, NRMSE in the title.
pub fn reconstruction_overlay_svg(original: &[f64], reconstructed: &[f64], fs: f64) -> Result<String> {
    if original.len() != reconstructed.len() || original.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: original.len(),
            got: reconstructed.len(),
        });
    }
    let err = reconstruction_error(original, reconstructed)?;
    let span = original.len() as f64 / fs;
    let (w, h) = (SIZE * 2.0, SIZE);
    let lo = original.iter().chain(reconstructed).copied().fold(f64::INFINITY, f64::min);
    let hi = original.iter().chain(reconstructed).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let px = |t: f64| MARGIN + t / span * (w - 2.0 * MARGIN);
    let py = |v: f64| h - MARGIN - (v - lo) / (hi - lo) * (h - 2.0 * MARGIN);
    let mut s = header(w, h, &format!("EDMD reconstruction, NRMSE = {:.4}", err.nrmse));
    let _ = writeln!(
        s,
        "<rect class=\"frame\" x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * MARGIN,
        h - 2.0 * MARGIN
    );
    for (trace, colour, class) in [(original, "#1f77b4", "original"), (reconstructed, "#ff7f0e", "reconstructed")] {
        let pts: Vec<String> = trace
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i as f64 / fs), py(v)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline class=\"{class}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
    }
    let ticks = 4;
    for i in 0..=ticks {
        let t = span * i as f64 / ticks as f64;
        let _ = writeln!(
            s,
            "<text class=\"tick\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{t:.2}</text>",
            px(t),
            h - MARGIN + 14.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">time (s)</text>",
        w / 2.0,
        h - 6.0
    );
    for (i, (label, colour)) in [("original", "#1f77b4"), ("reconstruction", "#ff7f0e")].iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = w - MARGIN - 130.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{colour}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>",
            x + 20.0,
            x + 26.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_reconstruction_overlay(original: &[f64], reconstructed: &[f64], fs: f64, path: &Path) -> Result<()> {
    write(path, &reconstruction_overlay_svg(original, reconstructed, fs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn count(doc: &roxmltree::Document, tag: &str, class: Option<&str>) -> usize {
        doc.descendants()
            .filter(|n| n.has_tag_name(tag))
            .filter(|n| class.is_none_or(|c| n.attribute("class").is_some_and(|a| a.split(' ').any(|x| x == c))))
            .count()
    }

    #[test]
    fn eigen_plot_markers_and_overflow() {
        let l = [
            C64::new(1.0, 0.0),
            C64::from_polar(0.9, PI / 4.0),
            C64::from_polar(0.9, -PI / 4.0),
        ];
        let svg = eigen_plot_svg(&l);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "circle", None), 1);
        assert_eq!(count(&doc, "rect", Some("marker")) + count(&doc, "polygon", Some("marker")), 3);
        // (1, 0) lands at 1/1.2 of the way from centre to the right edge
        let m = doc.descendants().find(|n| n.attribute("class") == Some("marker")).unwrap();
        let x: f64 = m.attribute("x").unwrap().parse::<f64>().unwrap() + 2.5;
        let y: f64 = m.attribute("y").unwrap().parse::<f64>().unwrap() + 2.5;
        assert!((x - (200.0 + 160.0 / 1.2)).abs() < 1e-9 && (y - 200.0).abs() < 1e-9, "{x} {y}");

        let svg = eigen_plot_svg(&[C64::new(1.5, 0.0), C64::new(0.5, 0.0)]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "polygon", Some("overflow")), 1);
        let p = doc.descendants().find(|n| n.has_tag_name("polygon")).unwrap();
        let tip_x: f64 = p.attribute("points").unwrap().split([',', ' ']).next().unwrap().parse().unwrap();
        assert!((tip_x - (SIZE - MARGIN)).abs() < 1e-9);
    }

    #[test]
    fn heatmap_cells() {
        let constant = ModeAmplitudes {
            rows: vec![vec![2.0; 5]; 3],
        };
        let svg = mode_heatmap_svg(&constant).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let fills: Vec<&str> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("cell"))
            .map(|n| n.attribute("fill").unwrap())
            .collect();
        assert_eq!(fills.len(), 15);
        assert!(fills.iter().all(|f| *f == "rgb(255,255,255)"));

        let mut rows = vec![vec![0.0; 4]; 2];
        rows[1][2] = 0.7;
        let svg = mode_heatmap_svg(&ModeAmplitudes { rows }).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let bright = doc.descendants().filter(|n| n.attribute("fill") == Some("rgb(255,255,255)") && n.attribute("class") == Some("cell")).count();
        assert_eq!(bright, 1);
        assert!(mode_heatmap_svg(&ModeAmplitudes { rows: vec![] }).is_err());
    }

    #[test]
    fn overlay_structure() {
        let x: Vec<f64> = (0..250).map(|i| (i as f64 * 0.1).sin()).collect();
        let svg = reconstruction_overlay_svg(&x, &x, 125.0).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "polyline", None), 2);
        assert!(svg.contains("NRMSE = 0.0000"));
        let ticks: Vec<&str> = doc.descendants().filter(|n| n.attribute("class") == Some("tick")).filter_map(|n| n.text()).collect();
        assert_eq!(ticks.first(), Some(&"0.00"));
        assert_eq!(ticks.last(), Some(&"2.00"));
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).map(|n| n.attribute("points").unwrap()).collect();
        assert_eq!(lines[0], lines[1]);
        assert!(reconstruction_overlay_svg(&x, &x[1..], 125.0).is_err());
    }

    #[test]
    fn unwritable_path() {
        let err = emit_eigen_plot_to_missing_dir();
        assert!(matches!(err, Err(Error::Io(_))));
    }

    fn emit_eigen_plot_to_missing_dir() -> Result<()> {
        write(Path::new("/nonexistent-dir/x/plot.svg"), &eigen_plot_svg(&[]))
    }
}
