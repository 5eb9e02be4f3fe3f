//! CSV and SVG renderings of threshold curves.

use std::fmt::Write as _;

use super::pr::PRPoint;
use super::position::PositionReport;

pub fn pr_csv(points: &[PRPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "precision", "recall", "f1", "tp", "fp", "fn"])
        .expect("in-memory write");
    for p in points {
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.f1.to_string(),
            p.tp.to_string(),
            p.fp.to_string(),
            p.fn_.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn position_csv(report: &PositionReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["position", "f1", "std_error", "tp", "fp", "fn", "tn", "outlier"])
        .expect("in-memory write");
    for (k, f1) in report.f1.iter().enumerate() {
        let c = report.counts[k];
        w.write_record([
            k.to_string(),
            f1.to_string(),
            report.std_error[k].to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            report.outliers.contains(&k).to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// A unit-square line chart. Coordinates outside [0, 1] are clamped.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let px = |x: f64| PAD + x.clamp(0.0, 1.0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - y.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/><text x="{tx}" y="{ty}" text-anchor="end">{v:.2}</text>"##,
            x0 = px(0.0),
            x1 = px(1.0),
            y = py(v),
            tx = px(0.0) - 6.0,
            ty = py(v) + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{v:.2}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    if !points.is_empty() {
        let path: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#1f6fb4" stroke-width="2" points="{}"/>"##,
            path.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Precision over recall, from low to high recall.
pub fn pr_svg(points: &[PRPoint]) -> String {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    line_svg("Precision-recall", "recall", "precision", &xy)
}

/// F1 over decision threshold.
pub fn f1_sweep_svg(points: &[PRPoint]) -> String {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.threshold, p.f1)).collect();
    line_svg("F1 vs threshold", "threshold", "F1", &xy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pr_curve;

    #[test]
    fn csv_has_one_row_per_point() {
        let pts = pr_curve(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        let csv = pr_csv(&pts);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("threshold,precision,recall,f1,tp,fp,fn\n"));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let pts = pr_curve(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        for svg in [pr_svg(&pts), f1_sweep_svg(&pts)] {
            assert!(svg.starts_with("<svg"));
            assert!(svg.trim_end().ends_with("</svg>"));
            assert_eq!(svg.matches("<polyline").count(), 1);
        }
    }
}
