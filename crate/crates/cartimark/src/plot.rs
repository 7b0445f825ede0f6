//! ROC figure as a standalone SVG document.

use std::fmt::Write;

use crate::report::PlotData;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn sx(fpr: f64) -> f64 {
    MARGIN + fpr * (SIZE - 2.0 * MARGIN)
}

fn sy(tpr: f64) -> f64 {
    SIZE - MARGIN - tpr * (SIZE - 2.0 * MARGIN)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn roc_svg(plot: &PlotData) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (sx(0.0), sx(1.0), sy(0.0), sy(1.0));
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for i in 0..=5 {
        let v = f64::from(i) / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, sx(v), y0 + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, x0 - 6.0, sy(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">False positive rate</text>"#, (x0 + x1) / 2.0, SIZE - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">True positive rate</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(s, r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#bbbbbb" stroke-dasharray="4 4"/>"##);

    let mut legend_y = y1 + 14.0;
    for (k, curve) in plot.curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.fpr), sy(p.tpr))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{legend_y:.1}" fill="{color}" text-anchor="end">{} (AUC {:.3})</text>"#,
            x1 - 6.0,
            escape(&curve.model_id),
            curve.auc
        );
        legend_y += 14.0;
    }
    for p in &plot.rater_points {
        let (cx, cy) = (sx(p.fpr), sy(p.tpr));
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, cx + 6.0, cy - 6.0, escape(&p.rater_id));
    }
    s.push_str("</svg>\n");
    s
}
