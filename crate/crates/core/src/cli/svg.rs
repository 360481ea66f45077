//! Bar-and-polyline overlays of a binned estimate on its reference.

use std::fmt::Write;

use stablecond::verify::Histogram;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

pub fn overlay(h: &Histogram) -> String {
    let n = h.estimate.len().min(h.reference.len());
    let top = h.estimate.iter().chain(&h.reference).copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let bw = (W - 2.0 * PAD) / n.max(1) as f64;
    let y = |v: f64| H - PAD - (v / top) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="13">{}</text>"#, escape(&h.name));
    for i in 0..n {
        let v = h.estimate[i].max(0.0);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>"##,
            PAD + i as f64 * bw,
            y(v),
            bw,
            H - PAD - y(v)
        );
    }
    let pts: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", PAD + (i as f64 + 0.5) * bw, y(h.reference[i]))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#de2d26" stroke-width="1.5"/>"##, pts.join(" "));
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{0}" stroke="black"/>"##,
        H - PAD,
        W - PAD
    );
    if let (Some(a), Some(b)) = (h.edges.first(), h.edges.last()) {
        let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">{a:.3}</text>"#, H - PAD + 15.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{b:.3}</text>"#,
            W - PAD,
            H - PAD + 15.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{PAD}" font-family="sans-serif" font-size="11" text-anchor="end">{top:.3e}</text>"#, PAD - 4.0);
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
