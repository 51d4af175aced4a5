//! Static SVG renderings. Coordinates are printed with two decimals so the
//! files are byte-stable across runs.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 56.0;
const TOP: f64 = 32.0;
const PW: f64 = 380.0;
const PH: f64 = 272.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn header(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{PW}" height="{PH}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (x, y) = (px(f), py(f));
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{f:.2}</text>"#,
            TOP + PH + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{f:.2}</text>"#,
            LEFT - 4.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + PW / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + PH / 2.0,
        TOP + PH / 2.0,
        escape(y_label)
    );
    s
}

fn px(x: f64) -> f64 {
    LEFT + x.clamp(0.0, 1.0) * PW
}

fn py(y: f64) -> f64 {
    TOP + (1.0 - y.clamp(0.0, 1.0)) * PH
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Named polylines on the unit square, e.g. risk against coverage.
pub(crate) fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = header(title, x_label, y_label);
    for (i, (name, points)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            LEFT + PW - 110.0,
            LEFT + PW - 94.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + PW - 90.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Reliability diagram: one bar per bin at its accuracy, plus the diagonal.
pub(crate) fn reliability_plot(title: &str, bins: &[(f64, f64, f64, usize)]) -> String {
    let mut s = header(title, "confidence", "accuracy");
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for &(lo, hi, acc, count) in bins {
        if count == 0 {
            continue;
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" fill-opacity="0.7" stroke="white"/>"##,
            px(lo),
            py(acc),
            px(hi) - px(lo),
            py(0.0) - py(acc)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grid of cells shaded by value in [0, 1], labelled with the value.
pub(crate) fn heatmap(
    title: &str,
    rows: &[String],
    cols: &[String],
    values: &[Vec<f64>],
    x_label: &str,
    y_label: &str,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (cw, ch) = (PW / cols.len().max(1) as f64, PH / rows.len().max(1) as f64);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let (x, y) = (LEFT + c as f64 * cw, TOP + r as f64 * ch);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="rgb({shade},{shade},255)" stroke="white"/>"#
            );
            let ink = if v > 0.6 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{ink}">{v:.3}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    for (c, name) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + (c as f64 + 0.5) * cw,
            TOP + PH + 14.0,
            escape(name)
        );
    }
    for (r, name) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            TOP + (r as f64 + 0.5) * ch + 4.0,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + PW / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + PH / 2.0,
        TOP + PH / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed_and_stable() {
        let series = vec![("msp".to_string(), vec![(0.05, 0.9), (1.0, 0.875)])];
        let a = line_plot("risk <coverage>", "coverage", "risk", &series);
        assert_eq!(a, line_plot("risk <coverage>", "coverage", "risk", &series));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("&lt;coverage&gt;"));
        assert_eq!(a.matches("<polyline").count(), 1);
        let r = reliability_plot("rel", &[(0.0, 0.5, 0.2, 3), (0.5, 1.0, 0.0, 0)]);
        assert_eq!(r.matches("fill-opacity").count(), 1);
        let h = heatmap(
            "h",
            &["a".into()],
            &["x".into(), "y".into()],
            &[vec![0.1, 0.9]],
            "k",
            "s",
        );
        assert_eq!(h.matches("rgb(").count(), 2);
    }
}
