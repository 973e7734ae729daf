//! Static SVG charts. Every drawn element carries `data-*` attributes with
//! the values it encodes, and the root records the value-to-pixel mapping.

use std::fmt::Write as _;

use driftbench_core::metrics::FiveNumberSummary;
use driftbench_core::schedule::PhaseMetrics;

const PLOT_TOP: f64 = 50.0;
const PLOT_BOTTOM: f64 = 290.0;
const PLOT_LEFT: f64 = 60.0;
const HEIGHT: f64 = 340.0;

/// Linear map of `[lo, hi]` onto the plot's vertical extent (higher values drawn higher).
fn y_of(v: f64, lo: f64, hi: f64) -> f64 {
    PLOT_BOTTOM - (v - lo) / (hi - lo) * (PLOT_BOTTOM - PLOT_TOP)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(out: &mut String, width: f64, lo: f64, hi: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{HEIGHT}" viewBox="0 0 {width} {HEIGHT}" data-plot-top="{PLOT_TOP}" data-plot-bottom="{PLOT_BOTTOM}" data-value-min="{lo}" data-value-max="{hi}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn y_axis(out: &mut String, right: f64, lo: f64, hi: f64, ticks: usize) {
    let _ = writeln!(out, r#"<g class="axis" font-family="sans-serif" font-size="10">"#);
    for i in 0..=ticks {
        let v = lo + (hi - lo) * i as f64 / ticks as f64;
        let y = y_of(v, lo, hi);
        let _ = writeln!(
            out,
            r##"<line x1="{PLOT_LEFT}" y1="{y:.3}" x2="{right:.1}" y2="{y:.3}" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.3}" text-anchor="end">{v:.2}</text>"#,
            PLOT_LEFT - 6.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{PLOT_LEFT}" y1="{PLOT_TOP}" x2="{PLOT_LEFT}" y2="{PLOT_BOTTOM}" stroke="#333"/>"##
    );
    let _ = writeln!(out, "</g>");
}

/// Train accuracy, test accuracy and MIA AUC per phase, on a [0, 1] axis.
pub fn line_plot(title: &str, phases: &[PhaseMetrics]) -> String {
    let width = 520.0;
    let right = width - 120.0;
    let (lo, hi) = (0.0, 1.0);
    let mut out = String::new();
    open(&mut out, width, lo, hi, title);
    y_axis(&mut out, right, lo, hi, 5);
    let n = phases.len().max(2);
    let x_of = |k: usize| PLOT_LEFT + 20.0 + (right - PLOT_LEFT - 40.0) * k as f64 / (n - 1) as f64;
    for (k, m) in phases.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">phase {}</text>"#,
            x_of(k),
            PLOT_BOTTOM + 16.0,
            m.phase_index
        );
    }
    type Series = (&'static str, &'static str, fn(&PhaseMetrics) -> f64);
    let series: [Series; 3] = [
        ("train_acc", "#2a9d3a", |m| m.train_accuracy),
        ("test_acc", "#1f5fbf", |m| m.test_accuracy),
        ("mia_auc", "#c8322b", |m| m.mia_auc),
    ];
    for (i, (name, colour, value)) in series.iter().enumerate() {
        let values: Vec<f64> = phases.iter().map(value).collect();
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| format!("{:.3},{:.3}", x_of(k), y_of(v, lo, hi)))
            .collect();
        let data: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-series="{name}" data-values="{}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            data.join(" "),
            points.join(" ")
        );
        let ly = PLOT_TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{name}</text>"#,
            right + 10.0,
            right + 30.0,
            right + 36.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

pub struct BoxGroup {
    pub label: String,
    pub paradigm: String,
    pub clients: usize,
    pub summary: Option<FiveNumberSummary>,
    pub points: Vec<f64>,
}

/// Per-group box plots of correlation values on a [-1, 1] axis. A group
/// without any valid value is drawn as a labelled gap.
pub fn box_plot(title: &str, groups: &[BoxGroup]) -> String {
    let slot = 80.0;
    let width = PLOT_LEFT + 20.0 + slot * groups.len().max(1) as f64;
    let (lo, hi) = (-1.0, 1.0);
    let mut out = String::new();
    open(&mut out, width, lo, hi, title);
    y_axis(&mut out, width - 10.0, lo, hi, 8);
    for (i, g) in groups.iter().enumerate() {
        let cx = PLOT_LEFT + 10.0 + slot * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            PLOT_BOTTOM + 16.0,
            escape(&g.label)
        );
        let Some(s) = g.summary else {
            let _ = writeln!(
                out,
                r#"<text class="empty" data-paradigm="{}" data-clients="{}" x="{cx:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">n/a</text>"#,
                g.paradigm,
                g.clients,
                y_of(0.0, lo, hi)
            );
            continue;
        };
        let y = |v: f64| y_of(v, lo, hi);
        let half = 18.0;
        let _ = writeln!(
            out,
            r#"<g class="box" data-paradigm="{}" data-clients="{}" data-min="{}" data-q1="{}" data-median="{}" data-q3="{}" data-max="{}">"#,
            g.paradigm, g.clients, s.min, s.q1, s.median, s.q3, s.max
        );
        let _ = writeln!(
            out,
            r##"<line class="whisker" x1="{cx:.3}" y1="{:.3}" x2="{cx:.3}" y2="{:.3}" stroke="#333"/>"##,
            y(s.max),
            y(s.min)
        );
        for (class, v) in [("cap-max", s.max), ("cap-min", s.min)] {
            let _ = writeln!(
                out,
                r##"<line class="{class}" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#333"/>"##,
                cx - half / 2.0,
                y(v),
                cx + half / 2.0,
                y(v)
            );
        }
        let _ = writeln!(
            out,
            r##"<rect class="iqr" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#9ecae1" stroke="#333"/>"##,
            cx - half,
            y(s.q3),
            2.0 * half,
            y(s.q1) - y(s.q3)
        );
        let _ = writeln!(
            out,
            r##"<line class="median" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#c8322b" stroke-width="2"/>"##,
            cx - half,
            y(s.median),
            cx + half,
            y(s.median)
        );
        for p in &g.points {
            let _ = writeln!(
                out,
                r##"<circle class="point" data-value="{p}" cx="{cx:.3}" cy="{:.3}" r="2" fill="#333" fill-opacity="0.5"/>"##,
                y(*p)
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn y_mapping_spans_the_plot() {
        assert_eq!(y_of(1.0, -1.0, 1.0), PLOT_TOP);
        assert_eq!(y_of(-1.0, -1.0, 1.0), PLOT_BOTTOM);
        assert_eq!(y_of(0.0, -1.0, 1.0), (PLOT_TOP + PLOT_BOTTOM) / 2.0);
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn empty_group_has_no_box() {
        let g = BoxGroup {
            label: "x".into(),
            paradigm: "uniform".into(),
            clients: 2,
            summary: None,
            points: vec![],
        };
        let svg = box_plot("t", &[g]);
        assert!(svg.contains("n/a"));
        assert!(!svg.contains("class=\"box\""));
    }
}
