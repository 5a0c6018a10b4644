//! Self-contained SVG chart of mean evaluation reward with error bars.

use std::fmt::Write;

use crate::experiment::BatchSummary;

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 340.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Renders one point per batch at its mean evaluation reward, with a bar of
/// plus or minus one standard error, on a fixed [0, 1] reward axis.
pub fn comparison_svg(title: &str, batches: &[BatchSummary]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y_of = |r: f64| TOP + plot_h * (1.0 - r.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for k in 0..=4 {
        let r = k as f64 / 4.0;
        let y = y_of(r);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{r:.2}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">mean evaluation reward</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    let n = batches.len().max(1) as f64;
    for (i, b) in batches.iter().enumerate() {
        let x = LEFT + plot_w * (i as f64 + 0.5) / n;
        let (lo, hi) = (y_of(b.eval_mean - b.eval_se), y_of(b.eval_mean + b.eval_se));
        let y = y_of(b.eval_mean);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{lo:.1}" x2="{x:.1}" y2="{hi:.1}" stroke="#1f4e79" stroke-width="2"/>"##
        );
        for cap in [lo, hi] {
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{cap:.1}" x2="{:.1}" y2="{cap:.1}" stroke="#1f4e79" stroke-width="2"/>"##,
                x - 8.0,
                x + 8.0
            );
        }
        let _ = writeln!(s, r##"<circle cx="{x:.1}" cy="{y:.1}" r="5" fill="#1f4e79"/>"##);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 20.0,
            escape(&b.label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{:.3} ± {:.3} (n={})</text>"#,
            TOP + plot_h + 36.0,
            b.eval_mean,
            b.eval_se,
            b.n_trials - b.n_failed
        );
    }
    s.push_str("</svg>\n");
    s
}

/// CSV table of the plotted values.
pub fn comparison_csv(batches: &[BatchSummary]) -> String {
    let mut s = String::from("config,n_trials,n_failed,eval_mean,eval_se\n");
    for b in batches {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            b.label, b.n_trials, b.n_failed, b.eval_mean, b.eval_se
        );
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(label: &str, mean: f64, se: f64) -> BatchSummary {
        BatchSummary {
            label: label.into(),
            n_trials: 30,
            n_failed: 0,
            eval_mean: mean,
            eval_se: se,
            se_undefined: false,
        }
    }

    #[test]
    fn svg_has_one_marker_per_batch() {
        let svg = comparison_svg("t", &[batch("a", 0.5, 0.1), batch("b<", 0.9, 0.0)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("b&lt;"));
    }

    #[test]
    fn zero_se_draws_zero_length_bar() {
        let svg = comparison_svg("t", &[batch("a", 1.0, 0.0)]);
        let bar = svg.lines().find(|l| l.contains("stroke-width=\"2\"")).unwrap();
        assert!(bar.contains(r#"y1="40.0""#) && bar.contains(r#"y2="40.0""#), "{bar}");
    }

    #[test]
    fn csv_lists_batches_in_order() {
        let csv = comparison_csv(&[batch("obs-only", 0.5, 0.01), batch("expert", 1.0, 0.0)]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "config,n_trials,n_failed,eval_mean,eval_se");
        assert_eq!(lines[1], "obs-only,30,0,0.5,0.01");
        assert_eq!(lines[2], "expert,30,0,1,0");
    }
}
