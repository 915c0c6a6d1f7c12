//! Minimal SVG line charts: HI trace, its bound, the end of burn-in and
//! shaded over-bound steps.

use std::fmt::Write;

use modhi::engine::Phase;
use modhi::runlog::{Evaluation, LogTable};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;

pub struct Series<'a> {
    pub title: &'a str,
    /// `(t, evaluation)` in step order.
    pub points: Vec<(u64, Evaluation)>,
}

/// One chart per sensor, then the joint HI, named by series title.
pub fn series_from_table(table: &LogTable) -> Vec<Series<'_>> {
    let mut out: Vec<Series> = table
        .sensors
        .iter()
        .enumerate()
        .map(|(i, s)| Series {
            title: s.as_str(),
            points: table
                .rows
                .iter()
                .filter_map(|r| r.sensors[i].map(|e| (r.t, e)))
                .collect(),
        })
        .collect();
    out.push(Series {
        title: "joint",
        points: table.rows.iter().filter_map(|r| r.joint.map(|e| (r.t, e))).collect(),
    });
    out
}

/// Last burn-in step, if the log has one.
pub fn burn_in_end(table: &LogTable) -> Option<u64> {
    table
        .rows
        .iter()
        .filter(|r| r.phase == Phase::BurnIn)
        .map(|r| r.t)
        .max()
}

pub fn render(series: &Series, t_max: u64, burn_in_end: Option<u64>) -> String {
    let t_max = t_max.max(1) as f64;
    let y_max = series
        .points
        .iter()
        .flat_map(|(_, e)| [e.hi, e.bound.unwrap_or(0.0)])
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max)
        .max(1e-12)
        * 1.1;
    let x = |t: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * t / t_max;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v / y_max);
    let step_w = ((WIDTH - 2.0 * MARGIN) / t_max).max(1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(series.title)
    );
    for (t, _) in series.points.iter().filter(|(_, e)| e.over) {
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{MARGIN}" width="{step_w:.2}" height="{:.2}" fill="#f4b6b6"/>"##,
            x(*t as f64) - step_w / 2.0,
            HEIGHT - 2.0 * MARGIN
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b:.2}" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text><text x="4" y="{:.2}" font-family="sans-serif" font-size="11">{:.3e}</text>"#,
        WIDTH - MARGIN - 30.0,
        HEIGHT - MARGIN + 16.0,
        t_max as u64,
        MARGIN + 4.0,
        y_max
    );
    if let Some(b) = burn_in_end {
        let _ = writeln!(
            s,
            r##"<line x1="{bx:.2}" y1="{MARGIN}" x2="{bx:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
            HEIGHT - MARGIN,
            bx = x(b as f64)
        );
    }
    let polyline = |values: Vec<(f64, f64)>, colour: &str, s: &mut String| {
        if values.is_empty() {
            return;
        }
        let pts: Vec<String> = values
            .iter()
            .map(|(t, v)| format!("{:.2},{:.2}", x(*t), y(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    };
    polyline(
        series.points.iter().map(|(t, e)| (*t as f64, e.hi)).collect(),
        "#1f5fbf",
        &mut s,
    );
    polyline(
        series
            .points
            .iter()
            .filter_map(|(t, e)| e.bound.map(|b| (*t as f64, b)))
            .collect(),
        "#c0392b",
        &mut s,
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shading_per_over_step() {
        let e = |hi: f64, over: bool| Evaluation {
            hi,
            bound: Some(1.0),
            over,
        };
        let s = Series {
            title: "a<b",
            points: vec![(5, e(0.5, false)), (6, e(1.5, true)), (7, e(2.0, true))],
        };
        let svg = render(&s, 10, Some(4));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("#f4b6b6").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("stroke-dasharray"));
    }
}
