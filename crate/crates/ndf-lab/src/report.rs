//! Line-chart rendering of accuracy curves as standalone SVG.
//!
//! One polyline per `(strategy, run_id)` series, colored by strategy; axes
//! show effective training instances against test accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::csvio::CurveRow;
use crate::error::{Error, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

const STRATEGY_COLORS: &[(&str, &str)] = &[
    ("unfiltered", "#1f77b4"),
    ("spl", "#2ca02c"),
    ("randdrop", "#ff7f0e"),
    ("ndf", "#d62728"),
];

fn color_for(strategy: &str, fallback_idx: usize) -> &'static str {
    for (name, color) in STRATEGY_COLORS {
        if strategy.starts_with(name) {
            return color;
        }
    }
    const EXTRA: &[&str] = &["#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    EXTRA[fallback_idx % EXTRA.len()]
}

/// Renders the rows of one or more `curve.csv` files into an SVG chart.
pub fn render_curves_svg(rows: &[CurveRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::input("no curve rows to plot"));
    }

    // group by (strategy, run_id), preserving a stable order
    let mut series: BTreeMap<(String, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series
            .entry((r.strategy.clone(), r.run_id))
            .or_default()
            .push((r.effective_instances as f64, r.test_accuracy));
    }

    let x_max = rows
        .iter()
        .map(|r| r.effective_instances)
        .max()
        .unwrap()
        .max(1) as f64;
    let y_min = rows
        .iter()
        .map(|r| r.test_accuracy)
        .fold(f64::INFINITY, f64::min)
        .min(0.9)
        .max(0.0);
    let y_min = (y_min * 10.0).floor() / 10.0;
    let y_max = 1.0;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + x / x_max * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#,
        x0 = MARGIN_LEFT,
        x1 = WIDTH - MARGIN_RIGHT,
        y0 = MARGIN_TOP,
        y1 = HEIGHT - MARGIN_BOTTOM,
    );

    // x ticks
    for i in 0..=5 {
        let x = x_max * i as f64 / 5.0;
        let px = sx(x);
        let py = HEIGHT - MARGIN_BOTTOM;
        let _ = writeln!(
            svg,
            r#"<line x1="{px}" y1="{py}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            py + 5.0,
            py + 20.0,
            x as u64
        );
    }
    // y ticks
    let y_ticks = 5;
    for i in 0..=y_ticks {
        let y = y_min + (y_max - y_min) * i as f64 / y_ticks as f64;
        let py = sy(y);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="black"/><text x="{}" y="{}" font-size="12" text-anchor="end">{y:.2}</text>"#,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT,
            MARGIN_LEFT - 9.0,
            py + 4.0
        );
        // light gridline
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="#dddddd" stroke-dasharray="3,3"/>"##,
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT
        );
    }

    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">effective training instances</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">test accuracy</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // series
    for (idx, ((strategy, run_id), points)) in series.iter().enumerate() {
        let color = color_for(strategy, idx);
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" opacity="0.85" points="{}"/>"#,
            path.join(" ")
        );
        let _ = run_id;
    }

    // legend: one entry per strategy
    let mut seen = Vec::new();
    for (strategy, _) in series.keys() {
        if !seen.contains(strategy) {
            seen.push(strategy.clone());
        }
    }
    for (i, strategy) in seen.iter().enumerate() {
        let y = MARGIN_TOP + 18.0 + i as f64 * 20.0;
        let x = WIDTH - MARGIN_RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2.5"/><text x="{}" y="{}" font-size="13">{strategy}</text>"#,
            x + 26.0,
            color_for(strategy, i),
            x + 34.0,
            y + 4.0
        );
    }

    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

pub fn write_report(rows: &[CurveRow], path: &Path) -> Result<()> {
    let svg = render_curves_svg(rows)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_svg_with_legend() {
        let rows = vec![
            CurveRow {
                run_id: 0,
                strategy: "unfiltered".into(),
                effective_instances: 500,
                test_accuracy: 0.5,
            },
            CurveRow {
                run_id: 0,
                strategy: "unfiltered".into(),
                effective_instances: 1000,
                test_accuracy: 0.8,
            },
            CurveRow {
                run_id: 0,
                strategy: "ndf".into(),
                effective_instances: 500,
                test_accuracy: 0.7,
            },
        ];
        let svg = render_curves_svg(&rows).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("ndf"));
        assert!(svg.contains("unfiltered"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_curves_svg(&[]).is_err());
    }
}
