//! Minimal SVG line plots of episode traces. Presentation only; no metric
//! is derived from these files.

use crate::error::{Error, Result};
use crate::harness::trace::TraceRow;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 60.0;

/// Render v_o(t), and optionally i_l(t) on a secondary scale, as an SVG
/// document. Output bytes are a pure function of the input rows.
pub fn render_svg(rows: &[TraceRow], include_current: bool) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let t0 = rows.first().unwrap().t;
    let t1 = rows.last().unwrap().t;
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };

    let (v_min, v_max) = bounds(rows.iter().map(|r| r.v_o));
    let (i_min, i_max) = bounds(rows.iter().map(|r| r.i_l));

    let x = |t: f64| MARGIN + (t - t0) / t_span * (WIDTH - 2.0 * MARGIN);
    let y_of = |v: f64, lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { 1.0 };
        HEIGHT - MARGIN - (v - lo) / span * (HEIGHT - 2.0 * MARGIN)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));

    let polyline = |values: &mut dyn Iterator<Item = (f64, f64)>, lo: f64, hi: f64, color: &str| {
        let points: Vec<String> = values
            .map(|(t, v)| format!("{:.3},{:.3}", x(t), y_of(v, lo, hi)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        )
    };
    svg.push_str(&polyline(&mut rows.iter().map(|r| (r.t, r.v_o)), v_min, v_max, "#1f77b4"));
    if include_current {
        svg.push_str(&polyline(&mut rows.iter().map(|r| (r.t, r.i_l)), i_min, i_max, "#ff7f0e"));
    }

    // labels
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">t = {:.4} s</text>\n",
        MARGIN,
        HEIGHT - MARGIN / 2.0,
        t0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">t = {:.4} s</text>\n",
        WIDTH - MARGIN,
        HEIGHT - MARGIN / 2.0,
        t1
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#1f77b4\">v_o [{:.2}, {:.2}] V</text>\n",
        MARGIN,
        MARGIN / 2.0,
        v_min,
        v_max
    ));
    if include_current {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#ff7f0e\" text-anchor=\"end\">i_l [{:.2}, {:.2}] A</text>\n",
            WIDTH - MARGIN,
            MARGIN / 2.0,
            i_min,
            i_max
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
