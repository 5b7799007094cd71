//! Deterministic SVG rendering. Text output with fixed element ordering so
//! plots can be golden-file tested byte for byte.

use std::fmt::Write as _;

use crate::distribution::Distribution;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// One labelled point on the cultural-map scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub label: String,
    pub mode: String,
    pub trad_sec: f64,
    pub surv_self: f64,
}

fn coord(value: f64) -> String {
    format!("{value:.2}")
}

fn label(value: f64) -> String {
    format!("{value:.4}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Scatter over the unit square: x is Survival → Self-Expression, y is
/// Traditional → Secular-Rational. Fixed 1000×1000 viewBox.
pub fn map_scatter_svg(points: &[MapPoint]) -> String {
    let (x0, y0, x1, y1) = (100.0, 60.0, 940.0, 900.0);
    let to_x = |v: f64| x0 + v * (x1 - x0);
    let to_y = |v: f64| y1 - v * (y1 - y0);

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 1000\" \
         font-family=\"sans-serif\" font-size=\"16\">\n",
    );
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"1000\" height=\"1000\" fill=\"#ffffff\"/>\n");
    // frame and gridlines at 0.25 steps
    for step in 0..=4 {
        let fraction = step as f64 / 4.0;
        let gx = to_x(fraction);
        let gy = to_y(fraction);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            coord(gx),
            coord(y0),
            coord(gx),
            coord(y1)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            coord(x0),
            coord(gy),
            coord(x1),
            coord(gy)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555555\">{}</text>",
            coord(gx),
            coord(y1 + 28.0),
            label(fraction)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" fill=\"#555555\">{}</text>",
            coord(x0 - 10.0),
            coord(gy + 6.0),
            label(fraction)
        );
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>",
        coord(x0),
        coord(y0),
        coord(x1 - x0),
        coord(y1 - y0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"952\" text-anchor=\"middle\">Survival → Self-Expression</text>",
        coord((x0 + x1) / 2.0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"28\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 28 {})\">Traditional → Secular-Rational</text>",
        coord((y0 + y1) / 2.0),
        coord((y0 + y1) / 2.0)
    );

    for (i, point) in points.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let px = to_x(point.surv_self);
        let py = to_y(point.trad_sec);
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"8\" fill=\"{color}\"/>",
            coord(px),
            coord(py)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{} ({})</text>",
            coord(px + 12.0),
            coord(py + 5.0),
            escape(&point.label),
            escape(&point.mode)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bar chart for one item: anchors on the x-axis, one bar group per
/// anchor with the model bar first and one bar per reference country.
/// Countries with no data are listed in a footnote element.
pub fn item_bar_chart(
    item_id: &str,
    model: &Distribution,
    references: &[(String, Distribution)],
    missing_countries: &[String],
) -> String {
    let (x0, y0, x1, y1) = (80.0, 70.0, 960.0, 520.0);
    let n_anchors = model.len();
    let n_sources = 1 + references.len();
    let group_width = (x1 - x0) / n_anchors as f64;
    let bar_width = (group_width * 0.8) / n_sources as f64;

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 620\" \
         font-family=\"sans-serif\" font-size=\"14\">\n",
    );
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"1000\" height=\"620\" fill=\"#ffffff\"/>\n");
    let _ = writeln!(
        svg,
        "<text x=\"500\" y=\"30\" text-anchor=\"middle\" font-size=\"20\">{}</text>",
        escape(item_id)
    );

    // legend: model plus each country, in column order
    let mut legend_x = x0;
    for (i, source) in std::iter::once("model")
        .chain(references.iter().map(|(c, _)| c.as_str()))
        .enumerate()
    {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"44\" width=\"14\" height=\"14\" fill=\"{color}\"/>",
            coord(legend_x)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"56\">{}</text>",
            coord(legend_x + 20.0),
            escape(source)
        );
        legend_x += 26.0 + 9.0 * source.len() as f64 + 14.0;
    }

    // y gridlines at 0.25 steps
    for step in 0..=4 {
        let fraction = step as f64 / 4.0;
        let gy = y1 - fraction * (y1 - y0);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            coord(x0),
            coord(gy),
            coord(x1),
            coord(gy)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" fill=\"#555555\">{}</text>",
            coord(x0 - 8.0),
            coord(gy + 5.0),
            label(fraction)
        );
    }

    for (anchor_index, (anchor_id, model_prob)) in model.iter().enumerate() {
        let group_x = x0 + anchor_index as f64 * group_width + group_width * 0.1;
        let sources = std::iter::once(model_prob)
            .chain(references.iter().map(|(_, dist)| {
                dist.prob_of(anchor_id).unwrap_or(0.0)
            }));
        for (source_index, prob) in sources.enumerate() {
            let color = PALETTE[source_index % PALETTE.len()];
            let height = prob.clamp(0.0, 1.0) * (y1 - y0);
            let bx = group_x + source_index as f64 * bar_width;
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>",
                coord(bx),
                coord(y1 - height),
                coord(bar_width * 0.92),
                coord(height)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\" fill=\"#333333\">{}</text>",
                coord(bx + bar_width * 0.46),
                coord(y1 - height - 4.0),
                label(prob)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            coord(group_x + group_width * 0.4),
            coord(y1 + 24.0),
            escape(anchor_id)
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>",
        coord(x0),
        coord(y1),
        coord(x1),
        coord(y1)
    );

    if !missing_countries.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"600\" font-size=\"12\" fill=\"#777777\" class=\"footnote\">no reference data: {}</text>",
            coord(x0),
            escape(&missing_countries.join(", "))
        );
    }
    svg.push_str("</svg>\n");
    svg
}
