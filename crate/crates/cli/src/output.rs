//! CSV field formatting and minimal self-contained SVG line charts.

use std::fs;
use std::io::Write;
use std::path::Path;

/// Formats a float with nine significant digits, scientific notation.
/// Every CSV float field goes through this so runs are byte-comparable.
pub fn fmt9(x: f64) -> String {
    format!("{:.8e}", x)
}

/// Writes `header` and `rows` to `path` as UTF-8 CSV.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let mut out = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    fs::write(path, out)
}

/// One plotted line: a labelled polyline in a fixed color.
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 55.0;

/// Renders an SVG 1.1 line chart: axes, one polyline per series, a legend of
/// the distinct labels, and an optional dashed horizontal reference line.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    reference: Option<(f64, &str)>,
) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if let Some((y, _)) = reference {
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let mut w = |s: &str| svg.push_str(s);
    w(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    w("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    w(&format!(
        "<text x=\"{:.1}\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
    // axes
    w(&format!(
        "<line x1=\"{m}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    w(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        w(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
            sx(fx),
            HEIGHT - MARGIN + 18.0,
            fx
        ));
        w(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fy
        ));
    }
    w(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label)
    ));
    w(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        xml_escape(y_label)
    ));
    if let Some((y, label)) = reference {
        w(&format!(
            "<line x1=\"{m}\" y1=\"{y:.2}\" x2=\"{r:.1}\" y2=\"{y:.2}\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n",
            m = MARGIN,
            r = WIDTH - MARGIN,
            y = sy(y)
        ));
        w(&format!(
            "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"gray\">{}</text>\n",
            WIDTH - MARGIN,
            sy(y) - 5.0,
            xml_escape(label)
        ));
    }
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        w(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" stroke-opacity=\"0.8\" points=\"{}\"><title>{}</title></polyline>\n",
            s.color,
            pts.join(" "),
            xml_escape(&s.label)
        ));
    }
    // legend: first series of each distinct color
    let mut seen: Vec<&str> = Vec::new();
    let mut ly = MARGIN + 8.0;
    for s in series {
        let key = s.label.split_whitespace().next().unwrap_or(&s.label);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        w(&format!(
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{x2:.1}\" y2=\"{y:.1}\" stroke=\"{c}\" stroke-width=\"2\"/>\n",
            x = WIDTH - MARGIN - 110.0,
            x2 = WIDTH - MARGIN - 85.0,
            y = ly,
            c = s.color
        ));
        w(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN - 78.0,
            ly + 4.0,
            xml_escape(key)
        ));
        ly += 18.0;
    }
    w("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes an SVG chart to `path`.
pub fn write_svg(path: &Path, svg: &str) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(svg.as_bytes())
}

/// A small palette cycled by index.
pub fn palette(i: usize) -> &'static str {
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
    ];
    COLORS[i % COLORS.len()]
}
