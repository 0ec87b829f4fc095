//! SVG choropleth maps and line charts.
//!
//! Output is plain SVG 1.1 with generic font families. All coordinates are
//! written with at most two decimals so equal inputs give identical bytes.

use std::fmt::Write as _;

use crate::error::{Context, PipelineError, Result};
use crate::geo::{GeoTable, Ring};
use crate::ods::format_number;
use crate::table::{ColumnKind, TidyTable, Value};

/// Seven-step sequential ramp (ColorBrewer YlGnBu), light to dark.
pub const DEFAULT_PALETTE: [&str; 7] = [
    "#ffffcc", "#c7e9b4", "#7fcdbb", "#41b6c4", "#1d91c0", "#225ea8", "#0c2c84",
];
pub const DEFAULT_NO_DATA_FILL: &str = "#d9d9d9";
/// Okabe-Ito colors used for chart series, in order.
pub const SERIES_COLORS: [&str; 8] = [
    "#e69f00", "#56b4e9", "#009e73", "#f0e442", "#0072b2", "#d55e00", "#cc79a7", "#000000",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Classing {
    #[default]
    Quantile,
    EqualInterval,
}

impl std::str::FromStr for Classing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "quantile" => Ok(Classing::Quantile),
            "equal_interval" | "equal" => Ok(Classing::EqualInterval),
            _ => Err(format!("unknown classing {s:?}; expected quantile or equal_interval")),
        }
    }
}

/// `n` colors along the default ramp.
pub fn palette(n: usize) -> Vec<String> {
    if n == DEFAULT_PALETTE.len() {
        return DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect();
    }
    let stops: Vec<[f64; 3]> = DEFAULT_PALETTE.iter().map(|h| rgb(h)).collect();
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 } * (stops.len() - 1) as f64;
            let j = (t.floor() as usize).min(stops.len() - 2);
            let f = t - j as f64;
            let c: Vec<u8> = (0..3)
                .map(|k| (stops[j][k] + (stops[j + 1][k] - stops[j][k]) * f).round() as u8)
                .collect();
            format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
        })
        .collect()
}

fn rgb(hex: &str) -> [f64; 3] {
    let h = hex.trim_start_matches('#');
    let p = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).unwrap_or(0) as f64;
    [p(0), p(2), p(4)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoroplethSpec {
    pub value_column: String,
    /// Values above the cap are drawn in the top class.
    pub cap: Option<f64>,
    pub classes: usize,
    pub classing: Classing,
    pub palette: Vec<String>,
    pub no_data_fill: String,
    pub title: Option<String>,
    /// Map width in pixels, legend excluded.
    pub width: f64,
    /// Douglas-Peucker tolerance in output pixels.
    pub simplify_px: f64,
}

impl ChoroplethSpec {
    pub fn new(value_column: impl Into<String>) -> Self {
        ChoroplethSpec {
            value_column: value_column.into(),
            cap: None,
            classes: DEFAULT_PALETTE.len(),
            classing: Classing::Quantile,
            palette: palette(DEFAULT_PALETTE.len()),
            no_data_fill: DEFAULT_NO_DATA_FILL.to_string(),
            title: None,
            width: 800.0,
            simplify_px: 0.5,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    /// Sets the class count and resamples the default ramp to match.
    pub fn with_classes(mut self, classes: usize) -> Self {
        self.classes = classes;
        self.palette = palette(classes);
        self
    }

    pub fn with_classing(mut self, classing: Classing) -> Self {
        self.classing = classing;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(PipelineError::malformed(format!("map spec: {d}")));
        if self.classes < 2 {
            return bad(format!("{} classes requested, at least 2 required", self.classes));
        }
        if self.palette.len() != self.classes {
            return bad(format!("{} colors for {} classes", self.palette.len(), self.classes));
        }
        if self.cap.is_some_and(|c| !c.is_finite()) || self.width.is_nan() || self.width <= 0.0 || self.simplify_px.is_nan() || self.simplify_px < 0.0 {
            return bad("cap, width and tolerance must be finite and positive".into());
        }
        Ok(())
    }
}

/// Thresholds t1..t(k-1) separating `classes` classes. Equal intervals span
/// `[min, cap]` when a cap is given, `[min, max]` otherwise; quantiles use
/// the nearest-rank rule.
pub fn class_breaks(values: &[f64], classing: Classing, classes: usize, cap: Option<f64>) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .map(|x| cap.map_or(x, |c| x.min(c)))
        .collect();
    if v.is_empty() {
        return Err(PipelineError::EmptyInput(Context::new("no values to classify")));
    }
    if classes < 2 {
        return Ok(Vec::new());
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(match classing {
        Classing::Quantile => (1..classes)
            .map(|k| {
                let rank = (k * n).div_ceil(classes).max(1);
                v[rank - 1]
            })
            .collect(),
        Classing::EqualInterval => {
            let lo = v[0];
            let hi = cap.unwrap_or(v[n - 1]).max(lo);
            (1..classes)
                .map(|k| lo + (hi - lo) * k as f64 / classes as f64)
                .collect()
        }
    })
}

/// 1-based class of `value`: one more than the number of thresholds below it.
pub fn class_of(value: f64, thresholds: &[f64]) -> usize {
    1 + thresholds.iter().filter(|&&t| value > t).count()
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let (w, h) = (num(width), num(height));
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
}

fn numeric_values(table: &TidyTable, column: &str) -> Result<Vec<Option<f64>>> {
    let col = table.require(column)?;
    if !col.kind().is_numeric() {
        return Err(PipelineError::NonNumericColumn(Context::new(format!(
            "column {column:?} holds {:?} values",
            col.kind()
        ))));
    }
    Ok((0..col.len()).map(|r| col.get(r).as_f64()).collect())
}

fn perpendicular(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p[0] - a[0]).hypot(p[1] - a[1]);
    }
    ((p[0] - a[0]) * dy - (p[1] - a[1]) * dx).abs() / len
}

/// Douglas-Peucker on an open or closed polyline; endpoints are kept.
pub fn simplify(points: &[[f64; 2]], tolerance: f64) -> Vec<[f64; 2]> {
    if points.len() < 3 || tolerance <= 0.0 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        let mut best = (0.0, 0);
        for i in a + 1..b {
            let d = perpendicular(points[i], points[a], points[b]);
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > tolerance {
            keep[best.1] = true;
            stack.push((a, best.1));
            stack.push((best.1, b));
        }
    }
    points.iter().zip(keep).filter_map(|(p, k)| k.then_some(*p)).collect()
}

struct Projection {
    min_lon: f64,
    max_lat: f64,
    kx: f64,
    scale: f64,
    margin: f64,
}

impl Projection {
    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.margin + (p[0] - self.min_lon) * self.kx * self.scale,
            self.margin + (self.max_lat - p[1]) * self.scale,
        ]
    }
}

fn ring_path(out: &mut String, ring: &Ring, proj: &Projection, tolerance: f64) {
    let projected: Vec<[f64; 2]> = ring.iter().map(|&p| proj.apply(p)).collect();
    let mut simplified = simplify(&projected, tolerance);
    if simplified.len() < 4 {
        simplified = projected;
    }
    for (i, p) in simplified.iter().take(simplified.len() - 1).enumerate() {
        let _ = write!(out, "{}{},{}", if i == 0 { "M" } else { "L" }, num(p[0]), num(p[1]));
    }
    out.push('Z');
}

/// Renders one `<path>` per row that has a geometry.
pub fn choropleth(gt: &GeoTable, spec: &ChoroplethSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    let values = numeric_values(&gt.table, &spec.value_column)?;
    let capped: Vec<Option<f64>> = values
        .iter()
        .map(|v| v.filter(|x| x.is_finite()).map(|x| spec.cap.map_or(x, |c| x.min(c))))
        .collect();
    let mapped: Vec<f64> = capped
        .iter()
        .zip(&gt.features)
        .filter_map(|(v, f)| f.as_ref().and(*v))
        .collect();
    let thresholds = if mapped.is_empty() {
        Vec::new()
    } else {
        class_breaks(&mapped, spec.classing, spec.classes, spec.cap)?
    };

    let bbox = gt
        .features
        .iter()
        .flatten()
        .filter_map(|f| f.geometry.bbox())
        .reduce(|a, b| [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])])
        .unwrap_or([0.0, 0.0, 1.0, 1.0]);
    let margin = 10.0;
    let kx = ((bbox[1] + bbox[3]) / 2.0).to_radians().cos();
    let span_x = (bbox[2] - bbox[0]) * kx;
    let span_y = bbox[3] - bbox[1];
    let inner = spec.width - 2.0 * margin;
    let scale = if span_x > 0.0 { inner / span_x } else if span_y > 0.0 { inner / span_y } else { 1.0 };
    let proj = Projection { min_lon: bbox[0], max_lat: bbox[3], kx, scale, margin };
    let legend_w = 220.0;
    let title_h = if spec.title.is_some() { 24.0 } else { 0.0 };
    let legend_h = 40.0 + 20.0 * (spec.classes + 1) as f64;
    let map_h = span_y * scale + 2.0 * margin;
    let height = (map_h + title_h).max(legend_h + title_h);

    let mut out = String::new();
    svg_open(&mut out, spec.width + legend_w, height);
    if let Some(t) = &spec.title {
        let _ = writeln!(out, "<text x=\"{}\" y=\"18\" font-size=\"16\">{}</text>", num(margin), escape(t));
    }
    let _ = writeln!(
        out,
        "<g id=\"features\" transform=\"translate(0,{})\" stroke=\"#ffffff\" stroke-width=\"0.25\" fill-rule=\"evenodd\">",
        num(title_h)
    );
    for (row, feature) in gt.features.iter().enumerate() {
        let Some(feature) = feature else { continue };
        let fill = match capped[row] {
            Some(v) => &spec.palette[class_of(v, &thresholds).min(spec.classes) - 1],
            None => &spec.no_data_fill,
        };
        let mut d = String::new();
        for ring in feature.geometry.rings() {
            ring_path(&mut d, ring, &proj, spec.simplify_px);
        }
        let label = values[row].map(format_number).unwrap_or_else(|| "no data".to_string());
        let _ = writeln!(
            out,
            "<path d=\"{d}\" fill=\"{fill}\"><title>{}: {}</title></path>",
            escape(&feature.code),
            escape(&label)
        );
    }
    out.push_str("</g>\n");

    let lx = spec.width + 10.0;
    let _ = writeln!(out, "<g id=\"legend\" transform=\"translate({},{})\">", num(lx), num(title_h + 10.0));
    let heading = match spec.cap {
        Some(c) => format!("{} (capped at {})", spec.value_column, format_number(c)),
        None => spec.value_column.clone(),
    };
    let _ = writeln!(out, "<text x=\"0\" y=\"12\">{}</text>", escape(&heading));
    for k in 0..spec.classes {
        let label = if thresholds.is_empty() {
            format!("class {}", k + 1)
        } else if k == 0 {
            format!("up to {}", num(thresholds[0]))
        } else if k == spec.classes - 1 {
            format!("over {}", num(thresholds[k - 1]))
        } else {
            format!("{} to {}", num(thresholds[k - 1]), num(thresholds[k]))
        };
        let y = 24.0 + 20.0 * k as f64;
        let _ = writeln!(
            out,
            "<rect x=\"0\" y=\"{}\" width=\"16\" height=\"14\" fill=\"{}\"/><text x=\"22\" y=\"{}\">{}</text>",
            num(y),
            spec.palette[k],
            num(y + 11.0),
            escape(&label)
        );
    }
    let y = 24.0 + 20.0 * spec.classes as f64;
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"{}\" width=\"16\" height=\"14\" fill=\"{}\"/><text x=\"22\" y=\"{}\">no data</text>",
        num(y),
        spec.no_data_fill,
        num(y + 11.0)
    );
    out.push_str("</g>\n</svg>\n");
    Ok(out.into_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChartSpec {
    pub x_column: String,
    pub series_columns: Vec<String>,
    pub width: f64,
    pub height: f64,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
    pub title: Option<String>,
}

impl LineChartSpec {
    pub fn new(x_column: impl Into<String>, series_columns: Vec<String>) -> Self {
        LineChartSpec {
            x_column: x_column.into(),
            series_columns,
            width: 640.0,
            height: 400.0,
            x_label: None,
            y_label: None,
            title: None,
        }
    }
}

fn x_values(table: &TidyTable, column: &str) -> Result<Vec<Option<f64>>> {
    let col = table.require(column)?;
    if col.kind() == ColumnKind::Bool {
        return Err(PipelineError::NonNumericColumn(Context::new(format!("column {column:?} holds booleans"))));
    }
    (0..col.len())
        .map(|r| match col.get(r) {
            Value::Text(t) => {
                let t = t.trim();
                let lead: String = t.chars().take_while(|c| c.is_ascii_digit()).collect();
                crate::clean::parse_decimal(t)
                    .or_else(|| (lead.len() == 4).then(|| lead.parse().ok()).flatten())
                    .map(Some)
                    .ok_or_else(|| {
                        PipelineError::NonNumericColumn(Context::new(format!(
                            "column {column:?} value {t:?} is neither a number nor a year"
                        )))
                    })
            }
            v => Ok(v.as_f64()),
        })
        .collect()
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// One polyline per series; nulls split a series into segments and
/// isolated points are drawn as circles.
pub fn line_chart(table: &TidyTable, spec: &LineChartSpec) -> Result<Vec<u8>> {
    if table.n_rows() == 0 {
        return Err(PipelineError::EmptyInput(Context::new("chart input has no rows")));
    }
    if spec.series_columns.is_empty() {
        return Err(PipelineError::EmptyInput(Context::new("no series columns given")));
    }
    for (i, s) in spec.series_columns.iter().enumerate() {
        if spec.series_columns[..i].contains(s) {
            return Err(PipelineError::malformed(format!("chart spec: series {s:?} listed twice")));
        }
    }
    let xs = x_values(table, &spec.x_column)?;
    let series: Vec<Vec<Option<f64>>> = spec
        .series_columns
        .iter()
        .map(|s| numeric_values(table, s))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..table.n_rows()).filter(|&r| xs[r].is_some_and(f64::is_finite)).collect();
    order.sort_by(|&a, &b| xs[a].unwrap().total_cmp(&xs[b].unwrap()));
    if order.is_empty() {
        return Err(PipelineError::EmptyInput(Context::new("no rows have an x value")));
    }
    let x_lo = xs[order[0]].unwrap();
    let x_hi = xs[*order.last().unwrap()].unwrap();
    let ys = series.iter().flatten().flatten().copied().filter(|v| v.is_finite());
    let (mut y_lo, mut y_hi) = ys.fold((0.0f64, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !y_hi.is_finite() || y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    y_hi += (y_hi - y_lo) * 0.05;
    if y_lo < 0.0 {
        y_lo -= (y_hi - y_lo) * 0.05;
    }
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 0.5, x_lo + 0.5) };

    let (left, right, top, bottom) = (60.0, 140.0, if spec.title.is_some() { 36.0 } else { 16.0 }, 50.0);
    let pw = spec.width - left - right;
    let ph = spec.height - top - bottom;
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| top + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut out = String::new();
    svg_open(&mut out, spec.width, spec.height);
    if let Some(t) = &spec.title {
        let _ = writeln!(out, "<text x=\"{}\" y=\"22\" font-size=\"16\">{}</text>", num(left), escape(t));
    }
    out.push_str("<g id=\"axes\" stroke=\"#333333\" stroke-width=\"1\">\n");
    let _ = writeln!(out, "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>", num(left), num(top + ph), num(left + pw));
    let _ = writeln!(out, "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>", num(left), num(top), num(top + ph));
    out.push_str("</g>\n<g id=\"ticks\" fill=\"#333333\">\n");
    let mut distinct: Vec<f64> = order.iter().map(|&r| xs[r].unwrap()).collect();
    distinct.dedup();
    let x_ticks = if distinct.len() <= 12 { distinct } else { ticks(x_lo, x_hi, 6) };
    for x in x_ticks {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            num(px(x)),
            num(top + ph + 16.0),
            num(x)
        );
    }
    for y in ticks(y_lo, y_hi, 5) {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            num(left - 6.0),
            num(py(y) + 4.0),
            num((y * 10.0).round() / 10.0)
        );
    }
    out.push_str("</g>\n");
    if let Some(l) = &spec.x_label {
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", num(left + pw / 2.0), num(spec.height - 10.0), escape(l));
    }
    if let Some(l) = &spec.y_label {
        let _ = writeln!(
            out,
            "<text transform=\"translate(16,{}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
            num(top + ph / 2.0),
            escape(l)
        );
    }

    for (i, (name, values)) in spec.series_columns.iter().zip(&series).enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let _ = writeln!(out, "<g class=\"series\" data-series=\"{}\">", escape(name));
        let mut segments: Vec<Vec<[f64; 2]>> = vec![Vec::new()];
        for &r in &order {
            match values[r].filter(|v| v.is_finite()) {
                Some(y) => segments.last_mut().unwrap().push([px(xs[r].unwrap()), py(y)]),
                None if !segments.last().unwrap().is_empty() => segments.push(Vec::new()),
                None => {}
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            if seg.len() == 1 {
                let _ = writeln!(out, "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>", num(seg[0][0]), num(seg[0][1]));
            } else {
                let pts: Vec<String> = seg.iter().map(|p| format!("{},{}", num(p[0]), num(p[1]))).collect();
                let _ = writeln!(
                    out,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                    pts.join(" ")
                );
            }
        }
        out.push_str("</g>\n");
        let ly_f = top + 10.0 + 18.0 * i as f64;
        let ly = num(ly_f);
        let lx = left + pw + 12.0;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{}</text>",
            num(lx),
            num(lx + 20.0),
            num(lx + 26.0),
            num(ly_f + 4.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out.into_bytes())
}
