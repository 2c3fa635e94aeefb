//! Static SVG figures rendered from the sweep CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 30.0, 40.0, 60.0); // left, right, top, bottom
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}">{}</text>"#,
            escape(s)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    fn circle(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{fill}"/>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Tick positions with a 1-2-5 step.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn from_points<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let (mut x, mut y) = (
            (f64::INFINITY, f64::NEG_INFINITY),
            (f64::INFINITY, f64::NEG_INFINITY),
        );
        for &(px, py) in pts {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
            } else {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            }
        };
        Self {
            x: pad(x),
            y: pad(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        let (l, r) = (MARGIN.0, WIDTH - MARGIN.1);
        l + (x - self.x.0) / (self.x.1 - self.x.0) * (r - l)
    }

    fn py(&self, y: f64) -> f64 {
        let (t, b) = (MARGIN.2, HEIGHT - MARGIN.3);
        b - (y - self.y.0) / (self.y.1 - self.y.0) * (b - t)
    }

    fn draw(&self, svg: &mut Svg, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN.0, WIDTH - MARGIN.1, MARGIN.2, HEIGHT - MARGIN.3);
        svg.line(l, b, r, b, "black");
        svg.line(l, t, l, b, "black");
        for x in ticks(self.x.0, self.x.1, 8) {
            let p = self.px(x);
            svg.line(p, b, p, b + 5.0, "black");
            svg.text(p, b + 18.0, "middle", 11.0, &fmt_tick(x));
        }
        for y in ticks(self.y.0, self.y.1, 6) {
            let p = self.py(y);
            svg.line(l - 5.0, p, l, p, "black");
            svg.line(l, p, r, p, "#e0e0e0");
            svg.text(l - 8.0, p + 4.0, "end", 11.0, &fmt_tick(y));
        }
        svg.text((l + r) / 2.0, HEIGHT - 15.0, "middle", 13.0, xlabel);
        svg.text((l + r) / 2.0, t - 15.0, "middle", 14.0, title);
        let _ = writeln!(
            svg.body,
            r#"<text x="18" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(ylabel)
        );
    }
}

fn fmt_tick(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn field<'a>(
    rec: &'a csv::StringRecord,
    headers: &csv::StringRecord,
    name: &str,
) -> Result<&'a str> {
    let idx = headers
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("missing column {name}"))?;
    rec.get(idx)
        .with_context(|| format!("short row, no {name}"))
}

fn number(rec: &csv::StringRecord, headers: &csv::StringRecord, name: &str) -> Result<f64> {
    let s = field(rec, headers, name)?;
    s.trim()
        .parse()
        .with_context(|| format!("column {name}: `{s}` is not a number"))
}

/// Renders `csv_text` (minc, rmax or tau layout) as an SVG document.
pub fn render(csv_text: &str) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let names: Vec<&str> = headers.iter().collect();
    match names.as_slice() {
        ["D", "L_H", "C_min_F", "criterion", "found"] => minc(&headers, &records),
        ["op", "D", "L_H", "C_F", "r_max", "error"] => rmax(&headers, &records),
        ["tau_s", "counterexamples"] => tau(&headers, &records),
        _ => bail!("unrecognized CSV header `{}`", names.join(",")),
    }
}

fn minc(headers: &csv::StringRecord, records: &[csv::StringRecord]) -> Result<String> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in records {
        let label = format!(
            "D={} ({})",
            fmt_tick(number(rec, headers, "D")?),
            field(rec, headers, "criterion")?
        );
        let entry = series.entry(label).or_default();
        if field(rec, headers, "found")? == "true" {
            entry.push((
                number(rec, headers, "L_H")? * 1e3,
                number(rec, headers, "C_min_F")? * 1e3,
            ));
        }
    }
    let axes = Axes::from_points(series.values().flatten());
    let mut svg = Svg::new(WIDTH, HEIGHT);
    axes.draw(
        &mut svg,
        "Minimum stabilizing capacitance",
        "L_B [mH]",
        "C_min [mF]",
    );
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let px: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (axes.px(x), axes.py(y))).collect();
        svg.polyline(&px, color);
        for &(x, y) in &px {
            svg.circle(x, y, color);
        }
        let ly = MARGIN.2 + 16.0 * (k as f64 + 1.0);
        svg.line(MARGIN.0 + 12.0, ly - 4.0, MARGIN.0 + 32.0, ly - 4.0, color);
        svg.text(MARGIN.0 + 38.0, ly, "start", 11.0, label);
    }
    Ok(svg.finish())
}

fn rmax_color(r: Option<f64>) -> String {
    match r {
        None => "#9e9e9e".to_string(),
        Some(r) => {
            // log-compressed magnitude, saturating at |r| = 1e4
            let t = ((1.0 + r.abs()).log10() / 4.0).min(1.0);
            let fade = (255.0 * (1.0 - t)).round() as u8;
            if r > 0.0 {
                format!("#ff{fade:02x}{fade:02x}")
            } else {
                format!("#{fade:02x}{fade:02x}ff")
            }
        }
    }
}

/// (L, C, r_max) of one map cell.
type Cell = (f64, f64, Option<f64>);

fn rmax(headers: &csv::StringRecord, records: &[csv::StringRecord]) -> Result<String> {
    // panel (op, D) -> (L, C) -> r_max
    let mut panels: BTreeMap<(String, String), Vec<Cell>> = BTreeMap::new();
    for rec in records {
        let key = (
            field(rec, headers, "op")?.to_string(),
            fmt_tick(number(rec, headers, "D")?),
        );
        let r = field(rec, headers, "r_max")?;
        let r = if r.is_empty() {
            None
        } else {
            Some(number(rec, headers, "r_max")?)
        };
        panels.entry(key).or_default().push((
            number(rec, headers, "L_H")?,
            number(rec, headers, "C_F")?,
            r,
        ));
    }
    let cols = panels.len().clamp(1, 3);
    let rows = panels.len().div_ceil(cols).max(1);
    let (pw, ph) = (300.0, 240.0);
    let mut svg = Svg::new(40.0 + cols as f64 * pw, 50.0 + rows as f64 * ph);
    svg.text(
        svg.width / 2.0,
        24.0,
        "middle",
        14.0,
        "Spectral abscissa r_max (red > 0, blue < 0, grey = error)",
    );
    if panels.is_empty() {
        svg.rect(60.0, 60.0, pw - 80.0, ph - 80.0, "none");
        svg.line(60.0, ph - 20.0, pw - 20.0, ph - 20.0, "black");
        svg.line(60.0, 60.0, 60.0, ph - 20.0, "black");
    }
    for (k, ((op, d), cells)) in panels.iter().enumerate() {
        let ox = 40.0 + (k % cols) as f64 * pw;
        let oy = 50.0 + (k / cols) as f64 * ph;
        let mut ls: Vec<f64> = cells.iter().map(|c| c.0).collect();
        let mut cs: Vec<f64> = cells.iter().map(|c| c.1).collect();
        ls.sort_by(f64::total_cmp);
        ls.dedup();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let (x0, y0, w, h) = (ox + 30.0, oy + 20.0, pw - 60.0, ph - 70.0);
        let cw = w / cs.len() as f64;
        let ch = h / ls.len() as f64;
        for &(l, c, r) in cells {
            let i = cs.iter().position(|&v| v == c).unwrap_or(0);
            let j = ls.iter().position(|&v| v == l).unwrap_or(0);
            svg.rect(
                x0 + i as f64 * cw,
                y0 + h - (j + 1) as f64 * ch,
                cw,
                ch,
                &rmax_color(r),
            );
        }
        svg.line(x0, y0 + h, x0 + w, y0 + h, "black");
        svg.line(x0, y0, x0, y0 + h, "black");
        svg.text(
            x0 + w / 2.0,
            y0 - 6.0,
            "middle",
            12.0,
            &format!("{op}, D={d}"),
        );
        if let (Some(c0), Some(c1)) = (cs.first(), cs.last()) {
            svg.text(
                x0,
                y0 + h + 14.0,
                "start",
                10.0,
                &format!("{} mF", fmt_tick(c0 * 1e3)),
            );
            svg.text(
                x0 + w,
                y0 + h + 14.0,
                "end",
                10.0,
                &format!("{} mF", fmt_tick(c1 * 1e3)),
            );
            svg.text(x0 + w / 2.0, y0 + h + 28.0, "middle", 11.0, "C");
        }
        if let (Some(l0), Some(l1)) = (ls.first(), ls.last()) {
            svg.text(x0 - 4.0, y0 + h, "end", 10.0, &fmt_tick(l0 * 1e3));
            svg.text(x0 - 4.0, y0 + 10.0, "end", 10.0, &fmt_tick(l1 * 1e3));
            svg.text(x0 - 4.0, y0 + h / 2.0, "end", 11.0, "L [mH]");
        }
    }
    Ok(svg.finish())
}

fn tau(headers: &csv::StringRecord, records: &[csv::StringRecord]) -> Result<String> {
    let pts = records
        .iter()
        .map(|rec| {
            Ok((
                number(rec, headers, "tau_s")? * 1e3,
                number(rec, headers, "counterexamples")?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut axes = Axes::from_points(pts.iter());
    axes.y.0 = axes.y.0.min(0.0);
    let mut svg = Svg::new(WIDTH, HEIGHT);
    axes.draw(
        &mut svg,
        "Sufficiency counterexamples per delay",
        "tau [ms]",
        "counterexamples",
    );
    let px: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (axes.px(x), axes.py(y))).collect();
    svg.polyline(&px, PALETTE[0]);
    for &(x, y) in &px {
        svg.circle(x, y, PALETTE[0]);
    }
    Ok(svg.finish())
}
