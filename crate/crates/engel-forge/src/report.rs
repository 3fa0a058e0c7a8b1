//! Report formatting shared by every verb.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::curve::PeriodicCurve;

/// Fixed 17-significant-digit formatting, so reports are byte-stable.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with every float printed by [`fmt17`].
struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize with fixed float formatting. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Envelope written by every verb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub verb: String,
    /// SHA-256 of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub result: T,
}

/// Machine-readable failure record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub tool: String,
    pub version: String,
    pub verb: String,
    pub config_hash: String,
    pub seed: u64,
    pub kind: String,
    pub message: String,
    /// Grid node or sample index when the failure was local.
    pub node: Option<usize>,
}

/// Join cells into one CSV line.
pub fn csv_line<I: IntoIterator<Item = String>>(cells: I) -> String {
    let mut s = cells.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Projection pole for sphere plots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pole {
    #[default]
    South,
    North,
}

/// Stereographic projection from `pole` onto the equatorial plane.
pub fn stereographic(p: [f64; 3], pole: Pole) -> [f64; 2] {
    match pole {
        Pole::South => [p[0] / (1.0 + p[2]), p[1] / (1.0 + p[2])],
        Pole::North => [p[0] / (1.0 - p[2]), p[1] / (1.0 - p[2])],
    }
}

const SIZE: f64 = 480.0;
const PALETTE: [&str; 4] = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98"];

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <title>{title}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Spherical curves in stereographic projection, with the equator drawn for
/// scale. Points projecting beyond radius 4 are dropped.
pub fn sphere_svg(title: &str, curves: &[&PeriodicCurve], pole: Pole) -> String {
    const REACH: f64 = 4.0;
    let scale = SIZE / (2.0 * 2.5);
    let c = SIZE / 2.0;
    let mut out = header(title);
    out.push_str(&format!(
        "<circle cx=\"{c}\" cy=\"{c}\" r=\"{scale}\" fill=\"none\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n"
    ));
    for (i, curve) in curves.iter().enumerate() {
        // split the polyline where points leave the visible disc
        let mut runs: Vec<Vec<[f64; 2]>> = vec![Vec::new()];
        for p in curve.sample(1024).into_iter().chain(std::iter::once(curve.eval(0.0))) {
            let q = stereographic(p, pole);
            if q[0].hypot(q[1]) <= REACH && q.iter().all(|v| v.is_finite()) {
                runs.last_mut().expect("non-empty").push(q);
            } else if !runs.last().expect("non-empty").is_empty() {
                runs.push(Vec::new());
            }
        }
        for run in runs.iter().filter(|r| r.len() > 1) {
            let pts: Vec<String> = run
                .iter()
                .map(|q| format!("{:.3},{:.3}", c + scale * q[0], c - scale * q[1]))
                .collect();
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
                PALETTE[i % PALETTE.len()],
                pts.join(" ")
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Margin against dilation on a log axis, with an optional dashed limit line.
pub fn margin_chart_svg(title: &str, points: &[(f64, f64)], limit: Option<f64>) -> String {
    let mut out = header(title);
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(l, m)| *l > 0.0 && m.is_finite())
        .collect();
    if finite.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (pad, w) = (48.0, SIZE - 96.0);
    let lx: Vec<f64> = finite.iter().map(|p| p.0.log10()).collect();
    let (x0, x1) = (
        lx.iter().cloned().fold(f64::INFINITY, f64::min),
        lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let top = finite
        .iter()
        .map(|p| p.1)
        .chain(limit)
        .fold(0.0, f64::max)
        .max(1e-300);
    let sx = |x: f64| pad + if x1 > x0 { w * (x - x0) / (x1 - x0) } else { w / 2.0 };
    let sy = |y: f64| pad + w * (1.0 - y / (1.1 * top));
    out.push_str(&format!(
        "<line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = pad + w,
        r = pad + w
    ));
    if let Some(l) = limit {
        out.push_str(&format!(
            "<line x1=\"{pad}\" y1=\"{y:.3}\" x2=\"{r}\" y2=\"{y:.3}\" stroke=\"#888888\" stroke-dasharray=\"5 3\"/>\n",
            y = sy(l),
            r = pad + w
        ));
    }
    let mut order: Vec<usize> = (0..finite.len()).collect();
    order.sort_by(|a, b| lx[*a].total_cmp(&lx[*b]));
    let pts: Vec<String> = order
        .iter()
        .map(|&i| format!("{:.3},{:.3}", sx(lx[i]), sy(finite[i].1)))
        .collect();
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        PALETTE[0],
        pts.join(" ")
    ));
    for &i in &order {
        out.push_str(&format!(
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"{}\"/>\n",
            sx(lx[i]),
            sy(finite[i].1),
            PALETTE[1]
        ));
    }
    out.push_str(&format!(
        "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">log10 λ: {x0:.2} .. {x1:.2}, max {top:.4e}</text>\n",
        SIZE - 12.0
    ));
    out.push_str("</svg>\n");
    out
}
