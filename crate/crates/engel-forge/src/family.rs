//! Families of periodic curves over a three-dimensional base.
//!
//! A fiber model hands out the series coefficients of its curve as jets in the
//! base coordinates, so frames built from it carry exact base derivatives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::{PeriodicCurve, TWO_PI};
use crate::error::{ForgeError, Result};
use crate::jet::{self, Jet};
use crate::vec3::V3;

/// Base chart: a box in R³ or the 3-torus with angle coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseChart {
    Box { lo: V3, hi: V3 },
    /// Angles with period `2π` on every axis.
    Torus,
}

impl BaseChart {
    pub fn unit_box() -> BaseChart {
        BaseChart::Box {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    /// Coordinate of node `i` of `n` along `axis`.
    pub fn node(&self, axis: usize, i: usize, n: usize) -> f64 {
        match self {
            BaseChart::Box { lo, hi } => {
                if n <= 1 {
                    0.5 * (lo[axis] + hi[axis])
                } else {
                    lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (n - 1) as f64
                }
            }
            BaseChart::Torus => TWO_PI * i as f64 / n as f64,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, BaseChart::Torus)
    }
}

/// Sample grid on chart × circle: `base[k]` nodes per axis, `fiber` values of `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub chart: BaseChart,
    pub base: [usize; 3],
    pub fiber: usize,
}

impl SampleGrid {
    pub fn new(chart: BaseChart, base: [usize; 3], fiber: usize) -> SampleGrid {
        SampleGrid { chart, base, fiber }
    }

    pub fn base_count(&self) -> usize {
        self.base.iter().product()
    }

    pub fn len(&self) -> usize {
        self.base_count() * self.fiber
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Base point of flat base index `k` (x fastest).
    pub fn base_point(&self, k: usize) -> V3 {
        let idx = unflatten(k, self.base);
        [0, 1, 2].map(|a| self.chart.node(a, idx[a], self.base[a]))
    }

    pub fn fiber_params(&self) -> Vec<f64> {
        (0..self.fiber).map(|j| j as f64 / self.fiber as f64).collect()
    }

    /// Sample `s = k·fiber + j` as `(x, t)`.
    pub fn point(&self, s: usize) -> [f64; 4] {
        let x = self.base_point(s / self.fiber);
        [x[0], x[1], x[2], (s % self.fiber) as f64 / self.fiber as f64]
    }

    /// Grid neighbours of a sample (forward along each axis), for Lipschitz
    /// estimates.
    pub fn forward_neighbours(&self, s: usize) -> Vec<usize> {
        let (k, j) = (s / self.fiber, s % self.fiber);
        let idx = unflatten(k, self.base);
        let mut out = Vec::new();
        for a in 0..3 {
            if idx[a] + 1 < self.base[a] {
                let mut n = idx;
                n[a] += 1;
                out.push(flatten(n, self.base) * self.fiber + j);
            }
        }
        out.push(k * self.fiber + (j + 1) % self.fiber);
        out
    }
}

pub(crate) fn unflatten(k: usize, res: [usize; 3]) -> [usize; 3] {
    [k % res[0], (k / res[0]) % res[1], k / (res[0] * res[1])]
}

pub(crate) fn flatten(i: [usize; 3], res: [usize; 3]) -> usize {
    i[0] + res[0] * (i[1] + res[1] * i[2])
}

/// Series coefficients whose entries are jets in the base variables.
#[derive(Clone, Debug)]
pub struct SeriesJets {
    pub a: Vec<[Jet; 3]>,
    pub b: Vec<[Jet; 3]>,
}

impl SeriesJets {
    /// Constant coefficients (no base dependence).
    pub fn from_curve(c: &PeriodicCurve, order: u8) -> SeriesJets {
        let lift = |v: &V3| v.map(|x| Jet::constant(x, order));
        SeriesJets {
            a: c.cos_coeffs().iter().map(lift).collect(),
            b: c.sin_coeffs().iter().map(lift).collect(),
        }
    }

    /// `t`-derivative, computed on coefficients.
    pub fn derivative(&self) -> SeriesJets {
        let zero = [Jet::constant(0.0, self.a[0][0].order()); 3];
        let mut a = vec![zero; self.a.len()];
        let mut b = vec![zero; self.a.len()];
        for k in 1..self.a.len() {
            let w = TWO_PI * k as f64;
            a[k] = self.b[k].map(|j| j * w);
            b[k] = self.a[k].map(|j| j * -w);
        }
        SeriesJets { a, b }
    }

    /// Jet of the curve in `(x, t)` at parameter `t`.
    pub fn eval(&self, t: f64) -> [Jet; 3] {
        let order = self.a[0][0].order();
        let mut out = [Jet::constant(0.0, order); 3];
        for i in 0..3 {
            out[i].axpy(1.0, &self.a[0][i]);
        }
        for k in 1..self.a.len() {
            let w = TWO_PI * k as f64;
            let ec = jet::trig_taylor(w, t, 0.0);
            let es = jet::trig_taylor(w, t, -0.5 * std::f64::consts::PI);
            for i in 0..3 {
                out[i].acc_product_t(&self.a[k][i], &ec);
                out[i].acc_product_t(&self.b[k][i], &es);
            }
        }
        out
    }

    /// Plain coefficients (values of the jets).
    pub fn values(&self) -> PeriodicCurve {
        PeriodicCurve::new(
            self.a.iter().map(jet::values).collect(),
            self.b.iter().map(jet::values).collect(),
        )
        .expect("finite coefficients")
    }
}

/// A smooth family of periodic curves over a base chart.
pub trait FiberModel: Send + Sync {
    /// Coefficients at base point `x` given as jets.
    fn coefficients(&self, x: &[Jet; 3]) -> SeriesJets;

    /// True when the curve does not depend on the base point.
    fn is_base_independent(&self) -> bool {
        false
    }

    fn curve_at(&self, x: V3) -> PeriodicCurve {
        self.coefficients(&x.map(|v| Jet::constant(v, 0))).values()
    }

    /// Jet of the fibre curve (or its `t`-derivative when `derived`) at `(x, t)`.
    fn fiber_jet(&self, x: &[Jet; 3], t: f64, derived: bool) -> [Jet; 3] {
        let c = self.coefficients(x);
        if derived { c.derivative().eval(t) } else { c.eval(t) }
    }
}

/// Nodewise curves on a grid with tricubic (Catmull-Rom) interpolation of
/// coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    pub chart: BaseChart,
    pub res: [usize; 3],
    pub nodes: Vec<PeriodicCurve>,
}

impl CurveFamily {
    pub fn new(chart: BaseChart, res: [usize; 3], nodes: Vec<PeriodicCurve>) -> Result<CurveFamily> {
        if res.iter().any(|r| *r == 0) || nodes.len() != res.iter().product::<usize>() {
            return Err(ForgeError::Invalid(format!(
                "family with resolution {res:?} needs {} node curves, got {}",
                res.iter().product::<usize>(),
                nodes.len()
            )));
        }
        if let BaseChart::Box { lo, hi } = chart {
            if (0..3).any(|a| !(hi[a] > lo[a])) {
                return Err(ForgeError::Invalid("box chart needs lo < hi on every axis".into()));
            }
        }
        let modes = nodes.iter().map(|c| c.modes()).max().unwrap_or(0);
        let nodes = nodes.into_iter().map(|c| c.with_modes(modes)).collect();
        Ok(CurveFamily { chart, res, nodes })
    }

    /// The same curve at every node.
    pub fn constant(chart: BaseChart, res: [usize; 3], curve: PeriodicCurve) -> CurveFamily {
        let n = res.iter().product();
        CurveFamily {
            chart,
            res,
            nodes: vec![curve; n],
        }
    }

    /// Sample a model at the nodes.
    pub fn from_model(model: &dyn FiberModel, chart: BaseChart, res: [usize; 3]) -> Result<CurveFamily> {
        let n: usize = res.iter().product();
        let nodes = (0..n)
            .map(|k| {
                let i = unflatten(k, res);
                model.curve_at([0, 1, 2].map(|a| chart.node(a, i[a], res[a])))
            })
            .collect();
        CurveFamily::new(chart, res, nodes)
    }

    pub fn node_point(&self, k: usize) -> V3 {
        let i = unflatten(k, self.res);
        [0, 1, 2].map(|a| self.chart.node(a, i[a], self.res[a]))
    }

    pub fn modes(&self) -> usize {
        self.nodes[0].modes()
    }

    /// Apply a map to every node curve.
    pub fn map_nodes<F>(&self, f: F) -> Result<CurveFamily>
    where
        F: Fn(usize, &PeriodicCurve) -> Result<PeriodicCurve> + Sync,
    {
        use rayon::prelude::*;
        let nodes = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(k, c)| f(k, c).map_err(|e| e.at_node(k)))
            .collect::<Result<Vec<_>>>()?;
        CurveFamily::new(self.chart, self.res, nodes)
    }

    /// Catmull-Rom weights along one axis: `(node indices, weight jets)`.
    fn axis_weights(&self, axis: usize, x: &Jet) -> Vec<(usize, Jet)> {
        let n = self.res[axis];
        let order = x.order();
        if n == 1 {
            return vec![(0, Jet::constant(1.0, order))];
        }
        let (u, periodic) = match self.chart {
            BaseChart::Box { lo, hi } => {
                let h = (hi[axis] - lo[axis]) / (n - 1) as f64;
                ((*x - lo[axis]) / h, false)
            }
            BaseChart::Torus => (*x * (n as f64 / TWO_PI), true),
        };
        let cell = if periodic {
            u.value().floor()
        } else {
            u.value().floor().clamp(0.0, (n - 2) as f64)
        };
        let s = u - cell;
        let s2 = s * s;
        let s3 = s2 * s;
        let w = [
            (s3 * -1.0 + s2 * 2.0 - s) * 0.5,
            (s3 * 3.0 - s2 * 5.0 + 2.0) * 0.5,
            (s3 * -3.0 + s2 * 4.0 + s) * 0.5,
            (s3 - s2) * 0.5,
        ];
        let base = cell as i64;
        (0..4)
            .map(|m| {
                let i = base - 1 + m as i64;
                let idx = if periodic {
                    i.rem_euclid(n as i64) as usize
                } else {
                    i.clamp(0, n as i64 - 1) as usize
                };
                (idx, w[m])
            })
            .collect()
    }
}

impl FiberModel for CurveFamily {
    fn coefficients(&self, x: &[Jet; 3]) -> SeriesJets {
        let order = x[0].order();
        let modes = self.modes();
        let zero = [Jet::constant(0.0, order); 3];
        let mut out = SeriesJets {
            a: vec![zero; modes + 1],
            b: vec![zero; modes + 1],
        };
        if self.is_base_independent() {
            return SeriesJets::from_curve(&self.nodes[0], order);
        }
        let wx = self.axis_weights(0, &x[0]);
        let wy = self.axis_weights(1, &x[1]);
        let wz = self.axis_weights(2, &x[2]);
        for (k, jz) in &wz {
            for (j, jy) in &wy {
                let wyz = *jy * *jz;
                for (i, jx) in &wx {
                    let w = *jx * wyz;
                    let c = &self.nodes[flatten([*i, *j, *k], self.res)];
                    for m in 0..=modes {
                        let (ca, cb) = (c.cos_coeffs()[m], c.sin_coeffs()[m]);
                        for d in 0..3 {
                            out.a[m][d].axpy(ca[d], &w);
                            out.b[m][d].axpy(cb[d], &w);
                        }
                    }
                }
            }
        }
        out
    }

    fn is_base_independent(&self) -> bool {
        self.nodes.iter().all(|c| *c == self.nodes[0])
    }
}

/// `R(x)·c(t)` where `R(x) = Rz(θ₃)·Ry(θ₂)·Rx(θ₁)` and
/// `θ_i = (amplitude/3)·sin(x_{i+1} + i)`, so `‖R - Id‖ ≤ amplitude`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationFamily {
    pub curve: PeriodicCurve,
    pub amplitude: f64,
}

impl RotationFamily {
    pub fn rotation_jets(&self, x: &[Jet; 3]) -> [[Jet; 3]; 3] {
        let order = x[0].order();
        let angle = |i: usize| (x[(i + 1) % 3] + i as f64).sin() * (self.amplitude / 3.0);
        let one = Jet::constant(1.0, order);
        let zero = Jet::constant(0.0, order);
        let (a1, a2, a3) = (angle(0), angle(1), angle(2));
        let (c1, s1) = (a1.cos(), a1.sin());
        let (c2, s2) = (a2.cos(), a2.sin());
        let (c3, s3) = (a3.cos(), a3.sin());
        let rx = [[one, zero, zero], [zero, c1, -s1], [zero, s1, c1]];
        let ry = [[c2, zero, s2], [zero, one, zero], [-s2, zero, c2]];
        let rz = [[c3, -s3, zero], [s3, c3, zero], [zero, zero, one]];
        mat3_mul(&rz, &mat3_mul(&ry, &rx))
    }
}

fn mat3_mul(a: &[[Jet; 3]; 3], b: &[[Jet; 3]; 3]) -> [[Jet; 3]; 3] {
    let mut out = [[Jet::constant(0.0, a[0][0].order()); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = a[i][0] * b[0][j];
            s += a[i][1] * b[1][j];
            s += a[i][2] * b[2][j];
            out[i][j] = s;
        }
    }
    out
}

fn rotate(r: &[[Jet; 3]; 3], v: V3) -> [Jet; 3] {
    [0, 1, 2].map(|i| {
        let mut s = r[i][0] * v[0];
        s.axpy(v[1], &r[i][1]);
        s.axpy(v[2], &r[i][2]);
        s
    })
}

impl FiberModel for RotationFamily {
    fn coefficients(&self, x: &[Jet; 3]) -> SeriesJets {
        let r = self.rotation_jets(x);
        SeriesJets {
            a: self.curve.cos_coeffs().iter().map(|v| rotate(&r, *v)).collect(),
            b: self.curve.sin_coeffs().iter().map(|v| rotate(&r, *v)).collect(),
        }
    }

    fn fiber_jet(&self, x: &[Jet; 3], t: f64, derived: bool) -> [Jet; 3] {
        let r = self.rotation_jets(x);
        let v = fixed_fiber_jet(&self.curve, x[0].order(), t, derived);
        [0, 1, 2].map(|i| {
            let mut s = r[i][0] * v[0];
            s += r[i][1] * v[1];
            s += r[i][2] * v[2];
            s
        })
    }

    fn is_base_independent(&self) -> bool {
        self.amplitude == 0.0
    }
}

/// Any model seen in coordinates `x = center + λ·a`.
pub struct Zoomed {
    pub inner: Arc<dyn FiberModel>,
    pub center: V3,
    pub lambda: f64,
}

impl FiberModel for Zoomed {
    fn coefficients(&self, a: &[Jet; 3]) -> SeriesJets {
        let x = [0, 1, 2].map(|i| a[i] * self.lambda + self.center[i]);
        self.inner.coefficients(&x)
    }

    fn fiber_jet(&self, a: &[Jet; 3], t: f64, derived: bool) -> [Jet; 3] {
        let x = [0, 1, 2].map(|i| a[i] * self.lambda + self.center[i]);
        self.inner.fiber_jet(&x, t, derived)
    }

    fn is_base_independent(&self) -> bool {
        self.lambda == 0.0 || self.inner.is_base_independent()
    }
}

/// Series of `γ_x` itself; handy for curve-valued closed-form models.
pub struct Frozen(pub PeriodicCurve);

impl FiberModel for Frozen {
    fn coefficients(&self, x: &[Jet; 3]) -> SeriesJets {
        SeriesJets::from_curve(&self.0, x[0].order())
    }

    fn fiber_jet(&self, x: &[Jet; 3], t: f64, derived: bool) -> [Jet; 3] {
        fixed_fiber_jet(&self.0, x[0].order(), t, derived)
    }

    fn is_base_independent(&self) -> bool {
        true
    }
}

// no base dependence, so skip the per-mode jet arithmetic
fn fixed_fiber_jet(curve: &PeriodicCurve, order: u8, t: f64, derived: bool) -> [Jet; 3] {
    let j = if derived { curve.derivative().eval_jet(t) } else { curve.eval_jet(t) };
    let one = Jet::constant(1.0, order);
    [0, 1, 2].map(|i| {
        let mut out = Jet::constant(0.0, order);
        out.acc_product_t(&one, &[j.value[i], j.d1[i], j.d2[i] / 2.0, j.d3[i] / 6.0]);
        out
    })
}

/// Largest `|R(x) - Id|` (operator norm) of a rotation family over a grid.
pub fn rotation_deviation(family: &RotationFamily, points: &[V3]) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = family.rotation_jets(&p.map(|v| Jet::constant(v, 0)));
            let m: [[f64; 3]; 3] = [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[i][j].value() - if i == j { 1.0 } else { 0.0 }));
            let mm = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
            mm.singular_values().max()
        })
        .fold(0.0, f64::max)
}

/// Unit tangent `v/|v|` of a jet vector.
pub fn unit(v: &[Jet; 3]) -> [Jet; 3] {
    let inv = jet::dot(v, v).sqrt().recip();
    v.map(|c| c * inv)
}

/// Value of a jet vector as a plain vector.
pub fn value3(v: &[Jet; 3]) -> V3 {
    jet::values(v)
}
