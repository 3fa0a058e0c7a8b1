//! Closed curves in R³ stored as truncated trigonometric series.
//!
//! A [`PeriodicCurve`] is `γ(t) = a₀ + Σ_{k=1}^{N} a_k cos 2πkt + b_k sin 2πkt`
//! on `t ∈ [0,1)`. Derivatives up to order three come straight from the
//! coefficients, so convexity determinants carry no differencing error.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::vec3::{self, V3};

pub const TWO_PI: f64 = 2.0 * PI;
/// Default tolerance for `||γ| - 1|`.
pub const SPHERE_TOL: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_DIRECTIONS: usize = 512;

/// Value and first three derivatives of a curve at one parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3 {
    pub value: V3,
    pub d1: V3,
    pub d2: V3,
    pub d3: V3,
}

/// Sampled margin with its minimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub min_value: f64,
    pub argmin: f64,
}

impl MarginReport {
    pub fn from_samples(grid: Vec<f64>, values: Vec<f64>) -> MarginReport {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v < values[best] {
                best = i;
            }
        }
        MarginReport {
            min_value: values[best],
            argmin: grid[best],
            grid,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveJson", into = "CurveJson")]
pub struct PeriodicCurve {
    /// `a[0]` is the constant term; `a[k]`, `b[k]` multiply cos/sin 2πkt.
    a: Vec<V3>,
    b: Vec<V3>,
}

#[derive(Serialize, Deserialize)]
struct CurveJson {
    modes: usize,
    a: Vec<V3>,
    b: Vec<V3>,
}

impl TryFrom<CurveJson> for PeriodicCurve {
    type Error = ForgeError;
    fn try_from(j: CurveJson) -> Result<Self> {
        if j.a.len() != j.modes + 1 || j.b.len() != j.modes + 1 {
            return Err(ForgeError::Invalid(format!(
                "curve with {} modes needs {} cosine and sine rows",
                j.modes,
                j.modes + 1
            )));
        }
        PeriodicCurve::new(j.a, j.b)
    }
}

impl From<PeriodicCurve> for CurveJson {
    fn from(c: PeriodicCurve) -> Self {
        CurveJson {
            modes: c.modes(),
            a: c.a,
            b: c.b,
        }
    }
}

impl PeriodicCurve {
    /// Build from coefficient rows of equal length (`b[0]` is ignored).
    pub fn new(a: Vec<V3>, mut b: Vec<V3>) -> Result<PeriodicCurve> {
        if a.is_empty() || a.len() != b.len() {
            return Err(ForgeError::Invalid(
                "coefficient rows must be non-empty and of equal length".into(),
            ));
        }
        if a.iter().chain(b.iter()).flatten().any(|x| !x.is_finite()) {
            return Err(ForgeError::Invalid("non-finite coefficient".into()));
        }
        b[0] = [0.0; 3];
        Ok(PeriodicCurve { a, b })
    }

    pub fn constant(c: V3) -> PeriodicCurve {
        PeriodicCurve {
            a: vec![c],
            b: vec![[0.0; 3]],
        }
    }

    /// `(r cos 2πt, r sin 2πt, c)` with `r = √(1-c²)`.
    pub fn latitude(c: f64) -> PeriodicCurve {
        let r = (1.0 - c * c).max(0.0).sqrt();
        PeriodicCurve {
            a: vec![[0.0, 0.0, c], [r, 0.0, 0.0]],
            b: vec![[0.0; 3], [0.0, r, 0.0]],
        }
    }

    pub fn great_circle() -> PeriodicCurve {
        PeriodicCurve::latitude(0.0)
    }

    /// Closed space curve with everywhere positive torsion, so that its
    /// tangent indicatrix is a convex spherical curve with zero integral.
    pub fn twisted_rosette() -> PeriodicCurve {
        let mut a = vec![[0.0; 3]; 6];
        let mut b = vec![[0.0; 3]; 6];
        a[1] = [1.0, 0.0, 0.0];
        b[1] = [0.0, 1.0, 0.0];
        a[4] = [-0.35, 0.0, 0.0];
        b[4] = [0.0, 0.35, 0.0];
        b[5] = [0.0, 0.0, 0.25];
        PeriodicCurve { a, b }
    }

    pub fn modes(&self) -> usize {
        self.a.len() - 1
    }

    pub fn cos_coeffs(&self) -> &[V3] {
        &self.a
    }

    pub fn sin_coeffs(&self) -> &[V3] {
        &self.b
    }

    pub fn with_modes(&self, modes: usize) -> PeriodicCurve {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        a.resize(modes + 1, [0.0; 3]);
        b.resize(modes + 1, [0.0; 3]);
        PeriodicCurve { a, b }
    }

    pub fn eval(&self, t: f64) -> V3 {
        let (s1, c1) = (TWO_PI * t).sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut out = self.a[0];
        for k in 1..self.a.len() {
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
            for i in 0..3 {
                out[i] += self.a[k][i] * c + self.b[k][i] * s;
            }
        }
        out
    }

    pub fn eval_jet(&self, t: f64) -> Jet3 {
        let (s1, c1) = (TWO_PI * t).sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut j = Jet3 {
            value: self.a[0],
            d1: [0.0; 3],
            d2: [0.0; 3],
            d3: [0.0; 3],
        };
        for k in 1..self.a.len() {
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
            let w = TWO_PI * k as f64;
            let (w2, w3) = (w * w, w * w * w);
            for i in 0..3 {
                let (ak, bk) = (self.a[k][i], self.b[k][i]);
                j.value[i] += ak * c + bk * s;
                j.d1[i] += w * (bk * c - ak * s);
                j.d2[i] -= w2 * (ak * c + bk * s);
                j.d3[i] -= w3 * (bk * c - ak * s);
            }
        }
        j
    }

    /// Series of `γ'`.
    pub fn derivative(&self) -> PeriodicCurve {
        let mut a = vec![[0.0; 3]; self.a.len()];
        let mut b = vec![[0.0; 3]; self.a.len()];
        for k in 1..self.a.len() {
            let w = TWO_PI * k as f64;
            a[k] = vec3::scale(w, self.b[k]);
            b[k] = vec3::scale(-w, self.a[k]);
        }
        PeriodicCurve { a, b }
    }

    /// `t ↦ γ(-t)`.
    pub fn reversed(&self) -> PeriodicCurve {
        PeriodicCurve {
            a: self.a.clone(),
            b: self.b.iter().map(|v| vec3::scale(-1.0, *v)).collect(),
        }
    }

    /// `t ↦ γ(t + tau)`.
    pub fn shifted(&self, tau: f64) -> PeriodicCurve {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for k in 1..self.a.len() {
            let (s, c) = (TWO_PI * k as f64 * tau).sin_cos();
            for i in 0..3 {
                a[k][i] = self.a[k][i] * c + self.b[k][i] * s;
                b[k][i] = self.b[k][i] * c - self.a[k][i] * s;
            }
        }
        PeriodicCurve { a, b }
    }

    /// `t ↦ γ(m t)` for a positive integer `m`.
    pub fn frequency_multiplied(&self, m: usize) -> PeriodicCurve {
        let n = self.modes() * m;
        let mut a = vec![[0.0; 3]; n + 1];
        let mut b = vec![[0.0; 3]; n + 1];
        a[0] = self.a[0];
        for k in 1..self.a.len() {
            a[k * m] = self.a[k];
            b[k * m] = self.b[k];
        }
        PeriodicCurve { a, b }
    }

    /// Apply a linear map to every coefficient.
    pub fn transformed(&self, m: &vec3::M3) -> PeriodicCurve {
        PeriodicCurve {
            a: self.a.iter().map(|v| vec3::mat_vec(m, *v)).collect(),
            b: self.b.iter().map(|v| vec3::mat_vec(m, *v)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> PeriodicCurve {
        self.transformed(&[[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]])
    }

    pub fn translated(&self, v: V3) -> PeriodicCurve {
        let mut out = self.clone();
        out.a[0] = vec3::add(out.a[0], v);
        out
    }

    /// Uniform samples `γ(j/n)`, `j = 0..n`.
    pub fn sample(&self, n: usize) -> Vec<V3> {
        if n > 2 * self.modes() + 1 && n >= 64 {
            synthesize(&self.a, &self.b, n)
        } else {
            (0..n).map(|j| self.eval(j as f64 / n as f64)).collect()
        }
    }

    /// Largest `||γ| - 1|` over `n` uniform samples.
    pub fn sphere_deviation(&self, n: usize) -> f64 {
        self.sample(n)
            .iter()
            .map(|p| (vec3::norm(*p) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Sup-norm distance to another curve over `n` uniform samples.
    pub fn sup_distance(&self, other: &PeriodicCurve, n: usize) -> f64 {
        self.sample(n)
            .iter()
            .zip(other.sample(n))
            .map(|(p, q)| vec3::dist(*p, q))
            .fold(0.0, f64::max)
    }

    /// Arc length by spectrally accurate trapezoid quadrature of `|γ'|`.
    pub fn length(&self) -> f64 {
        let n = (16 * self.modes()).max(512);
        let d = self.derivative();
        d.sample(n).iter().map(|v| vec3::norm(*v)).sum::<f64>() / n as f64
    }
}

/// Inverse-FFT evaluation of a series at `n` uniform points.
fn synthesize(a: &[V3], b: &[V3], n: usize) -> Vec<V3> {
    let fft = planner_inverse(n);
    let mut out = vec![[0.0; 3]; n];
    for i in 0..3 {
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        buf[0] = Complex::new(a[0][i], 0.0);
        for k in 1..a.len() {
            if k >= n {
                break;
            }
            let c = Complex::new(a[k][i] / 2.0, -b[k][i] / 2.0);
            buf[k % n] += c;
            buf[(n - k) % n] += c.conj();
        }
        fft.process(&mut buf);
        for (j, v) in buf.iter().enumerate() {
            out[j][i] = v.re;
        }
    }
    out
}

fn planner_forward(n: usize) -> Arc<dyn rustfft::Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

fn planner_inverse(n: usize) -> Arc<dyn rustfft::Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(n)
}

/// Result of a trigonometric fit.
#[derive(Clone, Debug)]
pub struct Fit {
    pub curve: PeriodicCurve,
    pub residual: f64,
}

/// Least-squares fit from arbitrary distinct samples in `[0,1)`.
pub fn fit_fourier(ts: &[f64], values: &[V3], modes: usize) -> Result<Fit> {
    const COND_LIMIT: f64 = 1e10;
    let n = ts.len();
    let m = 2 * modes + 1;
    if n != values.len() || n <= m {
        return Err(ForgeError::Invalid(format!(
            "need more than {m} samples for {modes} modes, got {n}"
        )));
    }
    let mut design = DMatrix::<f64>::zeros(n, m);
    for (r, &t) in ts.iter().enumerate() {
        design[(r, 0)] = 1.0;
        for k in 1..=modes {
            let (s, c) = (TWO_PI * k as f64 * t).sin_cos();
            design[(r, 2 * k - 1)] = c;
            design[(r, 2 * k)] = s;
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > COND_LIMIT {
        return Err(ForgeError::IllConditioned { condition });
    }
    let mut a = vec![[0.0; 3]; modes + 1];
    let mut b = vec![[0.0; 3]; modes + 1];
    let mut residual: f64 = 0.0;
    for i in 0..3 {
        let rhs = DVector::from_iterator(n, values.iter().map(|v| v[i]));
        let x = svd
            .solve(&rhs, 0.0)
            .map_err(|e| ForgeError::Invalid(e.to_string()))?;
        a[0][i] = x[0];
        for k in 1..=modes {
            a[k][i] = x[2 * k - 1];
            b[k][i] = x[2 * k];
        }
        let r = &design * &x - &rhs;
        residual = residual.max(r.amax());
    }
    Ok(Fit {
        curve: PeriodicCurve::new(a, b)?,
        residual,
    })
}

/// Truncated Fourier fit of uniform samples `values[j] = γ(j/n)`.
pub fn fit_uniform(values: &[V3], modes: usize) -> Result<Fit> {
    let n = values.len();
    if 2 * modes + 1 > n {
        return Err(ForgeError::Invalid(format!(
            "{n} uniform samples cannot carry {modes} modes"
        )));
    }
    let spectrum = spectrum(values);
    let curve = truncate_spectrum(&spectrum, n, modes);
    let back = synthesize(&curve.a, &curve.b, n);
    let residual = back
        .iter()
        .zip(values)
        .map(|(p, q)| vec3::dist(*p, *q))
        .fold(0.0, f64::max);
    Ok(Fit { curve, residual })
}

/// Fit uniform samples with the fewest modes (doubling from 8) meeting `tol`.
pub fn fit_uniform_adaptive(values: &[V3], tol: f64) -> Result<Fit> {
    let n = values.len();
    let spectrum = spectrum(values);
    let max_modes = (n - 1) / 2;
    let mut modes = 8.min(max_modes);
    loop {
        let curve = truncate_spectrum(&spectrum, n, modes);
        let back = synthesize(&curve.a, &curve.b, n);
        let residual = back
            .iter()
            .zip(values)
            .map(|(p, q)| vec3::dist(*p, *q))
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(Fit { curve, residual });
        }
        if modes == max_modes {
            return Err(ForgeError::RefitResidual {
                residual,
                tolerance: tol,
            });
        }
        modes = (modes * 2).min(max_modes);
    }
}

fn spectrum(values: &[V3]) -> [Vec<Complex<f64>>; 3] {
    let n = values.len();
    let fft = planner_forward(n);
    [0, 1, 2].map(|i| {
        let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v[i], 0.0)).collect();
        fft.process(&mut buf);
        buf
    })
}

fn truncate_spectrum(spec: &[Vec<Complex<f64>>; 3], n: usize, modes: usize) -> PeriodicCurve {
    let mut a = vec![[0.0; 3]; modes + 1];
    let mut b = vec![[0.0; 3]; modes + 1];
    let nf = n as f64;
    for i in 0..3 {
        a[0][i] = spec[i][0].re / nf;
        for k in 1..=modes {
            a[k][i] = 2.0 * spec[i][k].re / nf;
            b[k][i] = -2.0 * spec[i][k].im / nf;
        }
    }
    PeriodicCurve { a, b }
}

/// Scalar trigonometric series, used for reparametrization densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScalarSeries {
    pub fn constant(c: f64) -> ScalarSeries {
        ScalarSeries {
            a: vec![c],
            b: vec![0.0],
        }
    }

    pub fn modes(&self) -> usize {
        self.a.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (s1, c1) = (TWO_PI * t).sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut out = self.a[0];
        for k in 1..self.a.len() {
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
            out += self.a[k] * c + self.b[k] * s;
        }
        out
    }

    /// `∫₀ᵗ` of the series.
    pub fn integral_to(&self, t: f64) -> f64 {
        let (s1, c1) = (TWO_PI * t).sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut out = self.a[0] * t;
        for k in 1..self.a.len() {
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
            let w = TWO_PI * k as f64;
            out += (self.a[k] * s + self.b[k] * (1.0 - c)) / w;
        }
        out
    }

    /// Truncated fit of uniform samples with the fewest modes meeting `tol`.
    pub fn fit_uniform_adaptive(values: &[f64], tol: f64) -> Result<(ScalarSeries, f64)> {
        let n = values.len();
        let fft = planner_forward(n);
        let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
        fft.process(&mut buf);
        let max_modes = (n - 1) / 2;
        let mut modes = 8.min(max_modes);
        let nf = n as f64;
        loop {
            let mut s = ScalarSeries {
                a: vec![0.0; modes + 1],
                b: vec![0.0; modes + 1],
            };
            s.a[0] = buf[0].re / nf;
            for k in 1..=modes {
                s.a[k] = 2.0 * buf[k].re / nf;
                s.b[k] = -2.0 * buf[k].im / nf;
            }
            let av: Vec<V3> = s.a.iter().map(|x| [*x, 0.0, 0.0]).collect();
            let bv: Vec<V3> = s.b.iter().map(|x| [*x, 0.0, 0.0]).collect();
            let back = synthesize(&av, &bv, n);
            let residual = back
                .iter()
                .zip(values)
                .map(|(p, q)| (p[0] - q).abs())
                .fold(0.0, f64::max);
            if residual <= tol || modes == max_modes {
                if residual > tol {
                    return Err(ForgeError::RefitResidual {
                        residual,
                        tolerance: tol,
                    });
                }
                return Ok((s, residual));
            }
            modes = (modes * 2).min(max_modes);
        }
    }
}

/// `det(γ, γ', γ'')` on a uniform grid; convex iff the minimum is positive.
pub fn convexity_margin(curve: &PeriodicCurve, samples: usize) -> Result<MarginReport> {
    convexity_margin_with(curve, samples, SPHERE_TOL)
}

pub fn convexity_margin_with(
    curve: &PeriodicCurve,
    samples: usize,
    sphere_tol: f64,
) -> Result<MarginReport> {
    let grid: Vec<f64> = (0..samples).map(|j| j as f64 / samples as f64).collect();
    let d1 = curve.derivative();
    let d2 = d1.derivative();
    let (p, v, a) = (curve.sample(samples), d1.sample(samples), d2.sample(samples));
    let deviation = p
        .iter()
        .map(|x| (vec3::norm(*x) - 1.0).abs())
        .fold(0.0, f64::max);
    let values: Vec<f64> = (0..samples).map(|j| vec3::det(p[j], v[j], a[j])).collect();
    if deviation > sphere_tol {
        return Err(ForgeError::NotSpherical {
            deviation,
            tolerance: sphere_tol,
        });
    }
    Ok(MarginReport::from_samples(grid, values))
}

/// Tangent indicatrix of a space curve.
#[derive(Clone, Debug)]
pub struct Indicatrix {
    pub curve: PeriodicCurve,
    pub refit_residual: f64,
    /// `det(g', g'', g''')` sampled directly from the input series.
    pub torsion_margin: MarginReport,
}

/// `η = g'/|g'|`, refit as a series, plus the margin of `det(g', g'', g''')`.
pub fn indicatrix(space_curve: &PeriodicCurve, samples: usize) -> Result<Indicatrix> {
    const IMMERSION_TOL: f64 = 1e-10;
    let grid: Vec<f64> = (0..samples).map(|j| j as f64 / samples as f64).collect();
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let j = space_curve.eval_jet(t);
            vec3::det(j.d1, j.d2, j.d3)
        })
        .collect();
    let torsion_margin = MarginReport::from_samples(grid, values);
    let n = (32 * space_curve.modes()).max(1024).next_power_of_two();
    let d = space_curve.derivative().sample(n);
    let min_speed = d.iter().map(|v| vec3::norm(*v)).fold(f64::INFINITY, f64::min);
    if min_speed <= IMMERSION_TOL {
        return Err(ForgeError::NotImmersed { min_speed });
    }
    let eta: Vec<V3> = d.iter().map(|v| vec3::normalize(*v)).collect();
    let fit = match fit_uniform_adaptive(&eta, 1e-10) {
        Ok(f) => f,
        Err(ForgeError::RefitResidual { .. }) => fit_uniform(&eta, (n - 1) / 2)?,
        Err(e) => return Err(e),
    };
    Ok(Indicatrix {
        curve: fit.curve,
        refit_residual: fit.residual,
        torsion_margin,
    })
}

/// Exact integral over `[0,1]`: the constant term.
pub fn curve_integral(curve: &PeriodicCurve) -> V3 {
    curve.a[0]
}

/// Outcome of the surrounding search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurroundReport {
    /// `min_u max_t u·γ(t)`; positive iff the curve strictly surrounds 0.
    pub margin: f64,
    pub direction: V3,
    /// Angular spacing of the coarse direction grid (radians).
    pub grid_spacing: f64,
    pub points: usize,
}

/// `ρ = min_{|u|=1} max_t u·γ(t)` by a direction grid plus local descent.
pub fn surround_margin(curve: &PeriodicCurve, directions: usize) -> f64 {
    surround_report(curve, directions).margin
}

pub fn surround_report(curve: &PeriodicCurve, directions: usize) -> SurroundReport {
    let n = (8 * curve.modes()).clamp(1024, 1 << 16).next_power_of_two();
    surround_points(&curve.sample(n), directions)
}

/// Surround margin of a finite point set.
pub fn surround_points(points: &[V3], directions: usize) -> SurroundReport {
    let support = |u: V3| -> f64 {
        points
            .iter()
            .map(|p| vec3::dot(u, *p))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut dirs = fibonacci_sphere(directions.max(6));
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        dirs.push(e);
        dirs.push(vec3::scale(-1.0, e));
    }
    let mut scored: Vec<(f64, usize)> = dirs.iter().enumerate().map(|(i, u)| (support(*u), i)).collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let spacing = (4.0 * PI / directions.max(6) as f64).sqrt();
    let mut best = (scored[0].0, dirs[scored[0].1]);
    for &(_, idx) in scored.iter().take(6) {
        let (v, u) = pattern_descent(&support, dirs[idx], spacing);
        if v < best.0 {
            best = (v, u);
        }
    }
    SurroundReport {
        margin: best.0,
        direction: best.1,
        grid_spacing: spacing,
        points: points.len(),
    }
}

/// Derivative-free descent on the sphere for a nonsmooth support function.
fn pattern_descent(f: &dyn Fn(V3) -> f64, start: V3, step0: f64) -> (f64, V3) {
    let mut u = start;
    let mut fu = f(u);
    let mut step = step0;
    let dirs: Vec<(f64, f64)> = (0..8)
        .map(|k| (PI * k as f64 / 4.0).sin_cos())
        .collect();
    // along a flat ridge every probe wins by a hair; cap the moves per step size
    const MOVES_PER_STEP: usize = 64;
    let mut moves = 0;
    while step > 1e-10 {
        let (e1, e2) = tangent_basis(u);
        let mut improved = false;
        for &(s, c) in &dirs {
            let v = vec3::normalize(vec3::add(
                u,
                vec3::add(vec3::scale(step * c, e1), vec3::scale(step * s, e2)),
            ));
            let fv = f(v);
            if fv < fu {
                u = v;
                fu = fv;
                improved = true;
                break;
            }
        }
        moves += 1;
        if !improved || moves == MOVES_PER_STEP {
            step *= 0.5;
            moves = 0;
        }
    }
    (fu, u)
}

fn tangent_basis(u: V3) -> (V3, V3) {
    let helper = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = vec3::normalize(vec3::cross(u, helper));
    let e2 = vec3::cross(u, e1);
    (e1, e2)
}

/// Quasi-uniform unit vectors.
pub fn fibonacci_sphere(n: usize) -> Vec<V3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            [r * c, r * s, z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_curve(rng: &mut ChaCha8Rng, modes: usize) -> PeriodicCurve {
        let mut a = vec![[0.0; 3]; modes + 1];
        let mut b = vec![[0.0; 3]; modes + 1];
        for k in 0..=modes {
            for i in 0..3 {
                a[k][i] = rng.gen_range(-1.0..1.0) / (1.0 + k as f64);
                b[k][i] = rng.gen_range(-1.0..1.0) / (1.0 + k as f64);
            }
        }
        PeriodicCurve::new(a, b).unwrap()
    }

    #[test]
    fn constant_curve_has_zero_derivatives() {
        let c = PeriodicCurve::constant([1.0, -2.0, 0.5]);
        let j = c.eval_jet(0.3);
        assert_eq!(j.value, [1.0, -2.0, 0.5]);
        assert_eq!(j.d1, [0.0; 3]);
        assert_eq!(j.d2, [0.0; 3]);
        assert_eq!(j.d3, [0.0; 3]);
    }

    #[test]
    fn circle_jet_at_zero() {
        let j = PeriodicCurve::great_circle().eval_jet(0.0);
        assert!(vec3::dist(j.value, [1.0, 0.0, 0.0]) < 1e-15);
        assert!(vec3::dist(j.d1, [0.0, TWO_PI, 0.0]) < 1e-13);
        assert!(vec3::dist(j.d2, [-TWO_PI * TWO_PI, 0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn jets_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_curve(&mut rng, 2);
        let t = 0.37;
        let h = 1e-4;
        let j = c.eval_jet(t);
        let fd = |f: &dyn Fn(f64) -> V3| vec3::scale(0.5 / h, vec3::sub(f(t + h), f(t - h)));
        let d1 = fd(&|s| c.eval(s));
        let d2 = fd(&|s| c.eval_jet(s).d1);
        let d3 = fd(&|s| c.eval_jet(s).d2);
        for (exact, approx) in [(j.d1, d1), (j.d2, d2), (j.d3, d3)] {
            let rel = vec3::dist(exact, approx) / vec3::norm(exact);
            assert!(rel <= 1e-6, "relative error {rel:e}");
        }
    }

    #[test]
    fn periodicity_is_structural() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_curve(&mut rng, 9);
        for t in [0.0, 0.13, 0.5, 0.99] {
            assert!(vec3::dist(c.eval(t), c.eval(t + 1.0)) < 1e-12);
        }
    }

    #[test]
    fn latitude_margin_closed_form() {
        for c in [0.2, 0.6, 0.9] {
            let r2 = 1.0 - c * c;
            let expected = TWO_PI.powi(3) * r2 * c;
            let m = convexity_margin(&PeriodicCurve::latitude(c), 256).unwrap();
            assert!((m.min_value - expected).abs() <= 1e-12 * expected);
        }
        let g = convexity_margin(&PeriodicCurve::great_circle(), 256).unwrap();
        assert!(g.min_value.abs() <= 1e-10);
        let rev = convexity_margin(&PeriodicCurve::latitude(0.6).reversed(), 256).unwrap();
        assert!(rev.min_value < 0.0);
    }

    #[test]
    fn non_spherical_rejected() {
        let c = PeriodicCurve::latitude(0.6).scaled(1.1);
        assert!(matches!(
            convexity_margin(&c, 64),
            Err(ForgeError::NotSpherical { .. })
        ));
    }

    #[test]
    fn integral_is_constant_term() {
        assert_eq!(curve_integral(&PeriodicCurve::great_circle()), [0.0; 3]);
        assert_eq!(curve_integral(&PeriodicCurve::latitude(0.6)), [0.0, 0.0, 0.6]);
    }

    #[test]
    fn exact_series_recovered_by_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_curve(&mut rng, 5);
        let vals = c.sample(64);
        let f = fit_uniform(&vals, 8).unwrap();
        assert!(f.residual <= 1e-12);
        let ts: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
        let vals: Vec<V3> = ts.iter().map(|t| c.eval(*t)).collect();
        let f = fit_fourier(&ts, &vals, 6).unwrap();
        assert!(f.residual <= 1e-10);
        assert!(c.with_modes(6).sup_distance(&f.curve, 100) < 1e-9);
    }

    #[test]
    fn fit_of_constant_samples_is_constant() {
        let vals = vec![[0.5, 0.25, -1.0]; 32];
        let f = fit_uniform(&vals, 4).unwrap();
        for k in 1..=4 {
            assert!(vec3::norm(f.curve.cos_coeffs()[k]) < 1e-15);
        }
        assert!(vec3::dist(f.curve.cos_coeffs()[0], [0.5, 0.25, -1.0]) < 1e-15);
    }

    #[test]
    fn clustered_samples_are_ill_conditioned() {
        let ts: Vec<f64> = (0..30).map(|i| 0.1 + 1e-9 * i as f64).collect();
        let vals = vec![[0.0; 3]; 30];
        assert!(matches!(
            fit_fourier(&ts, &vals, 5),
            Err(ForgeError::IllConditioned { .. })
        ));
    }

    #[test]
    fn sampling_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_curve(&mut rng, 20);
        let fast = c.sample(128);
        for (j, p) in fast.iter().enumerate() {
            assert!(vec3::dist(*p, c.eval(j as f64 / 128.0)) < 1e-13);
        }
    }

    #[test]
    fn shift_and_frequency() {
        let c = PeriodicCurve::twisted_rosette();
        let s = c.shifted(0.21);
        assert!(vec3::dist(s.eval(0.3), c.eval(0.51)) < 1e-13);
        let d = PeriodicCurve::latitude(0.6).frequency_multiplied(2);
        assert!(vec3::dist(d.eval(0.1), PeriodicCurve::latitude(0.6).eval(0.2)) < 1e-14);
    }

    #[test]
    fn surround_examples() {
        let lat = surround_margin(&PeriodicCurve::latitude(0.6), 512);
        assert!(lat <= -0.6 + 1e-9);
        let gc = surround_margin(&PeriodicCurve::great_circle(), 512);
        assert!(gc.abs() < 1e-8, "{gc}");
    }

    #[test]
    fn indicatrix_of_circle_is_not_convex() {
        let ind = indicatrix(&PeriodicCurve::great_circle(), 128).unwrap();
        assert!(ind.torsion_margin.min_value.abs() < 1e-9);
        assert!(ind.torsion_margin.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rosette_has_convex_indicatrix() {
        let ind = indicatrix(&PeriodicCurve::twisted_rosette(), 512).unwrap();
        assert!(ind.torsion_margin.min_value > 0.0);
        let m = convexity_margin(&ind.curve, 512).unwrap();
        assert!(m.min_value > 0.0);
        assert!(vec3::norm(curve_integral(&ind.curve)) < 0.5);
    }
}
