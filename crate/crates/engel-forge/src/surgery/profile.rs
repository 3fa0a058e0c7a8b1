//! Spherical curves described intrinsically by geodesic curvature.
//!
//! A unit-speed spherical curve is determined by its start frame
//! `F = [p | T | N]` (`N = p × T`) and its geodesic curvature `κ(σ)`:
//! `F' = F·hat((κ, 0, 1))`. Curves with positive `κ` are convex, so surgery on
//! curvature profiles keeps convexity under control.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::{self, PeriodicCurve, ScalarSeries, TWO_PI};
use crate::error::{ForgeError, Result};
use crate::vec3::{self, M3, V3};

/// Orthonormal frame with columns `p`, `T`, `N`.
pub type Frame = M3;

pub fn frame_from(p: V3, t: V3) -> Frame {
    let p = vec3::normalize(p);
    let t = vec3::normalize(vec3::sub(t, vec3::scale(vec3::dot(p, t), p)));
    let n = vec3::cross(p, t);
    columns(p, t, n)
}

pub fn columns(a: V3, b: V3, c: V3) -> Frame {
    [[a[0], b[0], c[0]], [a[1], b[1], c[1]], [a[2], b[2], c[2]]]
}

pub fn position(f: &Frame) -> V3 {
    [f[0][0], f[1][0], f[2][0]]
}

pub fn tangent(f: &Frame) -> V3 {
    [f[0][1], f[1][1], f[2][1]]
}

/// Curvature as a function of the offset from a segment start; defined on all
/// of R so that blends may look past the segment ends.
pub type KappaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Complement,
    NorthLatitude,
    Arc,
    SouthLatitude,
    Other,
}

#[derive(Clone)]
pub struct Segment {
    pub length: f64,
    pub kappa: KappaFn,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn constant(length: f64, kappa: f64, kind: SegmentKind) -> Segment {
        Segment {
            length,
            kappa: Arc::new(move |_| kappa),
            kind,
        }
    }
}

/// Concatenation of curvature segments starting from a frame.
///
/// The curvature must be continuous across the wrap from the last segment to
/// the first; only interior junctions are treated as corners.
#[derive(Clone)]
pub struct PiecewiseProfile {
    pub start: Frame,
    pub segments: Vec<Segment>,
}

impl PiecewiseProfile {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Segment start offsets (the first is 0).
    pub fn starts(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let a = acc;
                acc += s.length;
                a
            })
            .collect()
    }

    /// Interior junctions, where consecutive segments meet.
    pub fn junctions(&self) -> Vec<f64> {
        self.starts().into_iter().skip(1).collect()
    }

    /// Unsmoothed curvature.
    pub fn raw_kappa(&self, sigma: f64) -> f64 {
        self.raw_with(&self.starts(), sigma)
    }

    fn segment_at(starts: &[f64], sigma: f64) -> usize {
        starts.partition_point(|a| *a <= sigma).max(1) - 1
    }

    fn raw_with(&self, starts: &[f64], sigma: f64) -> f64 {
        let idx = Self::segment_at(starts, sigma);
        (self.segments[idx].kappa)(sigma - starts[idx])
    }

    /// Partition-of-unity blend of the segment curvatures around each
    /// junction, with transition half-width `w` in arc length.
    pub fn blended_kappa(&self, sigma: f64, w: f64) -> f64 {
        self.blended_with(&self.starts(), sigma, w)
    }

    fn blended_with(&self, starts: &[f64], sigma: f64, w: f64) -> f64 {
        // the raw curvature plus (step - heaviside) corrections near junctions
        let mut k = self.raw_with(starts, sigma);
        for j in 1..self.segments.len() {
            let d = sigma - starts[j];
            if d.abs() >= w {
                continue;
            }
            let heaviside = if d >= 0.0 { 1.0 } else { 0.0 };
            let next = (self.segments[j].kappa)(d);
            let prev = (self.segments[j - 1].kappa)(sigma - starts[j - 1]);
            k += (smooth_step(d, w) - heaviside) * (next - prev);
        }
        k
    }

    /// Unsmoothed curve sampled at `n` uniform arc-length points.
    pub fn render_raw(&self, n: usize, substeps: usize) -> Vec<Frame> {
        let breaks = self.junctions();
        integrate(&|s| self.raw_kappa(s), self.start, self.total_length(), n, substeps, &breaks)
    }
}

/// C^∞ monotone step from 0 to 1 across `[-w, w]`, flat outside the window.
pub fn smooth_step(s: f64, w: f64) -> f64 {
    let u = s / w;
    if u <= -1.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let f = |x: f64| (-1.0 / x).exp();
    let (a, b) = (f(1.0 + u), f(1.0 - u));
    a / (a + b)
}

const GAUSS_C1: f64 = 0.5 - 0.288_675_134_594_812_9;
const GAUSS_C2: f64 = 0.5 + 0.288_675_134_594_812_9;
const MAGNUS_COEF: f64 = 0.144_337_567_297_406_45; // √3/12

/// One fourth-order Magnus step given curvature at the two Gauss nodes.
#[inline]
pub fn magnus_step(f: &Frame, h: f64, k1: f64, k2: f64) -> Frame {
    let a1 = [k1, 0.0, 1.0];
    let a2 = [k2, 0.0, 1.0];
    let c = vec3::cross(a1, a2);
    let omega = vec3::add(
        vec3::scale(0.5 * h, vec3::add(a1, a2)),
        vec3::scale(MAGNUS_COEF * h * h, c),
    );
    vec3::mat_mul(f, &vec3::rodrigues(omega))
}

/// Integrate `F' = F·hat((κ,0,1))` over `[0, length]`, returning frames at
/// `n + 1` uniform points. Steps never straddle a point of `breaks`.
pub fn integrate(
    kappa: &dyn Fn(f64) -> f64,
    start: Frame,
    length: f64,
    n: usize,
    substeps: usize,
    breaks: &[f64],
) -> Vec<Frame> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(start);
    let mut f = start;
    let dx = length / n as f64;
    for j in 0..n {
        let a = j as f64 * dx;
        let b = (j + 1) as f64 * dx;
        let mut nodes = vec![a];
        for &br in breaks {
            if br > a + 1e-14 && br < b - 1e-14 {
                nodes.push(br);
            }
        }
        nodes.push(b);
        for w in nodes.windows(2) {
            let h = (w[1] - w[0]) / substeps as f64;
            for i in 0..substeps {
                let s0 = w[0] + i as f64 * h;
                f = magnus_step(&f, h, kappa(s0 + GAUSS_C1 * h), kappa(s0 + GAUSS_C2 * h));
            }
        }
        out.push(f);
    }
    out
}

/// Gauss nodes of a uniform step grid: `(σ_node, step index)`.
pub fn gauss_nodes(length: f64, steps: usize) -> Vec<f64> {
    let h = length / steps as f64;
    let mut v = Vec::with_capacity(2 * steps);
    for i in 0..steps {
        let s0 = i as f64 * h;
        v.push(s0 + GAUSS_C1 * h);
        v.push(s0 + GAUSS_C2 * h);
    }
    v
}

/// Integrate with curvature pre-tabulated at [`gauss_nodes`].
pub fn integrate_tabulated(kappa_nodes: &[f64], start: Frame, length: f64) -> Vec<Frame> {
    let steps = kappa_nodes.len() / 2;
    let h = length / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut f = start;
    out.push(f);
    for i in 0..steps {
        f = magnus_step(&f, h, kappa_nodes[2 * i], kappa_nodes[2 * i + 1]);
        out.push(f);
    }
    out
}

/// Compactly supported smooth bump on `(-1, 1)` with `b(0) = 1`.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Arc-length description of a closed spherical input curve.
pub struct ArcLengthMap {
    curve: PeriodicCurve,
    speed: PeriodicCurve,
    /// cumulative arc length at `t_j = j/grid`
    cumulative: Vec<f64>,
    pub length: f64,
    kappa: ScalarSeries,
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

impl ArcLengthMap {
    pub fn new(curve: &PeriodicCurve) -> Result<ArcLengthMap> {
        let speed = curve.derivative();
        let grid = (16 * curve.modes()).max(4096);
        let mut cumulative = Vec::with_capacity(grid + 1);
        cumulative.push(0.0);
        let h = 1.0 / grid as f64;
        let mut acc = 0.0;
        let mut min_speed = f64::INFINITY;
        for j in 0..grid {
            let a = j as f64 * h;
            let mut part = 0.0;
            for (x, w) in GL5_X.iter().zip(GL5_W) {
                let v = vec3::norm(speed.eval(a + 0.5 * h * (1.0 + x)));
                min_speed = min_speed.min(v);
                part += w * v;
            }
            acc += 0.5 * h * part;
            cumulative.push(acc);
        }
        if min_speed <= 1e-10 {
            return Err(ForgeError::NotImmersed { min_speed });
        }
        let mut map = ArcLengthMap {
            curve: curve.clone(),
            speed,
            cumulative,
            length: acc,
            kappa: ScalarSeries::constant(0.0),
        };
        let nk = (32 * curve.modes()).max(4096).next_power_of_two();
        let samples: Vec<f64> = (0..nk)
            .map(|i| {
                let t = map.param_at(acc * i as f64 / nk as f64);
                let j = curve.eval_jet(t);
                vec3::det(j.value, j.d1, j.d2) / vec3::norm(j.d1).powi(3)
            })
            .collect();
        let (series, _) = ScalarSeries::fit_uniform_adaptive(&samples, 1e-10)
            .or_else(|_| ScalarSeries::fit_uniform_adaptive(&samples, 1e-7))?;
        map.kappa = series;
        Ok(map)
    }

    /// Arc length from `t = 0` to `t ∈ [0,1]`.
    pub fn arc_at(&self, t: f64) -> f64 {
        let grid = self.cumulative.len() - 1;
        let x = t.clamp(0.0, 1.0) * grid as f64;
        let j = (x.floor() as usize).min(grid - 1);
        let a = j as f64 / grid as f64;
        let h = t - a;
        let mut part = 0.0;
        for (xg, w) in GL5_X.iter().zip(GL5_W) {
            part += w * vec3::norm(self.speed.eval(a + 0.5 * h * (1.0 + xg)));
        }
        self.cumulative[j] + 0.5 * h * part
    }

    /// Parameter `t` with arc length `s` from 0 (s taken modulo the length).
    pub fn param_at(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.length);
        let grid = self.cumulative.len() - 1;
        let j = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(j) => j.min(grid - 1),
            Err(j) => j.saturating_sub(1).min(grid - 1),
        };
        let (a, b) = (j as f64 / grid as f64, (j + 1) as f64 / grid as f64);
        let (sa, sb) = (self.cumulative[j], self.cumulative[j + 1]);
        let mut t = a + (s - sa) / (sb - sa) * (b - a);
        for _ in 0..4 {
            let f = self.arc_at(t) - s;
            let d = vec3::norm(self.speed.eval(t));
            t = (t - f / d).clamp(a, b);
            if f.abs() < 1e-15 {
                break;
            }
        }
        t
    }

    /// Geodesic curvature at arc length `s` (periodic).
    pub fn kappa_at(&self, s: f64) -> f64 {
        self.kappa.eval(s / self.length)
    }

    pub fn frame_at_param(&self, t: f64) -> Frame {
        let j = self.curve.eval_jet(t);
        frame_from(j.value, j.d1)
    }
}

/// Convexity check and closure report of a rendered profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// Full width of each corner neighbourhood as a fraction of the length.
    pub width: f64,
    /// Minimum geodesic curvature after blending and correction.
    pub min_kappa: f64,
    /// Minimum of `det(γ,γ',γ'')` of the refit series.
    pub convexity_margin: f64,
    /// Sup distance to the unsmoothed piecewise curve.
    pub deviation: f64,
    /// `deviation / width²`.
    pub deviation_constant: f64,
    pub refit_residual: f64,
    pub modes: usize,
    /// Rotation defect of the unsmoothed profile after one period.
    pub closure_defect: f64,
    /// Largest multiplicative correction coefficient.
    pub max_correction: f64,
    pub corners: usize,
    pub length: f64,
}

/// A smoothed closed convex curve together with its report.
#[derive(Clone, Debug)]
pub struct SmoothedCurve {
    pub curve: PeriodicCurve,
    pub report: SmoothingReport,
}

/// Options for rendering a profile.
#[derive(Clone, Copy, Debug)]
pub struct RenderOptions {
    pub samples: usize,
    pub substeps: usize,
    pub refit_tol: f64,
}

impl RenderOptions {
    pub fn for_length(length: f64) -> RenderOptions {
        let samples = ((256.0 * length).ceil() as usize)
            .clamp(4096, 1 << 15)
            .next_power_of_two();
        RenderOptions {
            samples,
            substeps: 4,
            refit_tol: 1e-7,
        }
    }
}

/// Junctions whose windows overlap are smoothed together.
fn corner_zones(junctions: &[f64], half: f64) -> Vec<(f64, f64)> {
    let mut zones: Vec<(f64, f64)> = Vec::new();
    for &a in junctions {
        match zones.last_mut() {
            Some(z) if a - half <= z.1 => z.1 = a + half,
            _ => zones.push((a - half, a + half)),
        }
    }
    zones
}

/// Replace each curvature jump by a smooth blend over a window of `width`
/// (fraction of the total length), then bend the blend with three small
/// multiplicative bumps so that the curve leaves the window with exactly the
/// unsmoothed frame. Outside the windows the output coincides with the input.
pub fn smooth_corners(profile: &PiecewiseProfile, width: f64) -> Result<SmoothedCurve> {
    let opts = RenderOptions::for_length(profile.total_length());
    smooth_corners_with(profile, width, opts)
}

pub fn smooth_corners_with(
    profile: &PiecewiseProfile,
    width: f64,
    opts: RenderOptions,
) -> Result<SmoothedCurve> {
    if !(width > 0.0 && width < 1.0) {
        return Err(ForgeError::Invalid(format!("smoothing width {width} outside (0, 1)")));
    }
    let length = profile.total_length();
    let half = 0.5 * width * length;
    let steps = opts.samples * opts.substeps;
    let h = length / steps as f64;
    let nodes = gauss_nodes(length, steps);
    let junctions = profile.junctions();
    let starts = profile.starts();
    let mut kappa: Vec<f64> = nodes
        .iter()
        .map(|&s| profile.blended_with(&starts, s, half))
        .collect();
    let raw = integrate(
        &|s| profile.raw_with(&starts, s),
        profile.start,
        length,
        steps,
        1,
        &junctions,
    );
    let closure_defect = vec3::norm(vec3::log_rotation(&vec3::mat_mul(
        &raw[steps],
        &vec3::transpose(&profile.start),
    )));
    if closure_defect > 1e-6 {
        return Err(ForgeError::Invalid(format!(
            "profile does not close (defect {closure_defect:.3e})"
        )));
    }
    let zones = corner_zones(&junctions, half);
    let mut max_correction: f64 = 0.0;
    for &(lo, hi) in &zones {
        if lo <= 0.0 || hi >= length {
            return Err(ForgeError::Invalid(
                "corner window reaches the profile start".into(),
            ));
        }
        let i0 = (lo / h).floor() as usize;
        let i1 = ((hi / h).ceil() as usize).min(steps);
        let (centre, radius) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let psi: Vec<[f64; 3]> = (2 * i0..2 * i1)
            .map(|i| {
                let u = (nodes[i] - centre) / radius;
                let b = bump(u);
                [b, u * b, u * u * b]
            })
            .collect();
        let base: Vec<f64> = kappa[2 * i0..2 * i1].to_vec();
        let target = raw[i1];
        let mut alpha = [0.0; 3];
        let mut converged = false;
        for _ in 0..20 {
            let local: Vec<f64> = base
                .iter()
                .zip(&psi)
                .map(|(k, p)| k * (1.0 + alpha[0] * p[0] + alpha[1] * p[1] + alpha[2] * p[2]))
                .collect();
            if let Some(bad) = psi
                .iter()
                .map(|p| 1.0 + alpha[0] * p[0] + alpha[1] * p[1] + alpha[2] * p[2])
                .find(|f| *f <= 0.0)
            {
                return Err(ForgeError::ConvexityLost { margin: bad });
            }
            let mut f = raw[i0];
            let mut jac = [[0.0; 3]; 3];
            for (j, pair) in local.chunks(2).enumerate() {
                for (q, c) in [GAUSS_C1, GAUSS_C2].iter().enumerate() {
                    let p = vec3::add(position(&f), vec3::scale(c * h, tangent(&f)));
                    let idx = 2 * j + q;
                    for (k, col) in jac.iter_mut().enumerate() {
                        *col = vec3::add(*col, vec3::scale(0.5 * h * base[idx] * psi[idx][k], p));
                    }
                }
                f = magnus_step(&f, h, pair[0], pair[1]);
            }
            let defect = vec3::log_rotation(&vec3::mat_mul(&f, &vec3::transpose(&target)));
            if vec3::norm(defect) < 1e-14 {
                kappa[2 * i0..2 * i1].copy_from_slice(&local);
                converged = true;
                break;
            }
            let m = nalgebra::Matrix3::from_fn(|r, c| jac[c][r]);
            let rhs = nalgebra::Vector3::new(-defect[0], -defect[1], -defect[2]);
            let step = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| ForgeError::Invalid("singular corner correction".into()))?;
            for k in 0..3 {
                alpha[k] += step[k];
            }
            kappa[2 * i0..2 * i1].copy_from_slice(&local);
            converged = vec3::norm(defect) < 1e-12;
        }
        if !converged {
            return Err(ForgeError::Invalid("corner correction did not converge".into()));
        }
        max_correction = alpha.iter().fold(max_correction, |m, a| m.max(a.abs()));
    }
    let min_kappa = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_kappa <= 0.0 {
        return Err(ForgeError::ConvexityLost { margin: min_kappa });
    }
    // the output agrees with the unsmoothed curve outside the windows, so
    // integrate each window from its raw start frame to avoid drift
    let mut frames = raw.clone();
    for &(lo, hi) in &zones {
        let i0 = (lo / h).floor() as usize;
        let i1 = ((hi / h).ceil() as usize).min(steps);
        let mut f = raw[i0];
        for i in i0..i1 {
            f = magnus_step(&f, h, kappa[2 * i], kappa[2 * i + 1]);
            frames[i + 1] = f;
        }
    }
    let points: Vec<V3> = (0..opts.samples)
        .map(|j| position(&frames[j * opts.substeps]))
        .collect();
    let deviation = (0..opts.samples)
        .map(|j| vec3::dist(points[j], position(&raw[j * opts.substeps])))
        .fold(0.0, f64::max);
    let fit = curve::fit_uniform_adaptive(&points, opts.refit_tol)?;
    let margin = curve::convexity_margin(&fit.curve, opts.samples)?;
    if margin.min_value <= 0.0 {
        return Err(ForgeError::ConvexityLost {
            margin: margin.min_value,
        });
    }
    Ok(SmoothedCurve {
        report: SmoothingReport {
            width,
            min_kappa,
            convexity_margin: margin.min_value,
            deviation,
            deviation_constant: deviation / (width * width),
            refit_residual: fit.residual,
            modes: fit.curve.modes(),
            closure_defect,
            max_correction,
            corners: junctions.len(),
            length,
        },
        curve: fit.curve,
    })
}

/// Closed convex curve made of circular arcs with alternating curvatures
/// `k1` (length `l1`) and `k2`, repeated `sides` times. The second length is
/// solved so the pair turns the frame by `2π/sides`, which closes the curve.
pub fn rounded_polygon(k1: f64, k2: f64, l1: f64, sides: usize) -> Result<PiecewiseProfile> {
    let target = TWO_PI / sides as f64;
    let angle = |l2: f64| -> f64 {
        let r1 = vec3::rodrigues(vec3::scale(l1, [k1, 0.0, 1.0]));
        let r2 = vec3::rodrigues(vec3::scale(l2, [k2, 0.0, 1.0]));
        let w = vec3::log_rotation(&vec3::mat_mul(&r1, &r2));
        vec3::norm(w)
    };
    // bracket the first l2 where the pair rotation reaches the target angle
    let mut lo = 1e-6;
    let mut hi = lo;
    let step = 0.01 / (1.0 + k2 * k2).sqrt();
    let f = |l: f64| angle(l) - target;
    let mut flo = f(lo);
    let mut found = false;
    for _ in 0..100_000 {
        hi = lo + step;
        let fhi = f(hi);
        if flo.signum() != fhi.signum() {
            found = true;
            break;
        }
        lo = hi;
        flo = fhi;
    }
    if !found {
        return Err(ForgeError::Invalid("no closing length for rounded polygon".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l2 = 0.5 * (lo + hi);
    let mut segments = Vec::new();
    // start mid-way through a k1 arc so the wrap is not a corner
    segments.push(Segment::constant(0.5 * l1, k1, SegmentKind::Other));
    for i in 0..sides {
        segments.push(Segment::constant(l2, k2, SegmentKind::Other));
        let len = if i + 1 == sides { 0.5 * l1 } else { l1 };
        segments.push(Segment::constant(len, k1, SegmentKind::Other));
    }
    Ok(PiecewiseProfile {
        start: frame_from([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        segments,
    })
}
