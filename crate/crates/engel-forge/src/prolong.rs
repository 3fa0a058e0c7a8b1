//! Fibrewise integration of curve families into bundle immersions,
//! separation of strands, chart patching and the prolonged plane field.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{self, PeriodicCurve, TWO_PI};
use crate::engel::{Frame, PlaneFieldModel, V4};
use crate::error::{ForgeError, Result};
use crate::family::{self, CurveFamily, FiberModel, SampleGrid};
use crate::jet::{self, Jet};
use crate::report::fmt17;
use crate::surgery::profile::smooth_step;
use crate::vec3::{self, V3};

/// Budget of wiggle multiplicity used by the global construction.
pub const WIGGLE_BUDGET: usize = 2 * 4 + 1;

const CLOSED_TOL: f64 = 1e-9;
const IMMERSION_TOL: f64 = 1e-10;

/// `ν(t) = ∫₀ᵗ γ`, integrated term by term.
pub fn primitive(curve: &PeriodicCurve) -> Result<PeriodicCurve> {
    let mean = curve::curve_integral(curve);
    let norm = vec3::norm(mean);
    if norm > CLOSED_TOL {
        return Err(ForgeError::NotZeroIntegral { norm });
    }
    let (a, b) = (curve.cos_coeffs(), curve.sin_coeffs());
    let mut pa = vec![[0.0; 3]; a.len()];
    let mut pb = vec![[0.0; 3]; a.len()];
    for k in 1..a.len() {
        let w = TWO_PI * k as f64;
        pa[k] = vec3::scale(-1.0 / w, b[k]);
        pb[k] = vec3::scale(1.0 / w, a[k]);
    }
    // ν(0) = 0
    pa[0] = pa[1..].iter().fold([0.0; 3], |s, v| vec3::sub(s, *v));
    PeriodicCurve::new(pa, pb)
}

/// Outcome of the strand separation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedReport {
    pub tolerance: f64,
    pub input_distance: f64,
    pub min_distance: f64,
    /// Perturbations tried (0 when the input was already embedded).
    pub attempts: usize,
    /// Sum of the sup norms of the accepted perturbations.
    pub amplitude: f64,
    /// Highest mode of the accepted perturbations.
    pub band: usize,
    pub input_margin: f64,
    pub margin: f64,
}

/// Minimum distance between points of the curve whose shorter connecting arc
/// is at least `min_arc` long.
pub fn min_self_distance(curve: &PeriodicCurve, min_arc: f64) -> f64 {
    let n = (16 * curve.modes()).max(1024);
    let dense = crate::dense::Dense::new(curve, n);
    let mut arc = vec![0.0; n + 1];
    for i in 0..n {
        arc[i + 1] = arc[i] + vec3::dist(dense.p[i], dense.p[(i + 1) % n]);
    }
    let total = arc[n];
    let separation = |i: usize, j: usize| {
        let d = (arc[i] - arc[j]).abs();
        d.min(total - d)
    };
    let mut best = f64::INFINITY;
    let mut candidates = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if separation(i, j) >= min_arc {
                let d = vec3::dist(dense.p[i], dense.p[j]);
                if d < best {
                    best = d;
                }
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let arc_of = |t: f64| {
        let u = t.rem_euclid(1.0) * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        arc[i] + (arc[i + 1] - arc[i]) * (u - i as f64)
    };
    for &(_, i, j) in candidates.iter().take(32) {
        let (a, b, gap) = dense.refine(i as f64 / n as f64, j as f64 / n as f64, false);
        let d = (arc_of(a) - arc_of(b)).abs();
        if d.min(total - d) >= min_arc {
            best = best.min(gap);
        }
    }
    best
}

fn indicatrix_margin(curve: &PeriodicCurve) -> Result<f64> {
    let eta = curve::indicatrix(curve, curve::DEFAULT_SAMPLES)?;
    Ok(curve::convexity_margin(&eta.curve, 4 * curve::DEFAULT_SAMPLES)?.min_value)
}

/// Random trigonometric polynomial in modes `1..=band`, weighted by `k⁻³`
/// and scaled to sup norm `amplitude`.
fn random_perturbation(rng: &mut ChaCha8Rng, band: usize, amplitude: f64) -> Result<PeriodicCurve> {
    let mut a = vec![[0.0; 3]; band + 1];
    let mut b = vec![[0.0; 3]; band + 1];
    for k in 1..=band {
        let w = (k as f64).powi(-3);
        a[k] = [0, 1, 2].map(|_| w * rng.gen_range(-1.0..1.0));
        b[k] = [0, 1, 2].map(|_| w * rng.gen_range(-1.0..1.0));
    }
    let p = PeriodicCurve::new(a, b)?;
    let sup = p.sample(64 * band).iter().map(|v| vec3::norm(*v)).fold(0.0, f64::max);
    Ok(p.scaled(amplitude / sup))
}

/// Separate strands closer than `tol` by a small random perturbation while
/// keeping the tangent indicatrix convex.
pub fn ensure_embedded(curve: &PeriodicCurve, tol: f64, seed: u64) -> Result<(PeriodicCurve, EmbedReport)> {
    const ATTEMPTS: usize = 8;
    const START: f64 = 1e-4;
    const MAX_BAND: usize = 16;
    const DRAWS: usize = 8;
    if !(tol > 0.0) {
        return Err(ForgeError::Invalid("embedding tolerance must be positive".into()));
    }
    let input_margin = indicatrix_margin(curve)?;
    let min_arc = (3.0 * tol).min(curve.length() / 8.0);
    let d0 = min_self_distance(curve, min_arc);
    let mut report = EmbedReport {
        tolerance: tol,
        input_distance: d0,
        min_distance: d0,
        attempts: 0,
        amplitude: 0.0,
        band: 0,
        input_margin,
        margin: input_margin,
    };
    if d0 >= tol {
        return Ok((curve.clone(), report));
    }
    // perturbing is only meaningful when there is convexity to preserve
    if input_margin <= 0.0 {
        return Err(ForgeError::ConvexityLost { margin: input_margin });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // improvements accumulate: each attempt starts from the best curve so far
    let (mut base, mut best) = (curve.clone(), d0);
    for r in 0..ATTEMPTS {
        let amplitude = START * (1u64 << r) as f64;
        // halve the band as the amplitude grows so higher derivatives stay tame
        let band = (MAX_BAND >> r).max(2);
        let mut round: Option<(f64, PeriodicCurve)> = None;
        for _ in 0..DRAWS {
            let p = random_perturbation(&mut rng, band, amplitude)?;
            for sign in [1.0, -1.0] {
                let out = add(&base, &p.scaled(sign))?;
                let d = min_self_distance(&out, min_arc);
                if round.as_ref().is_none_or(|(b, _)| d > *b) {
                    round = Some((d, out));
                }
            }
        }
        let Some((d, out)) = round else { continue };
        if d <= best {
            continue;
        }
        let margin = indicatrix_margin(&out)?;
        if margin <= 0.0 {
            continue;
        }
        report.amplitude += amplitude;
        report.band = report.band.max(band);
        (base, best) = (out, d);
        if d >= tol {
            report.min_distance = d;
            report.attempts = r + 1;
            report.margin = margin;
            return Ok((base, report));
        }
    }
    Err(ForgeError::PerturbationFailed {
        attempts: ATTEMPTS,
        best,
    })
}

fn add(x: &PeriodicCurve, y: &PeriodicCurve) -> Result<PeriodicCurve> {
    let m = x.modes().max(y.modes());
    let (x, y) = (x.with_modes(m), y.with_modes(m));
    let sum = |u: &[V3], v: &[V3]| u.iter().zip(v).map(|(a, b)| vec3::add(*a, *b)).collect();
    PeriodicCurve::new(
        sum(x.cos_coeffs(), y.cos_coeffs()),
        sum(x.sin_coeffs(), y.sin_coeffs()),
    )
}

/// Fiber transition `t ↦ t - delta` from chart `from` to chart `to` on their
/// overlap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub delta: f64,
}

/// A bundle immersion over one chart: a family on the common grid, defined
/// at the nodes where `support` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFamily {
    pub family: CurveFamily,
    pub support: Vec<bool>,
    /// Unnormalized partition bump at each node (zero off the support).
    pub bump: Vec<f64>,
}

/// Two-chart cover of the torus split along the first axis. Chart 0 covers
/// the first half of the nodes plus `overlap` on either side, chart 1 the
/// rest plus the same margins.
pub fn two_chart_cover(res: [usize; 3], overlap: usize) -> [(Vec<bool>, Vec<f64>); 2] {
    let n = res[0];
    let count: usize = res.iter().product();
    let half = n / 2;
    // node i lies in the circular index range [lo, hi)
    let inside = |i: usize, lo: usize, hi: usize| (lo..hi).any(|j| j % n == i);
    let overlap = overlap.min(half);
    let covers = [(n - overlap, n + half + overlap), (half - overlap, n + overlap)];
    let bump = |i: usize, c: usize| {
        // 1 deep inside, 0 at the far edge of the overlap
        let (lo, hi) = covers[c];
        if !inside(i, lo, hi) {
            return 0.0;
        }
        let pos = (lo..hi).position(|j| j % n == i).unwrap() as f64;
        let from_edge = pos.min((hi - lo - 1) as f64 - pos);
        if overlap == 0 {
            1.0
        } else {
            smooth_step(from_edge / overlap as f64 - 0.5, 0.5).max(1e-3)
        }
    };
    [0, 1].map(|c| {
        let support: Vec<bool> = (0..count)
            .map(|k| inside(family::unflatten(k, res)[0], covers[c].0, covers[c].1))
            .collect();
        let bumps: Vec<f64> = (0..count).map(|k| bump(family::unflatten(k, res)[0], c)).collect();
        (support, bumps)
    })
}

/// Check of one overlap node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapCheck {
    pub node: usize,
    pub transition: usize,
    /// `g_to(t) - g_from(t - δ)`, averaged over probe parameters.
    pub observed: V3,
    /// `∫₀^δ f_to` by Gauss-Legendre quadrature.
    pub quadrature: V3,
    pub error: f64,
    /// Spread of the observed translation over the probes.
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    pub overlaps: Vec<OverlapCheck>,
    pub max_translation_error: f64,
    pub max_derivative_error: f64,
}

/// Patched family in each chart's own fiber coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patched {
    pub charts: Vec<LocalFamily>,
    pub report: PatchReport,
}

const PROBES: usize = 16;

fn gauss_legendre(curve: &PeriodicCurve, lo: f64, hi: f64) -> V3 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let panels = (4 * curve.modes()).max(16);
    let h = (hi - lo) / panels as f64;
    let mut s = [0.0; 3];
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            s = vec3::add(s, vec3::scale(0.5 * h * w, curve.eval(mid + 0.5 * h * x)));
        }
    }
    s
}

/// Glue local bundle immersions with a partition of unity. On overlaps the
/// charts must agree up to the fiber shift and a translation; each chart is
/// corrected by `-Σ φ_i v_i` so the translations cancel while fibrewise
/// derivatives stay untouched.
pub fn patch_family(locals: &[LocalFamily], transitions: &[Transition], tol: f64) -> Result<Patched> {
    let count = locals
        .first()
        .map(|l| l.family.nodes.len())
        .ok_or_else(|| ForgeError::Invalid("no charts to patch".into()))?;
    if locals.iter().any(|l| l.family.nodes.len() != count || l.support.len() != count) {
        return Err(ForgeError::Invalid("charts must share one grid".into()));
    }
    for t in transitions {
        if t.from >= locals.len() || t.to >= locals.len() || t.from == t.to {
            return Err(ForgeError::Invalid(format!("transition {t:?} names unknown charts")));
        }
    }
    let mut overlaps = Vec::new();
    // translation v[(from,to)][node]
    let mut shifts: Vec<Vec<Option<V3>>> = vec![vec![None; count]; transitions.len()];
    let probes: Vec<f64> = (0..PROBES).map(|j| j as f64 / PROBES as f64).collect();
    for (ti, tr) in transitions.iter().enumerate() {
        let (from, to) = (&locals[tr.from], &locals[tr.to]);
        for node in 0..count {
            if !(from.support[node] && to.support[node]) {
                continue;
            }
            let (gi, gj) = (&from.family.nodes[node], &to.family.nodes[node]);
            let (fi, fj) = (gi.derivative(), gj.derivative());
            let mismatch = probes
                .iter()
                .map(|&t| vec3::dist(fi.eval(t - tr.delta), fj.eval(t)))
                .fold(0.0, f64::max);
            if mismatch > tol {
                return Err(ForgeError::OverlapMismatch {
                    node,
                    detail: format!("fibrewise derivatives differ by {mismatch:.3e} after the shift"),
                });
            }
            let obs: Vec<V3> = probes
                .iter()
                .map(|&t| vec3::sub(gj.eval(t), gi.eval(t - tr.delta)))
                .collect();
            let mean = vec3::scale(
                1.0 / PROBES as f64,
                obs.iter().fold([0.0; 3], |s, v| vec3::add(s, *v)),
            );
            let spread = obs.iter().map(|v| vec3::dist(*v, mean)).fold(0.0, f64::max);
            // v = g_j(δ) - g_i(0) = ∫₀^δ f_j + g_j(0) - g_i(0)
            let quad = vec3::add(
                gauss_legendre(&fj, 0.0, tr.delta),
                vec3::sub(gj.eval(0.0), gi.eval(0.0)),
            );
            let error = vec3::dist(mean, quad);
            if error > tol || spread > tol {
                return Err(ForgeError::OverlapMismatch {
                    node,
                    detail: format!("translation {mean:?} differs from the integral {quad:?} by {error:.3e}"),
                });
            }
            shifts[ti][node] = Some(mean);
            overlaps.push(OverlapCheck {
                node,
                transition: ti,
                observed: mean,
                quadrature: quad,
                error,
                spread,
            });
        }
    }
    let mut charts = Vec::with_capacity(locals.len());
    let mut max_derivative_error: f64 = 0.0;
    for (c, local) in locals.iter().enumerate() {
        let mut nodes = local.family.nodes.clone();
        for (k, node) in nodes.iter_mut().enumerate() {
            if !local.support[k] {
                continue;
            }
            let total: f64 = locals.iter().filter(|l| l.support[k]).map(|l| l.bump[k]).sum();
            let mut correction = [0.0; 3];
            for (ti, tr) in transitions.iter().enumerate() {
                let Some(v) = shifts[ti][k] else { continue };
                // express chart `c` against the other chart's curve
                let (other, sign) = if tr.to == c {
                    (tr.from, -1.0)
                } else if tr.from == c {
                    (tr.to, 1.0)
                } else {
                    continue;
                };
                let phi = locals[other].bump[k] / total;
                correction = vec3::add(correction, vec3::scale(sign * phi, v));
            }
            *node = node.translated(correction);
            let err = node.derivative().sup_distance(&local.family.nodes[k].derivative(), 256);
            max_derivative_error = max_derivative_error.max(err);
        }
        charts.push(LocalFamily {
            family: CurveFamily::new(local.family.chart, local.family.res, nodes)?,
            support: local.support.clone(),
            bump: local.bump.clone(),
        });
    }
    let max_translation_error = overlaps.iter().map(|o| o.error).fold(0.0, f64::max);
    Ok(Patched {
        charts,
        report: PatchReport {
            overlaps,
            max_translation_error,
            max_derivative_error,
        },
    })
}

/// Largest disagreement of patched charts on overlaps once the fiber shift
/// is undone.
pub fn patched_mismatch(patched: &Patched, transitions: &[Transition]) -> f64 {
    let mut worst: f64 = 0.0;
    for tr in transitions {
        let (a, b) = (&patched.charts[tr.from], &patched.charts[tr.to]);
        for k in 0..a.support.len() {
            if a.support[k] && b.support[k] {
                let d = (0..PROBES)
                    .map(|j| {
                        let t = j as f64 / PROBES as f64;
                        vec3::dist(a.family.nodes[k].eval(t - tr.delta), b.family.nodes[k].eval(t))
                    })
                    .fold(0.0, f64::max);
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// Minimum fibrewise speed over all nodes.
pub fn check_immersed(family: &CurveFamily) -> Result<f64> {
    let mut min_speed = f64::INFINITY;
    for (k, c) in family.nodes.iter().enumerate() {
        let n = (16 * c.modes()).max(256);
        let s = c.derivative().sample(n).iter().map(|v| vec3::norm(*v)).fold(f64::INFINITY, f64::min);
        if s <= IMMERSION_TOL {
            return Err(ForgeError::NotImmersed { min_speed: s }.at_node(k));
        }
        min_speed = min_speed.min(s);
    }
    Ok(min_speed)
}

/// The plane field `⟨∂_t, η·∂_x⟩` with `η` the unit direction of a family
/// (or of its fibrewise derivative, for the derived prolongation).
#[derive(Clone)]
pub struct ProlongedField {
    pub model: Arc<dyn FiberModel>,
    pub derived: bool,
}

impl ProlongedField {
    /// Prolongation of the tangent indicatrix of a bundle immersion.
    pub fn derived(model: Arc<dyn FiberModel>) -> ProlongedField {
        ProlongedField { model, derived: true }
    }

    /// Prolongation of a family of directions.
    pub fn direct(model: Arc<dyn FiberModel>) -> ProlongedField {
        ProlongedField { model, derived: false }
    }

    /// Unit direction `η` as jets at `p`.
    pub fn direction(&self, p: V4, order: u8) -> Result<[Jet; 3]> {
        let x = Jet::point(p, order);
        let v = self.model.fiber_jet(&[x[0], x[1], x[2]], p[3], self.derived);
        let speed = vec3::norm(family::value3(&v));
        if speed <= IMMERSION_TOL {
            return Err(ForgeError::NotImmersed { min_speed: speed });
        }
        Ok(family::unit(&v))
    }
}

impl PlaneFieldModel for ProlongedField {
    fn frame(&self, p: V4, order: u8) -> Result<Frame> {
        let eta = self.direction(p, order)?;
        let (zero, one) = (Jet::constant(0.0, order), Jet::constant(1.0, order));
        Ok([[zero, zero, zero, one], [eta[0], eta[1], eta[2], zero]])
    }

    fn is_base_independent(&self) -> bool {
        self.model.is_base_independent()
    }
}

/// Derived prolongation of a bundle immersion family.
pub fn derived_prolongation(family: &CurveFamily) -> Result<ProlongedField> {
    check_immersed(family)?;
    Ok(ProlongedField::derived(Arc::new(family.clone())))
}

/// Frame values of a plane field on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneField {
    pub grid: SampleGrid,
    pub frames: Vec<[V4; 2]>,
}

impl PlaneField {
    pub fn sample(field: &dyn PlaneFieldModel, grid: &SampleGrid) -> Result<PlaneField> {
        use rayon::prelude::*;
        let frames = (0..grid.len())
            .into_par_iter()
            .map(|s| {
                let f = field.frame(grid.point(s), 0).map_err(|e| e.at_node(s))?;
                Ok([jet::values(&f[0]), jet::values(&f[1])])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PlaneField { grid: *grid, frames })
    }

    /// `x1,x2,x3,t` followed by both frame vectors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,x3,t,u1,u2,u3,ut,v1,v2,v3,vt\n");
        for (s, f) in self.frames.iter().enumerate() {
            let cells: Vec<String> = self
                .grid
                .point(s)
                .iter()
                .chain(f[0].iter())
                .chain(f[1].iter())
                .map(|x| fmt17(*x))
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}
