//! Zero-integral reparametrization of curves that strictly surround the
//! origin, by exponential tilting.
//!
//! Minimising `Λ(u) = log ∫ exp(u·γ)` gives a density `w ∝ exp(u·γ)` with
//! `∫ γ w = 0`; composing with the inverse of `Ψ(s) = ∫₀ˢ w` moves that
//! weighted mean into the plain integral.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{self, PeriodicCurve, ScalarSeries};
use crate::error::{ForgeError, Result};
use crate::family::{self, CurveFamily};
use crate::surgery::profile::smooth_step;
use crate::vec3::{self, V3};

const MIN_EIG: f64 = 1e-12;
const MAX_NEWTON: usize = 60;
const BASE_QUADRATURE: usize = 512;

/// Circle diffeomorphism `ψ = Ψ⁻¹` stored through its density `w = Ψ'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleDiffeo {
    pub density: ScalarSeries,
}

impl CircleDiffeo {
    pub fn identity() -> CircleDiffeo {
        CircleDiffeo {
            density: ScalarSeries::constant(1.0),
        }
    }

    /// `Ψ(s) = ∫₀ˢ w`.
    pub fn cumulative(&self, s: f64) -> f64 {
        self.density.integral_to(s)
    }

    /// `ψ(t)`, the inverse of `Ψ`, by bisection and Newton polish.
    pub fn apply(&self, t: f64) -> f64 {
        let turns = t.floor();
        let target = t - turns;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut s = target;
        for _ in 0..100 {
            let f = self.cumulative(s) - target;
            if f.abs() < 1e-15 {
                break;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let w = self.density.eval(s);
            let newton = s - f / w;
            s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        turns + s
    }

    /// Smallest density over `n` samples; positive for a diffeomorphism.
    pub fn min_density(&self, n: usize) -> f64 {
        (0..n)
            .map(|j| self.density.eval(j as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One Newton iterate of the tilt problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltStep {
    pub iteration: usize,
    pub residual: f64,
    pub objective: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltSolution {
    pub u: V3,
    /// Norm of the tilted mean at `u`.
    pub residual: f64,
    pub iterations: usize,
    pub hessian_min_eig: f64,
    /// `Λ(u)` and `Λ(0)`.
    pub objective: f64,
    pub objective_at_zero: f64,
    pub quadrature_points: usize,
    pub trace: Vec<TiltStep>,
}

/// `Λ`, its gradient (tilted mean) and Hessian (tilted covariance).
struct Moments {
    value: f64,
    mean: V3,
    cov: Matrix3<f64>,
}

fn moments(points: &[V3], u: V3) -> Moments {
    let e: Vec<f64> = points.iter().map(|p| vec3::dot(u, *p)).collect();
    let shift = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut m = [0.0; 3];
    let mut s = Matrix3::zeros();
    for (p, ei) in points.iter().zip(&e) {
        let w = (ei - shift).exp();
        z += w;
        for i in 0..3 {
            m[i] += w * p[i];
            for j in 0..3 {
                s[(i, j)] += w * p[i] * p[j];
            }
        }
    }
    let mean = vec3::scale(1.0 / z, m);
    let mv = Vector3::from(mean);
    let cov = s / z - mv * mv.transpose();
    Moments {
        value: shift + (z / points.len() as f64).ln(),
        mean,
        cov,
    }
}

fn quadrature_points(curve: &PeriodicCurve) -> usize {
    if curve.modes() <= 128 {
        BASE_QUADRATURE
    } else {
        (8 * curve.modes()).next_power_of_two()
    }
}

/// Damped Newton on `Λ(u) = log ∫ exp(u·γ)`.
pub fn tilt_solve(curve: &PeriodicCurve, tol: f64) -> Result<TiltSolution> {
    let margin = curve::surround_margin(curve, curve::DEFAULT_DIRECTIONS);
    if margin <= 0.0 {
        return Err(ForgeError::NotSurrounding { margin });
    }
    let mut n = quadrature_points(curve);
    let mut points = curve.sample(n);
    let objective_at_zero = moments(&points, [0.0; 3]).value;
    let mut u = [0.0; 3];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mo = moments(&points, u);
        let residual = vec3::norm(mo.mean);
        let eig = SymmetricEigen::new(mo.cov).eigenvalues.min();
        if residual <= tol {
            // confirm with a finer rule before accepting
            let fine = curve.sample(2 * n);
            let check = vec3::norm(moments(&fine, u).mean);
            if check <= tol || n >= 1 << 16 {
                if eig < MIN_EIG {
                    return Err(ForgeError::Degenerate { min_eig: eig });
                }
                trace.push(TiltStep {
                    iteration: iterations,
                    residual,
                    objective: mo.value,
                    step: 0.0,
                });
                return Ok(TiltSolution {
                    u,
                    residual,
                    iterations,
                    hessian_min_eig: eig,
                    objective: mo.value,
                    objective_at_zero,
                    quadrature_points: n,
                    trace,
                });
            }
            n *= 2;
            points = fine;
            continue;
        }
        if eig < MIN_EIG {
            return Err(ForgeError::Degenerate { min_eig: eig });
        }
        if iterations >= MAX_NEWTON {
            return Err(ForgeError::NotSurrounding { margin });
        }
        let g = Vector3::from(mo.mean);
        let d = -mo
            .cov
            .cholesky()
            .ok_or(ForgeError::Degenerate { min_eig: eig })?
            .solve(&g);
        let slope = g.dot(&d);
        let mut alpha = 1.0;
        let mut next = [0, 1, 2].map(|i| u[i] + d[i]);
        // below roundoff of Λ the line search cannot see progress
        if -slope > 1e-13 * (1.0 + mo.value.abs()) {
            for _ in 0..60 {
                next = [0, 1, 2].map(|i| u[i] + alpha * d[i]);
                if moments(&points, next).value <= mo.value + 1e-4 * alpha * slope {
                    break;
                }
                alpha *= 0.5;
            }
        }
        trace.push(TiltStep {
            iteration: iterations,
            residual,
            objective: mo.value,
            step: alpha * d.norm(),
        });
        u = next;
        iterations += 1;
    }
}

/// Settings for [`rebalance_with`].
#[derive(Clone, Copy, Debug)]
pub struct RebalanceOptions {
    /// Target for `|∫ γ∘ψ|`.
    pub tol: f64,
    /// Max residual of the output series at the fit samples.
    pub refit_tol: f64,
}

impl RebalanceOptions {
    pub fn new(tol: f64) -> RebalanceOptions {
        RebalanceOptions { tol, refit_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebalanceReport {
    pub tilt: TiltSolution,
    pub integral_norm: f64,
    pub min_density: f64,
    pub refit_residual: f64,
    /// Upper bound for the Hausdorff distance between input and output images.
    pub image_distance: f64,
    pub modes: usize,
}

#[derive(Clone, Debug)]
pub struct Rebalanced {
    pub curve: PeriodicCurve,
    pub diffeo: CircleDiffeo,
    pub report: RebalanceReport,
}

pub fn rebalance(curve: &PeriodicCurve, tol: f64) -> Result<(PeriodicCurve, CircleDiffeo)> {
    let r = rebalance_with(curve, RebalanceOptions::new(tol))?;
    Ok((r.curve, r.diffeo))
}

pub fn rebalance_with(curve: &PeriodicCurve, opts: RebalanceOptions) -> Result<Rebalanced> {
    let tilt = tilt_solve(curve, (0.01 * opts.tol).max(1e-14))?;
    reparametrize(curve, tilt, opts)
}

/// Compose with the diffeomorphism of density `∝ exp(u·γ)`.
fn reparametrize(curve: &PeriodicCurve, tilt: TiltSolution, opts: RebalanceOptions) -> Result<Rebalanced> {
    let diffeo = tilted_diffeo(curve, tilt.u)?;
    let mut n = (16 * curve.modes().max(diffeo.density.modes())).max(1024).next_power_of_two();
    loop {
        let ts: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
        let psi: Vec<f64> = ts.par_iter().map(|t| diffeo.apply(*t)).collect();
        let values: Vec<V3> = psi.iter().map(|s| curve.eval(*s)).collect();
        match curve::fit_uniform_adaptive(&values, opts.refit_tol) {
            Ok(fit) if fit.curve.modes() < n / 4 => {
                let out = fit.curve;
                let integral_norm = vec3::norm(curve::curve_integral(&out));
                // compare at offset points against the exact composition
                let probes = 1024;
                let image_distance = (0..probes)
                    .map(|j| {
                        let t = (j as f64 + 0.5) / probes as f64;
                        vec3::dist(out.eval(t), curve.eval(diffeo.apply(t)))
                    })
                    .fold(0.0, f64::max);
                if image_distance > 1e-6 {
                    return Err(ForgeError::RefitResidual {
                        residual: image_distance,
                        tolerance: 1e-6,
                    });
                }
                if integral_norm > opts.tol {
                    return Err(ForgeError::NotZeroIntegral { norm: integral_norm });
                }
                let report = RebalanceReport {
                    integral_norm,
                    min_density: diffeo.min_density(4096),
                    refit_residual: fit.residual,
                    image_distance,
                    modes: out.modes(),
                    tilt,
                };
                return Ok(Rebalanced {
                    curve: out,
                    diffeo,
                    report,
                });
            }
            Ok(_) | Err(ForgeError::RefitResidual { .. }) if n < 1 << 17 => n *= 2,
            Ok(fit) => {
                return Err(ForgeError::RefitResidual {
                    residual: fit.residual,
                    tolerance: opts.refit_tol,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Normalised density `exp(u·γ)/Z` as a series.
fn tilted_diffeo(curve: &PeriodicCurve, u: V3) -> Result<CircleDiffeo> {
    if u == [0.0; 3] {
        return Ok(CircleDiffeo::identity());
    }
    let mut n = (8 * curve.modes()).max(1024).next_power_of_two();
    loop {
        let e: Vec<f64> = curve.sample(n).iter().map(|p| vec3::dot(u, *p)).collect();
        let shift = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = e.iter().map(|x| (x - shift).exp()).collect();
        let mean = w.iter().sum::<f64>() / n as f64;
        w.iter_mut().for_each(|x| *x /= mean);
        let peak = w.iter().cloned().fold(0.0, f64::max);
        match ScalarSeries::fit_uniform_adaptive(&w, 1e-13 * peak) {
            Ok((mut s, _)) if s.modes() < n / 4 => {
                s.a[0] = 1.0;
                return Ok(CircleDiffeo { density: s });
            }
            Ok(_) | Err(ForgeError::RefitResidual { .. }) if n < 1 << 17 => n *= 2,
            Ok((s, _)) => return Ok(CircleDiffeo { density: s }),
            Err(e) => return Err(e),
        }
    }
}

/// Per-node outcome of [`family_rebalance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRebalance {
    pub node: usize,
    pub frozen: bool,
    /// Cutoff weight applied to the tilt vector.
    pub weight: f64,
    pub integral_norm: f64,
}

#[derive(Clone, Debug)]
pub struct FamilyRebalance {
    pub family: CurveFamily,
    pub nodes: Vec<NodeRebalance>,
}

/// Fibrewise rebalance with the tilt scaled to zero across a collar of
/// `collar` grid steps around the frozen nodes.
pub fn family_rebalance(
    family: &CurveFamily,
    frozen: &[bool],
    collar: f64,
    tol: f64,
) -> Result<FamilyRebalance> {
    if frozen.len() != family.nodes.len() {
        return Err(ForgeError::Invalid(format!(
            "frozen mask has {} entries for {} nodes",
            frozen.len(),
            family.nodes.len()
        )));
    }
    let frozen_idx: Vec<[usize; 3]> = (0..frozen.len())
        .filter(|k| frozen[*k])
        .map(|k| family::unflatten(k, family.res))
        .collect();
    let periodic = family.chart.is_periodic();
    let weight = |k: usize| -> f64 {
        if frozen[k] {
            return 0.0;
        }
        if frozen_idx.is_empty() {
            return 1.0;
        }
        let i = family::unflatten(k, family.res);
        let d = frozen_idx
            .iter()
            .map(|f| {
                (0..3)
                    .map(|a| {
                        let mut d = (i[a] as f64 - f[a] as f64).abs();
                        if periodic {
                            d = d.min(family.res[a] as f64 - d);
                        }
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        if collar <= 0.0 {
            1.0
        } else {
            smooth_step(2.0 * d / collar - 1.0, 1.0)
        }
    };
    let opts = RebalanceOptions::new(tol);
    let results: Vec<(PeriodicCurve, NodeRebalance)> = family
        .nodes
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let rho = weight(k);
            if rho == 0.0 {
                let integral_norm = vec3::norm(curve::curve_integral(c));
                return Ok((
                    c.clone(),
                    NodeRebalance {
                        node: k,
                        frozen: frozen[k],
                        weight: 0.0,
                        integral_norm,
                    },
                ));
            }
            let mut tilt = tilt_solve(c, (0.01 * tol).max(1e-14)).map_err(|e| e.at_node(k))?;
            tilt.u = vec3::scale(rho, tilt.u);
            let partial = RebalanceOptions {
                tol: if rho < 1.0 { f64::INFINITY } else { tol },
                ..opts
            };
            let r = reparametrize(c, tilt, partial).map_err(|e| e.at_node(k))?;
            Ok((
                r.curve,
                NodeRebalance {
                    node: k,
                    frozen: false,
                    weight: rho,
                    integral_norm: r.report.integral_norm,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (nodes, report): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(FamilyRebalance {
        family: CurveFamily::new(family.chart, family.res, nodes)?,
        nodes: report,
    })
}
