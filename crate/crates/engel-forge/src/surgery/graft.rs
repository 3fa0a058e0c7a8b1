//! Grafting: cut a convex curve at two latitude tangencies, rotate the arc
//! between them about the z-axis and reconnect along the latitudes.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profile::{
    self, ArcLengthMap, PiecewiseProfile, RenderOptions, Segment, SegmentKind, SmoothingReport,
};
use crate::curve::{self, PeriodicCurve, TWO_PI};
use crate::error::{ForgeError, Result};
use crate::vec3;

/// Tolerance for the tangency checks of a graftable arc.
pub const TANGENCY_TOL: f64 = 1e-6;
/// Default corner smoothing width, as a fraction of the parameter length.
pub const DEFAULT_WIDTH: f64 = 0.02;

/// An arc `[t0, t1]` starting tangent to the latitude `z = C0` and ending
/// tangent to `z = C1`, both in their convex orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraftableArc {
    pub t0: f64,
    pub t1: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
}

impl GraftableArc {
    /// The arc of the shipped seed.
    pub fn standard() -> GraftableArc {
        GraftableArc {
            t0: 0.25,
            t1: 0.75,
            c0: 0.5,
            c1: -0.5,
        }
    }

    /// Check the tangency and orientation conditions against `curve`.
    pub fn validate(&self, curve: &PeriodicCurve) -> Result<()> {
        let bad = |m: String| Err(ForgeError::NotGraftable(m));
        if !(0.0 <= self.t0 && self.t0 < self.t1 && self.t1 < 1.0) {
            return bad(format!("need 0 <= t0 < t1 < 1, got {} and {}", self.t0, self.t1));
        }
        if !(self.c0 > 0.0 && self.c0 < 1.0 && self.c1 < 0.0 && self.c1 > -1.0) {
            return bad(format!("need 1 > C0 > 0 > C1 > -1, got {} and {}", self.c0, self.c1));
        }
        let margin = curve::convexity_margin(curve, 4 * curve::DEFAULT_SAMPLES.max(4 * curve.modes()))?;
        if margin.min_value <= 0.0 {
            return bad(format!("input is not convex (margin {:.3e})", margin.min_value));
        }
        for (t, level, sign, name) in [(self.t0, self.c0, 1.0, "t0"), (self.t1, self.c1, -1.0, "t1")] {
            let j = curve.eval_jet(t);
            let tangent = vec3::normalize(j.d1);
            if (j.value[2] - level).abs() > TANGENCY_TOL {
                return bad(format!("{name}: height {:.9} is not {level}", j.value[2]));
            }
            if tangent[2].abs() > TANGENCY_TOL {
                return bad(format!("{name}: not tangent to the latitude (vertical slope {:.3e})", tangent[2]));
            }
            let east = vec3::normalize(vec3::cross([0.0, 0.0, 1.0], j.value));
            if sign * vec3::dot(east, tangent) <= 0.0 {
                return bad(format!("{name}: runs against the convex orientation of the latitude"));
            }
        }
        Ok(())
    }
}

/// Numerical settings for [`graft_with`].
#[derive(Clone, Copy, Debug)]
pub struct GraftOptions {
    pub width: f64,
    pub refit_tol: f64,
    /// Samples of the rendered curve; chosen from the length when `None`.
    pub samples: Option<usize>,
}

impl Default for GraftOptions {
    fn default() -> Self {
        GraftOptions {
            width: DEFAULT_WIDTH,
            refit_tol: 1e-9,
            samples: None,
        }
    }
}

/// Result of one grafting step.
#[derive(Clone, Debug)]
pub struct GraftOutput {
    pub curve: PeriodicCurve,
    pub smoothing: SmoothingReport,
    /// Parameter ranges of the pieces in the output, in order.
    pub pieces: Vec<(SegmentKind, f64, f64)>,
}

impl GraftOutput {
    /// Output parameter range of the first piece of the given kind.
    pub fn piece(&self, kind: SegmentKind) -> Option<(f64, f64)> {
        self.pieces
            .iter()
            .find(|p| p.0 == kind)
            .map(|p| (p.1, p.2))
    }
}

/// Curvature profile of the grafted curve at homotopy time `s`.
///
/// The profile starts at the middle of the complementary arc, so that every
/// junction is interior.
pub fn graft_profile(
    map: &Arc<ArcLengthMap>,
    arc: &GraftableArc,
    n: usize,
    s: f64,
) -> PiecewiseProfile {
    let total = map.length;
    let s0 = map.arc_at(arc.t0);
    let s1 = map.arc_at(arc.t1);
    let arc_len = s1 - s0;
    let half_rest = 0.5 * (total - arc_len);
    let mid = s1 + half_rest;
    let r0 = (1.0 - arc.c0 * arc.c0).sqrt();
    let r1 = (1.0 - arc.c1 * arc.c1).sqrt();
    let input = |offset: f64| -> profile::KappaFn {
        let m = Arc::clone(map);
        Arc::new(move |u| m.kappa_at(offset + u))
    };
    let turn = TWO_PI * n as f64 * s;
    let start = map.frame_at_param(map.param_at(mid));
    PiecewiseProfile {
        start,
        segments: vec![
            Segment {
                length: half_rest,
                kappa: input(mid),
                kind: SegmentKind::Complement,
            },
            Segment::constant(turn * r0, arc.c0 / r0, SegmentKind::NorthLatitude),
            Segment {
                length: arc_len,
                kappa: input(s0),
                kind: SegmentKind::Arc,
            },
            Segment::constant(turn * r1, -arc.c1 / r1, SegmentKind::SouthLatitude),
            Segment {
                length: half_rest,
                kappa: input(s1),
                kind: SegmentKind::Complement,
            },
        ],
    }
}

/// Time-`s` curve of the `n`-fold grafting homotopy with default settings.
pub fn graft(curve: &PeriodicCurve, arc: &GraftableArc, n: usize, s: f64) -> Result<PeriodicCurve> {
    Ok(graft_with(curve, arc, n, s, GraftOptions::default())?.curve)
}

pub fn graft_with(
    curve: &PeriodicCurve,
    arc: &GraftableArc,
    n: usize,
    s: f64,
    opts: GraftOptions,
) -> Result<GraftOutput> {
    arc.validate(curve)?;
    let map = Arc::new(ArcLengthMap::new(curve)?);
    graft_mapped(&map, arc, n, s, opts)
}

fn graft_mapped(
    map: &Arc<ArcLengthMap>,
    arc: &GraftableArc,
    n: usize,
    s: f64,
    opts: GraftOptions,
) -> Result<GraftOutput> {
    if n == 0 {
        return Err(ForgeError::Invalid("graft multiplicity must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(ForgeError::Invalid(format!("homotopy time {s} outside [0, 1]")));
    }
    let prof = graft_profile(map, arc, n, s);
    let length = prof.total_length();
    let mut render = RenderOptions::for_length(length);
    render.refit_tol = opts.refit_tol;
    if let Some(n) = opts.samples {
        render.samples = n;
    }
    let smoothed = profile::smooth_corners_with(&prof, opts.width, render)?;
    let mut pieces = Vec::new();
    let mut acc = 0.0;
    for seg in &prof.segments {
        pieces.push((seg.kind, acc / length, (acc + seg.length) / length));
        acc += seg.length;
    }
    Ok(GraftOutput {
        curve: smoothed.curve,
        smoothing: smoothed.report,
        pieces,
    })
}

/// Samples of a grafting homotopy.
#[derive(Clone, Debug, Serialize)]
pub struct Homotopy {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub curves: Vec<PeriodicCurve>,
    pub convexity: Vec<f64>,
    pub min_kappa: Vec<f64>,
    /// Largest `sup_t |γ_s(t) - γ_s'(t)| / |s - s'|` over adjacent samples.
    pub lipschitz: f64,
}

/// Run the homotopy on `steps + 1` uniform times in `[0, 1]`.
pub fn graft_homotopy(
    curve: &PeriodicCurve,
    arc: &GraftableArc,
    n: usize,
    steps: usize,
    opts: GraftOptions,
) -> Result<Homotopy> {
    arc.validate(curve)?;
    let map = Arc::new(ArcLengthMap::new(curve)?);
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let outputs: Vec<GraftOutput> = times
        .par_iter()
        .enumerate()
        .map(|(i, &s)| graft_mapped(&map, arc, n, s, opts).map_err(|e| e.at_node(i)))
        .collect::<Result<_>>()?;
    let probe = 2048;
    let samples: Vec<Vec<vec3::V3>> = outputs.iter().map(|o| o.curve.sample(probe)).collect();
    let mut lipschitz: f64 = 0.0;
    for i in 1..samples.len() {
        let d = samples[i]
            .iter()
            .zip(&samples[i - 1])
            .map(|(p, q)| vec3::dist(*p, *q))
            .fold(0.0, f64::max);
        lipschitz = lipschitz.max(d / (times[i] - times[i - 1]));
    }
    Ok(Homotopy {
        convexity: outputs.iter().map(|o| o.smoothing.convexity_margin).collect(),
        min_kappa: outputs.iter().map(|o| o.smoothing.min_kappa).collect(),
        curves: outputs.into_iter().map(|o| o.curve).collect(),
        times,
        lipschitz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surgery::seed::SeedShape;

    #[test]
    fn seed_arc_is_graftable() {
        let c = SeedShape::standard().curve().unwrap();
        GraftableArc::standard().validate(&c).unwrap();
        let wrong = GraftableArc {
            t0: 0.4,
            ..GraftableArc::standard()
        };
        assert!(matches!(wrong.validate(&c), Err(ForgeError::NotGraftable(_))));
        let reversed = GraftableArc {
            t0: 0.25,
            t1: 0.75,
            c0: 0.5,
            c1: -0.5,
        }
        .validate(&c.reversed());
        assert!(reversed.is_err());
    }

    #[test]
    fn zero_time_reproduces_input() {
        let c = SeedShape::standard().curve().unwrap();
        let out = graft_with(&c, &GraftableArc::standard(), 1, 0.0, GraftOptions::default()).unwrap();
        // every output sample projects onto the input curve
        let n = 1 << 14;
        let dense = c.sample(n);
        let worst = out
            .curve
            .sample(1024)
            .iter()
            .map(|p| {
                let i = (0..n)
                    .min_by(|x, y| vec3::dist(dense[*x], *p).total_cmp(&vec3::dist(dense[*y], *p)))
                    .unwrap();
                let mut t = i as f64 / n as f64;
                for _ in 0..8 {
                    let j = c.eval_jet(t);
                    let r = vec3::sub(j.value, *p);
                    t -= vec3::dot(r, j.d1) / (vec3::dot(j.d1, j.d1) + vec3::dot(r, j.d2));
                }
                vec3::dist(c.eval(t), *p)
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{worst}");
        assert!(out.smoothing.refit_residual <= 1e-9);
    }

    #[test]
    fn full_graft_carries_two_n_wiggles() {
        use crate::surgery::wiggle;
        let c = SeedShape::standard().curve().unwrap();
        for n in 1..=3 {
            let out = graft_with(&c, &GraftableArc::standard(), n, 1.0, GraftOptions::default()).unwrap();
            let w = wiggle::detect_wiggles(&out.curve, wiggle::CLOSURE_TOL);
            let chk = wiggle::n_complete_surround(&out.curve, n, &w);
            assert!(chk.satisfied);
            let hemis: Vec<_> = chk.wiggles.iter().map(|w| w.hemisphere).collect();
            assert!(hemis.contains(&wiggle::Hemisphere::North) && hemis.contains(&wiggle::Hemisphere::South));
            assert!(!wiggle::n_complete_surround(&out.curve, n + 1, &w).satisfied);
        }
    }

    #[test]
    fn homotopy_stays_convex() {
        let c = SeedShape::standard().curve().unwrap();
        let h = graft_homotopy(&c, &GraftableArc::standard(), 2, 63, GraftOptions::default()).unwrap();
        assert_eq!(h.curves.len(), 64);
        assert!(h.convexity.iter().all(|m| *m > 0.0));
        assert!(h.lipschitz.is_finite());
    }
}
