//! The shipped graftable seed.
//!
//! The seed is a convex curve built from a curvature profile on `[0, L]`
//! that starts on the latitude `z = C0` heading east, loops north and crosses
//! the equator heading south. Requiring the tangent to be vertical halfway
//! makes the arc symmetric under `z ↦ -z`, so it ends tangent to `z = -C0`
//! heading west. The half-turn `diag(1,-1,-1)` of that arc closes the curve.
//!
//! The curvature minus the latitude value is flat at the junctions, so the
//! seed hugs both latitudes to all orders and grafted loops line up cleanly.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::profile::{self, Frame, PiecewiseProfile, RenderOptions, Segment, SegmentKind};
use crate::curve::PeriodicCurve;
use crate::error::{ForgeError, Result};
use crate::vec3;

/// Parameters of the seed curvature profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedShape {
    /// latitude level of the north tangency
    pub level: f64,
    /// height of the two turning bumps
    pub amplitude: f64,
    /// relative depth of the mid-arc dip (< 1 keeps convexity)
    pub dip: f64,
    /// exponent weight of the flat envelope
    pub flatness: f64,
    /// position of the turning bump as a fraction of the half length
    pub peak: f64,
    /// width of the turning bump as a fraction of the half length
    pub spread: f64,
    /// arc length of one half of the seed
    pub half_length: f64,
}

/// Solved parameters for the default shape.
const DEFAULT_AMPLITUDE: f64 = 14.979_919_880_022_587;
const DEFAULT_HALF_LENGTH: f64 = 5.105_187_644_134_975_5;

impl SeedShape {
    fn latitude_kappa(&self) -> f64 {
        self.level / (1.0 - self.level * self.level).sqrt()
    }

    /// Curvature at arc length `s`; periodic with period `half_length`.
    pub fn kappa(&self, s: f64) -> f64 {
        let k0 = self.latitude_kappa();
        let x = (s / self.half_length).rem_euclid(1.0);
        let sq = (std::f64::consts::PI * x).sin().powi(2);
        if sq < 1e-300 {
            return k0;
        }
        let envelope = (self.flatness * (1.0 - 1.0 / sq)).exp();
        let g = |y: f64| (-((y - self.peak) / self.spread).powi(2)).exp();
        let turn = g(x) + g(1.0 - x);
        k0 + envelope * (self.amplitude * turn - self.dip * k0 * sq)
    }

    /// Frame at the north tangency point, heading east.
    pub fn north_frame(&self) -> Frame {
        let r = (1.0 - self.level * self.level).sqrt();
        profile::frame_from([r, 0.0, self.level], [0.0, 1.0, 0.0])
    }

    /// Horizontal tangent components halfway along the arc; zero at a solution.
    fn residual(&self, steps: usize) -> [f64; 2] {
        let frames = profile::integrate(
            &|s| self.kappa(s),
            self.north_frame(),
            0.5 * self.half_length,
            1,
            steps,
            &[],
        );
        let t = profile::tangent(&frames[1]);
        [t[0], t[1]]
    }

    /// Newton on `(amplitude, half_length)` with a finite-difference Jacobian.
    pub fn solve(mut self, tol: f64) -> Result<SeedShape> {
        const STEPS: usize = 8000;
        for _ in 0..30 {
            let r = self.residual(STEPS);
            if r[0].hypot(r[1]) < tol {
                return Ok(self);
            }
            let ha = 1e-6 * self.amplitude;
            let hl = 1e-6 * self.half_length;
            let ra = SeedShape {
                amplitude: self.amplitude + ha,
                ..self
            }
            .residual(STEPS);
            let rl = SeedShape {
                half_length: self.half_length + hl,
                ..self
            }
            .residual(STEPS);
            let j = [
                [(ra[0] - r[0]) / ha, (rl[0] - r[0]) / hl],
                [(ra[1] - r[1]) / ha, (rl[1] - r[1]) / hl],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            let da = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
            let dl = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
            // damp large steps
            let scale = (0.2 * self.half_length / dl.abs().max(1e-300)).min(1.0);
            self.amplitude -= scale * da;
            self.half_length -= scale * dl;
        }
        Err(ForgeError::Invalid("seed profile solve did not converge".into()))
    }

    /// The default seed with levels `±1/2`.
    pub fn standard() -> SeedShape {
        static SHAPE: OnceLock<SeedShape> = OnceLock::new();
        *SHAPE.get_or_init(|| {
            SeedShape {
                level: 0.5,
                amplitude: DEFAULT_AMPLITUDE,
                dip: 0.9,
                flatness: 1.0,
                peak: 0.25,
                spread: 0.08,
                half_length: DEFAULT_HALF_LENGTH,
            }
            .solve(1e-13)
            .expect("default seed parameters converge")
        })
    }

    /// Closed curvature profile starting a quarter turn before the north
    /// tangency, so the tangencies sit at parameters `1/4` and `3/4`.
    pub fn closed_profile(&self) -> PiecewiseProfile {
        let l = self.half_length;
        let mut f = self.north_frame();
        // walk back half an arc: run the mirrored half forward from -L/2
        // by integrating the reversed relation from P
        let back = profile::integrate(&|s| -self.kappa(-s), reverse(&f), 0.5 * l, 1, 8000, &[]);
        f = reverse(&back[1]);
        let shape = *self;
        PiecewiseProfile {
            start: f,
            segments: vec![Segment {
                length: 2.0 * l,
                kappa: std::sync::Arc::new(move |s| shape.kappa(s - 0.5 * l)),
                kind: SegmentKind::Other,
            }],
        }
    }

    /// Render the closed seed as a trigonometric series.
    pub fn curve(&self) -> Result<PeriodicCurve> {
        let prof = self.closed_profile();
        let mut opts = RenderOptions::for_length(prof.total_length());
        opts.refit_tol = 1e-10;
        Ok(profile::smooth_corners_with(&prof, 0.01, opts)?.curve)
    }
}

/// Frame of the same curve traversed backwards: `(p, -T, -N)`.
fn reverse(f: &Frame) -> Frame {
    let p = profile::position(f);
    let t = vec3::scale(-1.0, profile::tangent(f));
    profile::columns(p, t, vec3::cross(p, t))
}
