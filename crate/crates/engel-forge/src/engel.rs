//! Lie brackets of jet-valued vector fields and the Engel rank certificate
//! for plane fields on four-dimensional charts.
//!
//! Coordinates are `(x1, x2, x3, t)`. Frame fields are evaluated as jets, so
//! brackets come from exact derivatives rather than differenced frames.

use nalgebra::{Matrix4, Matrix4x3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::family::SampleGrid;
use crate::jet::{self, Jet};
use crate::report::fmt17;

pub type V4 = [f64; 4];
/// Two frame vectors of a plane field, as jets at one point.
pub type Frame = [[Jet; 4]; 2];

const DEGENERATE_M2: f64 = 1e-10;
/// Margins at or below this level count as zero when certifying.
pub const CERTIFY_FLOOR: f64 = 1e-9;

/// A vector field given as a function of the coordinate jets.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: &[Jet; 4]) -> [Jet; 4];

    fn jet(&self, p: V4, order: u8) -> [Jet; 4] {
        self.eval(&Jet::point(p, order))
    }

    fn value(&self, p: V4) -> V4 {
        jet::values(&self.jet(p, 0))
    }
}

impl<F> VectorField for F
where
    F: Fn(&[Jet; 4]) -> [Jet; 4] + Send + Sync,
{
    fn eval(&self, x: &[Jet; 4]) -> [Jet; 4] {
        self(x)
    }
}

/// A rank-two distribution given by a frame whose entries are jets.
pub trait PlaneFieldModel: Send + Sync {
    /// Frame at `p`, with jets valid to `order`.
    fn frame(&self, p: V4, order: u8) -> Result<Frame>;

    /// True when the frame does not depend on the base point.
    fn is_base_independent(&self) -> bool {
        false
    }
}

/// `[X, Y]^k = Σ_j X^j ∂_j Y^k - Y^j ∂_j X^k`, one order lower than the inputs.
pub fn bracket(x: &[Jet; 4], y: &[Jet; 4]) -> [Jet; 4] {
    let order = x[0].order().min(y[0].order()) - 1;
    let mut out = [Jet::constant(0.0, order); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        for j in 0..4 {
            *slot += x[j] * y[k].deriv(j);
            *slot -= y[j] * x[k].deriv(j);
        }
    }
    out
}

/// Bracket of two fields at a point.
pub fn lie_bracket(x: &dyn VectorField, y: &dyn VectorField, p: V4) -> V4 {
    let q = Jet::point(p, 1);
    jet::values(&bracket(&x.eval(&q), &y.eval(&q)))
}

/// Distance between the jet bracket and a central-difference bracket with
/// step `h`.
pub fn fd_crosscheck(x: &dyn VectorField, y: &dyn VectorField, p: V4, h: f64) -> f64 {
    let exact = lie_bracket(x, y, p);
    let (xp, yp) = (x.value(p), y.value(p));
    // directional derivative of `f` along `v` at `p`
    let along = |f: &dyn VectorField, v: V4| -> V4 {
        let plus = f.value([0, 1, 2, 3].map(|i| p[i] + h * v[i]));
        let minus = f.value([0, 1, 2, 3].map(|i| p[i] - h * v[i]));
        [0, 1, 2, 3].map(|i| (plus[i] - minus[i]) / (2.0 * h))
    };
    let (dy, dx) = (along(y, xp), along(x, yp));
    (0..4)
        .map(|i| (exact[i] - (dy[i] - dx[i])).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Which second bracket enters the four-volume.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondBracket {
    /// The larger candidate volume, both second brackets sharing the scale of the longer one.
    #[default]
    Max,
    /// `[X1, [X1, X2]]`.
    First,
    /// `[X2, [X1, X2]]`.
    Second,
}

/// Normalized margins at one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

fn norm4(v: &V4) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Volume of the parallelotope spanned by the columns divided by the product
/// of their lengths.
fn normalized_volume(cols: &[V4]) -> f64 {
    let norms: Vec<f64> = cols.iter().map(norm4).collect();
    if norms.iter().any(|n| *n == 0.0) {
        return 0.0;
    }
    match cols.len() {
        4 => {
            let m = Matrix4::from_fn(|i, j| cols[j][i] / norms[j]);
            m.determinant().abs()
        }
        3 => {
            let m = Matrix4x3::from_fn(|i, j| cols[j][i] / norms[j]);
            m.qr().r().diagonal().iter().map(|d| d.abs()).product()
        }
        _ => {
            let (a, b) = (&cols[0], &cols[1]);
            let (aa, bb) = (norms[0] * norms[0], norms[1] * norms[1]);
            let ab: f64 = (0..4).map(|i| a[i] * b[i]).sum();
            ((aa * bb - ab * ab).max(0.0)).sqrt() / (norms[0] * norms[1])
        }
    }
}

/// Margins of a frame given as order-2 jets.
pub fn frame_margins(frame: &Frame, policy: SecondBracket) -> Margins {
    let [x1, x2] = frame;
    let z = bracket(x1, x2);
    let (v1, v2, vz) = (jet::values(x1), jet::values(x2), jet::values(&z));
    let m2 = normalized_volume(&[v1, v2]);
    let m3 = normalized_volume(&[v1, v2, vz]);
    let w1 = jet::values(&bracket(x1, &z));
    let w2 = jet::values(&bracket(x2, &z));
    let m4 = match policy {
        SecondBracket::First => normalized_volume(&[v1, v2, vz, w1]),
        SecondBracket::Second => normalized_volume(&[v1, v2, vz, w2]),
        SecondBracket::Max => {
            // one common scale, so a vanishing bracket cannot be inflated to unit length
            let s = norm4(&w1).max(norm4(&w2));
            if s == 0.0 {
                0.0
            } else {
                let a = normalized_volume(&[v1, v2, vz, w1]) * norm4(&w1) / s;
                let b = normalized_volume(&[v1, v2, vz, w2]) * norm4(&w2) / s;
                a.max(b)
            }
        }
    };
    Margins { m2, m3, m4 }
}

/// Smallest value of a margin and where it was attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Argmin {
    pub sample: usize,
    pub point: V4,
    pub value: f64,
}

/// Margins over a sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngelCertificate {
    pub grid: SampleGrid,
    pub policy: SecondBracket,
    pub min_m2: Argmin,
    pub min_m3: Argmin,
    pub min_m4: Argmin,
    pub non_integrable: bool,
    pub engel: bool,
    /// Largest difference quotient of `m4` between grid neighbours.
    pub lipschitz_estimate: f64,
    #[serde(skip)]
    pub samples: Vec<Margins>,
}

/// Evaluate the margins on every sample of `grid`.
pub fn engel_margins(
    field: &dyn PlaneFieldModel,
    grid: &SampleGrid,
    policy: SecondBracket,
) -> Result<EngelCertificate> {
    let samples: Vec<Margins> = if field.is_base_independent() {
        // one fiber is enough; broadcast it over the base
        let fiber: Vec<Margins> = (0..grid.fiber)
            .into_par_iter()
            .map(|j| Ok(frame_margins(&field.frame(grid.point(j), 2)?, policy)))
            .collect::<Result<_>>()?;
        (0..grid.len()).map(|s| fiber[s % grid.fiber]).collect()
    } else {
        (0..grid.len())
            .into_par_iter()
            .map(|s| Ok(frame_margins(&field.frame(grid.point(s), 2)?, policy)))
            .collect::<Result<_>>()?
    };
    certificate(grid, policy, samples)
}

fn certificate(grid: &SampleGrid, policy: SecondBracket, samples: Vec<Margins>) -> Result<EngelCertificate> {
    let argmin = |f: &dyn Fn(&Margins) -> f64| {
        let mut best = Argmin {
            sample: 0,
            point: grid.point(0),
            value: f64::INFINITY,
        };
        for (s, m) in samples.iter().enumerate() {
            if f(m) < best.value {
                best = Argmin {
                    sample: s,
                    point: grid.point(s),
                    value: f(m),
                };
            }
        }
        best
    };
    let min_m2 = argmin(&|m| m.m2);
    if min_m2.value <= DEGENERATE_M2 {
        return Err(ForgeError::DegenerateFrame {
            sample: min_m2.sample,
            m2: min_m2.value,
        });
    }
    let min_m3 = argmin(&|m| m.m3);
    let min_m4 = argmin(&|m| m.m4);
    let mut lipschitz: f64 = 0.0;
    for s in 0..samples.len() {
        let p = grid.point(s);
        for n in grid.forward_neighbours(s) {
            let q = grid.point(n);
            let mut d: f64 = (0..3).map(|i| (p[i] - q[i]).powi(2)).sum();
            let dt = (p[3] - q[3]).abs();
            d += dt.min(1.0 - dt).powi(2);
            if d > 0.0 {
                lipschitz = lipschitz.max((samples[s].m4 - samples[n].m4).abs() / d.sqrt());
            }
        }
    }
    let non_integrable = min_m3.value > CERTIFY_FLOOR;
    Ok(EngelCertificate {
        grid: *grid,
        policy,
        engel: non_integrable && min_m4.value > CERTIFY_FLOOR,
        non_integrable,
        min_m2,
        min_m3,
        min_m4,
        lipschitz_estimate: lipschitz,
        samples,
    })
}

impl EngelCertificate {
    /// Per-sample margins as CSV: `sample,x1,x2,x3,t,m2,m3,m4`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,x1,x2,x3,t,m2,m3,m4\n");
        for (s, m) in self.samples.iter().enumerate() {
            let p = self.grid.point(s);
            out.push_str(&format!(
                "{s},{},{},{},{},{},{},{}\n",
                fmt17(p[0]),
                fmt17(p[1]),
                fmt17(p[2]),
                fmt17(p[3]),
                fmt17(m.m2),
                fmt17(m.m3),
                fmt17(m.m4)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero(x: &[Jet; 4]) -> Jet {
        Jet::constant(0.0, x[0].order())
    }

    fn dt(x: &[Jet; 4]) -> [Jet; 4] {
        let (o, z) = (Jet::constant(1.0, x[0].order()), zero(x));
        [z, z, z, o]
    }

    fn dx1(x: &[Jet; 4]) -> [Jet; 4] {
        let (o, z) = (Jet::constant(1.0, x[0].order()), zero(x));
        [o, z, z, z]
    }

    fn poly(x: &[Jet; 4]) -> [Jet; 4] {
        let t = x[3];
        let one = Jet::constant(1.0, t.order());
        [one, t, t * t * 0.5, zero(x)]
    }

    /// A field with genuine dependence on every coordinate.
    fn wavy(x: &[Jet; 4]) -> [Jet; 4] {
        [
            (x[3] * 2.0 + x[1]).sin(),
            (x[0] * x[2]).cos(),
            (x[3] - x[0] * 0.5).exp() * 0.3,
            x[1] * x[2] + 1.0,
        ]
    }

    #[test]
    fn constant_fields_commute() {
        let b = lie_bracket(&dt, &dx1, [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(b, [0.0; 4]);
        assert_eq!(fd_crosscheck(&dt, &dx1, [0.1, 0.2, 0.3, 0.4], 0.1), 0.0);
    }

    #[test]
    fn polynomial_bracket_by_hand() {
        for t in [-0.5, 0.0, 0.7, 2.0] {
            let b = lie_bracket(&dt, &poly, [0.3, -0.1, 0.9, t]);
            let want = [0.0, 1.0, t, 0.0];
            for i in 0..4 {
                assert!((b[i] - want[i]).abs() < 1e-14);
            }
            assert!(fd_crosscheck(&dt, &poly, [0.3, -0.1, 0.9, t], 1e-3) <= 1e-6);
        }
    }

    #[test]
    fn bracket_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p: V4 = [0, 1, 2, 3].map(|_| rng.gen_range(-1.0..1.0));
            let a = lie_bracket(&wavy, &poly, p);
            let b = lie_bracket(&poly, &wavy, p);
            for i in 0..4 {
                assert!((a[i] + b[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn central_differences_converge_quadratically() {
        let p = [0.2, -0.4, 0.6, 0.1];
        let e: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&h| fd_crosscheck(&wavy, &poly, p, h)).collect();
        for w in e.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn leibniz_rule() {
        let f = |x: &[Jet; 4]| (x[0] * x[3]).sin() + x[2];
        let fy = |x: &[Jet; 4]| {
            let v = poly(x);
            let s = f(x);
            v.map(|c| c * s)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p: V4 = [0, 1, 2, 3].map(|_| rng.gen_range(-1.0..1.0));
            let lhs = lie_bracket(&wavy, &fy, p);
            let q = Jet::point(p, 1);
            let fq = f(&q);
            let xf: f64 = (0..4).map(|j| wavy(&q)[j].value() * fq.grad(j)).sum();
            let xy = lie_bracket(&wavy, &poly, p);
            let y = jet::values(&poly(&q));
            for i in 0..4 {
                let rhs = fq.value() * xy[i] + xf * y[i];
                assert!((lhs[i] - rhs).abs() <= 1e-10);
            }
        }
    }

    struct Coordinate;

    impl PlaneFieldModel for Coordinate {
        fn frame(&self, p: V4, order: u8) -> Result<Frame> {
            let x = Jet::point(p, order);
            Ok([dt(&x), dx1(&x)])
        }
    }

    #[test]
    fn coordinate_plane_field_is_integrable() {
        let grid = SampleGrid::new(crate::family::BaseChart::unit_box(), [3, 3, 3], 8);
        let c = engel_margins(&Coordinate, &grid, SecondBracket::Max).unwrap();
        assert!(c.samples.iter().all(|m| m.m3 == 0.0 && (m.m2 - 1.0).abs() < 1e-15));
        assert!(!c.non_integrable && !c.engel);
    }

    struct Parallel;

    impl PlaneFieldModel for Parallel {
        fn frame(&self, p: V4, order: u8) -> Result<Frame> {
            let x = Jet::point(p, order);
            Ok([dt(&x), dt(&x)])
        }
    }

    #[test]
    fn collapsed_frame_is_rejected() {
        let grid = SampleGrid::new(crate::family::BaseChart::unit_box(), [2, 2, 2], 4);
        let err = engel_margins(&Parallel, &grid, SecondBracket::Max).unwrap_err();
        assert!(matches!(err, ForgeError::DegenerateFrame { sample: 0, .. }));
    }

    #[test]
    fn volumes_are_normalized() {
        let v = normalized_volume(&[[2.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]]);
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let e = |i: usize| {
            let mut v = [0.0; 4];
            v[i] = 3.0;
            v
        };
        assert!((normalized_volume(&[e(0), e(1), e(2)]) - 1.0).abs() < 1e-15);
        assert!((normalized_volume(&[e(0), e(1), e(2), e(3)]) - 1.0).abs() < 1e-15);
    }
}
