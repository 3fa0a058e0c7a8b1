//! Embeddings of chart × circle into C³, complex tangencies and the zoom
//! sweep.
//!
//! Points of C³ are stored as `(u1, u2, u3, v1, v2, v3)` with `z_k = u_k + i v_k`,
//! so the standard structure is `J(u, v) = (-v, u)`.

use std::sync::Arc;

use nalgebra::{DMatrix, SMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engel::{engel_margins, EngelCertificate, Frame, PlaneFieldModel, SecondBracket, V4};
use crate::error::{ForgeError, Result};
use crate::family::{self, BaseChart, FiberModel, Frozen, SampleGrid, Zoomed};
use crate::jet::{self, Jet};
use crate::prolong::ProlongedField;
use crate::vec3::V3;

pub type V6 = [f64; 6];
type M6 = SMatrix<f64, 6, 6>;

const RANK_TOL: f64 = 1e-8;
const IMMERSION_RATIO: f64 = 1e-10;
const MIN_DET_A: f64 = 0.5;

/// The ambient model a chart is embedded into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `R³_x ⊕ i R³_y`, fibers dilated into the imaginary directions.
    Flat,
    /// Tubular neighbourhood of the Clifford torus; base coordinates are angles.
    Clifford,
}

/// `((1-y_k) e^{iθ_k})_k` as a point of R⁶.
pub fn clifford_tubular(theta: V3, y: V3) -> Result<V6> {
    if y.iter().any(|v| v.abs() >= 1.0) {
        return Err(ForgeError::OutOfTube { y });
    }
    let mut out = [0.0; 6];
    for k in 0..3 {
        out[k] = (1.0 - y[k]) * theta[k].cos();
        out[3 + k] = (1.0 - y[k]) * theta[k].sin();
    }
    Ok(out)
}

fn clifford_jets(theta: &[Jet; 3], y: &[Jet; 3]) -> Result<[Jet; 6]> {
    let yv = family::value3(y);
    if yv.iter().any(|v| v.abs() >= 1.0) {
        return Err(ForgeError::OutOfTube { y: yv });
    }
    let mut out = [Jet::constant(0.0, theta[0].order()); 6];
    for k in 0..3 {
        let r = y[k] * -1.0 + 1.0;
        out[k] = r * theta[k].cos();
        out[3 + k] = r * theta[k].sin();
    }
    Ok(out)
}

/// A map from chart × circle to R⁶ with jets, plus the ambient point where
/// the almost complex structure is read.
pub trait Embedding: Send + Sync {
    /// `(g, world)`: the map in domain coordinates and the ambient point.
    fn jet(&self, q: V4, order: u8) -> Result<([Jet; 6], [Jet; 6])>;

    fn model(&self) -> Model;

    /// The fiber family as seen in the domain coordinates, when there is one.
    fn domain_family(&self) -> Option<Arc<dyn FiberModel>> {
        None
    }
}

/// `G(x, t) = (x, λν(x, t))` in the flat model or `Φ(x, λν(x, t))` in the
/// Clifford model. With a `center` the chart is zoomed: `x = center + λa`
/// and the image is rescaled by `1/λ` about the image of the center, so the
/// domain coordinates are `(a, t)`.
#[derive(Clone)]
pub struct ChartEmbedding {
    pub model: Model,
    pub fiber: Arc<dyn FiberModel>,
    pub lambda: f64,
    pub center: Option<V3>,
}

impl ChartEmbedding {
    pub fn new(model: Model, fiber: Arc<dyn FiberModel>, lambda: f64, center: Option<V3>) -> Result<ChartEmbedding> {
        let ok = if center.is_some() { lambda >= 0.0 } else { lambda > 0.0 };
        if !ok || !lambda.is_finite() {
            return Err(ForgeError::Invalid(format!("dilation {lambda} out of range")));
        }
        Ok(ChartEmbedding {
            model,
            fiber,
            lambda,
            center,
        })
    }
}

impl Embedding for ChartEmbedding {
    fn jet(&self, q: V4, order: u8) -> Result<([Jet; 6], [Jet; 6])> {
        let d = Jet::point(q, order);
        let lam = self.lambda;
        let base: [Jet; 3] = match self.center {
            None => [d[0], d[1], d[2]],
            Some(p) => [0, 1, 2].map(|i| d[i] * lam + p[i]),
        };
        let nu = self.fiber.fiber_jet(&base, q[3], false);
        let y = nu.map(|c| c * lam);
        match (self.model, self.center) {
            (Model::Flat, None) => {
                let g = [base[0], base[1], base[2], y[0], y[1], y[2]];
                Ok((g, g))
            }
            (Model::Flat, Some(_)) => {
                let g = [d[0], d[1], d[2], nu[0], nu[1], nu[2]];
                Ok((g, [base[0], base[1], base[2], y[0], y[1], y[2]]))
            }
            (Model::Clifford, None) => {
                let w = clifford_jets(&base, &y)?;
                Ok((w, w))
            }
            (Model::Clifford, Some(p)) => {
                let world = clifford_jets(&base, &y)?;
                if lam == 0.0 {
                    // z_k = (-ν_k + i a_k) e^{i p_k}
                    let mut g = [Jet::constant(0.0, order); 6];
                    for k in 0..3 {
                        let (s, c) = p[k].sin_cos();
                        g[k] = nu[k] * -c - d[k] * s;
                        g[3 + k] = nu[k] * -s + d[k] * c;
                    }
                    return Ok((g, world));
                }
                let origin = clifford_tubular(p, [0.0; 3])?;
                let g = [0, 1, 2, 3, 4, 5].map(|i| (world[i] - origin[i]) * (1.0 / lam));
                Ok((g, world))
            }
        }
    }

    fn model(&self) -> Model {
        self.model
    }

    fn domain_family(&self) -> Option<Arc<dyn FiberModel>> {
        Some(match self.center {
            None => self.fiber.clone(),
            Some(p) => Arc::new(Zoomed {
                inner: self.fiber.clone(),
                center: p,
                lambda: self.lambda,
            }),
        })
    }
}

/// How the almost complex structure is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcsSpec {
    Standard,
    /// `A J_std A⁻¹` with `A = Id + amplitude·tanh(w·y)·E`, `E` a random
    /// skew matrix of unit norm and `w` a random direction scaled by `width`.
    Conjugated { amplitude: f64, width: f64, seed: u64 },
}

/// An almost complex structure on the flat model or the Clifford tube.
#[derive(Clone, Debug)]
pub struct AcsField {
    pub spec: AcsSpec,
    e: M6,
    w: V3,
}

impl AcsField {
    pub fn standard() -> AcsField {
        AcsField {
            spec: AcsSpec::Standard,
            e: M6::zeros(),
            w: [0.0; 3],
        }
    }

    pub fn new(spec: AcsSpec) -> Result<AcsField> {
        match spec {
            AcsSpec::Standard => Ok(AcsField::standard()),
            AcsSpec::Conjugated { amplitude, width, seed } => {
                if !(0.0..0.5).contains(&amplitude) || !width.is_finite() {
                    return Err(ForgeError::Invalid(format!(
                        "conjugation amplitude {amplitude} must lie in [0, 0.5)"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let r = M6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                let skew = r - r.transpose();
                let e = skew / skew.singular_values().max();
                let v: V3 = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
                let w = crate::vec3::scale(width, crate::vec3::normalize(v));
                Ok(AcsField { spec, e, w })
            }
        }
    }

    fn amplitude(&self) -> f64 {
        match self.spec {
            AcsSpec::Standard => 0.0,
            AcsSpec::Conjugated { amplitude, .. } => amplitude,
        }
    }

    fn check_model(&self, model: Model) -> Result<()> {
        if model == Model::Clifford && self.amplitude() != 0.0 {
            return Err(ForgeError::ModelMismatch(
                "conjugated structures are defined on the flat model only".into(),
            ));
        }
        Ok(())
    }

    fn bump(&self, world: &[Jet; 6]) -> Jet {
        let y = [world[3], world[4], world[5]];
        let s = y[0] * self.w[0] + y[1] * self.w[1] + y[2] * self.w[2];
        s.tanh() * self.amplitude()
    }

    /// Matrix of `J` at a point.
    pub fn matrix(&self, world: V6) -> Result<M6> {
        let j0 = standard_matrix();
        if self.amplitude() == 0.0 {
            return Ok(j0);
        }
        let pt = world.map(|v| Jet::constant(v, 0));
        let beta = self.bump(&pt).value();
        let a = M6::identity() + self.e * beta;
        let det = a.determinant();
        if det < MIN_DET_A {
            return Err(ForgeError::NearSingularA { det });
        }
        let inv = a.try_inverse().ok_or(ForgeError::NearSingularA { det })?;
        Ok(a * j0 * inv)
    }

    /// `J(world)·B` for a 6×4 jet matrix given by columns.
    fn apply(&self, world: &[Jet; 6], cols: &[[Jet; 6]; 4]) -> Result<[[Jet; 6]; 4]> {
        if self.amplitude() == 0.0 {
            return Ok(cols.map(|c| j_std(&c)));
        }
        let order = cols[0][0].order();
        let beta = self.bump(world);
        let a0 = M6::identity() + self.e * beta.value();
        let det = a0.determinant();
        if det < MIN_DET_A {
            return Err(ForgeError::NearSingularA { det });
        }
        let a0inv = a0.try_inverse().ok_or(ForgeError::NearSingularA { det })?;
        // A = I + βE; solve A y = c by y ← y + A0⁻¹(c - A y), exact in `order + 1` steps
        let a_mul = |y: &[Jet; 6]| -> [Jet; 6] {
            let ey = mat_vec_const(&self.e, y);
            [0, 1, 2, 3, 4, 5].map(|i| y[i] + beta * ey[i])
        };
        let mut out = cols.map(|_| [Jet::constant(0.0, order); 6]);
        for (c, slot) in cols.iter().zip(out.iter_mut()) {
            let mut y = mat_vec_const(&a0inv, c);
            for _ in 0..=order {
                let ay = a_mul(&y);
                let r: [Jet; 6] = [0, 1, 2, 3, 4, 5].map(|i| c[i] - ay[i]);
                let dy = mat_vec_const(&a0inv, &r);
                y = [0, 1, 2, 3, 4, 5].map(|i| y[i] + dy[i]);
            }
            *slot = a_mul(&j_std(&y));
        }
        Ok(out)
    }
}

fn standard_matrix() -> M6 {
    let mut j = M6::zeros();
    for k in 0..3 {
        j[(3 + k, k)] = 1.0;
        j[(k, 3 + k)] = -1.0;
    }
    j
}

fn j_std(v: &[Jet; 6]) -> [Jet; 6] {
    [-v[3], -v[4], -v[5], v[0], v[1], v[2]]
}

fn mat_vec_const(m: &M6, v: &[Jet; 6]) -> [Jet; 6] {
    [0, 1, 2, 3, 4, 5].map(|i| {
        let mut s = Jet::constant(0.0, v[0].order());
        for j in 0..6 {
            if m[(i, j)] != 0.0 {
                s.axpy(m[(i, j)], &v[j]);
            }
        }
        s
    })
}

/// Tangent columns `∂_j g` as jets one order lower.
fn tangent_jets(g: &[Jet; 6]) -> [[Jet; 6]; 4] {
    [0, 1, 2, 3].map(|j| g.map(|c| c.deriv(j)))
}

/// Complex tangency at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tangency {
    /// Real dimension of `T ∩ J T`.
    pub dim: usize,
    /// Orthonormal basis in domain coordinates when `dim = 2`.
    pub basis: Option<[V4; 2]>,
    /// Smallest singular value kept by the rank decision (relative).
    pub kept: f64,
    /// Largest singular value discarded by the rank decision (relative).
    pub dropped: f64,
}

struct NullSpace {
    tangency: Tangency,
    /// Orthonormal null vectors of `[J B | -B]` in R⁸.
    null: Vec<[f64; 8]>,
}

fn null_space(jb: &[[f64; 6]; 4], b: &[[f64; 6]; 4]) -> Result<NullSpace> {
    let bm = DMatrix::from_fn(6, 4, |i, j| b[j][i]);
    let sb = bm.singular_values();
    let (bmax, bmin) = (sb.max(), sb.min());
    if !(bmin > IMMERSION_RATIO * bmax) {
        return Err(ForgeError::RankDeficient { ratio: bmin / bmax });
    }
    // pad the 6×8 system to a square matrix so the full right basis is returned
    let m = DMatrix::from_fn(8, 8, |i, j| {
        if i >= 6 {
            0.0
        } else if j < 4 {
            jb[j][i]
        } else {
            -b[j - 4][i]
        }
    });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let smax = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > RANK_TOL * smax)
        .count();
    let kept = if rank > 0 { svd.singular_values[order[rank - 1]] / smax } else { 0.0 };
    let dropped = if rank < 8 { svd.singular_values[order[rank]] / smax } else { 0.0 };
    let null: Vec<[f64; 8]> = order[rank..]
        .iter()
        .map(|&i| std::array::from_fn(|j| vt[(i, j)]))
        .collect();
    let dim = null.len();
    let basis = if dim == 2 {
        let a: Vec<V4> = null.iter().map(|n| [n[0], n[1], n[2], n[3]]).collect();
        Some(orthonormalize(a[0], a[1]))
    } else {
        None
    };
    Ok(NullSpace {
        tangency: Tangency {
            dim,
            basis,
            kept,
            dropped,
        },
        null,
    })
}

fn dot4(a: &V4, b: &V4) -> f64 {
    (0..4).map(|i| a[i] * b[i]).sum()
}

fn orthonormalize(a: V4, b: V4) -> [V4; 2] {
    let na = dot4(&a, &a).sqrt();
    let e1 = a.map(|x| x / na);
    let p = dot4(&e1, &b);
    let r: V4 = [0, 1, 2, 3].map(|i| b[i] - p * e1[i]);
    let nr = dot4(&r, &r).sqrt();
    [e1, r.map(|x| x / nr)]
}

/// Largest principal angle between two planes given by orthonormal bases,
/// computed from the sine for accuracy at small angles.
pub fn principal_angle(p: &[V4; 2], q: &[V4; 2]) -> f64 {
    let r = DMatrix::from_fn(4, 2, |i, j| {
        let v = &p[j];
        v[i] - q[0][i] * dot4(&q[0], v) - q[1][i] * dot4(&q[1], v)
    });
    r.singular_values().max().min(1.0).asin()
}

fn frame_values(f: &Frame) -> [V4; 2] {
    [jet::values(&f[0]), jet::values(&f[1])]
}

/// `T ∩ J T` at `q`, pulled back to the domain.
pub fn complex_tangency(g: &dyn Embedding, acs: &AcsField, q: V4) -> Result<Tangency> {
    acs.check_model(g.model())?;
    let (gj, world) = g.jet(q, 1)?;
    let cols = tangent_jets(&gj);
    let jb = acs.apply(&world, &cols)?;
    let b = cols.map(|c| jet::values(&c));
    let jb = jb.map(|c| jet::values(&c));
    Ok(null_space(&jb, &b)?.tangency)
}

/// Co-reality over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub grid: SampleGrid,
    pub co_real: bool,
    /// Dimension at every sample.
    pub dims: Vec<usize>,
    /// Smallest kept singular value over the grid (relative).
    pub min_gap: f64,
    /// Largest discarded singular value over the grid (relative).
    pub max_dropped: f64,
}

pub fn coreal_scan(g: &dyn Embedding, acs: &AcsField, grid: &SampleGrid) -> Result<TangencyReport> {
    let found: Vec<Tangency> = (0..grid.len())
        .into_par_iter()
        .map(|s| complex_tangency(g, acs, grid.point(s)).map_err(|e| e.at_node(s)))
        .collect::<Result<_>>()?;
    Ok(TangencyReport {
        grid: *grid,
        co_real: found.iter().all(|t| t.dim == 2),
        dims: found.iter().map(|t| t.dim).collect(),
        min_gap: found.iter().map(|t| t.kept).fold(f64::INFINITY, f64::min),
        max_dropped: found.iter().map(|t| t.dropped).fold(0.0, f64::max),
    })
}

/// Agreement of the complex tangency with the derived prolongation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub max_angle: f64,
    pub argmax: usize,
    /// Whether the family met the base-independence hypothesis; when it did
    /// not, the angle is informative only.
    pub base_independent: bool,
}

pub fn lemma_check(g: &dyn Embedding, acs: &AcsField, grid: &SampleGrid) -> Result<LemmaReport> {
    if g.model() != Model::Flat {
        return Err(ForgeError::ModelMismatch("the comparison needs the flat model".into()));
    }
    if acs.spec != AcsSpec::Standard {
        return Err(ForgeError::ModelMismatch("the comparison needs the standard structure".into()));
    }
    let fam = g
        .domain_family()
        .ok_or_else(|| ForgeError::ModelMismatch("embedding carries no fiber family".into()))?;
    let reference = ProlongedField::derived(fam.clone());
    let angles: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let q = grid.point(s);
            let t = complex_tangency(g, acs, q).map_err(|e| e.at_node(s))?;
            let basis = t.basis.ok_or(ForgeError::NotCoReal { sample: s, dim: t.dim })?;
            let r = frame_values(&reference.frame(q, 0)?);
            Ok(principal_angle(&basis, &orthonormalize(r[0], r[1])))
        })
        .collect::<Result<_>>()?;
    let (argmax, max_angle) = angles
        .iter()
        .enumerate()
        .fold((0, 0.0), |(i, m), (j, &a)| if a > m { (j, a) } else { (i, m) });
    Ok(LemmaReport {
        max_angle,
        argmax,
        base_independent: fam.is_base_independent(),
    })
}

/// The complex tangency as a plane field, framed by projecting a reference
/// frame onto it. Jets come from differentiating the null space exactly.
#[derive(Clone)]
pub struct TangencyField {
    pub embedding: Arc<dyn Embedding>,
    pub acs: AcsField,
    pub reference: Arc<dyn PlaneFieldModel>,
}

fn solve_nilpotent(k: &[[Jet; 8]; 8], rhs: &[[Jet; 8]; 2], order: u8) -> Result<[[Jet; 8]; 2]> {
    let k0 = SMatrix::<f64, 8, 8>::from_fn(|i, j| k[i][j].value());
    let inv = k0
        .try_inverse()
        .ok_or_else(|| ForgeError::Invalid("tangency system is singular".into()))?;
    let apply_inv = |r: &[Jet; 8]| -> [Jet; 8] {
        std::array::from_fn(|i| {
            let mut s = Jet::constant(0.0, order);
            for j in 0..8 {
                s.axpy(inv[(i, j)], &r[j]);
            }
            s
        })
    };
    let mut n = rhs.map(|r| apply_inv(&r));
    for _ in 0..=order {
        for c in 0..2 {
            let resid: [Jet; 8] = std::array::from_fn(|i| {
                let mut s = rhs[c][i];
                for j in 0..8 {
                    s -= k[i][j] * n[c][j];
                }
                s
            });
            let dn = apply_inv(&resid);
            for i in 0..8 {
                n[c][i] += dn[i];
            }
        }
    }
    Ok(n)
}

fn dot_jets(a: &[Jet; 4], b: &[Jet; 4]) -> Jet {
    jet::dot(a, b)
}

impl PlaneFieldModel for TangencyField {
    fn frame(&self, q: V4, order: u8) -> Result<Frame> {
        let (g, world) = self.embedding.jet(q, order + 1)?;
        let cols = tangent_jets(&g);
        let jb = self.acs.apply(&world, &cols)?;
        let ns = null_space(&jb.map(|c| jet::values(&c)), &cols.map(|c| jet::values(&c)))?;
        if ns.tangency.dim != 2 {
            return Err(ForgeError::NotCoReal {
                sample: 0,
                dim: ns.tangency.dim,
            });
        }
        // rows of [J B | -B] followed by the normalisation rows N0ᵀ
        let zero = Jet::constant(0.0, order);
        let mut k = [[zero; 8]; 8];
        for i in 0..6 {
            for j in 0..4 {
                k[i][j] = jb[j][i];
                k[i][4 + j] = -cols[j][i];
            }
        }
        for (r, nv) in ns.null.iter().enumerate() {
            for j in 0..8 {
                k[6 + r][j] = Jet::constant(nv[j], order);
            }
        }
        let mut rhs = [[zero; 8]; 2];
        rhs[0][6] = Jet::constant(1.0, order);
        rhs[1][7] = Jet::constant(1.0, order);
        let n = solve_nilpotent(&k, &rhs, order)?;
        let p: [[Jet; 4]; 2] = n.map(|c| [c[0], c[1], c[2], c[3]]);
        // project the reference frame onto span(p)
        let reference = self.reference.frame(q, order)?;
        let (g00, g01, g11) = (dot_jets(&p[0], &p[0]), dot_jets(&p[0], &p[1]), dot_jets(&p[1], &p[1]));
        let inv_det = (g00 * g11 - g01 * g01).recip();
        let project = |r: &[Jet; 4]| -> [Jet; 4] {
            let (b0, b1) = (dot_jets(&p[0], r), dot_jets(&p[1], r));
            let c0 = (g11 * b0 - g01 * b1) * inv_det;
            let c1 = (g00 * b1 - g01 * b0) * inv_det;
            [0, 1, 2, 3].map(|i| p[0][i] * c0 + p[1][i] * c1)
        };
        let (u, v) = (project(&reference[0]), project(&reference[1]));
        let e1 = {
            let inv = dot_jets(&u, &u).sqrt().recip();
            u.map(|c| c * inv)
        };
        let w = {
            let s = dot_jets(&e1, &v);
            [0, 1, 2, 3].map(|i| v[i] - e1[i] * s)
        };
        let e2 = {
            let inv = dot_jets(&w, &w).sqrt().recip();
            w.map(|c| c * inv)
        };
        Ok([e1, e2])
    }
}

/// Build the framed tangency field after checking co-reality and alignment
/// with the reference on the grid.
pub fn tangency_frame_field(
    embedding: Arc<dyn Embedding>,
    acs: &AcsField,
    grid: &SampleGrid,
    reference: Arc<dyn PlaneFieldModel>,
) -> Result<TangencyField> {
    acs.check_model(embedding.model())?;
    let limit = std::f64::consts::FRAC_PI_4;
    let checks: Vec<(usize, Tangency, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let q = grid.point(s);
            let t = complex_tangency(embedding.as_ref(), acs, q).map_err(|e| e.at_node(s))?;
            let Some(basis) = t.basis else {
                return Ok((s, t, f64::NAN));
            };
            let r = frame_values(&reference.frame(q, 0)?);
            Ok((s, t, principal_angle(&basis, &orthonormalize(r[0], r[1]))))
        })
        .collect::<Result<_>>()?;
    for (s, t, angle) in checks {
        if t.dim != 2 {
            return Err(ForgeError::NotCoReal { sample: s, dim: t.dim });
        }
        if !(angle < limit) {
            return Err(ForgeError::AlignmentFailure { sample: s, angle });
        }
    }
    Ok(TangencyField {
        embedding,
        acs: acs.clone(),
        reference,
    })
}

/// One dilation of a zoom sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub lambda: f64,
    pub co_real: bool,
    pub min_gap: f64,
    pub min_m2: f64,
    pub min_m3: f64,
    pub min_m4: f64,
    pub engel: bool,
    pub error: Option<String>,
}

impl SweepEntry {
    pub fn certified(&self) -> bool {
        self.error.is_none() && self.co_real && self.engel
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: Model,
    pub center: V3,
    pub grid: SampleGrid,
    /// Requested dilations, in order.
    pub entries: Vec<SweepEntry>,
    /// Extra dilations tried while narrowing down the threshold.
    pub bisection: Vec<SweepEntry>,
    /// Largest tested dilation below which every tested dilation certified.
    pub lambda_star: Option<f64>,
    /// `min m4` of the frozen family at the center.
    pub limit_m4: f64,
}

/// Zoom parameters: where to zoom, the sample grid in zoomed coordinates
/// and how the tangency is framed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoomOptions {
    pub center: V3,
    pub base: [usize; 3],
    pub fiber: usize,
    pub policy: SecondBracket,
    /// Relative width at which bisection stops.
    pub bisection_width: f64,
}

impl Default for ZoomOptions {
    fn default() -> ZoomOptions {
        ZoomOptions {
            center: [0.3, 0.2, 0.1],
            base: [8, 8, 8],
            fiber: 32,
            policy: SecondBracket::Max,
            bisection_width: 1e-2,
        }
    }
}

impl ZoomOptions {
    pub fn grid(&self) -> SampleGrid {
        SampleGrid::new(
            BaseChart::Box {
                lo: [-1.0; 3],
                hi: [1.0; 3],
            },
            self.base,
            self.fiber,
        )
    }
}

/// Engel certificate of the complex tangency of the zoomed embedding at one
/// dilation.
pub fn zoom_certificate(
    fiber: Arc<dyn FiberModel>,
    model: Model,
    acs: &AcsField,
    lambda: f64,
    opts: &ZoomOptions,
) -> Result<(TangencyReport, EngelCertificate)> {
    let grid = opts.grid();
    let emb = ChartEmbedding::new(model, fiber, lambda, Some(opts.center))?;
    let fam = emb.domain_family().expect("chart embeddings carry a family");
    let emb: Arc<dyn Embedding> = Arc::new(emb);
    let scan = coreal_scan(emb.as_ref(), acs, &grid)?;
    if !scan.co_real {
        let s = scan.dims.iter().position(|d| *d != 2).unwrap_or(0);
        return Err(ForgeError::NotCoReal {
            sample: s,
            dim: scan.dims[s],
        });
    }
    let reference: Arc<dyn PlaneFieldModel> = Arc::new(ProlongedField::derived(fam));
    let field = tangency_frame_field(emb, acs, &grid, reference)?;
    let cert = engel_margins(&field, &grid, opts.policy)?;
    Ok((scan, cert))
}

fn sweep_entry(fiber: &Arc<dyn FiberModel>, model: Model, acs: &AcsField, lambda: f64, opts: &ZoomOptions) -> SweepEntry {
    match zoom_certificate(fiber.clone(), model, acs, lambda, opts) {
        Ok((scan, cert)) => SweepEntry {
            lambda,
            co_real: scan.co_real,
            min_gap: scan.min_gap,
            min_m2: cert.min_m2.value,
            min_m3: cert.min_m3.value,
            min_m4: cert.min_m4.value,
            engel: cert.engel,
            error: None,
        },
        Err(e) => SweepEntry {
            lambda,
            co_real: false,
            min_gap: f64::NAN,
            min_m2: f64::NAN,
            min_m3: f64::NAN,
            min_m4: f64::NAN,
            engel: false,
            error: Some(e.to_string()),
        },
    }
}

/// Certify the complex tangency for each dilation (sorted descending), then
/// bisect between the smallest failing and the next certified dilation.
pub fn zoom_sweep(
    fiber: Arc<dyn FiberModel>,
    model: Model,
    acs: &AcsField,
    lambdas: &[f64],
    opts: &ZoomOptions,
) -> Result<SweepReport> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ForgeError::Invalid("dilations must be positive and strictly decreasing".into()));
    }
    acs.check_model(model)?;
    let frozen: Arc<dyn FiberModel> = Arc::new(Frozen(fiber.curve_at(opts.center)));
    let limit = engel_margins(&ProlongedField::derived(frozen), &opts.grid(), opts.policy)?;
    let entries: Vec<SweepEntry> = lambdas
        .iter()
        .map(|&l| sweep_entry(&fiber, model, acs, l, opts))
        .collect();
    // the certified tail: every entry from the first of the trailing run
    let tail = entries.iter().rev().take_while(|e| e.certified()).count();
    let mut lambda_star = (tail > 0).then(|| entries[entries.len() - tail].lambda);
    let mut bisection = Vec::new();
    if tail > 0 && tail < entries.len() {
        let (mut bad, mut good) = (entries[entries.len() - tail - 1].lambda, entries[entries.len() - tail].lambda);
        while (bad - good) / good > opts.bisection_width {
            let mid = (bad * good).sqrt();
            let e = sweep_entry(&fiber, model, acs, mid, opts);
            if e.certified() {
                good = mid;
            } else {
                bad = mid;
            }
            bisection.push(e);
        }
        lambda_star = Some(good);
    }
    Ok(SweepReport {
        model,
        center: opts.center,
        grid: opts.grid(),
        entries,
        bisection,
        lambda_star,
        limit_m4: limit.min_m4.value,
    })
}

/// Largest difference of all partial derivatives up to order two between
/// two embeddings on a grid.
pub fn c2_distance(a: &dyn Embedding, b: &dyn Embedding, grid: &SampleGrid) -> Result<f64> {
    let per: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let q = grid.point(s);
            let (ga, _) = a.jet(q, 2)?;
            let (gb, _) = b.jet(q, 2)?;
            let d = (0..6)
                .map(|i| {
                    let (x, y) = (ga[i].coeffs(), gb[i].coeffs());
                    (0..15).map(|k| (x[k] - y[k]).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            Ok(d)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

/// `sup ‖J(λa, λb) - J_std‖` over world points `(a, b)` of the unit box.
pub fn acs_deviation(acs: &AcsField, lambda: f64, points: &[V6]) -> Result<f64> {
    let j0 = standard_matrix();
    let mut worst: f64 = 0.0;
    for p in points {
        let m = acs.matrix(p.map(|v| v * lambda))?;
        worst = worst.max((m - j0).abs().max());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::PeriodicCurve;
    use crate::family::RotationFamily;

    fn tube_curve() -> PeriodicCurve {
        PeriodicCurve::twisted_rosette().scaled(0.5)
    }

    fn frozen() -> Arc<dyn FiberModel> {
        Arc::new(Frozen(tube_curve()))
    }

    fn rotation(amplitude: f64) -> Arc<dyn FiberModel> {
        Arc::new(RotationFamily {
            curve: tube_curve(),
            amplitude,
        })
    }

    fn small_grid() -> SampleGrid {
        SampleGrid::new(BaseChart::Box { lo: [-1.0; 3], hi: [1.0; 3] }, [2, 2, 2], 16)
    }

    #[test]
    fn tube_zero_section_and_offsets() {
        let p = clifford_tubular([0.3, 1.0, -2.0], [0.0; 3]).unwrap();
        for k in 0..3 {
            assert!((p[k].hypot(p[3 + k]) - 1.0).abs() < 1e-15);
        }
        let q = clifford_tubular([0.0; 3], [0.1, 0.0, 0.0]).unwrap();
        assert_eq!(q, [0.9, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            clifford_tubular([0.0; 3], [0.0, 1.0, 0.0]),
            Err(ForgeError::OutOfTube { .. })
        ));
    }

    #[test]
    fn tube_is_splitting_adapted() {
        // ∂_y Φ = J_std ∂_θ Φ on the zero section
        let theta = [0.4, -1.3, 2.2];
        let pt = Jet::point([theta[0], theta[1], theta[2], 0.0], 1);
        let y = [pt[3], Jet::constant(0.0, 1), Jet::constant(0.0, 1)];
        for k in 0..3 {
            let mut th = [Jet::constant(theta[0], 1), Jet::constant(theta[1], 1), Jet::constant(theta[2], 1)];
            th[k] = pt[k];
            let mut yy = [Jet::constant(0.0, 1); 3];
            yy[k] = pt[3];
            let phi = clifford_jets(&th, &yy).unwrap();
            let dtheta = phi.map(|c| c.grad(k));
            let dy = phi.map(|c| c.grad(3));
            let jd = [-dtheta[3], -dtheta[4], -dtheta[5], dtheta[0], dtheta[1], dtheta[2]];
            for i in 0..6 {
                assert!((dy[i] - jd[i]).abs() < 1e-12);
            }
        }
        let _ = y;
    }

    #[test]
    fn conjugated_structure_squares_to_minus_one() {
        let acs = AcsField::new(AcsSpec::Conjugated {
            amplitude: 0.2,
            width: 1.0,
            seed: 9,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p: V6 = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let j = acs.matrix(p).unwrap();
            assert!((j * j + M6::identity()).abs().max() <= 1e-12);
        }
        // standard on the zero section
        let j = acs.matrix([0.3, -0.2, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!((j - standard_matrix()).abs().max() < 1e-15);
        let zero = AcsField::new(AcsSpec::Conjugated {
            amplitude: 0.0,
            width: 1.0,
            seed: 9,
        })
        .unwrap();
        assert_eq!(zero.matrix([1.0; 6]).unwrap(), standard_matrix());
        assert!(AcsField::new(AcsSpec::Conjugated { amplitude: 0.6, width: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn pulled_back_structure_tends_to_standard_linearly() {
        let acs = AcsField::new(AcsSpec::Conjugated {
            amplitude: 0.2,
            width: 1.0,
            seed: 2,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<V6> = (0..200).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let d: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&l| acs_deviation(&acs, l, &pts).unwrap()).collect();
        for (l, v) in [0.1, 0.05, 0.025].iter().zip(&d) {
            assert!(*v <= 2.0 * l, "{v} at {l}");
        }
        assert!((d[0] / d[1] - 2.0).abs() < 0.2);
    }

    #[test]
    fn jet_application_matches_the_matrix() {
        let acs = AcsField::new(AcsSpec::Conjugated {
            amplitude: 0.3,
            width: 2.0,
            seed: 4,
        })
        .unwrap();
        let emb = ChartEmbedding::new(Model::Flat, rotation(0.2), 0.7, None).unwrap();
        let q = [0.2, -0.4, 0.1, 0.3];
        let (g, world) = emb.jet(q, 3).unwrap();
        let cols = tangent_jets(&g);
        let jb = acs.apply(&world, &cols).unwrap();
        // values
        let jm = acs.matrix(jet::values(&world)).unwrap();
        for c in 0..4 {
            let b = jet::values(&cols[c]);
            for i in 0..6 {
                let want: f64 = (0..6).map(|j| jm[(i, j)] * b[j]).sum();
                assert!((jb[c][i].value() - want).abs() < 1e-13);
            }
        }
        // first derivatives by central differences of the matrix product
        let h = 1e-5;
        for v in 0..4 {
            let at = |s: f64| {
                let mut p = q;
                p[v] += s;
                let (g, w) = emb.jet(p, 1).unwrap();
                let cols = tangent_jets(&g);
                let m = acs.matrix(jet::values(&w)).unwrap();
                let b = jet::values(&cols[1]);
                (0..6).map(|i| (0..6).map(|j| m[(i, j)] * b[j]).sum::<f64>()).collect::<Vec<_>>()
            };
            let (p, m) = (at(h), at(-h));
            for i in 0..6 {
                let fd = (p[i] - m[i]) / (2.0 * h);
                assert!((jb[1][i].grad(v) - fd).abs() < 1e-7, "{} vs {fd}", jb[1][i].grad(v));
            }
        }
    }

    struct ComplexPlane;

    impl Embedding for ComplexPlane {
        fn jet(&self, q: V4, order: u8) -> Result<([Jet; 6], [Jet; 6])> {
            // spans e1, J e1, e2, J e2
            let d = Jet::point(q, order);
            let z = Jet::constant(0.0, order);
            let g = [d[0], d[2], z, d[1], d[3], z];
            Ok((g, g))
        }

        fn model(&self) -> Model {
            Model::Flat
        }
    }

    struct TotallyRealPlusFiber;

    impl Embedding for TotallyRealPlusFiber {
        fn jet(&self, q: V4, order: u8) -> Result<([Jet; 6], [Jet; 6])> {
            // R³ ⊂ C³ plus a generic fiber direction
            let d = Jet::point(q, order);
            let g = [
                d[0] + d[3] * 0.3,
                d[1] - d[3] * 0.1,
                d[2],
                d[3] * 0.7,
                d[3] * 0.4,
                d[3] * -0.5,
            ];
            Ok((g, g))
        }

        fn model(&self) -> Model {
            Model::Flat
        }
    }

    #[test]
    fn tangency_dimensions_of_test_maps() {
        let acs = AcsField::standard();
        let t = complex_tangency(&ComplexPlane, &acs, [0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(t.dim, 4);
        let scan = coreal_scan(&ComplexPlane, &acs, &small_grid()).unwrap();
        assert!(!scan.co_real);
        let t = complex_tangency(&TotallyRealPlusFiber, &acs, [0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(t.dim, 2);
        let b = t.basis.unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot4(&b[i], &b[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_base_independent_tangency_is_the_prolongation() {
        let acs = AcsField::standard();
        for lambda in [1.0, 1e-3] {
            let emb = ChartEmbedding::new(Model::Flat, frozen(), lambda, None).unwrap();
            let scan = coreal_scan(&emb, &acs, &small_grid()).unwrap();
            assert!(scan.co_real);
            let rep = lemma_check(&emb, &acs, &small_grid()).unwrap();
            assert!(rep.base_independent);
            assert!(rep.max_angle <= 1e-8, "{}", rep.max_angle);
        }
    }

    #[test]
    fn base_dependence_shows_up_in_the_angle() {
        let emb = ChartEmbedding::new(Model::Flat, rotation(0.1), 1.0, None).unwrap();
        let rep = lemma_check(&emb, &AcsField::standard(), &small_grid()).unwrap();
        assert!(!rep.base_independent);
        assert!(rep.max_angle > 1e-8);
        let cliff = ChartEmbedding::new(Model::Clifford, frozen(), 0.1, None).unwrap();
        assert!(matches!(
            lemma_check(&cliff, &AcsField::standard(), &small_grid()),
            Err(ForgeError::ModelMismatch(_))
        ));
    }

    #[test]
    fn tangency_frame_reproduces_the_reference() {
        let emb: Arc<dyn Embedding> = Arc::new(ChartEmbedding::new(Model::Flat, frozen(), 1.0, None).unwrap());
        let reference: Arc<dyn PlaneFieldModel> = Arc::new(ProlongedField::derived(frozen()));
        let acs = AcsField::standard();
        let field = tangency_frame_field(emb, &acs, &small_grid(), reference.clone()).unwrap();
        for s in (0..small_grid().len()).step_by(7) {
            let q = small_grid().point(s);
            let a = field.frame(q, 2).unwrap();
            let b = reference.frame(q, 2).unwrap();
            for v in 0..2 {
                for i in 0..4 {
                    // every coefficient of the jets, not just values
                    for (x, y) in a[v][i].coeffs().iter().zip(b[v][i].coeffs()).take(15) {
                        assert!((x - y).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn large_dilation_of_a_twisted_family_misaligns() {
        let strong: Arc<dyn FiberModel> = Arc::new(RotationFamily {
            curve: PeriodicCurve::twisted_rosette(),
            amplitude: 1.5,
        });
        let emb: Arc<dyn Embedding> = Arc::new(ChartEmbedding::new(Model::Flat, strong.clone(), 100.0, None).unwrap());
        let reference: Arc<dyn PlaneFieldModel> = Arc::new(ProlongedField::derived(strong));
        let err = tangency_frame_field(emb, &AcsField::standard(), &small_grid(), reference).err();
        assert!(matches!(err, Some(ForgeError::AlignmentFailure { .. })), "{err:?}");
    }

    #[test]
    fn small_dilation_stays_close_to_the_reference() {
        let fam = rotation(0.1);
        let emb = ChartEmbedding::new(Model::Flat, fam, 1e-2, None).unwrap();
        let rep = lemma_check(&emb, &AcsField::standard(), &small_grid()).unwrap();
        assert!(rep.max_angle < 1e-2, "{}", rep.max_angle);
    }

    #[test]
    fn zoom_linearization_is_the_limit() {
        let grid = small_grid();
        let fam = rotation(0.2);
        let g0 = ChartEmbedding::new(Model::Clifford, fam.clone(), 0.0, Some([0.3, 0.2, 0.1])).unwrap();
        let d: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&l| {
                let g = ChartEmbedding::new(Model::Clifford, fam.clone(), l, Some([0.3, 0.2, 0.1])).unwrap();
                c2_distance(&g, &g0, &grid).unwrap()
            })
            .collect();
        assert!(d[0] / 0.02 < 100.0, "{d:?}");
        assert!((d[0] / d[1] - 2.0).abs() < 0.2 && (d[1] / d[2] - 2.0).abs() < 0.2, "{d:?}");
    }

    #[test]
    fn base_independent_sweep_is_flat_in_lambda() {
        let opts = ZoomOptions {
            base: [2, 2, 2],
            fiber: 16,
            ..ZoomOptions::default()
        };
        let rep = zoom_sweep(frozen(), Model::Flat, &AcsField::standard(), &[1.0, 0.1, 0.01], &opts).unwrap();
        for e in &rep.entries {
            assert!(e.certified());
            assert!((e.min_m4 - rep.limit_m4).abs() < 1e-8);
        }
        assert_eq!(rep.lambda_star, Some(1.0));
    }

    #[test]
    fn great_circle_never_certifies() {
        let opts = ZoomOptions {
            base: [2, 2, 2],
            fiber: 16,
            ..ZoomOptions::default()
        };
        // a closed curve whose indicatrix is a great circle: a planar circle
        let circle = Arc::new(Frozen(PeriodicCurve::great_circle().scaled(0.1)));
        let rep = zoom_sweep(circle, Model::Flat, &AcsField::standard(), &[1.0, 0.1], &opts).unwrap();
        for e in &rep.entries {
            assert!(e.min_m4 <= 1e-9 && !e.certified());
        }
        assert_eq!(rep.lambda_star, None);
    }

    #[test]
    fn sweep_rejects_unsorted_dilations() {
        let opts = ZoomOptions::default();
        assert!(zoom_sweep(frozen(), Model::Flat, &AcsField::standard(), &[0.1, 1.0], &opts).is_err());
    }
}
