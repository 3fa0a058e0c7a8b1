//! Dense samples of a periodic curve with cubic Hermite interpolation and a
//! spatial hash, for self-intersection and image-distance queries.

use std::collections::HashMap;

use crate::curve::PeriodicCurve;
use crate::vec3::{self, V3};

/// Dense samples of a curve and its derivative with cubic Hermite
/// interpolation in between.
pub(crate) struct Dense {
    pub n: usize,
    pub p: Vec<V3>,
    pub d: Vec<V3>,
    cell: f64,
    grid: HashMap<[i64; 3], Vec<usize>>,
}

impl Dense {
    pub fn new(curve: &PeriodicCurve, n: usize) -> Dense {
        let p = curve.sample(n);
        let d = curve.derivative().sample(n);
        let step = (0..n)
            .map(|i| vec3::dist(p[i], p[(i + 1) % n]))
            .fold(0.0, f64::max);
        let cell = 2.0 * step.max(1e-12);
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, q) in p.iter().enumerate() {
            grid.entry(Self::key(*q, cell)).or_default().push(i);
        }
        Dense { n, p, d, cell, grid }
    }

    fn key(q: V3, cell: f64) -> [i64; 3] {
        q.map(|x| (x / cell).floor() as i64)
    }

    /// Value and derivative at any parameter.
    pub fn eval(&self, t: f64) -> (V3, V3) {
        let n = self.n as f64;
        let u = t.rem_euclid(1.0) * n;
        let i = (u.floor() as usize).min(self.n - 1);
        let s = u - i as f64;
        let j = (i + 1) % self.n;
        let h = 1.0 / n;
        let (p0, p1) = (self.p[i], self.p[j]);
        let (m0, m1) = (vec3::scale(h, self.d[i]), vec3::scale(h, self.d[j]));
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let g00 = (6.0 * s2 - 6.0 * s) * n;
        let g10 = (3.0 * s2 - 4.0 * s + 1.0) * n;
        let g01 = (-6.0 * s2 + 6.0 * s) * n;
        let g11 = (3.0 * s2 - 2.0 * s) * n;
        let mut val = [0.0; 3];
        let mut der = [0.0; 3];
        for k in 0..3 {
            val[k] = h00 * p0[k] + h10 * m0[k] + h01 * p1[k] + h11 * m1[k];
            der[k] = g00 * p0[k] + g10 * m0[k] + g01 * p1[k] + g11 * m1[k];
        }
        (val, der)
    }

    /// Sample indices within one cell of `q`.
    pub fn near(&self, q: V3) -> Vec<usize> {
        let k = Self::key(q, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        out.extend(v.iter().copied().filter(|&j| vec3::dist(self.p[j], q) < self.cell));
                    }
                }
            }
        }
        out
    }

    /// Minimise `|γ(a) - γ(b)|` from a starting pair; `fix_a` keeps `a`.
    pub fn refine(&self, mut a: f64, mut b: f64, fix_a: bool) -> (f64, f64, f64) {
        for _ in 0..30 {
            let (pa, da) = self.eval(a);
            let (pb, db) = self.eval(b);
            let r = vec3::sub(pa, pb);
            if fix_a {
                // Newton on (γ(b) - γ(a))·γ'(b) = 0 with the Gauss-Newton Hessian
                let g = -vec3::dot(r, db);
                let h = vec3::dot(db, db);
                let step = g / h;
                b -= step;
                if step.abs() < 1e-15 {
                    break;
                }
                continue;
            }
            // min-norm Gauss-Newton step for J = [γ'(a), -γ'(b)]
            let nb = vec3::scale(-1.0, db);
            let m = [[vec3::dot(da, da), vec3::dot(da, nb)], [vec3::dot(da, nb), vec3::dot(nb, nb)]];
            let g = [vec3::dot(da, r), vec3::dot(nb, r)];
            let (tr, det) = (m[0][0] + m[1][1], m[0][0] * m[1][1] - m[0][1] * m[0][1]);
            let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
            let (l1, l2) = (0.5 * tr + disc, 0.5 * tr - disc);
            // eigenvectors of the symmetric 2x2 normal matrix
            let v1 = if m[0][1].abs() > 1e-300 {
                let v = [l1 - m[1][1], m[0][1]];
                let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
                [v[0] / nv, v[1] / nv]
            } else if m[0][0] >= m[1][1] {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            };
            let v2 = [-v1[1], v1[0]];
            let mut step = [0.0; 2];
            for (l, v) in [(l1, v1), (l2, v2)] {
                if l > 1e-10 * l1 {
                    let c = (g[0] * v[0] + g[1] * v[1]) / l;
                    step[0] += c * v[0];
                    step[1] += c * v[1];
                }
            }
            a -= step[0];
            b -= step[1];
            if step[0].abs().max(step[1].abs()) < 1e-15 {
                break;
            }
        }
        let gap = vec3::dist(self.eval(a).0, self.eval(b).0);
        (a, b, gap)
    }

    pub fn tangent_angle(&self, a: f64, b: f64) -> f64 {
        let ta = vec3::normalize(self.eval(a).1);
        let tb = vec3::normalize(self.eval(b).1);
        vec3::norm(vec3::cross(ta, tb)).atan2(vec3::dot(ta, tb))
    }

    /// Nearest point of the arc `[lo, hi]` to `q`.
    pub fn distance_to_arc(&self, q: V3, lo: f64, hi: f64) -> f64 {
        let n = self.n as f64;
        let (i0, i1) = ((lo * n).floor() as i64, (hi * n).ceil() as i64);
        let mut best = (f64::INFINITY, lo);
        // coarse pass over the samples of the arc through the spatial grid
        for j in self.near(q) {
            let mut tj = j as f64 / n;
            while tj < lo - 1.0 / n {
                tj += 1.0;
            }
            while tj > hi + 1.0 / n {
                tj -= 1.0;
            }
            let ij = (tj * n).round() as i64;
            if ij >= i0 && ij <= i1 {
                let d = vec3::dist(self.p[j], q);
                if d < best.0 {
                    best = (d, tj);
                }
            }
        }
        if !best.0.is_finite() {
            // fall back to a scan of the arc
            for k in i0..=i1 {
                let j = k.rem_euclid(self.n as i64) as usize;
                let d = vec3::dist(self.p[j], q);
                if d < best.0 {
                    best = (d, k as f64 / n);
                }
            }
        }
        let mut t = best.1;
        for _ in 0..20 {
            let (p, d) = self.eval(t);
            let step = vec3::dot(vec3::sub(p, q), d) / vec3::dot(d, d);
            t = (t - step).clamp(lo, hi);
            if step.abs() < 1e-15 {
                break;
            }
        }
        vec3::dist(self.eval(t).0, q).min(best.0)
    }

    pub fn hausdorff(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        const PROBES: usize = 256;
        let one_way = |x: (f64, f64), y: (f64, f64)| {
            (0..=PROBES)
                .map(|k| {
                    let t = x.0 + (x.1 - x.0) * k as f64 / PROBES as f64;
                    self.distance_to_arc(self.eval(t).0, y.0, y.1)
                })
                .fold(0.0, f64::max)
        };
        one_way(a, b).max(one_way(b, a))
    }
}

