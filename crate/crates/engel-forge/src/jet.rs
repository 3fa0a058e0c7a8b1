//! Truncated multivariate Taylor jets in four variables `(x1, x2, x3, t)`.
//!
//! A [`Jet`] stores Taylor coefficients `c_α` of `Σ c_α h^α` up to total
//! degree three. Arithmetic propagates exact partial derivatives, which is how
//! Lie brackets and frame derivatives are computed downstream. Each jet carries
//! the order to which its coefficients are valid; differentiation lowers it.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::LazyLock;

pub const NVARS: usize = 4;
pub const MAX_ORDER: u8 = 3;
pub const NCOEF: usize = 35;
/// Number of monomials of degree ≤ d, for d = 0..=3.
const COUNT_UPTO: [usize; 4] = [1, 5, 15, 35];

struct Tables {
    exps: [[u8; NVARS]; NCOEF],
    deg: [u8; NCOEF],
    /// For each left index i: (j, k) pairs with deg(i)+deg(j) ≤ 3, sorted by deg(j).
    rows: Vec<Vec<(u8, u8)>>,
    /// rows[i][..row_len[i][d]] are the pairs whose product degree is ≤ d.
    row_len: Vec<[usize; 4]>,
    /// deriv[v][β] = (index of β + e_v, β_v + 1) when deg β ≤ 2.
    deriv: [[Option<(u8, f64)>; NCOEF]; NVARS],
    /// shift_t[α][j] = index of α + j·e_t, if in range.
    shift_t: [[Option<u8>; 4]; NCOEF],
}

fn index_of(exps: &[[u8; NVARS]; NCOEF], e: [u8; NVARS]) -> Option<usize> {
    exps.iter().position(|x| *x == e)
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let mut list: Vec<[u8; NVARS]> = Vec::with_capacity(NCOEF);
    for d in 0..=MAX_ORDER {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                for c in (0..=d - a - b).rev() {
                    list.push([a, b, c, d - a - b - c]);
                }
            }
        }
    }
    assert_eq!(list.len(), NCOEF);
    let mut exps = [[0u8; NVARS]; NCOEF];
    let mut deg = [0u8; NCOEF];
    for (i, e) in list.iter().enumerate() {
        exps[i] = *e;
        deg[i] = e.iter().sum();
    }
    let mut rows = Vec::with_capacity(NCOEF);
    let mut row_len = Vec::with_capacity(NCOEF);
    for i in 0..NCOEF {
        let mut row = Vec::new();
        for j in 0..NCOEF {
            if deg[i] + deg[j] <= MAX_ORDER {
                let mut e = exps[i];
                for v in 0..NVARS {
                    e[v] += exps[j][v];
                }
                let k = index_of(&exps, e).expect("monomial in range");
                row.push((j as u8, k as u8));
            }
        }
        row.sort_by_key(|&(j, _)| deg[j as usize]);
        let mut lens = [0usize; 4];
        for (d, len) in lens.iter_mut().enumerate() {
            *len = row
                .iter()
                .filter(|&&(j, _)| (deg[i] + deg[j as usize]) as usize <= d)
                .count();
        }
        rows.push(row);
        row_len.push(lens);
    }
    let mut deriv = [[None; NCOEF]; NVARS];
    for v in 0..NVARS {
        for b in 0..NCOEF {
            if deg[b] < MAX_ORDER {
                let mut e = exps[b];
                e[v] += 1;
                let k = index_of(&exps, e).expect("monomial in range");
                deriv[v][b] = Some((k as u8, e[v] as f64));
            }
        }
    }
    let mut shift_t = [[None; 4]; NCOEF];
    for a in 0..NCOEF {
        for j in 0..4u8 {
            if deg[a] + j <= MAX_ORDER {
                let mut e = exps[a];
                e[3] += j;
                shift_t[a][j as usize] = index_of(&exps, e).map(|k| k as u8);
            }
        }
    }
    Tables {
        exps,
        deg,
        rows,
        row_len,
        deriv,
        shift_t,
    }
});

/// Truncated Taylor expansion of a scalar function of `(x1, x2, x3, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    c: [f64; NCOEF],
    order: u8,
}

impl Jet {
    pub fn constant(v: f64, order: u8) -> Jet {
        let mut c = [0.0; NCOEF];
        c[0] = v;
        Jet {
            c,
            order: order.min(MAX_ORDER),
        }
    }

    /// The coordinate function `x_var` expanded at `v`.
    pub fn var(var: usize, v: f64, order: u8) -> Jet {
        let mut j = Jet::constant(v, order);
        if order >= 1 {
            j.c[1 + var] = 1.0;
        }
        j
    }

    /// Coordinate jets for a base point `p`.
    pub fn point(p: [f64; 4], order: u8) -> [Jet; 4] {
        [0, 1, 2, 3].map(|i| Jet::var(i, p[i], order))
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64; NCOEF] {
        &self.c
    }

    /// First partial derivative ∂f/∂x_i at the expansion point.
    pub fn grad(&self, i: usize) -> f64 {
        if self.order < 1 {
            return f64::NAN;
        }
        self.c[1 + i]
    }

    /// Arbitrary partial derivative `∂^α f` at the expansion point.
    pub fn partial(&self, alpha: [u8; NVARS]) -> f64 {
        let t = &*TABLES;
        let d: u8 = alpha.iter().sum();
        if d > self.order {
            return f64::NAN;
        }
        let k = index_of(&t.exps, alpha).expect("monomial in range");
        let fact: f64 = alpha
            .iter()
            .map(|&a| (1..=a as u32).product::<u32>() as f64)
            .product();
        self.c[k] * fact
    }

    /// Second partial derivative ∂²f/∂x_i∂x_j.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let mut a = [0u8; NVARS];
        a[i] += 1;
        a[j] += 1;
        self.partial(a)
    }

    pub fn with_order(mut self, order: u8) -> Jet {
        let o = order.min(self.order);
        for k in COUNT_UPTO[o as usize]..NCOEF {
            self.c[k] = 0.0;
        }
        self.order = o;
        self
    }

    /// Partial derivative with respect to variable `v`, valid to one order less.
    pub fn deriv(&self, v: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let t = &*TABLES;
        let order = self.order - 1;
        let mut c = [0.0; NCOEF];
        for (b, slot) in c.iter_mut().enumerate().take(COUNT_UPTO[order as usize]) {
            if let Some((k, f)) = t.deriv[v][b] {
                *slot = f * self.c[k as usize];
            }
        }
        Jet { c, order }
    }

    /// Apply a univariate function given its Taylor coefficients
    /// `f(c0 + h) = Σ_k taylor[k] h^k` at the current value.
    pub fn compose(&self, taylor: [f64; 4]) -> Jet {
        let mut h = *self;
        h.c[0] = 0.0;
        let mut out = Jet::constant(taylor[0], self.order);
        if self.order == 0 {
            return out;
        }
        out.axpy(taylor[1], &h);
        if self.order >= 2 {
            let h2 = h * h;
            out.axpy(taylor[2], &h2);
            if self.order >= 3 {
                let h3 = h2 * h;
                out.axpy(taylor[3], &h3);
            }
        }
        out
    }

    /// `self += a·x` (orders combine by minimum).
    pub fn axpy(&mut self, a: f64, x: &Jet) {
        let o = self.order.min(x.order);
        let n = COUNT_UPTO[o as usize];
        for k in 0..n {
            self.c[k] += a * x.c[k];
        }
        self.truncate_to(o);
    }

    fn truncate_to(&mut self, o: u8) {
        if o < self.order {
            for k in COUNT_UPTO[o as usize]..NCOEF {
                self.c[k] = 0.0;
            }
            self.order = o;
        }
    }

    /// Accumulate `c(x) · e(t)` where `self = c` has no `t`-dependence and
    /// `e` holds the univariate Taylor coefficients of a function of `t`.
    pub fn acc_product_t(&mut self, cx: &Jet, e: &[f64; 4]) {
        let t = &*TABLES;
        let o = self.order.min(cx.order);
        self.truncate_to(o);
        for a in 0..COUNT_UPTO[o as usize] {
            let ca = cx.c[a];
            if ca == 0.0 {
                continue;
            }
            for (j, ej) in e.iter().enumerate() {
                if t.deg[a] as usize + j > o as usize {
                    break;
                }
                if let Some(k) = t.shift_t[a][j] {
                    self.c[k as usize] += ca * ej;
                }
            }
        }
    }

    pub fn sqrt(&self) -> Jet {
        let v = self.value();
        let s = v.sqrt();
        self.compose([
            s,
            0.5 / s,
            -0.125 / (s * v),
            1.0 / 16.0 / (s * v * v),
        ])
    }

    pub fn recip(&self) -> Jet {
        let v = self.value();
        let r = 1.0 / v;
        self.compose([r, -r * r, r * r * r, -r * r * r * r])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s / 2.0, -c / 6.0])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c / 2.0, s / 6.0])
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose([e, e, e / 2.0, e / 6.0])
    }

    pub fn tanh(&self) -> Jet {
        let t = self.value().tanh();
        let s = 1.0 - t * t;
        self.compose([t, s, -t * s, -s * (1.0 - 3.0 * t * t) / 3.0])
    }

    pub fn powi(&self, n: i32) -> Jet {
        let mut out = Jet::constant(1.0, self.order);
        for _ in 0..n {
            out = out * *self;
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.axpy(1.0, &rhs);
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self.axpy(-1.0, &rhs);
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        self.axpy(1.0, &rhs);
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        self.axpy(-1.0, &rhs);
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for c in self.c.iter_mut() {
            *c = -*c;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let t = &*TABLES;
        let o = self.order.min(rhs.order);
        let mut c = [0.0; NCOEF];
        for i in 0..COUNT_UPTO[o as usize] {
            let a = self.c[i];
            if a == 0.0 {
                continue;
            }
            let row = &t.rows[i][..t.row_len[i][o as usize]];
            for &(j, k) in row {
                c[k as usize] += a * rhs.c[j as usize];
            }
        }
        Jet { c, order: o }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for c in self.c.iter_mut() {
            *c *= rhs;
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

/// Dot product of two jet vectors.
pub fn dot<const N: usize>(a: &[Jet; N], b: &[Jet; N]) -> Jet {
    let mut s = a[0] * b[0];
    for i in 1..N {
        s += a[i] * b[i];
    }
    s
}

/// Values of a jet vector.
pub fn values<const N: usize>(v: &[Jet; N]) -> [f64; N] {
    v.map(|j| j.value())
}

/// Univariate Taylor coefficients of `cos(ωt + φ)` at `t` up to degree 3.
pub fn trig_taylor(omega: f64, t: f64, phase: f64) -> [f64; 4] {
    let (s, c) = (omega * t + phase).sin_cos();
    [c, -omega * s, -omega * omega * c / 2.0, omega.powi(3) * s / 6.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> [Jet; 4] {
        Jet::point([0.3, -0.7, 1.1, 0.45], 3)
    }

    #[test]
    fn table_sizes() {
        let t = &*TABLES;
        assert_eq!(t.exps[0], [0, 0, 0, 0]);
        assert_eq!(t.exps[1], [1, 0, 0, 0]);
        assert_eq!(t.exps[4], [0, 0, 0, 1]);
        let pairs: usize = t.rows.iter().map(|r| r.len()).sum();
        assert_eq!(pairs, 165);
    }

    #[test]
    fn polynomial_partials() {
        let [x, y, z, t] = p();
        // f = x²y + z t³
        let f = x * x * y + z * t * t * t;
        let (xv, yv, zv, tv) = (0.3, -0.7, 1.1, 0.45);
        assert!((f.value() - (xv * xv * yv + zv * tv * tv * tv)).abs() < 1e-14);
        assert!((f.grad(0) - 2.0 * xv * yv).abs() < 1e-14);
        assert!((f.grad(3) - 3.0 * zv * tv * tv).abs() < 1e-14);
        assert!((f.hess(0, 1) - 2.0 * xv).abs() < 1e-14);
        assert!((f.hess(3, 3) - 6.0 * zv * tv).abs() < 1e-14);
        assert!((f.partial([2, 1, 0, 0]) - 2.0).abs() < 1e-14);
        assert!((f.partial([0, 0, 1, 2]) - 6.0 * tv).abs() < 1e-14);
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        let g = |v: [f64; 4]| -> f64 {
            ((v[0] * v[1]).sin() + v[2].cos() * (0.3 * v[3]).exp()).sqrt() / (1.5 + v[3].tanh())
        };
        let [x, y, z, t] = p();
        let jet = ((x * y).sin() + z.cos() * (t * 0.3).exp()).sqrt() / ((t.tanh()) + 1.5);
        let base = [0.3, -0.7, 1.1, 0.45];
        assert!((jet.value() - g(base)).abs() < 1e-14);
        let h = 1e-4;
        for i in 0..4 {
            let mut a = base;
            let mut b = base;
            a[i] += h;
            b[i] -= h;
            let fd = (g(a) - g(b)) / (2.0 * h);
            assert!((jet.grad(i) - fd).abs() < 1e-7, "grad {i}");
            let fd2 = (g(a) - 2.0 * g(base) + g(b)) / (h * h);
            assert!((jet.hess(i, i) - fd2).abs() < 1e-5, "hess {i}");
        }
        // third derivative along t
        let h = 1e-3;
        let at = |s: f64| {
            let mut q = base;
            q[3] += s;
            g(q)
        };
        let fd3 = (at(2.0 * h) - 2.0 * at(h) + 2.0 * at(-h) - at(-2.0 * h)) / (2.0 * h * h * h);
        assert!((jet.partial([0, 0, 0, 3]) - fd3).abs() < 1e-4);
    }

    #[test]
    fn derivative_lowers_order() {
        let [x, _, _, t] = p();
        let f = x * x * t;
        let d = f.deriv(0);
        assert_eq!(d.order(), 2);
        assert!((d.value() - 2.0 * 0.3 * 0.45).abs() < 1e-15);
        assert!((d.grad(3) - 0.6).abs() < 1e-15);
        assert!((d.hess(0, 3) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn separable_product() {
        let [x, y, _, t] = p();
        let cx = x * y + x * x;
        let omega = 2.0 * std::f64::consts::PI * 3.0;
        let direct = cx * (t * omega).cos();
        let mut acc = Jet::constant(0.0, 3);
        acc.acc_product_t(&cx, &trig_taylor(omega, 0.45, 0.0));
        for k in 0..NCOEF {
            assert!((acc.coeffs()[k] - direct.coeffs()[k]).abs() < 1e-10, "{k}");
        }
    }
}
