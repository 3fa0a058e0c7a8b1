//! Shared curve generators and independent oracles for the integration tests.
#![allow(dead_code)]

use engel_forge::curve::{self, PeriodicCurve};
use engel_forge::vec3::{self, V3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Spherical curve from samples of a random low-mode space curve, pushed
/// radially onto the unit sphere. Draws passing near the origin are redrawn.
fn radial_curve(rng: &mut ChaCha8Rng, offset: V3, modes: usize) -> PeriodicCurve {
    loop {
        if let Some(c) = try_radial_curve(rng, offset, modes) {
            return c;
        }
    }
}

fn try_radial_curve(rng: &mut ChaCha8Rng, offset: V3, modes: usize) -> Option<PeriodicCurve> {
    let mut a = vec![[0.0; 3]; modes + 1];
    let mut b = vec![[0.0; 3]; modes + 1];
    a[0] = offset;
    for k in 1..=modes {
        for i in 0..3 {
            a[k][i] = rng.gen_range(-1.0..1.0) / k as f64;
            b[k][i] = rng.gen_range(-1.0..1.0) / k as f64;
        }
    }
    let raw = PeriodicCurve::new(a, b).unwrap();
    let samples = raw.sample(1024);
    if samples.iter().any(|p| vec3::norm(*p) < 0.3) {
        return None;
    }
    let pts: Vec<V3> = samples.into_iter().map(|p| vec3::scale(1.0 / vec3::norm(p), p)).collect();
    curve::fit_uniform_adaptive(&pts, 1e-10).ok().map(|f| f.curve)
}

/// A spherical curve whose image strictly surrounds the origin, with a
/// safety margin so the tilt problem is well posed.
pub fn surrounding_curve(rng: &mut ChaCha8Rng) -> PeriodicCurve {
    loop {
        let c = radial_curve(rng, [0.0; 3], 3);
        if points_surround(&c.sample(1024)) > 0.1 {
            return c;
        }
    }
}

/// A spherical curve confined to the open upper hemisphere.
pub fn hemisphere_curve(rng: &mut ChaCha8Rng) -> PeriodicCurve {
    let mut c = radial_curve(rng, [0.0, 0.0, 4.0], 3);
    // pull back the rare excursion of the fitted series below the equator
    while c.sample(2048).iter().any(|p| p[2] <= 0.05) {
        c = radial_curve(rng, [0.0, 0.0, 4.0], 3);
    }
    c
}

/// Lower bound on how strictly `pts` surround the origin: the least, over a
/// dense set of directions, of the largest projection.
pub fn points_surround(pts: &[V3]) -> f64 {
    let n = 2000;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let u = [r * (golden * i as f64).cos(), r * (golden * i as f64).sin(), z];
            pts.iter().map(|p| vec3::dot(u, *p)).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `∫₀¹ γ` by the trapezoid rule, which is spectrally accurate for periodic
/// integrands.
pub fn trapezoid_integral(c: &PeriodicCurve, n: usize) -> V3 {
    c.sample(n).into_iter().fold([0.0; 3], |s, p| vec3::add(s, vec3::scale(1.0 / n as f64, p)))
}

/// `det(γ, γ', γ'')` from fourth-order central differences of point values.
pub fn fd_convexity(c: &PeriodicCurve, t: f64) -> f64 {
    let h = 1e-3;
    let p = |k: f64| c.eval(t + k * h);
    let d1 = [0, 1, 2].map(|i| (-p(2.0)[i] + 8.0 * p(1.0)[i] - 8.0 * p(-1.0)[i] + p(-2.0)[i]) / (12.0 * h));
    let d2 = [0, 1, 2].map(|i| {
        (-p(2.0)[i] + 16.0 * p(1.0)[i] - 30.0 * p(0.0)[i] + 16.0 * p(-1.0)[i] - p(-2.0)[i]) / (12.0 * h * h)
    });
    vec3::dot(p(0.0), vec3::cross(d1, d2))
}

/// Least of [`fd_convexity`] over `n` uniform parameters.
pub fn fd_min_convexity(c: &PeriodicCurve, n: usize) -> f64 {
    (0..n).map(|j| fd_convexity(c, j as f64 / n as f64)).fold(f64::INFINITY, f64::min)
}

/// Closed form of `det(γ, γ', γ'')` along the latitude at height `c`.
pub fn latitude_det(c: f64) -> f64 {
    TWO_PI.powi(3) * (1.0 - c * c) * c
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
