//! Convexity margins of a few spherical curves.
use engel_forge::curve::{convexity_margin, PeriodicCurve};
use engel_forge::surgery::seed::SeedShape;

fn main() -> engel_forge::Result<()> {
    let tau3 = std::f64::consts::TAU.powi(3);
    for c in [0.2, 0.6, 0.9] {
        let m = convexity_margin(&PeriodicCurve::latitude(c), 512)?;
        println!("latitude c={c}: min det {:.6e} (closed form {:.6e})", m.min_value, tau3 * (1.0 - c * c) * c);
    }
    let gc = convexity_margin(&PeriodicCurve::great_circle(), 512)?;
    println!("great circle: min det {:.1e}", gc.min_value);

    let seed = SeedShape::standard().curve()?;
    let m = convexity_margin(&seed, 2048)?;
    println!("seed curve: {} modes, min det {:.4e} at t={:.4}", seed.modes(), m.min_value, m.argmin);
    Ok(())
}
