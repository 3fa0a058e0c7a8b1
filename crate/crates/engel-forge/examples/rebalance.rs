//! Reparametrize a surrounding curve so that its integral vanishes.
use engel_forge::curve::{curve_integral, PeriodicCurve};
use engel_forge::reparam::{rebalance_with, RebalanceOptions};
use engel_forge::vec3::norm;
use engel_forge::ForgeError;

fn main() -> engel_forge::Result<()> {
    // a lopsided tennis-ball curve: surrounds the origin but spends longer up north
    let raw = PeriodicCurve::new(
        vec![[0.0, 0.0, 0.35], [1.0, 0.0, 0.0], [0.0, 0.0, 0.6]],
        vec![[0.0; 3], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
    )?;
    println!("|∫γ| before: {:.3e}", norm(curve_integral(&raw)));

    let r = rebalance_with(&raw, RebalanceOptions::new(1e-10))?;
    for step in &r.report.tilt.trace {
        println!("  newton {:>2}: residual {:.3e} step {:.3}", step.iteration, step.residual, step.step);
    }
    println!(
        "|∫γ∘ψ| after: {:.3e}, min density {:.3}, {} modes",
        r.report.integral_norm, r.report.min_density, r.report.modes
    );

    match rebalance_with(&PeriodicCurve::latitude(0.5), RebalanceOptions::new(1e-10)) {
        Err(e @ ForgeError::NotSurrounding { .. }) => println!("latitude: {e}"),
        other => println!("latitude: unexpected {:?}", other.map(|r| r.report.integral_norm)),
    }
    Ok(())
}
