//! Zoom into a base-dependent family and watch the complex tangency become Engel.
use std::sync::Arc;
use std::time::Instant;

use engel_forge::cr::{zoom_sweep, AcsField, AcsSpec, Model, ZoomOptions};
use engel_forge::curve::PeriodicCurve;
use engel_forge::family::{FiberModel, RotationFamily};

fn main() -> engel_forge::Result<()> {
    let fiber: Arc<dyn FiberModel> = Arc::new(RotationFamily {
        curve: PeriodicCurve::twisted_rosette().scaled(0.5),
        amplitude: 0.2,
    });
    let lambdas = [1.0, 0.5, 0.2, 0.1, 0.05, 0.01];
    let opts = ZoomOptions::default();
    let bent = AcsField::new(AcsSpec::Conjugated { amplitude: 0.2, width: 1.0, seed: 7 })?;
    for (model, acs) in [(Model::Flat, bent), (Model::Clifford, AcsField::standard())] {
        let clock = Instant::now();
        let rep = zoom_sweep(fiber.clone(), model, &acs, &lambdas, &opts)?;
        println!("{model:?}: limit m4 {:.6e} ({:.1?})", rep.limit_m4, clock.elapsed());
        for e in rep.entries.iter().chain(&rep.bisection) {
            match &e.error {
                None => println!("  λ={:<8} co-real={} gap={:.2e} m3={:.4e} m4={:.4e}", e.lambda, e.co_real, e.min_gap, e.min_m3, e.min_m4),
                Some(err) => println!("  λ={:<8} failed: {err}", e.lambda),
            }
        }
        println!("  λ* = {:?}", rep.lambda_star);
    }
    Ok(())
}
