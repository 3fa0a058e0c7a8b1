//! Graft wiggles into the seed curve and watch the surround margin appear.
use engel_forge::curve::{convexity_margin, surround_margin};
use engel_forge::surgery::graft::{graft_homotopy, graft_with, GraftOptions, GraftableArc};
use engel_forge::surgery::seed::SeedShape;
use engel_forge::surgery::wiggle::{detect_wiggles, n_complete_surround, CLOSURE_TOL};

fn main() -> engel_forge::Result<()> {
    let seed = SeedShape::standard().curve()?;
    let arc = GraftableArc::standard();
    println!("seed: surround margin {:.3}", surround_margin(&seed, 2000));
    for n in 1..=3 {
        let out = graft_with(&seed, &arc, n, 1.0, GraftOptions::default())?;
        let wiggles = detect_wiggles(&out.curve, CLOSURE_TOL);
        let check = n_complete_surround(&out.curve, n, &wiggles);
        let conv = convexity_margin(&out.curve, 4096)?;
        println!(
            "n={n}: {} modes, min det {:.3e}, {} wiggles, {n}-complete: {} (margin {:.3})",
            out.curve.modes(),
            conv.min_value,
            wiggles.len(),
            check.satisfied,
            check.margin
        );
    }

    // the whole homotopy stays convex
    let h = graft_homotopy(&seed, &arc, 2, 15, GraftOptions::default())?;
    for (s, m) in h.times.iter().zip(&h.convexity).step_by(3) {
        println!("  s={s:.2}  min det {m:.3e}");
    }
    Ok(())
}
