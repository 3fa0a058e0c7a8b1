//! From a balanced direction curve to an embedded fibre, then glue two charts.
use engel_forge::curve::{indicatrix, PeriodicCurve};
use engel_forge::family::{BaseChart, CurveFamily};
use engel_forge::prolong::{ensure_embedded, patch_family, primitive, two_chart_cover, LocalFamily, Transition};
use engel_forge::reparam::rebalance;

fn main() -> engel_forge::Result<()> {
    let eta = indicatrix(&PeriodicCurve::twisted_rosette(), 256)?.curve;
    let (gamma, _) = rebalance(&eta, 1e-12)?;
    let nu = primitive(&gamma)?;
    let (nu, rep) = ensure_embedded(&nu, 1e-3, 7)?;
    println!("fibre: length {:.4}, min self distance {:.3e}, {} perturbations", nu.length(), rep.min_distance, rep.attempts);

    // two charts on the torus whose fibre coordinates differ by a quarter turn
    let delta = 0.25;
    let res = [16, 2, 2];
    let locals: Vec<LocalFamily> = [primitive(&gamma.shifted(delta))?, nu.clone()]
        .into_iter()
        .zip(two_chart_cover(res, 2))
        .map(|(g, (support, bump))| LocalFamily {
            family: CurveFamily::constant(BaseChart::Torus, res, g),
            support,
            bump,
        })
        .collect();
    let patched = patch_family(&locals, &[Transition { from: 0, to: 1, delta }], 1e-8)?;
    let r = &patched.report;
    println!(
        "patch: {} overlap nodes, translation error {:.1e}, derivative error {:.1e}",
        r.overlaps.len(),
        r.max_translation_error,
        r.max_derivative_error
    );
    if let Some(o) = r.overlaps.first() {
        println!("  v = {:?}", o.quadrature);
    }
    Ok(())
}
