//! Engel certificate of the prolonged distribution for convex and flat directions.
use std::sync::Arc;

use engel_forge::curve::PeriodicCurve;
use engel_forge::engel::{engel_margins, SecondBracket};
use engel_forge::family::{BaseChart, Frozen, SampleGrid};
use engel_forge::prolong::ProlongedField;
use engel_forge::surgery::seed::SeedShape;

fn main() -> engel_forge::Result<()> {
    let grid = SampleGrid::new(BaseChart::unit_box(), [4, 4, 4], 128);
    let curves = [
        ("latitude 0.6", PeriodicCurve::latitude(0.6)),
        ("seed", SeedShape::standard().curve()?),
        ("great circle", PeriodicCurve::great_circle()),
    ];
    for (name, gamma) in curves {
        let field = ProlongedField::direct(Arc::new(Frozen(gamma)));
        let cert = engel_margins(&field, &grid, SecondBracket::Max)?;
        println!(
            "{name:>13}: m2 {:.3e}  m3 {:.3e}  m4 {:.3e}  engel={}",
            cert.min_m2.value, cert.min_m3.value, cert.min_m4.value, cert.engel
        );
    }
    Ok(())
}
