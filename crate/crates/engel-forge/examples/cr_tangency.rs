//! Complex tangencies of a flat bundle immersion and the prolongation they recover.
use std::sync::Arc;

use engel_forge::cr::{complex_tangency, coreal_scan, lemma_check, AcsField, ChartEmbedding, Model};
use engel_forge::curve::PeriodicCurve;
use engel_forge::family::{BaseChart, FiberModel, Frozen, RotationFamily, SampleGrid};
use engel_forge::prolong::primitive;

fn main() -> engel_forge::Result<()> {
    let nu = primitive(&PeriodicCurve::twisted_rosette())?;
    let grid = SampleGrid::new(BaseChart::unit_box(), [4, 4, 4], 32);
    let acs = AcsField::standard();

    let frozen: Arc<dyn FiberModel> = Arc::new(Frozen(nu.clone()));
    let emb = ChartEmbedding::new(Model::Flat, frozen, 1.0, None)?;
    let t = complex_tangency(&emb, &acs, [0.1, 0.2, 0.3, 0.4])?;
    println!("tangency at one point: dim {}, kept σ {:.3e}, dropped σ {:.1e}", t.dim, t.kept, t.dropped);
    let scan = coreal_scan(&emb, &acs, &grid)?;
    println!("frozen: co-real {} (gap {:.3e})", scan.co_real, scan.min_gap);
    let lemma = lemma_check(&emb, &acs, &grid)?;
    println!("frozen: max angle to the prolongation {:.1e}", lemma.max_angle);

    // base dependence tilts the tangency away from the prolongation
    let rot: Arc<dyn FiberModel> = Arc::new(RotationFamily { curve: nu, amplitude: 0.2 });
    let emb = ChartEmbedding::new(Model::Flat, rot, 1.0, None)?;
    let lemma = lemma_check(&emb, &acs, &grid)?;
    println!("rotated: max angle {:.3e} (informative only: {})", lemma.max_angle, !lemma.base_independent);
    Ok(())
}
