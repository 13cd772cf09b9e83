//! Splitting deficits along bubbling sequences and the pointwise constant of
//! the mixed-term inequality.

use critsys::diagnostics::{bl_deficit, bl_mixed_inequality_probe, BlKind};
use critsys::energy::PairState;
use critsys::grid::{build_grid, make_bump, ReducedGeometry};
use critsys::scalar::SystemParams;

fn main() -> critsys::Result<()> {
    let scales = [0.2, 0.1, 0.05, 0.025];
    for (n, alpha) in [(4, 2.0), (10, 1.25)] {
        let p = SystemParams::new(n, 1.0, 1.0, -1.0, alpha, alpha)?;
        let g = build_grid(ReducedGeometry::ball(n, 3.0), 8192)?;
        let base = PairState::new(make_bump(&g, &[1.5], 0.6, 1.0)?, make_bump(&g, &[2.3], 0.6, 1.0)?, &p)?;
        println!("N = {n}, alpha = beta = {alpha}");
        for kind in [BlKind::Product, BlKind::Power, BlKind::Derivative] {
            let d = bl_deficit(kind, &g, &base, &p, &scales)?;
            let row: Vec<String> = d.iter().map(|x| format!("{x:.3e}")).collect();
            println!("  {kind:?}: {}  (final/first {:.1e})", row.join(" "), d[3] / d[0]);
        }
    }
    for eps in [1.0, 0.5, 0.1] {
        let probe = bl_mixed_inequality_probe(2.0, 2.0, eps, 100_000, 1)?;
        println!("eps {eps}: C = {:.4} ({:.4} with twice the samples)", probe.c, probe.c_doubled);
    }
    Ok(())
}
