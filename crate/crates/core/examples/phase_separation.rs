//! Strong repulsion drives the two components apart.

use critsys::diagnostics::separation_sweep;
use critsys::flow::FlowConfig;
use critsys::grid::{build_grid, ReducedGeometry};
use critsys::scalar::SystemParams;

fn main() -> critsys::Result<()> {
    let grid = build_grid(ReducedGeometry::annulus(4, 1.0, 2.0), 512)?;
    let p = SystemParams::balanced(4, 1.0, 1.0, -1.0)?;
    let sweep = separation_sweep(&grid, &p, &[-1.0, -10.0, -100.0, -1000.0], &FlowConfig::default())?;
    println!("{:>8} {:>12} {:>12} {:>22} {:>22}", "lambda", "overlap", "energy", "omega1", "omega2");
    for r in &sweep.records {
        let fmt = |o: Option<(f64, f64)>| o.map_or("-".into(), |(a, b)| format!("({a:.4}, {b:.4})"));
        println!("{:>8} {:>12.4e} {:>12.4} {:>22} {:>22}", r.lambda, r.overlap, r.energy, fmt(r.omega1), fmt(r.omega2));
    }
    let last = sweep.records.last().unwrap();
    println!("overlap ratio {:.3e}; limit residuals {:.2e} / {:.2e}", sweep.overlap_ratio, last.residual1, last.residual2);
    println!("note: {}", sweep.caveat);
    Ok(())
}
