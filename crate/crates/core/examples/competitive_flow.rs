//! Nehari-constrained descent for a repulsive pair on the annulus 1 < |x| < 2
//! in R^4, checked against the energy window and the boundary residual.

use critsys::diagnostics::pohozaev_residual;
use critsys::energy::genus_init;
use critsys::flow::{flow_to_critical, limit_profile, FlowConfig};
use critsys::grid::{build_grid, ReducedGeometry};
use critsys::scalar::{nehari_inf_value, SystemParams};

fn main() -> critsys::Result<()> {
    let grid = build_grid(ReducedGeometry::annulus(4, 1.0, 2.0), 512)?;
    let p = SystemParams::balanced(4, 1.0, 1.0, -1.0)?;
    let cfg = FlowConfig::default();

    let start = genus_init(&grid, 1, &p)?.remove(0);
    let (state, report) = flow_to_critical(&start, &p, &cfg)?;
    println!(
        "converged {} after {} steps, gradient {:.2e}, Nehari {:.1e}",
        report.converged, report.iterations, report.final_grad_norm, report.final_nehari
    );

    let lower = nehari_inf_value(&p)?;
    let upper = limit_profile(&grid, &p, &cfg)?.value;
    println!("{lower:.4} < E = {:.4} < J = {upper:.4}", state.energy());
    println!("Pohozaev residual {:.3e}", pohozaev_residual(&state, &p)?);
    Ok(())
}
