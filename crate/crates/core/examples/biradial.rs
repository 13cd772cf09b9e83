//! Descent on a product domain with O(2) x O(2) symmetry, reduced to the
//! rectangle of radii (s, t).

use critsys::energy::genus_init;
use critsys::flow::{flow_to_critical, FlowConfig};
use critsys::grid::{build_grid, ReducedGeometry};
use critsys::scalar::SystemParams;

fn main() -> critsys::Result<()> {
    let grid = build_grid(ReducedGeometry::biradial(2, 2, (1.0, 2.0), (1.0, 2.0)), 48)?;
    let p = SystemParams::balanced(4, 1.0, 1.0, -0.5)?;
    let start = genus_init(&grid, 1, &p)?.remove(0);
    let (st, rep) = flow_to_critical(&start, &p, &FlowConfig::default())?;
    println!(
        "converged {} in {} steps: E = {:.4}, gradient {:.2e}",
        rep.converged, rep.iterations, st.energy(), rep.final_grad_norm
    );
    Ok(())
}
