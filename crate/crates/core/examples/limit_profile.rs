//! The segregated limit: one sign-changing profile whose positive and
//! negative parts carry the two components.

use critsys::flow::{limit_profile, FlowConfig};
use critsys::grid::{build_grid, ReducedGeometry};
use critsys::scalar::SystemParams;

fn main() -> critsys::Result<()> {
    let grid = build_grid(ReducedGeometry::annulus(4, 1.0, 2.0), 512)?;
    for (mu1, mu2) in [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0)] {
        let p = SystemParams::balanced(4, mu1, mu2, -1.0)?;
        let lp = limit_profile(&grid, &p, &FlowConfig::default())?;
        let w = lp.w.values();
        let node = (1..w.len()).find(|&i| w[i - 1] * w[i] < 0.0).map(|i| grid.coords(i)[0]);
        println!("mu = ({mu1}, {mu2}): J = {:.4}, sign change near r = {node:?}", lp.value);
    }
    Ok(())
}
