//! Several nonequivalent solutions from genus-type starts.

use critsys::energy::equiv_distance;
use critsys::flow::{multi_start, FlowConfig};
use critsys::grid::{build_grid, ReducedGeometry};
use critsys::scalar::SystemParams;

fn main() -> critsys::Result<()> {
    let grid = build_grid(ReducedGeometry::annulus(4, 1.0, 2.0), 512)?;
    let p = SystemParams::balanced(4, 1.0, 1.0, -1.0)?;
    let found = multi_start(&grid, &p, 3, &FlowConfig::default())?;
    for (i, s) in found.solutions.iter().enumerate() {
        let min = s.state.u().values().iter().chain(s.state.v().values()).cloned().fold(f64::INFINITY, f64::min);
        println!("#{i} from {:?}: E = {:.4}, min value {min:.2e}", s.start, s.state.energy());
    }
    let n = found.solutions.len();
    for i in 0..n {
        for j in 0..i {
            let d = equiv_distance(&found.solutions[i].state, &found.solutions[j].state);
            println!("distance #{i} to #{j}: {d:.3e}");
        }
    }
    if let Some(msg) = found.diagnostic {
        println!("{msg}");
    }
    Ok(())
}
