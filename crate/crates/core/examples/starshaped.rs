//! On a ball the descent cannot settle: mass concentrates at the centre until
//! the mesh scale, while the same flow converges on an annulus.

use critsys::diagnostics::concentration_function;
use critsys::energy::genus_init;
use critsys::flow::{flow_to_critical, FlowConfig};
use critsys::grid::{build_grid, ReducedGeometry};
use critsys::scalar::SystemParams;

fn main() -> critsys::Result<()> {
    let p = SystemParams::balanced(4, 1.0, 1.0, -1.0)?;
    let cfg = FlowConfig { monitor_every: 50, ..FlowConfig::default() };

    let ball = build_grid(ReducedGeometry::ball(4, 1.0), 512)?;
    let start = genus_init(&ball, 1, &p)?.remove(0);
    let (_, rep) = flow_to_critical(&start, &p, &cfg)?;
    println!("ball: converged {}, {}", rep.converged, rep.message.as_deref().unwrap_or(""));
    for s in &rep.concentration_trace {
        println!("  iteration {:>5}: epsilon {:.4e}", s.iteration, s.epsilon);
    }

    let annulus = build_grid(ReducedGeometry::annulus(4, 1.0, 2.0), 512)?;
    let start = genus_init(&annulus, 1, &p)?.remove(0);
    let (st, rep) = flow_to_critical(&start, &p, &cfg)?;
    let total = concentration_function(&st, &p, 1e-12)?.total_mass;
    let c = concentration_function(&st, &p, 0.5 * total)?;
    println!("annulus: converged {}, half-mass radius {:.4}", rep.converged, c.epsilon);
    Ok(())
}
