//! Closed-form constants, energy budgets and synchronized scalings.

use critsys::scalar::{
    critical_exponent, energy_budget, nehari_inf_value, shat_lower_bound, sobolev_constant, sync_roots, OrbitMin,
    SystemParams, DEFAULT_R_MAX,
};

fn main() -> critsys::Result<()> {
    for n in 3..=8 {
        println!("N={n}: 2* = {:.6}, S = {:.6}", critical_exponent(n)?, sobolev_constant(n)?);
    }

    let p = SystemParams::balanced(4, 1.0, 1.0, -1.0)?;
    println!("\ncompetitive N=4: Nehari infimum {:.6}", nehari_inf_value(&p)?);
    println!("coupled quotient bound {:?}", shat_lower_bound(&p)?);
    for k in [1, 2, 4] {
        println!("budget, orbits of size {k}: {:.4}", energy_budget(&p, OrbitMin::Finite(k))?);
    }

    for (lambda, alpha) in [(0.25, 2.0), (2.0, 2.0), (0.5, 1.3)] {
        let n = if alpha == 2.0 { 4 } else { 6 };
        let ts = critical_exponent(n)?;
        let q = SystemParams::new(n, 1.0, 1.5, lambda, alpha, ts - alpha)?;
        let roots = sync_roots(&q, DEFAULT_R_MAX)?;
        println!("\nN={n} lambda={lambda} alpha={alpha}: {} synchronized root(s)", roots.len());
        for r in roots {
            println!("  r = {:.8}, s = {:.8}, t = {:.8}, residuals {:.1e} {:.1e}", r.r, r.s, r.t, r.residual1, r.residual2);
        }
    }
    Ok(())
}
