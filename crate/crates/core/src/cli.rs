//! Command-line front end. Every experiment is a subcommand reading a
//! `key = value` config; artifacts land in the output directory.
//!
//! Exit codes: 0 when every assertion holds, 1 on a failed assertion or a
//! solver error, 2 on a usage or config error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::diagnostics::{bl_deficit, bl_mixed_inequality_probe, pohozaev_residual, separation_sweep, BlKind};
use crate::energy::{genus_init, PairState};
use crate::error::{Error, Result};
use crate::flow::{flow_to_critical, multi_start, FlowReport};
use crate::grid::{build_grid, make_bump, Field, Grid, ReducedGeometry};
use crate::io::{config_hash, parse_config, write_csv, Assertion, ConfigMap, Manifest, RunConfig};
use crate::scalar::{
    critical_exponent, energy_budget, nehari_inf_value, shat_lower_bound, sobolev_constant, sync_roots, OrbitMin,
};

/// Residual bound for synchronized roots.
const SYNC_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "critsys", version, about = "Solvers and diagnostics for coupled critical elliptic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `critsys-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Extra `key=value` override; repeatable.
    #[arg(short = 'D', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Closed-form constants and energy budgets, as JSON on stdout.
    Constants,
    /// Synchronized scaling roots.
    Sync,
    /// One constrained descent from the first genus start.
    Flow,
    /// Several nonequivalent solutions.
    Multi,
    /// Phase-separation ladder in lambda.
    Sweep,
    /// Boundary residual of a computed solution.
    Pohozaev,
    /// Brezis–Lieb deficits for bubbling sequences and the pointwise probe.
    Bl,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Sync => "sync",
            Command::Flow => "flow",
            Command::Multi => "multi",
            Command::Sweep => "sweep",
            Command::Pohozaev => "pohozaev",
            Command::Bl => "bl",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", json!({ "error": "config", "message": e.to_string() }));
            return 2;
        }
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("critsys-out"));
    let command = cli.command;
    if let Command::Constants = command {
        return match constants(&cfg) {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).unwrap());
                0
            }
            Err(e) => {
                eprintln!("{}", json!({ "error": "config", "message": e.to_string() }));
                2
            }
        };
    }
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("{}", json!({ "error": "io", "message": e.to_string() }));
        return 2;
    }
    let mut manifest = Manifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.raw.clone(),
        config_sha256: config_hash(&cfg.raw),
        seed: cfg.flow.seed,
        resolution: Some(cfg.resolution),
        assertions: Vec::new(),
        outputs: Vec::new(),
        report: Value::Null,
        error: None,
    };
    let result = match command {
        Command::Constants => unreachable!(),
        Command::Sync => cmd_sync(&cfg, &out, &mut manifest),
        Command::Flow => cmd_flow(&cfg, &out, &mut manifest),
        Command::Multi => cmd_multi(&cfg, &out, &mut manifest),
        Command::Sweep => cmd_sweep(&cfg, &out, &mut manifest),
        Command::Pohozaev => cmd_pohozaev(&cfg, &out, &mut manifest),
        Command::Bl => cmd_bl(&cfg, &out, &mut manifest),
    };
    if let Err(e) = &result {
        let kind = error_kind(e);
        manifest.error = Some(e.to_string());
        eprintln!("{}", json!({ "error": kind, "message": e.to_string() }));
    }
    if let Err(e) = manifest.write(&out) {
        eprintln!("{}", json!({ "error": "io", "message": e.to_string() }));
        return 1;
    }
    for a in manifest.assertions.iter().filter(|a| !a.passed) {
        eprintln!("{}", json!({ "error": "assertion", "name": a.name, "detail": a.detail }));
    }
    if manifest.passed() {
        println!("{}: {} assertions passed, artifacts in {}", command.name(), manifest.assertions.len(), out.display());
        0
    } else {
        1
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Numeric(_) => "numeric",
        Error::Projection(_) => "projection",
        Error::Collapse(_) => "collapse",
        Error::Unsupported(_) => "unsupported",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut map: ConfigMap = match &cli.config {
        Some(p) => parse_config(
            &fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        )?,
        None => ConfigMap::new(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        map.insert(k.trim().into(), v.trim().into());
    }
    if let Some(s) = cli.seed {
        map.insert("seed".into(), s.to_string());
    }
    if let Some(r) = cli.resolution {
        map.insert("resolution".into(), r.to_string());
    }
    RunConfig::from_map(map)
}

fn constants(cfg: &RunConfig) -> Result<Value> {
    let p = &cfg.params;
    let mut budgets = serde_json::Map::new();
    for k in [1u64, 2, 4] {
        budgets.insert(k.to_string(), json!(energy_budget(p, OrbitMin::Finite(k))?));
    }
    budgets.insert("inf".into(), json!("inf"));
    let shat = shat_lower_bound(p)?;
    Ok(json!({
        "dim": p.dim,
        "mu1": p.mu1,
        "mu2": p.mu2,
        "lambda": p.lambda,
        "alpha": p.alpha,
        "beta": p.beta,
        "two_star": critical_exponent(p.dim)?,
        "sobolev_constant": sobolev_constant(p.dim)?,
        "nehari_inf_value": if p.lambda < 0.0 { Some(nehari_inf_value(p)?) } else { None },
        "shat_lower_bound": shat,
        "energy_budgets": budgets,
    }))
}

fn cmd_sync(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    m.resolution = None;
    let roots = sync_roots(&cfg.params, cfg.r_max)?;
    let rows: Vec<Vec<f64>> = roots.iter().map(|r| vec![r.r, r.s, r.t, r.residual1, r.residual2]).collect();
    write_csv(&out.join("sync.csv"), &["r", "s", "t", "residual1", "residual2"], &rows)?;
    m.outputs.push("sync.csv".into());
    let worst = roots.iter().map(|r| r.residual1.abs().max(r.residual2.abs())).fold(0.0, f64::max);
    m.assertions.push(Assertion::new("root_residuals", worst <= SYNC_TOL, format!("max residual {worst:.3e}")));
    m.report = json!({ "roots": roots });
    Ok(())
}

fn grid_of(cfg: &RunConfig) -> Result<std::sync::Arc<Grid>> {
    build_grid(cfg.geometry.clone(), cfg.resolution)
}

fn write_fields(out: &Path, name: &str, st: &PairState) -> Result<()> {
    let g = st.grid();
    let (u, v) = (st.u().values(), st.v().values());
    let rows: Vec<Vec<f64>> = (0..g.len())
        .map(|i| {
            let mut row = g.coords(i);
            row.extend([u[i], v[i]]);
            row
        })
        .collect();
    let header: &[&str] = if g.is_radial() { &["r", "u", "v"] } else { &["s", "t", "u", "v"] };
    write_csv(&out.join(name), header, &rows)
}

fn write_trace(out: &Path, rep: &FlowReport) -> Result<()> {
    let rows: Vec<Vec<f64>> = rep
        .energy_trace
        .iter()
        .zip(&rep.grad_norm_trace)
        .enumerate()
        .map(|(i, (e, g))| vec![i as f64, *e, *g])
        .collect();
    write_csv(&out.join("trace.csv"), &["iter", "energy", "gradnorm"], &rows)
}

fn report_summary(rep: &FlowReport) -> Value {
    json!({
        "converged": rep.converged,
        "iterations": rep.iterations,
        "final_energy": rep.final_energy,
        "final_norm_sq": rep.final_norm_sq,
        "final_grad_norm": rep.final_grad_norm,
        "final_nehari": rep.final_nehari,
        "budget_ok": rep.budget_ok,
        "stagnated": rep.stagnated,
        "concentration": rep.concentration_trace,
        "message": rep.message,
    })
}

fn single_flow(cfg: &RunConfig) -> Result<(PairState, FlowReport)> {
    let grid = grid_of(cfg)?;
    let start = genus_init(&grid, 1, &cfg.params)?.remove(0);
    flow_to_critical(&start, &cfg.params, &cfg.flow)
}

fn flow_assertions(m: &mut Manifest, rep: &FlowReport) {
    m.assertions.push(Assertion::new(
        "converged",
        rep.converged,
        format!("gradient norm {:.3e} after {} steps", rep.final_grad_norm, rep.iterations),
    ));
    m.assertions.push(Assertion::new("energy_budget", rep.budget_ok, format!("norm^2 {:.6e}", rep.final_norm_sq)));
}

fn cmd_flow(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let (st, rep) = single_flow(cfg)?;
    write_fields(out, "fields.csv", &st)?;
    write_trace(out, &rep)?;
    m.outputs.extend(["fields.csv".into(), "trace.csv".into()]);
    flow_assertions(m, &rep);
    m.report = report_summary(&rep);
    Ok(())
}

fn cmd_pohozaev(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let (st, rep) = single_flow(cfg)?;
    write_fields(out, "fields.csv", &st)?;
    m.outputs.push("fields.csv".into());
    let res = pohozaev_residual(&st, &cfg.params)?;
    m.assertions.push(Assertion::new("converged", rep.converged, format!("{:?}", rep.message)));
    if matches!(cfg.geometry, ReducedGeometry::RadialAnnulus { .. }) {
        m.assertions.push(Assertion::new(
            "pohozaev_residual",
            res.abs() <= cfg.pohozaev_tol,
            format!("{res:.6e} against {:.1e}", cfg.pohozaev_tol),
        ));
    }
    m.report = json!({ "pohozaev_residual": res, "flow": report_summary(&rep) });
    Ok(())
}

fn cmd_multi(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let grid = grid_of(cfg)?;
    let ms = multi_start(&grid, &cfg.params, cfg.starts, &cfg.flow)?;
    let rows: Vec<Vec<f64>> = ms
        .solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let min = s.state.u().values().iter().chain(s.state.v().values()).cloned().fold(f64::INFINITY, f64::min);
            vec![i as f64, s.state.energy(), s.state.norm_sq(), s.report.final_grad_norm, min]
        })
        .collect();
    write_csv(&out.join("solutions.csv"), &["index", "energy", "norm_sq", "gradnorm", "min_value"], &rows)?;
    m.outputs.push("solutions.csv".into());
    if let Some(best) = ms.solutions.first() {
        write_fields(out, "fields.csv", &best.state)?;
        m.outputs.push("fields.csv".into());
    }
    m.assertions.push(Assertion::new(
        "distinct_solutions",
        ms.solutions.len() >= cfg.starts,
        ms.diagnostic.clone().unwrap_or_else(|| format!("{} found", ms.solutions.len())),
    ));
    let least_min = rows.first().map_or(f64::NAN, |r| r[4]);
    m.assertions.push(Assertion::new(
        "least_energy_nonnegative",
        least_min >= -1e-10,
        format!("minimum nodal value {least_min:.3e}"),
    ));
    m.assertions.push(Assertion::new(
        "energy_budget",
        ms.solutions.iter().all(|s| s.report.budget_ok),
        String::new(),
    ));
    m.report = json!({
        "solutions": ms.solutions.iter().map(|s| json!({
            "start": s.start, "energy": s.state.energy(), "flow": report_summary(&s.report)
        })).collect::<Vec<_>>(),
        "failures": ms.failures.iter().map(|(k, r)| json!({ "start": k, "flow": report_summary(r) })).collect::<Vec<_>>(),
        "diagnostic": ms.diagnostic,
    });
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let grid = grid_of(cfg)?;
    let sw = separation_sweep(&grid, &cfg.params, &cfg.lambdas, &cfg.flow)?;
    let nan = (f64::NAN, f64::NAN);
    let rows: Vec<Vec<f64>> = sw
        .records
        .iter()
        .map(|r| {
            let (a, b) = r.omega1.unwrap_or(nan);
            let (c, d) = r.omega2.unwrap_or(nan);
            vec![r.lambda, r.overlap, r.energy, a, b, c, d]
        })
        .collect();
    write_csv(
        &out.join("sweep.csv"),
        &["lambda", "overlap", "energy", "omega1_lo", "omega1_hi", "omega2_lo", "omega2_hi"],
        &rows,
    )?;
    m.outputs.push("sweep.csv".into());
    if let Some(st) = &sw.final_state {
        write_fields(out, "fields.csv", st)?;
        m.outputs.push("fields.csv".into());
    }
    m.assertions.push(Assertion::new(
        "overlap_decreasing",
        sw.overlap_decreasing,
        format!("final/first {:.3e}", sw.overlap_ratio),
    ));
    m.assertions.push(Assertion::new("all_converged", sw.records.iter().all(|r| r.converged), String::new()));
    m.report = serde_json::to_value(&sw)?;
    Ok(())
}

fn cmd_bl(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> Result<()> {
    let radius = match cfg.geometry {
        ReducedGeometry::RadialBall { radius, .. } => radius,
        _ => return Err(Error::Unsupported("bl needs geometry=ball".into())),
    };
    let grid = grid_of(cfg)?;
    let width = cfg.bl_width.unwrap_or(0.2 * radius);
    let uc = cfg.bl_u_center.unwrap_or(0.5 * radius);
    let vc = cfg.bl_v_center.unwrap_or(0.77 * radius);
    let base = PairState::new(make_bump(&grid, &[uc], width, 1.0)?, make_bump(&grid, &[vc], width, 1.0)?, &cfg.params)?;
    let kinds = [BlKind::Product, BlKind::Power, BlKind::Derivative];
    let mut cols = Vec::new();
    for kind in kinds {
        let d = bl_deficit(kind, &grid, &base, &cfg.params, &cfg.bl_scales)?;
        let decreasing = d.windows(2).all(|w| w[1] < w[0]);
        let ratio = d.last().unwrap() / d[0];
        m.assertions.push(Assertion::new(
            &format!("{kind:?}_decreasing").to_lowercase(),
            decreasing,
            format!("final/first {ratio:.3e}"),
        ));
        cols.push(d);
    }
    let rows: Vec<Vec<f64>> =
        (0..cfg.bl_scales.len()).map(|i| vec![cfg.bl_scales[i], cols[0][i], cols[1][i], cols[2][i]]).collect();
    write_csv(&out.join("deficits.csv"), &["scale", "product", "power", "derivative"], &rows)?;
    m.outputs.push("deficits.csv".into());
    let probe = bl_mixed_inequality_probe(
        cfg.params.alpha,
        cfg.params.beta,
        cfg.probe_epsilon,
        cfg.probe_samples,
        cfg.flow.seed,
    )?;
    m.assertions.push(Assertion::new(
        "mixed_constant_stable",
        probe.stable,
        format!("C = {:.6e}, doubled {:.6e}", probe.c, probe.c_doubled),
    ));
    m.report = json!({ "probe": probe, "deficits": rows });
    Ok(())
}

/// Reads a `fields.csv` written by this tool back into a state.
pub fn read_fields(path: &Path, grid: &std::sync::Arc<Grid>, cfg: &RunConfig) -> Result<PairState> {
    let text = fs::read_to_string(path)?;
    let mut u = Vec::new();
    let mut v = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line
            .split(',')
            .map(|x| x.parse().map_err(|_| Error::Config(format!("bad number {x:?}"))))
            .collect::<Result<_>>()?;
        let n = cols.len();
        if n < 3 {
            return Err(Error::Config("short row in fields file".into()));
        }
        u.push(cols[n - 2]);
        v.push(cols[n - 1]);
    }
    PairState::new(Field::from_values(grid, u)?, Field::from_values(grid, v)?, &cfg.params)
}
