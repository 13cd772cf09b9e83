//! Run configuration (`key = value` lines), CSV output and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::grid::ReducedGeometry;
use crate::scalar::SystemParams;

/// Raw `key = value` pairs, in key order.
pub type ConfigMap = BTreeMap<String, String>;

const KNOWN_KEYS: &[&str] = &[
    "dim", "mu1", "mu2", "lambda", "alpha", "beta", "geometry", "inner", "outer", "radius", "m", "n", "s_lo",
    "s_hi", "t_lo", "t_hi", "resolution", "step", "max_iters", "grad_tol", "nehari_tol", "monitor_every", "seed",
    "lambdas", "starts", "r_max", "pohozaev_tol", "bl_scales", "bl_u_center", "bl_v_center", "bl_width",
    "probe_epsilon", "probe_samples", "out",
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", no + 1)));
        }
    }
    Ok(map)
}

/// Hex SHA-256 of the canonical `key=value` rendering of a config.
pub fn config_hash(map: &ConfigMap) -> String {
    let mut h = Sha256::new();
    for (k, v) in map {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Fully validated configuration of one CLI run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SystemParams,
    pub geometry: ReducedGeometry,
    pub resolution: usize,
    pub flow: FlowConfig,
    pub lambdas: Vec<f64>,
    pub starts: usize,
    pub r_max: f64,
    pub pohozaev_tol: f64,
    pub bl_scales: Vec<f64>,
    pub bl_u_center: Option<f64>,
    pub bl_v_center: Option<f64>,
    pub bl_width: Option<f64>,
    pub probe_epsilon: f64,
    pub probe_samples: usize,
    pub out: Option<PathBuf>,
    /// The map this was built from, after overrides.
    pub raw: ConfigMap,
}

struct Reader<'a>(&'a ConfigMap);

impl Reader<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.0
            .get(key)
            .map(|s| {
                s.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key}: bad entry {x:?}"))))
                    .collect()
            })
            .transpose()
    }
}

impl RunConfig {
    /// Validates every field; all failures surface as [`Error::Config`].
    pub fn from_map(raw: ConfigMap) -> Result<Self> {
        if let Some(k) = raw.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k}")));
        }
        let r = Reader(&raw);
        let cfg_err = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        let dim: usize = r.or("dim", 4)?;
        let (mu1, mu2, lambda) = (r.or("mu1", 1.0)?, r.or("mu2", 1.0)?, r.or("lambda", -1.0)?);
        let params = match (r.get::<f64>("alpha")?, r.get::<f64>("beta")?) {
            (None, None) => SystemParams::balanced(dim, mu1, mu2, lambda),
            (Some(a), Some(b)) => SystemParams::new(dim, mu1, mu2, lambda, a, b),
            _ => return Err(Error::Config("alpha and beta must be given together".into())),
        }
        .map_err(cfg_err)?;
        let kind: String = r.or("geometry", "annulus".to_string())?;
        let geometry = match kind.as_str() {
            "annulus" => ReducedGeometry::annulus(dim, r.or("inner", 1.0)?, r.or("outer", 2.0)?),
            "ball" => ReducedGeometry::ball(dim, r.or("radius", 1.0)?),
            "biradial" => {
                let m: usize = r.or("m", 2)?;
                let n: usize = r.or("n", dim.saturating_sub(m))?;
                if m + n != dim {
                    return Err(Error::Config(format!("m + n = {} differs from dim = {dim}", m + n)));
                }
                ReducedGeometry::biradial(
                    m,
                    n,
                    (r.or("s_lo", 1.0)?, r.or("s_hi", 2.0)?),
                    (r.or("t_lo", 1.0)?, r.or("t_hi", 2.0)?),
                )
            }
            other => return Err(Error::Config(format!("unknown geometry {other:?}"))),
        };
        geometry.validate().map_err(cfg_err)?;
        let resolution: usize = r.or("resolution", 256)?;
        if resolution < crate::grid::MIN_RESOLUTION {
            return Err(Error::Config(format!("resolution must be at least {}", crate::grid::MIN_RESOLUTION)));
        }
        let d = FlowConfig::default();
        let ball = matches!(geometry, ReducedGeometry::RadialBall { .. });
        let flow = FlowConfig {
            step: r.or("step", d.step)?,
            max_iters: r.or("max_iters", d.max_iters)?,
            grad_tol: r.or("grad_tol", d.grad_tol)?,
            nehari_tol: r.or("nehari_tol", d.nehari_tol)?,
            seed: r.or("seed", d.seed)?,
            monitor_every: r.or("monitor_every", if ball { 50 } else { 0 })?,
        };
        flow.validate().map_err(cfg_err)?;
        let lambdas = r.list("lambdas")?.unwrap_or_else(|| vec![-1.0, -10.0, -100.0, -1000.0]);
        if lambdas.iter().any(|&l| !(l < 0.0)) || lambdas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("lambdas must be negative and strictly decreasing".into()));
        }
        let bl_scales = r.list("bl_scales")?.unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
        if bl_scales.is_empty() || bl_scales.iter().any(|&e| !(e > 0.0)) || bl_scales.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("bl_scales must be positive and strictly decreasing".into()));
        }
        let starts: usize = r.or("starts", 3)?;
        if starts == 0 {
            return Err(Error::Config("starts must be at least 1".into()));
        }
        let r_max: f64 = r.or("r_max", crate::scalar::DEFAULT_R_MAX)?;
        let pohozaev_tol: f64 = r.or("pohozaev_tol", 5e-3)?;
        let probe_epsilon: f64 = r.or("probe_epsilon", 0.5)?;
        let probe_samples: usize = r.or("probe_samples", 100_000)?;
        if !(r_max > 1.0 && pohozaev_tol > 0.0 && probe_epsilon > 0.0 && probe_samples > 0) {
            return Err(Error::Config("r_max > 1 and positive tolerances and sample counts required".into()));
        }
        Ok(Self {
            params,
            geometry,
            resolution,
            flow,
            lambdas,
            starts,
            r_max,
            pohozaev_tol,
            bl_scales,
            bl_u_center: r.get("bl_u_center")?,
            bl_v_center: r.get("bl_v_center")?,
            bl_width: r.get("bl_width")?,
            probe_epsilon,
            probe_samples,
            out: r.get::<String>("out")?.map(PathBuf::from),
            raw,
        })
    }
}

/// Writes a CSV with numbers in `{:.12e}` so that reruns are byte-identical.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{x:.12e}").unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// One checked condition of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Summary written next to the artifacts of every run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ConfigMap,
    pub config_sha256: String,
    pub seed: u64,
    pub resolution: Option<usize>,
    pub assertions: Vec<Assertion>,
    pub outputs: Vec<String>,
    pub report: serde_json::Value,
    pub error: Option<String>,
}

impl Manifest {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.assertions.iter().all(|a| a.passed)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_garbage() {
        let m = parse_config("# head\ndim = 4\n\nlambda=-2 # inline\n").unwrap();
        assert_eq!(m["dim"], "4");
        assert_eq!(m["lambda"], "-2");
        assert!(parse_config("dim 4").is_err());
        assert!(parse_config("dim=4\ndim=5").is_err());
    }

    #[test]
    fn hash_is_order_free_and_sensitive() {
        let a = parse_config("dim=4\nlambda=-1").unwrap();
        let b = parse_config("lambda=-1\ndim=4").unwrap();
        let c = parse_config("lambda=-2\ndim=4").unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn run_config_validation() {
        let ok = RunConfig::from_map(parse_config("dim=4\ngeometry=ball\nradius=2").unwrap()).unwrap();
        assert_eq!(ok.flow.monitor_every, 50);
        assert_eq!(ok.lambdas.len(), 4);
        for bad in [
            "dim=2",
            "alpha=1.5\nbeta=1.5",
            "alpha=2",
            "wat=1",
            "geometry=torus",
            "inner=2\nouter=1",
            "lambdas=-1,-0.5",
            "resolution=4",
            "step=0",
            "dim=four",
        ] {
            let r = RunConfig::from_map(parse_config(bad).unwrap());
            assert!(matches!(r, Err(Error::Config(_))), "{bad}: {r:?}");
        }
    }

    #[test]
    fn csv_format_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, &["a", "b"], &[vec![1.0, -0.5]]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1.000000000000e0,-5.000000000000e-1\n");
    }
}
