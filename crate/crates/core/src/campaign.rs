//! Parameter sweeps over a base scenario.
//!
//! A grid file is TOML:
//!
//! ```toml
//! topology = 3            # or: scenario = "path/to/scenario.toml"
//! runs = 5
//!
//! [axes]
//! rain_mmh = [0, 15, 30]
//! dl_rate_mbps = [60, 100, 140]
//! ```
//!
//! Every combination of axis values is one grid point. Output goes to
//! `<out>/<point>/run_<i>/` plus an `index.csv` at the top level.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_with_seed, EngineError, RunOutput};
use crate::mac_scheduler::MuxMode;
use crate::metrics::{write_bundle, write_csv, MetricsError, SummaryRow};
use crate::scenario::{builtin_topology, Scenario, ScenarioError};

pub const INDEX_FILE: &str = "index.csv";
pub const INDEX_HEADER: &[&str] = &[
    "point", "run", "seed", "dir", "topology", "rain_mmh", "dl_rate_mbps", "ul_factor", "pattern", "mux", "n_s_odd",
];

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("grid file {path}: {message}")]
    Grid { path: String, message: String },
}

impl CampaignError {
    /// True for breaches found while running, as opposed to bad input.
    pub fn is_invariant(&self) -> bool {
        matches!(self, CampaignError::Engine(EngineError::Invariant(_)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Axes {
    pub topology: Vec<u8>,
    pub rain_mmh: Vec<f64>,
    pub dl_rate_mbps: Vec<f64>,
    pub ul_factor: Vec<f64>,
    pub pattern: Vec<String>,
    pub mux: Vec<MuxMode>,
    pub n_s_odd: Vec<u8>,
}

/// One combination of axis values. Unset fields keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub topology: Option<u8>,
    pub rain_mmh: Option<f64>,
    pub dl_rate_mbps: Option<f64>,
    pub ul_factor: Option<f64>,
    pub pattern: Option<String>,
    pub mux: Option<MuxMode>,
    pub n_s_odd: Option<u8>,
}

fn mux_name(m: MuxMode) -> &'static str {
    match m {
        MuxMode::Tdm => "tdm",
        MuxMode::Fdm => "fdm",
    }
}

impl GridPoint {
    /// Directory-safe name, e.g. `topo3_rain15_dl60`. `base` for the empty point.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.topology {
            parts.push(format!("topo{t}"));
        }
        if let Some(r) = self.rain_mmh {
            parts.push(format!("rain{r}"));
        }
        if let Some(r) = self.dl_rate_mbps {
            parts.push(format!("dl{r}"));
        }
        if let Some(f) = self.ul_factor {
            parts.push(format!("ulf{f}"));
        }
        if let Some(p) = &self.pattern {
            parts.push(p.clone());
        }
        if let Some(m) = self.mux {
            parts.push(mux_name(m).to_string());
        }
        if let Some(n) = self.n_s_odd {
            parts.push(format!("ns{n}"));
        }
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join("_")
        }
    }

    /// The base scenario with this point's overrides. A topology override
    /// replaces nodes and flows but keeps every other section of `base`.
    pub fn apply(&self, base: &Scenario) -> Result<Scenario, ScenarioError> {
        let mut s = base.clone();
        if let Some(k) = self.topology {
            let t = builtin_topology(k)?;
            s.nodes = t.nodes;
            s.flows = t.flows;
            s.name = t.name;
        }
        if let Some(r) = self.rain_mmh {
            s.channel.rain_rate_mmh = r;
        }
        if let Some(r) = self.dl_rate_mbps {
            s.traffic.dl_rate_bps = r * 1e6;
        }
        if let Some(f) = self.ul_factor {
            s.traffic.ul_rate_factor = f;
        }
        if let Some(p) = &self.pattern {
            s.frame.slot_pattern = p.clone();
        }
        if let Some(m) = self.mux {
            s.mux.mode = m;
        }
        if let Some(n) = self.n_s_odd {
            s.mux.n_s_odd = n;
        }
        s.validate()?;
        Ok(s)
    }
}

impl Axes {
    /// Cartesian product in declaration order, last axis fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut pts = vec![GridPoint::default()];
        fn expand<V: Clone>(pts: Vec<GridPoint>, vals: &[V], set: impl Fn(&mut GridPoint, V)) -> Vec<GridPoint> {
            if vals.is_empty() {
                return pts;
            }
            pts.into_iter()
                .flat_map(|p| {
                    vals.iter().map(|v| {
                        let mut q = p.clone();
                        set(&mut q, v.clone());
                        q
                    }).collect::<Vec<_>>()
                })
                .collect()
        }
        pts = expand(pts, &self.topology, |p, v| p.topology = Some(v));
        pts = expand(pts, &self.rain_mmh, |p, v| p.rain_mmh = Some(v));
        pts = expand(pts, &self.dl_rate_mbps, |p, v| p.dl_rate_mbps = Some(v));
        pts = expand(pts, &self.ul_factor, |p, v| p.ul_factor = Some(v));
        pts = expand(pts, &self.pattern, |p, v| p.pattern = Some(v));
        pts = expand(pts, &self.mux, |p, v| p.mux = Some(v));
        pts = expand(pts, &self.n_s_odd, |p, v| p.n_s_odd = Some(v));
        pts
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    scenario: Option<PathBuf>,
    topology: Option<u8>,
    runs: Option<u32>,
    #[serde(default)]
    axes: Axes,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub base: Scenario,
    pub points: Vec<GridPoint>,
    pub runs: u32,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `base ⊕ splitmix64(fnv1a(label) ⊕ run)`.
pub fn derive_seed(base: u64, point: &GridPoint, run: u32) -> u64 {
    base ^ splitmix64(fnv1a(point.label().as_bytes()) ^ run as u64)
}

/// Result of one (point, run) pair.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: GridPoint,
    pub run: u32,
    pub seed: u64,
    pub summary: Vec<SummaryRow>,
    pub invariants_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
struct IndexRow<'a> {
    point: String,
    run: u32,
    seed: u64,
    dir: String,
    topology: Option<u8>,
    rain_mmh: Option<f64>,
    dl_rate_mbps: Option<f64>,
    ul_factor: Option<f64>,
    pattern: Option<&'a str>,
    mux: Option<&'static str>,
    n_s_odd: Option<u8>,
}

impl Campaign {
    pub fn new(base: Scenario, points: Vec<GridPoint>, runs: u32) -> Result<Self, CampaignError> {
        if points.is_empty() || runs == 0 {
            return Err(ScenarioError::Invalid("campaign grid is empty".into()).into());
        }
        Ok(Self { base, points, runs })
    }

    /// Loads a grid file. A relative `scenario` path is taken relative to the grid file.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let grid_err = |message: String| CampaignError::Grid { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| grid_err(e.to_string()))?;
        let g: GridFile = toml::from_str(&text).map_err(|e| grid_err(e.to_string()))?;
        let base = match (&g.scenario, g.topology) {
            (Some(_), Some(_)) => return Err(grid_err("set either `scenario` or `topology`, not both".into())),
            (Some(p), None) => Scenario::load(&path.parent().unwrap_or(Path::new(".")).join(p))?,
            (None, Some(k)) => builtin_topology(k)?,
            (None, None) => return Err(grid_err("missing `scenario` or `topology`".into())),
        };
        let runs = g.runs.unwrap_or(base.simulation.run_count);
        Self::new(base, g.axes.points(), runs)
    }

    /// All (point, run) jobs in output order.
    pub fn jobs(&self) -> Vec<(usize, u32)> {
        (0..self.points.len()).flat_map(|p| (0..self.runs).map(move |r| (p, r))).collect()
    }

    /// Runs one job in memory.
    pub fn run_job(&self, point: usize, run: u32) -> Result<(Scenario, RunOutput), CampaignError> {
        let p = &self.points[point];
        let s = p.apply(&self.base)?;
        let seed = derive_seed(s.simulation.seed, p, run);
        let out = run_with_seed(&s, seed)?;
        Ok((s, out))
    }

    /// Runs every job in parallel. With `out_dir`, each run writes its bundle
    /// and an index is written at the end.
    pub fn execute(&self, out_dir: Option<&Path>) -> Result<Vec<RunResult>, CampaignError> {
        let results = self
            .jobs()
            .into_par_iter()
            .map(|(pi, run)| {
                let (_, out) = self.run_job(pi, run)?;
                let point = self.points[pi].clone();
                let summary = match out_dir {
                    Some(dir) => write_bundle(&run_dir(dir, &point, run), &out, run)?,
                    None => out.summary(run),
                };
                Ok(RunResult { point, run, seed: out.seed, summary, invariants_ok: out.invariants.all_ok() })
            })
            .collect::<Result<Vec<_>, CampaignError>>()?;
        if let Some(dir) = out_dir {
            let rows: Vec<IndexRow> = results
                .iter()
                .map(|r| IndexRow {
                    point: r.point.label(),
                    run: r.run,
                    seed: r.seed,
                    dir: run_dir(Path::new(""), &r.point, r.run).display().to_string(),
                    topology: r.point.topology,
                    rain_mmh: r.point.rain_mmh,
                    dl_rate_mbps: r.point.dl_rate_mbps,
                    ul_factor: r.point.ul_factor,
                    pattern: r.point.pattern.as_deref(),
                    mux: r.point.mux.map(mux_name),
                    n_s_odd: r.point.n_s_odd,
                })
                .collect();
            write_csv(&dir.join(INDEX_FILE), INDEX_HEADER, &rows)?;
        }
        Ok(results)
    }
}

pub fn run_dir(root: &Path, point: &GridPoint, run: u32) -> PathBuf {
    root.join(point.label()).join(format!("run_{run}"))
}
