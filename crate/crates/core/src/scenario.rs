//! Scenario files (TOML) and the built-in topologies.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::UpaConfig;
use crate::channel::{ChannelParams, PathLossModel, Polarization, RainCoefficientTable, DEEP_NULL_FLOOR};
use crate::mac_scheduler::{ExtraControl, MultiplexConfig, MuxMode, Numerology, SlotPattern};
use crate::phy_link::{RadioConfig, RateMap};
use crate::topology::{LinkDirection, NodeId, Role, Topology};
use crate::traffic::TrafficSpec;
use crate::tunnel_stack::{Flow, FlowId, FlowKind, FlowTable, Teid, DEFAULT_QUEUE_BYTES};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DONOR_HEIGHT_M: f64 = 20.0;
pub const DEFAULT_NODE_HEIGHT_M: f64 = 10.0;
pub const DEFAULT_NODE_VELOCITY: [f64; 3] = [5.0, 0.0, 0.0];
const TEID_BASE: u32 = 0x1000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub duration_s: f64,
    pub seed: u64,
    pub run_count: u32,
    /// Leading fraction of the run excluded from PDR and latency.
    pub warmup_fraction: f64,
    /// Abort on invariant breach.
    pub strict: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { duration_s: 2.0, seed: 1, run_count: 50, warmup_fraction: 0.1, strict: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub carrier_freq_ghz: f64,
    pub reflection_coeff: f64,
    pub rain_rate_mmh: f64,
    pub polarization: Polarization,
    pub model: PathLossModel,
    /// Alternative rain coefficient file; the bundled table is used otherwise.
    pub rain_table: Option<PathBuf>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let p = ChannelParams::<f64>::default();
        Self {
            carrier_freq_ghz: p.carrier_freq_ghz,
            reflection_coeff: p.reflection_coeff,
            rain_rate_mmh: p.rain_rate_mmh,
            polarization: p.polarization,
            model: p.model,
            rain_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        let r = RadioConfig::<f64>::default();
        Self { tx_power_dbm: r.tx_power_dbm, noise_figure_db: r.noise_figure_db, bandwidth_hz: r.bandwidth_hz }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AntennaSection {
    pub n_rows: usize,
    pub n_cols: usize,
    pub element_spacing_wavelengths: f64,
    pub element_max_gain_dbi: f64,
    /// DU panels (and donors) face this azimuth. MT panels face the parent.
    pub du_boresight_azimuth_deg: f64,
}

impl Default for AntennaSection {
    fn default() -> Self {
        let u = UpaConfig::<f64>::default();
        Self {
            n_rows: u.n_rows,
            n_cols: u.n_cols,
            element_spacing_wavelengths: u.element_spacing_wavelengths,
            element_max_gain_dbi: u.element_max_gain_dbi,
            du_boresight_azimuth_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub numerology: u8,
    pub slot_pattern: String,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self { numerology: 3, slot_pattern: "4DS2U".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuxSection {
    pub mode: MuxMode,
    pub n_s_odd: u8,
    pub du_bandwidth_fraction: f64,
    pub extra_control: Option<ExtraControl>,
}

impl Default for MuxSection {
    fn default() -> Self {
        let m = MultiplexConfig::default();
        Self {
            mode: m.mode,
            n_s_odd: m.n_s_odd,
            du_bandwidth_fraction: m.du_bandwidth_fraction,
            extra_control: m.extra_control,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSection {
    pub se_max_bps_hz: f64,
    pub se_min_sinr_db: f64,
}

impl Default for RateSection {
    fn default() -> Self {
        let r = RateMap::<f64>::default();
        Self { se_max_bps_hz: r.se_max_bps_hz, se_min_sinr_db: r.se_min_sinr_db }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueSection {
    pub max_bytes: u64,
}

impl Default for QueueSection {
    fn default() -> Self {
        Self { max_bytes: DEFAULT_QUEUE_BYTES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub role: Role,
    /// Horizontal position `[x, y]` in meters.
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

impl NodeSpec {
    pub fn height(&self) -> f64 {
        self.height_m.unwrap_or(match self.role {
            Role::Donor => DEFAULT_DONOR_HEIGHT_M,
            Role::Node => DEFAULT_NODE_HEIGHT_M,
        })
    }

    /// Donors are fixed coastal sites; IAB-nodes sail at the default speed.
    pub fn velocity(&self) -> [f64; 3] {
        self.velocity.unwrap_or(match self.role {
            Role::Donor => [0.0; 3],
            Role::Node => DEFAULT_NODE_VELOCITY,
        })
    }
}

/// An explicit flow. Without any, every IAB-node gets one DL and one UL flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    /// IAB-node terminating the flow on the LAN side.
    pub node: String,
    pub direction: LinkDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FlowKind>,
    /// Defaults to the DL rate, or DL rate times the UL factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub radio: RadioSection,
    #[serde(default)]
    pub antenna: AntennaSection,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub mux: MuxSection,
    #[serde(default)]
    pub rate: RateSection,
    #[serde(default)]
    pub queues: QueueSection,
    #[serde(default)]
    pub traffic: TrafficSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<FlowSpec>,
    pub nodes: Vec<NodeSpec>,
}

/// Flow table plus the offered rate of each flow, in flow order.
#[derive(Debug, Clone)]
pub struct FlowSet {
    pub table: FlowTable,
    pub rates_bps: Vec<f64>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string_pretty(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let text = self.to_toml_string()?;
        std::fs::write(path, text).map_err(|e| ScenarioError::Io { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let sim = &self.simulation;
        if !(sim.duration_s.is_finite() && sim.duration_s > 0.0) {
            return Err(invalid(format!("duration_s must be positive, got {}", sim.duration_s)));
        }
        if !(0.0..1.0).contains(&sim.warmup_fraction) {
            return Err(invalid(format!("warmup_fraction {} outside [0, 1)", sim.warmup_fraction)));
        }
        if sim.run_count == 0 {
            return Err(invalid("run_count must be at least 1"));
        }
        self.channel_params().validate().map_err(|e| invalid(e.to_string()))?;
        self.rain_table()?;
        let r = &self.radio;
        if !(r.bandwidth_hz.is_finite() && r.bandwidth_hz > 0.0) {
            return Err(invalid(format!("bandwidth_hz must be positive, got {}", r.bandwidth_hz)));
        }
        if !(r.tx_power_dbm.is_finite() && r.noise_figure_db.is_finite()) {
            return Err(invalid("radio parameters must be finite"));
        }
        self.du_panel().validate().map_err(|e| invalid(e.to_string()))?;
        if self.frame.numerology > 6 {
            return Err(invalid(format!("numerology {} outside [0, 6]", self.frame.numerology)));
        }
        self.slot_pattern()?;
        self.mux().validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.rate.se_max_bps_hz > 0.0 && self.rate.se_min_sinr_db.is_finite()) {
            return Err(invalid("rate map needs a positive SE cap and a finite cutoff"));
        }
        self.traffic.validate().map_err(|e| invalid(e.to_string()))?;
        for n in &self.nodes {
            let all = [n.position[0], n.position[1], n.height()].into_iter().chain(n.velocity());
            if all.into_iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("node `{}` has non-finite coordinates", n.name)));
            }
            if !(n.height() > 0.0) {
                return Err(invalid(format!("node `{}` height must be positive", n.name)));
            }
        }
        let topo = self.topology()?;
        self.flow_set(&topo)?;
        Ok(())
    }

    fn name_index(&self) -> Result<HashMap<&str, NodeId>, ScenarioError> {
        let mut idx = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if idx.insert(n.name.as_str(), NodeId(i as u16)).is_some() {
                return Err(invalid(format!("duplicate node name `{}`", n.name)));
            }
        }
        Ok(idx)
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(|i| NodeId(i as u16))
    }

    pub fn topology(&self) -> Result<Topology, ScenarioError> {
        if self.nodes.is_empty() {
            return Err(invalid("scenario has no nodes"));
        }
        let idx = self.name_index()?;
        let roles = self.nodes.iter().map(|n| n.role).collect();
        let mut parents = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            parents.push(match &n.parent {
                None => None,
                Some(p) => Some(
                    *idx.get(p.as_str())
                        .ok_or_else(|| invalid(format!("node `{}` references unknown parent `{p}`", n.name)))?,
                ),
            });
        }
        Topology::new(roles, parents).map_err(|e| {
            let name = |id: NodeId| self.nodes.get(id.index()).map_or("?", |n| n.name.as_str()).to_string();
            let detail = match &e {
                crate::topology::TopologyError::SelfParent(id)
                | crate::topology::TopologyError::DonorWithParent(id)
                | crate::topology::TopologyError::Orphan(id)
                | crate::topology::TopologyError::Cycle(id) => format!(" (node `{}`)", name(*id)),
                _ => String::new(),
            };
            invalid(format!("{e}{detail}"))
        })
    }

    pub fn initial_positions(&self) -> Vec<[f64; 3]> {
        self.nodes.iter().map(|n| [n.position[0], n.position[1], n.height()]).collect()
    }

    pub fn velocities(&self) -> Vec<[f64; 3]> {
        self.nodes.iter().map(NodeSpec::velocity).collect()
    }

    pub fn channel_params(&self) -> ChannelParams<f64> {
        let c = &self.channel;
        ChannelParams {
            carrier_freq_ghz: c.carrier_freq_ghz,
            reflection_coeff: c.reflection_coeff,
            rain_rate_mmh: c.rain_rate_mmh,
            polarization: c.polarization,
            model: c.model,
            null_floor: DEEP_NULL_FLOOR,
        }
    }

    pub fn rain_table(&self) -> Result<RainCoefficientTable<f64>, ScenarioError> {
        match &self.channel.rain_table {
            None => Ok(RainCoefficientTable::bundled()),
            Some(p) => RainCoefficientTable::load(p).map_err(|e| invalid(e.to_string())),
        }
    }

    pub fn radio(&self) -> RadioConfig<f64> {
        RadioConfig {
            tx_power_dbm: self.radio.tx_power_dbm,
            noise_figure_db: self.radio.noise_figure_db,
            bandwidth_hz: self.radio.bandwidth_hz,
        }
    }

    pub fn du_panel(&self) -> UpaConfig<f64> {
        let a = &self.antenna;
        UpaConfig {
            n_rows: a.n_rows,
            n_cols: a.n_cols,
            element_spacing_wavelengths: a.element_spacing_wavelengths,
            element_max_gain_dbi: a.element_max_gain_dbi,
            boresight_azimuth_deg: a.du_boresight_azimuth_deg,
            boresight_elevation_deg: 0.0,
        }
    }

    pub fn numerology(&self) -> Numerology {
        Numerology { index: self.frame.numerology }
    }

    pub fn slot_pattern(&self) -> Result<SlotPattern, ScenarioError> {
        SlotPattern::parse(&self.frame.slot_pattern).map_err(|e| invalid(e.to_string()))
    }

    pub fn mux(&self) -> MultiplexConfig {
        MultiplexConfig {
            mode: self.mux.mode,
            n_s_odd: self.mux.n_s_odd,
            du_bandwidth_fraction: self.mux.du_bandwidth_fraction,
            extra_control: self.mux.extra_control,
        }
    }

    pub fn rate_map(&self) -> RateMap<f64> {
        RateMap { se_max_bps_hz: self.rate.se_max_bps_hz, se_min_sinr_db: self.rate.se_min_sinr_db }
    }

    pub fn slot_count(&self) -> u64 {
        (self.simulation.duration_s / self.numerology().slot_duration_s()).round() as u64
    }

    /// Flows in id order. Default flows run between each IAB-node and its
    /// donor: DL first, then UL, in node order.
    pub fn flow_set(&self, topo: &Topology) -> Result<FlowSet, ScenarioError> {
        let t = &self.traffic;
        let mut specs: Vec<(NodeId, LinkDirection, FlowKind, f64)> = Vec::new();
        if self.flows.is_empty() {
            for n in topo.nodes().filter(|&n| topo.role(n) == Role::Node) {
                specs.push((n, LinkDirection::Downlink, t.flow_kind, t.dl_rate_bps));
                specs.push((n, LinkDirection::Uplink, t.flow_kind, t.ul_rate_bps()));
            }
        } else {
            for f in &self.flows {
                let n = self.node_id(&f.node).ok_or_else(|| invalid(format!("flow references unknown node `{}`", f.node)))?;
                if topo.role(n) != Role::Node {
                    return Err(invalid(format!("flow endpoint `{}` must be an IAB-node", f.node)));
                }
                let rate = f.rate_bps.unwrap_or(match f.direction {
                    LinkDirection::Downlink => t.dl_rate_bps,
                    LinkDirection::Uplink => t.ul_rate_bps(),
                });
                if !(rate.is_finite() && rate >= 0.0) {
                    return Err(invalid(format!("flow rate {rate} must be finite and non-negative")));
                }
                specs.push((n, f.direction, f.kind.unwrap_or(t.flow_kind), rate));
            }
        }
        let mut flows = Vec::with_capacity(specs.len());
        let mut rates = Vec::with_capacity(specs.len());
        for (i, (n, dir, kind, rate)) in specs.into_iter().enumerate() {
            let donor = topo.donor_of(n);
            let (src, dst) = match dir {
                LinkDirection::Downlink => (donor, n),
                LinkDirection::Uplink => (n, donor),
            };
            flows.push(Flow { id: FlowId(i as u32), src, dst, direction: dir, teid: Teid(TEID_BASE + i as u32), kind });
            rates.push(rate);
        }
        let table = FlowTable::new(flows).map_err(|e| invalid(e.to_string()))?;
        Ok(FlowSet { table, rates_bps: rates })
    }
}

/// IAB-node sites shared by all built-in topologies.
pub const NODE_SITES: [[f64; 2]; 8] = [
    [400.0, 1000.0],
    [800.0, 1000.0],
    [1200.0, 1000.0],
    [100.0, 2000.0],
    [500.0, 2000.0],
    [900.0, 2000.0],
    [400.0, 3500.0],
    [900.0, 3500.0],
];
pub const DONOR_SITE: [f64; 2] = [800.0, 0.0];
pub const SECOND_DONOR_SITE: [f64; 2] = [0.0, 0.0];

/// Parent of each of `n1..n8`, by name.
fn builtin_parents(k: u8) -> Option<[&'static str; 8]> {
    Some(match k {
        1 => ["donor"; 8],
        2 => ["donor", "donor", "donor", "n1", "n2", "n3", "n1", "n2"],
        3 => ["donor", "donor", "donor", "n1", "n2", "n3", "n5", "n6"],
        4 => ["donor-b", "donor", "donor", "donor-b", "n1", "n3", "n1", "n6"],
        _ => return None,
    })
}

/// One of the four reference topologies with default parameters.
pub fn builtin_topology(k: u8) -> Result<Scenario, ScenarioError> {
    let parents = builtin_parents(k).ok_or_else(|| invalid(format!("built-in topology {k} does not exist (1..=4)")))?;
    let donor = |name: &str, site: [f64; 2]| NodeSpec {
        name: name.into(),
        role: Role::Donor,
        position: site,
        height_m: None,
        velocity: None,
        parent: None,
    };
    let mut nodes = vec![donor("donor", DONOR_SITE)];
    if k == 4 {
        nodes.push(donor("donor-b", SECOND_DONOR_SITE));
    }
    for (i, (site, parent)) in NODE_SITES.iter().zip(parents).enumerate() {
        nodes.push(NodeSpec {
            name: format!("n{}", i + 1),
            role: Role::Node,
            position: *site,
            height_m: None,
            velocity: None,
            parent: Some(parent.into()),
        });
    }
    let s = Scenario {
        schema_version: SCHEMA_VERSION,
        name: format!("topology-{k}"),
        simulation: SimulationSection::default(),
        channel: ChannelSection::default(),
        radio: RadioSection::default(),
        antenna: AntennaSection::default(),
        frame: FrameSection::default(),
        mux: MuxSection::default(),
        rate: RateSection::default(),
        queues: QueueSection::default(),
        traffic: TrafficSpec::default(),
        flows: Vec::new(),
        nodes,
    };
    s.validate()?;
    Ok(s)
}
