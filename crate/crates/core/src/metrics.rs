//! CSV tables and run summaries.
//!
//! `summarize` works on the same rows that are written to `links.csv` and
//! `packets.csv`, so summaries can be rebuilt from saved output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RunOutput;
use crate::topology::LinkDirection;
use crate::tunnel_stack::Outcome;

pub const LINKS_FILE: &str = "links.csv";
pub const PACKETS_FILE: &str = "packets.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const LINKS_HEADER: &[&str] = &[
    "slot",
    "time_s",
    "direction",
    "tx",
    "rx",
    "tx_layer",
    "distance_m",
    "pl_db",
    "rain_db",
    "g_tx_db",
    "g_rx_db",
    "tx_beam",
    "rx_beam",
    "rx_power_dbm",
    "noise_dbm",
    "interference_dbm",
    "snr_db",
    "sinr_db",
    "n_symbols",
    "granted_bits",
    "deep_null",
];

pub const PACKETS_HEADER: &[&str] = &[
    "pkt_id",
    "flow_id",
    "direction",
    "src",
    "dst",
    "size_bytes",
    "created_slot",
    "created_at_s",
    "delivered_slot",
    "delivered_at_s",
    "outcome",
    "hop_trace",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "run",
    "seed",
    "scope",
    "direction",
    "flow_id",
    "generated",
    "delivered",
    "dropped_overflow",
    "dropped_no_route",
    "in_flight",
    "pdr",
    "latency_min_ms",
    "latency_p25_ms",
    "latency_p50_ms",
    "latency_p75_ms",
    "latency_max_ms",
    "offered_bits",
    "carried_bits",
    "link_samples",
    "snr_min_db",
    "snr_p25_db",
    "snr_p50_db",
    "snr_p75_db",
    "snr_max_db",
    "interference_p25_dbm",
    "interference_p50_dbm",
    "interference_p75_dbm",
    "interference_none_share",
    "sinr_min_db",
    "sinr_p25_db",
    "sinr_p50_db",
    "sinr_p75_db",
    "sinr_max_db",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{path}: header mismatch, expected {expected:?}, found {found:?}")]
    Header { path: String, expected: Vec<String>, found: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub slot: u64,
    pub time_s: f64,
    pub direction: LinkDirection,
    pub tx: u16,
    pub rx: u16,
    pub tx_layer: u8,
    pub distance_m: f64,
    pub pl_db: f64,
    pub rain_db: f64,
    pub g_tx_db: f64,
    pub g_rx_db: f64,
    pub tx_beam: usize,
    pub rx_beam: usize,
    pub rx_power_dbm: f64,
    pub noise_dbm: f64,
    pub interference_dbm: Option<f64>,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub n_symbols: u8,
    pub granted_bits: u64,
    pub deep_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRow {
    pub pkt_id: u64,
    pub flow_id: u32,
    pub direction: LinkDirection,
    pub src: u16,
    pub dst: u16,
    pub size_bytes: u32,
    pub created_slot: u64,
    pub created_at_s: f64,
    pub delivered_slot: Option<u64>,
    pub delivered_at_s: Option<f64>,
    pub outcome: Outcome,
    /// Node ids separated by `>`.
    pub hop_trace: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Direction,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: u32,
    pub seed: u64,
    pub scope: Scope,
    pub direction: LinkDirection,
    pub flow_id: Option<u32>,
    pub generated: u64,
    pub delivered: u64,
    pub dropped_overflow: u64,
    pub dropped_no_route: u64,
    pub in_flight: u64,
    pub pdr: Option<f64>,
    pub latency_min_ms: Option<f64>,
    pub latency_p25_ms: Option<f64>,
    pub latency_p50_ms: Option<f64>,
    pub latency_p75_ms: Option<f64>,
    pub latency_max_ms: Option<f64>,
    pub offered_bits: u64,
    pub carried_bits: u64,
    pub link_samples: u64,
    pub snr_min_db: Option<f64>,
    pub snr_p25_db: Option<f64>,
    pub snr_p50_db: Option<f64>,
    pub snr_p75_db: Option<f64>,
    pub snr_max_db: Option<f64>,
    pub interference_p25_dbm: Option<f64>,
    pub interference_p50_dbm: Option<f64>,
    pub interference_p75_dbm: Option<f64>,
    pub interference_none_share: Option<f64>,
    pub sinr_min_db: Option<f64>,
    pub sinr_p25_db: Option<f64>,
    pub sinr_p50_db: Option<f64>,
    pub sinr_p75_db: Option<f64>,
    pub sinr_max_db: Option<f64>,
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Quartiles {
        min: v[0],
        p25: quantile_sorted(&v, 0.25)?,
        p50: quantile_sorted(&v, 0.5)?,
        p75: quantile_sorted(&v, 0.75)?,
        max: v[v.len() - 1],
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    quartiles(values).map(|q| q.p50)
}

fn hop_trace_string(trace: &[crate::topology::NodeId]) -> String {
    trace.iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(">")
}

impl RunOutput {
    pub fn link_rows(&self) -> Vec<LinkRow> {
        self.links
            .iter()
            .map(|l| {
                let s = &l.sample;
                LinkRow {
                    slot: s.slot_index,
                    time_s: s.slot_index as f64 * self.slot_duration_s,
                    direction: l.direction,
                    tx: s.tx_node.0,
                    rx: s.rx_node.0,
                    tx_layer: l.tx_layer,
                    distance_m: s.distance_m,
                    pl_db: s.pl_db,
                    rain_db: s.rain_db,
                    g_tx_db: s.g_tx_db,
                    g_rx_db: s.g_rx_db,
                    tx_beam: s.tx_beam.codebook_index,
                    rx_beam: s.rx_beam.codebook_index,
                    rx_power_dbm: s.rx_power_dbm,
                    noise_dbm: s.noise_dbm,
                    interference_dbm: s.interference_dbm,
                    snr_db: s.snr_db,
                    sinr_db: s.sinr_db,
                    n_symbols: l.n_symbols,
                    granted_bits: l.granted_bits,
                    deep_null: s.deep_null,
                }
            })
            .collect()
    }

    pub fn packet_rows(&self) -> Vec<PacketRow> {
        self.packets
            .iter()
            .map(|p| {
                let f = &self.flows[p.flow_id.0 as usize];
                PacketRow {
                    pkt_id: p.pkt_id,
                    flow_id: p.flow_id.0,
                    direction: f.direction,
                    src: f.src.0,
                    dst: f.dst.0,
                    size_bytes: p.size_bytes,
                    created_slot: p.created_slot,
                    created_at_s: p.created_at_s,
                    delivered_slot: p.delivered_slot,
                    delivered_at_s: p.delivered_at_s,
                    outcome: p.outcome,
                    hop_trace: hop_trace_string(&p.hop_trace),
                }
            })
            .collect()
    }

    pub fn summary(&self, run: u32) -> Vec<SummaryRow> {
        summarize(&self.link_rows(), &self.packet_rows(), self.warmup_s, run, self.seed)
    }
}

#[derive(Default)]
struct PacketAcc {
    generated: u64,
    delivered: u64,
    dropped_overflow: u64,
    dropped_no_route: u64,
    in_flight: u64,
    offered_bits: u64,
    carried_bits: u64,
    latencies_ms: Vec<f64>,
}

impl PacketAcc {
    fn add(&mut self, p: &PacketRow) {
        self.generated += 1;
        let bits = u64::from(p.size_bytes) * 8;
        self.offered_bits += bits;
        match p.outcome {
            Outcome::Delivered => {
                self.delivered += 1;
                self.carried_bits += bits;
                if let Some(t) = p.delivered_at_s {
                    self.latencies_ms.push((t - p.created_at_s) * 1e3);
                }
            }
            Outcome::DroppedOverflow => self.dropped_overflow += 1,
            Outcome::DroppedNoRoute => self.dropped_no_route += 1,
            Outcome::InFlight => self.in_flight += 1,
        }
    }

    fn row(&self, run: u32, seed: u64, scope: Scope, direction: LinkDirection, flow_id: Option<u32>) -> SummaryRow {
        let lat = quartiles(&self.latencies_ms);
        SummaryRow {
            run,
            seed,
            scope,
            direction,
            flow_id,
            generated: self.generated,
            delivered: self.delivered,
            dropped_overflow: self.dropped_overflow,
            dropped_no_route: self.dropped_no_route,
            in_flight: self.in_flight,
            pdr: (self.generated > 0).then(|| self.delivered as f64 / self.generated as f64),
            latency_min_ms: lat.map(|q| q.min),
            latency_p25_ms: lat.map(|q| q.p25),
            latency_p50_ms: lat.map(|q| q.p50),
            latency_p75_ms: lat.map(|q| q.p75),
            latency_max_ms: lat.map(|q| q.max),
            offered_bits: self.offered_bits,
            carried_bits: self.carried_bits,
            link_samples: 0,
            snr_min_db: None,
            snr_p25_db: None,
            snr_p50_db: None,
            snr_p75_db: None,
            snr_max_db: None,
            interference_p25_dbm: None,
            interference_p50_dbm: None,
            interference_p75_dbm: None,
            interference_none_share: None,
            sinr_min_db: None,
            sinr_p25_db: None,
            sinr_p50_db: None,
            sinr_p75_db: None,
            sinr_max_db: None,
        }
    }
}

fn add_link_stats(row: &mut SummaryRow, links: &[&LinkRow]) {
    row.link_samples = links.len() as u64;
    let snr: Vec<f64> = links.iter().map(|l| l.snr_db).collect();
    let sinr: Vec<f64> = links.iter().map(|l| l.sinr_db).collect();
    let int: Vec<f64> = links.iter().filter_map(|l| l.interference_dbm).collect();
    if let Some(q) = quartiles(&snr) {
        (row.snr_min_db, row.snr_p25_db, row.snr_p50_db, row.snr_p75_db, row.snr_max_db) =
            (Some(q.min), Some(q.p25), Some(q.p50), Some(q.p75), Some(q.max));
    }
    if let Some(q) = quartiles(&sinr) {
        (row.sinr_min_db, row.sinr_p25_db, row.sinr_p50_db, row.sinr_p75_db, row.sinr_max_db) =
            (Some(q.min), Some(q.p25), Some(q.p50), Some(q.p75), Some(q.max));
    }
    if let Some(q) = quartiles(&int) {
        (row.interference_p25_dbm, row.interference_p50_dbm, row.interference_p75_dbm) =
            (Some(q.p25), Some(q.p50), Some(q.p75));
    }
    if !links.is_empty() {
        row.interference_none_share = Some((links.len() - int.len()) as f64 / links.len() as f64);
    }
}

/// Direction rows (DL then UL) followed by one row per flow. Packets
/// created before `warmup_s` are left out of PDR and latency; link
/// statistics cover the whole run.
pub fn summarize(links: &[LinkRow], packets: &[PacketRow], warmup_s: f64, run: u32, seed: u64) -> Vec<SummaryRow> {
    let measured: Vec<&PacketRow> = packets.iter().filter(|p| p.created_at_s >= warmup_s).collect();
    let mut rows = Vec::new();
    for dir in [LinkDirection::Downlink, LinkDirection::Uplink] {
        let mut acc = PacketAcc::default();
        for p in measured.iter().filter(|p| p.direction == dir) {
            acc.add(p);
        }
        let mut row = acc.row(run, seed, Scope::Direction, dir, None);
        let dl: Vec<&LinkRow> = links.iter().filter(|l| l.direction == dir).collect();
        add_link_stats(&mut row, &dl);
        rows.push(row);
    }
    let mut flows: Vec<(u32, LinkDirection)> = packets.iter().map(|p| (p.flow_id, p.direction)).collect();
    flows.sort_by_key(|f| f.0);
    flows.dedup();
    for (id, dir) in flows {
        let mut acc = PacketAcc::default();
        for p in measured.iter().filter(|p| p.flow_id == id) {
            acc.add(p);
        }
        rows.push(acc.row(run, seed, Scope::Flow, dir, Some(id)));
    }
    rows
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Csv { path: path.display().to_string(), message: e.to_string() }
}

/// Writes rows with the given header to any writer.
pub fn write_rows<W: Write, R: Serialize>(out: W, header: &[&str], rows: &[R]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<(), MetricsError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_rows(std::io::BufWriter::new(f), header, rows).map_err(|e| csv_err(path, e))
}

pub fn read_rows<Rd: Read, R: for<'de> Deserialize<'de>>(input: Rd, header: &[&str], path: &Path) -> Result<Vec<R>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let found: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if found.iter().map(String::as_str).ne(header.iter().copied()) {
        return Err(MetricsError::Header {
            path: path.display().to_string(),
            expected: header.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    r.deserialize().collect::<Result<Vec<R>, _>>().map_err(|e| csv_err(path, e))
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<R>, MetricsError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_rows(std::io::BufReader::new(f), header, path)
}

/// Writes `links.csv`, `packets.csv` and `summary.csv` into `dir`.
pub fn write_bundle(dir: &Path, out: &RunOutput, run: u32) -> Result<Vec<SummaryRow>, MetricsError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let links = out.link_rows();
    let packets = out.packet_rows();
    let summary = summarize(&links, &packets, out.warmup_s, run, out.seed);
    write_csv(&dir.join(LINKS_FILE), LINKS_HEADER, &links)?;
    write_csv(&dir.join(PACKETS_FILE), PACKETS_HEADER, &packets)?;
    write_csv(&dir.join(SUMMARY_FILE), SUMMARY_HEADER, &summary)?;
    Ok(summary)
}
