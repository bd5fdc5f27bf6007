//! Constant-bit-rate packet sources.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tunnel_stack::{FlowId, FlowKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("{what} must be finite and non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("inter-packet interval must be positive, got {0}")]
    Interval(f64),
    #[error("stop time {stop} precedes start time {start}")]
    Window { start: f64, stop: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSpec {
    pub dl_rate_bps: f64,
    pub ul_rate_factor: f64,
    pub inter_packet_interval_s: f64,
    pub start_s: f64,
    /// `None` runs to the end of the simulation.
    pub stop_s: Option<f64>,
    /// Random start phase per flow, uniform in one interval.
    pub phase_jitter: bool,
    /// Kind of the default per-node flows.
    pub flow_kind: FlowKind,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            dl_rate_bps: 60e6,
            ul_rate_factor: 0.1,
            inter_packet_interval_s: 50e-6,
            start_s: 0.0,
            stop_s: None,
            phase_jitter: true,
            flow_kind: FlowKind::NonPdu,
        }
    }
}

impl TrafficSpec {
    pub fn ul_rate_bps(&self) -> f64 {
        self.dl_rate_bps * self.ul_rate_factor
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        for (what, value) in [("dl_rate_bps", self.dl_rate_bps), ("ul_rate_factor", self.ul_rate_factor), ("start_s", self.start_s)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(TrafficError::Negative { what, value });
            }
        }
        if !(self.inter_packet_interval_s.is_finite() && self.inter_packet_interval_s > 0.0) {
            return Err(TrafficError::Interval(self.inter_packet_interval_s));
        }
        if let Some(stop) = self.stop_s {
            if !(stop >= self.start_s) {
                return Err(TrafficError::Window { start: self.start_s, stop });
            }
        }
        Ok(())
    }
}

/// `round(rate · interval / 8)` bytes; 0 means the source is silent.
pub fn packet_size_bytes(rate_bps: f64, interval_s: f64) -> u32 {
    (rate_bps * interval_s / 8.0).round() as u32
}

/// One CBR source. Packet `k` is created at `start + phase + k·interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbrSource {
    pub flow: FlowId,
    pub size_bytes: u32,
    pub interval_s: f64,
    pub first_s: f64,
    pub stop_s: f64,
    next: u64,
}

impl CbrSource {
    pub fn new(flow: FlowId, rate_bps: f64, spec: &TrafficSpec, phase_s: f64, stop_s: f64) -> Self {
        Self {
            flow,
            size_bytes: packet_size_bytes(rate_bps, spec.inter_packet_interval_s),
            interval_s: spec.inter_packet_interval_s,
            first_s: spec.start_s + phase_s,
            stop_s: spec.stop_s.map_or(stop_s, |s| s.min(stop_s)),
            next: 0,
        }
    }

    /// Draws the start phase for a flow.
    pub fn phase<R: Rng>(spec: &TrafficSpec, rng: &mut R) -> f64 {
        if spec.phase_jitter {
            rng.gen_range(0.0..spec.inter_packet_interval_s)
        } else {
            0.0
        }
    }

    fn time_of(&self, k: u64) -> f64 {
        self.first_s + k as f64 * self.interval_s
    }

    /// Creation times in `[from_s, to_s)`, in order.
    pub fn generate(&mut self, from_s: f64, to_s: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if self.size_bytes == 0 {
            return out;
        }
        loop {
            let t = self.time_of(self.next);
            if t >= to_s || t >= self.stop_s {
                break;
            }
            self.next += 1;
            if t >= from_s {
                out.push(t);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn packet_sizes() {
        assert_eq!(packet_size_bytes(60e6, 50e-6), 375);
        assert_eq!(packet_size_bytes(140e6, 50e-6), 875);
        assert_eq!(packet_size_bytes(6e6, 50e-6), 38);
        assert_eq!(packet_size_bytes(0.0, 50e-6), 0);
    }

    #[test]
    fn zero_rate_is_silent() {
        let spec = TrafficSpec { dl_rate_bps: 0.0, ..Default::default() };
        let mut s = CbrSource::new(FlowId(0), 0.0, &spec, 0.0, 1.0);
        assert!(s.generate(0.0, 1.0).is_empty());
    }

    #[test]
    fn offered_load_matches_rate() {
        let spec = TrafficSpec { phase_jitter: false, ..Default::default() };
        let mut s = CbrSource::new(FlowId(0), 60e6, &spec, 0.0, 2.0);
        let mut n = 0;
        let slot = 125e-6;
        for i in 0..16_000 {
            n += s.generate(i as f64 * slot, (i + 1) as f64 * slot).len();
        }
        let bits = n as f64 * 375.0 * 8.0;
        assert!((bits - 60e6 * 2.0).abs() <= 375.0 * 8.0);
    }

    #[test]
    fn phase_is_seeded() {
        let spec = TrafficSpec::default();
        let a = CbrSource::phase(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        let b = CbrSource::phase(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert!((0.0..50e-6).contains(&a));
        let off = TrafficSpec { phase_jitter: false, ..spec };
        assert_eq!(CbrSource::phase(&off, &mut ChaCha8Rng::seed_from_u64(7)), 0.0);
    }

    #[test]
    fn stop_time_respected() {
        let spec = TrafficSpec { stop_s: Some(100e-6), phase_jitter: false, ..Default::default() };
        let mut s = CbrSource::new(FlowId(0), 60e6, &spec, 0.0, 2.0);
        assert_eq!(s.generate(0.0, 1.0), vec![0.0, 50e-6]);
    }

    #[test]
    fn validation() {
        assert!(TrafficSpec { dl_rate_bps: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrafficSpec { inter_packet_interval_s: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrafficSpec { start_s: 1.0, stop_s: Some(0.5), ..Default::default() }.validate().is_err());
        assert!(TrafficSpec::default().validate().is_ok());
    }
}
