//! Per-slot link budgets, interference aggregation, SINR and slot capacity.

use thiserror::Error;

use crate::antenna::{local_direction, select_beam, total_gain_db, AntennaError, Beam, UpaConfig};
use crate::channel::{
    noise_power_dbm, path_loss, rain_loss_db, rain_specific_attenuation, ChannelError, ChannelParams, Geometry,
    RainCoefficientTable,
};
use crate::mac_scheduler::{Numerology, SYMBOLS_PER_SLOT};
use crate::scalar::{from_db, to_db, Real};
use crate::topology::NodeId;

/// Horizontal separations below this are clamped.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Antenna(#[from] AntennaError),
    #[error("link endpoints are the same node ({0})")]
    SelfLink(NodeId),
}

/// Truncated Shannon mapping from SINR to spectral efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMap<T> {
    pub se_max_bps_hz: T,
    pub se_min_sinr_db: T,
}

impl<T: Real> Default for RateMap<T> {
    fn default() -> Self {
        Self { se_max_bps_hz: T::lit(7.4), se_min_sinr_db: T::lit(-6.0) }
    }
}

impl<T: Real> RateMap<T> {
    pub fn spectral_efficiency(&self, sinr_db: T) -> T {
        if !(sinr_db >= self.se_min_sinr_db) {
            return T::zero();
        }
        (T::one() + from_db(sinr_db)).log2().min(self.se_max_bps_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig<T> {
    pub tx_power_dbm: T,
    pub noise_figure_db: T,
    pub bandwidth_hz: T,
}

impl<T: Real> Default for RadioConfig<T> {
    fn default() -> Self {
        Self { tx_power_dbm: T::lit(30.0), noise_figure_db: T::lit(5.0), bandwidth_hz: T::lit(400e6) }
    }
}

/// Weather-dependent propagation state, fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation<T> {
    pub channel: ChannelParams<T>,
    pub gamma_db_per_km: T,
}

impl<T: Real> Propagation<T> {
    pub fn new(channel: ChannelParams<T>, table: &RainCoefficientTable<T>) -> Result<Self, ChannelError> {
        let gamma_db_per_km = rain_specific_attenuation(&channel, table)?;
        Ok(Self { channel, gamma_db_per_km })
    }
}

/// One radio end of a link: a node position and the panel in use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint<T> {
    pub node: NodeId,
    pub position: [T; 3],
    pub panel: UpaConfig<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample<T> {
    pub slot_index: u64,
    pub tx_node: NodeId,
    pub rx_node: NodeId,
    pub distance_m: T,
    pub pl_db: T,
    pub rain_db: T,
    pub g_tx_db: T,
    pub g_rx_db: T,
    pub rx_power_dbm: T,
    pub noise_dbm: T,
    /// `None` when no interferer overlaps.
    pub interference_dbm: Option<T>,
    pub snr_db: T,
    pub sinr_db: T,
    pub deep_null: bool,
    pub tx_beam: Beam<T>,
    pub rx_beam: Beam<T>,
}

/// Propagation loss and 3D distance between two positions.
fn propagation_loss<T: Real>(from: [T; 3], to: [T; 3], prop: &Propagation<T>) -> Result<(T, T, T, bool), ChannelError> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let d2d = dx.hypot(dy).max(T::lit(MIN_DISTANCE_M));
    let geo = Geometry::new(d2d, from[2], to[2])?;
    let pl = path_loss(&geo, &prop.channel)?;
    let d = geo.direct_m();
    let rain = rain_loss_db(prop.gamma_db_per_km, d);
    Ok((d, pl.db, rain, pl.deep_null))
}

/// Budget of the intended link `tx → rx` with beams selected toward each
/// other. Noise is taken over `noise_bandwidth_hz`.
pub fn link_budget<T: Real>(
    slot_index: u64,
    tx: &Endpoint<T>,
    rx: &Endpoint<T>,
    prop: &Propagation<T>,
    radio: &RadioConfig<T>,
    noise_bandwidth_hz: T,
) -> Result<LinkSample<T>, PhyError> {
    if tx.node == rx.node {
        return Err(PhyError::SelfLink(tx.node));
    }
    let (distance_m, pl_db, rain_db, deep_null) = propagation_loss(tx.position, rx.position, prop)?;
    let tx_beam = select_beam(tx.position, rx.position, &tx.panel)?;
    let rx_beam = select_beam(rx.position, tx.position, &rx.panel)?;
    let g_tx_db = total_gain_db(&tx_beam, &local_direction(tx.position, rx.position, &tx.panel)?, &tx.panel);
    let g_rx_db = total_gain_db(&rx_beam, &local_direction(rx.position, tx.position, &rx.panel)?, &rx.panel);
    let rx_power_dbm = radio.tx_power_dbm + g_tx_db + g_rx_db - pl_db - rain_db;
    let noise_dbm = noise_power_dbm(noise_bandwidth_hz, radio.noise_figure_db)?;
    let snr_db = rx_power_dbm - noise_dbm;
    Ok(LinkSample {
        slot_index,
        tx_node: tx.node,
        rx_node: rx.node,
        distance_m,
        pl_db,
        rain_db,
        g_tx_db,
        g_rx_db,
        rx_power_dbm,
        noise_dbm,
        interference_dbm: None,
        snr_db,
        sinr_db: snr_db,
        deep_null,
        tx_beam,
        rx_beam,
    })
}

/// Power received at `victim` from `interferer` when each uses the beam
/// committed to its own link.
pub fn interferer_power_dbm<T: Real>(
    interferer: &Endpoint<T>,
    interferer_beam: &Beam<T>,
    victim: &Endpoint<T>,
    victim_beam: &Beam<T>,
    prop: &Propagation<T>,
    radio: &RadioConfig<T>,
) -> Result<T, PhyError> {
    if interferer.node == victim.node {
        return Err(PhyError::SelfLink(victim.node));
    }
    let (_, pl_db, rain_db, _) = propagation_loss(interferer.position, victim.position, prop)?;
    let g_tx = total_gain_db(
        interferer_beam,
        &local_direction(interferer.position, victim.position, &interferer.panel)?,
        &interferer.panel,
    );
    let g_rx = total_gain_db(victim_beam, &local_direction(victim.position, interferer.position, &victim.panel)?, &victim.panel);
    Ok(radio.tx_power_dbm + g_tx + g_rx - pl_db - rain_db)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceTerm<T> {
    pub tx_node: NodeId,
    pub power_dbm: T,
    /// Fraction of the victim's resource the interferer overlaps, in (0, 1].
    pub overlap: T,
}

/// Adds interference to an intended-link sample.
pub fn aggregate_sinr<T: Real>(intended: &LinkSample<T>, interferers: &[InterferenceTerm<T>]) -> LinkSample<T> {
    let mut out = *intended;
    let active: Vec<_> = interferers.iter().filter(|t| t.overlap > T::zero()).collect();
    if active.is_empty() {
        out.interference_dbm = None;
        out.sinr_db = out.snr_db;
        return out;
    }
    let interference_mw = active.iter().fold(T::zero(), |acc, t| acc + t.overlap * from_db(t.power_dbm));
    out.interference_dbm = Some(to_db(interference_mw));
    out.sinr_db = intended.rx_power_dbm - to_db(from_db(intended.noise_dbm) + interference_mw);
    out
}

/// Bits deliverable in one slot over `n_symbols` of `subband_hz`.
pub fn achievable_bits<T: Real>(
    sinr_db: T,
    n_symbols: u8,
    subband_hz: T,
    rate_map: &RateMap<T>,
    numerology: &Numerology,
) -> u64 {
    if n_symbols == 0 || !(subband_hz > T::zero()) {
        return 0;
    }
    let se = rate_map.spectral_efficiency(sinr_db);
    let bits = se * subband_hz * T::lit(numerology.slot_duration_s()) * T::lit(f64::from(n_symbols))
        / T::lit(f64::from(SYMBOLS_PER_SLOT));
    bits.floor().to_u64().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn prop(rho: f64) -> Propagation<f64> {
        let ch = ChannelParams { rain_rate_mmh: rho, ..Default::default() };
        Propagation::new(ch, &RainCoefficientTable::bundled()).unwrap()
    }

    fn donor_and_node(d: f64) -> (Endpoint<f64>, Endpoint<f64>) {
        let tx = Endpoint { node: NodeId(0), position: [0.0, 0.0, 20.0], panel: UpaConfig::default() };
        let rx = Endpoint {
            node: NodeId(1),
            position: [d, 0.0, 10.0],
            panel: UpaConfig::default().with_boresight(180.0, 0.0),
        };
        (tx, rx)
    }

    #[test]
    fn capped_bits_example() {
        let bits = achievable_bits(60.0, 12, 400e6, &RateMap::default(), &Numerology { index: 3 });
        assert_eq!(bits, 317_142);
    }

    #[test]
    fn bits_edge_cases() {
        let rm = RateMap::default();
        let n = Numerology::default();
        assert_eq!(achievable_bits(-6.5, 12, 400e6, &rm, &n), 0);
        assert_eq!(achievable_bits(30.0, 0, 400e6, &rm, &n), 0);
        // At the cutoff the mapping is active: log2(1 + 10^-0.6).
        assert!(achievable_bits(-6.0, 12, 400e6, &rm, &n) > 0);
    }

    #[test]
    fn clear_weather_link_matches_composed_oracle() {
        let (tx, rx) = donor_and_node(1000.0);
        let s = link_budget(0, &tx, &rx, &prop(0.0), &RadioConfig::default(), 400e6).unwrap();
        assert_eq!(s.rain_db, 0.0);
        assert_abs_diff_eq!(s.pl_db, 122.18051611571509, epsilon = 1e-9);
        assert_abs_diff_eq!(s.g_tx_db, 31.038354465113355, epsilon = 1e-9);
        assert_abs_diff_eq!(s.g_rx_db, 31.038354465113355, epsilon = 1e-9);
        assert_abs_diff_eq!(s.snr_db, 52.875592901231995, epsilon = 1e-9);
        assert_eq!(s.sinr_db, s.snr_db);
        assert_abs_diff_eq!(
            s.rx_power_dbm,
            30.0 + s.g_tx_db + s.g_rx_db - s.pl_db - s.rain_db,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rain_drop_equals_gamma_times_length() {
        let p0 = prop(0.0);
        let p30 = prop(30.0);
        for d in [500.0, 2000.0, 3500.0] {
            let (tx, rx) = donor_and_node(d);
            let s0 = link_budget(0, &tx, &rx, &p0, &RadioConfig::default(), 400e6).unwrap();
            let s30 = link_budget(0, &tx, &rx, &p30, &RadioConfig::default(), 400e6).unwrap();
            let d3 = (d * d + 100.0f64).sqrt();
            assert_abs_diff_eq!(s0.snr_db - s30.snr_db, p30.gamma_db_per_km * d3 / 1000.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn distance_clamp() {
        let (tx, mut rx) = donor_and_node(0.0);
        rx.position = [0.2, 0.0, 10.0];
        let s = link_budget(0, &tx, &rx, &prop(0.0), &RadioConfig::default(), 400e6).unwrap();
        let (_, mut rx1) = donor_and_node(1.0);
        rx1.panel = rx.panel;
        let s1 = link_budget(0, &tx, &rx1, &prop(0.0), &RadioConfig::default(), 400e6).unwrap();
        assert_eq!(s.pl_db, s1.pl_db);
        assert!(link_budget(0, &tx, &tx, &prop(0.0), &RadioConfig::default(), 400e6).is_err());
    }

    #[test]
    fn sinr_aggregation() {
        let (tx, rx) = donor_and_node(1000.0);
        let s = link_budget(0, &tx, &rx, &prop(0.0), &RadioConfig::default(), 400e6).unwrap();
        let none = aggregate_sinr(&s, &[]);
        assert_eq!(none.sinr_db, none.snr_db);
        assert!(none.interference_dbm.is_none());
        let one = aggregate_sinr(&s, &[InterferenceTerm { tx_node: NodeId(5), power_dbm: s.noise_dbm, overlap: 1.0 }]);
        assert_abs_diff_eq!(one.sinr_db, s.snr_db - 10.0 * 2f64.log10(), epsilon = 1e-12);
        let half = s.noise_dbm - 10.0 * 2f64.log10();
        let split = aggregate_sinr(
            &s,
            &[
                InterferenceTerm { tx_node: NodeId(5), power_dbm: half, overlap: 1.0 },
                InterferenceTerm { tx_node: NodeId(6), power_dbm: half, overlap: 1.0 },
            ],
        );
        assert_abs_diff_eq!(split.sinr_db, one.sinr_db, epsilon = 1e-9);
    }

    #[test]
    fn interferer_power_uses_committed_beams() {
        let (tx, rx) = donor_and_node(1000.0);
        let p = prop(0.0);
        let radio = RadioConfig::default();
        let s = link_budget(0, &tx, &rx, &p, &radio, 400e6).unwrap();
        // The intended transmitter seen as an interferer reproduces rx power.
        let i = interferer_power_dbm(&tx, &s.tx_beam, &rx, &s.rx_beam, &p, &radio).unwrap();
        assert_abs_diff_eq!(i, s.rx_power_dbm, epsilon = 1e-12);
        // A beam pointed elsewhere leaks less.
        let off = crate::antenna::codebook_beam(2, &tx.panel);
        let j = interferer_power_dbm(&tx, &off, &rx, &s.rx_beam, &p, &radio).unwrap();
        assert!(j < i);
    }
}
