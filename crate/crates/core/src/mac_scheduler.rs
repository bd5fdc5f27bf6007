//! TDD frame structure, MT/DU resource partitioning and round-robin
//! symbol allocation.
//!
//! Symbols are indexed 0..14 within a slot; 0 and 13 carry control, 1..=12
//! carry data. Switching slots carry UL data on their last four data
//! symbols, the rest acts as guard.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{LinkDirection, NodeId};

pub const SYMBOLS_PER_SLOT: u8 = 14;
pub const FIRST_DATA_SYMBOL: u8 = 1;
/// One past the last data symbol.
pub const DATA_SYMBOL_END: u8 = 13;
pub const DATA_SYMBOLS_PER_SLOT: u8 = DATA_SYMBOL_END - FIRST_DATA_SYMBOL;
/// UL data symbols at the tail of a switching slot.
pub const SW_UL_SYMBOLS: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("unknown slot pattern `{0}`")]
    UnknownPattern(String),
    #[error("n_s_odd = {0} outside [0, 12]")]
    OddSymbolsOutOfRange(u8),
    #[error("DU bandwidth fraction {0} outside (0, 1)")]
    BandwidthFraction(f64),
    #[error("extra control overhead: {0}")]
    ExtraControl(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Numerology {
    pub index: u8,
}

impl Default for Numerology {
    fn default() -> Self {
        Self { index: 3 }
    }
}

impl Numerology {
    pub fn scs_khz(&self) -> f64 {
        15.0 * f64::from(1u32 << self.index)
    }

    pub fn slot_duration_s(&self) -> f64 {
        1e-3 / f64::from(1u32 << self.index)
    }

    pub fn symbols_per_slot(&self) -> u8 {
        SYMBOLS_PER_SLOT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotType {
    Dl,
    Sw,
    Ul,
}

impl SlotType {
    /// Direction of the data carried in this slot.
    pub fn direction(self) -> LinkDirection {
        match self {
            SlotType::Dl => LinkDirection::Downlink,
            SlotType::Sw | SlotType::Ul => LinkDirection::Uplink,
        }
    }

    fn letter(self) -> char {
        match self {
            SlotType::Dl => 'D',
            SlotType::Sw => 'S',
            SlotType::Ul => 'U',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPattern {
    pub name: String,
    pub sequence: Vec<SlotType>,
}

impl SlotPattern {
    /// Parses `<n>DS<m>U` (e.g. `4DS2U`) or an explicit letter sequence of
    /// `D`, `S` and `U` (e.g. `DDDSUU`).
    pub fn parse(s: &str) -> Result<Self, SchedulerError> {
        let unknown = || SchedulerError::UnknownPattern(s.to_string());
        let t = s.trim();
        if t.is_empty() {
            return Err(unknown());
        }
        if let Some((dl, ul)) = t.strip_suffix('U').and_then(|rest| rest.split_once("DS")) {
            if let (Ok(dl), Ok(ul)) = (dl.parse::<usize>(), ul.parse::<usize>()) {
                let mut sequence = vec![SlotType::Dl; dl];
                sequence.push(SlotType::Sw);
                sequence.extend(std::iter::repeat_n(SlotType::Ul, ul));
                return Ok(Self { name: t.to_string(), sequence });
            }
        }
        let sequence = t
            .chars()
            .map(|c| match c {
                'D' => Ok(SlotType::Dl),
                'S' => Ok(SlotType::Sw),
                'U' => Ok(SlotType::Ul),
                _ => Err(unknown()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { name: t.to_string(), sequence })
    }

    pub fn period(&self) -> usize {
        self.sequence.len()
    }

    /// Letter form, e.g. `DDDDSUU`.
    pub fn letters(&self) -> String {
        self.sequence.iter().map(|s| s.letter()).collect()
    }
}

impl fmt::Display for SlotPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub fn slot_type(slot_index: u64, pattern: &SlotPattern) -> SlotType {
    pattern.sequence[(slot_index % pattern.period() as u64) as usize]
}

/// Set of OFDM symbol indices within one slot.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SymbolSet(u16);

impl SymbolSet {
    pub const EMPTY: SymbolSet = SymbolSet(0);

    /// Symbols `start..end`.
    pub fn range(start: u8, end: u8) -> Self {
        let mut bits = 0u16;
        for s in start..end.min(SYMBOLS_PER_SLOT) {
            bits |= 1 << s;
        }
        SymbolSet(bits)
    }

    pub fn from_bits(bits: u16) -> Self {
        SymbolSet(bits & ((1 << SYMBOLS_PER_SLOT) - 1))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn len(self) -> u8 {
        self.0.count_ones() as u8
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, symbol: u8) -> bool {
        symbol < 16 && self.0 & (1 << symbol) != 0
    }

    pub fn intersection(self, other: Self) -> Self {
        SymbolSet(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        SymbolSet(self.0 | other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        SymbolSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..SYMBOLS_PER_SLOT).filter(move |&s| self.contains(s))
    }

    /// The `count` lowest symbols of the set.
    pub fn lowest(self, count: u8) -> Self {
        let mut out = 0u16;
        for s in self.iter().take(count as usize) {
            out |= 1 << s;
        }
        SymbolSet(out)
    }
}

impl fmt::Debug for SymbolSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for SymbolSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_layer(layer: u8) -> Self {
        if layer % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuxMode {
    Tdm,
    Fdm,
}

impl fmt::Display for MuxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MuxMode::Tdm => "tdm",
            MuxMode::Fdm => "fdm",
        })
    }
}

/// Additional control symbols spread over a period of slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraControl {
    pub n_symbols: u32,
    pub periodicity_slots: u32,
}

impl ExtraControl {
    /// Symbols removed in the slot at `slot_index`.
    pub fn removed_in_slot(&self, slot_index: u64) -> u32 {
        let p = u64::from(self.periodicity_slots);
        let n = u64::from(self.n_symbols);
        let j = slot_index % p;
        (((j + 1) * n) / p - (j * n) / p) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplexConfig {
    pub mode: MuxMode,
    pub n_s_odd: u8,
    pub du_bandwidth_fraction: f64,
    pub extra_control: Option<ExtraControl>,
}

impl Default for MultiplexConfig {
    fn default() -> Self {
        Self { mode: MuxMode::Tdm, n_s_odd: 6, du_bandwidth_fraction: 0.5, extra_control: None }
    }
}

impl MultiplexConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.n_s_odd > DATA_SYMBOLS_PER_SLOT {
            return Err(SchedulerError::OddSymbolsOutOfRange(self.n_s_odd));
        }
        let f = self.du_bandwidth_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(SchedulerError::BandwidthFraction(f));
        }
        if let Some(x) = self.extra_control {
            if x.periodicity_slots == 0 {
                return Err(SchedulerError::ExtraControl("periodicity must be at least one slot".into()));
            }
            let per_slot_max = x.n_symbols.div_ceil(x.periodicity_slots);
            if per_slot_max > u32::from(DATA_SYMBOLS_PER_SLOT) {
                return Err(SchedulerError::ExtraControl(format!(
                    "{} symbols per {} slots leaves no data symbols",
                    x.n_symbols, x.periodicity_slots
                )));
            }
        }
        Ok(())
    }
}

/// Data symbols of a slot before any MT/DU partitioning.
pub fn slot_data_symbols(slot: SlotType) -> SymbolSet {
    match slot {
        SlotType::Dl | SlotType::Ul => SymbolSet::range(FIRST_DATA_SYMBOL, DATA_SYMBOL_END),
        SlotType::Sw => SymbolSet::range(DATA_SYMBOL_END - SW_UL_SYMBOLS, DATA_SYMBOL_END),
    }
}

/// Removes the slot's share of extra control symbols, earliest first.
pub fn apply_extra_control(
    extra: Option<&ExtraControl>,
    slot_index: u64,
    set: SymbolSet,
) -> Result<SymbolSet, SchedulerError> {
    let Some(x) = extra else {
        return Ok(set);
    };
    let remove = x.removed_in_slot(slot_index);
    if remove > u32::from(set.len()) {
        return Err(SchedulerError::ExtraControl(format!(
            "slot {slot_index} needs {remove} extra control symbols but has {} data symbols",
            set.len()
        )));
    }
    Ok(set.difference(set.lowest(remove as u8)))
}

/// Symbols available to a transmitter whose layer has the given parity.
///
/// Under TDM odd layers get the first `n_s_odd` data symbols and even
/// layers the rest. A switching slot splits its four UL symbols in the same
/// proportion, rounding the odd share up. FDM returns all data symbols.
pub fn symbol_partition(parity: Parity, mux: &MultiplexConfig, slot: SlotType) -> SymbolSet {
    if mux.mode == MuxMode::Fdm {
        return slot_data_symbols(slot);
    }
    let (start, width, odd) = match slot {
        SlotType::Dl | SlotType::Ul => (FIRST_DATA_SYMBOL, DATA_SYMBOLS_PER_SLOT, mux.n_s_odd),
        SlotType::Sw => {
            let odd = (u32::from(SW_UL_SYMBOLS) * u32::from(mux.n_s_odd)).div_ceil(u32::from(DATA_SYMBOLS_PER_SLOT));
            (DATA_SYMBOL_END - SW_UL_SYMBOLS, SW_UL_SYMBOLS, odd as u8)
        }
    };
    match parity {
        Parity::Odd => SymbolSet::range(start, start + odd),
        Parity::Even => SymbolSet::range(start + odd, start + width),
    }
}

/// Frequency span within the carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subband {
    pub offset_hz: f64,
    pub width_hz: f64,
}

impl Subband {
    pub fn full(bandwidth_hz: f64) -> Self {
        Self { offset_hz: 0.0, width_hz: bandwidth_hz }
    }

    pub fn end_hz(&self) -> f64 {
        self.offset_hz + self.width_hz
    }

    pub fn overlap_hz(&self, other: &Subband) -> f64 {
        (self.end_hz().min(other.end_hz()) - self.offset_hz.max(other.offset_hz)).max(0.0)
    }
}

/// Subband used by links whose DU sits on a layer of the given parity.
/// Even-layer DUs take the lower `du_bandwidth_fraction` of the carrier.
pub fn du_subband(du_parity: Parity, mux: &MultiplexConfig, bandwidth_hz: f64) -> Subband {
    if mux.mode == MuxMode::Tdm {
        return Subband::full(bandwidth_hz);
    }
    let split = mux.du_bandwidth_fraction * bandwidth_hz;
    match du_parity {
        Parity::Even => Subband { offset_hz: 0.0, width_hz: split },
        Parity::Odd => Subband { offset_hz: split, width_hz: bandwidth_hz - split },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub slot_index: u64,
    pub tx: NodeId,
    pub rx: NodeId,
    pub direction: LinkDirection,
    pub symbols: SymbolSet,
    pub subband: Subband,
    pub granted_bits: u64,
}

impl Allocation {
    /// Time-frequency overlap with another allocation, as a fraction of this one.
    pub fn overlap_fraction(&self, other: &Allocation) -> f64 {
        resource_overlap(self.symbols, &self.subband, other.symbols, &other.subband)
    }
}

/// Fraction of resource `(a_syms, a_band)` shared with `(b_syms, b_band)`.
pub fn resource_overlap(a_syms: SymbolSet, a_band: &Subband, b_syms: SymbolSet, b_band: &Subband) -> f64 {
    if a_syms.is_empty() || a_band.width_hz <= 0.0 {
        return 0.0;
    }
    let t = f64::from(a_syms.intersection(b_syms).len()) / f64::from(a_syms.len());
    let f = a_band.overlap_hz(b_band) / a_band.width_hz;
    t * f
}

/// Round-robin symbol allocator with one persistent pointer per DU and
/// direction.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    pointers: HashMap<(NodeId, LinkDirection), usize>,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pointer(&self, du: NodeId, dir: LinkDirection) -> usize {
        self.pointers.get(&(du, dir)).copied().unwrap_or(0)
    }

    /// Hands out `budget` one symbol at a time over the backlogged
    /// candidates, starting at the pointer. Each candidate receives a
    /// contiguous block (in service order). Returns one set per candidate.
    pub fn allocate(&mut self, du: NodeId, dir: LinkDirection, backlogged: &[bool], budget: SymbolSet) -> Vec<SymbolSet> {
        let n = backlogged.len();
        let mut out = vec![SymbolSet::EMPTY; n];
        if n == 0 {
            return out;
        }
        let start = self.pointer(du, dir) % n;
        let active: Vec<usize> = (0..n).map(|k| (start + k) % n).filter(|&i| backlogged[i]).collect();
        let total = budget.len() as usize;
        if active.is_empty() || total == 0 {
            return out;
        }
        let m = active.len();
        let mut remaining = budget;
        for (rank, &i) in active.iter().enumerate() {
            let share = total / m + usize::from(rank < total % m);
            let block = remaining.lowest(share as u8);
            remaining = remaining.difference(block);
            out[i] = block;
        }
        let last_served = active[(total - 1) % m];
        self.pointers.insert((du, dir), (last_served + 1) % n);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfDuplexViolation {
    pub node: NodeId,
    /// Index of the allocation where `node` transmits.
    pub tx_allocation: usize,
    /// Index of the allocation where `node` receives.
    pub rx_allocation: usize,
}

/// Checks that no node transmits and receives on overlapping resources.
pub fn half_duplex_check(allocations: &[Allocation]) -> Result<(), Vec<HalfDuplexViolation>> {
    let mut violations = Vec::new();
    for (i, a) in allocations.iter().enumerate() {
        for (j, b) in allocations.iter().enumerate() {
            if i == j || a.tx != b.rx {
                continue;
            }
            if a.overlap_fraction(b) > 0.0 {
                violations.push(HalfDuplexViolation { node: a.tx, tx_allocation: i, rx_allocation: j });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
