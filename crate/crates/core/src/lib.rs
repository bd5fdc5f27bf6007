//! Slot-level simulator for multi-hop maritime 5G NR IAB networks.

pub mod antenna;
pub mod campaign;
pub mod bap;
pub mod channel;
pub mod engine;
pub mod mac_scheduler;
pub mod metrics;
pub mod phy_link;
pub mod scalar;
pub mod scenario;
pub mod topology;
pub mod traffic;
pub mod tunnel_stack;

pub use scalar::Real;

pub type ChannelParams64 = channel::ChannelParams<f64>;
pub type Geometry64 = channel::Geometry<f64>;
pub type UpaConfig64 = antenna::UpaConfig<f64>;
pub type Beam64 = antenna::Beam<f64>;
