//! Uniform planar array: 3GPP element pattern, DFT codebook and analog
//! beam selection.
//!
//! The array lies in the local y–z plane of its panel (columns along y,
//! rows along z) with boresight along local +x. Beams are indexed
//! `row * n_cols + col`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{to_db, Real};

/// Half-power beamwidth of the element pattern, degrees.
pub const ELEMENT_HPBW_DEG: f64 = 65.0;
/// Side-lobe and front-to-back attenuation cap, dB.
pub const ELEMENT_MAX_ATTENUATION_DB: f64 = 30.0;

/// Floor for the array power factor, keeps exact nulls finite.
const ARRAY_POWER_FLOOR: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AntennaError {
    #[error("transmitter and receiver positions coincide")]
    CoincidentPositions,
    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaConfig<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub element_spacing_wavelengths: T,
    pub element_max_gain_dbi: T,
    pub boresight_azimuth_deg: T,
    pub boresight_elevation_deg: T,
}

impl<T: Real> Default for UpaConfig<T> {
    fn default() -> Self {
        Self {
            n_rows: 8,
            n_cols: 8,
            element_spacing_wavelengths: T::lit(0.5),
            element_max_gain_dbi: T::lit(13.0),
            boresight_azimuth_deg: T::zero(),
            boresight_elevation_deg: T::zero(),
        }
    }
}

impl<T: Real> UpaConfig<T> {
    pub fn element_count(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn codebook_size(&self) -> usize {
        self.element_count()
    }

    pub fn with_boresight(mut self, azimuth_deg: T, elevation_deg: T) -> Self {
        self.boresight_azimuth_deg = azimuth_deg;
        self.boresight_elevation_deg = elevation_deg;
        self
    }

    pub fn validate(&self) -> Result<(), AntennaError> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(AntennaError::InvalidConfig("array needs at least one row and column".into()));
        }
        if !(self.element_spacing_wavelengths > T::zero()) {
            return Err(AntennaError::InvalidConfig("element spacing must be positive".into()));
        }
        if !self.element_max_gain_dbi.is_finite()
            || !self.boresight_azimuth_deg.is_finite()
            || !self.boresight_elevation_deg.is_finite()
        {
            return Err(AntennaError::InvalidConfig("non-finite gain or boresight".into()));
        }
        Ok(())
    }

    /// Coherent upper bound of element gain plus array factor.
    pub fn max_gain_db(&self) -> T {
        self.element_max_gain_dbi + to_db(T::from_usize(self.element_count()).unwrap())
    }
}

/// Direction relative to a panel's boresight, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T> {
    pub azimuth_deg: T,
    pub elevation_deg: T,
}

impl<T: Real> Direction<T> {
    /// Spatial frequencies `(u_h, u_v)` of this direction.
    fn spatial(&self) -> (T, T) {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        (el.cos() * az.sin(), el.sin())
    }
}

/// A DFT codebook entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam<T> {
    pub steering_azimuth_deg: T,
    pub steering_elevation_deg: T,
    pub codebook_index: usize,
    /// Horizontal spatial frequency the weights are phased for.
    pub u_h: T,
    /// Vertical spatial frequency the weights are phased for.
    pub u_v: T,
}

/// Wraps `x` into `[-half, half)`.
fn wrap_symmetric<T: Real>(x: T, half: T) -> T {
    let period = half + half;
    let mut y = (x + half) % period;
    if y < T::zero() {
        y = y + period;
    }
    y - half
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees<T: Real>(deg: T) -> T {
    let w = wrap_symmetric(deg, T::lit(180.0));
    if w == T::lit(-180.0) {
        T::lit(180.0)
    } else {
        w
    }
}

/// Spatial frequency of DFT beam `k` out of `n`.
fn dft_frequency<T: Real>(k: usize, n: usize, spacing: T) -> T {
    let raw = T::from_usize(k).unwrap() / (T::from_usize(n).unwrap() * spacing);
    wrap_symmetric(raw, T::lit(0.5) / spacing)
}

pub fn codebook_beam<T: Real>(index: usize, cfg: &UpaConfig<T>) -> Beam<T> {
    assert!(index < cfg.codebook_size(), "codebook index {index} out of range");
    let row = index / cfg.n_cols;
    let col = index % cfg.n_cols;
    let u_h = dft_frequency(col, cfg.n_cols, cfg.element_spacing_wavelengths);
    let u_v = dft_frequency(row, cfg.n_rows, cfg.element_spacing_wavelengths);
    let one = T::one();
    let el = u_v.max(-one).min(one).asin();
    let cos_el = el.cos();
    let az = if cos_el > T::epsilon() {
        (u_h / cos_el).max(-one).min(one).asin()
    } else {
        T::zero()
    };
    Beam {
        steering_azimuth_deg: az.to_degrees(),
        steering_elevation_deg: el.to_degrees(),
        codebook_index: index,
        u_h,
        u_v,
    }
}

/// Element gain in dBi at the given offset from boresight.
pub fn element_gain_db<T: Real>(azimuth_off_deg: T, elevation_off_deg: T, cfg: &UpaConfig<T>) -> T {
    let az = wrap_degrees(azimuth_off_deg);
    let el = wrap_degrees(elevation_off_deg);
    let hpbw = T::lit(ELEMENT_HPBW_DEG);
    let cap = T::lit(ELEMENT_MAX_ATTENUATION_DB);
    let horizontal = (T::lit(12.0) * (az / hpbw).powi(2)).min(cap);
    let vertical = (T::lit(12.0) * (el / hpbw).powi(2)).min(cap);
    cfg.element_max_gain_dbi - (horizontal + vertical).min(cap)
}

/// Power of the 1-D uniform array sum `|Σ exp(j·2π·s·n·Δu)|²`.
fn axis_power<T: Real>(n: usize, spacing: T, delta_u: T) -> T {
    // Dirichlet kernel: sin²(n·x/2) / sin²(x/2).
    let half = T::PI() * spacing * delta_u;
    let nf = T::from_usize(n).unwrap();
    let den = half.sin();
    if den.abs() < T::lit(1e-9) {
        // Near a grating peak the ratio tends to n² (cos-ratio form keeps precision).
        let r = (nf * half).cos() / half.cos();
        return nf * nf * r * r;
    }
    let num = (nf * half).sin();
    (num * num) / (den * den)
}

/// Array factor in dB: `10·log10(|Σ w·a|² / N)`, so a perfectly steered
/// array of `N` elements gives `10·log10(N)`.
pub fn array_factor_db<T: Real>(beam: &Beam<T>, direction: &Direction<T>, cfg: &UpaConfig<T>) -> T {
    let (u_h, u_v) = direction.spatial();
    let s = cfg.element_spacing_wavelengths;
    let p = axis_power(cfg.n_cols, s, u_h - beam.u_h) * axis_power(cfg.n_rows, s, u_v - beam.u_v);
    let n = T::from_usize(cfg.element_count()).unwrap();
    to_db((p / n).max(T::lit(ARRAY_POWER_FLOOR)))
}

/// Element gain plus array factor.
pub fn total_gain_db<T: Real>(beam: &Beam<T>, direction: &Direction<T>, cfg: &UpaConfig<T>) -> T {
    element_gain_db(direction.azimuth_deg, direction.elevation_deg, cfg) + array_factor_db(beam, direction, cfg)
}

/// Direction of `to` as seen from a panel at `from`.
pub fn local_direction<T: Real>(from: [T; 3], to: [T; 3], cfg: &UpaConfig<T>) -> Result<Direction<T>, AntennaError> {
    let v = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(norm > T::zero()) {
        return Err(AntennaError::CoincidentPositions);
    }
    // Rotate by −azimuth about z, then by −elevation about y.
    let (sa, ca) = cfg.boresight_azimuth_deg.to_radians().sin_cos();
    let x1 = ca * v[0] + sa * v[1];
    let y1 = -sa * v[0] + ca * v[1];
    let z1 = v[2];
    let (se, ce) = cfg.boresight_elevation_deg.to_radians().sin_cos();
    let x2 = ce * x1 + se * z1;
    let z2 = -se * x1 + ce * z1;
    let el = (z2 / norm).max(-T::one()).min(T::one()).asin();
    let az = y1.atan2(x2);
    Ok(Direction { azimuth_deg: az.to_degrees(), elevation_deg: el.to_degrees() })
}

/// Best index along one axis, lowest index on ties.
fn best_axis<T: Real>(n: usize, spacing: T, u: T) -> usize {
    let mut best = 0;
    let mut best_p = T::neg_infinity();
    for k in 0..n {
        let p = axis_power(n, spacing, u - dft_frequency(k, n, spacing));
        if p > best_p {
            best = k;
            best_p = p;
        }
    }
    best
}

/// Codebook entry maximizing the array factor toward `target`; ties go to
/// the lowest codebook index.
pub fn select_beam_toward<T: Real>(direction: &Direction<T>, cfg: &UpaConfig<T>) -> Beam<T> {
    // The array factor separates into row and column factors, so the joint
    // argmax is the pair of per-axis argmaxes.
    let (u_h, u_v) = direction.spatial();
    let s = cfg.element_spacing_wavelengths;
    let col = best_axis(cfg.n_cols, s, u_h);
    let row = best_axis(cfg.n_rows, s, u_v);
    codebook_beam(row * cfg.n_cols + col, cfg)
}

pub fn select_beam<T: Real>(tx_pos: [T; 3], rx_pos: [T; 3], cfg: &UpaConfig<T>) -> Result<Beam<T>, AntennaError> {
    let dir = local_direction(tx_pos, rx_pos, cfg)?;
    Ok(select_beam_toward(&dir, cfg))
}
