//! Deterministic maritime propagation.
//!
//! Line-of-sight path loss over the sea surface (free space, classical
//! two-ray and the frequency-damped two-ray variant used at mmWave),
//! power-law rain attenuation with polarization-dependent coefficients,
//! and thermal noise.

use std::fmt;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Magnitude floor applied to the two-ray interference term.
pub const DEEP_NULL_FLOOR: f64 = 1e-6;

/// Bundled rain coefficient file.
pub const BUNDLED_RAIN_TABLE: &str = include_str!("../data/itu_p838_3.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("no rain coefficients loaded for {0} polarization")]
    MissingRainCoefficients(Polarization),
    #[error("rain coefficient file, line {line}: {message}")]
    RainTable { line: usize, message: String },
    #[error("cannot read rain coefficient file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    Vertical,
    Horizontal,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::Vertical => f.write_str("vertical"),
            Polarization::Horizontal => f.write_str("horizontal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossModel {
    ModifiedTwoRay,
    ClassicalTwoRay,
    FreeSpace,
}

/// Carrier, sea-surface and weather parameters of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams<T> {
    pub carrier_freq_ghz: T,
    /// Sea-surface reflection coefficient.
    pub reflection_coeff: T,
    pub rain_rate_mmh: T,
    pub polarization: Polarization,
    pub model: PathLossModel,
    /// Floor for `|1 + R·e^{jφ}|`; see [`DEEP_NULL_FLOOR`].
    pub null_floor: T,
}

impl<T: Real> Default for ChannelParams<T> {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: T::lit(26.0),
            reflection_coeff: T::lit(-1.0),
            rain_rate_mmh: T::zero(),
            polarization: Polarization::Horizontal,
            model: PathLossModel::ModifiedTwoRay,
            null_floor: T::lit(DEEP_NULL_FLOOR),
        }
    }
}

impl<T: Real> ChannelParams<T> {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let f = self.carrier_freq_ghz;
        if !f.is_finite() || f < T::one() || f > T::lit(100.0) {
            return Err(ChannelError::InvalidParams(format!(
                "carrier frequency {f} GHz outside [1, 100]"
            )));
        }
        if !self.rain_rate_mmh.is_finite() || self.rain_rate_mmh < T::zero() {
            return Err(ChannelError::InvalidParams(format!(
                "rain rate {} mm/h must be finite and non-negative",
                self.rain_rate_mmh
            )));
        }
        if !self.reflection_coeff.is_finite() {
            return Err(ChannelError::InvalidParams("reflection coefficient not finite".into()));
        }
        if !(self.null_floor > T::zero()) {
            return Err(ChannelError::InvalidParams("null floor must be positive".into()));
        }
        Ok(())
    }

    /// Carrier wavelength in meters.
    pub fn wavelength_m(&self) -> T {
        T::lit(SPEED_OF_LIGHT) / (self.carrier_freq_ghz * T::lit(1e9))
    }
}

/// Transmitter/receiver placement over the sea surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry<T> {
    pub d2d_m: T,
    pub h_tx_m: T,
    pub h_rx_m: T,
}

impl<T: Real> Geometry<T> {
    pub fn new(d2d_m: T, h_tx_m: T, h_rx_m: T) -> Result<Self, ChannelError> {
        let g = Self { d2d_m, h_tx_m, h_rx_m };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (what, v) in [("d2d", self.d2d_m), ("h_tx", self.h_tx_m), ("h_rx", self.h_rx_m)] {
            if !v.is_finite() || v <= T::zero() {
                return Err(ChannelError::Domain { what, value: v.as_f64() });
            }
        }
        Ok(())
    }

    /// Direct-path (3D) length.
    pub fn direct_m(&self) -> T {
        self.d2d_m.hypot(self.h_tx_m - self.h_rx_m)
    }

    /// Length of the first-order sea-surface reflection.
    pub fn reflected_m(&self) -> T {
        self.d2d_m.hypot(self.h_tx_m + self.h_rx_m)
    }

    /// Reflected minus direct path length.
    pub fn path_difference_m(&self) -> T {
        // (r² − d²)/(r + d) avoids cancellation when d2d ≫ heights.
        let d = self.direct_m();
        let r = self.reflected_m();
        T::lit(4.0) * self.h_tx_m * self.h_rx_m / (r + d)
    }
}

/// Frequency-dependent phase damping coefficient of the modified two-ray model.
pub fn alpha_freq_coeff<T: Real>(f_ghz: T) -> Result<T, ChannelError> {
    if !f_ghz.is_finite() {
        return Err(ChannelError::Domain { what: "frequency", value: f_ghz.as_f64() });
    }
    Ok(T::lit(1.091) * (T::lit(-0.06256) * f_ghz).exp() + T::lit(0.06982))
}

/// Path loss result; `deep_null` is set when the floor clamped the two-ray term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss<T> {
    pub db: T,
    pub deep_null: bool,
}

/// Two-ray loss with an explicit phase coefficient. `alpha = 1` is the
/// classical model.
pub fn two_ray_pl_with_alpha<T: Real>(
    geom: &Geometry<T>,
    params: &ChannelParams<T>,
    alpha: T,
) -> Result<PathLoss<T>, ChannelError> {
    geom.validate()?;
    let lambda = params.wavelength_m();
    let d = geom.direct_m();
    let phase = alpha * T::TAU() * geom.path_difference_m() / lambda;
    let field = Complex::new(T::one(), T::zero())
        + Complex::from_polar(params.reflection_coeff, phase);
    let mut magnitude = field.norm();
    let deep_null = magnitude < params.null_floor;
    if deep_null {
        magnitude = params.null_floor;
    }
    let ratio = lambda / (T::lit(4.0) * T::PI() * d) * magnitude;
    Ok(PathLoss { db: -T::lit(20.0) * ratio.log10(), deep_null })
}

pub fn modified_two_ray_pl<T: Real>(
    geom: &Geometry<T>,
    params: &ChannelParams<T>,
) -> Result<PathLoss<T>, ChannelError> {
    let alpha = alpha_freq_coeff(params.carrier_freq_ghz)?;
    two_ray_pl_with_alpha(geom, params, alpha)
}

pub fn classical_two_ray_pl<T: Real>(
    geom: &Geometry<T>,
    params: &ChannelParams<T>,
) -> Result<PathLoss<T>, ChannelError> {
    two_ray_pl_with_alpha(geom, params, T::one())
}

pub fn free_space_pl<T: Real>(
    geom: &Geometry<T>,
    params: &ChannelParams<T>,
) -> Result<PathLoss<T>, ChannelError> {
    geom.validate()?;
    let lambda = params.wavelength_m();
    let ratio = lambda / (T::lit(4.0) * T::PI() * geom.direct_m());
    Ok(PathLoss { db: -T::lit(20.0) * ratio.log10(), deep_null: false })
}

/// Path loss according to `params.model`.
pub fn path_loss<T: Real>(
    geom: &Geometry<T>,
    params: &ChannelParams<T>,
) -> Result<PathLoss<T>, ChannelError> {
    match params.model {
        PathLossModel::ModifiedTwoRay => modified_two_ray_pl(geom, params),
        PathLossModel::ClassicalTwoRay => classical_two_ray_pl(geom, params),
        PathLossModel::FreeSpace => free_space_pl(geom, params),
    }
}

/// Number of strict local maxima of a path-loss curve sampled over
/// strictly increasing distances.
pub fn peak_count<T: Real>(curve: &[(T, T)]) -> Result<usize, ChannelError> {
    if curve.len() < 3 {
        return Err(ChannelError::Domain { what: "curve length", value: curve.len() as f64 });
    }
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(ChannelError::Domain {
            what: "distance ordering",
            value: f64::NAN,
        });
    }
    Ok(curve
        .windows(3)
        .filter(|w| w[1].1 > w[0].1 && w[1].1 > w[2].1)
        .count())
}

/// One `a·exp(−((x − b)/c)²)` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussTerm<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

/// Sum of Gaussians in `log10 f` plus a linear term.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFreqFit<T> {
    pub terms: Vec<GaussTerm<T>>,
    pub m: T,
    pub c: T,
}

impl<T: Real> LogFreqFit<T> {
    pub fn eval(&self, f_ghz: T) -> T {
        let x = f_ghz.log10();
        self.terms
            .iter()
            .map(|t| {
                let z = (x - t.b) / t.c;
                t.a * (-(z * z)).exp()
            })
            .fold(T::zero(), |acc, v| acc + v)
            + self.m * x
            + self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationCoeffs<T> {
    /// Fit of `log10 k`, four terms.
    pub log_k: LogFreqFit<T>,
    /// Fit of `α`, five terms.
    pub alpha: LogFreqFit<T>,
}

impl<T: Real> PolarizationCoeffs<T> {
    pub fn k(&self, f_ghz: T) -> T {
        T::lit(10.0).powf(self.log_k.eval(f_ghz))
    }

    pub fn alpha(&self, f_ghz: T) -> T {
        self.alpha.eval(f_ghz)
    }
}

pub const K_TERMS: usize = 4;
pub const ALPHA_TERMS: usize = 5;

/// Rain coefficient table, one entry per polarization (either may be absent).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RainCoefficientTable<T> {
    pub horizontal: Option<PolarizationCoeffs<T>>,
    pub vertical: Option<PolarizationCoeffs<T>>,
}

#[derive(Default)]
struct PartialFit {
    rows: Vec<(usize, [f64; 3])>,
    m: Option<f64>,
    c: Option<f64>,
    line: usize,
}

impl<T: Real> RainCoefficientTable<T> {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_RAIN_TABLE).expect("bundled rain table is well formed")
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChannelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn coeffs(&self, pol: Polarization) -> Result<&PolarizationCoeffs<T>, ChannelError> {
        match pol {
            Polarization::Horizontal => self.horizontal.as_ref(),
            Polarization::Vertical => self.vertical.as_ref(),
        }
        .ok_or(ChannelError::MissingRainCoefficients(pol))
    }

    pub fn parse(text: &str) -> Result<Self, ChannelError> {
        let err = |line: usize, message: String| ChannelError::RainTable { line, message };
        // (polarization, is_alpha) -> partial fit
        let mut sections: Vec<((Polarization, bool), PartialFit)> = Vec::new();
        let mut current: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "version" => {
                    if fields.get(1) != Some(&"1") {
                        return Err(err(line_no, format!("unsupported version line `{line}`")));
                    }
                }
                "section" => {
                    if fields.len() != 3 {
                        return Err(err(line_no, "expected `section <polarization> <k|alpha>`".into()));
                    }
                    let pol = match fields[1] {
                        "horizontal" => Polarization::Horizontal,
                        "vertical" => Polarization::Vertical,
                        other => return Err(err(line_no, format!("unknown polarization `{other}`"))),
                    };
                    let is_alpha = match fields[2] {
                        "k" => false,
                        "alpha" => true,
                        other => return Err(err(line_no, format!("unknown part `{other}`"))),
                    };
                    if sections.iter().any(|(key, _)| *key == (pol, is_alpha)) {
                        return Err(err(line_no, format!("duplicate section {pol} {}", fields[2])));
                    }
                    sections.push(((pol, is_alpha), PartialFit { line: line_no, ..Default::default() }));
                    current = Some(sections.len() - 1);
                }
                key @ ("m" | "c") => {
                    let Some(cur) = current else {
                        return Err(err(line_no, "value outside of a section".into()));
                    };
                    if fields.len() != 2 {
                        return Err(err(line_no, format!("expected `{key} <value>`")));
                    }
                    let v: f64 = fields[1]
                        .parse()
                        .map_err(|_| err(line_no, format!("bad number `{}`", fields[1])))?;
                    let fit = &mut sections[cur].1;
                    let slot = if key == "m" { &mut fit.m } else { &mut fit.c };
                    if slot.replace(v).is_some() {
                        return Err(err(line_no, format!("duplicate `{key}`")));
                    }
                }
                _ => {
                    let Some(cur) = current else {
                        return Err(err(line_no, "row outside of a section".into()));
                    };
                    if fields.len() != 4 {
                        return Err(err(line_no, "expected `<j> <a> <b> <c>`".into()));
                    }
                    let j: usize = fields[0]
                        .parse()
                        .map_err(|_| err(line_no, format!("bad term index `{}`", fields[0])))?;
                    let mut vals = [0.0; 3];
                    for (slot, s) in vals.iter_mut().zip(&fields[1..]) {
                        *slot = s.parse().map_err(|_| err(line_no, format!("bad number `{s}`")))?;
                    }
                    sections[cur].1.rows.push((j, vals));
                }
            }
        }

        let mut table = RainCoefficientTable::<T>::default();
        for pol in [Polarization::Horizontal, Polarization::Vertical] {
            let k = sections.iter().find(|(key, _)| *key == (pol, false));
            let a = sections.iter().find(|(key, _)| *key == (pol, true));
            match (k, a) {
                (None, None) => {}
                (Some((_, k)), Some((_, a))) => {
                    let coeffs = PolarizationCoeffs {
                        log_k: finish_fit(k, K_TERMS)?,
                        alpha: finish_fit(a, ALPHA_TERMS)?,
                    };
                    match pol {
                        Polarization::Horizontal => table.horizontal = Some(coeffs),
                        Polarization::Vertical => table.vertical = Some(coeffs),
                    }
                }
                (Some((_, p)), None) | (None, Some((_, p))) => {
                    return Err(err(p.line, format!("{pol} needs both k and alpha sections")));
                }
            }
        }
        if table.horizontal.is_none() && table.vertical.is_none() {
            return Err(err(0, "no coefficient sections found".into()));
        }
        Ok(table)
    }
}

fn finish_fit<T: Real>(p: &PartialFit, expected: usize) -> Result<LogFreqFit<T>, ChannelError> {
    let err = |message: String| ChannelError::RainTable { line: p.line, message };
    if p.rows.len() != expected {
        return Err(err(format!("expected {expected} terms, found {}", p.rows.len())));
    }
    let mut rows = p.rows.clone();
    rows.sort_by_key(|(j, _)| *j);
    if rows.iter().enumerate().any(|(i, (j, _))| *j != i + 1) {
        return Err(err(format!("term indices must be 1..={expected}")));
    }
    let (Some(m), Some(c)) = (p.m, p.c) else {
        return Err(err("missing `m` or `c`".into()));
    };
    Ok(LogFreqFit {
        terms: rows
            .iter()
            .map(|(_, [a, b, c])| GaussTerm { a: T::lit(*a), b: T::lit(*b), c: T::lit(*c) })
            .collect(),
        m: T::lit(m),
        c: T::lit(c),
    })
}

/// Specific rain attenuation in dB/km.
pub fn rain_specific_attenuation<T: Real>(
    params: &ChannelParams<T>,
    table: &RainCoefficientTable<T>,
) -> Result<T, ChannelError> {
    let rho = params.rain_rate_mmh;
    if !rho.is_finite() || rho < T::zero() {
        return Err(ChannelError::Domain { what: "rain rate", value: rho.as_f64() });
    }
    let coeffs = table.coeffs(params.polarization)?;
    if rho == T::zero() {
        return Ok(T::zero());
    }
    let f = params.carrier_freq_ghz;
    Ok(coeffs.k(f) * rho.powf(coeffs.alpha(f)))
}

/// Rain loss over a path of `distance_m`, given the specific attenuation.
#[inline]
pub fn rain_loss_db<T: Real>(gamma_db_per_km: T, distance_m: T) -> T {
    gamma_db_per_km * distance_m / T::lit(1000.0)
}

/// Thermal noise power in dBm over `bandwidth_hz`.
pub fn noise_power_dbm<T: Real>(bandwidth_hz: T, noise_figure_db: T) -> Result<T, ChannelError> {
    if !(bandwidth_hz > T::zero()) || !bandwidth_hz.is_finite() {
        return Err(ChannelError::Domain { what: "bandwidth", value: bandwidth_hz.as_f64() });
    }
    Ok(T::lit(-174.0) + T::lit(10.0) * bandwidth_hz.log10() + noise_figure_db)
}
