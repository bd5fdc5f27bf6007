use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use iab_core::channel::{
    classical_two_ray_pl, free_space_pl, modified_two_ray_pl, peak_count, rain_specific_attenuation, ChannelError,
    Polarization, RainCoefficientTable,
};
use iab_core::metrics::write_rows;
use iab_core::{ChannelParams64, Geometry64};
use serde::Serialize;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Path loss against distance for the modified and classical two-ray models.
    Pl,
    /// Specific rain attenuation against rain rate.
    Rain,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PolArg {
    H,
    V,
}

#[derive(Args)]
pub struct CurvesArgs {
    #[arg(long, value_enum, default_value = "pl")]
    kind: Kind,
    /// Carrier in GHz; 28 for `pl`, 26 for `rain` when unset.
    #[arg(long = "freq-ghz")]
    freq_ghz: Option<f64>,
    #[arg(long = "h-tx", default_value_t = 10.0)]
    h_tx: f64,
    #[arg(long = "h-rx", default_value_t = 10.0)]
    h_rx: f64,
    #[arg(long = "d-min", default_value_t = 10.0)]
    d_min: f64,
    #[arg(long = "d-max", default_value_t = 4000.0)]
    d_max: f64,
    #[arg(long = "d-step", default_value_t = 1.0)]
    d_step: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    reflection: f64,
    #[arg(long = "rain-max", default_value_t = 50.0)]
    rain_max: f64,
    #[arg(long = "rain-step", default_value_t = 1.0)]
    rain_step: f64,
    #[arg(long, value_enum, default_value = "h")]
    polarization: PolArg,
    /// Output file; stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub enum CurvesError {
    Config(String),
    Io(String),
}

impl From<ChannelError> for CurvesError {
    fn from(e: ChannelError) -> Self {
        CurvesError::Config(e.to_string())
    }
}

pub const PL_HEADER: &[&str] = &["distance_m", "modified_pl_db", "classical_pl_db", "free_space_pl_db", "deep_null"];
pub const RAIN_HEADER: &[&str] = &["rain_mmh", "freq_ghz", "gamma_db_per_km"];

#[derive(Serialize)]
struct PlRow {
    distance_m: f64,
    modified_pl_db: f64,
    classical_pl_db: f64,
    free_space_pl_db: f64,
    deep_null: bool,
}

#[derive(Serialize)]
struct RainRow {
    rain_mmh: f64,
    freq_ghz: f64,
    gamma_db_per_km: f64,
}

fn steps(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CurvesError> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(CurvesError::Config(format!("bad range [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

pub fn run(a: &CurvesArgs) -> Result<(), CurvesError> {
    let mut buf = Vec::new();
    match a.kind {
        Kind::Pl => {
            let params = ChannelParams64 {
                carrier_freq_ghz: a.freq_ghz.unwrap_or(28.0),
                reflection_coeff: a.reflection,
                ..Default::default()
            };
            params.validate()?;
            let mut rows = Vec::new();
            for d in steps(a.d_min, a.d_max, a.d_step)? {
                let g = Geometry64::new(d, a.h_tx, a.h_rx)?;
                let m = modified_two_ray_pl(&g, &params)?;
                rows.push(PlRow {
                    distance_m: d,
                    modified_pl_db: m.db,
                    classical_pl_db: classical_two_ray_pl(&g, &params)?.db,
                    free_space_pl_db: free_space_pl(&g, &params)?.db,
                    deep_null: m.deep_null,
                });
            }
            if rows.len() >= 3 {
                let peaks = |f: fn(&PlRow) -> f64| peak_count(&rows.iter().map(|r| (r.distance_m, f(r))).collect::<Vec<_>>());
                eprintln!(
                    "peaks: modified {} classical {}",
                    peaks(|r| r.modified_pl_db)?,
                    peaks(|r| r.classical_pl_db)?
                );
            }
            write_rows(&mut buf, PL_HEADER, &rows).map_err(|e| CurvesError::Io(e.to_string()))?;
        }
        Kind::Rain => {
            let table = RainCoefficientTable::bundled();
            let freq = a.freq_ghz.unwrap_or(26.0);
            let pol = match a.polarization {
                PolArg::H => Polarization::Horizontal,
                PolArg::V => Polarization::Vertical,
            };
            let mut rows = Vec::new();
            for rho in steps(0.0, a.rain_max, a.rain_step)? {
                let params = ChannelParams64 { carrier_freq_ghz: freq, rain_rate_mmh: rho, polarization: pol, ..Default::default() };
                params.validate()?;
                rows.push(RainRow { rain_mmh: rho, freq_ghz: freq, gamma_db_per_km: rain_specific_attenuation(&params, &table)? });
            }
            write_rows(&mut buf, RAIN_HEADER, &rows).map_err(|e| CurvesError::Io(e.to_string()))?;
        }
    }
    match &a.out {
        Some(p) => std::fs::write(p, &buf).map_err(|e| CurvesError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(&buf).map_err(|e| CurvesError::Io(e.to_string())),
    }
}
