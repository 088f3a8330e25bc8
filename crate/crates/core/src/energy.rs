//! Carbon-footprint accounting for training runs.
//!
//! grams CO₂e = t · (n_c·P_c·u_c + n_gpu·P_gpu·u_gpu + P_mem) · PUE · CI · 0.001
//!
//! with `t` in hours, powers in watts, `CI` in gCO₂e/kWh and the memory draw
//! taken as a fixed rate per gigabyte.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Memory power draw in watts per gigabyte.
pub const MEMORY_WATTS_PER_GB: f64 = 0.3725;
pub const DEFAULT_PUE: f64 = 1.10;
/// Average worldwide carbon intensity, gCO₂e per kWh.
pub const DEFAULT_CARBON_INTENSITY: f64 = 475.0;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("{field} must be non-negative and finite (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} is a usage factor and must lie in [0, 1] (got {value})")]
    UsageOutOfRange { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// Running time in hours.
    pub hours: f64,
    pub cores: f64,
    pub core_watts: f64,
    pub core_usage: f64,
    pub gpus: f64,
    pub gpu_watts: f64,
    pub gpu_usage: f64,
    pub mem_gb: f64,
    pub pue: f64,
    pub carbon_intensity: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            hours: 0.0,
            cores: 0.0,
            core_watts: 0.0,
            core_usage: 0.0,
            gpus: 0.0,
            gpu_watts: 0.0,
            gpu_usage: 0.0,
            mem_gb: 0.0,
            pue: DEFAULT_PUE,
            carbon_intensity: DEFAULT_CARBON_INTENSITY,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let fields = [
            ("hours", self.hours),
            ("cores", self.cores),
            ("core_watts", self.core_watts),
            ("core_usage", self.core_usage),
            ("gpus", self.gpus),
            ("gpu_watts", self.gpu_watts),
            ("gpu_usage", self.gpu_usage),
            ("mem_gb", self.mem_gb),
            ("pue", self.pue),
            ("carbon_intensity", self.carbon_intensity),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(EnergyError::Negative { field, value });
            }
        }
        for (field, value) in [("core_usage", self.core_usage), ("gpu_usage", self.gpu_usage)] {
            if value > 1.0 {
                return Err(EnergyError::UsageOutOfRange { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub cpu_w: f64,
    pub gpu_w: f64,
    pub mem_w: f64,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.cpu_w + self.gpu_w + self.mem_w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub grams_co2e: f64,
    /// Energy drawn by the hardware, before the PUE overhead.
    pub kwh: f64,
    pub breakdown: PowerBreakdown,
    /// Footprint of each logged epoch, when epoch boundaries were recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_epoch_grams: Vec<f64>,
}

impl EnergyReport {
    /// One structured line: `{"kwh":..,"grams_co2e":..,"cpu_w":..,"gpu_w":..,"mem_w":..}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "kwh": self.kwh,
            "grams_co2e": self.grams_co2e,
            "cpu_w": self.breakdown.cpu_w,
            "gpu_w": self.breakdown.gpu_w,
            "mem_w": self.breakdown.mem_w,
        })
        .to_string()
    }
}

pub fn memory_power(mem_gb: f64) -> Result<f64, EnergyError> {
    if !(mem_gb.is_finite() && mem_gb >= 0.0) {
        return Err(EnergyError::Negative {
            field: "mem_gb",
            value: mem_gb,
        });
    }
    Ok(MEMORY_WATTS_PER_GB * mem_gb)
}

pub fn carbon_footprint(p: &EnergyParams) -> Result<EnergyReport, EnergyError> {
    p.validate()?;
    let breakdown = PowerBreakdown {
        cpu_w: p.cores * p.core_watts * p.core_usage,
        gpu_w: p.gpus * p.gpu_watts * p.gpu_usage,
        mem_w: memory_power(p.mem_gb)?,
    };
    let kwh = p.hours * breakdown.total() * 0.001;
    Ok(EnergyReport {
        grams_co2e: kwh * p.carbon_intensity * p.pue,
        kwh,
        breakdown,
        per_epoch_grams: Vec::new(),
    })
}

/// One utilisation reading taken while a run was in progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageSample {
    pub core_usage: f64,
    pub gpu_usage: f64,
}

/// What a training session recorded about itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub wall_clock: Duration,
    #[serde(default)]
    pub samples: Vec<UsageSample>,
    /// Elapsed time at the end of each epoch, in increasing order.
    #[serde(default)]
    pub epoch_ends: Vec<Duration>,
}

/// Footprint of a recorded session. The running time comes from the wall
/// clock; usage factors are the mean of the samples when there are any,
/// otherwise those in `p`.
pub fn session_report(session: &SessionLog, p: &EnergyParams) -> Result<EnergyReport, EnergyError> {
    let mut params = p.clone();
    params.hours = hours(session.wall_clock);
    if !session.samples.is_empty() {
        let n = session.samples.len() as f64;
        params.core_usage = session.samples.iter().map(|s| s.core_usage).sum::<f64>() / n;
        params.gpu_usage = session.samples.iter().map(|s| s.gpu_usage).sum::<f64>() / n;
    }
    let mut report = carbon_footprint(&params)?;
    let mut prev = Duration::ZERO;
    for &end in &session.epoch_ends {
        let epoch = EnergyParams {
            hours: hours(end.saturating_sub(prev)),
            ..params.clone()
        };
        report.per_epoch_grams.push(carbon_footprint(&epoch)?.grams_co2e);
        prev = end;
    }
    Ok(report)
}

fn hours(d: Duration) -> f64 {
    d.as_secs_f64() / 3600.0
}
