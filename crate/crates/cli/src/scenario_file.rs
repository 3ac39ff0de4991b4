//! TOML scenario files.
//!
//! ```toml
//! [scenario]
//! f_clkin = "4.26 GHz"
//! divider_n = 4
//! corner = "nominal"
//! scheme = "binary_search"
//!
//! [[stall_injection]]
//! cycle = 2
//! stalled = true
//!
//! [sweep]
//! corners = ["slow", "nominal", "fast"]
//! frequencies = ["800 MHz", "4.26 GHz"]
//! ```

use std::path::PathBuf;

use mmdll::bias::ControlCode;
use mmdll::controller::{PdPolarity, Scheme, SchemeParams};
use mmdll::engine::{Divider, FreezeWindow, StallInjection};
use mmdll::{Calibration, Corner, DacConfig, Scenario, StageConfig};
use serde::Deserialize;

use crate::error::CliError;
use crate::units::{Frequency, TimePs, Voltage};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub dac: DacSection,
    pub stage: Option<StageSection>,
    #[serde(default)]
    pub stall_injection: Vec<StallInjection>,
    #[serde(default)]
    pub retry: Vec<StageSection>,
    #[serde(default)]
    pub freeze: Vec<FreezeWindow>,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub f_clkin: Frequency,
    pub divider_n: Divider,
    #[serde(default = "default_corner")]
    pub corner: Corner,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub jitter_rms: Option<TimePs>,
    pub max_cycles: Option<u32>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub observe_after_lock: Option<u32>,
    pub preamble: Option<TimePs>,
}

fn default_corner() -> Corner {
    Corner::Nominal
}

fn default_scheme() -> Scheme {
    Scheme::BinarySearch
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub coarse_step_k: Option<u32>,
    pub medium_step: Option<u32>,
    pub initial_step: Option<u32>,
    pub initial_code: Option<u32>,
    pub polarity: Option<PdPolarity>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DacSection {
    pub bits: Option<u32>,
    pub full_scale: Option<Voltage>,
    pub settle_cycles: Option<u32>,
}

/// Capacitor-bank and tail overrides.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub cap_bank_code: u8,
    pub tail_enables_n: u8,
    pub tail_enables_p: Option<u8>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub frequencies: Vec<Frequency>,
    #[serde(default)]
    pub corners: Vec<Corner>,
    #[serde(default)]
    pub dividers: Vec<Divider>,
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory used when `--out` is not given.
    pub dir: Option<PathBuf>,
}

/// One point of a sweep, identifying a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPoint {
    pub corner: Corner,
    pub f_clkin_hz: f64,
    pub divider: Divider,
    pub scheme: Scheme,
    pub seed: u64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn axis_point(&self) -> AxisPoint {
        AxisPoint {
            corner: self.scenario.corner,
            f_clkin_hz: self.scenario.f_clkin.0,
            divider: self.scenario.divider_n,
            scheme: self.scenario.scheme,
            seed: self.scenario.seed,
        }
    }

    /// Builds the engine scenario for one axis point.
    pub fn build(&self, cal: &Calibration, at: &AxisPoint) -> Result<Scenario, CliError> {
        let mut s =
            Scenario::from_calibration(cal, at.corner, at.f_clkin_hz, at.divider, at.scheme);
        s.seed = at.seed;
        let d = &self.dac;
        s.dac = DacConfig {
            bits: d.bits.unwrap_or(s.dac.bits),
            full_scale: d.full_scale.map_or(s.dac.full_scale, |v| v.0),
            supply_voltage: cal.device.supply_voltage,
            settle_cycles: d.settle_cycles.unwrap_or(s.dac.settle_cycles),
        };
        s.dac
            .validate()
            .map_err(|e| CliError::Config(format!("[dac]: {e}")))?;
        if self.stage.is_none() {
            s.line.stage = cal.select_stage(at.corner, at.f_clkin_hz, &s.dac);
        }
        let c = &self.controller;
        let defaults = SchemeParams::for_bits(s.dac.bits);
        s.params = SchemeParams {
            bits: s.dac.bits,
            coarse_step_k: c.coarse_step_k.unwrap_or(defaults.coarse_step_k),
            medium_step: c.medium_step.unwrap_or(defaults.medium_step),
            initial_step: c.initial_step.unwrap_or(defaults.initial_step),
            initial_code: c.initial_code.map_or(defaults.initial_code, ControlCode),
            polarity: c.polarity.unwrap_or(defaults.polarity),
        };
        s.params
            .validate()
            .map_err(|e| CliError::Config(format!("[controller]: {e}")))?;
        if let Some(stage) = self.stage {
            s.line.stage = stage_config(cal, stage);
        }
        s.retry_policy = self.retry.iter().map(|r| stage_config(cal, *r)).collect();
        let sc = &self.scenario;
        if let Some(j) = sc.jitter_rms {
            s.jitter_rms_ps = j.0;
        }
        if let Some(m) = sc.max_cycles {
            s.max_cycles = m;
        }
        if let Some(o) = sc.observe_after_lock {
            s.observe_after_lock = o;
        }
        if let Some(p) = sc.preamble {
            s.preamble_ns = p.0 * 1e-3;
        }
        s.stall_injections = self.stall_injection.clone();
        s.freeze_windows = self.freeze.clone();
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }

    /// Every combination of the sweep axes, in axis order; empty axes fall
    /// back to the scenario's own value. Seeds not listed explicitly are
    /// the base seed plus the combination index.
    pub fn sweep_points(&self) -> Vec<AxisPoint> {
        fn or<T: Clone>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let base = self.axis_point();
        let ax = &self.sweep;
        let corners = or(&ax.corners, base.corner);
        let freqs: Vec<f64> = if ax.frequencies.is_empty() {
            vec![base.f_clkin_hz]
        } else {
            ax.frequencies.iter().map(|f| f.0).collect()
        };
        let dividers = or(&ax.dividers, base.divider);
        let schemes = or(&ax.schemes, base.scheme);
        let explicit_seeds = !ax.seeds.is_empty();
        let seeds = if explicit_seeds {
            ax.seeds.clone()
        } else {
            vec![base.seed]
        };
        let mut out = Vec::new();
        for &corner in &corners {
            for &f_clkin_hz in &freqs {
                for &divider in &dividers {
                    for &scheme in &schemes {
                        for &seed in &seeds {
                            let idx = out.len() as u64;
                            out.push(AxisPoint {
                                corner,
                                f_clkin_hz,
                                divider,
                                scheme,
                                seed: if explicit_seeds {
                                    seed
                                } else {
                                    seed.wrapping_add(idx)
                                },
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

fn stage_config(cal: &Calibration, s: StageSection) -> StageConfig {
    cal.stage_with(
        s.cap_bank_code,
        s.tail_enables_n,
        s.tail_enables_p.unwrap_or(s.tail_enables_n),
    )
}
