//! Shipped calibration defaults and the per-corner stage table.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::{phase_taps, Corner, CornerParams, DelayLineConfig, DeviceParams, StageConfig};
use crate::bias::{code_to_bias, max_code, ControlCode, DacConfig};
use crate::detectors::ToggleTimingParams;
use crate::error::CalibrationError;
use crate::scalar::{from_u32, lit, to_f64, Scalar};

/// Text of the calibration file compiled into the crate.
pub const SHIPPED_CALIBRATION: &str = include_str!("../../data/calibration.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    device: RawDevice,
    line: RawLine,
    stage: RawStage,
    corners: BTreeMap<Corner, RawCorner>,
    toggle_timing: RawToggle,
    stage_table: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    length_ratio_main: f64,
    length_ratio_tail_unit: f64,
    transconductance: f64,
    threshold_voltage: f64,
    supply_voltage: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    num_stages: usize,
    feedback_tap: usize,
    reference_tap: usize,
    delay_scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    cap_unit: f64,
    base_load: f64,
    static_branch_width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorner {
    transconductance_scale: f64,
    threshold_shift: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawToggle {
    t_setup: f64,
    t_r2q: f64,
    t_d_buf: f64,
    t_d_ed: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    corner: Corner,
    f_clkin: f64,
    cap_bank_code: u8,
    tail_branches: u8,
}

/// One row of the stage table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTableEntry<T> {
    pub corner: Corner,
    pub f_clkin_hz: T,
    pub cap_bank_code: u8,
    pub tail_branches: u8,
}

impl<T> StageTableEntry<T> {
    /// Thermometer code enabling `tail_branches` branches.
    pub fn tail_code(&self) -> u8 {
        ((1u16 << self.tail_branches) - 1) as u8
    }
}

/// Parsed calibration: device defaults, corner set, timing defaults and the
/// stage table used to pick capacitor-bank and tail settings per operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub device: DeviceParams<T>,
    pub num_stages: usize,
    pub feedback_tap: usize,
    pub reference_tap: usize,
    pub delay_scale: T,
    pub cap_unit: T,
    pub base_load: T,
    pub static_branch_width: T,
    pub corners: BTreeMap<Corner, CornerParams<T>>,
    pub toggle_timing: ToggleTimingParams<T>,
    pub stage_table: Vec<StageTableEntry<T>>,
}

impl<T: Scalar> Calibration<T> {
    /// The calibration shipped with the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_CALIBRATION).expect("shipped calibration is valid")
    }

    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let raw: RawCalibration = toml::from_str(text)?;
        let device = DeviceParams {
            length_ratio_main: lit(raw.device.length_ratio_main),
            length_ratio_tail_unit: lit(raw.device.length_ratio_tail_unit),
            transconductance: lit(raw.device.transconductance),
            threshold_voltage: lit(raw.device.threshold_voltage),
            supply_voltage: lit(raw.device.supply_voltage),
        };
        device
            .validate()
            .map_err(|e| CalibrationError::Invalid(e.to_string()))?;
        let mut corners = BTreeMap::new();
        for corner in Corner::ALL {
            let c = raw
                .corners
                .get(&corner)
                .ok_or_else(|| CalibrationError::Invalid(format!("missing corner `{corner}`")))?;
            corners.insert(
                corner,
                CornerParams {
                    corner,
                    transconductance_scale: lit(c.transconductance_scale),
                    threshold_shift: lit(c.threshold_shift),
                },
            );
        }
        let stage_table: Vec<_> = raw
            .stage_table
            .iter()
            .map(|e| StageTableEntry {
                corner: e.corner,
                f_clkin_hz: lit(e.f_clkin),
                cap_bank_code: e.cap_bank_code,
                tail_branches: e.tail_branches,
            })
            .collect();
        for e in &stage_table {
            if e.cap_bank_code > 3 || e.tail_branches > 4 || !(to_f64(e.f_clkin_hz) > 0.0) {
                return Err(CalibrationError::Invalid(format!(
                    "stage table entry {e:?} out of range"
                )));
            }
        }
        for corner in Corner::ALL {
            if !stage_table.iter().any(|e| e.corner == corner) {
                return Err(CalibrationError::Invalid(format!(
                    "stage table has no entry for corner `{corner}`"
                )));
            }
        }
        let cal = Self {
            device,
            num_stages: raw.line.num_stages,
            feedback_tap: raw.line.feedback_tap,
            reference_tap: raw.line.reference_tap,
            delay_scale: lit(raw.line.delay_scale),
            cap_unit: lit(raw.stage.cap_unit),
            base_load: lit(raw.stage.base_load),
            static_branch_width: lit(raw.stage.static_branch_width),
            corners,
            toggle_timing: ToggleTimingParams {
                t_setup: lit(raw.toggle_timing.t_setup),
                t_r2q: lit(raw.toggle_timing.t_r2q),
                t_d_buf: lit(raw.toggle_timing.t_d_buf),
                t_d_ed: lit(raw.toggle_timing.t_d_ed),
            },
            stage_table,
        };
        cal.line_config(Corner::Nominal, lit(1e9))
            .validate()
            .map_err(|e| CalibrationError::Invalid(e.to_string()))?;
        Ok(cal)
    }

    /// Stage table row closest (in log frequency) to `f_clkin_hz` for `corner`.
    pub fn entry_for(&self, corner: Corner, f_clkin_hz: T) -> StageTableEntry<T> {
        let target = f_clkin_hz.ln();
        *self
            .stage_table
            .iter()
            .filter(|e| e.corner == corner)
            .min_by(|a, b| {
                let da = (a.f_clkin_hz.ln() - target).abs();
                let db = (b.f_clkin_hz.ln() - target).abs();
                da.partial_cmp(&db).expect("finite frequencies")
            })
            .expect("every corner has at least one entry")
    }

    /// Stage configuration for the given operating point, with the default DAC.
    pub fn stage_for(&self, corner: Corner, f_clkin_hz: T) -> StageConfig<T> {
        self.select_stage(corner, f_clkin_hz, &DacConfig::default())
    }

    /// The table entry when `f_clkin_hz` is within 0.5% of a calibrated
    /// frequency. Otherwise the capacitor-bank and tail setting whose binary
    /// search neither stalls nor overshoots past 1.4 periods, with the lock
    /// code nearest the table's typical code; the nearest table entry if no
    /// setting qualifies.
    pub fn select_stage(
        &self,
        corner: Corner,
        f_clkin_hz: T,
        dac: &DacConfig<T>,
    ) -> StageConfig<T> {
        let e = self.entry_for(corner, f_clkin_hz);
        let table = self.stage_with(e.cap_bank_code, e.tail_code(), e.tail_code());
        if ((e.f_clkin_hz - f_clkin_hz) / f_clkin_hz).abs() <= lit(0.005) {
            return table;
        }
        let period = lit::<T>(1e12) / f_clkin_hz;
        let target = lit::<T>(TYPICAL_LOCK_CODE);
        let mut best: Option<(T, StageConfig<T>)> = None;
        for cb in 0..=3u8 {
            for n in 0..=4u8 {
                let tail = ((1u16 << n) - 1) as u8;
                let stage = self.stage_with(cb, tail, tail);
                let line = DelayLineConfig {
                    stage,
                    ..self.base_line(corner)
                };
                let Some(lock) = search_fit(&line, dac, period) else {
                    continue;
                };
                let score = (from_u32::<T>(lock) - target).abs();
                if best.is_none_or(|(b, _)| score < b) {
                    best = Some((score, stage));
                }
            }
        }
        best.map_or(table, |(_, s)| s)
    }

    /// A stage configuration sharing the calibrated load and branch widths.
    pub fn stage_with(
        &self,
        cap_bank_code: u8,
        tail_enables_n: u8,
        tail_enables_p: u8,
    ) -> StageConfig<T> {
        StageConfig {
            cap_bank_code,
            cap_unit: self.cap_unit,
            base_load: self.base_load,
            tail_enables_n,
            tail_enables_p,
            static_branch_width: self.static_branch_width,
        }
    }

    pub fn corner(&self, corner: Corner) -> CornerParams<T> {
        self.corners[&corner]
    }

    /// Full line configuration for an operating point.
    pub fn line_config(&self, corner: Corner, f_clkin_hz: T) -> DelayLineConfig<T> {
        DelayLineConfig {
            stage: self.stage_for(corner, f_clkin_hz),
            ..self.base_line(corner)
        }
    }

    fn base_line(&self, corner: Corner) -> DelayLineConfig<T> {
        let e = self
            .stage_table
            .iter()
            .find(|e| e.corner == corner)
            .expect("every corner has at least one entry");
        DelayLineConfig {
            num_stages: self.num_stages,
            feedback_tap: self.feedback_tap,
            reference_tap: self.reference_tap,
            stage: self.stage_with(e.cap_bank_code, e.tail_code(), e.tail_code()),
            device: self.device,
            corner: self.corner(corner),
            delay_scale: self.delay_scale,
        }
    }
}

/// Lock code typical of the shipped table, centred in the DAC range.
const TYPICAL_LOCK_CODE: f64 = 736.0;

/// Lock code of an ideal binary search on `line`, or `None` if the search
/// would visit a stalled code, overshoot past 1.4 periods or end within 32
/// codes of a rail.
fn search_fit<T: Scalar>(line: &DelayLineConfig<T>, dac: &DacConfig<T>, period: T) -> Option<u32> {
    let loop_delay = |code: u32| -> Option<T> {
        let bias = code_to_bias(ControlCode(code), dac).ok()?;
        phase_taps(&bias, line).loop_delay()
    };
    let top = max_code(dac.bits);
    let mut code = 0u32;
    let mut step = 1u32 << (dac.bits - 1);
    while step > 0 {
        let d = loop_delay(code)?;
        if d > period * lit(1.4) {
            return None;
        }
        code = if d > period {
            code.saturating_sub(step)
        } else {
            (code + step).min(top)
        };
        step >>= 1;
    }
    let d = loop_delay(code)?;
    (d <= period * lit(1.4) && code >= 32 && code + 31 <= top).then_some(code)
}
