//! Code-to-timing plants the engine can close the loop around.

use crate::bias::{code_to_bias, max_code, ControlCode, DacConfig};
use crate::delay_line::{phase_taps, BiasPair, DelayLineConfig};
use crate::error::EngineError;
use crate::scalar::{from_u32, Scalar};

/// Timing seen by the detectors for one code. Edge times in ps from the
/// line input; `None` when the clock does not propagate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantResponse<T> {
    pub bias: BiasPair<T>,
    pub ref_time: Option<T>,
    pub fb_time: Option<T>,
}

impl<T: Scalar> PlantResponse<T> {
    pub fn propagating(&self) -> bool {
        self.ref_time.is_some() && self.fb_time.is_some()
    }

    /// `CLK_REF` to `CLK_FB` delay.
    pub fn loop_delay(&self) -> Option<T> {
        Some(self.fb_time? - self.ref_time?)
    }
}

pub trait Plant<T: Scalar>: Sync {
    fn evaluate(&self, code: ControlCode) -> Result<PlantResponse<T>, EngineError>;

    fn bits(&self) -> u32;

    /// Smallest code at which the clock stops propagating.
    fn stall_threshold_code(&self) -> Option<ControlCode> {
        (0..=max_code(self.bits()))
            .map(ControlCode)
            .find(|&c| self.evaluate(c).is_ok_and(|r| !r.propagating()))
    }

    /// Loop-delay change for one code step at `code` (ps).
    fn local_lsb(&self, code: ControlCode) -> Option<T> {
        let top = max_code(self.bits());
        let (lo, hi) = if code.0 < top {
            (code, ControlCode(code.0 + 1))
        } else {
            (ControlCode(code.0.saturating_sub(1)), code)
        };
        let a = self.evaluate(lo).ok()?.loop_delay()?;
        let b = self.evaluate(hi).ok()?.loop_delay()?;
        Some((b - a).abs())
    }
}

/// The delay line behind the DAC and replica bias.
#[derive(Debug, Clone, PartialEq)]
pub struct VcdlPlant<T> {
    pub line: DelayLineConfig<T>,
    pub dac: DacConfig<T>,
}

impl<T: Scalar> Plant<T> for VcdlPlant<T> {
    fn evaluate(&self, code: ControlCode) -> Result<PlantResponse<T>, EngineError> {
        let bias = code_to_bias(code, &self.dac)?;
        let taps = phase_taps(&bias, &self.line);
        Ok(PlantResponse {
            bias,
            ref_time: taps.tap_times.map(|t| t[self.line.reference_tap - 1]),
            fb_time: taps.feedback_time,
        })
    }

    fn bits(&self) -> u32 {
        self.dac.bits
    }
}

/// Idealized plant whose loop delay is linear in the code, optionally with
/// every code above `stall_above` stalled.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant<T> {
    pub dac: DacConfig<T>,
    pub min_loop_ps: T,
    pub max_loop_ps: T,
    /// Delay from the line input to `CLK_REF`.
    pub ref_offset_ps: T,
    pub stall_above: Option<ControlCode>,
}

impl<T: Scalar> LinearPlant<T> {
    pub fn new(bits: u32, min_loop_ps: T, max_loop_ps: T) -> Self {
        Self {
            dac: DacConfig {
                bits,
                ..DacConfig::default()
            },
            min_loop_ps,
            max_loop_ps,
            ref_offset_ps: T::zero(),
            stall_above: None,
        }
    }

    pub fn lsb_ps(&self) -> T {
        (self.max_loop_ps - self.min_loop_ps) / from_u32::<T>(max_code(self.dac.bits))
    }

    /// Highest code whose loop delay does not exceed `target_ps`.
    pub fn code_below(&self, target_ps: T) -> ControlCode {
        let k = ((target_ps - self.min_loop_ps) / self.lsb_ps()).floor();
        let top = from_u32::<T>(max_code(self.dac.bits));
        ControlCode(k.max(T::zero()).min(top).to_u32().unwrap_or(0))
    }
}

impl<T: Scalar> Plant<T> for LinearPlant<T> {
    fn evaluate(&self, code: ControlCode) -> Result<PlantResponse<T>, EngineError> {
        let bias = code_to_bias(code, &self.dac)?;
        if self.stall_above.is_some_and(|s| code > s) {
            return Ok(PlantResponse {
                bias,
                ref_time: None,
                fb_time: None,
            });
        }
        let loop_delay = self.min_loop_ps + self.lsb_ps() * from_u32::<T>(code.0);
        Ok(PlantResponse {
            bias,
            ref_time: Some(self.ref_offset_ps),
            fb_time: Some(self.ref_offset_ps + loop_delay),
        })
    }

    fn bits(&self) -> u32 {
        self.dac.bits
    }
}
