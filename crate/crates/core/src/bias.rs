//! DAC and replica bias generator.

use serde::{Deserialize, Serialize};

use crate::delay_line::BiasPair;
use crate::error::BiasError;
use crate::scalar::{from_u32, lit, Scalar};

/// Digital code driving the DAC.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ControlCode(pub u32);

impl ControlCode {
    pub const ZERO: ControlCode = ControlCode(0);

    pub fn new(value: u32, bits: u32) -> Result<Self, BiasError> {
        if value > max_code(bits) {
            return Err(BiasError::CodeOutOfRange { code: value, bits });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for ControlCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Largest code of a `bits`-wide DAC.
pub fn max_code(bits: u32) -> u32 {
    ((1u64 << bits) - 1) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacConfig<T> {
    pub bits: u32,
    /// Full-scale output in volts.
    pub full_scale: T,
    /// Rail the replica complements against (V).
    pub supply_voltage: T,
    /// Control cycles before a new code is valid at the output.
    pub settle_cycles: u32,
}

impl<T: Scalar> Default for DacConfig<T> {
    fn default() -> Self {
        Self {
            bits: 10,
            full_scale: lit(0.75),
            supply_voltage: lit(0.75),
            settle_cycles: 1,
        }
    }
}

impl<T: Scalar> DacConfig<T> {
    pub fn validate(&self) -> Result<(), BiasError> {
        if self.bits == 0 || self.bits > 24 {
            return Err(BiasError::InvalidConfig(format!(
                "bits must be in 1..=24 (got {})",
                self.bits
            )));
        }
        if !(self.full_scale > T::zero() && self.full_scale <= self.supply_voltage) {
            return Err(BiasError::InvalidConfig(
                "full_scale must be in (0, supply_voltage]".into(),
            ));
        }
        if self.settle_cycles == 0 {
            return Err(BiasError::InvalidConfig(
                "settle_cycles must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn max_code(&self) -> ControlCode {
        ControlCode(max_code(self.bits))
    }

    /// `V_FS / 2^B`.
    pub fn lsb_voltage(&self) -> T {
        self.full_scale / lit::<T>((1u64 << self.bits) as f64)
    }
}

/// Maps a code to the tail biases. Code 0 is the strongest drive (minimum delay).
pub fn code_to_bias<T: Scalar>(
    code: ControlCode,
    dac: &DacConfig<T>,
) -> Result<BiasPair<T>, BiasError> {
    if code.0 > max_code(dac.bits) {
        return Err(BiasError::CodeOutOfRange {
            code: code.0,
            bits: dac.bits,
        });
    }
    let v_ctrl_p = dac.lsb_voltage() * from_u32::<T>(code.0);
    Ok(BiasPair::from_replica(v_ctrl_p, dac.supply_voltage))
}

/// Time resolution `K_VCDL * dV_LSB` in ps, for a gain in ps/V.
pub fn time_resolution<T: Scalar>(dac: &DacConfig<T>, gain_ps_per_v: T) -> T {
    gain_ps_per_v * dac.lsb_voltage()
}

/// Phase resolution in radians for a time step in ps.
pub fn phase_resolution<T: Scalar>(dt_lsb_ps: T, f_clkin_hz: T) -> T {
    lit::<T>(2.0) * T::PI() * f_clkin_hz * dt_lsb_ps * lit(1e-12)
}
