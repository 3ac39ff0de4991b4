//! Behavioral model of the voltage-controlled delay line (VCDL).
//!
//! Each delay element (DE) is two matched current-starved inverters, so the
//! element delay is twice the inverter delay. The inverter delay is taken as
//! proportional to `R_eff * C_B`, with
//!
//! ```text
//! R_eff = (L/W) / (k (V_DD - V_T)) + (L/W_tail) / (k (V_CTRLN - V_T))
//! ```
//!
//! evaluated with corner-adjusted `k` and `V_T`. Only the NMOS side is
//! evaluated; the PMOS side tracks it through the replica bias.
//!
//! Units: volts, picoseconds, kΩ for resistance and fF for capacitance
//! (kΩ·fF = ps).

pub mod calibration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::DelayLineError;
use crate::scalar::{from_u32, lit, to_f64, Scalar};

pub use calibration::{Calibration, StageTableEntry};

/// Number of output phases (`CLK_OUT[7:0]`).
pub const OUTPUT_TAPS: usize = 8;

/// Transistor parameters of the delay element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams<T> {
    /// L/W of the main inverter devices.
    pub length_ratio_main: T,
    /// L/W of a single tail branch unit.
    pub length_ratio_tail_unit: T,
    /// Transconductance scale `k` (mA/V², so resistances come out in kΩ).
    pub transconductance: T,
    /// Threshold voltage `V_T` in volts.
    pub threshold_voltage: T,
    /// Supply `V_DD` in volts.
    pub supply_voltage: T,
}

impl<T: Scalar> DeviceParams<T> {
    pub fn validate(&self) -> Result<(), DelayLineError> {
        let fields = [
            ("length_ratio_main", self.length_ratio_main),
            ("length_ratio_tail_unit", self.length_ratio_tail_unit),
            ("transconductance", self.transconductance),
            ("threshold_voltage", self.threshold_voltage),
            ("supply_voltage", self.supply_voltage),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(DelayLineError::InvalidConfig(format!(
                    "{name} must be strictly positive (got {v})"
                )));
            }
        }
        if self.threshold_voltage >= self.supply_voltage {
            return Err(DelayLineError::InvalidConfig(
                "threshold_voltage must be below supply_voltage".into(),
            ));
        }
        Ok(())
    }
}

/// Process corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corner {
    Slow,
    Nominal,
    Fast,
}

impl Corner {
    pub const ALL: [Corner; 3] = [Corner::Slow, Corner::Nominal, Corner::Fast];

    pub fn name(self) -> &'static str {
        match self {
            Corner::Slow => "slow",
            Corner::Nominal => "nominal",
            Corner::Fast => "fast",
        }
    }
}

impl std::fmt::Display for Corner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Corner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slow" => Ok(Corner::Slow),
            "nominal" => Ok(Corner::Nominal),
            "fast" => Ok(Corner::Fast),
            other => Err(format!(
                "unknown corner `{other}` (expected slow, nominal or fast)"
            )),
        }
    }
}

/// Corner adjustment applied to the device parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerParams<T> {
    pub corner: Corner,
    pub transconductance_scale: T,
    /// Additive threshold shift in volts.
    pub threshold_shift: T,
}

impl<T: Scalar> CornerParams<T> {
    pub fn nominal() -> Self {
        Self {
            corner: Corner::Nominal,
            transconductance_scale: T::one(),
            threshold_shift: T::zero(),
        }
    }

    /// Default corner set: ±15% transconductance, ∓20 mV threshold.
    pub fn default_for(corner: Corner) -> Self {
        match corner {
            Corner::Slow => Self {
                corner,
                transconductance_scale: lit(0.85),
                threshold_shift: lit(0.02),
            },
            Corner::Nominal => Self::nominal(),
            Corner::Fast => Self {
                corner,
                transconductance_scale: lit(1.15),
                threshold_shift: lit(-0.02),
            },
        }
    }
}

/// Per-stage tuning knobs: capacitor bank and tail-branch enables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig<T> {
    /// `CB_EN[1:0]`.
    pub cap_bank_code: u8,
    /// Load added per capacitor-bank step (fF).
    pub cap_unit: T,
    /// Fixed load present at bank code 0 (fF).
    pub base_load: T,
    /// `BW_N[3:0]`.
    pub tail_enables_n: u8,
    /// `BW_P[3:0]`. Carried for completeness; the replica keeps the pull-up
    /// matched so only the NMOS side is evaluated.
    pub tail_enables_p: u8,
    /// Width of the always-on tail branch, in tail-unit widths.
    pub static_branch_width: T,
}

impl<T: Scalar> StageConfig<T> {
    pub fn validate(&self) -> Result<(), DelayLineError> {
        if self.cap_bank_code > 3 {
            return Err(DelayLineError::InvalidConfig(format!(
                "cap_bank_code must be in 0..=3 (got {})",
                self.cap_bank_code
            )));
        }
        if self.tail_enables_n > 15 || self.tail_enables_p > 15 {
            return Err(DelayLineError::InvalidConfig(
                "tail enable codes must be in 0..=15".into(),
            ));
        }
        if !(self.static_branch_width > T::zero()) {
            return Err(DelayLineError::InvalidConfig(
                "static_branch_width must be strictly positive".into(),
            ));
        }
        if self.cap_unit < T::zero() || !(self.base_load > T::zero()) {
            return Err(DelayLineError::InvalidConfig(
                "base_load must be positive and cap_unit non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Total load `C_B` in fF.
    pub fn load_capacitance(&self) -> T {
        self.base_load + self.cap_unit * from_u32::<T>(u32::from(self.cap_bank_code))
    }

    /// Effective NMOS tail width in tail-unit widths.
    pub fn tail_width_n(&self) -> T {
        self.static_branch_width + from_u32::<T>(u32::from(self.tail_enables_n).count_ones())
    }
}

/// Topology and device parameters of the whole line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayLineConfig<T> {
    pub num_stages: usize,
    /// Stage whose output is `CLK_FB`.
    pub feedback_tap: usize,
    /// Stage whose output is `CLK_REF`.
    pub reference_tap: usize,
    pub stage: StageConfig<T>,
    pub device: DeviceParams<T>,
    pub corner: CornerParams<T>,
    /// Proportionality constant between `R_eff * C_B` and inverter delay.
    pub delay_scale: T,
}

impl<T: Scalar> DelayLineConfig<T> {
    pub fn validate(&self) -> Result<(), DelayLineError> {
        self.device.validate()?;
        self.stage.validate()?;
        if self.feedback_tap > self.num_stages || self.feedback_tap <= OUTPUT_TAPS {
            return Err(DelayLineError::InvalidConfig(format!(
                "feedback_tap {} must follow the {OUTPUT_TAPS} output taps and be <= num_stages {}",
                self.feedback_tap, self.num_stages
            )));
        }
        if self.reference_tap == 0 || self.reference_tap >= self.feedback_tap {
            return Err(DelayLineError::InvalidConfig(
                "reference_tap must lie between 1 and feedback_tap".into(),
            ));
        }
        if !(self.corner.transconductance_scale > T::zero()) {
            return Err(DelayLineError::InvalidConfig(
                "transconductance_scale must be positive".into(),
            ));
        }
        if !(self.delay_scale > T::zero()) {
            return Err(DelayLineError::InvalidConfig(
                "delay_scale must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_stage(mut self, stage: StageConfig<T>) -> Self {
        self.stage = stage;
        self
    }

    pub fn with_corner(mut self, corner: CornerParams<T>) -> Self {
        self.corner = corner;
        self
    }

    /// Corner-adjusted transconductance `k'`.
    pub fn corner_transconductance(&self) -> T {
        self.device.transconductance * self.corner.transconductance_scale
    }

    /// Corner-adjusted threshold `V_T'`.
    pub fn corner_threshold(&self) -> T {
        self.device.threshold_voltage + self.corner.threshold_shift
    }

    /// Number of stages between `CLK_REF` and `CLK_FB`; this span locks to one period.
    pub fn loop_stages(&self) -> usize {
        self.feedback_tap - self.reference_tap
    }
}

/// The two tail bias voltages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPair<T> {
    pub v_ctrl_p: T,
    pub v_ctrl_n: T,
}

impl<T: Scalar> BiasPair<T> {
    /// Bias with the NMOS side derived from the PMOS side by the replica.
    pub fn from_replica(v_ctrl_p: T, supply: T) -> Self {
        Self {
            v_ctrl_p,
            v_ctrl_n: supply - v_ctrl_p,
        }
    }
}

fn check_bias<T: Scalar>(
    bias: &BiasPair<T>,
    cfg: &DelayLineConfig<T>,
) -> Result<(), DelayLineError> {
    let vdd = cfg.device.supply_voltage;
    for (name, v) in [("v_ctrl_p", bias.v_ctrl_p), ("v_ctrl_n", bias.v_ctrl_n)] {
        if !(v >= T::zero() && v <= vdd) {
            return Err(DelayLineError::BiasOutOfRange(format!(
                "{name} = {v} V outside [0, {vdd}] V"
            )));
        }
    }
    Ok(())
}

/// Effective pull-down resistance of one current-starved inverter (kΩ).
pub fn effective_resistance<T: Scalar>(
    bias: &BiasPair<T>,
    cfg: &DelayLineConfig<T>,
) -> Result<T, DelayLineError> {
    check_bias(bias, cfg)?;
    let k = cfg.corner_transconductance();
    let vt = cfg.corner_threshold();
    let overdrive = bias.v_ctrl_n - vt;
    if overdrive <= T::zero() {
        return Err(DelayLineError::StallRegion {
            v_ctrl_n: to_f64(bias.v_ctrl_n),
            threshold: to_f64(vt),
        });
    }
    let main = cfg.device.length_ratio_main / (k * (cfg.device.supply_voltage - vt));
    let tail_ratio = cfg.device.length_ratio_tail_unit / cfg.stage.tail_width_n();
    Ok(main + tail_ratio / (k * overdrive))
}

/// Delay of one delay element in ps: `2 * kappa * R_eff * C_B`.
pub fn stage_delay<T: Scalar>(
    bias: &BiasPair<T>,
    cfg: &DelayLineConfig<T>,
) -> Result<T, DelayLineError> {
    let r = effective_resistance(bias, cfg)?;
    Ok(lit::<T>(2.0) * cfg.delay_scale * r * cfg.stage.load_capacitance())
}

/// Edge times of the output phases and the feedback clock, measured from the
/// line input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTaps<T> {
    /// `tap_times[i]` is the output of stage `i + 1`.
    pub tap_times: Option<[T; OUTPUT_TAPS]>,
    pub feedback_time: Option<T>,
    pub propagating: bool,
    reference_tap: usize,
}

impl<T: Scalar> PhaseTaps<T> {
    fn stalled(reference_tap: usize) -> Self {
        Self {
            tap_times: None,
            feedback_time: None,
            propagating: false,
            reference_tap,
        }
    }

    /// Delay from `CLK_REF` to `CLK_FB`.
    pub fn loop_delay(&self) -> Option<T> {
        let taps = self.tap_times?;
        Some(self.feedback_time? - taps[self.reference_tap - 1])
    }

    /// Gaps between consecutive output taps.
    pub fn gaps(&self) -> Option<Vec<T>> {
        let taps = self.tap_times?;
        Some(taps.windows(2).map(|w| w[1] - w[0]).collect())
    }
}

/// Tap times for a line of matched stages.
pub fn phase_taps<T: Scalar>(bias: &BiasPair<T>, cfg: &DelayLineConfig<T>) -> PhaseTaps<T> {
    match stage_delay(bias, cfg) {
        Ok(d) => {
            let mut taps = [T::zero(); OUTPUT_TAPS];
            for (i, t) in taps.iter_mut().enumerate() {
                *t = d * from_u32::<T>(i as u32 + 1);
            }
            PhaseTaps {
                tap_times: Some(taps),
                feedback_time: Some(d * from_u32::<T>(cfg.feedback_tap as u32)),
                propagating: true,
                reference_tap: cfg.reference_tap,
            }
        }
        Err(_) => PhaseTaps::stalled(cfg.reference_tap),
    }
}

/// Per-stage delay multipliers for mismatch studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMismatch<T> {
    multipliers: Vec<T>,
}

impl<T: Scalar> StageMismatch<T> {
    /// All multipliers equal to one.
    pub fn matched(num_stages: usize) -> Self {
        Self {
            multipliers: vec![T::one(); num_stages],
        }
    }

    /// Zero-mean Gaussian multipliers `1 + sigma * N(0, 1)`.
    pub fn gaussian(num_stages: usize, sigma: T, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let multipliers = (0..num_stages)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::one() + sigma * lit::<T>(z)
            })
            .collect();
        Self { multipliers }
    }

    pub fn multipliers(&self) -> &[T] {
        &self.multipliers
    }
}

/// Tap times with per-stage mismatch applied.
pub fn phase_taps_with_mismatch<T: Scalar>(
    bias: &BiasPair<T>,
    cfg: &DelayLineConfig<T>,
    mismatch: &StageMismatch<T>,
) -> PhaseTaps<T> {
    assert!(
        mismatch.multipliers.len() >= cfg.feedback_tap,
        "mismatch vector shorter than the feedback tap"
    );
    let Ok(d) = stage_delay(bias, cfg) else {
        return PhaseTaps::stalled(cfg.reference_tap);
    };
    let mut arrival = Vec::with_capacity(cfg.feedback_tap);
    let mut weight = T::zero();
    for m in &mismatch.multipliers[..cfg.feedback_tap] {
        weight = weight + *m;
        arrival.push(d * weight);
    }
    let mut taps = [T::zero(); OUTPUT_TAPS];
    taps.copy_from_slice(&arrival[..OUTPUT_TAPS]);
    PhaseTaps {
        tap_times: Some(taps),
        feedback_time: Some(arrival[cfg.feedback_tap - 1]),
        propagating: true,
        reference_tap: cfg.reference_tap,
    }
}

/// Sensitivity of the REF-to-FB delay to `V_CTRLP` (ps/V), by central
/// difference with the replica holding `V_CTRLN = V_DD - V_CTRLP`.
pub fn vcdl_gain<T: Scalar>(
    bias: &BiasPair<T>,
    cfg: &DelayLineConfig<T>,
    dv: T,
) -> Result<T, DelayLineError> {
    if !(dv > T::zero()) {
        return Err(DelayLineError::InvalidConfig("dv must be positive".into()));
    }
    let vdd = cfg.device.supply_voltage;
    let half = dv / lit(2.0);
    let span = |vp: T| -> Result<T, DelayLineError> {
        let b = BiasPair::from_replica(vp, vdd);
        let d = stage_delay(&b, cfg)?;
        Ok(d * from_u32::<T>(cfg.loop_stages() as u32))
    };
    let hi = span(bias.v_ctrl_p + half)?;
    let lo = span(bias.v_ctrl_p - half)?;
    Ok((hi - lo) / dv)
}
