//! Closed-loop simulation, one controller update per control-clock cycle.
//!
//! Each cycle the code in effect is evaluated on the plant, a seeded Gaussian
//! jitter sample is added to the reference edge, the phase and toggle
//! detectors are sampled and the controller is stepped.

mod plant;
mod stats;

pub use plant::{LinearPlant, Plant, PlantResponse, VcdlPlant};
pub use stats::{steady_state_stats, SteadyStateStats};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{ControlCode, DacConfig};
use crate::controller::{self, ControllerState, FsmState, Scheme, SchemeParams};
use crate::delay_line::{Calibration, Corner, DelayLineConfig, StageConfig};
use crate::detectors::{bbpd_decide, clock_edges, toggle_detect, PhaseSample, ToggleTimingParams};
use crate::error::EngineError;
use crate::scalar::{from_u32, lit, Scalar};

/// Control-clock division ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Divider(u32);

impl Divider {
    pub const ALLOWED: [u32; 5] = [1, 2, 4, 6, 8];

    pub fn new(n: u32) -> Result<Self, EngineError> {
        if Self::ALLOWED.contains(&n) {
            Ok(Self(n))
        } else {
            Err(EngineError::InvalidDivider(n))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for Divider {
    type Error = EngineError;

    fn try_from(n: u32) -> Result<Self, Self::Error> {
        Self::new(n)
    }
}

impl From<Divider> for u32 {
    fn from(d: Divider) -> u32 {
        d.0
    }
}

/// `CLK_CTRL` frequency.
pub fn divide_clock<T: Scalar>(f_clkin: T, n: Divider) -> T {
    f_clkin / from_u32::<T>(n.0)
}

/// Forces the toggle flag at one control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StallInjection {
    pub cycle: u32,
    pub stalled: bool,
}

/// Cycles `[start, end)` during which the controller is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeWindow {
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub f_clkin_hz: T,
    pub divider: Divider,
    pub line: DelayLineConfig<T>,
    pub dac: DacConfig<T>,
    pub scheme: Scheme,
    pub params: SchemeParams,
    pub jitter_rms_ps: T,
    pub stall_injections: Vec<StallInjection>,
    /// Stage settings tried in order after each Error.
    pub retry_policy: Vec<StageConfig<T>>,
    pub max_cycles: u32,
    pub seed: u64,
    pub toggle_timing: ToggleTimingParams<T>,
    /// Cycles simulated after lock for steady-state statistics, on top of
    /// `max_cycles`.
    pub observe_after_lock: u32,
    /// Reset and enable time before the search, reported separately.
    pub preamble_ns: T,
    pub freeze_windows: Vec<FreezeWindow>,
}

impl<T: Scalar> Scenario<T> {
    /// Scenario built from a calibration's defaults for one operating point.
    pub fn from_calibration(
        cal: &Calibration<T>,
        corner: Corner,
        f_clkin_hz: T,
        divider: Divider,
        scheme: Scheme,
    ) -> Self {
        let dac = DacConfig::default();
        Self {
            f_clkin_hz,
            divider,
            line: cal.line_config(corner, f_clkin_hz),
            dac,
            scheme,
            params: SchemeParams::for_bits(dac.bits),
            jitter_rms_ps: T::zero(),
            stall_injections: Vec::new(),
            retry_policy: Vec::new(),
            max_cycles: 4096,
            seed: 1,
            toggle_timing: cal.toggle_timing,
            observe_after_lock: 16,
            preamble_ns: T::zero(),
            freeze_windows: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidScenario(m));
        if !(self.f_clkin_hz > T::zero()) || !self.f_clkin_hz.is_finite() {
            return bad(format!(
                "f_clkin must be positive (got {} Hz)",
                self.f_clkin_hz
            ));
        }
        if !(self.jitter_rms_ps >= T::zero()) {
            return bad(format!(
                "jitter_rms must be >= 0 (got {} ps)",
                self.jitter_rms_ps
            ));
        }
        if !(self.preamble_ns >= T::zero()) {
            return bad(format!(
                "preamble must be >= 0 (got {} ns)",
                self.preamble_ns
            ));
        }
        self.dac.validate()?;
        self.line.validate()?;
        for s in &self.retry_policy {
            s.validate()?;
        }
        self.params.validate()?;
        if self.params.bits != self.dac.bits {
            return bad(format!(
                "controller bits {} differ from DAC bits {}",
                self.params.bits, self.dac.bits
            ));
        }
        if self.max_cycles < self.dac.bits + 2 {
            return bad(format!(
                "max_cycles must be >= bits + 2 = {} (got {})",
                self.dac.bits + 2,
                self.max_cycles
            ));
        }
        if let Some(i) = self.stall_injections.iter().find(|i| i.cycle == 0) {
            return bad(format!(
                "stall injection at cycle {} (cycles start at 1)",
                i.cycle
            ));
        }
        if let Some(w) = self
            .freeze_windows
            .iter()
            .find(|w| w.start == 0 || w.end <= w.start)
        {
            return bad(format!(
                "freeze window [{}, {}) is empty or starts before cycle 1",
                w.start, w.end
            ));
        }
        Ok(())
    }

    /// Input clock period in ps.
    pub fn period_ps(&self) -> T {
        lit::<T>(1e12) / self.f_clkin_hz
    }

    pub fn f_clkctrl_hz(&self) -> T {
        divide_clock(self.f_clkin_hz, self.divider)
    }

    /// Window over which the toggle detector observes one code: one update
    /// interval, but never below the detector's 1.5-period minimum.
    pub fn toggle_window_ps(&self) -> T {
        let cycles = from_u32::<T>(self.divider.get() * self.dac.settle_cycles);
        (cycles * self.period_ps()).max(self.period_ps() * lit(1.5))
    }

    pub fn plant(&self) -> VcdlPlant<T> {
        VcdlPlant {
            line: self.line,
            dac: self.dac,
        }
    }
}

/// One control cycle: the code in effect and what the detectors saw, plus
/// the controller state after its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub cycle: u32,
    pub time_ns: T,
    pub code: ControlCode,
    pub step: u32,
    pub v_ctrl_p_mv: T,
    pub v_ctrl_n_mv: T,
    pub fb_delay_ps: Option<T>,
    /// Loop delay minus one input period.
    pub skew_ps: Option<T>,
    /// Reference-edge jitter sample applied at the phase detector.
    pub jitter_ps: T,
    pub pd_er: bool,
    pub toggling: bool,
    pub fsm: FsmState,
    pub stall_event: bool,
    pub locked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Locked,
    Error,
    NonConvergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockSummary<T> {
    pub outcome: Outcome,
    pub locked_at_cycle: Option<u32>,
    /// Search time from enable, excluding the preamble.
    pub locked_at_time_ns: Option<T>,
    pub preamble_ns: T,
    /// Code held when lock was declared.
    pub final_code: ControlCode,
    pub harmonic: bool,
    pub dither_amplitude_codes: Option<u32>,
    pub residual_skew_ps: Option<T>,
    /// Largest |skew| before lock.
    pub overshoot_ps: Option<T>,
    /// Loop-delay change of one code at the final code.
    pub lsb_ps: Option<T>,
    pub stall_recoveries: u32,
    pub retries_used: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub summary: LockSummary<T>,
}

/// Runs a scenario on its delay line.
pub fn run_lock<T: Scalar>(scenario: &Scenario<T>) -> Result<LockTrace<T>, EngineError> {
    scenario.validate()?;
    let mut plants = vec![scenario.plant()];
    plants.extend(scenario.retry_policy.iter().map(|stage| VcdlPlant {
        line: scenario.line.with_stage(*stage),
        dac: scenario.dac,
    }));
    simulate(scenario, &plants)
}

/// Runs a scenario's controller and detectors on an arbitrary plant. Retry
/// policy entries are ignored.
pub fn run_lock_with_plant<T: Scalar, P: Plant<T>>(
    scenario: &Scenario<T>,
    plant: &P,
) -> Result<LockTrace<T>, EngineError> {
    scenario.validate()?;
    if plant.bits() != scenario.dac.bits {
        return Err(EngineError::InvalidScenario(format!(
            "plant has {} bits, scenario DAC has {}",
            plant.bits(),
            scenario.dac.bits
        )));
    }
    simulate(scenario, std::slice::from_ref(plant))
}

/// Runs scenarios in parallel; results keep the input order.
pub fn run_many<T: Scalar>(scenarios: &[Scenario<T>]) -> Vec<Result<LockTrace<T>, EngineError>> {
    scenarios.par_iter().map(run_lock).collect()
}

/// Toggle flag the detector produces for one plant response.
pub fn physical_toggling<T: Scalar>(
    response: &PlantResponse<T>,
    scenario: &Scenario<T>,
) -> Result<bool, EngineError> {
    let period = scenario.period_ps();
    let window = scenario.toggle_window_ps();
    let edges = match response.ref_time {
        Some(delay) if response.propagating() => clock_edges(period, delay, T::zero(), window),
        _ => Vec::new(),
    };
    let out = toggle_detect(&edges, period, T::zero(), window, &scenario.toggle_timing)
        .map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
    Ok(out.toggling)
}

/// Whether `code` sits at a multiple of two or more input periods.
pub fn detect_harmonic_lock<T: Scalar, P: Plant<T> + ?Sized>(
    plant: &P,
    code: ControlCode,
    period_ps: T,
) -> bool {
    let Ok(resp) = plant.evaluate(code) else {
        return false;
    };
    let Some(delay) = resp.loop_delay() else {
        return false;
    };
    let Some(lsb) = plant.local_lsb(code) else {
        return false;
    };
    let m = (delay / period_ps).round();
    m >= lit(2.0) && (delay - m * period_ps).abs() <= lsb * lit(4.0)
}

fn simulate<T: Scalar, P: Plant<T>>(
    scenario: &Scenario<T>,
    plants: &[P],
) -> Result<LockTrace<T>, EngineError> {
    let period = scenario.period_ps();
    let ctrl_period_ns = from_u32::<T>(scenario.divider.get()) / scenario.f_clkin_hz * lit(1e9);
    let settle = scenario.dac.settle_cycles;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut plant_idx = 0;
    let mut state = ControllerState::new(scenario.scheme, scenario.params)?.enable();
    let mut rows = Vec::new();
    let mut last_pd = false;
    let mut locked_at: Option<u32> = None;
    let mut lock_code = state.code;
    let mut stall_recoveries = 0;
    let mut error: Option<String> = None;
    let mut outcome = Outcome::NonConvergent;

    let mut cycle = 0;
    loop {
        cycle += 1;
        if locked_at.is_none() && cycle > scenario.max_cycles {
            break;
        }
        let frozen = scenario
            .freeze_windows
            .iter()
            .any(|w| (w.start..w.end).contains(&cycle));
        state = if frozen {
            controller::freeze(state)
        } else {
            controller::unfreeze(state)
        };

        let plant = &plants[plant_idx];
        let resp = plant.evaluate(state.code)?;
        let z: f64 = StandardNormal.sample(&mut rng);
        let jitter = scenario.jitter_rms_ps * lit(z);
        let loop_delay = resp.loop_delay();
        let pd_er = match (resp.ref_time, resp.fb_time, loop_delay) {
            (Some(r), Some(f), Some(d)) => {
                let m = (d / period).round().max(T::one());
                let sample = PhaseSample {
                    ref_edge_time: r + m * period,
                    fb_edge_time: f,
                };
                bbpd_decide(&sample, jitter)
            }
            _ => last_pd,
        };
        last_pd = pd_er;
        let toggling = match scenario.stall_injections.iter().find(|i| i.cycle == cycle) {
            Some(i) => !i.stalled,
            None => physical_toggling(&resp, scenario)?,
        };

        let code = state.code;
        let prior_fsm = state.fsm;
        let updates = cycle % settle == 0;
        if updates {
            match controller::step(state, pd_er, toggling) {
                Ok(next) => state = next,
                Err(e) => {
                    state.fsm = FsmState::Error;
                    error = Some(e.to_string());
                }
            }
        }
        let reverted = match prior_fsm {
            FsmState::Searching => state.fsm == FsmState::StallRevert,
            FsmState::Locked => updates && !toggling,
            _ => false,
        };
        if reverted && scenario.scheme == Scheme::BinarySearch {
            stall_recoveries += 1;
        }

        rows.push(TraceRow {
            cycle,
            time_ns: ctrl_period_ns * from_u32::<T>(cycle),
            code,
            step: state.step,
            v_ctrl_p_mv: resp.bias.v_ctrl_p * lit(1e3),
            v_ctrl_n_mv: resp.bias.v_ctrl_n * lit(1e3),
            fb_delay_ps: resp.fb_time,
            skew_ps: loop_delay.map(|d| d - period),
            jitter_ps: jitter,
            pd_er,
            toggling,
            fsm: state.fsm,
            stall_event: state.stall_event,
            locked: state.locked,
        });

        if state.locked && locked_at.is_none() {
            locked_at = Some(cycle);
            lock_code = state.code;
            outcome = Outcome::Locked;
        }
        if let Some(at) = locked_at {
            if cycle >= at + scenario.observe_after_lock {
                break;
            }
        }
        if state.fsm == FsmState::Error {
            if plant_idx + 1 < plants.len() {
                plant_idx += 1;
                state = ControllerState::new(scenario.scheme, scenario.params)?.enable();
                last_pd = false;
                error = None;
                continue;
            }
            outcome = Outcome::Error;
            if error.is_none() {
                error = Some("stall persisted after recovery".into());
            }
            break;
        }
    }

    let plant = &plants[plant_idx];
    let final_code = if locked_at.is_some() {
        lock_code
    } else {
        state.code
    };
    let harmonic = locked_at.is_some() && detect_harmonic_lock(plant, final_code, period);
    let overshoot_ps = rows
        .iter()
        .take_while(|r| locked_at.is_none_or(|at| r.cycle < at))
        .filter_map(|r| r.skew_ps.map(|s| s.abs()))
        .reduce(T::max);
    let mut trace = LockTrace {
        rows,
        summary: LockSummary {
            outcome,
            locked_at_cycle: locked_at,
            locked_at_time_ns: locked_at.map(|c| ctrl_period_ns * from_u32::<T>(c)),
            preamble_ns: scenario.preamble_ns,
            final_code,
            harmonic,
            dither_amplitude_codes: None,
            residual_skew_ps: None,
            overshoot_ps,
            lsb_ps: plant.local_lsb(final_code),
            stall_recoveries,
            retries_used: plant_idx as u32,
            error,
        },
    };
    if let Ok(st) = steady_state_stats(&trace, scenario.observe_after_lock) {
        trace.summary.dither_amplitude_codes = Some(st.dither_amplitude_codes);
        trace.summary.residual_skew_ps = Some(st.residual_skew_ps);
    }
    Ok(trace)
}
