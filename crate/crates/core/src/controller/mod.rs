//! Digital loop controller: binary-search FSM with stall recovery, and the
//! linear and coarse-fine baselines.

mod predict;

pub use predict::{
    coarse_fine_k_opt, predict_lock_time_bs, predict_lock_time_coarse_fine,
    predict_lock_time_linear,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bias::{max_code, ControlCode};
use crate::error::ControllerError;

/// Locking algorithm driving the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Linear,
    CoarseFine2,
    CoarseFine3,
    BinarySearch,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Linear,
        Scheme::CoarseFine2,
        Scheme::CoarseFine3,
        Scheme::BinarySearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Linear => "linear",
            Scheme::CoarseFine2 => "coarse_fine2",
            Scheme::CoarseFine3 => "coarse_fine3",
            Scheme::BinarySearch => "binary_search",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected linear, coarse_fine2, coarse_fine3 or binary_search)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    Reset,
    Searching,
    StallRevert,
    Locked,
    Error,
    Frozen,
}

impl FsmState {
    /// Name used in trace output.
    pub fn name(self) -> &'static str {
        match self {
            FsmState::Reset => "Reset",
            FsmState::Searching => "Searching",
            FsmState::StallRevert => "StallRevert",
            FsmState::Locked => "Locked",
            FsmState::Error => "Error",
            FsmState::Frozen => "Frozen",
        }
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which way a PD decision moves the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdPolarity {
    /// `PD_ER = 1` lowers the code (the VCDL delay is too long).
    #[default]
    ErLowersCode,
    ErRaisesCode,
}

impl PdPolarity {
    fn raises(self, pd_er: bool) -> bool {
        match self {
            PdPolarity::ErLowersCode => !pd_er,
            PdPolarity::ErRaisesCode => pd_er,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeParams {
    pub bits: u32,
    pub coarse_step_k: u32,
    pub medium_step: u32,
    pub initial_step: u32,
    pub initial_code: ControlCode,
    pub polarity: PdPolarity,
}

impl SchemeParams {
    /// Defaults for a `bits`-wide DAC.
    pub fn for_bits(bits: u32) -> Self {
        Self {
            bits,
            coarse_step_k: 12,
            medium_step: 3,
            initial_step: 1 << (bits - 1),
            initial_code: ControlCode::ZERO,
            polarity: PdPolarity::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.bits == 0 || self.bits > 24 {
            return Err(ControllerError::InvalidParams(format!(
                "bits must be in 1..=24 (got {})",
                self.bits
            )));
        }
        if self.coarse_step_k == 0 {
            return Err(ControllerError::InvalidParams(
                "coarse_step_k must be >= 1".into(),
            ));
        }
        if self.medium_step == 0 {
            return Err(ControllerError::InvalidParams(
                "medium_step must be >= 1".into(),
            ));
        }
        if !self.initial_step.is_power_of_two() || self.initial_step > 1 << (self.bits - 1) {
            return Err(ControllerError::InvalidParams(format!(
                "initial_step must be a power of two no larger than {} (got {})",
                1u32 << (self.bits - 1),
                self.initial_step
            )));
        }
        if self.initial_code.0 > max_code(self.bits) {
            return Err(ControllerError::InvalidParams(format!(
                "initial_code {} exceeds the {}-bit range",
                self.initial_code, self.bits
            )));
        }
        Ok(())
    }
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self::for_bits(10)
    }
}

/// Step-size phase of the linear and coarse-fine baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SearchPhase {
    Coarse,
    Medium,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControllerState {
    pub fsm: FsmState,
    pub code: ControlCode,
    /// Last code known to propagate.
    pub code_prev: ControlCode,
    /// Pending step: the size of the next update.
    pub step: u32,
    /// Sticky flag raised by the first stall recovery.
    pub stall_event: bool,
    pub locked: bool,
    pub scheme: Scheme,
    pub params: SchemeParams,
    /// Set by the step that follows a revert; cleared by the next good update.
    pub retry_applied: bool,
    pub phase: SearchPhase,
    pub last_pd: Option<bool>,
    resume: Option<FsmState>,
}

impl ControllerState {
    /// A controller held in reset.
    pub fn new(scheme: Scheme, params: SchemeParams) -> Result<Self, ControllerError> {
        params.validate()?;
        Ok(Self {
            fsm: FsmState::Reset,
            code: params.initial_code,
            code_prev: params.initial_code,
            step: 0,
            stall_event: false,
            locked: false,
            scheme,
            params,
            retry_applied: false,
            phase: SearchPhase::Fine,
            last_pd: None,
            resume: None,
        })
    }

    /// Releases reset and arms the first search update.
    pub fn enable(self) -> Self {
        let p = self.params;
        let (phase, step) = match self.scheme {
            Scheme::BinarySearch => (SearchPhase::Coarse, p.initial_step),
            Scheme::Linear => (SearchPhase::Fine, 1),
            Scheme::CoarseFine2 | Scheme::CoarseFine3 if p.coarse_step_k > 1 => {
                (SearchPhase::Coarse, p.coarse_step_k)
            }
            Scheme::CoarseFine2 | Scheme::CoarseFine3 => (SearchPhase::Fine, 1),
        };
        Self {
            fsm: FsmState::Searching,
            code: p.initial_code,
            code_prev: p.initial_code,
            step,
            stall_event: false,
            locked: false,
            retry_applied: false,
            phase,
            last_pd: None,
            resume: None,
            ..self
        }
    }

    pub fn max_code(&self) -> u32 {
        max_code(self.params.bits)
    }

    /// Step size of the current baseline phase.
    fn phase_step(&self) -> u32 {
        match self.phase {
            SearchPhase::Coarse => self.params.coarse_step_k,
            SearchPhase::Medium => self.params.medium_step,
            SearchPhase::Fine => 1,
        }
    }

    fn moved(&self, raise: bool, by: u32) -> ControlCode {
        let c = self.code.0;
        ControlCode(if raise {
            c.saturating_add(by).min(self.max_code())
        } else {
            c.saturating_sub(by)
        })
    }
}

/// Advances whichever scheme the state runs by one control cycle.
pub fn step(
    state: ControllerState,
    pd_er: bool,
    toggling: bool,
) -> Result<ControllerState, ControllerError> {
    match state.scheme {
        Scheme::BinarySearch => Ok(bs_step(state, pd_er, toggling)),
        Scheme::Linear => linear_step(state, pd_er),
        Scheme::CoarseFine2 | Scheme::CoarseFine3 => coarse_fine_step(state, pd_er),
    }
}

/// One binary-search update.
///
/// The step register is halved on every applied update and reaches zero
/// after the unit step; the following cycle verifies that the final code
/// propagates and declares lock. A stall reverts to the last working code
/// and retries from there with the already-halved step; with no finer step
/// left the restored code is taken as the lock point. A second stall at the
/// halved step, or a stall persisting through the revert, is an error.
pub fn bs_step(state: ControllerState, pd_er: bool, toggling: bool) -> ControllerState {
    let mut s = state;
    let raise = s.params.polarity.raises(pd_er);
    match s.fsm {
        FsmState::Searching if toggling => {
            if s.step == 0 {
                s.fsm = FsmState::Locked;
                s.locked = true;
                s.step = 1;
            } else {
                s.code_prev = s.code;
                s.code = s.moved(raise, s.step);
                s.step >>= 1;
                s.retry_applied = false;
            }
        }
        FsmState::Searching => {
            if s.retry_applied {
                s.fsm = FsmState::Error;
            } else {
                s.code = s.code_prev;
                s.stall_event = true;
                s.fsm = FsmState::StallRevert;
            }
        }
        FsmState::StallRevert => {
            if !toggling {
                s.fsm = FsmState::Error;
            } else if s.step == 0 {
                s.fsm = FsmState::Locked;
                s.locked = true;
                s.step = 1;
            } else {
                s.code_prev = s.code;
                s.code = s.moved(raise, s.step);
                s.step >>= 1;
                s.retry_applied = true;
                s.fsm = FsmState::Searching;
            }
        }
        FsmState::Locked => {
            if toggling {
                s.code_prev = s.code;
                s.code = s.moved(raise, 1);
            } else {
                s.code = s.code_prev;
                s.stall_event = true;
            }
        }
        FsmState::Reset | FsmState::Error | FsmState::Frozen => {}
    }
    s
}

/// One update of the linear search (coarse-fine with a unit step).
pub fn linear_step(
    state: ControllerState,
    pd_er: bool,
) -> Result<ControllerState, ControllerError> {
    baseline_step(state, pd_er)
}

/// One update of the two- or three-step coarse-fine search.
pub fn coarse_fine_step(
    state: ControllerState,
    pd_er: bool,
) -> Result<ControllerState, ControllerError> {
    baseline_step(state, pd_er)
}

fn baseline_step(state: ControllerState, pd_er: bool) -> Result<ControllerState, ControllerError> {
    let mut s = state;
    match s.fsm {
        FsmState::Searching | FsmState::Locked => {}
        _ => return Ok(s),
    }
    let raise = s.params.polarity.raises(pd_er);
    let reversed = s.last_pd.is_some_and(|last| last != pd_er);
    s.last_pd = Some(pd_er);
    if s.fsm == FsmState::Searching && reversed {
        match s.phase {
            SearchPhase::Coarse if s.scheme == Scheme::CoarseFine3 && s.params.medium_step > 1 => {
                s.phase = SearchPhase::Medium;
            }
            SearchPhase::Coarse | SearchPhase::Medium => s.phase = SearchPhase::Fine,
            SearchPhase::Fine => {
                s.fsm = FsmState::Locked;
                s.locked = true;
            }
        }
    }
    let at_rail = if raise {
        s.code.0 == s.max_code()
    } else {
        s.code.0 == 0
    };
    if at_rail && s.fsm == FsmState::Searching {
        s.fsm = FsmState::Error;
        return Err(ControllerError::RangeExhausted { code: s.code.0 });
    }
    s.step = s.phase_step();
    s.code_prev = s.code;
    s.code = s.moved(raise, s.step);
    Ok(s)
}

/// Holds code and step; the state can still be sampled.
pub fn freeze(state: ControllerState) -> ControllerState {
    match state.fsm {
        FsmState::Frozen => state,
        prior => ControllerState {
            fsm: FsmState::Frozen,
            resume: Some(prior),
            ..state
        },
    }
}

/// Resumes the state held before `freeze`.
pub fn unfreeze(state: ControllerState) -> ControllerState {
    match (state.fsm, state.resume) {
        (FsmState::Frozen, Some(prior)) => ControllerState {
            fsm: prior,
            resume: None,
            ..state
        },
        _ => state,
    }
}
