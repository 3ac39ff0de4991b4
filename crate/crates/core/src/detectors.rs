//! Bang-bang phase detector and clock toggle detector.

use serde::{Deserialize, Serialize};

use crate::error::DetectorError;
use crate::scalar::{lit, to_f64, Scalar};

/// Edge pair seen by the phase detector (ps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample<T> {
    pub ref_edge_time: T,
    pub fb_edge_time: T,
}

/// `PD_ER`: true when `CLK_REF` strictly leads `CLK_FB`.
///
/// Coincident edges resolve to false.
pub fn bbpd_decide<T: Scalar>(sample: &PhaseSample<T>, jitter_offset: T) -> bool {
    sample.ref_edge_time + jitter_offset < sample.fb_edge_time
}

/// Flip-flop and gate delays of the toggle detector (ps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToggleTimingParams<T> {
    pub t_setup: T,
    pub t_r2q: T,
    pub t_d_buf: T,
    pub t_d_ed: T,
}

impl<T: Scalar> Default for ToggleTimingParams<T> {
    fn default() -> Self {
        Self {
            t_setup: lit(10.0),
            t_r2q: lit(15.0),
            t_d_buf: lit(5.0),
            t_d_ed: lit(10.0),
        }
    }
}

impl<T: Scalar> ToggleTimingParams<T> {
    /// Delay from a monitored edge until the first flip-flop is cleared.
    pub fn clear_latency(&self) -> T {
        self.t_d_buf + self.t_d_ed + self.t_r2q
    }
}

/// Result of one toggle-detector evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToggleOutcome<T> {
    /// Detector output: false once a stalled clock has been captured.
    pub toggling: bool,
    /// Input-clock edge at which the stall was captured.
    pub flagged_at: Option<T>,
}

/// Evaluates the toggle detector over `[window_start, window_end]`.
///
/// `CLK_IN` rises at integer multiples of `input_period`. Each rising edge
/// arms the first flip-flop; any monitored edge (rise or fall) clears it
/// through the edge detector. The second flip-flop captures an armed,
/// uncleared first stage at the next rising edge, which drops `toggling`
/// until the detector is reset. Both flip-flops start reset at
/// `window_start`.
pub fn toggle_detect<T: Scalar>(
    monitored_edges: &[T],
    input_period: T,
    window_start: T,
    window_end: T,
    params: &ToggleTimingParams<T>,
) -> Result<ToggleOutcome<T>, DetectorError> {
    let min_window = input_period * lit(1.5);
    let window = window_end - window_start;
    if window < min_window {
        return Err(DetectorError::WindowTooShort {
            window_ps: to_f64(window),
            min_ps: to_f64(min_window),
        });
    }
    let latency = params.clear_latency();
    let first = (window_start / input_period).ceil();
    let mut k = first.to_u64().unwrap_or(0);
    let mut armed_at: Option<T> = None;
    loop {
        let r = input_period * lit::<T>(k as f64);
        if r > window_end {
            break;
        }
        if let Some(set) = armed_at {
            let capture = r - params.t_setup;
            let cleared = monitored_edges.iter().any(|&e| {
                let clear = e + latency;
                e >= window_start && clear > set && clear <= capture
            });
            if !cleared {
                return Ok(ToggleOutcome {
                    toggling: false,
                    flagged_at: Some(r),
                });
            }
        }
        armed_at = Some(r);
        k += 1;
    }
    Ok(ToggleOutcome {
        toggling: true,
        flagged_at: None,
    })
}

/// Timing margin (ps) for monitoring a clock that trails `CLK_IN` by `skew`.
/// The pairing is valid while the margin is positive.
pub fn toggle_constraint_margin<T: Scalar>(
    skew: T,
    t_clkin: T,
    params: &ToggleTimingParams<T>,
) -> T {
    t_clkin - params.t_setup - params.t_r2q - params.t_d_buf - params.t_d_ed - skew
}

/// OR-reduction of several monitored pairs: true if every pair still toggles.
pub fn all_toggling(flags: &[bool]) -> bool {
    flags.iter().all(|&f| f)
}

/// Both edges of a 50%-duty clock delayed by `delay` from `CLK_IN`, in `[from, until]`.
pub fn clock_edges<T: Scalar>(input_period: T, delay: T, from: T, until: T) -> Vec<T> {
    let half = input_period / lit(2.0);
    let mut k = ((from - delay) / half).ceil();
    let mut out = Vec::new();
    loop {
        let e = delay + half * k;
        if e > until {
            break;
        }
        if e >= from {
            out.push(e);
        }
        k = k + T::one();
    }
    out
}
