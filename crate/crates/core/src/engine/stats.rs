use crate::error::EngineError;
use crate::scalar::{from_u32, Scalar};

use super::LockTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateStats<T> {
    pub dither_amplitude_codes: u32,
    /// Mean |skew| over the window (ps).
    pub residual_skew_ps: T,
    /// RMS and peak-to-peak of the reference-edge deviation (ps).
    pub tj_rms_ps: T,
    pub tj_p2p_ps: T,
}

/// Statistics over the first `window` cycles after lock.
pub fn steady_state_stats<T: Scalar>(
    trace: &LockTrace<T>,
    window: u32,
) -> Result<SteadyStateStats<T>, EngineError> {
    let unavailable = |m: String| Err(EngineError::WindowUnavailable(m));
    if window == 0 {
        return unavailable("window of 0 cycles".into());
    }
    let Some(at) = trace.summary.locked_at_cycle else {
        return unavailable("trace never locked".into());
    };
    let rows: Vec<_> = trace
        .rows
        .iter()
        .filter(|r| r.cycle > at)
        .take(window as usize)
        .collect();
    if rows.len() < window as usize {
        return unavailable(format!(
            "{} cycles requested after lock, {} available",
            window,
            rows.len()
        ));
    }
    let lo = rows.iter().map(|r| r.code.0).min().unwrap_or(0);
    let hi = rows.iter().map(|r| r.code.0).max().unwrap_or(0);
    let skews: Vec<T> = rows.iter().filter_map(|r| r.skew_ps).collect();
    if skews.is_empty() {
        return unavailable("no propagating cycles in window".into());
    }
    let residual =
        skews.iter().fold(T::zero(), |a, s| a + s.abs()) / from_u32::<T>(skews.len() as u32);
    let n = from_u32::<T>(rows.len() as u32);
    let mean = rows.iter().fold(T::zero(), |a, r| a + r.jitter_ps) / n;
    let var = rows
        .iter()
        .fold(T::zero(), |a, r| a + (r.jitter_ps - mean).powi(2))
        / n;
    let jmin = rows.iter().map(|r| r.jitter_ps).fold(T::infinity(), T::min);
    let jmax = rows
        .iter()
        .map(|r| r.jitter_ps)
        .fold(T::neg_infinity(), T::max);
    Ok(SteadyStateStats {
        dither_amplitude_codes: hi - lo,
        residual_skew_ps: residual,
        tj_rms_ps: var.sqrt(),
        tj_p2p_ps: jmax - jmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Scheme;
    use crate::delay_line::{Calibration, Corner};
    use crate::engine::{run_lock, Divider, Scenario};

    fn scenario() -> Scenario<f64> {
        Scenario::from_calibration(
            &Calibration::shipped(),
            Corner::Nominal,
            4.26e9,
            Divider::new(4).unwrap(),
            Scheme::BinarySearch,
        )
    }

    #[test]
    fn zero_jitter_dither_is_one_code() {
        let mut s = scenario();
        s.observe_after_lock = 50;
        let t = run_lock(&s).unwrap();
        let st = steady_state_stats(&t, 50).unwrap();
        assert_eq!(st.dither_amplitude_codes, 1);
        assert!(st.residual_skew_ps <= t.summary.lsb_ps.unwrap());
        assert_eq!(st.tj_rms_ps, 0.0);
        assert_eq!(st.tj_p2p_ps, 0.0);
    }

    #[test]
    fn injected_jitter_statistics() {
        let mut s = scenario();
        s.jitter_rms_ps = 1.2;
        s.observe_after_lock = 20_000;
        let t = run_lock(&s).unwrap();
        let st = steady_state_stats(&t, 20_000).unwrap();
        assert!((st.tj_rms_ps - 1.2).abs() <= 0.12, "rms {}", st.tj_rms_ps);
        let ratio = st.tj_p2p_ps / st.tj_rms_ps;
        assert!((6.0..=14.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn window_unavailable() {
        let t = run_lock(&scenario()).unwrap();
        assert!(matches!(
            steady_state_stats(&t, 0),
            Err(EngineError::WindowUnavailable(_))
        ));
        assert!(matches!(
            steady_state_stats(&t, 10_000),
            Err(EngineError::WindowUnavailable(_))
        ));
    }
}
