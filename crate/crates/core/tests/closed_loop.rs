use mmdll::controller::Scheme;
use mmdll::delay_line::{Calibration, Corner};
use mmdll::engine::{self, physical_toggling, run_lock, Divider, Outcome, Plant, Scenario};
use mmdll::ControlCode;
use proptest::prelude::*;

const FREQS: [f64; 6] = [533e6, 800e6, 1.6e9, 2.13e9, 3.2e9, 4.26e9];

fn scenario(corner: Corner, f: f64, n: u32, scheme: Scheme) -> Scenario<f64> {
    Scenario::from_calibration(
        &Calibration::shipped(),
        corner,
        f,
        Divider::new(n).unwrap(),
        scheme,
    )
}

#[test]
fn every_operating_point_locks_away_from_the_rails() {
    for corner in Corner::ALL {
        for f in FREQS {
            let t = run_lock(&scenario(corner, f, 4, Scheme::BinarySearch)).unwrap();
            assert_eq!(t.summary.outcome, Outcome::Locked);
            let code = t.summary.final_code.value();
            assert!((32..=992).contains(&code), "{corner} {f}: code {code}");
            assert!(!t.summary.harmonic);
        }
    }
}

#[test]
fn lock_cycle_is_divider_invariant() {
    for f in [533e6, 4.26e9] {
        let base = run_lock(&scenario(Corner::Nominal, f, 1, Scheme::BinarySearch)).unwrap();
        let t1 = base.summary.locked_at_time_ns.unwrap();
        for n in Divider::ALLOWED {
            let t = run_lock(&scenario(Corner::Nominal, f, n, Scheme::BinarySearch)).unwrap();
            assert_eq!(t.summary.locked_at_cycle, base.summary.locked_at_cycle);
            let tn = t.summary.locked_at_time_ns.unwrap();
            assert!((tn - t1 * f64::from(n)).abs() < 1e-9 * tn);
        }
    }
}

#[test]
fn skew_alternates_sign_after_lock() {
    for corner in Corner::ALL {
        let mut s = scenario(corner, 2.13e9, 2, Scheme::BinarySearch);
        s.observe_after_lock = 40;
        let t = run_lock(&s).unwrap();
        let at = t.summary.locked_at_cycle.unwrap();
        let after: Vec<_> = t.rows.iter().filter(|r| r.cycle > at).collect();
        for w in after.windows(2) {
            assert_ne!(w[0].pd_er, w[1].pd_er);
            let (a, b) = (w[0].skew_ps.unwrap(), w[1].skew_ps.unwrap());
            assert!(a.signum() != b.signum(), "{a} {b}");
        }
    }
}

#[test]
fn no_false_stalls_over_propagating_codes() {
    for corner in Corner::ALL {
        for f in FREQS {
            let s = scenario(corner, f, 1, Scheme::BinarySearch);
            let plant = s.plant();
            let limit = plant.stall_threshold_code().map_or(1024, |c| c.value());
            for code in 0..limit {
                let r = plant.evaluate(ControlCode(code)).unwrap();
                assert!(r.propagating());
                assert!(
                    physical_toggling(&r, &s).unwrap(),
                    "{corner} {f} code {code}"
                );
            }
            if limit < 1024 {
                let r = plant.evaluate(ControlCode(limit)).unwrap();
                assert!(!physical_toggling(&r, &s).unwrap());
            }
        }
    }
}

#[test]
fn no_stall_runs_never_flag_toggling() {
    for corner in Corner::ALL {
        for f in FREQS {
            for scheme in Scheme::ALL {
                let t = run_lock(&scenario(corner, f, 2, scheme)).unwrap();
                assert!(t.rows.iter().all(|r| r.toggling));
            }
        }
    }
}

#[test]
fn sweep_runs_match_sequential() {
    let scenarios: Vec<_> = Corner::ALL
        .into_iter()
        .flat_map(|c| FREQS.map(|f| scenario(c, f, 4, Scheme::CoarseFine2)))
        .collect();
    let par = engine::run_many(&scenarios);
    for (s, r) in scenarios.iter().zip(par) {
        assert_eq!(r.unwrap(), run_lock(s).unwrap());
    }
}

#[test]
fn single_precision_core_locks() {
    let cal = Calibration::<f32>::shipped();
    let s = Scenario::from_calibration(
        &cal,
        Corner::Nominal,
        4.26e9f32,
        Divider::new(4).unwrap(),
        Scheme::BinarySearch,
    );
    let t = run_lock(&s).unwrap();
    assert_eq!(t.summary.locked_at_cycle, Some(11));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bs_lock_cycle_independent_of_frequency(f in 533e6f64..4.26e9, corner_idx in 0usize..3, n_idx in 0usize..5) {
        let s = scenario(Corner::ALL[corner_idx], f, Divider::ALLOWED[n_idx], Scheme::BinarySearch);
        let t = run_lock(&s).unwrap();
        prop_assert_eq!(t.summary.locked_at_cycle, Some(11));
    }

    #[test]
    fn identical_seed_identical_trace(seed in any::<u64>(), jitter in 0.0f64..3.0) {
        let mut s = scenario(Corner::Nominal, 1.6e9, 2, Scheme::BinarySearch);
        s.seed = seed;
        s.jitter_rms_ps = jitter;
        prop_assert_eq!(run_lock(&s).unwrap(), run_lock(&s).unwrap());
    }
}
