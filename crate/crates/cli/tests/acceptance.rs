//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mmdll::controller::{
    bs_step, coarse_fine_k_opt, predict_lock_time_coarse_fine, predict_lock_time_linear,
    ControllerState, FsmState, Scheme, SchemeParams,
};
use mmdll::detectors::{clock_edges, toggle_constraint_margin, toggle_detect};
use mmdll::engine::{
    detect_harmonic_lock, physical_toggling, run_lock, run_lock_with_plant, steady_state_stats,
    Divider, LinearPlant, Outcome, Plant, StallInjection,
};
use mmdll::metrics::{annotations, load_table, matches_published, metric_row, SHIPPED_TABLE};
use mmdll::{
    bias::max_code, Calibration, ControlCode, Corner, Scenario, TableEntry, ToggleTimingParams,
};
use mmdll_cli::commands::{cmd_compare, cmd_fom, cmd_run, cmd_sweep, CommonOptions};

const FREQS: [f64; 6] = [533e6, 800e6, 1.6e9, 2.13e9, 3.2e9, 4.26e9];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(cal: &Calibration, corner: Corner, f: f64, n: u32, scheme: Scheme) -> Scenario {
    Scenario::from_calibration(cal, corner, f, Divider::new(n).unwrap(), scheme)
}

fn deterministic_bs_lock() -> Check {
    let cal = Calibration::shipped();
    let start = Instant::now();
    let mut runs = 0;
    for corner in Corner::ALL {
        for f in FREQS {
            for n in Divider::ALLOWED {
                let t = run_lock(&scenario(&cal, corner, f, n, Scheme::BinarySearch))
                    .map_err(|e| e.to_string())?;
                ensure(t.summary.locked_at_cycle == Some(11), || {
                    format!(
                        "{corner} {f} Hz N={n}: locked at {:?}",
                        t.summary.locked_at_cycle
                    )
                })?;
                ensure(t.summary.stall_recoveries == 0, || {
                    format!("{corner} {f} Hz N={n}: stall")
                })?;
                runs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{runs} runs lock at cycle 11 in {elapsed:.2?}"))
}

fn compare_file(dir: &Path, freq: &str) -> std::path::PathBuf {
    let path = dir.join(format!("compare_{freq}.toml").replace(' ', "_"));
    fs::write(
        &path,
        format!("[scenario]\nf_clkin = \"{freq}\"\ndivider_n = 4\n"),
    )
    .unwrap();
    path
}

fn lock_time_speedup() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for freq in ["800 MHz", "4.26 GHz"] {
        let opts = CommonOptions {
            out: Some(dir.path().join("out")),
            ..CommonOptions::default()
        };
        let rows =
            cmd_compare(&compare_file(dir.path(), freq), &opts).map_err(|e| e.to_string())?;
        let time = |s: Scheme| {
            rows.iter()
                .find(|r| r.scheme == s)
                .and_then(|r| r.lock_time_ns)
        };
        let (cf, bs) = time(Scheme::CoarseFine2)
            .zip(time(Scheme::BinarySearch))
            .ok_or_else(|| format!("{freq}: a scheme did not lock"))?;
        let ratio = cf / bs;
        ensure((4.0..=12.0).contains(&ratio), || {
            format!("{freq}: ratio {ratio:.2}")
        })?;
        notes.push(format!("{freq} {ratio:.2}x"));
    }
    Ok(format!("coarse-fine / binary search: {}", notes.join(", ")))
}

fn predictor_consistency() -> Check {
    let cal = Calibration::shipped();
    let f = 1e9;
    let mut worst_linear: f64 = 0.0;
    let mut worst_cf: f64 = f64::NEG_INFINITY;
    for (lo, hi) in [(0.5, 1.5), (0.2, 1.4), (0.7, 1.45), (0.3, 1.2)] {
        let mut s = scenario(&cal, Corner::Nominal, f, 1, Scheme::Linear);
        let period = s.period_ps();
        let plant = LinearPlant::new(10, lo * period, hi * period);
        let f_ctrl = s.f_clkctrl_hz();
        let skew0 = (plant
            .evaluate(ControlCode(0))
            .unwrap()
            .loop_delay()
            .unwrap()
            - period)
            .abs();
        let dphi_init = 2.0 * PI * skew0 / period;
        let lsb = plant.lsb_ps();
        let dphi_lsb = 2.0 * PI * f * lsb * 1e-12;
        s.params.initial_code = ControlCode(0);

        let t = run_lock_with_plant(&s, &plant).map_err(|e| e.to_string())?;
        let sim = f64::from(t.summary.locked_at_cycle.ok_or("linear did not lock")?);
        let pred = predict_lock_time_linear(dphi_init, f, lsb * 1e-12, f_ctrl) * f_ctrl;
        ensure((0.0..=2.0 + 1e-9).contains(&(sim - pred)), || {
            format!("linear {lo}-{hi}T: simulated {sim}, predicted {pred:.2}")
        })?;
        worst_linear = worst_linear.max(sim - pred);

        for k in [4, 12, 25, 40] {
            for scheme in [Scheme::CoarseFine2, Scheme::CoarseFine3] {
                let mut s = s.clone();
                s.scheme = scheme;
                s.params.coarse_step_k = k;
                s.params.medium_step = s.params.medium_step.min(k);
                let t = run_lock_with_plant(&s, &plant).map_err(|e| e.to_string())?;
                let sim = f64::from(
                    t.summary
                        .locked_at_cycle
                        .ok_or("coarse-fine did not lock")?,
                );
                let pred = predict_lock_time_coarse_fine(dphi_init, dphi_lsb, k, f_ctrl) * f_ctrl;
                ensure(sim <= pred + 2.0, || {
                    format!("{scheme} k={k} {lo}-{hi}T: simulated {sim}, predicted {pred:.2}")
                })?;
                worst_cf = worst_cf.max(sim - pred);
            }
        }
    }
    let k_opt = coarse_fine_k_opt(2.0 * PI, 0.01);
    ensure(k_opt.round() == 25.0, || format!("k_opt {k_opt}"))?;
    Ok(format!(
        "linear excess {worst_linear:+.2}, coarse-fine excess {worst_cf:+.2} cycles; k_opt {k_opt:.2}"
    ))
}

/// Longest path to Locked over every toggling sequence; fails on any other
/// terminal state or a state that does not change.
fn explore(
    s: ControllerState,
    threshold: u32,
    depth: u32,
    bound: u32,
    longest: &mut u32,
) -> Result<(), String> {
    if depth > bound + 1 {
        return Err(format!("no terminal state within {bound} cycles"));
    }
    match s.fsm {
        FsmState::Locked => {
            *longest = (*longest).max(depth);
            return Ok(());
        }
        FsmState::Error => return Ok(()),
        FsmState::Searching | FsmState::StallRevert => {}
        other => return Err(format!("unexpected state {other:?}")),
    }
    for toggling in [true, false] {
        let pd_er = s.code.0 > threshold;
        let next = bs_step(s, pd_er, toggling);
        if next == s {
            return Err(format!("deadlock at {s:?}"));
        }
        explore(next, threshold, depth + 1, bound, longest)?;
    }
    Ok(())
}

fn stall_recovery() -> Check {
    let start = Instant::now();
    let cal = Calibration::shipped();
    let mut s = scenario(&cal, Corner::Nominal, 4.26e9, 4, Scheme::BinarySearch);
    // cycle 2 applies the first midpoint code
    s.stall_injections = vec![StallInjection {
        cycle: 2,
        stalled: true,
    }];
    let t = run_lock(&s).map_err(|e| e.to_string())?;
    let at = t.summary.locked_at_cycle.ok_or("single stall: no lock")?;
    ensure(at <= 13, || format!("single stall locked at {at}"))?;
    ensure(t.rows.iter().any(|r| r.stall_event), || {
        "stall_event never set".into()
    })?;

    s.stall_injections = vec![
        StallInjection {
            cycle: 2,
            stalled: true,
        },
        StallInjection {
            cycle: 4,
            stalled: true,
        },
    ];
    let t = run_lock(&s).map_err(|e| e.to_string())?;
    ensure(t.summary.outcome == Outcome::Error, || {
        format!("double stall gave {:?}", t.summary.outcome)
    })?;

    let mut bounds = Vec::new();
    for bits in 1..=6u32 {
        let mut worst = 0;
        let params = SchemeParams::for_bits(bits);
        for threshold in 0..=max_code(bits) {
            let init = ControllerState::new(Scheme::BinarySearch, params)
                .unwrap()
                .enable();
            explore(init, threshold, 0, 2 * bits + 1, &mut worst)?;
        }
        ensure(worst <= 2 * bits + 1, || {
            format!("B={bits}: {worst} cycles")
        })?;
        bounds.push(format!("{worst}/{}", 2 * bits + 1));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "single stall locks at {at}, double stall errors; worst/bound for B=1..6: {}",
        bounds.join(" ")
    ))
}

fn harmonic_avoidance() -> Check {
    let cal = Calibration::shipped();
    let mut runs = 0;
    for corner in Corner::ALL {
        for f in FREQS {
            for scheme in Scheme::ALL {
                let mut s = scenario(&cal, corner, f, 2, scheme);
                if scheme != Scheme::BinarySearch {
                    s.params.initial_code = ControlCode(0);
                }
                let t = run_lock(&s).map_err(|e| e.to_string())?;
                ensure(
                    t.summary.outcome == Outcome::Locked && !t.summary.harmonic,
                    || {
                        format!(
                            "{corner} {f} Hz {scheme}: {:?} harmonic={}",
                            t.summary.outcome, t.summary.harmonic
                        )
                    },
                )?;
                runs += 1;
            }
        }
    }
    let mut s = scenario(&cal, Corner::Nominal, 1e9, 1, Scheme::Linear);
    s.params.initial_code = ControlCode(1023);
    let period = s.period_ps();
    let plant = LinearPlant::new(10, 0.5 * period, 2.3 * period);
    let t = run_lock_with_plant(&s, &plant).map_err(|e| e.to_string())?;
    ensure(t.summary.harmonic, || {
        "adversarial start not flagged".into()
    })?;
    ensure(
        detect_harmonic_lock(&plant, t.summary.final_code, period),
        || "detector disagrees".into(),
    )?;
    Ok(format!(
        "{runs} sweep runs clean; max-code start on a 0.5T-2.3T plant flagged"
    ))
}

fn dither_limit_cycle() -> Check {
    let cal = Calibration::shipped();
    for corner in Corner::ALL {
        for f in FREQS {
            let mut s = scenario(&cal, corner, f, 4, Scheme::BinarySearch);
            s.observe_after_lock = 40;
            let t = run_lock(&s).map_err(|e| e.to_string())?;
            let stats = steady_state_stats(&t, 32).map_err(|e| e.to_string())?;
            ensure(stats.dither_amplitude_codes == 1, || {
                format!("{corner} {f} Hz: dither {}", stats.dither_amplitude_codes)
            })?;
            let at = t.summary.locked_at_cycle.unwrap();
            let after: Vec<_> = t.rows.iter().filter(|r| r.cycle > at).collect();
            ensure(after.windows(2).all(|w| w[0].pd_er != w[1].pd_er), || {
                format!("{corner} {f} Hz: PD did not alternate")
            })?;
        }
    }
    Ok("dither 1 code with alternating PD at all 18 points".into())
}

fn toggle_detector() -> Check {
    let cal = Calibration::shipped();
    let mut codes = 0;
    for corner in Corner::ALL {
        for f in FREQS {
            let s = scenario(&cal, corner, f, 1, Scheme::BinarySearch);
            let plant = s.plant();
            let limit = plant.stall_threshold_code().map_or(1024, |c| c.0);
            for code in 0..limit {
                let r = plant
                    .evaluate(ControlCode(code))
                    .map_err(|e| e.to_string())?;
                ensure(
                    physical_toggling(&r, &s).map_err(|e| e.to_string())?,
                    || format!("{corner} {f} Hz code {code}: false stall"),
                )?;
                codes += 1;
            }
        }
    }

    // detector level: clock stops mid-stream
    let params = ToggleTimingParams::default();
    let mut worst_latency: f64 = 0.0;
    for f in FREQS {
        let t = 1e12 / f;
        for stop in [3.0, 3.25, 3.5, 3.75] {
            let edges = clock_edges(t, 0.1 * t, 0.0, stop * t);
            let onset = edges.last().unwrap() + t / 2.0;
            let out =
                toggle_detect(&edges, t, 0.0, 10.0 * t, &params).map_err(|e| e.to_string())?;
            let latency = out.flagged_at.ok_or("stall not flagged")? - onset;
            worst_latency = worst_latency.max(latency / t);
            // one control cycle at the fastest divider is one input period
            ensure(latency <= 1.5 * t + t, || {
                format!("{f} Hz stop {stop}: latency {latency:.1} ps")
            })?;
        }
    }

    // loop level: the update that starves the line is flagged in its own cycle
    let mut s = scenario(&cal, Corner::Nominal, 1e9, 1, Scheme::Linear);
    let period = s.period_ps();
    let mut plant = LinearPlant::new(10, 0.5 * period, 1.5 * period);
    plant.stall_above = Some(ControlCode(200));
    s.params.initial_code = ControlCode(0);
    let t = run_lock_with_plant(&s, &plant).map_err(|e| e.to_string())?;
    let first_bad = t
        .rows
        .iter()
        .find(|r| r.code.0 > 200)
        .ok_or("never entered the stall region")?;
    ensure(!first_bad.toggling, || {
        format!("cycle {} not flagged", first_bad.cycle)
    })?;

    // adjacent-tap monitoring at the top frequency
    let s = scenario(&cal, Corner::Nominal, 4.26e9, 4, Scheme::BinarySearch);
    let lock = run_lock(&s).map_err(|e| e.to_string())?;
    let loop_delay = s
        .plant()
        .evaluate(lock.summary.final_code)
        .map_err(|e| e.to_string())?
        .loop_delay()
        .ok_or("locked code stalls")?;
    let tap = loop_delay / 8.0;
    let margin = toggle_constraint_margin(tap, s.period_ps(), &params);
    ensure(margin > 0.0, || format!("margin {margin:.1} ps"))?;
    Ok(format!(
        "{codes} propagating codes clean; worst latency {worst_latency:.2} T; tap {tap:.1} ps, margin {margin:.1} ps"
    ))
}

fn metrics_reproduction() -> Check {
    let entries: Vec<TableEntry> =
        load_table(SHIPPED_TABLE.as_bytes()).map_err(|e| e.to_string())?;
    let row = |label: &str| {
        let e = entries
            .iter()
            .find(|e| e.point.label == label)
            .ok_or(format!("no row {label}"))?;
        metric_row(&e.point).map_err(|e| e.to_string())
    };
    let check = |label: &str, name: &str, got: f64, want: f64| {
        ensure(matches_published(got, want), || {
            format!("{label} {name}: {got:.4} vs {want}")
        })
    };
    let this = row("This work")?;
    check("This work", "FR", this.fr, 1.55)?;
    check("This work", "FOM_P", this.fom_p_pj(), 0.82)?;
    check("This work", "FOM_J", this.fom_j_pj_ps(), 6.2)?;
    let jssc21 = row("JSSC 21")?;
    check("JSSC 21", "FR", jssc21.fr, 1.02)?;
    check("JSSC 21", "FOM_P", jssc21.fom_p_pj(), 1.25)?;
    check("JSSC 21", "FOM_LR", jssc21.fom_lr_pj_ns2(), 0.066)?;
    check("JSSC 21", "FOM_J", jssc21.fom_j_pj_ps(), 15.9)?;
    let mut notes = 0;
    for e in &entries {
        let m = metric_row(&e.point).map_err(|e| e.to_string())?;
        notes += annotations(&m, &e.published).len();
    }
    let rows = cmd_fom(None, None).map_err(|e| e.to_string())?;
    ensure(rows.len() == entries.len(), || {
        "fom command dropped rows".into()
    })?;
    Ok(format!(
        "this work FR {:.3} FOM_P {:.3} FOM_J {:.2}; JSSC 21 FR {:.3} FOM_P {:.3} FOM_LR {:.4} FOM_J {:.1}; {notes} annotations",
        this.fr,
        this.fom_p_pj(),
        this.fom_j_pj_ps(),
        jssc21.fr,
        jssc21.fom_p_pj(),
        jssc21.fom_lr_pj_ns2(),
        jssc21.fom_j_pj_ps()
    ))
}

fn resolution_calibration() -> Check {
    let cal = Calibration::shipped();
    let t = run_lock(&scenario(
        &cal,
        Corner::Nominal,
        4.26e9,
        4,
        Scheme::BinarySearch,
    ))
    .map_err(|e| e.to_string())?;
    let lsb = t.summary.lsb_ps.ok_or("no LSB at the lock point")?;
    ensure((0.58..=0.88).contains(&lsb), || format!("LSB {lsb:.3} ps"))?;
    Ok(format!("LSB {lsb:.3} ps at code {}", t.summary.final_code))
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = dir.path().join("det.toml");
    fs::write(
        &scenario,
        "[scenario]\nf_clkin = \"3.2 GHz\"\ndivider_n = 2\njitter_rms = \"1.2 ps\"\nobserve_after_lock = 200\nseed = 11\n\n\
         [sweep]\ncorners = [\"slow\", \"fast\"]\nfrequencies = [\"800 MHz\", \"3.2 GHz\"]\n",
    )
    .map_err(|e| e.to_string())?;
    let produce = |tag: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = dir.path().join(tag);
        let opts = CommonOptions {
            out: Some(out.clone()),
            plot: true,
            ..CommonOptions::default()
        };
        cmd_run(&scenario, &opts).map_err(|e| e.to_string())?;
        cmd_sweep(&scenario, &opts).map_err(|e| e.to_string())?;
        cmd_compare(&scenario, &opts).map_err(|e| e.to_string())?;
        cmd_fom(None, Some(&out)).map_err(|e| e.to_string())?;
        Ok(read_all(&out))
    };
    let a = produce("a")?;
    let b = produce("b")?;
    ensure(a.len() == 6, || {
        format!("expected 6 files, got {}", a.len())
    })?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "{} output files byte-identical across reruns",
        a.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("deterministic binary-search lock", deterministic_bs_lock),
        ("lock-time speedup", lock_time_speedup),
        ("predictor consistency", predictor_consistency),
        ("stall recovery", stall_recovery),
        ("harmonic-lock avoidance", harmonic_avoidance),
        ("dither limit cycle", dither_limit_cycle),
        ("toggle detector", toggle_detector),
        ("metrics reproduction", metrics_reproduction),
        ("resolution calibration", resolution_calibration),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
