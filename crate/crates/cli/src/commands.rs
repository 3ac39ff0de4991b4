//! The `run`, `sweep`, `compare` and `fom` commands. Each writes its files
//! and returns the data; `render_*` produce the stdout report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mmdll::controller::{
    predict_lock_time_bs, predict_lock_time_coarse_fine, predict_lock_time_linear, Scheme,
};
use mmdll::engine::{run_lock, Outcome};
use mmdll::metrics::{self, annotations, round_sig};
use mmdll::{Calibration, Corner, LockSummary, LockTrace, MetricRow, Scenario, TableEntry};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::plot::skew_svg;
use crate::scenario_file::{AxisPoint, ScenarioFile};

pub const TRACE_HEADER: [&str; 13] = [
    "cycle",
    "time_ns",
    "code",
    "step",
    "vctrlp_mv",
    "vctrln_mv",
    "fb_delay_ps",
    "skew_ps",
    "pd_er",
    "toggling",
    "fsm_state",
    "stall_event",
    "locked",
];

#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub plot: bool,
    pub timestamp: bool,
    pub max_cycles: Option<u32>,
}

/// Exit status for a run outcome.
pub fn outcome_exit_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Locked => 0,
        Outcome::Error => 3,
        Outcome::NonConvergent => 4,
    }
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ScenarioFile::parse(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn out_dir(opts: &CommonOptions, file: &ScenarioFile) -> Result<PathBuf, CliError> {
    let dir = opts
        .out
        .clone()
        .or_else(|| file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn build(
    file: &ScenarioFile,
    cal: &Calibration,
    at: &AxisPoint,
    opts: &CommonOptions,
) -> Result<Scenario, CliError> {
    let mut s = file.build(cal, at)?;
    if let Some(m) = opts.max_cycles {
        s.max_cycles = m;
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(s)
}

fn base_point(file: &ScenarioFile, opts: &CommonOptions) -> AxisPoint {
    let mut at = file.axis_point();
    if let Some(seed) = opts.seed {
        at.seed = seed;
    }
    at
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Summary record written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix_s: Option<u64>,
    pub corner: Corner,
    pub f_clkin_hz: f64,
    pub divider_n: u32,
    pub scheme: Scheme,
    pub seed: u64,
    pub outcome: Outcome,
    pub locked_at_cycle: Option<u32>,
    pub locked_at_time_ns: Option<f64>,
    pub preamble_ns: f64,
    pub total_time_ns: Option<f64>,
    pub final_code: u32,
    pub harmonic: bool,
    pub dither_amplitude_codes: Option<u32>,
    pub residual_skew_ps: Option<f64>,
    pub overshoot_ps: Option<f64>,
    pub lsb_ps: Option<f64>,
    pub stall_recoveries: u32,
    pub retries_used: u32,
    pub error: Option<String>,
}

impl SummaryRecord {
    fn new(at: &AxisPoint, s: &LockSummary, timestamp: bool) -> Self {
        Self {
            generated_at_unix_s: timestamp.then(unix_now),
            corner: at.corner,
            f_clkin_hz: at.f_clkin_hz,
            divider_n: at.divider.get(),
            scheme: at.scheme,
            seed: at.seed,
            outcome: s.outcome,
            locked_at_cycle: s.locked_at_cycle,
            locked_at_time_ns: s.locked_at_time_ns,
            preamble_ns: s.preamble_ns,
            total_time_ns: s.locked_at_time_ns.map(|t| t + s.preamble_ns),
            final_code: s.final_code.value(),
            harmonic: s.harmonic,
            dither_amplitude_codes: s.dither_amplitude_codes,
            residual_skew_ps: s.residual_skew_ps,
            overshoot_ps: s.overshoot_ps,
            lsb_ps: s.lsb_ps,
            stall_recoveries: s.stall_recoveries,
            retries_used: s.retries_used,
            error: s.error.clone(),
        }
    }
}

pub fn write_trace(path: &Path, trace: &LockTrace) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            r.cycle.to_string(),
            r.time_ns.to_string(),
            r.code.to_string(),
            r.step.to_string(),
            r.v_ctrl_p_mv.to_string(),
            r.v_ctrl_n_mv.to_string(),
            opt(r.fb_delay_ps),
            opt(r.skew_ps),
            flag(r.pd_er).into(),
            flag(r.toggling).into(),
            r.fsm.name().into(),
            flag(r.stall_event).into(),
            flag(r.locked).into(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub struct RunReport {
    pub trace: LockTrace,
    pub summary: SummaryRecord,
    pub out_dir: PathBuf,
}

pub fn cmd_run(path: &Path, opts: &CommonOptions) -> Result<RunReport, CliError> {
    let file = load_scenario_file(path)?;
    let cal = Calibration::shipped();
    let at = base_point(&file, opts);
    let scenario = build(&file, &cal, &at, opts)?;
    let trace = run_lock(&scenario)?;
    let dir = out_dir(opts, &file)?;
    write_trace(&dir.join("trace.csv"), &trace)?;
    let summary = SummaryRecord::new(&at, &trace.summary, opts.timestamp);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), &(json + "\n"))?;
    if opts.plot {
        let points: Vec<_> = trace.rows.iter().map(|r| (r.time_ns, r.skew_ps)).collect();
        let title = format!(
            "{} at {} MHz, {}",
            at.scheme,
            at.f_clkin_hz / 1e6,
            at.corner
        );
        write_file(&dir.join("skew.svg"), &skew_svg(&title, &points))?;
    }
    Ok(RunReport {
        trace,
        summary,
        out_dir: dir,
    })
}

pub fn render_run(r: &RunReport) -> String {
    let s = &r.summary;
    let mut out = String::new();
    if let Some(t) = s.generated_at_unix_s {
        let _ = writeln!(out, "generated_at_unix_s {t}");
    }
    let _ = writeln!(
        out,
        "{} {} MHz divider {} {}: {:?}",
        s.scheme,
        s.f_clkin_hz / 1e6,
        s.divider_n,
        s.corner,
        s.outcome
    );
    match (s.locked_at_cycle, s.locked_at_time_ns) {
        (Some(c), Some(t)) => {
            let _ = writeln!(
                out,
                "locked at cycle {c} ({t:.3} ns), code {}",
                s.final_code
            );
        }
        _ => {
            let _ = writeln!(out, "no lock, last code {}", s.final_code);
        }
    }
    if let (Some(d), Some(res)) = (s.dither_amplitude_codes, s.residual_skew_ps) {
        let _ = writeln!(out, "dither {d} codes, residual skew {res:.3} ps");
    }
    if s.stall_recoveries > 0 || s.retries_used > 0 {
        let _ = writeln!(
            out,
            "stall recoveries {}, retries {}",
            s.stall_recoveries, s.retries_used
        );
    }
    if let Some(e) = &s.error {
        let _ = writeln!(out, "error: {e}");
    }
    let _ = writeln!(out, "wrote {}", r.out_dir.display());
    out
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: AxisPoint,
    pub result: Result<LockSummary, String>,
}

fn corner_rank(c: Corner) -> usize {
    Corner::ALL
        .iter()
        .position(|&x| x == c)
        .unwrap_or(usize::MAX)
}

pub fn cmd_sweep(path: &Path, opts: &CommonOptions) -> Result<Vec<SweepRow>, CliError> {
    let mut file = load_scenario_file(path)?;
    if let Some(seed) = opts.seed {
        file.scenario.seed = seed;
    }
    let cal = Calibration::shipped();
    let points = file.sweep_points();
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .map(|at| {
            let result = build(&file, &cal, at, opts)
                .and_then(|s| run_lock(&s).map_err(CliError::from))
                .map(|t| t.summary)
                .map_err(|e| e.to_string());
            SweepRow { point: *at, result }
        })
        .collect();
    rows.sort_by(|a, b| {
        let (p, q) = (&a.point, &b.point);
        corner_rank(p.corner)
            .cmp(&corner_rank(q.corner))
            .then(p.f_clkin_hz.total_cmp(&q.f_clkin_hz))
            .then(p.divider.cmp(&q.divider))
            .then(p.scheme.cmp(&q.scheme))
            .then(p.seed.cmp(&q.seed))
    });
    let dir = out_dir(opts, &file)?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "corner",
        "f_clkin_hz",
        "divider_n",
        "scheme",
        "seed",
        "outcome",
        "locked_at_cycle",
        "locked_at_time_ns",
        "final_code",
        "harmonic",
        "dither_amplitude_codes",
        "residual_skew_ps",
        "overshoot_ps",
        "stall_recoveries",
        "error",
    ])?;
    for row in &rows {
        let p = &row.point;
        let head = [
            p.corner.to_string(),
            p.f_clkin_hz.to_string(),
            p.divider.get().to_string(),
            p.scheme.to_string(),
            p.seed.to_string(),
        ];
        let tail: [String; 10] = match &row.result {
            Ok(s) => [
                outcome_name(s.outcome).into(),
                opt(s.locked_at_cycle),
                opt(s.locked_at_time_ns),
                s.final_code.to_string(),
                flag(s.harmonic).into(),
                opt(s.dither_amplitude_codes),
                opt(s.residual_skew_ps),
                opt(s.overshoot_ps),
                s.stall_recoveries.to_string(),
                s.error.clone().unwrap_or_default(),
            ],
            Err(e) => [
                "invalid".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
        };
        w.write_record(head.iter().chain(tail.iter()))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    Ok(rows)
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Locked => "locked",
        Outcome::Error => "error",
        Outcome::NonConvergent => "non_convergent",
    }
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>10} {:>3} {:<14} {:>6} {:<15} {:>6}",
        "corner", "f_MHz", "N", "scheme", "seed", "outcome", "cycle"
    );
    for r in rows {
        let p = &r.point;
        let (outcome, cycle) = match &r.result {
            Ok(s) => (outcome_name(s.outcome), opt(s.locked_at_cycle)),
            Err(_) => ("invalid", String::new()),
        };
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>3} {:<14} {:>6} {:<15} {:>6}",
            p.corner.to_string(),
            p.f_clkin_hz / 1e6,
            p.divider.get(),
            p.scheme.to_string(),
            p.seed,
            outcome,
            cycle
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scheme: Scheme,
    pub outcome: Outcome,
    pub lock_cycles: Option<u32>,
    pub lock_time_ns: Option<f64>,
    pub overshoot_ps: Option<f64>,
    pub dither_amplitude_codes: Option<u32>,
    /// Closed-form prediction in control cycles.
    pub predicted_cycles: Option<f64>,
    /// Lock time relative to binary search.
    pub time_vs_binary_search: Option<f64>,
}

pub fn cmd_compare(path: &Path, opts: &CommonOptions) -> Result<Vec<CompareRow>, CliError> {
    let file = load_scenario_file(path)?;
    let cal = Calibration::shipped();
    let base = base_point(&file, opts);
    let runs = Scheme::ALL
        .iter()
        .map(|&scheme| {
            let at = AxisPoint { scheme, ..base };
            let s = build(&file, &cal, &at, opts)?;
            let t = run_lock(&s)?;
            Ok((s, t))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (bs_scenario, bs_trace) = runs
        .iter()
        .find(|(s, _)| s.scheme == Scheme::BinarySearch)
        .expect("binary search is always run");
    let bs_time = bs_trace.summary.locked_at_time_ns;
    let f = bs_scenario.f_clkin_hz;
    let f_ctrl = bs_scenario.f_clkctrl_hz() / f64::from(bs_scenario.dac.settle_cycles);
    let period = bs_scenario.period_ps();
    let lsb_ps = bs_trace.summary.lsb_ps;
    let rows: Vec<CompareRow> = runs
        .iter()
        .map(|(s, t)| {
            let init_skew = t.rows.first().and_then(|r| r.skew_ps).map(f64::abs);
            let dphi_init = init_skew.map(|sk| 2.0 * std::f64::consts::PI * sk / period);
            let predicted_s = match s.scheme {
                Scheme::BinarySearch => Some(predict_lock_time_bs(s.dac.bits, f_ctrl)),
                Scheme::Linear => dphi_init
                    .zip(lsb_ps)
                    .map(|(d, lsb)| predict_lock_time_linear(d, f, lsb * 1e-12, f_ctrl)),
                Scheme::CoarseFine2 | Scheme::CoarseFine3 => {
                    dphi_init.zip(lsb_ps).map(|(d, lsb)| {
                        let dphi_lsb = 2.0 * std::f64::consts::PI * f * lsb * 1e-12;
                        predict_lock_time_coarse_fine(d, dphi_lsb, s.params.coarse_step_k, f_ctrl)
                    })
                }
            };
            let time = t.summary.locked_at_time_ns;
            CompareRow {
                scheme: s.scheme,
                outcome: t.summary.outcome,
                lock_cycles: t.summary.locked_at_cycle,
                lock_time_ns: time,
                overshoot_ps: t.summary.overshoot_ps,
                dither_amplitude_codes: t.summary.dither_amplitude_codes,
                predicted_cycles: predicted_s.map(|p| p * f_ctrl),
                time_vs_binary_search: time.zip(bs_time).map(|(a, b)| a / b),
            }
        })
        .collect();
    let dir = out_dir(opts, &file)?;
    let csv_path = dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "scheme",
        "outcome",
        "lock_cycles",
        "lock_time_ns",
        "predicted_cycles",
        "overshoot_ps",
        "dither_amplitude_codes",
        "time_vs_binary_search",
    ])?;
    for r in &rows {
        w.write_record([
            r.scheme.to_string(),
            outcome_name(r.outcome).into(),
            opt(r.lock_cycles),
            opt(r.lock_time_ns),
            opt(r.predicted_cycles),
            opt(r.overshoot_ps),
            opt(r.dither_amplitude_codes),
            opt(r.time_vs_binary_search),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    Ok(rows)
}

pub fn render_compare(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>7} {:>10} {:>9} {:>12} {:>7} {:>8}",
        "scheme", "cycles", "time_ns", "predicted", "overshoot_ps", "dither", "vs_bs"
    );
    let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
    for r in rows {
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:>10} {:>9} {:>12} {:>7} {:>8}",
            r.scheme.to_string(),
            r.lock_cycles.map_or("-".into(), |c| c.to_string()),
            f(r.lock_time_ns, 3),
            f(r.predicted_cycles, 1),
            f(r.overshoot_ps, 1),
            r.dither_amplitude_codes
                .map_or("-".into(), |d| d.to_string()),
            f(r.time_vs_binary_search, 2),
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct FomRow {
    pub entry: TableEntry,
    pub metrics: MetricRow,
    pub annotations: Vec<String>,
}

/// Reads a comparison table (the shipped one when `table` is `None`).
pub fn cmd_fom(table: Option<&Path>, out: Option<&Path>) -> Result<Vec<FomRow>, CliError> {
    let entries: Vec<TableEntry> = match table {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| CliError::io(p, e))?;
            metrics::load_table(f)?
        }
        None => metrics::load_table(metrics::SHIPPED_TABLE.as_bytes())?,
    };
    let mut rows = entries
        .into_iter()
        .map(|entry| {
            let m = metrics::metric_row(&entry.point)?;
            let notes = annotations(&m, &entry.published);
            Ok(FomRow {
                entry,
                metrics: m,
                annotations: notes,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rows.sort_by(|a, b| a.metrics.label.cmp(&b.metrics.label));
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let csv_path = dir.join("fom.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record([
            "label",
            "power_w",
            "f_max_hz",
            "f_min_hz",
            "fr",
            "fom_p_pj",
            "fom_lr_pj_ns2",
            "fom_j_pj_ps",
            "annotations",
        ])?;
        for r in &rows {
            let m = &r.metrics;
            let p = &r.entry.point;
            w.write_record([
                m.label.clone(),
                p.power.to_string(),
                p.f_max.to_string(),
                p.f_min.to_string(),
                m.fr.to_string(),
                m.fom_p_pj().to_string(),
                m.fom_lr_pj_ns2().to_string(),
                m.fom_j_pj_ps().to_string(),
                r.annotations.join("; "),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    }
    Ok(rows)
}

pub fn render_fom(rows: &[FomRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>6} {:>10} {:>14} {:>12}  annotations",
        "label", "FR", "FOM_P pJ", "FOM_LR pJ*ns2", "FOM_J pJ*ps"
    );
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>10} {:>14} {:>12}  {}",
            m.label,
            round_sig(m.fr, 2),
            round_sig(m.fom_p_pj(), 2),
            round_sig(m.fom_lr_pj_ns2(), 2),
            round_sig(m.fom_j_pj_ps(), 2),
            r.annotations.join("; ")
        );
    }
    out
}
