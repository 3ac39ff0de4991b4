//! Figures of merit and the comparison table. Inputs are SI units; the
//! `*_pj*` accessors convert to the customary display units.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::scalar::{lit, to_f64, Scalar};

/// The comparison dataset shipped with the crate.
pub const SHIPPED_TABLE: &str = include_str!("../data/table1.csv");

/// Relative tolerance for agreement with a value printed to two significant
/// figures.
pub const TWO_SIG_FIG_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint<T> {
    pub label: String,
    /// W
    pub power: T,
    /// Hz
    pub f_max: T,
    pub f_min: T,
    /// s
    pub t_lock: T,
    pub dt_lsb: T,
    pub tj_p2p: T,
    pub tj_rms: T,
}

impl<T: Scalar> DesignPoint<T> {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let invalid = |reason: String| MetricsError::InvalidPoint {
            label: self.label.clone(),
            reason,
        };
        if !(self.f_min > T::zero() && self.f_max > self.f_min) {
            return Err(invalid(format!(
                "need f_max > f_min > 0 (got f_max {} Hz, f_min {} Hz)",
                self.f_max, self.f_min
            )));
        }
        for (name, v) in [
            ("power", self.power),
            ("t_lock", self.t_lock),
            ("dt_lsb", self.dt_lsb),
            ("tj_p2p", self.tj_p2p),
            ("tj_rms", self.tj_rms),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and >= 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// `2 (f_max - f_min) / (f_max + f_min)`.
pub fn frequency_ratio<T: Scalar>(f_max: T, f_min: T) -> T {
    lit::<T>(2.0) * (f_max - f_min) / (f_max + f_min)
}

/// Power FOM in J.
pub fn fom_power<T: Scalar>(power: T, f_max: T, fr: T) -> Result<T, MetricsError> {
    if !(fr > T::zero()) {
        return Err(MetricsError::NonPositiveRatio(to_f64(fr)));
    }
    Ok(power / (f_max * fr))
}

/// Lock-time and resolution FOM in J·s².
pub fn fom_lock_res<T: Scalar>(fom_p: T, t_lock: T, dt_lsb: T) -> T {
    fom_p * t_lock * dt_lsb
}

/// Jitter FOM in J·s.
pub fn fom_jitter<T: Scalar>(tj_p2p: T, power: T, f_max: T) -> T {
    tj_p2p * power / f_max
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow<T> {
    pub label: String,
    pub fr: T,
    /// J
    pub fom_p: T,
    /// J·s²
    pub fom_lr: T,
    /// J·s
    pub fom_j: T,
}

impl<T: Scalar> MetricRow<T> {
    pub fn fom_p_pj(&self) -> T {
        self.fom_p * lit(1e12)
    }

    pub fn fom_lr_pj_ns2(&self) -> T {
        self.fom_lr * lit(1e30)
    }

    pub fn fom_j_pj_ps(&self) -> T {
        self.fom_j * lit(1e24)
    }
}

pub fn metric_row<T: Scalar>(p: &DesignPoint<T>) -> Result<MetricRow<T>, MetricsError> {
    p.validate()?;
    let fr = frequency_ratio(p.f_max, p.f_min);
    let fom_p = fom_power(p.power, p.f_max, fr)?;
    Ok(MetricRow {
        label: p.label.clone(),
        fr,
        fom_p,
        fom_lr: fom_lock_res(fom_p, p.t_lock, p.dt_lsb),
        fom_j: fom_jitter(p.tj_p2p, p.power, p.f_max),
    })
}

/// One row per point, ordered by label.
pub fn comparison_table<T: Scalar>(
    points: &[DesignPoint<T>],
) -> Result<Vec<MetricRow<T>>, MetricsError> {
    let mut rows = points
        .iter()
        .map(metric_row)
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(rows)
}

/// Printed figures of merit, in display units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PublishedFoms {
    pub fr: Option<f64>,
    pub fom_p_pj: Option<f64>,
    pub fom_j_pj_ps: Option<f64>,
    pub fom_lr_pj_ns2: Option<f64>,
}

/// A dataset row: the design point plus its printed figures.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry<T> {
    pub point: DesignPoint<T>,
    pub published: PublishedFoms,
    /// How the power column was obtained.
    pub power_source: PowerSource,
    pub architecture: Option<String>,
    pub locking_scheme: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSource {
    Reported,
    EfficiencyTimesFmax,
}

/// Whether `computed` agrees with a value printed to two significant figures.
pub fn matches_published(computed: f64, published: f64) -> bool {
    (computed - published).abs() <= TWO_SIG_FIG_TOLERANCE * published.abs()
}

/// Rounds to `digits` significant figures.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// Disagreements between computed and printed figures.
pub fn annotations<T: Scalar>(row: &MetricRow<T>, published: &PublishedFoms) -> Vec<String> {
    let computed = [
        ("fr", to_f64(row.fr), published.fr),
        ("fom_p", to_f64(row.fom_p_pj()), published.fom_p_pj),
        ("fom_j", to_f64(row.fom_j_pj_ps()), published.fom_j_pj_ps),
        (
            "fom_lr",
            to_f64(row.fom_lr_pj_ns2()),
            published.fom_lr_pj_ns2,
        ),
    ];
    computed
        .into_iter()
        .filter_map(|(name, c, p)| {
            let p = p?;
            (!matches_published(c, p)).then(|| {
                format!(
                    "{name}: computed {} vs published {p} (x{:.2})",
                    round_sig(c, 3),
                    c / p
                )
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    label: String,
    #[serde(default)]
    architecture: Option<String>,
    #[serde(default)]
    locking_scheme: Option<String>,
    f_min_ghz: f64,
    f_max_ghz: f64,
    power_mw: Option<f64>,
    efficiency_mw_per_ghz: Option<f64>,
    t_lock_ns: f64,
    dt_lsb_ps: f64,
    tj_rms_ps: f64,
    tj_p2p_ps: f64,
    published_fr: Option<f64>,
    published_fom_p_pj: Option<f64>,
    published_fom_j_pj_ps: Option<f64>,
    published_fom_lr_pj_ns2: Option<f64>,
}

/// Reads a comparison dataset. Lines starting with `#` are comments; the
/// first non-comment line is the header.
pub fn load_table<T: Scalar, R: Read>(reader: R) -> Result<Vec<TableEntry<T>>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let row = i + 1;
        let raw = rec.map_err(|source| MetricsError::MalformedRow { row, source })?;
        let (power_mw, power_source) = match (raw.power_mw, raw.efficiency_mw_per_ghz) {
            (Some(p), _) => (p, PowerSource::Reported),
            (None, Some(e)) => (e * raw.f_max_ghz, PowerSource::EfficiencyTimesFmax),
            (None, None) => {
                return Err(MetricsError::InvalidPoint {
                    label: raw.label,
                    reason: format!("row {row}: needs power_mw or efficiency_mw_per_ghz"),
                })
            }
        };
        let point = DesignPoint {
            label: raw.label,
            power: lit(power_mw * 1e-3),
            f_max: lit(raw.f_max_ghz * 1e9),
            f_min: lit(raw.f_min_ghz * 1e9),
            t_lock: lit(raw.t_lock_ns * 1e-9),
            dt_lsb: lit(raw.dt_lsb_ps * 1e-12),
            tj_p2p: lit(raw.tj_p2p_ps * 1e-12),
            tj_rms: lit(raw.tj_rms_ps * 1e-12),
        };
        point.validate()?;
        out.push(TableEntry {
            point,
            published: PublishedFoms {
                fr: raw.published_fr,
                fom_p_pj: raw.published_fom_p_pj,
                fom_j_pj_ps: raw.published_fom_j_pj_ps,
                fom_lr_pj_ns2: raw.published_fom_lr_pj_ns2,
            },
            power_source,
            architecture: raw.architecture,
            locking_scheme: raw.locking_scheme,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn shipped() -> Vec<TableEntry<f64>> {
        load_table(SHIPPED_TABLE.as_bytes()).unwrap()
    }

    fn entry<'a>(t: &'a [TableEntry<f64>], label: &str) -> &'a TableEntry<f64> {
        t.iter().find(|e| e.point.label == label).unwrap()
    }

    #[test]
    fn frequency_ratio_examples() {
        assert_relative_eq!(frequency_ratio(4.26e9, 0.533e9), 1.5552, epsilon = 1e-4);
        assert_eq!(frequency_ratio(2e9, 2e9), 0.0);
        assert_relative_eq!(frequency_ratio(4.0e9, 1.3e9), 1.0189, epsilon = 1e-4);
    }

    #[test]
    fn fom_examples() {
        let p = fom_power(5.4e-3, 4.26e9, 1.55).unwrap();
        assert_relative_eq!(p * 1e12, 0.8178, epsilon = 1e-4);
        let jssc21 = fom_power(5.12e-3, 4.0e9, 1.02).unwrap();
        assert_relative_eq!(jssc21 * 1e12, 1.2549, epsilon = 1e-4);
        assert!(matches!(
            fom_power(1e-3, 1e9, 0.0),
            Err(MetricsError::NonPositiveRatio(_))
        ));
        assert_relative_eq!(
            fom_lock_res(1.25e-12, 10e-9, 5.2e-12) * 1e30,
            0.065,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            fom_lock_res(0.82e-12, 10.5e-9, 0.73e-12) * 1e30,
            0.0063,
            epsilon = 1e-4
        );
        assert_eq!(fom_lock_res(0.0, 10e-9, 1e-12), 0.0);
        assert_relative_eq!(
            fom_jitter(4.9e-12, 5.4e-3, 4.26e9) * 1e24,
            6.211,
            epsilon = 1e-3
        );
        assert_relative_eq!(
            fom_jitter(12.5e-12, 5.12e-3, 4.0e9) * 1e24,
            16.0,
            epsilon = 1e-9
        );
        assert_eq!(fom_jitter(0.0, 5.4e-3, 4.26e9), 0.0);
    }

    #[test]
    fn shipped_table_loads() {
        let t = shipped();
        assert_eq!(t.len(), 7);
        assert!(t
            .iter()
            .all(|e| e.power_source == PowerSource::EfficiencyTimesFmax));
        let this = entry(&t, "This work");
        assert_relative_eq!(this.point.power, 5.4102e-3, epsilon = 1e-9);
    }

    #[test]
    fn reproduces_columns_within_rounding() {
        let t = shipped();
        for label in ["This work", "JSSC 21"] {
            let e = entry(&t, label);
            let row = metric_row(&e.point).unwrap();
            let p = e.published;
            assert!(
                matches_published(row.fr, p.fr.unwrap()),
                "{label} fr {}",
                row.fr
            );
            assert!(matches_published(row.fom_p_pj(), p.fom_p_pj.unwrap()));
            assert!(matches_published(row.fom_j_pj_ps(), p.fom_j_pj_ps.unwrap()));
        }
        let jssc21 = metric_row(&entry(&t, "JSSC 21").point).unwrap();
        assert!(annotations(&jssc21, &entry(&t, "JSSC 21").published).is_empty());
    }

    #[test]
    fn lock_res_discrepancy_is_annotated() {
        let t = shipped();
        let e = entry(&t, "This work");
        let row = metric_row(&e.point).unwrap();
        let notes = annotations(&row, &e.published);
        assert_eq!(notes.len(), 1);
        assert!(notes[0].starts_with("fom_lr"));
    }

    #[test]
    fn table_ordering_and_edges() {
        let t = shipped();
        let points: Vec<_> = t.iter().map(|e| e.point.clone()).collect();
        let rows = comparison_table(&points).unwrap();
        let labels: Vec<_> = rows.iter().map(|r| r.label.as_str()).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
        assert!(comparison_table::<f64>(&[]).unwrap().is_empty());
        let single = comparison_table(&points[..1]).unwrap();
        assert_eq!(single[0], metric_row(&points[0]).unwrap());
    }

    #[test]
    fn invalid_points_and_rows() {
        let mut p = shipped()[0].point.clone();
        p.f_min = p.f_max;
        assert!(matches!(
            metric_row(&p),
            Err(MetricsError::InvalidPoint { .. })
        ));
        let header = SHIPPED_TABLE
            .lines()
            .find(|l| l.starts_with("label"))
            .unwrap();
        let bad = format!("{header}\nX,A,B,notanumber,4,,1,1,1,1,1,,,,\n");
        let err = load_table::<f64, _>(bad.as_bytes()).unwrap_err();
        assert!(
            matches!(err, MetricsError::MalformedRow { row: 1, .. }),
            "{err}"
        );
        assert!(load_table::<f64, _>("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn sig_fig_rounding() {
        assert_eq!(round_sig(1.5553, 2), 1.6);
        assert_eq!(round_sig(0.006_26, 2), 0.0063);
        assert_eq!(round_sig(0.0, 2), 0.0);
    }

    proptest! {
        #[test]
        fn fr_bounded(f_max in 1e6f64..1e10, frac in 1e-6f64..0.999_999) {
            let fr = frequency_ratio(f_max, f_max * frac);
            prop_assert!(fr > 0.0 && fr < 2.0);
        }

        #[test]
        fn foms_scale_with_power(c in 0.1f64..10.0, idx in 0usize..7) {
            let p = shipped()[idx].point.clone();
            let scaled = DesignPoint { power: p.power * c, ..p.clone() };
            let a = metric_row(&p).unwrap();
            let b = metric_row(&scaled).unwrap();
            for (x, y) in [(a.fom_p, b.fom_p), (a.fom_lr, b.fom_lr), (a.fom_j, b.fom_j)] {
                prop_assert!((y - c * x).abs() <= 1e-12 * (c * x).abs());
            }
        }
    }
}
