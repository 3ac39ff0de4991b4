//! Physical quantities written as `"<number> <unit>"` in scenario files.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::Deserialize;

fn split(text: &str) -> Result<(f64, &str), String> {
    let t = text.trim();
    let idx = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .or_else(|| t.rfind(|c: char| c.is_ascii_whitespace()).map(|i| i + 1))
        .ok_or_else(|| format!("`{text}` has no unit"))?;
    let (num, unit) = t.split_at(idx);
    let unit = unit.trim();
    if unit.is_empty() {
        return Err(format!("`{text}` has no unit"));
    }
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{text}`: `{}` is not a number", num.trim()))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok((value, unit))
}

fn scaled(text: &str, units: &[(&str, f64)], kind: &str) -> Result<f64, String> {
    let (value, unit) = split(text)?;
    let scale = units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let known: Vec<_> = units.iter().map(|(u, _)| *u).collect();
            format!(
                "`{unit}` is not a {kind} unit (expected one of {})",
                known.join(", ")
            )
        })?;
    Ok(value * scale)
}

/// Frequency in Hz.
pub fn parse_frequency(text: &str) -> Result<f64, String> {
    scaled(
        text,
        &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)],
        "frequency",
    )
}

/// Time in ps.
pub fn parse_time_ps(text: &str) -> Result<f64, String> {
    scaled(
        text,
        &[("fs", 1e-3), ("ps", 1.0), ("ns", 1e3), ("us", 1e6)],
        "time",
    )
}

/// Voltage in V.
pub fn parse_voltage(text: &str) -> Result<f64, String> {
    scaled(text, &[("mV", 1e-3), ("V", 1.0)], "voltage")
}

macro_rules! quantity {
    ($name:ident, $parse:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
        pub struct $name(pub f64);

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                $parse(&text).map($name).map_err(de::Error::custom)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

quantity!(Frequency, parse_frequency, "Frequency in Hz.");
quantity!(TimePs, parse_time_ps, "Time in ps.");
quantity!(Voltage, parse_voltage, "Voltage in V.");
