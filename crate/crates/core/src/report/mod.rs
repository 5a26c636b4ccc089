//! Regression tables, descriptive-statistics files and the cumulative
//! effect calculator.

mod summary;
mod table;

use crate::error::{Error, Result};

pub use summary::{correlation_csv, durations_csv, summary_csv};
pub use table::{Format, RegressionTable, RowGroup, TableColumn};

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_stars(p: f64) -> Result<&'static str> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::spec(format!("p-value {p} outside [0, 1]")));
    }
    Ok(if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    })
}

/// Week-by-week compounding of per-horizon effects: `∏(1 + |b|) − 1`.
pub fn compound_effect(coefs: &[f64]) -> Result<f64> {
    if coefs.is_empty() {
        return Err(Error::spec("compound effect of an empty coefficient list"));
    }
    if let Some(c) = coefs.iter().find(|c| !c.is_finite()) {
        return Err(Error::spec(format!("non-finite coefficient {c}")));
    }
    Ok(coefs.iter().map(|c| 1.0 + c.abs()).product::<f64>() - 1.0)
}

/// Table number format: three significant figures below one, four at or
/// above one (never fewer than zero decimals).
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return ".".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if a < 1e-7 {
        return format!("{x:.2e}");
    }
    let magnitude = a.log10().floor() as i32;
    let sig = if a < 1.0 { 3 } else { 4 };
    let decimals = (sig - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new digit (0.9996 -> 1.000)
    let carried: f64 = s.parse().unwrap_or(x);
    if carried.abs() >= 10f64.powi(magnitude + 1) && decimals > 0 && a < 1.0 {
        return format_number(carried);
    }
    if s.starts_with("-") && carried == 0.0 {
        return s[1..].to_string();
    }
    s
}
