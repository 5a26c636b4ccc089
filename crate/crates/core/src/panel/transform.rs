use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(super) fn log_growth(values: &[Option<f64>], weeks: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    for (e, chunk) in values.chunks(weeks).enumerate() {
        for t in 1..chunk.len() {
            if let (Some(prev), Some(cur)) = (chunk[t - 1], chunk[t]) {
                if prev > 0.0 && cur > 0.0 {
                    out[e * weeks + t] = Some((cur / prev).ln());
                }
            }
        }
    }
    out
}

pub(super) fn lag(values: &[Option<f64>], weeks: usize, k: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    for (e, chunk) in values.chunks(weeks).enumerate() {
        for t in k..chunk.len() {
            out[e * weeks + t] = chunk[t - k];
        }
    }
    out
}

/// Trailing mean over the last `window` positions, ignoring missing cells.
///
/// Position `i` averages the non-missing values among positions
/// `i + 1 - window ..= i`; it is missing only when all of them are.
pub fn rolling_mean(series: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::spec("rolling window must be at least 1"));
    }
    Ok((0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let (sum, n) = series[lo..=i]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect())
}

/// Result of entity demeaning.
#[derive(Debug, Clone)]
pub struct Within {
    pub demeaned: DMatrix<f64>,
    /// Group labels in order of first appearance.
    pub groups: Vec<usize>,
    /// Per-group column means, one row per entry of `groups`.
    pub means: DMatrix<f64>,
    /// Row count per entry of `groups`.
    pub counts: Vec<usize>,
}

/// Subtract each group's column means from its rows.
///
/// `group_of_row[i]` labels row `i` of `data`; labels need not be
/// contiguous or sorted.
pub fn within_transform(group_of_row: &[usize], data: &DMatrix<f64>) -> Result<Within> {
    if data.nrows() == 0 {
        return Err(Error::estimation("within transform of an empty matrix"));
    }
    if group_of_row.len() != data.nrows() {
        return Err(Error::estimation(format!(
            "{} group labels for {} rows",
            group_of_row.len(),
            data.nrows()
        )));
    }
    let mut slot = std::collections::HashMap::new();
    let mut groups = Vec::new();
    let row_slot: Vec<usize> = group_of_row
        .iter()
        .map(|g| {
            *slot.entry(*g).or_insert_with(|| {
                groups.push(*g);
                groups.len() - 1
            })
        })
        .collect();

    let k = data.ncols();
    let mut sums = DMatrix::<f64>::zeros(groups.len(), k);
    let mut counts = vec![0usize; groups.len()];
    for (i, &s) in row_slot.iter().enumerate() {
        counts[s] += 1;
        for c in 0..k {
            sums[(s, c)] += data[(i, c)];
        }
    }
    let mut means = sums;
    for (s, &n) in counts.iter().enumerate() {
        let inv = 1.0 / n as f64;
        for c in 0..k {
            means[(s, c)] *= inv;
        }
    }
    let mut demeaned = data.clone();
    for (i, &s) in row_slot.iter().enumerate() {
        for c in 0..k {
            demeaned[(i, c)] -= means[(s, c)];
        }
    }
    Ok(Within {
        demeaned,
        groups,
        means,
        counts,
    })
}
