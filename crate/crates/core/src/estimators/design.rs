use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::{ModelSpec, StdErrors};
use crate::error::{Error, Result};
use crate::panel::WeeklyPanel;

/// Name of the `h`-th response lag regressor, e.g. `cases_2` for
/// `dln_cases`.
pub fn dep_lag_name(dependent: &str, h: usize) -> String {
    let base = dependent.strip_prefix("dln_").unwrap_or(dependent);
    format!("{base}_{h}")
}

/// Complete-case regression data for the within estimator.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// `(entity position, 1-based week)` of every row.
    pub rows: Vec<(usize, usize)>,
    pub dependent: String,
    pub lag: usize,
    pub std_errors: StdErrors,
}

impl Design {
    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn entity_count(&self) -> usize {
        self.rows.iter().map(|r| r.0).collect::<BTreeSet<_>>().len()
    }

    pub fn week_count(&self) -> usize {
        self.rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().len()
    }
}

/// Assemble the complete-case rows of `spec` from `panel`.
///
/// Lagged regressors are read at `t − m`, response lags at `t − h`.
/// Time dummies use the first in-sample week as the reference.
pub fn build_design(panel: &WeeklyPanel, spec: &ModelSpec) -> Result<Design> {
    spec.validate()?;
    let lagged: Vec<&[Option<f64>]> = spec
        .lagged_regressors()
        .map(|v| panel.column(v))
        .collect::<Result<_>>()?;
    let dep = panel.column(&spec.dependent)?;
    let weeks = panel.week_count();
    let at = |col: &[Option<f64>], e: usize, t: usize, back: usize| -> Option<f64> {
        (t > back).then(|| col[e * weeks + t - back - 1]).flatten()
    };

    let mut rows = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for e in 0..panel.entity_count() {
        'week: for t in 1..=weeks {
            let Some(y) = at(dep, e, t, 0) else { continue };
            let mut row = Vec::with_capacity(lagged.len() + spec.dep_lags);
            for col in &lagged {
                match at(col, e, t, spec.lag) {
                    Some(v) => row.push(v),
                    None => continue 'week,
                }
            }
            for h in 1..=spec.dep_lags {
                match at(dep, e, t, h) {
                    Some(v) => row.push(v),
                    None => continue 'week,
                }
            }
            rows.push((e, t));
            values.push(row);
            ys.push(y);
        }
    }
    if rows.is_empty() {
        return Err(Error::estimation(format!(
            "no complete observations for `{}` at lag {}",
            spec.dependent, spec.lag
        )));
    }

    let mut names: Vec<String> = spec.lagged_regressors().cloned().collect();
    names.extend((1..=spec.dep_lags).map(|h| dep_lag_name(&spec.dependent, h)));
    let in_sample: Vec<usize> = rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let dummy_weeks: &[usize] = if spec.time_dummies { &in_sample[1..] } else { &[] };
    names.extend(dummy_weeks.iter().map(|t| format!("week_{t}")));
    if spec.trend {
        names.push("trend".into());
    }

    let k = names.len();
    let mut x = DMatrix::zeros(rows.len(), k);
    for (i, ((_, t), row)) in rows.iter().zip(&values).enumerate() {
        for (c, v) in row.iter().enumerate() {
            x[(i, c)] = *v;
        }
        if let Ok(d) = dummy_weeks.binary_search(t) {
            x[(i, row.len() + d)] = 1.0;
        }
        if spec.trend {
            x[(i, k - 1)] = *t as f64;
        }
    }
    Ok(Design {
        names,
        x,
        y: DVector::from_vec(ys),
        rows,
        dependent: spec.dependent.clone(),
        lag: spec.lag,
        std_errors: spec.std_errors,
    })
}
