use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::dep_lag_name;
use super::linalg::{spd_inverse, wald, z_pvalue};
use super::{f_test, Coefficient, Estimator, FitResult, ModelSpec};
use crate::error::{Error, Result};
use crate::panel::WeeklyPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmStep {
    #[default]
    OneStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbOptions {
    /// Response levels `t−2 ..= t−1−depth` instrument the equation at `t`.
    pub instrument_lag_depth: usize,
    pub step: GmmStep,
    /// Add a trend (a constant in differences) even if the spec has none.
    pub include_trend: bool,
}

impl Default for AbOptions {
    fn default() -> Self {
        AbOptions {
            instrument_lag_depth: 4,
            step: GmmStep::OneStep,
            include_trend: false,
        }
    }
}

/// First-differenced regressors, response and instruments.
#[derive(Debug, Clone)]
pub struct AbDesign {
    pub names: Vec<String>,
    pub instruments: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    /// `(entity position, 1-based week)` of each differenced equation,
    /// grouped by entity and increasing in week.
    pub rows: Vec<(usize, usize)>,
}

impl AbDesign {
    /// `Z'(Δy − ΔX b)`.
    pub fn moments(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.z.transpose() * (&self.y - &self.x * beta)
    }

    /// `Σ_i Z_i' H Z_i` with `H` the MA(1) pattern of differenced errors.
    fn instrument_cross_product(&self) -> DMatrix<f64> {
        let mut a = self.z.transpose() * &self.z * 2.0;
        for i in 1..self.rows.len() {
            let (prev, cur) = (self.rows[i - 1], self.rows[i]);
            if prev.0 == cur.0 && cur.1 == prev.1 + 1 {
                let za = self.z.row(i - 1).transpose();
                let zb = self.z.row(i).transpose();
                let cross = &za * zb.transpose();
                a -= &cross + cross.transpose();
            }
        }
        a
    }
}

/// Build the differenced equations of `spec`.
pub fn build_ab_design(panel: &WeeklyPanel, spec: &ModelSpec, opts: &AbOptions) -> Result<AbDesign> {
    spec.validate()?;
    if opts.instrument_lag_depth == 0 {
        return Err(Error::spec("instrument lag depth must be at least 1"));
    }
    let weeks = panel.week_count();
    if weeks < spec.dep_lags + 2 {
        return Err(Error::estimation(format!(
            "{weeks} weeks cannot support {} response lags in differences",
            spec.dep_lags
        )));
    }
    let dep = panel.column(&spec.dependent)?;
    let exog: Vec<&[Option<f64>]> = spec
        .lagged_regressors()
        .map(|v| panel.column(v))
        .collect::<Result<_>>()?;
    let at = |col: &[Option<f64>], e: usize, t: usize, back: usize| -> Option<f64> {
        (t > back).then(|| col[e * weeks + t - back - 1]).flatten()
    };
    let diff = |col: &[Option<f64>], e: usize, t: usize, back: usize| -> Option<f64> {
        Some(at(col, e, t, back)? - at(col, e, t, back + 1)?)
    };

    let mut rows = Vec::new();
    let mut dx: Vec<Vec<f64>> = Vec::new();
    let mut dy = Vec::new();
    for e in 0..panel.entity_count() {
        't: for t in 1..=weeks {
            let Some(y) = diff(dep, e, t, 0) else { continue };
            let mut row = Vec::new();
            for col in &exog {
                match diff(col, e, t, spec.lag) {
                    Some(v) => row.push(v),
                    None => continue 't,
                }
            }
            for h in 1..=spec.dep_lags {
                match diff(dep, e, t, h) {
                    Some(v) => row.push(v),
                    None => continue 't,
                }
            }
            rows.push((e, t));
            dx.push(row);
            dy.push(y);
        }
    }
    if rows.is_empty() {
        return Err(Error::estimation(format!(
            "no complete differenced observations for `{}`",
            spec.dependent
        )));
    }

    let trend = spec.trend || opts.include_trend;
    let periods: Vec<usize> = rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let dummies: &[usize] = match (spec.time_dummies, trend) {
        (false, _) => &[],
        (true, false) => &periods,
        (true, true) => &periods[1..],
    };
    let mut names: Vec<String> = spec.lagged_regressors().cloned().collect();
    names.extend((1..=spec.dep_lags).map(|h| dep_lag_name(&spec.dependent, h)));
    let n_stoch = names.len();
    names.extend(dummies.iter().map(|t| format!("week_{t}")));
    if trend {
        names.push("trend".into());
    }

    let k = names.len();
    let n = rows.len();
    let mut x = DMatrix::zeros(n, k);
    for (i, ((_, t), row)) in rows.iter().zip(&dx).enumerate() {
        for (c, v) in row.iter().enumerate() {
            x[(i, c)] = *v;
        }
        if let Ok(d) = dummies.binary_search(t) {
            x[(i, n_stoch + d)] = 1.0;
        }
        if trend {
            x[(i, k - 1)] = 1.0;
        }
    }

    // Per-period response levels, then the strictly exogenous columns
    // (differenced regressors and deterministic terms) as their own instruments.
    let mut gmm: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (i, &(e, t)) in rows.iter().enumerate() {
        for s in 2..=1 + opts.instrument_lag_depth {
            if let Some(v) = at(dep, e, t, s) {
                gmm.entry((t, s)).or_insert_with(|| vec![0.0; n])[i] = v;
            }
        }
    }
    let gmm: Vec<((usize, usize), Vec<f64>)> = gmm
        .into_iter()
        .filter(|(_, col)| col.iter().any(|v| *v != 0.0))
        .collect();
    let exog_cols: Vec<usize> = (0..exog.len()).chain(n_stoch..k).collect();
    let mut instruments: Vec<String> = gmm
        .iter()
        .map(|((t, s), _)| format!("L{s}.{}@{t}", spec.dependent))
        .collect();
    instruments.extend(exog_cols.iter().map(|c| names[*c].clone()));
    let mut z = DMatrix::zeros(n, instruments.len());
    for (c, (_, col)) in gmm.iter().enumerate() {
        z.column_mut(c).copy_from_slice(col);
    }
    for (j, c) in exog_cols.iter().enumerate() {
        z.set_column(gmm.len() + j, &x.column(*c));
    }

    Ok(AbDesign {
        names,
        instruments,
        x,
        y: DVector::from_vec(dy),
        z,
        rows,
    })
}

/// One-step Arellano-Bond GMM on the first-differenced model.
///
/// Standard errors are the homoskedastic one-step ones; the joint test is a
/// Wald χ² on every slope. No R² is defined.
pub fn fit_arellano_bond(panel: &WeeklyPanel, spec: &ModelSpec, opts: &AbOptions) -> Result<FitResult> {
    let d = build_ab_design(panel, spec, opts)?;
    let (n, k, l) = (d.x.nrows(), d.x.ncols(), d.z.ncols());
    if l < k {
        return Err(Error::Identifiability(format!(
            "{l} instruments for {k} parameters"
        )));
    }
    if n <= k {
        return Err(Error::estimation(format!("{n} differenced rows for {k} parameters")));
    }
    let w = spd_inverse(&d.instrument_cross_product(), "instrument cross-product")?;
    let zx = d.z.transpose() * &d.x;
    let zy = d.z.transpose() * &d.y;
    let normal = zx.transpose() * &w * &zx;
    let normal_inv = spd_inverse(&normal, "GMM normal matrix")?;
    let beta = &normal_inv * (zx.transpose() * &w * zy);
    let resid = &d.y - &d.x * &beta;
    let sigma2 = resid.norm_squared() / (2.0 * (n - k) as f64);
    let cov = normal_inv * sigma2;

    let coefficients = (0..k)
        .map(|c| {
            let se = cov[(c, c)].max(0.0).sqrt();
            Coefficient {
                name: d.names[c].clone(),
                estimate: beta[c],
                std_error: se,
                p_value: z_pvalue(beta[c], se),
            }
        })
        .collect();
    let entities: BTreeSet<usize> = d.rows.iter().map(|r| r.0).collect();
    let weeks: BTreeSet<usize> = d.rows.iter().map(|r| r.1).collect();
    let stat = if k == 0 {
        None
    } else if sigma2 == 0.0 {
        Some(f64::INFINITY)
    } else {
        wald(&beta, &cov)
    };
    let mut fit = FitResult {
        estimator: Estimator::ArellanoBond,
        dependent: spec.dependent.clone(),
        lag: spec.lag,
        coefficients,
        intercept: None,
        r2_within: None,
        r2_overall: None,
        n_obs: n,
        entity_count: entities.len(),
        week_count: weeks.len(),
        joint_stat: stat,
        joint_dof: (k > 0).then_some((k as f64, f64::INFINITY)),
        f_pvalue: None,
    };
    fit.f_pvalue = f_test(&fit);
    Ok(fit)
}
