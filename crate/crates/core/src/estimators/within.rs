use nalgebra::{DMatrix, DVector};

use super::linalg::{least_squares, t_pvalue, wald};
use super::{f_test, Coefficient, Design, Estimator, FitResult, StdErrors};
use crate::error::{Error, Result};
use crate::panel::within_transform;

fn squared_corr(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab * sab / (saa * sbb)).min(1.0))
}

/// Within (entity-demeaned) least squares on a complete-case design.
///
/// The intercept is the grand mean of the response net of the fitted
/// slopes, which equals the average entity effect.
pub fn fit_within(design: &Design) -> Result<FitResult> {
    let n = design.n_obs();
    let k = design.x.ncols();
    let groups: Vec<usize> = design.rows.iter().map(|r| r.0).collect();
    let entities = design.entity_count();
    if entities < 2 {
        return Err(Error::estimation(format!(
            "within estimation needs at least 2 entities, sample has {entities}"
        )));
    }
    let dof = n as i64 - k as i64 - entities as i64;
    if dof <= 0 {
        return Err(Error::estimation(format!(
            "no residual degrees of freedom ({n} rows, {k} slopes, {entities} entities)"
        )));
    }
    let dof = dof as f64;

    let mut stacked = DMatrix::zeros(n, k + 1);
    stacked.column_mut(0).copy_from(&design.y);
    stacked.view_mut((0, 1), (n, k)).copy_from(&design.x);
    let within = within_transform(&groups, &stacked)?;
    let yd = within.demeaned.column(0).into_owned();
    let xd = within.demeaned.columns(1, k).into_owned();

    let ls = least_squares(&xd, &yd, &design.names)?;
    let rss = ls.resid.norm_squared();
    let tss = yd.norm_squared();
    let sigma2 = rss / dof;

    let (cov, test_dof) = match design.std_errors {
        StdErrors::Classical => (&ls.xtx_inv * sigma2, dof),
        StdErrors::ClusterEntity => {
            let mut meat = DMatrix::zeros(k, k);
            let mut score = vec![DVector::<f64>::zeros(k); within.groups.len()];
            let slot: std::collections::HashMap<usize, usize> =
                within.groups.iter().enumerate().map(|(i, g)| (*g, i)).collect();
            for (i, g) in groups.iter().enumerate() {
                score[slot[g]] += xd.row(i).transpose() * ls.resid[i];
            }
            for s in &score {
                meat += s * s.transpose();
            }
            let g = entities as f64;
            let c = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
            (&ls.xtx_inv * meat * &ls.xtx_inv * c, g - 1.0)
        }
    };

    let coefficients: Vec<Coefficient> = (0..k)
        .map(|c| {
            let se = cov[(c, c)].max(0.0).sqrt();
            Coefficient {
                name: design.names[c].clone(),
                estimate: ls.beta[c],
                std_error: se,
                p_value: t_pvalue(ls.beta[c], se, test_dof),
            }
        })
        .collect();

    let nf = n as f64;
    let xbar = DVector::from_iterator(k, design.x.column_iter().map(|c| c.sum() / nf));
    let ybar = design.y.sum() / nf;
    let b0 = ybar - xbar.dot(&ls.beta);
    let b0_se = (sigma2 / nf + (xbar.transpose() * &cov * &xbar)[(0, 0)]).max(0.0).sqrt();
    let intercept = Coefficient {
        name: "_cons".into(),
        estimate: b0,
        std_error: b0_se,
        p_value: t_pvalue(b0, b0_se, test_dof),
    };

    let fitted = &design.x * &ls.beta;
    let r2_within = (tss > 0.0).then(|| (1.0 - rss / tss).clamp(0.0, 1.0));
    let r2_overall = squared_corr(&design.y, &fitted);

    let (joint_stat, joint_dof) = if k == 0 {
        (None, None)
    } else {
        let stat = match design.std_errors {
            StdErrors::Classical if rss == 0.0 => Some(f64::INFINITY),
            StdErrors::Classical => Some(((tss - rss).max(0.0) / k as f64) / sigma2),
            StdErrors::ClusterEntity => wald(&ls.beta, &cov).map(|w| w / k as f64),
        };
        (stat, Some((k as f64, test_dof)))
    };
    let mut fit = FitResult {
        estimator: Estimator::WithinFe,
        dependent: design.dependent.clone(),
        lag: design.lag,
        coefficients,
        intercept: Some(intercept),
        r2_within,
        r2_overall,
        n_obs: n,
        entity_count: entities,
        week_count: design.week_count(),
        joint_stat,
        joint_dof,
        f_pvalue: None,
    };
    fit.f_pvalue = f_test(&fit);
    Ok(fit)
}
