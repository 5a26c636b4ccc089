use super::WeeklyPanel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VariableStats {
    pub name: String,
    pub count: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Descriptive statistics plus a pairwise-complete correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub variables: Vec<VariableStats>,
    /// `correlation[i][j]`, missing where fewer than two paired cells exist
    /// or either side has zero variance.
    pub correlation: Vec<Vec<Option<f64>>>,
}

pub fn describe(panel: &WeeklyPanel, vars: &[&str]) -> Result<SummaryStats> {
    if vars.is_empty() {
        return Err(Error::spec("describe needs at least one variable"));
    }
    let cols: Vec<&[Option<f64>]> = vars
        .iter()
        .map(|v| panel.column(v))
        .collect::<Result<_>>()?;

    let variables = vars
        .iter()
        .zip(&cols)
        .map(|(name, col)| {
            let xs: Vec<f64> = col.iter().flatten().copied().collect();
            let n = xs.len();
            let mean = (n > 0).then(|| xs.iter().sum::<f64>() / n as f64);
            let sd = mean.filter(|_| n > 1).map(|m| {
                (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            });
            VariableStats {
                name: name.to_string(),
                count: n,
                mean,
                sd,
                min: xs.iter().copied().reduce(f64::min),
                max: xs.iter().copied().reduce(f64::max),
            }
        })
        .collect();

    let k = vars.len();
    let mut correlation = vec![vec![None; k]; k];
    for i in 0..k {
        correlation[i][i] = pair_corr(cols[i], cols[i]).map(|_| 1.0);
        for j in i + 1..k {
            let r = pair_corr(cols[i], cols[j]);
            correlation[i][j] = r;
            correlation[j][i] = r;
        }
    }
    Ok(SummaryStats {
        variables,
        correlation,
    })
}

fn pair_corr(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
