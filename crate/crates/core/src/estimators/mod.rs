//! Panel regression: the two-way fixed-effects within estimator and
//! one-step Arellano-Bond GMM on first differences.

mod arellano_bond;
mod design;
mod linalg;
mod within;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::dag::ControlBlock;
use crate::error::{Error, Result};
use crate::ingest::VaccinationSource;
use crate::panel::WeeklyPanel;

pub use arellano_bond::{build_ab_design, fit_arellano_bond, AbDesign, AbOptions};
pub use design::{build_design, dep_lag_name, Design};
pub use within::fit_within;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    WithinFe,
    ArellanoBond,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::WithinFe => "within_fe",
            Estimator::ArellanoBond => "arellano_bond",
        }
    }
}

/// Standard-error flavour for the within estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdErrors {
    #[default]
    Classical,
    /// Cluster-robust by entity.
    ClusterEntity,
}

/// One regression of a weekly growth rate on lagged regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Response column, already a log-growth series.
    pub dependent: String,
    /// Lag `m` (weeks) applied to mobility, soft-index and vaccination columns.
    pub lag: usize,
    pub mobility: Vec<String>,
    /// Number of lags of the response used as regressors.
    pub dep_lags: usize,
    pub soft: Vec<String>,
    pub vaccination: Vec<String>,
    pub time_dummies: bool,
    pub trend: bool,
    pub estimator: Estimator,
    pub std_errors: StdErrors,
}

impl ModelSpec {
    /// Defaults: four response lags, time dummies, within estimator.
    pub fn new(dependent: impl Into<String>, lag: usize) -> Self {
        ModelSpec {
            dependent: dependent.into(),
            lag,
            mobility: Vec::new(),
            dep_lags: 4,
            soft: Vec::new(),
            vaccination: Vec::new(),
            time_dummies: true,
            trend: false,
            estimator: Estimator::WithinFe,
            std_errors: StdErrors::Classical,
        }
    }

    pub fn with_mobility(mut self, vars: &[&str]) -> Self {
        self.mobility = vars.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_soft(mut self, vars: &[&str]) -> Self {
        self.soft = vars.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_vaccination(mut self, vars: &[&str]) -> Self {
        self.vaccination = vars.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Regressors that enter at lag `m`, in block order.
    pub fn lagged_regressors(&self) -> impl Iterator<Item = &String> {
        self.mobility.iter().chain(&self.vaccination).chain(&self.soft)
    }

    pub fn is_deaths(&self) -> bool {
        self.dependent.ends_with("deaths")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.lag) {
            return Err(Error::spec(format!("regressor lag {} outside 1..=4", self.lag)));
        }
        if self.is_deaths() && self.lag < 2 {
            return Err(Error::spec(format!(
                "`{}` needs a regressor lag of at least 2 weeks",
                self.dependent
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        seen.insert(self.dependent.as_str());
        for v in self.lagged_regressors() {
            if !seen.insert(v.as_str()) {
                return Err(Error::spec(format!("variable `{v}` appears twice in the model")));
            }
        }
        Ok(())
    }
}

/// Panel variables each control block expands to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockVariables {
    pub vaccination: Vec<String>,
    pub soft_behavioral: Vec<String>,
    pub soft_general: Vec<String>,
    pub dep_lags: usize,
}

impl BlockVariables {
    /// News and search indexes for every keyword category, four response lags.
    pub fn standard(source: VaccinationSource) -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        BlockVariables {
            vaccination: names(source.variables()),
            soft_behavioral: names(&["n_prevention", "gt_prevention"]),
            soft_general: names(&[
                "n_covid",
                "n_fakenews",
                "n_vaccines",
                "gt_covid",
                "gt_fakenews",
                "gt_vaccines",
            ]),
            dep_lags: 4,
        }
    }
}

impl ModelSpec {
    /// A within-estimator spec whose controls are the union of `blocks`.
    pub fn from_blocks(
        dependent: &str,
        lag: usize,
        mobility: &[&str],
        blocks: &[ControlBlock],
        vars: &BlockVariables,
    ) -> Self {
        let mut spec = ModelSpec::new(dependent, lag).with_mobility(mobility);
        spec.dep_lags = 0;
        for block in blocks {
            match block {
                ControlBlock::Vaccination => spec.vaccination.extend(vars.vaccination.iter().cloned()),
                ControlBlock::SoftBehavioral => spec.soft.extend(vars.soft_behavioral.iter().cloned()),
                ControlBlock::SoftGeneral => spec.soft.extend(vars.soft_general.iter().cloned()),
                ControlBlock::DepLags => spec.dep_lags = vars.dep_lags,
            }
        }
        spec
    }
}

/// One estimated slope.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
}

/// Estimates and fit statistics of one regression.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimator: Estimator,
    pub dependent: String,
    pub lag: usize,
    pub coefficients: Vec<Coefficient>,
    pub intercept: Option<Coefficient>,
    pub r2_within: Option<f64>,
    pub r2_overall: Option<f64>,
    pub n_obs: usize,
    pub entity_count: usize,
    pub week_count: usize,
    /// Joint-test statistic (F for the within estimator, Wald χ² for GMM).
    pub joint_stat: Option<f64>,
    /// Numerator and denominator degrees of freedom of the joint test;
    /// the denominator is infinite for a χ² test.
    pub joint_dof: Option<(f64, f64)>,
    pub f_pvalue: Option<f64>,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.coefficients.iter().map(|c| c.name.as_str())
    }
}

/// p-value of the joint test that every slope is zero. `None` when the
/// test has no residual degrees of freedom.
pub fn f_test(fit: &FitResult) -> Option<f64> {
    let stat = fit.joint_stat?;
    let (d1, d2) = fit.joint_dof?;
    if d1 <= 0.0 || d2 <= 0.0 {
        return None;
    }
    if stat.is_infinite() {
        return Some(0.0);
    }
    if d2.is_infinite() {
        let chi = statrs::distribution::ChiSquared::new(d1).ok()?;
        return Some(chi.sf(stat));
    }
    Some(FisherSnedecor::new(d1, d2).ok()?.sf(stat))
}

/// Fit `spec` with the estimator it names.
pub fn fit(panel: &WeeklyPanel, spec: &ModelSpec, ab: &AbOptions) -> Result<FitResult> {
    match spec.estimator {
        Estimator::WithinFe => fit_within(&build_design(panel, spec)?),
        Estimator::ArellanoBond => fit_arellano_bond(panel, spec, ab),
    }
}
