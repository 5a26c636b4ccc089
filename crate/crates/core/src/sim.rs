//! Synthetic municipality-week panels from a linear structural model with
//! known coefficients, and a Monte Carlo harness for estimator recovery.
//!
//! The generator wires exactly the edges of the bundled mobility graphs.
//! Behaviour `B` is an exact linear function of its parents and is written
//! to the panel as a latent column.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dag::{derive_controls, Bundled, CausalDag, ControlBlock};
use crate::error::{Error, Result};
use crate::estimators::{fit_within, build_design, BlockVariables, ModelSpec};
use crate::exec::Execution;
use crate::panel::{Role, WeeklyPanel, MOBILITY_CATEGORIES};

/// Weeks simulated before the first emitted week.
pub const BURN_IN: usize = 5;

/// Loadings of behaviour on its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BWeights {
    pub gt: f64,
    pub news: f64,
    /// On the cases growth rate at lags 1..=4.
    pub dep_lags: [f64; 4],
    pub vaccination: f64,
}

impl Default for BWeights {
    fn default() -> Self {
        BWeights {
            gt: 0.5,
            news: 0.5,
            dep_lags: [0.5, 0.25, 0.1, 0.05],
            vaccination: 0.3,
        }
    }
}

/// Means of the Poisson soft-index counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftMeans {
    pub gt_behavioral: f64,
    pub news_behavioral: f64,
    pub gt_general: f64,
    pub news_general: f64,
}

impl Default for SoftMeans {
    fn default() -> Self {
        SoftMeans {
            gt_behavioral: 5.0,
            news_behavioral: 5.0,
            gt_general: 5.0,
            news_general: 5.0,
        }
    }
}

/// Every coefficient of the structural model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScmParams {
    pub entity_count: usize,
    pub week_count: usize,
    /// Weeks between mobility (and the other regressors) and cases.
    pub lag: usize,
    /// One effect per mobility category, in category order.
    pub true_beta: Vec<f64>,
    pub true_phi: [f64; 4],
    pub beta0: f64,
    /// Outcome loadings on the behavioural search and news indexes.
    pub gamma_b: f64,
    pub eta_b: f64,
    /// Mobility loadings on the general search and news indexes.
    pub gamma_g: f64,
    pub eta_g: f64,
    /// Outcome loading on vaccination.
    pub nu: f64,
    pub b_weights: BWeights,
    /// Mobility loadings on vaccination and behaviour.
    pub mobility_on_vaccination: f64,
    pub mobility_on_behavior: f64,
    /// Shift of the general index means per unit of vaccination.
    pub vaccination_on_general: f64,
    pub soft_means: SoftMeans,
    /// Weekly first-dose intensity per entity, scaled by an entity factor.
    pub vaccination_rate: f64,
    pub noise_sd: f64,
    pub entity_effect_sd: f64,
    pub time_effect_sd: f64,
    pub mobility_noise_sd: f64,
    pub mobility_effect_sd: f64,
    pub include_vaccination: bool,
    pub seed: u64,
}

impl Default for ScmParams {
    fn default() -> Self {
        ScmParams {
            entity_count: 100,
            week_count: 40,
            lag: 1,
            true_beta: vec![0.05, -0.03],
            true_phi: [0.3, 0.1, 0.05, 0.0],
            beta0: 0.01,
            gamma_b: 0.03,
            eta_b: 0.02,
            gamma_g: 0.3,
            eta_g: 0.3,
            nu: -0.05,
            b_weights: BWeights::default(),
            mobility_on_vaccination: 0.5,
            mobility_on_behavior: 1.0,
            vaccination_on_general: 1.0,
            soft_means: SoftMeans::default(),
            vaccination_rate: 2.0,
            noise_sd: 0.1,
            entity_effect_sd: 0.05,
            time_effect_sd: 0.05,
            mobility_noise_sd: 1.0,
            mobility_effect_sd: 2.0,
            include_vaccination: true,
            seed: 0,
        }
    }
}

impl ScmParams {
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: ScmParams = toml::from_str(text).map_err(|e| Error::config(format!("simulation config: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters serialise")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.entity_count < 2 {
            return bad(format!("entity_count {} is below 2", self.entity_count));
        }
        if self.week_count < 10 {
            return bad(format!("week_count {} is below 10", self.week_count));
        }
        if !(1..=4).contains(&self.lag) {
            return bad(format!("lag {} outside 1..=4", self.lag));
        }
        if self.true_beta.is_empty() || self.true_beta.len() > MOBILITY_CATEGORIES.len() {
            return bad(format!("true_beta needs 1..=6 entries, got {}", self.true_beta.len()));
        }
        if self.true_phi.iter().map(|p| p.abs()).sum::<f64>() >= 1.0 {
            return bad("sum of |true_phi| must be below 1".into());
        }
        let sds = [
            ("noise_sd", self.noise_sd),
            ("entity_effect_sd", self.entity_effect_sd),
            ("time_effect_sd", self.time_effect_sd),
            ("mobility_noise_sd", self.mobility_noise_sd),
            ("mobility_effect_sd", self.mobility_effect_sd),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative number"));
            }
        }
        let means = [
            self.soft_means.gt_behavioral,
            self.soft_means.news_behavioral,
            self.soft_means.gt_general,
            self.soft_means.news_general,
            self.vaccination_rate,
        ];
        if means.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return bad("soft-index means and vaccination_rate must be nonnegative".into());
        }
        Ok(())
    }

    /// Names of the simulated mobility categories.
    pub fn mobility_names(&self) -> Vec<&'static str> {
        MOBILITY_CATEGORIES[..self.true_beta.len()].to_vec()
    }

    /// The graph the generator follows.
    pub fn dag(&self) -> CausalDag {
        if self.include_vaccination {
            Bundled::MobilityFull.load()
        } else {
            Bundled::Mobility2020.load()
        }
    }

    /// Panel variables behind each control block.
    pub fn block_variables(&self) -> BlockVariables {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        BlockVariables {
            vaccination: if self.include_vaccination {
                names(&["1st_dose", "2nd_dose"])
            } else {
                Vec::new()
            },
            soft_behavioral: names(&["n_prevention", "gt_prevention"]),
            soft_general: names(&["n_covid", "gt_covid"]),
            dep_lags: 4,
        }
    }

    /// Cases spec with the given control blocks at the generating lag.
    pub fn spec_with(&self, blocks: &[ControlBlock]) -> ModelSpec {
        ModelSpec::from_blocks(
            "dln_cases",
            self.lag,
            &self.mobility_names(),
            blocks,
            &self.block_variables(),
        )
    }

    /// Cases spec with the controls derived from [`ScmParams::dag`].
    pub fn correct_spec(&self) -> Result<ModelSpec> {
        Ok(self.spec_with(&derive_controls(&self.dag(), "X", "Y")?))
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub panel: WeeklyPanel,
    pub truth: ScmParams,
}

impl SimOutput {
    /// Key facts about the generator recorded alongside its output.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("seed".into(), self.truth.seed.to_string());
        m.insert("burn_in_weeks".into(), BURN_IN.to_string());
        m.insert("vaccination_channels".into(), "linear".into());
        m.insert("latent".into(), "behavior".into());
        m
    }
}

/// First simulated week.
pub fn anchor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 5, 4).expect("valid date")
}

const STATES: [&str; 5] = ["31", "33", "35", "41", "43"];

fn normal(rng: &mut ChaCha20Rng, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sd * z
}

fn poisson(rng: &mut ChaCha20Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng)
    }
}

/// Simulate one panel.
///
/// A single ChaCha20 stream seeded with `params.seed` is consumed in this
/// order: week effects for cases then deaths; then per entity the outcome
/// effects (cases, deaths), the mobility effects, the vaccination factor,
/// and per week the behavioural counts (search, news), first and second
/// doses, the general counts (search, news), one mobility shock per
/// category, and the cases and deaths shocks.
pub fn simulate(params: &ScmParams) -> Result<SimOutput> {
    params.validate()?;
    let p = params;
    let total = BURN_IN + p.week_count;
    let k = p.true_beta.len();
    let mut rng = ChaCha20Rng::seed_from_u64(p.seed);

    let delta: Vec<f64> = (0..total).map(|_| normal(&mut rng, p.time_effect_sd)).collect();
    let delta_d: Vec<f64> = (0..total).map(|_| normal(&mut rng, p.time_effect_sd)).collect();
    let death_lag = p.lag.max(2);
    let vacc = p.include_vaccination;

    let n = p.entity_count;
    let cells = n * p.week_count;
    let mut out: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    let mut push = |name: &'static str, v: f64| out.entry(name).or_insert_with(|| Vec::with_capacity(cells)).push(Some(v));
    let mut mobility_out = vec![Vec::with_capacity(cells); k];
    let mut entities = Vec::with_capacity(n);

    for j in 0..n {
        entities.push(format!("{}{:05}", STATES[j % STATES.len()], j + 1));
        let alpha = normal(&mut rng, p.entity_effect_sd);
        let alpha_d = normal(&mut rng, p.entity_effect_sd);
        let alpha_x: Vec<f64> = (0..k).map(|_| normal(&mut rng, p.mobility_effect_sd)).collect();
        let factor = 0.5 + rng.random::<f64>();

        let (mut gb, mut nb, mut gg, mut ng) = (vec![0.0; total], vec![0.0; total], vec![0.0; total], vec![0.0; total]);
        let (mut v1, mut v2, mut b) = (vec![0.0; total], vec![0.0; total], vec![0.0; total]);
        let mut x = vec![vec![0.0; total]; k];
        let (mut g, mut gd) = (vec![0.0; total], vec![0.0; total]);

        for t in 0..total {
            gb[t] = poisson(&mut rng, p.soft_means.gt_behavioral);
            nb[t] = poisson(&mut rng, p.soft_means.news_behavioral);
            if vacc {
                let week = (t + 1) as f64;
                v1[t] = poisson(&mut rng, p.vaccination_rate * factor * week).ln_1p();
                let late = (week - 4.0).max(0.0);
                v2[t] = poisson(&mut rng, 0.8 * p.vaccination_rate * factor * late).ln_1p();
            }
            let shift = p.vaccination_on_general * v1[t];
            gg[t] = poisson(&mut rng, p.soft_means.gt_general + shift);
            ng[t] = poisson(&mut rng, p.soft_means.news_general + shift);

            let lagged = |s: &[f64], h: usize| if t >= h { s[t - h] } else { 0.0 };
            b[t] = p.b_weights.gt * gb[t]
                + p.b_weights.news * nb[t]
                + (1..=4).map(|h| p.b_weights.dep_lags[h - 1] * lagged(&g, h)).sum::<f64>()
                + p.b_weights.vaccination * v1[t];
            for c in 0..k {
                x[c][t] = p.mobility_on_vaccination * v1[t]
                    + p.mobility_on_behavior * b[t]
                    + p.gamma_g * gg[t]
                    + p.eta_g * ng[t]
                    + alpha_x[c]
                    + normal(&mut rng, p.mobility_noise_sd);
            }
            let u = normal(&mut rng, p.noise_sd);
            let ud = normal(&mut rng, p.noise_sd);
            if t < BURN_IN {
                continue;
            }
            let growth = |m: usize, own: &[f64]| {
                p.beta0
                    + (0..k).map(|c| p.true_beta[c] * x[c][t - m]).sum::<f64>()
                    + (1..=4).map(|h| p.true_phi[h - 1] * own[t - h]).sum::<f64>()
                    + p.gamma_b * gb[t - m]
                    + p.eta_b * nb[t - m]
                    + p.nu * v1[t - m]
            };
            g[t] = growth(p.lag, &g) + alpha + delta[t] + u;
            gd[t] = growth(death_lag, &gd) + alpha_d + delta_d[t] + ud;
        }

        let (mut cases, mut deaths) = (100.0f64, 100.0f64);
        for t in BURN_IN..total {
            cases *= g[t].exp();
            deaths *= gd[t].exp();
            push("cases", cases);
            push("deaths", deaths);
            push("dln_cases", g[t]);
            push("dln_deaths", gd[t]);
            push("gt_prevention", gb[t]);
            push("n_prevention", nb[t]);
            push("gt_covid", gg[t]);
            push("n_covid", ng[t]);
            push("behavior", b[t]);
            if vacc {
                push("1st_dose", v1[t]);
                push("2nd_dose", v2[t]);
            }
            for c in 0..k {
                mobility_out[c].push(Some(x[c][t]));
            }
        }
    }

    let mut panel = WeeklyPanel::new(entities, anchor(), p.week_count)?;
    let order = [
        "cases",
        "deaths",
        "dln_cases",
        "dln_deaths",
        "1st_dose",
        "2nd_dose",
        "gt_prevention",
        "n_prevention",
        "gt_covid",
        "n_covid",
        "behavior",
    ];
    for (c, col) in mobility_out.into_iter().enumerate() {
        panel.insert(MOBILITY_CATEGORIES[c], Role::Mobility, col)?;
    }
    for name in order {
        if let Some(col) = out.remove(name) {
            let role = Role::infer(name);
            panel.insert(name, role, col)?;
        }
    }
    Ok(SimOutput {
        panel,
        truth: params.clone(),
    })
}

/// Estimate of the first mobility coefficient of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    /// Coefficient tracked (the first mobility variable of the spec).
    pub target: String,
    pub truth: f64,
    pub coverage_rate: f64,
    pub mean_bias: f64,
    pub mean_se: f64,
    pub failures: usize,
    pub outcomes: Vec<SeedOutcome>,
}

/// Simulate `n_seeds` panels (seeds `params.seed + i`), fit `spec` to each
/// with the within estimator, and summarise the first mobility coefficient.
pub fn recovery_experiment(
    params: &ScmParams,
    spec: &ModelSpec,
    n_seeds: usize,
    exec: Execution,
) -> Result<RecoveryReport> {
    params.validate()?;
    let target = spec
        .mobility
        .first()
        .ok_or_else(|| Error::spec("recovery spec has no mobility variable"))?
        .clone();
    let index = params
        .mobility_names()
        .iter()
        .position(|m| *m == target)
        .ok_or_else(|| Error::spec(format!("`{target}` is not a simulated mobility variable")))?;
    let truth = params.true_beta[index];
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| params.seed.wrapping_add(i)).collect();
    let runs = exec.map(&seeds, |&seed| -> Result<SeedOutcome> {
        let sim = simulate(&ScmParams { seed, ..params.clone() })?;
        let fit = fit_within(&build_design(&sim.panel, spec)?)?;
        let c = fit.coef(&target).expect("target regressor is in the fit");
        Ok(SeedOutcome {
            seed,
            estimate: c.estimate,
            std_error: c.std_error,
        })
    });
    let outcomes: Vec<SeedOutcome> = runs.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failures = runs.len() - outcomes.len();
    let m = outcomes.len() as f64;
    let (coverage_rate, mean_bias, mean_se) = if outcomes.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let covered = outcomes
            .iter()
            .filter(|o| (o.estimate - truth).abs() <= 1.96 * o.std_error)
            .count();
        (
            covered as f64 / m,
            outcomes.iter().map(|o| o.estimate - truth).sum::<f64>() / m,
            outcomes.iter().map(|o| o.std_error).sum::<f64>() / m,
        )
    };
    Ok(RecoveryReport {
        target,
        truth,
        coverage_rate,
        mean_bias,
        mean_se,
        failures,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScmParams {
        ScmParams {
            entity_count: 12,
            week_count: 14,
            ..ScmParams::default()
        }
    }

    #[test]
    fn degenerate_model_is_pure_effects() {
        let params = ScmParams {
            true_beta: vec![0.0],
            true_phi: [0.0; 4],
            gamma_b: 0.0,
            eta_b: 0.0,
            nu: 0.0,
            noise_sd: 0.0,
            ..small()
        };
        let a = simulate(&params).unwrap().panel;
        let mut other = params.clone();
        other.entity_effect_sd = 0.0;
        other.time_effect_sd = 0.0;
        let flat = simulate(&other).unwrap().panel;
        for v in flat.column("dln_cases").unwrap() {
            assert!((v.unwrap() - params.beta0).abs() < 1e-15);
        }
        // two-way additive: double differences vanish
        let g = |e, t| a.get("dln_cases", e, t).unwrap().unwrap();
        for t in 2..=params.week_count {
            let dd = (g(0, t) - g(0, t - 1)) - (g(1, t) - g(1, t - 1));
            assert!(dd.abs() < 1e-12);
        }
    }

    #[test]
    fn behaviour_is_exact_in_parents() {
        let params = small();
        let p = simulate(&params).unwrap().panel;
        let w = &params.b_weights;
        for e in 0..3 {
            for t in 5..=params.week_count {
                let at = |v: &str, t: usize| p.get(v, e, t).unwrap().unwrap();
                let b = w.gt * at("gt_prevention", t)
                    + w.news * at("n_prevention", t)
                    + (1..=4).map(|h| w.dep_lags[h - 1] * at("dln_cases", t - h)).sum::<f64>()
                    + w.vaccination * at("1st_dose", t);
                assert!((b - at("behavior", t)).abs() < 1e-12);
            }
        }
        assert_eq!(p.role("behavior").unwrap().role, Role::Latent);
    }

    #[test]
    fn without_vaccination_regime() {
        let params = ScmParams {
            include_vaccination: false,
            ..small()
        };
        let p = simulate(&params).unwrap().panel;
        assert!(!p.has_variable("1st_dose") && !p.has_variable("2nd_dose"));
        let dag = params.dag();
        assert!(dag.node("V").is_err());
        assert!(params.correct_spec().unwrap().vaccination.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = simulate(&small()).unwrap().panel;
        let b = simulate(&small()).unwrap().panel;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        let c = simulate(&ScmParams { seed: 1, ..small() }).unwrap().panel;
        let mut z = Vec::new();
        c.write_csv(&mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn invalid_parameters() {
        let cases = [
            ScmParams { week_count: 9, ..small() },
            ScmParams { true_phi: [0.5, 0.5, 0.0, 0.0], ..small() },
            ScmParams { noise_sd: -1.0, ..small() },
            ScmParams { true_beta: vec![], ..small() },
            ScmParams { lag: 0, ..small() },
        ];
        for p in cases {
            assert!(matches!(simulate(&p), Err(Error::Configuration(_))));
        }
    }

    #[test]
    fn toml_round_trip() {
        let p = small();
        assert_eq!(ScmParams::from_toml(&p.to_toml()).unwrap(), p);
        let partial = ScmParams::from_toml("entity_count = 30\nseed = 9\n").unwrap();
        assert_eq!(partial.entity_count, 30);
        assert_eq!(partial.week_count, ScmParams::default().week_count);
        assert!(ScmParams::from_toml("entity_count = \"many\"").is_err());
    }

    #[test]
    fn correct_spec_uses_dag_blocks() {
        let spec = small().correct_spec().unwrap();
        assert_eq!(spec.mobility, ["residential", "workplace"]);
        assert_eq!(spec.vaccination, ["1st_dose", "2nd_dose"]);
        assert_eq!(spec.soft, ["n_prevention", "gt_prevention"]);
        assert_eq!(spec.dep_lags, 4);
    }

    #[test]
    fn recovery_is_ordered_and_execution_independent() {
        let params = small();
        let spec = params.correct_spec().unwrap();
        let par = recovery_experiment(&params, &spec, 6, Execution::Parallel).unwrap();
        let seq = recovery_experiment(&params, &spec, 6, Execution::Sequential).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par.failures, 0);
        let seeds: Vec<u64> = par.outcomes.iter().map(|o| o.seed).collect();
        assert_eq!(seeds, [0, 1, 2, 3, 4, 5]);
    }
}
