mod common;

use chrono::Duration as Days;
use common::*;
use mobility_panel::dag::{backdoor_sets, is_valid_adjustment, CausalDag};
use mobility_panel::estimators::{fit, AbOptions, ModelSpec};
use mobility_panel::ingest::{aggregate_cases, AggregationPolicy, CaseRecord, Geography, WeekSpan};
use mobility_panel::panel::{describe, Role, WeeklyPanel};
use mobility_panel::Execution;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn records(seed: u64, n: usize) -> Vec<CaseRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = ["3100001", "3100002", "3300001"];
    (0..n)
        .map(|i| {
            let onset = anchor() + Days::days(rng.random_range(-10..90));
            let died = rng.random::<bool>();
            CaseRecord {
                record_id: format!("r{i}"),
                first_symptom_date: onset,
                obit_date: died.then(|| onset + Days::days(rng.random_range(0..30))),
                residence_code: codes[rng.random_range(0..3)].into(),
                notification_code: codes[rng.random_range(0..3)].into(),
                died,
                vaccinated_flag: false,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deaths_never_exceed_cases_and_order_is_irrelevant(seed in 0u64..10_000, n in 0usize..200) {
        let span = WeekSpan::new(anchor(), 14).unwrap();
        let mut recs = records(seed, n);
        for geo in [Geography::Residence, Geography::Notification] {
            let c = aggregate_cases(&recs, AggregationPolicy::cases(geo), span, Execution::Sequential).unwrap();
            let d = aggregate_cases(&recs, AggregationPolicy::deaths(geo), span, Execution::Sequential).unwrap();
            prop_assert!(d.total() <= c.total() + d.out_of_span as u64);
            prop_assert!(d.total() + d.out_of_span as u64 <= c.total() + c.out_of_span as u64);
            recs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
            let shuffled = aggregate_cases(&recs, AggregationPolicy::cases(geo), span, Execution::Parallel).unwrap();
            prop_assert_eq!(c, shuffled);
        }
    }

    #[test]
    fn complete_case_correlation_is_psd(seed in 0u64..10_000, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = (0..4).map(|e| format!("e{e}")).collect();
        let mut panel = WeeklyPanel::new(ids, anchor(), 6).unwrap();
        let base: Vec<f64> = (0..24).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut names = Vec::new();
        for j in 0..k {
            let w: f64 = rng.random_range(-1.0..1.0);
            let col = base.iter().map(|b| {
                let e: f64 = StandardNormal.sample(&mut rng);
                Some(w * b + 0.5 * e)
            }).collect();
            names.push(format!("v{j}"));
            panel.insert(format!("v{j}"), Role::Derived, col).unwrap();
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let stats = describe(&panel, &refs).unwrap();
        let m = DMatrix::from_fn(k, k, |i, j| stats.correlation[i][j].unwrap());
        let smallest = m.symmetric_eigen().eigenvalues.min();
        prop_assert!(smallest >= -1e-8, "smallest eigenvalue {}", smallest);
    }

    #[test]
    fn time_dummies_never_lower_within_r2(seed in 0u64..10_000) {
        let panel = random_fe_panel(seed, 12, 9, 2, 0.1);
        let base = ModelSpec { dep_lags: 0, time_dummies: false, ..ModelSpec::new("y", 1) }
            .with_mobility(&["x1", "x2"]);
        let dummies = ModelSpec { time_dummies: true, ..base.clone() };
        let a = fit(&panel, &base, &AbOptions::default()).unwrap();
        let b = fit(&panel, &dummies, &AbOptions::default()).unwrap();
        prop_assert_eq!(a.n_obs, b.n_obs);
        prop_assert!(b.r2_within.unwrap() >= a.r2_within.unwrap() - 1e-12);
    }
}

#[test]
fn supersets_that_open_no_collider_stay_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut checked = 0;
    for _ in 0..400 {
        let text = random_dag_text(&mut rng, 5);
        let dag = CausalDag::parse(&text).unwrap();
        let oracle = Graph::parse(&text);
        let (ix, iy) = (oracle.index("X"), oracle.index("Y"));
        let desc = oracle.descendants();
        let zone = oracle.collider_zone(ix, iy);
        let sets = backdoor_sets(&dag, "X", "Y", dag.len()).unwrap();
        for s in &sets.sets {
            let mut base = vec![false; oracle.names.len()];
            for n in &s.nodes {
                base[oracle.index(n)] = true;
            }
            let before = oracle.closure(&base, ix, iy);
            for w in 0..oracle.names.len() {
                if w == ix || w == iy || base[w] || desc[ix][w] || oracle.kinds[w] != Kind::Observed {
                    continue;
                }
                let mut grown = base.clone();
                grown[w] = true;
                let after = oracle.closure(&grown, ix, iy);
                let opens = (0..after.len()).any(|v| after[v] && !before[v] && zone[v]);
                if opens {
                    continue;
                }
                let mut names: Vec<&str> = s.nodes.iter().map(String::as_str).collect();
                names.push(&oracle.names[w]);
                assert!(is_valid_adjustment(&dag, "X", "Y", &names).unwrap(), "{text}\n{names:?}");
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "only {checked} supersets sampled");
}

/// Kolmogorov-Smirnov distance of `p` from the uniform distribution.
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

#[test]
fn joint_test_pvalues_are_uniform_under_the_null() {
    let seeds: Vec<u64> = (0..500).collect();
    let pvalues: Vec<f64> = Execution::Parallel.map(&seeds, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + s);
        let ids = (0..15).map(|e| format!("e{e}")).collect();
        let mut panel = WeeklyPanel::new(ids, anchor(), 8).unwrap();
        let n = 15 * 8;
        let mut draw = |shift: f64| -> Vec<Option<f64>> {
            (0..n)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    Some(z + shift * (i / 8) as f64)
                })
                .collect()
        };
        let y = draw(0.3);
        let x1 = draw(-0.2);
        let x2 = draw(0.1);
        panel.insert("y", Role::Derived, y).unwrap();
        panel.insert("x1", Role::Mobility, x1).unwrap();
        panel.insert("x2", Role::Mobility, x2).unwrap();
        let spec = ModelSpec { dep_lags: 0, time_dummies: false, ..ModelSpec::new("y", 1) }
            .with_mobility(&["x1", "x2"]);
        fit(&panel, &spec, &AbOptions::default()).unwrap().f_pvalue.unwrap()
    });
    let d = ks_uniform(pvalues);
    // 1% critical value for n = 500
    assert!(d < 1.63 / (500f64).sqrt(), "KS distance {d}");
}
