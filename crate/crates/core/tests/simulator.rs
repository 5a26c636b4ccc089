use mobility_panel::dag::ControlBlock;
use mobility_panel::sim::{recovery_experiment, RecoveryReport, ScmParams};
use mobility_panel::Execution;

/// Mean bias over its Monte Carlo standard error.
fn bias_t(r: &RecoveryReport) -> f64 {
    let n = r.outcomes.len() as f64;
    let mean = r.outcomes.iter().map(|o| o.estimate).sum::<f64>() / n;
    let var = r.outcomes.iter().map(|o| (o.estimate - mean).powi(2)).sum::<f64>() / (n - 1.0);
    r.mean_bias / (var / n).sqrt()
}

#[test]
fn omitting_vaccination_biases_only_through_both_channels() {
    for nu in [-0.5, 0.0, 0.5] {
        for load in [-3.0, 0.0, 3.0] {
            let mut p = ScmParams {
                nu,
                mobility_on_vaccination: load,
                vaccination_on_general: 0.0,
                entity_count: 60,
                week_count: 30,
                ..ScmParams::default()
            };
            p.b_weights.vaccination = 0.0;
            let spec = p.spec_with(&[ControlBlock::SoftBehavioral, ControlBlock::DepLags]);
            let r = recovery_experiment(&p, &spec, 40, Execution::Parallel).unwrap();
            let t = bias_t(&r);
            if nu * load != 0.0 {
                assert!(t.abs() > 8.0 && t.signum() == (nu * load).signum(), "nu {nu} load {load}: t {t}");
            } else {
                assert!(t.abs() < 3.0, "nu {nu} load {load}: t {t}");
            }
        }
    }
}

#[test]
fn more_outcome_noise_never_shrinks_standard_errors() {
    let mut last = 0.0;
    for noise_sd in [0.02, 0.05, 0.1, 0.2, 0.4] {
        let p = ScmParams {
            noise_sd,
            entity_count: 40,
            week_count: 20,
            ..ScmParams::default()
        };
        let r = recovery_experiment(&p, &p.correct_spec().unwrap(), 20, Execution::Parallel).unwrap();
        assert!(r.mean_se >= last, "noise {noise_sd}: {} < {last}", r.mean_se);
        last = r.mean_se;
    }
}
