use std::hint::black_box;

use chrono::{Duration, NaiveDate};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mobility_panel::ingest::{aggregate_cases, AggregationPolicy, CaseRecord, Geography, WeekSpan};
use mobility_panel::sim::{recovery_experiment, ScmParams};
use mobility_panel::soft_index::{build_index, Channel, CountRecord, Vocabulary};
use mobility_panel::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn anchor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 5, 4).unwrap()
}

fn case_records(n: usize) -> Vec<CaseRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| {
            let onset = anchor() + Duration::days(rng.random_range(0..450));
            let code = format!("31{:05}", rng.random_range(0..800));
            let died = rng.random::<f64>() < 0.2;
            CaseRecord {
                record_id: i.to_string(),
                first_symptom_date: onset,
                obit_date: died.then(|| onset + Duration::days(17)),
                residence_code: code.clone(),
                notification_code: code,
                died,
                vaccinated_flag: false,
            }
        })
        .collect()
}

fn count_records(vocab: &Vocabulary, n: usize) -> (Vec<CountRecord>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let terms: Vec<String> = vocab.terms().iter().map(|(t, _)| t.clone()).collect();
    let states: Vec<String> = (11..=53).map(|s| s.to_string()).collect();
    let recs = (0..n)
        .map(|_| CountRecord {
            term: terms[rng.random_range(0..terms.len())].clone(),
            state_code: states[rng.random_range(0..states.len())].clone(),
            week: rng.random_range(1..=65),
            count: rng.random_range(0..500),
            channel: if rng.random::<bool>() { Channel::Gt } else { Channel::News },
        })
        .collect();
    (recs, states)
}

fn aggregation(c: &mut Criterion) {
    let records = case_records(400_000);
    let span = WeekSpan::new(anchor(), 65).unwrap();
    let mut group = c.benchmark_group("aggregate_cases");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| aggregate_cases(black_box(&records), AggregationPolicy::cases(Geography::Residence), span, *exec))
        });
    }
    group.finish();
}

fn soft_index(c: &mut Criterion) {
    let vocab = Vocabulary::defaults();
    let (records, states) = count_records(&vocab, 300_000);
    let mut group = c.benchmark_group("build_index");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| build_index(black_box(&records), &vocab, Channel::Gt, &states, 65, *exec))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let params = ScmParams {
        entity_count: 50,
        week_count: 25,
        ..ScmParams::default()
    };
    let spec = params.correct_spec().unwrap();
    let mut group = c.benchmark_group("recovery_experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| recovery_experiment(&params, &spec, 16, *exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, aggregation, soft_index, monte_carlo);
criterion_main!(benches);
