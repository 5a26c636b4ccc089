use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use mobility_panel::pipeline::{build_panel, render_run, RunConfig};
use mobility_panel::soft_index::{CategoryLabel, Vocabulary};
use mobility_panel::{Error, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WEEKS: i64 = 20;
const MUNICIPALITIES: [&str; 6] = ["3100001", "3100002", "3100003", "3300001", "3300002", "3300003"];

fn anchor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 5, 4).unwrap()
}

fn term(vocab: &Vocabulary, label: CategoryLabel) -> String {
    vocab.categories().iter().find(|c| c.label == label).unwrap().terms[0].clone()
}

fn write_fixtures(dir: &Path, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = String::from("record_id,first_symptom_date,obit_date,residence_code,notification_code,died\n");
    let mut id = 0;
    for m in MUNICIPALITIES {
        for day in 0..WEEKS * 7 {
            for _ in 0..rng.random_range(3..9) {
                id += 1;
                let onset = anchor() + Duration::days(day);
                let died = rng.random::<f64>() < 0.3;
                let obit = if died {
                    (onset + Duration::days(rng.random_range(5..25))).to_string()
                } else {
                    String::new()
                };
                writeln!(cases, "r{id},{onset},{obit},{m},{m},{}", died as u8).unwrap();
            }
        }
    }
    fs::write(dir.join("cases.csv"), cases).unwrap();

    let mut mob = String::from("entity_code,week_start,residential,workplace,parks,transit,grocery,retail\n");
    for m in MUNICIPALITIES {
        for w in 0..WEEKS {
            let d = anchor() + Duration::weeks(w);
            let v: Vec<String> = (0..6).map(|_| format!("{:.2}", rng.random_range(-40.0..20.0))).collect();
            writeln!(mob, "{m},{d},{}", v.join(",")).unwrap();
        }
    }
    fs::write(dir.join("mobility.csv"), mob).unwrap();

    let mut vacc = String::from("entity_code,date,dose,source\n");
    for m in MUNICIPALITIES {
        for day in 0..WEEKS * 7 {
            if rng.random::<f64>() < 0.4 {
                let d = anchor() + Duration::days(day);
                let dose = if rng.random::<bool>() { "first" } else { "second" };
                writeln!(vacc, "{m},{d},{dose},campaign").unwrap();
            }
        }
    }
    fs::write(dir.join("vaccination.csv"), vacc).unwrap();

    let vocab = Vocabulary::defaults();
    let mut counts = String::from("channel,term,state_code,week_start,count\n");
    for state in ["31", "33"] {
        for w in 0..WEEKS {
            let d = anchor() + Duration::weeks(w);
            for label in [CategoryLabel::Prevention, CategoryLabel::Covid] {
                for ch in ["gt", "news"] {
                    writeln!(counts, "{ch},{},{state},{d},{}", term(&vocab, label), rng.random_range(1..50)).unwrap();
                }
            }
        }
    }
    fs::write(dir.join("counts.csv"), counts).unwrap();
}

fn config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!(
        "start = \"2020-05-04\"\nend = \"2020-09-20\"\n{extra}\n[inputs]\ncases = \"cases.csv\"\nmobility = \"mobility.csv\"\nvaccination = \"vaccination.csv\"\ncounts = \"counts.csv\"\n"
    );
    RunConfig::from_toml(&text, dir).unwrap()
}

#[test]
fn record_inputs_build_a_complete_panel() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path(), 1);
    let built = build_panel(&config(dir.path(), ""), Execution::Sequential).unwrap();
    let p = &built.panel;
    assert_eq!(p.entity_count(), MUNICIPALITIES.len());
    assert_eq!(p.week_count(), WEEKS as usize);
    for v in ["cases", "deaths", "dln_cases", "residential", "1st_dose", "gt_prevention", "n_covid"] {
        assert!(p.has_variable(v), "missing {v}");
    }
    let gt_a = p.series("gt_prevention", 0).unwrap();
    let gt_b = p.series("gt_prevention", 1).unwrap();
    assert_eq!(gt_a, gt_b, "municipalities of one state share its index");
    assert!(built.durations.is_some());
}

#[test]
fn record_run_is_deterministic_across_execution_modes() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path(), 2);
    let cfg = config(dir.path(), "layout = \"cases_only\"");
    let a = render_run(&cfg, Execution::Parallel).unwrap();
    let b = render_run(&cfg, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert!(a.files.contains_key("durations.csv"));
    assert!(a.files["table.txt"].contains("n_prevention"));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let err = build_panel(&cfg, Execution::Sequential).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}
