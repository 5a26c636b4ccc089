//! Record-level inputs folded into weekly municipality series.
//!
//! Cases are dated by first symptom, deaths by obit date, and either can be
//! attributed to the residence or the notification municipality. Weeks are
//! Monday to Sunday blocks counted from the panel anchor.

mod read;

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::panel::MOBILITY_CATEGORIES;

pub use read::{read_cases, read_mobility, read_vaccination};

/// 1-based week of `date` relative to a Monday `anchor`.
pub fn week_index(date: NaiveDate, anchor: NaiveDate) -> Result<usize> {
    if anchor.weekday() != Weekday::Mon {
        return Err(Error::config(format!("week anchor {anchor} is not a Monday")));
    }
    let days = (date - anchor).num_days();
    if days < 0 {
        return Err(Error::data(format!(
            "date {date} falls before the panel anchor {anchor}"
        )));
    }
    Ok((days / 7) as usize + 1)
}

/// `weeks` consecutive Monday-start weeks beginning at `anchor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeekSpan {
    anchor: NaiveDate,
    weeks: usize,
}

impl WeekSpan {
    pub fn new(anchor: NaiveDate, weeks: usize) -> Result<Self> {
        if anchor.weekday() != Weekday::Mon {
            return Err(Error::config(format!("week anchor {anchor} is not a Monday")));
        }
        if weeks == 0 {
            return Err(Error::config("week span is empty"));
        }
        Ok(WeekSpan { anchor, weeks })
    }

    /// Span from `anchor` through the week containing `last`.
    pub fn through(anchor: NaiveDate, last: NaiveDate) -> Result<Self> {
        let weeks = week_index(last, anchor)?;
        WeekSpan::new(anchor, weeks)
    }

    pub fn anchor(&self) -> NaiveDate {
        self.anchor
    }

    pub fn weeks(&self) -> usize {
        self.weeks
    }

    /// Week of `date`, or `None` when it falls outside the span.
    pub fn week_of(&self, date: NaiveDate) -> Option<usize> {
        week_index(date, self.anchor)
            .ok()
            .filter(|w| *w <= self.weeks)
    }

    pub fn week_start(&self, week: usize) -> NaiveDate {
        self.anchor + chrono::Duration::weeks(week as i64 - 1)
    }
}

/// One hospitalised SRAG record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub record_id: String,
    pub first_symptom_date: NaiveDate,
    pub obit_date: Option<NaiveDate>,
    pub residence_code: String,
    pub notification_code: String,
    pub died: bool,
    /// Vaccination marker carried inside the SRAG registry itself.
    pub vaccinated_flag: bool,
}

impl CaseRecord {
    /// Check the died ⟺ obit-date and date-ordering invariants.
    pub fn validate(&self) -> Result<()> {
        if self.died != self.obit_date.is_some() {
            return Err(Error::data(format!(
                "record {}: died={} but obit date {}",
                self.record_id,
                self.died,
                if self.obit_date.is_some() { "present" } else { "absent" }
            )));
        }
        if let Some(obit) = self.obit_date {
            if obit < self.first_symptom_date {
                return Err(Error::data(format!(
                    "record {}: obit date {obit} precedes first symptom {}",
                    self.record_id, self.first_symptom_date
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Geography {
    Residence,
    Notification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventDate {
    FirstSymptom,
    Obit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    Cases,
    Deaths,
}

/// Which date and which municipality a record is counted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationPolicy {
    pub measure: Measure,
    pub geography: Geography,
    pub event_date: EventDate,
}

impl AggregationPolicy {
    pub fn cases(geography: Geography) -> Self {
        AggregationPolicy {
            measure: Measure::Cases,
            geography,
            event_date: EventDate::FirstSymptom,
        }
    }

    pub fn deaths(geography: Geography) -> Self {
        AggregationPolicy {
            measure: Measure::Deaths,
            geography,
            event_date: EventDate::Obit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.measure, self.event_date) {
            (Measure::Cases, EventDate::FirstSymptom) | (Measure::Deaths, EventDate::Obit) => Ok(()),
            (m, d) => Err(Error::config(format!(
                "{m:?} panels cannot be dated by {d:?}"
            ))),
        }
    }

    fn locate<'r>(&self, r: &'r CaseRecord) -> Option<(&'r str, NaiveDate)> {
        let date = match self.event_date {
            EventDate::FirstSymptom => r.first_symptom_date,
            EventDate::Obit => r.obit_date?,
        };
        if self.measure == Measure::Deaths && !r.died {
            return None;
        }
        let place = match self.geography {
            Geography::Residence => r.residence_code.as_str(),
            Geography::Notification => r.notification_code.as_str(),
        };
        Some((place, date))
    }
}

/// Weekly event counts per entity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeeklyCounts {
    pub counts: BTreeMap<String, Vec<u64>>,
    /// Records whose event date fell outside the span.
    pub out_of_span: usize,
}

impl WeeklyCounts {
    pub fn total(&self) -> u64 {
        self.counts.values().flatten().sum()
    }
}

/// Count records per (entity, week) under `policy`.
///
/// Entities that appear get a full week vector with zeros where no record
/// fell. Records dated outside the span are skipped and tallied.
pub fn aggregate_cases(
    records: &[CaseRecord],
    policy: AggregationPolicy,
    span: WeekSpan,
    exec: Execution,
) -> Result<WeeklyCounts> {
    policy.validate()?;
    for r in records {
        r.validate()?;
    }
    let weeks = span.weeks();
    let merged = exec.fold(
        records,
        WeeklyCounts::default,
        |mut acc, r| {
            if let Some((place, date)) = policy.locate(r) {
                match span.week_of(date) {
                    Some(w) => {
                        let row = acc
                            .counts
                            .entry(place.to_string())
                            .or_insert_with(|| vec![0; weeks]);
                        row[w - 1] += 1;
                    }
                    None => acc.out_of_span += 1,
                }
            }
            acc
        },
        |mut a, b| {
            a.out_of_span += b.out_of_span;
            for (k, v) in b.counts {
                match a.counts.get_mut(&k) {
                    Some(row) => row.iter_mut().zip(v).for_each(|(x, y)| *x += y),
                    None => {
                        a.counts.insert(k, v);
                    }
                }
            }
            a
        },
    );
    Ok(merged)
}

/// One Google mobility report row: percent change from the pre-pandemic baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityRecord {
    pub entity_code: String,
    pub week: usize,
    /// Indexed like [`MOBILITY_CATEGORIES`].
    pub values: [Option<f64>; 6],
}

impl MobilityRecord {
    pub fn new(entity_code: impl Into<String>, week: usize) -> Self {
        MobilityRecord {
            entity_code: entity_code.into(),
            week,
            values: [None; 6],
        }
    }

    /// Set one category by name.
    pub fn with(mut self, category: &str, value: f64) -> Self {
        let i = MOBILITY_CATEGORIES
            .iter()
            .position(|c| *c == category)
            .unwrap_or_else(|| panic!("unknown mobility category {category}"));
        self.values[i] = Some(value);
        self
    }

    pub fn residential(&self) -> Option<f64> {
        self.values[0]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.residential() {
            if r < -100.0 {
                return Err(Error::data(format!(
                    "mobility {} week {}: residential {r} below -100%",
                    self.entity_code, self.week
                )));
            }
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "mobility {} week {}: non-finite value",
                self.entity_code, self.week
            )));
        }
        Ok(())
    }
}

/// Six mobility series per entity, missing where Google reports nothing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MobilitySeries {
    pub weeks: usize,
    pub by_entity: BTreeMap<String, [Vec<Option<f64>>; 6]>,
}

impl MobilitySeries {
    /// Number of categories with at least one observed week for `entity`.
    pub fn coverage(&self, entity: &str) -> usize {
        self.by_entity
            .get(entity)
            .map(|cats| cats.iter().filter(|c| c.iter().any(Option::is_some)).count())
            .unwrap_or(0)
    }

    pub fn category(&self, entity: &str, category: usize) -> Option<&[Option<f64>]> {
        self.by_entity.get(entity).map(|c| c[category].as_slice())
    }
}

/// Spread mobility records into per-category week series.
///
/// Records outside `1..=weeks` are ignored; two records for the same
/// (entity, week) are an error.
pub fn aggregate_mobility(records: &[MobilityRecord], weeks: usize) -> Result<MobilitySeries> {
    let mut seen: HashMap<(&str, usize), usize> = HashMap::new();
    let mut collisions = Vec::new();
    for (i, r) in records.iter().enumerate() {
        r.validate()?;
        if let Some(prev) = seen.insert((r.entity_code.as_str(), r.week), i) {
            collisions.push(format!(
                "({}, week {}) at records {prev} and {i}",
                r.entity_code, r.week
            ));
        }
    }
    if !collisions.is_empty() {
        return Err(Error::data(format!(
            "duplicate mobility rows: {}",
            collisions.join("; ")
        )));
    }
    let mut out = MobilitySeries {
        weeks,
        by_entity: BTreeMap::new(),
    };
    for r in records {
        if r.week == 0 || r.week > weeks {
            continue;
        }
        let cats = out
            .by_entity
            .entry(r.entity_code.clone())
            .or_insert_with(|| std::array::from_fn(|_| vec![None; weeks]));
        for (c, v) in r.values.iter().enumerate() {
            cats[c][r.week - 1] = *v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dose {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VaccinationSource {
    /// National immunisation campaign, split by dose.
    Campaign,
    /// Vaccination marker inside the SRAG registry (unit counts).
    Srag,
}

impl VaccinationSource {
    /// Panel variable names produced for this source.
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            VaccinationSource::Campaign => &["1st_dose", "2nd_dose"],
            VaccinationSource::Srag => &["srag_vac"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaccinationRecord {
    pub entity_code: String,
    pub date: NaiveDate,
    pub dose: Option<Dose>,
    pub source: VaccinationSource,
}

impl VaccinationRecord {
    pub fn validate(&self) -> Result<()> {
        match (self.source, self.dose) {
            (VaccinationSource::Campaign, None) => Err(Error::data(format!(
                "campaign vaccination record for {} on {} has no dose",
                self.entity_code, self.date
            ))),
            (VaccinationSource::Srag, Some(_)) => Err(Error::data(format!(
                "srag vaccination record for {} on {} carries a dose",
                self.entity_code, self.date
            ))),
            _ => Ok(()),
        }
    }

    fn variable(&self) -> &'static str {
        match self.dose {
            Some(Dose::First) => "1st_dose",
            Some(Dose::Second) => "2nd_dose",
            None => "srag_vac",
        }
    }
}

/// Weekly `ln(1 + doses)` per entity for each variable of `source`.
///
/// Records of the other source are ignored. Every variable of the source
/// is present in the output, with entity vectors for every entity seen in
/// any of them.
pub fn aggregate_vaccination(
    records: &[VaccinationRecord],
    source: VaccinationSource,
    span: WeekSpan,
) -> Result<BTreeMap<&'static str, BTreeMap<String, Vec<f64>>>> {
    let weeks = span.weeks();
    let mut counts: BTreeMap<&'static str, BTreeMap<String, Vec<u64>>> = source
        .variables()
        .iter()
        .map(|v| (*v, BTreeMap::new()))
        .collect();
    let mut entities = std::collections::BTreeSet::new();
    for r in records.iter().filter(|r| r.source == source) {
        r.validate()?;
        let Some(w) = span.week_of(r.date) else {
            continue;
        };
        entities.insert(r.entity_code.clone());
        let row = counts
            .get_mut(r.variable())
            .expect("variable belongs to source")
            .entry(r.entity_code.clone())
            .or_insert_with(|| vec![0; weeks]);
        row[w - 1] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(var, by_entity)| {
            let logged = entities
                .iter()
                .map(|e| {
                    let series = match by_entity.get(e) {
                        Some(c) => c.iter().map(|n| (*n as f64).ln_1p()).collect(),
                        None => vec![0.0; weeks],
                    };
                    (e.clone(), series)
                })
                .collect();
            (var, logged)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyDuration {
    pub week: usize,
    pub deaths: usize,
    pub median: f64,
    pub min: i64,
    pub max: i64,
}

/// Symptom-to-obit durations, grouped by obit week.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationStats {
    pub weekly: Vec<WeeklyDuration>,
    /// Median over every death record, including those outside the span.
    pub overall_median: Option<f64>,
}

/// Median with the even-count convention (mean of the two central values).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Days from first symptom to obit for every death, per obit week.
pub fn symptom_to_obit_stats(records: &[CaseRecord], span: WeekSpan) -> Result<DurationStats> {
    let mut by_week: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    let mut all = Vec::new();
    for r in records.iter().filter(|r| r.died) {
        let Some(obit) = r.obit_date else {
            continue;
        };
        let days = (obit - r.first_symptom_date).num_days();
        if days < 0 {
            return Err(Error::data(format!(
                "record {}: negative symptom-to-obit duration ({days} days)",
                r.record_id
            )));
        }
        all.push(days as f64);
        if let Some(w) = span.week_of(obit) {
            by_week.entry(w).or_default().push(days);
        }
    }
    let weekly = by_week
        .into_iter()
        .map(|(week, days)| {
            let mut f: Vec<f64> = days.iter().map(|d| *d as f64).collect();
            WeeklyDuration {
                week,
                deaths: days.len(),
                median: median(&mut f).expect("non-empty group"),
                min: *days.iter().min().expect("non-empty group"),
                max: *days.iter().max().expect("non-empty group"),
            }
        })
        .collect();
    Ok(DurationStats {
        weekly,
        overall_median: median(&mut all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn anchor() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 5, 4).unwrap()
    }

    fn span(weeks: usize) -> WeekSpan {
        WeekSpan::new(anchor(), weeks).unwrap()
    }

    fn case(id: &str, symptom: i64, obit: Option<i64>, res: &str, notif: &str) -> CaseRecord {
        CaseRecord {
            record_id: id.into(),
            first_symptom_date: anchor() + Duration::days(symptom),
            obit_date: obit.map(|d| anchor() + Duration::days(d)),
            residence_code: res.into(),
            notification_code: notif.into(),
            died: obit.is_some(),
            vaccinated_flag: false,
        }
    }

    #[test]
    fn week_index_boundaries() {
        assert_eq!(week_index(anchor(), anchor()).unwrap(), 1);
        assert_eq!(week_index(anchor() + Duration::days(6), anchor()).unwrap(), 1);
        assert_eq!(week_index(anchor() + Duration::days(7), anchor()).unwrap(), 2);
        assert_eq!(week_index(anchor() + Duration::days(20), anchor()).unwrap(), 3);
        assert!(matches!(
            week_index(anchor() - Duration::days(1), anchor()),
            Err(Error::Data(_))
        ));
        let tuesday = anchor() + Duration::days(1);
        assert!(matches!(week_index(anchor(), tuesday), Err(Error::Configuration(_))));
    }

    #[test]
    fn week_start_inverts_week_index() {
        let s = span(60);
        for w in 1..=60 {
            assert_eq!(s.week_of(s.week_start(w)), Some(w));
        }
        assert_eq!(s.week_of(s.week_start(61)), None);
    }

    #[test]
    fn same_week_records_count_together() {
        let recs = vec![
            case("a", 0, None, "A", "A"),
            case("b", 2, None, "A", "A"),
            case("c", 6, None, "A", "A"),
        ];
        let out = aggregate_cases(&recs, AggregationPolicy::cases(Geography::Residence), span(2), Execution::Sequential).unwrap();
        assert_eq!(out.counts["A"], vec![3, 0]);
    }

    #[test]
    fn geography_policy_selects_municipality() {
        let recs = vec![case("a", 0, None, "A", "B")];
        let res = aggregate_cases(&recs, AggregationPolicy::cases(Geography::Residence), span(1), Execution::Sequential).unwrap();
        let notif = aggregate_cases(&recs, AggregationPolicy::cases(Geography::Notification), span(1), Execution::Sequential).unwrap();
        assert_eq!(res.counts.keys().collect::<Vec<_>>(), vec!["A"]);
        assert_eq!(notif.counts.keys().collect::<Vec<_>>(), vec!["B"]);
    }

    #[test]
    fn deaths_are_dated_by_obit() {
        let recs = vec![case("a", 1, Some(15), "A", "A")];
        let cases = aggregate_cases(&recs, AggregationPolicy::cases(Geography::Residence), span(3), Execution::Sequential).unwrap();
        let deaths = aggregate_cases(&recs, AggregationPolicy::deaths(Geography::Residence), span(3), Execution::Sequential).unwrap();
        assert_eq!(cases.counts["A"], vec![1, 0, 0]);
        assert_eq!(deaths.counts["A"], vec![0, 0, 1]);
    }

    #[test]
    fn inconsistent_policy_and_record_rejected() {
        let bad = AggregationPolicy {
            measure: Measure::Deaths,
            geography: Geography::Residence,
            event_date: EventDate::FirstSymptom,
        };
        assert!(bad.validate().is_err());
        let mut r = case("x", 3, None, "A", "A");
        r.died = true;
        let err = aggregate_cases(&[r], AggregationPolicy::cases(Geography::Residence), span(1), Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("x"));
        let r = case("y", 5, Some(2), "A", "A");
        assert!(r.validate().is_err());
    }

    #[test]
    fn mobility_pass_through_and_coverage() {
        let recs = vec![
            MobilityRecord::new("A", 1).with("residential", 10.0).with("workplace", -20.0),
            MobilityRecord {
                entity_code: "B".into(),
                week: 1,
                values: [Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), Some(6.0)],
            },
        ];
        let m = aggregate_mobility(&recs, 2).unwrap();
        assert_eq!(m.category("A", 0).unwrap(), &[Some(10.0), None]);
        assert_eq!(m.category("A", 1).unwrap(), &[Some(-20.0), None]);
        assert_eq!(m.category("A", 2).unwrap(), &[None, None]);
        assert_eq!(m.coverage("A"), 2);
        assert_eq!(m.coverage("B"), 6);

        let only_res = vec![MobilityRecord::new("C", 1).with("residential", 3.0)];
        assert_eq!(aggregate_mobility(&only_res, 1).unwrap().coverage("C"), 1);
        assert!(aggregate_mobility(&[], 3).unwrap().by_entity.is_empty());
    }

    #[test]
    fn mobility_duplicates_and_range() {
        let recs = vec![
            MobilityRecord::new("A", 1).with("parks", 1.0),
            MobilityRecord::new("A", 1).with("parks", 2.0),
        ];
        let err = aggregate_mobility(&recs, 2).unwrap_err();
        assert!(err.to_string().contains("(A, week 1)"));
        let low = vec![MobilityRecord::new("A", 1).with("residential", -100.5)];
        assert!(aggregate_mobility(&low, 1).is_err());
    }

    #[test]
    fn vaccination_log_counts() {
        let mut recs: Vec<VaccinationRecord> = (0..99)
            .map(|_| VaccinationRecord {
                entity_code: "A".into(),
                date: anchor() + Duration::days(8),
                dose: Some(Dose::First),
                source: VaccinationSource::Campaign,
            })
            .collect();
        recs.push(VaccinationRecord {
            entity_code: "A".into(),
            date: anchor(),
            dose: Some(Dose::Second),
            source: VaccinationSource::Campaign,
        });
        recs.push(VaccinationRecord {
            entity_code: "A".into(),
            date: anchor(),
            dose: None,
            source: VaccinationSource::Srag,
        });
        let v = aggregate_vaccination(&recs, VaccinationSource::Campaign, span(3)).unwrap();
        assert_eq!(v["1st_dose"]["A"][0], 0.0);
        assert!((v["1st_dose"]["A"][1] - 100f64.ln()).abs() < 1e-12);
        assert!((v["1st_dose"]["A"][1] - 4.6052).abs() < 1e-4);
        assert!((v["2nd_dose"]["A"][0] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(v["2nd_dose"]["A"][1], 0.0);

        let s = aggregate_vaccination(&recs, VaccinationSource::Srag, span(3)).unwrap();
        assert_eq!(s.keys().copied().collect::<Vec<_>>(), vec!["srag_vac"]);
        assert!((s["srag_vac"]["A"][0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn vaccination_dose_invariant() {
        let bad = VaccinationRecord {
            entity_code: "A".into(),
            date: anchor(),
            dose: None,
            source: VaccinationSource::Campaign,
        };
        assert!(aggregate_vaccination(&[bad], VaccinationSource::Campaign, span(1)).is_err());
    }

    #[test]
    fn duration_statistics() {
        let recs = vec![case("a", 0, Some(17), "A", "A")];
        let s = symptom_to_obit_stats(&recs, span(10)).unwrap();
        assert_eq!(s.weekly[0].median, 17.0);

        let recs = vec![
            case("a", 14, Some(22), "A", "A"),
            case("b", 5, Some(22), "A", "A"),
            case("c", 0, Some(22), "B", "B"),
        ];
        let s = symptom_to_obit_stats(&recs, span(10)).unwrap();
        assert_eq!(s.weekly.len(), 1);
        let w = &s.weekly[0];
        assert_eq!((w.median, w.min, w.max, w.deaths), (17.0, 8, 22, 3));
        assert_eq!(s.overall_median, Some(17.0));

        let recs = vec![case("a", 4, Some(14), "A", "A"), case("b", 0, Some(20), "A", "A")];
        let s = symptom_to_obit_stats(&recs, span(10)).unwrap();
        assert_eq!(s.overall_median, Some(15.0));

        let mut neg = case("n", 10, Some(12), "A", "A");
        neg.obit_date = Some(anchor());
        let err = symptom_to_obit_stats(&[neg], span(10)).unwrap_err();
        assert!(err.to_string().contains("n"));
    }
}
