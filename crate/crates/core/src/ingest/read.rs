use std::io::Read;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::Deserialize;

use super::{CaseRecord, Dose, MobilityRecord, VaccinationRecord, VaccinationSource, WeekSpan};
use crate::error::{Error, Result};

fn parse_date(raw: &str, what: &str, ctx: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|e| Error::data(format!("{ctx}: bad {what} `{raw}`: {e}")))
}

fn opt_date(raw: &Option<String>, what: &str, ctx: &str) -> Result<Option<NaiveDate>> {
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => parse_date(s, what, ctx).map(Some),
    }
}

fn parse_bool(raw: &str, ctx: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "0" | "false" | "no" | "n" | "" => Ok(false),
        other => Err(Error::data(format!("{ctx}: bad boolean `{other}`"))),
    }
}

#[derive(Deserialize)]
struct RawCase {
    record_id: String,
    first_symptom_date: Option<String>,
    obit_date: Option<String>,
    residence_code: String,
    notification_code: String,
    died: String,
    #[serde(default)]
    vaccinated: Option<String>,
}

/// Parse `cases.csv`. Records without a first-symptom date are rejected.
pub fn read_cases<R: Read>(reader: R) -> Result<Vec<CaseRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for raw in r.deserialize::<RawCase>() {
        let raw = raw?;
        let ctx = format!("case record {}", raw.record_id);
        let first_symptom_date = opt_date(&raw.first_symptom_date, "first_symptom_date", &ctx)?
            .ok_or_else(|| Error::data(format!("{ctx}: missing first_symptom_date")))?;
        let rec = CaseRecord {
            first_symptom_date,
            obit_date: opt_date(&raw.obit_date, "obit_date", &ctx)?,
            residence_code: raw.residence_code.trim().to_string(),
            notification_code: raw.notification_code.trim().to_string(),
            died: parse_bool(&raw.died, &ctx)?,
            vaccinated_flag: raw
                .vaccinated
                .as_deref()
                .map(|v| parse_bool(v, &ctx))
                .transpose()?
                .unwrap_or(false),
            record_id: raw.record_id,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawMobility {
    entity_code: String,
    week_start: String,
    residential: Option<f64>,
    workplace: Option<f64>,
    parks: Option<f64>,
    transit: Option<f64>,
    grocery: Option<f64>,
    retail: Option<f64>,
}

/// Parse `mobility.csv`; rows outside `span` are dropped and counted.
pub fn read_mobility<R: Read>(reader: R, span: WeekSpan) -> Result<(Vec<MobilityRecord>, usize)> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, raw) in r.deserialize::<RawMobility>().enumerate() {
        let raw = raw?;
        let ctx = format!("mobility row {}", i + 2);
        let date = parse_date(&raw.week_start, "week_start", &ctx)?;
        if date.weekday() != Weekday::Mon {
            return Err(Error::data(format!("{ctx}: week_start {date} is not a Monday")));
        }
        let Some(week) = span.week_of(date) else {
            skipped += 1;
            continue;
        };
        let rec = MobilityRecord {
            entity_code: raw.entity_code.trim().to_string(),
            week,
            values: [
                raw.residential,
                raw.workplace,
                raw.parks,
                raw.transit,
                raw.grocery,
                raw.retail,
            ],
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok((out, skipped))
}

#[derive(Deserialize)]
struct RawVaccination {
    entity_code: String,
    date: String,
    dose: Option<String>,
    source: String,
}

/// Parse `vaccination.csv`.
pub fn read_vaccination<R: Read>(reader: R) -> Result<Vec<VaccinationRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, raw) in r.deserialize::<RawVaccination>().enumerate() {
        let raw = raw?;
        let ctx = format!("vaccination row {}", i + 2);
        let source = match raw.source.trim().to_ascii_lowercase().as_str() {
            "campaign" => VaccinationSource::Campaign,
            "srag" => VaccinationSource::Srag,
            other => return Err(Error::data(format!("{ctx}: unknown source `{other}`"))),
        };
        let dose = match raw.dose.as_deref().map(|d| d.trim().to_ascii_lowercase()) {
            None => None,
            Some(d) if d.is_empty() => None,
            Some(d) => Some(match d.as_str() {
                "first" | "1" | "1st" => Dose::First,
                "second" | "2" | "2nd" => Dose::Second,
                other => return Err(Error::data(format!("{ctx}: unknown dose `{other}`"))),
            }),
        };
        let rec = VaccinationRecord {
            entity_code: raw.entity_code.trim().to_string(),
            date: parse_date(&raw.date, "date", &ctx)?,
            dose,
            source,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}
