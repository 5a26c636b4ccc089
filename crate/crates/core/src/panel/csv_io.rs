use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};
use indexmap::IndexMap;

use super::{Role, WeeklyPanel};
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["entity", "week_start", "variable", "value"];

impl WeeklyPanel {
    /// Write the long-format CSV `entity,week_start,variable,value`.
    ///
    /// Every grid cell is written, missing ones with an empty value.
    /// Values use the shortest representation that parses back to the
    /// same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        let dates: Vec<String> = (1..=self.weeks)
            .map(|t| self.week_start(t).to_string())
            .collect();
        let mut buf = String::new();
        for (name, var) in &self.vars {
            for (e, entity) in self.entities.iter().enumerate() {
                let row = &var.values[e * self.weeks..(e + 1) * self.weeks];
                for (date, cell) in dates.iter().zip(row) {
                    buf.clear();
                    if let Some(x) = cell {
                        buf.push_str(&format_value(*x));
                    }
                    w.write_record([entity.as_str(), date, name.as_str(), &buf])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("panel csv", e))?;
        Ok(())
    }

    /// Read the long-format CSV written by [`WeeklyPanel::write_csv`].
    ///
    /// Entities keep their order of first appearance; the week span runs
    /// from the earliest to the latest `week_start`. Roles are inferred
    /// from variable names.
    pub fn read_csv<R: Read>(reader: R) -> Result<WeeklyPanel> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::data(format!(
                "panel csv header must be `{}`, found `{}`",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entities: IndexMap<String, ()> = IndexMap::new();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let at = || format!("panel csv row {}", line + 2);
            let entity = rec.get(0).unwrap_or_default().to_string();
            let date = NaiveDate::parse_from_str(rec.get(1).unwrap_or_default(), "%Y-%m-%d")
                .map_err(|e| Error::data(format!("{}: bad week_start: {e}", at())))?;
            if date.weekday() != Weekday::Mon {
                return Err(Error::data(format!("{}: week_start {date} is not a Monday", at())));
            }
            let var = rec.get(2).unwrap_or_default().to_string();
            let raw = rec.get(3).unwrap_or_default().trim();
            let value = if raw.is_empty() {
                None
            } else {
                let x: f64 = raw
                    .parse()
                    .map_err(|e| Error::data(format!("{}: bad value `{raw}`: {e}", at())))?;
                if !x.is_finite() {
                    return Err(Error::data(format!("{}: non-finite value", at())));
                }
                Some(x)
            };
            entities.entry(entity.clone()).or_default();
            rows.push((entity, date, var, value));
        }
        let (Some(first), Some(last)) = (
            rows.iter().map(|r| r.1).min(),
            rows.iter().map(|r| r.1).max(),
        ) else {
            return Err(Error::data("panel csv has no rows"));
        };
        let weeks = ((last - first).num_days() / 7 + 1) as usize;
        let entity_list: Vec<String> = entities.into_keys().collect();
        let mut panel = WeeklyPanel::new(entity_list, first, weeks)?;

        let mut columns: IndexMap<String, Vec<Option<f64>>> = IndexMap::new();
        let mut seen: HashMap<(usize, usize, String), ()> = HashMap::new();
        let grid = panel.entity_count() * weeks;
        for (entity, date, var, value) in rows {
            let e = panel.entity_position(&entity).expect("entity registered above");
            let t = ((date - first).num_days() / 7) as usize;
            if seen.insert((e, t, var.clone()), ()).is_some() {
                return Err(Error::data(format!(
                    "duplicate panel cell ({entity}, {date}, {var})"
                )));
            }
            columns.entry(var).or_insert_with(|| vec![None; grid])[e * weeks + t] = value;
        }
        for (name, values) in columns {
            let role = Role::infer(&name);
            panel.insert(name, role, values)?;
        }
        Ok(panel)
    }
}

pub(crate) fn format_value(x: f64) -> String {
    let s = format!("{x:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}
