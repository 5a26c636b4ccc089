//! The entity × week × variable container and its transforms.

mod csv_io;
mod stats;
mod transform;

use std::collections::HashMap;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use indexmap::IndexMap;

use crate::error::{Error, Result};

pub(crate) use csv_io::format_value;
pub use stats::{describe, SummaryStats, VariableStats};
pub use transform::{rolling_mean, within_transform, Within};

/// Names of the six mobility categories, in report order.
pub const MOBILITY_CATEGORIES: [&str; 6] = [
    "residential",
    "workplace",
    "parks",
    "transit",
    "grocery",
    "retail",
];

/// What a variable stands for in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Dependent,
    Mobility,
    Vaccination,
    GtSeries,
    NIndex,
    Derived,
    /// Simulated but unobservable; never enters a model specification.
    Latent,
}

/// Geographic resolution a variable is measured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Municipality,
    State,
}

impl Role {
    /// Guess a role from the naming conventions used by ingestion and the
    /// simulator. Used when a panel is read back from CSV.
    pub fn infer(name: &str) -> Role {
        match name {
            "cases" | "deaths" => Role::Dependent,
            "1st_dose" | "2nd_dose" | "srag_vac" => Role::Vaccination,
            "behavior" => Role::Latent,
            n if MOBILITY_CATEGORIES.contains(&n) => Role::Mobility,
            n if n.starts_with("gt_") => Role::GtSeries,
            n if n.starts_with("n_") => Role::NIndex,
            _ => Role::Derived,
        }
    }

    /// Soft-data series are always state level (broadcast to municipalities).
    pub fn level(self) -> Level {
        match self {
            Role::GtSeries | Role::NIndex => Level::State,
            _ => Level::Municipality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableRole {
    pub name: String,
    pub role: Role,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq)]
struct Variable {
    role: Role,
    /// Entity-major grid: `values[e * weeks + (t - 1)]`.
    values: Vec<Option<f64>>,
}

/// Weekly panel keyed by entity, 1-based week index and variable name.
///
/// Weeks run Monday to Sunday starting at `anchor`. Cells are either a
/// finite real or explicitly missing.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyPanel {
    entities: Vec<String>,
    entity_index: HashMap<String, usize>,
    anchor: NaiveDate,
    weeks: usize,
    vars: IndexMap<String, Variable>,
}

/// A full entity × week column, laid out like the panel grid.
pub type Column = Vec<Option<f64>>;

impl WeeklyPanel {
    pub fn new(entities: Vec<String>, anchor: NaiveDate, weeks: usize) -> Result<Self> {
        if anchor.weekday() != Weekday::Mon {
            return Err(Error::config(format!("panel anchor {anchor} is not a Monday")));
        }
        if weeks == 0 {
            return Err(Error::config("panel must span at least one week"));
        }
        let mut entity_index = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if entity_index.insert(e.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate entity identifier {e}")));
            }
        }
        Ok(WeeklyPanel {
            entities,
            entity_index,
            anchor,
            weeks,
            vars: IndexMap::new(),
        })
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_position(&self, id: &str) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    pub fn anchor(&self) -> NaiveDate {
        self.anchor
    }

    pub fn week_count(&self) -> usize {
        self.weeks
    }

    /// Monday that opens week `t` (1-based).
    pub fn week_start(&self, t: usize) -> NaiveDate {
        self.anchor + Duration::weeks(t as i64 - 1)
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn role(&self, name: &str) -> Option<VariableRole> {
        self.vars.get(name).map(|v| VariableRole {
            name: name.to_string(),
            role: v.role,
            level: v.role.level(),
        })
    }

    fn var(&self, name: &str) -> Result<&Variable> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::spec(format!("unknown variable `{name}`")))
    }

    /// Whole column for `name`, entity-major.
    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        Ok(&self.var(name)?.values)
    }

    /// The week series of one entity (index 0 is week 1).
    pub fn series(&self, name: &str, entity: usize) -> Result<&[Option<f64>]> {
        let v = self.var(name)?;
        let start = entity * self.weeks;
        Ok(&v.values[start..start + self.weeks])
    }

    /// Cell at entity position `entity`, 1-based week `t`.
    pub fn get(&self, name: &str, entity: usize, t: usize) -> Result<Option<f64>> {
        if t == 0 || t > self.weeks {
            return Ok(None);
        }
        Ok(self.var(name)?.values[entity * self.weeks + t - 1])
    }

    /// Add a column. Fails on duplicate names, wrong length, or non-finite values.
    pub fn insert(&mut self, name: impl Into<String>, role: Role, values: Column) -> Result<()> {
        let name = name.into();
        if self.vars.contains_key(&name) {
            return Err(Error::spec(format!("variable `{name}` already exists")));
        }
        let expected = self.entities.len() * self.weeks;
        if values.len() != expected {
            return Err(Error::data(format!(
                "variable `{name}` has {} cells, panel grid has {expected}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
            let (e, t) = (pos / self.weeks, pos % self.weeks + 1);
            return Err(Error::data(format!(
                "variable `{name}` has a non-finite value at entity {}, week {t}",
                self.entities[e]
            )));
        }
        self.vars.insert(name, Variable { role, values });
        Ok(())
    }

    /// Build a column by evaluating `f(entity, t)` for every cell.
    pub fn column_from_fn(&self, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Column {
        let mut out = Vec::with_capacity(self.entities.len() * self.weeks);
        for e in 0..self.entities.len() {
            for t in 1..=self.weeks {
                out.push(f(e, t));
            }
        }
        out
    }

    /// Δln of `var`: `ln(Y_t / Y_{t-1})`, missing unless both levels are positive.
    pub fn log_growth(&self, var: &str) -> Result<Column> {
        let v = self.var(var)?;
        if let Some(x) = v.values.iter().flatten().find(|x| **x < 0.0) {
            return Err(Error::spec(format!(
                "log growth needs nonnegative levels; `{var}` holds {x}"
            )));
        }
        Ok(transform::log_growth(&v.values, self.weeks))
    }

    /// `var` shifted by `k` weeks: value at t is the source at t − k.
    pub fn lag(&self, var: &str, k: usize) -> Result<Column> {
        if k == 0 {
            return Err(Error::spec(format!(
                "lag of `{var}` must be at least 1 week"
            )));
        }
        Ok(transform::lag(&self.var(var)?.values, self.weeks, k))
    }

    /// Insert `dln_<var>` and return its name. Reuses the column if present.
    pub fn add_log_growth(&mut self, var: &str) -> Result<String> {
        let name = format!("dln_{var}");
        if !self.has_variable(&name) {
            let col = self.log_growth(var)?;
            self.insert(name.clone(), Role::Derived, col)?;
        }
        Ok(name)
    }

    /// Insert `L<k>.<var>` and return its name. Reuses the column if present.
    pub fn add_lag(&mut self, var: &str, k: usize) -> Result<String> {
        let name = format!("L{k}.{var}");
        if !self.has_variable(&name) {
            let col = self.lag(var, k)?;
            let role = self.var(var)?.role;
            self.insert(name.clone(), role, col)?;
        }
        Ok(name)
    }

    /// Keep only weeks `1..=weeks`.
    pub fn truncate_weeks(&self, weeks: usize) -> Result<WeeklyPanel> {
        if weeks == 0 || weeks > self.weeks {
            return Err(Error::config(format!(
                "cannot truncate a {}-week panel to {weeks} weeks",
                self.weeks
            )));
        }
        let mut out = WeeklyPanel::new(self.entities.clone(), self.anchor, weeks)?;
        for (name, v) in &self.vars {
            let values = (0..self.entities.len())
                .flat_map(|e| v.values[e * self.weeks..e * self.weeks + weeks].iter().copied())
                .collect();
            out.insert(name.clone(), v.role, values)?;
        }
        Ok(out)
    }
}

/// First Monday on or after `date`.
pub fn first_monday_on_or_after(date: NaiveDate) -> NaiveDate {
    let offset = (7 - date.weekday().num_days_from_monday()) % 7;
    date + Duration::days(offset as i64)
}
