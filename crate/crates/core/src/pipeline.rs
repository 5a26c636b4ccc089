//! Config-driven runs: build the panel, derive the table specs from the
//! causal graph, estimate every column and write the output files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dag::{derive_controls, Bundled, CausalDag, ControlBlock};
use crate::error::{Error, Result};
use crate::estimators::{fit, AbOptions, BlockVariables, Estimator, FitResult, ModelSpec, StdErrors};
use crate::exec::Execution;
use crate::ingest::{
    aggregate_cases, aggregate_mobility, aggregate_vaccination, read_cases, read_mobility,
    read_vaccination, symptom_to_obit_stats, AggregationPolicy, DurationStats, Geography,
    VaccinationSource, WeekSpan,
};
use crate::panel::{describe, first_monday_on_or_after, Role, WeeklyPanel, MOBILITY_CATEGORIES};
use crate::report::{correlation_csv, durations_csv, summary_csv, Format, RegressionTable};
use crate::soft_index::{
    broadcast_to_municipalities, build_index, count_news_titles, parse_terms_toml, read_counts,
    read_titles, Channel, SoftIndexPanel, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Sample {
    #[default]
    #[serde(rename = "full_2020_2021")]
    Full,
    /// Weeks ending by the close of 2020, before vaccination began.
    #[serde(rename = "sub_2020")]
    Sub2020,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilitySet {
    /// Residential and workplace.
    #[default]
    Reduced,
    FullSix,
}

impl MobilitySet {
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            MobilitySet::Reduced => &MOBILITY_CATEGORIES[..2],
            MobilitySet::FullSix => &MOBILITY_CATEGORIES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Cases at m = 1..=4, then deaths at m = 2..=4.
    #[default]
    CasesAndDeaths,
    CasesOnly,
    DeathsOnly,
}

impl Layout {
    /// `(dependent, m)` per column.
    pub fn columns(self) -> Vec<(&'static str, usize)> {
        let cases = (1..=4).map(|m| ("dln_cases", m));
        let deaths = (2..=4).map(|m| ("dln_deaths", m));
        match self {
            Layout::CasesAndDeaths => cases.chain(deaths).collect(),
            Layout::CasesOnly => cases.collect(),
            Layout::DeathsOnly => deaths.collect(),
        }
    }
}

/// Input files. Either a ready panel or record-level sources.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub panel: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    pub vaccination: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    pub titles: Option<PathBuf>,
    pub terms: Option<PathBuf>,
    /// `municipality,state` pairs; defaults to the first two code digits.
    pub states: Option<PathBuf>,
}

impl Inputs {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.panel,
            &mut self.cases,
            &mut self.mobility,
            &mut self.vaccination,
            &mut self.counts,
            &mut self.titles,
            &mut self.terms,
            &mut self.states,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub sample: Sample,
    pub geography: Geography,
    pub vaccination_source: VaccinationSource,
    pub mobility_set: MobilitySet,
    pub estimator: Estimator,
    pub layout: Layout,
    /// Add the general soft-index block on top of the derived controls.
    pub include_general_soft: bool,
    pub time_dummies: bool,
    pub trend: bool,
    pub std_errors: StdErrors,
    pub instrument_lag_depth: usize,
    /// Graph file; the bundled graph for the sample when absent.
    pub dag: Option<PathBuf>,
    /// Explicit control blocks replacing the derived ones.
    pub controls: Option<Vec<String>>,
    pub inputs: Inputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            start: NaiveDate::from_ymd_opt(2020, 5, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2021, 8, 1).expect("valid date"),
            sample: Sample::Full,
            geography: Geography::Residence,
            vaccination_source: VaccinationSource::Campaign,
            mobility_set: MobilitySet::Reduced,
            estimator: Estimator::WithinFe,
            layout: Layout::CasesAndDeaths,
            include_general_soft: false,
            time_dummies: true,
            trend: false,
            std_errors: StdErrors::Classical,
            instrument_lag_depth: 4,
            dag: None,
            controls: None,
            inputs: Inputs::default(),
        }
    }
}

/// Last day of the restricted sample.
fn sub_2020_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 12, 31).expect("valid date")
}

/// Number of whole weeks from `anchor` that end on or before `cutoff`.
fn whole_weeks(anchor: NaiveDate, cutoff: NaiveDate) -> usize {
    let days = (cutoff - anchor).num_days() + 1;
    if days <= 0 {
        0
    } else {
        days as usize / 7
    }
}

impl RunConfig {
    /// Parse TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.inputs.resolve(base);
        if let Some(d) = cfg.dag.as_mut() {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.end < self.start {
            return Err(Error::config(format!("end {} precedes start {}", self.end, self.start)));
        }
        if self.instrument_lag_depth == 0 {
            return Err(Error::config("instrument_lag_depth must be at least 1"));
        }
        if let Some(blocks) = &self.controls {
            for b in blocks {
                let block = ControlBlock::parse(b)?;
                if block == ControlBlock::Vaccination && self.sample == Sample::Sub2020 {
                    return Err(Error::config(
                        "the 2020 sample has no vaccination channel; drop the vaccination block",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Monday-start weeks covered by the run.
    pub fn span(&self) -> Result<WeekSpan> {
        let anchor = first_monday_on_or_after(self.start);
        match self.sample {
            Sample::Full => WeekSpan::through(anchor, self.end),
            Sample::Sub2020 => {
                let cutoff = self.end.min(sub_2020_cutoff());
                WeekSpan::new(anchor, whole_weeks(anchor, cutoff))
            }
        }
    }

    /// The causal graph for this sample.
    pub fn graph(&self) -> Result<CausalDag> {
        match &self.dag {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
                CausalDag::parse(&text)
            }
            None => Ok(match self.sample {
                Sample::Full => Bundled::MobilityFull.load(),
                Sample::Sub2020 => Bundled::Mobility2020.load(),
            }),
        }
    }

    /// Control blocks used by every column.
    pub fn control_blocks(&self) -> Result<Vec<ControlBlock>> {
        let mut blocks = match &self.controls {
            Some(names) => names.iter().map(|n| ControlBlock::parse(n)).collect::<Result<Vec<_>>>()?,
            None => derive_controls(&self.graph()?, "X", "Y")?,
        };
        if self.include_general_soft && !blocks.contains(&ControlBlock::SoftGeneral) {
            blocks.push(ControlBlock::SoftGeneral);
        }
        blocks.sort();
        blocks.dedup();
        if self.sample == Sample::Sub2020 && blocks.contains(&ControlBlock::Vaccination) {
            return Err(Error::config(
                "the 2020 sample has no vaccination channel; drop the vaccination block",
            ));
        }
        Ok(blocks)
    }

    pub fn ab_options(&self) -> AbOptions {
        AbOptions {
            instrument_lag_depth: self.instrument_lag_depth,
            ..AbOptions::default()
        }
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Panel plus by-products of record-level ingestion.
#[derive(Debug, Clone)]
pub struct BuiltPanel {
    pub panel: WeeklyPanel,
    pub durations: Option<DurationStats>,
    pub soft: Option<SoftIndexPanel>,
    /// Counts of dropped or rejected input rows, by reason.
    pub dropped: BTreeMap<String, usize>,
}

fn state_lookup(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = BTreeMap::new();
    for rec in r.deserialize::<(String, String)>() {
        let (m, s) = rec?;
        out.insert(m.trim().to_string(), s.trim().to_string());
    }
    Ok(out)
}

fn state_of(map: &BTreeMap<String, String>, municipality: &str) -> Option<String> {
    map.get(municipality)
        .cloned()
        .or_else(|| (municipality.len() >= 2).then(|| municipality[..2].to_string()))
}

fn soft_indexes(
    cfg: &RunConfig,
    span: WeekSpan,
    states: &[String],
    exec: Execution,
    dropped: &mut BTreeMap<String, usize>,
) -> Result<Option<SoftIndexPanel>> {
    let i = &cfg.inputs;
    if i.counts.is_none() && i.titles.is_none() {
        return Ok(None);
    }
    let vocab = match &i.terms {
        Some(p) => Vocabulary::new(parse_terms_toml(&read_text(p)?)?)?,
        None => Vocabulary::defaults(),
    };
    let mut records = match &i.counts {
        Some(p) => read_counts(open(p)?, span)?,
        None => Vec::new(),
    };
    if let Some(p) = &i.titles {
        let titles = read_titles(open(p)?, span)?;
        records.extend(count_news_titles(&titles, &vocab));
    }
    let gt = build_index(&records, &vocab, Channel::Gt, states, span.weeks(), exec);
    let news = build_index(&records, &vocab, Channel::News, states, span.weeks(), exec);
    let rejects = gt.rejects.len() + news.rejects.len();
    *dropped.entry("soft_index_rejects".into()).or_default() += rejects;
    Ok(Some(SoftIndexPanel::new(gt.index, news.index)?))
}

/// State-level soft indexes for every state present in the count inputs.
pub fn soft_index_panel(cfg: &RunConfig, exec: Execution) -> Result<(WeeklyPanel, usize)> {
    let span = cfg.span()?;
    let i = &cfg.inputs;
    let mut states = BTreeSet::new();
    if let Some(p) = &i.counts {
        states.extend(read_counts(open(p)?, span)?.into_iter().map(|r| r.state_code));
    }
    if let Some(p) = &i.titles {
        states.extend(read_titles(open(p)?, span)?.into_iter().map(|t| t.0));
    }
    let states: Vec<String> = states.into_iter().collect();
    let mut dropped = BTreeMap::new();
    let soft = soft_indexes(cfg, span, &states, exec, &mut dropped)
        .map_err(|e| e.in_stage("index"))?
        .ok_or_else(|| Error::config("[index] inputs need `counts` or `titles`"))?;
    Ok((soft.to_panel(span)?, dropped.values().sum()))
}

/// Assemble the weekly panel described by `cfg`.
pub fn build_panel(cfg: &RunConfig, exec: Execution) -> Result<BuiltPanel> {
    if let Some(path) = &cfg.inputs.panel {
        let mut panel = WeeklyPanel::read_csv(open(path)?).map_err(|e| e.in_stage("ingest"))?;
        if cfg.sample == Sample::Sub2020 {
            let weeks = whole_weeks(panel.anchor(), cfg.end.min(sub_2020_cutoff()));
            if weeks == 0 {
                return Err(Error::data("[ingest] panel has no weeks inside 2020"));
            }
            if weeks < panel.week_count() {
                panel = panel.truncate_weeks(weeks)?;
            }
        }
        for dep in ["cases", "deaths"] {
            if panel.has_variable(dep) {
                panel.add_log_growth(dep)?;
            }
        }
        return Ok(BuiltPanel {
            panel,
            durations: None,
            soft: None,
            dropped: BTreeMap::new(),
        });
    }

    let span = cfg.span().map_err(|e| e.in_stage("ingest"))?;
    let stage = |e: Error| e.in_stage("ingest");
    let i = &cfg.inputs;
    let (Some(cases_path), Some(mob_path)) = (&i.cases, &i.mobility) else {
        return Err(Error::config(
            "[ingest] inputs need either `panel` or both `cases` and `mobility`",
        ));
    };
    let mut dropped = BTreeMap::new();
    let records = read_cases(open(cases_path)?).map_err(stage)?;
    let cases = aggregate_cases(&records, AggregationPolicy::cases(cfg.geography), span, exec).map_err(stage)?;
    let deaths = aggregate_cases(&records, AggregationPolicy::deaths(cfg.geography), span, exec).map_err(stage)?;
    dropped.insert("cases_out_of_span".into(), cases.out_of_span);
    dropped.insert("deaths_out_of_span".into(), deaths.out_of_span);
    let durations = symptom_to_obit_stats(&records, span).map_err(stage)?;

    let (mob_records, skipped) = read_mobility(open(mob_path)?, span).map_err(stage)?;
    dropped.insert("mobility_out_of_span".into(), skipped);
    let mobility = aggregate_mobility(&mob_records, span.weeks()).map_err(stage)?;

    let vaccination = match (&i.vaccination, cfg.sample) {
        (Some(p), Sample::Full) => {
            let recs = read_vaccination(open(p)?).map_err(stage)?;
            Some(aggregate_vaccination(&recs, cfg.vaccination_source, span).map_err(stage)?)
        }
        _ => None,
    };

    let entities: Vec<String> = cases
        .counts
        .keys()
        .chain(deaths.counts.keys())
        .chain(mobility.by_entity.keys())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if entities.is_empty() {
        return Err(Error::data("[ingest] no municipality appears in the inputs"));
    }
    let weeks = span.weeks();
    let mut panel = WeeklyPanel::new(entities.clone(), span.anchor(), weeks)?;
    for (name, counts) in [("cases", &cases), ("deaths", &deaths)] {
        let col = panel.column_from_fn(|e, t| {
            Some(counts.counts.get(&entities[e]).map_or(0.0, |row| row[t - 1] as f64))
        });
        panel.insert(name, Role::Dependent, col)?;
        panel.add_log_growth(name)?;
    }
    for (c, name) in MOBILITY_CATEGORIES.iter().enumerate() {
        let col = panel.column_from_fn(|e, t| mobility.category(&entities[e], c).and_then(|s| s[t - 1]));
        panel.insert(*name, Role::Mobility, col)?;
    }
    if let Some(vacc) = &vaccination {
        for (name, by_entity) in vacc {
            let col = panel.column_from_fn(|e, t| Some(by_entity.get(&entities[e]).map_or(0.0, |s| s[t - 1])));
            panel.insert(*name, Role::Vaccination, col)?;
        }
    }

    let map = state_lookup(i.states.as_deref()).map_err(stage)?;
    let states: Vec<String> = entities
        .iter()
        .filter_map(|m| state_of(&map, m))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let soft = soft_indexes(cfg, span, &states, exec, &mut dropped).map_err(|e| e.in_stage("index"))?;
    if let Some(soft) = &soft {
        broadcast_to_municipalities(soft, &mut panel, &|m| state_of(&map, m)).map_err(|e| e.in_stage("index"))?;
    }
    Ok(BuiltPanel {
        panel,
        durations: Some(durations),
        soft,
        dropped,
    })
}

/// Spec for one column: `dependent` at mobility lag `lag` with the run's controls.
pub fn spec_for(cfg: &RunConfig, dependent: &str, lag: usize) -> Result<ModelSpec> {
    let blocks = cfg.control_blocks()?;
    column_spec(cfg, &blocks, dependent, lag)
}

fn column_spec(cfg: &RunConfig, blocks: &[ControlBlock], dependent: &str, lag: usize) -> Result<ModelSpec> {
    let vars = BlockVariables::standard(cfg.vaccination_source);
    let mut spec = ModelSpec::from_blocks(dependent, lag, cfg.mobility_set.variables(), blocks, &vars);
    spec.time_dummies = cfg.time_dummies;
    spec.trend = cfg.trend;
    spec.estimator = cfg.estimator;
    spec.std_errors = cfg.std_errors;
    spec.validate()?;
    Ok(spec)
}

/// One spec per table column.
pub fn table_specs(cfg: &RunConfig) -> Result<Vec<ModelSpec>> {
    let blocks = cfg.control_blocks()?;
    cfg.layout
        .columns()
        .into_iter()
        .map(|(dep, m)| column_spec(cfg, &blocks, dep, m))
        .collect()
}

/// Fit every spec; the first failure aborts.
pub fn estimate_all(panel: &WeeklyPanel, specs: &[ModelSpec], ab: &AbOptions, exec: Execution) -> Result<Vec<FitResult>> {
    exec.map(specs, |s| {
        fit(panel, s, ab).map_err(|e| e.in_stage(&format!("estimate {} m={}", s.dependent, s.lag)))
    })
    .into_iter()
    .collect()
}

/// Files produced by [`run`], keyed by file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub files: BTreeMap<String, String>,
}

/// Variables described in the summary files, when present.
fn described(panel: &WeeklyPanel, specs: &[ModelSpec]) -> Vec<String> {
    let mut vars: Vec<String> = Vec::new();
    for s in specs {
        for v in std::iter::once(&s.dependent).chain(s.lagged_regressors()) {
            if panel.has_variable(v) && !vars.contains(v) {
                vars.push(v.clone());
            }
        }
    }
    vars
}

/// Compute every output of a table run without touching the disk.
pub fn render_run(cfg: &RunConfig, exec: Execution) -> Result<RunOutputs> {
    let built = build_panel(cfg, exec)?;
    let specs = table_specs(cfg).map_err(|e| e.in_stage("specify"))?;
    let fits = estimate_all(&built.panel, &specs, &cfg.ab_options(), exec)?;
    let table = RegressionTable::new(fits);
    let mut files = BTreeMap::new();
    for f in Format::ALL {
        files.insert(format!("table.{}", f.extension()), table.render(f).map_err(|e| e.in_stage("report"))?);
    }
    let vars = described(&built.panel, &specs);
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let stats = describe(&built.panel, &refs).map_err(|e| e.in_stage("report"))?;
    files.insert("summary.csv".into(), summary_csv(&stats)?);
    files.insert("correlation.csv".into(), correlation_csv(&stats)?);
    if let Some(d) = &built.durations {
        files.insert("durations.csv".into(), durations_csv(d)?);
    }
    let mut meta = String::new();
    meta.push_str(&format!("entities = {}\nweeks = {}\n", built.panel.entity_count(), built.panel.week_count()));
    meta.push_str(&format!("anchor = \"{}\"\n", built.panel.anchor()));
    let blocks: Vec<String> = cfg.control_blocks()?.iter().map(|b| format!("\"{b}\"")).collect();
    meta.push_str(&format!("controls = [{}]\n", blocks.join(", ")));
    for (k, v) in &built.dropped {
        meta.push_str(&format!("dropped_{k} = {v}\n"));
    }
    files.insert("run.toml".into(), meta);
    Ok(RunOutputs { files })
}

/// Write `outputs` into `dir`. On failure every file already written is removed.
pub fn write_outputs(outputs: &RunOutputs, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for (name, body) in &outputs.files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(path.display().to_string(), e).in_stage("write"));
        }
        written.push(path);
    }
    Ok(written)
}

/// Run the whole table pipeline and write its files into `out`.
pub fn run(cfg: &RunConfig, out: &Path, exec: Execution) -> Result<Vec<PathBuf>> {
    let outputs = render_run(cfg, exec)?;
    write_outputs(&outputs, out)
}
