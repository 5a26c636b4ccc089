//! Keyword-count indexes from search-trend and news-title data.
//!
//! Four term categories (covid, fake news, vaccines, prevention) are summed
//! per state and week, separately for the search channel (`gt_*`) and the
//! news channel (`n_*`). Prevention is the behavioural category; the other
//! three are general.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::WeekSpan;
use crate::panel::{Column, Role, WeeklyPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryLabel {
    Covid,
    Fakenews,
    Vaccines,
    Prevention,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 4] = [
        CategoryLabel::Covid,
        CategoryLabel::Fakenews,
        CategoryLabel::Vaccines,
        CategoryLabel::Prevention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryLabel::Covid => "covid",
            CategoryLabel::Fakenews => "fakenews",
            CategoryLabel::Vaccines => "vaccines",
            CategoryLabel::Prevention => "prevention",
        }
    }

    /// Position 1..=4 in the category vector.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn kind(self) -> Kind {
        match self {
            CategoryLabel::Prevention => Kind::Behavioral,
            _ => Kind::General,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    General,
    Behavioral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCategory {
    pub label: CategoryLabel,
    pub terms: Vec<String>,
}

impl TermCategory {
    pub fn kind(&self) -> Kind {
        self.label.kind()
    }
}

const COVID_TERMS: &[&str] = &[
    "covid",
    "pandemia",
    "coronavirus",
    "covid-19",
    "mortes covid",
    "morrer de covid",
    "covid o que fazer",
    "covid como proceder",
    "pegar covid",
    "transmissão covid",
    "covid mata",
    "covid contagioso",
    "covid transmite",
    "contagio covid",
    "sintomas covid",
    "morte de covid",
    "casos covid",
];

const FAKENEWS_TERMS: &[&str] = &[
    "kit-covid",
    "hidroxicloroquina",
    "cloroquina",
    "azitromicina",
    "gripezinha",
    "ivermectina",
    "remedio covid",
    "tratamento covid",
];

const VACCINE_TERMS: &[&str] = &[
    "vacinação covid",
    "vacinas covid",
    "pfizer",
    "astrazeneca",
    "janssen",
    "butantan",
    "coronavac",
    "moderna",
    "biontech",
    "oxford",
    "fiocruz",
    "sputnik v",
];

const PREVENTION_TERMS: &[&str] = &[
    "mascara",
    "lavas as mãos",
    "alcool em gel",
    "isolamento",
    "distanciamento",
    "quarentena",
    "lockdown",
    "confinamento",
    "ficar em casa",
    "toque de recolher",
    "toque de restrição",
    "restrições",
    "circulação",
];

/// The stock Portuguese term lists.
pub fn default_categories() -> Vec<TermCategory> {
    [
        (CategoryLabel::Covid, COVID_TERMS),
        (CategoryLabel::Fakenews, FAKENEWS_TERMS),
        (CategoryLabel::Vaccines, VACCINE_TERMS),
        (CategoryLabel::Prevention, PREVENTION_TERMS),
    ]
    .into_iter()
    .map(|(label, terms)| TermCategory {
        label,
        terms: terms.iter().map(|t| t.to_string()).collect(),
    })
    .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TermsFile {
    category: Vec<TermCategory>,
}

/// Parse a `terms.toml` file: one `[[category]]` table per label.
pub fn parse_terms_toml(text: &str) -> Result<Vec<TermCategory>> {
    let file: TermsFile =
        toml::from_str(text).map_err(|e| Error::config(format!("terms file: {e}")))?;
    Ok(file.category)
}

/// Render categories in the `terms.toml` layout.
pub fn terms_toml(categories: &[TermCategory]) -> String {
    toml::to_string(&TermsFile {
        category: categories.to_vec(),
    })
    .expect("term categories serialize")
}

/// Lowercase, strip diacritics, collapse runs of whitespace.
pub fn normalize(text: &str) -> String {
    let folded: String = text
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Validated categories with a normalized term → category lookup.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    categories: Vec<TermCategory>,
    /// (normalized term, category label), in category then list order.
    terms: Vec<(String, CategoryLabel)>,
    lookup: HashMap<String, CategoryLabel>,
}

impl Vocabulary {
    pub fn new(categories: Vec<TermCategory>) -> Result<Self> {
        let mut seen_labels = Vec::new();
        let mut terms = Vec::new();
        let mut lookup = HashMap::new();
        for cat in &categories {
            if seen_labels.contains(&cat.label) {
                return Err(Error::config(format!(
                    "category `{}` listed twice",
                    cat.label.as_str()
                )));
            }
            seen_labels.push(cat.label);
            if cat.terms.is_empty() {
                return Err(Error::config(format!(
                    "category `{}` has no terms",
                    cat.label.as_str()
                )));
            }
            for raw in &cat.terms {
                let term = normalize(raw);
                if term.is_empty() {
                    return Err(Error::config(format!(
                        "blank term in category `{}`",
                        cat.label.as_str()
                    )));
                }
                if let Some(prev) = lookup.insert(term.clone(), cat.label) {
                    return Err(Error::config(if prev == cat.label {
                        format!("term `{raw}` repeated in category `{}`", cat.label.as_str())
                    } else {
                        format!(
                            "term `{raw}` belongs to both `{}` and `{}`",
                            prev.as_str(),
                            cat.label.as_str()
                        )
                    }));
                }
                terms.push((term, cat.label));
            }
        }
        Ok(Vocabulary {
            categories,
            terms,
            lookup,
        })
    }

    pub fn defaults() -> Self {
        Vocabulary::new(default_categories()).expect("stock term lists are valid")
    }

    pub fn categories(&self) -> &[TermCategory] {
        &self.categories
    }

    pub fn category_of(&self, term: &str) -> Option<CategoryLabel> {
        self.lookup.get(&normalize(term)).copied()
    }

    /// Normalized terms with their categories.
    pub fn terms(&self) -> &[(String, CategoryLabel)] {
        &self.terms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// Search-trend counts.
    Gt,
    /// News-title counts.
    News,
}

impl Channel {
    pub fn prefix(self) -> &'static str {
        match self {
            Channel::Gt => "gt",
            Channel::News => "n",
        }
    }

    pub fn parse(raw: &str) -> Option<Channel> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "gt" => Some(Channel::Gt),
            "n" | "news" => Some(Channel::News),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRecord {
    pub term: String,
    pub state_code: String,
    pub week: usize,
    pub count: u64,
    pub channel: Channel,
}

/// Why a count record did not enter the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub record: usize,
    pub term: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    UnknownTerm,
    UnknownState,
    OutOfSpan,
}

/// Four category sums per (state, week) for one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelIndex {
    pub channel: Channel,
    pub states: Vec<String>,
    pub weeks: usize,
    /// `cells[category_index - 1][state * weeks + week - 1]`.
    pub cells: [Vec<u64>; 4],
}

impl ChannelIndex {
    fn zeroed(channel: Channel, states: &[String], weeks: usize) -> Self {
        ChannelIndex {
            channel,
            states: states.to_vec(),
            weeks,
            cells: std::array::from_fn(|_| vec![0; states.len() * weeks]),
        }
    }

    pub fn value(&self, label: CategoryLabel, state: usize, week: usize) -> u64 {
        self.cells[label.index() - 1][state * self.weeks + week - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexBuild {
    pub index: ChannelIndex,
    pub rejects: Vec<Reject>,
}

/// Sum per-term counts into category indexes for `channel`.
///
/// Records of the other channel are skipped silently. Unknown terms,
/// unknown states and weeks outside `1..=weeks` are reported in `rejects`.
pub fn build_index(
    records: &[CountRecord],
    vocab: &Vocabulary,
    channel: Channel,
    states: &[String],
    weeks: usize,
    exec: Execution,
) -> IndexBuild {
    let state_pos: HashMap<&str, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let indexed: Vec<(usize, &CountRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.channel == channel)
        .collect();

    let (index, mut rejects) = exec.fold(
        &indexed,
        || (ChannelIndex::zeroed(channel, states, weeks), Vec::new()),
        |(mut idx, mut rej), (i, r)| {
            let reason = match (vocab.category_of(&r.term), state_pos.get(r.state_code.as_str())) {
                (None, _) => Some(RejectReason::UnknownTerm),
                (_, None) => Some(RejectReason::UnknownState),
                _ if r.week == 0 || r.week > weeks => Some(RejectReason::OutOfSpan),
                (Some(cat), Some(&s)) => {
                    idx.cells[cat.index() - 1][s * weeks + r.week - 1] += r.count;
                    None
                }
            };
            if let Some(reason) = reason {
                rej.push(Reject {
                    record: *i,
                    term: r.term.clone(),
                    reason,
                });
            }
            (idx, rej)
        },
        |(mut a, mut ra), (b, rb)| {
            for (ca, cb) in a.cells.iter_mut().zip(b.cells) {
                ca.iter_mut().zip(cb).for_each(|(x, y)| *x += y);
            }
            ra.extend(rb);
            (a, ra)
        },
    );
    rejects.sort_by_key(|r| r.record);
    IndexBuild { index, rejects }
}

/// Per-term presence counts over news titles.
///
/// Each title adds one to every term it contains (as a substring after
/// normalization), regardless of how many times the term repeats.
/// Titles are `(state_code, week, title)`.
pub fn count_news_titles(titles: &[(String, usize, String)], vocab: &Vocabulary) -> Vec<CountRecord> {
    let mut counts: BTreeMap<(String, usize, String), u64> = BTreeMap::new();
    for (state, week, title) in titles {
        let title = normalize(title);
        for (term, _) in vocab.terms() {
            if title.contains(term.as_str()) {
                *counts
                    .entry((state.clone(), *week, term.clone()))
                    .or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|((state_code, week, term), count)| CountRecord {
            term,
            state_code,
            week,
            count,
            channel: Channel::News,
        })
        .collect()
}

/// Both channels' indexes over the same states and weeks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoftIndexPanel {
    pub states: Vec<String>,
    pub weeks: usize,
    pub gt: ChannelIndex,
    pub news: ChannelIndex,
}

impl SoftIndexPanel {
    pub fn new(gt: ChannelIndex, news: ChannelIndex) -> Result<Self> {
        if gt.channel != Channel::Gt || news.channel != Channel::News {
            return Err(Error::spec("soft index channels passed in the wrong slots"));
        }
        if gt.states != news.states || gt.weeks != news.weeks {
            return Err(Error::spec("soft index channels cover different states or weeks"));
        }
        Ok(SoftIndexPanel {
            states: gt.states.clone(),
            weeks: gt.weeks,
            gt,
            news,
        })
    }

    /// `(variable name, state-major cells)` for all eight series.
    pub fn variables(&self) -> Vec<(String, &[u64])> {
        [&self.gt, &self.news]
            .into_iter()
            .flat_map(|ch| {
                CategoryLabel::ALL.into_iter().map(move |label| {
                    (
                        format!("{}_{}", ch.channel.prefix(), label.as_str()),
                        ch.cells[label.index() - 1].as_slice(),
                    )
                })
            })
            .collect()
    }

    /// Write the state-level panel as long CSV.
    pub fn to_panel(&self, span: WeekSpan) -> Result<WeeklyPanel> {
        let mut p = WeeklyPanel::new(self.states.clone(), span.anchor(), self.weeks)?;
        for (name, cells) in self.variables() {
            let role = Role::infer(&name);
            p.insert(name, role, cells.iter().map(|c| Some(*c as f64)).collect())?;
        }
        Ok(p)
    }
}

/// Copy each state's index values onto its municipalities.
///
/// Inserts the eight `gt_*` / `n_*` variables into `panel`. A variable that
/// already exists with identical values is left alone, so broadcasting is
/// idempotent; conflicting values are an error.
pub fn broadcast_to_municipalities(
    state_panel: &SoftIndexPanel,
    panel: &mut WeeklyPanel,
    state_of: &dyn Fn(&str) -> Option<String>,
) -> Result<()> {
    if state_panel.weeks != panel.week_count() {
        return Err(Error::data(format!(
            "soft index spans {} weeks, panel spans {}",
            state_panel.weeks,
            panel.week_count()
        )));
    }
    let state_pos: HashMap<&str, usize> = state_panel
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rows = Vec::with_capacity(panel.entity_count());
    let mut unmapped = Vec::new();
    for m in panel.entities() {
        match state_of(m).and_then(|s| state_pos.get(s.as_str()).copied()) {
            Some(s) => rows.push(s),
            None => unmapped.push(m.clone()),
        }
    }
    if !unmapped.is_empty() {
        return Err(Error::data(format!(
            "municipalities without a state in the soft index: {}",
            unmapped.join(", ")
        )));
    }
    let weeks = panel.week_count();
    for (name, cells) in state_panel.variables() {
        let col: Column = rows
            .iter()
            .flat_map(|&s| cells[s * weeks..(s + 1) * weeks].iter().map(|c| Some(*c as f64)))
            .collect();
        if panel.has_variable(&name) {
            if panel.column(&name)? != col.as_slice() {
                return Err(Error::data(format!(
                    "panel already holds a different `{name}` series"
                )));
            }
            continue;
        }
        let role = Role::infer(&name);
        panel.insert(name, role, col)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawCount {
    channel: String,
    term: String,
    state_code: String,
    week_start: String,
    count: u64,
}

/// Parse `counts.csv`. Rows dated outside `span` keep week 0 and end up in
/// the rejects report of [`build_index`].
pub fn read_counts<R: Read>(reader: R, span: WeekSpan) -> Result<Vec<CountRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, raw) in r.deserialize::<RawCount>().enumerate() {
        let raw = raw?;
        let ctx = format!("counts row {}", i + 2);
        let channel = Channel::parse(&raw.channel)
            .ok_or_else(|| Error::data(format!("{ctx}: unknown channel `{}`", raw.channel)))?;
        let date = chrono::NaiveDate::parse_from_str(raw.week_start.trim(), "%Y-%m-%d")
            .map_err(|e| Error::data(format!("{ctx}: bad week_start: {e}")))?;
        out.push(CountRecord {
            term: raw.term,
            state_code: raw.state_code.trim().to_string(),
            week: span.week_of(date).unwrap_or(0),
            count: raw.count,
            channel,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawTitle {
    state_code: String,
    week_start: String,
    title: String,
}

/// Parse `titles.csv` into `(state, week, title)`; out-of-span titles are dropped.
pub fn read_titles<R: Read>(reader: R, span: WeekSpan) -> Result<Vec<(String, usize, String)>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, raw) in r.deserialize::<RawTitle>().enumerate() {
        let raw = raw?;
        let date = chrono::NaiveDate::parse_from_str(raw.week_start.trim(), "%Y-%m-%d")
            .map_err(|e| Error::data(format!("titles row {}: bad week_start: {e}", i + 2)))?;
        if let Some(w) = span.week_of(date) {
            out.push((raw.state_code.trim().to_string(), w, raw.title));
        }
    }
    Ok(out)
}
