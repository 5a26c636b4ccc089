use std::fmt::Write as _;

use crate::error::Result;
use crate::estimators::{dep_lag_name, Coefficient, FitResult};
use crate::panel::{Role, MOBILITY_CATEGORIES};

use super::{format_number, significance_stars};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Latex,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Text, Format::Csv, Format::Latex];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Latex => "tex",
        }
    }
}

/// Row blocks in print order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowGroup {
    Mobility,
    Vaccination,
    News,
    Search,
    DepLags,
    Other,
    Intercept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableColumn {
    /// Response label, e.g. `cases`.
    pub label: String,
    pub lag: usize,
    pub fit: FitResult,
}

impl TableColumn {
    pub fn new(fit: FitResult) -> Self {
        let label = fit
            .dependent
            .strip_prefix("dln_")
            .unwrap_or(&fit.dependent)
            .to_string();
        TableColumn {
            label,
            lag: fit.lag,
            fit,
        }
    }
}

/// Side-by-side regression results.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionTable {
    pub columns: Vec<TableColumn>,
}

fn group_of(name: &str, fits: &[&FitResult]) -> Option<RowGroup> {
    if name.starts_with("week_") {
        return None;
    }
    if name == "_cons" {
        return Some(RowGroup::Intercept);
    }
    if MOBILITY_CATEGORIES.contains(&name) {
        return Some(RowGroup::Mobility);
    }
    let is_dep_lag = fits
        .iter()
        .any(|f| (1..=8).any(|h| dep_lag_name(&f.dependent, h) == name));
    if is_dep_lag {
        return Some(RowGroup::DepLags);
    }
    Some(match Role::infer(name) {
        Role::Vaccination => RowGroup::Vaccination,
        Role::NIndex => RowGroup::News,
        Role::GtSeries => RowGroup::Search,
        _ => RowGroup::Other,
    })
}

struct Cell {
    coef: String,
    stars: &'static str,
    se: String,
}

impl RegressionTable {
    pub fn new(fits: Vec<FitResult>) -> Self {
        RegressionTable {
            columns: fits.into_iter().map(TableColumn::new).collect(),
        }
    }

    /// Printed coefficient rows. Time dummies are left out.
    pub fn row_names(&self) -> Vec<String> {
        let fits: Vec<&FitResult> = self.columns.iter().map(|c| &c.fit).collect();
        let mut rows: Vec<(RowGroup, usize, String)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for f in &fits {
            let names = f.coefficients.iter().chain(&f.intercept).map(|c| c.name.as_str());
            for name in names {
                if let Some(g) = group_of(name, &fits) {
                    if seen.insert(name.to_string()) {
                        let rank = match g {
                            RowGroup::Mobility => MOBILITY_CATEGORIES.iter().position(|m| *m == name).unwrap(),
                            _ => rows.len() + 6,
                        };
                        rows.push((g, rank, name.to_string()));
                    }
                }
            }
        }
        rows.sort();
        rows.into_iter().map(|r| r.2).collect()
    }

    fn cell(fit: &FitResult, row: &str) -> Option<Result<Cell>> {
        let c: &Coefficient = if row == "_cons" {
            fit.intercept.as_ref()?
        } else {
            fit.coef(row)?
        };
        let p = if c.p_value.is_nan() { 1.0 } else { c.p_value };
        Some(significance_stars(p).map(|stars| Cell {
            coef: format_number(c.estimate),
            stars,
            se: format_number(c.std_error),
        }))
    }

    fn header(&self) -> Vec<String> {
        self.columns.iter().map(|c| format!("{} m={}", c.label, c.lag)).collect()
    }

    fn footer(&self) -> Vec<(&'static str, Vec<String>)> {
        let opt = |v: Option<f64>| v.map(format_number).unwrap_or_else(|| ".".into());
        let col = |f: &dyn Fn(&FitResult) -> String| self.columns.iter().map(|c| f(&c.fit)).collect();
        vec![
            ("R2", col(&|f| opt(f.r2_within))),
            ("R2_overall", col(&|f| opt(f.r2_overall))),
            ("N", col(&|f| f.n_obs.to_string())),
            ("p", col(&|f| opt(f.f_pvalue))),
        ]
    }

    /// Render in `format`. Output depends only on the table contents.
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Text => self.render_text(),
            Format::Csv => self.render_csv(),
            Format::Latex => self.render_latex(),
        }
    }

    fn grid(&self) -> Result<Vec<(String, Vec<Option<Cell>>)>> {
        self.row_names()
            .into_iter()
            .map(|row| {
                let cells = self
                    .columns
                    .iter()
                    .map(|c| Self::cell(&c.fit, &row).transpose())
                    .collect::<Result<Vec<_>>>()?;
                Ok((row, cells))
            })
            .collect()
    }

    fn render_text(&self) -> Result<String> {
        let grid = self.grid()?;
        let label_w = grid
            .iter()
            .map(|(r, _)| r.len())
            .chain(["R2_overall".len()])
            .max()
            .unwrap_or(0);
        let header = self.header();
        let w = header.iter().map(|h| h.len()).max().unwrap_or(0).max(14) + 2;
        let mut out = String::new();
        let rule = "-".repeat(label_w + w * self.columns.len());
        let line = |out: &mut String, label: &str, cells: &[String]| {
            let _ = write!(out, "{label:<label_w$}");
            for c in cells {
                let _ = write!(out, "{c:>w$}");
            }
            out.push('\n');
        };
        out.push_str(&rule);
        out.push('\n');
        let numbers: Vec<String> = (1..=self.columns.len()).map(|i| format!("({i})")).collect();
        line(&mut out, "", &numbers);
        line(&mut out, "", &header);
        out.push_str(&rule);
        out.push('\n');
        for (row, cells) in &grid {
            let coefs: Vec<String> = cells
                .iter()
                .map(|c| c.as_ref().map(|c| format!("{}{:<3}", c.coef, c.stars)).unwrap_or_default())
                .collect();
            let ses: Vec<String> = cells
                .iter()
                .map(|c| c.as_ref().map(|c| format!("({})   ", c.se)).unwrap_or_default())
                .collect();
            line(&mut out, row, &coefs);
            line(&mut out, "", &ses);
        }
        out.push_str(&rule);
        out.push('\n');
        for (label, cells) in self.footer() {
            let padded: Vec<String> = cells.into_iter().map(|c| format!("{c}   ")).collect();
            line(&mut out, label, &padded);
        }
        out.push_str(&rule);
        out.push('\n');
        out.push_str("Standard errors in parentheses\n* p<0.05, ** p<0.01, *** p<0.001\n");
        Ok(out)
    }

    fn render_csv(&self) -> Result<String> {
        let grid = self.grid()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["row".to_string(), "stat".to_string()];
        head.extend(self.header());
        w.write_record(&head)?;
        for (row, cells) in &grid {
            let mut coef = vec![row.clone(), "coef".into()];
            let mut se = vec![row.clone(), "se".into()];
            for c in cells {
                coef.push(c.as_ref().map(|c| format!("{}{}", c.coef, c.stars)).unwrap_or_default());
                se.push(c.as_ref().map(|c| c.se.clone()).unwrap_or_default());
            }
            w.write_record(&coef)?;
            w.write_record(&se)?;
        }
        for (label, cells) in self.footer() {
            let mut rec = vec![label.to_string(), "stat".into()];
            rec.extend(cells);
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn render_latex(&self) -> Result<String> {
        let grid = self.grid()?;
        let esc = |s: &str| s.replace('_', "\\_");
        let n = self.columns.len();
        let mut out = String::new();
        let _ = writeln!(out, "\\begin{{tabular}}{{l*{{{n}}}{{c}}}}");
        out.push_str("\\hline\\hline\n");
        let numbers: Vec<String> = (1..=n).map(|i| format!("({i})")).collect();
        let _ = writeln!(out, "            &{}\\\\", numbers.join("&"));
        let labels: Vec<String> = self.header().iter().map(|h| esc(h)).collect();
        let _ = writeln!(out, "            &{}\\\\", labels.join("&"));
        out.push_str("\\hline\n");
        for (row, cells) in &grid {
            let coefs: Vec<String> = cells
                .iter()
                .map(|c| match c {
                    Some(c) if c.stars.is_empty() => c.coef.clone(),
                    Some(c) => format!("{}\\sym{{{}}}", c.coef, c.stars),
                    None => String::new(),
                })
                .collect();
            let ses: Vec<String> = cells
                .iter()
                .map(|c| c.as_ref().map(|c| format!("({})", c.se)).unwrap_or_default())
                .collect();
            let _ = writeln!(out, "{}&{}\\\\", esc(row), coefs.join("&"));
            let _ = writeln!(out, "            &{}\\\\", ses.join("&"));
            out.push_str("[1em]\n");
        }
        out.push_str("\\hline\n");
        for (label, cells) in self.footer() {
            let label = match label {
                "R2" => "$R^2$",
                "R2_overall" => "$R_{overall}^2$",
                other => other,
            };
            let _ = writeln!(out, "{label}&{}\\\\", cells.join("&"));
        }
        out.push_str("\\hline\\hline\n");
        let _ = writeln!(out, "\\multicolumn{{{}}}{{l}}{{\\footnotesize Standard errors in parentheses}}\\\\", n + 1);
        let _ = writeln!(
            out,
            "\\multicolumn{{{}}}{{l}}{{\\footnotesize \\sym{{*}} \\(p<0.05\\), \\sym{{**}} \\(p<0.01\\), \\sym{{***}} \\(p<0.001\\)}}\\\\",
            n + 1
        );
        out.push_str("\\end{tabular}\n");
        Ok(out)
    }
}
