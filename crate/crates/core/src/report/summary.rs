use crate::error::{Error, Result};
use crate::ingest::DurationStats;
use crate::panel::{format_value, SummaryStats};

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cell(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

/// One row per variable: count, mean, sd, min, max.
pub fn summary_csv(stats: &SummaryStats) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "count", "mean", "sd", "min", "max"])?;
    for v in &stats.variables {
        w.write_record([
            v.name.clone(),
            v.count.to_string(),
            cell(v.mean),
            cell(v.sd),
            cell(v.min),
            cell(v.max),
        ])?;
    }
    finish(w)
}

/// Square correlation matrix with variable names on both margins.
pub fn correlation_csv(stats: &SummaryStats) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec![String::new()];
    head.extend(stats.variables.iter().map(|v| v.name.clone()));
    w.write_record(&head)?;
    for (v, row) in stats.variables.iter().zip(&stats.correlation) {
        let mut rec = vec![v.name.clone()];
        rec.extend(row.iter().map(|c| cell(*c)));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Weekly symptom-to-obit medians plus the overall median.
pub fn durations_csv(stats: &DurationStats) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["week", "deaths", "median", "min", "max", "overall_median"])?;
    let overall = cell(stats.overall_median);
    for d in &stats.weekly {
        w.write_record([
            d.week.to_string(),
            d.deaths.to_string(),
            format_value(d.median),
            d.min.to_string(),
            d.max.to_string(),
            overall.clone(),
        ])?;
    }
    finish(w)
}
