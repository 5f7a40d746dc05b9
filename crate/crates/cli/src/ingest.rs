use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::period::{parse_date, Frequency, Period};

/// Rows listed in full by an error message before the rest is counted.
const MAX_LISTED: usize = 10;

/// Transformation applied to the raw values: `scale * ln(raw)` when `log`,
/// otherwise `scale * raw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub log: bool,
    pub scale: f64,
}

impl Transform {
    fn check(&self) -> CliResult<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CliError::Validation(format!(
                "scale factor {} must be positive and finite",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Where and how to read a series.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Value column; may be omitted when the file has exactly two columns.
    pub column: Option<String>,
    /// Date column; the first column when omitted.
    pub date_column: Option<String>,
    /// Sampling frequency; inferred from the dates when omitted.
    pub frequency: Option<Frequency>,
    pub transform: Transform,
}

/// Description of an ingested series, written into every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub column: String,
    pub date_column: String,
    pub frequency: Frequency,
    pub start: String,
    pub end: String,
    pub n: usize,
    pub transform: Transform,
}

/// A validated series: consecutive periods with finite, transformed values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub periods: Vec<Period>,
    pub values: Vec<f64>,
    pub info: DatasetInfo,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn first(&self) -> Period {
        self.periods[0]
    }

    /// 1-based observation index of `period`.
    pub fn position(&self, period: Period) -> Option<usize> {
        let k = period.index - self.first().index;
        (0..self.n() as i64).contains(&k).then_some(k as usize + 1)
    }
}

fn listed(rows: &[String]) -> String {
    let mut s = rows
        .iter()
        .take(MAX_LISTED)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if rows.len() > MAX_LISTED {
        s.push_str(&format!(" and {} more", rows.len() - MAX_LISTED));
    }
    s
}

fn column_index(headers: &csv::StringRecord, name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "column '{name}' not found; available: {}",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
}

/// Quarterly when every date sits at the same position within its quarter,
/// monthly otherwise.
fn infer_frequency(dates: &[NaiveDate]) -> Frequency {
    let pos = |d: &NaiveDate| d.month0() % 3;
    match dates.first() {
        Some(d0) if dates.iter().all(|d| pos(d) == pos(d0)) => Frequency::Quarterly,
        Some(_) => Frequency::Monthly,
        None => Frequency::Quarterly,
    }
}

pub fn ingest(path: &Path, opts: &IngestOptions) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, opts).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads a CSV with a header row. Rows are numbered as lines of the file,
/// the header being row 1.
pub fn ingest_reader<R: Read>(reader: R, opts: &IngestOptions) -> CliResult<Dataset> {
    opts.transform.check()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(CliError::Validation(
            "expected a header row with a date column and a value column".into(),
        ));
    }
    let date_idx = match &opts.date_column {
        Some(name) => column_index(&headers, name)?,
        None => 0,
    };
    let value_idx = match &opts.column {
        Some(name) => column_index(&headers, name)?,
        None if headers.len() == 2 => 1 - date_idx.min(1),
        None => {
            return Err(CliError::Validation(format!(
                "several value columns ({}); choose one with --column",
                headers.iter().collect::<Vec<_>>().join(", ")
            )))
        }
    };
    if date_idx == value_idx {
        return Err(CliError::Validation(
            "date and value columns coincide".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut dates = Vec::new();
    let mut raw = Vec::new();
    let mut bad_dates = Vec::new();
    let mut bad_values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let date_cell = record.get(date_idx).unwrap_or("");
        let value_cell = record.get(value_idx).unwrap_or("").trim();
        match parse_date(date_cell) {
            Some(d) => dates.push(d),
            None => bad_dates.push(format!("row {row} ('{date_cell}')")),
        }
        match value_cell.parse::<f64>() {
            Ok(v) if v.is_finite() => raw.push(v),
            _ => bad_values.push(format!("row {row} ('{value_cell}')")),
        }
        rows.push(row);
    }
    let mut problems = Vec::new();
    if !bad_dates.is_empty() {
        problems.push(format!("unparseable dates at {}", listed(&bad_dates)));
    }
    if !bad_values.is_empty() {
        problems.push(format!("non-numeric values at {}", listed(&bad_values)));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }
    if raw.is_empty() {
        return Err(CliError::Validation("no observations".into()));
    }

    let freq = opts.frequency.unwrap_or_else(|| infer_frequency(&dates));
    let periods: Vec<Period> = dates.iter().map(|&d| Period::containing(d, freq)).collect();
    let mut duplicates = Vec::new();
    let mut disorder = Vec::new();
    let mut gaps = Vec::new();
    for i in 1..periods.len() {
        let (a, b) = (periods[i - 1], periods[i]);
        let (ra, rb) = (rows[i - 1], rows[i]);
        match b.index - a.index {
            1 => {}
            0 => duplicates.push(format!("rows {ra} and {rb} ({b})")),
            k if k < 0 => disorder.push(format!("row {rb} ({b} after {a})")),
            k => {
                let missing: Vec<String> = (1..k).map(|j| a.offset(j).to_string()).collect();
                gaps.push(format!(
                    "between rows {ra} and {rb}: missing {}",
                    listed(&missing)
                ));
            }
        }
    }
    if !duplicates.is_empty() {
        problems.push(format!("duplicate dates at {}", listed(&duplicates)));
    }
    if !disorder.is_empty() {
        problems.push(format!("dates not increasing at {}", listed(&disorder)));
    }
    if !gaps.is_empty() {
        problems.push(format!("gaps in the dates {}", listed(&gaps)));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }

    let t = opts.transform;
    if t.log {
        let nonpositive: Vec<String> = raw
            .iter()
            .zip(&rows)
            .filter(|(v, _)| **v <= 0.0)
            .map(|(v, r)| format!("row {r} ({v})"))
            .collect();
        if !nonpositive.is_empty() {
            return Err(CliError::Validation(format!(
                "logarithm of non-positive values at {}",
                listed(&nonpositive)
            )));
        }
    }
    let values = raw
        .iter()
        .map(|&v| t.scale * if t.log { v.ln() } else { v })
        .collect();
    let info = DatasetInfo {
        column: headers[value_idx].trim().to_string(),
        date_column: headers[date_idx].trim().to_string(),
        frequency: freq,
        start: periods[0].to_string(),
        end: periods[periods.len() - 1].to_string(),
        n: periods.len(),
        transform: t,
    };
    Ok(Dataset {
        periods,
        values,
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(log: bool, scale: f64) -> IngestOptions {
        IngestOptions {
            column: None,
            date_column: None,
            frequency: None,
            transform: Transform { log, scale },
        }
    }

    fn err(csv: &str) -> String {
        match ingest_reader(csv.as_bytes(), &opts(false, 1.0)) {
            Err(CliError::Validation(m)) => m,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn fred_style_log_scale() {
        let csv = "observation_date,GDPC1\n1961-01-01,3493.703\n1961-04-01,3553.021\n1961-07-01,3621.252\n";
        let ds = ingest_reader(csv.as_bytes(), &opts(true, 100.0)).unwrap();
        assert_eq!(ds.info.frequency, Frequency::Quarterly);
        assert_eq!(ds.info.column, "GDPC1");
        assert_eq!(
            (ds.info.start.as_str(), ds.info.end.as_str()),
            ("1961Q1", "1961Q3")
        );
        assert_eq!(ds.values[1], 100.0 * 3553.021f64.ln());
    }

    #[test]
    fn quarterly_span_count() {
        let mut csv = String::from("date,v\n");
        for y in 1961..=2018 {
            for m in [1, 4, 7, 10] {
                csv.push_str(&format!("{y}-{m:02}-01,1\n"));
            }
        }
        let ds = ingest_reader(csv.as_bytes(), &opts(false, 1.0)).unwrap();
        assert_eq!(ds.n(), 232);
        assert_eq!(ds.info.end, "2018Q4");
        let q = Period::parse_label("1973Q1", Frequency::Quarterly).unwrap();
        assert_eq!(ds.position(q), Some(49));
    }

    #[test]
    fn gap_names_the_missing_quarter() {
        let m = err("date,v\n1961-01-01,1\n1961-04-01,2\n1961-10-01,3\n");
        assert!(m.contains("rows 3 and 4"), "{m}");
        assert!(m.contains("1961Q3"), "{m}");
    }

    #[test]
    fn duplicates_and_disorder_name_rows() {
        let m =
            err("date,v\n1961-01-01,1\n1961-01-01,2\n1961-04-01,3\n1961-01-01,4\n1961-04-01,5\n");
        assert!(
            m.contains("duplicate dates at rows 2 and 3 (1961Q1)"),
            "{m}"
        );
        assert!(m.contains("row 5 (1961Q1 after 1961Q2)"), "{m}");
    }

    #[test]
    fn non_numeric_cells_name_rows() {
        let m = err("date,v\n1961-01-01,1\n1961-04-01,.\n1961-07-01,\n1961-10-01,NaN\nbad,1\n");
        assert!(m.contains("row 3 ('.'), row 4 (''), row 5 ('NaN')"), "{m}");
        assert!(m.contains("unparseable dates at row 6 ('bad')"), "{m}");
    }

    #[test]
    fn monthly_inferred() {
        let csv = "date,v\n2000-11-01,1\n2000-12-01,2\n2001-01-01,3\n";
        let ds = ingest_reader(csv.as_bytes(), &opts(false, 2.0)).unwrap();
        assert_eq!(ds.info.frequency, Frequency::Monthly);
        assert_eq!(ds.values, vec![2.0, 4.0, 6.0]);
        let m = err("date,v\n2000-11-01,1\n2001-01-01,2\n2001-02-01,3\n");
        assert!(m.contains("missing 2000-12"), "{m}");
    }

    #[test]
    fn column_selection() {
        let csv = "date,a,b\n2000-01-01,1,5\n2000-04-01,2,6\n";
        assert!(ingest_reader(csv.as_bytes(), &opts(false, 1.0)).is_err());
        let o = IngestOptions {
            column: Some("b".into()),
            ..opts(false, 1.0)
        };
        assert_eq!(
            ingest_reader(csv.as_bytes(), &o).unwrap().values,
            vec![5.0, 6.0]
        );
        let o = IngestOptions {
            column: Some("c".into()),
            ..opts(false, 1.0)
        };
        assert!(ingest_reader(csv.as_bytes(), &o).is_err());
    }

    #[test]
    fn log_of_non_positive_and_bad_scale() {
        let csv = "date,v\n2000-01-01,1\n2000-04-01,0\n";
        let m = match ingest_reader(csv.as_bytes(), &opts(true, 1.0)) {
            Err(CliError::Validation(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(m.contains("row 3"), "{m}");
        assert!(ingest_reader(csv.as_bytes(), &opts(false, 0.0)).is_err());
    }
}
