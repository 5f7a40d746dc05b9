use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Sampling frequency of a series.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Quarterly,
    Monthly,
}

impl Frequency {
    pub fn per_year(self) -> i64 {
        match self {
            Frequency::Quarterly => 4,
            Frequency::Monthly => 12,
        }
    }

    fn months(self) -> u32 {
        (12 / self.per_year()) as u32
    }
}

/// A calendar quarter or month, ordered by `index = year * per_year + sub`
/// with `sub` counted from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Period {
    pub freq: Frequency,
    pub index: i64,
}

impl Period {
    pub fn new(freq: Frequency, year: i32, sub: u32) -> Self {
        Self {
            freq,
            index: year as i64 * freq.per_year() + sub as i64,
        }
    }

    /// The period containing `date`.
    pub fn containing(date: NaiveDate, freq: Frequency) -> Self {
        Self::new(freq, date.year(), date.month0() / freq.months())
    }

    pub fn year(self) -> i32 {
        self.index.div_euclid(self.freq.per_year()) as i32
    }

    /// Zero-based quarter or month within the year.
    pub fn sub(self) -> u32 {
        self.index.rem_euclid(self.freq.per_year()) as u32
    }

    pub fn offset(self, k: i64) -> Self {
        Self {
            index: self.index + k,
            ..self
        }
    }

    /// First day of the period.
    pub fn start_date(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year(), self.sub() * self.freq.months() + 1, 1)
            .expect("period start is a valid date")
    }

    /// Parses `YYYYQn` for quarters and `YYYY-MM` or `YYYYMmm` for months.
    pub fn parse_label(s: &str, freq: Frequency) -> Result<Self, String> {
        let s = s.trim();
        let bad = || match freq {
            Frequency::Quarterly => format!("'{s}' is not a quarter of the form YYYYQn"),
            Frequency::Monthly => format!("'{s}' is not a month of the form YYYY-MM"),
        };
        let upper = s.to_ascii_uppercase();
        let (year, sub) = match freq {
            Frequency::Quarterly => upper.split_once('Q').ok_or_else(bad)?,
            Frequency::Monthly => upper
                .split_once('-')
                .or_else(|| upper.split_once('M'))
                .ok_or_else(bad)?,
        };
        let year: i32 = year.parse().map_err(|_| bad())?;
        let sub: u32 = sub.parse().map_err(|_| bad())?;
        if sub == 0 || sub as i64 > freq.per_year() {
            return Err(bad());
        }
        Ok(Self::new(freq, year, sub - 1))
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.freq {
            Frequency::Quarterly => write!(f, "{}Q{}", self.year(), self.sub() + 1),
            Frequency::Monthly => write!(f, "{}-{:02}", self.year(), self.sub() + 1),
        }
    }
}

/// Parses `YYYY-MM-DD`, an ISO timestamp whose date part is that, or
/// `YYYY-MM` as the first of the month.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = match s.char_indices().nth(10) {
        Some((i, 'T' | ' ')) => &s[..i],
        _ => s,
    };
    NaiveDate::parse_from_str(head, "%Y-%m-%d")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(&format!("{head}-01"), "%Y-%m-%d").ok())
}
