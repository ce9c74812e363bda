use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the calendar periods events are aggregated into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Week,
    Month,
    Quarter,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Week => "week",
            Granularity::Month => "month",
            Granularity::Quarter => "quarter",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "week" | "weekly" => Ok(Granularity::Week),
            "month" | "monthly" => Ok(Granularity::Month),
            "quarter" | "quarterly" => Ok(Granularity::Quarter),
            other => Err(Error::InvalidParameter(format!(
                "unknown granularity `{other}` (expected week, month or quarter)"
            ))),
        }
    }
}

// 1970-01-05 is the first Monday on or after the Unix epoch.
fn week_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 5).expect("valid date")
}

/// A half-open calendar period `[start, end)`.
///
/// `index` counts periods of the same granularity from a fixed origin, so
/// consecutive bins have consecutive indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBin {
    pub granularity: Granularity,
    pub index: i64,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl TimeBin {
    /// The unique bin of `granularity` containing `date`.
    pub fn containing(date: NaiveDate, granularity: Granularity) -> TimeBin {
        let index = match granularity {
            Granularity::Week => (date - week_epoch()).num_days().div_euclid(7),
            Granularity::Month => date.year() as i64 * 12 + date.month0() as i64,
            Granularity::Quarter => date.year() as i64 * 4 + (date.month0() / 3) as i64,
        };
        TimeBin::from_index(granularity, index)
    }

    pub fn from_index(granularity: Granularity, index: i64) -> TimeBin {
        let (start, end) = match granularity {
            Granularity::Week => {
                let start = week_epoch() + chrono::Duration::days(index * 7);
                (start, start + Days::new(7))
            }
            Granularity::Month => {
                let start = NaiveDate::from_ymd_opt(
                    index.div_euclid(12) as i32,
                    index.rem_euclid(12) as u32 + 1,
                    1,
                )
                .expect("month index in range");
                (start, start + Months::new(1))
            }
            Granularity::Quarter => {
                let start = NaiveDate::from_ymd_opt(
                    index.div_euclid(4) as i32,
                    index.rem_euclid(4) as u32 * 3 + 1,
                    1,
                )
                .expect("quarter index in range");
                (start, start + Months::new(3))
            }
        };
        TimeBin {
            granularity,
            index,
            start,
            end,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }

    pub fn next(&self) -> TimeBin {
        TimeBin::from_index(self.granularity, self.index + 1)
    }

    pub fn prev(&self) -> TimeBin {
        TimeBin::from_index(self.granularity, self.index - 1)
    }

    /// Calendar year the bin belongs to. Weeks use their ISO year.
    pub fn year(&self) -> i32 {
        match self.granularity {
            Granularity::Week => self.start.iso_week().year(),
            _ => self.start.year(),
        }
    }

    /// Position within the year: month 1-12, quarter 1-4 or ISO week 1-53.
    pub fn position(&self) -> u32 {
        match self.granularity {
            Granularity::Week => self.start.iso_week().week(),
            Granularity::Month => self.start.month(),
            Granularity::Quarter => self.start.month0() / 3 + 1,
        }
    }

    /// The bin at the same calendar position in `year`.
    ///
    /// ISO week 53 maps onto week 52 when `year` has only 52 weeks.
    pub fn at_year(&self, year: i32) -> Option<TimeBin> {
        let start = match self.granularity {
            Granularity::Week => {
                let mut week = self.position();
                if week == 53 && !has_week_53(year) {
                    week = 52;
                }
                NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)?
            }
            Granularity::Month => NaiveDate::from_ymd_opt(year, self.position(), 1)?,
            Granularity::Quarter => NaiveDate::from_ymd_opt(year, self.start.month(), 1)?,
        };
        Some(TimeBin::containing(start, self.granularity))
    }
}

fn has_week_53(year: i32) -> bool {
    NaiveDate::from_isoywd_opt(year, 53, Weekday::Mon).is_some()
}

impl fmt::Display for TimeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)
    }
}

/// Inclusive date range `first..=last`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl DateRange {
    pub fn new(first: NaiveDate, last: NaiveDate) -> Result<Self> {
        if last < first {
            return Err(Error::InvalidParameter(format!(
                "date range ends ({last}) before it starts ({first})"
            )));
        }
        Ok(DateRange { first, last })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.first <= date && date <= self.last
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

/// Parses `YYYY-MM-DD..YYYY-MM-DD`. Either side may be a bare `YYYY-MM`, which
/// expands to the first (left) or last (right) day of that month. A single
/// month or day without `..` is a range covering just that period.
impl FromStr for DateRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (left, right) = s.split_once("..").unwrap_or((s, s));
        let first = parse_day_or_month(left, false)?;
        let last = parse_day_or_month(right, true)?;
        DateRange::new(first, last)
    }
}

/// Parses a day (`YYYY-MM-DD`) or a month (`YYYY-MM`). For a month, returns
/// its first day or, with `end_of_month`, its last day.
pub fn parse_day_or_month(s: &str, end_of_month: bool) -> Result<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    let bad = || Error::InvalidParameter(format!("cannot parse date `{s}`"));
    let (y, m) = s.split_once('-').ok_or_else(bad)?;
    let y: i32 = y.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    let start = NaiveDate::from_ymd_opt(y, m, 1).ok_or_else(bad)?;
    if end_of_month {
        Ok(start + Months::new(1) - Days::new(1))
    } else {
        Ok(start)
    }
}
