use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Category, Education, LoanEvent, Residence, Sex};
use crate::error::{Error, Result};

/// Half-open age range in whole years; `max = None` is open-ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgeBin {
    pub min: u32,
    pub max: Option<u32>,
}

impl AgeBin {
    pub fn new(min: u32, max: Option<u32>) -> Result<Self> {
        if let Some(max) = max {
            if max <= min {
                return Err(Error::InvalidParameter(format!(
                    "empty age bin [{min}, {max})"
                )));
            }
        }
        Ok(AgeBin { min, max })
    }

    pub fn contains(&self, age: u32) -> bool {
        age >= self.min && self.max.is_none_or(|m| age < m)
    }
}

/// `[0,18) [18,30) [30,46) [46,65) [65,inf)`.
pub fn default_age_bins() -> Vec<AgeBin> {
    [(0, Some(18)), (18, Some(30)), (30, Some(46)), (46, Some(65)), (65, None)]
        .into_iter()
        .map(|(min, max)| AgeBin { min, max })
        .collect()
}

impl fmt::Display for AgeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.max {
            Some(max) => write!(f, "{}-{}", self.min, max),
            None => write!(f, "{}+", self.min),
        }
    }
}

/// Parses `30-46` (meaning `[30, 46)`), `65+` or `65-`.
impl FromStr for AgeBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("cannot parse age bin `{s}`"));
        let (lo, hi) = if let Some(lo) = s.strip_suffix('+') {
            (lo, "")
        } else {
            s.split_once('-').ok_or_else(bad)?
        };
        let min = lo.trim().parse().map_err(|_| bad())?;
        let max = match hi.trim() {
            "" => None,
            hi => Some(hi.parse().map_err(|_| bad())?),
        };
        AgeBin::new(min, max)
    }
}

/// Conjunction of optional demographic and category constraints.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortFilter {
    pub age: Option<AgeBin>,
    pub sex: Option<Sex>,
    pub education: Option<Education>,
    pub residence: Option<Residence>,
    pub categories: Option<Vec<Category>>,
}

/// Outcome of testing an event against a filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CohortCheck {
    Match,
    NoMatch,
    /// The filter constrains age but the event has no birthdate.
    MissingBirthdate,
}

impl CohortFilter {
    pub fn is_empty(&self) -> bool {
        self == &CohortFilter::default()
    }

    pub fn check(&self, event: &LoanEvent) -> CohortCheck {
        let fixed = self.sex.is_none_or(|s| s == event.sex)
            && self.education.is_none_or(|e| e == event.education)
            && self.residence.is_none_or(|r| r == event.residence)
            && self
                .categories
                .as_ref()
                .is_none_or(|cs| cs.contains(&event.category));
        if !fixed {
            return CohortCheck::NoMatch;
        }
        match self.age {
            None => CohortCheck::Match,
            Some(bin) => match event.age() {
                None => CohortCheck::MissingBirthdate,
                Some(age) if bin.contains(age) => CohortCheck::Match,
                Some(_) => CohortCheck::NoMatch,
            },
        }
    }

    pub fn matches(&self, event: &LoanEvent) -> bool {
        self.check(event) == CohortCheck::Match
    }

    /// Short stable descriptor, `all` for the empty filter.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(age) = self.age {
            parts.push(format!("age={age}"));
        }
        if let Some(sex) = self.sex {
            parts.push(format!("sex={sex}"));
        }
        if let Some(e) = self.education {
            parts.push(format!("education={e}"));
        }
        if let Some(r) = self.residence {
            parts.push(format!("residence={r}"));
        }
        if let Some(cs) = &self.categories {
            let names: Vec<_> = cs.iter().map(|c| c.as_str()).collect();
            parts.push(format!("category={}", names.join("+")));
        }
        if parts.is_empty() {
            "all".to_string()
        } else {
            parts.join(",")
        }
    }
}
