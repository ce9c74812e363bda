//! Loan events, calendar bins, cohort filters and event-log ingestion.

mod bins;
mod cohort;
mod ingest;

pub use bins::{parse_day_or_month, DateRange, Granularity, TimeBin};
pub use cohort::{default_age_bins, AgeBin, CohortCheck, CohortFilter};
pub use ingest::{ingest, EventReader, IngestOptions, IngestReport, Schema, DEFAULT_MAX_MALFORMED};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Declares a closed vocabulary with a fallback member for unrecognized or
/// empty input. `parse` reports whether the input was recognized; empty input
/// counts as recognized.
macro_rules! closed_set {
    ($(#[$meta:meta])* $name:ident, fallback = $fallback:ident, { $($variant:ident => $canon:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $canon),+
                }
            }

            pub fn parse(raw: &str) -> (Self, bool) {
                let key = raw.trim().to_ascii_lowercase().replace([' ', '-'], "_");
                match key.as_str() {
                    "" => ($name::$fallback, true),
                    $($canon $(| $alias)* => ($name::$variant, true),)+
                    _ => ($name::$fallback, false),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = crate::error::Error;

            fn from_str(s: &str) -> crate::error::Result<Self> {
                match $name::parse(s) {
                    (v, true) if !s.trim().is_empty() => Ok(v),
                    _ => Err(crate::error::Error::InvalidParameter(format!(
                        "unknown {} `{}`", stringify!($name).to_ascii_lowercase(), s
                    ))),
                }
            }
        }
    };
}

closed_set!(
    /// Item category.
    Category, fallback = Other, {
        AdultFiction => "adult_fiction" | "fiction",
        AdultNonfiction => "adult_nonfiction" | "nonfiction" | "non_fiction" | "adult_non_fiction",
        Children => "children" | "childrens" | "children_s",
        Other => "other",
    }
);

closed_set!(Medium, fallback = Other, {
    Physical => "physical" | "book",
    Ebook => "ebook" | "e_book",
    Audiobook => "audiobook" | "audio_book" | "audio",
    Other => "other",
});

closed_set!(Sex, fallback = Unknown, {
    Female => "female" | "f",
    Male => "male" | "m",
    Unknown => "unknown",
});

closed_set!(Education, fallback = Unknown, {
    Basic => "basic",
    UpperSecondary => "upper_secondary",
    Higher => "higher",
    Unknown => "unknown",
});

closed_set!(Residence, fallback = Unknown, {
    LargeCity => "large_city",
    TownRural => "town_rural",
    Unknown => "unknown",
});

/// One loan. Demographics are a snapshot taken at loan time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanEvent {
    pub date: NaiveDate,
    pub item_key: String,
    pub title: String,
    pub creator: String,
    pub category: Category,
    pub medium: Medium,
    pub loaner_id: String,
    pub birthdate: Option<NaiveDate>,
    pub sex: Sex,
    pub education: Education,
    pub residence: Residence,
}

impl LoanEvent {
    /// Age in whole years on the loan date, if the birthdate is known.
    pub fn age(&self) -> Option<u32> {
        self.birthdate.map(|b| whole_years(b, self.date))
    }
}

/// Completed years between `birth` and `on`. Zero if `on` precedes `birth`.
pub fn whole_years(birth: NaiveDate, on: NaiveDate) -> u32 {
    if on < birth {
        return 0;
    }
    let mut years = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    years as u32
}
