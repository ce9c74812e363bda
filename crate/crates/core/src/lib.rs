//! Drift in collective attention, measured from item-consumption event logs.
//!
//! The crate covers the whole path from raw loan records to drift figures:
//!
//! * [`ledger`]: event model, calendar bins, cohorts and CSV ingestion.
//! * [`canon`]: merging edition and medium variants into canonical items.
//! * [`popularity`]: sparse per-bin counts, normalization, top-k restriction.
//! * [`divergence`]: JSD with per-item decomposition, Tsallis-generalized JSD, Jaccard distance.
//! * [`estimators`]: plug-in and bootstrap bias-corrected estimation.
//! * [`driftscan`]: local and global drift series, drift matrices, contribution groups.
//! * [`forecast`]: seasonal-naive drift prediction.
//! * [`synthmarket`]: seeded synthetic markets with exact ground truth.
//! * [`pipeline`]: streaming two-pass file-to-distribution loading.

pub mod canon;
pub mod divergence;
pub mod driftscan;
pub mod error;
pub mod estimators;
pub mod forecast;
pub mod ledger;
pub mod numeric;
pub mod pipeline;
pub mod popularity;
pub mod sampling;
pub mod synthmarket;

pub use canon::{canonicalize, CanonConfig, CanonicalCatalog, ItemRecord};
pub use divergence::{jsd, jsd_with_contributions, ContributionBreakdown, DriftValue, Measure};
pub use driftscan::{DriftMatrix, DriftSeries, SeriesKind};
pub use error::{Error, Result};
pub use estimators::{BootstrapEstimate, Estimator};
pub use ledger::{CohortFilter, DateRange, Granularity, LoanEvent, TimeBin};
pub use popularity::{ItemId, PopularityDistribution, RelativeDistribution, Vocabulary};
pub use synthmarket::{GroundTruth, SynthMarket, SynthMarketSpec};
