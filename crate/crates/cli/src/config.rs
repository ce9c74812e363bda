//! Run configuration: TOML file values overridden by flags, validated into
//! typed job options before anything is computed.

use std::path::{Path, PathBuf};

use driftlens::canon::{CanonConfig, DEFAULT_MAX_EDIT, DEFAULT_WINDOW};
use driftlens::estimators::DEFAULT_RESAMPLES;
use driftlens::ledger::{
    parse_day_or_month, AgeBin, Category, DateRange, Education, IngestOptions, Residence, Schema, Sex,
    DEFAULT_MAX_MALFORMED,
};
use driftlens::pipeline::LoadOptions;
use driftlens::{CohortFilter, Estimator, Granularity, Measure, TimeBin};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_TOP_K: usize = 10_000;
pub const DEFAULT_OUT_DIR: &str = "driftlens-out";

/// Every option of an analysis run. Written verbatim into `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub granularity: Granularity,
    /// Inclusive analysis window, `YYYY-MM[-DD]..YYYY-MM[-DD]`.
    pub window: Option<String>,
    /// Date ranges dropped from the analysis, same syntax as `window`.
    pub exclude: Vec<String>,
    pub age: Option<String>,
    pub sex: Option<String>,
    pub education: Option<String>,
    pub residence: Option<String>,
    pub categories: Vec<String>,
    pub canonicalize: bool,
    pub canon_window: usize,
    pub max_edit: usize,
    pub max_malformed: f64,
    /// `jsd`, `alpha` or `jaccard`.
    pub measure: String,
    pub alpha: Option<f64>,
    /// `plugin` or `bootstrap`.
    pub estimator: String,
    pub resamples: usize,
    pub seed: u64,
    /// Items kept for drift estimates; 0 keeps all.
    pub top_k: usize,
    pub baseline: Option<String>,
    pub dump_distributions: bool,
    pub dump_rank_frequency: bool,
    pub schema: Schema,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            granularity: Granularity::Month,
            window: None,
            exclude: Vec::new(),
            age: None,
            sex: None,
            education: None,
            residence: None,
            categories: Vec::new(),
            canonicalize: true,
            canon_window: DEFAULT_WINDOW,
            max_edit: DEFAULT_MAX_EDIT,
            max_malformed: DEFAULT_MAX_MALFORMED,
            measure: "jsd".into(),
            alpha: None,
            estimator: "plugin".into(),
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            top_k: DEFAULT_TOP_K,
            baseline: None,
            dump_distributions: false,
            dump_rank_frequency: false,
            schema: Schema::default(),
        }
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// Typed options derived from a validated [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Job {
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub load: LoadOptions,
    pub measure: Measure,
    pub estimator: Estimator,
    pub top_k: Option<usize>,
}

impl RunConfig {
    pub fn cohort(&self) -> Result<CohortFilter, CliError> {
        Ok(CohortFilter {
            age: self.age.as_deref().map(str::parse::<AgeBin>).transpose().map_err(usage)?,
            sex: self.sex.as_deref().map(str::parse::<Sex>).transpose().map_err(usage)?,
            education: self.education.as_deref().map(str::parse::<Education>).transpose().map_err(usage)?,
            residence: self.residence.as_deref().map(str::parse::<Residence>).transpose().map_err(usage)?,
            categories: if self.categories.is_empty() {
                None
            } else {
                Some(
                    self.categories
                        .iter()
                        .map(|c| c.parse::<Category>())
                        .collect::<Result<_, _>>()
                        .map_err(usage)?,
                )
            },
        })
    }

    pub fn measure(&self) -> Result<Measure, CliError> {
        match (self.measure.as_str(), self.alpha) {
            ("alpha", Some(alpha)) if alpha.is_finite() && alpha >= 0.0 => Ok(Measure::JsdAlphaNorm { alpha }),
            ("alpha", Some(alpha)) => Err(usage(format!("alpha must be a finite number >= 0, got {alpha}"))),
            ("alpha", None) => Err(usage("--measure alpha needs --alpha")),
            (_, Some(_)) => Err(usage(format!("--alpha conflicts with --measure {}", self.measure))),
            (m, None) if m.starts_with("alpha") => Err(usage("use --measure alpha --alpha <value>")),
            (m, None) => m.parse().map_err(usage),
        }
    }

    pub fn estimator(&self) -> Result<Estimator, CliError> {
        match self.estimator.as_str() {
            "plugin" => Ok(Estimator::Plugin),
            "bootstrap" if self.resamples >= 2 => Ok(Estimator::Bootstrap {
                resamples: self.resamples,
                seed: self.seed,
            }),
            "bootstrap" => Err(usage("bootstrap needs --resamples >= 2")),
            other => Err(usage(format!("unknown estimator `{other}` (expected plugin or bootstrap)"))),
        }
    }

    pub fn baseline_bin(&self) -> Result<Option<TimeBin>, CliError> {
        self.baseline
            .as_deref()
            .map(|s| parse_bin(s, self.granularity))
            .transpose()
    }

    pub fn job(&self) -> Result<Job, CliError> {
        if self.inputs.is_empty() {
            return Err(usage("no input files (use --input or `inputs` in the config)"));
        }
        if !(0.0..=1.0).contains(&self.max_malformed) {
            return Err(usage(format!("max_malformed {} must lie in [0, 1]", self.max_malformed)));
        }
        let window = self.window.as_deref().map(str::parse::<DateRange>).transpose().map_err(usage)?;
        let exclusions = self
            .exclude
            .iter()
            .map(|s| s.parse::<DateRange>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(usage)?;
        let load = LoadOptions {
            ingest: IngestOptions {
                schema: self.schema.clone(),
                window,
                exclusions,
                max_malformed: self.max_malformed,
            },
            granularity: self.granularity,
            cohort: self.cohort()?,
            canon: self.canonicalize.then_some(CanonConfig {
                window: self.canon_window,
                max_edit: self.max_edit,
            }),
        };
        self.baseline_bin()?;
        Ok(Job {
            inputs: self.inputs.clone(),
            out_dir: self.out_dir.clone(),
            load,
            measure: self.measure()?,
            estimator: self.estimator()?,
            top_k: (self.top_k > 0).then_some(self.top_k),
        })
    }
}

/// The bin of `granularity` containing a `YYYY-MM` or `YYYY-MM-DD` date.
pub fn parse_bin(s: &str, granularity: Granularity) -> Result<TimeBin, CliError> {
    let date = parse_day_or_month(s, false).map_err(usage)?;
    Ok(TimeBin::containing(date, granularity))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg: RunConfig = toml::from_str(
            r#"
            inputs = ["a.csv"]
            granularity = "week"
            window = "2021-01..2022-12"
            exclude = ["2021-03..2021-04"]
            age = "30-46"
            sex = "female"
            measure = "alpha"
            alpha = 0.5
            estimator = "bootstrap"
            resamples = 50
            top_k = 0

            [schema]
            date = "dato"
            "#,
        )
        .unwrap();
        let job = cfg.job().unwrap();
        assert_eq!(job.measure, Measure::JsdAlphaNorm { alpha: 0.5 });
        assert_eq!(job.estimator, Estimator::Bootstrap { resamples: 50, seed: 0 });
        assert_eq!(job.top_k, None);
        assert_eq!(job.load.ingest.schema.date, "dato");
        assert_eq!(job.load.ingest.exclusions.len(), 1);
        assert_eq!(job.load.cohort.label(), "age=30-46,sex=female");
        let again: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn conflicting_options() {
        let base = RunConfig {
            inputs: vec!["x.csv".into()],
            ..RunConfig::default()
        };
        assert!(base.job().is_ok());
        assert!(RunConfig { alpha: Some(0.5), ..base.clone() }.job().is_err());
        assert!(RunConfig { measure: "alpha".into(), ..base.clone() }.job().is_err());
        assert!(RunConfig { estimator: "magic".into(), ..base.clone() }.job().is_err());
        assert!(RunConfig { sex: Some("x".into()), ..base.clone() }.job().is_err());
        assert!(RunConfig { baseline: Some("2021-13".into()), ..base.clone() }.job().is_err());
        assert!(RunConfig { inputs: vec![], ..base }.job().is_err());
    }
}
