//! File-to-distribution loading in two streaming passes.
//!
//! The first pass collects the item table (first title and creator seen per
//! item key) and canonicalizes it; the second pass aggregates loans into
//! per-bin counts. Events are never held in memory together.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::canon::{canonicalize, CanonConfig, CanonicalCatalog, ItemRecord};
use crate::error::Result;
use crate::ledger::{CohortFilter, EventReader, Granularity, IngestOptions, IngestReport};
use crate::popularity::{Aggregation, Aggregator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub ingest: IngestOptions,
    pub granularity: Granularity,
    pub cohort: CohortFilter,
    /// `None` counts every item key as its own canonical item.
    pub canon: Option<CanonConfig>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            ingest: IngestOptions::default(),
            granularity: Granularity::Month,
            cohort: CohortFilter::default(),
            canon: Some(CanonConfig::default()),
        }
    }
}

pub struct Loaded {
    pub catalog: CanonicalCatalog,
    pub aggregation: Aggregation,
    pub ingest: IngestReport,
}

/// Distinct item keys of accepted events with their first title and creator,
/// in order of first appearance.
pub fn scan_items(paths: &[PathBuf], options: &IngestOptions) -> Result<(Vec<ItemRecord>, IngestReport)> {
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for path in paths {
        let mut reader = EventReader::open(path, options.clone())?;
        for event in reader.by_ref() {
            let event = event?;
            if seen.contains_key(&event.item_key) {
                continue;
            }
            seen.insert(event.item_key.clone(), ());
            records.push(ItemRecord {
                item_key: event.item_key,
                title: event.title,
                creator: event.creator,
            });
        }
        report.merge(reader.report());
    }
    Ok((records, report))
}

/// Aggregates `paths` into per-bin distributions of canonical items.
pub fn load(paths: &[PathBuf], options: &LoadOptions) -> Result<Loaded> {
    let (records, ingest) = scan_items(paths, &options.ingest)?;
    let catalog = match options.canon {
        Some(config) => canonicalize(&records, config),
        None => CanonicalCatalog::identity(records.iter().map(|r| r.item_key.as_str())),
    };
    drop(records);
    log::info!(
        "{} accepted events, {} item keys, {} canonical items",
        ingest.accepted,
        catalog.n_items(),
        catalog.n_groups()
    );
    let mut agg = Aggregator::new(options.granularity, options.cohort.clone(), Some(&catalog));
    for path in paths {
        for event in EventReader::open(path, options.ingest.clone())? {
            agg.push(&event?);
        }
    }
    let aggregation = agg.finish();
    Ok(Loaded {
        catalog,
        aggregation,
        ingest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::DateRange;
    use std::io::Write;

    const HEADER: &str = "loan_date,item_key,title,creator,category,medium,loaner_id,birthdate,sex,education,residence";

    fn write(dir: &tempfile::TempDir, name: &str, rows: &[&str]) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{HEADER}").unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
        path
    }

    #[test]
    fn variants_are_counted_together() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "a.csv",
            &[
                "2021-05-03,f2,Ternet Ninja,Anders Matthesen,children,physical,l1,,,,",
                "2021-05-04,f1,Ternet Ninja 1,Anders Matthesen,children,ebook,l2,,,,",
                "2021-05-09,x9,Other Book,Someone,adult_fiction,physical,l1,,,,",
                "2021-06-01,f2,Ternet Ninja,Anders Matthesen,children,physical,l3,,,,",
            ],
        );
        let loaded = load(std::slice::from_ref(&path), &LoadOptions::default()).unwrap();
        let agg = &loaded.aggregation;
        assert_eq!(agg.dists.len(), 2);
        let f1 = agg.vocab.id("f1").unwrap();
        assert_eq!(agg.dists[0].count_of(f1), 2);
        assert_eq!(agg.dists[1].count_of(f1), 1);
        assert!(agg.vocab.id("f2").is_none());
        assert_eq!(loaded.ingest.accepted, 4);

        let raw = load(&[path], &LoadOptions { canon: None, ..LoadOptions::default() }).unwrap();
        assert_eq!(raw.aggregation.vocab.len(), 3);
    }

    #[test]
    fn files_combine_and_window_applies() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(&dir, "a.csv", &["2021-05-03,k1,A,X,,,l1,,,,", "2022-01-03,k1,A,X,,,l1,,,,"]);
        let b = write(&dir, "b.csv", &["2021-05-20,k2,Bee,Y,,,l2,,,,"]);
        let options = LoadOptions {
            ingest: IngestOptions {
                window: Some("2021-01..2021-12".parse::<DateRange>().unwrap()),
                ..IngestOptions::default()
            },
            ..LoadOptions::default()
        };
        let loaded = load(&[a, b], &options).unwrap();
        assert_eq!(loaded.ingest.out_of_window, 1);
        assert_eq!(loaded.aggregation.dists.len(), 1);
        assert_eq!(loaded.aggregation.dists[0].total(), 2);
    }
}
