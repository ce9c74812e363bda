use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Category, DateRange, Education, LoanEvent, Medium, Residence, Sex};
use crate::error::{Error, Result};

/// Default fraction of malformed rows tolerated before ingestion aborts.
pub const DEFAULT_MAX_MALFORMED: f64 = 0.01;

/// Header names of the columns holding each event field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub date: String,
    pub item_key: String,
    pub title: String,
    pub creator: String,
    pub category: String,
    pub medium: String,
    pub loaner_id: String,
    pub birthdate: String,
    pub sex: String,
    pub education: String,
    pub residence: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            date: "loan_date".into(),
            item_key: "item_key".into(),
            title: "title".into(),
            creator: "creator".into(),
            category: "category".into(),
            medium: "medium".into(),
            loaner_id: "loaner_id".into(),
            birthdate: "birthdate".into(),
            sex: "sex".into(),
            education: "education".into(),
            residence: "residence".into(),
        }
    }
}

impl Schema {
    /// Column names in the order the default event-log writer emits them.
    pub fn header(&self) -> [&str; 11] {
        [
            &self.date,
            &self.item_key,
            &self.title,
            &self.creator,
            &self.category,
            &self.medium,
            &self.loaner_id,
            &self.birthdate,
            &self.sex,
            &self.education,
            &self.residence,
        ]
    }

    fn resolve(&self, header: &csv::StringRecord, path: &Path) -> Result<Columns> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
        };
        Ok(Columns {
            date: required(&self.date)?,
            item_key: required(&self.item_key)?,
            title: required(&self.title)?,
            loaner_id: required(&self.loaner_id)?,
            creator: find(&self.creator),
            category: find(&self.category),
            medium: find(&self.medium),
            birthdate: find(&self.birthdate),
            sex: find(&self.sex),
            education: find(&self.education),
            residence: find(&self.residence),
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Columns {
    date: usize,
    item_key: usize,
    title: usize,
    loaner_id: usize,
    creator: Option<usize>,
    category: Option<usize>,
    medium: Option<usize>,
    birthdate: Option<usize>,
    sex: Option<usize>,
    education: Option<usize>,
    residence: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub schema: Schema,
    /// Events outside this range are skipped.
    pub window: Option<DateRange>,
    /// Date ranges dropped from analysis, e.g. library closures.
    pub exclusions: Vec<DateRange>,
    /// Abort when more than this fraction of rows is malformed.
    pub max_malformed: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            schema: Schema::default(),
            window: None,
            exclusions: Vec::new(),
            max_malformed: DEFAULT_MAX_MALFORMED,
        }
    }
}

/// Row tallies from one ingestion pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: u64,
    pub accepted: u64,
    pub out_of_window: u64,
    pub excluded: u64,
    pub malformed: u64,
    /// Accepted rows carrying at least one value outside its closed set.
    pub flagged: u64,
    pub first_malformed: Option<String>,
}

impl IngestReport {
    pub fn merge(&mut self, other: &IngestReport) {
        self.rows += other.rows;
        self.accepted += other.accepted;
        self.out_of_window += other.out_of_window;
        self.excluded += other.excluded;
        self.malformed += other.malformed;
        self.flagged += other.flagged;
        if self.first_malformed.is_none() {
            self.first_malformed.clone_from(&other.first_malformed);
        }
    }
}

enum Row {
    Accepted(LoanEvent),
    OutOfWindow,
    Excluded,
}

/// Streaming reader over an event log. Yields accepted events in file order.
///
/// The malformed-row limit is checked once the input is exhausted: the final
/// item is an error when the limit was exceeded.
pub struct EventReader<R: Read> {
    path: PathBuf,
    reader: csv::Reader<R>,
    columns: Columns,
    options: IngestOptions,
    record: csv::StringRecord,
    report: IngestReport,
    done: bool,
}

impl EventReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, options: IngestOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        EventReader::from_reader(BufReader::with_capacity(1 << 20, file), path, options)
    }
}

impl<R: Read> EventReader<R> {
    pub fn from_reader(reader: R, path: impl Into<PathBuf>, options: IngestOptions) -> Result<Self> {
        let path = path.into();
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(true)
            .from_reader(reader);
        let header = reader.headers().map_err(|e| Error::csv(&path, e))?.clone();
        let columns = options.schema.resolve(&header, &path)?;
        Ok(EventReader {
            path,
            reader,
            columns,
            options,
            record: csv::StringRecord::new(),
            report: IngestReport::default(),
            done: false,
        })
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    fn parse_row(&self) -> std::result::Result<(Row, bool), String> {
        let rec = &self.record;
        let c = &self.columns;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let opt = |i: Option<usize>| i.map_or("", field);

        let date_raw = field(c.date);
        let date = parse_date(date_raw).ok_or_else(|| format!("bad date `{date_raw}`"))?;
        let item_key = field(c.item_key);
        if item_key.is_empty() {
            return Err("missing item_key".into());
        }
        let title = field(c.title);
        if title.is_empty() {
            return Err("missing title".into());
        }
        let loaner_id = field(c.loaner_id);
        if loaner_id.is_empty() {
            return Err("missing loaner_id".into());
        }
        let birthdate = match opt(c.birthdate) {
            "" => None,
            raw => {
                let b = parse_date(raw).ok_or_else(|| format!("bad birthdate `{raw}`"))?;
                if b > date {
                    return Err(format!("birthdate {b} after loan date {date}"));
                }
                Some(b)
            }
        };

        if self.options.window.is_some_and(|w| !w.contains(date)) {
            return Ok((Row::OutOfWindow, false));
        }
        if self.options.exclusions.iter().any(|r| r.contains(date)) {
            return Ok((Row::Excluded, false));
        }

        let (category, ok_cat) = Category::parse(opt(c.category));
        let (medium, ok_med) = Medium::parse(opt(c.medium));
        let (sex, ok_sex) = Sex::parse(opt(c.sex));
        let (education, ok_edu) = Education::parse(opt(c.education));
        let (residence, ok_res) = Residence::parse(opt(c.residence));
        let flagged = !(ok_cat && ok_med && ok_sex && ok_edu && ok_res);

        let event = LoanEvent {
            date,
            item_key: item_key.to_string(),
            title: title.to_string(),
            creator: opt(c.creator).to_string(),
            category,
            medium,
            loaner_id: loaner_id.to_string(),
            birthdate,
            sex,
            education,
            residence,
        };
        Ok((Row::Accepted(event), flagged))
    }

    fn note_malformed(&mut self, why: String) {
        self.report.malformed += 1;
        if self.report.first_malformed.is_none() {
            // Data rows are numbered from 1, excluding the header.
            let line = self.report.rows + 1;
            self.report.first_malformed = Some(format!("row {line}: {why}"));
        }
    }

    fn finish(&mut self) -> Option<Result<LoanEvent>> {
        self.done = true;
        let r = &self.report;
        if r.rows > 0 && r.malformed as f64 > self.options.max_malformed * r.rows as f64 {
            return Some(Err(Error::TooManyMalformed {
                path: self.path.clone(),
                rows: r.rows,
                malformed: r.malformed,
                limit: self.options.max_malformed,
                first: r.first_malformed.clone().unwrap_or_default(),
            }));
        }
        None
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Result<LoanEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => return self.finish(),
                Ok(true) => {
                    let parsed = self.parse_row();
                    if let Err(why) = &parsed {
                        self.note_malformed(why.clone());
                    }
                    self.report.rows += 1;
                    match parsed {
                        Ok((Row::Accepted(event), flagged)) => {
                            self.report.accepted += 1;
                            self.report.flagged += u64::from(flagged);
                            return Some(Ok(event));
                        }
                        Ok((Row::OutOfWindow, _)) => self.report.out_of_window += 1,
                        Ok((Row::Excluded, _)) => self.report.excluded += 1,
                        Err(_) => {}
                    }
                }
                Err(e) if e.is_io_error() => {
                    self.done = true;
                    return Some(Err(Error::csv(&self.path, e)));
                }
                Err(e) => {
                    self.note_malformed(e.to_string());
                    self.report.rows += 1;
                }
            }
        }
    }
}

/// Reads a whole event log into memory.
pub fn ingest(path: impl AsRef<Path>, options: IngestOptions) -> Result<(Vec<LoanEvent>, IngestReport)> {
    let mut reader = EventReader::open(path, options)?;
    let events = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((events, reader.report.clone()))
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() == 10 && b[4] == b'-' && b[7] == b'-' {
        let num = |r: std::ops::Range<usize>| -> Option<u32> {
            b[r].iter().try_fold(0u32, |acc, &c| {
                c.is_ascii_digit().then(|| acc * 10 + (c - b'0') as u32)
            })
        };
        return NaiveDate::from_ymd_opt(num(0..4)? as i32, num(5..7)?, num(8..10)?);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}
