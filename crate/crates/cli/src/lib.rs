//! The `driftlens` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, conflicting
//! options, unusable output directory), 2 on data errors (unreadable or
//! malformed input, missing bins).

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftlens::canon::{canonicalize, CanonConfig, ItemRecord};
use driftlens::driftscan::{
    drift_matrix, global_drift, group_schedule, local_drift, trajectory_panel, transition_matrix, DriftSeries,
    TrajectorySelector, N_GROUPS,
};
use driftlens::forecast::{seasonal_forecast, ForecastKind, ForecastReport};
use driftlens::ledger::{EventReader, IngestReport};
use driftlens::pipeline::{load, Loaded};
use driftlens::popularity::{restrict_top_k, AggregateReport};
use driftlens::{Granularity, PopularityDistribution, SynthMarket, SynthMarketSpec, TimeBin};
use serde::Serialize;

use config::{parse_bin, read_config, Job, RunConfig};
use output::{close, fmt_f64, fmt_opt, row, OutDir};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<driftlens::Error> for CliError {
    fn from(e: driftlens::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "driftlens",
    version,
    about = "Measure, decompose and forecast drift in collective attention from loan event logs",
    after_help = "Defaults: monthly bins, JSD in bits, top-k 10000 items, 500 bootstrap resamples, \
                  canonicalization window 10 with edit distance 1."
)]
pub struct Cli {
    /// TOML config file with run options; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate event logs and report accepted, out-of-window and malformed rows.
    IngestCheck(DataFlags),
    /// Map item keys to canonical items.
    Canon(CanonArgs),
    /// Local, global or pairwise drift.
    Drift {
        #[command(subcommand)]
        view: DriftView,
    },
    /// Per-item contributions and contribution-group shares of consecutive bins.
    Contrib(DataFlags),
    /// Average transition probabilities between contribution groups.
    Transitions(DataFlags),
    /// Per-bin loan counts of selected items, ordered by peak bin.
    Trajectories(TrajectoryArgs),
    /// Seasonal-naive drift forecast scored against observed drift.
    Predict(PredictArgs),
    /// Generate a synthetic event log with its exact ground truth.
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug)]
enum DriftView {
    /// Each bin against the preceding bin.
    Local(AnalysisFlags),
    /// Each bin against a baseline bin.
    Global(GlobalArgs),
    /// All pairs of bins.
    Matrix(AnalysisFlags),
}

#[derive(Args, Debug, Clone, Default)]
struct DataFlags {
    /// Event-log CSV file; repeat for several files.
    #[arg(short, long = "input", value_name = "FILE")]
    inputs: Vec<PathBuf>,
    /// Output directory [default: driftlens-out].
    #[arg(short, long = "out", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Bin size: week, month or quarter [default: month].
    #[arg(long)]
    granularity: Option<Granularity>,
    /// Analysis window, e.g. 2021-01..2023-12.
    #[arg(long, value_name = "RANGE")]
    window: Option<String>,
    /// Date range to drop, e.g. 2021-03-01..2021-04-15; repeatable.
    #[arg(long, value_name = "RANGE")]
    exclude: Vec<String>,
    /// Age bin at loan time, e.g. 30-46 or 65+.
    #[arg(long)]
    age: Option<String>,
    /// female, male or unknown.
    #[arg(long)]
    sex: Option<String>,
    /// basic, upper_secondary, higher or unknown.
    #[arg(long)]
    education: Option<String>,
    /// large_city, town_rural or unknown.
    #[arg(long)]
    residence: Option<String>,
    /// Item category to keep; repeatable.
    #[arg(long = "category")]
    categories: Vec<String>,
    /// Count every item key as its own item.
    #[arg(long)]
    no_canon: bool,
    /// Canonicalization comparison window [default: 10].
    #[arg(long)]
    canon_window: Option<usize>,
    /// Canonicalization edit-distance limit per field [default: 1].
    #[arg(long)]
    max_edit: Option<usize>,
    /// Abort above this fraction of malformed rows [default: 0.01].
    #[arg(long)]
    max_malformed: Option<f64>,
    /// Also write distributions.csv (bin_start,canonical_id,count).
    #[arg(long)]
    dump_distributions: bool,
    /// Also write rank_frequency.csv (bin_start,rank,count,ccdf).
    #[arg(long)]
    dump_rank_frequency: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct EstimateFlags {
    /// jsd (bits), alpha (normalized Tsallis JSD, needs --alpha) or jaccard [default: jsd].
    #[arg(long)]
    measure: Option<String>,
    /// Order of the normalized Tsallis JSD.
    #[arg(long)]
    alpha: Option<f64>,
    /// plugin or bootstrap [default: plugin].
    #[arg(long)]
    estimator: Option<String>,
    /// Bootstrap resamples [default: 500].
    #[arg(long)]
    resamples: Option<usize>,
    /// Root seed for all randomness [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the k most loaned items over the whole window; 0 keeps all [default: 10000].
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct AnalysisFlags {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    estimate: EstimateFlags,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    #[command(flatten)]
    analysis: AnalysisFlags,
    /// Baseline bin, e.g. 2021-05 [default: first bin].
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
#[allow(clippy::enum_variant_names)]
enum Select {
    TopGlobalContrib,
    TopTotal,
    TopPeak,
}

#[derive(Args, Debug, Clone)]
struct TrajectoryArgs {
    #[command(flatten)]
    data: DataFlags,
    /// How items are selected.
    #[arg(long, value_enum, default_value = "top-total")]
    select: Select,
    /// Number of items.
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Baseline bin for top-global-contrib [default: first bin].
    #[arg(long)]
    baseline: Option<String>,
    /// Compared bin for top-global-contrib [default: last bin].
    #[arg(long)]
    at: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PredictKind {
    Local,
    Global,
    Both,
}

#[derive(Args, Debug, Clone)]
struct PredictArgs {
    #[command(flatten)]
    analysis: AnalysisFlags,
    /// Which drift series to forecast.
    #[arg(long, value_enum, default_value = "both")]
    kind: PredictKind,
    /// Year to predict from the year before [default: last year in the data].
    #[arg(long)]
    target_year: Option<i32>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CanonArgs {
    /// Item table CSV with columns item_key,title,creator.
    #[arg(long, value_name = "FILE")]
    items: PathBuf,
    /// Output directory [default: driftlens-out].
    #[arg(short, long = "out", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Succeeding rows each row is compared with.
    #[arg(long, default_value_t = driftlens::canon::DEFAULT_WINDOW)]
    window: usize,
    /// Largest edit distance per field (title and creator).
    #[arg(long, default_value_t = driftlens::canon::DEFAULT_MAX_EDIT)]
    max_edit: usize,
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    /// TOML file with market parameters; flags override it.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Output directory [default: driftlens-out].
    #[arg(short, long = "out", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Items at any time [default: 50000].
    #[arg(long)]
    catalog_size: Option<u32>,
    /// Zipf exponent of the rank weights [default: 1.0].
    #[arg(long)]
    zipf: Option<f64>,
    /// Fraction of ranks handed to new items per bin [default: 0.05].
    #[arg(long)]
    churn: Option<f64>,
    /// Fraction of ranks held by seasonal items [default: 0.01].
    #[arg(long)]
    seasonal_fraction: Option<f64>,
    /// Weight multiplier of seasonal items in active months [default: 3].
    #[arg(long)]
    gamma: Option<f64>,
    /// Active months, comma separated [default: 11,12].
    #[arg(long, value_delimiter = ',')]
    active_months: Option<Vec<u32>>,
    /// Loans per monthly bin [default: 500000].
    #[arg(long)]
    loans_per_bin: Option<u64>,
    /// Number of monthly bins [default: 24].
    #[arg(long)]
    bins: Option<u32>,
    /// First month, YYYY-MM [default: 2021-01].
    #[arg(long)]
    start: Option<String>,
    /// Share of loans recorded as ebooks [default: 0.3].
    #[arg(long)]
    ebook_share: Option<f64>,
    /// Root seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

fn apply_data(cfg: &mut RunConfig, f: &DataFlags) {
    if !f.inputs.is_empty() {
        cfg.inputs.clone_from(&f.inputs);
    }
    if let Some(v) = &f.out_dir {
        cfg.out_dir.clone_from(v);
    }
    if let Some(v) = f.granularity {
        cfg.granularity = v;
    }
    if f.window.is_some() {
        cfg.window.clone_from(&f.window);
    }
    if !f.exclude.is_empty() {
        cfg.exclude.clone_from(&f.exclude);
    }
    for (dst, src) in [
        (&mut cfg.age, &f.age),
        (&mut cfg.sex, &f.sex),
        (&mut cfg.education, &f.education),
        (&mut cfg.residence, &f.residence),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    if !f.categories.is_empty() {
        cfg.categories.clone_from(&f.categories);
    }
    if f.no_canon {
        cfg.canonicalize = false;
    }
    if let Some(v) = f.canon_window {
        cfg.canon_window = v;
    }
    if let Some(v) = f.max_edit {
        cfg.max_edit = v;
    }
    if let Some(v) = f.max_malformed {
        cfg.max_malformed = v;
    }
    cfg.dump_distributions |= f.dump_distributions;
    cfg.dump_rank_frequency |= f.dump_rank_frequency;
}

fn apply_estimate(cfg: &mut RunConfig, f: &EstimateFlags) {
    if let Some(v) = &f.measure {
        cfg.measure.clone_from(v);
    }
    if f.alpha.is_some() {
        cfg.alpha = f.alpha;
    }
    if let Some(v) = &f.estimator {
        cfg.estimator.clone_from(v);
    }
    if let Some(v) = f.resamples {
        cfg.resamples = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.top_k {
        cfg.top_k = v;
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, X: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: Vec<&'static str>,
    config: &'a C,
    options: X,
    ingest: Option<&'a IngestReport>,
    aggregate: Option<&'a AggregateReport>,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize, X: Serialize>(
    out: &mut OutDir,
    command: Vec<&'static str>,
    config: &C,
    options: X,
    loaded: Option<&Loaded>,
) -> Result<(), CliError> {
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "driftlens",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        options,
        ingest: loaded.map(|l| &l.ingest),
        aggregate: loaded.map(|l| &l.aggregation.report),
        outputs,
    };
    out.json("manifest.json", &manifest)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("usage error: cannot start {:?} threads: {e}", cli.threads);
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("driftlens: {e}");
            e.exit_code()
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(path) => read_config(path),
        None => Ok(RunConfig::default()),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = base_config(cli)?;
    match &cli.command {
        Command::IngestCheck(d) => {
            apply_data(&mut cfg, d);
            ingest_check(&cfg)
        }
        Command::Canon(args) => canon(args),
        Command::Drift { view } => match view {
            DriftView::Local(a) => {
                apply_data(&mut cfg, &a.data);
                apply_estimate(&mut cfg, &a.estimate);
                drift(&cfg, DriftCmd::Local)
            }
            DriftView::Global(g) => {
                apply_data(&mut cfg, &g.analysis.data);
                apply_estimate(&mut cfg, &g.analysis.estimate);
                if g.baseline.is_some() {
                    cfg.baseline.clone_from(&g.baseline);
                }
                drift(&cfg, DriftCmd::Global)
            }
            DriftView::Matrix(a) => {
                apply_data(&mut cfg, &a.data);
                apply_estimate(&mut cfg, &a.estimate);
                drift(&cfg, DriftCmd::Matrix)
            }
        },
        Command::Contrib(d) => {
            apply_data(&mut cfg, d);
            contrib(&cfg)
        }
        Command::Transitions(d) => {
            apply_data(&mut cfg, d);
            transitions(&cfg)
        }
        Command::Trajectories(t) => {
            apply_data(&mut cfg, &t.data);
            if t.baseline.is_some() {
                cfg.baseline.clone_from(&t.baseline);
            }
            trajectories(&cfg, t)
        }
        Command::Predict(p) => {
            apply_data(&mut cfg, &p.analysis.data);
            apply_estimate(&mut cfg, &p.analysis.estimate);
            predict(&cfg, p)
        }
        Command::Synth(s) => synth(s),
    }
}

fn ingest_check(cfg: &RunConfig) -> Result<(), CliError> {
    let job = cfg.job()?;
    let mut out = OutDir::create(&job.out_dir)?;
    let mut total = IngestReport::default();
    for path in &job.inputs {
        let mut reader = EventReader::open(path, job.load.ingest.clone())?;
        for event in reader.by_ref() {
            event?;
        }
        total.merge(reader.report());
    }
    println!(
        "rows={} accepted={} out_of_window={} excluded={} malformed={} flagged={}",
        total.rows, total.accepted, total.out_of_window, total.excluded, total.malformed, total.flagged
    );
    out.json("ingest_report.json", &total)?;
    write_manifest(&mut out, vec!["ingest-check"], cfg, (), None)
}

fn canon(args: &CanonArgs) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_path(&args.items)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.items.display())))?;
    let records: Vec<ItemRecord> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", args.items.display())))?;
    let catalog = canonicalize(
        &records,
        CanonConfig {
            window: args.window,
            max_edit: args.max_edit,
        },
    );
    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT_DIR));
    let mut out = OutDir::create(&out_dir)?;
    let mut w = out.csv("canonical_map.csv", &["item_key", "canonical_id"])?;
    for (key, canonical) in catalog.sorted_mapping() {
        row(&mut w, &[key.to_string(), canonical.to_string()])?;
    }
    close(w)?;
    println!("{} item keys in {} canonical items", catalog.n_items(), catalog.n_groups());
    write_manifest(&mut out, vec!["canon"], args, (), None)
}

/// Loads the inputs and writes the optional distribution dumps.
fn prepare(job: &Job, cfg: &RunConfig, out: &mut OutDir) -> Result<Loaded, CliError> {
    let loaded = load(&job.inputs, &job.load)?;
    let agg = &loaded.aggregation;
    if agg.dists.is_empty() {
        return Err(CliError::Data(format!(
            "no events match cohort `{}` in the analysis window",
            job.load.cohort.label()
        )));
    }
    if cfg.dump_distributions {
        let mut w = out.csv("distributions.csv", &["bin_start", "canonical_id", "count"])?;
        for d in &agg.dists {
            for &(id, c) in d.counts() {
                row(&mut w, &[d.bin.start.to_string(), agg.vocab.name(id).to_string(), c.to_string()])?;
            }
        }
        close(w)?;
    }
    if cfg.dump_rank_frequency {
        let mut w = out.csv("rank_frequency.csv", &["bin_start", "rank", "count", "ccdf"])?;
        for d in &agg.dists {
            for (rank, count, ccdf) in d.rank_frequency() {
                row(&mut w, &[d.bin.start.to_string(), rank.to_string(), count.to_string(), fmt_f64(ccdf)])?;
            }
        }
        close(w)?;
    }
    Ok(loaded)
}

fn restricted(job: &Job, dists: &[PopularityDistribution]) -> Result<Vec<PopularityDistribution>, CliError> {
    Ok(match job.top_k {
        Some(k) => restrict_top_k(dists, k)?,
        None => dists.to_vec(),
    })
}

fn write_series(out: &mut OutDir, name: &str, series: &DriftSeries) -> Result<(), CliError> {
    let mut w = out.csv(name, &["bin_start", "value", "std_error"])?;
    for e in &series.entries {
        row(&mut w, &[e.bin.start.to_string(), fmt_f64(e.value), fmt_opt(e.std_error)])?;
    }
    close(w)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum DriftCmd {
    Local,
    Global,
    Matrix,
}

fn drift(cfg: &RunConfig, cmd: DriftCmd) -> Result<(), CliError> {
    let job = cfg.job()?;
    let mut out = OutDir::create(&job.out_dir)?;
    let loaded = prepare(&job, cfg, &mut out)?;
    let dists = restricted(&job, &loaded.aggregation.dists)?;
    let name = match cmd {
        DriftCmd::Local => {
            let s = local_drift(&dists, &job.estimator, job.measure)?;
            write_series(&mut out, "drift_local.csv", &s)?;
            "local"
        }
        DriftCmd::Global => {
            let baseline = cfg.baseline_bin()?.unwrap_or(dists[0].bin);
            let s = global_drift(&dists, baseline, &job.estimator, job.measure)?;
            write_series(&mut out, "drift_global.csv", &s)?;
            "global"
        }
        DriftCmd::Matrix => {
            let m = drift_matrix(&dists, &job.estimator, job.measure)?;
            let mut header = vec!["bin_start".to_string()];
            header.extend(m.bins.iter().map(|b| b.start.to_string()));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut w = out.csv("drift_matrix.csv", &header)?;
            for (i, b) in m.bins.iter().enumerate() {
                let mut fields = vec![b.start.to_string()];
                fields.extend(m.row(i).iter().map(|&v| fmt_f64(v)));
                row(&mut w, &fields)?;
            }
            close(w)?;
            if m.std_error(0, 0).is_some() {
                let mut w = out.csv("drift_matrix_std_error.csv", &header)?;
                for (i, b) in m.bins.iter().enumerate() {
                    let mut fields = vec![b.start.to_string()];
                    fields.extend((0..m.n()).map(|j| fmt_opt(m.std_error(i, j))));
                    row(&mut w, &fields)?;
                }
                close(w)?;
            }
            "matrix"
        }
    };
    write_manifest(&mut out, vec!["drift", name], cfg, (), Some(&loaded))
}

const GROUP_HEADER: [&str; N_GROUPS] = ["g1", "g2", "g3", "g4", "g5"];

fn contrib(cfg: &RunConfig) -> Result<(), CliError> {
    let job = cfg.job()?;
    let mut out = OutDir::create(&job.out_dir)?;
    let loaded = prepare(&job, cfg, &mut out)?;
    let vocab = &loaded.aggregation.vocab;
    let schedule = group_schedule(&loaded.aggregation.dists)?;
    let mut header = vec!["bin_start"];
    header.extend(GROUP_HEADER);
    let mut shares = out.csv("group_shares.csv", &header)?;
    let mut items = out.csv("contributions.csv", &["bin_start", "canonical_id", "partial_bits", "rank", "group"])?;
    for pair in &schedule.pairs {
        let bin = pair.right.start.to_string();
        let mut fields = vec![bin.clone()];
        fields.extend(pair.shares.iter().map(|&s| fmt_f64(s)));
        row(&mut shares, &fields)?;
        for r in &pair.ranked {
            row(
                &mut items,
                &[
                    bin.clone(),
                    vocab.name(r.id).to_string(),
                    fmt_f64(r.partial),
                    r.rank.to_string(),
                    GROUP_HEADER[r.group].to_string(),
                ],
            )?;
        }
    }
    close(shares)?;
    close(items)?;
    write_manifest(&mut out, vec!["contrib"], cfg, (), Some(&loaded))
}

fn transitions(cfg: &RunConfig) -> Result<(), CliError> {
    let job = cfg.job()?;
    let mut out = OutDir::create(&job.out_dir)?;
    let loaded = prepare(&job, cfg, &mut out)?;
    let matrix = transition_matrix(&group_schedule(&loaded.aggregation.dists)?)?;
    let mut header = vec!["from"];
    header.extend(GROUP_HEADER);
    let mut w = out.csv("transitions.csv", &header)?;
    for (g, r) in matrix.iter().enumerate() {
        let mut fields = vec![GROUP_HEADER[g].to_string()];
        fields.extend(r.iter().map(|&v| fmt_f64(v)));
        row(&mut w, &fields)?;
    }
    close(w)?;
    write_manifest(&mut out, vec!["transitions"], cfg, (), Some(&loaded))
}

#[derive(Serialize)]
struct TrajectoryOptions {
    select: Select,
    k: usize,
    at: Option<String>,
}

fn trajectories(cfg: &RunConfig, args: &TrajectoryArgs) -> Result<(), CliError> {
    let job = cfg.job()?;
    let at = args.at.as_deref().map(|s| parse_bin(s, cfg.granularity)).transpose()?;
    let mut out = OutDir::create(&job.out_dir)?;
    let loaded = prepare(&job, cfg, &mut out)?;
    let dists = &loaded.aggregation.dists;
    let selector = match args.select {
        Select::TopTotal => TrajectorySelector::TopTotal { k: args.k },
        Select::TopPeak => TrajectorySelector::TopPeak { k: args.k },
        Select::TopGlobalContrib => TrajectorySelector::TopGlobalContrib {
            baseline: cfg.baseline_bin()?.unwrap_or(dists[0].bin),
            at: at.unwrap_or(dists[dists.len() - 1].bin),
            k: args.k,
        },
    };
    let panel = trajectory_panel(dists, selector)?;
    let mut header = vec!["canonical_id".to_string(), "peak_bin".to_string()];
    header.extend(panel.bins.iter().map(|b| b.start.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = out.csv("trajectories.csv", &header)?;
    for r in &panel.rows {
        let mut fields = vec![
            loaded.aggregation.vocab.name(r.id).to_string(),
            panel.bins[r.peak].start.to_string(),
        ];
        fields.extend(r.counts.iter().map(u64::to_string));
        row(&mut w, &fields)?;
    }
    close(w)?;
    let options = TrajectoryOptions {
        select: args.select,
        k: args.k,
        at: args.at.clone(),
    };
    write_manifest(&mut out, vec!["trajectories"], cfg, options, Some(&loaded))
}

#[derive(Serialize)]
struct ForecastSummary<'a> {
    measure: String,
    kind: &'static str,
    source_year: Option<i32>,
    target_year: Option<i32>,
    source_baseline: Option<String>,
    target_baseline: Option<String>,
    bins: usize,
    mae: f64,
    mape_percent: Option<f64>,
    mape_excluded: usize,
    #[serde(skip)]
    _report: &'a ForecastReport,
}

#[derive(Serialize)]
struct PredictOptions {
    kind: PredictKind,
    target_year: i32,
}

fn predict(cfg: &RunConfig, args: &PredictArgs) -> Result<(), CliError> {
    let job = cfg.job()?;
    let mut out = OutDir::create(&job.out_dir)?;
    let loaded = prepare(&job, cfg, &mut out)?;
    let dists = restricted(&job, &loaded.aggregation.dists)?;
    let last_year = dists.iter().map(|d| d.bin.year()).max().expect("non-empty");
    let target_year = args.target_year.unwrap_or(last_year);
    let kinds: &[(ForecastKind, &'static str)] = match args.kind {
        PredictKind::Local => &[(ForecastKind::Local, "local")],
        PredictKind::Global => &[(ForecastKind::Global, "global")],
        PredictKind::Both => &[(ForecastKind::Local, "local"), (ForecastKind::Global, "global")],
    };
    for &(kind, name) in kinds {
        let report = seasonal_forecast(&dists, target_year, kind, &job.estimator, job.measure)?;
        let mut w = out.csv(&format!("forecast_{name}.csv"), &["bin_start", "predicted", "observed", "abs_error"])?;
        for r in &report.rows {
            row(
                &mut w,
                &[r.bin.start.to_string(), fmt_f64(r.predicted), fmt_f64(r.observed), fmt_f64(r.abs_error)],
            )?;
        }
        close(w)?;
        let target_baseline = match report.kind {
            driftlens::SeriesKind::Global { baseline } => Some(baseline.start.to_string()),
            driftlens::SeriesKind::Local => None,
        };
        let summary = ForecastSummary {
            measure: report.measure.to_string(),
            kind: name,
            source_year: report.source_year,
            target_year: report.target_year,
            source_baseline: report.source_baseline.map(|b: TimeBin| b.start.to_string()),
            target_baseline,
            bins: report.rows.len(),
            mae: report.mae,
            mape_percent: report.mape_percent,
            mape_excluded: report.mape_excluded,
            _report: &report,
        };
        out.json(&format!("forecast_{name}.json"), &summary)?;
        println!("{name}: {} bins, MAE {}", report.rows.len(), fmt_f64(report.mae));
    }
    let options = PredictOptions {
        kind: args.kind,
        target_year,
    };
    write_manifest(&mut out, vec!["predict"], cfg, options, Some(&loaded))
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read spec {}: {e}", path.display())))?;
            toml::from_str::<SynthMarketSpec>(&text)
                .map_err(|e| CliError::Usage(format!("invalid spec {}: {e}", path.display())))?
        }
        None => SynthMarketSpec::default(),
    };
    if let Some(v) = args.catalog_size {
        spec.catalog_size = v;
    }
    if let Some(v) = args.zipf {
        spec.zipf_exponent = v;
    }
    if let Some(v) = args.churn {
        spec.churn = v;
    }
    if let Some(v) = args.seasonal_fraction {
        spec.seasonal_fraction = v;
    }
    if let Some(v) = args.gamma {
        spec.seasonal_multiplier = v;
    }
    if let Some(v) = &args.active_months {
        spec.active_months.clone_from(v);
    }
    if let Some(v) = args.loans_per_bin {
        spec.loans_per_bin = v;
    }
    if let Some(v) = args.bins {
        spec.n_bins = v;
    }
    if let Some(v) = &args.start {
        spec.start = driftlens::ledger::parse_day_or_month(v, false).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(v) = args.ebook_share {
        spec.ebook_share = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT_DIR));
    let mut out = OutDir::create(&out_dir)?;
    let market = SynthMarket::new(spec.clone())?;
    let events = market.write_events(&out.path().join("events.csv"))?;
    market.truth().write_csv(&out.path().join("truth.csv"))?;
    let spec_text = toml::to_string(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(out.path().join("spec.toml"), spec_text)
        .map_err(|e| CliError::Data(format!("cannot write spec.toml: {e}")))?;
    println!("{events} events in {} bins", market.bins().len());
    #[derive(Serialize)]
    struct Files {
        events: &'static str,
        truth: &'static str,
        spec: &'static str,
    }
    let files = Files {
        events: "events.csv",
        truth: "truth.csv",
        spec: "spec.toml",
    };
    write_manifest(&mut out, vec!["synth"], &spec, files, None)
}
