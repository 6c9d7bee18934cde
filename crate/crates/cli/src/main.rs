mod records;
mod reports;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use ugsl::graph::{load_dataset, read_edge_list, write_edge_list, Dataset};
use ugsl::search::{
    best_architecture_aggregate, component_best_average, correlate_results, default_options, line_search,
    parse_label, random_search, rank_by_val, top_fraction_analysis, Component, ResultsTable, SearchSpace,
};
use ugsl::stats::{compute_stats, write_stats_csv};
use ugsl::trainer::{train, GslConfig, TrialStatus};
use ugsl::GslError;

use records::{read_results, Appender, Header};

#[derive(Parser)]
#[command(name = "ugsl", version, about = "Graph structure learning experiments")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train(TrainArgs),
    /// Vary one component of a base configuration.
    LineSearch(LineSearchArgs),
    /// Random search over the full space.
    RandomSearch(RandomSearchArgs),
    /// Graph statistics of an edge list.
    Stats(StatsArgs),
    /// Analyses over result files.
    Report(ReportArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("model").required(true).args(["config", "base"])))]
struct TrainArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Trial configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the base model.
    #[arg(long)]
    base: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "UGSL_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("model").required(true).args(["config", "base"])))]
struct LineSearchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    base: bool,
    /// positional, scorer, sparsifier, processor, encoder, regularizer, unsupervised or adjacency_mode.
    #[arg(long)]
    component: String,
    /// Comma-separated options; defaults to every option of the component.
    #[arg(long, value_delimiter = ',')]
    options: Option<Vec<String>>,
    #[arg(long, default_value_t = 5)]
    trials_per_option: usize,
    /// Search space (JSON) for the tuned hyperparameters.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "UGSL_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("search_space").required(true).args(["space", "default"])))]
struct RandomSearchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Search space (JSON).
    #[arg(long)]
    space: Option<PathBuf>,
    /// Use the built-in search space.
    #[arg(long)]
    default: bool,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 0.05)]
    top_fraction: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "UGSL_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct StatsArgs {
    /// Edge list (TSV: src, dst, optional weight).
    #[arg(long)]
    graph: PathBuf,
    /// Number of nodes.
    #[arg(long)]
    n: usize,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ReportMode {
    Top5,
    BestArch,
    ComponentAvg,
    Correlation,
}

#[derive(Args)]
struct ReportArgs {
    /// Result files (JSONL), one per dataset.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    #[arg(long, value_enum)]
    mode: ReportMode,
    #[arg(long, default_value_t = 0.05)]
    fraction: f64,
    /// Rows of the best-architecture table.
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: 3, message: format!("cannot write {}: {e}", path.display()) }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

pub fn exit_code(e: &GslError) -> u8 {
    match e {
        GslError::Config { .. } => 2,
        GslError::Ingestion(_) | GslError::Io(_) | GslError::Json(_) => 3,
        GslError::Resource(_)
        | GslError::Numeric(_)
        | GslError::NoConvergence { .. }
        | GslError::TapeConsumed
        | GslError::ForeignTensor { .. } => 4,
    }
}

fn load_data(path: &Path) -> Result<Dataset, Failure> {
    load_dataset(path).map_err(|e| Failure::data(e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn base_or_config(config: &Option<PathBuf>, ds: &Dataset) -> Result<GslConfig, Failure> {
    match config {
        Some(p) => read_json(p),
        None => Ok(GslConfig::base(ds.num_nodes())),
    }
}

fn load_space(path: &Option<PathBuf>) -> Result<SearchSpace, Failure> {
    let space = match path {
        Some(p) => read_json(p)?,
        None => SearchSpace::default(),
    };
    space.validate()?;
    Ok(space)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::output(dir, e))
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let ds = load_data(&args.data)?;
    let mut cfg = base_or_config(&args.config, &ds)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate(ds.num_nodes(), ds.feature_dim())?;
    let outcome = train(&ds, &cfg, 0)?;
    create_dir(&args.out)?;
    let header = Header::new("train", &ds.name, cfg.seed, &cfg)?;
    Appender::create(&args.out.join("results.jsonl"), &header, std::slice::from_ref(&outcome.result))?;
    let adj_path = args.out.join("adjacency.tsv");
    if let Some(adj) = &outcome.adjacency {
        write_edge_list(&adj_path, adj)?;
    } else if adj_path.exists() {
        fs::remove_file(&adj_path).map_err(|e| Failure::output(&adj_path, e))?;
    }
    let r = &outcome.result;
    match &r.status {
        TrialStatus::Completed => {
            println!(
                "val {:.4} test {:.4} best_epoch {} epochs {}",
                r.best_val_accuracy, r.test_accuracy, r.best_epoch, r.epochs_run
            );
            Ok(())
        }
        TrialStatus::Failed { epoch, message } => {
            Err(Failure { code: 4, message: format!("training failed at epoch {epoch}: {message}") })
        }
    }
}

fn cmd_line_search(args: LineSearchArgs) -> Result<(), Failure> {
    let ds = load_data(&args.data)?;
    let mut base = base_or_config(&args.config, &ds)?;
    let seed = args.seed.unwrap_or(base.seed);
    base.seed = seed;
    base.validate(ds.num_nodes(), ds.feature_dim())?;
    let space = load_space(&args.space)?;
    let component: Component = parse_label("component", &args.component)?;
    let options = args.options.clone().unwrap_or_else(|| default_options(component, &space));
    let hashed = json!({
        "base": base, "component": component, "options": options,
        "trials_per_option": args.trials_per_option, "space": space,
    });
    let header = Header::new("line-search", &ds.name, seed, &hashed)?;
    create_dir(&args.out)?;
    let path = args.out.join("results.jsonl");
    let mut appender = Appender::create(&path, &header, &[])?;
    let report = line_search(&ds, &base, component, &options, args.trials_per_option, &space, seed, args.jobs, |o| {
        appender.result(&o.result).map_err(|f| GslError::Io(std::io::Error::other(f.message)))
    })?;
    drop(appender);
    records::write_sorted(&path, &header, &report.results)?;
    records::write_text(&args.out.join("line_search.csv"), &reports::line_search_csv(&report))?;
    records::write_json(&args.out.join("line_search.json"), &report.rows)?;
    for row in &report.rows {
        println!("{} val {:.4} test {:.4} (trial {})", row.option, row.best.best_val_accuracy, row.best.test_accuracy, row.best.trial_id);
    }
    Ok(())
}

fn cmd_random_search(args: RandomSearchArgs) -> Result<(), Failure> {
    let ds = load_data(&args.data)?;
    let space = load_space(&args.space)?;
    let seed = args.seed.unwrap_or(0);
    if !(args.top_fraction > 0.0 && args.top_fraction <= 1.0) {
        return Err(Failure::config("top_fraction must lie in (0, 1]"));
    }
    let header = Header::new("random-search", &ds.name, seed, &json!({ "space": space }))?;
    create_dir(&args.out)?;
    let path = args.out.join("results.jsonl");
    let mut existing = Vec::new();
    if path.exists() {
        let file = read_results(&path)?;
        match &file.header {
            Some(h) if h.same_run(&header) => {
                existing = file.results.into_iter().filter(|r| r.trial_id < args.trials).collect();
            }
            _ => {
                return Err(Failure::config(format!(
                    "{} holds results of a different run; choose another --out",
                    path.display()
                )))
            }
        }
    }
    let skip: BTreeSet<usize> = existing.iter().map(|r| r.trial_id).collect();
    if !skip.is_empty() {
        log::info!("resuming: {} of {} trials already recorded", skip.len(), args.trials);
    }
    let mut appender = Appender::create(&path, &header, &existing)?;
    let fresh = random_search(&ds, &space, args.trials, args.jobs, seed, &skip, |o| {
        log::info!("trial {} done: val {:.4}", o.result.trial_id, o.result.best_val_accuracy);
        appender.result(&o.result).map_err(|f| GslError::Io(std::io::Error::other(f.message)))
    })?;
    drop(appender);
    let mut all = existing;
    all.extend(fresh);
    all.sort_by_key(|r| r.trial_id);
    records::write_sorted(&path, &header, &all)?;
    let report = top_fraction_analysis(&all, args.top_fraction)?;
    records::write_text(&args.out.join("top_fraction.csv"), &reports::top_fraction_csv(&[(ds.name.clone(), report.clone())]))?;
    records::write_json(&args.out.join("top_fraction.json"), &report)?;
    let best = rank_by_val(&all).first().map(|r| r.config.clone());
    records::write_json(&args.out.join("best_config.json"), &best)?;
    let failed = all.iter().filter(|r| !r.is_completed()).count();
    match rank_by_val(&all).first() {
        Some(b) => println!(
            "{} trials ({failed} failed); best trial {} val {:.4} test {:.4}",
            all.len(),
            b.trial_id,
            b.best_val_accuracy,
            b.test_accuracy
        ),
        None => println!("{} trials, all failed", all.len()),
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), Failure> {
    let adj = read_edge_list(&args.graph, args.n).map_err(|e| Failure::data(e.to_string()))?;
    let stats = compute_stats(&adj)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_stats_csv(&args.out, std::slice::from_ref(&stats)).map_err(|e| Failure::output(&args.out, e))?;
    let dataset = args.graph.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Header::new("stats", &dataset, 0, &json!({ "n": args.n }))?.write_json(&header_path(&args.out))?;
    if stats.degenerate {
        log::warn!("graph has no edges; statistics are degenerate");
    }
    Ok(())
}

fn header_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".header.json");
    out.with_file_name(name)
}

fn load_tables(paths: &[PathBuf]) -> Result<Vec<ResultsTable>, Failure> {
    let mut tables = Vec::with_capacity(paths.len());
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for p in paths {
        let file = read_results(p)?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut name = file.header.map(|h| h.dataset).filter(|d| !d.is_empty()).unwrap_or(stem);
        let count = seen.entry(name.clone()).or_insert(0);
        *count += 1;
        if *count > 1 {
            name = format!("{name}_{count}");
        }
        tables.push(ResultsTable { dataset: name, results: file.results });
    }
    Ok(tables)
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let tables = load_tables(&args.results)?;
    create_dir(&args.out)?;
    let names: Vec<String> = tables.iter().map(|t| t.dataset.clone()).collect();
    match args.mode {
        ReportMode::Top5 => {
            let mut rows = Vec::with_capacity(tables.len());
            for t in &tables {
                rows.push((t.dataset.clone(), top_fraction_analysis(&t.results, args.fraction)?));
            }
            records::write_text(&args.out.join("top_fraction.csv"), &reports::top_fraction_csv(&rows))?;
            let json: Vec<_> = rows.iter().map(|(d, r)| json!({ "dataset": d, "report": r })).collect();
            records::write_json(&args.out.join("top_fraction.json"), &json)?;
        }
        ReportMode::BestArch => {
            let rows = best_architecture_aggregate(&tables, args.top);
            records::write_text(&args.out.join("best_architectures.csv"), &reports::architecture_csv(&rows, &names))?;
            records::write_json(&args.out.join("best_architectures.json"), &json!({ "datasets": names, "rows": rows }))?;
        }
        ReportMode::ComponentAvg => {
            let rows = component_best_average(&tables);
            records::write_text(&args.out.join("component_average.csv"), &reports::component_average_csv(&rows, &names))?;
            records::write_json(&args.out.join("component_average.json"), &json!({ "datasets": names, "rows": rows }))?;
        }
        ReportMode::Correlation => {
            let mut rows = Vec::with_capacity(tables.len());
            for t in &tables {
                let usable = t.results.iter().filter(|r| r.is_completed() && r.graph_stats.is_some()).count();
                if usable < 2 {
                    return Err(Failure::data(format!(
                        "`{}` has {usable} completed trials with graph statistics; correlation needs at least 2",
                        t.dataset
                    )));
                }
                rows.push((t.dataset.clone(), correlate_results(&t.results)?));
            }
            records::write_text(&args.out.join("correlation.csv"), &reports::correlation_csv(&rows))?;
            let json: Vec<_> = rows.iter().map(|(d, c)| json!({ "dataset": d, "correlations": c })).collect();
            records::write_json(&args.out.join("correlation.json"), &json)?;
        }
    }
    let hashed = json!({ "mode": args.mode, "fraction": args.fraction, "top": args.top, "tables": tables });
    Header::new("report", &names.join("+"), 0, &hashed)?.write_json(&args.out.join("header.json"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::LineSearch(a) => cmd_line_search(a),
        Command::RandomSearch(a) => cmd_random_search(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
