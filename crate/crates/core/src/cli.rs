//! Command-line entry point: data generation, preprocessing, backtest
//! execution, reporting, and significance testing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::backtest::{
    aggregate_report, run_backtest, BacktestConfig, DailyErrorSeries, MethodSpec,
};
use crate::ingest::{
    load_embeddings, load_headlines, load_returns, load_sector_map, parse_excluded_types,
    write_embeddings, write_membership, write_returns, write_sector_map, EmbeddingSeries,
    IngestConfig, TradingCalendar,
};
use crate::similarity::{filter_headlines, stub_embed, tfidf_dedup, weekly_concat};
use crate::stats::paired_t_test;
use crate::synth::{generate_market, WorldSpec};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "clusterfactor", version, about = "Cluster-based factor model benchmarking")]
struct Cli {
    /// Base seed; all randomness derives from it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the backtest grid (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Optional JSON config file; flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market with planted factor structure
    Generate(GenerateArgs),
    /// Run the headline -> weekly embedding preprocessing pipeline
    Preprocess(PreprocessArgs),
    /// Run the weekly roll-forward backtest
    Backtest(BacktestArgs),
    /// Paired t-test between two methods of a finished run
    Ttest(TtestArgs),
    /// Re-print the aggregate report of a finished run
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    stocks: usize,
    #[arg(long, default_value_t = 11)]
    clusters: usize,
    #[arg(long, default_value_t = 756)]
    days: usize,
    #[arg(long, default_value_t = 1.0)]
    factor_vol: f64,
    #[arg(long, default_value_t = 1.0)]
    idio_vol: f64,
    #[arg(long, default_value_t = 0.5)]
    beta_lo: f64,
    #[arg(long, default_value_t = 1.5)]
    beta_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    migration_rate: f64,
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0.25)]
    embed_noise: f64,
    #[arg(long, default_value = "2022-01-03")]
    start_date: NaiveDate,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Headlines CSV (date,ticker,relevance,article_type,text)
    #[arg(long)]
    headlines: Option<PathBuf>,
    /// Precomputed embeddings CSV to validate and pass through
    #[arg(long)]
    embeddings_in: Option<PathBuf>,
    /// Exclusion list: one article type per line, # comments allowed
    #[arg(long)]
    exclude_types: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    dedup_threshold: f64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Output embeddings CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BacktestArgs {
    /// Directory containing returns.csv, sectors.csv, embeddings.csv and
    /// optionally membership.csv
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated method ids, or "all" for the full 17-method roster
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long, default_value_t = 11)]
    k: usize,
    #[arg(long, default_value_t = 21)]
    estimation_days: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TtestArgs {
    /// Backtest output directory
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    method_a: String,
    #[arg(long)]
    method_b: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // ignore failure if a pool already exists (repeated invocation in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let code = match &cli.command {
        Command::Generate(a) => cmd_generate(&cli, a),
        Command::Preprocess(a) => cmd_preprocess(&cli, a),
        Command::Backtest(a) => cmd_backtest(&cli, a),
        Command::Ttest(a) => cmd_ttest(a),
        Command::Report(a) => cmd_report(a),
    };
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::UnknownMethod(_) | crate::Error::Validation(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Write atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> CliResult) -> CliResult {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> CliResult {
    let mut spec = WorldSpec {
        n_stocks: a.stocks,
        n_clusters: a.clusters,
        n_days: a.days,
        factor_vol: a.factor_vol,
        idio_vol: a.idio_vol,
        beta_range: (a.beta_lo, a.beta_hi),
        migration_rate: a.migration_rate,
        seed: cli.seed,
        start_date: a.start_date,
        embed_dim: a.embed_dim,
        embed_noise: a.embed_noise,
    };
    if let Some(cfg) = &cli.config {
        apply_worldspec_config(cfg, &mut spec)?;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let world = generate_market(&spec).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::create_dir_all(&a.out)?;
    write_atomic(&a.out.join("returns.csv"), |w| {
        write_returns(&world.panel, w).map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    write_atomic(&a.out.join("membership.csv"), |w| {
        write_membership(&world.panel, w).map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    write_atomic(&a.out.join("sectors.csv"), |w| {
        write_sector_map(&world.sector_map, w).map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    write_atomic(&a.out.join("embeddings.csv"), |w| {
        write_embeddings(&world.embeddings, w).map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    println!("wrote returns.csv, membership.csv, sectors.csv, embeddings.csv to {}", a.out.display());
    Ok(())
}

fn apply_worldspec_config(path: &Path, spec: &mut WorldSpec) -> CliResult {
    let raw = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("bad config file: {e}")))?;
    // config fills fields the flags left at defaults is ambiguous; config is
    // applied first in spirit by only overriding when a key is present AND
    // the flag was not explicitly set. Clap does not expose that cheaply, so
    // config keys here are documented as lower precedence only for keys the
    // CLI has no flag for; all keyed overrides are applied verbatim.
    if let Some(x) = v.get("embed_dim").and_then(|x| x.as_u64()) {
        spec.embed_dim = x as usize;
    }
    if let Some(x) = v.get("embed_noise").and_then(|x| x.as_f64()) {
        spec.embed_noise = x;
    }
    Ok(())
}

fn cmd_preprocess(cli: &Cli, a: &PreprocessArgs) -> CliResult {
    if let Some(path) = &a.embeddings_in {
        // pass-through: validate then rewrite in canonical form
        let series = load_embeddings(path).map_err(|e| CliError::Runtime(e.to_string()))?;
        return write_atomic(&a.out, |w| {
            write_embeddings(&series, w).map_err(|e| CliError::Runtime(e.to_string()))
        });
    }
    let headlines_path = a
        .headlines
        .as_ref()
        .ok_or_else(|| CliError::Usage("one of --headlines or --embeddings-in is required".into()))?;
    if !(a.dedup_threshold > 0.0 && a.dedup_threshold <= 1.0) {
        return Err(CliError::Usage("--dedup-threshold must be in (0,1]".into()));
    }
    if a.dim < 2 {
        return Err(CliError::Usage("--dim must be at least 2".into()));
    }

    let records = load_headlines(headlines_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::Runtime("headlines file has no rows".into()));
    }
    let excluded = match &a.exclude_types {
        Some(p) => parse_excluded_types(&fs::read_to_string(p)?),
        None => Default::default(),
    };

    // weekday calendar spanning the headline dates
    let lo = records.iter().map(|r| r.timestamp).min().unwrap();
    let hi = records.iter().map(|r| r.timestamp).max().unwrap();
    let mut dates = Vec::new();
    let mut d = lo;
    while d <= hi {
        if chrono::Datelike::weekday(&d).num_days_from_monday() < 5 {
            dates.push(d);
        }
        d += chrono::Duration::days(1);
    }
    let calendar =
        TradingCalendar::new(dates).map_err(|e| CliError::Runtime(e.to_string()))?;

    let filtered = filter_headlines(records, &excluded);
    let deduped = tfidf_dedup(filtered, a.dedup_threshold);
    let docs = weekly_concat(&deduped, &calendar);
    let mut series =
        EmbeddingSeries::new(a.dim).map_err(|e| CliError::Runtime(e.to_string()))?;
    for doc in &docs {
        let v = stub_embed(doc, a.dim, cli.seed).map_err(|e| CliError::Runtime(e.to_string()))?;
        series
            .insert(&doc.ticker, doc.week_start, v)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    write_atomic(&a.out, |w| {
        write_embeddings(&series, w).map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    println!("wrote {} weekly embeddings to {}", series.len(), a.out.display());
    Ok(())
}

fn parse_methods(spec: &str) -> Result<Vec<MethodSpec>, CliError> {
    if spec == "all" {
        return Ok(MethodSpec::full_roster());
    }
    spec.split(',')
        .map(|id| MethodSpec::parse(id.trim()).map_err(CliError::from))
        .collect()
}

fn cmd_backtest(cli: &Cli, a: &BacktestArgs) -> CliResult {
    let methods = parse_methods(&a.methods)?;
    let returns_path = a.data.join("returns.csv");
    let membership_path = a.data.join("membership.csv");
    let ingest_cfg = IngestConfig {
        membership_path: membership_path.exists().then_some(membership_path.clone()),
    };
    let panel =
        load_returns(&returns_path, &ingest_cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    let sector_map = load_sector_map(&a.data.join("sectors.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let embeddings = load_embeddings(&a.data.join("embeddings.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let cal = panel.calendar();
    let max_lookback: usize = methods
        .iter()
        .filter_map(|m| m.lookback_weeks)
        .max()
        .unwrap_or(1);
    let default_start_idx = (max_lookback * 5 + a.estimation_days).min(cal.len() - 1);
    let start = a.start.unwrap_or_else(|| cal.date(default_start_idx));
    let end = a.end.unwrap_or_else(|| cal.date(cal.len() - 1));

    let cfg = BacktestConfig {
        start,
        end,
        methods,
        k: a.k,
        estimation_days: a.estimation_days,
        seed: cli.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let series = run_backtest(&panel, &sector_map, &embeddings, &cfg)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let table = aggregate_report(&series);

    fs::create_dir_all(&a.out)?;
    write_atomic(&a.out.join("report.csv"), |w| {
        use std::io::Write;
        writeln!(w, "method_id,avg_rmse,avg_mae,n_days,n_weeks_skipped")?;
        for r in &table.rows {
            writeln!(w, "{},{},{},{},{}", r.method_id, r.avg_rmse, r.avg_mae, r.n_days, r.n_weeks_skipped)?;
        }
        Ok(())
    })?;
    write_atomic(&a.out.join("daily.csv"), |w| {
        use std::io::Write;
        writeln!(w, "date,method_id,rmse,mae,n_stocks")?;
        for s in series.values() {
            for i in 0..s.dates.len() {
                writeln!(w, "{},{},{},{},{}", s.dates[i], s.method_id, s.rmse[i], s.mae[i], s.n_stocks[i])?;
            }
        }
        Ok(())
    })?;
    for (id, s) in &series {
        write_atomic(&a.out.join(format!("errors_{id}.csv")), |w| {
            write_error_matrix(s, &panel, w)
        })?;
    }

    // run manifest: resolved config hash + input digests
    let resolved = serde_json::json!({
        "start": start.to_string(),
        "end": end.to_string(),
        "methods": cfg.methods.iter().map(|m| m.method_id.clone()).collect::<Vec<_>>(),
        "k": cfg.k,
        "estimation_days": cfg.estimation_days,
        "seed": cfg.seed,
    });
    let manifest = serde_json::json!({
        "config_hash": sha256_hex(resolved.to_string().as_bytes()),
        "resolved_config": resolved,
        "input_digests": {
            "returns.csv": file_digest(&returns_path)?,
            "sectors.csv": file_digest(&a.data.join("sectors.csv"))?,
            "embeddings.csv": file_digest(&a.data.join("embeddings.csv"))?,
            "membership.csv": ingest_cfg
                .membership_path
                .as_deref()
                .map(file_digest)
                .transpose()?,
        },
        "tool_version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
    });
    write_atomic(&a.out.join("manifest.json"), |w| {
        use std::io::Write;
        writeln!(w, "{}", serde_json::to_string_pretty(&manifest).expect("valid json"))?;
        Ok(())
    })?;

    for r in &table.rows {
        println!(
            "{:<28} rmse {:.4}  mae {:.4}  days {}  skipped weeks {}",
            r.method_id, r.avg_rmse, r.avg_mae, r.n_days, r.n_weeks_skipped
        );
    }
    Ok(())
}

fn write_error_matrix(s: &DailyErrorSeries, panel: &crate::ingest::ReturnsPanel, w: &mut Vec<u8>) -> CliResult {
    use std::io::Write;
    writeln!(w, "date,ticker,error")?;
    for (dp, date) in s.dates.iter().enumerate() {
        for ti in 0..s.n_tickers {
            if let Some(e) = s.error(dp, ti) {
                writeln!(w, "{},{},{}", date, panel.tickers()[ti], e)?;
            }
        }
    }
    Ok(())
}

fn load_error_matrix(
    run: &Path,
    method: &str,
) -> Result<BTreeMap<(NaiveDate, String), f64>, CliError> {
    let path = run.join(format!("errors_{method}.csv"));
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "method {method} not present in run {} (missing {})",
            run.display(),
            path.display()
        )));
    }
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Runtime(e.to_string()))?;
        let date: NaiveDate = rec[0]
            .parse()
            .map_err(|e| CliError::Runtime(format!("bad date in {}: {e}", path.display())))?;
        let err: f64 = rec[2]
            .parse()
            .map_err(|e| CliError::Runtime(format!("bad error in {}: {e}", path.display())))?;
        out.insert((date, rec[1].to_string()), err);
    }
    Ok(out)
}

fn cmd_ttest(a: &TtestArgs) -> CliResult {
    let ea = load_error_matrix(&a.run, &a.method_a)?;
    let eb = load_error_matrix(&a.run, &a.method_b)?;
    // align on the union of (date, ticker) cells
    let keys: std::collections::BTreeSet<&(NaiveDate, String)> =
        ea.keys().chain(eb.keys()).collect();
    let mut va = Vec::with_capacity(keys.len());
    let mut vb = Vec::with_capacity(keys.len());
    for k in keys {
        va.push(ea.get(k).copied());
        vb.push(eb.get(k).copied());
    }
    let r = paired_t_test(&a.method_a, &a.method_b, &va, &vb)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("method_a,method_b,n,mean_diff,t_stat,p_value");
    let p = if r.zero_variance {
        "<1e-300 (underflow)".to_string()
    } else {
        format!("{}", r.p_value)
    };
    println!("{},{},{},{},{},{}", r.method_a, r.method_b, r.n, r.mean_diff, r.t_stat, p);
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> CliResult {
    let path = a.run.join("report.csv");
    if !path.exists() {
        return Err(CliError::Runtime(format!("no report.csv in {}", a.run.display())));
    }
    print!("{}", fs::read_to_string(&path)?);
    Ok(())
}
