//! `countycast` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric fault.
//! Failures print one line, `error[<kind>]: <message>`, on stderr.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use countycast::dataset::{
    build_panel, generate_synthetic_panel, load_dataset, read_panel_dir, write_panel_dir, write_raw_dataset,
    DatasetSchema, RawTable,
};
use countycast::eval::{backtest, backtest_folds, latest_windows, EvalReport};
use countycast::forecast::{self, DwlstmModel};
use countycast::pca::{panel_matrix, PcaModel, PcaOptions};
use countycast::stats::{correlate_panel, ReportOptions};
use countycast::{ErrorKind, FeaturePanel};

use config::{documented_keys, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(countycast::Error),
}

impl From<countycast::Error> for CliError {
    fn from(e: countycast::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            },
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config", m.clone()),
            CliError::Lib(e) => (
                match e.kind() {
                    ErrorKind::Config => "config",
                    ErrorKind::Data => "data",
                    ErrorKind::Numeric => "numeric",
                },
                e.to_string(),
            ),
        };
        format!(
            "error[{kind}]: {}",
            msg.split_whitespace().collect::<Vec<_>>().join(" ")
        )
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Lib(countycast::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "countycast",
    version,
    about = "County-level outbreak analytics and forecasting"
)]
struct Cli {
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores (overrides `threads`).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Panel directory (overrides `data.panel`).
    #[arg(long, global = true)]
    panel: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load raw CSV datasets and write a joined panel directory.
    BuildPanel {
        /// Directory of schema/CSV pairs (overrides `data.raw`).
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Correlation report and principal-component feature ranking.
    Analyze {
        /// Variance fraction; prints the number of components reaching it.
        #[arg(long)]
        retain: Option<f64>,
    },
    /// Generate a seeded synthetic dataset: raw tables and a built panel.
    Synth,
    /// Train the network on the task's training windows.
    Train,
    /// Forecast `w_out` days past the end of the panel with a trained model.
    Forecast {
        /// Model checkpoint (overrides `data.model`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Backtest the configured models on the task's test period.
    Backtest,
    /// Summarize one or more backtest directories as a Markdown table.
    Report,
}

const KEYS_BUILD: &[&str] = &["out", "data", "panel"];
const KEYS_ANALYZE: &[&str] = &["out", "threads", "data", "analyze"];
const KEYS_SYNTH: &[&str] = &["out", "seed", "synth"];
const KEYS_TRAIN: &[&str] = &["out", "seed", "threads", "data", "task", "dwlstm"];
const KEYS_FORECAST: &[&str] = &["out", "threads", "data"];
const KEYS_BACKTEST: &[&str] = &["out", "seed", "threads", "data", "task", "dwlstm", "backtest"];
const KEYS_REPORT: &[&str] = &["out", "report"];

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for (name, keys) in [
        ("build-panel", KEYS_BUILD),
        ("analyze", KEYS_ANALYZE),
        ("synth", KEYS_SYNTH),
        ("train", KEYS_TRAIN),
        ("forecast", KEYS_FORECAST),
        ("backtest", KEYS_BACKTEST),
        ("report", KEYS_REPORT),
    ] {
        let text = documented_keys(keys);
        cmd = cmd.mut_subcommand(name, |c| c.after_help(text));
    }
    cmd
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(p) = cli.panel {
        cfg.data.panel = Some(p);
    }
    if cfg.threads > 0 {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match cli.command {
        Command::BuildPanel { raw } => {
            if let Some(r) = raw {
                cfg.data.raw = Some(r);
            }
            cmd_build_panel(&cfg)
        }
        Command::Analyze { retain } => {
            if let Some(r) = retain {
                cfg.analyze.retain = r;
            }
            cmd_analyze(&cfg)
        }
        Command::Synth => cmd_synth(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Forecast { model } => {
            if let Some(m) = model {
                cfg.data.model = Some(m);
            }
            cmd_forecast(&cfg)
        }
        Command::Backtest => cmd_backtest(&cfg),
        Command::Report => cmd_report(&cfg),
    }
}

fn existing(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| CliError::Config(format!("`{key}` is not set")))?;
    if !p.exists() {
        return Err(CliError::Config(format!("{key}: path {} does not exist", p.display())));
    }
    Ok(p)
}

fn create_out(cfg: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Records the resolved configuration next to the outputs.
fn write_run(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write(&dir.join("run.toml"), &cfg.to_toml())
}

fn load_panel(cfg: &RunConfig) -> Result<FeaturePanel> {
    Ok(read_panel_dir(existing(&cfg.data.panel, "data.panel")?)?)
}

/// Reads every `<name>.toml` schema in `dir` with its `<name>.csv`.
fn load_raw_dir(dir: &Path) -> Result<Vec<RawTable>> {
    let mut schemas: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    schemas.sort();
    if schemas.is_empty() {
        return Err(CliError::Config(format!(
            "data.raw: no *.toml schemas in {}",
            dir.display()
        )));
    }
    schemas
        .iter()
        .map(|s| {
            let schema = DatasetSchema::from_path(s)?;
            Ok(load_dataset(&schema, s.with_extension("csv"))?)
        })
        .collect()
}

fn cmd_build_panel(cfg: &RunConfig) -> Result<()> {
    let raw = existing(&cfg.data.raw, "data.raw")?;
    let tables = load_raw_dir(&raw)?;
    for t in &tables {
        for r in &t.rejects {
            log::warn!("{}:{}: rejected: {}", t.path.display(), r.line, r.reason);
        }
    }
    let build = build_panel(&tables, &cfg.panel)?;
    for line in &build.log {
        log::info!("{line}");
    }
    write_panel_dir(&build.panel, create_out(cfg)?)?;
    println!(
        "panel: {} counties x {} days -> {}",
        build.panel.n_counties(),
        build.panel.n_days(),
        cfg.out.display()
    );
    Ok(())
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let panel = generate_synthetic_panel(&cfg.synth, cfg.seed)?;
    let out = create_out(cfg)?;
    write_raw_dataset(&panel.to_tables(), out.join("raw"))?;
    write_panel_dir(&panel, out.join("panel"))?;
    write_run(out, cfg)?;
    println!(
        "synthetic panel: {} counties x {} days, seed {} -> {}",
        panel.n_counties(),
        panel.n_days(),
        cfg.seed,
        out.display()
    );
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let a = &cfg.analyze;
    if !(a.retain > 0.0 && a.retain <= 1.0) {
        return Err(CliError::Config("analyze.retain must be in (0, 1]".into()));
    }
    let report = correlate_panel(
        &panel,
        &cfg.outcomes()?,
        &ReportOptions {
            report_date: a.report_date,
            hist_bins: a.hist_bins,
            mi_bins: a.mi_bins,
        },
    )?;
    let out = create_out(cfg)?;
    report.write_csv(out.join("correlations.csv"))?;
    let (x, names, _) = panel_matrix(&panel, a.rows);
    let model = PcaModel::fit(
        x.view(),
        &names,
        &PcaOptions {
            standardize: a.standardize,
            retain: a.retain,
        },
    )?;
    model.write_dir(out)?;
    write_run(out, cfg)?;
    let (k, cumulative) = model.components_for_variance(a.retain);
    println!(
        "components for {} of variance: {k} (cumulative {:.6})",
        a.retain,
        cumulative.get(k - 1).copied().unwrap_or(0.0)
    );
    for (name, score) in model.rank_features(Some(5)) {
        println!("  {name}: {score:.6}");
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let task = cfg.task.resolve(&panel)?;
    let dw = countycast::forecast::DwlstmConfig {
        seed: cfg.seed,
        ..cfg.dwlstm.clone()
    };
    let model = forecast::train(&task.filter_panel(&panel)?, &task, &dw)?;
    let out = create_out(cfg)?;
    model.save(out.join("model.json"))?;
    write(&out.join("training_log.csv"), &model.training_log_csv())?;
    write_run(out, cfg)?;
    println!(
        "trained {} epochs (best {}), train loss {:.6} -> {}",
        model.log.len().saturating_sub(1),
        model.best_epoch,
        model.final_train_loss().unwrap_or(f64::NAN),
        out.join("model.json").display()
    );
    Ok(())
}

fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let model: DwlstmModel<f64> = DwlstmModel::load(existing(&cfg.data.model, "data.model")?)?;
    let panel = load_panel(cfg)?;
    let objective = model.names.target.parse()?;
    if panel
        .dynamic_features()
        .iter()
        .map(|f| &f.name)
        .ne(model.names.dynamic.iter())
        || panel
            .static_features()
            .iter()
            .map(|f| &f.name)
            .ne(model.names.statics.iter())
    {
        return Err(CliError::Lib(countycast::Error::ConfigMismatch(
            "panel features differ from the model's".into(),
        )));
    }
    let windows = latest_windows(&panel, objective, model.config.w_in)?;
    let mut csv = String::from("county,state,origin,date,lead,point\n");
    let origin = panel.end_date();
    for w in &windows {
        let key = &panel.counties()[w.county];
        for (lead, p) in model.forecast(w)?.iter().enumerate() {
            let date = origin + chrono::Days::new(lead as u64 + 1);
            let _ = writeln!(csv, "{},{},{origin},{date},{},{p}", key.fips(), key.state(), lead + 1);
        }
    }
    let out = create_out(cfg)?;
    write(&out.join("forecast.csv"), &csv)?;
    println!(
        "{} counties x {} days from {origin} -> {}",
        windows.len(),
        model.config.w_out,
        out.join("forecast.csv").display()
    );
    Ok(())
}

fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let task = cfg.task.resolve(&panel)?;
    let spec = cfg.model_spec();
    let out = create_out(cfg)?;
    if cfg.backtest.folds > 0 {
        let reports = backtest_folds(&panel, &task, &spec, cfg.backtest.folds, cfg.backtest.fold_days)?;
        for (j, r) in reports.iter().enumerate() {
            r.write_dir(out.join(format!("fold_{}", j + 1)))?;
            print_report(r);
        }
    } else {
        let r = backtest(&panel, &task, &spec)?;
        r.write_dir(out)?;
        print_report(&r);
    }
    write_run(out, cfg)
}

fn print_report(r: &EvalReport) {
    println!(
        "{} test {}..{} ({} counties)",
        r.objective, r.test_start, r.test_end, r.counties
    );
    for m in &r.models {
        println!("  {:<12} macro {:.4}  micro {:.4}", m.model, m.macro_rmse, m.micro_rmse);
    }
}

fn read_summary(dir: &Path) -> Result<Vec<EvalReport>> {
    let single = dir.join("summary.json");
    let mut paths = Vec::new();
    if single.is_file() {
        paths.push(single);
    } else {
        let mut folds: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path().join("summary.json")))
            .filter(|p| p.is_file())
            .collect();
        folds.sort();
        paths = folds;
    }
    if paths.is_empty() {
        return Err(CliError::Config(format!("no summary.json under {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Lib(countycast::Error::Parse {
                    path: p.clone(),
                    line: e.line() as u64,
                    detail: e.to_string(),
                })
            })
        })
        .collect()
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let inputs = if cfg.report.inputs.is_empty() {
        vec![cfg.out.clone()]
    } else {
        cfg.report.inputs.clone()
    };
    let mut md = String::from(
        "| objective | w_out | test period | model | macro RMSE | micro RMSE | avg daily RMSE | state macro | state micro | CI coverage |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    for dir in &inputs {
        if !dir.exists() {
            return Err(CliError::Config(format!(
                "report.inputs: path {} does not exist",
                dir.display()
            )));
        }
        for r in read_summary(dir)? {
            for m in &r.models {
                let _ = writeln!(
                    md,
                    "| {} | {} | {}..{} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} |",
                    r.objective,
                    r.w_out,
                    r.test_start,
                    r.test_end,
                    m.model,
                    m.macro_rmse,
                    m.micro_rmse,
                    m.avg_daily_rmse,
                    m.state_macro_rmse,
                    m.state_micro_rmse,
                    m.ci_coverage.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into())
                );
            }
        }
    }
    let out = create_out(cfg)?;
    write(&out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
