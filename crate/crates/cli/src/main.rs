//! `modhi`: pretrain component networks, replay datasets through the
//! monitoring engine and summarize run logs.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modhi::component::{BoundRule, ModelKind};
use modhi::config::{self, RunConfigFile, SYNTH_SOURCE};
use modhi::data::model_file;
use modhi::data::pretrain::{load_pretrain_series, pretrain_model, synth_pretrain_series};
use modhi::engine::{run_replay, RunLog};
use modhi::nn::TrainConfig;
use modhi::runlog::{self, LogTable};
use modhi::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_TRAINING: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_OUTPUT: u8 = 1;

#[derive(Parser)]
#[command(name = "modhi", version, about = "Modular health-indicator monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh network on a pretraining series and write a model file.
    Pretrain {
        #[arg(long)]
        kind: ModelKind,
        /// `synth` or the path of a headed CSV.
        #[arg(long)]
        source: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        epochs: Option<usize>,
        /// Length of the synthetic series.
        #[arg(long, default_value_t = 3000)]
        length: usize,
        /// CSV column to read; the first column when omitted.
        #[arg(long)]
        column: Option<String>,
    },
    /// Replay a dataset as configured and write the run log.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Bundled preset name (see `modhi presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Overrides `dataset.path`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides `output.log`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides `engine.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        plots: bool,
        /// Print every alarm as one JSON line.
        #[arg(long)]
        json_alarms: bool,
    },
    /// Summarize a run log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        plots: bool,
        /// Directory for SVG plots; defaults to the log's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the bundled presets, or print one.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

struct Failure {
    code: u8,
    error: Error,
}

/// Exit code of an error class; `io` is the code for I/O failures in the
/// calling context.
fn classify(error: Error, io: u8) -> Failure {
    let code = match &error {
        Error::Config(_) | Error::Setup(_) | Error::Format(_) => EXIT_CONFIG,
        Error::Training(_) | Error::Dimension(_) => EXIT_TRAINING,
        Error::Data(_) | Error::Parse { .. } | Error::InsufficientData(_) => EXIT_DATA,
        Error::Io { .. } => io,
    };
    Failure { code, error }
}

trait Classify<T> {
    fn class(self, io: u8) -> Result<T, Failure>;
}

impl<T> Classify<T> for modhi::Result<T> {
    fn class(self, io: u8) -> Result<T, Failure> {
        self.map_err(|e| classify(e, io))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain {
            kind,
            source,
            out,
            seed,
            window,
            stride,
            epochs,
            length,
            column,
        } => cmd_pretrain(
            kind,
            &source,
            &out,
            seed,
            window,
            stride,
            epochs,
            length,
            column.as_deref(),
        ),
        Command::Run {
            config,
            preset,
            data,
            log,
            seed,
            plots,
            json_alarms,
        } => cmd_run(config, preset, data, log, seed, plots, json_alarms),
        Command::Report { log, plots, out_dir } => cmd_report(&log, plots, out_dir),
        Command::Presets { show } => cmd_presets(show.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_pretrain(
    kind: ModelKind,
    source: &str,
    out: &Path,
    seed: u64,
    window: usize,
    stride: usize,
    epochs: Option<usize>,
    length: usize,
    column: Option<&str>,
) -> Result<(), Failure> {
    if window == 0 || stride == 0 {
        return Err(classify(
            Error::Config("--window and --stride must be positive".into()),
            EXIT_CONFIG,
        ));
    }
    let series = if source == SYNTH_SOURCE {
        synth_pretrain_series(kind, length, seed)
    } else {
        let path = Path::new(source);
        let file = fs::File::open(path).map_err(|e| {
            classify(
                Error::Config(format!("cannot read pretraining source {}: {e}", path.display())),
                EXIT_CONFIG,
            )
        })?;
        load_pretrain_series(file, column).class(EXIT_CONFIG)?
    };
    let mut train = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = epochs {
        train.max_epochs = e;
    }
    train.validate().class(EXIT_CONFIG)?;
    let model = pretrain_model(kind, &series, window, stride, &train, &BoundRule::default()).map_err(|e| {
        let f = classify(e, EXIT_TRAINING);
        match f.code {
            EXIT_CONFIG => f,
            _ => Failure {
                code: EXIT_TRAINING,
                error: f.error,
            },
        }
    })?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure {
            code: EXIT_OUTPUT,
            error: Error::Data(format!("cannot create {}: {e}", dir.display())),
        })?;
    }
    model_file::save_model(out, &model).class(EXIT_OUTPUT)?;
    println!(
        "pretrained {kind} model: {} samples, window {window}, seed {seed}",
        series.len()
    );
    println!(
        "normalizer mean {} std {}, burn-in HI mean {} std {}, bound {}",
        model.normalizer.mean, model.normalizer.std, model.burn_in_hi_mean, model.burn_in_hi_std, model.hi_upper_bound
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_run(
    config_path: Option<PathBuf>,
    preset: Option<String>,
    data: Option<PathBuf>,
    log: Option<PathBuf>,
    seed: Option<u64>,
    plots: bool,
    json_alarms: bool,
) -> Result<(), Failure> {
    let (mut cfg, base) = match (&config_path, &preset) {
        (Some(p), _) => {
            let cfg = RunConfigFile::load(p).class(EXIT_CONFIG)?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        (None, Some(name)) => (config::preset(name).class(EXIT_CONFIG)?, PathBuf::new()),
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    let cwd = PathBuf::new();
    let data_base = if data.is_some() { &cwd } else { &base };
    if let Some(d) = data {
        cfg.dataset.path = d;
    }
    let log_path = match log {
        Some(l) => l,
        None => config::resolve(&base, &cfg.output.log),
    };
    if let Some(s) = seed {
        cfg.engine.seed = s;
    }
    cfg.validate().class(EXIT_CONFIG)?;
    for (kind, src) in &cfg.pretrained {
        if src != SYNTH_SOURCE && !config::resolve(&base, Path::new(src)).exists() {
            return Err(classify(
                Error::Setup(format!("pretrained model for kind {kind} not found at {src}")),
                EXIT_CONFIG,
            ));
        }
    }

    let dataset = cfg.load_dataset(data_base).class(EXIT_DATA)?;
    let store = cfg.pretrained_models(&base).class(EXIT_CONFIG)?;
    let run = run_replay(&dataset, cfg.engine_config(), &store).class(EXIT_DATA)?;

    if json_alarms {
        for a in run.alarms() {
            println!("{}", runlog::alarm_json_line(a));
        }
    }
    let written = runlog::save_run(&log_path, &run).class(EXIT_OUTPUT)?;
    print_run_summary(&run);
    if plots || cfg.output.plots {
        let mut buf = Vec::new();
        runlog::write_runlog_csv(&mut buf, &run).class(EXIT_OUTPUT)?;
        let table = runlog::read_runlog_csv(buf.as_slice()).class(EXIT_OUTPUT)?;
        let dir = log_path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in write_plots(&table, &dir, &stem(&log_path))? {
            println!("wrote {}", p.display());
        }
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string()
}

fn print_run_summary(run: &RunLog) {
    if let Some(cal) = &run.calibration {
        for c in &cal.components {
            println!(
                "component {} ({}, weight {}): HI bound {} (burn-in mean {}, std {}; {} epochs, best {})",
                c.sensor_id,
                c.model_kind,
                c.weight,
                c.hi_upper_bound,
                c.burn_in_hi_mean,
                c.burn_in_hi_std,
                c.epochs_run,
                c.best_epoch
            );
        }
        println!(
            "joint: HI bound {} (burn-in mean {}, std {} over {} points)",
            cal.joint.upper_bound, cal.joint.burn_in_mean, cal.joint.burn_in_std, cal.joint.burn_in_points
        );
    }
    let mut triggers: Vec<&str> = run.sensors.iter().map(String::as_str).collect();
    triggers.push(modhi::supervisor::JOINT_TRIGGER);
    let count = run.alarms().count();
    if count == 0 {
        println!("no alarms");
        return;
    }
    println!(
        "alarms: {count} steps, first at t={}",
        run.first_alarm().map(|a| a.t).unwrap_or(0)
    );
    for t in triggers {
        match run.first_crossing(t) {
            Some(step) => println!("first crossing {t}: t={step}"),
            None => println!("first crossing {t}: none"),
        }
    }
}

fn write_plots(table: &LogTable, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, Failure> {
    let t_max = table.rows.iter().map(|r| r.t).max().unwrap_or(1);
    let burn = svg::burn_in_end(table);
    let mut out = Vec::new();
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Failure {
            code: EXIT_OUTPUT,
            error: Error::Data(format!("cannot create {}: {e}", dir.display())),
        })?;
    }
    for s in svg::series_from_table(table) {
        let path = dir.join(format!("{stem}.{}.svg", s.title));
        fs::write(&path, svg::render(&s, t_max, burn)).map_err(|e| Failure {
            code: EXIT_OUTPUT,
            error: Error::Data(format!("cannot write {}: {e}", path.display())),
        })?;
        out.push(path);
    }
    Ok(out)
}

fn cmd_report(log: &Path, plots: bool, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let table = runlog::load_runlog(log).class(EXIT_DATA)?;
    let summary = table.summarize();
    println!(
        "{} steps: {} burn-in, {} evaluated",
        summary.total_steps, summary.burn_in_steps, summary.evaluated_steps
    );
    let (_, cal_path) = runlog::sibling_paths(log);
    if cal_path.exists() {
        let cal = runlog::load_calibration(&cal_path).class(EXIT_DATA)?;
        for c in &cal.components {
            println!(
                "burn-in {}: HI mean {} std {} bound {}",
                c.sensor_id, c.burn_in_hi_mean, c.burn_in_hi_std, c.hi_upper_bound
            );
        }
        println!(
            "burn-in joint: HI mean {} std {} bound {}",
            cal.joint.burn_in_mean, cal.joint.burn_in_std, cal.joint.upper_bound
        );
    }
    if summary.alarm_count == 0 {
        println!("no alarms");
    } else {
        for (name, first) in &summary.first_crossings {
            match first {
                Some(t) => println!("first crossing {name}: t={t}"),
                None => println!("first crossing {name}: none"),
            }
        }
        println!(
            "alarms: {} steps in {} spans",
            summary.alarm_count,
            summary.alarm_spans.len()
        );
        for s in &summary.alarm_spans {
            println!("alarm span t={}..{} ({} steps)", s.start, s.end, s.steps);
        }
    }
    if plots {
        let dir = out_dir.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_default());
        for p in write_plots(&table, &dir, &stem(log))? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn cmd_presets(show: Option<&str>) -> Result<(), Failure> {
    match show {
        Some(name) => {
            let src = config::preset_source(name)
                .ok_or_else(|| classify(Error::Config(format!("unknown preset {name:?}")), EXIT_CONFIG))?;
            print!("{src}");
        }
        None => {
            for n in config::preset_names() {
                println!("{n}");
            }
        }
    }
    Ok(())
}
