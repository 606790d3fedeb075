//! `gaitway`: simulate, serve, analyze and export walking-balance sessions.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! usage.

mod files;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use gaitway_core::exec::Exec;
use gaitway_core::session::{
    compare_sessions, compute_report, run_simulated, ConfigError, RecallScript, Recording, RecordingError, SessionError,
    SessionReport,
};
use gaitway_core::sim::SimError;
use gaitway_core::wire::{self, Aggregation, WireError};
use gaitway_server::{Server, ServerError, ServerOptions, Source};

use files::{load_config, load_scenario, FileError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Structured,
}

#[derive(Debug, Parser)]
#[command(name = "gaitway", version, about = "Walking-balance assessment engine")]
struct Cli {
    /// Output style; `structured` prints JSON.
    #[arg(long, global = true, value_enum, default_value = "human")]
    format: Format,
    /// Default base directory for session output.
    #[arg(long, global = true, env = "GAITWAY_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a session in batch mode and write its recording.
    Simulate {
        /// Session config file (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Walker and scenario file (TOML or JSON).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Recording directory; defaults to <data-dir>/session-<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recall answer: `perfect`, `none` or comma-separated numbers.
        #[arg(long)]
        recall: Option<String>,
    },
    /// Serve the control channel and frame stream over WebSocket.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `sim` or `replay:<dir>`.
        #[arg(long, default_value = "sim")]
        source: String,
        #[arg(long, default_value = "127.0.0.1:8765")]
        listen: String,
        /// Wall-clock seconds per stream second; 0 streams unpaced.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Directory for completed session recordings.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the report of a recording.
    Analyze {
        dir: PathBuf,
        /// Baseline recording for dual-task costs.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Report file; defaults to <dir>/report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a 16-bit PGM heatmap of a recording's frames.
    ExportHeatmap {
        dir: PathBuf,
        #[arg(long, default_value = "mean")]
        mode: Aggregation,
        /// Image path; defaults to <dir>/heatmap-<mode>.pgm.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid argument {arg}: {message}")]
    Arg { arg: &'static str, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::File(FileError::Parse { .. })
            | CliError::File(FileError::Read { .. })
            | CliError::Config(_)
            | CliError::Arg { .. }
            | CliError::Session(SessionError::Config(_))
            | CliError::Session(SessionError::Sim(SimError::Param { .. } | SimError::Scenario(_))) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_recall(s: &str) -> Result<RecallScript, CliError> {
    match s.trim() {
        "perfect" => Ok(RecallScript::Perfect),
        "none" => Ok(RecallScript::None),
        list => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map(RecallScript::Numbers)
            .map_err(|e| CliError::Arg {
                arg: "--recall",
                message: e.to_string(),
            }),
    }
}

fn data_dir(cli_dir: &Option<PathBuf>) -> PathBuf {
    cli_dir.clone().unwrap_or_else(|| PathBuf::from("gaitway-data"))
}

fn fmt_opt(v: Option<f64>, digits: usize, unit: &str) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}{unit}"))
}

fn human_report(out: &mut impl Write, r: &SessionReport) -> std::io::Result<()> {
    let g = &r.gait;
    writeln!(out, "walk duration   {:.2} s", r.walk_duration_s)?;
    writeln!(out, "steps           {}", g.step_count)?;
    writeln!(out, "speed           {}", fmt_opt(g.mean_speed, 3, " m/s"))?;
    writeln!(out, "cadence         {}", fmt_opt(g.cadence, 1, " steps/min"))?;
    writeln!(out, "step length     {}", fmt_opt(g.step_length.map(|s| s.mean), 3, " m"))?;
    writeln!(out, "step width      {}", fmt_opt(g.step_width.map(|s| s.mean), 3, " m"))?;
    writeln!(out, "stance time     {}", fmt_opt(g.stance_time_mean, 3, " s"))?;
    writeln!(out, "trials          {}", r.trials.len())?;
    writeln!(out, "success rate    {}", fmt_opt(r.success_rate, 3, ""))?;
    writeln!(out, "ART mean        {}", fmt_opt(r.art.map(|a| a.mean), 3, " s"))?;
    writeln!(out, "clearance       {}", fmt_opt(r.mean_clearance, 3, " m"))?;
    if let Some(recall) = &r.recall {
        writeln!(out, "recall          {}/{} ({:.3})", recall.correct, recall.total, recall.accuracy)?;
    }
    if let Some(costs) = &r.dual_task_costs {
        writeln!(out, "costs vs {}", costs.baseline_label)?;
        for row in &costs.rows {
            writeln!(out, "  {:<16}{}", row.metric, fmt_opt(row.cost_pct, 2, " %"))?;
        }
        for w in &costs.warnings {
            writeln!(out, "  warning: {w}")?;
        }
    }
    let q = &r.quality;
    let mut flags = Vec::new();
    if q.aborted {
        flags.push("aborted".to_string());
    }
    if q.gait_incomplete {
        flags.push("gait incomplete".to_string());
    }
    if q.stream_gaps > 0 {
        flags.push(format!("{} stream gaps", q.stream_gaps));
    }
    if q.rejected_frames > 0 {
        flags.push(format!("{} rejected frames", q.rejected_frames));
    }
    if !q.unreliable_trials.is_empty() {
        flags.push(format!("unreliable trials {:?}", q.unreliable_trials));
    }
    if q.no_crossed_trials {
        flags.push("no crossed trials".to_string());
    }
    if q.recall_missing {
        flags.push("recall missing".to_string());
    }
    if q.ended_at_walkway_end {
        flags.push("ended at walkway end".to_string());
    }
    if let Some(w) = &q.walkway_warning {
        flags.push(w.clone());
    }
    writeln!(out, "quality         {}", if flags.is_empty() { "ok".to_string() } else { flags.join("; ") })
}

fn print_report(format: Format, header: serde_json::Value, report: &SessionReport) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let res = match format {
        Format::Structured => {
            let mut v = header;
            v["report"] = serde_json::to_value(report).expect("report serializes");
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"))
        }
        Format::Human => {
            let mut line = String::new();
            if let Some(obj) = header.as_object() {
                for (k, v) in obj {
                    line.push_str(&format!("{k}={} ", v.as_str().map_or_else(|| v.to_string(), str::to_string)));
                }
            }
            writeln!(out, "{}", line.trim_end()).and_then(|_| human_report(&mut out, report))
        }
    };
    res.map_err(io_err(Path::new("<stdout>")))
}

fn simulate(
    cli: &Cli,
    config: Option<&Path>,
    scenario: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    recall: Option<&str>,
    exec: Exec,
) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let sc = load_scenario(scenario)?;
    let recall = recall.map(parse_recall).transpose()?.unwrap_or(sc.recall.clone());
    let dir = out.map_or_else(|| data_dir(&cli.data_dir).join(format!("session-{}", cfg.seed)), Path::to_path_buf);
    let rec = run_simulated(&cfg, &sc.walker, &sc.scenario, &sc.factors, &recall, exec)?;
    rec.write(&dir)?;
    let report = rec.report.as_ref().expect("completed sessions carry a report");
    let header = serde_json::json!({
        "command": "simulate",
        "seed": cfg.seed,
        "out": dir.display().to_string(),
        "frames": rec.frames.len(),
    });
    print_report(cli.format, header, report)
}

fn parse_source(source: &str, sc: &files::ScenarioFile) -> Result<Source, CliError> {
    if source == "sim" {
        return Ok(Source::Sim {
            params: sc.walker,
            scenario: sc.scenario,
            factors: sc.factors,
        });
    }
    match source.strip_prefix("replay:") {
        Some(dir) if !dir.is_empty() => Ok(Source::replay(dir)?),
        _ => Err(CliError::Arg {
            arg: "--source",
            message: format!("expected `sim` or `replay:<dir>`, got `{source}`"),
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn serve(
    cli: &Cli,
    config: Option<&Path>,
    scenario: Option<&Path>,
    seed: Option<u64>,
    source: &str,
    listen: &str,
    time_scale: f64,
    out: Option<&Path>,
    exec: Exec,
) -> Result<(), CliError> {
    if !(time_scale >= 0.0 && time_scale.is_finite()) {
        return Err(CliError::Arg {
            arg: "--time-scale",
            message: "must be a finite non-negative number".into(),
        });
    }
    let sc = load_scenario(scenario)?;
    let src = parse_source(source, &sc)?;
    let initial = match (config, seed) {
        (None, None) => None,
        _ => {
            let mut cfg = load_config(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            Some(cfg)
        }
    };
    let seed_shown = initial.as_ref().map_or(0, |c| c.seed);
    let options = ServerOptions {
        time_scale,
        out_dir: Some(out.map_or_else(|| data_dir(&cli.data_dir), Path::to_path_buf)),
        config: initial,
        exec,
    };
    let server = Server::bind(listen, src, options)?;
    let addr = server.local_addr();
    match cli.format {
        Format::Structured => println!(
            "{}",
            serde_json::json!({"command": "serve", "listen": format!("ws://{addr}/"), "source": source, "seed": seed_shown})
        ),
        Format::Human => println!("command=serve seed={seed_shown} source={source} listening on ws://{addr}/"),
    }
    server.run();
    Ok(())
}

fn analyze(cli: &Cli, dir: &Path, baseline: Option<&Path>, out: Option<&Path>, exec: Exec) -> Result<(), CliError> {
    let rec = Recording::read(dir)?;
    let mut report = compute_report(&rec, exec);
    if let Some(b) = baseline {
        let base = compute_report(&Recording::read(b)?, exec);
        report.dual_task_costs = Some(compare_sessions(&base, &b.display().to_string(), &report));
    }
    let path = out.map_or_else(|| dir.join("report.json"), Path::to_path_buf);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    let header = serde_json::json!({
        "command": "analyze",
        "seed": rec.config.seed,
        "recording": dir.display().to_string(),
    });
    print_report(cli.format, header, &report)
}

fn export(cli: &Cli, dir: &Path, mode: Aggregation, out: Option<&Path>, exec: Exec) -> Result<(), CliError> {
    let rec = Recording::read(dir)?;
    let name = match mode {
        Aggregation::Mean => "heatmap-mean.pgm",
        Aggregation::Max => "heatmap-max.pgm",
    };
    let path = out.map_or_else(|| dir.join(name), Path::to_path_buf);
    let sidecar = wire::export_heatmap(&rec.frames, mode, &path, exec)?;
    match cli.format {
        Format::Structured => println!(
            "{}",
            serde_json::json!({
                "command": "export-heatmap",
                "seed": rec.config.seed,
                "image": path.display().to_string(),
                "sidecar": sidecar.display().to_string(),
                "frames": rec.frames.len(),
            })
        ),
        Format::Human => println!(
            "command=export-heatmap seed={} frames={} image={} sidecar={}",
            rec.config.seed,
            rec.frames.len(),
            path.display(),
            sidecar.display()
        ),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::Simulate {
            config,
            scenario,
            seed,
            out,
            recall,
        } => simulate(
            cli,
            config.as_deref(),
            scenario.as_deref(),
            *seed,
            out.as_deref(),
            recall.as_deref(),
            exec,
        ),
        Command::Serve {
            config,
            scenario,
            seed,
            source,
            listen,
            time_scale,
            out,
        } => serve(
            cli,
            config.as_deref(),
            scenario.as_deref(),
            *seed,
            source,
            listen,
            *time_scale,
            out.as_deref(),
            exec,
        ),
        Command::Analyze { dir, baseline, out } => analyze(cli, dir, baseline.as_deref(), out.as_deref(), exec),
        Command::ExportHeatmap { dir, mode, out } => export(cli, dir, *mode, out.as_deref(), exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaitway: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
