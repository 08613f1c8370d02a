//! Command line front end for the station lifecycle simulator.
//!
//! Exit codes: 0 success, 2 invalid input (scenario, graph, stream, or
//! generator documents), 3 runtime failure (including `compare` finding
//! differences), 4 usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use weir_core::error::{Error, ErrorCategory};
use weir_core::power::TraceGenerator;
use weir_core::scheduler::UplinkPolicy;
use weir_core::sim::{compare_summaries, run, Event, Scenario, SimConfig};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "weir",
    version,
    about = "Deterministic simulator for energy-harvesting knowledge stations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario bundle and check every referenced document.
    Validate {
        /// Path to a scenario TOML file.
        scenario: PathBuf,
    },
    /// Execute a scenario and emit its artifacts.
    Run {
        /// Path to a scenario TOML file.
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the artifact set (run_summary.toml, slots.csv,
        /// events.jsonl, anomalies.jsonl, final_graph.toml). Without it the
        /// summary is printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a harvest generator file into a trace file.
    GenTrace {
        /// Path to a generator TOML file (kind, slots, slot_minutes, ...).
        generator: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two run summaries field by field.
    ///
    /// Exits 0 when identical and 3 when anything differs; differing input
    /// hashes are called out as an input mismatch rather than a
    /// reproducibility failure.
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
    /// Reconstruct one observation's lifecycle from an event log.
    Explain {
        /// Path to an events.jsonl file produced by `run --out`.
        events: PathBuf,
        /// Observation id to trace.
        obs_id: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            let _ = e.print();
            return match kind {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e.category() {
                ErrorCategory::Validation => ExitCode::from(EXIT_VALIDATION),
                ErrorCategory::Runtime => ExitCode::from(EXIT_RUNTIME),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, out.as_deref()),
        Command::GenTrace { generator, out } => cmd_gen_trace(&generator, out.as_deref()),
        Command::Compare { a, b } => cmd_compare(&a, &b),
        Command::Explain { events, obs_id } => cmd_explain(&events, &obs_id),
    }
}

fn load(path: &Path) -> Result<SimConfig, Error> {
    Scenario::load_path(path)?.resolve()
}

fn policy_label(policy: &UplinkPolicy) -> &'static str {
    match policy {
        UplinkPolicy::Adaptive => "adaptive",
        UplinkPolicy::FixedWindow { .. } => "fixed_window",
        UplinkPolicy::AlwaysOn { .. } => "always_on",
    }
}

fn cmd_validate(path: &Path) -> Result<ExitCode, Error> {
    let config = load(path)?;
    println!(
        "ok: {} ({} slots of {} min, {} frames, {} communities, policy {})",
        config.name,
        config.horizon_slots,
        config.slot_minutes,
        config.stream.records.len(),
        config.graph.communities().count(),
        policy_label(&config.policy),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<ExitCode, Error> {
    let mut config = load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let output = run(&config)?;
    match out {
        Some(dir) => {
            output.write_dir(dir)?;
            println!(
                "{}: {} slots, {} frames, {} insights; artifacts in {}",
                config.name,
                output.slot_rows.len(),
                output.metrics.frames_total,
                output.metrics.frames_insight,
                dir.display()
            );
        }
        None => print!("{}", output.summary_toml()?),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_trace(path: &Path, out: Option<&Path>) -> Result<ExitCode, Error> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let generator: TraceGenerator =
        toml::from_str(&text).map_err(|e| Error::schema(path.display(), e.message()))?;
    generator.validate()?;
    let trace = generator.generate()?;
    match out {
        Some(file) => {
            trace.save_path(file)?;
            println!("wrote {} ({} slots)", file.display(), trace.values.len());
        }
        None => print!("{}", trace.save()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(a: &Path, b: &Path) -> Result<ExitCode, Error> {
    let read = |p: &Path| -> Result<String, Error> {
        std::fs::read_to_string(p).map_err(|e| Error::io(p.display(), e))
    };
    let report = compare_summaries(&read(a)?, &read(b)?)?;
    if report.identical {
        println!("summaries identical");
        return Ok(ExitCode::SUCCESS);
    }
    if report.input_mismatch {
        println!("input mismatch: the runs saw different inputs");
    }
    for d in &report.differences {
        println!("  {d}");
    }
    Ok(ExitCode::from(EXIT_RUNTIME))
}

fn cmd_explain(events_path: &Path, obs_id: &str) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(events_path)
        .map_err(|e| Error::io(events_path.display(), e))?;
    let path = events_path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::schema(&path, "empty event log"))?;
    let head: serde_json::Value = serde_json::from_str(header).map_err(|e| Error::Line {
        path: path.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    if head.get("format").and_then(|v| v.as_str()) != Some("events") {
        return Err(Error::schema(&path, "not an event log"));
    }

    let mut found = false;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(line).map_err(|e| Error::Line {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let about_this = match &event {
            Event::Transmit { obs_ids, .. } => obs_ids.iter().any(|id| id == obs_id),
            other => other.obs_id() == Some(obs_id),
        };
        if about_this {
            found = true;
            println!("{}", narrate(&event));
        }
    }
    if !found {
        return Err(Error::UnknownObservation(obs_id.to_string()));
    }
    Ok(ExitCode::SUCCESS)
}

fn narrate(event: &Event) -> String {
    match event {
        Event::Frame {
            slot,
            decision,
            entropy,
            sentinel,
            predicted,
            true_entity,
            ..
        } => {
            let grounding = if *sentinel {
                "nothing in the station graph matched".to_string()
            } else {
                format!("entropy {entropy:.4}")
            };
            let action = match (decision.as_str(), predicted) {
                ("routine", Some(p)) => format!("handled on-station, predicted `{p}`"),
                ("routine", None) => "handled on-station".to_string(),
                _ => "escalated as an insight packet".to_string(),
            };
            let truth = match true_entity {
                Some(t) => format!(" (ground truth `{t}`)"),
                None => String::new(),
            };
            format!("slot {slot}: frame observed, {grounding}; {action}{truth}")
        }
        Event::QueueDrop { slot, .. } => {
            format!("slot {slot}: dropped from a full queue as the lowest priority")
        }
        Event::Transmit { slot, k, .. } => {
            format!("slot {slot}: uplinked in a batch of {k}")
        }
        Event::Resolved {
            slot,
            outcome,
            predicted,
            rule_index,
            community,
            ready_at,
            ..
        } => match outcome.as_str() {
            "master_patch" => format!(
                "slot {slot}: master graph resolved it as `{}`; patch for `{}` ready at slot {}",
                predicted.as_deref().unwrap_or("?"),
                community.as_deref().unwrap_or("?"),
                ready_at.map_or("?".to_string(), |r| r.to_string()),
            ),
            "expert_patch" => format!(
                "slot {slot}: reviewer rule {} matched; patch for `{}` ready at slot {}",
                rule_index.map_or("?".to_string(), |r| r.to_string()),
                community.as_deref().unwrap_or("?"),
                ready_at.map_or("?".to_string(), |r| r.to_string()),
            ),
            _ => format!("slot {slot}: unresolved in the cloud, recorded as an anomaly"),
        },
        Event::PatchDelivered {
            slot,
            community,
            source,
            added_nodes,
            added_edges,
            ..
        } => format!(
            "slot {slot}: patch for `{community}` delivered from the {source} \
             (+{added_nodes} nodes, +{added_edges} edges)"
        ),
        Event::Eviction {
            slot,
            community,
            size,
            ..
        } => format!("slot {slot}: community `{community}` evicted (freed {size})"),
    }
}
