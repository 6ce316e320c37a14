use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pta_core::harness::{
    fcm_experiment, parse_event_sets, simulate_batch, summarize, LearnerPolicy, PolicyError, SessionMetrics,
    BUILTIN_POLICIES,
};
use pta_core::persuasive::PersuasiveError;
use pta_core::play::{journal_from_jsonl, journal_to_csv, journal_to_jsonl};
use pta_core::scenario::{reference_scenario, validate_scenario, Scenario, ScenarioError, Severity};
use pta_service::{SessionStore, StoreConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

const SCENARIO_DIR_ENV: &str = "PTA_SCENARIO_DIR";

#[derive(Parser)]
#[command(name = "pta", version, about = "Persuasive teachable agent tools")]
struct Cli {
    /// Directory searched for scenario names that are not paths.
    #[arg(long, global = true, env = SCENARIO_DIR_ENV)]
    scenario_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and list every finding.
    Validate { scenario: String },
    /// Run scripted or random learners against a scenario.
    Simulate {
        scenario: String,
        /// Built-in policy name or a policy file.
        #[arg(long, default_value = "diligent")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 720)]
        max_ticks: u64,
        /// Number of runs, seeded `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate stem fixed points for sets of activated events.
    FcmRun {
        scenario: String,
        /// TOML file with `sets = [[...], ...]`; defaults to the steady state
        /// plus the three cumulative laboratory sets.
        #[arg(long)]
        sets: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Serve the session API.
    Serve {
        scenario: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 3600)]
        session_ttl_secs: u64,
    },
    /// Convert session journals to JSON lines or CSV.
    Export {
        /// A journal file or a directory of `.jsonl` journals.
        session_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
        /// Write one file per journal here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

/// Marks an error caused by invalid input (exit code 1).
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn scenario_error(e: ScenarioError) -> anyhow::Error {
    match e {
        ScenarioError::Io { .. } => e.into(),
        other => Invalid(other.to_string()).into(),
    }
}

fn policy_error(e: PolicyError) -> anyhow::Error {
    match e {
        PolicyError::Io { .. } => e.into(),
        other => Invalid(other.to_string()).into(),
    }
}

/// A path, a file in the scenario directory, or the bundled reference.
fn scenario_source(arg: &str, dir: Option<&Path>) -> Result<Option<PathBuf>> {
    let direct = PathBuf::from(arg);
    if direct.is_file() {
        return Ok(Some(direct));
    }
    if let Some(dir) = dir {
        for candidate in [dir.join(arg), dir.join(format!("{arg}.toml"))] {
            if candidate.is_file() {
                return Ok(Some(candidate));
            }
        }
    }
    if arg == "reference" || arg == reference_scenario().meta.name {
        return Ok(None);
    }
    bail!(
        "no scenario `{arg}` (not a file{})",
        match dir {
            Some(d) => format!(", nor in {}", d.display()),
            None => String::new(),
        }
    )
}

fn read_scenario(arg: &str, dir: Option<&Path>) -> Result<(String, Scenario)> {
    match scenario_source(arg, dir)? {
        Some(path) => {
            let doc = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let s = Scenario::parse(&doc).map_err(scenario_error)?;
            Ok((path.display().to_string(), s))
        }
        None => Ok(("<reference>".to_string(), reference_scenario())),
    }
}

/// Loads and rejects scenarios with error findings.
fn load(arg: &str, dir: Option<&Path>) -> Result<Scenario> {
    let (origin, s) = read_scenario(arg, dir)?;
    if let Some(f) = validate_scenario(&s)
        .into_iter()
        .find(|f| f.severity == Severity::Error)
    {
        return Err(Invalid(format!("{origin}: {f}")).into());
    }
    Ok(s)
}

fn load_policy(arg: &str) -> Result<LearnerPolicy> {
    if BUILTIN_POLICIES.contains(&arg) {
        return LearnerPolicy::builtin(arg).map_err(policy_error);
    }
    let path = Path::new(arg);
    if path.is_file() {
        return LearnerPolicy::from_file(path).map_err(policy_error);
    }
    Err(Invalid(format!(
        "unknown policy `{arg}`; built-ins are {}",
        BUILTIN_POLICIES.join(", ")
    ))
    .into())
}

fn validate(arg: &str, dir: Option<&Path>) -> Result<()> {
    let (origin, s) = read_scenario(arg, dir)?;
    let findings = validate_scenario(&s);
    for f in &findings {
        println!("{f}");
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    let warnings = findings.len() - errors;
    println!("{origin}: {errors} errors, {warnings} warnings");
    if errors > 0 {
        return Err(Invalid(format!("{origin} has {errors} errors")).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    policy: &'a str,
    seed: u64,
    completed: bool,
    log: Option<String>,
    metrics: &'a SessionMetrics,
}

fn simulate(scenario: Scenario, policy: &str, seed: u64, max_ticks: u64, runs: u64, out: Option<&Path>) -> Result<()> {
    let policy = load_policy(policy)?;
    let seeds: Vec<u64> = (0..runs).map(|k| seed.wrapping_add(k)).collect();
    let results = simulate_batch(Arc::new(scenario), &policy, &seeds, max_ticks);
    let mut sims = Vec::with_capacity(results.len());
    for r in results {
        sims.push(r?);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut summaries = Vec::new();
    for sim in &sims {
        let log = match out {
            Some(dir) => {
                let path = dir.join(format!("{}-{}.jsonl", sim.policy, sim.seed));
                std::fs::write(&path, sim.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
                Some(path.display().to_string())
            }
            None => None,
        };
        summaries.push(RunSummary {
            policy: &sim.policy,
            seed: sim.seed,
            completed: sim.completed,
            log,
            metrics: &sim.metrics,
        });
    }
    if let Some(dir) = out {
        let path = dir.join("metrics.json");
        std::fs::write(&path, serde_json::to_string_pretty(&summaries)?)?;
    }
    if sims.len() == 1 && out.is_none() {
        print!("{}", sims[0].to_jsonl());
    } else {
        let means: BTreeMap<String, f64> = summarize(&sims);
        println!("{}", serde_json::to_string_pretty(&means)?);
    }
    Ok(())
}

fn default_sets() -> Vec<Vec<String>> {
    [
        vec![],
        vec!["Apply diffusion"],
        vec!["Apply diffusion", "Apply osmosis"],
        vec!["Apply diffusion", "Apply osmosis", "Apply evaporation"],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect()
}

fn fcm_run(scenario: &Scenario, sets: Option<&Path>, csv: bool) -> Result<()> {
    let sets = match sets {
        Some(p) => {
            let doc = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_event_sets(&doc).map_err(|e| Invalid(format!("{}: {e}", p.display())))?
        }
        None => default_sets(),
    };
    let exp = fcm_experiment(scenario, &sets).map_err(|e| match e {
        PersuasiveError::UnboundEvent(_) => anyhow::Error::from(Invalid(e.to_string())),
        other => other.into(),
    })?;
    print!("{}", if csv { exp.table.to_csv() } else { exp.table.to_text() });
    Ok(())
}

fn serve(scenario: Scenario, host: &str, port: u16, data_dir: Option<PathBuf>, ttl: u64) -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let mut scenarios = pta_service::reference_scenarios();
    scenarios.insert(scenario.meta.name.clone(), Arc::new(scenario));
    let store = Arc::new(SessionStore::new(
        scenarios,
        StoreConfig {
            data_dir,
            session_ttl: Duration::from_secs(ttl),
        },
    ));
    let restored = store.recover()?;
    if restored > 0 {
        eprintln!("restored {restored} sessions");
    }
    let addr: std::net::SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Invalid(format!("bad address {host}:{port}: {e}")))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(pta_service::serve(store, addr))?;
    Ok(())
}

fn journal_files(root: &Path) -> Result<Vec<PathBuf>> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn export(root: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let files = journal_files(root)?;
    if files.is_empty() {
        bail!("no .jsonl journals under {}", root.display());
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    for path in files {
        let doc = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let journal = journal_from_jsonl(&doc).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        let (text, ext) = match format {
            Format::Jsonl => (journal_to_jsonl(&journal), "jsonl"),
            Format::Csv => (journal_to_csv(&journal), "csv"),
        };
        match out {
            Some(dir) => {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                std::fs::write(dir.join(format!("{stem}.{ext}")), text)?;
            }
            None => print!("{text}"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let dir = cli.scenario_dir.as_deref();
    match cli.command {
        Command::Validate { scenario } => validate(&scenario, dir),
        Command::Simulate {
            scenario,
            policy,
            seed,
            max_ticks,
            runs,
            out,
        } => simulate(load(&scenario, dir)?, &policy, seed, max_ticks, runs, out.as_deref()),
        Command::FcmRun { scenario, sets, csv } => fcm_run(&load(&scenario, dir)?, sets.as_deref(), csv),
        Command::Serve {
            scenario,
            port,
            host,
            data_dir,
            session_ttl_secs,
        } => serve(load(&scenario, dir)?, &host, port, data_dir, session_ttl_secs),
        Command::Export {
            session_dir,
            format,
            out,
        } => export(&session_dir, format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Invalid>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
