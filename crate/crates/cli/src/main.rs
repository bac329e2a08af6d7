mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use uavsim::agent::checkpoint::{load_checkpoint, save_checkpoint};
use uavsim::agent::train::{log_to_jsonl, train_with_progress};
use uavsim::agent::{AgentKind, BaselineConfig, PpoConfig, TrainRequest};
use uavsim::coverage::{compute_coverage_grid, export_grid, ExportFormat};
use uavsim::env::{EndpointMode, EnvConfig};
use uavsim::geometry::{generate_synthetic_scenario, load_scenario, save_scenario, SyntheticParams};
use uavsim::harness::{compare, evaluate_sweep, read_results_csv, write_deltas_csv, ExperimentConfig};

use manifest::Manifest;

const SEED_ENV: &str = "UAVSIM_SEED";

/// Connectivity-aware UAV path planning: scenarios, coverage maps, PPO
/// training and evaluation.
#[derive(Debug, Parser)]
#[command(name = "uavsim", version)]
struct Cli {
    /// Directory receiving every artifact and the run manifest.
    #[arg(long, global = true, default_value = "uavsim-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config for the subcommand (a previous manifest also works);
    /// flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic city scenario.
    GenScenario(GenArgs),
    /// RSRP heatmaps at one or more altitudes.
    Coverage(CoverageArgs),
    /// Train an agent with PPO.
    Train(TrainArgs),
    /// Evaluate an agent over a distance sweep.
    Eval(EvalArgs),
    /// Per-distance deltas between two result tables.
    Compare(CompareArgs),
    /// Run the oracle and invariant suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Area as W,H meters.
    #[arg(long, value_parser = parse_pair)]
    area: Option<[f64; 2]>,
    #[arg(long)]
    buildings: Option<usize>,
    #[arg(long)]
    gbs: Option<usize>,
    /// Minimum source/destination separation in meters.
    #[arg(long)]
    separation: Option<f64>,
    /// File name of the scenario inside the output directory.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated altitudes in meters.
    #[arg(long, value_delimiter = ',')]
    altitudes: Option<Vec<f64>>,
    /// Cell size in meters.
    #[arg(long)]
    cell: Option<f64>,
    /// Export formats: csv, pgm or both (comma-separated).
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// dupac or baseline.
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// fixed, jitter:RADIUS or random:MIN:MAX.
    #[arg(long, value_parser = parse_endpoints)]
    endpoints: Option<EndpointMode>,
    #[arg(long)]
    rollout: Option<usize>,
    #[arg(long)]
    envs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// dupac, baseline or random; defaults to the checkpoint's kind.
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated source/destination ranges in meters.
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<f64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample actions instead of using distribution modes.
    #[arg(long)]
    stochastic: bool,
    /// Skip the per-step trace file.
    #[arg(long)]
    no_traces: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Results CSV of the first agent.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Results CSV of the second agent.
    #[arg(long)]
    b: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    seed: Option<u64>,
}

/// Error that maps to the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<&str> = s.split(',').collect();
    match v.as_slice() {
        [a, b] => Ok([a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?]),
        _ => Err("expected W,H".into()),
    }
}

fn parse_endpoints(s: &str) -> Result<EndpointMode, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    match parts.as_slice() {
        ["fixed"] => Ok(EndpointMode::Fixed),
        ["jitter", r] => Ok(EndpointMode::Jitter { radius: num(r)? }),
        ["random", lo, hi] => Ok(EndpointMode::RandomDestination { min_range: num(lo)?, max_range: num(hi)? }),
        _ => Err("expected fixed, jitter:RADIUS or random:MIN:MAX".into()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenConfig {
    seed: u64,
    file: String,
    params: SyntheticParams,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { seed: 0, file: "scenario.json".into(), params: SyntheticParams::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CoverageConfig {
    scenario: Option<PathBuf>,
    altitudes: Vec<f64>,
    cell: f64,
    formats: Vec<String>,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self { scenario: None, altitudes: vec![30.0, 60.0, 100.0], cell: 10.0, formats: vec!["csv".into(), "pgm".into()] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainConfig {
    scenario: Option<PathBuf>,
    agent: AgentKind,
    total_steps: usize,
    seed: u64,
    env: EnvConfig,
    ppo: PpoConfig,
    baseline: BaselineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            agent: AgentKind::Dupac,
            total_steps: 200_000,
            seed: 0,
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    scenario: Option<PathBuf>,
    agent: Option<AgentKind>,
    checkpoint: Option<PathBuf>,
    distances: Vec<f64>,
    episodes: usize,
    seed: u64,
    deterministic: bool,
    traces: bool,
    env: EnvConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            agent: None,
            checkpoint: None,
            distances: vec![200.0, 400.0, 600.0, 800.0],
            episodes: 50,
            seed: 0,
            deterministic: true,
            traces: true,
            env: EnvConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompareConfig {
    a: Option<PathBuf>,
    b: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ValidateConfig {
    seed: u64,
}

/// Reads a subcommand config, unwrapping a manifest if given one.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
    if let Some(obj) = value.as_object_mut() {
        if let (Some(cmd), Some(cfg)) = (obj.get("command").cloned(), obj.remove("config")) {
            if cmd.as_str() != Some(command) {
                return usage(format!("manifest {} belongs to `{}`, not `{command}`", path.display(), cmd));
            }
            value = cfg;
        }
    }
    serde_json::from_value(value).map_err(|e| Usage(format!("config {}: {e}", path.display())).into())
}

/// Flag, then `UAVSIM_SEED`, then config.
fn resolve_seed(flag: Option<u64>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")).into()),
        Err(_) => Ok(config),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    match p {
        Some(p) => Ok(p),
        None => usage(format!("missing --{what} (or `{what}` in --config)")),
    }
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn gen_scenario(cli: &Cli, a: &GenArgs) -> Result<()> {
    let mut cfg: GenConfig = load_config(cli.config.as_deref(), "gen-scenario")?;
    cfg.seed = resolve_seed(a.seed, cfg.seed)?;
    if let Some(v) = a.area {
        cfg.params.area_size = v;
    }
    if let Some(v) = a.buildings {
        cfg.params.n_buildings = v;
    }
    if let Some(v) = a.gbs {
        cfg.params.n_gbs = v;
    }
    if let Some(v) = a.separation {
        cfg.params.min_separation = v;
    }
    if let Some(v) = &a.name {
        cfg.file = v.clone();
    }
    let scenario = generate_synthetic_scenario(&cfg.params, cfg.seed)?;
    create_out(&cli.out)?;
    let path = cli.out.join(&cfg.file);
    save_scenario(&scenario, &path)?;
    println!(
        "scenario: {} buildings, {} gbs, source {:?}, destination {:?} -> {}",
        scenario.buildings.len(),
        scenario.gbs_list.len(),
        scenario.source.to_array(),
        scenario.destination.to_array(),
        path.display()
    );
    Manifest::new("gen-scenario", Some(cfg.seed), to_json(&cfg)?).write(&cli.out, &[path])?;
    Ok(())
}

fn coverage(cli: &Cli, a: &CoverageArgs) -> Result<()> {
    let mut cfg: CoverageConfig = load_config(cli.config.as_deref(), "coverage")?;
    if a.scenario.is_some() {
        cfg.scenario = a.scenario.clone();
    }
    if let Some(v) = &a.altitudes {
        cfg.altitudes = v.clone();
    }
    if let Some(v) = a.cell {
        cfg.cell = v;
    }
    if let Some(v) = &a.formats {
        cfg.formats = v.clone();
    }
    let scenario_path = require(&cfg.scenario, "scenario")?;
    if cfg.altitudes.is_empty() {
        return usage("--altitudes needs at least one value");
    }
    let formats: Vec<ExportFormat> = cfg
        .formats
        .iter()
        .map(|f| match f.as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "pgm" => Ok(ExportFormat::Pgm),
            other => usage(format!("unknown format {other:?} (csv, pgm)")),
        })
        .collect::<Result<_>>()?;
    let scenario = load_scenario(scenario_path)?;
    create_out(&cli.out)?;
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for &z in &cfg.altitudes {
        let grid = compute_coverage_grid(&scenario, z, cfg.cell)?;
        let mean = grid.mean_rsrp();
        println!(
            "altitude {z:>6.1} m: {}x{} cells, mean RSRP {}",
            grid.width,
            grid.height,
            mean.map_or("n/a".into(), |m| format!("{m:.2} dBm"))
        );
        summary.push(serde_json::json!({ "altitude_m": z, "mean_rsrp_dbm": mean, "width": grid.width, "height": grid.height }));
        for f in &formats {
            let ext = match f {
                ExportFormat::Csv => "csv",
                ExportFormat::Pgm => "pgm",
            };
            let path = cli.out.join(format!("coverage_z{z}.{ext}"));
            export_grid(&grid, &path, *f)?;
            files.push(path);
        }
    }
    let summary_path = cli.out.join("coverage_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    files.push(summary_path);
    Manifest::new("coverage", None, to_json(&cfg)?).write(&cli.out, &files)?;
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(cli.config.as_deref(), "train")?;
    if a.scenario.is_some() {
        cfg.scenario = a.scenario.clone();
    }
    if let Some(k) = a.agent {
        cfg.agent = k;
    }
    if let Some(v) = a.steps {
        cfg.total_steps = v;
    }
    if let Some(v) = &a.endpoints {
        cfg.env.endpoints = v.clone();
    }
    if let Some(v) = a.rollout {
        cfg.ppo.rollout_length = v;
    }
    if let Some(v) = a.envs {
        cfg.ppo.n_envs = v;
    }
    cfg.seed = resolve_seed(a.seed, cfg.seed)?;
    if cfg.agent == AgentKind::Random {
        return usage("the random agent has nothing to train");
    }
    cfg.ppo.validate().map_err(|e| Usage(e.to_string()))?;
    cfg.env.validate().map_err(|e| Usage(e.to_string()))?;
    let scenario = Arc::new(load_scenario(require(&cfg.scenario, "scenario")?)?);
    let req = TrainRequest {
        kind: cfg.agent,
        env: cfg.env.clone(),
        ppo: cfg.ppo.clone(),
        baseline: cfg.baseline,
        total_steps: cfg.total_steps,
        seed: cfg.seed,
    };
    let verbose = cli.verbose;
    let outcome = train_with_progress(scenario, &req, |r| {
        if verbose {
            eprintln!(
                "iter {:>4} steps {:>8} episodes {:>4} reward {} reach {} collide {} entropy {:.3}",
                r.iteration,
                r.steps,
                r.episodes,
                r.mean_reward.map_or("-".into(), |v| format!("{v:.1}")),
                r.reach_rate.map_or("-".into(), |v| format!("{v:.2}")),
                r.collision_rate.map_or("-".into(), |v| format!("{v:.2}")),
                r.entropy
            );
        }
    })?;
    create_out(&cli.out)?;
    let ckpt = cli.out.join(format!("{}.ckpt", cfg.agent.as_str()));
    save_checkpoint(&outcome.agent, &ckpt)?;
    let log = cli.out.join("train_log.jsonl");
    std::fs::write(&log, log_to_jsonl(&outcome.log))?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} for {} steps ({} iterations); last reach rate {}",
            cfg.agent.as_str(),
            last.steps,
            last.iteration,
            last.reach_rate.map_or("n/a".into(), |v| format!("{v:.2}"))
        );
    }
    Manifest::new("train", Some(cfg.seed), to_json(&cfg)?).write(&cli.out, &[ckpt, log])?;
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let mut cfg: EvalConfig = load_config(cli.config.as_deref(), "eval")?;
    if a.scenario.is_some() {
        cfg.scenario = a.scenario.clone();
    }
    if a.agent.is_some() {
        cfg.agent = a.agent;
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint.clone();
    }
    if let Some(v) = &a.distances {
        cfg.distances = v.clone();
    }
    if let Some(v) = a.episodes {
        cfg.episodes = v;
    }
    if a.stochastic {
        cfg.deterministic = false;
    }
    if a.no_traces {
        cfg.traces = false;
    }
    cfg.seed = resolve_seed(a.seed, cfg.seed)?;
    let scenario = require(&cfg.scenario, "scenario")?.clone();
    let agent = match (cfg.agent, &cfg.checkpoint) {
        (Some(k), _) => k,
        (None, Some(p)) => load_checkpoint(p).with_context(|| format!("reading checkpoint {}", p.display()))?.kind,
        (None, None) => return usage("eval needs --checkpoint or --agent random"),
    };
    cfg.agent = Some(agent);
    let exp = ExperimentConfig {
        scenario,
        agent,
        checkpoint: cfg.checkpoint.clone(),
        distances: cfg.distances.clone(),
        episodes: cfg.episodes,
        seed: cfg.seed,
        output_dir: cli.out.clone(),
        deterministic: cfg.deterministic,
        env: cfg.env.clone(),
        write_traces: cfg.traces,
    };
    if let Err(e) = exp.validate() {
        return usage(e.to_string());
    }
    let (result, artifacts) = evaluate_sweep(&exp)?;
    println!("{:>10} {:>8} {:>8} {:>10} {:>10} {:>10}", "distance", "reach", "extra", "excellent", "rsrp", "handover");
    for r in &result.rows {
        println!(
            "{:>10.1} {:>8.3} {:>8.3} {:>10.3} {:>10.2} {:>10.2}",
            r.distance_m, r.reach_rate, r.mean_extra_distance_ratio, r.mean_excellent_frac, r.mean_rsrp_dbm, r.mean_handovers
        );
    }
    let files: Vec<PathBuf> = artifacts.paths().into_iter().map(Path::to_path_buf).collect();
    Manifest::new("eval", Some(cfg.seed), to_json(&cfg)?).write(&cli.out, &files)?;
    Ok(())
}

fn compare_cmd(cli: &Cli, a: &CompareArgs) -> Result<()> {
    let mut cfg: CompareConfig = load_config(cli.config.as_deref(), "compare")?;
    if a.a.is_some() {
        cfg.a = a.a.clone();
    }
    if a.b.is_some() {
        cfg.b = a.b.clone();
    }
    let ta = read_results_csv(require(&cfg.a, "a")?)?;
    let tb = read_results_csv(require(&cfg.b, "b")?)?;
    let deltas = compare(&ta, &tb)?;
    create_out(&cli.out)?;
    let path = cli.out.join("deltas.csv");
    write_deltas_csv(&deltas, &path)?;
    println!("{:>10} {:>12} {:>12} {:>12}", "distance", "d_extra", "d_excellent", "d_rsrp_db");
    for d in &deltas {
        println!(
            "{:>10.1} {:>12.4} {:>12.4} {:>12.3}",
            d.distance_m, d.delta_extra_distance_ratio, d.delta_excellent_frac, d.delta_mean_rsrp_db
        );
    }
    Manifest::new("compare", None, to_json(&cfg)?).write(&cli.out, &[path])?;
    Ok(())
}

fn validate_cmd(cli: &Cli, a: &ValidateArgs) -> Result<()> {
    let mut cfg: ValidateConfig = load_config(cli.config.as_deref(), "validate")?;
    cfg.seed = resolve_seed(a.seed, cfg.seed)?;
    let results = uavsim::validate::run_all(cfg.seed);
    for r in &results {
        println!("[{}] {:<32} {} ({} ms)", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail, r.elapsed_ms);
    }
    create_out(&cli.out)?;
    let path = cli.out.join("validate.json");
    std::fs::write(&path, serde_json::to_string_pretty(&results)? + "\n")?;
    Manifest::new("validate", Some(cfg.seed), to_json(&cfg)?).write(&cli.out, &[path])?;
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        bail!("{failed} validation check(s) failed");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return usage("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    match &cli.command {
        Command::GenScenario(a) => gen_scenario(cli, a),
        Command::Coverage(a) => coverage(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Compare(a) => compare_cmd(cli, a),
        Command::Validate(a) => validate_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            eprintln!("run `uavsim --help` for usage");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
