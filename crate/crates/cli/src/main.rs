use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use oim_core::env::ENV_NAMES;
use oim_core::harness::{check_expectations, emit, run_and_emit, OutputFormat, OutputSpec, AGENT_KINDS};
use oim_core::pac::{asymptotic_report, bounds, BoundInputs, BoundVariant};
use oim_core::{EnvSpec, Error, ExperimentConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_EXPECTATION: u8 = 3;

#[derive(Parser)]
#[command(name = "oim", version, about = "Optimistic-model exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment
    Run(RunArgs),
    /// Run every *.json experiment config in a directory
    Bench(BenchArgs),
    /// Evaluate the sample-complexity bounds
    Theory(TheoryArgs),
    /// Inspect or validate an environment
    Env(EnvArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// Environment parameter as key=value (repeatable)
    #[arg(long = "env-param", value_name = "KEY=VALUE")]
    env_params: Vec<String>,
    #[arg(long)]
    agent: Option<String>,
    /// Agent parameter as key=value (repeatable)
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Exploration reward of the oim agent (shorthand for --param r_max=...)
    #[arg(long)]
    rmax: Option<f64>,
    /// cumulative | phases:N:LEN | maze_eval:EVERY:RUNS:LEN
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Concurrent runs; 0 uses every core
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of experiment configs
    dir: PathBuf,
    /// Write each summary to this directory instead of stdout
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    parallelism: Option<usize>,
}

/// Every numeric flag takes a comma-separated list; the cartesian product is
/// evaluated.
#[derive(Args)]
struct TheoryArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    states: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    actions: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    /// Bound on the environment's rewards
    #[arg(long = "r0max", alias = "r0-max", value_delimiter = ',', default_value = "1")]
    r0_max: Vec<f64>,
    /// thm1 or appxB
    #[arg(long, default_value = "thm1")]
    variant: BoundVariant,
    /// Output format; defaults to json for one input tuple and csv for a sweep
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Print the leading-order summary instead
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct EnvArgs {
    /// One of riverswim, sixarms, chain, loop, flag_maze, maze_with_subgoals
    name: String,
    #[arg(long = "env-param", value_name = "KEY=VALUE")]
    env_params: Vec<String>,
    /// Map file for flag_maze
    #[arg(long)]
    map: Option<PathBuf>,
    /// Include every transition
    #[arg(long)]
    dump: bool,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(String),
    Expectation(Vec<String>),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Usage(_) | Error::Parse { .. } | Error::InvalidMdp(_) | Error::Json(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Theory(a) => theory(a),
        Command::Env(a) => env(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Expectation(fails)) => {
            for f in fails {
                eprintln!("expectation failed: {f}");
            }
            ExitCode::from(EXIT_EXPECTATION)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// `key=value`, with the value read as JSON when it parses and as a string
/// otherwise.
fn parse_kv(s: &str) -> Result<(String, Value), Failure> {
    let (k, v) = s.split_once('=').ok_or_else(|| Failure::Config(format!("expected KEY=VALUE, got '{s}'")))?;
    if k.is_empty() {
        return Err(Failure::Config(format!("empty key in '{s}'")));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn parse_protocol(s: &str) -> Result<Value, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<usize, Failure> {
        parts[i].parse().map_err(|_| Failure::Config(format!("bad number '{}' in protocol '{s}'", parts[i])))
    };
    match (parts[0], parts.len()) {
        ("cumulative", 1) => Ok(json!({"type": "cumulative"})),
        ("phases", 3) => Ok(json!({"type": "phases", "n_phases": num(1)?, "phase_len": num(2)?})),
        ("maze_eval", 4) => {
            Ok(json!({"type": "maze_eval", "test_every": num(1)?, "n_test_runs": num(2)?, "test_len": num(3)?}))
        }
        _ => Err(Failure::Config(format!(
            "unknown protocol '{s}' (expected cumulative, phases:N:LEN or maze_eval:EVERY:RUNS:LEN)"
        ))),
    }
}

fn object<'a>(doc: &'a mut Map<String, Value>, key: &str) -> Result<&'a mut Map<String, Value>, Failure> {
    doc.entry(key)
        .or_insert_with(|| json!({}))
        .as_object_mut()
        .ok_or_else(|| Failure::Config(format!("'{key}' must be an object")))
}

fn read_config_doc(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::Config(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(Failure::Config(format!("{}: {e}", path.display()))),
    }
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut doc = match &a.config {
        Some(p) => read_config_doc(p)?,
        None => Map::new(),
    };
    if let Some(name) = &a.env {
        if !ENV_NAMES.contains(&name.as_str()) {
            return Err(Failure::Config(format!("unknown environment '{name}' (known: {})", ENV_NAMES.join(", "))));
        }
        let keep_params = doc.get("env").and_then(|e| e.get("name")).and_then(Value::as_str) == Some(name);
        if !keep_params {
            doc.insert("env".into(), json!({}));
        }
        object(&mut doc, "env")?.insert("name".into(), json!(name));
    }
    for kv in &a.env_params {
        let (k, v) = parse_kv(kv)?;
        object(&mut doc, "env")?.insert(k, v);
    }
    if let Some(kind) = &a.agent {
        if !AGENT_KINDS.contains(&kind.as_str()) {
            return Err(Failure::Config(format!("unknown agent '{kind}' (known: {})", AGENT_KINDS.join(", "))));
        }
        let keep_params = doc.get("agent").and_then(|e| e.get("kind")).and_then(Value::as_str) == Some(kind);
        if !keep_params {
            doc.insert("agent".into(), json!({}));
        }
        object(&mut doc, "agent")?.insert("kind".into(), json!(kind));
    }
    if let Some(r) = a.rmax {
        object(&mut doc, "agent")?.insert("r_max".into(), json!(r));
    }
    for kv in &a.params {
        let (k, v) = parse_kv(kv)?;
        object(&mut doc, "agent")?.insert(k, v);
    }
    if let Some(p) = &a.protocol {
        doc.insert("protocol".into(), parse_protocol(p)?);
    }
    doc.entry("protocol").or_insert_with(|| json!({"type": "cumulative"}));
    if let Some(s) = a.steps {
        doc.insert("total_steps".into(), json!(s));
    }
    if let Some(r) = a.runs {
        doc.insert("n_runs".into(), json!(r));
    }
    doc.entry("n_runs").or_insert(json!(1));
    if let Some(s) = a.seed {
        doc.insert("master_seed".into(), json!(s));
    }
    if let Some(g) = a.gamma {
        doc.insert("gamma".into(), json!(g));
    }
    if let Some(p) = a.parallelism {
        doc.insert("parallelism".into(), json!(p));
    }
    if !doc.contains_key("env") {
        return Err(Failure::Config("no environment given (use --env or --config)".into()));
    }
    if !doc.contains_key("agent") {
        return Err(Failure::Config("no agent given (use --agent or --config)".into()));
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(Value::Object(doc))
        .map_err(|e| Failure::Config(format!("invalid experiment config: {e}")))?;
    if a.out.is_some() || a.format.is_some() {
        let prev = cfg.output.take();
        let path = a.out.clone().or_else(|| prev.as_ref().map(|o| o.path.clone()));
        if let Some(path) = path {
            cfg.output = Some(OutputSpec {
                path,
                format: a.format.or(prev.as_ref().map(|o| o.format)).unwrap_or_default(),
                records: prev.and_then(|o| o.records),
            });
        }
    }
    Ok(cfg)
}

/// Runs `cfg`, printing the summary when it is not written to a file.
fn execute(cfg: &ExperimentConfig, stdout_format: OutputFormat) -> Result<Vec<String>, Failure> {
    let result = run_and_emit(cfg)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if cfg.output.is_none() {
        print!("{}", emit(&result.summary, stdout_format)?);
    }
    Ok(check_expectations(&result.summary, &cfg.expect))
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = build_config(&a)?;
    let fails = execute(&cfg, a.format.unwrap_or_default())?;
    if fails.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectation(fails))
    }
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let entries =
        std::fs::read_dir(&a.dir).map_err(|e| Failure::Config(format!("cannot read {}: {e}", a.dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Config(format!("no *.json configs in {}", a.dir.display())));
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    }
    // Validate everything before spending time on any run.
    let mut configs = Vec::with_capacity(paths.len());
    for p in &paths {
        let mut cfg = ExperimentConfig::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        cfg.validate().map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        if let Some(par) = a.parallelism {
            cfg.parallelism = par;
        }
        if let Some(dir) = &a.out_dir {
            let format = a.format.unwrap_or_default();
            let ext = match format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            };
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            cfg.output = Some(OutputSpec { path: dir.join(format!("{stem}.{ext}")), format, records: None });
        }
        configs.push(cfg);
    }
    let mut fails = Vec::new();
    for (p, cfg) in paths.iter().zip(&configs) {
        eprintln!("running {}", p.display());
        for f in execute(cfg, a.format.unwrap_or_default())? {
            fails.push(format!("{}: {f}", p.display()));
        }
    }
    if fails.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectation(fails))
    }
}

const THEORY_HEADER: [&str; 17] = [
    "variant",
    "epsilon",
    "delta",
    "n_states",
    "n_actions",
    "gamma",
    "r0_max",
    "epsilon1",
    "epsilon2",
    "horizon",
    "sample_size",
    "sample_size_ceil",
    "beta",
    "r_max_required",
    "step_bound",
    "step_bound_ceil",
    "optimism_holds",
];

fn theory(a: TheoryArgs) -> Result<(), Failure> {
    let mut inputs = Vec::new();
    for &epsilon in &a.epsilon {
        for &delta in &a.delta {
            for &n_states in &a.states {
                for &n_actions in &a.actions {
                    for &gamma in &a.gamma {
                        for &r0_max in &a.r0_max {
                            inputs.push(BoundInputs { epsilon, delta, n_states, n_actions, gamma, r0_max });
                        }
                    }
                }
            }
        }
    }
    if a.report {
        for inp in &inputs {
            println!("{}", asymptotic_report(inp, a.variant)?);
        }
        return Ok(());
    }
    let format = a.format.unwrap_or(if inputs.len() == 1 { OutputFormat::Json } else { OutputFormat::Csv });
    let outputs = inputs.iter().map(|inp| bounds(inp, a.variant)).collect::<Result<Vec<_>, _>>()?;
    for out in &outputs {
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
    }
    match format {
        OutputFormat::Json => {
            let text = if outputs.len() == 1 {
                serde_json::to_string_pretty(&outputs[0])
            } else {
                serde_json::to_string_pretty(&outputs)
            };
            println!("{}", text.map_err(Error::from)?);
        }
        OutputFormat::Csv => {
            println!("{}", THEORY_HEADER.join(","));
            for (inp, out) in inputs.iter().zip(&outputs) {
                let variant = serde_json::to_value(out.variant).map_err(Error::from)?;
                let row = [
                    variant.as_str().unwrap_or_default().to_string(),
                    inp.epsilon.to_string(),
                    inp.delta.to_string(),
                    inp.n_states.to_string(),
                    inp.n_actions.to_string(),
                    inp.gamma.to_string(),
                    inp.r0_max.to_string(),
                    out.epsilon1.to_string(),
                    out.epsilon2.to_string(),
                    out.horizon.to_string(),
                    out.sample_size.to_string(),
                    out.sample_size_ceil.to_string(),
                    out.beta.to_string(),
                    out.r_max_required.to_string(),
                    out.step_bound.to_string(),
                    out.step_bound_ceil.to_string(),
                    out.optimism_holds.to_string(),
                ];
                println!("{}", row.join(","));
            }
        }
    }
    Ok(())
}

fn env(a: EnvArgs) -> Result<(), Failure> {
    let mut spec = Map::new();
    spec.insert("name".into(), json!(a.name));
    if let Some(p) = &a.map {
        let text =
            std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
        spec.insert("map".into(), json!(text));
    }
    for kv in &a.env_params {
        let (k, v) = parse_kv(kv)?;
        spec.insert(k, v);
    }
    let spec: EnvSpec = serde_json::from_value(Value::Object(spec))
        .map_err(|e| Failure::Config(format!("invalid environment: {e}")))?;
    let env = spec.build()?;
    let mdp = &env.mdp;
    let mut info = json!({
        "name": env.name,
        "n_states": mdp.n_states(),
        "n_actions": mdp.n_actions(),
        "gamma": mdp.gamma(),
        "start": env.start,
        "r0_max": mdp.r0_max(),
        "min_reward": mdp.min_reward(),
        "episodic": env.episodic,
    });
    if let Some(map) = &env.map {
        info["map"] = json!(map.render());
    }
    if a.dump {
        info["mdp"] = serde_json::to_value(mdp.to_dump()).map_err(Error::from)?;
    }
    println!("{}", serde_json::to_string_pretty(&info).map_err(Error::from)?);
    Ok(())
}
