//! Experiment orchestration: declarative configs, seeded independent runs,
//! the cumulative, phased and maze-evaluation protocols, summary
//! statistics and CSV/JSON output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{Agent, TieBreak};
use crate::baselines::{
    boltzmann_agent, epsilon_greedy_agent, oiv_agent, BonusAgent, BonusKind, BonusShape, MbieEbAgent, RmaxAgent,
};
use crate::env::{EnvInstance, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::mdp::{finite_horizon_optimum, StateId};
use crate::oim::{OimAgent, OimConfig, SweepMode};
use crate::par::map_runs;

fn d_alpha() -> f64 {
    0.1
}
fn d_epsilon() -> f64 {
    0.1
}
fn d_one() -> f64 {
    1.0
}
fn d_theta() -> f64 {
    1e-5
}
fn d_budget() -> usize {
    1000
}
fn d_dp_tol() -> f64 {
    1e-6
}
fn d_max_sweeps() -> usize {
    100_000
}

/// Declarative agent reference: a kind plus named parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    Oim {
        r_max: f64,
        #[serde(default)]
        sweep: SweepMode,
        #[serde(default = "d_theta")]
        theta: f64,
        #[serde(default = "d_budget")]
        max_backups_per_step: usize,
        #[serde(default)]
        tie_break: TieBreak,
        #[serde(default = "d_dp_tol")]
        dp_tol: f64,
        #[serde(default = "d_max_sweeps")]
        max_sweeps_per_step: usize,
        #[serde(default)]
        update_cap: Option<u64>,
    },
    EpsilonGreedy {
        #[serde(default = "d_alpha")]
        alpha: f64,
        #[serde(default = "d_epsilon")]
        epsilon: f64,
        #[serde(default)]
        q0: f64,
    },
    Boltzmann {
        #[serde(default = "d_alpha")]
        alpha: f64,
        #[serde(default = "d_one")]
        temperature: f64,
        #[serde(default)]
        q0: f64,
    },
    /// Greedy Q-learning; `q0` defaults to `r0_max / (1 - gamma)`.
    Oiv {
        #[serde(default = "d_alpha")]
        alpha: f64,
        #[serde(default)]
        q0: Option<f64>,
    },
    /// `r_max` defaults to the environment's reward bound.
    Rmax {
        m_known: u64,
        #[serde(default)]
        r_max: Option<f64>,
    },
    /// `optimistic_value` defaults to `r0_max / (1 - gamma)`.
    MbieEb {
        beta: f64,
        #[serde(default)]
        shape: BonusShape,
        #[serde(default)]
        optimistic_value: Option<f64>,
    },
    Bonus {
        bonus: BonusKind,
        #[serde(default = "d_one")]
        kappa: f64,
        #[serde(default = "d_one")]
        alpha: f64,
        #[serde(default = "d_theta")]
        theta: f64,
        #[serde(default = "d_budget")]
        budget: usize,
    },
}

pub const AGENT_KINDS: [&str; 7] = ["oim", "epsilon_greedy", "boltzmann", "oiv", "rmax", "mbie_eb", "bonus"];

impl AgentSpec {
    pub fn oim(r_max: f64) -> Self {
        AgentSpec::Oim {
            r_max,
            sweep: SweepMode::Full,
            theta: d_theta(),
            max_backups_per_step: d_budget(),
            tie_break: TieBreak::LowestIndex,
            dp_tol: d_dp_tol(),
            max_sweeps_per_step: d_max_sweeps(),
            update_cap: None,
        }
    }

    /// OIM with prioritized sweeping instead of full convergence per step.
    pub fn oim_prioritized(r_max: f64, theta: f64, budget: usize) -> Self {
        AgentSpec::Oim {
            r_max,
            sweep: SweepMode::Prioritized,
            theta,
            max_backups_per_step: budget,
            tie_break: TieBreak::LowestIndex,
            dp_tol: d_dp_tol(),
            max_sweeps_per_step: d_max_sweeps(),
            update_cap: None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentSpec::Oim { .. } => "oim",
            AgentSpec::EpsilonGreedy { .. } => "epsilon_greedy",
            AgentSpec::Boltzmann { .. } => "boltzmann",
            AgentSpec::Oiv { .. } => "oiv",
            AgentSpec::Rmax { .. } => "rmax",
            AgentSpec::MbieEb { .. } => "mbie_eb",
            AgentSpec::Bonus { .. } => "bonus",
        }
    }

    pub fn build(&self, env: &Environment, seed: u64) -> Result<Box<dyn Agent>> {
        let mdp = &env.mdp;
        let (ns, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
        let v_bound = mdp.r0_max() / (1.0 - gamma);
        Ok(match *self {
            AgentSpec::Oim {
                r_max,
                sweep,
                theta,
                max_backups_per_step,
                tie_break,
                dp_tol,
                max_sweeps_per_step,
                update_cap,
            } => {
                let cfg = OimConfig {
                    r_max,
                    gamma,
                    sweep,
                    theta,
                    max_backups_per_step,
                    tie_break,
                    dp_tol,
                    max_sweeps_per_step,
                    update_cap,
                    reward_floor: mdp.min_reward().min(0.0),
                };
                Box::new(OimAgent::new(ns, na, cfg, seed)?)
            }
            AgentSpec::EpsilonGreedy { alpha, epsilon, q0 } => {
                Box::new(epsilon_greedy_agent(ns, na, gamma, alpha, epsilon, q0, seed)?)
            }
            AgentSpec::Boltzmann { alpha, temperature, q0 } => {
                Box::new(boltzmann_agent(ns, na, gamma, alpha, temperature, q0, seed)?)
            }
            AgentSpec::Oiv { alpha, q0 } => Box::new(oiv_agent(ns, na, gamma, alpha, q0.unwrap_or(v_bound), seed)?),
            AgentSpec::Rmax { m_known, r_max } => {
                Box::new(RmaxAgent::new(ns, na, gamma, m_known, r_max.unwrap_or(mdp.r0_max()), seed)?)
            }
            AgentSpec::MbieEb { beta, shape, optimistic_value } => {
                Box::new(MbieEbAgent::new(ns, na, gamma, beta, shape, optimistic_value.unwrap_or(v_bound), seed)?)
            }
            AgentSpec::Bonus { bonus, kappa, alpha, theta, budget } => {
                Box::new(BonusAgent::new(ns, na, gamma, bonus, kappa, alpha, theta, budget, seed)?)
            }
        })
    }
}

fn default_thresholds() -> Vec<f64> {
    vec![0.95, 0.99, 0.998]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// Undiscounted reward summed over the whole run.
    Cumulative,
    /// Reward summed per consecutive phase of `phase_len` steps.
    Phases {
        n_phases: usize,
        phase_len: usize,
        /// Start every phase with a fresh learner instead of continuing.
        #[serde(default)]
        reset_per_phase: bool,
    },
    /// Every `test_every` steps the learner is frozen and its greedy policy
    /// is run `n_test_runs` times for `test_len` steps from the start state.
    MazeEval {
        test_every: usize,
        n_test_runs: usize,
        test_len: usize,
        #[serde(default = "default_thresholds")]
        thresholds: Vec<f64>,
        /// Evaluate greedily on the combined value instead of the
        /// external-reward value alone.
        #[serde(default)]
        include_exploration: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    /// Optional JSON file receiving every run's raw values.
    #[serde(default)]
    pub records: Option<PathBuf>,
}

/// Bounds a summary metric must satisfy for the run to count as passing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub metric: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentSpec,
    /// Required except for the phases protocol, where it defaults to
    /// `n_phases * phase_len`.
    #[serde(default)]
    pub total_steps: Option<usize>,
    pub n_runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub protocol: Protocol,
    /// Overrides the environment's discount factor.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Maximum concurrent runs; 0 uses every core. Never affects results.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, agent: AgentSpec, protocol: Protocol, total_steps: usize, n_runs: usize) -> Self {
        Self {
            env,
            agent,
            total_steps: Some(total_steps),
            n_runs,
            master_seed: 0,
            protocol,
            gamma: None,
            parallelism: 0,
            output: None,
            expect: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Steps per run after applying protocol defaults.
    pub fn steps(&self) -> Result<usize> {
        match (&self.protocol, self.total_steps) {
            (Protocol::Phases { n_phases, phase_len, .. }, None) => Ok(n_phases * phase_len),
            (Protocol::Phases { n_phases, phase_len, .. }, Some(t)) if t != n_phases * phase_len => Err(Error::Config(
                format!("total_steps {t} differs from n_phases * phase_len = {}", n_phases * phase_len),
            )),
            (_, Some(t)) => Ok(t),
            (_, None) => Err(Error::Config("total_steps is required for this protocol".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        let steps = self.steps()?;
        match &self.protocol {
            Protocol::Cumulative => {}
            Protocol::Phases { n_phases, phase_len, .. } => {
                if *n_phases == 0 || *phase_len == 0 {
                    return Err(Error::Config("phases need positive count and length".into()));
                }
            }
            Protocol::MazeEval { test_every, n_test_runs, test_len, thresholds, .. } => {
                if *test_every == 0 || *n_test_runs == 0 || *test_len == 0 {
                    return Err(Error::Config("maze evaluation parameters must be positive".into()));
                }
                if steps < *test_every {
                    return Err(Error::Config("total_steps is shorter than one test interval".into()));
                }
                if thresholds.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return Err(Error::Config("thresholds must be fractions in (0, 1]".into()));
                }
            }
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("gamma {g} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Builds the environment with any discount override applied.
    pub fn environment(&self) -> Result<Environment> {
        let env = self.env.build().map_err(|e| match e {
            Error::Config(_) | Error::Parse { .. } => e,
            other => Error::Config(other.to_string()),
        })?;
        match self.gamma {
            Some(g) => env.with_gamma(g),
            None => Ok(env),
        }
    }

    /// Hash of everything that determines the results: environment, agent,
    /// protocol, run count, steps, seed and discount.
    pub fn param_hash(&self) -> String {
        let key = serde_json::json!({
            "env": self.env,
            "agent": self.agent,
            "protocol": self.protocol,
            "total_steps": self.steps().ok(),
            "n_runs": self.n_runs,
            "master_seed": self.master_seed,
            "gamma": self.gamma,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of run `run` under `master`: the first output of ChaCha8 stream
/// `run` keyed by `master`. Independent of how many runs exist.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, run as u64)
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const AGENT_STREAM: u64 = 1;
const ENV_STREAM: u64 = 2;
const EVAL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// One value per metric, in the order of [`ExperimentResult::metric_names`].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub n: usize,
    /// NaN when no run produced a value; written as `null` in JSON.
    #[serde(deserialize_with = "nan_if_null")]
    pub mean: f64,
    /// Sample standard deviation; absent for fewer than two values.
    pub std: Option<f64>,
    /// Half-width `1.96 std / sqrt(n)`; absent for fewer than two values.
    pub ci95: Option<f64>,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub agent: String,
    pub param_hash: String,
    pub n_runs: usize,
    pub metrics: Vec<MetricSummary>,
}

impl Summary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.metric(name).map(|m| m.mean)
    }
}

/// Mean, sample standard deviation and 95% normal-approximation CI of
/// `values`, folded in order.
pub fn summarize_values(metric: &str, values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
    let (std, ci95) = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let s = (ss / (n - 1) as f64).sqrt();
        (Some(s), Some(1.96 * s / (n as f64).sqrt()))
    } else {
        (None, None)
    };
    MetricSummary { metric: metric.to_string(), n, mean, std, ci95 }
}

/// Per-fraction outcome of the threshold analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub fraction: f64,
    pub successes: usize,
    /// Mean first-reaching step over successful runs.
    pub mean_steps: Option<f64>,
    /// Mean first-reaching step counting failures as `censor_at`.
    pub censored_mean_steps: f64,
    /// First-reaching step per run, `None` when never reached.
    pub first_steps: Vec<Option<usize>>,
}

/// For each fraction, the first checkpoint (by step) at which a run's
/// evaluation return reaches `fraction * optimal_return`.
pub fn steps_to_fraction(
    evals: &[Vec<f64>],
    checkpoints: &[usize],
    optimal_return: f64,
    fractions: &[f64],
    censor_at: usize,
) -> Vec<ThresholdStats> {
    fractions
        .iter()
        .map(|&f| {
            let target = f * optimal_return;
            let first_steps: Vec<Option<usize>> = evals
                .iter()
                .map(|run| run.iter().zip(checkpoints).find(|(v, _)| **v >= target).map(|(_, &s)| s))
                .collect();
            let hits: Vec<f64> = first_steps.iter().flatten().map(|&s| s as f64).collect();
            let censored: f64 = first_steps.iter().map(|s| s.unwrap_or(censor_at) as f64).sum::<f64>()
                / first_steps.len().max(1) as f64;
            ThresholdStats {
                fraction: f,
                successes: hits.len(),
                mean_steps: if hits.is_empty() { None } else { Some(hits.iter().sum::<f64>() / hits.len() as f64) },
                censored_mean_steps: censored,
                first_steps,
            }
        })
        .collect()
}

/// Everything one experiment produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub metric_names: Vec<String>,
    pub records: Vec<RunRecord>,
    /// Checkpoint steps of the maze-evaluation protocol.
    pub checkpoints: Vec<usize>,
    /// Best expected return of one evaluation episode (maze protocol).
    pub optimal_return: Option<f64>,
    pub thresholds: Vec<ThresholdStats>,
    pub warnings: Vec<String>,
}

fn fraction_label(f: f64) -> String {
    format!("{}", f * 100.0)
}

fn metric_names(protocol: &Protocol, checkpoints: &[usize]) -> Vec<String> {
    match protocol {
        Protocol::Cumulative => vec!["total_reward".into()],
        Protocol::Phases { n_phases, .. } => (1..=*n_phases).map(|p| format!("phase_{p}")).collect(),
        Protocol::MazeEval { .. } => checkpoints.iter().map(|s| format!("eval_at_{s}")).collect(),
    }
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    env: Arc<Environment>,
    steps: usize,
    checkpoints: &'a [usize],
}

fn run_one(ctx: &RunContext<'_>, run: usize) -> Result<RunRecord> {
    let seed = run_seed(ctx.cfg.master_seed, run);
    let agent_seed = derive_seed(seed, AGENT_STREAM);
    let mut agent = ctx.cfg.agent.build(&ctx.env, agent_seed)?;
    let mut inst = EnvInstance::new(ctx.env.clone(), derive_seed(seed, ENV_STREAM));
    let mut x = inst.state();
    let values = match &ctx.cfg.protocol {
        Protocol::Cumulative => {
            let mut total = 0.0;
            for _ in 0..ctx.steps {
                let a = agent.select_action(x);
                let (y, r) = inst.step(a)?;
                agent.observe(x, a, r, y)?;
                x = inst.state();
                total += r;
            }
            vec![total]
        }
        Protocol::Phases { n_phases, phase_len, reset_per_phase } => {
            let mut sums = Vec::with_capacity(*n_phases);
            for p in 0..*n_phases {
                if *reset_per_phase && p > 0 {
                    agent.reset(derive_seed(agent_seed, p as u64));
                    x = inst.reset();
                }
                let mut total = 0.0;
                for _ in 0..*phase_len {
                    let a = agent.select_action(x);
                    let (y, r) = inst.step(a)?;
                    agent.observe(x, a, r, y)?;
                    x = inst.state();
                    total += r;
                }
                sums.push(total);
            }
            sums
        }
        Protocol::MazeEval { n_test_runs, test_len, include_exploration, .. } => {
            let mut evals = Vec::with_capacity(ctx.checkpoints.len());
            let mut t = 0;
            for (k, &cp) in ctx.checkpoints.iter().enumerate() {
                while t < cp {
                    let a = agent.select_action(x);
                    let (y, r) = inst.step(a)?;
                    agent.observe(x, a, r, y)?;
                    x = inst.state();
                    t += 1;
                }
                let policy: Vec<usize> =
                    (0..ctx.env.mdp.n_states()).map(|s| agent.greedy_action(s, *include_exploration)).collect();
                let mut sum = 0.0;
                for i in 0..*n_test_runs {
                    let stream = EVAL_STREAM_BASE + (k * n_test_runs + i) as u64;
                    sum += evaluate_policy(&ctx.env, &policy, *test_len, derive_seed(seed, stream))?;
                }
                evals.push(sum / *n_test_runs as f64);
            }
            evals
        }
    };
    Ok(RunRecord { run, seed, values })
}

/// Undiscounted return of a deterministic policy over `steps` sampled steps
/// from the start state.
pub fn evaluate_policy(env: &Arc<Environment>, policy: &[usize], steps: usize, seed: u64) -> Result<f64> {
    let mut inst = EnvInstance::new(env.clone(), seed);
    let mut total = 0.0;
    for _ in 0..steps {
        let x: StateId = inst.state();
        let (_, r) = inst.step(policy[x])?;
        total += r;
    }
    Ok(total)
}

/// Summary of stored records, recomputed exactly as [`run_experiment`] does.
pub fn summarize(
    env: &str,
    agent: &str,
    param_hash: &str,
    metric_names: &[String],
    records: &[RunRecord],
    thresholds: &[ThresholdStats],
) -> Summary {
    let mut metrics: Vec<MetricSummary> = metric_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<f64> = records.iter().map(|r| r.values[i]).collect();
            summarize_values(name, &column)
        })
        .collect();
    for th in thresholds {
        let label = fraction_label(th.fraction);
        let hits: Vec<f64> = th.first_steps.iter().flatten().map(|&s| s as f64).collect();
        let mut row = summarize_values(&format!("steps_to_{label}pct"), &hits);
        if hits.is_empty() {
            row.mean = f64::NAN;
        }
        metrics.push(row);
        metrics.push(MetricSummary {
            metric: format!("censored_steps_to_{label}pct"),
            n: th.first_steps.len(),
            mean: th.censored_mean_steps,
            std: None,
            ci95: None,
        });
    }
    Summary {
        env: env.to_string(),
        agent: agent.to_string(),
        param_hash: param_hash.to_string(),
        n_runs: records.len(),
        metrics,
    }
}

/// Executes every run of `cfg` and aggregates the results in run order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let steps = cfg.steps()?;
    let env = Arc::new(cfg.environment()?);
    // Surface agent parameter errors before spending time on runs.
    cfg.agent.build(&env, 0).map_err(|e| Error::Config(format!("agent: {e}")))?;

    let (checkpoints, optimal_return) = match &cfg.protocol {
        Protocol::MazeEval { test_every, test_len, .. } => {
            let cps: Vec<usize> = (1..=steps / test_every).map(|k| k * test_every).collect();
            let opt = finite_horizon_optimum(&env.mdp, env.start, *test_len)?;
            (cps, Some(opt))
        }
        _ => (Vec::new(), None),
    };
    let ctx = RunContext { cfg, env: env.clone(), steps, checkpoints: &checkpoints };
    let records = map_runs(cfg.n_runs, cfg.parallelism, |run| run_one(&ctx, run))?;

    let mut warnings = Vec::new();
    let thresholds = match (&cfg.protocol, optimal_return) {
        (Protocol::MazeEval { thresholds, .. }, Some(opt)) => {
            if opt <= 0.0 {
                warnings.push(format!("optimal evaluation return {opt} is not positive; thresholds skipped"));
                Vec::new()
            } else {
                let evals: Vec<Vec<f64>> = records.iter().map(|r| r.values.clone()).collect();
                steps_to_fraction(&evals, &checkpoints, opt, thresholds, steps)
            }
        }
        _ => Vec::new(),
    };
    if cfg.n_runs < 2 {
        warnings.push("fewer than two runs: confidence intervals omitted".into());
    }
    let names = metric_names(&cfg.protocol, &checkpoints);
    let summary = summarize(env.name.as_str(), cfg.agent.kind(), &cfg.param_hash(), &names, &records, &thresholds);
    Ok(ExperimentResult { summary, metric_names: names, records, checkpoints, optimal_return, thresholds, warnings })
}

/// Runs `cfg` and writes its summary (and optional raw records) to the
/// configured output. Output files are created before any run starts so
/// an unwritable path fails fast.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut files = None;
    if let Some(out) = &cfg.output {
        let summary_file =
            File::create(&out.path).map_err(|e| Error::Config(format!("cannot write {}: {e}", out.path.display())))?;
        let records_file = match &out.records {
            Some(p) => Some(File::create(p).map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?),
            None => None,
        };
        files = Some((summary_file, records_file, out.format));
    }
    let result = run_experiment(cfg)?;
    if let Some((mut f, records, format)) = files {
        f.write_all(emit(&result.summary, format)?.as_bytes())?;
        if let Some(mut rf) = records {
            rf.write_all(serde_json::to_string_pretty(&result.records)?.as_bytes())?;
        }
    }
    Ok(result)
}

pub const CSV_HEADER: [&str; 9] = ["env", "agent", "param_hash", "n_runs", "metric", "n", "mean", "std", "ci95"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(summary: &Summary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for m in &summary.metrics {
        w.write_record([
            summary.env.clone(),
            summary.agent.clone(),
            summary.param_hash.clone(),
            summary.n_runs.to_string(),
            m.metric.clone(),
            m.n.to_string(),
            m.mean.to_string(),
            fmt_opt(m.std),
            fmt_opt(m.ci95),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn parse_f64(field: &str, line: usize, column: usize) -> Result<f64> {
    field.parse().map_err(|_| Error::Parse { line, column, message: format!("not a number: {field:?}") })
}

fn parse_opt(field: &str, line: usize, column: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line, column).map(Some)
    }
}

pub fn from_csv(text: &str) -> Result<Summary> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse { line: 1, column: 1, message: format!("unexpected header {header:?}") });
    }
    let mut summary: Option<Summary> = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let count = |col: usize| -> Result<usize> {
            rec[col].parse().map_err(|_| Error::Parse { line, column: col + 1, message: "not a count".into() })
        };
        let s = summary.get_or_insert_with(|| Summary {
            env: rec[0].to_string(),
            agent: rec[1].to_string(),
            param_hash: rec[2].to_string(),
            n_runs: 0,
            metrics: Vec::new(),
        });
        s.n_runs = count(3)?;
        s.metrics.push(MetricSummary {
            metric: rec[4].to_string(),
            n: count(5)?,
            mean: parse_f64(&rec[6], line, 7)?,
            std: parse_opt(&rec[7], line, 8)?,
            ci95: parse_opt(&rec[8], line, 9)?,
        });
    }
    summary.ok_or_else(|| Error::Parse { line: 2, column: 1, message: "no summary rows".into() })
}

pub fn to_json(summary: &Summary) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)?)
}

pub fn from_json(text: &str) -> Result<Summary> {
    Ok(serde_json::from_str(text)?)
}

pub fn emit(summary: &Summary, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => to_csv(summary),
        OutputFormat::Json => to_json(summary),
    }
}

/// Checks every expectation against `summary`; returns the failures.
pub fn check_expectations(summary: &Summary, expect: &[Expectation]) -> Vec<String> {
    let mut failures = Vec::new();
    for e in expect {
        match summary.mean(&e.metric) {
            None => failures.push(format!("metric '{}' not produced", e.metric)),
            Some(v) => {
                if let Some(lo) = e.min {
                    if !(v >= lo) {
                        failures.push(format!("{} mean {v} below {lo}", e.metric));
                    }
                }
                if let Some(hi) = e.max {
                    if !(v <= hi) {
                        failures.push(format!("{} mean {v} above {hi}", e.metric));
                    }
                }
            }
        }
    }
    failures
}
