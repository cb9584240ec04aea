//! Scenario configuration: a flat key/value text format plus overrides.
//!
//! Every field has a default; a config file or `--override key=value`
//! arguments adjust individual keys. The same `set` path serves both, so
//! file keys and override keys are always in sync.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::coalition::PreferenceOrder;
use crate::reputation::ReputationParams;
use crate::stackelberg::{CommModel, CompModel, IncentiveParams};

use super::ScenarioError;

/// Worker-selection scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Proposed,
    NoBlockchain,
    NoBlockchainNoRec,
    RandomSelection,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::NoBlockchain => "no-blockchain",
            Scheme::NoBlockchainNoRec => "no-blockchain-no-rec",
            Scheme::RandomSelection => "random-selection",
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "no-blockchain" => Ok(Scheme::NoBlockchain),
            "no-blockchain-no-rec" => Ok(Scheme::NoBlockchainNoRec),
            "random-selection" => Ok(Scheme::RandomSelection),
            other => Err(format!(
                "unknown scheme {other:?} (expected proposed, no-blockchain, no-blockchain-no-rec, or random-selection)"
            )),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All scenario parameters, flat. See [`default_config_text`] for the
/// commented template with units and defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub workers: usize,
    pub miners: usize,
    pub msps: usize,
    pub rounds: usize,
    pub history_rounds: usize,

    pub misbehavior_ratio: f64,
    pub misbehave_prob: f64,
    pub manipulation_prob: f64,
    pub honest_positive_rate: f64,
    pub favored_msps: usize,
    pub attack_target: f64,
    pub attack_hold_rounds: usize,
    pub background_workers: usize,

    pub sigma1: f64,
    pub sigma2: f64,
    pub gamma: f64,
    pub rep_threshold: f64,
    pub rep_min: f64,
    pub rep_max: f64,

    pub delta: f64,
    pub rho: f64,
    pub barrier_offset: f64,
    pub preference: String,

    pub data_rate: f64,
    pub erasure_prob: f64,
    pub bandwidth: f64,
    pub packet_size_bits: f64,

    pub startup: f64,
    pub mu_min: f64,
    pub mu_max: f64,

    pub r_base: f64,
    pub r_com_min: f64,
    pub r_com_max: f64,
    pub comp_cost: f64,
    pub comm_cost: f64,
    pub xi: f64,
    pub beta: f64,
    pub nu: f64,
    pub alpha: f64,
    /// Fixed deadline in seconds, or `None` ("auto") to derive an upper
    /// envelope of the latency model per solve.
    pub t_max: Option<f64>,
    pub t_max_factor: f64,

    pub scheme: Scheme,
    pub k: usize,
    pub n: usize,
    pub task_rows: usize,
    pub task_cols: usize,
    pub matrix_file: Option<PathBuf>,
    pub task_amount: f64,

    pub task_amounts: Vec<f64>,
    pub nk_pairs: Vec<(usize, usize)>,
    pub n_grid: Vec<usize>,
    pub mr_grid: Vec<f64>,
    pub sigma1_grid: Vec<f64>,
    pub selection_k: usize,
    pub selection_mr_grid: Vec<f64>,
    pub dump_diagnostics: bool,

    pub block_size: usize,
    pub service_time_us: u64,
    pub ledger_tx_counts: Vec<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 100,
            miners: 20,
            msps: 5,
            rounds: 160,
            history_rounds: 40,

            misbehavior_ratio: 0.2,
            misbehave_prob: 0.9,
            manipulation_prob: 0.25,
            honest_positive_rate: 0.95,
            favored_msps: 1,
            attack_target: 0.8,
            attack_hold_rounds: 10,
            background_workers: 8,

            sigma1: 0.6,
            sigma2: 0.4,
            gamma: 0.5,
            rep_threshold: 0.6,
            rep_min: 0.0,
            rep_max: 1.0,

            delta: 1.0,
            rho: 0.01,
            barrier_offset: 0.1,
            preference: "pareto".into(),

            data_rate: 1300.0,
            erasure_prob: 0.1,
            bandwidth: 1e5,
            packet_size_bits: 3200.0,

            startup: 5e-4,
            mu_min: 1.0,
            mu_max: 1e3,

            r_base: 10.0,
            r_com_min: 0.0,
            r_com_max: 1e3,
            comp_cost: 0.1,
            comm_cost: 10.0,
            xi: 10.0,
            beta: 30.0,
            nu: 10.0,
            alpha: 0.5,
            t_max: Some(300.0),
            t_max_factor: 1.2,

            scheme: Scheme::Proposed,
            k: 2,
            n: 3,
            task_rows: 60,
            task_cols: 24,
            matrix_file: None,
            task_amount: 400.0,

            task_amounts: (1..=10).map(|i| 400.0 * i as f64).collect(),
            nk_pairs: vec![(10, 2), (10, 5), (15, 5)],
            n_grid: vec![10, 15, 20, 25, 30],
            mr_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            sigma1_grid: vec![0.5, 0.6, 0.7, 0.8],
            selection_k: 5,
            selection_mr_grid: vec![0.0, 0.2],
            dump_diagnostics: false,

            block_size: 256,
            service_time_us: 1000,
            ledger_tx_counts: vec![200, 400, 600, 800, 1000],
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> ScenarioError {
    ScenarioError::Config(format!("key {key:?}: cannot parse {value:?} as {what}"))
}

fn parse_num<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T, ScenarioError> {
    value.trim().parse::<T>().map_err(|_| bad(key, value, what))
}

fn parse_list<T: FromStr>(key: &str, value: &str, what: &str) -> Result<Vec<T>, ScenarioError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| bad(key, value, what)))
        .collect()
}

fn parse_nk_pairs(key: &str, value: &str) -> Result<Vec<(usize, usize)>, ScenarioError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (n, k) = s
                .split_once(':')
                .ok_or_else(|| bad(key, value, "n:k pair list"))?;
            Ok((
                parse_num::<usize>(key, n, "n of n:k")?,
                parse_num::<usize>(key, k, "k of n:k")?,
            ))
        })
        .collect()
}

impl ScenarioConfig {
    /// Parses the flat `key = value` format. `#` starts a comment; blank
    /// lines are ignored. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ScenarioError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a single `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        match key {
            "seed" => self.seed = parse_num(key, value, "u64")?,
            "workers" => self.workers = parse_num(key, value, "usize")?,
            "miners" => self.miners = parse_num(key, value, "usize")?,
            "msps" => self.msps = parse_num(key, value, "usize")?,
            "rounds" => self.rounds = parse_num(key, value, "usize")?,
            "history_rounds" => self.history_rounds = parse_num(key, value, "usize")?,
            "misbehavior_ratio" => self.misbehavior_ratio = parse_num(key, value, "f64")?,
            "misbehave_prob" => self.misbehave_prob = parse_num(key, value, "f64")?,
            "manipulation_prob" => self.manipulation_prob = parse_num(key, value, "f64")?,
            "honest_positive_rate" => self.honest_positive_rate = parse_num(key, value, "f64")?,
            "favored_msps" => self.favored_msps = parse_num(key, value, "usize")?,
            "attack_target" => self.attack_target = parse_num(key, value, "f64")?,
            "attack_hold_rounds" => self.attack_hold_rounds = parse_num(key, value, "usize")?,
            "background_workers" => self.background_workers = parse_num(key, value, "usize")?,
            "sigma1" => self.sigma1 = parse_num(key, value, "f64")?,
            "sigma2" => self.sigma2 = parse_num(key, value, "f64")?,
            "gamma" => self.gamma = parse_num(key, value, "f64")?,
            "rep_threshold" => self.rep_threshold = parse_num(key, value, "f64")?,
            "rep_min" => self.rep_min = parse_num(key, value, "f64")?,
            "rep_max" => self.rep_max = parse_num(key, value, "f64")?,
            "delta" => self.delta = parse_num(key, value, "f64")?,
            "rho" => self.rho = parse_num(key, value, "f64")?,
            "barrier_offset" => self.barrier_offset = parse_num(key, value, "f64")?,
            "preference" => match value {
                "pareto" | "coalition" => self.preference = value.to_string(),
                _ => return Err(bad(key, value, "pareto or coalition")),
            },
            "data_rate" => self.data_rate = parse_num(key, value, "f64")?,
            "erasure_prob" => self.erasure_prob = parse_num(key, value, "f64")?,
            "bandwidth" => self.bandwidth = parse_num(key, value, "f64")?,
            "packet_size_bits" => self.packet_size_bits = parse_num(key, value, "f64")?,
            "startup" => self.startup = parse_num(key, value, "f64")?,
            "mu_min" => self.mu_min = parse_num(key, value, "f64")?,
            "mu_max" => self.mu_max = parse_num(key, value, "f64")?,
            "r_base" => self.r_base = parse_num(key, value, "f64")?,
            "r_com_min" => self.r_com_min = parse_num(key, value, "f64")?,
            "r_com_max" => self.r_com_max = parse_num(key, value, "f64")?,
            "comp_cost" => self.comp_cost = parse_num(key, value, "f64")?,
            "comm_cost" => self.comm_cost = parse_num(key, value, "f64")?,
            "xi" => self.xi = parse_num(key, value, "f64")?,
            "beta" => self.beta = parse_num(key, value, "f64")?,
            "nu" => self.nu = parse_num(key, value, "f64")?,
            "alpha" => self.alpha = parse_num(key, value, "f64")?,
            "t_max" => {
                self.t_max = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value, "f64 or auto")?)
                }
            }
            "t_max_factor" => self.t_max_factor = parse_num(key, value, "f64")?,
            "scheme" => self.scheme = value.parse().map_err(ScenarioError::Config)?,
            "k" => self.k = parse_num(key, value, "usize")?,
            "n" => self.n = parse_num(key, value, "usize")?,
            "task_rows" => self.task_rows = parse_num(key, value, "usize")?,
            "task_cols" => self.task_cols = parse_num(key, value, "usize")?,
            "matrix_file" => {
                self.matrix_file = if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            "task_amount" => self.task_amount = parse_num(key, value, "f64")?,
            "task_amounts" => self.task_amounts = parse_list(key, value, "f64 list")?,
            "nk_pairs" => self.nk_pairs = parse_nk_pairs(key, value)?,
            "n_grid" => self.n_grid = parse_list(key, value, "usize list")?,
            "mr_grid" => self.mr_grid = parse_list(key, value, "f64 list")?,
            "sigma1_grid" => self.sigma1_grid = parse_list(key, value, "f64 list")?,
            "selection_k" => self.selection_k = parse_num(key, value, "usize")?,
            "selection_mr_grid" => self.selection_mr_grid = parse_list(key, value, "f64 list")?,
            "dump_diagnostics" => self.dump_diagnostics = parse_num(key, value, "bool")?,
            "block_size" => self.block_size = parse_num(key, value, "usize")?,
            "service_time_us" => self.service_time_us = parse_num(key, value, "u64")?,
            "ledger_tx_counts" => self.ledger_tx_counts = parse_list(key, value, "usize list")?,
            other => return Err(ScenarioError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.reputation_params()
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.misbehavior_ratio) {
            return Err(ScenarioError::Config(format!(
                "misbehavior_ratio must be in [0, 1], got {}",
                self.misbehavior_ratio
            )));
        }
        for (what, p) in [
            ("misbehave_prob", self.misbehave_prob),
            ("manipulation_prob", self.manipulation_prob),
            ("honest_positive_rate", self.honest_positive_rate),
            ("erasure_prob", self.erasure_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ScenarioError::Config(format!("{what} must be in [0, 1], got {p}")));
            }
        }
        if self.workers == 0 || self.miners == 0 || self.msps < 2 {
            return Err(ScenarioError::Config(
                "need workers >= 1, miners >= 1, msps >= 2".into(),
            ));
        }
        if self.favored_msps == 0 || self.favored_msps >= self.msps {
            return Err(ScenarioError::Config(format!(
                "favored_msps must be in 1..msps, got {} of {}",
                self.favored_msps, self.msps
            )));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(ScenarioError::Config(format!(
                "need 1 <= k < n, got k={}, n={}",
                self.k, self.n
            )));
        }
        Ok(())
    }

    pub fn preference_order(&self) -> PreferenceOrder {
        match self.preference.as_str() {
            "coalition" => PreferenceOrder::CoalitionOrder,
            _ => PreferenceOrder::Pareto,
        }
    }

    pub fn reputation_params(&self) -> ReputationParams {
        ReputationParams {
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            gamma: self.gamma,
            rep_threshold: self.rep_threshold,
            rep_max: self.rep_max,
            rep_min: self.rep_min,
        }
    }

    pub fn comm_model(&self) -> CommModel {
        CommModel {
            data_rate: self.data_rate,
            erasure_prob: self.erasure_prob,
            bandwidth: self.bandwidth,
            packet_size_bits: self.packet_size_bits,
        }
    }

    /// Computation model with the given per-worker task share.
    pub fn comp_model(&self, task_share: f64) -> CompModel {
        CompModel {
            startup: self.startup,
            task_share,
            mu_min: self.mu_min,
            mu_max: self.mu_max,
        }
    }

    pub fn incentive_params(&self) -> IncentiveParams {
        IncentiveParams {
            r_base: self.r_base,
            r_com_min: self.r_com_min,
            r_com_max: self.r_com_max,
            comp_cost: self.comp_cost,
            comm_cost: self.comm_cost,
            xi: self.xi,
            beta: self.beta,
            nu: self.nu,
            alpha: self.alpha,
            t_max: self.t_max,
            t_max_factor: self.t_max_factor,
        }
    }
}

/// The commented default configuration, suitable as a starting config file.
pub fn default_config_text() -> String {
    r#"# rcdc scenario configuration. Format: key = value, '#' comments.
# All values below are the defaults.

# --- simulation ----------------------------------------------------------
seed = 42                    # master RNG seed; every run is a pure function of it
workers = 100                # online worker population W
miners = 20                  # reputation-chain miners M
msps = 5                     # service providers (observer is msp 0)
rounds = 160                 # attack scenario rounds
history_rounds = 40          # bootstrap interactions per (msp, worker) pair

# --- behavior ------------------------------------------------------------
misbehavior_ratio = 0.2      # fraction of workers that are unreliable
misbehave_prob = 0.9         # per-task misbehavior probability of an unreliable worker
manipulation_prob = 0.25     # centralized-platform flip rate of negative events (no-blockchain scheme)
honest_positive_rate = 0.95  # per-task success probability of an honest worker
favored_msps = 1             # msps the unreliable worker keeps serving well
attack_target = 0.8          # reputation the attacker builds up before turning
attack_hold_rounds = 10      # idle rounds holding that reputation
background_workers = 8       # shared background service history (social ties)

# --- reputation weights ---------------------------------------------------
sigma1 = 0.6                 # weight of positive interaction events
sigma2 = 0.4                 # weight of negative interaction events
gamma = 0.5                  # uncertainty coefficient in the scalar value
rep_threshold = 0.6          # screening threshold on composite values
rep_min = 0
rep_max = 1

# --- coalition game --------------------------------------------------------
delta = 1.0                  # weight of the communication barrier cost
rho = 0.01                   # per-worker reputation computation cost
barrier_offset = 0.1         # keeps the barrier finite at full size
preference = pareto          # pareto | coalition

# --- communication ---------------------------------------------------------
data_rate = 1300             # bits/s/Hz
erasure_prob = 0.1           # uplink erasure probability
bandwidth = 100000           # Hz, split across a task's workers
packet_size_bits = 3200      # result packet size (400 bytes)

# --- computation -----------------------------------------------------------
startup = 0.0005             # seconds of start-up per unit work
mu_min = 1                   # computation speed bounds (work units/s)
mu_max = 1000

# --- incentives ------------------------------------------------------------
r_base = 10                  # participation reward
r_com_min = 0                # competition reward bounds
r_com_max = 1000
comp_cost = 0.1              # worker cost per work unit
comm_cost = 10               # worker cost per second of uplink
xi = 10                      # profit scale in worker utility
beta = 30                    # reputation scale in worker utility
nu = 10                      # contribution scale in leader utility
alpha = 0.5                  # reputation weight at the threshold
t_max = 300                  # task deadline in seconds; 'auto' derives an upper
                             # envelope of the latency model per solve
t_max_factor = 1.2           # envelope factor used by t_max = auto

# --- task / full protocol ---------------------------------------------------
scheme = proposed            # proposed | no-blockchain | no-blockchain-no-rec | random-selection
k = 2                        # recovery threshold of the (n, k) code
n = 3                        # coded shards / selected workers (full protocol)
task_rows = 60               # generated task matrix size (full protocol)
task_cols = 24
matrix_file =                # optional path to a .bin or .csv matrix
task_amount = 400            # work units in the selection comparison

# --- sweeps -----------------------------------------------------------------
task_amounts = 400,800,1200,1600,2000,2400,2800,3200,3600,4000
nk_pairs = 10:2,10:5,15:5    # (n, k) variants of the task-amount sweep
n_grid = 10,15,20,25,30      # worker counts of the selection comparison
mr_grid = 0,0.1,0.2,0.3,0.4,0.5
sigma1_grid = 0.5,0.6,0.7,0.8
selection_k = 5              # recovery threshold in the selection comparison
selection_mr_grid = 0,0.2
dump_diagnostics = false     # also emit a (reward, utility, derivative) grid CSV

# --- ledger -----------------------------------------------------------------
block_size = 256
service_time_us = 1000       # simulated service time per transaction
ledger_tx_counts = 200,400,600,800,1000
"#
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_parses_to_defaults() {
        let parsed = ScenarioConfig::parse(&default_config_text()).unwrap();
        assert_eq!(parsed, ScenarioConfig::default());
    }

    #[test]
    fn overrides_apply_and_unknown_keys_error() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("seed", "7").unwrap();
        cfg.set("nk_pairs", "8:2,12:3").unwrap();
        cfg.set("t_max", "auto").unwrap();
        cfg.set("scheme", "random-selection").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.nk_pairs, vec![(8, 2), (12, 3)]);
        assert_eq!(cfg.t_max, None);
        assert_eq!(cfg.scheme, Scheme::RandomSelection);
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("seed", "not-a-number").is_err());
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = ScenarioConfig::default();
        cfg.sigma1 = 0.3; // below sigma2
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.k = 5;
        cfg.n = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.favored_msps = 5;
        assert!(cfg.validate().is_err());
    }
}
