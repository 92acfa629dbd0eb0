//! Strategy comparison over a corpus of programs.
//!
//! Every trial gets its own rng seed derived from the base seed and the
//! (program, strategy, trial) coordinates, so results do not depend on how
//! trials are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::campaign::{campaign, prepare, CampaignConfig};
use crate::counting_oracle::{ComparisonOracle, CountingOracle, OracleConfig};
use crate::error::{Error, Result};
use crate::input_space::{ByteInput, InputRegion};
use crate::search::{blackbox_search, majority_vote_search};
use crate::target_model::{execute, TargetProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Mc2,
    Deterministic,
    MajorityVote,
    Blackbox,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Mc2, Strategy::Deterministic, Strategy::MajorityVote, Strategy::Blackbox];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mc2 => "mc2",
            Strategy::Deterministic => "deterministic",
            Strategy::MajorityVote => "majority-vote",
            Strategy::Blackbox => "blackbox",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub campaign: CampaignConfig,
    pub strategies: Vec<Strategy>,
    pub trials: usize,
    /// Votes per comparison for [`Strategy::MajorityVote`].
    pub majority_reps: usize,
    /// Seed input; all zeros when absent or of the wrong length.
    pub seed: Option<ByteInput>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            campaign: CampaignConfig::default(),
            strategies: Strategy::ALL.to_vec(),
            trials: 20,
            majority_reps: 9,
            seed: None,
        }
    }
}

/// Result of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub queries: u64,
    pub executions: u64,
    pub success: bool,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub program: String,
    pub strategy: String,
    pub mean_queries: f64,
    pub mean_execs: f64,
    pub success_rate: f64,
    pub median_queries: f64,
    pub median_execs: f64,
}

fn trial_seed(base: u64, program: usize, strategy: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((program as u64) << 32) | ((strategy as u64) << 24) | trial as u64);
    rng.gen()
}

/// Runs one strategy once.
pub fn run_trial(
    program: &TargetProgram,
    seed: &ByteInput,
    strategy: Strategy,
    config: &BenchConfig,
    rng_seed: u64,
) -> Result<TrialResult> {
    let space = InputRegion::full(program.input_length());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let cc = CampaignConfig { rng_seed, ..config.campaign.clone() };
    match strategy {
        Strategy::Mc2 => {
            let r = campaign(program, seed, &cc)?;
            Ok(TrialResult { queries: r.oracle_queries, executions: r.executions, success: r.success })
        }
        Strategy::Blackbox => {
            let r = blackbox_search(program, &space, cc.budget, &mut rng)?;
            Ok(TrialResult { queries: r.queries, executions: r.executions, success: r.success })
        }
        Strategy::Deterministic | Strategy::MajorityVote => {
            let reps = if strategy == Strategy::Deterministic { 1 } else { config.majority_reps };
            let Some(prepared) = prepare(program, seed, &cc, &mut rng)? else {
                return Ok(TrialResult { queries: 0, executions: 16 * cc.n_paths as u64 + 1, success: false });
            };
            let oc = OracleConfig { k: cc.k, p: cc.p };
            let mut oracle =
                CountingOracle::new(program, prepared.paths, space.clone(), oc, Some(seed.clone()), rng.gen())?;
            let mut verify_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let out = majority_vote_search(&space, &prepared.order, &mut oracle, reps, |input| {
                execute(program, input, &mut verify_rng).map(|t| t.reached_target).unwrap_or(false)
            })?;
            Ok(TrialResult {
                queries: out.queries,
                executions: prepared.executions + oracle.executions() + out.verifications,
                success: out.success,
            })
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Summarizes trials into one row.
pub fn summarize(program: &str, strategy: Strategy, trials: &[TrialResult]) -> BenchRow {
    let n = trials.len().max(1) as f64;
    let qs: Vec<f64> = trials.iter().map(|t| t.queries as f64).collect();
    let es: Vec<f64> = trials.iter().map(|t| t.executions as f64).collect();
    BenchRow {
        program: program.to_string(),
        strategy: strategy.name().to_string(),
        mean_queries: qs.iter().sum::<f64>() / n,
        mean_execs: es.iter().sum::<f64>() / n,
        success_rate: trials.iter().filter(|t| t.success).count() as f64 / n,
        median_queries: median(qs),
        median_execs: median(es),
    }
}

/// Runs every strategy on every program, trials in parallel. Rows come out
/// program-major in input order.
pub fn bench(programs: &[(String, TargetProgram)], config: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (pi, (name, program)) in programs.iter().enumerate() {
        let seed = match &config.seed {
            Some(s) if s.len() == program.input_length() => s.clone(),
            _ => ByteInput(vec![0; program.input_length()]),
        };
        for &strategy in &config.strategies {
            let si = Strategy::ALL.iter().position(|&s| s == strategy).unwrap_or(0);
            let trials: Vec<TrialResult> = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let rng_seed = trial_seed(config.campaign.rng_seed, pi, si, t);
                    run_trial(program, &seed, strategy, config, rng_seed)
                })
                .collect::<Result<_>>()?;
            rows.push(summarize(name, strategy, &trials));
        }
    }
    Ok(rows)
}
