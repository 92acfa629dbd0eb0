//! A full fuzzing campaign: preprocessing, then repeated search rounds.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counting_oracle::{ComparisonOracle, CountingOracle, OracleConfig};
use crate::error::{Error, Result};
use crate::input_space::{ByteInput, InputRegion, TotalOrder};
use crate::mc_execution::PathDirectives;
use crate::prep::{assign_total_order_costed, bootstrap_paths_costed, OrderConfig};
use crate::search::{default_query_budget, randomized_search, RandomizedParams, SplitWeight};
use crate::target_model::{execute, TargetProgram};

/// Which total order the search splits under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    #[serde(alias = "lexicographic")]
    Lex,
    #[default]
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Inputs per Monte Carlo batch.
    pub k: usize,
    /// Failure probability assumed by the weight update.
    pub p: f64,
    /// Paths to bootstrap.
    pub n_paths: usize,
    /// Program executions allowed across the whole campaign.
    pub budget: u64,
    pub order: OrderMode,
    pub split: SplitWeight,
    pub rng_seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            k: 5,
            p: 0.01,
            n_paths: 8,
            budget: 1_000_000,
            order: OrderMode::Learned,
            split: SplitWeight::Proportional,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub success: bool,
    pub input: Option<ByteInput>,
    pub oracle_queries: u64,
    /// Every program execution: preprocessing, counting and verification.
    pub executions: u64,
    pub rounds: u64,
    pub paths: usize,
    pub order: Vec<usize>,
    pub wall_ms: u128,
    #[serde(rename = "config_echo")]
    pub config: CampaignConfig,
}

/// Paths and order produced by preprocessing.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub paths: Vec<PathDirectives>,
    pub order: TotalOrder,
    /// Program executions spent preprocessing.
    pub executions: u64,
}

/// Bootstraps paths from `seed` and picks the order. `None` when no path
/// to the target turned up.
pub fn prepare<R: Rng + ?Sized>(
    program: &TargetProgram,
    seed: &ByteInput,
    config: &CampaignConfig,
    rng: &mut R,
) -> Result<Option<Prepared>> {
    let space = InputRegion::full(program.input_length());
    let (paths, mut executions) = match bootstrap_paths_costed(program, seed, config.n_paths, rng) {
        Ok(found) => found,
        Err(Error::NoPathsFound { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let order = match config.order {
        OrderMode::Lex => TotalOrder::lexicographic(space.dims()),
        OrderMode::Learned => {
            let (order, cost) = assign_total_order_costed(
                program,
                &paths,
                &space,
                Some(seed),
                OrderConfig { k: config.k, ..OrderConfig::default() },
                rng,
            )?;
            executions += cost;
            order
        }
    };
    Ok(Some(Prepared { paths, order, executions }))
}

/// Runs a campaign from `seed` until a verified target-reaching input turns
/// up or the execution budget is spent.
///
/// The counting oracle, and with it the path cache, lives across rounds;
/// each round is a fresh [`randomized_search`] whose query budget is capped
/// by what is left of the execution budget.
pub fn campaign(program: &TargetProgram, seed: &ByteInput, config: &CampaignConfig) -> Result<CampaignReport> {
    let started = Instant::now();
    OracleConfig { k: config.k, p: config.p }.validate()?;
    if config.n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let space = InputRegion::full(program.input_length());
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut report = CampaignReport {
        success: false,
        input: None,
        oracle_queries: 0,
        executions: 0,
        rounds: 0,
        paths: 0,
        order: TotalOrder::lexicographic(space.dims()).priority().to_vec(),
        wall_ms: 0,
        config: config.clone(),
    };
    let done = |mut r: CampaignReport| {
        r.wall_ms = started.elapsed().as_millis();
        Ok(r)
    };

    report.executions += 1;
    if execute(program, seed, &mut rng)?.reached_target {
        report.success = true;
        report.input = Some(seed.clone());
        report.rounds = 1;
        return done(report);
    }

    let prepared = match prepare(program, seed, config, &mut rng)? {
        Some(p) => p,
        None => {
            report.executions += 16 * config.n_paths as u64 + 1;
            return done(report);
        }
    };
    report.executions += prepared.executions;
    report.paths = prepared.paths.len();
    report.order = prepared.order.priority().to_vec();
    let Prepared { paths, order, .. } = prepared;

    let oracle_config = OracleConfig { k: config.k, p: config.p };
    let mut oracle = CountingOracle::new(program, paths, space.clone(), oracle_config, Some(seed.clone()), rng.gen())?;
    // Two batches per query, plus at most one check per group the query
    // creates (a round checks at most queries + 2 inputs).
    let per_query = 2 * config.k as u64 + 1;
    // The first query also counts every path over the whole space.
    let warmup = config.k as u64 * report.paths as u64;
    let spent_before = report.executions;
    let mut verifications = 0u64;

    loop {
        let spent = spent_before + oracle.executions() + verifications;
        let reserve = if report.rounds == 0 { warmup } else { 0 };
        if spent + reserve + per_query + 2 > config.budget {
            report.executions = spent;
            break;
        }
        let remaining = config.budget - spent - reserve - 2;
        let queries = (remaining / per_query).min(default_query_budget(&space, config.p));
        let params = RandomizedParams { p: config.p, budget: Some(queries), split: config.split };
        oracle.clear_found();
        report.rounds += 1;
        let mut verify_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let outcome = randomized_search(&space, &order, &mut oracle, params, &mut rng, |input| {
            execute(program, input, &mut verify_rng).map(|t| t.reached_target).unwrap_or(false)
        })?;
        verifications += outcome.verifications;
        report.oracle_queries += outcome.queries;
        if outcome.success {
            report.success = true;
            report.input = outcome.candidate;
            report.executions = spent_before + oracle.executions() + verifications;
            break;
        }
    }
    done(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested(d: usize) -> TargetProgram {
        // byte0 == 17, then byte(d-1) == 230.
        TargetProgram::from_json(&format!(
            r#"{{"input_length": {d}, "entry": "a", "target": {{"block": "b", "dir": "true"}},
                "blocks": [
                  {{"id": "a", "distance": ["sub", ["input", 0], 17], "predicate": "eq",
                   "true_succ": "b", "false_succ": "exit"}},
                  {{"id": "b", "distance": ["sub", ["input", {}], 230], "predicate": "eq",
                   "true_succ": "exit", "false_succ": "exit"}}]}}"#,
            d - 1
        ))
        .unwrap()
    }

    #[test]
    fn seed_reaching_target_wins_round_one() {
        let p = nested(2);
        let r = campaign(&p, &ByteInput(vec![17, 230]), &CampaignConfig::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.rounds, 1);
        assert_eq!(r.oracle_queries, 0);
    }

    #[test]
    fn finds_nested_target() {
        let p = nested(2);
        let cfg = CampaignConfig { budget: 100_000, rng_seed: 3, ..CampaignConfig::default() };
        let r = campaign(&p, &ByteInput(vec![0, 0]), &cfg).unwrap();
        assert!(r.success, "{r:?}");
        assert_eq!(r.input, Some(ByteInput(vec![17, 230])));
        assert!(r.executions <= cfg.budget);
    }

    #[test]
    fn unreachable_target_spends_budget() {
        let p = TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "a", "target": {"block": "a", "dir": "true"},
                "blocks": [{"id": "a", "distance": ["add", ["input", 0], 1], "predicate": "le",
                            "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let cfg = CampaignConfig { budget: 2_000, ..CampaignConfig::default() };
        let r = campaign(&p, &ByteInput(vec![9]), &cfg).unwrap();
        assert!(!r.success);
        assert!(r.executions <= cfg.budget);
        assert!(r.executions + 4 * (cfg.k as u64 + 1) > cfg.budget, "{r:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let p = nested(3);
        let cfg = CampaignConfig { budget: 50_000, rng_seed: 11, ..CampaignConfig::default() };
        let a = campaign(&p, &ByteInput(vec![1, 2, 3]), &cfg).unwrap();
        let b = campaign(&p, &ByteInput(vec![1, 2, 3]), &cfg).unwrap();
        assert_eq!(
            (a.success, a.input, a.oracle_queries, a.executions),
            (b.success, b.input, b.oracle_queries, b.executions)
        );
    }
}
