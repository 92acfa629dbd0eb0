//! Comparison oracles for the searchers.
//!
//! [`CountingOracle`] is the noisy Monte Carlo counting oracle: it picks a
//! target-reaching path with a UCB rule over the [`HitGraph`], estimates how
//! many inputs of each half-region reach the target along that path, and
//! reports whether the left half looks at least as promising as the right.
//! [`TruthOracle`] and [`FlipOracle`] are exact and synthetically noisy
//! references used by the benchmarks.

mod hitgraph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::input_space::{ByteInput, InputRegion, TotalOrder};
use crate::mc_execution::{monte_carlo_execute_with, PathDirectives};
use crate::target_model::{execute, ExecutionTrace, TargetProgram};

pub use hitgraph::{select_path, HitGraph, PathEntry, PathId};

/// Outcome of a comparison that may also report that neither half looks
/// like it holds a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Left,
    Right,
    /// Both halves were estimated to hold less than one target.
    Neither,
}

impl Answer {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Answer::Left
        } else {
            Answer::Right
        }
    }

    /// The plain comparison bit; `Neither` reads as a tie, which favors left.
    pub fn bit(self) -> bool {
        self != Answer::Right
    }
}

/// Answers "does the left region hold at least as many target-reaching
/// inputs as the right one?".
pub trait ComparisonOracle {
    /// Belief context the next comparison will be made in. Oracles that
    /// count along several paths return the selected path; others use 0.
    fn context(&mut self) -> Result<usize> {
        Ok(0)
    }

    fn compare(&mut self, left: &InputRegion, right: &InputRegion) -> Result<bool>;

    /// Like [`compare`](Self::compare), but distinguishes an empty tie.
    fn answer(&mut self, left: &InputRegion, right: &InputRegion) -> Result<Answer> {
        self.compare(left, right).map(Answer::from_bit)
    }

    /// Program executions spent so far.
    fn executions(&self) -> u64 {
        0
    }

    /// A target-reaching input observed as a side effect of counting.
    fn found(&self) -> Option<&ByteInput> {
        None
    }
}

impl<O: ComparisonOracle + ?Sized> ComparisonOracle for &mut O {
    fn context(&mut self) -> Result<usize> {
        (**self).context()
    }
    fn compare(&mut self, left: &InputRegion, right: &InputRegion) -> Result<bool> {
        (**self).compare(left, right)
    }
    fn answer(&mut self, left: &InputRegion, right: &InputRegion) -> Result<Answer> {
        (**self).answer(left, right)
    }
    fn executions(&self) -> u64 {
        (**self).executions()
    }
    fn found(&self) -> Option<&ByteInput> {
        (**self).found()
    }
}

/// Executions per count estimate and the failure probability the searcher
/// assumes for the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub k: usize,
    pub p: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        // e^-5 <= 0.01
        OracleConfig { k: 5, p: 0.01 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p < 0.5) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1/2), got {}", self.p)));
        }
        Ok(())
    }
}

/// `log2` of the estimated number of inputs in `region` that reach the
/// target along `path`: `log2|region| + log2(min ratio)`, or `-inf` when a
/// ratio is zero.
pub fn approx_count<R: Rng + ?Sized>(
    program: &TargetProgram,
    region: &InputRegion,
    path: &PathDirectives,
    k: usize,
    rng: &mut R,
    seed: Option<&ByteInput>,
) -> Result<f64> {
    approx_count_with(program, region, path, k, rng, seed, |_, _| {})
}

pub fn approx_count_with<R: Rng + ?Sized>(
    program: &TargetProgram,
    region: &InputRegion,
    path: &PathDirectives,
    k: usize,
    rng: &mut R,
    seed: Option<&ByteInput>,
    on_trace: impl FnMut(&ByteInput, &ExecutionTrace),
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let inputs = region.sample_uniform(k, rng, seed);
    let ratios = monte_carlo_execute_with(program, path, &inputs, rng, on_trace)?;
    let min = ratios.min();
    Ok(if min > 0.0 { region.log2_cardinality() + min.log2() } else { f64::NEG_INFINITY })
}

/// One answered query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub path: PathId,
    pub log2_left: f64,
    pub log2_right: f64,
    pub bit: bool,
}

/// The Monte Carlo noisy counting oracle.
#[derive(Debug, Clone)]
pub struct CountingOracle<'p> {
    program: &'p TargetProgram,
    paths: Vec<PathDirectives>,
    ids: Vec<Option<PathId>>,
    hitgraph: HitGraph,
    space: InputRegion,
    config: OracleConfig,
    seed: Option<ByteInput>,
    rng: ChaCha8Rng,
    queries: u64,
    executions: u64,
    selected: Option<PathId>,
    found: Option<ByteInput>,
    log: Vec<QueryRecord>,
}

impl<'p> CountingOracle<'p> {
    pub fn new(
        program: &'p TargetProgram,
        paths: Vec<PathDirectives>,
        space: InputRegion,
        config: OracleConfig,
        seed: Option<ByteInput>,
        rng_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if paths.is_empty() {
            return Err(Error::NoPaths);
        }
        if let Some(bad) = paths.iter().find(|p| !p.contains(program.target())) {
            return Err(Error::InvalidParameter(format!("path `{}` does not reach the target", bad.label(program))));
        }
        Ok(CountingOracle {
            program,
            ids: vec![None; paths.len()],
            paths,
            hitgraph: HitGraph::new(program.target()),
            space,
            config,
            seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            queries: 0,
            executions: 0,
            selected: None,
            found: None,
            log: Vec::new(),
        })
    }

    pub fn hitgraph(&self) -> &HitGraph {
        &self.hitgraph
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    pub fn config(&self) -> OracleConfig {
        self.config
    }

    /// Forgets a harvested input so a new search round starts clean.
    pub fn clear_found(&mut self) {
        self.found = None;
    }

    fn count(&mut self, region: &InputRegion, path: usize) -> Result<f64> {
        let program = self.program;
        let path = &self.paths[path];
        let mut executed = 0u64;
        let mut hit: Option<ByteInput> = None;
        let log2 = approx_count_with(
            program,
            region,
            path,
            self.config.k,
            &mut self.rng,
            self.seed.as_ref(),
            |input, trace| {
                executed += 1;
                // An unforced run is a natural run: it really reached the target.
                if hit.is_none() && trace.reached_target && !trace.any_forced() {
                    hit = Some(input.clone());
                }
            },
        )?;
        self.executions += executed;
        if self.found.is_none() {
            self.found = hit;
        }
        Ok(log2)
    }

    /// Counts every not-yet-cached path over the whole space.
    fn initialize(&mut self) -> Result<()> {
        for i in 0..self.paths.len() {
            if self.ids[i].is_some() {
                continue;
            }
            let space = self.space.clone();
            let log2 = self.count(&space, i)?;
            let density = (log2 - space.log2_cardinality()).exp2();
            self.ids[i] = Some(self.hitgraph.insert(&self.paths[i], density, log2)?);
        }
        Ok(())
    }

    fn path_index(&self, id: PathId) -> usize {
        self.ids.iter().position(|&x| x == Some(id)).expect("cached path")
    }

    /// Selects the path for the next query (UCB over the hit graph).
    pub fn select(&mut self) -> Result<usize> {
        self.initialize()?;
        let id = select_path(&self.hitgraph, self.queries + 1)?;
        self.selected = Some(id);
        Ok(self.path_index(id))
    }

    /// Answers one query: 1 iff the left count estimate is at least the
    /// right one.
    pub fn oracle_query(&mut self, left: &InputRegion, right: &InputRegion) -> Result<bool> {
        self.oracle_answer(left, right).map(Answer::bit)
    }

    /// [`oracle_query`](Self::oracle_query) that reports `Neither` when both
    /// distinct halves are estimated to hold less than one input.
    pub fn oracle_answer(&mut self, left: &InputRegion, right: &InputRegion) -> Result<Answer> {
        if self.selected.is_none() {
            self.select()?;
        }
        let id = self.selected.take().expect("path selected");
        let idx = self.path_index(id);
        let stream = self.rng.clone();
        let log2_left = self.count(left, idx)?;
        if left == right {
            // Identical regions replay the same sample stream.
            self.rng = stream;
        }
        let log2_right = self.count(right, idx)?;
        let best = log2_left.max(log2_right);
        let larger = left.log2_cardinality().max(right.log2_cardinality());
        self.hitgraph.update(id, (best - larger).exp2(), best);
        self.queries += 1;
        let answer = if log2_left < 0.0 && log2_right < 0.0 && left != right {
            Answer::Neither
        } else {
            Answer::from_bit(log2_left >= log2_right)
        };
        self.log.push(QueryRecord { path: id, log2_left, log2_right, bit: answer.bit() });
        Ok(answer)
    }
}

impl ComparisonOracle for CountingOracle<'_> {
    fn context(&mut self) -> Result<usize> {
        self.select()
    }

    fn compare(&mut self, left: &InputRegion, right: &InputRegion) -> Result<bool> {
        self.oracle_query(left, right)
    }

    fn answer(&mut self, left: &InputRegion, right: &InputRegion) -> Result<Answer> {
        self.oracle_answer(left, right)
    }

    fn executions(&self) -> u64 {
        self.executions
    }

    fn found(&self) -> Option<&ByteInput> {
        self.found.as_ref()
    }
}

/// How [`TruthOracle`] turns exact counts into an answer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TruthMode {
    /// Compare target counts in the two regions as given.
    #[default]
    Regions,
    /// Compare target counts before and after the split point of the whole
    /// space under the order: "is the target at or before the end of the
    /// left region?". This is the comparison model of noisy binary search.
    Threshold(TotalOrder),
}

/// Noiseless oracle backed by the exact set of target-reaching inputs.
#[derive(Debug, Clone)]
pub struct TruthOracle {
    targets: Vec<ByteInput>,
    mode: TruthMode,
}

impl TruthOracle {
    pub fn new(targets: Vec<ByteInput>) -> Self {
        TruthOracle { targets, mode: TruthMode::Regions }
    }

    pub fn with_mode(mut self, mode: TruthMode) -> Self {
        self.mode = mode;
        self
    }

    /// Enumerates `space` under natural execution. Only for small spaces.
    pub fn enumerate<R: Rng + ?Sized>(program: &TargetProgram, space: &InputRegion, rng: &mut R) -> Result<Self> {
        let mut targets = Vec::new();
        for input in space.enumerate() {
            if execute(program, &input, rng)?.reached_target {
                targets.push(input);
            }
        }
        Ok(TruthOracle::new(targets))
    }

    pub fn targets(&self) -> &[ByteInput] {
        &self.targets
    }

    pub fn count(&self, region: &InputRegion) -> usize {
        self.targets.iter().filter(|t| region.contains(t)).count()
    }
}

impl ComparisonOracle for TruthOracle {
    fn compare(&mut self, left: &InputRegion, right: &InputRegion) -> Result<bool> {
        match &self.mode {
            TruthMode::Regions => Ok(self.count(left) >= self.count(right)),
            TruthMode::Threshold(order) => {
                let split = order.key(&left.max_input());
                let before = self.targets.iter().filter(|t| order.key(t) <= split).count();
                Ok(before >= self.targets.len() - before)
            }
        }
    }

    fn answer(&mut self, left: &InputRegion, right: &InputRegion) -> Result<Answer> {
        if self.mode == TruthMode::Regions && left != right && self.count(left) == 0 && self.count(right) == 0 {
            return Ok(Answer::Neither);
        }
        self.compare(left, right).map(Answer::from_bit)
    }
}

/// Flips the answers of an inner oracle independently with probability `p`.
#[derive(Debug, Clone)]
pub struct FlipOracle<O> {
    inner: O,
    p: f64,
    rng: ChaCha8Rng,
}

impl<O> FlipOracle<O> {
    pub fn new(inner: O, p: f64, rng_seed: u64) -> Self {
        FlipOracle { inner, p, rng: ChaCha8Rng::seed_from_u64(rng_seed) }
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: ComparisonOracle> ComparisonOracle for FlipOracle<O> {
    fn context(&mut self) -> Result<usize> {
        self.inner.context()
    }

    fn compare(&mut self, left: &InputRegion, right: &InputRegion) -> Result<bool> {
        let truth = self.inner.compare(left, right)?;
        Ok(if self.rng.gen_bool(self.p) { !truth } else { truth })
    }

    fn answer(&mut self, left: &InputRegion, right: &InputRegion) -> Result<Answer> {
        let truth = self.inner.answer(left, right)?;
        Ok(match truth {
            Answer::Neither => truth,
            _ if self.rng.gen_bool(self.p) => Answer::from_bit(truth == Answer::Right),
            _ => truth,
        })
    }

    fn executions(&self) -> u64 {
        self.inner.executions()
    }

    fn found(&self) -> Option<&ByteInput> {
        self.inner.found()
    }
}
