//! Searchers over the input space.
//!
//! - [`randomized_search`]: noisy binary search with multiplicative weights.
//! - [`deterministic_search`]: plain bisection for a noiseless oracle.
//! - [`majority_vote_search`]: bisection where every comparison is repeated.
//! - [`blackbox_search`]: uniform random testing.

mod weights;

use std::collections::HashMap;

use rand::Rng;

use crate::counting_oracle::{Answer, ComparisonOracle};
use crate::error::{Error, Result};
use crate::input_space::{ByteInput, InputRegion, TotalOrder};
use crate::target_model::{execute, TargetProgram};

pub use weights::{SplitWeight, WeightGroup, WeightGroupList};

/// One oracle query made by a searcher.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLog {
    /// Belief context (path) the query was made in.
    pub context: usize,
    pub split_index: usize,
    pub bit: bool,
    pub answer: Answer,
    /// Group count of the context's list after the update.
    pub groups: usize,
    pub weight_sum: f64,
    pub max_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub candidate: Option<ByteInput>,
    /// Region the candidate was drawn from.
    pub region: InputRegion,
    pub queries: u64,
    pub executions: u64,
    /// Natural executions spent checking candidates.
    pub verifications: u64,
    /// The candidate reached the target under natural execution.
    pub success: bool,
    pub budget_exhausted: bool,
    pub log: Vec<QueryLog>,
}

/// Natural-execution check used to verify candidates.
pub fn natural_verifier<'a, R: Rng + ?Sized>(
    program: &'a TargetProgram,
    rng: &'a mut R,
) -> impl FnMut(&ByteInput) -> bool + 'a {
    move |input| execute(program, input, rng).map(|t| t.reached_target).unwrap_or(false)
}

/// Bisection with a noiseless oracle: split, ask, keep the indicated half,
/// until a single input remains.
pub fn deterministic_search<O: ComparisonOracle>(
    space: &InputRegion,
    order: &TotalOrder,
    oracle: &mut O,
    verify: impl FnMut(&ByteInput) -> bool,
) -> Result<SearchOutcome> {
    majority_vote_search(space, order, oracle, 1, verify)
}

/// Bisection where each comparison is the majority of `reps` oracle answers.
pub fn majority_vote_search<O: ComparisonOracle>(
    space: &InputRegion,
    order: &TotalOrder,
    oracle: &mut O,
    reps: usize,
    mut verify: impl FnMut(&ByteInput) -> bool,
) -> Result<SearchOutcome> {
    if reps == 0 || reps.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("reps must be odd, got {reps}")));
    }
    let mut region = space.clone();
    let mut queries = 0u64;
    let mut log = Vec::new();
    while !region.is_singleton() {
        let (left, right) = region.split_half(order)?;
        let mut votes = 0usize;
        for _ in 0..reps {
            if oracle.compare(&left, &right)? {
                votes += 1;
            }
            queries += 1;
        }
        let bit = 2 * votes > reps;
        log.push(QueryLog {
            context: 0,
            split_index: 0,
            bit,
            answer: Answer::from_bit(bit),
            groups: 1,
            weight_sum: 1.0,
            max_weight: 1.0,
        });
        region = if bit { left } else { right };
    }
    let candidate = region.min_input();
    let success = verify(&candidate);
    Ok(SearchOutcome {
        candidate: Some(candidate),
        region,
        queries,
        executions: oracle.executions(),
        verifications: 1,
        success,
        budget_exhausted: false,
        log,
    })
}

/// Parameters of [`randomized_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedParams {
    /// Oracle failure probability assumed by the weight update.
    pub p: f64,
    /// Query cap; `None` uses [`default_query_budget`].
    pub budget: Option<u64>,
    pub split: SplitWeight,
}

impl RandomizedParams {
    pub fn new(p: f64) -> Self {
        RandomizedParams { p, budget: None, split: SplitWeight::Proportional }
    }
}

/// `64 * ceil(log2 N) / (1/2 - p)^2`.
pub fn default_query_budget(space: &InputRegion, p: f64) -> u64 {
    let bits = space.log2_cardinality().ceil().max(1.0);
    (64.0 * bits / (0.5 - p).powi(2)).ceil() as u64
}

/// Belief threshold `1 / sqrt(log2 N)` at which a single input is checked.
pub fn termination_threshold(space: &InputRegion) -> f64 {
    let bits = space.log2_cardinality();
    if bits <= 1.0 {
        1.0
    } else {
        1.0 / bits.sqrt()
    }
}

/// Noisy binary search over weight groups.
///
/// Each round picks the group where the cumulative weight crosses one half,
/// splits it, asks the oracle which half is more promising, and reweights
/// every group on the favored side by `1 - p` and every other group by `p`.
/// When the oracle reports that neither half holds a target, the two halves
/// are the disfavored side.
///
/// A single input whose weight reaches [`termination_threshold`], or a
/// single input that is itself the median group, is checked by natural
/// execution. A confirmed input ends the search. A refuted one gets weight
/// zero and the search goes on, so one wrong answer near the end does not
/// doom the run. Inputs reported by the oracle are checked the same way.
/// When the query budget runs out, the candidate is a uniform draw from the
/// group with the largest per-input weight.
///
/// Oracles with several contexts (one per counting path) get one weight
/// list each; inactive lists are kept.
pub fn randomized_search<O: ComparisonOracle, R: Rng + ?Sized>(
    space: &InputRegion,
    order: &TotalOrder,
    oracle: &mut O,
    params: RandomizedParams,
    rng: &mut R,
    mut verify: impl FnMut(&ByteInput) -> bool,
) -> Result<SearchOutcome> {
    let p = params.p;
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1/2), got {p}")));
    }
    let budget = params.budget.unwrap_or_else(|| default_query_budget(space, p));
    let threshold = termination_threshold(space);
    let mut lists: HashMap<usize, WeightGroupList> = HashMap::new();
    let mut out = SearchOutcome {
        candidate: None,
        region: space.clone(),
        queries: 0,
        executions: 0,
        verifications: 0,
        success: false,
        budget_exhausted: false,
        log: Vec::new(),
    };
    let mut context = 0usize;

    if space.is_singleton() {
        let candidate = space.min_input();
        out.verifications = 1;
        out.success = verify(&candidate);
        out.candidate = Some(candidate);
        return Ok(out);
    }

    loop {
        if out.queries >= budget {
            out.budget_exhausted = true;
            break;
        }
        context = oracle.context()?;
        let list = lists.entry(context).or_insert_with(|| WeightGroupList::new(space.clone()));
        if list.total_weight() <= 0.0 {
            // Every input with belief left has been refuted.
            out.executions = oracle.executions();
            return Ok(out);
        }

        let mid = list.select_split_group()?;
        let check = match heaviest_singleton(list) {
            Some(i) if list.groups()[i].weight >= threshold => Some(i),
            _ if list.groups()[mid].region.is_singleton() => Some(mid),
            _ => None,
        };
        if let Some(i) = check {
            let region = list.groups()[i].region.clone();
            let candidate = region.min_input();
            out.verifications += 1;
            if verify(&candidate) {
                return Ok(confirmed(out, region, candidate, oracle));
            }
            list.eliminate(i)?;
            continue;
        }

        let (left, right) = list.split(mid, order)?;
        let answer = oracle.answer(&left, &right)?;
        out.queries += 1;
        list.update_with_answer(mid, (left, right), answer, p, params.split)?;
        out.log.push(QueryLog {
            context,
            split_index: mid,
            bit: answer.bit(),
            answer,
            groups: list.len(),
            weight_sum: list.total_weight(),
            max_weight: list.groups().iter().map(|g| g.weight).fold(0.0, f64::max),
        });
        if let Some(hit) = oracle.found() {
            let hit = hit.clone();
            out.verifications += 1;
            if verify(&hit) {
                return Ok(confirmed(out, InputRegion::singleton(&hit), hit, oracle));
            }
        }
    }

    if let Some(list) = lists.get(&context) {
        out.region = best_group(list).region.clone();
    }
    let candidate = out.region.sample(rng);
    out.verifications += 1;
    out.success = verify(&candidate);
    out.candidate = Some(candidate);
    out.executions = oracle.executions();
    Ok(out)
}

fn confirmed<O: ComparisonOracle>(
    mut out: SearchOutcome,
    region: InputRegion,
    candidate: ByteInput,
    oracle: &O,
) -> SearchOutcome {
    out.region = region;
    out.candidate = Some(candidate);
    out.success = true;
    out.executions = oracle.executions();
    out
}

fn heaviest_singleton(list: &WeightGroupList) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, g) in list.groups().iter().enumerate() {
        if g.region.is_singleton() && best.is_none_or(|b| g.weight > list.groups()[b].weight) {
            best = Some(i);
        }
    }
    best
}

/// Group with the largest per-input weight; ties go to the earliest.
fn best_group(list: &WeightGroupList) -> &WeightGroup {
    let mut best = &list.groups()[0];
    for g in &list.groups()[1..] {
        if g.input_weight() > best.input_weight() {
            best = g;
        }
    }
    best
}

/// Uniform random testing: run random inputs until one reaches the target or
/// `budget` executions are spent.
pub fn blackbox_search<R: Rng + ?Sized>(
    program: &TargetProgram,
    space: &InputRegion,
    budget: u64,
    rng: &mut R,
) -> Result<SearchOutcome> {
    let mut executions = 0u64;
    while executions < budget {
        let input = space.sample(rng);
        executions += 1;
        if execute(program, &input, rng)?.reached_target {
            return Ok(SearchOutcome {
                region: InputRegion::singleton(&input),
                candidate: Some(input),
                queries: executions,
                executions,
                verifications: 0,
                success: true,
                budget_exhausted: false,
                log: Vec::new(),
            });
        }
    }
    Ok(SearchOutcome {
        candidate: None,
        region: space.clone(),
        queries: executions,
        executions,
        verifications: 0,
        success: false,
        budget_exhausted: true,
        log: Vec::new(),
    })
}
