//! Monte Carlo forced execution.
//!
//! A batch of inputs is executed while every branch on a chosen path is
//! forced into the path's direction, so nested branches are measured even for
//! inputs that fail an outer constraint. Per-branch distance moments are
//! accumulated in streaming form and turned into satisfaction ratios; a
//! branch that no input satisfied gets a one-sided Chebyshev (Cantelli) upper
//! bound instead of zero.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::input_space::ByteInput;
use crate::target_model::{run, Edge, ExecutionTrace, Predicate, Steering, Successor, TargetProgram};

/// A path through the CFG, consumed per block in visit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathDirectives {
    edges: Vec<Edge>,
    queues: HashMap<usize, Vec<bool>>,
}

impl PathDirectives {
    /// Builds directives from an edge sequence, checking that it starts at
    /// the entry and that consecutive edges are adjacent.
    pub fn new(program: &TargetProgram, edges: Vec<Edge>) -> Result<Self> {
        if let Some(first) = edges.first() {
            if first.block != program.entry() {
                return Err(Error::Validation(format!(
                    "path starts at `{}`, entry is `{}`",
                    program.block(first.block).id,
                    program.block(program.entry()).id
                )));
            }
        }
        for pair in edges.windows(2) {
            if program.block(pair[0].block).successor(pair[0].dir) != Successor::Block(pair[1].block) {
                return Err(Error::Validation(format!(
                    "edge {} is not followed by block `{}`",
                    program.edge_label(pair[0]),
                    program.block(pair[1].block).id
                )));
            }
        }
        Ok(Self::from_edges_unchecked(edges))
    }

    /// Directives that need not form a connected path; used for branch
    /// inversion where only a prefix may be realizable.
    pub fn from_edges_unchecked(edges: Vec<Edge>) -> Self {
        let mut queues: HashMap<usize, Vec<bool>> = HashMap::new();
        for e in &edges {
            queues.entry(e.block).or_default().push(e.dir);
        }
        PathDirectives { edges, queues }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, edge: Edge) -> bool {
        self.edges.contains(&edge)
    }

    /// Distinct edges of the path in order of first appearance. Visits of
    /// one block in one direction fold into a single branch class.
    pub fn branches(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = Vec::new();
        for &e in &self.edges {
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }

    pub fn cursor(&self) -> DirectiveCursor<'_> {
        DirectiveCursor { directives: self, consumed: HashMap::new() }
    }

    pub fn label(&self, program: &TargetProgram) -> String {
        let parts: Vec<String> = self.edges.iter().map(|&e| program.edge_label(e)).collect();
        parts.join(" ")
    }
}

/// Per-run position in each block's directive queue.
pub struct DirectiveCursor<'a> {
    directives: &'a PathDirectives,
    consumed: HashMap<usize, usize>,
}

impl Steering for DirectiveCursor<'_> {
    fn direct(&mut self, block: usize, natural: bool) -> bool {
        let Some(queue) = self.directives.queues.get(&block) else {
            return natural;
        };
        let pos = self.consumed.entry(block).or_insert(0);
        match queue.get(*pos) {
            Some(&dir) => {
                *pos += 1;
                dir
            }
            None => natural,
        }
    }
}

/// Executes `input` with branch directions dictated by `directives`; once a
/// block's directives run out it evaluates naturally.
pub fn forced_execute<R: Rng + ?Sized>(
    program: &TargetProgram,
    directives: &PathDirectives,
    input: &ByteInput,
    rng: &mut R,
) -> Result<ExecutionTrace> {
    run(program, input, rng, &mut directives.cursor())
}

/// Streaming mean and population variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Order-independent combination of two partial accumulators.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }
}

/// Statistics of one branch class over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchStats {
    pub moments: Welford,
    /// Inputs whose every visit of this class satisfied the edge constraint.
    pub satisfied: u64,
}

impl BranchStats {
    pub fn streaming_update(&mut self, distance: i64, satisfied: bool) {
        self.moments.push(distance as f64);
        if satisfied {
            self.satisfied += 1;
        }
    }
}

/// Folds the traces of a batch into per-branch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    branches: Vec<Edge>,
    stats: HashMap<Edge, BranchStats>,
    inputs: u64,
}

impl BatchStats {
    pub fn new(path: &PathDirectives) -> Self {
        BatchStats { branches: path.branches(), stats: HashMap::new(), inputs: 0 }
    }

    pub fn inputs(&self) -> u64 {
        self.inputs
    }

    pub fn get(&self, branch: Edge) -> Option<&BranchStats> {
        self.stats.get(&branch)
    }

    /// Adds one execution. Every visit contributes its distance; the input
    /// counts as satisfying a branch only if all its visits of that branch
    /// did.
    pub fn observe(&mut self, trace: &ExecutionTrace) {
        self.inputs += 1;
        let mut verdict: Vec<(Edge, bool)> = Vec::new();
        for (visit, &edge) in trace.visits.iter().zip(&trace.edges) {
            if !self.branches.contains(&edge) {
                continue;
            }
            let ok = visit.satisfied == edge.dir;
            self.stats.entry(edge).or_default().moments.push(visit.distance as f64);
            match verdict.iter_mut().find(|(e, _)| *e == edge) {
                Some((_, all)) => *all &= ok,
                None => verdict.push((edge, ok)),
            }
        }
        for (edge, ok) in verdict {
            if ok {
                self.stats.get_mut(&edge).expect("observed branch").satisfied += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &BatchStats) {
        self.inputs += other.inputs;
        for (edge, s) in &other.stats {
            let mine = self.stats.entry(*edge).or_default();
            mine.moments.merge(&s.moments);
            mine.satisfied += s.satisfied;
        }
    }

    pub fn ratios(&self, program: &TargetProgram) -> Result<RatioVector> {
        if self.inputs == 0 {
            return Err(Error::EmptyBatch);
        }
        let mut entries = Vec::with_capacity(self.branches.len());
        for &edge in &self.branches {
            let r = match self.stats.get(&edge) {
                None => 1.0,
                Some(s) if s.satisfied > 0 => s.satisfied as f64 / self.inputs as f64,
                Some(s) => {
                    let pred = program.block(edge.block).predicate.for_direction(edge.dir);
                    chebyshev_bound(s.moments.mean(), s.moments.variance(), pred, 1.0)?
                }
            };
            entries.push((edge, r));
        }
        Ok(RatioVector { entries })
    }
}

/// Satisfaction ratio per branch of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioVector {
    pub entries: Vec<(Edge, f64)>,
}

impl RatioVector {
    /// Smallest ratio; 1 for an empty path.
    pub fn min(&self) -> f64 {
        self.entries.iter().map(|&(_, r)| r).fold(1.0, f64::min)
    }

    pub fn get(&self, edge: Edge) -> Option<f64> {
        self.entries.iter().find(|(e, _)| *e == edge).map(|&(_, r)| r)
    }
}

/// `Pr(X <= 0) <= var / (var + mean^2)` when `mean > 0`, else 1.
fn cantelli_le(mean: f64, variance: f64) -> f64 {
    if mean <= 0.0 {
        return 1.0;
    }
    let denom = variance + mean * mean;
    (variance / denom).clamp(0.0, 1.0)
}

/// `Pr(X >= 0) <= var / (var + mean^2)` when `mean < 0`, else 1.
fn cantelli_ge(mean: f64, variance: f64) -> f64 {
    cantelli_le(-mean, variance)
}

/// Upper bound on the probability that a branch distance with the given
/// moments satisfies `predicate`. `h` is the smallest positive step of the
/// distance type (1 for integers).
pub fn chebyshev_bound(mean: f64, variance: f64, predicate: Predicate, h: f64) -> Result<f64> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::NegativeVariance(variance));
    }
    let le = |m: f64| cantelli_le(m, variance);
    let ge = |m: f64| cantelli_ge(m, variance);
    let r = match predicate {
        Predicate::Le => le(mean),
        Predicate::Lt => le(mean + h),
        Predicate::Ge => ge(mean),
        Predicate::Gt => ge(mean - h),
        Predicate::Eq => ge(mean).min(le(mean)),
        Predicate::Ne => ge(mean - h) + le(mean + h),
    };
    Ok(r.clamp(0.0, 1.0))
}

/// Runs every input under forced execution along `path` and returns the
/// per-branch satisfaction ratios.
pub fn monte_carlo_execute<R: Rng + ?Sized>(
    program: &TargetProgram,
    path: &PathDirectives,
    inputs: &[ByteInput],
    rng: &mut R,
) -> Result<RatioVector> {
    monte_carlo_execute_with(program, path, inputs, rng, |_, _| {})
}

/// As [`monte_carlo_execute`], handing each trace to `on_trace` as well.
pub fn monte_carlo_execute_with<R: Rng + ?Sized>(
    program: &TargetProgram,
    path: &PathDirectives,
    inputs: &[ByteInput],
    rng: &mut R,
    mut on_trace: impl FnMut(&ByteInput, &ExecutionTrace),
) -> Result<RatioVector> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut stats = BatchStats::new(path);
    for input in inputs {
        let trace = forced_execute(program, path, input, rng)?;
        stats.observe(&trace);
        on_trace(input, &trace);
    }
    stats.ratios(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input_space::InputRegion;
    use crate::target_model::execute;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(target: i64) -> TargetProgram {
        TargetProgram::from_json(&format!(
            r#"{{"input_length": 1, "entry": "b", "target": {{"block": "b", "dir": "true"}},
                "blocks": [{{"id": "b", "distance": ["sub", ["input", 0], {target}], "predicate": "eq",
                             "true_succ": "exit", "false_succ": "exit"}}]}}"#
        ))
        .unwrap()
    }

    fn nested() -> TargetProgram {
        TargetProgram::from_json(
            r#"{"input_length": 2, "entry": "outer", "target": {"block": "inner", "dir": "true"},
                "blocks": [
                  {"id": "outer", "distance": ["sub", ["input", 0], 10], "predicate": "eq",
                   "true_succ": "inner", "false_succ": "exit"},
                  {"id": "inner", "distance": ["sub", ["input", 1], 20], "predicate": "le",
                   "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap()
    }

    fn true_path(p: &TargetProgram) -> PathDirectives {
        PathDirectives::new(p, vec![Edge::new(0, true)]).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn forced_direction_records_unsatisfied_distance() {
        let p = single(10);
        let t = forced_execute(&p, &true_path(&p), &ByteInput(vec![7]), &mut rng()).unwrap();
        assert_eq!(t.edges, vec![Edge::new(0, true)]);
        assert_eq!(t.visits[0].distance, -3);
        assert!(!t.visits[0].satisfied);
        assert!(t.visits[0].forced);
    }

    #[test]
    fn satisfying_input_matches_natural_execution() {
        let p = single(10);
        let input = ByteInput(vec![10]);
        let forced = forced_execute(&p, &true_path(&p), &input, &mut rng()).unwrap();
        assert_eq!(forced, execute(&p, &input, &mut rng()).unwrap());
    }

    #[test]
    fn nested_branch_visited_when_outer_fails() {
        let p = nested();
        let path = PathDirectives::new(&p, vec![Edge::new(0, true), Edge::new(1, true)]).unwrap();
        let input = ByteInput(vec![3, 50]);
        let natural = execute(&p, &input, &mut rng()).unwrap();
        assert!(natural.visits.iter().all(|v| v.block != 1));
        let forced = forced_execute(&p, &path, &input, &mut rng()).unwrap();
        assert_eq!(forced.visits.len(), 2);
        assert_eq!(forced.visits[1].block, 1);
        assert_eq!(forced.visits[1].distance, 30);
    }

    #[test]
    fn path_adjacency_checked() {
        let p = nested();
        assert!(PathDirectives::new(&p, vec![Edge::new(0, false), Edge::new(1, true)]).is_err());
        assert!(PathDirectives::new(&p, vec![Edge::new(1, true)]).is_err());
    }

    #[test]
    fn streaming_examples() {
        let mut w = Welford::default();
        for x in [2, 4, 4, 4, 5, 5, 7, 9] {
            w.push(f64::from(x));
        }
        assert_eq!(w.mean(), 5.0);
        assert_eq!(w.variance(), 4.0);

        let mut s = BranchStats::default();
        s.streaming_update(7, true);
        assert_eq!((s.moments.mean(), s.moments.variance(), s.satisfied), (7.0, 0.0, 1));

        let mut w = Welford::default();
        for _ in 0..3 {
            w.push(3.0);
        }
        assert_eq!(w.variance(), 0.0);
    }

    #[test]
    fn chebyshev_examples() {
        let b = |m, v, p| chebyshev_bound(m, v, p, 1.0).unwrap();
        assert!((b(2.0, 1.0, Predicate::Le) - 0.2).abs() < 1e-12);
        assert!((b(2.0, 1.0, Predicate::Lt) - 0.1).abs() < 1e-12);
        assert_eq!(b(0.0, 1.0, Predicate::Le), 1.0);
        assert!((b(5.5, 8.25, Predicate::Le) - 8.25 / 38.5).abs() < 1e-12);
        assert!((b(-2.0, 1.0, Predicate::Ge) - 0.2).abs() < 1e-12);
        assert!((b(-2.0, 1.0, Predicate::Gt) - 0.1).abs() < 1e-12);
        assert!((b(2.0, 1.0, Predicate::Eq) - 0.2).abs() < 1e-12);
        assert!((b(0.0, 4.0, Predicate::Ne) - 1.0).abs() < 1e-12);
        assert_eq!(b(3.0, 0.0, Predicate::Le), 0.0);
        assert!(matches!(chebyshev_bound(1.0, -1.0, Predicate::Eq, 1.0), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn exhaustive_batch_gives_exact_ratio() {
        let p = single(100);
        let inputs: Vec<ByteInput> = InputRegion::full(1).enumerate().collect();
        let r = monte_carlo_execute(&p, &true_path(&p), &inputs, &mut rng()).unwrap();
        assert_eq!(r.min(), 1.0 / 256.0);
    }

    #[test]
    fn always_satisfied_batch() {
        let p = single(100);
        let inputs = vec![ByteInput(vec![100]); 3];
        let r = monte_carlo_execute(&p, &true_path(&p), &inputs, &mut rng()).unwrap();
        assert_eq!(r.min(), 1.0);
    }

    #[test]
    fn never_satisfied_batch_uses_bound() {
        let p = single(100);
        let inputs: Vec<ByteInput> = (0..3).map(|b| ByteInput(vec![b])).collect();
        let r = monte_carlo_execute(&p, &true_path(&p), &inputs, &mut rng()).unwrap();
        // distances -100, -99, -98: mean -99, population variance 2/3
        let var = 2.0 / 3.0;
        let expect = var / (var + 99.0 * 99.0);
        assert!((r.min() - expect).abs() < 1e-12);
        assert!(r.min() > 0.0 && r.min() <= 1.0);
    }

    #[test]
    fn empty_batch_rejected() {
        let p = single(1);
        assert!(matches!(monte_carlo_execute(&p, &true_path(&p), &[], &mut rng()), Err(Error::EmptyBatch)));
    }

    #[test]
    fn false_edges_use_negated_predicate() {
        // Path takes the false edge of `x - 5 == 0`, i.e. the constraint x != 5.
        let p = single(5);
        let path = PathDirectives::new(&p, vec![Edge::new(0, false)]).unwrap();
        let r = monte_carlo_execute(&p, &path, &vec![ByteInput(vec![5]); 4], &mut rng()).unwrap();
        // Never satisfied, mean 0, variance 0: bound for `!= 0` is 0 + 0.
        assert_eq!(r.min(), 0.0);
        let r = monte_carlo_execute(&p, &path, &[ByteInput(vec![5]), ByteInput(vec![6])], &mut rng()).unwrap();
        assert_eq!(r.min(), 0.5);
    }

    #[test]
    fn truncated_branches_get_ratio_one() {
        let p = TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "a", "max_steps": 1, "target": {"block": "b", "dir": "true"},
                "blocks": [
                  {"id": "a", "distance": 0, "predicate": "eq", "true_succ": "b", "false_succ": "exit"},
                  {"id": "b", "distance": ["input", 0], "predicate": "eq", "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let path = PathDirectives::new(&p, vec![Edge::new(0, true), Edge::new(1, true)]).unwrap();
        let r = monte_carlo_execute(&p, &path, &[ByteInput(vec![4])], &mut rng()).unwrap();
        assert_eq!(r.get(Edge::new(1, true)), Some(1.0));
    }

    #[test]
    fn loop_visits_fold_into_one_class() {
        // Self-loop on `x > 0`, forced around three times before leaving.
        let p = TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "l", "target": {"block": "l", "dir": "false"},
                "blocks": [{"id": "l", "distance": ["input", 0], "predicate": "gt",
                            "true_succ": "l", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let edges = vec![Edge::new(0, true), Edge::new(0, true), Edge::new(0, true), Edge::new(0, false)];
        let path = PathDirectives::new(&p, edges).unwrap();
        assert_eq!(path.branches(), vec![Edge::new(0, true), Edge::new(0, false)]);
        let mut stats = BatchStats::new(&path);
        let t = forced_execute(&p, &path, &ByteInput(vec![4]), &mut rng()).unwrap();
        assert_eq!(t.edges, path.edges());
        stats.observe(&t);
        let taken = stats.get(Edge::new(0, true)).unwrap();
        assert_eq!(taken.moments.count(), 3);
        assert_eq!(taken.satisfied, 1);
        assert_eq!(stats.get(Edge::new(0, false)).unwrap().satisfied, 0);
    }

    #[test]
    fn streaming_matches_batch_on_random_sequences() {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = r.gen_range(1..200);
            let xs: Vec<f64> = (0..n).map(|_| r.gen_range(-1_000_000i64..1_000_000) as f64).collect();
            let mut w = Welford::default();
            xs.iter().for_each(|&x| w.push(x));
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((w.mean() - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            assert!((w.variance() - var).abs() <= 1e-9 * var.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(xs in prop::collection::vec(-1000i64..1000, 1..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut whole = Welford::default();
            xs.iter().for_each(|&x| whole.push(x as f64));
            let (mut a, mut b) = (Welford::default(), Welford::default());
            xs[..cut].iter().for_each(|&x| a.push(x as f64));
            xs[cut..].iter().for_each(|&x| b.push(x as f64));
            let mut ab = a;
            ab.merge(&b);
            let mut ba = b;
            ba.merge(&a);
            for m in [ab, ba] {
                prop_assert_eq!(m.count(), whole.count());
                prop_assert!((m.mean() - whole.mean()).abs() < 1e-9 * whole.mean().abs().max(1.0));
                prop_assert!((m.variance() - whole.variance()).abs() < 1e-7 * whole.variance().max(1.0));
            }
        }
    }
}
