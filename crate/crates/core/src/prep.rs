//! Preprocessing: target-reaching paths from a seed, and a byte priority.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::input_space::{ByteInput, InputRegion, TotalOrder};
use crate::mc_execution::{monte_carlo_execute, PathDirectives, RatioVector};
use crate::target_model::{execute, run, Edge, Steering, TargetProgram};

/// Inverts the natural direction at chosen visit positions.
struct Inversions<'a> {
    flips: &'a BTreeSet<usize>,
    visit: usize,
}

impl Steering for Inversions<'_> {
    fn direct(&mut self, _block: usize, natural: bool) -> bool {
        let flip = self.flips.contains(&self.visit);
        self.visit += 1;
        natural ^ flip
    }
}

/// Collects up to `n` distinct target-reaching paths by re-running the seed
/// with random sets of branch visits inverted.
///
/// Inversions compound: each attempt starts from the flip set of an earlier
/// attempt (or the plain seed run) and inverts a uniformly sized random
/// subset of that run's visits on top. At most `16 * n` attempts are made.
pub fn bootstrap_paths<R: Rng + ?Sized>(
    program: &TargetProgram,
    seed: &ByteInput,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PathDirectives>> {
    bootstrap_paths_costed(program, seed, n, rng).map(|(paths, _)| paths)
}

/// [`bootstrap_paths`] plus the number of program executions it made.
pub fn bootstrap_paths_costed<R: Rng + ?Sized>(
    program: &TargetProgram,
    seed: &ByteInput,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<PathDirectives>, u64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut paths = Vec::new();
    let mut seen: HashSet<Vec<Edge>> = HashSet::new();
    let mut keep = |edges: &[Edge], paths: &mut Vec<PathDirectives>| -> Result<()> {
        if seen.insert(edges.to_vec()) {
            paths.push(PathDirectives::new(program, edges.to_vec())?);
        }
        Ok(())
    };

    let natural = execute(program, seed, rng)?;
    let mut executions = 1u64;
    if natural.reached_target {
        keep(&natural.edges, &mut paths)?;
    }

    // (flip set, visits of the run it produced)
    let mut pool: Vec<(BTreeSet<usize>, usize)> = vec![(BTreeSet::new(), natural.visits.len())];
    let attempts = 16 * n;
    for _ in 0..attempts {
        if paths.len() >= n {
            break;
        }
        let (base, visits) = pool[rng.gen_range(0..pool.len())].clone();
        if visits == 0 {
            continue;
        }
        let count = rng.gen_range(1..=visits);
        let mut flips = base;
        for i in sample(rng, visits, count) {
            // Inverting twice restores the natural direction.
            if !flips.remove(&i) {
                flips.insert(i);
            }
        }
        let trace = run(program, seed, rng, &mut Inversions { flips: &flips, visit: 0 })?;
        executions += 1;
        if trace.reached_target {
            keep(&trace.edges, &mut paths)?;
        }
        if pool.len() < 4 * n {
            pool.push((flips, trace.visits.len()));
        }
    }
    if paths.is_empty() {
        return Err(Error::NoPathsFound { attempts });
    }
    Ok((paths, executions))
}

/// Knobs of [`assign_total_order`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderConfig {
    /// Inputs per Monte Carlo batch.
    pub k: usize,
    /// Batches averaged per measurement.
    pub reps: usize,
    /// Relative density change that counts as influence.
    pub tolerance: f64,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig { k: 5, reps: 4, tolerance: 0.1 }
    }
}

/// Learns a byte priority by recursive influence bisection.
///
/// The index set is halved repeatedly. For each half, inputs that resample
/// only those bytes (the rest held at `base`, or at a fresh sample of
/// `region` when there is no base) are run through Monte Carlo execution on
/// every path, and each branch ratio is compared with that of the
/// unperturbed input. Halves that move some ratio by more than the tolerance
/// are bisected further.
///
/// Ratios are compared branch by branch rather than through their minimum:
/// bytes feeding one constraint leave the others fixed, so the minimum
/// rarely moves. Surviving single bytes come first, ordered by the earliest
/// path branch they move and then by how much they raise it; all other
/// bytes follow in ascending order.
pub fn assign_total_order<R: Rng + ?Sized>(
    program: &TargetProgram,
    paths: &[PathDirectives],
    region: &InputRegion,
    base: Option<&ByteInput>,
    config: OrderConfig,
    rng: &mut R,
) -> Result<TotalOrder> {
    assign_total_order_costed(program, paths, region, base, config, rng).map(|(order, _)| order)
}

/// [`assign_total_order`] plus the number of program executions it made.
pub fn assign_total_order_costed<R: Rng + ?Sized>(
    program: &TargetProgram,
    paths: &[PathDirectives],
    region: &InputRegion,
    base: Option<&ByteInput>,
    config: OrderConfig,
    rng: &mut R,
) -> Result<(TotalOrder, u64)> {
    let d = region.dims();
    if config.k == 0 || config.reps == 0 {
        return Err(Error::InvalidParameter("k and reps must be at least 1".into()));
    }
    if d <= 1 || paths.is_empty() {
        return Ok((TotalOrder::lexicographic(d), 0));
    }
    let per_subset = (2 * config.reps * config.k * paths.len()) as u64;
    let mut executions = 0u64;
    let base = base.filter(|b| region.contains(b));

    let mut survivors: Vec<(usize, Influence)> = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![(0..d).collect()];
    while let Some(set) = stack.pop() {
        let (lo, hi) = set.split_at(set.len() / 2);
        for half in [lo, hi] {
            if half.is_empty() {
                continue;
            }
            let (before, after) = measure(program, paths, region, base, half, config, rng)?;
            executions += per_subset;
            let Some(inf) = strongest_change(&before, &after, config.tolerance) else {
                continue;
            };
            if half.len() == 1 {
                survivors.push((half[0], inf));
            } else {
                stack.push(half.to_vec());
            }
        }
    }

    survivors.sort_by(|a, b| {
        a.1.position.cmp(&b.1.position).then(b.1.increase.total_cmp(&a.1.increase)).then(a.0.cmp(&b.0))
    });
    let mut priority: Vec<usize> = survivors.iter().map(|&(j, _)| j).collect();
    let rest: Vec<usize> = (0..d).filter(|j| !priority.contains(j)).collect();
    priority.extend(rest);
    Ok((TotalOrder::new(priority)?, executions))
}

/// How a perturbation moved the branch ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Influence {
    /// Earliest position along a path whose ratio moved.
    position: usize,
    /// Ratio increase at that position.
    increase: f64,
}

fn strongest_change(before: &[Vec<f64>], after: &[Vec<f64>], tolerance: f64) -> Option<Influence> {
    let mut best: Option<Influence> = None;
    for (b, a) in before.iter().zip(after) {
        let Some(position) = b.iter().zip(a).position(|(&b, &a)| changed(b, a, tolerance)) else {
            continue;
        };
        let inf = Influence { position, increase: a[position] - b[position] };
        let better = match best {
            None => true,
            Some(cur) => position < cur.position || (position == cur.position && inf.increase > cur.increase),
        };
        if better {
            best = Some(inf);
        }
    }
    best
}

fn changed(before: f64, after: f64, tolerance: f64) -> bool {
    if before > 0.0 {
        ((after - before) / before).abs() > tolerance
    } else {
        after > 0.0
    }
}

/// Branch ratios per path, in path order.
type PathRatios = Vec<Vec<f64>>;

/// Mean branch ratios, per path and in path order, without and with
/// `subset` resampled.
fn measure<R: Rng + ?Sized>(
    program: &TargetProgram,
    paths: &[PathDirectives],
    region: &InputRegion,
    base: Option<&ByteInput>,
    subset: &[usize],
    config: OrderConfig,
    rng: &mut R,
) -> Result<(PathRatios, PathRatios)> {
    let mut before: PathRatios = paths.iter().map(|p| vec![0.0; p.branches().len()]).collect();
    let mut after = before.clone();
    for _ in 0..config.reps {
        let anchor = match base {
            Some(b) => b.clone(),
            None => region.sample(rng),
        };
        let still = vec![anchor.clone(); config.k];
        let moved: Vec<ByteInput> = (0..config.k)
            .map(|_| {
                let mut bytes = anchor.0.clone();
                for &j in subset {
                    let iv = region.intervals()[j];
                    bytes[j] = rng.gen_range(iv.lo..=iv.hi);
                }
                ByteInput(bytes)
            })
            .collect();
        for (i, path) in paths.iter().enumerate() {
            accumulate(&mut before[i], &monte_carlo_execute(program, path, &still, rng)?);
            accumulate(&mut after[i], &monte_carlo_execute(program, path, &moved, rng)?);
        }
    }
    let reps = config.reps as f64;
    for v in before.iter_mut().chain(after.iter_mut()) {
        v.iter_mut().for_each(|x| *x /= reps);
    }
    Ok((before, after))
}

fn accumulate(sum: &mut [f64], ratios: &RatioVector) {
    for (s, &(_, r)) in sum.iter_mut().zip(&ratios.entries) {
        *s += r;
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn single_branch() -> TargetProgram {
        TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "b0", "target": {"block": "b0", "dir": "true"},
                "blocks": [{"id": "b0", "distance": ["sub", ["input", 0], 77],
                            "predicate": "eq", "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap()
    }

    fn two_branch() -> TargetProgram {
        TargetProgram::from_json(
            r#"{"input_length": 2, "entry": "a", "target": {"block": "b", "dir": "true"},
                "blocks": [
                  {"id": "a", "distance": ["sub", ["input", 0], 10], "predicate": "eq",
                   "true_succ": "b", "false_succ": "c"},
                  {"id": "b", "distance": ["sub", ["input", 1], 20], "predicate": "eq",
                   "true_succ": "exit", "false_succ": "exit"},
                  {"id": "c", "distance": ["input", 1], "predicate": "gt",
                   "true_succ": "b", "false_succ": "exit"}]}"#,
        )
        .unwrap()
    }

    fn last_byte(d: usize) -> TargetProgram {
        TargetProgram::from_json(&format!(
            r#"{{"input_length": {d}, "entry": "b0", "target": {{"block": "b0", "dir": "true"}},
                "blocks": [{{"id": "b0", "distance": ["sub", ["input", {}], 200],
                            "predicate": "eq", "true_succ": "exit", "false_succ": "exit"}}]}}"#,
            d - 1
        ))
        .unwrap()
    }

    #[test]
    fn single_inversion_found() {
        let p = single_branch();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = bootstrap_paths(&p, &ByteInput(vec![3]), 4, &mut rng).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].edges(), &[Edge::new(0, true)]);
    }

    #[test]
    fn natural_seed_path_included() {
        let p = single_branch();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let paths = bootstrap_paths(&p, &ByteInput(vec![77]), 1, &mut rng).unwrap();
        assert_eq!(paths[0].edges(), &[Edge::new(0, true)]);
    }

    #[test]
    fn two_branch_paths_are_exactly_the_target_ones() {
        let p = two_branch();
        // Every direction vector over the three blocks, run by forcing.
        let mut expected: HashSet<Vec<Edge>> = HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mask in 0..8u8 {
            let dirs = [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0];
            let edges: Vec<Edge> = (0..3).map(|b| Edge::new(b, dirs[b])).collect();
            let d = PathDirectives::from_edges_unchecked(edges);
            let t = crate::mc_execution::forced_execute(&p, &d, &ByteInput(vec![0, 0]), &mut rng).unwrap();
            if t.reached_target {
                expected.insert(t.edges);
            }
        }
        assert_eq!(expected.len(), 2);
        let paths = bootstrap_paths(&p, &ByteInput(vec![0, 0]), 8, &mut rng).unwrap();
        let got: HashSet<Vec<Edge>> = paths.iter().map(|p| p.edges().to_vec()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn unreachable_target_reports_attempts() {
        // The target edge leaves a block that no run can reach.
        let p = TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "a", "target": {"block": "b", "dir": "true"},
                "blocks": [
                  {"id": "a", "distance": 0, "predicate": "eq", "true_succ": "exit", "false_succ": "exit"},
                  {"id": "b", "distance": 0, "predicate": "eq", "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let err = bootstrap_paths(&p, &ByteInput(vec![0]), 3, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NoPathsFound { attempts: 48 }));
    }

    #[test]
    fn order_single_dim() {
        let p = single_branch();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let paths = bootstrap_paths(&p, &ByteInput(vec![3]), 1, &mut rng).unwrap();
        let o = assign_total_order(&p, &paths, &InputRegion::full(1), None, OrderConfig::default(), &mut rng).unwrap();
        assert_eq!(o.priority(), &[0]);
    }

    #[test]
    fn order_puts_influential_byte_first() {
        let p = last_byte(4);
        let region = InputRegion::full(4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seed = ByteInput(vec![1, 2, 3, 4]);
        let paths = bootstrap_paths(&p, &seed, 2, &mut rng).unwrap();
        let o = assign_total_order(&p, &paths, &region, Some(&seed), OrderConfig::default(), &mut rng).unwrap();
        assert_eq!(o.priority(), &[3, 0, 1, 2]);

        // Exhaustive check on the lone branch: only byte 3 moves the distance.
        for j in 0..4 {
            let mut distances = HashSet::new();
            for v in 0..=255u8 {
                let mut b = seed.0.clone();
                b[j] = v;
                let t = execute(&p, &ByteInput(b), &mut rng).unwrap();
                distances.insert(t.visits[0].distance);
            }
            assert_eq!(distances.len() > 1, j == 3);
        }
    }

    #[test]
    fn constant_program_gives_lexicographic() {
        let p = TargetProgram::from_json(
            r#"{"input_length": 3, "entry": "a", "target": {"block": "a", "dir": "true"},
                "blocks": [{"id": "a", "distance": 4, "predicate": "gt",
                            "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let paths = bootstrap_paths(&p, &ByteInput(vec![0, 0, 0]), 1, &mut rng).unwrap();
        let o = assign_total_order(&p, &paths, &InputRegion::full(3), None, OrderConfig::default(), &mut rng).unwrap();
        assert_eq!(o.priority(), &[0, 1, 2]);
    }

    #[test]
    fn earlier_constraint_and_high_bytes_come_first() {
        // in0 + 256*in1 == 40000, then in2 + 256*in3 == 12345.
        let p = TargetProgram::from_json(
            r#"{"input_length": 4, "entry": "o", "target": {"block": "i", "dir": "true"},
                "blocks": [
                  {"id": "o", "distance": ["sub", ["add", ["input", 0], ["mul", ["input", 1], 256]], 40000],
                   "predicate": "eq", "true_succ": "i", "false_succ": "exit"},
                  {"id": "i", "distance": ["sub", ["add", ["input", 2], ["mul", ["input", 3], 256]], 12345],
                   "predicate": "eq", "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let seed = ByteInput(vec![135, 122, 233, 134]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let paths = bootstrap_paths(&p, &seed, 4, &mut rng).unwrap();
        let o = assign_total_order(&p, &paths, &InputRegion::full(4), Some(&seed), OrderConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(o.priority(), &[1, 0, 3, 2]);
    }
}
