//! Reference interpreter.

use rand::Rng;

use super::expr::Bindings;
use super::{Edge, Successor, TargetProgram};
use crate::error::{Error, Result};
use crate::input_space::ByteInput;

/// One evaluation of a branch block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchVisit {
    pub block: usize,
    pub distance: i64,
    /// Whether the block's predicate held, i.e. natural execution goes true.
    pub satisfied: bool,
    /// Whether the direction taken differs from the natural one.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecutionTrace {
    pub edges: Vec<Edge>,
    pub visits: Vec<BranchVisit>,
    pub reached_target: bool,
    pub fault_count: u32,
    pub steps: u64,
    pub truncated: bool,
}

impl ExecutionTrace {
    pub fn any_forced(&self) -> bool {
        self.visits.iter().any(|v| v.forced)
    }
}

/// Chooses the direction taken at each branch visit.
pub trait Steering {
    fn direct(&mut self, block: usize, natural: bool) -> bool;
}

/// Always follows the predicate.
pub struct NaturalSteering;

impl Steering for NaturalSteering {
    fn direct(&mut self, _block: usize, natural: bool) -> bool {
        natural
    }
}

/// Runs `program` on `input` under `steering`.
///
/// Execution stops at the exit, right after the target edge is taken, or
/// once `max_steps` branch visits have happened. A load whose address falls
/// outside its bound binds a uniformly random 64-bit value instead.
pub fn run<R: Rng + ?Sized>(
    program: &TargetProgram,
    input: &ByteInput,
    rng: &mut R,
    steering: &mut dyn Steering,
) -> Result<ExecutionTrace> {
    if input.len() != program.input_length() {
        return Err(Error::InputLengthMismatch { expected: program.input_length(), got: input.len() });
    }
    let bytes = input.bytes();
    let target = program.target();
    let mut trace = ExecutionTrace::default();
    let mut bindings = Bindings::new();
    let mut current = Successor::Block(program.entry());

    while let Successor::Block(idx) = current {
        if trace.steps >= program.max_steps() {
            trace.truncated = true;
            break;
        }
        trace.steps += 1;
        let block = program.block(idx);
        bindings.clear();
        for load in &block.loads {
            let addr = load.addr.eval(bytes, &bindings)?;
            let value = match load.read(addr) {
                Some(v) => v,
                None => {
                    trace.fault_count += 1;
                    rng.gen::<i64>()
                }
            };
            bindings.bind(&load.var, value);
        }
        let distance = block.distance.eval(bytes, &bindings)?;
        let satisfied = block.predicate.holds(distance);
        let dir = steering.direct(idx, satisfied);
        trace.visits.push(BranchVisit { block: idx, distance, satisfied, forced: dir != satisfied });
        let edge = Edge::new(idx, dir);
        trace.edges.push(edge);
        if edge == target {
            trace.reached_target = true;
            break;
        }
        current = block.successor(dir);
    }
    Ok(trace)
}

/// Natural execution.
pub fn execute<R: Rng + ?Sized>(program: &TargetProgram, input: &ByteInput, rng: &mut R) -> Result<ExecutionTrace> {
    run(program, input, rng, &mut NaturalSteering)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input_space::InputRegion;
    use crate::target_model::{Expr, Predicate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(pred: &str, distance: &str) -> TargetProgram {
        TargetProgram::from_json(&format!(
            r#"{{"input_length": 1, "entry": "b", "target": {{"block": "b", "dir": "true"}},
                "blocks": [{{"id": "b", "distance": {distance}, "predicate": "{pred}",
                             "true_succ": "exit", "false_succ": "exit"}}]}}"#
        ))
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn single_branch_hit_and_miss() {
        let p = single("eq", r#"["sub", ["input", 0], 100]"#);
        let t = execute(&p, &ByteInput(vec![100]), &mut rng()).unwrap();
        assert_eq!(t.edges, vec![Edge::new(0, true)]);
        assert_eq!(t.visits[0].distance, 0);
        assert!(t.visits[0].satisfied && !t.visits[0].forced);
        assert!(t.reached_target);

        let t = execute(&p, &ByteInput(vec![7]), &mut rng()).unwrap();
        assert_eq!(t.edges, vec![Edge::new(0, false)]);
        assert_eq!(t.visits[0].distance, -93);
        assert!(!t.reached_target);
    }

    #[test]
    fn exhaustive_quadratic_target_set() {
        // input^2 - 40*input + 300 <= 0  <=>  (x-10)(x-30) <= 0  <=>  10 <= x <= 30
        let p =
            single("le", r#"["add", ["sub", ["mul", ["input", 0], ["input", 0]], ["mul", 40, ["input", 0]]], 300]"#);
        let hits: Vec<u8> = InputRegion::full(1)
            .enumerate()
            .filter(|i| execute(&p, i, &mut rng()).unwrap().reached_target)
            .map(|i| i.0[0])
            .collect();
        assert_eq!(hits, (10..=30).collect::<Vec<u8>>());
    }

    #[test]
    fn input_length_checked() {
        let p = single("eq", "0");
        assert!(matches!(
            execute(&p, &ByteInput(vec![1, 2]), &mut rng()),
            Err(Error::InputLengthMismatch { expected: 1, got: 2 })
        ));
    }

    fn looping(max_steps: u64) -> TargetProgram {
        TargetProgram::from_json(&format!(
            r#"{{"input_length": 1, "entry": "spin", "max_steps": {max_steps},
                "target": {{"block": "spin", "dir": "false"}},
                "blocks": [{{"id": "spin", "distance": ["input", 0], "predicate": "ge",
                             "true_succ": "spin", "false_succ": "exit"}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn step_budget_truncates() {
        let p = looping(50);
        let t = execute(&p, &ByteInput(vec![3]), &mut rng()).unwrap();
        assert!(t.truncated);
        assert_eq!(t.steps, 50);
        assert_eq!(t.visits.len(), 50);
        assert!(!t.reached_target);
    }

    #[test]
    fn faulting_load_binds_random_value() {
        let p = TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "b", "target": {"block": "b", "dir": "true"},
                "blocks": [{"id": "b", "loads": [{"var": "v", "addr": ["input", 0], "bound": 4}],
                            "distance": ["var", "v"], "predicate": "ge",
                            "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let ok = execute(&p, &ByteInput(vec![3]), &mut rng()).unwrap();
        assert_eq!(ok.fault_count, 0);
        assert_eq!(ok.visits[0].distance, 3);

        let a = execute(&p, &ByteInput(vec![200]), &mut rng()).unwrap();
        let b = execute(&p, &ByteInput(vec![200]), &mut rng()).unwrap();
        assert_eq!(a.fault_count, 1);
        assert_eq!(a, b, "same rng seed, same trace");
        let c = execute(&p, &ByteInput(vec![200]), &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_ne!(a.visits[0].distance, c.visits[0].distance);
    }

    #[test]
    fn table_load() {
        let p = TargetProgram::from_json(
            r#"{"input_length": 1, "entry": "b", "target": {"block": "b", "dir": "true"},
                "blocks": [{"id": "b", "loads": [{"var": "v", "addr": ["input", 0], "bound": 3, "table": [7, -2, 40]}],
                            "distance": ["var", "v"], "predicate": "lt",
                            "true_succ": "exit", "false_succ": "exit"}]}"#,
        )
        .unwrap();
        let t = execute(&p, &ByteInput(vec![1]), &mut rng()).unwrap();
        assert_eq!(t.visits[0].distance, -2);
        assert!(t.reached_target);
    }

    #[test]
    fn sign_law_on_random_expressions() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a: i64 = r.gen_range(-5..=5);
            let c: i64 = r.gen_range(-600..=600);
            let e = Expr::add(Expr::mul(Expr::Const(a), Expr::input(0)), Expr::Const(c));
            let dist = serde_json::to_string(&e).unwrap();
            for pred in Predicate::ALL {
                let name = serde_json::to_value(pred).unwrap();
                let p = single(name.as_str().unwrap(), &dist);
                for x in 0..=255u8 {
                    let t = execute(&p, &ByteInput(vec![x]), &mut rng()).unwrap();
                    let d = a * i64::from(x) + c;
                    assert_eq!(t.visits[0].distance, d);
                    let expect = match pred {
                        Predicate::Eq => d == 0,
                        Predicate::Ne => d != 0,
                        Predicate::Lt => d < 0,
                        Predicate::Le => d <= 0,
                        Predicate::Gt => d > 0,
                        Predicate::Ge => d >= 0,
                    };
                    assert_eq!(t.visits[0].satisfied, expect);
                }
            }
        }
    }
}
