//! Randomized whole-pipeline stress test: generate modules full of
//! triangles, diamonds and side effects, then check that every bitmask
//! application preserves observable behavior and validity.

use proptest::prelude::*;

use predicator::ifconv::{apply_bitmask, module_candidates, same_observable_behavior, Bitmask};
use predicator::ir::{interpret, parse_module, validate_module, Inputs, MemInit};

/// Instruction recipe for one generated segment.
#[derive(Debug, Clone)]
enum Segment {
    /// Straight-line arithmetic over the value pool.
    Compute(Vec<(u8, u8, u8)>),
    /// Triangle: a guarded side computing speculatable ops; the guarded side
    /// may hang off either branch edge. An injected store makes it illegal.
    Triangle {
        flip: bool,
        side_ops: Vec<(u8, u8, u8)>,
        store_in_side: bool,
    },
    /// Diamond with independent side computations and 1..2 join phis.
    Diamond {
        true_ops: Vec<(u8, u8, u8)>,
        false_ops: Vec<(u8, u8, u8)>,
        two_phis: bool,
    },
    /// A masked (always in-bounds) load plus a store, in straight line.
    Memory(u8, u8),
    /// A division by a pool value: traps whenever the divisor is zero.
    Divide(u8, u8),
}

fn segment_strategy() -> impl Strategy<Value = Segment> {
    let ops = proptest::collection::vec((any::<u8>(), any::<u8>(), any::<u8>()), 1..3);
    prop_oneof![
        ops.clone().prop_map(Segment::Compute),
        (any::<bool>(), ops.clone(), proptest::bool::weighted(0.25)).prop_map(
            |(flip, side_ops, store_in_side)| Segment::Triangle {
                flip,
                side_ops,
                store_in_side
            }
        ),
        (ops.clone(), ops, any::<bool>()).prop_map(|(true_ops, false_ops, two_phis)| {
            Segment::Diamond {
                true_ops,
                false_ops,
                two_phis,
            }
        }),
        (any::<u8>(), any::<u8>()).prop_map(|(a, b)| Segment::Memory(a, b)),
        (any::<u8>(), any::<u8>()).prop_map(|(a, b)| Segment::Divide(a, b)),
    ]
}

const SAFE_OPS: [&str; 8] = ["add", "sub", "mul", "and", "or", "xor", "shl", "icmp.slt"];

struct Builder {
    text: String,
    pool: Vec<String>,
    next_value: usize,
    next_block: usize,
    current_block: String,
}

impl Builder {
    fn fresh(&mut self) -> String {
        self.next_value += 1;
        format!("%v{}", self.next_value)
    }

    fn label(&mut self, tag: &str) -> String {
        self.next_block += 1;
        format!("{tag}{}", self.next_block)
    }

    fn pick(&self, sel: u8) -> String {
        self.pool[sel as usize % self.pool.len()].clone()
    }

    /// Pick among the first `limit` pool values only; used where the choice
    /// must dominate a whole branch region.
    fn pick_early(&self, sel: u8, limit: usize) -> String {
        self.pool[sel as usize % limit].clone()
    }

    fn emit_op(&mut self, (op, a, b): (u8, u8, u8)) -> String {
        let name = self.fresh();
        let mnemonic = SAFE_OPS[op as usize % SAFE_OPS.len()];
        let lhs = self.pick(a);
        let rhs = self.pick(b);
        self.text
            .push_str(&format!("  {name} = {mnemonic} {lhs}, {rhs}\n"));
        name
    }

    fn open_block(&mut self, label: &str) {
        self.text.push_str(&format!("{label}:\n"));
        self.current_block = label.to_string();
    }

    fn emit_segment(&mut self, segment: &Segment) {
        match segment {
            Segment::Compute(ops) => {
                for &op in ops {
                    let name = self.emit_op(op);
                    self.pool.push(name);
                }
            }
            Segment::Triangle {
                flip,
                side_ops,
                store_in_side,
            } => {
                let cond = self.emit_op((7, 0, 1));
                let head = self.current_block.clone();
                let side = self.label("side");
                let join = self.label("join");
                let (then_l, else_l) = if *flip {
                    (join.clone(), side.clone())
                } else {
                    (side.clone(), join.clone())
                };
                self.text
                    .push_str(&format!("  br {cond}, {then_l}, {else_l}\n"));
                self.open_block(&side);
                let mut produced = self.pick(2);
                for &op in side_ops {
                    produced = self.emit_op(op);
                }
                if *store_in_side {
                    let v = self.pick(3);
                    self.text.push_str(&format!("  store @m, 2, {v}\n"));
                }
                self.text.push_str(&format!("  jmp {join}\n"));
                self.open_block(&join);
                let merged = self.fresh();
                let pass = self.pick(1);
                self.text.push_str(&format!(
                    "  {merged} = phi [{side}: {produced}], [{head}: {pass}]\n"
                ));
                self.pool.push(merged);
            }
            Segment::Diamond {
                true_ops,
                false_ops,
                two_phis,
            } => {
                let pre_branch = self.pool.len();
                let cond = self.emit_op((7, 1, 2));
                let t = self.label("t");
                let f = self.label("f");
                let join = self.label("join");
                self.text.push_str(&format!("  br {cond}, {t}, {f}\n"));
                self.open_block(&t);
                let mut tv = self.pick(0);
                for &op in true_ops {
                    tv = self.emit_op(op);
                }
                self.text.push_str(&format!("  jmp {join}\n"));
                self.open_block(&f);
                let mut fv = self.pick(1);
                for &op in false_ops {
                    fv = self.emit_op(op);
                }
                self.text.push_str(&format!("  jmp {join}\n"));
                self.open_block(&join);
                let merged = self.fresh();
                self.text
                    .push_str(&format!("  {merged} = phi [{t}: {tv}], [{f}: {fv}]\n"));
                self.pool.push(merged);
                if *two_phis {
                    // Values defined before the branch are valid from both
                    // arms, so a second phi over them still validates.
                    let merged2 = self.fresh();
                    let (a, b) = (
                        self.pick_early(4, pre_branch),
                        self.pick_early(5, pre_branch),
                    );
                    self.text
                        .push_str(&format!("  {merged2} = phi [{t}: {a}], [{f}: {b}]\n"));
                    self.pool.push(merged2);
                }
            }
            Segment::Memory(a, b) => {
                let idx = self.fresh();
                let src = self.pick(*a);
                self.text.push_str(&format!("  {idx} = and {src}, 15\n"));
                let loaded = self.fresh();
                self.text
                    .push_str(&format!("  {loaded} = load @m, {idx}\n"));
                let val = self.pick(*b);
                self.text.push_str(&format!("  store @m, {idx}, {val}\n"));
                self.pool.push(loaded);
            }
            Segment::Divide(a, b) => {
                let q = self.fresh();
                let num = self.pick(*a);
                let den = self.pick(*b);
                self.text.push_str(&format!("  {q} = div {num}, {den}\n"));
                self.pool.push(q);
            }
        }
    }
}

fn build_module(segments: &[Segment]) -> String {
    let mut b = Builder {
        text: String::new(),
        pool: vec!["%p".into(), "%q".into(), "%r".into()],
        next_value: 0,
        next_block: 0,
        current_block: "b0".into(),
    };
    b.text
        .push_str("mem @m[16]\nfunc @gen(%p, %q, %r) {\nb0:\n");
    for segment in segments {
        b.emit_segment(segment);
    }
    let last = b.pool.last().unwrap().clone();
    b.text.push_str(&format!("  ret {last}\n}}\n"));
    b.text
}

/// A phi value defined inside a side block must not leak past a store-borne
/// illegal candidate, but everything the builder emits threads through phis,
/// so the pool stays dominating by construction.
fn masked(value: u64, n: usize) -> Bitmask {
    if n == 0 {
        Bitmask { bits: vec![] }
    } else {
        Bitmask::from_value(value & ((1u64 << n) - 1), n)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn generated_modules_convert_safely(
        segments in proptest::collection::vec(segment_strategy(), 1..8),
        params in proptest::collection::vec(-40i64..40, 3),
        masks in proptest::collection::vec(any::<u64>(), 3),
        mem_seed in any::<u64>(),
    ) {
        let text = build_module(&segments);
        let module = parse_module(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        let diags = validate_module(&module);
        prop_assert!(diags.is_empty(), "{diags:?}\n{text}");

        let candidates = module_candidates(&module).unwrap();
        prop_assert!(candidates.len() <= segments.len());

        let inputs = Inputs::default()
            .with_param("p", params[0])
            .with_param("q", params[1])
            .with_param("r", params[2])
            .with_mem("m", MemInit::Uniform { seed: mem_seed, lo: -20, hi: 20, len: 16 });
        let original = interpret(&module, "gen", &inputs);

        for &mask_bits in &masks {
            let mask = masked(mask_bits, candidates.len());
            let (converted, report) = apply_bitmask(&module, &mask).unwrap();
            prop_assert!(
                validate_module(&converted).is_empty(),
                "mask {mask} broke validity\n{converted}"
            );
            prop_assert!(report.converted <= mask.popcount());
            let through = interpret(&converted, "gen", &inputs);
            prop_assert!(
                same_observable_behavior(&original, &through),
                "mask {mask} diverged\n{text}\n-- converted --\n{converted}"
            );
        }
    }
}
