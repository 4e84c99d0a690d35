//! Property tests for the invariants that hold over whole input families
//! rather than single examples.

use proptest::prelude::*;

use predicator::features::{
    normalize_features, region_slacks, slack_sum, FeatureVector, Region, RegionInstr, FEATURE_COUNT,
};
use predicator::ifconv::{apply_bitmask, module_candidates, same_observable_behavior, Bitmask};
use predicator::ir::{interpret, parse_module, Inputs, MemInit};
use predicator::neat::{activate, init_population, NeatConfig};
use predicator::sim::PredictorState;

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BIN_OPS: [&str; 12] = [
    "add", "sub", "mul", "and", "or", "xor", "shl", "shr", "icmp.eq", "icmp.ne", "icmp.slt",
    "icmp.sgt",
];

/// A random straight-line function over two params: each instruction uses
/// previously defined values or immediates.
fn linear_function(ops: Vec<(usize, u8, u8, i64)>) -> String {
    let mut body = String::new();
    let mut defined = vec!["%p".to_string(), "%q".to_string()];
    for (i, (op, a, b, imm)) in ops.iter().enumerate() {
        let name = format!("%v{i}");
        let pick = |sel: u8| -> String {
            if sel.is_multiple_of(3) {
                imm.to_string()
            } else {
                defined[sel as usize % defined.len()].clone()
            }
        };
        body.push_str(&format!(
            "  {name} = {} {}, {}\n",
            BIN_OPS[op % BIN_OPS.len()],
            pick(*a),
            pick(*b)
        ));
        defined.push(name);
    }
    format!(
        "func @gen(%p, %q) {{\nentry:\n{body}  ret {}\n}}\n",
        defined.last().unwrap()
    )
}

proptest! {
    #[test]
    fn print_parse_round_trip_on_generated_modules(
        ops in proptest::collection::vec((0usize..12, any::<u8>(), any::<u8>(), -100i64..100), 1..12)
    ) {
        let text = linear_function(ops);
        let module = parse_module(&text).unwrap();
        prop_assert!(predicator::ir::validate_module(&module).is_empty());
        let reparsed = parse_module(&module.to_string()).unwrap();
        prop_assert_eq!(module, reparsed);
    }

    #[test]
    fn slack_sum_is_invariant_under_topological_reorder(
        latencies in proptest::collection::vec(0u64..6, 2..10),
        edges in proptest::collection::vec((any::<u16>(), any::<u16>()), 0..20),
        swaps in proptest::collection::vec((any::<u16>(), any::<u16>()), 0..8),
    ) {
        // Build a DAG with edges only from lower to higher indices.
        let n = latencies.len();
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in edges {
            let (a, b) = (a as usize % n, b as usize % n);
            if a < b && !deps[b].contains(&a) {
                deps[b].push(a);
            }
        }
        let region = Region {
            instrs: (0..n)
                .map(|i| RegionInstr {
                    result: Some(format!("v{i}")),
                    mnemonic: "add",
                    latency: latencies[i],
                    deps: deps[i].clone(),
                })
                .collect(),
        };
        let baseline = slack_sum(&region);

        // Swap adjacent independent instructions: still topologically sorted.
        let mut order: Vec<usize> = (0..n).collect();
        for (raw_i, _) in swaps {
            let i = raw_i as usize % (n - 1);
            let (x, y) = (order[i], order[i + 1]);
            let y_deps_on_x = region.instrs[y].deps.contains(&x);
            if !y_deps_on_x {
                order.swap(i, i + 1);
            }
        }
        let position: std::collections::HashMap<usize, usize> =
            order.iter().enumerate().map(|(pos, &old)| (old, pos)).collect();
        let reordered = Region {
            instrs: order
                .iter()
                .map(|&old| {
                    let mut instr = region.instrs[old].clone();
                    instr.deps = instr.deps.iter().map(|d| position[d]).collect();
                    instr
                })
                .collect(),
        };
        prop_assert_eq!(slack_sum(&reordered), baseline);
        // And slacks are always well defined (ALAP >= ASAP).
        prop_assert!(region_slacks(&region).iter().all(|&s| s < u64::MAX));
    }

    #[test]
    fn normalization_is_idempotent_on_unit_spanning_sets(
        rows in proptest::collection::vec(
            proptest::collection::vec(0i64..=100, FEATURE_COUNT), 2..6)
    ) {
        // Force each feature to span exactly [0,1]: first row all zeros,
        // second all ones, the rest scaled into the middle.
        let mut vectors = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            let values: Vec<Ratio<i64>> = row
                .iter()
                .map(|&v| match r {
                    0 => Ratio::from_integer(0),
                    1 => Ratio::from_integer(1),
                    _ => Ratio::new(v, 100),
                })
                .collect();
            vectors.push(FeatureVector {
                bb_size: values[0],
                true_cp: values[1],
                false_cp: values[2],
                min_cp: values[3],
                unexploited_ilp: values[4],
                branch_depth: values[5],
                loop_depth: values[6],
                slack_sum: values[7],
                max_depth: values[8],
                true_bb_depth: values[9],
                false_bb_depth: values[10],
            });
        }
        let normalized = normalize_features(&vectors).unwrap();
        for (nv, fv) in normalized.iter().zip(&vectors) {
            for (out, orig) in nv.0.iter().zip(fv.as_array()) {
                let orig_f = *orig.numer() as f64 / *orig.denom() as f64;
                prop_assert!((out - orig_f).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(out));
            }
        }
    }

    #[test]
    fn activation_is_monotone_in_any_single_weight(
        seed in any::<u64>(),
        which in 0usize..12,
        bump in 0.01f64..2.0,
        inputs in proptest::collection::vec(0.0f64..=1.0, 11),
    ) {
        // On the initial topology all sources feed the output directly with
        // non-negative activations, so raising any weight cannot lower the
        // output.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = init_population(&NeatConfig { population: 2, ..NeatConfig::default() }, 11, 1, &mut rng);
        let mut genome = pop.genomes[0].clone();
        let before = activate(&genome, &inputs);
        genome.conns[which].weight += bump;
        let after = activate(&genome, &inputs);
        prop_assert!(after >= before - 1e-12, "raising a weight lowered {before} to {after}");
    }

    #[test]
    fn predictor_counters_stay_saturated(outcomes in proptest::collection::vec(any::<bool>(), 0..64)) {
        let mut p = PredictorState::new();
        for o in outcomes {
            p.predict_and_update(3, o);
            prop_assert!(p.counter(3) <= 3);
        }
    }

    #[test]
    fn random_masks_preserve_abs_behavior(xs in proptest::collection::vec(any::<i64>(), 1..8), bit in any::<bool>()) {
        let (ir, _) = predicator::kernels::kernel("abs").unwrap();
        let module = parse_module(ir).unwrap();
        let n = module_candidates(&module).unwrap().len();
        let mask = Bitmask { bits: vec![bit; n] };
        let (converted, _) = apply_bitmask(&module, &mask).unwrap();
        for x in xs {
            let inputs = Inputs::default().with_param("x", x);
            let a = interpret(&module, "abs", &inputs);
            let b = interpret(&converted, "abs", &inputs);
            prop_assert!(same_observable_behavior(&a, &b), "x={x} bit={bit}");
        }
    }

    #[test]
    fn random_masks_preserve_clampsum_behavior(
        n in 0i64..70,
        mem_seed in any::<u64>(),
        bit in any::<bool>(),
    ) {
        let (ir, _) = predicator::kernels::kernel("clampsum").unwrap();
        let module = parse_module(ir).unwrap();
        let mask = Bitmask { bits: vec![bit; 1] };
        let (converted, _) = apply_bitmask(&module, &mask).unwrap();
        let inputs = Inputs::default()
            .with_param("n", n)
            .with_mem("a", MemInit::Uniform { seed: mem_seed, lo: -300, hi: 300, len: 64 });
        let a = interpret(&module, "clampsum", &inputs);
        let b = interpret(&converted, "clampsum", &inputs);
        prop_assert!(same_observable_behavior(&a, &b));
    }
}
