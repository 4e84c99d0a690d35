//! Genome-level operations: feed-forward activation, compatibility distance
//! and text (de)serialization.

use std::collections::{BTreeMap, BTreeSet};

use super::{ConnGene, Genome, NeatConfig, NodeGene, NodeRole};

/// The steepened sigmoid used by every non-input node.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-4.9 * x).exp())
}

/// Feed-forward evaluation. Inputs are assigned in node-id order, the bias
/// node reads 1.0, and every other node applies the sigmoid to its weighted
/// enabled in-edges (so a node with none outputs 0.5). Returns the output
/// node's activation.
pub fn activate(genome: &Genome, inputs: &[f64]) -> f64 {
    let input_ids = genome.input_ids();
    assert_eq!(
        input_ids.len(),
        inputs.len(),
        "genome expects {} inputs, got {}",
        input_ids.len(),
        inputs.len()
    );

    let mut values: BTreeMap<u32, f64> = BTreeMap::new();
    for (id, &x) in input_ids.iter().zip(inputs) {
        values.insert(*id, x);
    }
    for node in &genome.nodes {
        if node.role == NodeRole::Bias {
            values.insert(node.id, 1.0);
        }
    }

    // Kahn's algorithm over enabled edges; ties broken by node id so the
    // evaluation (and thus every f64 rounding) is deterministic.
    let mut indegree: BTreeMap<u32, usize> = genome.nodes.iter().map(|n| (n.id, 0)).collect();
    for conn in genome.conns.iter().filter(|c| c.enabled) {
        *indegree.get_mut(&conn.to).expect("endpoint exists") += 1;
    }
    let mut ready: BTreeSet<u32> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(genome.nodes.len());
    while let Some(&id) = ready.iter().next() {
        ready.remove(&id);
        order.push(id);
        for conn in genome.conns.iter().filter(|c| c.enabled && c.from == id) {
            let d = indegree.get_mut(&conn.to).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(conn.to);
            }
        }
    }
    debug_assert_eq!(
        order.len(),
        genome.nodes.len(),
        "activation graph has a cycle"
    );

    let roles: BTreeMap<u32, NodeRole> = genome.nodes.iter().map(|n| (n.id, n.role)).collect();
    for id in order {
        match roles[&id] {
            NodeRole::Input | NodeRole::Bias => continue,
            NodeRole::Hidden | NodeRole::Output => {
                // In-edges in innovation order: a fixed summation order.
                let mut sum = 0.0;
                for conn in genome.conns.iter().filter(|c| c.enabled && c.to == id) {
                    sum += conn.weight * values.get(&conn.from).copied().unwrap_or(0.5);
                }
                values.insert(id, sigmoid(sum));
            }
        }
    }

    values[&genome.output_id()]
}

/// delta = (c1*E + c2*D)/N + c3*Wbar over the two genomes' connection genes,
/// aligned by innovation number. N is 1 for small genomes, otherwise the
/// larger gene count.
pub fn compatibility_distance(a: &Genome, b: &Genome, cfg: &NeatConfig) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let mut matching = 0usize;
    let mut weight_diff = 0.0f64;
    let mut disjoint = 0usize;
    let max_a = a.conns.last().map(|c| c.innovation).unwrap_or(0);
    let max_b = b.conns.last().map(|c| c.innovation).unwrap_or(0);
    let mut excess = 0usize;

    while i < a.conns.len() || j < b.conns.len() {
        match (a.conns.get(i), b.conns.get(j)) {
            (Some(ca), Some(cb)) if ca.innovation == cb.innovation => {
                matching += 1;
                weight_diff += (ca.weight - cb.weight).abs();
                i += 1;
                j += 1;
            }
            (Some(ca), Some(cb)) if ca.innovation < cb.innovation => {
                if ca.innovation > max_b {
                    excess += 1
                } else {
                    disjoint += 1
                }
                i += 1;
            }
            (Some(_), Some(cb)) => {
                if cb.innovation > max_a {
                    excess += 1
                } else {
                    disjoint += 1
                }
                j += 1;
            }
            (Some(ca), None) => {
                if ca.innovation > max_b {
                    excess += 1
                } else {
                    disjoint += 1
                }
                i += 1;
            }
            (None, Some(cb)) => {
                if cb.innovation > max_a {
                    excess += 1
                } else {
                    disjoint += 1
                }
                j += 1;
            }
            (None, None) => break,
        }
    }

    let larger = a.conns.len().max(b.conns.len());
    let n = if a.conns.len() < cfg.small_genome_limit && b.conns.len() < cfg.small_genome_limit {
        1.0
    } else {
        larger.max(1) as f64
    };
    let wbar = if matching > 0 {
        weight_diff / matching as f64
    } else {
        0.0
    };
    (cfg.c1 * excess as f64 + cfg.c2 * disjoint as f64) / n + cfg.c3 * wbar
}

/// Parse the line-oriented genome text form produced by `Genome::to_text`.
pub fn parse_genome(text: &str) -> Result<Genome, String> {
    let mut genome = Genome::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| format!("line {}: {msg}", lineno + 1);
        match fields.first() {
            Some(&"node") => {
                if fields.len() != 3 {
                    return Err(err("expected 'node <id> <role>'".to_string()));
                }
                let id: u32 = fields[1]
                    .parse()
                    .map_err(|_| err(format!("bad id '{}'", fields[1])))?;
                let role = NodeRole::from_name(fields[2])
                    .ok_or_else(|| err(format!("unknown role '{}'", fields[2])))?;
                genome.nodes.push(NodeGene { id, role });
            }
            Some(&"conn") => {
                if fields.len() != 6 {
                    return Err(err(
                        "expected 'conn <innov> <from> <to> <weight> <enabled>'".to_string(),
                    ));
                }
                let innovation: u32 = fields[1]
                    .parse()
                    .map_err(|_| err(format!("bad innovation '{}'", fields[1])))?;
                let from: u32 = fields[2]
                    .parse()
                    .map_err(|_| err(format!("bad node '{}'", fields[2])))?;
                let to: u32 = fields[3]
                    .parse()
                    .map_err(|_| err(format!("bad node '{}'", fields[3])))?;
                let weight: f64 = fields[4]
                    .parse()
                    .map_err(|_| err(format!("bad weight '{}'", fields[4])))?;
                let enabled = match fields[5] {
                    "1" => true,
                    "0" => false,
                    other => return Err(err(format!("bad enabled flag '{other}'"))),
                };
                genome.conns.push(ConnGene {
                    innovation,
                    from,
                    to,
                    weight,
                    enabled,
                });
            }
            _ => return Err(err(format!("unknown genome line '{line}'"))),
        }
    }
    genome.nodes.sort_by_key(|n| n.id);
    genome.conns.sort_by_key(|c| c.innovation);
    Ok(genome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neat::init_population;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_genome(weights: &[f64]) -> Genome {
        // 2 inputs (0,1), bias 2, output 3; conns 1..=3 in that order.
        let mut g = Genome::default();
        for (id, role) in [
            (0, NodeRole::Input),
            (1, NodeRole::Input),
            (2, NodeRole::Bias),
            (3, NodeRole::Output),
        ] {
            g.nodes.push(NodeGene { id, role });
        }
        for (k, &w) in weights.iter().enumerate() {
            g.conns.push(ConnGene {
                innovation: k as u32 + 1,
                from: k as u32,
                to: 3,
                weight: w,
                enabled: true,
            });
        }
        g
    }

    #[test]
    fn zero_weights_activate_to_one_half() {
        let g = tiny_genome(&[0.0, 0.0, 0.0]);
        assert_eq!(activate(&g, &[0.3, 0.9]), 0.5);
    }

    #[test]
    fn bias_only_network_is_sigmoid_of_weight() {
        let mut g = tiny_genome(&[0.0, 0.0, 0.0]);
        g.conns.retain(|c| c.from == 2);
        g.conns[0].weight = 0.7;
        let out = activate(&g, &[0.1, 0.2]);
        assert_eq!(out, sigmoid(0.7));
        g.conns[0].weight = 50.0;
        assert!(activate(&g, &[0.0, 0.0]) > 0.999_999);
    }

    #[test]
    fn initial_genome_with_zero_inputs_sums_only_bias() {
        let g = tiny_genome(&[0.4, -0.3, 0.25]);
        assert_eq!(activate(&g, &[0.0, 0.0]), sigmoid(0.25));
    }

    #[test]
    fn hand_computed_two_layer_activation() {
        let mut g = tiny_genome(&[1.0, -1.0, 0.5]);
        // Add hidden node 4 between input 0 and output.
        g.push_node(NodeGene {
            id: 4,
            role: NodeRole::Hidden,
        });
        g.conns[0].enabled = false; // 0 -> 3 off
        g.push_conn(ConnGene {
            innovation: 4,
            from: 0,
            to: 4,
            weight: 2.0,
            enabled: true,
        });
        g.push_conn(ConnGene {
            innovation: 5,
            from: 4,
            to: 3,
            weight: 1.5,
            enabled: true,
        });
        let x = [0.5, 1.0];
        let hidden = sigmoid(2.0 * x[0]);
        // Output sums: input1 via weight -1, bias via 0.5, hidden via 1.5.
        let expected = sigmoid(-x[1] + 0.5 + 1.5 * hidden);
        assert_eq!(activate(&g, &x), expected);
    }

    #[test]
    fn identical_genomes_have_zero_distance() {
        let g = tiny_genome(&[0.4, -0.3, 0.25]);
        assert_eq!(compatibility_distance(&g, &g, &NeatConfig::default()), 0.0);
    }

    #[test]
    fn excess_and_disjoint_follow_the_formula() {
        // g1 innovations {1,2,3}, g2 {1,2,4,5}: D=1 (gene 3), E=2 (4,5), N=1.
        let cfg = NeatConfig::default();
        let mut g1 = tiny_genome(&[0.1, 0.2, 0.3]);
        let mut g2 = tiny_genome(&[0.1, 0.2, 0.3]);
        g2.conns.remove(2);
        g2.push_conn(ConnGene {
            innovation: 4,
            from: 1,
            to: 3,
            weight: 0.0,
            enabled: true,
        });
        g2.push_conn(ConnGene {
            innovation: 5,
            from: 2,
            to: 3,
            weight: 0.0,
            enabled: true,
        });
        let d = compatibility_distance(&g1, &g2, &cfg);
        assert!((d - 3.0).abs() < 1e-12, "delta = {d}");
        // Symmetric.
        assert_eq!(d, compatibility_distance(&g2, &g1, &cfg));
        g1.fitness = Some(1.0); // irrelevant to distance
        assert_eq!(d, compatibility_distance(&g1, &g2, &cfg));
    }

    #[test]
    fn mean_weight_gap_scales_by_c3() {
        let g1 = tiny_genome(&[0.0, 0.0, 0.0]);
        let g2 = tiny_genome(&[1.0, 1.0, 1.0]);
        let d = compatibility_distance(&g1, &g2, &NeatConfig::default());
        assert!((d - 0.4).abs() < 1e-12, "delta = {d}");
    }

    #[test]
    fn genome_text_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pop = init_population(&NeatConfig::default(), 11, 1, &mut rng);
        let g = &pop.genomes[0];
        let reparsed = parse_genome(&g.to_text()).unwrap();
        assert_eq!(g.nodes, reparsed.nodes);
        assert_eq!(g.conns, reparsed.conns);
    }
}
