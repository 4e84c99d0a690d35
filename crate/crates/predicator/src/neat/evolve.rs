//! Population-level NEAT: minimal initial topologies, speciation with
//! carried-over representatives, fitness sharing, elitism, stagnation
//! culling and the structural mutations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::genome::compatibility_distance;
use super::{
    ConnGene, Genome, InnovationTable, NeatConfig, NodeGene, NodeRole, Population, Species,
    SpeciesSet,
};

/// Fraction of each species (by fitness rank) eligible as parents.
const SURVIVAL_FRACTION: f64 = 0.5;

/// Build the minimal uniform initial population: `inputs` input nodes, one
/// bias, `outputs` output nodes, no hidden nodes, and every input/bias wired
/// straight to every output. All genomes share one topology (innovations
/// 1..=(inputs+1)*outputs); only the weights differ.
pub fn init_population(
    cfg: &NeatConfig,
    inputs: usize,
    outputs: usize,
    rng: &mut ChaCha8Rng,
) -> Population {
    let bias_id = inputs as u32;
    let first_output = bias_id + 1;
    let mut innovations = InnovationTable::new(1, first_output + outputs as u32);

    let mut template = Genome::default();
    for i in 0..inputs as u32 {
        template.nodes.push(NodeGene {
            id: i,
            role: NodeRole::Input,
        });
    }
    template.nodes.push(NodeGene {
        id: bias_id,
        role: NodeRole::Bias,
    });
    for o in 0..outputs as u32 {
        template.nodes.push(NodeGene {
            id: first_output + o,
            role: NodeRole::Output,
        });
    }
    let mut wiring = Vec::new();
    for from in 0..=bias_id {
        for o in 0..outputs as u32 {
            let to = first_output + o;
            wiring.push((innovations.register_initial(from, to), from, to));
        }
    }
    wiring.sort_unstable();
    for (innovation, from, to) in wiring {
        template.conns.push(ConnGene {
            innovation,
            from,
            to,
            weight: 0.0,
            enabled: true,
        });
    }

    let mut genomes = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        let mut g = template.clone();
        for conn in &mut g.conns {
            conn.weight = rng.random_range(-1.0..=1.0);
        }
        genomes.push(g);
    }

    Population {
        generation: 0,
        genomes,
        innovations,
    }
}

/// Assign every genome to the first species whose representative lies within
/// the compatibility threshold, founding new species as needed.
/// Representatives from `prev` are the carried-over classification anchors;
/// after assignment each surviving species re-anchors on its first member.
pub fn speciate(pop: &Population, prev: Option<&SpeciesSet>, cfg: &NeatConfig) -> SpeciesSet {
    let mut set = SpeciesSet::default();
    if let Some(prev) = prev {
        set.next_id = prev.next_id;
        set.best_ever = prev.best_ever;
        for s in &prev.species {
            set.species.push(Species {
                id: s.id,
                representative: s.representative.clone(),
                members: Vec::new(),
                best_fitness: s.best_fitness,
                last_improved: s.last_improved,
            });
        }
    }

    for (idx, genome) in pop.genomes.iter().enumerate() {
        let found = set.species.iter().position(|s| {
            compatibility_distance(genome, &s.representative, cfg) < cfg.compat_threshold
        });
        match found {
            Some(si) => set.species[si].members.push(idx),
            None => {
                let id = set.next_id;
                set.next_id += 1;
                set.species.push(Species {
                    id,
                    representative: genome.clone(),
                    members: vec![idx],
                    best_fitness: f64::NEG_INFINITY,
                    last_improved: pop.generation,
                });
            }
        }
    }

    set.species.retain(|s| !s.members.is_empty());
    for s in &mut set.species {
        s.representative = pop.genomes[s.members[0]].clone();
    }
    set
}

/// Refresh per-species stagnation tracking and the all-time best from this
/// generation's fitnesses.
pub fn update_stagnation(set: &mut SpeciesSet, pop: &Population) {
    for s in &mut set.species {
        let best = s
            .members
            .iter()
            .filter_map(|&i| pop.genomes[i].fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        if best > s.best_fitness {
            s.best_fitness = best;
            s.last_improved = pop.generation;
        }
        set.best_ever = set.best_ever.max(best);
    }
}

fn fitness_of(g: &Genome) -> f64 {
    g.fitness
        .expect("every genome was evaluated before reproduction")
}

/// Members sorted best-first (fitness desc, then index for determinism).
fn ranked_members(species: &Species, pop: &Population) -> Vec<usize> {
    let mut members = species.members.clone();
    members.sort_by(|&a, &b| {
        fitness_of(&pop.genomes[b])
            .partial_cmp(&fitness_of(&pop.genomes[a]))
            .unwrap()
            .then(a.cmp(&b))
    });
    members
}

/// Largest-remainder apportionment of `total` offspring proportional to the
/// species' shared fitness; deterministic tie-break toward earlier species.
fn quotas(shares: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let n = shares.len();
    if n == 0 {
        return Vec::new();
    }
    if sum <= 0.0 {
        let mut q = vec![total / n; n];
        for slot in q.iter_mut().take(total % n) {
            *slot += 1;
        }
        return q;
    }
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut q: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = q.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total - assigned) {
        q[i] += 1;
    }
    q
}

/// Produce the next generation: fitness-shared quotas per species, one elite
/// copied unchanged per species, crossover + mutation for the rest. Species
/// stagnant past the cutoff lose their right to reproduce unless they hold
/// the global best; if every species is stagnant the run restarts from the
/// two best genomes. Returns the new population plus any event notes.
pub fn next_generation(
    set: &SpeciesSet,
    pop: &Population,
    cfg: &NeatConfig,
    rng: &mut ChaCha8Rng,
) -> (Population, Vec<String>) {
    let mut notes = Vec::new();
    let mut innovations = pop.innovations.clone();
    let target = cfg.population;

    let global_best = (0..pop.genomes.len())
        .max_by(|&a, &b| {
            fitness_of(&pop.genomes[a])
                .partial_cmp(&fitness_of(&pop.genomes[b]))
                .unwrap()
                .then(b.cmp(&a))
        })
        .expect("population is never empty");

    // A stagnant species keeps its reproduction rights only while it holds
    // the all-time best genome.
    let holds_global_best = |s: &Species| {
        s.members.contains(&global_best) && fitness_of(&pop.genomes[global_best]) >= set.best_ever
    };
    let alive: Vec<&Species> = set
        .species
        .iter()
        .filter(|s| {
            let stagnant = pop.generation.saturating_sub(s.last_improved) >= cfg.stagnation;
            !stagnant || holds_global_best(s)
        })
        .collect();

    if alive.is_empty() {
        notes.push(format!(
            "generation {}: all species stagnant; restarting from the two best genomes",
            pop.generation
        ));
        let mut ranked: Vec<usize> = (0..pop.genomes.len()).collect();
        ranked.sort_by(|&a, &b| {
            fitness_of(&pop.genomes[b])
                .partial_cmp(&fitness_of(&pop.genomes[a]))
                .unwrap()
                .then(a.cmp(&b))
        });
        let parents = [ranked[0], ranked[1.min(ranked.len() - 1)]];
        let mut genomes = Vec::with_capacity(target);
        for (k, &p) in parents.iter().enumerate() {
            if k < target {
                let mut g = pop.genomes[p].clone();
                g.fitness = None;
                genomes.push(g);
            }
        }
        while genomes.len() < target {
            let p = parents[genomes.len() % 2];
            let mut child = pop.genomes[p].clone();
            child.fitness = None;
            mutate(&mut child, &mut innovations, cfg, rng);
            genomes.push(child);
        }
        return (
            Population {
                generation: pop.generation + 1,
                genomes,
                innovations,
            },
            notes,
        );
    }

    // Fitness sharing: each member contributes fitness / species size.
    let shares: Vec<f64> = alive
        .iter()
        .map(|s| {
            s.members
                .iter()
                .map(|&i| fitness_of(&pop.genomes[i]) / s.members.len() as f64)
                .sum()
        })
        .collect();
    let quota = quotas(&shares, target);

    let mut genomes: Vec<Genome> = Vec::with_capacity(target);
    for (s, &n_offspring) in alive.iter().zip(&quota) {
        if n_offspring == 0 {
            continue;
        }
        let ranked = ranked_members(s, pop);
        let survivors =
            &ranked[..((ranked.len() as f64 * SURVIVAL_FRACTION).ceil() as usize).max(1)];

        let mut produced = 0usize;
        for &elite_idx in ranked.iter().take(cfg.elitism.min(n_offspring)) {
            let mut elite = pop.genomes[elite_idx].clone();
            elite.fitness = None;
            genomes.push(elite);
            produced += 1;
        }
        while produced < n_offspring {
            let pick = |rng: &mut ChaCha8Rng| survivors[rng.random_range(0..survivors.len())];
            let mut child =
                if rng.random_range(0.0..1.0) < cfg.crossover_rate && survivors.len() > 1 {
                    let a = pick(rng);
                    let b = pick(rng);
                    crossover(&pop.genomes[a], &pop.genomes[b], rng)
                } else {
                    let mut c = pop.genomes[pick(rng)].clone();
                    c.fitness = None;
                    c
                };
            mutate(&mut child, &mut innovations, cfg, rng);
            genomes.push(child);
            produced += 1;
        }
    }

    debug_assert_eq!(genomes.len(), target, "population size is preserved");
    (
        Population {
            generation: pop.generation + 1,
            genomes,
            innovations,
        },
        notes,
    )
}

/// Recombine two parents: the child inherits the fitter parent's structure,
/// matching genes take their weight from a random parent, and a gene
/// disabled in either parent stays disabled with 75% probability.
pub fn crossover(a: &Genome, b: &Genome, rng: &mut ChaCha8Rng) -> Genome {
    let (fit, other) = match (fitness_of(a), fitness_of(b)) {
        (fa, fb) if fa >= fb => (a, b),
        _ => (b, a),
    };
    let mut child = Genome {
        nodes: fit.nodes.clone(),
        conns: Vec::new(),
        fitness: None,
    };
    for gene in &fit.conns {
        let mut conn = *gene;
        let mut disabled_somewhere = !gene.enabled;
        if let Some(matching) = other.conns.iter().find(|c| c.innovation == gene.innovation) {
            if rng.random_range(0.0..1.0) < 0.5 {
                conn.weight = matching.weight;
            }
            disabled_somewhere |= !matching.enabled;
        }
        conn.enabled = !disabled_somewhere || rng.random_range(0.0..1.0) < 0.25;
        child.conns.push(conn);
    }
    child
}

/// Apply the weight and structural mutations in a fixed order.
pub fn mutate(
    genome: &mut Genome,
    innovations: &mut InnovationTable,
    cfg: &NeatConfig,
    rng: &mut ChaCha8Rng,
) {
    if rng.random_range(0.0..1.0) < cfg.weight_mutate_rate {
        let normal = Normal::new(0.0, cfg.weight_sigma).expect("sigma is finite");
        for conn in &mut genome.conns {
            if rng.random_range(0.0..1.0) < cfg.weight_reset_rate {
                conn.weight = rng.random_range(-cfg.weight_reset_range..=cfg.weight_reset_range);
            } else {
                conn.weight += normal.sample(rng);
            }
        }
    }
    if rng.random_range(0.0..1.0) < cfg.add_connection_rate {
        mutate_add_connection(genome, innovations, rng);
    }
    if rng.random_range(0.0..1.0) < cfg.add_node_rate {
        mutate_add_node(genome, innovations, rng);
    }
}

/// Insert one new edge chosen uniformly from the acyclicity-preserving
/// candidates (never into inputs/bias, never out of the output, no
/// duplicates). Skips silently when no legal edge exists.
pub fn mutate_add_connection(
    genome: &mut Genome,
    innovations: &mut InnovationTable,
    rng: &mut ChaCha8Rng,
) {
    let mut candidates = Vec::new();
    for from in &genome.nodes {
        if from.role == NodeRole::Output {
            continue;
        }
        for to in &genome.nodes {
            if !matches!(to.role, NodeRole::Hidden | NodeRole::Output) || from.id == to.id {
                continue;
            }
            if genome.conn(from.id, to.id).is_some() {
                continue;
            }
            if genome.has_path(to.id, from.id) {
                continue; // would close a cycle
            }
            candidates.push((from.id, to.id));
        }
    }
    if candidates.is_empty() {
        return;
    }
    candidates.sort_unstable();
    let (from, to) = candidates[rng.random_range(0..candidates.len())];
    let innovation = innovations.connection(from, to);
    let weight = rng.random_range(-1.0..=1.0);
    genome.push_conn(ConnGene {
        innovation,
        from,
        to,
        weight,
        enabled: true,
    });
}

/// Split a random enabled connection a->b into a->h->b: the old gene is
/// disabled, the in-edge gets weight 1 and the out-edge the old weight.
/// Identical splits share the replacement node and innovations.
pub fn mutate_add_node(
    genome: &mut Genome,
    innovations: &mut InnovationTable,
    rng: &mut ChaCha8Rng,
) {
    let enabled: Vec<usize> = genome
        .conns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.enabled)
        .map(|(i, _)| i)
        .collect();
    if enabled.is_empty() {
        return;
    }
    let slot = enabled[rng.random_range(0..enabled.len())];
    let old = genome.conns[slot];
    let (node, in_innov, out_innov) = innovations.split(old.innovation, old.from, old.to);
    if genome.has_node(node) {
        // This lineage already split that gene once; adding the shared
        // replacement node again would collide.
        return;
    }
    genome.conns[slot].enabled = false;
    genome.push_node(NodeGene {
        id: node,
        role: NodeRole::Hidden,
    });
    genome.push_conn(ConnGene {
        innovation: in_innov,
        from: old.from,
        to: node,
        weight: 1.0,
        enabled: true,
    });
    genome.push_conn(ConnGene {
        innovation: out_innov,
        from: node,
        to: old.to,
        weight: old.weight,
        enabled: true,
    });
}
