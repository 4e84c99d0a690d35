//! From-scratch NEAT: genomes with historical innovation markings,
//! feed-forward activation, compatibility-based speciation with fitness
//! sharing, crossover, and structural mutation. Populations start minimal
//! (inputs wired straight to the output, zero hidden nodes) and only grow.

mod evolve;
mod genome;

pub use evolve::{init_population, next_generation, speciate, update_stagnation};
pub use genome::{activate, compatibility_distance, parse_genome, sigmoid};

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Input,
    Bias,
    Output,
    Hidden,
}

impl NodeRole {
    pub fn name(self) -> &'static str {
        match self {
            NodeRole::Input => "input",
            NodeRole::Bias => "bias",
            NodeRole::Output => "output",
            NodeRole::Hidden => "hidden",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "input" => NodeRole::Input,
            "bias" => NodeRole::Bias,
            "output" => NodeRole::Output,
            "hidden" => NodeRole::Hidden,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGene {
    pub id: u32,
    pub role: NodeRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnGene {
    pub innovation: u32,
    pub from: u32,
    pub to: u32,
    pub weight: f64,
    pub enabled: bool,
}

/// A network genome. Nodes are kept sorted by id and connections by
/// innovation number; the graph over all connection genes (enabled or not)
/// is acyclic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Genome {
    pub nodes: Vec<NodeGene>,
    pub conns: Vec<ConnGene>,
    pub fitness: Option<f64>,
}

impl Genome {
    pub fn node_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn has_node(&self, id: u32) -> bool {
        self.nodes.iter().any(|n| n.id == id)
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::Hidden)
            .count()
    }

    pub fn input_ids(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::Input)
            .map(|n| n.id)
            .collect()
    }

    pub fn output_id(&self) -> u32 {
        self.nodes
            .iter()
            .find(|n| n.role == NodeRole::Output)
            .map(|n| n.id)
            .expect("genome has an output node")
    }

    pub fn conn(&self, from: u32, to: u32) -> Option<&ConnGene> {
        self.conns.iter().find(|c| c.from == from && c.to == to)
    }

    /// Reachability over every connection gene, enabled or not; used to keep
    /// mutation acyclic even when crossover later re-enables genes.
    pub fn has_path(&self, from: u32, to: u32) -> bool {
        if from == to {
            return true;
        }
        let mut stack = vec![from];
        let mut seen = std::collections::BTreeSet::new();
        while let Some(n) = stack.pop() {
            for c in &self.conns {
                if c.from == n {
                    if c.to == to {
                        return true;
                    }
                    if seen.insert(c.to) {
                        stack.push(c.to);
                    }
                }
            }
        }
        false
    }

    pub fn push_conn(&mut self, conn: ConnGene) {
        let pos = self
            .conns
            .binary_search_by_key(&conn.innovation, |c| c.innovation)
            .unwrap_err();
        self.conns.insert(pos, conn);
    }

    pub fn push_node(&mut self, node: NodeGene) {
        let pos = self
            .nodes
            .binary_search_by_key(&node.id, |n| n.id)
            .unwrap_err();
        self.nodes.insert(pos, node);
    }

    /// Line-oriented text form; round-trips exactly (weights use the
    /// shortest representation that reparses to the same bits).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} {}\n", n.id, n.role.name()));
        }
        for c in &self.conns {
            out.push_str(&format!(
                "conn {} {} {} {} {}\n",
                c.innovation, c.from, c.to, c.weight, c.enabled as u8
            ));
        }
        out
    }
}

/// Search hyperparameters. Every constant a run depends on lives here so
/// runs are reproducible and overridable from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct NeatConfig {
    pub population: usize,
    pub generations: u32,
    /// Compatibility coefficients for excess, disjoint and weight terms.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub compat_threshold: f64,
    /// Below this many connection genes (both genomes), N is taken as 1.
    pub small_genome_limit: usize,
    pub weight_mutate_rate: f64,
    pub weight_sigma: f64,
    pub weight_reset_rate: f64,
    pub weight_reset_range: f64,
    pub add_connection_rate: f64,
    pub add_node_rate: f64,
    pub crossover_rate: f64,
    pub elitism: usize,
    pub stagnation: u32,
    pub output_threshold: f64,
}

impl Default for NeatConfig {
    fn default() -> Self {
        NeatConfig {
            population: 30,
            generations: 50,
            c1: 1.0,
            c2: 1.0,
            c3: 0.4,
            compat_threshold: 3.0,
            small_genome_limit: 20,
            weight_mutate_rate: 0.8,
            weight_sigma: 0.5,
            weight_reset_rate: 0.1,
            weight_reset_range: 2.0,
            add_connection_rate: 0.05,
            add_node_rate: 0.03,
            crossover_rate: 0.75,
            elitism: 1,
            stagnation: 15,
            output_threshold: 0.5,
        }
    }
}

impl fmt::Display for NeatConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "population = {}", self.population)?;
        writeln!(f, "generations = {}", self.generations)?;
        writeln!(f, "c1 = {}", self.c1)?;
        writeln!(f, "c2 = {}", self.c2)?;
        writeln!(f, "c3 = {}", self.c3)?;
        writeln!(f, "compat_threshold = {}", self.compat_threshold)?;
        writeln!(f, "small_genome_limit = {}", self.small_genome_limit)?;
        writeln!(f, "weight_mutate_rate = {}", self.weight_mutate_rate)?;
        writeln!(f, "weight_sigma = {}", self.weight_sigma)?;
        writeln!(f, "weight_reset_rate = {}", self.weight_reset_rate)?;
        writeln!(f, "weight_reset_range = {}", self.weight_reset_range)?;
        writeln!(f, "add_connection_rate = {}", self.add_connection_rate)?;
        writeln!(f, "add_node_rate = {}", self.add_node_rate)?;
        writeln!(f, "crossover_rate = {}", self.crossover_rate)?;
        writeln!(f, "elitism = {}", self.elitism)?;
        writeln!(f, "stagnation = {}", self.stagnation)?;
        writeln!(f, "output_threshold = {}", self.output_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parse a `key = value` config file; unset keys keep their defaults.
pub fn parse_neat_config(text: &str) -> Result<NeatConfig, ConfigError> {
    let mut cfg = NeatConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno as u32 + 1;
        let err = |message: String| ConfigError {
            line: lineno,
            message,
        };
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let as_usize = || {
            value
                .parse::<usize>()
                .map_err(|_| err(format!("invalid count '{value}'")))
        };
        let as_u32 = || {
            value
                .parse::<u32>()
                .map_err(|_| err(format!("invalid count '{value}'")))
        };
        let as_rate = || -> Result<f64, ConfigError> {
            let v: f64 = value
                .parse()
                .map_err(|_| err(format!("invalid number '{value}'")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("'{key}' must lie in [0,1], got {value}")));
            }
            Ok(v)
        };
        let as_f64 = || {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("invalid number '{value}'")))
        };
        match key {
            "population" => {
                cfg.population = as_usize()?;
                if cfg.population < 2 {
                    return Err(err("population must be at least 2".to_string()));
                }
            }
            "generations" => cfg.generations = as_u32()?,
            "c1" => cfg.c1 = as_f64()?,
            "c2" => cfg.c2 = as_f64()?,
            "c3" => cfg.c3 = as_f64()?,
            "compat_threshold" => cfg.compat_threshold = as_f64()?,
            "small_genome_limit" => cfg.small_genome_limit = as_usize()?,
            "weight_mutate_rate" => cfg.weight_mutate_rate = as_rate()?,
            "weight_sigma" => cfg.weight_sigma = as_f64()?,
            "weight_reset_rate" => cfg.weight_reset_rate = as_rate()?,
            "weight_reset_range" => cfg.weight_reset_range = as_f64()?,
            "add_connection_rate" => cfg.add_connection_rate = as_rate()?,
            "add_node_rate" => cfg.add_node_rate = as_rate()?,
            "crossover_rate" => cfg.crossover_rate = as_rate()?,
            "elitism" => cfg.elitism = as_usize()?,
            "stagnation" => cfg.stagnation = as_u32()?,
            "output_threshold" => cfg.output_threshold = as_rate()?,
            _ => return Err(err(format!("unknown key '{key}'"))),
        }
    }
    Ok(cfg)
}

/// Shared bookkeeping that makes structural innovations comparable across
/// genomes: one innovation number per (from, to) pair, and one replacement
/// node (with its two connection innovations) per split connection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InnovationTable {
    next_innovation: u32,
    next_node: u32,
    conn_innovations: BTreeMap<(u32, u32), u32>,
    splits: BTreeMap<u32, (u32, u32, u32)>,
}

impl InnovationTable {
    pub fn new(first_innovation: u32, first_node: u32) -> Self {
        InnovationTable {
            next_innovation: first_innovation,
            next_node: first_node,
            conn_innovations: BTreeMap::new(),
            splits: BTreeMap::new(),
        }
    }

    pub fn register_initial(&mut self, from: u32, to: u32) -> u32 {
        *self.conn_innovations.entry((from, to)).or_insert_with(|| {
            let i = self.next_innovation;
            self.next_innovation += 1;
            i
        })
    }

    pub fn connection(&mut self, from: u32, to: u32) -> u32 {
        self.register_initial(from, to)
    }

    /// The (node id, in-innovation, out-innovation) triple for splitting the
    /// connection with `innovation`; identical splits share one triple.
    pub fn split(&mut self, innovation: u32, from: u32, to: u32) -> (u32, u32, u32) {
        if let Some(&t) = self.splits.get(&innovation) {
            return t;
        }
        let node = self.next_node;
        self.next_node += 1;
        let in_innov = self.connection(from, node);
        let out_innov = self.connection(node, to);
        let triple = (node, in_innov, out_innov);
        self.splits.insert(innovation, triple);
        triple
    }
}

/// One generation's genomes plus the innovation bookkeeping they share.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub generation: u32,
    pub genomes: Vec<Genome>,
    pub innovations: InnovationTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub id: u32,
    pub representative: Genome,
    pub members: Vec<usize>,
    pub best_fitness: f64,
    pub last_improved: u32,
}

/// A partition of the population; every genome index appears in exactly one
/// species. `best_ever` is the all-time best fitness seen by any generation,
/// which decides whether a stagnant species still holds the global best.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSet {
    pub species: Vec<Species>,
    pub next_id: u32,
    pub best_ever: f64,
}

impl Default for SpeciesSet {
    fn default() -> Self {
        SpeciesSet {
            species: Vec::new(),
            next_id: 0,
            best_ever: f64::NEG_INFINITY,
        }
    }
}

impl SpeciesSet {
    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }
}
