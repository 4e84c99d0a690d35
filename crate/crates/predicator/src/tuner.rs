//! The search harness: features feed evolved networks, network outputs form
//! a bitmask, the bitmask drives if-conversion, and the simulated speedup of
//! the converted module over the baseline-heuristic module is the fitness.
//! An exhaustive enumerator over all 2^n bitmasks serves as the oracle.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{
    extract_features, normalize_features, FeatureError, FeatureVector, NormalizedVector,
};
use crate::ifconv::{
    apply_bitmask, baseline_decide, module_candidates, Bitmask, Candidate, IfconvError,
};
use crate::ir::{analyze_cfg, Inputs, Module};
use crate::neat::{
    activate, init_population, next_generation, speciate, update_stagnation, Genome, NeatConfig,
    SpeciesSet,
};
use crate::sim::{simulate, speedup, MachineModel, SimError, SimResult};

/// Only keep the full bitmask->speedup table when the space is this small.
pub const TABLE_CUTOFF: usize = 12;

/// Default refusal bound for the exhaustive oracle.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// A module frozen together with its candidate set and feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub module: Module,
    pub entry: String,
    pub candidates: Vec<Candidate>,
    pub features: Vec<FeatureVector>,
    pub normalized: Vec<NormalizedVector>,
}

impl Program {
    /// Validate, discover candidates, and extract + normalize their features.
    pub fn analyze(module: Module, entry: &str, mm: &MachineModel) -> Result<Program, TuneError> {
        if module.function(entry).is_none() {
            return Err(TuneError::UnknownEntry(entry.to_string()));
        }
        let candidates = module_candidates(&module)?;
        let mut features = Vec::with_capacity(candidates.len());
        for cand in &candidates {
            let func = module.function(&cand.function).expect("candidate function");
            let cfg = analyze_cfg(func)
                .map_err(|e| TuneError::Ifconv(IfconvError::InvalidModule(e.to_string())))?;
            features.push(extract_features(&module, func, cand, mm, &cfg)?);
        }
        let normalized = if features.is_empty() {
            Vec::new()
        } else {
            normalize_features(&features)?
        };
        Ok(Program {
            module,
            entry: entry.to_string(),
            candidates,
            features,
            normalized,
        })
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// The baseline heuristic's decision vector.
    pub fn baseline_bits(&self, mm: &MachineModel) -> Bitmask {
        Bitmask {
            bits: self
                .features
                .iter()
                .map(|fv| baseline_decide(fv, mm))
                .collect(),
        }
    }
}

/// One named workload: the inputs a fitness evaluation runs against.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub inputs: Inputs,
}

impl Workload {
    pub fn new(name: &str, inputs: Inputs) -> Self {
        Workload {
            name: name.to_string(),
            inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TuneError {
    NothingToTune,
    UnknownEntry(String),
    TooManyCandidates { n: usize, limit: usize },
    Ifconv(IfconvError),
    Feature(FeatureError),
    Sim(SimError),
}

impl fmt::Display for TuneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuneError::NothingToTune => write!(f, "nothing to tune: the module has no candidates"),
            TuneError::UnknownEntry(name) => write!(f, "unknown entry function '@{name}'"),
            TuneError::TooManyCandidates { n, limit } => {
                write!(
                    f,
                    "exhaustive search refused: {n} candidates exceed the limit of {limit}"
                )
            }
            TuneError::Ifconv(e) => write!(f, "{e}"),
            TuneError::Feature(e) => write!(f, "{e}"),
            TuneError::Sim(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TuneError {}

impl From<IfconvError> for TuneError {
    fn from(e: IfconvError) -> Self {
        TuneError::Ifconv(e)
    }
}

impl From<FeatureError> for TuneError {
    fn from(e: FeatureError) -> Self {
        TuneError::Feature(e)
    }
}

impl From<SimError> for TuneError {
    fn from(e: SimError) -> Self {
        TuneError::Sim(e)
    }
}

/// Caches one simulation per distinct bitmask per workload; genomes that
/// agree on the mask share the result exactly.
pub struct Evaluator<'p> {
    program: &'p Program,
    workloads: &'p [Workload],
    mm: &'p MachineModel,
    baseline: Vec<SimResult>,
    cache: BTreeMap<Vec<bool>, f64>,
    pub notes: Vec<String>,
}

impl<'p> Evaluator<'p> {
    pub fn new(
        program: &'p Program,
        workloads: &'p [Workload],
        mm: &'p MachineModel,
    ) -> Result<Self, TuneError> {
        let baseline_bits = program.baseline_bits(mm);
        let (baseline_module, _) = apply_bitmask(&program.module, &baseline_bits)?;
        let mut baseline = Vec::with_capacity(workloads.len());
        for w in workloads {
            baseline.push(simulate(&baseline_module, &program.entry, &w.inputs, mm)?);
        }
        Ok(Evaluator {
            program,
            workloads,
            mm,
            baseline,
            cache: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    pub fn baseline_cycles(&self) -> Vec<(String, u64)> {
        self.workloads
            .iter()
            .zip(&self.baseline)
            .map(|(w, r)| (w.name.clone(), r.cycles))
            .collect()
    }

    /// Geometric-mean speedup of the masked module over the baseline module.
    pub fn fitness_of_mask(&mut self, mask: &Bitmask) -> Result<f64, TuneError> {
        if let Some(&hit) = self.cache.get(&mask.bits) {
            return Ok(hit);
        }
        let (module, _) = apply_bitmask(&self.program.module, mask)?;
        let mut product = 1.0f64;
        let mut trapped = false;
        for (w, base) in self.workloads.iter().zip(&self.baseline) {
            match simulate(&module, &self.program.entry, &w.inputs, self.mm) {
                Ok(result) => {
                    let ratio = speedup(base, &result)?;
                    product *= ratio.to_f64().expect("cycle counts are finite");
                }
                Err(SimError::Interp(e)) => {
                    // Semantically impossible if conversion preserved
                    // behavior; record loudly and poison the fitness.
                    self.notes.push(format!(
                        "mask {mask} trapped on workload '{}': {e} (treating fitness as 0)",
                        w.name
                    ));
                    trapped = true;
                    break;
                }
                Err(other) => return Err(other.into()),
            }
        }
        let fitness = if trapped {
            0.0
        } else {
            product.powf(1.0 / self.workloads.len() as f64)
        };
        self.cache.insert(mask.bits.clone(), fitness);
        Ok(fitness)
    }
}

/// Bits from one shared network applied independently to each candidate's
/// normalized feature vector: bit = activation >= threshold.
pub fn genome_bitmask(genome: &Genome, normalized: &[NormalizedVector], threshold: f64) -> Bitmask {
    Bitmask {
        bits: normalized
            .iter()
            .map(|nv| activate(genome, &nv.0) >= threshold)
            .collect(),
    }
}

/// Evaluate one genome against the evaluator's program/workloads.
pub fn evaluate_genome(
    genome: &Genome,
    evaluator: &mut Evaluator<'_>,
    threshold: f64,
) -> Result<f64, TuneError> {
    let mask = genome_bitmask(genome, &evaluator.program.normalized, threshold);
    evaluator.fitness_of_mask(&mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: u32,
    /// Best fitness seen so far (cumulative, hence non-decreasing).
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub species_count: usize,
    pub best_bitmask: Bitmask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_genome: Genome,
    pub best_bitmask: Bitmask,
    pub best_fitness: f64,
    pub history: Vec<GenerationStats>,
    pub baseline_cycles: Vec<(String, u64)>,
    pub converted_ir: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub candidate_count: usize,
    pub optimal_bitmask: Bitmask,
    pub optimal_speedup: f64,
    /// (bitmask, geometric-mean speedup) in ascending binary order; present
    /// only when the space fits under [`TABLE_CUTOFF`].
    pub table: Vec<(Bitmask, f64)>,
}

/// Run the evolutionary search. Deterministic for a fixed
/// (program, workloads, machine model, config, seed).
pub fn tune(
    program: &Program,
    workloads: &[Workload],
    ncfg: &NeatConfig,
    mm: &MachineModel,
    seed: u64,
) -> Result<TuneResult, TuneError> {
    tune_observed(program, workloads, ncfg, mm, seed, |_, _| {})
}

/// `tune` with a per-generation inspection hook (population after
/// evaluation, species set after speciation); the structural-invariant
/// checks ride on this.
pub fn tune_observed(
    program: &Program,
    workloads: &[Workload],
    ncfg: &NeatConfig,
    mm: &MachineModel,
    seed: u64,
    mut inspect: impl FnMut(&crate::neat::Population, &SpeciesSet),
) -> Result<TuneResult, TuneError> {
    if program.candidates.is_empty() {
        return Err(TuneError::NothingToTune);
    }
    let mut evaluator = Evaluator::new(program, workloads, mm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut population = init_population(ncfg, crate::features::FEATURE_COUNT, 1, &mut rng);
    let mut species: Option<SpeciesSet> = None;
    let mut history = Vec::with_capacity(ncfg.generations as usize);
    let mut notes = Vec::new();

    let mut best: Option<(f64, Genome, Bitmask)> = None;

    for _ in 0..ncfg.generations {
        let mut sum = 0.0;
        for gi in 0..population.genomes.len() {
            let mask = genome_bitmask(
                &population.genomes[gi],
                &program.normalized,
                ncfg.output_threshold,
            );
            let fitness = evaluator.fitness_of_mask(&mask)?;
            population.genomes[gi].fitness = Some(fitness);
            sum += fitness;
            let improved = match &best {
                None => true,
                Some((bf, _, _)) => fitness > *bf,
            };
            if improved {
                best = Some((fitness, population.genomes[gi].clone(), mask));
            }
        }

        let mut set = speciate(&population, species.as_ref(), ncfg);
        update_stagnation(&mut set, &population);
        inspect(&population, &set);

        let (best_fitness, _, best_mask) = best.as_ref().expect("population evaluated");
        history.push(GenerationStats {
            generation: population.generation,
            best_fitness: *best_fitness,
            mean_fitness: sum / population.genomes.len() as f64,
            species_count: set.len(),
            best_bitmask: best_mask.clone(),
        });

        if population.generation + 1 < ncfg.generations {
            let (next, gen_notes) = next_generation(&set, &population, ncfg, &mut rng);
            notes.extend(gen_notes);
            population = next;
        }
        species = Some(set);
    }

    notes.extend(std::mem::take(&mut evaluator.notes));
    let (best_fitness, best_genome, best_bitmask) = best.expect("generations >= 1");
    let (converted, _) = apply_bitmask(&program.module, &best_bitmask)?;
    Ok(TuneResult {
        best_genome: Genome {
            fitness: Some(best_fitness),
            ..best_genome
        },
        best_bitmask,
        best_fitness,
        history,
        baseline_cycles: evaluator.baseline_cycles(),
        converted_ir: converted.to_string(),
        notes,
    })
}

/// Enumerate every bitmask in ascending binary order and return the best by
/// geometric-mean speedup, breaking ties toward fewer conversions and then
/// the lower binary value.
pub fn exhaustive_search(
    program: &Program,
    workloads: &[Workload],
    mm: &MachineModel,
    limit: usize,
) -> Result<OracleResult, TuneError> {
    let n = program.candidate_count();
    if n > limit {
        return Err(TuneError::TooManyCandidates { n, limit });
    }
    let mut evaluator = Evaluator::new(program, workloads, mm)?;
    let keep_table = n <= TABLE_CUTOFF;
    let mut table = Vec::new();
    let mut best: Option<(f64, usize, u64, Bitmask)> = None; // (speedup, popcount, value, mask)
    for value in 0..(1u64 << n) {
        let mask = Bitmask::from_value(value, n);
        let fitness = evaluator.fitness_of_mask(&mask)?;
        let popcount = mask.popcount();
        let better = match &best {
            None => true,
            Some((bf, bp, _, _)) => fitness > *bf || (fitness == *bf && popcount < *bp),
        };
        if better {
            best = Some((fitness, popcount, value, mask.clone()));
        }
        if keep_table {
            table.push((mask, fitness));
        }
    }
    let (optimal_speedup, _, _, optimal_bitmask) = best.expect("at least the empty mask");
    Ok(OracleResult {
        candidate_count: n,
        optimal_bitmask,
        optimal_speedup,
        table,
    })
}

// ---------------------------------------------------------------------------
// Report emission

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Tsv,
}

impl ReportFormat {
    pub fn sep(self) -> char {
        match self {
            ReportFormat::Csv => ',',
            ReportFormat::Tsv => '\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Tsv => "tsv",
        }
    }
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn history_table(history: &[GenerationStats], format: ReportFormat) -> String {
    let s = format.sep();
    let mut out =
        format!("generation{s}best_fitness{s}mean_fitness{s}species_count{s}best_bitmask\n");
    for row in history {
        out.push_str(&format!(
            "{}{s}{}{s}{}{s}{}{s}{}\n",
            row.generation,
            fmt6(row.best_fitness),
            fmt6(row.mean_fitness),
            row.species_count,
            row.best_bitmask
        ));
    }
    out
}

pub fn tune_summary(result: &TuneResult, ncfg: &NeatConfig, format: ReportFormat) -> String {
    let s = format.sep();
    let mut out = format!("metric{s}value\n");
    out.push_str(&format!("best_speedup{s}{}\n", fmt6(result.best_fitness)));
    out.push_str(&format!("best_bitmask{s}{}\n", result.best_bitmask));
    out.push_str(&format!("generations{s}{}\n", ncfg.generations));
    out.push_str(&format!("population{s}{}\n", ncfg.population));
    for (name, cycles) in &result.baseline_cycles {
        out.push_str(&format!("baseline_cycles.{name}{s}{cycles}\n"));
    }
    for (i, note) in result.notes.iter().enumerate() {
        out.push_str(&format!("note.{i}{s}{note}\n"));
    }
    out
}

pub fn oracle_table(result: &OracleResult, format: ReportFormat) -> String {
    let s = format.sep();
    let mut out = format!("bitmask{s}speedup\n");
    for (mask, fitness) in &result.table {
        out.push_str(&format!("{mask}{s}{}\n", fmt6(*fitness)));
    }
    out
}

pub fn oracle_summary(result: &OracleResult, format: ReportFormat) -> String {
    let s = format.sep();
    let mut out = format!("metric{s}value\n");
    out.push_str(&format!("candidates{s}{}\n", result.candidate_count));
    out.push_str(&format!("optimal_bitmask{s}{}\n", result.optimal_bitmask));
    out.push_str(&format!(
        "optimal_speedup{s}{}\n",
        fmt6(result.optimal_speedup)
    ));
    out
}

/// Write the result bundle: summary, genome, bitmask, converted module, and
/// history — the reported artifacts of a finished run.
pub fn write_bundle(
    result: &TuneResult,
    ncfg: &NeatConfig,
    dir: &Path,
    format: ReportFormat,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let ext = format.extension();
    let write = |name: String, contents: String| -> std::io::Result<()> {
        let mut f = std::fs::File::create(dir.join(name))?;
        f.write_all(contents.as_bytes())
    };
    write(format!("summary.{ext}"), tune_summary(result, ncfg, format))?;
    write(
        format!("history.{ext}"),
        history_table(&result.history, format),
    )?;
    write("genome.txt".to_string(), result.best_genome.to_text())?;
    write(
        "bitmask.txt".to_string(),
        format!("{}\n", result.best_bitmask),
    )?;
    write("converted.ir".to_string(), result.converted_ir.clone())?;
    Ok(())
}
