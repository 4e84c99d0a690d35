//! Python bindings: the parse/candidates/features/convert/simulate pipeline
//! plus the tuner, driven from IR and config text instead of files.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use predicator::features::{features_csv, FEATURE_NAMES};
use predicator::ifconv::{apply_bitmask, Bitmask};
use predicator::ir::{parse_inputs, parse_module, validate_module, Module};
use predicator::neat::{parse_neat_config, NeatConfig};
use predicator::sim::{parse_machine_model, simulate, MachineModel};
use predicator::tuner::{
    exhaustive_search, genome_bitmask, tune, Program as CoreProgram, Workload, EXHAUSTIVE_LIMIT,
};

use num_traits::ToPrimitive;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn machine_from(text: Option<&str>) -> PyResult<MachineModel> {
    match text {
        None => Ok(MachineModel::default()),
        Some(t) => parse_machine_model(t).map_err(value_err),
    }
}

fn neat_from(text: Option<&str>) -> PyResult<NeatConfig> {
    match text {
        None => Ok(NeatConfig::default()),
        Some(t) => parse_neat_config(t).map_err(value_err),
    }
}

fn parse_checked(ir_text: &str) -> PyResult<Module> {
    let module = parse_module(ir_text).map_err(value_err)?;
    let diags = validate_module(&module);
    if !diags.is_empty() {
        let listing: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(PyValueError::new_err(listing.join("\n")));
    }
    Ok(module)
}

/// Validate IR text; returns the diagnostics (empty list means clean).
#[pyfunction]
fn check(ir_text: &str) -> PyResult<Vec<String>> {
    let module = parse_module(ir_text).map_err(value_err)?;
    Ok(validate_module(&module)
        .iter()
        .map(|d| d.to_string())
        .collect())
}

/// The canonical text form of a parsed module (a parse/print round trip).
#[pyfunction]
fn reprint(ir_text: &str) -> PyResult<String> {
    Ok(parse_module(ir_text).map_err(value_err)?.to_string())
}

/// An analyzed module: frozen candidate set, feature matrices, and the
/// simulate/tune entry points.
#[pyclass]
struct Program {
    program: CoreProgram,
    machine: MachineModel,
}

#[pymethods]
impl Program {
    /// Parse + validate IR text and analyze its candidates.
    #[new]
    #[pyo3(signature = (ir_text, entry=None, machine=None))]
    fn new(ir_text: &str, entry: Option<&str>, machine: Option<&str>) -> PyResult<Self> {
        let module = parse_checked(ir_text)?;
        let mm = machine_from(machine)?;
        let entry = match entry {
            Some(e) => e.to_string(),
            None => module
                .functions
                .first()
                .map(|f| f.name.clone())
                .ok_or_else(|| PyValueError::new_err("module has no functions"))?,
        };
        let program = CoreProgram::analyze(module, &entry, &mm).map_err(value_err)?;
        Ok(Program {
            program,
            machine: mm,
        })
    }

    fn candidate_count(&self) -> usize {
        self.program.candidate_count()
    }

    /// Candidates as dicts: index, branch_site, shape, head, sides, join.
    fn candidates<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for c in &self.program.candidates {
            let d = PyDict::new(py);
            d.set_item("index", c.index)?;
            d.set_item("branch_site", format!("b{}", c.branch_site))?;
            d.set_item("shape", c.shape.name())?;
            d.set_item("function", &c.function)?;
            d.set_item("head", &c.head)?;
            d.set_item("true_side", c.true_side.as_deref())?;
            d.set_item("false_side", c.false_side.as_deref())?;
            d.set_item("join", &c.join)?;
            out.append(d)?;
        }
        Ok(out)
    }

    /// Feature rows as dicts keyed by the canonical feature names.
    fn features<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for fv in &self.program.features {
            let d = PyDict::new(py);
            for (name, value) in FEATURE_NAMES.iter().zip(fv.as_array()) {
                d.set_item(name, value.to_f64().unwrap_or(f64::NAN))?;
            }
            out.append(d)?;
        }
        Ok(out)
    }

    fn features_csv(&self) -> String {
        features_csv(&self.program.features)
    }

    /// The baseline heuristic's convert/keep decisions, e.g. "10".
    fn baseline_bitmask(&self) -> String {
        self.program.baseline_bits(&self.machine).to_string()
    }

    /// Apply a bitmask string; returns (converted IR text, report rows).
    fn convert<'py>(
        &self,
        py: Python<'py>,
        bitmask: &str,
    ) -> PyResult<(String, Bound<'py, PyList>)> {
        let mask: Bitmask = bitmask.parse().map_err(value_err)?;
        let (module, report) = apply_bitmask(&self.program.module, &mask).map_err(value_err)?;
        let rows = PyList::empty(py);
        for row in &report.rows {
            let d = PyDict::new(py);
            d.set_item("index", row.index)?;
            d.set_item("branch_site", format!("b{}", row.branch_site))?;
            d.set_item("bit", row.bit)?;
            d.set_item("outcome", row.outcome.name())?;
            rows.append(d)?;
        }
        Ok((module.to_string(), rows))
    }

    /// Simulate a workload (inputs text) against this program's machine,
    /// optionally after applying a bitmask.
    #[pyo3(signature = (inputs_text, bitmask=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        inputs_text: &str,
        bitmask: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let inputs = parse_inputs(inputs_text).map_err(value_err)?;
        let module = match bitmask {
            None => self.program.module.clone(),
            Some(bits) => {
                let mask: Bitmask = bits.parse().map_err(value_err)?;
                apply_bitmask(&self.program.module, &mask)
                    .map_err(value_err)?
                    .0
            }
        };
        let result = simulate(&module, &self.program.entry, &inputs, &self.machine)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        d.set_item("cycles", result.cycles)?;
        d.set_item("dynamic_instructions", result.dynamic_instructions)?;
        d.set_item("branch_count", result.branch_count)?;
        d.set_item("mispredictions", result.mispredictions)?;
        let per_site = PyDict::new(py);
        for (site, count) in &result.per_site_mispredictions {
            per_site.set_item(format!("b{site}"), count)?;
        }
        d.set_item("per_site_mispredictions", per_site)?;
        Ok(d)
    }

    /// Run the evolutionary search over one or more workloads.
    #[pyo3(signature = (inputs_texts, seed=0, neat=None))]
    fn tune<'py>(
        &self,
        py: Python<'py>,
        inputs_texts: Vec<String>,
        seed: u64,
        neat: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ncfg = neat_from(neat)?;
        let workloads = workloads_from(&inputs_texts)?;
        let result =
            tune(&self.program, &workloads, &ncfg, &self.machine, seed).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("best_speedup", result.best_fitness)?;
        d.set_item("best_bitmask", result.best_bitmask.to_string())?;
        d.set_item("genome", result.best_genome.to_text())?;
        d.set_item("converted_ir", result.converted_ir)?;
        let history = PyList::empty(py);
        for row in &result.history {
            let h = PyDict::new(py);
            h.set_item("generation", row.generation)?;
            h.set_item("best_fitness", row.best_fitness)?;
            h.set_item("mean_fitness", row.mean_fitness)?;
            h.set_item("species_count", row.species_count)?;
            h.set_item("best_bitmask", row.best_bitmask.to_string())?;
            history.append(h)?;
        }
        d.set_item("history", history)?;
        d.set_item("notes", result.notes)?;
        Ok(d)
    }

    /// Enumerate all 2^n bitmasks; the ground-truth optimum.
    #[pyo3(signature = (inputs_texts, limit=EXHAUSTIVE_LIMIT))]
    fn exhaustive<'py>(
        &self,
        py: Python<'py>,
        inputs_texts: Vec<String>,
        limit: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let workloads = workloads_from(&inputs_texts)?;
        let oracle = exhaustive_search(&self.program, &workloads, &self.machine, limit)
            .map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("candidates", oracle.candidate_count)?;
        d.set_item("optimal_bitmask", oracle.optimal_bitmask.to_string())?;
        d.set_item("optimal_speedup", oracle.optimal_speedup)?;
        let table = PyList::empty(py);
        for (mask, fitness) in &oracle.table {
            table.append((mask.to_string(), *fitness))?;
        }
        d.set_item("table", table)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Program(entry='{}', candidates={})",
            self.program.entry,
            self.program.candidate_count()
        )
    }
}

fn workloads_from(texts: &[String]) -> PyResult<Vec<Workload>> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let inputs = parse_inputs(t).map_err(value_err)?;
            Ok(Workload::new(&format!("w{i}"), inputs))
        })
        .collect()
}

/// Activate a serialized genome on custom normalized features (mostly a
/// debugging hook; bits use the 0.5 threshold).
#[pyfunction]
fn genome_bits(genome_text: &str, rows: Vec<Vec<f64>>) -> PyResult<String> {
    let genome = predicator::neat::parse_genome(genome_text).map_err(value_err)?;
    let normalized: Vec<predicator::features::NormalizedVector> = rows
        .into_iter()
        .map(|row| {
            let arr: [f64; 11] = row
                .try_into()
                .map_err(|_| PyValueError::new_err("each feature row needs 11 values"))?;
            Ok(predicator::features::NormalizedVector(arr))
        })
        .collect::<PyResult<_>>()?;
    Ok(genome_bitmask(&genome, &normalized, 0.5).to_string())
}

#[pymodule]
fn predicator_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    m.add_class::<Program>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(reprint, m)?)?;
    m.add_function(wrap_pyfunction!(genome_bits, m)?)?;
    Ok(())
}
