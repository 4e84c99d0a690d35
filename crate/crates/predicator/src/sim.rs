//! Trace-driven cycle-level cost model with branch prediction.
//!
//! Semantics and cost stay orthogonal: the interpreter first produces the
//! dynamic trace and branch outcomes, then this module schedules that trace
//! against a machine model. Prediction can therefore never change computed
//! values, only timing. Issue is in-order (at most `issue_width` per cycle),
//! completion is out of order via per-opcode latencies, and a misprediction
//! stalls the fetch of everything after the branch until resolve + penalty.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;

use crate::ir::{interpret, Inputs, InterpError, Module, Opcode, Terminator};

/// Mnemonics with a latency entry, in fixed display order.
const LATENCY_KEYS: [&str; 23] = [
    "add", "sub", "mul", "div", "rem", "and", "or", "xor", "shl", "shr", "icmp.eq", "icmp.ne",
    "icmp.slt", "icmp.sle", "icmp.sgt", "icmp.sge", "select", "load", "store", "br", "jmp", "phi",
    "ret",
];

/// Per-opcode issue-to-result latencies in cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyTable {
    entries: BTreeMap<String, u64>,
}

impl Default for LatencyTable {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for key in LATENCY_KEYS {
            let lat = match key {
                "mul" | "load" => 3,
                "div" | "rem" => 12,
                "jmp" | "phi" => 0,
                _ => 1,
            };
            entries.insert(key.to_string(), lat);
        }
        LatencyTable { entries }
    }
}

impl LatencyTable {
    pub fn get(&self, mnemonic: &str) -> u64 {
        *self
            .entries
            .get(mnemonic)
            .unwrap_or_else(|| panic!("no latency entry for '{mnemonic}'"))
    }

    pub fn set(&mut self, mnemonic: &str, latency: u64) -> Result<(), String> {
        if !LATENCY_KEYS.contains(&mnemonic) {
            return Err(format!("unknown latency key '{mnemonic}'"));
        }
        self.entries.insert(mnemonic.to_string(), latency);
        Ok(())
    }

    pub fn op(&self, op: Opcode) -> u64 {
        self.get(op.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    TwoBit,
    AlwaysTaken,
    Oracle,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::TwoBit => "twobit",
            PredictorKind::AlwaysTaken => "always_taken",
            PredictorKind::Oracle => "oracle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "twobit" => PredictorKind::TwoBit,
            "always_taken" => PredictorKind::AlwaysTaken,
            "oracle" => PredictorKind::Oracle,
            _ => return None,
        })
    }
}

/// The cost model's knobs. `assumed_misrate` is only consulted by the
/// baseline profitability heuristic, never by the simulator itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    pub issue_width: u64,
    pub mispredict_penalty: u64,
    pub assumed_misrate: Ratio<i64>,
    pub predictor: PredictorKind,
    pub latencies: LatencyTable,
}

impl Default for MachineModel {
    fn default() -> Self {
        MachineModel {
            issue_width: 4,
            mispredict_penalty: 14,
            assumed_misrate: Ratio::new(1, 4),
            predictor: PredictorKind::TwoBit,
            latencies: LatencyTable::default(),
        }
    }
}

impl fmt::Display for MachineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "issue_width = {}", self.issue_width)?;
        writeln!(f, "mispredict_penalty = {}", self.mispredict_penalty)?;
        writeln!(
            f,
            "assumed_misrate = {}",
            format_ratio_decimal(self.assumed_misrate)
        )?;
        writeln!(f, "predictor = {}", self.predictor.name())?;
        for key in LATENCY_KEYS {
            writeln!(f, "latency.{key} = {}", self.latencies.get(key))?;
        }
        Ok(())
    }
}

fn format_ratio_decimal(r: Ratio<i64>) -> String {
    crate::features::format_ratio_6dp(r)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ModelError {}

/// Parse a machine-model file (`key = value` lines, `#` comments). Unset
/// keys keep their defaults.
pub fn parse_machine_model(text: &str) -> Result<MachineModel, ModelError> {
    let mut mm = MachineModel::default();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno as u32 + 1;
        let err = |message: String| ModelError {
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
        match key {
            "issue_width" => {
                let w: u64 = value
                    .parse()
                    .map_err(|_| err(format!("invalid width '{value}'")))?;
                if w == 0 {
                    return Err(err("issue_width must be at least 1".to_string()));
                }
                mm.issue_width = w;
            }
            "mispredict_penalty" => {
                mm.mispredict_penalty = value
                    .parse()
                    .map_err(|_| err(format!("invalid penalty '{value}'")))?;
            }
            "assumed_misrate" => {
                let r = parse_decimal_ratio(value)
                    .ok_or_else(|| err(format!("invalid rate '{value}'")))?;
                if r < Ratio::new(0, 1) || r > Ratio::new(1, 1) {
                    return Err(err(format!("assumed_misrate {value} outside [0,1]")));
                }
                mm.assumed_misrate = r;
            }
            "predictor" => {
                mm.predictor = PredictorKind::from_name(value)
                    .ok_or_else(|| err(format!("unknown predictor '{value}'")))?;
            }
            _ => {
                if let Some(mn) = key.strip_prefix("latency.") {
                    let lat: u64 = value
                        .parse()
                        .map_err(|_| err(format!("invalid latency '{value}'")))?;
                    mm.latencies.set(mn, lat).map_err(err)?;
                } else {
                    return Err(err(format!("unknown key '{key}'")));
                }
            }
        }
    }
    Ok(mm)
}

/// Parse "0.25" or "1" into an exact ratio.
pub fn parse_decimal_ratio(s: &str) -> Option<Ratio<i64>> {
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, s),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
        || frac_part.len() > 12
    {
        return None;
    }
    let int: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().ok()?
    };
    let den = 10i64.checked_pow(frac_part.len() as u32)?;
    let frac: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().ok()?
    };
    Some(Ratio::new(
        sign * (int.checked_mul(den)?.checked_add(frac)?),
        den,
    ))
}

/// Per-branch-site 2-bit saturating counters, initialized weakly not-taken.
/// Prediction is "taken" iff the counter is 2 or 3.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictorState {
    counters: BTreeMap<u32, u8>,
}

impl PredictorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counter(&self, site: u32) -> u8 {
        *self.counters.get(&site).unwrap_or(&1)
    }

    /// Predict from the pre-update counter, then move one step toward the
    /// actual outcome, saturating at 0 and 3.
    pub fn predict_and_update(&mut self, site: u32, outcome: bool) -> bool {
        let counter = self.counters.entry(site).or_insert(1);
        let prediction = *counter >= 2;
        if outcome {
            *counter = (*counter + 1).min(3);
        } else {
            *counter = counter.saturating_sub(1);
        }
        prediction
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub cycles: u64,
    pub dynamic_instructions: u64,
    pub branch_count: u64,
    pub mispredictions: u64,
    pub per_site_mispredictions: BTreeMap<u32, u64>,
}

impl SimResult {
    /// `metric,value` CSV rows (see the file-format notes in the README).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("cycles,{}\n", self.cycles));
        out.push_str(&format!(
            "dynamic_instructions,{}\n",
            self.dynamic_instructions
        ));
        out.push_str(&format!("branch_count,{}\n", self.branch_count));
        out.push_str(&format!("mispredictions,{}\n", self.mispredictions));
        for (site, count) in &self.per_site_mispredictions {
            out.push_str(&format!("mispredictions.b{site},{count}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Interp(InterpError),
    ZeroCycles,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Interp(e) => write!(f, "{e}"),
            SimError::ZeroCycles => write!(f, "cannot compute a speedup over zero cycles"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<InterpError> for SimError {
    fn from(e: InterpError) -> Self {
        SimError::Interp(e)
    }
}

/// Interpret `fn_name` and schedule its dynamic trace on the machine model.
pub fn simulate(
    module: &Module,
    fn_name: &str,
    inputs: &Inputs,
    mm: &MachineModel,
) -> Result<SimResult, SimError> {
    let exec = interpret(module, fn_name, inputs)?;
    let func = module.function(fn_name).expect("interpret found it");
    let lat = &mm.latencies;

    // Value readiness by SSA name. Anything never written (params, values
    // defined before the trace window) is ready at cycle 0.
    let mut ready: BTreeMap<&str, u64> = BTreeMap::new();
    let mut last_store_ready: BTreeMap<&str, u64> = BTreeMap::new();
    let mut predictor = PredictorState::new();

    let mut fetch_barrier = 0u64;
    let mut cur_cycle = 0u64;
    let mut issued_this_cycle = 0u64;
    let mut total_cycles = 0u64;
    let mut mispredictions = 0u64;
    let mut per_site: BTreeMap<u32, u64> = BTreeMap::new();
    let mut branch_cursor = 0usize;
    let mut prev_label: Option<&str> = None;

    let ready_of = |ready: &BTreeMap<&str, u64>, name: &str| *ready.get(name).unwrap_or(&0);

    enum Kind<'a> {
        Plain,
        Branch,
        Store(&'a str),
    }

    for entry in &exec.trace {
        let block = &func.blocks[entry.block as usize];
        let index = entry.index as usize;
        let phi_count = block.phis.len();
        let term_index = phi_count + block.body.len();

        // (operand readiness, mnemonic, result name, instruction kind)
        let (op_ready, mnemonic, result, kind): (u64, &str, Option<&str>, Kind) =
            if index < phi_count {
                let phi = &block.phis[index];
                let pred = prev_label.expect("phi cannot start the trace");
                let incoming = phi.incoming_for(pred).expect("validated phi");
                let r = match incoming {
                    crate::ir::Operand::Value(name) => ready_of(&ready, name),
                    crate::ir::Operand::Imm(_) => 0,
                };
                (r, "phi", Some(phi.result.as_str()), Kind::Plain)
            } else if index < term_index {
                let instr = &block.body[index - phi_count];
                let mut r = 0u64;
                for op in &instr.operands {
                    if let crate::ir::Operand::Value(name) = op {
                        r = r.max(ready_of(&ready, name));
                    }
                }
                let kind = match instr.op {
                    Opcode::Load => {
                        let mem = instr.mem.as_deref().unwrap();
                        r = r.max(*last_store_ready.get(mem).unwrap_or(&0));
                        Kind::Plain
                    }
                    Opcode::Store => {
                        let mem = instr.mem.as_deref().unwrap();
                        r = r.max(*last_store_ready.get(mem).unwrap_or(&0));
                        Kind::Store(mem)
                    }
                    _ => Kind::Plain,
                };
                (r, instr.op.mnemonic(), instr.result.as_deref(), kind)
            } else {
                match &block.terminator {
                    Terminator::Br { cond, .. } => {
                        let r = match cond {
                            crate::ir::Operand::Value(name) => ready_of(&ready, name),
                            crate::ir::Operand::Imm(_) => 0,
                        };
                        (r, "br", None, Kind::Branch)
                    }
                    Terminator::Jmp { .. } => (0, "jmp", None, Kind::Plain),
                    Terminator::Ret { value } => {
                        let r = match value {
                            crate::ir::Operand::Value(name) => ready_of(&ready, name),
                            crate::ir::Operand::Imm(_) => 0,
                        };
                        (r, "ret", None, Kind::Plain)
                    }
                }
            };

        // In-order issue: never before the previous instruction's cycle, the
        // fetch barrier, or operand readiness; at most issue_width per cycle.
        let earliest = op_ready.max(fetch_barrier);
        if earliest > cur_cycle {
            cur_cycle = earliest;
            issued_this_cycle = 0;
        }
        if issued_this_cycle == mm.issue_width {
            cur_cycle += 1;
            issued_this_cycle = 0;
        }
        let issue = cur_cycle;
        issued_this_cycle += 1;

        let latency = lat.get(mnemonic);
        total_cycles = total_cycles.max(issue + latency);
        if let Some(name) = result {
            ready.insert(name, issue + latency);
        }
        match kind {
            Kind::Store(mem) => {
                last_store_ready.insert(mem, issue + latency);
            }
            Kind::Branch => {
                let (site, outcome) = exec.branch_stream[branch_cursor];
                branch_cursor += 1;
                let prediction = match mm.predictor {
                    PredictorKind::TwoBit => predictor.predict_and_update(site, outcome),
                    PredictorKind::AlwaysTaken => true,
                    PredictorKind::Oracle => outcome,
                };
                if prediction != outcome {
                    mispredictions += 1;
                    *per_site.entry(site).or_insert(0) += 1;
                    fetch_barrier = fetch_barrier.max(issue + latency + mm.mispredict_penalty);
                }
            }
            Kind::Plain => {}
        }

        if index == term_index {
            prev_label = Some(block.label.as_str());
        }
    }

    Ok(SimResult {
        cycles: total_cycles,
        dynamic_instructions: exec.dyn_instr_count,
        branch_count: exec.branch_stream.len() as u64,
        mispredictions,
        per_site_mispredictions: per_site,
    })
}

/// Exact cycle ratio of `base` over `cand`; > 1 means `cand` is faster.
pub fn speedup(base: &SimResult, cand: &SimResult) -> Result<Ratio<u64>, SimError> {
    if base.cycles == 0 || cand.cycles == 0 {
        return Err(SimError::ZeroCycles);
    }
    Ok(Ratio::new(base.cycles, cand.cycles))
}
