//! If-conversion: candidate discovery (triangle/diamond branches), legality
//! checking, phi-to-select conversion, and bitmask-driven application.
//!
//! The candidate set is frozen against the original module: branch shapes
//! that only appear after inner conversions are not re-enumerated, which
//! keeps the bitmask length stable for the search. Legality is re-checked at
//! apply time anyway, on the partially converted function.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::Zero;

use crate::features::FeatureVector;
use crate::ir::{
    analyze_cfg, branch_sites, validate_module, CfgInfo, ExecResult, Function, InterpError, Module,
    Opcode, Operand, Terminator,
};
use crate::sim::MachineModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    TriangleTrue,
    TriangleFalse,
    Diamond,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::TriangleTrue => "triangle-true",
            Shape::TriangleFalse => "triangle-false",
            Shape::Diamond => "diamond",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One if-convertible branch. `index` is the bitmask position; for
/// module-level discovery both `index` and `branch_site` are global
/// (functions concatenated in order, dominator-tree post-order within each).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub index: usize,
    pub branch_site: u32,
    pub shape: Shape,
    pub function: String,
    pub head: String,
    pub true_side: Option<String>,
    pub false_side: Option<String>,
    pub join: String,
    /// Join phis that the conversion lowers to selects.
    pub phis: Vec<String>,
}

/// Why a branch is (not) convertible. `legal` holds iff `reasons` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Legality {
    pub reasons: Vec<&'static str>,
}

impl Legality {
    pub fn legal(&self) -> bool {
        self.reasons.is_empty()
    }
}

pub const REASON_CRITICAL_EDGE: &str = "critical-edge";
pub const REASON_MULTI_PRED: &str = "multi-pred";
pub const REASON_SIDE_EFFECT: &str = "side-effect";
pub const REASON_SPECULATION_UNSAFE: &str = "speculation-unsafe";
pub const REASON_PHI_NOT_SELECTABLE: &str = "phi-not-selectable";

/// Convert/keep decisions, one bit per candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmask {
    pub bits: Vec<bool>,
}

impl Bitmask {
    pub fn zeros(n: usize) -> Self {
        Bitmask {
            bits: vec![false; n],
        }
    }

    pub fn ones(n: usize) -> Self {
        Bitmask {
            bits: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bitmask for `value` over `n` candidates; candidate 0 is the most
    /// significant character of the printed mask, so enumerating values
    /// 0..2^n walks masks in ascending binary (string) order.
    pub fn from_value(value: u64, n: usize) -> Self {
        let bits = (0..n).map(|i| (value >> (n - 1 - i)) & 1 == 1).collect();
        Bitmask { bits }
    }
}

impl fmt::Display for Bitmask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitmask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => return Err(format!("bitmask may only contain 0/1, found '{other}'")),
            }
        }
        Ok(Bitmask { bits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Converted,
    SkippedBitZero,
    SkippedBecameIllegal,
}

impl ApplyOutcome {
    pub fn name(self) -> &'static str {
        match self {
            ApplyOutcome::Converted => "converted",
            ApplyOutcome::SkippedBitZero => "skipped-bit-0",
            ApplyOutcome::SkippedBecameIllegal => "skipped-became-illegal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyRow {
    pub index: usize,
    pub branch_site: u32,
    pub bit: bool,
    pub outcome: ApplyOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ApplyReport {
    pub rows: Vec<ApplyRow>,
    pub converted: usize,
}

impl ApplyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,branch_site,bit,outcome\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},b{},{},{}\n",
                row.index,
                row.branch_site,
                row.bit as u8,
                row.outcome.name()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IfconvError {
    UnknownBranchSite(u32),
    LengthMismatch {
        expected: usize,
        actual: usize,
    },
    LegalityViolated {
        head: String,
        reasons: Vec<&'static str>,
    },
    InvalidModule(String),
}

impl fmt::Display for IfconvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IfconvError::UnknownBranchSite(site) => write!(f, "unknown branch site b{site}"),
            IfconvError::LengthMismatch { expected, actual } => {
                write!(
                    f,
                    "bitmask length mismatch: expected {expected}, got {actual}"
                )
            }
            IfconvError::LegalityViolated { head, reasons } => {
                write!(f, "legality violated at '{head}'")?;
                if !reasons.is_empty() {
                    write!(f, " ({})", reasons.join(", "))?;
                }
                Ok(())
            }
            IfconvError::InvalidModule(msg) => write!(f, "invalid module: {msg}"),
        }
    }
}

impl std::error::Error for IfconvError {}

/// Detected reconvergent shape, in block indices of the inspected function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ShapeInfo {
    shape: Shape,
    true_side: Option<usize>,
    false_side: Option<usize>,
    join: usize,
}

fn block_preds(func: &Function) -> Vec<Vec<usize>> {
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); func.blocks.len()];
    for (bi, block) in func.blocks.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for succ in block.terminator.successors() {
            if let Some(si) = func.block_index(succ) {
                if seen.insert(si) {
                    preds[si].push(bi);
                }
            }
        }
    }
    preds
}

fn jmp_target(func: &Function, block: usize) -> Option<usize> {
    match &func.blocks[block].terminator {
        Terminator::Jmp { target } => func.block_index(target),
        _ => None,
    }
}

fn detect_shape(func: &Function, head: usize) -> Option<ShapeInfo> {
    let (then_label, else_label) = match &func.blocks[head].terminator {
        Terminator::Br {
            then_label,
            else_label,
            ..
        } => (then_label, else_label),
        _ => return None,
    };
    let t = func.block_index(then_label)?;
    let f = func.block_index(else_label)?;
    if t == f || t == head || f == head {
        return None;
    }

    // Diamond: both successors are single blocks that meet at one join.
    if let (Some(jt), Some(jf)) = (jmp_target(func, t), jmp_target(func, f)) {
        if jt == jf && jt != head && jt != t && jt != f {
            return Some(ShapeInfo {
                shape: Shape::Diamond,
                true_side: Some(t),
                false_side: Some(f),
                join: jt,
            });
        }
    }
    // Triangle: one successor falls straight through to the other.
    if jmp_target(func, t) == Some(f) {
        return Some(ShapeInfo {
            shape: Shape::TriangleTrue,
            true_side: Some(t),
            false_side: None,
            join: f,
        });
    }
    if jmp_target(func, f) == Some(t) {
        return Some(ShapeInfo {
            shape: Shape::TriangleFalse,
            true_side: None,
            false_side: Some(f),
            join: t,
        });
    }
    None
}

/// A side block is speculatable when every instruction is safe to execute
/// unconditionally: no stores, no trapping div/rem, and loads only from a
/// constant in-range index.
fn side_block_reasons(module: &Module, func: &Function, side: usize, out: &mut Vec<&'static str>) {
    let block = &func.blocks[side];
    if !block.phis.is_empty() {
        out.push(REASON_PHI_NOT_SELECTABLE);
    }
    for instr in &block.body {
        match instr.op {
            Opcode::Store => out.push(REASON_SIDE_EFFECT),
            Opcode::Div | Opcode::Rem => {
                // A nonzero constant divisor cannot trap.
                match instr.operands.get(1) {
                    Some(Operand::Imm(v)) if *v != 0 => {}
                    _ => out.push(REASON_SPECULATION_UNSAFE),
                }
            }
            Opcode::Load => {
                let in_range = match (instr.operands.first(), &instr.mem) {
                    (Some(Operand::Imm(idx)), Some(mem)) => module
                        .memory(mem)
                        .is_some_and(|decl| *idx >= 0 && (*idx as u64) < decl.len),
                    _ => false,
                };
                if !in_range {
                    out.push(REASON_SPECULATION_UNSAFE);
                }
            }
            _ => {}
        }
    }
}

fn legality_for_head(
    module: &Module,
    func: &Function,
    head: usize,
) -> (Legality, Option<ShapeInfo>) {
    let mut reasons = Vec::new();
    let Some(info) = detect_shape(func, head) else {
        // Not a one-step reconvergent shape; converting would need critical
        // edge splitting, which the pass avoids by construction.
        return (
            Legality {
                reasons: vec![REASON_CRITICAL_EDGE],
            },
            None,
        );
    };
    let preds = block_preds(func);

    let sides: Vec<usize> = [info.true_side, info.false_side]
        .into_iter()
        .flatten()
        .collect();
    for &side in &sides {
        if preds[side] != vec![head] {
            reasons.push(REASON_MULTI_PRED);
        }
    }
    // The join must merge exactly this shape's edges, otherwise its phis do
    // not lower to a single select.
    let expected: BTreeSet<usize> = match info.shape {
        Shape::Diamond => sides.iter().copied().collect(),
        _ => sides.iter().copied().chain([head]).collect(),
    };
    let actual: BTreeSet<usize> = preds[info.join].iter().copied().collect();
    if actual != expected {
        reasons.push(REASON_MULTI_PRED);
    }
    for &side in &sides {
        side_block_reasons(module, func, side, &mut reasons);
    }
    reasons.dedup();
    (Legality { reasons }, Some(info))
}

/// Candidates of one function, enumerated in dominator-tree post-order of
/// their head blocks (inner before outer). Both `index` and `branch_site`
/// are local to the function here.
pub fn find_candidates(module: &Module, func: &Function, cfg: &CfgInfo) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (site, &head) in branch_sites(func, cfg).iter().enumerate() {
        let (legality, info) = legality_for_head(module, func, head);
        let Some(info) = info else { continue };
        if !legality.legal() {
            continue;
        }
        let label = |b: usize| func.blocks[b].label.clone();
        out.push(Candidate {
            index: out.len(),
            branch_site: site as u32,
            shape: info.shape,
            function: func.name.clone(),
            head: label(head),
            true_side: info.true_side.map(label),
            false_side: info.false_side.map(label),
            join: label(info.join),
            phis: func.blocks[info.join]
                .phis
                .iter()
                .map(|p| p.result.clone())
                .collect(),
        });
    }
    out
}

/// Legality of converting the branch at `branch_site` (function-local site
/// numbering, dominator-tree post-order).
pub fn check_legality(
    module: &Module,
    func: &Function,
    branch_site: u32,
) -> Result<Legality, IfconvError> {
    let cfg = analyze_cfg(func).map_err(|e| IfconvError::InvalidModule(e.to_string()))?;
    let sites = branch_sites(func, &cfg);
    let &head = sites
        .get(branch_site as usize)
        .ok_or(IfconvError::UnknownBranchSite(branch_site))?;
    Ok(legality_for_head(module, func, head).0)
}

/// Legality of a (possibly stale) candidate against the current function,
/// located by its head label.
pub fn candidate_legality(module: &Module, func: &Function, cand: &Candidate) -> Legality {
    match func.block_index(&cand.head) {
        Some(head) => legality_for_head(module, func, head).0,
        None => Legality {
            reasons: vec![REASON_CRITICAL_EDGE],
        },
    }
}

/// All candidates of a module with global bitmask indices and branch-site
/// ids: functions in order, post-order within each function.
pub fn module_candidates(module: &Module) -> Result<Vec<Candidate>, IfconvError> {
    let diags = validate_module(module);
    if !diags.is_empty() {
        return Err(IfconvError::InvalidModule(diags[0].to_string()));
    }
    let mut out = Vec::new();
    let mut site_base = 0u32;
    for func in &module.functions {
        let cfg = analyze_cfg(func).map_err(|e| IfconvError::InvalidModule(e.to_string()))?;
        let idx_base = out.len();
        for mut c in find_candidates(module, func, &cfg) {
            c.index += idx_base;
            c.branch_site += site_base;
            out.push(c);
        }
        site_base += branch_sites(func, &cfg).len() as u32;
    }
    Ok(out)
}

/// Convert one candidate: hoist the side bodies into the head (true side
/// first), lower each join phi to a select on the branch condition, retarget
/// the head to the join, and delete the emptied side blocks. Refuses without
/// modifying anything if legality no longer holds.
pub fn convert_candidate(
    module: &Module,
    func: &Function,
    cand: &Candidate,
) -> Result<Function, IfconvError> {
    let head = func
        .block_index(&cand.head)
        .ok_or_else(|| IfconvError::LegalityViolated {
            head: cand.head.clone(),
            reasons: vec![REASON_CRITICAL_EDGE],
        })?;
    let (legality, info) = legality_for_head(module, func, head);
    let Some(info) = info else {
        return Err(IfconvError::LegalityViolated {
            head: cand.head.clone(),
            reasons: legality.reasons,
        });
    };
    if !legality.legal() {
        return Err(IfconvError::LegalityViolated {
            head: cand.head.clone(),
            reasons: legality.reasons,
        });
    }
    // A stale candidate (the function changed since discovery) must not be
    // applied against a different shape.
    let label = |b: usize| func.blocks[b].label.as_str();
    let matches = info.shape == cand.shape
        && info.true_side.map(label) == cand.true_side.as_deref()
        && info.false_side.map(label) == cand.false_side.as_deref()
        && label(info.join) == cand.join;
    if !matches {
        return Err(IfconvError::LegalityViolated {
            head: cand.head.clone(),
            reasons: vec![REASON_CRITICAL_EDGE],
        });
    }

    let cond = match &func.blocks[head].terminator {
        Terminator::Br { cond, .. } => cond.clone(),
        _ => unreachable!("shape detection saw a br"),
    };
    let join = info.join;
    let head_label = cand.head.clone();
    let join_label = cand.join.clone();

    let mut new_func = func.clone();

    // Hoist side bodies in original order, true side first.
    let mut hoisted = Vec::new();
    if let Some(t) = info.true_side {
        hoisted.extend(func.blocks[t].body.iter().cloned());
    }
    if let Some(fside) = info.false_side {
        hoisted.extend(func.blocks[fside].body.iter().cloned());
    }

    // One select per join phi, in phi order.
    let mut selects = Vec::new();
    for phi in &func.blocks[join].phis {
        let take = |from: Option<usize>| -> Operand {
            let key = from.map(label).unwrap_or(head_label.as_str());
            phi.incoming_for(key).expect("validated phi entry").clone()
        };
        let true_val = take(info.true_side);
        let false_val = take(info.false_side);
        selects.push(crate::ir::Instruction::select(
            &phi.result,
            cond.clone(),
            true_val,
            false_val,
        ));
    }

    {
        let head_block = &mut new_func.blocks[head];
        head_block.body.extend(hoisted);
        head_block.body.extend(selects);
        head_block.terminator = Terminator::Jmp { target: join_label };
    }
    new_func.blocks[join].phis.clear();

    let dead: BTreeSet<usize> = [info.true_side, info.false_side]
        .into_iter()
        .flatten()
        .collect();
    let mut idx = 0usize;
    new_func.blocks.retain(|_| {
        let keep = !dead.contains(&idx);
        idx += 1;
        keep
    });

    Ok(new_func)
}

/// Apply a bitmask over the module's (frozen) candidate set. Candidates are
/// processed in index order, re-checking legality against the current state
/// of each function.
pub fn apply_bitmask(
    module: &Module,
    mask: &Bitmask,
) -> Result<(Module, ApplyReport), IfconvError> {
    let candidates = module_candidates(module)?;
    if mask.len() != candidates.len() {
        return Err(IfconvError::LengthMismatch {
            expected: candidates.len(),
            actual: mask.len(),
        });
    }
    let mut out = module.clone();
    let mut report = ApplyReport::default();
    for cand in &candidates {
        let bit = mask.bits[cand.index];
        let outcome = if !bit {
            ApplyOutcome::SkippedBitZero
        } else {
            let fi = out
                .functions
                .iter()
                .position(|f| f.name == cand.function)
                .expect("candidate function exists");
            match convert_candidate(&out, &out.functions[fi], cand) {
                Ok(new_func) => {
                    out.functions[fi] = new_func;
                    report.converted += 1;
                    ApplyOutcome::Converted
                }
                Err(IfconvError::LegalityViolated { .. }) => ApplyOutcome::SkippedBecameIllegal,
                Err(other) => return Err(other),
            }
        };
        report.rows.push(ApplyRow {
            index: cand.index,
            branch_site: cand.branch_site,
            bit,
            outcome,
        });
    }
    Ok((out, report))
}

/// The built-in profitability heuristic the tuner is measured against.
///
/// Convert iff (1) the merged-region critical path extends the longer
/// original side by at most half the misprediction penalty, and (2) the
/// assumed-misrate share of the penalty covers the cost of the nullified
/// side, estimated as the shortest nonzero side critical path spread over
/// the issue width.
pub fn baseline_decide(fv: &FeatureVector, mm: &MachineModel) -> bool {
    let lat_select = Ratio::from_integer(mm.latencies.get("select") as i64);
    let penalty = Ratio::from_integer(mm.mispredict_penalty as i64);
    let width = Ratio::from_integer(mm.issue_width as i64);

    // The merged critical path is recoverable from the select's slack+depth
    // feature: for a sink select, slack + asap = cp - latency.
    let merged_cp = fv.max_depth + lat_select;
    let max_side = fv.true_cp + fv.false_cp - fv.min_cp;
    let cp_extension = merged_cp - max_side;
    let fits_penalty = cp_extension <= penalty / Ratio::from_integer(2);

    let nullified_lat = if fv.min_cp > Ratio::zero() {
        fv.min_cp
    } else {
        max_side
    };
    let nullified_cost = nullified_lat / width;
    let worth_the_risk = mm.assumed_misrate * penalty >= nullified_cost;

    fits_penalty && worth_the_risk
}

/// Observable behavior equality: same return value, same final memory, and
/// the same dynamic side-effect sequence; traps must agree in kind and in
/// the state reached before trapping.
pub fn same_observable_behavior(
    a: &Result<ExecResult, InterpError>,
    b: &Result<ExecResult, InterpError>,
) -> bool {
    match (a, b) {
        (Ok(ra), Ok(rb)) => {
            ra.ret == rb.ret && ra.memories == rb.memories && ra.stores == rb.stores
        }
        (
            Err(InterpError::Trap {
                kind: ka,
                partial: pa,
                ..
            }),
            Err(InterpError::Trap {
                kind: kb,
                partial: pb,
                ..
            }),
        ) => ka == kb && pa.memories == pb.memories && pa.stores == pb.stores,
        (Err(ea), Err(eb)) => ea == eb,
        _ => false,
    }
}
