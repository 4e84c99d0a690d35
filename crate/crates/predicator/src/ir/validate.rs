//! Structural and SSA validation. An empty diagnostic list means every
//! module/function invariant holds; the transforms and analyses assume a
//! clean module.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{Function, Module, Opcode, Operand, Terminator};

/// One validation finding: a stable rule id plus a human-readable location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: &'static str,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.location, self.rule, self.message)
    }
}

fn diag(rule: &'static str, location: String, message: String) -> Diagnostic {
    Diagnostic {
        rule,
        location,
        message,
    }
}

/// Check every invariant; returns an empty list iff the module is well formed.
pub fn validate_module(module: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut mem_names = HashSet::new();
    for mem in &module.memories {
        if !mem_names.insert(mem.name.as_str()) {
            out.push(diag(
                "dup-memory",
                format!("@{}", mem.name),
                format!("memory '@{}' declared more than once", mem.name),
            ));
        }
    }

    let mut fn_names = HashSet::new();
    for func in &module.functions {
        if !fn_names.insert(func.name.as_str()) {
            out.push(diag(
                "dup-function",
                format!("@{}", func.name),
                format!("function '@{}' defined more than once", func.name),
            ));
        }
        validate_function(module, func, &mut out);
    }

    out
}

fn validate_function(module: &Module, func: &Function, out: &mut Vec<Diagnostic>) {
    let loc = |detail: &str| format!("@{}:{}", func.name, detail);

    // Block label table; duplicates are normally caught at parse time but a
    // programmatically built function can still carry them.
    let mut label_index: HashMap<&str, usize> = HashMap::new();
    for (i, block) in func.blocks.iter().enumerate() {
        if label_index.insert(&block.label, i).is_some() {
            out.push(diag(
                "dup-label",
                loc(&block.label),
                format!("label '{}' defined more than once", block.label),
            ));
        }
    }
    if func.blocks.is_empty() {
        out.push(diag(
            "no-blocks",
            loc(""),
            "function has no blocks".to_string(),
        ));
        return;
    }

    // Referenced labels exist.
    let mut labels_ok = true;
    for block in &func.blocks {
        for succ in block.terminator.successors() {
            if !label_index.contains_key(succ) {
                labels_ok = false;
                out.push(diag(
                    "unknown-label",
                    loc(&block.label),
                    format!("terminator targets unknown label '{succ}'"),
                ));
            }
        }
    }

    // Single definition site per SSA name. Positions within a block are
    // 1-based so parameters (position 0 of the entry) precede everything.
    let mut defs: HashMap<&str, (usize, usize)> = HashMap::new(); // name -> (block, position)
    for param in &func.params {
        if defs.insert(param, (0, 0)).is_some() {
            out.push(diag(
                "ssa-unique-def",
                loc("params"),
                format!("value '%{param}' defined more than once"),
            ));
        }
    }
    for (bi, block) in func.blocks.iter().enumerate() {
        let mut names: Vec<(&str, usize)> = Vec::new();
        for (pi, phi) in block.phis.iter().enumerate() {
            names.push((&phi.result, pi + 1));
        }
        for (ii, instr) in block.body.iter().enumerate() {
            if let Some(r) = &instr.result {
                names.push((r, block.phis.len() + ii + 1));
            }
        }
        for (name, idx) in names {
            if defs.insert(name, (bi, idx)).is_some() {
                out.push(diag(
                    "ssa-unique-def",
                    loc(&block.label),
                    format!("value '%{name}' defined more than once"),
                ));
            }
        }
    }

    // Operand arity, memory references, result presence.
    for block in &func.blocks {
        for instr in &block.body {
            if instr.operands.len() != instr.op.arity() {
                out.push(diag(
                    "bad-arity",
                    loc(&block.label),
                    format!(
                        "'{}' takes {} operand(s), found {}",
                        instr.op,
                        instr.op.arity(),
                        instr.operands.len()
                    ),
                ));
            }
            if instr.op.has_result() != instr.result.is_some() {
                out.push(diag(
                    "bad-result",
                    loc(&block.label),
                    format!("'{}' result presence mismatch", instr.op),
                ));
            }
            match instr.op {
                Opcode::Load | Opcode::Store => match &instr.mem {
                    Some(m) if module.memory(m).is_some() => {}
                    Some(m) => out.push(diag(
                        "unknown-memory",
                        loc(&block.label),
                        format!("'{}' references undeclared memory '@{m}'", instr.op),
                    )),
                    None => out.push(diag(
                        "unknown-memory",
                        loc(&block.label),
                        format!("'{}' is missing its memory operand", instr.op),
                    )),
                },
                _ => {
                    if instr.mem.is_some() {
                        out.push(diag(
                            "bad-arity",
                            loc(&block.label),
                            format!("'{}' does not take a memory operand", instr.op),
                        ));
                    }
                }
            }
        }
    }

    if !labels_ok {
        return; // CFG-based checks need a consistent label table
    }

    // CFG predecessor sets (dedup: a two-way branch to one target is a single edge).
    let n = func.blocks.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (bi, block) in func.blocks.iter().enumerate() {
        let mut seen = HashSet::new();
        for succ in block.terminator.successors() {
            let si = label_index[succ];
            if seen.insert(si) {
                preds[si].push(bi);
            }
        }
    }

    // Phi entries: exactly one per predecessor.
    for (bi, block) in func.blocks.iter().enumerate() {
        let pred_labels: HashSet<&str> = preds[bi]
            .iter()
            .map(|&p| func.blocks[p].label.as_str())
            .collect();
        for phi in &block.phis {
            let mut seen: HashSet<&str> = HashSet::new();
            for (pred, _) in &phi.incomings {
                if !seen.insert(pred) {
                    out.push(diag(
                        "phi-pred-mismatch",
                        loc(&block.label),
                        format!("phi '%{}' has duplicate entry for '{pred}'", phi.result),
                    ));
                }
                if !pred_labels.contains(pred.as_str()) {
                    out.push(diag(
                        "phi-pred-mismatch",
                        loc(&block.label),
                        format!("phi '%{}' names non-predecessor '{pred}'", phi.result),
                    ));
                }
            }
            for pred in &pred_labels {
                if !phi.incomings.iter().any(|(p, _)| p == pred) {
                    out.push(diag(
                        "phi-pred-mismatch",
                        loc(&block.label),
                        format!(
                            "phi '%{}' is missing an entry for predecessor '{pred}'",
                            phi.result
                        ),
                    ));
                }
            }
        }
    }

    // Reachability: unreachable blocks are an error, not dead weight, so
    // branch-site numbering stays total.
    let mut reachable = vec![false; n];
    let mut stack = vec![0usize];
    reachable[0] = true;
    while let Some(b) = stack.pop() {
        for succ in func.blocks[b].terminator.successors() {
            let si = label_index[succ];
            if !reachable[si] {
                reachable[si] = true;
                stack.push(si);
            }
        }
    }
    let mut all_reachable = true;
    for (bi, block) in func.blocks.iter().enumerate() {
        if !reachable[bi] {
            all_reachable = false;
            out.push(diag(
                "unreachable",
                loc(&block.label),
                format!("block '{}' is unreachable from entry", block.label),
            ));
        }
    }

    if !all_reachable || out.iter().any(|d| d.rule == "ssa-unique-def") {
        return; // dominance below assumes reachable blocks and unique defs
    }

    // Dominance: every use must be dominated by its definition. Within one
    // block that means the def appears at a strictly earlier position (phis
    // define "at the top", before all body instructions).
    let dom = dominators(func, &preds);
    let dominates = |a: usize, b: usize| -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match dom[cur] {
                Some(next) => cur = next,
                None => return false,
            }
        }
    };

    let mut check_use = |name: &str, block: usize, index: usize, what: &str| match defs.get(name) {
        None => out.push(diag(
            "undefined-value",
            loc(&func.blocks[block].label),
            format!("{what} uses undefined value '%{name}'"),
        )),
        Some(&(db, di)) => {
            let ok = if db == block {
                di < index
            } else {
                dominates(db, block)
            };
            if !ok {
                out.push(diag(
                    "def-before-use",
                    loc(&func.blocks[block].label),
                    format!("{what} uses '%{name}' before its definition reaches it"),
                ));
            }
        }
    };

    for (bi, block) in func.blocks.iter().enumerate() {
        let phi_count = block.phis.len();
        for (ii, instr) in block.body.iter().enumerate() {
            for op in &instr.operands {
                if let Operand::Value(name) = op {
                    check_use(name, bi, phi_count + ii + 1, instr.op.mnemonic());
                }
            }
        }
        let term_index = phi_count + block.body.len() + 1;
        match &block.terminator {
            Terminator::Br { cond, .. } => {
                if let Operand::Value(name) = cond {
                    check_use(name, bi, term_index, "br");
                }
            }
            Terminator::Ret { value } => {
                if let Operand::Value(name) = value {
                    check_use(name, bi, term_index, "ret");
                }
            }
            Terminator::Jmp { .. } => {}
        }
        // A phi's incoming value must be live at the end of the predecessor.
        for phi in &block.phis {
            for (pred, val) in &phi.incomings {
                if let Operand::Value(name) = val {
                    if let Some(&pi) = label_index.get(pred.as_str()) {
                        check_use(name, pi, usize::MAX, "phi incoming");
                    }
                }
            }
        }
    }
}

/// Immediate dominators via the standard iterative fixpoint over a reverse
/// post-order. Entry maps to `None`. Assumes all blocks reachable.
pub(super) fn dominators(func: &Function, preds: &[Vec<usize>]) -> Vec<Option<usize>> {
    let n = func.blocks.len();
    let label_index: HashMap<&str, usize> = func
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();

    // Reverse post-order of a DFS over successors.
    let mut postorder = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    fn dfs(
        b: usize,
        func: &Function,
        label_index: &HashMap<&str, usize>,
        visited: &mut [bool],
        out: &mut Vec<usize>,
    ) {
        visited[b] = true;
        for succ in func.blocks[b].terminator.successors() {
            let si = label_index[succ];
            if !visited[si] {
                dfs(si, func, label_index, visited, out);
            }
        }
        out.push(b);
    }
    dfs(0, func, &label_index, &mut visited, &mut postorder);
    let mut rpo = postorder.clone();
    rpo.reverse();
    let mut rpo_number = vec![0usize; n];
    for (i, &b) in rpo.iter().enumerate() {
        rpo_number[b] = i;
    }

    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[0] = Some(0); // self-sentinel while iterating
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new_idom: Option<usize> = None;
            for &p in &preds[b] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(cur, p, &idom, &rpo_number),
                });
            }
            if let Some(ni) = new_idom {
                if idom[b] != Some(ni) {
                    idom[b] = Some(ni);
                    changed = true;
                }
            }
        }
    }
    idom[0] = None;
    idom
}

fn intersect(mut a: usize, mut b: usize, idom: &[Option<usize>], rpo_number: &[usize]) -> usize {
    while a != b {
        while rpo_number[a] > rpo_number[b] {
            a = idom[a].expect("walk cannot pass the entry");
        }
        while rpo_number[b] > rpo_number[a] {
            b = idom[b].expect("walk cannot pass the entry");
        }
    }
    a
}
