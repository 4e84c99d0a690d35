//! CFG analyses: predecessors/successors, immediate dominators, the
//! dominator-tree post-order used for branch-site numbering, and natural-loop
//! nesting depths.

use std::collections::HashMap;
use std::fmt;

use super::validate::dominators;
use super::{Function, Module, Terminator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgError {
    pub function: String,
    pub block: String,
    pub message: String,
}

impl fmt::Display for CfgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}:{}: {}", self.function, self.block, self.message)
    }
}

impl std::error::Error for CfgError {}

/// Per-function CFG facts. Blocks are identified by their index in
/// `Function::blocks`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgInfo {
    /// Predecessor sets (deduplicated; a br with both edges to one target
    /// counts as a single predecessor).
    pub preds: Vec<Vec<usize>>,
    /// Successors in terminator order (then-edge first).
    pub succs: Vec<Vec<usize>>,
    /// Immediate dominator per block; `None` exactly for the entry.
    pub idom: Vec<Option<usize>>,
    /// Dominator-tree post-order. Children of each tree node are visited in
    /// block-list order, so the then-side of a branch comes first when it
    /// precedes the other successor in the layout.
    pub dom_postorder: Vec<usize>,
    /// Natural-loop nesting depth per block (entry is 0 unless it heads a loop).
    pub loop_depth: Vec<u32>,
}

impl CfgInfo {
    /// Position of each block within `dom_postorder`.
    pub fn postorder_position(&self) -> Vec<usize> {
        let mut pos = vec![0usize; self.dom_postorder.len()];
        for (i, &b) in self.dom_postorder.iter().enumerate() {
            pos[b] = i;
        }
        pos
    }

    pub fn dominates(&self, a: usize, b: usize) -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(next) => cur = next,
                None => return false,
            }
        }
    }
}

/// Compute `CfgInfo` for a validated function. Unreachable blocks are
/// rejected rather than skipped so that analyses stay total.
pub fn analyze_cfg(func: &Function) -> Result<CfgInfo, CfgError> {
    let n = func.blocks.len();
    let label_index: HashMap<&str, usize> = func
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();

    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (bi, block) in func.blocks.iter().enumerate() {
        for succ in block.terminator.successors() {
            let si = *label_index.get(succ).ok_or_else(|| CfgError {
                function: func.name.clone(),
                block: block.label.clone(),
                message: format!("unknown label '{succ}'"),
            })?;
            succs[bi].push(si);
            if !preds[si].contains(&bi) {
                preds[si].push(bi);
            }
        }
    }

    // Reachability; unreachable code is an analysis error by design.
    let mut reachable = vec![false; n];
    let mut stack = vec![0usize];
    reachable[0] = true;
    while let Some(b) = stack.pop() {
        for &s in &succs[b] {
            if !reachable[s] {
                reachable[s] = true;
                stack.push(s);
            }
        }
    }
    if let Some(bi) = (0..n).find(|&b| !reachable[b]) {
        return Err(CfgError {
            function: func.name.clone(),
            block: func.blocks[bi].label.clone(),
            message: "unreachable block".to_string(),
        });
    }

    let idom = dominators(func, &preds);

    // Dominator tree children, ordered by block index for determinism.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (b, d) in idom.iter().enumerate().skip(1) {
        if let Some(d) = d {
            children[*d].push(b);
        }
    }
    for kids in &mut children {
        kids.sort_unstable();
    }
    let mut dom_postorder = Vec::with_capacity(n);
    let mut walk = vec![(0usize, 0usize)]; // (node, next child cursor)
    while let Some((node, cursor)) = walk.pop() {
        if cursor < children[node].len() {
            walk.push((node, cursor + 1));
            walk.push((children[node][cursor], 0));
        } else {
            dom_postorder.push(node);
        }
    }

    let info = CfgInfo {
        preds,
        succs,
        idom,
        dom_postorder,
        loop_depth: vec![0; n],
    };
    let loop_depth = natural_loop_depths(&info, n);
    Ok(CfgInfo { loop_depth, ..info })
}

/// A block's loop depth is the number of natural-loop headers whose (merged)
/// loop body contains it. Back edges are edges to a dominator; loops sharing
/// a header are merged.
fn natural_loop_depths(cfg: &CfgInfo, n: usize) -> Vec<u32> {
    let mut headers: Vec<usize> = Vec::new();
    let mut loop_bodies: HashMap<usize, Vec<bool>> = HashMap::new();
    for b in 0..n {
        for &s in &cfg.succs[b] {
            if cfg.dominates(s, b) {
                // Back edge b -> s. Natural loop: s plus everything that
                // reaches b without passing through s.
                let body = loop_bodies.entry(s).or_insert_with(|| {
                    headers.push(s);
                    vec![false; n]
                });
                if !body[s] {
                    body[s] = true;
                }
                let mut stack = vec![b];
                while let Some(x) = stack.pop() {
                    if body[x] {
                        continue;
                    }
                    body[x] = true;
                    for &p in &cfg.preds[x] {
                        if !body[p] {
                            stack.push(p);
                        }
                    }
                }
            }
        }
    }
    let mut depth = vec![0u32; n];
    for header in headers {
        let body = &loop_bodies[&header];
        for b in 0..n {
            if body[b] {
                depth[b] += 1;
            }
        }
    }
    depth
}

/// Branch sites of one function: the blocks ending in `br`, in dominator-tree
/// post-order. The returned vector maps local site index -> block index.
pub fn branch_sites(func: &Function, cfg: &CfgInfo) -> Vec<usize> {
    cfg.dom_postorder
        .iter()
        .copied()
        .filter(|&b| matches!(func.blocks[b].terminator, Terminator::Br { .. }))
        .collect()
}

/// Global branch-site numbering: function order first, dominator-tree
/// post-order within each function. Returns, per function, the block indices
/// of its sites plus that function's starting global site id.
pub fn module_branch_sites(module: &Module) -> Result<Vec<(u32, Vec<usize>)>, CfgError> {
    let mut out = Vec::with_capacity(module.functions.len());
    let mut next = 0u32;
    for func in &module.functions {
        let cfg = analyze_cfg(func)?;
        let sites = branch_sites(func, &cfg);
        let base = next;
        next += sites.len() as u32;
        out.push((base, sites));
    }
    Ok(out)
}
