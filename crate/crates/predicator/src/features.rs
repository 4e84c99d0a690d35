//! Static per-candidate code features: critical paths, slack, ILP headroom,
//! issue depths and loop nesting, computed over dependence regions with
//! exact rational arithmetic.

use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::ifconv::Candidate;
use crate::ir::{CfgInfo, Function, Instruction, Module, Operand, Terminator};
use crate::sim::MachineModel;

/// One instruction inside a dependence region. `deps` are indices of earlier
/// region instructions whose results this one reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionInstr {
    pub result: Option<String>,
    pub mnemonic: &'static str,
    pub latency: u64,
    pub deps: Vec<usize>,
}

/// An acyclic dependence region, stored in topological order (every dep
/// index is smaller than its user's index).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Region {
    pub instrs: Vec<RegionInstr>,
}

impl Region {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Build a region from straight-line instructions; dependence edges come
    /// from operand names defined earlier in the same list.
    pub fn from_instructions(instrs: &[Instruction], mm: &MachineModel) -> Region {
        let mut region = Region::default();
        for instr in instrs {
            let deps = instr
                .operands
                .iter()
                .filter_map(|op| op.as_value())
                .filter_map(|name| region.def_index(name))
                .collect();
            region.instrs.push(RegionInstr {
                result: instr.result.clone(),
                mnemonic: instr.op.mnemonic(),
                latency: mm.latencies.op(instr.op),
                deps,
            });
        }
        region
    }

    pub fn def_index(&self, name: &str) -> Option<usize> {
        self.instrs
            .iter()
            .position(|ri| ri.result.as_deref() == Some(name))
    }

    /// Earliest start cycle per instruction under pure data dependence.
    pub fn asap(&self) -> Vec<u64> {
        let mut asap = vec![0u64; self.instrs.len()];
        for (i, instr) in self.instrs.iter().enumerate() {
            for &d in &instr.deps {
                asap[i] = asap[i].max(asap[d] + self.instrs[d].latency);
            }
        }
        asap
    }

    pub fn total_latency(&self) -> u64 {
        self.instrs.iter().map(|i| i.latency).sum()
    }
}

/// Length of the longest latency-weighted dependence chain; 0 for the empty
/// region.
pub fn region_critical_path(region: &Region) -> u64 {
    let asap = region.asap();
    region
        .instrs
        .iter()
        .zip(&asap)
        .map(|(instr, &start)| start + instr.latency)
        .max()
        .unwrap_or(0)
}

/// Per-instruction slack (latest minus earliest start against the region's
/// own critical path). Instructions on every critical path get 0.
pub fn region_slacks(region: &Region) -> Vec<u64> {
    let n = region.instrs.len();
    let asap = region.asap();
    let cp = region
        .instrs
        .iter()
        .zip(&asap)
        .map(|(instr, &start)| start + instr.latency)
        .max()
        .unwrap_or(0);
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, instr) in region.instrs.iter().enumerate() {
        for &d in &instr.deps {
            users[d].push(i);
        }
    }
    let mut alap = vec![0u64; n];
    for i in (0..n).rev() {
        let latest_finish = users[i].iter().map(|&u| alap[u]).min().unwrap_or(cp);
        alap[i] = latest_finish - region.instrs[i].latency;
    }
    (0..n).map(|i| alap[i] - asap[i]).collect()
}

/// Sum of slacks over the region.
pub fn slack_sum(region: &Region) -> u64 {
    region_slacks(region).iter().sum()
}

pub const FEATURE_COUNT: usize = 11;

/// Feature names in canonical (CSV header) order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "bb_size",
    "true_cp",
    "false_cp",
    "min_cp",
    "unexploited_ilp",
    "branch_depth",
    "loop_depth",
    "slack_sum",
    "max_depth",
    "true_bb_depth",
    "false_bb_depth",
];

/// The per-candidate feature vector. All fields are exact rationals; only
/// `unexploited_ilp` is ever non-integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    /// Instructions in the head block, phis and terminator included.
    pub bb_size: Ratio<i64>,
    /// Critical path of the true side block body (0 when absent).
    pub true_cp: Ratio<i64>,
    /// Critical path of the false side block body (0 when absent).
    pub false_cp: Ratio<i64>,
    /// min(true_cp, false_cp).
    pub min_cp: Ratio<i64>,
    /// Total latency of the merged region over its critical path.
    pub unexploited_ilp: Ratio<i64>,
    /// Earliest issue cycle of the branch condition's producer in the head.
    pub branch_depth: Ratio<i64>,
    /// Natural-loop nesting depth of the head block.
    pub loop_depth: Ratio<i64>,
    /// Total schedule slack of the merged region.
    pub slack_sum: Ratio<i64>,
    /// Per lowered select: slack + earliest start in the merged region (max).
    pub max_depth: Ratio<i64>,
    /// Depth of each phi's true incoming value in the true side, plus the
    /// select latency (max over phis).
    pub true_bb_depth: Ratio<i64>,
    /// Same for the false incoming values.
    pub false_bb_depth: Ratio<i64>,
}

impl FeatureVector {
    pub fn as_array(&self) -> [Ratio<i64>; FEATURE_COUNT] {
        [
            self.bb_size,
            self.true_cp,
            self.false_cp,
            self.min_cp,
            self.unexploited_ilp,
            self.branch_depth,
            self.loop_depth,
            self.slack_sum,
            self.max_depth,
            self.true_bb_depth,
            self.false_bb_depth,
        ]
    }

    pub fn csv_row(&self) -> String {
        let cells: Vec<String> = self
            .as_array()
            .iter()
            .map(|r| format_ratio_6dp(*r))
            .collect();
        cells.join(",")
    }
}

/// Eleven values scaled into the unit interval, same order as
/// [`FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedVector(pub [f64; FEATURE_COUNT]);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureError {
    NotLegal {
        head: String,
        reasons: Vec<&'static str>,
    },
    EmptyInput,
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::NotLegal { head, reasons } => {
                write!(
                    f,
                    "candidate at '{head}' is not legal ({})",
                    reasons.join(", ")
                )
            }
            FeatureError::EmptyInput => write!(f, "cannot normalize an empty feature list"),
        }
    }
}

impl std::error::Error for FeatureError {}

fn side_body<'f>(func: &'f Function, label: Option<&str>) -> &'f [Instruction] {
    match label.and_then(|l| func.block(l)) {
        Some(block) => &block.body,
        None => &[],
    }
}

/// The head body + both side bodies + the selects conversion would add, as
/// one dependence region. Select index k corresponds to join phi k.
pub fn merged_region(func: &Function, cand: &Candidate, mm: &MachineModel) -> Region {
    let head = func.block(&cand.head).expect("candidate head exists");
    let mut instrs: Vec<Instruction> = Vec::new();
    instrs.extend(head.body.iter().cloned());
    instrs.extend(side_body(func, cand.true_side.as_deref()).iter().cloned());
    instrs.extend(side_body(func, cand.false_side.as_deref()).iter().cloned());

    let cond = match &head.terminator {
        Terminator::Br { cond, .. } => cond.clone(),
        _ => Operand::Imm(0),
    };
    let join = func.block(&cand.join).expect("candidate join exists");
    for phi in &join.phis {
        let pick = |label: Option<&str>| -> Operand {
            let key = label.unwrap_or(cand.head.as_str());
            phi.incoming_for(key).cloned().unwrap_or(Operand::Imm(0))
        };
        let true_val = pick(cand.true_side.as_deref());
        let false_val = pick(cand.false_side.as_deref());
        instrs.push(Instruction::select(
            &phi.result,
            cond.clone(),
            true_val,
            false_val,
        ));
    }
    Region::from_instructions(&instrs, mm)
}

fn int(v: u64) -> Ratio<i64> {
    Ratio::from_integer(v as i64)
}

/// Compute the feature vector for a legal candidate.
pub fn extract_features(
    module: &Module,
    func: &Function,
    cand: &Candidate,
    mm: &MachineModel,
    cfg: &CfgInfo,
) -> Result<FeatureVector, FeatureError> {
    let legality = crate::ifconv::candidate_legality(module, func, cand);
    if !legality.legal() {
        return Err(FeatureError::NotLegal {
            head: cand.head.clone(),
            reasons: legality.reasons,
        });
    }

    let head_idx = func.block_index(&cand.head).expect("head exists");
    let head = &func.blocks[head_idx];

    let true_region = Region::from_instructions(side_body(func, cand.true_side.as_deref()), mm);
    let false_region = Region::from_instructions(side_body(func, cand.false_side.as_deref()), mm);
    let true_cp = int(region_critical_path(&true_region));
    let false_cp = int(region_critical_path(&false_region));

    let merged = merged_region(func, cand, mm);
    let merged_cp = region_critical_path(&merged);
    let merged_total = merged.total_latency();
    let unexploited_ilp = if merged_cp == 0 {
        Ratio::zero()
    } else {
        Ratio::new(merged_total as i64, merged_cp as i64)
    };

    // Earliest issue of the condition's producer within the head body.
    let head_region = Region::from_instructions(&head.body, mm);
    let branch_depth = match &head.terminator {
        Terminator::Br {
            cond: Operand::Value(name),
            ..
        } => head_region
            .def_index(name)
            .map(|i| int(head_region.asap()[i]))
            .unwrap_or_else(Ratio::zero),
        _ => Ratio::zero(),
    };

    // Select-derived depths over the merged region.
    let join = func.block(&cand.join).expect("join exists");
    let phi_count = join.phis.len();
    let select_base = merged.len() - phi_count;
    let merged_asap = merged.asap();
    let merged_slacks = region_slacks(&merged);
    let lat_select = mm.latencies.get("select");

    let mut max_depth = Ratio::zero();
    let mut true_bb_depth = Ratio::zero();
    let mut false_bb_depth = Ratio::zero();
    let true_asap = true_region.asap();
    let false_asap = false_region.asap();
    for (k, phi) in join.phis.iter().enumerate() {
        let si = select_base + k;
        max_depth = max_depth.max(int(merged_slacks[si] + merged_asap[si]));
        let side_depth = |region: &Region, asap: &[u64], label: Option<&str>| -> u64 {
            let key = label.unwrap_or(cand.head.as_str());
            match phi.incoming_for(key) {
                Some(Operand::Value(name)) => region.def_index(name).map(|i| asap[i]).unwrap_or(0),
                _ => 0,
            }
        };
        let td = int(side_depth(&true_region, &true_asap, cand.true_side.as_deref()) + lat_select);
        let fd =
            int(side_depth(&false_region, &false_asap, cand.false_side.as_deref()) + lat_select);
        true_bb_depth = true_bb_depth.max(td);
        false_bb_depth = false_bb_depth.max(fd);
    }

    Ok(FeatureVector {
        bb_size: int(head.instruction_count() as u64),
        true_cp,
        false_cp,
        min_cp: true_cp.min(false_cp),
        unexploited_ilp,
        branch_depth,
        loop_depth: int(cfg.loop_depth[head_idx] as u64),
        slack_sum: int(slack_sum(&merged)),
        max_depth,
        true_bb_depth,
        false_bb_depth,
    })
}

/// Min-max scale each feature across the whole candidate set; a feature that
/// is constant over the set maps to 0.
pub fn normalize_features(vs: &[FeatureVector]) -> Result<Vec<NormalizedVector>, FeatureError> {
    if vs.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let arrays: Vec<[Ratio<i64>; FEATURE_COUNT]> = vs.iter().map(|v| v.as_array()).collect();
    let mut out = vec![[0f64; FEATURE_COUNT]; vs.len()];
    for feat in 0..FEATURE_COUNT {
        let min = arrays.iter().map(|a| a[feat]).min().unwrap();
        let max = arrays.iter().map(|a| a[feat]).max().unwrap();
        if min == max {
            continue;
        }
        let span = max - min;
        for (row, a) in arrays.iter().enumerate() {
            let scaled = (a[feat] - min) / span;
            out[row][feat] = scaled.to_f64().expect("finite rational");
        }
    }
    Ok(out.into_iter().map(NormalizedVector).collect())
}

/// CSV with the canonical header, one row per candidate in index order.
pub fn features_csv(rows: &[FeatureVector]) -> String {
    let mut out = FEATURE_NAMES.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

/// Render an exact rational as a decimal with six fractional digits,
/// rounding half away from zero.
pub fn format_ratio_6dp(r: Ratio<i64>) -> String {
    let num = *r.numer() as i128;
    let den = *r.denom() as i128; // canonical form keeps the denominator positive
    let neg = num < 0;
    let scaled = num.unsigned_abs() * 1_000_000;
    let den = den.unsigned_abs();
    let mut q = scaled / den;
    if (scaled % den) * 2 >= den {
        q += 1;
    }
    let sign = if neg && q > 0 { "-" } else { "" };
    format!("{sign}{}.{:06}", q / 1_000_000, q % 1_000_000)
}
