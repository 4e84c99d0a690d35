//! Reference interpreter. Produces the program result plus the dynamic
//! artifacts the cost model consumes: a full instruction trace and the
//! per-site branch outcome stream.
//!
//! Semantics: wrapping two's-complement 64-bit arithmetic, trapping div/rem
//! by zero, trapping out-of-bounds memory access, select evaluates both
//! value operands and picks by condition != 0, and a step budget guards
//! against runaway loops.

use std::collections::BTreeMap;
use std::fmt;

use super::{module_branch_sites, Function, Inputs, Module, Opcode, Operand, Terminator};

/// Default dynamic-instruction budget; tuning runs thousands of simulations,
/// so fitness evaluation must stay bounded.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

/// What one dynamic instruction was. `block`/`index` identify the static
/// instruction (phis first, then body, terminator last); `operands` holds the
/// evaluated operand values in instruction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub block: u32,
    pub index: u32,
    pub values_start: u32,
    pub values_len: u32,
}

/// One store side effect, in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreEvent {
    pub mem: String,
    pub index: u64,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    pub ret: i64,
    pub memories: BTreeMap<String, Vec<i64>>,
    pub trace: Vec<TraceEntry>,
    /// Flat pool backing `TraceEntry::values_*`.
    pub trace_values: Vec<i64>,
    /// (global branch-site id, taken) per dynamic `br`.
    pub branch_stream: Vec<(u32, bool)>,
    pub stores: Vec<StoreEvent>,
    pub dyn_instr_count: u64,
}

impl ExecResult {
    pub fn operand_values(&self, entry: &TraceEntry) -> &[i64] {
        let start = entry.values_start as usize;
        &self.trace_values[start..start + entry.values_len as usize]
    }
}

/// Everything observed before a trap — the trace prefix plus the state it
/// reached — for error reporting and for checking that transforms preserve
/// trap behavior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecPartial {
    pub memories: BTreeMap<String, Vec<i64>>,
    pub stores: Vec<StoreEvent>,
    pub branch_stream: Vec<(u32, bool)>,
    pub trace: Vec<TraceEntry>,
    pub trace_values: Vec<i64>,
    pub dyn_instr_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrapKind {
    DivByZero,
    OutOfBounds { mem: String, index: i64, len: u64 },
    StepBudget { budget: u64 },
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrapKind::DivByZero => write!(f, "division by zero"),
            TrapKind::OutOfBounds { mem, index, len } => {
                write!(f, "memory '@{mem}' index {index} out of bounds (len {len})")
            }
            TrapKind::StepBudget { budget } => {
                write!(f, "step budget {budget} exceeded: nontermination suspected")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterpError {
    UnknownFunction(String),
    MissingParam {
        function: String,
        param: String,
    },
    InitializerTooLong {
        mem: String,
        init_len: u64,
        mem_len: u64,
    },
    UnknownMemory(String),
    Trap {
        kind: TrapKind,
        function: String,
        block: String,
        partial: Box<ExecPartial>,
    },
}

impl fmt::Display for InterpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterpError::UnknownFunction(name) => write!(f, "unknown function '@{name}'"),
            InterpError::MissingParam { function, param } => {
                write!(f, "no value for parameter '%{param}' of '@{function}'")
            }
            InterpError::InitializerTooLong {
                mem,
                init_len,
                mem_len,
            } => write!(
                f,
                "initializer for '@{mem}' has {init_len} cells but the memory holds {mem_len}"
            ),
            InterpError::UnknownMemory(name) => {
                write!(f, "inputs initialize undeclared memory '@{name}'")
            }
            InterpError::Trap {
                kind,
                function,
                block,
                ..
            } => {
                write!(f, "trap in @{function}:{block}: {kind}")
            }
        }
    }
}

impl std::error::Error for InterpError {}

impl InterpError {
    pub fn trap_kind(&self) -> Option<&TrapKind> {
        match self {
            InterpError::Trap { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

struct Machine<'m> {
    func: &'m Function,
    values: BTreeMap<&'m str, i64>,
    memories: BTreeMap<String, Vec<i64>>,
    trace: Vec<TraceEntry>,
    trace_values: Vec<i64>,
    branch_stream: Vec<(u32, bool)>,
    stores: Vec<StoreEvent>,
    steps: u64,
    budget: u64,
}

impl<'m> Machine<'m> {
    fn partial(&self) -> Box<ExecPartial> {
        Box::new(ExecPartial {
            memories: self.memories.clone(),
            stores: self.stores.clone(),
            branch_stream: self.branch_stream.clone(),
            trace: self.trace.clone(),
            trace_values: self.trace_values.clone(),
            dyn_instr_count: self.steps,
        })
    }

    fn trap(&self, kind: TrapKind, block: &str) -> InterpError {
        InterpError::Trap {
            kind,
            function: self.func.name.clone(),
            block: block.to_string(),
            partial: self.partial(),
        }
    }

    fn operand(&self, op: &Operand) -> i64 {
        match op {
            Operand::Imm(v) => *v,
            Operand::Value(name) => *self
                .values
                .get(name.as_str())
                .expect("validated module: every use has a reaching def"),
        }
    }

    fn record(&mut self, block: usize, index: usize, values: &[i64]) {
        let start = self.trace_values.len() as u32;
        self.trace_values.extend_from_slice(values);
        self.trace.push(TraceEntry {
            block: block as u32,
            index: index as u32,
            values_start: start,
            values_len: values.len() as u32,
        });
        self.steps += 1;
    }
}

/// Execute `fn_name` with the given inputs. The module must validate cleanly.
pub fn interpret(
    module: &Module,
    fn_name: &str,
    inputs: &Inputs,
) -> Result<ExecResult, InterpError> {
    interpret_with_budget(module, fn_name, inputs, DEFAULT_STEP_BUDGET)
}

pub fn interpret_with_budget(
    module: &Module,
    fn_name: &str,
    inputs: &Inputs,
    budget: u64,
) -> Result<ExecResult, InterpError> {
    let func = module
        .function(fn_name)
        .ok_or_else(|| InterpError::UnknownFunction(fn_name.to_string()))?;

    let mut memories = BTreeMap::new();
    for decl in &module.memories {
        memories.insert(decl.name.clone(), vec![0i64; decl.len as usize]);
    }
    for (name, init) in &inputs.mems {
        let decl = module
            .memory(name)
            .ok_or_else(|| InterpError::UnknownMemory(name.clone()))?;
        if init.declared_len() > decl.len {
            return Err(InterpError::InitializerTooLong {
                mem: name.clone(),
                init_len: init.declared_len(),
                mem_len: decl.len,
            });
        }
        memories.insert(name.clone(), init.materialize(decl.len));
    }

    let mut values: BTreeMap<&str, i64> = BTreeMap::new();
    for param in &func.params {
        let v = inputs
            .params
            .get(param)
            .ok_or_else(|| InterpError::MissingParam {
                function: func.name.clone(),
                param: param.clone(),
            })?;
        values.insert(param, *v);
    }

    // Global site ids for this function's branches.
    let all_sites =
        module_branch_sites(module).map_err(|e| InterpError::UnknownFunction(e.function))?;
    let fn_index = module
        .functions
        .iter()
        .position(|f| f.name == fn_name)
        .unwrap();
    let (site_base, site_blocks) = &all_sites[fn_index];
    let mut site_of_block: BTreeMap<usize, u32> = BTreeMap::new();
    for (i, &b) in site_blocks.iter().enumerate() {
        site_of_block.insert(b, site_base + i as u32);
    }

    let mut mc = Machine {
        func,
        values,
        memories,
        trace: Vec::new(),
        trace_values: Vec::new(),
        branch_stream: Vec::new(),
        stores: Vec::new(),
        steps: 0,
        budget,
    };

    let mut block_idx = 0usize;
    let mut prev_label: Option<&str> = None;
    loop {
        let block = &func.blocks[block_idx];

        // Parallel phi semantics: read all incomings before writing any.
        if !block.phis.is_empty() {
            let pred = prev_label.expect("entry block has no phis in a validated module");
            let mut incoming: Vec<(&str, i64)> = Vec::with_capacity(block.phis.len());
            for phi in &block.phis {
                let val = phi
                    .incoming_for(pred)
                    .expect("validated phi has an entry per predecessor");
                incoming.push((phi.result.as_str(), mc.operand(val)));
            }
            for (pi, &(name, v)) in incoming.iter().enumerate() {
                mc.record(block_idx, pi, &[v]);
                if mc.steps > mc.budget {
                    return Err(mc.trap(TrapKind::StepBudget { budget }, &block.label));
                }
                mc.values.insert(name, v);
            }
        }

        for (ii, instr) in block.body.iter().enumerate() {
            let index = block.phis.len() + ii;
            let vals: Vec<i64> = instr.operands.iter().map(|o| mc.operand(o)).collect();
            mc.record(block_idx, index, &vals);
            if mc.steps > mc.budget {
                return Err(mc.trap(TrapKind::StepBudget { budget }, &block.label));
            }
            match instr.op {
                Opcode::Load | Opcode::Store => {
                    let mem_name = instr.mem.as_deref().unwrap();
                    let mem = mc.memories.get_mut(mem_name).unwrap();
                    let idx = vals[0];
                    if idx < 0 || idx as u64 >= mem.len() as u64 {
                        let kind = TrapKind::OutOfBounds {
                            mem: mem_name.to_string(),
                            index: idx,
                            len: mem.len() as u64,
                        };
                        return Err(mc.trap(kind, &block.label));
                    }
                    if instr.op == Opcode::Load {
                        let v = mem[idx as usize];
                        mc.values.insert(instr.result.as_deref().unwrap(), v);
                    } else {
                        mem[idx as usize] = vals[1];
                        mc.stores.push(StoreEvent {
                            mem: mem_name.to_string(),
                            index: idx as u64,
                            value: vals[1],
                        });
                    }
                }
                Opcode::Div | Opcode::Rem => {
                    if vals[1] == 0 {
                        return Err(mc.trap(TrapKind::DivByZero, &block.label));
                    }
                    let v = if instr.op == Opcode::Div {
                        vals[0].wrapping_div(vals[1])
                    } else {
                        vals[0].wrapping_rem(vals[1])
                    };
                    mc.values.insert(instr.result.as_deref().unwrap(), v);
                }
                op => {
                    let v = eval_pure(op, &vals);
                    mc.values.insert(instr.result.as_deref().unwrap(), v);
                }
            }
        }

        let term_index = block.phis.len() + block.body.len();
        match &block.terminator {
            Terminator::Br {
                cond,
                then_label,
                else_label,
            } => {
                let c = mc.operand(cond);
                mc.record(block_idx, term_index, &[c]);
                if mc.steps > mc.budget {
                    return Err(mc.trap(TrapKind::StepBudget { budget }, &block.label));
                }
                let taken = c != 0;
                let site = site_of_block[&block_idx];
                mc.branch_stream.push((site, taken));
                prev_label = Some(&block.label);
                let target = if taken { then_label } else { else_label };
                block_idx = func.block_index(target).unwrap();
            }
            Terminator::Jmp { target } => {
                mc.record(block_idx, term_index, &[]);
                if mc.steps > mc.budget {
                    return Err(mc.trap(TrapKind::StepBudget { budget }, &block.label));
                }
                prev_label = Some(&block.label);
                block_idx = func.block_index(target).unwrap();
            }
            Terminator::Ret { value } => {
                let v = mc.operand(value);
                mc.record(block_idx, term_index, &[v]);
                if mc.steps > mc.budget {
                    return Err(mc.trap(TrapKind::StepBudget { budget }, &block.label));
                }
                return Ok(ExecResult {
                    ret: v,
                    memories: mc.memories,
                    trace: mc.trace,
                    trace_values: mc.trace_values,
                    branch_stream: mc.branch_stream,
                    stores: mc.stores,
                    dyn_instr_count: mc.steps,
                });
            }
        }
    }
}

fn eval_pure(op: Opcode, vals: &[i64]) -> i64 {
    let (a, b) = (vals[0], *vals.get(1).unwrap_or(&0));
    match op {
        Opcode::Add => a.wrapping_add(b),
        Opcode::Sub => a.wrapping_sub(b),
        Opcode::Mul => a.wrapping_mul(b),
        Opcode::And => a & b,
        Opcode::Or => a | b,
        Opcode::Xor => a ^ b,
        // Shift amounts are taken modulo 64 so shifts are total.
        Opcode::Shl => a.wrapping_shl(b as u32),
        Opcode::Shr => a.wrapping_shr(b as u32), // arithmetic: the lone type is signed
        Opcode::IcmpEq => (a == b) as i64,
        Opcode::IcmpNe => (a != b) as i64,
        Opcode::IcmpSlt => (a < b) as i64,
        Opcode::IcmpSle => (a <= b) as i64,
        Opcode::IcmpSgt => (a > b) as i64,
        Opcode::IcmpSge => (a >= b) as i64,
        Opcode::Select => {
            if vals[0] != 0 {
                vals[1]
            } else {
                vals[2]
            }
        }
        Opcode::Div | Opcode::Rem | Opcode::Load | Opcode::Store => {
            unreachable!("handled by the caller")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_module, MemInit};

    const ABS: &str = "\
func @abs(%x) {
entry:
  %c = icmp.slt %x, 0
  br %c, then, join
then:
  %t = sub 0, %x
  jmp join
join:
  %r = phi [then: %t], [entry: %x]
  ret %r
}
";

    fn abs_inputs(x: i64) -> Inputs {
        Inputs::default().with_param("x", x)
    }

    #[test]
    fn abs_negative_takes_branch() {
        let m = parse_module(ABS).unwrap();
        let r = interpret(&m, "abs", &abs_inputs(-5)).unwrap();
        assert_eq!(r.ret, 5);
        assert_eq!(r.branch_stream, vec![(0, true)]);
    }

    #[test]
    fn abs_positive_falls_through() {
        let m = parse_module(ABS).unwrap();
        let r = interpret(&m, "abs", &abs_inputs(7)).unwrap();
        assert_eq!(r.ret, 7);
        assert_eq!(r.branch_stream, vec![(0, false)]);
    }

    #[test]
    fn abs_zero_executes_four_instructions() {
        // Not-taken path: cmp, br, phi, ret.
        let m = parse_module(ABS).unwrap();
        let r = interpret(&m, "abs", &abs_inputs(0)).unwrap();
        assert_eq!(r.ret, 0);
        assert_eq!(r.dyn_instr_count, 4);
    }

    #[test]
    fn interpreter_is_deterministic() {
        let m = parse_module(ABS).unwrap();
        let a = interpret(&m, "abs", &abs_inputs(-123)).unwrap();
        let b = interpret(&m, "abs", &abs_inputs(-123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn div_by_zero_traps_with_partial_state() {
        let src = "func @f(%x) {\nentry:\n  %q = div %x, 0\n  ret %q\n}";
        let m = parse_module(src).unwrap();
        let err = interpret(&m, "f", &abs_inputs(1).with_param("x", 1)).unwrap_err();
        match err {
            InterpError::Trap {
                kind: TrapKind::DivByZero,
                partial,
                ..
            } => {
                assert_eq!(partial.dyn_instr_count, 1);
            }
            other => panic!("expected div-by-zero trap, got {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_load_traps() {
        let src = "mem @a[4]\nfunc @f(%i) {\nentry:\n  %x = load @a, %i\n  ret %x\n}";
        let m = parse_module(src).unwrap();
        let err = interpret(&m, "f", &Inputs::default().with_param("i", 4)).unwrap_err();
        assert!(matches!(
            err.trap_kind(),
            Some(TrapKind::OutOfBounds {
                index: 4,
                len: 4,
                ..
            })
        ));
    }

    #[test]
    fn step_budget_catches_infinite_loops() {
        let src = "func @f() {\nentry:\n  jmp entry\n}";
        let m = parse_module(src).unwrap();
        let err = interpret_with_budget(&m, "f", &Inputs::default(), 100).unwrap_err();
        assert!(matches!(
            err.trap_kind(),
            Some(TrapKind::StepBudget { budget: 100 })
        ));
    }

    #[test]
    fn memory_init_and_stores_are_observable() {
        let src = "\
mem @a[4]
func @f() {
entry:
  %x = load @a, 1
  %y = mul %x, %x
  store @a, 2, %y
  ret %y
}
";
        let m = parse_module(src).unwrap();
        let inputs = Inputs::default().with_mem("a", MemInit::Cells(vec![0, 6]));
        let r = interpret(&m, "f", &inputs).unwrap();
        assert_eq!(r.ret, 36);
        assert_eq!(r.memories["a"], vec![0, 6, 36, 0]);
        assert_eq!(
            r.stores,
            vec![StoreEvent {
                mem: "a".into(),
                index: 2,
                value: 36
            }]
        );
    }

    #[test]
    fn wrapping_arithmetic_does_not_trap() {
        let src = "func @f(%x) {\nentry:\n  %y = add %x, 1\n  ret %y\n}";
        let m = parse_module(src).unwrap();
        let r = interpret(&m, "f", &Inputs::default().with_param("x", i64::MAX)).unwrap();
        assert_eq!(r.ret, i64::MIN);
    }

    #[test]
    fn select_picks_by_nonzero_condition() {
        let src = "func @f(%c) {\nentry:\n  %v = select %c, 10, 20\n  ret %v\n}";
        let m = parse_module(src).unwrap();
        let pick = |c: i64| {
            interpret(&m, "f", &Inputs::default().with_param("c", c))
                .unwrap()
                .ret
        };
        assert_eq!(pick(0), 20);
        assert_eq!(pick(1), 10);
        assert_eq!(pick(-7), 10);
    }
}
