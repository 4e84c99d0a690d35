//! SSA-style textual IR: types, parser, validator, CFG analyses and a
//! reference interpreter.
//!
//! A module is a set of flat 64-bit-cell memories plus functions made of
//! basic blocks. Every value is a 64-bit signed integer; arithmetic wraps.
//! Blocks hold phis first, then body instructions, then exactly one
//! terminator, so the block layout invariants are structural.

mod cfg;
mod inputs;
mod interp;
mod parse;
mod print;
mod validate;

pub use cfg::{analyze_cfg, branch_sites, module_branch_sites, CfgError, CfgInfo};
pub use inputs::{parse_inputs, splitmix64, Inputs, InputsError, MemInit};
pub use interp::{
    interpret, ExecPartial, ExecResult, InterpError, StoreEvent, TraceEntry, TrapKind,
    DEFAULT_STEP_BUDGET,
};
pub use parse::{parse_module, ParseError};
pub use validate::{validate_module, Diagnostic};

use std::fmt;

/// Opcodes for non-terminator, non-phi instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    IcmpEq,
    IcmpNe,
    IcmpSlt,
    IcmpSle,
    IcmpSgt,
    IcmpSge,
    Select,
    Load,
    Store,
}

impl Opcode {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Rem => "rem",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Xor => "xor",
            Opcode::Shl => "shl",
            Opcode::Shr => "shr",
            Opcode::IcmpEq => "icmp.eq",
            Opcode::IcmpNe => "icmp.ne",
            Opcode::IcmpSlt => "icmp.slt",
            Opcode::IcmpSle => "icmp.sle",
            Opcode::IcmpSgt => "icmp.sgt",
            Opcode::IcmpSge => "icmp.sge",
            Opcode::Select => "select",
            Opcode::Load => "load",
            Opcode::Store => "store",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Some(match s {
            "add" => Opcode::Add,
            "sub" => Opcode::Sub,
            "mul" => Opcode::Mul,
            "div" => Opcode::Div,
            "rem" => Opcode::Rem,
            "and" => Opcode::And,
            "or" => Opcode::Or,
            "xor" => Opcode::Xor,
            "shl" => Opcode::Shl,
            "shr" => Opcode::Shr,
            "icmp.eq" => Opcode::IcmpEq,
            "icmp.ne" => Opcode::IcmpNe,
            "icmp.slt" => Opcode::IcmpSlt,
            "icmp.sle" => Opcode::IcmpSle,
            "icmp.sgt" => Opcode::IcmpSgt,
            "icmp.sge" => Opcode::IcmpSge,
            "select" => Opcode::Select,
            "load" => Opcode::Load,
            "store" => Opcode::Store,
            _ => return None,
        })
    }

    /// Binary arithmetic/logic ops including comparisons (two operands, one result).
    pub fn is_binary(self) -> bool {
        !matches!(self, Opcode::Select | Opcode::Load | Opcode::Store)
    }

    pub fn is_icmp(self) -> bool {
        matches!(
            self,
            Opcode::IcmpEq
                | Opcode::IcmpNe
                | Opcode::IcmpSlt
                | Opcode::IcmpSle
                | Opcode::IcmpSgt
                | Opcode::IcmpSge
        )
    }

    /// Division and remainder trap on a zero divisor, so they are never
    /// safe to hoist past a guard.
    pub fn can_trap(self) -> bool {
        matches!(self, Opcode::Div | Opcode::Rem)
    }

    /// Number of value operands (excluding the memory name for load/store).
    pub fn arity(self) -> usize {
        match self {
            Opcode::Select => 3,
            Opcode::Load => 1,
            Opcode::Store => 2,
            _ => 2,
        }
    }

    pub fn has_result(self) -> bool {
        self != Opcode::Store
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// A value operand: an SSA name or a 64-bit signed immediate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Value(String),
    Imm(i64),
}

impl Operand {
    pub fn as_value(&self) -> Option<&str> {
        match self {
            Operand::Value(n) => Some(n),
            Operand::Imm(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Value(n) => write!(f, "%{n}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

/// A non-phi, non-terminator instruction.
///
/// `operands` arity is fixed per opcode: binaries and icmps take two, select
/// takes (cond, true, false), load takes (index) and store takes
/// (index, value). `mem` is set exactly for load/store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<String>,
    pub op: Opcode,
    pub operands: Vec<Operand>,
    pub mem: Option<String>,
}

impl Instruction {
    pub fn binary(result: &str, op: Opcode, a: Operand, b: Operand) -> Instruction {
        Instruction {
            result: Some(result.to_string()),
            op,
            operands: vec![a, b],
            mem: None,
        }
    }

    pub fn select(result: &str, cond: Operand, t: Operand, f: Operand) -> Instruction {
        Instruction {
            result: Some(result.to_string()),
            op: Opcode::Select,
            operands: vec![cond, t, f],
            mem: None,
        }
    }
}

/// SSA phi: one incoming (predecessor label, operand) entry per CFG predecessor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phi {
    pub result: String,
    pub incomings: Vec<(String, Operand)>,
}

impl Phi {
    /// The incoming operand for predecessor `label`, if present.
    pub fn incoming_for(&self, label: &str) -> Option<&Operand> {
        self.incomings
            .iter()
            .find(|(p, _)| p == label)
            .map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Br {
        cond: Operand,
        then_label: String,
        else_label: String,
    },
    Jmp {
        target: String,
    },
    Ret {
        value: Operand,
    },
}

impl Terminator {
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Terminator::Br {
                then_label,
                else_label,
                ..
            } => vec![then_label, else_label],
            Terminator::Jmp { target } => vec![target],
            Terminator::Ret { .. } => vec![],
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Terminator::Br { .. } => "br",
            Terminator::Jmp { .. } => "jmp",
            Terminator::Ret { .. } => "ret",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub phis: Vec<Phi>,
    pub body: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BasicBlock {
    /// Total instruction count: phis + body + the terminator.
    pub fn instruction_count(&self) -> usize {
        self.phis.len() + self.body.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn block(&self, label: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn entry(&self) -> &BasicBlock {
        &self.blocks[0]
    }
}

/// A flat memory: `len` cells of 64-bit signed integers, zero-initialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryDecl {
    pub name: String,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Module {
    pub memories: Vec<MemoryDecl>,
    pub functions: Vec<Function>,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn memory(&self, name: &str) -> Option<&MemoryDecl> {
        self.memories.iter().find(|m| m.name == name)
    }
}
