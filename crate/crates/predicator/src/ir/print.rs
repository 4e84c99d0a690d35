//! Canonical text form of a module. `parse(print(m))` reproduces `m`
//! structurally, which the round-trip tests rely on.

use std::fmt;

use super::{BasicBlock, Function, Instruction, Module, Opcode, Phi, Terminator};

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for mem in &self.memories {
            writeln!(f, "mem @{}[{}]", mem.name, mem.len)?;
        }
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 || !self.memories.is_empty() {
                writeln!(f)?;
            }
            write!(f, "{func}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "func @{}(", self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "%{p}")?;
        }
        writeln!(f, ") {{")?;
        for block in &self.blocks {
            write!(f, "{block}")?;
        }
        writeln!(f, "}}")
    }
}

impl fmt::Display for BasicBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}:", self.label)?;
        for phi in &self.phis {
            writeln!(f, "  {phi}")?;
        }
        for instr in &self.body {
            writeln!(f, "  {instr}")?;
        }
        writeln!(f, "  {}", self.terminator)
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{} = phi", self.result)?;
        for (i, (pred, val)) in self.incomings.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, " [{pred}: {val}]")?;
        }
        Ok(())
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = &self.result {
            write!(f, "%{r} = ")?;
        }
        write!(f, "{}", self.op)?;
        match self.op {
            Opcode::Load => write!(
                f,
                " @{}, {}",
                self.mem.as_deref().unwrap_or("?"),
                self.operands[0]
            ),
            Opcode::Store => write!(
                f,
                " @{}, {}, {}",
                self.mem.as_deref().unwrap_or("?"),
                self.operands[0],
                self.operands[1]
            ),
            _ => {
                for (i, op) in self.operands.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, " {op}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Br {
                cond,
                then_label,
                else_label,
            } => write!(f, "br {cond}, {then_label}, {else_label}"),
            Terminator::Jmp { target } => write!(f, "jmp {target}"),
            Terminator::Ret { value } => write!(f, "ret {value}"),
        }
    }
}
