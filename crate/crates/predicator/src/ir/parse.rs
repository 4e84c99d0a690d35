//! Hand-rolled lexer + recursive-descent parser for the IR text form.
//!
//! The grammar is whitespace-insensitive and `#` starts a line comment.
//! Duplicate function/memory names and duplicate block labels are rejected
//! here; everything else (SSA, dominance, phi shape) is the validator's job.

use std::fmt;

use super::{
    BasicBlock, Function, Instruction, MemoryDecl, Module, Opcode, Operand, Phi, Terminator,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),  // bare identifier: labels, keywords, opcodes
    Value(String),  // %name
    Global(String), // @name
    Num(i64),       // 64-bit signed immediate
    Punct(char),    // ( ) { } [ ] , : =
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Value(s) => write!(f, "'%{s}'"),
            Tok::Global(s) => write!(f, "'@{s}'"),
            Tok::Num(n) => write!(f, "'{n}'"),
            Tok::Punct(c) => write!(f, "'{c}'"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'.'
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_ident_char(c) {
                self.bump();
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn next(&mut self) -> Result<(Tok, u32, u32), ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let err = |line, col, message: String| ParseError { line, col, message };
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        match c {
            b'%' | b'@' => {
                self.bump();
                if !self.peek().is_some_and(is_ident_start) {
                    return Err(err(
                        line,
                        col,
                        format!("expected name after '{}'", c as char),
                    ));
                }
                let name = self.ident();
                let tok = if c == b'%' {
                    Tok::Value(name)
                } else {
                    Tok::Global(name)
                };
                Ok((tok, line, col))
            }
            b'-' | b'0'..=b'9' => {
                let start = self.pos;
                self.bump();
                if c == b'-' && !self.peek().is_some_and(|d| d.is_ascii_digit()) {
                    return Err(err(line, col, "expected digits after '-'".to_string()));
                }
                while self.peek().is_some_and(|d| d.is_ascii_digit()) {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let n: i64 = text
                    .parse()
                    .map_err(|_| err(line, col, format!("integer '{text}' out of 64-bit range")))?;
                Ok((Tok::Num(n), line, col))
            }
            b'(' | b')' | b'{' | b'}' | b'[' | b']' | b',' | b':' | b'=' => {
                self.bump();
                Ok((Tok::Punct(c as char), line, col))
            }
            c if is_ident_start(c) => Ok((Tok::Ident(self.ident()), line, col)),
            c => Err(err(
                line,
                col,
                format!("unexpected character '{}'", c as char),
            )),
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let (tok, line, col) = lexer.next()?;
        Ok(Parser {
            lexer,
            tok,
            line,
            col,
        })
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn advance(&mut self) -> Result<Tok, ParseError> {
        let (tok, line, col) = self.lexer.next()?;
        self.line = line;
        self.col = col;
        Ok(std::mem::replace(&mut self.tok, tok))
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Punct(c) {
            self.advance()?;
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}', found {}", self.tok)))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.tok.clone() {
            Tok::Ident(s) => {
                self.advance()?;
                Ok(s)
            }
            t => Err(self.err(format!("expected {what}, found {t}"))),
        }
    }

    fn expect_value(&mut self) -> Result<String, ParseError> {
        match self.tok.clone() {
            Tok::Value(s) => {
                self.advance()?;
                Ok(s)
            }
            t => Err(self.err(format!("expected value name, found {t}"))),
        }
    }

    fn expect_global(&mut self, what: &str) -> Result<String, ParseError> {
        match self.tok.clone() {
            Tok::Global(s) => {
                self.advance()?;
                Ok(s)
            }
            t => Err(self.err(format!("expected {what}, found {t}"))),
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.tok.clone() {
            Tok::Value(s) => {
                self.advance()?;
                Ok(Operand::Value(s))
            }
            Tok::Num(n) => {
                self.advance()?;
                Ok(Operand::Imm(n))
            }
            t => Err(self.err(format!("expected operand (value or immediate), found {t}"))),
        }
    }

    fn module(&mut self) -> Result<Module, ParseError> {
        let mut module = Module::default();
        if self.tok == Tok::Eof {
            return Err(self.err("expected 'func' or 'mem', found end of input"));
        }
        loop {
            match &self.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "mem" => {
                    self.advance()?;
                    let name = self.expect_global("memory name")?;
                    if module.memory(&name).is_some() {
                        return Err(self.err(format!("duplicate memory name '@{name}'")));
                    }
                    self.expect_punct('[')?;
                    let len = match self.tok {
                        Tok::Num(n) if n >= 0 => n as u64,
                        _ => {
                            return Err(
                                self.err(format!("expected memory length, found {}", self.tok))
                            )
                        }
                    };
                    self.advance()?;
                    self.expect_punct(']')?;
                    module.memories.push(MemoryDecl { name, len });
                }
                Tok::Ident(kw) if kw == "func" => {
                    let func = self.function()?;
                    if module.function(&func.name).is_some() {
                        return Err(self.err(format!("duplicate function name '@{}'", func.name)));
                    }
                    module.functions.push(func);
                }
                _ => return Err(self.err(format!("expected 'func' or 'mem', found {}", self.tok))),
            }
        }
        Ok(module)
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        self.advance()?; // consume 'func'
        let name = self.expect_global("function name")?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if self.tok != Tok::Punct(')') {
            loop {
                let p = self.expect_value()?;
                if params.contains(&p) {
                    return Err(self.err(format!("duplicate parameter name '%{p}'")));
                }
                params.push(p);
                if self.tok == Tok::Punct(',') {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        self.expect_punct('{')?;
        let mut blocks: Vec<BasicBlock> = Vec::new();
        while self.tok != Tok::Punct('}') {
            let block = self.block()?;
            if blocks.iter().any(|b| b.label == block.label) {
                return Err(self.err(format!("duplicate label '{}'", block.label)));
            }
            blocks.push(block);
        }
        self.advance()?; // consume '}'
        if blocks.is_empty() {
            return Err(self.err(format!("function '@{name}' has no blocks")));
        }
        Ok(Function {
            name,
            params,
            blocks,
        })
    }

    fn block(&mut self) -> Result<BasicBlock, ParseError> {
        let label = self.expect_ident("block label")?;
        self.expect_punct(':')?;
        let mut phis = Vec::new();
        let mut body = Vec::new();
        loop {
            match self.tok.clone() {
                Tok::Ident(kw) if kw == "br" => {
                    self.advance()?;
                    let cond = self.operand()?;
                    self.expect_punct(',')?;
                    let then_label = self.expect_ident("label")?;
                    self.expect_punct(',')?;
                    let else_label = self.expect_ident("label")?;
                    return Ok(BasicBlock {
                        label,
                        phis,
                        body,
                        terminator: Terminator::Br {
                            cond,
                            then_label,
                            else_label,
                        },
                    });
                }
                Tok::Ident(kw) if kw == "jmp" => {
                    self.advance()?;
                    let target = self.expect_ident("label")?;
                    return Ok(BasicBlock {
                        label,
                        phis,
                        body,
                        terminator: Terminator::Jmp { target },
                    });
                }
                Tok::Ident(kw) if kw == "ret" => {
                    self.advance()?;
                    let value = self.operand()?;
                    return Ok(BasicBlock {
                        label,
                        phis,
                        body,
                        terminator: Terminator::Ret { value },
                    });
                }
                Tok::Ident(kw) if kw == "store" => {
                    self.advance()?;
                    let mem = self.expect_global("memory name")?;
                    self.expect_punct(',')?;
                    let index = self.operand()?;
                    self.expect_punct(',')?;
                    let value = self.operand()?;
                    body.push(Instruction {
                        result: None,
                        op: Opcode::Store,
                        operands: vec![index, value],
                        mem: Some(mem),
                    });
                }
                Tok::Value(result) => {
                    self.advance()?;
                    self.expect_punct('=')?;
                    let mn = self.expect_ident("opcode")?;
                    if mn == "phi" {
                        if !body.is_empty() {
                            return Err(self.err("phi must precede all body instructions"));
                        }
                        phis.push(self.phi(result)?);
                        continue;
                    }
                    let op = Opcode::from_mnemonic(&mn)
                        .ok_or_else(|| self.err(format!("unknown opcode '{mn}'")))?;
                    if op == Opcode::Store {
                        return Err(self.err("store has no result"));
                    }
                    let instr = match op {
                        Opcode::Load => {
                            let mem = self.expect_global("memory name")?;
                            self.expect_punct(',')?;
                            let index = self.operand()?;
                            Instruction {
                                result: Some(result),
                                op,
                                operands: vec![index],
                                mem: Some(mem),
                            }
                        }
                        _ => {
                            let mut operands = Vec::with_capacity(op.arity());
                            for i in 0..op.arity() {
                                if i > 0 {
                                    self.expect_punct(',')?;
                                }
                                operands.push(self.operand()?);
                            }
                            Instruction {
                                result: Some(result),
                                op,
                                operands,
                                mem: None,
                            }
                        }
                    };
                    body.push(instr);
                }
                t => return Err(self.err(format!("expected instruction or terminator, found {t}"))),
            }
        }
    }

    fn phi(&mut self, result: String) -> Result<Phi, ParseError> {
        let mut incomings = Vec::new();
        loop {
            self.expect_punct('[')?;
            let pred = self.expect_ident("predecessor label")?;
            self.expect_punct(':')?;
            let val = self.operand()?;
            self.expect_punct(']')?;
            if incomings.iter().any(|(p, _)| *p == pred) {
                return Err(self.err(format!("duplicate phi entry for predecessor '{pred}'")));
            }
            incomings.push((pred, val));
            if self.tok == Tok::Punct(',') {
                self.advance()?;
            } else {
                break;
            }
        }
        Ok(Phi { result, incomings })
    }
}

/// Parse a whole module from its text form.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    Parser::new(text)?.module()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ABS: &str = "\
mem @a[256]
func @abs(%x) {
entry:
  %c = icmp.slt %x, 0
  br %c, then, join        # branch site b0
then:
  %t = sub 0, %x
  jmp join
join:
  %r = phi [then: %t], [entry: %x]
  ret %r
}
";

    #[test]
    fn parses_abs_kernel() {
        let m = parse_module(ABS).unwrap();
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.memories.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.name, "abs");
        assert_eq!(f.blocks.len(), 3);
        assert_eq!(f.blocks[0].label, "entry");
        assert_eq!(f.blocks[2].phis.len(), 1);
        assert!(matches!(f.blocks[0].terminator, Terminator::Br { .. }));
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        let err = parse_module("").unwrap_err();
        assert!(err.message.contains("expected 'func' or 'mem'"), "{err}");
    }

    #[test]
    fn duplicate_label_is_rejected_by_name() {
        let src = ABS.replace("join:\n", "then:\n");
        let err = parse_module(&src).unwrap_err();
        assert!(err.message.contains("then"), "{err}");
    }

    #[test]
    fn unknown_opcode_is_reported() {
        let err = parse_module("func @f() {\nentry:\n  %x = bogus 1, 2\n  ret %x\n}").unwrap_err();
        assert!(err.message.contains("unknown opcode 'bogus'"), "{err}");
    }

    #[test]
    fn phi_after_body_instruction_is_rejected() {
        let src = "func @f(%x) {\nentry:\n  %y = add %x, 1\n  %p = phi [entry: %x]\n  ret %y\n}";
        let err = parse_module(src).unwrap_err();
        assert!(err.message.contains("phi must precede"), "{err}");
    }

    #[test]
    fn errors_carry_line_and_column() {
        let err = parse_module("func @f() {\nentry:\n  ret ]\n}").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.col > 1);
    }

    #[test]
    fn print_parse_round_trip() {
        let m = parse_module(ABS).unwrap();
        let printed = m.to_string();
        let reparsed = parse_module(&printed).unwrap();
        assert_eq!(m, reparsed);
    }
}
