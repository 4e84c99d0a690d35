//! Workload inputs: parameter values plus memory initializers, parsed from a
//! small key-value text format:
//!
//! ```text
//! param x = -5
//! mem a = [3, 1, 2]
//! mem a = seed:42 uniform:[0,1000] len:256
//! ```

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemInit {
    /// Explicit leading cells; the rest of the memory is zero.
    Cells(Vec<i64>),
    /// `len` cells drawn uniformly from `[lo, hi]` by a splitmix64 stream.
    Uniform {
        seed: u64,
        lo: i64,
        hi: i64,
        len: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Inputs {
    pub params: BTreeMap<String, i64>,
    pub mems: BTreeMap<String, MemInit>,
}

impl Inputs {
    pub fn with_param(mut self, name: &str, value: i64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_mem(mut self, name: &str, init: MemInit) -> Self {
        self.mems.insert(name.to_string(), init);
        self
    }
}

impl fmt::Display for Inputs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.params {
            writeln!(f, "param {name} = {value}")?;
        }
        for (name, init) in &self.mems {
            match init {
                MemInit::Cells(cells) => {
                    let list: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
                    writeln!(f, "mem {name} = [{}]", list.join(","))?;
                }
                MemInit::Uniform { seed, lo, hi, len } => {
                    writeln!(f, "mem {name} = seed:{seed} uniform:[{lo},{hi}] len:{len}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputsError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for InputsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for InputsError {}

/// The classic splitmix64 step. Pinned here so seeded memory initializers
/// mean the same cells in every build.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl MemInit {
    /// Materialize into `len` cells, zero-filling past the initializer.
    pub fn materialize(&self, mem_len: u64) -> Vec<i64> {
        let mut cells = vec![0i64; mem_len as usize];
        match self {
            MemInit::Cells(init) => {
                for (i, &v) in init.iter().enumerate().take(cells.len()) {
                    cells[i] = v;
                }
            }
            MemInit::Uniform { seed, lo, hi, len } => {
                let mut state = *seed;
                let span = (*hi as i128 - *lo as i128 + 1) as u128;
                for cell in cells.iter_mut().take(*len as usize) {
                    let r = splitmix64(&mut state) as u128;
                    *cell = (*lo as i128 + (r % span) as i128) as i64;
                }
            }
        }
        cells
    }

    pub fn declared_len(&self) -> u64 {
        match self {
            MemInit::Cells(cells) => cells.len() as u64,
            MemInit::Uniform { len, .. } => *len,
        }
    }
}

pub fn parse_inputs(text: &str) -> Result<Inputs, InputsError> {
    let mut inputs = Inputs::default();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno as u32 + 1;
        let err = |message: String| InputsError {
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
        let (kind, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(format!("expected 'param' or 'mem' entry, got '{line}'")))?;
        let (name, value) = rest
            .split_once('=')
            .ok_or_else(|| err("expected '=' after name".to_string()))?;
        let name = name.trim();
        let value = value.trim();
        if name.is_empty() {
            return Err(err("missing name before '='".to_string()));
        }
        match kind {
            "param" => {
                let v: i64 = value
                    .parse()
                    .map_err(|_| err(format!("invalid integer '{value}'")))?;
                inputs.params.insert(name.to_string(), v);
            }
            "mem" => {
                let init = parse_mem_init(value).map_err(err)?;
                inputs.mems.insert(name.to_string(), init);
            }
            other => return Err(err(format!("unknown entry kind '{other}'"))),
        }
    }
    Ok(inputs)
}

fn parse_mem_init(value: &str) -> Result<MemInit, String> {
    if let Some(body) = value.strip_prefix('[') {
        let body = body
            .strip_suffix(']')
            .ok_or_else(|| "missing ']' in cell list".to_string())?;
        let mut cells = Vec::new();
        for item in body.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            cells.push(
                item.parse::<i64>()
                    .map_err(|_| format!("invalid integer '{item}' in cell list"))?,
            );
        }
        return Ok(MemInit::Cells(cells));
    }
    let mut seed = None;
    let mut range = None;
    let mut len = None;
    for field in value.split_whitespace() {
        if let Some(v) = field.strip_prefix("seed:") {
            seed = Some(
                v.parse::<u64>()
                    .map_err(|_| format!("invalid seed '{v}'"))?,
            );
        } else if let Some(v) = field.strip_prefix("uniform:") {
            let body = v
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| format!("expected uniform:[lo,hi], got '{field}'"))?;
            let (lo, hi) = body
                .split_once(',')
                .ok_or_else(|| format!("expected uniform:[lo,hi], got '{field}'"))?;
            let lo: i64 = lo
                .trim()
                .parse()
                .map_err(|_| format!("invalid bound '{lo}'"))?;
            let hi: i64 = hi
                .trim()
                .parse()
                .map_err(|_| format!("invalid bound '{hi}'"))?;
            if lo > hi {
                return Err(format!("empty uniform range [{lo},{hi}]"));
            }
            range = Some((lo, hi));
        } else if let Some(v) = field.strip_prefix("len:") {
            len = Some(
                v.parse::<u64>()
                    .map_err(|_| format!("invalid length '{v}'"))?,
            );
        } else {
            return Err(format!("unknown memory initializer field '{field}'"));
        }
    }
    match (seed, range, len) {
        (Some(seed), Some((lo, hi)), Some(len)) => Ok(MemInit::Uniform { seed, lo, hi, len }),
        _ => Err("seeded initializer needs seed:, uniform:[lo,hi] and len:".to_string()),
    }
}
