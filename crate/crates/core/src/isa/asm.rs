//! Two-pass assembler for kernel source text.
//!
//! Syntax: one statement per line, optional `label:` prefix, `#` comments.
//! A comment of the form `#cat:loop|pred|mem|comp|other` overrides the
//! category of the instruction(s) on that line. Directives:
//!
//! * `.text` / `.data` switch sections.
//! * `.word v, ...` and `.float f, ...` emit 32-bit data; `.space n` zeros.
//! * `.align n` pads to a `2^n` byte boundary.
//! * `.hwloop level, start_label, end_label` declares a hardware loop body
//!   for linting (distinct end PCs, proper nesting, no control op at the end).

use super::encoding::{self, encode, EncodeError, Format, FP_ABI, INT_ABI};
use super::{Category, Instruction, Op, RegSpace, TEXT_BASE};
use crate::csr;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DATA_BASE: u32 = 0x0001_0000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("lint: {0}")]
    Lint(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

fn err<T>(line: usize, kind: AsmErrorKind) -> Result<T, AsmError> {
    Err(AsmError { line, kind })
}

fn syntax<T>(line: usize, msg: impl Into<String>) -> Result<T, AsmError> {
    err(line, AsmErrorKind::Syntax(msg.into()))
}

/// A declared hardware loop body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HwLoopDecl {
    pub level: usize,
    pub start_pc: u32,
    pub end_pc: u32,
}

/// Assembled program: code, per-instruction categories and data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelImage {
    pub text: Vec<u32>,
    pub categories: Vec<Category>,
    pub entry_pc: u32,
    pub symbols: BTreeMap<String, u32>,
    pub data_segments: Vec<(u32, Vec<u8>)>,
    pub hwloops: Vec<HwLoopDecl>,
}

impl KernelImage {
    pub fn text_base(&self) -> u32 {
        TEXT_BASE
    }

    pub fn text_end(&self) -> u32 {
        TEXT_BASE + 4 * self.text.len() as u32
    }

    pub fn contains_pc(&self, pc: u32) -> bool {
        pc >= TEXT_BASE && pc < self.text_end() && pc.is_multiple_of(4)
    }

    pub fn index_of(&self, pc: u32) -> Option<usize> {
        self.contains_pc(pc).then(|| ((pc - TEXT_BASE) / 4) as usize)
    }

    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    /// Appends a raw data segment (used by kernel builders for bulk buffers).
    pub fn add_data(&mut self, base: u32, bytes: Vec<u8>) {
        self.data_segments.push((base, bytes));
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Text,
    Data,
}

#[derive(Clone, Debug)]
enum Stmt {
    Instr { mnemonic: String, operands: Vec<String>, cat: Option<Category> },
    Words(Vec<String>),
    Floats(Vec<f32>),
    Space(u32),
    HwLoop { level: usize, start: String, end: String },
}

struct Placed {
    line: usize,
    addr: u32,
    section: Section,
    stmt: Stmt,
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else {
        body.replace('_', "").parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_reg(s: &str, space: RegSpace) -> Option<u8> {
    let s = s.trim();
    match space {
        RegSpace::Int => {
            if s == "fp" {
                return Some(8);
            }
            if let Some(n) = s.strip_prefix('x').and_then(|n| n.parse::<u8>().ok()) {
                return (n < 32).then_some(n);
            }
            INT_ABI.iter().position(|&n| n == s).map(|p| p as u8)
        }
        RegSpace::Fp => {
            if let Some(n) = s.strip_prefix('f').and_then(|n| n.parse::<u8>().ok()) {
                return (n < 32).then_some(n);
            }
            FP_ABI.iter().position(|&n| n == s).map(|p| p as u8)
        }
    }
}

/// Number of words a text statement occupies.
fn instr_size(mnemonic: &str, operands: &[String]) -> u32 {
    match mnemonic {
        "la" => 2,
        "li" => match operands.get(1).and_then(|v| parse_int(v)) {
            Some(v) => li_words(0, v).len() as u32,
            None => 2,
        },
        _ => 1,
    }
}

fn split_operands(s: &str) -> Vec<String> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|p| p.trim().to_string()).collect()
}

/// Assembles kernel source text into an image.
pub fn assemble(source: &str) -> Result<KernelImage, AsmError> {
    let mut symbols: BTreeMap<String, u32> = BTreeMap::new();
    let mut placed: Vec<Placed> = Vec::new();
    let mut section = Section::Text;
    let mut text_pc = TEXT_BASE;
    let mut data_pc = DATA_BASE;

    // Pass 1: parse, size and place every statement.
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let (code, comment) = match raw.find('#') {
            Some(p) => (&raw[..p], Some(raw[p + 1..].trim())),
            None => (raw, None),
        };
        let cat = match comment.and_then(|c| c.strip_prefix("cat:")) {
            Some(tag) => {
                let tag = tag.split_whitespace().next().unwrap_or("");
                match tag.parse::<Category>() {
                    Ok(c) => Some(c),
                    Err(e) => return syntax(line, e),
                }
            }
            None => None,
        };
        let mut rest = code.trim();
        while let Some(colon) = rest.find(':') {
            let label = rest[..colon].trim();
            if !is_label_name(label) {
                break;
            }
            let addr = if section == Section::Text { text_pc } else { data_pc };
            if symbols.insert(label.to_string(), addr).is_some() {
                return err(line, AsmErrorKind::DuplicateLabel(label.to_string()));
            }
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }
        let (head, tail) = match rest.find(char::is_whitespace) {
            Some(p) => (&rest[..p], rest[p..].trim()),
            None => (rest, ""),
        };
        let pc = |s: Section| if s == Section::Text { text_pc } else { data_pc };
        let stmt = match head {
            ".text" => {
                section = Section::Text;
                continue;
            }
            ".data" => {
                section = Section::Data;
                continue;
            }
            ".align" => {
                let n = parse_int(tail).filter(|n| (0..=12).contains(n));
                let Some(n) = n else { return syntax(line, "bad .align operand") };
                let a = 1u32 << n;
                let cur = pc(section);
                let pad = (a - cur % a) % a;
                if section == Section::Text && !pad.is_multiple_of(4) {
                    return syntax(line, ".align in .text must keep 4-byte alignment");
                }
                if pad == 0 {
                    continue;
                }
                if section == Section::Text {
                    // pad with nops
                    for _ in 0..pad / 4 {
                        placed.push(Placed {
                            line,
                            addr: text_pc,
                            section,
                            stmt: Stmt::Instr {
                                mnemonic: "nop".into(),
                                operands: vec![],
                                cat: None,
                            },
                        });
                        text_pc += 4;
                    }
                    continue;
                }
                Stmt::Space(pad)
            }
            ".word" => Stmt::Words(split_operands(tail)),
            ".float" => {
                let mut vals = Vec::new();
                for v in split_operands(tail) {
                    match v.parse::<f32>() {
                        Ok(f) => vals.push(f),
                        Err(_) => return syntax(line, format!("bad float `{v}`")),
                    }
                }
                Stmt::Floats(vals)
            }
            ".space" => match parse_int(tail) {
                Some(n) if n >= 0 => Stmt::Space(n as u32),
                _ => return syntax(line, "bad .space operand"),
            },
            ".hwloop" => {
                let ops = split_operands(tail);
                if ops.len() != 3 {
                    return syntax(line, ".hwloop expects level, start, end");
                }
                let Some(level) = parse_int(&ops[0]).filter(|l| *l >= 0) else {
                    return syntax(line, "bad .hwloop level");
                };
                placed.push(Placed {
                    line,
                    addr: 0,
                    section,
                    stmt: Stmt::HwLoop {
                        level: level as usize,
                        start: ops[1].clone(),
                        end: ops[2].clone(),
                    },
                });
                continue;
            }
            d if d.starts_with('.') => return syntax(line, format!("unknown directive `{d}`")),
            m => {
                if section != Section::Text {
                    return syntax(line, "instruction outside .text");
                }
                Stmt::Instr { mnemonic: m.to_string(), operands: split_operands(tail), cat }
            }
        };
        let size = match &stmt {
            Stmt::Instr { mnemonic, operands, .. } => 4 * instr_size(mnemonic, operands),
            Stmt::Words(w) => 4 * w.len() as u32,
            Stmt::Floats(f) => 4 * f.len() as u32,
            Stmt::Space(n) => *n,
            Stmt::HwLoop { .. } => 0,
        };
        if section == Section::Data && matches!(stmt, Stmt::Words(_) | Stmt::Floats(_)) && !data_pc.is_multiple_of(4) {
            return syntax(line, "unaligned data word");
        }
        placed.push(Placed { line, addr: pc(section), section, stmt });
        match section {
            Section::Text => text_pc += size,
            Section::Data => data_pc += size,
        }
    }

    // Pass 2: resolve and encode.
    let mut image = KernelImage { entry_pc: TEXT_BASE, ..Default::default() };
    let mut data: Vec<u8> = Vec::new();
    for p in &placed {
        match &p.stmt {
            Stmt::Instr { mnemonic, operands, cat } => {
                let instrs = lower(p.line, p.addr, mnemonic, operands, &symbols)?;
                for mut i in instrs {
                    if let Some(c) = cat {
                        i.category = *c;
                    }
                    let w = encode(&i).map_err(|e| AsmError { line: p.line, kind: e.into() })?;
                    image.text.push(w);
                    image.categories.push(i.category);
                }
            }
            Stmt::Words(ws) => {
                debug_assert!(p.section == Section::Data || p.section == Section::Text);
                for w in ws {
                    let v = resolve_value(p.line, w, &symbols)?;
                    emit_data(&mut image, &mut data, p, &(v as u32).to_le_bytes());
                }
            }
            Stmt::Floats(fs) => {
                for f in fs {
                    emit_data(&mut image, &mut data, p, &f.to_bits().to_le_bytes());
                }
            }
            Stmt::Space(n) => {
                let zeros = vec![0u8; *n as usize];
                emit_data(&mut image, &mut data, p, &zeros);
            }
            Stmt::HwLoop { level, start, end } => {
                let s = resolve_label(p.line, start, &symbols)?;
                let e = resolve_label(p.line, end, &symbols)?;
                image.hwloops.push(HwLoopDecl { level: *level, start_pc: s, end_pc: e });
            }
        }
    }
    if !data.is_empty() {
        image.data_segments.push((DATA_BASE, data));
    }
    image.symbols = symbols;
    if let Some(&entry) = image.symbols.get("_start") {
        image.entry_pc = entry;
    }
    lint_hwloops(&image)?;
    Ok(image)
}

fn emit_data(image: &mut KernelImage, data: &mut Vec<u8>, p: &Placed, bytes: &[u8]) {
    match p.section {
        Section::Data => data.extend_from_slice(bytes),
        Section::Text => {
            // Raw words in .text are emitted as instruction words.
            for chunk in bytes.chunks(4) {
                let mut w = [0u8; 4];
                w[..chunk.len()].copy_from_slice(chunk);
                image.text.push(u32::from_le_bytes(w));
                image.categories.push(Category::Other);
            }
        }
    }
}

fn resolve_label(line: usize, s: &str, symbols: &BTreeMap<String, u32>) -> Result<u32, AsmError> {
    match symbols.get(s.trim()) {
        Some(&a) => Ok(a),
        None => err(line, AsmErrorKind::UndefinedLabel(s.trim().to_string())),
    }
}

/// Integer literal, label, or `label+off` / `label-off`.
fn resolve_value(line: usize, s: &str, symbols: &BTreeMap<String, u32>) -> Result<i64, AsmError> {
    let s = s.trim();
    if let Some(v) = parse_int(s) {
        return Ok(v);
    }
    if let Some(p) = s[1..].find(['+', '-']).map(|p| p + 1) {
        let (base, off) = s.split_at(p);
        if let Some(off) = parse_int(&off.replace('+', "")) {
            return Ok(resolve_label(line, base, symbols)? as i64 + off);
        }
    }
    if is_label_name(s) {
        return Ok(resolve_label(line, s, symbols)? as i64);
    }
    syntax(line, format!("bad value `{s}`"))
}

/// PC-relative target: a label resolves to `label - pc`; a bare number is
/// taken as the offset itself.
fn resolve_target(
    line: usize,
    pc: u32,
    s: &str,
    symbols: &BTreeMap<String, u32>,
) -> Result<i32, AsmError> {
    if let Some(v) = parse_int(s) {
        return Ok(v as i32);
    }
    Ok((resolve_value(line, s, symbols)? - pc as i64) as i32)
}

fn reg(line: usize, s: &str, space: RegSpace) -> Result<u8, AsmError> {
    match parse_reg(s, space) {
        Some(r) => Ok(r),
        None => syntax(line, format!("bad {space:?} register `{s}`")),
    }
}

fn mem_operand(line: usize, s: &str) -> Result<(i32, u8), AsmError> {
    let s = s.trim();
    let Some(open) = s.find('(') else { return syntax(line, format!("bad memory operand `{s}`")) };
    if !s.ends_with(')') {
        return syntax(line, format!("bad memory operand `{s}`"));
    }
    let off = &s[..open];
    let off = if off.trim().is_empty() { 0 } else {
        match parse_int(off) {
            Some(v) => v as i32,
            None => return syntax(line, format!("bad offset `{off}`")),
        }
    };
    let base = reg(line, &s[open + 1..s.len() - 1], RegSpace::Int)?;
    Ok((off, base))
}

fn csr_operand(line: usize, s: &str) -> Result<u16, AsmError> {
    if let Some(v) = parse_int(s).filter(|v| (0..0x1000).contains(v)) {
        return Ok(v as u16);
    }
    match csr::parse_csr_name(s.trim()) {
        Some(a) => Ok(a),
        None => syntax(line, format!("unknown CSR `{s}`")),
    }
}

fn expect_n(line: usize, m: &str, ops: &[String], n: usize) -> Result<(), AsmError> {
    if ops.len() != n {
        return syntax(line, format!("`{m}` expects {n} operands, got {}", ops.len()));
    }
    Ok(())
}

fn li_words(rd: u8, v: i64) -> Vec<Instruction> {
    let v = v as i32;
    if (-2048..2048).contains(&v) {
        let mut i = Instruction::new(Op::Addi);
        i.rd = rd;
        i.imm = v;
        return vec![i];
    }
    let lo = (v << 20) >> 20;
    let hi = v.wrapping_sub(lo);
    let mut a = Instruction::new(Op::Lui);
    a.rd = rd;
    a.imm = hi;
    if lo == 0 {
        return vec![a];
    }
    let mut b = Instruction::new(Op::Addi);
    b.rd = rd;
    b.rs1 = rd;
    b.imm = lo;
    vec![a, b]
}

/// `li` padded to exactly `lui` + `addi`.
fn two_words(rd: u8, v: i64) -> Vec<Instruction> {
    let mut w = li_words(rd, v);
    if w.len() == 2 {
        return w;
    }
    if w[0].op == Op::Lui {
        let mut b = Instruction::new(Op::Addi);
        b.rd = rd;
        b.rs1 = rd;
        w.push(b);
    } else {
        let mut lui = Instruction::new(Op::Lui);
        lui.rd = rd;
        w[0].rs1 = rd;
        w.insert(0, lui);
    }
    w
}

/// Lowers one (possibly pseudo) instruction into machine instructions.
fn lower(
    line: usize,
    pc: u32,
    m: &str,
    ops: &[String],
    symbols: &BTreeMap<String, u32>,
) -> Result<Vec<Instruction>, AsmError> {
    use RegSpace::{Fp, Int};
    let x = |s: &str| reg(line, s, Int);
    let one = |i: Instruction| Ok(vec![i]);
    // Pseudo-instructions first.
    match m {
        "nop" => {
            expect_n(line, m, ops, 0)?;
            return one(Instruction::nop());
        }
        "li" => {
            expect_n(line, m, ops, 2)?;
            let rd = x(&ops[0])?;
            let v = resolve_value(line, &ops[1], symbols)?;
            if parse_int(&ops[1]).is_some() {
                return Ok(li_words(rd, v));
            }
            // labels always take two words to keep pass-1 sizing stable
            return Ok(two_words(rd, v));
        }
        "la" => {
            expect_n(line, m, ops, 2)?;
            let rd = x(&ops[0])?;
            let v = resolve_value(line, &ops[1], symbols)?;
            return Ok(two_words(rd, v));
        }
        "mv" => {
            expect_n(line, m, ops, 2)?;
            let mut i = Instruction::new(Op::Addi);
            i.rd = x(&ops[0])?;
            i.rs1 = x(&ops[1])?;
            return one(i);
        }
        "not" | "neg" => {
            expect_n(line, m, ops, 2)?;
            let mut i = if m == "not" {
                let mut i = Instruction::new(Op::Xori);
                i.rs1 = x(&ops[1])?;
                i.imm = -1;
                i
            } else {
                let mut i = Instruction::new(Op::Sub);
                i.rs2 = x(&ops[1])?;
                i
            };
            i.rd = x(&ops[0])?;
            return one(i);
        }
        "j" => {
            expect_n(line, m, ops, 1)?;
            let mut i = Instruction::new(Op::Jal);
            i.imm = resolve_target(line, pc, &ops[0], symbols)?;
            return one(i);
        }
        "jr" => {
            expect_n(line, m, ops, 1)?;
            let mut i = Instruction::new(Op::Jalr);
            i.rs1 = x(&ops[0])?;
            return one(i);
        }
        "ret" => {
            expect_n(line, m, ops, 0)?;
            let mut i = Instruction::new(Op::Jalr);
            i.rs1 = 1;
            return one(i);
        }
        "beqz" | "bnez" | "bltz" | "bgez" => {
            expect_n(line, m, ops, 2)?;
            let op = match m {
                "beqz" => Op::Beq,
                "bnez" => Op::Bne,
                "bltz" => Op::Blt,
                _ => Op::Bge,
            };
            let mut i = Instruction::new(op);
            i.rs1 = x(&ops[0])?;
            i.imm = resolve_target(line, pc, &ops[1], symbols)?;
            return one(i);
        }
        "bgt" | "ble" | "bgtu" | "bleu" => {
            expect_n(line, m, ops, 3)?;
            let op = match m {
                "bgt" => Op::Blt,
                "ble" => Op::Bge,
                "bgtu" => Op::Bltu,
                _ => Op::Bgeu,
            };
            let mut i = Instruction::new(op);
            i.rs1 = x(&ops[1])?;
            i.rs2 = x(&ops[0])?;
            i.imm = resolve_target(line, pc, &ops[2], symbols)?;
            return one(i);
        }
        "csrr" => {
            expect_n(line, m, ops, 2)?;
            let mut i = Instruction::new(Op::Csrrs);
            i.rd = x(&ops[0])?;
            i.csr = csr_operand(line, &ops[1])?;
            return one(i);
        }
        "csrw" | "csrs" | "csrc" => {
            expect_n(line, m, ops, 2)?;
            let op = match m {
                "csrw" => Op::Csrrw,
                "csrs" => Op::Csrrs,
                _ => Op::Csrrc,
            };
            let mut i = Instruction::new(op);
            i.csr = csr_operand(line, &ops[0])?;
            i.rs1 = x(&ops[1])?;
            return one(i);
        }
        "csrwi" => {
            expect_n(line, m, ops, 2)?;
            let mut i = Instruction::new(Op::Csrrwi);
            i.csr = csr_operand(line, &ops[0])?;
            i.imm = resolve_value(line, &ops[1], symbols)? as i32;
            return one(i);
        }
        "fmv.s" => {
            expect_n(line, m, ops, 2)?;
            let mut i = Instruction::new(Op::FsgnjS);
            i.rd = reg(line, &ops[0], Fp)?;
            i.rs1 = reg(line, &ops[1], Fp)?;
            i.rs2 = i.rs1;
            return one(i);
        }
        _ => {}
    }

    let Some(spec) = encoding::lookup_mnemonic(m) else {
        return syntax(line, format!("unknown mnemonic `{m}`"));
    };
    let mut i = Instruction::new(spec.op);
    let sp = |o: Option<RegSpace>| o.unwrap_or(Int);
    match spec.format {
        Format::R => {
            expect_n(line, m, ops, 3)?;
            i.rd = reg(line, &ops[0], sp(spec.rd_space))?;
            i.rs1 = reg(line, &ops[1], sp(spec.rs1_space))?;
            i.rs2 = reg(line, &ops[2], sp(spec.rs2_space))?;
        }
        Format::R1 => {
            expect_n(line, m, ops, 2)?;
            i.rd = reg(line, &ops[0], sp(spec.rd_space))?;
            i.rs1 = reg(line, &ops[1], sp(spec.rs1_space))?;
        }
        Format::R4 => {
            expect_n(line, m, ops, 4)?;
            i.rd = reg(line, &ops[0], Fp)?;
            i.rs1 = reg(line, &ops[1], Fp)?;
            i.rs2 = reg(line, &ops[2], Fp)?;
            i.rs3 = reg(line, &ops[3], Fp)?;
        }
        Format::I => {
            i.rd = reg(line, &ops.first().cloned().unwrap_or_default(), sp(spec.rd_space))?;
            if ops.len() == 2 {
                let (off, base) = mem_operand(line, &ops[1])?;
                i.rs1 = base;
                i.imm = off;
            } else {
                expect_n(line, m, ops, 3)?;
                i.rs1 = x(&ops[1])?;
                i.imm = resolve_value(line, &ops[2], symbols)? as i32;
            }
        }
        Format::Shift => {
            expect_n(line, m, ops, 3)?;
            i.rd = x(&ops[0])?;
            i.rs1 = x(&ops[1])?;
            i.imm = resolve_value(line, &ops[2], symbols)? as i32;
        }
        Format::S => {
            expect_n(line, m, ops, 2)?;
            i.rs2 = reg(line, &ops[0], sp(spec.rs2_space))?;
            let (off, base) = mem_operand(line, &ops[1])?;
            i.rs1 = base;
            i.imm = off;
        }
        Format::B => {
            expect_n(line, m, ops, 3)?;
            i.rs1 = x(&ops[0])?;
            i.rs2 = x(&ops[1])?;
            i.imm = resolve_target(line, pc, &ops[2], symbols)?;
        }
        Format::U => {
            expect_n(line, m, ops, 2)?;
            i.rd = x(&ops[0])?;
            let v = resolve_value(line, &ops[1], symbols)?;
            if !(0..(1 << 20)).contains(&v) {
                return syntax(line, "upper immediate out of range");
            }
            i.imm = (v << 12) as i32;
        }
        Format::J => {
            let (rd, target) = match ops.len() {
                1 => (1, &ops[0]),
                2 => (x(&ops[0])?, &ops[1]),
                _ => return syntax(line, "`jal` expects 1 or 2 operands"),
            };
            i.rd = rd;
            i.imm = resolve_target(line, pc, target, symbols)?;
        }
        Format::Csr => {
            expect_n(line, m, ops, 3)?;
            i.rd = x(&ops[0])?;
            i.csr = csr_operand(line, &ops[1])?;
            i.rs1 = x(&ops[2])?;
        }
        Format::CsrImm => {
            expect_n(line, m, ops, 3)?;
            i.rd = x(&ops[0])?;
            i.csr = csr_operand(line, &ops[1])?;
            i.imm = resolve_value(line, &ops[2], symbols)? as i32;
        }
        Format::Simt => match spec.op {
            Op::Tmc => {
                expect_n(line, m, ops, 1)?;
                i.rs1 = x(&ops[0])?;
            }
            Op::Split => {
                expect_n(line, m, ops, 2)?;
                i.rs1 = x(&ops[0])?;
                i.imm = resolve_target(line, pc, &ops[1], symbols)?;
            }
            Op::Join => {
                expect_n(line, m, ops, 1)?;
                i.imm = resolve_target(line, pc, &ops[0], symbols)?;
            }
            _ => {
                expect_n(line, m, ops, 2)?;
                i.rs1 = x(&ops[0])?;
                i.rs2 = x(&ops[1])?;
            }
        },
    }
    one(i)
}

fn lint_hwloops(image: &KernelImage) -> Result<(), AsmError> {
    let lint = |msg: String| err(0, AsmErrorKind::Lint(msg));
    for l in &image.hwloops {
        if l.start_pc > l.end_pc || !image.contains_pc(l.start_pc) || !image.contains_pc(l.end_pc) {
            return lint(format!("hardware loop level {} has an invalid body range", l.level));
        }
        let idx = image.index_of(l.end_pc).expect("checked above");
        if let Ok(i) = encoding::decode(image.text[idx]) {
            if i.op.is_control() {
                return lint(format!(
                    "control instruction `{}` at end of hardware loop level {}",
                    i.op, l.level
                ));
            }
        }
    }
    for (a, la) in image.hwloops.iter().enumerate() {
        for lb in &image.hwloops[a + 1..] {
            if la.level == lb.level {
                continue;
            }
            if la.end_pc == lb.end_pc {
                return lint(format!(
                    "hardware loop levels {} and {} share end PC {:#x}",
                    la.level, lb.level, la.end_pc
                ));
            }
            let (outer, inner) = if la.level < lb.level { (la, lb) } else { (lb, la) };
            let overlaps = inner.start_pc <= outer.end_pc && outer.start_pc <= inner.end_pc;
            let nested = outer.start_pc <= inner.start_pc && inner.end_pc <= outer.end_pc;
            if overlaps && !nested {
                return lint(format!(
                    "hardware loop level {} is not nested inside level {}",
                    inner.level, outer.level
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    #[test]
    fn self_jump_is_single_word() {
        let img = assemble("loop: j loop").unwrap();
        assert_eq!(img.text.len(), 1);
        let i = decode(img.text[0]).unwrap();
        assert_eq!((i.op, i.rd, i.imm), (Op::Jal, 0, 0));
    }

    #[test]
    fn forward_branch_offset() {
        let src = "
            beq a0, a1, done
            addi a0, a0, 1
            addi a0, a0, 2
        done:
            addi a0, a0, 3
        ";
        let img = assemble(src).unwrap();
        let i = decode(img.text[0]).unwrap();
        // three instructions ahead: 3 * 4 bytes
        assert_eq!(i.imm, 12);
        assert_eq!(img.symbol("done"), Some(TEXT_BASE + 12));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = assemble("nop\n  j nowhere").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.kind, AsmErrorKind::UndefinedLabel("nowhere".into()));
        let e = assemble("a:\nnop\na: nop").unwrap_err();
        assert_eq!((e.line, e.kind), (3, AsmErrorKind::DuplicateLabel("a".into())));
        let e = assemble("add a0, a1").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(matches!(e.kind, AsmErrorKind::Syntax(_)));
        assert!(assemble("frob a0").is_err());
    }

    #[test]
    fn category_annotation_overrides_default() {
        let img = assemble("add a1, a1, s4 #cat:mem\nadd a0, a0, s5").unwrap();
        assert_eq!(img.categories, vec![Category::Memory, Category::Other]);
    }

    #[test]
    fn li_and_la_expand() {
        let img = assemble("li a0, 5\nli a1, 0x12345678\nla a2, buf\n.data\nbuf: .word 1, 2").unwrap();
        assert_eq!(img.text.len(), 5);
        assert_eq!(img.data_segments, vec![(DATA_BASE, vec![1, 0, 0, 0, 2, 0, 0, 0])]);
        let lui = decode(img.text[1]).unwrap();
        let addi = decode(img.text[2]).unwrap();
        assert_eq!(lui.imm.wrapping_add(addi.imm) as u32, 0x1234_5678);
    }

    #[test]
    fn mnemonic_round_trip() {
        let src = "
            addi t0, t0, 5
            fmadd.s ft1, ft1, ft3, ft4
            flw ft0, 4(a1)
            fsw ft2, -8(a3)
            tmc t2
            wspawn a0, a1
            csrrw zero, 0x801, t0
            minu t1, t1, s3
            bar zero, a0
        ";
        let img = assemble(src).unwrap();
        let expected: Vec<&str> = src.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        for (k, w) in img.text.iter().enumerate() {
            let mnemonic = expected[k].split_whitespace().next().unwrap();
            assert_eq!(decode(*w).unwrap().op.mnemonic(), mnemonic);
        }
    }

    #[test]
    fn hwloop_lint_rejects_shared_end() {
        let src = "
        .hwloop 0, a, b
        .hwloop 1, a, b
        a: nop
        b: nop
        ";
        let e = assemble(src).unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::Lint(_)));
    }

    #[test]
    fn hwloop_lint_rejects_branch_at_end() {
        let src = "
        .hwloop 0, a, b
        a: nop
        b: j a
        ";
        assert!(assemble(src).is_err());
    }
}
