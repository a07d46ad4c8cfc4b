//! Binary encoding table.
//!
//! Every supported operation has exactly one row here. The RISC-V subset uses
//! the ratified encodings (FP arithmetic is emitted with `rm = dyn`).
//! SIMT control uses the `custom-0` major opcode (`0x0B`) with a B-type
//! layout so that `split`/`join` can carry a PC-relative target:
//!
//! | op       | funct3 | operands                                  |
//! |----------|--------|-------------------------------------------|
//! | `tmc`    | 0      | rs1 = new thread mask                     |
//! | `wspawn` | 1      | rs1 = warp count, rs2 = entry PC          |
//! | `split`  | 2      | rs1 = per-thread predicate, imm = else PC |
//! | `join`   | 3      | imm = reconvergence PC                    |
//! | `bar`    | 4      | rs1 = barrier id, rs2 = warp count        |

use super::{Category, Instruction, Op, RegSpace};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    R,
    /// R-type whose rs2 field is fixed to zero (`fmv.x.w`, `fmv.w.x`).
    R1,
    R4,
    I,
    /// Immediate shifts: shamt in rs2 position, funct7 fixed.
    Shift,
    S,
    B,
    U,
    J,
    Csr,
    CsrImm,
    Simt,
}

#[derive(Clone, Copy, Debug)]
pub struct OpSpec {
    pub op: Op,
    pub mnemonic: &'static str,
    pub format: Format,
    pub opcode: u32,
    pub funct3: Option<u32>,
    pub funct7: Option<u32>,
    pub rd_space: Option<RegSpace>,
    pub rs1_space: Option<RegSpace>,
    pub rs2_space: Option<RegSpace>,
    pub rs3_space: Option<RegSpace>,
}

const X: Option<RegSpace> = Some(RegSpace::Int);
const F: Option<RegSpace> = Some(RegSpace::Fp);
const NO: Option<RegSpace> = None;

const fn row(
    op: Op,
    mnemonic: &'static str,
    format: Format,
    opcode: u32,
    funct3: Option<u32>,
    funct7: Option<u32>,
    regs: [Option<RegSpace>; 4],
) -> OpSpec {
    OpSpec {
        op,
        mnemonic,
        format,
        opcode,
        funct3,
        funct7,
        rd_space: regs[0],
        rs1_space: regs[1],
        rs2_space: regs[2],
        rs3_space: regs[3],
    }
}

const RM_DYN: u32 = 0b111;

pub const OP_LUI: u32 = 0x37;
pub const OP_AUIPC: u32 = 0x17;
pub const OP_JAL: u32 = 0x6f;
pub const OP_JALR: u32 = 0x67;
pub const OP_BRANCH: u32 = 0x63;
pub const OP_LOAD: u32 = 0x03;
pub const OP_STORE: u32 = 0x23;
pub const OP_IMM: u32 = 0x13;
pub const OP_REG: u32 = 0x33;
pub const OP_LOAD_FP: u32 = 0x07;
pub const OP_STORE_FP: u32 = 0x27;
pub const OP_FP: u32 = 0x53;
pub const OP_FMADD: u32 = 0x43;
pub const OP_SYSTEM: u32 = 0x73;
pub const OP_CUSTOM0: u32 = 0x0b;

use Format::*;

#[rustfmt::skip]
pub static TABLE: &[OpSpec] = &[
    row(Op::Lui,    "lui",    U,      OP_LUI,    None,    None,       [X, NO, NO, NO]),
    row(Op::Auipc,  "auipc",  U,      OP_AUIPC,  None,    None,       [X, NO, NO, NO]),
    row(Op::Jal,    "jal",    J,      OP_JAL,    None,    None,       [X, NO, NO, NO]),
    row(Op::Jalr,   "jalr",   I,      OP_JALR,   Some(0), None,       [X, X, NO, NO]),
    row(Op::Beq,    "beq",    B,      OP_BRANCH, Some(0), None,       [NO, X, X, NO]),
    row(Op::Bne,    "bne",    B,      OP_BRANCH, Some(1), None,       [NO, X, X, NO]),
    row(Op::Blt,    "blt",    B,      OP_BRANCH, Some(4), None,       [NO, X, X, NO]),
    row(Op::Bge,    "bge",    B,      OP_BRANCH, Some(5), None,       [NO, X, X, NO]),
    row(Op::Bltu,   "bltu",   B,      OP_BRANCH, Some(6), None,       [NO, X, X, NO]),
    row(Op::Bgeu,   "bgeu",   B,      OP_BRANCH, Some(7), None,       [NO, X, X, NO]),
    row(Op::Lb,     "lb",     I,      OP_LOAD,   Some(0), None,       [X, X, NO, NO]),
    row(Op::Lh,     "lh",     I,      OP_LOAD,   Some(1), None,       [X, X, NO, NO]),
    row(Op::Lw,     "lw",     I,      OP_LOAD,   Some(2), None,       [X, X, NO, NO]),
    row(Op::Lbu,    "lbu",    I,      OP_LOAD,   Some(4), None,       [X, X, NO, NO]),
    row(Op::Lhu,    "lhu",    I,      OP_LOAD,   Some(5), None,       [X, X, NO, NO]),
    row(Op::Sb,     "sb",     S,      OP_STORE,  Some(0), None,       [NO, X, X, NO]),
    row(Op::Sh,     "sh",     S,      OP_STORE,  Some(1), None,       [NO, X, X, NO]),
    row(Op::Sw,     "sw",     S,      OP_STORE,  Some(2), None,       [NO, X, X, NO]),
    row(Op::Addi,   "addi",   I,      OP_IMM,    Some(0), None,       [X, X, NO, NO]),
    row(Op::Slti,   "slti",   I,      OP_IMM,    Some(2), None,       [X, X, NO, NO]),
    row(Op::Sltiu,  "sltiu",  I,      OP_IMM,    Some(3), None,       [X, X, NO, NO]),
    row(Op::Xori,   "xori",   I,      OP_IMM,    Some(4), None,       [X, X, NO, NO]),
    row(Op::Ori,    "ori",    I,      OP_IMM,    Some(6), None,       [X, X, NO, NO]),
    row(Op::Andi,   "andi",   I,      OP_IMM,    Some(7), None,       [X, X, NO, NO]),
    row(Op::Slli,   "slli",   Shift,  OP_IMM,    Some(1), Some(0x00), [X, X, NO, NO]),
    row(Op::Srli,   "srli",   Shift,  OP_IMM,    Some(5), Some(0x00), [X, X, NO, NO]),
    row(Op::Srai,   "srai",   Shift,  OP_IMM,    Some(5), Some(0x20), [X, X, NO, NO]),
    row(Op::Add,    "add",    R,      OP_REG,    Some(0), Some(0x00), [X, X, X, NO]),
    row(Op::Sub,    "sub",    R,      OP_REG,    Some(0), Some(0x20), [X, X, X, NO]),
    row(Op::Sll,    "sll",    R,      OP_REG,    Some(1), Some(0x00), [X, X, X, NO]),
    row(Op::Slt,    "slt",    R,      OP_REG,    Some(2), Some(0x00), [X, X, X, NO]),
    row(Op::Sltu,   "sltu",   R,      OP_REG,    Some(3), Some(0x00), [X, X, X, NO]),
    row(Op::Xor,    "xor",    R,      OP_REG,    Some(4), Some(0x00), [X, X, X, NO]),
    row(Op::Srl,    "srl",    R,      OP_REG,    Some(5), Some(0x00), [X, X, X, NO]),
    row(Op::Sra,    "sra",    R,      OP_REG,    Some(5), Some(0x20), [X, X, X, NO]),
    row(Op::Or,     "or",     R,      OP_REG,    Some(6), Some(0x00), [X, X, X, NO]),
    row(Op::And,    "and",    R,      OP_REG,    Some(7), Some(0x00), [X, X, X, NO]),
    row(Op::Mul,    "mul",    R,      OP_REG,    Some(0), Some(0x01), [X, X, X, NO]),
    row(Op::Min,    "min",    R,      OP_REG,    Some(4), Some(0x05), [X, X, X, NO]),
    row(Op::Minu,   "minu",   R,      OP_REG,    Some(5), Some(0x05), [X, X, X, NO]),
    row(Op::Max,    "max",    R,      OP_REG,    Some(6), Some(0x05), [X, X, X, NO]),
    row(Op::Maxu,   "maxu",   R,      OP_REG,    Some(7), Some(0x05), [X, X, X, NO]),
    row(Op::Flw,    "flw",    I,      OP_LOAD_FP, Some(2), None,      [F, X, NO, NO]),
    row(Op::Fsw,    "fsw",    S,      OP_STORE_FP, Some(2), None,     [NO, X, F, NO]),
    row(Op::FaddS,  "fadd.s", R,      OP_FP,     None,    Some(0x00), [F, F, F, NO]),
    row(Op::FsubS,  "fsub.s", R,      OP_FP,     None,    Some(0x04), [F, F, F, NO]),
    row(Op::FmulS,  "fmul.s", R,      OP_FP,     None,    Some(0x08), [F, F, F, NO]),
    row(Op::FsgnjS, "fsgnj.s", R,     OP_FP,     Some(0), Some(0x10), [F, F, F, NO]),
    row(Op::FminS,  "fmin.s", R,      OP_FP,     Some(0), Some(0x14), [F, F, F, NO]),
    row(Op::FmaxS,  "fmax.s", R,      OP_FP,     Some(1), Some(0x14), [F, F, F, NO]),
    row(Op::FeqS,   "feq.s",  R,      OP_FP,     Some(2), Some(0x50), [X, F, F, NO]),
    row(Op::FltS,   "flt.s",  R,      OP_FP,     Some(1), Some(0x50), [X, F, F, NO]),
    row(Op::FleS,   "fle.s",  R,      OP_FP,     Some(0), Some(0x50), [X, F, F, NO]),
    row(Op::FmvXW,  "fmv.x.w", R1,    OP_FP,     Some(0), Some(0x70), [X, F, NO, NO]),
    row(Op::FmvWX,  "fmv.w.x", R1,    OP_FP,     Some(0), Some(0x78), [F, X, NO, NO]),
    row(Op::FmaddS, "fmadd.s", R4,    OP_FMADD,  None,    None,       [F, F, F, F]),
    row(Op::Tmc,    "tmc",    Simt,   OP_CUSTOM0, Some(0), None,      [NO, X, NO, NO]),
    row(Op::Wspawn, "wspawn", Simt,   OP_CUSTOM0, Some(1), None,      [NO, X, X, NO]),
    row(Op::Split,  "split",  Simt,   OP_CUSTOM0, Some(2), None,      [NO, X, NO, NO]),
    row(Op::Join,   "join",   Simt,   OP_CUSTOM0, Some(3), None,      [NO, NO, NO, NO]),
    row(Op::Bar,    "bar",    Simt,   OP_CUSTOM0, Some(4), None,      [NO, X, X, NO]),
    row(Op::Csrrw,  "csrrw",  Csr,    OP_SYSTEM, Some(1), None,       [X, X, NO, NO]),
    row(Op::Csrrs,  "csrrs",  Csr,    OP_SYSTEM, Some(2), None,       [X, X, NO, NO]),
    row(Op::Csrrc,  "csrrc",  Csr,    OP_SYSTEM, Some(3), None,       [X, X, NO, NO]),
    row(Op::Csrrwi, "csrrwi", CsrImm, OP_SYSTEM, Some(5), None,       [X, NO, NO, NO]),
    row(Op::Csrrsi, "csrrsi", CsrImm, OP_SYSTEM, Some(6), None,       [X, NO, NO, NO]),
    row(Op::Csrrci, "csrrci", CsrImm, OP_SYSTEM, Some(7), None,       [X, NO, NO, NO]),
];

pub fn spec_of(op: Op) -> &'static OpSpec {
    TABLE.iter().find(|s| s.op == op).expect("every op has an encoding row")
}

pub fn lookup_mnemonic(m: &str) -> Option<&'static OpSpec> {
    TABLE.iter().find(|s| s.mnemonic == m)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("immediate {imm} out of range for `{op}`")]
    ImmediateRange { op: Op, imm: i32 },
    #[error("register index {0} out of range")]
    Register(u8),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("illegal instruction {0:#010x}")]
pub struct IllegalInstruction(pub u32);

fn fits_signed(v: i32, bits: u32) -> bool {
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << (bits - 1)) - 1;
    (lo..=hi).contains(&(v as i64))
}

/// Encodes an instruction into its 32-bit word.
pub fn encode(i: &Instruction) -> Result<u32, EncodeError> {
    for r in [i.rd, i.rs1, i.rs2, i.rs3] {
        if r >= 32 {
            return Err(EncodeError::Register(r));
        }
    }
    let s = spec_of(i.op);
    let rd = (i.rd as u32) << 7;
    let rs1 = (i.rs1 as u32) << 15;
    let rs2 = (i.rs2 as u32) << 20;
    let f3 = s.funct3.unwrap_or(RM_DYN) << 12;
    let f7 = s.funct7.unwrap_or(0) << 25;
    let range = || EncodeError::ImmediateRange { op: i.op, imm: i.imm };
    let imm = i.imm;
    let word = match s.format {
        R => s.opcode | rd | f3 | rs1 | rs2 | f7,
        R1 => s.opcode | rd | f3 | rs1 | f7,
        R4 => s.opcode | rd | f3 | rs1 | rs2 | ((i.rs3 as u32) << 27),
        I => {
            if !fits_signed(imm, 12) {
                return Err(range());
            }
            s.opcode | rd | f3 | rs1 | ((imm as u32 & 0xfff) << 20)
        }
        Shift => {
            if !(0..32).contains(&imm) {
                return Err(range());
            }
            s.opcode | rd | f3 | rs1 | ((imm as u32) << 20) | f7
        }
        S => {
            if !fits_signed(imm, 12) {
                return Err(range());
            }
            let u = imm as u32;
            s.opcode | ((u & 0x1f) << 7) | f3 | rs1 | rs2 | (((u >> 5) & 0x7f) << 25)
        }
        B | Simt => {
            if imm & 1 != 0 || !fits_signed(imm, 13) {
                return Err(range());
            }
            let u = imm as u32;
            s.opcode
                | (((u >> 11) & 1) << 7)
                | (((u >> 1) & 0xf) << 8)
                | f3
                | rs1
                | rs2
                | (((u >> 5) & 0x3f) << 25)
                | (((u >> 12) & 1) << 31)
        }
        U => {
            if imm & 0xfff != 0 {
                return Err(range());
            }
            s.opcode | rd | (imm as u32 & 0xffff_f000)
        }
        J => {
            if imm & 1 != 0 || !fits_signed(imm, 21) {
                return Err(range());
            }
            let u = imm as u32;
            s.opcode
                | rd
                | (((u >> 12) & 0xff) << 12)
                | (((u >> 11) & 1) << 20)
                | (((u >> 1) & 0x3ff) << 21)
                | (((u >> 20) & 1) << 31)
        }
        Csr => s.opcode | rd | f3 | rs1 | ((i.csr as u32 & 0xfff) << 20),
        CsrImm => {
            if !(0..32).contains(&imm) {
                return Err(range());
            }
            s.opcode | rd | f3 | ((imm as u32) << 15) | ((i.csr as u32 & 0xfff) << 20)
        }
    };
    Ok(word)
}

fn sext(v: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((v << shift) as i32) >> shift
}

fn b_imm(w: u32) -> i32 {
    let v = (((w >> 31) & 1) << 12)
        | (((w >> 7) & 1) << 11)
        | (((w >> 25) & 0x3f) << 5)
        | (((w >> 8) & 0xf) << 1);
    sext(v, 13)
}

fn j_imm(w: u32) -> i32 {
    let v = (((w >> 31) & 1) << 20)
        | (((w >> 12) & 0xff) << 12)
        | (((w >> 20) & 1) << 11)
        | (((w >> 21) & 0x3ff) << 1);
    sext(v, 21)
}

fn valid_rm(rm: u32) -> bool {
    rm <= 4 || rm == RM_DYN
}

/// Decodes one instruction word.
pub fn decode(w: u32) -> Result<Instruction, IllegalInstruction> {
    let illegal = IllegalInstruction(w);
    let opcode = w & 0x7f;
    let rd = ((w >> 7) & 0x1f) as u8;
    let f3 = (w >> 12) & 7;
    let rs1 = ((w >> 15) & 0x1f) as u8;
    let rs2 = ((w >> 20) & 0x1f) as u8;
    let f7 = w >> 25;

    let spec = TABLE
        .iter()
        .find(|s| {
            if s.opcode != opcode {
                return false;
            }
            match s.format {
                R | R1 if s.opcode == OP_FP && s.funct3.is_none() => {
                    s.funct7 == Some(f7) && valid_rm(f3)
                }
                R | R1 | Shift => s.funct3 == Some(f3) && s.funct7 == Some(f7),
                R4 => (f7 & 0b11) == 0 && valid_rm(f3),
                U | J => true,
                _ => s.funct3 == Some(f3),
            }
        })
        .ok_or(illegal)?;

    let mut i = Instruction::new(spec.op);
    match spec.format {
        R => {
            i.rd = rd;
            i.rs1 = rs1;
            i.rs2 = rs2;
        }
        R1 => {
            if rs2 != 0 {
                return Err(illegal);
            }
            i.rd = rd;
            i.rs1 = rs1;
        }
        R4 => {
            i.rd = rd;
            i.rs1 = rs1;
            i.rs2 = rs2;
            i.rs3 = (w >> 27) as u8;
        }
        I => {
            i.rd = rd;
            i.rs1 = rs1;
            i.imm = sext(w >> 20, 12);
        }
        Shift => {
            i.rd = rd;
            i.rs1 = rs1;
            i.imm = rs2 as i32;
        }
        S => {
            i.rs1 = rs1;
            i.rs2 = rs2;
            i.imm = sext(((w >> 25) << 5) | ((w >> 7) & 0x1f), 12);
        }
        B => {
            i.rs1 = rs1;
            i.rs2 = rs2;
            i.imm = b_imm(w);
        }
        Simt => {
            i.imm = b_imm(w);
            let uses_rs1 = spec.rs1_space.is_some();
            let uses_rs2 = spec.rs2_space.is_some();
            let uses_imm = matches!(spec.op, Op::Split | Op::Join);
            if (!uses_rs1 && rs1 != 0) || (!uses_rs2 && rs2 != 0) || (!uses_imm && i.imm != 0) {
                return Err(illegal);
            }
            i.rs1 = rs1;
            i.rs2 = rs2;
        }
        U => {
            i.rd = rd;
            i.imm = (w & 0xffff_f000) as i32;
        }
        J => {
            i.rd = rd;
            i.imm = j_imm(w);
        }
        Csr => {
            i.rd = rd;
            i.rs1 = rs1;
            i.csr = (w >> 20) as u16;
        }
        CsrImm => {
            i.rd = rd;
            i.imm = rs1 as i32;
            i.csr = (w >> 20) as u16;
        }
    }
    Ok(i)
}

pub const INT_ABI: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

pub const FP_ABI: [&str; 32] = [
    "ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1", "fa0", "fa1", "fa2",
    "fa3", "fa4", "fa5", "fa6", "fa7", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9",
    "fs10", "fs11", "ft8", "ft9", "ft10", "ft11",
];

fn reg_name(space: Option<RegSpace>, idx: u8) -> &'static str {
    match space {
        Some(RegSpace::Fp) => FP_ABI[idx as usize],
        _ => INT_ABI[idx as usize],
    }
}

pub(crate) fn disassemble(i: &Instruction, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let s = spec_of(i.op);
    let rd = reg_name(s.rd_space, i.rd);
    let r1 = reg_name(s.rs1_space, i.rs1);
    let r2 = reg_name(s.rs2_space, i.rs2);
    let m = s.mnemonic;
    match s.format {
        R => write!(f, "{m} {rd}, {r1}, {r2}"),
        R1 => write!(f, "{m} {rd}, {r1}"),
        R4 => write!(f, "{m} {rd}, {r1}, {r2}, {}", reg_name(s.rs3_space, i.rs3)),
        I if matches!(i.op, Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu | Op::Flw | Op::Jalr) => {
            write!(f, "{m} {rd}, {}({r1})", i.imm)
        }
        I | Shift => write!(f, "{m} {rd}, {r1}, {}", i.imm),
        S => write!(f, "{m} {r2}, {}({r1})", i.imm),
        B => write!(f, "{m} {r1}, {r2}, {}", i.imm),
        U => write!(f, "{m} {rd}, {:#x}", (i.imm as u32) >> 12),
        J => write!(f, "{m} {rd}, {}", i.imm),
        Csr => write!(f, "{m} {rd}, {:#x}, {r1}", i.csr),
        CsrImm => write!(f, "{m} {rd}, {:#x}, {}", i.csr, i.imm),
        Simt => match i.op {
            Op::Tmc => write!(f, "{m} {r1}"),
            Op::Split => write!(f, "{m} {r1}, {}", i.imm),
            Op::Join => write!(f, "{m} {}", i.imm),
            _ => write!(f, "{m} {r1}, {r2}"),
        },
    }
}

/// Category a decoded word gets before any kernel annotation.
pub fn default_category(w: u32) -> Result<Category, IllegalInstruction> {
    decode(w).map(|i| i.category)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nop_decodes_as_addi_other() {
        let i = decode(0x0000_0013).unwrap();
        assert_eq!(i.op, Op::Addi);
        assert_eq!((i.rd, i.rs1, i.imm), (0, 0, 0));
        assert_eq!(i.category, Category::Other);
    }

    #[test]
    fn all_ones_is_illegal() {
        assert_eq!(decode(0xffff_ffff), Err(IllegalInstruction(0xffff_ffff)));
    }

    // Reference words produced by the LLVM RISC-V assembler
    // (`clang --target=riscv32 -march=rv32imf_zbb`).
    #[test]
    fn matches_reference_assembler_words() {
        let cases: &[(u32, &str)] = &[
            (0x0b33_5333, "minu t1, t1, s3"),
            (0xe005_8553, "fmv.x.w a0, fa1"),
            (0xf000_0553, "fmv.w.x fa0, zero"),
            (0x20a5_01d3, "fsgnj.s ft3, fa0, fa0"),
            (0xa010_0553, "fle.s a0, ft0, ft1"),
            (0x8013_d073, "csrrwi zero, 0x801, 7"),
            (0x1234_5537, "lui a0, 0x12345"),
            (0x0100_00ef, "jal ra, 16"),
            (0x4035_d513, "srai a0, a1, 3"),
            (0xfea1_0da3, "sb a0, -5(sp)"),
            (0x2030_f0c3, "fmadd.s ft1, ft1, ft3, ft4"),
            (0x0052_8293, "addi t0, t0, 5"),
            (0xfe73_cee3, "blt t2, t2, -4"),
            (0x0005_a007, "flw ft0, 0(a1)"),
            (0x0026_a027, "fsw ft2, 0(a3)"),
            (0x00b5_0533, "add a0, a0, a1"),
            (0x40b5_0533, "sub a0, a0, a1"),
            (0x02b5_0533, "mul a0, a0, a1"),
            (0x0010_70d3, "fadd.s ft1, ft0, ft1"),
            (0xcc00_22f3, "csrrs t0, 0xcc0, zero"),
        ];
        for (w, text) in cases {
            let i = decode(*w).unwrap_or_else(|e| panic!("{e} for {text}"));
            assert_eq!(i.to_string(), *text, "word {w:#010x}");
        }
    }

    #[test]
    fn fmadd_is_compute() {
        let w = 0x2030_f0c3;
        assert_eq!(default_category(w).unwrap(), Category::Compute);
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        (0..TABLE.len(), any::<[u8; 4]>(), any::<i32>(), 0u16..0x1000).prop_map(
            |(row, regs, raw, csr)| {
                let s = &TABLE[row];
                let mut i = Instruction::new(s.op);
                let r = |k: usize| regs[k] % 32;
                match s.format {
                    R => {
                        i.rd = r(0);
                        i.rs1 = r(1);
                        i.rs2 = r(2);
                    }
                    R1 => {
                        i.rd = r(0);
                        i.rs1 = r(1);
                    }
                    R4 => {
                        i.rd = r(0);
                        i.rs1 = r(1);
                        i.rs2 = r(2);
                        i.rs3 = r(3);
                    }
                    I => {
                        i.rd = r(0);
                        i.rs1 = r(1);
                        i.imm = sext(raw as u32, 12);
                    }
                    Shift => {
                        i.rd = r(0);
                        i.rs1 = r(1);
                        i.imm = raw.rem_euclid(32);
                    }
                    S => {
                        i.rs1 = r(1);
                        i.rs2 = r(2);
                        i.imm = sext(raw as u32, 12);
                    }
                    B => {
                        i.rs1 = r(1);
                        i.rs2 = r(2);
                        i.imm = sext(raw as u32, 13) & !1;
                    }
                    U => {
                        i.rd = r(0);
                        i.imm = raw & !0xfff;
                    }
                    J => {
                        i.rd = r(0);
                        i.imm = sext(raw as u32, 21) & !1;
                    }
                    Csr => {
                        i.rd = r(0);
                        i.rs1 = r(1);
                        i.csr = csr;
                    }
                    CsrImm => {
                        i.rd = r(0);
                        i.imm = raw.rem_euclid(32);
                        i.csr = csr;
                    }
                    Simt => {
                        if s.rs1_space.is_some() {
                            i.rs1 = r(1);
                        }
                        if s.rs2_space.is_some() {
                            i.rs2 = r(2);
                        }
                        if matches!(s.op, Op::Split | Op::Join) {
                            i.imm = sext(raw as u32, 13) & !1;
                        }
                    }
                }
                i
            },
        )
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(i in arb_instruction()) {
            let w = encode(&i).unwrap();
            prop_assert_eq!(decode(w).unwrap(), i);
        }
    }
}
