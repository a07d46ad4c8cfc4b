//! Instruction set: an RV32I/RV32F subset plus SIMT control and CSR access.
//!
//! Encodings for the RISC-V subset are the standard ones. SIMT operations
//! live in the `custom-0` major opcode; see [`encoding`] for the table.

mod asm;
pub mod encoding;

pub use asm::{assemble, AsmError, KernelImage};
pub use encoding::{decode, encode};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Operation mnemonic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    // RV32I
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    // RV32M / Zbb pieces used for index and mask arithmetic
    Mul,
    Min,
    Minu,
    Max,
    Maxu,
    // RV32F subset
    Flw,
    Fsw,
    FaddS,
    FsubS,
    FmulS,
    FminS,
    FmaxS,
    FmaddS,
    FsgnjS,
    FltS,
    FleS,
    FeqS,
    FmvXW,
    FmvWX,
    // SIMT control
    Tmc,
    Wspawn,
    Split,
    Join,
    Bar,
    // CSR access
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
}

/// Semantic instruction class used for dynamic-instruction accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    LoopCF,
    Predication,
    Memory,
    Compute,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::LoopCF,
        Category::Predication,
        Category::Memory,
        Category::Compute,
        Category::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short tag used by `#cat:` annotations and trace output.
    pub fn tag(self) -> &'static str {
        match self {
            Category::LoopCF => "loop",
            Category::Predication => "pred",
            Category::Memory => "mem",
            Category::Compute => "comp",
            Category::Other => "other",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loop" => Ok(Category::LoopCF),
            "pred" => Ok(Category::Predication),
            "mem" => Ok(Category::Memory),
            "comp" => Ok(Category::Compute),
            "other" => Ok(Category::Other),
            _ => Err(format!("unknown category `{s}`")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Which functional unit executes an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Unit {
    Alu,
    Fpu,
    Lsu,
    Csr,
}

/// Register file selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegSpace {
    Int,
    Fp,
}

/// A register operand: index plus file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reg {
    pub space: RegSpace,
    pub index: u8,
}

impl Reg {
    pub fn int(index: u8) -> Self {
        Reg { space: RegSpace::Int, index }
    }

    pub fn fp(index: u8) -> Self {
        Reg { space: RegSpace::Fp, index }
    }

    /// `x0` is hardwired and never tracked.
    pub fn is_zero(self) -> bool {
        self.space == RegSpace::Int && self.index == 0
    }
}

/// Default category of an opcode. Integer ALU ops are ambiguous (iterator,
/// address or mask arithmetic) and default to `Other`; kernels refine them
/// with `#cat:` annotations.
pub fn classify(op: Op) -> Category {
    use Op::*;
    match op {
        Jal | Jalr | Beq | Bne | Blt | Bge | Bltu | Bgeu => Category::LoopCF,
        Tmc | Split | Join => Category::Predication,
        Lb | Lh | Lw | Lbu | Lhu | Sb | Sh | Sw | Flw | Fsw => Category::Memory,
        FaddS | FsubS | FmulS | FminS | FmaxS | FmaddS => Category::Compute,
        _ => Category::Other,
    }
}

impl Op {
    pub fn unit(self) -> Unit {
        use Op::*;
        match self {
            Lb | Lh | Lw | Lbu | Lhu | Sb | Sh | Sw | Flw | Fsw => Unit::Lsu,
            FaddS | FsubS | FmulS | FminS | FmaxS | FmaddS | FsgnjS | FltS | FleS | FeqS
            | FmvXW | FmvWX => Unit::Fpu,
            Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => Unit::Csr,
            _ => Unit::Alu,
        }
    }

    /// Operations that redirect the warp's PC or thread mask; fetch of the
    /// warp is held until they resolve.
    pub fn is_control(self) -> bool {
        use Op::*;
        matches!(
            self,
            Jal | Jalr | Beq | Bne | Blt | Bge | Bltu | Bgeu | Tmc | Wspawn | Split | Join | Bar
        )
    }

    pub fn is_branch(self) -> bool {
        use Op::*;
        matches!(self, Beq | Bne | Blt | Bge | Bltu | Bgeu)
    }

    /// Retired thread-level FLOPs per active lane (fmadd counts as one).
    pub fn flops(self) -> u64 {
        use Op::*;
        match self {
            FaddS | FsubS | FmulS | FminS | FmaxS | FmaddS => 1,
            _ => 0,
        }
    }

    pub fn is_csr(self) -> bool {
        self.unit() == Unit::Csr
    }

    pub fn mnemonic(self) -> &'static str {
        encoding::spec_of(self).mnemonic
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// A decoded instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub rs3: u8,
    pub imm: i32,
    /// 12-bit CSR address for CSR ops.
    pub csr: u16,
    pub category: Category,
}

impl Instruction {
    pub fn new(op: Op) -> Self {
        Instruction { op, rd: 0, rs1: 0, rs2: 0, rs3: 0, imm: 0, csr: 0, category: classify(op) }
    }

    pub fn nop() -> Self {
        Instruction::new(Op::Addi)
    }

    /// Destination register, if the op writes one.
    pub fn dest(&self) -> Option<Reg> {
        use encoding::Format::*;
        let spec = encoding::spec_of(self.op);
        let reg = match spec.format {
            S | B | Simt => return None,
            _ => match spec.rd_space {
                Some(RegSpace::Fp) => Reg::fp(self.rd),
                Some(RegSpace::Int) => Reg::int(self.rd),
                None => return None,
            },
        };
        if reg.is_zero() {
            None
        } else {
            Some(reg)
        }
    }

    /// Source registers in operand order (rs1, rs2, rs3), deduplicated.
    pub fn sources(&self) -> Vec<Reg> {
        let spec = encoding::spec_of(self.op);
        let mut out: Vec<Reg> = Vec::with_capacity(3);
        let mut push = |space: Option<RegSpace>, index: u8| {
            if let Some(space) = space {
                let r = Reg { space, index };
                if !r.is_zero() && !out.contains(&r) {
                    out.push(r);
                }
            }
        };
        push(spec.rs1_space, self.rs1);
        push(spec.rs2_space, self.rs2);
        push(spec.rs3_space, self.rs3);
        out
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        encoding::disassemble(self, f)
    }
}

pub const TEXT_BASE: u32 = 0x0000_1000;
