//! Per-lane semantics of the integer and floating-point operations.

use crate::isa::Op;

fn f(x: u32) -> f32 {
    f32::from_bits(x)
}

/// Integer result of a non-memory, non-control ALU op.
pub fn alu(op: Op, a: u32, b: u32, imm: i32, pc: u32) -> u32 {
    use Op::*;
    let i = imm as u32;
    match op {
        Lui => i,
        Auipc => pc.wrapping_add(i),
        Addi => a.wrapping_add(i),
        Slti => ((a as i32) < imm) as u32,
        Sltiu => (a < i) as u32,
        Xori => a ^ i,
        Ori => a | i,
        Andi => a & i,
        Slli => a << (i & 31),
        Srli => a >> (i & 31),
        Srai => ((a as i32) >> (i & 31)) as u32,
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Sll => a << (b & 31),
        Slt => ((a as i32) < (b as i32)) as u32,
        Sltu => (a < b) as u32,
        Xor => a ^ b,
        Srl => a >> (b & 31),
        Sra => ((a as i32) >> (b & 31)) as u32,
        Or => a | b,
        And => a & b,
        Mul => a.wrapping_mul(b),
        Min => (a as i32).min(b as i32) as u32,
        Minu => a.min(b),
        Max => (a as i32).max(b as i32) as u32,
        Maxu => a.max(b),
        _ => unreachable!("{op:?} is not an ALU op"),
    }
}

/// Result bits of an FPU op. `c` is the addend of `fmadd.s`.
pub fn fpu(op: Op, a: u32, b: u32, c: u32) -> u32 {
    use Op::*;
    match op {
        FaddS => (f(a) + f(b)).to_bits(),
        FsubS => (f(a) - f(b)).to_bits(),
        FmulS => (f(a) * f(b)).to_bits(),
        FmaddS => f(a).mul_add(f(b), f(c)).to_bits(),
        FminS => f(a).min(f(b)).to_bits(),
        FmaxS => f(a).max(f(b)).to_bits(),
        FsgnjS => (a & 0x7fff_ffff) | (b & 0x8000_0000),
        FltS => (f(a) < f(b)) as u32,
        FleS => (f(a) <= f(b)) as u32,
        FeqS => (f(a) == f(b)) as u32,
        FmvXW | FmvWX => a,
        _ => unreachable!("{op:?} is not an FPU op"),
    }
}

/// Branch condition.
pub fn taken(op: Op, a: u32, b: u32) -> bool {
    use Op::*;
    match op {
        Beq => a == b,
        Bne => a != b,
        Blt => (a as i32) < (b as i32),
        Bge => (a as i32) >= (b as i32),
        Bltu => a < b,
        Bgeu => a >= b,
        _ => unreachable!("{op:?} is not a branch"),
    }
}

/// Access width in bytes and whether loads sign-extend.
pub fn mem_width(op: Op) -> (u32, bool) {
    use Op::*;
    match op {
        Lb | Sb => (1, true),
        Lh | Sh => (2, true),
        Lbu => (1, false),
        Lhu => (2, false),
        _ => (4, false),
    }
}

pub fn extend(v: u32, width: u32, signed: bool) -> u32 {
    match (width, signed) {
        (1, true) => v as u8 as i8 as i32 as u32,
        (2, true) => v as u16 as i16 as i32 as u32,
        _ => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_ops() {
        assert_eq!(alu(Op::Sub, 3, 5, 0, 0), (-2i32) as u32);
        assert_eq!(alu(Op::Srai, 0x8000_0000, 0, 4, 0), 0xf800_0000);
        assert_eq!(alu(Op::Minu, 7, 16, 0, 0), 7);
        assert_eq!(alu(Op::Min, (-1i32) as u32, 3, 0, 0), (-1i32) as u32);
        assert_eq!(alu(Op::Srl, 0xffff, 0, 0, 0), 0xffff);
        assert_eq!(alu(Op::Auipc, 0, 0, 0x1000, 0x40), 0x1040);
    }

    #[test]
    fn fused_multiply_add_rounds_once() {
        let a = 1.0f32 + f32::EPSILON;
        let c = -(1.0f32 + 2.0 * f32::EPSILON);
        let r = f32::from_bits(fpu(Op::FmaddS, a.to_bits(), a.to_bits(), c.to_bits()));
        assert_eq!(r, f32::EPSILON * f32::EPSILON);
        assert_ne!(a * a + c, r);
    }

    #[test]
    fn sign_extension() {
        assert_eq!(extend(0x80, 1, true), 0xffff_ff80);
        assert_eq!(extend(0x80, 1, false), 0x80);
        assert_eq!(extend(0x8000, 2, true), 0xffff_8000);
    }
}
