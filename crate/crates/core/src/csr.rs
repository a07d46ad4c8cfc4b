//! CSR address space.
//!
//! Extension registers use an 8-bit address `[7:6 type | 5:3 unit | 2:0 reg]`
//! placed at `EXT_BASE` inside the 12-bit custom read/write range. A few
//! read-only machine CSRs expose thread and warp identity.
//!
//! | type | unit         | reg 0    | reg 1       | reg 2     | reg 3        | reg 4 | reg 5  |
//! |------|--------------|----------|-------------|-----------|--------------|-------|--------|
//! | 0    | loop level   | start PC | end PC      | tail mask | bound/enable | state | -      |
//! | 1    | stream lane  | base     | config word | count     | -            | -     | stride |
//!
//! Stream config word: `reg[4:0] space[6:5] precision[9:7] prefetch[10]
//! redirect[11] mode[13:12]`, with space 0 = integer, 1 = FP, precision as
//! log2 of the element size and mode 1 = read, 2 = write, 3 = read-write.

use crate::isa::{Reg, RegSpace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXT_BASE: u16 = 0x800;

pub const CSR_THREAD_ID: u16 = 0xCC0;
pub const CSR_WARP_ID: u16 = 0xCC1;
pub const CSR_TMASK: u16 = 0xCC4;
pub const CSR_NUM_THREADS: u16 = 0xFC0;
pub const CSR_NUM_WARPS: u16 = 0xFC1;

pub const DMSL_REG_BASE: u8 = 0;
pub const DMSL_REG_CFG: u8 = 1;
pub const DMSL_REG_COUNT: u8 = 2;
pub const DMSL_REG_STRIDE: u8 = 5;

const CFM_REG_NAMES: [&str; 5] = ["start", "end", "tail", "bound", "state"];
const DMSL_REG_NAMES: [(&str, u8); 4] =
    [("base", DMSL_REG_BASE), ("cfg", DMSL_REG_CFG), ("count", DMSL_REG_COUNT), ("stride", DMSL_REG_STRIDE)];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CsrError {
    #[error("CSR {0:#05x} is not mapped")]
    UnmappedCsr(u16),
    #[error("{kind:?} unit {id} is not instantiated")]
    InvalidUnit { kind: UnitType, id: u8 },
    #[error("{kind:?} register {reg} does not exist")]
    InvalidRegId { kind: UnitType, reg: u8 },
    #[error("CSR {0:#05x} is read-only")]
    ReadOnly(u16),
    #[error("bad stream config word {0:#x}")]
    BadConfigWord(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitType {
    Cfm,
    Dmsl,
}

/// Decoded 8-bit extension CSR address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CsrAddress {
    pub unit_type: UnitType,
    pub unit_id: u8,
    pub reg: u8,
}

impl CsrAddress {
    pub fn new(unit_type: UnitType, unit_id: u8, reg: u8) -> Self {
        CsrAddress { unit_type, unit_id, reg }
    }

    pub fn to_byte(self) -> u8 {
        let ty = match self.unit_type {
            UnitType::Cfm => 0,
            UnitType::Dmsl => 1,
        };
        (ty << 6) | ((self.unit_id & 7) << 3) | (self.reg & 7)
    }

    pub fn from_byte(b: u8) -> Result<Self, CsrError> {
        let unit_type = match b >> 6 {
            0 => UnitType::Cfm,
            1 => UnitType::Dmsl,
            _ => return Err(CsrError::UnmappedCsr(EXT_BASE | b as u16)),
        };
        Ok(CsrAddress { unit_type, unit_id: (b >> 3) & 7, reg: b & 7 })
    }

    /// Full 12-bit CSR number.
    pub fn csr(self) -> u16 {
        EXT_BASE | self.to_byte() as u16
    }

    fn check(self, levels: usize, dmsls: usize) -> Result<Self, CsrError> {
        let (count, valid_reg) = match self.unit_type {
            UnitType::Cfm => (levels, self.reg <= 4),
            UnitType::Dmsl => (dmsls, DMSL_REG_NAMES.iter().any(|(_, r)| *r == self.reg)),
        };
        if self.unit_id as usize >= count {
            return Err(CsrError::InvalidUnit { kind: self.unit_type, id: self.unit_id });
        }
        if !valid_reg {
            return Err(CsrError::InvalidRegId { kind: self.unit_type, reg: self.reg });
        }
        Ok(self)
    }
}

/// Where a 12-bit CSR number routes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsrTarget {
    ThreadId,
    WarpId,
    ThreadMask,
    NumThreads,
    NumWarps,
    Ext(CsrAddress),
}

impl CsrTarget {
    pub fn is_read_only(self) -> bool {
        !matches!(self, CsrTarget::Ext(_))
    }
}

/// Routes a CSR number, validating unit and register ids against the
/// instantiated loop levels and stream lanes.
pub fn lookup(csr: u16, levels: usize, dmsls: usize) -> Result<CsrTarget, CsrError> {
    Ok(match csr {
        CSR_THREAD_ID => CsrTarget::ThreadId,
        CSR_WARP_ID => CsrTarget::WarpId,
        CSR_TMASK => CsrTarget::ThreadMask,
        CSR_NUM_THREADS => CsrTarget::NumThreads,
        CSR_NUM_WARPS => CsrTarget::NumWarps,
        c if c & 0xF00 == EXT_BASE => {
            CsrTarget::Ext(CsrAddress::from_byte((c & 0xFF) as u8)?.check(levels, dmsls)?)
        }
        c => return Err(CsrError::UnmappedCsr(c)),
    })
}

/// Resolves symbolic CSR names used in kernel sources: `tid`, `wid`,
/// `tmask`, `nt`, `nw`, `cfm<L>.<reg>` and `dmsl<R>.<reg>`.
pub fn parse_csr_name(name: &str) -> Option<u16> {
    match name {
        "tid" => return Some(CSR_THREAD_ID),
        "wid" => return Some(CSR_WARP_ID),
        "tmask" => return Some(CSR_TMASK),
        "nt" => return Some(CSR_NUM_THREADS),
        "nw" => return Some(CSR_NUM_WARPS),
        _ => {}
    }
    let (unit, reg) = name.split_once('.')?;
    let (ty, id) = if let Some(id) = unit.strip_prefix("cfm") {
        (UnitType::Cfm, id)
    } else {
        (UnitType::Dmsl, unit.strip_prefix("dmsl")?)
    };
    let id: u8 = id.parse().ok().filter(|i| *i < 8)?;
    let reg = match ty {
        UnitType::Cfm => CFM_REG_NAMES.iter().position(|n| *n == reg)? as u8,
        UnitType::Dmsl => DMSL_REG_NAMES.iter().find(|(n, _)| *n == reg)?.1,
    };
    Some(CsrAddress::new(ty, id, reg).csr())
}

/// Read-modify-write semantics of the three CSR instruction flavours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsrOp {
    Write,
    Set,
    Clear,
}

impl CsrOp {
    pub fn apply(self, old: u32, src: u32) -> u32 {
        match self {
            CsrOp::Write => src,
            CsrOp::Set => old | src,
            CsrOp::Clear => old & !src,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamMode {
    Read,
    Write,
    ReadWrite,
}

impl StreamMode {
    pub fn reads(self) -> bool {
        matches!(self, StreamMode::Read | StreamMode::ReadWrite)
    }

    pub fn writes(self) -> bool {
        matches!(self, StreamMode::Write | StreamMode::ReadWrite)
    }
}

/// Unpacked stream config word. A word with mode 0 disables the lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamCfg {
    pub reg: Reg,
    /// Element size in bytes: 1, 2 or 4.
    pub elem_bytes: u32,
    pub prefetch: bool,
    pub redirect: bool,
    pub mode: StreamMode,
}

impl StreamCfg {
    pub fn pack(&self) -> u32 {
        let space = match self.reg.space {
            RegSpace::Int => 0,
            RegSpace::Fp => 1,
        };
        let mode = match self.mode {
            StreamMode::Read => 1,
            StreamMode::Write => 2,
            StreamMode::ReadWrite => 3,
        };
        (self.reg.index as u32 & 31)
            | (space << 5)
            | (self.elem_bytes.trailing_zeros() << 7)
            | ((self.prefetch as u32) << 10)
            | ((self.redirect as u32) << 11)
            | (mode << 12)
    }

    /// `Ok(None)` for a disabling word (mode 0).
    pub fn unpack(word: u32) -> Result<Option<StreamCfg>, CsrError> {
        let bad = || CsrError::BadConfigWord(word);
        if word >> 14 != 0 {
            return Err(bad());
        }
        let mode = match (word >> 12) & 3 {
            0 => return Ok(None),
            1 => StreamMode::Read,
            2 => StreamMode::Write,
            _ => StreamMode::ReadWrite,
        };
        let space = match (word >> 5) & 3 {
            0 => RegSpace::Int,
            1 => RegSpace::Fp,
            _ => return Err(bad()),
        };
        let elem_bytes = match (word >> 7) & 7 {
            p @ 0..=2 => 1 << p,
            _ => return Err(bad()),
        };
        let reg = Reg { space, index: (word & 31) as u8 };
        let redirect = word & (1 << 11) != 0;
        if redirect && reg.is_zero() {
            return Err(bad());
        }
        Ok(Some(StreamCfg { reg, elem_bytes, prefetch: word & (1 << 10) != 0, redirect, mode }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn field_decode() {
        let a = CsrAddress::from_byte(0b01_000_000).unwrap();
        assert_eq!(a, CsrAddress::new(UnitType::Dmsl, 0, 0));
        let a = CsrAddress::from_byte(0b00_001_011).unwrap();
        assert_eq!(a, CsrAddress::new(UnitType::Cfm, 1, 3));
        assert!(CsrAddress::from_byte(0b10_000_000).is_err());
    }

    #[test]
    fn unit_id_out_of_range() {
        let csr = CsrAddress::new(UnitType::Dmsl, 3, 0).csr();
        assert_eq!(
            lookup(csr, 3, 3),
            Err(CsrError::InvalidUnit { kind: UnitType::Dmsl, id: 3 })
        );
        let csr = CsrAddress::new(UnitType::Dmsl, 0, 3).csr();
        assert!(matches!(lookup(csr, 3, 3), Err(CsrError::InvalidRegId { .. })));
        assert_eq!(lookup(0x123, 3, 3), Err(CsrError::UnmappedCsr(0x123)));
    }

    #[test]
    fn names_resolve() {
        assert_eq!(parse_csr_name("cfm1.bound"), Some(0x80B));
        assert_eq!(parse_csr_name("dmsl0.base"), Some(0x840));
        assert_eq!(parse_csr_name("dmsl2.stride"), Some(0x800 | 0x40 | (2 << 3) | 5));
        assert_eq!(parse_csr_name("tid"), Some(CSR_THREAD_ID));
        assert_eq!(parse_csr_name("cfm9.start"), None);
        assert_eq!(parse_csr_name("dmsl0.bound"), None);
    }

    #[test]
    fn config_word_fields() {
        let w = 6 | (2 << 7) | (1 << 10) | (1 << 11) | (1 << 12);
        let c = StreamCfg::unpack(w).unwrap().unwrap();
        assert_eq!(c.reg, Reg::int(6));
        assert_eq!(c.elem_bytes, 4);
        assert!(c.prefetch && c.redirect);
        assert_eq!(c.mode, StreamMode::Read);
        assert_eq!(c.pack(), w);
        assert_eq!(StreamCfg::unpack(0).unwrap(), None);
        assert!(StreamCfg::unpack(1 << 15).is_err());
    }

    proptest! {
        #[test]
        fn set_then_clear_restores(old in any::<u32>(), bits in any::<u32>()) {
            let set = CsrOp::Set.apply(old, bits);
            let cleared = CsrOp::Clear.apply(set, bits);
            prop_assert_eq!(cleared, old & !bits);
            // bits already clear in the original come back exactly
            prop_assert_eq!(CsrOp::Clear.apply(CsrOp::Set.apply(old & !bits, bits), bits), old & !bits);
        }

        #[test]
        fn address_byte_round_trip(b in 0u8..0x80) {
            prop_assert_eq!(CsrAddress::from_byte(b).unwrap().to_byte(), b);
        }
    }
}
