use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which of the decoupling extensions are instantiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Extensions {
    pub cfm: bool,
    pub lps: bool,
    pub dmsl: bool,
}

impl Extensions {
    pub const NONE: Extensions = Extensions { cfm: false, lps: false, dmsl: false };
    pub const ALL: Extensions = Extensions { cfm: true, lps: true, dmsl: true };
}

impl Default for Extensions {
    fn default() -> Self {
        Extensions::ALL
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse `{value}` for `{key}`")]
    Parse { key: String, value: String },
}

/// All design-time knobs of one core.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoreConfig {
    pub num_warps: usize,
    pub num_threads: usize,
    pub loop_levels: usize,
    pub num_dmsl: usize,
    pub fifo_credits: usize,
    pub cache_ports: usize,
    pub cache_banks: usize,
    pub cache_size: usize,
    pub line_size: usize,
    pub associativity: usize,
    /// Outstanding line fills tracked per bank.
    pub mshr_per_bank: usize,
    pub hit_latency: u64,
    pub miss_latency: u64,
    pub shared_mem_latency: u64,
    pub alu_latency: u64,
    pub fpu_latency: u64,
    pub csr_latency: u64,
    pub lsu_queue_depth: usize,
    pub ibuffer_depth: usize,
    pub ipdom_depth: usize,
    /// Flat backing memory size in bytes.
    pub mem_size: usize,
    pub shared_mem_size: usize,
    pub max_cycles: u64,
    pub extensions: Extensions,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig {
            num_warps: 8,
            num_threads: 16,
            loop_levels: 4,
            num_dmsl: 3,
            fifo_credits: 8,
            cache_ports: 3,
            cache_banks: 8,
            cache_size: 16 * 1024,
            line_size: 64,
            associativity: 2,
            mshr_per_bank: 16,
            hit_latency: 2,
            miss_latency: 40,
            shared_mem_latency: 2,
            alu_latency: 1,
            fpu_latency: 4,
            csr_latency: 1,
            lsu_queue_depth: 4,
            ibuffer_depth: 2,
            ipdom_depth: 32,
            mem_size: 32 << 20,
            shared_mem_size: 64 * 1024,
            max_cycles: 200_000_000,
            extensions: Extensions::ALL,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

impl CoreConfig {
    pub fn full_mask(&self) -> u32 {
        if self.num_threads >= 32 {
            u32::MAX
        } else {
            (1u32 << self.num_threads) - 1
        }
    }

    pub fn hw_threads(&self) -> usize {
        self.num_warps * self.num_threads
    }

    pub fn num_lines(&self) -> usize {
        self.cache_size / self.line_size
    }

    pub fn num_sets(&self) -> usize {
        self.num_lines() / self.associativity
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ext = self.extensions;
        if self.num_warps == 0 || self.num_warps > 32 {
            return Err(invalid("num_warps", "must be in 1..=32"));
        }
        if self.num_threads == 0 || self.num_threads > 32 {
            return Err(invalid("num_threads", "must be in 1..=32 (mask width)"));
        }
        if ext.cfm && (self.loop_levels == 0 || self.loop_levels > 8) {
            return Err(invalid("loop_levels", "must be in 1..=8 when CFM is enabled"));
        }
        if ext.lps && !ext.cfm {
            return Err(invalid("extensions", "LPS requires the CFM"));
        }
        if ext.dmsl {
            if self.num_dmsl == 0 || self.num_dmsl > 8 {
                return Err(invalid("num_dmsl", "must be in 1..=8 when DMSLs are enabled"));
            }
            if self.fifo_credits == 0 {
                return Err(invalid("fifo_credits", "must be at least 1"));
            }
        }
        if self.cache_ports == 0 {
            return Err(invalid("cache_ports", "must be at least 1"));
        }
        if !self.line_size.is_power_of_two() || self.line_size < 4 {
            return Err(invalid("line_size", "must be a power of two >= 4"));
        }
        if !self.cache_banks.is_power_of_two() {
            return Err(invalid("cache_banks", "must be a power of two"));
        }
        if !self.associativity.is_power_of_two() {
            return Err(invalid("associativity", "must be a power of two"));
        }
        if !self.cache_size.is_multiple_of(self.line_size * self.associativity)
            || !self.num_lines().is_power_of_two()
            || self.num_sets() == 0
        {
            return Err(invalid("cache_size", "must hold a power-of-two number of lines"));
        }
        if self.mshr_per_bank == 0 || self.lsu_queue_depth == 0 || self.ibuffer_depth == 0 {
            return Err(invalid("mshr_per_bank", "queue depths must be at least 1"));
        }
        if self.alu_latency == 0 || self.fpu_latency == 0 || self.csr_latency == 0 {
            return Err(invalid("alu_latency", "latencies must be at least 1 cycle"));
        }
        if self.hit_latency == 0 || self.miss_latency < self.hit_latency {
            return Err(invalid("miss_latency", "need 1 <= hit_latency <= miss_latency"));
        }
        Ok(())
    }

    /// Applies one `key=value` setting (config files and CLI overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse::<T>().map_err(|_| ConfigError::Parse {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
            match value.trim() {
                "1" | "true" | "on" | "yes" => Ok(true),
                "0" | "false" | "off" | "no" => Ok(false),
                _ => Err(ConfigError::Parse { key: key.to_string(), value: value.to_string() }),
            }
        }
        match key.trim() {
            "warps" | "num_warps" => self.num_warps = num(key, value)?,
            "threads" | "num_threads" => self.num_threads = num(key, value)?,
            "loop_levels" => self.loop_levels = num(key, value)?,
            "dmsls" | "num_dmsl" => self.num_dmsl = num(key, value)?,
            "credits" | "fifo_credits" => self.fifo_credits = num(key, value)?,
            "ports" | "cache_ports" => self.cache_ports = num(key, value)?,
            "cache_banks" => self.cache_banks = num(key, value)?,
            "cache_size" => self.cache_size = num(key, value)?,
            "line_size" => self.line_size = num(key, value)?,
            "associativity" => self.associativity = num(key, value)?,
            "mshr_per_bank" => self.mshr_per_bank = num(key, value)?,
            "hit_latency" => self.hit_latency = num(key, value)?,
            "miss_latency" => self.miss_latency = num(key, value)?,
            "shared_mem_latency" => self.shared_mem_latency = num(key, value)?,
            "alu_latency" => self.alu_latency = num(key, value)?,
            "fpu_latency" => self.fpu_latency = num(key, value)?,
            "csr_latency" => self.csr_latency = num(key, value)?,
            "lsu_queue_depth" => self.lsu_queue_depth = num(key, value)?,
            "ibuffer_depth" => self.ibuffer_depth = num(key, value)?,
            "ipdom_depth" => self.ipdom_depth = num(key, value)?,
            "mem_size" => self.mem_size = num(key, value)?,
            "max_cycles" => self.max_cycles = num(key, value)?,
            "cfm" => self.extensions.cfm = flag(key, value)?,
            "lps" => self.extensions.lps = flag(key, value)?,
            "dmsl" => self.extensions.dmsl = flag(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Parse { key: line.to_string(), value: String::new() });
            };
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Short identifier such as `w8t16p3r3c8`.
    pub fn id(&self) -> String {
        format!(
            "w{}t{}p{}r{}c{}",
            self.num_warps, self.num_threads, self.cache_ports, self.num_dmsl, self.fifo_credits
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        CoreConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_wide_warps_and_odd_lines() {
        let mut c = CoreConfig { num_threads: 33, ..Default::default() };
        assert!(c.validate().is_err());
        c.num_threads = 16;
        c.line_size = 48;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_text_applies_in_order() {
        let mut c = CoreConfig::default();
        c.apply_kv_text("warps=4 # fewer\nthreads = 8\ndmsl=off\nlps=off\n").unwrap();
        assert_eq!((c.num_warps, c.num_threads), (4, 8));
        assert!(!c.extensions.dmsl && !c.extensions.lps && c.extensions.cfm);
        assert!(matches!(c.set("bogus", "1"), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn full_mask_covers_32_threads() {
        let c = CoreConfig { num_threads: 32, ..Default::default() };
        assert_eq!(c.full_mask(), u32::MAX);
        let c = CoreConfig { num_threads: 4, ..Default::default() };
        assert_eq!(c.full_mask(), 0xf);
    }
}
