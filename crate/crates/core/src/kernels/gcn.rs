//! `gcn_aggr`: neighbour-sum aggregation of k = 16 node features over a
//! seeded Erdős–Rényi graph in CSR form.
//!
//! Work item `e` is feature `e % 16` of node `e / 16`, so the lanes of a
//! warp iteration cover the features of one node (or a slice of them) and the
//! neighbour loop is uniform across the warp. The neighbour loop has a
//! data-dependent trip count and stays a software loop in every variant.

use super::builder::{Kb, COMP, LOOP, MEM, OTHER};
use super::{bits, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FEATURES: usize = 16;
/// Mean out-degree of the generated graphs.
pub const MEAN_DEGREE: f64 = 2.0;

pub struct Gcn {
    pub row_ptr: Vec<u32>,
    pub col: Vec<u32>,
    /// [node][feature]
    pub feat: Vec<f32>,
}

impl Gcn {
    pub fn new(n: usize, cfg: &CoreConfig, rng: &mut ChaCha8Rng) -> Result<Self, KernelError> {
        let t = cfg.num_threads;
        if t > FEATURES || !FEATURES.is_multiple_of(t) {
            return Err(KernelError::UnsupportedConfig(format!(
                "gcn_aggr maps features to lanes and needs T dividing {FEATURES}, got T={t}"
            )));
        }
        let nodes = n.div_ceil(FEATURES).max(1);
        Ok(Self::random(nodes, rng))
    }

    pub fn random(nodes: usize, rng: &mut ChaCha8Rng) -> Self {
        let p = (MEAN_DEGREE / nodes.saturating_sub(1).max(1) as f64).min(1.0);
        let mut row_ptr = vec![0u32];
        let mut col = Vec::new();
        for v in 0..nodes {
            for u in 0..nodes {
                if u != v && rng.gen_bool(p) {
                    col.push(u as u32);
                }
            }
            row_ptr.push(col.len() as u32);
        }
        let feat = values(rng, nodes * FEATURES);
        Gcn { row_ptr, col, feat }
    }

    pub fn nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }
}

impl Problem for Gcn {
    fn bench(&self) -> Bench {
        Bench::GcnAggr
    }

    fn items(&self) -> usize {
        self.nodes() * FEATURES
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        if v.dmsl() {
            return Err(super::unsupported(Bench::GcnAggr, v));
        }
        let n = self.items();
        let mut k = Kb::new(cfg, v, n);
        k.require_levels(0)?;
        let row_ptr = k.heap.words(&self.row_ptr);
        let col = k.heap.words(&self.col);
        let feat = k.heap.floats(&self.feat);
        let out = k.output("out", n);
        k.prologue();
        k.item_ptr("a2", out, 4);
        k.li("a6", row_ptr);
        k.li("a5", col);
        k.li("a7", feat);
        k.begin_loop();
        k.ins(OTHER, format!("srli t3, s2, {}", FEATURES.trailing_zeros()));
        k.ins(OTHER, format!("andi t4, s2, {}", FEATURES - 1));
        k.ins(OTHER, "slli t3, t3, 2");
        k.ins(MEM, "add t3, t3, a6");
        k.ins(MEM, "lw t5, 0(t3)");
        k.ins(MEM, "lw t6, 4(t3)");
        k.ins(OTHER, "fmv.w.x ft3, zero");
        k.ins(OTHER, "slli t4, t4, 2");
        k.ins(MEM, "add a4, a7, t4");
        k.ins(OTHER, "slli t3, t5, 2");
        k.ins(MEM, "add a3, a5, t3");
        k.ins(LOOP, "bge t5, t6, skip");
        k.label("nbr");
        k.ins(MEM, "lw t1, 0(a3)");
        k.ins(MEM, format!("slli t1, t1, {}", (FEATURES * 4).trailing_zeros()));
        k.ins(MEM, "add t1, t1, a4");
        k.ins(MEM, "flw ft0, 0(t1)");
        k.ins(COMP, "fadd.s ft3, ft3, ft0");
        k.ins(MEM, "addi a3, a3, 4");
        k.ins(LOOP, "addi t5, t5, 1");
        k.ins(LOOP, "blt t5, t6, nbr");
        k.label("skip");
        k.ins(MEM, "fsw ft3, 0(a2)");
        k.update(MEM, "add a2, a2, s8");
        k.end_loop(true);
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::with_capacity(self.items());
        for v in 0..self.nodes() {
            let nbrs = &self.col[self.row_ptr[v] as usize..self.row_ptr[v + 1] as usize];
            for f in 0..FEATURES {
                out.push(nbrs.iter().fold(0.0f32, |acc, &u| acc + self.feat[u as usize * FEATURES + f]));
            }
        }
        vec![bits(&out)]
    }
}
