//! FK configurations, boundary conditions, weights and exact enumeration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{DobrushinDomain, PrimalGraph, Site};
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FkError {
    #[error("invalid parameters p={p}, q={q} (need 0<=p<=1, q>=1)")]
    InvalidParams { p: f64, q: f64 },
    #[error("graph has {edges} edges, enumeration cutoff is {cutoff}")]
    CutoffExceeded { edges: usize, cutoff: usize },
    #[error("boundary block {0} is empty or names an unknown site")]
    InvalidBlock(usize),
    #[error("boundary blocks overlap at site index {0}")]
    OverlappingBlocks(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkParams {
    pub p: f64,
    pub q: f64,
}

impl FkParams {
    pub fn new(p: f64, q: f64) -> Result<Self, FkError> {
        if !(0.0..=1.0).contains(&p) || !(q >= 1.0) || !q.is_finite() {
            return Err(FkError::InvalidParams { p, q });
        }
        Ok(FkParams { p, q })
    }

    /// The critical FK Ising point (p_sd(2), 2).
    pub fn critical_ising() -> Self {
        FkParams { p: self_dual_point(2.0), q: 2.0 }
    }

    /// Probability that an edge is open given that opening it would merge
    /// two distinct clusters.
    pub fn p_bridge(&self) -> f64 {
        self.p / (self.p + self.q * (1.0 - self.p))
    }
}

/// √q/(1+√q).
pub fn self_dual_point(q: f64) -> f64 {
    let s = q.sqrt();
    s / (1.0 + s)
}

/// The p* with p p* / ((1-p)(1-p*)) = q.
pub fn dual_parameter(p: f64, q: f64) -> f64 {
    q * (1.0 - p) / (q * (1.0 - p) + p)
}

/// Partition of (some) boundary sites into wired blocks; every site outside
/// the blocks is free. Sites are graph indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    blocks: Vec<Vec<usize>>,
}

impl Boundary {
    pub fn free() -> Self {
        Boundary { blocks: Vec::new() }
    }

    /// All boundary sites of `g` in a single block.
    pub fn wired(g: &PrimalGraph) -> Self {
        Boundary { blocks: vec![g.boundary_sites()] }
    }

    /// Wired arc of a Dobrushin domain as one block.
    pub fn dobrushin(d: &DobrushinDomain) -> Self {
        let g = d.graph();
        let mut block: Vec<usize> = d.wired_arc().iter().map(|&s| g.site_index(s).unwrap()).collect();
        block.sort_unstable();
        block.dedup();
        Boundary { blocks: vec![block] }
    }

    pub fn from_blocks(g: &PrimalGraph, blocks: Vec<Vec<Site>>) -> Result<Self, FkError> {
        let mut seen = vec![false; g.num_sites()];
        let mut out = Vec::new();
        for (k, block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(FkError::InvalidBlock(k));
            }
            let mut idx = Vec::new();
            for s in block {
                let i = g.site_index(s).ok_or(FkError::InvalidBlock(k))?;
                if seen[i] {
                    return Err(FkError::OverlappingBlocks(i));
                }
                seen[i] = true;
                idx.push(i);
            }
            idx.sort_unstable();
            out.push(idx);
        }
        Ok(Boundary { blocks: out })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Union-find over sites plus one ghost per block, with the ghosts merged
    /// into their blocks.
    pub fn union_find(&self, n_sites: usize) -> UnionFind {
        let mut uf = UnionFind::new(n_sites + self.blocks.len());
        self.merge_into(&mut uf, n_sites);
        uf
    }

    pub fn merge_into(&self, uf: &mut UnionFind, n_sites: usize) {
        for (k, block) in self.blocks.iter().enumerate() {
            for &i in block {
                uf.union(n_sites + k, i);
            }
        }
    }

    /// Ghost node of each site (if it belongs to a block).
    pub fn ghost_of(&self, n_sites: usize) -> Vec<Option<usize>> {
        let mut g = vec![None; n_sites];
        for (k, block) in self.blocks.iter().enumerate() {
            for &i in block {
                g[i] = Some(n_sites + k);
            }
        }
        g
    }
}

/// Subset of open edges, as a bitset over edge indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Config {
    words: Vec<u64>,
    len: usize,
}

impl Config {
    pub fn closed(len: usize) -> Self {
        Config { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn open(len: usize) -> Self {
        let mut c = Self::closed(len);
        for e in 0..len {
            c.set(e, true);
        }
        c
    }

    pub fn from_mask(len: usize, mask: u64) -> Self {
        let mut c = Self::closed(len);
        c.set_mask(mask);
        c
    }

    /// Overwrite with the low `len` bits of `mask` (len ≤ 64).
    pub fn set_mask(&mut self, mask: u64) {
        debug_assert!(self.len <= 64);
        if !self.words.is_empty() {
            self.words[0] = if self.len == 64 { mask } else { mask & ((1u64 << self.len) - 1) };
        }
    }

    pub fn mask(&self) -> u64 {
        debug_assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, e: usize) -> bool {
        self.words[e >> 6] >> (e & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        let bit = 1u64 << (e & 63);
        if open {
            self.words[e >> 6] |= bit;
        } else {
            self.words[e >> 6] &= !bit;
        }
    }

    pub fn toggle(&mut self, e: usize) {
        self.words[e >> 6] ^= 1u64 << (e & 63);
    }

    pub fn count_open(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Union-find of ω ∪ ξ (sites, then one ghost per wired block).
pub fn clusters(g: &PrimalGraph, c: &Config, bc: &Boundary) -> UnionFind {
    let mut uf = bc.union_find(g.num_sites());
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        if c.get(e) {
            uf.union(i, j);
        }
    }
    uf
}

/// k(ω, ξ): clusters of ω with the wired blocks merged.
pub fn cluster_count(g: &PrimalGraph, c: &Config, bc: &Boundary) -> usize {
    clusters(g, c, bc).count()
}

pub fn log_weight(g: &PrimalGraph, c: &Config, bc: &Boundary, params: FkParams) -> f64 {
    let o = c.count_open() as f64;
    let closed = (g.num_edges() - c.count_open()) as f64;
    let k = cluster_count(g, c, bc) as f64;
    xlogy(o, params.p) + xlogy(closed, 1.0 - params.p) + k * params.q.ln()
}

/// p^o (1-p)^c q^k.
pub fn config_weight(g: &PrimalGraph, c: &Config, bc: &Boundary, params: FkParams) -> f64 {
    log_weight(g, c, bc, params).exp()
}

// x·ln y with the convention 0·ln 0 = 0.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub const DEFAULT_CUTOFF: usize = 24;
// Fixed so that the reduction order never depends on the thread count.
const SHARDS: u64 = 64;

/// Normalized FK measure over all 2^E configurations. Configuration `mask`
/// has edge `e` open iff bit `e` is set.
#[derive(Debug, Clone)]
pub struct ExactMeasure {
    params: FkParams,
    bc: Boundary,
    num_edges: usize,
    probs: Vec<f64>,
    log_z: f64,
}

pub fn enumerate_measure(g: &PrimalGraph, bc: &Boundary, params: FkParams) -> Result<ExactMeasure, FkError> {
    enumerate_measure_with_cutoff(g, bc, params, DEFAULT_CUTOFF)
}

pub fn enumerate_measure_with_cutoff(
    g: &PrimalGraph,
    bc: &Boundary,
    params: FkParams,
    cutoff: usize,
) -> Result<ExactMeasure, FkError> {
    let e_count = g.num_edges();
    if e_count > cutoff || e_count > 32 {
        return Err(FkError::CutoffExceeded { edges: e_count, cutoff });
    }
    let total = 1u64 << e_count;
    let shards = SHARDS.min(total);
    let per = total / shards;
    // Pass 1: cluster counts in Gray-code order, one edge toggled per step.
    let mut ks = vec![0u8; total as usize];
    let n = g.num_sites();
    let chunks: Vec<Vec<(u64, u8)>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut out = Vec::with_capacity(per as usize);
            let mut uf = UnionFind::new(n + bc.blocks().len());
            let mut mask = gray(s * per);
            for i in s * per..(s + 1) * per {
                if i > s * per {
                    mask ^= 1u64 << (i.trailing_zeros());
                }
                debug_assert_eq!(mask, gray(i));
                uf.reset();
                bc.merge_into(&mut uf, n);
                for (e, &(a, b)) in g.edges().iter().enumerate() {
                    if mask >> e & 1 == 1 {
                        uf.union(a, b);
                    }
                }
                out.push((mask, uf.count() as u8));
            }
            out
        })
        .collect();
    for chunk in chunks {
        for (mask, k) in chunk {
            ks[mask as usize] = k;
        }
    }
    // Pass 2: log weights relative to the maximum, compensated normalization.
    let lq = params.q.ln();
    let logw = |mask: u64, k: u8| {
        let o = mask.count_ones() as f64;
        xlogy(o, params.p) + xlogy(e_count as f64 - o, 1.0 - params.p) + k as f64 * lq
    };
    let max = ks
        .par_iter()
        .enumerate()
        .map(|(m, &k)| logw(m as u64, k))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = ks.par_iter().enumerate().map(|(m, &k)| (logw(m as u64, k) - max).exp()).collect();
    let partial: Vec<CompensatedSum> = probs
        .par_chunks(per as usize)
        .map(|c| {
            let mut s = CompensatedSum::default();
            c.iter().for_each(|&x| s.add(x));
            s
        })
        .collect();
    let mut z = CompensatedSum::default();
    partial.into_iter().for_each(|s| z.merge(s));
    let z = z.value();
    probs.par_iter_mut().for_each(|x| *x /= z);
    Ok(ExactMeasure { params, bc: bc.clone(), num_edges: e_count, probs, log_z: max + z.ln() })
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

impl ExactMeasure {
    pub fn params(&self) -> FkParams {
        self.params
    }

    pub fn boundary(&self) -> &Boundary {
        &self.bc
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, mask: u64) -> f64 {
        self.probs[mask as usize]
    }

    /// Probability of an event given on configuration masks.
    pub fn probability_mask(&self, event: impl Fn(u64) -> bool + Sync) -> f64 {
        let partial: Vec<CompensatedSum> = self
            .probs
            .par_chunks(self.probs.len().div_ceil(SHARDS as usize).max(1))
            .enumerate()
            .map(|(s, chunk)| {
                let base = s * self.probs.len().div_ceil(SHARDS as usize).max(1);
                let mut acc = CompensatedSum::default();
                for (i, &p) in chunk.iter().enumerate() {
                    if event((base + i) as u64) {
                        acc.add(p);
                    }
                }
                acc
            })
            .collect();
        let mut total = CompensatedSum::default();
        partial.into_iter().for_each(|s| total.merge(s));
        total.value().clamp(0.0, 1.0)
    }

    /// Expectation of a real functional of the configuration mask.
    pub fn expectation_mask(&self, f: impl Fn(u64) -> f64) -> f64 {
        let mut acc = CompensatedSum::default();
        for (m, &p) in self.probs.iter().enumerate() {
            acc.add(p * f(m as u64));
        }
        acc.value()
    }

    pub fn event_probability(&self, event: impl Fn(&Config) -> bool) -> f64 {
        let mut c = Config::closed(self.num_edges);
        let mut acc = CompensatedSum::default();
        for (m, &p) in self.probs.iter().enumerate() {
            c.set_mask(m as u64);
            if event(&c) {
                acc.add(p);
            }
        }
        acc.value().clamp(0.0, 1.0)
    }

    pub fn edge_marginal(&self, e: usize) -> f64 {
        self.probability_mask(|m| m >> e & 1 == 1)
    }
}

/// Are the two site sets joined by an open path of `c` (boundary blocks ignored)?
pub fn sets_connected(g: &PrimalGraph, c: &Config, from: &[usize], to: &[usize]) -> bool {
    let mut uf = UnionFind::new(g.num_sites());
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        if c.get(e) {
            uf.union(i, j);
        }
    }
    let roots: std::collections::HashSet<usize> = from.iter().map(|&i| uf.find(i)).collect();
    to.iter().any(|&j| roots.contains(&uf.find(j)))
}

/// Exportable summary of an exact measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub domain_hash: String,
    pub params: FkParams,
    pub bc: Boundary,
    pub z_log: f64,
    pub events: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Site;

    fn single_edge() -> PrimalGraph {
        PrimalGraph::induced([Site::new(0, 0), Site::new(1, 0)]).unwrap()
    }

    #[test]
    fn self_dual_values() {
        assert!((self_dual_point(2.0) - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(self_dual_point(1.0), 0.5);
        assert!((self_dual_point(4.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dual_parameter_values() {
        let psd = self_dual_point(2.0);
        assert!((dual_parameter(psd, 2.0) - psd).abs() < 1e-15);
        assert!((dual_parameter(0.3, 1.0) - 0.7).abs() < 1e-15);
        assert!((dual_parameter(0.9, 2.0) - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn cluster_counts() {
        let g = PrimalGraph::rectangle(2, 2).unwrap();
        assert_eq!(cluster_count(&g, &Config::closed(12), &Boundary::free()), 9);
        assert_eq!(cluster_count(&g, &Config::open(12), &Boundary::wired(&g)), 1);
        let sq = PrimalGraph::rectangle(1, 1).unwrap();
        assert_eq!(cluster_count(&sq, &Config::closed(4), &Boundary::wired(&sq)), 1);
    }

    #[test]
    fn single_edge_weights() {
        let g = single_edge();
        let pr = FkParams::new(0.3, 2.5).unwrap();
        let w_open = config_weight(&g, &Config::open(1), &Boundary::free(), pr);
        assert!((w_open - 0.3 * 2.5).abs() < 1e-14);
        let w_closed = config_weight(&g, &Config::closed(1), &Boundary::free(), pr);
        assert!((w_closed - 0.7 * 2.5 * 2.5).abs() < 1e-14);
        let wired = Boundary::from_blocks(&g, vec![vec![Site::new(0, 0), Site::new(1, 0)]]).unwrap();
        let w = config_weight(&g, &Config::closed(1), &wired, pr);
        assert!((w - 0.7 * 2.5).abs() < 1e-14);
    }

    #[test]
    fn single_edge_measure() {
        let g = single_edge();
        let m = enumerate_measure(&g, &Boundary::free(), FkParams::critical_ising()).unwrap();
        assert!((m.edge_marginal(0) - (2f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((m.event_probability(|_| true) - 1.0).abs() < 1e-15);
        let wired = Boundary::from_blocks(&g, vec![vec![Site::new(0, 0), Site::new(1, 0)]]).unwrap();
        let m = enumerate_measure(&g, &wired, FkParams::new(0.37, 2.0).unwrap()).unwrap();
        assert!((m.edge_marginal(0) - 0.37).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_at_q_one() {
        let g = PrimalGraph::rectangle(2, 1).unwrap();
        let m = enumerate_measure(&g, &Boundary::free(), FkParams::new(0.3, 1.0).unwrap()).unwrap();
        for mask in 0..(1u64 << g.num_edges()) {
            let o = mask.count_ones() as i32;
            let expect = 0.3f64.powi(o) * 0.7f64.powi(g.num_edges() as i32 - o);
            assert!((m.prob(mask) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn log_z_matches_direct_sum() {
        let g = PrimalGraph::rectangle(2, 1).unwrap();
        let bc = Boundary::wired(&g);
        let pr = FkParams::critical_ising();
        let m = enumerate_measure(&g, &bc, pr).unwrap();
        let z: f64 = (0..1u64 << g.num_edges()).map(|k| config_weight(&g, &Config::from_mask(7, k), &bc, pr)).sum();
        assert!((m.log_z() - z.ln()).abs() < 1e-12);
        let total: f64 = m.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cutoff_enforced() {
        let g = PrimalGraph::rectangle(3, 3).unwrap();
        assert!(matches!(
            enumerate_measure_with_cutoff(&g, &Boundary::free(), FkParams::critical_ising(), 20),
            Err(FkError::CutoffExceeded { edges: 24, cutoff: 20 })
        ));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(FkParams::new(1.2, 2.0).is_err());
        assert!(FkParams::new(0.5, 0.5).is_err());
        assert!(FkParams::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn gray_code_visits_every_mask_once() {
        let mut seen = [false; 256];
        for i in 0..256u64 {
            seen[gray(i) as usize] = true;
            if i > 0 {
                assert_eq!((gray(i) ^ gray(i - 1)).count_ones(), 1);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    proptest::proptest! {
        #[test]
        fn duality_is_an_involution(p in 0.001f64..0.999, q in 1.0f64..10.0) {
            proptest::prop_assert!((dual_parameter(dual_parameter(p, q), q) - p).abs() < 1e-12);
            let ps = dual_parameter(p, q);
            proptest::prop_assert!((p * ps / ((1.0 - p) * (1.0 - ps)) - q).abs() < 1e-9 * q);
        }

        #[test]
        fn mask_round_trip(mask in 0u64..(1 << 12)) {
            let c = Config::from_mask(12, mask);
            proptest::prop_assert_eq!(c.mask(), mask);
            proptest::prop_assert_eq!(c.count_open(), mask.count_ones() as usize);
        }
    }
}
