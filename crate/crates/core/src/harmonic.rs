//! Harmonic measures of the rate-modified walks on black and white faces of
//! the extended medial graph, and their comparison with the observable.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lattice::{
    build_dobrushin, build_medial, extend_medial, Doubled, ExtendedMedial, Face, LatticeError, MedialGraph,
    PrimalGraph, Site, Step, WhiteKind,
};
use crate::observable::{build_h, exact_observable, HFunction, ObservableError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarmonicError {
    #[error("interior node {0:?} cannot reach any absorbing face")]
    SingularSystem(Face),
    #[error("walk from {from:?} needs layer face {missing:?}, which the extension lacks")]
    MissingLayerFace { from: Face, missing: Face },
    #[error("conjugate gradient did not converge (relative residual {0:e})")]
    NoConvergence(f64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("unknown probe family `{0}`")]
    UnknownFamily(String),
}

/// (√2+1)/2, the extra-layer jump rate as stated.
pub const RHO: f64 = 1.207_106_781_186_547_5;

/// The rate for which the walk generator reproduces the boundary Laplacian
/// coefficients: w_layer / w_ordinary = 2√2 - 2 = 1/ρ.
pub const RHO_MODIFIED: f64 = 0.828_427_124_746_190_1;

/// Layer rate used unless a caller asks otherwise. With RHO the comparison
/// principle fails on small rectangles; with RHO_MODIFIED it holds.
pub const DEFAULT_LAYER_RATE: f64 = RHO_MODIFIED;

/// (w_ordinary, w_layer) = ((2+√2)/(6+5√2), 2√2/(6+5√2)).
pub fn boundary_laplacian_coefficients() -> (f64, f64) {
    let s = std::f64::consts::SQRT_2;
    let den = 6.0 + 5.0 * s;
    ((2.0 + s) / den, 2.0 * s / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    /// Wired arc (black walk) or extra white layer (white walk).
    Target,
    /// Extra black layer (black walk) or free arc (white walk).
    Other,
}

/// Which absorbing set carries boundary value 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorbing {
    Target,
    Other,
}

#[derive(Debug, Clone)]
pub struct RateGraph {
    pub color: Color,
    pub layer_rate: f64,
    nodes: Vec<Face>,
    index: HashMap<Face, usize>,
    kinds: Vec<NodeKind>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl RateGraph {
    fn node(&mut self, f: Face, kind: NodeKind) -> usize {
        if let Some(&i) = self.index.get(&f) {
            return i;
        }
        self.nodes.push(f);
        self.kinds.push(kind);
        self.adj.push(Vec::new());
        self.index.insert(f, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[Face] {
        &self.nodes
    }

    pub fn kind(&self, i: usize) -> NodeKind {
        self.kinds[i]
    }

    pub fn index_of(&self, f: Face) -> Option<usize> {
        self.index.get(&f).copied()
    }

    /// Outgoing (node, rate) pairs; empty for absorbing nodes.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }
}

/// Rate graph of one colour with the default layer rate.
pub fn build_rate_graph(ext: &ExtendedMedial, color: Color) -> Result<RateGraph, HarmonicError> {
    build_rate_graph_with_rate(ext, color, DEFAULT_LAYER_RATE)
}

pub fn build_rate_graph_with_rate(ext: &ExtendedMedial, color: Color, layer_rate: f64) -> Result<RateGraph, HarmonicError> {
    let mut rg = RateGraph { color, layer_rate, nodes: Vec::new(), index: HashMap::new(), kinds: Vec::new(), adj: Vec::new() };
    let m = ext.base();
    let d = m.domain();
    let g = d.graph();
    match color {
        Color::Black => {
            for &s in g.sites() {
                let kind = if d.is_wired(s) { NodeKind::Target } else { NodeKind::Interior };
                rg.node(Face::Black(s), kind);
            }
            for &t in ext.extra_black() {
                rg.node(Face::ExtraBlack(t), NodeKind::Other);
            }
            for &s in g.sites() {
                if d.is_wired(s) {
                    continue;
                }
                let i = rg.index[&Face::Black(s)];
                for step in Step::ALL {
                    let t = s.offset(step);
                    let (f, rate) = if g.edge_between(s, t).is_some() {
                        (Face::Black(t), 1.0)
                    } else if ext.extra_black().contains(&t) {
                        (Face::ExtraBlack(t), layer_rate)
                    } else {
                        return Err(HarmonicError::MissingLayerFace { from: Face::Black(s), missing: Face::ExtraBlack(t) });
                    };
                    let j = rg.index[&f];
                    rg.adj[i].push((j, rate));
                }
            }
        }
        Color::White => {
            for (&w, &kind) in m.white_faces() {
                let k = if kind == WhiteKind::Interior { NodeKind::Interior } else { NodeKind::Other };
                rg.node(Face::White(w), k);
            }
            for &w in ext.extra_white() {
                rg.node(Face::ExtraWhite(w), NodeKind::Target);
            }
            let degenerate = d.is_degenerate();
            let u = d.a();
            let interior: Vec<Doubled> =
                m.white_faces().iter().filter(|(_, &k)| k == WhiteKind::Interior).map(|(&w, _)| w).collect();
            for w in interior {
                let i = rg.index[&Face::White(w)];
                for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
                    let v = w.add(dx, dy);
                    let w2 = w.add(2 * dx, 2 * dy);
                    let (f, rate) = if m.is_interior_vertex(v) {
                        let (s, t) = v.primal_edge();
                        if degenerate && (s == u || t == u) && ext.extra_white().contains(&w2) {
                            // The layer copy glued to u's diamond sits next to
                            // the original free face, which stays a neighbour.
                            let j = rg.index[&Face::ExtraWhite(w2)];
                            rg.adj[i].push((j, layer_rate));
                        }
                        (Face::White(w2), 1.0)
                    } else if ext.extra_white().contains(&w2) {
                        (Face::ExtraWhite(w2), layer_rate)
                    } else {
                        return Err(HarmonicError::MissingLayerFace { from: Face::White(w), missing: Face::ExtraWhite(w2) });
                    };
                    let j = *rg.index.get(&f).ok_or(HarmonicError::MissingLayerFace { from: Face::White(w), missing: f })?;
                    rg.adj[i].push((j, rate));
                }
            }
        }
    }
    Ok(rg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicMeasure {
    pub values: BTreeMap<Face, f64>,
    /// Largest violation of the rate-weighted mean-value equation.
    pub residual: f64,
    pub unknowns: usize,
}

impl HarmonicMeasure {
    pub fn get(&self, f: Face) -> Option<f64> {
        self.values.get(&f).copied()
    }
}

pub const DENSE_LIMIT: usize = 2000;

/// Hitting probability of the target absorbing set (the wired arc for the
/// black walk, the extra white layer for the white walk).
pub fn solve_hm(rg: &RateGraph) -> Result<HarmonicMeasure, HarmonicError> {
    solve_hm_for(rg, Absorbing::Target)
}

pub fn solve_hm_for(rg: &RateGraph, one: Absorbing) -> Result<HarmonicMeasure, HarmonicError> {
    let n = rg.nodes.len();
    let boundary_value = |k: NodeKind| match (k, one) {
        (NodeKind::Target, Absorbing::Target) | (NodeKind::Other, Absorbing::Other) => 1.0,
        _ => 0.0,
    };
    // Every interior node must reach an absorbing node.
    let mut reaches = vec![false; n];
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in &rg.adj[i] {
            rev[j].push(i);
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| rg.kinds[i] != NodeKind::Interior).collect();
    for &i in &queue {
        reaches[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &rev[j] {
            if !reaches[i] {
                reaches[i] = true;
                queue.push_back(i);
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| !reaches[i]) {
        return Err(HarmonicError::SingularSystem(rg.nodes[i]));
    }
    let unknowns: Vec<usize> = (0..n).filter(|&i| rg.kinds[i] == NodeKind::Interior).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in unknowns.iter().enumerate() {
        pos[i] = k;
    }
    // (Σ r) h_i - Σ_{j interior} r h_j = Σ_{j absorbing} r h_j
    let nu = unknowns.len();
    let mut diag = vec![0.0; nu];
    let mut off: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nu];
    let mut rhs = vec![0.0; nu];
    for (k, &i) in unknowns.iter().enumerate() {
        for &(j, r) in &rg.adj[i] {
            diag[k] += r;
            if rg.kinds[j] == NodeKind::Interior {
                off[k].push((pos[j], r));
            } else {
                rhs[k] += r * boundary_value(rg.kinds[j]);
            }
        }
    }
    let x = if nu == 0 {
        Vec::new()
    } else if nu < DENSE_LIMIT {
        dense_solve(&diag, &off, &rhs)
    } else {
        conjugate_gradient(&diag, &off, &rhs, 1e-13, 20 * nu + 1000)?
    };
    let mut value = vec![0.0; n];
    for i in 0..n {
        value[i] = if rg.kinds[i] == NodeKind::Interior { x[pos[i]] } else { boundary_value(rg.kinds[i]) };
    }
    let mut residual: f64 = 0.0;
    for &i in &unknowns {
        let tot: f64 = rg.adj[i].iter().map(|&(_, r)| r).sum();
        let mean: f64 = rg.adj[i].iter().map(|&(j, r)| r * value[j]).sum::<f64>() / tot;
        residual = residual.max((mean - value[i]).abs());
    }
    let values = rg.nodes.iter().copied().zip(value).collect();
    Ok(HarmonicMeasure { values, residual, unknowns: nu })
}

fn dense_solve(diag: &[f64], off: &[Vec<(usize, f64)>], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        a[(k, k)] = diag[k];
        for &(j, r) in &off[k] {
            a[(k, j)] -= r;
        }
    }
    let b = DVector::from_column_slice(rhs);
    let chol = a.cholesky().expect("Dirichlet matrix is symmetric positive definite");
    chol.solve(&b).iter().copied().collect()
}

fn conjugate_gradient(
    diag: &[f64],
    off: &[Vec<(usize, f64)>],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, HarmonicError> {
    let n = diag.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        for k in 0..n {
            let mut s = diag[k] * x[k];
            for &(j, r) in &off[k] {
                s -= r * x[j];
            }
            y[k] = s;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(HarmonicError::NoConvergence(dot(&r, &r).sqrt() / bnorm))
}

/// Both harmonic measures of a domain at a given layer rate.
pub fn harmonic_measures(ext: &ExtendedMedial, layer_rate: f64) -> Result<(HarmonicMeasure, HarmonicMeasure), HarmonicError> {
    let black = solve_hm(&build_rate_graph_with_rate(ext, Color::Black, layer_rate)?)?;
    let white = solve_hm(&build_rate_graph_with_rate(ext, Color::White, layer_rate)?)?;
    Ok((black, white))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// Doubled midpoint coordinates of the medial edge.
    pub edge: usize,
    pub black: Site,
    /// Reported white face: the lexicographically smallest closest candidate.
    pub white: Doubled,
    pub f_abs: f64,
    pub sqrt_hm_black: f64,
    /// Smallest √HM∘ margin over all candidates is what decides `pass`.
    pub sqrt_hm_white: f64,
    pub candidates: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub layer_rate: f64,
    pub rows: Vec<ComparisonRow>,
    /// min over rows of |F(e)| - √HM∘(W) and √HM•(B) - |F(e)|.
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    pub pass: bool,
}

/// √HM∘(W) ≤ |F(e)| ≤ √HM•(B) for every medial edge e between a free-arc
/// site and an outside free face, with W ranging over every closest interior
/// white face of B.
pub fn check_comparison_with(
    m: &MedialGraph,
    f_abs: &[f64],
    black: &HarmonicMeasure,
    white: &HarmonicMeasure,
    layer_rate: f64,
    tol: f64,
) -> ComparisonReport {
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::INFINITY);
    for (k, e) in m.edges().iter().enumerate() {
        if m.white_kind(e.white) != Some(WhiteKind::FreeArc) {
            continue;
        }
        let (mx, my) = e.midpoint2();
        let c = e.black.doubled();
        let cands: Vec<Doubled> = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
            .iter()
            .map(|&(dx, dy)| c.add(dx, dy))
            .filter(|&w| m.white_kind(w) == Some(WhiteKind::Interior))
            .collect();
        let dist = |w: &Doubled| (2 * w.x - mx).pow(2) + (2 * w.y - my).pow(2);
        let best = cands.iter().map(dist).min();
        let mut closest: Vec<Doubled> = cands.iter().copied().filter(|w| Some(dist(w)) == best).collect();
        closest.sort();
        let hb = black.get(Face::Black(e.black)).unwrap_or(0.0).sqrt();
        let fa = f_abs[k];
        let mut row_pass = fa <= hb + tol;
        hi = hi.min(hb - fa);
        let mut worst_w = 0.0f64;
        for &w in &closest {
            let hw = white.get(Face::White(w)).unwrap_or(0.0).sqrt();
            worst_w = worst_w.max(hw);
            row_pass &= hw <= fa + tol;
            lo = lo.min(fa - hw);
        }
        rows.push(ComparisonRow {
            edge: k,
            black: e.black,
            white: closest.first().copied().unwrap_or(e.white),
            f_abs: fa,
            sqrt_hm_black: hb,
            sqrt_hm_white: worst_w,
            candidates: closest.len(),
            pass: row_pass,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    ComparisonReport { layer_rate, rows, worst_lower_margin: lo, worst_upper_margin: hi, pass }
}

/// Comparison principle with the exact observable.
pub fn check_comparison(m: &MedialGraph, layer_rate: f64) -> Result<ComparisonReport, HarmonicError> {
    let obs = exact_observable(m)?;
    let ext = extend_medial(m);
    let (black, white) = harmonic_measures(&ext, layer_rate)?;
    let f_abs: Vec<f64> = obs.values.iter().map(|z| z.norm()).collect();
    Ok(check_comparison_with(m, &f_abs, &black, &white, layer_rate, 1e-10))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLaplacianReport {
    /// min over non-wired black faces with layer neighbours of the modified Laplacian of H.
    pub min_black: f64,
    /// max over interior white faces with layer neighbours (H = 1 on the white layer).
    pub max_white: f64,
    pub black_faces: usize,
    pub white_faces: usize,
}

/// Generator Laplacian at faces touching an extra layer, with H extended by 0
/// on the black layer and by 1 on the white layer. Ordinary neighbours get
/// weight 1 and layer neighbours 2√2-2 before normalization, so a face with a
/// single layer neighbour sees exactly the boundary Laplacian coefficients.
pub fn boundary_subharmonicity_check(h: &HFunction, ext: &ExtendedMedial) -> Result<BoundaryLaplacianReport, HarmonicError> {
    let mut min_black = f64::INFINITY;
    let mut max_white = f64::NEG_INFINITY;
    let (mut nb, mut nw) = (0, 0);
    for color in [Color::Black, Color::White] {
        let rg = build_rate_graph_with_rate(ext, color, RHO_MODIFIED)?;
        for i in 0..rg.nodes.len() {
            if rg.kinds[i] != NodeKind::Interior || !rg.adj[i].iter().any(|&(j, _)| rg.nodes[j].is_extra()) {
                continue;
            }
            let tot: f64 = rg.adj[i].iter().map(|&(_, r)| r).sum();
            let mut acc = 0.0;
            for &(j, r) in &rg.adj[i] {
                let v = match rg.nodes[j] {
                    Face::ExtraBlack(_) => 0.0,
                    Face::ExtraWhite(_) => 1.0,
                    f => h.get(f).expect("H is defined on every original face"),
                };
                acc += r * v;
            }
            let lap = acc / tot - h.get(rg.nodes[i]).unwrap();
            match color {
                Color::Black => {
                    min_black = min_black.min(lap);
                    nb += 1;
                }
                Color::White => {
                    max_white = max_white.max(lap);
                    nw += 1;
                }
            }
        }
    }
    Ok(BoundaryLaplacianReport { min_black, max_white, black_faces: nb, white_faces: nw })
}

/// Exact H of a medial graph (convenience for checks).
pub fn exact_h(m: &MedialGraph) -> Result<HFunction, HarmonicError> {
    let obs = exact_observable(m)?;
    Ok(build_h(&obs.values, m)?)
}

/// Height of the segment in the `segment_kn` family, held fixed while k grows.
pub const SEGMENT_HEIGHT: i32 = 2;

/// Domain families for the scaling lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFamily {
    /// (⟦-n,n⟧×⟦0,2n⟧, u, u), u = (0,2n); HM∘ at the white face above-left of (0,0).
    RectBottomPoint,
    /// ⟦-d,d⟧×⟦0,d⟧ with the bottom side free; HM• at the origin.
    DistanceD,
    /// ⟦-4k,4k⟧×⟦0,4k⟧ minus the column {-k}×⟦0,k⟧, wired left of (-k,k+1); HM∘ next to the origin.
    SlitK,
    /// ⟦-4k,4k⟧×⟦0,4k⟧ minus the segment {k}×⟦0,2⟧, wired on the side facing
    /// the origin; HM• at the origin.
    #[serde(rename = "segment_kn")]
    SegmentKN,
}

impl ProbeFamily {
    pub fn parse(s: &str) -> Result<Self, HarmonicError> {
        match s {
            "rect_bottom_point" => Ok(Self::RectBottomPoint),
            "distance_d" => Ok(Self::DistanceD),
            "slit_k" => Ok(Self::SlitK),
            "segment_kn" => Ok(Self::SegmentKN),
            other => Err(HarmonicError::UnknownFamily(other.into())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RectBottomPoint => "rect_bottom_point",
            Self::DistanceD => "distance_d",
            Self::SlitK => "slit_k",
            Self::SegmentKN => "segment_kn",
        }
    }

    pub fn expected_exponent(self) -> f64 {
        match self {
            Self::RectBottomPoint | Self::SegmentKN => -2.0,
            Self::DistanceD | Self::SlitK => -1.0,
        }
    }

    pub fn domain(self, n: i32) -> Result<(MedialGraph, Face), HarmonicError> {
        let (g, a, b, face) = match self {
            Self::RectBottomPoint => {
                let g = PrimalGraph::rectangle_between(-n, 0, n, 2 * n)?;
                let u = Site::new(0, 2 * n);
                (g, u, u, Face::White(Doubled::new(-1, 1)))
            }
            Self::DistanceD => {
                let g = PrimalGraph::rectangle_between(-n, 0, n, n)?;
                (g, Site::new(-n, 0), Site::new(n, 0), Face::Black(Site::new(0, 0)))
            }
            Self::SlitK => {
                let k = n;
                let sites = (0..=4 * k)
                    .flat_map(|y| (-4 * k..=4 * k).map(move |x| Site::new(x, y)))
                    .filter(|s| !(s.x == -k && s.y <= k));
                let g = PrimalGraph::induced(sites)?;
                (g, Site::new(-k, k + 1), Site::new(-4 * k, 4 * k), Face::White(Doubled::new(1, 1)))
            }
            Self::SegmentKN => {
                let k = n;
                let sites = (0..=4 * k)
                    .flat_map(|y| (-4 * k..=4 * k).map(move |x| Site::new(x, y)))
                    .filter(|s| !(s.x == k && s.y <= SEGMENT_HEIGHT));
                let g = PrimalGraph::induced(sites)?;
                (g, Site::new(k, SEGMENT_HEIGHT + 1), Site::new(k - 1, 0), Face::Black(Site::new(0, 0)))
            }
        };
        Ok((build_medial(&build_dobrushin(g, a, b)?), face))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub family: String,
    pub sizes: Vec<i32>,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
}

/// Harmonic measure at the family's designated face across sizes, with a
/// log-log slope.
pub fn hm_scaling_probe(family: ProbeFamily, sizes: &[i32], layer_rate: f64) -> Result<ProbeResult, HarmonicError> {
    let mut values = Vec::new();
    let mut residuals = Vec::new();
    for &n in sizes {
        let (m, face) = family.domain(n)?;
        let ext = extend_medial(&m);
        let color = if matches!(face, Face::Black(_)) { Color::Black } else { Color::White };
        let hm = solve_hm(&build_rate_graph_with_rate(&ext, color, layer_rate)?)?;
        values.push(hm.get(face).expect("probe face is a node"));
        residuals.push(hm.residual);
    }
    let pts: Vec<(f64, f64, f64)> = sizes.iter().zip(&values).map(|(&n, &v)| (n as f64, v, 0.0)).collect();
    let fit = crate::fit::fit_power_law(&pts).map_err(|_| HarmonicError::SingularSystem(Face::Black(Site::new(0, 0))))?;
    Ok(ProbeResult { family: family.name().into(), sizes: sizes.to_vec(), values, residuals, slope: fit.exponent, stderr: fit.stderr })
}
