//! Monte Carlo experiments at the critical point of FK Ising (q = 2). Every
//! cell is one cluster-dynamics chain on its own random stream, so results do
//! not depend on how cells are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fit::{fit_with_window, FitError, PowerLawFit};
use crate::fk::{enumerate_measure, Boundary, Config, FkError, FkParams};
use crate::lattice::{build_dobrushin, build_medial, full_dual, LatticeError, PrimalGraph, Site};
use crate::loops::{LoopError, Tracer};
use crate::sampler::{batch_means, chain_rng, Estimate, Sampler, SamplerError};
use crate::unionfind::UnionFind;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Fk(#[from] FkError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Free,
    Wired,
    /// Free on the counterclockwise arc from the lower-left to the upper-right
    /// corner, wired on the rest.
    Dobrushin,
}

impl BcKind {
    pub fn name(self) -> &'static str {
        match self {
            BcKind::Free => "free",
            BcKind::Wired => "wired",
            BcKind::Dobrushin => "dobrushin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBudget {
    pub burn_in: usize,
    pub sweeps: usize,
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

impl McBudget {
    pub fn new(burn_in: usize, sweeps: usize) -> Self {
        McBudget { burn_in, sweeps, thin: 1 }
    }

    pub fn scaled(self, factor: f64) -> Self {
        McBudget { sweeps: ((self.sweeps as f64 * factor).round() as usize).max(1), ..self }
    }
}

/// One output row; `n` and `m` are the experiment's two size parameters (see
/// the README for their meaning per kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub kind: String,
    pub n: i64,
    pub m: i64,
    pub bc: String,
    pub estimate: f64,
    pub se: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl CellRow {
    fn new(kind: &str, n: i64, m: i64, bc: &str, e: &Estimate, seed: u64) -> Self {
        CellRow {
            kind: kind.into(),
            n,
            m,
            bc: bc.into(),
            estimate: e.mean,
            se: e.std_error,
            n_samples: e.n_samples,
            seed,
        }
    }

    pub fn as_estimate(&self) -> Estimate {
        Estimate { mean: self.estimate, std_error: self.se, n_samples: self.n_samples, autocorr_time_estimate: f64::NAN }
    }
}

/// Number of standard errors separating two independent estimates.
pub fn combined_sigmas(a: &Estimate, b: &Estimate) -> f64 {
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    let d = (a.mean - b.mean).abs();
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

/// Run one chain with cluster dynamics on stream `stream` of `seed`.
/// `measure` writes `n_obs` values per kept sample.
pub fn run_cell<F>(
    g: &PrimalGraph,
    bc: &Boundary,
    budget: &McBudget,
    seed: u64,
    stream: u64,
    n_obs: usize,
    mut measure: F,
) -> Result<Vec<Estimate>, ExperimentError>
where
    F: FnMut(&Config, &mut [f64]),
{
    if budget.sweeps == 0 || budget.thin == 0 || budget.sweeps < budget.thin {
        return Err(ExperimentError::Invalid("budget needs sweeps >= thin >= 1".into()));
    }
    let mut s = Sampler::with_rng(g, bc, FkParams::critical_ising(), chain_rng(seed, stream));
    for _ in 0..budget.burn_in {
        s.cluster_step()?;
    }
    let mut series = vec![Vec::with_capacity(budget.sweeps / budget.thin); n_obs];
    let mut row = vec![0.0; n_obs];
    for i in 1..=budget.sweeps {
        s.cluster_step()?;
        if i % budget.thin == 0 {
            measure(s.config(), &mut row);
            for (k, &v) in row.iter().enumerate() {
                series[k].push(v);
            }
        }
    }
    Ok(series.iter().map(|x| batch_means(x)).collect())
}

/// Union-find over the open edges of `c` (boundary conditions ignored).
fn load_open(uf: &mut UnionFind, g: &PrimalGraph, c: &Config) {
    uf.reset();
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        if c.get(e) {
            uf.union(a, b);
        }
    }
}

/// Scratch for "is some site of A joined to some site of B".
struct Marks {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Marks {
    fn new(n: usize) -> Self {
        Marks { stamp: vec![0; n], epoch: 0 }
    }

    fn joined(&mut self, uf: &mut UnionFind, from: &[usize], to: &[usize]) -> bool {
        self.epoch += 1;
        for &i in from {
            let r = uf.find(i);
            self.stamp[r] = self.epoch;
        }
        to.iter().any(|&j| {
            let r = uf.find(j);
            self.stamp[r] == self.epoch
        })
    }
}

fn idx(g: &PrimalGraph, sites: impl IntoIterator<Item = Site>) -> Vec<usize> {
    sites.into_iter().filter_map(|s| g.site_index(s)).collect()
}

fn boundary_for(g: &PrimalGraph, kind: BcKind, n: i32, m: i32) -> Result<Boundary, ExperimentError> {
    Ok(match kind {
        BcKind::Free => Boundary::free(),
        BcKind::Wired => Boundary::wired(g),
        BcKind::Dobrushin => Boundary::dobrushin(&build_dobrushin(g.clone(), Site::new(0, 0), Site::new(n, m))?),
    })
}

/// Crossing estimates on the rectangle ⟦0,n⟧×⟦0,m⟧.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingStats {
    /// Bottom row joined to top row by open edges.
    pub vertical: Estimate,
    /// Left column joined to right column.
    pub horizontal: Estimate,
    pub both: Estimate,
}

pub fn crossing_stats(n: i32, m: i32, bc: BcKind, budget: &McBudget, seed: u64, stream: u64) -> Result<CrossingStats, ExperimentError> {
    let g = PrimalGraph::rectangle(n, m)?;
    let boundary = boundary_for(&g, bc, n, m)?;
    let bottom = idx(&g, (0..=n).map(|x| Site::new(x, 0)));
    let top = idx(&g, (0..=n).map(|x| Site::new(x, m)));
    let left = idx(&g, (0..=m).map(|y| Site::new(0, y)));
    let right = idx(&g, (0..=m).map(|y| Site::new(n, y)));
    let mut uf = UnionFind::new(g.num_sites());
    let mut marks = Marks::new(g.num_sites());
    let est = run_cell(&g, &boundary, budget, seed, stream, 3, |c, out| {
        load_open(&mut uf, &g, c);
        let v = marks.joined(&mut uf, &bottom, &top);
        let h = marks.joined(&mut uf, &left, &right);
        out[0] = f64::from(u8::from(v));
        out[1] = f64::from(u8::from(h));
        out[2] = f64::from(u8::from(v && h));
    })?;
    Ok(CrossingStats { vertical: est[0], horizontal: est[1], both: est[2] })
}

/// P^bc(C_v(R)) on R = ⟦0,n⟧×⟦0,m⟧.
pub fn crossing_probability(n: i32, m: i32, bc: BcKind, budget: &McBudget, seed: u64) -> Result<Estimate, ExperimentError> {
    Ok(crossing_stats(n, m, bc, budget, seed, 0)?.vertical)
}

/// The dual rectangle of R = ⟦0,n⟧×⟦0,m⟧: the planar dual with its outer
/// ring of cells wired together, plus the left and right outer columns
/// (excluding the corner rows), between which a dual crossing blocks every
/// vertical primal crossing.
pub fn dual_rectangle(n: i32, m: i32) -> Result<(PrimalGraph, Vec<usize>, Vec<usize>), ExperimentError> {
    let g = PrimalGraph::rectangle(n, m)?;
    let d = full_dual(&g)?;
    let left = idx(&d, (0..m).map(|y| Site::new(-1, y)));
    let right = idx(&d, (0..m).map(|y| Site::new(n, y)));
    Ok((d, left, right))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityResult {
    pub n: i32,
    /// P⁰_R(C_v(R)).
    pub primal: Estimate,
    /// P¹_{R*}(C_h*(R*)), from an independent chain on the dual graph.
    pub dual: Estimate,
    pub sum: f64,
    pub combined_se: f64,
    pub sigmas: f64,
}

pub fn duality(n: i32, budget: &McBudget, seed: u64, stream: u64) -> Result<DualityResult, ExperimentError> {
    let primal = crossing_stats(n, n, BcKind::Free, budget, seed, 2 * stream)?.vertical;
    let (d, left, right) = dual_rectangle(n, n)?;
    let bc = Boundary::wired(&d);
    let mut uf = UnionFind::new(d.num_sites());
    let mut marks = Marks::new(d.num_sites());
    let dual = run_cell(&d, &bc, budget, seed, 2 * stream + 1, 1, |c, out| {
        load_open(&mut uf, &d, c);
        out[0] = f64::from(u8::from(marks.joined(&mut uf, &left, &right)));
    })?[0];
    let sum = primal.mean + dual.mean;
    let combined_se = (primal.std_error.powi(2) + dual.std_error.powi(2)).sqrt();
    let sigmas = if sum == 1.0 { 0.0 } else { (sum - 1.0).abs() / combined_se };
    Ok(DualityResult { n, primal, dual, sum, combined_se, sigmas })
}

/// Exact (P⁰_R(C_v), P¹_{R*}(C_h*)) by two independent enumerations.
pub fn exact_duality(n: i32, m: i32) -> Result<(f64, f64), ExperimentError> {
    let g = PrimalGraph::rectangle(n, m)?;
    let bottom = idx(&g, (0..=n).map(|x| Site::new(x, 0)));
    let top = idx(&g, (0..=n).map(|x| Site::new(x, m)));
    let p = FkParams::critical_ising();
    let primal = enumerate_measure(&g, &Boundary::free(), p)?
        .event_probability(|c| crate::fk::sets_connected(&g, c, &bottom, &top));
    let (d, left, right) = dual_rectangle(n, m)?;
    let dual = enumerate_measure(&d, &Boundary::wired(&d), p)?
        .event_probability(|c| crate::fk::sets_connected(&d, c, &left, &right));
    Ok((primal, dual))
}

fn half_width(beta: f64, n: i32) -> i32 {
    (beta * n as f64).round() as i32
}

/// P⁰(x ↝ u) in R_n^β = ⟦-βn,βn⟧×⟦0,2n⟧ with x = (x1, 0), u = (u1, 2n).
pub fn boundary_onepoint(n: i32, beta: f64, x1: i32, u1: i32, budget: &McBudget, seed: u64, stream: u64) -> Result<Estimate, ExperimentError> {
    let w = half_width(beta, n);
    if 2 * x1.abs() > w || 2 * u1.abs() > w {
        return Err(ExperimentError::Invalid(format!("points must satisfy |x1|, |u1| <= beta n / 2 (got {x1}, {u1})")));
    }
    let g = PrimalGraph::rectangle_between(-w, 0, w, 2 * n)?;
    let x = g.site_index(Site::new(x1, 0)).unwrap();
    let u = g.site_index(Site::new(u1, 2 * n)).unwrap();
    let mut uf = UnionFind::new(g.num_sites());
    Ok(run_cell(&g, &Boundary::free(), budget, seed, stream, 1, |c, out| {
        load_open(&mut uf, &g, c);
        out[0] = f64::from(u8::from(uf.connected(x, u)));
    })?[0])
}

/// The Dobrushin domain (R_n^β, a_n, b_n) with a_n, b_n the upper-left and
/// upper-right corners: the top side is wired.
fn top_wired_rectangle(n: i32, beta: f64) -> Result<(PrimalGraph, Boundary), ExperimentError> {
    let w = half_width(beta, n);
    let g = PrimalGraph::rectangle_between(-w, 0, w, 2 * n)?;
    let d = build_dobrushin(g.clone(), Site::new(-w, 2 * n), Site::new(w, 2 * n))?;
    Ok((g, Boundary::dobrushin(&d)))
}

/// P(x ↝ wired arc and y ↝ wired arc) in (R_n^β, a_n, b_n), x = (x1,0), y = (y1,0).
pub fn boundary_pair(n: i32, beta: f64, x1: i32, y1: i32, budget: &McBudget, seed: u64, stream: u64) -> Result<Estimate, ExperimentError> {
    let (g, bc) = top_wired_rectangle(n, beta)?;
    let top: Vec<usize> = idx(&g, (-half_width(beta, n)..=half_width(beta, n)).map(|x| Site::new(x, 2 * n)));
    let x = g.site_index(Site::new(x1, 0)).ok_or_else(|| ExperimentError::Invalid("x outside the rectangle".into()))?;
    let y = g.site_index(Site::new(y1, 0)).ok_or_else(|| ExperimentError::Invalid("y outside the rectangle".into()))?;
    let mut uf = UnionFind::new(g.num_sites());
    let mut marks = Marks::new(g.num_sites());
    Ok(run_cell(&g, &bc, budget, seed, stream, 1, |c, out| {
        load_open(&mut uf, &g, c);
        let both = marks.joined(&mut uf, &[x], &top) && marks.joined(&mut uf, &[y], &top);
        out[0] = f64::from(u8::from(both));
    })?[0])
}

/// Exact P(x ↝ u) and the pair probability on small rectangles.
pub fn exact_boundary_onepoint(n: i32, beta: f64, x1: i32, u1: i32) -> Result<f64, ExperimentError> {
    let w = half_width(beta, n);
    let g = PrimalGraph::rectangle_between(-w, 0, w, 2 * n)?;
    let x = g.site_index(Site::new(x1, 0)).unwrap();
    let u = g.site_index(Site::new(u1, 2 * n)).unwrap();
    let m = enumerate_measure(&g, &Boundary::free(), FkParams::critical_ising())?;
    Ok(m.event_probability(|c| crate::fk::sets_connected(&g, c, &[x], &[u])))
}

pub fn exact_boundary_pair(n: i32, beta: f64, x1: i32, y1: i32) -> Result<f64, ExperimentError> {
    let (g, bc) = top_wired_rectangle(n, beta)?;
    let w = half_width(beta, n);
    let top: Vec<usize> = idx(&g, (-w..=w).map(|x| Site::new(x, 2 * n)));
    let x = g.site_index(Site::new(x1, 0)).unwrap();
    let y = g.site_index(Site::new(y1, 0)).unwrap();
    let m = enumerate_measure(&g, &bc, FkParams::critical_ising())?;
    Ok(m.event_probability(|c| crate::fk::sets_connected(&g, c, &[x], &top) && crate::fk::sets_connected(&g, c, &[y], &top)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitStats {
    /// Open circuit in S_n \ S_m surrounding S_m (exact search).
    pub circuit: Estimate,
    /// Hard-direction crossings of the four rectangles around S_m.
    pub four_crossings: Estimate,
    /// Samples where the four crossings fired without a circuit.
    pub violations: usize,
}

/// The annulus S_n \ S̊_m as a graph: sites with m ≤ max(|x|,|y|) ≤ n.
pub fn annulus(m: i32, n: i32) -> Result<PrimalGraph, ExperimentError> {
    if m < 1 || m >= n {
        return Err(ExperimentError::Invalid(format!("need 1 <= m < n, got m = {m}, n = {n}")));
    }
    let sites = (-n..=n).flat_map(|y| (-n..=n).map(move |x| Site::new(x, y))).filter(|s| s.x.abs().max(s.y.abs()) >= m);
    Ok(PrimalGraph::induced(sites)?)
}

/// Dual search for circuits of `g` around the origin, inside ⟦-n,n⟧².
struct AnnulusSearch {
    n: i32,
    // Per cell (lower-left corner), the primal edge crossed when stepping
    // east or north, if present.
    east: Vec<Option<usize>>,
    north: Vec<Option<usize>>,
    seen: Vec<bool>,
    stack: Vec<(i32, i32)>,
}

impl AnnulusSearch {
    fn new(g: &PrimalGraph, n: i32) -> Self {
        let side = (2 * n + 2) as usize;
        let mut east = vec![None; side * side];
        let mut north = vec![None; side * side];
        for cy in -n - 1..=n {
            for cx in -n - 1..=n {
                let k = ((cy + n + 1) as usize) * side + (cx + n + 1) as usize;
                east[k] = g.edge_between(Site::new(cx + 1, cy), Site::new(cx + 1, cy + 1));
                north[k] = g.edge_between(Site::new(cx, cy + 1), Site::new(cx + 1, cy + 1));
            }
        }
        AnnulusSearch { n, east, north, seen: vec![false; side * side], stack: Vec::new() }
    }

    /// Is there an open circuit? Equivalently, is the central cell cut off
    /// from the outside by open annulus edges?
    fn circuit(&mut self, c: &Config) -> bool {
        let n = self.n;
        let side = (2 * n + 2) as usize;
        let key = |x: i32, y: i32| ((y + n + 1) as usize) * side + (x + n + 1) as usize;
        self.seen.fill(false);
        self.stack.clear();
        self.stack.push((0, 0));
        self.seen[key(0, 0)] = true;
        while let Some((x, y)) = self.stack.pop() {
            if x == -n - 1 || x == n || y == -n - 1 || y == n {
                return false;
            }
            let k = key(x, y);
            let blocked = |e: Option<usize>| e.is_some_and(|e| c.get(e));
            let moves = [
                ((x + 1, y), blocked(self.east[k])),
                ((x, y + 1), blocked(self.north[k])),
                ((x - 1, y), blocked(self.east[key(x - 1, y)])),
                ((x, y - 1), blocked(self.north[key(x, y - 1)])),
            ];
            for ((nx, ny), b) in moves {
                if !b && !self.seen[key(nx, ny)] {
                    self.seen[key(nx, ny)] = true;
                    self.stack.push((nx, ny));
                }
            }
        }
        true
    }
}

/// Both circuit tests on the annulus graph S_n \\ S̊_m.
pub struct CircuitDetector {
    search: AnnulusSearch,
    // Edges, start side and end side of the four rectangles R_L, R_R, R_T,
    // R_B of width n - m, crossed in the hard direction.
    rects: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)>,
    uf: UnionFind,
    marks: Marks,
    edges: Vec<(usize, usize)>,
}

impl CircuitDetector {
    pub fn new(g: &PrimalGraph, m: i32, n: i32) -> Self {
        let rects = [
            (-n, -n, -m, n, true),
            (m, -n, n, n, true),
            (-n, m, n, n, false),
            (-n, -n, n, -m, false),
        ]
        .iter()
        .map(|&(x0, y0, x1, y1, vertical)| {
            let inside = |s: Site| s.x >= x0 && s.x <= x1 && s.y >= y0 && s.y <= y1;
            let edges = (0..g.num_edges())
                .filter(|&e| {
                    let (s, t) = g.edge_sites(e);
                    inside(s) && inside(t)
                })
                .collect();
            let (from, to) = if vertical {
                (idx(g, (x0..=x1).map(|x| Site::new(x, y0))), idx(g, (x0..=x1).map(|x| Site::new(x, y1))))
            } else {
                (idx(g, (y0..=y1).map(|y| Site::new(x0, y))), idx(g, (y0..=y1).map(|y| Site::new(x1, y))))
            };
            (edges, from, to)
        })
        .collect();
        CircuitDetector {
            search: AnnulusSearch::new(g, n),
            rects,
            uf: UnionFind::new(g.num_sites()),
            marks: Marks::new(g.num_sites()),
            edges: g.edges().to_vec(),
        }
    }

    pub fn circuit(&mut self, c: &Config) -> bool {
        self.search.circuit(c)
    }

    pub fn four_crossings(&mut self, c: &Config) -> bool {
        let CircuitDetector { rects, uf, marks, edges, .. } = self;
        rects.iter().all(|(es, from, to)| {
            uf.reset();
            for &e in es {
                if c.get(e) {
                    uf.union(edges[e].0, edges[e].1);
                }
            }
            marks.joined(uf, from, to)
        })
    }
}

/// Circuit statistics for the measure on the annulus graph S_n \\ S̊_m. Wired
/// means both boundary components wired together.
pub fn circuit_probability(m: i32, n: i32, bc: BcKind, budget: &McBudget, seed: u64, stream: u64) -> Result<CircuitStats, ExperimentError> {
    let g = annulus(m, n)?;
    let boundary = match bc {
        BcKind::Free => Boundary::free(),
        BcKind::Wired => Boundary::wired(&g),
        BcKind::Dobrushin => return Err(ExperimentError::Invalid("the annulus has no Dobrushin boundary".into())),
    };
    let mut det = CircuitDetector::new(&g, m, n);
    let mut violations = 0;
    let est = run_cell(&g, &boundary, budget, seed, stream, 2, |c, out| {
        let circuit = det.circuit(c);
        let four = det.four_crossings(c);
        if four && !circuit {
            violations += 1;
        }
        out[0] = f64::from(u8::from(circuit));
        out[1] = f64::from(u8::from(four));
    })?;
    Ok(CircuitStats { circuit: est[0], four_crossings: est[1], violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    /// (R_n, (-n,0), (n,0)) with R_n = ⟦-n,n⟧×⟦0,n⟧: free bottom side, the
    /// rest wired; event 0 ↝ wired arc.
    HalfPlane,
    /// B_m = ⟦-m,m⟧² with wired boundary; event 0 ↝ ∂B_m.
    Plane,
}

pub fn one_arm_cell(kind: ArmKind, n: i32, budget: &McBudget, seed: u64, stream: u64) -> Result<Estimate, ExperimentError> {
    let (g, bc, target) = match kind {
        ArmKind::HalfPlane => {
            let g = PrimalGraph::rectangle_between(-n, 0, n, n)?;
            let d = build_dobrushin(g.clone(), Site::new(-n, 0), Site::new(n, 0))?;
            let target = idx(&g, d.wired_arc().iter().copied());
            (g, Boundary::dobrushin(&d), target)
        }
        ArmKind::Plane => {
            let g = PrimalGraph::rectangle_between(-n, -n, n, n)?;
            let target: Vec<usize> = (0..g.num_sites()).filter(|&i| g.degree(i) < 4).collect();
            let bc = Boundary::wired(&g);
            (g, bc, target)
        }
    };
    let origin = g.site_index(Site::new(0, 0)).unwrap();
    let mut uf = UnionFind::new(g.num_sites());
    let mut marks = Marks::new(g.num_sites());
    Ok(run_cell(&g, &bc, budget, seed, stream, 1, |c, out| {
        load_open(&mut uf, &g, c);
        out[0] = f64::from(u8::from(marks.joined(&mut uf, &[origin], &target)));
    })?[0])
}

/// Two-point connectivity P(x ↝ x + d·e) averaged over base points x in a
/// (2w+1)² window at the centre of the box ⟦0,L⟧² and over e ∈ {e₁, e₂}.
pub fn two_point_cell(
    dists: &[i32],
    box_side: i32,
    window: i32,
    bc: BcKind,
    budget: &McBudget,
    seed: u64,
    stream: u64,
) -> Result<Vec<Estimate>, ExperimentError> {
    let c0 = box_side / 2;
    let reach = window + dists.iter().copied().max().unwrap_or(0);
    if c0 + reach > box_side || c0 - window < 0 {
        return Err(ExperimentError::Invalid("window and distances must fit in the box".into()));
    }
    let g = PrimalGraph::rectangle(box_side, box_side)?;
    let at = |x: i32, y: i32| g.site_index(Site::new(x, y)).unwrap();
    let pairs: Vec<Vec<(usize, usize)>> = dists
        .iter()
        .map(|&d| {
            let mut v = Vec::new();
            for y in c0 - window..=c0 + window {
                for x in c0 - window..=c0 + window {
                    v.push((at(x, y), at(x + d, y)));
                    v.push((at(x, y), at(x, y + d)));
                }
            }
            v
        })
        .collect();
    let boundary = boundary_for(&g, bc, box_side, box_side)?;
    let ghosts = boundary.blocks().len();
    let mut uf = UnionFind::new(g.num_sites() + ghosts);
    run_cell(&g, &boundary, budget, seed, stream, dists.len(), |c, out| {
        load_open(&mut uf, &g, c);
        boundary.merge_into(&mut uf, g.num_sites());
        for (k, ps) in pairs.iter().enumerate() {
            let hits = ps.iter().filter(|&&(a, b)| uf.connected(a, b)).count();
            out[k] = hits as f64 / ps.len() as f64;
        }
    })
}

/// Exact two-point connectivity (same averaging) on a small free box.
pub fn exact_two_point(dist: i32, box_side: i32, window: i32) -> Result<f64, ExperimentError> {
    let g = PrimalGraph::rectangle(box_side, box_side)?;
    let c0 = box_side / 2;
    let at = |x: i32, y: i32| g.site_index(Site::new(x, y)).unwrap();
    let mut pairs = Vec::new();
    for y in c0 - window..=c0 + window {
        for x in c0 - window..=c0 + window {
            pairs.push((at(x, y), at(x + dist, y)));
            pairs.push((at(x, y), at(x, y + dist)));
        }
    }
    let m = enumerate_measure(&g, &Boundary::free(), FkParams::critical_ising())?;
    let total: f64 = pairs.iter().map(|&(a, b)| m.event_probability(|c| crate::fk::sets_connected(&g, c, &[a], &[b]))).sum();
    Ok(total / pairs.len() as f64)
}

/// Number of crossings of `path` (medial edges of the traced exploration path)
/// between the box of radius r and the outside of the box of radius 2r around
/// x, both in the sup norm.
pub fn annulus_crossings(positions: &[(i32, i32)], x: Site, r: i32) -> usize {
    // Positions are midpoints in units of 1/4 lattice spacing.
    let (cx, cy) = (4 * x.x, 4 * x.y);
    let mut last: Option<bool> = None;
    let mut count = 0;
    for &(px, py) in positions {
        let d = (px - cx).abs().max((py - cy).abs());
        let state = if d <= 4 * r {
            Some(true)
        } else if d > 8 * r {
            Some(false)
        } else {
            None
        };
        if let Some(s) = state {
            if last.is_some_and(|l| l != s) {
                count += 1;
            }
            last = Some(s);
        }
    }
    count
}

/// Frequencies of A_k(x; r, 2r) (at least 2k crossings of the exploration
/// path) for k = 0..=k_max in the Dobrushin square (⟦0,n⟧², (0,n/2), (n,n/2)),
/// x the centre.
pub fn crossing_counts(n: i32, r: i32, k_max: usize, budget: &McBudget, seed: u64, stream: u64) -> Result<Vec<Estimate>, ExperimentError> {
    let g = PrimalGraph::rectangle(n, n)?;
    let d = build_dobrushin(g.clone(), Site::new(0, n / 2), Site::new(n, n / 2))?;
    let bc = Boundary::dobrushin(&d);
    let m = build_medial(&d);
    let tracer = Tracer::new(&m);
    let mid: Vec<(i32, i32)> = m.edges().iter().map(|e| e.midpoint2()).collect();
    let x = Site::new(n / 2, n / 2);
    let mut path = Vec::new();
    let mut pos = Vec::new();
    let mut err = None;
    let est = run_cell(&g, &bc, budget, seed, stream, k_max + 1, |c, out| {
        if let Err(e) = tracer.path_with_winding(c, &mut path) {
            err = Some(e);
            out.fill(0.0);
            return;
        }
        pos.clear();
        pos.extend(path.iter().map(|&(k, _)| mid[k]));
        let pairs = annulus_crossings(&pos, x, r) / 2;
        for (k, o) in out.iter_mut().enumerate() {
            *o = f64::from(u8::from(pairs >= k));
        }
    })?;
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Crossing,
    Duality,
    BoundaryOnepoint,
    BoundaryPair,
    Circuit,
    OneArmHalfPlane,
    OneArmPlane,
    TwoPoint,
    CrossingCounts,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Crossing => "crossing",
            Self::Duality => "duality",
            Self::BoundaryOnepoint => "boundary_onepoint",
            Self::BoundaryPair => "boundary_pair",
            Self::Circuit => "circuit",
            Self::OneArmHalfPlane => "one_arm_half_plane",
            Self::OneArmPlane => "one_arm_plane",
            Self::TwoPoint => "two_point",
            Self::CrossingCounts => "crossing_counts",
        }
    }
}

fn schema_version() -> u32 {
    crate::io::SCHEMA_VERSION
}
fn default_sizes() -> Vec<i32> {
    vec![8, 16, 32]
}
fn default_beta() -> f64 {
    1.0
}
fn default_bc() -> Vec<BcKind> {
    vec![BcKind::Free]
}
fn default_ratio() -> f64 {
    0.5
}
fn default_dists() -> Vec<i32> {
    vec![4, 8, 16, 32]
}
fn default_box() -> i32 {
    256
}
fn default_window() -> i32 {
    8
}
fn default_radius() -> i32 {
    4
}
fn default_k_max() -> usize {
    4
}
fn default_separations() -> Vec<i32> {
    vec![2, 4]
}
fn default_min_r2() -> f64 {
    0.98
}
fn default_budget() -> McBudget {
    McBudget::new(200, 2000)
}

/// JSON description of an experiment. Unused fields are ignored by kinds that
/// do not need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub kind: ExperimentKind,
    /// n (or m for the plane arm, k for the slit-free kinds); increasing.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<i32>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_bc")]
    pub bc: Vec<BcKind>,
    #[serde(default = "default_budget")]
    pub budget: McBudget,
    #[serde(default)]
    pub seed: Option<u64>,
    /// m/n for circuits.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_dists")]
    pub distances: Vec<i32>,
    #[serde(default = "default_box")]
    pub box_side: i32,
    #[serde(default = "default_window")]
    pub window: i32,
    #[serde(default = "default_radius")]
    pub radius: i32,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// |x - y| values for boundary_pair.
    #[serde(default = "default_separations")]
    pub separations: Vec<i32>,
    #[serde(default = "default_min_r2")]
    pub min_r2: f64,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "kind": kind })).expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |s: &str| Err(ExperimentError::Invalid(s.into()));
        if self.schema_version != crate::io::SCHEMA_VERSION {
            return bad("unsupported schema_version");
        }
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) || self.sizes[0] < 1 {
            return bad("sizes must be positive and increasing");
        }
        if self.bc.is_empty() {
            return bad("bc must list at least one boundary condition");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.kind == ExperimentKind::TwoPoint && 4 * self.distances.iter().copied().max().unwrap_or(0) > self.box_side {
            return bad("box side must be at least 4 times the largest distance");
        }
        if matches!(self.kind, ExperimentKind::OneArmHalfPlane | ExperimentKind::OneArmPlane) && self.sizes[0] < 8 {
            return bad("arm sizes must be at least 8");
        }
        if self.kind == ExperimentKind::Circuit && !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad("ratio must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub kind: String,
    pub seed: u64,
    pub rows: Vec<CellRow>,
    /// Log-log fit of the estimates against the size column, when meaningful.
    pub fit: Option<PowerLawFit>,
}

fn fit_rows(rows: &[CellRow], min_r2: f64) -> Result<PowerLawFit, ExperimentError> {
    let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.n as f64, r.estimate, r.se)).collect();
    Ok(fit_with_window(&pts, min_r2)?)
}

/// Run an experiment; cells run in parallel and are merged in grid order.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    let kind = spec.kind.name();
    let b = &spec.budget;
    let rows: Vec<CellRow> = match spec.kind {
        ExperimentKind::Crossing => {
            let cells: Vec<(i32, BcKind)> = spec.sizes.iter().flat_map(|&n| spec.bc.iter().map(move |&bc| (n, bc))).collect();
            let out: Result<Vec<Vec<CellRow>>, ExperimentError> = cells
                .par_iter()
                .enumerate()
                .map(|(i, &(n, bc))| {
                    let s = crossing_stats(n, n, bc, b, seed, i as u64)?;
                    Ok(vec![
                        CellRow::new("crossing_vertical", n as i64, n as i64, bc.name(), &s.vertical, seed),
                        CellRow::new("crossing_horizontal", n as i64, n as i64, bc.name(), &s.horizontal, seed),
                        CellRow::new("crossing_both", n as i64, n as i64, bc.name(), &s.both, seed),
                    ])
                })
                .collect();
            out?.into_iter().flatten().collect()
        }
        ExperimentKind::Duality => {
            let out: Result<Vec<Vec<CellRow>>, ExperimentError> = spec
                .sizes
                .par_iter()
                .enumerate()
                .map(|(i, &n)| {
                    let r = duality(n, b, seed, i as u64)?;
                    Ok(vec![
                        CellRow::new("duality_primal", n as i64, n as i64, "free", &r.primal, seed),
                        CellRow::new("duality_dual", n as i64, n as i64, "wired_dual", &r.dual, seed),
                    ])
                })
                .collect();
            out?.into_iter().flatten().collect()
        }
        ExperimentKind::BoundaryOnepoint => {
            let out: Result<Vec<CellRow>, ExperimentError> = spec
                .sizes
                .par_iter()
                .enumerate()
                .map(|(i, &n)| {
                    let e = boundary_onepoint(n, spec.beta, 0, 0, b, seed, i as u64)?;
                    Ok(CellRow::new(kind, n as i64, 2 * n as i64, "free", &e, seed))
                })
                .collect();
            out?
        }
        ExperimentKind::BoundaryPair => {
            let cells: Vec<(i32, i32)> =
                spec.sizes.iter().flat_map(|&n| spec.separations.iter().map(move |&s| (n, s))).collect();
            let out: Result<Vec<CellRow>, ExperimentError> = cells
                .par_iter()
                .enumerate()
                .map(|(i, &(n, s))| {
                    let x1 = -s / 2;
                    let e = boundary_pair(n, spec.beta, x1, x1 + s, b, seed, i as u64)?;
                    Ok(CellRow::new(kind, n as i64, s as i64, "dobrushin", &e, seed))
                })
                .collect();
            out?
        }
        ExperimentKind::Circuit => {
            let cells: Vec<(i32, BcKind)> = spec.sizes.iter().flat_map(|&n| spec.bc.iter().map(move |&bc| (n, bc))).collect();
            let out: Result<Vec<Vec<CellRow>>, ExperimentError> = cells
                .par_iter()
                .enumerate()
                .map(|(i, &(n, bc))| {
                    let m = ((spec.ratio * n as f64).round() as i32).max(1);
                    let s = circuit_probability(m, n, bc, b, seed, i as u64)?;
                    if s.violations > 0 {
                        return Err(ExperimentError::Invalid(format!("four crossings without a circuit in {} samples", s.violations)));
                    }
                    Ok(vec![
                        CellRow::new("circuit", n as i64, m as i64, bc.name(), &s.circuit, seed),
                        CellRow::new("circuit_four_crossings", n as i64, m as i64, bc.name(), &s.four_crossings, seed),
                    ])
                })
                .collect();
            out?.into_iter().flatten().collect()
        }
        ExperimentKind::OneArmHalfPlane | ExperimentKind::OneArmPlane => {
            let arm = if spec.kind == ExperimentKind::OneArmPlane { ArmKind::Plane } else { ArmKind::HalfPlane };
            let bc = if arm == ArmKind::Plane { "wired" } else { "dobrushin" };
            let out: Result<Vec<CellRow>, ExperimentError> = spec
                .sizes
                .par_iter()
                .enumerate()
                .map(|(i, &n)| {
                    let e = one_arm_cell(arm, n, b, seed, i as u64)?;
                    Ok(CellRow::new(kind, n as i64, n as i64, bc, &e, seed))
                })
                .collect();
            out?
        }
        ExperimentKind::TwoPoint => {
            let bc = spec.bc[0];
            let est = two_point_cell(&spec.distances, spec.box_side, spec.window, bc, b, seed, 0)?;
            spec.distances
                .iter()
                .zip(&est)
                .map(|(&d, e)| CellRow::new(kind, d as i64, spec.box_side as i64, bc.name(), e, seed))
                .collect()
        }
        ExperimentKind::CrossingCounts => {
            let n = spec.sizes[spec.sizes.len() - 1];
            let est = crossing_counts(n, spec.radius, spec.k_max, b, seed, 0)?;
            est.iter().enumerate().map(|(k, e)| CellRow::new(kind, k as i64, n as i64, "dobrushin", e, seed)).collect()
        }
    };
    let fit = match spec.kind {
        ExperimentKind::BoundaryOnepoint | ExperimentKind::OneArmHalfPlane | ExperimentKind::OneArmPlane | ExperimentKind::TwoPoint
            if rows.len() >= 3 =>
        {
            Some(fit_rows(&rows, spec.min_r2)?)
        }
        _ => None,
    };
    Ok(ExperimentOutput { kind: kind.into(), seed, rows, fit })
}

/// Least-squares slope of log P(A_k) against k over rows with positive estimates.
pub fn geometric_decay_slope(rows: &[CellRow]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.estimate > 0.0).map(|r| (r.n as f64, r.estimate.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn budget() -> McBudget {
        McBudget::new(100, 20_000)
    }

    #[test]
    fn duality_is_exact_on_small_rectangles() {
        for (n, m) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            let (p, d) = exact_duality(n, m).unwrap();
            assert!((p + d - 1.0).abs() < 1e-12, "{n}x{m}: {p} + {d}");
        }
    }

    #[test]
    fn unit_square_vertical_crossing() {
        // Free unit square: a vertical crossing needs an open side edge.
        let g = PrimalGraph::rectangle(1, 1).unwrap();
        let m = enumerate_measure(&g, &Boundary::free(), FkParams::critical_ising()).unwrap();
        let (bottom, top) = crate::sampler::horizontal_sides(&g);
        let exact = m.event_probability(|c| crate::fk::sets_connected(&g, c, &bottom, &top));
        let est = crossing_probability(1, 1, BcKind::Free, &budget(), 3).unwrap();
        assert!(est.sigmas_from(exact) < 4.0, "{est:?} vs {exact}");
    }

    #[test]
    fn duality_chain_matches_identity() {
        let r = duality(2, &budget(), 11, 0).unwrap();
        assert!(r.sigmas < 4.0, "{r:?}");
    }

    #[test]
    fn two_point_matches_enumeration() {
        let exact = exact_two_point(1, 2, 0).unwrap();
        let est = two_point_cell(&[1], 2, 0, BcKind::Free, &budget(), 5, 0).unwrap()[0];
        assert!(est.sigmas_from(exact) < 4.0, "{est:?} vs {exact}");
        let zero = two_point_cell(&[0], 2, 0, BcKind::Free, &McBudget::new(0, 10), 5, 0).unwrap()[0];
        assert_eq!(zero.mean, 1.0);
    }

    #[test]
    fn boundary_points_match_enumeration() {
        let exact = exact_boundary_onepoint(1, 1.0, 0, 0).unwrap();
        let est = boundary_onepoint(1, 1.0, 0, 0, &budget(), 7, 0).unwrap();
        assert!(est.sigmas_from(exact) < 4.0, "{est:?} vs {exact}");
        let exact = exact_boundary_pair(1, 1.0, -1, 1).unwrap();
        let est = boundary_pair(1, 1.0, -1, 1, &budget(), 7, 1).unwrap();
        assert!(est.sigmas_from(exact) < 4.0, "{est:?} vs {exact}");
    }

    #[test]
    fn onepoint_rejects_points_near_corners() {
        assert!(boundary_onepoint(4, 1.0, 3, 0, &budget(), 1, 0).is_err());
    }

    #[test]
    fn annulus_crossing_count() {
        let x = Site::new(0, 0);
        // Units of 1/4: in (d = 4), middle, out (d = 40), in, out.
        let pos = [(4, 0), (6, 0), (40, 0), (0, 4), (0, -40)];
        assert_eq!(annulus_crossings(&pos, x, 1), 3);
        assert_eq!(annulus_crossings(&pos[..2], x, 1), 0);
    }

    #[test]
    fn circuit_extremes() {
        let g = annulus(1, 3).unwrap();
        assert_eq!(g.num_sites(), 49 - 1);
        let mut det = CircuitDetector::new(&g, 1, 3);
        let open = Config::open(g.num_edges());
        let closed = Config::closed(g.num_edges());
        assert!(det.circuit(&open) && det.four_crossings(&open));
        assert!(!det.circuit(&closed) && !det.four_crossings(&closed));
        // The ring at distance 2 alone is a circuit.
        let mut ring = Config::closed(g.num_edges());
        for e in 0..g.num_edges() {
            let (s, t) = g.edge_sites(e);
            if s.x.abs().max(s.y.abs()) == 2 && t.x.abs().max(t.y.abs()) == 2 {
                ring.set(e, true);
            }
        }
        assert!(det.circuit(&ring));
        assert!(!det.four_crossings(&ring));
    }

    #[test]
    fn circuit_chain_has_no_violations() {
        assert!(circuit_probability(0, 6, BcKind::Free, &McBudget::new(1, 1), 9, 0).is_err());
        let s = circuit_probability(2, 6, BcKind::Free, &McBudget::new(50, 2000), 9, 0).unwrap();
        assert_eq!(s.violations, 0);
        assert!(s.circuit.mean >= s.four_crossings.mean);
    }

    #[test]
    fn crossing_counts_are_monotone() {
        let est = crossing_counts(16, 2, 3, &McBudget::new(20, 400), 4, 0).unwrap();
        assert_eq!(est[0].mean, 1.0);
        assert!(est.windows(2).all(|w| w[0].mean >= w[1].mean));
    }

    #[test]
    fn spec_defaults_and_validation() {
        let s: ExperimentSpec = serde_json::from_str(r#"{"kind": "two_point"}"#).unwrap();
        assert_eq!(s.distances, vec![4, 8, 16, 32]);
        s.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"kind": "two_point", "bogus": 1}"#).is_err());
        let mut bad = ExperimentSpec::new(ExperimentKind::Crossing);
        bad.sizes = vec![8, 4];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn runs_are_reproducible() {
        let mut s = ExperimentSpec::new(ExperimentKind::Crossing);
        s.sizes = vec![2, 4];
        s.bc = vec![BcKind::Free, BcKind::Wired];
        s.budget = McBudget::new(10, 200);
        let a = run_experiment(&s, 42).unwrap();
        let b = run_experiment(&s, 42).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows.len(), 12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn four_crossings_imply_circuit(bits in proptest::collection::vec(any::<bool>(), 80)) {
            let g = annulus(1, 3).unwrap();
            let mut c = Config::closed(g.num_edges());
            // Bias towards open so that both events occur.
            for (e, &b) in bits.iter().enumerate() {
                c.set(e, b || e % 3 == 0);
            }
            let mut det = CircuitDetector::new(&g, 1, 3);
            prop_assert!(!det.four_crossings(&c) || det.circuit(&c));
        }

        #[test]
        fn crossing_count_bounded_by_path_length(pos in proptest::collection::vec((-80i32..80, -80i32..80), 0..60)) {
            let k = annulus_crossings(&pos, Site::new(0, 0), 4);
            prop_assert!(k < pos.len().max(1));
        }
    }
}
