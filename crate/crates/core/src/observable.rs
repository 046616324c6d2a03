//! Smirnov's fermionic observable F on medial edges (exact and Monte Carlo),
//! the function H on faces, and checks of their discrete identities.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fk::{enumerate_measure, Boundary, Config, ExactMeasure, FkError, FkParams};
use crate::lattice::{Doubled, Face, MedialGraph, Site, WhiteKind};
use crate::loops::{LoopError, Tracer};
use crate::sampler::batch_means;
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObservableError {
    #[error(transparent)]
    Fk(#[from] FkError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("H is not well defined: increments disagree by {0:e}")]
    Inconsistent(f64),
}

/// e^{-i k π/4}: the phase e^{-iW/2} for a winding of k quarter turns.
fn phase(k: i32) -> Complex64 {
    Complex64::from_polar(1.0, -(k as f64) * FRAC_PI_4)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observable {
    /// F(e) per medial edge index.
    pub values: Vec<Complex64>,
    /// P(e ∈ γ), or its empirical frequency.
    pub on_path: Vec<f64>,
    /// Per-edge standard errors of F (Monte Carlo only).
    pub std_errors: Option<Vec<f64>>,
}

impl Observable {
    pub const SPIN: f64 = 0.5;
}

/// F(e) = Σ_ω P(ω) e^{-i W_γ(e_a,e)/2} 1{e ∈ γ} under the critical Dobrushin measure.
pub fn exact_observable(m: &MedialGraph) -> Result<Observable, ObservableError> {
    let d = m.domain();
    let measure = enumerate_measure(d.graph(), &Boundary::dobrushin(d), FkParams::critical_ising())?;
    exact_observable_with(m, &measure)
}

/// Same, with the Dobrushin measure at the critical point already enumerated.
pub fn exact_observable_with(m: &MedialGraph, measure: &ExactMeasure) -> Result<Observable, ObservableError> {
    let g = m.domain().graph();
    let tracer = Tracer::new(m);
    let probs = measure.probabilities();
    let ne = m.num_edges();
    let e = g.num_edges();
    let shard = probs.len().div_ceil(64).max(1);
    let parts: Vec<Result<(Vec<Complex64>, Vec<f64>), LoopError>> = probs
        .par_chunks(shard)
        .enumerate()
        .map(|(s, chunk)| {
            let mut f = vec![Complex64::new(0.0, 0.0); ne];
            let mut on = vec![0.0; ne];
            let mut c = Config::closed(e);
            let mut pw = Vec::new();
            for (i, &p) in chunk.iter().enumerate() {
                c.set_mask((s * shard + i) as u64);
                tracer.path_with_winding(&c, &mut pw)?;
                for &(k, w) in &pw {
                    f[k] += phase(w) * p;
                    on[k] += p;
                }
            }
            Ok((f, on))
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); ne];
    let mut on_path = vec![0.0; ne];
    for part in parts {
        let (f, on) = part?;
        for k in 0..ne {
            values[k] += f[k];
            on_path[k] += on[k];
        }
    }
    Ok(Observable { values, on_path, std_errors: None })
}

/// Accumulates the complex summand of F over sampled configurations.
pub struct McObservable<'m> {
    tracer: Tracer,
    medial: &'m MedialGraph,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    hit: Vec<Vec<f64>>,
    scratch: Vec<(usize, i32)>,
    row: Vec<Complex64>,
    row_hit: Vec<bool>,
}

impl<'m> McObservable<'m> {
    pub fn new(m: &'m MedialGraph) -> Self {
        let n = m.num_edges();
        McObservable {
            tracer: Tracer::new(m),
            medial: m,
            re: vec![Vec::new(); n],
            im: vec![Vec::new(); n],
            hit: vec![Vec::new(); n],
            scratch: Vec::new(),
            row: vec![Complex64::new(0.0, 0.0); n],
            row_hit: vec![false; n],
        }
    }

    pub fn add(&mut self, c: &Config) -> Result<(), LoopError> {
        self.tracer.path_with_winding(c, &mut self.scratch)?;
        self.row.fill(Complex64::new(0.0, 0.0));
        self.row_hit.fill(false);
        for &(k, w) in &self.scratch {
            self.row[k] = phase(w);
            self.row_hit[k] = true;
        }
        for k in 0..self.row.len() {
            self.re[k].push(self.row[k].re);
            self.im[k].push(self.row[k].im);
            self.hit[k].push(f64::from(u8::from(self.row_hit[k])));
        }
        Ok(())
    }

    pub fn finish(&self) -> Observable {
        let n = self.medial.num_edges();
        let mut values = Vec::with_capacity(n);
        let mut errs = Vec::with_capacity(n);
        let mut on_path = Vec::with_capacity(n);
        for k in 0..n {
            let r = batch_means(&self.re[k]);
            let i = batch_means(&self.im[k]);
            values.push(Complex64::new(r.mean, i.mean));
            errs.push(r.std_error.hypot(i.std_error));
            on_path.push(batch_means(&self.hit[k]).mean);
        }
        Observable { values, on_path, std_errors: Some(errs) }
    }
}

/// The four edges at a degree-four vertex in clockwise order NE, SE, SW, NW
/// (by the quadrant of their other endpoint).
pub fn clockwise_edges(m: &MedialGraph, v: Doubled) -> Option<[usize; 4]> {
    let info = m.vertex(v)?;
    if !m.is_interior_vertex(v) {
        return None;
    }
    let mut out = [usize::MAX; 4];
    for &k in info.incoming.iter().chain(&info.outgoing) {
        let e = m.edge(k);
        let o = if e.from == v { e.to } else { e.from };
        let slot = match (o.x > v.x, o.y > v.y) {
            (true, true) => 0,
            (true, false) => 1,
            (false, false) => 2,
            (false, true) => 3,
        };
        out[slot] = k;
    }
    Some(out)
}

/// max over degree-four vertices of |F(e1)+F(e3)-F(e2)-F(e4)|.
pub fn check_local_relation(f: &[Complex64], m: &MedialGraph) -> f64 {
    m.vertices()
        .keys()
        .filter_map(|&v| clockwise_edges(m, v))
        .map(|[e1, e2, e3, e4]| (f[e1] + f[e3] - f[e2] - f[e4]).norm())
        .fold(0.0, f64::max)
}

/// max over degree-four vertices of ||F(e1)|²+|F(e3)|²-|F(e2)|²-|F(e4)|²|.
pub fn check_orthogonal_squares(f: &[Complex64], m: &MedialGraph) -> f64 {
    m.vertices()
        .keys()
        .filter_map(|&v| clockwise_edges(m, v))
        .map(|[e1, e2, e3, e4]| (f[e1].norm_sqr() + f[e3].norm_sqr() - f[e2].norm_sqr() - f[e4].norm_sqr()).abs())
        .fold(0.0, f64::max)
}

/// max over degree-two vertices of the deviations of |F(e5)| and |F(e6)| from P(e5 ∈ γ).
pub fn check_degree_two(obs: &Observable, m: &MedialGraph) -> f64 {
    let mut worst: f64 = 0.0;
    for &v in m.vertices().keys() {
        if m.is_interior_vertex(v) {
            continue;
        }
        for (i, o) in m.vertex_sides(v) {
            let (Some(e5), Some(e6)) = (i, o) else { continue };
            let p = obs.on_path[e5];
            worst = worst.max((obs.values[e5].norm() - p).abs()).max((obs.values[e6].norm() - p).abs());
        }
    }
    worst
}

/// Angle of the line on which F(e) must lie: -(θ_e - θ_{e_a})/2 modulo π.
pub fn expected_line(m: &MedialGraph, k: usize) -> f64 {
    let qa = m.edge(m.e_a()).dir.quarter();
    -((m.edge(k).dir.quarter() - qa) as f64) * FRAC_PI_4
}

/// Distance (mod π) between arg F(e) and its line, maximized over edges with F(e) ≠ 0.
pub fn check_argument_lines(f: &[Complex64], m: &MedialGraph) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, z) in f.iter().enumerate() {
        if z.norm() < 1e-14 {
            continue;
        }
        let d = (z.arg() - expected_line(m, k)).rem_euclid(std::f64::consts::PI);
        worst = worst.max(d.min(std::f64::consts::PI - d));
    }
    worst
}

/// For each free-arc site x and each medial edge e between x and an outside
/// free white face: max |P(x ↝ wired arc) - |F(e)||, under exact enumeration.
pub fn check_boundary_interpretation(obs: &Observable, m: &MedialGraph) -> Result<f64, ObservableError> {
    let d = m.domain();
    let measure = enumerate_measure(d.graph(), &Boundary::dobrushin(d), FkParams::critical_ising())?;
    Ok(check_boundary_interpretation_with(obs, m, &measure))
}

/// Same, with the Dobrushin measure already enumerated. One pass computes
/// P(x connected to the wired arc) for every free-arc site x.
pub fn check_boundary_interpretation_with(obs: &Observable, m: &MedialGraph, measure: &ExactMeasure) -> f64 {
    let d = m.domain();
    let g = d.graph();
    let wired: Vec<usize> = d.wired_arc().iter().map(|w| g.site_index(*w).unwrap()).collect();
    let n = g.num_sites();
    let mut sites: Vec<Site> = d.free_arc().to_vec();
    sites.sort();
    sites.dedup();
    let idx: Vec<usize> = sites.iter().map(|x| g.site_index(*x).unwrap()).collect();
    let probs = measure.probabilities();
    let shard = probs.len().div_ceil(64).max(1);
    let parts: Vec<Vec<f64>> = probs
        .par_chunks(shard)
        .enumerate()
        .map(|(s, chunk)| {
            let mut acc = vec![0.0; idx.len()];
            let mut uf = UnionFind::new(n);
            for (i, &p) in chunk.iter().enumerate() {
                let mask = (s * shard + i) as u64;
                uf.reset();
                for w in &wired[1..] {
                    uf.union(wired[0], *w);
                }
                for (e, &(a, b)) in g.edges().iter().enumerate() {
                    if mask >> e & 1 == 1 {
                        uf.union(a, b);
                    }
                }
                let root = uf.find(wired[0]);
                for (t, &xi) in idx.iter().enumerate() {
                    if uf.find(xi) == root {
                        acc[t] += p;
                    }
                }
            }
            acc
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (t, &x) in sites.iter().enumerate() {
        let prob: f64 = parts.iter().map(|a| a[t]).sum();
        for (&w, &kind) in m.white_faces() {
            if kind != WhiteKind::FreeArc {
                continue;
            }
            if let Some(k) = m.edge_between_faces(x, w) {
                worst = worst.max((prob - obs.values[k].norm()).abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HFunction {
    pub values: BTreeMap<Face, f64>,
    /// Largest disagreement of H(B) - H(W) with |F(e)|² over all edges.
    pub residual: f64,
}

impl HFunction {
    pub fn get(&self, f: Face) -> Option<f64> {
        self.values.get(&f).copied()
    }

    pub fn black(&self, s: Site) -> Option<f64> {
        self.get(Face::Black(s))
    }

    pub fn white(&self, w: Doubled) -> Option<f64> {
        self.get(Face::White(w))
    }
}

/// Integrate H(B) - H(W) = |F(e)|² breadth-first from the black face of a,
/// where H = 1.
pub fn build_h(f: &[Complex64], m: &MedialGraph) -> Result<HFunction, ObservableError> {
    build_h_with_tolerance(f, m, 1e-9)
}

pub fn build_h_with_tolerance(f: &[Complex64], m: &MedialGraph, tol: f64) -> Result<HFunction, ObservableError> {
    let mut incident: BTreeMap<Face, Vec<usize>> = BTreeMap::new();
    for (k, e) in m.edges().iter().enumerate() {
        incident.entry(Face::Black(e.black)).or_default().push(k);
        incident.entry(Face::White(e.white)).or_default().push(k);
    }
    let mut values = BTreeMap::new();
    let start = Face::Black(m.domain().a());
    values.insert(start, 1.0);
    let mut queue = VecDeque::from([start]);
    while let Some(face) = queue.pop_front() {
        let h = values[&face];
        for &k in incident.get(&face).map(Vec::as_slice).unwrap_or(&[]) {
            let e = m.edge(k);
            let inc = f[k].norm_sqr();
            let (other, val) = match face {
                Face::Black(_) => (Face::White(e.white), h - inc),
                _ => (Face::Black(e.black), h + inc),
            };
            if let std::collections::btree_map::Entry::Vacant(v) = values.entry(other) {
                v.insert(val);
                queue.push_back(other);
            }
        }
    }
    let residual = m
        .edges()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let hb = values[&Face::Black(e.black)];
            let hw = values[&Face::White(e.white)];
            (hb - hw - f[k].norm_sqr()).abs()
        })
        .fold(0.0, f64::max);
    if residual > tol {
        return Err(ObservableError::Inconsistent(residual));
    }
    Ok(HFunction { values, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityReport {
    pub min_black_laplacian: f64,
    pub max_white_laplacian: f64,
    pub black_faces_checked: usize,
    pub white_faces_checked: usize,
}

impl HarmonicityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_black_laplacian >= -tol && self.max_white_laplacian <= tol
    }
}

/// Four-neighbour Laplacian of H at faces whose four corners are degree-four
/// vertices. Black neighbours are primal lattice neighbours; white ones are
/// dual lattice neighbours.
pub fn check_harmonicity(h: &HFunction, m: &MedialGraph) -> HarmonicityReport {
    let mut min_b = f64::INFINITY;
    let mut max_w = f64::NEG_INFINITY;
    let (mut nb, mut nw) = (0, 0);
    for (&face, &val) in &h.values {
        if !m.is_inner_face(face) {
            continue;
        }
        let c = face.center();
        let nbrs = [(2, 0), (0, 2), (-2, 0), (0, -2)].map(|(dx, dy)| c.add(dx, dy));
        match face {
            Face::Black(_) => {
                let avg = nbrs.iter().map(|p| h.values[&Face::Black(p.to_site())]).sum::<f64>() / 4.0;
                min_b = min_b.min(avg - val);
                nb += 1;
            }
            Face::White(_) => {
                let avg = nbrs.iter().map(|p| h.values[&Face::White(*p)]).sum::<f64>() / 4.0;
                max_w = max_w.max(avg - val);
                nw += 1;
            }
            _ => {}
        }
    }
    HarmonicityReport { min_black_laplacian: min_b, max_white_laplacian: max_w, black_faces_checked: nb, white_faces_checked: nw }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_dobrushin, build_medial, PrimalGraph};

    fn medial(n: i32, mm: i32, a: Site, b: Site) -> MedialGraph {
        build_medial(&build_dobrushin(PrimalGraph::rectangle(n, mm).unwrap(), a, b).unwrap())
    }

    #[test]
    fn unit_square_table() {
        let m = medial(1, 1, Site::new(0, 0), Site::new(1, 0));
        let obs = exact_observable(&m).unwrap();
        assert!((obs.values[m.e_a()] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((obs.values[m.e_b()].norm() - 1.0).abs() < 1e-14);
        assert!(check_local_relation(&obs.values, &m) < 1e-12);
        assert!(check_argument_lines(&obs.values, &m) < 1e-12);
        let h = build_h(&obs.values, &m).unwrap();
        assert_eq!(h.black(Site::new(0, 0)), Some(1.0));
    }

    #[test]
    fn three_by_two_identities() {
        let m = medial(3, 2, Site::new(0, 0), Site::new(3, 2));
        let obs = exact_observable(&m).unwrap();
        assert!(check_local_relation(&obs.values, &m) < 1e-12);
        assert!(check_orthogonal_squares(&obs.values, &m) < 1e-12);
        assert!(check_degree_two(&obs, &m) < 1e-12);
        assert!(check_argument_lines(&obs.values, &m) < 1e-12);
        assert!(check_boundary_interpretation(&obs, &m).unwrap() < 1e-12);
        let h = build_h(&obs.values, &m).unwrap();
        assert!(h.residual < 1e-12);
        for s in m.wired_arc_faces() {
            assert!((h.black(s).unwrap() - 1.0).abs() < 1e-12);
        }
        for w in m.free_arc_faces() {
            assert!(h.white(w).unwrap().abs() < 1e-12);
        }
        assert!(h.values.values().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        let rep = check_harmonicity(&h, &m);
        assert!(rep.passes(1e-12), "{rep:?}");
    }

    #[test]
    fn perturbed_f_is_caught() {
        let m = medial(2, 2, Site::new(0, 0), Site::new(2, 2));
        let mut f = exact_observable(&m).unwrap().values;
        let v = *m.vertices().iter().find(|(_, i)| i.degree() == 4).unwrap().0;
        let k = clockwise_edges(&m, v).unwrap()[0];
        f[k] += Complex64::new(0.05, 0.0);
        assert!(check_local_relation(&f, &m) > 0.01);
        assert!(matches!(build_h(&f, &m), Err(ObservableError::Inconsistent(_))));
    }
}
