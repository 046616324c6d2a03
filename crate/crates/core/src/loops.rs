//! Loop representation: interfaces between primal and dual clusters traced on
//! the medial graph, the exploration path from e_a to e_b, and windings.

use serde::{Deserialize, Serialize};

use crate::fk::Config;
use crate::lattice::{Dir, MedialGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoopError {
    #[error("interface left the medial edge set at edge {0}")]
    MalformedDomain(usize),
    #[error("medial edge {0} is not on the path")]
    NotOnPath(usize),
}

/// Exploration path and loops, as medial edge indices in traversal order.
/// Each loop starts at its smallest index; loops are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceSet {
    pub path: Vec<usize>,
    pub loops: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy)]
struct Succ {
    // Governing primal edge, for degree-4 heads.
    primal: Option<usize>,
    open: Option<usize>,
    closed: Option<usize>,
}

/// Precomputed successor table on a medial graph.
#[derive(Debug, Clone)]
pub struct Tracer {
    succ: Vec<Succ>,
    e_a: usize,
    e_b: usize,
    dirs: Vec<Dir>,
}

/// Signed quarter turns from direction `a` to direction `b` (never a U-turn).
pub fn turn(a: Dir, b: Dir) -> i32 {
    match (b.quarter() - a.quarter()).rem_euclid(4) {
        0 => 0,
        1 => 1,
        3 => -1,
        _ => unreachable!("medial curves never reverse"),
    }
}

impl Tracer {
    /// At a degree-four vertex an open primal edge joins the two black faces,
    /// so the curve keeps following the white face on its right; a closed one
    /// means an open dual edge, and the curve keeps following its black face.
    pub fn new(m: &MedialGraph) -> Self {
        let g = m.domain().graph();
        let succ = m
            .edges()
            .iter()
            .map(|e| {
                let info = m.vertex(e.to).expect("edge head is a vertex");
                match info.outgoing.len() {
                    0 => Succ { primal: None, open: None, closed: None },
                    1 => Succ { primal: None, open: Some(info.outgoing[0]), closed: Some(info.outgoing[0]) },
                    _ => {
                        let (s, t) = e.to.primal_edge();
                        let pick = |same_white: bool| {
                            info.outgoing.iter().copied().find(|&k| {
                                let f = m.edge(k);
                                if same_white { f.white == e.white } else { f.black == e.black }
                            })
                        };
                        match g.edge_between(s, t) {
                            Some(primal) => Succ { primal: Some(primal), open: pick(true), closed: pick(false) },
                            // Wall between two boundary arcs: acts as a closed edge.
                            None => Succ { primal: None, open: pick(false), closed: pick(false) },
                        }
                    }
                }
            })
            .collect();
        Tracer { succ, e_a: m.e_a(), e_b: m.e_b(), dirs: m.edges().iter().map(|e| e.dir).collect() }
    }

    pub fn num_edges(&self) -> usize {
        self.succ.len()
    }

    pub fn dir(&self, k: usize) -> Dir {
        self.dirs[k]
    }

    #[inline]
    pub fn next(&self, k: usize, c: &Config) -> Option<usize> {
        let s = &self.succ[k];
        match s.primal {
            Some(p) if c.get(p) => s.open,
            Some(_) => s.closed,
            None => s.open,
        }
    }

    /// Exploration path from e_a to e_b, with the winding (in quarter turns)
    /// from e_a to each path edge.
    pub fn path_with_winding(&self, c: &Config, out: &mut Vec<(usize, i32)>) -> Result<(), LoopError> {
        out.clear();
        let mut k = self.e_a;
        let mut w = 0;
        out.push((k, 0));
        while k != self.e_b {
            let n = self.next(k, c).ok_or(LoopError::MalformedDomain(k))?;
            w += turn(self.dirs[k], self.dirs[n]);
            k = n;
            out.push((k, w));
            if out.len() > self.succ.len() {
                return Err(LoopError::MalformedDomain(k));
            }
        }
        Ok(())
    }

    pub fn trace(&self, c: &Config) -> Result<InterfaceSet, LoopError> {
        let n = self.succ.len();
        let mut used = vec![false; n];
        let mut path = Vec::new();
        let mut k = self.e_a;
        loop {
            if used[k] {
                return Err(LoopError::MalformedDomain(k));
            }
            used[k] = true;
            path.push(k);
            if k == self.e_b {
                break;
            }
            k = self.next(k, c).ok_or(LoopError::MalformedDomain(k))?;
        }
        let mut loops = Vec::new();
        for start in 0..n {
            if used[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut k = start;
            while !used[k] {
                used[k] = true;
                cyc.push(k);
                k = self.next(k, c).ok_or(LoopError::MalformedDomain(k))?;
            }
            if k != start {
                return Err(LoopError::MalformedDomain(k));
            }
            // `start` is the smallest unused index, so the loop is already canonical.
            loops.push(cyc);
        }
        Ok(InterfaceSet { path, loops })
    }

    /// Number of loops (path excluded), reusing `used` as scratch.
    pub fn count_loops(&self, c: &Config, used: &mut Vec<bool>) -> Result<usize, LoopError> {
        let n = self.succ.len();
        used.clear();
        used.resize(n, false);
        let mut k = self.e_a;
        loop {
            if used[k] {
                return Err(LoopError::MalformedDomain(k));
            }
            used[k] = true;
            if k == self.e_b {
                break;
            }
            k = self.next(k, c).ok_or(LoopError::MalformedDomain(k))?;
        }
        let mut count = 0;
        for start in 0..n {
            if used[start] {
                continue;
            }
            let mut k = start;
            while !used[k] {
                used[k] = true;
                k = self.next(k, c).ok_or(LoopError::MalformedDomain(k))?;
            }
            if k != start {
                return Err(LoopError::MalformedDomain(k));
            }
            count += 1;
        }
        Ok(count)
    }
}

pub fn trace_interfaces(c: &Config, m: &MedialGraph) -> Result<InterfaceSet, LoopError> {
    Tracer::new(m).trace(c)
}

/// Winding (radians) of the path from the centre of e_a to the centre of `target`.
pub fn winding_along(tracer: &Tracer, path: &[usize], target: usize) -> Result<f64, LoopError> {
    let mut w = 0;
    for (i, &k) in path.iter().enumerate() {
        if k == target {
            return Ok(w as f64 * std::f64::consts::FRAC_PI_2);
        }
        if let Some(&n) = path.get(i + 1) {
            w += turn(tracer.dir(k), tracer.dir(n));
        }
    }
    Err(LoopError::NotOnPath(target))
}

/// Index of the first path edge in `set`, or None if the path never hits it.
pub fn hitting_step(path: &[usize], set: &[usize]) -> Option<usize> {
    path.iter().position(|k| set.contains(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fk::Config;
    use crate::lattice::{build_dobrushin, build_medial, Doubled, PrimalGraph, Site};

    fn medial(n: i32, m: i32, a: Site, b: Site) -> MedialGraph {
        build_medial(&build_dobrushin(PrimalGraph::rectangle(n, m).unwrap(), a, b).unwrap())
    }

    #[test]
    fn turn_table() {
        // (incoming, horizontal primal edge?, open?) -> outgoing, read off a drawing.
        let table = [
            (Dir::NE, true, true, Dir::SE),
            (Dir::NE, true, false, Dir::NW),
            (Dir::NE, false, true, Dir::NW),
            (Dir::NE, false, false, Dir::SE),
            (Dir::NW, true, true, Dir::SW),
            (Dir::NW, true, false, Dir::NE),
            (Dir::NW, false, true, Dir::NE),
            (Dir::NW, false, false, Dir::SW),
            (Dir::SW, true, true, Dir::NW),
            (Dir::SW, true, false, Dir::SE),
            (Dir::SW, false, true, Dir::SE),
            (Dir::SW, false, false, Dir::NW),
            (Dir::SE, true, true, Dir::NE),
            (Dir::SE, true, false, Dir::SW),
            (Dir::SE, false, true, Dir::SW),
            (Dir::SE, false, false, Dir::NE),
        ];
        let m = medial(4, 4, Site::new(0, 0), Site::new(4, 4));
        let tr = Tracer::new(&m);
        let g = m.domain().graph();
        let mut seen = 0;
        for (k, e) in m.edges().iter().enumerate() {
            if m.degree(e.to) != 4 {
                continue;
            }
            let horizontal = e.to.x.rem_euclid(2) == 1;
            let (s, t) = e.to.primal_edge();
            let p = g.edge_between(s, t).unwrap();
            for open in [true, false] {
                let mut c = Config::closed(g.num_edges());
                c.set(p, open);
                let out = tr.dir(tr.next(k, &c).unwrap());
                let row = table.iter().find(|r| r.0 == e.dir && r.1 == horizontal && r.2 == open).unwrap();
                assert_eq!(out, row.3, "edge {k} {e:?} open={open}");
                seen += 1;
            }
        }
        assert!(seen > 32);
    }

    #[test]
    fn edges_partitioned_for_all_configs() {
        for (n, mm) in [(1, 1), (2, 1), (2, 2)] {
            let m = medial(n, mm, Site::new(0, 0), Site::new(n, 0));
            let tr = Tracer::new(&m);
            let e = m.domain().graph().num_edges();
            for mask in 0..(1u64 << e) {
                let c = Config::from_mask(e, mask);
                let set = tr.trace(&c).unwrap();
                let total = set.path.len() + set.loops.iter().map(Vec::len).sum::<usize>();
                assert_eq!(total, m.num_edges());
                assert_eq!(set.path[0], m.e_a());
                assert_eq!(*set.path.last().unwrap(), m.e_b());
            }
        }
    }

    #[test]
    fn unit_square_closed_golden() {
        // a=(0,0), b=(1,0): only the bottom edge is free. With every edge
        // closed the path runs around the black face of a then of b; the
        // black faces of the wired sites (1,1),(0,1) have no free sides.
        let m = medial(1, 1, Site::new(0, 0), Site::new(1, 0));
        let tr = Tracer::new(&m);
        let set = tr.trace(&Config::closed(4)).unwrap();
        let ends: Vec<(Doubled, Doubled)> = set.path.iter().map(|&k| (m.edge(k).from, m.edge(k).to)).collect();
        assert_eq!(
            ends,
            vec![
                (Doubled::new(0, -1), Doubled::new(1, 0)),
                (Doubled::new(1, 0), Doubled::new(0, 1)),
                (Doubled::new(0, 1), Doubled::new(1, 2)),
                (Doubled::new(1, 2), Doubled::new(2, 1)),
                (Doubled::new(2, 1), Doubled::new(1, 0)),
                (Doubled::new(1, 0), Doubled::new(2, -1)),
            ]
        );
        assert!(set.loops.is_empty());
        assert_eq!(m.num_edges(), 6);
    }

    #[test]
    fn winding_basics() {
        let m = medial(2, 2, Site::new(0, 0), Site::new(2, 2));
        let tr = Tracer::new(&m);
        let set = tr.trace(&Config::closed(12)).unwrap();
        assert_eq!(winding_along(&tr, &set.path, m.e_a()).unwrap(), 0.0);
        let mut pw = Vec::new();
        tr.path_with_winding(&Config::closed(12), &mut pw).unwrap();
        for &(k, w) in &pw {
            assert_eq!(winding_along(&tr, &set.path, k).unwrap(), w as f64 * std::f64::consts::FRAC_PI_2);
            if tr.dir(k) == tr.dir(m.e_a()) {
                assert_eq!(w.rem_euclid(4), 0);
            }
        }
        let off = (0..m.num_edges()).find(|k| !set.path.contains(k)).unwrap();
        assert_eq!(winding_along(&tr, &set.path, off), Err(LoopError::NotOnPath(off)));
    }

    #[test]
    fn hitting() {
        let path = [5, 2, 9, 4];
        assert_eq!(hitting_step(&path, &[5]), Some(0));
        assert_eq!(hitting_step(&path, &[]), None);
        assert_eq!(hitting_step(&path, &[4, 9]), Some(2));
    }
}
