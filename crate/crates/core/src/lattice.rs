//! Square-lattice domains: primal subgraphs, duals, Dobrushin domains, the
//! medial graph with its oriented edges, and the two-layer extension used by
//! the harmonic-measure solver.
//!
//! Coordinates on the medial level are *doubled*: the black face of the primal
//! site `(x, y)` is centred at `(2x, 2y)`, white (dual) faces sit at odd/odd
//! points, and medial vertices (midpoints of primal edges) at mixed parity.
//! Everything stays in integer arithmetic.
//!
//! Boundary convention: a site of a [`PrimalGraph`] is a *boundary* site when
//! it has fewer than four incident edges in the graph. Note that this is not
//! the usual graph-theoretic notion. Dobrushin arcs are instead read off the
//! outer face walk of the graph (see [`DobrushinDomain`]), which is a simple
//! polygon for every admissible domain.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("rectangle dimensions must be positive, got {0}x{1}")]
    EmptyRectangle(i32, i32),
    #[error("graph has no sites")]
    EmptyGraph,
    #[error("edge {0:?}-{1:?} does not join lattice neighbours")]
    NotAdjacent(Site, Site),
    #[error("site {0:?} is not in the graph")]
    UnknownSite(Site),
    #[error("outer boundary is not a self-avoiding polygon (site {0:?} visited twice)")]
    NotSimplePolygon(Site),
    #[error("site {0:?} is not on the boundary polygon")]
    NotOnBoundary(Site),
    #[error("marked point {0:?} sits at a reflex corner of the boundary polygon")]
    ReflexMarkedPoint(Site),
    #[error("graph is not the full lattice region bounded by its polygon: {0}")]
    NotFilled(String),
    #[error("invalid domain description: {0}")]
    Spec(String),
}

/// A vertex of Z².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    pub fn offset(self, d: Step) -> Site {
        let (dx, dy) = d.vector();
        Site::new(self.x + dx, self.y + dy)
    }

    pub fn doubled(self) -> Doubled {
        Doubled::new(2 * self.x, 2 * self.y)
    }

    pub fn l1(self, other: Site) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

// Row-major order: sites sort by row, then column.
impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A point of the doubled lattice (see module docs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Doubled {
    pub x: i32,
    pub y: i32,
}

impl Doubled {
    pub const fn new(x: i32, y: i32) -> Self {
        Doubled { x, y }
    }

    pub fn add(self, dx: i32, dy: i32) -> Doubled {
        Doubled::new(self.x + dx, self.y + dy)
    }

    pub fn is_black(self) -> bool {
        self.x.rem_euclid(2) == 0 && self.y.rem_euclid(2) == 0
    }

    pub fn is_white(self) -> bool {
        self.x.rem_euclid(2) == 1 && self.y.rem_euclid(2) == 1
    }

    pub fn is_medial_vertex(self) -> bool {
        (self.x + self.y).rem_euclid(2) == 1
    }

    /// The primal site of a black face.
    pub fn to_site(self) -> Site {
        debug_assert!(self.is_black());
        Site::new(self.x / 2, self.y / 2)
    }

    /// Endpoints of the primal edge whose midpoint is this medial vertex.
    pub fn primal_edge(self) -> (Site, Site) {
        debug_assert!(self.is_medial_vertex());
        if self.x.rem_euclid(2) == 1 {
            (
                Site::new((self.x - 1) / 2, self.y / 2),
                Site::new((self.x + 1) / 2, self.y / 2),
            )
        } else {
            (
                Site::new(self.x / 2, (self.y - 1) / 2),
                Site::new(self.x / 2, (self.y + 1) / 2),
            )
        }
    }

    /// Lower-left primal corner of a white face (its unit cell).
    pub fn cell(self) -> Site {
        debug_assert!(self.is_white());
        Site::new((self.x - 1) / 2, (self.y - 1) / 2)
    }

    pub fn from_cell(c: Site) -> Doubled {
        Doubled::new(2 * c.x + 1, 2 * c.y + 1)
    }

    /// Real-plane coordinates in primal lattice units.
    pub fn position(self) -> (f64, f64) {
        (self.x as f64 / 2.0, self.y as f64 / 2.0)
    }
}

/// Unit step of the primal lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    E,
    N,
    W,
    S,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::E, Step::N, Step::W, Step::S];

    pub fn vector(self) -> (i32, i32) {
        match self {
            Step::E => (1, 0),
            Step::N => (0, 1),
            Step::W => (-1, 0),
            Step::S => (0, -1),
        }
    }

    pub fn ccw(self) -> Step {
        match self {
            Step::E => Step::N,
            Step::N => Step::W,
            Step::W => Step::S,
            Step::S => Step::E,
        }
    }

    pub fn between(from: Site, to: Site) -> Option<Step> {
        match (to.x - from.x, to.y - from.y) {
            (1, 0) => Some(Step::E),
            (0, 1) => Some(Step::N),
            (-1, 0) => Some(Step::W),
            (0, -1) => Some(Step::S),
            _ => None,
        }
    }
}

/// Direction of an oriented medial edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    NE,
    NW,
    SW,
    SE,
}

impl Dir {
    pub fn from_vector(dx: i32, dy: i32) -> Dir {
        match (dx > 0, dy > 0) {
            (true, true) => Dir::NE,
            (false, true) => Dir::NW,
            (false, false) => Dir::SW,
            (true, false) => Dir::SE,
        }
    }

    pub fn vector(self) -> (i32, i32) {
        match self {
            Dir::NE => (1, 1),
            Dir::NW => (-1, 1),
            Dir::SW => (-1, -1),
            Dir::SE => (1, -1),
        }
    }

    /// Angle in quarter turns counterclockwise from NE.
    pub fn quarter(self) -> i32 {
        match self {
            Dir::NE => 0,
            Dir::NW => 1,
            Dir::SW => 2,
            Dir::SE => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrimalGraph {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
    boundary: Vec<bool>,
}

impl PrimalGraph {
    /// Build from explicit sites and unit edges. Sites are stored in row-major
    /// order and edges sorted by their endpoint indices, so indexing is
    /// independent of input order.
    pub fn from_parts(
        sites: impl IntoIterator<Item = Site>,
        edges: impl IntoIterator<Item = (Site, Site)>,
    ) -> Result<Self, LatticeError> {
        let set: BTreeSet<Site> = sites.into_iter().collect();
        if set.is_empty() {
            return Err(LatticeError::EmptyGraph);
        }
        let sites: Vec<Site> = set.into_iter().collect();
        let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut pairs = BTreeSet::new();
        for (s, t) in edges {
            if s.l1(t) != 1 {
                return Err(LatticeError::NotAdjacent(s, t));
            }
            let i = *index.get(&s).ok_or(LatticeError::UnknownSite(s))?;
            let j = *index.get(&t).ok_or(LatticeError::UnknownSite(t))?;
            pairs.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<(usize, usize)> = pairs.into_iter().collect();
        let edge_index = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        let mut adjacency = vec![Vec::new(); sites.len()];
        for (k, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push((j, k));
            adjacency[j].push((i, k));
        }
        let boundary = adjacency.iter().map(|a| a.len() < 4).collect();
        Ok(PrimalGraph { sites, index, edges, edge_index, adjacency, boundary })
    }

    /// All sites of the set together with every unit edge between them.
    pub fn induced(sites: impl IntoIterator<Item = Site>) -> Result<Self, LatticeError> {
        let set: BTreeSet<Site> = sites.into_iter().collect();
        let mut edges = Vec::new();
        for &s in &set {
            for t in [s.offset(Step::E), s.offset(Step::N)] {
                if set.contains(&t) {
                    edges.push((s, t));
                }
            }
        }
        Self::from_parts(set, edges)
    }

    /// ⟦0,n⟧×⟦0,m⟧.
    pub fn rectangle(n: i32, m: i32) -> Result<Self, LatticeError> {
        Self::rectangle_between(0, 0, n, m)
    }

    /// ⟦x0,x1⟧×⟦y0,y1⟧.
    pub fn rectangle_between(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Self, LatticeError> {
        if x1 <= x0 || y1 <= y0 {
            return Err(LatticeError::EmptyRectangle(x1 - x0, y1 - y0));
        }
        Self::induced((y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Site::new(x, y))))
    }

    /// Copy of the graph with the given edges deleted (sites are kept).
    pub fn without_edges(&self, removed: &[(Site, Site)]) -> Result<Self, LatticeError> {
        let mut gone = HashSet::new();
        for &(s, t) in removed {
            let e = self.edge_between(s, t).ok_or(LatticeError::NotAdjacent(s, t))?;
            gone.insert(e);
        }
        let edges = (0..self.edges.len())
            .filter(|e| !gone.contains(e))
            .map(|e| self.edge_sites(e))
            .collect::<Vec<_>>();
        Self::from_parts(self.sites.iter().copied(), edges)
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    pub fn site_index(&self, s: Site) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index.contains_key(&s)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_sites(&self, e: usize) -> (Site, Site) {
        let (i, j) = self.edges[e];
        (self.sites[i], self.sites[j])
    }

    pub fn edge_between(&self, s: Site, t: Site) -> Option<usize> {
        let i = self.site_index(s)?;
        let j = self.site_index(t)?;
        self.edge_index.get(&(i.min(j), i.max(j))).copied()
    }

    /// `(neighbour site index, edge index)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_sites(&self) -> Vec<usize> {
        (0..self.sites.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.sites.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Unit cells (by lower-left corner) whose four sides are all edges of the graph.
    pub fn closed_cells(&self) -> BTreeSet<Site> {
        let mut cells = BTreeSet::new();
        for &s in &self.sites {
            let e = s.offset(Step::E);
            let n = s.offset(Step::N);
            let ne = e.offset(Step::N);
            if self.edge_between(s, e).is_some()
                && self.edge_between(s, n).is_some()
                && self.edge_between(e, ne).is_some()
                && self.edge_between(n, ne).is_some()
            {
                cells.insert(s);
            }
        }
        cells
    }

    /// Counterclockwise walk around the outer face, starting at the lowest,
    /// then leftmost, site. The walk keeps the unbounded face on its right.
    pub fn outer_walk(&self) -> Vec<Site> {
        let start = self.sites[0];
        if self.adjacency[0].is_empty() {
            return vec![start];
        }
        let mut walk = vec![start];
        let mut cur = start;
        // Pretend we arrived heading south; the first move is then east or north.
        let mut heading = Step::S;
        let mut first_move: Option<(Site, Step)> = None;
        loop {
            // Prefer right turn, straight, left turn, U-turn.
            let right = heading.ccw().ccw().ccw();
            let options = [right, heading, heading.ccw(), heading.ccw().ccw()];
            let mut moved = None;
            for d in options {
                let nxt = cur.offset(d);
                if self.edge_between(cur, nxt).is_some() {
                    moved = Some((nxt, d));
                    break;
                }
            }
            let (nxt, d) = moved.expect("non-isolated site has a neighbour");
            match first_move {
                None => first_move = Some((cur, d)),
                Some(f) if f == (cur, d) => {
                    walk.pop();
                    return walk;
                }
                _ => {}
            }
            walk.push(nxt);
            cur = nxt;
            heading = d;
        }
    }
}

/// Cells of Z² (by lower-left corner) that touch at least one edge of `g`.
fn touched_cells(g: &PrimalGraph) -> BTreeSet<Site> {
    let mut cells = BTreeSet::new();
    for e in 0..g.num_edges() {
        let (s, t) = g.edge_sites(e);
        let lo = s.min(t);
        if s.y == t.y {
            cells.insert(lo);
            cells.insert(Site::new(lo.x, lo.y - 1));
        } else {
            cells.insert(lo);
            cells.insert(Site::new(lo.x - 1, lo.y));
        }
    }
    cells
}

fn cell_dual(g: &PrimalGraph, cells: BTreeSet<Site>) -> Result<PrimalGraph, LatticeError> {
    let mut edges = Vec::new();
    for &c in &cells {
        // Cell to the east is separated by the vertical edge (c+E, c+E+N).
        let east = c.offset(Step::E);
        if cells.contains(&east) && g.edge_between(east, east.offset(Step::N)).is_some() {
            edges.push((c, east));
        }
        let north = c.offset(Step::N);
        if cells.contains(&north) && g.edge_between(north, north.offset(Step::E)).is_some() {
            edges.push((c, north));
        }
    }
    PrimalGraph::from_parts(cells, edges)
}

/// Dual graph on the bounded unit-cell faces of `g`. A dual site is stored at
/// the lower-left corner of its cell, i.e. shifted by (−½, −½).
pub fn dual_graph(g: &PrimalGraph) -> Result<PrimalGraph, LatticeError> {
    let cells = g.closed_cells();
    if cells.is_empty() {
        return Err(LatticeError::EmptyGraph);
    }
    cell_dual(g, cells)
}

/// The planar dual G*: one vertex per face of Z² having an edge of `g` on its
/// boundary (outer faces included), joined across every edge of `g`. Sites use
/// the same lower-left-corner convention as [`dual_graph`].
pub fn full_dual(g: &PrimalGraph) -> Result<PrimalGraph, LatticeError> {
    let cells = touched_cells(g);
    if cells.is_empty() {
        return Err(LatticeError::EmptyGraph);
    }
    cell_dual(g, cells)
}

/// Which boundary condition an outside white face carries, seen from one
/// boundary site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Free,
    Wired,
}

#[derive(Debug, Clone)]
pub struct DobrushinDomain {
    graph: PrimalGraph,
    a: Site,
    b: Site,
    polygon: Vec<Site>,
    free_arc: Vec<Site>,
    wired_arc: Vec<Site>,
    interior_cells: BTreeSet<Site>,
}

fn point_in_polygon(poly: &[Site], cx: f64, cy: f64) -> bool {
    let mut inside = false;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        if p.x == q.x && p.x as f64 > cx {
            let (lo, hi) = (p.y.min(q.y) as f64, p.y.max(q.y) as f64);
            if lo < cy && cy < hi {
                inside = !inside;
            }
        }
    }
    inside
}

/// Build the Dobrushin domain (g, a, b). The free arc runs counterclockwise
/// from `a` to `b`, the wired arc from `b` back to `a`. `a == b` is allowed:
/// the wired arc is then the single site `a`.
pub fn build_dobrushin(g: PrimalGraph, a: Site, b: Site) -> Result<DobrushinDomain, LatticeError> {
    let walk = g.outer_walk();
    let mut seen = HashSet::new();
    for &s in &walk {
        if !seen.insert(s) {
            return Err(LatticeError::NotSimplePolygon(s));
        }
    }
    if walk.len() < 4 {
        return Err(LatticeError::NotSimplePolygon(walk[0]));
    }
    // Every cell inside the polygon must be a full cell of the graph, and every
    // edge and site of the graph must lie in the closed region.
    let (xmin, xmax) = walk.iter().fold((i32::MAX, i32::MIN), |acc, s| (acc.0.min(s.x), acc.1.max(s.x)));
    let (ymin, ymax) = walk.iter().fold((i32::MAX, i32::MIN), |acc, s| (acc.0.min(s.y), acc.1.max(s.y)));
    let mut interior_cells = BTreeSet::new();
    for y in ymin..ymax {
        for x in xmin..xmax {
            if point_in_polygon(&walk, x as f64 + 0.5, y as f64 + 0.5) {
                interior_cells.insert(Site::new(x, y));
            }
        }
    }
    let closed = g.closed_cells();
    if let Some(c) = interior_cells.difference(&closed).next() {
        return Err(LatticeError::NotFilled(format!("cell at {c:?} is inside the polygon but not a face of the graph")));
    }
    let on_polygon: HashSet<Site> = walk.iter().copied().collect();
    let mut poly_edges = HashSet::new();
    for i in 0..walk.len() {
        let (s, t) = (walk[i], walk[(i + 1) % walk.len()]);
        poly_edges.insert((s.min(t), s.max(t)));
    }
    for e in 0..g.num_edges() {
        let (s, t) = g.edge_sites(e);
        if poly_edges.contains(&(s.min(t), s.max(t))) {
            continue;
        }
        let lo = s.min(t);
        let (c1, c2) = if s.y == t.y { (lo, Site::new(lo.x, lo.y - 1)) } else { (lo, Site::new(lo.x - 1, lo.y)) };
        if !(interior_cells.contains(&c1) && interior_cells.contains(&c2)) {
            return Err(LatticeError::NotFilled(format!("edge {s:?}-{t:?} is neither on the polygon nor interior")));
        }
    }
    for &s in g.sites() {
        if !on_polygon.contains(&s) && !point_in_polygon(&walk, s.x as f64 + 1e-3, s.y as f64 + 1e-4) {
            return Err(LatticeError::NotFilled(format!("site {s:?} lies outside the polygon")));
        }
    }
    let ia = walk.iter().position(|&s| s == a).ok_or(LatticeError::NotOnBoundary(a))?;
    let ib = walk.iter().position(|&s| s == b).ok_or(LatticeError::NotOnBoundary(b))?;
    let len = walk.len();
    let polygon: Vec<Site> = (0..len).map(|k| walk[(ia + k) % len]).collect();
    let rel_b = (ib + len - ia) % len;
    let (free_arc, wired_arc) = if a == b {
        let mut free = polygon.clone();
        free.push(a);
        (free, vec![a])
    } else {
        let free = polygon[..=rel_b].to_vec();
        let mut wired = polygon[rel_b..].to_vec();
        wired.push(a);
        (free, wired)
    };
    let d = DobrushinDomain { graph: g, a, b, polygon, free_arc, wired_arc, interior_cells };
    for s in [a, b] {
        if d.outside_sectors(d.polygon_position(s).unwrap()).len() < 2 {
            return Err(LatticeError::ReflexMarkedPoint(s));
        }
    }
    Ok(d)
}

impl DobrushinDomain {
    pub fn graph(&self) -> &PrimalGraph {
        &self.graph
    }

    pub fn a(&self) -> Site {
        self.a
    }

    pub fn b(&self) -> Site {
        self.b
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == self.b
    }

    /// Boundary polygon in counterclockwise order, starting at `a`.
    pub fn polygon(&self) -> &[Site] {
        &self.polygon
    }

    pub fn free_arc(&self) -> &[Site] {
        &self.free_arc
    }

    pub fn wired_arc(&self) -> &[Site] {
        &self.wired_arc
    }

    pub fn interior_cells(&self) -> &BTreeSet<Site> {
        &self.interior_cells
    }

    pub fn is_wired(&self, s: Site) -> bool {
        self.wired_arc.contains(&s)
    }

    pub fn is_free(&self, s: Site) -> bool {
        self.free_arc.contains(&s)
    }

    fn polygon_position(&self, s: Site) -> Option<usize> {
        self.polygon.iter().position(|&p| p == s)
    }

    /// Unit steps from the polygon site at position `i` that bound its outside
    /// wedge, sweeping counterclockwise from the incoming edge to the outgoing one.
    /// Returns the white faces (doubled) of the outside sectors, in that order.
    fn outside_sectors(&self, i: usize) -> Vec<Doubled> {
        let len = self.polygon.len();
        let s = self.polygon[i];
        let prev = self.polygon[(i + len - 1) % len];
        let next = self.polygon[(i + 1) % len];
        let back = Step::between(s, prev).expect("polygon steps are unit");
        let out = Step::between(s, next).expect("polygon steps are unit");
        let c = s.doubled();
        let mut sectors = Vec::new();
        let mut d = back;
        while d != out {
            let r = d.ccw();
            let (dx, dy) = d.vector();
            let (rx, ry) = r.vector();
            sectors.push(c.add(dx + rx, dy + ry));
            d = r;
        }
        sectors
    }

    /// Free/wired classification of every outside sector of every polygon site.
    pub fn sector_sides(&self) -> HashMap<(Site, Doubled), Side> {
        let mut out = HashMap::new();
        for (i, &s) in self.polygon.iter().enumerate() {
            let sectors = self.outside_sectors(i);
            let k = sectors.len();
            for (j, w) in sectors.into_iter().enumerate() {
                let side = if s == self.a && s == self.b {
                    if j == 0 || j == k - 1 { Side::Free } else { Side::Wired }
                } else if s == self.a {
                    if j == k - 1 { Side::Free } else { Side::Wired }
                } else if s == self.b {
                    if j == 0 { Side::Free } else { Side::Wired }
                } else if self.is_wired(s) {
                    Side::Wired
                } else {
                    Side::Free
                };
                out.insert((s, w), side);
            }
        }
        out
    }
}

/// Serializable description of a Dobrushin domain.
///
/// ```json
/// {"rectangle": {"n": 3, "m": 2, "origin": [0, 0]}, "a": [0, 0], "b": [3, 0],
///  "removed_edges": [[[1, 0], [2, 0]]]}
/// ```
/// Instead of `rectangle`, `sites` may list `[x, y]` pairs; all unit edges
/// between listed sites are included, minus `removed_edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<RectangleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<[i32; 2]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_edges: Vec<[[i32; 2]; 2]>,
    pub a: [i32; 2],
    pub b: [i32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectangleSpec {
    pub n: i32,
    pub m: i32,
    #[serde(default)]
    pub origin: [i32; 2],
}

impl DomainSpec {
    pub fn rectangle(n: i32, m: i32, a: Site, b: Site) -> Self {
        DomainSpec {
            name: None,
            rectangle: Some(RectangleSpec { n, m, origin: [0, 0] }),
            sites: None,
            removed_edges: Vec::new(),
            a: [a.x, a.y],
            b: [b.x, b.y],
        }
    }

    pub fn graph(&self) -> Result<PrimalGraph, LatticeError> {
        let base = match (&self.rectangle, &self.sites) {
            (Some(r), None) => PrimalGraph::rectangle_between(r.origin[0], r.origin[1], r.origin[0] + r.n, r.origin[1] + r.m)?,
            (None, Some(sites)) => PrimalGraph::induced(sites.iter().map(|p| Site::new(p[0], p[1])))?,
            _ => return Err(LatticeError::Spec("exactly one of `rectangle` or `sites` is required".into())),
        };
        if self.removed_edges.is_empty() {
            return Ok(base);
        }
        let removed: Vec<(Site, Site)> = self
            .removed_edges
            .iter()
            .map(|[p, q]| (Site::new(p[0], p[1]), Site::new(q[0], q[1])))
            .collect();
        base.without_edges(&removed)
    }

    pub fn build(&self) -> Result<DobrushinDomain, LatticeError> {
        build_dobrushin(self.graph()?, Site::new(self.a[0], self.a[1]), Site::new(self.b[0], self.b[1]))
    }
}

/// Identifier of a face of the (extended) medial graph. Extra-layer faces are
/// distinct from original faces even when they sit at the same place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Face {
    Black(Site),
    White(Doubled),
    ExtraBlack(Site),
    ExtraWhite(Doubled),
}

impl Face {
    pub fn is_extra(self) -> bool {
        matches!(self, Face::ExtraBlack(_) | Face::ExtraWhite(_))
    }

    pub fn center(self) -> Doubled {
        match self {
            Face::Black(s) | Face::ExtraBlack(s) => s.doubled(),
            Face::White(w) | Face::ExtraWhite(w) => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedialEdge {
    pub from: Doubled,
    pub to: Doubled,
    pub dir: Dir,
    pub black: Site,
    pub white: Doubled,
}

impl MedialEdge {
    /// Midpoint in doubled coordinates times two (so it stays integral).
    pub fn midpoint2(&self) -> (i32, i32) {
        (self.from.x + self.to.x, self.from.y + self.to.y)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VertexInfo {
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
}

impl VertexInfo {
    pub fn degree(&self) -> usize {
        self.incoming.len() + self.outgoing.len()
    }
}

/// Kind of a white face of the medial graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WhiteKind {
    Interior,
    FreeArc,
}

#[derive(Debug, Clone)]
pub struct MedialGraph {
    domain: DobrushinDomain,
    whites: BTreeMap<Doubled, WhiteKind>,
    edges: Vec<MedialEdge>,
    edge_index: HashMap<(Doubled, Doubled), usize>,
    vertices: BTreeMap<Doubled, VertexInfo>,
    sector_sides: HashMap<(Site, Doubled), Side>,
    e_a: usize,
    e_b: usize,
}

/// The medial edge on the boundary of black face `s` that borders white face `w`,
/// oriented counterclockwise around `s`.
fn black_white_edge(s: Site, w: Doubled) -> MedialEdge {
    let c = s.doubled();
    let (dx, dy) = (w.x - c.x, w.y - c.y);
    debug_assert!(dx.abs() == 1 && dy.abs() == 1);
    // Corners of the black diamond adjacent to w, in counterclockwise order.
    let (from, to) = match (dx, dy) {
        (1, 1) => (c.add(1, 0), c.add(0, 1)),
        (-1, 1) => (c.add(0, 1), c.add(-1, 0)),
        (-1, -1) => (c.add(-1, 0), c.add(0, -1)),
        _ => (c.add(0, -1), c.add(1, 0)),
    };
    MedialEdge { from, to, dir: Dir::from_vector(to.x - from.x, to.y - from.y), black: s, white: w }
}

const DIAGONALS: [(i32, i32); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

pub fn build_medial(d: &DobrushinDomain) -> MedialGraph {
    let sides = d.sector_sides();
    let mut whites: BTreeMap<Doubled, WhiteKind> = d
        .interior_cells()
        .iter()
        .map(|&c| (Doubled::from_cell(c), WhiteKind::Interior))
        .collect();
    for (&(_, w), &side) in &sides {
        if side == Side::Free {
            whites.entry(w).or_insert(WhiteKind::FreeArc);
        }
    }
    let mut list = Vec::new();
    for &s in d.graph().sites() {
        let c = s.doubled();
        for (dx, dy) in DIAGONALS {
            let w = c.add(dx, dy);
            let keep = whites.get(&w) == Some(&WhiteKind::Interior) || sides.get(&(s, w)) == Some(&Side::Free);
            if keep {
                list.push(black_white_edge(s, w));
            }
        }
    }
    list.sort_by_key(|e| (e.from, e.to));
    let edge_index: HashMap<(Doubled, Doubled), usize> =
        list.iter().enumerate().map(|(k, e)| ((e.from, e.to), k)).collect();
    let mut vertices: BTreeMap<Doubled, VertexInfo> = BTreeMap::new();
    for (k, e) in list.iter().enumerate() {
        vertices.entry(e.from).or_default().outgoing.push(k);
        vertices.entry(e.to).or_default().incoming.push(k);
    }
    let e_a = marked_edge(d, &sides, d.a(), true);
    let e_b = marked_edge(d, &sides, d.b(), false);
    let e_a = edge_index[&(e_a.from, e_a.to)];
    let e_b = edge_index[&(e_b.from, e_b.to)];
    MedialGraph { domain: d.clone(), whites, edges: list, edge_index, vertices, sector_sides: sides, e_a, e_b }
}

/// `e_a` is the medial edge of the last outside sector of `a` (ending at the
/// midpoint of the first free polygon edge); `e_b` that of the first outside
/// sector of `b` (starting at the midpoint of the last free polygon edge).
fn marked_edge(d: &DobrushinDomain, sides: &HashMap<(Site, Doubled), Side>, s: Site, is_a: bool) -> MedialEdge {
    let i = d.polygon_position(s).expect("marked points lie on the polygon");
    let sectors = d.outside_sectors(i);
    let w = if is_a { *sectors.last().unwrap() } else { sectors[0] };
    debug_assert_eq!(sides.get(&(s, w)), Some(&Side::Free));
    black_white_edge(s, w)
}

impl MedialGraph {
    pub fn domain(&self) -> &DobrushinDomain {
        &self.domain
    }

    pub fn edges(&self) -> &[MedialEdge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &MedialEdge {
        &self.edges[k]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn find_edge(&self, from: Doubled, to: Doubled) -> Option<usize> {
        self.edge_index.get(&(from, to)).copied()
    }

    pub fn edge_between_faces(&self, black: Site, white: Doubled) -> Option<usize> {
        let c = black.doubled();
        if (white.x - c.x).abs() != 1 || (white.y - c.y).abs() != 1 {
            return None;
        }
        let e = black_white_edge(black, white);
        self.find_edge(e.from, e.to)
    }

    pub fn vertices(&self) -> &BTreeMap<Doubled, VertexInfo> {
        &self.vertices
    }

    pub fn vertex(&self, v: Doubled) -> Option<&VertexInfo> {
        self.vertices.get(&v)
    }

    pub fn e_a(&self) -> usize {
        self.e_a
    }

    pub fn e_b(&self) -> usize {
        self.e_b
    }

    pub fn black_faces(&self) -> &[Site] {
        self.domain.graph().sites()
    }

    pub fn white_faces(&self) -> &BTreeMap<Doubled, WhiteKind> {
        &self.whites
    }

    pub fn white_kind(&self, w: Doubled) -> Option<WhiteKind> {
        self.whites.get(&w).copied()
    }

    pub fn free_arc_faces(&self) -> Vec<Doubled> {
        self.whites.iter().filter(|(_, &k)| k == WhiteKind::FreeArc).map(|(&w, _)| w).collect()
    }

    pub fn wired_arc_faces(&self) -> Vec<Site> {
        let mut v = self.domain.wired_arc().to_vec();
        v.sort();
        v.dedup();
        v
    }

    pub fn sector_side(&self, s: Site, w: Doubled) -> Option<Side> {
        self.sector_sides.get(&(s, w)).copied()
    }

    /// All faces of the medial graph (black faces first).
    pub fn faces(&self) -> Vec<Face> {
        self.black_faces()
            .iter()
            .map(|&s| Face::Black(s))
            .chain(self.whites.keys().map(|&w| Face::White(w)))
            .collect()
    }

    /// Degree of a medial vertex in this graph (0 when absent).
    pub fn degree(&self, v: Doubled) -> usize {
        self.vertices.get(&v).map_or(0, VertexInfo::degree)
    }

    /// Is the primal edge through medial vertex `v` a random edge of the
    /// domain, i.e. is `v` a degree-four vertex?
    pub fn is_interior_vertex(&self, v: Doubled) -> bool {
        let (s, t) = v.primal_edge();
        self.degree(v) == 4 && self.domain.graph().edge_between(s, t).is_some()
    }

    /// Incoming/outgoing pairs that pass through `v` as one curve segment.
    /// Where the primal edge is missing (a slit or notch wall), the curves on
    /// the two sides of the wall touch `v` without crossing and are split by
    /// black face.
    pub fn vertex_sides(&self, v: Doubled) -> Vec<(Option<usize>, Option<usize>)> {
        let Some(info) = self.vertices.get(&v) else { return Vec::new() };
        let (s, t) = v.primal_edge();
        if info.degree() <= 2 || self.domain.graph().edge_between(s, t).is_some() {
            return vec![(info.incoming.first().copied(), info.outgoing.first().copied())];
        }
        let mut sides = Vec::new();
        for b in [s, t] {
            let i = info.incoming.iter().copied().find(|&k| self.edges[k].black == b);
            let o = info.outgoing.iter().copied().find(|&k| self.edges[k].black == b);
            if i.is_some() || o.is_some() {
                sides.push((i, o));
            }
        }
        sides
    }

    /// Faces whose four diamond corners are all degree-four vertices.
    pub fn is_inner_face(&self, f: Face) -> bool {
        let c = f.center();
        [(1, 0), (0, 1), (-1, 0), (0, -1)].iter().all(|&(dx, dy)| self.is_interior_vertex(c.add(dx, dy)))
    }

    /// Primal edges whose state never affects the interfaces: edges between
    /// consecutive wired-arc sites along the polygon (their medial vertex has
    /// degree two). Returned as primal edge indices.
    pub fn frozen_primal_edges(&self) -> Vec<usize> {
        let g = self.domain.graph();
        (0..g.num_edges())
            .filter(|&e| {
                let (s, t) = g.edge_sites(e);
                let v = Doubled::new(s.x + t.x, s.y + t.y);
                !self.is_interior_vertex(v)
            })
            .collect()
    }
}

/// The medial graph with one extra layer of white faces along the wired arc
/// and one extra layer of black faces along the free arc.
#[derive(Debug, Clone)]
pub struct ExtendedMedial {
    base: MedialGraph,
    extra_black: BTreeSet<Site>,
    extra_white: BTreeSet<Doubled>,
}

pub fn extend_medial(m: &MedialGraph) -> ExtendedMedial {
    let mut extra_white = BTreeSet::new();
    let u = m.domain().a();
    for (&(s, w), &side) in &m.sector_sides {
        // With a = b the wired arc is one site whose outside faces all lie on
        // the free arc; their copies form the layer.
        if side == Side::Wired || (m.domain().is_degenerate() && s == u) {
            extra_white.insert(w);
        }
    }
    let mut extra_black = BTreeSet::new();
    for (&w, &kind) in &m.whites {
        if kind != WhiteKind::FreeArc {
            continue;
        }
        for (dx, dy) in DIAGONALS {
            let t = w.add(dx, dy).to_site();
            if m.edge_between_faces(t, w).is_none() {
                extra_black.insert(t);
            }
        }
    }
    ExtendedMedial { base: m.clone(), extra_black, extra_white }
}

impl ExtendedMedial {
    pub fn base(&self) -> &MedialGraph {
        &self.base
    }

    pub fn extra_black(&self) -> &BTreeSet<Site> {
        &self.extra_black
    }

    pub fn extra_white(&self) -> &BTreeSet<Doubled> {
        &self.extra_white
    }

    pub fn layer_faces(&self) -> Vec<Face> {
        self.extra_black
            .iter()
            .map(|&s| Face::ExtraBlack(s))
            .chain(self.extra_white.iter().map(|&w| Face::ExtraWhite(w)))
            .collect()
    }
}
