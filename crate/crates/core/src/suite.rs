//! Bundled small Dobrushin domains and the exact identity checks run on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fk::{enumerate_measure, Boundary, Config, ExactMeasure, FkParams};
use crate::harmonic::{boundary_subharmonicity_check, check_comparison_with, harmonic_measures, HarmonicError};
use crate::lattice::{build_medial, extend_medial, DomainSpec, MedialGraph, Site};
use crate::loops::{LoopError, Tracer};
use crate::observable::{
    build_h, check_argument_lines, check_boundary_interpretation_with, check_degree_two, check_harmonicity,
    check_local_relation, check_orthogonal_squares, exact_observable_with, ObservableError,
};

fn rect(name: &str, n: i32, m: i32, a: (i32, i32), b: (i32, i32)) -> DomainSpec {
    let mut s = DomainSpec::rectangle(n, m, Site::new(a.0, a.1), Site::new(b.0, b.1));
    s.name = Some(name.into());
    s
}

/// The bundled fixtures: at most 24 edges each, including a degenerate
/// (a = b) domain and a domain whose free and wired arcs face each other
/// across a notch.
pub fn fixtures() -> Vec<DomainSpec> {
    let mut notch = rect("notch", 3, 3, (1, 1), (1, 0));
    notch.removed_edges = vec![[[1, 0], [2, 0]], [[1, 1], [2, 1]]];
    vec![
        rect("unit_square", 1, 1, (0, 0), (1, 0)),
        rect("rect_2x1", 2, 1, (0, 0), (2, 0)),
        rect("rect_2x2", 2, 2, (0, 0), (2, 2)),
        rect("rect_3x2", 3, 2, (0, 0), (3, 2)),
        rect("rect_3x2_degenerate", 3, 2, (1, 2), (1, 2)),
        rect("rect_3x3", 3, 3, (0, 0), (3, 0)),
        notch,
    ]
}

/// Max relative spread of P(ω)/((√2)^{#loops} · p^{o_f}(1-p)^{c_f}) over
/// configurations, where o_f, c_f count open and closed frozen edges (wired
/// boundary edges that never touch an interface). Constancy of this ratio is
/// the statement that the law of the interface pattern is proportional to
/// (√2)^{#loops}, with the frozen edges summed out.
pub fn loop_weight_law(m: &MedialGraph, measure: &ExactMeasure) -> Result<f64, ObservableError> {
    let g = m.domain().graph();
    let p = FkParams::critical_ising().p;
    let frozen: u64 = m.frozen_primal_edges().iter().fold(0, |acc, &e| acc | 1 << e);
    let n_frozen = frozen.count_ones() as i32;
    let tracer = Tracer::new(m);
    let ln_sqrt2 = 0.5 * 2f64.ln();
    let probs = measure.probabilities();
    let shard = probs.len().div_ceil(64).max(1);
    let parts: Vec<Result<(f64, f64), LoopError>> = probs
        .par_chunks(shard)
        .enumerate()
        .map(|(s, chunk)| {
            let mut c = Config::closed(g.num_edges());
            let mut used = Vec::new();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (i, &prob) in chunk.iter().enumerate() {
                let mask = (s * shard + i) as u64;
                c.set_mask(mask);
                let loops = tracer.count_loops(&c, &mut used)?;
                let open_f = (mask & frozen).count_ones() as i32;
                let log_w = loops as f64 * ln_sqrt2 + open_f as f64 * p.ln() + (n_frozen - open_f) as f64 * (1.0 - p).ln();
                let r = prob.ln() - log_w;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            Ok((lo, hi))
        })
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for part in parts {
        let (a, b) = part?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(1.0 - (lo - hi).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureReport {
    pub name: String,
    pub edges: usize,
    pub local_relation: f64,
    pub argument_lines: f64,
    pub orthogonal_squares: f64,
    pub degree_two: f64,
    pub boundary_interpretation: f64,
    pub f_at_ea: f64,
    pub h_residual: f64,
    /// max |H - 1| on wired-arc blacks and |H| on free-arc whites.
    pub h_boundary: f64,
    /// How far H strays outside [0, 1].
    pub h_range: f64,
    pub min_black_laplacian: f64,
    pub max_white_laplacian: f64,
    pub modified_black_laplacian: f64,
    pub modified_white_laplacian: f64,
    pub comparison_lower_margin: f64,
    pub comparison_upper_margin: f64,
    pub comparison_pass: bool,
    pub loop_law: f64,
}

impl FixtureReport {
    /// Every identity within `tol`.
    pub fn failures(&self, tol: f64) -> Vec<&'static str> {
        let mut bad = Vec::new();
        let checks = [
            ("local relation", self.local_relation <= tol),
            ("argument lines", self.argument_lines <= tol),
            ("orthogonal squares", self.orthogonal_squares <= tol),
            ("degree-two identity", self.degree_two <= tol),
            ("boundary interpretation", self.boundary_interpretation <= tol),
            ("F(e_a) = 1", (self.f_at_ea - 1.0).abs() <= tol),
            ("H well defined", self.h_residual <= tol),
            ("H boundary values", self.h_boundary <= tol),
            ("H in [0,1]", self.h_range <= tol),
            ("black subharmonicity", self.min_black_laplacian >= -tol),
            ("white superharmonicity", self.max_white_laplacian <= tol),
            ("modified black Laplacian", self.modified_black_laplacian >= -tol),
            ("modified white Laplacian", self.modified_white_laplacian <= tol),
            ("comparison principle", self.comparison_pass),
            ("loop-weight law", self.loop_law <= tol),
        ];
        for (name, ok) in checks {
            if !ok {
                bad.push(name);
            }
        }
        bad
    }

    /// Failures among the identities of the observable itself.
    pub fn observable_failures(&self, tol: f64) -> Vec<&'static str> {
        self.failures(tol).into_iter().filter(|n| !HARMONIC_CHECKS.contains(n)).collect()
    }

    /// Failures among the comparisons with harmonic measures.
    pub fn harmonic_failures(&self, tol: f64) -> Vec<&'static str> {
        self.failures(tol).into_iter().filter(|n| HARMONIC_CHECKS.contains(n)).collect()
    }
}

pub const HARMONIC_CHECKS: [&str; 3] = ["modified black Laplacian", "modified white Laplacian", "comparison principle"];

pub fn check_fixture(spec: &DomainSpec, layer_rate: f64) -> Result<FixtureReport, HarmonicError> {
    let d = spec.build()?;
    let m = build_medial(&d);
    let measure = enumerate_measure(d.graph(), &Boundary::dobrushin(&d), FkParams::critical_ising()).map_err(ObservableError::from)?;
    let obs = exact_observable_with(&m, &measure)?;
    let h = build_h(&obs.values, &m)?;
    let harm = check_harmonicity(&h, &m);
    let ext = extend_medial(&m);
    let modified = boundary_subharmonicity_check(&h, &ext)?;
    let (hb, hw) = harmonic_measures(&ext, layer_rate)?;
    let f_abs: Vec<f64> = obs.values.iter().map(|z| z.norm()).collect();
    let cmp = check_comparison_with(&m, &f_abs, &hb, &hw, layer_rate, 1e-10);
    let mut h_boundary: f64 = 0.0;
    for s in m.wired_arc_faces() {
        h_boundary = h_boundary.max((h.black(s).unwrap() - 1.0).abs());
    }
    for w in m.free_arc_faces() {
        h_boundary = h_boundary.max(h.white(w).unwrap().abs());
    }
    let h_range = h.values.values().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
    Ok(FixtureReport {
        name: spec.name.clone().unwrap_or_default(),
        edges: d.graph().num_edges(),
        local_relation: check_local_relation(&obs.values, &m),
        argument_lines: check_argument_lines(&obs.values, &m),
        orthogonal_squares: check_orthogonal_squares(&obs.values, &m),
        degree_two: check_degree_two(&obs, &m),
        boundary_interpretation: check_boundary_interpretation_with(&obs, &m, &measure),
        f_at_ea: obs.values[m.e_a()].re,
        h_residual: h.residual,
        h_boundary,
        h_range,
        min_black_laplacian: if harm.black_faces_checked > 0 { harm.min_black_laplacian } else { 0.0 },
        max_white_laplacian: if harm.white_faces_checked > 0 { harm.max_white_laplacian } else { 0.0 },
        modified_black_laplacian: if modified.black_faces > 0 { modified.min_black } else { 0.0 },
        modified_white_laplacian: if modified.white_faces > 0 { modified.max_white } else { 0.0 },
        comparison_lower_margin: cmp.worst_lower_margin,
        comparison_upper_margin: cmp.worst_upper_margin,
        comparison_pass: cmp.pass,
        loop_law: loop_weight_law(&m, &measure)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fk::Config;
    use crate::harmonic::DEFAULT_LAYER_RATE;
    use crate::lattice::{Doubled, Face, WhiteKind};
    use crate::loops::trace_interfaces;

    fn fixture(name: &str) -> DomainSpec {
        fixtures().into_iter().find(|f| f.name.as_deref() == Some(name)).unwrap()
    }

    #[test]
    fn fixture_set_shape() {
        let fx = fixtures();
        assert!(fx.len() >= 6);
        for f in &fx {
            let d = f.build().unwrap();
            assert!(d.graph().num_edges() <= 24, "{:?}", f.name);
        }
        assert!(fx.iter().any(|f| f.a == f.b));
    }

    #[test]
    fn small_fixtures_pass() {
        for name in ["unit_square", "rect_2x1", "rect_2x2"] {
            let r = check_fixture(&fixture(name), DEFAULT_LAYER_RATE).unwrap();
            assert!(r.failures(1e-10).is_empty(), "{name}: {:?}", r.failures(1e-10));
        }
    }

    #[test]
    fn notch_layer_faces_are_distinct() {
        let d = fixture("notch").build().unwrap();
        let m = build_medial(&d);
        let ext = extend_medial(&m);
        // The notch cell is a free-arc white for the sites right of the wall
        // and a layer white for the wired sites left of it.
        let w = Doubled::new(3, 1);
        assert_eq!(m.white_kind(w), Some(WhiteKind::FreeArc));
        assert!(ext.extra_white().contains(&w));
        assert!(ext.layer_faces().contains(&Face::ExtraWhite(w)));
        assert_ne!(Face::ExtraWhite(w), Face::White(w));
        // The removed edge across the wall leaves a vertex touched on both sides.
        let v = Doubled::new(3, 2);
        assert!(!m.is_interior_vertex(v));
        assert_eq!(m.vertex_sides(v).len(), 2);
    }

    #[test]
    fn notch_interfaces_cover_every_edge() {
        let d = fixture("notch").build().unwrap();
        let m = build_medial(&d);
        let e = d.graph().num_edges();
        for mask in [0u64, (1 << e) - 1, 0x2a_5a5a] {
            let mut c = Config::closed(e);
            c.set_mask(mask & ((1 << e) - 1));
            let set = trace_interfaces(&c, &m).unwrap();
            let covered = set.path.len() + set.loops.iter().map(Vec::len).sum::<usize>();
            assert_eq!(covered, m.num_edges());
        }
    }

    #[test]
    fn degenerate_fixture_misses_only_the_lower_comparison() {
        let r = check_fixture(&fixture("rect_3x2_degenerate"), DEFAULT_LAYER_RATE).unwrap();
        assert_eq!(r.failures(1e-10), vec!["modified white Laplacian", "comparison principle"]);
        assert!(r.observable_failures(1e-10).is_empty());
        assert!(r.comparison_upper_margin >= -1e-10);
        assert!(r.comparison_lower_margin < 0.0);
    }
}
