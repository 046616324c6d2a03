use fklab::experiments::*;
use fklab::fit::fit_power_law;
use fklab::sampler::Estimate;

fn budget() -> McBudget {
    McBudget::new(200, 4000)
}

fn below(a: &Estimate, b: &Estimate, sigmas: f64) -> bool {
    a.mean - b.mean < sigmas * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn fkg_and_rotation_symmetry_on_free_squares() {
    for (i, n) in [8, 16].into_iter().enumerate() {
        let s = crossing_stats(n, n, BcKind::Free, &budget(), 21, i as u64).unwrap();
        // P(V ∩ H) ≥ P(V) P(H); the product's error is dominated by the larger term.
        let prod = Estimate {
            mean: s.vertical.mean * s.horizontal.mean,
            std_error: s.vertical.std_error * s.horizontal.mean + s.horizontal.std_error * s.vertical.mean,
            ..s.vertical
        };
        assert!(below(&prod, &s.both, 3.0), "n={n}: {s:?}");
        assert!(combined_sigmas(&s.vertical, &s.horizontal) < 3.0, "n={n}: {s:?}");
    }
}

#[test]
fn boundary_condition_sandwich() {
    let n = 12;
    let free = crossing_stats(n, n, BcKind::Free, &budget(), 22, 0).unwrap().vertical;
    let dob = crossing_stats(n, n, BcKind::Dobrushin, &budget(), 22, 1).unwrap().vertical;
    let wired = crossing_stats(n, n, BcKind::Wired, &budget(), 22, 2).unwrap().vertical;
    assert!(below(&free, &dob, 3.0) && below(&dob, &wired, 3.0), "{free:?} {dob:?} {wired:?}");
    assert!(free.mean < wired.mean);
}

#[test]
fn onepoint_decreases_towards_the_corner() {
    let n = 8;
    let centre = boundary_onepoint(n, 1.0, 0, 0, &budget(), 23, 0).unwrap();
    let corner = boundary_onepoint(n, 1.0, 4, 0, &budget(), 23, 1).unwrap();
    assert!(below(&corner, &centre, 3.0), "{corner:?} vs {centre:?}");
}

#[test]
fn pair_probability_matches_enumeration_and_is_dominated_by_x_equals_y() {
    let same = exact_boundary_pair(1, 1.0, 0, 0).unwrap();
    let apart = exact_boundary_pair(1, 1.0, -1, 1).unwrap();
    assert!(apart <= same + 1e-12, "{apart} > {same}");
    let c = boundary_pair(1, 1.0, -1, 1, &McBudget::new(100, 20_000), 24, 1).unwrap();
    assert!(c.sigmas_from(apart) < 4.0, "{c:?} vs {apart}");
}

#[test]
fn exact_duality_matches_chain_on_both_sides() {
    let (p, d) = exact_duality(2, 2).unwrap();
    let r = duality(2, &McBudget::new(100, 20_000), 25, 0).unwrap();
    assert!(r.primal.sigmas_from(p) < 4.0 && r.dual.sigmas_from(d) < 4.0, "{r:?} vs {p} {d}");
}

#[test]
fn fit_examples() {
    let f = fit_power_law(&[(1.0, 1.0, 0.0), (2.0, 2f64.powf(-0.5), 0.0), (4.0, 0.5, 0.0)]).unwrap();
    assert!((f.exponent + 0.5).abs() < 1e-12);
    let f = fit_power_law(&[(1.0, 1.0, 0.0), (2.0, 1.0, 0.0), (4.0, 1.0, 0.0)]).unwrap();
    assert!(f.exponent.abs() < 1e-12);
    let pts: Vec<_> = [8.0, 16.0, 32.0, 64.0, 128.0].iter().map(|&n: &f64| (n, n.powf(-0.125), 0.0)).collect();
    assert!((fit_power_law(&pts).unwrap().exponent + 0.125).abs() < 1e-12);
}

#[test]
fn doubling_budget_shrinks_fit_error() {
    let mut s = ExperimentSpec::new(ExperimentKind::OneArmHalfPlane);
    s.sizes = vec![8, 16, 32];
    s.budget = McBudget::new(100, 2000);
    let a = run_experiment(&s, 26).unwrap().fit.unwrap();
    s.budget = McBudget::new(100, 8000);
    let b = run_experiment(&s, 26).unwrap().fit.unwrap();
    let ratio = b.stderr / a.stderr;
    // Quadrupling should halve it; allow for noise in the error estimates.
    assert!(ratio > 0.3 && ratio < 0.75, "{ratio}");
}

#[test]
fn every_kind_runs_from_json() {
    for kind in [
        "crossing",
        "duality",
        "boundary_onepoint",
        "boundary_pair",
        "circuit",
        "one_arm_half_plane",
        "one_arm_plane",
        "two_point",
        "crossing_counts",
    ] {
        let json = format!(
            r#"{{"kind": "{kind}", "sizes": [8, 10, 12], "budget": {{"burn_in": 5, "sweeps": 200}}, "min_r2": 0.0, "radius": 1,
                "distances": [1, 2, 4], "box_side": 16, "window": 2}}"#
        );
        let spec: ExperimentSpec = serde_json::from_str(&json).unwrap();
        let out = run_experiment(&spec, 1).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert!(!out.rows.is_empty(), "{kind}");
        assert!(out.rows.iter().all(|r| r.estimate >= 0.0 && r.estimate <= 1.0), "{kind}");
    }
}
