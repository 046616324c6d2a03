//! `fklab`: verification suites, samplers and experiments driven by JSON specs.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or spec error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fklab::experiments::{run_experiment, CellRow, ExperimentSpec};
use fklab::fk::enumerate_measure;
use fklab::harmonic::{hm_scaling_probe, ProbeFamily, ProbeResult, DEFAULT_LAYER_RATE};
use fklab::io::{write_json, write_rows, Manifest, SCHEMA_VERSION};
use fklab::lattice::DomainSpec;
use fklab::sampler::{chain_rng, horizontal_sides, run_chain, validate_with_rng, ChainSpec, Estimate, Observable};
use fklab::suite::{check_fixture, fixtures, FixtureReport};
use fklab::{Boundary, FkParams};

#[derive(Parser)]
#[command(name = "fklab", version, about = "Exact and Monte Carlo laboratory for critical FK Ising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact identities of the fermionic observable on small Dobrushin domains.
    VerifyObservable(Common),
    /// Modified Laplacians, comparison principle and scaling probes.
    VerifyHarmonic(Common),
    /// Run a Markov chain on a domain; validate against enumeration when small.
    Sample(Common),
    /// Run a Monte Carlo experiment.
    Experiment(Common),
    /// Exact enumeration of a small domain.
    Enumerate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON spec file (optional for the verify commands).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "fklab-out")]
    out: PathBuf,
    /// Master seed; overrides any seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

enum Failure {
    Usage(String),
    Verification(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_probe_tolerance() -> f64 {
    0.2
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteSpec {
    #[serde(default = "schema_version")]
    schema_version: u32,
    /// Defaults to the bundled fixtures.
    #[serde(default)]
    fixtures: Option<Vec<DomainSpec>>,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default)]
    layer_rate: Option<f64>,
    /// Only used by verify-harmonic.
    #[serde(default)]
    probes: Vec<ProbeSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeSpec {
    family: ProbeFamily,
    sizes: Vec<i32>,
    #[serde(default = "default_probe_tolerance")]
    tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BcChoice {
    Free,
    Wired,
    Dobrushin,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleSpec {
    #[serde(default = "schema_version")]
    schema_version: u32,
    domain: DomainSpec,
    bc: BcChoice,
    chain: ChainSpec,
    #[serde(default = "default_sigmas")]
    tolerance_sigmas: f64,
}

fn default_sigmas() -> f64 {
    4.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnumerateSpec {
    #[serde(default = "schema_version")]
    schema_version: u32,
    domain: DomainSpec,
    bc: BcChoice,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    let (name, common) = match &cmd {
        Command::VerifyObservable(c) => ("verify-observable", c),
        Command::VerifyHarmonic(c) => ("verify-harmonic", c),
        Command::Sample(c) => ("sample", c),
        Command::Experiment(c) => ("experiment", c),
        Command::Enumerate(c) => ("enumerate", c),
    };
    if common.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global()?;
    let bytes = match &common.spec {
        Some(p) => std::fs::read(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None if name.starts_with("verify") => Vec::new(),
        None => return Err(Failure::Usage(format!("{name} needs --spec"))),
    };
    std::fs::create_dir_all(&common.out)?;
    match cmd {
        Command::VerifyObservable(c) => verify(&c, &bytes, false),
        Command::VerifyHarmonic(c) => verify(&c, &bytes, true),
        Command::Sample(c) => sample(&c, &bytes),
        Command::Experiment(c) => experiment(&c, &bytes),
        Command::Enumerate(c) => enumerate(&c, &bytes),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, Failure> {
    serde_json::from_slice(bytes).map_err(|e| Failure::Usage(format!("bad spec: {e}")))
}

fn check_schema(v: u32) -> Result<(), Failure> {
    if v != SCHEMA_VERSION {
        return Err(Failure::Usage(format!("unsupported schema_version {v}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct FixtureOutcome {
    report: FixtureReport,
    failures: Vec<&'static str>,
}

#[derive(Serialize)]
struct ProbeOutcome {
    result: ProbeResult,
    expected: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyOutput {
    tolerance: f64,
    layer_rate: f64,
    fixtures: Vec<FixtureOutcome>,
    probes: Vec<ProbeOutcome>,
    pass: bool,
}

fn verify(c: &Common, bytes: &[u8], harmonic: bool) -> Result<(), Failure> {
    let spec: SuiteSpec = if bytes.is_empty() { parse(b"{}")? } else { parse(bytes)? };
    check_schema(spec.schema_version)?;
    let layer_rate = spec.layer_rate.unwrap_or(DEFAULT_LAYER_RATE);
    let command = if harmonic { "verify-harmonic" } else { "verify-observable" };
    let mut failed = Vec::new();
    let mut outcomes = Vec::new();
    for f in spec.fixtures.unwrap_or_else(fixtures) {
        let report = check_fixture(&f, layer_rate)?;
        let failures = if harmonic { report.harmonic_failures(spec.tolerance) } else { report.observable_failures(spec.tolerance) };
        let label = if failures.is_empty() { "ok".to_string() } else { format!("FAIL {}", failures.join(", ")) };
        println!("{:<24} {:>3} edges  {label}", report.name, report.edges);
        if !failures.is_empty() {
            failed.push(report.name.clone());
        }
        outcomes.push(FixtureOutcome { report, failures });
    }
    let mut probes = Vec::new();
    if harmonic {
        for p in &spec.probes {
            let result = hm_scaling_probe(p.family, &p.sizes, layer_rate)?;
            let expected = p.family.expected_exponent();
            let max_res = result.residuals.iter().copied().fold(0.0, f64::max);
            let pass = (result.slope - expected).abs() <= p.tolerance && max_res < spec.tolerance;
            println!("probe {:<18} slope {:+.4} (expected {expected:+}) residual {max_res:.1e}  {}", result.family, result.slope, if pass { "ok" } else { "FAIL" });
            if !pass {
                failed.push(result.family.clone());
            }
            probes.push(ProbeOutcome { result, expected, tolerance: p.tolerance, pass });
        }
    }
    let manifest = Manifest::new(command, bytes, c.seed.unwrap_or(0));
    let out = VerifyOutput { tolerance: spec.tolerance, layer_rate, fixtures: outcomes, probes, pass: failed.is_empty() };
    write_json(&c.out.join(format!("{}.json", command.replace('-', "_"))), &manifest, &out)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join(", ")))
    }
}

fn boundary(d: &DomainSpec, bc: BcChoice) -> Result<(fklab::PrimalGraph, Boundary), Failure> {
    Ok(match bc {
        BcChoice::Free => (d.graph()?, Boundary::free()),
        BcChoice::Wired => {
            let g = d.graph()?;
            let b = Boundary::wired(&g);
            (g, b)
        }
        BcChoice::Dobrushin => {
            let dom = d.build()?;
            (dom.graph().clone(), Boundary::dobrushin(&dom))
        }
    })
}

fn bc_name(bc: BcChoice) -> &'static str {
    match bc {
        BcChoice::Free => "free",
        BcChoice::Wired => "wired",
        BcChoice::Dobrushin => "dobrushin",
    }
}

fn row(kind: &str, n: i64, bc: BcChoice, e: &Estimate, seed: u64) -> CellRow {
    CellRow {
        kind: kind.into(),
        n,
        m: 0,
        bc: bc_name(bc).into(),
        estimate: e.mean,
        se: e.std_error,
        n_samples: e.n_samples,
        seed,
    }
}

fn sample(c: &Common, bytes: &[u8]) -> Result<(), Failure> {
    let mut spec: SampleSpec = parse(bytes)?;
    check_schema(spec.schema_version)?;
    if let Some(s) = c.seed {
        spec.chain.seed = s;
    }
    let (g, bc) = boundary(&spec.domain, spec.bc)?;
    let manifest = Manifest::new("sample", bytes, spec.chain.seed);
    if g.num_edges() > ENUMERABLE_EDGES {
        return sample_only(c, &spec, &g, &bc, &manifest);
    }
    let report = validate_with_rng(&g, &bc, FkParams::critical_ising(), &spec.chain, spec.tolerance_sigmas, chain_rng(spec.chain.seed, 0))?;
    let rows: Vec<CellRow> = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = if r.quantity.starts_with("edge") { "edge_marginal" } else { "vertical_crossing" };
            row(kind, if kind == "edge_marginal" { i as i64 } else { 0 }, spec.bc, &r.estimate, spec.chain.seed)
        })
        .collect();
    write_rows(&c.out.join("sample.csv"), &manifest, &rows)?;
    write_json(&c.out.join("sample.json"), &manifest, &report)?;
    for r in &report.rows {
        println!("{:<18} exact {:.6} estimate {:.6} ± {:.6} ({:.2} SE)", r.quantity, r.exact, r.estimate.mean, r.estimate.std_error, r.sigmas);
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verification(format!("sample disagrees with enumeration beyond {} SE", spec.tolerance_sigmas)))
    }
}

/// Largest domain the sample command validates against exact enumeration.
const ENUMERABLE_EDGES: usize = 24;

fn sample_only(c: &Common, spec: &SampleSpec, g: &fklab::PrimalGraph, bc: &Boundary, manifest: &Manifest) -> Result<(), Failure> {
    let (bottom, top) = horizontal_sides(g);
    let crossing = |cfg: &fklab::Config| f64::from(u8::from(fklab::fk::sets_connected(g, cfg, &bottom, &top)));
    let edge_fns: Vec<Box<dyn Fn(&fklab::Config) -> f64 + Sync>> = (0..g.num_edges())
        .map(|k| Box::new(move |cfg: &fklab::Config| f64::from(u8::from(cfg.get(k)))) as Box<dyn Fn(&fklab::Config) -> f64 + Sync>)
        .collect();
    let mut obs: Vec<Observable<'_>> = edge_fns.iter().map(|f| f.as_ref() as Observable<'_>).collect();
    obs.push(&crossing);
    let est = run_chain(g, bc, FkParams::critical_ising(), &spec.chain, &obs)?;
    let e = g.num_edges();
    let mut rows: Vec<CellRow> = (0..e).map(|k| row("edge_marginal", k as i64, spec.bc, &est[k], spec.chain.seed)).collect();
    rows.push(row("vertical_crossing", 0, spec.bc, &est[e], spec.chain.seed));
    write_rows(&c.out.join("sample.csv"), manifest, &rows)?;
    println!("vertical_crossing {:.6} ± {:.6} over {} samples", est[e].mean, est[e].std_error, est[e].n_samples);
    Ok(())
}

fn experiment(c: &Common, bytes: &[u8]) -> Result<(), Failure> {
    let spec: ExperimentSpec = parse(bytes)?;
    let seed = c.seed.or(spec.seed).unwrap_or(0);
    let out = run_experiment(&spec, seed)?;
    let manifest = Manifest::new("experiment", bytes, seed);
    write_rows(&c.out.join("experiment.csv"), &manifest, &out.rows)?;
    write_json(&c.out.join("experiment.json"), &manifest, &out)?;
    for r in &out.rows {
        println!("{:<24} n={:<4} m={:<4} {:<10} {:.6} ± {:.6}", r.kind, r.n, r.m, r.bc, r.estimate, r.se);
    }
    if let Some(f) = &out.fit {
        println!("fit exponent {:+.4} ± {:.4} (r² {:.4}, sizes {}..{})", f.exponent, f.stderr, f.r_squared, f.window.0, f.window.1);
    }
    Ok(())
}

#[derive(Serialize)]
struct EnumerateOutput {
    edges: usize,
    log_z: f64,
    rows: Vec<CellRow>,
}

fn enumerate(c: &Common, bytes: &[u8]) -> Result<(), Failure> {
    let spec: EnumerateSpec = parse(bytes)?;
    check_schema(spec.schema_version)?;
    let (g, bc) = boundary(&spec.domain, spec.bc)?;
    let m = enumerate_measure(&g, &bc, FkParams::critical_ising())?;
    let exact = |x: f64| Estimate { mean: x, std_error: 0.0, n_samples: 0, autocorr_time_estimate: 0.0 };
    let mut rows: Vec<CellRow> = (0..g.num_edges()).map(|e| row("edge_marginal", e as i64, spec.bc, &exact(m.edge_marginal(e)), 0)).collect();
    let (bottom, top) = horizontal_sides(&g);
    let p = m.event_probability(|cfg| fklab::fk::sets_connected(&g, cfg, &bottom, &top));
    rows.push(row("vertical_crossing", 0, spec.bc, &exact(p), 0));
    let manifest = Manifest::new("enumerate", bytes, 0);
    write_rows(&c.out.join("enumerate.csv"), &manifest, &rows)?;
    write_json(&c.out.join("enumerate.json"), &manifest, &EnumerateOutput { edges: g.num_edges(), log_z: m.log_z(), rows })?;
    println!("{} edges, log Z = {:.12}, vertical crossing {:.12}", g.num_edges(), m.log_z(), p);
    Ok(())
}
