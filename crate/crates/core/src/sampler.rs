//! Markov chain samplers for FK measures: single-edge heat bath (any q ≥ 1)
//! and Swendsen–Wang type cluster moves through the Edwards–Sokal coupling
//! (q = 2), plus the estimation layer.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fk::{enumerate_measure, sets_connected, Boundary, Config, FkError, FkParams};
use crate::lattice::PrimalGraph;
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("cluster dynamics needs q = 2, got q = {0}")]
    QUnsupported(f64),
    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Fk(#[from] FkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    HeatBath,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub burn_in_sweeps: usize,
    pub sweeps: usize,
    #[serde(default = "one")]
    pub thin: usize,
    pub seed: u64,
    #[serde(default = "default_dynamics")]
    pub dynamics: Dynamics,
    #[serde(default = "default_init")]
    pub init: InitialState,
}

fn one() -> usize {
    1
}

fn default_dynamics() -> Dynamics {
    Dynamics::Cluster
}

fn default_init() -> InitialState {
    InitialState::Closed
}

impl ChainSpec {
    pub fn new(burn_in_sweeps: usize, sweeps: usize, seed: u64, dynamics: Dynamics) -> Self {
        ChainSpec { burn_in_sweeps, sweeps, thin: 1, seed, dynamics, init: InitialState::Closed }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        if self.sweeps == 0 || self.thin == 0 {
            return Err(SamplerError::InvalidSpec("sweeps and thin must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub autocorr_time_estimate: f64,
}

impl Estimate {
    /// Deviation from `value` in units of the standard error (0 if both agree exactly).
    pub fn sigmas_from(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    /// Combine independent estimates of the same quantity with equal weights.
    pub fn pool(parts: &[Estimate]) -> Estimate {
        let k = parts.len() as f64;
        let mean = parts.iter().map(|e| e.mean).sum::<f64>() / k;
        let se = parts.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt() / k;
        Estimate {
            mean,
            std_error: se,
            n_samples: parts.iter().map(|e| e.n_samples).sum(),
            autocorr_time_estimate: parts.iter().map(|e| e.autocorr_time_estimate).sum::<f64>() / k,
        }
    }
}

/// Random stream number `index` of the master seed. ChaCha streams are
/// independent counters, so chains do not depend on scheduling.
pub fn chain_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub const BATCHES: usize = 32;

/// Batch-means estimate of the mean of a correlated series.
pub fn batch_means(xs: &[f64]) -> Estimate {
    let n = xs.len();
    assert!(n > 0, "no samples");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let (nb, size) = if n >= 2 * BATCHES { (BATCHES, n / BATCHES) } else { (n, 1) };
    let used = nb * size;
    let bmeans: Vec<f64> = xs[n - used..].chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let bm = bmeans.iter().sum::<f64>() / nb as f64;
    let bvar = if nb > 1 { bmeans.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>() / (nb as f64 - 1.0) } else { 0.0 };
    let var_mean = bvar / nb as f64;
    let tau = if var > 0.0 { (n as f64 * var_mean / (2.0 * var)).max(0.5) } else { 0.5 };
    Estimate { mean, std_error: var_mean.sqrt(), n_samples: n, autocorr_time_estimate: tau }
}

/// Burn-in rule: ten integrated autocorrelation times, at least 100 sweeps.
pub fn default_burn_in(tau: f64) -> usize {
    ((10.0 * tau).ceil() as usize).max(100)
}

pub struct Sampler<'g, R: RngCore = ChaCha8Rng> {
    g: &'g PrimalGraph,
    bc: Boundary,
    params: FkParams,
    config: Config,
    rng: R,
    ghost: Vec<Option<usize>>,
    // BFS scratch
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<usize>,
    uf: UnionFind,
    spins: Vec<i8>,
}

impl<'g> Sampler<'g, ChaCha8Rng> {
    pub fn new(g: &'g PrimalGraph, bc: &Boundary, params: FkParams, seed: u64) -> Self {
        Self::with_rng(g, bc, params, chain_rng(seed, 0))
    }
}

impl<'g, R: RngCore> Sampler<'g, R> {
    pub fn with_rng(g: &'g PrimalGraph, bc: &Boundary, params: FkParams, rng: R) -> Self {
        let n = g.num_sites() + bc.blocks().len();
        Sampler {
            g,
            bc: bc.clone(),
            params,
            config: Config::closed(g.num_edges()),
            rng,
            ghost: bc.ghost_of(g.num_sites()),
            stamp: vec![0; n],
            epoch: 0,
            queue: Vec::with_capacity(n),
            uf: UnionFind::new(n),
            spins: vec![0; n],
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn set_config(&mut self, c: Config) {
        assert_eq!(c.len(), self.g.num_edges());
        self.config = c;
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }

    fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Are the endpoints of `edge` joined in ω ∪ ξ without using `edge`?
    pub fn connected_off(&mut self, edge: usize) -> bool {
        let (a, b) = self.g.edges()[edge];
        let n = self.g.num_sites();
        if let (Some(ga), Some(gb)) = (self.ghost[a], self.ghost[b]) {
            if ga == gb {
                return true;
            }
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let ep = self.epoch;
        self.queue.clear();
        self.queue.push(a);
        self.stamp[a] = ep;
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            if v >= n {
                for &u in &self.bc.blocks()[v - n] {
                    if u == b {
                        return true;
                    }
                    if self.stamp[u] != ep {
                        self.stamp[u] = ep;
                        self.queue.push(u);
                    }
                }
                continue;
            }
            if let Some(gv) = self.ghost[v] {
                if self.stamp[gv] != ep {
                    self.stamp[gv] = ep;
                    self.queue.push(gv);
                }
            }
            for &(u, e) in self.g.neighbors(v) {
                if e == edge || !self.config.get(e) {
                    continue;
                }
                if u == b {
                    return true;
                }
                if self.stamp[u] != ep {
                    self.stamp[u] = ep;
                    self.queue.push(u);
                }
            }
        }
        false
    }

    /// Resample one edge from its conditional law given the rest.
    pub fn heat_bath_step(&mut self, edge: usize) {
        let prob = if self.params.q == 1.0 || self.connected_off(edge) { self.params.p } else { self.params.p_bridge() };
        let open = self.uniform() < prob;
        self.config.set(edge, open);
    }

    pub fn heat_bath_sweep(&mut self) {
        for e in 0..self.g.num_edges() {
            self.heat_bath_step(e);
        }
    }

    /// One Edwards–Sokal sweep: random ± spin per cluster of ω ∪ ξ, then every
    /// edge with agreeing endpoints opens with probability p.
    pub fn cluster_step(&mut self) -> Result<(), SamplerError> {
        if self.params.q != 2.0 {
            return Err(SamplerError::QUnsupported(self.params.q));
        }
        let n = self.g.num_sites();
        self.uf.reset();
        self.bc.merge_into(&mut self.uf, n);
        for (e, &(a, b)) in self.g.edges().iter().enumerate() {
            if self.config.get(e) {
                self.uf.union(a, b);
            }
        }
        self.spins.fill(0);
        for v in 0..n {
            let r = self.uf.find(v);
            if self.spins[r] == 0 {
                self.spins[r] = if self.rng.gen::<bool>() { 1 } else { -1 };
            }
            self.spins[v] = self.spins[r];
        }
        let p = self.params.p;
        for e in 0..self.g.num_edges() {
            let (a, b) = self.g.edges()[e];
            let open = self.spins[a] == self.spins[b] && self.uniform() < p;
            self.config.set(e, open);
        }
        Ok(())
    }

    pub fn sweep(&mut self, dynamics: Dynamics) -> Result<(), SamplerError> {
        match dynamics {
            Dynamics::HeatBath => {
                self.heat_bath_sweep();
                Ok(())
            }
            Dynamics::Cluster => self.cluster_step(),
        }
    }
}

pub type Observable<'a> = &'a (dyn Fn(&Config) -> f64 + Sync);

/// Run one chain and return raw measurement series, one per observable.
pub fn sample_series<R: RngCore>(
    sampler: &mut Sampler<'_, R>,
    spec: &ChainSpec,
    observables: &[Observable<'_>],
    mut on_sample: impl FnMut(usize, &[f64]),
) -> Result<Vec<Vec<f64>>, SamplerError> {
    spec.validate()?;
    let e = sampler.g.num_edges();
    sampler.set_config(match spec.init {
        InitialState::Closed => Config::closed(e),
        InitialState::Open => Config::open(e),
    });
    for _ in 0..spec.burn_in_sweeps {
        sampler.sweep(spec.dynamics)?;
    }
    let mut series = vec![Vec::with_capacity(spec.sweeps / spec.thin); observables.len()];
    let mut row = vec![0.0; observables.len()];
    for s in 1..=spec.sweeps {
        sampler.sweep(spec.dynamics)?;
        if s % spec.thin == 0 {
            for (k, f) in observables.iter().enumerate() {
                row[k] = f(sampler.config());
                series[k].push(row[k]);
            }
            on_sample(s, &row);
        }
    }
    Ok(series)
}

pub fn run_chain(
    g: &PrimalGraph,
    bc: &Boundary,
    params: FkParams,
    spec: &ChainSpec,
    observables: &[Observable<'_>],
) -> Result<Vec<Estimate>, SamplerError> {
    let mut s = Sampler::new(g, bc, params, spec.seed);
    let series = sample_series(&mut s, spec, observables, |_, _| {})?;
    if series.first().is_some_and(|x| x.is_empty()) {
        return Err(SamplerError::InvalidSpec("thin exceeds sweeps".into()));
    }
    Ok(series.iter().map(|x| batch_means(x)).collect())
}

/// `chains` independent chains on streams 0..chains of `spec.seed`, run in
/// parallel and pooled in stream order.
pub fn run_chains(
    g: &PrimalGraph,
    bc: &Boundary,
    params: FkParams,
    spec: &ChainSpec,
    chains: usize,
    observables: &[Observable<'_>],
) -> Result<Vec<Estimate>, SamplerError> {
    let per: Vec<Result<Vec<Estimate>, SamplerError>> = (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut s = Sampler::with_rng(g, bc, params, chain_rng(spec.seed, c));
            let series = sample_series(&mut s, spec, observables, |_, _| {})?;
            Ok(series.iter().map(|x| batch_means(x)).collect())
        })
        .collect();
    let per = per.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((0..observables.len())
        .map(|k| Estimate::pool(&per.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect())
}

/// Pilot run measuring `indicator` to set the burn-in.
pub fn pilot_burn_in(
    g: &PrimalGraph,
    bc: &Boundary,
    params: FkParams,
    dynamics: Dynamics,
    seed: u64,
    indicator: Observable<'_>,
) -> Result<usize, SamplerError> {
    let spec = ChainSpec::new(100, 1000, seed, dynamics);
    let est = run_chain(g, bc, params, &spec, &[indicator])?;
    Ok(default_burn_in(est[0].autocorr_time_estimate))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationRow {
    pub quantity: String,
    pub exact: f64,
    pub estimate: Estimate,
    pub sigmas: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub tolerance_sigmas: f64,
    pub pass: bool,
}

/// Compare per-edge marginals and the bottom-to-top crossing probability
/// against exact enumeration.
pub fn validate_against_exact(
    g: &PrimalGraph,
    bc: &Boundary,
    params: FkParams,
    spec: &ChainSpec,
    tolerance_sigmas: f64,
) -> Result<ValidationReport, SamplerError> {
    validate_with_rng(g, bc, params, spec, tolerance_sigmas, chain_rng(spec.seed, 0))
}

pub fn validate_with_rng<R: RngCore>(
    g: &PrimalGraph,
    bc: &Boundary,
    params: FkParams,
    spec: &ChainSpec,
    tolerance_sigmas: f64,
    rng: R,
) -> Result<ValidationReport, SamplerError> {
    let exact = enumerate_measure(g, bc, params)?;
    let (bottom, top) = horizontal_sides(g);
    let crossing = |c: &Config| f64::from(u8::from(sets_connected(g, c, &bottom, &top)));
    let e = g.num_edges();
    let edge_fns: Vec<Box<dyn Fn(&Config) -> f64 + Sync>> =
        (0..e).map(|k| Box::new(move |c: &Config| f64::from(u8::from(c.get(k)))) as Box<dyn Fn(&Config) -> f64 + Sync>).collect();
    let mut obs: Vec<Observable<'_>> = edge_fns.iter().map(|f| f.as_ref() as Observable<'_>).collect();
    obs.push(&crossing);
    let mut sampler = Sampler::with_rng(g, bc, params, rng);
    let series = sample_series(&mut sampler, spec, &obs, |_, _| {})?;
    let mut rows = Vec::new();
    for k in 0..e {
        let est = batch_means(&series[k]);
        let ex = exact.edge_marginal(k);
        rows.push(ValidationRow { quantity: format!("edge {k}"), exact: ex, estimate: est, sigmas: est.sigmas_from(ex) });
    }
    let ex = exact.event_probability(|c| sets_connected(g, c, &bottom, &top));
    let est = batch_means(&series[e]);
    rows.push(ValidationRow { quantity: "vertical crossing".into(), exact: ex, estimate: est, sigmas: est.sigmas_from(ex) });
    let pass = rows.iter().all(|r| r.sigmas < tolerance_sigmas);
    Ok(ValidationReport { rows, tolerance_sigmas, pass })
}

/// Site indices of the bottom and top rows of the bounding box.
pub fn horizontal_sides(g: &PrimalGraph) -> (Vec<usize>, Vec<usize>) {
    let ymin = g.sites().iter().map(|s| s.y).min().unwrap();
    let ymax = g.sites().iter().map(|s| s.y).max().unwrap();
    let row = |y: i32| (0..g.num_sites()).filter(|&i| g.site(i).y == y).collect::<Vec<_>>();
    (row(ymin), row(ymax))
}

/// Site indices of the left and right columns of the bounding box.
pub fn vertical_sides(g: &PrimalGraph) -> (Vec<usize>, Vec<usize>) {
    let xmin = g.sites().iter().map(|s| s.x).min().unwrap();
    let xmax = g.sites().iter().map(|s| s.x).max().unwrap();
    let col = |x: i32| (0..g.num_sites()).filter(|&i| g.site(i).x == x).collect::<Vec<_>>();
    (col(xmin), col(xmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Site;

    fn single_edge() -> PrimalGraph {
        PrimalGraph::induced([Site::new(0, 0), Site::new(1, 0)]).unwrap()
    }

    #[test]
    fn conditional_probabilities() {
        let p = FkParams::critical_ising();
        assert!((p.p - 0.585_786_4).abs() < 1e-7);
        assert!((p.p_bridge() - 0.414_213_6).abs() < 1e-7);
        assert_eq!(FkParams::new(0.3, 1.0).unwrap().p_bridge(), 0.3);
    }

    #[test]
    fn connected_off_sees_wiring_and_cycles() {
        let g = PrimalGraph::rectangle(1, 1).unwrap();
        let mut s = Sampler::new(&g, &Boundary::free(), FkParams::critical_ising(), 1);
        s.set_config(Config::open(4));
        for e in 0..4 {
            assert!(s.connected_off(e));
        }
        s.set_config(Config::from_mask(4, 0b0001));
        assert!(!s.connected_off(0));
        let mut w = Sampler::new(&g, &Boundary::wired(&g), FkParams::critical_ising(), 1);
        assert!(w.connected_off(0));
    }

    #[test]
    fn cluster_step_rejects_other_q() {
        let g = single_edge();
        let mut s = Sampler::new(&g, &Boundary::free(), FkParams::new(0.5, 3.0).unwrap(), 1);
        assert_eq!(s.cluster_step(), Err(SamplerError::QUnsupported(3.0)));
    }

    #[test]
    fn constant_observable() {
        let g = single_edge();
        let one = |_: &Config| 1.0;
        let est = run_chain(&g, &Boundary::free(), FkParams::critical_ising(), &ChainSpec::new(10, 200, 3, Dynamics::Cluster), &[&one]).unwrap();
        assert_eq!(est[0].mean, 1.0);
        assert_eq!(est[0].std_error, 0.0);
    }

    #[test]
    fn single_edge_marginal_both_dynamics() {
        let g = single_edge();
        let open = |c: &Config| f64::from(u8::from(c.get(0)));
        for dyn_ in [Dynamics::Cluster, Dynamics::HeatBath] {
            let est = run_chain(&g, &Boundary::free(), FkParams::critical_ising(), &ChainSpec::new(100, 40_000, 11, dyn_), &[&open]).unwrap();
            assert!(est[0].sigmas_from(2f64.sqrt() - 1.0) < 4.0, "{dyn_:?}: {:?}", est[0]);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let g = PrimalGraph::rectangle(2, 2).unwrap();
        let open = |c: &Config| c.count_open() as f64;
        let spec = ChainSpec::new(5, 300, 99, Dynamics::HeatBath);
        let run = || {
            let mut s = Sampler::new(&g, &Boundary::free(), FkParams::critical_ising(), spec.seed);
            sample_series(&mut s, &spec, &[&open], |_, _| {}).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn batch_means_of_iid_constant_blocks() {
        let xs: Vec<f64> = (0..640).map(|i| (i % 2) as f64).collect();
        let e = batch_means(&xs);
        assert_eq!(e.mean, 0.5);
        assert!(e.std_error < 1e-12);
        assert_eq!(e.n_samples, 640);
    }

    #[test]
    fn burn_in_floor() {
        assert_eq!(default_burn_in(1.0), 100);
        assert_eq!(default_burn_in(31.2), 312);
    }
}
