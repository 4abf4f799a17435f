use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Domain, ModelParams, SiteMeasure, Torus};
use crate::error::{config, Error, Result};
use crate::rng::stream;

/// Single-site move parameters. `step` is the Gaussian width in the
/// continuous domain and is ignored in the discrete one, where local moves
/// shift by one atom. `independence` is the probability of redrawing a
/// discrete site from its single-site law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub step: f64,
    pub independence: f64,
}

impl Proposal {
    pub fn default_for(p: &ModelParams) -> Self {
        let precision = p.beta * p.volume() + 8.0 * p.d as f64 * p.coupling();
        Proposal { step: precision.sqrt().recip(), independence: if p.domain == Domain::Discrete { 0.1 } else { 0.0 } }
    }
}

/// Intervals defining the two phases for counting `N_±`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub minus: Vec<[f64; 2]>,
    pub plus: Vec<[f64; 2]>,
}

impl Partition {
    fn hit(iv: &[[f64; 2]], x: f64) -> bool {
        iv.iter().any(|&[a, b]| x >= a && x <= b)
    }

    pub fn count(&self, values: &[f64]) -> (usize, usize) {
        values
            .iter()
            .fold((0, 0), |(m, p), &x| (m + Self::hit(&self.minus, x) as usize, p + Self::hit(&self.plus, x) as usize))
    }
}

/// Metropolis engine for one parameter set.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub torus: Torus,
    pub measure: SiteMeasure,
    params: ModelParams,
    j: f64,
    support: Vec<f64>,
    support_lw: Vec<f64>,
    cdf: Vec<f64>,
}

impl Sampler {
    pub fn new(p: &ModelParams) -> Result<Self> {
        let measure = SiteMeasure::new(p)?;
        let (support, support_lw, cdf) = if measure.is_discrete() {
            let (xs, lw) = measure.support()?;
            let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = 0.0;
            let mut cdf: Vec<f64> = lw
                .iter()
                .map(|w| {
                    acc += (w - m).exp();
                    acc
                })
                .collect();
            for c in cdf.iter_mut() {
                *c /= acc;
            }
            (xs, lw, cdf)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        Ok(Sampler {
            torus: Torus::new(p.d, p.l),
            measure,
            params: p.clone(),
            j: p.coupling(),
            support,
            support_lw,
            cdf,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Discrete support and its log-weights.
    pub fn support(&self) -> (&[f64], &[f64]) {
        (&self.support, &self.support_lw)
    }

    fn atom_index(&self, x: f64) -> usize {
        (x / self.measure.atom()).round() as usize
    }

    fn atom_value(&self, k: usize) -> f64 {
        k as f64 * self.measure.atom()
    }

    /// Snap a density to the domain (nearest atom when discrete).
    pub fn snap(&self, x: f64) -> f64 {
        if self.measure.is_discrete() {
            self.atom_value(self.atom_index(x.max(0.0)))
        } else {
            x.max(0.0)
        }
    }

    fn field_change(&self, values: &[f64], v: usize, x: f64, y: f64) -> f64 {
        self.torus
            .neighbors(v)
            .iter()
            .map(|&w| {
                let e = values[w as usize];
                (y - e) * (y - e) - (x - e) * (x - e)
            })
            .sum()
    }

    /// One Metropolis update of site `v`; returns whether it was accepted.
    pub fn update_site<R: Rng>(&self, values: &mut [f64], v: usize, prop: &Proposal, rng: &mut R) -> bool {
        let x = values[v];
        let (y, free) = if self.measure.is_discrete() {
            if rng.random::<f64>() < prop.independence {
                let k = self.atom_index(x);
                let u: f64 = rng.random();
                let j = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
                if k >= self.support.len() {
                    return false;
                }
                (self.support[j], true)
            } else {
                let k = self.atom_index(x);
                if rng.random::<bool>() {
                    (self.atom_value(k + 1), false)
                } else if k == 0 {
                    return false;
                } else {
                    (self.atom_value(k - 1), false)
                }
            }
        } else {
            let z: f64 = rng.sample(StandardNormal);
            ((x + prop.step * z).abs(), false)
        };
        if y == x {
            return true;
        }
        let mut log_a = -self.j * self.field_change(values, v, x, y);
        if !free {
            let wy = self.measure.log_weight(y);
            if wy == f64::NEG_INFINITY {
                return false;
            }
            log_a += wy - self.measure.log_weight(x);
        }
        if log_a >= 0.0 || rng.random::<f64>() < log_a.exp() {
            values[v] = y;
            true
        } else {
            false
        }
    }

    /// `βH` in units of `β`, i.e. `H` itself.
    pub fn energy(&self, values: &[f64]) -> f64 {
        let p = &self.params;
        let site: f64 = values.iter().map(|&x| self.measure.site_energy(x)).sum();
        let grad: f64 = self.torus.edges().map(|(v, w)| (values[v] - values[w]).powi(2)).sum();
        p.volume() * (site + 0.5 * p.j2 * grad)
    }
}

impl SiteMeasure {
    /// `−λρ − (α/2)ρ² + f_γ(ρ)`.
    pub fn site_energy(&self, rho: f64) -> f64 {
        let lw = self.log_weight(rho);
        if lw == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        -(lw - self.log_atom) / self.scale
    }
}

/// One systematic sweep over all sites; returns the number of accepted moves.
pub fn mcmc_sweep<R: Rng>(s: &Sampler, values: &mut [f64], prop: &Proposal, rng: &mut R) -> usize {
    (0..values.len()).filter(|&v| s.update_site(values, v, prop, rng)).count()
}

/// Exact transition law of one discrete site update, as `(value, prob)`
/// pairs; the last entry is the current value (rejection mass included).
pub fn site_kernel(s: &Sampler, values: &[f64], v: usize, prop: &Proposal) -> Result<Vec<(f64, f64)>> {
    if !s.measure.is_discrete() {
        return config("site_kernel needs the discrete domain");
    }
    let x = values[v];
    let k = s.atom_index(x);
    let mut out: Vec<(f64, f64)> = Vec::new();
    let local = 1.0 - prop.independence;
    let wx = s.measure.log_weight(x);
    for y in [Some(s.atom_value(k + 1)), k.checked_sub(1).map(|j| s.atom_value(j))].into_iter().flatten() {
        let wy = s.measure.log_weight(y);
        if wy == f64::NEG_INFINITY {
            continue;
        }
        let la = wy - wx - s.j * s.field_change(values, v, x, y);
        out.push((y, 0.5 * local * la.min(0.0).exp()));
    }
    if k < s.support.len() {
        for (j, &y) in s.support.iter().enumerate() {
            if j == k {
                continue;
            }
            let q = s.cdf[j] - if j == 0 { 0.0 } else { s.cdf[j - 1] };
            let la = -s.j * s.field_change(values, v, x, y);
            out.push((y, prop.independence * q * la.min(0.0).exp()));
        }
    }
    let moved: f64 = out.iter().map(|e| e.1).sum();
    out.push((x, 1.0 - moved));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Init {
    Constant(f64),
    Config(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub sweeps: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default = "fifty")]
    pub hist_bins: usize,
    #[serde(default)]
    pub hist_max: Option<f64>,
    #[serde(default)]
    pub proposal: Option<Proposal>,
}

fn one() -> usize {
    1
}

fn fifty() -> usize {
    50
}

impl SamplerSettings {
    pub fn new(sweeps: usize, burn_in: usize) -> Self {
        SamplerSettings { sweeps, burn_in, thin: 1, chains: 1, hist_bins: 50, hist_max: None, proposal: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.burn_in >= self.sweeps {
            return config(format!("burn_in = {} must be below sweeps = {}", self.burn_in, self.sweeps));
        }
        if self.thin == 0 || self.chains == 0 || self.hist_bins == 0 {
            return config("thin, chains and hist_bins must be positive");
        }
        Ok(())
    }
}

/// A Markov chain with its own counter-based random stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chain {
    pub seed: u64,
    pub id: u64,
    pub sweep: u64,
    pub values: Vec<f64>,
    pub proposal: Proposal,
}

const TUNE_WINDOW: usize = 20;

impl Chain {
    pub fn new(s: &Sampler, seed: u64, id: u64, init: &Init, proposal: Proposal) -> Result<Self> {
        let n = s.torus.n;
        let values = match init {
            Init::Constant(x) => vec![s.snap(*x); n],
            Init::Config(v) if v.len() == n => v.iter().map(|&x| s.snap(x)).collect(),
            Init::Config(v) => return config(format!("initial configuration has {} sites, torus has {n}", v.len())),
        };
        if values.iter().any(|&x| s.measure.log_weight(x) == f64::NEG_INFINITY) {
            return config("initial configuration has zero weight");
        }
        Ok(Chain { seed, id, sweep: 0, values, proposal })
    }

    /// Run `n` sweeps, calling `obs` after each. With `tune` set, the
    /// continuous step is adapted every 20 sweeps toward 30–50% acceptance.
    pub fn run<F: FnMut(u64, &[f64])>(&mut self, s: &Sampler, n: usize, tune: bool, mut obs: F) -> f64 {
        let sites = self.values.len();
        let mut total = 0usize;
        let mut window = 0usize;
        for i in 0..n {
            let mut rng = stream(self.seed, self.id, self.sweep);
            let acc = mcmc_sweep(s, &mut self.values, &self.proposal, &mut rng);
            self.sweep += 1;
            total += acc;
            window += acc;
            obs(self.sweep, &self.values);
            if tune && !s.measure.is_discrete() && (i + 1) % TUNE_WINDOW == 0 {
                let rate = window as f64 / (TUNE_WINDOW * sites) as f64;
                if rate < 0.3 {
                    self.proposal.step *= 0.8;
                } else if rate > 0.5 {
                    self.proposal.step *= 1.25;
                }
                window = 0;
            }
        }
        if n == 0 {
            return 0.0;
        }
        total as f64 / (n * sites) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub chain: u64,
    pub sweep: u64,
    pub mean_density: f64,
    pub energy: f64,
    pub n_minus: usize,
    pub n_plus: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    fn new(hi: f64, bins: usize) -> Self {
        Histogram { edges: (0..=bins).map(|i| hi * i as f64 / bins as f64).collect(), mass: vec![0.0; bins] }
    }

    fn add(&mut self, x: f64) {
        let bins = self.mass.len();
        let hi = self.edges[bins];
        let b = ((x / hi) * bins as f64).floor();
        let b = if b.is_finite() { (b.max(0.0) as usize).min(bins - 1) } else { bins - 1 };
        self.mass[b] += 1.0;
    }

    fn merge(&mut self, o: &Histogram) {
        for (a, b) in self.mass.iter_mut().zip(&o.mass) {
            *a += b;
        }
    }

    fn normalize(&mut self) {
        let t: f64 = self.mass.iter().sum();
        if t > 0.0 {
            for m in self.mass.iter_mut() {
                *m /= t;
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub sites: usize,
    pub rows: Vec<TraceRow>,
    pub histogram: Histogram,
    pub acceptance: Vec<f64>,
    pub chains: Vec<Chain>,
}

impl Trace {
    pub fn mean_density(&self) -> f64 {
        self.rows.iter().map(|r| r.mean_density).sum::<f64>() / self.rows.len() as f64
    }

    pub fn densities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_density).collect()
    }

    /// Pooled `Π_±`: sample means of `N_±/N`.
    pub fn pi(&self) -> (f64, f64) {
        let n = (self.rows.len() * self.sites) as f64;
        let m: usize = self.rows.iter().map(|r| r.n_minus).sum();
        let p: usize = self.rows.iter().map(|r| r.n_plus).sum();
        (m as f64 / n, p as f64 / n)
    }
}

/// Run the chains, discarding burn-in, and record every `thin`-th sweep.
pub fn sample_observables(
    p: &ModelParams,
    settings: &SamplerSettings,
    seed: u64,
    init: &Init,
    partition: Option<&Partition>,
) -> Result<Trace> {
    settings.validate()?;
    let s = Sampler::new(p)?;
    let proposal = settings.proposal.unwrap_or_else(|| Proposal::default_for(p));
    let hist_max = match settings.hist_max {
        Some(h) if h > 0.0 => h,
        Some(_) => return config("hist_max must be positive"),
        None => match s.measure.is_discrete() {
            true => s.support.last().copied().unwrap_or(1.0).max(s.measure.atom()),
            false => s.measure.upper(),
        },
    };
    let empty = Partition::default();
    let part = partition.unwrap_or(&empty);
    let runs: Vec<Result<(Vec<TraceRow>, Histogram, f64, Chain)>> = (0..settings.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut chain = Chain::new(&s, seed, c, init, proposal)?;
            chain.run(&s, settings.burn_in, true, |_, _| {});
            let mut rows = Vec::new();
            let mut hist = Histogram::new(hist_max, settings.hist_bins);
            let keep = settings.sweeps - settings.burn_in;
            let acc = chain.run(&s, keep, false, |sweep, v| {
                if (sweep as usize - settings.burn_in) % settings.thin != 0 {
                    return;
                }
                let (n_minus, n_plus) = part.count(v);
                v.iter().for_each(|&x| hist.add(x));
                rows.push(TraceRow {
                    chain: c,
                    sweep,
                    mean_density: v.iter().sum::<f64>() / v.len() as f64,
                    energy: s.energy(v),
                    n_minus,
                    n_plus,
                });
            });
            Ok((rows, hist, acc, chain))
        })
        .collect();
    let mut trace = Trace {
        sites: s.torus.n,
        rows: Vec::new(),
        histogram: Histogram::new(hist_max, settings.hist_bins),
        acceptance: Vec::new(),
        chains: Vec::new(),
    };
    for r in runs {
        let (rows, hist, acc, chain) = r?;
        trace.rows.extend(rows);
        trace.histogram.merge(&hist);
        trace.acceptance.push(acc);
        trace.chains.push(chain);
    }
    if trace.rows.is_empty() {
        return Err(Error::Config("no samples recorded".into()));
    }
    trace.histogram.normalize();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::super::{Domain, SpinConfig};
    use super::*;
    use crate::meanfield::FreeEnergySpec;

    #[test]
    fn kernel_rows_sum_to_one_and_balance() {
        let p = tiny(0.7, 0.4);
        let s = Sampler::new(&p).unwrap();
        let prop = Proposal { step: 1.0, independence: 0.3 };
        let (xs, lw) = s.support();
        for &eta in xs {
            let mut base = vec![0.0, eta];
            let k0 = site_kernel(&s, &base, 0, &prop).unwrap();
            assert!((k0.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-14);
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in xs.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    base[0] = x;
                    let kxy: f64 =
                        site_kernel(&s, &base, 0, &prop).unwrap().iter().filter(|e| e.0 == y).map(|e| e.1).sum();
                    base[0] = y;
                    let kyx: f64 =
                        site_kernel(&s, &base, 0, &prop).unwrap().iter().filter(|e| e.0 == x).map(|e| e.1).sum();
                    let cx = lw[i] - 2.0 * p.coupling() * (x - eta).powi(2);
                    let cy = lw[j] - 2.0 * p.coupling() * (y - eta).powi(2);
                    let lhs = cx.exp() * kxy;
                    let rhs = cy.exp() * kyx;
                    assert!((lhs - rhs).abs() <= 1e-13 * lhs.max(rhs).max(1e-300), "{x}->{y}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn uncoupled_marginal_matches_weights() {
        let mut p = tiny(0.0, 0.4);
        p.l = 4;
        let s = Sampler::new(&p).unwrap();
        let (xs, lw) = s.support();
        let lz = crate::numeric::logsumexp(lw.iter().copied());
        let st = SamplerSettings::new(100_000, 1000);
        for (k, (&x, w)) in xs.iter().zip(lw).enumerate() {
            let part = Partition { minus: vec![[x, x]], plus: vec![] };
            let t = sample_observables(&p, &st, 21 + k as u64, &Init::Constant(0.0), Some(&part)).unwrap();
            let occ: Vec<f64> = t.rows.iter().map(|r| r.n_minus as f64 / t.sites as f64).collect();
            let (mean, se) = crate::numeric::batch_means(&occ, 50);
            let q = (w - lz).exp();
            assert!((mean - q).abs() <= 3.0 * se, "atom {k}: {mean} vs {q} (se {se})");
        }
    }

    #[test]
    fn histogram_is_normalized() {
        let p = tiny(0.5, 0.0);
        let st = SamplerSettings { hist_bins: 7, ..SamplerSettings::new(300, 10) };
        let t = sample_observables(&p, &st, 2, &Init::Constant(1.0), None).unwrap();
        assert!((t.histogram.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_proposal_keeps_configuration() {
        let mut p = tiny(1.0, 0.0);
        p.spec = FreeEnergySpec::tonks(1.0, 1.0);
        p.domain = Domain::Continuous;
        p.l = 4;
        let s = Sampler::new(&p).unwrap();
        let mut v = vec![0.1, 0.2, 0.3, 0.4];
        let mut rng = stream(1, 0, 0);
        mcmc_sweep(&s, &mut v, &Proposal { step: 0.0, independence: 0.0 }, &mut rng);
        assert_eq!(v, vec![0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn same_seed_same_trace() {
        let mut p = tiny(1.0, 0.0);
        p.spec = FreeEnergySpec::tonks(1.0, 1.0);
        p.domain = Domain::Continuous;
        p.l = 4;
        p.d = 2;
        p.gamma = 0.5;
        let st = SamplerSettings::new(60, 20);
        let a = sample_observables(&p, &st, 11, &Init::Constant(0.3), None).unwrap();
        let b = sample_observables(&p, &st, 11, &Init::Constant(0.3), None).unwrap();
        assert_eq!(a.rows, b.rows);
        let c = sample_observables(&p, &st, 12, &Init::Constant(0.3), None).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn burn_in_must_leave_samples() {
        let p = tiny(1.0, 0.0);
        let st = SamplerSettings::new(10, 10);
        assert!(matches!(sample_observables(&p, &st, 1, &Init::Constant(0.0), None), Err(Error::Config(_))));
    }

    #[test]
    fn energy_matches_hamiltonian() {
        let mut p = tiny(1.3, 0.2);
        p.domain = Domain::Continuous;
        p.spec = FreeEnergySpec::tonks(1.0, 1.0);
        p.l = 4;
        let s = Sampler::new(&p).unwrap();
        let v = vec![0.1, 0.4, 0.0, 0.8];
        let h = super::super::hamiltonian(&SpinConfig { l: 4, d: 1, values: v.clone() }, &p).unwrap();
        assert!((s.energy(&v) - h).abs() < 1e-12);
    }

    #[test]
    fn hard_core_samples_stay_in_range() {
        let mut p = tiny(0.5, 2.0);
        p.spec = FreeEnergySpec::tonks(1.0, 1.0);
        p.domain = Domain::Continuous;
        p.l = 4;
        let t = sample_observables(&p, &SamplerSettings::new(200, 50), 3, &Init::Constant(0.5), None).unwrap();
        for c in &t.chains {
            assert!(c.values.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }
}
