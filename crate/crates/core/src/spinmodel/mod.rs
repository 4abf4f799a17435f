//! The lattice spin model on the discrete torus `(ℤ/Lℤ)^d`: single-site
//! measures, the Hamiltonian, Metropolis sampling, exact enumeration and
//! thermodynamic integration of the pressure.

mod exact;
mod pressure;
mod sampler;

pub use exact::{enumerate_fold, exact_log_partition, exact_log_weights};
pub use pressure::{find_anchor, pressure_estimate, Anchor, PathSettings, PressurePath};
pub use sampler::{
    mcmc_sweep, sample_observables, site_kernel, Chain, Histogram, Init, Partition, Proposal, Sampler, SamplerSettings,
    Trace, TraceRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::meanfield::{FreeEnergySpec, ScaleFn};
use crate::numeric::{log_integral, logsumexp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Continuous,
    Discrete,
}

/// Scalar parameters of one box-model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub beta: f64,
    pub alpha: f64,
    pub j2: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub domain: Domain,
    pub spec: FreeEnergySpec,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return config("d must be at least 1");
        }
        if self.l < 2 || self.l % 2 != 0 {
            return config(format!("L = {} must be even and at least 2", self.l));
        }
        if !(self.beta > 0.0) {
            return config("beta must be positive");
        }
        if !(self.j2 >= 0.0) {
            return config("J2 must be nonnegative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return config(format!("gamma = {} outside (0, 1]", self.gamma));
        }
        if !self.lambda.is_finite() || !self.alpha.is_finite() {
            return config("lambda and alpha must be finite");
        }
        self.spec.validate()?;
        self.spec.check_alpha(self.alpha)
    }

    /// `γ^{−d}`, the effective inverse temperature of a site.
    pub fn volume(&self) -> f64 {
        self.gamma.powi(-(self.d as i32))
    }

    /// Lattice spacing of `S_γ`, `γ^d`.
    pub fn atom(&self) -> f64 {
        self.gamma.powi(self.d as i32)
    }

    /// `J = βJ₂γ^{−d}/2`.
    pub fn coupling(&self) -> f64 {
        0.5 * self.beta * self.j2 * self.volume()
    }

    pub fn sites(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    pub fn edges(&self) -> usize {
        self.d * self.sites()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ModelParams { lambda, ..self.clone() }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        ModelParams { gamma, ..self.clone() }
    }
}

/// Densities on the torus, flattened with axis 0 fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinConfig {
    #[serde(rename = "L")]
    pub l: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl SpinConfig {
    pub fn constant(p: &ModelParams, rho: f64) -> Self {
        SpinConfig { l: p.l, d: p.d, values: vec![rho; p.sites()] }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Neighbor table of the torus. Slot `2i` holds `v + e_i`, slot `2i+1`
/// holds `v − e_i`; at `L = 2` both point to the same site, so each of
/// the two parallel edges is counted.
#[derive(Clone, Debug)]
pub struct Torus {
    pub d: usize,
    pub l: usize,
    pub n: usize,
    nbr: Vec<u32>,
}

impl Torus {
    pub fn new(d: usize, l: usize) -> Self {
        let n = l.pow(d as u32);
        let mut nbr = vec![0u32; n * 2 * d];
        for v in 0..n {
            let c = Self::coords_of(v, d, l);
            for i in 0..d {
                let mut up = c.clone();
                up[i] = (c[i] + 1) % l;
                let mut dn = c.clone();
                dn[i] = (c[i] + l - 1) % l;
                nbr[v * 2 * d + 2 * i] = Self::index_of(&up, l) as u32;
                nbr[v * 2 * d + 2 * i + 1] = Self::index_of(&dn, l) as u32;
            }
        }
        Torus { d, l, n, nbr }
    }

    fn coords_of(mut v: usize, d: usize, l: usize) -> Vec<usize> {
        let mut c = vec![0; d];
        for x in c.iter_mut() {
            *x = v % l;
            v /= l;
        }
        c
    }

    fn index_of(c: &[usize], l: usize) -> usize {
        c.iter().rev().fold(0, |acc, &x| acc * l + x)
    }

    pub fn coords(&self, v: usize) -> Vec<usize> {
        Self::coords_of(v, self.d, self.l)
    }

    pub fn index(&self, c: &[usize]) -> usize {
        Self::index_of(c, self.l)
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.nbr[v * 2 * self.d..(v + 1) * 2 * self.d]
    }

    /// The `d·L^d` edges `(v, v + e_i)` as a multiset.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |v| (0..self.d).map(move |i| (v, self.nbr[v * 2 * self.d + 2 * i] as usize)))
    }
}

/// The single-site measure `ω_{λ,γ}` with its free energy resolved.
#[derive(Clone, Debug)]
pub struct SiteMeasure {
    scale: f64,
    lambda: f64,
    alpha: f64,
    log_atom: f64,
    atom: f64,
    discrete: bool,
    hard_max: Option<f64>,
    f: ScaleFn,
}

const TAIL_DROP: f64 = 60.0;
const MAX_ATOMS: usize = 1 << 22;

impl SiteMeasure {
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        let discrete = p.domain == Domain::Discrete;
        Ok(SiteMeasure {
            scale: p.beta * p.volume(),
            lambda: p.lambda,
            alpha: p.alpha,
            log_atom: if discrete { p.d as f64 * p.gamma.ln() } else { 0.0 },
            atom: p.atom(),
            discrete,
            hard_max: if p.spec.is_hard_core() { p.spec.rho_max } else { None },
            f: p.spec.scale_fn(p.gamma)?,
        })
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn atom(&self) -> f64 {
        self.atom
    }

    pub fn log_weight(&self, rho: f64) -> f64 {
        if rho < 0.0 {
            return f64::NEG_INFINITY;
        }
        if let Some(m) = self.hard_max {
            if rho > m {
                return f64::NEG_INFINITY;
            }
        }
        let f = self.f.eval(rho);
        if f == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        self.scale * (self.lambda * rho + 0.5 * self.alpha * rho * rho - f) + self.log_atom
    }

    /// Discrete: atoms `kγ^d` carrying non-negligible weight, with their
    /// log-weights. Hard core: every atom up to `ρ_max` with finite weight.
    /// Soft core: the tail is cut once weights fall `60` nats below the
    /// running maximum and keep decreasing.
    pub fn support(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.discrete {
            return Err(Error::Config("support() needs the discrete domain".into()));
        }
        let mut xs = Vec::new();
        let mut lw = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for k in 0..MAX_ATOMS {
            let x = k as f64 * self.atom;
            if let Some(m) = self.hard_max {
                if x > m * (1.0 + 1e-12) {
                    break;
                }
            }
            let w = self.log_weight(x);
            if self.hard_max.is_none() && w < best - TAIL_DROP && lw.last().is_some_and(|&prev| w < prev) {
                break;
            }
            best = best.max(w);
            xs.push(x);
            lw.push(w);
        }
        if xs.len() == MAX_ATOMS {
            return Err(Error::Capacity("single-site support too large".into()));
        }
        while lw.last() == Some(&f64::NEG_INFINITY) {
            lw.pop();
            xs.pop();
        }
        if xs.is_empty() {
            return Err(Error::Degenerate("single-site measure has no mass".into()));
        }
        Ok((xs, lw))
    }

    /// Continuous: right end of the window carrying the mass.
    pub fn upper(&self) -> f64 {
        if let Some(m) = self.hard_max {
            return m;
        }
        let mut best = self.log_weight(0.0);
        let mut r: f64 = 0.0;
        let h = 1.0 / 64.0;
        loop {
            r += h;
            let w = self.log_weight(r);
            best = best.max(w);
            if (w < best - TAIL_DROP && self.log_weight(r + h) < w) || r > 1e6 {
                return r;
            }
        }
    }

    /// `log ω([a, b])`.
    pub fn log_mass(&self, a: f64, b: f64) -> Result<f64> {
        if self.discrete {
            let (xs, lw) = self.support()?;
            Ok(logsumexp(xs.iter().zip(&lw).filter(|(x, _)| **x >= a - 1e-12 && **x <= b + 1e-12).map(|(_, w)| *w)))
        } else {
            let hi = b.min(self.upper());
            Ok(log_integral(|x| self.log_weight(x), a.max(0.0), hi, 1e-10))
        }
    }

    pub fn log_total(&self) -> Result<f64> {
        self.log_mass(0.0, f64::INFINITY)
    }

    /// Mean and variance of the normalized single-site measure.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let lz = self.log_total()?;
        if self.discrete {
            let (xs, lw) = self.support()?;
            let m1: f64 = xs.iter().zip(&lw).map(|(x, w)| x * (w - lz).exp()).sum();
            let m2: f64 = xs.iter().zip(&lw).map(|(x, w)| x * x * (w - lz).exp()).sum();
            Ok((m1, (m2 - m1 * m1).max(0.0)))
        } else {
            let hi = self.upper();
            let moment = |k: f64| (log_integral(|x| self.log_weight(x) + k * x.ln(), 0.0, hi, 1e-12) - lz).exp();
            let (m1, m2) = (moment(1.0), moment(2.0));
            Ok((m1, (m2 - m1 * m1).max(0.0)))
        }
    }
}

/// `βγ^{−d}(λρ + (α/2)ρ² − f_γ(ρ))` plus the atom weight `d log γ`
/// in the discrete domain.
pub fn log_site_weight(p: &ModelParams, rho: f64) -> Result<f64> {
    Ok(SiteMeasure::new(p)?.log_weight(rho))
}

/// Site and gradient parts of `H`, both in energy units.
pub fn energy_parts(cfg: &SpinConfig, p: &ModelParams) -> Result<(f64, f64)> {
    p.validate()?;
    if cfg.values.len() != p.sites() || cfg.l != p.l || cfg.d != p.d {
        return config("configuration does not match the torus");
    }
    let f = p.spec.scale_fn(p.gamma)?;
    let hard_max = if p.spec.is_hard_core() { p.spec.rho_max } else { None };
    let vol = p.volume();
    let mut site = 0.0;
    for &x in &cfg.values {
        let fx = if hard_max.is_some_and(|m| x > m) { f64::INFINITY } else { f.eval(x) };
        site += -p.lambda * x - 0.5 * p.alpha * x * x + fx;
    }
    let torus = Torus::new(p.d, p.l);
    let grad: f64 = torus.edges().map(|(v, w)| (cfg.values[v] - cfg.values[w]).powi(2)).sum();
    Ok((vol * site, vol * 0.5 * p.j2 * grad))
}

/// `γ^{−d}[Σ_v(−λη_v − (α/2)η_v² + f_γ(η_v)) + (J₂/2)Σ_{v∼w}|η_v − η_w|²]`.
pub fn hamiltonian(cfg: &SpinConfig, p: &ModelParams) -> Result<f64> {
    let (s, g) = energy_parts(cfg, p)?;
    Ok(s + g)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(j2: f64, lambda: f64) -> ModelParams {
        let spec = FreeEnergySpec {
            kind: crate::meanfield::FreeEnergyKind::Tabulated {
                tables: vec![crate::meanfield::ScaleTable {
                    gamma: 1.0,
                    rho: vec![0.0, 1.0, 2.0],
                    f: vec![Some(0.0), Some(0.0), Some(0.0)],
                    stderr: None,
                }],
            },
            case: crate::meanfield::Case::HardCore,
            rho_cp: Some(1.5),
            rho_max: Some(2.0),
            alpha_max: None,
            beta: 1.0,
        };
        ModelParams { d: 1, l: 2, beta: 1.0, alpha: 0.0, j2, gamma: 1.0, lambda, domain: Domain::Discrete, spec }
    }

    #[test]
    fn constant_config_has_no_gradient_energy() {
        let mut p = tiny(1.0, 0.0);
        p.spec = FreeEnergySpec::ideal_gas(1.0);
        p.domain = Domain::Continuous;
        p.gamma = 0.5;
        p.l = 4;
        p.d = 2;
        let cfg = SpinConfig::constant(&p, 0.7);
        let h = hamiltonian(&cfg, &p).unwrap();
        let expect = p.volume() * p.sites() as f64 * 0.7 * (0.7f64.ln() - 1.0);
        assert!((h - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn two_site_torus_counts_both_edges() {
        let p = tiny(3.0, 0.0);
        let torus = Torus::new(1, 2);
        let edges: Vec<_> = torus.edges().collect();
        assert_eq!(edges, vec![(0, 1), (1, 0)]);
        let cfg = SpinConfig { l: 2, d: 1, values: vec![0.0, 2.0] };
        let (_, g) = energy_parts(&cfg, &p).unwrap();
        assert_eq!(g, 0.5 * 3.0 * 2.0 * 4.0);
    }

    #[test]
    fn gradient_is_shift_invariant() {
        let mut p = tiny(1.0, 0.0);
        p.spec = FreeEnergySpec::ideal_gas(1.0);
        p.domain = Domain::Continuous;
        p.l = 4;
        let a = SpinConfig { l: 4, d: 1, values: vec![0.1, 0.5, 0.2, 0.9] };
        let b = SpinConfig { l: 4, d: 1, values: a.values.iter().map(|x| x + 0.3).collect() };
        assert!((energy_parts(&a, &p).unwrap().1 - energy_parts(&b, &p).unwrap().1).abs() < 1e-12);
    }

    #[test]
    fn site_weight_cases() {
        let mut p = tiny(1.0, 0.0);
        p.gamma = 0.5;
        p.spec = FreeEnergySpec::ideal_gas(1.0);
        assert!((log_site_weight(&p, 0.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        p.domain = Domain::Continuous;
        assert_eq!(log_site_weight(&p, 0.0).unwrap(), 0.0);
        let hc = tiny(1.0, 0.0);
        assert_eq!(log_site_weight(&hc, 2.5).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn weight_ratio_slope_in_lambda() {
        let p = tiny(1.0, 0.3);
        let q = tiny(1.0, 1.3);
        let r = |p: &ModelParams| log_site_weight(p, 2.0).unwrap() - log_site_weight(p, 1.0).unwrap();
        assert!((r(&q) - r(&p) - p.beta * p.volume() * 1.0).abs() < 1e-12);
    }

    #[test]
    fn continuous_moments_of_exponential() {
        // ideal gas at lambda very negative: close to an exponential law.
        let mut p = tiny(1.0, -40.0);
        p.spec = FreeEnergySpec::ideal_gas(1.0);
        p.domain = Domain::Continuous;
        let m = SiteMeasure::new(&p).unwrap();
        let (mean, var) = m.moments().unwrap();
        assert!(mean > 0.0 && mean < 0.05);
        assert!(var > 0.0 && var < mean * mean * 2.0);
    }
}
