//! Phase-transition diagnostics: good regions, the `θ` parameters, the
//! constant budget of the reflection-positivity argument, `λ` scans for
//! coexistence and the pressure comparison with mean field.

mod scan;

pub use scan::{
    branch_pressures, lambda_scan, pressure_comparison, BranchPaths, BranchPressures, BranchStats, Estimator, Outcome,
    PressureComparison, PressureRow, ScanContext, ScanPoint, ScanSettings, TransitionReport,
};

use serde::{Deserialize, Serialize};

use crate::chessboard::{default_xi_grid, psi_lower_bound};
use crate::error::{config, domain, Error, Result};
use crate::meanfield::{domain_upper, phi_grid, FreeEnergyKind, FreeEnergySpec, MeanFieldAnalysis, Phi};
use crate::numeric::logsumexp;
use crate::spinmodel::{ModelParams, Partition, SiteMeasure, TraceRow};

/// Closed intervals `[a, b]`.
pub type Intervals = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodRegionSpec {
    pub delta: f64,
    pub kappa: f64,
    pub g_minus: Intervals,
    pub g_plus: Intervals,
    pub i_delta: Option<[f64; 2]>,
    pub lambda_star: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub rho_zero: f64,
    pub rho_t: f64,
    pub delta_cap: f64,
    pub kappa_cap: f64,
    pub gap: f64,
}

impl GoodRegionSpec {
    pub fn partition(&self) -> Partition {
        Partition { minus: self.g_minus.clone(), plus: self.g_plus.clone() }
    }

    pub fn in_minus(&self, x: f64) -> bool {
        self.g_minus.iter().any(|&[a, b]| x >= a && x <= b)
    }

    pub fn in_plus(&self, x: f64) -> bool {
        self.g_plus.iter().any(|&[a, b]| x >= a && x <= b)
    }

    /// `n` evenly spaced chemical potentials on `[λ₋, λ₊]`, endpoints included.
    pub fn lambda_samples(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.lambda_plus
                } else {
                    self.lambda_minus + (self.lambda_plus - self.lambda_minus) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Grid resolution for region extraction.
const GRID: usize = 4096;

/// Maximal runs of grid points with `φ ≤ level`, endpoints refined by
/// bisection on the continuous `φ`.
fn sublevel_intervals(phi: &dyn Fn(f64) -> f64, rho: &[f64], level: f64) -> Intervals {
    let inside = |x: f64| phi(x) <= level;
    let edge = |mut lo: f64, mut hi: f64, lo_in: bool| {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) == lo_in {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo_in {
            lo
        } else {
            hi
        }
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..rho.len() {
        let here = inside(rho[i]);
        match (start, here) {
            (None, true) => start = Some(if i == 0 { rho[0] } else { edge(rho[i - 1], rho[i], false) }),
            (Some(a), false) => {
                out.push([a, edge(rho[i - 1], rho[i], true)]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push([a, rho[rho.len() - 1]]);
    }
    out
}

/// `ρ_T`: smallest grid density beyond which `φ_{λ*}(ρ) − ρ ≥ m* + 1`,
/// i.e. `inf_{|λ−λ*|≤1} φ_λ ≥ m* + 1`, found by a reverse scan.
fn truncation_density(spec: &FreeEnergySpec, phi: &Phi, lambda_star: f64, m_star: f64) -> Result<f64> {
    let ok = |r: f64| phi.at(lambda_star, r) - r >= m_star + 1.0;
    let mut upper = domain_upper(spec, phi, lambda_star)?;
    let analytic = !matches!(spec.kind, FreeEnergyKind::Tabulated { .. });
    if !spec.is_hard_core() && analytic {
        let mut k = 0;
        while !(ok(upper) && ok(2.0 * upper)) {
            upper *= 2.0;
            k += 1;
            if k > 60 {
                return Err(Error::IllDefined("phi_lambda - rho never exceeds m_star + 1".into()));
            }
        }
    }
    let (rho, _) = phi_grid(phi, upper, GRID);
    let mut t = rho.len();
    while t > 0 && ok(rho[t - 1]) {
        t -= 1;
    }
    Ok(if t == rho.len() { upper } else { rho[t] })
}

/// Good regions `G_±(δ)` from the sublevel set `{φ_{λ*} ≤ m* + δ}` split at
/// `ρ_{*,0}`, with `I(δ) = [ρ_cp, ρ_cp + δ]` appended when the hard-core
/// endpoint is itself a minimizer.
///
/// Defaults: `δ = 0.3(φ_{λ*}(ρ_{*,0}) − m*)` and `κ = ½·min{1, 1/(ρ_{*,+} + ρ_T)}`.
pub fn build_good_regions(
    analysis: &MeanFieldAnalysis,
    spec: &FreeEnergySpec,
    delta: Option<f64>,
    kappa: Option<f64>,
) -> Result<GoodRegionSpec> {
    let phi = Phi::new(spec, analysis.alpha)?;
    let (ls, ms) = (analysis.lambda_star, analysis.m_star);
    let barrier = phi.at(ls, analysis.rho_zero) - ms;
    let tol = 1e-9 * (1.0 + ms.abs());
    let hard = spec.is_hard_core();
    let at_cp = spec.rho_cp.filter(|_| hard).map(|cp| phi.at(ls, cp));
    let endpoint_min = at_cp.is_some_and(|v| v <= ms + tol);
    let mut delta_cap = barrier.min(1.0);
    let mut cap_name = if barrier < 1.0 { "phi(rho_zero) - m_star" } else { "1" };
    if let Some(v) = at_cp.filter(|_| !endpoint_min) {
        if v - ms < delta_cap {
            delta_cap = v - ms;
            cap_name = "phi(rho_cp) - m_star";
        }
    }
    let delta = delta.unwrap_or(0.3 * barrier);
    if !(delta > 0.0 && delta < delta_cap) {
        return config(format!("delta = {delta} violates the cap {cap_name} = {delta_cap}"));
    }
    let rho_t = truncation_density(spec, &phi, ls, ms)?;
    let kappa_cap = 1.0f64.min(1.0 / (analysis.rho_plus + rho_t));
    let kappa = kappa.unwrap_or(0.5 * kappa_cap);
    if !(kappa > 0.0 && kappa < kappa_cap) {
        return config(format!("kappa = {kappa} violates the cap min(1, 1/(rho_plus + rho_T)) = {kappa_cap}"));
    }

    let upper = domain_upper(spec, &phi, ls)?;
    let (rho, _) = phi_grid(&phi, upper, GRID);
    let level = ms + delta;
    let all = sublevel_intervals(&|x| phi.at(ls, x), &rho, level);
    let rz = analysis.rho_zero;
    let g_minus: Intervals = all.iter().filter(|iv| iv[1] < rz).copied().collect();
    let mut g_plus: Intervals = all.iter().filter(|iv| iv[0] > rz).copied().collect();
    if all.iter().any(|iv| iv[0] <= rz && iv[1] >= rz) {
        return Err(Error::Internal("sublevel set straddles rho_zero".into()));
    }
    let i_delta = match (endpoint_min, spec.rho_cp) {
        (true, Some(cp)) => Some([cp, cp + delta]),
        _ => None,
    };
    if let Some(iv) = i_delta {
        match g_plus.last_mut() {
            Some(last) if last[1] >= iv[0] => last[1] = last[1].max(iv[1]),
            _ => g_plus.push(iv),
        }
    }
    let (Some(lo), Some(hi)) = (g_minus.last(), g_plus.first()) else {
        return Err(Error::Internal("a good region is empty".into()));
    };
    let gap = hi[0] - lo[1];
    if !(gap > 0.0) {
        return Err(Error::Internal(format!("good regions are not separated (gap {gap})")));
    }
    Ok(GoodRegionSpec {
        delta,
        kappa,
        g_minus,
        g_plus,
        i_delta,
        lambda_star: ls,
        lambda_minus: ls - kappa * delta,
        lambda_plus: ls + kappa * delta,
        rho_zero: rz,
        rho_t,
        delta_cap,
        kappa_cap,
        gap,
    })
}

/// Log masses of `G₋`, `G₊` and the rest under `ω_λ`.
fn region_log_masses(m: &SiteMeasure, g: &GoodRegionSpec) -> Result<[f64; 3]> {
    if m.is_discrete() {
        let (xs, lw) = m.support()?;
        let mut parts = [Vec::new(), Vec::new(), Vec::new()];
        for (&x, &w) in xs.iter().zip(&lw) {
            let k = if g.in_minus(x) {
                0
            } else if g.in_plus(x) {
                1
            } else {
                2
            };
            parts[k].push(w);
        }
        return Ok(parts.map(logsumexp));
    }
    let mass = |ivs: &[[f64; 2]]| -> Result<f64> {
        let v: Vec<f64> = ivs.iter().map(|&[a, b]| m.log_mass(a, b)).collect::<Result<_>>()?;
        Ok(logsumexp(v))
    };
    let mut all: Intervals = g.g_minus.iter().chain(&g.g_plus).copied().collect();
    all.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let top = m.upper();
    let mut gaps = Vec::new();
    let mut cur = 0.0;
    for [a, b] in all {
        if a > cur {
            gaps.push([cur, a]);
        }
        cur = cur.max(b);
    }
    if top > cur {
        gaps.push([cur, top]);
    }
    Ok([mass(&g.g_minus)?, mass(&g.g_plus)?, mass(&gaps)?])
}

/// `θ₁, θ₂, θ₃` at one or more chemical potentials, with `ω̃ = e^{−ψ}ω`
/// normalized by the interval lower bound on `ψ`; every reported `θ`
/// therefore bounds the true one from above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub gamma: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub log_theta: [f64; 3],
    pub lambdas: Vec<f64>,
    pub psi_proxy: Vec<f64>,
    pub per_lambda: Vec<[f64; 2]>,
}

pub fn compute_thetas(p: &ModelParams, g: &GoodRegionSpec, lambdas: &[f64]) -> Result<ThetaReport> {
    let eps = 1e-12 * (1.0 + g.lambda_star.abs());
    if lambdas.iter().any(|&l| l < g.lambda_minus - eps || l > g.lambda_plus + eps) {
        return config("theta samples must lie in [lambda_minus, lambda_plus]");
    }
    let has_end = |t: f64| lambdas.iter().any(|&l| (l - t).abs() <= eps);
    if !has_end(g.lambda_minus) || !has_end(g.lambda_plus) {
        return config("theta samples must include both endpoints");
    }
    let dist2 = g.gap * g.gap;
    let j = p.coupling();
    let mut psi_proxy = Vec::with_capacity(lambdas.len());
    let mut per_lambda = Vec::with_capacity(lambdas.len());
    let (mut l1, mut l2, mut l3) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &lam in lambdas {
        let pl = p.with_lambda(lam);
        let psi = psi_lower_bound(&pl, &default_xi_grid(&pl))?.value;
        let [lm, lp, lo] = region_log_masses(&SiteMeasure::new(&pl)?, g)?;
        let t1 = lo - psi;
        let t2 = -0.5 * j * dist2 + 0.5 * (lm + lp) - psi;
        l1 = l1.max(t1);
        l2 = l2.max(t2);
        if (lam - g.lambda_minus).abs() <= eps {
            l3 = l3.max(logsumexp([lp, lo]) - psi);
        }
        if (lam - g.lambda_plus).abs() <= eps {
            l3 = l3.max(logsumexp([lm, lo]) - psi);
        }
        psi_proxy.push(psi);
        per_lambda.push([t1.exp(), t2.exp()]);
    }
    Ok(ThetaReport {
        gamma: p.gamma,
        theta1: l1.exp(),
        theta2: l2.exp(),
        theta3: l3.exp(),
        log_theta: [l1, l2, l3],
        lambdas: lambdas.to_vec(),
        psi_proxy,
        per_lambda,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsBudget {
    pub budget: f64,
    pub pass: bool,
    /// Larger root of `δ₃² − (2s + ε)δ₃ + 2s = 0`, `s = δ₁ + δ₂`, i.e. the
    /// solution of `(1 − δ₃)(1 − 2s/δ₃) = 1 − ε` with `δ₃ ≤ ε`.
    pub delta3: Option<f64>,
}

/// `δ₁ + δ₂ ≤ 1 − ε/2 − √(1 − ε)`, boundary inclusive, for `0 < ε ≤ 1/2`.
pub fn ds_budget(eps: f64, delta1: f64, delta2: f64) -> Result<DsBudget> {
    if !(eps > 0.0 && eps <= 0.5) {
        return domain(format!("epsilon = {eps} outside (0, 1/2]"));
    }
    if !(delta1 >= 0.0 && delta2 >= 0.0) {
        return domain("delta1 and delta2 must be nonnegative");
    }
    // `1 − ε/2 − √(1 − ε)` without the cancellation at small `ε`.
    let budget = 0.25 * eps * eps / (1.0 - 0.5 * eps + (1.0 - eps).sqrt());
    let s = delta1 + delta2;
    let pass = s <= budget;
    let delta3 = pass.then(|| {
        let b = 2.0 * s + eps;
        let disc = (b * b - 8.0 * s).max(0.0);
        0.5 * (b + disc.sqrt())
    });
    Ok(DsBudget { budget, pass, delta3 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub frequency: f64,
    pub rows: usize,
    pub identity_holds: bool,
    pub violations: usize,
}

/// `Ψ_L = 1 − (N₋² + N₊²)/N²`, the fraction of site pairs not both in the
/// same good region.
pub fn psi_l(n_minus: usize, n_plus: usize, sites: usize) -> f64 {
    let n2 = (sites as f64).powi(2);
    1.0 - ((n_minus * n_minus + n_plus * n_plus) as f64) / n2
}

/// `max{Π₋, Π₊} ≥ 1 − Ψ_L` per row, checked in integers as
/// `N·max{N₋, N₊} ≥ N₋² + N₊²`.
pub fn ds_identity(n_minus: usize, n_plus: usize, sites: usize) -> bool {
    let (a, b, n) = (n_minus as u128, n_plus as u128, sites as u128);
    n * a.max(b) >= a * a + b * b
}

/// Empirical frequency of `max{Π₋, Π₊} ≥ 1 − δ₃` over the rows, and the
/// per-row identity check.
pub fn ergodic_density_bound(rows: &[TraceRow], sites: usize, delta3: f64) -> Result<ErgodicReport> {
    if rows.is_empty() || sites == 0 {
        return domain("empty trace");
    }
    if rows.iter().any(|r| r.n_minus + r.n_plus > sites) {
        return domain("region counts exceed the number of sites");
    }
    let n = sites as f64;
    let hits = rows.iter().filter(|r| r.n_minus.max(r.n_plus) as f64 / n >= 1.0 - delta3).count();
    let violations = rows.iter().filter(|r| !ds_identity(r.n_minus, r.n_plus, sites)).count();
    Ok(ErgodicReport {
        frequency: hits as f64 / rows.len() as f64,
        rows: rows.len(),
        identity_holds: violations == 0,
        violations,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::meanfield::{find_coexistence, MeanFieldOptions};

    pub(crate) fn double_well() -> FreeEnergySpec {
        let n = 4001;
        let rho: Vec<f64> = (0..n).map(|i| 4.0 * i as f64 / (n - 1) as f64).collect();
        let f = rho.iter().map(|r| (r - 1.0f64).powi(2) * (r - 3.0f64).powi(2)).collect();
        FreeEnergySpec::tabulated_limit(rho, f, 1.0)
    }

    #[test]
    fn double_well_regions_are_single_intervals() {
        let spec = double_well();
        let a = find_coexistence(&spec, 0.0, &MeanFieldOptions::default()).unwrap();
        let g = build_good_regions(&a, &spec, Some(0.01), None).unwrap();
        assert_eq!(g.g_minus.len(), 1);
        assert_eq!(g.g_plus.len(), 1);
        // (ρ−1)²(ρ−3)² ≤ δ near ρ = 1 reads |(ρ−2)² − 1| ≤ √δ.
        let exact_lo = 2.0 - (1.0 + 0.1f64).sqrt();
        let exact_hi = 2.0 - (1.0 - 0.1f64).sqrt();
        assert!((g.g_minus[0][0] - exact_lo).abs() < 1e-5, "{:?}", g.g_minus);
        assert!((g.g_minus[0][1] - exact_hi).abs() < 1e-5, "{:?}", g.g_minus);
        assert!((g.g_plus[0][0] - (4.0 - exact_hi)).abs() < 1e-5);
        assert!((g.g_plus[0][1] - (4.0 - exact_lo)).abs() < 1e-5);
        assert!(g.i_delta.is_none());
        assert!(g.gap > 0.0);
    }

    #[test]
    fn regions_shrink_with_delta() {
        let spec = double_well();
        let a = find_coexistence(&spec, 0.0, &MeanFieldOptions::default()).unwrap();
        let mut prev = f64::INFINITY;
        for d in [0.5, 0.2, 0.05, 0.01] {
            let g = build_good_regions(&a, &spec, Some(d), None).unwrap();
            let len = g.g_minus[0][1] - g.g_minus[0][0];
            assert!(len < prev);
            prev = len;
        }
    }

    #[test]
    fn delta_cap_is_named() {
        let spec = double_well();
        let a = find_coexistence(&spec, 0.0, &MeanFieldOptions::default()).unwrap();
        let Err(Error::Config(msg)) = build_good_regions(&a, &spec, Some(1.5), None) else { panic!() };
        assert!(msg.contains("violates the cap phi(rho_zero)"), "{msg}");
        let Err(Error::Config(msg)) = build_good_regions(&a, &spec, None, Some(0.9)) else { panic!() };
        assert!(msg.contains("kappa"), "{msg}");
    }

    #[test]
    fn ds_budget_examples() {
        let b = ds_budget(0.5, 0.0, 0.0).unwrap();
        assert!((b.budget - 0.042_893_218_813_452_5).abs() < 1e-12);
        assert!(b.pass);
        assert!((b.delta3.unwrap() - 0.5).abs() < 1e-15);
        assert!(ds_budget(0.3, b.budget, 0.0).is_ok());
        let at = ds_budget(0.5, b.budget, 0.0).unwrap();
        assert!(at.pass);
        assert!(!ds_budget(0.5, b.budget + 1e-9, 0.0).unwrap().pass);
        assert!(ds_budget(0.5 + 1e-12, 0.0, 0.0).is_err());
        assert!(ds_budget(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn psi_identity_examples() {
        assert_eq!(psi_l(4, 0, 4), 0.0);
        assert!(ds_identity(4, 0, 4));
        assert!(ds_identity(0, 0, 4));
        assert!(ds_identity(2, 2, 4));
        let rows: Vec<TraceRow> = (0..10)
            .map(|i| TraceRow { chain: 0, sweep: i, mean_density: 0.0, energy: 0.0, n_minus: 10, n_plus: 0 })
            .collect();
        let r = ergodic_density_bound(&rows, 10, 0.01).unwrap();
        assert_eq!(r.frequency, 1.0);
        assert!(r.identity_holds);
        assert!(ergodic_density_bound(&[], 10, 0.1).is_err());
    }

    #[test]
    fn mixed_rows_are_row_dependent() {
        // N = 10 with (N₋, N₊) = (8, 1) gives Ψ = 0.35; (9, 0) gives Ψ = 0.19.
        let mk = |a, b| TraceRow { chain: 0, sweep: 0, mean_density: 0.0, energy: 0.0, n_minus: a, n_plus: b };
        let rows = vec![mk(8, 1), mk(9, 0), mk(5, 5)];
        let r = ergodic_density_bound(&rows, 10, 0.2).unwrap();
        assert!((r.frequency - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.identity_holds);
    }
}
