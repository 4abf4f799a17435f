//! Mean-field layer: `φ_λ(ρ) = −λρ − (α/2)ρ² + f(ρ)`, convex envelopes,
//! the double-tangent construction and the Gates–Penrose pressure.

mod spec;

pub use spec::{Case, FreeEnergyKind, FreeEnergySpec, ScaleFn, ScaleTable};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{adaptive_simpson, refine_grid_min};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanFieldOptions {
    pub grid_points: usize,
    pub lambda_tol: f64,
    pub value_tol: f64,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions { grid_points: 4096, lambda_tol: 1e-10, value_tol: 1e-9 }
    }
}

/// One row of the envelope artifact.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EnvelopePoint {
    pub rho: f64,
    pub phi: f64,
    pub ce: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Nonconvexity {
    pub flag: bool,
    pub witness: Option<[f64; 2]>,
    pub max_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeanFieldAnalysis {
    pub alpha: f64,
    pub lambda_star: f64,
    pub m_star: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub rho_zero: f64,
    /// Grid points within tolerance of the minimum, plus the polished minimizers.
    pub minimizers: Vec<f64>,
    pub nonconvex: bool,
    pub witness: Option<[f64; 2]>,
    #[serde(skip)]
    pub envelope: Vec<EnvelopePoint>,
}

/// `φ_λ` with the free energy resolved once.
#[derive(Clone, Debug)]
pub struct Phi {
    f: ScaleFn,
    alpha: f64,
}

impl Phi {
    pub fn new(spec: &FreeEnergySpec, alpha: f64) -> Result<Self> {
        spec.validate()?;
        spec.check_alpha(alpha)?;
        Ok(Phi { f: spec.limit_fn()?, alpha })
    }

    pub fn at(&self, lambda: f64, rho: f64) -> f64 {
        let f = self.f.eval(rho);
        if f == f64::INFINITY {
            return f64::INFINITY;
        }
        -lambda * rho - 0.5 * self.alpha * rho * rho + f
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn eval_phi(spec: &FreeEnergySpec, alpha: f64, lambda: f64, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return domain(format!("negative density {rho}"));
    }
    Ok(Phi::new(spec, alpha)?.at(lambda, rho))
}

/// Right end of the density window on which `φ_λ` is minimized.
///
/// Hard core: `ρ_cp`. Tabulated soft core: the end of the limit table.
/// Analytic soft core: doubled until `φ_λ` exceeds `φ_λ(0) + 10` and is
/// increasing there.
pub fn domain_upper(spec: &FreeEnergySpec, phi: &Phi, lambda: f64) -> Result<f64> {
    if let Some(cp) = spec.rho_cp.filter(|_| spec.is_hard_core()) {
        return Ok(cp);
    }
    if let FreeEnergyKind::Tabulated { tables } = &spec.kind {
        let t = tables.iter().find(|t| t.gamma == 0.0).ok_or_else(|| Error::Config("no limit table".into()))?;
        return Ok(*t.rho.last().unwrap());
    }
    let base = phi.at(lambda, 0.0);
    let mut r = 1.0;
    for _ in 0..64 {
        let v = phi.at(lambda, r);
        if v > base + 10.0 && phi.at(lambda, 2.0 * r) > v {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::IllDefined("phi_lambda is not bounded below on [0, inf)".into()))
}

/// Uniform density grid and `φ₀ = φ_{λ=0}` on it.
pub fn phi_grid(phi: &Phi, upper: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = upper / (n - 1) as f64;
    let rho: Vec<f64> = (0..n).map(|i| if i + 1 == n { upper } else { h * i as f64 }).collect();
    let vals = rho.iter().map(|&r| phi.at(0.0, r)).collect();
    (rho, vals)
}

fn finite_prefix(values: &[(f64, f64)]) -> Result<usize> {
    let n = values.iter().take_while(|p| p.1.is_finite()).count();
    if values[n..].iter().any(|p| p.1.is_finite()) {
        return domain("infinite value inside the grid");
    }
    if n < 2 {
        return domain("convex envelope needs at least two finite points");
    }
    Ok(n)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the lower convex hull vertices (monotone chain).
fn lower_hull(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        while hull.len() >= 2 && cross(pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]], pts[i]) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull
}

/// Largest convex minorant of a sorted grid function, restricted to the grid.
/// A trailing `+∞` region is dropped before the hull is taken.
pub fn convex_envelope(values: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let n = finite_prefix(values)?;
    let pts = &values[..n];
    let hull = lower_hull(pts);
    let mut out = Vec::with_capacity(n);
    for w in hull.windows(2) {
        let (a, b) = (pts[w[0]], pts[w[1]]);
        let slope = (b.1 - a.1) / (b.0 - a.0);
        for p in &pts[w[0]..w[1]] {
            out.push((p.0, (a.1 + slope * (p.0 - a.0)).min(p.1)));
        }
    }
    out.push(pts[n - 1]);
    Ok(out)
}

fn nonconvexity_on(rho: &[f64], vals: &[f64], tol: f64) -> Result<(Nonconvexity, Vec<f64>)> {
    let pts: Vec<(f64, f64)> = rho.iter().copied().zip(vals.iter().copied()).collect();
    let ce = convex_envelope(&pts)?;
    let gap: Vec<f64> = ce.iter().zip(vals).map(|(c, v)| v - c.1).collect();
    let (imax, max_gap) =
        gap.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, g)| if g > b.1 { (i, g) } else { b });
    if max_gap <= tol {
        return Ok((Nonconvexity { flag: false, witness: None, max_gap: max_gap.max(0.0) }, gap));
    }
    let mut lo = imax;
    while lo > 0 && gap[lo - 1] > tol {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < gap.len() && gap[hi + 1] > tol {
        hi += 1;
    }
    Ok((Nonconvexity { flag: true, witness: Some([rho[lo], rho[hi]]), max_gap }, gap))
}

pub fn detect_nonconvexity(spec: &FreeEnergySpec, alpha: f64, opts: &MeanFieldOptions) -> Result<Nonconvexity> {
    detect_nonconvexity_at(spec, alpha, 0.0, opts)
}

/// Non-convexity test on `φ_λ`; the grid does not depend on `λ`.
pub fn detect_nonconvexity_at(
    spec: &FreeEnergySpec,
    alpha: f64,
    lambda: f64,
    opts: &MeanFieldOptions,
) -> Result<Nonconvexity> {
    let phi = Phi::new(spec, alpha)?;
    let upper = domain_upper(spec, &phi, 0.0)?;
    let (rho, vals) = phi_grid(&phi, upper, opts.grid_points);
    let shifted: Vec<f64> = rho.iter().zip(&vals).map(|(r, v)| v - lambda * r).collect();
    Ok(nonconvexity_on(&rho, &shifted, opts.value_tol)?.0)
}

struct Basins<'a> {
    phi: &'a Phi,
    rho: &'a [f64],
    phi0: &'a [f64],
    split: usize,
    last: usize,
}

impl Basins<'_> {
    fn min_in(&self, lambda: f64, lo: usize, hi: usize) -> (f64, f64) {
        let vals: Vec<f64> = self.rho.iter().zip(self.phi0).map(|(r, v)| v - lambda * r).collect();
        refine_grid_min(&|x| self.phi.at(lambda, x), self.rho, &vals, lo, hi)
    }

    fn left(&self, lambda: f64) -> (f64, f64) {
        self.min_in(lambda, 0, self.split)
    }

    fn right(&self, lambda: f64) -> (f64, f64) {
        self.min_in(lambda, self.split, self.last)
    }

    fn diff(&self, lambda: f64) -> f64 {
        self.left(lambda).1 - self.right(lambda).1
    }
}

/// Double-tangent construction by bisection on `λ` over the difference
/// of the two basin minima.
pub fn find_coexistence(spec: &FreeEnergySpec, alpha: f64, opts: &MeanFieldOptions) -> Result<MeanFieldAnalysis> {
    let phi = Phi::new(spec, alpha)?;
    let upper = domain_upper(spec, &phi, 0.0)?;
    let (rho, phi0) = phi_grid(&phi, upper, opts.grid_points);
    let pts: Vec<(f64, f64)> = rho.iter().copied().zip(phi0.iter().copied()).collect();
    let last = finite_prefix(&pts)? - 1;
    let (nc, gap) = nonconvexity_on(&rho, &phi0, opts.value_tol)?;
    if !nc.flag {
        return Err(Error::NoCoexistence("phi is convex on the grid".into()));
    }
    let split = gap.iter().enumerate().fold(0, |b, (i, g)| if *g > gap[b] { i } else { b });

    // Initial guess: slope of the hull edge spanning the split point.
    let ce = convex_envelope(&pts)?;
    let (mut a, mut b) = (split, split);
    while a > 0 && gap[a] > opts.value_tol {
        a -= 1;
    }
    while b < last && gap[b] > opts.value_tol {
        b += 1;
    }
    let lambda0 = (ce[b].1 - ce[a].1) / (rho[b] - rho[a]);

    let basins = Basins { phi: &phi, rho: &rho, phi0: &phi0, split, last };
    let mut h = 1e-3 * (1.0 + lambda0.abs());
    let (mut lo, mut hi) = (lambda0 - h, lambda0 + h);
    let mut bracketed = false;
    for _ in 0..60 {
        let (dl, dh) = (basins.diff(lo), basins.diff(hi));
        if dl < 0.0 && dh > 0.0 {
            bracketed = true;
            break;
        }
        h *= 2.0;
        if dl >= 0.0 {
            lo = lambda0 - h;
        }
        if dh <= 0.0 {
            hi = lambda0 + h;
        }
    }
    if !bracketed {
        return Err(Error::NoCoexistence("basin minima never exchange order".into()));
    }
    while hi - lo > opts.lambda_tol {
        let mid = 0.5 * (lo + hi);
        if basins.diff(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda_star = 0.5 * (lo + hi);
    let (rl, vl) = basins.left(lambda_star);
    let (rr, vr) = basins.right(lambda_star);
    let m_star = vl.min(vr);

    let phis: Vec<f64> = rho.iter().zip(&phi0).map(|(r, v)| v - lambda_star * r).collect();
    let mut minimizers: Vec<f64> = rho[..=last]
        .iter()
        .zip(&phis)
        .filter(|(_, v)| **v <= m_star + opts.value_tol)
        .map(|(r, _)| *r)
        .chain([rl, rr])
        .collect();
    minimizers.sort_by(f64::total_cmp);
    minimizers.dedup();
    let rho_minus = minimizers[0];
    let rho_plus = *minimizers.last().unwrap();

    let mut izero = None;
    for i in 0..=last {
        if rho[i] > rho_minus && rho[i] < rho_plus && izero.is_none_or(|j: usize| phis[i] > phis[j]) {
            izero = Some(i);
        }
    }
    let izero = izero.ok_or(Error::FlatCoexistence)?;
    if phis[izero] <= m_star + 10.0 * opts.value_tol {
        return Err(Error::FlatCoexistence);
    }

    let shifted: Vec<(f64, f64)> = rho.iter().copied().zip(phis.iter().copied()).collect();
    let env = convex_envelope(&shifted)?;
    let envelope = env.iter().zip(&phis).map(|(c, v)| EnvelopePoint { rho: c.0, phi: *v, ce: c.1 }).collect();

    Ok(MeanFieldAnalysis {
        alpha,
        lambda_star,
        m_star,
        rho_minus,
        rho_plus,
        rho_zero: rho[izero],
        minimizers,
        nonconvex: true,
        witness: nc.witness,
        envelope,
    })
}

/// `(argmin, min)` of `φ_λ` over the minimization window, polished.
pub fn minimize_phi(spec: &FreeEnergySpec, alpha: f64, lambda: f64, opts: &MeanFieldOptions) -> Result<(f64, f64)> {
    let phi = Phi::new(spec, alpha)?;
    let upper = domain_upper(spec, &phi, lambda)?;
    let (rho, phi0) = phi_grid(&phi, upper, opts.grid_points);
    let vals: Vec<f64> = rho.iter().zip(&phi0).map(|(r, v)| v - lambda * r).collect();
    Ok(refine_grid_min(&|x| phi.at(lambda, x), &rho, &vals, 0, rho.len() - 1))
}

/// `−inf_ρ φ_λ(ρ)`.
pub fn gates_penrose_pressure(spec: &FreeEnergySpec, alpha: f64, lambda: f64, opts: &MeanFieldOptions) -> Result<f64> {
    Ok(-minimize_phi(spec, alpha, lambda, opts)?.1)
}

/// `Tρ/(1−ρb) − aρ²/2`.
pub fn vdw_pressure(t: f64, rho: f64, a: f64, b: f64) -> Result<f64> {
    if !(rho >= 0.0) || rho * b >= 1.0 {
        return domain(format!("density {rho} outside [0, 1/b)"));
    }
    Ok(t * rho / (1.0 - rho * b) - 0.5 * a * rho * rho)
}

/// `ρ² d/dρ [f(ρ)/ρ]` by central differences on a sorted grid; between
/// nodes the nodal derivatives are interpolated linearly.
pub fn pressure_from_free_energy(fvals: &[(f64, f64)], rho: f64) -> Result<f64> {
    let n = fvals.len();
    if n < 3 || !(rho > fvals[0].0 && rho < fvals[n - 1].0) {
        return domain(format!("density {rho} is not interior to the grid"));
    }
    let deriv = |i: usize| -> Result<f64> {
        if i == 0 || i + 1 >= n {
            return domain(format!("density {rho} touches the grid boundary"));
        }
        let (r0, f0) = fvals[i - 1];
        let (r1, f1) = fvals[i + 1];
        if r0 <= 0.0 || !f0.is_finite() || !f1.is_finite() {
            return domain(format!("free energy not finite near {rho}"));
        }
        Ok((f1 / r1 - f0 / r0) / (r1 - r0))
    };
    let j = fvals.partition_point(|p| p.0 <= rho);
    let (x0, x1) = (fvals[j - 1].0, fvals[j].0);
    let d = if (rho - x0).abs() <= 1e-12 * rho.max(1.0) {
        deriv(j - 1)?
    } else {
        let (d0, d1) = (deriv(j - 1)?, deriv(j)?);
        d0 + (d1 - d0) * (rho - x0) / (x1 - x0)
    };
    Ok(rho * rho * d)
}

/// Mean of the isotherm `p(v) = vdw_pressure(T, 1/v, a, b)` over
/// `v ∈ [1/ρ₊, 1/ρ₋]`; equals the coexistence pressure under the
/// equal-area rule.
pub fn equal_area_mean_pressure(t: f64, a: f64, b: f64, rho_minus: f64, rho_plus: f64) -> Result<f64> {
    let (vl, vv) = (1.0 / rho_plus, 1.0 / rho_minus);
    if !(vl > b && vv > vl) {
        return domain("isotherm endpoints out of order");
    }
    let p = |v: f64| vdw_pressure(t, 1.0 / v, a, b).unwrap_or(f64::NAN);
    let area = adaptive_simpson(p, vl, vv, 1e-12);
    Ok(area / (vv - vl))
}

/// Pressure read off the flat envelope segment: `−(CE φ₀(ρ) − λ*ρ)` on the
/// segment, i.e. minus the tangent's intercept.
pub fn flat_segment_pressure(analysis: &MeanFieldAnalysis) -> f64 {
    let mid = 0.5 * (analysis.rho_minus + analysis.rho_plus);
    let p = analysis
        .envelope
        .iter()
        .min_by(|a, b| (a.rho - mid).abs().total_cmp(&(b.rho - mid).abs()))
        .expect("envelope present");
    -p.ce
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_well() -> FreeEnergySpec {
        let n = 4001;
        let rho: Vec<f64> = (0..n).map(|i| 4.0 * i as f64 / (n - 1) as f64).collect();
        let f = rho.iter().map(|r| (r - 1.0f64).powi(2) * (r - 3.0f64).powi(2)).collect();
        FreeEnergySpec::tabulated_limit(rho, f, 1.0)
    }

    #[test]
    fn phi_at_zero_is_f_of_zero() {
        let s = FreeEnergySpec::tonks(1.0, 1.0);
        assert_eq!(eval_phi(&s, 4.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(eval_phi(&double_well(), 0.0, 5.0, 0.0).unwrap(), 9.0);
    }

    #[test]
    fn phi_rejects_negative_density_and_bad_alpha() {
        let s = FreeEnergySpec::ideal_gas(1.0);
        assert!(matches!(eval_phi(&s, 0.0, 0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(eval_phi(&s, 1.0, 0.0, 1.0), Err(Error::IllDefined(_))));
    }

    #[test]
    fn hard_core_beyond_rho_max_is_infinite() {
        let s = FreeEnergySpec::tonks(1.0, 1.0);
        assert_eq!(eval_phi(&s, 4.0, 0.0, s.rho_max.unwrap() + 0.1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn envelope_of_convex_and_two_point_grids() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 / 10.0, (i as f64 / 10.0).powi(2))).collect();
        for (c, p) in convex_envelope(&pts).unwrap().iter().zip(&pts) {
            assert_eq!(c.1, p.1);
        }
        let two = convex_envelope(&[(0.0, 1.0), (2.0, 5.0)]).unwrap();
        assert_eq!(two, vec![(0.0, 1.0), (2.0, 5.0)]);
        assert!(convex_envelope(&[(0.0, 1.0), (1.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn envelope_drops_trailing_infinity() {
        let pts = [(0.0, 0.0), (1.0, -1.0), (2.0, 0.0), (3.0, f64::INFINITY)];
        assert_eq!(convex_envelope(&pts).unwrap().len(), 3);
        let bad = [(0.0, 0.0), (1.0, f64::INFINITY), (2.0, 0.0)];
        assert!(convex_envelope(&bad).is_err());
    }

    #[test]
    fn ideal_gas_is_convex() {
        let nc = detect_nonconvexity(&FreeEnergySpec::ideal_gas(1.0), 0.0, &MeanFieldOptions::default()).unwrap();
        assert!(!nc.flag);
    }

    #[test]
    fn nonconvexity_ignores_linear_shift() {
        let s = FreeEnergySpec::tonks(1.0, 1.0);
        let o = MeanFieldOptions::default();
        let a = detect_nonconvexity_at(&s, 10.0, 0.0, &o).unwrap();
        let b = detect_nonconvexity_at(&s, 10.0, 7.0, &o).unwrap();
        assert!(a.flag);
        assert_eq!(a.flag, b.flag);
        assert_eq!(a.witness, b.witness);
    }

    #[test]
    fn symmetric_double_well_coexistence() {
        let a = find_coexistence(&double_well(), 0.0, &MeanFieldOptions::default()).unwrap();
        assert!(a.lambda_star.abs() < 1e-8, "{}", a.lambda_star);
        assert!((a.rho_minus - 1.0).abs() < 1e-6);
        assert!((a.rho_plus - 3.0).abs() < 1e-6);
        assert!(a.m_star.abs() < 1e-9);
        assert!((a.rho_zero - 2.0).abs() < 1e-2);
    }

    #[test]
    fn constant_shift_moves_only_m_star() {
        let base = double_well();
        let FreeEnergyKind::Tabulated { tables } = &base.kind else { unreachable!() };
        let t = &tables[0];
        let shifted =
            FreeEnergySpec::tabulated_limit(t.rho.clone(), t.values().iter().map(|v| v + 0.75).collect(), 1.0);
        let o = MeanFieldOptions::default();
        let (a, b) = (find_coexistence(&base, 0.0, &o).unwrap(), find_coexistence(&shifted, 0.0, &o).unwrap());
        assert!((b.m_star - a.m_star - 0.75).abs() < 1e-9);
        assert!((a.lambda_star - b.lambda_star).abs() < 1e-9);
        assert!((a.rho_minus - b.rho_minus).abs() < 1e-9);
        assert!((a.rho_plus - b.rho_plus).abs() < 1e-9);
    }

    #[test]
    fn convex_case_reports_no_coexistence() {
        let r = find_coexistence(&FreeEnergySpec::ideal_gas(1.0), 0.0, &MeanFieldOptions::default());
        assert!(matches!(r, Err(Error::NoCoexistence(_))));
    }

    #[test]
    fn gates_penrose_basics() {
        let o = MeanFieldOptions::default();
        let s = FreeEnergySpec::tonks(1.0, 1.0);
        assert!(gates_penrose_pressure(&s, 10.0, -60.0, &o).unwrap().abs() < 1e-20);
        let a = find_coexistence(&s, 10.0, &o).unwrap();
        let p = gates_penrose_pressure(&s, 10.0, a.lambda_star, &o).unwrap();
        assert!((p + a.m_star).abs() < 1e-9);
    }

    #[test]
    fn vdw_cases() {
        assert_eq!(vdw_pressure(1.0, 0.0, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(vdw_pressure(1.0, 0.5, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(vdw_pressure(1.0, 1.0, 2.0, 0.0).unwrap(), 0.0);
        assert!(vdw_pressure(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn pressure_from_linear_free_energy_vanishes() {
        let g: Vec<(f64, f64)> = (1..100).map(|i| (i as f64 * 0.01, 3.0 * i as f64 * 0.01)).collect();
        assert!(pressure_from_free_energy(&g, 0.5).unwrap().abs() < 1e-12);
        assert!(pressure_from_free_energy(&g, 0.01).is_err());
    }

    #[test]
    fn pressure_from_free_energy_matches_closed_forms() {
        let tonks = FreeEnergySpec::tonks(1.0, 1.0).limit_fn().unwrap();
        let g: Vec<(f64, f64)> = (1..900)
            .map(|i| {
                let r = i as f64 * 1e-3;
                (r, tonks.eval(r))
            })
            .collect();
        assert!((pressure_from_free_energy(&g, 0.25).unwrap() - 1.0 / 3.0).abs() < 1e-4);
        let ideal = FreeEnergySpec::ideal_gas(1.0).limit_fn().unwrap();
        let g: Vec<(f64, f64)> = (1..900)
            .map(|i| {
                let r = i as f64 * 1e-3;
                (r, ideal.eval(r))
            })
            .collect();
        assert!((pressure_from_free_energy(&g, 0.5).unwrap() - 0.5).abs() < 1e-4);
    }
}
