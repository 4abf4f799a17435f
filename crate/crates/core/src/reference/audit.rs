use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::PairPotential;
use crate::error::{config, domain, Error, Result};
use crate::meanfield::{Case, FreeEnergyKind, FreeEnergySpec, ScaleTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    /// Right end of the uniform-convergence window; defaults to `0.9ρ_cp`
    /// (hard core) or half the common table range (soft core).
    #[serde(default)]
    pub rho0: Option<f64>,
    /// Left end of the region above close packing; defaults to midway
    /// between `ρ_cp` and `ρ_max`.
    #[serde(default)]
    pub rho1: Option<f64>,
    pub tol: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions { rho0: None, rho1: None, tol: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub gammas: Vec<f64>,
    pub sup_distance: Vec<f64>,
    pub uniform_pass: bool,
    pub near_cp_min: Option<Vec<f64>>,
    pub near_cp_pass: Option<bool>,
    pub above_cp_inf: Option<Vec<f64>>,
    pub above_cp_pass: Option<bool>,
    pub alpha_max_estimate: f64,
    pub growth_pass: bool,
}

fn tables_of(spec: &FreeEnergySpec) -> Result<Vec<&ScaleTable>> {
    match &spec.kind {
        FreeEnergyKind::Tabulated { tables } => {
            let mut t: Vec<&ScaleTable> = tables.iter().filter(|t| t.gamma > 0.0).collect();
            t.sort_by(|a, b| b.gamma.total_cmp(&a.gamma));
            Ok(t)
        }
        _ => config("convergence checks need tabulated free energies"),
    }
}

/// Nonincreasing up to `tol`, treating `∞ ≤ ∞`.
fn nonincreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + tol || (w[0].is_infinite() && w[1].is_infinite()))
}

fn nondecreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Least-squares fit of `f/(ρ²/2)` on `{1, 1/ρ, log ρ/ρ}` over the upper
/// half of the finite range; the constant is the large-`ρ` limit.
fn quadratic_growth(t: &ScaleTable) -> f64 {
    let pts: Vec<(f64, f64)> =
        t.rho.iter().zip(t.values()).filter(|(r, f)| **r > 0.0 && f.is_finite()).map(|(r, f)| (*r, f)).collect();
    if t.values().iter().any(|f| f.is_infinite()) {
        return f64::INFINITY;
    }
    let top = pts.last().map(|p| p.0).unwrap_or(0.0);
    let use_pts: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.0 >= 0.5 * top).collect();
    if use_pts.len() < 3 {
        return f64::NAN;
    }
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(r, f) in &use_pts {
        let y = f / (0.5 * r * r);
        let x = [1.0, 1.0 / r, r.ln() / r];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += x[i] * x[j];
            }
            b[i] += x[i] * y;
        }
    }
    solve3(a, b)[0]
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let m = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= m * a[c][k];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        x[c] = (b[c] - (c + 1..3).map(|k| a[c][k] * x[k]).sum::<f64>()) / a[c][c];
    }
    x
}

/// Empirical checks of the convergence and growth assumptions over the
/// tabulated `γ` values, ordered from coarse to fine.
pub fn check_convergence_assumptions(
    tables: &FreeEnergySpec,
    limit: &FreeEnergySpec,
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    let ts = tables_of(tables)?;
    if ts.len() < 3 {
        return config(format!("need at least 3 tabulated gamma values, got {}", ts.len()));
    }
    let lim = limit.limit_fn()?;
    let hard = tables.is_hard_core();
    let common_top = ts.iter().map(|t| t.rho[t.rho.len() - 1]).fold(f64::INFINITY, f64::min);
    let rho0 = opts.rho0.unwrap_or_else(|| match tables.rho_cp {
        Some(cp) if hard => 0.9 * cp,
        _ => 0.5 * common_top,
    });
    let err_of = |t: &ScaleTable, i: usize| t.stderr.as_ref().map_or(0.0, |s| s[i]);

    let mut sup_distance = Vec::new();
    let mut slack: f64 = opts.tol;
    for t in &ts {
        let mut worst: f64 = 0.0;
        for (i, (&r, f)) in t.rho.iter().zip(t.values()).enumerate() {
            if r > rho0 {
                break;
            }
            let g = lim.eval(r);
            let dist = if f.is_infinite() || g.is_infinite() {
                if f == g {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (f - g).abs()
            };
            worst = worst.max(dist);
            slack = slack.max(opts.tol + 3.0 * err_of(t, i));
        }
        sup_distance.push(worst);
    }
    let uniform_pass = nonincreasing(&sup_distance, slack) && sup_distance.iter().all(|d| d.is_finite());

    let (mut near_cp_min, mut near_cp_pass, mut above_cp_inf, mut above_cp_pass) = (None, None, None, None);
    if let (true, Some(cp)) = (hard, tables.rho_cp) {
        let mins: Vec<f64> = ts
            .iter()
            .map(|t| {
                let r = t.gamma.powf(0.5 * dim_of(t));
                t.rho
                    .iter()
                    .zip(t.values())
                    .filter(|(x, _)| (**x - cp).abs() <= r)
                    .map(|(_, f)| f)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let at_cp = limit.limit(cp).unwrap_or(f64::INFINITY);
        near_cp_pass = Some(if at_cp.is_finite() {
            mins[mins.len() - 1] >= at_cp - opts.tol
        } else {
            nondecreasing(&mins, opts.tol) && mins[mins.len() - 1] > mins[0]
        });
        near_cp_min = Some(mins);

        let top = tables.rho_max.unwrap_or(common_top).min(common_top);
        let rho1 = opts.rho1.unwrap_or(0.5 * (cp + top));
        let infs: Vec<f64> = ts
            .iter()
            .map(|t| {
                t.rho.iter().zip(t.values()).filter(|(x, _)| **x >= rho1).map(|(_, f)| f).fold(f64::INFINITY, f64::min)
            })
            .collect();
        let last = infs[infs.len() - 1];
        above_cp_pass = Some(nondecreasing(&infs, opts.tol) && (last.is_infinite() || last > infs[0]));
        above_cp_inf = Some(infs);
    }

    let alpha_max_estimate = if hard {
        f64::INFINITY
    } else {
        ts.iter().map(|t| quadratic_growth(t)).filter(|a| !a.is_nan()).fold(f64::INFINITY, f64::min).max(0.0)
    };
    let growth_pass = alpha_max_estimate > opts.tol;
    Ok(ConvergenceReport {
        gammas: ts.iter().map(|t| t.gamma).collect(),
        sup_distance,
        uniform_pass,
        near_cp_min,
        near_cp_pass,
        above_cp_inf,
        above_cp_pass,
        alpha_max_estimate,
        growth_pass,
    })
}

/// Lattice dimension implied by the node spacing `γ^d`.
fn dim_of(t: &ScaleTable) -> f64 {
    let h = t.rho[1] - t.rho[0];
    (h.ln() / t.gamma.ln()).round().max(1.0)
}

/// Exact hard-rod tables: centers in a box of length `γ^{−1}`, pairwise at
/// least `b` apart, so `∫ = (γ^{−1} − (N−1)b)_+^N`.
pub fn exact_hard_rod_spec(b: f64, gammas: &[f64], beta: f64, rho_max: f64) -> Result<FreeEnergySpec> {
    if !(b > 0.0) || !(rho_max > 1.0 / b) {
        return config("hard rods need b > 0 and rho_max above close packing");
    }
    let tables = gammas
        .iter()
        .map(|&g| {
            let ell = 1.0 / g;
            let top = (rho_max / g * (1.0 + 1e-12)).floor() as usize;
            let mut lnfact = 0.0;
            let mut rho = Vec::new();
            let mut f = Vec::new();
            for n in 0..=top {
                if n > 0 {
                    lnfact += (n as f64).ln();
                }
                rho.push(n as f64 * g);
                let free = ell - (n as f64 - 1.0).max(0.0) * b;
                f.push(if n == 0 {
                    Some(0.0)
                } else if free <= 0.0 {
                    None
                } else {
                    Some(-g / beta * (n as f64 * free.ln() - lnfact))
                });
            }
            ScaleTable { gamma: g, rho, f, stderr: None }
        })
        .collect();
    Ok(FreeEnergySpec {
        kind: FreeEnergyKind::Tabulated { tables },
        case: Case::HardCore,
        rho_cp: Some(1.0 / b),
        rho_max: Some(rho_max),
        alpha_max: None,
        beta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_rho: f64,
    pub worst_gamma: f64,
}

/// `f_γ(ρ) ≥ ρ(ρC − D + (log ρ − 1)/β)` at every tabulated node, each
/// node allowed one standard error. Analytic kinds are checked on a grid
/// reaching past `D/C`, where a violation would first show.
pub fn check_superstability_bound(spec: &FreeEnergySpec, c: f64, d: f64, beta: f64) -> Result<BoundReport> {
    if !(c > 0.0) || !(d >= 0.0) {
        return domain("superstability needs C > 0 and D >= 0");
    }
    let rhs = |r: f64| if r == 0.0 { 0.0 } else { r * (r * c - d + (r.ln() - 1.0) / beta) };
    let mut rep = BoundReport { pass: true, worst_margin: f64::INFINITY, worst_rho: 0.0, worst_gamma: 0.0 };
    let mut visit = |gamma: f64, r: f64, f: f64, se: f64| {
        let margin = f + se - rhs(r);
        if margin < rep.worst_margin {
            rep = BoundReport { pass: margin >= 0.0, worst_margin: margin, worst_rho: r, worst_gamma: gamma };
        }
    };
    match &spec.kind {
        FreeEnergyKind::Tabulated { tables } => {
            for t in tables {
                for (i, (&r, f)) in t.rho.iter().zip(t.values()).enumerate() {
                    visit(t.gamma, r, f, t.stderr.as_ref().map_or(0.0, |s| s[i]));
                }
            }
        }
        _ => {
            let lim = spec.limit_fn()?;
            let hi = spec.rho_max.unwrap_or_else(|| 50.0f64.max(2.0 * d / c + 1.0));
            for i in 0..=4000 {
                let r = hi * i as f64 / 4000.0;
                visit(0.0, r, lim.eval(r), 0.0);
            }
        }
    }
    Ok(rep)
}

/// A continuous radial function on a uniform grid starting at `r = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub r: Vec<f64>,
    pub phi0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub pass: bool,
    pub fourier_min: f64,
    pub fourier_ok: bool,
    pub integral: f64,
    pub integral_ok: bool,
    pub c: f64,
    pub d: f64,
}

/// `J₀(x) = (1/π)∫_0^π cos(x sin t) dt` by the (spectrally accurate)
/// periodic trapezoid rule, switching to the Hankel expansion for large x.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 20.0 {
        let n = 96;
        (0..n).map(|k| (x * (PI * k as f64 / n as f64).sin()).cos()).sum::<f64>() / n as f64
    } else {
        let chi = x - 0.25 * PI;
        let x2 = x * x;
        let p = 1.0 - 9.0 / (128.0 * x2) + 3675.0 / (32768.0 * x2 * x2);
        let q = -1.0 / (8.0 * x) + 75.0 / (1024.0 * x2 * x);
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// In two dimensions the radial integrand `r·g(r)` has slope `g(0)` at the
/// origin, which costs the trapezoid rule `O(h²)`; this restores the
/// Euler-Maclaurin term.
fn end_correction(d: usize, h: f64, g0: f64) -> f64 {
    if d == 2 {
        h * h / 12.0 * 2.0 * PI * g0
    } else {
        0.0
    }
}

/// `φ̂₀(k) = (2π)^{−d/2}∫ e^{ik·x}φ₀(|x|) dx` reduced to a radial integral
/// over the first `len` nodes taken with the given stride.
fn radial_fourier(d: usize, r: &[f64], phi: &[f64], k: f64, len: usize, stride: usize) -> f64 {
    let h = (r[1] - r[0]) * stride as f64;
    let kernel = |x: f64| match d {
        1 => 2.0 * (k * x).cos(),
        2 => 2.0 * PI * x * bessel_j0(k * x),
        _ => 4.0 * PI * x * x * if k * x == 0.0 { 1.0 } else { (k * x).sin() / (k * x) },
    };
    let last = len - 1;
    let s: f64 =
        (0..=last).step_by(stride).map(|i| kernel(r[i]) * phi[i] * if i == 0 || i == last { 0.5 } else { 1.0 }).sum();
    (h * s + end_correction(d, h, phi[0])) / (2.0 * PI).powf(0.5 * d as f64)
}

/// Transform on the full grid with a Richardson error estimate from the
/// grid of double spacing.
fn fourier_with_error(d: usize, r: &[f64], phi: &[f64], k: f64) -> (f64, f64) {
    let full = radial_fourier(d, r, phi, k, r.len(), 1);
    let even = if r.len() % 2 == 1 { r.len() } else { r.len() - 1 };
    let fine = radial_fourier(d, r, phi, k, even, 1);
    let coarse = radial_fourier(d, r, phi, k, even, 2);
    (full, (fine - coarse).abs() / 3.0)
}

/// Check `φ ≥ φ₀`, `φ̂₀ ≥ 0` on the dual grid and `∫φ₀ > 0`, and derive
/// `C = ½(2π)^{−d/2}φ̂₀(0)∫f(|k|)dk`, `D = max{0, φ₀(0)/2}`.
pub fn check_superstability_witness(pot: &PairPotential, w: &Witness, tol: f64) -> Result<WitnessReport> {
    pot.validate()?;
    let d = pot.d;
    if !(1..=3).contains(&d) {
        return config("witness checks support d = 1, 2, 3");
    }
    let n = w.r.len();
    if n < 3 || w.phi0.len() != n || w.r[0] != 0.0 {
        return config("witness must be tabulated on a grid starting at 0");
    }
    let h = w.r[1] - w.r[0];
    if w.r.windows(2).any(|s| ((s[1] - s[0]) - h).abs() > 1e-9 * h) {
        return config("witness grid must be uniform");
    }
    if w.phi0.iter().any(|v| !v.is_finite()) {
        return config("witness must be finite");
    }
    for (&r, &p0) in w.r.iter().zip(&w.phi0) {
        if pot.eval(r) < p0 {
            return Err(Error::WitnessRejected { radius: r });
        }
    }
    let area = sphere_area(d);
    let moment = |g: &dyn Fn(f64) -> f64| -> f64 {
        h * (0..n)
            .map(|i| area * w.r[i].powi(d as i32 - 1) * g(w.phi0[i]) * if i == 0 || i == n - 1 { 0.5 } else { 1.0 })
            .sum::<f64>()
    };
    let integral = moment(&|v| v) + end_correction(d, h, w.phi0[0]);
    let scale = moment(&|v: f64| v.abs()).max(1e-300) / (2.0 * PI).powf(0.5 * d as f64);
    let k_max = PI / h;
    let m = n.min(512);
    let mut fourier_min = f64::INFINITY;
    let mut fourier_ok = true;
    for j in 0..m {
        let (v, err) = fourier_with_error(d, &w.r, &w.phi0, k_max * j as f64 / (m - 1) as f64);
        fourier_min = fourier_min.min(v);
        fourier_ok &= v >= -tol * scale - err;
    }
    let integral_ok = integral > tol * scale * (2.0 * PI).powf(0.5 * d as f64);
    // ∫ f(|k|) dk with f(p) = max{0, 1 − (cosh(p√d) − cos(p√d))/2}.
    let sd = (d as f64).sqrt();
    let fp = |p: f64| (1.0 - 0.5 * ((p * sd).cosh() - (p * sd).cos())).max(0.0);
    let f_int = crate::numeric::adaptive_simpson(|p| area * p.powi(d as i32 - 1) * fp(p), 0.0, 2.0 / sd, 1e-12);
    let phi_hat0 = integral / (2.0 * PI).powf(0.5 * d as f64);
    let c = 0.5 * (2.0 * PI).powf(-0.5 * d as f64) * phi_hat0 * f_int;
    Ok(WitnessReport {
        pass: fourier_ok && integral_ok,
        fourier_min,
        fourier_ok,
        integral,
        integral_ok,
        c,
        d: (0.5 * w.phi0[0]).max(0.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperednessAudit {
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_r: f64,
}

/// `v(r) ≤ A r^{−λ}` at every tabulated radius `≥ R₀` (analytic kinds: a
/// geometric grid on `[R₀, 100R₀]`).
pub fn temperedness_audit(pot: &PairPotential) -> Result<TemperednessAudit> {
    pot.validate()?;
    let Some(t) = pot.temperedness else {
        return config("potential declares no temperedness constants");
    };
    let radii: Vec<f64> = match &pot.kind {
        super::PotentialKind::Table { r, .. } => r.iter().copied().filter(|&x| x >= t.r0).collect(),
        _ => (0..=2000).map(|i| t.r0 * 100f64.powf(i as f64 / 2000.0)).collect(),
    };
    let mut out = TemperednessAudit { pass: true, worst_margin: f64::INFINITY, worst_r: t.r0 };
    for r in radii {
        let margin = t.a * r.powf(-t.lambda_exp) - pot.eval(r);
        if margin < out.worst_margin {
            out = TemperednessAudit { pass: margin >= -1e-12, worst_margin: margin, worst_r: r };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{PotentialKind, Temperedness};
    use super::*;

    fn table_pot(d: usize, r: &[f64], v: &[f64]) -> PairPotential {
        PairPotential::new(PotentialKind::Table { r: r.to_vec(), v: v.iter().map(|&x| Some(x)).collect() }, d)
    }

    fn grid(n: usize, h: f64) -> Vec<f64> {
        (0..n).map(|i| h * i as f64).collect()
    }

    #[test]
    fn j0_reference_values() {
        // Tabulated zeros and values of J0.
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-12);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!((bessel_j0(30.0) - (-0.086_367_983_581_040_2)).abs() < 1e-7);
    }

    #[test]
    fn gaussian_witness_passes() {
        for d in 1..=3 {
            let r = grid(801, 0.01);
            let phi: Vec<f64> = r.iter().map(|x| (-x * x).exp()).collect();
            let rep = check_superstability_witness(&table_pot(d, &r, &phi), &Witness { r, phi0: phi }, 1e-6).unwrap();
            assert!(rep.pass, "d = {d}: {rep:?}");
            let exact = PI.powf(0.5 * d as f64);
            assert!((rep.integral - exact).abs() < 1e-6 * exact);
            assert!((rep.d - 0.5).abs() < 1e-15 && rep.c > 0.0);
        }
    }

    #[test]
    fn sharp_bump_fails_fourier() {
        let r = grid(801, 0.01);
        let phi: Vec<f64> = r.iter().map(|&x| 0.5 * (1.0 - ((x - 1.0) / 0.05).tanh())).collect();
        let rep = check_superstability_witness(&table_pot(3, &r, &phi), &Witness { r, phi0: phi }, 1e-6).unwrap();
        assert!(!rep.fourier_ok && !rep.pass);
    }

    #[test]
    fn zero_integral_fails() {
        let r = grid(1001, 0.01);
        let phi: Vec<f64> = r.iter().map(|x| (1.0 - 2.0 * x * x) * (-x * x).exp()).collect();
        let rep = check_superstability_witness(&table_pot(1, &r, &phi), &Witness { r, phi0: phi }, 1e-6).unwrap();
        assert!(!rep.integral_ok && !rep.pass);
    }

    #[test]
    fn witness_above_potential_is_rejected() {
        let r = grid(11, 0.1);
        let pot = PairPotential::zero(1);
        let phi = vec![0.1; 11];
        assert!(matches!(
            check_superstability_witness(&pot, &Witness { r, phi0: phi }, 1e-6),
            Err(Error::WitnessRejected { .. })
        ));
    }

    #[test]
    fn hard_rods_pass_convergence_checks() {
        let spec = exact_hard_rod_spec(1.0, &[0.1, 0.05, 0.025, 0.0125], 1.0, 2.0).unwrap();
        let rep =
            check_convergence_assumptions(&spec, &FreeEnergySpec::tonks(1.0, 1.0), &ConvergenceOptions::default())
                .unwrap();
        assert!(rep.uniform_pass, "{rep:?}");
        assert_eq!(rep.near_cp_pass, Some(true), "{rep:?}");
        assert_eq!(rep.above_cp_pass, Some(true), "{rep:?}");
        assert_eq!(rep.alpha_max_estimate, f64::INFINITY);
    }

    #[test]
    fn ideal_gas_fails_growth() {
        let gammas = [0.5, 0.25, 0.125];
        let tables = gammas
            .iter()
            .map(|&g: &f64| {
                let top = (20.0 / g) as usize;
                let mut lf = 0.0;
                let mut rho = Vec::new();
                let mut f = Vec::new();
                for n in 0..=top {
                    if n > 0 {
                        lf += (n as f64).ln();
                    }
                    rho.push(n as f64 * g);
                    f.push(Some(-g * (n as f64 * (1.0 / g).ln() - lf)));
                }
                ScaleTable { gamma: g, rho, f, stderr: None }
            })
            .collect();
        let spec = FreeEnergySpec {
            kind: FreeEnergyKind::Tabulated { tables },
            case: Case::SoftCore,
            rho_cp: None,
            rho_max: None,
            alpha_max: None,
            beta: 1.0,
        };
        let rep = check_convergence_assumptions(&spec, &FreeEnergySpec::ideal_gas(1.0), &ConvergenceOptions::default())
            .unwrap();
        assert!(!rep.growth_pass, "{rep:?}");
        assert!(rep.alpha_max_estimate < 0.05);
        assert!(rep.uniform_pass);
    }

    #[test]
    fn identical_tables_have_zero_distance() {
        let spec = exact_hard_rod_spec(1.0, &[0.5, 0.25, 0.125], 1.0, 2.0).unwrap();
        let FreeEnergyKind::Tabulated { tables } = &spec.kind else { unreachable!() };
        let lim = FreeEnergySpec {
            kind: FreeEnergyKind::Tabulated { tables: vec![ScaleTable { gamma: 0.0, ..tables[2].clone() }] },
            ..spec.clone()
        };
        let same = FreeEnergySpec {
            kind: FreeEnergyKind::Tabulated {
                tables: [0.5, 0.25, 0.125].iter().map(|&g| ScaleTable { gamma: g, ..tables[2].clone() }).collect(),
            },
            ..spec.clone()
        };
        let rep = check_convergence_assumptions(&same, &lim, &ConvergenceOptions::default()).unwrap();
        assert!(rep.sup_distance.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn too_few_tables() {
        let spec = exact_hard_rod_spec(1.0, &[0.5, 0.25], 1.0, 2.0).unwrap();
        assert!(matches!(
            check_convergence_assumptions(&spec, &FreeEnergySpec::tonks(1.0, 1.0), &ConvergenceOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn superstability_bound_cases() {
        let ideal = FreeEnergySpec::ideal_gas(1.0);
        assert!(!check_superstability_bound(&ideal, 0.1, 1.0, 1.0).unwrap().pass);
        let tonks = FreeEnergySpec::tonks(1.0, 1.0);
        assert!(check_superstability_bound(&tonks, 1.0, 0.0, 1.0).unwrap().pass);
        assert!(check_superstability_bound(&tonks, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lennard_jones_tail_is_tempered() {
        let mut p = PairPotential::new(PotentialKind::LennardJones { epsilon: 1.0, r: 1.0 }, 3);
        p.temperedness = Some(Temperedness { a: 4.0, lambda_exp: 6.0, r0: 1.0 });
        assert!(temperedness_audit(&p).unwrap().pass);
        p.temperedness = Some(Temperedness { a: 1.0, lambda_exp: 12.0, r0: 0.9 });
        assert!(!temperedness_audit(&p).unwrap().pass);
    }
}
