use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_good_regions, ds_identity, psi_l, GoodRegionSpec};
use crate::chessboard::{default_xi_grid, psi_lower_bound};
use crate::error::{config, Error, Result};
use crate::meanfield::{find_coexistence, gates_penrose_pressure, MeanFieldAnalysis, MeanFieldOptions};
use crate::numeric::batch_means;
use crate::rng::mix;
use crate::spinmodel::{
    find_anchor, pressure_estimate, sample_observables, Anchor, Histogram, Init, ModelParams, PathSettings,
    PressurePath, SamplerSettings, SiteMeasure, Trace,
};

/// Thermodynamic-integration paths for the two branch pressures. Both
/// paths also visit probe points spaced `step` apart up to `probe_width`
/// beyond each end of the scanned range. Anchors default to the first
/// integer step past the probes at which the anchor precondition holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPaths {
    #[serde(default)]
    pub vapor_anchor: Option<f64>,
    #[serde(default)]
    pub liquid_anchor: Option<f64>,
    #[serde(default = "quarter")]
    pub step: f64,
    #[serde(default = "one")]
    pub probe_width: f64,
    pub settings: PathSettings,
}

impl BranchPaths {
    pub fn new(settings: PathSettings) -> Self {
        BranchPaths { vapor_anchor: None, liquid_anchor: None, step: 0.25, probe_width: 1.0, settings }
    }
}

fn quarter() -> f64 {
    0.25
}

fn one() -> f64 {
    1.0
}

fn five() -> f64 {
    5.0
}

fn twenty() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Branch means further apart than this many standard errors flag two phases.
    #[serde(default = "five")]
    pub separation_sigma: f64,
    #[serde(default = "twenty")]
    pub batches: usize,
    #[serde(default)]
    pub paths: Option<BranchPaths>,
}

impl ScanSettings {
    pub fn new(sweeps: usize, burn_in: usize) -> Self {
        ScanSettings {
            sampler: SamplerSettings::new(sweeps, burn_in),
            delta: None,
            kappa: None,
            separation_sigma: 5.0,
            batches: 20,
            paths: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub start: f64,
    pub mean_density: f64,
    pub density_se: f64,
    pub pi_minus: f64,
    pub pi_plus: f64,
    pub psi_mean: f64,
    pub identity_violations: usize,
    /// Fraction of recorded sweeps whose mean density lies in the branch's
    /// own good region (`G₋` for the vapor start, `G₊` for the liquid one).
    pub in_region: Option<f64>,
    /// Fraction of recorded sweeps with mean density above `ρ_{*,0}`.
    pub above_zero: Option<f64>,
    pub acceptance: f64,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub lambda: f64,
    pub vapor: BranchStats,
    pub liquid: BranchStats,
    /// `|m_l − m_v| / √(se_v² + se_l²)`.
    pub separation: f64,
    pub two_phase: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Coexistence,
    NoCoexistenceDetected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    PressureCrossing,
    DensityMidpoint,
    PathMidpoint,
    EqualWeight,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchPressures {
    pub lambda: Vec<f64>,
    pub vapor: PressurePath,
    pub vapor_index: Vec<usize>,
    #[serde(default)]
    pub liquid: Option<PressurePath>,
    #[serde(default)]
    pub liquid_index: Vec<usize>,
    /// Every `λ` both paths visit inside the probe window, increasing.
    pub probes: Vec<f64>,
    pub vapor_probe_index: Vec<usize>,
    #[serde(default)]
    pub liquid_probe_index: Vec<usize>,
}

impl BranchPressures {
    /// `(pressure, stat, quad, baseline, density, density_se)` of a branch at scan point `i`.
    fn at(path: &PressurePath, idx: usize) -> [f64; 6] {
        [
            path.pressure[idx],
            path.stat_err[idx],
            path.quad_err[idx],
            path.baseline_err,
            path.density[idx],
            path.density_se[idx],
        ]
    }

    pub fn vapor_at(&self, i: usize) -> [f64; 6] {
        Self::at(&self.vapor, self.vapor_index[i])
    }

    pub fn liquid_at(&self, i: usize) -> Option<[f64; 6]> {
        self.liquid.as_ref().map(|l| Self::at(l, self.liquid_index[i]))
    }

    /// Vapor and liquid rows at probe `k`.
    pub fn probe_at(&self, k: usize) -> Option<([f64; 6], [f64; 6])> {
        let l = self.liquid.as_ref()?;
        Some((Self::at(&self.vapor, self.vapor_probe_index[k]), Self::at(l, self.liquid_probe_index[k])))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionReport {
    pub gamma: f64,
    pub lambda_star: Option<f64>,
    pub rho_zero: Option<f64>,
    pub regions: Option<GoodRegionSpec>,
    pub points: Vec<ScanPoint>,
    pub outcome: Outcome,
    pub lambda_c: Option<f64>,
    pub estimator: Option<Estimator>,
    pub lambda_c_pressure: Option<f64>,
    pub lambda_c_equal_weight: Option<f64>,
    pub lambda_c_midpoint: Option<f64>,
    pub lambda_c_path: Option<f64>,
    pub lambda_c_error: Option<f64>,
    pub pressures: Option<BranchPressures>,
}

/// Everything a scan needs before any chain runs; points can be computed
/// independently (and resumed) through [`ScanContext::run_point`].
#[derive(Clone, Debug)]
pub struct ScanContext {
    pub params: ModelParams,
    pub lambdas: Vec<f64>,
    pub analysis: Option<MeanFieldAnalysis>,
    pub regions: Option<GoodRegionSpec>,
    pub starts: [f64; 2],
    pub settings: ScanSettings,
    pub seed: u64,
}

impl ScanContext {
    pub fn new(p: &ModelParams, lambdas: &[f64], settings: &ScanSettings, seed: u64) -> Result<Self> {
        p.validate()?;
        settings.sampler.validate()?;
        if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return config("lambda grid must be nonempty and strictly increasing");
        }
        let analysis = match find_coexistence(&p.spec, p.alpha, &MeanFieldOptions::default()) {
            Ok(a) => Some(a),
            Err(Error::NoCoexistence(_) | Error::FlatCoexistence) => None,
            Err(e) => return Err(e),
        };
        let regions =
            analysis.as_ref().map(|a| build_good_regions(a, &p.spec, settings.delta, settings.kappa)).transpose()?;
        if let Some(g) = &regions {
            let eps = 1e-12 * (1.0 + g.lambda_star.abs());
            if lambdas[0] < g.lambda_minus - eps || lambdas[lambdas.len() - 1] > g.lambda_plus + eps {
                return config(format!(
                    "lambda grid must lie in [lambda_minus, lambda_plus] = [{}, {}]",
                    g.lambda_minus, g.lambda_plus
                ));
            }
        }
        let starts = match &analysis {
            Some(a) => [a.rho_minus, a.rho_plus],
            None => {
                let m = SiteMeasure::new(p)?;
                let hi = match p.spec.rho_cp.filter(|_| p.spec.is_hard_core()) {
                    Some(cp) => 0.95 * cp,
                    None => 0.5 * m.upper(),
                };
                [0.0, hi]
            }
        };
        Ok(ScanContext {
            params: p.clone(),
            lambdas: lambdas.to_vec(),
            analysis,
            regions,
            starts,
            settings: settings.clone(),
            seed,
        })
    }

    fn branch(&self, pl: &ModelParams, i: usize, b: usize) -> Result<BranchStats> {
        let mut s = self.settings.sampler.clone();
        s.chains = 1;
        let part = self.regions.as_ref().map(|g| g.partition());
        let t: Trace = sample_observables(
            pl,
            &s,
            mix(&[self.seed, i as u64, b as u64]),
            &Init::Constant(self.starts[b]),
            part.as_ref(),
        )?;
        let dens = t.densities();
        let (mean, se) = batch_means(&dens, self.settings.batches);
        let (pi_minus, pi_plus) = t.pi();
        let n = t.rows.len() as f64;
        let frac = |f: &dyn Fn(f64) -> bool| dens.iter().filter(|&&x| f(x)).count() as f64 / n;
        let in_region =
            self.regions.as_ref().map(|g| if b == 0 { frac(&|x| g.in_minus(x)) } else { frac(&|x| g.in_plus(x)) });
        let above_zero = self.analysis.as_ref().map(|a| frac(&|x| x > a.rho_zero));
        Ok(BranchStats {
            start: self.starts[b],
            mean_density: mean,
            density_se: se,
            pi_minus,
            pi_plus,
            psi_mean: t.rows.iter().map(|r| psi_l(r.n_minus, r.n_plus, t.sites)).sum::<f64>() / n,
            identity_violations: t.rows.iter().filter(|r| !ds_identity(r.n_minus, r.n_plus, t.sites)).count(),
            in_region,
            above_zero,
            acceptance: t.acceptance[0],
            histogram: t.histogram,
        })
    }

    /// Both cold-started branches at grid point `i`.
    pub fn run_point(&self, i: usize) -> Result<ScanPoint> {
        let lambda = self.lambdas[i];
        let pl = self.params.with_lambda(lambda);
        let (v, l) = rayon::join(|| self.branch(&pl, i, 0), || self.branch(&pl, i, 1));
        let (vapor, liquid) = (v?, l?);
        let se = vapor.density_se.hypot(liquid.density_se);
        let separation = (liquid.mean_density - vapor.mean_density).abs() / se;
        let two_phase = se.is_finite() && separation > self.settings.separation_sigma;
        Ok(ScanPoint { lambda, vapor, liquid, separation, two_phase })
    }

    pub fn run_pressures(&self) -> Result<Option<BranchPressures>> {
        match (&self.settings.paths, &self.analysis) {
            (Some(bp), Some(_)) => branch_pressures(&self.params, &self.lambdas, bp, self.seed).map(Some),
            _ => Ok(None),
        }
    }

    pub fn assemble(&self, points: Vec<ScanPoint>, pressures: Option<BranchPressures>) -> TransitionReport {
        let any = points.iter().any(|p| p.two_phase);
        let rz = self.analysis.as_ref().map(|a| a.rho_zero);
        let lam: Vec<f64> = points.iter().map(|p| p.lambda).collect();
        // All-zero weights mean each branch kept its own phase throughout,
        // which says nothing about where the two balance.
        let equal_weight = points
            .iter()
            .map(|p| Some(0.5 * (p.vapor.above_zero? + p.liquid.above_zero?) - 0.5))
            .collect::<Option<Vec<f64>>>()
            .filter(|w| w.iter().any(|&x| x != 0.0))
            .and_then(|w| crossing(&lam, &w));
        let midpoint = rz.and_then(|z| {
            crossing(
                &lam,
                &points.iter().map(|p| 0.5 * (p.vapor.mean_density + p.liquid.mean_density) - z).collect::<Vec<_>>(),
            )
        });
        let by_pressure = pressures.as_ref().and_then(|bp| pressure_crossing(bp, self.settings.separation_sigma));
        let by_path = pressures.as_ref().zip(rz).and_then(|(bp, z)| path_midpoint(bp, z));
        let (lambda_c, estimator) = [
            (by_pressure, Estimator::PressureCrossing),
            (midpoint, Estimator::DensityMidpoint),
            (by_path, Estimator::PathMidpoint),
            (equal_weight, Estimator::EqualWeight),
        ]
        .into_iter()
        .find_map(|(x, e)| x.map(|x| (Some(x), Some(e))))
        .unwrap_or((None, None));
        let lambda_star = self.analysis.as_ref().map(|a| a.lambda_star);
        TransitionReport {
            gamma: self.params.gamma,
            lambda_star,
            rho_zero: rz,
            regions: self.regions.clone(),
            points,
            outcome: if any { Outcome::Coexistence } else { Outcome::NoCoexistenceDetected },
            lambda_c,
            estimator,
            lambda_c_pressure: by_pressure,
            lambda_c_equal_weight: equal_weight,
            lambda_c_midpoint: midpoint,
            lambda_c_path: by_path,
            lambda_c_error: lambda_c.zip(lambda_star).map(|(c, s)| (c - s).abs()),
            pressures,
        }
    }
}

/// Zero of `ys` by linear interpolation between consecutive grid points.
fn crossing(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if let Some(i) = ys.iter().position(|&y| y == 0.0) {
        return Some(xs[i]);
    }
    (1..xs.len()).find(|&i| ys[i - 1].signum() != ys[i].signum()).map(|i| {
        let t = ys[i - 1] / (ys[i - 1] - ys[i]);
        xs[i - 1] + t * (xs[i] - xs[i - 1])
    })
}

/// `λ` where the branch pressures meet, linearized at the probe with the
/// smallest pressure difference using the branch densities as slopes.
/// Only probes where the two paths sit in distinct phases count.
fn pressure_crossing(bp: &BranchPressures, sigma: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (k, &lam) in bp.probes.iter().enumerate() {
        let (v, l) = bp.probe_at(k)?;
        let slope = l[4] - v[4];
        if !(slope > sigma * v[5].hypot(l[5])) {
            continue;
        }
        let diff = l[0] - v[0];
        if best.is_none_or(|b| diff.abs() < b.0) {
            best = Some((diff.abs(), lam - diff / slope));
        }
    }
    best.map(|b| b.1)
}

/// Zero of the mean path density minus `ρ_{*,0}` over the probes.
fn path_midpoint(bp: &BranchPressures, rho_zero: f64) -> Option<f64> {
    let ys = (0..bp.probes.len())
        .map(|k| bp.probe_at(k).map(|(v, l)| 0.5 * (v[4] + l[4]) - rho_zero))
        .collect::<Option<Vec<f64>>>()?;
    crossing(&bp.probes, &ys)
}

/// Cold-started two-branch scan over the grid, plus branch pressures when
/// paths are configured.
pub fn lambda_scan(p: &ModelParams, lambdas: &[f64], settings: &ScanSettings, seed: u64) -> Result<TransitionReport> {
    let ctx = ScanContext::new(p, lambdas, settings, seed)?;
    let points: Vec<ScanPoint> = (0..lambdas.len()).into_par_iter().map(|i| ctx.run_point(i)).collect::<Result<_>>()?;
    let pressures = ctx.run_pressures()?;
    Ok(ctx.assemble(points, pressures))
}

/// Index of each target in `path` (targets must be nodes of the path).
fn indices(path: &[f64], targets: &[f64]) -> Vec<usize> {
    targets.iter().map(|t| path.iter().position(|x| x == t).expect("target on path")).collect()
}

/// Vapor pressure integrated up from an empty anchor and, for hard-core
/// models, liquid pressure integrated down from a close-packed anchor,
/// both evaluated at `lambdas` (strictly increasing).
pub fn branch_pressures(p: &ModelParams, lambdas: &[f64], bp: &BranchPaths, seed: u64) -> Result<BranchPressures> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return config("lambda list must be nonempty and strictly increasing");
    }
    if !(bp.step > 0.0) {
        return config("path step must be positive");
    }
    if !(bp.probe_width >= 0.0) {
        return config("probe width must be nonnegative");
    }
    let (lo, hi) = (lambdas[0], lambdas[lambdas.len() - 1]);
    let n_probe = (bp.probe_width / bp.step + 1e-9).floor() as usize;
    let below: Vec<f64> = (1..=n_probe).rev().map(|k| lo - bp.step * k as f64).collect();
    let above: Vec<f64> = (1..=n_probe).map(|k| hi + bp.step * k as f64).collect();
    let probes: Vec<f64> = below.iter().chain(lambdas).chain(&above).copied().collect();
    let (first, last) = (probes[0], probes[probes.len() - 1]);
    let va = match bp.vapor_anchor {
        Some(a) if a < first => a,
        Some(a) => return config(format!("vapor anchor {a} must lie below the probe window starting at {first}")),
        None => find_anchor(p, Anchor::Empty, (first - 1.0).floor(), 1.0)?,
    };
    let mut vpath: Vec<f64> = (0..).map(|k| va + bp.step * k as f64).take_while(|&x| x < first).collect();
    vpath.extend_from_slice(&probes);
    let hard = p.spec.is_hard_core();
    let la = if hard {
        Some(match bp.liquid_anchor {
            Some(a) if a > last => a,
            Some(a) => return config(format!("liquid anchor {a} must lie above the probe window ending at {last}")),
            None => find_anchor(p, Anchor::Full, (last + 1.0).ceil(), 1.0)?,
        })
    } else {
        None
    };
    let lpath: Option<Vec<f64>> = la.map(|a| {
        let mut v: Vec<f64> = (0..).map(|k| a - bp.step * k as f64).take_while(|&x| x > last).collect();
        v.extend(probes.iter().rev());
        v
    });
    let (vr, lr) = rayon::join(
        || pressure_estimate(p, &vpath, &bp.settings, seed, Anchor::Empty),
        || lpath.as_ref().map(|lp| pressure_estimate(p, lp, &bp.settings, seed, Anchor::Full)).transpose(),
    );
    let vapor = vr?;
    let liquid = lr?;
    Ok(BranchPressures {
        lambda: lambdas.to_vec(),
        vapor_index: indices(&vapor.lambda, lambdas),
        liquid_index: liquid.as_ref().map(|l| indices(&l.lambda, lambdas)).unwrap_or_default(),
        vapor_probe_index: indices(&vapor.lambda, &probes),
        liquid_probe_index: liquid.as_ref().map(|l| indices(&l.lambda, &probes)).unwrap_or_default(),
        probes,
        vapor,
        liquid,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub lambda: f64,
    pub sampled: f64,
    pub vapor: f64,
    pub liquid: Option<f64>,
    pub mean_field: f64,
    pub gap: f64,
    pub stat_err: f64,
    pub quad_err: f64,
    pub baseline_err: f64,
    /// `max(0, −inf φ_λ − ψ_proxy/(βγ^{−d}))`: room between the mean-field
    /// pressure and the rigorous finite-`γ` lower bound.
    pub slack: f64,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressureComparison {
    pub rows: Vec<PressureRow>,
    pub all_pass: bool,
    pub pressures: BranchPressures,
}

/// Sampled pressure `max(p_v, p_l)` against `−inf φ_λ`, with the one-sided
/// check `gap ≥ −budget` at each `λ`.
pub fn pressure_comparison(
    p: &ModelParams,
    lambdas: &[f64],
    bp: &BranchPaths,
    seed: u64,
) -> Result<PressureComparison> {
    p.validate()?;
    let pressures = branch_pressures(p, lambdas, bp, seed)?;
    let scale = p.beta * p.volume();
    let opts = MeanFieldOptions::default();
    let mut rows = Vec::with_capacity(lambdas.len());
    for (i, &lam) in lambdas.iter().enumerate() {
        let v = pressures.vapor_at(i);
        let l = pressures.liquid_at(i);
        let pick = match l {
            Some(l) if l[0] > v[0] => l,
            _ => v,
        };
        let mean_field = gates_penrose_pressure(&p.spec, p.alpha, lam, &opts)?;
        let pl = p.with_lambda(lam);
        let psi = psi_lower_bound(&pl, &default_xi_grid(&pl))?.value / scale;
        let slack = (mean_field - psi).max(0.0);
        let budget = pick[1] + pick[2] + pick[3] + slack;
        let gap = pick[0] - mean_field;
        rows.push(PressureRow {
            lambda: lam,
            sampled: pick[0],
            vapor: v[0],
            liquid: l.map(|l| l[0]),
            mean_field,
            gap,
            stat_err: pick[1],
            quad_err: pick[2],
            baseline_err: pick[3],
            slack,
            budget,
            pass: gap >= -budget,
        });
    }
    Ok(PressureComparison { all_pass: rows.iter().all(|r| r.pass), rows, pressures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::FreeEnergySpec;
    use crate::spinmodel::Domain;

    #[test]
    fn crossing_interpolates() {
        assert_eq!(crossing(&[0.0, 1.0, 2.0], &[-1.0, 1.0, 3.0]), Some(0.5));
        assert_eq!(crossing(&[0.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(crossing(&[0.0, 1.0], &[0.0, 2.0]), Some(0.0));
    }

    fn tonks(alpha: f64, gamma: f64, l: usize) -> ModelParams {
        ModelParams {
            d: 1,
            l,
            beta: 1.0,
            alpha,
            j2: 1.0,
            gamma,
            lambda: 0.0,
            domain: Domain::Continuous,
            spec: FreeEnergySpec::tonks(1.0, 1.0),
        }
    }

    #[test]
    fn convex_model_reports_no_coexistence() {
        let p = tonks(4.0, 0.5, 8);
        let r = lambda_scan(&p, &[-1.0, 0.0, 1.0], &ScanSettings::new(400, 100), 3).unwrap();
        assert_eq!(r.outcome, Outcome::NoCoexistenceDetected);
        assert!(r.regions.is_none() && r.lambda_star.is_none());
        assert_eq!(r.points.len(), 3);
    }

    #[test]
    fn grid_outside_window_is_rejected() {
        let p = tonks(10.0, 0.5, 4);
        assert!(matches!(lambda_scan(&p, &[0.0], &ScanSettings::new(100, 10), 1), Err(Error::Config(_))));
    }

    #[test]
    fn scan_is_deterministic() {
        let p = tonks(10.0, 0.5, 4);
        let a = find_coexistence(&p.spec, p.alpha, &MeanFieldOptions::default()).unwrap();
        let ctx = ScanContext::new(&p, &[a.lambda_star], &ScanSettings::new(10, 2), 9).unwrap();
        let a = ctx.run_point(0).unwrap();
        let b = ctx.run_point(0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.vapor.identity_violations, 0);
    }

    #[test]
    fn paths_share_probe_points() {
        let p = tonks(10.0, 0.5, 4);
        let mut bp = BranchPaths::new(PathSettings::new(40, 10));
        bp.probe_width = 0.5;
        let lams = [-3.0, -2.9];
        let r = branch_pressures(&p, &lams, &bp, 5).unwrap();
        assert_eq!(r.probes, vec![-3.5, -3.25, -3.0, -2.9, -2.65, -2.4]);
        let liquid = r.liquid.as_ref().unwrap();
        for (k, &lam) in r.probes.iter().enumerate() {
            assert_eq!(r.vapor.lambda[r.vapor_probe_index[k]], lam);
            assert_eq!(liquid.lambda[r.liquid_probe_index[k]], lam);
        }
        assert_eq!(r.vapor.lambda[r.vapor_index[1]], -2.9);
    }
}
