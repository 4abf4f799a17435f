use serde::{Deserialize, Serialize};

use super::{Chain, Init, ModelParams, Proposal, Sampler, SiteMeasure};
use crate::error::{config, Error, Result};
use crate::numeric::batch_means;

/// Where a thermodynamic-integration path starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// Ascending from a `λ` where the empty state dominates.
    Empty,
    /// Descending from a `λ` where hard-core sites sit at close packing.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSettings {
    pub sweeps: usize,
    pub burn_in: usize,
    #[serde(default = "twenty")]
    pub batches: usize,
    #[serde(default)]
    pub proposal: Option<Proposal>,
}

fn twenty() -> usize {
    20
}

impl PathSettings {
    pub fn new(sweeps: usize, burn_in: usize) -> Self {
        PathSettings { sweeps, burn_in, batches: 20, proposal: None }
    }
}

/// Pressure `(1/(βγ^{−d}L^d)) log Ξ` along a `λ` path, with error bars.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressurePath {
    pub anchor: Anchor,
    pub lambda: Vec<f64>,
    pub density: Vec<f64>,
    pub density_se: Vec<f64>,
    pub pressure: Vec<f64>,
    pub stat_err: Vec<f64>,
    pub quad_err: Vec<f64>,
    pub baseline: f64,
    pub baseline_err: f64,
}

impl PressurePath {
    pub fn last(&self) -> f64 {
        *self.pressure.last().expect("nonempty path")
    }

    /// Statistical, quadrature and baseline errors added up at point `i`.
    pub fn total_err(&self, i: usize) -> f64 {
        self.stat_err[i] + self.quad_err[i] + self.baseline_err
    }
}

/// Largest per-site coupling correction `2dJ·Var` accepted at the anchor.
pub const ANCHOR_TOL: f64 = 1e-3;

fn check_anchor(p: &ModelParams, anchor: Anchor) -> Result<(f64, f64)> {
    let m = SiteMeasure::new(p)?;
    let lz = m.log_total()?;
    let (_, var) = m.moments()?;
    let corr = 2.0 * p.d as f64 * p.coupling() * var;
    if m.is_discrete() {
        let (xs, lw) = m.support()?;
        let mass = match anchor {
            Anchor::Empty => (lw[0] - lz).exp(),
            Anchor::Full => (lw[xs.len() - 1] - lz).exp(),
        };
        if mass < 1.0 - 1e-6 {
            return config(format!(
                "anchor lambda = {} leaves mass {mass:.3e} on the anchor state; need 1 - 1e-6",
                p.lambda
            ));
        }
    } else if corr > ANCHOR_TOL {
        return config(format!(
            "anchor lambda = {} has coupling correction {corr:.3e} per site; need {ANCHOR_TOL:e}",
            p.lambda
        ));
    }
    Ok((lz, corr))
}

/// First `λ` on `start, start ∓ step, …` (moving away from the phase the
/// anchor pins) at which the anchor precondition holds.
pub fn find_anchor(p: &ModelParams, anchor: Anchor, start: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return config("anchor search step must be positive");
    }
    let dir = match anchor {
        Anchor::Empty => -1.0,
        Anchor::Full => 1.0,
    };
    for k in 0..400 {
        let lam = start + dir * step * k as f64;
        if check_anchor(&p.with_lambda(lam), anchor).is_ok() {
            return Ok(lam);
        }
    }
    config(format!("no {anchor:?} anchor within 400 steps of lambda = {start}"))
}

/// Thermodynamic integration of the mean density along `path`.
///
/// The baseline at the anchor is the first cumulant of the coupling under
/// the product measure, `L^d log ω(ℝ) − J|E|·2Var_ω`, which is also a lower
/// bound; its whole correction is charged to `baseline_err`.
pub fn pressure_estimate(
    p: &ModelParams,
    path: &[f64],
    settings: &PathSettings,
    seed: u64,
    anchor: Anchor,
) -> Result<PressurePath> {
    if path.is_empty() {
        return config("empty lambda path");
    }
    if settings.sweeps == 0 || settings.batches < 2 || settings.sweeps < settings.batches {
        return config("path sweeps must cover at least two batches");
    }
    let ordered = match anchor {
        Anchor::Empty => path.windows(2).all(|w| w[1] > w[0]),
        Anchor::Full => path.windows(2).all(|w| w[1] < w[0]),
    };
    if !ordered {
        return config("lambda path must move away from its anchor monotonically");
    }
    if anchor == Anchor::Full && !p.spec.is_hard_core() {
        return config("the full anchor needs a hard-core free energy");
    }
    let p0 = p.with_lambda(path[0]);
    let (lz, corr) = check_anchor(&p0, anchor)?;
    let scale = p.beta * p.volume();
    let baseline = (lz - corr) / scale;
    let baseline_err = corr / scale;

    let s0 = Sampler::new(&p0)?;
    let start = match anchor {
        Anchor::Empty => 0.0,
        Anchor::Full => s0.measure.moments()?.0,
    };
    let proposal = settings.proposal.unwrap_or_else(|| Proposal::default_for(&p0));
    let chain_id = match anchor {
        Anchor::Empty => 0,
        Anchor::Full => 1,
    };
    let mut chain = Chain::new(&s0, seed, chain_id, &Init::Constant(start), proposal)?;
    let mut density = Vec::with_capacity(path.len());
    let mut density_se = Vec::with_capacity(path.len());
    for &lam in path {
        let s = Sampler::new(&p.with_lambda(lam))?;
        chain.run(&s, settings.burn_in, true, |_, _| {});
        let mut xs = Vec::with_capacity(settings.sweeps);
        chain.run(&s, settings.sweeps, false, |_, v| xs.push(v.iter().sum::<f64>() / v.len() as f64));
        let (mean, se) = batch_means(&xs, settings.batches);
        if !se.is_finite() {
            return Err(Error::Internal("density error bar is not finite".into()));
        }
        density.push(mean);
        density_se.push(se);
    }

    let n = path.len();
    let mut pressure = vec![baseline; n];
    let mut stat_err = vec![0.0; n];
    let mut quad_err = vec![0.0; n];
    let curv = curvature(path, &density);
    for i in 1..n {
        let h = path[i] - path[i - 1];
        pressure[i] = pressure[i - 1] + 0.5 * h * (density[i] + density[i - 1]);
        let local = match curv {
            Some(ref c) => h.abs().powi(3) * c[i - 1].max(c[i]) / 12.0,
            None => 0.5 * h.abs() * (density[i] - density[i - 1]).abs(),
        };
        quad_err[i] = quad_err[i - 1] + local;
        let mut w2 = 0.0;
        for j in 0..=i {
            let left = if j > 0 { (path[j] - path[j - 1]).abs() } else { 0.0 };
            let right = if j < i { (path[j + 1] - path[j]).abs() } else { 0.0 };
            w2 += (0.5 * (left + right) * density_se[j]).powi(2);
        }
        stat_err[i] = w2.sqrt();
    }
    Ok(PressurePath {
        anchor,
        lambda: path.to_vec(),
        density,
        density_se,
        pressure,
        stat_err,
        quad_err,
        baseline,
        baseline_err,
    })
}

/// `|ρ''|` at every node from second divided differences (end nodes copy
/// their neighbor). `None` for paths shorter than three points.
fn curvature(x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let mut c = vec![0.0; n];
    for i in 1..n - 1 {
        let d1 = (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        let d2 = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        c[i] = (2.0 * (d2 - d1) / (x[i + 1] - x[i - 1])).abs();
    }
    c[0] = c[1];
    c[n - 1] = c[n - 2];
    Some(c)
}
