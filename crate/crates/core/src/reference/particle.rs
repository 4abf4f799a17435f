use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PairPotential;
use crate::error::{config, Result};
use crate::meanfield::{Case, FreeEnergyKind, FreeEnergySpec, ScaleTable};
use crate::numeric::LogAcc;
use crate::rng::{mix, stream};

/// `f_γ(Nγ^d)` with its Monte Carlo standard error. `infinite` marks a
/// hard-core cell where every sample overlapped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyPoint {
    pub n: usize,
    pub rho: f64,
    pub f: f64,
    pub stderr: f64,
    pub infinite: bool,
}

const CHUNKS: usize = 32;

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `−(γ^d/β) log[(1/N!) ∫_{([0,γ^{−1}]^d)^N} e^{−βH}]` by plain Monte Carlo
/// over uniform positions; the log is taken of the sample mean.
pub fn particle_free_energy_mc(
    pot: &PairPotential,
    gamma: f64,
    beta: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<FreeEnergyPoint> {
    pot.validate()?;
    if !(gamma > 0.0 && gamma <= 1.0) || !(beta > 0.0) {
        return config("need gamma in (0, 1] and beta > 0");
    }
    let d = pot.d;
    let vol_frac = gamma.powi(d as i32);
    let rho = n as f64 * vol_frac;
    if n == 0 {
        return Ok(FreeEnergyPoint { n, rho, f: 0.0, stderr: 0.0, infinite: false });
    }
    if samples < 1000 {
        return config("particle free energies need at least 1000 samples");
    }
    let side = 1.0 / gamma;
    let per = samples.div_ceil(CHUNKS);
    let parts: Vec<(LogAcc, LogAcc)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, n as u64, c as u64);
            let mut xs = vec![0.0; n * d];
            let mut m1 = LogAcc::new();
            let mut m2 = LogAcc::new();
            for _ in 0..per {
                xs.iter_mut().for_each(|x| *x = side * rng.random::<f64>());
                let lw = -beta * pot.energy(&xs);
                m1.add(lw);
                m2.add(2.0 * lw);
            }
            (m1, m2)
        })
        .collect();
    let (mut m1, mut m2) = (LogAcc::new(), LogAcc::new());
    for (a, b) in &parts {
        m1.merge(a);
        m2.merge(b);
    }
    let total = (per * CHUNKS) as f64;
    let log_mean = m1.value() - total.ln();
    if log_mean == f64::NEG_INFINITY {
        return Ok(FreeEnergyPoint { n, rho, f: f64::INFINITY, stderr: 0.0, infinite: true });
    }
    // Relative variance of the weights, E[w²]/E[w]² − 1.
    let rel_var = ((m2.value() - total.ln()) - 2.0 * log_mean).exp() - 1.0;
    let log_se = (rel_var.max(0.0) / total).sqrt();
    let log_z = n as f64 * d as f64 * side.ln() - ln_factorial(n) + log_mean;
    Ok(FreeEnergyPoint { n, rho, f: -vol_frac / beta * log_z, stderr: vol_frac / beta * log_se, infinite: false })
}

/// How the tabulated family should be classified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub rho_max: f64,
    #[serde(default)]
    pub rho_cp: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Tabulate `f_γ` at every lattice density `Nγ^d ≤ ρ_max` for each `γ`.
/// Cells are independent, each with its own stream keyed by `(seed, γ index, N)`.
pub fn build_free_energy_table(
    pot: &PairPotential,
    gammas: &[f64],
    beta: f64,
    opts: &TableOptions,
) -> Result<(FreeEnergySpec, Vec<Vec<FreeEnergyPoint>>)> {
    if gammas.is_empty() {
        return config("no gamma values given");
    }
    let cells: Vec<(usize, usize)> = gammas
        .iter()
        .enumerate()
        .flat_map(|(g, &gamma)| {
            let top = (opts.rho_max / gamma.powi(pot.d as i32) * (1.0 + 1e-12)).floor() as usize;
            (0..=top).map(move |n| (g, n))
        })
        .collect();
    let points: Vec<Result<FreeEnergyPoint>> = cells
        .par_iter()
        .map(|&(g, n)| particle_free_energy_mc(pot, gammas[g], beta, n, opts.samples, mix(&[opts.seed, g as u64])))
        .collect();
    let mut per_gamma: Vec<Vec<FreeEnergyPoint>> = vec![Vec::new(); gammas.len()];
    for (&(g, _), pt) in cells.iter().zip(points) {
        per_gamma[g].push(pt?);
    }
    let tables = gammas
        .iter()
        .zip(&per_gamma)
        .map(|(&gamma, pts)| ScaleTable {
            gamma,
            rho: pts.iter().map(|p| p.rho).collect(),
            f: pts.iter().map(|p| (!p.infinite).then_some(p.f)).collect(),
            stderr: Some(pts.iter().map(|p| p.stderr).collect()),
        })
        .collect();
    let hard = pot.core().is_some() && opts.rho_cp.is_some();
    let spec = FreeEnergySpec {
        kind: FreeEnergyKind::Tabulated { tables },
        case: if hard { Case::HardCore } else { Case::SoftCore },
        rho_cp: opts.rho_cp,
        rho_max: hard.then_some(opts.rho_max),
        alpha_max: None,
        beta,
    };
    Ok((spec, per_gamma))
}

/// Lowest `H/N` met over random configurations followed by a greedy
/// local descent; `−min(H/N)` estimates the stability constant from below.
pub fn estimate_stability_b(pot: &PairPotential, gamma: f64, n: usize, samples: usize, seed: u64) -> Result<f64> {
    pot.validate()?;
    if n < 2 || samples == 0 {
        return config("stability estimates need n >= 2 and samples > 0");
    }
    let d = pot.d;
    let side = 1.0 / gamma;
    let best: Vec<(f64, Vec<f64>)> = (0..CHUNKS as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c, 0);
            let mut best = (f64::INFINITY, vec![0.0; n * d]);
            let mut xs = vec![0.0; n * d];
            for _ in 0..samples.div_ceil(CHUNKS) {
                xs.iter_mut().for_each(|x| *x = side * rng.random::<f64>());
                let h = pot.energy(&xs);
                if h < best.0 {
                    best = (h, xs.clone());
                }
            }
            let (mut h, mut xs) = best;
            let mut step = 0.1 * side;
            for _ in 0..2000 {
                let i = rng.random_range(0..n * d);
                let old = xs[i];
                xs[i] = (old + step * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, side);
                let h2 = pot.energy(&xs);
                if h2 < h {
                    h = h2;
                } else {
                    xs[i] = old;
                    step *= 0.999;
                }
            }
            (h, xs)
        })
        .collect();
    let min = best.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    Ok((-min / n as f64).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityAudit {
    pub min_energy_per_particle: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Check `H ≥ −NB` on random configurations.
pub fn stability_audit(
    pot: &PairPotential,
    b: f64,
    gamma: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<StabilityAudit> {
    pot.validate()?;
    if n == 0 {
        return config("stability audit needs particles");
    }
    let d = pot.d;
    let side = 1.0 / gamma;
    let mins: Vec<f64> = (0..CHUNKS as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c, 1);
            let mut xs = vec![0.0; n * d];
            let mut m = f64::INFINITY;
            for _ in 0..samples.div_ceil(CHUNKS) {
                xs.iter_mut().for_each(|x| *x = side * rng.random::<f64>());
                m = m.min(pot.energy(&xs) / n as f64);
            }
            m
        })
        .collect();
    let min = mins.into_iter().fold(f64::INFINITY, f64::min);
    Ok(StabilityAudit { min_energy_per_particle: min, bound: -b, pass: min >= -b })
}

#[cfg(test)]
mod tests {
    use super::super::PotentialKind;
    use super::*;

    #[test]
    fn empty_box_is_zero() {
        let p = PairPotential::new(PotentialKind::HardCore { r: 1.0 }, 1);
        let pt = particle_free_energy_mc(&p, 0.5, 1.0, 0, 0, 1).unwrap();
        assert_eq!(pt.f, 0.0);
    }

    #[test]
    fn ideal_gas_is_exact() {
        let p = PairPotential::zero(2);
        let (g, beta) = (0.5f64, 2.0);
        for n in 1..6usize {
            let pt = particle_free_energy_mc(&p, g, beta, n, 1000, 3).unwrap();
            let want = -(g * g) / beta * (-(n as f64) * 2.0 * g.ln() - ln_factorial(n));
            assert!((pt.f - want).abs() < 1e-12, "n = {n}: {} vs {want}", pt.f);
            assert_eq!(pt.stderr, 0.0);
        }
    }

    #[test]
    fn hard_rods_match_closed_form() {
        // Centers in [0, ℓ], pairwise ≥ b apart: ∫ = (ℓ − (N−1)b)_+^N.
        let b = 0.5;
        let p = PairPotential::new(PotentialKind::HardCore { r: b }, 1);
        let g = 0.25;
        let ell = 1.0 / g;
        for n in [2usize, 4, 5] {
            let pt = particle_free_energy_mc(&p, g, 1.0, n, 200_000, 9).unwrap();
            let free = ell - (n as f64 - 1.0) * b;
            let want = -g * (n as f64 * free.ln() - ln_factorial(n));
            assert!((pt.f - want).abs() <= 3.0 * pt.stderr, "n = {n}: {} vs {want} ± {}", pt.f, pt.stderr);
        }
    }

    #[test]
    fn overfull_box_is_infinite() {
        let p = PairPotential::new(PotentialKind::HardCore { r: 1.0 }, 1);
        let pt = particle_free_energy_mc(&p, 0.5, 1.0, 4, 1000, 1).unwrap();
        assert!(pt.infinite && pt.f == f64::INFINITY);
    }

    #[test]
    fn tables_are_seed_deterministic() {
        let p = PairPotential::new(PotentialKind::HardCore { r: 0.5 }, 1);
        let opts = TableOptions { rho_max: 3.0, rho_cp: Some(2.0), samples: 2000, seed: 4 };
        let a = build_free_energy_table(&p, &[0.5, 0.25], 1.0, &opts).unwrap();
        let b = build_free_energy_table(&p, &[0.5, 0.25], 1.0, &opts).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.1[1].len(), 13);
        assert_eq!(a.0.case, Case::HardCore);
    }

    #[test]
    fn lennard_jones_stability_estimate_is_finite() {
        let p = PairPotential::new(PotentialKind::LennardJones { epsilon: 1.0, r: 1.0 }, 2);
        let b = estimate_stability_b(&p, 0.5, 4, 2000, 2).unwrap();
        assert!(b > 0.0 && b < 10.0, "{b}");
        let audit = stability_audit(&p, b, 0.5, 4, 2000, 3).unwrap();
        assert!(audit.pass);
    }
}
