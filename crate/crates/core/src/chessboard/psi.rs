use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::numeric::{adaptive_simpson, logsumexp};
use crate::spinmodel::{ModelParams, SiteMeasure};

/// The maximizing interval `S = [rho0, rho0 + width]` and the bound
/// `−dJ·width² + log ω(S)`, in log units per site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiBound {
    pub value: f64,
    pub rho0: f64,
    pub width: f64,
    pub log_mass: f64,
}

/// `{kγ^d : k = 1..32} ∪ {0.01, 0.02, …, 0.5}`.
pub fn default_xi_grid(p: &ModelParams) -> Vec<f64> {
    let a = p.atom();
    let mut xs: Vec<f64> = (1..=32).map(|k| k as f64 * a).chain((1..=50).map(|k| k as f64 / 100.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

const CELLS: usize = 1 << 14;

/// `max_S −dJ diam(S)² + log ω_{λ,γ}(S)` over intervals with left end on
/// the density grid and width from `xi`.
///
/// Discrete domain: windows of consecutive atoms; the penalty uses the
/// window's span, which never exceeds its width. Continuous domain: a
/// `2^14`-cell grid on the support, widths rounded down to whole cells.
pub fn psi_lower_bound(p: &ModelParams, xi: &[f64]) -> Result<PsiBound> {
    if xi.is_empty() || xi.iter().any(|&x| !(x >= 0.0)) {
        return config("interval widths must be nonnegative and nonempty");
    }
    let m = SiteMeasure::new(p)?;
    let dj = p.d as f64 * p.coupling();
    let mut best: Option<PsiBound> = None;
    let mut offer = |cand: PsiBound| {
        if cand.value.is_finite() && best.as_ref().is_none_or(|b| cand.value > b.value) {
            best = Some(cand);
        }
    };
    if m.is_discrete() {
        let (xs, lw) = m.support()?;
        let atom = m.atom();
        let mut spans: Vec<usize> = xi.iter().map(|&w| ((w / atom) * (1.0 + 1e-12)).floor() as usize).collect();
        spans.sort_unstable();
        spans.dedup();
        for span in spans {
            let span = span.min(xs.len() - 1);
            let width = span as f64 * atom;
            for i in 0..xs.len() - span {
                let lm = logsumexp(lw[i..=i + span].iter().copied());
                offer(PsiBound { value: -dj * width * width + lm, rho0: xs[i], width, log_mass: lm });
            }
        }
    } else {
        let hi = m.upper();
        let h = hi / CELLS as f64;
        let nodes: Vec<f64> = (0..=2 * CELLS).map(|i| m.log_weight(0.5 * h * i as f64)).collect();
        let top = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(Error::Degenerate("single-site measure has no mass".into()));
        }
        let g = |x: f64| {
            let w = m.log_weight(x);
            if w == f64::NEG_INFINITY {
                0.0
            } else {
                (w - top).exp()
            }
        };
        let mut cum = vec![0.0; CELLS + 1];
        for c in 0..CELLS {
            let a = h * c as f64;
            let peak = [nodes[2 * c], nodes[2 * c + 1], nodes[2 * c + 2]]
                .iter()
                .map(|&w| if w == f64::NEG_INFINITY { 0.0 } else { (w - top).exp() })
                .fold(0.0, f64::max);
            cum[c + 1] = cum[c] + adaptive_simpson(g, a, a + h, 1e-12 * h * peak.max(1e-300));
        }
        let mut cells: Vec<usize> = xi.iter().map(|&w| ((w / h) * (1.0 + 1e-12)).floor().max(1.0) as usize).collect();
        cells.sort_unstable();
        cells.dedup();
        for k in cells {
            let k = k.min(CELLS);
            let width = k as f64 * h;
            for i in 0..=CELLS - k {
                let mass = cum[i + k] - cum[i];
                if mass > 0.0 {
                    let lm = top + mass.ln();
                    offer(PsiBound { value: -dj * width * width + lm, rho0: h * i as f64, width, log_mass: lm });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Degenerate("every interval has zero mass".into()))
}

#[cfg(test)]
mod tests {
    use super::super::tests::atoms;
    use super::*;
    use crate::meanfield::FreeEnergySpec;
    use crate::spinmodel::{exact_log_partition, Domain};

    #[test]
    fn uncoupled_discrete_bound_is_total_mass() {
        let p = atoms(3, 2, 1, 0.0);
        let m = SiteMeasure::new(&p).unwrap();
        let b = psi_lower_bound(&p, &[10.0]).unwrap();
        assert!((b.value - m.log_total().unwrap()).abs() < 1e-14);
    }

    #[test]
    fn below_exact_pressure() {
        for j2 in [0.0, 0.3, 2.0] {
            let p = atoms(3, 4, 1, j2);
            let b = psi_lower_bound(&p, &default_xi_grid(&p)).unwrap();
            let z = exact_log_partition(&p).unwrap() / p.sites() as f64;
            assert!(z >= b.value - 1e-12, "J2 = {j2}: {z} < {}", b.value);
        }
    }

    #[test]
    fn continuous_uncoupled_approaches_total_mass() {
        let mut p = atoms(2, 2, 1, 0.0);
        p.spec = FreeEnergySpec::tonks(1.0, 1.0);
        p.domain = Domain::Continuous;
        p.gamma = 0.5;
        let m = SiteMeasure::new(&p).unwrap();
        let b = psi_lower_bound(&p, &[10.0]).unwrap();
        assert!((b.value - m.log_total().unwrap()).abs() < 1e-8, "{} vs {}", b.value, m.log_total().unwrap());
    }

    #[test]
    fn zero_width_on_atoms_picks_heaviest_atom() {
        let p = atoms(3, 2, 1, 5.0);
        let m = SiteMeasure::new(&p).unwrap();
        let (_, lw) = m.support().unwrap();
        let b = psi_lower_bound(&p, &[0.0]).unwrap();
        assert_eq!(b.value, lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
}
