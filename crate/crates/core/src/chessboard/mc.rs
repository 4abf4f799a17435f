use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_fit, in_set, orbit_group, BlockSpec, Event};
use crate::error::{config, Error, Result};
use crate::numeric::LogAcc;
use crate::rng::stream;
use crate::spinmodel::{ModelParams, SiteMeasure, Torus};

/// Monte Carlo seminorm. Not a certified value: the estimate rests on
/// importance sampling whose variance is uncontrolled for rare patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSeminorm {
    pub value: f64,
    pub log_value: f64,
    pub log_se: f64,
    pub samples: usize,
    pub heuristic: bool,
}

/// Single-site law on a finite set of points, as values and probabilities.
struct SiteLaw {
    xs: Vec<f64>,
    lw: Vec<f64>,
    width: f64,
}

const CELLS: usize = 4096;

impl SiteLaw {
    fn new(m: &SiteMeasure) -> Result<Self> {
        if m.is_discrete() {
            let (xs, lw) = m.support()?;
            Ok(SiteLaw { xs, lw, width: 0.0 })
        } else {
            let h = m.upper() / CELLS as f64;
            let xs: Vec<f64> = (0..CELLS).map(|i| h * (i as f64 + 0.5)).collect();
            let lw = xs.iter().map(|&x| m.log_weight(x) + h.ln()).collect();
            Ok(SiteLaw { xs, lw, width: h })
        }
    }

    /// Cumulative probabilities restricted to the sets, and the log mass.
    fn restricted(&self, sets: &[Vec<[f64; 2]>]) -> (Vec<f64>, f64) {
        let keep: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.lw)
            .map(|(&x, &w)| if sets.iter().all(|s| in_set(s, x)) { w } else { f64::NEG_INFINITY })
            .collect();
        let mut acc = LogAcc::new();
        keep.iter().for_each(|&w| acc.add(w));
        let lz = acc.value();
        let mut c = 0.0;
        let cdf = keep
            .iter()
            .map(|&w| {
                c += (w - lz).exp();
                c
            })
            .collect();
        (cdf, lz)
    }

    fn draw<R: Rng>(&self, cdf: &[f64], rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        self.xs[i] + self.width * (rng.random::<f64>() - 0.5)
    }
}

/// `‖E‖` from `P(⋂τE) = Z_c/Z`, each side written as a product-measure
/// mass times `E[e^{−J·Σ_E|Δη|²}]` under the product law, the constrained
/// side drawing pattern sites from the single-site law restricted to the
/// pattern.
pub fn chessboard_seminorm_mc(
    ev: &Event,
    block: &BlockSpec,
    p: &ModelParams,
    samples: usize,
    seed: u64,
) -> Result<McSeminorm> {
    if samples < 2 {
        return config("need at least two samples");
    }
    check_fit(p, block, ev)?;
    let group = orbit_group(block)?;
    let torus = Torus::new(p.d, p.l);
    let pat = ev.resolve(&torus)?;
    let mut constraint: Vec<Vec<Vec<[f64; 2]>>> = vec![Vec::new(); torus.n];
    for g in &group {
        for (r, set) in &pat.0 {
            constraint[g[*r] as usize].push(set.clone());
        }
    }
    let law = SiteLaw::new(&SiteMeasure::new(p)?)?;
    let (free_cdf, free_lz) = law.restricted(&[]);
    let mut log_ratio = 0.0;
    let mut cdfs = Vec::with_capacity(torus.n);
    for sets in &constraint {
        if sets.is_empty() {
            cdfs.push(None);
        } else {
            let (cdf, lz) = law.restricted(sets);
            if lz == f64::NEG_INFINITY {
                return Ok(McSeminorm {
                    value: 0.0,
                    log_value: f64::NEG_INFINITY,
                    log_se: 0.0,
                    samples,
                    heuristic: true,
                });
            }
            log_ratio += lz - free_lz;
            cdfs.push(Some(cdf));
        }
    }
    let edges: Vec<(usize, usize)> = torus.edges().collect();
    let j = p.coupling();
    let chunks = 64usize;
    let per = samples.div_ceil(chunks);
    let sums: Vec<[(f64, f64); 2]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64, 0);
            let mut out = [(0.0, 0.0); 2];
            let mut v = vec![0.0; torus.n];
            for _ in 0..per {
                for (side, slot) in out.iter_mut().enumerate() {
                    for (x, cdf) in v.iter_mut().zip(&cdfs) {
                        let use_c = side == 1 && cdf.is_some();
                        *x = law.draw(if use_c { cdf.as_ref().unwrap() } else { &free_cdf }, &mut rng);
                    }
                    let g: f64 = edges.iter().map(|&(a, b)| (v[a] - v[b]).powi(2)).sum();
                    let w = (-j * g).exp();
                    slot.0 += w;
                    slot.1 += w * w;
                }
            }
            out
        })
        .collect();
    let n = (per * chunks) as f64;
    let mut stats = [(0.0, 0.0); 2];
    for s in &sums {
        for k in 0..2 {
            stats[k].0 += s[k].0;
            stats[k].1 += s[k].1;
        }
    }
    let mut logs = [0.0; 2];
    let mut rel2 = 0.0;
    for k in 0..2 {
        let mean = stats[k].0 / n;
        if !(mean > 0.0) {
            return Err(Error::Degenerate("coupling weights underflow; estimator is unusable".into()));
        }
        let var = (stats[k].1 / n - mean * mean).max(0.0);
        logs[k] = mean.ln();
        rel2 += var / (n * mean * mean);
    }
    let size = group.len() as f64;
    let log_value = (log_ratio + logs[1] - logs[0]) / size;
    Ok(McSeminorm {
        value: log_value.exp(),
        log_value,
        log_se: rel2.sqrt() / size,
        samples: per * chunks,
        heuristic: true,
    })
}
