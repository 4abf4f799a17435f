use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::numeric::interp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    HardCore {
        r: f64,
    },
    LennardJones {
        epsilon: f64,
        r: f64,
    },
    Morse {
        epsilon: f64,
        a: f64,
        r: f64,
    },
    SquareWell {
        r_core: f64,
        r_well: f64,
        depth: f64,
    },
    /// `v(|x|)` at increasing radii; `None` is `+∞`. Zero beyond the last
    /// radius, constant below the first.
    Table {
        r: Vec<f64>,
        v: Vec<Option<f64>>,
    },
}

/// `v(r) ≤ A r^{−λ}` for `r ≥ R₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Temperedness {
    pub a: f64,
    pub lambda_exp: f64,
    pub r0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    #[serde(flatten)]
    pub kind: PotentialKind,
    pub d: usize,
    #[serde(default)]
    pub stability_b: Option<f64>,
    #[serde(default)]
    pub superstability_c: Option<f64>,
    #[serde(default)]
    pub superstability_d: Option<f64>,
    #[serde(default)]
    pub temperedness: Option<Temperedness>,
}

impl PairPotential {
    pub fn new(kind: PotentialKind, d: usize) -> Self {
        PairPotential { kind, d, stability_b: None, superstability_c: None, superstability_d: None, temperedness: None }
    }

    pub fn zero(d: usize) -> Self {
        Self::new(PotentialKind::Table { r: vec![0.0, 1.0], v: vec![Some(0.0), Some(0.0)] }, d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return config("potential dimension must be positive");
        }
        match &self.kind {
            PotentialKind::HardCore { r } if !(*r > 0.0) => return config("hard core radius must be positive"),
            PotentialKind::LennardJones { epsilon, r } if !(*epsilon > 0.0 && *r > 0.0) => {
                return config("lennard-jones needs positive epsilon and r")
            }
            PotentialKind::Morse { epsilon, a, r } if !(*epsilon > 0.0 && *a > 0.0 && *r > 0.0) => {
                return config("morse needs positive epsilon, a and r")
            }
            PotentialKind::SquareWell { r_core, r_well, depth }
                if !(*r_core > 0.0 && r_well > r_core && *depth >= 0.0) =>
            {
                return config("square well needs 0 < r_core < r_well and depth >= 0")
            }
            PotentialKind::Table { r, v } => {
                if r.len() != v.len() || r.len() < 2 || r[0] < 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
                    return config("potential table needs increasing nonnegative radii");
                }
            }
            _ => {}
        }
        if let Some(t) = self.temperedness {
            if !(t.lambda_exp > self.d as f64) {
                return config(format!("temperedness exponent {} must exceed d = {}", t.lambda_exp, self.d));
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::HardCore { r: core } => {
                if r < *core {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            PotentialKind::LennardJones { epsilon, r: s } => {
                let q = (s / r).powi(6);
                4.0 * epsilon * (q * q - q)
            }
            PotentialKind::Morse { epsilon, a, r: s } => {
                let e = (-a * (r - s)).exp();
                epsilon * (e * e - 2.0 * e)
            }
            PotentialKind::SquareWell { r_core, r_well, depth } => {
                if r < *r_core {
                    f64::INFINITY
                } else if r < *r_well {
                    -depth
                } else {
                    0.0
                }
            }
            PotentialKind::Table { r: rs, v } => {
                if r > rs[rs.len() - 1] {
                    return 0.0;
                }
                let vals: Vec<f64> = v.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
                interp(rs, &vals, r)
            }
        }
    }

    /// Radius below which the potential is `+∞`, if any.
    pub fn core(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::HardCore { r } => Some(*r),
            PotentialKind::SquareWell { r_core, .. } => Some(*r_core),
            _ => None,
        }
    }

    /// Morse potentials are certified superstable only for `e^{aR} > 16`.
    pub fn certified_superstable(&self) -> Option<bool> {
        match &self.kind {
            PotentialKind::Morse { a, r, .. } => Some((a * r).exp() > 16.0),
            _ => None,
        }
    }

    /// Stability constant `B` with `H ≥ −NB` when it follows from the
    /// potential's form, else the user-supplied value.
    pub fn stability_constant(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::HardCore { .. } => Some(0.0),
            PotentialKind::SquareWell { r_core, r_well, depth } => {
                // Points within r_well of a particle, pairwise r_core apart:
                // disjoint balls of radius r_core/2 inside radius r_well + r_core/2.
                let k = ((r_well + 0.5 * r_core) / (0.5 * r_core)).powi(self.d as i32) - 1.0;
                Some(0.5 * depth * k.floor())
            }
            _ => self.stability_b,
        }
    }

    /// `Σ_{i<j} v(|x_i − x_j|)` with free boundaries; stops early at `+∞`.
    pub fn energy(&self, xs: &[f64]) -> f64 {
        let d = self.d;
        let n = xs.len() / d;
        let mut h = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let r2: f64 = (0..d).map(|k| (xs[i * d + k] - xs[j * d + k]).powi(2)).sum();
                let v = self.eval(r2.sqrt());
                if v == f64::INFINITY {
                    return f64::INFINITY;
                }
                h += v;
            }
        }
        h
    }
}
