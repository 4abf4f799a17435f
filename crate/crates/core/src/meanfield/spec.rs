use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::numeric::interp;

/// Whether densities are bounded by close packing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    HardCore,
    SoftCore,
}

/// One tabulated free-energy curve. `gamma == 0` marks the limit `f`.
/// `f` entries of `None` stand for `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable {
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub f: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
}

impl ScaleTable {
    pub fn values(&self) -> Vec<f64> {
        self.f.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FreeEnergyKind {
    IdealGas,
    Tonks { b: f64 },
    Tabulated { tables: Vec<ScaleTable> },
}

/// The reference free-energy family `f_γ` together with its limit `f`.
///
/// Analytic kinds use the limit `f` at every scale `γ`; tabulated kinds
/// carry one table per `γ`. A missing `alpha_max` means `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergySpec {
    #[serde(flatten)]
    pub kind: FreeEnergyKind,
    pub case: Case,
    #[serde(default)]
    pub rho_cp: Option<f64>,
    #[serde(default)]
    pub rho_max: Option<f64>,
    #[serde(default)]
    pub alpha_max: Option<f64>,
    pub beta: f64,
}

/// A free energy resolved at one scale, cheap to evaluate in inner loops.
#[derive(Clone, Debug)]
pub enum ScaleFn {
    Ideal { beta: f64 },
    Tonks { b: f64, beta: f64 },
    Table { rho: Vec<f64>, f: Vec<f64>, hard_max: Option<f64> },
}

impl ScaleFn {
    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            ScaleFn::Ideal { beta } => {
                if rho == 0.0 {
                    0.0
                } else {
                    rho * (rho.ln() - 1.0) / beta
                }
            }
            ScaleFn::Tonks { b, beta } => {
                if rho == 0.0 {
                    0.0
                } else if b * rho >= 1.0 {
                    f64::INFINITY
                } else {
                    rho * ((rho / (1.0 - b * rho)).ln() - 1.0) / beta
                }
            }
            ScaleFn::Table { rho: ref xs, ref f, hard_max } => {
                if let Some(m) = hard_max {
                    if rho > m {
                        return f64::INFINITY;
                    }
                }
                if rho > xs[xs.len() - 1] {
                    return f64::INFINITY;
                }
                interp(xs, f, rho)
            }
        }
    }
}

impl FreeEnergySpec {
    pub fn ideal_gas(beta: f64) -> Self {
        FreeEnergySpec {
            kind: FreeEnergyKind::IdealGas,
            case: Case::SoftCore,
            rho_cp: None,
            rho_max: None,
            alpha_max: Some(0.0),
            beta,
        }
    }

    /// Hard rods of length `b`; `ρ_max` is set to `2ρ_cp`, beyond which the
    /// hard-core extension is `+∞` anyway.
    pub fn tonks(b: f64, beta: f64) -> Self {
        FreeEnergySpec {
            kind: FreeEnergyKind::Tonks { b },
            case: Case::HardCore,
            rho_cp: Some(1.0 / b),
            rho_max: Some(2.0 / b),
            alpha_max: None,
            beta,
        }
    }

    /// A soft-core limit free energy given on a grid.
    pub fn tabulated_limit(rho: Vec<f64>, f: Vec<f64>, beta: f64) -> Self {
        FreeEnergySpec {
            kind: FreeEnergyKind::Tabulated {
                tables: vec![ScaleTable {
                    gamma: 0.0,
                    rho,
                    f: f.into_iter().map(|v| v.is_finite().then_some(v)).collect(),
                    stderr: None,
                }],
            },
            case: Case::SoftCore,
            rho_cp: None,
            rho_max: None,
            alpha_max: None,
            beta,
        }
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max.unwrap_or(f64::INFINITY)
    }

    pub fn is_hard_core(&self) -> bool {
        self.case == Case::HardCore
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return config("beta must be positive");
        }
        match self.case {
            Case::HardCore => {
                let (Some(cp), Some(mx)) = (self.rho_cp, self.rho_max) else {
                    return config("hard-core spec needs rho_cp and rho_max");
                };
                if !(cp > 0.0 && cp < mx) {
                    return config("hard-core spec needs 0 < rho_cp < rho_max");
                }
            }
            Case::SoftCore => {
                if self.alpha_max() < 0.0 {
                    return config("alpha_max must be nonnegative");
                }
            }
        }
        match &self.kind {
            FreeEnergyKind::Tonks { b } if !(*b > 0.0) => return config("tonks: b must be positive"),
            FreeEnergyKind::Tabulated { tables } => {
                if tables.is_empty() {
                    return config("tabulated spec has no tables");
                }
                for t in tables {
                    if t.rho.len() != t.f.len() || t.rho.len() < 2 {
                        return config(format!("table at gamma={} malformed", t.gamma));
                    }
                    if t.rho.windows(2).any(|w| w[1] <= w[0]) || t.rho[0] != 0.0 {
                        return config(format!("table at gamma={} must start at 0 and increase", t.gamma));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The model is well defined unless the quadratic attraction beats
    /// the growth of `f`: `α > 0` together with `α ≥ α_max` (soft core).
    pub fn check_alpha(&self, alpha: f64) -> Result<()> {
        if self.case == Case::SoftCore && alpha > 0.0 && alpha >= self.alpha_max() {
            return Err(Error::IllDefined(format!("alpha = {alpha} is not below alpha_max = {}", self.alpha_max())));
        }
        Ok(())
    }

    fn hard_max(&self) -> Option<f64> {
        match self.case {
            Case::HardCore => self.rho_max,
            Case::SoftCore => None,
        }
    }

    fn table_fn(&self, t: &ScaleTable) -> ScaleFn {
        ScaleFn::Table { rho: t.rho.clone(), f: t.values(), hard_max: self.hard_max() }
    }

    /// The limit free energy `f`, extended by `+∞` above `ρ_cp` (hard core).
    pub fn limit_fn(&self) -> Result<ScaleFn> {
        let base = match &self.kind {
            FreeEnergyKind::IdealGas => ScaleFn::Ideal { beta: self.beta },
            FreeEnergyKind::Tonks { b } => ScaleFn::Tonks { b: *b, beta: self.beta },
            FreeEnergyKind::Tabulated { tables } => {
                let t = tables
                    .iter()
                    .find(|t| t.gamma == 0.0)
                    .ok_or_else(|| Error::Config("tabulated spec has no limit table (gamma = 0)".into()))?;
                self.table_fn(t)
            }
        };
        Ok(match (self.case, base) {
            (Case::HardCore, ScaleFn::Table { rho, f, .. }) => ScaleFn::Table { rho, f, hard_max: self.rho_cp },
            (_, b) => b,
        })
    }

    /// `f_γ` at scale `gamma`.
    pub fn scale_fn(&self, gamma: f64) -> Result<ScaleFn> {
        match &self.kind {
            FreeEnergyKind::Tabulated { tables } => {
                let t = tables
                    .iter()
                    .find(|t| t.gamma > 0.0 && (t.gamma - gamma).abs() <= 1e-12 * gamma)
                    .ok_or_else(|| Error::Config(format!("no table for gamma = {gamma}")))?;
                Ok(self.table_fn(t))
            }
            FreeEnergyKind::IdealGas => Ok(ScaleFn::Ideal { beta: self.beta }),
            FreeEnergyKind::Tonks { b } => Ok(ScaleFn::Tonks { b: *b, beta: self.beta }),
        }
    }

    pub fn limit(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return domain(format!("negative density {rho}"));
        }
        Ok(self.limit_fn()?.eval(rho))
    }

    /// Largest jump of `f` between adjacent points of an `n`-point grid on
    /// `[0, hi]`, skipping the cells touching `ρ_cp` and infinite values.
    pub fn max_jump(&self, hi: f64, n: usize) -> Result<f64> {
        let f = self.limit_fn()?;
        let h = hi / (n - 1) as f64;
        let mut worst: f64 = 0.0;
        for i in 0..n - 1 {
            let (a, b) = (h * i as f64, h * (i + 1) as f64);
            if let Some(cp) = self.rho_cp {
                if (a - cp).abs() <= 2.0 * h || (b - cp).abs() <= 2.0 * h {
                    continue;
                }
            }
            let (fa, fb) = (f.eval(a), f.eval(b));
            if fa.is_finite() && fb.is_finite() {
                worst = worst.max((fb - fa).abs());
            }
        }
        Ok(worst)
    }
}
