use std::path::PathBuf;

use kacbox::chessboard::{BlockSpec, Event};
use kacbox::meanfield::FreeEnergySpec;
use kacbox::reference::{ConvergenceOptions, PairPotential, Witness};
use kacbox::spinmodel::{Init, ModelParams, Partition, SamplerSettings};
use kacbox::transition::{BranchPaths, ScanSettings};
use kacbox::MeanFieldOptions;
use serde::{Deserialize, Serialize};

/// One JSON document per run. Each subcommand reads the blocks it needs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: Option<ModelParams>,
    #[serde(default)]
    pub meanfield: Option<MeanFieldBlock>,
    #[serde(default)]
    pub regions: Option<RegionsBlock>,
    #[serde(default)]
    pub freeenergy: Option<FreeEnergyBlock>,
    #[serde(default)]
    pub sample: Option<SampleBlock>,
    #[serde(default)]
    pub chessboard: Option<ChessboardBlock>,
    #[serde(default)]
    pub thetas: Option<ThetasBlock>,
    #[serde(default)]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub verify: Option<VerifyBlock>,
    #[serde(default)]
    pub report: Option<ReportBlock>,
}

/// Overrides for the mean-field analysis; `spec` and `alpha` default to
/// the model's.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldBlock {
    #[serde(default)]
    pub spec: Option<FreeEnergySpec>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub options: Option<MeanFieldOptions>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsBlock {
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergyBlock {
    pub potential: PairPotential,
    pub gammas: Vec<f64>,
    #[serde(default = "unit")]
    pub beta: f64,
    pub rho_max: f64,
    #[serde(default)]
    pub rho_cp: Option<f64>,
    pub samples: usize,
    #[serde(default)]
    pub witness: Option<Witness>,
    #[serde(default = "witness_tol")]
    pub witness_tol: f64,
    /// `(c, d)` of the superstability bound to test against the table.
    #[serde(default)]
    pub superstability: Option<[f64; 2]>,
    /// Limit free energy for the convergence checks.
    #[serde(default)]
    pub limit: Option<FreeEnergySpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceOptions>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    pub settings: SamplerSettings,
    /// Defaults to a constant start at `ρ_{*,−}`, or 0 without coexistence.
    #[serde(default)]
    pub init: Option<Init>,
    /// Defaults to the good regions when the model has coexistence.
    #[serde(default)]
    pub partition: Option<Partition>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedEvent {
    /// Index into the block's reflection group.
    pub element: usize,
    pub event: Event,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChessboardBlock {
    pub block: BlockSpec,
    pub events: Vec<PlacedEvent>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetasBlock {
    pub gammas: Vec<f64>,
    #[serde(default = "five")]
    pub lambda_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureBlock {
    /// Offsets from `λ_*` at which to compare with mean field.
    pub offsets: Vec<f64>,
    pub paths: BranchPaths,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    /// Explicit grid; defaults to `points` evenly spaced values on `[λ₋, λ₊]`.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default = "five")]
    pub points: usize,
    pub settings: ScanSettings,
    #[serde(default)]
    pub pressure: Option<PressureBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChessboardCase {
    pub name: String,
    pub model: ModelParams,
    pub block: BlockSpec,
    pub events: Vec<PlacedEvent>,
    /// Multiplies the product of seminorms; values below 1 make a fixture
    /// that must fail.
    #[serde(default = "unit")]
    pub rhs_scale: f64,
}

pub const SUITES: [&str; 7] = ["chessboard", "orbit", "psi", "ds", "witness", "hard-rods", "cases"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default = "all_suites")]
    pub suites: Vec<String>,
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default)]
    pub cases: Vec<ChessboardCase>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock { suites: all_suites(), trials: hundred(), cases: Vec::new() }
    }
}

/// Artifacts of earlier runs, relative to the config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBlock {
    #[serde(default)]
    pub thetas: Option<PathBuf>,
    #[serde(default)]
    pub scans: Vec<PathBuf>,
    #[serde(default)]
    pub pressures: Vec<PathBuf>,
}

fn unit() -> f64 {
    1.0
}

fn witness_tol() -> f64 {
    1e-9
}

fn five() -> usize {
    5
}

fn hundred() -> usize {
    100
}

fn all_suites() -> Vec<String> {
    SUITES.iter().map(|s| s.to_string()).collect()
}
