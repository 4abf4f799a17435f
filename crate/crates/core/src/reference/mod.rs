//! Particle-system inputs: pair potentials, Monte Carlo free energies and
//! audits of the assumptions the spin model relies on.

mod audit;
mod particle;
mod potential;

pub use audit::{
    bessel_j0, check_convergence_assumptions, check_superstability_bound, check_superstability_witness,
    exact_hard_rod_spec, temperedness_audit, BoundReport, ConvergenceOptions, ConvergenceReport, TemperednessAudit,
    Witness, WitnessReport,
};
pub use particle::{
    build_free_energy_table, estimate_stability_b, particle_free_energy_mc, stability_audit, FreeEnergyPoint,
    StabilityAudit, TableOptions,
};
pub use potential::{PairPotential, PotentialKind, Temperedness};
