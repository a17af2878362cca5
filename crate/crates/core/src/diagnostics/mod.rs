//! Checks on kernels, potentials and trajectories, collected into [`Report`]s.

mod energy;
mod extension;
mod local_limit;
mod report;
mod spectral;

pub use energy::{
    allen_cahn_run, energy_estimate_check, interpolant_gap_check, max_obstacle_violation, obstacle_feasibility,
    obstacle_sweep_check, tau_sweep_check, total_energy, zeta_l1_bound_check, zeta_l1_sum,
};
pub use extension::{neumann_extension, neumann_extension_check, neumann_residuals};
pub use local_limit::{fit_local_scale, local_limit_scale, local_limit_study, normalized_kernel, LocalLimitStudy};
pub use report::{Check, Report, Status};
pub use spectral::{
    generalized_eigenvalues, local_eigen_ratios, poincare_blowup_check, poincare_constant, poincare_refinement,
    poincare_stability_check,
};
