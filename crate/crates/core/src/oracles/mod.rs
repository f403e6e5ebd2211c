//! Independent solvers the flow is checked against: closed-form kernels,
//! a finite-volume Fokker–Planck solver, Euler–Maruyama paths and the
//! transition matrices built from either flow.

mod fp;
mod kernels;
mod sde;
mod semigroup;

pub use fp::{fp_solve, fp_solve_with, FpConfig, FpSolution};
pub use kernels::{
    gaussian_cell_masses, neumann_cell_masses, neumann_terms_for, neumann_uniform_kernel, ou_transition_exact, OuMoments,
    SeriesValue,
};
pub use sde::{fold_into, sde_simulate, SdeSample};
pub use semigroup::{
    chapman_kolmogorov_error, discrete_lipschitz, lip_contraction_check, reversibility_check, semigroup_matrix, LipReport,
    ReversibilityReport, SemigroupBackend, SemigroupMatrix, SEMIGROUP_MAX_CELLS,
};
