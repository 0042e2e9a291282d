//! Exactly self-similar blow-up profiles of the generalized De Gregorio
//! model w_t + a u w_x = u_x w, u_x = Hw.
//!
//! Profiles are computed in the variable y = |x|^α on a log-uniform grid.

pub mod error;
pub mod evolve;
pub mod exact;
pub mod grid;
pub mod hardy;
pub mod hilbert;
pub mod linop;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{
    bar_norm, differentiate, interpolate, make_grid, norm, Grid, GridFunction, TailFit, TailModel,
    WeightedNormSpec,
};
pub use evolve::{
    check_self_similar_collapse, clm_datum, detect_blowup, evolve, exact_datum, profile_datum,
    BlowupFit, EvolutionGrid, EvolveConfig, Termination, Trajectory,
};
pub use exact::{clm_exact_solution, exact_profile, self_similar_evaluate, ExactProfile};
pub use hilbert::{
    apply_fractional_hilbert, estimate_l2_norm, hilbert_derivative, hilbert_slope_at_zero,
    kernel_chain, FractionalHilbert, HilbertPlan, KernelEval, NormEstimate, Transform,
};
pub use hardy::{apply_i, check_i_bounds, hardy_ratio, HardyReport};
pub use linop::{
    apply_l, apply_l_inverse, compute_g, compute_h, solve_bordered, y_functional, BasePoint,
    BorderedSolution,
};
pub use solver::{
    compute_velocity_ratio, continuation, residual_phi, solve_profile, Continuation, LambdaFit,
    ProfileSolution, ProfileSolver, SolverConfig,
};
pub use verify::{run_suite, Check, CheckReport, Suite, VerifyConfig};
