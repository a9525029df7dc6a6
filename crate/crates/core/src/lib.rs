//! Decentralized seeking of variational generalized Nash equilibria for
//! continuous games with coupled affine inequality constraints.
//!
//! Players communicate over a connected graph and hold local copies of the
//! full decision profile (partial-decision information). The solver runs a
//! synchronous primal-dual iteration that mixes decision copies through
//! doubly stochastic weights, diffuses dual information through the gossip
//! matrix and converges linearly in the last iterate once the stepsizes sit
//! inside the certified region computed by [`stepsize`].
//!
//! Module map:
//! * [`topology`]: graphs, Metropolis weights, gossip matrix and its PSD
//!   square root, spectral constants.
//! * [`game`]: affine and Nash-Cournot games behind a partial-gradient
//!   interface, coupled constraints, extended profiles.
//! * [`solver`]: the decentralized iteration, its semi-centralized reference
//!   form, fixed points and the Lyapunov diagnostic.
//! * [`stepsize`]: the comparison matrix, stepsize bounds and contraction
//!   factor.
//! * [`oracle`]: centralized variational-inequality ground truth and KKT
//!   residuals.
//! * [`convergence`]: geometric rate fitting.
//! * [`io`]: JSON schemas and the trajectory CSV.
//! * [`fixtures`]: closed-form fixtures and seeded random instances.

pub mod convergence;
pub mod fixtures;
pub mod game;
pub mod io;
pub mod oracle;
pub mod solver;
pub mod stepsize;
pub mod topology;

pub use convergence::{fit_rate, RateFit};
pub use game::{
    affine_from_cournot, monotonicity_constants, AffineGame, CoupledConstraint, CournotGame, Dims,
    ExtendedProfile, Game, MonotonicityConstants,
};
pub use oracle::{kkt_residual, project_polyhedron, recover_multiplier, solve_vi, KktReport, ViProblem};
pub use solver::{
    fixed_point_from_solution, lyapunov_value, run, semi_centralized_round, synchronous_round,
    FixedPoint, InitMode, PlayerState, SolverConfig, SolverForm, SolverState, Trajectory,
};
pub use stepsize::{
    alpha_bound, beta_gamma_bounds, contraction_factor, m_alpha, rho_m_alpha, StepsizeError,
    TheoryConstants,
};
pub use topology::{build_metropolis, consensus_gap, gossip_matrix, matrix_sqrt_psd, Topology};
