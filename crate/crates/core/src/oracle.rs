//! Centralized ground truth: solve the variational inequality with full
//! information, recover the shared multiplier and measure KKT residuals.
//!
//! The variational equilibrium is the unique solution of
//! `F(x*)^T (x - x*) >= 0` for all `x` with `A x <= b` when `F` is strongly
//! monotone. It is computed by the projected-gradient iteration
//! `x <- P(x - eta F(x))` with `eta = mu / L^2`, a contraction with factor
//! `sqrt(1 - mu^2 / L^2)`. Projections onto the polyhedron are done through
//! the dual: maximize `-||A^T eta||^2 / 2 + eta^T (A z - b)` over `eta >= 0`
//! by projected gradient with stepsize `1 / lambda_max(A A^T)`.

use crate::game::{CoupledConstraint, Game, GameError};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Projected-gradient tolerance on the dual of the polyhedral projection.
const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_MAX_ITERS: usize = 200_000;
/// KKT tolerance the projection output must satisfy.
const PROJECTION_VERIFY_TOL: f64 = 1e-9;
/// Rows with residual above this (negative) threshold count as active.
const ACTIVE_SET_TOL: f64 = 1e-7;
/// Residual a recovered multiplier must reach.
const MULTIPLIER_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("iteration budget of {iterations} exhausted with residual {residual:.3e}")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("recovered multiplier leaves KKT residual {residual:.3e}, the active set is likely degenerate")]
    MultiplierInconsistent { residual: f64 },
    #[error("variational problem requires mu > 0, got {mu:.3e}")]
    NotStronglyMonotone { mu: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// A strongly monotone variational inequality over the coupled polyhedron.
pub struct ViProblem<'a> {
    game: &'a dyn Game,
    pub mu: f64,
    pub l: f64,
}

impl<'a> ViProblem<'a> {
    pub fn new(game: &'a dyn Game, mu: f64, l: f64) -> Result<Self, OracleError> {
        if mu <= 0.0 {
            return Err(OracleError::NotStronglyMonotone { mu });
        }
        Ok(Self { game, mu, l })
    }

    /// Builds the problem from an affine game, deriving `mu` and `L` from
    /// the affine map itself.
    pub fn from_affine(game: &'a crate::game::AffineGame) -> Result<Self, OracleError> {
        let k = crate::game::monotonicity_constants(game)?;
        Self::new(game, k.mu, k.l)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
        Ok(self.game.pseudo_gradient(x)?)
    }

    pub fn constraint(&self) -> &CoupledConstraint {
        self.game.constraint()
    }

    /// Default projected-gradient stepsize `mu / L^2`.
    pub fn vi_stepsize(&self) -> f64 {
        self.mu / (self.l * self.l)
    }
}

/// The four KKT measures at a primal-dual pair, each nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `||F(x) + A^T lambda||_inf`
    pub stationarity: f64,
    /// `||max(Ax - b, 0)||_inf`
    pub primal_violation: f64,
    /// `||max(-lambda, 0)||_inf`
    pub dual_violation: f64,
    /// `|lambda^T (Ax - b)|`
    pub complementarity: f64,
    /// Maximum of the four measures.
    pub residual: f64,
}

/// KKT measures from a precomputed gradient value.
pub fn kkt_report_raw(
    f_at_x: &DVector<f64>,
    constraint: &CoupledConstraint,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<KktReport, GameError> {
    let slack = constraint.residual(x)?;
    if lambda.len() != constraint.rows() {
        return Err(GameError::DimensionMismatch {
            what: "multiplier",
            expected: constraint.rows(),
            got: lambda.len(),
        });
    }
    let stationarity = (f_at_x + constraint.a().transpose() * lambda).amax();
    let primal_violation = slack.iter().fold(0.0f64, |acc, &s| acc.max(s.max(0.0)));
    let dual_violation = lambda.iter().fold(0.0f64, |acc, &l| acc.max((-l).max(0.0)));
    let complementarity = lambda.dot(&slack).abs();
    let residual = stationarity
        .max(primal_violation)
        .max(dual_violation)
        .max(complementarity);
    Ok(KktReport {
        stationarity,
        primal_violation,
        dual_violation,
        complementarity,
        residual,
    })
}

/// KKT measures of `(x, lambda)` for a variational problem.
pub fn kkt_residual(
    problem: &ViProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<KktReport, OracleError> {
    let f = problem.gradient(x)?;
    Ok(kkt_report_raw(&f, problem.constraint(), x, lambda)?)
}

/// Euclidean projection onto `{x : A x <= b}` via dual projected gradient.
pub fn project_polyhedron(
    z: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>, OracleError> {
    project_polyhedron_with(z, a, b, PROJECTION_TOL, PROJECTION_MAX_ITERS)
}

pub fn project_polyhedron_with(
    z: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>, OracleError> {
    let az_b = a * z - b;
    if az_b.max() <= 0.0 {
        return Ok(z.clone());
    }
    let aat = a * a.transpose();
    let lam_max = SymmetricEigen::new(aat.clone()).eigenvalues.max().max(1e-300);
    let step = 1.0 / lam_max;
    let m = b.len();
    let mut eta = DVector::zeros(m);
    let mut pg_norm = f64::INFINITY;
    for _ in 0..max_iters {
        // Dual gradient of the projection problem at eta.
        let grad = &az_b - &aat * &eta;
        let eta_next = (&eta + &grad * step).map(|v| v.max(0.0));
        pg_norm = ((&eta_next - &eta) / step).amax();
        eta = eta_next;
        if pg_norm <= tol {
            let out = z - a.transpose() * &eta;
            let slack = a * &out - b;
            let scale = 1.0 + az_b.amax();
            let feas = slack.iter().fold(0.0f64, |acc, &s| acc.max(s.max(0.0)));
            let compl = eta.dot(&slack).abs();
            if feas <= PROJECTION_VERIFY_TOL * scale && compl <= PROJECTION_VERIFY_TOL * scale {
                return Ok(out);
            }
        }
    }
    Err(OracleError::MaxIterExceeded {
        iterations: max_iters,
        residual: pg_norm,
    })
}

#[derive(Debug, Clone)]
pub struct ViSolution {
    pub x_star: DVector<f64>,
    pub iterations: usize,
}

/// Projected-gradient solve of the variational inequality, started from the
/// constraint's stored feasible point. Terminates once the natural residual
/// `||x - P(x - eta F(x))||_inf` drops to `tol` and re-verifies that
/// certificate at the returned point. Inner projections are solved beyond
/// their default tolerance when the outer tolerance requires it.
pub fn solve_vi(
    problem: &ViProblem,
    tol: f64,
    max_iters: usize,
) -> Result<ViSolution, OracleError> {
    let constraint = problem.constraint();
    let a = constraint.a();
    let b = constraint.b();
    let eta = problem.vi_stepsize();
    let proj_tol = (tol * 1e-2).min(PROJECTION_TOL);
    let project = |z: &DVector<f64>| project_polyhedron_with(z, a, b, proj_tol, PROJECTION_MAX_ITERS);
    let mut x = constraint.feasible_point().clone();
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iters {
        let f = problem.gradient(&x)?;
        let x_next = project(&(&x - &f * eta))?;
        residual = (&x - &x_next).amax();
        if residual <= tol {
            let f_next = problem.gradient(&x_next)?;
            let x_verify = project(&(&x_next - &f_next * eta))?;
            if (&x_next - &x_verify).amax() <= tol {
                return Ok(ViSolution {
                    x_star: x_next,
                    iterations: iteration,
                });
            }
        }
        x = x_next;
    }
    Err(OracleError::MaxIterExceeded {
        iterations: max_iters,
        residual,
    })
}

/// Recovers the shared multiplier of the variational equilibrium: nonnegative
/// least squares of `F(x*) + A_act^T lambda_act = 0` over the active rows,
/// zero elsewhere, verified against the full KKT system.
pub fn recover_multiplier(
    problem: &ViProblem,
    x_star: &DVector<f64>,
) -> Result<DVector<f64>, OracleError> {
    let constraint = problem.constraint();
    let f = problem.gradient(x_star)?;
    let slack = constraint.residual(x_star)?;
    let active: Vec<usize> = (0..constraint.rows())
        .filter(|&r| slack[r] >= -ACTIVE_SET_TOL)
        .collect();
    let mut lambda = DVector::zeros(constraint.rows());
    if !active.is_empty() {
        let a_act = DMatrix::from_fn(active.len(), constraint.a().ncols(), |r, c| {
            constraint.a()[(active[r], c)]
        });
        let gram = &a_act * a_act.transpose();
        let lam_max = SymmetricEigen::new(gram.clone())
            .eigenvalues
            .max()
            .max(1e-300);
        let step = 1.0 / lam_max;
        let rhs = &a_act * &f;
        let mut lam_act = DVector::zeros(active.len());
        let scale = 1.0 + rhs.amax();
        for _ in 0..PROJECTION_MAX_ITERS {
            let grad = &rhs + &gram * &lam_act;
            let next = (&lam_act - &grad * step).map(|v| v.max(0.0));
            let pg = ((&next - &lam_act) / step).amax();
            lam_act = next;
            if pg <= 1e-12 * scale {
                break;
            }
        }
        for (k, &r) in active.iter().enumerate() {
            lambda[r] = lam_act[k];
        }
    }
    let report = kkt_report_raw(&f, constraint, x_star, &lambda)?;
    if report.residual > MULTIPLIER_TOL {
        return Err(OracleError::MultiplierInconsistent {
            residual: report.residual,
        });
    }
    Ok(lambda)
}
