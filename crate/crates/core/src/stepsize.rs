//! Stepsize bounds and the contraction certificate.
//!
//! The linear-convergence certificate is built from a 2x2 comparison matrix
//! `M_alpha` controlling the primal error, explicit upper bounds on the three
//! stepsizes, and the contraction factor
//! `a = max(rho(M_alpha), 1 - alpha beta lambda_min(Pi Pi^T), 1 - s_min(B)^2 gamma)`.
//! The bounds are sufficient, not tight: the solver runs with any positive
//! stepsizes and this module only certifies.

use crate::game::{CoupledConstraint, MonotonicityConstants};
use crate::topology::Topology;
use nalgebra::Matrix2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepsizeError {
    #[error(
        "consensus gap sigma = 0 (complete-average mixing): the beta bound collapses to zero and certifies no stepsize"
    )]
    DegenerateSigma,
}

/// Every constant entering the stepsize bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// Strong-monotonicity constant of the pseudo-gradient.
    pub mu: f64,
    /// Per-player Lipschitz constant of the pseudo-gradient.
    pub l: f64,
    /// Consensus gap of the mixing matrix.
    pub sigma: f64,
    pub n_players: usize,
    /// Largest eigenvalue of `Pi^T Pi = blockdiag(A_i^T A_i)`.
    pub lam_max_pi_t_pi: f64,
    /// Smallest eigenvalue of `Pi Pi^T = blockdiag(A_i A_i^T)`.
    pub lam_min_pi_pi_t: f64,
    /// Largest eigenvalue of the gossip square root `B`.
    pub lam_max_b: f64,
    /// Smallest nonzero singular value of `B`.
    pub min_nonzero_sv_b: f64,
}

impl TheoryConstants {
    pub fn new(
        constants: MonotonicityConstants,
        topology: &Topology,
        constraint: &CoupledConstraint,
    ) -> Self {
        Self {
            mu: constants.mu,
            l: constants.l,
            sigma: topology.sigma(),
            n_players: topology.n(),
            lam_max_pi_t_pi: constraint.lambda_max_pi_t_pi(),
            lam_min_pi_pi_t: constraint.lambda_min_pi_pi_t(),
            lam_max_b: topology.lambda_max_b(),
            min_nonzero_sv_b: topology.min_nonzero_sv_b(),
        }
    }
}

/// The symmetric 2x2 comparison matrix coupling the consensus-average error
/// with the consensus deviation:
/// `[[1 - (mu/N) a + L^2 a^2, (sigma+1) L a], [(sigma+1) L a, sigma^2 + 3 sigma L a + L^2 a^2]]`.
pub fn m_alpha(c: &TheoryConstants, alpha: f64) -> Matrix2<f64> {
    let n = c.n_players as f64;
    let la = c.l * alpha;
    let m11 = 1.0 - (c.mu / n) * alpha + la * la;
    let m12 = (c.sigma + 1.0) * la;
    let m22 = c.sigma * c.sigma + 3.0 * c.sigma * la + la * la;
    Matrix2::new(m11, m12, m12, m22)
}

/// Spectral radius of `M_alpha` through the closed form for symmetric 2x2
/// matrices: eigenvalues are `mid +- sqrt(((a-d)/2)^2 + b^2)`.
pub fn rho_m_alpha(c: &TheoryConstants, alpha: f64) -> f64 {
    let m = m_alpha(c, alpha);
    spectral_radius_sym2(&m)
}

fn spectral_radius_sym2(m: &Matrix2<f64>) -> f64 {
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    if b == 0.0 {
        // Diagonal case, exact: eigenvalues are the diagonal entries.
        return a.abs().max(d.abs());
    }
    let mid = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mid + radius).abs().max((mid - radius).abs())
}

/// Feasible range for the primal stepsize with the three candidate terms
/// `(1-sigma^2)/(9 sigma L)`, `sqrt(1-sigma^2)/(sqrt(3) L)` and
/// `mu (1-sigma)/(6 N L^2)`. Any `alpha` below the minimum gives
/// `rho(M_alpha) < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBound {
    pub alpha_max: f64,
    /// Candidate terms in the order above; the first is infinite at sigma = 0
    /// since the constraint it encodes vanishes there.
    pub terms: [f64; 3],
}

pub fn alpha_bound(c: &TheoryConstants) -> AlphaBound {
    let sig2 = c.sigma * c.sigma;
    let t1 = if c.sigma > 0.0 {
        (1.0 - sig2) / (9.0 * c.sigma * c.l)
    } else {
        f64::INFINITY
    };
    let t2 = (1.0 - sig2).sqrt() / (3.0f64.sqrt() * c.l);
    let t3 = c.mu * (1.0 - c.sigma) / (6.0 * c.n_players as f64 * c.l * c.l);
    AlphaBound {
        alpha_max: t1.min(t2).min(t3),
        terms: [t1, t2, t3],
    }
}

/// Upper bounds for the dual stepsizes at a given `(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaGammaBounds {
    pub beta_max: f64,
    /// `mu/(2 N lmax(Pi^T Pi))`, `sigma L/(2 lmax(Pi^T Pi))`, `1/(alpha lmin(Pi Pi^T))`.
    pub beta_terms: [f64; 3],
    /// Evaluated at the supplied beta.
    pub gamma_max: f64,
    /// `(2 - 2 lmax(B)^2)/(1 - alpha beta lmin(Pi Pi^T))`, `1/lmax(B)^2`.
    pub gamma_terms: [f64; 2],
}

/// Errors with [`StepsizeError::DegenerateSigma`] when `sigma = 0`, where the
/// second beta term is zero and the formula certifies no positive beta.
pub fn beta_gamma_bounds(
    c: &TheoryConstants,
    alpha: f64,
    beta: f64,
) -> Result<BetaGammaBounds, StepsizeError> {
    if c.sigma == 0.0 {
        return Err(StepsizeError::DegenerateSigma);
    }
    let n = c.n_players as f64;
    let b1 = c.mu / (2.0 * n * c.lam_max_pi_t_pi);
    let b2 = c.sigma * c.l / (2.0 * c.lam_max_pi_t_pi);
    let b3 = 1.0 / (alpha * c.lam_min_pi_pi_t);
    let lb2 = c.lam_max_b * c.lam_max_b;
    let denom = 1.0 - alpha * beta * c.lam_min_pi_pi_t;
    let g1 = if denom > 0.0 {
        (2.0 - 2.0 * lb2) / denom
    } else {
        // Outside the certified beta range the first gamma constraint is
        // vacuous; the certificate flag handles the rest.
        f64::INFINITY
    };
    let g2 = 1.0 / lb2;
    Ok(BetaGammaBounds {
        beta_max: b1.min(b2).min(b3),
        beta_terms: [b1, b2, b3],
        gamma_max: g1.min(g2),
        gamma_terms: [g1, g2],
    })
}

/// The per-iteration contraction factor together with its three terms and a
/// flag saying whether the supplied stepsizes satisfy every bound. The value
/// is always computed; uncertified factors are useful diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionFactor {
    pub a: f64,
    /// `rho(M_alpha)`, `1 - alpha beta lmin(Pi Pi^T)`, `1 - s_min(B)^2 gamma`.
    pub terms: [f64; 3],
    pub certified: bool,
}

pub fn contraction_factor(
    c: &TheoryConstants,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> ContractionFactor {
    let rho = rho_m_alpha(c, alpha);
    let t2 = 1.0 - alpha * beta * c.lam_min_pi_pi_t;
    let s_min = c.min_nonzero_sv_b;
    let t3 = 1.0 - s_min * s_min * gamma;
    let a = rho.max(t2).max(t3);
    let certified = alpha > 0.0
        && beta > 0.0
        && gamma > 0.0
        && rho < 1.0
        && match beta_gamma_bounds(c, alpha, beta) {
            Ok(bounds) => {
                beta < bounds.beta_terms.iter().copied().fold(f64::INFINITY, f64::min)
                    && gamma
                        < bounds
                            .gamma_terms
                            .iter()
                            .copied()
                            .fold(f64::INFINITY, f64::min)
            }
            Err(StepsizeError::DegenerateSigma) => false,
        };
    if certified {
        assert!(
            a > 0.0 && a < 1.0,
            "certified stepsizes must give a contraction factor in (0, 1), got {a}"
        );
    }
    ContractionFactor { a, terms: [rho, t2, t3], certified }
}
