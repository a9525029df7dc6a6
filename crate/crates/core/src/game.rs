//! Games with coupled affine inequality constraints.
//!
//! A game is exposed through a gradient-evaluation interface: each player's
//! partial gradient of its own cost at an arbitrary full decision profile.
//! Two concrete games are provided, an affine game whose pseudo-gradient is
//! `F(x) = M x + c` and the Nash-Cournot market game, which reduces to the
//! affine form via [`affine_from_cournot`].
//!
//! The coupled constraint is the polyhedron `A x <= b` with `A = [A_1 .. A_N]`
//! and `b = sum_i b_i`; each block `(A_i, b_i)` is private to player `i` and
//! must have full row rank.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::ops::Range;
use thiserror::Error;

/// Relative singular-value cutoff below which a constraint block counts as
/// rank deficient.
const RANK_REL_TOL: f64 = 1e-10;
/// Strong-monotonicity floor for the symmetric part of an affine map.
const MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("pseudo-gradient is not strongly monotone (min symmetric eigenvalue {lambda_min:.3e})")]
    NotStronglyMonotone { lambda_min: f64 },
    #[error("constraint block of player {player} is rank deficient (relative min singular value {min_sv:.3e})")]
    RankDeficientBlock { player: usize, min_sv: f64 },
    #[error("constraint block of player {player} yields a numerically singular A_i A_i^T")]
    SingularBlock { player: usize },
    #[error("player index {player} out of range for {n_players} players")]
    PlayerOutOfRange { player: usize, n_players: usize },
    #[error("invalid game parameter: {0}")]
    InvalidParameter(String),
    #[error("stored feasible point violates the constraint by {violation:.3e}")]
    InfeasiblePoint { violation: f64 },
}

/// Player count, per-player decision dimensions and coupled row count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
    n: usize,
    m: usize,
}

impl Dims {
    pub fn new(block_sizes: Vec<usize>, m: usize) -> Result<Self, GameError> {
        if block_sizes.is_empty() {
            return Err(GameError::InvalidParameter(
                "at least one player required".into(),
            ));
        }
        if block_sizes.iter().any(|&s| s == 0) {
            return Err(GameError::InvalidParameter(
                "every player needs a decision dimension of at least one".into(),
            ));
        }
        if m == 0 {
            return Err(GameError::InvalidParameter(
                "at least one coupled constraint row required".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(block_sizes.len());
        let mut n = 0;
        for &s in &block_sizes {
            offsets.push(n);
            n += s;
        }
        Ok(Self {
            block_sizes,
            offsets,
            n,
            m,
        })
    }

    /// All players share the same decision dimension `n_i`.
    pub fn uniform(n_players: usize, n_i: usize, m: usize) -> Result<Self, GameError> {
        Self::new(vec![n_i; n_players], m)
    }

    pub fn n_players(&self) -> usize {
        self.block_sizes.len()
    }

    /// Total decision dimension `n = sum_i n_i`.
    pub fn total_dim(&self) -> usize {
        self.n
    }

    /// Number of coupled inequality rows `m`.
    pub fn coupling_rows(&self) -> usize {
        self.m
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn block_size(&self, i: usize) -> usize {
        self.block_sizes[i]
    }

    /// Index range of player `i`'s block inside a stacked profile.
    pub fn block_range(&self, i: usize) -> Range<usize> {
        let start = self.offsets[i];
        start..start + self.block_sizes[i]
    }

    pub fn check_player(&self, i: usize) -> Result<(), GameError> {
        if i >= self.n_players() {
            return Err(GameError::PlayerOutOfRange {
                player: i,
                n_players: self.n_players(),
            });
        }
        Ok(())
    }

    pub fn check_profile(&self, x: &DVector<f64>, what: &'static str) -> Result<(), GameError> {
        if x.len() != self.n {
            return Err(GameError::DimensionMismatch {
                what,
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// The coupled polyhedral constraint `A x <= b` split into per-player blocks.
#[derive(Debug, Clone)]
pub struct CoupledConstraint {
    a_blocks: Vec<DMatrix<f64>>,
    b_blocks: Vec<DVector<f64>>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    feasible_point: DVector<f64>,
}

impl CoupledConstraint {
    /// Validates the blocks and certifies nonemptiness with the stacked
    /// minimum-norm solutions of `A_i x_i = b_i`, which satisfy `A x = b`.
    pub fn new(
        a_blocks: Vec<DMatrix<f64>>,
        b_blocks: Vec<DVector<f64>>,
    ) -> Result<Self, GameError> {
        let partial = Self::assemble(a_blocks, b_blocks)?;
        let mut feasible = DVector::zeros(partial.a.ncols());
        let mut offset = 0;
        for i in 0..partial.a_blocks.len() {
            let xi = partial.min_norm_block_solution(i)?;
            feasible.rows_mut(offset, xi.len()).copy_from(&xi);
            offset += xi.len();
        }
        partial.with_point(feasible)
    }

    /// Same validation, but with a caller-supplied feasibility certificate.
    pub fn with_feasible_point(
        a_blocks: Vec<DMatrix<f64>>,
        b_blocks: Vec<DVector<f64>>,
        feasible_point: DVector<f64>,
    ) -> Result<Self, GameError> {
        let partial = Self::assemble(a_blocks, b_blocks)?;
        partial.with_point(feasible_point)
    }

    fn assemble(
        a_blocks: Vec<DMatrix<f64>>,
        b_blocks: Vec<DVector<f64>>,
    ) -> Result<Self, GameError> {
        if a_blocks.is_empty() || a_blocks.len() != b_blocks.len() {
            return Err(GameError::InvalidParameter(
                "need one (A_i, b_i) pair per player".into(),
            ));
        }
        let m = a_blocks[0].nrows();
        let mut n = 0;
        for (i, (ai, bi)) in a_blocks.iter().zip(&b_blocks).enumerate() {
            if ai.nrows() != m {
                return Err(GameError::DimensionMismatch {
                    what: "constraint block rows",
                    expected: m,
                    got: ai.nrows(),
                });
            }
            if bi.len() != m {
                return Err(GameError::DimensionMismatch {
                    what: "constraint offset rows",
                    expected: m,
                    got: bi.len(),
                });
            }
            let svd = ai.clone().svd(false, false);
            let max_sv = svd.singular_values.max();
            let min_sv = svd.singular_values.min();
            if svd.singular_values.len() < m || min_sv <= RANK_REL_TOL * max_sv.max(1.0) {
                return Err(GameError::RankDeficientBlock {
                    player: i,
                    min_sv: if max_sv > 0.0 { min_sv / max_sv } else { 0.0 },
                });
            }
            n += ai.ncols();
        }
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let mut offset = 0;
        for (ai, bi) in a_blocks.iter().zip(&b_blocks) {
            a.columns_mut(offset, ai.ncols()).copy_from(ai);
            b += bi;
            offset += ai.ncols();
        }
        Ok(Self {
            a_blocks,
            b_blocks,
            a,
            b,
            feasible_point: DVector::zeros(n),
        })
    }

    fn with_point(mut self, feasible_point: DVector<f64>) -> Result<Self, GameError> {
        if feasible_point.len() != self.a.ncols() {
            return Err(GameError::DimensionMismatch {
                what: "feasible point",
                expected: self.a.ncols(),
                got: feasible_point.len(),
            });
        }
        let violation = (&self.a * &feasible_point - &self.b).max();
        if violation > 1e-9 {
            return Err(GameError::InfeasiblePoint { violation });
        }
        self.feasible_point = feasible_point;
        Ok(self)
    }

    /// Minimum-norm solution of `A_i x = b_i`, namely `A_i^T (A_i A_i^T)^-1 b_i`.
    pub fn min_norm_block_solution(&self, i: usize) -> Result<DVector<f64>, GameError> {
        let ai = &self.a_blocks[i];
        let aat = ai * ai.transpose();
        let chol = aat
            .cholesky()
            .ok_or(GameError::SingularBlock { player: i })?;
        let z = chol.solve(&self.b_blocks[i]);
        Ok(ai.transpose() * z)
    }

    /// Constraint residual `A x - b`; entries at or below zero are feasible.
    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        if x.len() != self.a.ncols() {
            return Err(GameError::DimensionMismatch {
                what: "constraint residual input",
                expected: self.a.ncols(),
                got: x.len(),
            });
        }
        Ok(&self.a * x - &self.b)
    }

    pub fn n_players(&self) -> usize {
        self.a_blocks.len()
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn a_block(&self, i: usize) -> &DMatrix<f64> {
        &self.a_blocks[i]
    }

    pub fn b_block(&self, i: usize) -> &DVector<f64> {
        &self.b_blocks[i]
    }

    /// Horizontal concatenation `[A_1 .. A_N]`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Aggregate offset `b = sum_i b_i`.
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn feasible_point(&self) -> &DVector<f64> {
        &self.feasible_point
    }

    /// Largest eigenvalue of `Pi^T Pi = blockdiag(A_i^T A_i)`.
    pub fn lambda_max_pi_t_pi(&self) -> f64 {
        self.a_blocks
            .iter()
            .map(|ai| SymmetricEigen::new(ai.transpose() * ai).eigenvalues.max())
            .fold(0.0f64, f64::max)
    }

    /// Smallest eigenvalue of `Pi Pi^T = blockdiag(A_i A_i^T)`; positive
    /// whenever every block has full row rank.
    pub fn lambda_min_pi_pi_t(&self) -> f64 {
        self.a_blocks
            .iter()
            .map(|ai| SymmetricEigen::new(ai * ai.transpose()).eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Stacked partial-gradient interface shared by all game types.
pub trait Game {
    fn dims(&self) -> &Dims;

    fn constraint(&self) -> &CoupledConstraint;

    /// Gradient of player `i`'s cost with respect to its own block,
    /// evaluated at an arbitrary full profile.
    fn partial_gradient(&self, i: usize, profile: &DVector<f64>)
        -> Result<DVector<f64>, GameError>;

    /// The pseudo-gradient: all partial gradients stacked at one shared
    /// profile.
    fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        let dims = self.dims();
        dims.check_profile(x, "pseudo-gradient input")?;
        let mut out = DVector::zeros(dims.total_dim());
        for i in 0..dims.n_players() {
            let gi = self.partial_gradient(i, x)?;
            out.rows_mut(dims.block_range(i).start, gi.len()).copy_from(&gi);
        }
        Ok(out)
    }

    /// The extended pseudo-gradient under partial-decision information:
    /// player `i`'s block is evaluated at player `i`'s own estimate of the
    /// full profile.
    fn extended_pseudo_gradient(
        &self,
        profile: &ExtendedProfile,
    ) -> Result<DVector<f64>, GameError> {
        let dims = self.dims();
        profile.check(dims)?;
        let mut out = DVector::zeros(dims.total_dim());
        for i in 0..dims.n_players() {
            let gi = self.partial_gradient(i, profile.block(i))?;
            out.rows_mut(dims.block_range(i).start, gi.len()).copy_from(&gi);
        }
        Ok(out)
    }
}

/// Each player's local copy of the full decision profile. Player `i`'s own
/// block inside its copy is its true decision; the rest are estimates.
///
/// The selection operators that extract the own block and the others are
/// realized as index arithmetic rather than materialized 0/1 matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedProfile {
    blocks: Vec<DVector<f64>>,
}

impl ExtendedProfile {
    pub fn new(blocks: Vec<DVector<f64>>, dims: &Dims) -> Result<Self, GameError> {
        if blocks.len() != dims.n_players() {
            return Err(GameError::DimensionMismatch {
                what: "extended profile player count",
                expected: dims.n_players(),
                got: blocks.len(),
            });
        }
        for b in &blocks {
            dims.check_profile(b, "extended profile block")?;
        }
        Ok(Self { blocks })
    }

    /// Consensus profile: every player holds the same copy of `x`.
    pub fn consensus(x: &DVector<f64>, dims: &Dims) -> Result<Self, GameError> {
        dims.check_profile(x, "consensus profile")?;
        Ok(Self {
            blocks: vec![x.clone(); dims.n_players()],
        })
    }

    fn check(&self, dims: &Dims) -> Result<(), GameError> {
        if self.blocks.len() != dims.n_players() {
            return Err(GameError::DimensionMismatch {
                what: "extended profile player count",
                expected: dims.n_players(),
                got: self.blocks.len(),
            });
        }
        Ok(())
    }

    /// Player `i`'s full estimate vector.
    pub fn block(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i]
    }

    /// Player `i`'s own decision (its block of its own copy).
    pub fn own_decision(&self, dims: &Dims, i: usize) -> DVector<f64> {
        let r = dims.block_range(i);
        self.blocks[i].rows(r.start, r.len()).into_owned()
    }

    /// Player `i`'s estimates of everyone else, concatenated in player order.
    pub fn others(&self, dims: &Dims, i: usize) -> DVector<f64> {
        let r = dims.block_range(i);
        let n = dims.total_dim();
        let mut out = DVector::zeros(n - r.len());
        let block = &self.blocks[i];
        for (dst, src) in (0..r.start).chain(r.end..n).enumerate() {
            out[dst] = block[src];
        }
        out
    }

    pub fn set_own(&mut self, dims: &Dims, i: usize, x_i: &DVector<f64>) {
        let r = dims.block_range(i);
        self.blocks[i].rows_mut(r.start, r.len()).copy_from(x_i);
    }

    /// True decisions stacked across players (each player's own block).
    pub fn decisions(&self, dims: &Dims) -> DVector<f64> {
        let mut out = DVector::zeros(dims.total_dim());
        for i in 0..dims.n_players() {
            let r = dims.block_range(i);
            out.rows_mut(r.start, r.len())
                .copy_from(&self.blocks[i].rows(r.start, r.len()));
        }
        out
    }
}

/// Game whose pseudo-gradient is the affine map `F(x) = M x + c`.
#[derive(Debug, Clone)]
pub struct AffineGame {
    dims: Dims,
    m_matrix: DMatrix<f64>,
    c: DVector<f64>,
    constraint: CoupledConstraint,
}

impl AffineGame {
    /// Validates dimensions and strong monotonicity of the symmetric part.
    pub fn new(
        dims: Dims,
        m_matrix: DMatrix<f64>,
        c: DVector<f64>,
        constraint: CoupledConstraint,
    ) -> Result<Self, GameError> {
        let n = dims.total_dim();
        if m_matrix.nrows() != n || m_matrix.ncols() != n {
            return Err(GameError::DimensionMismatch {
                what: "affine map",
                expected: n,
                got: m_matrix.nrows().max(m_matrix.ncols()),
            });
        }
        if c.len() != n {
            return Err(GameError::DimensionMismatch {
                what: "affine offset",
                expected: n,
                got: c.len(),
            });
        }
        if constraint.n_players() != dims.n_players()
            || constraint.a().ncols() != n
            || constraint.rows() != dims.coupling_rows()
        {
            return Err(GameError::DimensionMismatch {
                what: "constraint shape",
                expected: n,
                got: constraint.a().ncols(),
            });
        }
        let game = Self {
            dims,
            m_matrix,
            c,
            constraint,
        };
        monotonicity_constants(&game)?;
        Ok(game)
    }

    pub fn m_matrix(&self) -> &DMatrix<f64> {
        &self.m_matrix
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }
}

impl Game for AffineGame {
    fn dims(&self) -> &Dims {
        &self.dims
    }

    fn constraint(&self) -> &CoupledConstraint {
        &self.constraint
    }

    fn partial_gradient(
        &self,
        i: usize,
        profile: &DVector<f64>,
    ) -> Result<DVector<f64>, GameError> {
        self.dims.check_player(i)?;
        self.dims.check_profile(profile, "partial gradient profile")?;
        let r = self.dims.block_range(i);
        let rows = self.m_matrix.rows(r.start, r.len());
        Ok(rows * profile + self.c.rows(r.start, r.len()))
    }

    fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        self.dims.check_profile(x, "pseudo-gradient input")?;
        Ok(&self.m_matrix * x + &self.c)
    }
}

/// Nash-Cournot market game: firm `i` ships `x_i` to its markets through
/// `A_i`, pays the quadratic production cost `x_i^T Q_i x_i + q_i^T x_i` and
/// earns `p(Ax)^T A_i x_i` at the affine market price
/// `p(z) = price_intercept - price_slope .* z`.
#[derive(Debug, Clone)]
pub struct CournotGame {
    dims: Dims,
    q_diag: Vec<DVector<f64>>,
    q_lin: Vec<DVector<f64>>,
    price_intercept: DVector<f64>,
    price_slope: DVector<f64>,
    constraint: CoupledConstraint,
}

impl CournotGame {
    pub fn new(
        dims: Dims,
        q_diag: Vec<DVector<f64>>,
        q_lin: Vec<DVector<f64>>,
        price_intercept: DVector<f64>,
        price_slope: DVector<f64>,
        constraint: CoupledConstraint,
    ) -> Result<Self, GameError> {
        let n_players = dims.n_players();
        let m = dims.coupling_rows();
        if q_diag.len() != n_players || q_lin.len() != n_players {
            return Err(GameError::DimensionMismatch {
                what: "per-player cost parameters",
                expected: n_players,
                got: q_diag.len().min(q_lin.len()),
            });
        }
        for i in 0..n_players {
            let ni = dims.block_size(i);
            if q_diag[i].len() != ni || q_lin[i].len() != ni {
                return Err(GameError::DimensionMismatch {
                    what: "cost parameter block",
                    expected: ni,
                    got: q_diag[i].len(),
                });
            }
            if q_diag[i].iter().any(|&q| q <= 0.0) {
                return Err(GameError::InvalidParameter(format!(
                    "production cost curvature of player {i} must be positive"
                )));
            }
        }
        if price_intercept.len() != m || price_slope.len() != m {
            return Err(GameError::DimensionMismatch {
                what: "price parameters",
                expected: m,
                got: price_intercept.len().min(price_slope.len()),
            });
        }
        if price_intercept.iter().any(|&p| p <= 0.0) || price_slope.iter().any(|&s| s <= 0.0) {
            return Err(GameError::InvalidParameter(
                "price intercepts and slopes must be positive".into(),
            ));
        }
        if constraint.n_players() != n_players
            || constraint.a().ncols() != dims.total_dim()
            || constraint.rows() != m
        {
            return Err(GameError::DimensionMismatch {
                what: "constraint shape",
                expected: dims.total_dim(),
                got: constraint.a().ncols(),
            });
        }
        Ok(Self {
            dims,
            q_diag,
            q_lin,
            price_intercept,
            price_slope,
            constraint,
        })
    }

    pub fn q_diag(&self, i: usize) -> &DVector<f64> {
        &self.q_diag[i]
    }

    pub fn q_lin(&self, i: usize) -> &DVector<f64> {
        &self.q_lin[i]
    }

    pub fn price_intercept(&self) -> &DVector<f64> {
        &self.price_intercept
    }

    pub fn price_slope(&self) -> &DVector<f64> {
        &self.price_slope
    }

    /// Firm `i`'s cost at a full profile; only needed by finite-difference
    /// checks of the analytic gradients.
    pub fn cost(&self, i: usize, profile: &DVector<f64>) -> Result<f64, GameError> {
        self.dims.check_player(i)?;
        self.dims.check_profile(profile, "cost profile")?;
        let r = self.dims.block_range(i);
        let xi = profile.rows(r.start, r.len());
        let production: f64 = xi
            .iter()
            .zip(self.q_diag[i].iter())
            .zip(self.q_lin[i].iter())
            .map(|((&x, &q), &ql)| q * x * x + ql * x)
            .sum();
        let ax = self.constraint.a() * profile;
        let price = &self.price_intercept - self.price_slope.component_mul(&ax);
        let revenue = price.dot(&(self.constraint.a_block(i) * xi));
        Ok(production - revenue)
    }
}

impl Game for CournotGame {
    fn dims(&self) -> &Dims {
        &self.dims
    }

    fn constraint(&self) -> &CoupledConstraint {
        &self.constraint
    }

    fn partial_gradient(
        &self,
        i: usize,
        profile: &DVector<f64>,
    ) -> Result<DVector<f64>, GameError> {
        self.dims.check_player(i)?;
        self.dims.check_profile(profile, "partial gradient profile")?;
        let r = self.dims.block_range(i);
        let xi = profile.rows(r.start, r.len()).into_owned();
        let ai = self.constraint.a_block(i);
        let ax = self.constraint.a() * profile;
        let price = &self.price_intercept - self.price_slope.component_mul(&ax);
        // 2 Q_i x_i + q_i - A_i^T p(Ax) + A_i^T diag(slope) A_i x_i
        let mut g = DVector::zeros(r.len());
        for k in 0..r.len() {
            g[k] = 2.0 * self.q_diag[i][k] * xi[k] + self.q_lin[i][k];
        }
        g -= ai.transpose() * price;
        g += ai.transpose() * self.price_slope.component_mul(&(ai * &xi));
        Ok(g)
    }
}

/// Expands the Cournot pseudo-gradient into its explicit affine form.
///
/// Diagonal blocks are `2 Q_i + 2 A_i^T diag(slope) A_i`, off-diagonal blocks
/// `A_i^T diag(slope) A_j`, and the offset blocks are `q_i - A_i^T intercept`.
pub fn affine_from_cournot(game: &CournotGame) -> Result<AffineGame, GameError> {
    let dims = game.dims().clone();
    let n = dims.total_dim();
    let mut m_matrix = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for i in 0..dims.n_players() {
        let ri = dims.block_range(i);
        let ai = game.constraint.a_block(i);
        let ait_s = ai.transpose() * DMatrix::from_diagonal(&game.price_slope);
        for j in 0..dims.n_players() {
            let rj = dims.block_range(j);
            let aj = game.constraint.a_block(j);
            let mut block = &ait_s * aj;
            if i == j {
                block *= 2.0;
                for k in 0..ri.len() {
                    block[(k, k)] += 2.0 * game.q_diag[i][k];
                }
            }
            m_matrix
                .view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                .copy_from(&block);
        }
        let ci = &game.q_lin[i] - ai.transpose() * &game.price_intercept;
        c.rows_mut(ri.start, ri.len()).copy_from(&ci);
    }
    AffineGame::new(dims, m_matrix, c, game.constraint.clone())
}

/// Strong-monotonicity and Lipschitz constants of an affine pseudo-gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityConstants {
    pub mu: f64,
    pub l: f64,
}

/// `mu` is the smallest eigenvalue of the symmetric part of `M`; `l` is the
/// largest spectral norm over the per-player block rows of `M`, the tightest
/// per-player Lipschitz constant for an affine pseudo-gradient.
pub fn monotonicity_constants(game: &AffineGame) -> Result<MonotonicityConstants, GameError> {
    let m = &game.m_matrix;
    let sym = (m + m.transpose()) * 0.5;
    let mu = SymmetricEigen::new(sym).eigenvalues.min();
    if mu <= MONOTONE_TOL {
        return Err(GameError::NotStronglyMonotone { lambda_min: mu });
    }
    let dims = &game.dims;
    let mut l = 0.0f64;
    for i in 0..dims.n_players() {
        let r = dims.block_range(i);
        let rows = m.rows(r.start, r.len());
        // Spectral norm of the block row via the Gram matrix.
        let gram = &rows * rows.transpose();
        let top = SymmetricEigen::new(gram).eigenvalues.max().max(0.0);
        l = l.max(top.sqrt());
    }
    debug_assert!(mu <= l + 1e-9, "mu = {mu} should not exceed l = {l}");
    Ok(MonotonicityConstants { mu, l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-player scalar fixture: costs (x_i - t_i)^2 with t = (3, 2) and the
    /// shared capacity x_1 + x_2 <= 4 split evenly.
    pub(crate) fn two_player_fixture() -> AffineGame {
        let dims = Dims::uniform(2, 1, 1).unwrap();
        let constraint = CoupledConstraint::new(
            vec![
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DMatrix::from_row_slice(1, 1, &[1.0]),
            ],
            vec![DVector::from_element(1, 2.0), DVector::from_element(1, 2.0)],
        )
        .unwrap();
        AffineGame::new(
            dims,
            DMatrix::from_diagonal_element(2, 2, 2.0),
            DVector::from_column_slice(&[-6.0, -4.0]),
            constraint,
        )
        .unwrap()
    }

    fn seeded_cournot(rng: &mut ChaCha8Rng, n_players: usize, m: usize) -> CournotGame {
        let dims = Dims::uniform(n_players, m, m).unwrap();
        let mut a_blocks = Vec::new();
        let mut b_blocks = Vec::new();
        let mut q_diag = Vec::new();
        let mut q_lin = Vec::new();
        for _ in 0..n_players {
            a_blocks.push(DMatrix::identity(m, m));
            b_blocks.push(DVector::from_fn(m, |_, _| rng.random_range(1.0..2.0)));
            q_diag.push(DVector::from_fn(m, |_, _| rng.random_range(1.0..8.0)));
            q_lin.push(DVector::from_fn(m, |_, _| rng.random_range(1.0..2.0)));
        }
        let intercept = DVector::from_fn(m, |_, _| rng.random_range(1.0..3.0));
        let slope = DVector::from_fn(m, |_, _| rng.random_range(5.0..10.0));
        let constraint = CoupledConstraint::new(a_blocks, b_blocks).unwrap();
        CournotGame::new(dims, q_diag, q_lin, intercept, slope, constraint).unwrap()
    }

    fn finite_diff_partial(game: &CournotGame, i: usize, profile: &DVector<f64>) -> DVector<f64> {
        let h = 1e-6;
        let dims = game.dims();
        let r = dims.block_range(i);
        let mut g = DVector::zeros(r.len());
        for k in 0..r.len() {
            let mut plus = profile.clone();
            let mut minus = profile.clone();
            plus[r.start + k] += h;
            minus[r.start + k] -= h;
            g[k] = (game.cost(i, &plus).unwrap() - game.cost(i, &minus).unwrap()) / (2.0 * h);
        }
        g
    }

    #[test]
    fn pseudo_gradient_vanishes_at_unconstrained_optimum() {
        let game = two_player_fixture();
        let f = game
            .pseudo_gradient(&DVector::from_column_slice(&[3.0, 2.0]))
            .unwrap();
        assert!(f.amax() < 1e-14);
        let f0 = game.pseudo_gradient(&DVector::zeros(2)).unwrap();
        assert_eq!(f0[0], -6.0);
        assert_eq!(f0[1], -4.0);
    }

    #[test]
    fn extended_gradient_on_consensus_profile_matches_pseudo_gradient() {
        let game = two_player_fixture();
        let x = DVector::from_column_slice(&[0.7, -1.3]);
        let profile = ExtendedProfile::consensus(&x, game.dims()).unwrap();
        let ext = game.extended_pseudo_gradient(&profile).unwrap();
        let full = game.pseudo_gradient(&x).unwrap();
        assert_eq!(ext, full);
    }

    #[test]
    fn extended_gradient_uses_each_players_own_estimates() {
        let game = two_player_fixture();
        let profile = ExtendedProfile::new(
            vec![
                DVector::from_column_slice(&[1.0, 5.0]),
                DVector::from_column_slice(&[7.0, 2.0]),
            ],
            game.dims(),
        )
        .unwrap();
        let ext = game.extended_pseudo_gradient(&profile).unwrap();
        assert_eq!(ext[0], -4.0); // 2 * 1 - 6
        assert_eq!(ext[1], 0.0); // 2 * 2 - 4
    }

    #[test]
    fn cournot_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let game = seeded_cournot(&mut rng, 2 + trial % 4, 1 + trial % 3);
            let n = game.dims().total_dim();
            for _ in 0..10 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
                for i in 0..game.dims().n_players() {
                    let analytic = game.partial_gradient(i, &x).unwrap();
                    let fd = finite_diff_partial(&game, i, &x);
                    let scale = 1.0 + analytic.norm();
                    assert!(
                        (analytic - fd).norm() <= 1e-6 * scale,
                        "finite-difference mismatch in trial {trial}"
                    );
                }
            }
        }
    }

    #[test]
    fn cournot_gradient_with_zero_slope_reduces_to_linear_price_term() {
        let dims = Dims::uniform(2, 2, 2).unwrap();
        let constraint = CoupledConstraint::new(
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            vec![DVector::from_element(2, 1.0), DVector::from_element(2, 1.0)],
        )
        .unwrap();
        // Zero slope is outside the validated parameter range, so emulate it
        // by comparing against the explicit formula with a tiny slope.
        let slope = DVector::from_element(2, 1e-12);
        let q_diag = vec![DVector::from_element(2, 1.5); 2];
        let q_lin = vec![DVector::from_element(2, 0.5); 2];
        let intercept = DVector::from_element(2, 2.0);
        let game = CournotGame::new(dims, q_diag, q_lin, intercept, slope, constraint).unwrap();
        let x = DVector::from_column_slice(&[1.0, -2.0, 0.5, 3.0]);
        let g = game.partial_gradient(0, &x).unwrap();
        // 2 Q x + q - A^T intercept up to the vanishing slope terms.
        let expected = DVector::from_column_slice(&[3.0 * 1.0 + 0.5 - 2.0, 3.0 * -2.0 + 0.5 - 2.0]);
        assert!((g - expected).amax() < 1e-10);
    }

    #[test]
    fn affine_from_cournot_agrees_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let game = seeded_cournot(&mut rng, 4, 2);
        let affine = affine_from_cournot(&game).unwrap();
        let n = game.dims().total_dim();
        for _ in 0..100 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let direct = game.pseudo_gradient(&x).unwrap();
            let via_affine = affine.pseudo_gradient(&x).unwrap();
            assert!((direct - via_affine).amax() <= 1e-10);
        }
    }

    #[test]
    fn monotonicity_constants_examples() {
        let fixture = two_player_fixture();
        let k = monotonicity_constants(&fixture).unwrap();
        assert_relative_eq!(k.mu, 2.0, epsilon = 1e-12);
        assert_relative_eq!(k.l, 2.0, epsilon = 1e-12);

        let dims = Dims::uniform(2, 1, 1).unwrap();
        let constraint = fixture.constraint().clone();
        let game = AffineGame::new(
            dims,
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]),
            DVector::zeros(2),
            constraint,
        )
        .unwrap();
        let k = monotonicity_constants(&game).unwrap();
        assert_relative_eq!(k.mu, 1.5, epsilon = 1e-12);
        assert_relative_eq!(k.l, 5.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn monotonicity_mu_equals_min_eigenvalue_for_symmetric_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..6);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
            let dims = Dims::uniform(n, 1, 1).unwrap();
            let constraint = CoupledConstraint::new(
                vec![DMatrix::from_row_slice(1, 1, &[1.0]); n],
                vec![DVector::from_element(1, 1.0); n],
            )
            .unwrap();
            let game = AffineGame::new(dims, m.clone(), DVector::zeros(n), constraint).unwrap();
            let k = monotonicity_constants(&game).unwrap();
            let min_eig = SymmetricEigen::new(m).eigenvalues.min();
            assert!((k.mu - min_eig).abs() <= 1e-10);
            assert!(k.mu <= k.l + 1e-12);
        }
    }

    #[test]
    fn non_monotone_map_is_rejected() {
        let dims = Dims::uniform(2, 1, 1).unwrap();
        let constraint = two_player_fixture().constraint().clone();
        let err = AffineGame::new(
            dims,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::zeros(2),
            constraint,
        );
        assert!(matches!(err, Err(GameError::NotStronglyMonotone { .. })));
    }

    #[test]
    fn constraint_residual_examples() {
        let game = two_player_fixture();
        let c = game.constraint();
        let at_feasible = c.residual(c.feasible_point()).unwrap();
        assert!(at_feasible.max() <= 1e-12);
        let on_boundary = c
            .residual(&DVector::from_column_slice(&[2.5, 1.5]))
            .unwrap();
        assert!(on_boundary.amax() < 1e-14);
        let at_origin = c.residual(&DVector::zeros(2)).unwrap();
        assert_eq!(at_origin[0], -4.0);
    }

    #[test]
    fn min_norm_solution_examples() {
        let c = CoupledConstraint::new(
            vec![DMatrix::from_row_slice(1, 2, &[1.0, 1.0])],
            vec![DVector::from_element(1, 4.0)],
        )
        .unwrap();
        let x = c.min_norm_block_solution(0).unwrap();
        assert!((x - DVector::from_column_slice(&[2.0, 2.0])).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_block_is_rejected() {
        let err = CoupledConstraint::new(
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])],
            vec![DVector::from_element(2, 1.0)],
        );
        assert!(matches!(err, Err(GameError::RankDeficientBlock { .. })));
    }

    #[test]
    fn selection_identities_on_extended_profile() {
        let dims = Dims::new(vec![2, 1, 3], 1).unwrap();
        let n = dims.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let profile = ExtendedProfile::new(blocks, &dims).unwrap();
        for i in 0..3 {
            let own = profile.own_decision(&dims, i);
            let others = profile.others(&dims, i);
            // Recomposing own and others must reproduce the block exactly,
            // which is the selection identity R^T R + S^T S = I.
            let r = dims.block_range(i);
            let mut recomposed = DVector::zeros(n);
            recomposed.rows_mut(r.start, r.len()).copy_from(&own);
            for (dst, src) in (0..r.start).chain(r.end..n).enumerate() {
                recomposed[src] = others[dst];
            }
            assert_eq!(&recomposed, profile.block(i));
            assert_eq!(own.len() + others.len(), n);
        }
    }

    #[test]
    fn dims_validation() {
        assert!(Dims::new(vec![], 1).is_err());
        assert!(Dims::new(vec![1, 0], 1).is_err());
        assert!(Dims::new(vec![1], 0).is_err());
        let dims = Dims::new(vec![2, 3], 2).unwrap();
        assert_eq!(dims.total_dim(), 5);
        assert_eq!(dims.block_range(1), 2..5);
    }
}
