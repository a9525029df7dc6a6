//! The decentralized primal-dual iteration and its semi-centralized
//! reference form.
//!
//! Every player keeps a local copy of the full decision profile (own block =
//! true decision), an auxiliary dual vector `v_i`, the dual estimate
//! `lambda_i` and one-step memories. One synchronous round per player:
//!
//! 1. mix the own block across neighbors and step along the own partial
//!    gradient plus the dual force `A_i^T lambda_i`,
//! 2. mix the estimates of everyone else,
//! 3. update `v_i` with the gossip-filtered dual differences and the scaled
//!    constraint displacement `beta A_i (x_i' - x_i)`,
//! 4. project `v_i` onto the nonnegative orthant to get `lambda_i`.
//!
//! The x-memory is initialized to the minimum-norm solution of
//! `A_i x = b_i`, which makes the first round of the decentralized recursion
//! coincide exactly with the semi-centralized form below for any start.
//!
//! The semi-centralized form tracks a global auxiliary vector `y` instead of
//! the one-step memories: `v' = lambda - C lambda + beta (Pi x' - b) + B y`,
//! `y' = y - gamma B v'`, with `C` the gossip matrix and `B` its PSD square
//! root lifted per coordinate. Both forms are pure state transitions on an
//! immutable round snapshot, so per-player update order is immaterial.

use crate::game::{CoupledConstraint, Dims, Game, GameError};
use crate::oracle;
use crate::topology::Topology;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

/// Tolerance on the fixed-point residuals.
const FIXED_POINT_TOL: f64 = 1e-8;
/// Tolerance on the consensual auxiliary residual `B v* = 0`.
const CONSENSUAL_TOL: f64 = 1e-10;
/// KKT residual required of a reference solution.
const KKT_INPUT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("non-finite state at iteration {iter}; stepsizes are likely divergent")]
    NonFinite { iter: usize, partial: Box<Trajectory> },
    #[error("reference solution violates the KKT conditions (residual {residual:.3e})")]
    InconsistentKkt { residual: f64 },
    #[error("auxiliary fixed-point solve misses the range space (residual {residual:.3e})")]
    RangeSpaceMiss { residual: f64 },
    #[error("Lyapunov weight matrix is not positive definite (min eigenvalue {lambda_min:.3e})")]
    WeightNotPd { lambda_min: f64 },
}

/// How the decision copies and dual estimates start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All estimates and duals at zero.
    Zeros,
    /// Estimates and duals drawn uniformly from [-1, 1]. Draw order: per
    /// player, first the n estimate entries, then the m dual entries.
    SeededRandom,
    /// Every player starts at the stacked minimum-norm solutions of
    /// `A_i x_i = b_i`, so the stacked decisions satisfy `Pi x_0 = b`;
    /// duals start at zero.
    FeasibleConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverForm {
    Decentralized,
    SemiCentralized,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_iters: usize,
    /// Early-stop threshold on the max of consensus error, dual spread and
    /// round-to-round decision displacement. Infinite disables early
    /// stopping.
    pub stop_tol: f64,
    pub init_mode: InitMode,
    pub form: SolverForm,
    /// Record every k-th iteration (the initial state, stopping iteration
    /// and final iteration are always recorded).
    pub record_every: usize,
}

impl SolverConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            max_iters: 10_000,
            stop_tol: f64::INFINITY,
            init_mode: InitMode::Zeros,
            form: SolverForm::Decentralized,
            record_every: 1,
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.gamma > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "stepsizes must be positive, got alpha={}, beta={}, gamma={}",
                self.alpha, self.beta, self.gamma
            )));
        }
        if self.max_iters == 0 {
            return Err(SolverError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(SolverError::InvalidConfig("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-player solver state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    /// Local copy of the full profile; the own block is the true decision.
    pub est: DVector<f64>,
    /// Auxiliary dual vector.
    pub v: DVector<f64>,
    /// Dual estimate, nonnegative after every completed round.
    pub lambda: DVector<f64>,
    /// Dual estimate one round back.
    pub lambda_prev: DVector<f64>,
    /// Decision one round back (starts at the minimum-norm solution of
    /// `A_i x = b_i`, the warm start that aligns both algorithm forms).
    pub x_prev: DVector<f64>,
}

/// Global bookkeeping used by the semi-centralized form; carried (and
/// serialized) in both forms so snapshots stay interchangeable.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAux {
    /// Stacked auxiliary vector, zero-initialized and confined to the range
    /// space of the lifted gossip square root.
    pub y: DVector<f64>,
    /// Stacked copy of the per-player `v_i`.
    pub v_global: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub players: Vec<PlayerState>,
    pub aux: GlobalAux,
}

impl SolverState {
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Stacked estimate vectors, length N * n.
    pub fn estimate_stack(&self) -> DVector<f64> {
        stack(self.players.iter().map(|p| &p.est))
    }

    /// Stacked dual estimates, length N * m.
    pub fn lambda_stack(&self) -> DVector<f64> {
        stack(self.players.iter().map(|p| &p.lambda))
    }

    pub fn v_stack(&self) -> DVector<f64> {
        stack(self.players.iter().map(|p| &p.v))
    }

    /// Stacked true decisions (each player's own block), length n.
    pub fn decisions(&self, dims: &Dims) -> DVector<f64> {
        let mut out = DVector::zeros(dims.total_dim());
        for (i, p) in self.players.iter().enumerate() {
            let r = dims.block_range(i);
            out.rows_mut(r.start, r.len()).copy_from(&p.est.rows(r.start, r.len()));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.players.iter().all(|p| {
            p.est.iter().all(|v| v.is_finite())
                && p.v.iter().all(|v| v.is_finite())
                && p.lambda.iter().all(|v| v.is_finite())
        }) && self.aux.y.iter().all(|v| v.is_finite())
    }

    /// Disagreement of the estimate copies: `||est - 1 (x) mean||_2`.
    pub fn consensus_error(&self) -> f64 {
        let n_players = self.players.len();
        let mut mean = self.players[0].est.clone();
        for p in &self.players[1..] {
            mean += &p.est;
        }
        mean /= n_players as f64;
        self.players
            .iter()
            .map(|p| (&p.est - &mean).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest pairwise distance between dual estimates.
    pub fn dual_spread(&self) -> f64 {
        let mut spread = 0.0f64;
        for i in 0..self.players.len() {
            for j in (i + 1)..self.players.len() {
                spread = spread.max((&self.players[i].lambda - &self.players[j].lambda).norm());
            }
        }
        spread
    }
}

fn stack<'a>(parts: impl Iterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let parts: Vec<&DVector<f64>> = parts.collect();
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(total);
    let mut offset = 0;
    for p in parts {
        out.rows_mut(offset, p.len()).copy_from(p);
        offset += p.len();
    }
    out
}

/// What a player broadcasts to its neighbors each round. The dual is sent as
/// the one-step difference, which is all the auxiliary update needs from
/// neighbors.
#[derive(Debug, Clone)]
pub struct RoundMessage {
    pub est: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda_delta: DVector<f64>,
}

/// Snapshot of everything players publish at the start of a round.
pub fn publish_messages(state: &SolverState) -> Vec<RoundMessage> {
    state
        .players
        .iter()
        .map(|p| RoundMessage {
            est: p.est.clone(),
            v: p.v.clone(),
            lambda_delta: &p.lambda - &p.lambda_prev,
        })
        .collect()
}

/// Builds the initial state: `v = 0`, `lambda_prev = 0`, the x-memory at the
/// minimum-norm solution of `A_i x = b_i`, and estimates plus duals chosen by
/// the init mode.
pub fn initialize<R: Rng + ?Sized>(
    game: &dyn Game,
    topology: &Topology,
    config: &SolverConfig,
    rng: &mut R,
) -> Result<SolverState, SolverError> {
    let dims = game.dims();
    let n_players = dims.n_players();
    if topology.n() != n_players {
        return Err(SolverError::InvalidConfig(format!(
            "topology has {} nodes but the game has {} players",
            topology.n(),
            n_players
        )));
    }
    let n = dims.total_dim();
    let m = dims.coupling_rows();
    let constraint = game.constraint();
    let feasible_stack = match config.init_mode {
        InitMode::FeasibleConsistent => {
            let mut x0 = DVector::zeros(n);
            for i in 0..n_players {
                let xi = constraint.min_norm_block_solution(i)?;
                let r = dims.block_range(i);
                x0.rows_mut(r.start, r.len()).copy_from(&xi);
            }
            Some(x0)
        }
        _ => None,
    };
    let mut players = Vec::with_capacity(n_players);
    for i in 0..n_players {
        let x_prev = constraint.min_norm_block_solution(i)?;
        let (est, lambda) = match config.init_mode {
            InitMode::Zeros => (DVector::zeros(n), DVector::zeros(m)),
            InitMode::SeededRandom => {
                let est = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
                let lambda = DVector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0));
                (est, lambda)
            }
            InitMode::FeasibleConsistent => (
                feasible_stack.as_ref().expect("computed above").clone(),
                DVector::zeros(m),
            ),
        };
        players.push(PlayerState {
            est,
            v: DVector::zeros(m),
            lambda,
            lambda_prev: DVector::zeros(m),
            x_prev,
        });
    }
    Ok(SolverState {
        players,
        aux: GlobalAux {
            y: DVector::zeros(n_players * m),
            v_global: DVector::zeros(n_players * m),
        },
    })
}

/// Primal update of player `i`: consensus-mix the own block across all
/// copies, then step along the own partial gradient at the own estimate
/// vector and the dual force `A_i^T lambda_i`.
pub fn local_primal_update(
    game: &dyn Game,
    i: usize,
    own: &PlayerState,
    messages: &[RoundMessage],
    weights: &DMatrix<f64>,
    alpha: f64,
) -> Result<DVector<f64>, SolverError> {
    let dims = game.dims();
    let r = dims.block_range(i);
    let mut x = DVector::zeros(r.len());
    for (j, msg) in messages.iter().enumerate() {
        let wij = weights[(i, j)];
        if wij != 0.0 {
            x.axpy(wij, &msg.est.rows(r.start, r.len()), 1.0);
        }
    }
    if alpha != 0.0 {
        let grad = game.partial_gradient(i, &own.est)?;
        x.axpy(-alpha, &grad, 1.0);
        let dual_force = game.constraint().a_block(i).transpose() * &own.lambda;
        x.axpy(-alpha, &dual_force, 1.0);
    }
    Ok(x)
}

/// Estimate update of player `i`: the weighted average of all copies of every
/// block except its own.
pub fn estimate_mix(
    dims: &Dims,
    i: usize,
    messages: &[RoundMessage],
    weights: &DMatrix<f64>,
) -> DVector<f64> {
    let n = dims.total_dim();
    let r = dims.block_range(i);
    let mut mixed = DVector::zeros(n);
    for (j, msg) in messages.iter().enumerate() {
        let wij = weights[(i, j)];
        if wij != 0.0 {
            mixed.axpy(wij, &msg.est, 1.0);
        }
    }
    let mut out = DVector::zeros(n - r.len());
    for (dst, src) in (0..r.start).chain(r.end..n).enumerate() {
        out[dst] = mixed[src];
    }
    out
}

/// Auxiliary dual update of player `i`:
/// `v_i' = v_i - gamma sum_j c_ij v_j - sum_j c_ij dlambda_j + dlambda_i
///         + beta A_i (x_i' - x_prev_i)`
/// where `dlambda_j` is neighbor `j`'s one-step dual difference and
/// `x_prev_i` is the stored decision memory.
pub fn aux_dual_update(
    constraint: &CoupledConstraint,
    i: usize,
    own: &PlayerState,
    messages: &[RoundMessage],
    gossip: &DMatrix<f64>,
    beta: f64,
    gamma: f64,
    x_i_next: &DVector<f64>,
) -> DVector<f64> {
    let mut v = own.v.clone();
    for (j, msg) in messages.iter().enumerate() {
        let cij = gossip[(i, j)];
        if cij != 0.0 {
            v.axpy(-gamma * cij, &msg.v, 1.0);
            v.axpy(-cij, &msg.lambda_delta, 1.0);
        }
    }
    v += &own.lambda - &own.lambda_prev;
    let displacement = constraint.a_block(i) * (x_i_next - &own.x_prev);
    v.axpy(beta, &displacement, 1.0);
    v
}

/// Projection onto the nonnegative orthant, elementwise `max(v, 0)`.
pub fn project_dual(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// One player's complete round from the shared snapshot.
fn player_round_update(
    game: &dyn Game,
    i: usize,
    own: &PlayerState,
    messages: &[RoundMessage],
    topology: &Topology,
    config: &SolverConfig,
) -> Result<PlayerState, SolverError> {
    let dims = game.dims();
    let constraint = game.constraint();
    let x_next = local_primal_update(game, i, own, messages, topology.weights(), config.alpha)?;
    let others = estimate_mix(dims, i, messages, topology.weights());
    let v_next = aux_dual_update(
        constraint,
        i,
        own,
        messages,
        topology.gossip(),
        config.beta,
        config.gamma,
        &x_next,
    );
    let lambda_next = project_dual(&v_next);
    let r = dims.block_range(i);
    let n = dims.total_dim();
    let mut est = DVector::zeros(n);
    est.rows_mut(r.start, r.len()).copy_from(&x_next);
    for (src, dst) in (0..r.start).chain(r.end..n).enumerate() {
        est[dst] = others[src];
    }
    Ok(PlayerState {
        est,
        v: v_next,
        lambda: lambda_next,
        lambda_prev: own.lambda.clone(),
        x_prev: x_next,
    })
}

/// One synchronous round of the fully decentralized iteration. All updates
/// read the round-start snapshot, so the result does not depend on player
/// order.
pub fn synchronous_round(
    state: &SolverState,
    game: &dyn Game,
    topology: &Topology,
    config: &SolverConfig,
) -> Result<SolverState, SolverError> {
    let messages = publish_messages(state);
    let mut players = Vec::with_capacity(state.players.len());
    for i in 0..state.players.len() {
        players.push(player_round_update(
            game,
            i,
            &state.players[i],
            &messages,
            topology,
            config,
        )?);
    }
    let v_global = stack(players.iter().map(|p| &p.v));
    Ok(SolverState {
        players,
        aux: GlobalAux {
            y: state.aux.y.clone(),
            v_global,
        },
    })
}

/// Applies `(mat (x) I_block) v` without materializing the Kronecker product.
pub(crate) fn kron_apply(mat: &DMatrix<f64>, v: &DVector<f64>, block: usize) -> DVector<f64> {
    let n = mat.nrows();
    debug_assert_eq!(v.len(), n * block);
    let mut out = DVector::zeros(n * block);
    for i in 0..n {
        for j in 0..n {
            let mij = mat[(i, j)];
            if mij != 0.0 {
                let mut oi = out.rows_mut(i * block, block);
                oi.axpy(mij, &v.rows(j * block, block), 1.0);
            }
        }
    }
    out
}

/// One round of the semi-centralized reference iteration on stacked vectors:
/// estimates mix as in the decentralized form, then
/// `v' = lambda - C lambda + beta (Pi x' - b) + B y`, `y' = y - gamma B v'`,
/// `lambda' = max(v', 0)`.
#[allow(clippy::type_complexity)]
pub fn semi_centralized_round_stacked(
    est: &DVector<f64>,
    _v: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    game: &dyn Game,
    topology: &Topology,
    config: &SolverConfig,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>), SolverError> {
    let dims = game.dims();
    let n = dims.total_dim();
    let n_players = dims.n_players();
    let m = dims.coupling_rows();
    let constraint = game.constraint();
    let w = topology.weights();

    let mut est_next = DVector::zeros(n_players * n);
    for i in 0..n_players {
        let mut block = est_next.rows_mut(i * n, n);
        for j in 0..n_players {
            let wij = w[(i, j)];
            if wij != 0.0 {
                block.axpy(wij, &est.rows(j * n, n), 1.0);
            }
        }
    }
    for i in 0..n_players {
        let est_i = est.rows(i * n, n).into_owned();
        let grad = game.partial_gradient(i, &est_i)?;
        let lambda_i = lambda.rows(i * m, m).into_owned();
        let dual_force = constraint.a_block(i).transpose() * lambda_i;
        let r = dims.block_range(i);
        let mut own = est_next.rows_mut(i * n + r.start, r.len());
        own.axpy(-config.alpha, &grad, 1.0);
        own.axpy(-config.alpha, &dual_force, 1.0);
    }

    let mut pix_b = DVector::zeros(n_players * m);
    for i in 0..n_players {
        let r = dims.block_range(i);
        let x_i = est_next.rows(i * n + r.start, r.len()).into_owned();
        let block = constraint.a_block(i) * x_i - constraint.b_block(i);
        pix_b.rows_mut(i * m, m).copy_from(&block);
    }

    let mut v_next = lambda - kron_apply(topology.gossip(), lambda, m);
    v_next.axpy(config.beta, &pix_b, 1.0);
    v_next += kron_apply(topology.gossip_sqrt(), y, m);
    let y_next = y - kron_apply(topology.gossip_sqrt(), &v_next, m) * config.gamma;
    let lambda_next = project_dual(&v_next);
    Ok((est_next, v_next, y_next, lambda_next))
}

/// Semi-centralized round on the shared per-player state representation.
/// The one-step memories are still rotated so snapshots from either form
/// stay interchangeable.
pub fn semi_centralized_round(
    state: &SolverState,
    game: &dyn Game,
    topology: &Topology,
    config: &SolverConfig,
) -> Result<SolverState, SolverError> {
    let dims = game.dims();
    let n = dims.total_dim();
    let m = dims.coupling_rows();
    let est = state.estimate_stack();
    let v = state.v_stack();
    let lambda = state.lambda_stack();
    let (est_next, v_next, y_next, lambda_next) =
        semi_centralized_round_stacked(&est, &v, &state.aux.y, &lambda, game, topology, config)?;
    let players = state
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let est_i = est_next.rows(i * n, n).into_owned();
            let r = dims.block_range(i);
            let x_next = est_i.rows(r.start, r.len()).into_owned();
            PlayerState {
                est: est_i,
                v: v_next.rows(i * m, m).into_owned(),
                lambda: lambda_next.rows(i * m, m).into_owned(),
                lambda_prev: p.lambda.clone(),
                x_prev: x_next,
            }
        })
        .collect();
    Ok(SolverState {
        players,
        aux: GlobalAux {
            y: y_next,
            v_global: v_next,
        },
    })
}

/// The consensus fixed point of both iteration forms, carrying the original
/// equilibrium, the shared multiplier and the lifted stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub v_star: DVector<f64>,
    pub y_star: DVector<f64>,
    pub x_lifted: DVector<f64>,
    pub lambda_lifted: DVector<f64>,
    pub v_lifted: DVector<f64>,
}

impl FixedPoint {
    /// The lifted state whose every component the iteration must preserve.
    pub fn lifted_state(&self, dims: &Dims) -> SolverState {
        let n_players = dims.n_players();
        let players = (0..n_players)
            .map(|i| {
                let r = dims.block_range(i);
                PlayerState {
                    est: self.x_star.clone(),
                    v: self.v_star.clone(),
                    lambda: self.lambda_star.clone(),
                    lambda_prev: self.lambda_star.clone(),
                    x_prev: self.x_star.rows(r.start, r.len()).into_owned(),
                }
            })
            .collect();
        SolverState {
            players,
            aux: GlobalAux {
                y: self.y_star.clone(),
                v_global: self.v_lifted.clone(),
            },
        }
    }
}

/// Builds the fixed point from an equilibrium and its shared multiplier:
/// `v* = lambda* + (beta/N)(A x* - b)` lifted to consensus, and `y*` the
/// minimum-norm solution of `B y* = v* - lambda* - beta (Pi x* - b)` inside
/// the range space of the lifted gossip square root. All fixed-point
/// residuals are verified before returning.
pub fn fixed_point_from_solution(
    x_star: &DVector<f64>,
    lambda_star: &DVector<f64>,
    game: &dyn Game,
    topology: &Topology,
    beta: f64,
) -> Result<FixedPoint, SolverError> {
    let dims = game.dims();
    let n_players = dims.n_players();
    let m = dims.coupling_rows();
    let constraint = game.constraint();

    let f = game.pseudo_gradient(x_star)?;
    let kkt = oracle::kkt_report_raw(&f, constraint, x_star, lambda_star)?;
    if kkt.residual > KKT_INPUT_TOL {
        return Err(SolverError::InconsistentKkt {
            residual: kkt.residual,
        });
    }

    let slack = constraint.residual(x_star)?;
    let v_star = lambda_star + &slack * (beta / n_players as f64);

    let x_lifted = lift(x_star, n_players);
    let lambda_lifted = lift(lambda_star, n_players);
    let v_lifted = lift(&v_star, n_players);

    let mut pix_b = DVector::zeros(n_players * m);
    for i in 0..n_players {
        let r = dims.block_range(i);
        let x_i = x_star.rows(r.start, r.len()).into_owned();
        let block = constraint.a_block(i) * x_i - constraint.b_block(i);
        pix_b.rows_mut(i * m, m).copy_from(&block);
    }
    let rhs = &v_lifted - &lambda_lifted - &pix_b * beta;
    let y_star = kron_pinv_apply(topology.gossip_sqrt(), &rhs, m);
    let y_residual = (kron_apply(topology.gossip_sqrt(), &y_star, m) - &rhs).amax();
    if y_residual > FIXED_POINT_TOL {
        return Err(SolverError::RangeSpaceMiss {
            residual: y_residual,
        });
    }

    // Remaining fixed-point residuals: primal stationarity of the lifted
    // profile, consensuality of v*, and the dual projection identity.
    let mut primal_residual = 0.0f64;
    let w = topology.weights();
    for i in 0..n_players {
        let mut mixed = DVector::zeros(dims.total_dim());
        for j in 0..n_players {
            if w[(i, j)] != 0.0 {
                mixed.axpy(w[(i, j)], x_star, 1.0);
            }
        }
        let grad = game.partial_gradient(i, x_star)?;
        let lambda_i = lambda_star.clone();
        let dual_force = constraint.a_block(i).transpose() * lambda_i;
        let r = dims.block_range(i);
        let mut own = mixed.rows_mut(r.start, r.len());
        own.axpy(-1.0, &grad, 1.0);
        own.axpy(-1.0, &dual_force, 1.0);
        primal_residual = primal_residual.max((mixed - x_star).amax());
    }
    if primal_residual > FIXED_POINT_TOL {
        return Err(SolverError::InconsistentKkt {
            residual: primal_residual,
        });
    }
    let consensual = kron_apply(topology.gossip_sqrt(), &v_lifted, m).amax();
    if consensual > CONSENSUAL_TOL {
        return Err(SolverError::InconsistentKkt {
            residual: consensual,
        });
    }
    let projection_residual = (&lambda_lifted - project_dual(&v_lifted)).amax();
    if projection_residual > FIXED_POINT_TOL {
        return Err(SolverError::InconsistentKkt {
            residual: projection_residual,
        });
    }

    Ok(FixedPoint {
        x_star: x_star.clone(),
        lambda_star: lambda_star.clone(),
        v_star,
        y_star,
        x_lifted,
        lambda_lifted,
        v_lifted,
    })
}

fn lift(v: &DVector<f64>, copies: usize) -> DVector<f64> {
    let mut out = DVector::zeros(copies * v.len());
    for i in 0..copies {
        out.rows_mut(i * v.len(), v.len()).copy_from(v);
    }
    out
}

/// Minimum-norm solution of `(mat (x) I_block) y = rhs` through the
/// eigendecomposition of the symmetric `mat`, inverting only eigenvalues
/// above the relative rank threshold. The output lies in the range space.
fn kron_pinv_apply(mat: &DMatrix<f64>, rhs: &DVector<f64>, block: usize) -> DVector<f64> {
    let eigen = SymmetricEigen::new(mat.clone());
    let lam_max = eigen.eigenvalues.amax();
    let threshold = 1e-9 * lam_max;
    let n = mat.nrows();
    let mut out = DVector::zeros(n * block);
    for k in 0..n {
        let lam = eigen.eigenvalues[k];
        if lam.abs() <= threshold {
            continue;
        }
        let u = eigen.eigenvectors.column(k);
        // Coefficient of rhs along (u (x) e_r) for each coordinate r.
        for r in 0..block {
            let mut coeff = 0.0;
            for i in 0..n {
                coeff += u[i] * rhs[i * block + r];
            }
            coeff /= lam;
            for i in 0..n {
                out[i * block + r] += coeff * u[i];
            }
        }
    }
    out
}

/// The weighted squared-error sum certified to contract each round:
/// `||x~||^2` weighted by `I - 2 alpha beta (Pi R)^T (Pi R)`, plus
/// `alpha/beta ||lambda~||^2` weighted by `I - gamma B^2`, plus
/// `alpha/(beta gamma) ||y~||^2`. Requires both weights positive definite.
pub fn lyapunov_value(
    state: &SolverState,
    fixed_point: &FixedPoint,
    alpha: f64,
    beta: f64,
    gamma: f64,
    topology: &Topology,
    constraint: &CoupledConstraint,
) -> Result<f64, SolverError> {
    let w1_min = 1.0 - 2.0 * alpha * beta * constraint.lambda_max_pi_t_pi();
    let lb = topology.lambda_max_b();
    let w2_min = 1.0 - gamma * lb * lb;
    if w1_min <= 0.0 || w2_min <= 0.0 {
        return Err(SolverError::WeightNotPd {
            lambda_min: w1_min.min(w2_min),
        });
    }
    let dims_n_players = state.players.len();
    let x_tilde = state.estimate_stack() - &fixed_point.x_lifted;
    let lambda_tilde = state.lambda_stack() - &fixed_point.lambda_lifted;
    let y_tilde = &state.aux.y - &fixed_point.y_star;

    // Pi R x~ = per-player A_i (own decision - own block of x*).
    let mut pix = 0.0;
    let n = fixed_point.x_star.len();
    for i in 0..dims_n_players {
        let offset = i * n;
        // Own block range within the estimate copy.
        let r = block_range_of(constraint, i);
        let diff = x_tilde.rows(offset + r.0, r.1).into_owned();
        pix += (constraint.a_block(i) * diff).norm_squared();
    }
    let m = constraint.rows();
    let b_lambda = kron_apply(topology.gossip_sqrt(), &lambda_tilde, m);
    let e = x_tilde.norm_squared() - 2.0 * alpha * beta * pix
        + (alpha / beta) * (lambda_tilde.norm_squared() - gamma * b_lambda.norm_squared())
        + (alpha / (beta * gamma)) * y_tilde.norm_squared();
    Ok(e)
}

fn block_range_of(constraint: &CoupledConstraint, i: usize) -> (usize, usize) {
    let mut start = 0;
    for j in 0..i {
        start += constraint.a_block(j).ncols();
    }
    (start, constraint.a_block(i).ncols())
}

/// One per-iteration diagnostics record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: usize,
    /// Stacked true decisions.
    pub x: DVector<f64>,
    pub consensus_error: f64,
    pub dual_spread: f64,
    /// `||max(Ax - b, 0)||_inf`
    pub constraint_violation: f64,
    /// KKT residual at the stacked decisions and the mean dual estimate.
    pub kkt_residual: f64,
    /// `||est_stack - 1 (x) x*||_2`, present when a reference is supplied.
    pub dist_to_star: Option<f64>,
    /// Lyapunov value, present for semi-centralized runs with a reference
    /// and positive-definite weights.
    pub lyapunov: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    /// `(iteration, dist_to_star)` pairs for rate fitting.
    pub fn distances(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.dist_to_star.map(|d| (r.iter, d)))
            .collect()
    }

    pub fn final_record(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub state: SolverState,
    pub iterations: usize,
    pub stopped_early: bool,
}

/// Runs the configured iteration form until `max_iters` or until the
/// stopping metric (max of consensus error, dual spread and decision
/// displacement) drops to `stop_tol`.
pub fn run<R: Rng + ?Sized>(
    game: &dyn Game,
    topology: &Topology,
    config: &SolverConfig,
    reference: Option<&FixedPoint>,
    rng: &mut R,
) -> Result<RunResult, SolverError> {
    config.validate()?;
    let mut state = initialize(game, topology, config, rng)?;
    let dims = game.dims();
    let mut trajectory = Trajectory::default();
    push_record(
        &mut trajectory,
        0,
        &state,
        game,
        topology,
        config,
        reference,
    )?;
    let mut prev_x = state.decisions(dims);
    let mut iterations = 0;
    let mut stopped_early = false;
    for k in 1..=config.max_iters {
        let next = match config.form {
            SolverForm::Decentralized => synchronous_round(&state, game, topology, config)?,
            SolverForm::SemiCentralized => semi_centralized_round(&state, game, topology, config)?,
        };
        state = next;
        iterations = k;
        if !state.all_finite() {
            return Err(SolverError::NonFinite {
                iter: k,
                partial: Box::new(trajectory),
            });
        }
        let x = state.decisions(dims);
        let displacement = (&x - &prev_x).amax();
        prev_x = x;
        let metric = state
            .consensus_error()
            .max(state.dual_spread())
            .max(displacement);
        let stopping = config.stop_tol.is_finite() && metric <= config.stop_tol;
        if k % config.record_every == 0 || k == config.max_iters || stopping {
            push_record(&mut trajectory, k, &state, game, topology, config, reference)?;
        }
        if stopping {
            stopped_early = true;
            break;
        }
    }
    Ok(RunResult {
        trajectory,
        state,
        iterations,
        stopped_early,
    })
}

fn push_record(
    trajectory: &mut Trajectory,
    iter: usize,
    state: &SolverState,
    game: &dyn Game,
    topology: &Topology,
    config: &SolverConfig,
    reference: Option<&FixedPoint>,
) -> Result<(), SolverError> {
    let dims = game.dims();
    let constraint = game.constraint();
    let x = state.decisions(dims);
    let slack = constraint.residual(&x)?;
    let constraint_violation = slack.iter().fold(0.0f64, |acc, &s| acc.max(s.max(0.0)));
    let m = dims.coupling_rows();
    let mut lambda_bar = DVector::zeros(m);
    for p in &state.players {
        lambda_bar += &p.lambda;
    }
    lambda_bar /= state.players.len() as f64;
    let f = game.pseudo_gradient(&x)?;
    let kkt = oracle::kkt_report_raw(&f, constraint, &x, &lambda_bar)?;
    let dist_to_star = reference.map(|fp| (state.estimate_stack() - &fp.x_lifted).norm());
    let lyapunov = match (reference, config.form) {
        (Some(fp), SolverForm::SemiCentralized) => lyapunov_value(
            state,
            fp,
            config.alpha,
            config.beta,
            config.gamma,
            topology,
            constraint,
        )
        .ok(),
        _ => None,
    };
    trajectory.records.push(TrajectoryRecord {
        iter,
        x,
        consensus_error: state.consensus_error(),
        dual_spread: state.dual_spread(),
        constraint_violation,
        kkt_residual: kkt.residual,
        dist_to_star,
        lyapunov,
    });
    Ok(())
}
