//! JSON schemas for topologies, games and solver snapshots, plus the
//! trajectory CSV writer.
//!
//! Topology files: `{"n", "edges": [[i, j], ...], "weights"?: row-major NxN}`;
//! the writer adds the computed `"sigma"`. Game files carry a `"type"` tag
//! of `"affine"` or `"cournot"` with dense matrices stored row-major.

use crate::game::{AffineGame, CoupledConstraint, CournotGame, Dims, Game, GameError};
use crate::solver::{GlobalAux, PlayerState, SolverState, Trajectory};
use crate::topology::{adjacency_from_edges, Topology, TopologyError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("schema violation: {0}")]
    Schema(String),
}

// ---------------------------------------------------------------------------
// Topology files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub n: usize,
    /// Undirected edges as 0-indexed pairs.
    pub edges: Vec<[usize; 2]>,
    /// Optional row-major N x N weight matrix; Metropolis weights are
    /// generated when absent.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
    /// Consensus gap, written by the serializer and ignored on load.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
}

pub fn topology_to_file(topology: &Topology) -> TopologyFile {
    let n = topology.n();
    let w = topology.weights();
    TopologyFile {
        n,
        edges: topology.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        weights: Some((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| w[(i, j)]).collect()),
        sigma: Some(topology.sigma()),
    }
}

pub fn topology_from_file(file: &TopologyFile) -> Result<Topology, IoError> {
    let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
    let adjacency = adjacency_from_edges(file.n, &edges)?;
    match &file.weights {
        Some(flat) => {
            if flat.len() != file.n * file.n {
                return Err(IoError::Schema(format!(
                    "weights must hold {} entries, got {}",
                    file.n * file.n,
                    flat.len()
                )));
            }
            let w = DMatrix::from_row_slice(file.n, file.n, flat);
            Ok(Topology::with_weights(adjacency, w)?)
        }
        None => Ok(Topology::metropolis(adjacency)?),
    }
}

pub fn save_topology(topology: &Topology, path: &Path) -> Result<(), IoError> {
    let file = topology_to_file(topology);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_topology(path: &Path) -> Result<Topology, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: TopologyFile = serde_json::from_str(&text)?;
    topology_from_file(&file)
}

// ---------------------------------------------------------------------------
// Game files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimsFile {
    pub block_sizes: Vec<usize>,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    /// Row-major m x n_i blocks.
    pub a_blocks: Vec<Vec<f64>>,
    pub b_blocks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GameFile {
    Affine {
        dims: DimsFile,
        /// Row-major n x n pseudo-gradient matrix.
        m_matrix: Vec<f64>,
        c: Vec<f64>,
        constraint: ConstraintFile,
    },
    Cournot {
        dims: DimsFile,
        q_diag: Vec<Vec<f64>>,
        q_lin: Vec<Vec<f64>>,
        price_intercept: Vec<f64>,
        price_slope: Vec<f64>,
        constraint: ConstraintFile,
    },
}

/// A deserialized game of either kind.
#[derive(Debug, Clone)]
pub enum LoadedGame {
    Affine(AffineGame),
    Cournot(CournotGame),
}

impl LoadedGame {
    pub fn as_game(&self) -> &dyn Game {
        match self {
            LoadedGame::Affine(g) => g,
            LoadedGame::Cournot(g) => g,
        }
    }

    /// The affine form: identity for affine games, the expanded
    /// pseudo-gradient for Cournot games.
    pub fn to_affine(&self) -> Result<AffineGame, GameError> {
        match self {
            LoadedGame::Affine(g) => Ok(g.clone()),
            LoadedGame::Cournot(g) => crate::game::affine_from_cournot(g),
        }
    }
}

fn constraint_from_file(dims: &Dims, file: &ConstraintFile) -> Result<CoupledConstraint, IoError> {
    if file.a_blocks.len() != dims.n_players() || file.b_blocks.len() != dims.n_players() {
        return Err(IoError::Schema(format!(
            "expected {} constraint blocks",
            dims.n_players()
        )));
    }
    let m = dims.coupling_rows();
    let mut a_blocks = Vec::with_capacity(file.a_blocks.len());
    let mut b_blocks = Vec::with_capacity(file.b_blocks.len());
    for (i, (af, bf)) in file.a_blocks.iter().zip(&file.b_blocks).enumerate() {
        let ni = dims.block_size(i);
        if af.len() != m * ni {
            return Err(IoError::Schema(format!(
                "constraint block {i} must hold {} entries, got {}",
                m * ni,
                af.len()
            )));
        }
        if bf.len() != m {
            return Err(IoError::Schema(format!(
                "offset block {i} must hold {m} entries, got {}",
                bf.len()
            )));
        }
        a_blocks.push(DMatrix::from_row_slice(m, ni, af));
        b_blocks.push(DVector::from_column_slice(bf));
    }
    Ok(CoupledConstraint::new(a_blocks, b_blocks)?)
}

fn constraint_to_file(constraint: &CoupledConstraint) -> ConstraintFile {
    let mut a_blocks = Vec::new();
    let mut b_blocks = Vec::new();
    for i in 0..constraint.n_players() {
        let ai = constraint.a_block(i);
        a_blocks.push(
            (0..ai.nrows())
                .flat_map(|r| (0..ai.ncols()).map(move |c| (r, c)))
                .map(|(r, c)| ai[(r, c)])
                .collect(),
        );
        b_blocks.push(constraint.b_block(i).iter().copied().collect());
    }
    ConstraintFile { a_blocks, b_blocks }
}

pub fn game_to_file(game: &LoadedGame) -> GameFile {
    match game {
        LoadedGame::Affine(g) => {
            let dims = g.dims();
            let m = g.m_matrix();
            GameFile::Affine {
                dims: DimsFile {
                    block_sizes: dims.block_sizes().to_vec(),
                    m: dims.coupling_rows(),
                },
                m_matrix: (0..m.nrows())
                    .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                    .map(|(r, c)| m[(r, c)])
                    .collect(),
                c: g.c().iter().copied().collect(),
                constraint: constraint_to_file(g.constraint()),
            }
        }
        LoadedGame::Cournot(g) => {
            let dims = g.dims();
            GameFile::Cournot {
                dims: DimsFile {
                    block_sizes: dims.block_sizes().to_vec(),
                    m: dims.coupling_rows(),
                },
                q_diag: (0..dims.n_players())
                    .map(|i| g.q_diag(i).iter().copied().collect())
                    .collect(),
                q_lin: (0..dims.n_players())
                    .map(|i| g.q_lin(i).iter().copied().collect())
                    .collect(),
                price_intercept: g.price_intercept().iter().copied().collect(),
                price_slope: g.price_slope().iter().copied().collect(),
                constraint: constraint_to_file(g.constraint()),
            }
        }
    }
}

pub fn game_from_file(file: &GameFile) -> Result<LoadedGame, IoError> {
    match file {
        GameFile::Affine {
            dims,
            m_matrix,
            c,
            constraint,
        } => {
            let dims = Dims::new(dims.block_sizes.clone(), dims.m)?;
            let n = dims.total_dim();
            if m_matrix.len() != n * n {
                return Err(IoError::Schema(format!(
                    "affine matrix must hold {} entries, got {}",
                    n * n,
                    m_matrix.len()
                )));
            }
            if c.len() != n {
                return Err(IoError::Schema(format!(
                    "affine offset must hold {n} entries, got {}",
                    c.len()
                )));
            }
            let constraint = constraint_from_file(&dims, constraint)?;
            Ok(LoadedGame::Affine(AffineGame::new(
                dims,
                DMatrix::from_row_slice(n, n, m_matrix),
                DVector::from_column_slice(c),
                constraint,
            )?))
        }
        GameFile::Cournot {
            dims,
            q_diag,
            q_lin,
            price_intercept,
            price_slope,
            constraint,
        } => {
            let dims = Dims::new(dims.block_sizes.clone(), dims.m)?;
            let constraint = constraint_from_file(&dims, constraint)?;
            let q_diag = q_diag
                .iter()
                .map(|v| DVector::from_column_slice(v))
                .collect();
            let q_lin = q_lin
                .iter()
                .map(|v| DVector::from_column_slice(v))
                .collect();
            Ok(LoadedGame::Cournot(CournotGame::new(
                dims,
                q_diag,
                q_lin,
                DVector::from_column_slice(price_intercept),
                DVector::from_column_slice(price_slope),
                constraint,
            )?))
        }
    }
}

pub fn save_game(game: &LoadedGame, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, serde_json::to_string_pretty(&game_to_file(game))?)?;
    Ok(())
}

pub fn load_game(path: &Path) -> Result<LoadedGame, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: GameFile = serde_json::from_str(&text)?;
    game_from_file(&file)
}

// ---------------------------------------------------------------------------
// Solver snapshots
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerStateFile {
    pub est: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_prev: Vec<f64>,
    pub x_prev: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub players: Vec<PlayerStateFile>,
    pub y: Vec<f64>,
    pub v_global: Vec<f64>,
}

pub fn state_to_file(state: &SolverState) -> StateFile {
    StateFile {
        players: state
            .players
            .iter()
            .map(|p| PlayerStateFile {
                est: p.est.iter().copied().collect(),
                v: p.v.iter().copied().collect(),
                lambda: p.lambda.iter().copied().collect(),
                lambda_prev: p.lambda_prev.iter().copied().collect(),
                x_prev: p.x_prev.iter().copied().collect(),
            })
            .collect(),
        y: state.aux.y.iter().copied().collect(),
        v_global: state.aux.v_global.iter().copied().collect(),
    }
}

pub fn state_from_file(file: &StateFile) -> SolverState {
    SolverState {
        players: file
            .players
            .iter()
            .map(|p| PlayerState {
                est: DVector::from_column_slice(&p.est),
                v: DVector::from_column_slice(&p.v),
                lambda: DVector::from_column_slice(&p.lambda),
                lambda_prev: DVector::from_column_slice(&p.lambda_prev),
                x_prev: DVector::from_column_slice(&p.x_prev),
            })
            .collect(),
        aux: GlobalAux {
            y: DVector::from_column_slice(&file.y),
            v_global: DVector::from_column_slice(&file.v_global),
        },
    }
}

pub fn save_state(state: &SolverState, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, serde_json::to_string(&state_to_file(state))?)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<SolverState, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: StateFile = serde_json::from_str(&text)?;
    Ok(state_from_file(&file))
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

pub const TRAJECTORY_CSV_HEADER: &str =
    "iter,dist_to_star,consensus_err,dual_spread,constraint_violation,kkt_residual,lyapunov_E";

/// Renders the per-iteration diagnostics with the fixed schema above.
/// Optional columns stay empty when no reference solution was supplied.
pub fn trajectory_to_csv(trajectory: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * (trajectory.records.len() + 1));
    out.push_str(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for r in &trajectory.records {
        let dist = r.dist_to_star.map(fmt_float).unwrap_or_default();
        let lyap = r.lyapunov.map(fmt_float).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iter,
            dist,
            fmt_float(r.consensus_error),
            fmt_float(r.dual_spread),
            fmt_float(r.constraint_violation),
            fmt_float(r.kkt_residual),
            lyap,
        ));
    }
    out
}

fn fmt_float(v: f64) -> String {
    // Shortest round-trip form keeps the CSV byte-stable across reruns.
    format!("{v}")
}

pub fn save_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, trajectory_to_csv(trajectory))?;
    Ok(())
}
