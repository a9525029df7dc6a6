//! Communication topologies and the graph-derived matrices the solver needs.
//!
//! A [`Topology`] bundles a connected undirected graph with
//!
//! * a symmetric doubly stochastic weight matrix `W` (positive self-weights),
//! * the gossip matrix `C = (I - W) / 2`,
//! * the symmetric PSD square root `B` of `C` (so `B^2 = C`),
//! * the consensus gap `sigma = ||W - 11^T/N||_2`,
//! * the spectral constants of `B` entering the stepsize bounds.
//!
//! The null space of `B` is exactly the consensus subspace spanned by the
//! all-ones vector, which is what makes `B` usable as a dual diffusion
//! operator: `B y = 0` iff all entries of `y` agree.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Tolerance for doubly stochastic row sums and symmetry of `W`.
const WEIGHT_TOL: f64 = 1e-12;
/// Eigenvalues of a PSD matrix below this are treated as negative noise.
const PSD_CLAMP: f64 = 1e-8;
/// Relative rank threshold separating zero from nonzero singular values of `B`.
const RANK_REL_THRESHOLD: f64 = 1e-9;
/// Admissible Frobenius residual of the square-root reconstruction.
const SQRT_RESIDUAL_TOL: f64 = 1e-10;
/// `B * 1` must vanish to this tolerance.
const NULLSPACE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("adjacency matrix is not symmetric")]
    NonSymmetric,
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error(
        "singular value {value:.3e} is within a factor of 10 of the rank threshold {threshold:.3e}"
    )]
    RankThresholdAmbiguous { value: f64, threshold: f64 },
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("topology invariant violated: {0}")]
    InvariantViolation(String),
}

/// Largest eigenvalue and smallest nonzero singular value of `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub lambda_max: f64,
    pub min_nonzero_sv: f64,
}

/// A validated communication topology with all derived matrices.
#[derive(Debug, Clone)]
pub struct Topology {
    adjacency: DMatrix<bool>,
    w: DMatrix<f64>,
    c: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma: f64,
    lambda_max_b: f64,
    min_nonzero_sv_b: f64,
}

impl Topology {
    /// Builds a topology from an adjacency matrix using Metropolis-Hastings
    /// weights. Works on any connected graph and always yields positive
    /// self-weights.
    pub fn metropolis(adjacency: DMatrix<bool>) -> Result<Self, TopologyError> {
        let w = build_metropolis(&adjacency)?;
        Self::from_parts(adjacency, w)
    }

    /// Builds a topology from a user-supplied weight matrix, validated
    /// against the same invariants as the generated ones.
    pub fn with_weights(
        adjacency: DMatrix<bool>,
        w: DMatrix<f64>,
    ) -> Result<Self, TopologyError> {
        validate_adjacency(&adjacency)?;
        validate_weights(&w, &adjacency)?;
        Self::from_parts(adjacency, w)
    }

    /// Ring graph on `n >= 2` nodes with Metropolis weights.
    pub fn ring(n: usize) -> Result<Self, TopologyError> {
        Self::metropolis(ring_adjacency(n))
    }

    /// Complete graph on `n >= 2` nodes with Metropolis weights.
    ///
    /// Metropolis weights on the complete graph equal `11^T / n`, so the
    /// consensus gap is exactly zero. The topology is valid but the
    /// theoretical stepsize bounds degenerate at `sigma = 0`.
    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        Self::metropolis(complete_adjacency(n))
    }

    /// Path graph on `n >= 2` nodes with Metropolis weights.
    pub fn path(n: usize) -> Result<Self, TopologyError> {
        Self::metropolis(path_adjacency(n))
    }

    fn from_parts(adjacency: DMatrix<bool>, w: DMatrix<f64>) -> Result<Self, TopologyError> {
        let n = w.nrows();
        let sigma = consensus_gap(&w);
        if !(0.0..1.0).contains(&sigma) {
            return Err(TopologyError::InvariantViolation(format!(
                "consensus gap {sigma} outside [0, 1)"
            )));
        }
        let c = gossip_matrix(&w);
        let b = matrix_sqrt_psd(&c)?;
        let residual = (&b * &b - &c).norm();
        if residual > SQRT_RESIDUAL_TOL {
            return Err(TopologyError::InvariantViolation(format!(
                "||B*B - C||_F = {residual:.3e} exceeds {SQRT_RESIDUAL_TOL:.1e}"
            )));
        }
        let ones = DVector::from_element(n, 1.0);
        let null_res = (&b * &ones).amax();
        if null_res > NULLSPACE_TOL {
            return Err(TopologyError::InvariantViolation(format!(
                "B * 1 has max entry {null_res:.3e}, the ones vector must be in the null space"
            )));
        }
        let bounds = spectral_bounds(&b)?;
        Ok(Self {
            adjacency,
            w,
            c,
            b,
            sigma,
            lambda_max_b: bounds.lambda_max,
            min_nonzero_sv_b: bounds.min_nonzero_sv,
        })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<bool> {
        &self.adjacency
    }

    /// Doubly stochastic mixing weights `W`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Gossip matrix `C = (I - W) / 2`.
    pub fn gossip(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Symmetric PSD square root `B` of the gossip matrix.
    pub fn gossip_sqrt(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Consensus gap `sigma = ||W - 11^T/N||_2 in [0, 1)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda_max_b(&self) -> f64 {
        self.lambda_max_b
    }

    /// Smallest nonzero singular value of `B`.
    pub fn min_nonzero_sv_b(&self) -> f64 {
        self.min_nonzero_sv_b
    }

    /// Edge list (i < j) of the underlying graph.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[(i, j)] {
                    edges.push((i, j));
                }
            }
        }
        edges
    }
}

/// Metropolis-Hastings weights: `w_ij = 1 / (1 + max(d_i, d_j))` on edges,
/// `w_ii = 1 - sum_j w_ij`. Symmetric, doubly stochastic, positive diagonal.
pub fn build_metropolis(adjacency: &DMatrix<bool>) -> Result<DMatrix<f64>, TopologyError> {
    validate_adjacency(adjacency)?;
    let n = adjacency.nrows();
    let degrees: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && adjacency[(i, j)]).count())
        .collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off_sum = 0.0;
        for j in 0..n {
            if j != i && adjacency[(i, j)] {
                let wij = 1.0 / (1.0 + degrees[i].max(degrees[j]) as f64);
                w[(i, j)] = wij;
                off_sum += wij;
            }
        }
        w[(i, i)] = 1.0 - off_sum;
    }
    Ok(w)
}

/// Spectral norm of `W - 11^T/N`. For a symmetric doubly stochastic `W` on a
/// connected graph this is the largest absolute eigenvalue other than the
/// simple eigenvalue one.
pub fn consensus_gap(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let avg = 1.0 / n as f64;
    let deflated = w.map(|x| x) - DMatrix::from_element(n, n, avg);
    let eigen = SymmetricEigen::new(deflated);
    eigen.eigenvalues.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()))
}

/// Gossip matrix `C = (I - W) / 2`. Row sums are zero and `C` is PSD.
pub fn gossip_matrix(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            c[(i, j)] = 0.5 * (id - w[(i, j)]);
        }
    }
    c
}

/// Symmetric PSD square root via eigendecomposition. Negative eigenvalues
/// within `-1e-8` of zero are clamped before taking square roots; anything
/// more negative is rejected as genuinely indefinite.
pub fn matrix_sqrt_psd(c: &DMatrix<f64>) -> Result<DMatrix<f64>, TopologyError> {
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (c[(i, j)] - c[(j, i)]).abs() > WEIGHT_TOL {
                return Err(TopologyError::NonSymmetric);
            }
        }
    }
    let sym = (c + c.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym);
    let min_eig = eigen.eigenvalues.min();
    if min_eig < -PSD_CLAMP {
        return Err(TopologyError::NotPsd { min_eig });
    }
    // Eigenvalues at roundoff level are exact zeros of the input, clamp them
    // before the square root so null vectors stay null (sqrt(1e-17) would
    // otherwise smear 3e-9 across the null space).
    let zero_floor = 1e2 * f64::EPSILON * eigen.eigenvalues.amax();
    let sqrt_vals = eigen
        .eigenvalues
        .map(|e| if e <= zero_floor { 0.0 } else { e.sqrt() });
    let v = &eigen.eigenvectors;
    let b = v * DMatrix::from_diagonal(&sqrt_vals) * v.transpose();
    Ok((&b + b.transpose()) * 0.5)
}

/// Largest eigenvalue of `B` and its smallest singular value strictly above
/// the relative rank threshold `1e-9 * lambda_max`.
///
/// Errors if any singular value sits within a factor of ten of the threshold,
/// since then zero and nonzero cannot be told apart reliably.
pub fn spectral_bounds(b: &DMatrix<f64>) -> Result<SpectralBounds, TopologyError> {
    let eigen = SymmetricEigen::new(b.clone());
    // B is symmetric PSD, so singular values are the absolute eigenvalues.
    let svs: Vec<f64> = eigen.eigenvalues.iter().map(|e| e.abs()).collect();
    let lambda_max = eigen.eigenvalues.max();
    let threshold = RANK_REL_THRESHOLD * lambda_max;
    for &sv in &svs {
        if sv >= threshold / 10.0 && sv <= threshold * 10.0 {
            return Err(TopologyError::RankThresholdAmbiguous {
                value: sv,
                threshold,
            });
        }
    }
    let min_nonzero = svs
        .iter()
        .copied()
        .filter(|&sv| sv > threshold)
        .fold(f64::INFINITY, f64::min);
    if !min_nonzero.is_finite() {
        return Err(TopologyError::RankThresholdAmbiguous {
            value: 0.0,
            threshold,
        });
    }
    Ok(SpectralBounds {
        lambda_max,
        min_nonzero_sv: min_nonzero,
    })
}

/// Ring adjacency on `n` nodes (node i connects to i-1 and i+1 mod n).
pub fn ring_adjacency(n: usize) -> DMatrix<bool> {
    let mut adj = DMatrix::from_element(n, n, false);
    for i in 0..n {
        let next = (i + 1) % n;
        if next != i {
            adj[(i, next)] = true;
            adj[(next, i)] = true;
        }
    }
    adj
}

/// Complete-graph adjacency on `n` nodes.
pub fn complete_adjacency(n: usize) -> DMatrix<bool> {
    DMatrix::from_fn(n, n, |i, j| i != j)
}

/// Path adjacency on `n` nodes.
pub fn path_adjacency(n: usize) -> DMatrix<bool> {
    let mut adj = DMatrix::from_element(n, n, false);
    for i in 0..n.saturating_sub(1) {
        adj[(i, i + 1)] = true;
        adj[(i + 1, i)] = true;
    }
    adj
}

/// Adjacency from an edge list; rejects out-of-range nodes and self-loops.
pub fn adjacency_from_edges(
    n: usize,
    edges: &[(usize, usize)],
) -> Result<DMatrix<bool>, TopologyError> {
    let mut adj = DMatrix::from_element(n, n, false);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(TopologyError::InvalidWeights(format!(
                "edge ({i}, {j}) out of range for {n} nodes"
            )));
        }
        if i == j {
            return Err(TopologyError::InvalidWeights(format!(
                "self-loop ({i}, {i}) not allowed; self-weights come from W"
            )));
        }
        adj[(i, j)] = true;
        adj[(j, i)] = true;
    }
    Ok(adj)
}

fn validate_adjacency(adjacency: &DMatrix<bool>) -> Result<(), TopologyError> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(TopologyError::NonSymmetric);
    }
    for i in 0..n {
        for j in 0..n {
            if adjacency[(i, j)] != adjacency[(j, i)] {
                return Err(TopologyError::NonSymmetric);
            }
        }
    }
    if !is_connected(adjacency) {
        return Err(TopologyError::DisconnectedGraph);
    }
    Ok(())
}

fn is_connected(adjacency: &DMatrix<bool>) -> bool {
    let n = adjacency.nrows();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if j != i && adjacency[(i, j)] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn validate_weights(w: &DMatrix<f64>, adjacency: &DMatrix<bool>) -> Result<(), TopologyError> {
    let n = adjacency.nrows();
    if w.nrows() != n || w.ncols() != n {
        return Err(TopologyError::InvalidWeights(format!(
            "weight matrix is {}x{}, expected {n}x{n}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..n {
        if w[(i, i)] <= 0.0 {
            return Err(TopologyError::InvalidWeights(format!(
                "self-weight w[{i}][{i}] = {} must be positive",
                w[(i, i)]
            )));
        }
        let mut row_sum = 0.0;
        for j in 0..n {
            let wij = w[(i, j)];
            if wij < 0.0 {
                return Err(TopologyError::InvalidWeights(format!(
                    "negative weight w[{i}][{j}] = {wij}"
                )));
            }
            if (wij - w[(j, i)]).abs() > WEIGHT_TOL {
                return Err(TopologyError::InvalidWeights(format!(
                    "w[{i}][{j}] = {wij} differs from w[{j}][{i}] = {}",
                    w[(j, i)]
                )));
            }
            if i != j && (wij > 0.0) != adjacency[(i, j)] {
                return Err(TopologyError::InvalidWeights(format!(
                    "w[{i}][{j}] = {wij} disagrees with the adjacency structure"
                )));
            }
            row_sum += wij;
        }
        if (row_sum - 1.0).abs() > WEIGHT_TOL {
            return Err(TopologyError::InvalidWeights(format!(
                "row {i} sums to {row_sum}, expected 1"
            )));
        }
    }
    Ok(())
}
