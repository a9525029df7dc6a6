//! Analytic test fixtures and seeded random instances.
//!
//! The closed-form fixtures carry their known equilibria so tests and the
//! acceptance suite can assert against exact values instead of solver
//! output.

use crate::game::{AffineGame, CoupledConstraint, Dims};
use crate::topology::Topology;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A game bundled with its known variational equilibrium and multiplier.
#[derive(Debug, Clone)]
pub struct AnalyticFixture {
    pub game: AffineGame,
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
}

/// Two players with costs `(x_i - t_i)^2`, `t = (3, 2)`, sharing the
/// capacity `x_1 + x_2 <= 4` split as `b_i = 2`. The constraint is active:
/// `x* = (2.5, 1.5)`, `lambda* = 1`.
pub fn two_player_scalar() -> AnalyticFixture {
    let dims = Dims::uniform(2, 1, 1).expect("static dims");
    let constraint = CoupledConstraint::new(
        vec![
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        ],
        vec![DVector::from_element(1, 2.0), DVector::from_element(1, 2.0)],
    )
    .expect("static constraint");
    let game = AffineGame::new(
        dims,
        DMatrix::from_diagonal_element(2, 2, 2.0),
        DVector::from_column_slice(&[-6.0, -4.0]),
        constraint,
    )
    .expect("static game");
    AnalyticFixture {
        game,
        x_star: DVector::from_column_slice(&[2.5, 1.5]),
        lambda_star: DVector::from_element(1, 1.0),
    }
}

/// Same game with the capacity relaxed to `b_i = 5`, so the unconstrained
/// optimum `(3, 2)` is interior and `lambda* = 0`.
pub fn two_player_scalar_inactive() -> AnalyticFixture {
    let dims = Dims::uniform(2, 1, 1).expect("static dims");
    let constraint = CoupledConstraint::new(
        vec![
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        ],
        vec![DVector::from_element(1, 5.0), DVector::from_element(1, 5.0)],
    )
    .expect("static constraint");
    let game = AffineGame::new(
        dims,
        DMatrix::from_diagonal_element(2, 2, 2.0),
        DVector::from_column_slice(&[-6.0, -4.0]),
        constraint,
    )
    .expect("static game");
    AnalyticFixture {
        game,
        x_star: DVector::from_column_slice(&[3.0, 2.0]),
        lambda_star: DVector::from_element(1, 0.0),
    }
}

/// Symmetric 2-node topology with user weights `diag 0.75`, giving the
/// nonzero consensus gap 0.5 that the two-player fixture needs for the
/// stepsize certificate.
pub fn two_player_topology() -> Topology {
    let adj = crate::topology::path_adjacency(2);
    let w = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
    Topology::with_weights(adj, w).expect("static topology")
}

/// Five scalar players on a ring: costs `(x_i - t_i)^2` with
/// `t = (3, 2, 1, 2, 3)` and the active shared capacity `sum x_i <= 5`
/// (`b_i = 1`). Closed form: `lambda* = 2 (sum t - 5) / 5 = 2.4` and
/// `x* = t - 1.2`. The pseudo-gradient has `mu = L = 2`.
pub fn ring5_quadratic() -> (AnalyticFixture, Topology) {
    let t = [3.0, 2.0, 1.0, 2.0, 3.0];
    let dims = Dims::uniform(5, 1, 1).expect("static dims");
    let constraint = CoupledConstraint::new(
        vec![DMatrix::from_row_slice(1, 1, &[1.0]); 5],
        vec![DVector::from_element(1, 1.0); 5],
    )
    .expect("static constraint");
    let c: Vec<f64> = t.iter().map(|&ti| -2.0 * ti).collect();
    let game = AffineGame::new(
        dims,
        DMatrix::from_diagonal_element(5, 5, 2.0),
        DVector::from_column_slice(&c),
        constraint,
    )
    .expect("static game");
    let lambda = 2.0 * (t.iter().sum::<f64>() - 5.0) / 5.0;
    let x_star = DVector::from_column_slice(&t.map(|ti| ti - lambda / 2.0));
    (
        AnalyticFixture {
            game,
            x_star,
            lambda_star: DVector::from_element(1, lambda),
        },
        Topology::ring(5).expect("static topology"),
    )
}

/// Seeded random affine game satisfying all standing assumptions: a
/// diagonally dominant `M` (so the per-player Lipschitz constant stays close
/// to the global one and the centralized projected-gradient oracle
/// contracts), constraint blocks `[I_m | noise]` with full row rank, and
/// positive offsets.
pub fn random_affine_game<R: Rng + ?Sized>(
    rng: &mut R,
    n_players: usize,
    m: usize,
) -> AffineGame {
    let block_sizes: Vec<usize> = (0..n_players)
        .map(|_| m + rng.random_range(0..=1))
        .collect();
    let dims = Dims::new(block_sizes.clone(), m).expect("valid dims");
    let n = dims.total_dim();
    let mut m_matrix = DMatrix::zeros(n, n);
    let coupling = 0.8 / (n.max(2) - 1) as f64;
    for r in 0..n {
        for c in 0..n {
            if r == c {
                m_matrix[(r, c)] = rng.random_range(2.0..4.0);
            } else {
                m_matrix[(r, c)] = coupling * rng.random_range(-1.0..1.0);
            }
        }
    }
    // Pull the unconstrained equilibrium outward so the coupled constraint
    // binds for a healthy share of instances.
    let c = DVector::from_fn(n, |_, _| rng.random_range(-7.0..-1.0));
    let mut a_blocks = Vec::with_capacity(n_players);
    let mut b_blocks = Vec::with_capacity(n_players);
    for &ni in &block_sizes {
        let mut ai = DMatrix::zeros(m, ni);
        for r in 0..m {
            ai[(r, r)] = 1.0 + rng.random_range(0.0..0.5);
            for col in m..ni {
                ai[(r, col)] = rng.random_range(-0.3..0.3);
            }
        }
        a_blocks.push(ai);
        b_blocks.push(DVector::from_fn(m, |_, _| rng.random_range(0.5..2.0)));
    }
    let constraint = CoupledConstraint::new(a_blocks, b_blocks).expect("full row rank blocks");
    AffineGame::new(dims, m_matrix, c, constraint).expect("diagonally dominant map")
}

/// Seeded connected random graph: a random spanning tree plus independent
/// extra edges with the given probability.
pub fn random_connected_adjacency<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    edge_prob: f64,
) -> DMatrix<bool> {
    let mut adj = DMatrix::from_element(n, n, false);
    for i in 1..n {
        let j = rng.random_range(0..i);
        adj[(i, j)] = true;
        adj[(j, i)] = true;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_range(0.0..1.0) < edge_prob {
                adj[(i, j)] = true;
                adj[(j, i)] = true;
            }
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{monotonicity_constants, Game};
    use crate::oracle;

    #[test]
    fn fixtures_carry_consistent_kkt_pairs() {
        for fixture in [two_player_scalar(), two_player_scalar_inactive()] {
            let f = fixture.game.pseudo_gradient(&fixture.x_star).unwrap();
            let report = oracle::kkt_report_raw(
                &f,
                fixture.game.constraint(),
                &fixture.x_star,
                &fixture.lambda_star,
            )
            .unwrap();
            assert!(report.residual <= 1e-12);
        }
        let (fixture, topo) = ring5_quadratic();
        assert_eq!(topo.n(), 5);
        let f = fixture.game.pseudo_gradient(&fixture.x_star).unwrap();
        let report = oracle::kkt_report_raw(
            &f,
            fixture.game.constraint(),
            &fixture.x_star,
            &fixture.lambda_star,
        )
        .unwrap();
        assert!(report.residual <= 1e-12);
        let k = monotonicity_constants(&fixture.game).unwrap();
        assert!((k.mu - 2.0).abs() < 1e-12 && (k.l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn random_games_satisfy_standing_assumptions() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..30 {
            use rand::Rng;
            let n_players = rng.random_range(2..=10);
            let m = rng.random_range(1..=3);
            let game = random_affine_game(&mut rng, n_players, m);
            let k = monotonicity_constants(&game).unwrap();
            assert!(k.mu > 0.0 && k.mu <= k.l);
            // The oracle stepsize must contract: the global Lipschitz
            // constant may not exceed sqrt(2) times the per-player one.
            let full = game.m_matrix().clone().svd(false, false).singular_values.max();
            assert!(full * full < 2.0 * k.l * k.l * (1.0 + 1e-9));
        }
    }
}
