//! Seeded instance generation for the Nash-Cournot benchmark.
//!
//! Draw order is fixed so instances are reproducible across platforms:
//! for each firm in index order, first the production-cost curvature
//! diagonal (n_i draws), then the linear cost (n_i), then the market
//! capacity share (m); afterwards the price intercepts (m) and the price
//! slopes (m); finally the random topology edges when one is requested.

use crate::config::{ExperimentConfig, TopologySpec};
use gne_core::game::{monotonicity_constants, CoupledConstraint, CournotGame, Dims, Game};
use gne_core::io::{load_game, load_topology, LoadedGame};
use gne_core::stepsize::TheoryConstants;
use gne_core::topology::{ring_adjacency, Topology};
use gne_core::AffineGame;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A generated (or loaded) instance with its affine expansion and the
/// constants entering the stepsize bounds.
pub struct GeneratedInstance {
    pub game: LoadedGame,
    pub topology: Topology,
    pub affine: AffineGame,
    pub constants: TheoryConstants,
}

pub fn generate_cournot(config: &ExperimentConfig) -> anyhow::Result<GeneratedInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let game = match &config.game_file {
        Some(path) => load_game(path)?,
        None => LoadedGame::Cournot(sample_cournot(config, &mut rng)?),
    };
    let n_players = game.as_game().dims().n_players();
    let topology = match &config.topology {
        TopologySpec::Ring => Topology::ring(n_players)?,
        TopologySpec::RandomConnected { edge_prob } => {
            let adj = gne_core::fixtures::random_connected_adjacency(
                &mut rng, n_players, *edge_prob,
            );
            Topology::metropolis(adj)?
        }
        TopologySpec::File { path } => load_topology(path)?,
    };
    anyhow::ensure!(
        topology.n() == n_players,
        "topology has {} nodes but the game has {} players",
        topology.n(),
        n_players
    );
    let affine = game.to_affine()?;
    let constants = TheoryConstants::new(
        monotonicity_constants(&affine)?,
        &topology,
        Game::constraint(&affine),
    );
    Ok(GeneratedInstance {
        game,
        topology,
        affine,
        constants,
    })
}

fn sample_cournot(
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> anyhow::Result<CournotGame> {
    let n_players = config.n_players;
    let m = config.m;
    let dims = Dims::uniform(n_players, config.n_i, m)?;
    let mut q_diag = Vec::with_capacity(n_players);
    let mut q_lin = Vec::with_capacity(n_players);
    let mut a_blocks = Vec::with_capacity(n_players);
    let mut b_blocks = Vec::with_capacity(n_players);
    for _ in 0..n_players {
        q_diag.push(draw_vec(rng, config.n_i, config.q_diag_range));
        q_lin.push(draw_vec(rng, config.n_i, config.q_lin_range));
        b_blocks.push(draw_vec(rng, m, config.b_range));
        a_blocks.push(DMatrix::identity(m, config.n_i));
    }
    let price_intercept = draw_vec(rng, m, config.price_intercept_range);
    let price_slope = draw_vec(rng, m, config.price_slope_range);
    let constraint = CoupledConstraint::new(a_blocks, b_blocks)?;
    Ok(CournotGame::new(
        dims,
        q_diag,
        q_lin,
        price_intercept,
        price_slope,
        constraint,
    )?)
}

fn draw_vec(rng: &mut ChaCha8Rng, len: usize, range: [f64; 2]) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(range[0]..=range[1]))
}

/// Ring adjacency re-exported for tests that build tiny instances by hand.
pub fn ring(n: usize) -> anyhow::Result<Topology> {
    Ok(Topology::metropolis(ring_adjacency(n))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    
    #[test]
    fn identical_seeds_give_bit_identical_instances() {
        let config = ExperimentConfig {
            n_players: 4,
            m: 2,
            n_i: 2,
            ..Default::default()
        };
        let a = generate_cournot(&config).unwrap();
        let b = generate_cournot(&config).unwrap();
        let (LoadedGame::Cournot(ga), LoadedGame::Cournot(gb)) = (&a.game, &b.game) else {
            panic!("expected market games");
        };
        for i in 0..4 {
            assert_eq!(ga.q_diag(i), gb.q_diag(i));
            assert_eq!(ga.q_lin(i), gb.q_lin(i));
        }
        assert_eq!(ga.price_intercept(), gb.price_intercept());
        assert_eq!(a.topology.weights(), b.topology.weights());
        assert_eq!(a.constants, b.constants);
    }

    #[test]
    fn generated_instances_are_strongly_monotone_across_seeds() {
        for seed in 0..100 {
            let config = ExperimentConfig {
                seed,
                n_players: 5,
                m: 2,
                n_i: 2,
                ..Default::default()
            };
            let instance = generate_cournot(&config).unwrap();
            assert!(
                instance.constants.mu > 0.0,
                "seed {seed} produced a non-monotone instance"
            );
            assert!(instance.constants.mu <= instance.constants.l);
        }
    }

    #[test]
    fn ring_topology_spec_is_honored() {
        let config = ExperimentConfig {
            n_players: 6,
            m: 1,
            n_i: 1,
            topology: TopologySpec::Ring,
            ..Default::default()
        };
        let instance = generate_cournot(&config).unwrap();
        assert_eq!(instance.topology.edges().len(), 6);
        assert_eq!(instance.game.as_game().dims().total_dim(), 6);
    }
}
