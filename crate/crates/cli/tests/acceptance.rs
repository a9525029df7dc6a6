//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `-- --nocapture` to see them). Every
//! tolerance is pinned here.
//!
//! 1. closed-form fixture solved by oracle and decentralized solver
//! 2. per-iteration Lyapunov contraction at the certified factor
//! 3. trajectory equivalence of the two iteration forms
//! 4. the alpha bound keeps the comparison matrix contractive
//! 5. decentralized solver matches the centralized oracle
//! 6. analytic market gradients match finite differences
//! 7. desk-scale and full-scale market reproduction
//! 8. one-round stationarity of the lifted fixed point

use gne_cli::config::{ExperimentConfig, StepsizeSpec, TopologySpec};
use gne_core::fixtures;
use gne_core::game::{affine_from_cournot, monotonicity_constants, Game};
use gne_core::oracle::{self, ViProblem};
use gne_core::solver::{self, InitMode, SolverConfig, SolverForm};
use gne_core::stepsize::{self, TheoryConstants};
use gne_core::topology::Topology;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn certified_triple(
    game: &gne_core::game::AffineGame,
    topo: &Topology,
) -> (f64, f64, f64, TheoryConstants) {
    let constants = TheoryConstants::new(
        monotonicity_constants(game).expect("fixture is strongly monotone"),
        topo,
        game.constraint(),
    );
    let alpha = 0.99 * stepsize::alpha_bound(&constants).alpha_max;
    let bounds = stepsize::beta_gamma_bounds(&constants, alpha, 0.0).expect("sigma > 0");
    let beta = 0.99 * bounds.beta_max;
    let bounds = stepsize::beta_gamma_bounds(&constants, alpha, beta).expect("sigma > 0");
    let gamma = 0.99 * bounds.gamma_max;
    (alpha, beta, gamma, constants)
}

#[test]
fn criterion_1_closed_form_fixture() {
    let started = Instant::now();
    let fixture = fixtures::two_player_scalar();
    let topo = fixtures::two_player_topology();

    let problem = ViProblem::from_affine(&fixture.game).unwrap();
    let solution = oracle::solve_vi(&problem, 1e-13, 100_000).unwrap();
    assert!((solution.x_star[0] - 2.5).abs() <= 1e-12);
    assert!((solution.x_star[1] - 1.5).abs() <= 1e-12);
    let lambda = oracle::recover_multiplier(&problem, &solution.x_star).unwrap();
    assert!((lambda[0] - 1.0).abs() <= 1e-12);
    let report = oracle::kkt_residual(&problem, &solution.x_star, &lambda).unwrap();
    assert!(report.residual <= 1e-12, "oracle kkt = {:e}", report.residual);

    let (alpha, beta, gamma, _) = certified_triple(&fixture.game, &topo);
    let mut cfg = SolverConfig::new(alpha, beta, gamma);
    cfg.max_iters = 50_000;
    cfg.stop_tol = 1e-9;
    cfg.form = SolverForm::Decentralized;
    let result = solver::run(
        &fixture.game,
        &topo,
        &cfg,
        None,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let x = result.state.decisions(fixture.game.dims());
    let x_err = (&x - &fixture.x_star).amax();
    let lambda_err = result
        .state
        .players
        .iter()
        .map(|p| (&p.lambda - &fixture.lambda_star).amax())
        .fold(0.0f64, f64::max);
    assert!(x_err <= 1e-6, "|x - x*| = {x_err:e}");
    assert!(lambda_err <= 1e-6, "|lambda - lambda*| = {lambda_err:e}");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.2} s");
    println!(
        "acceptance criterion 1 (closed-form fixture): PASS — x err {x_err:.2e}, lambda err {lambda_err:.2e}, {} iterations, {elapsed:.2} s",
        result.iterations
    );
}

#[test]
fn criterion_2_contraction_certificate() {
    let started = Instant::now();
    let (fixture, topo) = fixtures::ring5_quadratic();
    assert!(
        (topo.sigma() - 0.5387).abs() <= 1e-3,
        "ring consensus gap {} drifted from the circulant value",
        topo.sigma()
    );
    let (alpha, beta, gamma, constants) = certified_triple(&fixture.game, &topo);
    let factor = stepsize::contraction_factor(&constants, alpha, beta, gamma);
    assert!(factor.certified);
    assert!(factor.a > 0.0 && factor.a < 1.0);

    let fp = solver::fixed_point_from_solution(
        &fixture.x_star,
        &fixture.lambda_star,
        &fixture.game,
        &topo,
        beta,
    )
    .unwrap();
    let mut cfg = SolverConfig::new(alpha, beta, gamma);
    cfg.form = SolverForm::SemiCentralized;
    cfg.init_mode = InitMode::SeededRandom;
    let mut state = solver::initialize(
        &fixture.game,
        &topo,
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let mut e_prev = solver::lyapunov_value(
        &state,
        &fp,
        alpha,
        beta,
        gamma,
        &topo,
        fixture.game.constraint(),
    )
    .unwrap();
    assert!(e_prev > 0.0);
    for k in 0..2000 {
        state = solver::semi_centralized_round(&state, &fixture.game, &topo, &cfg).unwrap();
        let e = solver::lyapunov_value(
            &state,
            &fp,
            alpha,
            beta,
            gamma,
            &topo,
            fixture.game.constraint(),
        )
        .unwrap();
        assert!(
            e <= factor.a * e_prev * (1.0 + 1e-10),
            "iteration {k}: E = {e:e} > a E_prev = {:e}",
            factor.a * e_prev
        );
        e_prev = e;
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.2} s");
    println!(
        "acceptance criterion 2 (contraction certificate): PASS — a = {:.6} over 2000 iterations, {elapsed:.2} s",
        factor.a
    );
}

#[test]
fn criterion_3_form_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let n_players = 2 + (trial % 7);
        let m = 1 + (trial % 2);
        let game = fixtures::random_affine_game(&mut rng, n_players, m);
        let adj = fixtures::random_connected_adjacency(&mut rng, n_players, 0.4);
        let topo = Topology::metropolis(adj).unwrap();
        let mut cfg = SolverConfig::new(0.01, 0.1, 0.2);
        cfg.init_mode = InitMode::FeasibleConsistent;
        let mut init_rng = ChaCha8Rng::seed_from_u64(trial as u64);
        let start = solver::initialize(&game, &topo, &cfg, &mut init_rng).unwrap();
        let mut dec = start.clone();
        let mut semi = start;
        for round in 0..200 {
            dec = solver::synchronous_round(&dec, &game, &topo, &cfg).unwrap();
            semi = solver::semi_centralized_round(&semi, &game, &topo, &cfg).unwrap();
            for i in 0..n_players {
                let x_rel = (&dec.players[i].est - &semi.players[i].est).amax()
                    / (1.0 + semi.players[i].est.amax());
                let l_rel = (&dec.players[i].lambda - &semi.players[i].lambda).amax()
                    / (1.0 + semi.players[i].lambda.amax());
                worst = worst.max(x_rel).max(l_rel);
                assert!(
                    x_rel <= 1e-9 && l_rel <= 1e-9,
                    "trial {trial} round {round}: x rel {x_rel:e}, lambda rel {l_rel:e}"
                );
            }
        }
    }
    println!(
        "acceptance criterion 3 (form equivalence): PASS — worst relative deviation {worst:.2e} over 10 instances x 200 rounds"
    );
}

#[test]
fn criterion_4_alpha_bound_keeps_rho_contractive() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_rho: f64 = 0.0;
    for _ in 0..1000 {
        let l = rng.random_range(0.5..10.0);
        let mu = rng.random_range(0.05 * l..=l);
        let sigma = rng.random_range(0.0001..=0.95);
        let n = rng.random_range(2..=50);
        let constants = TheoryConstants {
            mu,
            l,
            sigma,
            n_players: n,
            lam_max_pi_t_pi: 1.0,
            lam_min_pi_pi_t: 1.0,
            lam_max_b: 0.7,
            min_nonzero_sv_b: 0.4,
        };
        let bound = stepsize::alpha_bound(&constants).alpha_max;
        assert!(bound.is_finite() && bound > 0.0);
        let rho = stepsize::rho_m_alpha(&constants, 0.99 * bound);
        assert!(rho < 1.0, "rho = {rho} at mu={mu} l={l} sigma={sigma} n={n}");
        worst_rho = worst_rho.max(rho);
        // Exact boundary: the comparison matrix at alpha = 0 is diagonal
        // with entries 1 and sigma^2.
        assert_eq!(stepsize::rho_m_alpha(&constants, 0.0), 1.0);
    }
    println!(
        "acceptance criterion 4 (alpha bound): PASS — rho < 1 on 1000 tuples (worst {worst_rho:.12}), rho(M_0) = 1 exactly"
    );
}

#[test]
fn criterion_5_solver_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut worst_x: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for trial in 0..20 {
        let n_players = 2 + (trial % 9);
        let m = 1 + (trial % 3);
        let game = fixtures::random_affine_game(&mut rng, n_players, m);
        let adj = fixtures::random_connected_adjacency(&mut rng, n_players, 0.6);
        let topo = Topology::metropolis(adj).unwrap();

        let problem = ViProblem::from_affine(&game).unwrap();
        let solution = oracle::solve_vi(&problem, 1e-12, 200_000).unwrap();
        let lambda_star = oracle::recover_multiplier(&problem, &solution.x_star).unwrap();
        let oracle_report =
            oracle::kkt_residual(&problem, &solution.x_star, &lambda_star).unwrap();
        assert!(oracle_report.residual <= 1e-6);

        let mut cfg = SolverConfig::new(0.02, 0.3, 0.5);
        cfg.max_iters = 150_000;
        cfg.stop_tol = 2e-8;
        cfg.init_mode = InitMode::Zeros;
        let result = solver::run(
            &game,
            &topo,
            &cfg,
            None,
            &mut ChaCha8Rng::seed_from_u64(trial as u64),
        )
        .unwrap();
        let x = result.state.decisions(game.dims());
        let x_err = (&x - &solution.x_star).amax();
        assert!(
            x_err <= 1e-5,
            "trial {trial}: |x_solver - x_oracle| = {x_err:e} after {} iterations",
            result.iterations
        );
        let mut lambda_bar = DVector::zeros(m);
        for p in &result.state.players {
            lambda_bar += &p.lambda;
        }
        lambda_bar /= n_players as f64;
        let report = oracle::kkt_residual(&problem, &x, &lambda_bar).unwrap();
        assert!(
            report.residual <= 1e-5,
            "trial {trial}: solver kkt residual {:e}",
            report.residual
        );
        worst_x = worst_x.max(x_err);
        worst_kkt = worst_kkt.max(report.residual);
    }
    println!(
        "acceptance criterion 5 (oracle equivalence): PASS — worst |x - x*| {worst_x:.2e}, worst kkt {worst_kkt:.2e} over 20 games"
    );
}

#[test]
fn criterion_6_market_gradients() {
    let mut worst_fd: f64 = 0.0;
    let mut worst_affine: f64 = 0.0;
    let mut points = 0;
    let mut seed = 0u64;
    while points < 100 {
        seed += 1;
        let config = ExperimentConfig {
            seed,
            n_players: 3 + (seed % 4) as usize,
            m: 1 + (seed % 3) as usize,
            n_i: 1 + (seed % 3) as usize,
            ..Default::default()
        };
        let instance = gne_cli::generate_cournot(&config).unwrap();
        let gne_core::io::LoadedGame::Cournot(game) = &instance.game else {
            panic!("generator must produce market games");
        };
        let affine = affine_from_cournot(game).unwrap();
        let n = game.dims().total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
        for _ in 0..5 {
            points += 1;
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..2.0));
            for i in 0..game.dims().n_players() {
                let analytic = game.partial_gradient(i, &x).unwrap();
                let fd = central_difference(game, i, &x);
                let rel = (&analytic - &fd).amax() / (1.0 + analytic.amax());
                assert!(rel <= 1e-6, "finite differences disagree: {rel:e}");
                worst_fd = worst_fd.max(rel);
            }
            let direct = game.pseudo_gradient(&x).unwrap();
            let expanded = affine.pseudo_gradient(&x).unwrap();
            let diff = (&direct - &expanded).amax();
            assert!(diff <= 1e-10, "affine expansion disagrees: {diff:e}");
            worst_affine = worst_affine.max(diff);
        }
    }
    println!(
        "acceptance criterion 6 (market gradients): PASS — worst FD rel err {worst_fd:.2e}, worst affine path diff {worst_affine:.2e} over {points} points"
    );
}

fn central_difference(
    game: &gne_core::game::CournotGame,
    i: usize,
    x: &DVector<f64>,
) -> DVector<f64> {
    let h = 1e-6;
    let r = game.dims().block_range(i);
    let mut g = DVector::zeros(r.len());
    for k in 0..r.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[r.start + k] += h;
        minus[r.start + k] -= h;
        g[k] = (game.cost(i, &plus).unwrap() - game.cost(i, &minus).unwrap()) / (2.0 * h);
    }
    g
}

#[test]
fn criterion_7_market_reproduction() {
    // Desk scale: ten firms, five markets, beta = gamma = 0.1, alpha from
    // its bound.
    let desk_dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::default();
    assert_eq!(config.n_players, 10);
    assert_eq!((config.m, config.n_i), (5, 5));
    assert!(matches!(
        config.stepsizes,
        StepsizeSpec::AlphaBound { beta, gamma, .. } if beta == 0.1 && gamma == 0.1
    ));
    let output = gne_cli::run_experiment(&config, desk_dir.path()).unwrap();
    let fit = output.report.rate_fit.as_ref().expect("rate fit present");
    assert!(fit.rate < 1.0, "fitted rate {}", fit.rate);
    assert!(fit.r_squared >= 0.99, "r^2 = {}", fit.r_squared);

    // Full scale: fifty firms, 5000 iterations, under a minute, with a
    // monotone distance tail.
    let full_dir = tempfile::tempdir().unwrap();
    let full = ExperimentConfig::default().full_scale();
    assert_eq!(full.n_players, 50);
    assert_eq!(full.max_iters, 5_000);
    let started = Instant::now();
    let output_full = gne_cli::run_experiment(&full, full_dir.path()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "full run took {elapsed:.1} s");
    assert_eq!(output_full.report.run.iterations, 5_000);
    let csv = std::fs::read_to_string(&output_full.csv_path).unwrap();
    let distances: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|line| line.split(',').nth(1))
        .filter(|cell| !cell.is_empty())
        .map(|cell| cell.parse::<f64>().unwrap())
        .collect();
    assert!(distances.len() > 1000);
    let tail = &distances[distances.len() * 4 / 5..];
    for pair in tail.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-12),
            "distance tail not monotone: {} -> {}",
            pair[0],
            pair[1]
        );
    }
    println!(
        "acceptance criterion 7 (market reproduction): PASS — desk rate {:.6} (r^2 {:.4}), full run {elapsed:.1} s with monotone tail",
        fit.rate, fit.r_squared
    );
}

#[test]
fn criterion_8_fixed_point_stationarity() {
    let two_player = fixtures::two_player_scalar();
    let two_player_inactive = fixtures::two_player_scalar_inactive();
    let (ring, ring_topo) = fixtures::ring5_quadratic();
    let cases: Vec<(&str, &fixtures::AnalyticFixture, Topology)> = vec![
        ("active", &two_player, fixtures::two_player_topology()),
        ("inactive", &two_player_inactive, fixtures::two_player_topology()),
        ("ring5", &ring, ring_topo),
    ];
    let mut worst: f64 = 0.0;
    for (name, fixture, topo) in cases {
        let beta = 0.1;
        let fp = solver::fixed_point_from_solution(
            &fixture.x_star,
            &fixture.lambda_star,
            &fixture.game,
            &topo,
            beta,
        )
        .unwrap();
        let state = fp.lifted_state(fixture.game.dims());
        let cfg = SolverConfig::new(0.01, beta, 0.2);
        let dec = solver::synchronous_round(&state, &fixture.game, &topo, &cfg).unwrap();
        let semi = solver::semi_centralized_round(&state, &fixture.game, &topo, &cfg).unwrap();
        for (form, next) in [("decentralized", &dec), ("semi", &semi)] {
            let mut movement: f64 = 0.0;
            for i in 0..state.players.len() {
                movement = movement
                    .max((&next.players[i].est - &state.players[i].est).amax())
                    .max((&next.players[i].v - &state.players[i].v).amax())
                    .max((&next.players[i].lambda - &state.players[i].lambda).amax());
            }
            movement = movement.max((&next.aux.y - &state.aux.y).amax());
            assert!(
                movement <= 1e-10,
                "{name}/{form}: fixed point moved by {movement:e}"
            );
            worst = worst.max(movement);
        }
    }
    println!(
        "acceptance criterion 8 (fixed-point stationarity): PASS — max movement {worst:.2e} across fixtures and forms"
    );
}
