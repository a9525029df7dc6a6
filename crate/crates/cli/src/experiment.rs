//! Experiment orchestration: stepsize resolution, the end-to-end solve
//! pipeline (oracle, fixed point, solver run, CSV and report), the stepsize
//! certification report and the two-form comparison.

use crate::config::{ExperimentConfig, StepsizeSpec};
use crate::generate::{generate_cournot, GeneratedInstance};
use gne_core::io::{save_trajectory_csv, trajectory_to_csv};
use gne_core::oracle::{self, ViProblem};
use gne_core::solver::{self, FixedPoint, SolverConfig, SolverError};
use gne_core::stepsize::{
    alpha_bound, beta_gamma_bounds, contraction_factor, rho_m_alpha, StepsizeError,
    TheoryConstants,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Stepsizes after resolving the configured mode against the instance
/// constants, with the certification verdict attached.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedStepsizes {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mode: String,
    pub certified: bool,
    /// Contraction factor; meaningful as a certificate only when certified.
    pub contraction_a: f64,
    pub degenerate_sigma: bool,
}

pub fn resolve_stepsizes(
    spec: &StepsizeSpec,
    constants: &TheoryConstants,
) -> anyhow::Result<ResolvedStepsizes> {
    let (alpha, beta, gamma, mode) = match spec {
        StepsizeSpec::Explicit { alpha, beta, gamma } => {
            (*alpha, *beta, *gamma, "explicit".to_string())
        }
        StepsizeSpec::Certified { safety } => {
            let alpha = safety * alpha_bound(constants).alpha_max;
            let bounds = beta_gamma_bounds(constants, alpha, 0.0).map_err(|e| {
                anyhow::anyhow!("cannot derive certified stepsizes: {e}")
            })?;
            let beta = safety * bounds.beta_max;
            let bounds = beta_gamma_bounds(constants, alpha, beta)
                .expect("sigma already checked nonzero");
            let gamma = safety * bounds.gamma_max;
            (alpha, beta, gamma, "certified".to_string())
        }
        StepsizeSpec::AlphaBound { beta, gamma, safety } => {
            let alpha = safety * alpha_bound(constants).alpha_max;
            (alpha, *beta, *gamma, "alpha_bound".to_string())
        }
    };
    anyhow::ensure!(
        alpha > 0.0 && alpha.is_finite(),
        "resolved alpha = {alpha} is unusable"
    );
    let factor = contraction_factor(constants, alpha, beta, gamma);
    let degenerate_sigma = constants.sigma == 0.0;
    Ok(ResolvedStepsizes {
        alpha,
        beta,
        gamma,
        mode,
        certified: factor.certified,
        contraction_a: factor.a,
        degenerate_sigma,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub mu: f64,
    pub l: f64,
    pub sigma: f64,
    pub n_players: usize,
    pub lam_max_pi_t_pi: f64,
    pub lam_min_pi_pi_t: f64,
    pub lam_max_b: f64,
    pub min_nonzero_sv_b: f64,
}

impl From<&TheoryConstants> for ConstantsReport {
    fn from(c: &TheoryConstants) -> Self {
        Self {
            mu: c.mu,
            l: c.l,
            sigma: c.sigma,
            n_players: c.n_players,
            lam_max_pi_t_pi: c.lam_max_pi_t_pi,
            lam_min_pi_pi_t: c.lam_min_pi_pi_t,
            lam_max_b: c.lam_max_b,
            min_nonzero_sv_b: c.min_nonzero_sv_b,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub lambda_star: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub iterations: usize,
    pub stopped_early: bool,
    pub final_dist_to_star: Option<f64>,
    pub final_consensus_error: f64,
    pub final_dual_spread: f64,
    pub final_constraint_violation: f64,
    pub final_kkt_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rate: f64,
    pub r_squared: f64,
    pub window: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub constants: ConstantsReport,
    pub stepsizes: ResolvedStepsizes,
    pub oracle: OracleReport,
    pub run: RunReport,
    pub rate_fit: Option<RateReport>,
    pub wall_time_secs: f64,
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub csv_path: PathBuf,
    pub report_path: PathBuf,
}

/// Computes the centralized reference solution for an instance.
pub fn oracle_solution(
    instance: &GeneratedInstance,
    config: &ExperimentConfig,
) -> anyhow::Result<(nalgebra::DVector<f64>, nalgebra::DVector<f64>, usize)> {
    let problem = ViProblem::from_affine(&instance.affine)?;
    let solution = oracle::solve_vi(&problem, config.oracle_tol, config.oracle_max_iters)?;
    let lambda = oracle::recover_multiplier(&problem, &solution.x_star)?;
    Ok((solution.x_star, lambda, solution.iterations))
}

/// End-to-end experiment: generate, solve centrally, build the fixed point,
/// run the decentralized solver, write the trajectory CSV and a JSON report.
/// A partial CSV is flushed when the run diverges.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> anyhow::Result<ExperimentOutput> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let instance = generate_cournot(config)?;
    let stepsizes = resolve_stepsizes(&config.stepsizes, &instance.constants)?;
    let (x_star, lambda_star, oracle_iterations) = oracle_solution(&instance, config)?;
    let problem = ViProblem::from_affine(&instance.affine)?;
    let oracle_kkt = oracle::kkt_residual(&problem, &x_star, &lambda_star)?.residual;
    let fixed_point = solver::fixed_point_from_solution(
        &x_star,
        &lambda_star,
        instance.game.as_game(),
        &instance.topology,
        stepsizes.beta,
    )?;

    let csv_path = out_dir.join("trajectory.csv");
    let result = run_solver(config, &instance, &stepsizes, Some(&fixed_point), &csv_path)?;

    save_trajectory_csv(&result.trajectory, &csv_path)?;
    let distances = result.trajectory.distances();
    let rate_fit = gne_core::fit_rate(&distances, config.tail_fraction)
        .ok()
        .map(|fit| RateReport {
            rate: fit.rate,
            r_squared: fit.r_squared,
            window: fit.window,
        });
    let last = result
        .trajectory
        .final_record()
        .expect("run always records");
    let report = ExperimentReport {
        config_hash: config.config_hash(),
        seed: config.seed,
        constants: (&instance.constants).into(),
        stepsizes,
        oracle: OracleReport {
            iterations: oracle_iterations,
            kkt_residual: oracle_kkt,
            lambda_star: lambda_star.iter().copied().collect(),
        },
        run: RunReport {
            iterations: result.iterations,
            stopped_early: result.stopped_early,
            final_dist_to_star: last.dist_to_star,
            final_consensus_error: last.consensus_error,
            final_dual_spread: last.dual_spread,
            final_constraint_violation: last.constraint_violation,
            final_kkt_residual: last.kkt_residual,
        },
        rate_fit,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    Ok(ExperimentOutput {
        report,
        csv_path,
        report_path,
    })
}

fn run_solver(
    config: &ExperimentConfig,
    instance: &GeneratedInstance,
    stepsizes: &ResolvedStepsizes,
    reference: Option<&FixedPoint>,
    csv_path: &Path,
) -> anyhow::Result<solver::RunResult> {
    let solver_config = solver_config(config, stepsizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match solver::run(
        instance.game.as_game(),
        &instance.topology,
        &solver_config,
        reference,
        &mut rng,
    ) {
        Ok(result) => Ok(result),
        Err(SolverError::NonFinite { iter, partial }) => {
            // Flush what was recorded so divergences can be inspected.
            let _ = std::fs::write(csv_path, trajectory_to_csv(&partial));
            anyhow::bail!(
                "solver state became non-finite at iteration {iter}; partial trajectory written to {}",
                csv_path.display()
            );
        }
        Err(other) => Err(other.into()),
    }
}

pub fn solver_config(config: &ExperimentConfig, stepsizes: &ResolvedStepsizes) -> SolverConfig {
    let mut solver_config = SolverConfig::new(stepsizes.alpha, stepsizes.beta, stepsizes.gamma);
    solver_config.max_iters = config.max_iters;
    solver_config.stop_tol = config.stop_tol.unwrap_or(f64::INFINITY);
    solver_config.record_every = config.record_every;
    solver_config.init_mode = config.init_mode;
    solver_config.form = config.form;
    solver_config
}

/// Stepsize certification report. Infinite candidate terms (the first alpha
/// term at sigma = 0) serialize as null; a degenerate consensus gap is
/// surfaced instead of failing.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub config_hash: String,
    pub constants: ConstantsReport,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_terms: [Option<f64>; 3],
    pub alpha_max: f64,
    pub beta_terms: Option<[f64; 3]>,
    pub gamma_terms: Option<[Option<f64>; 2]>,
    pub rho_m_alpha: f64,
    pub a: f64,
    pub certified: bool,
    pub degenerate_sigma: bool,
}

pub fn certify(config: &ExperimentConfig) -> anyhow::Result<CertifyReport> {
    let instance = generate_cournot(config)?;
    let constants = &instance.constants;
    let stepsizes = resolve_stepsizes(&config.stepsizes, constants)?;
    let bound = alpha_bound(constants);
    let (beta_terms, gamma_terms, degenerate_sigma) =
        match beta_gamma_bounds(constants, stepsizes.alpha, stepsizes.beta) {
            Ok(bounds) => (
                Some(bounds.beta_terms),
                Some([finite_or_none(bounds.gamma_terms[0]), finite_or_none(bounds.gamma_terms[1])]),
                false,
            ),
            Err(StepsizeError::DegenerateSigma) => (None, None, true),
        };
    let factor = contraction_factor(constants, stepsizes.alpha, stepsizes.beta, stepsizes.gamma);
    Ok(CertifyReport {
        config_hash: config.config_hash(),
        constants: constants.into(),
        alpha: stepsizes.alpha,
        beta: stepsizes.beta,
        gamma: stepsizes.gamma,
        alpha_terms: [
            finite_or_none(bound.terms[0]),
            finite_or_none(bound.terms[1]),
            finite_or_none(bound.terms[2]),
        ],
        alpha_max: bound.alpha_max,
        beta_terms,
        gamma_terms,
        rho_m_alpha: rho_m_alpha(constants, stepsizes.alpha),
        a: factor.a,
        certified: factor.certified,
        degenerate_sigma,
    })
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareFormsReport {
    pub config_hash: String,
    pub rounds: usize,
    pub max_rel_x_deviation: f64,
    pub max_rel_lambda_deviation: f64,
}

/// Runs both iteration forms from the same feasible-consistent start and
/// reports the worst relative trajectory deviation.
pub fn compare_forms(config: &ExperimentConfig, rounds: usize) -> anyhow::Result<CompareFormsReport> {
    let instance = generate_cournot(config)?;
    let stepsizes = resolve_stepsizes(&config.stepsizes, &instance.constants)?;
    let mut solver_cfg = solver_config(config, &stepsizes);
    solver_cfg.init_mode = gne_core::solver::InitMode::FeasibleConsistent;
    let game = instance.game.as_game();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = solver::initialize(game, &instance.topology, &solver_cfg, &mut rng)?;
    let mut dec = start.clone();
    let mut semi = start;
    let mut max_x = 0.0f64;
    let mut max_lambda = 0.0f64;
    for _ in 0..rounds {
        dec = solver::synchronous_round(&dec, game, &instance.topology, &solver_cfg)?;
        semi = solver::semi_centralized_round(&semi, game, &instance.topology, &solver_cfg)?;
        for (dp, sp) in dec.players.iter().zip(&semi.players) {
            let x_scale = 1.0 + sp.est.amax();
            max_x = max_x.max((&dp.est - &sp.est).amax() / x_scale);
            let l_scale = 1.0 + sp.lambda.amax();
            max_lambda = max_lambda.max((&dp.lambda - &sp.lambda).amax() / l_scale);
        }
    }
    Ok(CompareFormsReport {
        config_hash: config.config_hash(),
        rounds,
        max_rel_x_deviation: max_x,
        max_rel_lambda_deviation: max_lambda,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesReport {
    pub csv: PathBuf,
    pub column: String,
    pub rate: f64,
    pub r_squared: f64,
    pub window: f64,
}

/// Fits a geometric rate to a column of a trajectory CSV.
pub fn fit_rates_from_csv(
    csv_path: &Path,
    column: &str,
    tail_fraction: f64,
) -> anyhow::Result<RatesReport> {
    let series = crate::plot::read_series(std::slice::from_ref(&csv_path.to_path_buf()), std::slice::from_ref(&column.to_string()))?;
    let data: Vec<(usize, f64)> = series[0]
        .points
        .iter()
        .map(|&(k, v)| (k as usize, v))
        .collect();
    let fit = gne_core::fit_rate(&data, tail_fraction)?;
    Ok(RatesReport {
        csv: csv_path.to_path_buf(),
        column: column.to_string(),
        rate: fit.rate,
        r_squared: fit.r_squared,
        window: fit.window,
    })
}
