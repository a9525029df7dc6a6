//! Experiment configuration: instance scale, parameter ranges, topology and
//! stepsize selection. Loaded from JSON; every field has a desk-scale
//! default so a config file only needs the overrides.

use gne_core::solver::{InitMode, SolverForm};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

fn default_safety() -> f64 {
    0.99
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Ring,
    RandomConnected { edge_prob: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepsizeSpec {
    /// Use the three values as given (certification is still reported).
    Explicit { alpha: f64, beta: f64, gamma: f64 },
    /// Derive all three from the bounds, scaled by the safety factor.
    Certified {
        #[serde(default = "default_safety")]
        safety: f64,
    },
    /// Fix beta and gamma, derive alpha from its bound scaled by safety.
    AlphaBound {
        beta: f64,
        gamma: f64,
        #[serde(default = "default_safety")]
        safety: f64,
    },
}

/// Everything a reproduction run needs. The defaults give the desk-scale
/// market benchmark: ten firms in five markets, parameters drawn uniformly
/// from the documented ranges, beta = gamma = 0.1 and alpha from its bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_players: usize,
    /// Number of markets (coupled constraint rows).
    pub m: usize,
    /// Per-firm decision dimension; the generated instances ship to every
    /// market through identity blocks, so this must equal `m`.
    pub n_i: usize,
    pub q_diag_range: [f64; 2],
    pub q_lin_range: [f64; 2],
    pub b_range: [f64; 2],
    pub price_intercept_range: [f64; 2],
    pub price_slope_range: [f64; 2],
    pub topology: TopologySpec,
    pub stepsizes: StepsizeSpec,
    pub max_iters: usize,
    /// Early-stop threshold; absent means run the full budget.
    pub stop_tol: Option<f64>,
    pub record_every: usize,
    pub init_mode: InitMode,
    pub form: SolverForm,
    /// Tail fraction used by the rate fit.
    pub tail_fraction: f64,
    pub oracle_tol: f64,
    pub oracle_max_iters: usize,
    /// Solve a stored game instead of generating one.
    pub game_file: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_players: 10,
            m: 5,
            n_i: 5,
            q_diag_range: [1.0, 8.0],
            q_lin_range: [1.0, 2.0],
            b_range: [10.0, 20.0],
            price_intercept_range: [1.0, 3.0],
            price_slope_range: [5.0, 10.0],
            topology: TopologySpec::RandomConnected { edge_prob: 0.5 },
            stepsizes: StepsizeSpec::AlphaBound {
                beta: 0.1,
                gamma: 0.1,
                safety: 0.99,
            },
            max_iters: 60_000,
            stop_tol: None,
            record_every: 10,
            init_mode: InitMode::Zeros,
            form: SolverForm::Decentralized,
            tail_fraction: 0.5,
            oracle_tol: 1e-12,
            oracle_max_iters: 500_000,
            game_file: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.n_players >= 2, "need at least two players");
        anyhow::ensure!(self.m >= 1, "need at least one market");
        if self.game_file.is_none() {
            anyhow::ensure!(
                self.n_i == self.m,
                "generated market instances use identity shipping blocks, so n_i must equal m"
            );
            for (name, range) in [
                ("q_diag_range", self.q_diag_range),
                ("q_lin_range", self.q_lin_range),
                ("b_range", self.b_range),
                ("price_intercept_range", self.price_intercept_range),
                ("price_slope_range", self.price_slope_range),
            ] {
                anyhow::ensure!(
                    range[0] > 0.0 && range[1] >= range[0],
                    "{name} must be a nonempty interval with a positive lower bound"
                );
            }
        }
        if let TopologySpec::RandomConnected { edge_prob } = self.topology {
            anyhow::ensure!(
                (0.0..=1.0).contains(&edge_prob),
                "edge probability must lie in [0, 1]"
            );
        }
        anyhow::ensure!(self.max_iters >= 1, "max_iters must be at least 1");
        anyhow::ensure!(self.record_every >= 1, "record_every must be at least 1");
        anyhow::ensure!(
            self.tail_fraction > 0.0 && self.tail_fraction <= 1.0,
            "tail_fraction must lie in (0, 1]"
        );
        if let Some(tol) = self.stop_tol {
            anyhow::ensure!(tol > 0.0, "stop_tol must be positive when present");
        }
        Ok(())
    }

    /// Full-scale reproduction: fifty firms, five markets, 5000 iterations,
    /// beta = gamma = 0.1 with alpha from its bound.
    pub fn full_scale(mut self) -> Self {
        self.n_players = 50;
        self.m = 5;
        self.n_i = 5;
        self.max_iters = 5_000;
        self.record_every = 1;
        self.stop_tol = None;
        self.topology = TopologySpec::RandomConnected { edge_prob: 0.2 };
        self.stepsizes = StepsizeSpec::AlphaBound {
            beta: 0.1,
            gamma: 0.1,
            safety: 0.99,
        };
        self
    }

    /// Stable hash of the canonical JSON form, embedded in every report.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// Parses the `--stepsizes` flag: either `certified` or `alpha,beta,gamma`.
pub fn parse_stepsizes_flag(flag: &str) -> anyhow::Result<StepsizeSpec> {
    if flag.trim().eq_ignore_ascii_case("certified") {
        return Ok(StepsizeSpec::Certified {
            safety: default_safety(),
        });
    }
    let parts: Vec<&str> = flag.split(',').map(str::trim).collect();
    anyhow::ensure!(
        parts.len() == 3,
        "expected `certified` or three comma-separated values, got `{flag}`"
    );
    let vals: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("bad stepsize in `{flag}`: {e}"))?;
    anyhow::ensure!(
        vals.iter().all(|&v| v > 0.0),
        "stepsizes must be positive"
    );
    Ok(StepsizeSpec::Explicit {
        alpha: vals[0],
        beta: vals[1],
        gamma: vals[2],
    })
}
