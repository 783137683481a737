//! Summaries that are pure functions of a series table and the config, so
//! `report` can recompute them bit for bit.

use serde::{Deserialize, Serialize};

use congestion_core::constitutive::MediumParams;
use congestion_core::estimator::{
    bound_checks, Accumulated, BoundReport, EstimateSeries, InitialNorms, PotentialShape,
};
use congestion_core::experiments::envelope_spread;
use congestion_core::potential::{assemble_budget, PotentialBudget, MIN_TIME_SAMPLES};

use crate::config::RunConfig;
use crate::CliError;

/// Exponents at or above this enter the uniformity envelopes.
pub const ENVELOPE_MIN_GAMMA: f64 = 40.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub gamma: f64,
    pub nu: f64,
    pub samples: usize,
    pub accumulated: Accumulated,
    pub p_sup_max: f64,
    pub n_sup_max: f64,
    pub overshoot_max: f64,
    pub final_complementarity: f64,
    pub series_mass_drift: f64,
    pub budget: PotentialBudget,
    pub bounds: BoundReport,
}

impl RunSummary {
    pub fn from_series(cfg: &RunConfig, gamma: f64, series: &EstimateSeries) -> Result<Self, CliError> {
        let runtime = |e: String| CliError::Runtime(e);
        let params = MediumParams::new(gamma, cfg.medium.nu).map_err(|e| runtime(e.to_string()))?;
        let grid = cfg.grid().map_err(|e| runtime(e.to_string()))?;
        let time_samples = (cfg.time.samples + 1).max(MIN_TIME_SAMPLES);
        let budget = assemble_budget(&cfg.potential(), &grid, cfg.time.horizon, time_samples, cfg.medium.nu)
            .map_err(|e| runtime(e.to_string()))?;
        let initial = InitialNorms::from_series(series).map_err(|e| runtime(e.to_string()))?;
        let bounds = bound_checks(series, &budget, &params, &initial, PotentialShape::of(&cfg.potential()));
        let (m0, m1) = match (series.rows.first(), series.rows.last()) {
            (Some(a), Some(b)) => (a.mass, b.mass),
            _ => (0.0, 0.0),
        };
        Ok(Self {
            config_hash: cfg.hash(),
            gamma,
            nu: cfg.medium.nu,
            samples: series.len(),
            accumulated: series.accumulate(),
            p_sup_max: series.max_of(|r| r.p_sup),
            n_sup_max: series.max_of(|r| r.n_sup),
            overshoot_max: series.max_of(|r| r.overshoot),
            final_complementarity: series.rows.last().map(|r| r.complementarity).unwrap_or(0.0),
            series_mass_drift: if m0 > 0.0 { (m1 - m0).abs() / m0 } else { (m1 - m0).abs() },
            budget,
            bounds,
        })
    }
}

/// Relative spreads `(max - min) / min` of the accumulated quantities over
/// the exponents `>= ENVELOPE_MIN_GAMMA`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub gammas: Vec<f64>,
    pub grad_p_l4: f64,
    pub p_hess_p: f64,
    pub lap_sigma_l2: f64,
    pub grad_sigma_l4: f64,
}

impl Envelopes {
    pub fn of(runs: &[RunSummary]) -> Self {
        let tail: Vec<&RunSummary> = runs.iter().filter(|r| r.gamma >= ENVELOPE_MIN_GAMMA).collect();
        let spread = |f: fn(&Accumulated) -> f64| envelope_spread(&tail.iter().map(|r| f(&r.accumulated)).collect::<Vec<_>>());
        Self {
            gammas: tail.iter().map(|r| r.gamma).collect(),
            grad_p_l4: spread(|a| a.grad_p_l4),
            p_hess_p: spread(|a| a.p_hess_p),
            lap_sigma_l2: spread(|a| a.lap_sigma_l2),
            grad_sigma_l4: spread(|a| a.grad_sigma_l4),
        }
    }

    pub fn max(&self) -> f64 {
        [self.grad_p_l4, self.p_hess_p, self.lap_sigma_l2, self.grad_sigma_l4].into_iter().fold(0.0, f64::max)
    }
}
