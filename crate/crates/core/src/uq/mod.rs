//! Uncertainty propagation.
//!
//! A [`LevelSampler`] produces one scalar quantity of interest per run, or a
//! `(fine, coarse)` pair for a level difference. [`mc_estimate`] averages
//! single runs at one bucket size, [`mlmc_estimate`] spreads the work over a
//! dyadic ladder of bucket sizes and sums the level differences.

mod mlmc;
mod params;
mod qoi;
mod report;
mod sampler;
pub mod stats;

pub use mlmc::{
    bias_level, estimate_rates, mc_estimate, mlmc_estimate, optimal_samples, optimal_samples_real, run_level, screen,
    select_max_level, CostModel, LevelEstimate, McConfig, McResult, MlmcConfig, MlmcResult, RateEstimates,
};
pub use params::{sample_parameters, ParamTarget, ParameterDistribution, UniformParam};
pub use qoi::{evaluate_qoi, Measure, QoiKind, QoiSpec, QoiTracker};
pub use report::{write_levels_csv, write_mc_report, write_mlmc_report};
pub use sampler::{LevelSampler, ScenarioSampler};

use crate::error::{Error, Result};

/// Total tolerance and how it is split between bias and statistical error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub tol: f64,
    /// Fraction of `tol²` given to the bias.
    pub split: f64,
    /// Confidence level of the statistical error bound.
    pub confidence: f64,
}

impl Tolerances {
    pub fn new(tol: f64, split: f64, confidence: f64) -> Result<Self> {
        let t = Self { tol, split, confidence };
        t.validate()?;
        Ok(t)
    }

    /// Even split at 95% confidence.
    pub fn even(tol: f64) -> Self {
        Self { tol, split: 0.5, confidence: 0.95 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::Validation(format!("tolerance {} must be positive", self.tol)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Validation(format!("bias split {} must lie in (0, 1)", self.split)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Validation(format!("confidence {} must lie in (0, 1)", self.confidence)));
        }
        Ok(())
    }

    /// `Φ⁻¹((1 + confidence) / 2)`.
    pub fn z(&self) -> f64 {
        stats::normal_quantile((1.0 + self.confidence) / 2.0)
    }

    pub fn eps_b(&self) -> f64 {
        (self.split * self.tol * self.tol).sqrt()
    }

    /// Bound on the statistical error at the requested confidence.
    pub fn eps_s(&self) -> f64 {
        ((1.0 - self.split) * self.tol * self.tol).sqrt()
    }

    /// Bound on the estimator's standard deviation, `eps_s / z`.
    pub fn eps_bar_s(&self) -> f64 {
        self.eps_s() / self.z()
    }
}
