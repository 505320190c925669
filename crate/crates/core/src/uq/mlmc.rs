use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::sampler::LevelSampler;
use super::stats::{linear_fit, mean_var, median_of_means};
use super::Tolerances;

const REPLICA_SCREENING: u32 = 0;
const REPLICA_MLMC: u32 = 1;
const REPLICA_MC: u32 = 2;

/// Statistics of the level differences `q_l - q_{l-1}` at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelEstimate {
    pub level: u32,
    pub dt: f64,
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    /// Mean of the fine values `q_l`.
    pub mean_fine: f64,
    /// Variance of the fine values `q_l`.
    pub variance_fine: f64,
    /// Work units per sample.
    pub cost: f64,
    /// Wall-clock seconds per sample (median of means).
    pub seconds: f64,
    diffs: Vec<f64>,
    fines: Vec<f64>,
    times: Vec<f64>,
}

impl LevelEstimate {
    fn from_samples(level: u32, dt: f64, cost: f64, samples: Vec<(f64, f64, f64)>) -> Self {
        let mut est = Self {
            level,
            dt,
            n: 0,
            mean: 0.0,
            variance: 0.0,
            mean_fine: 0.0,
            variance_fine: 0.0,
            cost,
            seconds: 0.0,
            diffs: Vec::new(),
            fines: Vec::new(),
            times: Vec::new(),
        };
        est.extend(samples);
        est
    }

    fn extend(&mut self, samples: Vec<(f64, f64, f64)>) {
        for (f, c, s) in samples {
            self.diffs.push(f - c);
            self.fines.push(f);
            self.times.push(s);
        }
        self.n = self.diffs.len() as u64;
        (self.mean, self.variance) = mean_var(&self.diffs);
        (self.mean_fine, self.variance_fine) = mean_var(&self.fines);
        self.seconds = median_of_means(&self.times, 5);
    }

    /// Total wall-clock seconds spent on this level.
    pub fn total_seconds(&self) -> f64 {
        self.times.iter().sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.cost * self.n as f64
    }

    /// The individual differences, in sample order.
    pub fn differences(&self) -> &[f64] {
        &self.diffs
    }
}

fn timed_samples<S: LevelSampler + ?Sized>(
    sampler: &S,
    level: u32,
    replica: u32,
    range: std::ops::Range<u64>,
    single: bool,
) -> Result<Vec<(f64, f64, f64)>> {
    range
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let (f, c) = if single {
                (sampler.single_sample(level, i, replica)?, 0.0)
            } else {
                sampler.level_sample(level, i, replica)?
            };
            Ok((f, c, start.elapsed().as_secs_f64()))
        })
        .collect()
}

/// Runs `n` level-difference samples at `level` with indices `0..n`.
pub fn run_level<S: LevelSampler + ?Sized>(sampler: &S, level: u32, n: u64, replica: u32) -> Result<LevelEstimate> {
    let samples = timed_samples(sampler, level, replica, 0..n, false)?;
    Ok(LevelEstimate::from_samples(level, sampler.dt(level), sampler.work(level), samples))
}

/// How the per-sample cost entering the allocation is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CostModel {
    /// Buckets times processes; reproducible.
    #[default]
    WorkUnits,
    /// Measured wall-clock seconds.
    WallClock,
}

/// Fitted `|E[q_l - q_{l-1}]| ≈ 2^{ca - a l}`, `V_l ≈ 2^{cb - b l}`, `C_l ≈ 2^{cg + g l}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimates {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub ca: f64,
    pub cb: f64,
    pub cg: f64,
    /// Cost rate of the measured wall-clock time, whatever the cost model.
    pub g_wall: f64,
    pub residuals_a: Vec<f64>,
    pub residuals_b: Vec<f64>,
    pub residuals_g: Vec<f64>,
}

impl RateEstimates {
    /// `K_a` with `Σ_{l > L} |E[q_l - q_{l-1}]| ≤ K_a 2^{-a L}`.
    pub fn bias_constant(&self) -> f64 {
        2f64.powf(self.ca) / (2f64.powf(self.a) - 1.0)
    }

    pub fn variance_at(&self, level: u32) -> f64 {
        2f64.powf(self.cb - self.b * f64::from(level))
    }

    pub fn cost_at(&self, level: u32) -> f64 {
        2f64.powf(self.cg + self.g * f64::from(level))
    }
}

fn fit_log2(
    levels: &[LevelEstimate],
    what: &str,
    value: impl Fn(&LevelEstimate) -> f64,
) -> Result<(f64, f64, Vec<f64>)> {
    let points: Vec<(f64, f64)> = levels.iter().map(|e| (f64::from(e.level), value(e).abs())).collect();
    let zeros = points.iter().filter(|p| !(p.1 > 0.0)).count();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.1 > 0.0).map(|&(l, v)| (l, v.log2())).unzip();
    let degenerate = |reason: String| Error::DegenerateFit { reason, residuals: ys.clone() };
    if zeros >= 2 {
        return Err(degenerate(format!("{what} is zero at {zeros} levels")));
    }
    let fit = linear_fit(&xs, &ys).ok_or_else(|| degenerate(format!("{what} has fewer than two usable levels")))?;
    Ok((fit.slope, fit.intercept, fit.residuals))
}

/// Least-squares rates over the levels `l >= 1` of the screening data.
pub fn estimate_rates(screening: &[LevelEstimate], cost: CostModel) -> Result<RateEstimates> {
    let diffs: Vec<LevelEstimate> = screening.iter().filter(|e| e.level >= 1).cloned().collect();
    if diffs.len() < 2 {
        return Err(Error::DegenerateFit { reason: "need at least three screening levels".into(), residuals: vec![] });
    }
    let (sa, ca, residuals_a) = fit_log2(&diffs, "mean difference", |e| e.mean)?;
    let (sb, cb, residuals_b) = fit_log2(&diffs, "difference variance", |e| e.variance)?;
    let (g_wall, cg_wall, residuals_wall) = fit_log2(&diffs, "wall-clock cost", |e| e.seconds)?;
    let (g, cg, residuals_g) = match cost {
        CostModel::WorkUnits => fit_log2(&diffs, "work", |e| e.cost)?,
        CostModel::WallClock => (g_wall, cg_wall, residuals_wall),
    };
    let a = -sa;
    if !(a > 0.0) {
        return Err(Error::DegenerateFit {
            reason: format!("mean differences do not decay (a = {a:.3})"),
            residuals: residuals_a,
        });
    }
    Ok(RateEstimates { a, b: -sb, g, ca, cb, cg, g_wall, residuals_a, residuals_b, residuals_g })
}

/// Smallest `L` with `K_a 2^{-a L} <= eps_b`.
pub fn select_max_level(a: f64, bias_constant: f64, eps_b: f64) -> u32 {
    assert!(a > 0.0, "weak rate must be positive");
    if eps_b >= bias_constant {
        return 0;
    }
    let l = ((bias_constant / eps_b).log2() / a).ceil();
    l.clamp(0.0, 64.0) as u32
}

/// Unrounded optimal allocation `N_l = sqrt(V_l / C_l) Σ sqrt(C_k V_k) / ε̄²`.
pub fn optimal_samples_real(variances: &[f64], costs: &[f64], eps_bar_sq: f64) -> Vec<f64> {
    let total: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum();
    variances.iter().zip(costs).map(|(v, c)| (v / c).sqrt() * total / eps_bar_sq).collect()
}

/// Optimal allocation rounded up, at least 2 per level.
pub fn optimal_samples(variances: &[f64], costs: &[f64], eps_bar_sq: f64) -> Vec<u64> {
    optimal_samples_real(variances, costs, eps_bar_sq)
        .into_iter()
        // Shave rounding noise so exact integers are not bumped up.
        .map(|n| ((n * (1.0 - 1e-12)).ceil() as u64).max(2))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmcConfig {
    /// Levels `0..screening_levels` are screened.
    pub screening_levels: u32,
    pub screening_samples: u64,
    pub cost_model: CostModel,
    pub max_iterations: usize,
    pub max_level: u32,
    /// Largest allowed `N_l`.
    pub sample_cap: Option<u64>,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        Self {
            screening_levels: 4,
            screening_samples: 200,
            cost_model: CostModel::WorkUnits,
            max_iterations: 5,
            max_level: 16,
            sample_cap: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlmcResult {
    pub estimate: f64,
    pub tolerances: Tolerances,
    pub max_level: u32,
    pub levels: Vec<LevelEstimate>,
    pub screening: Vec<LevelEstimate>,
    pub rates: RateEstimates,
    /// `N_l` planned from the screening data.
    pub planned: Vec<u64>,
    /// Realized `Σ V_l / N_l`.
    pub estimator_variance: f64,
    /// Top-up rounds after the main run.
    pub iterations: usize,
    /// Work units including screening.
    pub cost: f64,
    /// Wall-clock seconds summed over samples, including screening.
    pub seconds: f64,
    /// Work units plain Monte Carlo would need at level `max_level`.
    pub mc_cost_projection: f64,
}

impl MlmcResult {
    pub fn sample_counts(&self) -> Vec<u64> {
        self.levels.iter().map(|e| e.n).collect()
    }
}

fn planning_cost<S: LevelSampler + ?Sized>(
    sampler: &S,
    model: CostModel,
    rates: &RateEstimates,
    screening: &[LevelEstimate],
    level: u32,
) -> f64 {
    match model {
        CostModel::WorkUnits => sampler.work(level),
        CostModel::WallClock => match screening.get(level as usize) {
            Some(e) if e.seconds > 0.0 => e.seconds,
            _ => rates.cost_at(level),
        },
    }
}

fn check_cap(counts: &[u64], cap: Option<u64>) -> Result<()> {
    if let Some(cap) = cap {
        if let Some((level, &n)) = counts.iter().enumerate().find(|(_, &n)| n > cap) {
            return Err(Error::BudgetExceeded { level, requested: n, cap });
        }
    }
    Ok(())
}

/// Screening runs on levels `0..screening_levels` and the rates fitted to them.
pub fn screen<S: LevelSampler + ?Sized>(
    sampler: &S,
    config: &MlmcConfig,
) -> Result<(Vec<LevelEstimate>, RateEstimates)> {
    if config.screening_levels < 3 {
        return Err(Error::Validation("screening needs at least three levels".into()));
    }
    let screening = (0..config.screening_levels)
        .map(|l| run_level(sampler, l, config.screening_samples, REPLICA_SCREENING))
        .collect::<Result<Vec<_>>>()?;
    let rates = estimate_rates(&screening, config.cost_model)?;
    Ok((screening, rates))
}

/// Finest level needed for the bias budget of `tolerances`.
pub fn bias_level(rates: &RateEstimates, tolerances: &Tolerances, config: &MlmcConfig) -> u32 {
    select_max_level(rates.a, rates.bias_constant(), tolerances.eps_b()).min(config.max_level)
}

/// Screening, rate fit, level selection, allocation and continuation top-ups.
pub fn mlmc_estimate<S: LevelSampler + ?Sized>(
    sampler: &S,
    tolerances: &Tolerances,
    config: &MlmcConfig,
) -> Result<MlmcResult> {
    tolerances.validate()?;
    let (screening, rates) = screen(sampler, config)?;
    let max_level = bias_level(&rates, tolerances, config);
    let eps_sq = tolerances.eps_bar_s().powi(2);

    let costs: Vec<f64> =
        (0..=max_level).map(|l| planning_cost(sampler, config.cost_model, &rates, &screening, l)).collect();
    let mut variances: Vec<f64> = (0..=max_level)
        .map(|l| match screening.get(l as usize) {
            Some(e) => e.variance,
            None => rates.variance_at(l),
        })
        .collect();
    let planned = optimal_samples(&variances, &costs, eps_sq);
    check_cap(&planned, config.sample_cap)?;

    let mut levels = planned
        .iter()
        .enumerate()
        .map(|(l, &n)| run_level(sampler, l as u32, n, REPLICA_MLMC))
        .collect::<Result<Vec<_>>>()?;

    let mut iterations = 0;
    loop {
        let estimator_variance: f64 = levels.iter().map(|e| e.variance / e.n as f64).sum();
        if estimator_variance <= eps_sq || iterations >= config.max_iterations {
            break;
        }
        iterations += 1;
        for (v, e) in variances.iter_mut().zip(&levels) {
            *v = e.variance;
        }
        let target = optimal_samples(&variances, &costs, eps_sq);
        check_cap(&target, config.sample_cap)?;
        for (e, &n) in levels.iter_mut().zip(&target) {
            if n > e.n {
                let more = timed_samples(sampler, e.level, REPLICA_MLMC, e.n..n, false)?;
                e.extend(more);
            }
        }
    }

    let estimate = levels.iter().map(|e| e.mean).sum();
    let estimator_variance = levels.iter().map(|e| e.variance / e.n as f64).sum();
    let cost = screening.iter().chain(&levels).map(LevelEstimate::total_cost).sum();
    let seconds = screening.iter().chain(&levels).map(LevelEstimate::total_seconds).sum();
    let var_q = levels[0].variance_fine;
    let mc_cost_projection = sampler.single_work(max_level) * var_q * (tolerances.z() / tolerances.eps_s()).powi(2);
    Ok(MlmcResult {
        estimate,
        tolerances: *tolerances,
        max_level,
        levels,
        screening,
        rates,
        planned,
        estimator_variance,
        iterations,
        cost,
        seconds,
        mc_cost_projection,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub pilot: u64,
    pub sample_cap: Option<u64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { pilot: 100, sample_cap: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McResult {
    pub estimate: f64,
    pub level: u32,
    pub dt: f64,
    /// Samples in the estimate, pilot included.
    pub n_used: u64,
    /// `V z² / ε_s²` from the pilot variance.
    pub n_required: u64,
    pub pilot_variance: f64,
    pub variance: f64,
    pub cost: f64,
    pub seconds: f64,
}

/// Required sample count `V Φ⁻²((1+α)/2) ε_s⁻²`, rounded up.
pub fn mc_sample_count(variance: f64, tolerances: &Tolerances) -> u64 {
    let n = variance * (tolerances.z() / tolerances.eps_s()).powi(2);
    (n * (1.0 - 1e-12)).ceil() as u64
}

/// Plain Monte Carlo at `level`: a pilot sizes the run, the pilot samples
/// are kept as the first draws.
pub fn mc_estimate<S: LevelSampler + ?Sized>(
    sampler: &S,
    level: u32,
    tolerances: &Tolerances,
    config: &McConfig,
) -> Result<McResult> {
    tolerances.validate()?;
    let pilot = config.pilot.max(2);
    let mut samples = timed_samples(sampler, level, REPLICA_MC, 0..pilot, true)?;
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let (_, pilot_variance) = mean_var(&values);
    let n_required = mc_sample_count(pilot_variance, tolerances);
    if let Some(cap) = config.sample_cap {
        if n_required > cap {
            return Err(Error::BudgetExceeded { level: level as usize, requested: n_required, cap });
        }
    }
    if n_required > pilot {
        samples.extend(timed_samples(sampler, level, REPLICA_MC, pilot..n_required, true)?);
    }
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let (estimate, variance) = mean_var(&values);
    let n_used = values.len() as u64;
    Ok(McResult {
        estimate,
        level,
        dt: sampler.dt(level),
        n_used,
        n_required,
        pilot_variance,
        variance,
        cost: sampler.single_work(level) * n_used as f64,
        seconds: samples.iter().map(|s| s.2).sum(),
    })
}
