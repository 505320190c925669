use std::io::Write;

use super::mlmc::{LevelEstimate, McResult, MlmcResult};

/// `level,dt,n,mean,variance,mean_fine,variance_fine,cost,seconds`; the
/// `seconds` column is the only non-reproducible one.
pub fn write_levels_csv<W: Write>(mut out: W, levels: &[LevelEstimate], with_timing: bool) -> std::io::Result<()> {
    writeln!(out, "level,dt,n,mean,variance,mean_fine,variance_fine,cost,seconds")?;
    for e in levels {
        let secs = if with_timing { format!("{}", e.seconds) } else { String::new() };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.level, e.dt, e.n, e.mean, e.variance, e.mean_fine, e.variance_fine, e.cost, secs
        )?;
    }
    Ok(())
}

/// Flat `key = value` record of a multilevel run.
pub fn write_mlmc_report<W: Write>(mut out: W, r: &MlmcResult, with_timing: bool) -> std::io::Result<()> {
    let t = &r.tolerances;
    writeln!(out, "method = mlmc")?;
    writeln!(out, "estimate = {}", r.estimate)?;
    writeln!(out, "tol = {}", t.tol)?;
    writeln!(out, "split = {}", t.split)?;
    writeln!(out, "alpha_conf = {}", t.confidence)?;
    writeln!(out, "eps_b = {}", t.eps_b())?;
    writeln!(out, "eps_s = {}", t.eps_s())?;
    writeln!(out, "eps_bar_s = {}", t.eps_bar_s())?;
    writeln!(out, "L = {}", r.max_level)?;
    writeln!(out, "a = {}", r.rates.a)?;
    writeln!(out, "b = {}", r.rates.b)?;
    writeln!(out, "g = {}", r.rates.g)?;
    writeln!(out, "bias_constant = {}", r.rates.bias_constant())?;
    writeln!(out, "estimator_variance = {}", r.estimator_variance)?;
    writeln!(out, "iterations = {}", r.iterations)?;
    let join = |v: Vec<String>| v.join(",");
    writeln!(out, "N = {}", join(r.levels.iter().map(|e| e.n.to_string()).collect()))?;
    writeln!(out, "N_planned = {}", join(r.planned.iter().map(u64::to_string).collect()))?;
    writeln!(out, "V = {}", join(r.levels.iter().map(|e| e.variance.to_string()).collect()))?;
    writeln!(out, "C = {}", join(r.levels.iter().map(|e| e.cost.to_string()).collect()))?;
    writeln!(out, "total_cost_work = {}", r.cost)?;
    writeln!(out, "mc_cost_projection = {}", r.mc_cost_projection)?;
    if with_timing {
        writeln!(out, "g_wall = {}", r.rates.g_wall)?;
        writeln!(out, "total_cost_seconds = {}", r.seconds)?;
    }
    Ok(())
}

/// Flat `key = value` record of a plain Monte Carlo run.
pub fn write_mc_report<W: Write>(
    mut out: W,
    r: &McResult,
    t: &super::Tolerances,
    with_timing: bool,
) -> std::io::Result<()> {
    writeln!(out, "method = mc")?;
    writeln!(out, "estimate = {}", r.estimate)?;
    writeln!(out, "tol = {}", t.tol)?;
    writeln!(out, "alpha_conf = {}", t.confidence)?;
    writeln!(out, "eps_s = {}", t.eps_s())?;
    writeln!(out, "level = {}", r.level)?;
    writeln!(out, "dt = {}", r.dt)?;
    writeln!(out, "pilot_variance = {}", r.pilot_variance)?;
    writeln!(out, "N_required = {}", r.n_required)?;
    writeln!(out, "N = {}", r.n_used)?;
    writeln!(out, "variance = {}", r.variance)?;
    writeln!(out, "total_cost_work = {}", r.cost)?;
    if with_timing {
        writeln!(out, "total_cost_seconds = {}", r.seconds)?;
    }
    Ok(())
}
