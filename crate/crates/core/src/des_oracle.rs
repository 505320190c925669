//! Event-resolving reference runs.
//!
//! A deterministic bucket run whose buckets are short enough that no
//! process fires more than a fraction of an event per bucket reproduces a
//! discrete-event simulation. [`run_oracle`] starts there and keeps halving
//! the bucket until the quantity of interest settles.

use std::io::Write;

use crate::bucket_engine::{run_pull, run_push, Trajectory};
use crate::error::{Error, Result};
use crate::model::{InventoryPolicy, Mode, OrderStream, SimConfig, SupplyChainNetwork};
use crate::uq::{evaluate_qoi, QoiKind, QoiSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    /// Events per bucket at the start is at most `1 / refinement`.
    pub refinement: u32,
    /// Largest accepted change of the QoI between successive halvings.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { refinement: 4, tolerance: 0.5, max_halvings: 12 }
    }
}

impl OracleConfig {
    /// Defaults with the tolerance matched to the QoI: half a part for
    /// counts, a quarter day for times.
    pub fn for_qoi(qoi: &QoiSpec) -> Self {
        let tolerance = match qoi.kind {
            QoiKind::DeliveriesBy { .. } => 0.5,
            QoiKind::DeliveryTime { .. } => 0.25,
        };
        Self { tolerance, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.refinement < 2 {
            return Err(Error::Validation(format!("oracle refinement {} must be at least 2", self.refinement)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation("oracle tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Starting bucket: the shortest mean inter-event time over the
    /// refinement factor, capped at the horizon.
    pub fn initial_dt(&self, net: &SupplyChainNetwork, horizon: f64) -> f64 {
        let fastest = net.processes().iter().map(|p| p.capacity).fold(0.0, f64::max);
        let dt = if fastest > 0.0 { 1.0 / fastest / f64::from(self.refinement) } else { horizon };
        dt.min(horizon)
    }
}

/// One rung of the refinement ladder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rung {
    pub dt: f64,
    pub qoi: f64,
    /// Change from the previous rung; NaN on the first.
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub trajectory: Trajectory,
    pub qoi: f64,
    /// First-order extrapolation `2 q(dt) - q(2 dt)` from the last two rungs.
    pub richardson: f64,
    pub ladder: Vec<Rung>,
}

impl OracleResult {
    pub fn dt(&self) -> f64 {
        self.ladder.last().map_or(f64::NAN, |r| r.dt)
    }

    /// `dt,qoi,delta` CSV of the ladder.
    pub fn write_ladder_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dt,qoi,delta")?;
        for r in &self.ladder {
            if r.delta.is_nan() {
                writeln!(out, "{},{},", r.dt, r.qoi)?;
            } else {
                writeln!(out, "{},{},{}", r.dt, r.qoi, r.delta)?;
            }
        }
        Ok(())
    }
}

fn deterministic_run(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    policy: Option<&InventoryPolicy>,
    orders: Option<&OrderStream>,
) -> Result<Trajectory> {
    match config.mode {
        Mode::Push => run_push(net, config, policy),
        Mode::Pull => run_pull(net, config, policy, orders.unwrap_or(&OrderStream::default())),
    }
}

/// Refines the bucket until the QoI changes by less than the tolerance.
pub fn run_oracle(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    policy: Option<&InventoryPolicy>,
    orders: Option<&OrderStream>,
    qoi: &QoiSpec,
    oracle: &OracleConfig,
) -> Result<OracleResult> {
    oracle.validate()?;
    if config.stochastic {
        return Err(Error::Validation("the oracle runs deterministic configurations only".into()));
    }
    let mut cfg = SimConfig { dt: oracle.initial_dt(net, config.horizon), ..config.clone() };
    let mut trajectory = deterministic_run(net, &cfg, policy, orders)?;
    let mut q = evaluate_qoi(&trajectory, qoi);
    let mut ladder = vec![Rung { dt: cfg.dt, qoi: q, delta: f64::NAN }];
    let mut last_change = f64::INFINITY;
    for _ in 0..oracle.max_halvings {
        cfg.dt /= 2.0;
        let finer = deterministic_run(net, &cfg, policy, orders)?;
        let qf = evaluate_qoi(&finer, qoi);
        last_change = (qf - q).abs();
        ladder.push(Rung { dt: cfg.dt, qoi: qf, delta: qf - q });
        let richardson = 2.0 * qf - q;
        trajectory = finer;
        q = qf;
        if last_change < oracle.tolerance {
            return Ok(OracleResult { trajectory, qoi: q, richardson, ladder });
        }
    }
    Err(Error::NoConvergence { halvings: oracle.max_halvings, last_change })
}
