use crate::bucket_engine::{BucketGrid, BucketSimulation, Deterministic, Kernel};
use crate::error::Result;
use crate::lleap_engine::{run_coupled_pair_with, CoupledPair, LeapKernel, RngStream, StreamId};
use crate::model::{InventoryPolicy, OrderStream, SimConfig, SupplyChainNetwork};

use super::params::{sample_parameters, ParameterDistribution};
use super::qoi::{QoiSpec, QoiTracker};

/// Source of QoI samples on a dyadic ladder of bucket sizes. Samples are
/// pure functions of `(level, index, replica)`.
pub trait LevelSampler: Sync {
    /// `(q_l, q_{l-1})` on one parameter draw with coupled noise; the coarse
    /// value is 0 at level 0.
    fn level_sample(&self, level: u32, index: u64, replica: u32) -> Result<(f64, f64)>;

    /// `q_l` alone.
    fn single_sample(&self, level: u32, index: u64, replica: u32) -> Result<f64>;

    /// Work units of one level-difference sample.
    fn work(&self, level: u32) -> f64;

    /// Work units of one single-level sample.
    fn single_work(&self, level: u32) -> f64;

    /// Bucket size of `level`.
    fn dt(&self, level: u32) -> f64;
}

/// Runs a scenario with optionally sampled parameters and optionally
/// stochastic buckets.
#[derive(Clone, Debug)]
pub struct ScenarioSampler {
    pub network: SupplyChainNetwork,
    pub config: SimConfig,
    pub policy: Option<InventoryPolicy>,
    pub orders: Option<OrderStream>,
    pub qoi: QoiSpec,
    pub distribution: Option<ParameterDistribution>,
    pub dt0: f64,
    pub seed: u64,
}

impl ScenarioSampler {
    fn parameters(&self, level: u32, index: u64, replica: u32) -> SupplyChainNetwork {
        let mut net = self.network.clone();
        if let Some(dist) = &self.distribution {
            let mut rng = RngStream::new(self.seed, StreamId::new(level, index, 2 * replica));
            let theta = sample_parameters(dist, &mut rng);
            dist.apply(&theta, &mut net, self.config.stochastic);
        }
        net
    }

    fn noise(&self, level: u32, index: u64, replica: u32) -> StreamId {
        StreamId::new(level, index, 2 * replica + 1)
    }

    fn run_config(&self) -> SimConfig {
        SimConfig { dt: self.dt0.min(self.config.horizon), ..self.config.clone() }
    }

    fn run_single<K: Kernel>(&self, net: &SupplyChainNetwork, grid: &BucketGrid, kernel: &mut K) -> Result<f64> {
        let cfg = self.run_config();
        let mut sim = BucketSimulation::new(net, &cfg, self.policy.as_ref(), self.orders.as_ref())?;
        let mut tracker = QoiTracker::new(self.qoi);
        tracker.observe(sim.state());
        sim.run_grid(grid, kernel, |s, _| tracker.observe(s));
        Ok(tracker.finish())
    }

    fn grid(&self, level: u32) -> BucketGrid {
        BucketGrid::dyadic(self.config.horizon, self.dt0, level)
    }

    fn buckets(&self, level: u32) -> f64 {
        (self.grid(0).len() as f64) * f64::from(1u32 << level)
    }
}

impl LevelSampler for ScenarioSampler {
    fn level_sample(&self, level: u32, index: u64, replica: u32) -> Result<(f64, f64)> {
        if level == 0 {
            return Ok((self.single_sample(0, index, replica)?, 0.0));
        }
        let net = self.parameters(level, index, replica);
        if !self.config.stochastic {
            let fine = self.run_single(&net, &self.grid(level), &mut Deterministic)?;
            let coarse = self.run_single(&net, &self.grid(level - 1), &mut Deterministic)?;
            return Ok((fine, coarse));
        }
        let pair =
            CoupledPair::for_level(self.config.horizon, self.dt0, level, self.seed, self.noise(level, index, replica));
        let initial = crate::model::SystemState::initial(&net, self.config.sentinel());
        let mut fine = QoiTracker::new(self.qoi);
        let mut coarse = QoiTracker::new(self.qoi);
        fine.observe(&initial);
        coarse.observe(&initial);
        run_coupled_pair_with(
            &net,
            &self.run_config(),
            &pair,
            self.policy.as_ref(),
            self.orders.as_ref(),
            |s| fine.observe(s),
            |s| coarse.observe(s),
        )?;
        Ok((fine.finish(), coarse.finish()))
    }

    fn single_sample(&self, level: u32, index: u64, replica: u32) -> Result<f64> {
        let net = self.parameters(level, index, replica);
        let grid = self.grid(level);
        if self.config.stochastic {
            let mut kernel = LeapKernel::new(RngStream::new(self.seed, self.noise(level, index, replica)));
            self.run_single(&net, &grid, &mut kernel)
        } else {
            self.run_single(&net, &grid, &mut Deterministic)
        }
    }

    fn work(&self, level: u32) -> f64 {
        let fine = self.single_work(level);
        if level == 0 {
            fine
        } else {
            fine + self.single_work(level - 1)
        }
    }

    fn single_work(&self, level: u32) -> f64 {
        self.buckets(level) * self.network.process_count() as f64
    }

    fn dt(&self, level: u32) -> f64 {
        self.dt0 / f64::from(1u32 << level)
    }
}
