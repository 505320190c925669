//! Stochastic time buckets (L-leap).
//!
//! Consumption in a bucket is a Poisson count with mean `λ dt`, clamped to
//! what the stock allows, and the due part of each queued batch completes as
//! a binomial draw. [`run_coupled_pair`] runs a fine and a coarse path whose
//! noise is shared so that their difference has small variance: consumption
//! through a Poisson process along the rate axis per half bucket, production
//! through common per-event completion quantiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::bucket_engine::{BucketGrid, BucketSimulation, Kernel, Trajectory};
use crate::error::{Error, Result};
use crate::model::{InventoryPolicy, OrderStream, QueueEntry, SimConfig, SupplyChainNetwork, SystemState};
use crate::TIME_EPS;

/// Identifies one stream of draws below a base seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub level: u32,
    pub sample: u64,
    pub replica: u32,
}

impl StreamId {
    pub fn new(level: u32, sample: u64, replica: u32) -> Self {
        Self { level, sample, replica }
    }
}

/// Reproducible random stream; the ChaCha key is `seed ‖ sample ‖ level ‖ replica`,
/// so distinct ids never share a sequence.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&id.sample.to_le_bytes());
        key[16..20].copy_from_slice(&id.level.to_le_bytes());
        key[20..24].copy_from_slice(&id.replica.to_le_bytes());
        Self { seed, id, rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, StreamId::default())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[lo, hi]`; `lo == hi` returns `lo` without a draw.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if !(mean > 0.0) {
            return 0;
        }
        let d = Poisson::new(mean).expect("finite positive Poisson mean");
        d.sample(&mut self.rng) as u64
    }

    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        if n == 0 || !(p > 0.0) {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        Binomial::new(n, p).expect("probability in (0, 1)").sample(&mut self.rng)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Events of a process at rate `rate` over `dt`: `Poi(rate · dt)`.
pub fn sample_consumption(rate: f64, dt: f64, rng: &mut RngStream) -> u64 {
    rng.poisson(rate * dt)
}

/// Completions of a batch of `quantity` events when `fraction` of it is due: `B(quantity, fraction)`.
pub fn sample_production(quantity: u64, fraction: f64, rng: &mut RngStream) -> u64 {
    rng.binomial(quantity, fraction.clamp(0.0, 1.0))
}

#[inline]
fn whole(v: f64) -> u64 {
    (v + TIME_EPS).floor().max(0.0) as u64
}

/// Independent Poisson / binomial draws for a single path.
#[derive(Clone, Debug)]
pub struct LeapKernel {
    pub rng: RngStream,
}

impl LeapKernel {
    pub fn new(rng: RngStream) -> Self {
        Self { rng }
    }
}

impl Kernel for LeapKernel {
    fn consumption(&mut self, _process: usize, rate: f64, dt: f64, cap: f64) -> f64 {
        sample_consumption(rate, dt, &mut self.rng).min(whole(cap)) as f64
    }

    fn production(&mut self, entry: &QueueEntry, fraction: f64, _end: f64) -> f64 {
        if fraction >= 1.0 {
            return entry.quantity;
        }
        sample_production(whole(entry.quantity), fraction, &mut self.rng) as f64
    }
}

/// Stochastic run on a uniform grid of `config.dt`, push or pull per `config.mode`.
pub fn run_lleap(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    policy: Option<&InventoryPolicy>,
    orders: Option<&OrderStream>,
    rng: RngStream,
) -> Result<Trajectory> {
    let grid = BucketGrid::uniform(config.horizon, config.dt);
    crate::bucket_engine::simulate_with(net, config, policy, orders, &grid, &mut LeapKernel::new(rng))
}

/// Fine and coarse grids of a level pair plus the stream both paths share.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPair {
    fine: BucketGrid,
    coarse: BucketGrid,
    pub seed: u64,
    pub stream: StreamId,
}

impl CoupledPair {
    /// Fails unless every coarse bucket is split into exactly two equal fine buckets.
    pub fn new(fine: BucketGrid, coarse: BucketGrid, seed: u64, stream: StreamId) -> Result<Self> {
        let mismatch = || {
            let first = |g: &BucketGrid| g.buckets().next().map_or(0.0, |(a, b)| b - a);
            Error::MismatchedRatio { fine: first(&fine), coarse: first(&coarse) }
        };
        if fine.len() != 2 * coarse.len() {
            return Err(mismatch());
        }
        let fb = fine.boundaries();
        for (k, (a, b)) in coarse.buckets().enumerate() {
            let (f0, f1, f2) = (fb[2 * k], fb[2 * k + 1], fb[2 * k + 2]);
            let tol = 1e-9 * (1.0 + b.abs());
            if (f0 - a).abs() > tol || (f2 - b).abs() > tol || ((f1 - f0) - (f2 - f1)).abs() > tol {
                return Err(mismatch());
            }
        }
        Ok(Self { fine, coarse, seed, stream })
    }

    /// Pair `(level, level - 1)` of the dyadic ladder rooted at `dt0`.
    pub fn for_level(horizon: f64, dt0: f64, level: u32, seed: u64, stream: StreamId) -> Self {
        assert!(level >= 1, "level 0 has no coarse partner");
        Self::new(BucketGrid::dyadic(horizon, dt0, level), BucketGrid::dyadic(horizon, dt0, level - 1), seed, stream)
            .expect("dyadic grids always pair")
    }

    pub fn fine(&self) -> &BucketGrid {
        &self.fine
    }

    pub fn coarse(&self) -> &BucketGrid {
        &self.coarse
    }
}

/// Poisson process on the rate axis with intensity `unit` per unit rate,
/// revealed lazily at the queried rates.
#[derive(Clone, Debug, Default)]
struct RateAxis {
    unit: f64,
    /// Revealed `(rate, count)` points, sorted by rate.
    points: Vec<(f64, u64)>,
}

impl RateAxis {
    fn reset(&mut self, unit: f64) {
        self.unit = unit;
        self.points.clear();
    }

    fn count(&mut self, rate: f64, rng: &mut RngStream) -> u64 {
        if !(rate > 0.0) {
            return 0;
        }
        let pos = self.points.partition_point(|&(r, _)| r < rate);
        if let Some(&(r, n)) = self.points.get(pos) {
            if r == rate {
                return n;
            }
        }
        let (r_lo, n_lo) = if pos == 0 { (0.0, 0) } else { self.points[pos - 1] };
        let n = match self.points.get(pos) {
            Some(&(r_hi, n_hi)) => n_lo + rng.binomial(n_hi - n_lo, (rate - r_lo) / (r_hi - r_lo)),
            None => n_lo + rng.poisson(self.unit * (rate - r_lo)),
        };
        self.points.insert(pos, (rate, n));
        n
    }
}

/// Noise shared by both paths inside one coarse bucket.
#[derive(Debug)]
struct BucketNoise {
    rng: RngStream,
    axes: Vec<[RateAxis; 2]>,
    uniforms: Vec<Vec<f64>>,
    fine_used: Vec<usize>,
}

impl BucketNoise {
    fn new(rng: RngStream, processes: usize) -> Self {
        Self {
            rng,
            axes: vec![Default::default(); processes],
            uniforms: vec![Vec::new(); processes],
            fine_used: vec![0; processes],
        }
    }

    fn reset(&mut self, halves: [f64; 2]) {
        for (ax, u) in self.axes.iter_mut().zip(&mut self.uniforms) {
            ax[0].reset(halves[0]);
            ax[1].reset(halves[1]);
            u.clear();
        }
        self.fine_used.iter_mut().for_each(|v| *v = 0);
    }

    fn units(&mut self, process: usize, from: usize, count: usize) -> Vec<f64> {
        let pool = &mut self.uniforms[process];
        while pool.len() < from + count {
            pool.push(self.rng.uniform());
        }
        let mut out = pool[from..from + count].to_vec();
        out.sort_unstable_by(f64::total_cmp);
        out
    }
}

fn quantile_production(entry: &QueueEntry, end: f64) -> f64 {
    let Some(units) = &entry.units else { return 0.0 };
    let (s0, w0) = entry.origin;
    let threshold = if w0 > 0.0 { (end - s0) / w0 } else { f64::INFINITY };
    let completed = units.partition_point(|&u| u <= threshold) as f64;
    (completed - (entry.initial_quantity - entry.quantity)).clamp(0.0, entry.quantity)
}

struct CoarseView<'a>(&'a mut BucketNoise);

impl Kernel for CoarseView<'_> {
    fn consumption(&mut self, process: usize, rate: f64, _dt: f64, cap: f64) -> f64 {
        let n = &mut *self.0;
        let [a0, a1] = &mut n.axes[process];
        let events = a0.count(rate, &mut n.rng) + a1.count(rate, &mut n.rng);
        events.min(whole(cap)) as f64
    }

    fn production(&mut self, entry: &QueueEntry, fraction: f64, end: f64) -> f64 {
        if fraction >= 1.0 {
            entry.quantity
        } else {
            quantile_production(entry, end)
        }
    }

    fn on_enqueue(&mut self, entry: &mut QueueEntry) {
        entry.units = Some(self.0.units(entry.process, 0, whole(entry.quantity) as usize));
    }
}

struct FineView<'a> {
    noise: &'a mut BucketNoise,
    half: usize,
}

impl Kernel for FineView<'_> {
    fn consumption(&mut self, process: usize, rate: f64, _dt: f64, cap: f64) -> f64 {
        let n = &mut *self.noise;
        let events = n.axes[process][self.half].count(rate, &mut n.rng);
        events.min(whole(cap)) as f64
    }

    fn production(&mut self, entry: &QueueEntry, fraction: f64, end: f64) -> f64 {
        if fraction >= 1.0 {
            entry.quantity
        } else {
            quantile_production(entry, end)
        }
    }

    fn on_enqueue(&mut self, entry: &mut QueueEntry) {
        let count = whole(entry.quantity) as usize;
        let from = if self.half == 0 { 0 } else { self.noise.fine_used[entry.process] };
        entry.units = Some(self.noise.units(entry.process, from, count));
        if self.half == 0 {
            self.noise.fine_used[entry.process] = count;
        }
    }
}

/// Runs both paths of `pair`, reporting every fine and every coarse snapshot
/// (after the initial state) to the observers.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_pair_with(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    pair: &CoupledPair,
    policy: Option<&InventoryPolicy>,
    orders: Option<&OrderStream>,
    mut on_fine: impl FnMut(&SystemState),
    mut on_coarse: impl FnMut(&SystemState),
) -> Result<()> {
    let mut fine = BucketSimulation::new(net, config, policy, orders)?;
    let mut coarse = BucketSimulation::new(net, config, policy, orders)?;
    let mut noise = BucketNoise::new(RngStream::new(pair.seed, pair.stream), net.process_count());
    let fb = pair.fine.boundaries();
    for (k, (a, b)) in pair.coarse.buckets().enumerate() {
        let (f0, f1, f2) = (fb[2 * k], fb[2 * k + 1], fb[2 * k + 2]);
        noise.reset([f1 - f0, f2 - f1]);
        coarse.step(b - a, &mut CoarseView(&mut noise));
        on_coarse(coarse.state());
        fine.step(f1 - f0, &mut FineView { noise: &mut noise, half: 0 });
        on_fine(fine.state());
        fine.step(f2 - f1, &mut FineView { noise: &mut noise, half: 1 });
        on_fine(fine.state());
    }
    Ok(())
}

/// Both trajectories of a coupled pair, fine first.
pub fn run_coupled_pair(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    pair: &CoupledPair,
    policy: Option<&InventoryPolicy>,
    orders: Option<&OrderStream>,
) -> Result<(Trajectory, Trajectory)> {
    let initial = SystemState::initial(net, config.sentinel());
    let mut fine = vec![initial.clone()];
    let mut coarse = vec![initial];
    run_coupled_pair_with(net, config, pair, policy, orders, |s| fine.push(s.clone()), |s| coarse.push(s.clone()))?;
    let lengths = |g: &BucketGrid| g.buckets().map(|(a, b)| b - a).collect();
    Ok((
        Trajectory { snapshots: fine, buckets: lengths(&pair.fine) },
        Trajectory { snapshots: coarse, buckets: lengths(&pair.coarse) },
    ))
}
