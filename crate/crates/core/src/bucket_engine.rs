//! Deterministic time-bucket simulation.
//!
//! Every bucket `[t, t + dt)` is processed as: inventory refills, order
//! intake and demand projection (pull only), instantaneous consumption at
//! the bucket start, then delayed production spread uniformly over each
//! batch's completion window. The per-event arithmetic is delegated to a
//! [`Kernel`], so the stochastic L-leap engine and the coupled level pairs
//! share this control flow.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{
    DelayQueue, InventoryPolicy, Mode, OrderPriority, OrderStream, PartId, QueueEntry, RatePolicy, SimConfig,
    SupplyChainNetwork, SystemState,
};
use crate::TIME_EPS;

/// Bucket boundaries from 0 to the horizon; the last bucket may be shorter.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketGrid {
    boundaries: Vec<f64>,
}

impl BucketGrid {
    /// Buckets of `dt`, the final one shortened so the grid ends exactly at `horizon`.
    pub fn uniform(horizon: f64, dt: f64) -> Self {
        assert!(dt > 0.0 && horizon > 0.0, "grid needs dt > 0 and horizon > 0");
        let mut boundaries = vec![0.0];
        let mut k = 1u64;
        loop {
            let t = k as f64 * dt;
            if t >= horizon - TIME_EPS {
                break;
            }
            boundaries.push(t);
            k += 1;
        }
        boundaries.push(horizon);
        Self { boundaries }
    }

    /// Level `level` of a multilevel ladder: every bucket of the
    /// `uniform(horizon, dt0)` grid split into `2^level` equal parts, so
    /// halving level `l - 1` reproduces level `l` exactly.
    pub fn dyadic(horizon: f64, dt0: f64, level: u32) -> Self {
        let base = Self::uniform(horizon, dt0);
        let parts = 1u64 << level;
        let mut boundaries = Vec::with_capacity(base.len() * parts as usize + 1);
        boundaries.push(0.0);
        for (a, b) in base.buckets() {
            for j in 1..=parts {
                boundaries.push(if j == parts { b } else { a + (b - a) * j as f64 / parts as f64 });
            }
        }
        Self { boundaries }
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> f64 {
        *self.boundaries.last().unwrap_or(&0.0)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn buckets(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Event arithmetic used by the bucket loop.
pub trait Kernel {
    /// Events of `process` in a bucket of length `dt` at `rate`, never above `cap`.
    fn consumption(&mut self, process: usize, rate: f64, dt: f64, cap: f64) -> f64;

    /// Completed events of a due batch; `fraction` of its remaining quantity
    /// is expected to complete by `end`.
    fn production(&mut self, entry: &QueueEntry, fraction: f64, end: f64) -> f64;

    /// Called once per new batch before it is queued.
    fn on_enqueue(&mut self, _entry: &mut QueueEntry) {}
}

/// Fluid kernel: `ΔC = λ dt`, `ΔP = Q · fraction`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Deterministic;

impl Kernel for Deterministic {
    fn consumption(&mut self, _process: usize, rate: f64, dt: f64, cap: f64) -> f64 {
        (rate * dt).min(cap)
    }

    fn production(&mut self, entry: &QueueEntry, fraction: f64, _end: f64) -> f64 {
        if fraction >= 1.0 {
            entry.quantity
        } else {
            entry.quantity * fraction
        }
    }
}

#[inline]
fn floor_count(v: f64) -> f64 {
    // Part counts accumulate rounding noise in fluid mode.
    (v + TIME_EPS).floor().max(0.0)
}

/// Capacity if every input covers a full bucket at capacity, otherwise the
/// largest rate whose bucket consumption keeps every input non-negative.
pub fn compute_rate(net: &SupplyChainNetwork, x: &[f64], process: usize, dt: f64) -> f64 {
    let p = net.process(process);
    let lam = p.capacity;
    let abundant = p.consumed.iter().all(|&(j, a)| x[j.0] - f64::from(a) * lam * dt >= -TIME_EPS);
    if abundant {
        lam
    } else {
        p.consumed.iter().map(|&(j, a)| floor_count(x[j.0] / f64::from(a)) / dt).fold(f64::INFINITY, f64::min).min(lam)
    }
}

/// Like [`compute_rate`], but a part consumed by several processes is split
/// evenly between all of them.
pub fn compute_rate_shared(net: &SupplyChainNetwork, x: &[f64], process: usize, dt: f64) -> f64 {
    let p = net.process(process);
    let lam = p.capacity;
    let abundant = p.consumed.iter().all(|&(j, _)| {
        let demand: f64 = net.consumers_of(j).iter().map(|&(i, a)| f64::from(a) * net.process(i).capacity * dt).sum();
        x[j.0] - demand >= -TIME_EPS
    });
    if abundant {
        lam
    } else {
        p.consumed
            .iter()
            .map(|&(j, a)| {
                let competitors = net.consumers_of(j).len() as f64;
                floor_count(x[j.0] / (competitors * f64::from(a))) / dt
            })
            .fold(f64::INFINITY, f64::min)
            .min(lam)
    }
}

/// Consumes for one process at `rate` over `dt` starting at `state.t` and
/// queues the batch. Returns the number of events. Zero-event buckets queue nothing.
pub fn consume<K: Kernel + ?Sized>(
    net: &SupplyChainNetwork,
    state: &mut SystemState,
    queue: &mut DelayQueue,
    process: usize,
    rate: f64,
    dt: f64,
    kernel: &mut K,
) -> f64 {
    let spec = net.process(process);
    let cap = spec.consumed.iter().map(|&(j, a)| state.x[j.0] / f64::from(a)).fold(f64::INFINITY, f64::min).max(0.0);
    let events = kernel.consumption(process, rate, dt, cap);
    if events <= 0.0 {
        return 0.0;
    }
    for &(j, a) in &spec.consumed {
        let w = f64::from(a);
        let x = &mut state.x[j.0];
        *x -= w * events;
        if *x < 0.0 {
            debug_assert!(*x > -1e-6, "consumption overdrew part {} by {}", j.0, -*x);
            *x = 0.0;
        }
        state.consumed[j.0] += w * events;
    }
    let mut entry = QueueEntry::new(process, events, state.t + spec.lead_min, dt + spec.lead_spread());
    kernel.on_enqueue(&mut entry);
    queue.push(entry);
    events
}

/// Completes the due part of every queued batch over `[t, t + dt)` and
/// returns the completed events per process.
pub fn produce<K: Kernel + ?Sized>(
    net: &SupplyChainNetwork,
    state: &mut SystemState,
    queue: &mut DelayQueue,
    t: f64,
    dt: f64,
    kernel: &mut K,
) -> Vec<f64> {
    let mut totals = vec![0.0; net.process_count()];
    produce_into(net, state, queue, t, dt, kernel, &mut totals);
    totals
}

/// [`produce`] writing the per-process totals into `totals`.
pub fn produce_into<K: Kernel + ?Sized>(
    net: &SupplyChainNetwork,
    state: &mut SystemState,
    queue: &mut DelayQueue,
    t: f64,
    dt: f64,
    kernel: &mut K,
    totals: &mut [f64],
) {
    let end = t + dt;
    totals.iter_mut().for_each(|v| *v = 0.0);
    for lane in queue.lanes_mut() {
        for entry in lane.iter_mut() {
            if entry.start >= end - TIME_EPS {
                break;
            }
            if entry.span <= 0.0 || entry.quantity <= 0.0 {
                continue;
            }
            let elapsed = end - entry.start;
            let fraction = if elapsed >= entry.span - TIME_EPS { 1.0 } else { elapsed / entry.span };
            let done = kernel.production(entry, fraction, end).clamp(0.0, entry.quantity);
            let spec = net.process(entry.process);
            for &(k, b) in &spec.produced {
                state.x[k.0] += f64::from(b) * done;
            }
            totals[entry.process] += done;
            entry.quantity = if fraction >= 1.0 { 0.0 } else { entry.quantity - done };
            entry.span = if fraction >= 1.0 { 0.0 } else { (entry.span - elapsed).max(0.0) };
            entry.start = end;
        }
    }
    queue.compact();
}

/// Safety-stock refilling at a bucket boundary.
pub fn manage_inventory(state: &mut SystemState, policy: &InventoryPolicy, t: f64, sentinel: f64) {
    for rule in &policy.rules {
        let p = rule.part.0;
        let back_order = rule.back_order(state.x[p]);
        if t >= state.next_refill[p] - TIME_EPS {
            state.x[p] += back_order;
            state.next_refill[p] = sentinel;
        } else if state.next_refill[p] == sentinel && back_order > 0.0 {
            state.next_refill[p] = t + rule.delay;
        }
    }
}

/// Projected accumulated demand, evaluated downstream-first.
#[derive(Clone, Debug)]
pub struct DemandProjector {
    order: Vec<PartId>,
}

impl DemandProjector {
    pub fn new(net: &SupplyChainNetwork) -> Result<Self> {
        Ok(Self { order: net.downstream_first_order()? })
    }

    /// Direct orders plus the demand induced by every downstream part.
    pub fn project(&self, net: &SupplyChainNetwork, ordered: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; net.part_count()];
        for &p in &self.order {
            let derived: f64 = net
                .consumers_of(p)
                .iter()
                .map(|&(i, a)| {
                    let runs = net
                        .process(i)
                        .produced
                        .iter()
                        .map(|&(k, b)| (g[k.0] / f64::from(b)).ceil())
                        .fold(0.0, f64::max);
                    f64::from(a) * runs
                })
                .sum();
            g[p.0] = derived + ordered[p.0];
        }
        g
    }
}

/// Projected accumulated demand for every part.
pub fn project_demand(net: &SupplyChainNetwork, ordered: &[f64]) -> Result<Vec<f64>> {
    Ok(DemandProjector::new(net)?.project(net, ordered))
}

/// Which processes may consume in the current bucket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagVector(pub Vec<bool>);

impl FlagVector {
    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn is_set(&self, process: usize) -> bool {
        self.0[process]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|f| **f).count()
    }
}

/// Flags every consumer of a part whose accumulated consumption is still
/// below its projected demand net of direct orders.
pub fn compute_flags(net: &SupplyChainNetwork, g: &[f64], ordered: &[f64], consumed: &[f64]) -> FlagVector {
    let mut flags = vec![false; net.process_count()];
    for p in 0..net.part_count() {
        if consumed[p] < g[p] - ordered[p] - TIME_EPS {
            for &(i, _) in net.consumers_of(PartId(p)) {
                flags[i] = true;
            }
        }
    }
    FlagVector(flags)
}

/// Per-process events consumed and completed in the last bucket.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BucketFlows {
    pub consumed: Vec<f64>,
    pub produced: Vec<f64>,
}

/// A single run's mutable state plus its (borrowed) configuration.
#[derive(Clone, Debug)]
pub struct BucketSimulation<'a> {
    net: &'a SupplyChainNetwork,
    mode: Mode,
    rate_policy: RatePolicy,
    policy: Option<&'a InventoryPolicy>,
    orders: Option<&'a OrderStream>,
    projector: Option<DemandProjector>,
    sentinel: f64,
    state: SystemState,
    queue: DelayQueue,
    next_order: usize,
    flows: BucketFlows,
    done: Vec<bool>,
}

impl<'a> BucketSimulation<'a> {
    pub fn new(
        net: &'a SupplyChainNetwork,
        config: &SimConfig,
        policy: Option<&'a InventoryPolicy>,
        orders: Option<&'a OrderStream>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(p) = policy {
            p.validate(net)?;
        }
        let projector = match config.mode {
            Mode::Pull => Some(DemandProjector::new(net)?),
            Mode::Push => None,
        };
        let sentinel = config.sentinel();
        let n = net.process_count();
        Ok(Self {
            net,
            mode: config.mode,
            rate_policy: config.rate_policy,
            policy,
            orders,
            projector,
            sentinel,
            state: SystemState::initial(net, sentinel),
            queue: DelayQueue::new(n),
            next_order: 0,
            flows: BucketFlows { consumed: vec![0.0; n], produced: vec![0.0; n] },
            done: vec![false; n],
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn queue(&self) -> &DelayQueue {
        &self.queue
    }

    pub fn network(&self) -> &SupplyChainNetwork {
        self.net
    }

    /// Flows of the most recent bucket.
    pub fn flows(&self) -> &BucketFlows {
        &self.flows
    }

    /// Advances one bucket of length `dt`.
    pub fn step<K: Kernel + ?Sized>(&mut self, dt: f64, kernel: &mut K) {
        let t = self.state.t;
        self.flows.consumed.iter_mut().for_each(|v| *v = 0.0);
        if let Some(policy) = self.policy {
            manage_inventory(&mut self.state, policy, t, self.sentinel);
        }
        match self.mode {
            Mode::Push => {
                let mut done = std::mem::take(&mut self.done);
                done.iter_mut().for_each(|d| *d = false);
                self.consume_flagged(None, &mut done, dt, kernel);
                self.done = done;
            }
            Mode::Pull => {
                self.take_orders(t);
                self.pull_consumption(dt, kernel);
                self.deliver(|net, p| !net.is_final(p));
            }
        }
        produce_into(self.net, &mut self.state, &mut self.queue, t, dt, kernel, &mut self.flows.produced);
        if self.mode == Mode::Pull {
            self.deliver(|net, p| net.is_final(p));
        }
        self.state.t = t + dt;
    }

    fn take_orders(&mut self, t: f64) {
        let Some(orders) = self.orders else { return };
        while let Some(ev) = orders.events.get(self.next_order) {
            if ev.time > t + TIME_EPS {
                break;
            }
            self.state.ordered[ev.part.0] += ev.quantity as f64;
            self.next_order += 1;
        }
    }

    fn pull_consumption<K: Kernel + ?Sized>(&mut self, dt: f64, kernel: &mut K) {
        let Some(projector) = self.projector.take() else { return };
        let priority = self.orders.map(|o| o.priority).unwrap_or_default();
        let mut done = std::mem::take(&mut self.done);
        done.iter_mut().for_each(|d| *d = false);
        if priority == OrderPriority::FinalProductPriority {
            let final_only: Vec<f64> = (0..self.net.part_count())
                .map(|p| if self.net.is_final(PartId(p)) { self.state.ordered[p] } else { 0.0 })
                .collect();
            let g = projector.project(self.net, &final_only);
            let flags = compute_flags(self.net, &g, &final_only, &self.state.consumed);
            self.consume_flagged(Some(&flags), &mut done, dt, kernel);
        }
        let g = projector.project(self.net, &self.state.ordered);
        let flags = compute_flags(self.net, &g, &self.state.ordered, &self.state.consumed);
        self.consume_flagged(Some(&flags), &mut done, dt, kernel);
        self.projector = Some(projector);
        self.done = done;
    }

    /// Consumes for every flagged process not yet `done`; `None` flags all.
    fn consume_flagged<K: Kernel + ?Sized>(
        &mut self,
        flags: Option<&FlagVector>,
        done: &mut [bool],
        dt: f64,
        kernel: &mut K,
    ) {
        let n = self.net.process_count();
        let shared_rates: Option<Vec<f64>> = (self.rate_policy == RatePolicy::Shared)
            .then(|| (0..n).map(|i| compute_rate_shared(self.net, &self.state.x, i, dt)).collect());
        for i in 0..n {
            if flags.is_some_and(|f| !f.is_set(i)) || done[i] {
                continue;
            }
            done[i] = true;
            let rate = match &shared_rates {
                Some(r) => r[i],
                None => compute_rate(self.net, &self.state.x, i, dt),
            };
            let events = consume(self.net, &mut self.state, &mut self.queue, i, rate, dt, kernel);
            self.flows.consumed[i] += events;
        }
    }

    /// Ships stock against open orders.
    fn deliver(&mut self, which: impl Fn(&SupplyChainNetwork, PartId) -> bool) {
        for p in 0..self.net.part_count() {
            let outstanding = self.state.ordered[p] - self.state.delivered[p];
            if outstanding <= 0.0 || !which(self.net, PartId(p)) {
                continue;
            }
            let amount = outstanding.min(self.state.x[p]);
            if amount > 0.0 {
                self.state.x[p] -= amount;
                self.state.delivered[p] += amount;
            }
        }
    }

    /// Runs every bucket of `grid`, calling `observe` after each one.
    pub fn run_grid<K: Kernel + ?Sized>(
        &mut self,
        grid: &BucketGrid,
        kernel: &mut K,
        mut observe: impl FnMut(&SystemState, &BucketFlows),
    ) {
        for (a, b) in grid.buckets() {
            debug_assert!((self.state.t - a).abs() < 1e-6);
            self.state.t = a;
            self.step(b - a, kernel);
            self.state.t = b;
            observe(&self.state, &self.flows);
        }
    }
}

/// Snapshots of a run at every bucket boundary, starting with the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<SystemState>,
    /// Bucket lengths actually used.
    pub buckets: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.snapshots.iter().map(|s| s.t)
    }

    pub fn last(&self) -> &SystemState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }

    /// Count of part `p` at every snapshot.
    pub fn series(&self, p: PartId) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.x[p.0]).collect()
    }

    /// CSV with header `t,x_1,...,x_P`, one row per snapshot.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.snapshots.first().map_or(0, |s| s.x.len());
        let mut header = String::from("t");
        for k in 1..=n {
            header.push_str(&format!(",x_{k}"));
        }
        writeln!(out, "{header}")?;
        for s in &self.snapshots {
            let mut line = format!("{}", s.t);
            for v in &s.x {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Runs a simulation over `grid` with any kernel and records every snapshot.
pub fn simulate_with<K: Kernel + ?Sized>(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    policy: Option<&InventoryPolicy>,
    orders: Option<&OrderStream>,
    grid: &BucketGrid,
    kernel: &mut K,
) -> Result<Trajectory> {
    let mut sim = BucketSimulation::new(net, config, policy, orders)?;
    let mut snapshots = Vec::with_capacity(grid.len() + 1);
    snapshots.push(sim.state().clone());
    sim.run_grid(grid, kernel, |s, _| snapshots.push(s.clone()));
    let buckets = grid.buckets().map(|(a, b)| b - a).collect();
    Ok(Trajectory { snapshots, buckets })
}

/// Deterministic push run.
pub fn run_push(net: &SupplyChainNetwork, config: &SimConfig, policy: Option<&InventoryPolicy>) -> Result<Trajectory> {
    if config.mode != Mode::Push {
        return Err(Error::Validation("run_push needs a push-mode configuration".into()));
    }
    let grid = BucketGrid::uniform(config.horizon, config.dt);
    simulate_with(net, config, policy, None, &grid, &mut Deterministic)
}

/// Deterministic pull run.
pub fn run_pull(
    net: &SupplyChainNetwork,
    config: &SimConfig,
    policy: Option<&InventoryPolicy>,
    orders: &OrderStream,
) -> Result<Trajectory> {
    if config.mode != Mode::Pull {
        return Err(Error::Validation("run_pull needs a pull-mode configuration".into()));
    }
    let grid = BucketGrid::uniform(config.horizon, config.dt);
    simulate_with(net, config, policy, Some(orders), &grid, &mut Deterministic)
}
