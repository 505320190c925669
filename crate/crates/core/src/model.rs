//! Static description of a supply chain and the mutable state a run owns.
//!
//! A network is a list of processes; each process consumes integer-weighted
//! amounts of some parts and, after a lead time, produces integer-weighted
//! amounts of others. Raw materials are parts that are consumed but never
//! produced, final products are produced but never consumed.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Index of a part in the network's state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartId(pub usize);

impl PartId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One process `Σ α_j p_j -> Σ β_k p_k` with a capacity and a lead-time window.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessSpec {
    /// Consumed parts with their per-event weight.
    pub consumed: Vec<(PartId, u32)>,
    /// Produced parts with their per-event weight.
    pub produced: Vec<(PartId, u32)>,
    /// Maximum rate, events per day.
    pub capacity: f64,
    /// Minimum lead time, days.
    pub lead_min: f64,
    /// Maximum lead time, days.
    pub lead_max: f64,
}

impl ProcessSpec {
    pub fn new(consumed: Vec<(PartId, u32)>, produced: Vec<(PartId, u32)>, capacity: f64, lead: f64) -> Self {
        Self { consumed, produced, capacity, lead_min: lead, lead_max: lead }
    }

    /// Lead-time spread `lead_max - lead_min`.
    pub fn lead_spread(&self) -> f64 {
        self.lead_max - self.lead_min
    }

    fn check(&self, index: usize, part_count: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidProcess { process: index + 1, reason });
        if self.consumed.is_empty() {
            return bad("consumes no parts".into());
        }
        if self.produced.is_empty() {
            return bad("produces no parts".into());
        }
        if !(self.capacity >= 0.0) || !self.capacity.is_finite() {
            return bad(format!("capacity {} must be a finite non-negative number", self.capacity));
        }
        if !(self.lead_min >= 0.0) || !(self.lead_max >= self.lead_min) || !self.lead_max.is_finite() {
            return bad(format!("lead times must satisfy 0 <= min ({}) <= max ({})", self.lead_min, self.lead_max));
        }
        for (side, list) in [("consumed", &self.consumed), ("produced", &self.produced)] {
            let mut seen = BTreeSet::new();
            for &(p, w) in list.iter() {
                if p.0 >= part_count {
                    return bad(format!("{side} part index {} out of range", p.0));
                }
                if w == 0 {
                    return bad(format!("{side} weight of part {} is zero", p.0));
                }
                if !seen.insert(p) {
                    return bad(format!("part {} appears twice in {side}", p.0));
                }
            }
        }
        Ok(())
    }
}

/// Parts, processes and initial stock.
#[derive(Clone, Debug, PartialEq)]
pub struct SupplyChainNetwork {
    part_names: Arc<[String]>,
    processes: Vec<ProcessSpec>,
    initial_stock: Vec<f64>,
    consumers: Arc<[Vec<(usize, u32)>]>,
    producers: Arc<[Vec<(usize, u32)>]>,
}

impl SupplyChainNetwork {
    /// Builds a network, checking every per-process invariant. An empty
    /// process list is accepted here and rejected by [`validate_network`].
    pub fn new(part_names: Vec<String>, processes: Vec<ProcessSpec>, initial_stock: Vec<f64>) -> Result<Self> {
        let n_parts = part_names.len();
        if initial_stock.len() != n_parts {
            return Err(Error::Validation(format!(
                "initial stock has {} entries for {} parts",
                initial_stock.len(),
                n_parts
            )));
        }
        if let Some(v) = initial_stock.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("initial stock {v} is negative or not finite")));
        }
        let mut names = BTreeSet::new();
        for name in &part_names {
            if !names.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate part name {name}")));
            }
        }
        for (i, p) in processes.iter().enumerate() {
            p.check(i, n_parts)?;
        }
        let mut consumers = vec![Vec::new(); n_parts];
        let mut producers = vec![Vec::new(); n_parts];
        for (i, p) in processes.iter().enumerate() {
            for &(part, w) in &p.consumed {
                consumers[part.0].push((i, w));
            }
            for &(part, w) in &p.produced {
                producers[part.0].push((i, w));
            }
        }
        Ok(Self {
            part_names: part_names.into(),
            processes,
            initial_stock,
            consumers: consumers.into(),
            producers: producers.into(),
        })
    }

    pub fn part_count(&self) -> usize {
        self.part_names.len()
    }

    pub fn process_count(&self) -> usize {
        self.processes.len()
    }

    pub fn processes(&self) -> &[ProcessSpec] {
        &self.processes
    }

    pub fn process(&self, i: usize) -> &ProcessSpec {
        &self.processes[i]
    }

    pub fn part_names(&self) -> &[String] {
        &self.part_names
    }

    pub fn part_name(&self, p: PartId) -> &str {
        &self.part_names[p.0]
    }

    pub fn part_by_name(&self, name: &str) -> Option<PartId> {
        self.part_names.iter().position(|n| n == name).map(PartId)
    }

    pub fn initial_stock(&self) -> &[f64] {
        &self.initial_stock
    }

    /// Processes consuming part `p`, with their weights.
    pub fn consumers_of(&self, p: PartId) -> &[(usize, u32)] {
        &self.consumers[p.0]
    }

    /// Processes producing part `p`, with their weights.
    pub fn producers_of(&self, p: PartId) -> &[(usize, u32)] {
        &self.producers[p.0]
    }

    pub fn is_final(&self, p: PartId) -> bool {
        self.consumers[p.0].is_empty() && !self.producers[p.0].is_empty()
    }

    pub fn is_raw(&self, p: PartId) -> bool {
        self.producers[p.0].is_empty() && !self.consumers[p.0].is_empty()
    }

    pub fn set_capacity(&mut self, process: usize, capacity: f64) {
        self.processes[process].capacity = capacity;
    }

    pub fn set_lead_time(&mut self, process: usize, lead_min: f64, lead_max: f64) {
        self.processes[process].lead_min = lead_min;
        self.processes[process].lead_max = lead_max;
    }

    pub fn set_initial_stock(&mut self, p: PartId, amount: f64) {
        self.initial_stock[p.0] = amount;
    }

    /// Parts ordered so that every part comes after all parts produced from
    /// it, i.e. a reverse topological order of the consumption graph.
    /// Fails with the offending cycle when the graph is cyclic.
    pub fn downstream_first_order(&self) -> Result<Vec<PartId>> {
        match self.find_cycle() {
            Some(cycle) => {
                Err(Error::CyclicNetwork { cycle: cycle.iter().map(|p| self.part_name(*p).to_string()).collect() })
            }
            None => Ok(self.postorder()),
        }
    }

    fn postorder(&self) -> Vec<PartId> {
        // DFS over part -> consuming process -> produced part; postorder lists
        // children (downstream parts) before parents.
        let n = self.part_count();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut stack: Vec<(usize, Vec<usize>)> = vec![(root, self.children(root))];
            while let Some((node, children)) = stack.last_mut() {
                if let Some(c) = children.pop() {
                    if !visited[c] {
                        visited[c] = true;
                        let grand = self.children(c);
                        stack.push((c, grand));
                    }
                } else {
                    order.push(PartId(*node));
                    stack.pop();
                }
            }
        }
        order
    }

    fn children(&self, p: usize) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.consumers[p].iter().flat_map(|&(i, _)| self.processes[i].produced.iter().map(|(q, _)| q.0)).collect();
        out.sort_unstable();
        out.dedup();
        out.reverse();
        out
    }

    fn find_cycle(&self) -> Option<Vec<PartId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.part_count();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            let mut path = vec![root];
            let mut stack = vec![self.children(root)];
            mark[root] = Mark::Active;
            while let Some(children) = stack.last_mut() {
                match children.pop() {
                    Some(c) => match mark[c] {
                        Mark::Active => {
                            let start = path.iter().position(|&q| q == c).unwrap_or(0);
                            let mut cycle: Vec<PartId> = path[start..].iter().map(|&q| PartId(q)).collect();
                            cycle.push(PartId(c));
                            return Some(cycle);
                        }
                        Mark::New => {
                            mark[c] = Mark::Active;
                            path.push(c);
                            stack.push(self.children(c));
                        }
                        Mark::Done => {}
                    },
                    None => {
                        if let Some(q) = path.pop() {
                            mark[q] = Mark::Done;
                        }
                        stack.pop();
                    }
                }
            }
        }
        None
    }
}

/// Outcome of [`validate_network`] / [`inspect_network`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub raw: BTreeSet<PartId>,
    pub final_products: BTreeSet<PartId>,
    pub cycle: Option<Vec<PartId>>,
    pub unreferenced: Vec<PartId>,
}

/// Classifies parts and reports cycles and unreferenced parts without
/// failing on cycles (push simulations tolerate them).
pub fn inspect_network(net: &SupplyChainNetwork) -> Result<ValidationReport> {
    if net.process_count() == 0 {
        return Err(Error::EmptyProcessList);
    }
    let (raw, final_products) = classify_parts(net);
    let unreferenced = (0..net.part_count())
        .map(PartId)
        .filter(|&p| net.consumers_of(p).is_empty() && net.producers_of(p).is_empty())
        .collect();
    Ok(ValidationReport { raw, final_products, cycle: net.find_cycle(), unreferenced })
}

/// Full validation: like [`inspect_network`] but a cycle is an error, since
/// demand projection in pull mode would not terminate.
pub fn validate_network(net: &SupplyChainNetwork) -> Result<ValidationReport> {
    let report = inspect_network(net)?;
    if let Some(cycle) = &report.cycle {
        return Err(Error::CyclicNetwork { cycle: cycle.iter().map(|p| net.part_name(*p).to_string()).collect() });
    }
    Ok(report)
}

/// Raw materials (consumed, never produced) and final products (produced,
/// never consumed).
pub fn classify_parts(net: &SupplyChainNetwork) -> (BTreeSet<PartId>, BTreeSet<PartId>) {
    let consumed: BTreeSet<PartId> = net.processes().iter().flat_map(|p| p.consumed.iter().map(|x| x.0)).collect();
    let produced: BTreeSet<PartId> = net.processes().iter().flat_map(|p| p.produced.iter().map(|x| x.0)).collect();
    let raw = consumed.difference(&produced).copied().collect();
    let final_products = produced.difference(&consumed).copied().collect();
    (raw, final_products)
}

/// Part counts plus the consumption / order / refill bookkeeping of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    /// Clock, days.
    pub t: f64,
    /// Part counts.
    pub x: Vec<f64>,
    /// Accumulated consumption per part.
    pub consumed: Vec<f64>,
    /// Accumulated direct orders per part.
    pub ordered: Vec<f64>,
    /// Next back-order arrival per part; the sentinel when none is pending.
    pub next_refill: Vec<f64>,
    /// Accumulated deliveries against orders per part.
    pub delivered: Vec<f64>,
}

impl SystemState {
    pub fn initial(net: &SupplyChainNetwork, sentinel: f64) -> Self {
        let n = net.part_count();
        Self {
            t: 0.0,
            x: net.initial_stock().to_vec(),
            consumed: vec![0.0; n],
            ordered: vec![0.0; n],
            next_refill: vec![sentinel; n],
            delivered: vec![0.0; n],
        }
    }
}

/// One in-flight batch of consumed-but-not-yet-produced events.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueEntry {
    pub process: usize,
    /// Events still to be completed.
    pub quantity: f64,
    /// Earliest completion time of what remains.
    pub start: f64,
    /// Remaining completion window.
    pub span: f64,
    /// Quantity at enqueue time.
    pub initial_quantity: f64,
    /// Start and span at enqueue time.
    pub origin: (f64, f64),
    /// Sorted per-event completion quantiles, used by coupled stochastic runs.
    pub units: Option<Vec<f64>>,
}

impl QueueEntry {
    pub fn new(process: usize, quantity: f64, start: f64, span: f64) -> Self {
        Self { process, quantity, start, span, initial_quantity: quantity, origin: (start, span), units: None }
    }

    pub fn is_exhausted(&self) -> bool {
        self.quantity <= 0.0 || self.span <= 0.0
    }
}

/// In-flight batches, kept per process in enqueue order so that the batches
/// due in a bucket are always a prefix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DelayQueue {
    lanes: Vec<VecDeque<QueueEntry>>,
}

impl DelayQueue {
    pub fn new(process_count: usize) -> Self {
        Self { lanes: vec![VecDeque::new(); process_count] }
    }

    pub fn push(&mut self, entry: QueueEntry) {
        let lane = entry.process;
        if lane >= self.lanes.len() {
            self.lanes.resize(lane + 1, VecDeque::new());
        }
        self.lanes[lane].push_back(entry);
    }

    /// Number of batches in the queue.
    pub fn len(&self) -> usize {
        self.lanes.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.iter().all(VecDeque::is_empty)
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> {
        self.lanes.iter().flatten()
    }

    pub fn lanes_mut(&mut self) -> &mut [VecDeque<QueueEntry>] {
        &mut self.lanes
    }

    /// Total quantity still waiting, per process.
    pub fn pending(&self) -> Vec<f64> {
        self.lanes.iter().map(|l| l.iter().map(|e| e.quantity).sum()).collect()
    }

    /// Drops exhausted batches from the front of each lane.
    pub fn compact(&mut self) {
        for lane in &mut self.lanes {
            while lane.front().is_some_and(QueueEntry::is_exhausted) {
                lane.pop_front();
            }
        }
    }
}

/// How the back-order quantity is computed once stock falls to the safety level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefillVariant {
    /// Order a fixed amount `S`.
    FixedAmount,
    /// Order `safety - x + S`.
    TopUp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefillRule {
    pub part: PartId,
    pub safety_stock: f64,
    pub refill: f64,
    pub delay: f64,
    pub variant: RefillVariant,
}

impl RefillRule {
    /// Back-order quantity for the current stock level.
    pub fn back_order(&self, stock: f64) -> f64 {
        if stock <= self.safety_stock {
            match self.variant {
                RefillVariant::FixedAmount => self.refill,
                RefillVariant::TopUp => self.safety_stock - stock + self.refill,
            }
        } else {
            0.0
        }
    }
}

/// Safety-stock refilling of raw materials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InventoryPolicy {
    pub rules: Vec<RefillRule>,
}

impl InventoryPolicy {
    pub fn validate(&self, net: &SupplyChainNetwork) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.rules {
            let name = net.part_names().get(r.part.0).cloned().unwrap_or_else(|| r.part.to_string());
            if r.part.0 >= net.part_count() || !net.is_raw(r.part) {
                return Err(Error::Validation(format!("refill rule on {name}, which is not a raw material")));
            }
            if !seen.insert(r.part) {
                return Err(Error::Validation(format!("two refill rules for {name}")));
            }
            if !(r.refill > 0.0) || !(r.delay >= 0.0) || !(r.safety_stock >= 0.0) {
                return Err(Error::Validation(format!(
                    "refill rule on {name} needs refill > 0, delay >= 0 and safety stock >= 0"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPriority {
    /// All orders projected together.
    #[default]
    Fifo,
    /// Final-product orders are projected and consumed for first; orders on
    /// intermediate parts get what is left.
    FinalProductPriority,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderEvent {
    pub time: f64,
    pub part: PartId,
    pub quantity: u64,
}

/// Incoming orders, sorted by time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderStream {
    pub events: Vec<OrderEvent>,
    pub priority: OrderPriority,
}

impl OrderStream {
    pub fn new(mut events: Vec<OrderEvent>, priority: OrderPriority) -> Result<Self> {
        if events.iter().any(|e| e.quantity == 0 || !(e.time >= 0.0)) {
            return Err(Error::Validation("orders need a positive quantity and a non-negative time".into()));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Self { events, priority })
    }

    /// Orders of `quantity` on `part` at `start, start + every, ...` up to `until` (inclusive).
    pub fn periodic(part: PartId, quantity: u64, start: f64, every: f64, until: f64) -> Vec<OrderEvent> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let time = start + f64::from(k) * every;
            if time > until + crate::TIME_EPS {
                break;
            }
            out.push(OrderEvent { time, part, quantity });
            k += 1;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn has_orders_on(&self, part: PartId) -> bool {
        self.events.iter().any(|e| e.part == part)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Push,
    Pull,
}

/// How a part consumed by several processes is shared between them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePolicy {
    /// Processes draw in index order from whatever stock is left.
    #[default]
    Sequential,
    /// Stock is split evenly among the competing processes.
    Shared,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub mode: Mode,
    pub stochastic: bool,
    pub seed: u64,
    pub rate_policy: RatePolicy,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dt <= self.horizon) || !self.horizon.is_finite() {
            return Err(Error::Validation(format!(
                "bucket size {} must satisfy 0 < dt <= horizon ({})",
                self.dt, self.horizon
            )));
        }
        Ok(())
    }

    /// Sentinel for "no refill pending": one day past the horizon.
    pub fn sentinel(&self) -> f64 {
        self.horizon + 1.0
    }
}
