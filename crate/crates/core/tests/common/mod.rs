//! Random small networks and the conservation checks run on them.

#![allow(dead_code)]

use lleap::bucket_engine::{BucketGrid, BucketSimulation, Deterministic, Kernel};
use lleap::lleap_engine::{LeapKernel, RngStream, StreamId};
use lleap::model::{
    InventoryPolicy, Mode, OrderEvent, OrderPriority, OrderStream, PartId, ProcessSpec, RatePolicy, RefillRule,
    RefillVariant, SimConfig, SupplyChainNetwork,
};
use proptest::prelude::*;

/// A random network together with a run configuration.
#[derive(Clone, Debug)]
pub struct Case {
    pub net: SupplyChainNetwork,
    pub policy: Option<InventoryPolicy>,
    pub orders: Option<OrderStream>,
    pub config: SimConfig,
}

#[derive(Clone, Debug)]
struct RawProcess {
    consumes: Vec<(usize, u32)>,
    produces: Vec<(usize, u32)>,
    capacity: f64,
    lead: f64,
    spread: f64,
}

fn raw_process(parts: usize) -> impl Strategy<Value = RawProcess> {
    // Consumed parts precede produced ones, so every network is acyclic.
    (1..parts).prop_flat_map(move |split| {
        (
            proptest::sample::subsequence((0..split).collect::<Vec<_>>(), 1..=split.min(2)),
            proptest::sample::subsequence((split..parts).collect::<Vec<_>>(), 1..=(parts - split).min(2)),
            proptest::collection::vec(1u32..=3, 2),
            proptest::collection::vec(1u32..=2, 2),
            0.5f64..10.0,
            0.0f64..6.0,
            prop_oneof![Just(0.0), 0.0f64..4.0],
        )
            .prop_map(|(c, p, cw, pw, capacity, lead, spread)| RawProcess {
                consumes: c.into_iter().zip(cw).collect(),
                produces: p.into_iter().zip(pw).collect(),
                capacity,
                lead,
                spread,
            })
    })
}

/// Networks of at most five parts and four processes, in push or pull mode,
/// with optional refills and orders.
pub fn case_strategy(stochastic: bool) -> impl Strategy<Value = Case> {
    (2usize..=5)
        .prop_flat_map(|parts| {
            (
                Just(parts),
                proptest::collection::vec(raw_process(parts), 1..=4),
                proptest::collection::vec(0.0f64..60.0, parts),
                any::<bool>(),
                prop_oneof![Just(RatePolicy::Sequential), Just(RatePolicy::Shared)],
                prop_oneof![Just(0.25f64), Just(0.5), Just(1.0), Just(2.0), Just(3.0)],
                any::<u64>(),
                any::<bool>(),
                proptest::collection::vec((0usize..5, 1u64..20, 0.0f64..25.0), 0..6),
                proptest::collection::vec((0.0f64..30.0, 1.0f64..40.0, 0.0f64..8.0, any::<bool>()), 5),
            )
        })
        .prop_map(move |(parts, procs, stock, pull, rate_policy, dt, seed, fifo, order_draws, refills)| {
            let names = (1..=parts).map(|i| format!("P{i}")).collect();
            let processes = procs
                .iter()
                .map(|p| ProcessSpec {
                    consumed: p.consumes.iter().map(|&(i, w)| (PartId(i), w)).collect(),
                    produced: p.produces.iter().map(|&(i, w)| (PartId(i), w)).collect(),
                    capacity: p.capacity,
                    lead_min: p.lead,
                    lead_max: p.lead + p.spread,
                })
                .collect();
            let stock = stock.into_iter().map(f64::floor).collect();
            let net = SupplyChainNetwork::new(names, processes, stock).expect("generated networks are valid");
            let rules: Vec<RefillRule> = (0..parts)
                .filter(|&p| net.is_raw(PartId(p)))
                .zip(&refills)
                .filter(|(_, r)| r.1 > 0.0 && r.0 > 0.0)
                .map(|(p, &(safety, refill, delay, top_up))| RefillRule {
                    part: PartId(p),
                    safety_stock: safety.floor(),
                    refill: refill.floor(),
                    delay,
                    variant: if top_up { RefillVariant::TopUp } else { RefillVariant::FixedAmount },
                })
                .collect();
            let policy = (!rules.is_empty()).then_some(InventoryPolicy { rules });
            let horizon = 20.0;
            let mode = if pull { Mode::Pull } else { Mode::Push };
            let orders = pull.then(|| {
                let events = order_draws
                    .iter()
                    .map(|&(p, q, t)| OrderEvent { time: t.floor(), part: PartId(p % parts), quantity: q })
                    .collect();
                let priority = if fifo { OrderPriority::Fifo } else { OrderPriority::FinalProductPriority };
                OrderStream::new(events, priority).expect("generated orders are valid")
            });
            let config = SimConfig { horizon, dt, mode, stochastic, seed, rate_policy };
            Case { net, policy, orders, config }
        })
}

/// Steps a case bucket by bucket and checks non-negativity, per-bucket mass
/// balance and queue conservation.
pub fn check_conservation(case: &Case) -> Result<(), String> {
    if case.config.stochastic {
        let mut k = LeapKernel::new(RngStream::new(case.config.seed, StreamId::new(0, 0, 0)));
        run_checks(case, &mut k)
    } else {
        run_checks(case, &mut Deterministic)
    }
}

fn run_checks<K: Kernel>(case: &Case, kernel: &mut K) -> Result<(), String> {
    const TOL: f64 = 1e-6;
    let net = &case.net;
    let n = net.process_count();
    let mut sim = BucketSimulation::new(net, &case.config, case.policy.as_ref(), case.orders.as_ref())
        .map_err(|e| format!("setup failed: {e}"))?;
    let mut consumed_total = vec![0.0; n];
    let mut produced_total = vec![0.0; n];
    let grid = BucketGrid::uniform(case.config.horizon, case.config.dt);
    for (a, b) in grid.buckets() {
        let before = sim.state().clone();
        let refills: Vec<f64> = (0..net.part_count())
            .map(|p| match &case.policy {
                Some(pol) => pol
                    .rules
                    .iter()
                    .filter(|r| r.part.0 == p && a >= before.next_refill[p] - 1e-9)
                    .map(|r| r.back_order(before.x[p]))
                    .sum(),
                None => 0.0,
            })
            .collect();
        sim.step(b - a, kernel);
        let after = sim.state();
        let flows = sim.flows();
        for (p, &refill) in refills.iter().enumerate() {
            if after.x[p] < -TOL {
                return Err(format!("stock of part {p} is negative ({}) at t = {b}", after.x[p]));
            }
            let used: f64 = net.consumers_of(PartId(p)).iter().map(|&(i, w)| f64::from(w) * flows.consumed[i]).sum();
            let made: f64 = net.producers_of(PartId(p)).iter().map(|&(i, w)| f64::from(w) * flows.produced[i]).sum();
            let shipped = after.delivered[p] - before.delivered[p];
            let expected = before.x[p] + refill - used + made - shipped;
            if (after.x[p] - expected).abs() > TOL * (1.0 + expected.abs()) {
                return Err(format!(
                    "mass balance of part {p} off at t = {b}: stock {} vs expected {expected}",
                    after.x[p]
                ));
            }
            if shipped < -TOL || after.delivered[p] > after.ordered[p] + TOL {
                return Err(format!("deliveries of part {p} out of range at t = {b}"));
            }
        }
        for i in 0..n {
            if flows.consumed[i] < -TOL || flows.produced[i] < -TOL {
                return Err(format!("negative flow of process {i} at t = {b}"));
            }
            consumed_total[i] += flows.consumed[i];
            produced_total[i] += flows.produced[i];
        }
        let pending = sim.queue().pending();
        for i in 0..n {
            if pending[i] < -TOL {
                return Err(format!("negative queue content of process {i} at t = {b}"));
            }
            let gap = consumed_total[i] - produced_total[i] - pending[i];
            if gap.abs() > TOL * (1.0 + consumed_total[i]) {
                return Err(format!(
                    "queue of process {i} loses {gap} events at t = {b} (consumed {}, produced {}, pending {})",
                    consumed_total[i], produced_total[i], pending[i]
                ));
            }
        }
        if case.config.stochastic {
            for i in 0..n {
                if flows.consumed[i].fract() != 0.0 || flows.produced[i].fract() != 0.0 {
                    return Err(format!("non-integral stochastic flow of process {i} at t = {b}"));
                }
            }
        }
    }
    Ok(())
}
