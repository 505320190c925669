//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected everywhere.
//!
//! ```toml
//! schema_version = 1            # required, currently 1
//! name = "example"
//! description = "optional"
//!
//! [config]
//! horizon = 200.0               # days
//! dt = 2.0                      # bucket size, 0 < dt <= horizon
//! mode = "push"                 # "push" | "pull"
//! stochastic = false            # optional
//! seed = 1                      # optional
//! rate_policy = "sequential"    # optional: "sequential" | "shared"
//!
//! [[parts]]                     # one table per part, in state-vector order
//! name = "P1"
//! initial = 1000.0              # optional, default 0
//!
//! [[processes]]
//! label = "production"          # optional
//! consumes = { P1 = 1, P4 = 1 } # part name = integer weight
//! produces = { P6 = 1 }
//! capacity = 4.0                # maximum events per day
//! lead = 10.0                   # or lead_min / lead_max
//!
//! [policy]                      # optional: safety-stock refills of raw parts
//! [[policy.refill]]
//! part = "P1"
//! safety_stock = 200.0
//! refill = 200.0
//! delay = 15.0
//! variant = "fixed-amount"      # optional: "fixed-amount" | "top-up"
//!
//! [orders]                      # optional, pull mode
//! priority = "final-product-priority"   # or "fifo" (default)
//! [[orders.events]]
//! part = "P13"
//! quantity = 100
//! time = 0.0
//! [[orders.periodic]]
//! part = "P4"
//! quantity = 30
//! start = 0.0
//! every = 50.0
//! until = 700.0                 # optional, default horizon
//!
//! [uq]                          # optional
//! dt0 = 32.0                    # coarsest bucket of the level ladder
//! tol = 10.0
//! split = 0.5                   # optional
//! confidence = 0.95             # optional
//! [[uq.parameters]]
//! kind = "capacity"             # "capacity" | "lead-time" (1-based process)
//! process = 1                   # "initial-stock" takes part = "P1"
//! lo = 8.0
//! hi = 12.0
//! [[uq.qoi]]
//! name = "deliveries"
//! part = "P8"
//! kind = "deliveries-by"        # horizon = ..., defaults to the run horizon
//! horizon = 300.0               # "delivery-time" takes count and cap
//! stochastic = false            # optional
//! dt0 = 32.0                    # optional, overrides [uq].dt0
//! tol = 10.0                    # optional, overrides [uq].tol
//! ```
//!
//! A QoI counts deliveries when the run is in pull mode and its part has
//! orders, and the stock on hand otherwise.

mod schema;

use std::path::Path;

pub use schema::*;

use crate::error::{Error, Result};
use crate::model::{
    inspect_network, validate_network, InventoryPolicy, Mode, OrderEvent, OrderStream, PartId, ProcessSpec, RefillRule,
    SimConfig, SupplyChainNetwork,
};
use crate::uq::{
    Measure, ParamTarget, ParameterDistribution, QoiKind, QoiSpec, ScenarioSampler, Tolerances, UniformParam,
};

pub const SCHEMA_VERSION: u32 = 1;

/// A QoI of a scenario's uncertainty study.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedQoi {
    pub name: String,
    pub spec: QoiSpec,
    pub stochastic: bool,
    pub dt0: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UqSpec {
    pub dt0: f64,
    pub tolerances: Tolerances,
    pub distribution: ParameterDistribution,
    pub qois: Vec<NamedQoi>,
}

/// A validated scenario together with the file it was built from.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub network: SupplyChainNetwork,
    pub config: SimConfig,
    pub policy: Option<InventoryPolicy>,
    pub orders: Option<OrderStream>,
    pub uq: Option<UqSpec>,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    /// Canonical TOML text.
    pub fn to_toml(&self) -> String {
        self.file.to_toml()
    }

    /// The named QoI, or the first one when `name` is `None`.
    pub fn qoi(&self, name: Option<&str>) -> Result<&NamedQoi> {
        let uq =
            self.uq.as_ref().ok_or_else(|| Error::Validation(format!("scenario {} has no [uq] block", self.name())))?;
        match name {
            None => uq.qois.first().ok_or_else(|| Error::Validation("the [uq] block defines no QoI".into())),
            Some(n) => uq.qois.iter().find(|q| q.name == n).ok_or_else(|| {
                let known: Vec<&str> = uq.qois.iter().map(|q| q.name.as_str()).collect();
                Error::Validation(format!("unknown QoI {n}; known: {}", known.join(", ")))
            }),
        }
    }

    /// Sampler for the uncertainty study of one QoI.
    pub fn sampler(&self, qoi: Option<&str>, seed: u64) -> Result<ScenarioSampler> {
        let named = self.qoi(qoi)?.clone();
        let uq = self.uq.as_ref().expect("checked by qoi()");
        Ok(ScenarioSampler {
            network: self.network.clone(),
            config: SimConfig { stochastic: named.stochastic, seed, ..self.config.clone() },
            policy: self.policy.clone(),
            orders: self.orders.clone(),
            qoi: named.spec,
            distribution: Some(uq.distribution.clone()),
            dt0: named.dt0,
            seed,
        })
    }

    /// A QoI evaluated on plain runs of this scenario: the first `[uq.qoi]`
    /// if any, else the stock of the first final product at the horizon.
    pub fn default_qoi(&self) -> QoiSpec {
        if let Ok(q) = self.qoi(None) {
            return q.spec;
        }
        let part = (0..self.network.part_count())
            .map(PartId)
            .find(|&p| self.network.is_final(p))
            .unwrap_or(PartId(self.network.part_count() - 1));
        QoiSpec {
            part,
            kind: QoiKind::DeliveriesBy { horizon: self.config.horizon },
            measure: measure_for(&self.config, self.orders.as_ref(), part),
        }
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let names: Vec<String> = file.parts.iter().map(|p| p.name.clone()).collect();
        let part = |name: &str, what: &str| -> Result<PartId> {
            names
                .iter()
                .position(|n| n == name)
                .map(PartId)
                .ok_or_else(|| Error::Validation(format!("{what} refers to unknown part {name}")))
        };
        let weights = |m: &std::collections::BTreeMap<String, u32>, what: &str| -> Result<Vec<(PartId, u32)>> {
            m.iter().map(|(n, &w)| Ok((part(n, what)?, w))).collect()
        };
        let mut processes = Vec::with_capacity(file.processes.len());
        for (i, p) in file.processes.iter().enumerate() {
            let what = format!("process {}", i + 1);
            let (lead_min, lead_max) = match (p.lead, p.lead_min, p.lead_max) {
                (Some(l), None, None) => (l, l),
                (None, Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Validation(format!("{what}: give either lead or both lead_min and lead_max"))),
            };
            processes.push(ProcessSpec {
                consumed: weights(&p.consumes, &what)?,
                produced: weights(&p.produces, &what)?,
                capacity: p.capacity,
                lead_min,
                lead_max,
            });
        }
        let stock = file.parts.iter().map(|p| p.initial).collect();
        let network = SupplyChainNetwork::new(names.clone(), processes, stock)?;
        let config = SimConfig {
            horizon: file.config.horizon,
            dt: file.config.dt,
            mode: file.config.mode,
            stochastic: file.config.stochastic,
            seed: file.config.seed,
            rate_policy: file.config.rate_policy,
        };
        config.validate()?;
        match config.mode {
            Mode::Pull => validate_network(&network)?,
            Mode::Push => inspect_network(&network)?,
        };

        let policy = match &file.policy {
            None => None,
            Some(p) => {
                let rules = p
                    .refill
                    .iter()
                    .map(|r| {
                        Ok(RefillRule {
                            part: part(&r.part, "refill rule")?,
                            safety_stock: r.safety_stock,
                            refill: r.refill,
                            delay: r.delay,
                            variant: r.variant,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let policy = InventoryPolicy { rules };
                policy.validate(&network)?;
                Some(policy)
            }
        };

        let orders = match &file.orders {
            None => None,
            Some(o) => {
                let mut events = Vec::new();
                for e in &o.events {
                    events.push(OrderEvent { time: e.time, part: part(&e.part, "order")?, quantity: e.quantity });
                }
                for p in &o.periodic {
                    if !(p.every > 0.0) {
                        return Err(Error::Validation(format!("periodic order on {} needs every > 0", p.part)));
                    }
                    let until = p.until.unwrap_or(config.horizon);
                    events.extend(OrderStream::periodic(part(&p.part, "order")?, p.quantity, p.start, p.every, until));
                }
                Some(OrderStream::new(events, o.priority)?)
            }
        };

        let uq = match &file.uq {
            None => None,
            Some(u) => {
                let tolerances = Tolerances::new(u.tol, u.split, u.confidence)?;
                if !(u.dt0 > 0.0) {
                    return Err(Error::Validation("uq.dt0 must be positive".into()));
                }
                let mut params = Vec::with_capacity(u.parameters.len());
                for p in &u.parameters {
                    let process = |what: &str| -> Result<usize> {
                        match p.process {
                            Some(i) if i >= 1 && i <= network.process_count() => Ok(i - 1),
                            _ => Err(Error::Validation(format!(
                                "{what} parameter needs process = 1..{}",
                                network.process_count()
                            ))),
                        }
                    };
                    let target = match p.kind {
                        ParamKind::Capacity => ParamTarget::Capacity(process("capacity")?),
                        ParamKind::LeadTime => ParamTarget::LeadTime(process("lead-time")?),
                        ParamKind::InitialStock => match &p.part {
                            Some(n) => ParamTarget::InitialStock(part(n, "initial-stock parameter")?),
                            None => return Err(Error::Validation("initial-stock parameter needs part".into())),
                        },
                    };
                    params.push(UniformParam { target, lo: p.lo, hi: p.hi });
                }
                let distribution = ParameterDistribution::new(params)?;
                distribution.validate(&network)?;
                let mut qois = Vec::with_capacity(u.qoi.len());
                for q in &u.qoi {
                    let target = part(&q.part, "qoi")?;
                    let kind = match q.kind {
                        QoiKindName::DeliveriesBy => {
                            QoiKind::DeliveriesBy { horizon: q.horizon.unwrap_or(config.horizon) }
                        }
                        QoiKindName::DeliveryTime => QoiKind::DeliveryTime {
                            count: q.count.ok_or_else(|| Error::Validation(format!("qoi {} needs count", q.name)))?,
                            cap: q.cap.unwrap_or(config.horizon),
                        },
                    };
                    let dt0 = q.dt0.unwrap_or(u.dt0);
                    if !(dt0 > 0.0) {
                        return Err(Error::Validation(format!("qoi {} needs dt0 > 0", q.name)));
                    }
                    qois.push(NamedQoi {
                        name: q.name.clone(),
                        spec: QoiSpec { part: target, kind, measure: measure_for(&config, orders.as_ref(), target) },
                        stochastic: q.stochastic,
                        dt0,
                        tol: q.tol.unwrap_or(u.tol),
                    });
                }
                Some(UqSpec { dt0: u.dt0, tolerances, distribution, qois })
            }
        };
        Ok(Self { file, network, config, policy, orders, uq })
    }
}

fn measure_for(config: &SimConfig, orders: Option<&OrderStream>, part: PartId) -> Measure {
    match (config.mode, orders) {
        (Mode::Pull, Some(o)) if o.has_orders_on(part) => Measure::Delivered,
        _ => Measure::Stock,
    }
}

/// Parses and validates scenario text; `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let location = e.span().map(|s| {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!("{origin}:{line}")
        });
        Error::Parse { location, message: e.message().trim().to_string() }
    })?;
    Scenario::from_file(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

const BUILTINS: [(&str, &str); 4] = [
    ("push_6_1", include_str!("../../scenarios/push_6_1.toml")),
    ("pull_6_2", include_str!("../../scenarios/pull_6_2.toml")),
    ("uq_push_6_3", include_str!("../../scenarios/uq_push_6_3.toml")),
    ("uq_pull_6_4", include_str!("../../scenarios/uq_pull_6_4.toml")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|b| b.0).collect()
}

pub fn builtin(name: &str) -> Result<Scenario> {
    let (_, text) = BUILTINS
        .iter()
        .find(|b| b.0 == name)
        .ok_or_else(|| Error::Validation(format!("no builtin scenario named {name}")))?;
    parse_scenario(text, name)
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTINS.iter().map(|(n, _)| builtin(n).expect("builtin scenarios are valid")).collect()
}

/// A builtin name, or else a path to a scenario file.
pub fn resolve(name_or_path: &str) -> Result<Scenario> {
    if BUILTINS.iter().any(|b| b.0 == name_or_path) {
        builtin(name_or_path)
    } else {
        load_scenario(name_or_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load_and_round_trip() {
        for s in builtin_scenarios() {
            let text = s.to_toml();
            let again = parse_scenario(&text, "round-trip").unwrap();
            assert_eq!(again.file, s.file, "{}", s.name());
            assert_eq!(again.to_toml(), text);
            assert_eq!(again.network, s.network);
        }
        assert_eq!(builtin_names(), vec!["push_6_1", "pull_6_2", "uq_push_6_3", "uq_pull_6_4"]);
    }

    #[test]
    fn missing_capacity_names_the_field() {
        let text = builtin("push_6_1").unwrap().to_toml().replace("capacity = 2.0\n", "");
        match parse_scenario(&text, "broken.toml") {
            Err(Error::Parse { location, message }) => {
                assert!(message.contains("capacity"), "{message}");
                assert!(location.unwrap().starts_with("broken.toml:"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = builtin("push_6_1").unwrap().to_toml().replace("[config]\n", "[config]\nbogus = 1\n");
        assert!(matches!(parse_scenario(&text, "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_schema_version() {
        let text = builtin("push_6_1").unwrap().to_toml().replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(parse_scenario(&text, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_part_reference() {
        let mut file = builtin("push_6_1").unwrap().file;
        file.processes[4].consumes.insert("P77".into(), 1);
        assert!(matches!(Scenario::from_file(file), Err(Error::Validation(_))));
    }

    #[test]
    fn measures_follow_orders() {
        let pull = builtin("uq_pull_6_4").unwrap();
        assert!(pull.uq.as_ref().unwrap().qois.iter().all(|q| q.spec.measure == Measure::Delivered));
        let push = builtin("uq_push_6_3").unwrap();
        assert_eq!(push.qoi(None).unwrap().spec.measure, Measure::Stock);
    }
}
