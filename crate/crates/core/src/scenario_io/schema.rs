use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Mode, OrderPriority, RatePolicy, RefillVariant};

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

fn half() -> f64 {
    0.5
}

fn ninety_five() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub config: ConfigBlock,
    pub parts: Vec<PartBlock>,
    pub processes: Vec<ProcessBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<OrdersBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uq: Option<UqBlock>,
}

impl ScenarioFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigBlock {
    pub horizon: f64,
    pub dt: f64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "is_false")]
    pub stochastic: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub rate_policy: RatePolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartBlock {
    pub name: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub initial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub consumes: BTreeMap<String, u32>,
    pub produces: BTreeMap<String, u32>,
    pub capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyBlock {
    pub refill: Vec<RefillBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefillBlock {
    pub part: String,
    pub safety_stock: f64,
    pub refill: f64,
    pub delay: f64,
    #[serde(default = "fixed_amount")]
    pub variant: RefillVariant,
}

fn fixed_amount() -> RefillVariant {
    RefillVariant::FixedAmount
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdersBlock {
    #[serde(default)]
    pub priority: OrderPriority,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub periodic: Vec<PeriodicBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventBlock {
    pub part: String,
    pub quantity: u64,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicBlock {
    pub part: String,
    pub quantity: u64,
    pub start: f64,
    pub every: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqBlock {
    pub dt0: f64,
    pub tol: f64,
    #[serde(default = "half")]
    pub split: f64,
    #[serde(default = "ninety_five")]
    pub confidence: f64,
    #[serde(default)]
    pub parameters: Vec<ParamBlock>,
    pub qoi: Vec<QoiBlock>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Capacity,
    LeadTime,
    InitialStock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBlock {
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QoiKindName {
    DeliveriesBy,
    DeliveryTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoiBlock {
    pub name: String,
    pub part: String,
    pub kind: QoiKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub stochastic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}
