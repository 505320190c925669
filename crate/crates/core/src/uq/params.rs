use crate::error::{Error, Result};
use crate::lleap_engine::RngStream;
use crate::model::{PartId, SupplyChainNetwork};

/// What a sampled parameter overrides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamTarget {
    Capacity(usize),
    /// Sets both ends of the lead-time window.
    LeadTime(usize),
    InitialStock(PartId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformParam {
    pub target: ParamTarget,
    pub lo: f64,
    pub hi: f64,
}

/// Independent uniform parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterDistribution {
    pub params: Vec<UniformParam>,
}

impl ParameterDistribution {
    pub fn new(params: Vec<UniformParam>) -> Result<Self> {
        for p in &params {
            if !(p.lo <= p.hi) || !p.lo.is_finite() || !p.hi.is_finite() || p.lo < 0.0 {
                return Err(Error::Validation(format!("bad range [{}, {}] for {:?}", p.lo, p.hi, p.target)));
            }
        }
        Ok(Self { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Checks every target against the network.
    pub fn validate(&self, net: &SupplyChainNetwork) -> Result<()> {
        for p in &self.params {
            let ok = match p.target {
                ParamTarget::Capacity(i) | ParamTarget::LeadTime(i) => i < net.process_count(),
                ParamTarget::InitialStock(part) => part.0 < net.part_count(),
            };
            if !ok {
                return Err(Error::Validation(format!("parameter target {:?} not in the network", p.target)));
            }
        }
        Ok(())
    }

    /// Writes `theta` into `net`. With `integral` the initial stocks are
    /// rounded to whole parts.
    pub fn apply(&self, theta: &[f64], net: &mut SupplyChainNetwork, integral: bool) {
        assert_eq!(theta.len(), self.params.len(), "parameter vector length");
        for (p, &v) in self.params.iter().zip(theta) {
            match p.target {
                ParamTarget::Capacity(i) => net.set_capacity(i, v),
                ParamTarget::LeadTime(i) => net.set_lead_time(i, v, v),
                ParamTarget::InitialStock(part) => net.set_initial_stock(part, if integral { v.round() } else { v }),
            }
        }
    }

    /// Short label such as `lambda_3`, `lead_3` or `x0_P1`.
    pub fn label(&self, k: usize, net: &SupplyChainNetwork) -> String {
        match self.params[k].target {
            ParamTarget::Capacity(i) => format!("lambda_{}", i + 1),
            ParamTarget::LeadTime(i) => format!("lead_{}", i + 1),
            ParamTarget::InitialStock(p) => format!("x0_{}", net.part_name(p)),
        }
    }
}

/// One independent draw of every parameter.
pub fn sample_parameters(dist: &ParameterDistribution, rng: &mut RngStream) -> Vec<f64> {
    dist.params.iter().map(|p| rng.uniform_in(p.lo, p.hi)).collect()
}
