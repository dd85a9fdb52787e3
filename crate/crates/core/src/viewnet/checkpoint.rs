use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ViewNet};
use crate::crf::CrfParams;
use crate::error::{Error, Result};
use crate::optim::{AdamState, Params};

const CHECKPOINT_VERSION: u32 = 1;
const CRF_SECTION_VERSION: u32 = 1;

/// Saved network weights and optimizer state. Every `f64` is stored as the
/// 16-digit hex of its IEEE 754 bits, so a save/load cycle is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub architecture: Architecture,
    pub params: BTreeMap<String, Vec<String>>,
    /// Block order of `params`.
    pub block_order: Vec<String>,
    pub optimizer: Option<OptimizerState>,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crf: Option<CrfSection>,
}

/// Fitted CRF parameters stored next to the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrfSection {
    pub version: u32,
    pub params: CrfParams,
}

impl CrfSection {
    pub fn new(params: CrfParams) -> Self {
        CrfSection { version: CRF_SECTION_VERSION, params }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub m: Vec<String>,
    pub v: Vec<String>,
}

fn encode(values: &[f64]) -> Vec<String> {
    values.iter().map(|x| format!("{:016x}", x.to_bits())).collect()
}

fn decode(values: &[String], what: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|s| {
            if s.len() != 16 {
                return Err(Error::Validation(format!("{what}: '{s}' is not 16 hex digits")));
            }
            u64::from_str_radix(s, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::Validation(format!("{what}: '{s}' is not hex")))
        })
        .collect()
}

impl Checkpoint {
    pub fn capture(net: &ViewNet, state: Option<&AdamState>) -> Self {
        let p = net.params();
        let params = p.blocks().iter().enumerate().map(|(i, b)| (b.name.clone(), encode(p.block(i)))).collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            architecture: net.architecture().clone(),
            params,
            block_order: p.blocks().iter().map(|b| b.name.clone()).collect(),
            optimizer: state.map(|s| OptimizerState { m: encode(&s.m), v: encode(&s.v) }),
            step: state.map_or(0, |s| s.step),
            crf: None,
        }
    }

    /// Rebuild the network and, when saved, the optimizer state.
    pub fn restore(&self) -> Result<(ViewNet, Option<AdamState>)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!("unsupported checkpoint version {}", self.version)));
        }
        let mut params = Params::new();
        for name in &self.block_order {
            let values = self
                .params
                .get(name)
                .ok_or_else(|| Error::Validation(format!("checkpoint lacks block '{name}'")))?;
            params.push(name.clone(), decode(values, name)?);
        }
        if params.blocks().len() != self.params.len() {
            return Err(Error::Validation("checkpoint block order does not list every block".into()));
        }
        let net = ViewNet::from_params(self.architecture.clone(), params)?;
        let state = match &self.optimizer {
            Some(o) => {
                let s = AdamState { m: decode(&o.m, "optimizer.m")?, v: decode(&o.v, "optimizer.v")?, step: self.step };
                if s.m.len() != net.parameter_count() || s.v.len() != net.parameter_count() {
                    return Err(Error::Validation("optimizer state size does not match the network".into()));
                }
                Some(s)
            }
            None => None,
        };
        Ok((net, state))
    }

    /// The stored CRF, checked against the network's class count.
    pub fn crf_params(&self) -> Result<Option<CrfParams>> {
        let Some(section) = &self.crf else { return Ok(None) };
        if section.version != CRF_SECTION_VERSION {
            return Err(Error::Validation(format!("unsupported CRF section version {}", section.version)));
        }
        section.params.validate()?;
        if section.params.classes != self.architecture.classes {
            return Err(Error::Validation(format!(
                "CRF has {} classes but the network has {}",
                section.params.classes, self.architecture.classes
            )));
        }
        Ok(Some(section.params.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
