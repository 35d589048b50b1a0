use std::fs;
use std::path::Path;

use regional_bertrand::demand::{linear_demand, specific_demand};
use regional_bertrand::dynamics::AdjustmentConfig;
use regional_bertrand::{DemandSystem, Error, LinearDemandParams, MarketPrimitives, Model, PolicyFunctions, Prices};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_id")]
    pub id: String,
    pub market: MarketSection,
    pub prob: ProbSection,
    pub alpha: AlphaSection,
    pub beta: BetaSection,
    #[serde(default)]
    pub demand: DemandSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
}

fn default_id() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub q: f64,
    pub c_bar: f64,
    #[serde(rename = "c_bar_L")]
    pub c_bar_l: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "G", default)]
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbSection {
    #[serde(rename = "P0")]
    pub p0: f64,
    #[serde(rename = "lambda_P")]
    pub lambda_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    #[serde(rename = "a_R")]
    pub a_r: f64,
    pub lambda_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    pub b_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DemandKind {
    #[default]
    Specific,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    #[serde(default)]
    pub kind: DemandKind,
    #[serde(rename = "A")]
    pub a: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub m: Option<f64>,
    pub n: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(rename = "kU", default = "one")]
    pub k_u: f64,
    #[serde(rename = "kL", default = "one")]
    pub k_l: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    0.01
}

fn default_horizon() -> f64 {
    1000.0
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { k_u: 1.0, k_l: 1.0, dt: default_dt(), horizon: default_horizon() }
    }
}

impl Scenario {
    pub fn model(&self) -> Model {
        let m = self.market;
        let (p, a, b) = (self.prob, self.alpha, self.beta);
        Model {
            market: MarketPrimitives { q: m.q, c_bar: m.c_bar, c_bar_l: m.c_bar_l, r: m.r, g: m.g },
            policy: PolicyFunctions { p0: p.p0, lambda_p: p.lambda_p, a_r: a.a_r, lambda_alpha: a.lambda_alpha, b_beta: b.b_beta },
        }
    }

    pub fn linear_params(&self) -> Option<LinearDemandParams> {
        let d = self.demand;
        Some(LinearDemandParams { a: d.a?, b: d.b?, c: d.c?, m: d.m.unwrap_or(0.0), n: d.n.unwrap_or(0.0) })
    }

    pub fn is_specific(&self) -> bool {
        self.demand.kind == DemandKind::Specific
    }

    /// The demand system for `model`, which may differ from the scenario's own point.
    pub fn system_for(&self, model: &Model) -> Result<Box<dyn DemandSystem>, CliError> {
        match self.demand.kind {
            DemandKind::Specific => Ok(Box::new(specific_demand(model))),
            DemandKind::Linear => {
                let params = self.linear_params().expect("validated on load");
                Ok(Box::new(linear_demand(params, model).map_err(CliError::from)?))
            }
        }
    }

    pub fn system(&self) -> Result<Box<dyn DemandSystem>, CliError> {
        self.system_for(&self.model())
    }

    pub fn adjustment(&self, init: Prices) -> AdjustmentConfig {
        let d = self.dynamics;
        AdjustmentConfig { k_u: d.k_u, k_l: d.k_l, dt: d.dt, horizon: d.horizon, init }
    }

    /// Every field-level problem, one message per entry.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let model = self.model();
        let mut push = |e: Error| errors.push(e.to_string());
        if let Err(e) = model.market.validate() {
            push(e);
        }
        if let Err(e) = model.policy.validate() {
            push(e);
        }
        if self.demand.kind == DemandKind::Linear {
            match self.linear_params() {
                None => errors.push("invalid input `demand`: kind = \"linear\" needs A, B and C".into()),
                Some(p) => {
                    if let Err(e) = p.validate() {
                        errors.push(format!("demand: {e}"));
                    }
                }
            }
        }
        let cfg = self.adjustment(Prices::new(0.0, 0.0));
        if let Err(e) = cfg.validate() {
            match e {
                Error::InvalidInput { field, reason } => {
                    errors.push(format!("invalid input `dynamics.{field}`: {reason}"))
                }
                other => errors.push(other.to_string()),
            }
        }
        errors
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Input(format!("scenario: {e}")))?;
    let errors = scenario.validate();
    if errors.is_empty() {
        Ok(scenario)
    } else {
        Err(CliError::Input(errors.join("\n")))
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}
