//! Exogenous primitives, the policy-function families and the consumer side
//! of the specific model.

use crate::equilibrium::{Prices, Producer};
use crate::error::{Error, Result};

/// The exogenous scalars of the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketPrimitives {
    /// Basic utility level; consumers value either food at `sqrt(q)`.
    pub q: f64,
    /// Basic unit cost shared by both producers.
    pub c_bar: f64,
    /// Extra unit cost of the local producer's location.
    pub c_bar_l: f64,
    /// Added value per unit of the local food.
    pub r: f64,
    /// Administrative-guidance level.
    pub g: f64,
}

impl MarketPrimitives {
    pub fn new(q: f64, c_bar: f64, c_bar_l: f64, r: f64, g: f64) -> Result<Self> {
        let m = Self { q, c_bar, c_bar_l, r, g };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        finite_positive("market.q", self.q)?;
        finite_positive("market.c_bar", self.c_bar)?;
        finite_non_negative("market.c_bar_L", self.c_bar_l)?;
        finite_positive("market.R", self.r)?;
        finite_non_negative("market.G", self.g)?;
        Ok(())
    }

    pub fn sqrt_q(&self) -> f64 {
        self.q.sqrt()
    }
}

/// Parameters of the three policy-dependent functions:
///
/// * success probability `P(G) = 1 - (1 - P0) exp(-lambda_P G)`
/// * added-value cost `alpha(R, G) = a_R R exp(-lambda_alpha G)`
/// * administrative cost `beta(G) = b_beta G^2 / 2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyFunctions {
    pub p0: f64,
    pub lambda_p: f64,
    pub a_r: f64,
    pub lambda_alpha: f64,
    pub b_beta: f64,
}

impl PolicyFunctions {
    pub fn new(p0: f64, lambda_p: f64, a_r: f64, lambda_alpha: f64, b_beta: f64) -> Result<Self> {
        let f = Self { p0, lambda_p, a_r, lambda_alpha, b_beta };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0.is_finite() && self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::invalid("prob.P0", format!("must lie in (0, 1], got {}", self.p0)));
        }
        finite_positive("prob.lambda_P", self.lambda_p)?;
        finite_non_negative("alpha.a_R", self.a_r)?;
        finite_non_negative("alpha.lambda_alpha", self.lambda_alpha)?;
        finite_positive("beta.b_beta", self.b_beta)?;
        Ok(())
    }

    pub fn beta(&self, g: f64) -> f64 {
        0.5 * self.b_beta * g * g
    }

    pub fn beta_prime(&self, g: f64) -> f64 {
        self.b_beta * g
    }
}

fn finite_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite_non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

/// `P(G)` and `P'(G)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbEval {
    pub p: f64,
    pub dp: f64,
}

/// `alpha(R, G)` with its partials. `d_rg` is the cross partial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEval {
    pub value: f64,
    pub d_r: f64,
    pub d_g: f64,
    pub d_rg: f64,
}

pub fn eval_prob(funcs: &PolicyFunctions, g: f64) -> Result<ProbEval> {
    if !g.is_finite() {
        return Err(Error::invalid("G", format!("must be finite, got {g}")));
    }
    if g < 0.0 {
        return Err(Error::invalid("G", format!("must be >= 0, got {g}")));
    }
    Ok(prob_unchecked(funcs, g))
}

pub(crate) fn prob_unchecked(funcs: &PolicyFunctions, g: f64) -> ProbEval {
    let decay = (-funcs.lambda_p * g).exp();
    ProbEval {
        p: 1.0 - (1.0 - funcs.p0) * decay,
        dp: funcs.lambda_p * (1.0 - funcs.p0) * decay,
    }
}

pub fn eval_alpha(funcs: &PolicyFunctions, r: f64, g: f64) -> Result<AlphaEval> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid("R", format!("must be finite and > 0, got {r}")));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::invalid("G", format!("must be finite and >= 0, got {g}")));
    }
    Ok(alpha_unchecked(funcs, r, g))
}

pub(crate) fn alpha_unchecked(funcs: &PolicyFunctions, r: f64, g: f64) -> AlphaEval {
    let decay = (-funcs.lambda_alpha * g).exp();
    let d_r = funcs.a_r * decay;
    AlphaEval {
        value: d_r * r,
        d_r,
        d_g: -funcs.lambda_alpha * d_r * r,
        d_rg: -funcs.lambda_alpha * d_r,
    }
}

/// Unit costs of the two producers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCosts {
    pub c_u: f64,
    pub c_l: f64,
}

/// A market together with its policy functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub market: MarketPrimitives,
    pub policy: PolicyFunctions,
}

impl Model {
    pub fn new(market: MarketPrimitives, policy: PolicyFunctions) -> Result<Self> {
        market.validate()?;
        policy.validate()?;
        Ok(Self { market, policy })
    }

    /// The baseline scenario used throughout the tests and docs.
    pub fn baseline() -> Self {
        Self {
            market: MarketPrimitives { q: 2.56, c_bar: 1.0, c_bar_l: 0.1, r: 2.0, g: 0.0 },
            policy: PolicyFunctions { p0: 0.4, lambda_p: 1.0, a_r: 0.05, lambda_alpha: 0.5, b_beta: 0.5 },
        }
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.market.g = g;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.market.r = r;
        self
    }

    pub fn with_c_bar_l(mut self, c: f64) -> Self {
        self.market.c_bar_l = c;
        self
    }

    pub fn prob(&self) -> ProbEval {
        prob_unchecked(&self.policy, self.market.g)
    }

    pub fn alpha(&self) -> AlphaEval {
        alpha_unchecked(&self.policy, self.market.r, self.market.g)
    }

    /// `P(G) R`, the expected valuation of added value by the keenest consumer.
    pub fn spread(&self) -> f64 {
        self.prob().p * self.market.r
    }

    pub fn unit_costs(&self) -> UnitCosts {
        unit_costs_at(self, self.market.r, self.market.g)
    }
}

pub(crate) fn unit_costs_at(model: &Model, r: f64, g: f64) -> UnitCosts {
    let c_bar = model.market.c_bar;
    UnitCosts {
        c_u: c_bar,
        c_l: c_bar + model.market.c_bar_l + alpha_unchecked(&model.policy, r, g).value,
    }
}

pub fn unit_costs(prims: &MarketPrimitives, funcs: &PolicyFunctions) -> UnitCosts {
    unit_costs_at(&Model { market: *prims, policy: *funcs }, prims.r, prims.g)
}

/// One of the three validity conditions: holds iff `margin > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub holds: bool,
    pub margin: f64,
}

impl Condition {
    fn from_margin(margin: f64) -> Self {
        Self { holds: margin > 0.0, margin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// Every consumer gets a positive surplus from food U: `sqrt(q) - p^U`.
    pub cond1: Condition,
    /// Some consumers would not buy food L at all: `p^L - sqrt(q)`.
    pub cond2: Condition,
    /// Some consumers buy food L: `P(G) R - (p^L - p^U)`.
    pub cond3: Condition,
    /// Preference level below which buying L gives negative surplus.
    pub theta_star: f64,
    /// Preference level at which a consumer is indifferent between U and L.
    pub theta_star_star: f64,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.cond1.holds && self.cond2.holds && self.cond3.holds
    }

    /// Names of the conditions that fail.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.cond1.holds {
            v.push("cond1");
        }
        if !self.cond2.holds {
            v.push("cond2");
        }
        if !self.cond3.holds {
            v.push("cond3");
        }
        v
    }
}

pub fn thresholds(model: &Model, prices: Prices) -> Result<ConditionReport> {
    let s = model.spread();
    if !(s > 0.0) {
        return Err(Error::DegenerateModel(format!("P(G) R = {s} is not positive")));
    }
    let sq = model.market.sqrt_q();
    Ok(ConditionReport {
        cond1: Condition::from_margin(sq - prices.u),
        cond2: Condition::from_margin(prices.l - sq),
        cond3: Condition::from_margin(s - (prices.l - prices.u)),
        theta_star: (prices.l - sq) / s,
        theta_star_star: (prices.l - prices.u) / s,
    })
}

/// Surpluses of one consumer and the food it buys, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsumerChoice {
    pub cs_u: f64,
    pub cs_l: f64,
    pub choice: Option<Producer>,
}

pub fn consumer_surplus(model: &Model, prices: Prices, theta: f64) -> Result<ConsumerChoice> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid("theta", format!("must lie in [0, 1], got {theta}")));
    }
    let s = model.spread();
    let sq = model.market.sqrt_q();
    let cs_u = sq - prices.u;
    let cs_l = s * theta + sq - prices.l;
    let theta_ss = (prices.l - prices.u) / s;
    // ties at theta** go to U
    let (food, cs) = if theta > theta_ss {
        (Producer::L, cs_l)
    } else {
        (Producer::U, cs_u)
    };
    Ok(ConsumerChoice {
        cs_u,
        cs_l,
        choice: (cs >= 0.0).then_some(food),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateSurplus {
    pub total: f64,
    /// Share of consumers on the U segment, `theta**` clamped to `[0, 1]`.
    pub split: f64,
    /// False when any of conditions 1-3 fails; the value is then only indicative.
    pub conditions_ok: bool,
}

/// Consumer surplus integrated over the uniform preference distribution:
/// consumers below `theta**` take U, the rest take L.
pub fn aggregate_surplus(model: &Model, prices: Prices) -> Result<AggregateSurplus> {
    let report = thresholds(model, prices)?;
    let s = model.spread();
    let sq = model.market.sqrt_q();
    let split = report.theta_star_star.clamp(0.0, 1.0);
    let u_part = split * (sq - prices.u);
    let l_part = 0.5 * s * (1.0 - split * split) + (1.0 - split) * (sq - prices.l);
    Ok(AggregateSurplus {
        total: u_part + l_part,
        split,
        conditions_ok: report.all_hold(),
    })
}
