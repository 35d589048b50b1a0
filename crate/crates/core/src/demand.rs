//! Demand systems: the evaluation contract every solver works against, the
//! two built-in families, and a finite-difference oracle for the partials.

use std::fmt;

use crate::equilibrium::{Prices, Producer};
use crate::error::{Error, Result};
use crate::model::{self, ConditionReport, Model};
use crate::numeric::{self, Stencil};

const U: usize = 0;
const L: usize = 1;

/// Demands and their partials at one point. Index 0 is producer U, index 1
/// is producer L; `dp[j][k]` is `dX^j / dp^k` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DemandEval {
    pub x: [f64; 2],
    pub dp: [[f64; 2]; 2],
    pub dpp: [[[f64; 2]; 2]; 2],
    pub dr: [f64; 2],
    pub dg: [f64; 2],
    /// `d2 X^j / dp^k dR`
    pub dpr: [[f64; 2]; 2],
    /// `d2 X^j / dp^k dG`
    pub dpg: [[f64; 2]; 2],
}

/// Unit costs and the partials of `c^L` in the three parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEval {
    pub c_u: f64,
    pub c_l: f64,
    pub dcl_dcbar_l: f64,
    pub dcl_dr: f64,
    pub dcl_dg: f64,
}

impl CostEval {
    pub fn of(&self, producer: Producer) -> f64 {
        match producer {
            Producer::U => self.c_u,
            Producer::L => self.c_l,
        }
    }
}

pub trait DemandSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// The primitives and policy functions the system is built on; costs
    /// always come from here.
    fn model(&self) -> &Model;

    /// The same family rebuilt on different primitives.
    fn with_model(&self, model: Model) -> Box<dyn DemandSystem>;

    /// Evaluation at explicit `R` and `G`.
    fn eval_at(&self, prices: Prices, r: f64, g: f64) -> DemandEval;

    fn eval(&self, prices: Prices) -> DemandEval {
        let m = self.model().market;
        self.eval_at(prices, m.r, m.g)
    }

    fn costs_at(&self, r: f64, g: f64) -> CostEval {
        let model = self.model();
        let c = model::unit_costs_at(model, r, g);
        let a = model::alpha_unchecked(&model.policy, r, g);
        CostEval {
            c_u: c.c_u,
            c_l: c.c_l,
            dcl_dcbar_l: 1.0,
            dcl_dr: a.d_r,
            dcl_dg: a.d_g,
        }
    }

    fn costs(&self) -> CostEval {
        let m = self.model().market;
        self.costs_at(m.r, m.g)
    }

    /// Exact reaction function, when the family has one.
    fn closed_form_best_response(&self, _producer: Producer, _rival: f64) -> Option<f64> {
        None
    }

    /// Validity conditions of the preference-threshold model; `None` for
    /// families where they carry no meaning.
    fn conditions(&self, _prices: Prices) -> Option<ConditionReport> {
        None
    }

    fn as_specific(&self) -> Option<&SpecificDemand> {
        None
    }

    fn profit(&self, producer: Producer, prices: Prices) -> f64 {
        let j = producer.index();
        (prices.get(producer) - self.costs().of(producer)) * self.eval(prices).x[j]
    }

    /// `dpi^j / dp^j = dX^j/dp^j (p^j - c^j) + X^j`.
    fn foc(&self, producer: Producer, prices: Prices) -> f64 {
        let j = producer.index();
        let e = self.eval(prices);
        e.dp[j][j] * (prices.get(producer) - self.costs().of(producer)) + e.x[j]
    }
}

/// Demand generated by consumers uniform on `[0, 1]` in their taste for the
/// added value: `X^U = (p^L - p^U) / (P(G) R)`, `X^L = 1 - X^U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecificDemand {
    model: Model,
}

pub fn specific_demand(model: &Model) -> SpecificDemand {
    SpecificDemand { model: *model }
}

impl SpecificDemand {
    pub fn new(model: Model) -> Self {
        Self { model }
    }
}

impl DemandSystem for SpecificDemand {
    fn name(&self) -> &'static str {
        "specific"
    }

    fn model(&self) -> &Model {
        &self.model
    }

    fn with_model(&self, model: Model) -> Box<dyn DemandSystem> {
        Box::new(SpecificDemand { model })
    }

    fn eval_at(&self, prices: Prices, r: f64, g: f64) -> DemandEval {
        let pr = model::prob_unchecked(&self.model.policy, g);
        let s = pr.p * r;
        let gap = prices.l - prices.u;
        let xu = gap / s;
        // dS/dR = P, dS/dG = P' R
        let (s_r, s_g) = (pr.p, pr.dp * r);
        let xu_r = -gap * s_r / (s * s);
        let xu_g = -gap * s_g / (s * s);
        // d/dt of dX^U/dp^U = -1/S is S_t / S^2
        let inv_r = s_r / (s * s);
        let inv_g = s_g / (s * s);
        DemandEval {
            x: [xu, 1.0 - xu],
            dp: [[-1.0 / s, 1.0 / s], [1.0 / s, -1.0 / s]],
            dpp: [[[0.0; 2]; 2]; 2],
            dr: [xu_r, -xu_r],
            dg: [xu_g, -xu_g],
            dpr: [[inv_r, -inv_r], [-inv_r, inv_r]],
            dpg: [[inv_g, -inv_g], [-inv_g, inv_g]],
        }
    }

    fn closed_form_best_response(&self, producer: Producer, rival: f64) -> Option<f64> {
        let c = self.costs();
        Some(match producer {
            Producer::U => 0.5 * (rival + c.c_u),
            Producer::L => 0.5 * (self.model.spread() + rival + c.c_l),
        })
    }

    fn conditions(&self, prices: Prices) -> Option<ConditionReport> {
        model::thresholds(&self.model, prices).ok()
    }

    fn as_specific(&self) -> Option<&SpecificDemand> {
        Some(self)
    }
}

/// Coefficients of the linear family
/// `X^U = A - B p^U + C p^L - m R - n G`, `X^L = A - B p^L + C p^U + m R + n G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDemandParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub m: f64,
    pub n: f64,
}

impl LinearDemandParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c, self.m, self.n];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("linear demand coefficients must be finite".into()));
        }
        if !(self.a > 0.0) {
            return Err(Error::InvalidParameters(format!("A must be > 0, got {}", self.a)));
        }
        if !(self.c > 0.0 && self.b > self.c) {
            return Err(Error::InvalidParameters(format!(
                "need B > C > 0, got B = {}, C = {}",
                self.b, self.c
            )));
        }
        if self.m < 0.0 || self.n < 0.0 {
            return Err(Error::InvalidParameters("m and n must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDemand {
    params: LinearDemandParams,
    model: Model,
}

/// Linear demand with costs taken from `model`.
pub fn linear_demand(params: LinearDemandParams, model: &Model) -> Result<LinearDemand> {
    params.validate()?;
    Ok(LinearDemand { params, model: *model })
}

impl LinearDemand {
    pub fn params(&self) -> &LinearDemandParams {
        &self.params
    }
}

impl DemandSystem for LinearDemand {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn model(&self) -> &Model {
        &self.model
    }

    fn with_model(&self, model: Model) -> Box<dyn DemandSystem> {
        Box::new(LinearDemand { params: self.params, model })
    }

    fn eval_at(&self, prices: Prices, r: f64, g: f64) -> DemandEval {
        let LinearDemandParams { a, b, c, m, n } = self.params;
        let shift = m * r + n * g;
        DemandEval {
            x: [a - b * prices.u + c * prices.l - shift, a - b * prices.l + c * prices.u + shift],
            dp: [[-b, c], [c, -b]],
            dr: [-m, m],
            dg: [-n, n],
            ..DemandEval::default()
        }
    }
}

/// How much of the contract a finite-difference evaluation fills in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    /// Demands and first partials.
    First,
    /// Also the second price partials and the price/parameter cross partials.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdPartials {
    pub eval: DemandEval,
    /// Set when a one-sided stencil was needed at a domain edge; compare
    /// with a wider tolerance.
    pub one_sided: bool,
}

/// Central-difference estimates of every partial in [`DemandEval`], built
/// from the demand levels alone.
///
/// First partials use `h = max(1e-6, 1e-6 |x|)`; second partials use
/// second differences with `h = max(1e-4, 1e-4 |x|)`. `G` cannot go below
/// zero, so at `G < h` the `G` partials switch to a one-sided stencil.
pub fn fd_partials(system: &dyn DemandSystem, prices: Prices, r: f64, g: f64, order: FdOrder) -> FdPartials {
    let x = |pu: f64, pl: f64, r: f64, g: f64| system.eval_at(Prices::new(pu, pl), r, g).x;
    let mut out = DemandEval { x: x(prices.u, prices.l, r, g), ..DemandEval::default() };
    let mut one_sided = false;
    let inf = f64::INFINITY;
    let r_floor = r * 1e-3;

    for j in [U, L] {
        let hu = numeric::step_for(prices.u, numeric::FD_REL_STEP);
        let hl = numeric::step_for(prices.l, numeric::FD_REL_STEP);
        out.dp[j][U] = numeric::central(|p| x(p, prices.l, r, g)[j], prices.u, hu);
        out.dp[j][L] = numeric::central(|p| x(prices.u, p, r, g)[j], prices.l, hl);
        let (d, s) = numeric::derivative(|v| x(prices.u, prices.l, v, g)[j], r, numeric::step_for(r, numeric::FD_REL_STEP), r_floor, inf);
        out.dr[j] = d;
        one_sided |= s.is_one_sided();
        let (d, s) = numeric::derivative(|v| x(prices.u, prices.l, r, v)[j], g, numeric::step_for(g, numeric::FD_REL_STEP), 0.0, inf);
        out.dg[j] = d;
        one_sided |= s.is_one_sided();
    }

    if order == FdOrder::Second {
        let rel = 1e-4;
        let hu = numeric::step_for(prices.u, rel);
        let hl = numeric::step_for(prices.l, rel);
        let hr = numeric::step_for(r, rel);
        let hg = numeric::step_for(g, rel);
        for j in [U, L] {
            out.dpp[j][U][U] = numeric::second_central(|p| x(p, prices.l, r, g)[j], prices.u, hu);
            out.dpp[j][L][L] = numeric::second_central(|p| x(prices.u, p, r, g)[j], prices.l, hl);
            let cross = numeric::mixed_central(|a, b| x(a, b, r, g)[j], prices.u, prices.l, hu, hl);
            out.dpp[j][U][L] = cross;
            out.dpp[j][L][U] = cross;

            let du = |r: f64, g: f64| numeric::central(|p| x(p, prices.l, r, g)[j], prices.u, hu);
            let dl = |r: f64, g: f64| numeric::central(|p| x(prices.u, p, r, g)[j], prices.l, hl);
            let mut fill = |slot: &mut f64, (d, s): (f64, Stencil)| {
                *slot = d;
                one_sided |= s.is_one_sided();
            };
            fill(&mut out.dpr[j][U], numeric::derivative(|v| du(v, g), r, hr, r_floor, inf));
            fill(&mut out.dpr[j][L], numeric::derivative(|v| dl(v, g), r, hr, r_floor, inf));
            fill(&mut out.dpg[j][U], numeric::derivative(|v| du(r, v), g, hg, 0.0, inf));
            fill(&mut out.dpg[j][L], numeric::derivative(|v| dl(r, v), g, hg, 0.0, inf));
        }
    }

    FdPartials { eval: out, one_sided }
}
