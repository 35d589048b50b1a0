//! Comparative statics of the second-stage equilibrium.
//!
//! Three independent routes are provided:
//!
//! * explicit derivatives of the specific model's closed-form equilibrium;
//! * the implicit-function system `J dP = -C dc_bar_L - R dR - G dG` for an
//!   arbitrary [`DemandSystem`], with and without the price/parameter cross
//!   partials of demand;
//! * central differences of re-solved equilibria ([`fd_statics`]), used as
//!   the oracle for the other two.

use std::fmt;
use std::str::FromStr;

use crate::demand::{DemandSystem, SpecificDemand};
use crate::equilibrium::{closed_form_equilibrium, stability_quantities, Equilibrium, Prices};
use crate::error::{Error, Result};
use crate::model::{aggregate_surplus, Model};
use crate::numeric::{self, Stencil};

/// Default perturbation for re-solve derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Preference level at which the per-consumer surplus from food L is tracked.
pub const THETA_PROBE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameter {
    /// Location-inefficiency cost `c_bar_L`.
    CBarL,
    /// Added value `R`.
    R,
    /// Guidance level `G`.
    G,
}

impl Parameter {
    pub const ALL: [Parameter; 3] = [Parameter::CBarL, Parameter::R, Parameter::G];

    pub fn get(self, model: &Model) -> f64 {
        match self {
            Parameter::CBarL => model.market.c_bar_l,
            Parameter::R => model.market.r,
            Parameter::G => model.market.g,
        }
    }

    pub fn set(self, model: &Model, value: f64) -> Model {
        match self {
            Parameter::CBarL => model.with_c_bar_l(value),
            Parameter::R => model.with_r(value),
            Parameter::G => model.with_g(value),
        }
    }

    /// Points at or below this value are outside the domain.
    fn floor(self) -> f64 {
        0.0
    }

    /// `c_bar_L` and `G` may sit on zero; `R` must stay strictly positive.
    fn admits(self, value: f64) -> bool {
        match self {
            Parameter::R => value > self.floor(),
            _ => value >= self.floor(),
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parameter::CBarL => "c_bar_L",
            Parameter::R => "R",
            Parameter::G => "G",
        })
    }
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cL" | "c_bar_L" | "cbarL" => Ok(Parameter::CBarL),
            "R" => Ok(Parameter::R),
            "G" => Ok(Parameter::G),
            other => Err(Error::invalid("param", format!("unknown parameter `{other}` (expected cL, R or G)"))),
        }
    }
}

/// Equilibrium outputs tracked by the statics, in a fixed order.
pub const QUANTITIES: [&str; 9] = [
    "p_UE", "p_LE", "X_UE", "X_LE", "pi_UE", "pi_LE", "CS_U", "CS_L(theta=1)", "CS_aggregate",
];

const N_QUANTITIES: usize = QUANTITIES.len();

pub fn outputs(model: &Model, eq: &Equilibrium) -> Result<[f64; N_QUANTITIES]> {
    let sq = model.market.sqrt_q();
    let agg = aggregate_surplus(model, eq.prices())?;
    Ok([
        eq.p_ue,
        eq.p_le,
        eq.x_ue,
        eq.x_le,
        eq.pi_ue,
        eq.pi_le,
        sq - eq.p_ue,
        model.spread() * THETA_PROBE + sq - eq.p_le,
        agg.total,
    ])
}

/// Re-solve derivatives of every tracked output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdStatics {
    pub values: [f64; N_QUANTITIES],
    pub stencil: Stencil,
    pub step: f64,
}

impl FdStatics {
    pub fn get(&self, quantity: &str) -> f64 {
        self.values[quantity_index(quantity)]
    }
}

fn quantity_index(q: &str) -> usize {
    QUANTITIES
        .iter()
        .position(|n| *n == q)
        .unwrap_or_else(|| panic!("unknown quantity {q}"))
}

/// Central differences of all equilibrium outputs under a perturbation of
/// `param`. Falls back to a second-order one-sided stencil when a perturbed
/// point leaves the domain or violates conditions 1-3 while the base point
/// satisfies them.
pub fn fd_statics<F>(solve: F, model: &Model, param: Parameter, step: f64) -> Result<FdStatics>
where
    F: Fn(&Model) -> Result<Equilibrium>,
{
    let x0 = param.get(model);
    let h = step * x0.abs().max(1.0);
    let base_ok = solve(model)?.conditions_ok();
    let eval = |x: f64| -> Option<[f64; N_QUANTITIES]> {
        if !param.admits(x) {
            return None;
        }
        let m = param.set(model, x);
        let eq = solve(&m).ok()?;
        if base_ok && !eq.conditions_ok() {
            return None;
        }
        outputs(&m, &eq).ok()
    };
    let combine = |pts: &[(f64, [f64; N_QUANTITIES])]| {
        let mut out = [0.0; N_QUANTITIES];
        for (w, v) in pts {
            for (o, x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        out.map(|v| v / (2.0 * h))
    };

    if let (Some(up), Some(dn)) = (eval(x0 + h), eval(x0 - h)) {
        return Ok(FdStatics { values: combine(&[(1.0, up), (-1.0, dn)]), stencil: Stencil::Central, step: h });
    }
    let f0 = eval(x0).ok_or_else(|| Error::NotApplicable(format!("{param} = {x0} cannot be re-solved")))?;
    if let (Some(f1), Some(f2)) = (eval(x0 + h), eval(x0 + 2.0 * h)) {
        return Ok(FdStatics { values: combine(&[(-3.0, f0), (4.0, f1), (-1.0, f2)]), stencil: Stencil::Forward, step: h });
    }
    if let (Some(f1), Some(f2)) = (eval(x0 - h), eval(x0 - 2.0 * h)) {
        return Ok(FdStatics { values: combine(&[(3.0, f0), (-4.0, f1), (1.0, f2)]), stencil: Stencil::Backward, step: h });
    }
    Err(Error::NotApplicable(format!("no valid stencil around {param} = {x0}")))
}

fn closed_form_solver(m: &Model) -> Result<Equilibrium> {
    Ok(closed_form_equilibrium(m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticsEntry {
    pub quantity: &'static str,
    pub analytic: Option<f64>,
    pub fd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub claim: String,
    pub expected: String,
    pub found: String,
    /// `None` for quantities reported without a sign claim.
    pub pass: Option<bool>,
}

impl Verdict {
    fn check(claim: impl Into<String>, expected: impl Into<String>, found: String, pass: bool) -> Self {
        Self { claim: claim.into(), expected: expected.into(), found, pass: Some(pass) }
    }

    fn report(claim: impl Into<String>, found: String) -> Self {
        Self { claim: claim.into(), expected: "indeterminate".into(), found, pass: None }
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticsReport {
    pub parameter: Parameter,
    pub entries: Vec<StaticsEntry>,
    pub fd_stencil: Stencil,
    pub verdicts: Vec<Verdict>,
}

impl StaticsReport {
    pub fn entry(&self, quantity: &str) -> &StaticsEntry {
        &self.entries[quantity_index(quantity)]
    }

    pub fn analytic(&self, quantity: &str) -> f64 {
        self.entry(quantity).analytic.expect("no analytic value for this quantity")
    }

    pub fn fd(&self, quantity: &str) -> f64 {
        self.entry(quantity).fd
    }

    /// Every analytic entry within `rel` (or `abs` near zero) of its re-solve estimate.
    pub fn analytic_matches_fd(&self, rel: f64, abs: f64) -> bool {
        self.entries
            .iter()
            .all(|e| e.analytic.is_none_or(|a| numeric::close(a, e.fd, rel, abs)))
    }

    pub fn all_checks_pass(&self) -> bool {
        !self.verdicts.iter().any(Verdict::failed)
    }
}

/// Exact derivatives of the closed-form equilibrium given the parameter
/// derivatives `s_t = dS/dt` and `k_t = dK/dt` of `S = P(G) R` and
/// `K = c_bar_L + alpha(R, G)`.
fn closed_form_derivatives(model: &Model, s_t: f64, k_t: f64) -> [f64; N_QUANTITIES] {
    let s = model.spread();
    let k = model.market.c_bar_l + model.alpha().value;
    let dpu = (s_t + k_t) / 3.0;
    let dpl = 2.0 * dpu;
    let dxu = (k_t * s - k * s_t) / (3.0 * s * s);
    let dpi_u = (2.0 * (s + k) * (s_t + k_t) * s - (s + k).powi(2) * s_t) / (9.0 * s * s);
    let dpi_l = (2.0 * (2.0 * s - k) * (2.0 * s_t - k_t) * s - (2.0 * s - k).powi(2) * s_t) / (9.0 * s * s);
    // aggregate surplus is D^2/(2S) + S/2 + sqrt(q) - p^L with D = p^L - p^U = (S + K)/3
    let gap = (s + k) / 3.0;
    let dcs = gap * dpu / s - gap * gap * s_t / (2.0 * s * s) + s_t / 2.0 - dpl;
    [dpu, dpl, dxu, -dxu, dpi_u, dpi_l, -dpu, s_t * THETA_PROBE - dpl, dcs]
}

fn assemble(parameter: Parameter, analytic: [f64; N_QUANTITIES], fd: &FdStatics, verdicts: Vec<Verdict>) -> StaticsReport {
    let entries = QUANTITIES
        .iter()
        .enumerate()
        .map(|(i, q)| StaticsEntry { quantity: q, analytic: Some(analytic[i]), fd: fd.values[i] })
        .collect();
    StaticsReport { parameter, entries, fd_stencil: fd.stencil, verdicts }
}

fn sign_word(v: f64) -> &'static str {
    if v > 0.0 {
        "+"
    } else if v < 0.0 {
        "-"
    } else {
        "0"
    }
}

/// Statics with respect to the location inefficiency.
pub fn specific_statics_cbarl(model: &Model) -> Result<StaticsReport> {
    let eq = closed_form_equilibrium(model);
    let s = model.spread();
    let c_l = model.unit_costs().c_l;
    let mut d = closed_form_derivatives(model, 0.0, 1.0);
    d[0] = 1.0 / 3.0;
    d[1] = 2.0 / 3.0;
    // envelope-theorem forms of the profit derivatives
    d[4] = (eq.p_le - model.market.c_bar) / (3.0 * s);
    d[5] = -2.0 * (eq.p_le - c_l) / (3.0 * s);

    let fd = fd_statics(closed_form_solver, model, Parameter::CBarL, FD_STEP)?;
    let verdicts = vec![
        Verdict::check(
            "dp_LE/dc_bar_L > dp_UE/dc_bar_L > 0",
            "2/3 > 1/3 > 0",
            format!("{} > {} > 0", d[1], d[0]),
            d[1] > d[0] && d[0] > 0.0,
        ),
        Verdict::check("dX_UE/dc_bar_L > 0", "+", format!("{}", d[2]), d[2] > 0.0),
        Verdict::check("dX_LE/dc_bar_L < 0", "-", format!("{}", d[3]), d[3] < 0.0),
        Verdict::check("dpi_UE/dc_bar_L > 0", "+", format!("{}", d[4]), d[4] > 0.0),
        Verdict::check("dpi_LE/dc_bar_L < 0", "-", format!("{}", d[5]), d[5] < 0.0),
        Verdict::check("dCS_U/dc_bar_L < 0", "-", format!("{}", d[6]), d[6] < 0.0),
        Verdict::check("dCS_L/dc_bar_L < 0", "-", format!("{}", d[7]), d[7] < 0.0),
    ];
    Ok(assemble(Parameter::CBarL, d, &fd, verdicts))
}

/// Statics with respect to the added value.
pub fn specific_statics_r(model: &Model) -> Result<StaticsReport> {
    let p = model.prob().p;
    let a_r = model.alpha().d_r;
    let d = closed_form_derivatives(model, p, a_r);
    let fd = fd_statics(closed_form_solver, model, Parameter::R, FD_STEP)?;
    let verdicts = vec![
        Verdict::check(
            "dp_LE/dR > dp_UE/dR > 0",
            "2(P + alpha_R)/3 > (P + alpha_R)/3 > 0",
            format!("{} > {} > 0", d[1], d[0]),
            d[1] > d[0] && d[0] > 0.0,
        ),
        Verdict::check("dCS_U/dR < 0", "-", format!("{}", d[6]), d[6] < 0.0),
        Verdict::report("dX_UE/dR", format!("{}", d[2])),
        Verdict::report("dX_LE/dR", format!("{}", d[3])),
        Verdict::report("dpi_UE/dR", format!("{}", d[4])),
        Verdict::report("dpi_LE/dR", format!("{}", d[5])),
        Verdict::report("dCS_L/dR", format!("{}", d[7])),
    ];
    Ok(assemble(Parameter::R, d, &fd, verdicts))
}

/// Marginal equilibrium profit of L in `G`, written out as a probability
/// channel plus a cost channel:
/// `P' (p^LE - c^L)/P (1/3 + X^UE) + alpha_G (1/S) [-(2/3)(p^LE - c^L)]`.
pub fn profit_l_guidance_slope(model: &Model) -> f64 {
    let eq = closed_form_equilibrium(model);
    let pr = model.prob();
    let s = model.spread();
    let margin = eq.p_le - model.unit_costs().c_l;
    let probability = pr.dp * margin / pr.p * (1.0 / 3.0 + (eq.p_le - eq.p_ue) / s);
    let cost = model.alpha().d_g / s * (-2.0 / 3.0 * margin);
    probability + cost
}

/// Statics with respect to administrative guidance.
pub fn specific_statics_g(model: &Model) -> Result<StaticsReport> {
    let r = model.market.r;
    let push = model.prob().dp * r + model.alpha().d_g;
    let mut d = closed_form_derivatives(model, model.prob().dp * r, model.alpha().d_g);
    d[5] = profit_l_guidance_slope(model);
    let fd = fd_statics(closed_form_solver, model, Parameter::G, FD_STEP)?;
    let same_sign = sign_word(d[0]) == sign_word(push) && sign_word(d[1]) == sign_word(push);
    let verdicts = vec![
        Verdict::check(
            "sign(dp_UE/dG) = sign(dp_LE/dG) = sign(P'R + dalpha/dG)",
            sign_word(push),
            format!("({}, {}) vs {}", d[0], d[1], push),
            same_sign,
        ),
        Verdict::check("dX_UE/dG < 0", "-", format!("{}", d[2]), d[2] < 0.0),
        Verdict::check("dX_LE/dG > 0", "+", format!("{}", d[3]), d[3] > 0.0),
        Verdict::check("dpi_LE/dG > 0", "+", format!("{}", d[5]), d[5] > 0.0),
        Verdict::report("dpi_UE/dG", format!("{}", d[4])),
        Verdict::report("dCS_U/dG", format!("{}", d[6])),
        Verdict::report("dCS_L/dG", format!("{}", d[7])),
    ];
    Ok(assemble(Parameter::G, d, &fd, verdicts))
}

pub fn specific_statics(model: &Model, param: Parameter) -> Result<StaticsReport> {
    match param {
        Parameter::CBarL => specific_statics_cbarl(model),
        Parameter::R => specific_statics_r(model),
        Parameter::G => specific_statics_g(model),
    }
}

/// Price derivatives from the implicit-function system at an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenericStatics {
    pub parameter: Parameter,
    /// `(dp^UE/dt, dp^LE/dt)` with all second partials kept.
    pub full: [f64; 2],
    /// The same with `d2 X^j / dp^j dt` dropped.
    pub approx: [f64; 2],
    pub det_j: f64,
}

impl GenericStatics {
    /// `full - approx`, the error of neglecting the cross partials.
    pub fn gap(&self) -> [f64; 2] {
        [self.full[0] - self.approx[0], self.full[1] - self.approx[1]]
    }

    /// Which way the two prices move.
    pub fn direction(&self) -> PriceDirection {
        match (self.full[0] > 0.0, self.full[1] > 0.0, self.full[0] < 0.0, self.full[1] < 0.0) {
            (true, true, _, _) => PriceDirection::BothRise,
            (_, _, true, true) => PriceDirection::BothFall,
            _ => PriceDirection::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceDirection {
    BothRise,
    BothFall,
    Mixed,
}

/// Solves `J dP = -C dc_bar_L - R dR - G dG` for one parameter by Cramer's rule.
pub fn nonspecific_statics(system: &dyn DemandSystem, prices: Prices, param: Parameter) -> Result<GenericStatics> {
    let sq = stability_quantities(system, prices);
    if !(sq.det_j > 0.0) {
        return Err(Error::UnstableEquilibrium(sq.det_j));
    }
    let e = system.eval(prices);
    let c = system.costs();
    let mu = prices.u - c.c_u;
    let ml = prices.l - c.c_l;
    let j = [[sq.b + e.dp[0][0], sq.a], [sq.c, sq.d + e.dp[1][1]]];

    // (cross-partial part, remainder) of d2 pi^j / dp^j dt
    let (u_cross, u_rest, l_cross, l_rest) = match param {
        Parameter::CBarL => (0.0, 0.0, 0.0, -e.dp[1][1] * c.dcl_dcbar_l),
        Parameter::R => (e.dpr[0][0] * mu, e.dr[0], e.dpr[1][1] * ml, -e.dp[1][1] * c.dcl_dr + e.dr[1]),
        Parameter::G => (e.dpg[0][0] * mu, e.dg[0], e.dpg[1][1] * ml, -e.dp[1][1] * c.dcl_dg + e.dg[1]),
    };
    let full = numeric::solve2(j, [-(u_cross + u_rest), -(l_cross + l_rest)]).ok_or(Error::SingularJacobian(sq.det_j))?;
    let approx = numeric::solve2(j, [-u_rest, -l_rest]).ok_or(Error::SingularJacobian(sq.det_j))?;
    Ok(GenericStatics { parameter: param, full, approx, det_j: sq.det_j })
}

/// The specific model's equilibrium pushed through [`nonspecific_statics`].
pub fn nonspecific_statics_specific(model: &Model, param: Parameter) -> Result<GenericStatics> {
    let eq = closed_form_equilibrium(model);
    nonspecific_statics(&SpecificDemand::new(*model), eq.prices(), param)
}

/// Direction of both prices for every parameter in a generic system. The
/// orderings are conditional there, so each entry reports its branch
/// without a pass/fail mark.
pub fn branch_report(system: &dyn DemandSystem, prices: Prices) -> Result<Vec<Verdict>> {
    Parameter::ALL
        .iter()
        .map(|&p| {
            let g = nonspecific_statics(system, prices, p)?;
            let [du, dl] = g.full;
            let ordering = if dl > du { "dp_LE > dp_UE" } else { "dp_LE <= dp_UE" };
            Ok(Verdict::report(
                format!("prices in {p}"),
                format!("{:?}, {ordering} ({du}, {dl}), approximation gap {:?}", g.direction(), g.gap()),
            ))
        })
        .collect()
}

/// Machine-checkable forms of the three price propositions.
pub fn proposition_suite(model: &Model) -> Result<Vec<Verdict>> {
    let first = |r: StaticsReport| r.verdicts.into_iter().next().expect("headline verdict");
    Ok(vec![
        first(specific_statics_cbarl(model)?),
        first(specific_statics_r(model)?),
        first(specific_statics_g(model)?),
    ])
}
