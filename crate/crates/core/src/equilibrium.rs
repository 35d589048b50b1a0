//! Bertrand-Nash equilibria: closed form for the specific system, damped
//! best-response iteration and 2-D Newton for any [`DemandSystem`], the
//! stability quantities, and reaction / iso-profit curve data.

use std::fmt;

use crate::demand::{DemandSystem, SpecificDemand};
use crate::error::{Error, Result};
use crate::model::{ConditionReport, Model};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Producer {
    /// The major producer in the urban area.
    U,
    /// The producer in the local area.
    L,
}

impl Producer {
    pub fn index(self) -> usize {
        match self {
            Producer::U => 0,
            Producer::L => 1,
        }
    }

    pub fn rival(self) -> Producer {
        match self {
            Producer::U => Producer::L,
            Producer::L => Producer::U,
        }
    }
}

impl fmt::Display for Producer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Producer::U => "U",
            Producer::L => "L",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prices {
    pub u: f64,
    pub l: f64,
}

impl Prices {
    pub fn new(u: f64, l: f64) -> Self {
        Self { u, l }
    }

    pub fn get(&self, producer: Producer) -> f64 {
        match producer {
            Producer::U => self.u,
            Producer::L => self.l,
        }
    }

    pub fn with(mut self, producer: Producer, price: f64) -> Self {
        match producer {
            Producer::U => self.u = price,
            Producer::L => self.l = price,
        }
        self
    }

    pub fn max_abs_diff(&self, other: &Prices) -> f64 {
        (self.u - other.u).abs().max((self.l - other.l).abs())
    }
}

impl fmt::Display for Prices {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    ClosedForm,
    Iterative,
    Newton,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::ClosedForm => "closed-form",
            SolveMethod::Iterative => "iterative",
            SolveMethod::Newton => "newton",
        })
    }
}

/// A second-stage equilibrium with everything it induces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub p_ue: f64,
    pub p_le: f64,
    pub x_ue: f64,
    pub x_le: f64,
    pub pi_ue: f64,
    pub pi_le: f64,
    /// Conditions 1-3; only defined for the specific system.
    pub conditions: Option<ConditionReport>,
    pub method: SolveMethod,
    /// `max |FOC|` at the solution.
    pub residual: f64,
    pub iterations: usize,
}

impl Equilibrium {
    pub fn from_prices(system: &dyn DemandSystem, prices: Prices, method: SolveMethod, iterations: usize) -> Self {
        let e = system.eval(prices);
        let c = system.costs();
        let residual = foc_vector(system, prices).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self {
            p_ue: prices.u,
            p_le: prices.l,
            x_ue: e.x[0],
            x_le: e.x[1],
            pi_ue: (prices.u - c.c_u) * e.x[0],
            pi_le: (prices.l - c.c_l) * e.x[1],
            conditions: system.conditions(prices),
            method,
            residual,
            iterations,
        }
    }

    pub fn prices(&self) -> Prices {
        Prices::new(self.p_ue, self.p_le)
    }

    /// True unless conditions 1-3 are defined and one of them fails.
    pub fn conditions_ok(&self) -> bool {
        self.conditions.is_none_or(|c| c.all_hold())
    }
}

fn foc_vector(system: &dyn DemandSystem, prices: Prices) -> [f64; 2] {
    [system.foc(Producer::U, prices), system.foc(Producer::L, prices)]
}

/// Equilibrium of the specific model from the explicit price formulas
/// `p^UE = (S + K)/3 + c_bar`, `p^LE = 2(S + K)/3 + c_bar`, where
/// `S = P(G) R` and `K = c_bar_L + alpha(R, G)`.
pub fn closed_form_equilibrium(model: &Model) -> Equilibrium {
    let s = model.spread();
    let k = model.market.c_bar_l + model.alpha().value;
    let c_bar = model.market.c_bar;
    let prices = Prices::new((s + k) / 3.0 + c_bar, 2.0 * (s + k) / 3.0 + c_bar);
    Equilibrium::from_prices(&SpecificDemand::new(*model), prices, SolveMethod::ClosedForm, 0)
}

/// Closed form for the specific system, Newton from the default start otherwise.
pub fn solve_equilibrium(system: &dyn DemandSystem) -> Result<Equilibrium> {
    match system.as_specific() {
        Some(s) => Ok(closed_form_equilibrium(s.model())),
        None => solve_newton(system, default_start(system), NEWTON_TOL),
    }
}

/// `(c^U + 0.1, c^L + 0.1)`, just above cost.
pub fn default_start(system: &dyn DemandSystem) -> Prices {
    let c = system.costs();
    Prices::new(c.c_u + 0.1, c.c_l + 0.1)
}

const BR_TOL: f64 = 1e-10;
pub const NEWTON_TOL: f64 = 1e-12;

/// Price maximising `producer`'s profit against a fixed rival price.
pub fn best_response(system: &dyn DemandSystem, producer: Producer, rival: f64) -> Result<f64> {
    if !rival.is_finite() {
        return Err(Error::invalid("rival price", format!("must be finite, got {rival}")));
    }
    if let Some(p) = system.closed_form_best_response(producer, rival) {
        return Ok(p);
    }
    let j = producer.index();
    let cost = system.costs().of(producer);
    let at = |p: f64| Prices::new(0.0, 0.0).with(producer, p).with(producer.rival(), rival);
    let foc = |p: f64| system.foc(producer, at(p));
    let dfoc = |p: f64| {
        let e = system.eval(at(p));
        e.dpp[j][j][j] * (p - cost) + 2.0 * e.dp[j][j]
    };

    let scale = cost.abs().max(1.0);
    let mut lo = cost;
    let mut step = scale;
    let mut tries = 0;
    while foc(lo) <= 0.0 && tries < 60 {
        lo -= step;
        step *= 2.0;
        tries += 1;
    }
    let mut hi = cost + scale;
    step = scale;
    tries = 0;
    while foc(hi) >= 0.0 && tries < 60 {
        hi += step;
        step *= 2.0;
        tries += 1;
    }
    numeric::safeguarded_newton(foc, dfoc, lo, hi, BR_TOL, 200)
        .map(|r| r.x)
        .ok_or(Error::NoBestResponse { producer, lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeOptions {
    /// Weight on the best response, in `(0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self { damping: 1.0, tol: 1e-10, max_iter: 10_000 }
    }
}

/// Simultaneous damped best-response iteration
/// `p <- (1 - damping) p + damping BR(p)`.
pub fn solve_iterative(system: &dyn DemandSystem, init: Prices, opts: IterativeOptions) -> Result<Equilibrium> {
    if !(init.u.is_finite() && init.l.is_finite()) {
        return Err(Error::invalid("init", "prices must be finite"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::invalid("damping", format!("must lie in (0, 1], got {}", opts.damping)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let w = opts.damping;
    let mut p = init;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let bu = best_response(system, Producer::U, p.l)?;
        let bl = best_response(system, Producer::L, p.u)?;
        let next = Prices::new((1.0 - w) * p.u + w * bu, (1.0 - w) * p.l + w * bl);
        change = next.max_abs_diff(&p);
        p = next;
        if !change.is_finite() {
            break;
        }
        if change < opts.tol {
            return Ok(Equilibrium::from_prices(system, p, SolveMethod::Iterative, it));
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, last: p, change })
}

/// Jacobian of the stacked first-order conditions in `(p^U, p^L)`.
pub fn foc_jacobian(system: &dyn DemandSystem, prices: Prices) -> [[f64; 2]; 2] {
    let s = stability_quantities(system, prices);
    let e = system.eval(prices);
    [[s.b + e.dp[0][0], s.a], [s.c, s.d + e.dp[1][1]]]
}

/// Newton's method on the two first-order conditions.
pub fn solve_newton(system: &dyn DemandSystem, init: Prices, tol: f64) -> Result<Equilibrium> {
    const MAX_ITER: usize = 100;
    if !(init.u.is_finite() && init.l.is_finite()) {
        return Err(Error::invalid("init", "prices must be finite"));
    }
    let mut p = init;
    let mut f = foc_vector(system, p);
    for it in 0..=MAX_ITER {
        let res = f[0].abs().max(f[1].abs());
        if !res.is_finite() {
            return Err(Error::NonConvergence { iterations: it, last: p, change: res });
        }
        if res <= tol {
            return Ok(Equilibrium::from_prices(system, p, SolveMethod::Newton, it));
        }
        if it == MAX_ITER {
            return Err(Error::NonConvergence { iterations: it, last: p, change: res });
        }
        let j = foc_jacobian(system, p);
        let det = numeric::det2(j);
        let scale = (j[0][0] * j[1][1]).abs() + (j[0][1] * j[1][0]).abs();
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::SingularJacobian(det));
        }
        let step = numeric::solve2(j, [-f[0], -f[1]]).ok_or(Error::SingularJacobian(det))?;
        p = Prices::new(p.u + step[0], p.l + step[1]);
        f = foc_vector(system, p);
    }
    unreachable!("loop returns on its last iteration")
}

/// The composite demand-curvature terms of the stability condition and the
/// reaction-curve slopes derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityQuantities {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub det_j: f64,
    /// `0 < a < -b` and `0 < c < -d`.
    pub cond4_strict: bool,
    /// As above with equality allowed.
    pub cond4_weak: bool,
    /// `dp^U/dp^L` along U's reaction curve; `None` when its denominator is zero.
    pub slope_u: Option<f64>,
    /// `dp^U/dp^L` along L's reaction curve.
    pub slope_l: Option<f64>,
}

pub fn stability_quantities(system: &dyn DemandSystem, prices: Prices) -> StabilityQuantities {
    let e = system.eval(prices);
    let cost = system.costs();
    let mu = prices.u - cost.c_u;
    let ml = prices.l - cost.c_l;
    let a = e.dp[0][1] + e.dpp[0][0][1] * mu;
    let b = e.dp[0][0] + e.dpp[0][0][0] * mu;
    let c = e.dp[1][0] + e.dpp[1][1][0] * ml;
    let d = e.dp[1][1] + e.dpp[1][1][1] * ml;
    let ju = b + e.dp[0][0];
    let jl = d + e.dp[1][1];
    let det_j = ju * jl - a * c;

    let tie = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    let strictly_below = |x: f64, y: f64| x < y && !tie(x, y);
    let weakly_below = |x: f64, y: f64| x < y || tie(x, y);
    let cond4_strict = a > 0.0 && strictly_below(a, -b) && c > 0.0 && strictly_below(c, -d);
    let cond4_weak = a > 0.0 && weakly_below(a, -b) && c > 0.0 && weakly_below(c, -d);

    StabilityQuantities {
        a,
        b,
        c,
        d,
        det_j,
        cond4_strict,
        cond4_weak,
        slope_u: (ju != 0.0).then(|| -a / ju),
        slope_l: (c != 0.0).then(|| -jl / c),
    }
}

/// `(rival price, best response)` pairs.
pub fn reaction_curve_points(system: &dyn DemandSystem, producer: Producer, rival_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    rival_grid
        .iter()
        .map(|&r| best_response(system, producer, r).map(|p| (r, p)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoProfitPoint {
    /// Price of the producer whose profit is held fixed.
    pub own: f64,
    /// Rival price that keeps the profit at the requested level.
    pub rival: f64,
    /// `d rival / d own` along the curve.
    pub slope: f64,
    /// `d2 rival / d own2`, from the general curvature expression.
    pub curvature: f64,
    /// Explicit curvature formula of the specific system, when available.
    pub curvature_closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IsoProfitCurve {
    pub points: Vec<IsoProfitPoint>,
    /// Own prices at which the level could not be attained.
    pub skipped: Vec<f64>,
}

/// Contour `pi^j = level` traced over a grid of the producer's own price.
pub fn iso_profit_points(system: &dyn DemandSystem, producer: Producer, level: f64, own_grid: &[f64]) -> IsoProfitCurve {
    let mut out = IsoProfitCurve::default();
    for &own in own_grid {
        match iso_profit_point(system, producer, level, own) {
            Some(pt) => out.points.push(pt),
            None => out.skipped.push(own),
        }
    }
    out
}

fn iso_profit_point(system: &dyn DemandSystem, producer: Producer, level: f64, own: f64) -> Option<IsoProfitPoint> {
    let j = producer.index();
    let k = producer.rival().index();
    let cost = system.costs().of(producer);
    let margin = own - cost;
    if !(margin > 0.0) || !own.is_finite() {
        return None;
    }
    let at = |rival: f64| Prices::new(0.0, 0.0).with(producer, own).with(producer.rival(), rival);
    let gap = |rival: f64| system.profit(producer, at(rival)) - level;
    let dgap = |rival: f64| margin * system.eval(at(rival)).dp[j][k];

    // profit rises with the rival price, so walk down for a negative gap and up for a positive one
    let scale = own.abs().max(1.0);
    let (mut lo, mut hi) = (own, own);
    let mut step = 0.1 * scale;
    for _ in 0..80 {
        if gap(lo) < 0.0 {
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    step = 0.1 * scale;
    for _ in 0..80 {
        if gap(hi) > 0.0 {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    let root = numeric::safeguarded_newton(gap, dgap, lo, hi, 1e-13, 200)?;
    let rival = root.x;
    let prices = at(rival);
    let e = system.eval(prices);
    let sq = stability_quantities(system, prices);

    // first-order condition of the producer whose profit is fixed
    let focv = e.x[j] + margin * e.dp[j][j];
    let cross = e.dp[j][k];
    let slope = -focv / (margin * cross);
    let (own_term, mixed) = match producer {
        Producer::U => (e.dp[0][0] + sq.b, sq.a),
        Producer::L => (e.dp[1][1] + sq.d, sq.c),
    };
    let curvature = (-own_term * margin * cross * cross + 2.0 * mixed * cross * focv - focv * focv * e.dpp[j][k][k])
        / (margin * margin * cross.powi(3));
    let curvature_closed_form = system
        .as_specific()
        .map(|s| 2.0 * s.model().spread() * level / margin.powi(3));
    Some(IsoProfitPoint { own, rival, slope, curvature, curvature_closed_form })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{linear_demand, specific_demand, LinearDemandParams};
    use approx::assert_relative_eq;

    fn linear() -> crate::demand::LinearDemand {
        let model = Model::baseline().with_r(1.0);
        linear_demand(LinearDemandParams { a: 2.0, b: 1.0, c: 0.5, m: 0.1, n: 0.1 }, &model).unwrap()
    }

    #[test]
    fn baseline_closed_form() {
        let eq = closed_form_equilibrium(&Model::baseline());
        assert_relative_eq!(eq.p_ue, 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(eq.p_le, 5.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(eq.x_ue, 5.0 / 12.0, epsilon = 1e-14);
        assert_relative_eq!(eq.x_le, 7.0 / 12.0, epsilon = 1e-14);
        assert_relative_eq!(eq.pi_ue, 5.0 / 36.0, epsilon = 1e-14);
        assert_relative_eq!(eq.pi_le, 49.0 / 180.0, epsilon = 1e-14);
        assert!(eq.residual <= 1e-12);
        assert!(eq.conditions_ok());
    }

    #[test]
    fn closed_form_without_cost_gap_splits_one_third() {
        for r in [0.5, 2.0, 7.0] {
            let mut m = Model::baseline().with_r(r);
            m.market.c_bar_l = 0.0;
            m.policy.a_r = 0.0;
            let eq = closed_form_equilibrium(&m);
            assert_relative_eq!(eq.x_ue, 1.0 / 3.0, epsilon = 1e-14);
            assert_relative_eq!(eq.x_le, 2.0 / 3.0, epsilon = 1e-14);
        }
        let eq = closed_form_equilibrium(&Model::baseline().with_c_bar_l(0.3));
        assert_relative_eq!(eq.p_ue, 1.4, epsilon = 1e-14);
        assert_relative_eq!(eq.p_le, 1.8, epsilon = 1e-14);
    }

    #[test]
    fn best_responses() {
        let m = Model::baseline();
        let sys = specific_demand(&m);
        assert_relative_eq!(best_response(&sys, Producer::U, 5.0 / 3.0).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(best_response(&sys, Producer::U, m.market.c_bar).unwrap(), m.market.c_bar);

        let lin = linear();
        let p = best_response(&lin, Producer::U, 2.0).unwrap();
        assert!((p - 1.95).abs() < 1e-10, "{p}");
        assert!(best_response(&lin, Producer::U, f64::NAN).is_err());
    }

    #[test]
    fn iteration_converges_from_below() {
        let sys = specific_demand(&Model::baseline());
        let eq = solve_iterative(&sys, Prices::new(1.2, 1.5), IterativeOptions::default()).unwrap();
        assert!(eq.iterations <= 60);
        assert!((eq.p_ue - 4.0 / 3.0).abs() < 1e-9);
        assert!((eq.p_le - 5.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_from_the_fixed_point_takes_one_step() {
        let eq0 = closed_form_equilibrium(&Model::baseline());
        let sys = specific_demand(&Model::baseline());
        let eq = solve_iterative(&sys, eq0.prices(), IterativeOptions::default()).unwrap();
        assert_eq!(eq.iterations, 1);
        assert!(eq.prices().max_abs_diff(&eq0.prices()) < 1e-15);
    }

    #[test]
    fn iteration_reports_non_convergence() {
        let sys = specific_demand(&Model::baseline());
        let opts = IterativeOptions { max_iter: 3, ..IterativeOptions::default() };
        match solve_iterative(&sys, Prices::new(1.0, 1.0), opts) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn newton_matches_closed_form() {
        let sys = specific_demand(&Model::baseline());
        let eq = solve_newton(&sys, Prices::new(1.1, 1.9), NEWTON_TOL).unwrap();
        assert!(eq.residual <= 1e-12);
        assert!((eq.p_ue - 4.0 / 3.0).abs() < 1e-12);
        assert!((eq.p_le - 5.0 / 3.0).abs() < 1e-12);
        let again = solve_newton(&sys, eq.prices(), NEWTON_TOL).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn linear_solvers_agree() {
        let lin = linear();
        let n = solve_newton(&lin, default_start(&lin), NEWTON_TOL).unwrap();
        let i = solve_iterative(&lin, default_start(&lin), IterativeOptions::default()).unwrap();
        assert!(n.prices().max_abs_diff(&i.prices()) < 1e-8);
    }

    #[test]
    fn stability_at_baseline() {
        let sys = specific_demand(&Model::baseline());
        let s = stability_quantities(&sys, Prices::new(4.0 / 3.0, 5.0 / 3.0));
        assert_relative_eq!(s.a, 1.25, epsilon = 1e-14);
        assert_relative_eq!(s.b, -1.25, epsilon = 1e-14);
        assert_relative_eq!(s.c, 1.25, epsilon = 1e-14);
        assert_relative_eq!(s.d, -1.25, epsilon = 1e-14);
        assert_relative_eq!(s.det_j, 4.6875, epsilon = 1e-13);
        assert!(s.cond4_weak && !s.cond4_strict);
        assert_relative_eq!(s.slope_l.unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.slope_u.unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn stability_linear_is_strict() {
        let lin = linear();
        let s = stability_quantities(&lin, Prices::new(1.5, 1.5));
        assert_eq!((s.a, s.b), (0.5, -1.0));
        assert!(s.cond4_strict);
        assert!(s.det_j > 0.0);
        assert!(s.slope_l.unwrap() > s.slope_u.unwrap());
    }

    #[test]
    fn reaction_curves() {
        let sys = specific_demand(&Model::baseline());
        let pts = reaction_curve_points(&sys, Producer::U, &[1.0, 1.5, 2.0]).unwrap();
        assert_eq!(pts, vec![(1.0, 1.0), (1.5, 1.25), (2.0, 1.5)]);
        assert_eq!(reaction_curve_points(&sys, Producer::L, &[1.3]).unwrap().len(), 1);
        // curves cross at the equilibrium
        let eq = closed_form_equilibrium(&Model::baseline());
        let bu = best_response(&sys, Producer::U, eq.p_le).unwrap();
        let bl = best_response(&sys, Producer::L, eq.p_ue).unwrap();
        assert_relative_eq!(bu, eq.p_ue, epsilon = 1e-14);
        assert_relative_eq!(bl, eq.p_le, epsilon = 1e-14);
    }

    #[test]
    fn iso_profit_curvature_at_equilibrium() {
        let model = Model::baseline();
        let sys = specific_demand(&model);
        let eq = closed_form_equilibrium(&model);
        let curve = iso_profit_points(&sys, Producer::U, eq.pi_ue, &[eq.p_ue, 1.0]);
        assert_eq!(curve.skipped, vec![1.0]);
        let pt = curve.points[0];
        assert_relative_eq!(pt.rival, eq.p_le, epsilon = 1e-12);
        assert_relative_eq!(pt.curvature_closed_form.unwrap(), 6.0, epsilon = 1e-12);
        assert!((pt.curvature - 6.0).abs() < 1e-6);
        assert!(pt.slope.abs() < 1e-10);
    }

    #[test]
    fn iso_profit_l_curvature_matches_both_ways() {
        let model = Model::baseline();
        let sys = specific_demand(&model);
        let eq = closed_form_equilibrium(&model);
        let grid: Vec<f64> = (0..9).map(|i| 1.4 + 0.05 * i as f64).collect();
        let curve = iso_profit_points(&sys, Producer::L, eq.pi_le, &grid);
        assert!(!curve.points.is_empty());
        for pt in &curve.points {
            let closed = pt.curvature_closed_form.unwrap();
            assert!(closed > 0.0);
            assert!((pt.curvature - closed).abs() <= 1e-6 * closed.abs().max(1.0));
        }
    }
}
