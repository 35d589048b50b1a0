//! Extension in which producer L also chooses its added value `R`.
//!
//! With `alpha(R, G) = a_R R exp(-lambda_alpha G)` linear in `R`, the three
//! first-order conditions reduce to
//! `R_E = c_bar_L / (2 alpha_R - P)`, `p_LE = c_bar + 2 alpha_R R_E` and
//! `p_UE = c_bar + alpha_R R_E`.

use crate::error::{Error, Result};
use crate::equilibrium::Prices;
use crate::model::{thresholds, ConditionReport, Model};
use crate::numeric::{self, Stencil};

/// Residual tolerance on the reduced first-order conditions.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `|P - 2 alpha_R|` below this is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Perturbation for re-solve derivatives.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedEquilibrium {
    pub p_ue: f64,
    pub p_le: f64,
    pub r_e: f64,
    pub x_ue: f64,
    pub x_le: f64,
    pub pi_ue: f64,
    pub pi_le: f64,
    /// `P(G) - 2 dalpha/dR`.
    pub det_j3: f64,
    /// `d2 pi^L / dR2` at the solution.
    pub soc: f64,
    pub soc_ok: bool,
    /// Residuals of the U price rule, the L price rule and the reduced `R` rule.
    pub residuals: [f64; 3],
    pub conditions: ConditionReport,
}

impl ExtendedEquilibrium {
    pub fn prices(&self) -> Prices {
        Prices::new(self.p_ue, self.p_le)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

/// `(P(G), dalpha/dR)` at the model's guidance level.
fn slopes(model: &Model) -> (f64, f64) {
    (model.prob().p, model.policy.a_r * (-model.policy.lambda_alpha * model.market.g).exp())
}

/// Residuals of the reduced system at `(p^U, p^L, R)`.
pub fn reduced_residuals(model: &Model, x: [f64; 3]) -> [f64; 3] {
    let [pu, pl, r] = x;
    let (p, alpha_r) = slopes(model);
    let c_bar = model.market.c_bar;
    let c_l = c_bar + model.market.c_bar_l + alpha_r * r;
    [
        pl + c_bar - 2.0 * pu,
        p * r + pu + c_l - 2.0 * pl,
        (pl - pu) - alpha_r * r,
    ]
}

/// Solves for the interior equilibrium with endogenous `R`.
pub fn solve_extended(model: &Model) -> Result<ExtendedEquilibrium> {
    let (p, alpha_r) = slopes(model);
    let det_j3 = p - 2.0 * alpha_r;
    if det_j3.abs() < SINGULAR_TOL {
        return Err(Error::SingularJacobian(det_j3));
    }
    let c_bar_l = model.market.c_bar_l;
    let r_e = c_bar_l / -det_j3;
    if !(r_e > 0.0) {
        let reason = if c_bar_l <= 0.0 {
            format!("c_bar_L = {c_bar_l} puts R_E on the zero boundary")
        } else {
            format!("2 dalpha/dR = {} < P(G) = {p}, so R_E = {r_e} is not positive", 2.0 * alpha_r)
        };
        return Err(Error::NoInteriorSolution(reason));
    }
    let c_bar = model.market.c_bar;
    let p_le = c_bar + 2.0 * alpha_r * r_e;
    let p_ue = c_bar + alpha_r * r_e;
    Ok(assemble(model, p_ue, p_le, r_e))
}

fn assemble(model: &Model, p_ue: f64, p_le: f64, r_e: f64) -> ExtendedEquilibrium {
    let (p, alpha_r) = slopes(model);
    let s = p * r_e;
    let c_bar = model.market.c_bar;
    let c_l = c_bar + model.market.c_bar_l + alpha_r * r_e;
    let x_ue = (p_le - p_ue) / s;
    let soc = -2.0 * (p_le - p_ue) / (p * r_e * r_e) * (alpha_r + (p_le - c_l) / r_e);
    let prices = Prices::new(p_ue, p_le);
    let conditions = thresholds(&model.with_r(r_e), prices).expect("positive spread at an interior solution");
    ExtendedEquilibrium {
        p_ue,
        p_le,
        r_e,
        x_ue,
        x_le: 1.0 - x_ue,
        pi_ue: (p_ue - c_bar) * x_ue,
        pi_le: (p_le - c_l) * (1.0 - x_ue),
        det_j3: p - 2.0 * alpha_r,
        soc,
        soc_ok: soc < 0.0,
        residuals: reduced_residuals(model, [p_ue, p_le, r_e]),
        conditions,
    }
}

/// Profit of L as a function of `(p^U, p^L, R)`.
pub fn profit_l(model: &Model, x: [f64; 3]) -> f64 {
    let [pu, pl, r] = x;
    let (p, alpha_r) = slopes(model);
    let c_l = model.market.c_bar + model.market.c_bar_l + alpha_r * r;
    (pl - c_l) * (1.0 - (pl - pu) / (p * r))
}

/// Profit of U as a function of `(p^U, p^L, R)`.
pub fn profit_u(model: &Model, x: [f64; 3]) -> f64 {
    let [pu, pl, r] = x;
    (pu - model.market.c_bar) * (pl - pu) / (model.prob().p * r)
}

/// First-order conditions straight from the profit functions, without the
/// reduction that uses L's price rule.
pub fn raw_residuals(model: &Model, x: [f64; 3]) -> [f64; 3] {
    let [pu, pl, r] = x;
    let (p, alpha_r) = slopes(model);
    let s = p * r;
    let c_bar = model.market.c_bar;
    let c_l = c_bar + model.market.c_bar_l + alpha_r * r;
    let x_l = 1.0 - (pl - pu) / s;
    [
        ((pl - pu) - (pu - c_bar)) / s,
        x_l - (pl - c_l) / s,
        (pl - c_l) * (pl - pu) / (p * r * r) - alpha_r * x_l,
    ]
}

/// Damped Newton on [`raw_residuals`] with a difference Jacobian.
pub fn solve_extended_newton(model: &Model, start: [f64; 3], tol: f64, max_iter: usize) -> Result<ExtendedEquilibrium> {
    let norm = |v: [f64; 3]| v.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let mut x = start;
    let mut f = raw_residuals(model, x);
    for it in 0..max_iter {
        if norm(f) < tol {
            let e = assemble(model, x[0], x[1], x[2]);
            if !(e.x_le > tol.sqrt()) {
                return Err(Error::NoInteriorSolution(format!("converged to a point where L sells {}", e.x_le)));
            }
            return Ok(e);
        }
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let h = numeric::step_for(x[k], 1e-7);
            let (mut up, mut dn) = (x, x);
            up[k] += h;
            dn[k] -= h;
            let (fu, fd) = (raw_residuals(model, up), raw_residuals(model, dn));
            for i in 0..3 {
                jac[i][k] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let dx = numeric::solve3(jac, [-f[0], -f[1], -f[2]]).ok_or(Error::SingularJacobian(numeric::det3(jac)))?;
        let mut t = 1.0;
        loop {
            let trial = [x[0] + t * dx[0], x[1] + t * dx[1], x[2] + t * dx[2]];
            if trial[2] > 0.0 {
                let ft = raw_residuals(model, trial);
                if norm(ft) < norm(f) || t < 1e-6 {
                    x = trial;
                    f = ft;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NonConvergence { iterations: it, last: Prices::new(x[0], x[1]), change: norm(f) });
            }
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, last: Prices::new(x[0], x[1]), change: norm(f) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedJacobian {
    /// Rows: U price rule, L price rule, reduced `R` rule; columns `(p^U, p^L, R)`.
    pub matrix: [[f64; 3]; 3],
    pub det_matrix: f64,
    /// `P(G) - 2 dalpha/dR`.
    pub det_j3: f64,
    /// `det_matrix / det_j3`; one for this family.
    pub factor: f64,
    pub singular: bool,
}

/// The matrix of the totally differentiated system, which depends only on
/// `P(G)` and `dalpha/dR`.
pub fn jacobian_from_slopes(p: f64, alpha_r: f64) -> ExtendedJacobian {
    let matrix = [[-2.0, 1.0, 0.0], [1.0, -2.0, p + alpha_r], [-1.0, 1.0, -alpha_r]];
    let det_matrix = numeric::det3(matrix);
    let det_j3 = p - 2.0 * alpha_r;
    let singular = det_j3.abs() < SINGULAR_TOL;
    ExtendedJacobian { matrix, det_matrix, det_j3, factor: if singular { f64::NAN } else { det_matrix / det_j3 }, singular }
}

pub fn extended_jacobian(model: &Model) -> ExtendedJacobian {
    let (p, alpha_r) = slopes(model);
    jacobian_from_slopes(p, alpha_r)
}

/// `(dp^UE, dp^LE, dR^E) / dc_bar_L` from the linear system alone.
pub fn triple_from_slopes(p: f64, alpha_r: f64) -> Result<[f64; 3]> {
    let j = jacobian_from_slopes(p, alpha_r);
    if j.singular {
        return Err(Error::SingularJacobian(j.det_j3));
    }
    numeric::solve3(j.matrix, [0.0, -1.0, 0.0]).ok_or(Error::SingularJacobian(j.det_matrix))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedStatics {
    /// `(dp^UE, dp^LE, dR^E) / dc_bar_L` by Cramer's rule.
    pub cramer: [f64; 3],
    /// The same by re-solved central differences.
    pub fd: [f64; 3],
    /// `(alpha_R, -2 alpha_R, -1) / |J|` as commonly displayed.
    pub displayed: [f64; 3],
    pub displayed_agrees: [bool; 3],
    /// `(dX^UE, dX^LE) / dc_bar_L` by re-solve.
    pub demand_slope: [f64; 2],
    /// `P(G) < 2 dalpha/dR`.
    pub steep_cost: bool,
    pub all_positive: bool,
    pub all_negative: bool,
}

impl ExtendedStatics {
    /// The triple is positive exactly in the steep-cost case and negative otherwise.
    pub fn sign_pattern_ok(&self) -> bool {
        if self.steep_cost {
            self.all_positive
        } else {
            self.all_negative
        }
    }
}

pub fn extended_statics_cbarl(model: &Model) -> Result<ExtendedStatics> {
    let base = solve_extended(model)?;
    let (p, alpha_r) = slopes(model);
    let cramer = triple_from_slopes(p, alpha_r)?;
    let c = model.market.c_bar_l;
    let h = FD_STEP * c.abs().max(1.0);
    let up = solve_extended(&model.with_c_bar_l(c + h))?;
    let dn = solve_extended(&model.with_c_bar_l(c - h))?;
    let d = |a: f64, b: f64| (a - b) / (2.0 * h);
    let fd = [d(up.p_ue, dn.p_ue), d(up.p_le, dn.p_le), d(up.r_e, dn.r_e)];
    let det = base.det_j3;
    let displayed = [alpha_r / det, -2.0 * alpha_r / det, -1.0 / det];
    let displayed_agrees = [0, 1, 2].map(|i| numeric::close(displayed[i], cramer[i], 1e-12, 1e-15));
    Ok(ExtendedStatics {
        cramer,
        fd,
        displayed,
        displayed_agrees,
        demand_slope: [d(up.x_ue, dn.x_ue), d(up.x_le, dn.x_le)],
        steep_cost: p < 2.0 * alpha_r,
        all_positive: cramer.iter().all(|v| *v > 0.0),
        all_negative: cramer.iter().all(|v| *v < 0.0),
    })
}

/// Re-solve derivatives of `(p^UE, p^LE, R^E)` in `G`; one-sided at zero.
pub fn extended_statics_g(model: &Model) -> Result<([f64; 3], Stencil)> {
    let g = model.market.g;
    let h = FD_STEP * g.abs().max(1.0);
    let at = |x: f64| -> Result<[f64; 3]> {
        let e = solve_extended(&model.with_g(x))?;
        Ok([e.p_ue, e.p_le, e.r_e])
    };
    let f0 = at(g)?;
    if g - h >= 0.0 {
        if let (Ok(u), Ok(d)) = (at(g + h), at(g - h)) {
            return Ok(([0, 1, 2].map(|i| (u[i] - d[i]) / (2.0 * h)), Stencil::Central));
        }
    }
    let (f1, f2) = (at(g + h)?, at(g + 2.0 * h)?);
    Ok(([0, 1, 2].map(|i| (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2.0 * h)), Stencil::Forward))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignFlip {
    /// `a_R` at which the triple changes sign, found by bisection.
    pub a_r: f64,
    /// `a_R` at which `2 dalpha/dR = P(G)`.
    pub expected: f64,
    pub triple_below: [f64; 3],
    pub triple_above: [f64; 3],
}

/// Sweeps `a_R` over `grid` and brackets every sign change of the triple.
pub fn locate_sign_flips(model: &Model, grid: &[f64]) -> Vec<SignFlip> {
    let p = model.prob().p;
    let decay = (-model.policy.lambda_alpha * model.market.g).exp();
    let triple = |a: f64| triple_from_slopes(p, a * decay).ok();
    let sign = |t: &[f64; 3]| t[2].signum();
    let mut flips = Vec::new();
    // singular grid points are stepped over so that a flip sitting on one is still bracketed
    let mut prev: Option<(f64, [f64; 3])> = None;
    for &a in grid {
        let Some(t) = triple(a) else {
            continue;
        };
        if let Some((a0, t0)) = prev {
            if sign(&t0) != sign(&t) {
                let det = |x: f64| p - 2.0 * x * decay;
                if let Some(a_r) = numeric::bisect(det, a0, a, 1e-14) {
                    flips.push(SignFlip { a_r, expected: p / (2.0 * decay), triple_below: t0, triple_above: t });
                }
            }
        }
        prev = Some((a, t));
    }
    flips
}

/// The reference scenario with an interior extended equilibrium.
pub fn reference_model() -> Model {
    use crate::model::{MarketPrimitives, PolicyFunctions};
    Model {
        market: MarketPrimitives { q: 1.5376, c_bar: 1.0, c_bar_l: 0.1, r: 0.5, g: 0.0 },
        policy: PolicyFunctions { p0: 0.4, lambda_p: 1.0, a_r: 0.3, lambda_alpha: 0.0, b_beta: 0.5 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_solution() {
        let e = solve_extended(&reference_model()).unwrap();
        assert_relative_eq!(e.r_e, 0.5, epsilon = 1e-12);
        assert_relative_eq!(e.p_le, 1.3, epsilon = 1e-12);
        assert_relative_eq!(e.p_ue, 1.15, epsilon = 1e-12);
        assert_relative_eq!(e.x_ue, 0.75, epsilon = 1e-12);
        assert_relative_eq!(e.x_le, 0.25, epsilon = 1e-12);
        assert_relative_eq!(e.det_j3, -0.2, epsilon = 1e-15);
        assert_relative_eq!(e.soc, -1.2, epsilon = 1e-12);
        assert!(e.soc_ok && e.max_residual() < RESIDUAL_TOL);
        assert!(e.conditions.all_hold());
    }

    #[test]
    fn raw_newton_agrees() {
        let m = reference_model();
        let e = solve_extended(&m).unwrap();
        let n = solve_extended_newton(&m, [1.2, 1.4, 0.8], 1e-13, 100);
        let n = n.unwrap();
        assert!((n.r_e - e.r_e).abs() < 1e-10);
        assert!((n.p_le - e.p_le).abs() < 1e-10);
        assert!((n.p_ue - e.p_ue).abs() < 1e-10);
        assert!(raw_residuals(&m, [e.p_ue, e.p_le, e.r_e]).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn soc_matches_second_difference() {
        let m = reference_model();
        let e = solve_extended(&m).unwrap();
        let fd = numeric::second_central(|r| profit_l(&m, [e.p_ue, e.p_le, r]), e.r_e, 1e-4);
        assert!((fd - e.soc).abs() < 1e-6);
    }

    #[test]
    fn baseline_has_no_interior_solution() {
        assert!(matches!(solve_extended(&Model::baseline()), Err(Error::NoInteriorSolution(_))));
        assert!(matches!(solve_extended(&reference_model().with_c_bar_l(0.0)), Err(Error::NoInteriorSolution(_))));
        let mut m = reference_model();
        m.policy.a_r = 0.2;
        assert!(matches!(solve_extended(&m), Err(Error::SingularJacobian(_))));
        assert!(extended_jacobian(&m).singular);
    }

    #[test]
    fn jacobian_determinant() {
        let j = extended_jacobian(&reference_model());
        assert_relative_eq!(j.det_j3, -0.2, epsilon = 1e-15);
        assert_relative_eq!(j.det_matrix, -0.2, epsilon = 1e-14);
        assert_relative_eq!(j.factor, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cbarl_statics() {
        let s = extended_statics_cbarl(&reference_model()).unwrap();
        for (a, b) in s.cramer.iter().zip([1.5, 3.0, 5.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        for (a, b) in s.fd.iter().zip(s.cramer.iter()) {
            assert!(numeric::close(*a, *b, 1e-5, 0.0));
        }
        assert!(s.steep_cost && s.all_positive && s.sign_pattern_ok());
        assert_eq!(s.displayed_agrees, [false, true, true]);
        assert!(s.demand_slope.iter().all(|v| v.abs() < 1e-6));
        let e = solve_extended(&reference_model().with_c_bar_l(0.11)).unwrap();
        assert_relative_eq!(e.x_ue, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn flip_at_half_probability() {
        let m = reference_model();
        let grid: Vec<f64> = (0..=40).map(|i| 0.01 + 0.49 * i as f64 / 40.0).collect();
        let flips = locate_sign_flips(&m, &grid);
        assert_eq!(flips.len(), 1);
        assert!((flips[0].a_r - 0.2).abs() < 1e-12);
        assert!(flips[0].triple_below.iter().all(|v| *v < 0.0));
        assert!(flips[0].triple_above.iter().all(|v| *v > 0.0));
        let on_grid: Vec<f64> = (0..=20).map(|i| 0.1 + 0.01 * i as f64).collect();
        let flips = locate_sign_flips(&m, &on_grid);
        assert_eq!(flips.len(), 1);
        assert!((flips[0].a_r - 0.2).abs() < 1e-12);
    }

    #[test]
    fn guidance_statics_are_finite() {
        let mut m = reference_model();
        m.policy.lambda_alpha = 0.2;
        let (d, st) = extended_statics_g(&m).unwrap();
        assert_eq!(st, Stencil::Forward);
        assert!(d.iter().all(|v| v.is_finite()));
    }
}
