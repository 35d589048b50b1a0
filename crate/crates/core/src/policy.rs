//! First stage: the local government picks guidance `G` to maximise
//! `W(G) = pi^LE(G) - beta(G)`, anticipating the second-stage equilibrium.

use crate::equilibrium::closed_form_equilibrium;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric;

/// Default upper bound on the guidance search.
pub const DEFAULT_G_MAX: f64 = 50.0;

/// Points in the pre-scan used to bracket FOC roots.
pub const SCAN_POINTS: usize = 200;

/// Step of the second difference used for `rho`.
pub const RHO_STEP: f64 = 1e-4;

/// Tolerance on the first-order condition at a returned interior optimum.
pub const FOC_TOL: f64 = 1e-8;

/// Step used when differentiating re-optimised guidance.
pub const REOPT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Welfare {
    pub w: f64,
    pub profit_l: f64,
    pub cost: f64,
    /// Conditions 1-3 hold in the second stage at this `G`.
    pub conditions_ok: bool,
}

/// `W(G) = pi^LE(G) - beta(G)`.
pub fn local_welfare(model: &Model, g: f64) -> Result<Welfare> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::invalid("G", format!("must be finite and non-negative, got {g}")));
    }
    let m = model.with_g(g);
    let eq = closed_form_equilibrium(&m);
    let cost = m.policy.beta(g);
    Ok(Welfare { w: eq.pi_le - cost, profit_l: eq.pi_le, cost, conditions_ok: eq.conditions_ok() })
}

fn welfare_value(model: &Model, g: f64) -> f64 {
    let m = model.with_g(g);
    closed_form_equilibrium(&m).pi_le - m.policy.beta(g)
}

/// Channels through which guidance raises L's equilibrium profit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalProfit {
    /// `(p^LE - c^L)/(P R) * dp^UE/dG`: the rival's price response.
    pub price: f64,
    /// `X^LE * (-dalpha/dG)`: lower unit cost.
    pub cost: f64,
    /// `(p^LE - c^L)/P * (p^LE - p^UE)/(P R) * P'`: a more likely premium.
    pub probability: f64,
}

impl MarginalProfit {
    pub fn total(&self) -> f64 {
        self.price + self.cost + self.probability
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.price, self.cost, self.probability]
    }
}

/// `dpi^LE/dG` split into its three channels at the model's own `G`.
pub fn marginal_profit_g(model: &Model) -> MarginalProfit {
    let eq = closed_form_equilibrium(model);
    let pr = model.prob();
    let al = model.alpha();
    let s = model.spread();
    let margin = eq.p_le - model.unit_costs().c_l;
    let dpu_dg = (pr.dp * model.market.r + al.d_g) / 3.0;
    MarginalProfit {
        price: margin / s * dpu_dg,
        cost: eq.x_le * -al.d_g,
        probability: margin / pr.p * (eq.p_le - eq.p_ue) / s * pr.dp,
    }
}

fn foc_value(model: &Model, g: f64) -> f64 {
    let m = model.with_g(g);
    marginal_profit_g(&m).total() - m.policy.beta_prime(g)
}

/// `d/dG` of the FOC by differences, one-sided at `G = 0`.
fn foc_slope(model: &Model, g: f64) -> f64 {
    let h = numeric::step_for(g, numeric::FD_REL_STEP);
    numeric::derivative(|x| foc_value(model, x), g, h, 0.0, f64::INFINITY).0
}

/// Second difference of `W`, central away from zero and forward near it.
pub fn welfare_curvature(model: &Model, g: f64) -> f64 {
    let h = RHO_STEP;
    let w = |x: f64| welfare_value(model, x);
    if g >= h {
        numeric::second_central(w, g, h)
    } else {
        (2.0 * w(g) - 5.0 * w(g + h) + 4.0 * w(g + 2.0 * h) - w(g + 3.0 * h)) / (h * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOptimum {
    pub g_e: f64,
    pub w_e: f64,
    /// `|dpi^LE/dG - beta'(G)|` at `g_e`.
    pub foc_residual: f64,
    pub rho: f64,
    pub decomposition: MarginalProfit,
    /// The optimum sits on `0` or `g_max`.
    pub boundary: bool,
    /// The pre-scan found more than one local maximum.
    pub multimodal: bool,
    pub conditions_ok: bool,
}

impl PolicyOptimum {
    pub fn is_interior(&self) -> bool {
        !self.boundary
    }

    /// Interior and with `rho < 0`.
    pub fn regular(&self) -> bool {
        self.is_interior() && self.rho < 0.0
    }
}

fn check_bound(g_max: f64) -> Result<()> {
    if !(g_max > 0.0) || !g_max.is_finite() {
        return Err(Error::invalid("gmax", format!("must be finite and positive, got {g_max}")));
    }
    Ok(())
}

/// Maximises local welfare over `[0, g_max]` by locating roots of the FOC.
pub fn optimize_guidance(model: &Model, g_max: f64) -> Result<PolicyOptimum> {
    check_bound(g_max)?;
    let grid: Vec<f64> = (0..=SCAN_POINTS).map(|i| g_max * i as f64 / SCAN_POINTS as f64).collect();
    let focs: Vec<f64> = grid.iter().map(|&g| foc_value(model, g)).collect();
    if focs.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateModel("first-order condition not finite on the guidance grid".into()));
    }

    // candidate maxima: downward FOC crossings plus admissible endpoints
    let mut interior = Vec::new();
    for i in 0..SCAN_POINTS {
        let (f0, f1) = (focs[i], focs[i + 1]);
        if f0 > 0.0 && f1 <= 0.0 {
            let root = numeric::safeguarded_newton(
                |g| foc_value(model, g),
                |g| foc_slope(model, g),
                grid[i],
                grid[i + 1],
                1e-14,
                200,
            )
            .ok_or_else(|| {
                Error::DegenerateModel(format!("first-order condition not refined on [{}, {}]", grid[i], grid[i + 1]))
            })?;
            interior.push(root.x);
        }
    }
    let mut boundary = Vec::new();
    if focs[0] <= 0.0 {
        boundary.push(0.0);
    }
    if focs[SCAN_POINTS] > 0.0 {
        boundary.push(g_max);
    }

    let multimodal = interior.len() + boundary.len() > 1;
    let best = interior
        .iter()
        .map(|&g| (g, false))
        .chain(boundary.iter().map(|&g| (g, true)))
        .max_by(|a, b| welfare_value(model, a.0).total_cmp(&welfare_value(model, b.0)))
        .ok_or_else(|| Error::NoInteriorSolution("no welfare maximum found on the guidance grid".into()))?;

    let (g_e, on_boundary) = best;
    let m = model.with_g(g_e);
    let w = local_welfare(model, g_e)?;
    let decomposition = marginal_profit_g(&m);
    Ok(PolicyOptimum {
        g_e,
        w_e: w.w,
        foc_residual: (decomposition.total() - m.policy.beta_prime(g_e)).abs(),
        rho: welfare_curvature(model, g_e),
        decomposition,
        boundary: on_boundary,
        multimodal,
        conditions_ok: w.conditions_ok,
    })
}

/// Direct maximisation of `W` by golden section around the best scan point.
pub fn golden_section_guidance(model: &Model, g_max: f64) -> Result<(f64, f64)> {
    check_bound(g_max)?;
    let step = g_max / SCAN_POINTS as f64;
    let best = (0..=SCAN_POINTS)
        .map(|i| step * i as f64)
        .max_by(|a, b| welfare_value(model, *a).total_cmp(&welfare_value(model, *b)))
        .expect("non-empty grid");
    let lo = (best - step).max(0.0);
    let hi = (best + step).min(g_max);
    Ok(numeric::golden_section_max(|g| welfare_value(model, g), lo, hi, 1e-12))
}

/// `d2 pi^LE / dG dc_bar_L = (1/(3 P R)) [ (2/3) alpha_G - (2/3)(c_bar_L + alpha) P'/P ]`.
pub fn cross_partial_g_cbarl(model: &Model) -> f64 {
    let pr = model.prob();
    let al = model.alpha();
    let k = model.market.c_bar_l + al.value;
    (2.0 / 3.0 * al.d_g - 2.0 / 3.0 * k * pr.dp / pr.p) / (3.0 * model.spread())
}

/// Mixed difference of `pi^LE` in `(G, t)`, one-sided in `G` at zero.
pub fn cross_partial_fd(model: &Model, set: impl Fn(&Model, f64) -> Model, t0: f64) -> f64 {
    let ht = 1e-4 * t0.abs().max(1.0);
    let g0 = model.market.g;
    let profit_slope = |g: f64| {
        let m = model.with_g(g);
        let pi = |t: f64| closed_form_equilibrium(&set(&m, t)).pi_le;
        (pi(t0 + ht) - pi(t0 - ht)) / (2.0 * ht)
    };
    numeric::derivative(profit_slope, g0, 1e-4 * g0.abs().max(1.0), 0.0, f64::INFINITY).0
}

/// Slope of the optimal guidance in a parameter by two routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceSlope {
    /// `-(1/rho) d2 pi^LE / dG dt`.
    pub implicit: f64,
    /// Central difference of re-optimised `G^E`.
    pub reoptimized: f64,
    pub cross_partial: f64,
    pub rho: f64,
}

impl GuidanceSlope {
    pub fn relative_gap(&self) -> f64 {
        (self.implicit - self.reoptimized).abs() / self.implicit.abs().max(f64::MIN_POSITIVE)
    }
}

fn interior_optimum(model: &Model, g_max: f64) -> Result<PolicyOptimum> {
    let opt = optimize_guidance(model, g_max)?;
    if opt.boundary {
        return Err(Error::NotApplicable(format!("optimal guidance {} is on the boundary", opt.g_e)));
    }
    if !(opt.rho < 0.0) {
        return Err(Error::NotApplicable(format!("welfare curvature rho = {} is not negative", opt.rho)));
    }
    Ok(opt)
}

fn guidance_slope(
    model: &Model,
    g_max: f64,
    t0: f64,
    set: impl Fn(&Model, f64) -> Model + Copy,
    cross: impl Fn(&Model) -> f64,
) -> Result<GuidanceSlope> {
    let opt = interior_optimum(model, g_max)?;
    let at_opt = model.with_g(opt.g_e);
    let cross_partial = cross(&at_opt);
    let h = REOPT_STEP * t0.abs().max(1.0);
    let up = interior_optimum(&set(model, t0 + h), g_max)?;
    let dn = interior_optimum(&set(model, t0 - h), g_max)?;
    Ok(GuidanceSlope {
        implicit: -cross_partial / opt.rho,
        reoptimized: (up.g_e - dn.g_e) / (2.0 * h),
        cross_partial,
        rho: opt.rho,
    })
}

/// How optimal guidance responds to the location inefficiency.
pub fn dge_dcbarl(model: &Model, g_max: f64) -> Result<GuidanceSlope> {
    let c = model.market.c_bar_l;
    if c < REOPT_STEP {
        return Err(Error::NotApplicable("c_bar_L too close to zero for a central re-optimisation".into()));
    }
    guidance_slope(model, g_max, c, |m, v| m.with_c_bar_l(v), cross_partial_g_cbarl)
}

/// How optimal guidance responds to the added value; no sign is implied.
pub fn dge_dr(model: &Model, g_max: f64) -> Result<GuidanceSlope> {
    let r = model.market.r;
    guidance_slope(model, g_max, r, |m, v| m.with_r(v), |m| cross_partial_fd(m, |m, v| m.with_r(v), m.market.r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn welfare_at_zero_guidance() {
        let w = local_welfare(&Model::baseline(), 0.0).unwrap();
        assert_relative_eq!(w.w, 49.0 / 180.0, epsilon = 1e-15);
        assert!(w.conditions_ok);
        assert!(local_welfare(&Model::baseline(), -1.0).is_err());
    }

    #[test]
    fn decomposition_at_baseline() {
        let d = marginal_profit_g(&Model::baseline());
        assert_relative_eq!(d.price, (7.0 / 15.0) / 0.8 * (1.15 / 3.0), epsilon = 1e-14);
        assert_relative_eq!(d.cost, 7.0 / 12.0 * 0.05, epsilon = 1e-14);
        assert_relative_eq!(d.probability, 7.0 / 6.0 * 5.0 / 12.0 * 0.6, epsilon = 1e-14);
        assert_relative_eq!(d.total(), 0.544_444_444_444, epsilon = 1e-11);
        let fd = numeric::derivative(
            |g| closed_form_equilibrium(&Model::baseline().with_g(g)).pi_le,
            0.0,
            1e-5,
            0.0,
            f64::INFINITY,
        );
        assert!((fd.0 - d.total()).abs() < 1e-8);
        assert_relative_eq!(d.total(), crate::statics::profit_l_guidance_slope(&Model::baseline()), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_policy_has_no_effect() {
        let mut m = Model::baseline();
        m.policy.p0 = 1.0;
        m.policy.lambda_alpha = 0.0;
        assert_eq!(marginal_profit_g(&m).as_array(), [0.0, 0.0, 0.0]);
        let opt = optimize_guidance(&m, DEFAULT_G_MAX).unwrap();
        assert!(opt.boundary);
        assert_eq!(opt.g_e, 0.0);
        assert!(matches!(dge_dr(&m, DEFAULT_G_MAX), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn baseline_optimum() {
        let m = Model::baseline();
        let opt = optimize_guidance(&m, DEFAULT_G_MAX).unwrap();
        assert!(opt.g_e > 0.0 && opt.is_interior() && !opt.multimodal);
        assert!(opt.foc_residual <= FOC_TOL);
        assert!(opt.rho < 0.0);
        let (g, _) = golden_section_guidance(&m, DEFAULT_G_MAX).unwrap();
        assert!((g - opt.g_e).abs() < 1e-6);
        for i in 0..=1000 {
            let x = DEFAULT_G_MAX * i as f64 / 1000.0;
            assert!(welfare_value(&m, x) <= opt.w_e + 1e-15);
        }
    }

    #[test]
    fn cheap_guidance_hits_the_bound() {
        let mut m = Model::baseline();
        m.policy.b_beta = 1e-9;
        let opt = optimize_guidance(&m, 5.0).unwrap();
        assert!(opt.boundary);
        assert_eq!(opt.g_e, 5.0);
    }

    #[test]
    fn cross_partial_at_baseline() {
        let m = Model::baseline();
        let c = cross_partial_g_cbarl(&m);
        assert_relative_eq!(c, -0.35 / 3.6, epsilon = 1e-14);
        let fd = cross_partial_fd(&m, |m, v| m.with_c_bar_l(v), m.market.c_bar_l);
        assert!((fd - c).abs() < 1e-4, "{fd} vs {c}");
        let mut flat = m;
        flat.policy.p0 = 1.0;
        flat.policy.lambda_alpha = 0.0;
        flat.policy.a_r = 0.0;
        assert_eq!(cross_partial_g_cbarl(&flat), 0.0);
    }

    #[test]
    fn guidance_falls_with_location_cost() {
        let s = dge_dcbarl(&Model::baseline(), DEFAULT_G_MAX).unwrap();
        assert!(s.implicit < 0.0 && s.cross_partial < 0.0);
        assert!(s.relative_gap() < 1e-3, "{s:?}");
        let r = dge_dr(&Model::baseline(), DEFAULT_G_MAX).unwrap();
        assert!(r.implicit.is_finite());
        assert!(r.relative_gap() < 1e-3, "{r:?}");
    }
}
