use proptest::prelude::*;
use regional_bertrand::demand::{fd_partials, linear_demand, FdOrder, SpecificDemand};
use regional_bertrand::dynamics::{simulate, AdjustmentConfig};
use regional_bertrand::equilibrium::{closed_form_equilibrium, solve_equilibrium, stability_quantities};
use regional_bertrand::extended::{
    extended_statics_cbarl, locate_sign_flips, raw_residuals, solve_extended, RESIDUAL_TOL,
};
use regional_bertrand::model::{consumer_surplus, eval_alpha, eval_prob, thresholds};
use regional_bertrand::numeric::close;
use regional_bertrand::policy::{
    cross_partial_g_cbarl, dge_dcbarl, marginal_profit_g, optimize_guidance, DEFAULT_G_MAX, FOC_TOL,
};
use regional_bertrand::sampling::ScenarioSampler;
use regional_bertrand::statics::{nonspecific_statics_specific, specific_statics, Parameter};
use regional_bertrand::{DemandSystem, LinearDemandParams, Model, Prices};

fn sampled() -> impl Strategy<Value = Model> {
    any::<u64>().prop_map(|seed| ScenarioSampler::new(seed).sample())
}

fn linear() -> impl Strategy<Value = LinearDemandParams> {
    (1.0..3.0f64, 0.5..2.0f64, 0.05..0.9f64, 0.0..0.2f64, 0.0..0.2f64)
        .prop_map(|(a, b, ratio, m, n)| LinearDemandParams { a, b, c: ratio * b, m, n })
}

fn partials_agree(sys: &dyn DemandSystem, prices: Prices) -> Result<(), TestCaseError> {
    let m = sys.model();
    let exact = sys.eval(prices);
    let fd = fd_partials(sys, prices, m.market.r, m.market.g, FdOrder::First);
    let tol = if fd.one_sided { 1e-4 } else { 1e-5 };
    let pairs = [
        (exact.dp[0][0], fd.eval.dp[0][0]),
        (exact.dp[0][1], fd.eval.dp[0][1]),
        (exact.dp[1][0], fd.eval.dp[1][0]),
        (exact.dp[1][1], fd.eval.dp[1][1]),
        (exact.dr[0], fd.eval.dr[0]),
        (exact.dr[1], fd.eval.dr[1]),
        (exact.dg[0], fd.eval.dg[0]),
        (exact.dg[1], fd.eval.dg[1]),
    ];
    for (a, b) in pairs {
        prop_assert!(close(a, b, tol, 1e-8), "{a} vs {b}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn thresholds_are_ordered(m in sampled()) {
        let eq = closed_form_equilibrium(&m);
        let t = thresholds(&m, eq.prices()).unwrap();
        let gap = t.theta_star_star - t.theta_star;
        prop_assert!(gap > 0.0);
        prop_assert!(close(gap, (m.market.sqrt_q() - eq.p_ue) / m.spread(), 1e-12, 1e-14));
    }

    #[test]
    fn surpluses_meet_at_indifference(m in sampled()) {
        let eq = closed_form_equilibrium(&m);
        let t = thresholds(&m, eq.prices()).unwrap();
        let c = consumer_surplus(&m, eq.prices(), t.theta_star_star).unwrap();
        prop_assert!((c.cs_u - c.cs_l).abs() <= 1e-14);
    }

    #[test]
    fn policy_partials_match_differences(m in sampled()) {
        let f = m.policy;
        let g = m.market.g.max(1e-3);
        let r = m.market.r;
        let h = 1e-6;
        let p = eval_prob(&f, g).unwrap();
        let fd_p = (eval_prob(&f, g + h).unwrap().p - eval_prob(&f, g - h).unwrap().p) / (2.0 * h);
        prop_assert!(close(p.dp, fd_p, 1e-6, 1e-10));
        let a = eval_alpha(&f, r, g).unwrap();
        let fd_r = (eval_alpha(&f, r + h, g).unwrap().value - eval_alpha(&f, r - h, g).unwrap().value) / (2.0 * h);
        let fd_g = (eval_alpha(&f, r, g + h).unwrap().value - eval_alpha(&f, r, g - h).unwrap().value) / (2.0 * h);
        prop_assert!(close(a.d_r, fd_r, 1e-6, 1e-10));
        prop_assert!(close(a.d_g, fd_g, 1e-6, 1e-10));
    }

    #[test]
    fn specific_demand_adds_up(m in sampled(), du in -0.05..0.05f64, dl in -0.05..0.05f64) {
        let eq = closed_form_equilibrium(&m);
        let prices = Prices::new(eq.p_ue + du, eq.p_le + dl);
        let sys = SpecificDemand::new(m);
        let e = sys.eval(prices);
        prop_assert!((e.x[0] + e.x[1] - 1.0).abs() < 1e-14);
        for k in 0..2 {
            prop_assert_eq!(e.dp[0][k], -e.dp[1][k]);
        }
        if prices.l > prices.u {
            prop_assert!(e.dr[0] < 0.0);
        }
        if m.prob().dp > 0.0 && prices.l > prices.u {
            prop_assert!(e.dg[0] < 0.0);
        }
        partials_agree(&sys, prices)?;
    }

    #[test]
    fn linear_partials_and_stability(params in linear(), du in -0.1..0.1f64, dl in -0.1..0.1f64) {
        let model = Model::baseline().with_r(1.0);
        let sys = linear_demand(params, &model).unwrap();
        let eq = solve_equilibrium(&sys).unwrap();
        partials_agree(&sys, Prices::new(eq.p_ue + du, eq.p_le + dl))?;
        let sq = stability_quantities(&sys, eq.prices());
        prop_assert!(sq.cond4_strict);
        prop_assert!(sq.det_j > 0.0);
        let (su, sl) = (sq.slope_u.unwrap(), sq.slope_l.unwrap());
        prop_assert!(sl > su && su > 0.0);
    }

    #[test]
    fn statics_match_differences(m in sampled()) {
        for p in Parameter::ALL {
            let r = specific_statics(&m, p).unwrap();
            prop_assert!(r.analytic_matches_fd(1e-5, 1e-8), "{p}: {r:?}");
            let g = nonspecific_statics_specific(&m, p).unwrap();
            prop_assert!((g.full[0] - r.analytic("p_UE")).abs() < 1e-10);
            prop_assert!((g.full[1] - r.analytic("p_LE")).abs() < 1e-10);
        }
        let c = specific_statics(&m, Parameter::CBarL).unwrap();
        prop_assert_eq!(c.analytic("p_UE"), 1.0 / 3.0);
        prop_assert_eq!(c.analytic("p_LE"), 2.0 / 3.0);
        prop_assert!(specific_statics(&m, Parameter::G).unwrap().analytic("pi_LE") > 0.0);
    }

    #[test]
    fn decomposition_is_the_total_derivative(m in sampled()) {
        let d = marginal_profit_g(&m);
        let g = m.market.g;
        let pi = |x: f64| closed_form_equilibrium(&m.with_g(x)).pi_le;
        let h = 1e-5;
        let fd = if g > h { (pi(g + h) - pi(g - h)) / (2.0 * h) } else { (-3.0 * pi(g) + 4.0 * pi(g + h) - pi(g + 2.0 * h)) / (2.0 * h) };
        prop_assert!(close(d.total(), fd, 1e-5, 1e-8));
        prop_assert!(d.total() > 0.0);
    }

    #[test]
    fn cross_partial_is_negative(m in sampled()) {
        let k = m.market.c_bar_l + m.alpha().value;
        if k > 0.0 && m.prob().dp > 0.0 {
            prop_assert!(cross_partial_g_cbarl(&m) < 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn guidance_optimum_is_global(m in sampled()) {
        let opt = optimize_guidance(&m, DEFAULT_G_MAX).unwrap();
        if opt.is_interior() {
            prop_assert!(opt.foc_residual <= FOC_TOL);
        }
        for i in 0..=1000 {
            let g = DEFAULT_G_MAX * i as f64 / 1000.0;
            let w = closed_form_equilibrium(&m.with_g(g)).pi_le - m.policy.beta(g);
            prop_assert!(w <= opt.w_e + 1e-12);
        }
        if opt.regular() && m.market.c_bar_l > 1e-3 {
            if let Ok(s) = dge_dcbarl(&m, DEFAULT_G_MAX) {
                prop_assert!(s.implicit < 0.0);
            }
        }
    }

    #[test]
    fn halving_the_step_barely_moves_the_path(m in sampled(), ku in 0.5..2.0f64, kl in 0.5..2.0f64) {
        let eq = closed_form_equilibrium(&m).prices();
        let init = Prices::new(eq.u * 1.2, eq.l * 0.9);
        let sys = SpecificDemand::new(m);
        let mut cfg = AdjustmentConfig::new(ku, kl, init);
        cfg.horizon = 5.0;
        let a = simulate(&sys, &cfg).unwrap();
        cfg.dt /= 2.0;
        let b = simulate(&sys, &cfg).unwrap();
        prop_assert!(a.check_descent().holds && b.check_descent().holds);
        let gap = a.last().prices.max_abs_diff(&b.last().prices);
        prop_assert!(gap < 1e-2, "{gap}");
        let long_a = simulate(&sys, &AdjustmentConfig::new(ku, kl, init)).unwrap();
        let mut half = AdjustmentConfig::new(ku, kl, init);
        half.dt /= 2.0;
        let long_b = simulate(&sys, &half).unwrap();
        prop_assert!(long_a.converged && long_b.converged);
        prop_assert!(long_a.last().prices.max_abs_diff(&long_b.last().prices) < 1e-6);
    }

    #[test]
    fn extended_solutions_are_clean(p0 in 0.1..0.9f64, extra in 0.01..0.5f64, c in 0.01..0.5f64, lam in 0.0..1.0f64) {
        let mut m = Model::baseline().with_c_bar_l(c).with_g(0.5);
        m.policy.p0 = p0;
        m.policy.lambda_alpha = lam;
        let p = m.prob().p;
        m.policy.a_r = (p / 2.0 + extra) / (-lam * 0.5f64).exp();
        let e = solve_extended(&m).unwrap();
        prop_assert!(e.max_residual() <= RESIDUAL_TOL);
        prop_assert!(raw_residuals(&m, [e.p_ue, e.p_le, e.r_e]).iter().all(|r| r.abs() <= 1e-10));
        prop_assert!(e.soc < 0.0);
        let s = extended_statics_cbarl(&m).unwrap();
        prop_assert!(s.demand_slope.iter().all(|v| v.abs() < 1e-6));
        prop_assert!(s.all_positive);
        let grid: Vec<f64> = (0..=60).map(|i| 0.013 + 0.02 * i as f64).collect();
        for f in locate_sign_flips(&m, &grid) {
            prop_assert!((f.a_r - f.expected).abs() < 1e-10);
        }
    }
}
