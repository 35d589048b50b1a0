use regional_bertrand::demand::{linear_demand, SpecificDemand};
use regional_bertrand::dynamics::{simulate, AdjustmentConfig};
use regional_bertrand::equilibrium::{
    closed_form_equilibrium, default_start, solve_equilibrium, solve_iterative, solve_newton, stability_quantities,
    IterativeOptions, NEWTON_TOL,
};
use regional_bertrand::extended::{
    extended_statics_cbarl, locate_sign_flips, reference_model, solve_extended, RESIDUAL_TOL,
};
use regional_bertrand::numeric::close;
use regional_bertrand::policy::{
    cross_partial_fd, cross_partial_g_cbarl, dge_dcbarl, golden_section_guidance, optimize_guidance, DEFAULT_G_MAX,
    FOC_TOL,
};
use regional_bertrand::sampling::{GuidanceRegime, ScenarioSampler};
use regional_bertrand::statics::{
    nonspecific_statics, nonspecific_statics_specific, specific_statics_cbarl, specific_statics_g,
    specific_statics_r, Parameter,
};
use regional_bertrand::{DemandSystem, LinearDemandParams, Model, Prices};

use crate::commands::grid;
use crate::format::{num, Table};
use crate::scenario::Scenario;

/// Speeds of adjustment combined in the descent check.
pub const SPEEDS: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn line(name: &str, pass: bool, detail: String) -> CheckLine {
    CheckLine { name: name.into(), pass, detail }
}

fn failed(name: &str, e: impl std::fmt::Display) -> CheckLine {
    line(name, false, format!("error: {e}"))
}

/// The scenario's own model followed by `trials` sampled ones.
fn models(scenario: &Scenario, seed: u64, trials: usize, regime: GuidanceRegime) -> Vec<Model> {
    let mut out = vec![scenario.model()];
    out.extend(ScenarioSampler::new(seed).with_regime(regime).take(trials));
    out
}

fn all_models<F>(name: &str, models: &[Model], mut f: F) -> CheckLine
where
    F: FnMut(&Model) -> Result<bool, String>,
{
    for (i, m) in models.iter().enumerate() {
        match f(m) {
            Ok(true) => {}
            Ok(false) => return line(name, false, format!("fails on model {i}")),
            Err(e) => return line(name, false, format!("model {i}: {e}")),
        }
    }
    line(name, true, format!("{} models", models.len()))
}

pub fn run(scenario: &Scenario, seed: u64, trials: usize) -> Vec<CheckLine> {
    let base = scenario.model();
    let pool = models(scenario, seed, trials, GuidanceRegime::Any);
    let mut out = Vec::new();

    out.push(solvers(scenario));
    out.push(conditions(scenario));

    out.push(all_models("location_cost.prices", &pool, |m| {
        let r = specific_statics_cbarl(m).map_err(|e| e.to_string())?;
        Ok(r.analytic("p_LE") == 2.0 / 3.0 && r.analytic("p_UE") == 1.0 / 3.0 && r.verdicts[0].pass == Some(true))
    }));
    out.push(all_models("location_cost.profits", &pool, |m| {
        let r = specific_statics_cbarl(m).map_err(|e| e.to_string())?;
        Ok(r.analytic("pi_UE") > 0.0 && r.analytic("pi_LE") < 0.0)
    }));
    out.push(all_models("added_value.prices", &pool, |m| {
        Ok(specific_statics_r(m).map_err(|e| e.to_string())?.verdicts[0].pass == Some(true))
    }));
    let mut regimes = models(scenario, seed, trials / 2, GuidanceRegime::PricesRise);
    regimes.extend(ScenarioSampler::new(seed).with_regime(GuidanceRegime::PricesFall).take(trials - trials / 2));
    out.push(all_models("guidance.price_signs", &regimes, |m| {
        Ok(specific_statics_g(m).map_err(|e| e.to_string())?.verdicts[0].pass == Some(true))
    }));
    out.push(all_models("guidance.profit_l", &regimes, |m| {
        Ok(specific_statics_g(m).map_err(|e| e.to_string())?.analytic("pi_LE") > 0.0)
    }));
    for param in Parameter::ALL {
        let name = format!("statics.{param}.analytic_vs_fd");
        let set = if param == Parameter::G { &regimes } else { &pool };
        out.push(all_models(&name, set, |m| {
            let r = match param {
                Parameter::CBarL => specific_statics_cbarl(m),
                Parameter::R => specific_statics_r(m),
                Parameter::G => specific_statics_g(m),
            }
            .map_err(|e| e.to_string())?;
            Ok(r.analytic_matches_fd(1e-5, 1e-9))
        }));
    }
    out.push(all_models("generic.matches_closed_form", &pool, |m| {
        let reports = [specific_statics_cbarl(m), specific_statics_r(m), specific_statics_g(m)];
        for (param, r) in Parameter::ALL.into_iter().zip(reports) {
            let r = r.map_err(|e| e.to_string())?;
            let g = nonspecific_statics_specific(m, param).map_err(|e| e.to_string())?;
            if (g.full[0] - r.analytic("p_UE")).abs() > 1e-8 || (g.full[1] - r.analytic("p_LE")).abs() > 1e-8 {
                return Ok(false);
            }
        }
        Ok(true)
    }));
    out.push(linear_generic());

    out.push(descent("liapunov.specific", &SpecificDemand::new(base), seed, trials, false));
    match linear_reference(&base) {
        Ok(lin) => out.push(descent("liapunov.linear", &lin, seed, trials, true)),
        Err(e) => out.push(failed("liapunov.linear", e)),
    }

    out.extend(policy_checks(&base));
    out.extend(extended_checks(&base));
    out
}

fn solvers(scenario: &Scenario) -> CheckLine {
    let name = "solve.closed_form_vs_numeric";
    let system = match scenario.system() {
        Ok(s) => s,
        Err(e) => return failed(name, e),
    };
    let start = default_start(system.as_ref());
    let it = solve_iterative(system.as_ref(), start, IterativeOptions::default());
    let nt = solve_newton(system.as_ref(), start, NEWTON_TOL);
    let reference = if scenario.is_specific() {
        Ok(closed_form_equilibrium(&scenario.model()))
    } else {
        solve_equilibrium(system.as_ref())
    };
    match (reference, it, nt) {
        (Ok(r), Ok(i), Ok(n)) => {
            let gap = r.prices().max_abs_diff(&i.prices()).max(r.prices().max_abs_diff(&n.prices()));
            line(name, gap <= 1e-8, format!("max gap {}", num(gap)))
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => failed(name, e),
    }
}

fn conditions(scenario: &Scenario) -> CheckLine {
    let name = "conditions";
    if scenario.is_specific() {
        return match &closed_form_equilibrium(&scenario.model()).conditions {
            Some(c) if c.all_hold() => line(name, true, "conditions 1-3 hold".into()),
            Some(c) => line(name, false, c.violations().join(" ")),
            None => line(name, false, "no condition report".into()),
        };
    }
    let solved = scenario.system().and_then(|s| Ok((solve_equilibrium(s.as_ref())?, s.costs())));
    match solved {
        Ok((eq, c)) => line(
            name,
            eq.x_ue > 0.0 && eq.x_le > 0.0 && eq.p_ue > c.c_u && eq.p_le > c.c_l,
            format!("sales ({}, {})", num(eq.x_ue), num(eq.x_le)),
        ),
        Err(e) => failed(name, e),
    }
}

fn linear_reference(model: &Model) -> regional_bertrand::Result<regional_bertrand::LinearDemand> {
    linear_demand(LinearDemandParams { a: 2.0, b: 1.0, c: 0.5, m: 0.1, n: 0.1 }, model)
}

fn linear_generic() -> CheckLine {
    let name = "generic.linear_exact";
    let model = Model::baseline().with_r(1.0);
    let run = || -> regional_bertrand::Result<bool> {
        let lin = linear_reference(&model)?;
        let eq = solve_equilibrium(&lin)?;
        for p in Parameter::ALL {
            let g = nonspecific_statics(&lin, eq.prices(), p)?;
            if g.full != g.approx {
                return Ok(false);
            }
        }
        Ok(true)
    };
    match run() {
        Ok(pass) => line(name, pass, "full solution equals approximation".into()),
        Err(e) => failed(name, e),
    }
}

fn descent(name: &str, system: &dyn DemandSystem, seed: u64, trials: usize, strict: bool) -> CheckLine {
    let eq = match solve_equilibrium(system) {
        Ok(e) => e.prices(),
        Err(e) => return failed(name, e),
    };
    if strict && !stability_quantities(system, eq).cond4_strict {
        return line(name, false, "strict stability condition fails".into());
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Prices> = (0..trials.max(1))
        .map(|_| Prices::new(eq.u * rng.gen_range(0.5..1.5), eq.l * rng.gen_range(0.5..1.5)))
        .collect();
    let mut paths = 0;
    for &ku in &SPEEDS {
        for &kl in &SPEEDS {
            for &init in &starts {
                let cfg = AdjustmentConfig::new(ku, kl, init);
                let traj = match simulate(system, &cfg) {
                    Ok(t) => t,
                    Err(e) => return failed(name, e),
                };
                let z = traj.z2();
                let verdict = traj.check_descent();
                if !traj.converged || !verdict.holds || !(z[z.len() - 1] < 1e-12) {
                    return line(
                        name,
                        false,
                        format!("kU = {ku}, kL = {kl}, start ({}, {}), violation at {:?}", num(init.u), num(init.l), verdict.first_violation),
                    );
                }
                paths += 1;
            }
        }
    }
    line(name, true, format!("{paths} paths"))
}

fn policy_checks(model: &Model) -> Vec<CheckLine> {
    let mut out = Vec::new();
    let opt = match optimize_guidance(model, DEFAULT_G_MAX) {
        Ok(o) => o,
        Err(e) => return vec![failed("first_stage.optimum", e)],
    };
    out.push(line(
        "first_stage.optimum",
        opt.is_interior() && opt.rho < 0.0 && opt.foc_residual <= FOC_TOL,
        format!("G_E {} foc residual {} rho {}", num(opt.g_e), num(opt.foc_residual), num(opt.rho)),
    ));
    out.push(match golden_section_guidance(model, DEFAULT_G_MAX) {
        Ok((g, _)) => line("first_stage.golden_section", (g - opt.g_e).abs() < 1e-6, format!("G {}", num(g))),
        Err(e) => failed("first_stage.golden_section", e),
    });
    let at = model.with_g(opt.g_e);
    let cross = cross_partial_g_cbarl(&at);
    let fd = cross_partial_fd(&at, |m, v| m.with_c_bar_l(v), at.market.c_bar_l);
    out.push(line(
        "first_stage.cross_partial",
        cross < 0.0 && (cross - fd).abs() < 1e-4,
        format!("closed form {} fd {}", num(cross), num(fd)),
    ));
    out.push(match dge_dcbarl(model, DEFAULT_G_MAX) {
        Ok(s) => line(
            "first_stage.slope",
            s.implicit < 0.0 && s.relative_gap() < 1e-3,
            format!("implicit {} reoptimized {}", num(s.implicit), num(s.reoptimized)),
        ),
        Err(e) => failed("first_stage.slope", e),
    });
    let sweep: Result<Vec<_>, _> = grid(0.0, 0.4, 41)
        .into_iter()
        .map(|c| optimize_guidance(&model.with_c_bar_l(c), DEFAULT_G_MAX))
        .collect();
    out.push(match sweep {
        Ok(o) => {
            // strict decrease between interior optima, no increase anywhere
            let pass = o.windows(2).all(|w| {
                if w[0].is_interior() && w[1].is_interior() {
                    w[1].g_e < w[0].g_e
                } else {
                    w[1].g_e <= w[0].g_e
                }
            });
            let interior = o.iter().filter(|x| x.is_interior()).count();
            line(
                "first_stage.sweep",
                pass && interior > 1,
                format!("G_E from {} to {}, {interior} interior", num(o[0].g_e), num(o[40].g_e)),
            )
        }
        Err(e) => failed("first_stage.sweep", e),
    });
    out
}

fn extended_checks(model: &Model) -> Vec<CheckLine> {
    let mut out = Vec::new();
    // fall back to the reference scenario when this one has no interior solution
    let m = if solve_extended(model).is_ok() { *model } else { reference_model() };
    match solve_extended(&m) {
        Ok(e) => out.push(line(
            "extended.solution",
            e.max_residual() <= RESIDUAL_TOL && e.soc_ok,
            format!("R_E {} p_LE {} p_UE {}", num(e.r_e), num(e.p_le), num(e.p_ue)),
        )),
        Err(e) => out.push(failed("extended.solution", e)),
    }
    match extended_statics_cbarl(&m) {
        Ok(s) => {
            let agree = s.cramer.iter().zip(&s.fd).all(|(a, b)| close(*a, *b, 1e-5, 0.0));
            out.push(line(
                "extended.statics",
                agree && s.sign_pattern_ok(),
                format!("({}, {}, {})", num(s.cramer[0]), num(s.cramer[1]), num(s.cramer[2])),
            ));
            out.push(line(
                "extended.demand_invariance",
                s.demand_slope.iter().all(|v| v.abs() < 1e-6),
                format!("({}, {})", num(s.demand_slope[0]), num(s.demand_slope[1])),
            ));
        }
        Err(e) => out.push(failed("extended.statics", e)),
    }
    let flips = locate_sign_flips(&m, &grid(0.005, 1.0, 200));
    out.push(match flips.as_slice() {
        [f] => line("extended.sign_flip", (f.a_r - f.expected).abs() < 1e-10, format!("a_R {}", num(f.a_r))),
        other => line("extended.sign_flip", false, format!("{} flips found", other.len())),
    });
    out
}

pub fn table(lines: &[CheckLine]) -> Table {
    let mut t = Table::new(&["check", "result", "detail"]);
    for l in lines {
        t.push(vec![l.name.clone(), if l.pass { "PASS" } else { "FAIL" }.into(), l.detail.clone()]);
    }
    t
}
