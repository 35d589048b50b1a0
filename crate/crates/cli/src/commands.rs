use rayon::prelude::*;
use regional_bertrand::dynamics::simulate;
use regional_bertrand::equilibrium::{
    closed_form_equilibrium, iso_profit_points, reaction_curve_points, solve_equilibrium, stability_quantities,
};
use regional_bertrand::extended::{extended_jacobian, extended_statics_cbarl, solve_extended};
use regional_bertrand::model::aggregate_surplus;
use regional_bertrand::policy::{
    cross_partial_g_cbarl, dge_dcbarl, dge_dr, golden_section_guidance, optimize_guidance, DEFAULT_G_MAX,
};
use regional_bertrand::statics::{
    branch_report, fd_statics, nonspecific_statics, specific_statics, Parameter, FD_STEP, QUANTITIES,
};
use regional_bertrand::{Equilibrium, Model, Prices, Producer};

use crate::format::{flag, num, opt, Table};
use crate::scenario::Scenario;
use crate::CliError;

pub const SOLVE_HEADER: [&str; 24] = [
    "id", "q", "c_bar", "c_bar_L", "R", "G", "P", "alpha", "c_U", "c_L", "p_UE", "p_LE", "X_UE", "X_LE", "pi_UE",
    "pi_LE", "CS_aggregate", "theta_star", "theta_star_star", "conditions_ok", "det_J", "method", "G_E", "W_E",
];

fn solve_at(scenario: &Scenario, model: &Model) -> Result<Equilibrium, CliError> {
    if scenario.is_specific() {
        Ok(closed_form_equilibrium(model))
    } else {
        let system = scenario.system_for(model)?;
        Ok(solve_equilibrium(system.as_ref())?)
    }
}

fn solve_row(scenario: &Scenario, model: &Model) -> Result<Vec<String>, CliError> {
    let eq = solve_at(scenario, model)?;
    let system = scenario.system_for(model)?;
    let costs = model.unit_costs();
    let sq = stability_quantities(system.as_ref(), eq.prices());
    let (cs, th1, th2) = match (&eq.conditions, scenario.is_specific()) {
        (Some(c), true) => (Some(aggregate_surplus(model, eq.prices())?.total), Some(c.theta_star), Some(c.theta_star_star)),
        _ => (None, None, None),
    };
    let policy = if scenario.is_specific() { optimize_guidance(model, DEFAULT_G_MAX).ok() } else { None };
    let m = model.market;
    Ok(vec![
        scenario.id.clone(),
        num(m.q),
        num(m.c_bar),
        num(m.c_bar_l),
        num(m.r),
        num(m.g),
        num(model.prob().p),
        num(model.alpha().value),
        num(costs.c_u),
        num(costs.c_l),
        num(eq.p_ue),
        num(eq.p_le),
        num(eq.x_ue),
        num(eq.x_le),
        num(eq.pi_ue),
        num(eq.pi_le),
        opt(cs),
        opt(th1),
        opt(th2),
        eq.conditions.map(|c| flag(c.all_hold())).unwrap_or_default(),
        num(sq.det_j),
        format!("{:?}", eq.method),
        opt(policy.map(|p| p.g_e)),
        opt(policy.map(|p| p.w_e)),
    ])
}

fn warn_conditions(model: &Model, eq: &Equilibrium) {
    if let Some(c) = &eq.conditions {
        if !c.all_hold() {
            eprintln!(
                "warning: {} fail at G = {} (prices {}, {})",
                c.violations().join(", "),
                num(model.market.g),
                num(eq.p_ue),
                num(eq.p_le)
            );
        }
    }
}

pub fn solve(scenario: &Scenario) -> Result<Table, CliError> {
    let model = scenario.model();
    warn_conditions(&model, &solve_at(scenario, &model)?);
    let mut t = Table::new(&SOLVE_HEADER);
    t.push(solve_row(scenario, &model)?);
    Ok(t)
}

pub fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn sweep(scenario: &Scenario, param: Parameter, from: f64, to: f64, steps: usize) -> Result<Table, CliError> {
    if steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    if !(from.is_finite() && to.is_finite()) {
        return Err(CliError::Input("--from and --to must be finite".into()));
    }
    let base = scenario.model();
    let rows: Vec<Result<Vec<String>, CliError>> = grid(from, to, steps)
        .into_par_iter()
        .map(|x| {
            let m = param.set(&base, x);
            m.market.validate()?;
            solve_row(scenario, &m)
        })
        .collect();
    let mut t = Table::new(&SOLVE_HEADER);
    for r in rows {
        t.push(r?);
    }
    Ok(t)
}

pub const STATICS_HEADER: [&str; 7] = ["id", "parameter", "quantity", "analytic", "approx", "fd", "stencil"];

pub fn statics(scenario: &Scenario, param: Parameter) -> Result<Table, CliError> {
    let model = scenario.model();
    let system = scenario.system()?;
    let eq = solve_at(scenario, &model)?;
    let generic = nonspecific_statics(system.as_ref(), eq.prices(), param)?;
    let mut t = Table::new(&STATICS_HEADER);
    let id = scenario.id.clone();
    if scenario.is_specific() {
        let report = specific_statics(&model, param)?;
        for (i, e) in report.entries.iter().enumerate() {
            let approx = if i < 2 { Some(generic.approx[i]) } else { None };
            t.push(vec![
                id.clone(),
                param.to_string(),
                e.quantity.to_string(),
                opt(e.analytic),
                opt(approx),
                num(e.fd),
                format!("{:?}", report.fd_stencil),
            ]);
        }
        for v in &report.verdicts {
            let tag = match v.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            eprintln!("{tag} {}: expected {}, found {}", v.claim, v.expected, v.found);
        }
    } else {
        let solver = |m: &Model| -> regional_bertrand::Result<Equilibrium> {
            let s = scenario.system_for(m).map_err(|e| regional_bertrand::Error::InvalidParameters(e.to_string()))?;
            solve_equilibrium(s.as_ref())
        };
        let fd = fd_statics(solver, &model, param, FD_STEP)?;
        for v in branch_report(system.as_ref(), eq.prices())? {
            eprintln!("INFO {}: {}", v.claim, v.found);
        }
        for (i, quantity) in QUANTITIES.iter().take(2).enumerate() {
            t.push(vec![
                id.clone(),
                param.to_string(),
                quantity.to_string(),
                num(generic.full[i]),
                num(generic.approx[i]),
                num(fd.values[i]),
                format!("{:?}", fd.stencil),
            ]);
        }
    }
    Ok(t)
}

pub fn dynamics(scenario: &Scenario, p0: Option<Prices>, dt: Option<f64>, steps: Option<usize>) -> Result<Table, CliError> {
    let system = scenario.system()?;
    let eq = solve_equilibrium(system.as_ref())?;
    let init = p0.unwrap_or(Prices::new(eq.p_ue + 0.1, eq.p_le - 0.1));
    let mut cfg = scenario.adjustment(init);
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    if let Some(n) = steps {
        cfg.horizon = n as f64 * cfg.dt;
    }
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let traj = simulate(system.as_ref(), &cfg)?;
    if let Some(e) = &traj.failure {
        eprintln!("warning: path stopped early: {e}");
    }
    let mut t = Table::new(&["t", "pU", "pL", "Z2", "Z2_br"]);
    for s in &traj.samples {
        t.push(vec![num(s.t), num(s.prices.u), num(s.prices.l), num(s.z2_nash), num(s.z2)]);
    }
    Ok(t)
}

fn require_specific(scenario: &Scenario, what: &str) -> Result<(), CliError> {
    if scenario.is_specific() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} needs demand.kind = \"specific\"")))
    }
}

pub const POLICY_HEADER: [&str; 17] = [
    "id", "G_E", "W_E", "foc_residual", "rho", "price_channel", "cost_channel", "probability_channel", "dpiL_dG",
    "boundary", "multimodal", "G_golden", "cross_partial", "dGE_dcbarL", "dGE_dcbarL_reopt", "dGE_dR", "dGE_dR_reopt",
];

pub fn policy(scenario: &Scenario, g_max: f64) -> Result<Table, CliError> {
    require_specific(scenario, "policy")?;
    let model = scenario.model();
    let optimum = optimize_guidance(&model, g_max)?;
    if optimum.rho >= 0.0 && !optimum.boundary {
        eprintln!("warning: rho = {} is not negative at G_E", num(optimum.rho));
    }
    if optimum.multimodal {
        eprintln!("warning: several local welfare maxima; reporting the global one");
    }
    let (g_golden, _) = golden_section_guidance(&model, g_max)?;
    let slope_c = dge_dcbarl(&model, g_max).ok();
    let slope_r = dge_dr(&model, g_max).ok();
    let d = optimum.decomposition;
    let mut t = Table::new(&POLICY_HEADER);
    t.push(vec![
        scenario.id.clone(),
        num(optimum.g_e),
        num(optimum.w_e),
        num(optimum.foc_residual),
        num(optimum.rho),
        num(d.price),
        num(d.cost),
        num(d.probability),
        num(d.total()),
        flag(optimum.boundary),
        flag(optimum.multimodal),
        num(g_golden),
        num(cross_partial_g_cbarl(&model.with_g(optimum.g_e))),
        opt(slope_c.map(|s| s.implicit)),
        opt(slope_c.map(|s| s.reoptimized)),
        opt(slope_r.map(|s| s.implicit)),
        opt(slope_r.map(|s| s.reoptimized)),
    ]);
    Ok(t)
}

pub const EXTENDED_HEADER: [&str; 24] = [
    "id", "R_E", "p_UE", "p_LE", "X_UE", "X_LE", "pi_UE", "pi_LE", "det_J3", "det_matrix", "soc", "soc_ok",
    "conditions_ok", "dpU_dcL", "dpL_dcL", "dR_dcL", "dpU_dcL_fd", "dpL_dcL_fd", "dR_dcL_fd", "dpU_dcL_displayed",
    "dpL_dcL_displayed", "dR_dcL_displayed", "dXU_dcL", "dXL_dcL",
];

pub fn extended(scenario: &Scenario) -> Result<Table, CliError> {
    require_specific(scenario, "extended")?;
    let model = scenario.model();
    let e = solve_extended(&model)?;
    let j = extended_jacobian(&model);
    let s = extended_statics_cbarl(&model)?;
    for (i, name) in ["dpU_dcL", "dpL_dcL", "dR_dcL"].iter().enumerate() {
        if !s.displayed_agrees[i] {
            eprintln!("note: displayed {name} = {} differs from the direct solve {}", num(s.displayed[i]), num(s.cramer[i]));
        }
    }
    let mut t = Table::new(&EXTENDED_HEADER);
    let mut row = vec![
        scenario.id.clone(),
        num(e.r_e),
        num(e.p_ue),
        num(e.p_le),
        num(e.x_ue),
        num(e.x_le),
        num(e.pi_ue),
        num(e.pi_le),
        num(e.det_j3),
        num(j.det_matrix),
        num(e.soc),
        flag(e.soc_ok),
        flag(e.conditions.all_hold()),
    ];
    row.extend(s.cramer.iter().map(|v| num(*v)));
    row.extend(s.fd.iter().map(|v| num(*v)));
    row.extend(s.displayed.iter().map(|v| num(*v)));
    row.extend(s.demand_slope.iter().map(|v| num(*v)));
    t.push(row);
    Ok(t)
}

pub fn curves(scenario: &Scenario, producer: Producer, levels: Option<Vec<f64>>) -> Result<Table, CliError> {
    let system = scenario.system()?;
    let eq = solve_equilibrium(system.as_ref())?;
    let costs = system.costs();
    let span = |lo: f64, hi: f64| grid(lo, hi, 101);
    let u_grid = span(costs.c_u, eq.p_ue + 2.0 * (eq.p_ue - costs.c_u));
    let l_grid = span(costs.c_l, eq.p_le + 2.0 * (eq.p_le - costs.c_l));

    let mut t = Table::new(&["series", "x", "y"]);
    // x is always p^U and y always p^L
    for (&x, y) in l_grid.iter().zip(reaction_curve_points(system.as_ref(), Producer::U, &l_grid)?) {
        t.push(vec!["reaction_U".into(), num(y.1), num(x)]);
    }
    for (x, y) in reaction_curve_points(system.as_ref(), Producer::L, &u_grid)? {
        t.push(vec!["reaction_L".into(), num(x), num(y)]);
    }
    let own_profit = if producer == Producer::U { eq.pi_ue } else { eq.pi_le };
    let levels = levels.unwrap_or_else(|| vec![0.5 * own_profit, own_profit, 1.5 * own_profit]);
    let own_grid = if producer == Producer::U { &u_grid } else { &l_grid };
    for level in levels {
        let name = format!("iso_{producer}_{}", num(level));
        for p in iso_profit_points(system.as_ref(), producer, level, own_grid).points {
            let (x, y) = if producer == Producer::U { (p.own, p.rival) } else { (p.rival, p.own) };
            t.push(vec![name.clone(), num(x), num(y)]);
        }
    }
    Ok(t)
}

