//! Continuous-time price adjustment toward best responses, integrated with
//! forward Euler, and the Liapunov descent checks on the resulting paths.
//!
//! Two quadratic forms are recorded along every path:
//!
//! * `z2_nash = kU (p^UE - p^U)^2 + kL (p^LE - p^L)^2`, the weighted squared
//!   distance to the fixed Nash point;
//! * `z2 = kU (BR^U(p^L) - p^U)^2 + kL (BR^L(p^U) - p^L)^2`, the same form
//!   measured against the instantaneous reaction-function targets.
//!
//! Under `dp^j/dt = k^j (BR^j - p^j)` the second one always decreases when
//! the reaction slopes sum to less than two. The first one decreases for
//! equal speeds but is not monotone in general once `kU / kL` leaves
//! `(2 - sqrt 3, 2 + sqrt 3)`.

use crate::demand::DemandSystem;
use crate::equilibrium::{best_response, solve_equilibrium, Prices, Producer};
use crate::error::{Error, Result};

/// Distance to the Nash point below which a path counts as converged.
pub const CONVERGENCE_DISTANCE: f64 = 1e-8;

/// Values at or below this level are treated as zero by the descent check.
pub const DESCENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustmentConfig {
    pub k_u: f64,
    pub k_l: f64,
    pub dt: f64,
    pub horizon: f64,
    pub init: Prices,
}

impl AdjustmentConfig {
    pub fn new(k_u: f64, k_l: f64, init: Prices) -> Self {
        Self { k_u, k_l, dt: 0.01, horizon: 1000.0, init }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kU", self.k_u), ("kL", self.k_l), ("dt", self.dt), ("horizon", self.horizon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.init.u.is_finite() && self.init.l.is_finite()) {
            return Err(Error::invalid("init", "prices must be finite"));
        }
        Ok(())
    }
}

/// Weighted squared distance to the equilibrium.
pub fn liapunov_z2(config: &AdjustmentConfig, equilibrium: Prices, prices: Prices) -> f64 {
    let yu = equilibrium.u - prices.u;
    let yl = equilibrium.l - prices.l;
    config.k_u * yu * yu + config.k_l * yl * yl
}

/// Weighted squared gap to the current best responses.
pub fn reaction_gap_z2(system: &dyn DemandSystem, config: &AdjustmentConfig, prices: Prices) -> Result<f64> {
    let targets = Prices::new(
        best_response(system, Producer::U, prices.l)?,
        best_response(system, Producer::L, prices.u)?,
    );
    Ok(liapunov_z2(config, targets, prices))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub prices: Prices,
    /// Gap to the instantaneous best responses, see the module docs.
    pub z2: f64,
    /// Distance to the fixed Nash point.
    pub z2_nash: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub equilibrium: Prices,
    pub converged: bool,
    pub final_distance: f64,
    /// Set when a best response could not be computed mid-path; the samples
    /// stop at the last good point.
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn z2(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.z2).collect()
    }

    pub fn z2_nash(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.z2_nash).collect()
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories are never empty")
    }

    pub fn check_descent(&self) -> DescentVerdict {
        check_descent(&self.z2())
    }

    pub fn check_nash_descent(&self) -> DescentVerdict {
        check_descent(&self.z2_nash())
    }
}

/// Forward-Euler integration of `dp^j/dt = k^j (BR^j(p^-j) - p^j)` until the
/// path is within [`CONVERGENCE_DISTANCE`] of the Nash point or the horizon
/// is reached.
pub fn simulate(system: &dyn DemandSystem, config: &AdjustmentConfig) -> Result<Trajectory> {
    config.validate()?;
    let eq = solve_equilibrium(system)?.prices();
    let distance = |p: Prices| ((p.u - eq.u).powi(2) + (p.l - eq.l).powi(2)).sqrt();
    let targets = |p: Prices| -> Result<Prices> {
        Ok(Prices::new(
            best_response(system, Producer::U, p.l)?,
            best_response(system, Producer::L, p.u)?,
        ))
    };

    let steps = (config.horizon / config.dt).ceil() as usize;
    let mut p = config.init;
    let mut br = targets(p)?;
    let mut samples = Vec::new();
    let mut failure = None;
    let mut converged = false;
    for i in 0..=steps {
        samples.push(TrajectorySample {
            t: i as f64 * config.dt,
            prices: p,
            z2: liapunov_z2(config, br, p),
            z2_nash: liapunov_z2(config, eq, p),
        });
        if distance(p) < CONVERGENCE_DISTANCE {
            converged = true;
            break;
        }
        if i == steps {
            break;
        }
        let next = Prices::new(
            p.u + config.dt * config.k_u * (br.u - p.u),
            p.l + config.dt * config.k_l * (br.l - p.l),
        );
        match targets(next) {
            Ok(t) => {
                p = next;
                br = t;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Ok(Trajectory { samples, equilibrium: eq, converged, final_distance: distance(p), failure })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescentVerdict {
    pub holds: bool,
    /// Index of the first sample that failed to decrease.
    pub first_violation: Option<usize>,
}

/// Passes iff the sequence never increases and strictly decreases from every
/// value above [`DESCENT_TOL`]; values at or below the tolerance count as zero.
pub fn check_descent(values: &[f64]) -> DescentVerdict {
    for (i, w) in values.windows(2).enumerate() {
        let (prev, next) = (w[0], w[1]);
        let bad = if prev > DESCENT_TOL { !(next < prev) } else { next > DESCENT_TOL };
        if bad || next < 0.0 || next.is_nan() {
            return DescentVerdict { holds: false, first_violation: Some(i + 1) };
        }
    }
    DescentVerdict { holds: true, first_violation: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::specific_demand;
    use crate::model::Model;
    use approx::assert_relative_eq;

    const EQ: Prices = Prices { u: 4.0 / 3.0, l: 5.0 / 3.0 };

    #[test]
    fn z2_values() {
        let cfg = AdjustmentConfig::new(1.0, 1.0, Prices::new(1.2, 1.5));
        assert_eq!(liapunov_z2(&cfg, EQ, EQ), 0.0);
        let z = liapunov_z2(&cfg, EQ, Prices::new(1.2, 1.5));
        assert_relative_eq!(z, (4.0f64 / 3.0 - 1.2).powi(2) + (5.0f64 / 3.0 - 1.5).powi(2), epsilon = 1e-15);
        assert_relative_eq!(z, 0.045556, epsilon = 1e-6);

        let doubled = AdjustmentConfig { k_u: 2.0, ..cfg };
        let first = (EQ.u - 1.2f64).powi(2);
        assert_relative_eq!(liapunov_z2(&doubled, EQ, Prices::new(1.2, 1.5)) - z, first, epsilon = 1e-15);
    }

    #[test]
    fn baseline_path_descends_to_equilibrium() {
        let sys = specific_demand(&Model::baseline());
        let traj = simulate(&sys, &AdjustmentConfig::new(1.0, 1.0, Prices::new(1.2, 1.5))).unwrap();
        assert!(traj.converged);
        assert!(traj.final_distance < CONVERGENCE_DISTANCE);
        assert!(traj.check_descent().holds);
        assert!(traj.check_nash_descent().holds);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn start_at_equilibrium_is_stationary() {
        let sys = specific_demand(&Model::baseline());
        let eq = crate::equilibrium::closed_form_equilibrium(&Model::baseline()).prices();
        let traj = simulate(&sys, &AdjustmentConfig::new(1.0, 1.0, eq)).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.samples.len(), 1);
        assert!(traj.samples[0].z2 < 1e-28 && traj.samples[0].z2_nash < 1e-28);
    }

    #[test]
    fn unequal_speeds_still_converge() {
        let sys = specific_demand(&Model::baseline());
        let traj = simulate(&sys, &AdjustmentConfig::new(2.0, 0.5, Prices::new(1.2, 1.5))).unwrap();
        assert!(traj.converged);
        assert!(traj.check_descent().holds);
    }

    #[test]
    fn distance_to_nash_is_not_monotone_for_lopsided_speeds() {
        // price of U at its equilibrium value, price of L far above: the fast
        // producer U is pulled away before L has moved
        let sys = specific_demand(&Model::baseline());
        let cfg = AdjustmentConfig::new(10.0, 0.1, Prices::new(EQ.u + 0.05, EQ.l + 0.5));
        let traj = simulate(&sys, &cfg).unwrap();
        assert!(traj.converged);
        assert!(traj.check_descent().holds);
        assert!(!traj.check_nash_descent().holds);
    }

    #[test]
    fn descent_check_flags_the_right_index() {
        assert!(check_descent(&[3.0, 2.0, 1.0, 0.0, 0.0]).holds);
        let v = check_descent(&[3.0, 2.0, 2.5, 1.0]);
        assert_eq!(v, DescentVerdict { holds: false, first_violation: Some(2) });
        let v = check_descent(&[3.0, 2.0, 2.0]);
        assert_eq!(v.first_violation, Some(2));
        assert!(check_descent(&[1e-13, 5e-13]).holds);
        assert!(!check_descent(&[1e-13, 1e-6]).holds);
    }

    #[test]
    fn config_validation() {
        let bad = AdjustmentConfig { dt: 0.0, ..AdjustmentConfig::new(1.0, 1.0, EQ) };
        assert!(bad.validate().is_err());
        let bad = AdjustmentConfig::new(-1.0, 1.0, EQ);
        assert!(bad.validate().is_err());
    }
}
