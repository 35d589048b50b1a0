//! Seeded generators of valid random scenarios for sweeps and property checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::closed_form_equilibrium;
use crate::model::{MarketPrimitives, Model, PolicyFunctions};

/// Sign of `P'(G) R + d alpha / dG`, the direction in which guidance moves
/// both equilibrium prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceRegime {
    Any,
    PricesRise,
    PricesFall,
}

#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    rng: ChaCha8Rng,
    regime: GuidanceRegime,
}

impl ScenarioSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), regime: GuidanceRegime::Any }
    }

    pub fn with_regime(mut self, regime: GuidanceRegime) -> Self {
        self.regime = regime;
        self
    }

    /// A model whose closed-form equilibrium satisfies conditions 1-3 with
    /// margins bounded away from zero.
    pub fn sample(&mut self) -> Model {
        loop {
            if let Some(m) = self.try_sample() {
                return m;
            }
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<Model> {
        (0..n).map(|_| self.sample()).collect()
    }

    fn try_sample(&mut self) -> Option<Model> {
        let rng = &mut self.rng;
        let mut policy = PolicyFunctions {
            p0: rng.gen_range(0.1..0.9),
            lambda_p: rng.gen_range(0.2..2.0),
            a_r: rng.gen_range(0.01..0.2),
            lambda_alpha: rng.gen_range(0.0..1.0),
            b_beta: rng.gen_range(0.1..2.0),
        };
        let mut g = rng.gen_range(0.0..3.0);
        if self.regime == GuidanceRegime::PricesFall {
            policy.p0 = rng.gen_range(0.9..0.99);
            policy.lambda_alpha = rng.gen_range(0.5..1.5);
            policy.a_r = rng.gen_range(0.1..0.3);
            g = rng.gen_range(2.0..4.0);
        }
        let market = MarketPrimitives {
            q: 1.0,
            c_bar: rng.gen_range(0.5..2.0),
            c_bar_l: rng.gen_range(0.01..0.5),
            r: rng.gen_range(0.5..4.0),
            g,
        };
        let mut model = Model { market, policy };
        let eq = closed_form_equilibrium(&model);
        // place sqrt(q) strictly between the two prices
        let t: f64 = rng.gen_range(0.1..0.9);
        let sq = eq.p_ue + t * (eq.p_le - eq.p_ue);
        model.market.q = sq * sq;
        model.market.validate().ok()?;
        let eq = closed_form_equilibrium(&model);
        let c = eq.conditions?;
        let s = model.spread();
        let ok = c.all_hold()
            && c.cond1.margin > 1e-3 * s
            && c.cond2.margin > 1e-3 * s
            && c.cond3.margin > 1e-3 * s;
        let push = model.prob().dp * model.market.r + model.alpha().d_g;
        let regime_ok = match self.regime {
            GuidanceRegime::Any => true,
            GuidanceRegime::PricesRise => push > 1e-3,
            GuidanceRegime::PricesFall => push < -1e-3,
        };
        (ok && regime_ok).then_some(model)
    }
}
