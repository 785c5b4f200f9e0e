//! Synthetic task-accuracy oracles.
//!
//! Real workflows score configurations against a dataset; here a deterministic
//! map Configuration -> p in [0,1] stands in, and per-configuration trials are
//! Bernoulli draws against that p. Oracle families are parameterized from the
//! scenario file so the feasible fraction can be swept across regimes.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::space::{ConfigSpace, Configuration};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleFamily {
    /// Additive monotone effects plus optional interaction terms.
    RagLike,
    /// Same machinery, but non-monotone per-axis weights are allowed, for
    /// detection-cascade style confidence-threshold bumps.
    CascadeLike,
    /// Per-configuration accuracies read verbatim from a table.
    CustomTable,
}

/// Additive contribution of one axis.
#[derive(Debug, Clone)]
pub enum AxisEffect {
    /// `gain * g(x)` on the normalized coordinate, where g is a saturating
    /// monotone curve (`rate == 0` degenerates to linear).
    Saturating { axis: usize, gain: f64, rate: f64 },
    /// One additive value per admissible value of the axis.
    Levels { axis: usize, levels: Vec<f64> },
}

/// Product-form interaction: `coeff * prod_i weight_i(value index on axis i)`.
#[derive(Debug, Clone)]
pub struct Interaction {
    pub coeff: f64,
    pub factors: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct AccuracyOracle {
    family: OracleFamily,
    base: f64,
    effects: Vec<AxisEffect>,
    interactions: Vec<Interaction>,
    table: HashMap<Configuration, f64>,
}

impl AccuracyOracle {
    pub fn parametric(
        family: OracleFamily,
        base: f64,
        effects: Vec<AxisEffect>,
        interactions: Vec<Interaction>,
    ) -> Result<Self> {
        if matches!(family, OracleFamily::CustomTable) {
            return Err(Error::Oracle(
                "custom-table oracles are built from a table, not coefficients".into(),
            ));
        }
        Ok(Self {
            family,
            base,
            effects,
            interactions,
            table: HashMap::new(),
        })
    }

    pub fn custom_table(table: HashMap<Configuration, f64>) -> Result<Self> {
        for (c, p) in &table {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Oracle(format!(
                    "table accuracy {p} for configuration {c} is outside [0,1]"
                )));
            }
        }
        Ok(Self {
            family: OracleFamily::CustomTable,
            base: 0.0,
            effects: Vec::new(),
            interactions: Vec::new(),
            table,
        })
    }

    pub fn constant(p: f64) -> Self {
        Self {
            family: OracleFamily::RagLike,
            base: p,
            effects: Vec::new(),
            interactions: Vec::new(),
            table: HashMap::new(),
        }
    }

    pub fn family(&self) -> OracleFamily {
        self.family
    }

    /// Ground-truth accuracy of one configuration, clamped to [0,1].
    pub fn true_accuracy(&self, space: &ConfigSpace, config: &Configuration) -> Result<f64> {
        if self.family == OracleFamily::CustomTable {
            return self
                .table
                .get(config)
                .copied()
                .ok_or_else(|| Error::Oracle(format!("no table entry for configuration {config}")));
        }
        let point = space.normalize(config);
        let mut p = self.base;
        for effect in &self.effects {
            p += match effect {
                AxisEffect::Saturating { axis, gain, rate } => {
                    gain * saturating(point.coords[*axis], *rate)
                }
                AxisEffect::Levels { axis, levels } => levels[config.indices()[*axis]],
            };
        }
        for term in &self.interactions {
            let mut w = term.coeff;
            for (axis, weights) in &term.factors {
                w *= weights[config.indices()[*axis]];
            }
            p += w;
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// Draws `n` Bernoulli trials against the configuration's true accuracy.
    ///
    /// Trials are drawn one at a time so that chunked draws from the same
    /// stream form consistent prefixes: evaluating 30 then 30 more trials
    /// sees exactly the first 60 trials of a single 60-trial evaluation.
    pub fn sample_trials(
        &self,
        space: &ConfigSpace,
        config: &Configuration,
        n: u64,
        rng: &mut impl Rng,
    ) -> Result<u64> {
        let p = self.true_accuracy(space, config)?;
        let mut successes = 0;
        for _ in 0..n {
            if rng.random::<f64>() < p {
                successes += 1;
            }
        }
        Ok(successes)
    }
}

/// Saturating monotone curve on [0,1] with g(0)=0 and g(1)=1.
fn saturating(x: f64, rate: f64) -> f64 {
    if rate == 0.0 {
        x
    } else {
        (1.0 - (-rate * x).exp()) / (1.0 - (-rate).exp())
    }
}
