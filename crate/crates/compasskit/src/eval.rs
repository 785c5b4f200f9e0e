//! Per-configuration accuracy evaluation: Wilson confidence intervals and
//! progressive budgeting with statistical early stopping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::AccuracyOracle;
use crate::space::{ConfigSpace, Configuration};

/// Strictly increasing sample-count levels plus the z value used for the
/// Wilson interval at each level. The last level is the maximum budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    levels: Vec<u64>,
    z: f64,
}

impl BudgetSchedule {
    pub fn new(levels: Vec<u64>, z: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Evaluation("budget schedule has no levels".into()));
        }
        if levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Evaluation(
                "budget levels must be positive and strictly increasing".into(),
            ));
        }
        if !z.is_finite() || z <= 0.0 {
            return Err(Error::Evaluation("z must be positive".into()));
        }
        Ok(Self { levels, z })
    }

    /// Desk-scale default: {20, 50, 100} at 95% two-sided confidence.
    pub fn default_desk() -> Self {
        Self::new(vec![20, 50, 100], 1.96).unwrap()
    }

    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn b_max(&self) -> u64 {
        *self.levels.last().unwrap()
    }
}

/// Outcome of classifying one configuration against the threshold.
///
/// `Feasible` and `Infeasible` are confident calls backed by the Wilson
/// interval clearing or missing the threshold. `Uncertain` means the maximum
/// budget was exhausted without a confident call; downstream consumers fall
/// back to the point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Feasible,
    Infeasible,
    Uncertain,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Feasible => "feasible",
            Classification::Infeasible => "infeasible",
            Classification::Uncertain => "uncertain",
        };
        f.write_str(s)
    }
}

/// Bernoulli trial counts and the classification for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config: Configuration,
    pub trials: u64,
    pub successes: u64,
    pub acc_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub classification: Classification,
    pub samples_spent: u64,
}

impl EvalRecord {
    /// The feasibility decision: confident classifications stand as-is, and
    /// budget-exhausted records are decided by the point estimate.
    pub fn is_feasible(&self, tau: f64) -> bool {
        match self.classification {
            Classification::Feasible => true,
            Classification::Infeasible => false,
            Classification::Uncertain => self.acc_hat >= tau,
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Evaluation(
            "wilson interval requires at least one trial".into(),
        ));
    }
    if successes > trials {
        return Err(Error::Evaluation(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Evaluation("z must be positive".into()));
    }
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p_hat + z2 / (2.0 * n);
    let margin = z * ((p_hat * (1.0 - p_hat) + z2 / (4.0 * n)) / n).sqrt();
    // at the boundaries the closed form collapses exactly; avoid sqrt rounding
    let lo = if successes == 0 {
        0.0
    } else {
        ((center - margin) / denom).clamp(0.0, 1.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        ((center + margin) / denom).clamp(0.0, 1.0)
    };
    Ok((lo, hi))
}

/// Evaluates one configuration through the budget schedule, accumulating
/// trials across levels and stopping early once the Wilson interval clears
/// (`ci_lo > tau`) or misses (`ci_hi < tau`) the threshold.
pub fn progressive_evaluate(
    oracle: &AccuracyOracle,
    space: &ConfigSpace,
    config: &Configuration,
    schedule: &BudgetSchedule,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<EvalRecord> {
    debug_assert!((0.0..1.0).contains(&tau) && tau > 0.0);
    let mut trials = 0u64;
    let mut successes = 0u64;
    let mut ci = (0.0, 1.0);

    for &level in schedule.levels() {
        successes += oracle.sample_trials(space, config, level - trials, rng)?;
        trials = level;
        ci = wilson_interval(successes, trials, schedule.z())?;
        if ci.0 > tau || ci.1 < tau {
            break;
        }
    }

    let acc_hat = successes as f64 / trials as f64;
    let classification = if ci.0 > tau {
        Classification::Feasible
    } else if ci.1 < tau {
        Classification::Infeasible
    } else {
        Classification::Uncertain
    };
    Ok(EvalRecord {
        config: config.clone(),
        trials,
        successes,
        acc_hat,
        ci_lo: ci.0,
        ci_hi: ci.1,
        classification,
        samples_spent: trials,
    })
}
