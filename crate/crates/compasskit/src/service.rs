//! Service-time models standing in for target hardware, and latency
//! profiling against them.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::space::{ConfigSpace, Configuration};

/// z value of the 95th percentile of the standard normal.
pub const Z95: f64 = 1.6448536269514722;

/// Additive contribution of one axis to the mean service time.
#[derive(Debug, Clone)]
pub enum LatencyTerm {
    /// One additive value (ms) per admissible value of the axis.
    Levels { axis: usize, levels_ms: Vec<f64> },
    /// `gain_ms * x` on the normalized coordinate.
    Linear { axis: usize, gain_ms: f64 },
}

#[derive(Debug, Clone)]
enum Family {
    Deterministic,
    /// Log-space sigma; mu is set per configuration so the mean matches the
    /// configured mean. Positive and right-skewed, which is the shape LLM
    /// serving latencies take.
    Lognormal { sigma: f64 },
    /// Resampling from recorded per-configuration latency traces.
    EmpiricalTrace {
        traces: HashMap<Configuration, Vec<f64>>,
    },
}

/// Per-configuration service-time distribution.
#[derive(Debug, Clone)]
pub struct ServiceModel {
    family: Family,
    base_ms: f64,
    terms: Vec<LatencyTerm>,
}

impl ServiceModel {
    pub fn deterministic(base_ms: f64, terms: Vec<LatencyTerm>) -> Self {
        Self {
            family: Family::Deterministic,
            base_ms,
            terms,
        }
    }

    pub fn lognormal(base_ms: f64, terms: Vec<LatencyTerm>, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Planning("lognormal sigma must be positive".into()));
        }
        Ok(Self {
            family: Family::Lognormal { sigma },
            base_ms,
            terms,
        })
    }

    /// Sigma of a lognormal whose P95/mean ratio matches `ratio`.
    pub fn lognormal_sigma_for_p95_ratio(ratio: f64) -> Result<f64> {
        if ratio <= 1.0 {
            return Err(Error::Planning(format!(
                "p95/mean ratio {ratio} must exceed 1"
            )));
        }
        let disc = Z95 * Z95 - 2.0 * ratio.ln();
        if disc < 0.0 {
            return Err(Error::Planning(format!(
                "p95/mean ratio {ratio} is not reachable by a lognormal"
            )));
        }
        Ok(Z95 - disc.sqrt())
    }

    pub fn empirical(traces: HashMap<Configuration, Vec<f64>>) -> Result<Self> {
        for (c, t) in &traces {
            if t.is_empty() {
                return Err(Error::Planning(format!("empty latency trace for {c}")));
            }
            if t.iter().any(|&x| !x.is_finite() || x <= 0.0) {
                return Err(Error::Planning(format!(
                    "non-positive latency sample in trace for {c}"
                )));
            }
        }
        Ok(Self {
            family: Family::EmpiricalTrace { traces },
            base_ms: 0.0,
            terms: Vec::new(),
        })
    }

    /// Mean service time (ms) of a configuration under this model.
    pub fn mean_ms(&self, space: &ConfigSpace, config: &Configuration) -> Result<f64> {
        if let Family::EmpiricalTrace { traces } = &self.family {
            let t = traces
                .get(config)
                .ok_or_else(|| Error::Planning(format!("no latency trace for {config}")))?;
            return Ok(t.iter().sum::<f64>() / t.len() as f64);
        }
        let point = space.normalize(config);
        let mut mean = self.base_ms;
        for term in &self.terms {
            mean += match term {
                LatencyTerm::Levels { axis, levels_ms } => levels_ms[config.indices()[*axis]],
                LatencyTerm::Linear { axis, gain_ms } => gain_ms * point.coords[*axis],
            };
        }
        if !mean.is_finite() || mean <= 0.0 {
            return Err(Error::Planning(format!(
                "service model mean {mean} ms for {config} is not positive"
            )));
        }
        Ok(mean)
    }

    /// One service-time draw (ms).
    pub fn sample_ms(
        &self,
        space: &ConfigSpace,
        config: &Configuration,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        match &self.family {
            Family::Deterministic => self.mean_ms(space, config),
            Family::Lognormal { sigma } => {
                let mean = self.mean_ms(space, config)?;
                let mu = mean.ln() - sigma * sigma / 2.0;
                let dist = LogNormal::new(mu, *sigma)
                    .map_err(|e| Error::Planning(format!("lognormal: {e}")))?;
                Ok(dist.sample(rng))
            }
            Family::EmpiricalTrace { traces } => {
                let t = traces
                    .get(config)
                    .ok_or_else(|| Error::Planning(format!("no latency trace for {config}")))?;
                Ok(t[rng.random_range(0..t.len())])
            }
        }
    }
}

/// Mean and tail latency measured for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
}

/// Nearest-rank percentile of a sample set.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((pct / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Draws `n_runs` service times and records mean and nearest-rank P95.
/// P95 needs tail mass, so fewer than 100 runs are rejected. A profile whose
/// mean exceeds its P95 is re-drawn with a doubled run count.
pub fn profile_latency(
    model: &ServiceModel,
    space: &ConfigSpace,
    config: &Configuration,
    n_runs: usize,
    seed: u64,
) -> Result<LatencyProfile> {
    if n_runs < 100 {
        return Err(Error::Planning(format!(
            "profiling needs at least 100 runs, got {n_runs}"
        )));
    }
    let mut rng = rng::stream(seed, "profile", config.indices());
    let mut n = n_runs;
    for _ in 0..3 {
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let s = model.sample_ms(space, config, &mut rng)?;
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Planning(format!(
                    "service model produced non-positive latency {s} ms"
                )));
            }
            samples.push(s);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p95 = nearest_rank(&samples, 95.0);
        if mean <= p95 {
            return Ok(LatencyProfile {
                mean_ms: mean,
                p95_ms: p95,
                samples: n,
            });
        }
        n *= 2;
    }
    Err(Error::Planning(format!(
        "profile of {config} kept violating mean <= p95; the service model is badly skewed"
    )))
}
