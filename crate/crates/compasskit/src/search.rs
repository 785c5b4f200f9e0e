//! Feasible-configuration search: Latin hypercube seeding, inverse-distance
//! weighted gradient estimation, hill-climbing toward the feasible region,
//! breadth-first lateral expansion inside it, plus the exhaustive grid
//! baseline and the recall/savings comparison.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{progressive_evaluate, BudgetSchedule, Classification, EvalRecord};
use crate::oracle::AccuracyOracle;
use crate::rng;
use crate::space::{ConfigSpace, Configuration};

/// Knobs of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Latin hypercube seed count.
    pub n_init: usize,
    /// Neighbors used for gradient interpolation.
    pub k_neighbors: usize,
    /// Inverse-distance weight exponent.
    pub idw_exponent: f64,
    /// Axes at or below this quantile of gradient magnitude are expanded
    /// laterally. 1.0 expands every axis, which is what the breadth-first
    /// completeness argument assumes.
    pub low_gradient_quantile: f64,
    /// Accuracy threshold.
    pub tau: f64,
    /// Re-seed this many times if the queue drains with no feasible
    /// configuration found.
    pub restart_rounds: usize,
}

impl SearchParams {
    pub fn new(tau: f64) -> Self {
        Self {
            n_init: 40,
            k_neighbors: 5,
            idw_exponent: 2.0,
            low_gradient_quantile: 1.0,
            tau,
            restart_rounds: 0,
        }
    }
}

/// Per-axis finite-difference gradient interpolated from nearby evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub components: Vec<f64>,
    /// Number of evaluated neighbors that informed the estimate.
    pub support: usize,
}

impl GradientEstimate {
    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|v| *v == 0.0)
    }
}

/// Counters accumulated over one search run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub evaluations: u64,
    pub samples_spent: u64,
    pub hill_climb_steps: u64,
    pub lateral_expansions: u64,
    pub restarts: u64,
}

/// One row of the convergence trace: one evaluation in pop order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub order: u64,
    pub config: Configuration,
    pub classification: Classification,
    pub samples: u64,
    pub queue_size: usize,
}

/// Everything a search run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub tau: f64,
    /// Feasible configurations with their full evaluation records, in
    /// discovery order.
    pub feasible: Vec<EvalRecord>,
    /// Every evaluation, in pop order.
    pub evaluated: Vec<EvalRecord>,
    pub trace: Vec<TraceRow>,
    pub stats: SearchStats,
}

impl SearchOutcome {
    pub fn feasible_configs(&self) -> HashSet<Configuration> {
        self.feasible.iter().map(|r| r.config.clone()).collect()
    }
}

/// Evaluated set ordered by insertion, with O(1) membership.
#[derive(Debug, Default)]
pub struct Evaluated {
    records: Vec<EvalRecord>,
    index: HashMap<Configuration, usize>,
}

impl Evaluated {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        self.index.contains_key(c)
    }

    pub fn acc_of(&self, c: &Configuration) -> Option<f64> {
        self.index.get(c).map(|&i| self.records[i].acc_hat)
    }

    pub fn push(&mut self, rec: EvalRecord) {
        debug_assert!(!self.contains(&rec.config), "double evaluation");
        self.index.insert(rec.config.clone(), self.records.len());
        self.records.push(rec);
    }
}

/// Inverse-distance weighted finite-difference gradient at `config`,
/// interpolated from the `k` nearest evaluated configurations.
///
/// The reference accuracy is the config's own estimate when it has one, else
/// the nearest evaluated point's. Per axis, each neighbor with a nonzero
/// delta contributes `w * (acc_n - acc_ref) / dx`, weights `w = d^-p`, and
/// the axis sum is normalized by the weights that contributed to it.
/// Numeric deltas are signed normalized differences; categorical deltas
/// count as 1. Neighbors at distance zero are skipped.
pub fn idw_gradient(
    space: &ConfigSpace,
    config: &Configuration,
    evaluated: &Evaluated,
    k_neighbors: usize,
    idw_exponent: f64,
) -> GradientEstimate {
    let n_axes = space.n_params();
    let mut ranked: Vec<(f64, usize)> = evaluated
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, rec)| {
            let d = space.distance(config, &rec.config);
            (d > 0.0).then_some((d, i))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    ranked.truncate(k_neighbors);

    if ranked.is_empty() {
        return GradientEstimate {
            components: vec![0.0; n_axes],
            support: 0,
        };
    }

    let acc_ref = evaluated
        .acc_of(config)
        .unwrap_or_else(|| evaluated.records[ranked[0].1].acc_hat);

    let mut numer = vec![0.0f64; n_axes];
    let mut denom = vec![0.0f64; n_axes];
    for &(d, i) in &ranked {
        let rec = &evaluated.records[i];
        let w = d.powf(-idw_exponent);
        let d_acc = rec.acc_hat - acc_ref;
        for axis in 0..n_axes {
            let (ia, ib) = (rec.config.indices()[axis], config.indices()[axis]);
            if ia == ib {
                continue;
            }
            let dx = if space.params()[axis].kind.is_numeric() {
                let coord = |idx: usize| {
                    let m = space.params()[axis].cardinality();
                    if m <= 1 { 0.0 } else { idx as f64 / (m - 1) as f64 }
                };
                let delta = coord(ia) - coord(ib);
                if delta == 0.0 {
                    continue;
                }
                delta
            } else {
                1.0
            };
            numer[axis] += w * d_acc / dx;
            denom[axis] += w;
        }
    }

    let components = numer
        .into_iter()
        .zip(&denom)
        .map(|(n, &d)| if d > 0.0 { n / d } else { 0.0 })
        .collect();
    GradientEstimate {
        components,
        support: ranked.len(),
    }
}

/// Candidates for climbing out of the infeasible region: one adjacent step
/// per axis in the direction of that axis's gradient component, ordered by
/// gradient magnitude. Categorical axes move toward the best-scoring
/// evaluated category, falling back to the first unevaluated category.
/// A gradient that is zero everywhere falls back to exploring all
/// unevaluated neighbors. Already-evaluated and already-queued candidates
/// are filtered out.
pub fn hill_climb(
    space: &ConfigSpace,
    config: &Configuration,
    gradient: &GradientEstimate,
    evaluated: &Evaluated,
    queued: &HashSet<Configuration>,
) -> Vec<Configuration> {
    let fresh = |c: &Configuration| !evaluated.contains(c) && !queued.contains(c);

    if gradient.is_zero() {
        return space
            .neighbors(config)
            .into_iter()
            .filter(fresh)
            .collect();
    }

    let mut scored: Vec<(f64, usize, Configuration)> = Vec::new();
    for (axis, p) in space.params().iter().enumerate() {
        let v = gradient.components[axis];
        let idx = config.indices()[axis];
        let candidate = if p.kind.is_numeric() {
            if v == 0.0 {
                None
            } else if v > 0.0 {
                space.with_axis(config, axis, idx + 1)
            } else if idx > 0 {
                space.with_axis(config, axis, idx - 1)
            } else {
                None
            }
        } else {
            categorical_step(space, config, axis, evaluated, queued)
        };
        if let Some(c) = candidate {
            if fresh(&c) {
                scored.push((v.abs(), axis, c));
            }
        }
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, _, c)| c).collect()
}

/// Best-scoring evaluated sibling category if it is still unevaluated and
/// unqueued, else the first unevaluated category by index.
fn categorical_step(
    space: &ConfigSpace,
    config: &Configuration,
    axis: usize,
    evaluated: &Evaluated,
    queued: &HashSet<Configuration>,
) -> Option<Configuration> {
    let own = config.indices()[axis];
    let m = space.params()[axis].cardinality();

    let mut best: Option<(f64, Configuration)> = None;
    let mut first_fresh = None;
    for cat in 0..m {
        if cat == own {
            continue;
        }
        let Some(sibling) = space.with_axis(config, axis, cat) else {
            continue;
        };
        if let Some(acc) = evaluated.acc_of(&sibling) {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, sibling));
            }
        } else if first_fresh.is_none() && !queued.contains(&sibling) {
            first_fresh = Some(sibling);
        }
    }
    match best {
        Some((_, c)) if !evaluated.contains(&c) && !queued.contains(&c) => Some(c),
        _ => first_fresh,
    }
}

/// Candidates for tracing the feasible boundary from a feasible config:
/// both adjacent steps along every low-gradient numeric axis plus all
/// unevaluated sibling categories on low-gradient categorical axes.
pub fn lateral_expand(
    space: &ConfigSpace,
    config: &Configuration,
    evaluated: &Evaluated,
    queued: &HashSet<Configuration>,
    params: &SearchParams,
) -> Vec<Configuration> {
    let gradient = idw_gradient(space, config, evaluated, params.k_neighbors, params.idw_exponent);
    let mags: Vec<f64> = gradient.components.iter().map(|v| v.abs()).collect();
    let threshold = quantile(&mags, params.low_gradient_quantile);

    let fresh = |c: &Configuration| !evaluated.contains(c) && !queued.contains(c);
    let mut out = Vec::new();
    for (axis, p) in space.params().iter().enumerate() {
        if mags[axis] > threshold {
            continue;
        }
        let idx = config.indices()[axis];
        if p.kind.is_numeric() {
            if idx > 0 {
                if let Some(c) = space.with_axis(config, axis, idx - 1) {
                    if fresh(&c) {
                        out.push(c);
                    }
                }
            }
            if let Some(c) = space.with_axis(config, axis, idx + 1) {
                if fresh(&c) {
                    out.push(c);
                }
            }
        } else {
            for cat in 0..p.cardinality() {
                if cat == idx {
                    continue;
                }
                if let Some(c) = space.with_axis(config, axis, cat) {
                    if fresh(&c) {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

/// Nearest-rank quantile of a magnitude set; q = 1 returns the maximum.
fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// The full search: seed with a Latin hypercube, then pop a FIFO queue,
/// progressively evaluate, and either expand laterally (feasible) or climb
/// the estimated gradient (infeasible) until the queue drains. Evaluates
/// each configuration at most once; terminates after at most |C| pops.
pub fn compass_v_search(
    space: &ConfigSpace,
    oracle: &AccuracyOracle,
    params: &SearchParams,
    schedule: &BudgetSchedule,
    seed: u64,
) -> Result<SearchOutcome> {
    let mut queue: VecDeque<Configuration> = VecDeque::new();
    let mut queued: HashSet<Configuration> = HashSet::new();
    let mut evaluated = Evaluated::new();
    let mut feasible: Vec<EvalRecord> = Vec::new();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut stats = SearchStats::default();

    for c in space.lhs_sample(params.n_init, seed) {
        if queued.insert(c.clone()) {
            queue.push_back(c);
        }
    }

    let mut round = 0;
    loop {
        while let Some(config) = queue.pop_front() {
            queued.remove(&config);
            if evaluated.contains(&config) {
                continue;
            }
            let mut rng = rng::stream(seed, "eval", config.indices());
            let rec = progressive_evaluate(oracle, space, &config, schedule, params.tau, &mut rng)?;
            stats.evaluations += 1;
            stats.samples_spent += rec.samples_spent;

            let is_feasible = rec.is_feasible(params.tau);
            evaluated.push(rec.clone());

            let candidates = if is_feasible {
                feasible.push(rec.clone());
                stats.lateral_expansions += 1;
                lateral_expand(space, &config, &evaluated, &queued, params)
            } else {
                let gradient = idw_gradient(
                    space,
                    &config,
                    &evaluated,
                    params.k_neighbors,
                    params.idw_exponent,
                );
                stats.hill_climb_steps += 1;
                hill_climb(space, &config, &gradient, &evaluated, &queued)
            };
            for c in candidates {
                if queued.insert(c.clone()) {
                    queue.push_back(c);
                }
            }
            trace.push(TraceRow {
                order: stats.evaluations,
                config,
                classification: rec.classification,
                samples: rec.samples_spent,
                queue_size: queue.len(),
            });
        }

        // optional re-seeding when a round ends empty-handed
        if feasible.is_empty()
            && round < params.restart_rounds
            && evaluated.records.len() < space.cardinality()
        {
            round += 1;
            stats.restarts += 1;
            for c in space.lhs_sample(params.n_init, rng::stream_id(seed, "reseed", &[round])) {
                if !evaluated.contains(&c) && queued.insert(c.clone()) {
                    queue.push_back(c);
                }
            }
            if queue.is_empty() {
                if let Some(c) = space.enumerate().find(|c| !evaluated.contains(c)) {
                    queued.insert(c.clone());
                    queue.push_back(c);
                }
            }
        } else {
            break;
        }
    }

    Ok(SearchOutcome {
        tau: params.tau,
        feasible,
        evaluated: evaluated.records,
        trace,
        stats,
    })
}

/// Per-configuration result of the exhaustive baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRecord {
    pub config: Configuration,
    pub successes: u64,
    pub acc_hat: f64,
    pub feasible: bool,
    /// What the progressive schedule would have classified on the same
    /// trial prefix, and how many samples it would have spent.
    pub progressive_classification: Classification,
    pub progressive_samples: u64,
}

/// Ground truth by grid search: every configuration at the full budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub tau: f64,
    pub records: Vec<GridRecord>,
    /// |C| * B_max.
    pub total_samples: u64,
    /// What the same schedule's early stopping would have spent.
    pub progressive_samples: u64,
}

impl GridOutcome {
    pub fn feasible_configs(&self) -> HashSet<Configuration> {
        self.records
            .iter()
            .filter(|r| r.feasible)
            .map(|r| r.config.clone())
            .collect()
    }

    pub fn feasible_count(&self) -> usize {
        self.records.iter().filter(|r| r.feasible).count()
    }
}

/// Evaluates every configuration with exactly `B_max` samples; feasible iff
/// the point estimate reaches the threshold. Each configuration draws from
/// the same per-configuration stream the search uses, so the two routes see
/// identical trial prefixes. The progressive replay reuses the drawn prefix
/// rather than new randomness.
pub fn grid_search_oracle(
    space: &ConfigSpace,
    oracle: &AccuracyOracle,
    tau: f64,
    schedule: &BudgetSchedule,
    seed: u64,
) -> Result<GridOutcome> {
    let b_max = schedule.b_max();
    let mut records = Vec::with_capacity(space.cardinality());
    let mut progressive_total = 0u64;

    for config in space.enumerate() {
        let mut rng = rng::stream(seed, "eval", config.indices());
        let mut cumulative = Vec::with_capacity(schedule.levels().len());
        let mut successes = 0u64;
        let mut drawn = 0u64;
        for &level in schedule.levels() {
            successes += oracle.sample_trials(space, &config, level - drawn, &mut rng)?;
            drawn = level;
            cumulative.push(successes);
        }

        let acc_hat = successes as f64 / b_max as f64;
        let feasible = acc_hat >= tau;

        let mut prog_class = Classification::Uncertain;
        let mut prog_samples = b_max;
        for (&level, &succ) in schedule.levels().iter().zip(&cumulative) {
            let (lo, hi) = crate::eval::wilson_interval(succ, level, schedule.z())?;
            if lo > tau {
                prog_class = Classification::Feasible;
                prog_samples = level;
                break;
            }
            if hi < tau {
                prog_class = Classification::Infeasible;
                prog_samples = level;
                break;
            }
        }
        progressive_total += prog_samples;

        records.push(GridRecord {
            config,
            successes,
            acc_hat,
            feasible,
            progressive_classification: prog_class,
            progressive_samples: prog_samples,
        });
    }

    Ok(GridOutcome {
        tau,
        records,
        total_samples: space.cardinality() as u64 * b_max,
        progressive_samples: progressive_total,
    })
}

/// Recall and sample-efficiency comparison of a search run against the grid
/// baseline on the same space, oracle, threshold, and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecallSavings {
    pub recall: f64,
    /// 1 - samples_search / samples_grid, grid at full budget.
    pub savings: f64,
    /// Same numerator against a grid that also early-stops per config.
    pub fair_savings: f64,
    pub false_positives: usize,
    pub feasible_search: usize,
    pub feasible_grid: usize,
    pub samples_search: u64,
    pub samples_grid: u64,
}

pub fn recall_and_savings(search: &SearchOutcome, grid: &GridOutcome) -> RecallSavings {
    let f_search = search.feasible_configs();
    let f_grid = grid.feasible_configs();
    let hit = f_search.intersection(&f_grid).count();
    let recall = if f_grid.is_empty() {
        1.0
    } else {
        hit as f64 / f_grid.len() as f64
    };
    RecallSavings {
        recall,
        savings: 1.0 - search.stats.samples_spent as f64 / grid.total_samples as f64,
        fair_savings: 1.0 - search.stats.samples_spent as f64 / grid.progressive_samples as f64,
        false_positives: f_search.difference(&f_grid).count(),
        feasible_search: f_search.len(),
        feasible_grid: f_grid.len(),
        samples_search: search.stats.samples_spent,
        samples_grid: grid.total_samples,
    }
}

/// Probability that at least one of `n_init` independent seeds lands in a
/// feasible region of fraction `f`.
pub fn seeding_probability(feasible_fraction: f64, n_init: usize) -> f64 {
    1.0 - (1.0 - feasible_fraction).powi(n_init as i32)
}
