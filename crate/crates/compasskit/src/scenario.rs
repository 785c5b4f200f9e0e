//! Scenario files: one declarative TOML document tying together the
//! configuration space, the accuracy oracle, the evaluation schedule, the
//! service-time model, planning defaults, and simulation defaults.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::BudgetSchedule;
use crate::oracle::{AccuracyOracle, AxisEffect, Interaction, OracleFamily};
use crate::search::SearchParams;
use crate::service::{LatencyTerm, ServiceModel};
use crate::sim::PatternKind;
use crate::space::{ConfigSpace, Configuration, ParamKind, ParamValues, ParameterSpec};

/// TOML numbers arrive as integers or floats; accept both where a float is
/// meant.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn as_f64(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

fn f64s(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.as_f64()).collect()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawValue {
    Num(Num),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[allow(dead_code)]
    schema_version: Option<u32>,
    name: Option<String>,
    space: RawSpace,
    oracle: RawOracle,
    evaluation: RawEvaluation,
    search: Option<RawSearch>,
    service_model: RawServiceModel,
    planning: RawPlanning,
    simulation: RawSimulation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    /// Declared product cardinality before exclusions; checked when present.
    cardinality: Option<usize>,
    exclude: Option<Vec<Vec<usize>>>,
    params: Vec<RawParam>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    kind: ParamKind,
    values: Vec<RawValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    family: String,
    base: Option<Num>,
    table_path: Option<String>,
    effects: Option<Vec<RawEffect>>,
    interactions: Option<Vec<RawInteraction>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEffect {
    param: String,
    gain: Option<Num>,
    rate: Option<Num>,
    levels: Option<Vec<Num>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInteraction {
    coeff: Num,
    factors: Vec<RawFactor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFactor {
    param: String,
    levels: Vec<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    schedule: Vec<u64>,
    z: Option<Num>,
    tau: Vec<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    n_init: Option<usize>,
    k_neighbors: Option<usize>,
    idw_exponent: Option<Num>,
    low_gradient_quantile: Option<Num>,
    restart_rounds: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServiceModel {
    family: String,
    base_ms: Option<Num>,
    trace_path: Option<String>,
    lognormal: Option<RawLognormal>,
    terms: Option<Vec<RawTerm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLognormal {
    sigma: Option<Num>,
    p95_ratio: Option<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    param: String,
    levels_ms: Option<Vec<Num>>,
    gain_ms: Option<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanning {
    tau: Num,
    slo_ms: Vec<Num>,
    slack_buffer_ms: Option<Num>,
    cooldown_up_s: Option<Num>,
    cooldown_down_s: Option<Num>,
    profile_runs: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    patterns: Vec<String>,
    base_qps: Num,
    duration_s: Num,
    seeds: Vec<u64>,
    static_baselines: Option<Vec<usize>>,
    switch_latency_ms: Option<Num>,
    spike_multiplier: Option<Num>,
}

/// Planning-stage defaults from the scenario.
#[derive(Debug, Clone)]
pub struct PlanningSpec {
    /// Which threshold's feasible set feeds deployment planning.
    pub tau: f64,
    pub slo_ms: Vec<f64>,
    /// Slack buffer; when absent, 10% of the SLO is used.
    pub slack_buffer_ms: Option<f64>,
    pub cooldown_up_s: f64,
    pub cooldown_down_s: f64,
    pub profile_runs: usize,
}

/// Simulation-stage defaults from the scenario.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub patterns: Vec<PatternKind>,
    pub base_qps: f64,
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    /// Pareto-front entry indices run as static baselines; `None` runs all.
    pub static_baselines: Option<Vec<usize>>,
    pub switch_latency_ms: f64,
    pub spike_multiplier: f64,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub space: ConfigSpace,
    pub oracle: AccuracyOracle,
    pub schedule: BudgetSchedule,
    /// Thresholds swept by `search` and `compare`.
    pub taus: Vec<f64>,
    pub service_model: ServiceModel,
    pub planning: PlanningSpec,
    pub simulation: SimulationSpec,
    search_defaults: SearchParams,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidScenario(format!("cannot read scenario file {}: {e}", path.display()))
        })?;
        let raw: RawScenario = toml::from_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let name = raw
            .name
            .clone()
            .or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| "scenario".into());
        Self::build(raw, name, dir)
    }

    fn build(raw: RawScenario, name: String, dir: &Path) -> Result<Self> {
        let space = build_space(&raw.space)?;
        let oracle = build_oracle(&raw.oracle, &space, dir)?;
        let schedule = BudgetSchedule::new(
            raw.evaluation.schedule.clone(),
            raw.evaluation.z.map_or(1.96, Num::as_f64),
        )?;

        let taus = f64s(&raw.evaluation.tau);
        if taus.is_empty() {
            return Err(Error::InvalidScenario("evaluation.tau list is empty".into()));
        }
        for &t in &taus {
            check_tau(t)?;
        }

        let mut search_defaults = SearchParams::new(taus[0]);
        if let Some(s) = &raw.search {
            if let Some(v) = s.n_init {
                search_defaults.n_init = v;
            }
            if let Some(v) = s.k_neighbors {
                search_defaults.k_neighbors = v;
            }
            if let Some(v) = s.idw_exponent {
                search_defaults.idw_exponent = v.as_f64();
            }
            if let Some(v) = s.low_gradient_quantile {
                search_defaults.low_gradient_quantile = v.as_f64();
            }
            if let Some(v) = s.restart_rounds {
                search_defaults.restart_rounds = v;
            }
        }
        if search_defaults.n_init == 0 || search_defaults.k_neighbors == 0 {
            return Err(Error::InvalidScenario(
                "search.n_init and search.k_neighbors must be >= 1".into(),
            ));
        }

        let service_model = build_service_model(&raw.service_model, &space, dir)?;

        let planning_tau = raw.planning.tau.as_f64();
        check_tau(planning_tau)?;
        let slo_ms = f64s(&raw.planning.slo_ms);
        if slo_ms.is_empty() || slo_ms.iter().any(|&l| !l.is_finite() || l <= 0.0) {
            return Err(Error::InvalidScenario(
                "planning.slo_ms must list positive SLOs".into(),
            ));
        }
        let planning = PlanningSpec {
            tau: planning_tau,
            slo_ms,
            slack_buffer_ms: raw.planning.slack_buffer_ms.map(Num::as_f64),
            cooldown_up_s: raw.planning.cooldown_up_s.map_or(0.0, Num::as_f64),
            cooldown_down_s: raw.planning.cooldown_down_s.map_or(5.0, Num::as_f64),
            profile_runs: raw.planning.profile_runs.unwrap_or(1000),
        };

        let patterns = raw
            .simulation
            .patterns
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<PatternKind>>>()?;
        let simulation = SimulationSpec {
            patterns,
            base_qps: raw.simulation.base_qps.as_f64(),
            duration_s: raw.simulation.duration_s.as_f64(),
            seeds: raw.simulation.seeds.clone(),
            static_baselines: raw.simulation.static_baselines.clone(),
            switch_latency_ms: raw.simulation.switch_latency_ms.map_or(10.0, Num::as_f64),
            spike_multiplier: raw.simulation.spike_multiplier.map_or(4.0, Num::as_f64),
        };
        if simulation.base_qps <= 0.0 || simulation.duration_s <= 0.0 {
            return Err(Error::InvalidScenario(
                "simulation.base_qps and duration_s must be positive".into(),
            ));
        }
        if simulation.seeds.is_empty() {
            return Err(Error::InvalidScenario("simulation.seeds is empty".into()));
        }

        Ok(Self {
            name,
            space,
            oracle,
            schedule,
            taus,
            service_model,
            planning,
            simulation,
            search_defaults,
        })
    }

    /// Search parameters for one threshold, from the scenario's defaults.
    pub fn search_params(&self, tau: f64) -> SearchParams {
        SearchParams {
            tau,
            ..self.search_defaults.clone()
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_nan() || tau <= 0.0 || tau >= 1.0 {
        return Err(Error::InvalidScenario(format!(
            "threshold tau {tau} must lie strictly inside (0, 1)"
        )));
    }
    Ok(())
}

fn build_space(raw: &RawSpace) -> Result<ConfigSpace> {
    let mut params = Vec::with_capacity(raw.params.len());
    for p in &raw.params {
        let values = match p.kind {
            ParamKind::Categorical => {
                let labels = p
                    .values
                    .iter()
                    .map(|v| match v {
                        RawValue::Text(s) => Ok(s.clone()),
                        RawValue::Num(_) => Err(Error::InvalidScenario(format!(
                            "categorical parameter '{}' must list string labels",
                            p.name
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ParamValues::Labels(labels)
            }
            ParamKind::OrdinalDiscrete | ParamKind::ContinuousGrid => {
                let nums = p
                    .values
                    .iter()
                    .map(|v| match v {
                        RawValue::Num(n) => Ok(n.as_f64()),
                        RawValue::Text(s) => Err(Error::InvalidScenario(format!(
                            "numeric parameter '{}' lists non-numeric value '{s}'",
                            p.name
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ParamValues::Numbers(nums)
            }
        };
        params.push(ParameterSpec {
            name: p.name.clone(),
            kind: p.kind,
            values,
        });
    }

    if let Some(declared) = raw.cardinality {
        let product: usize = params.iter().map(ParameterSpec::cardinality).product();
        if declared != product {
            return Err(Error::InvalidScenario(format!(
                "declared cardinality {declared} does not match the {product}-point lattice"
            )));
        }
    }

    let excluded = raw
        .exclude
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(Configuration)
        .collect();
    ConfigSpace::new(params, excluded)
}

fn resolve_axis(space: &ConfigSpace, name: &str) -> Result<usize> {
    space.axis_of(name).ok_or_else(|| {
        Error::InvalidScenario(format!("reference to unknown parameter '{name}'"))
    })
}

fn level_vector(space: &ConfigSpace, axis: usize, levels: &[Num], what: &str) -> Result<Vec<f64>> {
    let m = space.params()[axis].cardinality();
    if levels.len() != m {
        return Err(Error::InvalidScenario(format!(
            "{what} for '{}' lists {} levels, parameter has {m} values",
            space.params()[axis].name,
            levels.len()
        )));
    }
    Ok(f64s(levels))
}

fn build_oracle(raw: &RawOracle, space: &ConfigSpace, dir: &Path) -> Result<AccuracyOracle> {
    let family = match raw.family.as_str() {
        "rag-like" => OracleFamily::RagLike,
        "cascade-like" => OracleFamily::CascadeLike,
        "custom-table" => OracleFamily::CustomTable,
        other => {
            return Err(Error::InvalidScenario(format!(
                "unknown oracle family '{other}'"
            )))
        }
    };

    if family == OracleFamily::CustomTable {
        let rel = raw.table_path.as_ref().ok_or_else(|| {
            Error::InvalidScenario("custom-table oracle needs table_path".into())
        })?;
        let table = load_accuracy_table(&dir.join(rel), space)?;
        return AccuracyOracle::custom_table(table);
    }

    let mut effects = Vec::new();
    for e in raw.effects.as_deref().unwrap_or_default() {
        let axis = resolve_axis(space, &e.param)?;
        let effect = match (&e.levels, e.gain) {
            (Some(levels), None) => AxisEffect::Levels {
                axis,
                levels: level_vector(space, axis, levels, "oracle effect")?,
            },
            (None, Some(gain)) => {
                if !space.params()[axis].kind.is_numeric() {
                    return Err(Error::InvalidScenario(format!(
                        "gain effect on categorical parameter '{}'; use levels",
                        e.param
                    )));
                }
                AxisEffect::Saturating {
                    axis,
                    gain: gain.as_f64(),
                    rate: e.rate.map_or(0.0, Num::as_f64),
                }
            }
            _ => {
                return Err(Error::InvalidScenario(format!(
                    "oracle effect on '{}' needs exactly one of gain or levels",
                    e.param
                )))
            }
        };
        effects.push(effect);
    }

    let mut interactions = Vec::new();
    for i in raw.interactions.as_deref().unwrap_or_default() {
        let factors = i
            .factors
            .iter()
            .map(|f| {
                let axis = resolve_axis(space, &f.param)?;
                Ok((axis, level_vector(space, axis, &f.levels, "interaction factor")?))
            })
            .collect::<Result<Vec<_>>>()?;
        if factors.is_empty() {
            return Err(Error::InvalidScenario("interaction with no factors".into()));
        }
        interactions.push(Interaction {
            coeff: i.coeff.as_f64(),
            factors,
        });
    }

    AccuracyOracle::parametric(family, raw.base.map_or(0.0, Num::as_f64), effects, interactions)
}

fn build_service_model(
    raw: &RawServiceModel,
    space: &ConfigSpace,
    dir: &Path,
) -> Result<ServiceModel> {
    let mut terms = Vec::new();
    for t in raw.terms.as_deref().unwrap_or_default() {
        let axis = resolve_axis(space, &t.param)?;
        let term = match (&t.levels_ms, t.gain_ms) {
            (Some(levels), None) => LatencyTerm::Levels {
                axis,
                levels_ms: level_vector(space, axis, levels, "latency term")?,
            },
            (None, Some(gain)) => LatencyTerm::Linear {
                axis,
                gain_ms: gain.as_f64(),
            },
            _ => {
                return Err(Error::InvalidScenario(format!(
                    "latency term on '{}' needs exactly one of gain_ms or levels_ms",
                    t.param
                )))
            }
        };
        terms.push(term);
    }
    let base_ms = raw.base_ms.map_or(0.0, Num::as_f64);

    match raw.family.as_str() {
        "deterministic" => Ok(ServiceModel::deterministic(base_ms, terms)),
        "lognormal" => {
            let ln = raw.lognormal.as_ref().ok_or_else(|| {
                Error::InvalidScenario("lognormal service model needs a [service_model.lognormal] block".into())
            })?;
            let sigma = match (ln.sigma, ln.p95_ratio) {
                (Some(s), None) => s.as_f64(),
                (None, Some(r)) => ServiceModel::lognormal_sigma_for_p95_ratio(r.as_f64())?,
                _ => {
                    return Err(Error::InvalidScenario(
                        "lognormal needs exactly one of sigma or p95_ratio".into(),
                    ))
                }
            };
            ServiceModel::lognormal(base_ms, terms, sigma)
        }
        "empirical-trace" => {
            let rel = raw.trace_path.as_ref().ok_or_else(|| {
                Error::InvalidScenario("empirical-trace service model needs trace_path".into())
            })?;
            let traces = load_latency_traces(&dir.join(rel), space)?;
            ServiceModel::empirical(traces)
        }
        other => Err(Error::InvalidScenario(format!(
            "unknown service model family '{other}'"
        ))),
    }
}

/// Parses a CSV whose leading columns name parameter values and whose last
/// column is read through `consume`.
fn for_each_config_row(
    path: &Path,
    space: &ConfigSpace,
    last_column: &str,
    mut consume: impl FnMut(Configuration, f64) -> Result<()>,
) -> Result<()> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        Error::InvalidScenario(format!("cannot read {}: {e}", path.display()))
    })?;
    let headers = reader.headers()?.clone();
    let expected: Vec<&str> = space.params().iter().map(|p| p.name.as_str()).collect();
    let got: Vec<&str> = headers.iter().collect();
    if got.len() != expected.len() + 1
        || got[..expected.len()] != expected[..]
        || got[expected.len()] != last_column
    {
        return Err(Error::InvalidScenario(format!(
            "{} must have columns {:?} then '{last_column}', found {:?}",
            path.display(),
            expected,
            got
        )));
    }
    for row in reader.records() {
        let row = row?;
        let mut indices = Vec::with_capacity(space.n_params());
        for (axis, p) in space.params().iter().enumerate() {
            let cell = row.get(axis).unwrap_or("").trim();
            let idx = value_index(p, cell).ok_or_else(|| {
                Error::InvalidScenario(format!(
                    "{}: '{cell}' is not an admissible value of '{}'",
                    path.display(),
                    p.name
                ))
            })?;
            indices.push(idx);
        }
        let value: f64 = row
            .get(space.n_params())
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| {
                Error::InvalidScenario(format!("{}: bad {last_column}: {e}", path.display()))
            })?;
        let config = Configuration(indices);
        if !space.contains(&config) {
            return Err(Error::InvalidScenario(format!(
                "{}: row addresses excluded configuration {config}",
                path.display()
            )));
        }
        consume(config, value)?;
    }
    Ok(())
}

fn value_index(p: &ParameterSpec, cell: &str) -> Option<usize> {
    match &p.values {
        ParamValues::Labels(labels) => labels.iter().position(|l| l == cell),
        ParamValues::Numbers(nums) => {
            let x: f64 = cell.parse().ok()?;
            nums.iter().position(|&v| v == x)
        }
    }
}

fn load_accuracy_table(path: &Path, space: &ConfigSpace) -> Result<HashMap<Configuration, f64>> {
    let mut table = HashMap::new();
    for_each_config_row(path, space, "p", |config, p| {
        if table.insert(config.clone(), p).is_some() {
            return Err(Error::InvalidScenario(format!(
                "{}: duplicate row for {config}",
                path.display()
            )));
        }
        Ok(())
    })?;
    if table.is_empty() {
        return Err(Error::InvalidScenario(format!(
            "{}: accuracy table is empty",
            path.display()
        )));
    }
    Ok(table)
}

fn load_latency_traces(
    path: &Path,
    space: &ConfigSpace,
) -> Result<HashMap<Configuration, Vec<f64>>> {
    let mut traces: HashMap<Configuration, Vec<f64>> = HashMap::new();
    for_each_config_row(path, space, "sample_ms", |config, sample| {
        traces.entry(config).or_default().push(sample);
        Ok(())
    })?;
    if traces.is_empty() {
        return Err(Error::InvalidScenario(format!(
            "{}: latency trace is empty",
            path.display()
        )));
    }
    Ok(traces)
}

/// Human-readable JSON object for one configuration: parameter name to value.
pub fn describe_config(space: &ConfigSpace, config: &Configuration) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (axis, p) in space.params().iter().enumerate() {
        let idx = config.indices()[axis];
        let v = match &p.values {
            ParamValues::Labels(labels) => serde_json::Value::String(labels[idx].clone()),
            ParamValues::Numbers(nums) => serde_json::json!(nums[idx]),
        };
        map.insert(p.name.clone(), v);
    }
    serde_json::Value::Object(map)
}
