//! Pipeline orchestration and artifact emission: the file formats produced
//! by the search/plan/simulate stages and the comparison harness that runs
//! the whole grid and summarizes it into one report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Classification;
use crate::planner::{build_policy, default_slack_buffer, pareto_front, ParetoEntry, SwitchingPolicy};
use crate::rng;
use crate::scenario::{describe_config, Scenario};
use crate::search::{
    compass_v_search, grid_search_oracle, recall_and_savings, GridOutcome, SearchOutcome,
    SearchStats,
};
use crate::service::profile_latency;
use crate::sim::{
    compute_metrics, generate_arrivals, run_simulation, rungs_from_policy, LoadPattern,
    PatternKind, Rung, SimMetrics, SimOptions, SimTrace,
};
use crate::space::Configuration;

pub const SCHEMA_VERSION: u32 = 1;

/// `feasible_set.json`: the search result for one threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleSetFile {
    pub schema_version: u32,
    pub scenario: String,
    pub tau: f64,
    pub seed: u64,
    pub stats: SearchStats,
    pub entries: Vec<FeasibleEntryFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleEntryFile {
    pub config: serde_json::Value,
    pub config_indices: Vec<usize>,
    pub acc_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trials: u64,
    pub successes: u64,
    pub samples_spent: u64,
    pub classification: Classification,
}

pub fn feasible_set_file(scenario: &Scenario, outcome: &SearchOutcome, seed: u64) -> FeasibleSetFile {
    FeasibleSetFile {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        tau: outcome.tau,
        seed,
        stats: outcome.stats.clone(),
        entries: outcome
            .feasible
            .iter()
            .map(|r| FeasibleEntryFile {
                config: describe_config(&scenario.space, &r.config),
                config_indices: r.config.indices().to_vec(),
                acc_hat: r.acc_hat,
                ci_lo: r.ci_lo,
                ci_hi: r.ci_hi,
                trials: r.trials,
                successes: r.successes,
                samples_spent: r.samples_spent,
                classification: r.classification,
            })
            .collect(),
    }
}

/// `front.json`: the Pareto front with profiles, before any SLO is applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontFile {
    pub schema_version: u32,
    pub scenario: String,
    pub tau: f64,
    pub entries: Vec<FrontEntryFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontEntryFile {
    pub config: serde_json::Value,
    pub config_indices: Vec<usize>,
    pub accuracy: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub profile_samples: usize,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidScenario(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// `search_trace.csv`: one row per evaluation in pop order.
pub fn write_search_trace(path: &Path, outcome: &SearchOutcome) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["order", "config", "classification", "samples", "queue_size"])?;
    for row in &outcome.trace {
        w.write_record([
            row.order.to_string(),
            row.config.to_string(),
            row.classification.to_string(),
            row.samples.to_string(),
            row.queue_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `trace.csv`: one row per request, times as integer milliseconds.
pub fn write_sim_trace(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "arrival_ms", "start_ms", "completion_ms", "config_index"])?;
    for r in &trace.requests {
        w.write_record([
            r.id.to_string(),
            ms(r.arrival_s),
            ms(r.start_s),
            ms(r.completion_s),
            r.entry_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `timeline.csv`: per-second queue depth, active entry, and arrival count.
pub fn write_timeline(path: &Path, metrics: &SimMetrics) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t_s", "queue_depth", "active_config", "arrivals"])?;
    for p in &metrics.timeline {
        w.write_record([
            p.t_s.to_string(),
            p.queue_depth.to_string(),
            p.active_entry.to_string(),
            p.arrivals.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn ms(seconds: f64) -> String {
    format!("{}", (seconds * 1000.0).round() as i64)
}

fn fixed6(x: f64) -> String {
    format!("{x:.6}")
}

/// Replaces the index-string config display of freshly built policies with
/// the parameter-name form.
pub fn prettify_policy(policy: &mut SwitchingPolicy, scenario: &Scenario) {
    for entry in &mut policy.entries {
        if let Some(indices) = &entry.config_indices {
            entry.config = describe_config(&scenario.space, &Configuration(indices.clone()));
        }
    }
}

/// Profiles every feasible configuration and builds the Pareto front.
pub fn build_front(
    scenario: &Scenario,
    feasible: &[(Configuration, f64)],
    master_seed: u64,
) -> Result<Vec<ParetoEntry>> {
    let mut entries = Vec::with_capacity(feasible.len());
    for (config, accuracy) in feasible {
        let profile = profile_latency(
            &scenario.service_model,
            &scenario.space,
            config,
            scenario.planning.profile_runs,
            master_seed,
        )?;
        entries.push(ParetoEntry {
            config: config.clone(),
            accuracy: *accuracy,
            profile,
        });
    }
    Ok(pareto_front(entries))
}

/// (configuration, accuracy estimate) pairs of a search outcome.
pub fn feasible_pairs(outcome: &SearchOutcome) -> Vec<(Configuration, f64)> {
    outcome
        .feasible
        .iter()
        .map(|r| (r.config.clone(), r.acc_hat))
        .collect()
}

pub fn front_file(scenario: &Scenario, tau: f64, front: &[ParetoEntry]) -> FrontFile {
    FrontFile {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        tau,
        entries: front
            .iter()
            .map(|e| FrontEntryFile {
                config: describe_config(&scenario.space, &e.config),
                config_indices: e.config.indices().to_vec(),
                accuracy: e.accuracy,
                mean_ms: e.profile.mean_ms,
                p95_ms: e.profile.p95_ms,
                profile_samples: e.profile.samples,
            })
            .collect(),
    }
}

/// Builds the policy for one SLO, with the scenario's slack buffer default.
pub fn policy_for_slo(scenario: &Scenario, front: &[ParetoEntry], slo_ms: f64) -> Result<SwitchingPolicy> {
    let slack = scenario
        .planning
        .slack_buffer_ms
        .unwrap_or_else(|| default_slack_buffer(slo_ms));
    let mut policy = build_policy(
        front,
        slo_ms,
        slack,
        scenario.planning.cooldown_up_s,
        scenario.planning.cooldown_down_s,
    )?;
    prettify_policy(&mut policy, scenario);
    Ok(policy)
}

/// One recall/savings comparison row of the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecallRow {
    pub tau: f64,
    pub feasible_fraction: f64,
    pub feasible_grid: usize,
    pub feasible_search: usize,
    pub recall: f64,
    pub savings: f64,
    pub fair_savings: f64,
    pub false_positives: usize,
    pub samples_search: u64,
    pub samples_grid: u64,
    pub evaluations: u64,
    pub feasible_set_path: String,
    pub search_trace_path: String,
}

/// One simulation row of the report, averaged over the scenario's seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimRow {
    pub slo_ms: f64,
    pub pattern: String,
    pub strategy: String,
    pub seeds: usize,
    pub slo_compliance: f64,
    pub mean_accuracy: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_wait_ms: f64,
    pub switches_up: f64,
    pub switches_down: f64,
    pub artifact_dirs: Vec<String>,
}

/// The comparison harness output (`report.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub scenario: String,
    pub master_seed: u64,
    pub planning_tau: f64,
    pub recall: Vec<RecallRow>,
    pub simulation: Vec<SimRow>,
}

fn pattern_name(kind: PatternKind) -> &'static str {
    match kind {
        PatternKind::Constant => "constant",
        PatternKind::Spike => "spike",
        PatternKind::Bursty => "bursty",
    }
}

fn slo_dir(slo_ms: f64) -> String {
    if slo_ms == slo_ms.trunc() {
        format!("slo_{}", slo_ms as i64)
    } else {
        format!("slo_{slo_ms}")
    }
}

fn run_recall_cell(
    scenario: &Scenario,
    out: &Path,
    master_seed: u64,
    index: usize,
    tau: f64,
) -> Result<(RecallRow, SearchOutcome, GridOutcome)> {
    let cell_seed = rng::stream_id(master_seed, "search-cell", &[index]);
    let params = scenario.search_params(tau);
    let search = compass_v_search(&scenario.space, &scenario.oracle, &params, &scenario.schedule, cell_seed)?;
    let grid = grid_search_oracle(&scenario.space, &scenario.oracle, tau, &scenario.schedule, cell_seed)?;
    let cmp = recall_and_savings(&search, &grid);

    let rel_dir = format!("search/tau_{tau:.3}");
    let feasible_rel = format!("{rel_dir}/feasible_set.json");
    let trace_rel = format!("{rel_dir}/search_trace.csv");
    write_json(&out.join(&feasible_rel), &feasible_set_file(scenario, &search, cell_seed))?;
    write_search_trace(&out.join(&trace_rel), &search)?;

    let row = RecallRow {
        tau,
        feasible_fraction: cmp.feasible_grid as f64 / scenario.space.cardinality() as f64,
        feasible_grid: cmp.feasible_grid,
        feasible_search: cmp.feasible_search,
        recall: cmp.recall,
        savings: cmp.savings,
        fair_savings: cmp.fair_savings,
        false_positives: cmp.false_positives,
        samples_search: cmp.samples_search,
        samples_grid: cmp.samples_grid,
        evaluations: search.stats.evaluations,
        feasible_set_path: feasible_rel,
        search_trace_path: trace_rel,
    };
    Ok((row, search, grid))
}

/// Strategy of one simulation cell.
#[derive(Debug, Clone)]
enum Strategy {
    Elastico,
    Static(usize),
}

impl Strategy {
    fn name(&self) -> String {
        match self {
            Strategy::Elastico => "elastico".into(),
            Strategy::Static(i) => format!("static_{i}"),
        }
    }
}

fn static_rungs(front: &[ParetoEntry], index: usize) -> Vec<Rung> {
    let e = &front[index];
    vec![Rung {
        config: e.config.clone(),
        accuracy: e.accuracy,
        upscale_threshold: 0,
        downscale_threshold: None,
    }]
}

/// Runs the full grid: a recall sweep over the scenario thresholds, the
/// planning stage at the scenario's planning threshold, and the simulation
/// matrix of SLO x pattern x strategy x seed. Everything derives from the
/// master seed, so two runs emit byte-identical artifacts.
pub fn run_compare(
    scenario: &Scenario,
    out: &Path,
    master_seed: u64,
    threads: usize,
) -> Result<ComparisonReport> {
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?;

    // recall sweep
    let recall_cells: Vec<(usize, f64)> = scenario.taus.iter().copied().enumerate().collect();
    let recall_results: Vec<Result<(RecallRow, SearchOutcome, GridOutcome)>> = pool.install(|| {
        use rayon::prelude::*;
        recall_cells
            .par_iter()
            .map(|&(i, tau)| run_recall_cell(scenario, out, master_seed, i, tau))
            .collect()
    });
    let mut recall_rows = Vec::with_capacity(recall_results.len());
    for r in recall_results {
        recall_rows.push(r?.0);
    }

    // planning stage at the scenario's planning threshold
    let plan_seed = rng::stream_id(master_seed, "plan-search", &[]);
    let plan_params = scenario.search_params(scenario.planning.tau);
    let plan_search = compass_v_search(
        &scenario.space,
        &scenario.oracle,
        &plan_params,
        &scenario.schedule,
        plan_seed,
    )?;
    if plan_search.feasible.is_empty() {
        return Err(Error::Planning(format!(
            "no feasible configurations at planning threshold {}",
            scenario.planning.tau
        )));
    }
    let front = build_front(scenario, &feasible_pairs(&plan_search), master_seed)?;
    write_json(
        &out.join("plan/front.json"),
        &front_file(scenario, scenario.planning.tau, &front),
    )?;

    let mut policies = Vec::new();
    for &slo in &scenario.planning.slo_ms {
        let policy = policy_for_slo(scenario, &front, slo)?;
        write_json(&out.join(format!("plan/{}/policy.json", slo_dir(slo))), &policy)?;
        policies.push(policy);
    }

    // simulation matrix
    let statics: Vec<usize> = scenario
        .simulation
        .static_baselines
        .clone()
        .unwrap_or_else(|| (0..front.len()).collect());
    for &i in &statics {
        if i >= front.len() {
            return Err(Error::InvalidScenario(format!(
                "static baseline index {i} out of range; the front has {} entries",
                front.len()
            )));
        }
    }
    let mut strategies = vec![Strategy::Elastico];
    strategies.extend(statics.iter().map(|&i| Strategy::Static(i)));

    struct SimCell {
        slo_index: usize,
        pattern_index: usize,
        strategy_index: usize,
    }
    let mut cells = Vec::new();
    for slo_index in 0..scenario.planning.slo_ms.len() {
        for pattern_index in 0..scenario.simulation.patterns.len() {
            for strategy_index in 0..strategies.len() {
                cells.push(SimCell {
                    slo_index,
                    pattern_index,
                    strategy_index,
                });
            }
        }
    }

    let run_cell = |cell: &SimCell| -> Result<SimRow> {
        let slo = scenario.planning.slo_ms[cell.slo_index];
        let pattern_kind = scenario.simulation.patterns[cell.pattern_index];
        let strategy = &strategies[cell.strategy_index];
        let policy = &policies[cell.slo_index];

        let mut pattern = LoadPattern::with_kind(
            pattern_kind,
            scenario.simulation.base_qps,
            scenario.simulation.duration_s,
        );
        pattern.spike_multiplier = scenario.simulation.spike_multiplier;

        let (rungs, options) = match strategy {
            Strategy::Elastico => {
                let rungs = rungs_from_policy(policy, &scenario.space)?;
                let mut options = SimOptions::from_policy(policy);
                options.switch_latency_ms = scenario.simulation.switch_latency_ms;
                (rungs, options)
            }
            Strategy::Static(i) => (
                static_rungs(&front, *i),
                SimOptions {
                    static_entry: Some(0),
                    ..SimOptions::default()
                },
            ),
        };

        let mut sums = SimAccumulator::default();
        let mut artifact_dirs = Vec::new();
        for (seed_index, &seed_value) in scenario.simulation.seeds.iter().enumerate() {
            let arrivals_seed =
                rng::stream_id(master_seed, "arrivals", &[cell.pattern_index, seed_index]);
            let arrivals = generate_arrivals(&pattern, arrivals_seed)?;
            let service_seed = rng::stream_id(
                master_seed,
                "service",
                &[cell.slo_index, cell.pattern_index, cell.strategy_index, seed_index],
            );
            let trace = run_simulation(
                &scenario.space,
                &scenario.service_model,
                &rungs,
                &arrivals,
                &options,
                service_seed,
            )?;
            let metrics = compute_metrics(&trace, slo);

            let rel_dir = format!(
                "sim/{}/{}/{}/seed_{seed_value}",
                slo_dir(slo),
                pattern_name(pattern_kind),
                strategy.name()
            );
            write_sim_trace(&out.join(&rel_dir).join("trace.csv"), &trace)?;
            write_timeline(&out.join(&rel_dir).join("timeline.csv"), &metrics)?;
            write_json(&out.join(&rel_dir).join("metrics.json"), &metrics)?;
            sums.add(&metrics);
            artifact_dirs.push(rel_dir);
        }

        Ok(sums.into_row(
            slo,
            pattern_name(pattern_kind).to_string(),
            strategy.name(),
            scenario.simulation.seeds.len(),
            artifact_dirs,
        ))
    };

    let sim_results: Vec<Result<SimRow>> = pool.install(|| {
        use rayon::prelude::*;
        cells.par_iter().map(run_cell).collect()
    });
    let mut sim_rows = Vec::with_capacity(sim_results.len());
    for r in sim_results {
        sim_rows.push(r?);
    }

    let report = ComparisonReport {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        master_seed,
        planning_tau: scenario.planning.tau,
        recall: recall_rows,
        simulation: sim_rows,
    };
    write_report_files(out, &report)?;
    Ok(report)
}

#[derive(Default)]
struct SimAccumulator {
    n: usize,
    compliance: f64,
    accuracy: f64,
    p50: f64,
    p95: f64,
    p99: f64,
    wait: f64,
    up: f64,
    down: f64,
}

impl SimAccumulator {
    fn add(&mut self, m: &SimMetrics) {
        self.n += 1;
        self.compliance += m.slo_compliance;
        self.accuracy += m.mean_accuracy;
        self.p50 += m.p50_ms;
        self.p95 += m.p95_ms;
        self.p99 += m.p99_ms;
        self.wait += m.mean_wait_ms;
        self.up += m.switches_up as f64;
        self.down += m.switches_down as f64;
    }

    fn into_row(
        self,
        slo_ms: f64,
        pattern: String,
        strategy: String,
        seeds: usize,
        artifact_dirs: Vec<String>,
    ) -> SimRow {
        let n = self.n.max(1) as f64;
        SimRow {
            slo_ms,
            pattern,
            strategy,
            seeds,
            slo_compliance: self.compliance / n,
            mean_accuracy: self.accuracy / n,
            p50_ms: self.p50 / n,
            p95_ms: self.p95 / n,
            p99_ms: self.p99 / n,
            mean_wait_ms: self.wait / n,
            switches_up: self.up / n,
            switches_down: self.down / n,
            artifact_dirs,
        }
    }
}

/// Writes `report.json`, `recall.csv`, and `simulation.csv`.
pub fn write_report_files(out: &Path, report: &ComparisonReport) -> Result<()> {
    write_json(&out.join("report.json"), report)?;

    let mut w = csv_writer(&out.join("recall.csv"))?;
    w.write_record([
        "scenario",
        "tau",
        "feasible_fraction",
        "feasible_grid",
        "feasible_search",
        "recall",
        "savings",
        "fair_savings",
        "false_positives",
        "samples_search",
        "samples_grid",
        "evaluations",
    ])?;
    for r in &report.recall {
        w.write_record([
            report.scenario.clone(),
            fixed6(r.tau),
            fixed6(r.feasible_fraction),
            r.feasible_grid.to_string(),
            r.feasible_search.to_string(),
            fixed6(r.recall),
            fixed6(r.savings),
            fixed6(r.fair_savings),
            r.false_positives.to_string(),
            r.samples_search.to_string(),
            r.samples_grid.to_string(),
            r.evaluations.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("simulation.csv"))?;
    w.write_record([
        "scenario",
        "slo_ms",
        "pattern",
        "strategy",
        "seeds",
        "slo_compliance",
        "mean_accuracy",
        "p50_ms",
        "p95_ms",
        "p99_ms",
        "mean_wait_ms",
        "switches_up",
        "switches_down",
    ])?;
    for r in &report.simulation {
        w.write_record([
            report.scenario.clone(),
            format!("{}", r.slo_ms.round() as i64),
            r.pattern.clone(),
            r.strategy.clone(),
            r.seeds.to_string(),
            fixed6(r.slo_compliance),
            fixed6(r.mean_accuracy),
            format!("{}", r.p50_ms.round() as i64),
            format!("{}", r.p95_ms.round() as i64),
            format!("{}", r.p99_ms.round() as i64),
            format!("{}", r.mean_wait_ms.round() as i64),
            fixed6(r.switches_up),
            fixed6(r.switches_down),
        ])?;
    }
    w.flush()?;
    Ok(())
}
