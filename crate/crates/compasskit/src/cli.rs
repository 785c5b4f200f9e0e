//! Command-line orchestration: `search`, `plan`, `simulate`, `compare`, and
//! `report` subcommands over scenario files.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::report::{
    build_front, feasible_set_file, front_file, policy_for_slo, read_json, run_compare,
    write_json, write_report_files, write_search_trace, write_sim_trace, write_timeline,
    ComparisonReport, FeasibleSetFile,
};
use crate::scenario::Scenario;
use crate::search::compass_v_search;
use crate::sim::{
    compute_metrics, generate_arrivals, run_simulation, rungs_from_policy, LoadPattern,
    PatternKind, SimOptions,
};
use crate::space::Configuration;

#[derive(Debug, Parser)]
#[command(
    name = "compasskit",
    version,
    about = "Feasible-configuration search, switching-policy planning, and serving simulation for compound AI workflows"
)]
pub struct Cli {
    /// Scenario file describing the space, oracle, service model, and defaults.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,

    /// Output directory (COMPASSKIT_OUT overrides this flag).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Master seed; every random stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 45)]
    pub seed: u64,

    /// Worker threads for independent grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discover the accuracy-feasible set for one or more thresholds.
    Search {
        /// Threshold(s): a value (0.5), a comma list (0.3,0.5), or a sweep
        /// (0.3..0.9:8). Defaults to the scenario's evaluation.tau list.
        #[arg(long)]
        tau: Option<String>,
    },
    /// Profile a feasible set, build the Pareto front, and derive the
    /// switching policy for one SLO.
    Plan {
        /// Feasible set JSON (defaults to <out>/feasible_set.json).
        #[arg(long)]
        feasible_set: Option<PathBuf>,
        /// Latency SLO in milliseconds.
        #[arg(long)]
        slo_ms: f64,
        /// Slack buffer in milliseconds (default: 10% of the SLO).
        #[arg(long)]
        slack_ms: Option<f64>,
        #[arg(long)]
        cooldown_up_s: Option<f64>,
        #[arg(long)]
        cooldown_down_s: Option<f64>,
    },
    /// Replay a load pattern against a switching policy (or one static rung).
    Simulate {
        /// Policy JSON produced by `plan`.
        #[arg(long)]
        policy: PathBuf,
        /// Load pattern: constant, spike, or bursty.
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        base_qps: Option<f64>,
        #[arg(long)]
        duration_s: Option<f64>,
        /// SLO used for compliance metrics (defaults to the policy's).
        #[arg(long)]
        slo_ms: Option<f64>,
        /// Pin one policy entry instead of running the controller.
        #[arg(long, value_name = "ENTRY_INDEX")]
        r#static: Option<usize>,
        /// Comma-separated seed list; fans out one run per seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        switch_latency_ms: Option<f64>,
        /// Count the in-service request in the controller's queue depth.
        #[arg(long)]
        count_in_service: bool,
        /// Upscale one rung at a time instead of jumping.
        #[arg(long)]
        single_rung_upscale: bool,
    },
    /// Run the whole grid: threshold sweep with grid-search ground truth,
    /// planning per SLO, and the simulation matrix; emit a report.
    Compare {},
    /// Summarize an existing report.json to stdout and refresh its CSVs.
    Report {
        /// Report path (defaults to <out>/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Exit code for an error, matching the documented CLI contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::SloInfeasible(_) => 3,
        Error::InvalidScenario(_) | Error::InvalidSpace(_) | Error::Toml(_) => 2,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let out = match std::env::var_os("COMPASSKIT_OUT") {
        Some(dir) => PathBuf::from(dir),
        None => cli.out.clone(),
    };
    match &cli.command {
        Command::Search { tau } => cmd_search(&cli, &out, tau.as_deref()),
        Command::Plan {
            feasible_set,
            slo_ms,
            slack_ms,
            cooldown_up_s,
            cooldown_down_s,
        } => cmd_plan(
            &cli,
            &out,
            PlanArgs {
                feasible_set: feasible_set.as_deref(),
                slo_ms: *slo_ms,
                slack_ms: *slack_ms,
                cooldown_up_s: *cooldown_up_s,
                cooldown_down_s: *cooldown_down_s,
            },
        ),
        Command::Simulate {
            policy,
            pattern,
            base_qps,
            duration_s,
            slo_ms,
            r#static,
            seeds,
            switch_latency_ms,
            count_in_service,
            single_rung_upscale,
        } => cmd_simulate(
            &cli,
            &out,
            SimulateArgs {
                policy,
                pattern,
                base_qps: *base_qps,
                duration_s: *duration_s,
                slo_ms: *slo_ms,
                static_entry: *r#static,
                seeds: seeds.as_deref(),
                switch_latency_ms: *switch_latency_ms,
                count_in_service: *count_in_service,
                single_rung_upscale: *single_rung_upscale,
            },
        ),
        Command::Compare {} => cmd_compare(&cli, &out),
        Command::Report { report } => cmd_report(&out, report.as_deref()),
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario> {
    let path = cli.scenario.as_ref().ok_or_else(|| {
        Error::InvalidScenario("this command needs --scenario <path>".into())
    })?;
    Scenario::load(path)
}

/// Parses a threshold argument: single value, comma list, or `a..b:n` sweep.
pub fn parse_taus(arg: &str) -> Result<Vec<f64>> {
    let bad = |msg: &str| Error::InvalidScenario(format!("bad --tau '{arg}': {msg}"));
    if let Some((range, count)) = arg.split_once(':') {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| bad("sweep form is start..end:count"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad("start is not a number"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("end is not a number"))?;
        let n: usize = count.trim().parse().map_err(|_| bad("count is not an integer"))?;
        if n < 2 {
            return Err(bad("sweep count must be at least 2"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        return Ok((0..n).map(|i| lo + step * i as f64).collect());
    }
    arg.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad("not a number")))
        .collect()
}

fn cmd_search(cli: &Cli, out: &Path, tau_arg: Option<&str>) -> Result<()> {
    let scenario = load_scenario(cli)?;
    let taus = match tau_arg {
        Some(arg) => parse_taus(arg)?,
        None => scenario.taus.clone(),
    };
    for &tau in &taus {
        if tau.is_nan() || tau <= 0.0 || tau >= 1.0 {
            return Err(Error::InvalidScenario(format!(
                "threshold {tau} must lie strictly inside (0, 1)"
            )));
        }
    }
    let single = taus.len() == 1;
    for &tau in &taus {
        let params = scenario.search_params(tau);
        let outcome =
            compass_v_search(&scenario.space, &scenario.oracle, &params, &scenario.schedule, cli.seed)?;
        let dir = if single {
            out.to_path_buf()
        } else {
            out.join(format!("tau_{tau:.3}"))
        };
        write_json(&dir.join("feasible_set.json"), &feasible_set_file(&scenario, &outcome, cli.seed))?;
        write_search_trace(&dir.join("search_trace.csv"), &outcome)?;
        println!(
            "tau {tau:.3}: {} feasible of {} evaluated, {} samples -> {}",
            outcome.feasible.len(),
            outcome.stats.evaluations,
            outcome.stats.samples_spent,
            dir.display()
        );
    }
    Ok(())
}

struct PlanArgs<'a> {
    feasible_set: Option<&'a Path>,
    slo_ms: f64,
    slack_ms: Option<f64>,
    cooldown_up_s: Option<f64>,
    cooldown_down_s: Option<f64>,
}

fn cmd_plan(cli: &Cli, out: &Path, args: PlanArgs<'_>) -> Result<()> {
    let mut scenario = load_scenario(cli)?;
    if let Some(h) = args.slack_ms {
        scenario.planning.slack_buffer_ms = Some(h);
    }
    if let Some(t) = args.cooldown_up_s {
        scenario.planning.cooldown_up_s = t;
    }
    if let Some(t) = args.cooldown_down_s {
        scenario.planning.cooldown_down_s = t;
    }
    let slo_ms = args.slo_ms;
    if !slo_ms.is_finite() || slo_ms <= 0.0 {
        return Err(Error::InvalidScenario(format!(
            "--slo-ms {slo_ms} must be positive"
        )));
    }

    let default_path = out.join("feasible_set.json");
    let feasible_path = args.feasible_set.unwrap_or(&default_path);
    let file: FeasibleSetFile = read_json(feasible_path)?;
    if file.entries.is_empty() {
        return Err(Error::Planning("feasible set is empty".into()));
    }
    let pairs: Vec<(Configuration, f64)> = file
        .entries
        .iter()
        .map(|e| {
            let config = Configuration(e.config_indices.clone());
            if !scenario.space.contains(&config) {
                return Err(Error::InvalidScenario(format!(
                    "feasible-set entry {config} is not a member of the scenario space"
                )));
            }
            Ok((config, e.acc_hat))
        })
        .collect::<Result<_>>()?;

    let front = build_front(&scenario, &pairs, cli.seed)?;
    write_json(&out.join("front.json"), &front_file(&scenario, file.tau, &front))?;
    let policy = policy_for_slo(&scenario, &front, slo_ms)?;
    write_json(&out.join("policy.json"), &policy)?;
    println!(
        "front: {} entries; policy at {slo_ms} ms: {} rungs -> {}",
        front.len(),
        policy.entries.len(),
        out.join("policy.json").display()
    );
    Ok(())
}

struct SimulateArgs<'a> {
    policy: &'a Path,
    pattern: &'a str,
    base_qps: Option<f64>,
    duration_s: Option<f64>,
    slo_ms: Option<f64>,
    static_entry: Option<usize>,
    seeds: Option<&'a str>,
    switch_latency_ms: Option<f64>,
    count_in_service: bool,
    single_rung_upscale: bool,
}

fn cmd_simulate(cli: &Cli, out: &Path, args: SimulateArgs<'_>) -> Result<()> {
    let scenario = load_scenario(cli)?;
    let policy: crate::planner::SwitchingPolicy = read_json(args.policy)?;
    let rungs = rungs_from_policy(&policy, &scenario.space)?;

    let kind: PatternKind = args.pattern.parse()?;
    let mut pattern = LoadPattern::with_kind(
        kind,
        args.base_qps.unwrap_or(scenario.simulation.base_qps),
        args.duration_s.unwrap_or(scenario.simulation.duration_s),
    );
    pattern.spike_multiplier = scenario.simulation.spike_multiplier;
    let slo_ms = args.slo_ms.unwrap_or(policy.slo_ms);

    let mut options = SimOptions::from_policy(&policy);
    options.switch_latency_ms = args
        .switch_latency_ms
        .unwrap_or(scenario.simulation.switch_latency_ms);
    options.count_in_service = args.count_in_service;
    options.single_rung_upscale = args.single_rung_upscale;
    options.static_entry = args.static_entry;

    let seeds: Vec<u64> = match args.seeds {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::InvalidScenario(format!("bad --seeds entry '{}'", s.trim()))
                })
            })
            .collect::<Result<_>>()?,
        None => vec![cli.seed],
    };

    let fan_out = seeds.len() > 1;
    for &seed in &seeds {
        let arrivals = generate_arrivals(&pattern, seed)?;
        let trace = run_simulation(
            &scenario.space,
            &scenario.service_model,
            &rungs,
            &arrivals,
            &options,
            seed,
        )?;
        let metrics = compute_metrics(&trace, slo_ms);
        let dir = if fan_out {
            out.join(format!("seed_{seed}"))
        } else {
            out.to_path_buf()
        };
        write_sim_trace(&dir.join("trace.csv"), &trace)?;
        write_timeline(&dir.join("timeline.csv"), &metrics)?;
        write_json(&dir.join("metrics.json"), &metrics)?;
        println!(
            "seed {seed}: {} requests, compliance {:.3}, mean accuracy {:.3}, switches {}up/{}down -> {}",
            metrics.requests,
            metrics.slo_compliance,
            metrics.mean_accuracy,
            metrics.switches_up,
            metrics.switches_down,
            dir.display()
        );
    }
    Ok(())
}

fn cmd_compare(cli: &Cli, out: &Path) -> Result<()> {
    let scenario = load_scenario(cli)?;
    let report = run_compare(&scenario, out, cli.seed, cli.threads)?;
    print_report(&report);
    println!("report -> {}", out.join("report.json").display());
    Ok(())
}

fn cmd_report(out: &Path, report_path: Option<&Path>) -> Result<()> {
    let default_path = out.join("report.json");
    let path = report_path.unwrap_or(&default_path);
    let report: ComparisonReport = read_json(path)?;
    print_report(&report);
    let dir = path.parent().unwrap_or(Path::new("."));
    write_report_files(dir, &report)?;
    Ok(())
}

fn print_report(report: &ComparisonReport) {
    println!(
        "scenario {} (master seed {})",
        report.scenario, report.master_seed
    );
    if !report.recall.is_empty() {
        println!("  tau     f       recall  savings  evals");
        for r in &report.recall {
            println!(
                "  {:.3}  {:.3}  {:.4}  {:+.4}  {}",
                r.tau, r.feasible_fraction, r.recall, r.savings, r.evaluations
            );
        }
    }
    if !report.simulation.is_empty() {
        println!("  slo_ms  pattern  strategy   compliance  accuracy  p95_ms");
        for r in &report.simulation {
            println!(
                "  {:<6}  {:<7}  {:<9}  {:.4}      {:.4}    {}",
                r.slo_ms as i64,
                r.pattern,
                r.strategy,
                r.slo_compliance,
                r.mean_accuracy,
                r.p95_ms.round() as i64
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_sweep_parsing() {
        let taus = parse_taus("0.3..0.9:8").unwrap();
        assert_eq!(taus.len(), 8);
        assert!((taus[0] - 0.3).abs() < 1e-12);
        assert!((taus[7] - 0.9).abs() < 1e-12);
        assert!((taus[1] - taus[0] - (0.6 / 7.0)).abs() < 1e-12);

        assert_eq!(parse_taus("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_taus("0.3, 0.5").unwrap(), vec![0.3, 0.5]);
        assert!(parse_taus("0.3..0.9").is_err());
        assert!(parse_taus("abc").is_err());
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(exit_code(&Error::SloInfeasible("x".into())), 3);
        assert_eq!(exit_code(&Error::InvalidScenario("x".into())), 2);
        assert_eq!(exit_code(&Error::InvalidSpace("x".into())), 2);
        assert_eq!(exit_code(&Error::Simulation("x".into())), 1);
    }
}
