//! Deterministic discrete-event simulation of the serving system: Poisson
//! arrivals under constant/spike/bursty load patterns, one FIFO
//! non-preemptive server with configuration-dependent service times, and the
//! queue-depth switching controller.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::SwitchingPolicy;
use crate::rng;
use crate::service::{nearest_rank, ServiceModel};
use crate::space::{ConfigSpace, Configuration};

/// Request arrival rate over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPattern {
    pub kind: PatternKind,
    /// Base rate, requests per second.
    pub base_rate: f64,
    pub duration_s: f64,
    /// Spike: rate multiplier inside the spike window.
    pub spike_multiplier: f64,
    /// Spike window; defaults to the middle third of the run.
    pub spike_window: Option<(f64, f64)>,
    /// Bursty: multiplier drawn uniformly from this range per burst.
    pub burst_multiplier_range: (f64, f64),
    /// Bursty: burst length drawn uniformly from this range, seconds.
    pub burst_length_range_s: (f64, f64),
    /// Bursty: burst starts arrive as a Poisson process at this rate.
    pub burst_rate_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Constant,
    Spike,
    Bursty,
}

impl std::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(PatternKind::Constant),
            "spike" => Ok(PatternKind::Spike),
            "bursty" => Ok(PatternKind::Bursty),
            other => Err(Error::Simulation(format!(
                "unknown load pattern '{other}' (expected constant, spike, or bursty)"
            ))),
        }
    }
}

impl LoadPattern {
    pub fn constant(base_rate: f64, duration_s: f64) -> Self {
        Self {
            kind: PatternKind::Constant,
            base_rate,
            duration_s,
            spike_multiplier: 4.0,
            spike_window: None,
            burst_multiplier_range: (2.0, 5.0),
            burst_length_range_s: (5.0, 15.0),
            burst_rate_per_s: 1.0 / 30.0,
        }
    }

    pub fn spike(base_rate: f64, duration_s: f64, multiplier: f64) -> Self {
        Self {
            kind: PatternKind::Spike,
            spike_multiplier: multiplier,
            ..Self::constant(base_rate, duration_s)
        }
    }

    pub fn bursty(base_rate: f64, duration_s: f64) -> Self {
        Self {
            kind: PatternKind::Bursty,
            ..Self::constant(base_rate, duration_s)
        }
    }

    pub fn with_kind(kind: PatternKind, base_rate: f64, duration_s: f64) -> Self {
        Self {
            kind,
            ..Self::constant(base_rate, duration_s)
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.base_rate.is_finite() || self.base_rate <= 0.0 {
            return Err(Error::Simulation("base rate must be positive".into()));
        }
        if self.duration_s < 0.0 {
            return Err(Error::Simulation("duration must be >= 0".into()));
        }
        if let Some((a, b)) = self.spike_window {
            if !(0.0 <= a && a <= b && b <= self.duration_s) {
                return Err(Error::Simulation(format!(
                    "spike window ({a}, {b}) outside [0, {}]",
                    self.duration_s
                )));
            }
        }
        Ok(())
    }

    fn spike_bounds(&self) -> (f64, f64) {
        self.spike_window
            .unwrap_or((self.duration_s / 3.0, 2.0 * self.duration_s / 3.0))
    }

    fn peak_multiplier(&self) -> f64 {
        match self.kind {
            PatternKind::Constant => 1.0,
            PatternKind::Spike => self.spike_multiplier.max(1.0),
            PatternKind::Bursty => self.burst_multiplier_range.1.max(1.0),
        }
    }
}

/// Inhomogeneous Poisson arrivals by thinning against the pattern's rate
/// function. Deterministic given the seed; returns sorted times in seconds.
pub fn generate_arrivals(pattern: &LoadPattern, seed: u64) -> Result<Vec<f64>> {
    pattern.validate()?;
    if pattern.duration_s == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = rng::stream(seed, "arrivals", &[]);

    // bursty: draw the burst windows first
    let mut bursts: Vec<(f64, f64, f64)> = Vec::new();
    if pattern.kind == PatternKind::Bursty {
        let gap = Exp::new(pattern.burst_rate_per_s)
            .map_err(|e| Error::Simulation(format!("burst rate: {e}")))?;
        let (m_lo, m_hi) = pattern.burst_multiplier_range;
        let (l_lo, l_hi) = pattern.burst_length_range_s;
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= pattern.duration_s {
                break;
            }
            let mult = m_lo + (m_hi - m_lo) * rng.random::<f64>();
            let len = l_lo + (l_hi - l_lo) * rng.random::<f64>();
            bursts.push((t, (t + len).min(pattern.duration_s), mult));
        }
    }

    let rate_at = |t: f64| -> f64 {
        match pattern.kind {
            PatternKind::Constant => pattern.base_rate,
            PatternKind::Spike => {
                let (a, b) = pattern.spike_bounds();
                if t >= a && t < b {
                    pattern.base_rate * pattern.spike_multiplier
                } else {
                    pattern.base_rate
                }
            }
            PatternKind::Bursty => {
                let mult = bursts
                    .iter()
                    .filter(|&&(a, b, _)| t >= a && t < b)
                    .map(|&(_, _, m)| m)
                    .fold(1.0, f64::max);
                pattern.base_rate * mult
            }
        }
    };

    let lambda_max = pattern.base_rate * pattern.peak_multiplier();
    let gap = Exp::new(lambda_max).map_err(|e| Error::Simulation(format!("rate: {e}")))?;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= pattern.duration_s {
            break;
        }
        if rng.random::<f64>() * lambda_max < rate_at(t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// One rung of the ladder as the simulator sees it.
#[derive(Debug, Clone)]
pub struct Rung {
    pub config: Configuration,
    pub accuracy: f64,
    pub upscale_threshold: u64,
    pub downscale_threshold: Option<u64>,
}

/// Resolves policy entries back onto the configuration space.
pub fn rungs_from_policy(policy: &SwitchingPolicy, space: &ConfigSpace) -> Result<Vec<Rung>> {
    policy
        .entries
        .iter()
        .map(|e| {
            let indices = e.config_indices.clone().ok_or_else(|| {
                Error::Simulation("policy entry lacks config_indices".into())
            })?;
            let config = Configuration(indices);
            if !space.contains(&config) {
                return Err(Error::Simulation(format!(
                    "policy entry {config} is not a member of the scenario space"
                )));
            }
            Ok(Rung {
                config,
                accuracy: e.accuracy,
                upscale_threshold: e.upscale_threshold,
                downscale_threshold: e.downscale_threshold,
            })
        })
        .collect()
}

/// Simulation knobs beyond the ladder itself.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Routing-switch latency; dispatches within this window after a
    /// decision still use the previous configuration.
    pub switch_latency_ms: f64,
    /// Count the in-service request in the controller's queue depth.
    pub count_in_service: bool,
    /// Upscale one rung at a time instead of jumping to the most accurate
    /// rung whose threshold accommodates the current depth.
    pub single_rung_upscale: bool,
    /// Pin the active rung; the controller never runs.
    pub static_entry: Option<usize>,
    pub cooldown_up_s: f64,
    pub cooldown_down_s: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            switch_latency_ms: 10.0,
            count_in_service: false,
            single_rung_upscale: false,
            static_entry: None,
            cooldown_up_s: 0.0,
            cooldown_down_s: 5.0,
        }
    }
}

impl SimOptions {
    pub fn from_policy(policy: &SwitchingPolicy) -> Self {
        Self {
            cooldown_up_s: policy.cooldown_up_s,
            cooldown_down_s: policy.cooldown_down_s,
            ..Self::default()
        }
    }
}

/// Controller view of the system between events.
#[derive(Debug, Clone)]
pub struct ControllerState {
    /// Decided rung index (dispatches lag by the switch latency).
    pub active: usize,
    pub last_upscale_s: f64,
    pub last_downscale_s: f64,
}

/// What the controller wants done at this instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stay,
    SwitchTo(usize),
}

/// Queue-depth policy: upscale as soon as the depth exceeds the active
/// rung's threshold (jumping to the most accurate rung that accommodates
/// the depth), downscale one rung after sustained calm. Downscales respect
/// both cooldowns so an upscale immediately followed by a downscale cannot
/// ping-pong.
pub fn elastico_decide(
    state: &ControllerState,
    rungs: &[Rung],
    queue_depth: u64,
    now_s: f64,
    options: &SimOptions,
) -> Decision {
    let k = state.active;
    if queue_depth > rungs[k].upscale_threshold && now_s - state.last_upscale_s >= options.cooldown_up_s
    {
        let target = if options.single_rung_upscale {
            k.saturating_sub(1)
        } else {
            (0..k)
                .rev()
                .find(|&j| queue_depth <= rungs[j].upscale_threshold)
                .unwrap_or(0)
        };
        if target != k {
            return Decision::SwitchTo(target);
        }
        return Decision::Stay;
    }
    if k + 1 < rungs.len() {
        if let Some(down) = rungs[k].downscale_threshold {
            if queue_depth < down
                && now_s - state.last_downscale_s >= options.cooldown_down_s
                && now_s - state.last_upscale_s >= options.cooldown_down_s
            {
                return Decision::SwitchTo(k + 1);
            }
        }
    }
    Decision::Stay
}

/// One served request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: usize,
    pub arrival_s: f64,
    pub start_s: f64,
    pub completion_s: f64,
    pub entry_index: usize,
    pub accuracy: f64,
}

impl Request {
    pub fn latency_ms(&self) -> f64 {
        (self.completion_s - self.arrival_s) * 1000.0
    }

    pub fn wait_ms(&self) -> f64 {
        (self.start_s - self.arrival_s) * 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchDirection {
    Up,
    Down,
}

/// A switch decision and when it takes effect for dispatches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub decided_at_s: f64,
    pub effective_at_s: f64,
    pub from: usize,
    pub to: usize,
    pub direction: SwitchDirection,
}

/// Complete record of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTrace {
    pub requests: Vec<Request>,
    pub switches: Vec<SwitchEvent>,
    pub initial_entry: usize,
}

/// Runs the event loop over precomputed arrivals until the queue drains.
/// Requests are never dropped. The controller is consulted on every arrival
/// and every completion.
pub fn run_simulation(
    space: &ConfigSpace,
    model: &ServiceModel,
    rungs: &[Rung],
    arrivals: &[f64],
    options: &SimOptions,
    seed: u64,
) -> Result<SimTrace> {
    if rungs.is_empty() {
        return Err(Error::Simulation("no ladder entries to serve with".into()));
    }
    if let Some(i) = options.static_entry {
        if i >= rungs.len() {
            return Err(Error::Simulation(format!(
                "static entry index {i} out of range (ladder has {} entries)",
                rungs.len()
            )));
        }
    }
    debug_assert!(arrivals.windows(2).all(|w| w[0] <= w[1]));

    let mut service_rng = rng::stream(seed, "service", &[]);
    let switch_latency_s = options.switch_latency_ms / 1000.0;

    let initial = options.static_entry.unwrap_or(rungs.len() - 1);
    let mut state = ControllerState {
        active: initial,
        last_upscale_s: f64::NEG_INFINITY,
        last_downscale_s: f64::NEG_INFINITY,
    };
    // serving = what dispatches use; state.active = what the controller decided
    let mut serving = initial;
    let mut pending_switch: Option<(usize, f64)> = None;

    let mut requests: Vec<Request> = Vec::with_capacity(arrivals.len());
    let mut switches: Vec<SwitchEvent> = Vec::new();
    let mut waiting: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut in_service: Option<(usize, f64)> = None;
    let mut next_arrival = 0usize;

    macro_rules! dispatch {
        ($now:expr) => {{
            let now = $now;
            match waiting.pop_front() {
                None => None,
                Some(id) => {
                    let rung = &rungs[serving];
                    let service_ms = model.sample_ms(space, &rung.config, &mut service_rng)?;
                    let completion = now + service_ms / 1000.0;
                    requests[id].start_s = now;
                    requests[id].completion_s = completion;
                    requests[id].entry_index = serving;
                    requests[id].accuracy = rung.accuracy;
                    Some((id, completion))
                }
            }
        }};
    }

    loop {
        let arrival_t = arrivals.get(next_arrival).copied();
        let completion_t = in_service.map(|(_, t)| t);
        let (now, is_completion) = match (arrival_t, completion_t) {
            (None, None) => break,
            (Some(a), None) => (a, false),
            (None, Some(c)) => (c, true),
            // completions at the same instant free the server first
            (Some(a), Some(c)) => {
                if c <= a {
                    (c, true)
                } else {
                    (a, false)
                }
            }
        };

        // commit a due routing switch before anything dispatches at `now`
        if let Some((target, at)) = pending_switch {
            if now >= at {
                serving = target;
                pending_switch = None;
            }
        }

        if is_completion {
            in_service = dispatch!(now);
        } else {
            let id = requests.len();
            requests.push(Request {
                id,
                arrival_s: now,
                start_s: 0.0,
                completion_s: 0.0,
                entry_index: 0,
                accuracy: 0.0,
            });
            next_arrival += 1;
            waiting.push_back(id);
            if in_service.is_none() {
                in_service = dispatch!(now);
            }
        }

        if options.static_entry.is_none() {
            let depth =
                waiting.len() as u64 + u64::from(options.count_in_service && in_service.is_some());
            match elastico_decide(&state, rungs, depth, now, options) {
                Decision::Stay => {}
                Decision::SwitchTo(target) => {
                    let direction = if target < state.active {
                        state.last_upscale_s = now;
                        SwitchDirection::Up
                    } else {
                        state.last_downscale_s = now;
                        SwitchDirection::Down
                    };
                    let from = state.active;
                    state.active = target;
                    let effective = now + switch_latency_s;
                    // the latest decision wins; an uncommitted older switch
                    // is simply superseded
                    pending_switch = Some((target, effective));
                    switches.push(SwitchEvent {
                        decided_at_s: now,
                        effective_at_s: effective,
                        from,
                        to: target,
                        direction,
                    });
                }
            }
        }
    }

    Ok(SimTrace {
        requests,
        switches,
        initial_entry: initial,
    })
}

/// Per-second snapshot of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub t_s: u64,
    pub queue_depth: usize,
    pub active_entry: usize,
    pub arrivals: usize,
}

/// Aggregate metrics over a finished trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimMetrics {
    pub schema_version: u32,
    pub slo_ms: f64,
    pub requests: usize,
    /// Fraction of requests with end-to-end latency at or below the SLO.
    pub slo_compliance: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_wait_ms: f64,
    /// Request-weighted mean accuracy of the serving configuration.
    pub mean_accuracy: f64,
    pub switches_up: u64,
    pub switches_down: u64,
    pub timeline: Vec<TimelinePoint>,
}

/// Compliance, nearest-rank percentiles, served accuracy, switch counts, and
/// the per-second timeline.
pub fn compute_metrics(trace: &SimTrace, slo_ms: f64) -> SimMetrics {
    let n = trace.requests.len();
    let mut latencies: Vec<f64> = trace.requests.iter().map(Request::latency_ms).collect();
    latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let compliant = latencies.iter().filter(|&&l| l <= slo_ms).count();
    let (p50, p95, p99, compliance, mean_wait, mean_acc) = if n == 0 {
        (0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    } else {
        (
            nearest_rank(&latencies, 50.0),
            nearest_rank(&latencies, 95.0),
            nearest_rank(&latencies, 99.0),
            compliant as f64 / n as f64,
            trace.requests.iter().map(Request::wait_ms).sum::<f64>() / n as f64,
            trace.requests.iter().map(|r| r.accuracy).sum::<f64>() / n as f64,
        )
    };

    let switches_up = trace
        .switches
        .iter()
        .filter(|s| s.direction == SwitchDirection::Up)
        .count() as u64;
    let switches_down = trace.switches.len() as u64 - switches_up;

    let end_s = trace
        .requests
        .iter()
        .map(|r| r.completion_s)
        .fold(0.0, f64::max);
    // arrival and start times are both nondecreasing (FIFO, ids in arrival
    // order), so the per-second timeline walks three cursors
    let mut timeline = Vec::with_capacity(end_s.floor() as usize + 1);
    let mut arrived = 0usize;
    let mut started = 0usize;
    let mut switch_cursor = 0usize;
    let mut active = trace.initial_entry;
    for t in 0..=(end_s.floor() as u64) {
        let ts = t as f64;
        let arrived_before = arrived;
        while arrived < n && trace.requests[arrived].arrival_s <= ts {
            arrived += 1;
        }
        while started < n && trace.requests[started].start_s <= ts {
            started += 1;
        }
        while switch_cursor < trace.switches.len()
            && trace.switches[switch_cursor].effective_at_s <= ts
        {
            active = trace.switches[switch_cursor].to;
            switch_cursor += 1;
        }
        let arrivals_in_second = trace.requests[arrived_before..]
            .iter()
            .take_while(|r| r.arrival_s < ts + 1.0)
            .filter(|r| r.arrival_s >= ts)
            .count();
        timeline.push(TimelinePoint {
            t_s: t,
            queue_depth: arrived - started,
            active_entry: active,
            arrivals: arrivals_in_second,
        });
    }

    SimMetrics {
        schema_version: 1,
        slo_ms,
        requests: n,
        slo_compliance: compliance,
        p50_ms: p50,
        p95_ms: p95,
        p99_ms: p99,
        mean_wait_ms: mean_wait,
        mean_accuracy: mean_acc,
        switches_up,
        switches_down,
        timeline,
    }
}

/// Pollaczek-Khinchine mean wait for an M/G/1 queue, in the same time unit
/// as the inputs: `lambda * E[S^2] / (2 (1 - rho))`.
pub fn pollaczek_khinchine_wait(lambda: f64, mean_service: f64, second_moment: f64) -> f64 {
    let rho = lambda * mean_service;
    debug_assert!(rho < 1.0);
    lambda * second_moment / (2.0 * (1.0 - rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;

    fn tiny_space() -> (ConfigSpace, Configuration) {
        let space = ConfigSpace::new(
            vec![ParameterSpec::categorical(
                "profile",
                ["fast", "medium", "accurate"].map(String::from).to_vec(),
            )],
            vec![],
        )
        .unwrap();
        (space, Configuration(vec![0]))
    }

    fn ladder() -> Vec<Rung> {
        vec![
            Rung {
                config: Configuration(vec![0]),
                accuracy: 0.761,
                upscale_threshold: 6,
                downscale_threshold: Some(1),
            },
            Rung {
                config: Configuration(vec![1]),
                accuracy: 0.825,
                upscale_threshold: 1,
                downscale_threshold: Some(0),
            },
            Rung {
                config: Configuration(vec![2]),
                accuracy: 0.853,
                upscale_threshold: 0,
                downscale_threshold: None,
            },
        ]
    }

    #[test]
    fn constant_arrival_counts_follow_poisson_statistics() {
        // lambda 1.5 over 180 s: mean 270, 3 sigma ~ 49; at least 99% of a
        // seed batch must land inside
        let pattern = LoadPattern::constant(1.5, 180.0);
        let mut inside = 0;
        for seed in 0..300u64 {
            let n = generate_arrivals(&pattern, seed).unwrap().len() as f64;
            if (n - 270.0).abs() <= 49.3 {
                inside += 1;
            }
        }
        assert!(inside >= 297, "{inside}/300 seeds inside 3 sigma");
    }

    #[test]
    fn spike_pattern_adds_the_middle_third_surge() {
        // 60 * 1.5 + 60 * 6 + 60 * 1.5 = 540 expected
        let pattern = LoadPattern::spike(1.5, 180.0, 4.0);
        let arrivals = generate_arrivals(&pattern, 7).unwrap();
        let n = arrivals.len() as f64;
        assert!((n - 540.0).abs() <= 3.0 * 540.0f64.sqrt(), "count {n}");
        // the middle third actually carries the extra mass
        let mid = arrivals.iter().filter(|&&t| (60.0..120.0).contains(&t)).count();
        assert!(mid as f64 > 240.0, "middle third {mid}");
    }

    #[test]
    fn zero_duration_yields_no_arrivals() {
        let pattern = LoadPattern::constant(1.5, 0.0);
        assert!(generate_arrivals(&pattern, 1).unwrap().is_empty());
    }

    #[test]
    fn arrivals_are_sorted_and_deterministic() {
        let pattern = LoadPattern::bursty(2.0, 120.0);
        let a = generate_arrivals(&pattern, 9).unwrap();
        let b = generate_arrivals(&pattern, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&t| t < 120.0));
    }

    #[test]
    fn upscale_walks_the_ladder_to_the_most_accurate_fit() {
        // depth 3 from the accurate rung: rung 1 tolerates 1, rung 0
        // tolerates 6, so the jump lands on rung 0
        let state = ControllerState {
            active: 2,
            last_upscale_s: f64::NEG_INFINITY,
            last_downscale_s: f64::NEG_INFINITY,
        };
        let opts = SimOptions::default();
        assert_eq!(
            elastico_decide(&state, &ladder(), 3, 10.0, &opts),
            Decision::SwitchTo(0)
        );
        // depth 1 fits rung 1
        assert_eq!(
            elastico_decide(&state, &ladder(), 1, 10.0, &opts),
            Decision::SwitchTo(1)
        );
    }

    #[test]
    fn single_rung_mode_upscales_one_step() {
        let state = ControllerState {
            active: 2,
            last_upscale_s: f64::NEG_INFINITY,
            last_downscale_s: f64::NEG_INFINITY,
        };
        let opts = SimOptions {
            single_rung_upscale: true,
            ..SimOptions::default()
        };
        assert_eq!(
            elastico_decide(&state, &ladder(), 3, 10.0, &opts),
            Decision::SwitchTo(1)
        );
    }

    #[test]
    fn calm_queue_downscales_one_rung() {
        let state = ControllerState {
            active: 0,
            last_upscale_s: f64::NEG_INFINITY,
            last_downscale_s: f64::NEG_INFINITY,
        };
        let opts = SimOptions::default();
        assert_eq!(
            elastico_decide(&state, &ladder(), 0, 10.0, &opts),
            Decision::SwitchTo(1)
        );
    }

    #[test]
    fn recent_upscale_blocks_the_downscale() {
        let state = ControllerState {
            active: 0,
            last_upscale_s: 9.0,
            last_downscale_s: f64::NEG_INFINITY,
        };
        let opts = SimOptions::default(); // cooldown_down_s = 5
        assert_eq!(elastico_decide(&state, &ladder(), 0, 10.0, &opts), Decision::Stay);
        assert_eq!(
            elastico_decide(&state, &ladder(), 0, 14.5, &opts),
            Decision::SwitchTo(1)
        );
    }

    #[test]
    fn most_accurate_rung_has_nowhere_to_downscale() {
        let state = ControllerState {
            active: 2,
            last_upscale_s: f64::NEG_INFINITY,
            last_downscale_s: f64::NEG_INFINITY,
        };
        let opts = SimOptions::default();
        assert_eq!(elastico_decide(&state, &ladder(), 0, 50.0, &opts), Decision::Stay);
    }

    fn static_run(
        arrivals: &[f64],
        service_ms: f64,
        seed: u64,
    ) -> SimTrace {
        let (space, config) = tiny_space();
        let model = ServiceModel::deterministic(service_ms, vec![]);
        let rungs = vec![Rung {
            config,
            accuracy: 0.761,
            upscale_threshold: 0,
            downscale_threshold: None,
        }];
        let opts = SimOptions {
            static_entry: Some(0),
            ..SimOptions::default()
        };
        run_simulation(&space, &model, &rungs, arrivals, &opts, seed).unwrap()
    }

    #[test]
    fn underloaded_static_run_is_fully_compliant() {
        let pattern = LoadPattern::constant(1.0, 120.0);
        let arrivals = generate_arrivals(&pattern, 3).unwrap();
        let trace = static_run(&arrivals, 100.0, 3);
        let metrics = compute_metrics(&trace, 1000.0);
        assert!(metrics.slo_compliance > 0.999);
        assert_eq!(metrics.requests, arrivals.len());
        assert!((metrics.mean_accuracy - 0.761).abs() < 1e-12);
    }

    #[test]
    fn conservation_and_fifo_order_hold() {
        let pattern = LoadPattern::spike(3.0, 60.0, 4.0);
        let arrivals = generate_arrivals(&pattern, 5).unwrap();
        let trace = static_run(&arrivals, 150.0, 5);
        assert_eq!(trace.requests.len(), arrivals.len());
        for r in &trace.requests {
            assert!(r.arrival_s <= r.start_s && r.start_s <= r.completion_s);
        }
        // single server, non-preemptive: service start order equals arrival order
        for pair in trace.requests.windows(2) {
            assert!(pair[0].start_s <= pair[1].start_s);
            assert!(pair[0].completion_s <= pair[1].start_s + 1e-12);
        }
    }

    #[test]
    fn md1_mean_wait_tracks_pollaczek_khinchine() {
        // rho = 0.3 with deterministic 200 ms service: PK gives 42.857 ms
        let pattern = LoadPattern::constant(1.5, 20_000.0 / 1.5);
        let arrivals = generate_arrivals(&pattern, 12).unwrap();
        let trace = static_run(&arrivals, 200.0, 12);
        let metrics = compute_metrics(&trace, 1000.0);
        let pk_ms = pollaczek_khinchine_wait(1.5, 0.2, 0.04) * 1000.0;
        assert!((pk_ms - 42.857142857).abs() < 1e-6);
        let rel = (metrics.mean_wait_ms - pk_ms).abs() / pk_ms;
        assert!(rel < 0.1, "simulated {} vs PK {pk_ms}", metrics.mean_wait_ms);
    }

    #[test]
    fn simulation_is_deterministic() {
        let pattern = LoadPattern::bursty(2.0, 90.0);
        let arrivals = generate_arrivals(&pattern, 21).unwrap();
        let (space, _) = tiny_space();
        let model = ServiceModel::lognormal(
            250.0,
            vec![crate::service::LatencyTerm::Levels {
                axis: 0,
                levels_ms: vec![0.0, 150.0, 350.0],
            }],
            0.3,
        )
        .unwrap();
        let rungs = ladder();
        let opts = SimOptions::default();
        let a = run_simulation(&space, &model, &rungs, &arrivals, &opts, 21).unwrap();
        let b = run_simulation(&space, &model, &rungs, &arrivals, &opts, 21).unwrap();
        assert_eq!(a.requests, b.requests);
        assert_eq!(a.switches, b.switches);
    }

    #[test]
    fn switching_reacts_to_a_spike_and_recovers() {
        let pattern = LoadPattern::spike(2.0, 180.0, 4.0);
        let arrivals = generate_arrivals(&pattern, 33).unwrap();
        let (space, _) = tiny_space();
        let model = ServiceModel::deterministic(
            120.0,
            vec![crate::service::LatencyTerm::Levels {
                axis: 0,
                levels_ms: vec![0.0, 180.0, 380.0],
            }],
        );
        let rungs = ladder();
        let opts = SimOptions::default();
        let trace = run_simulation(&space, &model, &rungs, &arrivals, &opts, 33).unwrap();
        let metrics = compute_metrics(&trace, 1000.0);
        assert!(metrics.switches_up >= 1, "spike must force an upscale");
        // served accuracy sits between the fastest and the most accurate rung
        assert!(metrics.mean_accuracy > 0.761 && metrics.mean_accuracy < 0.853);
        // every request still served
        assert_eq!(metrics.requests, arrivals.len());
    }

    #[test]
    fn timeline_tracks_queue_depth_and_active_entry() {
        let arrivals = vec![0.0, 0.0, 0.0];
        let trace = static_run(&arrivals, 2000.0, 1);
        let metrics = compute_metrics(&trace, 10_000.0);
        assert_eq!(metrics.timeline[0].queue_depth, 2);
        assert_eq!(metrics.timeline[0].arrivals, 3);
        assert_eq!(metrics.timeline[2].queue_depth, 1);
        assert!(metrics.timeline.iter().all(|p| p.active_entry == 0));
        // percentiles are monotone
        assert!(metrics.p50_ms <= metrics.p95_ms && metrics.p95_ms <= metrics.p99_ms);
    }
}
