//! Deployment planning: Pareto-front construction over (accuracy, mean
//! latency) and derivation of queue-depth switching thresholds from the
//! M/G/1 response-time decomposition.
//!
//! For a latency SLO `L` and a configuration with tail latency `s95` and
//! mean service time `s`, the queuing slack is `delta = L - s95`, the
//! upscale threshold is `floor(delta / s)`, and the downscale threshold
//! toward the next (slower, more accurate) entry is
//! `floor((delta_next - h_s) / s_next)` with a slack buffer `h_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::LatencyProfile;
use crate::space::Configuration;

/// A feasible configuration with its accuracy estimate and latency profile,
/// before thresholds are attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub config: Configuration,
    pub accuracy: f64,
    pub profile: LatencyProfile,
}

/// One rung of the switching ladder as serialized into `policy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_indices: Option<Vec<usize>>,
    pub accuracy: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub slack_ms: f64,
    pub upscale_threshold: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub downscale_threshold: Option<u64>,
}

/// The full switching policy: rungs ordered fastest to most accurate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingPolicy {
    pub schema_version: u32,
    pub slo_ms: f64,
    pub slack_buffer_ms: f64,
    pub cooldown_up_s: f64,
    pub cooldown_down_s: f64,
    pub entries: Vec<PolicyEntry>,
}

impl SwitchingPolicy {
    pub fn most_accurate(&self) -> usize {
        self.entries.len() - 1
    }
}

/// Keeps every entry not dominated in the joint (accuracy, mean latency)
/// sense and orders the survivors by increasing mean service time. An entry
/// dominates another when it is at least as accurate and at least as fast,
/// strictly better on one dimension. Exact ties on both dimensions keep the
/// lexicographically smallest configuration. The result is strictly
/// increasing in both mean latency and accuracy.
pub fn pareto_front(mut candidates: Vec<ParetoEntry>) -> Vec<ParetoEntry> {
    candidates.sort_by(|a, b| {
        a.profile
            .mean_ms
            .partial_cmp(&b.profile.mean_ms)
            .unwrap()
            .then(a.accuracy.partial_cmp(&b.accuracy).unwrap())
            .then(a.config.cmp(&b.config))
    });
    let mut front: Vec<ParetoEntry> = Vec::new();
    for entry in candidates {
        let dominated = front.iter().any(|kept| {
            let tie = kept.accuracy == entry.accuracy && kept.profile.mean_ms == entry.profile.mean_ms;
            let dom = kept.accuracy >= entry.accuracy
                && kept.profile.mean_ms <= entry.profile.mean_ms
                && (kept.accuracy > entry.accuracy || kept.profile.mean_ms < entry.profile.mean_ms);
            dom || tie
        });
        if !dominated {
            front.retain(|kept| {
                !(entry.accuracy >= kept.accuracy
                    && entry.profile.mean_ms <= kept.profile.mean_ms
                    && (entry.accuracy > kept.accuracy || entry.profile.mean_ms < kept.profile.mean_ms))
            });
            front.push(entry);
        }
    }
    front.sort_by(|a, b| a.profile.mean_ms.partial_cmp(&b.profile.mean_ms).unwrap());
    front
}

/// Queuing slack: the waiting-time budget left after reserving the tail
/// service latency. Entries with non-positive slack cannot meet the SLO.
pub fn queuing_slack(slo_ms: f64, p95_ms: f64) -> f64 {
    slo_ms - p95_ms
}

/// Maximum queue depth a configuration absorbs while meeting the SLO.
pub fn upscale_threshold(slo_ms: f64, p95_ms: f64, mean_ms: f64) -> u64 {
    debug_assert!(queuing_slack(slo_ms, p95_ms) > 0.0 && mean_ms > 0.0);
    (queuing_slack(slo_ms, p95_ms) / mean_ms).floor() as u64
}

/// Queue depth below which the next (slower, more accurate) entry can take
/// over with `slack_buffer_ms` of margin. Clamped at zero.
pub fn downscale_threshold(next_slack_ms: f64, slack_buffer_ms: f64, next_mean_ms: f64) -> u64 {
    debug_assert!(next_mean_ms > 0.0 && slack_buffer_ms >= 0.0);
    ((next_slack_ms - slack_buffer_ms) / next_mean_ms).floor().max(0.0) as u64
}

/// Derives the switching policy for one SLO from a Pareto front.
///
/// Entries whose P95 already exceeds the SLO are excluded; if that empties
/// the front the SLO is infeasible on this hardware. Rungs that do not
/// strictly improve the upscale threshold over their more accurate neighbor
/// are merged away (with a warning), keeping the ladder strictly decreasing.
pub fn build_policy(
    front: &[ParetoEntry],
    slo_ms: f64,
    slack_buffer_ms: f64,
    cooldown_up_s: f64,
    cooldown_down_s: f64,
) -> Result<SwitchingPolicy> {
    if front.is_empty() {
        return Err(Error::Planning("empty Pareto front".into()));
    }
    if !slo_ms.is_finite() || slo_ms <= 0.0 {
        return Err(Error::Planning(format!("SLO {slo_ms} ms must be positive")));
    }
    if slack_buffer_ms < 0.0 || cooldown_up_s < 0.0 || cooldown_down_s < 0.0 {
        return Err(Error::Planning("buffers and cooldowns must be >= 0".into()));
    }

    let admitted: Vec<&ParetoEntry> = front
        .iter()
        .filter(|e| queuing_slack(slo_ms, e.profile.p95_ms) > 0.0)
        .collect();
    if admitted.is_empty() {
        return Err(Error::SloInfeasible(format!(
            "no Pareto entry has P95 below the {slo_ms} ms SLO on this hardware"
        )));
    }

    // scan from the most accurate end, keeping rungs whose threshold
    // strictly improves; degenerate profiles otherwise break Eq-style
    // strict ordering of the ladder
    let mut kept_rev: Vec<&ParetoEntry> = Vec::new();
    let mut last_threshold: Option<u64> = None;
    for entry in admitted.iter().rev() {
        let up = upscale_threshold(slo_ms, entry.profile.p95_ms, entry.profile.mean_ms);
        match last_threshold {
            Some(t) if up <= t => {
                log::warn!(
                    "merging ladder rung {} (upscale threshold {up} does not improve on {t})",
                    entry.config
                );
            }
            _ => {
                kept_rev.push(entry);
                last_threshold = Some(up);
            }
        }
    }
    kept_rev.reverse();
    let kept = kept_rev;

    let mut entries = Vec::with_capacity(kept.len());
    for (i, entry) in kept.iter().enumerate() {
        let slack = queuing_slack(slo_ms, entry.profile.p95_ms);
        let up = upscale_threshold(slo_ms, entry.profile.p95_ms, entry.profile.mean_ms);
        let down = kept.get(i + 1).map(|next| {
            let next_slack = queuing_slack(slo_ms, next.profile.p95_ms);
            downscale_threshold(next_slack, slack_buffer_ms, next.profile.mean_ms)
        });
        if let (Some(d), Some(next)) = (down, kept.get(i + 1)) {
            let next_up = upscale_threshold(slo_ms, next.profile.p95_ms, next.profile.mean_ms);
            assert!(
                d <= next_up,
                "downscale threshold {d} exceeds the next rung's upscale threshold {next_up}"
            );
        }
        entries.push(PolicyEntry {
            config: serde_json::Value::String(entry.config.to_string()),
            config_indices: Some(entry.config.indices().to_vec()),
            accuracy: entry.accuracy,
            mean_ms: entry.profile.mean_ms,
            p95_ms: entry.profile.p95_ms,
            slack_ms: slack,
            upscale_threshold: up,
            downscale_threshold: down,
        });
    }

    for pair in entries.windows(2) {
        assert!(
            pair[0].upscale_threshold > pair[1].upscale_threshold,
            "ladder ordering violated after merging"
        );
    }

    Ok(SwitchingPolicy {
        schema_version: 1,
        slo_ms,
        slack_buffer_ms,
        cooldown_up_s,
        cooldown_down_s,
        entries,
    })
}

/// Default slack buffer when the scenario does not set one: 10% of the SLO.
pub fn default_slack_buffer(slo_ms: f64) -> f64 {
    0.1 * slo_ms
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(config: Vec<usize>, accuracy: f64, mean_ms: f64, p95_ms: f64) -> ParetoEntry {
        ParetoEntry {
            config: Configuration(config),
            accuracy,
            profile: LatencyProfile {
                mean_ms,
                p95_ms,
                samples: 1000,
            },
        }
    }

    #[test]
    fn dominated_configuration_is_dropped() {
        let front = pareto_front(vec![
            entry(vec![0], 0.76, 120.0, 200.0),
            entry(vec![1], 0.82, 300.0, 450.0),
            entry(vec![2], 0.80, 400.0, 650.0),
        ]);
        assert_eq!(front.len(), 2);
        assert_eq!(front[0].accuracy, 0.76);
        assert_eq!(front[1].accuracy, 0.82);
    }

    #[test]
    fn single_candidate_is_its_own_front() {
        let front = pareto_front(vec![entry(vec![0], 0.5, 100.0, 150.0)]);
        assert_eq!(front.len(), 1);
    }

    #[test]
    fn empty_input_gives_empty_front() {
        assert!(pareto_front(vec![]).is_empty());
    }

    #[test]
    fn exact_ties_keep_the_lexicographically_smallest_config() {
        let front = pareto_front(vec![
            entry(vec![3], 0.8, 100.0, 150.0),
            entry(vec![1], 0.8, 100.0, 150.0),
        ]);
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].config, Configuration(vec![1]));
    }

    #[test]
    fn slack_and_exclusion_boundaries() {
        assert_eq!(queuing_slack(1000.0, 700.0), 300.0);
        assert_eq!(queuing_slack(500.0, 700.0), -200.0);
        assert_eq!(queuing_slack(700.0, 700.0), 0.0);
    }

    #[test]
    fn upscale_threshold_examples() {
        assert_eq!(upscale_threshold(1000.0, 200.0, 120.0), 6);
        assert_eq!(upscale_threshold(1000.0, 700.0, 500.0), 0);
        assert_eq!(upscale_threshold(1500.0, 700.0, 500.0), 1);
    }

    #[test]
    fn downscale_threshold_examples() {
        assert_eq!(downscale_threshold(300.0, 100.0, 500.0), 0);
        // zero buffer reduces to the next entry's upscale threshold
        assert_eq!(
            downscale_threshold(300.0, 0.0, 500.0),
            upscale_threshold(1000.0, 700.0, 500.0)
        );
        // slack at or below the buffer clamps at zero
        assert_eq!(downscale_threshold(80.0, 100.0, 500.0), 0);
    }

    fn table_front() -> Vec<ParetoEntry> {
        vec![
            entry(vec![0], 0.761, 120.0, 200.0),
            entry(vec![1], 0.825, 300.0, 450.0),
            entry(vec![2], 0.853, 500.0, 700.0),
        ]
    }

    #[test]
    fn ladder_thresholds_for_the_three_rung_front() {
        let policy = build_policy(&table_front(), 1000.0, 50.0, 0.0, 5.0).unwrap();
        let ups: Vec<u64> = policy.entries.iter().map(|e| e.upscale_threshold).collect();
        assert_eq!(ups, vec![6, 1, 0]);
        // strictly decreasing ladder
        assert!(ups[0] > ups[1] && ups[1] > ups[2]);

        let downs: Vec<Option<u64>> = policy
            .entries
            .iter()
            .map(|e| e.downscale_threshold)
            .collect();
        assert_eq!(downs, vec![Some(1), Some(0), None]);
    }

    #[test]
    fn slo_below_every_tail_is_infeasible() {
        let err = build_policy(&table_front(), 180.0, 0.0, 0.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::SloInfeasible(_)));
    }

    #[test]
    fn entries_exceeding_the_slo_are_excluded() {
        let policy = build_policy(&table_front(), 500.0, 50.0, 0.0, 5.0).unwrap();
        assert_eq!(policy.entries.len(), 2);
        assert_eq!(policy.entries[1].p95_ms, 450.0);
        assert!(policy.entries.iter().all(|e| e.slack_ms > 0.0));
    }

    #[test]
    fn degenerate_rungs_are_merged_keeping_the_accurate_side() {
        // both entries land on the same upscale threshold
        let front = vec![
            entry(vec![0], 0.70, 400.0, 500.0),
            entry(vec![1], 0.80, 450.0, 550.0),
        ];
        assert_eq!(upscale_threshold(1000.0, 500.0, 400.0), 1);
        assert_eq!(upscale_threshold(1000.0, 550.0, 450.0), 1);
        let policy = build_policy(&front, 1000.0, 0.0, 0.0, 5.0).unwrap();
        assert_eq!(policy.entries.len(), 1);
        assert_eq!(policy.entries[0].accuracy, 0.80);
    }

    #[test]
    fn policy_serializes_with_the_pinned_field_names() {
        let policy = build_policy(&table_front(), 1000.0, 100.0, 0.0, 5.0).unwrap();
        let json = serde_json::to_value(&policy).unwrap();
        assert!(json.get("slo_ms").is_some());
        assert!(json.get("slack_buffer_ms").is_some());
        assert!(json.get("cooldown_up_s").is_some());
        assert!(json.get("cooldown_down_s").is_some());
        assert!(json.get("schema_version").is_some());
        let e0 = &json["entries"][0];
        for field in [
            "config",
            "accuracy",
            "mean_ms",
            "p95_ms",
            "slack_ms",
            "upscale_threshold",
            "downscale_threshold",
        ] {
            assert!(e0.get(field).is_some(), "missing {field}");
        }
        // the last entry has no slower neighbor, so no downscale threshold
        assert!(json["entries"][2].get("downscale_threshold").is_none());
    }

    proptest! {
        // no retained entry is dominated, and every discarded entry is
        // dominated by (or exactly ties) a retained one
        #[test]
        fn pareto_soundness(raw in proptest::collection::vec((0.0f64..1.0, 50.0f64..800.0), 1..40)) {
            let candidates: Vec<ParetoEntry> = raw
                .iter()
                .enumerate()
                .map(|(i, &(a, m))| entry(vec![i], a, m, m * 1.5))
                .collect();
            let front = pareto_front(candidates.clone());
            for kept in &front {
                let beaten = front.iter().any(|o| {
                    o.accuracy >= kept.accuracy
                        && o.profile.mean_ms <= kept.profile.mean_ms
                        && (o.accuracy > kept.accuracy || o.profile.mean_ms < kept.profile.mean_ms)
                });
                prop_assert!(!beaten);
            }
            for c in &candidates {
                if front.iter().any(|k| k.config == c.config) {
                    continue;
                }
                let covered = front.iter().any(|k| {
                    (k.accuracy >= c.accuracy
                        && k.profile.mean_ms <= c.profile.mean_ms
                        && (k.accuracy > c.accuracy || k.profile.mean_ms < c.profile.mean_ms))
                        || (k.accuracy == c.accuracy && k.profile.mean_ms == c.profile.mean_ms)
                });
                prop_assert!(covered);
            }
            // ordering: strictly increasing in both dimensions
            for pair in front.windows(2) {
                prop_assert!(pair[0].profile.mean_ms < pair[1].profile.mean_ms);
                prop_assert!(pair[0].accuracy < pair[1].accuracy);
            }
        }

        // downscale conservatism: never exceeds the next rung's upscale
        // threshold for any non-negative buffer
        #[test]
        fn downscale_is_conservative(
            slo in 200.0f64..3000.0,
            p95 in 10.0f64..1900.0,
            mean_frac in 0.2f64..1.0,
            h in 0.0f64..500.0,
        ) {
            prop_assume!(slo > p95);
            let mean = p95 * mean_frac;
            let slack = queuing_slack(slo, p95);
            prop_assert!(downscale_threshold(slack, h, mean) <= upscale_threshold(slo, p95, mean));
        }
    }
}
