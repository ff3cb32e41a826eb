use std::collections::BTreeMap;

use ndarray::Array2;

use crate::pretrain::SafetyAgent;
use crate::risk::RiskStrategy;
use crate::selector::ActingPolicy;

use super::records::StepRecord;

/// One step of a failed episode, re-scored by the safety critics at the
/// action that was executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRow {
    pub episode: usize,
    pub step: usize,
    pub risk: f64,
    pub th_raise: f64,
    pub th_lower: f64,
    pub disagree_value: f64,
    pub disagree_reach: f64,
    pub policy: ActingPolicy,
}

impl FailureRow {
    pub const CSV_HEADER: [&'static str; 8] = [
        "episode",
        "step",
        "risk",
        "th_raise",
        "th_lower",
        "disagree_value",
        "disagree_reach",
        "policy",
    ];
}

/// Traces every episode whose last record is a failure.
pub fn analyze_failures(
    records: &[StepRecord],
    safety: &SafetyAgent<f32>,
    strategy: &RiskStrategy,
    th_raise: f64,
    th_lower: f64,
) -> Vec<FailureRow> {
    let mut episodes: BTreeMap<usize, Vec<&StepRecord>> = BTreeMap::new();
    for r in records {
        episodes.entry(r.episode).or_default().push(r);
    }
    let mut out = Vec::new();
    for (ep, mut steps) in episodes {
        steps.sort_by_key(|r| r.step);
        if !steps.last().is_some_and(|r| r.terminated) {
            continue;
        }
        let x = Array2::from_shape_fn((steps.len(), 5), |(i, c)| {
            if c < 4 {
                steps[i].obs[c] as f32
            } else {
                steps[i].action as f32
            }
        });
        let dv = safety.value.disagreement_l1(x.view());
        let dr = safety.reach.disagreement_l1(x.view());
        for (i, r) in steps.iter().enumerate() {
            let risk = strategy.evaluate(safety, &r.obs, &[r.action])[0];
            out.push(FailureRow {
                episode: ep,
                step: r.step,
                risk,
                th_raise,
                th_lower,
                disagree_value: dv[i],
                disagree_reach: dr[i],
                policy: r.policy,
            });
        }
    }
    out
}
