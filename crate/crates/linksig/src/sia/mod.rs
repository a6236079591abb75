//! Statistical inference attacks: scenario-specific training sets, link
//! signature inference, and the guess-count security metric.
//!
//! Three adversary scenarios differ by what the survey phase saw:
//!
//! * Case I — links disjoint from the target; features are both endpoint
//!   locations.
//! * Case II — downlinks of the target's transmitter; features are the
//!   receiver location.
//! * Case III — historical signatures of the target link itself; the
//!   feature is the measurement index.
//!
//! After inference the attacker guesses each quantization level by walking
//! outward from the inferred level (q, q+1, q-1, q+2, ...), and the metric
//! is how many guesses the true level takes.

pub mod models;

pub use models::{Hyperparams, InferenceModel, ModelKind, TrainingSet};

use crate::chansynth::{ChannelImpulseResponse, LinkSignatureRecord};
use crate::keyext::quantize;
use crate::{Error, Result};

/// Exhaustive 5-bit search visits 16 values on average.
pub const BRUTE_FORCE_MEAN_GUESSES: f64 = 16.0;

/// `log2` of the brute-force search space over `points` signature points.
pub fn baseline_log2(points: usize) -> f64 {
    points as f64 * BRUTE_FORCE_MEAN_GUESSES.log2()
}

/// Directed link selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkId {
    pub tx: u32,
    pub rx: u32,
}

/// Which survey data the adversary trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ScenarioKind {
    CaseIDisjointLinks,
    CaseIISharedTransmitter,
    CaseIIIHistoricalSignatures,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::CaseIDisjointLinks,
        ScenarioKind::CaseIISharedTransmitter,
        ScenarioKind::CaseIIIHistoricalSignatures,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::CaseIDisjointLinks => "case1",
            ScenarioKind::CaseIISharedTransmitter => "case2",
            ScenarioKind::CaseIIIHistoricalSignatures => "case3",
        }
    }
}

/// A target link under a given scenario. `held_out_meas` selects the
/// measurement used as ground truth (Case III trains on the others).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackScenario {
    pub kind: ScenarioKind,
    pub target: LinkId,
    pub held_out_meas: u32,
}

impl AttackScenario {
    pub fn new(kind: ScenarioKind, target: LinkId, held_out_meas: u32) -> Self {
        AttackScenario {
            kind,
            target,
            held_out_meas,
        }
    }
}

/// Per-point guess counts for one attacked key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuessTrace {
    pub per_point_guesses: Vec<u32>,
}

impl GuessTrace {
    pub fn points(&self) -> usize {
        self.per_point_guesses.len()
    }

    pub fn mean(&self) -> f64 {
        self.per_point_guesses.iter().map(|&g| g as f64).sum::<f64>()
            / self.per_point_guesses.len().max(1) as f64
    }
}

fn target_records<'a>(
    dataset: &'a [LinkSignatureRecord],
    target: LinkId,
) -> Vec<&'a LinkSignatureRecord> {
    let mut records: Vec<&LinkSignatureRecord> = dataset
        .iter()
        .filter(|r| r.tx_id == target.tx && r.rx_id == target.rx)
        .collect();
    records.sort_by_key(|r| r.meas_index);
    records
}

/// Ground-truth CIR for the attacked key: the held-out measurement of the
/// target link.
pub fn target_true_cir(
    dataset: &[LinkSignatureRecord],
    scenario: &AttackScenario,
) -> Result<ChannelImpulseResponse> {
    target_records(dataset, scenario.target)
        .into_iter()
        .find(|r| r.meas_index == scenario.held_out_meas)
        .map(|r| r.cir.clone())
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "target link {}->{} has no measurement {}",
                scenario.target.tx, scenario.target.rx, scenario.held_out_meas
            ))
        })
}

/// Query features the trained model is asked for (the target's own
/// coordinates, or its held-out time index).
pub fn target_query(
    dataset: &[LinkSignatureRecord],
    scenario: &AttackScenario,
) -> Result<Vec<f64>> {
    let records = target_records(dataset, scenario.target);
    let first = records.first().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "dataset has no records for link {}->{}",
            scenario.target.tx, scenario.target.rx
        ))
    })?;
    Ok(match scenario.kind {
        ScenarioKind::CaseIDisjointLinks => vec![
            first.tx_loc.x,
            first.tx_loc.y,
            first.rx_loc.x,
            first.rx_loc.y,
        ],
        ScenarioKind::CaseIISharedTransmitter => vec![first.rx_loc.x, first.rx_loc.y],
        ScenarioKind::CaseIIIHistoricalSignatures => vec![f64::from(scenario.held_out_meas)],
    })
}

/// Assemble the survey training set for `scenario`.
///
/// Case I drops every link touching either target endpoint; Case II keeps
/// links sharing the target's transmitter (minus the target itself);
/// Case III keeps the target's other measurements. With `k_nearest` set,
/// cases I and II keep only the k links closest to the target, distance
/// being tx-tx + rx-rx endpoint distance (rx-rx alone for case II).
pub fn build_training_set(
    dataset: &[LinkSignatureRecord],
    scenario: &AttackScenario,
    k_nearest: Option<usize>,
) -> Result<TrainingSet> {
    let target = scenario.target;
    if target.tx == target.rx {
        return Err(Error::InvalidConfig("target tx and rx must differ".into()));
    }
    let target_recs = target_records(dataset, target);
    if target_recs.is_empty() {
        return Err(Error::EmptyTrainingSet(format!(
            "dataset has no records for link {}->{}",
            target.tx, target.rx
        )));
    }
    let target_tx_loc = target_recs[0].tx_loc;
    let target_rx_loc = target_recs[0].rx_loc;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    match scenario.kind {
        ScenarioKind::CaseIIIHistoricalSignatures => {
            for r in &target_recs {
                if r.meas_index == scenario.held_out_meas {
                    continue;
                }
                features.push(vec![f64::from(r.meas_index)]);
                labels.push(r.cir.taps.clone());
            }
            if features.is_empty() {
                return Err(Error::EmptyTrainingSet(
                    "case III needs at least one historical signature".into(),
                ));
            }
        }
        ScenarioKind::CaseIDisjointLinks | ScenarioKind::CaseIISharedTransmitter => {
            let shared_tx = scenario.kind == ScenarioKind::CaseIISharedTransmitter;
            let keep = |r: &LinkSignatureRecord| -> bool {
                if shared_tx {
                    r.tx_id == target.tx && r.rx_id != target.rx
                } else {
                    r.tx_id != target.tx
                        && r.tx_id != target.rx
                        && r.rx_id != target.tx
                        && r.rx_id != target.rx
                }
            };
            // distance of a link to the target, for the k-nearest filter
            let link_distance = |r: &LinkSignatureRecord| -> f64 {
                let rx_term = r.rx_loc.distance(target_rx_loc);
                if shared_tx {
                    rx_term
                } else {
                    r.tx_loc.distance(target_tx_loc) + rx_term
                }
            };
            let kept: Vec<&LinkSignatureRecord> =
                dataset.iter().filter(|r| keep(r)).collect();
            if kept.is_empty() {
                return Err(Error::EmptyTrainingSet(match scenario.kind {
                    ScenarioKind::CaseIISharedTransmitter => {
                        "no links share the target's transmitter".into()
                    }
                    _ => "no links are disjoint from the target".into(),
                }));
            }
            let selected: Vec<&LinkSignatureRecord> = match k_nearest {
                None => kept,
                Some(k) => {
                    let mut links: Vec<(u32, u32, f64)> = Vec::new();
                    for r in &kept {
                        if !links.iter().any(|l| l.0 == r.tx_id && l.1 == r.rx_id) {
                            links.push((r.tx_id, r.rx_id, link_distance(r)));
                        }
                    }
                    links.sort_by(|a, b| {
                        a.2.partial_cmp(&b.2)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then((a.0, a.1).cmp(&(b.0, b.1)))
                    });
                    links.truncate(k.max(1));
                    kept.into_iter()
                        .filter(|r| {
                            links.iter().any(|l| l.0 == r.tx_id && l.1 == r.rx_id)
                        })
                        .collect()
                }
            };
            for r in selected {
                features.push(match scenario.kind {
                    ScenarioKind::CaseIISharedTransmitter => vec![r.rx_loc.x, r.rx_loc.y],
                    _ => vec![r.tx_loc.x, r.tx_loc.y, r.rx_loc.x, r.rx_loc.y],
                });
                labels.push(r.cir.taps.clone());
            }
        }
    }
    Ok(TrainingSet { features, labels })
}

/// Train a learner and predict the target signature; taps clamped to be
/// nonnegative.
pub fn infer_signature(
    model: &InferenceModel,
    query: &[f64],
    sampling_interval: f64,
) -> Result<ChannelImpulseResponse> {
    let taps = model
        .predict(query)?
        .into_iter()
        .map(|t| t.max(0.0))
        .collect();
    Ok(ChannelImpulseResponse {
        taps,
        sampling_interval,
    })
}

/// 1-based rank of `true_level` in the outward walk `q, q+1, q-1, q+2,
/// q-2, ...` from the inferred level, skipping values outside `[0, 31]`.
pub fn guess_count(true_level: u8, inferred_level: u8) -> Result<u32> {
    if true_level > 31 || inferred_level > 31 {
        return Err(Error::OutOfRange(format!(
            "levels must lie in [0, 31], got true {true_level}, inferred {inferred_level}"
        )));
    }
    let q = i32::from(inferred_level);
    let target = i32::from(true_level);
    let mut rank = 0;
    for step in 0..=31 {
        for candidate in [q + step, q - step] {
            if !(0..=31).contains(&candidate) {
                continue;
            }
            rank += 1;
            if candidate == target {
                return Ok(rank);
            }
            if step == 0 {
                break; // +0 and -0 are the same guess
            }
        }
    }
    unreachable!("the walk covers every level in [0, 31]");
}

/// Compare the quantizations of a true and an inferred CIR over the first
/// `key_points` signature points.
pub fn guesses_between(
    true_cir: &ChannelImpulseResponse,
    inferred_cir: &ChannelImpulseResponse,
    key_points: usize,
) -> Result<GuessTrace> {
    let true_q = quantize(true_cir)?;
    let inferred_q = quantize(inferred_cir)?;
    if true_q.levels.len() < key_points || inferred_q.levels.len() < key_points {
        return Err(Error::OutOfRange(format!(
            "key_points {key_points} exceeds the signature length {}",
            true_q.levels.len().min(inferred_q.levels.len())
        )));
    }
    let per_point_guesses = true_q.levels[..key_points]
        .iter()
        .zip(&inferred_q.levels[..key_points])
        .map(|(&t, &q)| guess_count(t, q))
        .collect::<Result<Vec<u32>>>()?;
    Ok(GuessTrace { per_point_guesses })
}

/// Full attack on one link: survey, train, infer, and count guesses
/// against the held-out measurement.
pub fn attack_link(
    dataset: &[LinkSignatureRecord],
    scenario: &AttackScenario,
    model_kind: ModelKind,
    hyper: &Hyperparams,
    k_nearest: Option<usize>,
    key_points: usize,
    seed: u64,
) -> Result<GuessTrace> {
    let set = build_training_set(dataset, scenario, k_nearest)?;
    let model = models::train_model(model_kind, &set, hyper, seed)?;
    let true_cir = target_true_cir(dataset, scenario)?;
    let query = target_query(dataset, scenario)?;
    let inferred = infer_signature(&model, &query, true_cir.sampling_interval)?;
    guesses_between(&true_cir, &inferred, key_points)
}

/// Pooled CDF of guesses: `(g, fraction of points found within g guesses)`
/// for g = 1..=32.
pub fn cdf_of_guesses(traces: &[GuessTrace]) -> Result<Vec<(u32, f64)>> {
    let total: usize = traces.iter().map(GuessTrace::points).sum();
    if total == 0 {
        return Err(Error::InvalidConfig(
            "need at least one guess trace with points".into(),
        ));
    }
    let mut counts = [0usize; 33];
    for t in traces {
        for &g in &t.per_point_guesses {
            counts[g as usize] += 1;
        }
    }
    let mut acc = 0usize;
    Ok((1..=32u32)
        .map(|g| {
            acc += counts[g as usize];
            (g, acc as f64 / total as f64)
        })
        .collect())
}

/// `log2` of the attacked search space: the sum of per-point `log2(guesses)`.
pub fn search_space(trace: &GuessTrace) -> Result<f64> {
    if trace.points() == 0 {
        return Err(Error::InvalidConfig("empty guess trace".into()));
    }
    Ok(trace
        .per_point_guesses
        .iter()
        .map(|&g| f64::from(g).log2())
        .sum())
}

/// Pooled per-point mean and sample standard deviation (denominator N-1).
pub fn mean_and_sd(traces: &[GuessTrace]) -> Result<(f64, f64)> {
    let values: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.per_point_guesses.iter().map(|&g| f64::from(g)))
        .collect();
    if values.len() < 2 {
        return Err(Error::InvalidConfig(
            "standard deviation needs at least 2 points".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
