//! Synthetic stand-in for per-window video embeddings with known scores.
//!
//! Each action class has a fixed signature vector and a quality direction.
//! A window inside an element carries `signature + q * direction + noise`,
//! where `q` in [-1, 1] is the element's execution quality and its GOE is
//! `5 q`. Transition windows carry the performance's mean quality along the
//! transition direction. Component scores are smooth functions of the mean
//! quality.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, EmbeddingSequence, PerformanceRecord, SegmentLabeling, MAX_WINDOWS};
use crate::kernel::Tensor;
use crate::rubric::{
    record_totals, ActionType, GroundTruth, PcsFactor, PlannedElement, ScoreSheet, Segment,
    DEFAULT_COMPONENT_NAMES, GOE_MAX, PCS_COMPONENTS, PCS_MAX, PCS_MIN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_records: usize,
    /// Inclusive range of valid windows per record.
    pub t_valid: (usize, usize),
    pub dim: usize,
    pub jumps: (usize, usize),
    pub spins: (usize, usize),
    pub step_sequences: (usize, usize),
    /// Standard deviation of per-feature Gaussian noise.
    pub noise: f64,
    /// Seed of the class signatures; shared across datasets so that
    /// separately generated sets live in the same feature space.
    pub signature_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_records: 150,
            t_valid: (80, 120),
            dim: 32,
            jumps: (2, 3),
            spins: (2, 3),
            step_sequences: (1, 1),
            noise: 0.5,
            signature_seed: 0x1815,
        }
    }
}

/// Inclusive duration range in windows per action.
fn duration_range(action: ActionType) -> (usize, usize) {
    match action {
        ActionType::Jump => (4, 8),
        ActionType::Spin => (6, 12),
        ActionType::StepSequence => (10, 18),
        ActionType::Transition => (2, usize::MAX),
    }
}

fn base_range(action: ActionType) -> (f64, f64) {
    match action {
        ActionType::Jump => (3.0, 11.0),
        ActionType::Spin => (1.5, 3.5),
        ActionType::StepSequence => (2.5, 4.0),
        ActionType::Transition => (0.0, 0.0),
    }
}

fn element_names(action: ActionType) -> &'static [&'static str] {
    match action {
        ActionType::Jump => &[
            "2A", "3T", "3S", "3Lo", "3F", "3Lz", "3A", "4T", "3Lz+3T", "3F+2T",
        ],
        ActionType::Spin => &["CCoSp4", "FCSp3", "LSp4", "CSSp4", "FSSp3"],
        ActionType::StepSequence => &["StSq3", "StSq4"],
        ActionType::Transition => &[],
    }
}

/// Offset and sensitivity of each component to mean quality.
const COMPONENT_SHAPE: [(f64, f64); PCS_COMPONENTS] =
    [(0.2, 1.0), (-0.3, 1.1), (0.1, 0.9), (0.0, 1.0), (-0.1, 1.2)];

/// Mean-quality to component score map.
pub(crate) fn component_score(component: usize, mean_quality: f64) -> f64 {
    let (offset, gain) = COMPONENT_SHAPE[component];
    6.0 + offset + 2.5 * gain * (1.5 * mean_quality).tanh()
}

struct FeatureSpace {
    signatures: Vec<Vec<f64>>,
    directions: Vec<Vec<f64>>,
}

impl FeatureSpace {
    fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian =
            |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let signatures = (0..ActionType::COUNT).map(|_| gaussian(dim)).collect();
        let directions = (0..ActionType::COUNT)
            .map(|_| {
                let v = gaussian(dim);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| 2.0 * x / norm).collect()
            })
            .collect();
        FeatureSpace {
            signatures,
            directions,
        }
    }
}

fn check_config(config: &SyntheticConfig) -> Result<(), DataError> {
    let infeasible = |m: String| Err(DataError::InfeasibleConfig(m));
    if config.dim < 8 {
        return infeasible(format!("embedding dimension {} is below 8", config.dim));
    }
    let (lo, hi) = config.t_valid;
    if lo == 0 || lo > hi || hi > MAX_WINDOWS {
        return infeasible(format!(
            "valid length range {lo}..={hi} must lie within 1..={MAX_WINDOWS}"
        ));
    }
    for (name, (a, b)) in [
        ("jumps", config.jumps),
        ("spins", config.spins),
        ("step_sequences", config.step_sequences),
    ] {
        if a > b {
            return infeasible(format!("{name} range {a}..={b} is empty"));
        }
    }
    if !(config.noise >= 0.0 && config.noise.is_finite()) {
        return infeasible(format!(
            "noise level {} must be a finite non-negative number",
            config.noise
        ));
    }
    let n_max = config.jumps.1 + config.spins.1 + config.step_sequences.1;
    let min_elements = config.jumps.1 * duration_range(ActionType::Jump).0
        + config.spins.1 * duration_range(ActionType::Spin).0
        + config.step_sequences.1 * duration_range(ActionType::StepSequence).0;
    let min_gaps = 2 * (n_max.saturating_sub(1)) + 2;
    if min_elements + min_gaps > lo {
        return infeasible(format!(
            "{n_max} elements need at least {} windows but records may have only {lo}",
            min_elements + min_gaps
        ));
    }
    Ok(())
}

/// Generates `config.n_records` validated records, deterministic in `seed`.
pub fn generate_synthetic(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<Vec<PerformanceRecord>, DataError> {
    check_config(config)?;
    let space = FeatureSpace::new(config.dim, config.signature_seed);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..config.n_records)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            let record = generate_record(config, &space, &format!("perf_{i:04}"), &mut rng);
            record.validate()?;
            Ok(record)
        })
        .collect()
}

fn generate_record(
    config: &SyntheticConfig,
    space: &FeatureSpace,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> PerformanceRecord {
    let t_valid = rng.gen_range(config.t_valid.0..=config.t_valid.1);
    let mut plan = Vec::new();
    for (action, (lo, hi)) in [
        (ActionType::Jump, config.jumps),
        (ActionType::Spin, config.spins),
        (ActionType::StepSequence, config.step_sequences),
    ] {
        plan.extend(std::iter::repeat(action).take(rng.gen_range(lo..=hi)));
    }
    plan.shuffle(rng);

    let mut lengths: Vec<usize> = plan
        .iter()
        .map(|&a| {
            let (lo, hi) = duration_range(a);
            rng.gen_range(lo..=hi)
        })
        .collect();
    // inner gaps of at least 2 windows, outer gaps of at least 1
    let min_gaps = if plan.is_empty() {
        0
    } else {
        2 * (plan.len() - 1) + 2
    };
    while lengths.iter().sum::<usize>() + min_gaps > t_valid {
        let (i, _) = lengths
            .iter()
            .enumerate()
            .filter(|(i, &l)| l > duration_range(plan[*i]).0)
            .max_by_key(|(i, &l)| (l, usize::MAX - i))
            .expect("feasibility checked in config");
        lengths[i] -= 1;
    }
    let mut gaps: Vec<usize> = if plan.is_empty() {
        vec![t_valid]
    } else {
        (0..=plan.len())
            .map(|g| if g == 0 || g == plan.len() { 1 } else { 2 })
            .collect()
    };
    let spare = t_valid - lengths.iter().sum::<usize>() - gaps.iter().sum::<usize>();
    for _ in 0..spare {
        let g = rng.gen_range(0..gaps.len());
        gaps[g] += 1;
    }

    let skill: f64 = rng.gen_range(-0.6..0.6);
    let qualities: Vec<f64> = plan
        .iter()
        .map(|_| (skill + rng.gen_range(-0.4..0.4)).clamp(-1.0, 1.0))
        .collect();
    let mean_quality = if qualities.is_empty() {
        skill
    } else {
        qualities.iter().sum::<f64>() / qualities.len() as f64
    };

    let mut segments = Vec::new();
    let mut t = 0;
    for (i, &gap) in gaps.iter().enumerate() {
        segments.push(Segment {
            action: ActionType::Transition,
            start: t,
            end: t + gap,
        });
        t += gap;
        if i < plan.len() {
            segments.push(Segment {
                action: plan[i],
                start: t,
                end: t + lengths[i],
            });
            t += lengths[i];
        }
    }
    let labels =
        SegmentLabeling::from_segments(&segments).expect("generated layout is a partition");

    let mut windows = Tensor::zeros(t_valid, config.dim);
    let mut element = 0;
    for s in &segments {
        let q = if s.action.is_element() {
            qualities[element]
        } else {
            mean_quality
        };
        let sig = &space.signatures[s.action.index()];
        let dir = &space.directions[s.action.index()];
        for w in s.start..s.end {
            for (f, v) in windows.row_mut(w).iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(rng);
                *v = sig[f] + q * dir[f] + config.noise * noise;
            }
        }
        if s.action.is_element() {
            element += 1;
        }
    }

    let elements = plan
        .iter()
        .enumerate()
        .map(|(i, &action)| {
            let (lo, hi) = base_range(action);
            let base = (rng.gen_range(lo..=hi) * 100.0).round() / 100.0;
            let names = element_names(action);
            PlannedElement {
                seq: i + 1,
                name: names[rng.gen_range(0..names.len())].to_string(),
                action,
                base,
            }
        })
        .collect();
    let goe = qualities.iter().map(|q| GOE_MAX * q).collect();
    let mut pcs = [0.0; PCS_COMPONENTS];
    for (c, p) in pcs.iter_mut().enumerate() {
        let noise: f64 = StandardNormal.sample(rng);
        *p =
            (component_score(c, mean_quality) + 0.2 * config.noise * noise).clamp(PCS_MIN, PCS_MAX);
    }
    let pcs_factor = if rng.gen_bool(0.5) {
        PcsFactor::Full
    } else {
        PcsFactor::Reduced
    };
    let mut sheet = ScoreSheet {
        performance_id: id.to_string(),
        pcs_factor,
        elements,
        pcs_component_names: DEFAULT_COMPONENT_NAMES.map(String::from),
        truth: Some(GroundTruth {
            goe,
            pcs,
            tes_total: None,
            pcs_total: None,
            total: None,
        }),
    };
    record_totals(&mut sheet);

    PerformanceRecord {
        sheet,
        embeddings: EmbeddingSequence::unpadded(windows)
            .expect("generated windows are finite and in range"),
        truth_labels: Some(labels),
    }
}
