//! Score-sheet data model, its JSON format, and additive score composition.
//!
//! A sheet lists the planned elements of a program with their base values,
//! the five program components and the component factor. Scores compose
//! without any learned part: element TES = base + GOE, TES is the sum of
//! element scores, PCS is the factored component sum and the total is
//! TES + PCS.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of program components on every sheet.
pub const PCS_COMPONENTS: usize = 5;
pub const GOE_MIN: f64 = -5.0;
pub const GOE_MAX: f64 = 5.0;
pub const PCS_MIN: f64 = 0.0;
pub const PCS_MAX: f64 = 10.0;
/// Recorded totals must match recomposition within this tolerance.
pub const TOTALS_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_COMPONENT_NAMES: [&str; PCS_COMPONENTS] = [
    "Skating Skills",
    "Transitions",
    "Performance",
    "Composition",
    "Interpretation of the Music",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionType {
    Transition,
    Jump,
    Spin,
    StepSequence,
}

impl ActionType {
    pub const COUNT: usize = 4;
    pub const ALL: [ActionType; 4] = [
        ActionType::Transition,
        ActionType::Jump,
        ActionType::Spin,
        ActionType::StepSequence,
    ];
    /// The element classes, i.e. everything but the filler.
    pub const ELEMENTS: [ActionType; 3] =
        [ActionType::Jump, ActionType::Spin, ActionType::StepSequence];

    /// Class index: Transition 0, Jump 1, Spin 2, StepSequence 3.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ActionType> {
        ActionType::ALL.get(i).copied()
    }

    pub fn is_element(self) -> bool {
        self != ActionType::Transition
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Transition => "Transition",
            ActionType::Jump => "Jump",
            ActionType::Spin => "Spin",
            ActionType::StepSequence => "StepSequence",
        }
    }

    /// One-letter timeline code.
    pub fn code(self) -> char {
        match self {
            ActionType::Transition => 'T',
            ActionType::Jump => 'J',
            ActionType::Spin => 'S',
            ActionType::StepSequence => 'Q',
        }
    }

    /// Position among the three element classes (for one-hot conditioning).
    pub fn element_index(self) -> Option<usize> {
        match self {
            ActionType::Transition => None,
            other => Some(other.index() - 1),
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionType::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedElement {
    pub seq: usize,
    pub name: String,
    pub action: ActionType,
    pub base: f64,
}

/// Multiplier applied to the component sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcsFactor {
    /// 1.00
    Full,
    /// 0.80
    Reduced,
}

impl PcsFactor {
    pub fn value(self) -> f64 {
        match self {
            PcsFactor::Full => 1.0,
            PcsFactor::Reduced => 0.8,
        }
    }

    pub fn from_value(v: f64) -> Option<PcsFactor> {
        if (v - 1.0).abs() < 1e-9 {
            Some(PcsFactor::Full)
        } else if (v - 0.8).abs() < 1e-9 {
            Some(PcsFactor::Reduced)
        } else {
            None
        }
    }
}

/// Judge-panel outcome attached to a sheet for training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub goe: Vec<f64>,
    pub pcs: [f64; PCS_COMPONENTS],
    pub tes_total: Option<f64>,
    pub pcs_total: Option<f64>,
    pub total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub performance_id: String,
    pub pcs_factor: PcsFactor,
    pub elements: Vec<PlannedElement>,
    pub pcs_component_names: [String; PCS_COMPONENTS],
    pub truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RubricError {
    #[error("malformed score sheet at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("component count: expected {expected} program components in `{field}`, found {found}")]
    ComponentCount {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("GOE range: truth.goe[{index}] = {value} lies outside [-5, +5]")]
    GoeRange { index: usize, value: f64 },
    #[error("pcs_factor must be 1.00 or 0.80, found {0}")]
    PcsFactor(f64),
    #[error("duplicate sequence index {0}")]
    DuplicateSequence(usize),
    #[error("elements[{position}].seq is {found}, expected {expected} (indices must run 1..=n in order)")]
    SequenceOrder {
        position: usize,
        expected: usize,
        found: i64,
    },
    #[error("elements[{index}].base = {value} is negative")]
    NegativeBase { index: usize, value: f64 },
    #[error("elements[{index}].action: {message}")]
    InvalidAction { index: usize, message: String },
    #[error("`{field}` has {found} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("recorded {field} = {recorded} disagrees with recomposed {recomputed}")]
    TotalsMismatch {
        field: &'static str,
        recorded: f64,
        recomputed: f64,
    },
    #[error("`{0}` is not a finite number")]
    NonFinite(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSheet {
    performance_id: Option<String>,
    pcs_factor: Option<f64>,
    elements: Option<Vec<RawElement>>,
    pcs_components: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<RawTruth>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    seq: Option<i64>,
    name: Option<String>,
    action: Option<String>,
    base: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    goe: Option<Vec<f64>>,
    pcs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tes_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pcs_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total: Option<f64>,
}

fn required<T>(value: Option<T>, field: impl Into<String>) -> Result<T, RubricError> {
    value.ok_or_else(|| RubricError::MissingField(field.into()))
}

/// Parses and validates a score-sheet JSON document.
pub fn parse_score_sheet(document: &str) -> Result<ScoreSheet, RubricError> {
    let raw: RawSheet = serde_json::from_str(document).map_err(|e| RubricError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let performance_id = required(raw.performance_id, "performance_id")?;
    let factor_value = required(raw.pcs_factor, "pcs_factor")?;
    let pcs_factor =
        PcsFactor::from_value(factor_value).ok_or(RubricError::PcsFactor(factor_value))?;

    let raw_elements = required(raw.elements, "elements")?;
    let mut elements = Vec::with_capacity(raw_elements.len());
    for (i, e) in raw_elements.into_iter().enumerate() {
        let seq = required(e.seq, format!("elements[{i}].seq"))?;
        let name = required(e.name, format!("elements[{i}].name"))?;
        let action_name = required(e.action, format!("elements[{i}].action"))?;
        let base = required(e.base, format!("elements[{i}].base"))?;
        let action = action_name
            .parse::<ActionType>()
            .map_err(|message| RubricError::InvalidAction { index: i, message })?;
        if seq < 1 {
            return Err(RubricError::SequenceOrder {
                position: i,
                expected: i + 1,
                found: seq,
            });
        }
        elements.push(PlannedElement {
            seq: seq as usize,
            name,
            action,
            base,
        });
    }

    let names = required(raw.pcs_components, "pcs_components")?;
    let found = names.len();
    let pcs_component_names: [String; PCS_COMPONENTS] =
        names.try_into().map_err(|_| RubricError::ComponentCount {
            field: "pcs_components",
            expected: PCS_COMPONENTS,
            found,
        })?;

    let truth = match raw.truth {
        None => None,
        Some(t) => {
            let goe = required(t.goe, "truth.goe")?;
            let pcs = required(t.pcs, "truth.pcs")?;
            let found = pcs.len();
            let pcs: [f64; PCS_COMPONENTS] =
                pcs.try_into().map_err(|_| RubricError::ComponentCount {
                    field: "truth.pcs",
                    expected: PCS_COMPONENTS,
                    found,
                })?;
            Some(GroundTruth {
                goe,
                pcs,
                tes_total: t.tes_total,
                pcs_total: t.pcs_total,
                total: t.total,
            })
        }
    };

    let sheet = ScoreSheet {
        performance_id,
        pcs_factor,
        elements,
        pcs_component_names,
        truth,
    };
    sheet.validate()?;
    Ok(sheet)
}

impl ScoreSheet {
    /// Checks every sheet invariant.
    pub fn validate(&self) -> Result<(), RubricError> {
        let mut seen = vec![false; self.elements.len() + 1];
        for e in &self.elements {
            if e.seq < seen.len() {
                if seen[e.seq] {
                    return Err(RubricError::DuplicateSequence(e.seq));
                }
                seen[e.seq] = true;
            }
        }
        for (i, e) in self.elements.iter().enumerate() {
            if e.seq != i + 1 {
                return Err(RubricError::SequenceOrder {
                    position: i,
                    expected: i + 1,
                    found: e.seq as i64,
                });
            }
            if !e.action.is_element() {
                return Err(RubricError::InvalidAction {
                    index: i,
                    message: "Transition is not a plannable element".to_string(),
                });
            }
            if !e.base.is_finite() {
                return Err(RubricError::NonFinite(format!("elements[{i}].base")));
            }
            if e.base < 0.0 {
                return Err(RubricError::NegativeBase {
                    index: i,
                    value: e.base,
                });
            }
        }
        let Some(truth) = &self.truth else {
            return Ok(());
        };
        if truth.goe.len() != self.elements.len() {
            return Err(RubricError::LengthMismatch {
                field: "truth.goe",
                expected: self.elements.len(),
                found: truth.goe.len(),
            });
        }
        for (index, &value) in truth.goe.iter().enumerate() {
            if !value.is_finite() {
                return Err(RubricError::NonFinite(format!("truth.goe[{index}]")));
            }
            if !(GOE_MIN..=GOE_MAX).contains(&value) {
                return Err(RubricError::GoeRange { index, value });
            }
        }
        if let Some(i) = truth.pcs.iter().position(|v| !v.is_finite()) {
            return Err(RubricError::NonFinite(format!("truth.pcs[{i}]")));
        }
        let tes = self.composed_tes(&truth.goe);
        let pcs = self.composed_pcs(&truth.pcs);
        for (field, recorded, recomputed) in [
            ("tes_total", truth.tes_total, tes),
            ("pcs_total", truth.pcs_total, pcs),
            ("total", truth.total, tes + pcs),
        ] {
            if let Some(recorded) = recorded {
                if !recorded.is_finite() || (recorded - recomputed).abs() > TOTALS_TOLERANCE {
                    return Err(RubricError::TotalsMismatch {
                        field,
                        recorded,
                        recomputed,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn bases(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.base).collect()
    }

    pub fn composed_tes(&self, goe: &[f64]) -> f64 {
        self.elements.iter().zip(goe).map(|(e, g)| e.base + g).sum()
    }

    pub fn composed_pcs(&self, components: &[f64]) -> f64 {
        self.pcs_factor.value() * components.iter().sum::<f64>()
    }

    /// Single-line JSON in the score-sheet schema.
    pub fn to_json(&self) -> String {
        let raw = RawSheet {
            performance_id: Some(self.performance_id.clone()),
            pcs_factor: Some(self.pcs_factor.value()),
            elements: Some(
                self.elements
                    .iter()
                    .map(|e| RawElement {
                        seq: Some(e.seq as i64),
                        name: Some(e.name.clone()),
                        action: Some(e.action.name().to_string()),
                        base: Some(e.base),
                    })
                    .collect(),
            ),
            pcs_components: Some(self.pcs_component_names.to_vec()),
            truth: self.truth.as_ref().map(|t| RawTruth {
                goe: Some(t.goe.clone()),
                pcs: Some(t.pcs.to_vec()),
                tes_total: t.tes_total,
                pcs_total: t.pcs_total,
                total: t.total,
            }),
        };
        serde_json::to_string(&raw).expect("score sheet serializes")
    }

    /// A copy with ground truth removed.
    pub fn without_truth(&self) -> ScoreSheet {
        ScoreSheet {
            truth: None,
            ..self.clone()
        }
    }
}

/// Planned-element count per action type. Transition carries no constraint and is always 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ElementCounts([usize; ActionType::COUNT]);

impl ElementCounts {
    pub fn new(jumps: usize, spins: usize, steps: usize) -> Self {
        ElementCounts([0, jumps, spins, steps])
    }

    pub fn get(&self, action: ActionType) -> usize {
        self.0[action.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Counts of element runs in a label sequence.
    pub fn of_actions(actions: impl IntoIterator<Item = ActionType>) -> Self {
        let mut c = ElementCounts::default();
        for a in actions.into_iter().filter(|a| a.is_element()) {
            c.0[a.index()] += 1;
        }
        c
    }
}

pub fn element_counts(sheet: &ScoreSheet) -> ElementCounts {
    ElementCounts::of_actions(sheet.elements.iter().map(|e| e.action))
}

/// A maximal run of windows `[start, end)` sharing one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub action: ActionType,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementJudgment {
    pub seq: usize,
    pub name: String,
    pub action: ActionType,
    pub base: f64,
    pub goe: f64,
    pub tes: f64,
    /// False when no detected segment could be assigned to this element.
    pub detected: bool,
}

/// The explainable output: per-element scores, components, subtotals and segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub performance_id: String,
    pub elements: Vec<ElementJudgment>,
    pub pcs_factor: f64,
    pub pcs_component_names: Vec<String>,
    pub pcs_components: Vec<f64>,
    pub tes_total: f64,
    pub pcs_total: f64,
    pub total_score: f64,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Judgment {
    /// Flags an element as undetected. Scores are untouched.
    pub fn mark_missing(&mut self, index: usize) {
        self.elements[index].detected = false;
    }

    /// Number of windows covered by the segments.
    pub fn timeline_len(&self) -> usize {
        self.segments.last().map(|s| s.end).unwrap_or(0)
    }

    /// Checks the additive invariants within `tol`.
    pub fn check_invariants(&self, tol: f64) -> bool {
        let elements_ok = self
            .elements
            .iter()
            .all(|e| (e.tes - (e.base + e.goe)).abs() <= tol);
        let tes: f64 = self.elements.iter().map(|e| e.tes).sum();
        let pcs = self.pcs_factor * self.pcs_components.iter().sum::<f64>();
        elements_ok
            && (self.tes_total - tes).abs() <= tol
            && (self.pcs_total - pcs).abs() <= tol
            && (self.total_score - (self.tes_total + self.pcs_total)).abs() <= tol
    }
}

/// Composes a judgment from GOE and component predictions; exact arithmetic only.
pub fn compose_judgment(
    sheet: &ScoreSheet,
    goe: &[f64],
    pcs: &[f64],
    segments: Vec<Segment>,
) -> Result<Judgment, RubricError> {
    if goe.len() != sheet.elements.len() {
        return Err(RubricError::LengthMismatch {
            field: "goe",
            expected: sheet.elements.len(),
            found: goe.len(),
        });
    }
    if pcs.len() != PCS_COMPONENTS {
        return Err(RubricError::ComponentCount {
            field: "pcs",
            expected: PCS_COMPONENTS,
            found: pcs.len(),
        });
    }
    let elements: Vec<ElementJudgment> = sheet
        .elements
        .iter()
        .zip(goe)
        .map(|(e, &g)| ElementJudgment {
            seq: e.seq,
            name: e.name.clone(),
            action: e.action,
            base: e.base,
            goe: g,
            tes: e.base + g,
            detected: true,
        })
        .collect();
    let tes_total = elements.iter().map(|e| e.tes).sum::<f64>();
    let pcs_total = sheet.composed_pcs(pcs);
    Ok(Judgment {
        performance_id: sheet.performance_id.clone(),
        elements,
        pcs_factor: sheet.pcs_factor.value(),
        pcs_component_names: sheet.pcs_component_names.to_vec(),
        pcs_components: pcs.to_vec(),
        tes_total,
        pcs_total,
        total_score: tes_total + pcs_total,
        segments,
        warnings: Vec::new(),
    })
}

/// Builds a sheet's recorded totals from its truth GOE and components.
pub fn record_totals(sheet: &mut ScoreSheet) {
    if let Some(truth) = sheet.truth.as_ref() {
        let tes = sheet.composed_tes(&truth.goe);
        let pcs = sheet.composed_pcs(&truth.pcs);
        let truth = sheet.truth.as_mut().expect("checked above");
        truth.tes_total = Some(tes);
        truth.pcs_total = Some(pcs);
        truth.total = Some(tes + pcs);
    }
}
