//! Canonical in-memory representation of RD data, sorted by the
//! assignment variable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One study subject: assignment variable `r`, scalar confounder (or
/// confounder score) `x`, outcome `y`, and the treatment actually
/// received `t`. For sharp designs t = 1(r ≥ r₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub t: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("empty input")]
    EmptyInput,
    #[error("subject `{id}`: field `{field}` is not finite")]
    NonFiniteValue { id: String, field: &'static str },
    #[error("cutoff is not finite")]
    NonFiniteCutoff,
    #[error("one-sided design: no subject on one side of the cutoff")]
    OneSidedDesign,
}

/// Subjects sorted ascending by `r`, with at least one subject on each
/// side of the cutoff. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RDDataset {
    subjects: Vec<Subject>,
    cutoff: f64,
    // input_order[i] = position of sorted subject i in the original input.
    input_order: Vec<usize>,
}

/// Validates and stably sorts raw subjects by `r` (ties keep input order).
pub fn validate_and_sort(raw: Vec<Subject>, cutoff: f64) -> Result<RDDataset, DataError> {
    if raw.is_empty() {
        return Err(DataError::EmptyInput);
    }
    if !cutoff.is_finite() {
        return Err(DataError::NonFiniteCutoff);
    }
    for s in &raw {
        for (field, v) in [("r", s.r), ("x", s.x), ("y", s.y)] {
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    id: s.id.clone(),
                    field,
                });
            }
        }
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].r.total_cmp(&raw[b].r));
    let mut raw_opt: Vec<Option<Subject>> = raw.into_iter().map(Some).collect();
    let subjects: Vec<Subject> = order
        .iter()
        .map(|&idx| raw_opt[idx].take().expect("each index moved once"))
        .collect();
    let has_treated_side = subjects.iter().any(|s| s.r >= cutoff);
    let has_control_side = subjects.iter().any(|s| s.r < cutoff);
    if !has_treated_side || !has_control_side {
        return Err(DataError::OneSidedDesign);
    }
    Ok(RDDataset {
        subjects,
        cutoff,
        input_order: order,
    })
}

impl RDDataset {
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn subject(&self, i: usize) -> &Subject {
        &self.subjects[i]
    }

    pub fn r(&self, i: usize) -> f64 {
        self.subjects[i].r
    }

    pub fn x(&self, i: usize) -> f64 {
        self.subjects[i].x
    }

    pub fn y(&self, i: usize) -> f64 {
        self.subjects[i].y
    }

    pub fn t(&self, i: usize) -> bool {
        self.subjects[i].t
    }

    /// Whether subject i sits on the treated side of the cutoff (r ≥ r₀).
    pub fn treated_side(&self, i: usize) -> bool {
        self.subjects[i].r >= self.cutoff
    }

    /// Original input position of each sorted subject.
    pub fn input_order(&self) -> &[usize] {
        &self.input_order
    }
}
