//! Fallback pipelines: ordered method sequences with first-success semantics.
//!
//! A pipeline mimics a user who switches to the next method when the current
//! one fails. Stages run strictly in order; the first success wins. If every
//! stage fails, the outcome is a `PipelineExhausted` failure listing each
//! attempt. Exhaustion is data, not an error.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{DatasetId, Failure, FailureKind, MethodId, RunOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("pipeline has no stages")]
    Empty,
    #[error("stage `{0}` appears more than once")]
    DuplicateStage(String),
    #[error("method `{0}` lists itself as a fallback")]
    SelfFallback(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pipeline {
    stages: Vec<MethodId>,
}

impl Pipeline {
    pub fn new(stages: Vec<MethodId>) -> Result<Self, PipelineError> {
        if stages.is_empty() {
            return Err(PipelineError::Empty);
        }
        let mut seen = HashSet::new();
        for s in &stages {
            if !seen.insert(s) {
                return Err(PipelineError::DuplicateStage(s.to_string()));
            }
        }
        Ok(Self { stages })
    }

    pub fn single(method: MethodId) -> Self {
        Self {
            stages: vec![method],
        }
    }

    pub fn stages(&self) -> &[MethodId] {
        &self.stages
    }

    pub fn fallbacks(&self) -> usize {
        self.stages.len() - 1
    }

    /// `m1/m2/...`
    pub fn label(&self) -> String {
        self.stages
            .iter()
            .map(MethodId::as_str)
            .collect::<Vec<_>>()
            .join("/")
    }

    /// The label as a method identifier, for use as a table column.
    pub fn id(&self) -> MethodId {
        MethodId::new(self.label()).expect("labels are non-empty")
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub outcome: RunOutcome,
    /// Zero-based index of the stage that produced the value.
    pub resolved_by: Option<usize>,
    /// Failures of the stages tried before resolution (all stages on exhaustion).
    pub attempts: Vec<(MethodId, Failure)>,
}

/// Runs the stages of `pipeline` on `dataset` until one succeeds.
///
/// The returned elapsed time is the sum over all attempted stages. A
/// singleton pipeline returns the evaluator's outcome unchanged, failure
/// included.
pub fn run_pipeline<E>(pipeline: &Pipeline, mut evaluator: E, dataset: &DatasetId) -> PipelineOutcome
where
    E: FnMut(&MethodId, &DatasetId) -> RunOutcome,
{
    let mut attempts = Vec::new();
    let mut elapsed = Duration::ZERO;
    for (i, stage) in pipeline.stages.iter().enumerate() {
        let mut outcome = evaluator(stage, dataset);
        elapsed += outcome.elapsed;
        match outcome.result {
            Ok(_) => {
                outcome.elapsed = elapsed;
                return PipelineOutcome {
                    outcome,
                    resolved_by: Some(i),
                    attempts,
                };
            }
            Err(ref f) if pipeline.stages.len() == 1 => {
                return PipelineOutcome {
                    attempts: vec![(stage.clone(), f.clone())],
                    outcome,
                    resolved_by: None,
                };
            }
            Err(f) => attempts.push((stage.clone(), f)),
        }
    }
    let detail = attempts
        .iter()
        .map(|(m, f)| format!("{m}: {f}"))
        .collect::<Vec<_>>()
        .join("; ");
    PipelineOutcome {
        outcome: RunOutcome::failure(Failure::new(FailureKind::PipelineExhausted, detail), elapsed),
        resolved_by: None,
        attempts,
    }
}

/// Enumerates the pipelines to evaluate.
///
/// A base method without declared fallbacks yields its bare pipeline. A base
/// method with fallbacks yields one pipeline per fallback chain of length
/// `1..=max_fallbacks`, where a chain is an order-preserving subsequence of
/// its declared fallback list; its bare pipeline is added only when
/// `include_bare` is set. Output follows `base_methods` order, then chain
/// length, then declaration order.
pub fn expand_pipelines(
    base_methods: &[MethodId],
    fallback_map: &BTreeMap<MethodId, Vec<MethodId>>,
    max_fallbacks: usize,
    include_bare: bool,
) -> Result<Vec<Pipeline>, PipelineError> {
    for (base, fallbacks) in fallback_map {
        if fallbacks.contains(base) {
            return Err(PipelineError::SelfFallback(base.to_string()));
        }
        let mut seen = HashSet::new();
        for f in fallbacks {
            if !seen.insert(f) {
                return Err(PipelineError::DuplicateStage(f.to_string()));
            }
        }
    }
    let mut out = Vec::new();
    let mut emitted = HashSet::new();
    for base in base_methods {
        let fallbacks = fallback_map.get(base).filter(|f| !f.is_empty() && max_fallbacks > 0);
        let mut push = |p: Pipeline| -> Result<(), PipelineError> {
            if !emitted.insert(p.clone()) {
                return Err(PipelineError::DuplicateStage(p.label()));
            }
            out.push(p);
            Ok(())
        };
        match fallbacks {
            None => push(Pipeline::single(base.clone()))?,
            Some(fallbacks) => {
                if include_bare {
                    push(Pipeline::single(base.clone()))?;
                }
                for len in 1..=max_fallbacks.min(fallbacks.len()) {
                    for chain in subsequences(fallbacks, len) {
                        let mut stages = vec![base.clone()];
                        stages.extend(chain);
                        push(Pipeline::new(stages)?)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn subsequences(items: &[MethodId], len: usize) -> Vec<Vec<MethodId>> {
    if len == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in subsequences(&items[i + 1..], len - 1) {
            rest.insert(0, items[i].clone());
            out.push(rest);
        }
    }
    out
}
