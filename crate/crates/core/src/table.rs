//! Outcome data model: typed success/failure cells and the method×dataset grid.
//!
//! A [`ResultTable`] is total: every `(method, dataset)` pair holds a
//! [`RunOutcome`], and a method that produced nothing is recorded as a
//! failure cell rather than a missing entry. Simulation repetitions and
//! benchmark data sets are both plain [`DatasetId`]s.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::MeasureSpec;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("identifier must be non-empty")]
    EmptyId,
    #[error("duplicate method `{0}`")]
    DuplicateMethod(String),
    #[error("duplicate dataset `{0}`")]
    DuplicateDataset(String),
    #[error("no cell for method `{method}` on dataset `{dataset}`")]
    MissingCell { method: String, dataset: String },
    #[error("more than one cell for method `{method}` on dataset `{dataset}`")]
    DuplicateCell { method: String, dataset: String },
    #[error("non-finite value {value} for method `{method}` on dataset `{dataset}`")]
    NonFiniteValue {
        method: String,
        dataset: String,
        value: f64,
    },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("empty method list")]
    EmptyMethodList,
    #[error("malformed table document: {0}")]
    Malformed(String),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self, TableError> {
                let id = id.into();
                if id.is_empty() {
                    return Err(TableError::EmptyId);
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = TableError;
            fn try_from(s: String) -> Result<Self, TableError> {
                Self::new(s)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = TableError;
            fn try_from(s: &str) -> Result<Self, TableError> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(MethodId);
string_id!(DatasetId);

/// Identifier shorthand for literals known to be non-empty.
///
/// Panics on an empty string.
pub fn mid(s: &str) -> MethodId {
    MethodId::new(s).expect("non-empty method id")
}

/// See [`mid`].
pub fn did(s: &str) -> DatasetId {
    DatasetId::new(s).expect("non-empty dataset id")
}

/// Cause of a method failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    /// Error, non-convergence, or a non-meaningful numeric result.
    Calculation,
    /// The method ran out of memory.
    Memory,
    /// The per-cell time budget was exceeded, or the cell was excluded by design.
    Runtime,
    /// Every stage of a fallback pipeline failed.
    PipelineExhausted,
}

impl FailureKind {
    pub const ALL: [FailureKind; 4] = [
        FailureKind::Calculation,
        FailureKind::Memory,
        FailureKind::Runtime,
        FailureKind::PipelineExhausted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Calculation => "Calculation",
            FailureKind::Memory => "Memory",
            FailureKind::Runtime => "Runtime",
            FailureKind::PipelineExhausted => "PipelineExhausted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed failure with its captured message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub detail: String,
}

impl Failure {
    /// Only `Runtime` failures may carry an empty detail; other kinds get the
    /// kind name as placeholder text.
    pub fn new(kind: FailureKind, detail: impl Into<String>) -> Self {
        let mut detail = detail.into();
        if detail.is_empty() && kind != FailureKind::Runtime {
            detail = format!("{kind} failure");
        }
        Self { kind, detail }
    }

    pub fn calculation(detail: impl Into<String>) -> Self {
        Self::new(FailureKind::Calculation, detail)
    }

    pub fn memory(detail: impl Into<String>) -> Self {
        Self::new(FailureKind::Memory, detail)
    }

    pub fn runtime(detail: impl Into<String>) -> Self {
        Self::new(FailureKind::Runtime, detail)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.detail.is_empty() {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "{}({})", self.kind, self.detail)
        }
    }
}

/// One method-on-dataset result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub result: Result<f64, Failure>,
    pub elapsed: Duration,
    /// Free-text note, e.g. a warning emitted alongside a returned value.
    pub annotation: Option<String>,
    /// Set on cells filled in by an imputation policy.
    pub imputed: bool,
}

impl RunOutcome {
    /// A successful result. Non-finite values become `Calculation` failures
    /// whose detail preserves the numeric text.
    pub fn success(value: f64, elapsed: Duration) -> Self {
        let result = if value.is_finite() {
            Ok(value)
        } else {
            Err(Failure::calculation(format!("non-finite result: {value}")))
        };
        Self {
            result,
            elapsed,
            annotation: None,
            imputed: false,
        }
    }

    pub fn failure(failure: Failure, elapsed: Duration) -> Self {
        Self {
            result: Err(failure),
            elapsed,
            annotation: None,
            imputed: false,
        }
    }

    pub fn with_annotation(mut self, note: impl Into<String>) -> Self {
        self.annotation = Some(note.into());
        self
    }

    pub fn value(&self) -> Option<f64> {
        self.result.as_ref().ok().copied()
    }

    pub fn failure_ref(&self) -> Option<&Failure> {
        self.result.as_ref().err()
    }

    pub fn is_success(&self) -> bool {
        self.result.is_ok()
    }
}

/// Complete method×dataset grid of outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    methods: Vec<MethodId>,
    datasets: Vec<DatasetId>,
    /// Method-major: `cells[m * datasets.len() + d]`.
    cells: Vec<RunOutcome>,
    pub measure: Option<MeasureSpec>,
    /// Name of the imputation policy that produced this table, if any.
    pub imputation: Option<String>,
    /// Datasets actually executed per method under runtime subsetting.
    pub runtime_subsets: BTreeMap<MethodId, Vec<DatasetId>>,
}

fn check_unique<T: Clone + Eq + std::hash::Hash>(
    items: &[T],
    dup: impl Fn(&T) -> TableError,
) -> Result<HashMap<T, usize>, TableError> {
    let mut index = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if index.insert(item.clone(), i).is_some() {
            return Err(dup(item));
        }
    }
    Ok(index)
}

/// Assembles and validates a table from per-cell entries.
///
/// Every pair must be covered exactly once; stored values must be finite.
pub fn build_table<I>(
    methods: Vec<MethodId>,
    datasets: Vec<DatasetId>,
    entries: I,
) -> Result<ResultTable, TableError>
where
    I: IntoIterator<Item = (MethodId, DatasetId, RunOutcome)>,
{
    let m_index = check_unique(&methods, |m| TableError::DuplicateMethod(m.to_string()))?;
    let d_index = check_unique(&datasets, |d| TableError::DuplicateDataset(d.to_string()))?;
    let nd = datasets.len();
    let mut slots: Vec<Option<RunOutcome>> = vec![None; methods.len() * nd];
    for (m, d, outcome) in entries {
        let mi = *m_index
            .get(&m)
            .ok_or_else(|| TableError::UnknownMethod(m.to_string()))?;
        let di = *d_index
            .get(&d)
            .ok_or_else(|| TableError::UnknownDataset(d.to_string()))?;
        if let Ok(v) = outcome.result {
            if !v.is_finite() {
                return Err(TableError::NonFiniteValue {
                    method: m.to_string(),
                    dataset: d.to_string(),
                    value: v,
                });
            }
        }
        let slot = &mut slots[mi * nd + di];
        if slot.is_some() {
            return Err(TableError::DuplicateCell {
                method: m.to_string(),
                dataset: d.to_string(),
            });
        }
        *slot = Some(outcome);
    }
    let mut cells = Vec::with_capacity(slots.len());
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(c) => cells.push(c),
            None => {
                return Err(TableError::MissingCell {
                    method: methods[i / nd].to_string(),
                    dataset: datasets[i % nd].to_string(),
                })
            }
        }
    }
    Ok(ResultTable {
        methods,
        datasets,
        cells,
        measure: None,
        imputation: None,
        runtime_subsets: BTreeMap::new(),
    })
}

impl ResultTable {
    /// Builds a table from method-major rows of outcomes, one row per method
    /// in `methods` order, each row in `datasets` order.
    pub fn from_rows(
        methods: Vec<MethodId>,
        datasets: Vec<DatasetId>,
        rows: Vec<Vec<RunOutcome>>,
    ) -> Result<Self, TableError> {
        let mut entries = Vec::with_capacity(methods.len() * datasets.len());
        for (m, row) in methods.iter().zip(rows) {
            for (d, cell) in datasets.iter().zip(row) {
                entries.push((m.clone(), d.clone(), cell));
            }
        }
        build_table(methods, datasets, entries)
    }

    pub fn methods(&self) -> &[MethodId] {
        &self.methods
    }

    pub fn datasets(&self) -> &[DatasetId] {
        &self.datasets
    }

    pub fn method_index(&self, method: &MethodId) -> Result<usize, TableError> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| TableError::UnknownMethod(method.to_string()))
    }

    pub fn dataset_index(&self, dataset: &DatasetId) -> Result<usize, TableError> {
        self.datasets
            .iter()
            .position(|d| d == dataset)
            .ok_or_else(|| TableError::UnknownDataset(dataset.to_string()))
    }

    pub fn cell(&self, method: &MethodId, dataset: &DatasetId) -> Result<&RunOutcome, TableError> {
        let mi = self.method_index(method)?;
        let di = self.dataset_index(dataset)?;
        Ok(self.cell_at(mi, di))
    }

    pub fn cell_at(&self, method: usize, dataset: usize) -> &RunOutcome {
        &self.cells[method * self.datasets.len() + dataset]
    }

    pub(crate) fn cell_at_mut(&mut self, method: usize, dataset: usize) -> &mut RunOutcome {
        let nd = self.datasets.len();
        &mut self.cells[method * nd + dataset]
    }

    /// Outcomes for one method in dataset order.
    pub fn column(&self, method: usize) -> &[RunOutcome] {
        let nd = self.datasets.len();
        &self.cells[method * nd..(method + 1) * nd]
    }

    /// Iterates `(method, dataset, outcome)` in method-major order.
    pub fn iter_cells(&self) -> impl Iterator<Item = (&MethodId, &DatasetId, &RunOutcome)> {
        let nd = self.datasets.len();
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, c)| (&self.methods[i / nd], &self.datasets[i % nd], c))
    }

    pub(crate) fn success_indices(&self, method: usize) -> Vec<usize> {
        self.column(method)
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_success())
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn joint_success_indices(&self, methods: &[usize]) -> Vec<usize> {
        (0..self.datasets.len())
            .filter(|&d| methods.iter().all(|&m| self.cell_at(m, d).is_success()))
            .collect()
    }

    /// Copy with every elapsed time zeroed; used for timing-independent
    /// comparisons and digests.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for c in &mut t.cells {
            c.elapsed = Duration::ZERO;
        }
        t
    }

    pub fn is_imputed(&self) -> bool {
        self.imputation.is_some()
    }
}

/// Datasets on which `method` returned a value, in table order.
pub fn success_set(table: &ResultTable, method: &MethodId) -> Result<Vec<DatasetId>, TableError> {
    let mi = table.method_index(method)?;
    Ok(table
        .success_indices(mi)
        .into_iter()
        .map(|d| table.datasets[d].clone())
        .collect())
}

/// Datasets on which every method in `methods` returned a value.
pub fn joint_success_set(
    table: &ResultTable,
    methods: &[MethodId],
) -> Result<Vec<DatasetId>, TableError> {
    if methods.is_empty() {
        return Err(TableError::EmptyMethodList);
    }
    let idx = methods
        .iter()
        .map(|m| table.method_index(m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(table
        .joint_success_indices(&idx)
        .into_iter()
        .map(|d| table.datasets[d].clone())
        .collect())
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CellDoc {
    method: MethodId,
    dataset: DatasetId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<Failure>,
    elapsed_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotation: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    imputed: bool,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    /// Always present; `null` for raw tables.
    imputation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    measure: Option<MeasureSpec>,
    methods: Vec<MethodId>,
    datasets: Vec<DatasetId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    runtime_subsets: BTreeMap<MethodId, Vec<DatasetId>>,
    cells: Vec<CellDoc>,
}

pub(crate) fn duration_to_ms(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e6
}

pub(crate) fn ms_to_duration(ms: f64) -> Result<Duration, TableError> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(TableError::Malformed(format!("invalid elapsed_ms {ms}")));
    }
    Ok(Duration::from_nanos((ms * 1e6).round() as u64))
}

fn cell_from_parts(
    value: Option<f64>,
    failure: Option<Failure>,
    elapsed_ms: f64,
    annotation: Option<String>,
    imputed: bool,
) -> Result<RunOutcome, TableError> {
    let result = match (value, failure) {
        (Some(v), None) => Ok(v),
        (None, Some(f)) => {
            if f.detail.is_empty() && f.kind != FailureKind::Runtime {
                return Err(TableError::Malformed(format!(
                    "{} failure without detail",
                    f.kind
                )));
            }
            Err(f)
        }
        _ => {
            return Err(TableError::Malformed(
                "cell must carry exactly one of value/failure".into(),
            ))
        }
    };
    Ok(RunOutcome {
        result,
        elapsed: ms_to_duration(elapsed_ms)?,
        annotation,
        imputed,
    })
}

impl ResultTable {
    fn to_doc(&self) -> TableDoc {
        TableDoc {
            imputation: self.imputation.clone(),
            measure: self.measure.clone(),
            methods: self.methods.clone(),
            datasets: self.datasets.clone(),
            runtime_subsets: self.runtime_subsets.clone(),
            cells: self
                .iter_cells()
                .map(|(m, d, c)| CellDoc {
                    method: m.clone(),
                    dataset: d.clone(),
                    value: c.value(),
                    failure: c.failure_ref().cloned(),
                    elapsed_ms: duration_to_ms(c.elapsed),
                    annotation: c.annotation.clone(),
                    imputed: c.imputed,
                })
                .collect(),
        }
    }

    fn from_doc(doc: TableDoc) -> Result<Self, TableError> {
        let entries = doc
            .cells
            .into_iter()
            .map(|c| {
                let outcome =
                    cell_from_parts(c.value, c.failure, c.elapsed_ms, c.annotation, c.imputed)?;
                Ok((c.method, c.dataset, outcome))
            })
            .collect::<Result<Vec<_>, TableError>>()?;
        let mut table = build_table(doc.methods, doc.datasets, entries)?;
        table.measure = doc.measure;
        table.imputation = doc.imputation;
        table.runtime_subsets = doc.runtime_subsets;
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("table serializes")
    }

    pub fn to_json_compact(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TableError> {
        let doc: TableDoc =
            serde_json::from_str(s).map_err(|e| TableError::Malformed(e.to_string()))?;
        Self::from_doc(doc)
    }

    /// Flat CSV, one row per cell. Failure cells carry an empty value and a
    /// kind. Table-level metadata other than the imputation policy is not
    /// represented.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TableError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| TableError::Malformed(e.to_string());
        wtr.write_record([
            "method",
            "dataset",
            "value",
            "failure_kind",
            "failure_detail",
            "elapsed_ms",
            "annotation",
            "imputed",
            "table_imputation",
        ])
        .map_err(io)?;
        let policy = self.imputation.clone().unwrap_or_default();
        for (m, d, c) in self.iter_cells() {
            let (value, kind, detail) = match &c.result {
                Ok(v) => (v.to_string(), String::new(), String::new()),
                Err(f) => (String::new(), f.kind.to_string(), f.detail.clone()),
            };
            wtr.write_record([
                m.as_str(),
                d.as_str(),
                &value,
                &kind,
                &detail,
                &duration_to_ms(c.elapsed).to_string(),
                c.annotation.as_deref().unwrap_or(""),
                if c.imputed { "true" } else { "false" },
                &policy,
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| TableError::Malformed(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// Parses the CSV written by [`ResultTable::write_csv`]. Method and
    /// dataset order follow first appearance.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TableError> {
        let mut rdr = csv::Reader::from_reader(r);
        let bad = |e: csv::Error| TableError::Malformed(e.to_string());
        let mut methods: Vec<MethodId> = Vec::new();
        let mut datasets: Vec<DatasetId> = Vec::new();
        let mut seen_m = HashSet::new();
        let mut seen_d = HashSet::new();
        let mut entries = Vec::new();
        let mut policy: Option<String> = None;
        for rec in rdr.records() {
            let rec = rec.map_err(bad)?;
            if rec.len() != 9 {
                return Err(TableError::Malformed(format!(
                    "expected 9 columns, found {}",
                    rec.len()
                )));
            }
            let m = MethodId::new(&rec[0])?;
            let d = DatasetId::new(&rec[1])?;
            if seen_m.insert(m.clone()) {
                methods.push(m.clone());
            }
            if seen_d.insert(d.clone()) {
                datasets.push(d.clone());
            }
            let value = if rec[2].is_empty() {
                None
            } else {
                Some(
                    rec[2]
                        .parse::<f64>()
                        .map_err(|e| TableError::Malformed(e.to_string()))?,
                )
            };
            let failure = if rec[3].is_empty() {
                None
            } else {
                let kind = FailureKind::parse(&rec[3])
                    .ok_or_else(|| TableError::Malformed(format!("unknown kind `{}`", &rec[3])))?;
                Some(Failure {
                    kind,
                    detail: rec[4].to_string(),
                })
            };
            let elapsed_ms = rec[5]
                .parse::<f64>()
                .map_err(|e| TableError::Malformed(e.to_string()))?;
            let annotation = (!rec[6].is_empty()).then(|| rec[6].to_string());
            let imputed = &rec[7] == "true";
            if !rec[8].is_empty() {
                policy = Some(rec[8].to_string());
            }
            entries.push((
                m,
                d,
                cell_from_parts(value, failure, elapsed_ms, annotation, imputed)?,
            ));
        }
        let mut table = build_table(methods, datasets, entries)?;
        table.imputation = policy;
        Ok(table)
    }
}

/// The two small example tables used throughout the docs and tests: three
/// methods, four data sets, one failure each for methods 1 and 3.
pub mod fixtures {
    use super::*;

    fn grid(rows: &[[Option<f64>; 3]; 4]) -> ResultTable {
        let methods = vec![mid("Method 1"), mid("Method 2"), mid("Method 3")];
        let datasets: Vec<_> = (1..=4).map(|i| did(&i.to_string())).collect();
        let mut entries = Vec::new();
        for (di, row) in rows.iter().enumerate() {
            for (mi, v) in row.iter().enumerate() {
                let outcome = match v {
                    Some(v) => RunOutcome::success(*v, Duration::from_millis(1)),
                    None => RunOutcome::failure(
                        Failure::calculation("NA"),
                        Duration::from_millis(1),
                    ),
                };
                entries.push((methods[mi].clone(), datasets[di].clone(), outcome));
            }
        }
        build_table(methods, datasets, entries).unwrap()
    }

    /// Fictive benchmark study: accuracies of three methods on four data sets.
    pub fn table_1b() -> ResultTable {
        grid(&[
            [Some(0.85), Some(0.88), Some(0.87)],
            [Some(0.9), Some(0.91), Some(0.86)],
            [None, Some(0.80), Some(0.82)],
            [Some(0.78), Some(0.76), None],
        ])
    }

    /// Fictive simulation study: estimates with true value 4.
    pub fn table_1a() -> ResultTable {
        grid(&[
            [Some(3.89), Some(4.23), Some(4.08)],
            [Some(3.78), Some(4.13), Some(4.11)],
            [None, Some(3.69), Some(4.23)],
            [Some(3.75), Some(4.24), None],
        ])
    }
}
