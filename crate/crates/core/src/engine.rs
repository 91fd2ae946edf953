//! Deterministic execution of method×dataset grids.
//!
//! Every cell gets its own seed derived from `(master_seed, method index,
//! dataset index)`, so a cell's outcome does not depend on scheduling and
//! `workers = 1` and `workers = N` produce the same table. Errors and panics
//! inside a method become failure cells; nothing method-level propagates.
//!
//! Budgets are cooperative. Methods may call [`CellContext::checkpoint`] to
//! abort early; in addition the wall-clock time is checked once the method
//! returns. Code that never reaches a checkpoint is not preempted.

use std::any::Any;
use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{
    build_table, duration_to_ms, DatasetId, Failure, MethodId, ResultTable, RunOutcome, TableError,
};

/// Detail recorded for cells skipped by runtime subsetting.
pub const EXCLUDED_BY_DESIGN: &str = "excluded by design";

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no datasets to select from")]
    EmptyDatasets,
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Error a method may return; mapped onto the failure taxonomy.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MethodError {
    #[error("{0}")]
    Calculation(String),
    #[error("{0}")]
    Memory(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<MethodError> for Failure {
    fn from(e: MethodError) -> Self {
        match e {
            MethodError::Calculation(d) => Failure::calculation(d),
            MethodError::Memory(d) => Failure::memory(d),
            MethodError::Runtime(d) => Failure::runtime(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSubset {
    /// Share of datasets to execute, in `(0, 1]`.
    pub fraction: f64,
    pub selection_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub master_seed: u64,
    pub budget: Option<Duration>,
    pub workers: usize,
    pub runtime_subsets: BTreeMap<MethodId, RuntimeSubset>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            budget: None,
            workers: 1,
            runtime_subsets: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn with_seed(master_seed: u64) -> Self {
        Self {
            master_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.workers == 0 {
            return Err(EngineError::Config("workers must be at least 1".into()));
        }
        for (m, s) in &self.runtime_subsets {
            if !(s.fraction > 0.0 && s.fraction <= 1.0) {
                return Err(EngineError::Config(format!(
                    "runtime subset fraction {} for `{m}` outside (0, 1]",
                    s.fraction
                )));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cell seed: `mix(mix(mix(master) ^ method) ^ dataset)` with the
/// SplitMix64 finalizer as `mix`. Stable across releases.
pub fn cell_seed(master_seed: u64, method_index: u64, dataset_index: u64) -> u64 {
    mix64(mix64(mix64(master_seed) ^ method_index) ^ dataset_index)
}

/// Seed of the data shared by all methods on one dataset. Uses a method slot
/// no real method occupies.
pub fn dataset_seed(master_seed: u64, dataset_index: u64) -> u64 {
    cell_seed(master_seed, u64::MAX, dataset_index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-cell execution context handed to methods.
#[derive(Debug)]
pub struct CellContext {
    pub seed: u64,
    started: Instant,
    budget: Option<Duration>,
}

impl CellContext {
    pub fn new(seed: u64, budget: Option<Duration>) -> Self {
        Self {
            seed,
            started: Instant::now(),
            budget,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        rng_from_seed(self.seed)
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    /// Returns a `Runtime` error once the budget is spent.
    pub fn checkpoint(&self) -> Result<(), MethodError> {
        match self.budget {
            Some(b) if self.elapsed() > b => Err(MethodError::Runtime(format!(
                "budget of {} ms exceeded at checkpoint",
                duration_to_ms(b)
            ))),
            _ => Ok(()),
        }
    }
}

/// A method under comparison, generic over the dataset representation.
pub trait Method<D>: Send + Sync {
    fn id(&self) -> MethodId;
    fn run(&self, data: &D, ctx: &CellContext) -> Result<f64, MethodError>;
}

/// A [`Method`] backed by a closure.
pub struct FnMethod<F> {
    id: MethodId,
    f: F,
}

impl<F> FnMethod<F> {
    pub fn new(id: MethodId, f: F) -> Self {
        Self { id, f }
    }
}

impl<D, F> Method<D> for FnMethod<F>
where
    F: Fn(&D, &CellContext) -> Result<f64, MethodError> + Send + Sync,
{
    fn id(&self) -> MethodId {
        self.id.clone()
    }

    fn run(&self, data: &D, ctx: &CellContext) -> Result<f64, MethodError> {
        (self.f)(data, ctx)
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic with non-string payload".into()
    }
}

/// Runs one method on one dataset, converting every abnormal termination
/// into a failure cell.
pub fn execute_cell<D, M>(method: &M, data: &D, seed: u64, budget: Option<Duration>) -> RunOutcome
where
    M: Method<D> + ?Sized,
{
    let ctx = CellContext::new(seed, budget);
    let result = catch_unwind(AssertUnwindSafe(|| method.run(data, &ctx)));
    let elapsed = ctx.elapsed();
    let outcome = match result {
        Ok(Ok(v)) => RunOutcome::success(v, elapsed),
        Ok(Err(e)) => RunOutcome::failure(e.into(), elapsed),
        Err(payload) => RunOutcome::failure(Failure::calculation(panic_message(payload)), elapsed),
    };
    match budget {
        Some(b) if outcome.is_success() && elapsed > b => RunOutcome::failure(
            Failure::runtime(format!(
                "budget of {} ms exceeded at completion ({} ms)",
                duration_to_ms(b),
                duration_to_ms(elapsed)
            )),
            elapsed,
        ),
        _ => outcome,
    }
}

/// Maps `f` over `0..n` on `workers` threads; output is in index order.
pub fn par_map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Uniform random subset of `ceil(fraction * n)` datasets, chosen from
/// `selection_seed` alone and returned in input order.
pub fn select_runtime_subset(
    datasets: &[DatasetId],
    fraction: f64,
    selection_seed: u64,
) -> Result<Vec<DatasetId>, EngineError> {
    if datasets.is_empty() {
        return Err(EngineError::EmptyDatasets);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EngineError::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    let n = datasets.len();
    let k = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut rng = rng_from_seed(selection_seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| datasets[i].clone()).collect())
}

/// Observer notified as cells complete (in completion order).
pub trait CellSink: Sync {
    fn record(&self, method: &MethodId, dataset: &DatasetId, outcome: &RunOutcome);
}

/// Writes one JSON object per completed cell.
pub struct NdjsonSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> NdjsonSink<W> {
    pub fn new(out: W) -> Self {
        Self {
            out: Mutex::new(out),
        }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().expect("sink lock")
    }
}

pub fn cell_json(method: &MethodId, dataset: &DatasetId, outcome: &RunOutcome) -> serde_json::Value {
    let mut obj = serde_json::json!({
        "method": method,
        "dataset": dataset,
        "elapsed_ms": duration_to_ms(outcome.elapsed),
    });
    match &outcome.result {
        Ok(v) => obj["value"] = serde_json::json!(v),
        Err(f) => obj["failure"] = serde_json::json!(f),
    }
    if let Some(a) = &outcome.annotation {
        obj["annotation"] = serde_json::json!(a);
    }
    obj
}

impl<W: Write + Send> CellSink for NdjsonSink<W> {
    fn record(&self, method: &MethodId, dataset: &DatasetId, outcome: &RunOutcome) {
        let line = cell_json(method, dataset, outcome).to_string();
        let mut out = self.out.lock().expect("sink lock");
        // a broken log must not abort the grid
        let _ = writeln!(out, "{line}");
    }
}

/// Writes every cell of `table` as newline-delimited JSON in table order.
pub fn write_ndjson<W: Write>(table: &ResultTable, mut w: W) -> std::io::Result<()> {
    for (m, d, c) in table.iter_cells() {
        writeln!(w, "{}", cell_json(m, d, c))?;
    }
    Ok(())
}

/// Executes every method on every dataset.
pub fn run_grid<D: Sync>(
    methods: &[&dyn Method<D>],
    datasets: &[(DatasetId, D)],
    config: &RunConfig,
) -> Result<ResultTable, EngineError> {
    run_grid_with_sink(methods, datasets, config, None)
}

pub fn run_grid_with_sink<D: Sync>(
    methods: &[&dyn Method<D>],
    datasets: &[(DatasetId, D)],
    config: &RunConfig,
    sink: Option<&dyn CellSink>,
) -> Result<ResultTable, EngineError> {
    config.validate()?;
    let method_ids: Vec<MethodId> = methods.iter().map(|m| m.id()).collect();
    let dataset_ids: Vec<DatasetId> = datasets.iter().map(|(d, _)| d.clone()).collect();
    let known: HashSet<&MethodId> = method_ids.iter().collect();
    if let Some(m) = config.runtime_subsets.keys().find(|m| !known.contains(m)) {
        return Err(EngineError::Config(format!(
            "runtime subset for unknown method `{m}`"
        )));
    }

    let mut selected: Vec<Option<HashSet<usize>>> = vec![None; methods.len()];
    let mut manifest = BTreeMap::new();
    for (mi, m) in method_ids.iter().enumerate() {
        if let Some(s) = config.runtime_subsets.get(m) {
            let chosen = select_runtime_subset(&dataset_ids, s.fraction, s.selection_seed)?;
            let set: HashSet<&DatasetId> = chosen.iter().collect();
            selected[mi] = Some(
                dataset_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| set.contains(d))
                    .map(|(i, _)| i)
                    .collect(),
            );
            manifest.insert(m.clone(), chosen);
        }
    }

    let nd = datasets.len();
    let cells = par_map_indexed(methods.len() * nd, config.workers, |i| {
        let (mi, di) = (i / nd, i % nd);
        let outcome = match &selected[mi] {
            Some(s) if !s.contains(&di) => {
                RunOutcome::failure(Failure::runtime(EXCLUDED_BY_DESIGN), Duration::ZERO)
            }
            _ => execute_cell(
                methods[mi],
                &datasets[di].1,
                cell_seed(config.master_seed, mi as u64, di as u64),
                config.budget,
            ),
        };
        if let Some(sink) = sink {
            sink.record(&method_ids[mi], &dataset_ids[di], &outcome);
        }
        outcome
    });

    let entries = cells.into_iter().enumerate().map(|(i, c)| {
        (
            method_ids[i / nd].clone(),
            dataset_ids[i % nd].clone(),
            c,
        )
    });
    let mut table = build_table(method_ids.clone(), dataset_ids.clone(), entries)?;
    table.runtime_subsets = manifest;
    Ok(table)
}
