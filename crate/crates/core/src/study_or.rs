//! Odds-ratio estimation study with sampling zeros.
//!
//! Binary exposure `X` and outcome `Y` are simulated for `n_obs` subjects and
//! tallied into a 2×2 table `n_ij` (`X = i`, `Y = j`). Tables with a zero
//! cell break cross-product estimators. Five estimators are compared by bias
//! on the log scale, once with failing repetitions discarded (per method, or
//! jointly for all methods) and once with fallback pipelines.
//!
//! Estimator definitions:
//!
//! * `Manual`: `n11·n00 / (n10·n01)`; any zero cell gives 0, ∞ or 0/0 and is
//!   a failure.
//! * `Woolf`: the same ratio after adding 0.5 to all four cells; always
//!   defined.
//! * `Haldane`: `Manual` applied to the 0.5-corrected table. Numerically
//!   identical to `Woolf`; it exists as a separate fallback stage.
//! * `Small`: `n11·n00 / ((n10 + 1)(n01 + 1))`; fails when `n11·n00 = 0`
//!   because the estimate 0 has no logarithm.
//! * `Fisher`: conditional MLE, the `ψ` with `E_ψ[N11 | margins] = n11` under
//!   Fisher's noncentral hypergeometric distribution.
//! * `Midp`: median-unbiased `ψ` with `P_ψ(N11 > n11) + ½P_ψ(N11 = n11) = ½`.
//!
//! `Fisher` and `Midp` fail when `n11` lies on the boundary of its
//! conditional support, which is the case exactly for tables with a zero
//! cell. Both solve their defining equation by bisection on `ln ψ` over
//! `[-10, 10]`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{
    aggregate_discard_all, aggregate_discard_single, aggregate_unconditional, failure_proportion,
    format_value, rank_methods, AggregateValue, Direction, MeasureSpec,
};
use crate::engine::{
    cell_seed, dataset_seed, par_map_indexed, rng_from_seed, run_grid, CellContext, EngineError,
    Method, MethodError, RunConfig,
};
use crate::pipeline::{expand_pipelines, run_pipeline, Pipeline, PipelineError};
use crate::report::{emit_rank_divergence, RankDivergence, ReproStamp};
use crate::table::{mid, DatasetId, MethodId, ResultTable, RunOutcome, TableError};

#[derive(Debug, Error)]
pub enum OrStudyError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Aggregate(#[from] crate::aggregate::AggregateError),
    #[error(transparent)]
    Report(#[from] crate::report::ReportError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Counts of an exposure×outcome table; `n_ij` has `X = i`, `Y = j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub n11: u32,
    pub n10: u32,
    pub n01: u32,
    pub n00: u32,
}

impl ContingencyTable2x2 {
    pub fn new(n11: u32, n10: u32, n01: u32, n00: u32) -> Self {
        Self { n11, n10, n01, n00 }
    }

    pub fn total(&self) -> u32 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    /// Relabels the outcome (swaps `Y = 0` and `Y = 1`); inverts the OR.
    pub fn swap_outcome(&self) -> Self {
        Self::new(self.n10, self.n11, self.n00, self.n01)
    }
}

impl fmt::Display for ContingencyTable2x2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n11, self.n10, self.n01, self.n00)
    }
}

/// A 2×2 table with real-valued cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedTable {
    pub n11: f64,
    pub n10: f64,
    pub n01: f64,
    pub n00: f64,
}

impl From<ContingencyTable2x2> for CorrectedTable {
    fn from(t: ContingencyTable2x2) -> Self {
        Self {
            n11: t.n11 as f64,
            n10: t.n10 as f64,
            n01: t.n01 as f64,
            n00: t.n00 as f64,
        }
    }
}

impl CorrectedTable {
    /// Adds 0.5 to every cell, zero or not.
    pub fn haldane(self) -> Self {
        Self {
            n11: self.n11 + 0.5,
            n10: self.n10 + 0.5,
            n01: self.n01 + 0.5,
            n00: self.n00 + 0.5,
        }
    }

    pub fn cross_product_ratio(&self) -> f64 {
        (self.n11 * self.n00) / (self.n10 * self.n01)
    }
}

pub fn has_sampling_zero(t: &ContingencyTable2x2) -> bool {
    t.n11 == 0 || t.n10 == 0 || t.n01 == 0 || t.n00 == 0
}

/// Haldane-Anscombe correction: +0.5 on all four cells.
pub fn haldane_correct(t: &ContingencyTable2x2) -> CorrectedTable {
    CorrectedTable::from(*t).haldane()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrScenario {
    pub n_obs: u32,
    pub true_or: f64,
    pub p_x: f64,
    /// Baseline outcome probability `P(Y = 1 | X = 0)`.
    pub p0: f64,
    pub n_rep: usize,
}

impl OrScenario {
    pub fn validate(&self) -> Result<(), OrStudyError> {
        let open01 = |p: f64| p > 0.0 && p < 1.0;
        if self.n_obs == 0 {
            return Err(OrStudyError::Config("n_obs must be positive".into()));
        }
        if !(self.true_or.is_finite() && self.true_or > 0.0) {
            return Err(OrStudyError::Config(format!("true OR {} must be finite and > 0", self.true_or)));
        }
        if !open01(self.p_x) || !open01(self.p0) {
            return Err(OrStudyError::Config(format!(
                "p_x = {} and p0 = {} must lie in (0, 1)",
                self.p_x, self.p0
            )));
        }
        if self.n_rep == 0 {
            return Err(OrStudyError::Config("n_rep must be positive".into()));
        }
        Ok(())
    }

    /// `P(Y = 1 | X = 1)` implied by `p0` and the true OR.
    pub fn p1(&self) -> f64 {
        let odds = self.true_or * self.p0 / (1.0 - self.p0);
        odds / (1.0 + odds)
    }
}

/// Draws `n_obs` independent subjects and tallies them.
pub fn simulate_2x2<R: Rng + ?Sized>(scenario: &OrScenario, rng: &mut R) -> ContingencyTable2x2 {
    let p1 = scenario.p1();
    let mut t = ContingencyTable2x2::new(0, 0, 0, 0);
    for _ in 0..scenario.n_obs {
        let x = rng.random::<f64>() < scenario.p_x;
        let p = if x { p1 } else { scenario.p0 };
        let y = rng.random::<f64>() < p;
        match (x, y) {
            (true, true) => t.n11 += 1,
            (true, false) => t.n10 += 1,
            (false, true) => t.n01 += 1,
            (false, false) => t.n00 += 1,
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Noncentral hypergeometric machinery
// ---------------------------------------------------------------------------

const LN_FACT_CACHE: usize = 2048;

fn ln_factorial(n: u32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut v = Vec::with_capacity(LN_FACT_CACHE);
        let mut acc = 0.0f64;
        v.push(0.0);
        for k in 1..LN_FACT_CACHE {
            acc += (k as f64).ln();
            v.push(acc);
        }
        v
    });
    match table.get(n as usize) {
        Some(&v) => v,
        None => crate::study_ci::ln_gamma(n as f64 + 1.0),
    }
}

fn ln_choose(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Conditional distribution of `N11` given both margins of a 2×2 table.
#[derive(Debug, Clone)]
pub struct ConditionalSupport {
    pub lo: u32,
    pub hi: u32,
    /// `ln C(r1, x) + ln C(n - r1, c1 - x)` for `x = lo..=hi`.
    log_base: Vec<f64>,
}

impl ConditionalSupport {
    pub fn new(t: &ContingencyTable2x2) -> Self {
        let n = t.total();
        let r1 = t.n11 + t.n10;
        let c1 = t.n11 + t.n01;
        let lo = (r1 + c1).saturating_sub(n);
        let hi = r1.min(c1);
        let log_base = (lo..=hi)
            .map(|x| ln_choose(r1, x) + ln_choose(n - r1, c1 - x))
            .collect();
        Self { lo, hi, log_base }
    }

    /// Probabilities over `lo..=hi` at `ln ψ = log_psi`, normalized against
    /// the running maximum in log space.
    pub fn pmf(&self, log_psi: f64) -> Vec<f64> {
        let mut w: Vec<f64> = self
            .log_base
            .iter()
            .enumerate()
            .map(|(i, b)| b + (self.lo + i as u32) as f64 * log_psi)
            .collect();
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in &mut w {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in &mut w {
            *v /= total;
        }
        w
    }

    pub fn mean(&self, log_psi: f64) -> f64 {
        self.pmf(log_psi)
            .iter()
            .enumerate()
            .map(|(i, p)| (self.lo + i as u32) as f64 * p)
            .sum()
    }

    /// `P(N11 > x) + ½ P(N11 = x)`.
    pub fn mid_upper_tail(&self, x: u32, log_psi: f64) -> f64 {
        let p = self.pmf(log_psi);
        let k = (x - self.lo) as usize;
        p[k + 1..].iter().sum::<f64>() + 0.5 * p[k]
    }

    fn is_boundary(&self, x: u32) -> bool {
        x <= self.lo || x >= self.hi
    }
}

pub const LOG_PSI_RANGE: f64 = 10.0;
pub const ROOT_TOLERANCE: f64 = 1e-8;
pub const ROOT_MAX_ITER: usize = 200;

/// Bisection for an increasing `f` on `[-10, 10]`; stops once `|f| < 1e-8`.
fn bisect_log_psi<F: Fn(f64) -> f64>(f: F) -> Result<f64, MethodError> {
    let (mut a, mut b) = (-LOG_PSI_RANGE, LOG_PSI_RANGE);
    let (fa, fb) = (f(a), f(b));
    if fa.abs() < ROOT_TOLERANCE {
        return Ok(a);
    }
    if fb.abs() < ROOT_TOLERANCE {
        return Ok(b);
    }
    if fa > 0.0 || fb < 0.0 {
        return Err(MethodError::Calculation(format!(
            "root not bracketed in ln(psi) in [-{LOG_PSI_RANGE}, {LOG_PSI_RANGE}]"
        )));
    }
    for _ in 0..ROOT_MAX_ITER {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm.abs() < ROOT_TOLERANCE {
            return Ok(m);
        }
        if fm < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Err(MethodError::Calculation("root bracketing exhausted".into()))
}

fn boundary_failure(t: &ContingencyTable2x2, s: &ConditionalSupport) -> MethodError {
    MethodError::Calculation(format!(
        "sampling zero in {t}: n11 = {} on the boundary of its conditional support [{}, {}]",
        t.n11, s.lo, s.hi
    ))
}

/// Residual of the conditional-MLE equation at `psi`.
pub fn fisher_residual(t: &ContingencyTable2x2, psi: f64) -> f64 {
    ConditionalSupport::new(t).mean(psi.ln()) - t.n11 as f64
}

/// Residual of the mid-p median-unbiased equation at `psi`.
pub fn midp_residual(t: &ContingencyTable2x2, psi: f64) -> f64 {
    ConditionalSupport::new(t).mid_upper_tail(t.n11, psi.ln()) - 0.5
}

fn conditional_mle(t: &ContingencyTable2x2) -> Result<f64, MethodError> {
    let s = ConditionalSupport::new(t);
    if s.is_boundary(t.n11) {
        return Err(boundary_failure(t, &s));
    }
    let target = t.n11 as f64;
    bisect_log_psi(|lp| s.mean(lp) - target).map(f64::exp)
}

fn median_unbiased(t: &ContingencyTable2x2) -> Result<f64, MethodError> {
    let s = ConditionalSupport::new(t);
    if s.is_boundary(t.n11) {
        return Err(boundary_failure(t, &s));
    }
    bisect_log_psi(|lp| s.mid_upper_tail(t.n11, lp) - 0.5).map(f64::exp)
}

fn cross_product(c: &CorrectedTable, what: &str) -> Result<f64, MethodError> {
    let v = c.cross_product_ratio();
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(MethodError::Calculation(format!(
            "{what}: non-meaningful estimate {v} from sampling zero in ({},{},{},{})",
            c.n11, c.n10, c.n01, c.n00
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OrEstimator {
    Manual,
    Fisher,
    Midp,
    Small,
    Woolf,
    Haldane,
}

impl OrEstimator {
    /// The five estimators under comparison.
    pub const COMPARED: [OrEstimator; 5] = [
        OrEstimator::Manual,
        OrEstimator::Fisher,
        OrEstimator::Midp,
        OrEstimator::Small,
        OrEstimator::Woolf,
    ];

    pub const ALL: [OrEstimator; 6] = [
        OrEstimator::Manual,
        OrEstimator::Fisher,
        OrEstimator::Midp,
        OrEstimator::Small,
        OrEstimator::Woolf,
        OrEstimator::Haldane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrEstimator::Manual => "Manual",
            OrEstimator::Fisher => "Fisher",
            OrEstimator::Midp => "Midp",
            OrEstimator::Small => "Small",
            OrEstimator::Woolf => "Woolf",
            OrEstimator::Haldane => "Haldane",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name().eq_ignore_ascii_case(s))
    }

    pub fn id(self) -> MethodId {
        mid(self.name())
    }

    pub fn estimate(self, t: &ContingencyTable2x2) -> Result<f64, MethodError> {
        match self {
            OrEstimator::Manual => cross_product(&CorrectedTable::from(*t), "Manual"),
            OrEstimator::Woolf => cross_product(&haldane_correct(t), "Woolf"),
            OrEstimator::Haldane => cross_product(&haldane_correct(t), "Haldane"),
            OrEstimator::Small => {
                let num = t.n11 as f64 * t.n00 as f64;
                if num == 0.0 {
                    return Err(MethodError::Calculation(format!(
                        "Small: zero numerator n11*n00 in {t}, estimate 0 has no logarithm"
                    )));
                }
                Ok(num / ((t.n10 as f64 + 1.0) * (t.n01 as f64 + 1.0)))
            }
            OrEstimator::Fisher => conditional_mle(t),
            OrEstimator::Midp => median_unbiased(t),
        }
    }
}

impl fmt::Display for OrEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Method<ContingencyTable2x2> for OrEstimator {
    fn id(&self) -> MethodId {
        OrEstimator::id(*self)
    }

    fn run(&self, data: &ContingencyTable2x2, _ctx: &CellContext) -> Result<f64, MethodError> {
        self.estimate(data)
    }
}

/// Estimate with timing, as a result cell.
pub fn estimate_or(estimator: OrEstimator, t: &ContingencyTable2x2) -> RunOutcome {
    let start = Instant::now();
    let r = estimator.estimate(t);
    let elapsed = start.elapsed();
    match r {
        Ok(v) => RunOutcome::success(v, elapsed),
        Err(e) => RunOutcome::failure(e.into(), elapsed),
    }
}

// ---------------------------------------------------------------------------
// Study driver
// ---------------------------------------------------------------------------

pub const DEFAULT_P0: f64 = 0.5;
pub const DEFAULT_REPS: usize = 100_000;
pub const QUICK_REPS: usize = 10_000;

/// The eight scenarios: true OR in {2, 3, 4, 5} × p_x in {0.25, 0.5}, n_obs = 50.
pub fn default_scenarios(p0: f64, n_rep: usize) -> Vec<OrScenario> {
    let mut out = Vec::new();
    for p_x in [0.25, 0.5] {
        for true_or in [2.0, 3.0, 4.0, 5.0] {
            out.push(OrScenario {
                n_obs: 50,
                true_or,
                p_x,
                p0,
                n_rep,
            });
        }
    }
    out
}

/// Manual → [Haldane]; Fisher, Midp → [Haldane, Small, Woolf].
pub fn default_fallback_map() -> BTreeMap<MethodId, Vec<MethodId>> {
    let three = vec![mid("Haldane"), mid("Small"), mid("Woolf")];
    let mut fb = BTreeMap::new();
    fb.insert(mid("Manual"), vec![mid("Haldane")]);
    fb.insert(mid("Fisher"), three.clone());
    fb.insert(mid("Midp"), three);
    fb
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrStudyConfig {
    pub scenarios: Vec<OrScenario>,
    pub fallback_map: BTreeMap<MethodId, Vec<MethodId>>,
    pub max_fallbacks: usize,
    pub seed: u64,
    pub workers: usize,
    /// Rank by signed log-bias instead of its absolute value.
    pub signed_ranks: bool,
    /// Keep the per-scenario result tables in the output.
    pub keep_tables: bool,
}

impl Default for OrStudyConfig {
    fn default() -> Self {
        Self {
            scenarios: default_scenarios(DEFAULT_P0, DEFAULT_REPS),
            fallback_map: default_fallback_map(),
            max_fallbacks: 1,
            seed: 2024,
            workers: 1,
            signed_ranks: false,
            keep_tables: false,
        }
    }
}

impl OrStudyConfig {
    pub fn quick() -> Self {
        Self {
            scenarios: default_scenarios(DEFAULT_P0, QUICK_REPS),
            ..Self::default()
        }
    }

    pub fn measure(&self) -> MeasureSpec {
        let direction = if self.signed_ranks {
            Direction::LowerBetter
        } else {
            Direction::LowerAbsBetter
        };
        MeasureSpec::new("log_bias", direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub index: usize,
    pub scenario: OrScenario,
    pub zero_count: usize,
    pub zero_proportion: f64,
    /// Monte Carlo standard error of `zero_proportion`.
    pub zero_se: f64,
    pub bias_single: BTreeMap<MethodId, AggregateValue>,
    pub bias_all: BTreeMap<MethodId, AggregateValue>,
    pub bias_pipelines: BTreeMap<MethodId, AggregateValue>,
    pub failure_proportions: BTreeMap<MethodId, f64>,
    pub pipeline_failure_proportions: BTreeMap<MethodId, f64>,
    pub ranks_single: BTreeMap<MethodId, usize>,
    pub ranks_all: BTreeMap<MethodId, usize>,
    pub ranks_pipelines: BTreeMap<MethodId, usize>,
    pub divergence: RankDivergence,
    /// SHA-256 over the timing-free JSON of the raw and pipeline tables.
    pub table_digest: String,
    #[serde(skip)]
    pub tables: Option<(ResultTable, ResultTable)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrStudyOutput {
    pub pipelines: Vec<String>,
    pub measure: MeasureSpec,
    pub scenarios: Vec<ScenarioResult>,
    pub stamp: ReproStamp,
}

impl OrStudyOutput {
    /// Scenarios where discard-single and discard-all rankings differ.
    pub fn divergent_scenarios(&self) -> Vec<usize> {
        self.scenarios
            .iter()
            .filter(|s| s.divergence.max_shift > 0)
            .map(|s| s.index)
            .collect()
    }
}

fn rep_ids(n: usize) -> Vec<DatasetId> {
    (1..=n)
        .map(|i| DatasetId::new(i.to_string()).expect("non-empty"))
        .collect()
}

/// Builds the pipeline table by replaying stored stage outcomes.
pub fn pipeline_table(raw: &ResultTable, pipelines: &[Pipeline]) -> Result<ResultTable, TableError> {
    let rows = pipelines
        .iter()
        .map(|p| {
            let stages = p
                .stages()
                .iter()
                .map(|m| raw.method_index(m))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(raw
                .datasets()
                .iter()
                .enumerate()
                .map(|(di, d)| {
                    run_pipeline(
                        p,
                        |m, _| {
                            let si = p.stages().iter().position(|s| s == m).expect("stage");
                            raw.cell_at(stages[si], di).clone()
                        },
                        d,
                    )
                    .outcome
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<RunOutcome>>, TableError>>()?;
    ResultTable::from_rows(
        pipelines.iter().map(Pipeline::id).collect(),
        raw.datasets().to_vec(),
        rows,
    )
}

fn scenario_seed(master: u64, index: usize) -> u64 {
    cell_seed(master, u64::MAX - 1, index as u64)
}

fn simulate_scenario(scenario: &OrScenario, seed: u64, workers: usize) -> Vec<ContingencyTable2x2> {
    par_map_indexed(scenario.n_rep, workers, |r| {
        simulate_2x2(scenario, &mut rng_from_seed(dataset_seed(seed, r as u64)))
    })
}

/// Share of simulated tables with at least one zero cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroSummary {
    pub index: usize,
    pub scenario: OrScenario,
    pub zero_count: usize,
    pub zero_proportion: f64,
    /// Monte Carlo standard error of `zero_proportion`.
    pub zero_se: f64,
}

impl ZeroSummary {
    fn count(index: usize, scenario: &OrScenario, tables: &[ContingencyTable2x2]) -> Self {
        let zero_count = tables.iter().filter(|t| has_sampling_zero(t)).count();
        let n = tables.len() as f64;
        let p = zero_count as f64 / n;
        Self {
            index,
            scenario: *scenario,
            zero_count,
            zero_proportion: p,
            zero_se: (p * (1.0 - p) / n).sqrt(),
        }
    }
}

/// Sampling-zero proportions only, from the same tables `run_or_study`
/// would simulate with this configuration.
pub fn sampling_zero_summary(config: &OrStudyConfig) -> Result<Vec<ZeroSummary>, OrStudyError> {
    if config.workers == 0 {
        return Err(OrStudyError::Config("workers must be at least 1".into()));
    }
    config
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.validate()?;
            let tables = simulate_scenario(s, scenario_seed(config.seed, i), config.workers);
            Ok(ZeroSummary::count(i, s, &tables))
        })
        .collect()
}

fn run_scenario(
    index: usize,
    scenario: &OrScenario,
    config: &OrStudyConfig,
    pipelines: &[Pipeline],
    measure: &MeasureSpec,
) -> Result<ScenarioResult, OrStudyError> {
    let scenario_seed = scenario_seed(config.seed, index);
    let tables = simulate_scenario(scenario, scenario_seed, config.workers);
    let zeros = ZeroSummary::count(index, scenario, &tables);
    let (zero_count, zero_proportion, zero_se) = (zeros.zero_count, zeros.zero_proportion, zeros.zero_se);

    let datasets: Vec<(DatasetId, ContingencyTable2x2)> =
        rep_ids(scenario.n_rep).into_iter().zip(tables).collect();
    let methods: Vec<&dyn Method<ContingencyTable2x2>> =
        OrEstimator::ALL.iter().map(|e| e as &dyn Method<_>).collect();
    let run_config = RunConfig {
        master_seed: scenario_seed,
        workers: config.workers,
        ..RunConfig::default()
    };
    let raw = run_grid(&methods, &datasets, &run_config)?;
    drop(datasets);
    let pipe = pipeline_table(&raw, pipelines)?;

    let truth_ln = scenario.true_or.ln();
    let stat = |xs: &[f64]| xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64 - truth_ln;
    let compared: Vec<MethodId> = OrEstimator::COMPARED.iter().map(|e| e.id()).collect();

    let mut bias_single = BTreeMap::new();
    let mut failure_proportions = BTreeMap::new();
    for m in &compared {
        bias_single.insert(m.clone(), aggregate_discard_single(&raw, m, stat)?);
        failure_proportions.insert(m.clone(), failure_proportion(&raw, m)?.overall);
    }
    let bias_all = aggregate_discard_all(&raw, &compared, stat)?;
    let mut bias_pipelines = BTreeMap::new();
    let mut pipeline_failure_proportions = BTreeMap::new();
    for m in pipe.methods() {
        bias_pipelines.insert(m.clone(), aggregate_unconditional(&pipe, m, stat)?);
        pipeline_failure_proportions.insert(m.clone(), failure_proportion(&pipe, m)?.overall);
    }

    let defined = |vals: &BTreeMap<MethodId, AggregateValue>| -> BTreeMap<MethodId, AggregateValue> {
        vals.iter()
            .filter(|(_, v)| v.defined())
            .map(|(m, v)| (m.clone(), v.clone()))
            .collect()
    };
    let ranks_single = rank_methods(&defined(&bias_single), measure)?;
    let ranks_all = rank_methods(&defined(&bias_all), measure)?;
    let ranks_pipelines = rank_methods(&defined(&bias_pipelines), measure)?;
    let divergence = if ranks_single.keys().eq(ranks_all.keys()) {
        emit_rank_divergence(&ranks_single, &ranks_all, "Single", "All")?
    } else {
        // an estimator undefined in one analysis: compare the common subset
        let common: Vec<MethodId> = ranks_single
            .keys()
            .filter(|m| ranks_all.contains_key(*m))
            .cloned()
            .collect();
        let pick = |r: &BTreeMap<MethodId, usize>| -> BTreeMap<MethodId, usize> {
            common.iter().map(|m| (m.clone(), r[m])).collect()
        };
        emit_rank_divergence(&pick(&ranks_single), &pick(&ranks_all), "Single", "All")?
    };

    let table_digest = crate::report::sha256_hex(
        [
            raw.without_timing().to_json_compact(),
            pipe.without_timing().to_json_compact(),
        ]
        .concat()
        .as_bytes(),
    );

    Ok(ScenarioResult {
        index,
        scenario: *scenario,
        zero_count,
        zero_proportion,
        zero_se,
        bias_single,
        bias_all,
        bias_pipelines,
        failure_proportions,
        pipeline_failure_proportions,
        ranks_single,
        ranks_all,
        ranks_pipelines,
        divergence,
        table_digest,
        tables: config.keep_tables.then_some((raw, pipe)),
    })
}

pub fn run_or_study(config: &OrStudyConfig) -> Result<OrStudyOutput, OrStudyError> {
    if config.scenarios.is_empty() {
        return Err(OrStudyError::Config("no scenarios".into()));
    }
    if config.workers == 0 {
        return Err(OrStudyError::Config("workers must be at least 1".into()));
    }
    for s in &config.scenarios {
        s.validate()?;
    }
    let known: Vec<MethodId> = OrEstimator::ALL.iter().map(|e| e.id()).collect();
    for (base, fbs) in &config.fallback_map {
        if let Some(bad) = std::iter::once(base).chain(fbs).find(|m| !known.contains(m)) {
            return Err(OrStudyError::Config(format!("unknown estimator `{bad}` in fallback map")));
        }
    }
    let bases: Vec<MethodId> = OrEstimator::COMPARED.iter().map(|e| e.id()).collect();
    let pipelines = expand_pipelines(&bases, &config.fallback_map, config.max_fallbacks, false)?;
    let measure = config.measure();
    let scenarios = config
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| run_scenario(i, s, config, &pipelines, &measure))
        .collect::<Result<Vec<_>, _>>()?;
    let stamp = ReproStamp::new(config.seed, &serde_json::to_string(config).expect("config serializes"));
    Ok(OrStudyOutput {
        pipelines: pipelines.iter().map(Pipeline::label).collect(),
        measure,
        scenarios,
        stamp,
    })
}

/// Writes CSV tables, the JSON manifest and the two rank-chart panels.
pub fn write_or_outputs(out: &OrStudyOutput, dir: &Path) -> Result<(), OrStudyError> {
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("zero_proportions.csv"))?;
    w.write_record(["scenario", "n_obs", "true_or", "p_x", "p0", "n_rep", "zero_count", "zero_proportion", "monte_carlo_se"])?;
    for s in &out.scenarios {
        let sc = &s.scenario;
        w.write_record([
            (s.index + 1).to_string(),
            sc.n_obs.to_string(),
            sc.true_or.to_string(),
            sc.p_x.to_string(),
            sc.p0.to_string(),
            sc.n_rep.to_string(),
            s.zero_count.to_string(),
            s.zero_proportion.to_string(),
            s.zero_se.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("bias.csv"))?;
    w.write_record(["scenario", "method", "basis", "log_bias_or_UNDEFINED", "n_used", "failure_proportion"])?;
    for s in &out.scenarios {
        let groups = [
            (&s.bias_single, &s.failure_proportions),
            (&s.bias_all, &s.failure_proportions),
            (&s.bias_pipelines, &s.pipeline_failure_proportions),
        ];
        for (vals, fps) in groups {
            for (m, v) in vals {
                w.write_record([
                    (s.index + 1).to_string(),
                    m.to_string(),
                    v.basis.label(),
                    format_value(v.value),
                    v.n_used.to_string(),
                    fps[m].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("ranks.csv"))?;
    w.write_record(["scenario", "analysis", "method", "rank"])?;
    for s in &out.scenarios {
        for (analysis, ranks) in [("Single", &s.ranks_single), ("All", &s.ranks_all), ("Fallback", &s.ranks_pipelines)] {
            for (m, r) in ranks {
                w.write_record([(s.index + 1).to_string(), analysis.to_string(), m.to_string(), r.to_string()])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("rank_divergence.csv"))?;
    w.write_record(["scenario", "method", "rank_single", "rank_all", "shift", "abs_shift", "flips_best", "flips_worst"])?;
    for s in &out.scenarios {
        for r in &s.divergence.rows {
            w.write_record([
                (s.index + 1).to_string(),
                r.method.to_string(),
                r.rank_a.to_string(),
                r.rank_b.to_string(),
                r.shift.to_string(),
                r.abs_shift.to_string(),
                r.flips_best.to_string(),
                r.flips_worst.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let manifest = serde_json::to_string_pretty(out).expect("output serializes");
    std::fs::File::create(dir.join("manifest.json"))?.write_all(manifest.as_bytes())?;

    let (a, b) = crate::report::render_or_rank_panels(out);
    std::fs::write(dir.join("ranks_discard.svg"), a)?;
    std::fs::write(dir.join("ranks_fallback.svg"), b)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(a: u32, b: u32, c: u32, d: u32) -> ContingencyTable2x2 {
        ContingencyTable2x2::new(a, b, c, d)
    }

    #[test]
    fn sampling_zero_detection() {
        assert!(!has_sampling_zero(&t(10, 10, 10, 10)));
        assert!(has_sampling_zero(&t(0, 10, 10, 30)));
        assert!(has_sampling_zero(&t(0, 0, 0, 50)));
    }

    #[test]
    fn haldane_adds_half_everywhere() {
        let c = haldane_correct(&t(0, 10, 10, 30));
        assert_eq!((c.n11, c.n10, c.n01, c.n00), (0.5, 10.5, 10.5, 30.5));
        let c = haldane_correct(&t(1, 1, 1, 1));
        assert_eq!((c.n11, c.n10, c.n01, c.n00), (1.5, 1.5, 1.5, 1.5));
        let twice = c.haldane();
        assert_ne!(twice, c);
        assert_eq!(twice.n11, 2.0);
    }

    #[test]
    fn closed_form_estimators() {
        assert_eq!(OrEstimator::Manual.estimate(&t(20, 5, 5, 20)).unwrap(), 16.0);
        let sym = t(10, 10, 10, 10);
        for e in [OrEstimator::Manual, OrEstimator::Woolf, OrEstimator::Haldane] {
            assert_eq!(e.estimate(&sym).unwrap(), 1.0);
        }
        assert_eq!(OrEstimator::Small.estimate(&sym).unwrap(), 100.0 / 121.0);
        let w = OrEstimator::Woolf.estimate(&t(0, 10, 10, 30)).unwrap();
        assert!((w - 15.25 / 110.25).abs() < 1e-15);
        assert!((w - 0.138322).abs() < 1e-6);
    }

    #[test]
    fn conditional_estimators_at_the_null() {
        let sym = t(10, 10, 10, 10);
        for e in [OrEstimator::Fisher, OrEstimator::Midp] {
            let v = e.estimate(&sym).unwrap();
            assert!((v - 1.0).abs() < 1e-7, "{e}: {v}");
        }
    }

    #[test]
    fn failures_on_sampling_zeros() {
        let z = t(0, 10, 10, 30);
        for e in [OrEstimator::Manual, OrEstimator::Fisher, OrEstimator::Midp, OrEstimator::Small] {
            let err = e.estimate(&z).unwrap_err();
            assert!(matches!(err, MethodError::Calculation(_)), "{e}");
        }
        let msg = OrEstimator::Midp.estimate(&z).unwrap_err().to_string();
        assert!(msg.contains("sampling zero"));
        // Small copes with zeros off the diagonal
        assert!(OrEstimator::Small.estimate(&t(5, 0, 0, 5)).is_ok());
        assert!(OrEstimator::Manual.estimate(&t(5, 0, 0, 5)).is_err());
        for zt in [t(0, 5, 5, 5), t(5, 0, 5, 5), t(5, 5, 0, 5), t(5, 5, 5, 0)] {
            assert!(OrEstimator::Fisher.estimate(&zt).is_err());
            assert!(OrEstimator::Woolf.estimate(&zt).is_ok());
        }
        let out = estimate_or(OrEstimator::Manual, &z);
        assert_eq!(out.failure_ref().unwrap().kind, crate::table::FailureKind::Calculation);
    }

    #[test]
    fn residuals_vanish_at_estimates() {
        let tab = t(7, 3, 2, 8);
        let f = OrEstimator::Fisher.estimate(&tab).unwrap();
        assert!(fisher_residual(&tab, f).abs() < 1e-8);
        let m = OrEstimator::Midp.estimate(&tab).unwrap();
        assert!(midp_residual(&tab, m).abs() < 1e-8);
        // conditional MLE shrinks toward 1 relative to the sample OR here
        let manual = OrEstimator::Manual.estimate(&tab).unwrap();
        assert!(f < manual && m < manual);
    }

    #[test]
    fn simulation_degenerate_cases() {
        let mut rng = rng_from_seed(1);
        let s = OrScenario { n_obs: 50, true_or: 1.0, p_x: 0.0, p0: 0.4, n_rep: 1 };
        for _ in 0..100 {
            let tab = simulate_2x2(&s, &mut rng);
            assert_eq!((tab.n11, tab.n10), (0, 0));
            assert_eq!(tab.total(), 50);
        }
        let s = OrScenario { n_obs: 50, true_or: 1.0, p_x: 0.3, p0: 0.37, n_rep: 1 };
        assert_eq!(s.p1(), 0.37);
    }

    #[test]
    fn simulation_cell_means() {
        let s = OrScenario { n_obs: 50, true_or: 1.0, p_x: 0.5, p0: 0.5, n_rep: 1 };
        let mut rng = rng_from_seed(99);
        let draws = 10_000;
        let mut sums = [0f64; 4];
        for _ in 0..draws {
            let tab = simulate_2x2(&s, &mut rng);
            for (acc, v) in sums.iter_mut().zip([tab.n11, tab.n10, tab.n01, tab.n00]) {
                *acc += v as f64;
            }
        }
        // each cell ~ Binomial(50, 1/4)
        let se = (50.0 * 0.25 * 0.75 / draws as f64).sqrt();
        for s in sums {
            assert!((s / draws as f64 - 12.5).abs() < 3.0 * se, "{s}");
        }
    }

    #[test]
    fn scenario_validation() {
        let mut s = default_scenarios(0.5, 10)[0];
        s.p_x = 1.0;
        assert!(s.validate().is_err());
        let cfg = OrStudyConfig { scenarios: vec![], ..OrStudyConfig::default() };
        assert!(matches!(run_or_study(&cfg), Err(OrStudyError::Config(_))));
    }

    #[test]
    fn small_study_runs() {
        let cfg = OrStudyConfig {
            scenarios: default_scenarios(DEFAULT_P0, 400),
            workers: 2,
            keep_tables: true,
            ..OrStudyConfig::default()
        };
        let out = run_or_study(&cfg).unwrap();
        assert_eq!(out.pipelines.len(), 9);
        assert_eq!(out.scenarios.len(), 8);
        for s in &out.scenarios {
            let (raw, pipe) = s.tables.as_ref().unwrap();
            assert_eq!(raw.datasets().len(), 400);
            assert_eq!(pipe.methods().len(), 9);
            let n_all = s.bias_all.values().next().unwrap().n_used;
            assert!(s.bias_all.values().all(|v| v.n_used == n_all));
            assert!(s.bias_single.values().all(|v| v.n_used >= n_all && v.n_used <= 400));
            assert_eq!(n_all, 400 - s.zero_count);
        }
    }
}
