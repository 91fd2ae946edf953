//! Coverage of resampling-based confidence intervals for generalization AUC.
//!
//! Each iteration splits a synthetic population into a large test set (the
//! "true" AUC of the model fitted on the training part) and a small training
//! set on which the AUC is estimated by repeated subsampling. Two t-intervals
//! are built from the `k` subsampling estimates:
//!
//! ```text
//! mean ± t_{(1+level)/2, k-1} · sqrt((1/k + c) · S²)
//! ```
//!
//! Method N uses `c = 0`; method C uses a positive correction `c`. When all
//! `k` estimates coincide, `S² = 0`: the legacy N implementation errors out
//! (mirroring a t-test refusing constant data) while the repaired semantics
//! return the zero-width interval `[mean, mean]`.
//!
//! The model is a depth-one Gini decision stump that refuses to split when
//! the best impurity decrease is below a threshold, producing a constant
//! predictor and AUC exactly 0.5.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{empirical_coverage, CoverageHandling, Verdict};
use crate::engine::{cell_seed, par_map_indexed, rng_from_seed};
use crate::report::ReproStamp;
use crate::table::Failure;

#[derive(Debug, Error, PartialEq)]
pub enum CiError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no fold with both classes after {0} retries")]
    DegenerateFolds(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t by bisection on the incomplete-beta CDF, to an
/// absolute tolerance of 1e-10 in `t`.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    assert!(df > 0.0, "degrees of freedom must be positive");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, df);
    }
    let mut hi = 1.0;
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Data, model, AUC
// ---------------------------------------------------------------------------

/// Synthetic population: standard-normal predictors, Bernoulli outcome with
/// success probability `sigmoid(beta · z₁)`. Predictors beyond the first
/// carry no signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiDgm {
    pub n_total: usize,
    pub features: usize,
    pub beta: f64,
}

impl Default for CiDgm {
    fn default() -> Self {
        Self {
            n_total: 500,
            features: 1,
            beta: DEFAULT_BETA,
        }
    }
}

/// Row-major labeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: usize,
    pub x: Vec<f64>,
    pub y: Vec<bool>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.features);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Dataset {
            features: self.features,
            x,
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.iter().any(|&v| v) && self.y.iter().any(|&v| !v)
    }

    pub fn prevalence(&self) -> f64 {
        self.y.iter().filter(|&&v| v).count() as f64 / self.len() as f64
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; u1 in (0, 1]
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn generate_classif_data<R: Rng + ?Sized>(dgm: &CiDgm, n: usize, rng: &mut R) -> Dataset {
    let features = dgm.features.max(1);
    let mut x = Vec::with_capacity(n * features);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        for _ in 0..features {
            x.push(standard_normal(rng));
        }
        let p = 1.0 / (1.0 + (-dgm.beta * x[start]).exp());
        y.push(rng.random::<f64>() < p);
    }
    Dataset { features, x, y }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StumpModel {
    /// No split: every row scores the training prevalence.
    Constant { score: f64 },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left_score: f64,
        right_score: f64,
        impurity_decrease: f64,
    },
}

impl StumpModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match *self {
            StumpModel::Constant { score } => score,
            StumpModel::Split {
                feature,
                threshold,
                left_score,
                right_score,
                ..
            } => {
                if row[feature] <= threshold {
                    left_score
                } else {
                    right_score
                }
            }
        }
    }

    pub fn predict_all(&self, data: &Dataset) -> Vec<f64> {
        (0..data.len()).map(|i| self.predict(data.row(i))).collect()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, StumpModel::Constant { .. })
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Exhaustive Gini split search over every feature and every midpoint
/// between consecutive distinct values. Ties keep the first candidate found.
pub fn fit_stump(train: &Dataset, min_impurity_decrease: f64) -> Result<StumpModel, CiError> {
    let n = train.len();
    if n == 0 {
        return Err(CiError::EmptyTrain);
    }
    let total_pos = train.y.iter().filter(|&&v| v).count();
    let constant = StumpModel::Constant {
        score: total_pos as f64 / n as f64,
    };
    let parent = gini(total_pos, n);
    if parent == 0.0 {
        return Ok(constant);
    }
    let mut best: Option<StumpModel> = None;
    let mut best_decrease = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..n).collect();
    for f in 0..train.features {
        let value = |i: usize| train.x[i * train.features + f];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
        let mut left_pos = 0;
        for k in 0..n - 1 {
            if train.y[order[k]] {
                left_pos += 1;
            }
            let (v, next) = (value(order[k]), value(order[k + 1]));
            if v == next {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            let right_pos = total_pos - left_pos;
            let child = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(right_pos, nr)) / n as f64;
            let decrease = parent - child;
            if decrease > best_decrease {
                best_decrease = decrease;
                best = Some(StumpModel::Split {
                    feature: f,
                    threshold: 0.5 * (v + next),
                    left_score: left_pos as f64 / nl as f64,
                    right_score: right_pos as f64 / nr as f64,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    match best {
        Some(model) if best_decrease > 0.0 && best_decrease >= min_impurity_decrease => Ok(model),
        _ => Ok(constant),
    }
}

/// Mann–Whitney AUC: share of positive/negative pairs ranked correctly,
/// ties counting one half. Computed from mid-ranks in `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, CiError> {
    if scores.len() != labels.len() {
        return Err(CiError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CiError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their average
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

// ---------------------------------------------------------------------------
// Intervals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSpec {
    /// Subsampling repetitions.
    pub k: usize,
    /// Training share of each subsampling split.
    pub split_ratio: f64,
    pub level: f64,
    /// Variance correction; 0 for the naive interval.
    pub c: f64,
}

impl CiSpec {
    pub fn naive() -> Self {
        Self {
            k: 15,
            split_ratio: 0.8,
            level: 0.95,
            c: 0.0,
        }
    }

    /// Correction `n_test / n_train` of the inner split.
    pub fn corrected() -> Self {
        let s = Self::naive();
        Self {
            c: 1.0 / s.split_ratio - 1.0,
            ..s
        }
    }

    pub fn validate(&self) -> Result<(), CiError> {
        if self.k < 2 {
            return Err(CiError::Config(format!("k = {} must be at least 2", self.k)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CiError::Config(format!("split ratio {} outside (0, 1)", self.split_ratio)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CiError::Config(format!("level {} outside (0, 1)", self.level)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(CiError::Config(format!("correction {} must be finite and >= 0", self.c)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub zero_width: bool,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            zero_width: lower == upper,
        }
    }

    /// Closed-interval containment.
    pub fn covers(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroVariance {
    /// Refuse to build an interval from constant data.
    Legacy,
    /// Return the zero-width interval.
    Repaired,
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and sample variance. Identical inputs give exactly that value and
/// exactly zero variance.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mean = compensated_sum(xs.iter().copied()) / n;
    let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, ss / (n - 1.0))
}

pub fn ci_interval(estimates: &[f64], spec: &CiSpec, semantics: ZeroVariance) -> Result<Interval, Failure> {
    if estimates.len() != spec.k || spec.k < 2 {
        return Err(Failure::calculation(format!(
            "expected {} estimates, got {}",
            spec.k,
            estimates.len()
        )));
    }
    let (m, s2) = mean_and_variance(estimates);
    if s2 == 0.0 && semantics == ZeroVariance::Legacy {
        return Err(Failure::calculation("zero variance: data are essentially constant"));
    }
    let k = spec.k as f64;
    let t = student_t_quantile((1.0 + spec.level) / 2.0, k - 1.0);
    let h = t * ((1.0 / k + spec.c) * s2).sqrt();
    Ok(Interval::new(m - h, m + h))
}

/// `k` AUC estimates from repeated random train/test splits of `d_train`.
/// A split whose test part lacks a class is redrawn, at most 100 times.
pub fn subsample_auc_estimates<R: Rng + ?Sized>(
    d_train: &Dataset,
    spec: &CiSpec,
    min_impurity_decrease: f64,
    rng: &mut R,
) -> Result<Vec<f64>, CiError> {
    const MAX_RETRIES: usize = 100;
    let n = d_train.len();
    let n_fit = ((spec.split_ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if n < 2 || n_fit >= n {
        return Err(CiError::DegenerateFolds(0));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(spec.k);
    for _ in 0..spec.k {
        let mut done = false;
        for _ in 0..=MAX_RETRIES {
            idx.shuffle(rng);
            let test = d_train.subset(&idx[n_fit..]);
            if !test.has_both_classes() {
                continue;
            }
            let fit = d_train.subset(&idx[..n_fit]);
            let model = fit_stump(&fit, min_impurity_decrease)?;
            out.push(auc(&model.predict_all(&test), &test.y)?);
            done = true;
            break;
        }
        if !done {
            return Err(CiError::DegenerateFolds(MAX_RETRIES));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Study driver
// ---------------------------------------------------------------------------

pub const DEFAULT_BETA: f64 = 0.3;
pub const DEFAULT_TAU: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiStudyConfig {
    pub dgm: CiDgm,
    /// Minimum Gini decrease for the stump to split.
    pub tau: f64,
    pub k: usize,
    pub split_ratio: f64,
    pub level: f64,
    /// Correction term of method C.
    pub c: f64,
    /// Share of each population used as the large test set.
    pub test_fraction: f64,
    pub n_iter: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for CiStudyConfig {
    fn default() -> Self {
        let c = CiSpec::corrected();
        Self {
            dgm: CiDgm::default(),
            tau: DEFAULT_TAU,
            k: c.k,
            split_ratio: c.split_ratio,
            level: c.level,
            c: c.c,
            test_fraction: 0.8,
            n_iter: 1000,
            seed: 2024,
            workers: 1,
        }
    }
}

impl CiStudyConfig {
    pub fn spec_n(&self) -> CiSpec {
        CiSpec {
            k: self.k,
            split_ratio: self.split_ratio,
            level: self.level,
            c: 0.0,
        }
    }

    pub fn spec_c(&self) -> CiSpec {
        CiSpec { c: self.c, ..self.spec_n() }
    }

    pub fn validate(&self) -> Result<(), CiError> {
        self.spec_c().validate()?;
        if self.dgm.n_total < 50 {
            return Err(CiError::Config(format!("n_total = {} must be at least 50", self.dgm.n_total)));
        }
        if !self.dgm.beta.is_finite() {
            return Err(CiError::Config("beta must be finite".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CiError::Config(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.n_iter == 0 || self.workers == 0 {
            return Err(CiError::Config("n_iter and workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiIterationRecord {
    pub index: usize,
    pub true_auc: f64,
    pub auc_estimates: Vec<f64>,
    /// Method N with legacy zero-variance semantics.
    pub interval_n: Result<Interval, Failure>,
    /// Method N with the zero-width repair.
    pub interval_n_repaired: Interval,
    pub interval_c: Interval,
    pub covers_n: Verdict,
    pub covers_n_repaired: bool,
    pub covers_c: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: String,
    pub discard_single: f64,
    pub discard_all: f64,
    pub count_as_noncover: f64,
    pub zero_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiStudyReport {
    pub n_iter: usize,
    pub c: f64,
    pub n_failures: usize,
    pub n_failure_proportion: f64,
    pub rows: Vec<CoverageRow>,
    pub records: Vec<CiIterationRecord>,
    pub stamp: ReproStamp,
}

impl CiStudyReport {
    pub fn row(&self, method: &str) -> &CoverageRow {
        self.rows.iter().find(|r| r.method == method).expect("method row")
    }
}

fn run_iteration(index: usize, cfg: &CiStudyConfig) -> Result<CiIterationRecord, CiError> {
    let mut rng = rng_from_seed(cell_seed(cfg.seed, 0, index as u64));
    let pop = generate_classif_data(&cfg.dgm, cfg.dgm.n_total, &mut rng);
    let n_test = (cfg.test_fraction * pop.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    let mut split = None;
    for _ in 0..100 {
        idx.shuffle(&mut rng);
        let test = pop.subset(&idx[..n_test]);
        if test.has_both_classes() {
            split = Some((test, pop.subset(&idx[n_test..])));
            break;
        }
    }
    let (d_test, d_train) = split.ok_or(CiError::DegenerateFolds(100))?;
    let model = fit_stump(&d_train, cfg.tau)?;
    let true_auc = auc(&model.predict_all(&d_test), &d_test.y)?;
    let estimates = subsample_auc_estimates(&d_train, &cfg.spec_n(), cfg.tau, &mut rng)?;

    let interval_n = ci_interval(&estimates, &cfg.spec_n(), ZeroVariance::Legacy);
    let interval_n_repaired =
        ci_interval(&estimates, &cfg.spec_n(), ZeroVariance::Repaired).expect("repaired interval");
    let interval_c =
        ci_interval(&estimates, &cfg.spec_c(), ZeroVariance::Repaired).expect("repaired interval");
    let covers_n = match &interval_n {
        Ok(i) => Verdict::defined(i.covers(true_auc)),
        Err(_) => Verdict::undefined(),
    };
    Ok(CiIterationRecord {
        index,
        true_auc,
        auc_estimates: estimates,
        covers_n,
        covers_n_repaired: interval_n_repaired.covers(true_auc),
        covers_c: interval_c.covers(true_auc),
        interval_n,
        interval_n_repaired,
        interval_c,
    })
}

/// Coverage of N and C under the four handlings of N's undefined intervals.
pub fn coverage_rows(records: &[CiIterationRecord]) -> Vec<CoverageRow> {
    let cov = |vs: &[Verdict], h| empirical_coverage(vs, h).unwrap_or(f64::NAN);
    let n: Vec<Verdict> = records.iter().map(|r| r.covers_n).collect();
    let n_rep: Vec<Verdict> = records.iter().map(|r| Verdict::defined(r.covers_n_repaired)).collect();
    let c: Vec<Verdict> = records.iter().map(|r| Verdict::defined(r.covers_c)).collect();
    // discard-all: C restricted to iterations where N is defined
    let c_joint: Vec<Verdict> = records
        .iter()
        .map(|r| if r.covers_n.defined { Verdict::defined(r.covers_c) } else { Verdict::undefined() })
        .collect();
    use CoverageHandling::*;
    vec![
        CoverageRow {
            method: "N".into(),
            discard_single: cov(&n, DiscardUndefined),
            discard_all: cov(&n, DiscardUndefined),
            count_as_noncover: cov(&n, CountAsNonCover),
            zero_width: cov(&n_rep, DiscardUndefined),
        },
        CoverageRow {
            method: "C".into(),
            discard_single: cov(&c, DiscardUndefined),
            discard_all: cov(&c_joint, DiscardUndefined),
            count_as_noncover: cov(&c, CountAsNonCover),
            zero_width: cov(&c, DiscardUndefined),
        },
    ]
}

pub fn run_ci_study(cfg: &CiStudyConfig) -> Result<CiStudyReport, CiError> {
    cfg.validate()?;
    let records = par_map_indexed(cfg.n_iter, cfg.workers, |i| run_iteration(i, cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let n_failures = records.iter().filter(|r| !r.covers_n.defined).count();
    Ok(CiStudyReport {
        n_iter: cfg.n_iter,
        c: cfg.c,
        n_failures,
        n_failure_proportion: n_failures as f64 / cfg.n_iter as f64,
        rows: coverage_rows(&records),
        records,
        stamp: ReproStamp::new(cfg.seed, &serde_json::to_string(cfg).expect("config serializes")),
    })
}

/// Writes the coverage table, N's failure proportion, the per-iteration log
/// and the coverage chart.
pub fn write_ci_outputs(report: &CiStudyReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("coverage.csv"))?;
    writeln!(f, "method,discarded_single,discarded_all,not_covering,zero_width")?;
    for r in &report.rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.method, r.discard_single, r.discard_all, r.count_as_noncover, r.zero_width
        )?;
    }
    let mut f = std::fs::File::create(dir.join("failure_proportion.csv"))?;
    writeln!(f, "method,failures,iterations,failure_proportion,c,seed,config_digest,harness_version")?;
    writeln!(
        f,
        "N,{},{},{},{},{},{},{}",
        report.n_failures,
        report.n_iter,
        report.n_failure_proportion,
        report.c,
        report.stamp.seed,
        report.stamp.config_digest,
        report.stamp.version
    )?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("iterations.ndjson"))?);
    for r in &report.records {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    f.flush()?;
    let summary = serde_json::json!({
        "n_iter": report.n_iter,
        "c": report.c,
        "n_failures": report.n_failures,
        "n_failure_proportion": report.n_failure_proportion,
        "rows": report.rows,
        "stamp": report.stamp,
    });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary).expect("json"))?;
    std::fs::write(dir.join("coverage.svg"), crate::report::render_ci_coverage(report))?;
    Ok(())
}
