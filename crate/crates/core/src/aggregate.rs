//! Aggregation and failure-handling policies.
//!
//! Unconditional aggregates are defined only for methods that never fail.
//! Conditional aggregates restrict to the failing method's own success set
//! (discard-single) or to the joint success set of a method group
//! (discard-all). Undefined aggregates are carried as `value: None` and are
//! never replaced by a sentinel number.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{FailureKind, MethodId, ResultTable, TableError};

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("empty input")]
    EmptyInput,
    #[error("all verdicts undefined")]
    AllUndefined,
    #[error("non-positive estimate {0} on log scale")]
    NonPositiveEstimate(f64),
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("undefined aggregate for method `{0}`")]
    UndefinedInput(String),
    #[error("no donor value to impute method `{method}` on dataset `{dataset}`")]
    NoDonor { method: String, dataset: String },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// Ordering rule for a performance measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Direction {
    HigherBetter,
    /// Smaller absolute value is better (bias).
    LowerAbsBetter,
    /// Smaller signed value is better.
    LowerBetter,
    /// Smaller distance to `target` is better (coverage vs. nominal level).
    CloserToTarget(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub name: String,
    pub direction: Direction,
}

impl MeasureSpec {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        Self {
            name: name.into(),
            direction,
        }
    }

    /// Sort key where smaller is better.
    fn loss(&self, v: f64) -> f64 {
        match self.direction {
            Direction::HigherBetter => -v,
            Direction::LowerAbsBetter => v.abs(),
            Direction::LowerBetter => v,
            Direction::CloserToTarget(t) => (v - t).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Unconditional,
    DiscardSingle,
    DiscardAll,
    Imputed(String),
}

impl Basis {
    pub fn label(&self) -> String {
        match self {
            Basis::Unconditional => "Unconditional".into(),
            Basis::DiscardSingle => "DiscardSingle".into(),
            Basis::DiscardAll => "DiscardAll".into(),
            Basis::Imputed(p) => format!("Imputed:{p}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Unconditional" => Some(Basis::Unconditional),
            "DiscardSingle" => Some(Basis::DiscardSingle),
            "DiscardAll" => Some(Basis::DiscardAll),
            _ => s.strip_prefix("Imputed:").map(|p| Basis::Imputed(p.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateValue {
    pub value: Option<f64>,
    pub n_used: usize,
    pub basis: Basis,
}

impl AggregateValue {
    pub fn defined(&self) -> bool {
        self.value.is_some()
    }

    fn undefined(basis: Basis) -> Self {
        Self {
            value: None,
            n_used: 0,
            basis,
        }
    }
}

/// Arithmetic mean; the default summary statistic.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn summarize<S: Fn(&[f64]) -> f64>(
    table: &ResultTable,
    method: usize,
    rows: &[usize],
    stat: &S,
    basis: Basis,
) -> AggregateValue {
    if rows.is_empty() {
        return AggregateValue::undefined(basis);
    }
    let col = table.column(method);
    let xs: Vec<f64> = rows
        .iter()
        .map(|&d| col[d].value().expect("row taken from a success set"))
        .collect();
    AggregateValue {
        value: Some(stat(&xs)),
        n_used: xs.len(),
        basis,
    }
}

/// Summary over all datasets; undefined as soon as the method fails anywhere.
pub fn aggregate_unconditional<S: Fn(&[f64]) -> f64>(
    table: &ResultTable,
    method: &MethodId,
    stat: S,
) -> Result<AggregateValue, AggregateError> {
    let mi = table.method_index(method)?;
    let rows = table.success_indices(mi);
    if rows.len() != table.datasets().len() {
        return Ok(AggregateValue::undefined(Basis::Unconditional));
    }
    Ok(summarize(table, mi, &rows, &stat, Basis::Unconditional))
}

/// Summary over the method's own success set.
pub fn aggregate_discard_single<S: Fn(&[f64]) -> f64>(
    table: &ResultTable,
    method: &MethodId,
    stat: S,
) -> Result<AggregateValue, AggregateError> {
    let mi = table.method_index(method)?;
    let rows = table.success_indices(mi);
    Ok(summarize(table, mi, &rows, &stat, Basis::DiscardSingle))
}

/// Summary of every method over the joint success set of `methods`.
pub fn aggregate_discard_all<S: Fn(&[f64]) -> f64>(
    table: &ResultTable,
    methods: &[MethodId],
    stat: S,
) -> Result<BTreeMap<MethodId, AggregateValue>, AggregateError> {
    if methods.is_empty() {
        return Err(TableError::EmptyMethodList.into());
    }
    let idx = methods
        .iter()
        .map(|m| table.method_index(m))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = table.joint_success_indices(&idx);
    Ok(methods
        .iter()
        .zip(&idx)
        .map(|(m, &mi)| (m.clone(), summarize(table, mi, &rows, &stat, Basis::DiscardAll)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImputationPolicy {
    /// Substitute a fixed worst-case value.
    WorstValue { worst: f64 },
    /// The failing method's mean over its own successes.
    MeanOfMethodRemaining,
    /// Mean of the other methods' values on the same dataset.
    CrossMethodMean,
    /// Worst value if the method's failure proportion exceeds `threshold`,
    /// else its mean over its successes.
    ThresholdRule { threshold: f64, worst: f64 },
}

impl ImputationPolicy {
    pub fn name(&self) -> String {
        match self {
            ImputationPolicy::WorstValue { worst } => format!("WorstValue({worst})"),
            ImputationPolicy::MeanOfMethodRemaining => "MeanOfMethodRemaining".into(),
            ImputationPolicy::CrossMethodMean => "CrossMethodMean".into(),
            ImputationPolicy::ThresholdRule { threshold, worst } => {
                format!("ThresholdRule({threshold},{worst})")
            }
        }
    }

    fn validate(&self) -> Result<(), AggregateError> {
        match *self {
            ImputationPolicy::WorstValue { worst } if !worst.is_finite() => Err(
                AggregateError::InvalidPolicy(format!("worst value {worst} is not finite")),
            ),
            ImputationPolicy::ThresholdRule { threshold, worst } => {
                if !(0.0..=1.0).contains(&threshold) {
                    Err(AggregateError::InvalidPolicy(format!(
                        "threshold {threshold} outside [0, 1]"
                    )))
                } else if !worst.is_finite() {
                    Err(AggregateError::InvalidPolicy(format!(
                        "worst value {worst} is not finite"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Returns a failure-free copy of `table` with every failure cell replaced
/// according to `policy`.
///
/// Successful cells are untouched. Imputed cells are flagged and the table is
/// labeled with the policy name; donor values are always taken from the
/// original successes, never from other imputed cells.
pub fn impute(table: &ResultTable, policy: &ImputationPolicy) -> Result<ResultTable, AggregateError> {
    policy.validate()?;
    let nm = table.methods().len();
    let nd = table.datasets().len();
    let method_mean = |m: usize| -> Option<f64> {
        let xs: Vec<f64> = table.column(m).iter().filter_map(|c| c.value()).collect();
        (!xs.is_empty()).then(|| mean(&xs))
    };
    let failure_share = |m: usize| -> f64 {
        table.column(m).iter().filter(|c| !c.is_success()).count() as f64 / nd as f64
    };
    let mut out = table.clone();
    for m in 0..nm {
        for d in 0..nd {
            let cell = table.cell_at(m, d);
            let Err(failure) = &cell.result else { continue };
            let no_donor = || AggregateError::NoDonor {
                method: table.methods()[m].to_string(),
                dataset: table.datasets()[d].to_string(),
            };
            let v = match *policy {
                ImputationPolicy::WorstValue { worst } => worst,
                ImputationPolicy::MeanOfMethodRemaining => method_mean(m).ok_or_else(no_donor)?,
                ImputationPolicy::CrossMethodMean => {
                    let xs: Vec<f64> = (0..nm)
                        .filter(|&o| o != m)
                        .filter_map(|o| table.cell_at(o, d).value())
                        .collect();
                    if xs.is_empty() {
                        return Err(no_donor());
                    }
                    mean(&xs)
                }
                ImputationPolicy::ThresholdRule { threshold, worst } => {
                    if failure_share(m) > threshold {
                        worst
                    } else {
                        method_mean(m).ok_or_else(no_donor)?
                    }
                }
            };
            let slot = out.cell_at_mut(m, d);
            slot.result = Ok(v);
            slot.imputed = true;
            slot.annotation = Some(format!("imputed; original failure {failure}"));
        }
    }
    out.imputation = Some(policy.name());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureProportion {
    pub overall: f64,
    pub failures: usize,
    pub datasets: usize,
    pub by_kind: BTreeMap<FailureKind, f64>,
}

pub fn failure_proportion(
    table: &ResultTable,
    method: &MethodId,
) -> Result<FailureProportion, AggregateError> {
    let mi = table.method_index(method)?;
    let n = table.datasets().len();
    let mut counts: BTreeMap<FailureKind, usize> =
        FailureKind::ALL.into_iter().map(|k| (k, 0)).collect();
    for c in table.column(mi) {
        if let Some(f) = c.failure_ref() {
            *counts.get_mut(&f.kind).expect("all kinds present") += 1;
        }
    }
    let failures: usize = counts.values().sum();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(FailureProportion {
        overall: frac(failures),
        failures,
        datasets: n,
        by_kind: counts.into_iter().map(|(k, c)| (k, frac(c))).collect(),
    })
}

/// Competition ranking (1, 1, 3, ...) under `measure`; rank 1 is best.
pub fn rank_methods(
    values: &BTreeMap<MethodId, AggregateValue>,
    measure: &MeasureSpec,
) -> Result<BTreeMap<MethodId, usize>, AggregateError> {
    let losses = values
        .iter()
        .map(|(m, v)| {
            v.value
                .map(|x| (m, measure.loss(x)))
                .ok_or_else(|| AggregateError::UndefinedInput(m.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(losses
        .iter()
        .map(|(m, l)| {
            let better = losses.iter().filter(|(_, o)| o < l).count();
            ((*m).clone(), better + 1)
        })
        .collect())
}

fn check_finite(xs: &[f64]) -> Result<(), AggregateError> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(&x) => Err(AggregateError::NonFinite(x)),
        None => Ok(()),
    }
}

/// Mean deviation of the estimates from the true value.
pub fn bias(estimates: &[f64], truth: f64) -> Result<f64, AggregateError> {
    if estimates.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    check_finite(estimates)?;
    check_finite(&[truth])?;
    Ok(mean(estimates) - truth)
}

/// Bias on the log scale: `mean(ln e) - ln truth`.
pub fn log_bias(estimates: &[f64], truth: f64) -> Result<f64, AggregateError> {
    if estimates.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    check_finite(estimates)?;
    check_finite(&[truth])?;
    if let Some(&e) = estimates.iter().chain([&truth]).find(|&&e| e <= 0.0) {
        return Err(AggregateError::NonPositiveEstimate(e));
    }
    let logs: Vec<f64> = estimates.iter().map(|e| e.ln()).collect();
    Ok(mean(&logs) - truth.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub defined: bool,
    pub covers: bool,
}

impl Verdict {
    pub fn undefined() -> Self {
        Self {
            defined: false,
            covers: false,
        }
    }

    pub fn defined(covers: bool) -> Self {
        Self {
            defined: true,
            covers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverageHandling {
    DiscardUndefined,
    CountAsNonCover,
}

pub fn empirical_coverage(
    verdicts: &[Verdict],
    handling: CoverageHandling,
) -> Result<f64, AggregateError> {
    if verdicts.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let covers = verdicts.iter().filter(|v| v.defined && v.covers).count();
    let denom = match handling {
        CoverageHandling::DiscardUndefined => verdicts.iter().filter(|v| v.defined).count(),
        CoverageHandling::CountAsNonCover => verdicts.len(),
    };
    if denom == 0 {
        return Err(AggregateError::AllUndefined);
    }
    Ok(covers as f64 / denom as f64)
}

/// One line of an aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: MethodId,
    pub basis: Basis,
    pub measure: String,
    pub value: Option<f64>,
    pub n_used: usize,
    pub failure_proportion: f64,
}

pub const UNDEFINED: &str = "UNDEFINED";

pub fn format_value(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

pub fn parse_value(s: &str) -> Result<Option<f64>, String> {
    if s == UNDEFINED {
        Ok(None)
    } else {
        s.parse::<f64>().map(Some).map_err(|e| format!("`{s}`: {e}"))
    }
}

/// All four bases (unconditional, discard-single, discard-all, and the
/// imputed variant when `policy` is given) for every method of `table`.
pub fn aggregate_report<S: Fn(&[f64]) -> f64>(
    table: &ResultTable,
    measure: &MeasureSpec,
    stat: S,
    policy: Option<&ImputationPolicy>,
) -> Result<Vec<AggregateRow>, AggregateError> {
    let methods = table.methods().to_vec();
    let all = aggregate_discard_all(table, &methods, &stat)?;
    let imputed = policy.map(|p| impute(table, p)).transpose()?;
    let mut rows = Vec::new();
    for m in &methods {
        let fp = failure_proportion(table, m)?.overall;
        let mut push = |v: AggregateValue| {
            rows.push(AggregateRow {
                method: m.clone(),
                basis: v.basis,
                measure: measure.name.clone(),
                value: v.value,
                n_used: v.n_used,
                failure_proportion: fp,
            })
        };
        push(aggregate_unconditional(table, m, &stat)?);
        push(aggregate_discard_single(table, m, &stat)?);
        push(all[m].clone());
        if let Some(t) = &imputed {
            let mut v = aggregate_unconditional(t, m, &stat)?;
            v.basis = Basis::Imputed(t.imputation.clone().unwrap_or_default());
            push(v);
        }
    }
    Ok(rows)
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "method",
        "basis",
        "measure",
        "value_or_UNDEFINED",
        "n_used",
        "failure_proportion",
    ])?;
    for r in rows {
        wtr.write_record([
            r.method.as_str(),
            &r.basis.label(),
            &r.measure,
            &format_value(r.value),
            &r.n_used.to_string(),
            &r.failure_proportion.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::fixtures::{table_1a, table_1b};
    use crate::table::{build_table, did, mid, Failure, RunOutcome};
    use std::time::Duration;

    const EPS: f64 = 1e-12;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < EPS
    }

    #[test]
    fn unconditional_on_table_1() {
        let t = table_1b();
        let v = aggregate_unconditional(&t, &mid("Method 2"), mean).unwrap();
        assert!(close(v.value.unwrap(), 0.8375));
        assert_eq!(format!("{:.2}", v.value.unwrap()), "0.84");
        assert_eq!(v.n_used, 4);
        let v = aggregate_unconditional(&t, &mid("Method 1"), mean).unwrap();
        assert!(!v.defined());

        let a = table_1a();
        let v = aggregate_unconditional(&a, &mid("Method 2"), |xs| bias(xs, 4.0).unwrap()).unwrap();
        assert!(close(v.value.unwrap(), 0.0725));
        assert_eq!(format!("{:.2}", v.value.unwrap()), "0.07");
    }

    #[test]
    fn discard_single_and_all() {
        let t = table_1b();
        let v = aggregate_discard_single(&t, &mid("Method 1"), mean).unwrap();
        assert!(close(v.value.unwrap(), (0.85 + 0.90 + 0.78) / 3.0));
        assert_eq!(v.n_used, 3);
        let v2 = aggregate_discard_single(&t, &mid("Method 2"), mean).unwrap();
        let u2 = aggregate_unconditional(&t, &mid("Method 2"), mean).unwrap();
        assert_eq!(v2.value, u2.value);

        let all = aggregate_discard_all(&t, t.methods(), mean).unwrap();
        assert!(close(all[&mid("Method 1")].value.unwrap(), 0.875));
        assert!(close(all[&mid("Method 2")].value.unwrap(), 0.895));
        assert!(close(all[&mid("Method 3")].value.unwrap(), 0.865));
        assert!(all.values().all(|v| v.n_used == 2));

        let single = aggregate_discard_all(&t, &[mid("Method 2")], mean).unwrap();
        assert_eq!(single[&mid("Method 2")].value, u2.value);
        assert_eq!(
            aggregate_discard_all(&t, &[], mean),
            Err(AggregateError::Table(TableError::EmptyMethodList))
        );
    }

    #[test]
    fn always_failing_method_is_undefined() {
        let f = || RunOutcome::failure(Failure::calculation("x"), Duration::ZERO);
        let t = build_table(
            vec![mid("a"), mid("b")],
            vec![did("1"), did("2")],
            [
                (mid("a"), did("1"), f()),
                (mid("a"), did("2"), f()),
                (mid("b"), did("1"), RunOutcome::success(1.0, Duration::ZERO)),
                (mid("b"), did("2"), RunOutcome::success(2.0, Duration::ZERO)),
            ],
        )
        .unwrap();
        assert!(!aggregate_discard_single(&t, &mid("a"), mean).unwrap().defined());
        let all = aggregate_discard_all(&t, t.methods(), mean).unwrap();
        assert!(all.values().all(|v| !v.defined() && v.n_used == 0));
    }

    /// Ten repetitions, A fails in two; B's deviations average 0.09 on A's
    /// success set and 0.14 overall.
    #[test]
    fn conditional_vs_unconditional_bias_narrative() {
        let truth = 1.0;
        let a_dev = [0.09; 10];
        // Eight values summing to 0.72 and two summing to 0.68.
        let b_dev = [0.05, 0.13, 0.07, 0.11, 0.09, 0.09, 0.10, 0.08, 0.30, 0.38];
        let methods = vec![mid("A"), mid("B")];
        let datasets: Vec<_> = (1..=10).map(|i| did(&i.to_string())).collect();
        let mut entries = Vec::new();
        for (i, d) in datasets.iter().enumerate() {
            let a = if i >= 8 {
                RunOutcome::failure(Failure::calculation("separation"), Duration::ZERO)
            } else {
                RunOutcome::success(truth + a_dev[i], Duration::ZERO)
            };
            entries.push((mid("A"), d.clone(), a));
            entries.push((mid("B"), d.clone(), RunOutcome::success(truth + b_dev[i], Duration::ZERO)));
        }
        let t = build_table(methods.clone(), datasets, entries).unwrap();
        let stat = |xs: &[f64]| bias(xs, truth).unwrap();
        // brute-force means of the deviations
        let b_all: f64 = b_dev.iter().sum::<f64>() / 10.0;
        let b_cond: f64 = b_dev[..8].iter().sum::<f64>() / 8.0;
        assert!((b_all - 0.14).abs() < 1e-12 && (b_cond - 0.09).abs() < 1e-12);

        assert!(!aggregate_unconditional(&t, &mid("A"), stat).unwrap().defined());
        let b_u = aggregate_unconditional(&t, &mid("B"), stat).unwrap().value.unwrap();
        assert!((b_u - 0.14).abs() < 1e-9);
        let cond = aggregate_discard_all(&t, &methods, stat).unwrap();
        assert!((cond[&mid("A")].value.unwrap() - 0.09).abs() < 1e-9);
        assert!((cond[&mid("B")].value.unwrap() - 0.09).abs() < 1e-9);
    }

    #[test]
    fn imputation_variants() {
        let t = table_1b();
        let w = impute(&t, &ImputationPolicy::WorstValue { worst: 0.5 }).unwrap();
        assert_eq!(w.cell(&mid("Method 1"), &did("3")).unwrap().value(), Some(0.5));
        assert_eq!(w.cell(&mid("Method 3"), &did("4")).unwrap().value(), Some(0.5));
        assert!(w.cell(&mid("Method 1"), &did("3")).unwrap().imputed);
        assert_eq!(w.imputation.as_deref(), Some("WorstValue(0.5)"));

        let c = impute(&t, &ImputationPolicy::CrossMethodMean).unwrap();
        assert!(close(c.cell(&mid("Method 1"), &did("3")).unwrap().value().unwrap(), 0.81));

        let r = impute(&t, &ImputationPolicy::ThresholdRule { threshold: 0.2, worst: 0.5 }).unwrap();
        assert_eq!(r.cell(&mid("Method 1"), &did("3")).unwrap().value(), Some(0.5));
        let r = impute(&t, &ImputationPolicy::ThresholdRule { threshold: 0.25, worst: 0.5 }).unwrap();
        let m1 = (0.85 + 0.90 + 0.78) / 3.0;
        assert!(close(r.cell(&mid("Method 1"), &did("3")).unwrap().value().unwrap(), m1));

        let m = impute(&t, &ImputationPolicy::MeanOfMethodRemaining).unwrap();
        assert!(close(m.cell(&mid("Method 1"), &did("3")).unwrap().value().unwrap(), m1));
        for tab in [&w, &c, &m] {
            for meth in tab.methods() {
                assert_eq!(failure_proportion(tab, meth).unwrap().overall, 0.0);
            }
        }
    }

    #[test]
    fn imputation_without_donor() {
        let f = || RunOutcome::failure(Failure::calculation("x"), Duration::ZERO);
        let t = build_table(
            vec![mid("a"), mid("b")],
            vec![did("1")],
            [(mid("a"), did("1"), f()), (mid("b"), did("1"), f())],
        )
        .unwrap();
        assert!(matches!(
            impute(&t, &ImputationPolicy::CrossMethodMean),
            Err(AggregateError::NoDonor { .. })
        ));
        assert!(matches!(
            impute(&t, &ImputationPolicy::MeanOfMethodRemaining),
            Err(AggregateError::NoDonor { .. })
        ));
        // threshold branch needs no donor
        assert!(impute(&t, &ImputationPolicy::ThresholdRule { threshold: 0.5, worst: 0.0 }).is_ok());
        assert!(matches!(
            impute(&t, &ImputationPolicy::ThresholdRule { threshold: 1.5, worst: 0.0 }),
            Err(AggregateError::InvalidPolicy(_))
        ));
    }

    #[test]
    fn failure_proportions() {
        let t = table_1b();
        let p = failure_proportion(&t, &mid("Method 1")).unwrap();
        assert_eq!(p.overall, 0.25);
        assert_eq!(p.by_kind[&FailureKind::Calculation], 0.25);
        assert_eq!(p.by_kind.values().sum::<f64>(), p.overall);
        assert_eq!(failure_proportion(&t, &mid("Method 2")).unwrap().overall, 0.0);
    }

    fn vals(pairs: &[(&str, f64)]) -> BTreeMap<MethodId, AggregateValue> {
        pairs
            .iter()
            .map(|(m, v)| {
                (
                    mid(m),
                    AggregateValue {
                        value: Some(*v),
                        n_used: 1,
                        basis: Basis::DiscardAll,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn ranking() {
        let lab = MeasureSpec::new("bias", Direction::LowerAbsBetter);
        let r = rank_methods(&vals(&[("A", 0.09), ("B", 0.14)]), &lab).unwrap();
        assert_eq!((r[&mid("A")], r[&mid("B")]), (1, 2));
        let r = rank_methods(&vals(&[("A", 0.3), ("B", 0.3)]), &lab).unwrap();
        assert_eq!((r[&mid("A")], r[&mid("B")]), (1, 1));
        let hb = MeasureSpec::new("acc", Direction::HigherBetter);
        let r = rank_methods(&vals(&[("A", 0.875), ("B", 0.895), ("C", 0.865)]), &hb).unwrap();
        assert_eq!((r[&mid("A")], r[&mid("B")], r[&mid("C")]), (2, 1, 3));
        let r = rank_methods(&vals(&[("A", 1.0), ("B", 1.0), ("C", 0.5)]), &hb).unwrap();
        assert_eq!((r[&mid("A")], r[&mid("B")], r[&mid("C")]), (1, 1, 3));
        let signed = MeasureSpec::new("bias", Direction::LowerBetter);
        let r = rank_methods(&vals(&[("A", -0.2), ("B", 0.1)]), &signed).unwrap();
        assert_eq!(r[&mid("A")], 1);
        let cov = MeasureSpec::new("coverage", Direction::CloserToTarget(0.95));
        let r = rank_methods(&vals(&[("A", 0.99), ("B", 0.92)]), &cov).unwrap();
        assert_eq!(r[&mid("B")], 1);

        let mut v = vals(&[("A", 1.0)]);
        v.get_mut(&mid("A")).unwrap().value = None;
        assert_eq!(rank_methods(&v, &hb), Err(AggregateError::UndefinedInput("A".into())));
    }

    #[test]
    fn bias_measures() {
        assert!(close(bias(&[4.23, 4.13, 3.69, 4.24], 4.0).unwrap(), 0.0725));
        assert_eq!(bias(&[2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(log_bias(&[2.0, 8.0], 4.0).unwrap().abs() < 1e-15);
        assert_eq!(bias(&[], 1.0), Err(AggregateError::EmptyInput));
        assert_eq!(log_bias(&[0.0], 1.0), Err(AggregateError::NonPositiveEstimate(0.0)));
    }

    #[test]
    fn coverage_handlings() {
        let mut vs = vec![Verdict::undefined(); 300];
        vs.extend(std::iter::repeat_n(Verdict::defined(true), 378));
        vs.extend(std::iter::repeat_n(Verdict::defined(false), 322));
        let d = empirical_coverage(&vs, CoverageHandling::DiscardUndefined).unwrap();
        assert!(close(d, 0.54));
        let c = empirical_coverage(&vs, CoverageHandling::CountAsNonCover).unwrap();
        assert!(close(c, 0.378));
        assert_eq!(format!("{c:.2}"), "0.38");
        let all = vec![Verdict::defined(true); 5];
        assert_eq!(empirical_coverage(&all, CoverageHandling::DiscardUndefined).unwrap(), 1.0);
        assert_eq!(empirical_coverage(&all, CoverageHandling::CountAsNonCover).unwrap(), 1.0);
        assert_eq!(
            empirical_coverage(&[], CoverageHandling::CountAsNonCover),
            Err(AggregateError::EmptyInput)
        );
        assert_eq!(
            empirical_coverage(&[Verdict::undefined()], CoverageHandling::DiscardUndefined),
            Err(AggregateError::AllUndefined)
        );
    }

    #[test]
    fn report_rows_and_csv() {
        let t = table_1b();
        let m = MeasureSpec::new("accuracy", Direction::HigherBetter);
        let rows = aggregate_report(&t, &m, mean, Some(&ImputationPolicy::WorstValue { worst: 0.5 })).unwrap();
        assert_eq!(rows.len(), 12);
        let mut buf = Vec::new();
        write_aggregate_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("method,basis,measure,value_or_UNDEFINED,n_used,failure_proportion\n"));
        assert!(s.contains("Method 1,Unconditional,accuracy,UNDEFINED,0,0.25"));
        assert!(s.contains("Imputed:WorstValue(0.5)"));
    }
}
