//! Randomized invariant checks shared by the property tests and the
//! acceptance runner. Each check runs `CASES` generated inputs from a fixed
//! seed and returns the shrunk counterexample on failure.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Duration;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use failbench::aggregate::{
    aggregate_discard_all, aggregate_discard_single, aggregate_unconditional, empirical_coverage, failure_proportion,
    impute, log_bias, mean, rank_methods, AggregateValue, Basis, CoverageHandling, Direction, ImputationPolicy,
    MeasureSpec, Verdict,
};
use failbench::engine::{run_grid, FnMethod, Method, MethodError, RunConfig};
use failbench::pipeline::{run_pipeline, Pipeline};
use failbench::report::{emit_rank_divergence, emit_threefold, ReproStamp, ThreefoldReport};
use failbench::study_ci::{auc, ci_interval, mean_and_variance, CiSpec, ZeroVariance};
use failbench::study_or::{
    estimate_or, fisher_residual, has_sampling_zero, midp_residual, ContingencyTable2x2, OrEstimator,
};
use failbench::{
    build_table, joint_success_set, success_set, DatasetId, Failure, FailureKind, MethodId, ResultTable, RunOutcome,
};
use rand::Rng;

pub const CASES: u32 = 1000;

pub type Check = fn() -> Result<(), String>;

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    TestRunner::new_with_rng(config, rng)
}

fn check<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn m(i: usize) -> MethodId {
    MethodId::new(format!("M{i}")).unwrap()
}

fn d(i: usize) -> DatasetId {
    DatasetId::new(format!("D{i}")).unwrap()
}

fn cell() -> impl Strategy<Value = RunOutcome> {
    prop_oneof![
        3 => (-1.0e3..1.0e3f64, 0u64..5_000).prop_map(|(v, us)| RunOutcome::success(v, Duration::from_micros(us))),
        1 => (0usize..3, "[a-z ]{0,12}", 0u64..5_000).prop_map(|(k, detail, us)| {
            let kind = [FailureKind::Calculation, FailureKind::Memory, FailureKind::Runtime][k];
            RunOutcome::failure(Failure::new(kind, detail), Duration::from_micros(us))
        }),
    ]
}

/// Tables of 1..=4 methods × 1..=7 datasets with roughly a quarter failures.
pub fn arb_table() -> impl Strategy<Value = ResultTable> {
    (1usize..=4, 1usize..=7).prop_flat_map(|(nm, nd)| {
        prop::collection::vec(cell(), nm * nd).prop_map(move |cells| {
            let rows = cells.chunks(nd).map(|c| c.to_vec()).collect();
            ResultTable::from_rows((0..nm).map(m).collect(), (0..nd).map(d).collect(), rows).unwrap()
        })
    })
}

fn all_policies(worst: f64) -> Vec<ImputationPolicy> {
    vec![
        ImputationPolicy::WorstValue { worst },
        ImputationPolicy::MeanOfMethodRemaining,
        ImputationPolicy::CrossMethodMean,
        ImputationPolicy::ThresholdRule { threshold: 0.3, worst },
    ]
}

// --- table ---------------------------------------------------------------

pub fn success_set_partition() -> Result<(), String> {
    check(arb_table(), |t| {
        for (mi, method) in t.methods().iter().enumerate() {
            let ok = success_set(&t, method).unwrap();
            let failed: Vec<DatasetId> = t
                .datasets()
                .iter()
                .enumerate()
                .filter(|(di, _)| !t.cell_at(mi, *di).is_success())
                .map(|(_, x)| x.clone())
                .collect();
            prop_assert!(ok.iter().all(|x| !failed.contains(x)));
            prop_assert_eq!(ok.len() + failed.len(), t.datasets().len());
        }
        let mut prev = t.datasets().len();
        for k in 1..=t.methods().len() {
            let subset = &t.methods()[..k];
            let joint = joint_success_set(&t, subset).unwrap();
            prop_assert!(joint.len() <= prev);
            prev = joint.len();
            for method in subset {
                let ok = success_set(&t, method).unwrap();
                prop_assert!(joint.iter().all(|x| ok.contains(x)));
            }
        }
        Ok(())
    })
}

pub fn build_table_identity() -> Result<(), String> {
    check(arb_table(), |t| {
        let entries: Vec<_> = t.iter_cells().map(|(a, b, c)| (a.clone(), b.clone(), c.clone())).collect();
        // reversed order must not matter
        let rebuilt =
            build_table(t.methods().to_vec(), t.datasets().to_vec(), entries.iter().rev().cloned()).unwrap();
        for (a, b, c) in &entries {
            prop_assert_eq!(rebuilt.cell(a, b).unwrap(), c);
        }
        Ok(())
    })
}

pub fn table_round_trip() -> Result<(), String> {
    check(arb_table(), |t| {
        prop_assert_eq!(&ResultTable::from_json(&t.to_json()).unwrap(), &t);
        prop_assert_eq!(&ResultTable::read_csv(t.to_csv_string().as_bytes()).unwrap(), &t);
        Ok(())
    })
}

// --- aggregate -----------------------------------------------------------

pub fn failure_free_bases_agree() -> Result<(), String> {
    check(arb_table(), |t| {
        for method in t.methods() {
            if failure_proportion(&t, method).unwrap().failures > 0 {
                continue;
            }
            let u = aggregate_unconditional(&t, method, mean).unwrap().value;
            let s = aggregate_discard_single(&t, method, mean).unwrap().value;
            let a = aggregate_discard_all(&t, std::slice::from_ref(method), mean).unwrap()[method].value;
            prop_assert!(u.is_some());
            prop_assert_eq!(u, s);
            prop_assert_eq!(u, a);
        }
        Ok(())
    })
}

pub fn discard_all_shared_n_used() -> Result<(), String> {
    check(arb_table(), |t| {
        let all = aggregate_discard_all(&t, t.methods(), mean).unwrap();
        let joint = joint_success_set(&t, t.methods()).unwrap().len();
        for v in all.values() {
            prop_assert_eq!(v.n_used, joint);
            prop_assert_eq!(v.defined(), joint > 0);
        }
        for method in t.methods() {
            let single = aggregate_discard_single(&t, method, mean).unwrap();
            prop_assert!(all[method].n_used <= single.n_used);
        }
        Ok(())
    })
}

pub fn impute_preserves_successes() -> Result<(), String> {
    check((arb_table(), -2.0e3..-1.0e3f64), |(t, worst)| {
        for p in all_policies(worst) {
            let Ok(out) = impute(&t, &p) else { continue };
            prop_assert_eq!(out.imputation.clone(), Some(p.name()));
            for (mi, method) in t.methods().iter().enumerate() {
                for di in 0..t.datasets().len() {
                    let (before, after) = (t.cell_at(mi, di), out.cell_at(mi, di));
                    if let Some(v) = before.value() {
                        prop_assert_eq!(after.value().map(f64::to_bits), Some(v.to_bits()));
                        prop_assert!(!after.imputed);
                    } else {
                        prop_assert!(after.imputed && after.is_success());
                    }
                }
                prop_assert_eq!(failure_proportion(&out, method).unwrap().overall, 0.0);
            }
        }
        Ok(())
    })
}

pub fn worst_value_monotone() -> Result<(), String> {
    check((arb_table(), 0.0..500.0f64), |(t, below)| {
        let min = t.iter_cells().filter_map(|(_, _, c)| c.value()).fold(f64::INFINITY, f64::min);
        let worst = if min.is_finite() { min - below } else { -below };
        let out = impute(&t, &ImputationPolicy::WorstValue { worst }).unwrap();
        for method in t.methods() {
            let imputed = aggregate_unconditional(&out, method, mean).unwrap().value.unwrap();
            if let Some(cond) = aggregate_discard_single(&t, method, mean).unwrap().value {
                prop_assert!(imputed <= cond + 1e-9 * cond.abs().max(1.0));
            }
        }
        Ok(())
    })
}

fn arb_values() -> impl Strategy<Value = BTreeMap<MethodId, AggregateValue>> {
    prop::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -10.0..10.0f64], 1..8).prop_map(|vs| {
        vs.into_iter()
            .enumerate()
            .map(|(i, v)| {
                (
                    m(i),
                    AggregateValue {
                        value: Some(v),
                        n_used: 1,
                        basis: Basis::Unconditional,
                    },
                )
            })
            .collect()
    })
}

pub fn ranking_is_competition() -> Result<(), String> {
    check((arb_values(), 0.01..100.0f64), |(vals, scale)| {
        let spec = MeasureSpec::new("x", Direction::HigherBetter);
        let ranks = rank_methods(&vals, &spec).unwrap();
        prop_assert_eq!(ranks.values().min().copied(), Some(1));
        for (method, &r) in &ranks {
            let v = vals[method].value.unwrap();
            let better = vals.values().filter(|o| o.value.unwrap() > v).count();
            prop_assert_eq!(r, better + 1);
        }
        let scaled: BTreeMap<_, _> = vals
            .iter()
            .map(|(k, v)| (k.clone(), AggregateValue { value: v.value.map(|x| x * scale), ..v.clone() }))
            .collect();
        prop_assert_eq!(rank_methods(&scaled, &spec).unwrap(), ranks);
        Ok(())
    })
}

pub fn coverage_handling_order() -> Result<(), String> {
    let verdict = prop_oneof![Just(Verdict::undefined()), any::<bool>().prop_map(Verdict::defined)];
    check(prop::collection::vec(verdict, 1..60), |vs| {
        let any_defined = vs.iter().any(|v| v.defined);
        let strict = vs.iter().any(|v| !v.defined) && vs.iter().any(|v| v.covers);
        if any_defined {
            let a = empirical_coverage(&vs, CoverageHandling::CountAsNonCover).unwrap();
            let b = empirical_coverage(&vs, CoverageHandling::DiscardUndefined).unwrap();
            prop_assert!(a <= b);
            if strict {
                prop_assert!(a < b);
            }
        }
        Ok(())
    })
}

pub fn log_bias_scale_invariant() -> Result<(), String> {
    check((prop::collection::vec(0.01..100.0f64, 1..30), 0.01..100.0f64, 0.01..100.0f64), |(es, truth, c)| {
        let base = log_bias(&es, truth).unwrap();
        let scaled: Vec<f64> = es.iter().map(|e| e * c).collect();
        let other = log_bias(&scaled, truth * c).unwrap();
        prop_assert!((base - other).abs() < 1e-9);
        Ok(())
    })
}

// --- pipeline ------------------------------------------------------------

fn arb_outcome() -> impl Strategy<Value = RunOutcome> {
    cell()
}

pub fn pipeline_singleton_and_prefix() -> Result<(), String> {
    let strat = (arb_outcome(), prop::collection::vec(arb_outcome(), 1..4), prop::collection::vec(arb_outcome(), 1..4));
    check(strat, |(first, tail_a, tail_b)| {
        let ds = d(0);
        let single = Pipeline::single(m(0));
        let out = run_pipeline(&single, |_, _| first.clone(), &ds);
        prop_assert_eq!(&out.outcome, &first);

        let stages: Vec<MethodId> = (0..=tail_a.len().max(tail_b.len())).map(m).collect();
        let p = Pipeline::new(stages).unwrap();
        let pick = |tail: &Vec<RunOutcome>| {
            let first = first.clone();
            let tail = tail.clone();
            move |mm: &MethodId, _: &DatasetId| {
                let i: usize = mm.as_str()[1..].parse().unwrap();
                if i == 0 {
                    first.clone()
                } else {
                    tail.get(i - 1).cloned().unwrap_or_else(|| {
                        RunOutcome::failure(Failure::calculation("absent"), Duration::ZERO)
                    })
                }
            }
        };
        let a = run_pipeline(&p, pick(&tail_a), &ds);
        let b = run_pipeline(&p, pick(&tail_b), &ds);
        if first.is_success() {
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.resolved_by, Some(0));
        }
        prop_assert_eq!(a.resolved_by.is_some(), a.outcome.is_success());
        prop_assert_eq!(a.attempts.len(), a.resolved_by.unwrap_or(p.stages().len()));
        Ok(())
    })
}

fn arb_2x2(max: u32) -> impl Strategy<Value = ContingencyTable2x2> {
    (0..=max, 0..=max, 0..=max, 0..=max).prop_map(|(a, b, c, d)| ContingencyTable2x2::new(a, b, c, d))
}

pub fn terminal_fallback_never_fails() -> Result<(), String> {
    check(prop::collection::vec(arb_2x2(20), 1..25), |tables| {
        let datasets: Vec<DatasetId> = (0..tables.len()).map(d).collect();
        let stages = [OrEstimator::Fisher, OrEstimator::Woolf].map(OrEstimator::id).to_vec();
        let p = Pipeline::new(stages).unwrap();
        let rows = vec![datasets
            .iter()
            .zip(&tables)
            .map(|(ds, t)| {
                run_pipeline(&p, |mm, _| estimate_or(OrEstimator::parse(mm.as_str()).unwrap(), t), ds).outcome
            })
            .collect()];
        let table = ResultTable::from_rows(vec![p.id()], datasets, rows).unwrap();
        prop_assert_eq!(failure_proportion(&table, &p.id()).unwrap().overall, 0.0);
        prop_assert!(aggregate_unconditional(&table, &p.id(), mean).unwrap().defined());
        Ok(())
    })
}

// --- engine --------------------------------------------------------------

pub fn grid_worker_invariance() -> Result<(), String> {
    let strat = (any::<u64>(), prop::collection::vec(-100.0..100.0f64, 1..12), 2usize..6);
    check(strat, |(seed, data, workers)| {
        let noisy = FnMethod::new(m(0), |x: &f64, ctx: &failbench::engine::CellContext| {
            Ok(*x + ctx.rng().random::<f64>())
        });
        let picky = FnMethod::new(m(1), |x: &f64, _: &failbench::engine::CellContext| {
            if *x < 0.0 {
                Err(MethodError::Calculation("negative".into()))
            } else {
                Ok(x.sqrt())
            }
        });
        let methods: Vec<&dyn Method<f64>> = vec![&noisy, &picky];
        let datasets: Vec<(DatasetId, f64)> = data.iter().enumerate().map(|(i, &x)| (d(i), x)).collect();
        let one = run_grid(&methods, &datasets, &RunConfig { workers: 1, ..RunConfig::with_seed(seed) }).unwrap();
        let many = run_grid(&methods, &datasets, &RunConfig { workers, ..RunConfig::with_seed(seed) }).unwrap();
        prop_assert_eq!(one.without_timing().to_json(), many.without_timing().to_json());
        Ok(())
    })
}

// --- odds ratio ----------------------------------------------------------

fn zero_free(max: u32) -> impl Strategy<Value = ContingencyTable2x2> {
    (1..=max, 1..=max, 1..=max, 1..=max).prop_map(|(a, b, c, d)| ContingencyTable2x2::new(a, b, c, d))
}

pub fn transposition_symmetry() -> Result<(), String> {
    check(zero_free(60), |t| {
        for e in [OrEstimator::Manual, OrEstimator::Woolf] {
            let a = e.estimate(&t).unwrap();
            let b = e.estimate(&t.swap_outcome()).unwrap();
            prop_assert!((a * b - 1.0).abs() < 1e-9, "{:?}: {} * {}", e, a, b);
        }
        Ok(())
    })
}

pub fn conditional_estimators_solve_their_equations() -> Result<(), String> {
    check(zero_free(25), |t| {
        prop_assert!(!has_sampling_zero(&t));
        let f = OrEstimator::Fisher.estimate(&t).unwrap();
        let mp = OrEstimator::Midp.estimate(&t).unwrap();
        prop_assert!(fisher_residual(&t, f).abs() < 1e-8, "fisher residual at {}", f);
        prop_assert!(midp_residual(&t, mp).abs() < 1e-8, "midp residual at {}", mp);
        Ok(())
    })
}

pub fn haldane_fallback_is_inert_without_zeros() -> Result<(), String> {
    check(zero_free(60), |t| {
        let p = Pipeline::new(vec![OrEstimator::Manual.id(), OrEstimator::Haldane.id()]).unwrap();
        let out = run_pipeline(&p, |mm, _| estimate_or(OrEstimator::parse(mm.as_str()).unwrap(), &t), &d(0));
        prop_assert_eq!(out.outcome.value(), Some(OrEstimator::Manual.estimate(&t).unwrap()));
        prop_assert_eq!(out.resolved_by, Some(0));
        Ok(())
    })
}

// --- confidence intervals ------------------------------------------------

fn arb_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(-3i32..3).prop_map(f64::from), -3.0..3.0f64], n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

pub fn auc_monotone_invariance() -> Result<(), String> {
    check((arb_scores(), 0.1..10.0f64, -5.0..5.0f64), |((scores, mut labels), a, b)| {
        labels[0] = true;
        labels[1] = false;
        let base = auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let transforms: [&dyn Fn(f64) -> f64; 3] = [&|x| a * x + b, &f64::exp, &|x| x * x * x];
        for f in transforms {
            let mapped: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(auc(&mapped, &labels).unwrap(), base);
        }
        Ok(())
    })
}

fn arb_estimates() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.5), 0.0..1.0f64], 15)
}

pub fn interval_equivariance() -> Result<(), String> {
    check((arb_estimates(), -0.5..0.5f64, 0.1..10.0f64), |(xs, delta, s)| {
        for spec in [CiSpec::naive(), CiSpec::corrected()] {
            let base = ci_interval(&xs, &spec, ZeroVariance::Repaired).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + delta).collect();
            let sh = ci_interval(&shifted, &spec, ZeroVariance::Repaired).unwrap();
            let tol = 1e-9;
            prop_assert!((sh.lower - base.lower - delta).abs() < tol);
            prop_assert!((sh.upper - base.upper - delta).abs() < tol);
            let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
            let sc = ci_interval(&scaled, &spec, ZeroVariance::Repaired).unwrap();
            prop_assert!((sc.half_width() - s * base.half_width()).abs() < tol * s.max(1.0));
        }
        Ok(())
    })
}

pub fn interval_semantics() -> Result<(), String> {
    check((arb_estimates(), 0.0..1.0f64), |(xs, truth)| {
        let (m, s2) = mean_and_variance(&xs);
        let legacy = ci_interval(&xs, &CiSpec::naive(), ZeroVariance::Legacy);
        let repaired = ci_interval(&xs, &CiSpec::naive(), ZeroVariance::Repaired).unwrap();
        let c = ci_interval(&xs, &CiSpec::corrected(), ZeroVariance::Repaired).unwrap();
        let identical = xs.iter().all(|&x| x == xs[0]);
        prop_assert_eq!(s2 == 0.0, identical);
        if s2 > 0.0 {
            prop_assert_eq!(legacy.as_ref().ok(), Some(&repaired));
            prop_assert!(c.lower < repaired.lower && repaired.upper < c.upper);
            if repaired.covers(truth) {
                prop_assert!(c.covers(truth));
            }
        } else {
            prop_assert!(legacy.is_err());
            prop_assert!(repaired.zero_width);
            prop_assert_eq!(repaired.covers(truth), m == truth);
            prop_assert!(repaired.covers(m));
        }
        Ok(())
    })
}

// --- report --------------------------------------------------------------

pub fn threefold_round_trip() -> Result<(), String> {
    check((arb_table(), any::<u64>()), |(t, seed)| {
        let r = emit_threefold(&t, ReproStamp::new(seed, "cfg")).unwrap();
        prop_assert_eq!(&r.methods, &t.methods().to_vec());
        prop_assert_eq!(&ThreefoldReport::read_csv(r.to_csv_string().as_bytes()).unwrap(), &r);
        prop_assert_eq!(&ThreefoldReport::from_json(&r.to_json()).unwrap(), &r);
        Ok(())
    })
}

pub fn rank_divergence_symmetry() -> Result<(), String> {
    let ranks = |n: usize| prop::collection::vec(1usize..6, n);
    check((1usize..8).prop_flat_map(move |n| (ranks(n), ranks(n))), |(a, b)| {
        let ra: BTreeMap<MethodId, usize> = a.iter().enumerate().map(|(i, &r)| (m(i), r)).collect();
        let rb: BTreeMap<MethodId, usize> = b.iter().enumerate().map(|(i, &r)| (m(i), r)).collect();
        let ab = emit_rank_divergence(&ra, &rb, "a", "b").unwrap();
        let ba = emit_rank_divergence(&rb, &ra, "b", "a").unwrap();
        prop_assert_eq!(ab.max_shift, ba.max_shift);
        for (x, y) in ab.rows.iter().zip(&ba.rows) {
            prop_assert_eq!(x.shift, -y.shift);
            prop_assert_eq!(x.abs_shift, y.abs_shift);
        }
        Ok(())
    })
}

/// Every check, labeled.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("success-set partition and joint-set monotonicity", success_set_partition),
        ("build_table lookup identity", build_table_identity),
        ("table JSON/CSV round trip", table_round_trip),
        ("failure-free bases agree", failure_free_bases_agree),
        ("discard-all shares n_used", discard_all_shared_n_used),
        ("imputation never touches successes", impute_preserves_successes),
        ("worst-value imputation monotonicity", worst_value_monotone),
        ("competition ranking and rescaling", ranking_is_competition),
        ("coverage handling order", coverage_handling_order),
        ("log-bias scale invariance", log_bias_scale_invariant),
        ("pipeline singleton identity and prefix determinism", pipeline_singleton_and_prefix),
        ("terminal fallback never fails", terminal_fallback_never_fails),
        ("grid output independent of workers", grid_worker_invariance),
        ("OR transposition symmetry", transposition_symmetry),
        ("Fisher/Midp residuals", conditional_estimators_solve_their_equations),
        ("Haldane fallback inert on zero-free tables", haldane_fallback_is_inert_without_zeros),
        ("AUC monotone-transform invariance", auc_monotone_invariance),
        ("interval equivariance", interval_equivariance),
        ("interval semantics and nesting", interval_semantics),
        ("threefold report round trip", threefold_round_trip),
        ("rank divergence symmetry", rank_divergence_symmetry),
    ]
}
