//! Brute-force reference for the conditional odds-ratio estimators: the
//! noncentral hypergeometric law computed directly from binomial
//! coefficients, and roots located by scanning a grid in log ψ.

#![allow(dead_code)]

use failbench::engine::rng_from_seed;
use failbench::study_or::ContingencyTable2x2;
use rand::seq::index::sample;

fn ln_choose(n: u32, k: u32) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// `(support, probabilities)` of the exposed-case count given all margins.
pub fn conditional_law(t: &ContingencyTable2x2, log_psi: f64) -> (Vec<u32>, Vec<f64>) {
    let exposed = t.n11 + t.n10;
    let unexposed = t.n01 + t.n00;
    let cases = t.n11 + t.n01;
    let lo = cases.saturating_sub(unexposed);
    let hi = cases.min(exposed);
    let support: Vec<u32> = (lo..=hi).collect();
    let logw: Vec<f64> = support
        .iter()
        .map(|&x| ln_choose(exposed, x) + ln_choose(unexposed, cases - x) + x as f64 * log_psi)
        .collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    (support, w.into_iter().map(|v| v / total).collect())
}

/// `E[X] - n11`, increasing in log ψ.
pub fn mle_equation(t: &ContingencyTable2x2, log_psi: f64) -> f64 {
    let (s, p) = conditional_law(t, log_psi);
    s.iter().zip(&p).map(|(&x, &q)| x as f64 * q).sum::<f64>() - t.n11 as f64
}

/// `P(X > n11) + P(X = n11) / 2 - 1/2`, increasing in log ψ.
pub fn midp_equation(t: &ContingencyTable2x2, log_psi: f64) -> f64 {
    let (s, p) = conditional_law(t, log_psi);
    let mut tail = 0.0;
    for (&x, &q) in s.iter().zip(&p) {
        if x > t.n11 {
            tail += q;
        } else if x == t.n11 {
            tail += 0.5 * q;
        }
    }
    tail - 0.5
}

/// Sign change of `f` on [-10, 10]: a 10⁻³ scan, then a 10⁻⁶ scan inside
/// the bracketing cell. Returns the midpoint of the final cell.
pub fn grid_root(f: impl Fn(f64) -> f64) -> Option<f64> {
    let coarse = 1e-3;
    let steps = (20.0 / coarse) as usize;
    let mut prev = f(-10.0);
    for i in 1..=steps {
        let x = -10.0 + i as f64 * coarse;
        let cur = f(x);
        if prev.signum() != cur.signum() {
            let a = x - coarse;
            let fine = 1e-6;
            let mut fp = prev;
            for j in 1..=1000 {
                let y = a + j as f64 * fine;
                let fy = f(y);
                if fp.signum() != fy.signum() {
                    return Some(y - fine / 2.0);
                }
                fp = fy;
            }
            return Some(x - fine / 2.0);
        }
        prev = cur;
    }
    None
}

/// Tables of total `n` with every cell positive, cut points drawn uniformly.
pub fn zero_free_tables(count: usize, n: u32, seed: u64) -> Vec<ContingencyTable2x2> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let mut cuts: Vec<u32> = sample(&mut rng, (n - 1) as usize, 3).into_iter().map(|c| c as u32 + 1).collect();
            cuts.sort_unstable();
            ContingencyTable2x2::new(cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], n - cuts[2])
        })
        .collect()
}
