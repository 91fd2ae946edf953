//! Failure rate of method N and the four coverages across signal strengths.
//!
//! cargo run --release -p failbench-core --example ci_calibration -- [iters] [tau] [n]

use failbench::study_ci::{run_ci_study, CiDgm, CiStudyConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iters = args.first().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let tau = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(failbench::study_ci::DEFAULT_TAU);
    let n = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    println!("beta,tau,n_total,n_failure_proportion,N_single,N_all,N_noncover,N_zero_width,C_single,C_all,C_noncover");
    for beta in [0.0, 0.1, 0.3, 0.5] {
        let cfg = CiStudyConfig {
            dgm: CiDgm { n_total: n, features: 1, beta },
            tau,
            n_iter: iters,
            workers,
            ..CiStudyConfig::default()
        };
        let r = run_ci_study(&cfg).expect("study runs");
        let (nr, cr) = (r.row("N"), r.row("C"));
        println!(
            "{beta},{tau},{n},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.n_failure_proportion,
            nr.discard_single,
            nr.discard_all,
            nr.count_as_noncover,
            nr.zero_width,
            cr.discard_single,
            cr.discard_all,
            cr.count_as_noncover
        );
    }
}
