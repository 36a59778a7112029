//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Tolerances, counts and time limits are pinned
//! below.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gac::run::{fitted_linear_gain, train_to_dir, visited_state_range, LOG_FILE};
use gac::verify::{
    measure_critic_grad, measure_dpg_limit, measure_dual, measure_gauss_newton, measure_guide, measure_naf, measure_second_order, LQR1D_GAIN,
};
use gac_core::envs::{lqr_optimal_gain, make_env, LinearQuadratic};
use gac_core::guide::Expansion;
use gac_core::trainer::TrainConfig;

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

const SEED: u64 = 20_170_519;

const GRAD_NETS: usize = 60;
const GRAD_TOL: f64 = 1e-5;
const GRAD_TIME: Duration = Duration::from_secs(10);

const GN_NETS: usize = 30;
const GN_TOL: f64 = 1e-4;
const GN_TIME: Duration = Duration::from_secs(30);

const GUIDE_1D: usize = 25;
const GUIDE_2D: usize = 10;
const GUIDE_TOL: f64 = 2e-3;
const GUIDE_KL_RTOL: f64 = 1e-3;
const GUIDE_ENTROPY_TOL: f64 = 1e-3;
const GUIDE_TIME: Duration = Duration::from_secs(120);

const DUAL_INSTANCES: usize = 4;
const DUAL_DIFF_TOL: f64 = 1e-4;
const DUAL_GRAD_TOL: f64 = 1e-5;
const DUAL_TIME: Duration = Duration::from_secs(60);

const SECOND_ORDER_INSTANCES: usize = 200;
const SECOND_ORDER_TOL: f64 = 1e-10;
const SECOND_ORDER_TIME: Duration = Duration::from_secs(1);

const DPG_INSTANCES: usize = 50;
const DPG_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-8;
const DPG_TIME: Duration = Duration::from_secs(30);

const NAF_INSTANCES: usize = 20;
const NAF_TOL: f64 = 1e-6;
const NAF_TIME: Duration = Duration::from_secs(5);

const LQR_SEEDS: u64 = 10;
const LQR_STEPS: usize = 28_000;
const LQR_GAIN_RTOL: f64 = 0.10;
const LQR_REQUIRED: usize = 8;
const LQR_TIME: Duration = Duration::from_secs(15 * 60);

const PENDULUM_SEEDS: u64 = 10;
const PENDULUM_STEPS: usize = 27_500;
const PENDULUM_FACTOR: f64 = 3.0;
const PENDULUM_REQUIRED: usize = 7;
const PENDULUM_TIME: Duration = Duration::from_secs(45 * 60);

struct Outcome {
    passed: bool,
    detail: String,
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!("{}; {:.1} s (limit {} s)", out.detail, took.as_secs_f64(), limit.as_secs());
    out.passed &= took < limit;
    out
}

fn derivative_correctness() -> Outcome {
    let m = measure_critic_grad(GRAD_NETS, SEED).expect("critic gradient measurement");
    Outcome { passed: m.gradient_rel_error < GRAD_TOL, detail: format!("worst relative error {:.3e} (tol {GRAD_TOL:e})", m.gradient_rel_error) }
}

fn gauss_newton() -> Outcome {
    let e = measure_gauss_newton(GN_NETS, SEED).expect("Gauss-Newton measurement");
    Outcome { passed: e < GN_TOL, detail: format!("worst relative error {e:.3e} (tol {GN_TOL:e})") }
}

fn guide_vs_primal() -> Outcome {
    let m = measure_guide(GUIDE_1D, GUIDE_2D, SEED).expect("guide measurement");
    let passed = m.mean_error < GUIDE_TOL
        && m.cov_error < GUIDE_TOL
        && m.kl_excess <= GUIDE_KL_RTOL
        && m.entropy_shortfall <= GUIDE_ENTROPY_TOL
        && m.inactive == 0
        && m.unconverged == 0;
    Outcome {
        passed,
        detail: format!(
            "mean {:.3e}, covariance {:.3e} (tol {GUIDE_TOL:e}); KL excess {:.3e}; entropy shortfall {:.3e}; {} of {} without an active constraint",
            m.mean_error, m.cov_error, m.kl_excess, m.entropy_shortfall, m.inactive, m.instances
        ),
    }
}

fn dual_equivalence() -> Outcome {
    let m = measure_dual(DUAL_INSTANCES, SEED).expect("dual measurement");
    Outcome {
        passed: m.difference_error < DUAL_DIFF_TOL && m.gradient_rel_error < DUAL_GRAD_TOL,
        detail: format!(
            "differences {:.3e} (tol {DUAL_DIFF_TOL:e}), gradient {:.3e} (tol {DUAL_GRAD_TOL:e}) over {} grid points",
            m.difference_error, m.gradient_rel_error, m.points
        ),
    }
}

fn second_order() -> Outcome {
    let e = measure_second_order(SECOND_ORDER_INSTANCES, SEED).expect("second-order measurement");
    Outcome { passed: e < SECOND_ORDER_TOL, detail: format!("worst mean mismatch {e:.3e} (tol {SECOND_ORDER_TOL:e})") }
}

fn dpg_limit() -> Outcome {
    let m = measure_dpg_limit(DPG_INSTANCES, SEED).expect("DPG-limit measurement");
    Outcome {
        passed: m.dpg_error < DPG_TOL && m.wmse_identity_error < IDENTITY_TOL && m.mse_identity_error < IDENTITY_TOL,
        detail: format!(
            "DPG {:.3e} (tol {DPG_TOL:e}), weighted identity {:.3e}, plain identity {:.3e} (tol {IDENTITY_TOL:e})",
            m.dpg_error, m.wmse_identity_error, m.mse_identity_error
        ),
    }
}

fn naf() -> Outcome {
    let e = measure_naf(NAF_INSTANCES, SEED).expect("NAF measurement");
    Outcome { passed: e < NAF_TOL, detail: format!("worst mean mismatch {e:.3e} (tol {NAF_TOL:e})") }
}

fn lqr_config(seed: u64) -> TrainConfig {
    TrainConfig {
        env: "lqr1d".into(),
        seed,
        total_steps: LQR_STEPS,
        expansion: Expansion::Mean,
        epsilon: 1e-4,
        batch_size: 256,
        target_samples: 10,
        tau: 0.001,
        gamma: 0.99,
        critic_hidden: vec![64, 64],
        actor_hidden: vec![],
        eval_period: 2_000,
        ..TrainConfig::default()
    }
}

fn lqr_learning(log_of_seed0: &mut Option<Vec<u8>>) -> Outcome {
    let optimal = lqr_optimal_gain(&LinearQuadratic::scalar(), 0.99).expect("Riccati gain").row(0)[0];
    assert!((optimal - LQR1D_GAIN).abs() < 1e-12);
    let mut gains = Vec::new();
    for seed in 0..LQR_SEEDS {
        let dir = tempfile::tempdir().expect("temporary directory");
        let outcome = train_to_dir(&lqr_config(seed), dir.path()).expect("lqr1d training");
        let mut env = make_env("lqr1d").expect("lqr1d");
        let (lo, hi) = visited_state_range(&outcome.actor, env.as_mut(), 10, seed).expect("rollout");
        gains.push(fitted_linear_gain(&outcome.actor, lo, hi, 101).expect("gain fit"));
        if seed == 0 {
            *log_of_seed0 = Some(std::fs::read(dir.path().join(LOG_FILE)).expect("log file"));
        }
    }
    let hits = gains.iter().filter(|k| ((*k - optimal) / optimal).abs() <= LQR_GAIN_RTOL).count();
    let list: Vec<String> = gains.iter().map(|k| format!("{k:.3}")).collect();
    Outcome {
        passed: hits >= LQR_REQUIRED,
        detail: format!("{hits}/{LQR_SEEDS} seeds within {:.0}% of {optimal:.4} after {LQR_STEPS} steps (need {LQR_REQUIRED}); gains [{}]", 100.0 * LQR_GAIN_RTOL, list.join(", ")),
    }
}

fn pendulum_learning() -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for (name, expansion) in [("GAC-0", Expansion::Mean), ("GAC-1", Expansion::Sample)] {
        let mut hits = 0;
        let mut ratios = Vec::new();
        for seed in 0..PENDULUM_SEEDS {
            let cfg = TrainConfig { env: "pendulum".into(), seed, total_steps: PENDULUM_STEPS, expansion, eval_period: 2_500, ..TrainConfig::default() };
            let dir = tempfile::tempdir().expect("temporary directory");
            let outcome = train_to_dir(&cfg, dir.path()).expect("pendulum training");
            let initial = outcome.rows.first().expect("initial evaluation").test_return_mean;
            let last = outcome.rows.last().expect("final evaluation").test_return_mean;
            // Returns are negative costs: a threefold improvement divides the
            // magnitude by three.
            if initial < 0.0 && last >= initial / PENDULUM_FACTOR {
                hits += 1;
            }
            ratios.push(format!("{:.1}", initial / last));
        }
        passed &= hits >= PENDULUM_REQUIRED;
        lines.push(format!("{name} {hits}/{PENDULUM_SEEDS} seeds improved {PENDULUM_FACTOR}x (need {PENDULUM_REQUIRED}), ratios [{}]", ratios.join(", ")));
    }
    Outcome { passed, detail: format!("{} after {PENDULUM_STEPS} steps", lines.join("; ")) }
}

fn determinism(first: Option<Vec<u8>>) -> Outcome {
    let first = first.unwrap_or_else(|| {
        let dir = tempfile::tempdir().expect("temporary directory");
        train_to_dir(&lqr_config(0), dir.path()).expect("lqr1d training");
        std::fs::read(dir.path().join(LOG_FILE)).expect("log file")
    });
    let dir = tempfile::tempdir().expect("temporary directory");
    train_to_dir(&lqr_config(0), dir.path()).expect("lqr1d training");
    let second = std::fs::read(dir.path().join(LOG_FILE)).expect("log file");
    Outcome { passed: first == second && !first.is_empty(), detail: format!("log files of {} and {} bytes, identical: {}", first.len(), second.len(), first == second) }
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--quiet`; only a name filter
    // matters here.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |n: usize| filter.as_deref().is_none_or(|f| f == n.to_string() || f == "acceptance");
    let mut seed0_log = None;
    let mut failures = 0;
    let mut report = |n: usize, name: &str, out: Outcome| {
        println!("{} criterion {n:>2} {name}: {}", if out.passed { "PASS" } else { "FAIL" }, out.detail);
        if !out.passed {
            failures += 1;
        }
    };
    if wanted(1) {
        report(1, "derivative correctness", timed(GRAD_TIME, derivative_correctness));
    }
    if wanted(2) {
        report(2, "Gauss-Newton identity", timed(GN_TIME, gauss_newton));
    }
    if wanted(3) {
        report(3, "guide against primal oracle", timed(GUIDE_TIME, guide_vs_primal));
    }
    if wanted(4) {
        report(4, "dual equivalence", timed(DUAL_TIME, dual_equivalence));
    }
    if wanted(5) {
        report(5, "second-order identity", timed(SECOND_ORDER_TIME, second_order));
    }
    if wanted(6) {
        report(6, "DPG limit", timed(DPG_TIME, dpg_limit));
    }
    if wanted(7) {
        report(7, "NAF special case", timed(NAF_TIME, naf));
    }
    if wanted(8) {
        report(8, "LQR learning", timed(LQR_TIME, || lqr_learning(&mut seed0_log)));
    }
    if wanted(9) {
        report(9, "pendulum learning", timed(PENDULUM_TIME, pendulum_learning));
    }
    if wanted(10) {
        report(10, "determinism", determinism(seed0_log.take()));
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
