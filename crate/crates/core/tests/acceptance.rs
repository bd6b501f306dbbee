//! Desk-scale acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ffbsde::conditions::check_all;
use ffbsde::oracles::{oracle_functional, oracle_y0};
use ffbsde::ppde::{
    feynman_kac_check, horizontal_derivative, ito_convergence_table, last_value_squared, lift_coefficients,
    ppde_sweep, running_integral_functional, sample_paths, second_vertical_derivative, vertical_derivative, Bracket,
};
use ffbsde::solver::{picard_solve, Controls, ForwardStart, PicardOptions};
use ffbsde::{
    registry_get, AssumptionConstants, BrownianGrid, CoefficientSet, ContinuationSchedule, Dims, Discretization,
    Params, Path, PathFunctional, SamplerConfig, Smoothness, SolutionEstimate,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 50;
const M: usize = 20_000;
const SEED: u64 = 42;
const THETA: f64 = 0.125;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ex31() -> CoefficientSet {
    registry_get("example31", &Params::new()).unwrap()
}

fn constants() -> AssumptionConstants {
    AssumptionConstants::new(22.0, 1.0, 1.0, 1.0)
}

fn schedule() -> ContinuationSchedule {
    ContinuationSchedule {
        relaxation: THETA,
        min_relaxation: THETA,
        ..ContinuationSchedule::direct()
    }
}

fn ex31_solve(threads: usize, k: usize, m: usize) -> SolutionEstimate {
    let disc = Discretization::new(k, 1.0, m, 1, SEED).unwrap();
    in_pool(threads, || {
        ffbsde::solve_fbsde(&ex31(), &constants(), &disc, &ForwardStart::Point(vec![1.0]), &schedule()).unwrap()
    })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn within(limit: Duration, t: Instant) -> (bool, f64) {
    let s = t.elapsed().as_secs_f64();
    (s <= limit.as_secs_f64(), s)
}

fn oracle_and_contraction() -> (Outcome, Outcome) {
    let oracle = oracle_y0(1.0, 10_000).unwrap();
    let t = Instant::now();
    let sol = ex31_solve(rayon::current_num_threads(), K, M);
    let (fast, secs) = within(Duration::from_secs(60), t);
    let y0 = sol.y0[0];
    let band = (0.02 * oracle.abs()).max(3.0 * sol.y0_stderr[0]);
    let c1 = outcome(
        (y0 - oracle).abs() <= band && fast,
        format!("y0 = {y0:.6}, oracle = {oracle:.6}, |diff| = {:.2e}, band = {band:.2e}, {secs:.1} s", (y0 - oracle).abs()),
    );

    let level = sol.trace.last().unwrap();
    let worst = level.ratios.iter().skip(1).copied().fold(0.0, f64::max);
    let r0 = level.residuals[0];
    let reached = level.residuals.iter().position(|r| *r <= 1e-6 * r0);
    let c2 = outcome(
        worst <= 0.9 && reached.is_some_and(|i| i <= 60),
        format!("max ratio after first = {worst:.3}, R <= 1e-6 R0 at iteration {reached:?}"),
    );
    (c1, c2)
}

fn uniqueness() -> Outcome {
    let disc = Discretization::new(K, 1.0, M, 1, SEED).unwrap();
    let bg = BrownianGrid::generate(&disc, 1).unwrap();
    let start = ForwardStart::Point(vec![1.0]);
    let opts = PicardOptions {
        tol: 1e-20,
        max_iters: 150,
        relaxation: 0.15,
        min_relaxation: 0.15,
        anderson_depth: 5,
    };
    let t = Instant::now();
    let cs = ex31();
    let a = picard_solve(&cs, &disc, &bg, &start, None, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut init = Controls::zeros(M, K, 1, 1);
    init.y.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
    init.z.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
    let b = picard_solve(&cs, &disc, &bg, &start, Some(&init), &opts).unwrap();
    let (fast, secs) = within(Duration::from_secs(120), t);
    let (dx, dy, dz) = (a.x.relative_distance(&b.x), a.y.relative_distance(&b.y), a.z.relative_distance(&b.z));
    outcome(
        dx.max(dy).max(dz) <= 1e-6 && fast,
        format!("relative gaps X {dx:.1e}, Y {dy:.1e}, Z {dz:.1e}, {secs:.1} s"),
    )
}

fn assumption_constants() -> Outcome {
    let t = Instant::now();
    let reports = check_all(&ex31(), &constants(), 10_000, 7, &SamplerConfig::default()).unwrap();
    let (fast, secs) = within(Duration::from_secs(30), t);
    let by = |name: &str| reports.iter().find(|r| r.check == name).unwrap();
    let path = by("path_lipschitz").estimated_constant;
    let u = by("u_lipschitz").estimated_constant;
    let mono = by("monotonicity").violations;
    let g = by("g_monotonicity");
    let pass = path <= 22.0
        && u <= 2.0 * 2f64.sqrt() + 1e-6
        && mono == 0
        && g.violations == 0
        && g.worst_margin >= -1e-10
        && fast;
    outcome(
        pass,
        format!(
            "path {path:.4}, u {u:.6}, monotonicity violations {mono}, g violations {} (worst {:.2e}), {secs:.1} s",
            g.violations, g.worst_margin
        ),
    )
}

fn random_path(rng: &mut ChaCha8Rng, step: f64) -> Path {
    let len = rng.random_range(1..40);
    let values: Vec<f64> = (0..len * 2).map(|_| rng.random_range(-3.0..3.0)).collect();
    Path::new(2, step, values).unwrap()
}

fn metric_and_calculus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let step = 0.01;
    let mut metric_fail = 0;
    for _ in 0..1000 {
        let (a, b, c) = (random_path(&mut rng, step), random_path(&mut rng, step), random_path(&mut rng, step));
        let ab = a.d_infty(&b).unwrap();
        let ba = b.d_infty(&a).unwrap();
        let ac = a.d_infty(&c).unwrap();
        let bc = b.d_infty(&c).unwrap();
        let ok = a.d_infty(&a).unwrap() == 0.0
            && ab == ba
            && (ab > 0.0 || a == b)
            && ac <= ab + bc + 1e-12 * (ab + bc);
        metric_fail += usize::from(!ok);
    }

    let p = Path::scalar(0.1, &[0.4, -1.2, 0.7, 2.1]).unwrap();
    let sq = last_value_squared(0);
    let int = running_integral_functional(0);
    let constant = PathFunctional::scalar(Smoothness::C12, |_: &Path| 3.5);
    // central differences are exact on quadratics, so a wide bump only removes cancellation error
    let eps = Some(0.25);
    let dv = |f: &PathFunctional| vertical_derivative(f, &p, eps).unwrap()[0];
    let d2 = |f: &PathFunctional| second_vertical_derivative(f, &p, eps).unwrap().matrices[0][(0, 0)];
    let dh = |f: &PathFunctional| horizontal_derivative(f, &p, None).unwrap()[0];
    let errs = [
        dv(&sq) - 4.2,
        d2(&sq) - 2.0,
        dh(&sq),
        dv(&int),
        d2(&int),
        dh(&int) - 2.1,
        dv(&constant),
        d2(&constant),
        dh(&constant),
    ];
    let worst = errs.iter().map(|e| e.abs()).fold(0.0, f64::max);
    outcome(
        metric_fail == 0 && worst <= 1e-9,
        format!("metric failures {metric_fail}/1000, worst derivative error {worst:.1e}"),
    )
}

fn ito_formula() -> Outcome {
    let t = Instant::now();
    let ks = [25, 50, 100, 200];
    let bracket = Bracket::brownian(1);
    let sq = ito_convergence_table(&last_value_squared(0), &ks, 1000, 1.0, &[0.0], 3, &bracket).unwrap();
    let int = ito_convergence_table(&running_integral_functional(0), &ks, 1000, 1.0, &[0.0], 3, &bracket).unwrap();
    let (fast, secs) = within(Duration::from_secs(120), t);
    let factors: Vec<f64> = sq.windows(2).map(|w| w[0].rms_residual / w[1].rms_residual).collect();
    let int_max = int.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    outcome(
        factors.iter().all(|f| *f >= 1.2) && int_max <= 1e-12 && fast,
        format!(
            "square rms {:?}, factors {:?}, integral max {int_max:.1e}, {secs:.1} s",
            sq.iter().map(|r| format!("{:.3e}", r.rms_residual)).collect::<Vec<_>>(),
            factors.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn ppde_and_feynman_kac() -> Outcome {
    let t = Instant::now();
    let cs = ex31();
    let lc = lift_coefficients(&cs).unwrap();
    let (u, v) = oracle_functional(10_000).unwrap();
    let step = 1e-4;
    let mut paths = Vec::new();
    for batch in 0..10u64 {
        let len = 500 + 900 * batch as usize;
        let w = sample_paths(10, &[0.0], step, len, 1.0, 100 + batch).unwrap();
        let x = sample_paths(10, &[1.0], step, len, 0.5, 200 + batch).unwrap();
        paths.extend(w.iter().zip(&x).map(|(a, b)| a.join(b).unwrap()));
    }
    let rows = ppde_sweep(&u, &v, &lc, &paths, Some(1e-4), None).unwrap();
    let worst = rows.iter().map(|r| r.residual[0].abs()).fold(0.0, f64::max);

    let disc = Discretization::new(K, 1.0, M, 1, SEED).unwrap();
    let prefix = Path::from_points(disc.step(), &[vec![0.0, 1.0]]).unwrap();
    let lifted = ContinuationSchedule {
        relaxation: THETA / 2.0,
        min_relaxation: THETA / 2.0,
        ..schedule()
    };
    let rep = feynman_kac_check(&u, &cs, &constants(), &prefix, &disc, &lifted).unwrap();
    let (fast, secs) = within(Duration::from_secs(300), t);
    outcome(
        worst <= 1e-3 && rep.passes(0.02) && fast,
        format!(
            "max residual {worst:.2e} over {} paths, FK u = {:.6}, Y = {:.6}, gap {:.2e}, {secs:.1} s",
            rows.len(),
            rep.u_value[0],
            rep.y_value[0],
            rep.gap
        ),
    )
}

fn pure_driver(r: f64) -> CoefficientSet {
    CoefficientSet::builder("pure_driver", Dims::scalar())
        .driver(Arc::new(move |_, u, out| out[0] = -r * u.y[0]))
        .terminal(Arc::new(|x, out| out[0] = x[0]))
        .build()
        .unwrap()
}

fn trivial_problems() -> Outcome {
    let t = Instant::now();
    let disc = Discretization::new(K, 1.0, 2000, 1, SEED).unwrap();
    let x0 = 0.7;
    let id = registry_get("decoupled_identity", &Params::new()).unwrap();
    let sol = ffbsde::solve_fbsde(
        &id,
        &AssumptionConstants::new(1.0, 1.0, 1.0, 1.0),
        &disc,
        &ForwardStart::Point(vec![x0]),
        &ContinuationSchedule::direct(),
    )
    .unwrap();
    let id_err = (sol.y0[0] - x0).abs();

    let r = 0.8;
    let cs = pure_driver(r);
    let bg = BrownianGrid::generate(&disc, 1).unwrap();
    let sol = picard_solve(&cs, &disc, &bg, &ForwardStart::Point(vec![1.0]), None, &PicardOptions::default()).unwrap();
    let exact = (1.0 + r * disc.step()).powi(K as i32);
    let driver_err = (sol.y0[0] - exact).abs();
    let (fast, secs) = within(Duration::from_secs(10), t);
    outcome(
        id_err <= 1e-8 && driver_err <= 1e-10 && fast,
        format!("identity error {id_err:.1e}, driver error {driver_err:.1e}, {secs:.1} s"),
    )
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn determinism() -> Outcome {
    let runs: Vec<_> = [1, 4]
        .into_iter()
        .map(|threads| {
            let sol = ex31_solve(threads, 20, 2000);
            let checks = in_pool(threads, || {
                check_all(&ex31(), &constants(), 500, 7, &SamplerConfig::default()).unwrap()
            });
            let ito = in_pool(threads, || {
                ito_convergence_table(&last_value_squared(0), &[10, 20], 50, 1.0, &[0.0], 3, &Bracket::brownian(1))
                    .unwrap()
            });
            (
                [bits(sol.x.data()), bits(sol.y.data()), bits(sol.z.data())],
                checks
                    .iter()
                    .map(|c| (c.violations, c.estimated_constant.to_bits(), c.worst_margin.to_bits()))
                    .collect::<Vec<_>>(),
                ito.iter().map(|r| r.rms_residual.to_bits()).collect::<Vec<_>>(),
            )
        })
        .collect();
    let same = runs[0] == runs[1];
    outcome(same, format!("1 vs 4 threads: solver, checks and Ito table {}", if same { "bit-identical" } else { "differ" }))
}

/// Runs `f`, turning a panic into a failed outcome.
fn guarded<T>(f: impl FnOnce() -> T, fail: impl FnOnce(String) -> T) -> T {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            let first = msg.lines().next().unwrap_or("").chars().take(200).collect();
            fail(first)
        }
    }
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let (c1, c2) = guarded(oracle_and_contraction, |m| {
        (outcome(false, format!("error: {m}")), outcome(false, format!("error: {m}")))
    });
    let checks: [(usize, &str, fn() -> Outcome); 7] = [
        (3, "uniqueness", uniqueness),
        (4, "assumption constants", assumption_constants),
        (5, "metric and calculus", metric_and_calculus),
        (6, "functional Ito formula", ito_formula),
        (7, "P-PDE residual and Feynman-Kac", ppde_and_feynman_kac),
        (8, "trivial problems", trivial_problems),
        (9, "determinism", determinism),
    ];
    let mut failed = 0;
    let mut report = |i: usize, name: &str, o: Outcome| {
        println!("{} {i} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "oracle equivalence", c1);
    report(2, "contraction", c2);
    for (i, name, f) in checks {
        report(i, name, guarded(f, |m| outcome(false, format!("error: {m}"))));
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
