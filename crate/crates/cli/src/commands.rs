use std::sync::Arc;

use ffbsde::conditions::check_all;
use ffbsde::oracles::{oracle_functional_from, solve_riccati_example31};
use ffbsde::ppde::{
    feynman_kac_check, ito_convergence_table, last_value_squared, lift_coefficients, ppde_sweep,
    running_integral_functional, sample_paths, write_ito_table_csv, write_residual_csv, Bracket,
};
use ffbsde::solver::ForwardStart;
use ffbsde::{Dims, Error, Path, PathFunctional, Smoothness};

use crate::config::{FunctionalKind, Resolved, RunConfig, SmoothnessConfig};
use crate::manifest::RunDir;
use crate::CliError;

pub fn solve(cfg: &RunConfig, r: &Resolved, run: &mut RunDir) -> Result<u8, CliError> {
    let start = ForwardStart::Point(cfg.problem.x0.clone());
    let result = run.timed("solve", || ffbsde::solve_fbsde(&r.cs, &r.constants, &r.disc, &start, &r.schedule));
    let sol = match result {
        Ok(sol) => sol,
        Err(Error::NotConverged { reason, trace }) => {
            run.write("trace.json", |b| Ok(trace.write_json(b)?))?;
            return Err(Error::NotConverged { reason, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    run.write("solution.csv", |b| Ok(sol.write_csv(b)?))?;
    run.write("trace.json", |b| Ok(sol.trace.write_json(b)?))?;
    for (i, (y, se)) in sol.y0.iter().zip(&sol.y0_stderr).enumerate() {
        println!("y0[{i}] = {y:.10} ± {se:.3e}");
    }
    let iters: usize = sol.trace.levels.iter().map(|l| l.inner_iterations).sum();
    println!("levels = {}, inner iterations = {iters}", sol.trace.levels.len());
    Ok(0)
}

pub fn check(cfg: &RunConfig, r: &Resolved, run: &mut RunDir, strict: bool) -> Result<u8, CliError> {
    let c = &cfg.check;
    let reports = run.timed("check", || check_all(&r.cs, &r.constants, c.trials, c.seed, &c.sampler))?;
    run.write("check_report.txt", |b| {
        for rep in &reports {
            b.extend_from_slice(rep.to_text().as_bytes());
            b.push(b'\n');
        }
        Ok(())
    })?;
    run.write("check_report.json", |b| Ok(serde_json::to_writer_pretty(b, &reports)?))?;
    let mut violations = 0;
    for rep in &reports {
        println!(
            "{:<16} violations = {:<6} estimate = {:.6e}  worst margin = {:.3e}",
            rep.check, rep.violations, rep.estimated_constant, rep.worst_margin
        );
        violations += rep.violations;
    }
    Ok(if strict && violations > 0 { 4 } else { 0 })
}

pub fn ppde(cfg: &RunConfig, r: &Resolved, run: &mut RunDir) -> Result<u8, CliError> {
    let p = &cfg.ppde;
    let Dims { n, m, d } = r.cs.dims();
    let smoothness = match p.smoothness {
        SmoothnessConfig::C0 => Smoothness::C0,
        SmoothnessConfig::C12 => Smoothness::C12,
    };
    if smoothness != Smoothness::C12 {
        return Err(Error::SmoothnessRequired.into());
    }
    let (u, v) = match p.functional {
        FunctionalKind::Oracle => {
            if cfg.problem.name != "example31" {
                return Err(CliError::Config("ppde.functional: `oracle` is only defined for example31".into()));
            }
            let sol = Arc::new(run.timed("oracle", || solve_riccati_example31(p.oracle_steps))?);
            run.write("oracle_example31.csv", |b| Ok(sol.write_csv(b)?))?;
            oracle_functional_from(sol)
        }
        FunctionalKind::Constant => {
            let value = p.constant;
            (
                PathFunctional::new(m, smoothness, move |_: &Path| vec![value; m]),
                PathFunctional::new(m * d, smoothness, move |_: &Path| vec![0.0; m * d]),
            )
        }
    };
    let lc = lift_coefficients(&r.cs)?;
    let x0 = &cfg.problem.x0;
    let mut paths = Vec::with_capacity(p.num_paths);
    for i in 0..p.num_paths {
        let len = if p.num_paths == 1 {
            p.min_steps
        } else {
            p.min_steps + (p.max_steps - p.min_steps) * i / (p.num_paths - 1)
        };
        let seed = p.seed.wrapping_add(2 * i as u64);
        let w = sample_paths(1, &vec![0.0; d], p.step, len, 1.0, seed)?;
        let x = sample_paths(1, x0, p.step, len, 0.5, seed + 1)?;
        paths.push(w[0].join(&x[0])?);
    }
    let rows = run.timed("residuals", || ppde_sweep(&u, &v, &lc, &paths, Some(p.eps), None))?;
    run.write("ppde_residuals.csv", |b| Ok(write_residual_csv(&rows, b)?))?;
    let worst = rows
        .iter()
        .flat_map(|row| row.residual.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    let worst_gap = rows.iter().map(|row| row.gap).fold(0.0, f64::max);
    println!("max |residual| = {worst:.3e} over {} paths (tolerance {:.1e})", rows.len(), p.tolerance);
    println!("max consistency gap = {worst_gap:.3e}");
    let mut ok = worst <= p.tolerance;

    if p.feynman_kac {
        let mut start = vec![0.0; d];
        start.extend_from_slice(x0);
        debug_assert_eq!(start.len(), n + d);
        let prefix = Path::from_points(r.disc.step(), &[start])?;
        let mut schedule = r.schedule;
        if let Some(theta) = p.relaxation {
            schedule.relaxation = theta;
            schedule.min_relaxation = theta.min(schedule.min_relaxation);
        }
        let rep = run.timed("feynman_kac", || {
            feynman_kac_check(&u, &r.cs, &r.constants, &prefix, &r.disc, &schedule)
        })?;
        run.write("feynman_kac.json", |b| Ok(serde_json::to_writer_pretty(b, &rep)?))?;
        let pass = rep.passes(0.02);
        println!(
            "feynman-kac: u = {:?}, Y = {:?} ± {:?}, gap = {:.3e} ({})",
            rep.u_value,
            rep.y_value,
            rep.stderr,
            rep.gap,
            if pass { "ok" } else { "too large" }
        );
        ok &= pass;
    }
    Ok(if ok { 0 } else { 1 })
}

pub fn ito_demo(cfg: &RunConfig, run: &mut RunDir) -> Result<u8, CliError> {
    let c = &cfg.ito;
    let bracket = Bracket::brownian(1);
    let table = |f| ito_convergence_table(&f, &c.step_counts, c.num_paths, c.horizon, &[0.0], c.seed, &bracket);
    let square = run.timed("square", || table(last_value_squared(0)))?;
    let integral = run.timed("integral", || table(running_integral_functional(0)))?;
    let tables = [("last_value_squared", square), ("running_integral", integral)];
    run.write("ito_table.csv", |b| Ok(write_ito_table_csv(&tables, b)?))?;
    for (name, rows) in &tables {
        for row in rows {
            println!("{name:<20} K = {:<5} rms = {:.4e}  max = {:.4e}", row.num_steps, row.rms_residual, row.max_residual);
        }
    }
    Ok(0)
}
