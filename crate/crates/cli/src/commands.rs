use std::path::Path;

use kirchhoff_core::energy::energy;
use kirchhoff_core::lattice::lattice_zeta;
use kirchhoff_core::nehari::{NehariOptions, SignChangingOptions};
use kirchhoff_core::solver::{
    ground_state_battery, initial_bump, solve_sign_changing, InitialGuess, Projection, SolveOptions,
};
use kirchhoff_core::Problem;

use crate::config::RunConfig;
use crate::output::{self, num};
use crate::verify;
use crate::{CliError, Status};

pub fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        tol_solve_factor: cfg.tol_solve,
        max_iters: cfg.max_iters,
        nehari: NehariOptions {
            tol: cfg.tol_nehari,
            ..NehariOptions::default()
        },
        sign_changing: SignChangingOptions {
            tol: cfg.tol_nehari,
            ..SignChangingOptions::default()
        },
        ..SolveOptions::default()
    }
}

/// Ground state from a small battery of starts: the configured bump, its
/// negative and a bump twice as wide. The lowest converged level is kept.
pub fn cmd_ground(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<Status, CliError> {
    let hash = cfg.hash();
    let guess = cfg.positive_guess();
    let init = initial_bump(problem.domain(), &guess)?;
    let inits = [
        init.clone(),
        init.scaled(-1.0),
        initial_bump(problem.domain(), &guess.widened(2.0))?,
    ];
    let battery = ground_state_battery(problem, &inits, &solve_options(cfg))?;
    let best = &battery.results[battery.best];
    let report = energy(problem, &best.field)?;

    output::write(out, "ground_solution.txt", &hash, &output::solution_dump(cfg, best))?;
    output::write(out, "ground_history.csv", &hash, &output::history_csv(&best.history))?;
    let levels: Vec<String> = battery.results.iter().map(|r| num(r.j)).collect();
    let body = format!(
        "{},t_u,battery_levels,battery_spread,multimodal\n{},{},{},{},{}\n",
        output::ENERGY_HEADER,
        output::energy_row(&report, best),
        num(best.projection_scalars().0),
        levels.join(";"),
        num(battery.spread),
        battery.multimodal
    );
    output::write(out, "ground_energy.csv", &hash, &body)?;
    println!(
        "ground: J = {} grad_sup = {} (tol {}) iterations = {} converged = {}",
        num(best.j),
        num(best.grad_sup),
        num(best.tol_solve),
        best.iterations,
        best.converged
    );
    if battery.multimodal {
        println!(
            "ground: starts reached distinct levels (relative spread {})",
            num(battery.spread)
        );
    }
    Ok(if best.converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

pub fn cmd_signchanging(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<Status, CliError> {
    let hash = cfg.hash();
    let guess = cfg.dipole_guess();
    let init = initial_bump(problem.domain(), &guess)?;
    let opts = SolveOptions {
        restart_guess: Some(guess.clone()),
        ..solve_options(cfg)
    };
    let result = solve_sign_changing(problem, &init, &opts)?;
    let report = energy(problem, &result.field)?;

    output::write(
        out,
        "signchanging_solution.txt",
        &hash,
        &output::solution_dump(cfg, &result),
    )?;
    output::write(
        out,
        "signchanging_history.csv",
        &hash,
        &output::history_csv(&result.history),
    )?;
    let body = format!("{}\n{}\n", output::ENERGY_HEADER, output::energy_row(&report, &result));
    output::write(out, "signchanging_energy.csv", &hash, &body)?;
    if let Projection::SignChanging(p) = result.projection {
        let width = match guess.widened(opts.restart_widening.powi(result.restarts as i32)) {
            InitialGuess::Dipole { width, .. } | InitialGuess::Positive { width, .. } => width,
        };
        let body = format!(
            "r_u,t_u,phi1,phi2,scale1,scale2,box_lo,box_hi,restart_spread,used_fallback,restarts,init_width\n\
             {},{},{},{},{},{},{},{},{},{},{},{}\n",
            num(p.r_u),
            num(p.t_u),
            num(p.phi1),
            num(p.phi2),
            num(p.scale.0),
            num(p.scale.1),
            num(p.box_range.0),
            num(p.box_range.1),
            num(p.restart_spread),
            p.used_fallback,
            result.restarts,
            num(width)
        );
        output::write(out, "signchanging_projection.csv", &hash, &body)?;
    }
    println!(
        "signchanging: J = {} grad_sup = {} (tol {}) iterations = {} restarts = {} converged = {}",
        num(result.j),
        num(result.grad_sup),
        num(result.tol_solve),
        result.iterations,
        result.restarts,
        result.converged
    );
    Ok(if result.converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

pub fn cmd_verify(cfg: &RunConfig, problem: &Problem, out: &Path) -> Result<Status, CliError> {
    let checks = verify::run_checks(cfg, problem, &solve_options(cfg));
    output::write(out, "verify.csv", &cfg.hash(), &verify::to_csv(&checks))?;
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).collect();
    for c in &failed {
        println!("FAIL {} defect = {}", c.name, num(c.defect));
    }
    println!("verify: {}/{} checks passed", checks.len() - failed.len(), checks.len());
    Ok(if failed.is_empty() {
        Status::Ok
    } else {
        Status::VerificationFailed
    })
}

pub fn cmd_kernel_sum(cfg: &RunConfig, out: &Path) -> Result<Status, CliError> {
    let mut body = String::from("radius,partial_sum,tail_bound,upper\n");
    let mut radius = 1u64;
    while radius <= cfg.kernel_sum_max_radius {
        let z = lattice_zeta(cfg.d, cfg.s, radius)?;
        body.push_str(&format!(
            "{radius},{},{},{}\n",
            num(z.partial_sum),
            num(z.tail_bound),
            num(z.upper())
        ));
        radius *= 2;
    }
    print!("{body}");
    output::write(out, "kernel_sum.csv", &cfg.hash(), &body)?;
    Ok(Status::Ok)
}
