//! The property battery behind `kirchhoff verify`.
//!
//! Each check reduces to one measured defect compared against a threshold.
//! Random inputs come from a ChaCha8 stream seeded by the config, so the
//! report is reproducible byte for byte.

use std::fmt::Write as _;

use kirchhoff_core::energy::{derivative_pairing, energy_value, eps_bound_constant};
use kirchhoff_core::lattice::{lattice_zeta, Kernel};
use kirchhoff_core::nehari::{
    project_nehari_with, project_sign_changing_with, rescale_parts, FiberScalars, NehariOptions, SignChangingOptions,
    SignScalars,
};
use kirchhoff_core::operator::{
    cross_term_k, grad_norm_sq, gradient_form, gradient_pairing, ibp_defect, mixed_scaling_identities, split_signs,
};
use kirchhoff_core::solver::{
    initial_bump, mountain_pass_consistency, solve_ground_state, solve_sign_changing, verify_energy_gap, SolveOptions,
    SolveResult,
};
use kirchhoff_core::{Field, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::output::num;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `defect <= threshold`
    AtMost,
    /// `defect < threshold`
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub defect: f64,
    pub relation: Relation,
    pub threshold: f64,
}

impl Check {
    fn new(name: &'static str, defect: f64, relation: Relation, threshold: f64) -> Self {
        Check {
            name,
            defect,
            relation,
            threshold,
        }
    }

    /// NaN defects (a failed computation) never pass.
    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.defect <= self.threshold,
            Relation::Below => self.defect < self.threshold,
        }
    }
}

pub fn to_csv(checks: &[Check]) -> String {
    let mut out = String::from("check,passed,defect,relation,threshold\n");
    for c in checks {
        let rel = match c.relation {
            Relation::AtMost => "<=",
            Relation::Below => "<",
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            c.name,
            c.passed(),
            num(c.defect),
            rel,
            num(c.threshold)
        )
        .unwrap();
    }
    out
}

fn uniform(pr: &Problem, rng: &mut ChaCha8Rng) -> Field {
    Field::from_fn(pr.domain().clone(), |_| rng.random_range(-1.0..1.0))
}

/// Entries in `±[0.5, 1.5]`, both signs present.
fn away_from_zero(pr: &Problem, rng: &mut ChaCha8Rng) -> Field {
    let mut f = Field::from_fn(pr.domain().clone(), |_| {
        let m = rng.random_range(0.5..1.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    });
    let n = f.len();
    let v = f.values_mut();
    v[0] = v[0].abs();
    v[n - 1] = -v[n - 1].abs();
    f
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    // NaN-propagating maximum
    it.into_iter().fold(f64::NEG_INFINITY, |m, v| {
        if v.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(v)
        }
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn or_nan<T>(r: kirchhoff_core::Result<T>, f: impl FnOnce(T) -> f64) -> f64 {
    r.map(f).unwrap_or(f64::NAN)
}

fn operator_checks(pr: &Problem, rng: &mut ChaCha8Rng, out: &mut Vec<Check>) {
    let k: &Kernel = &pr.kernel;
    let mixed = max_of((0..20).map(|_| {
        let u = uniform(pr, rng);
        let (r, t) = (log_uniform(rng, 0.25, 4.0), log_uniform(rng, 0.25, 4.0));
        or_nan(mixed_scaling_identities(k, &u, r, t), |m| m.max_rel_defect())
    }));
    out.push(Check::new("mixed_scaling_identities", mixed, Relation::AtMost, 1e-12));

    let ibp = max_of((0..20).map(|_| {
        let (u, phi) = (uniform(pr, rng), uniform(pr, rng));
        let scale = gradient_pairing(k, &u, &phi).unwrap().abs()
            + (grad_norm_sq(k, &u).unwrap() * grad_norm_sq(k, &phi).unwrap()).sqrt();
        ibp_defect(k, &u, &phi).unwrap().abs() / scale
    }));
    out.push(Check::new("integration_by_parts", ibp, Relation::AtMost, 1e-12));

    let k_max = max_of((0..100).map(|_| cross_term_k(k, &uniform(pr, rng)).unwrap()));
    out.push(Check::new("cross_term_nonpositive", k_max, Relation::AtMost, 0.0));

    let n = pr.domain().len();
    let dipole = max_of((0..10).map(|_| {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let mut u = Field::zeros(pr.domain().clone());
        u.values_mut()[i] = 1.0;
        u.values_mut()[j] = -1.0;
        let w = k.pair_weight(i, j);
        (cross_term_k(k, &u).unwrap() + 2.0 * w).abs() / (2.0 * w)
    }));
    out.push(Check::new("dipole_cross_term", dipole, Relation::AtMost, 1e-14));

    let pointwise = max_of((0..20).map(|_| {
        let u = uniform(pr, rng);
        let (up, um) = split_signs(&u);
        let g = gradient_form(k, &u, &u).unwrap();
        let gp = gradient_form(k, &up, &up).unwrap();
        let gm = gradient_form(k, &um, &um).unwrap();
        let top = max_of(g.values().iter().copied());
        max_of((0..n).map(|x| gp.values()[x].max(gm.values()[x]) - g.values()[x])) / top
    }));
    out.push(Check::new(
        "sign_parts_pointwise_gradient",
        pointwise,
        Relation::AtMost,
        1e-14,
    ));

    let zeta = lattice_zeta(pr.domain().dim(), pr.kernel.s(), 10_000).unwrap();
    let bound = 2.0 * pr.kernel.c_w() * zeta.upper();
    let ratio = max_of((0..20).map(|_| {
        let u = uniform(pr, rng);
        grad_norm_sq(k, &u).unwrap() / (bound * u.norm_sq())
    }));
    out.push(Check::new("norm_comparison", ratio, Relation::AtMost, 1.0));
}

fn energy_checks(pr: &Problem, rng: &mut ChaCha8Rng, out: &mut Vec<Check>) {
    let h = 1e-5;
    let fd = max_of((0..10).map(|_| {
        let (u, phi) = (away_from_zero(pr, rng), away_from_zero(pr, rng));
        let plus = energy_value(pr, &u.combine(1.0, &phi, h).unwrap()).unwrap();
        let minus = energy_value(pr, &u.combine(1.0, &phi, -h).unwrap()).unwrap();
        rel((plus - minus) / (2.0 * h), derivative_pairing(pr, &u, &phi).unwrap())
    }));
    out.push(Check::new("gradient_finite_difference", fd, Relation::AtMost, 1e-5));

    let (eps, p, q) = (0.25, pr.params.p, pr.params.q);
    let defect = match eps_bound_constant(eps, p, q) {
        Ok(c) => {
            let n = 1_000_000;
            let (lo, hi) = (1e-6f64.ln(), 1e3f64.ln());
            max_of((0..n).map(|i| {
                let t = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
                let lhs = t.powf(p - 1.0) * (2.0 * t.ln()).abs();
                let rhs = eps * t + c * t.powf(q - 1.0);
                (lhs - rhs) / rhs
            }))
        }
        Err(_) => f64::NAN,
    };
    out.push(Check::new("log_growth_bound", defect, Relation::AtMost, 0.0));
}

fn nehari_checks(pr: &Problem, rng: &mut ChaCha8Rng, tol: f64, out: &mut Vec<Check>) {
    let opts = NehariOptions {
        tol,
        ..NehariOptions::default()
    };
    let mut residual = Vec::new();
    let mut equivariance = Vec::new();
    let mut strict = Vec::new();
    let mut unique = Vec::new();
    for _ in 0..10 {
        let u = away_from_zero(pr, rng);
        let Ok(proj) = project_nehari_with(pr, &u, &opts) else {
            residual.push(f64::NAN);
            continue;
        };
        residual.push(proj.residual.abs() / proj.scale);
        for lambda in [0.5, 2.0] {
            equivariance.push(or_nan(project_nehari_with(pr, &u.scaled(lambda), &opts), |pl| {
                rel(pl.t_u * lambda, proj.t_u)
            }));
        }
        let fs = FiberScalars::of(pr, &u.scaled(proj.t_u)).unwrap();
        let top = fs.energy(1.0);
        for t in [0.25, 0.5, 0.9, 1.1, 2.0, 4.0] {
            strict.push((fs.energy(t) - top) / top.abs());
        }
        let base = FiberScalars::of(pr, &u).unwrap();
        let changes = base.count_sign_changes(proj.t_u / 64.0, proj.t_u * 64.0, 256);
        unique.push((changes as f64 - 1.0).abs());
    }
    out.push(Check::new("nehari_residual", max_of(residual), Relation::AtMost, tol));
    out.push(Check::new(
        "nehari_scale_equivariance",
        max_of(equivariance),
        Relation::AtMost,
        1e-8,
    ));
    out.push(Check::new(
        "nehari_strict_maximum",
        max_of(strict),
        Relation::Below,
        0.0,
    ));
    out.push(Check::new(
        "nehari_unique_sign_change",
        max_of(unique),
        Relation::AtMost,
        0.0,
    ));
}

fn sign_changing_checks(pr: &Problem, rng: &mut ChaCha8Rng, tol: f64, out: &mut Vec<Check>) {
    let opts = SignChangingOptions {
        tol,
        ..SignChangingOptions::default()
    };
    let mut residual = Vec::new();
    let mut spread = Vec::new();
    let mut strict = Vec::new();
    let mut upscaled = Vec::new();
    let grid: Vec<f64> = (0..8).map(|k| 0.25 * 16f64.powf(k as f64 / 7.0)).collect();
    for _ in 0..10 {
        let u = away_from_zero(pr, rng);
        let Ok(proj) = project_sign_changing_with(pr, &u, &opts) else {
            residual.push(f64::NAN);
            continue;
        };
        let sc = SignScalars::of(pr, &u).unwrap();
        let scale = (proj.r_u * proj.r_u * sc.h_plus).max(proj.t_u * proj.t_u * sc.h_minus);
        residual.push(proj.phi1.abs().max(proj.phi2.abs()) / scale);
        spread.push(proj.restart_spread);
        let member = rescale_parts(&u, proj.r_u, proj.t_u);
        let ms = SignScalars::of(pr, &member).unwrap();
        let top = ms.energy(1.0, 1.0);
        for &r in &grid {
            for &t in &grid {
                strict.push((ms.energy(r, t) - top) / top.abs());
            }
        }
        upscaled.push(or_nan(
            project_sign_changing_with(pr, &member.scaled(1.2), &opts),
            |p| p.r_u.max(p.t_u) - 1.0,
        ));
    }
    out.push(Check::new(
        "sign_changing_residual",
        max_of(residual),
        Relation::AtMost,
        1e-8,
    ));
    out.push(Check::new(
        "sign_changing_restart_agreement",
        max_of(spread),
        Relation::AtMost,
        1e-6,
    ));
    out.push(Check::new(
        "sign_changing_strict_maximum",
        max_of(strict),
        Relation::Below,
        0.0,
    ));
    out.push(Check::new(
        "sign_changing_upscaled_bound",
        max_of(upscaled),
        Relation::AtMost,
        1e-8,
    ));
}

fn converged_ratio(r: &Option<SolveResult>) -> f64 {
    match r {
        Some(r) if r.converged => r.grad_sup / r.tol_solve,
        _ => f64::NAN,
    }
}

fn solver_checks(cfg: &RunConfig, pr: &Problem, rng: &mut ChaCha8Rng, opts: &SolveOptions, out: &mut Vec<Check>) {
    let ground = initial_bump(pr.domain(), &cfg.positive_guess())
        .and_then(|init| solve_ground_state(pr, &init, opts))
        .ok();
    let guess = cfg.dipole_guess();
    let sc_opts = SolveOptions {
        restart_guess: Some(guess.clone()),
        ..opts.clone()
    };
    let sign_changing = initial_bump(pr.domain(), &guess)
        .and_then(|init| solve_sign_changing(pr, &init, &sc_opts))
        .ok();
    out.push(Check::new(
        "ground_state_converged",
        converged_ratio(&ground),
        Relation::AtMost,
        1.0,
    ));
    out.push(Check::new(
        "sign_changing_converged",
        converged_ratio(&sign_changing),
        Relation::AtMost,
        1.0,
    ));

    let (mut gap, mut chain, mut parts, mut pass) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if let (Some(u), Some(v)) = (&ground, &sign_changing) {
        if let Ok(g) = verify_energy_gap(pr, u, v) {
            let ju = u.j.abs();
            gap = -g.gap / ju;
            chain = (g.j_plus + g.j_minus - v.j) / v.j.abs();
            parts = (2.0 * u.j - 2e-6 * ju - (g.j_plus + g.j_minus)) / ju;
        }
        let trials: Vec<Field> = (0..5).map(|_| away_from_zero(pr, rng)).collect();
        pass = or_nan(mountain_pass_consistency(pr, u, &trials, 256), |mp| {
            (u.j - mp.level) / u.j.abs()
        });
    }
    out.push(Check::new("energy_gap", gap, Relation::Below, 0.0));
    out.push(Check::new("energy_gap_decomposition", chain, Relation::Below, 0.0));
    out.push(Check::new("energy_gap_part_levels", parts, Relation::AtMost, 0.0));
    out.push(Check::new("mountain_pass_lower_bound", pass, Relation::AtMost, 1e-6));
}

pub fn run_checks(cfg: &RunConfig, pr: &Problem, opts: &SolveOptions) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    operator_checks(pr, &mut rng, &mut out);
    energy_checks(pr, &mut rng, &mut out);
    if pr.params.require_ground().is_ok() {
        nehari_checks(pr, &mut rng, cfg.tol_nehari, &mut out);
    }
    if pr.params.require_sign_changing().is_ok() {
        sign_changing_checks(pr, &mut rng, cfg.tol_nehari, &mut out);
        solver_checks(cfg, pr, &mut rng, opts, &mut out);
    }
    out
}
