//! Constrained descent for ground states on the Nehari manifold and for
//! sign-changing solutions on the sign-changing Nehari set, plus the
//! energy-gap and mountain-pass consistency checks built on them.

use std::sync::Arc;

use log::warn;

use crate::energy::{energy_gradient, energy_value, Problem};
use crate::error::{contract, Error, Result};
use crate::field::Field;
use crate::lattice::{graph_distance, LatticeDomain};
use crate::nehari::{
    project_fiber, project_pair, rescale_parts, FiberScalars, NehariOptions, NehariProjection, SignChangingOptions,
    SignChangingProjection, SignScalars,
};
use crate::operator::split_signs;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// `exp(-|x - c|₁² / width²)`
    Positive { width: f64, center: Vec<i64> },
    /// Positive bump at `plus` minus a bump at `minus`.
    Dipole {
        width: f64,
        plus: Vec<i64>,
        minus: Vec<i64>,
    },
}

impl InitialGuess {
    /// The same guess with its width multiplied by `factor`.
    pub fn widened(&self, factor: f64) -> InitialGuess {
        match self.clone() {
            InitialGuess::Positive { width, center } => InitialGuess::Positive {
                width: width * factor,
                center,
            },
            InitialGuess::Dipole { width, plus, minus } => InitialGuess::Dipole {
                width: width * factor,
                plus,
                minus,
            },
        }
    }
}

fn bump(domain: &Arc<LatticeDomain>, width: f64, center: &[i64]) -> Result<Field> {
    if !domain.contains(center) {
        return Err(contract(format!("bump center {center:?} is outside the box")));
    }
    let mut f = Field::zeros(domain.clone());
    for (v, x) in f.values_mut().iter_mut().zip(domain.vertices()) {
        let r = graph_distance(x, center)? as f64;
        *v = (-(r * r) / (width * width)).exp();
    }
    Ok(f)
}

pub fn initial_bump(domain: &Arc<LatticeDomain>, guess: &InitialGuess) -> Result<Field> {
    match guess {
        InitialGuess::Positive { width, center } => {
            if !(*width > 0.0) {
                return Err(contract("bump width must be positive"));
            }
            bump(domain, *width, center)
        }
        InitialGuess::Dipole { width, plus, minus } => {
            if !(*width > 0.0) {
                return Err(contract("bump width must be positive"));
            }
            if plus == minus {
                return Err(contract("dipole centers must be distinct"));
            }
            bump(domain, *width, plus)?.combine(1.0, &bump(domain, *width, minus)?, -1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// `tol_solve = factor · (1 + ‖u‖_∞^{p-1})`.
    pub tol_solve_factor: f64,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Trial steps start at `min(initial_step, growth · last accepted step)`.
    pub step_growth: f64,
    pub stall_window: usize,
    pub stall_rel: f64,
    pub nehari: NehariOptions,
    pub sign_changing: SignChangingOptions,
    /// Dipole used to restart the sign-changing descent after sign loss.
    pub restart_guess: Option<InitialGuess>,
    pub restart_widening: f64,
    pub max_restarts: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_solve_factor: 1e-6,
            max_iters: 50_000,
            armijo_c1: 1e-4,
            initial_step: 1.0,
            backtrack: 0.5,
            max_backtracks: 60,
            step_growth: 2.0,
            stall_window: 10,
            stall_rel: 1e-12,
            nehari: NehariOptions::default(),
            sign_changing: SignChangingOptions::default(),
            restart_guess: None,
            restart_widening: 1.5,
            max_restarts: 3,
        }
    }
}

impl SolveOptions {
    pub fn tol_solve(&self, u: &Field, p: f64) -> f64 {
        self.tol_solve_factor * (1.0 + u.norm_inf().powf(p - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Nehari(NehariProjection),
    SignChanging(SignChangingProjection),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub j: f64,
    pub grad_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub field: Field,
    pub j: f64,
    pub grad_sup: f64,
    pub tol_solve: f64,
    /// Projection of the final iterate (scalars ≈ 1 when converged).
    pub projection: Projection,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<HistoryEntry>,
    pub restarts: usize,
    /// `⟨J'(u), u⟩`.
    pub nehari_residual: f64,
}

impl SolveResult {
    /// `(t_u)` or `(r_u, t_u)` of the final iterate as a pair.
    pub fn projection_scalars(&self) -> (f64, f64) {
        match self.projection {
            Projection::Nehari(p) => (p.t_u, p.t_u),
            Projection::SignChanging(p) => (p.r_u, p.t_u),
        }
    }
}

enum Trial {
    Accepted(Field, f64, Projection),
    /// Projection undefined (a sign vanished).
    SignLost,
}

/// Constraint-specific pieces of the descent loop.
trait Constraint {
    fn project(&self, problem: &Problem, u: &Field) -> Result<Trial>;
}

struct NehariConstraint(NehariOptions);

impl Constraint for NehariConstraint {
    fn project(&self, problem: &Problem, u: &Field) -> Result<Trial> {
        if u.is_zero() {
            return Ok(Trial::SignLost);
        }
        let fs = FiberScalars::of(problem, u)?;
        let proj = project_fiber(&fs, &self.0)?;
        let v = u.scaled(proj.t_u);
        let j = energy_value(problem, &v)?;
        Ok(Trial::Accepted(v, j, Projection::Nehari(proj)))
    }
}

struct SignChangingConstraint(SignChangingOptions);

impl Constraint for SignChangingConstraint {
    fn project(&self, problem: &Problem, u: &Field) -> Result<Trial> {
        if !u.has_positive() || !u.has_negative() {
            return Ok(Trial::SignLost);
        }
        let sc = SignScalars::of(problem, u)?;
        let proj = project_pair(&sc, &self.0)?;
        let v = rescale_parts(u, proj.r_u, proj.t_u);
        let j = energy_value(problem, &v)?;
        Ok(Trial::Accepted(v, j, Projection::SignChanging(proj)))
    }
}

enum Outcome {
    Done(SolveResult),
    SignLoss { iterations: usize },
}

fn descend(problem: &Problem, init: &Field, opts: &SolveOptions, constraint: &dyn Constraint) -> Result<Outcome> {
    let p = problem.params.p;
    let (mut u, mut j, mut proj) = match constraint.project(problem, init)? {
        Trial::Accepted(u, j, proj) => (u, j, proj),
        Trial::SignLost => return Ok(Outcome::SignLoss { iterations: 0 }),
    };
    let mut history = Vec::new();
    let mut step = opts.initial_step;
    let mut converged = false;
    let mut iteration = 0;
    let (grad_sup, tol) = loop {
        let g = energy_gradient(problem, &u)?;
        let grad_sup = g.norm_inf();
        let tol = opts.tol_solve(&u, p);
        history.push(HistoryEntry { iteration, j, grad_sup });
        let stalled = history.len() > opts.stall_window && {
            let old = history[history.len() - 1 - opts.stall_window].j;
            (old - j).abs() <= opts.stall_rel * j.abs()
        };
        if grad_sup <= tol && stalled {
            converged = true;
            break (grad_sup, tol);
        }
        if iteration >= opts.max_iters {
            break (grad_sup, tol);
        }
        let g_sq = g.norm_sq();
        let mut eta = opts.initial_step.min(opts.step_growth * step);
        let mut accepted = None;
        let mut lost = 0;
        for _ in 0..=opts.max_backtracks {
            let w = u.combine(1.0, &g, -eta)?;
            match constraint.project(problem, &w)? {
                Trial::Accepted(v, jv, pv) if jv <= j - opts.armijo_c1 * eta * g_sq => {
                    accepted = Some((v, jv, pv));
                    break;
                }
                Trial::Accepted(..) => {}
                Trial::SignLost => lost += 1,
            }
            eta *= opts.backtrack;
        }
        iteration += 1;
        match accepted {
            Some((v, jv, pv)) => {
                u = v;
                j = jv;
                proj = pv;
                step = eta;
            }
            None if lost > opts.max_backtracks / 2 => return Ok(Outcome::SignLoss { iterations: iteration }),
            None => {
                // no decrease is resolvable in floating point: u is as good as it gets
                converged = grad_sup <= tol;
                break (grad_sup, tol);
            }
        }
    };
    // final projection scalars of the returned iterate
    let final_proj = match constraint.project(problem, &u)? {
        Trial::Accepted(_, _, pv) => pv,
        Trial::SignLost => proj,
    };
    let nehari_residual = crate::energy::derivative_pairing(problem, &u, &u)?;
    Ok(Outcome::Done(SolveResult {
        field: u,
        j,
        grad_sup,
        tol_solve: tol,
        projection: final_proj,
        iterations: iteration,
        converged,
        history,
        restarts: 0,
        nehari_residual,
    }))
}

/// Ground state by Nehari-constrained descent: `u ← t_{u-ηg}(u - ηg)` with
/// Armijo backtracking on `J`.
pub fn solve_ground_state(problem: &Problem, init: &Field, opts: &SolveOptions) -> Result<SolveResult> {
    problem.params.require_ground()?;
    init.check_domain(problem.domain())?;
    if init.is_zero() {
        return Err(contract("initial field must be nonzero"));
    }
    match descend(problem, init, opts, &NehariConstraint(opts.nehari))? {
        Outcome::Done(r) => Ok(r),
        Outcome::SignLoss { .. } => Err(Error::Numerical("Nehari descent reached the zero field".into())),
    }
}

/// Sign-changing solution by descent on `{u : u^± ≠ 0, ⟨J'(u), u^±⟩ = 0}`.
///
/// A descent step that cannot keep both signs triggers a restart from
/// `opts.restart_guess` widened by `opts.restart_widening` per restart.
pub fn solve_sign_changing(problem: &Problem, init: &Field, opts: &SolveOptions) -> Result<SolveResult> {
    problem.params.require_sign_changing()?;
    init.check_domain(problem.domain())?;
    if !init.has_positive() || !init.has_negative() {
        return Err(contract("initial field must change sign"));
    }
    let constraint = SignChangingConstraint(opts.sign_changing);
    let mut start = init.clone();
    let mut guess = opts.restart_guess.clone();
    for restarts in 0..=opts.max_restarts {
        match descend(problem, &start, opts, &constraint)? {
            Outcome::Done(mut r) => {
                r.restarts = restarts;
                return Ok(r);
            }
            Outcome::SignLoss { iterations } => {
                warn!("sign-changing descent lost a sign after {iterations} iterations (restart {restarts})");
                match &guess {
                    Some(g) if restarts < opts.max_restarts => {
                        let wider = g.widened(opts.restart_widening);
                        start = initial_bump(problem.domain(), &wider)?;
                        guess = Some(wider);
                    }
                    _ => return Err(Error::SignLoss { restarts }),
                }
            }
        }
    }
    Err(Error::SignLoss {
        restarts: opts.max_restarts,
    })
}

/// Ground-state runs from several initial fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    pub results: Vec<SolveResult>,
    /// Index of the lowest converged level (lowest level if none converged).
    pub best: usize,
    /// `(max J - min J) / |min J|` over the converged runs.
    pub spread: f64,
    /// Converged runs reached levels further apart than `MULTIMODAL_REL`.
    pub multimodal: bool,
}

pub const MULTIMODAL_REL: f64 = 1e-8;

/// Runs the ground-state descent from every field in `inits` and reports
/// the lowest level; distinct levels are flagged, not resolved.
pub fn ground_state_battery(problem: &Problem, inits: &[Field], opts: &SolveOptions) -> Result<Battery> {
    if inits.is_empty() {
        return Err(contract("battery needs at least one initial field"));
    }
    let results = inits
        .iter()
        .map(|f| solve_ground_state(problem, f, opts))
        .collect::<Result<Vec<_>>>()?;
    let any_converged = results.iter().any(|r| r.converged);
    let pool = || {
        results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.converged || !any_converged)
    };
    let best = pool()
        .min_by(|a, b| a.1.j.total_cmp(&b.1.j))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (lo, hi) = results
        .iter()
        .filter(|r| r.converged)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.j), hi.max(r.j))
        });
    let spread = if hi >= lo { (hi - lo) / lo.abs() } else { 0.0 };
    Ok(Battery {
        multimodal: spread > MULTIMODAL_REL,
        results,
        best,
        spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGap {
    /// `J(v) - 2J(u)`
    pub gap: f64,
    pub holds: bool,
    /// `J(r_v v⁺)` with `r_v` the Nehari projection of `v⁺`.
    pub j_plus: f64,
    pub j_minus: f64,
    pub r_v: f64,
    pub t_v: f64,
}

pub fn verify_energy_gap(problem: &Problem, ground: &SolveResult, sign_changing: &SolveResult) -> Result<EnergyGap> {
    if !ground.converged || !sign_changing.converged {
        return Err(contract("energy gap needs two converged solutions"));
    }
    ground.field.check_domain(problem.domain())?;
    sign_changing.field.check_domain(problem.domain())?;
    let (vp, vm) = split_signs(&sign_changing.field);
    let opts = NehariOptions::default();
    let pp = project_fiber(&FiberScalars::of(problem, &vp)?, &opts)?;
    let pm = project_fiber(&FiberScalars::of(problem, &vm)?, &opts)?;
    let gap = sign_changing.j - 2.0 * ground.j;
    Ok(EnergyGap {
        gap,
        holds: gap > 0.0,
        j_plus: pp.j_at_t,
        j_minus: pm.j_at_t,
        r_v: pp.t_u,
        t_v: pm.t_u,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MountainPass {
    /// Minimum over trials of the path maximum.
    pub level: f64,
    pub maxima: Vec<f64>,
    pub skipped: usize,
}

/// For each trial `w`, the maximum of `J` along the segment `t ↦ t·t₀·w`,
/// `t ∈ [0, 1]` on `grid` points, where `t₀ = 2^k` is the first power with
/// `J(t₀ w) < 0`. Trials without such a `t₀ ≤ 2^40` are skipped.
pub fn mountain_pass_consistency(
    problem: &Problem,
    u: &SolveResult,
    trials: &[Field],
    grid: usize,
) -> Result<MountainPass> {
    if !u.converged {
        return Err(contract("mountain-pass check needs a converged solution"));
    }
    if grid < 2 {
        return Err(contract("mountain-pass grid needs at least two points"));
    }
    let mut maxima = Vec::new();
    let mut skipped = 0;
    for (i, w) in trials.iter().enumerate() {
        if w.is_zero() {
            warn!("mountain-pass trial {i} is zero; skipped");
            skipped += 1;
            continue;
        }
        let fs = FiberScalars::of(problem, w)?;
        let Some(t0) = (0..=40).map(|k| 2f64.powi(k)).find(|&t| fs.energy(t) < 0.0) else {
            warn!("mountain-pass trial {i}: no negative level up to 2^40; skipped");
            skipped += 1;
            continue;
        };
        let peak = (0..grid)
            .map(|k| fs.energy(t0 * k as f64 / (grid - 1) as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        maxima.push(peak);
    }
    let level = maxima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MountainPass { level, maxima, skipped })
}
