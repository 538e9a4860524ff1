//! Fibering maps and projections onto the Nehari manifold
//! `N = {u ≠ 0 : ⟨J'(u), u⟩ = 0}` and the sign-changing Nehari set
//! `M = {u : u^± ≠ 0, ⟨J'(u), u⁺⟩ = ⟨J'(u), u⁻⟩ = 0}`.
//!
//! Both projections work on a handful of precomputed scalars of `u`, so
//! each root-finding step is O(1) after one O(N²) pass over the kernel.

use crate::energy::{log_density, log_sq, quadratic_parts, Problem};
use crate::error::{contract, Error, Result};
use crate::field::Field;
use crate::operator::{sign_split_sums, split_signs, sum_with};

/// `t^p log t²`, with the value 0 at `t = 0`.
fn tp_log(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.powf(p) * log_sq(t)
    }
}

/// Scalars of `u` that determine the whole fiber `t ↦ J(tu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberScalars {
    pub hnorm_sq: f64,
    pub grad_sq: f64,
    pub lp: f64,
    pub log_term: f64,
    b: f64,
    p: f64,
}

impl FiberScalars {
    pub fn of(problem: &Problem, u: &Field) -> Result<Self> {
        u.check_domain(problem.domain())?;
        if u.is_zero() {
            return Err(contract("fiber of the zero field is degenerate"));
        }
        let p = problem.params.p;
        let policy = problem.kernel.policy();
        let q = quadratic_parts(problem, u)?;
        Ok(FiberScalars {
            hnorm_sq: q.hnorm_sq,
            grad_sq: q.grad_sq,
            lp: sum_with(policy, u.values().iter().map(|v| v.abs().powf(p))),
            log_term: sum_with(policy, u.values().iter().map(|&v| log_density(v, p))),
            b: problem.params.b,
            p,
        })
    }

    /// `J(tu) = (t²/2)‖u‖² + (bt⁴/4)A² − (t^p/p²)[(p log t² − 2)Σ|u|^p + pΣ|u|^p log u²]`.
    pub fn energy(&self, t: f64) -> f64 {
        let p = self.p;
        let tp = t.powf(p);
        0.5 * t * t * self.hnorm_sq + 0.25 * self.b * t.powi(4) * self.grad_sq * self.grad_sq
            - (p * tp_log(t, p) - 2.0 * tp) * self.lp / (p * p)
            - tp * self.log_term / p
    }

    /// `G(t) = ⟨J'(tu), tu⟩ = t²‖u‖² + bt⁴A² − t^p Σ|u|^p log u² − t^p log t² Σ|u|^p`.
    pub fn derivative(&self, t: f64) -> f64 {
        let p = self.p;
        t * t * self.hnorm_sq + self.b * t.powi(4) * self.grad_sq * self.grad_sq
            - t.powf(p) * self.log_term
            - tp_log(t, p) * self.lp
    }

    /// `dG/dt`.
    pub fn derivative_slope(&self, t: f64) -> f64 {
        let p = self.p;
        let tp1 = t.powf(p - 1.0);
        2.0 * t * self.hnorm_sq + 4.0 * self.b * t.powi(3) * self.grad_sq * self.grad_sq
            - p * tp1 * self.log_term
            - (p * tp1 * log_sq(t) + 2.0 * tp1) * self.lp
    }

    /// Magnitude of the largest term of `G(t)`; tolerances are relative to it.
    pub fn derivative_scale(&self, t: f64) -> f64 {
        let p = self.p;
        (t * t * self.hnorm_sq)
            .max(self.b * t.powi(4) * self.grad_sq * self.grad_sq)
            .max(t.powf(p) * self.log_term.abs())
            .max(tp_log(t, p).abs() * self.lp)
    }

    /// Sign changes of `G` on `n` log-spaced points of `[lo, hi]`.
    pub fn count_sign_changes(&self, lo: f64, hi: f64, n: usize) -> usize {
        let (a, b) = (lo.ln(), hi.ln());
        let mut last = 0.0f64;
        let mut changes = 0;
        for i in 0..n {
            let t = (a + (b - a) * i as f64 / (n - 1) as f64).exp();
            let g = self.derivative(t);
            if g != 0.0 {
                if last != 0.0 && (g > 0.0) != (last > 0.0) {
                    changes += 1;
                }
                last = g;
            }
        }
        changes
    }
}

/// `J(tu)` from the closed-form fiber expansion.
pub fn fiber_energy(problem: &Problem, u: &Field, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(contract("fiber_energy requires t >= 0"));
    }
    Ok(FiberScalars::of(problem, u)?.energy(t))
}

/// `G(t) = ⟨J'(tu), tu⟩`; `d/dt J(tu) = G(t)/t`.
pub fn fiber_derivative(problem: &Problem, u: &Field, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(contract("fiber_derivative requires t > 0"));
    }
    Ok(FiberScalars::of(problem, u)?.derivative(t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NehariOptions {
    /// `|G(t_u)| <= tol · scale`.
    pub tol: f64,
    pub max_doublings: usize,
    pub max_iters: usize,
    /// Points of the log grid used to confirm a single sign change.
    pub scan_points: usize,
}

impl Default for NehariOptions {
    fn default() -> Self {
        NehariOptions {
            tol: 1e-10,
            max_doublings: 200,
            max_iters: 200,
            scan_points: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NehariProjection {
    pub t_u: f64,
    pub j_at_t: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `G(t_u) = ⟨J'(t_u u), t_u u⟩`.
    pub residual: f64,
    /// Largest term of `G(t_u)`.
    pub scale: f64,
}

pub fn project_nehari(problem: &Problem, u: &Field) -> Result<NehariProjection> {
    project_nehari_with(problem, u, &NehariOptions::default())
}

pub fn project_nehari_with(problem: &Problem, u: &Field, opts: &NehariOptions) -> Result<NehariProjection> {
    problem.params.require_ground()?;
    let fs = FiberScalars::of(problem, u)?;
    project_fiber(&fs, opts)
}

/// Unique positive zero of `G` for precomputed fiber scalars.
pub fn project_fiber(fs: &FiberScalars, opts: &NehariOptions) -> Result<NehariProjection> {
    let mut steps = 0;
    let mut lo = 1.0;
    while !(fs.derivative(lo) > 0.0) {
        lo *= 0.5;
        steps += 1;
        if steps > opts.max_doublings || lo == 0.0 {
            return Err(Error::Numerical("Nehari bracket: G(t) never turned positive".into()));
        }
    }
    let mut hi = 1.0;
    while !(fs.derivative(hi) < 0.0) {
        hi *= 2.0;
        steps += 1;
        if steps > 2 * opts.max_doublings || !hi.is_finite() {
            return Err(Error::Numerical("Nehari bracket: G(t) never turned negative".into()));
        }
    }
    let bracket = (lo, hi);
    let changes = fs.count_sign_changes(lo, hi, opts.scan_points);
    if changes != 1 {
        return Err(Error::Numerical(format!(
            "G has {changes} sign changes on the Nehari bracket [{lo}, {hi}]"
        )));
    }

    let mut t = 1.0f64.clamp(lo, hi);
    for it in 0..opts.max_iters {
        let g = fs.derivative(t);
        let scale = fs.derivative_scale(t);
        if g.abs() <= opts.tol * scale || hi - lo <= 4.0 * f64::EPSILON * hi {
            if g.abs() > opts.tol * scale {
                break;
            }
            return Ok(NehariProjection {
                t_u: t,
                j_at_t: fs.energy(t),
                bracket,
                iterations: it,
                residual: g,
                scale,
            });
        }
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = fs.derivative_slope(t);
        let newton = t - g / slope;
        t = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            (lo * hi).sqrt()
        };
    }
    Err(Error::Numerical(format!(
        "Nehari projection did not reach tolerance {} within {} iterations",
        opts.tol, opts.max_iters
    )))
}

/// Scalars of the sign split of `u` that determine `J(ru⁺ + tu⁻)` and
/// `φ₁, φ₂` in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignScalars {
    /// `‖u⁺‖²_{H^{s,2}}`
    pub h_plus: f64,
    pub h_minus: f64,
    /// `Σ|∇^s u⁺|²`
    pub a_plus: f64,
    pub a_minus: f64,
    pub k: f64,
    pub lp_plus: f64,
    pub lp_minus: f64,
    pub log_plus: f64,
    pub log_minus: f64,
    a: f64,
    b: f64,
    p: f64,
}

impl SignScalars {
    pub fn of(problem: &Problem, u: &Field) -> Result<Self> {
        u.check_domain(problem.domain())?;
        if !u.has_positive() || !u.has_negative() {
            return Err(contract("sign-changing projection needs u⁺ ≠ 0 and u⁻ ≠ 0"));
        }
        let crate::energy::ModelParams { a, b, p, .. } = problem.params;
        let policy = problem.kernel.policy();
        let sums = sign_split_sums(&problem.kernel, u)?;
        let h = problem.potential.values();
        let pot = |sel: fn(f64) -> f64| sum_with(policy, u.values().iter().zip(h).map(|(&v, hx)| hx * sel(v) * sel(v)));
        let lp = |sel: fn(f64) -> f64| sum_with(policy, u.values().iter().map(|&v| sel(v).abs().powf(p)));
        let lg = |sel: fn(f64) -> f64| sum_with(policy, u.values().iter().map(|&v| log_density(sel(v), p)));
        let plus: fn(f64) -> f64 = |v| v.max(0.0);
        let minus: fn(f64) -> f64 = |v| v.min(0.0);
        Ok(SignScalars {
            h_plus: a * sums.grad_plus + pot(plus),
            h_minus: a * sums.grad_minus + pot(minus),
            a_plus: sums.grad_plus,
            a_minus: sums.grad_minus,
            k: sums.k,
            lp_plus: lp(plus),
            lp_minus: lp(minus),
            log_plus: lg(plus),
            log_minus: lg(minus),
            a,
            b,
            p,
        })
    }

    /// `(φ₁, φ₂)(r, t) = (⟨J'(w), ru⁺⟩, ⟨J'(w), tu⁻⟩)` with `w = ru⁺ + tu⁻`.
    pub fn phi(&self, r: f64, t: f64) -> (f64, f64) {
        let terms = self.phi_terms(r, t);
        (terms.0.iter().sum(), terms.1.iter().sum())
    }

    /// Largest term magnitude of each of `φ₁, φ₂`.
    pub fn phi_scale(&self, r: f64, t: f64) -> (f64, f64) {
        let (t1, t2) = self.phi_terms(r, t);
        let m = |ts: [f64; 9]| ts.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (m(t1), m(t2))
    }

    fn phi_terms(&self, r: f64, t: f64) -> ([f64; 9], [f64; 9]) {
        let SignScalars {
            h_plus,
            h_minus,
            a_plus,
            a_minus,
            k,
            a,
            b,
            p,
            ..
        } = *self;
        let rt = r * t;
        let common = [
            -0.5 * a * rt * k,
            0.5 * b * rt * rt * k * k,
            b * rt * rt * a_plus * a_minus,
            -0.5 * b * rt * k * (r * r * a_plus + t * t * a_minus),
        ];
        let rp = r.powf(p);
        let tp = t.powf(p);
        let phi1 = [
            r * r * h_plus,
            b * r.powi(4) * a_plus * a_plus,
            -rp * self.log_plus,
            -tp_log(r, p) * self.lp_plus,
            common[0],
            common[1],
            common[2],
            common[3],
            -b * r.powi(3) * t * k * a_plus,
        ];
        let phi2 = [
            t * t * h_minus,
            b * t.powi(4) * a_minus * a_minus,
            -tp * self.log_minus,
            -tp_log(t, p) * self.lp_minus,
            common[0],
            common[1],
            common[2],
            common[3],
            -b * r * t.powi(3) * k * a_minus,
        ];
        (phi1, phi2)
    }

    /// `J(ru⁺ + tu⁻)` in closed form.
    pub fn energy(&self, r: f64, t: f64) -> f64 {
        let SignScalars {
            h_plus,
            h_minus,
            a_plus,
            a_minus,
            k,
            a,
            b,
            p,
            ..
        } = *self;
        let hn = r * r * h_plus + t * t * h_minus - a * r * t * k;
        let gs = r * r * a_plus + t * t * a_minus - r * t * k;
        let (rp, tp) = (r.powf(p), t.powf(p));
        let lp = rp * self.lp_plus + tp * self.lp_minus;
        let lg = rp * self.log_plus + tp_log(r, p) * self.lp_plus + tp * self.log_minus + tp_log(t, p) * self.lp_minus;
        0.5 * hn + 0.25 * b * gs * gs + 2.0 / (p * p) * lp - lg / p
    }

    /// Fiber scalars of `u⁺` alone.
    pub fn plus_fiber(&self) -> FiberScalars {
        FiberScalars {
            hnorm_sq: self.h_plus,
            grad_sq: self.a_plus,
            lp: self.lp_plus,
            log_term: self.log_plus,
            b: self.b,
            p: self.p,
        }
    }

    /// Fiber scalars of `u⁻` alone.
    pub fn minus_fiber(&self) -> FiberScalars {
        FiberScalars {
            hnorm_sq: self.h_minus,
            grad_sq: self.a_minus,
            lp: self.lp_minus,
            log_term: self.log_minus,
            b: self.b,
            p: self.p,
        }
    }
}

/// `(φ₁, φ₂)(r, t)` from the closed forms.
pub fn phi_pair(problem: &Problem, u: &Field, r: f64, t: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && t > 0.0) {
        return Err(contract("phi_pair requires r, t > 0"));
    }
    Ok(SignScalars::of(problem, u)?.phi(r, t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignChangingOptions {
    /// `|φ_i| <= tol · scale_i` at the returned pair.
    pub tol: f64,
    pub max_doublings: usize,
    pub max_newton: usize,
    /// Restart from the four box corners and require agreement.
    pub check_uniqueness: bool,
    pub restart_agreement: f64,
}

impl Default for SignChangingOptions {
    fn default() -> Self {
        SignChangingOptions {
            tol: 1e-10,
            max_doublings: 200,
            max_newton: 100,
            check_uniqueness: true,
            restart_agreement: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignChangingProjection {
    pub r_u: f64,
    pub t_u: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Term scales of `φ₁, φ₂` at the solution.
    pub scale: (f64, f64),
    /// Miranda box `[r₁, R₁]²`.
    pub box_range: (f64, f64),
    pub iterations: usize,
    /// Largest relative disagreement among the corner restarts.
    pub restart_spread: f64,
    pub used_fallback: bool,
}

pub fn project_sign_changing(problem: &Problem, u: &Field) -> Result<SignChangingProjection> {
    project_sign_changing_with(problem, u, &SignChangingOptions::default())
}

pub fn project_sign_changing_with(
    problem: &Problem,
    u: &Field,
    opts: &SignChangingOptions,
) -> Result<SignChangingProjection> {
    problem.params.require_sign_changing()?;
    let sc = SignScalars::of(problem, u)?;
    project_pair(&sc, opts)
}

fn converged(sc: &SignScalars, r: f64, t: f64, tol: f64) -> bool {
    let (f1, f2) = sc.phi(r, t);
    let (s1, s2) = sc.phi_scale(r, t);
    f1.abs() <= tol * s1 && f2.abs() <= tol * s2
}

/// Damped Newton in `(log r, log t)` with a central-difference Jacobian,
/// confined to the box.
fn newton_2d(
    sc: &SignScalars,
    start: (f64, f64),
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Option<(f64, f64, usize)> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let eval = |x: (f64, f64)| sc.phi(x.0.exp(), x.1.exp());
    let mut x = (start.0.ln().clamp(llo, lhi), start.1.ln().clamp(llo, lhi));
    let h = 1e-6;
    for it in 0..max_iter {
        let (r, t) = (x.0.exp(), x.1.exp());
        if converged(sc, r, t, tol) {
            return Some((r, t, it));
        }
        let (f1, f2) = eval(x);
        let (s1, s2) = sc.phi_scale(r, t);
        let (a1, a2) = eval((x.0 + h, x.1));
        let (b1, b2) = eval((x.0 - h, x.1));
        let (c1, c2) = eval((x.0, x.1 + h));
        let (d1, d2) = eval((x.0, x.1 - h));
        let j11 = (a1 - b1) / (2.0 * h);
        let j21 = (a2 - b2) / (2.0 * h);
        let j12 = (c1 - d1) / (2.0 * h);
        let j22 = (c2 - d2) / (2.0 * h);
        let det = j11 * j22 - j12 * j21;
        if !det.is_finite() || det == 0.0 {
            return None;
        }
        let dx0 = -(j22 * f1 - j12 * f2) / det;
        let dx1 = -(-j21 * f1 + j11 * f2) / det;
        let merit = |f: (f64, f64)| (f.0 / s1).powi(2) + (f.1 / s2).powi(2);
        let m0 = merit((f1, f2));
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = (
                (x.0 + lambda * dx0).clamp(llo, lhi),
                (x.1 + lambda * dx1).clamp(llo, lhi),
            );
            if merit(eval(cand)) < m0 {
                x = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if converged(sc, r, t, tol * 100.0) {
                Some((r, t, it))
            } else {
                None
            };
        }
    }
    let (r, t) = (x.0.exp(), x.1.exp());
    converged(sc, r, t, tol).then_some((r, t, max_iter))
}

fn bisect_monotone(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f(lo) > 0 > f(hi); bisection in log scale to full precision
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Nested bisection: `t*(r)` solves `φ₂(r, ·) = 0`, then `φ₁(r, t*(r)) = 0`
/// is bisected in `r`. Relies on `φ₁` (resp. `φ₂`) increasing in `t`
/// (resp. `r`), which holds because `K(u) < 0`.
fn nested_bisection(sc: &SignScalars, lo: f64, hi: f64) -> (f64, f64) {
    let t_of = |r: f64| bisect_monotone(|t| sc.phi(r, t).1, lo, hi);
    let r = bisect_monotone(|r| sc.phi(r, t_of(r)).0, lo, hi);
    (r, t_of(r))
}

pub fn project_pair(sc: &SignScalars, opts: &SignChangingOptions) -> Result<SignChangingProjection> {
    let both = |r: f64, positive: bool| {
        let (f1, f2) = sc.phi(r, r);
        if positive {
            f1 > 0.0 && f2 > 0.0
        } else {
            f1 < 0.0 && f2 < 0.0
        }
    };
    let mut lo = 1.0;
    let mut steps = 0;
    while !both(lo, true) {
        lo *= 0.5;
        steps += 1;
        if steps > opts.max_doublings || lo == 0.0 {
            return Err(Error::Numerical(
                "Miranda box: no positive diagonal corner found".into(),
            ));
        }
    }
    let mut hi = if lo < 1.0 { 1.0 } else { 2.0 * lo };
    steps = 0;
    while !both(hi, false) {
        hi *= 2.0;
        steps += 1;
        if steps > opts.max_doublings || !hi.is_finite() {
            return Err(Error::Numerical(
                "Miranda box: no negative diagonal corner found".into(),
            ));
        }
    }

    let inner_tol = opts.tol.min(1e-12);
    let start = (1.0f64.clamp(lo, hi), 1.0f64.clamp(lo, hi));
    let (mut r, mut t, mut iterations, used_fallback) = match newton_2d(sc, start, lo, hi, inner_tol, opts.max_newton) {
        Some((r, t, it)) => (r, t, it, false),
        None => {
            let (r0, t0) = nested_bisection(sc, lo, hi);
            (r0, t0, 0, true)
        }
    };
    if used_fallback {
        if let Some((r1, t1, it)) = newton_2d(sc, (r, t), lo, hi, inner_tol, opts.max_newton) {
            r = r1;
            t = t1;
            iterations = it;
        }
    }
    if !converged(sc, r, t, opts.tol) {
        return Err(Error::Numerical(format!(
            "sign-changing projection stalled at (r, t) = ({r}, {t})"
        )));
    }

    let mut spread = 0.0f64;
    if opts.check_uniqueness {
        for corner in [(lo, lo), (lo, hi), (hi, lo), (hi, hi)] {
            if let Some((rc, tc, _)) = newton_2d(sc, corner, lo, hi, inner_tol, opts.max_newton) {
                let d = ((rc - r) / r).abs().max(((tc - t) / t).abs());
                spread = spread.max(d);
            }
        }
        if spread > opts.restart_agreement {
            return Err(Error::Numerical(format!(
                "corner restarts disagree by {spread:e} (> {})",
                opts.restart_agreement
            )));
        }
    }
    let (phi1, phi2) = sc.phi(r, t);
    Ok(SignChangingProjection {
        r_u: r,
        t_u: t,
        phi1,
        phi2,
        scale: sc.phi_scale(r, t),
        box_range: (lo, hi),
        iterations,
        restart_spread: spread,
        used_fallback,
    })
}

/// `r u⁺ + t u⁻`.
pub fn rescale_parts(u: &Field, r: f64, t: f64) -> Field {
    let (p, m) = split_signs(u);
    p.combine(r, &m, t).expect("same domain")
}
