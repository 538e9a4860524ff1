//! The Kirchhoff energy functional, its first variation and the
//! logarithmic nonlinearity.
//!
//! With counting measure on the box,
//!
//! ```text
//! J(u) = ½‖u‖² + (b/4)(Σ|∇^s u|²)² + (2/p²)Σ|u|^p − (1/p)Σ|u|^p log u²
//! ‖u‖² = Σ (a|∇^s u|² + h u²)
//! ```
//!
//! and the pointwise residual
//! `g = (a + bΣ|∇^s u|²)(−Δ)^s u + h u − |u|^{p−2} u log u²`
//! represents `J'(u)` under the ℓ² pairing.

use std::sync::Arc;

use crate::error::{contract, Result};
use crate::field::Field;
use crate::lattice::{Kernel, Potential};
use crate::operator::{apply_fractional_laplacian, gradient_form, sum_with};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub s: f64,
    /// Auxiliary exponent `q > p` used only by growth bounds.
    pub q: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            a: 1.0,
            b: 1.0,
            p: 7.0,
            s: 0.5,
            q: 8.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(contract(format!("requires a > 0 (got a = {})", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(contract(format!("requires b > 0 (got b = {})", self.b)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(contract(format!("requires 0 < s < 1 (got s = {})", self.s)));
        }
        if !(self.p > 2.0 && self.p.is_finite()) {
            return Err(contract(format!("requires p > 2 (got p = {})", self.p)));
        }
        if !(self.q > self.p && self.q.is_finite()) {
            return Err(contract(format!("requires q > p (got q = {}, p = {})", self.q, self.p)));
        }
        Ok(())
    }

    /// Ground-state routines need `p > 4`.
    pub fn require_ground(&self) -> Result<()> {
        self.validate()?;
        if self.p > 4.0 {
            Ok(())
        } else {
            Err(contract(format!("ground state requires p > 4 (got p = {})", self.p)))
        }
    }

    /// Sign-changing routines need `p > 6`.
    pub fn require_sign_changing(&self) -> Result<()> {
        self.validate()?;
        if self.p > 6.0 {
            Ok(())
        } else {
            Err(contract(format!(
                "sign-changing ground state requires p > 6 (got p = {})",
                self.p
            )))
        }
    }
}

/// A fully specified instance: kernel, potential and model constants on
/// one shared domain.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kernel: Kernel,
    pub potential: Potential,
    pub params: ModelParams,
}

impl Problem {
    pub fn new(kernel: Kernel, potential: Potential, params: ModelParams) -> Result<Self> {
        params.validate()?;
        if **kernel.domain() != **potential.domain() {
            return Err(contract("kernel and potential live on different domains"));
        }
        if kernel.s() != params.s {
            return Err(contract(format!(
                "kernel exponent s = {} differs from model s = {}",
                kernel.s(),
                params.s
            )));
        }
        Ok(Problem {
            kernel,
            potential,
            params,
        })
    }

    pub fn domain(&self) -> &Arc<crate::lattice::LatticeDomain> {
        self.kernel.domain()
    }
}

/// `log t² = 2 log|t|`, without squaring (no underflow for tiny `t`).
#[inline]
pub(crate) fn log_sq(t: f64) -> f64 {
    2.0 * t.abs().ln()
}

/// `|t|^{p-2} t log t²`, extended by its limit 0 at `t = 0`.
pub fn log_nonlinearity(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p - 2.0) * t * log_sq(t)
    }
}

/// `|t|^p log t²`, extended by 0 at `t = 0`.
#[inline]
pub(crate) fn log_density(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p) * log_sq(t)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// A constant `C_ε` with `|t|^{p-1}|log t²| <= ε|t| + C_ε|t|^{q-1}` for all
/// `t != 0`.
///
/// Computed as `sup_{t>0} (t^{p-1}|log t²| - εt) / t^{q-1}` (clipped at 0):
/// a log-grid scan over `[1e-12, 1e12]` picks the best bracket, golden
/// section refines it in `log t`, and the result is rounded up by a relative
/// `1e-9` so the inequality survives floating-point evaluation.
pub fn eps_bound_constant(eps: f64, p: f64, q: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(contract("eps_bound_constant requires eps > 0"));
    }
    if !(q > p) {
        return Err(contract(format!(
            "eps_bound_constant requires q > p (got q = {q}, p = {p})"
        )));
    }
    let ratio = |log_t: f64| {
        let t = log_t.exp();
        (t.powf(p - 1.0) * log_sq(t).abs() - eps * t) / t.powf(q - 1.0)
    };
    let (lo, hi, n) = (-12.0 * std::f64::consts::LN_10, 12.0 * std::f64::consts::LN_10, 4801);
    let step = (hi - lo) / (n - 1) as f64;
    let samples: Vec<f64> = (0..n).map(|i| ratio(lo + i as f64 * step)).collect();
    let mut sup = samples.iter().copied().fold(0.0, f64::max);
    // refine every local maximum of the scan (|log t²| has a kink at t = 1)
    for i in 1..n - 1 {
        if samples[i] >= samples[i - 1] && samples[i] >= samples[i + 1] {
            let x = lo + i as f64 * step;
            let (_, v) = golden_max(ratio, x - step, x + step, 200);
            sup = sup.max(v);
        }
    }
    Ok(sup * (1.0 + 1e-9))
}

/// The four energy terms of `J` together with `K(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub j: f64,
    /// `‖u‖²_{H^{s,2}} = Σ (a|∇^s u|² + h u²)`
    pub hnorm_sq: f64,
    /// `Σ |∇^s u|²`
    pub grad_sq: f64,
    /// `Σ |u|^p`
    pub lp_norm_p: f64,
    /// `Σ |u|^p log u²`
    pub log_term: f64,
    pub k: f64,
}

impl EnergyReport {
    /// `J` recomputed from the stored terms.
    pub fn reassemble(&self, params: &ModelParams) -> f64 {
        let p = params.p;
        0.5 * self.hnorm_sq + 0.25 * params.b * self.grad_sq * self.grad_sq + 2.0 / (p * p) * self.lp_norm_p
            - self.log_term / p
    }
}

pub(crate) struct QuadraticParts {
    pub grad_sq: f64,
    pub hnorm_sq: f64,
}

pub(crate) fn quadratic_parts(problem: &Problem, u: &Field) -> Result<QuadraticParts> {
    let g = gradient_form(&problem.kernel, u, u)?;
    let a = problem.params.a;
    let policy = problem.kernel.policy();
    let grad_sq = sum_with(policy, g.values().iter().copied());
    let hnorm_sq = sum_with(
        policy,
        g.values()
            .iter()
            .zip(u.values())
            .zip(problem.potential.values())
            .map(|((gx, ux), hx)| a * gx + hx * ux * ux),
    );
    Ok(QuadraticParts { grad_sq, hnorm_sq })
}

/// `Σ_x (a|∇^s u|²(x) + h(x)u(x)²)`.
pub fn hnorm_sq(problem: &Problem, u: &Field) -> Result<f64> {
    Ok(quadratic_parts(problem, u)?.hnorm_sq)
}

pub fn energy(problem: &Problem, u: &Field) -> Result<EnergyReport> {
    u.check_domain(problem.domain())?;
    let params = &problem.params;
    let p = params.p;
    let policy = problem.kernel.policy();
    let q = quadratic_parts(problem, u)?;
    let lp_norm_p = sum_with(policy, u.values().iter().map(|v| v.abs().powf(p)));
    let log_term = sum_with(policy, u.values().iter().map(|&v| log_density(v, p)));
    let k = crate::operator::cross_term_k(&problem.kernel, u)?;
    let mut report = EnergyReport {
        j: 0.0,
        hnorm_sq: q.hnorm_sq,
        grad_sq: q.grad_sq,
        lp_norm_p,
        log_term,
        k,
    };
    report.j = report.reassemble(params);
    Ok(report)
}

/// `J(u)` alone (skips `K(u)`).
pub fn energy_value(problem: &Problem, u: &Field) -> Result<f64> {
    u.check_domain(problem.domain())?;
    let p = problem.params.p;
    let b = problem.params.b;
    let policy = problem.kernel.policy();
    let q = quadratic_parts(problem, u)?;
    let lp = sum_with(policy, u.values().iter().map(|v| v.abs().powf(p)));
    let lg = sum_with(policy, u.values().iter().map(|&v| log_density(v, p)));
    Ok(0.5 * q.hnorm_sq + 0.25 * b * q.grad_sq * q.grad_sq + 2.0 / (p * p) * lp - lg / p)
}

/// Pointwise residual `g` with `⟨J'(u), φ⟩ = Σ_x g(x) φ(x)`.
pub fn energy_gradient(problem: &Problem, u: &Field) -> Result<Field> {
    u.check_domain(problem.domain())?;
    let ModelParams { a, b, p, .. } = problem.params;
    let lu = apply_fractional_laplacian(&problem.kernel, u)?;
    let grad_sq = quadratic_parts(problem, u)?.grad_sq;
    let coeff = a + b * grad_sq;
    let values = lu
        .values()
        .iter()
        .zip(u.values())
        .zip(problem.potential.values())
        .map(|((lx, &ux), hx)| coeff * lx + hx * ux - log_nonlinearity(ux, p))
        .collect();
    Field::from_values(problem.domain().clone(), values)
}

/// `⟨J'(u), φ⟩`.
pub fn derivative_pairing(problem: &Problem, u: &Field, phi: &Field) -> Result<f64> {
    let g = energy_gradient(problem, u)?;
    Ok(sum_with(
        problem.kernel.policy(),
        g.values().iter().zip(phi.values()).map(|(a, b)| a * b),
    ))
}

/// Sup-norm of the pointwise equation residual.
pub fn residual_sup(problem: &Problem, u: &Field) -> Result<f64> {
    Ok(energy_gradient(problem, u)?.norm_inf())
}
