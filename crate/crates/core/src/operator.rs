//! Nonlocal calculus on fields: fractional Laplacian, fractional gradient
//! form, sign splitting and the positive/negative cross term `K(u)`.
//!
//! Every routine is a dense double sum over the truncated box. Summation
//! order is fixed (outer loop in domain index order, inner loop in domain
//! index order) so results are reproducible; the parallel path splits the
//! outer loop only and is bit-identical to the sequential one.

use rayon::prelude::*;

use crate::error::Result;
use crate::field::Field;
use crate::lattice::{ExecPolicy, Kernel};

/// Running sum, optionally Neumaier-compensated.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Accumulator {
    sum: f64,
    carry: f64,
    compensated: bool,
}

impl Accumulator {
    pub(crate) fn new(compensated: bool) -> Self {
        Accumulator {
            sum: 0.0,
            carry: 0.0,
            compensated,
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        if self.compensated {
            let t = self.sum + x;
            if self.sum.abs() >= x.abs() {
                self.carry += (self.sum - t) + x;
            } else {
                self.carry += (x - t) + self.sum;
            }
            self.sum = t;
        } else {
            self.sum += x;
        }
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn sum_with(policy: ExecPolicy, values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::new(policy.compensated);
    for v in values {
        acc.add(v);
    }
    acc.value()
}

fn per_vertex<F>(kernel: &Kernel, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let n = kernel.domain().len();
    if kernel.policy().parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// `(-Δ)^s u(x) = Σ_{y≠x} w_s(x,y) (u(x) - u(y))`.
pub fn apply_fractional_laplacian(kernel: &Kernel, u: &Field) -> Result<Field> {
    u.check_domain(kernel.domain())?;
    let uv = u.values();
    let compensated = kernel.policy().compensated;
    let out = per_vertex(kernel, |x| {
        let ux = uv[x];
        let mut acc = Accumulator::new(compensated);
        for (w, uy) in kernel.row(x).zip(uv) {
            acc.add(w * (ux - uy));
        }
        acc.value()
    });
    Field::from_values(kernel.domain().clone(), out)
}

/// Pointwise `∇^s u ∇^s v(x) = ½ Σ_{y≠x} w_s(x,y)(u(x)-u(y))(v(x)-v(y))`.
pub fn gradient_form(kernel: &Kernel, u: &Field, v: &Field) -> Result<Field> {
    u.check_domain(kernel.domain())?;
    v.check_domain(kernel.domain())?;
    let (uv, vv) = (u.values(), v.values());
    let compensated = kernel.policy().compensated;
    let out = per_vertex(kernel, |x| {
        let (ux, vx) = (uv[x], vv[x]);
        let mut acc = Accumulator::new(compensated);
        for ((w, uy), vy) in kernel.row(x).zip(uv).zip(vv) {
            acc.add(w * (ux - uy) * (vx - vy));
        }
        0.5 * acc.value()
    });
    Field::from_values(kernel.domain().clone(), out)
}

/// `Σ_x |∇^s u|²(x)` under the counting measure.
pub fn grad_norm_sq(kernel: &Kernel, u: &Field) -> Result<f64> {
    let g = gradient_form(kernel, u, u)?;
    Ok(sum_with(kernel.policy(), g.values().iter().copied()))
}

/// `Σ_x ∇^s u ∇^s v(x)`.
pub fn gradient_pairing(kernel: &Kernel, u: &Field, v: &Field) -> Result<f64> {
    let g = gradient_form(kernel, u, v)?;
    Ok(sum_with(kernel.policy(), g.values().iter().copied()))
}

/// `Σ φ (-Δ)^s u - Σ ∇^s u ∇^s φ`; zero up to roundoff for a symmetric kernel.
pub fn ibp_defect(kernel: &Kernel, u: &Field, phi: &Field) -> Result<f64> {
    let lu = apply_fractional_laplacian(kernel, u)?;
    let lhs = sum_with(
        kernel.policy(),
        phi.values().iter().zip(lu.values()).map(|(a, b)| a * b),
    );
    Ok(lhs - gradient_pairing(kernel, u, phi)?)
}

/// `(u⁺, u⁻)` with `u⁺ = max(u, 0)` and `u⁻ = min(u, 0)`.
pub fn split_signs(u: &Field) -> (Field, Field) {
    (u.map(|v| v.max(0.0)), u.map(|v| v.min(0.0)))
}

/// `K(u) = Σ_x Σ_{y≠x} w_s(x,y) [u⁺(y)u⁻(x) + u⁻(y)u⁺(x)]`, always `<= 0`.
pub fn cross_term_k(kernel: &Kernel, u: &Field) -> Result<f64> {
    Ok(sign_split_sums(kernel, u)?.k)
}

/// Quadratic quantities of the sign split computed in one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSplitSums {
    /// `Σ |∇^s u⁺|²`
    pub grad_plus: f64,
    /// `Σ |∇^s u⁻|²`
    pub grad_minus: f64,
    pub k: f64,
}

pub fn sign_split_sums(kernel: &Kernel, u: &Field) -> Result<SignSplitSums> {
    u.check_domain(kernel.domain())?;
    let uv = u.values();
    let compensated = kernel.policy().compensated;
    let rows = per_vertex_triple(kernel, |x| {
        let (px, mx) = (uv[x].max(0.0), uv[x].min(0.0));
        let mut gp = Accumulator::new(compensated);
        let mut gm = Accumulator::new(compensated);
        let mut k = Accumulator::new(compensated);
        for (w, &uy) in kernel.row(x).zip(uv) {
            let (py, my) = (uy.max(0.0), uy.min(0.0));
            gp.add(w * (px - py) * (px - py));
            gm.add(w * (mx - my) * (mx - my));
            k.add(w * (py * mx + my * px));
        }
        [0.5 * gp.value(), 0.5 * gm.value(), k.value()]
    });
    let policy = kernel.policy();
    Ok(SignSplitSums {
        grad_plus: sum_with(policy, rows.iter().map(|r| r[0])),
        grad_minus: sum_with(policy, rows.iter().map(|r| r[1])),
        k: sum_with(policy, rows.iter().map(|r| r[2])),
    })
}

fn per_vertex_triple<F>(kernel: &Kernel, f: F) -> Vec<[f64; 3]>
where
    F: Fn(usize) -> [f64; 3] + Sync + Send,
{
    let n = kernel.domain().len();
    if kernel.policy().parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Left-hand sides of the three mixed-scaling identities for
/// `w = r u⁺ + t u⁻`, with the closed forms built from `A^± = Σ|∇^s u^±|²`
/// and `K(u)` alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedScaling {
    /// `[Σ|∇^s w|², Σ ∇^s w ∇^s (r u⁺), Σ ∇^s w ∇^s (t u⁻)]`
    pub direct: [f64; 3],
    /// `[r²A⁺ + t²A⁻ - rtK, r²A⁺ - (rt/2)K, t²A⁻ - (rt/2)K]`
    pub closed: [f64; 3],
}

impl MixedScaling {
    /// Largest relative defect between the direct sums and the closed forms.
    pub fn max_rel_defect(&self) -> f64 {
        self.direct
            .iter()
            .zip(&self.closed)
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

pub fn mixed_scaling_identities(kernel: &Kernel, u: &Field, r: f64, t: f64) -> Result<MixedScaling> {
    let (up, um) = split_signs(u);
    let rp = up.scaled(r);
    let tm = um.scaled(t);
    let w = rp.combine(1.0, &tm, 1.0)?;
    let direct = [
        grad_norm_sq(kernel, &w)?,
        gradient_pairing(kernel, &w, &rp)?,
        gradient_pairing(kernel, &w, &tm)?,
    ];
    let a_plus = grad_norm_sq(kernel, &up)?;
    let a_minus = grad_norm_sq(kernel, &um)?;
    let k = cross_term_k(kernel, u)?;
    let closed = [
        r * r * a_plus + t * t * a_minus - r * t * k,
        r * r * a_plus - 0.5 * r * t * k,
        t * t * a_minus - 0.5 * r * t * k,
    ];
    Ok(MixedScaling { direct, closed })
}
