//! Truncated lattice boxes, the power-law fractional kernel and the
//! coercive potential family.
//!
//! All sums in this crate range over pairs of vertices inside the box
//! `[-L, L]^d`; the finite graph is treated as a self-contained instance
//! of the theory, so every algebraic identity holds exactly on it.

use std::sync::Arc;

use crate::error::{contract, Error, Result};

/// Default cap on the number of vertices of a [`LatticeDomain`].
pub const DEFAULT_MAX_VERTICES: usize = 20_000;

/// The vertex set of the box `[-L, L]^d` in lexicographic order
/// (first coordinate most significant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeDomain {
    dim: usize,
    radius: i64,
    side: usize,
    // flat, `dim` coordinates per vertex
    coords: Vec<i64>,
}

impl LatticeDomain {
    pub fn new(dim: usize, radius: i64) -> Result<Self> {
        Self::with_cap(dim, radius, DEFAULT_MAX_VERTICES)
    }

    pub fn with_cap(dim: usize, radius: i64, cap: usize) -> Result<Self> {
        if dim == 0 {
            return Err(contract("lattice dimension must be >= 1"));
        }
        if radius < 1 {
            return Err(contract("lattice radius must be >= 1"));
        }
        let side = 2 * radius as u128 + 1;
        let requested = side.checked_pow(dim as u32).unwrap_or(u128::MAX);
        if requested > cap as u128 {
            return Err(Error::TooLarge { requested, cap });
        }
        let n = requested as usize;
        let side = side as usize;
        let mut coords = Vec::with_capacity(n * dim);
        let mut cur = vec![-radius; dim];
        for _ in 0..n {
            coords.extend_from_slice(&cur);
            // odometer increment, last coordinate fastest
            for i in (0..dim).rev() {
                if cur[i] < radius {
                    cur[i] += 1;
                    break;
                }
                cur[i] = -radius;
            }
        }
        Ok(LatticeDomain {
            dim,
            radius,
            side,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Number of vertices, `(2L+1)^d`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn vertex(&self, index: usize) -> &[i64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim && x.iter().all(|&c| c.abs() <= self.radius)
    }

    /// Dense index of a coordinate tuple, `None` outside the box.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(
            x.iter()
                .fold(0usize, |acc, &c| acc * self.side + (c + self.radius) as usize),
        )
    }
}

/// Edge-count distance on `Z^d`, which is the ℓ1 distance.
pub fn graph_distance(x: &[i64], y: &[i64]) -> Result<u64> {
    if x.len() != y.len() {
        return Err(contract(format!(
            "graph_distance: dimension mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a.abs_diff(*b)).sum())
}

/// Execution knobs shared by every kernel sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecPolicy {
    /// Parallelize per-vertex sums over output vertices. Results are
    /// bit-identical to the sequential path.
    pub parallel: bool,
    /// Neumaier-compensated accumulation in every sum.
    pub compensated: bool,
}

/// Translation-invariant power-law weights `w(z) = c_w |z|_1^{-d-2s}`
/// tabulated for every offset realizable inside the domain.
#[derive(Debug, Clone)]
pub struct Kernel {
    domain: Arc<LatticeDomain>,
    s: f64,
    c_w: f64,
    // offsets in [-2L, 2L]^d, lexicographic; zero at the centre
    table: Vec<f64>,
    // per-vertex linear key into `table` (relative to `centre`)
    keys: Vec<i64>,
    centre: i64,
    policy: ExecPolicy,
}

impl Kernel {
    pub fn new(domain: Arc<LatticeDomain>, s: f64, c_w: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(contract(format!("kernel exponent s = {s} must lie in (0,1)")));
        }
        if !(c_w > 0.0 && c_w.is_finite()) {
            return Err(contract(format!("kernel constant c_w = {c_w} must be positive")));
        }
        let d = domain.dim();
        let l = domain.radius();
        let oside = (4 * l + 1) as usize;
        let exponent = d as f64 + 2.0 * s;
        let total = oside.pow(d as u32);
        let mut table = Vec::with_capacity(total);
        let mut z = vec![-2 * l; d];
        for _ in 0..total {
            let norm: i64 = z.iter().map(|c| c.abs()).sum();
            table.push(if norm == 0 {
                0.0
            } else {
                c_w * (norm as f64).powf(-exponent)
            });
            for i in (0..d).rev() {
                if z[i] < 2 * l {
                    z[i] += 1;
                    break;
                }
                z[i] = -2 * l;
            }
        }
        let strides: Vec<i64> = (0..d).map(|i| (oside as i64).pow((d - 1 - i) as u32)).collect();
        let keys = domain
            .vertices()
            .map(|x| x.iter().zip(&strides).map(|(c, st)| c * st).sum())
            .collect();
        let centre = strides.iter().map(|st| 2 * l * st).sum();
        Ok(Kernel {
            domain,
            s,
            c_w,
            table,
            keys,
            centre,
            policy: ExecPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Negative-control hook: multiplies `w(z)` by `1 + eps` for every
    /// offset whose first nonzero coordinate is positive, so that
    /// `w(z) != w(-z)`. Only meant for exercising the verification battery.
    pub fn with_broken_symmetry(mut self, eps: f64) -> Self {
        let d = self.domain.dim();
        let l = self.domain.radius();
        let oside = 4 * l + 1;
        for (idx, w) in self.table.iter_mut().enumerate() {
            let mut rem = idx as i64;
            let mut z = vec![0i64; d];
            for i in (0..d).rev() {
                z[i] = rem % oside - 2 * l;
                rem /= oside;
            }
            if z.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0) {
                *w *= 1.0 + eps;
            }
        }
        self
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn c_w(&self) -> f64 {
        self.c_w
    }

    pub fn policy(&self) -> ExecPolicy {
        self.policy
    }

    fn offset_slot(&self, z: &[i64]) -> Option<usize> {
        let d = self.domain.dim();
        let l = self.domain.radius();
        if z.len() != d || z.iter().any(|c| c.abs() > 2 * l) {
            return None;
        }
        let oside = (4 * l + 1) as usize;
        Some(z.iter().fold(0usize, |acc, &c| acc * oside + (c + 2 * l) as usize))
    }

    /// `w(z)` for a stored nonzero offset.
    pub fn weight(&self, z: &[i64]) -> Option<f64> {
        if z.iter().all(|&c| c == 0) {
            return None;
        }
        self.offset_slot(z).map(|i| self.table[i])
    }

    /// `w_s(x, y)` for two vertex indices (zero on the diagonal).
    #[inline]
    pub fn pair_weight(&self, x: usize, y: usize) -> f64 {
        self.table[(self.centre + self.keys[x] - self.keys[y]) as usize]
    }

    /// Row `x` of the weight matrix, `w_s(x, y)` for every `y`.
    pub(crate) fn row(&self, x: usize) -> impl Iterator<Item = f64> + '_ {
        let base = self.centre + self.keys[x];
        self.keys.iter().map(move |k| self.table[(base - k) as usize])
    }

    /// Every stored nonzero offset with its weight.
    pub fn offsets(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        let d = self.domain.dim();
        let l = self.domain.radius();
        let oside = 4 * l + 1;
        self.table.iter().enumerate().filter_map(move |(idx, &w)| {
            let mut rem = idx as i64;
            let mut z = vec![0i64; d];
            for i in (0..d).rev() {
                z[i] = rem % oside - 2 * l;
                rem /= oside;
            }
            if z.iter().all(|&c| c == 0) {
                None
            } else {
                Some((z, w))
            }
        })
    }
}

/// Truncated lattice sum `Σ_{0<|z|_1<=R} |z|_1^{-d-2s}` with a rigorous
/// bound on the discarded tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeZeta {
    pub partial_sum: f64,
    pub tail_bound: f64,
}

impl LatticeZeta {
    /// Rigorous upper bound on the full lattice sum.
    pub fn upper(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of points of `Z^d` with ℓ1 norm exactly `k >= 1`:
/// `Σ_i 2^i C(d,i) C(k-1,i-1)`.
pub fn shell_count(d: usize, k: u64) -> f64 {
    assert!(k >= 1);
    (1..=d.min(k as usize) as u64)
        .map(|i| 2f64.powi(i as i32) * binomial(d as u64, i) * binomial(k - 1, i - 1))
        .sum()
}

pub fn lattice_zeta(d: usize, s: f64, truncation_radius: u64) -> Result<LatticeZeta> {
    if d == 0 || truncation_radius == 0 {
        return Err(contract("lattice_zeta needs d >= 1 and radius >= 1"));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(contract(format!("lattice_zeta: s = {s} must lie in (0,1)")));
    }
    let exponent = d as f64 + 2.0 * s;
    // smallest terms first
    let partial_sum = (1..=truncation_radius)
        .rev()
        .map(|k| shell_count(d, k) * (k as f64).powf(-exponent))
        .sum();
    // C(k-1, i-1) <= k^{i-1}/(i-1)!, and Σ_{k>R} k^{-α} <= ∫_R^∞ x^{-α} dx for α > 1
    let r = truncation_radius as f64;
    let mut tail_bound = 0.0;
    let mut fact = 1.0;
    for i in 1..=d {
        if i > 1 {
            fact *= (i - 1) as f64;
        }
        let coeff = 2f64.powi(i as i32) * binomial(d as u64, i as u64) / fact;
        let decay = exponent - i as f64;
        tail_bound += coeff * r.powf(-decay) / decay;
    }
    Ok(LatticeZeta {
        partial_sum,
        tail_bound,
    })
}

/// Parameters of the built-in coercive family `h(x) = h0 + κ |x - x0|_1^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFamily {
    pub kappa: f64,
    pub alpha: f64,
    pub centre: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct Potential {
    domain: Arc<LatticeDomain>,
    values: Vec<f64>,
    floor: f64,
    family: Option<PotentialFamily>,
}

impl Potential {
    pub fn from_family(domain: Arc<LatticeDomain>, h0: f64, kappa: f64, alpha: f64, x0: &[i64]) -> Result<Self> {
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(contract(format!("potential floor h0 = {h0} must be positive")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(contract(format!("potential slope kappa = {kappa} must be >= 0")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(contract(format!("potential exponent alpha = {alpha} must be > 0")));
        }
        if !domain.contains(x0) {
            return Err(contract(format!("potential centre {x0:?} is outside the box")));
        }
        let values = domain
            .vertices()
            .map(|x| {
                let r = graph_distance(x, x0).expect("same dimension") as f64;
                h0 + kappa * r.powf(alpha)
            })
            .collect();
        Ok(Potential {
            domain,
            values,
            floor: h0,
            family: Some(PotentialFamily {
                kappa,
                alpha,
                centre: x0.to_vec(),
            }),
        })
    }

    /// Arbitrary potential values; every entry must be at least `floor > 0`.
    pub fn from_values(domain: Arc<LatticeDomain>, values: Vec<f64>, floor: f64) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(contract("potential length does not match the domain"));
        }
        if !(floor > 0.0) || values.iter().any(|&h| !(h >= floor) || !h.is_finite()) {
            return Err(contract("potential must satisfy h(x) >= h0 > 0"));
        }
        Ok(Potential {
            domain,
            values,
            floor,
            family: None,
        })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn family(&self) -> Option<&PotentialFamily> {
        self.family.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(d: usize, l: i64) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::new(d, l).unwrap())
    }

    #[test]
    fn vertex_counts() {
        let d1 = LatticeDomain::new(1, 1).unwrap();
        assert_eq!(d1.len(), 3);
        assert_eq!(d1.vertices().collect::<Vec<_>>(), vec![&[-1][..], &[0], &[1]]);
        assert_eq!(LatticeDomain::new(2, 2).unwrap().len(), 25);
        let d3 = LatticeDomain::new(3, 1).unwrap();
        assert_eq!(d3.len(), 27);
        assert_eq!(d3.index_of(&[0, 0, 0]), Some(13));
    }

    #[test]
    fn index_of_is_bijective_and_lexicographic() {
        let d = LatticeDomain::new(3, 2).unwrap();
        for (i, x) in d.vertices().enumerate() {
            assert_eq!(d.index_of(x), Some(i));
        }
        let v: Vec<_> = d.vertices().map(|x| x.to_vec()).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d.index_of(&[3, 0, 0]), None);
    }

    #[test]
    fn size_cap_reports_count() {
        let err = LatticeDomain::with_cap(3, 10, 1000).unwrap_err();
        assert_eq!(
            err,
            Error::TooLarge {
                requested: 9261,
                cap: 1000
            }
        );
        assert!(err.to_string().contains("9261"));
    }

    #[test]
    fn distances() {
        assert_eq!(graph_distance(&[0, 0], &[1, 2]).unwrap(), 3);
        assert_eq!(graph_distance(&[4, -7], &[4, -7]).unwrap(), 0);
        assert_eq!(graph_distance(&[-1, 0, 2], &[1, 1, 0]).unwrap(), 5);
        assert!(graph_distance(&[0], &[0, 0]).is_err());
    }

    #[test]
    fn kernel_values() {
        let k = Kernel::new(dom(1, 2), 0.5, 1.0).unwrap();
        assert_eq!(k.weight(&[2]), Some(0.25));
        assert_eq!(k.weight(&[0]), None);
        let k2 = Kernel::new(dom(2, 2), 0.5, 1.0).unwrap();
        assert_eq!(k2.weight(&[1, 1]), Some(0.125));
        assert!(Kernel::new(dom(1, 1), 1.0, 1.0).is_err());
        assert!(Kernel::new(dom(1, 1), 0.0, 1.0).is_err());
    }

    #[test]
    fn kernel_symmetric_positive_and_tight() {
        let k = Kernel::new(dom(2, 3), 0.3, 1.7).unwrap();
        let mut count = 0;
        for (z, w) in k.offsets() {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            assert_eq!(k.weight(&neg), Some(w));
            let norm: i64 = z.iter().map(|c| c.abs()).sum();
            let bound = 1.7 * (norm as f64).powf(-2.6);
            assert!(w > 0.0);
            assert_eq!(w, bound);
            count += 1;
        }
        assert_eq!(count, 13 * 13 - 1);
        let n = k.domain().len();
        for x in 0..n {
            assert_eq!(k.pair_weight(x, x), 0.0);
            for y in 0..n {
                assert_eq!(k.pair_weight(x, y), k.pair_weight(y, x));
            }
        }
    }

    #[test]
    fn broken_symmetry_hook() {
        let k = Kernel::new(dom(1, 2), 0.5, 1.0).unwrap().with_broken_symmetry(0.1);
        assert_ne!(k.weight(&[1]), k.weight(&[-1]));
    }

    #[test]
    fn shell_counts_match_enumeration() {
        for d in 1..=4usize {
            let dm = LatticeDomain::new(d, 4).unwrap();
            for k in 1..=4u64 {
                let brute = dm
                    .vertices()
                    .filter(|x| x.iter().map(|c| c.unsigned_abs()).sum::<u64>() == k)
                    .count();
                assert_eq!(shell_count(d, k), brute as f64, "d={d} k={k}");
            }
        }
        assert_eq!(shell_count(2, 7), 28.0);
    }

    #[test]
    fn zeta_converges_to_series_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        let z1 = lattice_zeta(1, 0.5, 10_000).unwrap();
        assert!(z1.partial_sum <= pi2 / 3.0);
        assert!(pi2 / 3.0 - z1.partial_sum <= z1.tail_bound);
        let z2 = lattice_zeta(2, 0.5, 10_000).unwrap();
        assert!(z2.partial_sum <= 2.0 * pi2 / 3.0);
        assert!(2.0 * pi2 / 3.0 - z2.partial_sum <= z2.tail_bound);
        let mut prev = 0.0;
        for r in [1, 2, 4, 8, 16, 32] {
            let z = lattice_zeta(3, 0.4, r).unwrap();
            assert!(z.partial_sum >= prev);
            let z2r = lattice_zeta(3, 0.4, 2 * r).unwrap();
            assert!(z2r.partial_sum - z.partial_sum < z.tail_bound);
            prev = z.partial_sum;
        }
    }

    #[test]
    fn potential_family() {
        let d = dom(2, 3);
        let flat = Potential::from_family(d.clone(), 2.5, 0.0, 1.0, &[0, 0]).unwrap();
        assert!(flat.values().iter().all(|&h| h == 2.5));
        let h = Potential::from_family(d.clone(), 1.0, 1.0, 1.0, &[0, 0]).unwrap();
        assert_eq!(h.values()[d.index_of(&[2, -1]).unwrap()], 4.0);
        let min = h.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 1.0);
        assert!(Potential::from_family(d.clone(), 0.0, 1.0, 1.0, &[0, 0]).is_err());
        assert!(Potential::from_family(d, 1.0, 1.0, 1.0, &[9, 0]).is_err());
    }

    #[test]
    fn potential_monotone_in_distance() {
        let d = dom(2, 4);
        let h = Potential::from_family(d.clone(), 1.0, 0.7, 1.5, &[1, -1]).unwrap();
        for (i, x) in d.vertices().enumerate() {
            for (j, y) in d.vertices().enumerate() {
                let rx = graph_distance(x, &[1, -1]).unwrap();
                let ry = graph_distance(y, &[1, -1]).unwrap();
                if rx <= ry {
                    assert!(h.values()[i] <= h.values()[j]);
                }
            }
        }
    }
}
