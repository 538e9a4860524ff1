use std::sync::Arc;

use crate::error::{contract, Result};
use crate::lattice::LatticeDomain;

/// A real function on the vertices of a [`LatticeDomain`], stored in the
/// domain's index order.
#[derive(Debug, Clone)]
pub struct Field {
    domain: Arc<LatticeDomain>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_domain(other) && self.values == other.values
    }
}

impl Field {
    pub fn zeros(domain: Arc<LatticeDomain>) -> Self {
        let n = domain.len();
        Field {
            domain,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(domain: Arc<LatticeDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(contract(format!(
                "field has {} values but the domain has {} vertices",
                values.len(),
                domain.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(contract("field entries must be finite"));
        }
        Ok(Field { domain, values })
    }

    pub fn from_fn(domain: Arc<LatticeDomain>, f: impl FnMut(&[i64]) -> f64) -> Self {
        let values = domain.vertices().map(f).collect();
        Field { domain, values }
    }

    /// Indicator of a single vertex.
    pub fn delta(domain: Arc<LatticeDomain>, at: &[i64]) -> Result<Self> {
        let idx = domain
            .index_of(at)
            .ok_or_else(|| contract(format!("vertex {at:?} is outside the box")))?;
        let mut f = Field::zeros(domain);
        f.values[idx] = 1.0;
        Ok(f)
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_domain(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    pub(crate) fn check_domain(&self, domain: &Arc<LatticeDomain>) -> Result<()> {
        if Arc::ptr_eq(&self.domain, domain) || *self.domain == **domain {
            Ok(())
        } else {
            Err(contract("field lives on a different domain"))
        }
    }

    pub(crate) fn check_pair(&self, other: &Field) -> Result<()> {
        if self.same_domain(other) {
            Ok(())
        } else {
            Err(contract("fields live on different domains"))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> Field {
        self.map(|v| t * v)
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.check_pair(other)?;
        Ok(Field {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.check_pair(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `Σ |u|^q`.
    pub fn lp_sum(&self, q: f64) -> f64 {
        self.values.iter().map(|v| v.abs().powf(q)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn has_positive(&self) -> bool {
        self.values.iter().any(|&v| v > 0.0)
    }

    pub fn has_negative(&self) -> bool {
        self.values.iter().any(|&v| v < 0.0)
    }
}
