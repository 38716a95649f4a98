//! Proximal map of the weighted ℓ1 norm and projection onto its dual box.
//!
//! The two are tied by the Moreau decomposition
//! `x = soft_threshold(x, τ) + project_box(x, τ)`, which every solver here
//! relies on to move between primal and dual quantities.

use crate::error::{Error, Result};
use crate::linalg::norm_inf;

/// Componentwise radii `λ ω_j` of the box `{v : |v_j| ≤ r_j}`.
///
/// A radius of `+∞` marks a coordinate whose primal coefficient is pinned to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRadii(Vec<f64>);

impl BoxRadii {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if let Some(j) = radii.iter().position(|r| r.is_nan() || *r < 0.0) {
            return Err(Error::InvalidInput(format!(
                "radius {j} is {} (must be >= 0)",
                radii[j]
            )));
        }
        Ok(Self(radii))
    }

    /// Radii `λ ω_j`; infinite weights stay infinite for every `λ > 0`.
    pub fn from_weights(lambda: f64, omega: &[f64]) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda = {lambda}")));
        }
        Self::new(
            omega
                .iter()
                .map(|&w| if w.is_infinite() { f64::INFINITY } else { lambda * w })
                .collect(),
        )
    }

    pub fn uniform(len: usize, r: f64) -> Self {
        Self(vec![r; len])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|r| r * factor).collect())
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    let mag = (x.abs() - tau).max(0.0);
    if mag == 0.0 {
        0.0
    } else {
        mag.copysign(x)
    }
}

/// `sgn(x) ⊙ max(|x| − τ, 0)`.
pub fn soft_threshold_weighted(x: &[f64], tau: &BoxRadii) -> Vec<f64> {
    assert_eq!(x.len(), tau.len(), "soft threshold dimension mismatch");
    x.iter()
        .zip(tau.as_slice())
        .map(|(&xi, &ti)| soft_threshold_scalar(xi, ti))
        .collect()
}

/// Soft threshold with radii `scale · τ`, written into `out`.
pub fn soft_threshold_scaled_into(x: &[f64], tau: &BoxRadii, scale: f64, out: &mut [f64]) {
    for ((o, &xi), &ti) in out.iter_mut().zip(x).zip(tau.as_slice()) {
        *o = soft_threshold_scalar(xi, scale * ti);
    }
}

/// `min(r, max(x, −r))` componentwise.
pub fn project_box_inf(x: &[f64], r: &BoxRadii) -> Vec<f64> {
    assert_eq!(x.len(), r.len(), "projection dimension mismatch");
    x.iter()
        .zip(r.as_slice())
        .map(|(&xi, &ri)| xi.max(-ri).min(ri))
        .collect()
}

/// `‖x − soft_threshold(x, τ) − project_box(x, τ)‖∞`; zero up to rounding.
pub fn moreau_check(x: &[f64], tau: &BoxRadii) -> f64 {
    let s = soft_threshold_weighted(x, tau);
    let p = project_box_inf(x, tau);
    let gap: Vec<f64> = x
        .iter()
        .zip(s.iter().zip(&p))
        .map(|(xi, (si, pi))| xi - si - pi)
        .collect();
    norm_inf(&gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        let tau = BoxRadii::uniform(3, 1.0);
        assert_eq!(soft_threshold_weighted(&[3.0, -0.5, 1.0], &tau), vec![2.0, 0.0, 0.0]);
        let x = [1.5, -2.0, 0.0];
        assert_eq!(soft_threshold_weighted(&x, &BoxRadii::uniform(3, 0.0)), x.to_vec());
    }

    #[test]
    fn projection_examples() {
        let r = BoxRadii::uniform(3, 1.0);
        assert_eq!(project_box_inf(&[2.0, -3.0, 0.5], &r), vec![1.0, -1.0, 0.5]);
        assert_eq!(project_box_inf(&[0.2, -0.9, 1.0], &r), vec![0.2, -0.9, 1.0]);
    }

    #[test]
    fn moreau_edge_cases() {
        let tau = BoxRadii::new(vec![0.5, f64::INFINITY, 2.0]).unwrap();
        assert_eq!(moreau_check(&[0.0; 3], &tau), 0.0);
        let x = [1.25, -7.0, 3.0];
        assert_eq!(soft_threshold_weighted(&x, &tau)[1], 0.0);
        assert_eq!(project_box_inf(&x, &tau)[1], -7.0);
        assert!(moreau_check(&x, &tau) <= 1e-12);
    }

    #[test]
    fn rejects_negative_radius() {
        assert!(BoxRadii::new(vec![1.0, -0.1]).is_err());
        assert!(BoxRadii::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn infinite_weight_stays_infinite() {
        let r = BoxRadii::from_weights(0.0, &[2.0, f64::INFINITY]).unwrap();
        assert_eq!(r.as_slice(), &[0.0, f64::INFINITY]);
    }
}
