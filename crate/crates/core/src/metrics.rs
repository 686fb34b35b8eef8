//! Subspace distances, the minimax reference rate and regressor error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::model::Subspace;

/// `|(I - U* U*ᵀ) U|` in Frobenius and spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceError {
    pub frob: f64,
    pub spectral: f64,
    /// `frob / sqrt(r)`.
    pub rescaled_frob: f64,
}

fn same_shape(u: &Subspace, u_star: &Subspace) -> Result<()> {
    if u.basis().shape() != u_star.basis().shape() {
        return Err(Error::ShapeMismatch {
            expected: shape(u_star.ambient_dim(), u_star.rank()),
            actual: shape(u.ambient_dim(), u.rank()),
        });
    }
    Ok(())
}

/// Component of `span(U)` outside `span(U*)`: `U - U* (U*ᵀ U)`.
pub fn projection_residual(u: &DMatrix<f64>, u_star: &DMatrix<f64>) -> DMatrix<f64> {
    u - u_star * u_star.tr_mul(u)
}

pub fn subspace_error(u: &Subspace, u_star: &Subspace) -> Result<SubspaceError> {
    same_shape(u, u_star)?;
    let residual = projection_residual(u.basis(), u_star.basis());
    let frob = residual.norm();
    let spectral = residual
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    Ok(SubspaceError {
        frob,
        spectral,
        rescaled_frob: frob / (u.rank() as f64).sqrt(),
    })
}

/// Whether the rate's sample-size condition `m t >= r (d - r)` holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub in_regime: bool,
}

/// Constant-free minimax rate for the rescaled Frobenius error:
/// `(λr/λ1) (σ/√λr) √(d r / (m t))`.
///
/// Only a plotting reference; the true bound hides an unknown constant.
pub fn lower_bound_curve(
    sigma: f64,
    lambda_max: f64,
    lambda_min: f64,
    d: usize,
    r: usize,
    m: usize,
    t: usize,
) -> LowerBound {
    let mt = (m * t) as f64;
    let value = if sigma == 0.0 {
        0.0
    } else {
        (lambda_min / lambda_max) * (sigma / lambda_min.sqrt()) * ((d * r) as f64 / mt).sqrt()
    };
    let in_regime = mt >= (r * d.saturating_sub(r)) as f64 && 2 * r <= d;
    LowerBound { value, in_regime }
}

/// `|U v - U* v*|^2`, the excess prediction risk under isotropic covariates.
pub fn regressor_mse(
    u: &Subspace,
    v: &DVector<f64>,
    u_star: &Subspace,
    v_star: &DVector<f64>,
) -> Result<f64> {
    if u.ambient_dim() != u_star.ambient_dim()
        || v.len() != u.rank()
        || v_star.len() != u_star.rank()
    {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "U {} with v of length {}",
                shape(u.ambient_dim(), u.rank()),
                u.rank()
            ),
            actual: format!(
                "v of length {}, U* {} with v* of length {}",
                v.len(),
                shape(u_star.ambient_dim(), u_star.rank()),
                v_star.len()
            ),
        });
    }
    Ok((u.basis() * v - u_star.basis() * v_star).norm_squared())
}
