//! Symmetric discrete Steklov-Poincaré (Dirichlet-to-Neumann) operator of
//! the exterior Laplace problem.
//!
//! With the scaled-geometry Galerkin blocks V, K, W, M the operator is
//!
//! ```text
//!     S = W + Bᵀ V⁻¹ B,      B = M/2 - K,
//! ```
//!
//! the symmetric boundary-integral form of the map g ↦ -∂ν u of the decaying
//! exterior harmonic extension. S is symmetric positive definite for fine
//! enough panels (the constant mode carries the positive logarithmic
//! capacity term through the V⁻¹ branch). The V factorization is kept and
//! reused wherever V⁻¹ appears (exterior flux, estimator, two-level
//! surrogate).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::bem::{BoundaryMesh, BoundaryOperators};
use crate::error::{Error, Result};

pub struct SteklovOperator {
    /// P1×P1 boundary matrix of the Dirichlet-to-Neumann form
    pub s_mat: DMatrix<f64>,
    /// Cholesky factorization of the scaled single-layer matrix
    pub v_chol: Cholesky<f64, Dyn>,
    /// B = M/2 - K on the scaled geometry
    pub b_mat: DMatrix<f64>,
}

/// Assemble S from the boundary operators. Fails if V is not positive
/// definite, which signals a missing geometry rescale.
pub fn assemble_steklov(ops: &BoundaryOperators) -> Result<SteklovOperator> {
    let v_chol = Cholesky::new(ops.v_mat.clone())
        .ok_or(Error::NotPositiveDefinite("single-layer matrix V"))?;
    let b_mat = ops.m_mat.clone() * 0.5 - ops.k_mat.clone();
    let vinv_b = v_chol.solve(&b_mat);
    let mut s_mat = &ops.w_mat + b_mat.transpose() * vinv_b;
    // construction is symmetric; remove factorization rounding noise
    s_mat = (&s_mat + s_mat.transpose()) * 0.5;
    Ok(SteklovOperator {
        s_mat,
        v_chol,
        b_mat,
    })
}

impl SteklovOperator {
    pub fn n(&self) -> usize {
        self.s_mat.nrows()
    }

    pub fn apply(&self, trace: &DVector<f64>) -> DVector<f64> {
        &self.s_mat * trace
    }

    /// Discrete exterior Neumann data -V⁻¹ B g in scaled coordinates (P0).
    pub fn exterior_flux_scaled(&self, trace: &DVector<f64>) -> DVector<f64> {
        -self.v_chol.solve(&(&self.b_mat * trace))
    }

    /// Discrete exterior Neumann data in physical coordinates.
    pub fn exterior_flux(&self, bm: &BoundaryMesh, trace: &DVector<f64>) -> DVector<f64> {
        self.exterior_flux_scaled(trace) * bm.scale
    }
}

/// Lumped-mass dual norm of a P1 functional vector.
pub fn dual_norm(bm: &BoundaryMesh, functional: &DVector<f64>) -> f64 {
    let lump = bm.lumped_mass_p1();
    functional
        .iter()
        .zip(lump.iter())
        .map(|(d, m)| d * d / m)
        .sum::<f64>()
        .sqrt()
}

/// Distance between S_h(trace) and -flux in the lumped dual norm, with the
/// physical P0 flux paired against the P1 hats.
pub fn dirichlet_to_neumann_residual(
    sp: &SteklovOperator,
    bm: &BoundaryMesh,
    trace: &DVector<f64>,
    flux: &DVector<f64>,
) -> f64 {
    let dual = bm.mass_p0_p1().transpose() * flux;
    dirichlet_to_neumann_residual_dual(sp, bm, trace, &dual)
}

/// Same residual with the flux already given as a P1 dual vector. The plain
/// P0 pairing cannot represent arbitrary dual vectors on even closed chains
/// (the alternating density is in the kernel of the pairing), so exact
/// self-consistency checks use this entry point.
pub fn dirichlet_to_neumann_residual_dual(
    sp: &SteklovOperator,
    bm: &BoundaryMesh,
    trace: &DVector<f64>,
    flux_dual: &DVector<f64>,
) -> f64 {
    let d = sp.apply(trace) + flux_dual;
    dual_norm(bm, &d)
}
