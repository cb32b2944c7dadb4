//! Double-well energy density, its convex envelope and derivatives.
//!
//! The density is W(F) = |F-F1|² |F-F2|² with distinct wells F1, F2 in R².
//! Writing A = (F2-F1)/2, B = (F1+F2)/2 and Q(F) = max{0, |F-B|² - |A|²},
//! the convex envelope has the closed form
//!
//! ```text
//!     W**(F) = Q(F)² + 4|A|² |F-B|² - 4 (A·(F-B))²,
//! ```
//!
//! which is C¹ with a kink surface at Q = 0 and degenerates along A inside
//! the ball |F-B| ≤ |A| (the microstructure region). All formulas here are
//! exact; no smoothing parameter is introduced.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// The two wells and the derived quantities used by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellParams {
    pub f1: Vector2<f64>,
    pub f2: Vector2<f64>,
    /// (F2 - F1)/2
    pub a: Vector2<f64>,
    /// (F1 + F2)/2
    pub b: Vector2<f64>,
    /// |A|², cached
    pub a_norm2: f64,
}

impl WellParams {
    pub fn new(f1: Vector2<f64>, f2: Vector2<f64>) -> Result<Self> {
        if f1 == f2 {
            return Err(Error::InvalidWells);
        }
        let a = 0.5 * (f2 - f1);
        Ok(Self {
            f1,
            f2,
            a,
            b: 0.5 * (f1 + f2),
            a_norm2: a.norm_squared(),
        })
    }

    /// The quartic double-well density W(F) = |F-F1|²|F-F2|².
    pub fn w(&self, f: Vector2<f64>) -> f64 {
        (f - self.f1).norm_squared() * (f - self.f2).norm_squared()
    }

    /// Degeneracy indicator Q(F) = max{0, |F-B|² - |A|²}; zero exactly on the
    /// closed ball of radius |A| about B.
    pub fn q(&self, f: Vector2<f64>) -> f64 {
        ((f - self.b).norm_squared() - self.a_norm2).max(0.0)
    }

    /// The convex envelope W**(F).
    pub fn w_relaxed(&self, f: Vector2<f64>) -> f64 {
        let g = f - self.b;
        let q = self.q(f);
        let ag = self.a.dot(&g);
        q * q + 4.0 * self.a_norm2 * g.norm_squared() - 4.0 * ag * ag
    }

    /// Gradient of the envelope,
    /// DW**(F) = 4 Q(F) (F-B) + 8|A|² (F-B) - 8 (A·(F-B)) A.
    ///
    /// Continuous across Q = 0 since the first term vanishes there.
    pub fn grad_w_relaxed(&self, f: Vector2<f64>) -> Vector2<f64> {
        let g = f - self.b;
        let q = self.q(f);
        4.0 * q * g + 8.0 * self.a_norm2 * g - 8.0 * self.a.dot(&g) * self.a
    }

    /// Branch-selected second derivative of the envelope.
    ///
    /// For Q > 0: 8 G⊗G + 4Q I + 8|A|² I - 8 A⊗A with G = F-B; for Q ≤ 0 the
    /// quadratic-branch value 8|A|² I - 8 A⊗A, whose kernel is span{A} (the
    /// degenerate direction inside the microstructure ball). Both branches
    /// are positive semidefinite.
    pub fn hess_w_relaxed(&self, f: Vector2<f64>) -> Matrix2<f64> {
        let aa = 8.0 * (Matrix2::identity() * self.a_norm2 - self.a * self.a.transpose());
        let q = self.q(f);
        if q > 0.0 {
            let g = f - self.b;
            aa + 8.0 * g * g.transpose() + 4.0 * q * Matrix2::identity()
        } else {
            aa
        }
    }

    /// Orthogonal projection onto the complement of A: f - (A·f/|A|²) A.
    pub fn project_perp(&self, f: Vector2<f64>) -> Vector2<f64> {
        f - (self.a.dot(&f) / self.a_norm2) * self.a
    }

    /// Slack of the strong monotonicity inequality
    ///
    ///   (DW**(F)-DW**(E))·(F-E)
    ///     ≥ 8|A|²|PF-PE|² + 2 (Q(F)+Q(E)) (A·(F-E))²/|A|² + 2 (Q(F)-Q(E))²,
    ///
    /// returned as left side minus right side; nonnegative up to rounding.
    pub fn w4_gap(&self, f: Vector2<f64>, e: Vector2<f64>) -> f64 {
        let d = f - e;
        let lhs = (self.grad_w_relaxed(f) - self.grad_w_relaxed(e)).dot(&d);
        let pd = self.project_perp(f) - self.project_perp(e);
        let qf = self.q(f);
        let qe = self.q(e);
        let ad = self.a.dot(&d);
        let rhs = 8.0 * self.a_norm2 * pd.norm_squared()
            + 2.0 * (qf + qe) * ad * ad / self.a_norm2
            + 2.0 * (qf - qe) * (qf - qe);
        lhs - rhs
    }
}
