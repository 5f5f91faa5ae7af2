//! Symmetric pseudoinverse and weighted one-step moments.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`pinv_psd`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues with `|λ| ≤ d · EIGEN_RTOL · max|λ|` are treated as zero.
pub const EIGEN_RTOL: f64 = 1e-12;

/// Dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after checking symmetry; the stored matrix is `(m + mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSymmetric {
                asymmetry: f64::INFINITY,
            });
        }
        let scale = m.amax();
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(DMatrix::identity(d, d))
    }

    pub fn from_row_slice(d: usize, data: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(d, d, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `self / s`
    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    /// `self − v vᵀ`
    pub fn minus_outer(&self, v: &DVector<f64>) -> SymMatrix {
        SymMatrix::symmetrized(&self.0 - v * v.transpose())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    /// `uᵀ M v`
    pub fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.0 * v))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Moore–Penrose pseudoinverse of a symmetric matrix via its eigendecomposition.
///
/// The result satisfies the four Penrose conditions up to rounding and is
/// itself symmetric; it is PSD whenever the input is.
pub fn pinv_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let d = m.dim();
    if d == 0 {
        return Ok(SymMatrix::zeros(0));
    }
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(m.0.clone());
    let max = eigenvalues.amax();
    if max == 0.0 {
        return Ok(SymMatrix::zeros(d));
    }
    let cutoff = d as f64 * EIGEN_RTOL * max;
    let inv = DVector::from_iterator(
        d,
        eigenvalues
            .iter()
            .map(|&l| if l.abs() <= cutoff { 0.0 } else { 1.0 / l }),
    );
    let scaled = &eigenvectors * DMatrix::from_diagonal(&inv);
    Ok(SymMatrix::symmetrized(scaled * eigenvectors.transpose()))
}

/// Unnormalized weighted conditional moments of a one-step increment.
///
/// With weights `w_k = p_k · L_k` on the children of a node:
/// `m0 = Σ w_k`, `bbar_u = Σ w_k Δ_k`, `cbar_u = Σ w_k Δ_k Δ_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepMoments {
    pub m0: f64,
    pub bbar_u: DVector<f64>,
    pub cbar_u: SymMatrix,
}

impl OneStepMoments {
    /// Weighted Gram assembly over the child increments of a node.
    pub fn assemble(weights: &[f64], increments: &[DVector<f64>]) -> Self {
        assert_eq!(weights.len(), increments.len(), "one weight per child");
        let d = increments.first().map_or(0, |v| v.len());
        let mut m0 = 0.0;
        let mut b = DVector::zeros(d);
        let mut c = DMatrix::zeros(d, d);
        for (&w, delta) in weights.iter().zip(increments) {
            m0 += w;
            b.axpy(w, delta, 1.0);
            c.ger(w, delta, delta, 1.0);
        }
        OneStepMoments {
            m0,
            bbar_u: b,
            cbar_u: SymMatrix::symmetrized(c),
        }
    }

    /// `‖c c⁺ b − b‖∞ / max(‖b‖∞, 1e-300)`; zero when the drift is in the range of `c`.
    pub fn range_residual(&self, cbar_pinv: &SymMatrix) -> f64 {
        let proj = self.cbar_u.mul_vec(&cbar_pinv.mul_vec(&self.bbar_u));
        let diag = (0..self.cbar_u.dim())
            .map(|i| self.cbar_u.matrix()[(i, i)])
            .fold(0.0, f64::max);
        let scale = self.bbar_u.amax().max((self.m0 * diag).sqrt()).max(1e-300);
        (proj - &self.bbar_u).amax() / scale
    }
}

/// Moments of a node with weights `p_k · L_k`.
pub fn weighted_moments(
    probs: &[f64],
    child_weights: &[f64],
    increments: &[DVector<f64>],
) -> OneStepMoments {
    let w: Vec<f64> = probs
        .iter()
        .zip(child_weights)
        .map(|(p, l)| p * l)
        .collect();
    OneStepMoments::assemble(&w, increments)
}

pub(crate) fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
