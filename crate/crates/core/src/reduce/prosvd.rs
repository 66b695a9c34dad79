//! Streaming truncated SVD with a Procrustes-aligned basis.
//!
//! Maintains `X ≈ Q R Wᵀ` for the columns seen so far, with `Q` (`n x k`)
//! orthonormal and `R` (`k x k`) carrying the discounted top-k singular
//! values. Each block update follows the incremental block method
//! (Gram-Schmidt, augmented QR, SVD of the small core) and then picks, among
//! all orthonormal bases of the new top-k subspace, the one closest to the
//! previous `Q` in Frobenius norm. `W` is never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_error, svd, thin_qr};
use crate::math;

/// Relative pivot threshold for the rank check at initialization.
pub const INIT_RANK_TOL: f64 = 1e-12;
/// Floor applied to near-zero diagonal entries of the residual QR factor.
pub const RESIDUAL_DIAG_FLOOR: f64 = 1e-14;
/// Drift in `QᵀQ` that triggers re-orthonormalization.
pub const REORTHO_TOL: f64 = 1e-8;

/// How the basis of the new top-k subspace is chosen after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BasisAlignment {
    /// Rotate to minimize `‖Q_t - Q_{t-1}‖_F` (proSVD).
    #[default]
    Procrustes,
    /// Keep the raw left singular vectors of the core (plain block update).
    SingularVectors,
}

/// Intermediate quantities of one update, for diagnostics and oracle tests.
#[derive(Debug, Clone)]
pub struct UpdateTrace {
    /// Basis before the update.
    pub previous: DMatrix<f64>,
    /// `Q̂ U₁`: the singular-vector basis of the new top-k subspace.
    pub unrotated: DMatrix<f64>,
    /// Orthogonal `T` with `Q_t = Q̂ U₁ Tᵀ`.
    pub rotation: DMatrix<f64>,
    /// Discounted top-k singular values.
    pub singular_values: DVector<f64>,
    /// Whether the re-orthonormalization fallback ran.
    pub reorthonormalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProSvd {
    basis: DMatrix<f64>,
    inner: DMatrix<f64>,
    decay: f64,
    samples_seen: u64,
    alignment: BasisAlignment,
}

impl ProSvd {
    /// Initializes from an `n x l` block with `l >= k`: thin QR, keeping the
    /// first `k` columns of `Q` and the leading `k x k` block of `R`.
    pub fn init(x0: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, l) = x0.shape();
        if k == 0 {
            return Err(Error::invalid("retained dimension k must be positive"));
        }
        if k > n {
            return Err(Error::invalid(alloc::format!(
                "retained dimension {k} exceeds data dimension {n}"
            )));
        }
        if l < k {
            return Err(Error::invalid(alloc::format!(
                "initial block has {l} columns, need at least k = {k}"
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial block"));
        }
        let (q, r) = thin_qr(x0.clone());
        let scale = r.amax();
        for i in 0..k {
            let pivot = r[(i, i)];
            if !(pivot > INIT_RANK_TOL * scale) {
                return Err(Error::RankDeficientInit { column: i, pivot });
            }
        }
        Ok(Self {
            basis: q.columns(0, k).into_owned(),
            inner: r.view((0, 0), (k, k)).into_owned(),
            decay: 1.0,
            samples_seen: l as u64,
            alignment: BasisAlignment::Procrustes,
        })
    }

    /// Rebuilds a tracker from stored factors.
    pub fn from_parts(
        basis: DMatrix<f64>,
        inner: DMatrix<f64>,
        decay: f64,
        samples_seen: u64,
    ) -> Result<Self> {
        let k = basis.ncols();
        if inner.shape() != (k, k) {
            return Err(Error::shape("proSVD inner block", (k, k), inner.shape()));
        }
        if basis.iter().chain(inner.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("proSVD factors"));
        }
        if orthonormality_error(&basis) > REORTHO_TOL {
            return Err(Error::invalid("basis columns are not orthonormal"));
        }
        Self {
            basis,
            inner,
            decay: 1.0,
            samples_seen,
            alignment: BasisAlignment::Procrustes,
        }
        .with_decay(decay)
    }

    /// Sets the per-update discount on the singular values, in `(0, 1]`.
    pub fn with_decay(mut self, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1]"));
        }
        self.decay = decay;
        Ok(self)
    }

    pub fn with_alignment(mut self, alignment: BasisAlignment) -> Self {
        self.alignment = alignment;
        self
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn inner(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn alignment(&self) -> BasisAlignment {
        self.alignment
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Tracked singular values (those of `R`), largest first.
    pub fn singular_values(&self) -> Result<DVector<f64>> {
        Ok(svd(self.inner.clone())?.singular_values)
    }

    /// `Qᵀ x`.
    pub fn project(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("proSVD projection input", (self.dim(), 1), (x.len(), 1)));
        }
        let x = nalgebra::DVectorView::from_slice(x, x.len());
        Ok(self.basis.tr_mul(&x))
    }

    /// `Qᵀ X` for a block of column samples.
    pub fn project_block(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(Error::shape("proSVD projection input", (self.dim(), x.ncols()), x.shape()));
        }
        Ok(self.basis.tr_mul(x))
    }

    /// Folds `b` new columns into the factorization.
    pub fn update(&mut self, x_new: &DMatrix<f64>) -> Result<()> {
        self.update_traced(x_new).map(|_| ())
    }

    /// As [`ProSvd::update`], also returning the intermediate quantities.
    pub fn update_traced(&mut self, x_new: &DMatrix<f64>) -> Result<UpdateTrace> {
        let n = self.dim();
        let k = self.rank();
        let b = x_new.ncols();
        if x_new.nrows() != n {
            return Err(Error::shape("proSVD update block", (n, b), x_new.shape()));
        }
        if b == 0 {
            return Err(Error::invalid("update block must have at least one column"));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("proSVD update block"));
        }

        // Classical Gram-Schmidt against Q, run twice for orthogonality.
        let q = &self.basis;
        let mut coeffs = q.tr_mul(x_new);
        let mut residual = x_new - q * &coeffs;
        let correction = q.tr_mul(&residual);
        residual -= q * &correction;
        coeffs += correction;

        let (q_perp, r_perp) = if n > k {
            let (qp, mut rp) = thin_qr(residual);
            let p = rp.nrows().min(rp.ncols());
            for i in 0..p {
                if math::abs(rp[(i, i)]) < RESIDUAL_DIAG_FLOOR {
                    rp[(i, i)] = RESIDUAL_DIAG_FLOOR;
                }
            }
            (qp, rp)
        } else {
            (DMatrix::zeros(n, 0), DMatrix::zeros(0, b))
        };
        let r = q_perp.ncols();

        let mut core = DMatrix::zeros(k + r, k + b);
        core.view_mut((0, 0), (k, k)).copy_from(&self.inner);
        core.view_mut((0, k), (k, b)).copy_from(&coeffs);
        core.view_mut((k, k), (r, b)).copy_from(&r_perp);

        let decomposition = svd(core)?;
        let u = decomposition
            .u
            .ok_or_else(|| Error::Numerical("svd returned no left vectors".into()))?;
        let v_t = decomposition
            .v_t
            .ok_or_else(|| Error::Numerical("svd returned no right vectors".into()))?;
        let sigma = decomposition.singular_values.rows(0, k) * self.decay;

        let u1 = u.columns(0, k);
        let unrotated = &self.basis * u1.rows(0, k) + &q_perp * u1.rows(k, r);

        let rotation = match self.alignment {
            BasisAlignment::Procrustes => procrustes_rotation(&u1.rows(0, k).into_owned())?,
            BasisAlignment::SingularVectors => DMatrix::identity(k, k),
        };

        let mut basis = &unrotated * rotation.transpose();

        // Inner block T Σ₁ R_vᵀ with V₁ = Q_v R_v.
        let v1 = v_t.rows(0, k).transpose();
        let (_, r_v) = thin_qr(v1);
        let mut inner = &rotation * DMatrix::from_diagonal(&sigma) * r_v.transpose();

        let mut reorthonormalized = false;
        if orthonormality_error(&basis) > REORTHO_TOL {
            let (q_fix, r_fix) = thin_qr(basis);
            basis = q_fix;
            inner = r_fix * inner;
            reorthonormalized = true;
        }
        if basis.iter().chain(inner.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("proSVD update produced non-finite factors".into()));
        }

        let previous = core::mem::replace(&mut self.basis, basis);
        self.inner = inner;
        self.samples_seen += b as u64;
        Ok(UpdateTrace {
            previous,
            unrotated,
            rotation,
            singular_values: sigma,
            reorthonormalized,
        })
    }
}

/// Orthogonal Procrustes solution: for `M = Q_prevᵀ B` (with `B` the new
/// basis candidate), returns `T = Ũ Ṽᵀ` from `M = Ũ Σ̃ Ṽᵀ`, which minimizes
/// `‖B Tᵀ - Q_prev‖_F` over orthogonal `T`.
pub fn procrustes_rotation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd(m.clone())?;
    let u = s.u.ok_or_else(|| Error::Numerical("svd returned no left vectors".into()))?;
    let v_t = s
        .v_t
        .ok_or_else(|| Error::Numerical("svd returned no right vectors".into()))?;
    Ok(u * v_t)
}
