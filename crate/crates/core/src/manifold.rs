//! Riemannian primitives on compact Stiefel and Grassmann manifolds.
//!
//! A point of the Grassmannian `G(p,n)` (a p-dimensional subspace of ℝⁿ) is
//! represented by an n×p matrix with orthonormal columns, i.e. a point of
//! the compact Stiefel manifold `St(p,n)`. Tangent vectors at a subspace are
//! represented by horizontal lifts `Z` with `ZᵀY = 0`. Geodesics, the
//! exponential map and the logarithm map all have closed forms built from a
//! thin SVD of the lift:
//!
//! * geodesic: `Y(t) = [Y·V·cos(tΣ) + U·sin(tΣ)]·Vᵀ` for `Z = UΣVᵀ`,
//! * logarithm: `Z = U·arctan(Σ)·Vᵀ` for `Y₁(YᵀY₁)⁻¹ − Y = UΣVᵀ`,
//!
//! where cos/sin/arctan act on the diagonal only. The thin SVDs go through
//! [`crate::osvd::thin_svd`] so that generic intermediates get the oriented
//! sign convention and the computation is reproducible across backends.


use nalgebra::{DMatrix, DVector};

use crate::math;
use crate::osvd::{thin_svd, Determinism};

/// Max-abs tolerance on `‖YᵀY − I‖` for orthonormality checks.
pub const TOL_ORTH: f64 = 1e-10;

/// Condition-number ceiling for `YᵀY₁` before the logarithm map refuses.
pub const COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManifoldError {
    #[error("matrix is {rows}x{cols} but n >= p >= 1 is required")]
    DimensionError { rows: usize, cols: usize },
    #[error("dimension mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    DimensionMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("columns are not orthonormal: max |YᵀY - I| = {deviation:.3e} exceeds {tol:.3e}")]
    NotOrthonormal { deviation: f64, tol: f64 },
    #[error("lift is not horizontal at the base: max |ZᵀY| = {deviation:.3e} exceeds {tol:.3e}")]
    NotHorizontal { deviation: f64, tol: f64 },
    #[error("target lies on or near the cut locus of the base: cond(YᵀY₁) = {cond:.3e}")]
    CutLocus { cond: f64 },
}

/// An n×p matrix with orthonormal columns: a point of `St(p,n)` and a
/// representative of the subspace it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    y: DMatrix<f64>,
}

impl StiefelPoint {
    /// Validates `‖YᵀY − I‖_max ≤ TOL_ORTH`.
    pub fn new(y: DMatrix<f64>) -> Result<Self, ManifoldError> {
        Self::with_tol(y, TOL_ORTH)
    }

    pub fn with_tol(y: DMatrix<f64>, tol: f64) -> Result<Self, ManifoldError> {
        if !is_orthonormal(&y, tol)? {
            return Err(ManifoldError::NotOrthonormal {
                deviation: orth_deviation(&y),
                tol,
            });
        }
        Ok(StiefelPoint { y })
    }

    /// For matrices produced by operations that preserve orthonormality by
    /// construction (geodesics, SVD factors).
    pub(crate) fn new_unchecked(y: DMatrix<f64>) -> Self {
        debug_assert!(orth_deviation(&y) <= 1e-8, "unchecked StiefelPoint is off the manifold");
        StiefelPoint { y }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.y
    }

    /// Ambient dimension n.
    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    /// Frame size p.
    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Orthogonal projector `Y·Yᵀ` onto the spanned subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.y * self.y.transpose()
    }
}

/// Horizontal lift of a Grassmann tangent vector at a base frame:
/// an n×p matrix `Z` with `Zᵀ·Y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentLift {
    z: DMatrix<f64>,
    base: StiefelPoint,
}

impl TangentLift {
    pub fn new(z: DMatrix<f64>, base: StiefelPoint) -> Result<Self, ManifoldError> {
        if z.shape() != base.y.shape() {
            return Err(ManifoldError::DimensionMismatch {
                a_rows: z.nrows(),
                a_cols: z.ncols(),
                b_rows: base.y.nrows(),
                b_cols: base.y.ncols(),
            });
        }
        let deviation = (z.transpose() * &base.y).amax();
        if deviation > TOL_ORTH {
            return Err(ManifoldError::NotHorizontal {
                deviation,
                tol: TOL_ORTH,
            });
        }
        Ok(TangentLift { z, base })
    }

    pub(crate) fn new_unchecked(z: DMatrix<f64>, base: StiefelPoint) -> Self {
        TangentLift { z, base }
    }

    pub fn zero(base: StiefelPoint) -> Self {
        let z = DMatrix::zeros(base.n(), base.p());
        TangentLift { z, base }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    /// Riemannian norm `sqrt(tr(ZᵀZ))`.
    pub fn norm(&self) -> f64 {
        self.z.norm()
    }
}

/// Point-wise scalar product of two tangent vectors, `tr(Z₁ᵀZ₂)`.
pub fn inner(a: &TangentLift, b: &TangentLift) -> f64 {
    a.z.dot(&b.z)
}

/// A point of the Grassmannian, carried by one of its orthonormal
/// representatives. Two points are the same subspace iff their projectors
/// agree, regardless of the representative.
#[derive(Debug, Clone)]
pub struct GrassmannPoint {
    representative: StiefelPoint,
}

impl GrassmannPoint {
    pub fn new(representative: StiefelPoint) -> Self {
        GrassmannPoint { representative }
    }

    pub fn representative(&self) -> &StiefelPoint {
        &self.representative
    }

    pub fn projector(&self) -> DMatrix<f64> {
        self.representative.projector()
    }

    pub fn coincides_with(&self, other: &GrassmannPoint, tol: f64) -> Result<bool, ManifoldError> {
        same_subspace(&self.representative, &other.representative, tol)
    }
}

fn orth_deviation(y: &DMatrix<f64>) -> f64 {
    let p = y.ncols();
    (y.transpose() * y - DMatrix::identity(p, p)).amax()
}

/// True iff `‖yᵀy − I_p‖_max ≤ tol`.
pub fn is_orthonormal(y: &DMatrix<f64>, tol: f64) -> Result<bool, ManifoldError> {
    if y.ncols() == 0 || y.ncols() > y.nrows() {
        return Err(ManifoldError::DimensionError {
            rows: y.nrows(),
            cols: y.ncols(),
        });
    }
    Ok(orth_deviation(y) <= tol)
}

/// True iff the two frames span the same subspace: `‖AAᵀ − BBᵀ‖_max ≤ tol`.
pub fn same_subspace(a: &StiefelPoint, b: &StiefelPoint, tol: f64) -> Result<bool, ManifoldError> {
    if a.y.shape() != b.y.shape() {
        return Err(ManifoldError::DimensionMismatch {
            a_rows: a.n(),
            a_cols: a.p(),
            b_rows: b.n(),
            b_cols: b.p(),
        });
    }
    Ok((a.projector() - b.projector()).amax() <= tol)
}

/// The matrix `Y₁·(YᵀY₁)⁻¹ − Y` whose thin SVD feeds the logarithm map.
///
/// The p×p system is solved by LU factorization, never by explicit
/// inversion; a condition number above [`COND_MAX`] (the target sits on or
/// near the cut locus of the base) is an error.
pub fn normal_coords_matrix(
    base: &StiefelPoint,
    target: &StiefelPoint,
) -> Result<DMatrix<f64>, ManifoldError> {
    if base.y.shape() != target.y.shape() {
        return Err(ManifoldError::DimensionMismatch {
            a_rows: base.n(),
            a_cols: base.p(),
            b_rows: target.n(),
            b_cols: target.p(),
        });
    }
    let a = base.y.transpose() * &target.y;

    let sv = crate::osvd::singular_values(&a);
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > COND_MAX {
        return Err(ManifoldError::CutLocus { cond });
    }

    // Y₁A⁻¹ from Aᵀ·Wᵀ = Y₁ᵀ
    let w = a
        .transpose()
        .lu()
        .solve(&target.y.transpose())
        .ok_or(ManifoldError::CutLocus { cond })?;
    Ok(w.transpose() - &base.y)
}

/// Logarithm map: the horizontal lift of the velocity vector of the
/// geodesic from `base`'s subspace to `target`'s.
pub fn log_map(
    base: &StiefelPoint,
    target: &StiefelPoint,
) -> Result<(TangentLift, Determinism), ManifoldError> {
    let m = normal_coords_matrix(base, target)?;
    let f = thin_svd(&m);
    let r = f.rank();
    let atan_sigma = DVector::from_fn(r, |i, _| math::atan(f.sigma[i]));
    let z = if r == 0 {
        DMatrix::zeros(base.n(), base.p())
    } else {
        &f.u * DMatrix::from_diagonal(&atan_sigma) * f.v.transpose()
    };
    debug_assert!((z.transpose() * &base.y).amax() <= 1e-9);
    Ok((TangentLift::new_unchecked(z, base.clone()), f.determinism))
}

/// Geodesic `t ↦ Y(t)` leaving `base` with initial velocity `lift`.
///
/// `geodesic(base, lift, 0)` returns `base` unchanged (bit-for-bit) and
/// `geodesic(base, lift, 1) = exp_map(base, lift)`.
pub fn geodesic(
    base: &StiefelPoint,
    lift: &TangentLift,
    t: f64,
) -> Result<(StiefelPoint, Determinism), ManifoldError> {
    if lift.z.shape() != base.y.shape() {
        return Err(ManifoldError::DimensionMismatch {
            a_rows: lift.z.nrows(),
            a_cols: lift.z.ncols(),
            b_rows: base.n(),
            b_cols: base.p(),
        });
    }
    let deviation = (lift.z.transpose() * &base.y).amax();
    if deviation > TOL_ORTH {
        return Err(ManifoldError::NotHorizontal {
            deviation,
            tol: TOL_ORTH,
        });
    }

    let f = thin_svd(&lift.z);
    let r = f.rank();
    if r == 0 || t == 0.0 {
        return Ok((base.clone(), Determinism::Deterministic));
    }

    // With V restricted to the r kept columns, the full formula
    // [Y·V·cos(tΣ) + U·sin(tΣ)]·Vᵀ collapses to the rank-r update below;
    // the null-space columns of V contribute Y·(I − V_rV_rᵀ) exactly.
    let cos_m1 = DVector::from_fn(r, |i, _| math::cos(t * f.sigma[i]) - 1.0);
    let sin_d = DVector::from_fn(r, |i, _| math::sin(t * f.sigma[i]));
    let y = &base.y
        + &base.y * &f.v * DMatrix::from_diagonal(&cos_m1) * f.v.transpose()
        + &f.u * DMatrix::from_diagonal(&sin_d) * f.v.transpose();
    Ok((StiefelPoint::new_unchecked(y), f.determinism))
}

/// Exponential map: the geodesic endpoint at `t = 1`.
pub fn exp_map(
    base: &StiefelPoint,
    lift: &TangentLift,
) -> Result<(StiefelPoint, Determinism), ManifoldError> {
    geodesic(base, lift, 1.0)
}
