//! Oriented (sign-fixed) thin SVD for generic matrices.
//!
//! A plain SVD leaves the sign of every singular-vector pair `(φᵢ, ψᵢ)`
//! undetermined, so two backends (or two runs of one backend) can produce
//! different factors for the same matrix. For a *generic* matrix — all
//! nonzero singular values pairwise distinct — the sign ambiguity is the
//! only freedom left, and it can be removed by an intrinsic rule: flip each
//! pair so that `⟨s(φᵢ), φᵢ⟩ > 0`, where `s(φᵢ)` is the first column of the
//! input with a nonzero projection onto `φᵢ`. The result is a unique
//! factorization, which is what makes ROM databases reproducible
//! byte-for-byte.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::manifold::StiefelPoint;

/// Relative threshold under which a singular value counts as zero.
pub const TOL_RANK: f64 = 1e-12;

/// Default relative gap for declaring nonzero singular values distinct.
pub const DEFAULT_REL_GAP: f64 = 1e-10;

/// Factor for the witness-column projection threshold, relative to `‖S‖_F`.
pub const TOL_PROJ_FACTOR: f64 = 1e-12;

/// Whether a result is reproducible across SVD backends.
///
/// Orientation pins the factors of a generic matrix uniquely. When a
/// decomposed matrix is not generic the raw backend factors are passed
/// through and the result is flagged, so the genericity assumption stays
/// observable instead of silently failing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Determinism {
    /// Factors are unique; any correct backend produces the same values.
    Deterministic,
    /// A non-generic intermediate forced a raw (backend-dependent) SVD.
    NonGeneric,
}

impl Determinism {
    #[must_use]
    pub fn combine(self, other: Determinism) -> Determinism {
        match (self, other) {
            (Determinism::Deterministic, Determinism::Deterministic) => {
                Determinism::Deterministic
            }
            _ => Determinism::NonGeneric,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Determinism::Deterministic)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OsvdError {
    #[error("matrix is {rows}x{cols}; an oriented SVD requires cols <= rows (transpose first)")]
    WideMatrix { rows: usize, cols: usize },
    #[error("matrix is not generic: nonzero singular values {left:.6e} and {right:.6e} are not separated")]
    NotGeneric { left: f64, right: f64 },
    #[error("no witness column: every projection onto column {column} is below {tol:.3e}")]
    NoWitnessColumn { column: usize, tol: f64 },
    #[error("POD mode {mode} out of range 1..={rank}")]
    ModeOutOfRange { mode: usize, rank: usize },
}

/// The unique factorization `S = Φ·diag(σ)·Ψᵀ` of a generic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedSvd {
    /// Left singular vectors (spatial modes), n×r.
    pub phi: DMatrix<f64>,
    /// Singular values, strictly decreasing, all above `TOL_RANK·σ₁`.
    pub sigma: DVector<f64>,
    /// Right singular vectors (temporal modes), m×r.
    pub psi: DMatrix<f64>,
    /// Numerical rank r.
    pub rank: usize,
}

/// Leading-p factors of an oriented SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct PodFactors {
    pub phi_p: StiefelPoint,
    pub sigma_p: DVector<f64>,
    pub psi_p: StiefelPoint,
    pub mode: usize,
}

impl PodFactors {
    /// Rank-p reconstruction `S_p = Φ_p·diag(σ_p)·Ψ_pᵀ`.
    pub fn pod_snapshot(&self) -> DMatrix<f64> {
        let scaled = self.phi_p.matrix() * DMatrix::from_diagonal(&self.sigma_p);
        scaled * self.psi_p.matrix().transpose()
    }
}

/// Raw backend: one-sided Jacobi SVD.
///
/// Returns `(u, σ, v)` with `min(n, m)` columns each; `σ` is descending and
/// `u` columns are zero where `σ` is zero. Jacobi keeps full accuracy on
/// (nearly) rank-deficient inputs, which the logarithm-map intermediates
/// routinely are, and its rotations are deterministic.
pub(crate) fn jacobi_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (n, cols) = m.shape();
    if cols > n {
        // orthogonalize the short side, then swap factors back
        let (u, s, v) = jacobi_svd(&m.transpose());
        return (v, s, u);
    }
    let mut a = m.clone();
    let mut v = DMatrix::identity(cols, cols);
    let tol = 1e-14;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in p + 1..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * crate::math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + crate::math::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + crate::math::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / crate::math::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..n {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
                for i in 0..cols {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u_out = DMatrix::zeros(n, cols);
    let mut v_out = DMatrix::zeros(cols, cols);
    let mut sigma = DVector::zeros(cols);
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        v_out.set_column(k, &v.column(j).into_owned());
        if norms[j] > 0.0 {
            u_out.set_column(k, &(a.column(j) / norms[j]));
        }
    }
    (u_out, sigma, v_out)
}

/// Singular values only, descending.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    jacobi_svd(m).1
}

/// True iff every adjacent pair of nonzero singular values of `s` is
/// separated by more than `rel_gap` relative to the largest one.
pub fn is_generic(s: &DMatrix<f64>, rel_gap: f64) -> bool {
    let sv = singular_values(s);
    generic_gap_violation(sv.as_slice(), rel_gap).is_none()
}

/// First adjacent pair of kept singular values violating the gap, if any.
fn generic_gap_violation(sv: &[f64], rel_gap: f64) -> Option<(f64, f64)> {
    if sv.is_empty() {
        return None;
    }
    let s1 = sv[0];
    if s1 <= 0.0 {
        return None; // the zero matrix has no nonzero singular values
    }
    let rank = sv.iter().take_while(|&&x| x > TOL_RANK * s1).count();
    for i in 0..rank.saturating_sub(1) {
        if (sv[i] - sv[i + 1]) / s1 <= rel_gap {
            return Some((sv[i], sv[i + 1]));
        }
    }
    None
}

/// Orientation sign for a unit vector `phi` against the ordered columns of
/// `s`: the sign of `⟨s(φ), φ⟩` where `s(φ)` is the first column whose
/// projection magnitude exceeds `tol_proj`.
pub fn oriented_sign(
    s: &DMatrix<f64>,
    phi: &DVector<f64>,
    tol_proj: f64,
) -> Result<f64, OsvdError> {
    for j in 0..s.ncols() {
        let d = s.column(j).dot(phi);
        if d.abs() > tol_proj {
            return Ok(if d > 0.0 { 1.0 } else { -1.0 });
        }
    }
    Err(OsvdError::NoWitnessColumn {
        column: 0,
        tol: tol_proj,
    })
}

/// A rank-truncated thin SVD with the orientation convention applied when
/// the matrix is generic.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    /// Left factors, n×r.
    pub u: DMatrix<f64>,
    /// Kept singular values, descending, r entries.
    pub sigma: DVector<f64>,
    /// Right factors, m×r.
    pub v: DMatrix<f64>,
    pub determinism: Determinism,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Thin SVD of an arbitrary dense matrix, truncated at `TOL_RANK·σ₁` and
/// sign-fixed against the columns of `m` itself whenever `m` is generic.
///
/// Never fails: non-generic inputs (or a column with no usable witness)
/// fall back to the backend's raw signs and are flagged `NonGeneric`.
pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (u_full, sv, v_full) = jacobi_svd(m);

    let s1 = if sv.is_empty() { 0.0 } else { sv[0] };
    let rank = if s1 > 0.0 {
        sv.iter().take_while(|&&x| x > TOL_RANK * s1).count()
    } else {
        0
    };

    let mut u = u_full.columns(0, rank).into_owned();
    let mut v = v_full.columns(0, rank).into_owned();
    let sigma = DVector::from_fn(rank, |i, _| sv[i]);

    let mut determinism = if generic_gap_violation(sv.as_slice(), DEFAULT_REL_GAP).is_none() {
        Determinism::Deterministic
    } else {
        Determinism::NonGeneric
    };

    if determinism.is_deterministic() {
        let tol_proj = TOL_PROJ_FACTOR * m.norm();
        for i in 0..rank {
            let phi = u.column(i).into_owned();
            match oriented_sign(m, &phi, tol_proj) {
                Ok(sign) => {
                    if sign < 0.0 {
                        u.column_mut(i).neg_mut();
                        v.column_mut(i).neg_mut();
                    }
                }
                Err(_) => {
                    // keep the backend sign for this column only
                    determinism = Determinism::NonGeneric;
                }
            }
        }
    }

    ThinSvd {
        u,
        sigma,
        v,
        determinism,
    }
}

/// The oriented SVD of a generic matrix with `m ≤ n`.
///
/// Unlike [`thin_svd`] this is strict: a non-generic input or a missing
/// witness column is an error.
pub fn oriented_svd(s: &DMatrix<f64>) -> Result<OrientedSvd, OsvdError> {
    if s.ncols() > s.nrows() {
        return Err(OsvdError::WideMatrix {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    let (u_full, sv, v_full) = jacobi_svd(s);
    if let Some((left, right)) = generic_gap_violation(sv.as_slice(), DEFAULT_REL_GAP) {
        return Err(OsvdError::NotGeneric { left, right });
    }

    let s1 = if sv.is_empty() { 0.0 } else { sv[0] };
    let rank = if s1 > 0.0 {
        sv.iter().take_while(|&&x| x > TOL_RANK * s1).count()
    } else {
        0
    };

    let mut phi = u_full.columns(0, rank).into_owned();
    let mut psi = v_full.columns(0, rank).into_owned();
    let sigma = DVector::from_fn(rank, |i, _| sv[i]);

    let tol_proj = TOL_PROJ_FACTOR * s.norm();
    for i in 0..rank {
        let col = phi.column(i).into_owned();
        let sign = oriented_sign(s, &col, tol_proj).map_err(|_| OsvdError::NoWitnessColumn {
            column: i,
            tol: tol_proj,
        })?;
        if sign < 0.0 {
            phi.column_mut(i).neg_mut();
            psi.column_mut(i).neg_mut();
        }
    }

    Ok(OrientedSvd {
        phi,
        sigma,
        psi,
        rank,
    })
}

/// Keep the leading `p` triples of an oriented SVD.
pub fn pod_truncate(f: &OrientedSvd, p: usize) -> Result<PodFactors, OsvdError> {
    if p == 0 || p > f.rank {
        return Err(OsvdError::ModeOutOfRange {
            mode: p,
            rank: f.rank,
        });
    }
    let phi_p = StiefelPoint::new(f.phi.columns(0, p).into_owned())
        .expect("leading SVD columns are orthonormal");
    let psi_p = StiefelPoint::new(f.psi.columns(0, p).into_owned())
        .expect("leading SVD columns are orthonormal");
    Ok(PodFactors {
        phi_p,
        sigma_p: DVector::from_fn(p, |i, _| f.sigma[i]),
        psi_p,
        mode: p,
    })
}
