//! Curves through training frames on compact Stiefel manifolds, and the
//! space-time reconstruction of snapshot matrices at unseen parameters.
//!
//! Given training frames `Y₁,…,Y_N` at parameters `λ₁<…<λ_N` and a chosen
//! reference node `i₀`, the curve is built by linearizing at the reference:
//! every node is pulled into the tangent space with the logarithm map,
//! the lifts `Z_k` are interpolated entry-wise (Lagrange polynomials by
//! default), and the result is pushed back with the exponential map. The
//! curve hits the reference frame exactly and passes through the *subspace*
//! of every other training frame, though generally not through the matrix
//! itself.
//!
//! The space-time reconstruction runs that curve once for the spatial
//! factors `Φ_p` and once for the temporal factors `Ψ_p` of a POD database,
//! couples them through the mixed part `M_k = Φ(λ_k)ᵀ·S_p⁽ᵏ⁾·Ψ(λ_k)`, and
//! returns `S̃ = Φ(λ̃)·M(λ̃)·Ψ(λ̃)ᵀ`. At every training node this reproduces
//! `S_p⁽ᵏ⁾`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::manifold::{exp_map, log_map, ManifoldError, StiefelPoint, TangentLift};
use crate::osvd::{oriented_svd, pod_truncate, Determinism, OsvdError, PodFactors};
use crate::snapshot::{FieldKind, SnapshotMatrix, SnapshotMeta};

/// Version tag written into ROM database manifests.
pub const ROM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpError {
    #[error("need at least two training nodes, got {count}")]
    TooFewNodes { count: usize },
    #[error("training parameters are not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("duplicate interpolation parameter {value}")]
    DuplicateParams { value: f64 },
    #[error("training point {index} is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    ShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("reference index {index} out of range for {count} nodes")]
    RefIndexOutOfRange { index: usize, count: usize },
    #[error("reference parameter {value} does not match any training node")]
    RefParamNotANode { value: f64 },
    #[error("POD mode {mode} exceeds the minimum numerical rank {min_rank} of the training set")]
    ModeTooLarge { mode: usize, min_rank: usize },
    #[error("training snapshots disagree in field kind or shape")]
    MixedTrainingSet,
    #[error("logarithm map failed at training node {node}: {source}")]
    NodeLog {
        node: usize,
        source: ManifoldError,
    },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Osvd(#[from] OsvdError),
}

/// Interpolation family for tangent lifts and the mixed part.
///
/// Global Lagrange polynomials are the default; the piecewise-linear
/// fallback avoids Runge oscillation on larger training sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpScheme {
    #[default]
    Lagrange,
    PiecewiseLinear,
}

/// Lagrange weights `wᵢ(λ) = Π_{j≠i} (λ−λⱼ)/(λᵢ−λⱼ)`.
///
/// They form a partition of unity and satisfy `wᵢ(λₖ) = δᵢₖ` exactly at the
/// nodes (the factor `λ − λₖ` vanishes exactly in floating point).
pub fn lagrange_weights(params: &[f64], lambda: f64) -> Result<Vec<f64>, InterpError> {
    check_distinct(params)?;
    let n = params.len();
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = 1.0;
        for j in 0..n {
            if i != j {
                w *= (lambda - params[j]) / (params[i] - params[j]);
            }
        }
        weights.push(w);
    }
    Ok(weights)
}

/// Hat-function weights on the training grid; outside the hull the first or
/// last segment is extended linearly.
pub fn piecewise_linear_weights(params: &[f64], lambda: f64) -> Result<Vec<f64>, InterpError> {
    check_increasing(params)?;
    let n = params.len();
    let mut weights = alloc::vec![0.0; n];
    let seg = if lambda <= params[0] {
        0
    } else if lambda >= params[n - 1] {
        n - 2
    } else {
        (0..n - 1)
            .find(|&i| lambda >= params[i] && lambda <= params[i + 1])
            .expect("lambda inside the hull")
    };
    let t = (lambda - params[seg]) / (params[seg + 1] - params[seg]);
    weights[seg] = 1.0 - t;
    weights[seg + 1] = t;
    Ok(weights)
}

fn scheme_weights(
    scheme: InterpScheme,
    params: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, InterpError> {
    match scheme {
        InterpScheme::Lagrange => lagrange_weights(params, lambda),
        InterpScheme::PiecewiseLinear => piecewise_linear_weights(params, lambda),
    }
}

fn check_distinct(params: &[f64]) -> Result<(), InterpError> {
    for i in 0..params.len() {
        for j in i + 1..params.len() {
            if params[i] == params[j] {
                return Err(InterpError::DuplicateParams { value: params[i] });
            }
        }
    }
    Ok(())
}

fn check_increasing(params: &[f64]) -> Result<(), InterpError> {
    for i in 1..params.len() {
        if params[i] <= params[i - 1] {
            return Err(InterpError::NotIncreasing { index: i });
        }
    }
    Ok(())
}

/// Training frames with their parameter values and the reference node.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    params: Vec<f64>,
    points: Vec<StiefelPoint>,
    ref_index: usize,
}

impl TrainingSet {
    pub fn new(
        params: Vec<f64>,
        points: Vec<StiefelPoint>,
        ref_index: usize,
    ) -> Result<Self, InterpError> {
        if params.len() < 2 {
            return Err(InterpError::TooFewNodes {
                count: params.len(),
            });
        }
        if params.len() != points.len() {
            return Err(InterpError::MixedTrainingSet);
        }
        check_increasing(&params)?;
        if ref_index >= params.len() {
            return Err(InterpError::RefIndexOutOfRange {
                index: ref_index,
                count: params.len(),
            });
        }
        let (n, p) = (points[0].n(), points[0].p());
        for (i, pt) in points.iter().enumerate() {
            if pt.n() != n || pt.p() != p {
                return Err(InterpError::ShapeMismatch {
                    index: i,
                    rows: pt.n(),
                    cols: pt.p(),
                    want_rows: n,
                    want_cols: p,
                });
            }
        }
        Ok(TrainingSet {
            params,
            points,
            ref_index,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &[StiefelPoint] {
        &self.points
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// A fitted curve `λ ↦ Y(λ)` on the compact Stiefel manifold.
///
/// Fitting computes the tangent lifts of all training frames at the
/// reference once; evaluations then cost one thin SVD each.
#[derive(Debug, Clone)]
pub struct StiefelCurve {
    params: Vec<f64>,
    reference: StiefelPoint,
    lifts: Vec<DMatrix<f64>>,
    scheme: InterpScheme,
    determinism: Determinism,
    /// `p = n`: the Grassmannian is a single point and the curve collapses
    /// to the reference representative.
    degenerate: bool,
}

impl StiefelCurve {
    pub fn fit(train: &TrainingSet) -> Result<Self, InterpError> {
        Self::fit_with(train, InterpScheme::Lagrange)
    }

    pub fn fit_with(train: &TrainingSet, scheme: InterpScheme) -> Result<Self, InterpError> {
        let reference = train.points[train.ref_index].clone();
        let degenerate = reference.p() == reference.n();
        let mut determinism = Determinism::Deterministic;
        let mut lifts = Vec::with_capacity(train.len());
        if degenerate {
            return Ok(StiefelCurve {
                params: train.params.clone(),
                reference,
                lifts,
                scheme,
                determinism,
                degenerate,
            });
        }
        for (k, point) in train.points.iter().enumerate() {
            if k == train.ref_index {
                lifts.push(DMatrix::zeros(reference.n(), reference.p()));
                continue;
            }
            let (lift, det) = log_map(&reference, point)
                .map_err(|source| InterpError::NodeLog { node: k, source })?;
            determinism = determinism.combine(det);
            lifts.push(lift.matrix().clone());
        }
        Ok(StiefelCurve {
            params: train.params.clone(),
            reference,
            lifts,
            scheme,
            determinism,
            degenerate,
        })
    }

    /// Determinism of the fitted lifts alone (evaluations may downgrade
    /// further if the combined lift is non-generic).
    pub fn determinism(&self) -> Determinism {
        self.determinism
    }

    pub fn reference(&self) -> &StiefelPoint {
        &self.reference
    }

    pub fn at(&self, lambda: f64) -> Result<(StiefelPoint, Determinism), InterpError> {
        if self.degenerate {
            return Ok((self.reference.clone(), self.determinism));
        }
        let weights = scheme_weights(self.scheme, &self.params, lambda)?;
        let mut z = DMatrix::zeros(self.reference.n(), self.reference.p());
        for (w, lift) in weights.iter().zip(&self.lifts) {
            if *w != 0.0 {
                z += lift * *w;
            }
        }
        let lift = TangentLift::new_unchecked(z, self.reference.clone());
        let (point, det) = exp_map(&self.reference, &lift)?;
        Ok((point, self.determinism.combine(det)))
    }
}

/// One-shot evaluation of the curve through `train` at `lambda`.
pub fn stiefel_curve(
    train: &TrainingSet,
    lambda: f64,
) -> Result<(StiefelPoint, Determinism), InterpError> {
    StiefelCurve::fit(train)?.at(lambda)
}

/// Ordered per-parameter POD factors of one field, ready for space-time
/// interpolation.
#[derive(Debug, Clone)]
pub struct RomDatabase {
    params: Vec<f64>,
    mode: usize,
    factors: Vec<PodFactors>,
    ref_index: usize,
    field_kind: FieldKind,
    format_version: u32,
    meta: SnapshotMeta,
}

impl RomDatabase {
    /// Oriented SVD + truncation of every training snapshot.
    ///
    /// Snapshots may arrive in any order; they are sorted by parameter.
    /// `ref_lambda = None` selects the node nearest the median parameter.
    pub fn build(
        snapshots: &[SnapshotMatrix],
        mode: usize,
        ref_lambda: Option<f64>,
    ) -> Result<Self, InterpError> {
        if snapshots.len() < 2 {
            return Err(InterpError::TooFewNodes {
                count: snapshots.len(),
            });
        }
        let kind = snapshots[0].kind;
        let (n, m) = (snapshots[0].nrows(), snapshots[0].ncols());
        if snapshots
            .iter()
            .any(|s| s.kind != kind || s.nrows() != n || s.ncols() != m)
        {
            return Err(InterpError::MixedTrainingSet);
        }

        let mut order: Vec<usize> = (0..snapshots.len()).collect();
        order.sort_by(|&a, &b| snapshots[a].param.partial_cmp(&snapshots[b].param).unwrap());
        let params: Vec<f64> = order.iter().map(|&i| snapshots[i].param).collect();
        check_increasing(&params)?;

        let mut svds = Vec::with_capacity(order.len());
        for &i in &order {
            svds.push(oriented_svd(&snapshots[i].data)?);
        }
        let min_rank = svds.iter().map(|f| f.rank).min().unwrap_or(0);
        if mode == 0 || mode > min_rank {
            return Err(InterpError::ModeTooLarge { mode, min_rank });
        }
        let mut factors = Vec::with_capacity(svds.len());
        for f in &svds {
            factors.push(pod_truncate(f, mode)?);
        }

        let ref_index = match ref_lambda {
            Some(value) => find_node(&params, value)?,
            None => default_ref_index(&params),
        };

        Ok(RomDatabase {
            params,
            mode,
            factors,
            ref_index,
            field_kind: kind,
            format_version: ROM_FORMAT_VERSION,
            meta: snapshots[order[0]].meta.clone(),
        })
    }

    /// Reassemble a database from persisted parts, re-validating invariants.
    pub fn from_parts(
        params: Vec<f64>,
        factors: Vec<PodFactors>,
        ref_index: usize,
        field_kind: FieldKind,
        format_version: u32,
        meta: SnapshotMeta,
    ) -> Result<Self, InterpError> {
        if params.len() < 2 {
            return Err(InterpError::TooFewNodes {
                count: params.len(),
            });
        }
        if params.len() != factors.len() {
            return Err(InterpError::MixedTrainingSet);
        }
        check_increasing(&params)?;
        if ref_index >= params.len() {
            return Err(InterpError::RefIndexOutOfRange {
                index: ref_index,
                count: params.len(),
            });
        }
        let mode = factors[0].mode;
        let (n, m) = (factors[0].phi_p.n(), factors[0].psi_p.n());
        for (i, f) in factors.iter().enumerate() {
            if f.mode != mode || f.phi_p.n() != n || f.psi_p.n() != m || f.phi_p.p() != mode {
                return Err(InterpError::ShapeMismatch {
                    index: i,
                    rows: f.phi_p.n(),
                    cols: f.phi_p.p(),
                    want_rows: n,
                    want_cols: mode,
                });
            }
        }
        Ok(RomDatabase {
            params,
            mode,
            factors,
            ref_index,
            field_kind,
            format_version,
            meta,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn factors(&self) -> &[PodFactors] {
        &self.factors
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn field_kind(&self) -> FieldKind {
        self.field_kind
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn meta(&self) -> &SnapshotMeta {
        &self.meta
    }

    /// Spatial rows n.
    pub fn n(&self) -> usize {
        self.factors[0].phi_p.n()
    }

    /// Temporal rows m (time steps).
    pub fn m(&self) -> usize {
        self.factors[0].psi_p.n()
    }

    /// `S_p⁽ᵏ⁾` for training node k.
    pub fn pod_snapshot(&self, k: usize) -> DMatrix<f64> {
        self.factors[k].pod_snapshot()
    }
}

/// Node nearest the median of the training parameters (lower index wins a
/// tie).
pub fn default_ref_index(params: &[f64]) -> usize {
    let n = params.len();
    let median = if n % 2 == 1 {
        params[n / 2]
    } else {
        0.5 * (params[n / 2 - 1] + params[n / 2])
    };
    let mut best = 0;
    for i in 1..n {
        if (params[i] - median).abs() < (params[best] - median).abs() {
            best = i;
        }
    }
    best
}

fn find_node(params: &[f64], value: f64) -> Result<usize, InterpError> {
    let tol = 1e-12 * value.abs().max(1.0);
    params
        .iter()
        .position(|&p| (p - value).abs() <= tol)
        .ok_or(InterpError::RefParamNotANode { value })
}

/// The coupling matrices `M_k = Φ(λ_k)ᵀ·S_p⁽ᵏ⁾·Ψ(λ_k)`, p×p each.
#[derive(Debug, Clone)]
pub struct MixedPart {
    pub m_k: Vec<DMatrix<f64>>,
}

pub fn mixed_part(
    db: &RomDatabase,
    phi_at_nodes: &[StiefelPoint],
    psi_at_nodes: &[StiefelPoint],
) -> Result<MixedPart, InterpError> {
    let n_nodes = db.params.len();
    if phi_at_nodes.len() != n_nodes || psi_at_nodes.len() != n_nodes {
        return Err(InterpError::MixedTrainingSet);
    }
    let p = db.mode;
    let mut m_k = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let (phi, psi) = (&phi_at_nodes[k], &psi_at_nodes[k]);
        if phi.n() != db.n() || phi.p() != p || psi.n() != db.m() || psi.p() != p {
            return Err(InterpError::ShapeMismatch {
                index: k,
                rows: phi.n(),
                cols: phi.p(),
                want_rows: db.n(),
                want_cols: p,
            });
        }
        let sp = db.pod_snapshot(k);
        m_k.push(phi.matrix().transpose() * sp * psi.matrix());
    }
    Ok(MixedPart { m_k })
}

/// Result of a space-time interpolation.
#[derive(Debug, Clone)]
pub struct Interpolated {
    pub snapshot: SnapshotMatrix,
    pub determinism: Determinism,
    /// `lambda` fell outside the training hull.
    pub extrapolated: bool,
}

/// Space-time interpolation `S̃ = Φ(λ̃)·M(λ̃)·Ψ(λ̃)ᵀ` with Lagrange weights.
pub fn st_interpolate(db: &RomDatabase, lambda: f64) -> Result<Interpolated, InterpError> {
    st_interpolate_with(db, lambda, InterpScheme::Lagrange)
}

pub fn st_interpolate_with(
    db: &RomDatabase,
    lambda: f64,
    scheme: InterpScheme,
) -> Result<Interpolated, InterpError> {
    let spatial = TrainingSet::new(
        db.params.clone(),
        db.factors.iter().map(|f| f.phi_p.clone()).collect(),
        db.ref_index,
    )?;
    let temporal = TrainingSet::new(
        db.params.clone(),
        db.factors.iter().map(|f| f.psi_p.clone()).collect(),
        db.ref_index,
    )?;
    let phi_curve = StiefelCurve::fit_with(&spatial, scheme)?;
    let psi_curve = StiefelCurve::fit_with(&temporal, scheme)?;

    let mut determinism = phi_curve.determinism().combine(psi_curve.determinism());
    let n_nodes = db.params.len();
    let mut phi_nodes = Vec::with_capacity(n_nodes);
    let mut psi_nodes = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let (phi, d1) = phi_curve.at(db.params[k])?;
        let (psi, d2) = psi_curve.at(db.params[k])?;
        determinism = determinism.combine(d1).combine(d2);
        phi_nodes.push(phi);
        psi_nodes.push(psi);
    }
    let mixed = mixed_part(db, &phi_nodes, &psi_nodes)?;

    let weights = scheme_weights(scheme, &db.params, lambda)?;
    let p = db.mode;
    let mut m_interp = DMatrix::zeros(p, p);
    for (w, mk) in weights.iter().zip(&mixed.m_k) {
        if *w != 0.0 {
            m_interp += mk * *w;
        }
    }

    let (phi_t, d1) = phi_curve.at(lambda)?;
    let (psi_t, d2) = psi_curve.at(lambda)?;
    determinism = determinism.combine(d1).combine(d2);

    let data = phi_t.matrix() * m_interp * psi_t.matrix().transpose();
    let extrapolated = lambda < db.params[0] || lambda > db.params[n_nodes - 1];
    Ok(Interpolated {
        snapshot: SnapshotMatrix::new(data, lambda, db.field_kind, db.meta.clone()),
        determinism,
        extrapolated,
    })
}
