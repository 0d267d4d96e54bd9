//! Parametric reduced-order models from snapshot matrices, interpolated at
//! unseen parameter values through curves on compact Stiefel manifolds.
//!
//! The crate has three layers:
//!
//! * [`osvd`] and [`manifold`] provide the deterministic (sign-fixed) thin
//!   SVD and the Riemannian primitives on Grassmann/Stiefel manifolds
//!   (horizontal lifts, geodesics, exponential and logarithm maps).
//! * [`interp`] builds curves `λ ↦ Y(λ)` through training frames and
//!   assembles the space-time reconstruction `Φ(λ)·M(λ)·Ψ(λ)ᵀ`.
//! * [`rvpfem`] is a desk-scale 2D plane-strain rigid-viscoplastic
//!   thermomechanical solver for the open-forging benchmark that generates
//!   the snapshot data, with [`metrics`] for the a-posteriori error norms.
//!
//! Everything here is pure computation over dense matrices; file formats and
//! the command-line front end live in the companion `stpod-cli` crate. The
//! crate is `no_std`-compatible (with `alloc`) when built without the
//! default `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod interp;
pub mod manifold;
mod math;
pub mod metrics;
pub mod osvd;
pub mod rvpfem;
pub mod snapshot;

pub use osvd::Determinism;
pub use snapshot::{FieldKind, SnapshotMatrix, SnapshotMeta};
