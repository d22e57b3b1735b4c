//! Numerical convex integration for the relaxed Muskat (IPM) mixing problem.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: the relaxed state space, hull membership and Λ-segments.
//! * [`waves`]: localized plane-wave atoms generated from potentials.
//! * [`subsolution`]: the coarse-grained mixing-zone state.
//! * [`scheme`]: shifted grids, perturbation passes and the functional `J`.
//! * [`diagnostics`]: rectangle averages, mixing and residual checks.
//! * [`io`]: config parsing, atoms files and field dumps.

pub mod diagnostics;
pub mod geometry;
pub mod io;
pub mod quadrature;
pub mod scheme;
pub mod state;
pub mod subsolution;
pub mod waves;

pub use geometry::{HullClass, HullParams, HullReport, SegmentCase, SegmentResult};
pub use scheme::{FieldModel, PassReport, RunConfig, RunReport, ShiftedGrid, Window};
pub use state::StateZ;
pub use subsolution::{MixingGeometry, SubsolutionField};
pub use waves::{Cutoff, Profile, WaveAtom, WaveFrequency};
