//! Conformal symmetries of divergence-free vector fields with first integrals.
//!
//! A flux system `(B, ν, μ)` on a 3D chart is a vector field `B`, a closed
//! 1-form `ν` with `ν(B) = 0` and a volume form `μ` preserved by `B`. Given a
//! 1-form `η` with `η(B) > 0` and `dη∧ν = 0`, [`construct_symmetry`] builds
//! the field `u` with `ι_u ι_B μ = ν` that commutes with `B/η(B)`, together
//! with a grid certificate of every identity it satisfies. The remaining
//! modules trace field lines, classify invariant tori, build straight-line
//! coordinates and ship worked systems.

// index loops mirror the math; negated float comparisons reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::suspicious_arithmetic_impl)]

pub mod expr;
pub mod geom;
pub mod flux;
pub mod torusdyn;
pub mod trace;
pub mod coords;
pub mod catalog;

#[cfg(test)]
mod testsys;

pub use catalog::{CatalogEntry, CatalogError, CatalogSpec, SystemSpec};
pub use coords::{hamada_check, near_axis_check, rectify_torus, CoordsError, FluxChart, HamadaProfiles, NearAxisReport};
pub use expr::{Axis, ChartDomain, ExprError, ScalarField};
pub use flux::{
    check_adapted, construct_symmetry, forward_noether, validate_flux_system, AdaptedForm, FluxError, FluxSystem, SymmetryCertificate,
    Tolerances, Verdict,
};
pub use geom::{Extremum, GeomError, Grid, KForm, VecField};
pub use torusdyn::{CircleConjugacy, FourierSeries2, FrequencyVector, TorusError};
pub use trace::{AxisReport, LevelClass, RegionReport, Section, SectionOrbit, TraceError, TraceOptions, Trajectory};
