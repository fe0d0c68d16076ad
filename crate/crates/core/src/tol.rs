//! Geometric and numerical tolerances shared by the set algebra, constraint
//! construction and the property tests.

/// Point membership and intersection accuracy, in metres.
pub const POINT: f64 = 1e-9;

/// Relative slack for set containment tests (`P ⊆ (1 + CONTAINMENT) Q`).
pub const CONTAINMENT: f64 = 1e-6;

/// Absolute floor used alongside [`CONTAINMENT`] when a support value is zero.
pub const CONTAINMENT_ABS: f64 = 1e-10;

/// Relative rank threshold for singular values.
pub const RANK: f64 = 1e-10;

/// KKT residual below which a QP solution is certified optimal.
pub const KKT: f64 = 1e-6;

/// Primal feasibility accepted for an optimal QP solution.
pub const QP_FEASIBILITY: f64 = 1e-7;
