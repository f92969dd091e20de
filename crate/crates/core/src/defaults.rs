//! Centralised numeric defaults. Experiment configs may override most of
//! these; the acceptance thresholds are pinned where they are used.

/// Relative residual target for conjugate-gradient solves.
pub const CG_TOL: f64 = 1e-10;

/// Iteration cap for conjugate gradient.
pub const CG_MAX_ITER: usize = 60_000;

/// Projected-SOR relaxation factor.
pub const PSOR_OMEGA: f64 = 1.5;

/// Absolute per-sweep energy decrease below which PSOR is considered stalled.
pub const PSOR_ENERGY_TOL: f64 = 1e-12;

/// Nodewise complementarity residual target on the thin plane.
pub const PSOR_COMPLEMENTARITY_TOL: f64 = 1e-8;

/// Sweep cap for projected SOR.
pub const PSOR_MAX_SWEEPS: usize = 400_000;

/// Discretization slack for the Poincare ratio bound at h = 1/128.
pub const POINCARE_SLACK: f64 = 0.1;

/// Campanato shrinking rate (paper window: eps0^(2/(n+4)) <= lambda <= 1/4).
pub const CAMPANATO_LAMBDA: f64 = 0.25;

/// Frequency classification tolerance around 3/2.
pub const REGULAR_TAU: f64 = 0.05;

/// Floor used when dividing by a homogeneous solution near the slit.
pub const RATIO_FLOOR: f64 = 1e-14;

/// Deviations below this absolute size are treated as flat (unresolved
/// variation) when fitting Holder exponents of per-center coefficients.
pub const EXPONENT_FLAT_TOL: f64 = 2e-2;

/// Pairs sampled per region by the property-(F) checkers.
pub const PROPERTY_F_PAIRS: usize = 4000;
