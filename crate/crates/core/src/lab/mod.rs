//! Nonlocal-to-local convergence experiments: analytic fields, exact local
//! oracles, operator consistency sweeps and trajectory sweeps against a
//! finite element reference.

mod consistency;
mod fields;
mod sweep;

pub use consistency::{
    divergence_consistency, divergence_error, form_consistency, form_defects, prepare_initial, FormDefects, LevelSpec,
    PreparedInitial,
};
pub use sweep::{
    run_sweep, ConvergenceReport, LevelMetrics, SweepPlan, SweepRow, TrajectoryMetrics, MIN_SWEEP_LEVELS, MONITORED,
};
pub use fields::{
    integrate_box, local_energy, local_forms, AnalyticField, FieldKind, LocalForms, CUTOFF_LAYER,
    EXACT_QUADRATURE_CELLS, TRACE_TOLERANCE,
};

#[cfg(test)]
mod tests;
