//! Per-unit dynamic models of droop-controlled inverter microgrids,
//! reduced-order models by first-order singular perturbation, and
//! small-signal stability assessment.
//!
//! The crate builds three model families for a scenario — the full
//! electromagnetic model, the conventional quasi-stationary three-state
//! model, and a high-fidelity three-state model carrying the first-order
//! network correction — and provides eigenvalue analysis, critical-droop
//! search, stability-region sweeps, time-domain integration, and a
//! runtime benchmark harness on top of them.

pub mod analysis;
pub mod error;
pub mod inverter;
pub mod models;
pub mod network;
pub mod numeric;
pub mod perunit;
pub mod presets;
pub mod reduction;
pub mod sim;

pub use analysis::{
    bound_conventional, bound_hifi, critical_gain, eigen_report, stability_region, CriticalGain,
    EigenReport, StabilityBoundary, DEFAULT_ZERO_TOL,
};
pub use error::{Error, Result};
pub use inverter::{backsolve_setpoints, DroopInverter};
pub use models::{
    build_network_full, build_network_reduced, build_twobus, corrections_gb, FullModelOptions,
    InverterOutput, LinearStateSpace, ModelKind, NonlinearModel, StateKind, StateLabel,
    TwoBusParams,
};
pub use network::{
    assemble_taylor, structure_matrices, Branch, LaplaceAdmittance, Load, NetworkSpec,
    StructureMatrices,
};
pub use perunit::{make_base, normalize_droops, DroopGains, PerUnitBase};
pub use reduction::{
    partition_by_labels, reduce_first_order, reduce_zero_order, PartitionedLinear,
};
pub use sim::{
    bench, integrate, BenchRecord, OdeSystem, SolverKind, Tolerances, Trajectory,
};
