//! Design of dynamical-decoupling pulse sequences that implement two-qubit
//! gates on an electron-nuclear spin register, and verification of those
//! designs against simulated nuclear spin baths.

pub mod bath;
pub mod design;
pub mod error;
pub mod gate;
pub mod io;
pub mod linalg;
pub mod propagator;
pub mod rng;
pub mod spin_model;

pub use design::{apply_dd_constraints, design_gate, DDConstraintSet, DesignResult, OptimizerConfig, Parametrization};
pub use error::{Error, Result};
pub use gate::{average_gate_fidelity, fidelity_gradient, GateKind, TargetGate};
pub use propagator::{bloch_trajectory, branch_propagator, system_propagator, PulseSequence, SystemPropagator};
pub use spin_model::{field_angle, local_fields_from_hyperfine, Branch, ConditionalFieldPair, SystemParameters};
pub use bath::coherence::{doubled_gate_coherence, fid_coherence, repeated_gate_coherence, CoherenceSeries, FidResult};
pub use bath::dense::exact_state_fidelity;
pub use bath::select::{select_bath, BathSelection};
pub use bath::{dipolar_coupling, generate_bath, BathSpec, SpinBath};
