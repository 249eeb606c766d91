//! Models of open homogeneous chemical reaction systems in the decoupled
//! extent domain: network structure and validation, generic rate laws with
//! analytic gradients, forward/back transformations and both vector fields,
//! block-wise Jacobian assembly with the Metzler test, structural
//! cooperativity classification, and a fixed-step simulation harness that
//! cross-validates the two model forms and checks monotone order
//! preservation empirically.
//!
//! Everything is pure and immutable after construction: a
//! [`network::ReactionNetwork`] can be shared read-only across concurrent
//! analyses.

pub mod classify;
pub mod error;
pub mod jacobian;
pub mod linalg;
pub mod network;
pub mod rates;
pub mod simulate;
pub mod transform;

pub use classify::{
    check_conditional, classify_pair, classify_system, initial_condition_effect, inlet_effect,
    ClassificationReport, ClassifyOptions, EffectSign, PairClassification, PairVerdict,
    SystemVerdict,
};
pub use error::ModelError;
pub use jacobian::{assemble_jacobian, flow_subsystem_check, metzler_check, JacobianReport};
pub use network::{
    BuildError, IndependenceReport, NetworkSpec, ReactionNetwork, Species, Violation,
};
pub use rates::{check_assumption_a2, default_sample_box, A2Report, RateLaw, SampleBox};
pub use simulate::{
    convergence_study, cross_validate, integrate_extents, integrate_moles, monotone_order_test,
    random_ordered_chain, CrossValidationReport, ExtentTrajectory, MoleTrajectory,
    OrderTestResult,
};
pub use transform::{
    back_transform, concentrations, extent_rhs, forward_transform, mole_rhs, ExtentState,
    FlowProfile, FlowSpec, VolumeModel,
};
