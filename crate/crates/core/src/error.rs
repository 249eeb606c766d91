//! Errors raised while evaluating rate laws, transforms, Jacobians, or
//! trajectories. Structural validation errors live in [`crate::network`].

use thiserror::Error;

/// Numerical and domain errors shared by the evaluation paths.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A saturation factor `(a + c)^d` has zero base with `d > 0`.
    #[error("reaction {reaction}: denominator factor for species {species} vanishes (a + c = 0 with d = {power})")]
    DenominatorVanishes {
        reaction: usize,
        species: usize,
        power: f64,
    },

    /// Rate gradient requested on the boundary where it is not defined
    /// (zero concentration with a fractional exponent, or a vanished
    /// saturation factor).
    #[error("reaction {reaction}: rate gradient singular at the boundary for species {species}")]
    GradientSingular { reaction: usize, species: usize },

    /// The reaction mixture mass reached zero or below.
    #[error("mass depleted: m = {mass:.6e} at t = {time}")]
    MassDepleted { mass: f64, time: f64 },

    /// A reconstructed concentration fell below the drift tolerance.
    #[error("non-physical state: concentration {value:.6e} of species {species} below -1e-9")]
    NonphysicalState { species: usize, value: f64 },

    /// The forward transformation rank gate failed (the back transformation
    /// and the extent-domain model remain usable).
    #[error("forward transformation inadmissible: augmented matrix has rank {rank}, {required} required")]
    TransformInadmissible { rank: usize, required: usize },

    /// Initial states handed to the order test are not componentwise ordered.
    #[error("initial chain not componentwise ordered between members {lower} and {upper} (component {component})")]
    UnorderedChain {
        lower: usize,
        upper: usize,
        component: usize,
    },

    #[error("reaction index {index} out of range ({count} reactions)")]
    ReactionIndex { index: usize, count: usize },

    #[error("inlet index {index} out of range ({count} inlets)")]
    InletIndex { index: usize, count: usize },

    #[error("pair classification requires two distinct reactions")]
    IdenticalPair,

    #[error("invalid time grid: t0 = {t0}, t1 = {t1}, dt = {dt}")]
    InvalidTimeGrid { t0: f64, t1: f64, dt: f64 },

    #[error("state dimension {got} does not match the network ({expected})")]
    DimensionMismatch { got: usize, expected: usize },
}
