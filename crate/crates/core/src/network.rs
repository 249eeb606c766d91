//! Static structure of an open homogeneous reaction system: species,
//! stoichiometry, inlet compositions, initial charge, and the validation
//! that makes a [`ReactionNetwork`] safe to analyse.
//!
//! Conventions: the stoichiometric matrix `N` is R x S with negative
//! entries for reactants and positive entries for products; inlet weight
//! fractions form the S x p matrix `W̌_in` whose columns each sum to one;
//! the composition matrix is `W_in = M_w^{-1} W̌_in`. The system has one
//! outlet stream.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::linalg;
use crate::rates::{DenomTerm, RateLaw, RateLawSpec};

/// Absolute tolerance on the sum of a weight-fraction column.
pub const WEIGHT_FRACTION_TOL: f64 = 1e-9;

/// Relative tolerance on per-reaction mass conservation `sum_j nu_ij M_j = 0`.
pub const MASS_BALANCE_TOL: f64 = 1e-9;

/// A chemical species with a strictly positive molecular weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Species {
    pub name: String,
    pub molecular_weight: f64,
}

/// JSON-facing network description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub species: Vec<Species>,
    pub reactions: Vec<ReactionSpec>,
    #[serde(default)]
    pub inlets: Vec<InletSpec>,
    #[serde(default)]
    pub initial_moles: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    /// Map species name -> stoichiometric coefficient (negative for
    /// reactants, positive for products).
    pub stoichiometry: BTreeMap<String, f64>,
    pub rate_law: RateLawSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InletSpec {
    /// Map species name -> weight fraction of this stream; the values must
    /// sum to one.
    pub weight_fractions: BTreeMap<String, f64>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// One violated construction invariant. `build` reports every violation it
/// finds, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSpecies,
    NoReactions,
    DuplicateSpeciesName { name: String },
    NonPositiveMolecularWeight { species: String, value: f64 },
    UnknownSpecies { context: String, name: String },
    NegativeWeightFraction { inlet: usize, species: String, value: f64 },
    WeightFractionSum { inlet: usize, sum: f64 },
    NegativeInitialMoles { species: String, value: f64 },
    EmptyReactantSet { reaction: usize },
    EmptyProductSet { reaction: usize },
    UnbalancedReactionMass { reaction: usize, residual: f64 },
    NegativeRateParameter { reaction: usize, parameter: String, value: f64 },
    ExponentOutsideReaction { reaction: usize, species: String },
    DenominatorOutsideReactants { reaction: usize, species: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSpecies => write!(f, "the network declares no species"),
            Violation::NoReactions => write!(f, "the network declares no reactions"),
            Violation::DuplicateSpeciesName { name } => {
                write!(f, "duplicate species name '{name}'")
            }
            Violation::NonPositiveMolecularWeight { species, value } => {
                write!(f, "species '{species}' has non-positive molecular weight {value}")
            }
            Violation::UnknownSpecies { context, name } => {
                write!(f, "{context} refers to unknown species '{name}'")
            }
            Violation::NegativeWeightFraction { inlet, species, value } => write!(
                f,
                "inlet {} has negative weight fraction {value} for species '{species}'",
                inlet + 1
            ),
            Violation::WeightFractionSum { inlet, sum } => write!(
                f,
                "weight fractions of inlet {} sum to {sum} instead of 1",
                inlet + 1
            ),
            Violation::NegativeInitialMoles { species, value } => {
                write!(f, "initial moles of species '{species}' are negative ({value})")
            }
            Violation::EmptyReactantSet { reaction } => {
                write!(f, "reaction {} has no reactants", reaction + 1)
            }
            Violation::EmptyProductSet { reaction } => {
                write!(f, "reaction {} has no products", reaction + 1)
            }
            Violation::UnbalancedReactionMass { reaction, residual } => write!(
                f,
                "reaction {} does not conserve mass under the given molecular weights (residual {residual:.3e})",
                reaction + 1
            ),
            Violation::NegativeRateParameter { reaction, parameter, value } => write!(
                f,
                "reaction {} has negative rate parameter {parameter} = {value}",
                reaction + 1
            ),
            Violation::ExponentOutsideReaction { reaction, species } => write!(
                f,
                "reaction {} carries a rate exponent for species '{species}' that takes no part in it",
                reaction + 1
            ),
            Violation::DenominatorOutsideReactants { reaction, species } => write!(
                f,
                "reaction {} has a denominator term for species '{species}' outside its reactant set",
                reaction + 1
            ),
        }
    }
}

/// All invariants violated by a network description.
#[derive(Debug, Clone, Error)]
pub struct BuildError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid network ({} violations):", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

/// Rank diagnostics for the reaction/inlet structure and the forward
/// transformation gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub rank_stoich: usize,
    pub rank_inlet_composition: usize,
    pub rank_augmented: usize,
    /// rank(N) = R.
    pub reactions_independent: bool,
    /// rank(W_in) = p.
    pub inlets_independent: bool,
    /// rank([Nᵀ W_in n0]) = R + p + 1; gate for the forward transformation.
    pub transform_admissible: bool,
    /// Reactions and inlets are independent but the augmented rank falls
    /// short: the forward transformation does not hold, the back
    /// transformation and the extent-domain model still do.
    pub remark_case: bool,
}

/// A validated open homogeneous reaction system. Immutable after build;
/// all operations on it are pure, so it can be shared freely across
/// concurrent analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    stoich: DMatrix<f64>,
    weight_fractions: DMatrix<f64>,
    inlet_composition: DMatrix<f64>,
    molecular_weights: DVector<f64>,
    n0: DVector<f64>,
    m0: f64,
    rate_laws: Vec<RateLaw>,
}

impl ReactionNetwork {
    /// Validate a description and build the network, or report every
    /// violated invariant.
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, BuildError> {
        let mut violations = Vec::new();

        if spec.species.is_empty() {
            violations.push(Violation::NoSpecies);
        }
        if spec.reactions.is_empty() {
            violations.push(Violation::NoReactions);
        }

        let mut index = BTreeMap::new();
        for (k, sp) in spec.species.iter().enumerate() {
            if index.insert(sp.name.clone(), k).is_some() {
                violations.push(Violation::DuplicateSpeciesName {
                    name: sp.name.clone(),
                });
            }
            // NaN weights are rejected alongside zero and negative ones
            if sp.molecular_weight <= 0.0 || sp.molecular_weight.is_nan() {
                violations.push(Violation::NonPositiveMolecularWeight {
                    species: sp.name.clone(),
                    value: sp.molecular_weight,
                });
            }
        }

        let s_count = spec.species.len();
        let r_count = spec.reactions.len();
        let p_count = spec.inlets.len();

        let molecular_weights =
            DVector::from_iterator(s_count, spec.species.iter().map(|sp| sp.molecular_weight));

        let mut stoich = DMatrix::zeros(r_count, s_count);
        for (i, reaction) in spec.reactions.iter().enumerate() {
            for (name, &coeff) in &reaction.stoichiometry {
                match index.get(name) {
                    Some(&j) => stoich[(i, j)] = coeff,
                    None => violations.push(Violation::UnknownSpecies {
                        context: format!("reaction {}", i + 1),
                        name: name.clone(),
                    }),
                }
            }
        }

        let mut weight_fractions = DMatrix::zeros(s_count, p_count);
        for (l, inlet) in spec.inlets.iter().enumerate() {
            let mut sum = 0.0;
            for (name, &w) in &inlet.weight_fractions {
                match index.get(name) {
                    Some(&j) => {
                        weight_fractions[(j, l)] = w;
                        sum += w;
                        if w < 0.0 {
                            violations.push(Violation::NegativeWeightFraction {
                                inlet: l,
                                species: name.clone(),
                                value: w,
                            });
                        }
                    }
                    None => violations.push(Violation::UnknownSpecies {
                        context: format!("inlet {}", l + 1),
                        name: name.clone(),
                    }),
                }
            }
            if (sum - 1.0).abs() > WEIGHT_FRACTION_TOL {
                violations.push(Violation::WeightFractionSum { inlet: l, sum });
            }
        }

        let mut n0 = DVector::zeros(s_count);
        for (name, &value) in &spec.initial_moles {
            match index.get(name) {
                Some(&j) => {
                    n0[j] = value;
                    if value < 0.0 {
                        violations.push(Violation::NegativeInitialMoles {
                            species: name.clone(),
                            value,
                        });
                    }
                }
                None => violations.push(Violation::UnknownSpecies {
                    context: "initial_moles".to_string(),
                    name: name.clone(),
                }),
            }
        }

        let mut rate_laws = Vec::with_capacity(r_count);
        for (i, reaction) in spec.reactions.iter().enumerate() {
            let law = resolve_rate_law(i, &reaction.rate_law, &index, &mut violations);
            rate_laws.push(law);
        }

        validate_structure(
            &stoich,
            &molecular_weights,
            &rate_laws,
            &spec.species,
            &mut violations,
        );

        if !violations.is_empty() {
            return Err(BuildError { violations });
        }

        let m0 = molecular_weights.dot(&n0);
        let inlet_composition = compose_inlets(&molecular_weights, &weight_fractions);
        Ok(ReactionNetwork {
            species: spec.species.clone(),
            stoich,
            weight_fractions,
            inlet_composition,
            molecular_weights,
            n0,
            m0,
            rate_laws,
        })
    }

    pub fn from_json(text: &str) -> Result<Result<Self, BuildError>, serde_json::Error> {
        Ok(Self::from_spec(&NetworkSpec::from_json(text)?))
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.stoich.nrows()
    }

    pub fn num_inlets(&self) -> usize {
        self.weight_fractions.ncols()
    }

    /// Dimension of the invariant extent block, `max(S - R - p - 1, 0)`.
    pub fn invariant_dim(&self) -> usize {
        (self.num_species() as i64 - self.num_reactions() as i64 - self.num_inlets() as i64 - 1)
            .max(0) as usize
    }

    /// Total extent-state dimension `R + p + 1 + q`.
    pub fn extent_dim(&self) -> usize {
        self.num_reactions() + self.num_inlets() + 1 + self.invariant_dim()
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn species_name(&self, index: usize) -> &str {
        &self.species[index].name
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|sp| sp.name == name)
    }

    /// Stoichiometric matrix `N`, R x S.
    pub fn stoich(&self) -> &DMatrix<f64> {
        &self.stoich
    }

    /// Diagonal of `M_w` as a vector.
    pub fn molecular_weights(&self) -> &DVector<f64> {
        &self.molecular_weights
    }

    /// Weight-fraction matrix `W̌_in`, S x p.
    pub fn weight_fractions(&self) -> &DMatrix<f64> {
        &self.weight_fractions
    }

    /// Inlet-composition matrix `W_in = M_w^{-1} W̌_in`, S x p.
    pub fn inlet_composition(&self) -> &DMatrix<f64> {
        &self.inlet_composition
    }

    pub fn n0(&self) -> &DVector<f64> {
        &self.n0
    }

    /// Initial mass `1ᵀ M_w n0`.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn rate_law(&self, reaction: usize) -> &RateLaw {
        &self.rate_laws[reaction]
    }

    pub fn rate_laws(&self) -> &[RateLaw] {
        &self.rate_laws
    }

    /// Species consumed by reaction `i` (strictly negative coefficients).
    pub fn reactant_set(&self, reaction: usize) -> Result<Vec<usize>, ModelError> {
        self.signed_set(reaction, |nu| nu < 0.0)
    }

    /// Species produced by reaction `i` (strictly positive coefficients).
    pub fn product_set(&self, reaction: usize) -> Result<Vec<usize>, ModelError> {
        self.signed_set(reaction, |nu| nu > 0.0)
    }

    fn signed_set(
        &self,
        reaction: usize,
        keep: impl Fn(f64) -> bool,
    ) -> Result<Vec<usize>, ModelError> {
        if reaction >= self.num_reactions() {
            return Err(ModelError::ReactionIndex {
                index: reaction,
                count: self.num_reactions(),
            });
        }
        Ok((0..self.num_species())
            .filter(|&j| keep(self.stoich[(reaction, j)]))
            .collect())
    }

    /// The augmented matrix `[Nᵀ | W_in | n0]`, S x (R + p + 1).
    pub fn augmented_matrix(&self) -> DMatrix<f64> {
        let s = self.num_species();
        let r = self.num_reactions();
        let p = self.num_inlets();
        let mut a = DMatrix::zeros(s, r + p + 1);
        a.view_mut((0, 0), (s, r)).copy_from(&self.stoich.transpose());
        a.view_mut((0, r), (s, p)).copy_from(&self.inlet_composition);
        a.set_column(r + p, &self.n0);
        a
    }

    /// Rank diagnostics; degenerate networks produce false flags, never
    /// failures.
    pub fn check_independence(&self) -> IndependenceReport {
        let rank_stoich = linalg::numeric_rank(&self.stoich);
        let rank_inlet_composition = linalg::numeric_rank(&self.inlet_composition);
        let rank_augmented = linalg::numeric_rank(&self.augmented_matrix());
        let reactions_independent = rank_stoich == self.num_reactions();
        let inlets_independent = rank_inlet_composition == self.num_inlets();
        let transform_admissible =
            rank_augmented == self.num_reactions() + self.num_inlets() + 1;
        IndependenceReport {
            rank_stoich,
            rank_inlet_composition,
            rank_augmented,
            reactions_independent,
            inlets_independent,
            transform_admissible,
            remark_case: !transform_admissible && reactions_independent && inlets_independent,
        }
    }

    /// Rates of all reactions at concentrations `c`.
    pub fn rates(&self, c: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let mut r = DVector::zeros(self.num_reactions());
        for (i, law) in self.rate_laws.iter().enumerate() {
            r[i] = law.eval(c)?;
        }
        Ok(r)
    }

    /// Gradient matrix `dr/dc`, R x S, row i the gradient of reaction i.
    pub fn rate_gradient_matrix(&self, c: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        let mut g = DMatrix::zeros(self.num_reactions(), self.num_species());
        for (i, law) in self.rate_laws.iter().enumerate() {
            g.set_row(i, &law.gradient(c)?.transpose());
        }
        Ok(g)
    }

    /// Rewrite reaction `i` in the reverse direction: negate its
    /// stoichiometric row and swap the forward/backward parts of its rate
    /// law. The result is re-validated.
    pub fn with_flipped_reaction(&self, reaction: usize) -> Result<Self, ModelError> {
        if reaction >= self.num_reactions() {
            return Err(ModelError::ReactionIndex {
                index: reaction,
                count: self.num_reactions(),
            });
        }
        let mut flipped = self.clone();
        for j in 0..self.num_species() {
            flipped.stoich[(reaction, j)] = -flipped.stoich[(reaction, j)];
        }
        flipped.rate_laws[reaction] = flipped.rate_laws[reaction].flipped();
        let mut violations = Vec::new();
        validate_structure(
            &flipped.stoich,
            &flipped.molecular_weights,
            &flipped.rate_laws,
            &flipped.species,
            &mut violations,
        );
        debug_assert!(violations.is_empty(), "flip broke invariants: {violations:?}");
        Ok(flipped)
    }
}

fn compose_inlets(weights: &DVector<f64>, fractions: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w_in = fractions.clone();
    for j in 0..w_in.nrows() {
        for l in 0..w_in.ncols() {
            w_in[(j, l)] /= weights[j];
        }
    }
    w_in
}

fn resolve_rate_law(
    reaction: usize,
    spec: &RateLawSpec,
    index: &BTreeMap<String, usize>,
    violations: &mut Vec<Violation>,
) -> RateLaw {
    let mut check_nonneg = |parameter: String, value: f64| {
        if value < 0.0 {
            violations.push(Violation::NegativeRateParameter {
                reaction,
                parameter,
                value,
            });
        }
    };
    check_nonneg("k_f".into(), spec.k_f);
    check_nonneg("k_b".into(), spec.k_b);

    let mut resolve_map = |map: &BTreeMap<String, f64>, label: &str| -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (name, &value) in map {
            match index.get(name) {
                Some(&j) => {
                    out.push((j, value));
                    if value < 0.0 {
                        violations.push(Violation::NegativeRateParameter {
                            reaction,
                            parameter: format!("{label}[{name}]"),
                            value,
                        });
                    }
                }
                None => violations.push(Violation::UnknownSpecies {
                    context: format!("reaction {} rate law", reaction + 1),
                    name: name.clone(),
                }),
            }
        }
        out
    };
    let fwd = resolve_map(&spec.fwd_exponents, "fwd_exponents");
    let bwd = resolve_map(&spec.bwd_exponents, "bwd_exponents");

    let mut denom = Vec::new();
    for (name, term) in &spec.denom {
        match index.get(name) {
            Some(&j) => {
                denom.push(DenomTerm {
                    species: j,
                    offset: term.a,
                    power: term.d,
                });
                if term.a < 0.0 {
                    violations.push(Violation::NegativeRateParameter {
                        reaction,
                        parameter: format!("denom[{name}].a"),
                        value: term.a,
                    });
                }
                if term.d < 0.0 {
                    violations.push(Violation::NegativeRateParameter {
                        reaction,
                        parameter: format!("denom[{name}].d"),
                        value: term.d,
                    });
                }
            }
            None => violations.push(Violation::UnknownSpecies {
                context: format!("reaction {} rate law", reaction + 1),
                name: name.clone(),
            }),
        }
    }

    RateLaw::from_parts(reaction, spec.k_f, spec.k_b, fwd, bwd, denom)
}

/// Structural checks shared by `from_spec` and `with_flipped_reaction`:
/// nonempty signed sets, mass conservation per reaction, and rate-law key
/// domains (exponents on reaction species, denominators on reactants).
fn validate_structure(
    stoich: &DMatrix<f64>,
    weights: &DVector<f64>,
    rate_laws: &[RateLaw],
    species: &[Species],
    violations: &mut Vec<Violation>,
) {
    let s_count = stoich.ncols();
    for i in 0..stoich.nrows() {
        let reactants: Vec<usize> = (0..s_count).filter(|&j| stoich[(i, j)] < 0.0).collect();
        let products: Vec<usize> = (0..s_count).filter(|&j| stoich[(i, j)] > 0.0).collect();
        if reactants.is_empty() {
            violations.push(Violation::EmptyReactantSet { reaction: i });
        }
        if products.is_empty() {
            violations.push(Violation::EmptyProductSet { reaction: i });
        }

        let mut residual = 0.0;
        let mut scale = 0.0;
        for j in 0..s_count {
            residual += stoich[(i, j)] * weights[j];
            scale += stoich[(i, j)].abs() * weights[j].abs();
        }
        if !reactants.is_empty()
            && !products.is_empty()
            && residual.abs() > MASS_BALANCE_TOL * scale.max(1.0)
        {
            violations.push(Violation::UnbalancedReactionMass {
                reaction: i,
                residual,
            });
        }

        if let Some(law) = rate_laws.get(i) {
            let in_reaction = |j: usize| stoich[(i, j)] != 0.0;
            for &(j, _) in law.fwd_exponents().iter().chain(law.bwd_exponents()) {
                if j < s_count && !in_reaction(j) {
                    violations.push(Violation::ExponentOutsideReaction {
                        reaction: i,
                        species: species[j].name.clone(),
                    });
                }
            }
            for term in law.denom_terms() {
                if term.species < s_count && stoich[(i, term.species)] >= 0.0 {
                    violations.push(Violation::DenominatorOutsideReactants {
                        reaction: i,
                        species: species[term.species].name.clone(),
                    });
                }
            }
        }
    }
}
