//! Structural cooperativity classification of reaction pairs and flow
//! couplings, plus pointwise evaluation of the conditional-cooperativity
//! inequalities.
//!
//! The pair rules work on reactant/product supports alone:
//!
//! * equal reactant sets with disjoint product sets -> competitive;
//! * disjoint reactant sets -> cooperative (a pure series chain is cited
//!   separately);
//! * one reaction consuming a mix of the other's reactants and products ->
//!   conditionally cooperative, with state-dependent inequalities;
//! * anything else -> indeterminate, reported with sampled Jacobian signs
//!   rather than a guessed verdict.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::ModelError;
use crate::network::ReactionNetwork;
use crate::rates::{check_assumption_a2, default_sample_box, A2Report, SampleBox};
use crate::transform::FlowProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairVerdict {
    Cooperative,
    Competitive,
    ConditionallyCooperative,
    Indeterminate,
}

impl std::fmt::Display for PairVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PairVerdict::Cooperative => "cooperative",
            PairVerdict::Competitive => "competitive",
            PairVerdict::ConditionallyCooperative => "conditionally cooperative",
            PairVerdict::Indeterminate => "indeterminate",
        })
    }
}

/// Effect sign of an inlet or of the initial charge on one reaction extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectSign {
    Plus,
    Minus,
    Mixed,
    Zero,
}

impl EffectSign {
    pub fn as_str(&self) -> &'static str {
        match self {
            EffectSign::Plus => "+",
            EffectSign::Minus => "-",
            EffectSign::Mixed => "+/-",
            EffectSign::Zero => "0",
        }
    }
}

impl Serialize for EffectSign {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Which rate constant a symbolic term multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSide {
    Forward,
    Backward,
}

/// One monomial term `coefficient * k * prod c^e` of a conditional
/// inequality side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolicTerm {
    pub coefficient: f64,
    /// 0-based index of the reaction the constant belongs to.
    pub reaction: usize,
    pub side: RateSide,
    /// Concentration factors as (species name, exponent).
    pub factors: Vec<(String, f64)>,
}

impl SymbolicTerm {
    fn rendered(&self) -> String {
        let mut out = String::new();
        if self.coefficient != 1.0 {
            out.push_str(&format!("{}*", self.coefficient));
        }
        out.push_str(match self.side {
            RateSide::Forward => "k_f",
            RateSide::Backward => "k_b",
        });
        out.push_str(&format!("[R{}]", self.reaction + 1));
        for (name, exp) in &self.factors {
            if *exp == 1.0 {
                out.push_str(&format!("*c({name})"));
            } else {
                out.push_str(&format!("*c({name})^{exp}"));
            }
        }
        out
    }
}

/// One instantiated inequality `sum(lhs) >= sum(rhs)`. When the rate law is
/// not a plain monomial quotient the terms are omitted and only the
/// generic rendering remains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityDescriptor {
    /// `d f_r,i / d x_r,j >= 0` restated: positive terms on the left.
    pub lhs: Vec<SymbolicTerm>,
    pub rhs: Vec<SymbolicTerm>,
    pub symbolic: bool,
    pub rendered: String,
}

/// The two inequalities a conditionally cooperative pair must satisfy,
/// oriented as (d r_primary / d x_r,secondary, d r_secondary / d x_r,primary).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalConditions {
    pub primary: usize,
    pub secondary: usize,
    pub conditions: [InequalityDescriptor; 2],
}

/// Sampled ranges of the two off-diagonal reaction-block entries, attached
/// to indeterminate verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservedOffdiagonals {
    pub d_ri_d_xrj: (f64, f64),
    pub d_rj_d_xri: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct PairClassification {
    #[serde(serialize_with = "serialize_pair_one_based")]
    pub reactions: (usize, usize),
    pub verdict: PairVerdict,
    /// The single rule that produced the verdict.
    pub basis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionalConditions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<ObservedOffdiagonals>,
}

fn serialize_pair_one_based<S: Serializer>(
    pair: &(usize, usize),
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq([pair.0 + 1, pair.1 + 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SystemVerdict {
    Cooperative,
    Competitive,
    Conditional,
    Indeterminate,
}

impl std::fmt::Display for SystemVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SystemVerdict::Cooperative => "cooperative",
            SystemVerdict::Competitive => "competitive",
            SystemVerdict::Conditional => "conditionally cooperative",
            SystemVerdict::Indeterminate => "indeterminate",
        })
    }
}

/// Aggregated verdicts for the whole system.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub pairs: Vec<PairClassification>,
    /// R x p sign matrix, row per reaction, column per inlet.
    pub inlet_effects: Vec<Vec<EffectSign>>,
    /// Per-reaction effect of the initial charge through lambda.
    pub ic_effects: Vec<EffectSign>,
    pub system_verdict: SystemVerdict,
    pub explanation: String,
    pub a2: Vec<A2Report>,
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub seed: u64,
    pub sample_box: Option<SampleBox>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            seed: 42,
            sample_box: None,
        }
    }
}

fn set_of(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

/// Classify the pair `(i, j)` of distinct reactions, running the sign
/// checks for both with default sampling.
pub fn classify_pair(
    net: &ReactionNetwork,
    i: usize,
    j: usize,
) -> Result<PairClassification, ModelError> {
    let options = ClassifyOptions::default();
    let sample_box = default_sample_box(net.num_species());
    let a2_i = check_assumption_a2(net, i, &sample_box, options.seed ^ i as u64)?;
    let a2_j = check_assumption_a2(net, j, &sample_box, options.seed ^ j as u64)?;
    classify_pair_checked(net, i, j, &a2_i, &a2_j, options.seed)
}

/// Classification decision tree with the sign reports supplied by the
/// caller.
pub fn classify_pair_checked(
    net: &ReactionNetwork,
    i: usize,
    j: usize,
    a2_i: &A2Report,
    a2_j: &A2Report,
    seed: u64,
) -> Result<PairClassification, ModelError> {
    if i == j {
        return Err(ModelError::IdenticalPair);
    }
    let r_i = set_of(&net.reactant_set(i)?);
    let p_i = set_of(&net.product_set(i)?);
    let r_j = set_of(&net.reactant_set(j)?);
    let p_j = set_of(&net.product_set(j)?);

    if !a2_i.holds() || !a2_j.holds() {
        return Ok(PairClassification {
            reactions: (i, j),
            verdict: PairVerdict::Indeterminate,
            basis: "A2 unverified".to_string(),
            conditions: None,
            observed: Some(observe_offdiagonals(net, i, j, seed)?),
        });
    }

    // Same reactant set, fully disjoint product sets: competitive.
    if r_i == r_j && p_i.is_disjoint(&p_j) {
        return Ok(PairClassification {
            reactions: (i, j),
            verdict: PairVerdict::Competitive,
            basis: "Proposition 2".to_string(),
            conditions: None,
            observed: None,
        });
    }

    // Disjoint reactant sets: cooperative. A pure series chain (the whole
    // product set of one reaction is the reactant set of the other, with no
    // feedback into the first reaction's reactants) cites the corollary.
    if r_i.is_disjoint(&r_j) {
        let series_i_to_j = r_j == p_i && p_j.is_disjoint(&r_i);
        let series_j_to_i = r_i == p_j && p_i.is_disjoint(&r_j);
        let basis = if series_i_to_j || series_j_to_i {
            "Corollary 1".to_string()
        } else {
            "Proposition 3".to_string()
        };
        return Ok(PairClassification {
            reactions: (i, j),
            verdict: PairVerdict::Cooperative,
            basis,
            conditions: None,
            observed: None,
        });
    }

    // One reaction consumes a mix of the other's reactants and products.
    let mixes = |r_b: &BTreeSet<usize>, r_a: &BTreeSet<usize>, p_a: &BTreeSet<usize>| {
        r_b.iter().all(|s| r_a.contains(s) || p_a.contains(s))
            && !r_b.is_disjoint(r_a)
            && !r_b.is_disjoint(p_a)
    };
    let oriented = if mixes(&r_j, &r_i, &p_i) {
        Some((i, j))
    } else if mixes(&r_i, &r_j, &p_j) {
        Some((j, i))
    } else {
        None
    };
    if let Some((primary, secondary)) = oriented {
        let conditions = ConditionalConditions {
            primary,
            secondary,
            conditions: [
                conditional_descriptor(net, primary, secondary)?,
                conditional_descriptor(net, secondary, primary)?,
            ],
        };
        return Ok(PairClassification {
            reactions: (i, j),
            verdict: PairVerdict::ConditionallyCooperative,
            basis: "Proposition 4".to_string(),
            conditions: Some(conditions),
            observed: None,
        });
    }

    Ok(PairClassification {
        reactions: (i, j),
        verdict: PairVerdict::Indeterminate,
        basis: "no structural rule applies".to_string(),
        conditions: None,
        observed: Some(observe_offdiagonals(net, i, j, seed)?),
    })
}

/// Sampled sign ranges of `d r_i / d x_r,j` and `d r_j / d x_r,i` over the
/// default concentration box; the pointwise fallback for indeterminate
/// pairs.
fn observe_offdiagonals(
    net: &ReactionNetwork,
    i: usize,
    j: usize,
    seed: u64,
) -> Result<ObservedOffdiagonals, ModelError> {
    let sample_box = SampleBox::uniform(net.num_species(), 0.1, 10.0, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ffd1a6);
    let mut range_ij = (f64::INFINITY, f64::NEG_INFINITY);
    let mut range_ji = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..sample_box.samples {
        let c = sample_concentrations(&sample_box, &mut rng);
        let (mij, mji) = conditional_margins(net, i, j, &c)?;
        range_ij = (range_ij.0.min(mij), range_ij.1.max(mij));
        range_ji = (range_ji.0.min(mji), range_ji.1.max(mji));
    }
    Ok(ObservedOffdiagonals {
        d_ri_d_xrj: range_ij,
        d_rj_d_xri: range_ji,
    })
}

fn sample_concentrations<R: rand::Rng>(sample_box: &SampleBox, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(
        sample_box.dim(),
        sample_box
            .lower
            .iter()
            .zip(&sample_box.upper)
            .map(|(&l, &u)| rng.random_range(l..u)),
    )
}

/// Symbolic form of the condition `d f_r,a / d x_r,b >= 0` for monomial-
/// quotient-free laws: positive chain-rule terms on the left, negative on
/// the right.
fn conditional_descriptor(
    net: &ReactionNetwork,
    a: usize,
    b: usize,
) -> Result<InequalityDescriptor, ModelError> {
    let law = net.rate_law(a);
    let generic = InequalityDescriptor {
        lhs: Vec::new(),
        rhs: Vec::new(),
        symbolic: false,
        rendered: format!("d(r{})/d(x_r{}) >= 0", a + 1, b + 1),
    };
    if !law.denom_terms().is_empty() {
        return Ok(generic);
    }

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for s in 0..net.num_species() {
        let nu = net.stoich()[(b, s)];
        if nu == 0.0 {
            continue;
        }
        for (side, k, exponents) in [
            (RateSide::Forward, law.k_f(), law.fwd_exponents()),
            (RateSide::Backward, law.k_b(), law.bwd_exponents()),
        ] {
            let m_s = exponents
                .iter()
                .find(|&&(sp, _)| sp == s)
                .map(|&(_, e)| e)
                .unwrap_or(0.0);
            if k == 0.0 || m_s == 0.0 {
                continue;
            }
            let mut factors = Vec::new();
            for &(sp, e) in exponents {
                let exp = if sp == s { e - 1.0 } else { e };
                if exp != 0.0 {
                    factors.push((net.species_name(sp).to_string(), exp));
                }
            }
            let term = SymbolicTerm {
                coefficient: m_s * nu.abs(),
                reaction: a,
                side,
                factors,
            };
            // dr/dc entry sign: + for the forward part, - for backward;
            // multiplied by the sign of the stoichiometric coefficient.
            let positive = (side == RateSide::Forward) == (nu > 0.0);
            if positive {
                lhs.push(term);
            } else {
                rhs.push(term);
            }
        }
    }
    let join = |terms: &[SymbolicTerm]| {
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.iter().map(|t| t.rendered()).collect::<Vec<_>>().join(" + ")
        }
    };
    let rendered = format!("{} >= {}", join(&lhs), join(&rhs));
    Ok(InequalityDescriptor {
        lhs,
        rhs,
        symbolic: true,
        rendered,
    })
}

/// The two conditional margins at concentrations `c`:
/// `(d r_i / d x_r,j, d r_j / d x_r,i)`, each the chain-rule contraction of
/// the rate gradient with the other reaction's stoichiometric row. These
/// equal the corresponding off-diagonal entries of the assembled Jacobian's
/// reaction block (constant volume).
pub fn conditional_margins(
    net: &ReactionNetwork,
    i: usize,
    j: usize,
    c: &DVector<f64>,
) -> Result<(f64, f64), ModelError> {
    let grad_i = net.rate_law(i).gradient(c)?;
    let grad_j = net.rate_law(j).gradient(c)?;
    let row_i = net.stoich().row(i).transpose();
    let row_j = net.stoich().row(j).transpose();
    Ok((grad_i.dot(&row_j), grad_j.dot(&row_i)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalCheck {
    pub satisfied: bool,
    pub margins: (f64, f64),
}

/// Evaluate the conditional-cooperativity inequalities for pair `(i, j)` at
/// concentrations `c`. Both margins nonnegative means the pair behaves
/// cooperatively at that state.
pub fn check_conditional(
    net: &ReactionNetwork,
    i: usize,
    j: usize,
    c: &DVector<f64>,
) -> Result<ConditionalCheck, ModelError> {
    let margins = conditional_margins(net, i, j, c)?;
    Ok(ConditionalCheck {
        satisfied: margins.0 >= 0.0 && margins.1 >= 0.0,
        margins,
    })
}

/// Sign rule shared by the inlet and initial-condition effects: species in
/// the reactant set push the reaction extent up, species in the product set
/// push it down, species outside the reaction (zero rate gradient) are
/// neutral.
fn support_sign(
    reactants: &BTreeSet<usize>,
    products: &BTreeSet<usize>,
    support: impl Iterator<Item = usize>,
) -> EffectSign {
    let mut any_reactant = false;
    let mut any_product = false;
    for s in support {
        if reactants.contains(&s) {
            any_reactant = true;
        } else if products.contains(&s) {
            any_product = true;
        }
    }
    match (any_reactant, any_product) {
        (true, true) => EffectSign::Mixed,
        (true, false) => EffectSign::Plus,
        (false, true) => EffectSign::Minus,
        (false, false) => EffectSign::Zero,
    }
}

/// Sign of `d f_r,i / d x_in,l` from the support of inlet `l`'s weight
/// fractions. Assumes the sign conditions hold for reaction `i`.
pub fn inlet_effect(
    net: &ReactionNetwork,
    reaction: usize,
    inlet: usize,
) -> Result<EffectSign, ModelError> {
    if net.num_inlets() == 0 {
        return Ok(EffectSign::Zero);
    }
    if inlet >= net.num_inlets() {
        return Err(ModelError::InletIndex {
            index: inlet,
            count: net.num_inlets(),
        });
    }
    let reactants = set_of(&net.reactant_set(reaction)?);
    let products = set_of(&net.product_set(reaction)?);
    let fractions = net.weight_fractions();
    let support = (0..net.num_species()).filter(|&s| fractions[(s, inlet)] > 0.0);
    Ok(support_sign(&reactants, &products, support))
}

/// Sign of `d f_r,i / d lambda` from the support of the initial charge.
/// Zero whenever the outlet is closed for all times: with `u_out = 0` the
/// discounting variable is frozen at 1 and the coupling is inert.
pub fn initial_condition_effect(
    net: &ReactionNetwork,
    reaction: usize,
    flows: &FlowProfile,
) -> Result<EffectSign, ModelError> {
    if flows.outlet_closed() {
        let _ = net.reactant_set(reaction)?;
        return Ok(EffectSign::Zero);
    }
    let reactants = set_of(&net.reactant_set(reaction)?);
    let products = set_of(&net.product_set(reaction)?);
    let n0 = net.n0();
    let support = (0..net.num_species()).filter(|&s| n0[s] > 0.0);
    Ok(support_sign(&reactants, &products, support))
}

/// Classify every reaction pair and every flow coupling, then aggregate.
pub fn classify_system(
    net: &ReactionNetwork,
    flows: &FlowProfile,
    options: &ClassifyOptions,
) -> Result<ClassificationReport, ModelError> {
    let sample_box = options
        .sample_box
        .clone()
        .unwrap_or_else(|| default_sample_box(net.num_species()));
    let r = net.num_reactions();
    let p = net.num_inlets();

    let a2: Vec<A2Report> = (0..r)
        .map(|i| check_assumption_a2(net, i, &sample_box, options.seed ^ i as u64))
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    for i in 0..r {
        for j in (i + 1)..r {
            pairs.push(classify_pair_checked(net, i, j, &a2[i], &a2[j], options.seed)?);
        }
    }

    let mut inlet_effects = Vec::with_capacity(r);
    let mut ic_effects = Vec::with_capacity(r);
    for i in 0..r {
        let mut row = Vec::with_capacity(p);
        for l in 0..p {
            row.push(inlet_effect(net, i, l)?);
        }
        inlet_effects.push(row);
        ic_effects.push(initial_condition_effect(net, i, flows)?);
    }

    let effects = inlet_effects
        .iter()
        .flatten()
        .chain(ic_effects.iter())
        .copied()
        .collect::<Vec<_>>();
    let any_negative_effect = effects.contains(&EffectSign::Minus);
    let all_effects_safe = effects
        .iter()
        .all(|&e| e == EffectSign::Plus || e == EffectSign::Zero);
    let any_competitive = pairs.iter().any(|p| p.verdict == PairVerdict::Competitive);
    let all_cooperative = pairs.iter().all(|p| p.verdict == PairVerdict::Cooperative);
    let any_conditional = pairs
        .iter()
        .any(|p| p.verdict == PairVerdict::ConditionallyCooperative);

    let (system_verdict, explanation) = if any_competitive || any_negative_effect {
        (
            SystemVerdict::Competitive,
            "a competitive pair or a strictly negative flow coupling is present".to_string(),
        )
    } else if all_cooperative && all_effects_safe {
        (
            SystemVerdict::Cooperative,
            "every pair is cooperative and every inlet/initial-condition effect is nonnegative"
                .to_string(),
        )
    } else if any_conditional {
        (
            SystemVerdict::Conditional,
            "cooperativity holds subject to the listed state-dependent inequalities".to_string(),
        )
    } else {
        (
            SystemVerdict::Indeterminate,
            "some pair or coupling falls outside the structural rules".to_string(),
        )
    };

    Ok(ClassificationReport {
        pairs,
        inlet_effects,
        ic_effects,
        system_verdict,
        explanation,
        a2,
    })
}
