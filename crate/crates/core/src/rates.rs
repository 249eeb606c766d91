//! The generic rate-law form
//!
//! ```text
//! r = (k_f * prod c_e^m_e  -  k_b * prod c_k^n_k) / prod (a_e + c_e)^d_e
//! ```
//!
//! together with its analytic concentration gradient and the sign checks
//! the cooperativity rules depend on. Mass-action and Michaelis-Menten
//! kinetics are both instances of this form.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::network::ReactionNetwork;

/// Tolerance below which a sampled reactant gradient counts as a sign
/// violation.
pub const A2_SIGN_TOL: f64 = 1e-12;

/// Default number of Monte-Carlo points for the sampled tier of the
/// sign check.
pub const DEFAULT_A2_SAMPLES: usize = 1000;

/// One saturation factor `(a + c)^d` of the rate-law denominator. Only this
/// canonical form is supported; the `(a + c^d)` variant would need its own
/// gradient and is left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenomTerm {
    pub species: usize,
    /// Additive offset `a >= 0`.
    pub offset: f64,
    /// Power `d >= 0`.
    pub power: f64,
}

/// A resolved rate law: species are referred to by index into the owning
/// network's species list. Built by [`crate::network::ReactionNetwork`]
/// from the JSON-facing [`RateLawSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateLaw {
    reaction: usize,
    k_f: f64,
    k_b: f64,
    fwd_exponents: Vec<(usize, f64)>,
    bwd_exponents: Vec<(usize, f64)>,
    denom_terms: Vec<DenomTerm>,
}

/// JSON-facing rate-law fields; absent maps default to empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLawSpec {
    #[serde(default)]
    pub k_f: f64,
    #[serde(default)]
    pub k_b: f64,
    #[serde(default)]
    pub fwd_exponents: BTreeMap<String, f64>,
    #[serde(default)]
    pub bwd_exponents: BTreeMap<String, f64>,
    #[serde(default)]
    pub denom: BTreeMap<String, DenomSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenomSpec {
    pub a: f64,
    pub d: f64,
}

impl RateLaw {
    pub(crate) fn from_parts(
        reaction: usize,
        k_f: f64,
        k_b: f64,
        mut fwd_exponents: Vec<(usize, f64)>,
        mut bwd_exponents: Vec<(usize, f64)>,
        mut denom_terms: Vec<DenomTerm>,
    ) -> Self {
        fwd_exponents.sort_by_key(|&(s, _)| s);
        bwd_exponents.sort_by_key(|&(s, _)| s);
        denom_terms.sort_by_key(|t| t.species);
        RateLaw {
            reaction,
            k_f,
            k_b,
            fwd_exponents,
            bwd_exponents,
            denom_terms,
        }
    }

    pub fn reaction(&self) -> usize {
        self.reaction
    }

    pub fn k_f(&self) -> f64 {
        self.k_f
    }

    pub fn k_b(&self) -> f64 {
        self.k_b
    }

    pub fn fwd_exponents(&self) -> &[(usize, f64)] {
        &self.fwd_exponents
    }

    pub fn bwd_exponents(&self) -> &[(usize, f64)] {
        &self.bwd_exponents
    }

    pub fn denom_terms(&self) -> &[DenomTerm] {
        &self.denom_terms
    }

    pub fn fwd_exponent_of(&self, species: usize) -> f64 {
        lookup(&self.fwd_exponents, species)
    }

    pub fn bwd_exponent_of(&self, species: usize) -> f64 {
        lookup(&self.bwd_exponents, species)
    }

    pub fn denom_of(&self, species: usize) -> Option<DenomTerm> {
        self.denom_terms
            .iter()
            .find(|t| t.species == species)
            .copied()
    }

    /// Species with a structurally nonzero gradient entry.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .fwd_exponents
            .iter()
            .chain(self.bwd_exponents.iter())
            .map(|&(idx, _)| idx)
            .chain(self.denom_terms.iter().map(|t| t.species))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// The reversal of this law: forward and backward parts swapped.
    pub(crate) fn flipped(&self) -> Self {
        RateLaw {
            reaction: self.reaction,
            k_f: self.k_b,
            k_b: self.k_f,
            fwd_exponents: self.bwd_exponents.clone(),
            bwd_exponents: self.fwd_exponents.clone(),
            denom_terms: self.denom_terms.clone(),
        }
    }

    /// Evaluate the rate at concentrations `c >= 0`.
    pub fn eval(&self, c: &DVector<f64>) -> Result<f64, ModelError> {
        let mut den = 1.0;
        for t in &self.denom_terms {
            if t.power == 0.0 {
                continue;
            }
            let base = t.offset + c[t.species];
            if base <= 0.0 {
                return Err(ModelError::DenominatorVanishes {
                    reaction: self.reaction,
                    species: t.species,
                    power: t.power,
                });
            }
            den *= pow(base, t.power);
        }
        let fwd = monomial(self.k_f, &self.fwd_exponents, c);
        let bwd = monomial(self.k_b, &self.bwd_exponents, c);
        Ok((fwd - bwd) / den)
    }

    /// Analytic gradient `dr/dc` as a full S-vector. Entries for species
    /// outside the law's support are exactly zero.
    ///
    /// Defined on the open positive orthant; at a zero concentration the
    /// derivative exists only for exponents outside (0, 1) and with a
    /// nonvanished saturation factor, otherwise `GradientSingular`.
    pub fn gradient(&self, c: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let mut den = 1.0;
        for t in &self.denom_terms {
            if t.power == 0.0 {
                continue;
            }
            let base = t.offset + c[t.species];
            if base <= 0.0 {
                return Err(ModelError::GradientSingular {
                    reaction: self.reaction,
                    species: t.species,
                });
            }
            den *= pow(base, t.power);
        }
        let fwd = monomial(self.k_f, &self.fwd_exponents, c);
        let bwd = monomial(self.k_b, &self.bwd_exponents, c);
        let rate = (fwd - bwd) / den;

        let mut grad = DVector::zeros(c.len());
        if self.k_f != 0.0 {
            for &(s, m) in &self.fwd_exponents {
                if m > 0.0 {
                    let dmon = monomial_derivative(s, m, &self.fwd_exponents, c).ok_or(
                        ModelError::GradientSingular {
                            reaction: self.reaction,
                            species: s,
                        },
                    )?;
                    grad[s] += self.k_f * dmon / den;
                }
            }
        }
        if self.k_b != 0.0 {
            for &(s, n) in &self.bwd_exponents {
                if n > 0.0 {
                    let dmon = monomial_derivative(s, n, &self.bwd_exponents, c).ok_or(
                        ModelError::GradientSingular {
                            reaction: self.reaction,
                            species: s,
                        },
                    )?;
                    grad[s] -= self.k_b * dmon / den;
                }
            }
        }
        for t in &self.denom_terms {
            if t.power > 0.0 {
                grad[t.species] -= rate * t.power / (t.offset + c[t.species]);
            }
        }
        Ok(grad)
    }
}

fn lookup(list: &[(usize, f64)], species: usize) -> f64 {
    list.iter()
        .find(|&&(s, _)| s == species)
        .map(|&(_, e)| e)
        .unwrap_or(0.0)
}

/// `base^exp` with exact handling of the common small integer exponents.
fn pow(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else if exp == 1.0 {
        base
    } else if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

fn monomial(k: f64, exponents: &[(usize, f64)], c: &DVector<f64>) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let mut value = k;
    for &(s, e) in exponents {
        value *= pow(c[s], e);
    }
    value
}

/// d/dc_s of `prod c^e` (without the rate constant). `None` when the
/// derivative is singular at c_s = 0 (exponent in (0, 1)).
fn monomial_derivative(
    s: usize,
    exp_s: f64,
    exponents: &[(usize, f64)],
    c: &DVector<f64>,
) -> Option<f64> {
    let mut others = 1.0;
    for &(e, m) in exponents {
        if e != s {
            others *= pow(c[e], m);
        }
    }
    let own = if c[s] == 0.0 {
        if exp_s < 1.0 {
            return None;
        } else if exp_s == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        pow(c[s], exp_s - 1.0)
    };
    Some(exp_s * own * others)
}

/// Positive concentration hyper-rectangle with a sample count, used by the
/// Monte-Carlo tier of the sign check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub samples: usize,
}

impl SampleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, samples: usize) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| *l >= 0.0 && l <= u));
        SampleBox {
            lower,
            upper,
            samples,
        }
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64, samples: usize) -> Self {
        SampleBox::new(vec![lower; dim], vec![upper; dim], samples)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| if l == u { l } else { rng.random_range(l..u) }),
        )
    }
}

/// Default box: concentrations in [0.1, 10] with the default sample count.
pub fn default_sample_box(num_species: usize) -> SampleBox {
    SampleBox::uniform(num_species, 0.1, 10.0, DEFAULT_A2_SAMPLES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeciesRole {
    Reactant,
    Product,
}

/// Sign a gradient entry must satisfy for the cooperativity rules to apply.
/// Entries with no exponent-conditioned requirement are reported but never
/// asserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredSign {
    NonNegative,
    StrictlyNegative,
    Unconstrained,
}

#[derive(Debug, Clone, Serialize)]
pub struct A2Entry {
    pub species: usize,
    pub species_name: String,
    pub role: SpeciesRole,
    pub required: RequiredSign,
    /// The exponent pattern alone already guarantees the required sign on
    /// the open positive orthant.
    pub structurally_guaranteed: bool,
    pub sampled_min: f64,
    pub sampled_max: f64,
    pub violations: usize,
}

/// Two-tier sign report for one reaction: a symbolic fast path on the
/// exponent pattern, then Monte-Carlo sign sampling over a box.
#[derive(Debug, Clone, Serialize)]
pub struct A2Report {
    pub reaction: usize,
    pub symbolic_pass: bool,
    pub sampled_pass: bool,
    pub samples: usize,
    pub entries: Vec<A2Entry>,
}

impl A2Report {
    /// Verdict used as precondition by the classification rules.
    pub fn holds(&self) -> bool {
        self.sampled_pass
    }
}

/// Check the gradient sign conditions for reaction `i` over `sample_box`.
///
/// Required signs: nonnegative for every reactant; strictly negative for a
/// product only when it carries a positive backward exponent and the
/// backward constant is positive. Other entries (for example a product that
/// appears in the forward monomial, as catalytic growth kinetics do) are
/// sampled and reported without an assertion.
pub fn check_assumption_a2(
    net: &ReactionNetwork,
    reaction: usize,
    sample_box: &SampleBox,
    seed: u64,
) -> Result<A2Report, ModelError> {
    if reaction >= net.num_reactions() {
        return Err(ModelError::ReactionIndex {
            index: reaction,
            count: net.num_reactions(),
        });
    }
    let law = net.rate_law(reaction);
    let reactants = net.reactant_set(reaction)?;
    let products = net.product_set(reaction)?;

    let mut entries: Vec<A2Entry> = Vec::new();
    for &s in &reactants {
        let m = law.fwd_exponent_of(s);
        let n = law.bwd_exponent_of(s);
        let d = law.denom_of(s).map(|t| t.power).unwrap_or(0.0);
        entries.push(A2Entry {
            species: s,
            species_name: net.species_name(s).to_string(),
            role: SpeciesRole::Reactant,
            required: RequiredSign::NonNegative,
            structurally_guaranteed: n == 0.0 && (d == 0.0 || m >= d),
            sampled_min: f64::INFINITY,
            sampled_max: f64::NEG_INFINITY,
            violations: 0,
        });
    }
    for &s in &products {
        let m = law.fwd_exponent_of(s);
        let n = law.bwd_exponent_of(s);
        let required = if n > 0.0 && law.k_b() > 0.0 {
            RequiredSign::StrictlyNegative
        } else {
            RequiredSign::Unconstrained
        };
        let structurally_guaranteed = match required {
            RequiredSign::StrictlyNegative => m == 0.0,
            // nothing to guarantee
            _ => true,
        };
        entries.push(A2Entry {
            species: s,
            species_name: net.species_name(s).to_string(),
            role: SpeciesRole::Product,
            required,
            structurally_guaranteed,
            sampled_min: f64::INFINITY,
            sampled_max: f64::NEG_INFINITY,
            violations: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..sample_box.samples {
        let c = sample_box.sample(&mut rng);
        let grad = law.gradient(&c)?;
        for entry in &mut entries {
            let g = grad[entry.species];
            entry.sampled_min = entry.sampled_min.min(g);
            entry.sampled_max = entry.sampled_max.max(g);
            let violated = match entry.required {
                RequiredSign::NonNegative => g < -A2_SIGN_TOL,
                RequiredSign::StrictlyNegative => g >= 0.0 || g.is_nan(),
                RequiredSign::Unconstrained => false,
            };
            if violated {
                entry.violations += 1;
            }
        }
    }

    let symbolic_pass = entries.iter().all(|e| e.structurally_guaranteed);
    let sampled_pass = entries.iter().all(|e| e.violations == 0);
    Ok(A2Report {
        reaction,
        symbolic_pass,
        sampled_pass,
        samples: sample_box.samples,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(
        k_f: f64,
        k_b: f64,
        fwd: &[(usize, f64)],
        bwd: &[(usize, f64)],
        denom: &[(usize, f64, f64)],
    ) -> RateLaw {
        RateLaw::from_parts(
            0,
            k_f,
            k_b,
            fwd.to_vec(),
            bwd.to_vec(),
            denom
                .iter()
                .map(|&(species, offset, power)| DenomTerm {
                    species,
                    offset,
                    power,
                })
                .collect(),
        )
    }

    #[test]
    fn mass_action_with_vanishing_product_terms() {
        // r = k1 cA cB - k2 cC cD at c = (1, 2, 0, 0): backward part drops out.
        let k1 = 0.7;
        let k2 = 1.3;
        let l = law(k1, k2, &[(0, 1.0), (1, 1.0)], &[(2, 1.0), (3, 1.0)], &[]);
        let c = DVector::from_row_slice(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(l.eval(&c).unwrap(), k1 * 2.0);
    }

    #[test]
    fn michaelis_menten_half_saturation() {
        // mu(S) = mu_max S / (Ks + S) evaluated at S = Ks.
        let mu_max = 3.25;
        let ks = 0.8;
        let l = law(mu_max, 0.0, &[(0, 1.0)], &[], &[(0, ks, 1.0)]);
        let c = DVector::from_row_slice(&[ks]);
        let r = l.eval(&c).unwrap();
        assert!((r - mu_max / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_hand_differentiation() {
        // r = k1 cA cB - k2 cC cD at c = (1, 2, 3, 4).
        let (k1, k2) = (0.9, 1.1);
        let l = law(k1, k2, &[(0, 1.0), (1, 1.0)], &[(2, 1.0), (3, 1.0)], &[]);
        let c = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0]);
        let g = l.gradient(&c).unwrap();
        assert_eq!(g[0], k1 * 2.0);
        assert_eq!(g[1], k1 * 1.0);
        assert_eq!(g[2], -k2 * 4.0);
        assert_eq!(g[3], -k2 * 3.0);
    }

    #[test]
    fn gradient_structural_zero_outside_support() {
        let l = law(1.0, 0.0, &[(1, 2.0)], &[], &[]);
        let c = DVector::from_row_slice(&[0.5, 0.5, 0.5]);
        let g = l.gradient(&c).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn michaelis_menten_slope_at_half_saturation() {
        // d mu / dS = mu_max Ks / (Ks + S)^2 equals mu_max / (4 Ks) at S = Ks.
        let mu_max = 2.0;
        let ks = 0.5;
        let l = law(mu_max, 0.0, &[(0, 1.0)], &[], &[(0, ks, 1.0)]);
        let c = DVector::from_row_slice(&[ks]);
        let g = l.gradient(&c).unwrap();
        assert!((g[0] - mu_max / (4.0 * ks)).abs() < 1e-12);
    }

    #[test]
    fn denominator_vanishes_is_reported() {
        let l = law(1.0, 0.0, &[(0, 1.0)], &[], &[(0, 0.0, 1.0)]);
        let c = DVector::from_row_slice(&[0.0]);
        assert!(matches!(
            l.eval(&c),
            Err(ModelError::DenominatorVanishes { species: 0, .. })
        ));
        assert!(matches!(
            l.gradient(&c),
            Err(ModelError::GradientSingular { species: 0, .. })
        ));
    }

    #[test]
    fn fractional_exponent_singular_at_zero() {
        let l = law(1.0, 0.0, &[(0, 0.5)], &[], &[]);
        let c = DVector::from_row_slice(&[0.0]);
        assert_eq!(l.eval(&c).unwrap(), 0.0);
        assert!(matches!(
            l.gradient(&c),
            Err(ModelError::GradientSingular { species: 0, .. })
        ));
    }

    #[test]
    fn exponent_above_one_has_zero_slope_at_zero() {
        let l = law(1.0, 0.0, &[(0, 2.0)], &[], &[]);
        let c = DVector::from_row_slice(&[0.0]);
        assert_eq!(l.gradient(&c).unwrap()[0], 0.0);
    }

    #[test]
    fn generic_rate_matches_an_independent_oracle() {
        // same formula, restated from scratch with explicit loops
        let l = law(
            1.7,
            0.3,
            &[(0, 2.0), (1, 1.0)],
            &[(2, 1.5)],
            &[(0, 0.4, 1.0), (1, 0.9, 2.0)],
        );
        let cases = [
            [0.3, 1.2, 0.7],
            [2.0, 0.05, 3.1],
            [0.9, 0.9, 0.9],
        ];
        for c_raw in cases {
            let c = DVector::from_row_slice(&c_raw);
            let got = l.eval(&c).unwrap();
            let want = (1.7 * c_raw[0].powi(2) * c_raw[1] - 0.3 * c_raw[2].powf(1.5))
                / ((0.4 + c_raw[0]) * (0.9 + c_raw[1]).powi(2));
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn gradient_central_difference_agreement() {
        let l = law(
            1.4,
            0.6,
            &[(0, 1.0), (1, 2.0)],
            &[(2, 1.0)],
            &[(0, 0.7, 1.0)],
        );
        let c = DVector::from_row_slice(&[0.9, 1.7, 2.3]);
        let g = l.gradient(&c).unwrap();
        for k in 0..3 {
            let h = 1e-6 * c[k].max(1.0);
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[k] += h;
            cm[k] -= h;
            let fd = (l.eval(&cp).unwrap() - l.eval(&cm).unwrap()) / (2.0 * h);
            assert!(
                (g[k] - fd).abs() <= 1e-6 * g[k].abs().max(fd.abs()).max(1e-3),
                "component {k}: analytic {} vs fd {}",
                g[k],
                fd
            );
        }
    }

    mod a2 {
        use super::*;
        use crate::network::{NetworkSpec, ReactionSpec, Species};
        use std::collections::BTreeMap;

        fn two_species_net(law: RateLawSpec) -> ReactionNetwork {
            let spec = NetworkSpec {
                species: vec![
                    Species { name: "A".into(), molecular_weight: 1.0 },
                    Species { name: "B".into(), molecular_weight: 1.0 },
                ],
                reactions: vec![ReactionSpec {
                    stoichiometry: [("A", -1.0), ("B", 1.0)]
                        .into_iter()
                        .map(|(n, v)| (n.to_string(), v))
                        .collect(),
                    rate_law: law,
                }],
                inlets: vec![],
                initial_moles: [("A".to_string(), 1.0)].into_iter().collect(),
            };
            ReactionNetwork::from_spec(&spec).unwrap()
        }

        #[test]
        fn forward_mass_action_holds_structurally() {
            let net = two_species_net(RateLawSpec {
                k_f: 1.3,
                k_b: 0.0,
                fwd_exponents: [("A".to_string(), 1.0)].into_iter().collect(),
                bwd_exponents: BTreeMap::new(),
                denom: BTreeMap::new(),
            });
            let report = check_assumption_a2(&net, 0, &default_sample_box(2), 1).unwrap();
            assert!(report.symbolic_pass);
            assert!(report.holds());
        }

        #[test]
        fn saturation_power_above_numerator_fails_at_high_concentration() {
            // m = 1 < d = 2: the slope turns negative once c > a
            let net = two_species_net(RateLawSpec {
                k_f: 1.0,
                k_b: 0.0,
                fwd_exponents: [("A".to_string(), 1.0)].into_iter().collect(),
                bwd_exponents: BTreeMap::new(),
                denom: [("A".to_string(), DenomSpec { a: 1.0, d: 2.0 })]
                    .into_iter()
                    .collect(),
            });
            let report = check_assumption_a2(&net, 0, &default_sample_box(2), 1).unwrap();
            assert!(!report.symbolic_pass);
            assert!(!report.holds());
            let entry = &report.entries[0];
            assert_eq!(entry.role, SpeciesRole::Reactant);
            assert!(!entry.structurally_guaranteed);
            assert!(entry.violations > 0);
            assert!(entry.sampled_min < 0.0);
        }

        #[test]
        fn reversible_mass_action_signs() {
            let net = two_species_net(RateLawSpec {
                k_f: 1.0,
                k_b: 0.8,
                fwd_exponents: [("A".to_string(), 1.0)].into_iter().collect(),
                bwd_exponents: [("B".to_string(), 1.0)].into_iter().collect(),
                denom: BTreeMap::new(),
            });
            let report = check_assumption_a2(&net, 0, &default_sample_box(2), 1).unwrap();
            assert!(report.symbolic_pass);
            assert!(report.holds());
            let product = report
                .entries
                .iter()
                .find(|e| e.role == SpeciesRole::Product)
                .unwrap();
            assert_eq!(product.required, RequiredSign::StrictlyNegative);
            // strict negativity on the interior box
            assert!(product.sampled_max < 0.0);
            let reactant = report
                .entries
                .iter()
                .find(|e| e.role == SpeciesRole::Reactant)
                .unwrap();
            assert!(reactant.sampled_min >= 0.0);
        }
    }
}
