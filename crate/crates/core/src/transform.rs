//! Forward and back transformations between mole space and extent space,
//! plus both vector fields (mole-domain and extent-domain dynamics).
//!
//! Extent coordinates are ordered `(x_r, x_in, lambda, x_iv)`. Under the
//! canonical initialization `x_r = 0, x_in = 0, lambda = 1, x_iv = 0` the
//! reconstruction
//!
//! ```text
//! n(t) = Nᵀ x_r(t) + W_in x_in(t) + n0 lambda(t)
//! m(t) = 1ᵀ x_in(t) + m0 lambda(t)
//! ```
//!
//! holds along every trajectory, whether or not the forward transformation
//! rank gate is satisfied.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::ModelError;
use crate::linalg;
use crate::network::ReactionNetwork;

/// Negative-concentration drift tolerance: values in `(-1e-9, 0)` are
/// clamped to zero, anything below errors.
pub const CONCENTRATION_NEG_TOL: f64 = 1e-9;

pub(crate) fn serialize_dvector<S: Serializer>(
    v: &DVector<f64>,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

/// The transformed state `(x_r, x_in, lambda, x_iv)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtentState {
    /// Extents of reaction, one per reaction.
    #[serde(serialize_with = "serialize_dvector")]
    pub x_r: DVector<f64>,
    /// Extents of inlet, one per inlet stream.
    #[serde(serialize_with = "serialize_dvector")]
    pub x_in: DVector<f64>,
    /// Discounting variable for the initial conditions; 1 at t = 0.
    pub lambda: f64,
    /// Invariant extents; identically zero from the canonical initialization.
    #[serde(serialize_with = "serialize_dvector")]
    pub x_iv: DVector<f64>,
}

impl ExtentState {
    /// The canonical initial state: zero extents, lambda = 1.
    pub fn origin(net: &ReactionNetwork) -> Self {
        ExtentState {
            x_r: DVector::zeros(net.num_reactions()),
            x_in: DVector::zeros(net.num_inlets()),
            lambda: 1.0,
            x_iv: DVector::zeros(net.invariant_dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.x_r.len() + self.x_in.len() + 1 + self.x_iv.len()
    }

    /// Mixture mass `1ᵀ x_in + m0 lambda`.
    pub fn mass(&self, net: &ReactionNetwork) -> f64 {
        self.x_in.sum() + net.m0() * self.lambda
    }

    /// Flatten in the order `(x_r, x_in, lambda, x_iv)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        let r = self.x_r.len();
        let p = self.x_in.len();
        v.rows_mut(0, r).copy_from(&self.x_r);
        v.rows_mut(r, p).copy_from(&self.x_in);
        v[r + p] = self.lambda;
        v.rows_mut(r + p + 1, self.x_iv.len()).copy_from(&self.x_iv);
        v
    }

    pub fn from_vector(net: &ReactionNetwork, v: &DVector<f64>) -> Result<Self, ModelError> {
        if v.len() != net.extent_dim() {
            return Err(ModelError::DimensionMismatch {
                got: v.len(),
                expected: net.extent_dim(),
            });
        }
        let r = net.num_reactions();
        let p = net.num_inlets();
        let q = net.invariant_dim();
        Ok(ExtentState {
            x_r: v.rows(0, r).into_owned(),
            x_in: v.rows(r, p).into_owned(),
            lambda: v[r + p],
            x_iv: v.rows(r + p + 1, q).into_owned(),
        })
    }

    /// Column label of flattened component `k`: `x_r1..`, `x_in1..`,
    /// `lambda`, `x_iv1..`.
    pub fn component_label(net: &ReactionNetwork, k: usize) -> String {
        let r = net.num_reactions();
        let p = net.num_inlets();
        if k < r {
            format!("x_r{}", k + 1)
        } else if k < r + p {
            format!("x_in{}", k - r + 1)
        } else if k == r + p {
            "lambda".to_string()
        } else {
            format!("x_iv{}", k - r - p)
        }
    }
}

/// Piecewise-constant inlet/outlet mass flowrates. Each table row holds a
/// breakpoint time and the value that applies from it onward; the flows are
/// zero before the first breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    u_in: Vec<(f64, DVector<f64>)>,
    u_out: Vec<(f64, f64)>,
    num_inlets: usize,
}

/// JSON-facing flow tables: `{"u_in": [[t, [values...]]...], "u_out": [[t, value]...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default)]
    pub u_in: Vec<(f64, Vec<f64>)>,
    #[serde(default)]
    pub u_out: Vec<(f64, f64)>,
}

impl FlowSpec {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("u_in entry at t = {time} has {got} values, network has {expected} inlets")]
    InletCount { time: f64, got: usize, expected: usize },
    #[error("negative flowrate {value} at t = {time}")]
    NegativeFlow { time: f64, value: f64 },
    #[error("flow breakpoints must be strictly increasing (t = {time})")]
    NonIncreasingTime { time: f64 },
}

impl FlowProfile {
    /// No inlet flow, no outlet flow.
    pub fn batch(num_inlets: usize) -> Self {
        FlowProfile {
            u_in: Vec::new(),
            u_out: Vec::new(),
            num_inlets,
        }
    }

    /// Constant flows from t = 0.
    pub fn constant(u_in: DVector<f64>, u_out: f64) -> Self {
        let num_inlets = u_in.len();
        FlowProfile {
            u_in: vec![(0.0, u_in)],
            u_out: vec![(0.0, u_out)],
            num_inlets,
        }
    }

    pub fn from_spec(spec: &FlowSpec, num_inlets: usize) -> Result<Self, FlowError> {
        let mut u_in = Vec::with_capacity(spec.u_in.len());
        let mut last_t = f64::NEG_INFINITY;
        for (t, values) in &spec.u_in {
            if *t <= last_t {
                return Err(FlowError::NonIncreasingTime { time: *t });
            }
            last_t = *t;
            if values.len() != num_inlets {
                return Err(FlowError::InletCount {
                    time: *t,
                    got: values.len(),
                    expected: num_inlets,
                });
            }
            if let Some(&bad) = values.iter().find(|&&v| v < 0.0) {
                return Err(FlowError::NegativeFlow { time: *t, value: bad });
            }
            u_in.push((*t, DVector::from_row_slice(values)));
        }
        let mut u_out = Vec::with_capacity(spec.u_out.len());
        last_t = f64::NEG_INFINITY;
        for &(t, value) in &spec.u_out {
            if t <= last_t {
                return Err(FlowError::NonIncreasingTime { time: t });
            }
            last_t = t;
            if value < 0.0 {
                return Err(FlowError::NegativeFlow { time: t, value });
            }
            u_out.push((t, value));
        }
        Ok(FlowProfile {
            u_in,
            u_out,
            num_inlets,
        })
    }

    pub fn num_inlets(&self) -> usize {
        self.num_inlets
    }

    /// Inlet mass flowrates at time `t`.
    pub fn u_in(&self, t: f64) -> DVector<f64> {
        match self.u_in.iter().rev().find(|(tk, _)| *tk <= t) {
            Some((_, v)) => v.clone(),
            None => DVector::zeros(self.num_inlets),
        }
    }

    /// Outlet mass flowrate at time `t`.
    pub fn u_out(&self, t: f64) -> f64 {
        self.u_out
            .iter()
            .rev()
            .find(|(tk, _)| *tk <= t)
            .map(|&(_, v)| v)
            .unwrap_or(0.0)
    }

    /// True when the outlet is closed for all times (batch or semi-batch).
    pub fn outlet_closed(&self) -> bool {
        self.u_out.iter().all(|&(_, v)| v == 0.0)
    }

    /// True when every inlet is closed for all times.
    pub fn inlets_closed(&self) -> bool {
        self.u_in.iter().all(|(_, v)| v.iter().all(|&x| x == 0.0))
    }
}

/// Reactor volume model. Classification and Jacobian assembly assume the
/// constant-volume form; constant density derives V from the mixture mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VolumeModel {
    Constant(f64),
    ConstantDensity { density: f64 },
}

impl VolumeModel {
    pub fn volume(&self, mass: f64) -> f64 {
        match *self {
            VolumeModel::Constant(v) => v,
            VolumeModel::ConstantDensity { density } => mass / density,
        }
    }
}

/// Map a mole vector (and mass) into extent coordinates.
///
/// Solves `[Nᵀ W_in n0] (x_r; x_in; lambda) = n` in the least-squares sense
/// (with the mass identity appended as a consistent extra equation) and
/// stores the residual coordinates in `x_iv` through an orthonormal basis
/// of the left null space of the augmented matrix.
///
/// Fails with `TransformInadmissible` when the rank gate
/// `rank [Nᵀ W_in n0] = R + p + 1` does not hold.
pub fn forward_transform(
    net: &ReactionNetwork,
    n: &DVector<f64>,
    m: f64,
) -> Result<ExtentState, ModelError> {
    let report = net.check_independence();
    let required = net.num_reactions() + net.num_inlets() + 1;
    if !report.transform_admissible {
        return Err(ModelError::TransformInadmissible {
            rank: report.rank_augmented,
            required,
        });
    }

    let s = net.num_species();
    let r = net.num_reactions();
    let p = net.num_inlets();
    let a = net.augmented_matrix();

    // Stack the mass identity 1ᵀ x_in + m0 lambda = m under the mole rows.
    let mut sys = DMatrix::zeros(s + 1, required);
    sys.view_mut((0, 0), (s, required)).copy_from(&a);
    for l in 0..p {
        sys[(s, r + l)] = 1.0;
    }
    sys[(s, r + p)] = net.m0();
    let mut rhs = DVector::zeros(s + 1);
    rhs.rows_mut(0, s).copy_from(n);
    rhs[s] = m;

    let x = linalg::solve_least_squares(&sys, &rhs);
    let x_r = x.rows(0, r).into_owned();
    let x_in = x.rows(r, p).into_owned();
    let lambda = x[r + p];

    let basis = linalg::left_null_basis(&a);
    debug_assert_eq!(basis.ncols(), net.invariant_dim());
    let residual = n - &a * &x;
    let x_iv = basis.transpose() * residual;

    Ok(ExtentState {
        x_r,
        x_in,
        lambda,
        x_iv,
    })
}

/// Reconstruct `(n, m)` from extents. Holds along trajectories even in the
/// remark case where the forward transformation does not.
pub fn back_transform(net: &ReactionNetwork, xs: &ExtentState) -> (DVector<f64>, f64) {
    let n = net.stoich().transpose() * &xs.x_r
        + net.inlet_composition() * &xs.x_in
        + net.n0() * xs.lambda;
    let m = xs.mass(net);
    (n, m)
}

pub(crate) fn clamp_concentrations(mut c: DVector<f64>) -> Result<DVector<f64>, ModelError> {
    for k in 0..c.len() {
        if c[k] < 0.0 {
            if c[k] < -CONCENTRATION_NEG_TOL {
                return Err(ModelError::NonphysicalState {
                    species: k,
                    value: c[k],
                });
            }
            c[k] = 0.0;
        }
    }
    Ok(c)
}

/// Concentrations `c = (Nᵀ x_r + W_in x_in + n0 lambda) / V` with drift
/// clamping.
pub fn concentrations(
    net: &ReactionNetwork,
    xs: &ExtentState,
    volume: f64,
) -> Result<DVector<f64>, ModelError> {
    let (n, _) = back_transform(net, xs);
    clamp_concentrations(n / volume)
}

/// Extent-domain vector field:
///
/// ```text
/// x_r'  = r_v - omega x_r        x_in' = u_in - omega x_in
/// lambda' = -omega lambda        x_iv' = -omega x_iv
/// ```
///
/// with `r_v = V r(c)` and `omega = u_out / m`.
pub fn extent_rhs(
    net: &ReactionNetwork,
    xs: &ExtentState,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t: f64,
) -> Result<ExtentState, ModelError> {
    let m = xs.mass(net);
    if m <= 0.0 {
        return Err(ModelError::MassDepleted { mass: m, time: t });
    }
    let v = volume.volume(m);
    let c = concentrations(net, xs, v)?;
    let r_v = net.rates(&c)? * v;
    let u_in = flows.u_in(t);
    let omega = flows.u_out(t) / m;
    Ok(ExtentState {
        x_r: r_v - omega * &xs.x_r,
        x_in: u_in - omega * &xs.x_in,
        lambda: -omega * xs.lambda,
        x_iv: -omega * &xs.x_iv,
    })
}

/// Mole-domain vector field `n' = Nᵀ r_v + W_in u_in - omega n` with the
/// continuity equation `m' = 1ᵀ u_in - u_out`.
pub fn mole_rhs(
    net: &ReactionNetwork,
    n: &DVector<f64>,
    m: f64,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t: f64,
) -> Result<(DVector<f64>, f64), ModelError> {
    let m_mass = m;
    if m_mass <= 0.0 {
        return Err(ModelError::MassDepleted { mass: m_mass, time: t });
    }
    let v = volume.volume(m_mass);
    let c = clamp_concentrations(n / v)?;
    let r_v = net.rates(&c)? * v;
    let u_in = flows.u_in(t);
    let u_out = flows.u_out(t);
    let omega = u_out / m_mass;
    let dn = net.stoich().transpose() * r_v + net.inlet_composition() * &u_in - omega * n;
    let dm = u_in.sum() - u_out;
    Ok((dn, dm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{InletSpec, NetworkSpec, ReactionSpec, Species};
    use crate::rates::RateLawSpec;
    use std::collections::BTreeMap;

    fn series_network() -> ReactionNetwork {
        // A + B <-> C, C <-> D; admissible in batch with an interior charge.
        let spec = NetworkSpec {
            species: vec![
                Species { name: "A".into(), molecular_weight: 1.0 },
                Species { name: "B".into(), molecular_weight: 1.0 },
                Species { name: "C".into(), molecular_weight: 2.0 },
                Species { name: "D".into(), molecular_weight: 2.0 },
            ],
            reactions: vec![
                ReactionSpec {
                    stoichiometry: [("A", -1.0), ("B", -1.0), ("C", 1.0)]
                        .into_iter()
                        .map(|(n, v)| (n.to_string(), v))
                        .collect(),
                    rate_law: RateLawSpec {
                        k_f: 1.0,
                        k_b: 1.0,
                        fwd_exponents: [("A".to_string(), 1.0), ("B".to_string(), 1.0)]
                            .into_iter()
                            .collect(),
                        bwd_exponents: [("C".to_string(), 1.0)].into_iter().collect(),
                        denom: BTreeMap::new(),
                    },
                },
                ReactionSpec {
                    stoichiometry: [("C", -1.0), ("D", 1.0)]
                        .into_iter()
                        .map(|(n, v)| (n.to_string(), v))
                        .collect(),
                    rate_law: RateLawSpec {
                        k_f: 1.0,
                        k_b: 1.0,
                        fwd_exponents: [("C".to_string(), 1.0)].into_iter().collect(),
                        bwd_exponents: [("D".to_string(), 1.0)].into_iter().collect(),
                        denom: BTreeMap::new(),
                    },
                },
            ],
            inlets: vec![],
            initial_moles: [("A", 1.0), ("B", 1.0), ("C", 0.5), ("D", 0.25)]
                .into_iter()
                .map(|(n, v)| (n.to_string(), v))
                .collect(),
        };
        ReactionNetwork::from_spec(&spec).unwrap()
    }

    fn open_network() -> ReactionNetwork {
        // A -> B fed by a pure-A inlet; the remark case (S = 2 < R + p + 1).
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
                rate_law: RateLawSpec {
                    k_f: 1.0,
                    k_b: 0.0,
                    fwd_exponents: [("A".to_string(), 1.0)].into_iter().collect(),
                    bwd_exponents: BTreeMap::new(),
                    denom: BTreeMap::new(),
                },
            }],
            inlets: vec![InletSpec {
                weight_fractions: [("A".to_string(), 1.0)].into_iter().collect(),
            }],
            initial_moles: [("A".to_string(), 1.0)].into_iter().collect(),
        };
        ReactionNetwork::from_spec(&spec).unwrap()
    }

    #[test]
    fn origin_maps_back_to_initial_charge() {
        let net = series_network();
        let origin = ExtentState::origin(&net);
        let (n, m) = back_transform(&net, &origin);
        assert!((n - net.n0()).norm() < 1e-15);
        assert_eq!(m, net.m0());
    }

    #[test]
    fn forward_transform_of_initial_charge_is_origin() {
        let net = series_network();
        let xs = forward_transform(&net, net.n0(), net.m0()).unwrap();
        assert!(xs.x_r.amax() < 1e-10);
        assert!((xs.lambda - 1.0).abs() < 1e-10);
        assert!(xs.x_iv.amax() < 1e-10);
    }

    #[test]
    fn one_unit_of_reaction_one() {
        let net = series_network();
        let n = net.n0() + net.stoich().transpose().column(0);
        let xs = forward_transform(&net, &n, net.m0()).unwrap();
        assert!((xs.x_r[0] - 1.0).abs() < 1e-10);
        assert!(xs.x_r[1].abs() < 1e-10);
        assert!((xs.lambda - 1.0).abs() < 1e-10);
    }

    #[test]
    fn roundtrip_on_admissible_states() {
        let net = series_network();
        for (xr1, xr2, l) in [(0.1, -0.05, 0.9), (0.3, 0.2, 1.0), (0.0, 0.4, 0.7)] {
            let xs = ExtentState {
                x_r: DVector::from_row_slice(&[xr1, xr2]),
                x_in: DVector::zeros(0),
                lambda: l,
                x_iv: DVector::zeros(1),
            };
            let (n, m) = back_transform(&net, &xs);
            let rec = forward_transform(&net, &n, m).unwrap();
            let (n2, m2) = back_transform(&net, &rec);
            assert!((&n2 - &n).norm() / n.norm() < 1e-9);
            assert!((m2 - m).abs() / m.abs() < 1e-9);
            assert!(rec.x_iv.amax() < 1e-9);
        }
    }

    #[test]
    fn one_mass_unit_of_inlet_shifts_the_reconstruction() {
        let net = open_network();
        let xs = ExtentState {
            x_r: DVector::zeros(1),
            x_in: DVector::from_row_slice(&[1.0]),
            lambda: 1.0,
            x_iv: DVector::zeros(0),
        };
        let (n, m) = back_transform(&net, &xs);
        let expected = net.n0() + net.inlet_composition().column(0);
        assert!((n - expected).norm() < 1e-15);
        assert_eq!(m, net.m0() + 1.0);
    }

    #[test]
    fn closed_batch_mole_field_is_the_stoichiometric_image_of_the_rates() {
        let net = series_network();
        let n = DVector::from_row_slice(&[0.9, 0.8, 0.6, 0.3]);
        let (dn, dm) =
            mole_rhs(&net, &n, net.m0(), &FlowProfile::batch(0), &VolumeModel::Constant(1.0), 0.0)
                .unwrap();
        let r = net.rates(&n).unwrap();
        let expected = net.stoich().transpose() * r;
        assert!((dn - expected).norm() < 1e-15);
        assert_eq!(dm, 0.0);
    }

    #[test]
    fn remark_case_rejects_forward_transform() {
        let net = open_network();
        let err = forward_transform(&net, net.n0(), net.m0()).unwrap_err();
        assert!(matches!(
            err,
            ModelError::TransformInadmissible { rank: 2, required: 3 }
        ));
    }

    #[test]
    fn concentrations_scale_with_volume() {
        let net = series_network();
        let origin = ExtentState::origin(&net);
        let c1 = concentrations(&net, &origin, 1.0).unwrap();
        assert!((c1.clone() - net.n0()).norm() < 1e-15);
        let c2 = concentrations(&net, &origin, 2.0).unwrap();
        assert!((c2 * 2.0 - c1).norm() < 1e-15);
    }

    #[test]
    fn small_negative_drift_is_clamped_large_errors() {
        let c = DVector::from_row_slice(&[1.0, -0.5e-9]);
        assert_eq!(clamp_concentrations(c).unwrap()[1], 0.0);
        let c = DVector::from_row_slice(&[1.0, -1e-6]);
        assert!(matches!(
            clamp_concentrations(c),
            Err(ModelError::NonphysicalState { species: 1, .. })
        ));
    }

    #[test]
    fn batch_rhs_has_frozen_flow_states() {
        let net = series_network();
        let flows = FlowProfile::batch(0);
        let xs = ExtentState::origin(&net);
        let d = extent_rhs(&net, &xs, &flows, &VolumeModel::Constant(1.0), 0.0).unwrap();
        assert_eq!(d.lambda, 0.0);
        assert_eq!(d.x_iv.amax(), 0.0);
        // x_r' = V r(c) at the initial concentrations.
        let r = net.rates(net.n0()).unwrap();
        assert!((d.x_r - r).amax() < 1e-15);
    }

    #[test]
    fn chemostat_reaction_extent_rate() {
        // x_r' = V r(c) - (u_out / m) x_r for the open network.
        let net = open_network();
        let flows = FlowProfile::constant(DVector::from_row_slice(&[0.1]), 0.1);
        let xs = ExtentState {
            x_r: DVector::from_row_slice(&[0.2]),
            x_in: DVector::from_row_slice(&[0.3]),
            lambda: 0.8,
            x_iv: DVector::zeros(0),
        };
        let m = xs.mass(&net);
        let c = concentrations(&net, &xs, 1.0).unwrap();
        let expected = net.rates(&c).unwrap()[0] - 0.1 / m * 0.2;
        let d = extent_rhs(&net, &xs, &flows, &VolumeModel::Constant(1.0), 0.0).unwrap();
        assert!((d.x_r[0] - expected).abs() < 1e-15);
        assert!((d.x_in[0] - (0.1 - 0.1 / m * 0.3)).abs() < 1e-15);
        assert!((d.lambda + 0.1 / m * 0.8).abs() < 1e-15);
    }

    #[test]
    fn growth_kinetics_extent_equation() {
        // substrate-to-biomass growth with saturation kinetics
        // r = mu_max c_S c_X / (Ks + c_S); under D = u_out / m the reaction
        // extent obeys x_r' = mu(S) X - D x_r
        let spec = NetworkSpec {
            species: vec![
                Species { name: "S".into(), molecular_weight: 1.0 },
                Species { name: "X".into(), molecular_weight: 1.0 },
            ],
            reactions: vec![ReactionSpec {
                stoichiometry: [("S", -1.0), ("X", 1.0)]
                    .into_iter()
                    .map(|(n, v)| (n.to_string(), v))
                    .collect(),
                rate_law: RateLawSpec {
                    k_f: 1.0,
                    k_b: 0.0,
                    fwd_exponents: [("S".to_string(), 1.0), ("X".to_string(), 1.0)]
                        .into_iter()
                        .collect(),
                    bwd_exponents: BTreeMap::new(),
                    denom: [(
                        "S".to_string(),
                        crate::rates::DenomSpec { a: 1.0, d: 1.0 },
                    )]
                    .into_iter()
                    .collect(),
                },
            }],
            inlets: vec![InletSpec {
                weight_fractions: [("S".to_string(), 1.0)].into_iter().collect(),
            }],
            initial_moles: [("S".to_string(), 1.0)].into_iter().collect(),
        };
        let net = ReactionNetwork::from_spec(&spec).unwrap();
        let d = 0.1;
        let flows = FlowProfile::constant(DVector::from_row_slice(&[d]), d);
        let xs = ExtentState {
            x_r: DVector::from_row_slice(&[0.3]),
            x_in: DVector::from_row_slice(&[0.4]),
            lambda: 0.6,
            x_iv: DVector::zeros(0),
        };
        // m = 0.4 + 0.6 = 1, so u_out / m = D exactly
        assert_eq!(xs.mass(&net), 1.0);
        let c = concentrations(&net, &xs, 1.0).unwrap();
        let (c_s, c_x) = (c[0], c[1]);
        let mu = 1.0 * c_s / (1.0 + c_s);
        let rhs = extent_rhs(&net, &xs, &flows, &VolumeModel::Constant(1.0), 0.0).unwrap();
        assert!((rhs.x_r[0] - (mu * c_x - d * xs.x_r[0])).abs() < 1e-14);
    }

    #[test]
    fn pure_dilution_mole_field() {
        // zero rates: n' = W_in u_in - omega n
        let spec_no_rate = NetworkSpec {
            species: vec![
                Species { name: "A".into(), molecular_weight: 1.0 },
                Species { name: "B".into(), molecular_weight: 1.0 },
            ],
            reactions: vec![ReactionSpec {
                stoichiometry: [("A", -1.0), ("B", 1.0)]
                    .into_iter()
                    .map(|(n, v)| (n.to_string(), v))
                    .collect(),
                rate_law: RateLawSpec::default(),
            }],
            inlets: vec![InletSpec {
                weight_fractions: [("A".to_string(), 1.0)].into_iter().collect(),
            }],
            initial_moles: [("A".to_string(), 1.0)].into_iter().collect(),
        };
        let net0 = ReactionNetwork::from_spec(&spec_no_rate).unwrap();
        let flows = FlowProfile::constant(DVector::from_row_slice(&[0.2]), 0.3);
        let n = DVector::from_row_slice(&[0.6, 0.9]);
        let m = 1.5;
        let (dn, dm) = mole_rhs(&net0, &n, m, &flows, &VolumeModel::Constant(1.0), 0.0).unwrap();
        let omega = 0.3 / m;
        assert!((dn[0] - (0.2 - omega * 0.6)).abs() < 1e-15);
        assert!((dn[1] + omega * 0.9).abs() < 1e-15);
        assert!((dm - (0.2 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn mass_depletion_is_reported() {
        let net = series_network();
        let xs = ExtentState {
            lambda: 0.0,
            ..ExtentState::origin(&net)
        };
        let flows = FlowProfile::batch(0);
        assert!(matches!(
            extent_rhs(&net, &xs, &flows, &VolumeModel::Constant(1.0), 1.5),
            Err(ModelError::MassDepleted { time, .. }) if time == 1.5
        ));
    }

    #[test]
    fn mole_mass_identity_under_the_field() {
        // 1ᵀ M_w n' = m' for arbitrary states of a mass-balanced network.
        let net = open_network();
        let flows = FlowProfile::constant(DVector::from_row_slice(&[0.25]), 0.4);
        for (na, nb, m) in [(1.0, 0.5, 1.5), (0.2, 1.4, 1.6), (2.0, 0.0, 2.0)] {
            let n = DVector::from_row_slice(&[na, nb]);
            let (dn, dm) =
                mole_rhs(&net, &n, m, &flows, &VolumeModel::Constant(1.0), 0.0).unwrap();
            let lhs = net.molecular_weights().dot(&dn);
            assert!((lhs - dm).abs() < 1e-12, "lhs = {lhs}, dm = {dm}");
        }
    }

    #[test]
    fn piecewise_flow_lookup() {
        let spec = FlowSpec {
            u_in: vec![(0.0, vec![1.0]), (2.0, vec![0.5])],
            u_out: vec![(1.0, 0.25)],
        };
        let flows = FlowProfile::from_spec(&spec, 1).unwrap();
        assert_eq!(flows.u_in(-1.0)[0], 0.0);
        assert_eq!(flows.u_in(0.0)[0], 1.0);
        assert_eq!(flows.u_in(1.9)[0], 1.0);
        assert_eq!(flows.u_in(2.0)[0], 0.5);
        assert_eq!(flows.u_out(0.5), 0.0);
        assert_eq!(flows.u_out(1.0), 0.25);
        assert!(!flows.outlet_closed());
    }

    #[test]
    fn flow_validation_rejects_bad_tables() {
        let negative = FlowSpec {
            u_in: vec![(0.0, vec![-0.1])],
            u_out: vec![],
        };
        assert!(matches!(
            FlowProfile::from_spec(&negative, 1),
            Err(FlowError::NegativeFlow { .. })
        ));
        let unsorted = FlowSpec {
            u_in: vec![],
            u_out: vec![(1.0, 0.1), (1.0, 0.2)],
        };
        assert!(matches!(
            FlowProfile::from_spec(&unsorted, 0),
            Err(FlowError::NonIncreasingTime { .. })
        ));
        let wrong_arity = FlowSpec {
            u_in: vec![(0.0, vec![0.1, 0.2])],
            u_out: vec![],
        };
        assert!(matches!(
            FlowProfile::from_spec(&wrong_arity, 1),
            Err(FlowError::InletCount { .. })
        ));
    }

    #[test]
    fn component_labels_follow_flattening_order() {
        let net = open_network();
        assert_eq!(ExtentState::component_label(&net, 0), "x_r1");
        assert_eq!(ExtentState::component_label(&net, 1), "x_in1");
        assert_eq!(ExtentState::component_label(&net, 2), "lambda");
        let xs = ExtentState::origin(&net);
        let v = xs.to_vector();
        let back = ExtentState::from_vector(&net, &v).unwrap();
        assert_eq!(xs, back);
    }
}
