//! Block-wise assembly of the extent-domain Jacobian and the Metzler test.
//!
//! With `omega = u_out / m` and `m = 1ᵀ x_in + m0 lambda`, the nonzero
//! blocks of the Jacobian of the extent vector field (constant volume) are
//!
//! ```text
//! df_r/dx_r   = (dr/dc) Nᵀ - omega I
//! df_r/dx_in  = (dr/dc) W_in + (u_out/m²) x_r 1ᵀ
//! df_r/dlam   = (dr/dc) n0  + (u_out/m²) m0 x_r
//! df_in/dx_in = u_out (x_in 1ᵀ / m² - I/m)
//! df_in/dlam  = (u_out m0 / m²) x_in     (entrywise)
//! df_lam/dx_in= (u_out lambda / m²) 1ᵀ
//! df_lam/dlam = -u_out (1/m - m0 lambda / m²)
//! ```
//!
//! The blocks `df_in/dx_r`, `df_lam/dx_r` and every block in the `x_iv`
//! columns of the `(x_r, x_in, lambda)` rows are structurally zero. The
//! `x_iv` rows carry `-omega` on the diagonal and mass couplings
//! proportional to `x_iv`, which vanish on canonical trajectories where
//! `x_iv = 0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::ModelError;
use crate::network::ReactionNetwork;
use crate::transform::{concentrations, serialize_dvector, ExtentState, FlowProfile, VolumeModel};

/// Default tolerance on off-diagonal entries for the Metzler test.
pub const METZLER_TOL: f64 = 1e-12;

fn serialize_dmatrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    s.collect_seq(rows)
}

/// The seven nonzero closed-form blocks, in the `(x_r, x_in, lambda)` rows.
#[derive(Debug, Clone, Serialize)]
pub struct JacobianBlocks {
    #[serde(serialize_with = "serialize_dmatrix")]
    pub reaction_reaction: DMatrix<f64>,
    #[serde(serialize_with = "serialize_dmatrix")]
    pub reaction_inlet: DMatrix<f64>,
    #[serde(serialize_with = "serialize_dvector")]
    pub reaction_lambda: DVector<f64>,
    #[serde(serialize_with = "serialize_dmatrix")]
    pub inlet_inlet: DMatrix<f64>,
    #[serde(serialize_with = "serialize_dvector")]
    pub inlet_lambda: DVector<f64>,
    #[serde(serialize_with = "serialize_dvector")]
    pub lambda_inlet: DVector<f64>,
    pub lambda_lambda: f64,
}

/// Conditions at which a Jacobian was assembled.
#[derive(Debug, Clone, Serialize)]
pub struct EvalPoint {
    pub state: ExtentState,
    pub time: f64,
    pub volume: f64,
    #[serde(serialize_with = "serialize_dvector")]
    pub u_in: DVector<f64>,
    pub u_out: f64,
    pub mass: f64,
}

/// Assembled Jacobian ordered `(x_r, x_in, lambda, x_iv)` with per-block
/// provenance and the Metzler verdict.
#[derive(Debug, Clone, Serialize)]
pub struct JacobianReport {
    #[serde(serialize_with = "serialize_dmatrix")]
    pub jacobian: DMatrix<f64>,
    pub blocks: JacobianBlocks,
    pub metzler: bool,
    /// Off-diagonal entries below `-tolerance` as `(row, col, value)`.
    pub violations: Vec<(usize, usize, f64)>,
    pub tolerance: f64,
    pub eval_point: EvalPoint,
}

/// Assemble the extent-domain Jacobian at a state. The volume is held
/// constant during assembly; with the constant-density model the volume at
/// the evaluated mass is used and its state dependence is omitted.
pub fn assemble_jacobian(
    net: &ReactionNetwork,
    xs: &ExtentState,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t: f64,
) -> Result<JacobianReport, ModelError> {
    let m = xs.mass(net);
    if m <= 0.0 {
        return Err(ModelError::MassDepleted { mass: m, time: t });
    }
    let v = volume.volume(m);
    let c = concentrations(net, xs, v)?;
    let g = net.rate_gradient_matrix(&c)?;

    let r = net.num_reactions();
    let p = net.num_inlets();
    let q = net.invariant_dim();
    let u_in = flows.u_in(t);
    let u_out = flows.u_out(t);
    let omega = u_out / m;
    let m2 = m * m;
    let ones_p = DMatrix::from_element(1, p, 1.0);

    let reaction_reaction = &g * net.stoich().transpose() - omega * DMatrix::identity(r, r);
    let reaction_inlet = &g * net.inlet_composition() + (u_out / m2) * &xs.x_r * &ones_p;
    let reaction_lambda = &g * net.n0() + (u_out * net.m0() / m2) * &xs.x_r;
    let inlet_inlet =
        (u_out / m2) * &xs.x_in * &ones_p - (u_out / m) * DMatrix::identity(p, p);
    let inlet_lambda = (u_out * net.m0() / m2) * &xs.x_in;
    let lambda_inlet = DVector::from_element(p, u_out * xs.lambda / m2);
    let lambda_lambda = -u_out * (1.0 / m - net.m0() * xs.lambda / m2);

    let dim = net.extent_dim();
    let mut j = DMatrix::zeros(dim, dim);
    let (ir, ip, il, iv) = (0, r, r + p, r + p + 1);
    j.view_mut((ir, ir), (r, r)).copy_from(&reaction_reaction);
    j.view_mut((ir, ip), (r, p)).copy_from(&reaction_inlet);
    j.view_mut((ir, il), (r, 1)).copy_from(&reaction_lambda);
    j.view_mut((ip, ip), (p, p)).copy_from(&inlet_inlet);
    j.view_mut((ip, il), (p, 1)).copy_from(&inlet_lambda);
    j.view_mut((il, ip), (1, p)).copy_from(&lambda_inlet.transpose());
    j[(il, il)] = lambda_lambda;
    // x_iv rows: mass couplings scale with x_iv and vanish on canonical
    // trajectories.
    for k in 0..q {
        for l in 0..p {
            j[(iv + k, ip + l)] = (u_out / m2) * xs.x_iv[k];
        }
        j[(iv + k, il)] = (u_out * net.m0() / m2) * xs.x_iv[k];
        j[(iv + k, iv + k)] = -omega;
    }

    let (metzler, violations) = metzler_check(&j, METZLER_TOL);
    Ok(JacobianReport {
        jacobian: j,
        blocks: JacobianBlocks {
            reaction_reaction,
            reaction_inlet,
            reaction_lambda,
            inlet_inlet,
            inlet_lambda,
            lambda_inlet,
            lambda_lambda,
        },
        metzler,
        violations,
        tolerance: METZLER_TOL,
        eval_point: EvalPoint {
            state: xs.clone(),
            time: t,
            volume: v,
            u_in,
            u_out,
            mass: m,
        },
    })
}

/// True iff every off-diagonal entry is at least `-tol`; violations are
/// returned as `(row, col, value)`.
pub fn metzler_check(j: &DMatrix<f64>, tol: f64) -> (bool, Vec<(usize, usize, f64)>) {
    let mut violations = Vec::new();
    for i in 0..j.nrows() {
        for k in 0..j.ncols() {
            if i != k && j[(i, k)] < -tol {
                violations.push((i, k, j[(i, k)]));
            }
        }
    }
    (violations.is_empty(), violations)
}

/// Witness of a flow sub-Jacobian entry below zero.
#[derive(Debug, Clone, Serialize)]
pub struct FlowWitness {
    pub state_index: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Result of checking the `(x_in, lambda)` sub-Jacobian for nonnegative
/// off-diagonals at sampled states. This subsystem is decoupled from the
/// reactions, so the check needs no rate gradients; it is expected to pass
/// at every state with `m > 0` and nonnegative `x_in`, `lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct FlowSubsystemReport {
    pub states_checked: usize,
    pub entries_checked: usize,
    pub passed: bool,
    pub failures: Vec<FlowWitness>,
}

/// Verify at each sampled `(t, state)` that the off-diagonal entries of the
/// flow sub-Jacobian (`df_in/dx_in` off the diagonal, `df_in/dlambda`,
/// `df_lam/dx_in`) are nonnegative.
pub fn flow_subsystem_check(
    net: &ReactionNetwork,
    flows: &FlowProfile,
    states: &[(f64, ExtentState)],
) -> FlowSubsystemReport {
    let p = net.num_inlets();
    let mut failures = Vec::new();
    let mut entries = 0usize;
    for (idx, (t, xs)) in states.iter().enumerate() {
        let m = xs.mass(net);
        let u_out = flows.u_out(*t);
        let m2 = m * m;
        // indices within the (x_in, lambda) sub-block: 0..p inlets, p lambda
        for i in 0..p {
            for k in 0..p {
                if i != k {
                    entries += 1;
                    let value = u_out * xs.x_in[i] / m2;
                    if value < 0.0 {
                        failures.push(FlowWitness { state_index: idx, row: i, col: k, value });
                    }
                }
            }
            entries += 2;
            let dflam = u_out * net.m0() * xs.x_in[i] / m2;
            if dflam < 0.0 {
                failures.push(FlowWitness { state_index: idx, row: i, col: p, value: dflam });
            }
            let dlamf = u_out * xs.lambda / m2;
            if dlamf < 0.0 {
                failures.push(FlowWitness { state_index: idx, row: p, col: i, value: dlamf });
            }
        }
    }
    FlowSubsystemReport {
        states_checked: states.len(),
        entries_checked: entries,
        passed: failures.is_empty(),
        failures,
    }
}
