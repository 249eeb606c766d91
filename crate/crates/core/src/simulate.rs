//! Fixed-step integration of both model forms, cross-validation between
//! them, and the empirical monotone-order test.
//!
//! The integrator is classic fourth-order Runge-Kutta on a uniform grid.
//! Fixed stepping keeps trajectories bit-reproducible across the members of
//! an order-test chain; adaptive step selection would differ per trajectory
//! and confound the tolerance analysis. Mass depletion truncates a run
//! instead of failing it, so partial trajectories remain inspectable.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::ModelError;
use crate::network::ReactionNetwork;
use crate::transform::{
    back_transform, extent_rhs, mole_rhs, ExtentState, FlowProfile, VolumeModel,
};

/// Absolute order tolerance below which integrator noise would produce
/// false violations.
pub const ORDER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub t0: f64,
    pub t1: f64,
    /// Step actually used (the span divided into whole steps).
    pub dt: f64,
    pub steps: usize,
}

/// Marker for a run cut short by mass depletion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub time: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ExtentState>,
    pub truncated: Option<Truncation>,
    pub meta: TrajectoryMeta,
}

#[derive(Debug, Clone)]
pub struct MoleTrajectory {
    pub times: Vec<f64>,
    pub moles: Vec<DVector<f64>>,
    pub masses: Vec<f64>,
    pub truncated: Option<Truncation>,
    pub meta: TrajectoryMeta,
}

fn time_grid(t_span: (f64, f64), dt: f64) -> Result<(usize, f64), ModelError> {
    let (t0, t1) = t_span;
    // NaN settings fail the grid check too
    if dt <= 0.0 || t1 <= t0 || dt.is_nan() || t0.is_nan() || t1.is_nan() {
        return Err(ModelError::InvalidTimeGrid { t0, t1, dt });
    }
    let steps = (((t1 - t0) / dt).round() as usize).max(1);
    Ok((steps, (t1 - t0) / steps as f64))
}

fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>, ModelError>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>, ModelError>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + 0.5 * h * &k1))?;
    let k3 = f(t + 0.5 * h, &(y + 0.5 * h * &k2))?;
    let k4 = f(t + h, &(y + h * &k3))?;
    Ok(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Integrate the extent dynamics from `xs0` on a uniform grid.
pub fn integrate_extents(
    net: &ReactionNetwork,
    xs0: &ExtentState,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t_span: (f64, f64),
    dt: f64,
) -> Result<ExtentTrajectory, ModelError> {
    let (steps, h) = time_grid(t_span, dt)?;
    if xs0.dim() != net.extent_dim() {
        return Err(ModelError::DimensionMismatch {
            got: xs0.dim(),
            expected: net.extent_dim(),
        });
    }
    let f = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>, ModelError> {
        let xs = ExtentState::from_vector(net, y)?;
        Ok(extent_rhs(net, &xs, flows, volume, t)?.to_vector())
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut truncated = None;
    times.push(t_span.0);
    states.push(xs0.clone());
    let mut y = xs0.to_vector();
    for k in 0..steps {
        let t = t_span.0 + k as f64 * h;
        let next = match rk4_step(&f, t, &y, h) {
            Ok(next) => next,
            Err(ModelError::MassDepleted { mass, time }) => {
                truncated = Some(Truncation { time, mass });
                break;
            }
            Err(e) => return Err(e),
        };
        let state = ExtentState::from_vector(net, &next)?;
        let mass = state.mass(net);
        if mass <= 0.0 {
            truncated = Some(Truncation { time: t + h, mass });
            break;
        }
        times.push(t_span.0 + (k + 1) as f64 * h);
        states.push(state);
        y = next;
    }
    Ok(ExtentTrajectory {
        times,
        states,
        truncated,
        meta: TrajectoryMeta {
            t0: t_span.0,
            t1: t_span.1,
            dt: h,
            steps,
        },
    })
}

/// Integrate the mole-domain dynamics (with the continuity equation) from
/// `(n0, m0)`.
pub fn integrate_moles(
    net: &ReactionNetwork,
    n0: &DVector<f64>,
    m0: f64,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t_span: (f64, f64),
    dt: f64,
) -> Result<MoleTrajectory, ModelError> {
    let (steps, h) = time_grid(t_span, dt)?;
    let s = net.num_species();
    if n0.len() != s {
        return Err(ModelError::DimensionMismatch {
            got: n0.len(),
            expected: s,
        });
    }
    let f = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>, ModelError> {
        let n = y.rows(0, s).into_owned();
        let m = y[s];
        let (dn, dm) = mole_rhs(net, &n, m, flows, volume, t)?;
        let mut dy = DVector::zeros(s + 1);
        dy.rows_mut(0, s).copy_from(&dn);
        dy[s] = dm;
        Ok(dy)
    };

    let mut y = DVector::zeros(s + 1);
    y.rows_mut(0, s).copy_from(n0);
    y[s] = m0;

    let mut times = Vec::with_capacity(steps + 1);
    let mut moles = Vec::with_capacity(steps + 1);
    let mut masses = Vec::with_capacity(steps + 1);
    let mut truncated = None;
    times.push(t_span.0);
    moles.push(n0.clone());
    masses.push(m0);
    for k in 0..steps {
        let t = t_span.0 + k as f64 * h;
        let next = match rk4_step(&f, t, &y, h) {
            Ok(next) => next,
            Err(ModelError::MassDepleted { mass, time }) => {
                truncated = Some(Truncation { time, mass });
                break;
            }
            Err(e) => return Err(e),
        };
        let mass = next[s];
        if mass <= 0.0 {
            truncated = Some(Truncation { time: t + h, mass });
            break;
        }
        times.push(t_span.0 + (k + 1) as f64 * h);
        moles.push(next.rows(0, s).into_owned());
        masses.push(mass);
        y = next;
    }
    Ok(MoleTrajectory {
        times,
        moles,
        masses,
        truncated,
        meta: TrajectoryMeta {
            t0: t_span.0,
            t1: t_span.1,
            dt: h,
            steps,
        },
    })
}

/// Worst-case disagreement between the mole-domain trajectory and the
/// reconstruction from the extent-domain trajectory of the same scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossValidationReport {
    /// max over output times of |n_mole - n_reconstructed|_inf / (1 + |n_mole|_inf)
    pub max_deviation: f64,
    pub at_time: f64,
    /// max relative disagreement between the continuity mass and
    /// 1ᵀ x_in + m0 lambda
    pub max_mass_deviation: f64,
    pub dt: f64,
    pub points: usize,
}

/// Integrate both forms (extents from the canonical origin, moles from
/// `n0`) and report the reconstruction deviation.
pub fn cross_validate(
    net: &ReactionNetwork,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t_span: (f64, f64),
    dt: f64,
) -> Result<CrossValidationReport, ModelError> {
    let extents = integrate_extents(net, &ExtentState::origin(net), flows, volume, t_span, dt)?;
    let moles = integrate_moles(net, net.n0(), net.m0(), flows, volume, t_span, dt)?;
    let points = extents.times.len().min(moles.times.len());
    let mut max_deviation = 0.0_f64;
    let mut at_time = t_span.0;
    let mut max_mass_deviation = 0.0_f64;
    for k in 0..points {
        let (n_rec, m_rec) = back_transform(net, &extents.states[k]);
        let n_mole = &moles.moles[k];
        let dev = (n_mole - n_rec).amax() / (1.0 + n_mole.amax());
        if dev > max_deviation {
            max_deviation = dev;
            at_time = extents.times[k];
        }
        let mass_dev = (moles.masses[k] - m_rec).abs() / moles.masses[k];
        max_mass_deviation = max_mass_deviation.max(mass_dev);
    }
    Ok(CrossValidationReport {
        max_deviation,
        at_time,
        max_mass_deviation,
        dt: extents.meta.dt,
        points,
    })
}

/// Richardson self-deviation of the extent integration: worst normalized
/// disagreement between the `dt` and `dt/2` solutions on the coarse grid.
/// This is the quantity that exhibits the stepper's fourth-order
/// convergence; the cross-form deviation does not, because the fixed-step
/// stages commute exactly with the affine reconstruction and leave only
/// roundoff.
pub fn richardson_deviation(
    net: &ReactionNetwork,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t_span: (f64, f64),
    dt: f64,
) -> Result<f64, ModelError> {
    let origin = ExtentState::origin(net);
    let coarse = integrate_extents(net, &origin, flows, volume, t_span, dt)?;
    let fine = integrate_extents(net, &origin, flows, volume, t_span, dt / 2.0)?;
    let points = coarse.times.len().min(fine.times.len().div_ceil(2));
    let mut max_dev = 0.0_f64;
    for k in 0..points {
        let a = coarse.states[k].to_vector();
        let b = fine.states[2 * k].to_vector();
        max_dev = max_dev.max((a - &b).amax() / (1.0 + b.amax()));
    }
    Ok(max_dev)
}

/// Cross-validation at `dt` and `dt/2` together with the Richardson
/// order-of-convergence measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub coarse: CrossValidationReport,
    pub fine: CrossValidationReport,
    /// Richardson deviation between the dt and dt/2 solutions.
    pub richardson_coarse: f64,
    /// Richardson deviation between the dt/2 and dt/4 solutions.
    pub richardson_fine: f64,
    /// `richardson_coarse / richardson_fine`; about 16 for a fourth-order
    /// stepper when truncation error dominates roundoff.
    pub order_ratio: f64,
}

pub fn convergence_study(
    net: &ReactionNetwork,
    flows: &FlowProfile,
    volume: &VolumeModel,
    t_span: (f64, f64),
    dt: f64,
) -> Result<ConvergenceReport, ModelError> {
    let coarse = cross_validate(net, flows, volume, t_span, dt)?;
    let fine = cross_validate(net, flows, volume, t_span, dt / 2.0)?;
    let richardson_coarse = richardson_deviation(net, flows, volume, t_span, dt)?;
    let richardson_fine = richardson_deviation(net, flows, volume, t_span, dt / 2.0)?;
    Ok(ConvergenceReport {
        coarse,
        fine,
        richardson_coarse,
        richardson_fine,
        order_ratio: richardson_coarse / richardson_fine,
    })
}

/// First componentwise order violation along a chain.
#[derive(Debug, Clone, Serialize)]
pub struct OrderViolation {
    pub time: f64,
    /// Adjacent chain members (lower, upper) that crossed.
    pub pair: (usize, usize),
    pub component: usize,
    pub component_label: String,
    /// The (negative) gap `upper - lower` observed.
    pub gap: f64,
}

/// Outcome of the monotone order test on a chain of ordered initial states.
#[derive(Debug, Clone, Serialize)]
pub struct OrderTestResult {
    pub chain_len: usize,
    pub preserved: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<OrderViolation>,
    pub tolerance: f64,
    pub points_compared: usize,
}

/// Integrate every chain member under identical inputs and settings and
/// check that the componentwise order of the initial states survives at
/// every output time.
pub fn monotone_order_test(
    net: &ReactionNetwork,
    flows: &FlowProfile,
    volume: &VolumeModel,
    chain: &[ExtentState],
    t_span: (f64, f64),
    dt: f64,
    tol: f64,
) -> Result<OrderTestResult, ModelError> {
    // the chain must be ordered before anything is integrated
    for w in 0..chain.len().saturating_sub(1) {
        let lower = chain[w].to_vector();
        let upper = chain[w + 1].to_vector();
        for k in 0..lower.len() {
            if upper[k] - lower[k] < -tol {
                return Err(ModelError::UnorderedChain {
                    lower: w,
                    upper: w + 1,
                    component: k,
                });
            }
        }
    }

    let trajectories: Vec<ExtentTrajectory> = chain
        .iter()
        .map(|xs0| integrate_extents(net, xs0, flows, volume, t_span, dt))
        .collect::<Result<_, _>>()?;
    let points = trajectories
        .iter()
        .map(|tr| tr.times.len())
        .min()
        .unwrap_or(0);

    let mut first_violation: Option<OrderViolation> = None;
    'scan: for k in 0..points {
        for w in 0..chain.len().saturating_sub(1) {
            let lower = trajectories[w].states[k].to_vector();
            let upper = trajectories[w + 1].states[k].to_vector();
            for comp in 0..lower.len() {
                let gap = upper[comp] - lower[comp];
                if gap < -tol {
                    first_violation = Some(OrderViolation {
                        time: trajectories[w].times[k],
                        pair: (w, w + 1),
                        component: comp,
                        component_label: ExtentState::component_label(net, comp),
                        gap,
                    });
                    break 'scan;
                }
            }
        }
    }

    Ok(OrderTestResult {
        chain_len: chain.len(),
        preserved: first_violation.is_none(),
        first_violation,
        tolerance: tol,
        points_compared: points,
    })
}

/// Build a componentwise-ordered chain of `k` states by adding nonnegative
/// random increments (at most `max_increment` times the state scale) to the
/// reaction and inlet extents of `base`.
pub fn random_ordered_chain<R: Rng>(
    base: &ExtentState,
    k: usize,
    max_increment: f64,
    rng: &mut R,
) -> Vec<ExtentState> {
    let scale = base.to_vector().amax().max(1.0);
    let mut chain = Vec::with_capacity(k);
    let mut current = base.clone();
    chain.push(current.clone());
    for _ in 1..k {
        for v in current.x_r.iter_mut() {
            *v += rng.random_range(0.0..max_increment * scale);
        }
        for v in current.x_in.iter_mut() {
            *v += rng.random_range(0.0..max_increment * scale);
        }
        chain.push(current.clone());
    }
    chain
}

/// Trajectory CSV with header `t,x_r1..,x_in1..,lambda,x_iv1..`.
pub fn extent_csv(net: &ReactionNetwork, trajectory: &ExtentTrajectory) -> String {
    let dim = net.extent_dim();
    let mut out = String::from("t");
    for k in 0..dim {
        out.push(',');
        out.push_str(&ExtentState::component_label(net, k));
    }
    out.push('\n');
    for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
        out.push_str(&format!("{t}"));
        for value in state.to_vector().iter() {
            out.push_str(&format!(",{value}"));
        }
        out.push('\n');
    }
    out
}

/// Mole-trajectory CSV with header `t,n_<species>..,m`.
pub fn mole_csv(net: &ReactionNetwork, trajectory: &MoleTrajectory) -> String {
    let mut out = String::from("t");
    for sp in net.species() {
        out.push_str(&format!(",n_{}", sp.name));
    }
    out.push_str(",m\n");
    for k in 0..trajectory.times.len() {
        out.push_str(&format!("{}", trajectory.times[k]));
        for value in trajectory.moles[k].iter() {
            out.push_str(&format!(",{value}"));
        }
        out.push_str(&format!(",{}\n", trajectory.masses[k]));
    }
    out
}
