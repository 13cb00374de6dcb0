//! Fixed-step time integration of closed loops, event detection, and trace
//! metrics.
//!
//! Sliding-mode inputs are discontinuous, which rules out adaptive error
//! control: the integrators here are fixed-step (classical RK4 and
//! semi-implicit Euler), making chattering reproducible and traces
//! bit-identical for identical scenarios. No Filippov projection is applied;
//! chattering within a tolerance band is accepted and measured.

use alloc::{string::String, sync::Arc, vec::Vec};
use core::fmt;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::controllers::{ControlError, Controller, ControllerMode};
use crate::potentials::PotentialError;
use crate::robustness::{DisturbanceProfile, RobustnessError};
use crate::sliding::{SampleBox, SlidingError};

/// Fixed-step integration schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta; inputs and disturbances are
    /// re-evaluated at every stage.
    Rk4,
    /// Symplectic-flavored Euler: momentum first, then configuration with the
    /// updated momentum.
    SemiImplicitEuler,
}

/// Sampling request for the pre-simulation assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationRequest {
    pub bounds: SampleBox,
    pub samples: usize,
}

/// A complete simulation setup. The plant model travels inside the
/// controller.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub controller: Controller,
    pub disturbance: Option<DisturbanceProfile>,
    pub q0: DVector<f64>,
    pub p0: DVector<f64>,
    pub t_final: f64,
    pub step: f64,
    pub integrator: Integrator,
    pub record_stride: usize,
    /// Sliding-entry detector parameters (infinity norm, dwell window).
    pub sliding_tol: f64,
    pub sliding_dwell: f64,
    pub certification: Option<CertificationRequest>,
    pub waive_assumptions: bool,
}

impl Scenario {
    /// A scenario with the common defaults: RK4, `h = 1e-4`, stride 10,
    /// detector `(0.05, 0.5)`, no disturbance, no certification.
    pub fn new(name: &str, controller: Controller, q0: DVector<f64>, p0: DVector<f64>, t_final: f64) -> Self {
        Self {
            name: String::from(name),
            controller,
            disturbance: None,
            q0,
            p0,
            t_final,
            step: 1e-4,
            integrator: Integrator::Rk4,
            record_stride: 10,
            sliding_tol: 0.05,
            sliding_dwell: 0.5,
            certification: None,
            waive_assumptions: false,
        }
    }
}

/// One recorded sample. `q_des` is populated in tracking mode, the
/// disturbance channels whenever a profile is attached.
#[derive(Debug, Clone)]
pub struct TraceSample {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub eta: DVector<f64>,
    pub sigma: DVector<f64>,
    pub u: DVector<f64>,
    /// Shaped total energy (error coordinates in tracking mode).
    pub energy: f64,
    /// Potential value `U(sigma)`.
    pub potential: f64,
    pub d_um: Option<DVector<f64>>,
    pub d_m: Option<DVector<f64>>,
    pub q_des: Option<DVector<f64>>,
}

/// Time-indexed record of a simulation run plus step-resolution summaries
/// accumulated while integrating (independent of the record stride).
#[derive(Debug, Clone)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
    /// Earliest detected sliding-entry time under the scenario's detector.
    pub sliding_entry: Option<f64>,
    /// Total variation `sum_k ||u_{k+1} - u_k||_1` over all integration steps.
    pub input_total_variation: f64,
    /// Largest single-step increase of the shaped energy.
    pub max_step_energy_increase: f64,
    /// Largest single-step energy increase normalized by `max(1, H)`.
    pub max_step_energy_increase_rel: f64,
    /// Largest `||u||_inf` over all steps.
    pub peak_input: f64,
    /// Advisory notes from the pre-simulation checks.
    pub warnings: Vec<String>,
}

/// Summary statistics of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub sliding_entry_time: Option<f64>,
    pub max_step_energy_increase: f64,
    pub max_step_energy_increase_rel: f64,
    /// `||q - q_d||` at the final sample (tracking traces only).
    pub terminal_tracking_error: Option<f64>,
    /// `||sigma||` at the final sample.
    pub terminal_sliding_norm: f64,
    /// Chattering index: total variation of the input at step resolution.
    pub input_total_variation: f64,
    pub peak_input: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    InvalidScenario { what: &'static str },
    Control(ControlError),
    /// The state left the finite range; carries the last valid time.
    Divergence { t_last: f64 },
    Robustness(RobustnessError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidScenario { what } => write!(f, "invalid scenario: {what}"),
            SimError::Control(e) => write!(f, "{e}"),
            SimError::Divergence { t_last } => {
                write!(f, "state diverged; last finite state at t = {t_last}")
            }
            SimError::Robustness(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ControlError> for SimError {
    fn from(e: ControlError) -> Self {
        SimError::Control(e)
    }
}

impl From<RobustnessError> for SimError {
    fn from(e: RobustnessError) -> Self {
        SimError::Robustness(e)
    }
}

impl From<SlidingError> for SimError {
    fn from(e: SlidingError) -> Self {
        SimError::Control(ControlError::Sliding(e))
    }
}

impl From<crate::mech_ph::ModelError> for SimError {
    fn from(e: crate::mech_ph::ModelError) -> Self {
        SimError::Control(ControlError::Model(e))
    }
}

impl From<PotentialError> for SimError {
    fn from(e: PotentialError) -> Self {
        SimError::Control(ControlError::Potential(e))
    }
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs the scenario's assumption checks (uniform positive definiteness of
/// `Lambda`, gradient lower-bound constants, positivity of injected damping)
/// over the requested box. Returns advisory warnings.
pub fn certify_scenario(scn: &Scenario) -> Result<Vec<String>, SimError> {
    let mut warnings = scn.controller.advisory_warnings();
    let Some(cert) = &scn.certification else {
        return Ok(warnings);
    };
    let model = scn.controller.model();
    match scn.controller.mode() {
        ControllerMode::PbsmcStabilize | ControllerMode::PbsmcTrack => {
            scn.controller
                .map()
                .certify_uniform_pd(model, &cert.bounds, cert.samples)?;
            scn.controller
                .potential()
                .assumption2_constants(model.dof())?;
        }
        ControllerMode::Kpes => {
            let damping = scn
                .controller
                .damping_d()
                .expect("kpes controller carries damping");
            let dof = model.dof();
            for point in crate::sampling::sample_box(&cert.bounds.bounds, cert.samples.min(256)) {
                let q = DVector::from_fn(dof, |i, _| point[i]);
                let eta = DVector::from_fn(dof, |i, _| point[dof + i]);
                damping.eval(&q, &eta, dof)?;
            }
            if let Err(e) =
                scn.controller
                    .map()
                    .certify_uniform_pd(model, &cert.bounds, cert.samples)
            {
                // condition (10) analog is advisory for pure energy shaping
                warnings.push(alloc::format!(
                    "energy-shaping mode: Lambda positivity check did not certify ({e})"
                ));
            }
        }
    }
    Ok(warnings)
}

/// Fixed-step integration of the (possibly disturbed) plant under the
/// scenario's feedback. Deterministic: identical scenarios produce
/// bit-identical traces.
pub fn simulate(scn: &Scenario) -> Result<Trace, SimError> {
    if !(scn.step > 0.0) {
        return Err(SimError::InvalidScenario { what: "step must be positive" });
    }
    if !(scn.t_final > 0.0) {
        return Err(SimError::InvalidScenario { what: "t_final must be positive" });
    }
    if scn.record_stride == 0 {
        return Err(SimError::InvalidScenario { what: "record_stride must be >= 1" });
    }
    let model = Arc::clone(scn.controller.model());
    let dof = model.dof();
    if scn.q0.len() != dof || scn.p0.len() != dof {
        return Err(SimError::InvalidScenario { what: "initial state dimension" });
    }

    let warnings = if scn.waive_assumptions {
        scn.controller.advisory_warnings()
    } else {
        certify_scenario(scn)?
    };

    let n_steps = (scn.t_final / scn.step).round() as usize;
    if n_steps == 0 {
        return Err(SimError::InvalidScenario { what: "t_final shorter than one step" });
    }
    let h = scn.step;
    let is_tracking = scn.controller.mode() == ControllerMode::PbsmcTrack;

    // derivative of the disturbed plant under feedback; disturbance and input
    // are functions of the stage state and stage time
    let eval_input = |t: f64, q: &DVector<f64>, p: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let eta = model.eta_from_momentum(q, p)?;
        Ok(scn.controller.feedback(q, &eta, t)?)
    };
    let rhs = |t: f64,
               q: &DVector<f64>,
               p: &DVector<f64>,
               u: &DVector<f64>|
     -> Result<(DVector<f64>, DVector<f64>), SimError> {
        let (mut qdot, mut pdot) = model.plant_dynamics(q, p, u)?;
        if let Some(dist) = &scn.disturbance {
            qdot += dist.unmatched(t);
            pdot += dist.matched(t);
        }
        Ok((qdot, pdot))
    };

    let mut q = scn.q0.clone();
    let mut p = scn.p0.clone();
    let mut samples = Vec::with_capacity(n_steps / scn.record_stride + 2);
    let mut input_tv = 0.0f64;
    let mut peak_input = 0.0f64;
    let mut max_inc = f64::NEG_INFINITY;
    let mut max_inc_rel = f64::NEG_INFINITY;
    let mut prev_u: Option<DVector<f64>> = None;
    let mut prev_energy: Option<f64> = None;

    for k in 0..=n_steps {
        let t = k as f64 * h;
        if !finite(&q) || !finite(&p) {
            return Err(SimError::Divergence {
                t_last: (k.saturating_sub(1)) as f64 * h,
            });
        }
        let eta = model.eta_from_momentum(&q, &p)?;
        let u = scn.controller.feedback(&q, &eta, t)?;
        if !finite(&u) {
            return Err(SimError::Divergence { t_last: t });
        }
        let sigma = scn.controller.sliding_variable(&q, &eta, t)?;
        let u_pot = scn.controller.potential().value(&sigma);
        let energy = scn.controller.storage(&q, &eta, t)?;

        if let Some(pu) = &prev_u {
            input_tv += (&u - pu).abs().sum();
        }
        peak_input = peak_input.max(u.amax());
        if let Some(pe) = prev_energy {
            let inc = energy - pe;
            max_inc = max_inc.max(inc);
            max_inc_rel = max_inc_rel.max(inc / pe.abs().max(1.0));
        }
        prev_u = Some(u.clone());
        prev_energy = Some(energy);

        if k % scn.record_stride == 0 {
            let (d_um, d_m) = match &scn.disturbance {
                Some(dist) => {
                    dist.validate_sample(t)?;
                    (Some(dist.unmatched(t)), Some(dist.matched(t)))
                }
                None => (None, None),
            };
            let q_des = if is_tracking {
                scn.controller.trajectory().map(|traj| traj.position(t))
            } else {
                None
            };
            samples.push(TraceSample {
                t,
                q: q.clone(),
                p: p.clone(),
                eta,
                sigma,
                u: u.clone(),
                energy,
                potential: u_pot,
                d_um,
                d_m,
                q_des,
            });
        }

        if k == n_steps {
            break;
        }

        match scn.integrator {
            Integrator::Rk4 => {
                let (k1q, k1p) = rhs(t, &q, &p, &u)?;
                let t2 = t + 0.5 * h;
                let q2 = &q + &k1q * (0.5 * h);
                let p2 = &p + &k1p * (0.5 * h);
                let u2 = eval_input(t2, &q2, &p2)?;
                let (k2q, k2p) = rhs(t2, &q2, &p2, &u2)?;
                let q3 = &q + &k2q * (0.5 * h);
                let p3 = &p + &k2p * (0.5 * h);
                let u3 = eval_input(t2, &q3, &p3)?;
                let (k3q, k3p) = rhs(t2, &q3, &p3, &u3)?;
                let t4 = t + h;
                let q4 = &q + &k3q * h;
                let p4 = &p + &k3p * h;
                let u4 = eval_input(t4, &q4, &p4)?;
                let (k4q, k4p) = rhs(t4, &q4, &p4, &u4)?;
                q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
                p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            }
            Integrator::SemiImplicitEuler => {
                let (_, pdot) = rhs(t, &q, &p, &u)?;
                let p_next = &p + pdot * h;
                let inertia = model.inertia(&q)?;
                let mut qdot = nalgebra::Cholesky::new(inertia)
                    .ok_or(SimError::Control(ControlError::SingularSystem {
                        what: "inertia factorization",
                    }))?
                    .solve(&p_next);
                if let Some(dist) = &scn.disturbance {
                    qdot += dist.unmatched(t);
                }
                q += qdot * h;
                p = p_next;
            }
        }
    }

    let mut trace = Trace {
        samples,
        sliding_entry: None,
        input_total_variation: input_tv,
        max_step_energy_increase: if max_inc.is_finite() { max_inc } else { 0.0 },
        max_step_energy_increase_rel: if max_inc_rel.is_finite() { max_inc_rel } else { 0.0 },
        peak_input,
        warnings,
    };
    trace.sliding_entry = detect_sliding(&trace, scn.sliding_tol, scn.sliding_dwell);
    Ok(trace)
}

/// Earliest `t*` such that `||sigma(t)||_inf <= tol` for every sample in
/// `[t*, t* + dwell]`. The dwell window must be fully covered by the trace;
/// returns `None` otherwise.
pub fn detect_sliding(trace: &Trace, tol: f64, dwell: f64) -> Option<f64> {
    detect_window(trace, tol, dwell, |s| s.sigma.amax())
}

/// Per-component sliding-entry times (same detector applied to `|sigma_i|`).
pub fn component_entry_times(trace: &Trace, tol: f64, dwell: f64) -> Vec<Option<f64>> {
    let m = trace.samples.first().map_or(0, |s| s.sigma.len());
    (0..m)
        .map(|i| detect_window(trace, tol, dwell, |s| s.sigma[i].abs()))
        .collect()
}

fn detect_window(
    trace: &Trace,
    tol: f64,
    dwell: f64,
    magnitude: impl Fn(&TraceSample) -> f64,
) -> Option<f64> {
    if !(tol > 0.0) || !(dwell > 0.0) {
        return None;
    }
    let mut run_start: Option<f64> = None;
    for s in &trace.samples {
        let inside = magnitude(s) <= tol;
        match (inside, run_start) {
            (true, None) => run_start = Some(s.t),
            (true, Some(t0)) => {
                if s.t - t0 >= dwell {
                    return Some(t0);
                }
            }
            (false, _) => run_start = None,
        }
    }
    None
}

/// Summary statistics; the detector parameters are supplied by the caller.
pub fn metrics(trace: &Trace, tol: f64, dwell: f64) -> Metrics {
    let terminal = trace.samples.last();
    Metrics {
        sliding_entry_time: detect_sliding(trace, tol, dwell),
        max_step_energy_increase: trace.max_step_energy_increase,
        max_step_energy_increase_rel: trace.max_step_energy_increase_rel,
        terminal_tracking_error: terminal.and_then(|s| {
            s.q_des.as_ref().map(|qd| (&s.q - qd).norm())
        }),
        terminal_sliding_norm: terminal.map_or(0.0, |s| s.sigma.norm()),
        input_total_variation: trace.input_total_variation,
        peak_input: trace.peak_input,
    }
}
