//! Feedback synthesis: generalized kinetic-potential energy shaping, sliding
//! mode stabilization, and trajectory tracking.
//!
//! All three laws close the transformed loop around an artificial potential
//! `U(phi(., .))`:
//!
//! * [`kpes_feedback`] shapes the energy to `1/2 ||eta||^2 + U(phi(q, eta))`
//!   and injects damping `D_d`, giving an asymptotically stabilizing
//!   passivity-based controller for smooth `U`.
//! * [`pbsmc_feedback`] instead forces the sliding variable to obey
//!   `sigmadot = -Lambda grad U(sigma)` exactly, which for potentials with a
//!   kink at the origin is a finite-time sliding-mode law.
//! * [`tracking_pbsmc`] first converts the plant into an error system in
//!   `(qtilde, etatilde) = (q - q_d, eta - eta_d)` via
//!   [`tracking_prefeedback`] and then applies the same sliding-mode shaping
//!   to the error coordinates.
//!
//! Controllers are pure functions of `(state, t)`; a single [`Controller`]
//! value may serve many concurrent simulations.

use alloc::{string::String, sync::Arc, vec::Vec};
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::mech_ph::{MechanicalModel, ModelError};
use crate::potentials::{Potential, PotentialError};
use crate::sliding::{SlidingError, SlidingMap};

/// Map `t -> vector`.
pub type TimeFn = dyn Fn(f64) -> DVector<f64> + Send + Sync;
/// Map `(q, eta) -> matrix`.
pub type StateMatrixFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

#[derive(Debug, Clone, PartialEq)]
pub enum ControlError {
    Model(ModelError),
    Sliding(SlidingError),
    Potential(PotentialError),
    /// `D_d + D_d^T` must be positive definite wherever it is evaluated.
    DampingInjectionNotPositive { min_eigenvalue: f64 },
    /// A linear solve in the feedback path failed.
    SingularSystem { what: &'static str },
    ParameterOutOfRange { what: &'static str, value: f64 },
    /// The supplied trajectory derivatives disagree with finite differences.
    TrajectoryInconsistent { t: f64, deviation: f64 },
}

impl fmt::Display for ControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlError::Model(e) => write!(f, "{e}"),
            ControlError::Sliding(e) => write!(f, "{e}"),
            ControlError::Potential(e) => write!(f, "{e}"),
            ControlError::DampingInjectionNotPositive { min_eigenvalue } => {
                write!(f, "injected damping is not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            ControlError::SingularSystem { what } => write!(f, "singular linear system: {what}"),
            ControlError::ParameterOutOfRange { what, value } => {
                write!(f, "parameter {what} out of range: {value}")
            }
            ControlError::TrajectoryInconsistent { t, deviation } => {
                write!(f, "trajectory derivatives inconsistent at t = {t} (deviation {deviation:e})")
            }
        }
    }
}

impl core::error::Error for ControlError {}

impl From<ModelError> for ControlError {
    fn from(e: ModelError) -> Self {
        ControlError::Model(e)
    }
}

impl From<SlidingError> for ControlError {
    fn from(e: SlidingError) -> Self {
        ControlError::Sliding(e)
    }
}

impl From<PotentialError> for ControlError {
    fn from(e: PotentialError) -> Self {
        ControlError::Potential(e)
    }
}

/// Bounded, twice-differentiable reference `q_d(t)` with both derivatives.
#[derive(Clone)]
pub struct DesiredTrajectory {
    position: Arc<TimeFn>,
    velocity: Arc<TimeFn>,
    acceleration: Arc<TimeFn>,
}

impl DesiredTrajectory {
    pub fn new(position: Arc<TimeFn>, velocity: Arc<TimeFn>, acceleration: Arc<TimeFn>) -> Self {
        Self {
            position,
            velocity,
            acceleration,
        }
    }

    /// Constant reference (regulation to a fixed configuration).
    pub fn constant(q_d: DVector<f64>) -> Self {
        let m = q_d.len();
        Self {
            position: Arc::new(move |_t| q_d.clone()),
            velocity: Arc::new(move |_t| DVector::zeros(m)),
            acceleration: Arc::new(move |_t| DVector::zeros(m)),
        }
    }

    pub fn position(&self, t: f64) -> DVector<f64> {
        (self.position)(t)
    }

    pub fn velocity(&self, t: f64) -> DVector<f64> {
        (self.velocity)(t)
    }

    pub fn acceleration(&self, t: f64) -> DVector<f64> {
        (self.acceleration)(t)
    }

    /// Checks that the supplied derivatives match central finite differences
    /// of the position (resp. velocity) at `n` samples of `[t0, t1]`.
    pub fn validate_consistency(
        &self,
        t0: f64,
        t1: f64,
        n: usize,
        tol: f64,
    ) -> Result<(), ControlError> {
        let h = 1e-6;
        for i in 0..n {
            let t = t0 + (t1 - t0) * (i as f64 + 0.5) / n as f64;
            let v_fd = (self.position(t + h) - self.position(t - h)) / (2.0 * h);
            let dv = (self.velocity(t) - &v_fd).amax();
            if dv > tol {
                return Err(ControlError::TrajectoryInconsistent { t, deviation: dv });
            }
            let a_fd = (self.velocity(t + h) - self.velocity(t - h)) / (2.0 * h);
            let da = (self.acceleration(t) - &a_fd).amax();
            if da > tol {
                return Err(ControlError::TrajectoryInconsistent { t, deviation: da });
            }
        }
        Ok(())
    }
}

impl fmt::Debug for DesiredTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DesiredTrajectory")
    }
}

/// The damping matrix `D_d(q, eta)` injected by the energy-shaping mode.
#[derive(Clone)]
pub enum DampingInjection {
    /// `gain * I`.
    ScaledIdentity(f64),
    Constant(DMatrix<f64>),
    StateDependent(Arc<StateMatrixFn>),
}

impl DampingInjection {
    /// Evaluates `D_d` and enforces `D_d + D_d^T > 0`.
    pub fn eval(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
        dof: usize,
    ) -> Result<DMatrix<f64>, ControlError> {
        let d = match self {
            DampingInjection::ScaledIdentity(gain) => DMatrix::identity(dof, dof) * *gain,
            DampingInjection::Constant(m) => m.clone(),
            DampingInjection::StateDependent(f) => f(q, eta),
        };
        let sym = (&d + d.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(ControlError::DampingInjectionNotPositive {
                min_eigenvalue: 2.0 * min_eig,
            });
        }
        Ok(d)
    }
}

impl fmt::Debug for DampingInjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DampingInjection::ScaledIdentity(g) => write!(f, "DampingInjection::ScaledIdentity({g})"),
            DampingInjection::Constant(_) => f.write_str("DampingInjection::Constant"),
            DampingInjection::StateDependent(_) => f.write_str("DampingInjection::StateDependent"),
        }
    }
}

fn solve(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    what: &'static str,
) -> Result<DVector<f64>, ControlError> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(ControlError::SingularSystem { what })
}

fn solve_mat(
    m: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    what: &'static str,
) -> Result<DMatrix<f64>, ControlError> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(ControlError::SingularSystem { what })
}

/// Energy-shaping input
/// `u = -G^{-1} { (D_d - D) eta + (T^T (dphi/dq)^T + D_d (dphi/deta)^T) grad U }`,
/// which closes the loop into a port-Hamiltonian system with energy
/// `1/2 ||eta||^2 + U(phi(q, eta))` and structure damping `D_d`.
pub fn kpes_feedback(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    damping_d: &DampingInjection,
    q: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    let t = model.cholesky_factor(q)?;
    let d = model.transformed_damping(q, eta)?;
    let g = t.transpose() * model.input_map0(q)?;
    let jq = map.jacobian_q(q, eta);
    let je = map.jacobian_eta(q, eta);
    let dd = damping_d.eval(q, eta, model.dof())?;
    let grad = potential.gradient(&map.sigma(q, eta));
    let rhs = (&dd - &d) * eta + (t.transpose() * jq.transpose() + &dd * je.transpose()) * grad;
    Ok(-solve(&g, &rhs, "input map G")?)
}

/// Sliding-mode stabilization
/// `u = -G^{-1} (dphi/deta)^{-1} Lambda grad U
///      + G^{-1} (D eta - (dphi/deta)^{-1} (dphi/dq) T eta)`,
/// under which the sliding variable obeys `sigmadot = -Lambda grad U` exactly.
pub fn pbsmc_feedback(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    q: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    let t = model.cholesky_factor(q)?;
    let d = model.transformed_damping(q, eta)?;
    let g = t.transpose() * model.input_map0(q)?;
    map.validate_at(q, eta)?;
    let jq = map.jacobian_q(q, eta);
    let je = map.jacobian_eta(q, eta);
    let lambda = map.lambda_with_factor(&t, q, eta);
    let grad = potential.gradient(&map.sigma(q, eta));

    let lam_grad = solve(&je, &(&lambda * grad), "dphi/deta")?;
    let kin = solve(&je, &(&jq * (&t * eta)), "dphi/deta")?;
    let rhs = -lam_grad + &d * eta - kin;
    solve(&g, &rhs, "input map G")
}

/// Target momentum `eta_d(q, t) = T(q)^{-1} qdot_d(t)` and its configuration
/// Jacobian, assembled from `dT^{-1}/dq_k = -T^{-1} (dT/dq_k) T^{-1}`.
pub fn desired_momentum(
    model: &MechanicalModel,
    trajectory: &DesiredTrajectory,
    q: &DVector<f64>,
    t: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), ControlError> {
    let m = model.dof();
    let t_mat = model.cholesky_factor(q)?;
    let qdot_d = trajectory.velocity(t);
    let eta_d = t_mat
        .solve_lower_triangular(&qdot_d)
        .ok_or(ControlError::SingularSystem { what: "factor T" })?;
    let dt = model.d_cholesky(q)?;
    let mut jac = DMatrix::zeros(m, m);
    for k in 0..m {
        let col = t_mat
            .solve_lower_triangular(&(&dt[k] * &eta_d))
            .ok_or(ControlError::SingularSystem { what: "factor T" })?;
        jac.set_column(k, &(-col));
    }
    Ok((eta_d, jac))
}

/// Pre-feedback
/// `u = G^{-1} (D eta_d + (deta_d/dq) T eta + T^{-1} qddot_d + v)`
/// converting the plant into the tracking-error port-Hamiltonian system with
/// energy `1/2 ||etatilde||^2` and auxiliary input `v`.
pub fn tracking_prefeedback(
    model: &MechanicalModel,
    trajectory: &DesiredTrajectory,
    q: &DVector<f64>,
    eta: &DVector<f64>,
    t: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    let t_mat = model.cholesky_factor(q)?;
    let d = model.transformed_damping(q, eta)?;
    let g = t_mat.transpose() * model.input_map0(q)?;
    let (eta_d, deta_d_dq) = desired_momentum(model, trajectory, q, t)?;
    let qddot_d = trajectory.acceleration(t);
    let feedforward_acc = t_mat
        .solve_lower_triangular(&qddot_d)
        .ok_or(ControlError::SingularSystem { what: "factor T" })?;
    let rhs = &d * eta_d + deta_d_dq * (&t_mat * eta) + feedforward_acc + v;
    solve(&g, &rhs, "input map G")
}

/// Full tracking law: forms the error state `(qtilde, etatilde)`, applies the
/// sliding-mode shaping
/// `v = -Lambdatilde grad U + D etatilde - (dphi/detatilde)^{-1} (dphi/dqtilde) T etatilde`
/// (with `T` at the plant configuration and the Jacobians at the error state),
/// and routes it through [`tracking_prefeedback`].
pub fn tracking_pbsmc(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    trajectory: &DesiredTrajectory,
    q: &DVector<f64>,
    eta: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, ControlError> {
    let t_mat = model.cholesky_factor(q)?;
    let d = model.transformed_damping(q, eta)?;
    let (eta_d, _) = desired_momentum(model, trajectory, q, t)?;
    let q_err = q - trajectory.position(t);
    let eta_err = eta - &eta_d;
    map.validate_at(&q_err, &eta_err)?;
    let jq = map.jacobian_q(&q_err, &eta_err);
    let je = map.jacobian_eta(&q_err, &eta_err);
    let lambda = map.lambda_with_factor(&t_mat, &q_err, &eta_err);
    let grad = potential.gradient(&map.sigma(&q_err, &eta_err));
    let kin = solve(&je, &(&jq * (&t_mat * &eta_err)), "dphi/detatilde")?;
    let v = -(&lambda * grad) + &d * &eta_err - kin;
    tracking_prefeedback(model, trajectory, q, eta, t, &v)
}

/// Upper bound `a^2 U0^{1 - 2 rho} / (eps c^2)` on the time the sliding
/// variable needs to reach zero from potential level `U0`, given the
/// certified margin `eps`, gradient constants `(c, rho)`, and sub-sliding
/// gain estimate `a >= 1`.
pub fn reaching_time_bound(
    u0: f64,
    eps: f64,
    c: f64,
    rho: f64,
    a: f64,
) -> Result<f64, ControlError> {
    if !(u0 >= 0.0) {
        return Err(ControlError::ParameterOutOfRange { what: "u0", value: u0 });
    }
    if !(eps > 0.0) {
        return Err(ControlError::ParameterOutOfRange { what: "eps", value: eps });
    }
    if !(c > 0.0) {
        return Err(ControlError::ParameterOutOfRange { what: "c", value: c });
    }
    if !(0.0..0.5).contains(&rho) {
        return Err(ControlError::ParameterOutOfRange { what: "rho", value: rho });
    }
    if !(a >= 1.0) {
        return Err(ControlError::ParameterOutOfRange { what: "a", value: a });
    }
    Ok(a * a * u0.powf(1.0 - 2.0 * rho) / (eps * c * c))
}

/// Reference vector field of the energy-shaped closed loop: integrates the
/// same motion the plant performs under [`kpes_feedback`], written directly
/// in `(q, eta)`.
pub fn kpes_closed_loop(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    damping_d: &DampingInjection,
    q: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ControlError> {
    let t = model.cholesky_factor(q)?;
    let jq = map.jacobian_q(q, eta);
    let je = map.jacobian_eta(q, eta);
    let dd = damping_d.eval(q, eta, model.dof())?;
    let grad = potential.gradient(&map.sigma(q, eta));
    let qdot = &t * eta;
    let etadot = -(t.transpose() * (jq.transpose() * &grad)) - dd * (eta + je.transpose() * &grad);
    Ok((qdot, etadot))
}

/// Reference vector field of the sliding-mode closed loop (stabilization).
pub fn stabilize_closed_loop(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    q: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ControlError> {
    let t = model.cholesky_factor(q)?;
    closed_loop_shaped(&t, map, potential, q, eta)
}

/// Reference vector field of the tracking-error closed loop; the state is
/// `(qtilde, etatilde)` and `T` is evaluated at the reconstructed plant
/// configuration `q = qtilde + q_d(t)`.
pub fn tracking_closed_loop(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    trajectory: &DesiredTrajectory,
    q_err: &DVector<f64>,
    eta_err: &DVector<f64>,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>), ControlError> {
    let q = q_err + trajectory.position(t);
    let t_mat = model.cholesky_factor(&q)?;
    closed_loop_shaped(&t_mat, map, potential, q_err, eta_err)
}

/// Shared structure of the sliding-mode closed loops:
/// `qdot = T eta`,
/// `etadot = -T^T (dphi/dq)^T grad U
///           - (dphi/deta)^{-1} (dphi/dq) T (eta + (dphi/deta)^T grad U)`.
fn closed_loop_shaped(
    t: &DMatrix<f64>,
    map: &SlidingMap,
    potential: &Potential,
    q: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ControlError> {
    let jq = map.jacobian_q(q, eta);
    let je = map.jacobian_eta(q, eta);
    let grad = potential.gradient(&map.sigma(q, eta));
    let qdot = t * eta;
    let grad_eta_h = eta + je.transpose() * &grad;
    let mixing = solve_mat(&je, &(&jq * t), "dphi/deta")?;
    let etadot = -(t.transpose() * (jq.transpose() * &grad)) - mixing * grad_eta_h;
    Ok((qdot, etadot))
}

/// Which feedback law a controller realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    Kpes,
    PbsmcStabilize,
    PbsmcTrack,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::Kpes => "kpes",
            ControllerMode::PbsmcStabilize => "pbsmc_stabilize",
            ControllerMode::PbsmcTrack => "pbsmc_track",
        }
    }
}

/// A fully parameterized feedback law closing over its plant model, sliding
/// map, potential, and (for tracking) reference trajectory.
#[derive(Clone, Debug)]
pub struct Controller {
    model: Arc<MechanicalModel>,
    map: SlidingMap,
    potential: Potential,
    mode: ControllerMode,
    damping_d: Option<DampingInjection>,
    trajectory: Option<DesiredTrajectory>,
}

impl Controller {
    pub fn kpes(
        model: Arc<MechanicalModel>,
        map: SlidingMap,
        potential: Potential,
        damping_d: DampingInjection,
    ) -> Self {
        Self {
            model,
            map,
            potential,
            mode: ControllerMode::Kpes,
            damping_d: Some(damping_d),
            trajectory: None,
        }
    }

    pub fn pbsmc_stabilize(model: Arc<MechanicalModel>, map: SlidingMap, potential: Potential) -> Self {
        Self {
            model,
            map,
            potential,
            mode: ControllerMode::PbsmcStabilize,
            damping_d: None,
            trajectory: None,
        }
    }

    pub fn pbsmc_track(
        model: Arc<MechanicalModel>,
        map: SlidingMap,
        potential: Potential,
        trajectory: DesiredTrajectory,
    ) -> Self {
        Self {
            model,
            map,
            potential,
            mode: ControllerMode::PbsmcTrack,
            damping_d: None,
            trajectory: Some(trajectory),
        }
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn model(&self) -> &Arc<MechanicalModel> {
        &self.model
    }

    pub fn map(&self) -> &SlidingMap {
        &self.map
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn damping_d(&self) -> Option<&DampingInjection> {
        self.damping_d.as_ref()
    }

    pub fn trajectory(&self) -> Option<&DesiredTrajectory> {
        self.trajectory.as_ref()
    }

    /// The input applied at `(q, eta)` and time `t`.
    pub fn feedback(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>, ControlError> {
        match self.mode {
            ControllerMode::Kpes => kpes_feedback(
                &self.model,
                &self.map,
                &self.potential,
                self.damping_d.as_ref().expect("kpes carries damping"),
                q,
                eta,
            ),
            ControllerMode::PbsmcStabilize => {
                pbsmc_feedback(&self.model, &self.map, &self.potential, q, eta)
            }
            ControllerMode::PbsmcTrack => tracking_pbsmc(
                &self.model,
                &self.map,
                &self.potential,
                self.trajectory.as_ref().expect("track carries trajectory"),
                q,
                eta,
                t,
            ),
        }
    }

    /// The coordinates the shaped energy lives in: `(q, eta)` for
    /// stabilization and energy shaping, `(qtilde, etatilde)` for tracking.
    pub fn shaped_coordinates(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
        t: f64,
    ) -> Result<(DVector<f64>, DVector<f64>), ControlError> {
        match self.mode {
            ControllerMode::PbsmcTrack => {
                let traj = self.trajectory.as_ref().expect("track carries trajectory");
                let (eta_d, _) = desired_momentum(&self.model, traj, q, t)?;
                Ok((q - traj.position(t), eta - eta_d))
            }
            _ => Ok((q.clone(), eta.clone())),
        }
    }

    /// The sliding variable in the controller's own coordinates.
    pub fn sliding_variable(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>, ControlError> {
        let (qs, es) = self.shaped_coordinates(q, eta, t)?;
        Ok(self.map.sigma(&qs, &es))
    }

    /// The shaped total energy `1/2 ||eta||^2 + U(sigma)` (error coordinates
    /// in tracking mode); the Lyapunov function of the closed loop.
    pub fn storage(&self, q: &DVector<f64>, eta: &DVector<f64>, t: f64) -> Result<f64, ControlError> {
        let (_, es) = self.shaped_coordinates(q, eta, t)?;
        let sigma = self.sliding_variable(q, eta, t)?;
        Ok(0.5 * es.norm_squared() + self.potential.value(&sigma))
    }

    /// Advisory warnings about assumption mismatches (not hard errors).
    pub fn advisory_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.mode == ControllerMode::Kpes && !self.potential.is_smooth() {
            warnings.push(String::from(
                "energy-shaping mode paired with a non-smooth potential: asymptotic-stability \
                 argument assumes a smooth U, proceeding anyway",
            ));
        }
        warnings
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn scalar_model() -> Arc<MechanicalModel> {
        Arc::new(MechanicalModel::new(
            1,
            Box::new(|_q| DMatrix::identity(1, 1)),
            Box::new(|_q, _p| DMatrix::zeros(1, 1)),
            Box::new(|_q| DMatrix::identity(1, 1)),
        ))
    }

    fn scalar_map() -> SlidingMap {
        SlidingMap::linear(DMatrix::identity(1, 1), DMatrix::identity(1, 1))
    }

    #[test]
    fn kpes_zero_at_equilibrium() {
        let model = scalar_model();
        let pot = Potential::norm_power(1.0, 1.9, 2.0).unwrap();
        let u = kpes_feedback(
            &model,
            &scalar_map(),
            &pot,
            &DampingInjection::ScaledIdentity(1.0),
            &dvector![0.0],
            &dvector![0.0],
        )
        .unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn kpes_scalar_hand_value() {
        // Scalar plant M = 1, D0 = 0, G0 = 1, phi = q + eta, D_d = 1,
        // U = sigma^2/2: u = -eta - 2 sigma, so u(1, 0) = -2.
        let model = scalar_model();
        let pot = Potential::custom(
            Arc::new(|s: &DVector<f64>| 0.5 * s.norm_squared()),
            Arc::new(|s: &DVector<f64>| s.clone()),
        );
        let u = kpes_feedback(
            &model,
            &scalar_map(),
            &pot,
            &DampingInjection::ScaledIdentity(1.0),
            &dvector![1.0],
            &dvector![0.0],
        )
        .unwrap();
        assert_relative_eq!(u[0], -2.0, max_relative = 1e-14);
    }

    #[test]
    fn pbsmc_zero_at_origin() {
        let model = scalar_model();
        let pot = Potential::norm_power(2.0, 1.0, 1.0).unwrap();
        let u = pbsmc_feedback(&model, &scalar_map(), &pot, &dvector![0.0], &dvector![0.0]).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn pbsmc_scalar_hand_value() {
        // Lambda = 2, U = 2|sigma|: u = -2 * 2 sgn(sigma) - eta; u(1, 0) = -4.
        let model = scalar_model();
        let pot = Potential::norm_power(2.0, 1.0, 1.0).unwrap();
        let u = pbsmc_feedback(&model, &scalar_map(), &pot, &dvector![1.0], &dvector![0.0]).unwrap();
        assert_relative_eq!(u[0], -4.0, max_relative = 1e-14);
    }

    #[test]
    fn desired_momentum_zero_velocity() {
        let model = scalar_model();
        let traj = DesiredTrajectory::constant(dvector![0.7]);
        let (eta_d, jac) = desired_momentum(&model, &traj, &dvector![0.1], 2.0).unwrap();
        assert_eq!(eta_d[0], 0.0);
        assert_eq!(jac[(0, 0)], 0.0);
    }

    #[test]
    fn desired_momentum_constant_inertia_has_zero_jacobian() {
        let model = Arc::new(MechanicalModel::new(
            2,
            Box::new(|_q| DMatrix::from_diagonal(&dvector![4.0, 1.0])),
            Box::new(|_q, _p| DMatrix::zeros(2, 2)),
            Box::new(|_q| DMatrix::identity(2, 2)),
        ));
        let traj = DesiredTrajectory::new(
            Arc::new(|t| dvector![t, -t]),
            Arc::new(|_t| dvector![1.0, -1.0]),
            Arc::new(|_t| dvector![0.0, 0.0]),
        );
        let (eta_d, jac) = desired_momentum(&model, &traj, &dvector![0.3, -0.2], 1.0).unwrap();
        // T = diag(1/2, 1), so eta_d = T^{-1} qdot_d = (2, -1)
        assert_relative_eq!(eta_d, dvector![2.0, -1.0], max_relative = 1e-12);
        assert!(jac.amax() < 1e-9);
    }

    #[test]
    fn prefeedback_reduces_to_plain_inverse_input_for_regulation() {
        // qdot_d = qddot_d = 0 and eta_d = 0 leave u = G^{-1} v.
        let model = scalar_model();
        let traj = DesiredTrajectory::constant(dvector![0.0]);
        let v = dvector![0.37];
        let u = tracking_prefeedback(&model, &traj, &dvector![0.4], &dvector![0.0], 0.0, &v).unwrap();
        assert_relative_eq!(u[0], 0.37, max_relative = 1e-14);
    }

    #[test]
    fn reaching_time_bound_values() {
        assert_eq!(reaching_time_bound(0.0, 1.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            reaching_time_bound(8.0, 2.0, 2.0, 0.0, 1.0).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        assert!(reaching_time_bound(1.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(reaching_time_bound(1.0, 1.0, 1.0, 0.5, 1.0).is_err());
        assert!(reaching_time_bound(1.0, 1.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn damping_injection_must_be_positive() {
        let bad = DampingInjection::ScaledIdentity(-0.1);
        let err = bad.eval(&dvector![0.0], &dvector![0.0], 1).unwrap_err();
        match err {
            ControlError::DampingInjectionNotPositive { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_consistency_validation() {
        let good = DesiredTrajectory::new(
            Arc::new(|t: f64| dvector![t.sin()]),
            Arc::new(|t: f64| dvector![t.cos()]),
            Arc::new(|t: f64| dvector![-t.sin()]),
        );
        good.validate_consistency(0.0, 6.0, 25, 1e-5).unwrap();

        let bad = DesiredTrajectory::new(
            Arc::new(|t: f64| dvector![t.sin()]),
            Arc::new(|t: f64| dvector![2.0 * t.cos()]),
            Arc::new(|t: f64| dvector![-t.sin()]),
        );
        assert!(bad.validate_consistency(0.0, 6.0, 25, 1e-5).is_err());
    }

    #[test]
    fn kpes_advisory_warning_for_kinked_potential() {
        let model = scalar_model();
        let ctl = Controller::kpes(
            model,
            scalar_map(),
            Potential::norm_power(2.0, 1.0, 1.0).unwrap(),
            DampingInjection::ScaledIdentity(1.0),
        );
        assert_eq!(ctl.advisory_warnings().len(), 1);
    }
}
