//! Two-link planar manipulator benchmark.
//!
//! A horizontal (gravity-free) fully-actuated arm with lumped inertia
//! constants `M1 = m1 r1^2 + m2 l1^2 + J1`, `M2 = m2 r2^2 + J2`,
//! `M3 = m2 l1 r2`:
//!
//! ```text
//! M(q) = [ M1 + M2 + 2 M3 cos q2    M2 + M3 cos q2 ]
//!        [ M2 + M3 cos q2           M2             ]
//! ```
//!
//! viscous joint friction `D0 = diag(nu1, nu2)` and identity input map. The
//! momentum factor and the sliding-design matrix `Lambda` admit closed forms
//! in `cos q2`, which serve as independent oracles for the generic numeric
//! paths. The canonical scenarios track a circular end-effector reference and
//! exercise the disturbance analysis.

use alloc::{boxed::Box, sync::Arc, vec, vec::Vec};
use core::f64::consts::PI;
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::controllers::{Controller, DesiredTrajectory};
use crate::mech_ph::MechanicalModel;
use crate::potentials::Potential;
use crate::robustness::DisturbanceProfile;
use crate::sim::{CertificationRequest, Scenario};
use crate::sliding::{SampleBox, SlidingMap};

/// Physical parameters; defaults are unit links and masses with centered
/// mass, slender-rod inertia 1/12, and friction 1/2 on both joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub r1: f64,
    pub r2: f64,
    pub j1: f64,
    pub j2: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            m1: 1.0,
            m2: 1.0,
            r1: 0.5,
            r2: 0.5,
            j1: 1.0 / 12.0,
            j2: 1.0 / 12.0,
            nu1: 0.5,
            nu2: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryError {
    /// The reference leaves the reachable annulus `|l1 - l2| < r < l1 + l2`.
    Unreachable { t: f64, radius: f64 },
    /// Nonpositive physical parameter.
    InvalidParams { what: &'static str, value: f64 },
}

impl fmt::Display for TrajectoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajectoryError::Unreachable { t, radius } => {
                write!(f, "reference unreachable at t = {t} (radius {radius})")
            }
            TrajectoryError::InvalidParams { what, value } => {
                write!(f, "invalid arm parameter {what} = {value}")
            }
        }
    }
}

impl core::error::Error for TrajectoryError {}

impl ArmParams {
    /// Lumped inertia constants `(M1, M2, M3)`.
    pub fn lumped(&self) -> (f64, f64, f64) {
        (
            self.m1 * self.r1 * self.r1 + self.m2 * self.l1 * self.l1 + self.j1,
            self.m2 * self.r2 * self.r2 + self.j2,
            self.m2 * self.l1 * self.r2,
        )
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        for (what, value) in [
            ("l1", self.l1),
            ("l2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("r1", self.r1),
            ("r2", self.r2),
            ("j1", self.j1),
            ("j2", self.j2),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(TrajectoryError::InvalidParams { what, value });
            }
        }
        for (what, value) in [("nu1", self.nu1), ("nu2", self.nu2)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(TrajectoryError::InvalidParams { what, value });
            }
        }
        Ok(())
    }
}

/// Builds the arm as a [`MechanicalModel`] with analytic inertia derivatives
/// (the only configuration dependence is through `cos q2`).
pub fn arm_model(params: ArmParams) -> MechanicalModel {
    let (m1, m2, m3) = params.lumped();
    let inertia = move |q: &DVector<f64>| {
        let c = q[1].cos();
        DMatrix::from_row_slice(
            2,
            2,
            &[m1 + m2 + 2.0 * m3 * c, m2 + m3 * c, m2 + m3 * c, m2],
        )
    };
    let d_inertia = move |q: &DVector<f64>| {
        let s = q[1].sin();
        vec![
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[-2.0 * m3 * s, -m3 * s, -m3 * s, 0.0]),
        ]
    };
    let (nu1, nu2) = (params.nu1, params.nu2);
    MechanicalModel::new(
        2,
        Box::new(inertia),
        Box::new(move |_q, _p| DMatrix::from_row_slice(2, 2, &[nu1, 0.0, 0.0, nu2])),
        Box::new(|_q| DMatrix::identity(2, 2)),
    )
    .with_inertia_gradient(Box::new(d_inertia))
}

/// Closed-form momentum factor of the arm (lower triangular, positive
/// diagonal):
///
/// ```text
/// T = [  sqrt(M2)/sqrt(Delta)                    0           ]
///     [ -(M2 + M3 cos q2)/(sqrt(M2) sqrt(Delta)) 1/sqrt(M2)  ]
/// ```
///
/// with `Delta = M1 M2 - M3^2 cos^2 q2`. Used as the independent oracle for
/// the numeric factorization.
pub fn analytic_cholesky_factor(params: ArmParams, q: &DVector<f64>) -> DMatrix<f64> {
    let (m1, m2, m3) = params.lumped();
    let c = q[1].cos();
    let delta = m1 * m2 - m3 * m3 * c * c;
    let sd = delta.sqrt();
    let sm2 = m2.sqrt();
    DMatrix::from_row_slice(2, 2, &[sm2 / sd, 0.0, -(m2 + m3 * c) / (sm2 * sd), 1.0 / sm2])
}

/// The sliding-design matrix used throughout the benchmark scenarios.
pub fn paper_sliding_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 2.0, 2.0])
}

/// Closed-form `Lambda` of the arm under the benchmark sliding matrix
/// `Phi_q = [[2, 0], [2, 2]]`, `Phi_eta = I`, assembled directly from the
/// scalar factor entries:
///
/// ```text
/// Lambda = [ 4 sqrt(M2)/sqrt(Delta)      -2 M3 cos q2/(sqrt(M2) sqrt(Delta)) ]
///          [ (symmetric)                  4/sqrt(M2)                          ]
/// ```
///
/// The smallest eigenvalue over a full revolution is attained at
/// `cos^2 q2 = 1`.
pub fn analytic_tracking_lambda(params: ArmParams, q: &DVector<f64>) -> DMatrix<f64> {
    let (m1, m2, m3) = params.lumped();
    let c = q[1].cos();
    let delta = m1 * m2 - m3 * m3 * c * c;
    let sd = delta.sqrt();
    let sm2 = m2.sqrt();
    let l11 = 4.0 * sm2 / sd;
    let l12 = -2.0 * m3 * c / (sm2 * sd);
    let l22 = 4.0 / sm2;
    DMatrix::from_row_slice(2, 2, &[l11, l12, l12, l22])
}

/// Exact smallest eigenvalue of [`analytic_tracking_lambda`] over
/// `q2 in [-pi, pi]` for the default (unit) parameters:
/// `(2 sqrt(3)/sqrt(7)) (2 + sqrt(7) - 2 sqrt(5 - sqrt(7)))`.
pub fn default_lambda_min_extremum() -> f64 {
    let s7 = 7.0f64.sqrt();
    (2.0 * 3.0f64.sqrt() / s7) * (2.0 + s7 - 2.0 * (5.0 - s7).sqrt())
}

/// Planar forward kinematics of the end effector.
pub fn arm_forward_kinematics(params: ArmParams, q: &DVector<f64>) -> (f64, f64) {
    let x = params.l1 * q[0].cos() + params.l2 * (q[0] + q[1]).cos();
    let y = params.l1 * q[0].sin() + params.l2 * (q[0] + q[1]).sin();
    (x, y)
}

/// Elbow-down inverse kinematics:
/// `q2 = arccos((r^2 - l1^2 - l2^2)/(2 l1 l2))`,
/// `q1 = atan2(y, x) - arccos((l1^2 - l2^2 + r^2)/(2 l1 r))`.
/// The two-argument arctangent keeps the branch well-defined for `x <= 0`.
pub fn arm_inverse_kinematics(
    params: ArmParams,
    x: f64,
    y: f64,
) -> Result<DVector<f64>, TrajectoryError> {
    let (l1, l2) = (params.l1, params.l2);
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    let margin = 1e-9;
    if r <= (l1 - l2).abs() + margin || r >= l1 + l2 - margin {
        return Err(TrajectoryError::Unreachable { t: f64::NAN, radius: r });
    }
    let q2 = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).acos();
    let q1 = y.atan2(x) - ((l1 * l1 - l2 * l2 + r2) / (2.0 * l1 * r)).acos();
    Ok(DVector::from_vec(vec![q1, q2]))
}

fn jacobian(params: ArmParams, q: &DVector<f64>) -> DMatrix<f64> {
    let (l1, l2) = (params.l1, params.l2);
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    DMatrix::from_row_slice(
        2,
        2,
        &[-l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12],
    )
}

fn jacobian_dot(params: ArmParams, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
    let (l1, l2) = (params.l1, params.l2);
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    let w1 = qdot[0];
    let w12 = qdot[0] + qdot[1];
    DMatrix::from_row_slice(
        2,
        2,
        &[
            -l1 * c1 * w1 - l2 * c12 * w12,
            -l2 * c12 * w12,
            -l1 * s1 * w1 - l2 * s12 * w12,
            -l2 * s12 * w12,
        ],
    )
}

/// The benchmark reference: end-effector circle
/// `(x, y) = (1 + 0.5 cos t, 0.5 sin t)` mapped through inverse kinematics,
/// with joint-space derivatives from the manipulator Jacobian
/// (`qdot = J^{-1} xdot`, `qddot = J^{-1} (xddot - Jdot qdot)`).
/// Reachability over one period is validated at construction.
pub fn circle_trajectory(params: ArmParams) -> Result<DesiredTrajectory, TrajectoryError> {
    params.validate()?;
    for i in 0..=720 {
        let t = 2.0 * PI * i as f64 / 720.0;
        let (x, y) = circle_point(t);
        arm_inverse_kinematics(params, x, y)
            .map_err(|_| TrajectoryError::Unreachable {
                t,
                radius: (x * x + y * y).sqrt(),
            })?;
    }

    let q_of = move |t: f64| {
        let (x, y) = circle_point(t);
        arm_inverse_kinematics(params, x, y).expect("validated over one period")
    };
    let qdot_of = move |t: f64| {
        let q = q_of(t);
        let xdot = DVector::from_vec(vec![-0.5 * t.sin(), 0.5 * t.cos()]);
        jacobian(params, &q)
            .lu()
            .solve(&xdot)
            .expect("Jacobian nonsingular inside the annulus")
    };
    let qddot_of = move |t: f64| {
        let q = q_of(t);
        let qdot = qdot_of(t);
        let xddot = DVector::from_vec(vec![-0.5 * t.cos(), -0.5 * t.sin()]);
        let rhs = xddot - jacobian_dot(params, &q, &qdot) * &qdot;
        jacobian(params, &q)
            .lu()
            .solve(&rhs)
            .expect("Jacobian nonsingular inside the annulus")
    };

    Ok(DesiredTrajectory::new(
        Arc::new(q_of),
        Arc::new(qdot_of),
        Arc::new(qddot_of),
    ))
}

fn circle_point(t: f64) -> (f64, f64) {
    (1.0 + 0.5 * t.cos(), 0.5 * t.sin())
}

/// Certification box for the benchmark: one joint revolution and a moderate
/// momentum range (the design matrix depends on `q2` only).
pub fn paper_certification() -> CertificationRequest {
    CertificationRequest {
        bounds: SampleBox::new(vec![(-PI, PI), (-PI, PI), (-3.0, 3.0), (-3.0, 3.0)]),
        samples: 4096,
    }
}

/// The four canonical scenarios: circle tracking with the interpolating
/// (`r = 1.3`, `s = 2`) and pure switching (`r = 1`, `s = 1`) potentials from
/// rest at the origin, plus two disturbance-rejection runs with the same
/// design matrix in affine form (matched-only, and matched plus unmatched).
pub fn paper_scenarios(params: ArmParams) -> Result<Vec<Scenario>, TrajectoryError> {
    params.validate()?;
    let model = Arc::new(arm_model(params));
    let origin_q = DVector::zeros(2);
    let origin_p = DVector::zeros(2);

    let mut scenarios = Vec::with_capacity(4);
    for (name, potential) in [
        ("track_r13", Potential::norm_power(2.0, 1.3, 2.0).expect("valid")),
        ("track_r1", Potential::norm_power(2.0, 1.0, 1.0).expect("valid")),
    ] {
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let controller = Controller::pbsmc_track(
            Arc::clone(&model),
            map,
            potential,
            circle_trajectory(params)?,
        );
        let mut scn = Scenario::new(name, controller, origin_q.clone(), origin_p.clone(), 10.0);
        scn.certification = Some(paper_certification());
        scenarios.push(scn);
    }

    let quarter = PI / 2.0;
    // matched-only: circular matched disturbance of constant norm 0.3
    {
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        let potential = Potential::norm_power(2.0, 1.0, 1.0).expect("valid");
        let controller = Controller::pbsmc_stabilize(Arc::clone(&model), map, potential);
        let mut scn = Scenario::new(
            "robust_matched",
            controller,
            DVector::from_vec(vec![0.5, -0.3]),
            origin_p.clone(),
            10.0,
        );
        scn.disturbance = Some(DisturbanceProfile::sinusoid(
            DVector::zeros(2),
            0.0,
            DVector::zeros(2),
            DVector::from_vec(vec![0.3 / 2.0f64.sqrt(), 0.3 / 2.0f64.sqrt()]),
            2.0,
            DVector::from_vec(vec![0.0, quarter]),
        ));
        scn.certification = Some(paper_certification());
        scenarios.push(scn);
    }

    // matched + unmatched with the interpolating potential
    {
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        let potential = Potential::norm_power(2.0, 1.3, 2.0).expect("valid");
        let controller = Controller::pbsmc_stabilize(Arc::clone(&model), map, potential);
        let mut scn = Scenario::new(
            "robust_mixed",
            controller,
            DVector::from_vec(vec![0.5, -0.3]),
            origin_p,
            10.0,
        );
        scn.disturbance = Some(DisturbanceProfile::sinusoid(
            DVector::from_vec(vec![0.1 / 2.0f64.sqrt(), 0.1 / 2.0f64.sqrt()]),
            3.0,
            DVector::from_vec(vec![0.0, quarter]),
            DVector::from_vec(vec![0.4 / 2.0f64.sqrt(), 0.4 / 2.0f64.sqrt()]),
            2.0,
            DVector::from_vec(vec![0.0, quarter]),
        ));
        scn.certification = Some(paper_certification());
        scenarios.push(scn);
    }

    Ok(scenarios)
}
