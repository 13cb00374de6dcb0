//! Disturbance injection and convergence-set analysis.
//!
//! For the affine sliding form `sigma = psi(q) + eta` the closed loop admits
//! quantitative robustness statements against a disturbance pair
//! `(d_um, d_m)` entering the kinematic and momentum rows respectively:
//!
//! * the state converges to the set `B1` where
//!   `||(grad U, grad U + eta)||^2 <= gamma1(q) ||d||^2`;
//! * if the margin of [`condition36_margin`] stays positive, sliding still
//!   occurs in finite time and on the surface the state converges to `B2`
//!   where `||eta||^2 <= gamma2(q) ||d_um||^2`.
//!
//! Set membership is reported as signed residuals rather than booleans so
//! traces can plot distance-to-set over time.

use alloc::{sync::Arc, vec::Vec};
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::controllers::TimeFn;
use crate::mech_ph::{MechanicalModel, ModelError};
use crate::potentials::Potential;
use crate::sliding::{SlidingError, SlidingMap};

#[derive(Debug, Clone, PartialEq)]
pub enum RobustnessError {
    Model(ModelError),
    Sliding(SlidingError),
    /// `Lambda(q)` is not positive definite at the evaluation point.
    LambdaNotPositive { lambda_min: f64 },
    /// A disturbance sample exceeded its declared bound.
    BoundExceeded { t: f64, norm: f64, bound: f64 },
}

impl fmt::Display for RobustnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobustnessError::Model(e) => write!(f, "{e}"),
            RobustnessError::Sliding(e) => write!(f, "{e}"),
            RobustnessError::LambdaNotPositive { lambda_min } => {
                write!(f, "Lambda not positive definite (min eigenvalue {lambda_min:e})")
            }
            RobustnessError::BoundExceeded { t, norm, bound } => {
                write!(f, "disturbance exceeds its declared bound at t = {t}: {norm} > {bound}")
            }
        }
    }
}

impl core::error::Error for RobustnessError {}

impl From<ModelError> for RobustnessError {
    fn from(e: ModelError) -> Self {
        RobustnessError::Model(e)
    }
}

impl From<SlidingError> for RobustnessError {
    fn from(e: SlidingError) -> Self {
        RobustnessError::Sliding(e)
    }
}

/// Time-dependent disturbance pair with declared sup-norm bounds. The
/// unmatched part enters the `qdot` row, the matched part the `pdot` row.
#[derive(Clone)]
pub struct DisturbanceProfile {
    unmatched: Arc<TimeFn>,
    matched: Arc<TimeFn>,
    pub bound_unmatched: f64,
    pub bound_matched: f64,
}

impl DisturbanceProfile {
    pub fn new(
        unmatched: Arc<TimeFn>,
        matched: Arc<TimeFn>,
        bound_unmatched: f64,
        bound_matched: f64,
    ) -> Self {
        Self {
            unmatched,
            matched,
            bound_unmatched,
            bound_matched,
        }
    }

    /// No disturbance.
    pub fn none(dof: usize) -> Self {
        Self {
            unmatched: Arc::new(move |_t| DVector::zeros(dof)),
            matched: Arc::new(move |_t| DVector::zeros(dof)),
            bound_unmatched: 0.0,
            bound_matched: 0.0,
        }
    }

    /// Constant disturbance vectors.
    pub fn constant(d_um: DVector<f64>, d_m: DVector<f64>) -> Self {
        let bu = d_um.norm();
        let bm = d_m.norm();
        Self {
            unmatched: Arc::new(move |_t| d_um.clone()),
            matched: Arc::new(move |_t| d_m.clone()),
            bound_unmatched: bu,
            bound_matched: bm,
        }
    }

    /// Per-component sinusoids `amp_i sin(omega t + phase_i)` for each
    /// channel. A quarter-period phase shift between two components of equal
    /// amplitude keeps the Euclidean norm constant.
    pub fn sinusoid(
        amp_um: DVector<f64>,
        omega_um: f64,
        phase_um: DVector<f64>,
        amp_m: DVector<f64>,
        omega_m: f64,
        phase_m: DVector<f64>,
    ) -> Self {
        let bu = amp_um.norm();
        let bm = amp_m.norm();
        let m_um = amp_um.len();
        let m_m = amp_m.len();
        Self {
            unmatched: Arc::new(move |t| {
                DVector::from_fn(m_um, |i, _| amp_um[i] * (omega_um * t + phase_um[i]).sin())
            }),
            matched: Arc::new(move |t| {
                DVector::from_fn(m_m, |i, _| amp_m[i] * (omega_m * t + phase_m[i]).sin())
            }),
            bound_unmatched: bu,
            bound_matched: bm,
        }
    }

    /// Piecewise-linear interpolation of tabulated rows `(t, d_um, d_m)`,
    /// clamped to the end values outside the table.
    pub fn table(rows: Vec<(f64, DVector<f64>, DVector<f64>)>) -> Self {
        let bu = rows.iter().map(|r| r.1.norm()).fold(0.0, f64::max);
        let bm = rows.iter().map(|r| r.2.norm()).fold(0.0, f64::max);
        let rows_um: Vec<(f64, DVector<f64>)> =
            rows.iter().map(|(t, um, _)| (*t, um.clone())).collect();
        let rows_m: Vec<(f64, DVector<f64>)> = rows.into_iter().map(|(t, _, m)| (t, m)).collect();
        Self {
            unmatched: Arc::new(move |t| interp_table(&rows_um, t)),
            matched: Arc::new(move |t| interp_table(&rows_m, t)),
            bound_unmatched: bu,
            bound_matched: bm,
        }
    }

    pub fn unmatched(&self, t: f64) -> DVector<f64> {
        (self.unmatched)(t)
    }

    pub fn matched(&self, t: f64) -> DVector<f64> {
        (self.matched)(t)
    }

    /// Checks the declared bounds at a sample time (small absolute slack for
    /// interpolation roundoff).
    pub fn validate_sample(&self, t: f64) -> Result<(), RobustnessError> {
        let nu = self.unmatched(t).norm();
        if nu > self.bound_unmatched + 1e-9 {
            return Err(RobustnessError::BoundExceeded {
                t,
                norm: nu,
                bound: self.bound_unmatched,
            });
        }
        let nm = self.matched(t).norm();
        if nm > self.bound_matched + 1e-9 {
            return Err(RobustnessError::BoundExceeded {
                t,
                norm: nm,
                bound: self.bound_matched,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for DisturbanceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DisturbanceProfile")
            .field("bound_unmatched", &self.bound_unmatched)
            .field("bound_matched", &self.bound_matched)
            .finish()
    }
}

fn interp_table(rows: &[(f64, DVector<f64>)], t: f64) -> DVector<f64> {
    match rows {
        [] => DVector::zeros(0),
        [only] => only.1.clone(),
        _ => {
            if t <= rows[0].0 {
                return rows[0].1.clone();
            }
            if t >= rows[rows.len() - 1].0 {
                return rows[rows.len() - 1].1.clone();
            }
            let idx = rows.partition_point(|(ti, _)| *ti <= t);
            let (t0, v0) = &rows[idx - 1];
            let (t1, v1) = &rows[idx];
            if t1 == t0 {
                return v0.clone();
            }
            let w = (t - t0) / (t1 - t0);
            v0 * (1.0 - w) + v1 * w
        }
    }
}

/// Plant vector field with disturbances added to their respective rows:
/// `qdot = M^{-1} p + d_um`, `pdot = (plant) + d_m`.
pub fn disturbed_plant_dynamics(
    model: &MechanicalModel,
    q: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
    d_um: &DVector<f64>,
    d_m: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
    let (qdot, pdot) = model.plant_dynamics(q, p, u)?;
    Ok((qdot + d_um, pdot + d_m))
}

struct AffineLambda {
    jac_psi: DMatrix<f64>,
    t: DMatrix<f64>,
    lambda_min: f64,
}

fn affine_lambda(
    model: &MechanicalModel,
    map: &SlidingMap,
    q: &DVector<f64>,
) -> Result<AffineLambda, RobustnessError> {
    let (_, jac_psi) = map.as_affine(q)?;
    let t = model.cholesky_factor(q)?;
    let lambda = &jac_psi * &t + t.transpose() * jac_psi.transpose();
    let lambda_min = lambda.symmetric_eigenvalues().min();
    if lambda_min <= 0.0 {
        return Err(RobustnessError::LambdaNotPositive { lambda_min });
    }
    Ok(AffineLambda {
        jac_psi,
        t,
        lambda_min,
    })
}

/// `gamma1(q) = 4 max(lambda_max(J_psi J_psi^T), lambda_max(T^T T)) / lambda_min(Lambda)^2`:
/// the squared gain from the full disturbance to the `B1` residual.
pub fn gamma1(
    model: &MechanicalModel,
    map: &SlidingMap,
    q: &DVector<f64>,
) -> Result<f64, RobustnessError> {
    let al = affine_lambda(model, map, q)?;
    let lmax_psi = (&al.jac_psi * al.jac_psi.transpose())
        .symmetric_eigenvalues()
        .max();
    let lmax_t = (al.t.transpose() * &al.t).symmetric_eigenvalues().max();
    Ok(4.0 * lmax_psi.max(lmax_t) / (al.lambda_min * al.lambda_min))
}

/// `gamma2(q) = 4 lambda_max(J_psi J_psi^T) / lambda_min(Lambda)^2`: the gain
/// from the unmatched disturbance alone, active on the sliding surface.
/// Always `gamma2 <= gamma1`.
pub fn gamma2(
    model: &MechanicalModel,
    map: &SlidingMap,
    q: &DVector<f64>,
) -> Result<f64, RobustnessError> {
    let al = affine_lambda(model, map, q)?;
    let lmax_psi = (&al.jac_psi * al.jac_psi.transpose())
        .symmetric_eigenvalues()
        .max();
    Ok(4.0 * lmax_psi / (al.lambda_min * al.lambda_min))
}

/// Signed residual of the whole-state convergence set:
/// `||(grad U(sigma), grad U(sigma) + eta)||^2 - gamma1(q) (||d_um||^2 + ||d_m||^2)`
/// with `sigma = psi(q) + eta`. Nonpositive values lie inside the set.
pub fn b1_residual(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    q: &DVector<f64>,
    eta: &DVector<f64>,
    d_um: &DVector<f64>,
    d_m: &DVector<f64>,
) -> Result<f64, RobustnessError> {
    let (psi, _) = map.as_affine(q)?;
    let sigma = psi + eta;
    let grad = potential.gradient(&sigma);
    let lhs = grad.norm_squared() + (&grad + eta).norm_squared();
    let g1 = gamma1(model, map, q)?;
    Ok(lhs - g1 * (d_um.norm_squared() + d_m.norm_squared()))
}

/// Signed residual of the on-surface convergence set:
/// `||eta||^2 - gamma2(q) ||d_um||^2` when `||psi(q) + eta|| <= tol_sigma`,
/// `+inf` (off-surface sentinel) otherwise.
pub fn b2_residual(
    model: &MechanicalModel,
    map: &SlidingMap,
    q: &DVector<f64>,
    eta: &DVector<f64>,
    d_um: &DVector<f64>,
    tol_sigma: f64,
) -> Result<f64, RobustnessError> {
    let (psi, _) = map.as_affine(q)?;
    if (psi + eta).norm() > tol_sigma {
        return Ok(f64::INFINITY);
    }
    let g2 = gamma2(model, map, q)?;
    Ok(eta.norm_squared() - g2 * d_um.norm_squared())
}

/// Margin of the disturbed finite-time-reaching condition:
/// `lambda_min(Lambda) ||grad U(sigma)|| - ||J_psi d_um + T^T d_m||`.
/// A positive value means the sliding surface is still reached in finite time
/// despite the disturbance.
pub fn condition36_margin(
    model: &MechanicalModel,
    map: &SlidingMap,
    potential: &Potential,
    q: &DVector<f64>,
    eta: &DVector<f64>,
    d_um: &DVector<f64>,
    d_m: &DVector<f64>,
) -> Result<f64, RobustnessError> {
    let al = affine_lambda(model, map, q)?;
    let (psi, _) = map.as_affine(q)?;
    let sigma = psi + eta;
    let grad = potential.gradient(&sigma);
    let push = &al.jac_psi * d_um + al.t.transpose() * d_m;
    Ok(al.lambda_min * grad.norm() - push.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench_arm::{arm_model, paper_sliding_matrix, ArmParams};
    use alloc::{boxed::Box, vec};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn scalar_model() -> MechanicalModel {
        MechanicalModel::new(
            1,
            Box::new(|_q| DMatrix::identity(1, 1)),
            Box::new(|_q, _p| DMatrix::zeros(1, 1)),
            Box::new(|_q| DMatrix::identity(1, 1)),
        )
    }

    #[test]
    fn disturbed_dynamics_reduces_to_plant_without_disturbance() {
        let model = arm_model(ArmParams::default());
        let q = dvector![0.3, -0.6];
        let p = dvector![0.2, 0.4];
        let u = dvector![0.1, -0.1];
        let zero = dvector![0.0, 0.0];
        let (q1, p1) = disturbed_plant_dynamics(&model, &q, &p, &u, &zero, &zero).unwrap();
        let (q2, p2) = model.plant_dynamics(&q, &p, &u).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn constant_matched_disturbance_at_equilibrium() {
        let model = arm_model(ArmParams::default());
        let q = dvector![0.0, 0.0];
        let zero = dvector![0.0, 0.0];
        let d_m = dvector![0.7, -0.4];
        let (qdot, pdot) = disturbed_plant_dynamics(&model, &q, &zero, &zero, &zero, &d_m).unwrap();
        assert_eq!(qdot, zero);
        assert_eq!(pdot, d_m);
    }

    #[test]
    fn transformed_disturbance_columns() {
        // Mapped through eta = T^T p, the matched part enters etadot as
        // T^T d_m and the unmatched part enters qdot unchanged.
        let model = arm_model(ArmParams::default());
        let q = dvector![0.5, 1.1];
        let p = dvector![0.2, -0.3];
        let u = dvector![0.0, 0.0];
        let d_um = dvector![0.05, -0.02];
        let d_m = dvector![0.3, 0.1];

        let t = model.cholesky_factor(&q).unwrap();
        let dt = model.d_cholesky(&q).unwrap();

        let (qdot_d, pdot_d) = disturbed_plant_dynamics(&model, &q, &p, &u, &d_um, &d_m).unwrap();
        let (qdot_0, pdot_0) = model.plant_dynamics(&q, &p, &u).unwrap();

        // etadot = Tdot^T p + T^T pdot, with Tdot depending on qdot
        let tdot_of = |qdot: &DVector<f64>| {
            let mut td = DMatrix::zeros(2, 2);
            for k in 0..2 {
                td += &dt[k] * qdot[k];
            }
            td
        };
        let etadot_d = tdot_of(&qdot_d).transpose() * &p + t.transpose() * &pdot_d;
        let etadot_0 = tdot_of(&qdot_0).transpose() * &p + t.transpose() * &pdot_0;

        // disturbance column in transformed coordinates:
        // (d_um, T^T d_m + (dTdot from d_um)^T p)
        let extra_gyro = tdot_of(&d_um).transpose() * &p;
        let expected = t.transpose() * &d_m + extra_gyro;
        assert!((qdot_d - qdot_0 - &d_um).amax() < 1e-12);
        assert!(((etadot_d - etadot_0) - expected).amax() < 1e-6);
    }

    #[test]
    fn gamma1_scalar_examples() {
        let model = scalar_model();
        let map = SlidingMap::affine_linear(DMatrix::identity(1, 1));
        let q = dvector![0.4];
        // Lambda = 2, both lambda_max terms 1: gamma1 = 4/4 = 1
        assert_relative_eq!(gamma1(&model, &map, &q).unwrap(), 1.0, max_relative = 1e-14);

        let map2 = SlidingMap::affine_linear(DMatrix::identity(1, 1) * 2.0);
        // Lambda = 4, max(4, 1) = 4: gamma1 = 16/16 = 1
        assert_relative_eq!(gamma1(&model, &map2, &q).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn gamma2_scalar_example_and_ordering() {
        let model = scalar_model();
        let map = SlidingMap::affine_linear(DMatrix::identity(1, 1));
        let q = dvector![0.0];
        assert_relative_eq!(gamma2(&model, &map, &q).unwrap(), 1.0, max_relative = 1e-14);

        // gamma2 <= gamma1 pointwise on the arm
        let model = arm_model(ArmParams::default());
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        for i in 0..20 {
            let q2 = -3.0 + 0.3 * i as f64;
            let q = dvector![0.4, q2];
            let g1 = gamma1(&model, &map, &q).unwrap();
            let g2 = gamma2(&model, &map, &q).unwrap();
            assert!(g2 <= g1 + 1e-12, "gamma2 {g2} > gamma1 {g1}");
            assert!(g1 >= 0.0 && g2 >= 0.0);
        }
    }

    #[test]
    fn b1_residual_origin_cases() {
        let model = scalar_model();
        let map = SlidingMap::affine_linear(DMatrix::identity(1, 1));
        let pot = Potential::l1_quadratic(1.0, 1.0).unwrap();
        let q = dvector![0.0];
        let eta = dvector![0.0];
        let zero = dvector![0.0];
        let r0 = b1_residual(&model, &map, &pot, &q, &eta, &zero, &zero).unwrap();
        assert_eq!(r0, 0.0);
        let r1 = b1_residual(&model, &map, &pot, &q, &eta, &zero, &dvector![0.5]).unwrap();
        assert!(r1 < 0.0);
    }

    #[test]
    fn b1_membership_matches_worked_scalar_form() {
        // U = (q + eta)^2 / 2 on the scalar plant: membership reduces to
        // (q + eta)^2 + (q + 2 eta)^2 <= gamma1 ||d||^2.
        let model = scalar_model();
        let map = SlidingMap::affine_linear(DMatrix::identity(1, 1));
        let pot = Potential::custom(
            Arc::new(|s: &DVector<f64>| 0.5 * s.norm_squared()),
            Arc::new(|s: &DVector<f64>| s.clone()),
        );
        let q = dvector![0.3];
        let eta = dvector![-0.1];
        let d_um = dvector![0.2];
        let d_m = dvector![0.1];
        let resid = b1_residual(&model, &map, &pot, &q, &eta, &d_um, &d_m).unwrap();
        let sigma = 0.3 - 0.1;
        let lhs = sigma * sigma + (sigma - 0.1) * (sigma - 0.1);
        let g1 = gamma1(&model, &map, &q).unwrap();
        let expected = lhs - g1 * (0.2 * 0.2 + 0.1 * 0.1);
        assert_relative_eq!(resid, expected, max_relative = 1e-13);
    }

    #[test]
    fn b2_residual_surface_and_sentinel() {
        let model = scalar_model();
        let map = SlidingMap::affine_linear(DMatrix::identity(1, 1));
        let on = b2_residual(&model, &map, &dvector![0.0], &dvector![0.0], &dvector![0.4], 1e-6)
            .unwrap();
        assert!(on <= 0.0);
        let off = b2_residual(&model, &map, &dvector![1.0], &dvector![0.5], &dvector![0.4], 1e-6)
            .unwrap();
        assert!(off.is_infinite());
    }

    #[test]
    fn margin_positive_without_disturbance_and_monotone_in_amplitude() {
        let model = arm_model(ArmParams::default());
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        let pot = Potential::norm_power(2.0, 1.0, 1.0).unwrap();
        let q = dvector![0.4, -0.2];
        let eta = dvector![0.3, 0.1];
        let zero = dvector![0.0, 0.0];
        let m0 = condition36_margin(&model, &map, &pot, &q, &eta, &zero, &zero).unwrap();
        assert!(m0 > 0.0);

        let mut last = m0;
        for scale in [0.5, 1.0, 2.0, 8.0] {
            let d_m = dvector![scale, -scale];
            let m = condition36_margin(&model, &map, &pot, &q, &eta, &zero, &d_m).unwrap();
            assert!(m < last);
            last = m;
        }
        assert!(last < 0.0, "large disturbance must defeat the margin");
    }

    #[test]
    fn margin_grows_linearly_with_potential_gain() {
        // With U = k ||sigma||_1 the gradient norm scales with k, so the
        // margin grows linearly in k at fixed disturbance.
        let model = arm_model(ArmParams::default());
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        let q = dvector![0.4, -0.2];
        let eta = dvector![0.3, 0.1];
        let d_um = dvector![0.0, 0.0];
        let d_m = dvector![0.5, 0.5];
        let margin_at = |k: f64| {
            let pot = Potential::norm_power(k, 1.0, 1.0).unwrap();
            condition36_margin(&model, &map, &pot, &q, &eta, &d_um, &d_m).unwrap()
        };
        let m1 = margin_at(1.0);
        let m2 = margin_at(2.0);
        let m4 = margin_at(4.0);
        assert_relative_eq!(m2 - m1, (m4 - m2) / 2.0, max_relative = 1e-10);
        assert!(m4 > m2 && m2 > m1);
    }

    #[test]
    fn non_affine_map_is_rejected() {
        let model = scalar_model();
        let map = SlidingMap::linear(DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 2.0);
        let err = gamma1(&model, &map, &dvector![0.0]).unwrap_err();
        match err {
            RobustnessError::Sliding(SlidingError::NotAffineInMomentum) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sinusoid_profile_respects_declared_bounds() {
        let prof = DisturbanceProfile::sinusoid(
            dvector![0.1, 0.1],
            3.0,
            dvector![0.0, core::f64::consts::FRAC_PI_2],
            dvector![0.3, 0.3],
            2.0,
            dvector![0.0, core::f64::consts::FRAC_PI_2],
        );
        for i in 0..200 {
            let t = 0.05 * i as f64;
            prof.validate_sample(t).unwrap();
        }
        // quarter-period shifted equal amplitudes: constant norm
        let n0 = prof.matched(0.0).norm();
        let n1 = prof.matched(1.234).norm();
        assert_relative_eq!(n0, n1, max_relative = 1e-12);
    }

    #[test]
    fn table_profile_interpolates_linearly() {
        let prof = DisturbanceProfile::table(vec![
            (0.0, dvector![0.0], dvector![1.0]),
            (1.0, dvector![1.0], dvector![3.0]),
        ]);
        assert_relative_eq!(prof.unmatched(0.5)[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(prof.matched(0.25)[0], 1.5, max_relative = 1e-15);
        assert_eq!(prof.matched(2.0)[0], 3.0);
        assert_eq!(prof.unmatched(-1.0)[0], 0.0);
    }
}
