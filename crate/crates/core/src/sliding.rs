//! Sliding variables, their Jacobians, and uniform positive-definiteness
//! certification.
//!
//! A sliding map `sigma = phi(q, eta)` together with the momentum factor
//! `T(q)` induces the symmetric matrix
//!
//! ```text
//! Lambda = (dphi/dq) T (dphi/deta)^T + (dphi/deta) T^T (dphi/dq)^T,
//! ```
//!
//! whose uniform positive definiteness (`Lambda > eps I` over the operating
//! region) is what turns the gradient flow `sigmadot = -Lambda grad U` into a
//! finite-time reaching law. Certification here is by deterministic sampling
//! over a box; the returned `eps` is an estimate tagged as such in reports,
//! not a global proof.

use alloc::{sync::Arc, vec::Vec};
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::mech_ph::{MechanicalModel, ModelError};
use crate::sampling::sample_box;

/// Map `q -> psi(q)`.
pub type PsiFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
/// Map `q -> dpsi/dq`.
pub type PsiJacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
/// Map `(q, eta) -> phi(q, eta)`.
pub type PhiFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
/// Map `(q, eta) -> Jacobian`.
pub type PhiJacobianFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Condition number beyond which a Jacobian counts as singular.
pub const JACOBIAN_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum SlidingError {
    /// A Jacobian of the sliding map is singular or too ill-conditioned.
    SingularJacobian { which: &'static str, condition: f64 },
    /// `Lambda` failed uniform positive definiteness; carries the witness
    /// point (stacked `(q, eta)`) and the offending eigenvalue.
    AssumptionViolated {
        lambda_min: f64,
        witness: Vec<f64>,
    },
    /// The operation requires the affine-in-momentum form `sigma = psi(q) + eta`.
    NotAffineInMomentum,
    /// Empty or inverted sampling box.
    InvalidBox,
    Model(ModelError),
}

impl fmt::Display for SlidingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlidingError::SingularJacobian { which, condition } => {
                write!(f, "sliding-map Jacobian {which} is singular (cond = {condition:e})")
            }
            SlidingError::AssumptionViolated { lambda_min, witness } => {
                write!(
                    f,
                    "Lambda is not uniformly positive definite: eigenvalue {lambda_min:e} at witness {witness:?}"
                )
            }
            SlidingError::NotAffineInMomentum => {
                write!(f, "operation requires a sliding map of the form sigma = psi(q) + eta")
            }
            SlidingError::InvalidBox => write!(f, "invalid certification box"),
            SlidingError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

impl core::error::Error for SlidingError {}

impl From<ModelError> for SlidingError {
    fn from(e: ModelError) -> Self {
        SlidingError::Model(e)
    }
}

/// The sliding map `sigma = phi(q, eta)` (or of error coordinates in
/// tracking). All variants satisfy `phi(0, 0) = 0`.
#[derive(Clone)]
pub enum SlidingMap {
    /// `sigma = Phi_q q + Phi_eta eta` with `Phi_eta` nonsingular.
    Linear {
        phi_q: DMatrix<f64>,
        phi_eta: DMatrix<f64>,
    },
    /// `sigma = psi(q) + eta` with `psi` a diffeomorphism, `psi(0) = 0`.
    AffineInEta {
        psi: Arc<PsiFn>,
        jac_psi: Arc<PsiJacobianFn>,
    },
    /// Fully general map with user-supplied Jacobians.
    Custom {
        phi: Arc<PhiFn>,
        jac_q: Arc<PhiJacobianFn>,
        jac_eta: Arc<PhiJacobianFn>,
    },
}

/// Result of sampling-based uniform positive-definiteness certification.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPdCertificate {
    /// Sampled infimum of the smallest eigenvalue of `Lambda`; the certified
    /// margin for reaching-time bounds.
    pub epsilon: f64,
    /// Stacked `(q, eta)` point attaining the sampled infimum.
    pub argmin: Vec<f64>,
    /// Number of points evaluated.
    pub samples: usize,
}

/// Axis-aligned sampling box over the stacked `(q, eta)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub bounds: Vec<(f64, f64)>,
}

impl SampleBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self { bounds }
    }

    /// Box with identical `q`- and `eta`-ranges in every coordinate.
    pub fn symmetric(dof: usize, q_range: f64, eta_range: f64) -> Self {
        let mut bounds = Vec::with_capacity(2 * dof);
        for _ in 0..dof {
            bounds.push((-q_range, q_range));
        }
        for _ in 0..dof {
            bounds.push((-eta_range, eta_range));
        }
        Self { bounds }
    }

    fn validate(&self, dof: usize) -> Result<(), SlidingError> {
        if self.bounds.len() != 2 * dof || self.bounds.iter().any(|(lo, hi)| hi < lo) {
            return Err(SlidingError::InvalidBox);
        }
        Ok(())
    }
}

impl SlidingMap {
    /// Linear map `sigma = Phi_q q + Phi_eta eta`.
    pub fn linear(phi_q: DMatrix<f64>, phi_eta: DMatrix<f64>) -> Self {
        SlidingMap::Linear { phi_q, phi_eta }
    }

    /// Affine form `sigma = Phi_q q + eta`, expressed as `psi(q) = Phi_q q`.
    pub fn affine_linear(phi_q: DMatrix<f64>) -> Self {
        let jac = phi_q.clone();
        SlidingMap::AffineInEta {
            psi: Arc::new(move |q| &phi_q * q),
            jac_psi: Arc::new(move |_q| jac.clone()),
        }
    }

    /// The sliding variable `sigma = phi(q, eta)`.
    pub fn sigma(&self, q: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        match self {
            SlidingMap::Linear { phi_q, phi_eta } => phi_q * q + phi_eta * eta,
            SlidingMap::AffineInEta { psi, .. } => psi(q) + eta,
            SlidingMap::Custom { phi, .. } => phi(q, eta),
        }
    }

    /// `dphi/dq` at `(q, eta)`.
    pub fn jacobian_q(&self, q: &DVector<f64>, eta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            SlidingMap::Linear { phi_q, .. } => phi_q.clone(),
            SlidingMap::AffineInEta { jac_psi, .. } => jac_psi(q),
            SlidingMap::Custom { jac_q, .. } => jac_q(q, eta),
        }
    }

    /// `dphi/deta` at `(q, eta)`.
    pub fn jacobian_eta(&self, q: &DVector<f64>, eta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            SlidingMap::Linear { phi_eta, .. } => phi_eta.clone(),
            SlidingMap::AffineInEta { .. } => DMatrix::identity(q.len(), q.len()),
            SlidingMap::Custom { jac_eta, .. } => jac_eta(q, eta),
        }
    }

    /// `psi(q)` and its Jacobian when the map has the affine-in-momentum form
    /// (either the `AffineInEta` variant or a `Linear` map with identity
    /// `Phi_eta`).
    pub fn as_affine(&self, q: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), SlidingError> {
        match self {
            SlidingMap::AffineInEta { psi, jac_psi } => Ok((psi(q), jac_psi(q))),
            SlidingMap::Linear { phi_q, phi_eta } => {
                let m = phi_eta.nrows();
                if *phi_eta == DMatrix::identity(m, m) {
                    Ok((phi_q * q, phi_q.clone()))
                } else {
                    Err(SlidingError::NotAffineInMomentum)
                }
            }
            SlidingMap::Custom { .. } => Err(SlidingError::NotAffineInMomentum),
        }
    }

    fn check_nonsingular(m: &DMatrix<f64>, which: &'static str) -> Result<(), SlidingError> {
        let sv = m.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !cond.is_finite() || cond > JACOBIAN_MAX_CONDITION {
            return Err(SlidingError::SingularJacobian { which, condition: cond });
        }
        Ok(())
    }

    /// Validates both Jacobians at a point.
    pub fn validate_at(&self, q: &DVector<f64>, eta: &DVector<f64>) -> Result<(), SlidingError> {
        Self::check_nonsingular(&self.jacobian_q(q, eta), "dphi/dq")?;
        Self::check_nonsingular(&self.jacobian_eta(q, eta), "dphi/deta")
    }

    /// `Lambda` with a caller-supplied factor `T`. The Jacobians are taken at
    /// `(q, eta)`; in tracking these are error coordinates while `T` is
    /// evaluated at the plant configuration.
    pub fn lambda_with_factor(
        &self,
        t: &DMatrix<f64>,
        q: &DVector<f64>,
        eta: &DVector<f64>,
    ) -> DMatrix<f64> {
        let jq = self.jacobian_q(q, eta);
        let je = self.jacobian_eta(q, eta);
        let half = &jq * t * je.transpose();
        let lambda = &half + half.transpose();
        // symmetrize to kill roundoff
        (&lambda + lambda.transpose()) * 0.5
    }

    /// `Lambda(q, eta)` with `T` evaluated at the same configuration.
    pub fn lambda_matrix(
        &self,
        model: &MechanicalModel,
        q: &DVector<f64>,
        eta: &DVector<f64>,
    ) -> Result<DMatrix<f64>, SlidingError> {
        self.validate_at(q, eta)?;
        let t = model.cholesky_factor(q)?;
        Ok(self.lambda_with_factor(&t, q, eta))
    }

    /// Samples `lambda_min(Lambda)` over the box and returns the infimum as
    /// the certified margin; a nonpositive infimum is an assumption violation
    /// reported with its witness point.
    pub fn certify_uniform_pd(
        &self,
        model: &MechanicalModel,
        bounds: &SampleBox,
        n_samples: usize,
    ) -> Result<UniformPdCertificate, SlidingError> {
        let dof = model.dof();
        bounds.validate(dof)?;
        let points = sample_box(&bounds.bounds, n_samples.max(1));
        let mut epsilon = f64::INFINITY;
        let mut argmin = Vec::new();
        for point in &points {
            let q = DVector::from_fn(dof, |i, _| point[i]);
            let eta = DVector::from_fn(dof, |i, _| point[dof + i]);
            let lambda = self.lambda_matrix(model, &q, &eta)?;
            let lmin = lambda.symmetric_eigenvalues().min();
            if lmin < epsilon {
                epsilon = lmin;
                argmin = point.iter().copied().collect();
            }
        }
        if epsilon <= 0.0 {
            return Err(SlidingError::AssumptionViolated {
                lambda_min: epsilon,
                witness: argmin,
            });
        }
        Ok(UniformPdCertificate {
            epsilon,
            argmin,
            samples: points.len(),
        })
    }

    /// Reporting-only estimate of the sub-sliding gain `a`: the largest
    /// spectral norm of `[-Lambda_SS^{-1} Lambda_S,rest; I]` over sampled
    /// points and over every proper nonempty coordinate subset `S` (the
    /// components already in sliding mode), clamped below by 1. Feeds the
    /// reaching-time bound; not used in control.
    pub fn estimate_subsliding_gain(
        &self,
        model: &MechanicalModel,
        bounds: &SampleBox,
        n_samples: usize,
    ) -> Result<f64, SlidingError> {
        let dof = model.dof();
        bounds.validate(dof)?;
        if dof > 16 {
            // subset enumeration is exponential; cap to keep this a cheap report
            return Ok(1.0);
        }
        let points = sample_box(&bounds.bounds, n_samples.max(1));
        let mut a_max = 1.0f64;
        for point in &points {
            let q = DVector::from_fn(dof, |i, _| point[i]);
            let eta = DVector::from_fn(dof, |i, _| point[dof + i]);
            let lambda = self.lambda_matrix(model, &q, &eta)?;
            for mask in 1..((1usize << dof) - 1) {
                let (sm, rm): (Vec<usize>, Vec<usize>) =
                    (0..dof).partition(|i| mask & (1 << i) != 0);
                let k = sm.len();
                let n_rm = rm.len();
                let l11 = DMatrix::from_fn(k, k, |i, j| lambda[(sm[i], sm[j])]);
                let l12 = DMatrix::from_fn(k, n_rm, |i, j| lambda[(sm[i], rm[j])]);
                let Some(inv11) = l11.try_inverse() else {
                    continue;
                };
                let top = -inv11 * l12;
                let mut stacked = DMatrix::zeros(k + n_rm, n_rm);
                stacked.view_mut((0, 0), (k, n_rm)).copy_from(&top);
                stacked
                    .view_mut((k, 0), (n_rm, n_rm))
                    .copy_from(&DMatrix::identity(n_rm, n_rm));
                let norm = stacked.svd(false, false).singular_values.max();
                if norm > a_max {
                    a_max = norm;
                }
            }
        }
        Ok(a_max)
    }
}

impl fmt::Debug for SlidingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlidingMap::Linear { phi_q, phi_eta } => f
                .debug_struct("SlidingMap::Linear")
                .field("phi_q", phi_q)
                .field("phi_eta", phi_eta)
                .finish(),
            SlidingMap::AffineInEta { .. } => f.debug_struct("SlidingMap::AffineInEta").finish(),
            SlidingMap::Custom { .. } => f.debug_struct("SlidingMap::Custom").finish(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench_arm::{analytic_tracking_lambda, arm_model, paper_sliding_matrix, ArmParams};
    use alloc::vec;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_model() -> MechanicalModel {
        MechanicalModel::new(
            1,
            alloc::boxed::Box::new(|_q| DMatrix::identity(1, 1)),
            alloc::boxed::Box::new(|_q, _p| DMatrix::zeros(1, 1)),
            alloc::boxed::Box::new(|_q| DMatrix::identity(1, 1)),
        )
    }

    #[test]
    fn sigma_linear_examples() {
        let map = SlidingMap::linear(dmatrix![2.0, 0.0; 2.0, 2.0], DMatrix::identity(2, 2));
        assert_eq!(
            map.sigma(&dvector![0.0, 0.0], &dvector![0.0, 0.0]),
            dvector![0.0, 0.0]
        );
        assert_eq!(
            map.sigma(&dvector![1.0, 0.0], &dvector![0.0, 1.0]),
            dvector![2.0, 3.0]
        );
    }

    #[test]
    fn sigma_affine_on_surface() {
        let map = SlidingMap::affine_linear(DMatrix::identity(2, 2));
        let s = map.sigma(&dvector![1.0, 2.0], &dvector![-1.0, -2.0]);
        assert_eq!(s, dvector![0.0, 0.0]);
    }

    #[test]
    fn lambda_scalar_system() {
        let model = scalar_model();
        let map = SlidingMap::linear(DMatrix::identity(1, 1), DMatrix::identity(1, 1));
        let l = map
            .lambda_matrix(&model, &dvector![0.3], &dvector![-0.1])
            .unwrap();
        assert_relative_eq!(l[(0, 0)], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn lambda_matches_arm_closed_form() {
        // Dual path: the analytic expression assembled from the closed-form
        // factor entries against the generic Jacobian/T product.
        let params = ArmParams::default();
        let model = arm_model(params);
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let mut state: u64 = 3;
        for _ in 0..20 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let q2 = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0 * core::f64::consts::PI;
            let q = dvector![0.7, q2];
            let eta = dvector![0.0, 0.0];
            let lambda = map.lambda_matrix(&model, &q, &eta).unwrap();
            let closed = analytic_tracking_lambda(params, &q);
            assert!(
                (&lambda - &closed).amax() < 1e-10,
                "q2={q2}: {lambda} vs {closed}"
            );
        }
    }

    #[test]
    fn lambda_arm_at_right_angle() {
        // cos q2 = 0 makes the closed form diagonal: diag(2 sqrt 3, 4 sqrt 3).
        let model = arm_model(ArmParams::default());
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let lambda = map
            .lambda_matrix(
                &model,
                &dvector![0.0, core::f64::consts::FRAC_PI_2],
                &dvector![0.0, 0.0],
            )
            .unwrap();
        let s3 = 3.0f64.sqrt();
        assert_relative_eq!(lambda[(0, 0)], 2.0 * s3, max_relative = 1e-13);
        assert_relative_eq!(lambda[(1, 1)], 4.0 * s3, max_relative = 1e-13);
        assert!(lambda[(0, 1)].abs() < 1e-13);
    }

    #[test]
    fn lambda_is_symmetric_to_machine_precision() {
        let model = arm_model(ArmParams::default());
        let map = SlidingMap::linear(dmatrix![2.0, 0.1; -0.3, 2.0], dmatrix![1.0, 0.2; 0.0, 1.0]);
        let lambda = map
            .lambda_matrix(&model, &dvector![0.4, -0.9], &dvector![0.1, 0.2])
            .unwrap();
        assert_eq!(lambda[(0, 1)], lambda[(1, 0)]);
    }

    #[test]
    fn linear_jacobians_match_finite_differences_of_sigma() {
        let phi_q = dmatrix![2.0, 0.0; 2.0, 2.0];
        let phi_eta = dmatrix![1.0, 0.5; 0.0, 1.0];
        let map = SlidingMap::linear(phi_q.clone(), phi_eta.clone());
        let q = dvector![0.3, -0.4];
        let eta = dvector![0.8, 0.1];
        let h = 1e-6;
        for j in 0..2 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += h;
            qm[j] -= h;
            let col = (map.sigma(&qp, &eta) - map.sigma(&qm, &eta)) / (2.0 * h);
            for i in 0..2 {
                assert_relative_eq!(col[i], phi_q[(i, j)], epsilon = 1e-8);
            }
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[j] += h;
            em[j] -= h;
            let col = (map.sigma(&q, &ep) - map.sigma(&q, &em)) / (2.0 * h);
            for i in 0..2 {
                assert_relative_eq!(col[i], phi_eta[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn certify_arm_over_full_revolution() {
        // The smallest eigenvalue of the closed-form Lambda is attained at
        // cos^2 q2 = 1; the exact extremum is
        // (2 sqrt(3)/sqrt(7)) (2 + sqrt(7) - 2 sqrt(5 - sqrt(7))).
        let params = ArmParams::default();
        let model = arm_model(params);
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let bounds = SampleBox::new(vec![
            (-core::f64::consts::PI, core::f64::consts::PI),
            (-core::f64::consts::PI, core::f64::consts::PI),
            (-2.0, 2.0),
            (-2.0, 2.0),
        ]);
        let cert = map.certify_uniform_pd(&model, &bounds, 4096).unwrap();
        let s7 = 7.0f64.sqrt();
        let exact = (2.0 * 3.0f64.sqrt() / s7) * (2.0 + s7 - 2.0 * (5.0 - s7).sqrt());
        assert_relative_eq!(cert.epsilon, exact, max_relative = 1e-10);
        assert!(cert.samples >= 4096);
    }

    #[test]
    fn certify_constant_lambda_is_exact() {
        let model = scalar_model();
        let map = SlidingMap::linear(DMatrix::identity(1, 1) * 2.0, DMatrix::identity(1, 1));
        let bounds = SampleBox::symmetric(1, 1.0, 1.0);
        let cert = map.certify_uniform_pd(&model, &bounds, 64).unwrap();
        assert_relative_eq!(cert.epsilon, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn certify_reports_witness_for_indefinite_lambda() {
        // Phi_q = -I on M = I with Phi_eta = I gives Lambda = -2I.
        let model = scalar_model();
        let map = SlidingMap::linear(-DMatrix::identity(1, 1), DMatrix::identity(1, 1));
        let bounds = SampleBox::symmetric(1, 1.0, 1.0);
        match map.certify_uniform_pd(&model, &bounds, 32) {
            Err(SlidingError::AssumptionViolated { lambda_min, witness }) => {
                assert_relative_eq!(lambda_min, -2.0, max_relative = 1e-14);
                assert_eq!(witness.len(), 2);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let model = scalar_model();
        let map = SlidingMap::linear(DMatrix::identity(1, 1), DMatrix::zeros(1, 1));
        let err = map
            .lambda_matrix(&model, &dvector![0.0], &dvector![0.0])
            .unwrap_err();
        match err {
            SlidingError::SingularJacobian { which, .. } => assert_eq!(which, "dphi/deta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subsliding_gain_on_arm_is_modest() {
        let model = arm_model(ArmParams::default());
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let bounds = SampleBox::symmetric(2, core::f64::consts::PI, 2.0);
        let a = map.estimate_subsliding_gain(&model, &bounds, 512).unwrap();
        // ||[-L11^{-1} L12; 1]|| = sqrt(1 + (L12/L11)^2) <= sqrt(1 + (3/4)^2)
        assert!(a >= 1.0);
        assert!(a <= (1.0 + 0.75f64 * 0.75).sqrt() + 1e-9, "a = {a}");
    }
}
