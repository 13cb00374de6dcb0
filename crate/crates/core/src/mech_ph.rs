//! Mechanical port-Hamiltonian plants and the momentum transformation.
//!
//! A fully-actuated mechanical system is described by
//!
//! ```text
//! qdot =  dH0/dp,        pdot = -dH0/dq - D0(q,p) dH0/dp + G0(q) u,
//! H0(q,p) = 1/2 p^T M(q)^{-1} p,
//! ```
//!
//! with symmetric positive-definite inertia `M(q)`, positive semi-definite
//! damping `D0(q,p)` and full-rank input map `G0(q)`. The change of momentum
//! coordinates `eta = T(q)^T p`, where `T(q) T(q)^T = M(q)^{-1}`, turns the
//! kinetic energy into the flat `H(eta) = 1/2 ||eta||^2` and the dynamics into
//!
//! ```text
//! qdot = T(q) eta,       etadot = -D(q,eta) eta + G(q) u,
//! ```
//!
//! with `G = T^T G0` and `D(q,eta) = T^T D0 T + (A^T - A)` splitting into a
//! damping part and a workless gyroscopic part; `A` collects the Coriolis-type
//! terms from `etadot = Tdot^T p + T^T pdot`.

use alloc::{boxed::Box, vec::Vec};
use core::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

/// Map `q -> M(q)`.
pub type InertiaFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
/// Map `(q, p) -> D0(q, p)`.
pub type DampingFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
/// Map `q -> G0(q)`.
pub type InputMapFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
/// Map `q -> [dM/dq_1, ..., dM/dq_m]`.
pub type InertiaGradientFn = dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync;

/// Tolerance below which the symmetric part of `D0` may dip without being
/// reported as indefinite; absorbs roundoff in user-supplied matrices.
pub const DAMPING_PSD_SLACK: f64 = 1e-10;

/// Condition number above which `G0(q)` is treated as singular.
pub const INPUT_MAP_MAX_CONDITION: f64 = 1e12;

/// Errors raised while evaluating a model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// A vector or matrix has the wrong size for this model.
    DimensionMismatch { expected: usize, got: usize },
    /// `M(q)` is not symmetric.
    InertiaNotSymmetric { max_asymmetry: f64 },
    /// `M(q)` failed the positive-definiteness check.
    InertiaNotPositiveDefinite { min_eigenvalue: f64 },
    /// `D0 + D0^T` has an eigenvalue below the allowed slack.
    DampingIndefinite { min_eigenvalue: f64 },
    /// `G0(q)` is rank deficient or too ill-conditioned to invert.
    SingularInputMap { condition: f64 },
    /// A finite-difference step underflowed to zero.
    FdStepUnderflow { step: f64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            ModelError::InertiaNotSymmetric { max_asymmetry } => {
                write!(f, "inertia matrix is not symmetric (max |M - M^T| = {max_asymmetry:e})")
            }
            ModelError::InertiaNotPositiveDefinite { min_eigenvalue } => {
                write!(f, "inertia matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            ModelError::DampingIndefinite { min_eigenvalue } => {
                write!(f, "damping matrix has negative symmetric part (min eigenvalue {min_eigenvalue:e})")
            }
            ModelError::SingularInputMap { condition } => {
                write!(f, "input map is singular or ill-conditioned (cond = {condition:e})")
            }
            ModelError::FdStepUnderflow { step } => {
                write!(f, "finite-difference step underflow (step = {step:e})")
            }
        }
    }
}

impl core::error::Error for ModelError {}

/// Plant description. Immutable after construction; all evaluation methods are
/// pure functions of their arguments and safe to call from multiple threads.
pub struct MechanicalModel {
    dof: usize,
    inertia: Box<InertiaFn>,
    damping0: Box<DampingFn>,
    input_map0: Box<InputMapFn>,
    d_inertia: Option<Box<InertiaGradientFn>>,
    fd_step: f64,
}

impl MechanicalModel {
    /// Builds a model from its defining maps. Derivatives of `M` default to
    /// central finite differences; see [`MechanicalModel::with_inertia_gradient`].
    pub fn new(
        dof: usize,
        inertia: Box<InertiaFn>,
        damping0: Box<DampingFn>,
        input_map0: Box<InputMapFn>,
    ) -> Self {
        Self {
            dof,
            inertia,
            damping0,
            input_map0,
            d_inertia: None,
            fd_step: 1e-6,
        }
    }

    /// Registers analytic derivatives `dM/dq_k`, replacing finite differences.
    pub fn with_inertia_gradient(mut self, d_inertia: Box<InertiaGradientFn>) -> Self {
        self.d_inertia = Some(d_inertia);
        self
    }

    /// Overrides the finite-difference step scale (default `1e-6`); the actual
    /// step for coordinate `k` is `fd_step * max(1, |q_k|)`.
    pub fn with_fd_step(mut self, fd_step: f64) -> Self {
        self.fd_step = fd_step;
        self
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn has_inertia_gradient(&self) -> bool {
        self.d_inertia.is_some()
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<(), ModelError> {
        if v.len() == self.dof {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch {
                expected: self.dof,
                got: v.len(),
            })
        }
    }

    /// Evaluates `M(q)` and validates symmetry. Positive definiteness is
    /// checked wherever a factorization is taken.
    pub fn inertia(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_dim(q)?;
        let m = (self.inertia)(q);
        let mut max_asym = 0.0f64;
        for i in 0..self.dof {
            for j in (i + 1)..self.dof {
                max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        let scale = m.amax().max(1.0);
        if max_asym > 1e-9 * scale {
            return Err(ModelError::InertiaNotSymmetric {
                max_asymmetry: max_asym,
            });
        }
        Ok(m)
    }

    /// Evaluates `D0(q, p)` and validates that its symmetric part is positive
    /// semi-definite up to [`DAMPING_PSD_SLACK`].
    pub fn damping0(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_dim(q)?;
        self.check_dim(p)?;
        let d = (self.damping0)(q, p);
        let sym = (&d + d.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < -DAMPING_PSD_SLACK {
            return Err(ModelError::DampingIndefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(d)
    }

    /// Evaluates `G0(q)` and validates invertibility through the condition
    /// number of its singular values.
    pub fn input_map0(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_dim(q)?;
        let g = (self.input_map0)(q);
        let sv = g.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !cond.is_finite() || cond > INPUT_MAP_MAX_CONDITION {
            return Err(ModelError::SingularInputMap { condition: cond });
        }
        Ok(g)
    }

    fn inertia_cholesky(&self, q: &DVector<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>, ModelError> {
        let m = self.inertia(q)?;
        Cholesky::new(m.clone()).ok_or_else(|| ModelError::InertiaNotPositiveDefinite {
            min_eigenvalue: m.symmetric_eigenvalues().min(),
        })
    }

    /// Kinetic energy `H0(q, p) = 1/2 p^T M(q)^{-1} p`.
    pub fn hamiltonian0(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64, ModelError> {
        self.check_dim(p)?;
        let chol = self.inertia_cholesky(q)?;
        Ok(0.5 * p.dot(&chol.solve(p)))
    }

    /// Lower-triangular factor `T(q)` with positive diagonal satisfying
    /// `T T^T = M(q)^{-1}`: the Cholesky factor of the inverse inertia. Fixing
    /// this convention makes every downstream quantity reproducible; any other
    /// `T' = T Q` with orthogonal `Q` satisfies the identity equally well.
    pub fn cholesky_factor(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        let chol = self.inertia_cholesky(q)?;
        let m_inv = chol.inverse();
        let chol_inv =
            Cholesky::new(m_inv.clone()).ok_or_else(|| ModelError::InertiaNotPositiveDefinite {
                min_eigenvalue: m_inv.symmetric_eigenvalues().min(),
            })?;
        Ok(chol_inv.l())
    }

    /// Partial derivatives `dT/dq_k` of the momentum factor.
    ///
    /// With analytic inertia derivatives the factor is differentiated through
    /// the identity `d(T T^T)/dq_k = d(M^{-1})/dq_k`: writing
    /// `S_k = T^{-1} dM^{-1}/dq_k T^{-T}`, the unique lower-triangular solution
    /// is `dT/dq_k = T lowerhalf(S_k)` where `lowerhalf` keeps the strict lower
    /// triangle and halves the diagonal. Otherwise central finite differences
    /// of [`MechanicalModel::cholesky_factor`] with per-coordinate scaled steps.
    pub fn d_cholesky(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>, ModelError> {
        self.check_dim(q)?;
        let m = self.dof;
        if let Some(d_inertia) = &self.d_inertia {
            let t = self.cholesky_factor(q)?;
            let chol = self.inertia_cholesky(q)?;
            let dm = d_inertia(q);
            let mut out = Vec::with_capacity(m);
            for dm_k in dm.iter() {
                // dM^{-1}/dq_k = -M^{-1} dM/dq_k M^{-1}
                let minv_dm = chol.solve(dm_k);
                let dminv = -chol.solve(&minv_dm.transpose()).transpose();
                // S = T^{-1} dM^{-1} T^{-T}
                let a = t
                    .solve_lower_triangular(&dminv)
                    .ok_or(ModelError::InertiaNotPositiveDefinite {
                        min_eigenvalue: 0.0,
                    })?;
                let s = t
                    .solve_lower_triangular(&a.transpose())
                    .ok_or(ModelError::InertiaNotPositiveDefinite {
                        min_eigenvalue: 0.0,
                    })?
                    .transpose();
                let mut phi = DMatrix::zeros(m, m);
                for i in 0..m {
                    for j in 0..i {
                        phi[(i, j)] = s[(i, j)];
                    }
                    phi[(i, i)] = 0.5 * s[(i, i)];
                }
                out.push(&t * phi);
            }
            Ok(out)
        } else {
            let mut out = Vec::with_capacity(m);
            for k in 0..m {
                let h = self.fd_step * q[k].abs().max(1.0);
                if h == 0.0 || q[k] + h == q[k] {
                    return Err(ModelError::FdStepUnderflow { step: h });
                }
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                let tp = self.cholesky_factor(&qp)?;
                let tm = self.cholesky_factor(&qm)?;
                out.push((tp - tm) / (2.0 * h));
            }
            Ok(out)
        }
    }

    /// Transformed momentum `eta = T(q)^T p`.
    pub fn eta_from_momentum(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_dim(p)?;
        let t = self.cholesky_factor(q)?;
        Ok(t.transpose() * p)
    }

    /// Original momentum `p = T(q)^{-T} eta`.
    pub fn momentum_from_eta(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_dim(eta)?;
        let t = self.cholesky_factor(q)?;
        t.transpose()
            .solve_upper_triangular(eta)
            .ok_or(ModelError::InertiaNotPositiveDefinite {
                min_eigenvalue: 0.0,
            })
    }

    /// The workless (exactly skew) part `A^T - A` of the transformed damping,
    /// with `A = sum_k (dT/dq_k)^T T^{-T} eta e_k^T T` collecting the
    /// Coriolis-type terms of `etadot = Tdot^T p + T^T pdot`.
    pub fn gyroscopic_matrix(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
    ) -> Result<DMatrix<f64>, ModelError> {
        self.check_dim(eta)?;
        let m = self.dof;
        let t = self.cholesky_factor(q)?;
        let dt = self.d_cholesky(q)?;
        let p = t
            .transpose()
            .solve_upper_triangular(eta)
            .ok_or(ModelError::InertiaNotPositiveDefinite {
                min_eigenvalue: 0.0,
            })?;
        let mut a = DMatrix::zeros(m, m);
        for k in 0..m {
            let col = dt[k].transpose() * &p;
            let row = t.row(k);
            // A += col * row
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] += col[i] * row[j];
                }
            }
        }
        Ok(a.transpose() - &a)
    }

    /// The matrix `D(q, eta)` of the transformed dynamics
    /// `etadot = -D(q,eta) eta + G(q) u`, split by construction into the
    /// damping part `T^T D0 T` and the gyroscopic part `A^T - A`. The
    /// gyroscopic part is exactly skew, so `D + D^T = 2 T^T D0 T` stays
    /// positive semi-definite.
    pub fn transformed_damping(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
    ) -> Result<DMatrix<f64>, ModelError> {
        let t = self.cholesky_factor(q)?;
        let p = t
            .transpose()
            .solve_upper_triangular(eta)
            .ok_or(ModelError::InertiaNotPositiveDefinite {
                min_eigenvalue: 0.0,
            })?;
        let d0 = self.damping0(q, &p)?;
        let gyro = self.gyroscopic_matrix(q, eta)?;
        Ok(t.transpose() * d0 * &t + gyro)
    }

    /// Gradient of the kinetic energy with respect to configuration,
    /// `dH0/dq`, through analytic inertia derivatives when available
    /// (`-1/2 (M^{-1}p)^T dM/dq_k (M^{-1}p)` per coordinate) and central
    /// finite differences of `H0` otherwise.
    pub fn grad_q_hamiltonian0(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_dim(q)?;
        self.check_dim(p)?;
        let m = self.dof;
        if let Some(d_inertia) = &self.d_inertia {
            let chol = self.inertia_cholesky(q)?;
            let v = chol.solve(p); // M^{-1} p
            let dm = d_inertia(q);
            Ok(DVector::from_fn(m, |k, _| -0.5 * v.dot(&(&dm[k] * &v))))
        } else {
            let mut g = DVector::zeros(m);
            for k in 0..m {
                let h = self.fd_step * q[k].abs().max(1.0);
                if h == 0.0 || q[k] + h == q[k] {
                    return Err(ModelError::FdStepUnderflow { step: h });
                }
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                g[k] = (self.hamiltonian0(&qp, p)? - self.hamiltonian0(&qm, p)?) / (2.0 * h);
            }
            Ok(g)
        }
    }

    /// Plant vector field: `qdot = M^{-1} p`,
    /// `pdot = -dH0/dq - D0 M^{-1} p + G0 u`.
    pub fn plant_dynamics(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
        self.check_dim(u)?;
        let chol = self.inertia_cholesky(q)?;
        let qdot = chol.solve(p);
        let grad_q = self.grad_q_hamiltonian0(q, p)?;
        let d0 = self.damping0(q, p)?;
        let g0 = self.input_map0(q)?;
        let pdot = -grad_q - d0 * &qdot + g0 * u;
        Ok((qdot, pdot))
    }

    /// Transformed input map `G(q) = T(q)^T G0(q)`.
    pub fn input_map(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        let t = self.cholesky_factor(q)?;
        let g0 = self.input_map0(q)?;
        Ok(t.transpose() * g0)
    }

    /// Transformed vector field: `qdot = T eta`,
    /// `etadot = -D(q,eta) eta + G(q) u`. Agrees with
    /// [`MechanicalModel::plant_dynamics`] mapped through `eta = T^T p`.
    pub fn transformed_dynamics(
        &self,
        q: &DVector<f64>,
        eta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
        self.check_dim(u)?;
        let t = self.cholesky_factor(q)?;
        let d = self.transformed_damping(q, eta)?;
        let g = t.transpose() * self.input_map0(q)?;
        let qdot = &t * eta;
        let etadot = -d * eta + g * u;
        Ok((qdot, etadot))
    }
}

impl fmt::Debug for MechanicalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MechanicalModel")
            .field("dof", &self.dof)
            .field("analytic_d_inertia", &self.d_inertia.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

/// State in transformed coordinates `(q, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub q: DVector<f64>,
    pub eta: DVector<f64>,
}

impl TransformedState {
    /// Maps a plant state `(q, p)` through `eta = T(q)^T p`.
    pub fn from_plant(
        model: &MechanicalModel,
        q: &DVector<f64>,
        p: &DVector<f64>,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            q: q.clone(),
            eta: model.eta_from_momentum(q, p)?,
        })
    }

    /// Recovers the original momentum `p = T(q)^{-T} eta`.
    pub fn momentum(&self, model: &MechanicalModel) -> Result<DVector<f64>, ModelError> {
        model.momentum_from_eta(&self.q, &self.eta)
    }
}
