//! Passivity-based sliding mode control (PBSMC) for fully-actuated mechanical
//! port-Hamiltonian systems.
//!
//! The crate builds controllers in three steps:
//!
//! 1. [`mech_ph`] describes the plant `(q, p)` dynamics and the momentum
//!    transformation `eta = T(q)^T p` with `T T^T = M^{-1}`, under which the
//!    kinetic energy becomes configuration-independent.
//! 2. [`sliding`] and [`potentials`] supply the free parameters of the design:
//!    a sliding map `sigma = phi(q, eta)` and a positive-definite potential
//!    `U(sigma)` whose gradient drives the sliding variable to zero.
//! 3. [`controllers`] synthesizes the feedback laws (kinetic-potential energy
//!    shaping, sliding-mode stabilization, trajectory tracking), [`robustness`]
//!    quantifies disturbance margins and convergence sets, and [`sim`]
//!    integrates closed loops and records traces.
//!
//! [`bench_arm`] provides a two-link planar manipulator with analytic inertia
//! and factor matrices, a circular end-effector reference, and the canonical
//! demonstration scenarios.
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the default
//! `std` feature for embedded use. All types are immutable values after
//! construction and every operation is a pure function of its arguments, so
//! everything here is safe to share across threads.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench_arm;
pub mod controllers;
pub mod mech_ph;
pub mod potentials;
pub mod robustness;
pub mod sampling;
pub mod sim;
pub mod sliding;

pub use controllers::{Controller, ControllerMode, DampingInjection, DesiredTrajectory};
pub use mech_ph::{MechanicalModel, ModelError, TransformedState};
pub use potentials::{Assumption2Constants, Potential, PotentialError};
pub use robustness::DisturbanceProfile;
pub use sim::{Integrator, Metrics, Scenario, Trace};
pub use sliding::{SampleBox, SlidingMap, UniformPdCertificate};
