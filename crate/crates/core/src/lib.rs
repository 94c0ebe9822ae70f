//! Semiclassical coherent-state propagation with complex classical trajectories.
//!
//! Complex trajectories are integrated as real trajectories of a doubled
//! phase space `(Q1, Q2, P1, P2)`, launched from initial conditions that are
//! labelled by a companion phase-space point `(q1, p1)`. The resulting
//! ensemble is assembled into a Gaussian-smoothed (or delta-filtered)
//! coherent-state propagator `K(z_f*, z0, T)`, with trajectories whose
//! exponent has a large positive real part discarded.
//!
//! All internal quantities use scaled units `b = hbar = 1`; see
//! [`domain::UnitScaling`] for conversion at the boundary.
//!
//! Module map:
//!
//! * [`domain`] value types and coherent-state label algebra
//! * [`hamiltonian`] the quartic Hamiltonian, its analytic continuation and derivatives
//! * [`trajectory`] the doubled-phase-space integrator with tangent, action and phase tracking
//! * [`propagator`] smooth and sudden propagator assembly, cutoff filter, contribution maps
//! * [`reconstruct`] position-space wavefunctions, overlaps and fidelities
//! * [`oracle`] exact harmonic propagator and split-operator reference solver
//! * [`io`] CSV writers for the data products

pub mod domain;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod oracle;
pub mod propagator;
pub mod reconstruct;
pub mod trajectory;

pub use num_complex::Complex64;

pub use domain::{CoherentLabel, ComplexPhasePoint, DoublePhasePoint, UnitScaling};
pub use error::{CivrError, Result};
pub use hamiltonian::{QuarticSpec, ScaledHamiltonian};
pub use propagator::{CivrParams, FilterMode, LabelGrid, PropagatorGrid, Quadrature, TrajectoryEnsemble};
pub use reconstruct::{WavefunctionGrid, XGrid};
pub use trajectory::{LaunchParams, StepControl, TrajectoryRecord};
