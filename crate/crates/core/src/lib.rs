//! Ionization of a two-center point-interaction system under a periodic
//! perturbation of one of the centers.
//!
//! The wave function is reduced to two charges `q1(t)`, `q2(t)` that solve a
//! pair of Volterra equations. This crate solves them in the time domain and,
//! after a Laplace transform, as an infinite linear system over the Fourier
//! harmonics of the driving.

pub mod acceptance;
pub mod alpha;
pub mod asymptotics;
pub mod dynamics;
pub mod model;
pub mod moments;
pub mod propagator;
pub mod special;
pub mod spectral;
pub mod volterra;

pub use acceptance::{AcceptanceOptions, Outcome};
pub use alpha::{AlphaError, AlphaProfile, GenericityReport, Shift};
pub use asymptotics::{AsymptoticsError, BridgeReport, DecayFit, FitMethod};
pub use dynamics::{BallQuadrature, DynamicsError, IonizationSeries, SurvivalSeries, WavefunctionEvaluator};
pub use model::{BoundState, ComplexPoint, Coupling, ModelError, ModelParams, Normalization};
pub use propagator::PropagatorError;
pub use special::C64;
pub use spectral::{BranchFit, LimitAtI, PoleLocation, SpectralError, SpectralSolution};
pub use volterra::{
    ChargeTrajectory, GaussianPacket, InitialState, SolverOptions, StartupGrid, TimeGrid, VolterraError,
};
