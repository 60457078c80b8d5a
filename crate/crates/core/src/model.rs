//! Shared domain types and conventions.
//!
//! Units: `hbar = 1`, `H0 = -Laplacian` plus a point interaction at the origin
//! of strength `-1/(4 pi)`, free evolution `U0(t) = exp(i Laplacian t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alpha::{AlphaError, AlphaProfile};
use crate::special::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate separation: r must be positive and finite, got {0}")]
    DegenerateSeparation(f64),
    #[error("omega must be positive and finite, got {0}")]
    BadOmega(f64),
    #[error("alpha profile frequency {profile} differs from model frequency {model}")]
    FrequencyMismatch { profile: f64, model: f64 },
    #[error("invalid alpha profile: {0}")]
    Alpha(#[from] AlphaError),
}

/// Normalization constant `N` of the bound state `N e^{-|x|}/|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `N = 1/sqrt(2 pi)`, unit L2 norm.
    #[default]
    Unit,
    /// `N = 1/sqrt(4 pi)`, squared norm `1/2`.
    PaperLiteral,
}

impl Normalization {
    pub fn constant(self) -> f64 {
        match self {
            Normalization::Unit => 1.0 / (2.0 * PI).sqrt(),
            Normalization::PaperLiteral => 1.0 / (4.0 * PI).sqrt(),
        }
    }
}

/// Strength of the coupling between the two centers.
///
/// The boundary conditions fix the cross kernel to
/// `a e^{-3i pi/4} e^{i r^2/4s} / (r sqrt(pi s))` with `a = 1`. The printed
/// Laplace-domain operators correspond to `a = (2 pi)^{-3/2}`; both are
/// available so the printed formulas can be reproduced exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Physical,
    Printed,
}

impl Coupling {
    /// The prefactor `a` multiplying every cross term.
    pub fn factor(self) -> f64 {
        match self {
            Coupling::Physical => 1.0,
            Coupling::Printed => (2.0 * PI).powf(-1.5),
        }
    }
}

/// Tolerance for flagging `omega = 1/N`.
pub const RESONANCE_TOL: f64 = 1e-12;

/// Geometry and driving of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    r: f64,
    omega: f64,
    alpha: AlphaProfile,
    normalization: Normalization,
    coupling: Coupling,
}

impl ModelParams {
    /// Validated constructor; the frequency is taken from the profile.
    pub fn new(r: f64, alpha: AlphaProfile) -> Result<Self, ModelError> {
        Self::with_conventions(r, alpha, Normalization::Unit, Coupling::Physical)
    }

    pub fn with_conventions(
        r: f64,
        alpha: AlphaProfile,
        normalization: Normalization,
        coupling: Coupling,
    ) -> Result<Self, ModelError> {
        let p = ModelParams { r, omega: alpha.omega(), alpha, normalization, coupling };
        p.validate()
    }

    /// Check every invariant, returning the params unchanged on success.
    pub fn validate(self) -> Result<Self, ModelError> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(ModelError::DegenerateSeparation(self.r));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(ModelError::BadOmega(self.omega));
        }
        if self.alpha.omega() != self.omega {
            return Err(ModelError::FrequencyMismatch { profile: self.alpha.omega(), model: self.omega });
        }
        // Re-run the profile's own validation.
        AlphaProfile::new(self.omega, &self.alpha.pairs())?;
        Ok(self)
    }

    /// The default generic configuration: `r = 1`, `omega = 3`,
    /// `alpha(t) = 1 + cos(3t)/2`.
    pub fn default_generic() -> Self {
        let alpha = AlphaProfile::cosine(3.0, 1.0, 0.25).expect("valid default profile");
        ModelParams::new(1.0, alpha).expect("valid default params")
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
    pub fn alpha(&self) -> &AlphaProfile {
        &self.alpha
    }
    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
    pub fn coupling(&self) -> Coupling {
        self.coupling
    }
    pub fn bound_state(&self) -> BoundState {
        BoundState::new(self.normalization)
    }

    pub fn with_normalization(mut self, n: Normalization) -> Self {
        self.normalization = n;
        self
    }
    pub fn with_coupling(mut self, c: Coupling) -> Self {
        self.coupling = c;
        self
    }

    /// `Some(N)` when `omega = 1/N` for a positive integer `N`.
    pub fn resonance(&self) -> Option<u64> {
        let inv = 1.0 / self.omega;
        let n = inv.round();
        if n >= 1.0 && (inv - n).abs() < RESONANCE_TOL {
            Some(n as u64)
        } else {
            None
        }
    }
}

/// The bound state `N e^{-|x|}/|x|` of energy `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub constant: f64,
}

impl BoundState {
    pub fn new(n: Normalization) -> Self {
        BoundState { constant: n.constant() }
    }

    /// Value at distance `rho > 0` from the origin.
    pub fn value(&self, rho: f64) -> f64 {
        self.constant * (-rho).exp() / rho
    }

    /// Squared L2 norm, `2 pi N^2`.
    pub fn norm_sq(&self) -> f64 {
        2.0 * PI * self.constant * self.constant
    }

    /// Fourier transform `int e^{-ik.x} psi(x) dx = 4 pi N / (1 + k^2)`.
    pub fn fourier(&self, k: f64) -> f64 {
        4.0 * PI * self.constant / (1.0 + k * k)
    }

    /// `||1_{|x|<=R} psi||^2 = 2 pi N^2 (1 - e^{-2R})`.
    pub fn inside_probability(&self, radius: f64) -> f64 {
        self.norm_sq() * (1.0 - (-2.0 * radius).exp())
    }
}

/// A Laplace variable folded into the strip `0 <= Im p < omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    pub value: C64,
    pub n: i64,
    pub p0: C64,
}

impl ComplexPoint {
    /// `value = p0 + i omega n` with `p0` in the strip.
    pub fn decompose(value: C64, omega: f64) -> Self {
        let mut n = (value.im / omega).floor() as i64;
        let mut im0 = value.im - omega * n as f64;
        // Guard the strip bounds against roundoff.
        if im0 >= omega {
            n += 1;
            im0 = value.im - omega * n as f64;
        } else if im0 < 0.0 {
            n -= 1;
            im0 = value.im - omega * n as f64;
        }
        ComplexPoint { value, n, p0: C64::new(value.re, im0) }
    }

    pub fn reconstruct(&self, omega: f64) -> C64 {
        C64::new(self.p0.re, self.p0.im + omega * self.n as f64)
    }
}
