//! Quadratic-plus-quartic Hamiltonian in scaled units.
//!
//! The classical function used by the semiclassical propagator is the
//! normal-ordered coherent-state expectation `H(u, v) = <v|H|u>` of
//!
//! ```text
//! H = p^2/2 + Omega^2 q^2/2 + lambda q^4/4
//! ```
//!
//! which in scaled variables reads
//!
//! ```text
//! H = omega [ p^2/2 + nu_bar^2 q^2/2 + lambda_bar q^4/4 + const ]
//! omega = hbar/b^2, nu = Omega/omega, lambda_bar = lambda hbar/omega^3,
//! nu_bar^2 = nu^2 + 3 lambda_bar/2, const = (1 + nu^2 + 3 lambda_bar/4)/4.
//! ```
//!
//! Every derivative is a closed-form polynomial. Doubled-phase-space
//! derivatives are obtained from the complex ones through the chain rule
//! for `q = Q1 + i P2`, `p = P1 + i Q2`.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{DoublePhasePoint, UnitScaling};
use crate::error::{CivrError, Result};

/// Physical parameters of `p^2/2 + Omega^2 q^2/2 + lambda q^4/4` (unit mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticSpec {
    /// Harmonic frequency `Omega`, unscaled.
    pub omega_h: f64,
    /// Quartic strength `lambda`, unscaled.
    pub lambda: f64,
    pub scaling: UnitScaling,
}

impl QuarticSpec {
    pub fn new(omega_h: f64, lambda: f64, scaling: UnitScaling) -> Self {
        Self { omega_h, lambda, scaling }
    }

    /// Harmonic oscillator with `Omega = 1` in units where `b = hbar = 1`.
    pub fn harmonic() -> Self {
        Self::new(1.0, 0.0, UnitScaling::default())
    }

    /// `Omega = 1`, `lambda = 0.4`, `b = hbar = 1`.
    pub fn reference_quartic() -> Self {
        Self::new(1.0, 0.4, UnitScaling::default())
    }

    pub fn validate(&self) -> Result<()> {
        self.scaling.validate()?;
        if !(self.omega_h.is_finite() && self.omega_h >= 0.0) {
            return Err(CivrError::param("Omega", format!("must be finite and >= 0, got {}", self.omega_h)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(CivrError::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Normal-ordered classical Hamiltonian in unscaled variables, evaluated at real `(q, p)`.
    pub fn classical_unscaled(&self, q: f64, p: f64) -> f64 {
        let b = self.scaling.b;
        let hbar = self.scaling.hbar;
        let w2 = self.omega_h * self.omega_h;
        0.5 * p * p
            + 0.5 * (w2 + 1.5 * self.lambda * b * b) * q * q
            + 0.25 * self.lambda * q.powi(4)
            + hbar * hbar / (4.0 * b * b)
            + w2 * b * b / 4.0
            + 3.0 * self.lambda * b.powi(4) / 16.0
    }
}

/// Second derivatives of `H(q, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexHessian {
    pub qq: Complex64,
    pub qp: Complex64,
    pub pp: Complex64,
}

/// The Hamiltonian in scaled units, `H_scaled = H / hbar` with `b = hbar = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledHamiltonian {
    /// Overall prefactor `omega = hbar / b^2`.
    pub omega: f64,
    pub nu: f64,
    pub lambda_bar: f64,
    pub nu_bar_sq: f64,
    pub const_term: f64,
    /// Drop the ordering corrections and evaluate the bare symbol
    /// `p^2/2 + nu^2 q^2/2 + lambda_bar q^4/4`.
    pub bare: bool,
}

/// Builds the scaled normal-ordered Hamiltonian for `spec`.
pub fn build_scaled(spec: &QuarticSpec) -> Result<ScaledHamiltonian> {
    spec.validate()?;
    let omega = spec.scaling.omega();
    let nu = spec.omega_h / omega;
    let lambda_bar = spec.lambda * spec.scaling.hbar / omega.powi(3);
    Ok(ScaledHamiltonian {
        omega,
        nu,
        lambda_bar,
        nu_bar_sq: nu * nu + 1.5 * lambda_bar,
        const_term: (1.0 + nu * nu + 0.75 * lambda_bar) / 4.0,
        bare: false,
    })
}

impl ScaledHamiltonian {
    pub fn new(spec: &QuarticSpec) -> Result<Self> {
        build_scaled(spec)
    }

    /// The same system without ordering corrections: the classical symbol
    /// whose energy and turning points are quoted for the central trajectory.
    pub fn bare(&self) -> Self {
        Self { bare: true, ..*self }
    }

    /// Coefficient of `q^2/2` inside the bracket.
    pub fn quadratic_coeff(&self) -> f64 {
        if self.bare {
            self.nu * self.nu
        } else {
            self.nu_bar_sq
        }
    }

    pub fn constant(&self) -> f64 {
        if self.bare {
            0.0
        } else {
            self.const_term
        }
    }

    pub fn is_harmonic(&self) -> bool {
        self.lambda_bar == 0.0
    }

    /// Analytic continuation `H(q, p)` for complex arguments.
    pub fn eval_complex(&self, q: Complex64, p: Complex64) -> Complex64 {
        let q2 = q * q;
        (p * p * 0.5 + q2 * (0.5 * self.quadratic_coeff()) + q2 * q2 * (0.25 * self.lambda_bar) + self.constant())
            * self.omega
    }

    /// Bare classical energy `p^2/2 + nu^2 q^2/2 + lambda_bar q^4/4` at a real point,
    /// independent of the `bare` flag.
    pub fn bare_energy(&self, q: f64, p: f64) -> f64 {
        self.omega * (0.5 * p * p + 0.5 * self.nu * self.nu * q * q + 0.25 * self.lambda_bar * q.powi(4))
    }

    /// Positive turning point of the bare potential at energy `e`.
    pub fn bare_turning_point(&self, e: f64) -> f64 {
        let k = self.nu * self.nu;
        let e = e / self.omega;
        if self.lambda_bar == 0.0 {
            return (2.0 * e / k).sqrt();
        }
        let x2 = (-0.5 * k + (0.25 * k * k + self.lambda_bar * e).sqrt()) / (0.5 * self.lambda_bar);
        x2.sqrt()
    }

    /// `omega (|p|^2/2 + |k| |q|^2/2 + lambda_bar |q|^4/4 + |const|)`: the
    /// scale of rounding errors in [`eval_complex`](Self::eval_complex).
    pub fn term_magnitude(&self, q: Complex64, p: Complex64) -> f64 {
        let q2 = q.norm_sqr();
        self.omega
            * (0.5 * p.norm_sqr()
                + 0.5 * self.quadratic_coeff().abs() * q2
                + 0.25 * self.lambda_bar * q2 * q2
                + self.constant().abs())
    }

    /// `dH/dq`, `dH/dp`.
    pub fn gradient_complex(&self, q: Complex64, p: Complex64) -> (Complex64, Complex64) {
        let hq = (q * self.quadratic_coeff() + q * q * q * self.lambda_bar) * self.omega;
        (hq, p * self.omega)
    }

    pub fn hessian_complex(&self, q: Complex64, _p: Complex64) -> ComplexHessian {
        ComplexHessian {
            qq: (q * q * (3.0 * self.lambda_bar) + self.quadratic_coeff()) * self.omega,
            qp: Complex64::new(0.0, 0.0),
            pp: Complex64::new(self.omega, 0.0),
        }
    }

    /// `d^2 H / du dv = (H_qq + H_pp) / 2`, the integrand of the action correction.
    pub fn d2h_dudv(&self, q: Complex64, p: Complex64) -> Complex64 {
        let h = self.hessian_complex(q, p);
        (h.qq + h.pp) * 0.5
    }

    /// `(H1, H2)` with `H(q, p) = H1 + i H2`.
    pub fn split_double(&self, x: &DoublePhasePoint) -> (f64, f64) {
        let h = self.eval_complex(x.q(), x.p());
        (h.re, h.im)
    }

    /// `(dH1/dQ1, dH1/dQ2, dH1/dP1, dH1/dP2)`.
    pub fn grad_double(&self, x: &DoublePhasePoint) -> Vector4<f64> {
        let (hq, hp) = self.gradient_complex(x.q(), x.p());
        let d = [hq, hp];
        let mut g = Vector4::zeros();
        for (a, &(var, f)) in CHAIN.iter().enumerate() {
            g[a] = (d[var] * f).re;
        }
        g
    }

    /// Hessian of `H1` in `(Q1, Q2, P1, P2)`.
    pub fn hess_double(&self, x: &DoublePhasePoint) -> Matrix4<f64> {
        let h = self.hessian_complex(x.q(), x.p());
        let second = [[h.qq, h.qp], [h.qp, h.pp]];
        Matrix4::from_fn(|a, b| {
            let (va, fa) = CHAIN[a];
            let (vb, fb) = CHAIN[b];
            (second[va][vb] * fa * fb).re
        })
    }
}

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

// For each real coordinate (Q1, Q2, P1, P2): the complex variable it feeds
// (0 = q, 1 = p) and d(variable)/d(coordinate).
const CHAIN: [(usize, Complex64); 4] = [(0, ONE), (1, I), (1, ONE), (0, I)];
