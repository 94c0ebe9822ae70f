//! Value types shared by every stage of the pipeline.
//!
//! Phase-space conventions (scaled units, `b = hbar = 1`):
//!
//! * a coherent state label `(q, p)` has `z = (q + i p) / sqrt(2)`;
//! * a complex phase point `(q, p)` has `u = (q + i p) / sqrt(2)` and
//!   `v = (q - i p) / sqrt(2)`, which are independent once `q, p` are complex;
//! * the doubled phase space encodes `q = Q1 + i P2`, `p = P1 + i Q2`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CivrError, Result};

/// Centre `(q, p)` of a coherent state, in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentLabel {
    pub q: f64,
    pub p: f64,
}

impl CoherentLabel {
    pub const fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    /// Label whose complex coordinate is `z`.
    pub fn from_z(z: Complex64) -> Self {
        Self { q: z.re * SQRT_2, p: z.im * SQRT_2 }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.q, self.p) * FRAC_1_SQRT_2
    }

    pub fn z_conj(&self) -> Complex64 {
        Complex64::new(self.q, -self.p) * FRAC_1_SQRT_2
    }

    /// `|z|^2 = (q^2 + p^2) / 2`.
    pub fn norm_sqr(&self) -> f64 {
        0.5 * (self.q * self.q + self.p * self.p)
    }
}

/// Length scale `b` and `hbar` relating user-facing and scaled variables.
///
/// `q_scaled = q / b`, `p_scaled = p b / hbar`, `H_scaled = H / hbar`.
/// Time is not rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScaling {
    pub b: f64,
    pub hbar: f64,
}

impl Default for UnitScaling {
    fn default() -> Self {
        Self { b: 1.0, hbar: 1.0 }
    }
}

impl UnitScaling {
    pub fn new(b: f64, hbar: f64) -> Result<Self> {
        let s = Self { b, hbar };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(CivrError::param("b", format!("must be positive and finite, got {}", self.b)));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(CivrError::param("hbar", format!("must be positive and finite, got {}", self.hbar)));
        }
        Ok(())
    }

    /// Frequency of the reference oscillator, `omega = hbar / b^2` (unit mass).
    pub fn omega(&self) -> f64 {
        self.hbar / (self.b * self.b)
    }

    pub fn scale_q(&self, q: f64) -> f64 {
        q / self.b
    }

    pub fn scale_p(&self, p: f64) -> f64 {
        p * self.b / self.hbar
    }

    pub fn unscale_q(&self, q: f64) -> f64 {
        q * self.b
    }

    pub fn unscale_p(&self, p: f64) -> f64 {
        p * self.hbar / self.b
    }

    pub fn scale(&self, q: f64, p: f64) -> (f64, f64) {
        (self.scale_q(q), self.scale_p(p))
    }

    pub fn unscale(&self, q: f64, p: f64) -> (f64, f64) {
        (self.unscale_q(q), self.unscale_p(p))
    }

    pub fn scale_label(&self, label: CoherentLabel) -> CoherentLabel {
        let (q, p) = self.scale(label.q, label.p);
        CoherentLabel { q, p }
    }

    pub fn unscale_label(&self, label: CoherentLabel) -> CoherentLabel {
        let (q, p) = self.unscale(label.q, label.p);
        CoherentLabel { q, p }
    }
}

/// Real point of the doubled phase space, stored as `[Q1, Q2, P1, P2]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DoublePhasePoint(pub [f64; 4]);

impl DoublePhasePoint {
    pub const fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        Self([q1, q2, p1, p2])
    }

    pub fn q1(&self) -> f64 {
        self.0[0]
    }

    pub fn q2(&self) -> f64 {
        self.0[1]
    }

    pub fn p1(&self) -> f64 {
        self.0[2]
    }

    pub fn p2(&self) -> f64 {
        self.0[3]
    }

    /// Complex `q = Q1 + i P2`.
    pub fn q(&self) -> Complex64 {
        Complex64::new(self.q1(), self.p2())
    }

    /// Complex `p = P1 + i Q2`.
    pub fn p(&self) -> Complex64 {
        Complex64::new(self.p1(), self.q2())
    }

    pub fn to_complex(&self) -> ComplexPhasePoint {
        from_double(*self)
    }

    /// The companion coordinates `(Q1 + Q2, P1 - P2)`, equal to `(q1, p1)` at `t = 0`.
    pub fn companion(&self) -> (f64, f64) {
        (self.q1() + self.q2(), self.p1() - self.p2())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Complex phase-space point `(q, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPhasePoint {
    pub q: Complex64,
    pub p: Complex64,
}

impl ComplexPhasePoint {
    pub fn new(q: Complex64, p: Complex64) -> Self {
        Self { q, p }
    }

    pub fn real(q: f64, p: f64) -> Self {
        Self { q: q.into(), p: p.into() }
    }

    pub fn from_uv(u: Complex64, v: Complex64) -> Self {
        let q = (u + v) * FRAC_1_SQRT_2;
        let p = (u - v) * FRAC_1_SQRT_2 * Complex64::new(0.0, -1.0);
        Self { q, p }
    }

    pub fn u(&self) -> Complex64 {
        uv_from_qp(self.q, self.p).0
    }

    pub fn v(&self) -> Complex64 {
        uv_from_qp(self.q, self.p).1
    }

    pub fn to_double(&self) -> DoublePhasePoint {
        to_double(*self)
    }
}

/// Encodes a complex phase point as a doubled-phase-space point.
pub fn to_double(cp: ComplexPhasePoint) -> DoublePhasePoint {
    DoublePhasePoint::new(cp.q.re, cp.p.im, cp.p.re, cp.q.im)
}

pub fn from_double(x: DoublePhasePoint) -> ComplexPhasePoint {
    ComplexPhasePoint { q: x.q(), p: x.p() }
}

/// `u = (q + i p) / sqrt(2)`, `v = (q - i p) / sqrt(2)`.
pub fn uv_from_qp(q: Complex64, p: Complex64) -> (Complex64, Complex64) {
    let ip = Complex64::i() * p;
    ((q + ip) * FRAC_1_SQRT_2, (q - ip) * FRAC_1_SQRT_2)
}
