//! Position-space wavefunctions from coherent-state data.
//!
//! ```text
//! psi(x, T) = sum_nm <x|z_nm> K(z_nm*, z0, T) dq dp / (2 pi)
//! <x|z>     = pi^{-1/4} exp(-(x - q)^2/2 + i p (x - q/2))
//! ```
//!
//! Integrals over `x` use the trapezoid rule.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::CoherentLabel;
use crate::error::{CivrError, Result};
use crate::propagator::PropagatorGrid;

/// Uniform grid `x_k = x_min + k dx`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl XGrid {
    /// `n` points from `x_min` to `x_max`, both included.
    pub fn closed(x_min: f64, x_max: f64, n: usize) -> Self {
        Self { x_min, dx: (x_max - x_min) / (n.max(2) - 1) as f64, n }
    }

    /// `n` points on `[x_min, x_max)`, the layout of a periodic FFT grid.
    pub fn periodic(x_min: f64, x_max: f64, n: usize) -> Self {
        Self { x_min, dx: (x_max - x_min) / n as f64, n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CivrError::param("x grid", format!("needs at least 2 points, got {}", self.n)));
        }
        if !(self.x_min.is_finite() && self.dx.is_finite() && self.dx > 0.0) {
            return Err(CivrError::param("x grid", "bounds must be finite and increasing"));
        }
        Ok(())
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| self.x(k))
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    /// Trapezoid weight of sample `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.n {
            0.5 * self.dx
        } else {
            self.dx
        }
    }
}

/// A sampled wavefunction together with its norm `int |psi|^2 dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefunctionGrid {
    pub grid: XGrid,
    pub psi: Vec<Complex64>,
    pub norm: f64,
    pub renormalized: bool,
}

impl WavefunctionGrid {
    pub fn new(grid: XGrid, psi: Vec<Complex64>) -> Self {
        assert_eq!(grid.n, psi.len(), "sample count does not match the grid");
        let norm = trapezoid(&grid, psi.iter().map(|c| c.norm_sqr()));
        Self { grid, psi, norm, renormalized: false }
    }

    pub fn from_fn(grid: XGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self::new(grid, grid.points().map(f).collect())
    }

    /// The coherent state `<x|z>`.
    pub fn coherent(grid: XGrid, z: CoherentLabel) -> Self {
        Self::from_fn(grid, |x| coherent_position_amplitude(x, z))
    }

    /// Scales to unit norm; refuses an identically zero wavefunction.
    pub fn renormalize(&mut self) -> Result<()> {
        if self.norm.is_nan() || self.norm <= 0.0 {
            return Err(CivrError::ZeroNorm);
        }
        let s = 1.0 / self.norm.sqrt();
        self.psi.iter_mut().for_each(|c| *c *= s);
        self.norm = trapezoid(&self.grid, self.psi.iter().map(|c| c.norm_sqr()));
        self.renormalized = true;
        Ok(())
    }

    pub fn renormalized(mut self) -> Result<Self> {
        self.renormalize()?;
        Ok(self)
    }

    /// `int conj(self) other dx`.
    pub fn inner(&self, other: &WavefunctionGrid) -> Result<Complex64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok((0..self.grid.n).map(|k| self.psi[k].conj() * other.psi[k] * self.grid.weight(k)).sum())
    }

    /// Largest `|psi|` over the outermost `width` samples on either side.
    pub fn edge_amplitude(&self, width: usize) -> f64 {
        let w = width.clamp(1, self.psi.len() / 2);
        let n = self.psi.len();
        self.psi[..w].iter().chain(&self.psi[n - w..]).map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &WavefunctionGrid) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(self.psi.iter().zip(&other.psi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// `<x>` of the normalised density.
    pub fn mean_position(&self) -> f64 {
        trapezoid(&self.grid, self.grid.points().zip(&self.psi).map(|(x, c)| x * c.norm_sqr())) / self.norm
    }
}

fn trapezoid(grid: &XGrid, values: impl Iterator<Item = f64>) -> f64 {
    values.enumerate().map(|(k, v)| v * grid.weight(k)).sum()
}

fn check_same_grid(a: &XGrid, b: &XGrid) -> Result<()> {
    if a != b {
        return Err(CivrError::GridMismatch(format!(
            "[{}, {}] with {} points vs [{}, {}] with {} points",
            a.x_min,
            a.x_max(),
            a.n,
            b.x_min,
            b.x_max(),
            b.n
        )));
    }
    Ok(())
}

/// `<x|z> = pi^{-1/4} exp(-(x - q)^2/2 + i p (x - q/2))`.
pub fn coherent_position_amplitude(x: f64, z: CoherentLabel) -> Complex64 {
    let d = x - z.q;
    Complex64::new(-0.5 * d * d, z.p * (x - 0.5 * z.q)).exp() * PI.powf(-0.25)
}

/// Resolution-of-identity sum over the label grid of `k`. Not renormalised.
pub fn reconstruct(k: &PropagatorGrid, x_grid: &XGrid) -> WavefunctionGrid {
    let g = &k.grid;
    let measure = g.dq() * g.dp() / (2.0 * PI);
    let psi = (0..x_grid.n)
        .into_par_iter()
        .map(|ix| {
            let x = x_grid.x(ix);
            g.labels().zip(&k.k).map(|(z, kz)| coherent_position_amplitude(x, z) * kz).sum::<Complex64>() * measure
        })
        .collect();
    WavefunctionGrid::new(*x_grid, psi)
}

/// `|<a|b>| / (|a| |b|)`, in `[0, 1]`.
pub fn fidelity(a: &WavefunctionGrid, b: &WavefunctionGrid) -> Result<f64> {
    let ov = a.inner(b)?;
    let den = (a.norm * b.norm).sqrt();
    if den.is_nan() || den <= 0.0 {
        return Err(CivrError::ZeroNorm);
    }
    Ok((ov.norm() / den).min(1.0))
}

/// `<z|psi>` by quadrature, with the edge amplitude that bounds the truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOverlap {
    pub value: Complex64,
    pub edge_amplitude: f64,
}

impl GridOverlap {
    /// Whether `psi` has decayed below `1e-8` at the grid edges.
    pub fn decays(&self) -> bool {
        self.edge_amplitude < 1e-8
    }
}

pub fn coherent_overlap_from_grid(psi: &WavefunctionGrid, z: CoherentLabel) -> GridOverlap {
    let g = &psi.grid;
    let value = (0..g.n).map(|k| coherent_position_amplitude(g.x(k), z).conj() * psi.psi[k] * g.weight(k)).sum();
    GridOverlap { value, edge_amplitude: psi.edge_amplitude(1) }
}
