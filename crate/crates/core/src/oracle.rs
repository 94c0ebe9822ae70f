//! Independent quantum references: the exact harmonic coherent-state
//! propagator and a split-operator Fourier solver.
//!
//! The solver propagates the bare operator `p^2/2 + Omega^2 q^2/2 + lambda q^4/4`
//! in scaled units; ordering corrections belong only to the classical symbol.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::domain::CoherentLabel;
use crate::error::{CivrError, Result};
use crate::hamiltonian::{build_scaled, QuarticSpec};
use crate::reconstruct::{WavefunctionGrid, XGrid};

/// `K(z_f*, z0, T)` of the `omega = 1` harmonic oscillator.
pub fn harmonic_exact_k(z0: CoherentLabel, zf: CoherentLabel, t: f64) -> Complex64 {
    let e = zf.z_conj() * z0.z() * Complex64::from_polar(1.0, -t) - zf.norm_sqr() * 0.5 - z0.norm_sqr() * 0.5;
    Complex64::from_polar(1.0, -0.5 * t) * e.exp()
}

/// Periodic grid and time step of the split-operator solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOpConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Power of two.
    pub n_x: usize,
    pub dt: f64,
    pub t: f64,
}

impl Default for SplitOpConfig {
    fn default() -> Self {
        Self { x_min: -12.0, x_max: 12.0, n_x: 2048, dt: 1e-3, t: 0.0 }
    }
}

/// `|psi|` above this at the grid edges after a run is reported as leakage.
pub const EDGE_TOLERANCE: f64 = 1e-10;

impl SplitOpConfig {
    pub fn with_time(self, t: f64) -> Self {
        Self { t, ..self }
    }

    pub fn grid(&self) -> XGrid {
        XGrid::periodic(self.x_min, self.x_max, self.n_x)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_x.is_power_of_two() || self.n_x < 8 {
            return Err(CivrError::param("n_x", format!("must be a power of two >= 8, got {}", self.n_x)));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(CivrError::param("x range", "must be finite with x_max > x_min"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CivrError::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(CivrError::param("T", format!("must be finite and >= 0, got {}", self.t)));
        }
        Ok(())
    }

    /// Number of steps and the step length actually used, `T / steps`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t == 0.0 {
            return (0, 0.0);
        }
        let n = (self.t / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t / n as f64)
    }
}

// FFT plans plus kinetic and potential symbols on one grid.
struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    fn new(spec: &QuarticSpec, grid: &XGrid) -> Result<Self> {
        let h = build_scaled(spec)?;
        let n = grid.n;
        let length = grid.dx * n as f64;
        let kinetic = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                let k = 2.0 * PI * m / length;
                0.5 * h.omega * k * k
            })
            .collect();
        let potential =
            grid.points().map(|x| h.omega * (0.5 * h.nu * h.nu * x * x + 0.25 * h.lambda_bar * x.powi(4))).collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        Ok(Self { n, fwd, inv, kinetic, potential, scratch })
    }

    fn forward(&mut self, psi: &mut [Complex64]) {
        self.fwd.process_with_scratch(psi, &mut self.scratch);
    }

    fn inverse(&mut self, psi: &mut [Complex64]) {
        self.inv.process_with_scratch(psi, &mut self.scratch);
        let s = 1.0 / self.n as f64;
        psi.iter_mut().for_each(|c| *c *= s);
    }

    /// `<psi|H|psi> / <psi|psi>` with the kinetic term evaluated spectrally.
    fn energy(&mut self, psi: &[Complex64]) -> f64 {
        let mut buf = psi.to_vec();
        self.forward(&mut buf);
        let kin: f64 = buf.iter().zip(&self.kinetic).map(|(c, k)| c.norm_sqr() * k).sum::<f64>() / self.n as f64;
        let pot: f64 = psi.iter().zip(&self.potential).map(|(c, v)| c.norm_sqr() * v).sum();
        let nrm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        (kin + pot) / nrm
    }
}

/// Strang-split propagation `e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}` of `psi0` to `cfg.t`.
///
/// `psi0` must live on `cfg.grid()`. Fails with [`CivrError::EdgeLeakage`]
/// if `|psi|` at the grid edges exceeds [`EDGE_TOLERANCE`] at the end of the run.
pub fn split_operator_evolve(
    spec: &QuarticSpec,
    psi0: &WavefunctionGrid,
    cfg: &SplitOpConfig,
) -> Result<WavefunctionGrid> {
    cfg.validate()?;
    let grid = cfg.grid();
    if psi0.grid != grid {
        return Err(CivrError::GridMismatch(format!(
            "initial state has {} points from {}, solver grid has {} points from {}",
            psi0.grid.n, psi0.grid.x_min, grid.n, grid.x_min
        )));
    }
    let mut sp = Spectral::new(spec, &grid)?;
    let (steps, dt) = cfg.steps();
    let half_v: Vec<Complex64> = sp.potential.iter().map(|v| Complex64::from_polar(1.0, -0.5 * v * dt)).collect();
    let full_v: Vec<Complex64> = half_v.iter().map(|c| c * c).collect();
    let kin: Vec<Complex64> = sp.kinetic.iter().map(|k| Complex64::from_polar(1.0, -k * dt)).collect();

    let mut psi = psi0.psi.clone();
    if steps > 0 {
        // Adjacent half potential steps are merged.
        mul(&mut psi, &half_v);
        for s in 0..steps {
            sp.forward(&mut psi);
            mul(&mut psi, &kin);
            sp.inverse(&mut psi);
            mul(&mut psi, if s + 1 == steps { &half_v } else { &full_v });
        }
    }
    let out = WavefunctionGrid::new(grid, psi);
    let edge = out.edge_amplitude(1);
    if edge > EDGE_TOLERANCE {
        return Err(CivrError::EdgeLeakage { amplitude: edge });
    }
    Ok(out)
}

fn mul(psi: &mut [Complex64], f: &[Complex64]) {
    psi.iter_mut().zip(f).for_each(|(c, f)| *c *= f);
}

/// Imaginary-time relaxation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub dtau: f64,
    /// Stop when the energy changes by less than this over one check interval.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { x_min: -10.0, x_max: 10.0, n_x: 512, dtau: 1e-3, tol: 1e-12, max_steps: 200_000 }
    }
}

const CHECK_EVERY: usize = 200;

/// Lowest `count` eigenvalues (unscaled energies) by imaginary-time
/// relaxation with Gram-Schmidt deflation against the lower states.
pub fn eigen_energies(spec: &QuarticSpec, count: usize, cfg: &EigenConfig) -> Result<Vec<f64>> {
    SplitOpConfig { x_min: cfg.x_min, x_max: cfg.x_max, n_x: cfg.n_x, dt: cfg.dtau, t: 0.0 }.validate()?;
    let grid = XGrid::periodic(cfg.x_min, cfg.x_max, cfg.n_x);
    let mut sp = Spectral::new(spec, &grid)?;
    let half_v: Vec<Complex64> = sp.potential.iter().map(|v| Complex64::from((-0.5 * v * cfg.dtau).exp())).collect();
    let kin: Vec<Complex64> = sp.kinetic.iter().map(|k| Complex64::from((-k * cfg.dtau).exp())).collect();

    let mut states: Vec<Vec<Complex64>> = Vec::new();
    let mut energies = Vec::new();
    for level in 0..count {
        // x^level exp(-x^2/2) has the right parity and node count to start from.
        let mut psi: Vec<Complex64> =
            grid.points().map(|x| Complex64::from(x.powi(level as i32) * (-0.5 * x * x).exp())).collect();
        orthonormalize(&mut psi, &states);
        let mut e_prev = sp.energy(&psi);
        let mut converged = false;
        let mut step = 0;
        while step < cfg.max_steps {
            mul(&mut psi, &half_v);
            sp.forward(&mut psi);
            mul(&mut psi, &kin);
            sp.inverse(&mut psi);
            mul(&mut psi, &half_v);
            orthonormalize(&mut psi, &states);
            step += 1;
            if step % CHECK_EVERY == 0 {
                let e = sp.energy(&psi);
                if (e - e_prev).abs() < cfg.tol {
                    e_prev = e;
                    converged = true;
                    break;
                }
                e_prev = e;
            }
        }
        if !converged {
            return Err(CivrError::NotConverged { state: level, iterations: step });
        }
        energies.push(e_prev * spec.scaling.hbar);
        states.push(psi);
    }
    Ok(energies)
}

fn orthonormalize(psi: &mut [Complex64], lower: &[Vec<Complex64>]) {
    for phi in lower {
        let c: Complex64 = phi.iter().zip(psi.iter()).map(|(a, b)| a.conj() * b).sum();
        psi.iter_mut().zip(phi).for_each(|(p, f)| *p -= c * f);
    }
    let n = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|c| *c /= n);
}

/// Ground-state energy of `spec` with default relaxation settings.
pub fn ground_energy_check(spec: &QuarticSpec) -> Result<f64> {
    Ok(eigen_energies(spec, 1, &EigenConfig::default())?[0])
}
