//! Assembly of the coherent-state propagator from a trajectory ensemble.
//!
//! Trajectories are launched from a regular grid of companion points
//! `(q1, p1)` and depend only on `(z0, T)`, so one ensemble serves every
//! final label `z_f`, every smoothing width `a` and every cutoff `c`.
//!
//! Smooth mode sums, for each `z_f`,
//!
//! ```text
//! |M_vv|^{3/2} exp(phi - |v(T) - z_f*|^2 / alpha^2) dq1 dp1 / (2 pi alpha^2),
//! phi = i(S + I) + u(T) d + M_uv/(2 M_vv) d^2 - |z_f|^2/2 - |z0|^2/2 - i xi/2,
//! d = z_f* - v(T), alpha = a |M_vv|,
//! ```
//!
//! over the pairs with `Re phi <= c`. Sudden mode replaces the Gaussian by a
//! narrow normalised Gaussian in the final companion coordinates
//! `(q1(T), p1(T))`, i.e. a regularised `delta^2(v(T) - z_f*)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::CoherentLabel;
use crate::error::{CivrError, Result};
use crate::hamiltonian::ScaledHamiltonian;
use crate::trajectory::{evolve_with, LaunchParams, StepControl, TrajectoryRecord};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Rectangular grid of phase-space points, endpoints included.
///
/// Nodes are ordered with `p` varying fastest: `index = i * n_p + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
}

impl LabelGrid {
    pub fn new(q_min: f64, q_max: f64, n_q: usize, p_min: f64, p_max: f64, n_p: usize) -> Self {
        Self { q_min, q_max, n_q, p_min, p_max, n_p }
    }

    /// 30 x 40 companion points on `[-3, 3] x [-4, 4]`.
    pub fn default_companions() -> Self {
        Self::new(-3.0, 3.0, 30, -4.0, 4.0, 40)
    }

    /// 40 x 60 final labels on `[-4, 4] x [-6, 6]`.
    pub fn default_labels() -> Self {
        Self::new(-4.0, 4.0, 40, -6.0, 6.0, 60)
    }

    /// The same grid shifted by `(dq, dp)`.
    pub fn shifted(&self, dq: f64, dp: f64) -> Self {
        Self { q_min: self.q_min + dq, q_max: self.q_max + dq, p_min: self.p_min + dp, p_max: self.p_max + dp, ..*self }
    }

    /// The same bounds with `factor` times the number of intervals per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self { n_q: (self.n_q - 1) * factor + 1, n_p: (self.n_p - 1) * factor + 1, ..*self }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if self.n_q < 2 || self.n_p < 2 {
            return Err(CivrError::param(
                name,
                format!("needs at least 2 points per axis, got {}x{}", self.n_q, self.n_p),
            ));
        }
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.q_min, self.q_max) || !ok(self.p_min, self.p_max) {
            return Err(CivrError::param(name, "bounds must be finite with max > min"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_q * self.n_p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_q - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n_p - 1) as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn node(&self, index: usize) -> (usize, usize) {
        (index / self.n_p, index % self.n_p)
    }

    pub fn label(&self, index: usize) -> CoherentLabel {
        let (i, j) = self.node(index);
        CoherentLabel::new(self.q(i), self.p(j))
    }

    pub fn labels(&self) -> impl Iterator<Item = CoherentLabel> + '_ {
        (0..self.len()).map(|k| self.label(k))
    }

    /// Quadrature weight of a node (area element times end-point factors).
    pub fn weight(&self, index: usize, rule: Quadrature) -> f64 {
        let area = self.dq() * self.dp();
        match rule {
            Quadrature::Riemann => area,
            Quadrature::Trapezoid => {
                let (i, j) = self.node(index);
                let fq = if i == 0 || i + 1 == self.n_q { 0.5 } else { 1.0 };
                let fp = if j == 0 || j + 1 == self.n_p { 0.5 } else { 1.0 };
                area * fq * fp
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    #[default]
    Riemann,
    Trapezoid,
}

/// Filtering of endpoint trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterMode {
    /// Gaussian smoothing of width `a` in the companion plane.
    #[default]
    Smooth,
    /// Regularised delta function of width `eps` times the label-grid spacing.
    Sudden { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CivrParams {
    /// Smoothing width `a`.
    pub a: f64,
    /// Cutoff: pairs with `Re phi > c` are discarded.
    pub c: f64,
    pub mode: FilterMode,
    pub quadrature: Quadrature,
}

impl CivrParams {
    pub fn smooth(a: f64, c: f64) -> Self {
        Self { a, c, mode: FilterMode::Smooth, quadrature: Quadrature::Riemann }
    }

    pub fn sudden(eps: f64, c: f64) -> Self {
        Self { a: 1.0, c, mode: FilterMode::Sudden { eps }, quadrature: Quadrature::Riemann }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(CivrError::param("a", format!("must be positive, got {}", self.a)));
        }
        if self.c.is_nan() {
            return Err(CivrError::param("c", "must not be NaN"));
        }
        if let FilterMode::Sudden { eps } = self.mode {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(CivrError::param("eps", format!("must be positive, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Trajectories launched from every node of a companion grid.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub z0: CoherentLabel,
    pub t: f64,
    pub grid: LabelGrid,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryEnsemble {
    /// Propagates all trajectories on the current rayon pool; results are in grid order.
    pub fn evolve(
        h: &ScaledHamiltonian,
        z0: CoherentLabel,
        grid: LabelGrid,
        t: f64,
        dt: f64,
        ctrl: StepControl,
    ) -> Result<Self> {
        grid.validate("trajectory grid")?;
        LaunchParams::central(z0, t, dt).validate()?;
        let records = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let c = grid.label(k);
                evolve_with(h, &LaunchParams::new(z0, c.q, c.p, t, dt), ctrl, |_| {})
            })
            .collect();
        Ok(Self { z0, t, grid, records })
    }

    pub fn invalid_count(&self) -> usize {
        self.records.iter().filter(|r| !r.is_valid()).count()
    }

    pub fn stats(&self) -> EnsembleStats {
        let valid: Vec<&TrajectoryRecord> = self.records.iter().filter(|r| r.is_valid()).collect();
        let fold = |f: fn(&TrajectoryRecord) -> f64| valid.iter().map(|r| f(r)).fold(0.0, f64::max);
        let mean =
            if valid.is_empty() { 0.0 } else { valid.iter().map(|r| r.h2_drift).sum::<f64>() / valid.len() as f64 };
        EnsembleStats {
            trajectories: self.records.len(),
            invalid: self.records.len() - valid.len(),
            max_h1_drift: fold(|r| r.h1_drift),
            max_h2_drift: fold(|r| r.h2_drift),
            mean_h2_drift: mean,
            total_substeps: self.records.iter().map(|r| r.substeps).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub trajectories: usize,
    pub invalid: usize,
    pub max_h1_drift: f64,
    pub max_h2_drift: f64,
    pub mean_h2_drift: f64,
    pub total_substeps: usize,
}

/// The exponent `phi` of a trajectory for final label `zf`.
///
/// Returns `None` when `M_vv` vanishes or the record is not usable.
pub fn phi_exponent(rec: &TrajectoryRecord, z0: CoherentLabel, zf: CoherentLabel) -> Option<Complex64> {
    let mvv = rec.m_vv();
    if !rec.is_valid() || mvv.norm() == 0.0 || !mvv.is_finite() {
        return None;
    }
    let d = zf.z_conj() - rec.v_end();
    let phi = base_exponent(rec, z0) + rec.u_end() * d + rec.m_uv() / (mvv * 2.0) * d * d - zf.norm_sqr() * 0.5;
    phi.is_finite().then_some(phi)
}

/// `phi` evaluated at the label the trajectory lands on, `z_f* = v(T)`.
pub fn self_phi(rec: &TrajectoryRecord, z0: CoherentLabel) -> Option<Complex64> {
    if !rec.is_valid() || rec.m_vv().norm() == 0.0 {
        return None;
    }
    let phi = base_exponent(rec, z0) - rec.v_end().norm_sqr() * 0.5;
    phi.is_finite().then_some(phi)
}

// i(S + I) - |z0|^2/2 - i xi/2
fn base_exponent(rec: &TrajectoryRecord, z0: CoherentLabel) -> Complex64 {
    I * (rec.action + rec.correction) - z0.norm_sqr() * 0.5 - I * (rec.xi * 0.5)
}

/// Cutoff filter: keep iff `Re phi <= c`.
pub fn filter(phi: Complex64, c: f64) -> bool {
    phi.re <= c
}

/// One trajectory's contribution to `K(z_f*, z0, T)` in smooth mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub phi: Complex64,
    pub weight: Complex64,
    pub accepted: bool,
    pub v_t: Complex64,
    pub alpha: f64,
}

/// Smooth-mode contribution of `rec` for label `zf`; `measure` is the
/// quadrature weight `dq1 dp1` of the launch node.
pub fn contribution(
    rec: &TrajectoryRecord,
    z0: CoherentLabel,
    zf: CoherentLabel,
    a: f64,
    c: f64,
    measure: f64,
) -> Contribution {
    let mvv_abs = rec.m_vv().norm();
    let alpha = a * mvv_abs;
    let v_t = rec.v_end();
    match phi_exponent(rec, z0, zf) {
        Some(phi) if filter(phi, c) => {
            let d2 = (zf.z_conj() - v_t).norm_sqr();
            let weight =
                (phi - d2 / (alpha * alpha)).exp() * (mvv_abs.powf(1.5) * measure / (2.0 * PI * alpha * alpha));
            Contribution { phi, weight, accepted: true, v_t, alpha }
        }
        Some(phi) => Contribution { phi, weight: Complex64::new(0.0, 0.0), accepted: false, v_t, alpha },
        None => Contribution {
            phi: Complex64::new(f64::NAN, f64::NAN),
            weight: Complex64::new(0.0, 0.0),
            accepted: false,
            v_t,
            alpha,
        },
    }
}

/// `K(z_f*, z0, T)` sampled on a label grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorGrid {
    pub grid: LabelGrid,
    pub k: Vec<Complex64>,
    pub t: f64,
    pub params: CivrParams,
    /// Valid trajectories whose own exponent passes the cutoff.
    pub accepted_trajectories: usize,
    pub rejected_trajectories: usize,
    /// Trajectories discarded by the integrator or with `M_vv = 0`.
    pub unusable_trajectories: usize,
    pub accepted_pairs: u64,
    pub rejected_pairs: u64,
    /// Set when no (trajectory, label) pair passed the cutoff.
    pub empty: bool,
}

impl PropagatorGrid {
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.k[i * self.grid.n_p + j]
    }

    pub fn max_abs_diff(&self, other: impl Fn(CoherentLabel) -> Complex64) -> f64 {
        self.grid.labels().zip(&self.k).map(|(l, k)| (k - other(l)).norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.k.iter_mut().for_each(|k| *k *= factor);
    }
}

// Label-independent parts of a trajectory's contribution.
struct Prepared {
    u: Complex64,
    v: Complex64,
    base: Complex64,
    beta: Complex64,
    inv_alpha_sq: f64,
    prefactor: f64,
    // sudden mode
    q1t: f64,
    p1t: f64,
}

fn prepare(ens: &TrajectoryEnsemble, params: &CivrParams) -> Vec<Option<Prepared>> {
    ens.records
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            let mvv = rec.m_vv();
            let mvv_abs = mvv.norm();
            if !rec.is_valid() || mvv_abs == 0.0 || !mvv.is_finite() {
                return None;
            }
            let alpha = params.a * mvv_abs;
            let measure = ens.grid.weight(k, params.quadrature);
            let (q1t, p1t) = rec.companion_end();
            let prefactor = match params.mode {
                FilterMode::Smooth => mvv_abs.powf(1.5) * measure / (2.0 * PI * alpha * alpha),
                FilterMode::Sudden { .. } => mvv_abs.powf(1.5) * measure / (2.0 * PI),
            };
            Some(Prepared {
                u: rec.u_end(),
                v: rec.v_end(),
                base: base_exponent(rec, ens.z0),
                beta: rec.m_uv() / (mvv * 2.0),
                inv_alpha_sq: 1.0 / (alpha * alpha),
                prefactor,
                q1t,
                p1t,
            })
        })
        .collect()
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Propagator on `labels` from a precomputed ensemble, in the mode selected by `params`.
pub fn assemble(ens: &TrajectoryEnsemble, params: &CivrParams, labels: &LabelGrid) -> Result<PropagatorGrid> {
    params.validate()?;
    labels.validate("label grid")?;
    let prepared = prepare(ens, params);
    let c = params.c;
    let sudden_sigma = match params.mode {
        FilterMode::Sudden { eps } => Some((eps * labels.dq(), eps * labels.dp())),
        FilterMode::Smooth => None,
    };

    let per_label: Vec<(Complex64, u64)> = (0..labels.len())
        .into_par_iter()
        .map(|idx| {
            let zf = labels.label(idx);
            let zfc = zf.z_conj();
            let zf_sq = zf.norm_sqr() * 0.5;
            let mut sum = Complex64::new(0.0, 0.0);
            let mut accepted = 0u64;
            for p in prepared.iter().flatten() {
                match sudden_sigma {
                    None => {
                        let d = zfc - p.v;
                        let phi = p.base + p.u * d + p.beta * d * d - zf_sq;
                        if filter(phi, c) {
                            accepted += 1;
                            sum += (phi - d.norm_sqr() * p.inv_alpha_sq).exp() * p.prefactor;
                        }
                    }
                    Some((sq, sp)) => {
                        let expo = p.base - zf_sq;
                        let own = p.base - p.v.norm_sqr() * 0.5;
                        if filter(own, c) {
                            accepted += 1;
                            let delta = 2.0 * PI * gaussian(p.q1t - zf.q, sq) * gaussian(p.p1t - zf.p, sp);
                            sum += expo.exp() * (p.prefactor * delta);
                        }
                    }
                }
            }
            (sum, accepted)
        })
        .collect();

    let usable = prepared.iter().filter(|p| p.is_some()).count();
    let accepted_trajectories =
        ens.records.iter().filter(|r| self_phi(r, ens.z0).is_some_and(|phi| filter(phi, c))).count();
    let accepted_pairs: u64 = per_label.iter().map(|x| x.1).sum();
    let total_pairs = (usable * labels.len()) as u64;
    Ok(PropagatorGrid {
        grid: *labels,
        k: per_label.into_iter().map(|x| x.0).collect(),
        t: ens.t,
        params: *params,
        accepted_trajectories,
        rejected_trajectories: usable - accepted_trajectories,
        unusable_trajectories: ens.records.len() - usable,
        accepted_pairs,
        rejected_pairs: total_pairs - accepted_pairs,
        empty: accepted_pairs == 0,
    })
}

/// Smooth CIVR propagator: evolves the ensemble and assembles `K` on `labels`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_k(
    h: &ScaledHamiltonian,
    z0: CoherentLabel,
    a: f64,
    c: f64,
    grid1: LabelGrid,
    labels: &LabelGrid,
    t: f64,
    dt: f64,
) -> Result<PropagatorGrid> {
    let ens = TrajectoryEnsemble::evolve(h, z0, grid1, t, dt, StepControl::default())?;
    assemble(&ens, &CivrParams::smooth(a, c), labels)
}

/// Sudden CIVR propagator with a regularised delta of relative width `eps`.
#[allow(clippy::too_many_arguments)]
pub fn sudden_k(
    h: &ScaledHamiltonian,
    z0: CoherentLabel,
    eps: f64,
    c: f64,
    grid1: LabelGrid,
    labels: &LabelGrid,
    t: f64,
    dt: f64,
) -> Result<PropagatorGrid> {
    let ens = TrajectoryEnsemble::evolve(h, z0, grid1, t, dt, StepControl::default())?;
    assemble(&ens, &CivrParams::sudden(eps, c), labels)
}

/// `det Lambda` of the companion end-point map, compared with `|M_vv|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCheck {
    pub det_lambda: f64,
    pub mvv_sq: f64,
    /// `[[dq1(T)/dq1, dq1(T)/dp1], [dp1(T)/dq1, dp1(T)/dp1]]` by central differences.
    pub jacobian: [[f64; 2]; 2],
}

impl LambdaCheck {
    pub fn relative_error(&self) -> f64 {
        (self.det_lambda - self.mvv_sq).abs() / self.mvv_sq.max(f64::MIN_POSITIVE)
    }
}

/// Finite-difference `det Lambda` for the trajectory of `rec`.
pub fn lambda_check(h: &ScaledHamiltonian, rec: &TrajectoryRecord, eps: f64) -> LambdaCheck {
    let lp = rec.launch;
    let end = |dq: f64, dp: f64| {
        let shifted = LaunchParams { q1: lp.q1 + dq, p1: lp.p1 + dp, ..lp };
        evolve_with(h, &shifted, StepControl::default(), |_| {}).companion_end()
    };
    let (qa, pa) = end(eps, 0.0);
    let (qb, pb) = end(-eps, 0.0);
    let (qc, pc) = end(0.0, eps);
    let (qd, pd) = end(0.0, -eps);
    let jac = [[(qa - qb) / (2.0 * eps), (qc - qd) / (2.0 * eps)], [(pa - pb) / (2.0 * eps), (pc - pd) / (2.0 * eps)]];
    LambdaCheck {
        det_lambda: jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0],
        mvv_sq: rec.m_vv().norm_sqr(),
        jacobian: jac,
    }
}

/// Which launch nodes contribute, judged by the exponent at their own end point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionMap {
    pub grid: LabelGrid,
    pub c: f64,
    pub accepted: Vec<bool>,
    /// `Re phi` at `z_f* = v(T)`; NaN for unusable trajectories.
    pub re_phi: Vec<f64>,
}

impl ContributionMap {
    pub fn accepted_fraction(&self) -> f64 {
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len().max(1) as f64
    }

    pub fn is_accepted(&self, i: usize, j: usize) -> bool {
        self.accepted[i * self.grid.n_p + j]
    }
}

pub fn contribution_map(ens: &TrajectoryEnsemble, c: f64) -> ContributionMap {
    let re_phi: Vec<f64> = ens.records.iter().map(|r| self_phi(r, ens.z0).map_or(f64::NAN, |p| p.re)).collect();
    ContributionMap { grid: ens.grid, c, accepted: re_phi.iter().map(|&r| r <= c).collect(), re_phi }
}

/// Largest `Re phi` over all usable (trajectory, label) pairs.
pub fn max_re_phi(ens: &TrajectoryEnsemble, labels: &LabelGrid) -> f64 {
    labels
        .labels()
        .flat_map(|zf| ens.records.iter().filter_map(move |r| phi_exponent(r, ens.z0, zf)))
        .map(|p| p.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
