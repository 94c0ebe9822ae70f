//! Complex classical trajectories as real doubled-phase-space flows.
//!
//! A trajectory is launched from a wavepacket centre `(q0, p0)` and a
//! companion point `(q1, p1)`:
//!
//! ```text
//! Q1(0) = (q0 + q1)/2   Q2(0) = (q1 - q0)/2
//! P1(0) = (p0 + p1)/2   P2(0) = (p0 - p1)/2
//! ```
//!
//! so that `u(0) = z0` and `v(0) = (q1 - i p1)/sqrt(2)`. The state is advanced
//! with Hamilton's equations for `H1`, together with the 4x4 tangent matrix
//! `n`, the running action integral and the correction integral. Steps are
//! classic RK4 on a fixed base grid `dt = T/N`; each base step is split by
//! step doubling whenever the local error estimate or the phase increment of
//! `M_vv` is too large, which happens only close to the complex-time
//! singularities of anharmonic flows.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use nalgebra::{Matrix2, Matrix4, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{CoherentLabel, ComplexPhasePoint, DoublePhasePoint};
use crate::error::{CivrError, Result};
use crate::hamiltonian::ScaledHamiltonian;

const DIM: usize = 24;
type State = SVector<f64, DIM>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Launch parameters of a single trajectory (scaled units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchParams {
    pub q0: f64,
    pub p0: f64,
    pub q1: f64,
    pub p1: f64,
    /// Total propagation time.
    pub t: f64,
    /// Base step.
    pub dt: f64,
}

impl LaunchParams {
    pub fn new(z0: CoherentLabel, q1: f64, p1: f64, t: f64, dt: f64) -> Self {
        Self { q0: z0.q, p0: z0.p, q1, p1, t, dt }
    }

    /// The real trajectory through the packet centre.
    pub fn central(z0: CoherentLabel, t: f64, dt: f64) -> Self {
        Self::new(z0, z0.q, z0.p, t, dt)
    }

    pub fn label(&self) -> CoherentLabel {
        CoherentLabel::new(self.q0, self.p0)
    }

    pub fn delta_q(&self) -> f64 {
        self.q1 - self.q0
    }

    pub fn delta_p(&self) -> f64 {
        self.p1 - self.p0
    }

    /// `w = (dq - i dp)/2`, so that `q(0) = q0 + w` and `p(0) = p0 + i w`.
    pub fn w(&self) -> Complex64 {
        Complex64::new(self.delta_q(), -self.delta_p()) * 0.5
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(CivrError::param("T", format!("must be finite and >= 0, got {}", self.t)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CivrError::param("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Doubled-phase-space initial point for `lp`.
pub fn initial_conditions(lp: &LaunchParams) -> DoublePhasePoint {
    let dq = lp.delta_q();
    let dp = lp.delta_p();
    DoublePhasePoint::new(lp.q0 + 0.5 * dq, 0.5 * dq, lp.p0 + 0.5 * dp, -0.5 * dp)
}

/// How the local error of a substep is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorEstimate {
    /// Change of the conserved pair `(H1, H2)` over the substep, relative to
    /// `max(1, |H(0)|)` and the magnitude of the terms of `H`. One RK4 step
    /// per substep.
    #[default]
    Invariants,
    /// Difference between one full and two half RK4 steps (Richardson), mixed
    /// absolute/relative over the whole state. About three times the cost.
    StepDoubling,
}

/// Step-size control and validity thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    /// Local error tolerance per substep.
    pub tol: f64,
    pub estimate: ErrorEstimate,
    /// Maximum number of successive halvings of a base step.
    pub max_halvings: u32,
    /// Trajectories whose `|H2(t) - H2(0)|` exceeds this are flagged invalid.
    pub h2_cap: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { tol: 2e-13, estimate: ErrorEstimate::Invariants, max_halvings: 40, h2_cap: 1e-4 }
    }
}

impl StepControl {
    pub fn step_doubling() -> Self {
        Self { tol: 1e-13, estimate: ErrorEstimate::StepDoubling, ..Self::default() }
    }
}

/// Why a trajectory was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Failure {
    NonFinite,
    StepUnderflow,
    H2Drift,
}

/// Result of propagating one trajectory to time `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub launch: LaunchParams,
    pub start: DoublePhasePoint,
    pub end_double: DoublePhasePoint,
    /// `(q(T), p(T))`; `u(T)` and `v(T)` via [`ComplexPhasePoint::u`]/[`ComplexPhasePoint::v`].
    pub end: ComplexPhasePoint,
    /// Action including the boundary term, with `z_f*` replaced by `v(T)`.
    pub action: Complex64,
    /// `(1/2) int d^2H/dudv dt`.
    pub correction: Complex64,
    /// Tangent matrix in `(Q1, Q2, P1, P2)`, `n_ij = dx_i(T)/dx_j(0)`.
    pub n: Matrix4<f64>,
    /// Tangent matrix in `(q, p)`.
    pub m: Matrix2<Complex64>,
    /// Tangent matrix in `(u, v)`: `[[M_uu, M_uv], [M_vu, M_vv]]`.
    pub big_m: Matrix2<Complex64>,
    /// Continuously unwrapped phase of `M_vv`, `xi(0) = 0`.
    pub xi: f64,
    pub h1_initial: f64,
    pub h2_initial: f64,
    /// `max_t |H1(t) - H1(0)|`.
    pub h1_drift: f64,
    /// `max_t |H2(t) - H2(0)|`.
    pub h2_drift: f64,
    /// Largest `|xi(t_{k+1}) - xi(t_k)|` over accepted substeps.
    pub max_xi_step: f64,
    /// `max_t ||n^T J n - J||_max`.
    pub max_symplectic_error: f64,
    /// `max_t |det M - 1|`.
    pub max_det_error: f64,
    pub substeps: usize,
    pub failure: Option<Failure>,
}

impl TrajectoryRecord {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    pub fn u_end(&self) -> Complex64 {
        self.end.u()
    }

    pub fn v_end(&self) -> Complex64 {
        self.end.v()
    }

    pub fn m_vv(&self) -> Complex64 {
        self.big_m[(1, 1)]
    }

    pub fn m_uv(&self) -> Complex64 {
        self.big_m[(0, 1)]
    }

    pub fn h1_relative_drift(&self) -> f64 {
        self.h1_drift / self.h1_initial.abs().max(1.0)
    }

    pub fn h2_relative_drift(&self) -> f64 {
        self.h2_drift / self.h2_initial.abs().max(1.0)
    }

    /// `(q1(T), p1(T)) = (Q1 + Q2, P1 - P2)` at the final time.
    pub fn companion_end(&self) -> (f64, f64) {
        self.end_double.companion()
    }
}

/// One sample along a path, emitted after every base step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub x: DoublePhasePoint,
    /// Action up to `t` with the boundary term evaluated at `v(t)`.
    pub action: Complex64,
    pub m_vv: Complex64,
    pub xi: f64,
    pub h1: f64,
    pub h2: f64,
}

/// `m` from the doubled-space tangent matrix `n`.
pub fn n_to_m(n: &Matrix4<f64>) -> Matrix2<Complex64> {
    let e = |i: usize, j: usize| n[(i - 1, j - 1)];
    let c = Complex64::new;
    Matrix2::new(c(e(1, 1), -e(1, 4)), c(e(1, 3), -e(1, 2)), c(e(2, 4), e(2, 1)), c(e(2, 2), e(2, 3)))
}

/// `M` (tangent matrix in `u, v`) from `m` (tangent matrix in `q, p`).
pub fn m_to_uv(m: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let (qq, qp, pq, pp) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let uu = (qq + pp + I * pq - I * qp) * 0.5;
    let uv = (qq - pp + I * pq + I * qp) * 0.5;
    let vu = (qq - pp - I * pq - I * qp) * 0.5;
    let vv = (qq + pp - I * pq + I * qp) * 0.5;
    Matrix2::new(uu, uv, vu, vv)
}

/// Symplectic form in `(Q1, Q2, P1, P2)`.
pub fn symplectic_j() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = -1.0;
    j[(3, 1)] = -1.0;
    j
}

fn m_vv_of(n: &Matrix4<f64>) -> Complex64 {
    m_to_uv(&n_to_m(n))[(1, 1)]
}

fn pack(x: &DoublePhasePoint, n: &Matrix4<f64>) -> State {
    let mut y = State::zeros();
    y.fixed_rows_mut::<4>(0).copy_from_slice(&x.0);
    y.fixed_rows_mut::<16>(4).copy_from_slice(n.as_slice());
    y
}

fn point_of(y: &State) -> DoublePhasePoint {
    DoublePhasePoint([y[0], y[1], y[2], y[3]])
}

fn tangent_of(y: &State) -> Matrix4<f64> {
    Matrix4::from_column_slice(&y.as_slice()[4..20])
}

fn dyn_action_of(y: &State) -> Complex64 {
    Complex64::new(y[20], y[21])
}

fn correction_of(y: &State) -> Complex64 {
    Complex64::new(y[22], y[23])
}

fn rhs(h: &ScaledHamiltonian, y: &State) -> State {
    let x = point_of(y);
    let (q, p) = (x.q(), x.p());
    let (hq, hp) = h.gradient_complex(q, p);
    let c2 = h.hessian_complex(q, p);
    let (a, b, c) = (c2.qq, c2.qp, c2.pp);
    // Hessian of H1 in (Q1, Q2, P1, P2), from q = Q1 + i P2, p = P1 + i Q2
    let hs = Matrix4::new(
        a.re, -b.im, b.re, -a.im, //
        -b.im, -c.re, -c.im, -b.re, //
        b.re, -c.im, c.re, -b.im, //
        -a.im, -b.re, -b.im, -a.re,
    );
    let prod = hs * tangent_of(y);
    let mut dy = State::zeros();
    // x' = J grad H1 with grad H1 = (Re Hq, -Im Hp, Re Hp, -Im Hq)
    dy[0] = hp.re;
    dy[1] = -hq.im;
    dy[2] = -hq.re;
    dy[3] = hp.im;
    // n' = J Hess n, n stored column-major
    for col in 0..4 {
        let base = 4 + 4 * col;
        dy[base] = prod[(2, col)];
        dy[base + 1] = prod[(3, col)];
        dy[base + 2] = -prod[(0, col)];
        dy[base + 3] = -prod[(1, col)];
    }
    // (p q' - q p')/2 - H with q' = H_p, p' = -H_q
    let lagr = (p * hp + q * hq) * 0.5 - h.eval_complex(q, p);
    dy[20] = lagr.re;
    dy[21] = lagr.im;
    let corr = (a + c) * 0.25;
    dy[22] = corr.re;
    dy[23] = corr.im;
    dy
}

fn rk4(h: &ScaledHamiltonian, y: &State, dt: f64) -> State {
    rk4_from(h, y, &rhs(h, y), dt)
}

// RK4 step with the first stage supplied, so that step doubling can share it.
fn rk4_from(h: &ScaledHamiltonian, y: &State, k1: &State, dt: f64) -> State {
    let k2 = rhs(h, &(y + k1 * (0.5 * dt)));
    let k3 = rhs(h, &(y + k2 * (0.5 * dt)));
    let k4 = rhs(h, &(y + k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn local_error(coarse: &State, fine: &State) -> f64 {
    coarse.iter().zip(fine.iter()).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max) / 15.0
}

fn wrap_phase(d: f64) -> f64 {
    // principal value of a phase difference, in (-pi, pi]
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

struct Integrator<'a> {
    h: &'a ScaledHamiltonian,
    ctrl: StepControl,
    z0: Complex64,
    v0: Complex64,
    y: State,
    t: f64,
    m_vv: Complex64,
    xi: f64,
    h1_0: f64,
    h2_0: f64,
    // max(1, |H1(0)|, |H2(0)|)
    h_scale: f64,
    h1_drift: f64,
    h2_drift: f64,
    max_xi_step: f64,
    max_sympl: f64,
    max_det: f64,
    substeps: usize,
    failure: Option<Failure>,
}

impl<'a> Integrator<'a> {
    fn new(h: &'a ScaledHamiltonian, x0: DoublePhasePoint, z0: Complex64, ctrl: StepControl) -> Self {
        let (h1_0, h2_0) = h.split_double(&x0);
        Self {
            h,
            ctrl,
            z0,
            v0: x0.to_complex().v(),
            y: pack(&x0, &Matrix4::identity()),
            t: 0.0,
            m_vv: Complex64::new(1.0, 0.0),
            xi: 0.0,
            h1_0,
            h2_0,
            h_scale: h1_0.abs().max(h2_0.abs()).max(1.0),
            h1_drift: 0.0,
            h2_drift: 0.0,
            max_xi_step: 0.0,
            max_sympl: 0.0,
            max_det: 0.0,
            substeps: 0,
            failure: if x0.is_finite() { None } else { Some(Failure::NonFinite) },
        }
    }

    /// Advances by one base step, subdividing as needed.
    fn base_step(&mut self, dt: f64) {
        let mut remaining = dt;
        let mut hstep = dt;
        let min_step = dt * 0.5f64.powi(self.ctrl.max_halvings as i32);
        while remaining > 0.0 {
            if hstep >= remaining * (1.0 - 1e-12) {
                hstep = remaining;
            }
            let (fine, err) = match self.ctrl.estimate {
                ErrorEstimate::Invariants => {
                    let next = rk4(self.h, &self.y, hstep);
                    let err = if next.iter().all(|v| v.is_finite()) { self.invariant_change(&next) } else { f64::NAN };
                    (next, err)
                }
                ErrorEstimate::StepDoubling => {
                    let k1 = rhs(self.h, &self.y);
                    let coarse = rk4_from(self.h, &self.y, &k1, hstep);
                    let mid = rk4_from(self.h, &self.y, &k1, 0.5 * hstep);
                    let fine = rk4(self.h, &mid, 0.5 * hstep);
                    (fine, local_error(&coarse, &fine))
                }
            };
            if !fine.iter().all(|v| v.is_finite()) {
                if hstep > min_step {
                    hstep *= 0.5;
                    continue;
                }
                self.failure = Some(Failure::NonFinite);
                return;
            }
            let new_mvv = m_vv_of(&tangent_of(&fine));
            let dxi = wrap_phase(new_mvv.arg() - self.m_vv.arg());
            if (err > self.ctrl.tol || dxi.abs() > FRAC_PI_2) && hstep > min_step {
                hstep *= 0.5;
                continue;
            }
            if err > self.ctrl.tol || !new_mvv.is_finite() {
                self.failure = Some(if new_mvv.is_finite() { Failure::StepUnderflow } else { Failure::NonFinite });
                return;
            }
            self.y = fine;
            self.xi += dxi;
            self.max_xi_step = self.max_xi_step.max(dxi.abs());
            self.m_vv = new_mvv;
            self.substeps += 1;
            remaining -= hstep;
            if err < self.ctrl.tol / 64.0 {
                hstep = (2.0 * hstep).min(dt);
            }
        }
    }

    // Relative to max(1, |H(0)|). Changes at the rounding level of the
    // individual terms of H cannot be reduced by shorter steps and pass.
    fn invariant_change(&self, next: &State) -> f64 {
        let a = point_of(&self.y);
        let b = point_of(next);
        let (a1, a2) = self.h.split_double(&a);
        let (b1, b2) = self.h.split_double(&b);
        let change = (b1 - a1).abs().max((b2 - a2).abs());
        let rounding = 4.0 * f64::EPSILON * self.h.term_magnitude(b.q(), b.p());
        if change <= rounding {
            0.0
        } else {
            change / self.h_scale
        }
    }

    fn monitor(&mut self) {
        let x = point_of(&self.y);
        let (h1, h2) = self.h.split_double(&x);
        self.h1_drift = self.h1_drift.max((h1 - self.h1_0).abs());
        self.h2_drift = self.h2_drift.max((h2 - self.h2_0).abs());
        if !(self.h1_drift.is_finite() && self.h2_drift.is_finite()) {
            self.failure = Some(Failure::NonFinite);
            return;
        }
        if self.h2_drift > self.ctrl.h2_cap {
            self.failure = Some(Failure::H2Drift);
        }
        let n = tangent_of(&self.y);
        let j = symplectic_j();
        let sympl = (n.transpose() * j * n - j).amax();
        let det = m_to_uv(&n_to_m(&n)).determinant();
        self.max_sympl = self.max_sympl.max(sympl);
        self.max_det = self.max_det.max((det - 1.0).norm());
    }

    fn uv(&self) -> (Complex64, Complex64) {
        let cp = point_of(&self.y).to_complex();
        (cp.u(), cp.v())
    }

    fn full_action(&self) -> Complex64 {
        let (u, v) = self.uv();
        dyn_action_of(&self.y) - I * 0.5 * (u * v + self.z0 * self.v0)
    }

    fn sample(&self) -> PathSample {
        let x = point_of(&self.y);
        let (h1, h2) = self.h.split_double(&x);
        PathSample { t: self.t, x, action: self.full_action(), m_vv: self.m_vv, xi: self.xi, h1, h2 }
    }

    fn finish(self, launch: LaunchParams, start: DoublePhasePoint) -> TrajectoryRecord {
        let x = point_of(&self.y);
        let n = tangent_of(&self.y);
        let m = n_to_m(&n);
        TrajectoryRecord {
            launch,
            start,
            end_double: x,
            end: x.to_complex(),
            action: self.full_action(),
            correction: correction_of(&self.y),
            n,
            m,
            big_m: m_to_uv(&m),
            xi: self.xi,
            h1_initial: self.h1_0,
            h2_initial: self.h2_0,
            h1_drift: self.h1_drift,
            h2_drift: self.h2_drift,
            max_xi_step: self.max_xi_step,
            max_symplectic_error: self.max_sympl,
            max_det_error: self.max_det,
            substeps: self.substeps,
            failure: self.failure,
        }
    }
}

/// Number of base steps and their length for total time `t`.
pub fn step_grid(t: f64, dt: f64) -> (usize, f64) {
    if t == 0.0 {
        return (0, 0.0);
    }
    let n = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, t / n as f64)
}

/// Propagates the trajectory defined by `lp` with default step control.
pub fn evolve(h: &ScaledHamiltonian, lp: &LaunchParams) -> TrajectoryRecord {
    evolve_with(h, lp, StepControl::default(), |_| {})
}

/// Propagates `lp`, calling `observer` at `t = 0` and after every base step.
pub fn evolve_with(
    h: &ScaledHamiltonian,
    lp: &LaunchParams,
    ctrl: StepControl,
    mut observer: impl FnMut(&PathSample),
) -> TrajectoryRecord {
    let x0 = initial_conditions(lp);
    let mut it = Integrator::new(h, x0, lp.label().z(), ctrl);
    observer(&it.sample());
    let (steps, dt) = step_grid(lp.t, lp.dt);
    for k in 0..steps {
        if it.failure.is_some() {
            break;
        }
        it.base_step(dt);
        it.t = (k + 1) as f64 * dt;
        if it.failure.is_none() {
            it.monitor();
        }
        observer(&it.sample());
    }
    it.finish(*lp, x0)
}

fn flow_endpoint(h: &ScaledHamiltonian, x0: DoublePhasePoint, t: f64, dt: f64) -> DoublePhasePoint {
    let mut it = Integrator::new(h, x0, Complex64::new(0.0, 0.0), StepControl::default());
    let (steps, dt) = step_grid(t, dt);
    for _ in 0..steps {
        it.base_step(dt);
        if it.failure.is_some() {
            break;
        }
    }
    point_of(&it.y)
}

/// Tangent matrix by central differences of the flow map, `eps` in `[1e-7, 1e-3]`.
pub fn finite_diff_tangent(h: &ScaledHamiltonian, lp: &LaunchParams, eps: f64) -> Result<Matrix4<f64>> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(CivrError::param("eps", format!("must lie in [1e-7, 1e-3], got {eps}")));
    }
    let x0 = initial_conditions(lp);
    let mut n = Matrix4::zeros();
    for k in 0..4 {
        let mut plus = x0;
        let mut minus = x0;
        plus.0[k] += eps;
        minus.0[k] -= eps;
        let a = flow_endpoint(h, plus, lp.t, lp.dt);
        let b = flow_endpoint(h, minus, lp.t, lp.dt);
        for r in 0..4 {
            n[(r, k)] = (a.0[r] - b.0[r]) / (2.0 * eps);
        }
    }
    Ok(n)
}

/// `v` of a companion point, `(q1 - i p1)/sqrt(2)`.
pub fn companion_v(q1: f64, p1: f64) -> Complex64 {
    Complex64::new(q1, -p1) * FRAC_1_SQRT_2
}
