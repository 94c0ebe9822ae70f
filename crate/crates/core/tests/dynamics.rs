//! Trajectory invariants on the quartic oscillator and the harmonic closed forms.

use civr_core::hamiltonian::build_scaled;
use civr_core::propagator::lambda_check;
use civr_core::trajectory::{evolve_with, finite_diff_tangent, PathSample};
use civr_core::{CoherentLabel, Complex64, LaunchParams, QuarticSpec, ScaledHamiltonian, StepControl};
use proptest::prelude::*;

fn z0() -> CoherentLabel {
    CoherentLabel::new(0.0, -2.0)
}

fn quartic() -> ScaledHamiltonian {
    build_scaled(&QuarticSpec::reference_quartic()).unwrap()
}

fn path(h: &ScaledHamiltonian, lp: &LaunchParams) -> Vec<PathSample> {
    let mut out = Vec::new();
    evolve_with(h, lp, StepControl::default(), |s| out.push(*s));
    out
}

/// Times at which `Q1` crosses zero upwards, linearly interpolated.
fn upward_crossings(samples: &[PathSample]) -> Vec<f64> {
    samples
        .windows(2)
        .filter(|w| w[0].x.q1() < 0.0 && w[1].x.q1() >= 0.0)
        .map(|w| {
            let (a, b) = (w[0].x.q1(), w[1].x.q1());
            w[0].t + (w[1].t - w[0].t) * (-a) / (b - a)
        })
        .collect()
}

#[test]
fn central_quartic_period_and_turning_points() {
    // The quoted period and turning points belong to the classical symbol without ordering corrections.
    let samples = path(&quartic().bare(), &LaunchParams::central(z0(), 12.0, 1e-3));
    let ups = upward_crossings(&samples);
    assert!(ups.len() >= 2);
    let period = ups[1] - ups[0];
    assert!((period - 4.7).abs() < 0.05, "period {period}");
    let q_max = samples.iter().map(|s| s.x.q1()).fold(f64::NEG_INFINITY, f64::max);
    let q_min = samples.iter().map(|s| s.x.q1()).fold(f64::INFINITY, f64::min);
    // Root of 0.5 x^2 + 0.1 x^4 = 2.
    let root = ((-0.5 + (0.25f64 + 0.8).sqrt()) / 0.2).sqrt();
    assert!((q_max - root).abs() < 0.02 && (q_min + root).abs() < 0.02, "{q_min} {q_max} {root}");
}

#[test]
fn harmonic_central_trajectory_closed_form() {
    let h = build_scaled(&QuarticSpec::harmonic()).unwrap();
    for t in [0.3, 2.0, 7.5] {
        let rec = evolve_with(&h, &LaunchParams::central(z0(), t, 1e-3), StepControl::default(), |_| {});
        let rot = Complex64::from_polar(1.0, -t);
        assert!((rec.u_end() - z0().z() * rot).norm() < 1e-10);
        assert!((rec.v_end() - z0().z_conj() / rot).norm() < 1e-10);
        assert!((rec.m_vv() - 1.0 / rot).norm() < 1e-10);
        assert!((rec.xi - t).abs() < 1e-10);
        assert!((rec.correction - t / 2.0).norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Launches near the packet stay in the region where double precision
    // resolves the invariants at the 1e-8 level.
    #[test]
    fn quartic_invariants_near_the_packet(dq in -1.0..1.0f64, dp in -1.0..1.0f64, t in 0.5..8.5f64) {
        let h = quartic();
        let lp = LaunchParams::new(z0(), dq, -2.0 + dp, t, 1e-3);
        let rec = evolve_with(&h, &lp, StepControl::default(), |_| {});
        prop_assert!(rec.is_valid());
        prop_assert!(rec.h1_relative_drift() < 1e-8, "H1 {}", rec.h1_relative_drift());
        prop_assert!(rec.h2_relative_drift() < 1e-8, "H2 {}", rec.h2_relative_drift());
        prop_assert!(rec.max_symplectic_error < 1e-8);
        prop_assert!(rec.max_det_error < 1e-8);
        prop_assert!(rec.max_xi_step < std::f64::consts::PI);
        let ph = Complex64::from_polar(1.0, rec.xi);
        prop_assert!((ph - rec.m_vv() / rec.m_vv().norm()).norm() < 1e-8);
        let l = lambda_check(&h, &rec, 1e-6);
        prop_assert!(l.relative_error() < 1e-5, "Lambda {}", l.relative_error());
    }

    #[test]
    fn tangent_matches_finite_differences(dq in -1.0..1.0f64, dp in -1.0..1.0f64, t in 0.5..3.0f64) {
        let h = quartic();
        let lp = LaunchParams::new(z0(), dq, -2.0 + dp, t, 1e-3);
        let rec = evolve_with(&h, &lp, StepControl::default(), |_| {});
        let fd = finite_diff_tangent(&h, &lp, 1e-5).unwrap();
        let rel = (fd - rec.n).amax() / rec.n.amax().max(1.0);
        prop_assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn real_launches_stay_real(q0 in -1.5..1.5f64, p0 in -2.5..2.5f64) {
        let z = CoherentLabel::new(q0, p0);
        let samples = path(&quartic(), &LaunchParams::central(z, 8.5, 1e-3));
        let worst = samples.iter().map(|s| s.x.q2().abs().max(s.x.p2().abs())).fold(0.0, f64::max);
        prop_assert!(worst < 1e-12, "{worst}");
    }
}

#[test]
fn ordering_corrections_shorten_the_period() {
    let ups = upward_crossings(&path(&quartic(), &LaunchParams::central(z0(), 12.0, 1e-3)));
    let period = ups[1] - ups[0];
    assert!(period < 4.5, "period {period}");
}
