//! Phase-space to position-space reconstruction, end to end.

use civr_core::hamiltonian::build_scaled;
use civr_core::oracle::harmonic_exact_k;
use civr_core::propagator::smooth_k;
use civr_core::reconstruct::{fidelity, reconstruct};
use civr_core::{
    CivrParams, CoherentLabel, Complex64, LabelGrid, PropagatorGrid, QuarticSpec, StepControl, WavefunctionGrid, XGrid,
};

fn z0() -> CoherentLabel {
    CoherentLabel::new(0.0, -2.0)
}

fn x_grid() -> XGrid {
    XGrid::closed(-8.0, 8.0, 401)
}

/// A propagator grid holding the exact harmonic kernel.
fn exact_grid(labels: LabelGrid, t: f64) -> PropagatorGrid {
    PropagatorGrid {
        grid: labels,
        k: labels.labels().map(|zf| harmonic_exact_k(z0(), zf, t)).collect(),
        t,
        params: CivrParams::smooth(1.0, f64::INFINITY),
        accepted_trajectories: 0,
        rejected_trajectories: 0,
        unusable_trajectories: 0,
        accepted_pairs: 0,
        rejected_pairs: 0,
        empty: false,
    }
}

/// `e^{-iHT}|z0>` for the harmonic oscillator.
fn evolved_coherent(t: f64) -> WavefunctionGrid {
    let z = CoherentLabel::from_z(z0().z() * Complex64::from_polar(1.0, -t));
    let phase = Complex64::from_polar(1.0, -t / 2.0);
    let mut psi = WavefunctionGrid::coherent(x_grid(), z);
    psi.psi.iter_mut().for_each(|c| *c *= phase);
    psi
}

/// The default 40 x 60 label grid centred on the classical packet centre at `t`,
/// so that it encloses the evolved packet.
fn packet_labels(t: f64) -> LabelGrid {
    let z = CoherentLabel::from_z(z0().z() * Complex64::from_polar(1.0, -t));
    LabelGrid::default_labels().shifted(z.q, z.p)
}

fn companion_grid() -> LabelGrid {
    LabelGrid::new(-8.0, 8.0, 30, -10.0, 6.0, 40)
}

#[test]
fn zero_time_overlap_kernel_rebuilds_initial_state() {
    let psi = reconstruct(&exact_grid(LabelGrid::default_labels(), 0.0), &x_grid());
    let err = psi.max_abs_diff(&WavefunctionGrid::coherent(x_grid(), z0())).unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn zero_time_civr_rebuilds_initial_state() {
    let h = build_scaled(&QuarticSpec::harmonic()).unwrap();
    let k = smooth_k(&h, z0(), 1.0, 1e-9, companion_grid(), &LabelGrid::default_labels(), 0.0, 1e-3).unwrap();
    let psi = reconstruct(&k, &x_grid());
    let err = psi.max_abs_diff(&WavefunctionGrid::coherent(x_grid(), z0())).unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn harmonic_civr_matches_evolved_coherent_state() {
    let h = build_scaled(&QuarticSpec::harmonic()).unwrap();
    for t in [0.5, 1.0, 2.5, 6.0] {
        let k = smooth_k(&h, z0(), 1.0, 1e-9, companion_grid(), &packet_labels(t), t, 1e-3).unwrap();
        let psi = reconstruct(&k, &x_grid());
        let exact = evolved_coherent(t);
        let err = psi.max_abs_diff(&exact).unwrap();
        assert!(err < 1e-3, "T={t}: {err}");
        assert!(fidelity(&psi, &exact).unwrap() > 1.0 - 1e-3);
    }
}

#[test]
fn label_grid_refinement_barely_changes_psi() {
    let coarse = packet_labels(0.0);
    let fine = coarse.refined(2);
    let a = reconstruct(&exact_grid(coarse, 0.0), &x_grid());
    let b = reconstruct(&exact_grid(fine, 0.0), &x_grid());
    let diff = a.max_abs_diff(&b).unwrap();
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn reconstruction_is_linear_in_k() {
    let mut k = exact_grid(LabelGrid::default_labels(), 1.0);
    let a = reconstruct(&k, &x_grid());
    k.k.iter_mut().for_each(|v| *v *= Complex64::new(0.0, 2.0));
    let b = reconstruct(&k, &x_grid());
    for (x, y) in a.psi.iter().zip(&b.psi) {
        assert!((x * Complex64::new(0.0, 2.0) - y).norm() < 1e-14);
    }
}

#[test]
fn all_zero_kernel_gives_zero_state() {
    let mut k = exact_grid(LabelGrid::default_labels(), 0.0);
    k.k.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let mut psi = reconstruct(&k, &x_grid());
    assert_eq!(psi.norm, 0.0);
    assert!(psi.renormalize().is_err());
}

#[test]
fn default_step_control_is_used_by_smooth_k() {
    // The convenience entry point and an explicit default step control agree exactly.
    let h = build_scaled(&QuarticSpec::reference_quartic()).unwrap();
    let grid = LabelGrid::new(-1.0, 1.0, 4, -3.0, -1.0, 4);
    let labels = LabelGrid::new(-2.0, 2.0, 5, -4.0, 0.0, 5);
    let a = smooth_k(&h, z0(), 1.5, 2.5, grid, &labels, 1.0, 1e-3).unwrap();
    let ens = civr_core::TrajectoryEnsemble::evolve(&h, z0(), grid, 1.0, 1e-3, StepControl::default()).unwrap();
    let b = civr_core::propagator::assemble(&ens, &CivrParams::smooth(1.5, 2.5), &labels).unwrap();
    assert_eq!(a.k, b.k);
}
