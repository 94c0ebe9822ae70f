//! CSV writers for propagators, wavefunctions, contribution maps and trajectories.
//!
//! Numbers are written with the shortest representation that round-trips,
//! so identical data always produces identical bytes. Coordinates are
//! converted back to unscaled units with the supplied [`UnitScaling`].

use std::io::Write;

use crate::domain::UnitScaling;
use crate::error::Result;
use crate::propagator::{ContributionMap, PropagatorGrid};
use crate::reconstruct::WavefunctionGrid;
use crate::trajectory::PathSample;

/// Columns `qf, pf, re_k, im_k`.
pub fn write_propagator(w: &mut impl Write, k: &PropagatorGrid, s: &UnitScaling) -> Result<()> {
    writeln!(w, "qf,pf,re_k,im_k")?;
    for (z, v) in k.grid.labels().zip(&k.k) {
        let (q, p) = s.unscale(z.q, z.p);
        writeln!(w, "{q},{p},{},{}", v.re, v.im)?;
    }
    Ok(())
}

/// Columns `x, re_psi, im_psi, abs2`. `psi` is rescaled by `b^{-1/2}`.
pub fn write_wavefunction(w: &mut impl Write, psi: &WavefunctionGrid, s: &UnitScaling) -> Result<()> {
    writeln!(w, "x,re_psi,im_psi,abs2")?;
    let f = 1.0 / s.b.sqrt();
    for (x, c) in psi.grid.points().zip(&psi.psi) {
        let c = c * f;
        writeln!(w, "{},{},{},{}", s.unscale_q(x), c.re, c.im, c.norm_sqr())?;
    }
    Ok(())
}

/// Columns `q1, p1, accepted, re_phi`.
pub fn write_contribution_map(w: &mut impl Write, map: &ContributionMap, s: &UnitScaling) -> Result<()> {
    writeln!(w, "q1,p1,accepted,re_phi")?;
    for ((z, a), r) in map.grid.labels().zip(&map.accepted).zip(&map.re_phi) {
        let (q, p) = s.unscale(z.q, z.p);
        writeln!(w, "{q},{p},{},{r}", u8::from(*a))?;
    }
    Ok(())
}

/// Columns `t, Q1, Q2, P1, P2, re_s, im_s, re_mvv, im_mvv, xi` in scaled units.
pub fn write_path(w: &mut impl Write, samples: &[PathSample]) -> Result<()> {
    writeln!(w, "t,Q1,Q2,P1,P2,re_s,im_s,re_mvv,im_mvv,xi")?;
    for s in samples {
        let [a, b, c, d] = s.x.0;
        writeln!(w, "{},{a},{b},{c},{d},{},{},{},{},{}", s.t, s.action.re, s.action.im, s.m_vv.re, s.m_vv.im, s.xi)?;
    }
    Ok(())
}
