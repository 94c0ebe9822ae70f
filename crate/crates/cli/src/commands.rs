//! Subcommand implementations. Every command writes into an output directory
//! and returns a [`RunError`] that maps onto the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use civr_core::io::{write_contribution_map, write_path, write_propagator, write_wavefunction};
use civr_core::oracle::{eigen_energies, split_operator_evolve};
use civr_core::propagator::{assemble, contribution_map, EnsembleStats, PropagatorGrid};
use civr_core::reconstruct::{fidelity, reconstruct};
use civr_core::trajectory::evolve_with;
use civr_core::{CivrError, LaunchParams, ScaledHamiltonian, TrajectoryEnsemble, WavefunctionGrid};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CivrError> for RunError {
    fn from(e: CivrError) -> Self {
        match e {
            CivrError::InvalidParameter { .. } | CivrError::GridMismatch(_) => {
                RunError::Config(ConfigError { message: e.to_string(), line: None })
            }
            CivrError::Io(io) => RunError::Io(io),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io(e.into())
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Per-time summary shared by the manifests of all commands.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSummary {
    pub t: f64,
    pub a: f64,
    pub c: f64,
    pub ensemble: EnsembleStats,
    pub accepted_trajectories: usize,
    pub rejected_trajectories: usize,
    pub unusable_trajectories: usize,
    pub accepted_pairs: u64,
    pub rejected_pairs: u64,
    pub empty: bool,
    /// Accepted launch nodes over all launch nodes.
    pub accepted_fraction: f64,
    /// Norm of the reconstructed wavefunction before any renormalisation.
    pub norm: f64,
    pub files: Vec<String>,
}

/// Output of one CIVR propagation at one time.
pub struct CivrRun {
    pub ensemble: TrajectoryEnsemble,
    pub k: PropagatorGrid,
    /// Reconstructed wavefunction, renormalised if the config asks for it.
    pub psi: WavefunctionGrid,
    pub raw_norm: f64,
}

fn hamiltonian(cfg: &RunConfig) -> RunResult<ScaledHamiltonian> {
    Ok(ScaledHamiltonian::new(&cfg.spec())?)
}

/// Propagates the trajectory ensemble for time `t`, enforcing the invalid-fraction cap.
pub fn ensemble(cfg: &RunConfig, h: &ScaledHamiltonian, t: f64) -> RunResult<TrajectoryEnsemble> {
    let ens = TrajectoryEnsemble::evolve(h, cfg.z0(), cfg.grid1(), t, cfg.run.dt, cfg.integrator)?;
    let frac = ens.invalid_count() as f64 / ens.records.len() as f64;
    if frac > cfg.run.max_invalid_fraction {
        return Err(RunError::Numerical(format!(
            "T={t}: {} of {} trajectories invalid (H2 drift cap {:e} or integration failure), above the allowed fraction {}",
            ens.invalid_count(),
            ens.records.len(),
            cfg.integrator.h2_cap,
            cfg.run.max_invalid_fraction
        )));
    }
    Ok(ens)
}

/// Assembles `K` from an ensemble and reconstructs the wavefunction.
pub fn civr_from_ensemble(cfg: &RunConfig, ensemble: TrajectoryEnsemble, i: usize, a: f64) -> RunResult<CivrRun> {
    let k = assemble(&ensemble, &cfg.params(i, a), &cfg.labels())?;
    let mut psi = reconstruct(&k, &cfg.x_grid());
    let raw_norm = psi.norm;
    if cfg.run.renormalize {
        psi.renormalize()?;
    }
    Ok(CivrRun { ensemble, k, psi, raw_norm })
}

pub fn civr_at(cfg: &RunConfig, h: &ScaledHamiltonian, i: usize, a: f64) -> RunResult<CivrRun> {
    let t = cfg.run.times[i];
    civr_from_ensemble(cfg, ensemble(cfg, h, t)?, i, a)
}

/// Split-operator reference state at time `t` on the configured position grid.
pub fn oracle_at(cfg: &RunConfig, t: f64) -> RunResult<WavefunctionGrid> {
    let split = cfg.split_op(t);
    let psi0 = WavefunctionGrid::coherent(split.grid(), cfg.z0());
    Ok(split_operator_evolve(&cfg.spec(), &psi0, &split)?)
}

fn create(dir: &Path, name: &str) -> RunResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> RunResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// File-name tag for a time: `T1`, `T8.5`.
pub fn time_tag(t: f64) -> String {
    format!("T{t}")
}

fn manifest(cfg: &RunConfig, command: &str, h: &ScaledHamiltonian, body: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "scaled_hamiltonian": {
            "omega": h.omega,
            "nu": h.nu,
            "lambda_bar": h.lambda_bar,
            "nu_bar_sq": h.nu_bar_sq,
            "const_term": h.const_term,
        },
        "results": body,
    })
}

fn warn_if_no_times(cfg: &RunConfig) -> bool {
    if cfg.run.times.is_empty() {
        eprintln!("warning: run.times is empty, nothing to do");
        return true;
    }
    false
}

fn write_trajectory_summary(dir: &Path, name: &str, ens: &TrajectoryEnsemble, cfg: &RunConfig) -> RunResult<()> {
    let s = cfg.scaling();
    let mut w = create(dir, name)?;
    writeln!(w, "q1,p1,valid,failure,re_mvv,im_mvv,xi,h1_drift,h2_drift,substeps")?;
    for (z, r) in ens.grid.labels().zip(&ens.records) {
        let (q, p) = s.unscale(z.q, z.p);
        let failure = r.failure.map_or(String::new(), |f| format!("{f:?}"));
        let m = r.m_vv();
        writeln!(
            w,
            "{q},{p},{},{failure},{},{},{},{},{},{}",
            u8::from(r.is_valid()),
            m.re,
            m.im,
            r.xi,
            r.h1_drift,
            r.h2_drift,
            r.substeps
        )?;
    }
    w.flush()?;
    Ok(())
}

fn summary(run: &CivrRun, t: f64, a: f64, c: f64, files: Vec<String>) -> TimeSummary {
    let k = &run.k;
    TimeSummary {
        t,
        a,
        c,
        ensemble: run.ensemble.stats(),
        accepted_trajectories: k.accepted_trajectories,
        rejected_trajectories: k.rejected_trajectories,
        unusable_trajectories: k.unusable_trajectories,
        accepted_pairs: k.accepted_pairs,
        rejected_pairs: k.rejected_pairs,
        empty: k.empty,
        accepted_fraction: k.accepted_trajectories as f64 / run.ensemble.records.len() as f64,
        norm: run.raw_norm,
        files,
    }
}

/// Propagator, wavefunction and contribution-map CSVs for every time, plus `manifest.json`.
pub fn propagate(cfg: &RunConfig, out: &Path) -> RunResult<Vec<TimeSummary>> {
    if warn_if_no_times(cfg) {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out)?;
    let h = hamiltonian(cfg)?;
    let s = cfg.scaling();
    let mut summaries = Vec::new();
    for (i, &t) in cfg.run.times.iter().enumerate() {
        let (a, c) = (cfg.civr.a.get(i), cfg.civr.c.get(i));
        let run = civr_at(cfg, &h, i, a)?;
        let tag = time_tag(t);
        let mut files = vec![
            format!("propagator_{tag}.csv"),
            format!("wavefunction_{tag}.csv"),
            format!("contributions_{tag}.csv"),
        ];

        let mut w = create(out, &files[0])?;
        write_propagator(&mut w, &run.k, &s)?;
        w.flush()?;
        let mut w = create(out, &files[1])?;
        write_wavefunction(&mut w, &run.psi, &s)?;
        w.flush()?;
        let mut w = create(out, &files[2])?;
        write_contribution_map(&mut w, &contribution_map(&run.ensemble, c), &s)?;
        w.flush()?;
        if cfg.run.dump_trajectories {
            let name = format!("trajectories_{tag}.csv");
            write_trajectory_summary(out, &name, &run.ensemble, cfg)?;
            files.push(name);
        }
        summaries.push(summary(&run, t, a, c, files));
    }
    write_json(out, "manifest.json", &manifest(cfg, "propagate", &h, json!(summaries)))?;
    Ok(summaries)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareEntry {
    pub t: f64,
    pub a: f64,
    pub c: f64,
    pub fidelity: f64,
    /// CIVR norm before renormalisation.
    pub norm: f64,
    pub oracle_norm: f64,
    pub accepted_fraction: f64,
    pub accepted_trajectories: usize,
    pub invalid_trajectories: usize,
}

/// CIVR versus the split-operator oracle: `compare.json`, both wavefunctions per time, and a manifest.
pub fn compare(cfg: &RunConfig, out: &Path) -> RunResult<Vec<CompareEntry>> {
    if warn_if_no_times(cfg) {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out)?;
    let h = hamiltonian(cfg)?;
    let s = cfg.scaling();
    let mut entries = Vec::new();
    let mut summaries = Vec::new();
    for (i, &t) in cfg.run.times.iter().enumerate() {
        let (a, c) = (cfg.civr.a.get(i), cfg.civr.c.get(i));
        let run = civr_at(cfg, &h, i, a)?;
        let exact = oracle_at(cfg, t)?;
        let f = fidelity(&run.psi, &exact)?;
        let tag = time_tag(t);
        let files = vec![format!("wavefunction_{tag}.csv"), format!("oracle_{tag}.csv")];
        let mut w = create(out, &files[0])?;
        write_wavefunction(&mut w, &run.psi, &s)?;
        w.flush()?;
        let mut w = create(out, &files[1])?;
        write_wavefunction(&mut w, &exact, &s)?;
        w.flush()?;
        let sm = summary(&run, t, a, c, files);
        entries.push(CompareEntry {
            t,
            a,
            c,
            fidelity: f,
            norm: run.raw_norm,
            oracle_norm: exact.norm,
            accepted_fraction: sm.accepted_fraction,
            accepted_trajectories: sm.accepted_trajectories,
            invalid_trajectories: sm.ensemble.invalid,
        });
        summaries.push(sm);
    }
    write_json(out, "compare.json", &entries)?;
    write_json(out, "manifest.json", &manifest(cfg, "compare", &h, json!(summaries)))?;
    Ok(entries)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub t: f64,
    pub a: f64,
    pub fidelity: f64,
    pub norm: f64,
    pub best: bool,
}

/// Fidelity against the oracle over the configured width range, for every time.
/// Writes `scan_width.csv` with the best width of each time marked.
pub fn scan_width(cfg: &RunConfig, out: &Path) -> RunResult<Vec<ScanRow>> {
    if warn_if_no_times(cfg) {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out)?;
    let h = hamiltonian(cfg)?;
    let widths = cfg.civr.scan.values();
    let mut rows = Vec::new();
    for (i, &t) in cfg.run.times.iter().enumerate() {
        let ens = ensemble(cfg, &h, t)?;
        let exact = oracle_at(cfg, t)?;
        let first = rows.len();
        for &a in &widths {
            let k = assemble(&ens, &cfg.params(i, a), &cfg.labels())?;
            let psi = reconstruct(&k, &cfg.x_grid());
            // A width that leaves nothing accepted scores zero instead of aborting the scan.
            let f = if psi.norm > 0.0 { fidelity(&psi, &exact)? } else { 0.0 };
            rows.push(ScanRow { t, a, fidelity: f, norm: psi.norm, best: false });
        }
        let best = (first..rows.len()).fold(first, |b, r| if rows[r].fidelity > rows[b].fidelity { r } else { b });
        rows[best].best = true;
    }
    let mut w = create(out, "scan_width.csv")?;
    writeln!(w, "t,a,fidelity,norm,best")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.t, r.a, r.fidelity, r.norm, u8::from(r.best))?;
    }
    w.flush()?;
    write_json(out, "manifest.json", &manifest(cfg, "scan-width", &h, json!(rows)))?;
    Ok(rows)
}

/// Full paths of single trajectories. `launches` are unscaled companion
/// points; when empty the central trajectory `(q1, p1) = (q0, p0)` is used.
pub fn trajectories(cfg: &RunConfig, launches: &[(f64, f64)], out: &Path) -> RunResult<Vec<PathBuf>> {
    if warn_if_no_times(cfg) {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out)?;
    let h = hamiltonian(cfg)?;
    let s = cfg.scaling();
    let central = [(cfg.initial.q0, cfg.initial.p0)];
    let launches = if launches.is_empty() { &central[..] } else { launches };
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for &t in &cfg.run.times {
        for &(q1, p1) in launches {
            let (sq, sp) = s.scale(q1, p1);
            let lp = LaunchParams::new(cfg.z0(), sq, sp, t, cfg.run.dt);
            lp.validate()?;
            let mut samples = Vec::new();
            let rec = evolve_with(&h, &lp, cfg.integrator, |x| samples.push(*x));
            let name = format!("path_{}_q{q1}_p{p1}.csv", time_tag(t));
            let mut w = create(out, &name)?;
            write_path(&mut w, &samples)?;
            w.flush()?;
            summary.push(json!({
                "t": t,
                "q1": q1,
                "p1": p1,
                "file": name,
                "valid": rec.is_valid(),
                "failure": rec.failure.map(|f| format!("{f:?}")),
                "h1_drift": rec.h1_drift,
                "h2_drift": rec.h2_drift,
                "max_symplectic_error": rec.max_symplectic_error,
                "max_det_error": rec.max_det_error,
                "max_xi_step": rec.max_xi_step,
                "substeps": rec.substeps,
            }));
            written.push(out.join(name));
        }
    }
    write_json(out, "manifest.json", &manifest(cfg, "trajectories", &h, json!(summary)))?;
    Ok(written)
}

/// Lowest eigenvalues of the quartic Hamiltonian, written to `eigen.json`.
pub fn eigen(cfg: &RunConfig, out: &Path) -> RunResult<Vec<f64>> {
    std::fs::create_dir_all(out)?;
    let h = hamiltonian(cfg)?;
    let energies = eigen_energies(&cfg.spec(), cfg.eigen.states, &cfg.eigen_config())?;
    write_json(out, "eigen.json", &json!({ "energies": energies }))?;
    write_json(out, "manifest.json", &manifest(cfg, "eigen", &h, json!({ "energies": energies })))?;
    Ok(energies)
}
