//! Parallel evaluation of (γ, M) maps.
//!
//! Every cell fixes ħω and v_F, derives Δ = M·ħω and E0 = ωΔ/(2 v_F e γ),
//! and propagates either a single electron at k0 = 0 (population map) or a
//! full k0 grid (current map). Cells are independent; results are assembled
//! by cell index so the output does not depend on scheduling.

mod checkpoint;
mod iso;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::constants::Constants;
use crate::error::{invalid, Error, Result};
use crate::model::{compute_report_with, DriveParams, Regime, RegimeThresholds};
use crate::observables::{converged_current, propagation_grid, KWindowPolicy};
use crate::propagator::{residual_population, DEFAULT_TOL};
use crate::pulse::{bloch_trajectory, PulseSpec};

use checkpoint::read_checkpoint;
pub use checkpoint::{CheckpointWriter, FORMAT_VERSION, HEADER_LEN, MAGIC, RECORD_LEN, REASON_LEN};
pub use iso::{integrate_iso_field, iso_gamma, IsoFieldPoint};

/// One sampled axis of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub log: bool,
}

impl Axis {
    pub fn linear(count: usize, min: f64, max: f64) -> Self {
        Axis { count, min, max, log: false }
    }

    pub fn logarithmic(count: usize, min: f64, max: f64) -> Self {
        Axis { count, min, max, log: true }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if self.count == 0 {
            return Err(invalid(name, "needs at least one sample"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min > 0.0 && self.max >= self.min) {
            return Err(invalid(
                name,
                format!("range must satisfy 0 < min ≤ max, got [{}, {}]", self.min, self.max),
            ));
        }
        if self.count > 1 && self.max == self.min {
            return Err(invalid(name, "several samples need max > min"));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 || i == 0 {
            return self.min;
        }
        if i == self.count - 1 {
            return self.max;
        }
        let s = i as f64 / (self.count - 1) as f64;
        if self.log {
            (self.min.ln() + s * (self.max.ln() - self.min.ln())).exp()
        } else {
            self.min + s * (self.max - self.min)
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Pulse shape shared by every cell; amplitude and gap follow from (γ, M).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTemplate {
    /// fs.
    pub duration: f64,
    pub cep: f64,
    /// fs².
    pub gdd: f64,
    /// fs³.
    pub tod: f64,
}

impl Default for PulseTemplate {
    fn default() -> Self {
        PulseTemplate {
            duration: 5.0,
            cep: std::f64::consts::FRAC_PI_2,
            gdd: 0.0,
            tod: 0.0,
        }
    }
}

/// Map definition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Rows, log-spaced.
    pub gamma_axis: Axis,
    /// Columns, linear.
    pub m_axis: Axis,
    /// eV.
    pub photon_energy: f64,
    /// nm/fs.
    pub fermi_velocity: f64,
    pub pulse: PulseTemplate,
    pub k_policy: KWindowPolicy,
    pub thresholds: RegimeThresholds,
    pub tol: f64,
}

impl GridSpec {
    /// γ ∈ [0.1, 10] (log) by M ∈ [0.2, 3.2] (linear), ħω = 1.55 eV, v_F = 1 nm/fs.
    pub fn square(count: usize) -> Self {
        GridSpec {
            gamma_axis: Axis::logarithmic(count, 0.1, 10.0),
            m_axis: Axis::linear(count, 0.2, 3.2),
            photon_energy: 1.55,
            fermi_velocity: 1.0,
            pulse: PulseTemplate::default(),
            k_policy: KWindowPolicy::default(),
            thresholds: RegimeThresholds::default(),
            tol: DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gamma_axis.validate("gamma_axis")?;
        self.m_axis.validate("m_axis")?;
        if !self.gamma_axis.log {
            return Err(invalid("gamma_axis", "must be log-spaced"));
        }
        if self.m_axis.log {
            return Err(invalid("m_axis", "must be linear"));
        }
        for (name, v) in [
            ("photon_energy", self.photon_energy),
            ("fermi_velocity", self.fermi_velocity),
            ("duration", self.pulse.duration),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("cep", self.pulse.cep), ("gdd", self.pulse.gdd), ("tod", self.pulse.tod)] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(invalid("tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        self.k_policy.validate()
    }

    pub fn cell_count(&self) -> usize {
        self.gamma_axis.count * self.m_axis.count
    }

    /// Row-major: `index = i_gamma · m_count + i_m`.
    pub fn coordinates(&self, index: usize) -> (f64, f64) {
        let (row, col) = (index / self.m_axis.count, index % self.m_axis.count);
        (self.gamma_axis.value(row), self.m_axis.value(col))
    }

    /// Material, drive and pulse of one cell.
    pub fn cell_pulse(&self, gamma: f64, m_photon: f64) -> Result<(crate::MaterialSpec, DriveParams, PulseSpec)> {
        let (mat, drive) = DriveParams::from_dimensionless(gamma, m_photon, self.photon_energy, self.fermi_velocity)?;
        let spec = PulseSpec::new(self.photon_energy, drive.peak_field, self.pulse.duration, self.pulse.cep)?
            .with_dispersion(self.pulse.gdd, self.pulse.tod);
        Ok((mat, drive, spec))
    }

    /// Every input that influences cell results, one `key = value` per line.
    /// Floats use the shortest representation that round-trips.
    pub fn canonical(&self, kind: MapKind) -> String {
        let mut s = String::new();
        let g = &self.gamma_axis;
        let m = &self.m_axis;
        let k = &self.k_policy;
        let t = &self.thresholds;
        let _ = writeln!(s, "kind = {}", kind.as_str());
        let _ = writeln!(s, "gamma = {} {:?} {:?} log", g.count, g.min, g.max);
        let _ = writeln!(s, "M = {} {:?} {:?} linear", m.count, m.min, m.max);
        let _ = writeln!(s, "photon_energy = {:?}", self.photon_energy);
        let _ = writeln!(s, "fermi_velocity = {:?}", self.fermi_velocity);
        let _ = writeln!(
            s,
            "pulse = {:?} {:?} {:?} {:?}",
            self.pulse.duration, self.pulse.cep, self.pulse.gdd, self.pulse.tod
        );
        let _ = writeln!(
            s,
            "k_policy = {:?} {:?} {} {:?} {} {:?} {} {:?}",
            k.scale,
            k.margin,
            k.points,
            k.extension_factor,
            k.max_extensions,
            k.refine_tolerance,
            k.max_refinements,
            k.zero_floor
        );
        let _ = writeln!(
            s,
            "thresholds = {:?} {:?} {:?} {:?} {:?}",
            t.gamma_boundary, t.z_r_boundary, t.p_hi, t.p_lo, t.relativistic_gamma
        );
        let _ = writeln!(s, "tol = {:?}", self.tol);
        s
    }

    /// SHA-256 of [`canonical`](GridSpec::canonical).
    pub fn config_hash(&self, kind: MapKind) -> [u8; 32] {
        Sha256::digest(self.canonical(kind).as_bytes()).into()
    }
}

/// Which observable a map evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Residual population of a k0 = 0 electron.
    Population,
    /// Residual current over the k0 window, plus the k0 = 0 population.
    Current,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::Population => "population",
            MapKind::Current => "current",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            MapKind::Population => 1,
            MapKind::Current => 2,
        }
    }
}

/// Completion state of a cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Pending,
    Done,
    Failed(String),
}

/// Bits of [`CellRecord::flags`].
pub mod flags {
    /// γ below the relativistic threshold.
    pub const RELATIVISTIC: u8 = 1;
    /// k0 refinement hit its cap before meeting the tolerance.
    pub const K_UNCONVERGED: u8 = 2;
}

/// Result of one map cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub index: usize,
    pub gamma: f64,
    pub m_photon: f64,
    /// V/nm.
    pub peak_field: f64,
    pub regime: Regime,
    pub flags: u8,
    pub rho_cb_res: f64,
    /// e/fs; NaN on population maps.
    pub j_res: f64,
    /// Final k0 half-width in 1/nm (0 on population maps).
    pub k_half_width: f64,
    pub k_points: u32,
    pub status: CellStatus,
}

impl CellRecord {
    pub fn relativistic(&self) -> bool {
        self.flags & flags::RELATIVISTIC != 0
    }

    pub fn is_done(&self) -> bool {
        self.status == CellStatus::Done
    }
}

/// Provenance of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub workers: usize,
    /// Seconds spent in this invocation (not including resumed work).
    pub wall_time: f64,
    pub resumed_cells: usize,
}

/// Outcome of a map run, complete or not.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub grid: GridSpec,
    pub kind: MapKind,
    pub cells: Vec<CellRecord>,
    pub manifest: Manifest,
}

impl MapResult {
    pub fn completed(&self) -> usize {
        self.cells.iter().filter(|c| c.status != CellStatus::Pending).count()
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| matches!(c.status, CellStatus::Failed(_)))
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.status != CellStatus::Pending)
    }

    /// Cell at row `i_gamma`, column `i_m`.
    pub fn cell(&self, i_gamma: usize, i_m: usize) -> &CellRecord {
        &self.cells[i_gamma * self.grid.m_axis.count + i_m]
    }
}

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 picks the number of available cores.
    pub workers: usize,
    /// Binary checkpoint written as cells finish.
    pub checkpoint: Option<PathBuf>,
    /// Load completed cells from `checkpoint` before running.
    pub resume: bool,
    /// Stop after starting this many cells in this invocation.
    pub max_cells: Option<usize>,
    /// Cooperative cancellation, checked before each cell.
    pub cancel: Option<Arc<AtomicBool>>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn blank_record(grid: &GridSpec, index: usize) -> Result<CellRecord> {
    let (gamma, m_photon) = grid.coordinates(index);
    let (mat, drive, _) = grid.cell_pulse(gamma, m_photon)?;
    let report = compute_report_with(&mat, &drive, &grid.thresholds)?;
    Ok(CellRecord {
        index,
        gamma,
        m_photon,
        peak_field: drive.peak_field,
        regime: report.regime,
        flags: if report.relativistic_flag { flags::RELATIVISTIC } else { 0 },
        rho_cb_res: f64::NAN,
        j_res: f64::NAN,
        k_half_width: 0.0,
        k_points: 0,
        status: CellStatus::Pending,
    })
}

fn truncate_reason(mut reason: String) -> String {
    if reason.len() > REASON_LEN {
        let mut end = REASON_LEN;
        while !reason.is_char_boundary(end) {
            end -= 1;
        }
        reason.truncate(end);
    }
    reason
}

/// Computes one cell. Failures are recorded in the returned status.
pub fn evaluate_cell(grid: &GridSpec, kind: MapKind, index: usize) -> Result<CellRecord> {
    let mut rec = blank_record(grid, index)?;
    let outcome = (|| -> Result<()> {
        let (mat, _, spec) = grid.cell_pulse(rec.gamma, rec.m_photon)?;
        match kind {
            MapKind::Population => {
                let w = spec.waveform_on(&propagation_grid(&mat, &spec, 0.0))?;
                let traj = bloch_trajectory(&w, 0.0, &mat)?;
                rec.rho_cb_res = residual_population(&mat, &traj, grid.tol)?;
                rec.k_points = 1;
            }
            MapKind::Current => {
                let est = converged_current(&mat, &spec, &grid.k_policy, &Constants::natural(), grid.tol)?;
                let centre = est.resolved.len() / 2;
                rec.rho_cb_res = est.resolved.rho_cb_res[centre];
                rec.j_res = est.j;
                rec.k_half_width = est.half_width;
                rec.k_points = est.resolved.len() as u32;
                if !est.converged {
                    rec.flags |= flags::K_UNCONVERGED;
                }
            }
        }
        Ok(())
    })();
    rec.status = match outcome {
        Ok(()) => CellStatus::Done,
        Err(e) => {
            rec.rho_cb_res = f64::NAN;
            rec.j_res = f64::NAN;
            CellStatus::Failed(truncate_reason(e.to_string()))
        }
    };
    Ok(rec)
}

/// Residual population at k0 = 0 over the grid.
pub fn run_population_map(grid: &GridSpec, opts: &RunOptions) -> Result<MapResult> {
    run_map(grid, MapKind::Population, opts)
}

/// Residual current over the grid.
pub fn run_current_map(grid: &GridSpec, opts: &RunOptions) -> Result<MapResult> {
    run_map(grid, MapKind::Current, opts)
}

/// Runs (or resumes) a map. Cells that fail are quarantined with a reason;
/// only configuration and checkpoint problems abort the run.
pub fn run_map(grid: &GridSpec, kind: MapKind, opts: &RunOptions) -> Result<MapResult> {
    grid.validate()?;
    let start = Instant::now();
    let hash = grid.config_hash(kind);
    let n = grid.cell_count();
    let mut cells = (0..n).map(|i| blank_record(grid, i)).collect::<Result<Vec<_>>>()?;

    let mut resumed_cells = 0;
    let mut writer = match &opts.checkpoint {
        Some(path) if opts.resume && path.exists() => {
            let (records, valid_len) = read_checkpoint(path, kind, &hash, n)?;
            for r in records {
                let cell = &mut cells[r.index];
                if cell.status == CellStatus::Pending {
                    resumed_cells += 1;
                }
                cell.regime = r.regime;
                cell.flags = r.flags;
                cell.rho_cb_res = r.rho_cb_res;
                cell.j_res = r.j_res;
                cell.k_half_width = r.k_half_width;
                cell.k_points = r.k_points;
                cell.status = r.status;
            }
            Some(CheckpointWriter::append(path, valid_len)?)
        }
        Some(path) => Some(CheckpointWriter::create(path, kind, &hash, n)?),
        None => None,
    };

    let pending: Vec<usize> = (0..n).filter(|&i| cells[i].status == CellStatus::Pending).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();
    let started = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let limit = opts.max_cells.unwrap_or(usize::MAX);
    let cancelled = || stop.load(Ordering::Relaxed) || opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed));

    let (tx, rx) = mpsc::channel::<Result<CellRecord>>();
    let mut write_error = None;
    std::thread::scope(|s| {
        let cancelled = &cancelled;
        let started = &started;
        let pending = &pending;
        let pool = &pool;
        s.spawn(move || {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, &i| {
                    if cancelled() || started.fetch_add(1, Ordering::Relaxed) >= limit {
                        return;
                    }
                    let _ = tx.send(evaluate_cell(grid, kind, i));
                });
            });
        });
        // Single writer: owns checkpoint and result assembly.
        for rec in rx {
            let rec = match rec {
                Ok(rec) => rec,
                Err(e) => {
                    stop.store(true, Ordering::Relaxed);
                    write_error.get_or_insert(e);
                    continue;
                }
            };
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.write(&rec) {
                    stop.store(true, Ordering::Relaxed);
                    write_error.get_or_insert(e);
                }
            }
            let index = rec.index;
            cells[index] = rec;
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }

    Ok(MapResult {
        grid: *grid,
        kind,
        cells,
        manifest: Manifest {
            config_hash: hex(&hash),
            version: env!("CARGO_PKG_VERSION").to_string(),
            workers,
            wall_time: start.elapsed().as_secs_f64(),
            resumed_cells,
        },
    })
}

#[cfg(test)]
mod tests;
