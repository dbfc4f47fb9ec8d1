//! Time propagation of the two-level state along a Bloch trajectory.
//!
//! The Hamiltonian `H(k) = [[-Δ/2, ħ v_F k], [ħ v_F k, Δ/2]]` is integrated
//! in the fixed (diabatic) basis. Populations are read out by projecting onto
//! the instantaneous (Houston) eigenbasis of `H(k(t))`.

mod rk;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::constants::HBAR;
use crate::error::{invalid, Error, Result};
use crate::model::MaterialSpec;
use crate::pulse::{TimeGridSpec, Trajectory};

use rk::Dopri5;

/// Default local tolerance of the adaptive integrator.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Norm or trace drift that aborts a propagation.
pub const MAX_NORM_DRIFT: f64 = 1e-6;
/// Most negative density-matrix eigenvalue tolerated before aborting.
pub const MIN_EIGENVALUE: f64 = -1e-6;
/// Minimum number of samples per optical cycle and per splitting period.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 40.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real symmetric 2×2 Hamiltonian in the diabatic basis (eV).
pub fn hamiltonian(mat: &MaterialSpec, k: f64) -> [[f64; 2]; 2] {
    let off = HBAR * mat.fermi_velocity * k;
    [[-0.5 * mat.gap, off], [off, 0.5 * mat.gap]]
}

/// Instantaneous eigenvalues `(ε₋, ε₊) = ∓½ sqrt(Δ² + (2ħ v_F k)²)`.
pub fn eigenvalues(mat: &MaterialSpec, k: f64) -> (f64, f64) {
    let half = 0.5 * mat.splitting(k);
    (-half, half)
}

/// Instantaneous eigenbasis of `H(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoustonFrame {
    /// Splitting ε = ε₊ - ε₋ in eV.
    pub eps: f64,
    pub eigvec_plus: [f64; 2],
    pub eigvec_minus: [f64; 2],
}

impl HoustonFrame {
    pub fn new(mat: &MaterialSpec, k: f64) -> Self {
        let (plus, minus, eps) = eigen_pair(mat.gap, HBAR * mat.fermi_velocity * k);
        HoustonFrame {
            eps,
            eigvec_plus: plus,
            eigvec_minus: minus,
        }
    }

    /// Flips eigenvector signs so each overlaps positively with `prev`.
    pub fn aligned_with(mut self, prev: &HoustonFrame) -> Self {
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        if dot(self.eigvec_plus, prev.eigvec_plus) < 0.0 {
            self.eigvec_plus = [-self.eigvec_plus[0], -self.eigvec_plus[1]];
        }
        if dot(self.eigvec_minus, prev.eigvec_minus) < 0.0 {
            self.eigvec_minus = [-self.eigvec_minus[0], -self.eigvec_minus[1]];
        }
        self
    }
}

// Eigenvectors of [[-Δ/2, b], [b, Δ/2]]. For Δ > 0 both are smooth in b
// because the second (first) component never vanishes.
#[inline(always)]
fn eigen_pair(gap: f64, b: f64) -> ([f64; 2], [f64; 2], f64) {
    let half = (0.25 * gap * gap + b * b).sqrt();
    let lead = half + 0.5 * gap;
    let norm = lead.hypot(b);
    if norm == 0.0 {
        // gapless crossing point: pick the b → 0⁺ limit
        let s = std::f64::consts::FRAC_1_SQRT_2;
        return ([s, s], [s, -s], 0.0);
    }
    let plus = [b / norm, lead / norm];
    let minus = [lead / norm, -b / norm];
    (plus, minus, 2.0 * half)
}

/// Frames along a trajectory with sign continuity enforced sample to sample.
pub fn houston_frames(mat: &MaterialSpec, traj: &Trajectory) -> Vec<HoustonFrame> {
    let mut frames: Vec<HoustonFrame> = Vec::with_capacity(traj.len());
    for &k in &traj.k {
        let frame = HoustonFrame::new(mat, k);
        let frame = match frames.last() {
            Some(prev) => frame.aligned_with(prev),
            None => frame,
        };
        frames.push(frame);
    }
    frames
}

/// Storage basis of a [`QuantumState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Diabatic,
    Instantaneous,
}

/// Two complex amplitudes (valence, conduction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumState {
    pub amp_vb: Complex64,
    pub amp_cb: Complex64,
    pub basis: Basis,
}

impl QuantumState {
    /// Instantaneous lower eigenstate at wave number `k`, in the diabatic basis.
    pub fn lower_at(mat: &MaterialSpec, k: f64) -> Self {
        let frame = HoustonFrame::new(mat, k);
        QuantumState {
            amp_vb: Complex64::new(frame.eigvec_minus[0], 0.0),
            amp_cb: Complex64::new(frame.eigvec_minus[1], 0.0),
            basis: Basis::Diabatic,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_vb.norm_sqr() + self.amp_cb.norm_sqr()
    }

    /// Diabatic amplitudes, converting from the frame at `k` if needed.
    pub fn to_diabatic(&self, mat: &MaterialSpec, k: f64) -> [Complex64; 2] {
        match self.basis {
            Basis::Diabatic => [self.amp_vb, self.amp_cb],
            Basis::Instantaneous => {
                let f = HoustonFrame::new(mat, k);
                [
                    self.amp_vb * f.eigvec_minus[0] + self.amp_cb * f.eigvec_plus[0],
                    self.amp_vb * f.eigvec_minus[1] + self.amp_cb * f.eigvec_plus[1],
                ]
            }
        }
    }
}

/// Hermitian 2×2 density matrix in the diabatic basis, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    pub rho: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    pub fn pure(state: [Complex64; 2]) -> Self {
        let mut rho = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rho[i][j] = state[i] * state[j].conj();
            }
        }
        DensityMatrix { rho }
    }

    pub fn lower_at(mat: &MaterialSpec, k: f64) -> Self {
        let s = QuantumState::lower_at(mat, k);
        Self::pure([s.amp_vb, s.amp_cb])
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }

    pub fn purity(&self) -> f64 {
        let r = &self.rho;
        r[0][0].norm_sqr() + r[1][1].norm_sqr() + 2.0 * r[0][1].norm_sqr()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let r = &self.rho;
        (r[0][1] - r[1][0].conj())
            .norm()
            .max(r[0][0].im.abs())
            .max(r[1][1].im.abs())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let r = &self.rho;
        let mean = 0.5 * (r[0][0].re + r[1][1].re);
        let half_diff = 0.5 * (r[0][0].re - r[1][1].re);
        let radius = half_diff.hypot(r[0][1].norm());
        (mean - radius, mean + radius)
    }

    fn to_flat(self) -> [Complex64; 4] {
        [self.rho[0][0], self.rho[0][1], self.rho[1][0], self.rho[1][1]]
    }

    fn from_flat(v: &[Complex64; 4]) -> Self {
        DensityMatrix {
            rho: [[v[0], v[1]], [v[2], v[3]]],
        }
    }

    /// Population of the upper instantaneous eigenstate.
    pub fn upper_population(&self, frame: &HoustonFrame) -> f64 {
        let u = frame.eigvec_plus;
        let r = &self.rho;
        (u[0] * u[0] * r[0][0] + u[0] * u[1] * (r[0][1] + r[1][0]) + u[1] * u[1] * r[1][1]).re
    }

    /// Coherence between the instantaneous eigenstates, ⟨-|ρ|+⟩.
    pub fn coherence(&self, frame: &HoustonFrame) -> Complex64 {
        let (m, p) = (frame.eigvec_minus, frame.eigvec_plus);
        let r = &self.rho;
        m[0] * (r[0][0] * p[0] + r[0][1] * p[1]) + m[1] * (r[1][0] * p[0] + r[1][1] * p[1])
    }
}

/// Time-resolved upper-state population along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub t: Vec<f64>,
    /// Population of the instantaneous upper state.
    pub rho_cb: Vec<f64>,
    /// Accumulated dynamical phase (1/ħ)∫ε dt from the first sample, rad.
    pub phase: Vec<f64>,
    /// |ψ|² or Tr ρ.
    pub norm: Vec<f64>,
    /// Tr ρ², equal to |ψ|⁴ for pure states.
    pub purity: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl PopulationTrace {
    /// Population after the pulse.
    pub fn residual(&self) -> f64 {
        *self.rho_cb.last().expect("trace is never empty")
    }

    /// Largest deviation of the norm (or trace) from one.
    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().fold(0.0_f64, |m, n| m.max((n - 1.0).abs()))
    }
}

fn check_sampling(mat: &MaterialSpec, traj: &Trajectory) -> Result<()> {
    if traj.len() < 2 {
        return Err(invalid("trajectory", "need at least two samples"));
    }
    let eps_max = traj.k.iter().fold(0.0_f64, |m, &k| m.max(mat.splitting(k)));
    let mut period = f64::INFINITY;
    if traj.omega0 > 0.0 {
        period = 2.0 * PI / traj.omega0;
    }
    if eps_max > 0.0 {
        period = period.min(2.0 * PI * HBAR / eps_max);
    }
    let max_step = period / MIN_SAMPLES_PER_PERIOD;
    let step = traj.step();
    if step > max_step * (1.0 + 1e-9) {
        return Err(Error::StepTooCoarse { step, max_step });
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid("tol", format!("must lie in (0, 1), got {tol}")));
    }
    Ok(())
}

fn initial_step(mat: &MaterialSpec, traj: &Trajectory) -> f64 {
    let eps = mat.splitting(traj.k[0]).max(1e-3);
    (0.05 * HBAR / eps).min(traj.step())
}

#[inline(always)]
fn schrodinger_rhs(gap: f64, coupling: f64, k: f64, y: &[Complex64; 2]) -> [Complex64; 2] {
    // -(i/ħ) H y with H = [[-Δ/2, b], [b, Δ/2]]
    let b = coupling * k;
    let h0 = -0.5 * gap * y[0] + b * y[1];
    let h1 = b * y[0] + 0.5 * gap * y[1];
    let s = 1.0 / HBAR;
    [
        Complex64::new(h0.im * s, -h0.re * s),
        Complex64::new(h1.im * s, -h1.re * s),
    ]
}

/// Integrates the Schrödinger equation from `psi0` along `traj` and records the
/// upper-state population at every trajectory sample.
pub fn propagate_state(
    mat: &MaterialSpec,
    traj: &Trajectory,
    psi0: &QuantumState,
    tol: f64,
) -> Result<PopulationTrace> {
    mat.validate()?;
    check_tol(tol)?;
    check_sampling(mat, traj)?;
    let n0 = psi0.norm_sqr();
    if (n0 - 1.0).abs() > 1e-8 {
        return Err(invalid("psi0", format!("must be normalized, |psi|² = {n0}")));
    }

    let n = traj.len();
    let mut trace = PopulationTrace {
        t: traj.t.clone(),
        rho_cb: Vec::with_capacity(n),
        phase: Vec::with_capacity(n),
        norm: Vec::with_capacity(n),
        purity: Vec::with_capacity(n),
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let mut y = psi0.to_diabatic(mat, traj.k[0]);
    let mut phase = 0.0;
    let mut prev_eps = mat.splitting(traj.k[0]);
    let mut record = |i: usize, y: &[Complex64; 2], phase: f64| {
        let frame = HoustonFrame::new(mat, traj.k[i]);
        let amp = y[0] * frame.eigvec_plus[0] + y[1] * frame.eigvec_plus[1];
        let norm = y[0].norm_sqr() + y[1].norm_sqr();
        trace.rho_cb.push(amp.norm_sqr());
        trace.phase.push(phase);
        trace.norm.push(norm);
        trace.purity.push(norm * norm);
    };
    record(0, &y, 0.0);

    let mut rk = Dopri5::<2>::new(tol, initial_step(mat, traj));
    let gap = mat.gap;
    let coupling = HBAR * mat.fermi_velocity;
    for i in 0..n - 1 {
        let seg = traj.segment(i);
        let rhs = |t: f64, y: &[Complex64; 2]| schrodinger_rhs(gap, coupling, seg.eval(t), y);
        rk.advance(rhs, traj.t[i], traj.t[i + 1], &mut y)?;
        let norm = y[0].norm_sqr() + y[1].norm_sqr();
        if (norm - 1.0).abs() > MAX_NORM_DRIFT {
            return Err(Error::NormDrift {
                time: traj.t[i + 1],
                drift: norm - 1.0,
            });
        }
        let eps = mat.splitting(traj.k[i + 1]);
        phase += 0.5 * (prev_eps + eps) * (traj.t[i + 1] - traj.t[i]) / HBAR;
        prev_eps = eps;
        record(i + 1, &y, phase);
    }
    trace.steps_accepted = rk.accepted;
    trace.steps_rejected = rk.rejected;
    Ok(trace)
}

/// Residual upper-state population for an electron that starts in the lower
/// instantaneous eigenstate, without recording the time trace.
pub fn residual_population(mat: &MaterialSpec, traj: &Trajectory, tol: f64) -> Result<f64> {
    mat.validate()?;
    check_tol(tol)?;
    check_sampling(mat, traj)?;
    let n = traj.len();
    let psi0 = QuantumState::lower_at(mat, traj.k[0]);
    let mut y = [psi0.amp_vb, psi0.amp_cb];
    let mut rk = Dopri5::<2>::new(tol, initial_step(mat, traj));
    let gap = mat.gap;
    let coupling = HBAR * mat.fermi_velocity;
    for i in 0..n - 1 {
        let seg = traj.segment(i);
        let rhs = |t: f64, y: &[Complex64; 2]| schrodinger_rhs(gap, coupling, seg.eval(t), y);
        rk.advance(rhs, traj.t[i], traj.t[i + 1], &mut y)?;
        let norm = y[0].norm_sqr() + y[1].norm_sqr();
        if (norm - 1.0).abs() > MAX_NORM_DRIFT {
            return Err(Error::NormDrift {
                time: traj.t[i + 1],
                drift: norm - 1.0,
            });
        }
    }
    let frame = HoustonFrame::new(mat, traj.k[n - 1]);
    let amp = y[0] * frame.eigvec_plus[0] + y[1] * frame.eigvec_plus[1];
    Ok(amp.norm_sqr())
}

/// Bias sweep `α(t) = α0·t` across the crossing at the given `δ_LZ`, sampled
/// over `t ∈ [-W, W]` with `W = window·√(ħ/α0)`.
pub fn linear_sweep(mat: &MaterialSpec, delta_lz: f64, window: f64) -> Result<Trajectory> {
    mat.validate()?;
    if !(delta_lz.is_finite() && delta_lz > 0.0) {
        return Err(invalid("delta_lz", format!("must be finite and > 0, got {delta_lz}")));
    }
    if mat.gap == 0.0 {
        return Err(invalid("gap", "a gapless crossing has δ_LZ = 0"));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(invalid("window", format!("must be finite and > 0, got {window}")));
    }
    // δ = Δ²/(4ħα0) with α0 = 2ħ v_F k̇
    let alpha0 = mat.gap * mat.gap / (4.0 * HBAR * delta_lz);
    let rate = alpha0 / (2.0 * HBAR * mat.fermi_velocity);
    let half_width = window * (HBAR / alpha0).sqrt();
    let eps_max = mat.gap.hypot(alpha0 * half_width);
    let step = 2.0 * PI * HBAR / eps_max / (MIN_SAMPLES_PER_PERIOD * 1.2);
    let t = TimeGridSpec::symmetric(half_width, step).times();
    let k: Vec<f64> = t.iter().map(|&t| rate * t).collect();
    Ok(Trajectory {
        k0: 0.0,
        k_rate: vec![rate; t.len()],
        bias: k.iter().map(|k| 2.0 * HBAR * mat.fermi_velocity * k).collect(),
        k,
        t,
        omega0: 0.0,
    })
}

/// Sweep half-width, in transition widths √(ħ/α0), that keeps the
/// finite-window error of the transfer well below 1% up to δ_LZ = 2.
pub fn recommended_lz_window(delta_lz: f64) -> f64 {
    40.0 + 30.0 * delta_lz
}

/// Upper-state population after one [`linear_sweep`], starting in the lower
/// adiabatic state.
pub fn linear_sweep_transfer(mat: &MaterialSpec, delta_lz: f64, window: f64, tol: f64) -> Result<f64> {
    residual_population(mat, &linear_sweep(mat, delta_lz, window)?, tol)
}

// Pure dephasing in the instantaneous eigenbasis: the coherence between the
// two eigenstates decays at rate 1/T2. Swap this function for a fixed-basis
// variant to change the dephasing model.
#[inline(always)]
fn dephasing(frame_plus: [f64; 2], frame_minus: [f64; 2], rho: &[Complex64; 4], rate: f64) -> [Complex64; 4] {
    let (m, p) = (frame_minus, frame_plus);
    // c = ⟨-|ρ|+⟩; D(ρ) = rate (c |-⟩⟨+| + c* |+⟩⟨-|)
    let c = m[0] * (rho[0] * p[0] + rho[1] * p[1]) + m[1] * (rho[2] * p[0] + rho[3] * p[1]);
    let cc = c.conj();
    [
        rate * (c * m[0] * p[0] + cc * p[0] * m[0]),
        rate * (c * m[0] * p[1] + cc * p[0] * m[1]),
        rate * (c * m[1] * p[0] + cc * p[1] * m[0]),
        rate * (c * m[1] * p[1] + cc * p[1] * m[1]),
    ]
}

#[inline(always)]
fn liouville_rhs(gap: f64, coupling: f64, k: f64, rate: f64, r: &[Complex64; 4]) -> [Complex64; 4] {
    let b = coupling * k;
    let h = [[-0.5 * gap, b], [b, 0.5 * gap]];
    let rho = [[r[0], r[1]], [r[2], r[3]]];
    let mut out = [ZERO; 4];
    for i in 0..2 {
        for j in 0..2 {
            let comm = h[i][0] * rho[0][j] + h[i][1] * rho[1][j] - rho[i][0] * h[0][j] - rho[i][1] * h[1][j];
            // -(i/ħ) [H, ρ]
            out[2 * i + j] = Complex64::new(comm.im / HBAR, -comm.re / HBAR);
        }
    }
    if rate > 0.0 {
        let (plus, minus, _) = eigen_pair(gap, b);
        let d = dephasing(plus, minus, r, rate);
        for (o, di) in out.iter_mut().zip(d.iter()) {
            *o -= di;
        }
    }
    out
}

/// Evolves `dρ/dt = -(i/ħ)[H, ρ] - D(ρ)` where D removes instantaneous-frame
/// coherence at rate `1/t2`. Pass `f64::INFINITY` to disable dephasing.
pub fn propagate_density(
    mat: &MaterialSpec,
    traj: &Trajectory,
    rho0: &DensityMatrix,
    t2: f64,
    tol: f64,
) -> Result<PopulationTrace> {
    mat.validate()?;
    check_tol(tol)?;
    check_sampling(mat, traj)?;
    if !(t2 > 0.0) {
        return Err(invalid("t2", format!("must be > 0 or infinite, got {t2}")));
    }
    if (rho0.trace() - 1.0).abs() > 1e-8 || rho0.hermiticity_error() > 1e-12 {
        return Err(invalid("rho0", "must be Hermitian with unit trace"));
    }
    let rate = if t2.is_infinite() { 0.0 } else { 1.0 / t2 };

    let n = traj.len();
    let mut trace = PopulationTrace {
        t: traj.t.clone(),
        rho_cb: Vec::with_capacity(n),
        phase: Vec::with_capacity(n),
        norm: Vec::with_capacity(n),
        purity: Vec::with_capacity(n),
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let mut y = rho0.to_flat();
    let mut record = |i: usize, y: &[Complex64; 4], phase: f64| {
        let rho = DensityMatrix::from_flat(y);
        let frame = HoustonFrame::new(mat, traj.k[i]);
        trace.rho_cb.push(rho.upper_population(&frame));
        trace.phase.push(phase);
        trace.norm.push(rho.trace());
        trace.purity.push(rho.purity());
    };
    record(0, &y, 0.0);

    let mut rk = Dopri5::<4>::new(tol, initial_step(mat, traj));
    let gap = mat.gap;
    let coupling = HBAR * mat.fermi_velocity;
    let mut phase = 0.0;
    let mut prev_eps = mat.splitting(traj.k[0]);
    for i in 0..n - 1 {
        let seg = traj.segment(i);
        let rhs = |t: f64, r: &[Complex64; 4]| liouville_rhs(gap, coupling, seg.eval(t), rate, r);
        rk.advance(rhs, traj.t[i], traj.t[i + 1], &mut y)?;
        let rho = DensityMatrix::from_flat(&y);
        let tr = rho.trace();
        if (tr - 1.0).abs() > MAX_NORM_DRIFT {
            return Err(Error::NormDrift {
                time: traj.t[i + 1],
                drift: tr - 1.0,
            });
        }
        let (low, _) = rho.eigenvalues();
        if low < MIN_EIGENVALUE {
            return Err(Error::NegativePopulation {
                time: traj.t[i + 1],
                eigenvalue: low,
            });
        }
        let eps = mat.splitting(traj.k[i + 1]);
        phase += 0.5 * (prev_eps + eps) * (traj.t[i + 1] - traj.t[i]) / HBAR;
        prev_eps = eps;
        record(i + 1, &y, phase);
    }
    trace.steps_accepted = rk.accepted;
    trace.steps_rejected = rk.rejected;
    Ok(trace)
}

/// Dynamical phase `(1/ħ) ∫ ε(t) dt` by the trapezoid rule over the samples
/// `range` (the whole trajectory when `None`).
pub fn dynamical_phase(mat: &MaterialSpec, traj: &Trajectory, range: Option<std::ops::Range<usize>>) -> f64 {
    let range = range.unwrap_or(0..traj.len());
    let (start, end) = (range.start, range.end.min(traj.len()));
    if end <= start + 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in start..end - 1 {
        let e0 = mat.splitting(traj.k[i]);
        let e1 = mat.splitting(traj.k[i + 1]);
        sum += 0.5 * (e0 + e1) * (traj.t[i + 1] - traj.t[i]);
    }
    sum / HBAR
}
