//! Pulse synthesis, spectral-phase dispersion and Bloch trajectories.
//!
//! The vector potential of a transform-limited pulse is
//! `A(t) = -(E0/ω) exp(-2 ln2 (t/τ_p)²) sin(ωt + φ_CEP)` with `E = -dA/dt`.
//! Electrons follow `k(t) = k0 + (e/ħ) A(t)`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::constants::{angular_frequency, ELEMENTARY_CHARGE as E_CHARGE, HBAR};
use crate::error::{invalid, Error, Result};
use crate::model::MaterialSpec;

/// Envelope level, relative to the peak, that counts as "outside the pulse".
pub const EDGE_ENVELOPE: f64 = 1e-8;
/// Default number of samples per optical cycle.
pub const SAMPLES_PER_CYCLE: f64 = 64.0;
/// Coarsest allowed sampling, in samples per optical cycle.
pub const MIN_SAMPLES_PER_CYCLE: f64 = 40.0;

/// Analytic pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// Central photon energy ħω in eV.
    pub photon_energy: f64,
    /// Peak field E0 in V/nm.
    pub peak_field: f64,
    /// Intensity FWHM τ_p in fs.
    pub duration: f64,
    /// Carrier-envelope phase in rad.
    pub cep: f64,
    /// Group-delay dispersion in fs².
    pub gdd: f64,
    /// Third-order dispersion in fs³.
    pub tod: f64,
}

impl PulseSpec {
    pub fn new(photon_energy: f64, peak_field: f64, duration: f64, cep: f64) -> Result<Self> {
        let spec = PulseSpec {
            photon_energy,
            peak_field,
            duration,
            cep,
            gdd: 0.0,
            tod: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_dispersion(mut self, gdd: f64, tod: f64) -> Self {
        self.gdd = gdd;
        self.tod = tod;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("photon_energy", self.photon_energy),
            ("peak_field", self.peak_field),
            ("duration", self.duration),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        for (name, value) in [("cep", self.cep), ("gdd", self.gdd), ("tod", self.tod)] {
            if !value.is_finite() {
                return Err(invalid(name, format!("must be finite, got {value}")));
            }
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        angular_frequency(self.photon_energy)
    }

    pub fn optical_period(&self) -> f64 {
        2.0 * PI / self.omega()
    }

    /// Peak of |A|, E0/ω, in V·fs/nm.
    pub fn vector_potential_amplitude(&self) -> f64 {
        self.peak_field / self.omega()
    }

    /// Intensity FWHM of a Gaussian pulse after pure GDD.
    pub fn stretched_duration(&self) -> f64 {
        let tau = self.duration;
        tau * (1.0 + (4.0 * LN_2 * self.gdd / (tau * tau)).powi(2)).sqrt()
    }

    /// Half-width of a time grid whose edges lie below [`EDGE_ENVELOPE`].
    ///
    /// Without dispersion this is `4 τ_stretched`. With dispersion the
    /// group-delay spread across the spectral band (±6 spectral widths) is
    /// added to the transform-limited support.
    pub fn default_half_width(&self) -> f64 {
        let tau = self.duration;
        let base = 4.0 * self.stretched_duration();
        if self.tod == 0.0 && self.gdd == 0.0 {
            return base;
        }
        let sigma_w = 2.0 * LN_2.sqrt() / tau;
        let band = 6.0 * sigma_w;
        let delay = |dw: f64| (self.gdd * dw + 0.5 * self.tod * dw * dw).abs();
        let spread = delay(band).max(delay(-band));
        base.max(4.0 * tau + spread)
    }

    /// Default grid: `[-H, H]` with `H` from [`default_half_width`] and
    /// 64 samples per optical cycle.
    ///
    /// [`default_half_width`]: PulseSpec::default_half_width
    pub fn default_grid(&self) -> TimeGridSpec {
        TimeGridSpec::symmetric(self.default_half_width(), self.optical_period() / SAMPLES_PER_CYCLE)
    }

    /// Transform-limited waveform on the default grid with this spec's
    /// dispersion applied.
    pub fn waveform(&self) -> Result<SampledWaveform> {
        self.waveform_on(&self.default_grid())
    }

    pub fn waveform_on(&self, grid: &TimeGridSpec) -> Result<SampledWaveform> {
        let w = synthesize(self, grid)?;
        if self.gdd == 0.0 && self.tod == 0.0 {
            Ok(w)
        } else {
            apply_dispersion(&w, self.gdd, self.tod, self.omega())
        }
    }
}

/// A uniform time grid `start + i·step`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGridSpec {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl TimeGridSpec {
    /// Grid covering `[-half_width, half_width]` with spacing at most `max_step`.
    pub fn symmetric(half_width: f64, max_step: f64) -> Self {
        let intervals = (2.0 * half_width / max_step).ceil().max(2.0) as usize;
        let intervals = intervals + intervals % 2;
        TimeGridSpec {
            start: -half_width,
            step: 2.0 * half_width / intervals as f64,
            len: intervals + 1,
        }
    }

    pub fn end(&self) -> f64 {
        self.time(self.len - 1)
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.time(i)).collect()
    }
}

/// Vector potential and field sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    /// Sample times in fs.
    pub t: Vec<f64>,
    /// A(t) in V·fs/nm.
    pub a: Vec<f64>,
    /// E(t) = -dA/dt in V/nm.
    pub e: Vec<f64>,
    /// Carrier angular frequency in 1/fs, zero for non-oscillatory drives.
    pub omega0: f64,
}

impl SampledWaveform {
    /// Wraps externally generated samples. Times must be uniformly spaced.
    pub fn from_samples(t: Vec<f64>, a: Vec<f64>, e: Vec<f64>, omega0: f64) -> Result<Self> {
        if t.len() < 2 || a.len() != t.len() || e.len() != t.len() {
            return Err(invalid("samples", "need >= 2 samples and matching lengths"));
        }
        let step = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if !(step > 0.0) {
            return Err(invalid("t", "times must increase"));
        }
        let uniform = t
            .iter()
            .enumerate()
            .all(|(i, &ti)| (ti - (t[0] + i as f64 * step)).abs() <= 1e-9 * step.max(ti.abs()));
        if !uniform {
            return Err(invalid("t", "times must be uniformly spaced"));
        }
        Ok(SampledWaveform { t, a, e, omega0 })
    }

    /// Monochromatic drive `A = -(E0/ω) sin(ωt + φ)` over `cycles` periods
    /// starting at t = 0, inclusive of both ends.
    pub fn monochromatic(
        photon_energy: f64,
        peak_field: f64,
        cep: f64,
        cycles: usize,
        samples_per_cycle: usize,
    ) -> Result<Self> {
        if !(photon_energy > 0.0 && peak_field > 0.0) || cycles == 0 || samples_per_cycle < 4 {
            return Err(invalid("monochromatic", "invalid drive or sampling"));
        }
        let omega = angular_frequency(photon_energy);
        let n = cycles * samples_per_cycle;
        let step = 2.0 * PI / omega / samples_per_cycle as f64;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        let a = t
            .iter()
            .map(|&ti| -(peak_field / omega) * (omega * ti + cep).sin())
            .collect();
        let e = t.iter().map(|&ti| peak_field * (omega * ti + cep).cos()).collect();
        Ok(SampledWaveform {
            t,
            a,
            e,
            omega0: omega,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    pub fn max_abs_a(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_e(&self) -> f64 {
        self.e.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// ∫ A² dt by the rectangle rule (exact Parseval partner of the DFT).
    pub fn a_energy(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>() * self.step()
    }

    /// Magnitude of the analytic signal of A(t): the carrier-free envelope.
    pub fn envelope(&self) -> Vec<f64> {
        let n = self.len();
        let mut planner = FftPlanner::<f64>::new();
        let mut buf: Vec<Complex64> = self.a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut buf);
        for (j, x) in buf.iter_mut().enumerate() {
            if j == 0 || (n % 2 == 0 && j == n / 2) {
                continue;
            } else if j < n.div_ceil(2) {
                *x *= 2.0;
            } else {
                *x = Complex64::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|z| z.norm() / n as f64).collect()
    }

    /// Intensity FWHM of the envelope, using linear interpolation at the
    /// half-maximum crossings.
    pub fn intensity_fwhm(&self) -> f64 {
        let intensity: Vec<f64> = self.envelope().iter().map(|v| v * v).collect();
        let (imax, &peak) = intensity
            .iter()
            .enumerate()
            .fold((0, &0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let half = 0.5 * peak;
        let cross = |i0: usize, i1: usize| {
            let (y0, y1) = (intensity[i0], intensity[i1]);
            let (t0, t1) = (self.t[i0], self.t[i1]);
            t0 + (half - y0) / (y1 - y0) * (t1 - t0)
        };
        let mut left = self.t[0];
        for i in (1..=imax).rev() {
            if intensity[i - 1] < half {
                left = cross(i - 1, i);
                break;
            }
        }
        let mut right = self.t[self.len() - 1];
        for i in imax..self.len() - 1 {
            if intensity[i + 1] < half {
                right = cross(i, i + 1);
                break;
            }
        }
        right - left
    }
}

/// Samples the transform-limited pulse on `grid`; E(t) is the analytic
/// derivative of A(t), not a finite difference.
pub fn synthesize(spec: &PulseSpec, grid: &TimeGridSpec) -> Result<SampledWaveform> {
    spec.validate()?;
    if grid.len < 3 || !(grid.step > 0.0) {
        return Err(invalid("grid", "need at least 3 samples and a positive step"));
    }
    let max_step = spec.optical_period() / MIN_SAMPLES_PER_CYCLE;
    if grid.step > max_step * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse {
            step: grid.step,
            max_step,
        });
    }
    let tau = spec.duration;
    let envelope = |t: f64| (-2.0 * LN_2 * (t / tau).powi(2)).exp();
    let edge_ratio = envelope(grid.start).max(envelope(grid.end()));
    if edge_ratio >= EDGE_ENVELOPE {
        return Err(Error::GridTooShort {
            edge_ratio,
            required_half_width: spec.default_half_width(),
        });
    }

    let omega = spec.omega();
    let amp = spec.vector_potential_amplitude();
    let chirp_rate = 4.0 * LN_2 / (tau * tau);
    let t = grid.times();
    let mut a = Vec::with_capacity(t.len());
    let mut e = Vec::with_capacity(t.len());
    for &ti in &t {
        let g = envelope(ti);
        let (s, c) = (omega * ti + spec.cep).sin_cos();
        a.push(-amp * g * s);
        // E = -dA/dt = (E0/ω) g [ω cos - (4 ln2 t/τ²) sin]
        e.push(amp * g * (omega * c - chirp_rate * ti * s));
    }
    Ok(SampledWaveform {
        t,
        a,
        e,
        omega0: omega,
    })
}

/// Applies the spectral phase `½·gdd·(ω-ω0)² + ⅙·tod·(ω-ω0)³` to A(t).
///
/// Positive-frequency bins get `exp(-iφ)` and negative-frequency bins the
/// conjugate, so A stays real and positive GDD delays the blue side. The
/// zero-frequency and Nyquist bins are left untouched. E(t) is re-derived
/// spectrally.
pub fn apply_dispersion(w: &SampledWaveform, gdd: f64, tod: f64, omega0: f64) -> Result<SampledWaveform> {
    if !(gdd.is_finite() && tod.is_finite() && omega0.is_finite()) {
        return Err(invalid("dispersion", "gdd, tod and omega0 must be finite"));
    }
    let n = w.len();
    if n < 4 {
        return Err(invalid("waveform", "too few samples"));
    }
    let dt = w.step();
    let dw = 2.0 * PI / (n as f64 * dt);
    let nyquist = (n % 2 == 0).then_some(n / 2);

    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex64> = w.a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let phase = |x: f64| 0.5 * gdd * x * x + tod * x * x * x / 6.0;
    let mut field = vec![Complex64::new(0.0, 0.0); n];
    for j in 1..n {
        if Some(j) == nyquist {
            continue;
        }
        let (omega, sign) = if j < n.div_ceil(2) {
            (j as f64 * dw, 1.0)
        } else {
            ((j as f64 - n as f64) * dw, -1.0)
        };
        let phi = sign * phase(omega.abs() - omega0);
        spec[j] *= Complex64::from_polar(1.0, -phi);
        // E = -dA/dt  <->  -iω A(ω)
        field[j] = Complex64::new(0.0, -omega) * spec[j];
    }

    let inverse = planner.plan_fft_inverse(n);
    inverse.process(&mut spec);
    inverse.process(&mut field);
    let scale = 1.0 / n as f64;
    let out = SampledWaveform {
        t: w.t.clone(),
        a: spec.iter().map(|z| z.re * scale).collect(),
        e: field.iter().map(|z| z.re * scale).collect(),
        omega0: w.omega0,
    };

    let env = out.envelope();
    let peak = env.iter().fold(0.0_f64, |m, &v| m.max(v));
    let edge_ratio = env[0].max(env[n - 1]) / peak;
    if edge_ratio >= EDGE_ENVELOPE {
        let stretched = PulseSpec {
            photon_energy: omega0 * HBAR,
            peak_field: 1.0,
            duration: estimate_duration(w),
            cep: 0.0,
            gdd,
            tod,
        };
        return Err(Error::GridTooShort {
            edge_ratio,
            required_half_width: stretched.default_half_width(),
        });
    }
    Ok(out)
}

fn estimate_duration(w: &SampledWaveform) -> f64 {
    let fwhm = w.intensity_fwhm();
    if fwhm.is_finite() && fwhm > 0.0 {
        fwhm
    } else {
        (w.t[w.len() - 1] - w.t[0]) / 8.0
    }
}

/// Crystal-momentum trajectory of one electron.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Initial wave number in 1/nm.
    pub k0: f64,
    pub t: Vec<f64>,
    /// k(t) in 1/nm.
    pub k: Vec<f64>,
    /// dk/dt = -(e/ħ) E(t) in 1/(nm·fs).
    pub k_rate: Vec<f64>,
    /// Bias α(t) = 2ħ v_F k(t) in eV.
    pub bias: Vec<f64>,
    pub omega0: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    pub fn max_abs_k(&self) -> f64 {
        self.k.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Same trajectory with every time shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Trajectory {
        Trajectory {
            t: self.t.iter().map(|t| t + offset).collect(),
            ..self.clone()
        }
    }

    /// Cubic Hermite interpolation of k(t) from the samples and their
    /// derivatives inside interval `i` (`t_i ≤ t ≤ t_{i+1}`).
    #[inline]
    pub fn k_in_interval(&self, i: usize, t: f64) -> f64 {
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.k[i] + h10 * h * self.k_rate[i] + h01 * self.k[i + 1] + h11 * h * self.k_rate[i + 1]
    }

    /// Cubic of interval `i` in power form, for repeated evaluation.
    #[inline]
    pub fn segment(&self, i: usize) -> HermiteSegment {
        let h = self.t[i + 1] - self.t[i];
        let (k0, k1) = (self.k[i], self.k[i + 1]);
        let (d0, d1) = (h * self.k_rate[i], h * self.k_rate[i + 1]);
        HermiteSegment {
            t0: self.t[i],
            inv_h: 1.0 / h,
            c: [k0, d0, 3.0 * (k1 - k0) - 2.0 * d0 - d1, 2.0 * (k0 - k1) + d0 + d1],
        }
    }

    /// Interpolated k(t) anywhere on the grid.
    pub fn k_at(&self, t: f64) -> f64 {
        let n = self.len();
        let pos = ((t - self.t[0]) / self.step()).floor();
        let i = if pos < 0.0 {
            0
        } else {
            (pos as usize).min(n - 2)
        };
        self.k_in_interval(i, t)
    }
}

/// k(t) on one sample interval as a cubic in `s = (t − t0)/h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteSegment {
    t0: f64,
    inv_h: f64,
    c: [f64; 4],
}

impl HermiteSegment {
    #[inline(always)]
    pub fn eval(&self, t: f64) -> f64 {
        let s = (t - self.t0) * self.inv_h;
        self.c[0] + s * (self.c[1] + s * (self.c[2] + s * self.c[3]))
    }
}

/// Bloch acceleration: `k(t) = k0 + (e/ħ) A(t)`, `α(t) = 2ħ v_F k(t)`.
pub fn bloch_trajectory(w: &SampledWaveform, k0: f64, mat: &MaterialSpec) -> Result<Trajectory> {
    mat.validate()?;
    if !k0.is_finite() {
        return Err(invalid("k0", "must be finite"));
    }
    if w.len() < 2 {
        return Err(invalid("waveform", "need at least two samples"));
    }
    let scale = E_CHARGE / HBAR;
    let k: Vec<f64> = w.a.iter().map(|&a| k0 + scale * a).collect();
    let k_rate = w.e.iter().map(|&e| -scale * e).collect();
    let bias = k.iter().map(|&k| 2.0 * HBAR * mat.fermi_velocity * k).collect();
    Ok(Trajectory {
        k0,
        t: w.t.clone(),
        k,
        k_rate,
        bias,
        omega0: w.omega0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> PulseSpec {
        PulseSpec::new(1.55, 1.0, 5.0, PI / 2.0).unwrap()
    }

    #[test]
    fn edges_vanish_and_no_dc() {
        let w = baseline().waveform().unwrap();
        let peak = w.max_abs_a();
        assert!(w.a[0].abs() < 1e-8 * peak);
        assert!(w.a[w.len() - 1].abs() < 1e-8 * peak);
        assert!((w.a[0] - w.a[w.len() - 1]).abs() < 1e-9 * peak);
    }

    #[test]
    fn amplitude_bound_and_peak_value() {
        let spec = baseline();
        let w = spec.waveform().unwrap();
        // E0/ω with ω = 1.55 eV / ħ
        assert!((spec.vector_potential_amplitude() - 0.424_652_875).abs() < 1e-8);
        assert!(w.max_abs_a() <= 0.424_652_876);
        let mid = w.len() / 2;
        assert_eq!(w.t[mid], 0.0);
        assert!((w.a[mid] + 0.424_652_875).abs() < 1e-8);
    }

    #[test]
    fn field_is_minus_derivative() {
        let w = baseline().waveform().unwrap();
        let h = w.step();
        let worst = (1..w.len() - 1)
            .map(|i| {
                let fd = -(w.a[i + 1] - w.a[i - 1]) / (2.0 * h);
                (fd - w.e[i]).abs()
            })
            .fold(0.0_f64, f64::max);
        // central differences are accurate to h² ω³ |A| / 6
        let omega = baseline().omega();
        let bound = h * h * omega.powi(3) * w.max_abs_a() / 6.0 * 1.5;
        assert!(worst < bound, "{worst} vs {bound}");
    }

    #[test]
    fn rejects_short_or_coarse_grids() {
        let spec = baseline();
        let short = TimeGridSpec::symmetric(10.0, spec.optical_period() / 64.0);
        assert!(matches!(synthesize(&spec, &short), Err(Error::GridTooShort { .. })));
        let coarse = TimeGridSpec::symmetric(20.0, spec.optical_period() / 20.0);
        assert!(matches!(synthesize(&spec, &coarse), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn zero_dispersion_round_trip() {
        let w = baseline().waveform().unwrap();
        let out = apply_dispersion(&w, 0.0, 0.0, baseline().omega()).unwrap();
        let peak = w.max_abs_a();
        for (x, y) in w.a.iter().zip(&out.a) {
            assert!((x - y).abs() < 1e-12 * peak.max(1.0));
        }
        let epeak = w.max_abs_e();
        for (x, y) in w.e.iter().zip(&out.e) {
            assert!((x - y).abs() < 1e-9 * epeak);
        }
    }

    #[test]
    fn gdd_stretches_to_chirped_gaussian_width() {
        let spec = baseline().with_dispersion(180.8, 0.0);
        let w = spec.waveform().unwrap();
        let fwhm = w.intensity_fwhm();
        // 5·sqrt(1 + (4 ln2 · 180.8 / 25)²)
        assert!((fwhm / 100.381_410_578 - 1.0).abs() < 0.01, "{fwhm}");
        assert!((spec.stretched_duration() - 100.381_410_578).abs() < 1e-6);
    }

    #[test]
    fn dispersion_conserves_energy_and_reverses() {
        let spec = baseline().with_dispersion(180.8, 137.3);
        let grid = spec.default_grid();
        let plain = synthesize(&baseline(), &grid).unwrap();
        let disp = apply_dispersion(&plain, 180.8, 137.3, spec.omega()).unwrap();
        let e0 = plain.a_energy();
        assert!((disp.a_energy() - e0).abs() < 1e-10 * e0);
        let peak = disp.max_abs_a();
        assert!((disp.a[0] - disp.a[disp.len() - 1]).abs() < 1e-9 * peak);
        let back = apply_dispersion(&disp, -180.8, -137.3, spec.omega()).unwrap();
        for (x, y) in plain.a.iter().zip(&back.a) {
            assert!((x - y).abs() < 1e-10 * plain.max_abs_a());
        }
    }

    #[test]
    fn dispersion_detects_wrap_around() {
        let spec = baseline();
        let w = spec.waveform().unwrap();
        let err = apply_dispersion(&w, 180.8, 0.0, spec.omega()).unwrap_err();
        match err {
            Error::GridTooShort {
                required_half_width, ..
            } => assert!(required_half_width > 300.0, "{required_half_width}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_follows_vector_potential() {
        let w = baseline().waveform().unwrap();
        let mat = MaterialSpec::new(1.55, 1.0).unwrap();
        let traj = bloch_trajectory(&w, 0.0, &mat).unwrap();
        // (E0/ω)/ħ
        assert!((traj.max_abs_k() - 0.645_162_8).abs() < 1e-5, "{}", traj.max_abs_k());
        assert!(traj.k[0].abs() < 1e-8 && traj.k[traj.len() - 1].abs() < 1e-8);
        for (k, b) in traj.k.iter().zip(&traj.bias) {
            assert!((b - 2.0 * HBAR * k).abs() < 1e-15);
        }
    }

    #[test]
    fn field_free_trajectory_is_constant() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let zeros = vec![0.0; 100];
        let w = SampledWaveform::from_samples(t, zeros.clone(), zeros, 0.0).unwrap();
        let mat = MaterialSpec::new(1.0, 1.0).unwrap();
        let traj = bloch_trajectory(&w, 0.5, &mat).unwrap();
        assert!(traj.k.iter().all(|&k| k == 0.5));
        assert!(traj.bias.iter().all(|&b| (b - 0.658_211_956_9).abs() < 1e-12));
    }

    #[test]
    fn hermite_interpolation_is_exact_for_cubics() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let cubic = |x: f64| 0.3 * x * x * x - x * x + 2.0;
        let slope = |x: f64| 0.9 * x * x - 2.0 * x;
        let traj = Trajectory {
            k0: 2.0,
            k: t.iter().map(|&x| cubic(x)).collect(),
            k_rate: t.iter().map(|&x| slope(x)).collect(),
            bias: vec![0.0; t.len()],
            t,
            omega0: 0.0,
        };
        for x in [0.1, 1.37, 2.5, 4.99] {
            assert!((traj.k_at(x) - cubic(x)).abs() < 1e-12);
        }
    }
}
