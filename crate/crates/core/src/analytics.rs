//! Closed-form layer: complete elliptic integral of the second kind, the
//! intraband-shifted photon resonance condition, the Landau-Zener formula and
//! a linear-sweep avoided-crossing integrator used as ground truth.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::constants::HBAR;
use crate::error::{invalid, Result};
use crate::model::MaterialSpec;

// Carlson duplication: these stopping tolerances bound the truncation of the
// fifth-order series below 1e-16 relative.
const RF_ERRTOL: f64 = 0.0025;
const RD_ERRTOL: f64 = 0.0015;

/// Carlson's symmetric integral `R_F(x, y, z)`. At most one argument may be zero.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    let (mut x, mut y, mut z) = (x, y, z);
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        let ave = (x + y + z) / 3.0;
        let dx = (ave - x) / ave;
        let dy = (ave - y) / ave;
        let dz = (ave - z) / ave;
        if dx.abs().max(dy.abs()).max(dz.abs()) <= RF_ERRTOL {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 + (e2 / 24.0 - 0.1 - 3.0 * e3 / 44.0) * e2 + e3 / 14.0) / ave.sqrt();
        }
    }
}

/// Carlson's symmetric integral `R_D(x, y, z)`, `z > 0`.
pub fn carlson_rd(x: f64, y: f64, z: f64) -> f64 {
    const C1: f64 = 3.0 / 14.0;
    const C2: f64 = 1.0 / 6.0;
    const C3: f64 = 9.0 / 22.0;
    const C4: f64 = 3.0 / 26.0;
    const C5: f64 = 0.25 * C3;
    const C6: f64 = 1.5 * C4;

    let (mut x, mut y, mut z) = (x, y, z);
    let mut sum = 0.0;
    let mut fac = 1.0;
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        sum += fac / (sz * (z + lambda));
        fac *= 0.25;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        let ave = 0.2 * (x + y + 3.0 * z);
        let dx = (ave - x) / ave;
        let dy = (ave - y) / ave;
        let dz = (ave - z) / ave;
        if dx.abs().max(dy.abs()).max(dz.abs()) <= RD_ERRTOL {
            let ea = dx * dy;
            let eb = dz * dz;
            let ec = ea - eb;
            let ed = ea - 6.0 * eb;
            let ee = ed + ec + ec;
            let series = 1.0
                + ed * (-C1 + C5 * ed - C6 * dz * ee)
                + dz * (C2 * ee + dz * (-C3 * ec + dz * C4 * ea));
            return 3.0 * sum + fac * series / (ave * ave.sqrt());
        }
    }
}

/// Complete elliptic integral of the second kind in the parameter convention
/// `E(m) = ∫₀^{π/2} sqrt(1 - m sin²θ) dθ`, defined for `m ≤ 1`.
pub fn elliptic_e2(m: f64) -> Result<f64> {
    if m.is_nan() || m > 1.0 {
        return Err(invalid("m", format!("elliptic parameter must be <= 1, got {m}")));
    }
    if m == 1.0 {
        return Ok(1.0);
    }
    if m == 0.0 {
        return Ok(FRAC_PI_2);
    }
    if m == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    let y = 1.0 - m;
    Ok(carlson_rf(0.0, y, 1.0) - m / 3.0 * carlson_rd(0.0, y, 1.0))
}

/// Band gap in photon units at which the `n`-th photon resonance sits for
/// Keldysh parameter `gamma`: `M = nπ / (2 E(-γ⁻²))`.
pub fn resonance_condition(n: u32, gamma: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "photon order must be >= 1"));
    }
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    let m = -1.0 / (gamma * gamma);
    Ok(n as f64 * PI / (2.0 * elliptic_e2(m)?))
}

/// Keldysh parameter at which the `n`-th resonance crosses `m_photon`.
///
/// A solution exists only for `n > m_photon`; the resonance approaches
/// `M = n` as γ grows and falls towards zero as γ shrinks.
pub fn resonance_gamma(n: u32, m_photon: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "photon order must be >= 1"));
    }
    if !(m_photon > 0.0 && (n as f64) > m_photon) {
        return Err(invalid(
            "M",
            format!("order {n} resonance never reaches M = {m_photon}"),
        ));
    }
    // M(γ) increases monotonically, so bisect in log γ.
    let f = |g: f64| resonance_condition(n, g).map(|m| m - m_photon);
    let (mut lo, mut hi) = (1e-8_f64, 1.0_f64);
    while f(hi)? < 0.0 {
        hi *= 10.0;
        if hi > 1e12 {
            return Err(invalid("M", "resonance root not bracketed"));
        }
    }
    if f(lo)? > 0.0 {
        return Err(invalid("M", "resonance root below gamma = 1e-8"));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Sampled resonance line of photon order `n` in the (γ, M) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceCurve {
    pub n: u32,
    /// Even orders are symmetry-suppressed for electrons starting at k0 = 0.
    pub even: bool,
    pub points: Vec<(f64, f64)>,
}

pub fn resonance_curve(n: u32, gammas: &[f64]) -> Result<ResonanceCurve> {
    let points = gammas
        .iter()
        .map(|&g| resonance_condition(n, g).map(|m| (g, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResonanceCurve {
        n,
        even: n % 2 == 0,
        points,
    })
}

/// `P_LZ = exp(-2π δ_LZ)`.
pub fn lz_probability(delta_lz: f64) -> Result<f64> {
    if delta_lz.is_nan() || delta_lz < 0.0 {
        return Err(invalid("delta_lz", format!("must be >= 0, got {delta_lz}")));
    }
    Ok((-2.0 * PI * delta_lz).exp())
}

/// `δ_LZ = Δ² / (4 ħ α0)` for a linear bias sweep of rate `alpha0` (eV/fs).
pub fn lz_delta(gap: f64, alpha0: f64) -> f64 {
    gap * gap / (4.0 * HBAR * alpha0)
}

/// Outcome of a finite-window linear sweep through an avoided crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct LzSweep {
    /// Final upper-adiabatic population after starting in the lower state.
    pub transfer: f64,
    /// Half-width of the sweep in fs.
    pub half_width: f64,
    /// Estimate of the population error from starting and stopping at a
    /// finite distance from the crossing.
    pub truncation_bound: f64,
    /// Number of exponential steps in the converged run.
    pub steps: usize,
    /// Set when the window is narrower than ten transition widths.
    pub warning: Option<String>,
}

/// Sweeps `H(t) = -½ [[α0 t, Δ], [Δ, -α0 t]]` over `t ∈ [-W, W]`, where
/// `W = window · sqrt(ħ/α0)`, starting in the lower adiabatic state.
///
/// Integration uses a fourth-order commutator Magnus exponential on a uniform
/// grid, halving the step until two successive results agree within `tol`.
pub fn lz_oracle_sweep(mat: &MaterialSpec, alpha0: f64, window: f64, tol: f64) -> Result<LzSweep> {
    mat.validate()?;
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        return Err(invalid("alpha0", format!("must be > 0, got {alpha0}")));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(invalid("window", format!("must be > 0, got {window}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be > 0, got {tol}")));
    }
    let gap = mat.gap;
    let half_width = window * (HBAR / alpha0).sqrt();
    let delta = lz_delta(gap, alpha0);
    let p = (-2.0 * PI * delta).exp();
    let truncation_bound = 2.0 * p.sqrt() * delta.sqrt() / window.powi(3) + delta / window.powi(6);
    let warning = (window < 10.0).then(|| {
        format!("sweep window {window} < 10 transition widths; truncation error up to {truncation_bound:.2e}")
    });

    let eps_max = gap.hypot(alpha0 * half_width);
    let mut steps = ((2.0 * half_width * eps_max / HBAR) / 0.25).ceil().max(64.0) as usize;
    let mut previous = magnus_linear_sweep(gap, alpha0, half_width, steps);
    loop {
        steps *= 2;
        let current = magnus_linear_sweep(gap, alpha0, half_width, steps);
        if (current - previous).abs() <= tol || steps > 1 << 26 {
            return Ok(LzSweep {
                transfer: current,
                half_width,
                truncation_bound,
                steps,
                warning,
            });
        }
        previous = current;
    }
}

// Eigenvector of the real symmetric matrix [[a, c], [c, -a]] for eigenvalue
// `lambda`, normalized.
fn symmetric_eigvec(a: f64, c: f64, lambda: f64) -> (f64, f64) {
    let v1 = (c, lambda - a);
    let v2 = (a + lambda, c);
    let n1 = v1.0.hypot(v1.1);
    let n2 = v2.0.hypot(v2.1);
    if n1 >= n2 {
        (v1.0 / n1, v1.1 / n1)
    } else {
        (v2.0 / n2, v2.1 / n2)
    }
}

fn magnus_linear_sweep(gap: f64, alpha0: f64, half_width: f64, steps: usize) -> f64 {
    // H(t) = -(α0 t / 2) σz - (Δ/2) σx
    let h = 2.0 * half_width / steps as f64;
    let t0 = -half_width;
    let node = 3f64.sqrt() / 6.0;

    let a = -alpha0 * t0 / 2.0;
    let c = -gap / 2.0;
    let r = a.hypot(c);
    let (l0, l1) = symmetric_eigvec(a, c, -r);
    let mut psi = [Complex64::new(l0, 0.0), Complex64::new(l1, 0.0)];

    let i = Complex64::i();
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let z1 = -alpha0 * (t + (0.5 - node) * h) / 2.0;
        let z2 = -alpha0 * (t + (0.5 + node) * h) / 2.0;
        let x = -gap / 2.0;
        // [H2, H1] = [z2 σz + x σx, z1 σz + x σx] = 2i x (z2 - z1) σy
        // Ω = -i h/ħ H̄ + (√3/12) h² (-i/ħ)² [H2, H1] = -i (ax σx + ay σy + az σz)
        let ax = h / HBAR * x;
        let az = h / HBAR * 0.5 * (z1 + z2);
        let ay = 3f64.sqrt() / 12.0 * h * h / (HBAR * HBAR) * 2.0 * x * (z2 - z1);
        let theta = (ax * ax + ay * ay + az * az).sqrt();
        let (cs, sinc) = if theta > 0.0 {
            (theta.cos(), theta.sin() / theta)
        } else {
            (1.0, 1.0)
        };
        let u11 = Complex64::new(cs, -sinc * az);
        let u22 = Complex64::new(cs, sinc * az);
        let u12 = -i * sinc * Complex64::new(ax, -ay);
        let u21 = -i * sinc * Complex64::new(ax, ay);
        psi = [u11 * psi[0] + u12 * psi[1], u21 * psi[0] + u22 * psi[1]];
    }

    let a = -alpha0 * half_width / 2.0;
    let r = a.hypot(c);
    let (u0, u1) = symmetric_eigvec(a, c, r);
    (psi[0] * u0 + psi[1] * u1).norm_sqr()
}
