//! Residual conduction-band population and residual ballistic current.
//!
//! After the pulse every electron is back at its initial wave number k0, so
//! the current is carried by the k0-resolved residual population:
//! `j = g_s e ∫ v₊(k0) (2ρ(k0) − 1) dk0 / 2π` with `v₊ = ħ⁻¹ ∂ε₊/∂k`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::constants::{Constants, ELEMENTARY_CHARGE as E_CHARGE, HBAR};
use crate::error::{invalid, Error, Result};
use crate::model::MaterialSpec;
use crate::propagator::{residual_population, MIN_SAMPLES_PER_PERIOD};
use crate::pulse::{bloch_trajectory, PulseSpec, SampledWaveform, TimeGridSpec, SAMPLES_PER_CYCLE};

/// Residual population allowed at the edges of the k0 window.
pub const EDGE_POPULATION: f64 = 1e-6;

// Safety margin over the propagator's minimum samples per fastest period.
const SAMPLES_PER_FAST_PERIOD: f64 = MIN_SAMPLES_PER_PERIOD * 1.05;

// k0 values are grouped into this many bands of |k0|, each propagated on a
// grid just fine enough for its largest |k0|.
const K_BANDS: usize = 8;

/// Upper-band group velocity `2ħ v_F² k / ε(k)` in nm/fs. The lower band
/// moves with the opposite velocity.
pub fn band_velocity(mat: &MaterialSpec, k: f64) -> f64 {
    let eps = mat.splitting(k);
    if eps == 0.0 {
        return 0.0;
    }
    2.0 * HBAR * mat.fermi_velocity * mat.fermi_velocity * k / eps
}

/// Residual populations on a uniform, symmetric k0 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KResolvedResult {
    pub k0: Vec<f64>,
    pub rho_cb_res: Vec<f64>,
    pub v_cb: Vec<f64>,
}

impl KResolvedResult {
    pub fn new(mat: &MaterialSpec, k0: Vec<f64>, rho_cb_res: Vec<f64>) -> Result<Self> {
        if k0.len() != rho_cb_res.len() {
            return Err(invalid("rho_cb_res", "length differs from the k0 grid"));
        }
        if k0.len() < 3 {
            return Err(invalid("k0", "need at least three points"));
        }
        let v_cb = k0.iter().map(|&k| band_velocity(mat, k)).collect();
        Ok(KResolvedResult { k0, rho_cb_res, v_cb })
    }

    pub fn len(&self) -> usize {
        self.k0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k0.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.k0[self.len() - 1] - self.k0[0]) / (self.len() - 1) as f64
    }

    /// Largest residual population at the two window edges.
    pub fn edge_population(&self) -> f64 {
        self.rho_cb_res[0].max(self.rho_cb_res[self.len() - 1])
    }

    fn check_grid(&self) -> Result<()> {
        let n = self.len();
        let dk = self.spacing();
        if !(dk > 0.0) {
            return Err(Error::KWindow("k0 grid must be increasing".into()));
        }
        let scale = self.k0[n - 1].abs();
        for i in 0..n {
            let uniform = (self.k0[i] - (self.k0[0] + i as f64 * dk)).abs();
            let mirror = (self.k0[i] + self.k0[n - 1 - i]).abs();
            if uniform > 1e-9 * scale {
                return Err(Error::KWindow(format!("k0 grid not uniform at index {i}")));
            }
            if mirror > 1e-12 * scale {
                return Err(Error::KWindow(format!("k0 grid not symmetric at index {i}")));
            }
        }
        Ok(())
    }
}

/// Symmetric k0 grid `(i − c)·dk` with `n` points spanning `[-half_width, half_width]`.
pub fn symmetric_k_grid(half_width: f64, n: usize) -> Vec<f64> {
    let n = n.max(3) | 1;
    let c = (n / 2) as f64;
    let dk = half_width / c;
    (0..n).map(|i| (i as f64 - c) * dk).collect()
}

/// Residual current in e/fs, trapezoidal over the k0 grid.
///
/// The filled-band term `−v₊` integrates to zero on the symmetric grid; it is
/// kept explicitly so that mirrored terms cancel pairwise.
pub fn residual_current(res: &KResolvedResult, constants: &Constants) -> Result<f64> {
    res.check_grid()?;
    let edge = res.edge_population();
    if !(edge < EDGE_POPULATION) {
        return Err(Error::KWindow(format!(
            "edge population {edge:.3e} not below {EDGE_POPULATION:.0e}; widen the k0 window"
        )));
    }
    let n = res.len();
    let f = |i: usize| res.v_cb[i] * (2.0 * res.rho_cb_res[i] - 1.0);
    // Pairwise over mirrored points; endpoints carry the half weight.
    let mut sum = 0.5 * (f(0) + f(n - 1));
    for i in 1..n / 2 {
        sum += f(i) + f(n - 1 - i);
    }
    sum += f(n / 2);
    Ok(constants.gs * constants.e * sum * res.spacing() / (2.0 * PI))
}

/// k0 window and sampling policy for current calculations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KWindowPolicy {
    /// Window half-width is `scale·(e max|A|/ħ) + margin`.
    pub scale: f64,
    /// 1/nm.
    pub margin: f64,
    /// Initial number of k0 points (odd).
    pub points: usize,
    /// Window growth factor per extension.
    pub extension_factor: f64,
    pub max_extensions: usize,
    /// Relative change of j below which refinement stops.
    pub refine_tolerance: f64,
    pub max_refinements: usize,
    /// Absolute floor on the refinement test, as a fraction of the current
    /// scale `g_s e v_F K / π`.
    pub zero_floor: f64,
}

impl Default for KWindowPolicy {
    fn default() -> Self {
        KWindowPolicy {
            scale: 1.5,
            margin: 3.0,
            points: 257,
            extension_factor: 1.25,
            max_extensions: 8,
            refine_tolerance: 0.01,
            max_refinements: 2,
            zero_floor: 1e-6,
        }
    }
}

impl KWindowPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.margin >= 0.0 && self.scale + self.margin > 0.0) {
            return Err(invalid("k_window", "scale and margin must be ≥ 0, not both zero"));
        }
        if self.points < 3 || self.points % 2 == 0 {
            return Err(invalid("k_points", format!("must be odd and ≥ 3, got {}", self.points)));
        }
        if !(self.extension_factor > 1.0) {
            return Err(invalid("k_extension", "growth factor must exceed 1"));
        }
        if !(self.refine_tolerance > 0.0) {
            return Err(invalid("k_refine_tolerance", "must be > 0"));
        }
        Ok(())
    }

    /// Initial half-width for a pulse.
    pub fn half_width(&self, spec: &PulseSpec) -> f64 {
        self.scale * E_CHARGE * spec.vector_potential_amplitude() / HBAR + self.margin
    }
}

/// Time grid for a pulse that resolves both the optical cycle and the
/// fastest interband phase for electrons with `|k0| ≤ k0_max`.
pub fn propagation_grid(mat: &MaterialSpec, spec: &PulseSpec, k0_max: f64) -> TimeGridSpec {
    let k_max = k0_max.abs() + E_CHARGE * spec.vector_potential_amplitude() / HBAR;
    let eps = mat.splitting(k_max);
    let mut step = spec.optical_period() / SAMPLES_PER_CYCLE;
    if eps > 0.0 {
        step = step.min(2.0 * PI * HBAR / eps / SAMPLES_PER_FAST_PERIOD);
    }
    TimeGridSpec::symmetric(spec.default_half_width(), step)
}

/// Residual population for each k0, evaluated in parallel and returned in
/// input order.
pub fn k_resolved_populations(
    mat: &MaterialSpec,
    w: &SampledWaveform,
    k0: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    k0.par_iter()
        .map(|&k| {
            let traj = bloch_trajectory(w, k, mat)?;
            residual_population(mat, &traj, tol)
        })
        .collect()
}

/// Like [`k_resolved_populations`], but synthesizes the pulse itself. The
/// k axis is cut into bands of width `band_width`; each band is propagated on
/// a grid just fine enough for its largest |k0|, so the result for a given k0
/// depends only on k0 and `band_width`.
pub fn banded_populations(
    mat: &MaterialSpec,
    spec: &PulseSpec,
    band_width: f64,
    k0: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    if !(band_width > 0.0) {
        return Err(invalid("band_width", "must be > 0"));
    }
    let band_of = |k: f64| (k.abs() / band_width).ceil() as usize;
    let mut bands: Vec<usize> = k0.iter().map(|&k| band_of(k)).collect();
    bands.sort_unstable();
    bands.dedup();
    let waveforms: Vec<SampledWaveform> = bands
        .par_iter()
        .map(|&b| spec.waveform_on(&propagation_grid(mat, spec, band_width * b as f64)))
        .collect::<Result<_>>()?;
    k0.par_iter()
        .map(|&k| {
            let idx = bands.binary_search(&band_of(k)).expect("band listed above");
            let traj = bloch_trajectory(&waveforms[idx], k, mat)?;
            residual_population(mat, &traj, tol)
        })
        .collect()
}

/// Converged residual current with its window bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentEstimate {
    /// e/fs.
    pub j: f64,
    pub resolved: KResolvedResult,
    pub half_width: f64,
    pub extensions: usize,
    pub refinements: usize,
    /// False when refinement stopped at the cap before meeting the tolerance.
    pub converged: bool,
}

/// Residual current for one pulse.
///
/// The k0 window is widened, keeping the grid spacing and every computed
/// point, until the edge populations drop below [`EDGE_POPULATION`]. The grid
/// is then halved, again reusing points, until j changes by less than the
/// refinement tolerance or the refinement cap is hit.
pub fn converged_current(
    mat: &MaterialSpec,
    spec: &PulseSpec,
    policy: &KWindowPolicy,
    constants: &Constants,
    tol: f64,
) -> Result<CurrentEstimate> {
    policy.validate()?;
    spec.validate()?;
    let initial = policy.half_width(spec);
    let band_width = initial / K_BANDS as f64;
    let populations = |k: &[f64]| banded_populations(mat, spec, band_width, k, tol);

    let mut half_points = policy.points / 2;
    let dk = initial / half_points as f64;
    let mut k0 = symmetric_k_grid(initial, policy.points);
    let mut rho = populations(&k0)?;
    let mut extensions = 0;
    loop {
        let edge = rho[0].max(rho[rho.len() - 1]);
        if edge < EDGE_POPULATION {
            break;
        }
        if extensions == policy.max_extensions {
            return Err(Error::KWindow(format!(
                "edge population {edge:.3e} still above {EDGE_POPULATION:.0e} at half-width {:.4} nm⁻¹",
                k0[k0.len() - 1]
            )));
        }
        let added = ((half_points as f64) * (policy.extension_factor - 1.0)).ceil() as usize;
        let outer: Vec<f64> = (1..=added).map(|i| (half_points + i) as f64 * dk).collect();
        let mut both: Vec<f64> = outer.iter().rev().map(|k| -k).collect();
        both.extend_from_slice(&outer);
        let new_rho = populations(&both)?;
        let (left, right) = new_rho.split_at(added);
        half_points += added;
        let n = 2 * half_points + 1;
        let c = half_points as f64;
        k0 = (0..n).map(|i| (i as f64 - c) * dk).collect();
        rho = left.iter().chain(rho.iter()).chain(right.iter()).copied().collect();
        extensions += 1;
    }
    let half_width = k0[k0.len() - 1];

    let floor = policy.zero_floor * constants.gs * constants.e * mat.fermi_velocity * half_width / PI;
    let mut resolved = KResolvedResult::new(mat, k0.clone(), rho.clone())?;
    let mut j = residual_current(&resolved, constants)?;
    let mut refinements = 0;
    let mut converged = false;
    while refinements < policy.max_refinements {
        let n = k0.len();
        let fine = symmetric_k_grid(half_width, 2 * n - 1);
        let mids: Vec<f64> = fine.iter().skip(1).step_by(2).copied().collect();
        let mid_rho = populations(&mids)?;
        let mut fine_rho = Vec::with_capacity(2 * n - 1);
        for i in 0..n {
            fine_rho.push(rho[i]);
            if i + 1 < n {
                fine_rho.push(mid_rho[i]);
            }
        }
        k0 = fine;
        rho = fine_rho;
        resolved = KResolvedResult::new(mat, k0.clone(), rho.clone())?;
        let j_fine = residual_current(&resolved, constants)?;
        refinements += 1;
        let change = (j_fine - j).abs();
        j = j_fine;
        if change <= policy.refine_tolerance * j.abs() || change <= floor {
            converged = true;
            break;
        }
    }
    Ok(CurrentEstimate {
        j,
        resolved,
        half_width,
        extensions,
        refinements,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(gap: f64) -> MaterialSpec {
        MaterialSpec::new(gap, 1.0).unwrap()
    }

    #[test]
    fn velocity_limits() {
        assert_eq!(band_velocity(&mat(1.55), 0.0), 0.0);
        let gapless = mat(0.0);
        assert!((band_velocity(&gapless, 2.0) - 1.0).abs() < 1e-15);
        assert!((band_velocity(&gapless, -0.1) + 1.0).abs() < 1e-15);
        // 2ħ / √(1.55² + (2ħ)²)
        let v = band_velocity(&mat(1.55), 1.0);
        assert!((v - 0.647_341_2).abs() < 1e-6, "{v}");
    }

    #[test]
    fn grid_is_exactly_mirrored() {
        let k = symmetric_k_grid(7.3, 257);
        assert_eq!(k.len(), 257);
        assert_eq!(k[128], 0.0);
        for i in 0..257 {
            assert_eq!(k[i], -k[256 - i]);
        }
        assert!((k[256] - 7.3).abs() < 1e-14);
    }

    #[test]
    fn even_profile_carries_no_current() {
        let m = mat(1.0);
        let k = symmetric_k_grid(5.0, 101);
        let rho: Vec<f64> = k.iter().map(|k| 0.3 * (-(k * k)).exp()).collect();
        let res = KResolvedResult::new(&m, k.clone(), rho).unwrap();
        assert_eq!(residual_current(&res, &Constants::natural()).unwrap(), 0.0);
        let empty = KResolvedResult::new(&m, k, vec![0.0; 101]).unwrap();
        assert_eq!(residual_current(&empty, &Constants::natural()).unwrap(), 0.0);
    }

    #[test]
    fn odd_profile_matches_quadrature() {
        let m = mat(0.0);
        let k = symmetric_k_grid(6.0, 401);
        // ρ = 0.1 exp(-(k-1)²) on linear bands: j = g_s ∫ sign(k) 2ρ dk/2π
        let rho: Vec<f64> = k.iter().map(|k| 0.1 * (-(k - 1.0) * (k - 1.0)).exp()).collect();
        let res = KResolvedResult::new(&m, k, rho).unwrap();
        let j = residual_current(&res, &Constants::natural()).unwrap();
        // 2·2·0.1·√π·erf(1) / 2π
        let expected = 0.4 * PI.sqrt() * 0.842_700_792_949_714_9 / (2.0 * PI);
        assert!((j - expected).abs() < 2e-4, "{j} vs {expected}");
    }

    #[test]
    fn rejects_bad_windows() {
        let m = mat(1.0);
        let k = symmetric_k_grid(5.0, 11);
        let mut rho = vec![0.0; 11];
        rho[0] = 1e-5;
        let res = KResolvedResult::new(&m, k.clone(), rho).unwrap();
        assert!(matches!(residual_current(&res, &Constants::natural()), Err(Error::KWindow(_))));
        let shifted: Vec<f64> = k.iter().map(|k| k + 0.1).collect();
        let res = KResolvedResult::new(&m, shifted, vec![0.0; 11]).unwrap();
        assert!(matches!(residual_current(&res, &Constants::natural()), Err(Error::KWindow(_))));
        assert!(KResolvedResult::new(&m, k, vec![0.0; 3]).is_err());
    }
}
