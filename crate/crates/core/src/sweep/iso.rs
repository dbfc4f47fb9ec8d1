//! Current integrated along lines of constant peak field.
//!
//! At fixed ħω and v_F, `γ = ω·M·ħω / (2 v_F e E0)`, so each E0 is a straight
//! line γ ∝ M through the map.

use crate::constants::{angular_frequency, ELEMENTARY_CHARGE as E_CHARGE};
use crate::error::{invalid, Result};

use super::{CellStatus, MapResult};

/// Integrated current for one peak field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoFieldPoint {
    /// V/nm.
    pub peak_field: f64,
    /// ∫ j_res dM over the covered part of the M axis, e/fs.
    pub j_int: f64,
    /// Fraction of the M range where the line lies inside the map and every
    /// interpolation corner is available.
    pub coverage: f64,
}

impl IsoFieldPoint {
    pub fn is_partial(&self) -> bool {
        self.coverage < 1.0
    }
}

/// γ on the iso-field line through `m_photon`.
pub fn iso_gamma(m_photon: f64, peak_field: f64, photon_energy: f64, fermi_velocity: f64) -> f64 {
    angular_frequency(photon_energy) * m_photon * photon_energy / (2.0 * fermi_velocity * E_CHARGE * peak_field)
}

// Bilinear in (log γ, M); None outside the grid or next to a failed cell.
fn interpolate(map: &MapResult, gamma: f64, m_photon: f64) -> Option<f64> {
    let ga = &map.grid.gamma_axis;
    let ma = &map.grid.m_axis;
    let locate = |x: f64, lo: f64, hi: f64, n: usize| -> Option<(usize, f64)> {
        if n == 1 {
            return ((x - lo).abs() <= 1e-12 * lo.abs().max(1.0)).then_some((0, 0.0));
        }
        let span = hi - lo;
        let pos = (x - lo) / span * (n - 1) as f64;
        let eps = 1e-9;
        if pos < -eps || pos > (n - 1) as f64 + eps {
            return None;
        }
        let pos = pos.clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        Some((i, pos - i as f64))
    };
    let (gi, gs) = locate(gamma.ln(), ga.min.ln(), ga.max.ln(), ga.count)?;
    let (mi, ms) = locate(m_photon, ma.min, ma.max, ma.count)?;
    let value = |r: usize, c: usize| -> Option<f64> {
        let cell = map.cell(r, c);
        (cell.status == CellStatus::Done && cell.j_res.is_finite()).then_some(cell.j_res)
    };
    let (r1, c1) = ((gi + 1).min(ga.count - 1), (mi + 1).min(ma.count - 1));
    let mut acc = 0.0;
    for (r, wr) in [(gi, 1.0 - gs), (r1, gs)] {
        for (c, wc) in [(mi, 1.0 - ms), (c1, ms)] {
            let w = wr * wc;
            if w != 0.0 {
                acc += w * value(r, c)?;
            }
        }
    }
    Some(acc)
}

/// Integrates the current map along iso-field lines by the trapezoid rule in
/// M, sampling `samples_per_cell` points per M-axis cell.
pub fn integrate_iso_field(map: &MapResult, peak_fields: &[f64], samples_per_cell: usize) -> Result<Vec<IsoFieldPoint>> {
    let ma = &map.grid.m_axis;
    if ma.count < 2 {
        return Err(invalid("m_axis", "iso-field integration needs at least two M samples"));
    }
    if samples_per_cell == 0 {
        return Err(invalid("samples_per_cell", "must be ≥ 1"));
    }
    let n = (ma.count - 1) * samples_per_cell + 1;
    let dm = (ma.max - ma.min) / (n - 1) as f64;
    peak_fields
        .iter()
        .map(|&e0| {
            if !(e0.is_finite() && e0 > 0.0) {
                return Err(invalid("peak_field", format!("must be finite and > 0, got {e0}")));
            }
            let values: Vec<Option<f64>> = (0..n)
                .map(|i| {
                    let m = if i == n - 1 { ma.max } else { ma.min + i as f64 * dm };
                    let gamma = iso_gamma(m, e0, map.grid.photon_energy, map.grid.fermi_velocity);
                    interpolate(map, gamma, m)
                })
                .collect();
            let mut j_int = 0.0;
            let mut covered = 0usize;
            for w in values.windows(2) {
                if let (Some(a), Some(b)) = (w[0], w[1]) {
                    j_int += 0.5 * (a + b) * dm;
                    covered += 1;
                }
            }
            Ok(IsoFieldPoint {
                peak_field: e0,
                j_int,
                coverage: covered as f64 / (n - 1) as f64,
            })
        })
        .collect()
}
