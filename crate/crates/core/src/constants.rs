//! Physical constants in the {eV, fs, nm, e} unit system.
//!
//! Electric field is measured in V/nm (= eV per e·nm), vector potential in
//! V·fs/nm, wave numbers in 1/nm and currents in e/fs.

/// Reduced Planck constant, eV·fs.
pub const HBAR: f64 = 0.6582119569;
/// Speed of light, nm/fs.
pub const SPEED_OF_LIGHT: f64 = 299.792458;
/// Elementary charge in units of e.
pub const ELEMENTARY_CHARGE: f64 = 1.0;
/// Spin degeneracy.
pub const SPIN_DEGENERACY: f64 = 2.0;

/// The constant set shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub hbar: f64,
    pub c: f64,
    pub e: f64,
    pub gs: f64,
}

impl Constants {
    pub const fn natural() -> Self {
        Constants {
            hbar: HBAR,
            c: SPEED_OF_LIGHT,
            e: ELEMENTARY_CHARGE,
            gs: SPIN_DEGENERACY,
        }
    }
}

impl Default for Constants {
    fn default() -> Self {
        Self::natural()
    }
}

/// Angular frequency (1/fs) of a photon with the given energy (eV).
#[inline]
pub fn angular_frequency(photon_energy: f64) -> f64 {
    photon_energy / HBAR
}
