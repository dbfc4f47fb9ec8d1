//! Material and drive parameters, closed-form adiabaticity parameters and the
//! five-regime classifier.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::constants::{angular_frequency, ELEMENTARY_CHARGE as E_CHARGE, HBAR, SPEED_OF_LIGHT};
use crate::error::{invalid, Result};

/// Band pair with gap `gap` (eV) and crossing slope `fermi_velocity` (nm/fs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSpec {
    pub gap: f64,
    pub fermi_velocity: f64,
}

impl MaterialSpec {
    pub fn new(gap: f64, fermi_velocity: f64) -> Result<Self> {
        let spec = MaterialSpec {
            gap,
            fermi_velocity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return Err(invalid("gap", format!("must be finite and >= 0, got {}", self.gap)));
        }
        if !(self.fermi_velocity.is_finite() && self.fermi_velocity > 0.0) {
            return Err(invalid(
                "fermi_velocity",
                format!("must be finite and > 0, got {}", self.fermi_velocity),
            ));
        }
        Ok(())
    }

    /// Energy splitting `ε(k) = sqrt(Δ² + (2ħ v_F k)²)` in eV.
    #[inline]
    pub fn splitting(&self, k: f64) -> f64 {
        let bias = 2.0 * HBAR * self.fermi_velocity * k;
        self.gap.hypot(bias)
    }

    /// Effective mass at the band extremum, `Δ / (4 v_F²)` in eV·fs²/nm².
    pub fn effective_mass(&self) -> f64 {
        self.gap / (4.0 * self.fermi_velocity * self.fermi_velocity)
    }
}

/// Photon energy (eV) and peak field (V/nm) of the driving light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    pub photon_energy: f64,
    pub peak_field: f64,
}

impl DriveParams {
    pub fn new(photon_energy: f64, peak_field: f64) -> Result<Self> {
        let drive = DriveParams {
            photon_energy,
            peak_field,
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_energy.is_finite() && self.photon_energy > 0.0) {
            return Err(invalid(
                "photon_energy",
                format!("must be finite and > 0, got {}", self.photon_energy),
            ));
        }
        if !(self.peak_field.is_finite() && self.peak_field > 0.0) {
            return Err(invalid(
                "peak_field",
                format!("must be finite and > 0, got {}", self.peak_field),
            ));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        angular_frequency(self.photon_energy)
    }

    /// Drive that places a band pair with Fermi velocity `fermi_velocity` at
    /// the dimensionless point `(gamma, m_photon)` for the given photon energy.
    /// Returns the matching material alongside the drive.
    pub fn from_dimensionless(
        gamma: f64,
        m_photon: f64,
        photon_energy: f64,
        fermi_velocity: f64,
    ) -> Result<(MaterialSpec, DriveParams)> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("must be finite and > 0, got {gamma}")));
        }
        if !(m_photon.is_finite() && m_photon > 0.0) {
            return Err(invalid("M", format!("must be finite and > 0, got {m_photon}")));
        }
        let gap = m_photon * photon_energy;
        let omega = angular_frequency(photon_energy);
        let peak_field = omega * gap / (2.0 * fermi_velocity * E_CHARGE * gamma);
        Ok((
            MaterialSpec::new(gap, fermi_velocity)?,
            DriveParams::new(photon_energy, peak_field)?,
        ))
    }
}

/// The five excitation regimes of the driven two-level system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    PerturbativeMultiphoton,
    ImpulsiveLZ,
    NonImpulsiveLZ,
    Adiabatic,
    AdiabaticImpulsiveLZS,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::PerturbativeMultiphoton,
        Regime::ImpulsiveLZ,
        Regime::NonImpulsiveLZ,
        Regime::Adiabatic,
        Regime::AdiabaticImpulsiveLZS,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::PerturbativeMultiphoton => "PerturbativeMultiphoton",
            Regime::ImpulsiveLZ => "ImpulsiveLZ",
            Regime::NonImpulsiveLZ => "NonImpulsiveLZ",
            Regime::Adiabatic => "Adiabatic",
            Regime::AdiabaticImpulsiveLZS => "AdiabaticImpulsiveLZS",
        }
    }

    /// Compact numeric code used in binary checkpoints.
    pub(crate) fn code(&self) -> u8 {
        match self {
            Regime::PerturbativeMultiphoton => 1,
            Regime::ImpulsiveLZ => 2,
            Regime::NonImpulsiveLZ => 3,
            Regime::Adiabatic => 4,
            Regime::AdiabaticImpulsiveLZS => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Regime> {
        Regime::ALL.iter().copied().find(|r| r.code() == code)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Regime::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown regime `{s}`"))
    }
}

/// Boundaries of the regime decision cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    /// Keldysh boundary between perturbative and field-driven excitation.
    pub gamma_boundary: f64,
    /// `z_R` below which transitions are not impulsive.
    pub z_r_boundary: f64,
    /// `P_LZ` at or above which passages are (nearly) diabatic.
    pub p_hi: f64,
    /// `P_LZ` at or below which motion is adiabatic.
    pub p_lo: f64,
    /// Keldysh parameter below which magnetic-field effects matter.
    pub relativistic_gamma: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            gamma_boundary: 1.0,
            z_r_boundary: 1.0,
            p_hi: 0.9,
            p_lo: 0.1,
            relativistic_gamma: 0.007,
        }
    }
}

/// All dimensionless parameters of one working point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticityReport {
    pub gamma: f64,
    pub m_photon: f64,
    pub z_r: f64,
    pub delta_lz: f64,
    pub p_lz: f64,
    /// Rabi frequency Ω_R in 1/fs.
    pub rabi_freq: f64,
    /// Interband transition time 2π/(2Ω_R) in fs.
    pub transition_time: f64,
    /// Bias sweep rate α0 = 2 v_F e E0 in eV/fs.
    pub sweep_rate: f64,
    /// Effective mass Δ/(4 v_F²) in eV·fs²/nm².
    pub eff_mass: f64,
    pub a0: f64,
    pub regime: Regime,
    pub relativistic_flag: bool,
}

/// Evaluates every adiabaticity parameter for a material/drive pair using the
/// default regime thresholds.
pub fn compute_report(mat: &MaterialSpec, drive: &DriveParams) -> Result<AdiabaticityReport> {
    compute_report_with(mat, drive, &RegimeThresholds::default())
}

pub fn compute_report_with(
    mat: &MaterialSpec,
    drive: &DriveParams,
    thresholds: &RegimeThresholds,
) -> Result<AdiabaticityReport> {
    mat.validate()?;
    drive.validate()?;
    let omega = drive.omega();
    let vf = mat.fermi_velocity;
    let e0 = drive.peak_field;

    let rabi_freq = vf * E_CHARGE * e0 / drive.photon_energy;
    let gamma = omega * mat.gap / (2.0 * vf * E_CHARGE * e0);
    let m_photon = mat.gap / drive.photon_energy;
    let z_r = 2.0 * rabi_freq / omega;
    let sweep_rate = 2.0 * vf * E_CHARGE * e0;
    let delta_lz = mat.gap * mat.gap / (8.0 * HBAR * vf * E_CHARGE * e0);
    let p_lz = (-2.0 * PI * delta_lz).exp();
    let a0 = if gamma > 0.0 {
        vf / (gamma * SPEED_OF_LIGHT)
    } else {
        f64::INFINITY
    };

    let mut report = AdiabaticityReport {
        gamma,
        m_photon,
        z_r,
        delta_lz,
        p_lz,
        rabi_freq,
        transition_time: 2.0 * PI / (2.0 * rabi_freq),
        sweep_rate,
        eff_mass: mat.effective_mass(),
        a0,
        regime: Regime::PerturbativeMultiphoton,
        relativistic_flag: false,
    };
    report.regime = classify_regime(&report, thresholds);
    report.relativistic_flag = relativistic_boundary(&report, thresholds.relativistic_gamma);
    Ok(report)
}

/// Report for a dimensionless working point `(gamma, m_photon)`. Only the
/// dimensionless fields are meaningful; dimensional fields assume
/// ħω = 1.55 eV and v_F = 1 nm/fs.
pub fn report_from_dimensionless(
    gamma: f64,
    m_photon: f64,
    thresholds: &RegimeThresholds,
) -> Result<AdiabaticityReport> {
    let (mat, drive) = DriveParams::from_dimensionless(gamma, m_photon, 1.55, 1.0)?;
    compute_report_with(&mat, &drive, thresholds)
}

/// Decision cascade over γ, z_R and P_LZ. Total over any report.
pub fn classify_regime(report: &AdiabaticityReport, thresholds: &RegimeThresholds) -> Regime {
    if report.gamma >= thresholds.gamma_boundary {
        Regime::PerturbativeMultiphoton
    } else if report.z_r < thresholds.z_r_boundary {
        Regime::NonImpulsiveLZ
    } else if report.p_lz >= thresholds.p_hi {
        Regime::ImpulsiveLZ
    } else if report.p_lz <= thresholds.p_lo {
        Regime::Adiabatic
    } else {
        Regime::AdiabaticImpulsiveLZS
    }
}

/// True when γ lies strictly below `threshold`, where the magnetic part of
/// the optical field is no longer negligible.
pub fn relativistic_boundary(report: &AdiabaticityReport, threshold: f64) -> bool {
    report.gamma < threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_at(gamma: f64, m: f64) -> AdiabaticityReport {
        report_from_dimensionless(gamma, m, &RegimeThresholds::default()).unwrap()
    }

    #[test]
    fn baseline_working_point() {
        let mat = MaterialSpec::new(1.55, 1.0).unwrap();
        let drive = DriveParams::new(1.55, 1.0).unwrap();
        let r = compute_report(&mat, &drive).unwrap();
        // direct evaluation with ħ = 0.6582119569 eV·fs
        assert!((r.gamma - 1.825_020_022).abs() < 1e-8, "{}", r.gamma);
        assert_eq!(r.m_photon, 1.0);
        assert!((r.z_r - 0.547_939_194).abs() < 1e-8);
        assert!((r.delta_lz - 0.456_255_005).abs() < 1e-8);
        assert!((r.p_lz - 0.056_884_366).abs() < 1e-8, "{}", r.p_lz);
        assert!((r.delta_lz - r.m_photon * r.gamma / 4.0).abs() < 1e-12);
        assert!((r.z_r * r.gamma - r.m_photon).abs() < 1e-12);
        assert_eq!(r.regime, Regime::PerturbativeMultiphoton);
    }

    #[test]
    fn gapless_limit() {
        let mat = MaterialSpec::new(0.0, 1.0).unwrap();
        let drive = DriveParams::new(1.55, 3.0).unwrap();
        let r = compute_report(&mat, &drive).unwrap();
        assert_eq!(r.gamma, 0.0);
        assert_eq!(r.m_photon, 0.0);
        assert_eq!(r.delta_lz, 0.0);
        assert_eq!(r.p_lz, 1.0);
    }

    #[test]
    fn rejects_non_positive_drive() {
        let mat = MaterialSpec::new(1.0, 1.0).unwrap();
        for (hw, e0) in [(0.0, 1.0), (-1.0, 1.0), (1.55, 0.0), (1.55, -2.0)] {
            let drive = DriveParams {
                photon_energy: hw,
                peak_field: e0,
            };
            assert!(compute_report(&mat, &drive).is_err());
        }
        assert!(MaterialSpec::new(-0.1, 1.0).is_err());
        assert!(MaterialSpec::new(1.0, 0.0).is_err());
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(report_at(5.0, 1.0).regime, Regime::PerturbativeMultiphoton);
        let r = report_at(0.5, 0.25);
        assert!((r.z_r - 0.5).abs() < 1e-12);
        assert_eq!(r.regime, Regime::NonImpulsiveLZ);
        let r = report_at(0.2, 2.2);
        assert!((r.delta_lz - 0.11).abs() < 1e-12);
        assert!((r.p_lz - 0.5).abs() < 0.01);
        assert_eq!(r.regime, Regime::AdiabaticImpulsiveLZS);
        assert_eq!(report_at(0.01, 0.5).regime, Regime::ImpulsiveLZ);
        assert_eq!(report_at(0.5, 3.0).regime, Regime::Adiabatic);
    }

    #[test]
    fn relativistic_flag_is_strict() {
        let mut r = report_at(0.5, 1.0);
        assert!(!relativistic_boundary(&r, 0.007));
        r.gamma = 0.005;
        assert!(relativistic_boundary(&r, 0.007));
        r.gamma = 0.007;
        assert!(!relativistic_boundary(&r, 0.007));
        assert!(report_at(0.005, 1.0).relativistic_flag);
    }

    #[test]
    fn dimensionless_round_trip() {
        let (mat, drive) = DriveParams::from_dimensionless(0.37, 2.9, 1.55, 1.0).unwrap();
        let r = compute_report(&mat, &drive).unwrap();
        assert!((r.gamma - 0.37).abs() < 1e-12 * 0.37);
        assert!((r.m_photon - 2.9).abs() < 1e-12 * 2.9);
    }

    #[test]
    fn regime_names_parse_back() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
            assert_eq!(Regime::from_code(r.code()), Some(r));
        }
    }
}
