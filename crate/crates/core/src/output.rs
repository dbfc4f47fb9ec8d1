//! CSV and manifest emission for map runs.
//!
//! `map.csv` starts with `# key: value` provenance lines, then a header row
//! and one row per cell in row-major order. Every field in it is a pure
//! function of the configuration, so reruns produce identical bytes. Timing
//! and scheduling details go to `manifest.txt` only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sweep::{flags, CellStatus, IsoFieldPoint, MapKind, MapResult};

/// Column order of `map.csv`.
pub const MAP_COLUMNS: [&str; 7] = ["gamma", "M", "E0_Vnm", "rho_cb_res", "j_res_e_per_fs", "regime", "flags"];

/// Nine significant digits in scientific notation.
pub fn sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

fn flag_text(bits: u8) -> String {
    let mut parts = Vec::new();
    if bits & flags::RELATIVISTIC != 0 {
        parts.push("relativistic");
    }
    if bits & flags::K_UNCONVERGED != 0 {
        parts.push("k_unconverged");
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("|")
    }
}

/// Contents of `map.csv`.
pub fn map_csv(map: &MapResult) -> String {
    let g = &map.grid;
    let k = &g.k_policy;
    let mut s = String::new();
    let failed = map.failed().count();
    let _ = writeln!(s, "# format: lzs-map 1");
    let _ = writeln!(s, "# version: {}", map.manifest.version);
    let _ = writeln!(s, "# kind: {}", map.kind.as_str());
    let _ = writeln!(s, "# config_hash: {}", map.manifest.config_hash);
    let _ = writeln!(
        s,
        "# gamma_axis: {} log {:?} {:?}",
        g.gamma_axis.count, g.gamma_axis.min, g.gamma_axis.max
    );
    let _ = writeln!(s, "# m_axis: {} linear {:?} {:?}", g.m_axis.count, g.m_axis.min, g.m_axis.max);
    let _ = writeln!(s, "# photon_energy_eV: {:?}", g.photon_energy);
    let _ = writeln!(s, "# fermi_velocity_nm_per_fs: {:?}", g.fermi_velocity);
    let _ = writeln!(
        s,
        "# pulse: duration_fs={:?} cep_rad={:?} gdd_fs2={:?} tod_fs3={:?}",
        g.pulse.duration, g.pulse.cep, g.pulse.gdd, g.pulse.tod
    );
    if map.kind == MapKind::Current {
        let _ = writeln!(
            s,
            "# k_window: half_width=({:?}*e*max|A|/hbar + {:?}) points={} extension={:?} refine_tolerance={:?} max_refinements={}",
            k.scale, k.margin, k.points, k.extension_factor, k.refine_tolerance, k.max_refinements
        );
    } else {
        let _ = writeln!(s, "# k0: 0");
    }
    let _ = writeln!(s, "# tolerance: {:?}", g.tol);
    let _ = writeln!(
        s,
        "# cells: {} completed: {} failed: {}",
        map.cells.len(),
        map.completed(),
        failed
    );
    let _ = writeln!(s, "{}", MAP_COLUMNS.join(","));
    for c in &map.cells {
        let regime = match c.status {
            CellStatus::Done => c.regime.as_str(),
            CellStatus::Failed(_) => "FAILED",
            CellStatus::Pending => "PENDING",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            sig9(c.gamma),
            sig9(c.m_photon),
            sig9(c.peak_field),
            sig9(c.rho_cb_res),
            sig9(c.j_res),
            regime,
            flag_text(c.flags)
        );
    }
    s
}

/// Contents of `iso.csv`.
pub fn iso_csv(points: &[IsoFieldPoint]) -> String {
    let mut s = String::from("E0_Vnm,j_int,coverage\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", sig9(p.peak_field), sig9(p.j_int), sig9(p.coverage));
    }
    s
}

/// Contents of `manifest.txt`: provenance as comments, followed by the
/// resolved configuration, so the file parses as a configuration document.
pub fn manifest_text(map: &MapResult, resolved_config: &str) -> String {
    let m = &map.manifest;
    let mut s = String::new();
    let _ = writeln!(s, "# lzs run manifest");
    let _ = writeln!(s, "# version: {}", m.version);
    let _ = writeln!(s, "# kind: {}", map.kind.as_str());
    let _ = writeln!(s, "# config_hash: {}", m.config_hash);
    let _ = writeln!(s, "# workers: {}", m.workers);
    let _ = writeln!(s, "# wall_time_s: {:.3}", m.wall_time);
    let _ = writeln!(s, "# cells_total: {}", map.cells.len());
    let _ = writeln!(s, "# cells_completed: {}", map.completed());
    let _ = writeln!(s, "# cells_failed: {}", map.failed().count());
    let _ = writeln!(s, "# cells_pending: {}", map.cells.len() - map.completed());
    let _ = writeln!(s, "# cells_resumed: {}", m.resumed_cells);
    let _ = writeln!(s, "# gauge: fixed photon energy {:?} eV; gap and field derived per cell", map.grid.photon_energy);
    if map.kind == MapKind::Current {
        let done: Vec<_> = map.cells.iter().filter(|c| c.is_done()).collect();
        if !done.is_empty() {
            let hw_min = done.iter().map(|c| c.k_half_width).fold(f64::INFINITY, f64::min);
            let hw_max = done.iter().map(|c| c.k_half_width).fold(0.0, f64::max);
            let pts_min = done.iter().map(|c| c.k_points).min().unwrap_or(0);
            let pts_max = done.iter().map(|c| c.k_points).max().unwrap_or(0);
            let unconverged = done.iter().filter(|c| c.flags & flags::K_UNCONVERGED != 0).count();
            let _ = writeln!(s, "# k_window_half_width_per_nm: min {} max {}", sig9(hw_min), sig9(hw_max));
            let _ = writeln!(s, "# k_points: min {pts_min} max {pts_max}");
            let _ = writeln!(s, "# k_unconverged_cells: {unconverged}");
        }
    }
    for c in map.failed() {
        if let CellStatus::Failed(reason) = &c.status {
            let _ = writeln!(
                s,
                "# failed: index={} gamma={} M={} reason={}",
                c.index,
                sig9(c.gamma),
                sig9(c.m_photon),
                reason.replace('\n', " ")
            );
        }
    }
    s.push_str(resolved_config);
    s
}

/// Files written by [`emit_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub map: PathBuf,
    pub manifest: PathBuf,
    pub iso: Option<PathBuf>,
}

/// Writes `map.csv`, `manifest.txt` and, when given, `iso.csv` into `dir`.
pub fn emit_map(
    map: &MapResult,
    dir: &Path,
    resolved_config: &str,
    iso: Option<&[IsoFieldPoint]>,
) -> Result<EmittedFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    };
    let map_path = write("map.csv", &map_csv(map))?;
    let manifest = write("manifest.txt", &manifest_text(map, resolved_config))?;
    let iso = match iso {
        Some(points) => Some(write("iso.csv", &iso_csv(points))?),
        None => None,
    };
    Ok(EmittedFiles {
        map: map_path,
        manifest,
        iso,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, RunConfig};
    use crate::sweep::{run_population_map, Axis, GridSpec, RunOptions};

    fn tiny() -> GridSpec {
        let mut g = GridSpec::square(2);
        g.gamma_axis = Axis::logarithmic(2, 3.0, 10.0);
        g.m_axis = Axis::linear(2, 0.8, 1.2);
        g
    }

    #[test]
    fn nine_significant_digits_round_trip() {
        for v in [1.0 / 3.0, -2.5e-12, 6.02214076e23, 0.0] {
            let text = sig9(v);
            let back: f64 = text.parse().unwrap();
            assert!((back - v).abs() <= 5e-9 * v.abs(), "{text}");
            assert_eq!(sig9(back), text);
        }
        assert_eq!(sig9(0.125), "1.25000000e-1");
        assert_eq!(sig9(f64::NAN), "NaN");
    }

    #[test]
    fn two_by_two_map_has_four_rows() {
        let map = run_population_map(&tiny(), &RunOptions::default()).unwrap();
        let csv = map_csv(&map);
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], "gamma,M,E0_Vnm,rho_cb_res,j_res_e_per_fs,regime,flags");
        assert!(rows[1].starts_with("3.00000000e0,8.00000000e-1,"));
        assert!(rows[1].ends_with(",NaN,PerturbativeMultiphoton,none"));
        assert_eq!(csv, map_csv(&run_population_map(&tiny(), &RunOptions { workers: 2, ..Default::default() }).unwrap()));
    }

    #[test]
    fn manifest_reparses_to_the_config() {
        let cfg = parse_config("pulse.cep = pi/4\ngrid.gamma_count = 2").unwrap();
        let map = run_population_map(&tiny(), &RunOptions::default()).unwrap();
        let text = manifest_text(&map, &cfg.to_document());
        assert!(text.contains("# config_hash: "));
        assert_eq!(parse_config(&text).unwrap(), cfg);
        assert_ne!(parse_config(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn failed_cells_are_marked() {
        let mut g = tiny();
        g.k_policy.scale = 0.0;
        g.k_policy.margin = 0.05;
        g.k_policy.points = 5;
        g.k_policy.max_extensions = 0;
        let map = crate::sweep::run_current_map(&g, &RunOptions::default()).unwrap();
        let csv = map_csv(&map);
        assert_eq!(csv.lines().filter(|l| l.contains(",FAILED,")).count(), 4);
        let manifest = manifest_text(&map, "");
        assert_eq!(manifest.lines().filter(|l| l.starts_with("# failed: ")).count(), 4);
        assert!(manifest.contains("reason=k0 window error"));
    }

    #[test]
    fn emit_writes_files() {
        let dir = std::env::temp_dir().join(format!("lzs-output-{}", std::process::id()));
        let map = run_population_map(&tiny(), &RunOptions::default()).unwrap();
        let files = emit_map(&map, &dir, "", None).unwrap();
        assert!(files.map.exists() && files.manifest.exists() && files.iso.is_none());
        let first = fs::read(&files.map).unwrap();
        emit_map(&map, &dir, "", None).unwrap();
        assert_eq!(first, fs::read(&files.map).unwrap());
    }
}
