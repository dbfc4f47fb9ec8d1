//! `lzs`: traces, regime reports, resonance curves and parameter-plane maps
//! for the driven two-level band model.
//!
//! Errors go to stderr as `error[<kind>]: <message>` where kind is one of
//! `validation` (exit 1), `runtime` (exit 2) or `partial` (exit 3).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use lzs_core::analytics::{lz_probability, resonance_curve};
use lzs_core::config::{parse_config_with, RunConfig};
use lzs_core::constants::{ELEMENTARY_CHARGE, HBAR};
use lzs_core::model::compute_report_with;
use lzs_core::observables::propagation_grid;
use lzs_core::output::{emit_map, sig9};
use lzs_core::propagator::{
    linear_sweep_transfer, propagate_density, propagate_state, recommended_lz_window, DensityMatrix,
    QuantumState,
};
use lzs_core::pulse::{bloch_trajectory, PulseSpec};
use lzs_core::sweep::{integrate_iso_field, run_map, Axis, MapKind, RunOptions};
use lzs_core::{Error, MaterialSpec};

#[derive(Parser)]
#[command(name = "lzs", version, about = "Driven two-level band model: traces, regimes and (γ, M) maps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value`, `[section]` headers).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; overrides `engine.workers` and LZS_WORKERS. 0 uses all cores.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Continue a map from `checkpoint.bin` in the output directory.
    #[arg(long, global = true)]
    resume: bool,
    /// Configuration override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one electron and write waveform.csv and trace.csv.
    Trace,
    /// Residual conduction-band population over the (γ, M) plane.
    SweepMap,
    /// Residual current over the (γ, M) plane, with iso-field integrals.
    CurrentMap,
    /// Print the adiabaticity report of the working point.
    Regimes,
    /// Print photon-resonance curves M(n, γ) as CSV.
    Resonance {
        /// Photon orders, `a..b` (inclusive).
        #[arg(long, value_name = "A..B")]
        orders: Option<String>,
        /// Keldysh range, `lo..hi`, sampled logarithmically.
        #[arg(long = "gamma-range", value_name = "LO..HI")]
        gamma_range: Option<String>,
    },
    /// Compare single linear sweeps against the Landau-Zener formula.
    LzCheck,
}

enum Failure {
    Validation(String),
    Runtime(String),
    Partial(String),
}

impl Failure {
    fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Runtime(_) => "runtime",
            Failure::Partial(_) => "partial",
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Partial(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Partial(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::Config { .. }
            | Error::Checkpoint(_)
            | Error::GridTooShort { .. }
            | Error::StepTooCoarse { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text);
            eprint!("error[validation]: {text}");
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind(), f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let cfg = load(&cli.common)?;
    match &cli.command {
        Command::Trace => trace(&cfg),
        Command::SweepMap => map(&cfg, cli.common.resume, MapKind::Population),
        Command::CurrentMap => map(&cfg, cli.common.resume, MapKind::Current),
        Command::Regimes => regimes(&cfg),
        Command::Resonance { orders, gamma_range } => resonance(&cfg, orders.as_deref(), gamma_range.as_deref()),
        Command::LzCheck => lz_check(&cfg),
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config_with(&text, &common.set)?;
    if let Some(out) = &common.out {
        cfg.output.directory = out.display().to_string();
    }
    if let Some(w) = common.workers {
        cfg.engine.workers = Some(w);
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn trace(cfg: &RunConfig) -> Outcome {
    let (mat, drive) = cfg.working_point()?;
    let report = compute_report_with(&mat, &drive, &cfg.thresholds)?;
    let p = &cfg.pulse;
    let spec = PulseSpec::new(drive.photon_energy, drive.peak_field, p.duration, p.cep)?.with_dispersion(p.gdd, p.tod);
    let k0 = cfg.point.k0;
    let wave = spec.waveform_on(&propagation_grid(&mat, &spec, k0))?;
    let traj = bloch_trajectory(&wave, k0, &mat)?;
    let tol = cfg.engine.tolerance;
    let tr = match cfg.t2 {
        Some(t2) => propagate_density(&mat, &traj, &DensityMatrix::lower_at(&mat, traj.k[0]), t2, tol)?,
        None => propagate_state(&mat, &traj, &QuantumState::lower_at(&mat, traj.k[0]), tol)?,
    };

    let mut waveform = String::from("t_fs,A,E,k,bias_eV\n");
    for i in 0..wave.len() {
        let _ = writeln!(
            waveform,
            "{},{},{},{},{}",
            sig9(wave.t[i]),
            sig9(wave.a[i]),
            sig9(wave.e[i]),
            sig9(traj.k[i]),
            sig9(traj.bias[i])
        );
    }

    // Landau-Zener probability for the instantaneous field strength.
    let a_max = wave.max_abs_a();
    let mut text = String::from("t_fs,A_norm,rho_cb,P_LZ_at_k,phase\n");
    for i in 0..wave.len() {
        let e = wave.e[i].abs();
        let p_lz = if e > 0.0 {
            let delta = mat.gap * mat.gap / (8.0 * HBAR * mat.fermi_velocity * ELEMENTARY_CHARGE * e);
            lz_probability(delta)?
        } else {
            0.0
        };
        let a_norm = if a_max > 0.0 { wave.a[i] / a_max } else { 0.0 };
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            sig9(wave.t[i]),
            sig9(a_norm),
            sig9(tr.rho_cb[i]),
            sig9(p_lz),
            sig9(tr.phase[i])
        );
    }

    let dir = PathBuf::from(&cfg.output.directory);
    let wpath = write_file(&dir, "waveform.csv", &waveform)?;
    let tpath = write_file(&dir, "trace.csv", &text)?;
    println!("gamma: {}", sig9(report.gamma));
    println!("M: {}", sig9(report.m_photon));
    println!("regime: {}", report.regime.as_str());
    println!("rho_cb_res: {}", sig9(tr.residual()));
    println!("samples: {}", wave.len());
    println!("wrote: {}", wpath.display());
    println!("wrote: {}", tpath.display());
    Ok(())
}

fn map(cfg: &RunConfig, resume: bool, kind: MapKind) -> Outcome {
    let grid = cfg.grid_spec(RunConfig::default_count(kind));
    let dir = PathBuf::from(&cfg.output.directory);
    let checkpoint = cfg.engine.checkpoint.then(|| dir.join("checkpoint.bin"));
    if resume && checkpoint.is_none() {
        return Err(Failure::Validation("--resume needs engine.checkpoint = true".into()));
    }
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let opts = RunOptions {
        workers: cfg.workers()?,
        checkpoint,
        resume,
        ..Default::default()
    };
    let result = run_map(&grid, kind, &opts)?;
    let iso = match kind {
        MapKind::Current => Some(integrate_iso_field(&result, &cfg.iso_fields(), cfg.grid.iso_samples)?),
        MapKind::Population => None,
    };
    let files = emit_map(&result, &dir, &cfg.to_document(), iso.as_deref())?;

    let failed = result.failed().count();
    println!("kind: {}", kind.as_str());
    println!("config_hash: {}", result.manifest.config_hash);
    println!("cells: {} completed: {} failed: {}", result.cells.len(), result.completed(), failed);
    println!("resumed: {}", result.manifest.resumed_cells);
    println!("wrote: {}", files.map.display());
    println!("wrote: {}", files.manifest.display());
    if let Some(p) = &files.iso {
        println!("wrote: {}", p.display());
    }
    if failed > 0 || !result.is_complete() {
        return Err(Failure::Partial(format!(
            "{failed} of {} cells quarantined; reasons in {}",
            result.cells.len(),
            files.manifest.display()
        )));
    }
    Ok(())
}

fn regimes(cfg: &RunConfig) -> Outcome {
    let (mat, drive) = cfg.working_point()?;
    let r = compute_report_with(&mat, &drive, &cfg.thresholds)?;
    println!("gap_eV: {}", sig9(mat.gap));
    println!("photon_energy_eV: {}", sig9(drive.photon_energy));
    println!("peak_field_V_per_nm: {}", sig9(drive.peak_field));
    println!("gamma: {}", sig9(r.gamma));
    println!("M: {}", sig9(r.m_photon));
    println!("z_R: {}", sig9(r.z_r));
    println!("delta_LZ: {}", sig9(r.delta_lz));
    println!("P_LZ: {}", sig9(r.p_lz));
    println!("rabi_freq_per_fs: {}", sig9(r.rabi_freq));
    println!("transition_time_fs: {}", sig9(r.transition_time));
    println!("sweep_rate_eV_per_fs: {}", sig9(r.sweep_rate));
    println!("eff_mass_eV_fs2_per_nm2: {}", sig9(r.eff_mass));
    println!("a0: {}", sig9(r.a0));
    println!("relativistic: {}", r.relativistic_flag);
    println!("regime: {}", r.regime.as_str());
    Ok(())
}

fn parse_range<T: std::str::FromStr>(flag: &str, text: &str) -> Result<(T, T), Failure> {
    let bad = || Failure::Validation(format!("{flag} expects `lo..hi`, got `{text}`"));
    let (lo, hi) = text.split_once("..").ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn resonance(cfg: &RunConfig, orders: Option<&str>, gamma_range: Option<&str>) -> Outcome {
    let rc = &cfg.resonance;
    let (n_lo, n_hi) = match orders {
        Some(text) => parse_range::<u32>("--orders", text)?,
        None => (1, rc.max_order),
    };
    if n_lo == 0 || n_hi < n_lo {
        return Err(Failure::Validation(format!("--orders needs 1 <= a <= b, got {n_lo}..{n_hi}")));
    }
    let (g_lo, g_hi) = match gamma_range {
        Some(text) => parse_range::<f64>("--gamma-range", text)?,
        None => (rc.gamma_min, rc.gamma_max),
    };
    let axis = Axis::logarithmic(rc.gamma_count, g_lo, g_hi);
    axis.validate("gamma-range")?;
    let gammas = axis.values();

    let mut csv = String::from("n,gamma,M,parity\n");
    for n in n_lo..=n_hi {
        let curve = resonance_curve(n, &gammas)?;
        let parity = if curve.even { "even" } else { "odd" };
        for (g, m) in curve.points {
            let _ = writeln!(csv, "{n},{},{},{parity}", sig9(g), sig9(m));
        }
    }
    print!("{csv}");
    Ok(())
}

fn lz_check(cfg: &RunConfig) -> Outcome {
    let gap = cfg
        .material
        .gap
        .unwrap_or(cfg.pulse.photon_energy * cfg.point.m_photon.unwrap_or(1.0));
    let mat = MaterialSpec::new(gap, cfg.material.fermi_velocity)?;
    let limit = cfg.lz.tolerance;
    println!("delta_LZ,window,P_formula,P_sweep,rel_error,status");
    let mut failures = 0;
    for &delta in &cfg.lz.deltas {
        let window = recommended_lz_window(delta);
        let formula = lz_probability(delta)?;
        let sweep = linear_sweep_transfer(&mat, delta, window, cfg.engine.tolerance)?;
        let rel = (sweep - formula).abs() / formula;
        let ok = rel <= limit;
        if !ok {
            failures += 1;
        }
        println!(
            "{},{},{},{},{},{}",
            sig9(delta),
            sig9(window),
            sig9(formula),
            sig9(sweep),
            sig9(rel),
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failures > 0 {
        return Err(Failure::Runtime(format!(
            "{failures} of {} sweeps outside {limit} relative error",
            cfg.lz.deltas.len()
        )));
    }
    Ok(())
}
