use super::*;

fn small(count: usize) -> GridSpec {
    let mut g = GridSpec::square(count);
    // weak-field corner keeps cells cheap
    g.gamma_axis = Axis::logarithmic(count, 2.0, 10.0);
    g.m_axis = Axis::linear(count, 0.6, 1.4);
    g
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lzs-sweep-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join("checkpoint.bin")
}

fn same_cells(a: &MapResult, b: &MapResult) {
    assert_eq!(a.cells.len(), b.cells.len());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.status, y.status);
        assert_eq!(x.rho_cb_res.to_bits(), y.rho_cb_res.to_bits());
        assert_eq!(x.j_res.to_bits(), y.j_res.to_bits());
        assert_eq!(x.k_points, y.k_points);
    }
}

#[test]
fn axes_hit_their_endpoints() {
    let a = Axis::logarithmic(5, 0.1, 10.0);
    assert_eq!(a.value(0), 0.1);
    assert_eq!(a.value(4), 10.0);
    assert!((a.value(2) - 1.0).abs() < 1e-15);
    let m = Axis::linear(4, 0.2, 3.2);
    assert_eq!(m.values(), vec![0.2, 1.2, 2.2, 3.2]);
    assert!(Axis::linear(0, 1.0, 2.0).validate("m").is_err());
    assert!(Axis::logarithmic(3, 0.0, 2.0).validate("g").is_err());
    assert!(Axis::linear(3, 1.0, 1.0).validate("m").is_err());
}

#[test]
fn cells_round_trip_through_the_report() {
    let g = GridSpec::square(7);
    for i in 0..g.cell_count() {
        let (gamma, m) = g.coordinates(i);
        let (mat, drive, _) = g.cell_pulse(gamma, m).unwrap();
        let r = crate::compute_report(&mat, &drive).unwrap();
        assert!((r.gamma / gamma - 1.0).abs() < 1e-12);
        assert!((r.m_photon / m - 1.0).abs() < 1e-12);
    }
}

#[test]
fn row_major_order() {
    let g = small(3);
    assert_eq!(g.coordinates(1), (g.gamma_axis.value(0), g.m_axis.value(1)));
    assert_eq!(g.coordinates(3), (g.gamma_axis.value(1), g.m_axis.value(0)));
}

#[test]
fn hash_tracks_every_input() {
    let g = small(3);
    let h = g.config_hash(MapKind::Population);
    assert_eq!(h, small(3).config_hash(MapKind::Population));
    assert_ne!(h, g.config_hash(MapKind::Current));
    let mut other = g;
    other.pulse.cep = 0.0;
    assert_ne!(h, other.config_hash(MapKind::Population));
    other = g;
    other.tol = 1e-9;
    assert_ne!(h, other.config_hash(MapKind::Population));
}

#[test]
fn population_map_is_independent_of_worker_count() {
    let g = small(3);
    let one = run_population_map(&g, &RunOptions { workers: 1, ..Default::default() }).unwrap();
    let two = run_population_map(&g, &RunOptions { workers: 2, ..Default::default() }).unwrap();
    assert!(one.is_complete());
    same_cells(&one, &two);
    assert!(one.cells.iter().all(|c| c.is_done() && c.j_res.is_nan()));
    assert!(one.cells.iter().all(|c| c.regime == Regime::PerturbativeMultiphoton));
}

#[test]
fn interrupted_run_resumes_to_identical_cells() {
    let g = small(3);
    let path = tmp("resume");
    let reference = run_population_map(&g, &RunOptions::default()).unwrap();

    let partial = RunOptions {
        workers: 1,
        checkpoint: Some(path.clone()),
        max_cells: Some(4),
        ..Default::default()
    };
    let first = run_population_map(&g, &partial).unwrap();
    assert_eq!(first.completed(), 4);
    assert!(!first.is_complete());
    let len = std::fs::metadata(&path).unwrap().len() as usize;
    assert_eq!(len, HEADER_LEN + 4 * RECORD_LEN);

    // a torn trailing record is dropped
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(&[7u8; 20]);
    std::fs::write(&path, &bytes).unwrap();

    let resume = RunOptions {
        checkpoint: Some(path.clone()),
        resume: true,
        ..Default::default()
    };
    let done = run_population_map(&g, &resume).unwrap();
    assert!(done.is_complete());
    assert_eq!(done.manifest.resumed_cells, 4);
    same_cells(&done, &reference);
    let len = std::fs::metadata(&path).unwrap().len() as usize;
    assert_eq!(len, HEADER_LEN + 9 * RECORD_LEN);

    // resuming a finished map computes nothing
    let again = run_population_map(&g, &resume).unwrap();
    assert_eq!(again.manifest.resumed_cells, 9);
    same_cells(&again, &reference);
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, len);
}

#[test]
fn resume_rejects_a_different_grid() {
    let g = small(2);
    let path = tmp("mismatch");
    let opts = RunOptions {
        checkpoint: Some(path.clone()),
        max_cells: Some(1),
        ..Default::default()
    };
    run_population_map(&g, &opts).unwrap();
    let mut other = g;
    other.m_axis.max = 1.5;
    let resume = RunOptions {
        checkpoint: Some(path.clone()),
        resume: true,
        ..Default::default()
    };
    match run_population_map(&other, &resume) {
        Err(Error::Checkpoint(msg)) => assert!(msg.contains("hash mismatch"), "{msg}"),
        other => panic!("expected rejection, got {other:?}"),
    }
    assert!(matches!(run_current_map(&g, &resume), Err(Error::Checkpoint(_))));
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(matches!(run_population_map(&g, &resume), Err(Error::Checkpoint(_))));
}

#[test]
fn failing_cells_are_quarantined() {
    let mut g = small(2);
    // a window this narrow cannot reach the edge-population bound
    g.k_policy.scale = 0.0;
    g.k_policy.margin = 0.05;
    g.k_policy.points = 5;
    g.k_policy.max_extensions = 0;
    let map = run_current_map(&g, &RunOptions::default()).unwrap();
    assert!(map.is_complete());
    assert_eq!(map.failed().count(), 4);
    for c in map.failed() {
        match &c.status {
            CellStatus::Failed(reason) => {
                assert!(reason.starts_with("k0 window error"), "{reason}");
                assert!(reason.len() <= REASON_LEN);
            }
            _ => unreachable!(),
        }
        assert!(c.j_res.is_nan());
    }
}

#[test]
fn cancellation_stops_before_new_cells() {
    let g = small(3);
    let flag = Arc::new(AtomicBool::new(true));
    let map = run_population_map(
        &g,
        &RunOptions {
            cancel: Some(flag),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(map.completed(), 0);
}

#[test]
fn small_current_map_is_deterministic() {
    let mut g = small(2);
    g.k_policy.points = 33;
    g.k_policy.max_refinements = 1;
    let a = run_current_map(&g, &RunOptions { workers: 1, ..Default::default() }).unwrap();
    let b = run_current_map(&g, &RunOptions { workers: 3, ..Default::default() }).unwrap();
    same_cells(&a, &b);
    for c in &a.cells {
        assert!(c.is_done(), "{:?}", c.status);
        assert!(c.j_res.is_finite() && c.k_points >= 65);
        assert!(c.k_half_width >= g.k_policy.half_width(&g.cell_pulse(c.gamma, c.m_photon).unwrap().2));
    }
}

#[test]
fn iso_field_of_zero_map_is_zero() {
    let g = GridSpec::square(4);
    let mut cells: Vec<CellRecord> = (0..16).map(|i| blank_record(&g, i).unwrap()).collect();
    for c in &mut cells {
        c.j_res = 0.0;
        c.status = CellStatus::Done;
    }
    let map = MapResult {
        grid: g,
        kind: MapKind::Current,
        cells,
        manifest: Manifest {
            config_hash: String::new(),
            version: String::new(),
            workers: 1,
            wall_time: 0.0,
            resumed_cells: 0,
        },
    };
    let pts = integrate_iso_field(&map, &[1.0, 5.0, 20.0], 4).unwrap();
    assert!(pts.iter().all(|p| p.j_int == 0.0));
    // E0 = 1 V/nm leaves the map (γ > 10) above M ≈ 5.5; fully covered here
    assert_eq!(pts[0].coverage, 1.0);
    // E0 = 20 V/nm drops below γ = 0.1 for small M
    assert!(pts[2].is_partial() && pts[2].coverage > 0.0);
}

#[test]
fn iso_field_integrates_planes_exactly() {
    let g = GridSpec::square(5);
    let mut cells: Vec<CellRecord> = (0..25).map(|i| blank_record(&g, i).unwrap()).collect();
    for c in &mut cells {
        // bilinear in (log γ, M) is reproduced exactly
        c.j_res = 0.3 * c.m_photon - 0.1 * c.gamma.ln() + 0.2;
        c.status = CellStatus::Done;
    }
    let map = MapResult {
        grid: g,
        kind: MapKind::Current,
        cells,
        manifest: Manifest {
            config_hash: String::new(),
            version: String::new(),
            workers: 1,
            wall_time: 0.0,
            resumed_cells: 0,
        },
    };
    let e0 = 2.0;
    let p = integrate_iso_field(&map, &[e0], 64).unwrap()[0];
    assert_eq!(p.coverage, 1.0);
    // γ = c·M on the line; ∫ (0.3M − 0.1 ln(cM) + 0.2) dM over [0.2, 3.2]
    let c = iso_gamma(1.0, e0, 1.55, 1.0);
    let f = |m: f64| 0.15 * m * m - 0.1 * (m * (c * m).ln() - m) + 0.2 * m;
    let exact = f(3.2) - f(0.2);
    assert!((p.j_int - exact).abs() < 1e-4, "{} vs {exact}", p.j_int);
}
