use normsolve::energy::EnergyParams;
use normsolve::grid::{principal_eigenpair, RadialGrid};
use normsolve::minimizer::{newton_refine, solve_local_min, FlowOptions, SolutionKind};
use normsolve::snapshot::{load, save, Snapshot};
use normsolve::thresholds::ThresholdSet;

fn solution(dim: usize) -> (RadialGrid, normsolve::minimizer::SolutionRecord) {
    let g = RadialGrid::new(dim, 1.5, 256).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(dim, 0.3 * t.mu_star).unwrap();
    let e = principal_eigenpair(&g).unwrap();
    let flow = solve_local_min(&g, &p, &e.phi1, &FlowOptions::for_mu(&t, p.mu)).unwrap();
    let rec = newton_refine(
        &g,
        &flow.record.u,
        flow.record.lambda,
        &p,
        SolutionKind::LocalMin,
    )
    .unwrap()
    .record;
    (g, rec)
}

#[test]
fn file_round_trip_is_bit_identical() {
    let dir = std::env::temp_dir().join(format!("normsolve-snap-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for dim in [3, 4, 5] {
        let (g, rec) = solution(dim);
        let path = dir.join(format!("min{dim}.txt"));
        save(&path, &g, &rec).unwrap();
        let snap = load(&path).unwrap();
        assert_eq!(snap.kind, SolutionKind::LocalMin);
        assert_eq!(snap.mu.to_bits(), rec.mu.to_bits());
        assert_eq!(snap.lambda.to_bits(), rec.lambda.to_bits());
        assert_eq!(snap.energy.to_bits(), rec.energy.to_bits());
        for (a, b) in snap.values.iter().zip(rec.u.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, snap.to_text());

        let (g2, back) = snap.into_record().unwrap();
        assert_eq!(g2.id(), g.id());
        assert_eq!(back.u.values(), rec.u.values());
        assert_eq!(back.energy, rec.energy);
        assert_eq!(back.grad_norm_sq, rec.grad_norm_sq);
        assert_eq!(back.pohozaev_residual, rec.pohozaev_residual);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn header_layout() {
    let (g, rec) = solution(4);
    let text = Snapshot::from_record(&g, &rec).unwrap().to_text();
    let header: Vec<&str> = text.lines().next().unwrap().split(' ').collect();
    assert_eq!(header.len(), 8);
    assert_eq!(header[0], "normsolve-v1");
    assert_eq!(header[1], "4");
    assert_eq!(header[3], "256");
    assert_eq!(header[7], "local_min");
    assert_eq!(text.lines().count(), 257);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load("/nonexistent/normsolve/snapshot.txt").unwrap_err();
    assert!(matches!(err, normsolve::error::Error::Io(_)));
}
