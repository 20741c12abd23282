use normsolve::bubbles::{normalized_bubble, CutoffSpec};
use normsolve::diagnostics::{certify, detect_concentration, pohozaev_relative, LambdaSign};
use normsolve::energy::EnergyParams;
use normsolve::grid::{principal_eigenpair, Field, RadialGrid};
use normsolve::minimizer::{newton_refine, solve_local_min, FlowOptions, SolutionKind};
use normsolve::mountainpass::{solve_mountain_pass, MountainPassConfig};
use normsolve::thresholds::{frozen_g_constant, ThresholdSet, G_FIT_SLACK};

fn setup(dim: usize, n: usize) -> (RadialGrid, ThresholdSet, EnergyParams) {
    let g = RadialGrid::new(dim, 1.0, n).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(dim, 0.25 * t.mu_star).unwrap();
    (g, t, p)
}

#[test]
fn minimizer_is_certified() {
    for dim in [3, 4, 5] {
        let (g, t, p) = setup(dim, 2048);
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
        let rep = certify(&g, &rec, &t, None, G_FIT_SLACK).unwrap();
        assert!(rep.passed(), "N={dim}: {rep:?}");
        assert_eq!(rep.lambda_sign, LambdaSign::Positive);
        assert!(rep.energy_floor_ok && rep.grad_cap_ok && rep.level_ok);
        assert_eq!(rep.inside_trapping_ball, Some(true));
        assert_eq!(rep.below_upper_bound, None);
        assert!(rep.quantum_gap < 0.0);
        // energy in [λ₁/N, quantum)
        assert!(rec.energy >= t.lambda1 / dim as f64 && rec.energy < t.quantum(p.mu));
        // pure
        assert_eq!(rep, certify(&g, &rec, &t, None, G_FIT_SLACK).unwrap());
    }
}

#[test]
fn refinement_shrinks_the_pohozaev_defect() {
    // the flow hands over at a basin-entry tolerance; a flow run to 1e-8
    // already sits on the O(h²) floor of the discrete identity
    for dim in [3, 4, 5] {
        let (g, t, p) = setup(dim, 2048);
        let e = principal_eigenpair(&g).unwrap();
        let mut opts = FlowOptions::for_mu(&t, p.mu);
        opts.tol = 1e-4;
        let flow = solve_local_min(&g, &p, &e.phi1, &opts).unwrap();
        let refined = newton_refine(
            &g,
            &flow.record.u,
            flow.record.lambda,
            &p,
            SolutionKind::LocalMin,
        )
        .unwrap()
        .record;
        let a = flow.record.pohozaev_residual;
        let b = refined.pohozaev_residual;
        assert!(b * 10.0 <= a, "N={dim}: flow {a:e}, refined {b:e}");
        let direct = pohozaev_relative(&g, &refined.u, refined.lambda, &p).unwrap();
        assert_eq!(direct, b);
    }
}

#[test]
fn saddle_is_certified() {
    let (g, t, p) = setup(3, 2048);
    let c = frozen_g_constant(3).unwrap();
    let (_, report) =
        solve_mountain_pass(&g, &p, &t, Some(c), &MountainPassConfig::default()).unwrap();
    let saddle = report.saddle.expect("refined saddle");
    let rep = certify(&g, &saddle, &t, Some(c), G_FIT_SLACK).unwrap();
    assert!(rep.passed(), "{rep:?}");
    assert_eq!(rep.kind, SolutionKind::MountainPass);
    assert_eq!(rep.inside_trapping_ball, None);
    assert_eq!(rep.below_upper_bound, Some(true));
    assert!(rep.quantum_gap >= -1e-6);
    assert!(rep.half_gradient_radius > 10.0 * g.spacing());
    assert!(
        rep.pohozaev_residual_rel < 1e-3,
        "{}",
        rep.pohozaev_residual_rel
    );
}

#[test]
fn non_solution_with_negative_multiplier_fails_certification() {
    let (g, t, _) = setup(3, 1024);
    let p = EnergyParams::critical(3, 1.0).unwrap();
    let v = normalized_bubble(&g, 0.02, CutoffSpec::default_plateau(1.0)).unwrap();
    let parts = (g.dirichlet_form(&v).unwrap(), g.integrate(&v, 6.0).unwrap());
    let lambda = parts.0 - parts.1;
    assert!(lambda < 0.0);
    let rec = normsolve::minimizer::SolutionRecord::assemble(
        &g,
        v,
        lambda,
        &p,
        SolutionKind::MountainPass,
        f64::NAN,
        0,
    )
    .unwrap();
    let rep = certify(&g, &rec, &t, None, G_FIT_SLACK).unwrap();
    assert_eq!(rep.lambda_sign, LambdaSign::Nonpositive);
    assert!(!rep.passed());
}

fn bubble_arc(g: &RadialGrid, eps: &[f64]) -> Vec<Field> {
    eps.iter()
        .map(|&e| normalized_bubble(g, e, CutoffSpec::default_plateau(g.radius())).unwrap())
        .collect()
}

#[test]
fn shrinking_bubbles_are_flagged() {
    let g = RadialGrid::new(3, 1.0, 4096).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(3, 1.0).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.02];
    let rep = detect_concentration(&g, &bubble_arc(&g, &eps), &p, &t).unwrap();
    assert!(rep.flagged, "{rep:?}");
    assert!(rep.growth >= rep.threshold);
    assert!(rep.scales.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn inferred_scale_is_proportional_to_eps() {
    // on the unit ball the cutoff tail carries O(ε) of the Dirichlet energy
    // in three dimensions and distorts the radius; a large ball removes it
    let g = RadialGrid::new(3, 20.0, 16384).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(3, 1.0).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.02];
    let rep = detect_concentration(&g, &bubble_arc(&g, &eps), &p, &t).unwrap();
    let k: Vec<f64> = rep.scales.iter().zip(&eps).map(|(s, e)| s / e).collect();
    let (lo, hi) = k
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo < 1.1, "{k:?}");
}

#[test]
fn weak_coupling_arc_is_below_the_growth_threshold() {
    // ᾱ grows like μ^{−1/2}; at small μ the same arc cannot carry 0.8 quanta
    let g = RadialGrid::new(3, 1.0, 4096).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(3, 0.01).unwrap();
    let rep = detect_concentration(&g, &bubble_arc(&g, &[0.2, 0.1, 0.05, 0.02]), &p, &t).unwrap();
    assert!(!rep.flagged);
    assert!(rep.growth < rep.threshold);
}

#[test]
fn converging_flow_tail_is_not_flagged() {
    let (g, t, p) = setup(4, 1024);
    let e = principal_eigenpair(&g).unwrap();
    let flow = solve_local_min(&g, &p, &e.phi1, &FlowOptions::for_mu(&t, p.mu)).unwrap();
    assert!(flow.tail.len() >= 3);
    let rep = detect_concentration(&g, &flow.tail, &p, &t).unwrap();
    assert!(!rep.flagged);
    assert!(rep.growth.abs() < rep.threshold);
    assert!(detect_concentration(&g, &flow.tail[..2], &p, &t).is_err());
    let zero = p.with_mu(0.0);
    assert!(detect_concentration(&g, &flow.tail, &zero, &t).is_err());
}
