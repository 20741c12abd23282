use normsolve::energy::{
    action, energy, free_gradient, multiplier, preconditioned_gradient, retract, sobolev_gradient,
    tangent_project, EnergyParams,
};
use normsolve::grid::{Field, RadialGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random smooth radial field vanishing at `R`: a short sine series.
fn random_field(g: &RadialGrid, rng: &mut ChaCha8Rng, amp: f64) -> Field {
    let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-amp..amp)).collect();
    let radius = g.radius();
    g.sample(|r| {
        c.iter()
            .enumerate()
            .map(|(k, a)| a * ((k as f64 + 0.5) * std::f64::consts::PI * r / radius).cos())
            .sum()
    })
}

/// Central difference of `t ↦ f(t)` with one Richardson step from `t` to `t/10`.
fn richardson(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    let d = |s: f64| (f(s) - f(-s)) / (2.0 * s);
    let (coarse, fine) = (d(t), d(t / 10.0));
    fine + (fine - coarse) / 99.0
}

#[test]
fn directional_derivative_matches_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let dim = 3 + trial % 3;
        let g = RadialGrid::new(dim, 1.0, 256).unwrap();
        let params = EnergyParams::critical(dim, rng.gen_range(0.05..2.0)).unwrap();
        let u = random_field(&g, &mut rng, 1.0);
        let h = random_field(&g, &mut rng, 1.0);
        let grad = free_gradient(&g, &u, 0.0, &params).unwrap();
        let exact = g.dot(&grad, &h).unwrap();
        let fd = richardson(
            |t| energy(&g, &u.add_scaled(t, &h).unwrap(), &params).unwrap(),
            1e-4,
        );
        let rel = (fd - exact).abs() / exact.abs().max(1e-3);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn action_derivative_includes_multiplier() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = RadialGrid::new(4, 1.0, 200).unwrap();
    let params = EnergyParams::critical(4, 0.8).unwrap();
    for _ in 0..10 {
        let lambda = rng.gen_range(-5.0..20.0);
        let u = random_field(&g, &mut rng, 1.0);
        let h = random_field(&g, &mut rng, 1.0);
        let exact = g
            .dot(&free_gradient(&g, &u, lambda, &params).unwrap(), &h)
            .unwrap();
        let fd = richardson(
            |t| action(&g, &u.add_scaled(t, &h).unwrap(), lambda, &params).unwrap(),
            1e-4,
        );
        assert!(
            (fd - exact).abs() < 1e-6 * (1.0 + exact.abs()),
            "{fd} vs {exact}"
        );
    }
}

#[test]
fn riemannian_gradient_represents_the_derivative_along_the_sphere() {
    // ⟨G, h⟩_{H¹₀} = d/dt E(retract(u + t h)) for tangent h
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for dim in [3, 5] {
        let g = RadialGrid::new(dim, 1.0, 256).unwrap();
        let params = EnergyParams::critical(dim, 0.5).unwrap();
        let u = retract(&g, &random_field(&g, &mut rng, 1.0)).unwrap();
        let h = tangent_project(&g, &random_field(&g, &mut rng, 1.0), &u).unwrap();
        let (sg, _) = sobolev_gradient(&g, &u, &params).unwrap();
        let k_sg = g.apply_laplacian(&sg).unwrap().scale(-1.0);
        let exact = g.dot(&k_sg, &h).unwrap();
        let fd = richardson(
            |t| {
                let v = retract(&g, &u.add_scaled(t, &h).unwrap()).unwrap();
                energy(&g, &v, &params).unwrap()
            },
            1e-4,
        );
        assert!(
            (fd - exact).abs() < 1e-6 * (1.0 + exact.abs()),
            "{fd} vs {exact}"
        );
    }
}

#[test]
fn preconditioned_gradient_solves_the_poisson_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = RadialGrid::new(3, 1.0, 300).unwrap();
    let params = EnergyParams::critical(3, 1.3).unwrap();
    let u = random_field(&g, &mut rng, 1.0);
    let fg = free_gradient(&g, &u, 2.0, &params).unwrap();
    let pg = preconditioned_gradient(&g, &u, 2.0, &params).unwrap();
    let back = g.apply_laplacian(&pg).unwrap().scale(-1.0);
    let err = back.add_scaled(-1.0, &fg).unwrap().max_abs();
    assert!(err < 1e-7 * (1.0 + fg.max_abs()), "{err}");
}

#[test]
fn energy_is_even_and_decreasing_in_mu() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = RadialGrid::new(5, 1.0, 128).unwrap();
    let u = random_field(&g, &mut rng, 1.0);
    let mut prev = f64::INFINITY;
    for mu in [0.0, 0.1, 0.5, 1.0, 3.0] {
        let p = EnergyParams::critical(5, mu).unwrap();
        let e = energy(&g, &u, &p).unwrap();
        assert_eq!(e, energy(&g, &u.scale(-1.0), &p).unwrap());
        assert!(e < prev);
        prev = e;
    }
}

#[test]
fn subcritical_exponent_is_supported() {
    let g = RadialGrid::new(3, 1.0, 200).unwrap();
    let u = g.sample(|r| 1.0 - r * r);
    let p = EnergyParams::with_exponent(3, 1.0, 4.0).unwrap();
    let e = energy(&g, &u, &p).unwrap();
    let expect = 0.5 * g.dirichlet_form(&u).unwrap() - 0.25 * g.integrate(&u, 4.0).unwrap();
    assert!((e - expect).abs() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn multiplier_is_affine_in_mu(seed in 0u64..10_000, mu in 0.0f64..5.0, dmu in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = RadialGrid::new(3, 1.0, 96).unwrap();
        let u = retract(&g, &random_field(&g, &mut rng, 1.0)).unwrap();
        let p = EnergyParams::critical(3, mu).unwrap();
        let a = multiplier(&g, &u, &p).unwrap();
        let b = multiplier(&g, &u, &p.with_mu(mu + dmu)).unwrap();
        let crit = g.integrate(&u, 6.0).unwrap();
        prop_assert!(((b - a) + dmu * crit).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn tangent_projection_is_an_orthogonal_projector(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = RadialGrid::new(4, 1.0, 96).unwrap();
        let u = retract(&g, &random_field(&g, &mut rng, 1.0)).unwrap();
        let v = random_field(&g, &mut rng, 3.0);
        let t = tangent_project(&g, &v, &u).unwrap();
        let scale = 1.0 + v.max_abs();
        prop_assert!(g.dot(&t, &u).unwrap().abs() < 1e-12 * scale);
        let tt = tangent_project(&g, &t, &u).unwrap();
        prop_assert!(tt.add_scaled(-1.0, &t).unwrap().max_abs() < 1e-12 * scale);
        prop_assert!(g.norm(&t).unwrap() <= g.norm(&v).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn retraction_lands_on_the_sphere(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = RadialGrid::new(5, 2.0, 64).unwrap();
        let v = random_field(&g, &mut rng, 1.0).scale(c);
        let r = retract(&g, &v).unwrap();
        prop_assert!((g.norm(&r).unwrap() - 1.0).abs() < 1e-14);
        let again = retract(&g, &r).unwrap();
        prop_assert!(again.add_scaled(-1.0, &r).unwrap().max_abs() < 1e-14);
    }
}
