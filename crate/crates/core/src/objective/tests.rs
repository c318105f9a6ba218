use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::spatial_gradient;

/// Gaussian with minimum-image distance, so shifts wrap exactly.
fn bump(n: usize, c: [f64; 2], w: f64) -> SpatialField {
    let wrap = |t: f64| t - t.round();
    SpatialField::from_fn(&[n, n], |x| {
        let dx = wrap(x[0] - c[0]);
        let dy = wrap(x[1] - c[1]);
        (-(dx * dx + dy * dy) / (2.0 * w * w)).exp()
    })
}

fn problem(n: usize, k: usize, cfg: ProblemConfig) -> Problem {
    let dom = BlDomain::new(&[n, n], &[k, k], 0.01, 1).unwrap();
    Problem::new(dom, bump(n, [0.45, 0.5], 0.12), bump(n, [0.55, 0.53], 0.12), cfg).unwrap()
}

fn cfg(variant: Variant, mode: FlowMode, gamma: u8) -> ProblemConfig {
    ProblemConfig {
        variant,
        sigma2: 0.05,
        gamma,
        mode,
        time_steps: 4,
        interpolation: Interpolation::Cubic,
        ..Default::default()
    }
}

fn random_flow(p: &Problem, amp: f64, seed: u64) -> TimeFlow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = p.zero_velocity().map(|_| p.spectral().random_smooth(2, amp, &mut rng));
    p.project_flow(&mut v);
    v
}

fn rel(a: &TimeFlow, b: &TimeFlow) -> f64 {
    a.sub(b).norm() / b.norm()
}

#[test]
fn identical_images_have_zero_energy_and_gradient() {
    for variant in [Variant::State, Variant::Deformation] {
        let dom = BlDomain::new(&[16, 16], &[4, 4], 0.01, 1).unwrap();
        let img = bump(16, [0.5, 0.5], 0.1);
        let p = Problem::new(dom, img.clone(), img, cfg(variant, FlowMode::Nonstationary, 0)).unwrap();
        let e = p.evaluate(&p.zero_velocity()).unwrap();
        assert_eq!(e.energy(), 0.0);
        assert_eq!(e.gradient().max_abs(), 0.0);
    }
}

#[test]
fn zero_velocity_energy_and_gradient() {
    let mut grads = Vec::new();
    for variant in [Variant::State, Variant::Deformation] {
        let mut c = cfg(variant, FlowMode::Nonstationary, 0);
        c.interpolation = Interpolation::Linear;
        let p = problem(16, 4, c);
        let e = p.evaluate(&p.zero_velocity()).unwrap();
        let diff = p.template().zip_map(p.target(), |a, b| a - b);
        assert!((e.energy() - diff.norm_sq() / 0.05).abs() < 1e-14 * e.energy());
        assert_eq!(e.regularity(), 0.0);
        // pi(lambda(1) grad I0) with lambda(1) = -(2/sigma^2)(I0 - I1)
        let lambda = diff.map(|x| -2.0 / 0.05 * x);
        let g0 = spatial_gradient(p.template()).unwrap();
        let gm: Vec<Vec<f64>> = (0..2).map(|c| g0.comp(c).to_vec()).collect();
        let want = project_scaled(p.spectral(), lambda.data(), &gm);
        for f in e.gradient().fields() {
            assert!(f.sub(&want).max_abs() < 1e-10 * want.max_abs());
        }
        grads.push(e.gradient().clone());
    }
    assert!(rel(&grads[0], &grads[1]) < 1e-10);
}

#[test]
fn translation_energy_closed_form() {
    let n = 16;
    let dom = BlDomain::new(&[n, n], &[4, 4], 0.3, 2).unwrap();
    let shift = [3.0 / n as f64, -2.0 / n as f64];
    let i0 = bump(n, [0.5, 0.5], 0.1);
    // I1(x) = I0(x - c) is reached by phi(1) = id - c, i.e. v = c
    let i1 = bump(n, [0.5 + shift[0], 0.5 + shift[1]], 0.1);
    let mut c = cfg(Variant::Deformation, FlowMode::Stationary, 0);
    c.interpolation = Interpolation::Linear;
    let p = Problem::new(dom.clone(), i0, i1, c).unwrap();
    let v = TimeFlow::stationary(BlField::constant(&dom, &shift), 4).unwrap();
    let e = p.energy(&v).unwrap();
    let want = 0.5 * (shift[0] * shift[0] + shift[1] * shift[1]);
    assert!((e - want).abs() < 1e-6 * want, "{e} {want}");
}

/// Central-difference check of `<g, w>` against the energy.
fn gradient_fd_error(p: &Problem, v: &TimeFlow, w: &TimeFlow, eps: f64) -> f64 {
    let g = p.evaluate(v).unwrap();
    let fd = (p.energy(&v.add(&w.scaled(eps))).unwrap() - p.energy(&v.sub(&w.scaled(eps))).unwrap()) / (2.0 * eps);
    let an = g.gradient().dot(w);
    (fd - an).abs() / an.abs()
}

#[test]
fn deformation_gradient_matches_finite_differences() {
    for mode in [FlowMode::Stationary, FlowMode::Nonstationary] {
        for gamma in [0, 1] {
            let p = problem(16, 4, cfg(Variant::Deformation, mode, gamma));
            let v = random_flow(&p, 0.05, 1);
            let w = random_flow(&p, 0.05, 2);
            let e = gradient_fd_error(&p, &v, &w, 1e-4);
            assert!(e < 1e-6, "{mode:?} gamma {gamma}: {e}");
        }
    }
}

#[test]
fn deformation_hessian_matches_finite_differences_and_is_symmetric() {
    for mode in [FlowMode::Stationary, FlowMode::Nonstationary] {
        let mut c = cfg(Variant::Deformation, mode, 0);
        c.hessian = HessianMode::Newton;
        let p = problem(16, 4, c);
        let v = random_flow(&p, 0.05, 3);
        let w1 = random_flow(&p, 0.05, 4);
        let w2 = random_flow(&p, 0.05, 5);
        let e = p.evaluate(&v).unwrap();
        let h1 = p.hessian_vector(&e, &w1).unwrap();
        let h2 = p.hessian_vector(&e, &w2).unwrap();
        let eps = 1e-4;
        let gp = p.evaluate(&v.add(&w1.scaled(eps))).unwrap();
        let gm = p.evaluate(&v.sub(&w1.scaled(eps))).unwrap();
        let fd = gp.gradient().sub(gm.gradient()).scaled(0.5 / eps);
        assert!(rel(&h1, &fd) < 1e-4, "{}", rel(&h1, &fd));
        let (a, b) = (h1.dot(&w2), w1.dot(&h2));
        assert!((a - b).abs() < 1e-8 * a.abs().max(b.abs()), "{a} {b}");
        // superposition
        let h12 = p.hessian_vector(&e, &w1.scaled(2.0).add(&w2.scaled(-3.0))).unwrap();
        let lin = h1.scaled(2.0).add(&h2.scaled(-3.0));
        assert!(rel(&h12, &lin) < 1e-12);
        assert_eq!(p.hessian_vector(&e, &w1.zeros_like()).unwrap().max_abs(), 0.0);
    }
}

#[test]
fn gauss_newton_is_bounded_below_by_regularizer() {
    for variant in [Variant::State, Variant::Deformation] {
        for mode in [FlowMode::Stationary, FlowMode::Nonstationary] {
            let p = problem(16, 4, cfg(variant, mode, 0));
            for v in [p.zero_velocity(), random_flow(&p, 0.05, 6)] {
                let e = p.evaluate(&v).unwrap();
                for s in 0..5 {
                    let w = random_flow(&p, 0.1, 100 + s);
                    let hw = p.hessian_vector_with(&e, &w, HessianMode::GaussNewton).unwrap();
                    let lw = w.map(|f| p.spectral().apply_l(f));
                    let (q, l) = (w.dot(&hw), w.dot(&lw));
                    if variant == Variant::Deformation || v.max_abs() == 0.0 {
                        assert!(q >= (1.0 - 1e-8) * l, "{variant:?} {mode:?}: {q} < {l}");
                    }
                }
            }
        }
    }
}

#[test]
fn incompressible_outputs_are_divergence_free() {
    for variant in [Variant::State, Variant::Deformation] {
        let p = problem(16, 4, cfg(variant, FlowMode::Nonstationary, 1));
        let v = random_flow(&p, 0.05, 7);
        assert!(p.max_divergence(&v) < 1e-12);
        let e = p.evaluate(&v).unwrap();
        assert!(p.max_divergence(e.gradient()) < 1e-12);
        let w = p.zero_velocity().map(|_| BlField::random(p.spectral().domain(), 2, &mut ChaCha8Rng::seed_from_u64(8)));
        let h = p.hessian_vector(&e, &w).unwrap();
        assert!(p.max_divergence(&h) < 1e-12);
    }
}

#[test]
fn state_gradient_agrees_with_spatial_reference() {
    for mode in [FlowMode::Stationary, FlowMode::Nonstationary] {
        let mut c = cfg(Variant::State, mode, 0);
        c.time_steps = 8;
        let p = problem(32, 4, c);
        let v = random_flow(&p, 0.04, 9);
        let g = p.evaluate(&v).unwrap();
        let r = reference::state_gradient(&p, &v, 64).unwrap();
        let err = rel(g.gradient(), &r);
        assert!(err < 2e-2, "{mode:?}: {err}");
    }
}

#[test]
fn state_hessian_matches_finite_differences_of_its_gradient() {
    for mode in [FlowMode::Stationary, FlowMode::Nonstationary] {
        let mut c = cfg(Variant::State, mode, 0);
        c.hessian = HessianMode::Newton;
        let p = problem(16, 4, c);
        let v = random_flow(&p, 0.05, 10);
        let w = random_flow(&p, 0.05, 11);
        let e = p.evaluate(&v).unwrap();
        let h = p.hessian_vector(&e, &w).unwrap();
        let eps = 1e-4;
        let gp = p.evaluate(&v.add(&w.scaled(eps))).unwrap();
        let gm = p.evaluate(&v.sub(&w.scaled(eps))).unwrap();
        let fd = gp.gradient().sub(gm.gradient()).scaled(0.5 / eps);
        assert!(rel(&h, &fd) < 1e-4, "{mode:?}: {}", rel(&h, &fd));
    }
}

#[test]
fn pure_regularizer_gradient() {
    let mut c = cfg(Variant::Deformation, FlowMode::Nonstationary, 0);
    c.sigma2 = f64::INFINITY;
    let p = problem(16, 4, c);
    let v = random_flow(&p, 0.05, 12);
    let e = p.evaluate(&v).unwrap();
    let want = v.map(|f| p.spectral().apply_l(f));
    assert!(rel(e.gradient(), &want) < 1e-10);
}

#[test]
fn rejects_bad_configs_and_shapes() {
    let mut c = ProblemConfig::default();
    c.sigma2 = 0.0;
    assert!(c.validate().is_err());
    c.sigma2 = 1.0;
    c.gamma = 2;
    assert!(c.validate().is_err());
    let dom = BlDomain::new(&[16, 16], &[4, 4], 0.01, 1).unwrap();
    assert!(Problem::new(dom, bump(16, [0.5, 0.5], 0.1), bump(8, [0.5, 0.5], 0.1), ProblemConfig::default()).is_err());
    let p = problem(16, 4, cfg(Variant::Deformation, FlowMode::Stationary, 0));
    let wrong = TimeFlow::zeros(p.spectral(), FlowMode::Nonstationary, 4).unwrap();
    assert!(p.evaluate(&wrong).is_err());
}
