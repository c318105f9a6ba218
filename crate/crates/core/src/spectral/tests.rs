use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn spectral(grid: &[usize], bounds: &[usize]) -> Spectral {
    Spectral::new(BlDomain::new(grid, bounds, 0.7, 2).unwrap())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct evaluation of `sum_k c_k exp(2 pi i k.x)` at every grid point.
fn fourier_sum(dom: &BlDomain, coeffs: &[Complex64]) -> Vec<f64> {
    let shape = dom.grid_shape();
    (0..dom.grid_len())
        .map(|idx| {
            let x = crate::grid::position(shape, idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, c) in coeffs.iter().enumerate() {
                let k = dom.frequency(i);
                let phase = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
                acc += c * Complex64::new(phase.cos(), phase.sin());
            }
            acc.re
        })
        .collect()
}

/// `c(k) = sum_{p+q=k} a(p) b(q)` over block frequencies, truncated to the block.
fn brute_conv(dom: &BlDomain, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = dom.spectral_len();
    let kb = dom.bounds3();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for p in 0..n {
        let kp = dom.frequency(p);
        for q in 0..n {
            let kq = dom.frequency(q);
            let k = [kp[0] + kq[0], kp[1] + kq[1], kp[2] + kq[2]];
            if (0..3).all(|j| k[j].unsigned_abs() as usize <= kb[j]) {
                out[dom.index_of(k)] += a[p] * b[q];
            }
        }
    }
    out
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn include_zero_and_dc() {
    let s = spectral(&[8, 8], &[3, 3]);
    let z = s.include(&s.zeros(1)).unwrap();
    assert!(z.data().iter().all(|v| *v == 0.0));
    let c = s.include(&BlField::constant(s.domain(), &[1.75])).unwrap();
    assert!(c.data().iter().all(|v| (v - 1.75).abs() < 1e-15));
}

#[test]
fn include_matches_direct_fourier_sum() {
    for (grid, bounds) in [(vec![8, 8], vec![3, 3]), (vec![8, 10, 6], vec![3, 2, 2])] {
        let s = spectral(&grid, &bounds);
        let f = BlField::random(s.domain(), 1, &mut rng(1));
        let got = s.include(&f).unwrap();
        let want = fourier_sum(s.domain(), f.comp(0));
        let err = got
            .data()
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }
}

#[test]
fn include_rejects_asymmetric_spectrum() {
    let s = spectral(&[8, 8], &[3, 3]);
    let mut f = BlField::random(s.domain(), 2, &mut rng(2));
    f.comp_mut(1)[5] += Complex64::new(1e-6, 0.0);
    assert!(matches!(s.include(&f), Err(Error::Asymmetric(_))));
    f.symmetrize();
    assert!(s.include(&f).is_ok());
}

#[test]
fn project_include_roundtrip_and_idempotence() {
    let s = spectral(&[16, 12], &[5, 4]);
    let f = BlField::random(s.domain(), 2, &mut rng(3));
    let back = s.project(&s.include(&f).unwrap());
    assert!(max_diff(back.as_slice(), f.as_slice()) < 1e-12);

    let raw = SpatialField::from_fn(&[16, 12], |x| (x[0] * 13.0).sin() * (x[1] * 5.0).exp());
    let once = s.realize(&s.project(&raw));
    let twice = s.realize(&s.project(&once));
    let err = once.zip_map(&twice, |a, b| a - b).max_abs();
    assert!(err < 1e-12, "{err}");
}

#[test]
fn out_of_band_mode_is_annihilated() {
    let s = spectral(&[32, 32], &[8, 8]);
    let f = SpatialField::from_fn(&[32, 32], |x| (2.0 * PI * 11.0 * x[0]).cos() + (2.0 * PI * 9.0 * x[1]).sin());
    assert!(s.project(&f).max_abs() < 1e-14);
}

#[test]
fn conv_identity_and_commutativity() {
    let s = spectral(&[16, 16], &[4, 4]);
    let a = BlField::random(s.domain(), 1, &mut rng(4));
    let b = BlField::random(s.domain(), 1, &mut rng(5));
    let one = BlField::constant(s.domain(), &[1.0]);
    assert!(max_diff(s.conv(&a, &one).unwrap().as_slice(), a.as_slice()) < 1e-12);
    let ab = s.conv(&a, &b).unwrap();
    let ba = s.conv(&b, &a).unwrap();
    assert!(max_diff(ab.as_slice(), ba.as_slice()) < 1e-12);
}

#[test]
fn conv_matches_brute_force_for_small_bounds() {
    let mut seed = 10;
    for k0 in 1..=3 {
        for k1 in 1..=3 {
            let s = spectral(&[8, 8], &[k0, k1]);
            seed += 1;
            let a = BlField::random(s.domain(), 1, &mut rng(seed));
            let b = BlField::random(s.domain(), 1, &mut rng(seed + 100));
            let got = s.conv(&a, &b).unwrap();
            let want = brute_conv(s.domain(), a.comp(0), b.comp(0));
            assert!(max_diff(got.comp(0), &want) < 1e-12, "K = ({k0}, {k1})");
        }
    }
    let s = spectral(&[6, 6, 6], &[2, 1, 2]);
    let a = BlField::random(s.domain(), 1, &mut rng(7));
    let b = BlField::random(s.domain(), 1, &mut rng(8));
    let want = brute_conv(s.domain(), a.comp(0), b.comp(0));
    assert!(max_diff(s.conv(&a, &b).unwrap().comp(0), &want) < 1e-12);
}

#[test]
fn conv_contractions() {
    let s = spectral(&[12, 12], &[3, 3]);
    let m = BlField::random(s.domain(), 4, &mut rng(20));
    let v = BlField::random(s.domain(), 2, &mut rng(21));
    let mv = s.conv(&m, &v).unwrap();
    for r in 0..2 {
        let mut want = vec![Complex64::new(0.0, 0.0); s.block_len()];
        for c in 0..2 {
            for (w, x) in want.iter_mut().zip(brute_conv(s.domain(), m.comp(r * 2 + c), v.comp(c))) {
                *w += x;
            }
        }
        assert!(max_diff(mv.comp(r), &want) < 1e-12);
    }
    let dot = s.conv(&v, &v).unwrap();
    assert_eq!(dot.ncomp(), 1);
    assert!(s.conv(&m, &m).is_err());
}

#[test]
fn l_and_k_are_inverse_and_fix_constants() {
    let s = spectral(&[16, 16], &[6, 6]);
    let v = BlField::random(s.domain(), 2, &mut rng(30));
    let back = s.apply_k(&s.apply_l(&v));
    assert!(max_diff(back.as_slice(), v.as_slice()) < 1e-12);
    let c = BlField::constant(s.domain(), &[0.3, -2.0]);
    assert_eq!(s.apply_l(&c), c);
}

#[test]
fn derivative_of_single_mode() {
    let s = spectral(&[16, 16], &[4, 4]);
    let f = SpatialField::from_fn(&[16, 16], |x| (2.0 * PI * x[0]).sin());
    let g = s.gradient(&s.project(&f)).unwrap();
    let want = SpatialField::from_fn(&[16, 16], |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
    let got = s.include(&g).unwrap();
    assert!(got.component(0).zip_map(&want, |a, b| a - b).max_abs() < 1e-12);
    assert!(got.component(1).max_abs() < 1e-12);
    // coefficient level: sin = (e^{i} - e^{-i}) / 2i, derivative 2 pi cos = pi (e^{i} + e^{-i})
    let k1 = s.domain().index_of([1, 0, 0]);
    assert!((g.comp(0)[k1] - Complex64::new(PI, 0.0)).norm() < 1e-12);
    assert!(s.gradient(&BlField::constant(s.domain(), &[4.0])).unwrap().max_abs() == 0.0);
}

#[test]
fn divergence_of_gradient_is_laplacian() {
    let s = spectral(&[16, 16, 8], &[4, 3, 3]);
    let p = BlField::random(s.domain(), 1, &mut rng(40));
    let lhs = s.divergence(&s.gradient(&p).unwrap()).unwrap();
    let rhs = s.laplacian(&p);
    assert!(max_diff(lhs.as_slice(), rhs.as_slice()) < 1e-12 * rhs.max_abs());
}

#[test]
fn spectral_and_spatial_gradients_agree_to_second_order() {
    let err = |n: usize| {
        let s = spectral(&[n, n], &[3, 3]);
        let mut f = s.zeros(1);
        f.comp_mut(0)[s.domain().index_of([2, 1, 0])] = Complex64::new(0.5, 0.25);
        f.symmetrize();
        let spectral = s.include(&s.gradient(&f).unwrap()).unwrap();
        let spatial = crate::grid::spatial_gradient(&s.include(&f).unwrap()).unwrap();
        spectral.zip_map(&spatial, |a, b| a - b).max_abs()
    };
    let ratio = err(32) / err(64);
    assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
}

#[test]
fn jacobian_layout() {
    let s = spectral(&[12, 12], &[3, 3]);
    let v = BlField::random(s.domain(), 2, &mut rng(41));
    let j = s.jacobian(&v).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            assert_eq!(j.comp(a * 2 + b), s.derivative(&v.component(a), b).comp(0));
        }
    }
}

#[test]
fn leray_projection() {
    let s = spectral(&[16, 16], &[4, 4]);
    let v = BlField::random(s.domain(), 2, &mut rng(50));
    let (w, p) = s.leray(&v).unwrap();
    assert!(s.max_divergence(&w) < 1e-12);
    assert_eq!(p.comp(0)[s.block_len() / 2], Complex64::new(0.0, 0.0));
    let (ww, pp) = s.leray(&w).unwrap();
    assert!(max_diff(ww.as_slice(), w.as_slice()) < 1e-12);
    assert!(pp.max_abs() < 1e-12);
    let mut w2 = v.clone();
    s.project_div_free(&mut w2);
    assert!(max_diff(w2.as_slice(), w.as_slice()) < 1e-12);

    // pure gradients vanish apart from the constant part
    let mut q = BlField::random(s.domain(), 1, &mut rng(51));
    let grad = s.gradient(&q).unwrap();
    let (w, p) = s.leray(&grad).unwrap();
    assert!(w.max_abs() < 1e-12);
    q.comp_mut(0)[s.block_len() / 2] = Complex64::new(0.0, 0.0);
    assert!(max_diff(p.as_slice(), q.as_slice()) < 1e-12);
}

#[test]
fn leray_random_3d() {
    let s = spectral(&[12, 12, 12], &[4, 3, 2]);
    let v = BlField::random(s.domain(), 3, &mut rng(52));
    let (w, _) = s.leray(&v).unwrap();
    assert!(s.max_divergence(&w) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_l_self_adjoint_and_coercive(seed in any::<u64>(), k0 in 1usize..5, k1 in 1usize..5) {
        let s = spectral(&[12, 10], &[k0, k1]);
        let v = BlField::random(s.domain(), 2, &mut rng(seed));
        let w = BlField::random(s.domain(), 2, &mut rng(seed ^ 0x5555));
        let lvw = s.apply_l(&v).dot(&w);
        let vlw = v.dot(&s.apply_l(&w));
        prop_assert!((lvw - vlw).abs() <= 1e-10 * lvw.abs().max(vlw.abs()));
        prop_assert!(v.dot(&s.apply_l(&v)) >= v.dot(&v));
    }

    #[test]
    fn prop_roundtrip_and_symmetry(seed in any::<u64>(), k0 in 1usize..4, k1 in 1usize..4, k2 in 1usize..3) {
        let s = spectral(&[8, 8, 6], &[k0, k1, k2]);
        let f = BlField::random(s.domain(), 3, &mut rng(seed));
        let x = s.include(&f).unwrap();
        let back = s.project(&x);
        prop_assert!(max_diff(back.as_slice(), f.as_slice()) < 1e-12);
        prop_assert!(back.symmetry_defect() < 1e-14);
        let prod = s.conv(&f, &f).unwrap();
        prop_assert!(prod.symmetry_defect() < 1e-12);
        let (w, _) = s.leray(&f).unwrap();
        prop_assert!(w.symmetry_defect() < 1e-12);
        prop_assert!(s.jacobian(&f).unwrap().symmetry_defect() < 1e-12);
    }

    #[test]
    fn prop_l2_product_matches_grid_sum(seed in any::<u64>()) {
        let s = spectral(&[10, 12], &[3, 4]);
        let a = BlField::random(s.domain(), 2, &mut rng(seed));
        let b = BlField::random(s.domain(), 2, &mut rng(seed.wrapping_add(1)));
        let xa = s.include(&a).unwrap();
        let xb = s.include(&b).unwrap();
        let grid: f64 = xa.data().iter().zip(xb.data()).map(|(p, q)| p * q).sum::<f64>() * xa.voxel_volume();
        prop_assert!((grid - a.dot(&b)).abs() < 1e-10 * (1.0 + grid.abs()));
    }

    #[test]
    fn prop_leray_fixed_point(seed in any::<u64>()) {
        let s = spectral(&[12, 12], &[4, 4]);
        let v = BlField::random(s.domain(), 2, &mut rng(seed));
        let (w, _) = s.leray(&v).unwrap();
        let (ww, _) = s.leray(&w).unwrap();
        prop_assert!(s.max_divergence(&w) < 1e-12);
        prop_assert!(max_diff(ww.as_slice(), w.as_slice()) < 1e-12);
    }
}
