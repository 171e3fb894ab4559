use conpaste::grid::{divergence, gradient, integrate, laplacian, norms, GridSpec, ScalarField};
use conpaste::regions::{nested_regions, partition_of_unity, radial_bump, ball_mask};
use conpaste::synth::{random_scalar, random_spectral_curl};
use proptest::prelude::*;

fn spec() -> GridSpec {
    GridSpec::uniform(2, 32).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn div_grad_is_laplacian(seed in 0u64..10_000, kmax in 1usize..8) {
        let s = spec();
        let f = random_scalar(&s, seed, kmax).unwrap();
        let a = divergence(&gradient(&f).unwrap()).unwrap();
        let b = laplacian(&f).unwrap();
        let scale = b.max_abs().max(1.0);
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-11 * scale);
    }

    #[test]
    fn divergence_integrates_to_zero(seed in 0u64..10_000, kmax in 1usize..10, c in -5.0f64..5.0) {
        let s = spec();
        let g = random_scalar(&s, seed ^ 77, kmax).unwrap();
        let v = gradient(&g).unwrap().scale(c);
        let int = integrate(&divergence(&v).unwrap(), None).unwrap();
        prop_assert!(int.abs() <= 1e-12 * v.max_abs().max(1e-300));
    }

    #[test]
    fn norms_are_ordered_and_finite(seed in 0u64..10_000, kmax in 1usize..10, alpha in 0.1f64..0.9) {
        let v = random_spectral_curl(&spec(), seed, kmax).unwrap();
        let r = norms(&v, alpha).unwrap();
        prop_assert!(r.c1 >= r.c0);
        prop_assert!(r.holder.is_finite() && r.holder >= 0.0);
        prop_assert!(r.holder <= 2.0 * r.c0 / (1.0f64 / 32.0).powf(alpha) * (1.0 + 1e-12));
    }

    #[test]
    fn operators_are_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let s = spec();
        let f = random_spectral_curl(&s, seed, 6).unwrap();
        let g = random_spectral_curl(&s, seed + 1, 6).unwrap();
        let lhs = divergence(&f.scale(a).add(&g.scale(b)).unwrap()).unwrap();
        let rhs = divergence(&f).unwrap().scale(a).add(&divergence(&g).unwrap().scale(b)).unwrap();
        let scale = f.max_abs() * a.abs() + g.max_abs() * b.abs();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * scale.max(1.0) * 32.0);
    }

    #[test]
    fn regions_partition_and_stay_near_k(cx in 0.0f64..1.0, cy in 0.0f64..1.0, rk in 0.03f64..0.12, extra in 0.1f64..0.3, delta in 0.12f64..0.3) {
        let s = spec();
        let c = [cx, cy];
        let k = ball_mask(&s, &c, rk);
        prop_assume!(k.iter().any(|&b| b));
        let u = ball_mask(&s, &c, rk + extra);
        let Ok(rs) = nested_regions(&s, &k, &u, delta) else { return Ok(()) };
        let (v, o, w) = (rs.v_mask(), rs.omega_mask(), rs.w_mask());
        for i in 0..s.len() {
            prop_assert_eq!(v[i] as u8 + o[i] as u8 + w[i] as u8, 1);
            if o[i] {
                prop_assert!(rs.dist_k()[i] <= delta);
            }
        }
        let cut = partition_of_unity(&rs, 2).unwrap();
        let xi = cut.xi1.values();
        // Centred differences vanish on nodes whose whole stencil sits in one plateau.
        for i in 0..s.len() {
            let nb: Vec<usize> = (0..2).flat_map(|a| [s.shift(i, a, -1), s.shift(i, a, 1)]).collect();
            let same = |m: &[bool]| m[i] && nb.iter().all(|&j| m[j]);
            if same(&v) || same(&w) {
                for a in 0..2 {
                    let d = (xi[s.shift(i, a, 1)] - xi[s.shift(i, a, -1)]) / (2.0 * s.h(a));
                    prop_assert!(d.abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn radial_bump_in_unit_interval(cx in 0.0f64..1.0, cy in 0.0f64..1.0, r in 0.13f64..0.24) {
        let b: ScalarField = radial_bump(&spec(), &[cx, cy], r).unwrap();
        prop_assert!(b.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
