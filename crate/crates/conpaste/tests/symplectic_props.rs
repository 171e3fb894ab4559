use conpaste::symplectic::{
    blend_generating, blend_report, generating_from_map, map_from_generating, LocalMap, Patch, FD_STEP,
};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Kick then drift: `Y = y + k sin(2πx)/2π + c x²`, `X = x + t Y`.
fn kick_drift(k: f64, c: f64, t: f64) -> impl Fn(f64, f64) -> [f64; 2] {
    move |x, y| {
        let yy = y + k * (2.0 * PI * x).sin() / (2.0 * PI) + c * x * x;
        [x + t * yy, yy]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn roundtrip_and_symplectic_blend(k in -0.5f64..0.8, c in -1.0f64..1.0, t in 0.6f64..1.5) {
        let delta = 0.15;
        let wide = Patch::new([0.0, 0.0], 6.0 * delta).unwrap();
        let f = kick_drift(k, c, t);
        let s0 = generating_from_map(&LocalMap::sample(wide, 41, &f).unwrap(), delta, 25).unwrap();
        let m = map_from_generating(&s0);
        for i in 0..25 {
            for j in 0..25 {
                if let Some(img) = m.image(i, j) {
                    let [x, y] = m.node(i, j);
                    let e = f(x, y);
                    prop_assert!((img[0] - e[0]).abs().max((img[1] - e[1]).abs()) <= 1e-9);
                }
            }
        }
        let lin = move |x: f64, y: f64| {
            let yy = y + k * x;
            [x + t * yy, yy]
        };
        let s1 = generating_from_map(&LocalMap::sample(wide, 41, lin).unwrap(), delta, 25).unwrap();
        let b = blend_generating(&s0, &s1, delta).unwrap();
        let rep = blend_report(&s0, &s1, &b, FD_STEP).unwrap();
        prop_assert!(rep.det_deviation <= 1e-8, "{:e}", rep.det_deviation);
        prop_assert_eq!(rep.inner_max_diff, 0.0);
        prop_assert_eq!(rep.outer_max_diff, 0.0);
    }
}
