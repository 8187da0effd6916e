use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use cdistab::geometry::{State4, Vec2};
use cdistab::lyapunov::LyapunovContext;
use cdistab::saturation::{ModifiedSaturation, SaturationFn, SaturationKind};
use cdistab::systems::{a_eps_matrix, averaged_field, monotonicity_gap, s_to_t, spectral_abscissa, t_to_s, SystemSpec};

fn ctx() -> &'static LyapunovContext {
    static CTX: OnceLock<LyapunovContext> = OnceLock::new();
    CTX.get_or_init(|| LyapunovContext::new(Arc::new(ModifiedSaturation::new(SaturationFn::standard()).unwrap())))
}

fn kind() -> impl Strategy<Value = SaturationKind> {
    prop_oneof![Just(SaturationKind::Standard), Just(SaturationKind::Tanh), Just(SaturationKind::Arctan)]
}

fn vec2(r: f64) -> impl Strategy<Value = Vec2> {
    (-r..r, -r..r).prop_map(|(a, b)| Vec2::new(a, b))
}

fn nonzero(r: f64) -> impl Strategy<Value = (Vec2, Vec2)> {
    (vec2(r), vec2(r)).prop_filter("nonzero", |(z, y)| z.norm() + y.norm() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sigma_is_odd_bounded_lipschitz(
        k in kind(), k1 in 0.2..5.0f64, k2 in 0.2..5.0f64, a in -50.0..50.0f64, b in -50.0..50.0f64,
    ) {
        let s = SaturationFn::new(k, k1, k2).unwrap();
        prop_assert_eq!(s.eval(-a), -s.eval(a));
        prop_assert!(s.eval(a).abs() <= s.sigma_inf() + 1e-15);
        prop_assert!((s.eval(a) - s.eval(b)).abs() <= s.sigma_prime_0() * (a - b).abs() * (1.0 + 1e-12));
        prop_assert!(s.prime(a) >= 0.0 && s.prime(a) <= s.sigma_prime_0() * (1.0 + 1e-12));
    }

    #[test]
    fn modified_saturation_is_a_saturation(xi in 0.0..200.0f64, d in 0.0..5.0f64) {
        let s = ctx().s();
        let v = s.eval(xi).unwrap();
        prop_assert_eq!(s.eval(-xi).unwrap(), -v);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= s.s_inf() * (1.0 + 1e-9));
        prop_assert!(v <= s.s_prime_0() * xi * (1.0 + 1e-9) + 1e-15);
        prop_assert!(s.eval(xi + d).unwrap() >= v - 1e-12);
        let p = s.prime(xi).unwrap();
        prop_assert!(p >= -1e-12 && p <= s.s_prime_0() + 1e-9);
    }

    #[test]
    fn v0_positive_and_decreasing_along_t0((z, y) in nonzero(100.0)) {
        let c = ctx();
        prop_assert!(c.v0(&z, &y).unwrap() > 0.0);
        prop_assert!(c.v0_dot_t0(&z, &y).unwrap() < 0.0);
    }

    #[test]
    fn averaged_field_is_monotone(z in vec2(50.0), y in vec2(50.0)) {
        let s = ctx().s();
        prop_assert!(monotonicity_gap(s, &z, &y).unwrap() >= -1e-12);
        let f = averaged_field(s, &z).unwrap();
        prop_assert!(f.dot(&z) >= 0.0);
        prop_assert!(f.norm() <= s.s_inf() * (1.0 + 1e-9));
    }

    #[test]
    fn term_split_signs_and_sum(
        (z, y) in nonzero(20.0), t in 0.0..10.0f64, eps in 0.01..1.0f64,
    ) {
        let c = ctx();
        let terms = c.v0_dot_teps_terms(t, eps, &z, &y).unwrap();
        prop_assert!(terms.term2 <= 1e-12);

        // central difference of V0 along the T_eps velocity
        let sys = SystemSpec::t_eps(eps, c.sigma().clone()).unwrap();
        let x = [z.x, z.y, y.x, y.y];
        let mut v = [0.0; 4];
        sys.rhs(t, &x, &mut v).unwrap();
        let h = 1e-6;
        let at = |s: f64| {
            let p: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            c.v0_state(&p).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let sum = terms.sum();
        prop_assert!((fd - sum).abs() <= 1e-5 * (1.0 + sum.abs()), "fd {fd} terms {sum}");
    }

    #[test]
    fn coordinate_change_round_trips(
        x1 in vec2(100.0), x2 in vec2(100.0), t in 0.0..100.0f64, eps in 0.01..1.0f64,
    ) {
        let x = State4::xy(x1, x2);
        let back = t_to_s(t, eps, &s_to_t(t, eps, &x).unwrap()).unwrap();
        prop_assert!((back.to_vec4() - x.to_vec4()).norm() <= 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn closed_loop_linear_part_is_hurwitz(eps in 1e-3..1.0f64) {
        prop_assert!(spectral_abscissa(&a_eps_matrix(eps).unwrap()).unwrap() < 0.0);
    }
}
