mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::quadratic_roots;
use pencilbench::analysis::{damping, map_z_to_s};
use pencilbench::methods::{growth_roots, moebius_is_symmetric_a_stable, MethodSpec, Moebius};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

proptest! {
    #[test]
    fn log_map_inverts_exp(re in -50.0..50.0f64, im in -3.0..3.0f64, h in 1e-3..1.0f64) {
        let s = c(re / h.max(1.0), im / h);
        let z = (s * h).exp();
        let back = map_z_to_s(z, h).unwrap();
        prop_assert!((back - s).norm() <= 1e-9 * s.norm().max(1.0) / h.min(1.0));
    }

    #[test]
    fn moebius_preimage_round_trips(a in 0.2..3.0f64, c_ in 0.05..3.0f64, re in -5.0..5.0f64, im in -5.0..5.0f64) {
        let q = Moebius::new(a, -a, c_, c_);
        let s = c(re, im);
        prop_assume!((a - c_ * s).norm() > 1e-3);
        let z = q.growth(s).unwrap();
        prop_assert!((q.preimage(z) - s).norm() <= 1e-9 * s.norm().max(1.0));
    }

    #[test]
    fn symmetric_quadruples_preserve_half_planes(a in 0.2..3.0f64, c_ in 0.05..3.0f64, flip in any::<bool>(), re in -10.0..10.0f64, im in -10.0..10.0f64) {
        let q = if flip { Moebius::new(a, a, c_, -c_) } else { Moebius::new(a, -a, c_, c_) };
        prop_assert!(moebius_is_symmetric_a_stable(&q).unwrap());
        prop_assume!(re.abs() > 1e-6);
        let z = q.growth(c(re, im)).unwrap();
        prop_assert_eq!(z.norm() < 1.0, re < 0.0);
    }

    #[test]
    fn bdf2_roots_match_textbook_quadratic(re in -20.0..0.0f64, im in -20.0..20.0f64) {
        let z = c(re, im);
        let got = growth_roots(&MethodSpec::Bdf2, z).unwrap();
        let want = quadratic_roots(c(1.0, 0.0) - z * (2.0 / 3.0), c(-4.0 / 3.0, 0.0), c(1.0 / 3.0, 0.0));
        for w in want {
            let d = got.iter().map(|g| (g - w).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 1e-10 * w.norm().max(1.0));
        }
    }

    #[test]
    fn damping_lies_in_unit_interval(re in -100.0..100.0f64, im in -100.0..100.0f64) {
        prop_assume!(re != 0.0 || im != 0.0);
        let z = damping(c(re, im)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&z));
        prop_assert_eq!(z > 0.0, re < 0.0);
    }
}

#[test]
fn a_stable_methods_damp_the_left_half_plane() {
    for spec in [MethodSpec::BackwardEuler, MethodSpec::Trapezoidal, MethodSpec::TwoStageDirk, MethodSpec::Bdf2] {
        for lh in [c(-1e-3, 0.0), c(-1.0, 30.0), c(-1e4, 1.0), c(-0.5, -2.0)] {
            for z in growth_roots(&spec, lh).unwrap() {
                assert!(z.norm() < 1.0, "{spec} at {lh}: {z}");
            }
        }
    }
}

#[test]
fn explicit_methods_leave_the_disc_for_stiff_modes() {
    for spec in [MethodSpec::ForwardEuler, MethodSpec::Rk4] {
        let z = growth_roots(&spec, c(-10.0, 0.0)).unwrap();
        assert!(z[0].norm() > 1.0);
    }
}
