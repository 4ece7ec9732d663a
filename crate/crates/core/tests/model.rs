use collapselab::linalg::{c, herm_eigvals};
use collapselab::model::FibrationModel;
use collapselab::Error;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn family_b() -> FibrationModel {
    FibrationModel::family_b(0.3, 8, 8, None)
}

fn unit() -> impl Strategy<Value = f64> {
    -0.999f64..0.999
}

#[test]
fn period_examples() {
    let b = family_b();
    let z = b.period_at(&[c(0.5, 0.0)]).unwrap();
    assert!((z[0] - c(0.15, 1.0)).norm() < 1e-15);
    let a = FibrationModel::family_a(4, 4);
    for y in [c(0.0, 0.0), c(0.3, -7.2), c(12.0, 0.5)] {
        assert_eq!(a.period_at(&[y]).unwrap(), vec![c(0.0, 1.0)]);
    }
    assert!(matches!(b.period_at(&[c(1.5, 0.0)]), Err(Error::Domain(_))));
    assert!(matches!(b.period_at(&[c(0.0, 0.0), c(0.0, 0.0)]), Err(Error::Shape(_))));
}

#[test]
fn steep_slope_degenerates_inside_the_chart() {
    // Im Z = 1 + eps Im y vanishes at Im y = -1/eps.
    let m = FibrationModel::family_b(2.0, 8, 8, None);
    let y = [c(0.0, 0.0)];
    assert!(m.period_at(&y).is_ok());
    assert!(m.period.evaluate(&[c(0.0, -0.6)])[0].im < 0.0);
    assert!(matches!(m.period_at(&[c(0.0, -0.6)]), Err(Error::Degenerate(_))));
}

#[test]
fn reduce_examples() {
    let lat = FibrationModel::family_a(4, 4).fiber_lattice(&[c(0.0, 0.0)]).unwrap();
    assert_eq!(lat.reduce_to_fundamental(&[c(1.25, -0.5)]).unwrap(), vec![0.25, 0.5]);
    assert_eq!(lat.reduce_to_fundamental(&[c(3.0, 2.0)]).unwrap(), vec![0.0, 0.0]);
    // Values within 1e-10 below an integer wrap to zero.
    assert_eq!(lat.reduce_to_fundamental(&[c(1.0 - 1e-12, 0.0)]).unwrap(), vec![0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn period_imaginary_part_positive_on_chart(u in unit(), v in unit()) {
        let z = family_b().period_at(&[c(u, v)]).unwrap();
        prop_assert!(herm_eigvals(&[c(z[0].im, 0.0)], 1)[0] > 0.0);
    }

    #[test]
    fn period_is_holomorphic(u in -0.9f64..0.9, v in -0.9f64..0.9) {
        let b = family_b();
        let h = 1e-3;
        let f = |du: f64, dv: f64| b.period_at(&[c(u + du, v + dv)]).unwrap()[0];
        // Cauchy-Riemann: d/dx + i d/dy vanishes for holomorphic Z.
        let dx = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        let dy = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
        prop_assert!((dx + C64::i() * dy).norm() < 1e-10);
        prop_assert!(b.period.holomorphy_residual(&[c(u, v)], h) < 1e-10);
    }

    #[test]
    fn reduction_lands_in_fundamental_domain(u in unit(), v in unit(), re in -50.0f64..50.0, im in -50.0f64..50.0) {
        let lat = family_b().fiber_lattice(&[c(u, v)]).unwrap();
        let z = [c(re, im)];
        let (frac, int) = lat.reduce(&z).unwrap();
        prop_assert!(frac.iter().all(|x| (0.0..1.0).contains(x)));
        let coords: Vec<f64> = frac.iter().zip(&int).map(|(f, k)| f + *k as f64).collect();
        let back = lat.point(&coords);
        prop_assert!((back[0] - z[0]).norm() < 1e-9 * (1.0 + z[0].norm()));
    }

    #[test]
    fn lattice_translation_does_not_change_reduction(u in unit(), v in unit(), x in 0.05f64..0.95, w in 0.05f64..0.95, k in -20i64..20, l in -20i64..20) {
        let lat = family_b().fiber_lattice(&[c(u, v)]).unwrap();
        let z = lat.point(&[x, w]);
        let moved = lat.flat_translate(&z, &[k as f64, l as f64]);
        let a = lat.reduce_to_fundamental(&z).unwrap();
        let b = lat.reduce_to_fundamental(&moved).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-9));
    }

    #[test]
    fn opposite_translations_cancel(u in unit(), v in unit(), re in -3.0f64..3.0, im in -3.0f64..3.0, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let lat = family_b().fiber_lattice(&[c(u, v)]).unwrap();
        let z = [c(re, im)];
        let there = lat.flat_translate(&z, &[s, t]);
        let back = lat.flat_translate(&there, &[-s, -t]);
        prop_assert!((back[0] - z[0]).norm() < 1e-13);
    }
}
