use collapselab::hk::{self, lcs_path, normalize_period, rational, BBLattice, Cx, CVec, HKTarget, HKTriple, MirrorData};
use num::{BigRational, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Q = BigRational;

fn qn(n: i64) -> Q {
    rational(n, 1)
}

fn uu_exact() -> MirrorData<Q> {
    let lat = BBLattice::standard(2, 0).unwrap();
    MirrorData::new(lat, vec![1, 0, 0, 0], vec![qn(1), qn(1), qn(0), qn(0)], 0.0).unwrap()
}

fn float_data(k: usize) -> (BBLattice, MirrorData<f64>) {
    let lat = BBLattice::standard(3, k).unwrap();
    let mut e = vec![0; lat.rank];
    e[0] = 1;
    let mut sigma = vec![0.0; lat.rank];
    sigma[0] = 1.0;
    sigma[1] = 1.0;
    (lat.clone(), MirrorData::new(lat, e, sigma, 1e-12).unwrap())
}

fn cvec(re: &[i64], im: &[i64]) -> CVec<Q> {
    re.iter().zip(im).map(|(&a, &b)| Cx::new(qn(a), qn(b))).collect()
}

fn sup(a: &[Cx<f64>], b: &[Cx<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.sub(y).abs_f64()).fold(0.0, f64::max)
}

#[test]
fn rotations_cycle_through_the_triple() {
    let lat = BBLattice::standard(3, 0).unwrap();
    let cls = |k: usize| -> Vec<Q> { (0..6).map(|i| if i / 2 == k { qn(1) } else { qn(0) }).collect() };
    let triple = HKTriple::new(&lat, cls(0), cls(1), cls(2), 0.0).unwrap();
    let mut kahler = Vec::new();
    for target in [HKTarget::I, HKTarget::J, HKTarget::K] {
        let (omega, w) = hk::hk_rotate(&triple, target);
        let pc = hk::in_period_domain(&lat, &omega).unwrap();
        assert!(pc.member && pc.q_abs == 0.0 && pc.q_conj == 4.0);
        kahler.push(w);
    }
    assert_eq!(kahler, vec![cls(0), cls(1), cls(2)]);
    let (omega_j, _) = triple.rotate(HKTarget::J);
    assert_eq!(omega_j, cvec(&[0, 0, 0, 0, 1, 1], &[1, 1, 0, 0, 0, 0]));
    assert!(HKTriple::new(&lat, cls(0), cls(0), cls(2), 0.0).is_err());
}

#[test]
fn trivial_normalization_is_identity() {
    let omega = cvec(&[9, 1, 0, 0], &[0, 0, 3, 3]);
    assert_eq!(normalize_period(&omega, &qn(1), &qn(2), &qn(2)).unwrap(), omega);
    assert!(normalize_period(&omega, &qn(0), &qn(2), &qn(2)).is_err());
}

#[test]
fn path_limit_is_pure_e_direction() {
    let data = uu_exact();
    let w = vec![qn(0), qn(0), qn(1), qn(1)];
    // (t + 1) e1 + t f1 tends to e1 = (s0 / 2) sqrt(q(w) q(w)) E with s0 = 1
    let tiny = hk::rational_path_parameter(1, 1000).unwrap();
    let p = lcs_path(&tiny, &qn(1), &data, &w, &w).unwrap();
    assert_eq!(p.class, vec![tiny.clone() + qn(1), tiny, qn(0), qn(0)]);
    assert!(p.affine_defect.iter().all(Zero::is_zero));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairing_is_symmetric_and_bilinear(k in 0usize..4, a in proptest::collection::vec(-5i64..5, 18), b in proptest::collection::vec(-5i64..5, 18)) {
        let lat = BBLattice::standard(3, k).unwrap();
        let n = lat.rank;
        let x = cvec(&a[..n], &b[..n]);
        let y = cvec(&b[..n], &a[..n]);
        prop_assert_eq!(lat.q(&x, &y).unwrap(), lat.q(&y, &x).unwrap());
        let ix: CVec<Q> = x.iter().map(|v| v.mul(&Cx::i())).collect();
        let qx = lat.q(&x, &x).unwrap();
        prop_assert_eq!(lat.q(&ix, &ix).unwrap(), Cx::new(-qx.re.clone(), -qx.im.clone()));
    }

    #[test]
    fn exact_mirror_map_lands_in_period_domain(a in proptest::collection::vec(-6i64..6, 4), b in 1i64..5, d in 1i64..7) {
        let data = uu_exact();
        // alpha in E^perp = span(e1, e2, f2); Im alpha = b(e2 + f2) has q = 2 b^2 > 0
        let alpha: CVec<Q> = vec![
            Cx::new(rational(a[0], d), qn(0)),
            Cx::zero(),
            Cx::new(rational(a[1], d), qn(b)),
            Cx::new(rational(a[2], d), qn(b)),
        ];
        let m = data.mirror_map(&alpha).unwrap();
        let q = data.q(&m, &m).unwrap();
        prop_assert!(q.re.is_zero() && q.im.is_zero());
        let conj: CVec<Q> = m.iter().map(Cx::conj).collect();
        prop_assert_eq!(data.q(&m, &conj).unwrap(), Cx::real(qn(4 * b * b)));
        let e: CVec<Q> = cvec(&[1, 0, 0, 0], &[0, 0, 0, 0]);
        prop_assert_eq!(data.q(&e, &m).unwrap(), Cx::real(qn(1)));
        // representative independence
        let shifted: CVec<Q> = alpha.iter().zip(&e).map(|(x, y)| x.add(&y.scale(&rational(a[3], d)))).collect();
        prop_assert_eq!(data.mirror_map(&shifted).unwrap(), m.clone());
        let back = data.inverse_mirror(&m).unwrap();
        prop_assert_eq!(back.coordinates, data.reduce(&alpha).unwrap().coordinates);
    }

    #[test]
    fn exact_path_is_affine_with_positive_e_component(a1 in 1i64..8, d1 in 1i64..8, a2 in 1i64..8, d2 in 1i64..8) {
        let data = uu_exact();
        let w = vec![qn(0), qn(0), qn(1), qn(1)];
        let (p1, p2) = (hk::rational_path_parameter(a1, a1 + d1).unwrap(), hk::rational_path_parameter(a2, a2 + d2).unwrap());
        let x = lcs_path(&p1, &qn(1), &data, &w, &w).unwrap();
        let y = lcs_path(&p2, &qn(1), &data, &w, &w).unwrap();
        prop_assert!(x.affine_defect.iter().chain(&y.affine_defect).all(Zero::is_zero));
        prop_assert!(x.class[0] > qn(0) && y.class[0] > qn(0));
        // class is (t + 1) e1 + t f1: affine in t
        let t_mid_class: Vec<Q> = vec![(p1.clone() + p2.clone()) / qn(2) + qn(1), (p1 + p2) / qn(2), qn(0), qn(0)];
        let sum: Vec<Q> = x.class.iter().zip(&y.class).zip(&t_mid_class).map(|((u, v), m)| u.clone() + v.clone() - qn(2) * m.clone()).collect();
        prop_assert!(sum.iter().all(Zero::is_zero));
    }

    #[test]
    fn float_round_trip_and_injectivity(k in 0usize..20, seed in 0u64..1000) {
        let (lat, data) = float_data(k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = hk::random_alpha(&lat, &data, &mut rng).unwrap();
        let b = hk::random_alpha(&lat, &data, &mut rng).unwrap();
        let (ma, mb) = (data.mirror_map(&a).unwrap(), data.mirror_map(&b).unwrap());
        prop_assert!(lat.q(&ma, &ma).unwrap().abs_f64() <= 1e-10);
        let (ra, ia) = (hk::re(&ma), hk::im(&ma));
        prop_assert!((lat.q_real(&ra, &ra).unwrap() - lat.q_real(&ia, &ia).unwrap()).abs() <= 1e-10);
        prop_assert!(lat.q_real(&ra, &ia).unwrap().abs() <= 1e-10);
        let back = data.inverse_mirror(&ma).unwrap();
        prop_assert!(sup(&data.mirror_map(&back.representative).unwrap(), &ma) <= 1e-12);
        let (ca, cb) = (data.reduce(&a).unwrap().coordinates, data.reduce(&b).unwrap().coordinates);
        if sup(&ca, &cb) > 1e-6 {
            prop_assert!(sup(&ma, &mb) > 1e-9);
        }
        // scaling the period leaves the preimage unchanged
        let scaled: CVec<f64> = ma.iter().map(|v| v.mul(&Cx::new(0.3, -1.7))).collect();
        prop_assert!(sup(&data.inverse_mirror(&scaled).unwrap().coordinates, &back.coordinates) <= 1e-10);
    }

    #[test]
    fn normalization_preserves_isotropy(s in 1i64..9, d in 1i64..9) {
        let data = uu_exact();
        let w = vec![qn(0), qn(0), qn(1), qn(1)];
        let s = rational(s, d);
        let period = hk::lcs_period(&data, &w, &s).unwrap();
        let nor = normalize_period(&period, &s, &qn(2), &qn(2)).unwrap();
        let q = data.q(&nor, &nor).unwrap();
        prop_assert!(q.re.is_zero() && q.im.is_zero());
        let (r, i) = (hk::re(&nor), hk::im(&nor));
        prop_assert_eq!(data.lattice.q_real(&r, &r).unwrap(), qn(2));
        prop_assert_eq!(data.lattice.q_real(&i, &i).unwrap(), qn(2));
    }
}
