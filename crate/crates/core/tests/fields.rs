use std::f64::consts::PI;

use collapselab::fields::deriv::Deriv;
use collapselab::fields::{ddbar, eigen_envelope, riemann_sectional, ricci_form, Chart, HermitianField};
use collapselab::grid::{Axis, Grid, GridField};
use collapselab::linalg::c;
use collapselab::Error;
use proptest::prelude::*;

fn periodic_plane(n: usize) -> Chart {
    Chart::flat(Grid::new(vec![Axis::periodic(n, 1.0), Axis::periodic(n, 1.0)]).unwrap()).unwrap()
}

fn dirichlet_plane(n: usize) -> Chart {
    Chart::flat(Grid::new(vec![Axis::dirichlet(n, -1.0, 1.0), Axis::dirichlet(n, -1.0, 1.0)]).unwrap()).unwrap()
}

fn conformal(chart: &Chart, lambda: &GridField) -> HermitianField {
    let data = lambda.values.iter().map(|l| c(*l, 0.0)).collect();
    HermitianField::new(chart.grid.clone(), 1, data).unwrap()
}

#[test]
fn ddbar_of_constant_vanishes() {
    let ch = periodic_plane(16);
    let h = ddbar(&ch, &GridField::from_fn(&ch.grid, |_| 3.7)).unwrap();
    assert!(h.sup_norm() < 1e-12);
}

#[test]
fn ddbar_of_cosine() {
    let ch = periodic_plane(16);
    let phi = GridField::from_fn(&ch.grid, |u| (2.0 * PI * u[0]).cos());
    let h = ddbar(&ch, &phi).unwrap();
    for i in 0..ch.grid.len() {
        let want = -PI * PI * (2.0 * PI * ch.grid.point(i)[0]).cos();
        assert!((h.at(i)[0] - c(want, 0.0)).norm() < 1e-10);
    }
}

#[test]
fn ddbar_of_modulus_squared_on_dirichlet_chart() {
    let ch = dirichlet_plane(20);
    let phi = GridField::from_fn(&ch.grid, |u| u[0] * u[0] + u[1] * u[1]);
    let h = ddbar(&ch, &phi).unwrap();
    for i in 0..ch.grid.len() {
        let mi = ch.grid.multi_index(i);
        if mi.iter().all(|&k| (2..18).contains(&k)) {
            assert!((h.at(i)[0] - c(1.0, 0.0)).norm() < 1e-10);
        }
    }
}

#[test]
fn ddbar_rejects_mismatched_grid() {
    let ch = periodic_plane(16);
    let other = GridField::zeros(&Grid::new(vec![Axis::periodic(8, 1.0), Axis::periodic(8, 1.0)]).unwrap());
    assert!(matches!(ddbar(&ch, &other), Err(Error::Shape(_))));
}

#[test]
fn ricci_of_conformal_scaling() {
    let g = Grid::new(vec![Axis::periodic(16, 1.0), Axis::periodic(4, 1.0), Axis::periodic(4, 1.0), Axis::periodic(4, 1.0)]).unwrap();
    let ch = Chart::flat(g.clone()).unwrap();
    let n = 2;
    let u = GridField::from_fn(&g, |p| 0.1 * (2.0 * PI * p[0]).cos());
    let mut data = Vec::new();
    for i in 0..g.len() {
        let e = u.values[i].exp();
        data.extend([c(e, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(e, 0.0)]);
    }
    let metric = HermitianField::new(g.clone(), n, data).unwrap();
    let ric = ricci_form(&ch, &metric).unwrap();
    for i in 0..g.len() {
        let want = -(n as f64) * (-0.1 * PI * PI * (2.0 * PI * g.point(i)[0]).cos());
        assert!((ric.at(i)[0].re - want).abs() < 1e-8);
        assert!(ric.at(i)[3].norm() < 1e-12);
    }
    let flat = HermitianField::constant(&g, n, &[c(2.0, 0.0), c(0.1, 0.3), c(0.1, -0.3), c(1.0, 0.0)]).unwrap();
    assert!(ricci_form(&ch, &flat).unwrap().sup_norm() < 1e-12);
}

#[test]
fn ricci_rejects_nonpositive_metric() {
    let ch = periodic_plane(8);
    let bad = HermitianField::constant(&ch.grid, 1, &[c(-1.0, 0.0)]).unwrap();
    assert!(matches!(ricci_form(&ch, &bad), Err(Error::Positivity(_))));
}

#[test]
fn conformal_gaussian_curvature_at_64() {
    let ch = periodic_plane(64);
    let lam = GridField::from_fn(&ch.grid, |u| (0.2 * (2.0 * PI * u[0]).cos()).exp());
    let g = conformal(&ch, &lam);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in (0..ch.grid.len()).step_by(37) {
        let x = ch.grid.point(i)[0];
        let want = 0.4 * PI * PI * (2.0 * PI * x).cos() / lam.values[i];
        let got = riemann_sectional(&ch, &g, i, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        worst = worst.max((got - want).abs());
        scale = scale.max(want.abs());
    }
    assert!(worst <= 0.01 * scale, "{worst} vs {scale}");
}

#[test]
fn conformal_gaussian_curvature_on_dirichlet_chart() {
    let n = 64;
    let ch = dirichlet_plane(n);
    let lam = GridField::from_fn(&ch.grid, |u| (0.3 * (u[0] + 0.5 * u[1]).sin()).exp());
    let g = conformal(&ch, &lam);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..ch.grid.len() {
        let mi = ch.grid.multi_index(i);
        if !mi.iter().all(|&k| (4..n - 4).contains(&k)) {
            continue;
        }
        let p = ch.grid.point(i);
        let want = 0.3 * 1.25 * (p[0] + 0.5 * p[1]).sin() / (2.0 * lam.values[i]);
        let got = riemann_sectional(&ch, &g, i, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        worst = worst.max((got - want).abs());
        scale = scale.max(want.abs());
    }
    assert!(worst <= 0.01 * scale, "{worst} vs {scale}");
}

#[test]
fn product_metric_has_no_mixed_curvature() {
    let g = Grid::new(vec![Axis::periodic(16, 1.0), Axis::periodic(4, 1.0), Axis::periodic(4, 1.0), Axis::periodic(16, 1.0)]).unwrap();
    let ch = Chart::flat(g.clone()).unwrap();
    let mut data = Vec::new();
    for i in 0..g.len() {
        let p = g.point(i);
        data.extend([c((0.2 * (2.0 * PI * p[0]).cos()).exp(), 0.0), c(0.0, 0.0), c(0.0, 0.0), c((0.3 * (2.0 * PI * p[3]).sin()).exp(), 0.0)]);
    }
    let metric = HermitianField::new(g, 2, data).unwrap();
    for i in [0, 77, 300, 1000] {
        let k = riemann_sectional(&ch, &metric, i, &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(k.abs() < 1e-10);
        let own = riemann_sectional(&ch, &metric, i, &[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(own.abs() > 1e-3);
    }
}

#[test]
fn flat_metric_has_zero_curvature_and_degenerate_planes_fail() {
    let ch = periodic_plane(8);
    let g = HermitianField::constant(&ch.grid, 1, &[c(2.5, 0.0)]).unwrap();
    assert!(riemann_sectional(&ch, &g, 5, &[1.0, 0.2], &[0.3, 1.0]).unwrap().abs() < 1e-12);
    assert!(matches!(riemann_sectional(&ch, &g, 5, &[1.0, 0.2], &[2.0, 0.4]), Err(Error::DegeneratePlane(_))));
}

#[test]
fn eigen_envelope_examples() {
    let ch = periodic_plane(4);
    let pts: Vec<usize> = (0..16).collect();
    let h = HermitianField::constant(&ch.grid, 1, &[c(1.5, 0.0)]).unwrap();
    let (lo, hi) = eigen_envelope(&h, &h, &pts).unwrap();
    assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    let (lo, hi) = eigen_envelope(&h.scale(2.0), &h, &pts).unwrap();
    assert!((lo - 2.0).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
    let g2 = Grid::new(vec![Axis::periodic(2, 1.0), Axis::periodic(2, 1.0), Axis::periodic(2, 1.0), Axis::periodic(2, 1.0)]).unwrap();
    let z = c(0.0, 0.0);
    let a = HermitianField::constant(&g2, 2, &[c(1.0, 0.0), z, z, c(3.0, 0.0)]).unwrap();
    let id = HermitianField::constant(&g2, 2, &[c(1.0, 0.0), z, z, c(1.0, 0.0)]).unwrap();
    let (lo, hi) = eigen_envelope(&a, &id, &(0..16).collect::<Vec<_>>()).unwrap();
    assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
}

#[test]
fn spectral_derivatives_of_band_limited_fields() {
    let g = Grid::new(vec![Axis::periodic(16, 2.0), Axis::periodic(12, 1.0)]).unwrap();
    let d = Deriv::new(&g);
    let f = GridField::from_fn(&g, |p| (PI * 3.0 * p[0]).sin() * (2.0 * PI * 2.0 * p[1]).cos() + 0.5 * (PI * p[0]).cos());
    let fx = d.d1(0, &f.values);
    let fyy = d.d2(1, &f.values);
    for i in 0..g.len() {
        let p = g.point(i);
        let wx = 3.0 * PI * (PI * 3.0 * p[0]).cos() * (4.0 * PI * p[1]).cos() - 0.5 * PI * (PI * p[0]).sin();
        let wyy = -(4.0 * PI).powi(2) * (PI * 3.0 * p[0]).sin() * (4.0 * PI * p[1]).cos();
        assert!((fx[i] - wx).abs() < 1e-10);
        assert!((fyy[i] - wyy).abs() < 1e-10);
    }
}

#[test]
fn finite_differences_converge_at_fourth_order() {
    let f = |x: f64| (1.3 * x + 0.4).sin() * x.exp();
    let f1 = |x: f64| (1.3 * (1.3 * x + 0.4).cos() + (1.3 * x + 0.4).sin()) * x.exp();
    let f2 = |x: f64| ((1.0 - 1.69) * (1.3 * x + 0.4).sin() + 2.6 * (1.3 * x + 0.4).cos()) * x.exp();
    let errors = |n: usize| -> (f64, f64) {
        let g = Grid::new(vec![Axis::dirichlet(n, 0.0, 1.0)]).unwrap();
        let d = Deriv::new(&g);
        let v = GridField::from_fn(&g, |p| f(p[0]));
        let a = d.d1(0, &v.values);
        let b = d.d2(0, &v.values);
        let e1 = (0..n).map(|i| (a[i] - f1(g.point(i)[0])).abs()).fold(0.0, f64::max);
        let e2 = (0..n).map(|i| (b[i] - f2(g.point(i)[0])).abs()).fold(0.0, f64::max);
        (e1, e2)
    };
    let (a1, b1) = errors(33);
    let (a2, b2) = errors(65);
    let (a3, b3) = errors(129);
    for (x, y) in [(a1, a2), (a2, a3), (b1, b2), (b2, b3)] {
        assert!((x / y).log2() >= 3.5, "order {}", (x / y).log2());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ddbar_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 1usize..4, s in 0.0f64..1.0) {
        let ch = dirichlet_plane(12);
        let phi = GridField::from_fn(&ch.grid, |u| (k as f64 * u[0] + s).sin() * u[1]);
        let psi = GridField::from_fn(&ch.grid, |u| u[0] * u[0] * (1.0 + s * u[1]).exp());
        let lhs = ddbar(&ch, &GridField::lincomb(a, &phi, b, &psi).unwrap()).unwrap();
        let rhs = HermitianField::lincomb(a, &ddbar(&ch, &phi).unwrap(), b, &ddbar(&ch, &psi).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-12 * (1.0 + lhs.sup_norm()));
    }

    #[test]
    fn sectional_curvature_is_gl2_invariant(
        idx in 0usize..256,
        x in proptest::collection::vec(-1.0f64..1.0, 4),
        y in proptest::collection::vec(-1.0f64..1.0, 4),
        m in proptest::collection::vec(-2.0f64..2.0, 4),
    ) {
        let det = m[0] * m[3] - m[1] * m[2];
        prop_assume!(det.abs() > 0.1);
        let g = Grid::new(vec![Axis::periodic(4, 1.0), Axis::periodic(4, 1.0), Axis::periodic(4, 1.0), Axis::periodic(4, 1.0)]).unwrap();
        let ch = Chart::flat(g.clone()).unwrap();
        let phi = GridField::from_fn(&g, |p| 0.02 * (2.0 * PI * (p[0] + p[3])).cos() + 0.01 * (2.0 * PI * (p[1] - p[2])).sin());
        let metric = HermitianField::constant(&g, 2, &[c(1.0, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(1.5, 0.0)]).unwrap().add(&ddbar(&ch, &phi).unwrap()).unwrap();
        let k0 = match riemann_sectional(&ch, &metric, idx, &x, &y) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        let u: Vec<f64> = (0..4).map(|i| m[0] * x[i] + m[1] * y[i]).collect();
        let v: Vec<f64> = (0..4).map(|i| m[2] * x[i] + m[3] * y[i]).collect();
        let k1 = riemann_sectional(&ch, &metric, idx, &u, &v).unwrap();
        prop_assert!((k1 - k0).abs() <= 1e-8 * (1.0 + k0.abs()));
    }

    #[test]
    fn ricci_is_minus_ddbar_log_det(s in 0.05f64..0.3) {
        let ch = periodic_plane(16);
        let lam = GridField::from_fn(&ch.grid, |u| (s * (2.0 * PI * u[0]).cos() * (2.0 * PI * u[1]).sin()).exp());
        let g = conformal(&ch, &lam);
        let ric = ricci_form(&ch, &g).unwrap();
        let direct = ddbar(&ch, &lam.map(f64::ln)).unwrap().scale(-1.0);
        prop_assert!(ric.sub(&direct).unwrap().sup_norm() < 1e-12);
    }
}
