use std::f64::consts::PI;
use std::sync::OnceLock;

use collapselab::diagnostics::{region_points, trusted_region};
use collapselab::fields::{eigen_envelope, ricci_form};
use collapselab::grid::GridField;
use collapselab::ma_solver::{continuation, determinant_identity_defect, manufactured_rhs, solve, MAProblem, MASolveResult, ModelData, SolverOptions};
use collapselab::model::FibrationModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCHEDULE: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn family_b() -> FibrationModel {
    FibrationModel::family_b(0.3, 16, 8, Some(FibrationModel::default_perturbation()))
}

fn sweep() -> &'static (ModelData, Vec<MASolveResult>) {
    static CELL: OnceLock<(ModelData, Vec<MASolveResult>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = ModelData::new(&family_b()).unwrap();
        let (res, err) = continuation(&data, &SCHEDULE, &SolverOptions { tol: 1e-10, ..Default::default() });
        assert!(err.is_none(), "{err:?}");
        (data, res)
    })
}

#[test]
fn single_step_schedule_on_flat_family() {
    let data = ModelData::new(&FibrationModel::family_a(6, 6)).unwrap();
    let (res, err) = continuation(&data, &[1.0], &SolverOptions::default());
    assert!(err.is_none());
    assert_eq!(res.len(), 1);
    assert!(res[0].phi.sup_norm() < 1e-12);
    assert!((data.normalization_constant(1.0).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn schedule_must_decrease() {
    let data = ModelData::new(&FibrationModel::family_a(4, 4)).unwrap();
    for bad in [&[0.1, 0.2][..], &[0.5, 0.5], &[0.5, -0.1]] {
        let (res, err) = continuation(&data, bad, &SolverOptions::default());
        assert!(res.is_empty() && err.is_some());
    }
}

#[test]
fn non_convergence_returns_partial_results() {
    let data = ModelData::new(&family_b()).unwrap();
    let opts = SolverOptions { tol: 1e-12, max_iter: 2, ..Default::default() };
    let (res, err) = continuation(&data, &SCHEDULE, &opts);
    assert!(res.is_empty());
    assert!(err.is_some());
}

#[test]
fn manufactured_solution_is_independent_of_initial_guess() {
    let data = ModelData::new(&FibrationModel::family_a(8, 8)).unwrap();
    let chart = &data.chart;
    let t = 0.3;
    let star = GridField::from_fn(&chart.grid, |u| 0.01 * (2.0 * PI * (u[0] + u[3])).sin() + 0.004 * (2.0 * PI * u[1]).cos() * (2.0 * PI * u[2]).cos());
    let omega_t = data.omega_t(t).unwrap();
    let rhs = manufactured_rhs(&omega_t, chart, &star).unwrap();
    let p = MAProblem::new(chart, t, omega_t, rhs, true).unwrap();
    let tol = 1e-11;
    let opts = SolverOptions { tol, ..Default::default() };
    let a = solve(&p, &GridField::zeros(&chart.grid), &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let jitter: Vec<f64> = (0..chart.grid.len()).map(|_| 1e-4 * rng.gen_range(-1.0..1.0)).collect();
    let b = solve(&p, &GridField::new(chart.grid.clone(), jitter).unwrap(), &opts).unwrap();
    let gap = GridField::lincomb(1.0, &a.phi, -1.0, &b.phi).unwrap().sup_norm();
    assert!(gap <= 10.0 * tol, "{gap:e}");
    for r in [&a, &b] {
        assert!(r.residual <= tol);
        assert_eq!(r.phi.max(), 0.0);
        assert!(r.metric.min_eig() > 0.0);
    }
}

#[test]
fn family_b_sweep_converges_with_monotone_damping() {
    let (_, res) = sweep();
    assert_eq!(res.len(), SCHEDULE.len());
    for r in res {
        assert!(r.iterations <= 25, "t = {}: {} steps", r.t, r.iterations);
        assert!(r.residual <= 1e-10);
        let hist = r.residual_history();
        assert!(hist.windows(2).all(|w| w[1] < w[0]), "t = {}: {hist:?}", r.t);
        assert!(r.metric.min_eig() > 0.0);
        // Dirichlet problems keep the boundary data, no shift.
        assert_eq!(r.shift, 0.0);
    }
    let counts: Vec<usize> = res.iter().map(|r| r.iterations).collect();
    assert!(counts[1..].windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
}

#[test]
fn family_b_solution_is_ricci_flat_on_trusted_region() {
    let (data, res) = sweep();
    let model = family_b();
    let bg = model.base_grid().unwrap();
    let k = region_points(&data.chart, &trusted_region(&model).unwrap(), &bg);
    let ric = ricci_form(&data.chart, &res[0].metric).unwrap();
    let sup = ric.sup_norm_on(&k);
    assert!(sup <= 1e-6, "{sup:e}");
}

#[test]
fn determinant_identity_holds_on_solver_output() {
    let (data, res) = sweep();
    for r in res {
        let d = determinant_identity_defect(&r.metric, &data.omega_t(r.t).unwrap()).unwrap();
        assert!(d <= 1e-10, "{d:e}");
    }
}

#[test]
fn eigen_envelope_has_one_constant_across_the_sweep() {
    let (data, res) = sweep();
    let pts: Vec<usize> = (0..data.chart.grid.len()).collect();
    let c = res
        .iter()
        .map(|r| {
            let (lo, hi) = eigen_envelope(&r.metric, &data.omega_t(r.t).unwrap(), &pts).unwrap();
            hi.max(1.0 / lo)
        })
        .fold(0.0, f64::max);
    assert!(c.is_finite() && c < 3.0, "{c}");
}
