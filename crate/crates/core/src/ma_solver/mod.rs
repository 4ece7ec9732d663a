//! Damped Newton solver for `log det(omega_t + ddbar phi) = log RHS`, with
//! continuation in `t`.

pub mod gmres;
pub mod precond;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ddbar, Chart, HermitianField, POSITIVITY_FLOOR};
use crate::grid::GridField;
use crate::linalg;
use crate::model::FibrationModel;
use crate::par;

use gmres::gmres;
use precond::SpectralPreconditioner;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub min_step: f64,
    pub restart: usize,
    pub max_linear: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_iter: 50, damping: 0.5, min_step: 2f64.powi(-20), restart: 40, max_linear: 600 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 1e-12) {
            return Err(Error::Config(format!("tol must be >= 1e-12, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) || !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::Config("damping must lie in (0,1) and min_step in (0,1]".into()));
        }
        if self.max_iter == 0 || self.restart == 0 || self.max_linear == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Reference data shared by every `t` of a model.
#[derive(Clone)]
pub struct ModelData {
    pub chart: Chart,
    pub omega0: HermitianField,
    pub omega_m: HermitianField,
    /// Density of `mu` relative to the frame volume.
    pub mu: Vec<f64>,
    pub periodic: bool,
    pub r: usize,
}

impl ModelData {
    pub fn new(model: &FibrationModel) -> Result<Self> {
        let chart = model.build_chart()?;
        let omega0 = model.omega0_field(&chart)?;
        let omega_m = model.omega_m_field(&chart)?;
        omega_m.check_positive(POSITIVITY_FLOOR)?;
        let mu = model.mu_density(&chart, &omega_m)?;
        Ok(ModelData { omega0, omega_m, mu, periodic: model.is_periodic(), r: model.r(), chart })
    }

    /// `int det(h) J` by quadrature.
    pub fn volume(&self, h: &HermitianField) -> f64 {
        let w = self.chart.grid.weights();
        h.det().iter().enumerate().map(|(i, d)| w[i] * d * self.chart.jacobian(i)).sum()
    }

    pub fn omega_t(&self, t: f64) -> Result<HermitianField> {
        HermitianField::lincomb(1.0, &self.omega0, t, &self.omega_m)
    }

    /// `c_t = int omega_t^n / (t^r int omega_M^n)`.
    pub fn normalization_constant(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("t must be positive, got {t}")));
        }
        Ok(self.volume(&self.omega_t(t)?) / (t.powi(self.r as i32) * self.volume(&self.omega_m)))
    }

    /// `lim_{t->0} c_t`: the `t^r` coefficient of `int det(omega_0 + t omega_M) J`,
    /// over `int omega_M^n`, recovered by exact polynomial interpolation.
    pub fn normalization_limit(&self) -> Result<f64> {
        let n = self.chart.n();
        let ts: Vec<f64> = (0..=n).map(|k| k as f64).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| Ok(self.volume(&self.omega_t(t)?))).collect::<Result<_>>()?;
        let mut vand = vec![0.0; (n + 1) * (n + 1)];
        for (i, t) in ts.iter().enumerate() {
            for j in 0..=n {
                vand[i * (n + 1) + j] = t.powi(j as i32);
            }
        }
        let inv = linalg::real_inverse(&vand, n + 1).ok_or_else(|| Error::Degenerate("interpolation".into()))?;
        let coef: f64 = (0..=n).map(|i| inv[self.r * (n + 1) + i] * vals[i]).sum();
        Ok(coef / self.volume(&self.omega_m))
    }

    pub fn problem(&self, t: f64) -> Result<MAProblem<'_>> {
        let ct = self.normalization_constant(t)?;
        let scale = ct * t.powi(self.r as i32);
        let rhs = self.mu.iter().map(|m| m * scale).collect();
        MAProblem::new(&self.chart, t, self.omega_t(t)?, rhs, self.periodic)
    }
}

pub fn normalization_constant(model: &FibrationModel, t: f64) -> Result<f64> {
    ModelData::new(model)?.normalization_constant(t)
}

pub struct MAProblem<'a> {
    pub chart: &'a Chart,
    pub t: f64,
    pub reference: HermitianField,
    pub rhs: Vec<f64>,
    pub periodic: bool,
    log_rhs: Vec<f64>,
    interior: Vec<usize>,
}

impl<'a> MAProblem<'a> {
    pub fn new(chart: &'a Chart, t: f64, reference: HermitianField, rhs: Vec<f64>, periodic: bool) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("t must be positive, got {t}")));
        }
        chart.grid.check_same(&reference.grid)?;
        if rhs.len() != chart.grid.len() {
            return Err(Error::Shape("RHS density must match the grid".into()));
        }
        if let Some(v) = rhs.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Positivity(format!("RHS density {v:e}")));
        }
        if periodic != chart.grid.axes.iter().all(|a| a.is_periodic()) {
            return Err(Error::Chart("boundary type does not match the grid".into()));
        }
        if periodic {
            let w = chart.grid.weights();
            let det = reference.det();
            let (mut lhs, mut r) = (0.0, 0.0);
            for i in 0..det.len() {
                lhs += w[i] * det[i] * chart.jacobian(i);
                r += w[i] * rhs[i] * chart.jacobian(i);
            }
            let rel = (lhs - r).abs() / r.abs();
            if rel > 1e-8 {
                return Err(Error::Compatibility(rel));
            }
        }
        let interior = interior_points(chart);
        let log_rhs = rhs.iter().map(|v| v.ln()).collect();
        Ok(MAProblem { chart, t, reference, rhs, periodic, log_rhs, interior })
    }

    pub fn metric(&self, phi: &GridField) -> Result<HermitianField> {
        self.reference.add(&ddbar(self.chart, phi)?)
    }

    /// `log det g_phi - log RHS` at every grid point; `None` if some point is not positive.
    fn residual(&self, phi: &GridField) -> Result<Option<(Vec<f64>, HermitianField, f64)>> {
        let g = self.metric(phi)?;
        let n = g.n;
        let s = n * n;
        let mut res = vec![0.0; g.len()];
        let mut min_eig = f64::INFINITY;
        for &i in &self.interior {
            let b = &g.data[i * s..(i + 1) * s];
            let ev = linalg::herm_eigvals(b, n)[0];
            min_eig = min_eig.min(ev);
            if !(ev > POSITIVITY_FLOOR) {
                return Ok(None);
            }
            res[i] = linalg::det(b, n).re.ln() - self.log_rhs[i];
        }
        Ok(Some((res, g, min_eig)))
    }

    /// Real coefficients of the linearized operator `tr(g^{-1} ddbar .)` per point.
    fn linearization(&self, g: &HermitianField) -> Vec<f64> {
        let n = g.n;
        let q = self.chart.partial_list().len();
        let blocks = par::map_range(g.len(), |i| {
            let ginv = linalg::inverse(g.at(i), n).unwrap_or_else(|| vec![num_complex::Complex64::new(0.0, 0.0); n * n]);
            let table = self.chart.hessian_table(self.chart.base_of(i));
            let mut c = vec![0.0; q];
            for a in 0..n {
                for b in 0..n {
                    let gi = ginv[b * n + a];
                    let row = &table[(a * n + b) * q..(a * n + b + 1) * q];
                    for (cs, t) in c.iter_mut().zip(row) {
                        *cs += (gi * t).re;
                    }
                }
            }
            c
        });
        blocks.concat()
    }

    fn apply_linear(&self, coef: &[f64], v: &[f64]) -> Vec<f64> {
        let q = self.chart.partial_list().len();
        let parts = self.chart.partials(v);
        let npts = v.len();
        let chunk = 1024;
        let starts: Vec<usize> = (0..npts).step_by(chunk).collect();
        par::map_chunks(&starts, 1, |s| {
            let lo = s[0];
            let hi = (lo + chunk).min(npts);
            (lo..hi).map(|i| (0..q).map(|k| coef[i * q + k] * parts[k][i]).sum::<f64>()).collect::<Vec<_>>()
        })
        .concat()
    }
}

fn interior_points(chart: &Chart) -> Vec<usize> {
    let g = &chart.grid;
    (0..g.len())
        .filter(|&i| {
            g.multi_index(i).iter().zip(&g.axes).all(|(&k, a)| a.is_periodic() || (k > 0 && k + 1 < a.n))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub t: f64,
    pub iter: usize,
    pub residual_linf: f64,
    pub damping: f64,
    pub min_eig: f64,
    pub linear_iters: usize,
}

#[derive(Clone, Debug)]
pub struct MASolveResult {
    pub t: f64,
    pub phi: GridField,
    pub metric: HermitianField,
    pub log: Vec<IterationRecord>,
    pub iterations: usize,
    pub residual: f64,
    /// Constant subtracted to reach `sup phi = 0` (periodic charts).
    pub shift: f64,
}

impl MASolveResult {
    pub fn residual_history(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.residual_linf).collect()
    }
}

fn sup_on(v: &[f64], pts: &[usize]) -> f64 {
    pts.iter().map(|&i| v[i].abs()).fold(0.0, f64::max)
}

/// Newton iteration from `init`; the result satisfies the equation to `opts.tol` in sup norm.
pub fn solve(problem: &MAProblem<'_>, init: &GridField, opts: &SolverOptions) -> Result<MASolveResult> {
    opts.validate()?;
    let chart = problem.chart;
    chart.grid.check_same(&init.grid)?;
    let pts = &problem.interior;
    let npts = chart.grid.len();
    let mut phi = init.clone();
    if problem.periodic {
        let mean = phi.values.iter().sum::<f64>() / npts as f64;
        phi.values.iter_mut().for_each(|v| *v -= mean);
    } else {
        let mut keep = vec![false; npts];
        pts.iter().for_each(|&i| keep[i] = true);
        phi.values.iter_mut().zip(&keep).for_each(|(v, k)| {
            if !k {
                *v = 0.0
            }
        });
    }
    let (mut res, mut g, mut min_eig) = problem.residual(&phi)?.ok_or(Error::PositivityLoss { iter: 0 })?;
    let mut cshift = 0.0;
    let mut norm = sup_on(&res, pts);
    let mut log = vec![IterationRecord { t: problem.t, iter: 0, residual_linf: norm, damping: 0.0, min_eig, linear_iters: 0 }];
    let scatter = |x: &[f64]| {
        let mut full = vec![0.0; npts];
        for (k, &i) in pts.iter().enumerate() {
            full[i] = x[k];
        }
        full
    };
    let mut iter = 0;
    while norm > opts.tol {
        if iter >= opts.max_iter {
            return Err(Error::NonConvergence { iters: iter, residual: norm });
        }
        iter += 1;
        let coef = problem.linearization(&g);
        let q = chart.partial_list().len();
        let mut avg = vec![0.0; q];
        for &i in pts {
            for k in 0..q {
                avg[k] += coef[i * q + k];
            }
        }
        avg.iter_mut().for_each(|v| *v /= pts.len() as f64);
        let pre = SpectralPreconditioner::new(&chart.grid, chart.partial_list(), &avg);
        let m = pts.len();
        let aug = problem.periodic as usize;
        let op = |x: &[f64]| -> Vec<f64> {
            let lx = problem.apply_linear(&coef, &scatter(&x[..m]));
            let mut out: Vec<f64> = pts.iter().map(|&i| lx[i]).collect();
            if aug == 1 {
                out.iter_mut().for_each(|v| *v += x[m]);
                out.push(x[..m].iter().sum::<f64>() / m as f64);
            }
            out
        };
        let pc = |x: &[f64]| -> Vec<f64> {
            if aug == 0 {
                return pre.apply(x);
            }
            let mean = x[..m].iter().sum::<f64>() / m as f64;
            let centered: Vec<f64> = x[..m].iter().map(|v| v - mean).collect();
            let mut d = pre.apply(&centered);
            d.iter_mut().for_each(|v| *v += x[m]);
            d.push(mean);
            d
        };
        let mut b: Vec<f64> = pts.iter().map(|&i| -(res[i] - cshift)).collect();
        if aug == 1 {
            b.push(0.0);
        }
        let forcing = (0.1 * norm).clamp(1e-12, 1e-3);
        let (dx, out) = gmres(op, pc, &b, forcing, opts.restart, opts.max_linear);
        let delta = scatter(&dx[..m]);
        let dc = if aug == 1 { -dx[m] } else { 0.0 };
        let mut step = 1.0;
        loop {
            let trial = GridField::new(chart.grid.clone(), phi.values.iter().zip(&delta).map(|(p, d)| p + step * d).collect())?;
            let tc = cshift + step * dc;
            if let Some((r2, g2, me)) = problem.residual(&trial)? {
                let n2 = pts.iter().map(|&i| (r2[i] - tc).abs()).fold(0.0, f64::max);
                if n2 < norm {
                    phi = trial;
                    res = r2;
                    g = g2;
                    min_eig = me;
                    cshift = tc;
                    norm = n2;
                    break;
                }
            }
            step *= opts.damping;
            if step < opts.min_step {
                return Err(Error::PositivityLoss { iter });
            }
        }
        log.push(IterationRecord { t: problem.t, iter, residual_linf: norm, damping: step, min_eig, linear_iters: out.iterations });
    }
    // The discrete constant mode absorbs any quadrature-level volume mismatch.
    let true_norm = sup_on(&res, pts);
    if true_norm > opts.tol {
        return Err(Error::Compatibility(cshift));
    }
    let mut shift = 0.0;
    if problem.periodic {
        shift = phi.max();
        phi.values.iter_mut().for_each(|v| *v -= shift);
    }
    Ok(MASolveResult { t: problem.t, phi, metric: g, log, iterations: iter, residual: true_norm, shift })
}

/// Solves along a strictly decreasing schedule, warm-starting from the previous potential.
/// Returns the results obtained before the first failure together with that failure.
pub fn continuation(data: &ModelData, schedule: &[f64], opts: &SolverOptions) -> (Vec<MASolveResult>, Option<Error>) {
    let mut out: Vec<MASolveResult> = Vec::new();
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|t| !(*t > 0.0)) {
        return (out, Some(Error::Config("t schedule must be positive and strictly decreasing".into())));
    }
    for &t in schedule {
        let init = out.last().map(|r| r.phi.clone()).unwrap_or_else(|| GridField::zeros(&data.chart.grid));
        let step = data.problem(t).and_then(|p| solve(&p, &init, opts));
        match step {
            Ok(r) => out.push(r),
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

/// `n`-th root of `det g / det h` per point versus the geometric mean of the pencil eigenvalues.
pub fn determinant_identity_defect(g: &HermitianField, h: &HermitianField) -> Result<f64> {
    let n = g.n;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let ratio = (linalg::det(g.at(i), n) / linalg::det(h.at(i), n)).re.powf(1.0 / n as f64);
        let ev = linalg::pencil_eigvals(g.at(i), h.at(i), n).ok_or_else(|| Error::Positivity(format!("point {i}")))?;
        let geo = ev.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
        worst = worst.max((ratio - geo.exp()).abs());
    }
    Ok(worst)
}

/// `det(reference + ddbar phi_star)`: the RHS whose solution is `phi_star`.
pub fn manufactured_rhs(problem_ref: &HermitianField, chart: &Chart, phi_star: &GridField) -> Result<Vec<f64>> {
    let g = problem_ref.add(&ddbar(chart, phi_star)?)?;
    g.check_positive(POSITIVITY_FLOOR)?;
    Ok(g.det())
}
