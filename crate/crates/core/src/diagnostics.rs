//! Collapse diagnostics on solver output: dilations, the rescaled potential,
//! fiber flatness, curvature, oscillation, the limit base metric and the
//! per-t report.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::deriv::Deriv;
use crate::fields::{ddbar, eigen_envelope, ricci_form, Chart, CurvatureField, HermitianField, Region};
use crate::grid::{Grid, GridField};
use crate::linalg;
use crate::ma_solver::{MASolveResult, ModelData};
use crate::model::{BaseChart, FibrationModel};
use crate::par;

/// Distance in cells kept between the trusted region and a Dirichlet boundary.
pub const BOUNDARY_BAND: usize = 4;

/// A tensor on the cover, given by its values at `(y, z)`.
pub enum CoverField<'a> {
    Scalar(&'a dyn Fn(&[C64], &[C64]) -> Result<f64>),
    /// Coefficients of a (1,1)-form in holomorphic coordinates; the first `m` are base.
    Form { m: usize, f: &'a dyn Fn(&[C64], &[C64]) -> Result<Vec<C64>> },
}

/// Value at `(y, z)` of the pullback under `lambda_t(y, z) = (y, z / sqrt t)`.
pub fn dilate_pullback(field: &CoverField<'_>, t: f64, y: &[C64], z: &[C64]) -> Result<Vec<C64>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("dilation needs t > 0, got {t}")));
    }
    let s = 1.0 / t.sqrt();
    let zs: Vec<C64> = z.iter().map(|v| v * s).collect();
    match field {
        CoverField::Scalar(f) => Ok(vec![C64::new(f(y, &zs)?, 0.0)]),
        CoverField::Form { m, f } => {
            let h = f(y, &zs)?;
            let n = y.len() + z.len();
            let w = |a: usize| if a < *m { 1.0 } else { s };
            Ok((0..n * n).map(|e| h[e] * w(e / n) * w(e % n)).collect())
        }
    }
}

/// Index box of the trusted base region; fibers are always included in full.
pub fn trusted_region(model: &FibrationModel) -> Result<Region> {
    let bg = model.base_grid()?;
    match model.chart {
        BaseChart::PeriodicTorus => Ok(Region::full(&bg)),
        BaseChart::DirichletSquare { half_width } => {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for a in &bg.axes {
                let idx: Vec<usize> = (0..a.n).filter(|&k| a.coord(k).abs() <= 0.5 * half_width + 1e-12 && k >= BOUNDARY_BAND && k + BOUNDARY_BAND < a.n).collect();
                if idx.is_empty() {
                    return Err(Error::Domain("base grid too coarse for a trusted region".into()));
                }
                lo.push(idx[0]);
                hi.push(idx[idx.len() - 1] + 1);
            }
            Ok(Region { lo, hi })
        }
    }
}

/// Total-space points over the base region.
pub fn region_points(chart: &Chart, base_region: &Region, base_grid: &Grid) -> Vec<usize> {
    let fl = chart.fiber_len();
    base_region.points(base_grid).into_iter().flat_map(|b| b * fl..(b + 1) * fl).collect()
}

fn check_base(chart: &Chart, b: usize) -> Result<()> {
    if b >= chart.base_len() {
        return Err(Error::Domain(format!("base index {b} outside the chart")));
    }
    Ok(())
}

/// `sup_fiber |h_ff / t - g(y)|` in the adapted fiber frame.
pub fn fiber_flatness_defect(chart: &Chart, result: &MASolveResult, b: usize) -> Result<f64> {
    check_base(chart, b)?;
    let (m, n) = (chart.m, chart.n());
    let g = &chart.frame(b).ok_or_else(|| Error::Domain("chart has no fiber".into()))?.g;
    let fl = chart.fiber_len();
    let r = chart.r;
    let mut worst: f64 = 0.0;
    for idx in b * fl..(b + 1) * fl {
        let h = result.metric.at(idx);
        for i in 0..r {
            for j in 0..r {
                worst = worst.max((h[(m + i) * n + m + j] / result.t - g[i * r + j]).norm());
            }
        }
    }
    Ok(worst)
}

/// `max - min` of `phi` over the fiber at base index `b`.
pub fn oscillation(chart: &Chart, phi: &GridField, b: usize) -> Result<f64> {
    check_base(chart, b)?;
    let fl = chart.fiber_len();
    let block = &phi.values[b * fl..(b + 1) * fl];
    Ok(block.iter().cloned().fold(f64::MIN, f64::max) - block.iter().cloned().fold(f64::MAX, f64::min))
}

/// Random 2-plane, Gaussian in a `g`-orthonormal frame.
fn random_plane(rng: &mut ChaCha8Rng, g: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let gc: Vec<C64> = g.iter().map(|v| C64::new(*v, 0.0)).collect();
    let l = linalg::cholesky(&gc, d).expect("positive metric");
    // v = L^{-T} xi
    let solve = |xi: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| l[k * d + i].re * v[k]).sum();
            v[i] = (xi[i] - s) / l[i * d + i].re;
        }
        v
    };
    let a: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let b: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    (solve(&a), solve(&b))
}

/// Seeded sup of `|Sec|` over `points` and `n_planes` random planes per point.
pub fn curvature_sup(chart: &Chart, metric: &HermitianField, points: &[usize], n_planes: usize, seed: u64) -> Result<f64> {
    if n_planes == 0 {
        return Err(Error::Config("n_planes must be at least 1".into()));
    }
    let curv = CurvatureField::new(chart, metric)?;
    let d = curv.dim();
    let vals = par::map_chunks(points, 64, |chunk| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &p in chunk {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let riem = curv.riemann_at(p)?;
            let g = curv.metric_at(p);
            for _ in 0..n_planes {
                let (x, y) = random_plane(&mut rng, &g, d);
                worst = worst.max(curv.sectional_from(&riem, &g, &x, &y)?.abs());
            }
        }
        Ok(worst)
    });
    vals.into_iter().try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
}

fn fiber_real(chart: &Chart, h: &HermitianField, idx: usize) -> Vec<f64> {
    let d = chart.grid.dim();
    let fb = 2 * chart.m;
    let w = d - fb;
    let full = chart.real_metric(idx, h.at(idx));
    let mut out = vec![0.0; w * w];
    for p in 0..w {
        for q in 0..w {
            out[p * w + q] = full[(fb + p) * d + fb + q];
        }
    }
    out
}

/// `sup_fiber |nabla (h|_fiber)|^2` measured with, and differentiated by the
/// Levi-Civita connection of, `reference|_fiber`.
pub fn fiber_gradient_norm(chart: &Chart, metric: &HermitianField, reference: &HermitianField, b: usize) -> Result<f64> {
    check_base(chart, b)?;
    let fb = 2 * chart.m;
    let fgrid = chart.grid.sub(fb..chart.grid.dim());
    let deriv = Deriv::new(&fgrid);
    let w = fgrid.dim();
    let fl = chart.fiber_len();
    let pts: Vec<usize> = (b * fl..(b + 1) * fl).collect();
    let a: Vec<Vec<f64>> = pts.iter().map(|&i| fiber_real(chart, reference, i)).collect();
    let h: Vec<Vec<f64>> = pts.iter().map(|&i| fiber_real(chart, metric, i)).collect();
    let comp = |f: &Vec<Vec<f64>>, p: usize, q: usize| -> Vec<f64> { f.iter().map(|m| m[p * w + q]).collect() };
    let mut da = vec![vec![Vec::new(); w * w]; w];
    let mut dh = vec![vec![Vec::new(); w * w]; w];
    for p in 0..w {
        for q in 0..w {
            let ca = comp(&a, p, q);
            let ch = comp(&h, p, q);
            for l in 0..w {
                da[l][p * w + q] = deriv.d1(l, &ca);
                dh[l][p * w + q] = deriv.d1(l, &ch);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..fl {
        let ai = linalg::real_inverse(&a[k], w).ok_or_else(|| Error::Positivity("singular fiber reference".into()))?;
        // Gamma^s_{lp}
        let mut gam = vec![0.0; w * w * w];
        for s in 0..w {
            for l in 0..w {
                for p in 0..w {
                    let mut v = 0.0;
                    for u in 0..w {
                        v += 0.5 * ai[s * w + u] * (da[l][u * w + p][k] + da[p][u * w + l][k] - da[u][l * w + p][k]);
                    }
                    gam[(s * w + l) * w + p] = v;
                }
            }
        }
        let mut nab = vec![0.0; w * w * w];
        for l in 0..w {
            for p in 0..w {
                for q in 0..w {
                    let mut v = dh[l][p * w + q][k];
                    for s in 0..w {
                        v -= gam[(s * w + l) * w + p] * h[k][s * w + q] + gam[(s * w + l) * w + q] * h[k][p * w + s];
                    }
                    nab[(l * w + p) * w + q] = v;
                }
            }
        }
        let mut norm = 0.0;
        for l in 0..w {
            for p in 0..w {
                for q in 0..w {
                    for l2 in 0..w {
                        for p2 in 0..w {
                            for q2 in 0..w {
                                norm += ai[l * w + l2] * ai[p * w + p2] * ai[q * w + q2] * nab[(l * w + p) * w + q] * nab[(l2 * w + p2) * w + q2];
                            }
                        }
                    }
                }
            }
        }
        worst = worst.max(norm);
    }
    Ok(worst)
}

/// Rescaled view of one solve: coefficients of `lambda_t^* omega~_t` and the
/// potential `u = phi_t - t xi`, so that `u_t = lambda_t^* u + t psi'` with
/// `ddbar psi' = f^* omega'` the base part of `omega_M`.
#[derive(Clone, Debug)]
pub struct RescaledView {
    pub t: f64,
    pub metric: HermitianField,
    pub u: GridField,
    /// `sup |lambda_t^* omega~_t - (omega_0 + omega_SF) - ddbar u_t|`.
    pub defect: f64,
    /// `sup |log det(rescaled) - log(c_t mu)|`.
    pub maa_defect: f64,
}

fn rescale(h: &HermitianField, m: usize, t: f64) -> HermitianField {
    let n = h.n;
    let s = 1.0 / t.sqrt();
    let w = |a: usize| if a < m { 1.0 } else { s };
    let data = h.data.iter().enumerate().map(|(e, v)| v * w((e % (n * n)) / n) * w(e % n)).collect();
    HermitianField { grid: h.grid.clone(), n, data }
}

/// `omega_M = omega_SF + f^* omega' - ddbar xi` defines `xi`; `base` is `omega'`.
pub fn rescaled_view(model: &FibrationModel, data: &ModelData, result: &MASolveResult, xi: &GridField, base: &HermitianField) -> Result<RescaledView> {
    let chart = &data.chart;
    let t = result.t;
    let m = model.m;
    let u = GridField::lincomb(1.0, &result.phi, -t, xi)?;
    let metric = rescale(&result.metric, m, t);
    let target = model.omega0_field(chart)?.add(&model.omega_sf_field(chart)?)?;
    let ddu = rescale(&ddbar(chart, &u)?, m, t);
    let defect = metric.sub(&target)?.sub(&ddu)?.sub(&base.scale(t))?.sup_norm();
    let ct = data.normalization_constant(t)?;
    let det = metric.det();
    let pts = interior(chart);
    let maa_defect = pts.iter().map(|&i| (det[i].ln() - (ct * data.mu[i]).ln()).abs()).fold(0.0, f64::max);
    Ok(RescaledView { t, metric, u, defect, maa_defect })
}

fn interior(chart: &Chart) -> Vec<usize> {
    let g = &chart.grid;
    (0..g.len()).filter(|&i| g.multi_index(i).iter().zip(&g.axes).all(|(&k, a)| a.is_periodic() || (k > 0 && k + 1 < a.n))).collect()
}

/// Fiber averages of `phi` on the base grid.
pub fn base_potential(chart: &Chart, base_grid: &Grid, phi: &GridField) -> Result<GridField> {
    GridField::new(base_grid.clone(), crate::semiflat::fiber_means(chart, &phi.values))
}

/// Limit base metric and its Ricci identity check.
#[derive(Clone, Debug)]
pub struct LimitMetric {
    pub base_grid: Grid,
    pub potential: GridField,
    pub omega: HermitianField,
    pub omega_wp: HermitianField,
    pub ricci: HermitianField,
    /// `sup_K |Ric(omega) - omega_WP|`.
    pub residual: f64,
    pub wp_sup: f64,
    pub ricci_omega0_sup: f64,
    /// Observed convergence order of the fiber-averaged potentials in `t`.
    pub order: f64,
}

/// `omega = omega_0 + ddbar psi` with `psi` the quadratic extrapolation to `t = 0`
/// of the fiber-averaged potentials at the last three schedule points.
pub fn limit_base_metric(model: &FibrationModel, data: &ModelData, results: &[MASolveResult]) -> Result<LimitMetric> {
    if results.len() < 3 {
        return Err(Error::Precondition("limit metric needs at least three schedule points".into()));
    }
    let chart = &data.chart;
    let bg = model.base_grid()?;
    let last = &results[results.len() - 3..];
    let psi: Vec<GridField> = last.iter().map(|r| base_potential(chart, &bg, &r.phi)).collect::<Result<_>>()?;
    let ts: Vec<f64> = last.iter().map(|r| r.t).collect();
    let lag: Vec<f64> = (0..3)
        .map(|i| {
            let mut w = 1.0;
            for j in 0..3 {
                if j != i {
                    w *= (0.0 - ts[j]) / (ts[i] - ts[j]);
                }
            }
            w
        })
        .collect();
    let values: Vec<f64> = (0..bg.len()).map(|k| (0..3).map(|i| lag[i] * psi[i].values[k]).sum()).collect();
    let potential = GridField::new(bg.clone(), values)?;
    let d01 = GridField::lincomb(1.0, &psi[0], -1.0, &psi[1])?.sup_norm();
    let d12 = GridField::lincomb(1.0, &psi[1], -1.0, &psi[2])?.sup_norm();
    let order = (d01 / d12).ln() / (ts[0] / ts[1]).ln();
    limit_from_potential(model, potential, order)
}

pub fn limit_from_potential(model: &FibrationModel, potential: GridField, order: f64) -> Result<LimitMetric> {
    let bg = potential.grid.clone();
    let base_chart = Chart::flat(bg.clone())?;
    let m = model.m;
    let omega0 = HermitianField::constant(&bg, m, &model.omega0)?;
    let omega = omega0.add(&ddbar(&base_chart, &potential)?)?;
    let logdet = GridField::new(
        bg.clone(),
        (0..bg.len())
            .map(|b| {
                let z = model.period_at(&model.base_point(&bg, b))?;
                let r = model.r();
                let imz: Vec<C64> = z.iter().map(|v| C64::new(v.im, 0.0)).collect();
                Ok(linalg::det(&imz, r).re.ln())
            })
            .collect::<Result<_>>()?,
    )?;
    let omega_wp = ddbar(&base_chart, &logdet)?.scale(-1.0);
    let ricci = ricci_form(&base_chart, &omega)?;
    let k = trusted_region(model)?.points(&bg);
    let residual = ricci.sub(&omega_wp)?.sup_norm_on(&k);
    let wp_sup = omega_wp.sup_norm_on(&k);
    let ricci_omega0_sup = ricci_form(&base_chart, &omega0)?.sup_norm_on(&k);
    Ok(LimitMetric { base_grid: bg, potential, omega, omega_wp, ricci, residual, wp_sup, ricci_omega0_sup, order })
}

/// `f^* omega` on the total space in the adapted frame.
pub fn pullback_base(chart: &Chart, omega: &HermitianField) -> Result<HermitianField> {
    let (m, n) = (chart.m, chart.n());
    let fl = chart.fiber_len();
    let mut data = Vec::with_capacity(chart.grid.len() * n * n);
    for b in 0..chart.base_len() {
        let mut block = vec![C64::new(0.0, 0.0); n * n];
        let w = omega.at(b);
        for i in 0..m {
            for j in 0..m {
                block[i * n + j] = w[i * m + j];
            }
        }
        for _ in 0..fl {
            data.extend_from_slice(&block);
        }
    }
    HermitianField::new(chart.grid.clone(), n, data)
}

/// Smallest `eps` with `f^* omega - eps omega_M <= omega~ <= f^* omega + eps omega_M` on `points`.
pub fn sandwich_epsilon(metric: &HermitianField, pulled: &HermitianField, omega_m: &HermitianField, points: &[usize]) -> Result<f64> {
    let diff = metric.sub(pulled)?;
    let (lo, hi) = eigen_envelope(&diff, omega_m, points)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Smallest `eps >= 0` with `e^{-eps} f^* omega <= omega~` on `points`, through the base
/// Schur complement of `omega~`.
pub fn lower_epsilon(chart: &Chart, metric: &HermitianField, omega: &HermitianField, points: &[usize]) -> Result<f64> {
    let (m, n) = (chart.m, chart.n());
    let r = chart.r;
    let mut worst: f64 = 0.0;
    for &p in points {
        let h = metric.at(p);
        let sub = |rs: std::ops::Range<usize>, cs: std::ops::Range<usize>| -> Vec<C64> {
            rs.clone().flat_map(|i| cs.clone().map(move |j| h[i * n + j])).collect()
        };
        let hbb = sub(0..m, 0..m);
        let hbf = sub(0..m, m..n);
        let hff = sub(m..n, m..n);
        let hfb = sub(m..n, 0..m);
        let ffi = linalg::inverse(&hff, r).ok_or_else(|| Error::Positivity(format!("fiber block at {p}")))?;
        let corr = linalg::matmul(&linalg::matmul(&hbf, &ffi, m, r, r), &hfb, m, r, m);
        let schur: Vec<C64> = hbb.iter().zip(&corr).map(|(a, b)| a - b).collect();
        let ev = linalg::pencil_eigvals(&schur, omega.at(chart.base_of(p)), m).ok_or_else(|| Error::Positivity(format!("limit metric at {p}")))?;
        worst = worst.max(-ev[0].ln());
    }
    Ok(worst.max(0.0))
}

/// One row of the collapse report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseRow {
    pub t: f64,
    pub c_c2: f64,
    pub flat_defect: f64,
    pub curv_sup: f64,
    pub osc_over_t: f64,
    pub grad_over_t2: f64,
    pub ricci_wp_residual: f64,
    pub sandwich_eps: f64,
    pub lower_eps: f64,
    pub metric_gap: f64,
}

#[derive(Clone, Debug)]
pub struct CollapseReport {
    pub rows: Vec<CollapseRow>,
    pub limit: LimitMetric,
    pub region: Region,
    pub probe: usize,
    pub newton_iterations: Vec<usize>,
}

pub const REPORT_HEADER: &str = "sup norms are frame-wise entry maxima in the adapted coframe {dy, dz - N dy}; curvature sampled at grid points of K; grad norm uses the Levi-Civita connection of omega_M on each fiber";

#[derive(Clone, Debug)]
pub struct DiagnosticOptions {
    pub n_planes: usize,
    pub seed: u64,
    /// Base index used for the single-fiber diagnostics; defaults to the node nearest the center.
    pub probe: Option<usize>,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions { n_planes: 4, seed: 7, probe: None }
    }
}

/// Base grid node nearest the chart center.
pub fn center_node(base_grid: &Grid) -> usize {
    let mi: Vec<usize> = base_grid
        .axes
        .iter()
        .map(|a| {
            let mid = 0.5 * (a.lo + a.hi);
            if a.is_periodic() {
                a.n / 2
            } else {
                (0..a.n).min_by(|&i, &j| (a.coord(i) - mid).abs().total_cmp(&(a.coord(j) - mid).abs())).unwrap_or(0)
            }
        })
        .collect();
    base_grid.index(&mi)
}

pub fn collapse_report(model: &FibrationModel, data: &ModelData, results: &[MASolveResult], opts: &DiagnosticOptions) -> Result<CollapseReport> {
    let chart = &data.chart;
    let bg = model.base_grid()?;
    let region = trusted_region(model)?;
    let kb = region.points(&bg);
    let kpts = region_points(chart, &region, &bg);
    let probe = opts.probe.unwrap_or_else(|| center_node(&bg));
    let limit = limit_base_metric(model, data, results)?;
    let pulled = pullback_base(chart, &limit.omega)?;
    let mut rows = Vec::new();
    for res in results {
        let t = res.t;
        let omega_t = data.omega_t(t)?;
        let (lo, hi) = eigen_envelope(&res.metric, &omega_t, &kpts)?;
        let c_c2 = hi.max(1.0 / lo);
        let osc = kb.iter().map(|&b| oscillation(chart, &res.phi, b)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        let grad = kb.iter().map(|&b| fiber_gradient_norm(chart, &res.metric, &data.omega_m, b)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        let sandwich = sandwich_epsilon(&res.metric, &pulled, &data.omega_m, &kpts)?;
        let gap = res.metric.sub(&pulled)?.sup_norm_on(&kpts);
        rows.push(CollapseRow {
            t,
            c_c2,
            flat_defect: fiber_flatness_defect(chart, res, probe)?,
            curv_sup: curvature_sup(chart, &res.metric, &kpts, opts.n_planes, opts.seed)?,
            osc_over_t: osc / t,
            grad_over_t2: grad / (t * t),
            ricci_wp_residual: limit.residual,
            sandwich_eps: sandwich,
            lower_eps: lower_epsilon(chart, &res.metric, &limit.omega, &kpts)?,
            metric_gap: gap,
        });
    }
    Ok(CollapseReport { rows, limit, region, probe, newton_iterations: results.iter().map(|r| r.iterations).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::semiflat::{eta, semiflat_form};

    #[test]
    fn dilation_examples() {
        let b = FibrationModel::family_b(0.3, 8, 8, None);
        let y = [c(0.2, 0.1)];
        let z = [c(0.3, 0.7)];
        let sc = |y: &[C64], z: &[C64]| eta(&b, y, z);
        let form = |y: &[C64], z: &[C64]| semiflat_form(&b, y, z);
        let e = eta(&b, &y, &z).unwrap();
        let h = semiflat_form(&b, &y, &z).unwrap();
        for t in [1.0, 0.5, 0.1, 0.01] {
            let d = dilate_pullback(&CoverField::Scalar(&sc), t, &y, &z).unwrap();
            assert!((d[0].re - e / t).abs() < 1e-12 * (1.0 + e / t));
            let f = dilate_pullback(&CoverField::Form { m: 1, f: &form }, t, &y, &z).unwrap();
            for (a, p) in f.iter().zip(&h) {
                assert!((a * t - p).norm() < 1e-12);
            }
        }
        assert!(dilate_pullback(&CoverField::Scalar(&sc), 0.0, &y, &z).is_err());
    }

    #[test]
    fn trusted_region_keeps_boundary_band() {
        let b = FibrationModel::family_b(0.3, 16, 8, None);
        let reg = trusted_region(&b).unwrap();
        assert_eq!(reg.lo, vec![4, 4]);
        assert_eq!(reg.hi, vec![12, 12]);
    }

    #[test]
    fn oscillation_of_sine_is_twice_amplitude() {
        let a = FibrationModel::family_a(4, 8);
        let chart = a.build_chart().unwrap();
        let t = 0.3;
        let phi = GridField::from_fn(&chart.grid, |u| t * (2.0 * std::f64::consts::PI * (u[2] + 0.125)).sin());
        assert!((oscillation(&chart, &phi, 3).unwrap() - 2.0 * t).abs() < 1e-12);
    }

    #[test]
    fn gradient_norm_scales_tensorially() {
        let model = FibrationModel::family_b(0.3, 8, 8, Some(FibrationModel::default_perturbation()));
        let data = ModelData::new(&model).unwrap();
        let chart = &data.chart;
        let h = data.omega_t(0.3).unwrap().add(&ddbar(chart, &model.chi_field(&chart.grid)).unwrap()).unwrap();
        let a = fiber_gradient_norm(chart, &h, &data.omega_m, 20).unwrap();
        let b = fiber_gradient_norm(chart, &h, &data.omega_m.scale(4.0), 20).unwrap();
        assert!(a > 0.0);
        assert!((b * 64.0 - a).abs() < 1e-10 * a);
        let flat = FibrationModel::family_a(4, 8);
        let fd = ModelData::new(&flat).unwrap();
        assert!(fiber_gradient_norm(&fd.chart, &fd.omega_t(0.2).unwrap(), &fd.omega_m, 0).unwrap() < 1e-20);
    }
}
