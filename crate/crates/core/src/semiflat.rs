//! Semi-flat geometry: the potential `eta`, the form `omega_SF`, the forms
//! `theta_j`, fiber averaging, and the constructive ddbar-lemma on periodic charts.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fields::deriv::{fft_nd, wavenumbers};
use crate::fields::{ddbar, Chart, HermitianField, Partial};
use crate::grid::{Grid, GridField};
use crate::linalg::{self, I};
use crate::model::{CMat, FibrationModel};

/// `eta(y, z) = -sum (g_ij / 2)(z_i - conj z_i)(z_j - conj z_j)`.
pub fn eta(model: &FibrationModel, y: &[C64], z: &[C64]) -> Result<f64> {
    let g = model.fiber_metric(y)?;
    let r = model.r();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..r {
        for j in 0..r {
            s += -0.5 * g[i * r + j] * (z[i] - z[i].conj()) * (z[j] - z[j].conj());
        }
    }
    Ok(s.re)
}

struct SfParts {
    g: Vec<C64>,
    w: Vec<C64>,
    dg: Vec<CMat>,
    dgbar: Vec<CMat>,
    ddg: Vec<Vec<CMat>>,
}

fn sf_parts(model: &FibrationModel, y: &[C64], z: &[C64]) -> Result<SfParts> {
    let r = model.r();
    let m = model.m;
    let g: Vec<C64> = model.fiber_metric(y)?.into_iter().map(|v| C64::new(v, 0.0)).collect();
    let w: Vec<C64> = z.iter().map(|v| C64::new(v.im, 0.0)).collect();
    // d(Im Z)/dy_k = Z_k / 2i, its conjugate for d/d conj(y_k).
    let a: Vec<CMat> = (0..m).map(|k| model.period.derivative(y, k).iter().map(|v| v / (2.0 * I)).collect()).collect();
    let abar: Vec<CMat> = a.iter().map(|ak| ak.iter().map(|v| v.conj()).collect()).collect();
    let mul = |x: &[C64], y: &[C64]| linalg::matmul(x, y, r, r, r);
    let neg = |x: Vec<C64>| x.into_iter().map(|v| -v).collect::<Vec<_>>();
    let dg: Vec<CMat> = a.iter().map(|ak| neg(mul(&mul(&g, ak), &g))).collect();
    let dgbar: Vec<CMat> = abar.iter().map(|al| neg(mul(&mul(&g, al), &g))).collect();
    let ddg = (0..m)
        .map(|k| {
            (0..m)
                .map(|l| {
                    let p = mul(&mul(&mul(&mul(&g, &abar[l]), &g), &a[k]), &g);
                    let q = mul(&mul(&mul(&mul(&g, &a[k]), &g), &abar[l]), &g);
                    p.iter().zip(&q).map(|(u, v)| u + v).collect()
                })
                .collect()
        })
        .collect();
    Ok(SfParts { g, w, dg, dgbar, ddg })
}

fn matvec(a: &[C64], v: &[C64]) -> Vec<C64> {
    let r = v.len();
    (0..r).map(|i| (0..r).map(|j| a[i * r + j] * v[j]).sum()).collect()
}

/// Coefficients of `sqrt(-1) ddbar eta` in holomorphic coordinates `(y, z)`,
/// differentiated in closed form.
pub fn semiflat_form(model: &FibrationModel, y: &[C64], z: &[C64]) -> Result<Vec<C64>> {
    let (m, r, n) = (model.m, model.r(), model.n);
    let p = sf_parts(model, y, z)?;
    let mut h = vec![C64::new(0.0, 0.0); n * n];
    for k in 0..m {
        for l in 0..m {
            let v = matvec(&p.ddg[k][l], &p.w);
            h[k * n + l] = 2.0 * p.w.iter().zip(&v).map(|(a, b)| a * b).sum::<C64>();
        }
        let mixed = matvec(&p.dg[k], &p.w);
        for b in 0..r {
            h[k * n + m + b] = 2.0 * I * mixed[b];
        }
    }
    for l in 0..m {
        let mixed = matvec(&p.dgbar[l], &p.w);
        for a in 0..r {
            h[(m + a) * n + l] = -2.0 * I * mixed[a];
        }
    }
    for a in 0..r {
        for b in 0..r {
            h[(m + a) * n + m + b] = p.g[a * r + b];
        }
    }
    Ok(h)
}

/// `Phi^T h conj(Phi)` with `Phi = [[I, 0], [-N, I]]`: adapted-frame coefficients
/// rewritten in holomorphic coordinates at `(y, z)`.
pub fn adapted_to_holomorphic(model: &FibrationModel, y: &[C64], z: &[C64], h: &[C64]) -> Result<Vec<C64>> {
    let (m, r, n) = (model.m, model.r(), model.n);
    let g = model.fiber_metric(y)?;
    let w: Vec<f64> = z.iter().map(|v| v.im).collect();
    let xpp: Vec<f64> = (0..r).map(|i| (0..r).map(|j| g[i * r + j] * w[j]).sum()).collect();
    let mut p = linalg::identity(n);
    for k in 0..m {
        let zk = model.period.derivative(y, k);
        for i in 0..r {
            let nik: C64 = (0..r).map(|j| zk[i * r + j] * xpp[j]).sum();
            p[(m + i) * n + k] = -nik;
        }
    }
    let pt = linalg::transpose(&p, n, n);
    let pbar: Vec<C64> = p.iter().map(|v| v.conj()).collect();
    Ok(linalg::matmul(&linalg::matmul(&pt, h, n, n, n), &pbar, n, n, n))
}

/// Pullback coefficients of a holomorphic-coordinate form under the
/// Gauss-Manin flat translation `z -> z + D c' + Z(y) c''`.
pub fn translation_pullback(model: &FibrationModel, y: &[C64], z: &[C64], coeffs: &[f64], form: impl Fn(&[C64]) -> Result<Vec<C64>>) -> Result<Vec<C64>> {
    let (m, r, n) = (model.m, model.r(), model.n);
    let lat = model.fiber_lattice(y)?;
    let tz = lat.flat_translate(z, coeffs);
    let h = form(&tz)?;
    let mut jac = linalg::identity(n);
    for k in 0..m {
        let zk = model.period.derivative(y, k);
        for i in 0..r {
            jac[(m + i) * n + k] = (0..r).map(|j| zk[i * r + j] * coeffs[r + j]).sum();
        }
    }
    let jt = linalg::transpose(&jac, n, n);
    let jbar: Vec<C64> = jac.iter().map(|v| v.conj()).collect();
    Ok(linalg::matmul(&linalg::matmul(&jt, &h, n, n, n), &jbar, n, n, n))
}

/// `theta_j` at `y`. In the adapted coframe its base part vanishes; in the
/// holomorphic coframe its `d conj(y_l)` coefficient is `base_slope[l] . x''`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaForm {
    pub j: usize,
    /// Coefficient of `d conj(z_i)`: `-i g_ij`.
    pub fiber: Vec<C64>,
    pub base_slope: Vec<Vec<C64>>,
}

impl ThetaForm {
    pub fn holomorphic_base(&self, xpp: &[f64]) -> Vec<C64> {
        self.base_slope.iter().map(|row| row.iter().zip(xpp).map(|(a, b)| a * b).sum()).collect()
    }
}

pub fn theta_form(model: &FibrationModel, j: usize, y: &[C64]) -> Result<ThetaForm> {
    let r = model.r();
    let g = model.fiber_metric(y)?;
    let fiber = (0..r).map(|i| C64::new(0.0, -g[i * r + j])).collect();
    let base_slope = (0..model.m)
        .map(|l| {
            let zl = model.period.derivative(y, l);
            // i (G conj(Z_l) x'')_j
            (0..r).map(|q| I * (0..r).map(|p| g[j * r + p] * zl[p * r + q].conj()).sum::<C64>()).collect()
        })
        .collect();
    Ok(ThetaForm { j, fiber, base_slope })
}

/// Mean over fiber axes, broadcast back to the full grid.
pub fn fiber_average(chart: &Chart, field: &GridField) -> Result<GridField> {
    chart.grid.check_same(&field.grid)?;
    let fl = chart.fiber_len();
    let mut out = field.values.clone();
    for block in out.chunks_mut(fl) {
        let mean = block.iter().sum::<f64>() / fl as f64;
        block.iter_mut().for_each(|v| *v = mean);
    }
    GridField::new(field.grid.clone(), out)
}

/// One value per base point.
pub fn fiber_means(chart: &Chart, values: &[f64]) -> Vec<f64> {
    let fl = chart.fiber_len();
    values.chunks(fl).map(|b| b.iter().sum::<f64>() / fl as f64).collect()
}

fn fiber_means_c(chart: &Chart, values: &[C64]) -> Vec<C64> {
    let fl = chart.fiber_len();
    values.chunks(fl).map(|b| b.iter().sum::<C64>() / fl as f64).collect()
}

/// `(0,1)`-form field in the coframe `{d conj(y_k), conj(theta^i)}`: n components per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Form01 {
    pub grid: Grid,
    pub n: usize,
    pub data: Vec<C64>,
}

impl Form01 {
    pub fn component(&self, c: usize) -> Vec<C64> {
        self.data.iter().skip(c).step_by(self.n).copied().collect()
    }
}

/// `dbar f` of a complex field, components `conj(V_k) f` then `conj(F_i) f`.
pub fn dbar(chart: &Chart, f: &[C64]) -> Form01 {
    let (m, r) = (chart.m, chart.r);
    let n = m + r;
    let d: Vec<Vec<C64>> = (0..chart.grid.dim()).map(|k| chart.deriv().d1_complex(k, f)).collect();
    let mut data = vec![C64::new(0.0, 0.0); f.len() * n];
    for idx in 0..f.len() {
        for k in 0..m {
            data[idx * n + k] = 0.5 * (d[2 * k][idx] + I * d[2 * k + 1][idx]);
        }
        if let Some(fr) = chart.frame(chart.base_of(idx)) {
            let w = 2 * r;
            for i in 0..r {
                data[idx * n + m + i] = (0..w).map(|l| fr.a[i * w + l].conj() * d[2 * m + l][idx]).sum();
            }
        }
    }
    Form01 { grid: chart.grid.clone(), n, data }
}

/// Translation by a section of the lattice bundle, reported modulo the lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationSection {
    /// `sigma_j(y)` per base point, r values each.
    pub sigma: Vec<C64>,
    /// Mean section reduced into the fundamental domain at the chart center.
    pub reduced: Vec<C64>,
    pub reduced_coordinates: Vec<f64>,
    pub winding: Vec<i64>,
    /// `Phi(y) = -sum g_ij (sigma_i - conj sigma_i)(sigma_j - conj sigma_j) / 2`.
    pub phi: Vec<f64>,
    pub cr_residual: f64,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub section: TranslationSection,
    pub xi: GridField,
    pub h: Vec<C64>,
    /// `|| T_sigma^* omega_SF - omega - ddbar xi ||_inf`.
    pub rebuild_defect: f64,
}

pub const OBSTRUCTION_TOL: f64 = 1e-8;
pub const HOLOMORPHY_TOL: f64 = 1e-5;

fn require_periodic(model: &FibrationModel, chart: &Chart) -> Result<()> {
    if !model.is_periodic() || !chart.grid.axes.iter().all(|a| a.is_periodic()) {
        return Err(Error::Chart("section extraction needs a periodic torus chart".into()));
    }
    Ok(())
}

/// Spectral symbols `s_c(kappa)` of the components of `dbar`, flattened per mode.
fn dbar_symbols(chart: &Chart) -> Vec<Vec<C64>> {
    let g = &chart.grid;
    let (m, r) = (chart.m, chart.r);
    let n = m + r;
    let ks: Vec<Vec<f64>> = g.axes.iter().map(|a| wavenumbers(a.n, a.length(), true)).collect();
    let fr = chart.frame(0).cloned();
    (0..g.len())
        .map(|idx| {
            let mi = g.multi_index(idx);
            let kap: Vec<f64> = mi.iter().enumerate().map(|(ax, &j)| ks[ax][j]).collect();
            let mut s = vec![C64::new(0.0, 0.0); n];
            for k in 0..m {
                s[k] = 0.5 * (I * kap[2 * k] + I * I * kap[2 * k + 1]);
            }
            if let Some(fr) = &fr {
                let w = 2 * r;
                for i in 0..r {
                    s[m + i] = (0..w).map(|l| fr.a[i * w + l].conj() * I * kap[2 * m + l]).sum();
                }
            }
            s
        })
        .collect()
}

/// Constructive ddbar-lemma: splits `zeta01 = sum sigma_j theta_j + dbar h` and
/// returns the section together with `xi = 2 Im h + Phi`.
pub fn extract_translation(model: &FibrationModel, chart: &Chart, omega: &HermitianField, zeta01: &Form01) -> Result<Extraction> {
    require_periodic(model, chart)?;
    chart.grid.check_same(&omega.grid)?;
    chart.grid.check_same(&zeta01.grid)?;
    let (m, r, n) = (model.m, model.r(), model.n);
    let npts = chart.grid.len();
    let bg = model.base_grid()?;
    let y0 = model.base_point(&bg, 0);
    let z = model.period_at(&y0)?;
    let g = model.fiber_metric(&y0)?;
    // theta-coefficients: c = -i G s  =>  s = i Im(Z) c.
    let mut s = vec![C64::new(0.0, 0.0); npts * r];
    for idx in 0..npts {
        for j in 0..r {
            s[idx * r + j] = (0..r).map(|i| I * z[j * r + i].im * zeta01.data[idx * n + m + i]).sum();
        }
    }
    let sigma_base: Vec<Vec<C64>> = (0..r)
        .map(|j| fiber_means_c(chart, &s.iter().skip(j).step_by(r).copied().collect::<Vec<_>>()))
        .collect();
    let nb = bg.len();
    let mut sigma = vec![C64::new(0.0, 0.0); nb * r];
    for b in 0..nb {
        for j in 0..r {
            sigma[b * r + j] = sigma_base[j][b];
        }
    }
    // Holomorphy of sigma: conj(V_k) sigma_j on the base grid.
    let bderiv = crate::fields::deriv::Deriv::new(&bg);
    let mut cr: f64 = 0.0;
    let mut dsigma = vec![vec![C64::new(0.0, 0.0); nb * r]; m];
    for j in 0..r {
        let d: Vec<Vec<C64>> = (0..2 * m).map(|ax| bderiv.d1_complex(ax, &sigma_base[j])).collect();
        for k in 0..m {
            for b in 0..nb {
                cr = cr.max((0.5 * (d[2 * k][b] + I * d[2 * k + 1][b])).norm());
                dsigma[k][b * r + j] = 0.5 * (d[2 * k][b] - I * d[2 * k + 1][b]);
            }
        }
    }
    if cr > HOLOMORPHY_TOL {
        return Err(Error::Holomorphy(cr));
    }
    // beta = zeta01 - sum sigma_j theta_j, theta_j = -i (G conj(theta))_j.
    let fl = chart.fiber_len();
    let mut beta = zeta01.data.clone();
    for idx in 0..npts {
        let b = idx / fl;
        for i in 0..r {
            let th: C64 = (0..r).map(|j| sigma[b * r + j] * C64::new(0.0, -g[j * r + i])).sum();
            beta[idx * n + m + i] -= th;
        }
    }
    let h = solve_dbar(chart, &beta, n)?;
    // Phi(y) = 2 Im(sigma)^T G Im(sigma).
    let phi: Vec<f64> = (0..nb)
        .map(|b| {
            let v: Vec<f64> = (0..r).map(|j| sigma[b * r + j].im).collect();
            2.0 * linalg::quad_form(&g, &v, &v)
        })
        .collect();
    let mut xi: Vec<f64> = (0..npts).map(|idx| 2.0 * h[idx].im + phi[idx / fl]).collect();
    let center = bg.index(&bg.shape().iter().map(|&k| k / 2).collect::<Vec<_>>());
    let shift = xi[center * fl..(center + 1) * fl].iter().sum::<f64>() / fl as f64;
    xi.iter_mut().for_each(|v| *v -= shift);
    let xi = GridField::new(chart.grid.clone(), xi)?;
    // Rebuild: T_sigma^* omega_SF = B^T G conj(B), B = [V | I], V_k = d_k sigma - Z_k G Im sigma.
    let mut rebuilt = Vec::with_capacity(npts * n * n);
    for idx in 0..npts {
        let b = idx / fl;
        let mut bmat = vec![C64::new(0.0, 0.0); r * n];
        for i in 0..r {
            for k in 0..m {
                let zk = model.period.derivative(&y0, k);
                let corr: C64 = (0..r)
                    .map(|p| zk[i * r + p] * (0..r).map(|q| g[p * r + q] * sigma[b * r + q].im).sum::<f64>())
                    .sum();
                bmat[i * n + k] = dsigma[k][b * r + i] - corr;
            }
            bmat[i * n + m + i] = C64::new(1.0, 0.0);
        }
        let gc: Vec<C64> = g.iter().map(|v| C64::new(*v, 0.0)).collect();
        let bt = linalg::transpose(&bmat, r, n);
        let bbar: Vec<C64> = bmat.iter().map(|v| v.conj()).collect();
        rebuilt.extend(linalg::matmul(&linalg::matmul(&bt, &gc, n, r, r), &bbar, n, r, n));
    }
    let tsf = HermitianField::new(chart.grid.clone(), n, rebuilt)?;
    let rebuild_defect = tsf.sub(omega)?.sub(&ddbar(chart, &xi)?)?.sup_norm();
    let mean: Vec<C64> = (0..r).map(|j| sigma_base[j].iter().sum::<C64>() / nb as f64).collect();
    let lat = model.fiber_lattice(&y0)?;
    let (reduced_coordinates, winding) = lat.reduce(&mean)?;
    let reduced = lat.point(&reduced_coordinates);
    let section = TranslationSection { sigma, reduced, reduced_coordinates, winding, phi, cr_residual: cr };
    Ok(Extraction { section, xi, h, rebuild_defect })
}

/// Least-squares Fourier inversion of `dbar h = beta` with mean-free `h`.
fn solve_dbar(chart: &Chart, beta: &[C64], n: usize) -> Result<Vec<C64>> {
    let npts = chart.grid.len();
    let sym = dbar_symbols(chart);
    let hat: Vec<Vec<C64>> = (0..n)
        .map(|c| {
            let mut comp: Vec<C64> = beta.iter().skip(c).step_by(n).copied().collect();
            fft_nd(&chart.grid, &mut comp, false);
            comp
        })
        .collect();
    let scale = npts as f64;
    for (c, comp) in hat.iter().enumerate() {
        let zero = comp[0].norm() / scale;
        if zero > OBSTRUCTION_TOL {
            return Err(Error::Obstruction(format!("constant mode {zero:e} in component {c}")));
        }
    }
    let mut hh = vec![C64::new(0.0, 0.0); npts];
    let mut mismatch: f64 = 0.0;
    let mut size: f64 = 0.0;
    for k in 1..npts {
        let s = &sym[k];
        let den: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        let rhs: Vec<C64> = hat.iter().map(|comp| comp[k]).collect();
        size = size.max(rhs.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale);
        if den == 0.0 {
            mismatch = mismatch.max(rhs.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale);
            continue;
        }
        let val: C64 = s.iter().zip(&rhs).map(|(a, b)| a.conj() * b).sum::<C64>() / den;
        for (a, b) in s.iter().zip(&rhs) {
            mismatch = mismatch.max((a * val - b).norm() / scale);
        }
        hh[k] = val;
    }
    if mismatch > 1e-6 * (1.0 + size) {
        return Err(Error::Obstruction(format!("zeta01 is not dbar-exact after removing sections: defect {mismatch:e}")));
    }
    fft_nd(&chart.grid, &mut hh, true);
    Ok(hh.into_iter().map(|v| v / scale).collect())
}

/// Spectral multiplier of the discrete `ddbar` for one Fourier mode, `n x n`.
fn ddbar_multiplier(chart: &Chart, kap1: &[f64], kap2: &[f64]) -> Vec<C64> {
    let n = chart.n();
    let q = chart.partial_list().len();
    let sym: Vec<C64> = chart
        .partial_list()
        .iter()
        .map(|p| match *p {
            Partial::First(l) => I * kap1[l],
            Partial::Second(a, b) if a == b => C64::new(-kap2[a] * kap2[a], 0.0),
            Partial::Second(a, b) => C64::new(-kap1[a] * kap1[b], 0.0),
        })
        .collect();
    let table = chart.hessian_table(0);
    (0..n * n).map(|e| table[e * q..(e + 1) * q].iter().zip(&sym).map(|(c, s)| c * s).sum()).collect()
}

/// Fourier homotopy operator on a periodic chart with constant frame: returns
/// `zeta01 = dbar(i f / 2)` where `ddbar f = omega_SF - omega`.
pub fn homotopy_primitive(model: &FibrationModel, chart: &Chart, omega: &HermitianField) -> Result<Form01> {
    require_periodic(model, chart)?;
    let n = model.n;
    let g = &chart.grid;
    let npts = g.len();
    let beta = model.omega_sf_field(chart)?.sub(omega)?;
    let scale = npts as f64;
    let hat: Vec<Vec<C64>> = (0..n * n)
        .map(|e| {
            let mut comp: Vec<C64> = beta.data.iter().skip(e).step_by(n * n).copied().collect();
            fft_nd(g, &mut comp, false);
            comp
        })
        .collect();
    let zero = hat.iter().map(|c| c[0].norm() / scale).fold(0.0, f64::max);
    if zero > OBSTRUCTION_TOL {
        return Err(Error::Obstruction(format!("omega_SF - omega has harmonic part {zero:e}")));
    }
    let k1: Vec<Vec<f64>> = g.axes.iter().map(|a| wavenumbers(a.n, a.length(), true)).collect();
    let k2: Vec<Vec<f64>> = g.axes.iter().map(|a| wavenumbers(a.n, a.length(), false)).collect();
    let mut fhat = vec![C64::new(0.0, 0.0); npts];
    let mut mismatch: f64 = 0.0;
    for k in 1..npts {
        let mi = g.multi_index(k);
        let kap1: Vec<f64> = mi.iter().enumerate().map(|(ax, &j)| k1[ax][j]).collect();
        let kap2: Vec<f64> = mi.iter().enumerate().map(|(ax, &j)| k2[ax][j]).collect();
        let mult = ddbar_multiplier(chart, &kap1, &kap2);
        let den: f64 = mult.iter().map(|v| v.norm_sqr()).sum();
        let f = if den > 0.0 { mult.iter().zip(&hat).map(|(v, h)| v.conj() * h[k]).sum::<C64>() / den } else { C64::new(0.0, 0.0) };
        for e in 0..n * n {
            mismatch = mismatch.max((mult[e] * f - hat[e][k]).norm() / scale);
        }
        fhat[k] = f;
    }
    if mismatch > OBSTRUCTION_TOL {
        return Err(Error::Obstruction(format!("omega_SF - omega is not ddbar-exact: defect {mismatch:e}")));
    }
    fft_nd(g, &mut fhat, true);
    let f: Vec<C64> = fhat.iter().map(|v| C64::new(0.0, 0.5 * v.re / scale)).collect();
    Ok(dbar(chart, &f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use std::f64::consts::PI;

    fn family_b() -> FibrationModel {
        FibrationModel::family_b(0.3, 8, 8, None)
    }

    #[test]
    fn eta_examples() {
        let a = FibrationModel::family_a(4, 4);
        let y = [c(0.0, 0.0)];
        assert_eq!(eta(&a, &y, &[c(0.7, 0.0)]).unwrap(), 0.0);
        assert!((eta(&a, &y, &[c(0.0, 1.0)]).unwrap() - 2.0).abs() < 1e-15);
        let b = family_b();
        let y = [c(0.2, -0.4)];
        let z = [c(0.3, 0.8)];
        let e = eta(&b, &y, &z).unwrap();
        for lam in [-1.0, 0.5, 0.1f64.sqrt()] {
            let zl = [z[0] * lam];
            assert!((eta(&b, &y, &zl).unwrap() - lam * lam * e).abs() < 1e-12);
        }
    }

    #[test]
    fn semiflat_form_at_real_fiber_point() {
        let b = family_b();
        let y = [c(0.5, 0.25)];
        let h = semiflat_form(&b, &y, &[c(0.4, 0.0)]).unwrap();
        let g = b.fiber_metric(&y).unwrap();
        assert!(h[0].norm() < 1e-15 && h[1].norm() < 1e-15 && h[2].norm() < 1e-15);
        assert!((h[3].re - g[0]).abs() < 1e-15);
    }

    #[test]
    fn semiflat_form_translation_invariant() {
        let b = family_b();
        let y = [c(-0.3, 0.6)];
        let z = [c(0.2, 0.45)];
        let direct = semiflat_form(&b, &y, &z).unwrap();
        let moved = translation_pullback(&b, &y, &z, &[0.0, 0.37], |tz| semiflat_form(&b, &y, tz)).unwrap();
        let moved2 = translation_pullback(&b, &y, &z, &[2.0, -1.0], |tz| semiflat_form(&b, &y, tz)).unwrap();
        for ((a, p), q) in direct.iter().zip(&moved).zip(&moved2) {
            assert!((a - p).norm() < 1e-10 && (a - q).norm() < 1e-10);
        }
    }

    #[test]
    fn adapted_frame_is_block_diagonal() {
        let b = family_b();
        let y = [c(0.1, -0.7)];
        let lat = b.fiber_lattice(&y).unwrap();
        let z = lat.point(&[0.3, 0.6]);
        let holo = semiflat_form(&b, &y, &z).unwrap();
        let g = b.fiber_metric(&y).unwrap();
        let sf = vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(g[0], 0.0)];
        let mapped = adapted_to_holomorphic(&b, &y, &z, &sf).unwrap();
        for (a, p) in holo.iter().zip(&mapped) {
            assert!((a - p).norm() < 1e-13, "{a} vs {p}");
        }
        assert!(linalg::herm_eigvals(&holo, 2)[0] > -1e-10);
    }

    #[test]
    fn theta_examples() {
        let a = FibrationModel::family_a(4, 4);
        let th = theta_form(&a, 0, &[c(0.0, 0.0)]).unwrap();
        assert_eq!(th.fiber, vec![c(0.0, -1.0)]);
        assert!(th.base_slope.iter().flatten().all(|v| v.norm() == 0.0));
        let b = family_b();
        let y = [c(0.3, 0.3)];
        let th = theta_form(&b, 0, &y).unwrap();
        let z = b.period_at(&y).unwrap();
        assert!((th.fiber[0].norm() - 1.0 / z[0].im).abs() < 1e-15);
    }

    #[test]
    fn fiber_average_examples() {
        let a = FibrationModel::family_a(4, 8);
        let chart = a.build_chart().unwrap();
        let f = GridField::from_fn(&chart.grid, |u| (u[0] * 2.0 * PI).cos() + (2.0 * PI * u[2]).sin() * u[1]);
        let avg = fiber_average(&chart, &f).unwrap();
        for (i, v) in avg.values.iter().enumerate() {
            let u = chart.grid.point(i);
            assert!((v - (u[0] * 2.0 * PI).cos()).abs() < 1e-12);
        }
        let again = fiber_average(&chart, &avg).unwrap();
        assert!(again.values.iter().zip(&avg.values).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    fn planted(chart: &Chart, u: &[f64]) -> C64 {
        let (b0, b1, x0, x1) = (u[0], u[1], u[2], u[3]);
        let _ = chart;
        c(0.03 * (2.0 * PI * b0).cos() * (2.0 * PI * x1).sin(), 0.02 * (2.0 * PI * (x0 + b1)).cos() + 0.01 * (2.0 * PI * b0).sin())
    }

    #[test]
    fn plant_and_recover_translation() {
        let a = FibrationModel::family_a(8, 8);
        let chart = a.build_chart().unwrap();
        let hp: Vec<C64> = (0..chart.grid.len()).map(|i| planted(&chart, &chart.grid.point(i))).collect();
        let psi = GridField::new(chart.grid.clone(), hp.iter().map(|v| 2.0 * v.im).collect()).unwrap();
        let s = c(0.1, 0.05);
        let mut zeta = dbar(&chart, &hp);
        for idx in 0..chart.grid.len() {
            zeta.data[idx * 2 + 1] += s * c(0.0, -1.0);
        }
        let omega = a.omega_sf_field(&chart).unwrap().sub(&ddbar(&chart, &psi).unwrap()).unwrap();
        let ex = extract_translation(&a, &chart, &omega, &zeta).unwrap();
        assert!(ex.section.cr_residual < 1e-12);
        assert!((ex.section.reduced_coordinates[0] - 0.1).abs() < 1e-12);
        assert!((ex.section.reduced_coordinates[1] - 0.05).abs() < 1e-12);
        let diff: Vec<f64> = ex.xi.values.iter().zip(&psi.values).map(|(x, p)| x - p).collect();
        let spread = diff.iter().cloned().fold(f64::MIN, f64::max) - diff.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-10, "{spread}");
        assert!(ex.rebuild_defect < 1e-10, "{}", ex.rebuild_defect);
    }

    #[test]
    fn homotopy_gives_fibrewise_constant_xi_for_semiflat_input() {
        let a = FibrationModel::family_a(8, 8);
        let chart = a.build_chart().unwrap();
        let psi = GridField::from_fn(&chart.grid, |u| 0.05 * (2.0 * PI * u[0]).cos() * (2.0 * PI * u[1]).sin());
        let omega = a.omega_sf_field(&chart).unwrap().sub(&ddbar(&chart, &psi).unwrap()).unwrap();
        let zeta = homotopy_primitive(&a, &chart, &omega).unwrap();
        let ex = extract_translation(&a, &chart, &omega, &zeta).unwrap();
        let fl = chart.fiber_len();
        let osc = ex.xi.values.chunks(fl).map(|b| b.iter().cloned().fold(f64::MIN, f64::max) - b.iter().cloned().fold(f64::MAX, f64::min)).fold(0.0, f64::max);
        assert!(osc < 1e-12, "{osc}");
        assert!(ex.rebuild_defect < 1e-10);
    }

    #[test]
    fn extraction_rejects_dirichlet_chart() {
        let b = family_b();
        let chart = b.build_chart().unwrap();
        let om = b.omega_sf_field(&chart).unwrap();
        let zeta = Form01 { grid: chart.grid.clone(), n: 2, data: vec![c(0.0, 0.0); chart.grid.len() * 2] };
        assert!(matches!(extract_translation(&b, &chart, &om, &zeta), Err(Error::Chart(_))));
    }
}
