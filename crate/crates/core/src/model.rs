//! Torus fibrations over a base chart: period maps, fiber lattices and the
//! reference Kahler data every other module works with.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ddbar, Chart, FiberFrame, HermitianField};
use crate::grid::{Axis, Grid, GridField};
use crate::linalg;

/// Row-major r x r complex matrix.
pub type CMat = Vec<C64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaseChart {
    /// Base torus `C^m / (Z^m + i Z^m)`, sampled on `[0,1)` per real axis.
    PeriodicTorus,
    /// Open square `(-w, w)^{2m}`; potentials vanish on its boundary.
    DirichletSquare { half_width: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PeriodMap {
    Constant(CMat),
    /// `Z(y) = z0 + sum_k y_k slopes[k]`.
    Affine { z0: CMat, slopes: Vec<CMat> },
    /// `Z(y) = sum_p coeffs[p] y^p`, one base variable.
    Polynomial(Vec<CMat>),
}

impl PeriodMap {
    pub fn r(&self) -> usize {
        let len = match self {
            PeriodMap::Constant(z) => z.len(),
            PeriodMap::Affine { z0, .. } => z0.len(),
            PeriodMap::Polynomial(c) => c[0].len(),
        };
        (len as f64).sqrt().round() as usize
    }

    pub fn evaluate(&self, y: &[C64]) -> CMat {
        match self {
            PeriodMap::Constant(z) => z.clone(),
            PeriodMap::Affine { z0, slopes } => {
                let mut z = z0.clone();
                for (s, yk) in slopes.iter().zip(y) {
                    for (zi, si) in z.iter_mut().zip(s) {
                        *zi += si * yk;
                    }
                }
                z
            }
            PeriodMap::Polynomial(coeffs) => {
                let mut z = vec![C64::new(0.0, 0.0); coeffs[0].len()];
                for c in coeffs.iter().rev() {
                    for (zi, ci) in z.iter_mut().zip(c) {
                        *zi = *zi * y[0] + ci;
                    }
                }
                z
            }
        }
    }

    /// `dZ/dy_k`.
    pub fn derivative(&self, y: &[C64], k: usize) -> CMat {
        let size = self.r() * self.r();
        match self {
            PeriodMap::Constant(_) => vec![C64::new(0.0, 0.0); size],
            PeriodMap::Affine { slopes, .. } => slopes.get(k).cloned().unwrap_or_else(|| vec![C64::new(0.0, 0.0); size]),
            PeriodMap::Polynomial(coeffs) => {
                let mut z = vec![C64::new(0.0, 0.0); size];
                if k != 0 {
                    return z;
                }
                for (p, c) in coeffs.iter().enumerate().skip(1).rev() {
                    for (zi, ci) in z.iter_mut().zip(c) {
                        *zi = *zi * y[0] + ci * p as f64;
                    }
                }
                z
            }
        }
    }

    /// Central-difference estimate of `max |dZ/d conj(y_k)|` at `y` with step `h`.
    pub fn holomorphy_residual(&self, y: &[C64], h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..y.len() {
            let shift = |dy: C64| {
                let mut yy = y.to_vec();
                yy[k] += dy;
                self.evaluate(&yy)
            };
            let (xp, xm) = (shift(C64::new(h, 0.0)), shift(C64::new(-h, 0.0)));
            let (ip, im) = (shift(C64::new(0.0, h)), shift(C64::new(0.0, -h)));
            for e in 0..xp.len() {
                let dx = (xp[e] - xm[e]) / (2.0 * h);
                let dyy = (ip[e] - im[e]) / (2.0 * h);
                worst = worst.max((0.5 * (dx + linalg::I * dyy)).norm());
            }
        }
        worst
    }
}

/// Potential whose complex Hessian perturbs the reference total form:
/// `chi = amplitude * (1 + slope . b) * cos(2 pi k x_axis)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberMode {
    pub amplitude: f64,
    pub slope: Vec<f64>,
    pub axis: usize,
    pub wavenumber: i32,
}

impl FiberMode {
    pub fn eval(&self, b: &[f64], x: &[f64]) -> f64 {
        let lin = 1.0 + self.slope.iter().zip(b).map(|(s, v)| s * v).sum::<f64>();
        self.amplitude * lin * (2.0 * std::f64::consts::PI * self.wavenumber as f64 * x[self.axis]).cos()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OmegaMRecipe {
    /// Constant base block plus the flat fiber metric; needs a constant period map.
    FlatProduct { base: CMat },
    /// `omega_SF + f^* base`, optionally plus `ddbar chi`.
    SemiFlatPlusBase { base: CMat, perturbation: Option<FiberMode> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeRecipe {
    OmegaMPower,
    /// Constant density in holomorphic coordinates, scaled to the total mass of `omega_M^n`.
    HolomorphicSquare,
    /// Density relative to `n! dA`, one value per grid point.
    Manufactured(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FibrationModel {
    pub n: usize,
    pub m: usize,
    pub chart: BaseChart,
    pub period: PeriodMap,
    pub polarization: Vec<f64>,
    pub omega0: CMat,
    pub omega_m: OmegaMRecipe,
    pub mu: VolumeRecipe,
    pub base_shape: Vec<usize>,
    pub fiber_shape: Vec<usize>,
    pub imz_floor: f64,
}

/// Real basis `d_1 e_1, .., d_r e_r, Z_1, .., Z_r` of the fiber lattice at `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberLattice {
    pub y: Vec<C64>,
    pub d: Vec<f64>,
    pub z: CMat,
}

const WRAP_TOL: f64 = 1e-10;

impl FiberLattice {
    pub fn r(&self) -> usize {
        self.d.len()
    }

    /// The 2r basis vectors as columns of an r x 2r complex matrix.
    pub fn basis(&self) -> Vec<C64> {
        let r = self.r();
        let mut b = vec![C64::new(0.0, 0.0); r * 2 * r];
        for i in 0..r {
            b[i * 2 * r + i] = C64::new(self.d[i], 0.0);
            for j in 0..r {
                b[i * 2 * r + r + j] = self.z[i * r + j];
            }
        }
        b
    }

    fn real_period_det(&self) -> f64 {
        let r = self.r();
        let imz: Vec<C64> = self.z.iter().map(|v| C64::new(v.im, 0.0)).collect();
        self.d.iter().product::<f64>() * linalg::det(&imz, r).re
    }

    /// Real lattice coordinates of `z` (unreduced).
    pub fn coordinates(&self, z: &[C64]) -> Result<Vec<f64>> {
        let r = self.r();
        if self.real_period_det().abs() < 1e-14 {
            return Err(Error::Degenerate("singular real period matrix".into()));
        }
        let imz: Vec<f64> = self.z.iter().map(|v| v.im).collect();
        let inv = linalg::real_inverse(&imz, r).ok_or_else(|| Error::Degenerate("Im Z singular".into()))?;
        let mut x = vec![0.0; 2 * r];
        for j in 0..r {
            x[r + j] = (0..r).map(|k| inv[j * r + k] * z[k].im).sum();
        }
        for i in 0..r {
            let rez: f64 = (0..r).map(|j| self.z[i * r + j].re * x[r + j]).sum();
            x[i] = (z[i].re - rez) / self.d[i];
        }
        Ok(x)
    }

    /// Coordinates in `[0,1)^{2r}` together with the integer lattice part removed.
    pub fn reduce(&self, z: &[C64]) -> Result<(Vec<f64>, Vec<i64>)> {
        let x = self.coordinates(z)?;
        let mut frac = Vec::with_capacity(x.len());
        let mut int = Vec::with_capacity(x.len());
        for v in x {
            let mut k = v.floor();
            let mut f = v - k;
            if f >= 1.0 - WRAP_TOL {
                f = 0.0;
                k += 1.0;
            } else if f < WRAP_TOL {
                f = 0.0;
            }
            frac.push(f);
            int.push(k as i64);
        }
        Ok((frac, int))
    }

    pub fn reduce_to_fundamental(&self, z: &[C64]) -> Result<Vec<f64>> {
        Ok(self.reduce(z)?.0)
    }

    pub fn point(&self, x: &[f64]) -> Vec<C64> {
        let r = self.r();
        (0..r)
            .map(|i| {
                let mut s = C64::new(self.d[i] * x[i], 0.0);
                for j in 0..r {
                    s += self.z[i * r + j] * x[r + j];
                }
                s
            })
            .collect()
    }

    pub fn flat_translate(&self, z: &[C64], coeffs: &[f64]) -> Vec<C64> {
        let shift = self.point(coeffs);
        z.iter().zip(shift).map(|(a, b)| a + b).collect()
    }
}

impl FibrationModel {
    pub fn r(&self) -> usize {
        self.n - self.m
    }

    /// Flat oracle model: n=2, base torus Z+iZ, fiber period i, all axes periodic.
    pub fn family_a(base: usize, fiber: usize) -> Self {
        FibrationModel {
            n: 2,
            m: 1,
            chart: BaseChart::PeriodicTorus,
            period: PeriodMap::Constant(vec![C64::new(0.0, 1.0)]),
            polarization: vec![1.0],
            omega0: vec![C64::new(1.0, 0.0)],
            omega_m: OmegaMRecipe::FlatProduct { base: vec![C64::new(1.0, 0.0)] },
            mu: VolumeRecipe::OmegaMPower,
            base_shape: vec![base; 2],
            fiber_shape: vec![fiber; 2],
            imz_floor: 1e-6,
        }
    }

    /// Local collapsing model on (-1,1)^2 with `Z(y) = i + eps y`.
    pub fn family_b(eps: f64, base: usize, fiber: usize, perturbation: Option<FiberMode>) -> Self {
        FibrationModel {
            n: 2,
            m: 1,
            chart: BaseChart::DirichletSquare { half_width: 1.0 },
            period: PeriodMap::Affine { z0: vec![C64::new(0.0, 1.0)], slopes: vec![vec![C64::new(eps, 0.0)]] },
            polarization: vec![1.0],
            omega0: vec![C64::new(1.0, 0.0)],
            omega_m: OmegaMRecipe::SemiFlatPlusBase { base: vec![C64::new(1.0, 0.0)], perturbation },
            mu: VolumeRecipe::HolomorphicSquare,
            base_shape: vec![base; 2],
            fiber_shape: vec![fiber; 2],
            imz_floor: 1e-6,
        }
    }

    /// Default fiber perturbation of the Family B reference form.
    pub fn default_perturbation() -> FiberMode {
        FiberMode { amplitude: 0.02, slope: vec![0.5, 0.25], axis: 0, wavenumber: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.m && self.m < self.n) {
            return Err(Error::Config(format!("need 0 < m < n, got m={} n={}", self.m, self.n)));
        }
        let r = self.r();
        let m = self.m;
        if self.period.r() != r {
            return Err(Error::Config("period matrix size must be r x r".into()));
        }
        if self.polarization.len() != r || self.polarization.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("polarization needs r positive entries".into()));
        }
        if self.base_shape.len() != 2 * m || self.fiber_shape.len() != 2 * r {
            return Err(Error::Config("grid shape must list 2m base and 2r fiber axes".into()));
        }
        if self.omega0.len() != m * m {
            return Err(Error::Config("omega_0 must be m x m".into()));
        }
        if let PeriodMap::Polynomial(_) = self.period {
            if m != 1 {
                return Err(Error::Config("polynomial period maps need m = 1".into()));
            }
        }
        if let PeriodMap::Affine { slopes, .. } = &self.period {
            if slopes.len() != m {
                return Err(Error::Config("affine period map needs m slopes".into()));
            }
        }
        let constant = matches!(self.period, PeriodMap::Constant(_));
        if self.chart == BaseChart::PeriodicTorus && !constant {
            return Err(Error::Config("a periodic base admits only a constant period map".into()));
        }
        match &self.omega_m {
            OmegaMRecipe::FlatProduct { base } => {
                if !constant {
                    return Err(Error::Config("flat product needs a constant period map".into()));
                }
                if base.len() != m * m {
                    return Err(Error::Config("base block must be m x m".into()));
                }
            }
            OmegaMRecipe::SemiFlatPlusBase { base, perturbation } => {
                if base.len() != m * m {
                    return Err(Error::Config("base block must be m x m".into()));
                }
                if let Some(p) = perturbation {
                    if p.slope.len() != 2 * m || p.axis >= 2 * r {
                        return Err(Error::Config("perturbation slope/axis out of range".into()));
                    }
                }
            }
        }
        if let VolumeRecipe::Manufactured(v) = &self.mu {
            if v.len() != self.grid()?.len() {
                return Err(Error::Config("manufactured density must match the grid".into()));
            }
        }
        if linalg::hermitian_defect(&self.omega0, m) > 1e-14 {
            return Err(Error::Config("omega_0 must be Hermitian".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let mut axes = Vec::new();
        for &nb in &self.base_shape {
            axes.push(match self.chart {
                BaseChart::PeriodicTorus => Axis::periodic(nb, 1.0),
                BaseChart::DirichletSquare { half_width } => Axis::dirichlet(nb, -half_width, half_width),
            });
        }
        for &nf in &self.fiber_shape {
            axes.push(Axis::periodic(nf, 1.0));
        }
        Grid::new(axes)
    }

    pub fn base_grid(&self) -> Result<Grid> {
        Ok(self.grid()?.sub(0..2 * self.m))
    }

    pub fn is_periodic(&self) -> bool {
        self.chart == BaseChart::PeriodicTorus
    }

    fn in_chart(&self, y: &[C64]) -> bool {
        match self.chart {
            BaseChart::PeriodicTorus => true,
            BaseChart::DirichletSquare { half_width } => {
                let w = half_width * (1.0 + 1e-12);
                y.iter().all(|v| v.re.abs() <= w && v.im.abs() <= w)
            }
        }
    }

    pub fn period_at(&self, y: &[C64]) -> Result<CMat> {
        if y.len() != self.m {
            return Err(Error::Shape(format!("base point needs {} coordinates", self.m)));
        }
        if !self.in_chart(y) {
            return Err(Error::Domain(format!("{y:?}")));
        }
        let z = self.period.evaluate(y);
        let r = self.r();
        let imz: Vec<C64> = z.iter().map(|v| C64::new(v.im, 0.0)).collect();
        let ev = linalg::herm_eigvals(&imz, r)[0];
        if ev < self.imz_floor {
            return Err(Error::Degenerate(format!("min eig Im Z = {ev:e}")));
        }
        Ok(z)
    }

    pub fn fiber_lattice(&self, y: &[C64]) -> Result<FiberLattice> {
        Ok(FiberLattice { y: y.to_vec(), d: self.polarization.clone(), z: self.period_at(y)? })
    }

    /// `(Im Z(y))^{-1}`.
    pub fn fiber_metric(&self, y: &[C64]) -> Result<Vec<f64>> {
        let z = self.period_at(y)?;
        let r = self.r();
        let imz: Vec<f64> = z.iter().map(|v| v.im).collect();
        linalg::real_inverse(&imz, r).ok_or_else(|| Error::Degenerate("Im Z singular".into()))
    }

    /// Base coordinate of a base grid point.
    pub fn base_point(&self, base_grid: &Grid, b: usize) -> Vec<C64> {
        let p = base_grid.point(b);
        (0..self.m).map(|k| C64::new(p[2 * k], p[2 * k + 1])).collect()
    }

    pub fn build_chart(&self) -> Result<Chart> {
        self.validate()?;
        let grid = self.grid()?;
        let bg = self.base_grid()?;
        let frames = (0..bg.len())
            .map(|b| {
                let y = self.base_point(&bg, b);
                let z = self.period_at(&y)?;
                let dz: Vec<CMat> = (0..self.m).map(|k| self.period.derivative(&y, k)).collect();
                FiberFrame::new(&self.polarization, &z, &dz)
            })
            .collect::<Result<Vec<_>>>()?;
        Chart::new(grid, self.m, self.r(), frames)
    }

    fn block_diag(&self, chart: &Chart, base: &[C64], fiber: impl Fn(usize) -> Vec<f64>) -> Result<HermitianField> {
        let n = self.n;
        let m = self.m;
        let r = self.r();
        let mut data = Vec::with_capacity(chart.grid.len() * n * n);
        for b in 0..chart.base_len() {
            let g = fiber(b);
            let mut block = vec![C64::new(0.0, 0.0); n * n];
            for i in 0..m {
                for j in 0..m {
                    block[i * n + j] = base[i * m + j];
                }
            }
            for i in 0..r {
                for j in 0..r {
                    block[(m + i) * n + m + j] = C64::new(g[i * r + j], 0.0);
                }
            }
            for _ in 0..chart.fiber_len() {
                data.extend_from_slice(&block);
            }
        }
        HermitianField::new(chart.grid.clone(), n, data)
    }

    /// Pullback of the base form: base block `omega0`, all else zero.
    pub fn omega0_field(&self, chart: &Chart) -> Result<HermitianField> {
        let r = self.r();
        self.block_diag(chart, &self.omega0, |_| vec![0.0; r * r])
    }

    /// Semi-flat form in the adapted frame: `diag(0, (Im Z)^{-1})`.
    pub fn omega_sf_field(&self, chart: &Chart) -> Result<HermitianField> {
        let zero = vec![C64::new(0.0, 0.0); self.m * self.m];
        self.block_diag(chart, &zero, |b| chart.frame(b).map(|f| f.g.clone()).unwrap_or_default())
    }

    pub fn perturbation(&self) -> Option<&FiberMode> {
        match &self.omega_m {
            OmegaMRecipe::SemiFlatPlusBase { perturbation, .. } => perturbation.as_ref(),
            _ => None,
        }
    }

    /// `chi` sampled on the grid (zero without a perturbation).
    pub fn chi_field(&self, grid: &Grid) -> GridField {
        let nb = 2 * self.m;
        match self.perturbation() {
            None => GridField::zeros(grid),
            Some(p) => GridField::from_fn(grid, |u| p.eval(&u[..nb], &u[nb..])),
        }
    }

    pub fn omega_m_base(&self) -> &CMat {
        match &self.omega_m {
            OmegaMRecipe::FlatProduct { base } | OmegaMRecipe::SemiFlatPlusBase { base, .. } => base,
        }
    }

    pub fn omega_m_field(&self, chart: &Chart) -> Result<HermitianField> {
        let base = self.omega_m_base().clone();
        let sf = self.block_diag(chart, &base, |b| chart.frame(b).map(|f| f.g.clone()).unwrap_or_default())?;
        match self.perturbation() {
            None => Ok(sf),
            Some(_) => sf.add(&ddbar(chart, &self.chi_field(&chart.grid))?),
        }
    }

    /// Potential of the constant base form `omega0`: `sum A_kl y_k conj(y_l)`.
    pub fn base_potential(&self, grid: &Grid, a: &[C64]) -> GridField {
        let m = self.m;
        GridField::from_fn(grid, |u| {
            let y: Vec<C64> = (0..m).map(|k| C64::new(u[2 * k], u[2 * k + 1])).collect();
            let mut s = C64::new(0.0, 0.0);
            for k in 0..m {
                for l in 0..m {
                    s += a[k * m + l] * y[k] * y[l].conj();
                }
            }
            s.re
        })
    }

    /// Density of `mu` relative to `n! dA`.
    pub fn mu_density(&self, chart: &Chart, omega_m: &HermitianField) -> Result<Vec<f64>> {
        match &self.mu {
            VolumeRecipe::OmegaMPower => Ok(omega_m.det()),
            VolumeRecipe::Manufactured(v) => Ok(v.clone()),
            VolumeRecipe::HolomorphicSquare => {
                let w = chart.grid.weights();
                let det = omega_m.det();
                let mut mass = 0.0;
                let mut vol = 0.0;
                for i in 0..det.len() {
                    let j = chart.jacobian(i);
                    mass += w[i] * det[i] * j;
                    vol += w[i] * j;
                }
                Ok(vec![mass / vol; det.len()])
            }
        }
    }

    /// `int_{M_y} (omega_M|_{M_y})^r` per base point, in units of `r! dA`.
    pub fn fiber_volumes(&self, chart: &Chart, omega_m: &HermitianField) -> Vec<f64> {
        let m = self.m;
        let fiber = omega_m.block(m..self.n);
        let det = fiber.det();
        let fl = chart.fiber_len();
        let cell = 1.0 / fl as f64;
        (0..chart.base_len())
            .map(|b| {
                let jac = chart.frame(b).map(|f| f.jac).unwrap_or(1.0);
                (0..fl).map(|k| det[b * fl + k] * jac * cell).sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn affine_period_evaluation() {
        let m = FibrationModel::family_b(0.3, 8, 8, None);
        assert_eq!(m.period_at(&[c(0.0, 0.0)]).unwrap(), vec![c(0.0, 1.0)]);
        let z = m.period_at(&[c(1.0, 0.0)]).unwrap();
        assert!((z[0] - c(0.3, 1.0)).norm() < 1e-15);
        assert!(matches!(m.period_at(&[c(2.0, 0.0)]), Err(Error::Domain(_))));
    }

    #[test]
    fn wide_chart_degeneracy() {
        let mut m = FibrationModel::family_b(0.3, 8, 8, None);
        m.chart = BaseChart::DirichletSquare { half_width: 5.0 };
        let z = m.period_at(&[c(0.0, 4.0)]).unwrap();
        assert!((z[0].im - 2.2).abs() < 1e-12);
        assert!(matches!(m.period_at(&[c(0.0, -4.0)]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reduction_examples() {
        let lat = FiberLattice { y: vec![c(0.0, 0.0)], d: vec![1.0], z: vec![c(0.0, 1.0)] };
        let x = lat.reduce_to_fundamental(&[c(2.25, 3.5)]).unwrap();
        assert!((x[0] - 0.25).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
        let lat = FiberLattice { y: vec![c(1.0, 0.0)], d: vec![1.0], z: vec![c(0.3, 1.0)] };
        assert_eq!(lat.reduce_to_fundamental(&[c(0.3, 1.0)]).unwrap(), vec![0.0, 0.0]);
        let t = lat.flat_translate(&[c(0.0, 0.0)], &[0.5, 0.5]);
        assert!((t[0] - c(0.65, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn polynomial_derivative() {
        let p = PeriodMap::Polynomial(vec![vec![c(0.0, 1.0)], vec![c(0.2, 0.0)], vec![c(0.0, 0.1)]]);
        let y = [c(0.3, -0.2)];
        let d = p.derivative(&y, 0)[0];
        assert!((d - (c(0.2, 0.0) + c(0.0, 0.2) * y[0])).norm() < 1e-15);
    }

    #[test]
    fn flat_product_fiber_volume_is_one() {
        let m = FibrationModel::family_a(6, 6);
        let chart = m.build_chart().unwrap();
        let om = m.omega_m_field(&chart).unwrap();
        for v in m.fiber_volumes(&chart, &om) {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
