//! Grid calculus: complex Hessians, determinants, Ricci forms, curvature.

pub mod chart;
pub mod curvature;
pub mod deriv;

use num_complex::Complex64 as C64;

pub use chart::{Chart, FiberFrame, Partial};
pub use curvature::{riemann_sectional, CurvatureField};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::linalg;
use crate::par;

pub const POSITIVITY_FLOOR: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-12;

/// n x n Hermitian matrix per grid point, stored in the chart's adapted frame.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianField {
    pub grid: Grid,
    pub n: usize,
    pub data: Vec<C64>,
}

impl HermitianField {
    /// Checks Hermitian symmetry, then stores the exact Hermitian part.
    pub fn new(grid: Grid, n: usize, mut data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() * n * n {
            return Err(Error::Shape(format!("{} entries for {} points of {n}x{n}", data.len(), grid.len())));
        }
        for block in data.chunks_mut(n * n) {
            let scale = 1.0 + linalg::max_abs(block);
            let defect = linalg::hermitian_defect(block, n);
            if defect > HERMITIAN_TOL * scale {
                return Err(Error::Invariant(format!("non-Hermitian entry, defect {defect:e}")));
            }
            for i in 0..n {
                block[i * n + i].im = 0.0;
                for j in i + 1..n {
                    let avg = 0.5 * (block[i * n + j] + block[j * n + i].conj());
                    block[i * n + j] = avg;
                    block[j * n + i] = avg.conj();
                }
            }
        }
        Ok(HermitianField { grid, n, data })
    }

    pub fn zeros(grid: &Grid, n: usize) -> Self {
        HermitianField { grid: grid.clone(), n, data: vec![C64::new(0.0, 0.0); grid.len() * n * n] }
    }

    /// Same matrix at every point.
    pub fn constant(grid: &Grid, n: usize, m: &[C64]) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * n * n);
        for _ in 0..grid.len() {
            data.extend_from_slice(m);
        }
        HermitianField::new(grid.clone(), n, data)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn at(&self, idx: usize) -> &[C64] {
        let s = self.n * self.n;
        &self.data[idx * s..(idx + 1) * s]
    }

    pub fn lincomb(a: f64, x: &HermitianField, b: f64, y: &HermitianField) -> Result<Self> {
        x.grid.check_same(&y.grid)?;
        if x.n != y.n {
            return Err(Error::Shape("matrix sizes differ".into()));
        }
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * a + q * b).collect();
        HermitianField::new(x.grid.clone(), x.n, data)
    }

    pub fn add(&self, other: &HermitianField) -> Result<Self> {
        HermitianField::lincomb(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &HermitianField) -> Result<Self> {
        HermitianField::lincomb(1.0, self, -1.0, other)
    }

    pub fn scale(&self, a: f64) -> Self {
        HermitianField { grid: self.grid.clone(), n: self.n, data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn det(&self) -> Vec<f64> {
        let s = self.n * self.n;
        self.data.chunks(s).map(|b| linalg::det(b, self.n).re).collect()
    }

    pub fn min_eig(&self) -> f64 {
        let s = self.n * self.n;
        self.data.chunks(s).map(|b| linalg::herm_eigvals(b, self.n)[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        linalg::max_abs(&self.data)
    }

    /// Sup of entries over the listed points.
    pub fn sup_norm_on(&self, points: &[usize]) -> f64 {
        points.iter().map(|&i| linalg::max_abs(self.at(i))).fold(0.0, f64::max)
    }

    /// Fails unless every point has min eigenvalue above `floor`.
    pub fn check_positive(&self, floor: f64) -> Result<()> {
        let s = self.n * self.n;
        for (i, b) in self.data.chunks(s).enumerate() {
            let ev = linalg::herm_eigvals(b, self.n)[0];
            if !(ev > floor) {
                return Err(Error::Positivity(format!("min eigenvalue {ev:e} at point {i}")));
            }
        }
        Ok(())
    }

    /// Sub-block of rows/cols `range` at every point.
    pub fn block(&self, range: std::ops::Range<usize>) -> HermitianField {
        let k = range.len();
        let mut data = Vec::with_capacity(self.len() * k * k);
        for idx in 0..self.len() {
            let b = self.at(idx);
            for i in range.clone() {
                for j in range.clone() {
                    data.push(b[i * self.n + j]);
                }
            }
        }
        HermitianField { grid: self.grid.clone(), n: k, data }
    }
}

/// Complex Hessian of a real potential in the chart frame.
pub fn ddbar(chart: &Chart, phi: &GridField) -> Result<HermitianField> {
    chart.grid.check_same(&phi.grid)?;
    let n = chart.n();
    let parts = chart.partials(&phi.values);
    let blocks = par::map_range(chart.grid.len(), |idx| {
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        chart.hessian_at(idx, &parts, &mut out);
        out
    });
    HermitianField::new(chart.grid.clone(), n, blocks.concat())
}

/// `-ddbar log det g`.
pub fn ricci_form(chart: &Chart, g: &HermitianField) -> Result<HermitianField> {
    let det = g.det();
    if let Some((i, d)) = det.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::Positivity(format!("det {d:e} at point {i}")));
    }
    let logdet = GridField::new(g.grid.clone(), det.iter().map(|d| d.ln()).collect())?;
    Ok(ddbar(chart, &logdet)?.scale(-1.0))
}

/// Extremal generalized eigenvalues of `g` relative to `h` over `points`.
pub fn eigen_envelope(g: &HermitianField, h: &HermitianField, points: &[usize]) -> Result<(f64, f64)> {
    g.grid.check_same(&h.grid)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &i in points {
        let ev = linalg::pencil_eigvals(g.at(i), h.at(i), g.n)
            .ok_or_else(|| Error::Positivity(format!("reference not positive at point {i}")))?;
        lo = lo.min(ev[0]);
        hi = hi.max(ev[g.n - 1]);
    }
    Ok((lo, hi))
}

/// Reference form plus potential with its cached metric.
#[derive(Clone, Debug)]
pub struct KahlerData {
    pub reference: HermitianField,
    pub potential: GridField,
    pub metric: HermitianField,
}

impl KahlerData {
    pub fn new(chart: &Chart, reference: HermitianField, potential: GridField) -> Result<Self> {
        let metric = reference.add(&ddbar(chart, &potential)?)?;
        metric.check_positive(POSITIVITY_FLOOR)?;
        Ok(KahlerData { reference, potential, metric })
    }
}

/// Index box on a grid, `lo` inclusive and `hi` exclusive per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl Region {
    pub fn full(grid: &Grid) -> Self {
        Region { lo: vec![0; grid.dim()], hi: grid.shape() }
    }

    pub fn points(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.len())
            .filter(|&i| {
                let mi = grid.multi_index(i);
                mi.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v < self.hi[k])
            })
            .collect()
    }

    pub fn contains(&self, grid: &Grid, idx: usize) -> bool {
        grid.multi_index(idx).iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v < self.hi[k])
    }
}
