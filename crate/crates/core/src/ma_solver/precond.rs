//! Constant-coefficient preconditioner: the chart-averaged linearization,
//! diagonalized by FFT on periodic axes and DST-I on Dirichlet interiors.
//! Terms with an odd number of Dirichlet derivatives are dropped.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::fields::deriv::wavenumbers;
use crate::fields::Partial;
use crate::grid::{AxisKind, Grid};

enum Transform {
    Fft { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
    /// DST-I of size `m` through an FFT of length `2(m+1)`.
    Dst { plan: Arc<dyn Fft<f64>> },
}

pub struct SpectralPreconditioner {
    shape: Vec<usize>,
    transforms: Vec<Transform>,
    inv_symbol: Vec<C64>,
    norm: f64,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

fn dst_eigenvalue(j: usize, m: usize, h: f64) -> f64 {
    let th = std::f64::consts::PI * j as f64 / (m + 1) as f64;
    (-(2.0 * th).cos() / 6.0 + 8.0 * th.cos() / 3.0 - 2.5) / (h * h)
}

impl SpectralPreconditioner {
    /// `coef[q]` are the averaged coefficients of `partials[q]` on `grid`.
    pub fn new(grid: &Grid, partials: &[Partial], coef: &[f64]) -> Self {
        let mut planner = FftPlanner::new();
        let shape: Vec<usize> = grid.axes.iter().map(|a| if a.is_periodic() { a.n } else { a.n - 2 }).collect();
        let transforms = grid
            .axes
            .iter()
            .zip(&shape)
            .map(|(a, &m)| match a.kind {
                AxisKind::Periodic => Transform::Fft { fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) },
                AxisKind::Dirichlet => Transform::Dst { plan: planner.plan_fft_forward(2 * (m + 1)) },
            })
            .collect();
        let d = grid.dim();
        let k1: Vec<Vec<f64>> = grid.axes.iter().map(|a| if a.is_periodic() { wavenumbers(a.n, a.length(), true) } else { Vec::new() }).collect();
        let k2: Vec<Vec<f64>> = grid
            .axes
            .iter()
            .zip(&shape)
            .map(|(a, &m)| {
                if a.is_periodic() {
                    wavenumbers(a.n, a.length(), false).iter().map(|k| -k * k).collect()
                } else {
                    (1..=m).map(|j| dst_eigenvalue(j, m, a.spacing())).collect()
                }
            })
            .collect();
        let total: usize = shape.iter().product();
        let st = strides(&shape);
        let periodic: Vec<bool> = grid.axes.iter().map(|a| a.is_periodic()).collect();
        let inv_symbol = (0..total)
            .map(|idx| {
                let mi: Vec<usize> = (0..d).map(|k| (idx / st[k]) % shape[k]).collect();
                let mut s = C64::new(0.0, 0.0);
                for (p, c) in partials.iter().zip(coef) {
                    s += *c * match *p {
                        Partial::First(l) if periodic[l] => C64::new(0.0, k1[l][mi[l]]),
                        Partial::Second(a, b) if a == b => C64::new(k2[a][mi[a]], 0.0),
                        Partial::Second(a, b) if periodic[a] && periodic[b] => C64::new(-k1[a][mi[a]] * k1[b][mi[b]], 0.0),
                        _ => C64::new(0.0, 0.0),
                    };
                }
                if s.norm() < 1e-300 {
                    C64::new(0.0, 0.0)
                } else {
                    1.0 / s
                }
            })
            .collect();
        let norm = grid.axes.iter().zip(&shape).map(|(a, &m)| if a.is_periodic() { m as f64 } else { 2.0 * (m + 1) as f64 / 4.0 }).product::<f64>();
        SpectralPreconditioner { shape, transforms, inv_symbol, norm }
    }

    fn transform_all(&self, data: &mut [C64], inverse: bool) {
        let st = strides(&self.shape);
        let total = data.len();
        for (axis, tr) in self.transforms.iter().enumerate() {
            let m = self.shape[axis];
            let stride = st[axis];
            let starts: Vec<usize> = (0..total).filter(|i| (i / stride) % m == 0).collect();
            match tr {
                Transform::Fft { fwd, inv } => {
                    let plan = if inverse { inv } else { fwd };
                    let mut buf = vec![C64::new(0.0, 0.0); m];
                    for &s in &starts {
                        for j in 0..m {
                            buf[j] = data[s + j * stride];
                        }
                        plan.process(&mut buf);
                        for j in 0..m {
                            data[s + j * stride] = buf[j];
                        }
                    }
                }
                Transform::Dst { plan } => {
                    let len = 2 * (m + 1);
                    let mut re = vec![C64::new(0.0, 0.0); len];
                    let mut im = vec![C64::new(0.0, 0.0); len];
                    for &s in &starts {
                        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v = C64::new(0.0, 0.0));
                        for j in 0..m {
                            let v = data[s + j * stride];
                            re[j + 1] = C64::new(v.re, 0.0);
                            re[len - 1 - j] = C64::new(-v.re, 0.0);
                            im[j + 1] = C64::new(v.im, 0.0);
                            im[len - 1 - j] = C64::new(-v.im, 0.0);
                        }
                        plan.process(&mut re);
                        plan.process(&mut im);
                        for j in 0..m {
                            data[s + j * stride] = C64::new(-0.5 * re[j + 1].im, -0.5 * im[j + 1].im);
                        }
                    }
                }
            }
        }
    }

    /// Approximate inverse on interior-ordered data.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut data: Vec<C64> = r.iter().map(|v| C64::new(*v, 0.0)).collect();
        self.transform_all(&mut data, false);
        for (v, s) in data.iter_mut().zip(&self.inv_symbol) {
            *v *= s;
        }
        self.transform_all(&mut data, true);
        data.iter().map(|v| v.re / self.norm).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    #[test]
    fn inverts_dirichlet_second_difference_symbol() {
        let g = Grid::new(vec![Axis::dirichlet(12, 0.0, 1.0)]).unwrap();
        let p = SpectralPreconditioner::new(&g, &[Partial::Second(0, 0)], &[1.0]);
        let m = 10;
        let h = g.axes[0].spacing();
        let j = 3;
        let v: Vec<f64> = (1..=m).map(|i| (std::f64::consts::PI * (i * j) as f64 / (m + 1) as f64).sin()).collect();
        let out = p.apply(&v);
        let lam = dst_eigenvalue(j, m, h);
        for (a, b) in out.iter().zip(&v) {
            assert!((a * lam - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverts_periodic_laplacian_on_fourier_mode() {
        let g = Grid::new(vec![Axis::periodic(8, 1.0), Axis::periodic(8, 1.0)]).unwrap();
        let p = SpectralPreconditioner::new(&g, &[Partial::Second(0, 0), Partial::Second(1, 1)], &[1.0, 2.0]);
        let f: Vec<f64> = (0..64).map(|i| (2.0 * std::f64::consts::PI * ((i / 8) as f64 / 8.0 + 2.0 * (i % 8) as f64 / 8.0)).cos()).collect();
        let out = p.apply(&f);
        let lam = -(2.0 * std::f64::consts::PI).powi(2) * (1.0 + 2.0 * 4.0);
        for (a, b) in out.iter().zip(&f) {
            assert!((a * lam - b).abs() < 1e-12);
        }
    }
}
