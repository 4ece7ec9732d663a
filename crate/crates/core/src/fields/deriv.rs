//! Axis-wise differentiation: Fourier on periodic axes, fourth-order finite
//! differences (Fornberg weights, one-sided six-point closures) on Dirichlet axes.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{AxisKind, Grid};
use crate::par;

/// Finite-difference weights for derivatives of order 0..=m at `x0` on nodes `xs`.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut d = vec![vec![vec![0.0; n]; n]; m + 1];
    d[0][0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            for k in 0..=m.min(i) {
                let prev_i = d[k][i - 1][j];
                let prev_k = if k > 0 { d[k - 1][i - 1][j] } else { 0.0 };
                d[k][i][j] = ((xs[i] - x0) * prev_i - k as f64 * prev_k) / c3;
            }
        }
        for k in 0..=m.min(i) {
            let prev_i = d[k][i - 1][i - 1];
            let prev_k = if k > 0 { d[k - 1][i - 1][i - 1] } else { 0.0 };
            d[k][i][i] = c1 / c2 * (k as f64 * prev_k - (xs[i - 1] - x0) * prev_i);
        }
        c1 = c2;
    }
    (0..=m).map(|k| d[k][n - 1].clone()).collect()
}

#[derive(Clone)]
struct Stencil {
    start: usize,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

#[derive(Clone)]
enum AxisOp {
    Spectral { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>>, k: Vec<f64>, k_first: Vec<f64> },
    Fd(Vec<Stencil>),
}

/// Differentiation engine bound to one grid; cheap to clone.
#[derive(Clone)]
pub struct Deriv {
    grid: Grid,
    ops: Vec<AxisOp>,
    starts: Vec<Vec<usize>>,
}

impl Deriv {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let ops = grid
            .axes
            .iter()
            .map(|a| match a.kind {
                AxisKind::Periodic => {
                    let n = a.n;
                    let base = 2.0 * std::f64::consts::PI / a.length();
                    let k: Vec<f64> = (0..n)
                        .map(|j| {
                            let s = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                            s * base
                        })
                        .collect();
                    let mut k_first = k.clone();
                    if n % 2 == 0 {
                        k_first[n / 2] = 0.0;
                    }
                    AxisOp::Spectral { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n), k, k_first }
                }
                AxisKind::Dirichlet => {
                    let n = a.n;
                    let h = a.spacing();
                    let stencils = (0..n)
                        .map(|i| {
                            let (start, len) = if i >= 2 && i + 2 < n {
                                (i - 2, 5)
                            } else if i < 2 {
                                (0, 6)
                            } else {
                                (n - 6, 6)
                            };
                            let xs: Vec<f64> = (start..start + len).map(|j| (j as f64 - i as f64) * h).collect();
                            let w = fornberg(0.0, &xs, 2);
                            Stencil { start, w1: w[1].clone(), w2: w[2].clone() }
                        })
                        .collect();
                    AxisOp::Fd(stencils)
                }
            })
            .collect();
        let starts = (0..grid.dim()).map(|k| grid.line_starts(k)).collect();
        Deriv { grid: grid.clone(), ops, starts }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `order`-th derivative (1 or 2) along `axis`.
    pub fn along(&self, axis: usize, order: usize, data: &[f64]) -> Vec<f64> {
        assert_eq!(data.len(), self.grid.len());
        let n = self.grid.axes[axis].n;
        let stride = self.grid.stride(axis);
        let starts = &self.starts[axis];
        let op = &self.ops[axis];
        let lines = par::map_chunks(starts, 64, |chunk| {
            let mut out = Vec::with_capacity(chunk.len() * n);
            let mut buf = vec![C64::new(0.0, 0.0); n];
            let mut line = vec![0.0; n];
            for &s in chunk {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[s + j * stride];
                }
                apply_line(op, order, &line, &mut buf, &mut out);
            }
            out
        });
        let mut result = vec![0.0; data.len()];
        let mut it = lines.into_iter().flatten();
        for &s in starts {
            for j in 0..n {
                result[s + j * stride] = it.next().unwrap();
            }
        }
        result
    }

    pub fn d1(&self, axis: usize, data: &[f64]) -> Vec<f64> {
        self.along(axis, 1, data)
    }

    pub fn d2(&self, axis: usize, data: &[f64]) -> Vec<f64> {
        self.along(axis, 2, data)
    }

    /// Mixed or pure second derivative; mixed ones are composed first derivatives.
    pub fn d11(&self, a: usize, b: usize, data: &[f64]) -> Vec<f64> {
        if a == b {
            self.d2(a, data)
        } else {
            self.d1(a, &self.d1(b, data))
        }
    }

    pub fn d1_complex(&self, axis: usize, data: &[C64]) -> Vec<C64> {
        let re: Vec<f64> = data.iter().map(|z| z.re).collect();
        let im: Vec<f64> = data.iter().map(|z| z.im).collect();
        let dr = self.d1(axis, &re);
        let di = self.d1(axis, &im);
        dr.into_iter().zip(di).map(|(a, b)| C64::new(a, b)).collect()
    }
}

/// Angular wavenumbers of a periodic axis in FFT order; `first` zeroes Nyquist.
pub fn wavenumbers(n: usize, length: f64, first: bool) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|j| {
            if first && n % 2 == 0 && j == n / 2 {
                return 0.0;
            }
            let s = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            s * base
        })
        .collect()
}

/// Unnormalized multi-dimensional FFT over all axes (all must be periodic).
pub fn fft_nd(grid: &Grid, data: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::new();
    for axis in 0..grid.dim() {
        let n = grid.axes[axis].n;
        let stride = grid.stride(axis);
        let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for s in grid.line_starts(axis) {
            for j in 0..n {
                buf[j] = data[s + j * stride];
            }
            plan.process(&mut buf);
            for j in 0..n {
                data[s + j * stride] = buf[j];
            }
        }
    }
}

fn apply_line(op: &AxisOp, order: usize, line: &[f64], buf: &mut [C64], out: &mut Vec<f64>) {
    let n = line.len();
    match op {
        AxisOp::Spectral { fwd, inv, k, k_first } => {
            for (b, &v) in buf.iter_mut().zip(line) {
                *b = C64::new(v, 0.0);
            }
            fwd.process(buf);
            let scale = 1.0 / n as f64;
            for j in 0..n {
                buf[j] *= match order {
                    1 => C64::new(0.0, k_first[j] * scale),
                    _ => C64::new(-k[j] * k[j] * scale, 0.0),
                };
            }
            inv.process(buf);
            out.extend(buf.iter().map(|z| z.re));
        }
        AxisOp::Fd(stencils) => {
            for st in stencils {
                let w = if order == 1 { &st.w1 } else { &st.w2 };
                let mut s = 0.0;
                for (q, wq) in w.iter().enumerate() {
                    s += wq * line[st.start + q];
                }
                out.push(s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use std::f64::consts::PI;

    #[test]
    fn fornberg_centered_second_derivative() {
        let w = fornberg(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let expect = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w[2].iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_derivative_of_band_limited_line() {
        let g = Grid::new(vec![Axis::periodic(16, 1.0)]).unwrap();
        let d = Deriv::new(&g);
        let f: Vec<f64> = (0..16).map(|i| (2.0 * PI * 3.0 * i as f64 / 16.0).sin()).collect();
        let df = d.d1(0, &f);
        let d2f = d.d2(0, &f);
        for i in 0..16 {
            let x = i as f64 / 16.0;
            assert!((df[i] - 6.0 * PI * (6.0 * PI * x).cos()).abs() < 1e-11);
            assert!((d2f[i] + 36.0 * PI * PI * (6.0 * PI * x).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn fd_exact_on_quartic() {
        let g = Grid::new(vec![Axis::dirichlet(9, -1.0, 1.0)]).unwrap();
        let d = Deriv::new(&g);
        let f: Vec<f64> = (0..9).map(|i| g.axes[0].coord(i).powi(4)).collect();
        let d2 = d.d2(0, &f);
        for i in 0..9 {
            let x = g.axes[0].coord(i);
            assert!((d2[i] - 12.0 * x * x).abs() < 1e-11, "{i}");
        }
    }
}
