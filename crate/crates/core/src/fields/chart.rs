//! Complex structure carried by a real grid.
//!
//! Real axes are ordered `(b_0, .., b_{2m-1}, x_0, .., x_{2r-1})`. The first `m`
//! complex coordinates are `y_k = b_{2k} + i b_{2k+1}`. The fiber is described in
//! real lattice coordinates `x` with `z = D x' + Z(y) x''`, and every tensor is
//! stored in the adapted coframe `{dy^k, theta^i = dz - N dy}` with
//! `N_{ik} = (dZ/dy_k x'')_i`. That coframe is invariant under lattice translation,
//! so coefficients of periodic forms stay periodic in `x`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fields::deriv::Deriv;
use crate::grid::Grid;
use crate::linalg;

/// Fiber frame data at one base point.
#[derive(Clone, Debug)]
pub struct FiberFrame {
    /// `theta^i(d/dx_l)`, r x 2r: the block `[D | Z(y)]`.
    pub theta: Vec<C64>,
    /// `F_i = sum_l a_il d/dx_l`, the dual (1,0) vectors, r x 2r.
    pub a: Vec<C64>,
    /// `conj(V_k)(a)` for each base direction, r x 2r each.
    pub vbar_a: Vec<Vec<C64>>,
    /// `(Im Z)^{-1}`, r x r.
    pub g: Vec<f64>,
    /// `det D * det Im Z`, the Lebesgue density of `z` in `x`.
    pub jac: f64,
}

impl FiberFrame {
    /// `z` is r x r, `dz[k]` is `dZ/dy_k`.
    pub fn new(d: &[f64], z: &[C64], dz: &[Vec<C64>]) -> Result<Self> {
        let r = d.len();
        let w = 2 * r;
        let mut theta = vec![C64::new(0.0, 0.0); r * w];
        for i in 0..r {
            theta[i * w + i] = C64::new(d[i], 0.0);
            for j in 0..r {
                theta[i * w + r + j] = z[i * r + j];
            }
        }
        let mut big = vec![C64::new(0.0, 0.0); w * w];
        for i in 0..r {
            for l in 0..w {
                big[i * w + l] = theta[i * w + l];
                big[(r + i) * w + l] = theta[i * w + l].conj();
            }
        }
        let winv = linalg::inverse(&big, w).ok_or_else(|| Error::Degenerate("singular real period matrix".into()))?;
        let mut a = vec![C64::new(0.0, 0.0); r * w];
        for i in 0..r {
            for l in 0..w {
                a[i * w + l] = winv[l * w + i];
            }
        }
        let vbar_a = dz
            .iter()
            .map(|zk| {
                let mut dw = vec![C64::new(0.0, 0.0); w * w];
                for i in 0..r {
                    for j in 0..r {
                        dw[(r + i) * w + r + j] = zk[i * r + j].conj();
                    }
                }
                let t = linalg::matmul(&linalg::matmul(&winv, &dw, w, w, w), &winv, w, w, w);
                let mut out = vec![C64::new(0.0, 0.0); r * w];
                for i in 0..r {
                    for l in 0..w {
                        out[i * w + l] = -t[l * w + i];
                    }
                }
                out
            })
            .collect();
        let imz: Vec<C64> = z.iter().map(|v| C64::new(v.im, 0.0)).collect();
        let det_im = linalg::det(&imz, r).re;
        let ginv = linalg::inverse(&imz, r).ok_or_else(|| Error::Degenerate("Im Z singular".into()))?;
        let g = ginv.iter().map(|v| v.re).collect();
        let jac = d.iter().product::<f64>() * det_im;
        Ok(FiberFrame { theta, a, vbar_a, g, jac })
    }
}

/// Which derivative a partial-derivative slot holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partial {
    First(usize),
    Second(usize, usize),
}

/// Grid plus complex structure.
#[derive(Clone)]
pub struct Chart {
    pub grid: Grid,
    pub m: usize,
    pub r: usize,
    frames: Vec<FiberFrame>,
    base_len: usize,
    fiber_len: usize,
    partials: Vec<Partial>,
    /// `hess[b]`: n*n*Q coefficients turning partials into the complex Hessian.
    hess: Vec<Vec<C64>>,
    deriv: Deriv,
}

impl Chart {
    /// `frames` has one entry per base grid point (base axes are the first 2m).
    pub fn new(grid: Grid, m: usize, r: usize, frames: Vec<FiberFrame>) -> Result<Self> {
        if grid.dim() != 2 * (m + r) {
            return Err(Error::Shape(format!("grid has {} axes, chart needs {}", grid.dim(), 2 * (m + r))));
        }
        let base_len: usize = grid.axes[..2 * m].iter().map(|a| a.n).product();
        let fiber_len = grid.len() / base_len;
        let frames = if r == 0 { Vec::new() } else { frames };
        if r > 0 && frames.len() != base_len {
            return Err(Error::Shape("one fiber frame per base point required".into()));
        }
        let d = grid.dim();
        let mut partials: Vec<Partial> = (2 * m..d).map(Partial::First).collect();
        for p in 0..d {
            for q in p..d {
                partials.push(Partial::Second(p, q));
            }
        }
        let mut chart = Chart { grid: grid.clone(), m, r, frames, base_len, fiber_len, partials, hess: Vec::new(), deriv: Deriv::new(&grid) };
        chart.hess = if r == 0 {
            vec![chart.hessian_coefficients(None)]
        } else {
            (0..base_len).map(|b| chart.hessian_coefficients(Some(b))).collect()
        };
        Ok(chart)
    }

    /// Chart with only standard coordinates (no fiber).
    pub fn flat(grid: Grid) -> Result<Self> {
        if grid.dim() % 2 != 0 {
            return Err(Error::Shape("flat chart needs an even number of axes".into()));
        }
        let m = grid.dim() / 2;
        Chart::new(grid, m, 0, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.m + self.r
    }

    pub fn deriv(&self) -> &Deriv {
        &self.deriv
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn fiber_len(&self) -> usize {
        self.fiber_len
    }

    pub fn base_of(&self, idx: usize) -> usize {
        idx / self.fiber_len
    }

    pub fn frame(&self, base: usize) -> Option<&FiberFrame> {
        self.frames.get(base)
    }

    pub fn partial_list(&self) -> &[Partial] {
        &self.partials
    }

    /// Lebesgue density of the holomorphic coordinates in grid coordinates.
    pub fn jacobian(&self, idx: usize) -> f64 {
        if self.r == 0 {
            1.0
        } else {
            self.frames[self.base_of(idx)].jac
        }
    }

    /// Coefficients of `V_a` (a < m) on the base real axes.
    fn vb(a: usize, p: usize) -> C64 {
        if p == 2 * a {
            C64::new(0.5, 0.0)
        } else if p == 2 * a + 1 {
            C64::new(0.0, -0.5)
        } else {
            C64::new(0.0, 0.0)
        }
    }

    fn slot(&self, p: Partial) -> usize {
        let p = match p {
            Partial::Second(a, b) if a > b => Partial::Second(b, a),
            other => other,
        };
        self.partials.iter().position(|&q| q == p).expect("partial slot")
    }

    /// `H(X, Ybar) = X Ybar phi - [X, Ybar]^{0,1} phi` expanded into partials.
    fn hessian_coefficients(&self, base: Option<usize>) -> Vec<C64> {
        let n = self.n();
        let m = self.m;
        let r = self.r;
        let q = self.partials.len();
        let fb = 2 * m;
        let mut coef = vec![C64::new(0.0, 0.0); n * n * q];
        let add = |coef: &mut Vec<C64>, a: usize, b: usize, p: Partial, v: C64| {
            let s = self.slot(p);
            coef[(a * n + b) * q + s] += v;
        };
        for a in 0..m {
            for b in 0..m {
                for p in 0..fb {
                    for pp in 0..fb {
                        let v = Self::vb(a, p) * Self::vb(b, pp).conj();
                        if v != C64::new(0.0, 0.0) {
                            add(&mut coef, a, b, Partial::Second(p, pp), v);
                        }
                    }
                }
            }
        }
        if let Some(base) = base {
            let fr = &self.frames[base];
            let w = 2 * r;
            for i in 0..r {
                for j in 0..r {
                    for l in 0..w {
                        for ll in 0..w {
                            let v = fr.a[i * w + l] * fr.a[j * w + ll].conj();
                            add(&mut coef, m + i, m + j, Partial::Second(fb + l, fb + ll), v);
                        }
                    }
                }
            }
            // Pi_{l l'} = sum_c theta_{c l} a_{c l'}: (d/dx_l)^{1,0} = sum_c theta_{cl} F_c.
            let mut pi = vec![C64::new(0.0, 0.0); w * w];
            for l in 0..w {
                for ll in 0..w {
                    for c in 0..r {
                        pi[l * w + ll] += fr.theta[c * w + l] * fr.a[c * w + ll];
                    }
                }
            }
            for a in 0..m {
                for j in 0..r {
                    let mut entry = vec![C64::new(0.0, 0.0); q];
                    for l in 0..w {
                        let aj = fr.a[j * w + l].conj();
                        for p in 0..fb {
                            let v = aj * Self::vb(a, p);
                            if v != C64::new(0.0, 0.0) {
                                entry[self.slot(Partial::Second(p, fb + l))] += v;
                            }
                        }
                        let dv = fr.vbar_a[a][j * w + l].conj();
                        for ll in 0..w {
                            entry[self.slot(Partial::First(fb + ll))] += dv * pi[l * w + ll];
                        }
                    }
                    for s in 0..q {
                        coef[(a * n + m + j) * q + s] += entry[s];
                        coef[((m + j) * n + a) * q + s] += entry[s].conj();
                    }
                }
            }
        }
        coef
    }

    /// Per-point coefficient table (n*n*Q) of the Hessian at base point `b`.
    pub fn hessian_table(&self, base: usize) -> &[C64] {
        if self.r == 0 {
            &self.hess[0]
        } else {
            &self.hess[base]
        }
    }

    /// All partial derivatives listed in `partial_list`, as whole-grid fields.
    pub fn partials(&self, phi: &[f64]) -> Vec<Vec<f64>> {
        let d = self.grid.dim();
        let first: Vec<Vec<f64>> = (0..d).map(|k| self.deriv.d1(k, phi)).collect();
        self.partials
            .iter()
            .map(|p| match *p {
                Partial::First(l) => first[l].clone(),
                Partial::Second(a, b) if a == b => self.deriv.d2(a, phi),
                Partial::Second(a, b) => self.deriv.d1(a, &first[b]),
            })
            .collect()
    }

    /// Complex Hessian matrix at one point from precomputed partials.
    pub fn hessian_at(&self, idx: usize, partials: &[Vec<f64>], out: &mut [C64]) {
        let n = self.n();
        let q = self.partials.len();
        let table = self.hessian_table(self.base_of(idx));
        for ab in 0..n * n {
            let row = &table[ab * q..(ab + 1) * q];
            let mut s = C64::new(0.0, 0.0);
            for (c, p) in row.iter().zip(partials) {
                s += c * p[idx];
            }
            out[ab] = s;
        }
    }

    /// Real coframe rows `e^a(d/du_p)`, n x d.
    pub fn coframe(&self, idx: usize) -> Vec<C64> {
        let n = self.n();
        let d = self.grid.dim();
        let mut th = vec![C64::new(0.0, 0.0); n * d];
        for k in 0..self.m {
            th[k * d + 2 * k] = C64::new(1.0, 0.0);
            th[k * d + 2 * k + 1] = C64::new(0.0, 1.0);
        }
        if self.r > 0 {
            let fr = &self.frames[self.base_of(idx)];
            let w = 2 * self.r;
            for i in 0..self.r {
                for l in 0..w {
                    th[(self.m + i) * d + 2 * self.m + l] = fr.theta[i * w + l];
                }
            }
        }
        th
    }

    /// Riemannian metric `Re(Theta^T h conj(Theta))` in grid coordinates.
    pub fn real_metric(&self, idx: usize, h: &[C64]) -> Vec<f64> {
        let n = self.n();
        let d = self.grid.dim();
        let th = self.coframe(idx);
        let mut out = vec![0.0; d * d];
        for p in 0..d {
            for qq in p..d {
                let mut s = C64::new(0.0, 0.0);
                for a in 0..n {
                    let tap = th[a * d + p];
                    if tap == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..n {
                        s += tap * h[a * n + b] * th[b * d + qq].conj();
                    }
                }
                out[p * d + qq] = s.re;
                out[qq * d + p] = s.re;
            }
        }
        out
    }
}
