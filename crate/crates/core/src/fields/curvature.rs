//! Riemann tensor of the Riemannian metric `g_R = Re(Theta^T h conj(Theta))`
//! in grid coordinates. Grid coordinates keep every coefficient periodic on
//! periodic axes, so spectral derivatives apply directly.

use crate::error::{Error, Result};
use crate::fields::{Chart, HermitianField};
use crate::linalg;

pub struct CurvatureField {
    d: usize,
    comps: Vec<(usize, usize)>,
    val: Vec<Vec<f64>>,
    d1: Vec<Vec<Vec<f64>>>,
    d2: Vec<Vec<Vec<f64>>>,
}

fn comp_index(d: usize, p: usize, q: usize) -> usize {
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    p * d - p * (p + 1) / 2 + q
}

fn pair_index(d: usize, k: usize, l: usize) -> usize {
    comp_index(d, k, l)
}

impl CurvatureField {
    pub fn new(chart: &Chart, g: &HermitianField) -> Result<Self> {
        chart.grid.check_same(&g.grid)?;
        let d = chart.grid.dim();
        let npts = chart.grid.len();
        let mut comps = Vec::new();
        for p in 0..d {
            for q in p..d {
                comps.push((p, q));
            }
        }
        let mut val = vec![vec![0.0; npts]; comps.len()];
        for idx in 0..npts {
            let gr = chart.real_metric(idx, g.at(idx));
            for (c, &(p, q)) in comps.iter().enumerate() {
                val[c][idx] = gr[p * d + q];
            }
        }
        let deriv = chart.deriv();
        let d1: Vec<Vec<Vec<f64>>> = val.iter().map(|v| (0..d).map(|k| deriv.d1(k, v)).collect()).collect();
        let d2: Vec<Vec<Vec<f64>>> = val
            .iter()
            .zip(&d1)
            .map(|(v, first)| {
                let mut out = Vec::new();
                for k in 0..d {
                    for l in k..d {
                        out.push(if k == l { deriv.d2(k, v) } else { deriv.d1(k, &first[l]) });
                    }
                }
                out
            })
            .collect();
        Ok(CurvatureField { d, comps, val, d1, d2 })
    }

    pub fn metric_at(&self, idx: usize) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; d * d];
        for (c, &(p, q)) in self.comps.iter().enumerate() {
            g[p * d + q] = self.val[c][idx];
            g[q * d + p] = self.val[c][idx];
        }
        g
    }

    /// Fully covariant `R_{iklm}` at a point, d^4 row-major.
    pub fn riemann_at(&self, idx: usize) -> Result<Vec<f64>> {
        let d = self.d;
        let g = self.metric_at(idx);
        let ginv = linalg::real_inverse(&g, d).ok_or_else(|| Error::Positivity(format!("singular metric at {idx}")))?;
        let dg = |k: usize, p: usize, q: usize| self.d1[comp_index(d, p, q)][k][idx];
        let ddg = |k: usize, l: usize, p: usize, q: usize| self.d2[comp_index(d, p, q)][pair_index(d, k, l)][idx];
        // Gamma_{p,kl} lowered, then raised.
        let mut low = vec![0.0; d * d * d];
        for p in 0..d {
            for k in 0..d {
                for l in 0..d {
                    low[(p * d + k) * d + l] = 0.5 * (dg(k, p, l) + dg(l, p, k) - dg(p, k, l));
                }
            }
        }
        let mut up = vec![0.0; d * d * d];
        for mm in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut s = 0.0;
                    for p in 0..d {
                        s += ginv[mm * d + p] * low[(p * d + k) * d + l];
                    }
                    up[(mm * d + k) * d + l] = s;
                }
            }
        }
        let mut r = vec![0.0; d * d * d * d];
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        let mut s = 0.5 * (ddg(k, l, i, m) + ddg(i, m, k, l) - ddg(k, m, i, l) - ddg(i, l, k, m));
                        for nn in 0..d {
                            s += low[(nn * d + i) * d + m] * up[(nn * d + k) * d + l] - low[(nn * d + i) * d + l] * up[(nn * d + k) * d + m];
                        }
                        r[((i * d + k) * d + l) * d + m] = s;
                    }
                }
            }
        }
        Ok(r)
    }

    /// Sectional curvature of span(x, y) from a precomputed tensor.
    pub fn sectional_from(&self, riem: &[f64], g: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.d;
        let gram = linalg::quad_form(g, x, x) * linalg::quad_form(g, y, y) - linalg::quad_form(g, x, y).powi(2);
        if gram < 1e-10 {
            return Err(Error::DegeneratePlane(gram));
        }
        let mut s = 0.0;
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for k in 0..d {
                if y[k] == 0.0 {
                    continue;
                }
                for l in 0..d {
                    if x[l] == 0.0 {
                        continue;
                    }
                    for m in 0..d {
                        s += riem[((i * d + k) * d + l) * d + m] * x[i] * y[k] * x[l] * y[m];
                    }
                }
            }
        }
        Ok(s / gram)
    }

    pub fn sectional(&self, idx: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        let riem = self.riemann_at(idx)?;
        self.sectional_from(&riem, &self.metric_at(idx), x, y)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// Sectional curvature of the Kahler metric `g` at grid point `p` on span(x, y),
/// with `x, y` real tangent vectors in grid coordinates.
pub fn riemann_sectional(chart: &Chart, g: &HermitianField, p: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    let d = chart.grid.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::Shape(format!("plane vectors must have {d} components")));
    }
    let gr = chart.real_metric(p, g.at(p));
    let gram = linalg::quad_form(&gr, x, x) * linalg::quad_form(&gr, y, y) - linalg::quad_form(&gr, x, y).powi(2);
    if gram < 1e-10 {
        return Err(Error::DegeneratePlane(gram));
    }
    CurvatureField::new(chart, g)?.sectional(p, x, y)
}
