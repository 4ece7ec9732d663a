use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// `n` samples of one period `[lo, hi)`, endpoint not duplicated.
    Periodic,
    /// `n` nodes on `[lo, hi]` including both boundary nodes.
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n: usize,
    pub kind: AxisKind,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn periodic(n: usize, length: f64) -> Self {
        Axis { n, kind: AxisKind::Periodic, lo: 0.0, hi: length }
    }

    pub fn dirichlet(n: usize, lo: f64, hi: f64) -> Self {
        Axis { n, kind: AxisKind::Dirichlet, lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn spacing(&self) -> f64 {
        match self.kind {
            AxisKind::Periodic => self.length() / self.n as f64,
            AxisKind::Dirichlet => self.length() / (self.n - 1) as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == AxisKind::Periodic
    }

    /// Quadrature weights: uniform on periodic axes (spectrally exact), fourth-order
    /// Gregory end corrections on Dirichlet axes.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        match self.kind {
            AxisKind::Periodic => vec![h; self.n],
            AxisKind::Dirichlet => {
                let n = self.n;
                let mut w = vec![h; n];
                if n >= 8 {
                    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
                    for (k, e) in ends.iter().enumerate() {
                        w[k] = h * e;
                        w[n - 1 - k] = h * e;
                    }
                } else {
                    w[0] = 0.5 * h;
                    w[n - 1] = 0.5 * h;
                }
                w
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length() > 0.0) {
            return Err(Error::Shape("axis length must be positive".into()));
        }
        let min = match self.kind {
            AxisKind::Periodic => 2,
            AxisKind::Dirichlet => 6,
        };
        if self.n < min {
            return Err(Error::Shape(format!("axis needs at least {min} points, got {}", self.n)));
        }
        Ok(())
    }
}

/// Tensor grid, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Shape("grid needs at least one axis".into()));
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(Grid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.n).product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (k, &i) in multi.iter().enumerate() {
            idx = idx * self.axes[k].n + i;
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.axes[k].n;
            idx /= self.axes[k].n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().enumerate().map(|(k, &i)| self.axes[k].coord(i)).collect()
    }

    /// Sub-grid made of a contiguous range of axes.
    pub fn sub(&self, axes: std::ops::Range<usize>) -> Grid {
        Grid { axes: self.axes[axes].to_vec() }
    }

    /// Tensor-product quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        let per: Vec<Vec<f64>> = self.axes.iter().map(|a| a.weights()).collect();
        (0..self.len())
            .map(|idx| self.multi_index(idx).iter().enumerate().map(|(k, &i)| per[k][i]).product())
            .collect()
    }

    /// Offsets of the first element of every line along `axis`.
    pub fn line_starts(&self, axis: usize) -> Vec<usize> {
        let s = self.stride(axis);
        let n = self.axes[axis].n;
        let outer = self.len() / (n * s);
        let mut out = Vec::with_capacity(outer * s);
        for o in 0..outer {
            for i in 0..s {
                out.push(o * n * s + i);
            }
        }
        out
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Real scalar samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        GridField { values: vec![0.0; grid.len()], grid: grid.clone() }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridField { grid: grid.clone(), values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn lincomb(a: f64, x: &GridField, b: f64, y: &GridField) -> Result<Self> {
        x.grid.check_same(&y.grid)?;
        let values = x.values.iter().zip(&y.values).map(|(p, q)| a * p + b * q).collect();
        Ok(GridField { grid: x.grid.clone(), values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }
}
