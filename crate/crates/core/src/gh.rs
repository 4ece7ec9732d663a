//! Graph geodesics on grid charts, section correspondences and their
//! distortion, geodesic ball volumes and fiber diameters.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Chart, HermitianField, Region, POSITIVITY_FLOOR};
use crate::grid::Grid;
use crate::linalg;
use crate::par;

/// Finite distances between sampled grid points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSample {
    pub points: Vec<usize>,
    /// Row-major `k x k`.
    pub dist: Vec<f64>,
    pub description: String,
}

impl MetricSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Largest violation of symmetry, zero diagonal or the triangle inequality.
    pub fn metric_defect(&self) -> f64 {
        let k = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            worst = worst.max(self.d(i, i).abs());
            for j in 0..k {
                worst = worst.max((self.d(i, j) - self.d(j, i)).abs());
                for l in 0..k {
                    worst = worst.max(self.d(i, l) - self.d(i, j) - self.d(j, l));
                }
            }
        }
        worst
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }
}

/// Pairs `(x index, y index)` between two samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
    pub covered_x: Vec<bool>,
    pub covered_y: Vec<bool>,
}

impl Correspondence {
    pub fn new(pairs: Vec<(usize, usize)>, nx: usize, ny: usize) -> Result<Self> {
        let mut covered_x = vec![false; nx];
        let mut covered_y = vec![false; ny];
        for &(i, j) in &pairs {
            if i >= nx || j >= ny {
                return Err(Error::Shape(format!("pair ({i}, {j}) outside samples of size {nx}, {ny}")));
            }
            covered_x[i] = true;
            covered_y[j] = true;
        }
        Ok(Correspondence { pairs, covered_x, covered_y })
    }

    pub fn is_total(&self) -> bool {
        self.covered_x.iter().chain(&self.covered_y).all(|c| *c)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Neighbor offsets: order 1 is `{-1,0,1}^d \ 0`; order 2 adds every primitive
/// offset with entries in `[-2, 2]`.
pub fn stencil(d: usize, order: u8) -> Result<Vec<Vec<i64>>> {
    let reach: i64 = match order {
        1 => 1,
        2 => 2,
        _ => return Err(Error::Config(format!("stencil order must be 1 or 2, got {order}"))),
    };
    let side = (2 * reach + 1) as usize;
    let mut out = Vec::new();
    for code in 0..side.pow(d as u32) {
        let mut c = code;
        let off: Vec<i64> = (0..d)
            .map(|_| {
                let v = (c % side) as i64 - reach;
                c /= side;
                v
            })
            .collect();
        if off.iter().fold(0, |g, &v| gcd(g, v)) == 1 {
            out.push(off);
        }
    }
    Ok(out)
}

/// Weighted grid graph; each node carries a real metric in grid coordinates.
pub struct GridGraph {
    grid: Grid,
    metric: Vec<f64>,
    offsets: Vec<Vec<i64>>,
    steps: Vec<Vec<f64>>,
}

impl GridGraph {
    /// `metric` holds `len * d * d` entries, row-major per node.
    pub fn new(grid: Grid, metric: Vec<f64>, order: u8) -> Result<Self> {
        let d = grid.dim();
        if metric.len() != grid.len() * d * d {
            return Err(Error::Shape("graph metric size".into()));
        }
        for (i, g) in metric.chunks(d * d).enumerate() {
            let ev = linalg::real_sym_eigvals(g, d);
            if !(ev[0] > POSITIVITY_FLOOR) {
                return Err(Error::Positivity(format!("graph metric at node {i}: min eig {:e}", ev[0])));
            }
        }
        let offsets = stencil(d, order)?;
        let h: Vec<f64> = grid.axes.iter().map(|a| a.spacing()).collect();
        let steps = offsets.iter().map(|o| o.iter().zip(&h).map(|(k, s)| *k as f64 * s).collect()).collect();
        Ok(GridGraph { grid, metric, offsets, steps })
    }

    /// Graph of `chart` under the Hermitian field `g`.
    pub fn from_field(chart: &Chart, g: &HermitianField, order: u8) -> Result<Self> {
        chart.grid.check_same(&g.grid)?;
        let metric = (0..chart.grid.len()).flat_map(|i| chart.real_metric(i, g.at(i))).collect();
        GridGraph::new(chart.grid.clone(), metric, order)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn neighbor(&self, mi: &[usize], off: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for (k, a) in self.grid.axes.iter().enumerate() {
            let n = a.n as i64;
            let mut v = mi[k] as i64 + off[k];
            if a.is_periodic() {
                v = v.rem_euclid(n);
            } else if v < 0 || v >= n {
                return None;
            }
            idx = idx * a.n + v as usize;
        }
        Some(idx)
    }

    fn quad(&self, node: usize, v: &[f64]) -> f64 {
        let d = v.len();
        let g = &self.metric[node * d * d..(node + 1) * d * d];
        linalg::quad_form(g, v, v)
    }

    /// Shortest path lengths from `src`; stops once every node in `targets` is settled.
    pub fn dijkstra(&self, src: usize, targets: Option<&[usize]>) -> Vec<f64> {
        self.search(src, targets, f64::INFINITY)
    }

    /// Shortest path lengths from `src`, exact below `radius`; every other entry is `>= radius`.
    pub fn dijkstra_within(&self, src: usize, radius: f64) -> Vec<f64> {
        self.search(src, None, radius)
    }

    fn search(&self, src: usize, targets: Option<&[usize]>, radius: f64) -> Vec<f64> {
        let len = self.grid.len();
        let mut dist = vec![f64::INFINITY; len];
        let mut done = vec![false; len];
        let mut wanted: Vec<bool> = vec![false; len];
        let mut remaining = match targets {
            Some(t) => {
                for &i in t {
                    if !wanted[i] {
                        wanted[i] = true;
                    }
                }
                wanted.iter().filter(|w| **w).count()
            }
            None => len,
        };
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Entry(0.0, src));
        while let Some(Entry(du, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            if du >= radius {
                break;
            }
            done[u] = true;
            if targets.is_none() || wanted[u] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            let mi = self.grid.multi_index(u);
            for (off, step) in self.offsets.iter().zip(&self.steps) {
                let Some(v) = self.neighbor(&mi, off) else { continue };
                if done[v] {
                    continue;
                }
                let w = (0.5 * (self.quad(u, step) + self.quad(v, step))).sqrt();
                let nd = du + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
        dist
    }

    /// Pairwise distances between `points`, symmetrized.
    pub fn sample(&self, points: &[usize], description: &str) -> Result<MetricSample> {
        let len = self.grid.len();
        if let Some(p) = points.iter().find(|&&p| p >= len) {
            return Err(Error::Domain(format!("sample point {p} outside the grid")));
        }
        let k = points.len();
        let rows = par::map_range(k, |i| {
            let d = self.dijkstra(points[i], Some(points));
            points.iter().map(|&p| d[p]).collect::<Vec<f64>>()
        });
        let mut dist = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                dist[i * k + j] = if i == j { 0.0 } else { 0.5 * (rows[i][j] + rows[j][i]) };
            }
        }
        Ok(MetricSample { points: points.to_vec(), dist, description: description.to_string() })
    }
}

/// Graph distances between `points` of `chart` under `g`.
pub fn geodesic_distances(chart: &Chart, g: &HermitianField, points: &[usize], stencil_order: u8) -> Result<MetricSample> {
    GridGraph::from_field(chart, g, stencil_order)?.sample(points, &format!("graph geodesics, stencil order {stencil_order}, grid {:?}", chart.grid.shape()))
}

/// Zero-section images of base points, with the identity correspondence.
#[derive(Clone, Debug)]
pub struct SectionSample {
    pub correspondence: Correspondence,
    pub base_points: Vec<usize>,
    pub total_points: Vec<usize>,
}

/// Pairs each base point `y` with the total-space node `(y, x = 0)`.
pub fn section_correspondence(chart: &Chart, trusted: &Region, base_grid: &Grid, base_points: &[usize]) -> Result<SectionSample> {
    for &b in base_points {
        if b >= base_grid.len() || !trusted.contains(base_grid, b) {
            return Err(Error::Domain(format!("base point {b} outside the trusted region")));
        }
    }
    let fl = chart.fiber_len();
    let total_points = base_points.iter().map(|b| b * fl).collect();
    let k = base_points.len();
    let correspondence = Correspondence::new((0..k).map(|i| (i, i)).collect(), k, k)?;
    Ok(SectionSample { correspondence, base_points: base_points.to_vec(), total_points })
}

/// `max |dX(i, i') - dY(j, j')|` over pairs of pairs; the GH bound is half of it.
pub fn distortion(corr: &Correspondence, dx: &MetricSample, dy: &MetricSample) -> Result<f64> {
    if corr.covered_x.len() != dx.len() || corr.covered_y.len() != dy.len() {
        return Err(Error::Shape("correspondence does not match the samples".into()));
    }
    if !corr.is_total() {
        return Err(Error::Coverage("correspondence is not total".into()));
    }
    let mut worst: f64 = 0.0;
    for &(i, j) in &corr.pairs {
        for &(i2, j2) in &corr.pairs {
            worst = worst.max((dx.d(i, i2) - dy.d(j, j2)).abs());
        }
    }
    Ok(worst)
}

/// Smallest `dX - e^{-eps/2} dY` over corresponding pairs.
pub fn lower_sandwich_margin(corr: &Correspondence, dx: &MetricSample, dy: &MetricSample, eps: f64) -> f64 {
    let s = (-0.5 * eps).exp();
    let mut worst = f64::INFINITY;
    for &(i, j) in &corr.pairs {
        for &(i2, j2) in &corr.pairs {
            if i != i2 {
                worst = worst.min(dx.d(i, i2) - s * dy.d(j, j2));
            }
        }
    }
    worst
}

/// Largest error of graph distances under the constant metric `g` on the base sample,
/// against exact straight-line distances (minimized over periodic images).
pub fn flat_calibration(base_grid: &Grid, g: &[f64], points: &[usize], order: u8) -> Result<f64> {
    let d = base_grid.dim();
    let metric = (0..base_grid.len()).flat_map(|_| g.iter().cloned()).collect();
    let graph = GridGraph::new(base_grid.clone(), metric, order)?;
    let s = graph.sample(points, "flat calibration")?;
    let mut worst: f64 = 0.0;
    for (i, &p) in points.iter().enumerate() {
        for (j, &q) in points.iter().enumerate() {
            let (a, b) = (base_grid.point(p), base_grid.point(q));
            let mut best = f64::INFINITY;
            let images: Vec<Vec<f64>> = base_grid.axes.iter().map(|ax| if ax.is_periodic() { vec![-ax.length(), 0.0, ax.length()] } else { vec![0.0] }).collect();
            let count: usize = images.iter().map(|v| v.len()).product();
            for code in 0..count {
                let mut c = code;
                let v: Vec<f64> = (0..d)
                    .map(|k| {
                        let sh = images[k][c % images[k].len()];
                        c /= images[k].len();
                        b[k] - a[k] + sh
                    })
                    .collect();
                best = best.min(linalg::quad_form(g, &v, &v).sqrt());
            }
            worst = worst.max((s.d(i, j) - best).abs());
        }
    }
    Ok(worst)
}

/// Riemannian volume of the nodes at distance `< r`, with node quadrature weights.
pub fn ball_volume(chart: &Chart, g: &HermitianField, dist: &[f64], r: f64) -> f64 {
    let w = chart.grid.weights();
    let det = g.det();
    (0..chart.grid.len()).filter(|&i| dist[i] < r).map(|i| w[i] * det[i] * chart.jacobian(i)).sum()
}

fn check_ball(chart: &Chart, trusted: &Region, base_grid: &Grid, dist: &[f64], r: f64) -> Result<()> {
    for (i, d) in dist.iter().enumerate() {
        if *d < r && !trusted.contains(base_grid, chart.base_of(i)) {
            return Err(Error::Domain(format!("ball of radius {r} leaves the trusted region")));
        }
    }
    Ok(())
}

/// `Vol(B(p, r)) / Vol(B(pbar, rbar))` under `g`.
#[allow(clippy::too_many_arguments)]
pub fn ball_volume_ratio(chart: &Chart, g: &HermitianField, trusted: &Region, base_grid: &Grid, p: usize, r: f64, pbar: usize, rbar: f64, order: u8) -> Result<f64> {
    if r < 0.0 || !(rbar > 0.0) {
        return Err(Error::Domain("radii must be nonnegative and rbar positive".into()));
    }
    let graph = GridGraph::from_field(chart, g, order)?;
    let dp = graph.dijkstra_within(p, r);
    check_ball(chart, trusted, base_grid, &dp, r)?;
    let num = ball_volume(chart, g, &dp, r);
    let den = if p == pbar && r == rbar {
        num
    } else {
        let dq = graph.dijkstra_within(pbar, rbar);
        check_ball(chart, trusted, base_grid, &dq, rbar)?;
        ball_volume(chart, g, &dq, rbar)
    };
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// `int_{f^-1(B_omega(y, r))} omega_M^n / int_{f^-1(B_omega(ybar, rbar))} omega_M^n`.
#[allow(clippy::too_many_arguments)]
pub fn volume_ratio_prediction(chart: &Chart, omega_m: &HermitianField, base_chart: &Chart, omega: &HermitianField, y: usize, r: f64, ybar: usize, rbar: f64, order: u8) -> Result<f64> {
    let graph = GridGraph::from_field(base_chart, omega, order)?;
    let w = chart.grid.weights();
    let det = omega_m.det();
    let fl = chart.fiber_len();
    let mass: Vec<f64> = (0..chart.base_len()).map(|b| (b * fl..(b + 1) * fl).map(|i| w[i] * det[i] * chart.jacobian(i)).sum()).collect();
    let vol = |src: usize, rad: f64| -> f64 {
        let d = graph.dijkstra_within(src, rad);
        (0..mass.len()).filter(|&b| d[b] < rad).map(|b| mass[b]).sum()
    };
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(vol(y, r) / vol(ybar, rbar))
}

/// Diameter of the fiber over base node `b` under the restriction of `g`.
pub fn fiber_diameter(chart: &Chart, g: &HermitianField, b: usize, order: u8) -> Result<f64> {
    if b >= chart.base_len() {
        return Err(Error::Domain(format!("base index {b} outside the chart")));
    }
    let d = chart.grid.dim();
    let fb = 2 * chart.m;
    let w = d - fb;
    let fl = chart.fiber_len();
    let mut metric = Vec::with_capacity(fl * w * w);
    for i in b * fl..(b + 1) * fl {
        let full = chart.real_metric(i, g.at(i));
        for p in 0..w {
            for q in 0..w {
                metric.push(full[(fb + p) * d + fb + q]);
            }
        }
    }
    let graph = GridGraph::new(chart.grid.sub(fb..d), metric, order)?;
    let far = par::map_range(fl, |s| graph.dijkstra(s, None).into_iter().fold(0.0, f64::max));
    Ok(far.into_iter().fold(0.0, f64::max))
}

/// Diameter of `R^k / L` under the constant metric `g`, by brute force over the
/// translates in `[-2, 2]^k` of points sampled on a `samples^k` grid of the cell.
pub fn flat_torus_diameter(basis: &[Vec<f64>], g: &[f64], samples: usize) -> f64 {
    let k = basis.len();
    let dist = |x: &[f64]| -> f64 {
        let mut best = f64::INFINITY;
        for code in 0..5usize.pow(k as u32) {
            let mut c = code;
            let mut v = vec![0.0; k];
            for (j, _) in basis.iter().enumerate() {
                let n = (c % 5) as f64 - 2.0;
                c /= 5;
                for (l, vl) in v.iter_mut().enumerate() {
                    *vl += (x[j] - n) * basis[j][l];
                }
            }
            best = best.min(linalg::quad_form(g, &v, &v).sqrt());
        }
        best
    };
    let mut worst: f64 = 0.0;
    for code in 0..samples.pow(k as u32) {
        let mut c = code;
        let x: Vec<f64> = (0..k)
            .map(|_| {
                let v = (c % samples) as f64 / samples as f64;
                c /= samples;
                v
            })
            .collect();
        worst = worst.max(dist(&x));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn flat_graph(n: usize, order: u8, scale: f64) -> GridGraph {
        let g = Grid::new(vec![Axis::dirichlet(n, 0.0, 1.0), Axis::dirichlet(n, 0.0, 1.0)]).unwrap();
        let metric = (0..g.len()).flat_map(|_| [scale, 0.0, 0.0, scale]).collect();
        GridGraph::new(g, metric, order).unwrap()
    }

    #[test]
    fn stencil_sizes() {
        assert_eq!(stencil(2, 1).unwrap().len(), 8);
        assert_eq!(stencil(2, 2).unwrap().len(), 16);
        assert_eq!(stencil(4, 1).unwrap().len(), 80);
        assert!(stencil(2, 3).is_err());
    }

    #[test]
    fn flat_axis_pair_is_exact() {
        let gr = flat_graph(21, 1, 1.0);
        let d = gr.dijkstra(gr.grid().index(&[2, 3]), None);
        assert!((d[gr.grid().index(&[2, 17])] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn octile_bounds() {
        let n = 41;
        for (order, bound) in [(1u8, 0.0824), (2, 0.0279)] {
            let gr = flat_graph(n, order, 1.0);
            let d = gr.dijkstra(0, None);
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i + j > 0 {
                        let e = ((i * i + j * j) as f64).sqrt() / (n - 1) as f64;
                        let rel = d[gr.grid().index(&[i, j])] / e - 1.0;
                        assert!(rel > -1e-12);
                        worst = worst.max(rel);
                    }
                }
            }
            assert!(worst <= bound, "order {order}: {worst}");
            assert!(worst > 0.5 * bound);
        }
    }

    #[test]
    fn scaling_metric_by_four_doubles_distances() {
        let a = flat_graph(11, 2, 1.3).sample(&[0, 17, 60, 120], "a").unwrap();
        let b = flat_graph(11, 2, 5.2).sample(&[0, 17, 60, 120], "b").unwrap();
        for (x, y) in a.dist.iter().zip(&b.dist) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        assert!(a.metric_defect() < 1e-10);
    }

    #[test]
    fn distortion_examples() {
        let a = flat_graph(11, 2, 1.0).sample(&[0, 17, 60, 120], "a").unwrap();
        let id = Correspondence::new((0..4).map(|i| (i, i)).collect(), 4, 4).unwrap();
        assert_eq!(distortion(&id, &a, &a).unwrap(), 0.0);
        let delta = 0.03;
        let mut b = a.clone();
        b.dist.iter_mut().for_each(|v| *v *= 1.0 + delta);
        assert!((distortion(&id, &b, &a).unwrap() - delta * a.diameter()).abs() < 1e-14);
        let partial = Correspondence::new(vec![(0, 0), (1, 1)], 4, 4).unwrap();
        assert!(matches!(distortion(&partial, &a, &a), Err(Error::Coverage(_))));
    }

    #[test]
    fn brute_force_square_torus() {
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = flat_torus_diameter(&basis, &[1.0, 0.0, 0.0, 1.0], 8);
        assert!((d - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn periodic_wrap_shortens_paths() {
        let g = Grid::new(vec![Axis::periodic(10, 1.0)]).unwrap();
        let gr = GridGraph::new(g, vec![1.0; 10], 1).unwrap();
        let d = gr.dijkstra(0, None);
        assert!((d[9] - 0.1).abs() < 1e-15);
        assert!((d[5] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_metric() {
        let g = Grid::new(vec![Axis::periodic(4, 1.0)]).unwrap();
        assert!(matches!(GridGraph::new(g, vec![1.0, 1.0, -1.0, 1.0], 1), Err(Error::Positivity(_))));
    }
}
