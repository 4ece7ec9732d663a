//! Browser bindings for a few cheap collapselab computations.
//!
//! Every op returns a JSON string so the page can render it without extra glue,
//! and so the same functions run unchanged in native tests.

use collapselab::gh::{flat_torus_diameter, GridGraph};
use collapselab::grid::{Axis, Grid};
use collapselab::hk::{self, BBLattice, Cx, CVec, MirrorData};
use collapselab::model::FibrationModel;
use num_complex::Complex64 as C64;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Basis order `(e1, f1, e2, f2)`.
const UU_GRAM: [i64; 16] = [0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0];
const DIAMETER_SAMPLES: usize = 16;
const MAX_GRID: usize = 256;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Mirror period of `alpha = re + i im` on `U + U` with `E = e1`, `sigma = e1 + f1`.
#[wasm_bindgen]
pub fn mirror_period(re: Vec<f64>, im: Vec<f64>) -> Result<String, String> {
    if re.len() != 4 || im.len() != 4 {
        return Err("alpha needs four real and four imaginary coordinates".into());
    }
    let lat = BBLattice::new(UU_GRAM.to_vec(), 4).map_err(err)?;
    let data = MirrorData::new(lat.clone(), vec![1, 0, 0, 0], vec![1.0, 1.0, 0.0, 0.0], 1e-12).map_err(err)?;
    let alpha: CVec<f64> = re.iter().zip(&im).map(|(&x, &y)| Cx::new(x, y)).collect();
    let m = data.mirror_map(&alpha).map_err(err)?;
    let pc = hk::in_period_domain(&lat, &m).map_err(err)?;
    let again = data.mirror_map(&data.inverse_mirror(&m).map_err(err)?.representative).map_err(err)?;
    let round_trip = again.iter().zip(&m).map(|(x, y)| x.sub(y).abs_f64()).fold(0.0, f64::max);
    Ok(json!({
        "period_re": hk::re(&m),
        "period_im": hk::im(&m),
        "in_period_domain": pc.member,
        "abs_q": pc.q_abs,
        "q_conj": pc.q_conj,
        "two_q_im_alpha": 2.0 * lat.q_real(&im, &im).map_err(err)?,
        "round_trip": round_trip,
    })
    .to_string())
}

/// Fiber over `y` in the Dirichlet family with slope `eps`, scaled by `t`.
#[wasm_bindgen]
pub fn fiber_geometry(eps: f64, y_re: f64, y_im: f64, t: f64) -> Result<String, String> {
    if !(t > 0.0 && t.is_finite()) {
        return Err("t must be positive".into());
    }
    let model = FibrationModel::family_b(eps, 8, 8, None);
    model.validate().map_err(err)?;
    let y = [C64::new(y_re, y_im)];
    let z = model.period_at(&y).map_err(err)?[0];
    let g = t / z.im;
    // fiber is C / (Z + Z z) with the real metric g |dz|^2
    let diameter = flat_torus_diameter(&[vec![1.0, 0.0], vec![z.re, z.im]], &[g, 0.0, 0.0, g], DIAMETER_SAMPLES);
    Ok(json!({
        "period": [z.re, z.im],
        "fiber_metric": g,
        "fiber_area": g * z.im,
        "diameter": diameter,
        "diameter_over_sqrt_t": diameter / t.sqrt(),
    })
    .to_string())
}

/// Graph distance on an `n x n` unit torus with constant metric `[[a, b], [b, c]]`
/// from the origin to node `(qx, qy)`, against the exact flat distance.
#[wasm_bindgen]
pub fn stencil_distance(n: usize, a: f64, b: f64, c: f64, qx: usize, qy: usize, order: u8) -> Result<String, String> {
    if !(4..=MAX_GRID).contains(&n) {
        return Err(format!("n must lie in 4..={MAX_GRID}"));
    }
    if qx >= n || qy >= n {
        return Err("target outside the grid".into());
    }
    let grid = Grid::new(vec![Axis::periodic(n, 1.0), Axis::periodic(n, 1.0)]).map_err(err)?;
    let q = grid.index(&[qx, qy]);
    let metric: Vec<f64> = (0..grid.len()).flat_map(|_| [a, b, b, c]).collect();
    let graph = GridGraph::new(grid, metric, order).map_err(err)?;
    let approx = graph.dijkstra(0, Some(&[q]))[q];
    let (dx, dy) = (qx as f64 / n as f64, qy as f64 / n as f64);
    let exact = (-1..=1)
        .flat_map(|i| (-1..=1).map(move |j| (dx - i as f64, dy - j as f64)))
        .map(|(u, v)| (a * u * u + 2.0 * b * u * v + c * v * v).sqrt())
        .fold(f64::INFINITY, f64::min);
    let relative_error = if exact > 0.0 { approx / exact - 1.0 } else { 0.0 };
    Ok(json!({ "graph": approx, "exact": exact, "relative_error": relative_error }).to_string())
}
