//! Small dense kernels on row-major slices. Sizes here are the complex dimension
//! of a chart or the real dimension of its grid, so everything is O(n^3) with tiny n.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> Vec<C64> {
    let mut a = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        a[i * n + i] = C64::new(1.0, 0.0);
    }
    a
}

pub fn matmul(a: &[C64], b: &[C64], n: usize, k: usize, m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * m];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    out
}

pub fn adjoint(a: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j].conj();
        }
    }
    out
}

pub fn transpose(a: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// LU with partial pivoting; returns (lu, perm, sign) or None when singular.
fn lu(a: &[C64], n: usize) -> Option<(Vec<C64>, Vec<usize>, f64)> {
    let mut m = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = m[k * n + k].norm();
        for i in k + 1..n {
            let v = m[i * n + k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let piv = m[k * n + k];
        for i in k + 1..n {
            let f = m[i * n + k] / piv;
            m[i * n + k] = f;
            for j in k + 1..n {
                let t = m[k * n + j];
                m[i * n + j] -= f * t;
            }
        }
    }
    Some((m, perm, sign))
}

pub fn det(a: &[C64], n: usize) -> C64 {
    match n {
        0 => C64::new(1.0, 0.0),
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => match lu(a, n) {
            None => C64::new(0.0, 0.0),
            Some((m, _, sign)) => {
                let mut d = C64::new(sign, 0.0);
                for i in 0..n {
                    d *= m[i * n + i];
                }
                d
            }
        },
    }
}

pub fn inverse(a: &[C64], n: usize) -> Option<Vec<C64>> {
    if n == 1 {
        if a[0] == C64::new(0.0, 0.0) {
            return None;
        }
        return Some(vec![a[0].inv()]);
    }
    if n == 2 {
        let d = a[0] * a[3] - a[1] * a[2];
        if d.norm() == 0.0 {
            return None;
        }
        let di = d.inv();
        return Some(vec![a[3] * di, -a[1] * di, -a[2] * di, a[0] * di]);
    }
    let (m, perm, _) = lu(a, n)?;
    let mut inv = vec![C64::new(0.0, 0.0); n * n];
    for col in 0..n {
        let mut x: Vec<C64> = (0..n)
            .map(|i| if perm[i] == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .collect();
        for i in 0..n {
            for j in 0..i {
                let t = m[i * n + j] * x[j];
                x[i] -= t;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let t = m[i * n + j] * x[j];
                x[i] -= t;
            }
            x[i] /= m[i * n + i];
        }
        for i in 0..n {
            inv[i * n + col] = x[i];
        }
    }
    Some(inv)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn herm_eigvals(a: &[C64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![a[0].re],
        2 => {
            let p = 0.5 * (a[0].re + a[3].re);
            let q = 0.5 * (a[0].re - a[3].re);
            let r = (q * q + a[1].norm_sqr()).sqrt();
            vec![p - r, p + r]
        }
        _ => {
            let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i * n + j] + a[j * n + i].conj()));
            let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev
        }
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(a: &[C64], n: usize) -> Option<Vec<C64>> {
    let mut l = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Eigenvalues of the pencil (g, h): solutions of det(g - lambda h) = 0 with h > 0.
pub fn pencil_eigvals(g: &[C64], h: &[C64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(h, n)?;
    let linv = lower_inverse(&l, n);
    let t = matmul(&matmul(&linv, g, n, n, n), &adjoint(&linv, n, n), n, n, n);
    Some(herm_eigvals(&t, n))
}

fn lower_inverse(l: &[C64], n: usize) -> Vec<C64> {
    let mut inv = vec![C64::new(0.0, 0.0); n * n];
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for k in col..i {
                s -= l[i * n + k] * inv[k * n + col];
            }
            inv[i * n + col] = s / l[i * n + i];
        }
    }
    inv
}

pub fn max_abs(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_defect(a: &[C64], n: usize) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            d = d.max((a[i * n + j] - a[j * n + i].conj()).norm());
        }
    }
    d
}

/// Real symmetric helpers.
pub fn real_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let inv = m.try_inverse()?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Some(out)
}

pub fn real_det(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => nalgebra::DMatrix::from_row_slice(n, n, a).determinant(),
    }
}

pub fn real_sym_eigvals(a: &[f64], n: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i * n + j] + a[j * n + i]));
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn quad_form(a: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = 0.0;
        for j in 0..n {
            r += a[i * n + j] * w[j];
        }
        s += v[i] * r;
    }
    s
}
