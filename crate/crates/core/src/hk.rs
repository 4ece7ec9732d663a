//! Lattice algebra for Beauville-Bogomolov forms: period domain membership,
//! the mirror map and its inverse, hyperkahler rotation and the large complex
//! structure path. Generic over an `f64` backend and an exact rational backend.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Real scalar backend.
pub trait Scalar: Clone + Debug + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {
    fn from_i64(v: i64) -> Self;
    fn zero() -> Self {
        Self::from_i64(0)
    }
    fn one() -> Self {
        Self::from_i64(1)
    }
    /// Exact zero for rationals, `|x| <= tol` for floats.
    fn is_negligible(&self, tol: f64) -> bool;
    fn is_positive(&self, tol: f64) -> bool;
    /// `None` when the root leaves the backend.
    fn sqrt(&self) -> Option<Self>;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn is_negligible(&self, tol: f64) -> bool {
        self.abs() <= tol
    }
    fn is_positive(&self, tol: f64) -> bool {
        *self > tol
    }
    fn sqrt(&self) -> Option<Self> {
        (*self >= 0.0).then(|| f64::sqrt(*self))
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

fn exact_isqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn is_negligible(&self, _tol: f64) -> bool {
        self.is_zero()
    }
    fn is_positive(&self, _tol: f64) -> bool {
        Signed::is_positive(self)
    }
    fn sqrt(&self) -> Option<Self> {
        Some(BigRational::new(exact_isqrt(self.numer())?, exact_isqrt(self.denom())?))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Complex number over a real backend.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cx<S> {
    pub re: S,
    pub im: S,
}

impl<S: Scalar> Cx<S> {
    pub fn new(re: S, im: S) -> Self {
        Cx { re, im }
    }
    pub fn real(re: S) -> Self {
        Cx { re, im: S::zero() }
    }
    pub fn zero() -> Self {
        Cx::real(S::zero())
    }
    pub fn i() -> Self {
        Cx::new(S::zero(), S::one())
    }
    pub fn conj(&self) -> Self {
        Cx::new(self.re.clone(), -self.im.clone())
    }
    pub fn add(&self, o: &Self) -> Self {
        Cx::new(self.re.clone() + o.re.clone(), self.im.clone() + o.im.clone())
    }
    pub fn sub(&self, o: &Self) -> Self {
        Cx::new(self.re.clone() - o.re.clone(), self.im.clone() - o.im.clone())
    }
    pub fn mul(&self, o: &Self) -> Self {
        Cx::new(
            self.re.clone() * o.re.clone() - self.im.clone() * o.im.clone(),
            self.re.clone() * o.im.clone() + self.im.clone() * o.re.clone(),
        )
    }
    pub fn scale(&self, s: &S) -> Self {
        Cx::new(self.re.clone() * s.clone(), self.im.clone() * s.clone())
    }
    pub fn norm_sqr(&self) -> S {
        self.re.clone() * self.re.clone() + self.im.clone() * self.im.clone()
    }
    pub fn div(&self, o: &Self) -> Self {
        let d = o.norm_sqr();
        let n = self.mul(&o.conj());
        Cx::new(n.re / d.clone(), n.im / d)
    }
    pub fn is_negligible(&self, tol: f64) -> bool {
        self.re.is_negligible(tol) && self.im.is_negligible(tol)
    }
    pub fn abs_f64(&self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }
}

pub type CVec<S> = Vec<Cx<S>>;

pub fn real_vec<S: Scalar>(v: &[S]) -> CVec<S> {
    v.iter().map(|x| Cx::real(x.clone())).collect()
}

pub fn re<S: Scalar>(v: &[Cx<S>]) -> Vec<S> {
    v.iter().map(|x| x.re.clone()).collect()
}

pub fn im<S: Scalar>(v: &[Cx<S>]) -> Vec<S> {
    v.iter().map(|x| x.im.clone()).collect()
}

pub fn cadd<S: Scalar>(a: &[Cx<S>], b: &[Cx<S>]) -> CVec<S> {
    a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
}

pub fn csub<S: Scalar>(a: &[Cx<S>], b: &[Cx<S>]) -> CVec<S> {
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

pub fn cscale<S: Scalar>(a: &[Cx<S>], s: &Cx<S>) -> CVec<S> {
    a.iter().map(|x| x.mul(s)).collect()
}

pub fn rscale<S: Scalar>(a: &[S], s: &S) -> Vec<S> {
    a.iter().map(|x| x.clone() * s.clone()).collect()
}

pub fn radd<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

fn rsub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect()
}

/// Integral lattice with a nondegenerate symmetric Gram matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BBLattice {
    pub rank: usize,
    pub gram: Vec<i64>,
    /// `(positive, negative)` inertia.
    pub signature: (usize, usize),
}

/// Inertia of a symmetric rational matrix by symmetric elimination.
fn inertia(gram: &[i64], n: usize) -> (usize, usize, usize) {
    let mut a: Vec<BigRational> = gram.iter().map(|&v| BigRational::from_i64(v)).collect();
    let mut size = n;
    let (mut pos, mut neg) = (0, 0);
    let at = |a: &Vec<BigRational>, i: usize, j: usize, s: usize| a[i * s + j].clone();
    while size > 0 {
        let diag = (0..size).find(|&i| !at(&a, i, i, size).is_zero());
        let pivot = match diag {
            Some(p) => p,
            None => {
                let off = (0..size).flat_map(|i| (0..size).map(move |j| (i, j))).find(|&(i, j)| i != j && !at(&a, i, j, size).is_zero());
                let Some((i, j)) = off else { break };
                // e_i -> e_i + e_j makes the (i, i) entry 2 a_ij.
                for k in 0..size {
                    let v = at(&a, j, k, size);
                    a[i * size + k] = a[i * size + k].clone() + v;
                }
                for k in 0..size {
                    let v = at(&a, k, j, size);
                    a[k * size + i] = a[k * size + i].clone() + v;
                }
                i
            }
        };
        let p = at(&a, pivot, pivot, size);
        if Signed::is_positive(&p) {
            pos += 1;
        } else {
            neg += 1;
        }
        let rest: Vec<usize> = (0..size).filter(|&k| k != pivot).collect();
        let mut b = Vec::with_capacity((size - 1) * (size - 1));
        for &i in &rest {
            for &j in &rest {
                b.push(at(&a, i, j, size) - at(&a, i, pivot, size) * at(&a, pivot, j, size) / p.clone());
            }
        }
        a = b;
        size -= 1;
    }
    (pos, neg, size)
}

impl BBLattice {
    pub fn new(gram: Vec<i64>, rank: usize) -> Result<Self> {
        if gram.len() != rank * rank || rank == 0 {
            return Err(Error::Shape(format!("gram needs {rank}x{rank} entries")));
        }
        for i in 0..rank {
            for j in 0..rank {
                if gram[i * rank + j] != gram[j * rank + i] {
                    return Err(Error::Config("gram matrix must be symmetric".into()));
                }
            }
        }
        let (pos, neg, null) = inertia(&gram, rank);
        if null > 0 {
            return Err(Error::Degenerate("gram matrix is singular".into()));
        }
        Ok(BBLattice { rank, gram, signature: (pos, neg) })
    }

    /// Lattice of hyperkahler signature `(3, rank - 3)`.
    pub fn hyperkahler(gram: Vec<i64>, rank: usize) -> Result<Self> {
        let l = BBLattice::new(gram, rank)?;
        if l.signature.0 != 3 {
            return Err(Error::Invariant(format!("signature {:?} is not (3, {})", l.signature, rank - 3)));
        }
        Ok(l)
    }

    /// Orthogonal sum of `u` hyperbolic planes and `k` copies of `<-2>`.
    /// Basis order: `e_1, f_1, e_2, f_2, ..`, then the `<-2>` generators.
    pub fn standard(u: usize, k: usize) -> Result<Self> {
        let rank = 2 * u + k;
        let mut g = vec![0; rank * rank];
        for p in 0..u {
            g[(2 * p) * rank + 2 * p + 1] = 1;
            g[(2 * p + 1) * rank + 2 * p] = 1;
        }
        for j in 0..k {
            let i = 2 * u + j;
            g[i * rank + i] = -2;
        }
        BBLattice::new(g, rank)
    }

    fn check<T>(&self, v: &[T]) -> Result<()> {
        if v.len() != self.rank {
            return Err(Error::Shape(format!("vector of length {} on a rank {} lattice", v.len(), self.rank)));
        }
        Ok(())
    }

    /// Complex-bilinear pairing.
    pub fn q<S: Scalar>(&self, a: &[Cx<S>], b: &[Cx<S>]) -> Result<Cx<S>> {
        self.check(a)?;
        self.check(b)?;
        let n = self.rank;
        let mut s = Cx::zero();
        for i in 0..n {
            for j in 0..n {
                let g = self.gram[i * n + j];
                if g != 0 {
                    s = s.add(&a[i].mul(&b[j]).scale(&S::from_i64(g)));
                }
            }
        }
        Ok(s)
    }

    pub fn q_real<S: Scalar>(&self, a: &[S], b: &[S]) -> Result<S> {
        Ok(self.q(&real_vec(a), &real_vec(b))?.re)
    }

    pub fn q_int(&self, a: &[i64], b: &[i64]) -> i64 {
        let n = self.rank;
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i] * self.gram[i * n + j] * b[j]).sum()
    }
}

/// Residuals of the period domain conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodCheck {
    pub member: bool,
    pub q_abs: f64,
    pub q_conj: f64,
}

pub const PERIOD_TOL: f64 = 1e-10;

pub fn in_period_domain<S: Scalar>(lat: &BBLattice, omega: &[Cx<S>]) -> Result<PeriodCheck> {
    let q = lat.q(omega, omega)?;
    let conj: CVec<S> = omega.iter().map(Cx::conj).collect();
    let qc = lat.q(omega, &conj)?;
    let member = q.is_negligible(PERIOD_TOL) && qc.im.is_negligible(PERIOD_TOL) && qc.re.is_positive(PERIOD_TOL);
    Ok(PeriodCheck { member, q_abs: q.abs_f64(), q_conj: qc.re.to_f64() })
}

/// `E` isotropic and `sigma` with `q(sigma) > 0`, `q(E, sigma) != 0`, with the
/// complement `W = E^perp cap sigma^perp` of `R E` in `E^perp`.
#[derive(Clone, Debug)]
pub struct MirrorData<S> {
    pub lattice: BBLattice,
    pub e: Vec<i64>,
    pub sigma: Vec<S>,
    pub q_es: S,
    pub q_ss: S,
    /// Basis of `W`, identity on the free coordinates listed in `free`.
    pub complement: Vec<Vec<S>>,
    pub free: Vec<usize>,
    pub tol: f64,
}

/// Null space of a `k x n` matrix by reduced row echelon form.
fn null_space<S: Scalar>(mut rows: Vec<Vec<S>>, n: usize, tol: f64) -> (Vec<Vec<S>>, Vec<usize>) {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == rows.len() {
            break;
        }
        let best = (r..rows.len()).filter(|&i| !rows[i][col].is_negligible(tol)).max_by(|&i, &j| rows[i][col].to_f64().abs().total_cmp(&rows[j][col].to_f64().abs()));
        let Some(p) = best else { continue };
        rows.swap(r, p);
        let pv = rows[r][col].clone();
        rows[r] = rows[r].iter().map(|v| v.clone() / pv.clone()).collect();
        for i in 0..rows.len() {
            if i != r {
                let f = rows[i][col].clone();
                if !f.is_negligible(0.0) {
                    let sub: Vec<S> = rows[r].iter().map(|v| v.clone() * f.clone()).collect();
                    rows[i] = rsub(&rows[i], &sub);
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let basis = free
        .iter()
        .map(|&f| {
            let mut v = vec![S::zero(); n];
            v[f] = S::one();
            for (k, &p) in pivots.iter().enumerate() {
                v[p] = -rows[k][f].clone();
            }
            v
        })
        .collect();
    (basis, free)
}

impl<S: Scalar> MirrorData<S> {
    pub fn new(lattice: BBLattice, e: Vec<i64>, sigma: Vec<S>, tol: f64) -> Result<Self> {
        lattice.check(&e)?;
        lattice.check(&sigma)?;
        if lattice.q_int(&e, &e) != 0 {
            return Err(Error::Precondition("E must be isotropic".into()));
        }
        let ev: Vec<S> = e.iter().map(|&v| S::from_i64(v)).collect();
        let q_es = lattice.q_real(&ev, &sigma)?;
        let q_ss = lattice.q_real(&sigma, &sigma)?;
        if q_es.is_negligible(tol) {
            return Err(Error::Precondition("q(E, sigma) must be nonzero".into()));
        }
        if !q_ss.is_positive(tol) {
            return Err(Error::Precondition("q(sigma) must be positive".into()));
        }
        let n = lattice.rank;
        let row = |v: &[S]| -> Vec<S> { (0..n).map(|j| (0..n).fold(S::zero(), |acc, i| acc + v[i].clone() * S::from_i64(lattice.gram[i * n + j]))).collect() };
        let (complement, free) = null_space(vec![row(&ev), row(&sigma)], n, tol);
        Ok(MirrorData { lattice, e, sigma, q_es, q_ss, complement, free, tol })
    }

    fn e_vec(&self) -> CVec<S> {
        self.e.iter().map(|&v| Cx::real(S::from_i64(v))).collect()
    }

    fn sigma_c(&self) -> CVec<S> {
        real_vec(&self.sigma)
    }

    pub fn q(&self, a: &[Cx<S>], b: &[Cx<S>]) -> Result<Cx<S>> {
        self.lattice.q(a, b)
    }

    /// Canonical representative of `alpha mod E` in `W`; `alpha` must lie in `E^perp`.
    pub fn reduce(&self, alpha: &[Cx<S>]) -> Result<QuotientClass<S>> {
        let qe = self.q(&self.e_vec(), alpha)?;
        if !qe.is_negligible(self.tol) {
            return Err(Error::Precondition("class is not in E^perp".into()));
        }
        let c = self.q(alpha, &self.sigma_c())?.div(&Cx::real(self.q_es.clone()));
        let representative = csub(alpha, &cscale(&self.e_vec(), &c));
        let coordinates = self.free.iter().map(|&f| representative[f].clone()).collect();
        Ok(QuotientClass { representative, coordinates })
    }

    /// `m(alpha) = sigma / q(E, sigma) + alpha - (q(sigma)/q(E,sigma)^2 + q(alpha) + 2 q(alpha, sigma)/q(E,sigma)) E / 2`.
    pub fn mirror_map(&self, alpha: &[Cx<S>]) -> Result<CVec<S>> {
        self.lattice.check(alpha)?;
        if !self.q(&self.e_vec(), alpha)?.is_negligible(self.tol) {
            return Err(Error::Precondition("alpha is not in E^perp".into()));
        }
        let ia = real_vec(&im(alpha));
        if !self.q(&ia, &ia)?.re.is_positive(self.tol) {
            return Err(Error::Precondition("q(Im alpha) must be positive".into()));
        }
        let qes = Cx::real(self.q_es.clone());
        let qa = self.q(alpha, alpha)?;
        let qas = self.q(alpha, &self.sigma_c())?;
        let two = Cx::real(S::from_i64(2));
        let coef = Cx::real(self.q_ss.clone() / (self.q_es.clone() * self.q_es.clone())).add(&qa).add(&two.mul(&qas).div(&qes));
        let half = Cx::real(S::one() / S::from_i64(2));
        let base = cadd(&cscale(&self.sigma_c(), &Cx::real(S::one()).div(&qes)), alpha);
        Ok(csub(&base, &cscale(&self.e_vec(), &half.mul(&coef))))
    }

    /// Rescales to `q(E, Omega) = 1` and returns `Omega - sigma / q(E, sigma) mod E`.
    pub fn inverse_mirror(&self, omega: &[Cx<S>]) -> Result<QuotientClass<S>> {
        self.lattice.check(omega)?;
        let c = self.q(&self.e_vec(), omega)?;
        if c.is_negligible(self.tol) {
            return Err(Error::Perpendicular);
        }
        let inv = Cx::real(S::one()).div(&c);
        let scaled = cscale(omega, &inv);
        let alpha = csub(&scaled, &cscale(&self.sigma_c(), &Cx::real(S::one() / self.q_es.clone())));
        self.reduce(&alpha)
    }

    /// Dual pair `(B_check, omega_check)` of a period normalized by `q(E, Omega) = 1`,
    /// with `omega_check` corrected so that `q(Omega, omega_check) = 0`.
    pub fn mirror_exchange(&self, omega: &[Cx<S>], b_field: &[S]) -> Result<MirrorExchange<S>> {
        let cls = self.inverse_mirror(omega)?;
        let b_check = re(&cls.representative);
        let w = im(&cls.representative);
        let qws = self.lattice.q_real(&w, &self.sigma)?;
        let qwb = self.lattice.q_real(&w, b_field)?;
        let shift = qws / self.q_es.clone() - qwb;
        let ev: Vec<S> = self.e.iter().map(|&v| S::from_i64(v)).collect();
        let omega_check = rsub(&w, &rscale(&ev, &shift));
        let q_omega_check = self.lattice.q_real(&omega_check, &omega_check)?;
        let flagged = !q_omega_check.is_positive(self.tol);
        Ok(MirrorExchange { b_check, omega_check, q_omega_check, flagged })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuotientClass<S> {
    pub representative: CVec<S>,
    /// Entries of the representative on the free coordinates of `W`.
    pub coordinates: CVec<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MirrorExchange<S> {
    pub b_check: Vec<S>,
    pub omega_check: Vec<S>,
    pub q_omega_check: S,
    /// `q(omega_check) <= 0`: positivity is reported, not enforced.
    pub flagged: bool,
}

/// Three real classes with equal positive squares, pairwise orthogonal.
#[derive(Clone, Debug, PartialEq)]
pub struct HKTriple<S> {
    pub omega_i: Vec<S>,
    pub omega_j: Vec<S>,
    pub omega_k: Vec<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum HKTarget {
    I,
    J,
    K,
}

impl<S: Scalar> HKTriple<S> {
    pub fn new(lat: &BBLattice, omega_i: Vec<S>, omega_j: Vec<S>, omega_k: Vec<S>, tol: f64) -> Result<Self> {
        let q = |a: &[S], b: &[S]| lat.q_real(a, b);
        let (qi, qj, qk) = (q(&omega_i, &omega_i)?, q(&omega_j, &omega_j)?, q(&omega_k, &omega_k)?);
        if !qi.is_positive(tol) || !(qi.clone() - qj).is_negligible(tol) || !(qi - qk).is_negligible(tol) {
            return Err(Error::Invariant("triple squares must be equal and positive".into()));
        }
        for (a, b) in [(&omega_i, &omega_j), (&omega_j, &omega_k), (&omega_k, &omega_i)] {
            if !q(a, b)?.is_negligible(tol) {
                return Err(Error::Invariant("triple must be pairwise orthogonal".into()));
            }
        }
        Ok(HKTriple { omega_i, omega_j, omega_k })
    }

    /// `(Omega, omega)`: `(omega_J + i omega_K, omega_I)`, `(omega_K + i omega_I, omega_J)` or `(omega_I + i omega_J, omega_K)`.
    pub fn rotate(&self, target: HKTarget) -> (CVec<S>, Vec<S>) {
        let (a, b, k) = match target {
            HKTarget::I => (&self.omega_j, &self.omega_k, &self.omega_i),
            HKTarget::J => (&self.omega_k, &self.omega_i, &self.omega_j),
            HKTarget::K => (&self.omega_i, &self.omega_j, &self.omega_k),
        };
        (a.iter().zip(b).map(|(x, y)| Cx::new(x.clone(), y.clone())).collect(), k.clone())
    }
}

pub fn hk_rotate<S: Scalar>(triple: &HKTriple<S>, target: HKTarget) -> (CVec<S>, Vec<S>) {
    triple.rotate(target)
}

fn sqrt_or_err<S: Scalar>(v: &S, what: &str) -> Result<S> {
    v.sqrt().ok_or_else(|| Error::Precondition(format!("{what} has no square root in this backend")))
}

/// `s^{-1} sqrt(q(omega_check) / q(omega)) Omega_s`.
pub fn normalize_period<S: Scalar>(omega_s: &[Cx<S>], s: &S, q_omega: &S, q_omega_check: &S) -> Result<CVec<S>> {
    if !s.is_positive(0.0) || !q_omega.is_positive(0.0) || !q_omega_check.is_positive(0.0) {
        return Err(Error::Precondition("normalize_period needs s, q(omega), q(omega_check) > 0".into()));
    }
    let f = sqrt_or_err(&(q_omega_check.clone() / q_omega.clone()), "q(omega_check)/q(omega)")? / s.clone();
    Ok(cscale(omega_s, &Cx::real(f)))
}

/// `Omega_s = m(i s omega)`.
pub fn lcs_period<S: Scalar>(data: &MirrorData<S>, omega: &[S], s: &S) -> Result<CVec<S>> {
    let alpha: CVec<S> = omega.iter().map(|w| Cx::new(S::zero(), w.clone() * s.clone())).collect();
    data.mirror_map(&alpha)
}

/// `omega~_{s,J} = Re Omega_s^nor`.
pub fn lcs_kahler<S: Scalar>(data: &MirrorData<S>, omega: &[S], omega_check: &[S], s: &S) -> Result<Vec<S>> {
    let qw = data.lattice.q_real(omega, omega)?;
    let qc = data.lattice.q_real(omega_check, omega_check)?;
    Ok(re(&normalize_period(&lcs_period(data, omega, s)?, s, &qw, &qc)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LcsPoint<S> {
    pub t: S,
    pub s: S,
    pub class: Vec<S>,
    /// `class - (t omega~_{s0,J} + (s0/2) sqrt(q(omega_check) q(omega)) E)`.
    pub affine_defect: Vec<S>,
}

impl<S: Scalar> LcsPoint<S> {
    pub fn affine_defect_max(&self) -> f64 {
        self.affine_defect.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
    }
}

/// `sqrt(t(t+1)) omega~_{s(t),J}` with `s(t) = s0 sqrt((t+1)/t)`.
pub fn lcs_path<S: Scalar>(t: &S, s0: &S, data: &MirrorData<S>, omega: &[S], omega_check: &[S]) -> Result<LcsPoint<S>> {
    if !t.is_positive(0.0) || !s0.is_positive(0.0) {
        return Err(Error::Precondition("lcs_path needs t > 0 and s0 > 0".into()));
    }
    let tt = t.clone() * (t.clone() + S::one());
    let s = s0.clone() * sqrt_or_err(&((t.clone() + S::one()) / t.clone()), "(t+1)/t")?;
    let class = rscale(&lcs_kahler(data, omega, omega_check, &s)?, &sqrt_or_err(&tt, "t(t+1)")?);
    let qw = data.lattice.q_real(omega, omega)?;
    let qc = data.lattice.q_real(omega_check, omega_check)?;
    let ev: Vec<S> = data.e.iter().map(|&v| S::from_i64(v)).collect();
    let lift = s0.clone() / S::from_i64(2) * sqrt_or_err(&(qc * qw), "q(omega_check) q(omega)")?;
    let affine = radd(&rscale(&lcs_kahler(data, omega, omega_check, s0)?, t), &rscale(&ev, &lift));
    let affine_defect = rsub(&class, &affine);
    Ok(LcsPoint { t: t.clone(), s, class, affine_defect })
}

/// `t = a^2 / (b^2 - a^2)`, for which `sqrt(t(t+1))` and `sqrt((t+1)/t)` are rational.
pub fn rational_path_parameter(a: i64, b: i64) -> Result<BigRational> {
    if a <= 0 || b <= a {
        return Err(Error::Precondition("need 0 < a < b".into()));
    }
    Ok(rational(a * a, b * b - a * a))
}

/// Seeded admissible `alpha` in `E^perp` with `q(Im alpha) > 0`, for `E = e_1` and
/// `sigma = e_1 + f_1` on `U^u + <-2>^k`, `u >= 2`.
pub fn random_alpha(lat: &BBLattice, data: &MirrorData<f64>, rng: &mut ChaCha8Rng) -> Result<CVec<f64>> {
    let n = lat.rank;
    let project = |v: Vec<f64>| -> Result<Vec<f64>> {
        let ev: Vec<f64> = data.e.iter().map(|&x| x as f64).collect();
        let c = lat.q_real(&ev, &v)? / data.q_es;
        Ok(rsub(&v, &rscale(&data.sigma, &c)))
    };
    let re_part = project((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())?;
    for _ in 0..1000 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let scale = rng.gen_range(0.5..3.0);
        v[2] += scale;
        v[3] += scale;
        let im_part = project(v)?;
        if lat.q_real(&im_part, &im_part)? > 0.05 {
            return Ok(re_part.iter().zip(&im_part).map(|(a, b)| Cx::new(*a, *b)).collect());
        }
    }
    Err(Error::Precondition("no admissible alpha sampled".into()))
}

/// Worst residuals of the mirror map identities over a seeded float sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub rank: usize,
    pub samples: usize,
    pub max_isotropy: f64,
    pub max_norm_identity: f64,
    pub max_round_trip: f64,
    pub max_re_im_orthogonality: f64,
}

pub fn mirror_sweep(k: usize, samples: usize, seed: u64) -> Result<SweepReport> {
    let lat = BBLattice::standard(3, k)?;
    let n = lat.rank;
    let mut e = vec![0; n];
    e[0] = 1;
    let mut sigma = vec![0.0; n];
    sigma[0] = 1.0;
    sigma[1] = 1.0;
    let data = MirrorData::new(lat.clone(), e, sigma, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SweepReport { rank: n, samples, max_isotropy: 0.0, max_norm_identity: 0.0, max_round_trip: 0.0, max_re_im_orthogonality: 0.0 };
    for _ in 0..samples {
        let alpha = random_alpha(&lat, &data, &mut rng)?;
        let m = data.mirror_map(&alpha)?;
        rep.max_isotropy = rep.max_isotropy.max(lat.q(&m, &m)?.abs_f64());
        let conj: CVec<f64> = m.iter().map(Cx::conj).collect();
        let ia = im(&alpha);
        let want = 2.0 * lat.q_real(&ia, &ia)?;
        rep.max_norm_identity = rep.max_norm_identity.max(lat.q(&m, &conj)?.sub(&Cx::real(want)).abs_f64());
        let (rm, imm) = (re(&m), im(&m));
        let orth = (lat.q_real(&rm, &rm)? - lat.q_real(&imm, &imm)?).abs().max(lat.q_real(&rm, &imm)?.abs());
        rep.max_re_im_orthogonality = rep.max_re_im_orthogonality.max(orth);
        let back = data.inverse_mirror(&m)?;
        let again = data.mirror_map(&back.representative)?;
        let err = again.iter().zip(&m).map(|(a, b)| a.sub(b).abs_f64()).fold(0.0, f64::max);
        rep.max_round_trip = rep.max_round_trip.max(err);
    }
    Ok(rep)
}
