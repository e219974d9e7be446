//! Dense complex matrix kernel.
//!
//! Everything here is generic over the real scalar `T` (`f32` or `f64`);
//! the rest of the crate works with the `f64` aliases from the crate root.

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real scalar usable by the kernel.
pub trait Real: RealField + Float + FromPrimitive + Copy {}
impl<T: RealField + Float + FromPrimitive + Copy> Real for T {}

pub type Mat<T> = DMatrix<Complex<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Spectral,
    Trace,
    Frobenius,
}

impl std::str::FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(NormKind::Spectral),
            "trace" => Ok(NormKind::Trace),
            "frobenius" => Ok(NormKind::Frobenius),
            _ => Err(Error::Input(format!("unknown norm '{s}' (expected spectral, trace or frobenius)"))),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::Spectral => "spectral",
            NormKind::Trace => "trace",
            NormKind::Frobenius => "frobenius",
        })
    }
}

fn c<T: Real>(x: f64) -> Complex<T> {
    Complex::new(r(x), T::zero())
}

fn r<T: Real>(x: f64) -> T {
    <T as FromPrimitive>::from_f64(x).unwrap()
}

fn to64<T: Real>(x: T) -> f64 {
    ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

fn check_square<T: Real>(a: &Mat<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn identity<T: Real>(n: usize) -> Mat<T> {
    Mat::<T>::identity(n, n)
}

pub fn singular_values<T: Real>(a: &Mat<T>) -> Vec<T> {
    if a.is_empty() {
        return Vec::new();
    }
    a.clone().singular_values().iter().copied().collect()
}

pub fn op_norm<T: Real>(a: &Mat<T>, kind: NormKind) -> T {
    match kind {
        NormKind::Frobenius => {
            let s = a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
            Float::sqrt(s)
        }
        NormKind::Spectral => singular_values(a).into_iter().fold(T::zero(), Float::max),
        NormKind::Trace => singular_values(a).into_iter().fold(T::zero(), |s, x| s + x),
    }
}

/// Induced 1-norm (largest column sum).
pub fn norm1<T: Real>(a: &Mat<T>) -> T {
    let mut best = T::zero();
    for j in 0..a.ncols() {
        let s = a.column(j).iter().fold(T::zero(), |acc, z| acc + z.norm());
        best = Float::max(best, s);
    }
    best
}

pub fn max_abs<T: Real>(a: &Mat<T>) -> T {
    a.iter().fold(T::zero(), |m, z| Float::max(m, z.norm()))
}

pub fn is_finite<T: Real>(a: &Mat<T>) -> bool {
    a.iter().all(|z| Float::is_finite(z.re) && Float::is_finite(z.im))
}

/// Kronecker product.
pub fn kron<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    a.kronecker(b)
}

pub fn commutator<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    a * b - b * a
}

// ---------------------------------------------------------------------------
// Exponential

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Backward-error thresholds for the diagonal Pade approximants.
const THETA_F64: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];
const THETA_F32: [(usize, f64); 3] = [(3, 4.258730016922831e-1), (5, 1.880152677804762e0), (7, 3.925724783138660e0)];

fn pade_coeffs(m: usize) -> &'static [f64] {
    match m {
        3 => &PADE3,
        5 => &PADE5,
        7 => &PADE7,
        9 => &PADE9,
        _ => &PADE13,
    }
}

fn pade_uv<T: Real>(a: &Mat<T>, m: usize) -> (Mat<T>, Mat<T>) {
    let n = a.nrows();
    let b = pade_coeffs(m);
    let id = identity::<T>(n);
    let a2 = a * a;
    if m == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let w1 = &a6 * c::<T>(b[13]) + &a4 * c::<T>(b[11]) + &a2 * c::<T>(b[9]);
        let w2 = &a6 * c::<T>(b[7]) + &a4 * c::<T>(b[5]) + &a2 * c::<T>(b[3]) + &id * c::<T>(b[1]);
        let z1 = &a6 * c::<T>(b[12]) + &a4 * c::<T>(b[10]) + &a2 * c::<T>(b[8]);
        let z2 = &a6 * c::<T>(b[6]) + &a4 * c::<T>(b[4]) + &a2 * c::<T>(b[2]) + &id * c::<T>(b[0]);
        let w = &a6 * w1 + w2;
        let u = a * w;
        let v = &a6 * z1 + z2;
        return (u, v);
    }
    // Low orders: accumulate even powers.
    let mut pow = id.clone();
    let mut u = Mat::<T>::zeros(n, n);
    let mut v = Mat::<T>::zeros(n, n);
    let mut k = 0;
    while 2 * k < m {
        u += &pow * c::<T>(b[2 * k + 1]);
        v += &pow * c::<T>(b[2 * k]);
        pow = &pow * &a2;
        k += 1;
    }
    (a * u, v)
}

/// Matrix exponential by scaling and squaring with diagonal Pade approximants.
pub fn expm<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok(a.clone());
    }
    if !is_finite(a) {
        return Err(Error::Input("expm: non-finite input".into()));
    }
    let single = to64(T::epsilon()) > 1e-10;
    let thetas: &[(usize, f64)] = if single { &THETA_F32 } else { &THETA_F64 };
    let nrm = to64(norm1(a));
    for &(m, th) in &thetas[..thetas.len() - 1] {
        if nrm <= th {
            return pade_solve(a, m);
        }
    }
    let (m, th) = thetas[thetas.len() - 1];
    let s = if nrm > th { (nrm / th).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = a * c::<T>(2f64.powi(-s));
    let mut x = pade_solve(&scaled, m)?;
    for _ in 0..s {
        x = &x * &x;
    }
    Ok(x)
}

fn pade_solve<T: Real>(a: &Mat<T>, m: usize) -> Result<Mat<T>> {
    let (u, v) = pade_uv(a, m);
    let p = &v + &u;
    let q = &v - &u;
    solve_linear(&q, &p)
}

// ---------------------------------------------------------------------------
// Linear systems

/// Solves `A X = Y` by LU with partial pivoting.
pub fn solve_linear<T: Real>(a: &Mat<T>, y: &Mat<T>) -> Result<Mat<T>> {
    let n = check_square(a)?;
    if y.nrows() != n {
        return Err(Error::Dimension(format!("solve_linear: A is {n}x{n}, Y has {} rows", y.nrows())));
    }
    let lu = a.clone().lu();
    let cond = lu_condition_estimate(lu.u().diagonal().as_slice());
    if !cond.is_finite() || cond * to64(T::epsilon()) > 1.0 {
        return Err(Error::Singular { cond });
    }
    lu.solve(y).ok_or(Error::Singular { cond: f64::INFINITY })
}

/// Inverse via [`solve_linear`].
pub fn inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = check_square(a)?;
    solve_linear(a, &identity(n))
}

// Ratio of extreme pivots. A lower bound on the true condition number, good
// enough to reject numerically singular systems.
fn lu_condition_estimate<T: Real>(diag: &[Complex<T>]) -> f64 {
    if diag.is_empty() {
        return 1.0;
    }
    let mags: Vec<f64> = diag.iter().map(|z| to64(z.norm())).collect();
    let hi = mags.iter().cloned().fold(0.0, f64::max);
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

// ---------------------------------------------------------------------------
// Schur form

/// Complex Schur form `A = Q T Q^H` with `T` upper triangular.
///
/// Hessenberg reduction followed by single-shift QR sweeps with Wilkinson
/// shifts. nalgebra's own complex Schur stalls on some defective inputs
/// (e.g. a Jordan pair next to a zero eigenvalue), hence the local version.
pub fn schur<T: Real>(a: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok((a.clone(), a.clone()));
    }
    let (mut q, mut h) = nalgebra::linalg::Hessenberg::new(a.clone()).unpack();
    let zero = Complex::new(T::zero(), T::zero());
    let eps = T::epsilon();
    let scale = Float::max(norm1(&h), T::min_positive_value());
    let max_iter = 60 * n.max(4);
    let mut hi = n - 1;
    let mut its = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let mut s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if s == T::zero() {
                s = scale;
            }
            if h[(lo, lo - 1)].norm() <= eps * s {
                h[(lo, lo - 1)] = zero;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            its = 0;
            continue;
        }
        its += 1;
        total += 1;
        if total > max_iter {
            return Err(Error::NotConverged { iterations: total, residual: to64(h[(hi, hi - 1)].norm()) });
        }
        let mu = if its.is_multiple_of(10) {
            // exceptional shift to break cycles
            h[(hi, hi)] + Complex::new(r::<T>(0.75) * h[(hi, hi - 1)].norm(), r::<T>(0.3) * h[(hi, hi - 1)].norm())
        } else {
            let (p, b, cc, d) = (h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
            let half = (p - d) * c::<T>(0.5);
            let disc = (half * half + b * cc).sqrt();
            let mid = (p + d) * c::<T>(0.5);
            let (e1, e2) = (mid + disc, mid - disc);
            if (e1 - d).norm() <= (e2 - d).norm() {
                e1
            } else {
                e2
            }
        };
        let mut x = h[(lo, lo)] - mu;
        let mut y = h[(lo + 1, lo)];
        for k in lo..hi {
            if k > lo {
                x = h[(k, k - 1)];
                y = h[(k + 1, k - 1)];
            }
            let (cs, sn) = givens(x, y);
            let csc = Complex::new(cs, T::zero());
            let start = if k > lo { k - 1 } else { k };
            for j in start..n {
                let (u, v) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = csc * u + sn * v;
                h[(k + 1, j)] = csc * v - sn.conj() * u;
            }
            let end = (k + 2).min(hi);
            for i in 0..=end {
                let (u, v) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = csc * u + sn.conj() * v;
                h[(i, k + 1)] = csc * v - sn * u;
            }
            for i in 0..n {
                let (u, v) = (q[(i, k)], q[(i, k + 1)]);
                q[(i, k)] = csc * u + sn.conj() * v;
                q[(i, k + 1)] = csc * v - sn * u;
            }
            if k > lo {
                h[(k + 1, k - 1)] = zero;
            }
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            h[(i, j)] = zero;
        }
    }
    Ok((q, h))
}

pub fn eigenvalues<T: Real>(a: &Mat<T>) -> Result<Vec<Complex<T>>> {
    let (_, t) = schur(a)?;
    Ok(t.diagonal().iter().copied().collect())
}

// Plane rotation with real cosine annihilating g against f.
fn givens<T: Real>(f: Complex<T>, g: Complex<T>) -> (T, Complex<T>) {
    let fa = f.norm();
    let ga = g.norm();
    if ga == T::zero() {
        return (T::one(), Complex::new(T::zero(), T::zero()));
    }
    if fa == T::zero() {
        return (T::zero(), g.conj() / ga);
    }
    let h = Float::hypot(fa, ga);
    let cs = fa / h;
    let sn = (f / fa) * g.conj() / h;
    (cs, sn)
}

// x <- c x + s y, y <- c y - conj(s) x
fn rot_pair<T: Real>(x: &mut Complex<T>, y: &mut Complex<T>, cs: T, sn: Complex<T>) {
    let xo = *x;
    let yo = *y;
    *x = xo * cs + sn * yo;
    *y = yo * cs - sn.conj() * xo;
}

// Swap the adjacent diagonal entries k and k+1 of the triangular factor.
fn swap_adjacent<T: Real>(q: &mut Mat<T>, t: &mut Mat<T>, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let (cs, sn) = givens(t[(k, k + 1)], t22 - t11);
    for j in (k + 2)..n {
        let (mut x, mut y) = (t[(k, j)], t[(k + 1, j)]);
        rot_pair(&mut x, &mut y, cs, sn);
        t[(k, j)] = x;
        t[(k + 1, j)] = y;
    }
    for i in 0..k {
        let (mut x, mut y) = (t[(i, k)], t[(i, k + 1)]);
        rot_pair(&mut x, &mut y, cs, sn.conj());
        t[(i, k)] = x;
        t[(i, k + 1)] = y;
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    for i in 0..n {
        let (mut x, mut y) = (q[(i, k)], q[(i, k + 1)]);
        rot_pair(&mut x, &mut y, cs, sn.conj());
        q[(i, k)] = x;
        q[(i, k + 1)] = y;
    }
}

/// Reorders a Schur pair in place so that the diagonal entries flagged in
/// `select` come first. Returns the number of selected entries.
pub fn reorder_schur<T: Real>(q: &mut Mat<T>, t: &mut Mat<T>, select: &[bool]) -> usize {
    let mut top = 0;
    for (k, &sel) in select.iter().enumerate() {
        if !sel {
            continue;
        }
        let mut pos = k;
        while pos > top {
            swap_adjacent(q, t, pos - 1);
            pos -= 1;
        }
        top += 1;
    }
    top
}

/// Solves `T1 X - X T2 = Y` for upper-triangular `T1`, `T2`.
pub fn solve_triangular_sylvester<T: Real>(t1: &Mat<T>, t2: &Mat<T>, y: &Mat<T>) -> Result<Mat<T>> {
    let m = t1.nrows();
    let n = t2.nrows();
    let scale = Float::max(max_abs(t1), max_abs(t2));
    let floor = T::epsilon() * Float::max(scale, T::min_positive_value());
    let mut x = Mat::<T>::zeros(m, n);
    for j in 0..n {
        let mut rhs: DVector<Complex<T>> = y.column(j).into_owned();
        for k in 0..j {
            let w = t2[(k, j)];
            if w != Complex::new(T::zero(), T::zero()) {
                rhs += x.column(k) * w;
            }
        }
        let shift = t2[(j, j)];
        for i in (0..m).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..m {
                s -= t1[(i, k)] * x[(k, j)];
            }
            let d = t1[(i, i)] - shift;
            if d.norm() <= floor {
                return Err(Error::SpectraOverlap { separation: to64(d.norm()) });
            }
            x[(i, j)] = s / d;
        }
    }
    Ok(x)
}

/// Solves the Sylvester equation `A X - X B = Y` (Bartels-Stewart).
pub fn solve_sylvester<T: Real>(a: &Mat<T>, b: &Mat<T>, y: &Mat<T>) -> Result<Mat<T>> {
    let m = check_square(a)?;
    let n = check_square(b)?;
    if y.nrows() != m || y.ncols() != n {
        return Err(Error::Dimension(format!("solve_sylvester: Y must be {m}x{n}")));
    }
    let (qa, ta) = schur(a)?;
    let (qb, tb) = schur(b)?;
    let mut sep = T::infinity();
    for i in 0..m {
        for j in 0..n {
            sep = Float::min(sep, (ta[(i, i)] - tb[(j, j)]).norm());
        }
    }
    let scale = Float::max(op_norm(a, NormKind::Frobenius), op_norm(b, NormKind::Frobenius));
    if m > 0 && n > 0 && sep <= r::<T>(100.0) * T::epsilon() * Float::max(scale, T::one()) {
        return Err(Error::SpectraOverlap { separation: to64(sep) });
    }
    let f = qa.adjoint() * y * &qb;
    let z = solve_triangular_sylvester(&ta, &tb, &f)?;
    Ok(qa * z * qb.adjoint())
}

// ---------------------------------------------------------------------------
// Square root

/// Principal square root by the Schur method.
pub fn principal_sqrt<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok(a.clone());
    }
    let (q, t) = schur(a)?;
    let scale = Float::max(max_abs(&t), T::min_positive_value());
    let tol = r::<T>(100.0) * T::epsilon() * scale;
    let mut rt = Mat::<T>::zeros(n, n);
    for j in 0..n {
        let z = t[(j, j)];
        if z.re <= T::zero() && Float::abs(z.im) <= tol {
            return Err(Error::SqrtBranch { re: to64(z.re), im: to64(z.im) });
        }
        rt[(j, j)] = z.sqrt();
    }
    for j in 1..n {
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= rt[(i, k)] * rt[(k, j)];
            }
            rt[(i, j)] = s / (rt[(i, i)] + rt[(j, j)]);
        }
    }
    Ok(&q * rt * q.adjoint())
}

// ---------------------------------------------------------------------------
// Hermitian eigenproblem

/// Eigenpairs of a Hermitian matrix, eigenvalues sorted in descending order.
/// Each eigenvector is phase-fixed so its first non-negligible entry is real
/// and positive.
pub fn hermitian_eigen<T: Real>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok((Vec::new(), a.clone()));
    }
    let h = (a + a.adjoint()) * c::<T>(0.5);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap_or(std::cmp::Ordering::Equal));
    let vals: Vec<T> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Mat::<T>::zeros(n, n);
    let thresh = r::<T>(1e-8);
    for (col, &i) in idx.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let lead = v.iter().find(|z| z.norm() > thresh).copied().unwrap_or(Complex::new(T::one(), T::zero()));
        let phase = lead.conj() / lead.norm();
        for k in 0..n {
            vecs[(k, col)] = v[k] * phase;
        }
    }
    Ok((vals, vecs))
}
