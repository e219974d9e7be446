//! Canonical spectral data of the strong generator:
//! `B = sum_l (b_l P_l + N_l)` with reduced resolvents `S_l`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{self, op_norm, NormKind};
use crate::{CMatrix, C64};

/// Relative clustering threshold used when the caller passes none.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenspaceData {
    pub eigenvalue: C64,
    pub projection: CMatrix,
    pub nilpotent: CMatrix,
    /// Smallest `k` with `N^k = 0`.
    pub index: usize,
    pub reduced_resolvent: CMatrix,
    /// Algebraic multiplicity.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Residuals {
    pub identity_defect: f64,
    pub commut_defect: f64,
    pub reconstruction_defect: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub dim: usize,
    pub blocks: Vec<EigenspaceData>,
    pub residuals: Residuals,
    /// Absolute clustering distance actually used.
    pub cluster_tol: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ValidationReport {
    pub idempotency: f64,
    pub identity_defect: f64,
    pub orthogonality: f64,
    pub resolvent_defect: f64,
    pub nilpotent_defect: f64,
    pub reconstruction_defect: f64,
    /// True when the rank-based nilpotency index agrees with the stored one.
    pub index_consistent: bool,
}

impl ValidationReport {
    pub fn max_defect(&self) -> f64 {
        [
            self.idempotency,
            self.identity_defect,
            self.orthogonality,
            self.resolvent_defect,
            self.nilpotent_defect,
            self.reconstruction_defect,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl SpectralDecomposition {
    /// Index of the block whose eigenvalue is closest to `z`.
    pub fn block_near(&self, z: C64) -> Option<usize> {
        self.blocks
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.eigenvalue - z).norm().partial_cmp(&(b.1.eigenvalue - z).norm()).unwrap())
            .map(|(i, _)| i)
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.blocks.iter().map(|b| b.eigenvalue).collect()
    }

    /// `B` restricted to block `l`: `b_l P_l + N_l`.
    pub fn block_generator(&self, l: usize) -> CMatrix {
        let blk = &self.blocks[l];
        &blk.projection * blk.eigenvalue + &blk.nilpotent
    }
}

fn sp(a: &CMatrix) -> f64 {
    op_norm(a, NormKind::Spectral)
}

// Single-linkage clustering of points closer than `tol`.
fn cluster(points: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut label, i);
        match groups.iter_mut().find(|g| g.0 == root) {
            Some(g) => g.1.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    groups.into_iter().map(|g| g.1).collect()
}

// Deterministic block order: decreasing real part, then increasing imaginary part.
fn block_order(a: &C64, b: &C64, tol: f64) -> std::cmp::Ordering {
    if (a.re - b.re).abs() > tol {
        b.re.partial_cmp(&a.re).unwrap()
    } else {
        a.im.partial_cmp(&b.im).unwrap()
    }
}

/// Finite Neumann sum for `(b_k - b_l + N_k)^{-1} P_k`.
fn shifted_inverse(diff: C64, nil: &CMatrix, index: usize, proj: &CMatrix) -> CMatrix {
    let inv = C64::new(1.0, 0.0) / diff;
    let mut term = proj.clone() * inv;
    let mut acc = term.clone();
    for _ in 1..index {
        term = -(nil * &term) * inv;
        acc += &term;
    }
    acc
}

fn nilpotent_index(nil: &CMatrix, thresh: f64, max: usize) -> usize {
    let mut pow = nil.clone();
    for k in 1..=max {
        if sp(&pow) <= thresh {
            return k;
        }
        pow = &pow * nil;
    }
    max
}

fn assemble(b: &CMatrix, mut raw: Vec<(C64, CMatrix, CMatrix, usize, usize)>, cluster_tol: f64) -> SpectralDecomposition {
    let n = b.nrows();
    raw.sort_by(|x, y| block_order(&x.0, &y.0, cluster_tol.max(1e-12)));
    let meta: Vec<(C64, &CMatrix, &CMatrix, usize)> = raw.iter().map(|r| (r.0, &r.1, &r.2, r.3)).collect();
    let resolvents: Vec<CMatrix> = (0..meta.len())
        .into_par_iter()
        .map(|l| {
            let mut s = CMatrix::zeros(n, n);
            for (k, (bk, pk, nk, ik)) in meta.iter().enumerate() {
                if k != l {
                    s += shifted_inverse(*bk - meta[l].0, nk, *ik, pk);
                }
            }
            s
        })
        .collect();
    let blocks: Vec<EigenspaceData> = raw
        .into_iter()
        .zip(resolvents)
        .map(|((eigenvalue, projection, nilpotent, index, rank), reduced_resolvent)| EigenspaceData {
            eigenvalue,
            projection,
            nilpotent,
            index,
            reduced_resolvent,
            rank,
        })
        .collect();
    let mut dec = SpectralDecomposition { dim: n, blocks, residuals: Residuals::default(), cluster_tol };
    dec.residuals = residuals(&dec, b);
    dec
}

fn residuals(dec: &SpectralDecomposition, b: &CMatrix) -> Residuals {
    let n = dec.dim;
    let mut sum_p = CMatrix::zeros(n, n);
    let mut recon = CMatrix::zeros(n, n);
    let mut commut: f64 = 0.0;
    for blk in &dec.blocks {
        sum_p += &blk.projection;
        recon += &blk.projection * blk.eigenvalue + &blk.nilpotent;
        commut = commut.max(sp(&(b * &blk.projection - &blk.projection * b)));
    }
    Residuals {
        identity_defect: sp(&(sum_p - CMatrix::identity(n, n))),
        commut_defect: commut,
        reconstruction_defect: sp(&(recon - b)),
    }
}

/// Spectral decomposition by ordered Schur forms and Sylvester decoupling.
///
/// `cluster_tol` is relative to `||B||`; `None` selects [`DEFAULT_CLUSTER_TOL`].
/// Roundoff splits a size-`k` Jordan block by roughly `eps^{1/k}`, so the
/// default handles index 2; index 3 and up need a looser tolerance.
pub fn decompose(b: &CMatrix, cluster_tol: Option<f64>) -> Result<SpectralDecomposition> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: b.ncols() });
    }
    if n == 0 {
        return Err(Error::Input("cannot decompose an empty matrix".into()));
    }
    let bnorm = sp(b);
    let scale = bnorm.max(f64::MIN_POSITIVE);
    let tol = cluster_tol.unwrap_or(DEFAULT_CLUSTER_TOL) * scale;
    let (q, t) = matcore::schur(b)?;
    let eigs: Vec<C64> = t.diagonal().iter().copied().collect();
    let groups = cluster(&eigs, tol);
    let reps: Vec<C64> =
        groups.iter().map(|g| g.iter().map(|&i| eigs[i]).sum::<C64>() / C64::new(g.len() as f64, 0.0)).collect();
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            let gap = groups[i]
                .iter()
                .flat_map(|&a| groups[j].iter().map(move |&c| (a, c)))
                .map(|(a, c)| (eigs[a] - eigs[c]).norm())
                .fold(f64::INFINITY, f64::min);
            if gap < 10.0 * tol {
                return Err(Error::ClusterAmbiguity { gap, tol });
            }
        }
    }
    let nil_thresh = tol;
    let roundoff = 64.0 * f64::EPSILON * scale;
    let mut raw = Vec::with_capacity(groups.len());
    for (g, &rep) in groups.iter().zip(&reps) {
        let proj = if g.len() == n {
            CMatrix::identity(n, n)
        } else {
            let mut qq = q.clone();
            let mut tt = t.clone();
            let select: Vec<bool> = (0..n).map(|i| g.contains(&i)).collect();
            let k = matcore::reorder_schur(&mut qq, &mut tt, &select);
            let t11 = tt.view((0, 0), (k, k)).into_owned();
            let t12 = tt.view((0, k), (k, n - k)).into_owned();
            let t22 = tt.view((k, k), (n - k, n - k)).into_owned();
            let x = matcore::solve_triangular_sylvester(&t11, &t22, &(-t12))?;
            let mut core = CMatrix::zeros(n, n);
            for i in 0..k {
                core[(i, i)] = C64::new(1.0, 0.0);
            }
            core.view_mut((0, k), (k, n - k)).copy_from(&(-x));
            &qq * core * qq.adjoint()
        };
        let mut nil = (b - CMatrix::identity(n, n) * rep) * &proj;
        // Only roundoff is cleared here; the cluster tolerance decides the index.
        for z in nil.iter_mut() {
            if z.norm() < roundoff {
                *z = C64::new(0.0, 0.0);
            }
        }
        let index = nilpotent_index(&nil, nil_thresh, g.len());
        if index == 1 {
            nil.fill(C64::new(0.0, 0.0));
        }
        raw.push((rep, proj, nil, index, g.len()));
    }
    Ok(assemble(b, raw, tol))
}

fn rank_index(nil: &CMatrix, thresh: f64, max: usize) -> usize {
    let mut pow = CMatrix::identity(nil.nrows(), nil.ncols());
    for k in 1..=max + 1 {
        pow = &pow * nil;
        let rank = matcore::singular_values(&pow).into_iter().filter(|&s| s > thresh).count();
        if rank == 0 {
            return k;
        }
    }
    max + 1
}

/// Certification residuals of a decomposition against `B` (spectral norm).
pub fn validate(dec: &SpectralDecomposition, b: &CMatrix) -> ValidationReport {
    let n = dec.dim;
    let id = CMatrix::identity(n, n);
    let mut rep = ValidationReport { index_consistent: true, ..Default::default() };
    let mut sum_p = CMatrix::zeros(n, n);
    let mut recon = CMatrix::zeros(n, n);
    let thresh = dec.cluster_tol.max(1e-12);
    for (l, blk) in dec.blocks.iter().enumerate() {
        let p = &blk.projection;
        rep.idempotency = rep.idempotency.max(sp(&(p * p - p)));
        for (k, other) in dec.blocks.iter().enumerate() {
            if k != l {
                rep.orthogonality = rep.orthogonality.max(sp(&(p * &other.projection)));
            }
        }
        let shifted = b - &id * blk.eigenvalue;
        let target = &id - p;
        let s = &blk.reduced_resolvent;
        rep.resolvent_defect =
            rep.resolvent_defect.max(sp(&(&shifted * s - &target))).max(sp(&(s * &shifted - &target)));
        let mut pow = id.clone();
        for _ in 0..blk.index {
            pow = &pow * &blk.nilpotent;
        }
        rep.nilpotent_defect = rep.nilpotent_defect.max(sp(&pow));
        let by_rank = if blk.nilpotent.iter().all(|z| z.norm() == 0.0) { 1 } else { rank_index(&blk.nilpotent, thresh, blk.rank) };
        if by_rank != blk.index {
            rep.index_consistent = false;
        }
        sum_p += p;
        recon += p * blk.eigenvalue + &blk.nilpotent;
    }
    rep.identity_defect = sp(&(sum_p - &id));
    rep.reconstruction_defect = sp(&(recon - b));
    rep
}

/// One Jordan block in a user-supplied canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanBlock {
    pub eigenvalue: C64,
    pub size: usize,
}

impl JordanBlock {
    pub fn new(eigenvalue: C64, size: usize) -> Self {
        JordanBlock { eigenvalue, size }
    }
}

/// Builds the decomposition exactly from `B = R J R^{-1}`.
///
/// The columns of `r` follow `blocks` in order. Jordan blocks sharing an
/// eigenvalue (within `1e-12`) are merged into one eigenspace.
pub fn decompose_from_user(b: &CMatrix, r: &CMatrix, blocks: &[JordanBlock]) -> Result<SpectralDecomposition> {
    let n = b.nrows();
    if r.nrows() != n || r.ncols() != n || b.ncols() != n {
        return Err(Error::Dimension(format!("similarity must be {n}x{n}")));
    }
    let total: usize = blocks.iter().map(|j| j.size).sum();
    if total != n {
        return Err(Error::Dimension(format!("Jordan layout covers {total} columns, expected {n}")));
    }
    let rinv = matcore::inverse(r)?;
    let mut groups: Vec<(C64, Vec<(usize, usize)>)> = Vec::new();
    let mut offset = 0;
    for jb in blocks {
        match groups.iter_mut().find(|g| (g.0 - jb.eigenvalue).norm() <= 1e-12) {
            Some(g) => g.1.push((offset, jb.size)),
            None => groups.push((jb.eigenvalue, vec![(offset, jb.size)])),
        }
        offset += jb.size;
    }
    let mut raw = Vec::with_capacity(groups.len());
    for (eig, parts) in groups {
        let mut e = CMatrix::zeros(n, n);
        let mut j = CMatrix::zeros(n, n);
        let mut index = 1;
        let mut rank = 0;
        for (start, size) in parts {
            for i in start..start + size {
                e[(i, i)] = C64::new(1.0, 0.0);
                if i + 1 < start + size {
                    j[(i, i + 1)] = C64::new(1.0, 0.0);
                }
            }
            index = index.max(size);
            rank += size;
        }
        let proj = r * e * &rinv;
        let nil = if index > 1 { r * j * &rinv } else { CMatrix::zeros(n, n) };
        raw.push((eig, proj, nil, index, rank));
    }
    let tol = DEFAULT_CLUSTER_TOL * sp(b).max(f64::MIN_POSITIVE);
    Ok(assemble(b, raw, tol))
}
