//! Effective generators `D`, `D~`, `K`, the transforms relating them to
//! `gamma B + C`, and the eternal-adiabaticity bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::bloch::{self, BlochSolution, SeriesCoefficients};
use crate::error::{Error, Result};
use crate::liouville::{Superoperator, Tag};
use crate::matcore::{self, op_norm, NormKind};
use crate::spectral::SpectralDecomposition;
use crate::{CMatrix, C64};

#[derive(Debug, Clone)]
pub struct BlockEffective {
    pub d: CMatrix,
    pub dt: CMatrix,
    pub k: CMatrix,
    pub w: CMatrix,
    pub winv: CMatrix,
    pub p_tilde: CMatrix,
    /// `(U~ U)^{-1/2}` restricted to the block.
    pub inv_sqrt: CMatrix,
}

#[derive(Debug, Clone)]
pub struct EffectiveGenerators {
    pub gamma: f64,
    pub d: Superoperator,
    pub dt: Superoperator,
    pub k: Superoperator,
    pub u: CMatrix,
    pub ut: CMatrix,
    pub w: CMatrix,
    pub winv: CMatrix,
    pub per_block: Vec<BlockEffective>,
    /// `K^(j)` summed over blocks, when requested.
    pub series: Option<Vec<CMatrix>>,
}

fn sp(a: &CMatrix) -> f64 {
    op_norm(a, NormKind::Spectral)
}

fn cg(g: f64) -> C64 {
    C64::new(g, 0.0)
}

// Block metric `M = 1 + E`, `E = Omega~ S^2 Omega / g^2`, which commutes with `P_l`.
struct Metric {
    e: CMatrix,
    root: CMatrix,
    inv_root: CMatrix,
    inv: CMatrix,
}

fn block_metric(dec: &SpectralDecomposition, l: usize, sol: &BlochSolution, gamma: f64) -> Result<Metric> {
    let blk = &dec.blocks[l];
    let n = dec.dim;
    let s2 = &blk.reduced_resolvent * &blk.reduced_resolvent;
    let e = (&sol.omega_t * s2 * &sol.omega) * cg(1.0 / (gamma * gamma));
    let m = CMatrix::identity(n, n) + &e;
    let root = matcore::principal_sqrt(&m)?;
    Ok(Metric { inv_root: matcore::inverse(&root)?, inv: matcore::inverse(&m)?, root, e })
}

/// Assembles `D`, `D~`, `K` and the similarity transforms from per-block solutions.
pub fn build_effective(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, solutions: &[BlochSolution]) -> Result<EffectiveGenerators> {
    if c.nrows() != dec.dim || c.ncols() != dec.dim {
        return Err(Error::Dimension(format!("C is {}x{}, expected {d}x{d}", c.nrows(), c.ncols(), d = dec.dim)));
    }
    if solutions.len() != dec.blocks.len() {
        return Err(Error::Input(format!("expected {} block solutions, got {}", dec.blocks.len(), solutions.len())));
    }
    let n = dec.dim;
    let per_block: Vec<BlockEffective> = solutions
        .par_iter()
        .enumerate()
        .map(|(l, sol)| -> Result<BlockEffective> {
            if sol.block != l {
                return Err(Error::Input(format!("solution {l} belongs to block {}", sol.block)));
            }
            let blk = &dec.blocks[l];
            let p = &blk.projection;
            let met = block_metric(dec, l, sol, gamma)?;
            let inv_sqrt = &met.inv_root * p;
            let w = &sol.u * &inv_sqrt;
            let winv = &inv_sqrt * &sol.ut;
            let d = p * &sol.omega * p;
            // K_l = M^{1/2} (gB + D_l) M^{-1/2} P_l - g B_l. The b_l P_l part cancels
            // exactly, leaving g [M^{1/2} - 1, N_l] M^{-1/2} with
            // M^{1/2} - 1 = E (M^{1/2} + 1)^{-1}, free of O(g) cancellation.
            let mut k = p * (&met.root * &d * &met.inv_root) * p;
            if blk.index > 1 {
                let x = &met.e * matcore::inverse(&(&met.root + CMatrix::identity(n, n)))?;
                let nil = &blk.nilpotent;
                k += p * ((&x * nil - nil * &x) * &met.inv_root) * p * cg(gamma);
            }
            let p_tilde = &sol.u * &met.inv * p * &sol.ut;
            Ok(BlockEffective { d, dt: p * &sol.omega_t * p, k, w, winv, p_tilde, inv_sqrt })
        })
        .collect::<Result<_>>()?;
    let mut d = CMatrix::zeros(n, n);
    let mut dt = CMatrix::zeros(n, n);
    let mut k = CMatrix::zeros(n, n);
    let mut u = CMatrix::zeros(n, n);
    let mut ut = CMatrix::zeros(n, n);
    let mut w = CMatrix::zeros(n, n);
    let mut winv = CMatrix::zeros(n, n);
    for (be, sol) in per_block.iter().zip(solutions) {
        d += &be.d;
        dt += &be.dt;
        k += &be.k;
        u += &sol.u;
        ut += &sol.ut;
        w += &be.w;
        winv += &be.winv;
    }
    Ok(EffectiveGenerators {
        gamma,
        d: Superoperator::new(d, Tag::EffectiveD)?,
        dt: Superoperator::new(dt, Tag::EffectiveDt)?,
        k: Superoperator::new(k, Tag::EffectiveK)?,
        u,
        ut,
        w,
        winv,
        per_block,
        series: None,
    })
}

/// Full pipeline: solve every block and assemble.
pub fn effective_from_decomposition(
    dec: &SpectralDecomposition,
    c: &CMatrix,
    gamma: f64,
    opts: &bloch::SolveOptions,
) -> Result<(Vec<BlochSolution>, EffectiveGenerators)> {
    let sols = bloch::solve_all(dec, c, gamma, opts)?;
    let eff = build_effective(dec, c, gamma, &sols)?;
    Ok((sols, eff))
}

#[derive(Debug, Clone)]
pub struct PerturbedProjection {
    pub p_tilde: CMatrix,
    pub idempotency: f64,
    /// `||[gamma B + C, P~]||`
    pub commutation: f64,
}

/// `P~ = U (U~ U)^{-1} U~` with its defining residuals.
pub fn perturbed_projection(
    dec: &SpectralDecomposition,
    b: &CMatrix,
    c: &CMatrix,
    gamma: f64,
    l: usize,
    u: &CMatrix,
    ut: &CMatrix,
) -> Result<PerturbedProjection> {
    let p = &dec.blocks[l].projection;
    let n = dec.dim;
    let m = ut * u + (CMatrix::identity(n, n) - p);
    let m_inv = matcore::inverse(&m).map_err(|e| match e {
        Error::Singular { cond } => Error::Precondition(format!("U~U is singular on the block (cond {cond:.2e}); gamma too small")),
        other => other,
    })?;
    let p_tilde = u * m_inv * p * ut;
    let total = b * cg(gamma) + c;
    Ok(PerturbedProjection {
        idempotency: sp(&(&p_tilde * &p_tilde - &p_tilde)),
        commutation: sp(&(&total * &p_tilde - &p_tilde * &total)),
        p_tilde,
    })
}

// ---------------------------------------------------------------------------
// Spectrum comparison

/// Greedy nearest-neighbour matching of two spectra. Returns the largest
/// matched distance and the number of points whose nearest partner had
/// already been taken.
pub fn spectrum_distance(a: &[C64], b: &[C64]) -> (f64, usize) {
    if a.len() != b.len() {
        return (f64::INFINITY, 0);
    }
    let mut sa = a.to_vec();
    sa.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut collisions = 0;
    for z in &sa {
        let nearest = b.iter().map(|w| (*w - z).norm()).fold(f64::INFINITY, f64::min);
        let pick = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .min_by(|p, q| (*p.1 - z).norm().partial_cmp(&(*q.1 - z).norm()).unwrap())
            .map(|p| p.0)
            .unwrap();
        // a partner strictly farther than the nearest one means the nearest was
        // already taken; ties between degenerate copies do not count
        if (b[pick] - z).norm() - nearest > 1e-8 * (1.0 + z.norm()) {
            collisions += 1;
        }
        used[pick] = true;
        worst = worst.max((b[pick] - z).norm());
    }
    (worst, collisions)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimilarityReport {
    /// `||(gB + C) U_l - U_l (gB + D_l)||` per block.
    pub intertwining_u: Vec<f64>,
    /// `||U~_l (gB + C) - (gB + D~_l) U~_l||` per block.
    pub intertwining_ut: Vec<f64>,
    /// `||(gB + C) W - W (gB + K)||`
    pub global_w: f64,
    pub spectrum_distance: f64,
    pub spectrum_collisions: usize,
    /// `max_l ||[K, P_l]||`
    pub block_structure: f64,
    /// `max_l ||W_l W_l - P~_l P_l||`
    pub direct_rotation: f64,
    /// `max_l` difference between the W-form of `K_l` and its conjugation form.
    pub conjugation_consistency: f64,
    /// `max_l ||P~_l^2 - P~_l||`
    pub p_tilde_idempotency: f64,
    /// `max_l ||[gB + C, P~_l]||`
    pub p_tilde_commutation: f64,
    /// `max_l max(||W_l - W_l P_l||, ||W_l - P~_l W_l||)`
    pub intertwining_w: f64,
}

impl SimilarityReport {
    pub fn max_residual(&self) -> f64 {
        self.intertwining_u
            .iter()
            .chain(&self.intertwining_ut)
            .copied()
            .chain([self.global_w, self.block_structure, self.direct_rotation, self.conjugation_consistency, self.p_tilde_idempotency, self.p_tilde_commutation, self.intertwining_w])
            .fold(0.0, f64::max)
    }
}

pub fn verify_similarity(
    dec: &SpectralDecomposition,
    gen: &EffectiveGenerators,
    solutions: &[BlochSolution],
    b: &CMatrix,
    c: &CMatrix,
) -> Result<SimilarityReport> {
    let gamma = gen.gamma;
    let gb = b * cg(gamma);
    let total = &gb + c;
    let mut rep = SimilarityReport {
        intertwining_u: Vec::new(),
        intertwining_ut: Vec::new(),
        global_w: sp(&(&total * &gen.w - &gen.w * (&gb + &gen.k.matrix))),
        spectrum_distance: 0.0,
        spectrum_collisions: 0,
        block_structure: 0.0,
        direct_rotation: 0.0,
        conjugation_consistency: 0.0,
        p_tilde_idempotency: 0.0,
        p_tilde_commutation: 0.0,
        intertwining_w: 0.0,
    };
    for (l, (sol, be)) in solutions.iter().zip(&gen.per_block).enumerate() {
        let p = &dec.blocks[l].projection;
        rep.intertwining_u.push(sp(&(&total * &sol.u - &sol.u * (&gb + &be.d))));
        rep.intertwining_ut.push(sp(&(&sol.ut * &total - (&gb + &be.dt) * &sol.ut)));
        rep.block_structure = rep.block_structure.max(sp(&(&gen.k.matrix * p - p * &gen.k.matrix)));
        rep.direct_rotation = rep.direct_rotation.max(sp(&(&be.w * &be.w - &be.p_tilde * p)));
        rep.p_tilde_idempotency = rep.p_tilde_idempotency.max(sp(&(&be.p_tilde * &be.p_tilde - &be.p_tilde)));
        rep.p_tilde_commutation = rep.p_tilde_commutation.max(sp(&(&total * &be.p_tilde - &be.p_tilde * &total)));
        rep.intertwining_w = rep.intertwining_w.max(sp(&(&be.w - &be.w * p))).max(sp(&(&be.w - &be.p_tilde * &be.w)));
        // K_l = P (W_l^{-1} (gB + C) W_l - g B_l) P
        let w_form = p * (&be.winv * &total * &be.w - dec.block_generator(l) * cg(gamma)) * p;
        rep.conjugation_consistency = rep.conjugation_consistency.max(sp(&(w_form - &be.k)));
    }
    let e1 = matcore::eigenvalues(&total)?;
    let e2 = matcore::eigenvalues(&(&gb + &gen.k.matrix))?;
    let (dist, coll) = spectrum_distance(&e1, &e2);
    rep.spectrum_distance = dist;
    rep.spectrum_collisions = coll;
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Series of the effective generator

/// Block-summed `K^(0)..K^(order)`: explicit formulas up to third order,
/// power-series composition beyond.
pub fn k_series(dec: &SpectralDecomposition, c: &CMatrix, order: usize) -> Result<Vec<CMatrix>> {
    let n = dec.dim;
    let per: Vec<SeriesCoefficients> = (0..dec.blocks.len())
        .into_par_iter()
        .map(|l| if order <= 3 { bloch::perturbative_k(dec, c, l, order) } else { Ok(bloch::perturbative_k_series(dec, c, l, order)) })
        .collect::<Result<_>>()?;
    let mut out = vec![CMatrix::zeros(n, n); order + 1];
    for s in per {
        for (j, m) in s.coeffs.into_iter().enumerate() {
            out[j] += m;
        }
    }
    Ok(out)
}

/// `K_eff^(k) = sum_{j <= k} K^(j) / gamma^j`.
pub fn truncated_k(series: &[CMatrix], gamma: f64, k: usize) -> CMatrix {
    let n = series[0].nrows();
    let mut acc = CMatrix::zeros(n, n);
    for (j, m) in series.iter().enumerate().take(k + 1) {
        acc += m * cg(gamma.powi(-(j as i32)));
    }
    acc
}

// ---------------------------------------------------------------------------
// Eternal bounds

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub gamma_l: Vec<f64>,
    pub p_norms: Vec<f64>,
    /// `(1/gamma) sum_l gamma_l ||P_l||`
    pub loose_bound: f64,
    /// Tight bounds without the semigroup factor.
    pub tight_factor_d: f64,
    pub tight_factor_k: f64,
    pub tight_bound_d: f64,
    pub tight_bound_k: f64,
    pub unitary_bound: Option<f64>,
    /// `gamma >= 2 max gamma_l`
    pub applicable: bool,
    /// `gamma >= max gamma_l`, where the tight formulas are defined.
    pub tight_valid: bool,
    pub semigroup_m: f64,
    pub norm: NormKind,
    /// `sum_l (sqrt((1 + Theta_l)/(1 - Theta_l)) - 1)`, bounding `||W - 1||`.
    pub w_bound: f64,
}

/// Largest `||exp(t G)||` over the given times.
pub fn estimate_semigroup_bound(generator: &CMatrix, times: &[f64], norm: NormKind) -> Result<f64> {
    let vals: Vec<f64> = times
        .par_iter()
        .map(|&t| matcore::expm(&(generator * cg(t))).map(|e| op_norm(&e, norm)))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(1.0, f64::max))
}

pub fn eternal_bound(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, norm: NormKind, unitary: bool, semigroup_m: f64) -> BoundReport {
    let gamma_l: Vec<f64> = (0..dec.blocks.len()).map(|l| bloch::gamma_threshold(dec, c, l, norm)).collect();
    let p_norms: Vec<f64> = dec.blocks.iter().map(|b| op_norm(&b.projection, norm)).collect();
    let gmax = gamma_l.iter().cloned().fold(0.0, f64::max);
    let loose_bound = gamma_l.iter().zip(&p_norms).map(|(g, p)| g * p).sum::<f64>() / gamma;
    let tight_valid = gamma >= gmax;
    let (mut fd, mut fk, mut wb) = (0.0, 0.0, 0.0);
    if tight_valid {
        for (g, p) in gamma_l.iter().zip(&p_norms) {
            let x = g / gamma;
            let r = (1.0 - x).sqrt();
            fd += (1.0 / r - 1.0) * p;
            fk += (1.0 / r + 1.0) * (1.0 / r.sqrt() - 1.0) * p;
            let th = bloch::theta_closed_form(*g, gamma);
            wb += ((1.0 + th) / (1.0 - th)).sqrt() - 1.0;
        }
    } else {
        fd = f64::INFINITY;
        fk = f64::INFINITY;
        wb = f64::INFINITY;
    }
    let unitary_bound = if unitary {
        let eigs = dec.eigenvalues();
        let mut eta = f64::INFINITY;
        for i in 0..eigs.len() {
            for j in (i + 1)..eigs.len() {
                eta = eta.min((eigs[i] - eigs[j]).norm());
            }
        }
        let arg = 1.0 - 4.0 * op_norm(c, norm) / (gamma * eta);
        Some(if eigs.len() < 2 {
            0.0
        } else if arg > 0.0 {
            2.0 * (eigs.len() as f64).sqrt() * (arg.powf(-0.25) - 1.0)
        } else {
            f64::INFINITY
        })
    } else {
        None
    };
    BoundReport {
        gamma,
        gamma_l,
        p_norms,
        loose_bound,
        tight_factor_d: fd,
        tight_factor_k: fk,
        tight_bound_d: fd * semigroup_m,
        tight_bound_k: fk * semigroup_m,
        unitary_bound,
        applicable: gamma >= 2.0 * gmax,
        tight_valid,
        semigroup_m,
        norm,
        w_bound: wb,
    }
}
