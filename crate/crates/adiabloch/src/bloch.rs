//! Adiabatic Bloch equations for one eigenspace of `B`.
//!
//! For block `l` with projection `P`, nilpotent `N` and reduced resolvent `S`
//! the unknowns satisfy
//!
//! ```text
//! Omega:  S Omega^2 / g - (1 + C S / g) Omega + S Omega N + C P = 0,   Omega (1 - P) = 0
//! U:      U - S U N + S (C U - U C U) / g - P = 0,                     U (1 - P) = 0
//! ```
//!
//! The conjugate unknowns (tilde) solve the same equations with every
//! product reversed, which is exactly the transposed problem. Every solver
//! for a tilde quantity therefore runs the plain solver on transposed data.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{op_norm, solve_linear, NormKind};
use crate::spectral::SpectralDecomposition;
use crate::{CMatrix, C64};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedPoint,
    Newton,
    /// Fixed point first, Newton if that fails.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub method: Method,
    /// Residual tolerance, relative to `max(1, ||C P||_F)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation of the fixed-point map; `1.0` is the plain iteration.
    /// Any other value is reported as uncertified.
    pub relaxation: f64,
    /// Abort when an iterate leaves the Kantorovich uniqueness ball.
    pub enforce_ball: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { method: Method::Auto, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, relaxation: 1.0, enforce_ball: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveInfo {
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
    pub constraint_defect: f64,
    /// Residual after each outer iteration, starting with the initial guess.
    pub history: Vec<f64>,
    /// False when the Kantorovich condition fails or relaxation was used.
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BlochResiduals {
    pub omega: f64,
    pub omega_t: f64,
    pub u: f64,
    pub ut: f64,
    pub omega_constraint: f64,
    pub omega_t_constraint: f64,
    pub u_constraint: f64,
    pub ut_constraint: f64,
    /// `||U - (P - S Omega / g)||`, with `U` solved independently.
    pub u_consistency: f64,
    pub ut_consistency: f64,
}

#[derive(Debug, Clone)]
pub struct BlochSolution {
    pub block: usize,
    pub omega: CMatrix,
    pub omega_t: CMatrix,
    pub u: CMatrix,
    pub ut: CMatrix,
    pub residuals: BlochResiduals,
    pub method: Method,
    pub iterations: usize,
    pub certified: bool,
}

// Block data in the orientation being solved.
#[derive(Clone)]
struct Blk {
    p: CMatrix,
    n: CMatrix,
    s: CMatrix,
    index: usize,
}

impl Blk {
    fn new(dec: &SpectralDecomposition, l: usize) -> Self {
        let b = &dec.blocks[l];
        Blk { p: b.projection.clone(), n: b.nilpotent.clone(), s: b.reduced_resolvent.clone(), index: b.index }
    }

    fn transposed(&self) -> Self {
        Blk { p: self.p.transpose(), n: self.n.transpose(), s: self.s.transpose(), index: self.index }
    }

    fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn has_nilpotent(&self) -> bool {
        self.index > 1
    }

    // <A> = sum_{k < index} S^k A N^k
    fn bracket(&self, a: &CMatrix) -> CMatrix {
        let mut acc = a.clone();
        let mut term = a.clone();
        for _ in 1..self.index {
            term = &self.s * term * &self.n;
            acc += &term;
        }
        acc
    }

    fn complement(&self, x: &CMatrix) -> CMatrix {
        x - x * &self.p
    }
}

fn fro(a: &CMatrix) -> f64 {
    a.norm()
}

fn sp(a: &CMatrix) -> f64 {
    op_norm(a, NormKind::Spectral)
}

fn scale(g: f64) -> C64 {
    C64::new(1.0 / g, 0.0)
}

fn check_block(dec: &SpectralDecomposition, c: &CMatrix, l: usize, gamma: f64) -> Result<()> {
    if l >= dec.blocks.len() {
        return Err(Error::Input(format!("block {l} out of range ({} blocks)", dec.blocks.len())));
    }
    if c.nrows() != dec.dim || c.ncols() != dec.dim {
        return Err(Error::Dimension(format!("C must be {0}x{0}", dec.dim)));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Input(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Sandwich sum `sum_n S^n A N^n` (right) or `sum_n N^n A S^n` (left).
pub fn bracket(dec: &SpectralDecomposition, l: usize, a: &CMatrix, orientation: Orientation) -> CMatrix {
    let blk = Blk::new(dec, l);
    match orientation {
        Orientation::Right => blk.bracket(a),
        Orientation::Left => blk.transposed().bracket(&a.transpose()).transpose(),
    }
}

// ---------------------------------------------------------------------------
// Residual maps (right orientation)

fn omega_map(blk: &Blk, c: &CMatrix, g: f64, x: &CMatrix) -> CMatrix {
    let cs = c * &blk.s;
    let sx = &blk.s * x;
    (&sx * x) * scale(g) - x - (cs * x) * scale(g) + sx * &blk.n + c * &blk.p
}

fn u_map(blk: &Blk, c: &CMatrix, g: f64, x: &CMatrix) -> CMatrix {
    let cx = c * x;
    x - &blk.s * x * &blk.n + (&blk.s * (&cx - x * &cx)) * scale(g) - &blk.p
}

pub fn omega_residual(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, omega: &CMatrix) -> f64 {
    fro(&omega_map(&Blk::new(dec, l), c, gamma, omega))
}

pub fn omega_t_residual(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, omega_t: &CMatrix) -> f64 {
    fro(&omega_map(&Blk::new(dec, l).transposed(), &c.transpose(), gamma, &omega_t.transpose()))
}

pub fn u_residual(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, u: &CMatrix) -> f64 {
    fro(&u_map(&Blk::new(dec, l), c, gamma, u))
}

pub fn ut_residual(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, ut: &CMatrix) -> f64 {
    fro(&u_map(&Blk::new(dec, l).transposed(), &c.transpose(), gamma, &ut.transpose()))
}

// ---------------------------------------------------------------------------
// Solvers

#[derive(Clone, Copy, PartialEq)]
enum Unknown {
    Omega,
    U,
}

struct Problem<'a> {
    blk: &'a Blk,
    c: &'a CMatrix,
    g: f64,
    kind: Unknown,
    tol_abs: f64,
    /// Radius of the uniqueness ball, if certified.
    ball: Option<f64>,
}

impl Problem<'_> {
    fn residual(&self, x: &CMatrix) -> CMatrix {
        match self.kind {
            Unknown::Omega => omega_map(self.blk, self.c, self.g, x),
            Unknown::U => u_map(self.blk, self.c, self.g, x),
        }
    }

    fn initial(&self) -> CMatrix {
        match self.kind {
            Unknown::Omega => self.blk.bracket(&(self.c * &self.blk.p)),
            Unknown::U => self.blk.p.clone(),
        }
    }

    // ||U - P|| for the iterate, the quantity the Kantorovich ball controls.
    fn distance(&self, x: &CMatrix) -> f64 {
        match self.kind {
            Unknown::Omega => sp(&(&self.blk.s * x)) / self.g,
            Unknown::U => sp(&(x - &self.blk.p)),
        }
    }

    fn check_ball(&self, x: &CMatrix) -> Result<()> {
        if let Some(radius) = self.ball {
            let distance = self.distance(x);
            if distance >= radius {
                return Err(Error::BranchEscape { distance, radius });
            }
        }
        Ok(())
    }

    // Small part E of the Newton operator, written as sigma (I(A) + E(A)).
    fn small(&self, x: &CMatrix, a: &CMatrix) -> CMatrix {
        let s = &self.blk.s;
        let c = self.c;
        match self.kind {
            // J(A) = -(A - S A N) + (S X A + S A X - C S A) / g
            Unknown::Omega => -(s * x * a + s * a * x - c * s * a) * scale(self.g),
            // J(A) = (A - S A N) + S (C A - X C A - A C X) / g
            Unknown::U => (s * (c * a - x * c * a - a * c * x)) * scale(self.g),
        }
    }

    fn sigma(&self) -> f64 {
        match self.kind {
            Unknown::Omega => -1.0,
            Unknown::U => 1.0,
        }
    }

    fn fixed_point_step(&self, x: &CMatrix) -> CMatrix {
        let blk = self.blk;
        let c = self.c;
        match self.kind {
            // f(X) = C P + S X N - C S X / g + S X^2 / g
            Unknown::Omega => {
                let sx = &blk.s * x;
                c * &blk.p + &sx * &blk.n - (c * &sx) * scale(self.g) + (sx * x) * scale(self.g)
            }
            // X = <P - S (C X - X C X) / g>
            Unknown::U => {
                let cx = c * x;
                blk.bracket(&(&blk.p - (&blk.s * (&cx - x * &cx)) * scale(self.g)))
            }
        }
    }
}

fn fixed_point(pr: &Problem, opts: &SolveOptions) -> Result<(CMatrix, SolveInfo)> {
    let mut x = pr.initial();
    let mut res = fro(&pr.residual(&x));
    let mut history = vec![res];
    let w = C64::new(opts.relaxation, 0.0);
    for it in 1..=opts.max_iter {
        if res <= pr.tol_abs {
            return Ok((x, info(pr, Method::FixedPoint, it - 1, res, history)));
        }
        let next = pr.fixed_point_step(&x);
        x = if opts.relaxation == 1.0 { next } else { &x + (next - &x) * w };
        x = &x * &pr.blk.p;
        if opts.enforce_ball {
            pr.check_ball(&x)?;
        }
        res = fro(&pr.residual(&x));
        history.push(res);
        if !res.is_finite() || res > 1e12 {
            return Err(Error::NotConverged { iterations: it, residual: res });
        }
    }
    if res <= pr.tol_abs {
        return Ok((x, info(pr, Method::FixedPoint, opts.max_iter, res, history)));
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual: res })
}

fn info(pr: &Problem, method: Method, iterations: usize, residual: f64, history: Vec<f64>) -> SolveInfo {
    SolveInfo { method, iterations, residual, constraint_defect: 0.0, history, certified: pr.ball.is_some() }
}

// Matrix of a linear map on n x n matrices in column-stacking coordinates.
fn map_matrix(n: usize, f: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
    let mut m = CMatrix::zeros(n * n, n * n);
    let mut e = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            e[(i, j)] = C64::new(1.0, 0.0);
            let col = f(&e);
            m.column_mut(j * n + i).copy_from_slice(col.as_slice());
            e[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    m
}

// Solves I(A) + E(A) = R for A = A P.
fn newton_step(pr: &Problem, x: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    let blk = pr.blk;
    let mut a = blk.bracket(rhs);
    let mut last = f64::INFINITY;
    let target = 1e-15 * fro(&a).max(pr.tol_abs);
    for _ in 0..200 {
        let next = blk.bracket(&(rhs - pr.small(x, &a))) * &blk.p;
        let delta = fro(&(&next - &a));
        a = next;
        if delta <= target {
            return Ok(a);
        }
        if !(delta < 0.9 * last) && last.is_finite() {
            break;
        }
        last = delta;
    }
    // Inner iteration does not contract: dense solve.
    let n = blk.dim();
    let pc = CMatrix::identity(n, n) - &blk.p;
    let m = map_matrix(n, |e| {
        let ep = e * &blk.p;
        &ep - &blk.s * &ep * &blk.n + pr.small(x, &ep) + e * &pc
    });
    let v = solve_linear(&m, &CMatrix::from_column_slice(n * n, 1, rhs.as_slice()))?;
    Ok(CMatrix::from_column_slice(n, n, v.as_slice()))
}

fn newton(pr: &Problem, opts: &SolveOptions) -> Result<(CMatrix, SolveInfo)> {
    let mut x = pr.initial();
    let mut f = pr.residual(&x);
    let mut res = fro(&f);
    let mut history = vec![res];
    let max = opts.max_iter.min(100);
    let mut stalled = 0;
    for it in 1..=max {
        if res <= pr.tol_abs {
            return Ok((x, info(pr, Method::Newton, it - 1, res, history)));
        }
        let rhs = &f * C64::new(-pr.sigma(), 0.0);
        let step = newton_step(pr, &x, &rhs)?;
        let next = (&x + step) * &pr.blk.p;
        if opts.enforce_ball {
            pr.check_ball(&next)?;
        }
        let fn_ = pr.residual(&next);
        let rn = fro(&fn_);
        if !rn.is_finite() {
            return Err(Error::NotConverged { iterations: it, residual: rn });
        }
        if rn >= res {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        }
        x = next;
        f = fn_;
        res = rn;
        history.push(res);
    }
    if res <= pr.tol_abs {
        let n = history.len() - 1;
        return Ok((x, info(pr, Method::Newton, n, res, history)));
    }
    Err(Error::NotConverged { iterations: history.len() - 1, residual: res })
}

fn solve_generic(blk: &Blk, c: &CMatrix, g: f64, kind: Unknown, opts: &SolveOptions, ball: Option<f64>) -> Result<(CMatrix, SolveInfo)> {
    let tol_abs = opts.tol * fro(&(c * &blk.p)).max(1.0);
    let pr = Problem { blk, c, g, kind, tol_abs, ball };
    let mut out = match opts.method {
        Method::FixedPoint => fixed_point(&pr, opts),
        Method::Newton => newton(&pr, opts),
        Method::Auto => match fixed_point(&pr, opts) {
            Ok(v) => Ok(v),
            Err(Error::BranchEscape { .. }) | Err(Error::NotConverged { .. }) => newton(&pr, opts),
            Err(e) => Err(e),
        },
    }?;
    out.1.constraint_defect = fro(&blk.complement(&out.0));
    out.1.certified &= opts.relaxation == 1.0 || opts.method == Method::Newton;
    Ok(out)
}

fn ball_radius(dec: &SpectralDecomposition, c: &CMatrix, g: f64, l: usize) -> Option<f64> {
    let rep = kantorovich_report(dec, c, g, l, NormKind::Spectral);
    if rep.solvable {
        Some(rep.xi)
    } else {
        None
    }
}

pub fn solve_omega(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, opts: &SolveOptions) -> Result<(CMatrix, SolveInfo)> {
    check_block(dec, c, l, gamma)?;
    let ball = ball_radius(dec, c, gamma, l);
    solve_generic(&Blk::new(dec, l), c, gamma, Unknown::Omega, opts, ball)
}

pub fn solve_omega_conjugate(
    dec: &SpectralDecomposition,
    c: &CMatrix,
    gamma: f64,
    l: usize,
    opts: &SolveOptions,
) -> Result<(CMatrix, SolveInfo)> {
    check_block(dec, c, l, gamma)?;
    let ball = ball_radius(dec, c, gamma, l);
    let (x, mut info) = solve_generic(&Blk::new(dec, l).transposed(), &c.transpose(), gamma, Unknown::Omega, opts, ball)?;
    info.constraint_defect = fro(&(&x - &x * &dec.blocks[l].projection.transpose()));
    Ok((x.transpose(), info))
}

pub fn solve_u(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, opts: &SolveOptions) -> Result<(CMatrix, SolveInfo)> {
    check_block(dec, c, l, gamma)?;
    let ball = ball_radius(dec, c, gamma, l);
    solve_generic(&Blk::new(dec, l), c, gamma, Unknown::U, opts, ball)
}

pub fn solve_ut(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, opts: &SolveOptions) -> Result<(CMatrix, SolveInfo)> {
    check_block(dec, c, l, gamma)?;
    let ball = ball_radius(dec, c, gamma, l);
    let (x, info) = solve_generic(&Blk::new(dec, l).transposed(), &c.transpose(), gamma, Unknown::U, opts, ball)?;
    Ok((x.transpose(), info))
}

// ---------------------------------------------------------------------------
// Conversions

/// `U = P - S Omega / g`.
pub fn omega_to_u(dec: &SpectralDecomposition, l: usize, omega: &CMatrix, gamma: f64) -> CMatrix {
    let b = &dec.blocks[l];
    &b.projection - (&b.reduced_resolvent * omega) * scale(gamma)
}

/// `Omega = C U - (1 - P) U (C U + g N)`.
pub fn u_to_omega(dec: &SpectralDecomposition, c: &CMatrix, l: usize, u: &CMatrix, gamma: f64) -> CMatrix {
    let b = &dec.blocks[l];
    let cu = c * u;
    let inner = u * (&cu + &b.nilpotent * C64::new(gamma, 0.0));
    &cu - (&inner - &b.projection * &inner)
}

/// `U~ = P - Omega~ S / g`.
pub fn omega_t_to_ut(dec: &SpectralDecomposition, l: usize, omega_t: &CMatrix, gamma: f64) -> CMatrix {
    let b = &dec.blocks[l];
    &b.projection - (omega_t * &b.reduced_resolvent) * scale(gamma)
}

/// `Omega~ = U~ C - (U~ C + g N) U~ (1 - P)`.
pub fn ut_to_omega_t(dec: &SpectralDecomposition, c: &CMatrix, l: usize, ut: &CMatrix, gamma: f64) -> CMatrix {
    let b = &dec.blocks[l];
    let uc = ut * c;
    let inner = (&uc + &b.nilpotent * C64::new(gamma, 0.0)) * ut;
    &uc - (&inner - &inner * &b.projection)
}

/// Solves all four equations of block `l` and cross-checks them.
pub fn solve_block(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, opts: &SolveOptions) -> Result<BlochSolution> {
    let (omega, i1) = solve_omega(dec, c, gamma, l, opts)?;
    let (omega_t, i2) = solve_omega_conjugate(dec, c, gamma, l, opts)?;
    let u = omega_to_u(dec, l, &omega, gamma);
    let ut = omega_t_to_ut(dec, l, &omega_t, gamma);
    let p = &dec.blocks[l].projection;
    let mut residuals = BlochResiduals {
        omega: i1.residual,
        omega_t: i2.residual,
        u: u_residual(dec, c, gamma, l, &u),
        ut: ut_residual(dec, c, gamma, l, &ut),
        omega_constraint: i1.constraint_defect,
        omega_t_constraint: i2.constraint_defect,
        u_constraint: fro(&(&u - &u * p)).max(fro(&(p * &u - p))),
        ut_constraint: fro(&(p * &ut - &ut)).max(fro(&(&ut * p - p))),
        ..Default::default()
    };
    // Independent U solve as a consistency check; skipped if it fails.
    let u_opts = SolveOptions { method: Method::Newton, ..*opts };
    if let Ok((u2, _)) = solve_u(dec, c, gamma, l, &u_opts) {
        residuals.u_consistency = fro(&(&u2 - &u));
    }
    if let Ok((ut2, _)) = solve_ut(dec, c, gamma, l, &u_opts) {
        residuals.ut_consistency = fro(&(&ut2 - &ut));
    }
    let method = if i1.method == i2.method { i1.method } else { Method::Auto };
    Ok(BlochSolution {
        block: l,
        omega,
        omega_t,
        u,
        ut,
        residuals,
        method,
        iterations: i1.iterations.max(i2.iterations),
        certified: i1.certified && i2.certified,
    })
}

/// Solves every block; blocks run in parallel.
pub fn solve_all(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, opts: &SolveOptions) -> Result<Vec<BlochSolution>> {
    (0..dec.blocks.len()).into_par_iter().map(|l| solve_block(dec, c, gamma, l, opts)).collect()
}

// ---------------------------------------------------------------------------
// Newton-Kantorovich certificate

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KantorovichReport {
    pub block: usize,
    pub mu: f64,
    pub beta: f64,
    pub nu: f64,
    pub lipschitz: f64,
    pub h: f64,
    pub theta: f64,
    pub xi: f64,
    pub gamma_min: f64,
    pub solvable: bool,
    pub quadratic: bool,
    pub norm: NormKind,
}

/// `sum_{k < index} (||S|| ||N||)^k`.
pub fn geometric_factor(s_norm: f64, n_norm: f64, index: usize) -> f64 {
    let q = s_norm * n_norm;
    (0..index).map(|k| q.powi(k as i32)).sum()
}

/// `gamma_l = 4 mu ||S|| ||C|| ||P||`.
pub fn gamma_threshold(dec: &SpectralDecomposition, c: &CMatrix, l: usize, norm: NormKind) -> f64 {
    let b = &dec.blocks[l];
    let sn = op_norm(&b.reduced_resolvent, norm);
    let mu = geometric_factor(sn, op_norm(&b.nilpotent, norm), b.index);
    4.0 * mu * sn * op_norm(c, norm) * op_norm(&b.projection, norm)
}

pub fn kantorovich_report(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, l: usize, norm: NormKind) -> KantorovichReport {
    let b = &dec.blocks[l];
    let sn = op_norm(&b.reduced_resolvent, norm);
    let cn = op_norm(c, norm);
    let pn = op_norm(&b.projection, norm);
    let mu = geometric_factor(sn, op_norm(&b.nilpotent, norm), b.index);
    let a = mu * sn * cn * pn / gamma;
    let lipschitz = 2.0 * sn * cn * pn / gamma;
    let gamma_min = 4.0 * mu * sn * cn * pn;
    let mut rep = KantorovichReport {
        block: l,
        mu,
        beta: f64::INFINITY,
        nu: f64::INFINITY,
        lipschitz,
        h: f64::INFINITY,
        theta: f64::INFINITY,
        xi: 0.0,
        gamma_min,
        solvable: false,
        quadratic: false,
        norm,
    };
    let denom = 1.0 - 2.0 * a;
    if denom <= 0.0 {
        return rep;
    }
    rep.beta = mu / denom;
    rep.nu = a / denom;
    rep.h = rep.beta * lipschitz * rep.nu;
    // Solvability is decided on gamma >= gamma_l, which is h <= 1/2 without
    // the rounding noise of the composed expression.
    rep.solvable = gamma >= gamma_min;
    rep.quadratic = gamma > gamma_min;
    if rep.solvable {
        let bl = rep.beta * lipschitz;
        if bl == 0.0 {
            rep.theta = 0.0;
            rep.xi = f64::INFINITY;
        } else {
            let root = (1.0 - 2.0 * rep.h).max(0.0).sqrt();
            // (1 - root) / bl rationalized, exact for small h.
            rep.theta = 2.0 * rep.nu / (1.0 + root);
            rep.xi = (1.0 + root) / bl;
        }
    }
    rep
}

/// Closed form of `Theta` in terms of `x = gamma_l / gamma`.
pub fn theta_closed_form(gamma_min: f64, gamma: f64) -> f64 {
    let r = (1.0 - gamma_min / gamma).sqrt();
    (1.0 - r) / (1.0 + r)
}

// ---------------------------------------------------------------------------
// Perturbative series

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    DSeries,
    KSeries,
    OmegaSeries,
    OmegaTSeries,
}

#[derive(Debug, Clone)]
pub struct SeriesCoefficients {
    pub block: usize,
    pub kind: SeriesKind,
    /// `coeffs[j]` multiplies `gamma^{-j}`.
    pub coeffs: Vec<CMatrix>,
}

impl SeriesCoefficients {
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// `sum_{j <= k} coeffs[j] / gamma^j`.
    pub fn partial_sum(&self, gamma: f64, k: usize) -> CMatrix {
        let n = self.coeffs[0].nrows();
        let mut acc = CMatrix::zeros(n, n);
        for (j, cj) in self.coeffs.iter().enumerate().take(k + 1) {
            acc += cj * C64::new(gamma.powi(-(j as i32)), 0.0);
        }
        acc
    }
}

fn omega_recursion(blk: &Blk, c: &CMatrix, order: usize) -> Vec<CMatrix> {
    let cs = c * &blk.s;
    let mut out: Vec<CMatrix> = Vec::with_capacity(order + 1);
    out.push(blk.bracket(&(c * &blk.p)));
    for j in 1..=order {
        let mut quad = CMatrix::zeros(blk.dim(), blk.dim());
        for i in 0..j {
            quad += &out[j - i - 1] * &out[i];
        }
        let rhs = -(&cs * &out[j - 1]) + &blk.s * quad;
        out.push(blk.bracket(&rhs));
    }
    out
}

/// Coefficients `Omega^(j)` of `Omega = sum_j Omega^(j) / gamma^j`.
pub fn omega_series(dec: &SpectralDecomposition, c: &CMatrix, l: usize, order: usize) -> SeriesCoefficients {
    SeriesCoefficients { block: l, kind: SeriesKind::OmegaSeries, coeffs: omega_recursion(&Blk::new(dec, l), c, order) }
}

/// Coefficients of the conjugate solution `Omega~`.
pub fn omega_t_series(dec: &SpectralDecomposition, c: &CMatrix, l: usize, order: usize) -> SeriesCoefficients {
    let coeffs = omega_recursion(&Blk::new(dec, l).transposed(), &c.transpose(), order).into_iter().map(|m| m.transpose()).collect();
    SeriesCoefficients { block: l, kind: SeriesKind::OmegaTSeries, coeffs }
}

/// `D^(j) = P Omega^(j) P` from the order-by-order recursion.
pub fn perturbative_d(dec: &SpectralDecomposition, c: &CMatrix, l: usize, order: usize) -> SeriesCoefficients {
    let p = &dec.blocks[l].projection;
    let coeffs = omega_series(dec, c, l, order).coeffs.into_iter().map(|m| p * m * p).collect();
    SeriesCoefficients { block: l, kind: SeriesKind::DSeries, coeffs }
}

/// `K^(0)..K^(order)` (`order <= 3`) from the explicit third-order formulas.
pub fn perturbative_k(dec: &SpectralDecomposition, c: &CMatrix, l: usize, order: usize) -> Result<SeriesCoefficients> {
    if order > 3 {
        return Err(Error::Input(format!("closed forms exist up to order 3; use perturbative_k_series for order {order}")));
    }
    let blk = Blk::new(dec, l);
    let (p, s, n) = (&blk.p, &blk.s, &blk.n);
    let r = |a: &CMatrix| blk.bracket(a);
    let lb = |a: &CMatrix| blk.transposed().bracket(&a.transpose()).transpose();
    let half = C64::new(0.5, 0.0);
    let s2 = s * s;
    let s3 = &s2 * s;
    let cs = c * s;
    let sc = s * c;
    let rc = r(c);
    let lc = lb(c);

    let mut coeffs = vec![p * c * p];
    if order >= 1 {
        let k1 = -(p * &cs * &rc * p + p * &lc * &sc * p) * half;
        coeffs.push(k1);
    }
    if order >= 2 {
        let r_cs_c = r(&(&cs * &rc));
        let l_c_sc = lb(&(&lc * &sc));
        let r_cpc = r(&(&rc * p * c));
        let l_cpc = lb(&(c * p * &lc));
        let k2 = (p * &cs * &r_cs_c * p + p * &l_c_sc * &sc * p - p * c * &s2 * &r_cpc * p - p * &l_cpc * &s2 * c * p) * half;
        coeffs.push(k2);
    }
    if order >= 3 {
        let r_cs_c = r(&(&cs * &rc));
        let l_c_sc = lb(&(&lc * &sc));
        let r_cpc = r(&(&rc * p * c));
        let l_cpc = lb(&(c * p * &lc));
        let t1 = p * &cs * r(&(&cs * &r_cs_c)) * p;
        let t2 = p * lb(&(&l_c_sc * &sc)) * &sc * p;
        let t3 = p * &cs * r(&(c * &s2 * &r_cpc)) * p;
        let t4 = p * lb(&(&l_cpc * &s2 * c)) * &sc * p;
        let t5 = p * c * &s2 * r(&(&rc * p * &cs * &rc)) * p;
        let t6 = p * lb(&(&lc * &sc * p * &lc)) * &s2 * c * p;
        let t7 = p * c * &s2 * r(&(&r_cs_c * p * c)) * p;
        let t8 = p * lb(&(c * p * &l_c_sc)) * &s2 * c * p;
        let t9 = p * c * &s3 * r(&(&r_cpc * p * c)) * p;
        let t10 = p * lb(&(c * p * &l_cpc)) * &s3 * c * p;
        let mut k3 = (-t1 - t2 + t3 + t4 + t5 + t6 + t7 + t8 - t9 - t10) * half;
        if blk.has_nilpotent() {
            let q = &lc * &s2 * &rc;
            k3 += (n * &q * p * &q * p + p * &q * p * &q * n) * C64::new(-0.125, 0.0) + (p * &q * n * &q * p) * C64::new(0.25, 0.0);
        }
        coeffs.push(k3);
    }
    Ok(SeriesCoefficients { block: l, kind: SeriesKind::KSeries, coeffs })
}

// Truncated power series in eps = 1/gamma.
type Series = Vec<CMatrix>;

fn ser_mul(a: &Series, b: &Series, order: usize, n: usize) -> Series {
    let mut out = vec![CMatrix::zeros(n, n); order + 1];
    for (i, ai) in a.iter().enumerate() {
        if ai.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if i + j <= order {
                out[i + j] += ai * bj;
            }
        }
    }
    out
}

// sum_k binom(alpha, k) E^k with E = O(eps^2) and P as the identity.
fn ser_binomial(e: &Series, p: &CMatrix, alpha: f64, order: usize) -> Series {
    let n = p.nrows();
    let mut out = vec![CMatrix::zeros(n, n); order + 1];
    out[0] = p.clone();
    let mut pow: Series = out.clone();
    let mut coef = 1.0;
    for k in 1..=order / 2 {
        coef *= (alpha - (k as f64 - 1.0)) / k as f64;
        pow = ser_mul(&pow, e, order, n);
        for j in 0..=order {
            out[j] += &pow[j] * C64::new(coef, 0.0);
        }
    }
    out
}

/// `K^(0)..K^(order)` for any order by composing the series of
/// `(U~U)^{1/2} (gB + D_l) (U~U)^{-1/2} - g B_l`.
pub fn perturbative_k_series(dec: &SpectralDecomposition, c: &CMatrix, l: usize, order: usize) -> SeriesCoefficients {
    let blk = &dec.blocks[l];
    let (p, s, nil) = (&blk.projection, &blk.reduced_resolvent, &blk.nilpotent);
    let n = dec.dim;
    let top = order + 1;
    let om = omega_series(dec, c, l, top).coeffs;
    let omt = omega_t_series(dec, c, l, top).coeffs;
    let s2 = s * s;
    // E = eps^2 Omega~ S^2 Omega
    let mut e = vec![CMatrix::zeros(n, n); top + 1];
    for a in 0..=top {
        for b in 0..=top {
            if a + b + 2 <= top {
                e[a + b + 2] += &omt[a] * &s2 * &om[b];
            }
        }
    }
    let sqrt = ser_binomial(&e, p, 0.5, top);
    let isqrt = ser_binomial(&e, p, -0.5, top);
    let d: Series = (0..=top).map(|j| p * &om[j] * p).collect();
    let core = ser_mul(&ser_mul(&sqrt, &d, top, n), &isqrt, top, n);
    let nser: Series = (0..=top).map(|j| if j == 0 { nil.clone() } else { CMatrix::zeros(n, n) }).collect();
    let conj_n = ser_mul(&ser_mul(&sqrt, &nser, top, n), &isqrt, top, n);
    let coeffs = (0..=order)
        .map(|j| {
            // gamma (M^{1/2} N M^{-1/2} - N) shifts one order down
            let shift = &conj_n[j + 1];
            p * (&core[j] + shift) * p
        })
        .collect();
    SeriesCoefficients { block: l, kind: SeriesKind::KSeries, coeffs }
}

// ---------------------------------------------------------------------------
// Iterated adiabatic series

#[derive(Debug, Clone)]
pub struct GSeries {
    pub g: CMatrix,
    pub terms: usize,
    pub last_increment: f64,
    /// `||P G P||`
    pub pgp_defect: f64,
}

/// Sums `G = sum_j (-1/g)^j K^j (C - D)` with `K(A) = C S A - S A D - g S A N`.
pub fn sum_g_series(
    dec: &SpectralDecomposition,
    c: &CMatrix,
    d_l: &CMatrix,
    gamma: f64,
    l: usize,
    n_max: usize,
    tol: f64,
) -> Result<GSeries> {
    check_block(dec, c, l, gamma)?;
    let blk = &dec.blocks[l];
    let (p, s, nil) = (&blk.projection, &blk.reduced_resolvent, &blk.nilpotent);
    let threshold = (sp(s) * (sp(c) + sp(d_l) + sp(nil))).powi(blk.index as i32).max(1.0);
    if gamma <= threshold {
        return Err(Error::Precondition(format!(
            "G-series needs gamma > max(1, [||S||(||C||+||D||+||N||)]^n) = {threshold:.4e}, got {gamma}"
        )));
    }
    let cs = c * s;
    let gc = C64::new(gamma, 0.0);
    let kmap = |a: &CMatrix| -> CMatrix { &cs * a - s * a * d_l - s * a * nil * gc };
    let mut term = c - d_l;
    let mut g = term.clone();
    let mut inc = f64::INFINITY;
    let mut terms = 1;
    let factor = C64::new(-1.0 / gamma, 0.0);
    let base = fro(&g).max(1e-300);
    while terms < n_max {
        term = kmap(&term) * factor;
        inc = fro(&term);
        g += &term;
        terms += 1;
        if !inc.is_finite() {
            return Err(Error::NotConverged { iterations: terms, residual: inc });
        }
        if inc <= tol * base {
            break;
        }
    }
    if inc > tol * base && terms >= n_max {
        return Err(Error::NotConverged { iterations: terms, residual: inc });
    }
    let pgp_defect = sp(&(p * &g * p));
    Ok(GSeries { g, terms, last_increment: inc, pgp_defect })
}

/// Upper bound on `||D_l||` implied by the Kantorovich ball.
pub fn d_norm_bound(c_norm: f64, p_norm: f64, gamma_min: f64, gamma: f64) -> f64 {
    2.0 * c_norm * p_norm * p_norm / (1.0 + (1.0 - gamma_min / gamma).max(0.0).sqrt())
}
