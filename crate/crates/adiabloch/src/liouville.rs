//! Lindblad models, their superoperators, and physicality checks.
//!
//! Superoperators act on column-stacked density matrices:
//! `vec(A rho B) = (B^T (x) A) vec(rho)`, so entry `rho[(i, j)]` sits at
//! index `j * d + i`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{hermitian_eigen, kron, max_abs, op_norm, NormKind};
use crate::{CMatrix, C64};

const HERMITIAN_TOL: f64 = 1e-12;
/// Physicality tolerance required before a GKLS decomposition is attempted.
pub const GKLS_INPUT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub rate: f64,
    pub jump: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPart {
    pub hamiltonian: CMatrix,
    pub dissipators: Vec<Dissipator>,
}

impl ModelPart {
    pub fn zero(d: usize) -> Self {
        ModelPart { hamiltonian: CMatrix::zeros(d, d), dissipators: Vec::new() }
    }

    pub fn new(hamiltonian: CMatrix) -> Self {
        ModelPart { hamiltonian, dissipators: Vec::new() }
    }

    pub fn with_dissipator(mut self, rate: f64, jump: CMatrix) -> Self {
        self.dissipators.push(Dissipator { rate, jump });
        self
    }
}

/// Physical model with generator `gamma * B + C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    pub dim: usize,
    pub gamma: f64,
    pub strong: ModelPart,
    pub weak: ModelPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Strong,
    Weak,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    StrongB,
    WeakC,
    Total,
    EffectiveD,
    EffectiveDt,
    EffectiveK,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub dim: usize,
    pub matrix: CMatrix,
    pub tag: Tag,
}

impl Superoperator {
    pub fn new(matrix: CMatrix, tag: Tag) -> Result<Self> {
        let n = matrix.nrows();
        let d = (n as f64).sqrt().round() as usize;
        if matrix.ncols() != n || d * d != n {
            return Err(Error::Dimension(format!(
                "superoperator must be d^2 x d^2, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Superoperator { dim: d, matrix, tag })
    }

    /// Applies the superoperator to a `d x d` operator.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvec(&(&self.matrix * vec_op(rho)), self.dim)
    }
}

impl LindbladModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::Input("model dimension must be positive".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Input(format!("gamma must be positive and finite, got {}", self.gamma)));
        }
        for (name, part) in [("strong", &self.strong), ("weak", &self.weak)] {
            let h = &part.hamiltonian;
            if h.nrows() != d || h.ncols() != d {
                return Err(Error::Dimension(format!("{name} Hamiltonian is {}x{}, expected {d}x{d}", h.nrows(), h.ncols())));
            }
            let herm = max_abs(&(h - h.adjoint()));
            if herm > HERMITIAN_TOL * max_abs(h).max(1.0) {
                return Err(Error::Input(format!("{name} Hamiltonian is not Hermitian (defect {herm:.2e})")));
            }
            for (i, ds) in part.dissipators.iter().enumerate() {
                if ds.jump.nrows() != d || ds.jump.ncols() != d {
                    return Err(Error::Dimension(format!("{name} jump {i} is not {d}x{d}")));
                }
                if !(ds.rate >= 0.0) || !ds.rate.is_finite() {
                    return Err(Error::Input(format!("{name} rate {i} must be nonnegative, got {}", ds.rate)));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Input(format!("model JSON: {e}")))?;
        file.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }
}

/// Column-stacking vectorization.
pub fn vec_op(a: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(a.len(), 1, a.as_slice())
}

pub fn unvec(v: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// Superoperator of `rho -> A rho B`.
pub fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), a)
}

/// Matrix of `-i[H, .] + sum_i rate_i (L rho L^+ - {L^+ L, rho}/2)`.
pub fn lindbladian(h: &CMatrix, dissipators: &[Dissipator]) -> CMatrix {
    let d = h.nrows();
    let id = CMatrix::identity(d, d);
    let mi = C64::new(0.0, -1.0);
    let mut out = (sandwich(h, &id) - sandwich(&id, h)) * mi;
    for ds in dissipators {
        let l = &ds.jump;
        let ldl = l.adjoint() * l;
        let term = sandwich(l, &l.adjoint()) - (sandwich(&ldl, &id) + sandwich(&id, &ldl)) * C64::new(0.5, 0.0);
        out += term * C64::new(ds.rate, 0.0);
    }
    out
}

pub fn build_superop(model: &LindbladModel, part: Part) -> Result<Superoperator> {
    model.validate()?;
    let (m, tag) = match part {
        Part::Strong => (lindbladian(&model.strong.hamiltonian, &model.strong.dissipators), Tag::StrongB),
        Part::Weak => (lindbladian(&model.weak.hamiltonian, &model.weak.dissipators), Tag::WeakC),
        Part::Total => {
            let b = lindbladian(&model.strong.hamiltonian, &model.strong.dissipators);
            let c = lindbladian(&model.weak.hamiltonian, &model.weak.dissipators);
            (b * C64::new(model.gamma, 0.0) + c, Tag::Total)
        }
    };
    Superoperator::new(m, tag)
}

// ---------------------------------------------------------------------------
// Hermitian operator basis

/// Identity followed by the generalized Gell-Mann matrices (symmetric,
/// antisymmetric, diagonal), each traceless element with `tr(t^2) = 2`.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let mut out = vec![CMatrix::identity(d, d)];
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = C64::new(1.0, 0.0);
            m[(k, j)] = C64::new(1.0, 0.0);
            out.push(m);
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = C64::new(0.0, -1.0);
            m[(k, j)] = C64::new(0.0, 1.0);
            out.push(m);
        }
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut m = CMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = C64::new(norm, 0.0);
        }
        m[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        out.push(m);
    }
    out
}

// Orthonormal version: identity/sqrt(d), then Gell-Mann/sqrt(2).
fn orthonormal_basis(d: usize) -> Vec<CMatrix> {
    hermitian_basis(d)
        .into_iter()
        .enumerate()
        .map(|(i, m)| if i == 0 { m / C64::new((d as f64).sqrt(), 0.0) } else { m / C64::new(2f64.sqrt(), 0.0) })
        .collect()
}

fn basis_columns(basis: &[CMatrix]) -> CMatrix {
    let n = basis.len();
    let mut t = CMatrix::zeros(n, n);
    for (j, m) in basis.iter().enumerate() {
        t.column_mut(j).copy_from_slice(m.as_slice());
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRep {
    /// Real part of `(t_i|L|t_j) / (t_i|t_i)`.
    pub matrix: DMatrix<f64>,
    /// Largest imaginary part; zero exactly when `L` preserves Hermiticity.
    pub hp_defect: f64,
}

pub fn coherence_rep(l: &Superoperator) -> CoherenceRep {
    let basis = hermitian_basis(l.dim);
    let t = basis_columns(&basis);
    let mut full = t.adjoint() * &l.matrix * &t;
    for (i, m) in basis.iter().enumerate() {
        let nrm = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        full.row_mut(i).scale_mut(1.0 / nrm);
    }
    let hp_defect = full.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    CoherenceRep { matrix: full.map(|z| z.re), hp_defect }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    pub defect: f64,
}

pub fn tp_defect(l: &Superoperator) -> f64 {
    let id = CMatrix::identity(l.dim, l.dim);
    let row = vec_op(&id).adjoint() * &l.matrix;
    row.norm()
}

pub fn check_tp(l: &Superoperator, tol: f64) -> Check {
    let defect = tp_defect(l);
    Check { pass: defect <= tol, defect }
}

pub fn check_hp(l: &Superoperator, tol: f64) -> Check {
    let defect = coherence_rep(l).hp_defect;
    Check { pass: defect <= tol, defect }
}

// ---------------------------------------------------------------------------
// GKLS form

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub hp: bool,
    pub tp: bool,
    pub ccp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GKLSForm {
    pub dim: usize,
    pub hamiltonian: CMatrix,
    /// Coefficient matrix in the orthonormal traceless basis.
    pub kossakowski: CMatrix,
    /// Kossakowski eigenvalues, descending.
    pub rates: Vec<f64>,
    /// Traceless jumps with `tr(L_i^+ L_j) = delta_ij`, matching `rates`.
    pub jumps: Vec<CMatrix>,
    pub verdicts: Verdicts,
}

impl GKLSForm {
    /// Reassembles the superoperator.
    pub fn to_superop(&self) -> CMatrix {
        let ds: Vec<Dissipator> =
            self.rates.iter().zip(&self.jumps).map(|(&rate, j)| Dissipator { rate, jump: j.clone() }).collect();
        lindbladian(&self.hamiltonian, &ds)
    }

    /// Adds `shift * 1` to the Hamiltonian (a pure gauge change).
    pub fn shift_hamiltonian(&mut self, shift: f64) {
        for i in 0..self.dim {
            self.hamiltonian[(i, i)] += C64::new(shift, 0.0);
        }
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn gkls_decompose(l: &Superoperator) -> Result<GKLSForm> {
    gkls_decompose_with_tol(l, GKLS_INPUT_TOL)
}

pub fn gkls_decompose_with_tol(l: &Superoperator, tol: f64) -> Result<GKLSForm> {
    let scale = op_norm(&l.matrix, NormKind::Frobenius).max(1.0);
    let hp = check_hp(l, tol * scale);
    let tp = check_tp(l, tol * scale);
    if !hp.pass {
        return Err(Error::NotPhysical(format!("not Hermiticity preserving (defect {:.3e})", hp.defect)));
    }
    if !tp.pass {
        return Err(Error::NotPhysical(format!("not trace preserving (defect {:.3e})", tp.defect)));
    }
    let d = l.dim;
    let n = d * d;
    let f = orthonormal_basis(d);
    let mut chi = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            // (F_b-bar (x) F_a) is the superoperator of rho -> F_a rho F_b^+
            let sup = sandwich(&f[a], &f[b].adjoint());
            chi[(a, b)] = sup.dotc(&l.matrix);
        }
    }
    let kossakowski = {
        let c = chi.view((1, 1), (n - 1, n - 1)).into_owned();
        (&c + c.adjoint()) * C64::new(0.5, 0.0)
    };
    let mut g = CMatrix::identity(d, d) * (chi[(0, 0)] / C64::new(2.0 * d as f64, 0.0));
    let isd = 1.0 / (d as f64).sqrt();
    for k in 1..n {
        g += &f[k] * (chi[(k, 0)] * isd);
    }
    let hamiltonian = (&g - g.adjoint()) * C64::new(0.0, 0.5);
    let (rates, vecs) = hermitian_eigen(&kossakowski)?;
    let jumps = (0..n - 1)
        .map(|i| {
            let mut j = CMatrix::zeros(d, d);
            for k in 0..n - 1 {
                j += &f[k + 1] * vecs[(k, i)];
            }
            j
        })
        .collect();
    let ccp = rates.iter().all(|&x| x >= -tol * scale);
    Ok(GKLSForm { dim: d, hamiltonian, kossakowski, rates, jumps, verdicts: Verdicts { hp: true, tp: true, ccp } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcpCheck {
    pub pass: bool,
    pub min_rate: f64,
}

pub fn check_ccp(form: &GKLSForm, tol: f64) -> CcpCheck {
    let min_rate = if form.rates.is_empty() { 0.0 } else { form.min_rate() };
    CcpCheck { pass: min_rate >= -tol, min_rate }
}

// ---------------------------------------------------------------------------
// JSON model format

type JsonMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipatorFile {
    pub rate: f64,
    #[serde(rename = "L")]
    pub jump: JsonMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PartFile {
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<JsonMatrix>,
    #[serde(default)]
    pub dissipators: Vec<DissipatorFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub gamma: f64,
    #[serde(default)]
    pub strong: PartFile,
    #[serde(default)]
    pub weak: PartFile,
}

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &JsonMatrix, d: usize, what: &str) -> Result<CMatrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Input(format!("{what} must be a {d}x{d} array of [re, im] pairs")));
    }
    let mut m = CMatrix::zeros(d, d);
    for (i, row) in rows.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            if !z[0].is_finite() || !z[1].is_finite() {
                return Err(Error::Input(format!("{what}[{i}][{j}] is not finite")));
            }
            m[(i, j)] = C64::new(z[0], z[1]);
        }
    }
    Ok(m)
}

impl ModelFile {
    pub fn into_model(self) -> Result<LindbladModel> {
        let d = self.dim;
        let part = |p: PartFile, name: &str| -> Result<ModelPart> {
            let hamiltonian = match p.hamiltonian {
                Some(h) => matrix_from_json(&h, d, &format!("{name}.H"))?,
                None => CMatrix::zeros(d, d),
            };
            let dissipators = p
                .dissipators
                .into_iter()
                .enumerate()
                .map(|(i, ds)| {
                    Ok(Dissipator { rate: ds.rate, jump: matrix_from_json(&ds.jump, d, &format!("{name}.dissipators[{i}].L"))? })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelPart { hamiltonian, dissipators })
        };
        let model = LindbladModel { dim: d, gamma: self.gamma, strong: part(self.strong, "strong")?, weak: part(self.weak, "weak")? };
        model.validate().map_err(|e| match e {
            Error::Dimension(s) => Error::Input(s),
            other => other,
        })?;
        Ok(model)
    }

    pub fn from_model(m: &LindbladModel) -> Self {
        let part = |p: &ModelPart| PartFile {
            hamiltonian: Some(matrix_to_json(&p.hamiltonian)),
            dissipators: p.dissipators.iter().map(|ds| DissipatorFile { rate: ds.rate, jump: matrix_to_json(&ds.jump) }).collect(),
        };
        ModelFile { dim: m.dim, gamma: m.gamma, strong: part(&m.strong), weak: part(&m.weak) }
    }
}
