//! Built-in example models.

use crate::liouville::{LindbladModel, ModelPart};
use crate::{CMatrix, C64};

fn ket_bra(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

fn real_diag(v: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0))))
}

/// Five-level Lambda system: levels 1, 2 coupled to 3, level 4 decaying into 2
/// under the strong part, weak decay of 0 into 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaParams {
    pub omega: f64,
    pub delta: f64,
    pub g1: C64,
    pub g2: C64,
    pub kappa: f64,
    pub kappa0: f64,
}

impl LambdaParams {
    /// All parameters set to one.
    pub fn unit() -> Self {
        LambdaParams { omega: 1.0, delta: 1.0, g1: C64::new(1.0, 0.0), g2: C64::new(1.0, 0.0), kappa: 1.0, kappa0: 1.0 }
    }

    /// Zero detuning, where closed forms exist.
    pub fn resonant() -> Self {
        LambdaParams { delta: 0.0, kappa: 0.1, ..Self::unit() }
    }

    /// Weak decay, used for the long-time propagation study.
    pub fn slow_decay() -> Self {
        LambdaParams { kappa: 0.001, ..Self::unit() }
    }

    /// `g = sqrt(|g1|^2 + |g2|^2)`
    pub fn g(&self) -> f64 {
        (self.g1.norm_sqr() + self.g2.norm_sqr()).sqrt()
    }
}

pub fn lambda(p: &LambdaParams, gamma: f64) -> LindbladModel {
    let d = 5;
    let strong = ModelPart::new(real_diag(&[0.0, 0.0, 0.0, 1.0, 2.0])).with_dissipator(p.kappa0, ket_bra(d, 2, 4));
    let mut h = CMatrix::zeros(d, d);
    h[(0, 0)] = C64::new(p.omega, 0.0);
    h[(1, 1)] = C64::new(-p.delta / 2.0, 0.0);
    h[(2, 2)] = C64::new(p.delta / 2.0, 0.0);
    h[(1, 3)] = p.g1.conj() * 0.5;
    h[(2, 3)] = p.g2.conj() * 0.5;
    h[(3, 1)] = p.g1 * 0.5;
    h[(3, 2)] = p.g2 * 0.5;
    let weak = ModelPart::new(h).with_dissipator(p.kappa, ket_bra(d, 1, 0)).with_dissipator(p.kappa, ket_bra(d, 2, 0));
    LindbladModel { dim: d, gamma, strong, weak }
}

pub fn pauli() -> [CMatrix; 3] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        CMatrix::from_row_slice(2, 2, &[o, one, one, o]),
        CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        CMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
    ]
}

/// Qubit whose strong part has a 2x2 Jordan block at -1.
pub fn qubit_nilpotent(gamma: f64) -> LindbladModel {
    let [x, y, z] = pauli();
    let strong = ModelPart::new(x.clone() * C64::new(0.5, 0.0)).with_dissipator(1.0, z);
    LindbladModel { dim: 2, gamma, strong, weak: ModelPart::new(x + y) }
}

/// Three-level model whose effective generator cannot be made completely
/// positive by any block-preserving similarity.
pub fn counterexample(gamma: f64) -> LindbladModel {
    let strong = ModelPart::new(real_diag(&[0.0, 1.0 / 3.0, 1.0]));
    LindbladModel { dim: 3, gamma, strong, weak: ModelPart::zero(3).with_dissipator(1.0, swap_jump()) }
}

/// `|0><2| + |2><0|`
pub fn swap_jump() -> CMatrix {
    ket_bra(3, 0, 2) + ket_bra(3, 2, 0)
}

/// Looks up a built-in model by name.
pub fn builtin(name: &str, gamma: f64) -> Option<LindbladModel> {
    Some(match name {
        "lambda" => lambda(&LambdaParams::unit(), gamma),
        "lambda_resonant" => lambda(&LambdaParams::resonant(), gamma),
        "lambda_slow" => lambda(&LambdaParams::slow_decay(), gamma),
        "qubit" => qubit_nilpotent(gamma),
        "counterexample" => counterexample(gamma),
        _ => return None,
    })
}

pub const BUILTIN_NAMES: [&str; 5] = ["lambda", "lambda_resonant", "lambda_slow", "qubit", "counterexample"];
