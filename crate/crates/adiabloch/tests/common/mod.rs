#![allow(dead_code)]

use adiabloch::bench::models;
use adiabloch::bloch;
use adiabloch::liouville::{LindbladModel, ModelPart};
use adiabloch::spectral::SpectralDecomposition;
use adiabloch::{CMatrix, NormKind, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(d: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> CMatrix {
    let a = random_matrix(d, rng);
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn random_part(d: usize, dissipators: usize, rng: &mut impl Rng) -> ModelPart {
    let mut part = ModelPart::new(random_hermitian(d, rng));
    for _ in 0..dissipators {
        let rate = rng.gen_range(0.2..1.0);
        part = part.with_dissipator(rate, random_matrix(d, rng));
    }
    part
}

/// Random GKLS model with one or two dissipators in each part.
pub fn random_model(d: usize, rng: &mut impl Rng) -> LindbladModel {
    let ns = rng.gen_range(1..=2);
    let nw = rng.gen_range(1..=2);
    LindbladModel { dim: d, gamma: 1.0, strong: random_part(d, ns, rng), weak: random_part(d, nw, rng) }
}

/// Purely Hamiltonian model.
pub fn random_unitary_model(d: usize, rng: &mut impl Rng) -> LindbladModel {
    LindbladModel { dim: d, gamma: 1.0, strong: random_part(d, 0, rng), weak: random_part(d, 0, rng) }
}

/// Qubit whose strong part has an index-2 block, with a random weak part.
pub fn random_nilpotent_model(rng: &mut impl Rng) -> LindbladModel {
    let mut m = models::qubit_nilpotent(1.0);
    m.weak = random_part(2, 1, rng);
    m
}

pub fn max_gamma_l(dec: &SpectralDecomposition, c: &CMatrix) -> f64 {
    (0..dec.blocks.len()).map(|l| bloch::gamma_threshold(dec, c, l, NormKind::Spectral)).fold(0.0, f64::max)
}

pub fn sp(a: &CMatrix) -> f64 {
    adiabloch::matcore::op_norm(a, NormKind::Spectral)
}

/// Independent implementation of `<A> = sum_{n < index} S^n A N^n`.
pub fn sandwich(s: &CMatrix, n: &CMatrix, index: usize, a: &CMatrix) -> CMatrix {
    let mut acc = a.clone();
    let mut sk = CMatrix::identity(a.nrows(), a.nrows());
    let mut nk = sk.clone();
    for _ in 1..index {
        sk = &sk * s;
        nk = &nk * n;
        acc += &sk * a * &nk;
    }
    acc
}

/// Skew-Hermiticity defect `||A + A^dag||`.
pub fn skew_defect(a: &CMatrix) -> f64 {
    sp(&(a + a.adjoint()))
}
