//! Exact-propagation comparisons, built-in example models, reproduction
//! cases and the command-line front end.

pub mod cli;
pub mod curves;
pub mod models;
pub mod reproduce;

pub use curves::{distance_curve, log_grid, scaling_check, DistanceCurve, Order, ScalingReport};
pub use models::LambdaParams;
pub use reproduce::{reproduce, Case, ReportItem, ReproductionReport};

use crate::bloch::{self, BlochSolution, KantorovichReport, SolveOptions};
use crate::effective::{self, EffectiveGenerators};
use crate::error::{Error, Result};
use crate::liouville::{build_superop, LindbladModel, Part};
use crate::spectral::{self, SpectralDecomposition};
use crate::{CMatrix, NormKind};

/// Caps the global rayon pool at `ADIABLOCH_THREADS` when set. Safe to call
/// more than once; only the first call has an effect.
pub fn init_threads() {
    if let Some(n) = std::env::var("ADIABLOCH_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Everything computed for one model at one coupling.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub gamma: f64,
    pub b: CMatrix,
    pub c: CMatrix,
    pub dec: SpectralDecomposition,
    pub solutions: Vec<BlochSolution>,
    pub effective: EffectiveGenerators,
}

impl Pipeline {
    pub fn total(&self) -> CMatrix {
        &self.b * crate::C64::new(self.gamma, 0.0) + &self.c
    }
}

pub fn superops(model: &LindbladModel) -> Result<(CMatrix, CMatrix)> {
    Ok((build_superop(model, Part::Strong)?.matrix, build_superop(model, Part::Weak)?.matrix))
}

/// Kantorovich data for every block; errors if any block is below threshold.
pub fn check_solvable(dec: &SpectralDecomposition, c: &CMatrix, gamma: f64, norm: NormKind) -> Result<Vec<KantorovichReport>> {
    let reps: Vec<KantorovichReport> = (0..dec.blocks.len()).map(|l| bloch::kantorovich_report(dec, c, gamma, l, norm)).collect();
    if let Some(bad) = reps.iter().find(|r| !r.solvable) {
        let worst = reps.iter().map(|r| r.gamma_min).fold(0.0, f64::max);
        return Err(Error::Precondition(format!(
            "Kantorovich condition not met: gamma = {gamma} is below the threshold gamma_l = {:.6e} of block {} \
             (largest threshold {worst:.6e}); existence and uniqueness of the Bloch solution are not certified",
            bad.gamma_min, bad.block
        )));
    }
    Ok(reps)
}

pub fn run_pipeline(b: &CMatrix, c: &CMatrix, gamma: f64, cluster_tol: Option<f64>, opts: &SolveOptions) -> Result<Pipeline> {
    let dec = spectral::decompose(b, cluster_tol)?;
    let (solutions, effective) = effective::effective_from_decomposition(&dec, c, gamma, opts)?;
    Ok(Pipeline { gamma, b: b.clone(), c: c.clone(), dec, solutions, effective })
}

pub fn run_model(model: &LindbladModel, opts: &SolveOptions) -> Result<Pipeline> {
    let (b, c) = superops(model)?;
    run_pipeline(&b, &c, model.gamma, None, opts)
}
