mod common;

use adiabloch::bench::superops;
use adiabloch::bloch::SolveOptions;
use adiabloch::effective::{
    eternal_bound, effective_from_decomposition, estimate_semigroup_bound, k_series, spectrum_distance, truncated_k, verify_similarity,
};
use adiabloch::liouville::{check_hp, check_tp};
use adiabloch::spectral::decompose;
use adiabloch::{CMatrix, NormKind, C64};
use common::{max_gamma_l, random_model, random_unitary_model, rng, skew_defect, sp};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn effective_generator_is_similar_and_physical(seed in any::<u64>(), d in 2usize..4, factor in 2.0f64..10.0) {
        let (b, c) = superops(&random_model(d, &mut rng(seed))).unwrap();
        let Ok(dec) = decompose(&b, None) else { return Err(TestCaseError::reject("near-degenerate spectrum")) };
        let gamma = factor * max_gamma_l(&dec, &c);
        let (sols, eff) = effective_from_decomposition(&dec, &c, gamma, &SolveOptions::default()).unwrap();
        let scale = sp(&(&b * C64::new(gamma, 0.0) + &c));
        let rep = verify_similarity(&dec, &eff, &sols, &b, &c).unwrap();
        prop_assert!(rep.max_residual() < 1e-10 * scale, "{rep:?}");
        prop_assert!(rep.spectrum_distance < 1e-8 * scale);
        prop_assert!(check_hp(&eff.k, 1e-9).pass);
        prop_assert!(check_tp(&eff.k, 1e-9).pass);
        // W = 1 + O(1/gamma), within the closed-form ball.
        let bound = eternal_bound(&dec, &c, gamma, NormKind::Spectral, false, 1.0);
        let n = dec.dim;
        prop_assert!(sp(&(&eff.w - CMatrix::identity(n, n))) <= bound.w_bound * (1.0 + 1e-9));
        prop_assert!(sp(&(&eff.w * &eff.winv - CMatrix::identity(n, n))) < 1e-10);
    }

    #[test]
    fn unitary_effective_generator_is_skew(seed in any::<u64>(), d in 2usize..4) {
        let (b, c) = superops(&random_unitary_model(d, &mut rng(seed))).unwrap();
        let Ok(dec) = decompose(&b, None) else { return Err(TestCaseError::reject("near-degenerate spectrum")) };
        let gamma = 4.0 * max_gamma_l(&dec, &c);
        let (_, eff) = effective_from_decomposition(&dec, &c, gamma, &SolveOptions::default()).unwrap();
        prop_assert!(skew_defect(&eff.k.matrix) < 1e-10 * sp(&c).max(1.0));
        // For unitary models the similarity W is itself unitary.
        prop_assert!(sp(&(eff.w.adjoint() * &eff.w - CMatrix::identity(dec.dim, dec.dim))) < 1e-10);
    }

    #[test]
    fn tight_bounds_order_and_shrink(seed in any::<u64>(), d in 2usize..4) {
        let (b, c) = superops(&random_model(d, &mut rng(seed))).unwrap();
        let Ok(dec) = decompose(&b, None) else { return Err(TestCaseError::reject("near-degenerate spectrum")) };
        let gmax = max_gamma_l(&dec, &c);
        let mut last = f64::INFINITY;
        for f in [2.0, 4.0, 8.0, 16.0] {
            let rep = eternal_bound(&dec, &c, f * gmax, NormKind::Spectral, false, 1.0);
            prop_assert!(rep.applicable && rep.tight_valid);
            prop_assert!(rep.tight_bound_k < last);
            prop_assert!(rep.tight_factor_d <= rep.loose_bound * (1.0 + 1e-12) || f < 4.0);
            last = rep.tight_bound_k;
        }
        let below = eternal_bound(&dec, &c, 0.5 * gmax, NormKind::Spectral, false, 1.0);
        prop_assert!(!below.applicable && !below.tight_valid && below.tight_bound_k.is_infinite());
    }

    #[test]
    fn truncated_series_approaches_nonperturbative(seed in any::<u64>(), d in 2usize..4) {
        let (b, c) = superops(&random_model(d, &mut rng(seed))).unwrap();
        let Ok(dec) = decompose(&b, None) else { return Err(TestCaseError::reject("near-degenerate spectrum")) };
        let gamma = 20.0 * max_gamma_l(&dec, &c);
        let (_, eff) = effective_from_decomposition(&dec, &c, gamma, &SolveOptions::default()).unwrap();
        let series = k_series(&dec, &c, 4).unwrap();
        let errs: Vec<f64> = (0..=4).map(|k| sp(&(truncated_k(&series, gamma, k) - &eff.k.matrix))).collect();
        let floor = 1e-11 * sp(&eff.k.matrix).max(1.0);
        for w in errs.windows(2) {
            prop_assert!(w[1] < w[0] || w[1] < floor, "{errs:?}");
        }
    }
}

#[test]
fn spectrum_distance_counts_collisions() {
    let z = |re: f64| C64::new(re, 0.0);
    assert_eq!(spectrum_distance(&[z(0.0), z(1.0)], &[z(1.0), z(0.0)]), (0.0, 0));
    // Both points want the same partner.
    let (dist, coll) = spectrum_distance(&[z(0.0), z(0.1)], &[z(0.05), z(5.0)]);
    assert_eq!(coll, 1);
    assert!((dist - 4.9).abs() < 1e-12);
    assert!(spectrum_distance(&[z(0.0)], &[]).0.is_infinite());
}

#[test]
fn semigroup_bound_of_contraction_is_one() {
    let g = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(-1.0, 2.0), C64::new(-0.5, 0.0)]));
    let m = estimate_semigroup_bound(&g, &[0.0, 0.5, 3.0], NormKind::Spectral).unwrap();
    assert_eq!(m, 1.0);
    // A transient hump shows up in the estimate.
    let j = CMatrix::from_row_slice(2, 2, &[C64::new(-1.0, 0.0), C64::new(10.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]);
    let m = estimate_semigroup_bound(&j, &[0.0, 1.0], NormKind::Spectral).unwrap();
    assert!((m - (10.0f64 / 1.0f64.exp())).abs() < 0.2, "{m}");
}

#[test]
fn unitary_bound_finite_above_gap_threshold() {
    let mut r = rng(21);
    let (b, c) = superops(&random_unitary_model(2, &mut r)).unwrap();
    let dec = decompose(&b, None).unwrap();
    let gamma = 50.0 * max_gamma_l(&dec, &c);
    let rep = eternal_bound(&dec, &c, gamma, NormKind::Spectral, true, 1.0);
    let ub = rep.unitary_bound.unwrap();
    assert!(ub.is_finite() && ub > 0.0);
    assert!(eternal_bound(&dec, &c, gamma, NormKind::Spectral, false, 1.0).unitary_bound.is_none());
}
