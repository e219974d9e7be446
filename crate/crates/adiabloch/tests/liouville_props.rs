mod common;

use adiabloch::liouville::{
    build_superop, check_ccp, check_hp, check_tp, gkls_decompose, lindbladian, unvec, vec_op, Dissipator, LindbladModel, Part,
    Superoperator, Tag,
};
use adiabloch::{CMatrix, Error, C64};
use common::{random_hermitian, random_matrix, random_model, rng, sp};
use proptest::prelude::*;

// Direct evaluation of the master-equation right-hand side.
fn apply_direct(h: &CMatrix, ds: &[Dissipator], rho: &CMatrix) -> CMatrix {
    let mi = C64::new(0.0, -1.0);
    let mut out = (h * rho - rho * h) * mi;
    for d in ds {
        let l = &d.jump;
        let ldl = l.adjoint() * l;
        out += (l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * C64::new(0.5, 0.0)) * C64::new(d.rate, 0.0);
    }
    out
}

fn ulp_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= f64::EPSILON * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn superoperator_matches_direct_action(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let m = random_model(d, &mut r);
        let l = build_superop(&m, Part::Strong).unwrap();
        let rho = random_matrix(d, &mut r);
        let direct = apply_direct(&m.strong.hamiltonian, &m.strong.dissipators, &rho);
        prop_assert!(sp(&(l.apply(&rho) - &direct)) < 1e-12 * sp(&direct).max(1.0));
        prop_assert!(sp(&(unvec(&vec_op(&rho), d) - &rho)) == 0.0);
    }

    #[test]
    fn gkls_generators_are_physical(seed in any::<u64>(), d in 2usize..5) {
        let m = random_model(d, &mut rng(seed));
        for part in [Part::Strong, Part::Weak, Part::Total] {
            let l = build_superop(&m, part).unwrap();
            prop_assert!(check_hp(&l, 1e-12).pass);
            prop_assert!(check_tp(&l, 1e-12).pass);
            let form = gkls_decompose(&l).unwrap();
            prop_assert!(check_ccp(&form, 1e-10).pass, "min rate {}", form.min_rate());
            prop_assert!(form.verdicts.ccp);
        }
    }

    #[test]
    fn gkls_decomposition_reassembles(seed in any::<u64>(), d in 2usize..5) {
        let m = random_model(d, &mut rng(seed));
        let l = build_superop(&m, Part::Weak).unwrap();
        let form = gkls_decompose(&l).unwrap();
        prop_assert!(sp(&(form.to_superop() - &l.matrix)) < 1e-11 * sp(&l.matrix).max(1.0));
        // The extracted Hamiltonian is traceless and Hermitian.
        prop_assert!(form.hamiltonian.trace().norm() < 1e-11);
        prop_assert!(sp(&(&form.hamiltonian - form.hamiltonian.adjoint())) < 1e-12);
    }

    #[test]
    fn negative_rate_is_flagged(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let jump = random_matrix(d, &mut r);
        let traceless = &jump - CMatrix::identity(d, d) * (jump.trace() / C64::new(d as f64, 0.0));
        prop_assume!(sp(&traceless) > 0.1);
        let l = lindbladian(&random_hermitian(d, &mut r), &[Dissipator { rate: -0.5, jump }]);
        let form = gkls_decompose(&Superoperator::new(l, Tag::Custom).unwrap()).unwrap();
        prop_assert!(!form.verdicts.ccp);
        prop_assert!(form.min_rate() < -1e-3);
    }

    #[test]
    fn json_roundtrip_preserves_entries(seed in any::<u64>(), d in 1usize..5) {
        let m = random_model(d, &mut rng(seed));
        let back = LindbladModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.dim, m.dim);
        prop_assert!(ulp_close(back.gamma, m.gamma));
        let pairs = [
            (&m.strong.hamiltonian, &back.strong.hamiltonian),
            (&m.weak.hamiltonian, &back.weak.hamiltonian),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!(ulp_close(x.re, y.re) && ulp_close(x.im, y.im));
            }
        }
        for (pa, pb) in [(&m.strong, &back.strong), (&m.weak, &back.weak)] {
            prop_assert_eq!(pa.dissipators.len(), pb.dissipators.len());
            for (x, y) in pa.dissipators.iter().zip(&pb.dissipators) {
                prop_assert!(ulp_close(x.rate, y.rate));
                for (u, v) in x.jump.iter().zip(y.jump.iter()) {
                    prop_assert!(ulp_close(u.re, v.re) && ulp_close(u.im, v.im));
                }
            }
        }
    }
}

#[test]
fn malformed_model_json_is_an_input_error() {
    for text in ["{", "{\"dim\": 2}", "[]", "{\"dim\": 2, \"gamma\": 1, \"strong\": {\"H\": [[[1, 0]]]}}"] {
        let err = LindbladModel::from_json(text).unwrap_err();
        assert!(!err.is_numerical(), "{text}: {err}");
    }
}

#[test]
fn non_hermitian_hamiltonian_rejected() {
    let text = r#"{"dim": 2, "gamma": 1, "strong": {"H": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]}}"#;
    assert!(matches!(LindbladModel::from_json(text), Err(Error::Input(_))));
}
