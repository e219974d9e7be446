mod common;

use adiabloch::bench::curves::{distance_curve, envelope, fit_slope, log_grid, scaling_check, sig17, sliding_max, Order};
use adiabloch::bench::models::{self, LambdaParams};
use adiabloch::bench::reproduce::{reproduce, Case};
use adiabloch::bench::{run_model, superops};
use adiabloch::bloch::SolveOptions;
use adiabloch::{CMatrix, NormKind};
use common::sp;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sig17_roundtrips_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(sig17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn log_grid_is_increasing_and_spans(lo in -4.0f64..0.0, span in 0.5f64..8.0, n in 2usize..300) {
        let (a, b) = (10f64.powf(lo), 10f64.powf(lo + span));
        let g = log_grid(a, b, n);
        prop_assert_eq!(g.len(), n + 1);
        prop_assert_eq!(g[0], 0.0);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((g[1] - a).abs() <= 1e-12 * a);
        prop_assert!((g[n] - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn envelope_dominates_and_resets_per_decade(vals in prop::collection::vec(0.0f64..1.0, 40)) {
        let times = log_grid(1e-2, 1e2, vals.len() - 1);
        let env = envelope(&times, &vals);
        for (i, (&(t, e), &v)) in env.iter().zip(&vals).enumerate() {
            prop_assert_eq!(t, times[i]);
            prop_assert!(e >= v);
            // the envelope only carries values from the same decade
            let dec = |x: f64| if x <= 0.0 { -2 } else { x.log10().floor() as i64 };
            let peak = (0..=i).filter(|&j| dec(times[j]) == dec(t)).map(|j| vals[j]).fold(0.0, f64::max);
            prop_assert_eq!(e, peak);
        }
        let sm = sliding_max(&times, &vals, 1.0);
        prop_assert!(sm.iter().zip(&vals).all(|(s, v)| s >= v));
    }

    #[test]
    fn slope_of_exact_power_law(k in -3.0f64..3.0, c in 0.1f64..10.0) {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 5.0, 10.0].iter().map(|&g| (g.ln(), (c * g.powf(k)).ln())).collect();
        prop_assert!((fit_slope(&pts).unwrap() - k).abs() < 1e-10);
    }
}

#[test]
fn order_parses_and_displays() {
    assert_eq!("3".parse::<Order>().unwrap(), Order::Finite(3));
    assert_eq!("inf".parse::<Order>().unwrap(), Order::Infinite);
    assert!("-1".parse::<Order>().is_err());
    assert_eq!(Order::Finite(2).to_string(), "2");
    assert_eq!(Order::Infinite.to_string(), "inf");
}

#[test]
fn csv_has_header_and_full_precision() {
    let (b, c) = superops(&models::lambda(&LambdaParams::unit(), 10.0)).unwrap();
    let p = run_model(&models::lambda(&LambdaParams::unit(), 10.0), &SolveOptions::default()).unwrap();
    let times = log_grid(1e-1, 1e1, 5);
    let cur = distance_curve(&b, &c, 10.0, &p.effective.k.matrix, &times, NormKind::Spectral, Order::Infinite).unwrap();
    let csv = cur.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,distance,order,norm"));
    for (line, (&t, &d)) in lines.zip(cur.times.iter().zip(&cur.distances)) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 4);
        assert_eq!(f[0].parse::<f64>().unwrap(), t);
        assert_eq!(f[1].parse::<f64>().unwrap(), d);
        assert_eq!(f[2], "inf");
    }
}

#[test]
fn short_time_distance_follows_taylor() {
    // exp(tA) - exp(tA') = t (A - A') + O(t^2)
    let m = models::lambda(&LambdaParams::unit(), 10.0);
    let (b, c) = superops(&m).unwrap();
    let p = run_model(&m, &SolveOptions::default()).unwrap();
    let k = &p.effective.k.matrix;
    let t = 1e-7;
    let cur = distance_curve(&b, &c, 10.0, k, &[0.0, t], NormKind::Spectral, Order::Infinite).unwrap();
    assert_eq!(cur.distances[0], 0.0);
    let lin = t * sp(&(&c - k));
    assert!((cur.distances[1] - lin).abs() < 1e-3 * lin, "{} vs {lin}", cur.distances[1]);
}

#[test]
fn scaling_without_coupling_is_degenerate() {
    let (b, _) = superops(&models::lambda(&LambdaParams::unit(), 10.0)).unwrap();
    let c = CMatrix::zeros(b.nrows(), b.ncols());
    let rep = scaling_check(&b, &c, &[10.0, 20.0], &[0, 1], &log_grid(1e-2, 1e2, 20), NormKind::Spectral, 3.0, &SolveOptions::default()).unwrap();
    assert!(rep.degenerate);
    assert!(rep.orders.iter().all(|o| o.slope.is_none() && o.breakaway.iter().all(|t| t.is_none())));
}

#[test]
fn reproduce_is_deterministic() {
    for case in [Case::LambdaNumeric, Case::QubitNilpotent] {
        let a = serde_json::to_string(&reproduce(case).unwrap()).unwrap();
        let b = serde_json::to_string(&reproduce(case).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn every_case_passes_and_names_roundtrip() {
    for case in Case::ALL {
        assert_eq!(case.name().parse::<Case>().unwrap(), case);
        let rep = reproduce(case).unwrap();
        assert!(!rep.items.is_empty());
        let bad: Vec<_> = rep.failures().map(|i| i.name.clone()).collect();
        assert!(bad.is_empty(), "{}: {bad:?}", case.name());
        for item in &rep.items {
            assert!(item.tol >= 0.0 && !item.provenance.is_empty());
        }
    }
    assert!("nope".parse::<Case>().is_err());
}

#[test]
fn builtin_models_are_valid() {
    for name in models::BUILTIN_NAMES {
        let m = models::builtin(name, 7.0).unwrap();
        assert_eq!(m.gamma, 7.0);
        let (b, c) = superops(&m).unwrap();
        assert_eq!(b.nrows(), m.dim * m.dim);
        assert_eq!(c.shape(), b.shape());
    }
    assert!(models::builtin("missing", 1.0).is_none());
}
