//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::time::Instant;

use adiabloch::bench::curves::{self, distance_curve, log_grid, scaling_check, sliding_max, Order};
use adiabloch::bench::models::{self, LambdaParams};
use adiabloch::bench::{reproduce, run_pipeline, superops, Case, ReproductionReport};
use adiabloch::bloch::{self, SolveOptions};
use adiabloch::effective::{self, k_series, truncated_k, verify_similarity};
use adiabloch::liouville::{check_hp, check_tp};
use adiabloch::spectral::{self, SpectralDecomposition};
use adiabloch::{CMatrix, NormKind, C64};
use common::{max_gamma_l, random_model, random_nilpotent_model, random_unitary_model, rng, sandwich, skew_defect, sp};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn case_summary(r: &ReproductionReport) -> String {
    let bad: Vec<&str> = r.failures().map(|i| i.name.as_str()).collect();
    if bad.is_empty() {
        format!("{}: {} items pass", r.case.name(), r.items.len())
    } else {
        format!("{}: failing {:?}", r.case.name(), bad)
    }
}

fn run_case(case: Case) -> Result<ReproductionReport, String> {
    reproduce(case).map_err(|e| format!("{}: {e}", case.name()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rep = match run_case(Case::LambdaNumeric) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let secs = start.elapsed().as_secs_f64();
    outcome(rep.pass() && secs < 10.0, format!("{}, runtime {secs:.2} s", case_summary(&rep)))
}

fn criterion_2() -> Outcome {
    match run_case(Case::LambdaAnalytic) {
        Ok(r) => outcome(r.pass(), case_summary(&r)),
        Err(e) => outcome(false, e),
    }
}

fn qubit_spectrum_error(gamma: f64) -> Result<f64, String> {
    let (b, c) = superops(&models::qubit_nilpotent(gamma)).map_err(|e| e.to_string())?;
    let total = &b * C64::new(gamma, 0.0) + &c;
    let mut eig = adiabloch::matcore::eigenvalues(&total).map_err(|e| e.to_string())?;
    let w = 2.0 * (gamma + 2.0).sqrt();
    let mut expect = vec![C64::new(0.0, 0.0), C64::new(-gamma, w), C64::new(-gamma, -w), C64::new(-2.0 * gamma, 0.0)];
    let key = |z: &C64| (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e3).round() as i64;
    eig.sort_by_key(key);
    expect.sort_by_key(key);
    Ok(eig.iter().zip(&expect).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for case in [Case::Table1, Case::Table2] {
        match run_case(case) {
            Ok(r) => {
                pass &= r.pass();
                notes.push(case_summary(&r));
            }
            Err(e) => {
                pass = false;
                notes.push(e);
            }
        }
    }
    for gamma in [2.0, 10.0, 100.0] {
        match qubit_spectrum_error(gamma) {
            Ok(err) => {
                pass &= err <= 1e-10;
                notes.push(format!("qubit spectrum gamma={gamma}: {err:.1e}"));
            }
            Err(e) => {
                pass = false;
                notes.push(e);
            }
        }
    }
    outcome(pass, notes.join("; "))
}

fn criterion_4() -> Outcome {
    let rep = match run_case(Case::QubitNilpotent) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let mut pass = rep.pass();
    let mut notes = vec![case_summary(&rep)];
    let [x, _, _] = models::pauli();
    let id = CMatrix::identity(2, 2);
    let comm_x = adiabloch::liouville::sandwich(&x, &id) - adiabloch::liouville::sandwich(&id, &x);
    let mut worst: f64 = 0.0;
    for gamma in [2.0, 10.0, 100.0] {
        let (b, c) = superops(&models::qubit_nilpotent(gamma)).unwrap();
        match run_pipeline(&b, &c, gamma, None, &SolveOptions::default()) {
            Ok(p) => {
                let coef = (gamma * gamma + 4.0 * gamma + 8.0).sqrt() - gamma;
                let expect = &comm_x * C64::new(0.0, -0.5 * coef);
                worst = worst.max(sp(&(&p.effective.k.matrix - expect)));
                let report = spectral::validate(&p.dec, &b);
                let jordan = p.dec.blocks.iter().any(|blk| blk.index == 2 && blk.rank == 2);
                pass &= jordan && report.index_consistent && report.max_defect() < 1e-10;
            }
            Err(e) => {
                pass = false;
                notes.push(format!("gamma={gamma}: {e}"));
            }
        }
    }
    pass &= worst <= 1e-10;
    notes.push(format!("K closed-form deviation {worst:.1e}, index-2 block certified"));
    outcome(pass, notes.join("; "))
}

fn criterion_5() -> Outcome {
    match run_case(Case::Counterexample) {
        Ok(r) => outcome(r.pass(), case_summary(&r)),
        Err(e) => outcome(false, e),
    }
}

fn criterion_6() -> Outcome {
    let model = models::lambda(&LambdaParams::slow_decay(), 10.0);
    let (b, c) = superops(&model).unwrap();
    let opts = SolveOptions::default();
    // Flatness of the nonperturbative envelope on the standard grid.
    let flat = (|| -> adiabloch::Result<f64> {
        let k = curves::effective_at_order(&b, &c, 10.0, Order::Infinite, &opts)?;
        let cur = distance_curve(&b, &c, 10.0, &k, &curves::default_grid(), NormKind::Spectral, Order::Infinite)?;
        let smooth = sliding_max(&cur.times, &cur.distances, 1.0);
        Ok(curves::loglog_slope(&cur.times, &smooth, 1e4, 1e6).unwrap_or(f64::NAN))
    })();
    let tail = match flat {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("k=inf curve: {e}")),
    };
    // The slowest breakaway (k=3 at gamma=40) sits near 1e7, beyond the standard grid.
    let times = log_grid(1e-2, 1e8, 500);
    let gammas = [10.0, 20.0, 40.0];
    let rep = match scaling_check(&b, &c, &gammas, &[0, 1, 2, 3], &times, NormKind::Spectral, curves::DEFAULT_BREAKAWAY_FACTOR, &opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("scaling: {e}")),
    };
    let mut pass = tail <= 0.05;
    let mut ordered = true;
    for gi in 0..gammas.len() {
        let ts: Vec<Option<f64>> = rep.orders.iter().map(|o| o.breakaway[gi]).collect();
        ordered &= ts.iter().all(|t| t.is_some()) && ts.windows(2).all(|w| w[0] < w[1]);
    }
    pass &= ordered;
    let mut slopes = Vec::new();
    for o in &rep.orders {
        let target = o.order as f64 + 1.0;
        let ok = !o.lower_bound_only && o.slope.is_some_and(|s| (s - target).abs() <= 0.35);
        pass &= ok;
        slopes.push(format!("k={}: {:.2}", o.order, o.slope.unwrap_or(f64::NAN)));
    }
    pass &= rep.infinite_breakaway.iter().all(|t| t.is_none());
    outcome(
        pass,
        format!("tail slope {tail:.3}, breakaway ordered {ordered}, exponents [{}] vs k+1", slopes.join(", ")),
    )
}

// Largest violation of `distance(t) <= bound` over the grid (negative when it holds).
fn bound_margin(b: &CMatrix, c: &CMatrix, gamma: f64, gen: &CMatrix, bound: f64, times: &[f64]) -> adiabloch::Result<f64> {
    let cur = distance_curve(b, c, gamma, gen, times, NormKind::Spectral, Order::Infinite)?;
    Ok(cur.distances.iter().map(|d| d - bound).fold(f64::NEG_INFINITY, f64::max))
}

fn criterion_7() -> Outcome {
    let mut cases: Vec<(String, CMatrix, CMatrix)> = Vec::new();
    let (b, c) = superops(&models::lambda(&LambdaParams::unit(), 10.0)).unwrap();
    cases.push(("lambda".into(), b, c));
    let mut r = rng(7);
    for (i, d) in [3, 4, 5, 3, 4].into_iter().enumerate() {
        let (b, c) = superops(&random_model(d, &mut r)).unwrap();
        cases.push((format!("random#{i} d={d}"), b, c));
    }
    let times = curves::default_grid();
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, b, c) in &cases {
        let res = (|| -> adiabloch::Result<(f64, f64, f64, f64)> {
            let dec = spectral::decompose(b, None)?;
            let gamma = 2.0 * max_gamma_l(&dec, c);
            let p = run_pipeline(b, c, gamma, None, &SolveOptions::default())?;
            let m = effective::estimate_semigroup_bound(&p.total(), &times, NormKind::Spectral)?;
            let rep = effective::eternal_bound(&p.dec, c, gamma, NormKind::Spectral, false, m);
            let mk = bound_margin(b, c, gamma, &p.effective.k.matrix, rep.tight_bound_k, &times)?;
            let md = bound_margin(b, c, gamma, &p.effective.d.matrix, rep.tight_bound_d, &times)?;
            Ok((mk, rep.tight_bound_k, md, rep.tight_bound_d))
        })();
        match res {
            Ok((mk, bk, md, bd)) => {
                pass &= mk <= 0.0 && md <= 0.0;
                notes.push(format!("{name}: K sup {:.2e}<={bk:.2e}, D sup {:.2e}<={bd:.2e}", mk + bk, md + bd));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

#[derive(Default)]
struct Worst {
    residual: f64,
    roundtrip: f64,
    u_ball: f64,
    pgp: f64,
    physical: f64,
    spectrum: f64,
    skew_k: f64,
    conj: f64,
    failures: Vec<String>,
    g_skipped: usize,
}

fn invariants(w: &mut Worst, b: &CMatrix, c: &CMatrix, unitary: bool) -> adiabloch::Result<()> {
    let dec = spectral::decompose(b, None)?;
    let gamma = 4.0 * max_gamma_l(&dec, c);
    let p = run_pipeline(b, c, gamma, None, &SolveOptions::default())?;
    for (l, sol) in p.solutions.iter().enumerate() {
        let r = &sol.residuals;
        w.residual = w.residual.max(r.omega).max(r.omega_t).max(r.u).max(r.ut);
        let om = bloch::u_to_omega(&dec, c, l, &bloch::omega_to_u(&dec, l, &sol.omega, gamma), gamma);
        let omt = bloch::ut_to_omega_t(&dec, c, l, &bloch::omega_t_to_ut(&dec, l, &sol.omega_t, gamma), gamma);
        let scale = sp(&sol.omega).max(1.0);
        w.roundtrip = w.roundtrip.max(sp(&(om - &sol.omega)) / scale).max(sp(&(omt - &sol.omega_t)) / scale);
        let k = bloch::kantorovich_report(&dec, c, gamma, l, NormKind::Spectral);
        let pl = &dec.blocks[l].projection;
        w.u_ball = w.u_ball.max(sp(&(&sol.u - pl)) / k.theta).max(sp(&(&sol.ut - pl)) / k.theta);
        match bloch::sum_g_series(&dec, c, &p.effective.per_block[l].d, gamma, l, 400, 1e-15) {
            Ok(g) => w.pgp = w.pgp.max(g.pgp_defect),
            Err(adiabloch::Error::Precondition(_)) => w.g_skipped += 1,
            Err(e) => return Err(e),
        }
        if unitary {
            w.conj = w.conj.max(sp(&(&sol.omega_t + sol.omega.adjoint())));
        }
    }
    for s in [&p.effective.d, &p.effective.dt, &p.effective.k] {
        w.physical = w.physical.max(check_hp(s, 0.0).defect).max(check_tp(s, 0.0).defect);
    }
    let sim = verify_similarity(&dec, &p.effective, &p.solutions, b, c)?;
    w.spectrum = w.spectrum.max(sim.spectrum_distance);
    if unitary {
        w.skew_k = w.skew_k.max(skew_defect(&p.effective.k.matrix));
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut w = Worst::default();
    let mut r = rng(8);
    let mut runs = 0;
    for i in 0..50 {
        let d = 2 + i % 3;
        let (b, c) = superops(&random_model(d, &mut r)).unwrap();
        if let Err(e) = invariants(&mut w, &b, &c, false) {
            w.failures.push(format!("random#{i} d={d}: {e}"));
        }
        runs += 1;
    }
    for i in 0..10 {
        let d = 2 + i % 3;
        let (b, c) = superops(&random_unitary_model(d, &mut r)).unwrap();
        if let Err(e) = invariants(&mut w, &b, &c, true) {
            w.failures.push(format!("unitary#{i} d={d}: {e}"));
        }
        runs += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = w.failures.is_empty()
        && w.residual < 1e-10
        && w.roundtrip < 1e-10
        && w.u_ball <= 1.0
        && w.pgp < 1e-9
        && w.physical < 1e-10
        && w.spectrum < 1e-8
        && w.skew_k < 1e-10
        && w.conj < 1e-10
        && secs < 300.0;
    outcome(
        pass,
        format!(
            "{runs} models in {secs:.1} s: residual {:.1e}, roundtrip {:.1e}, max ||U-P||/Theta {:.2}, PGP {:.1e} ({} blocks outside the G-series range), HP/TP {:.1e}, spectrum {:.1e}, unitary skew(K) {:.1e}, Omega~+Omega^dag {:.1e}{}",
            w.residual,
            w.roundtrip,
            w.u_ball,
            w.pgp,
            w.g_skipped,
            w.physical,
            w.spectrum,
            w.skew_k,
            w.conj,
            if w.failures.is_empty() { String::new() } else { format!("; errors {:?}", w.failures) }
        ),
    )
}

// Closed-form D^(0..3) built from the sandwich bracket.
fn d_closed_forms(dec: &SpectralDecomposition, c: &CMatrix, l: usize) -> [CMatrix; 4] {
    let blk = &dec.blocks[l];
    let (p, s, n, idx) = (&blk.projection, &blk.reduced_resolvent, &blk.nilpotent, blk.index);
    let br = |a: &CMatrix| sandwich(s, n, idx, a);
    let cs = c * s;
    let s2 = s * s;
    let s3 = &s2 * s;
    let bc = br(c);
    let d0 = p * c * p;
    let d1 = -(p * &cs * &bc * p);
    let inner = br(&(&bc * p * c));
    let d2 = p * &cs * br(&(&cs * &bc)) * p - p * c * &s2 * &inner * p;
    let d3 = -(p * &cs * br(&(&cs * br(&(&cs * &bc)))) * p) + p * &cs * br(&(c * &s2 * &inner)) * p
        + p * c * &s2 * br(&(&bc * p * &cs * &bc)) * p
        + p * c * &s2 * br(&(br(&(&cs * &bc)) * p * c)) * p
        - p * c * &s3 * br(&(&inner * p * c)) * p;
    [d0, d1, d2, d3]
}

fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
    sp(&(a - b)) / sp(b).max(1.0)
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let mut models_: Vec<(String, CMatrix, CMatrix)> = Vec::new();
    for i in 0..4 {
        let (b, c) = superops(&random_nilpotent_model(&mut r)).unwrap();
        models_.push((format!("nilpotent#{i}"), b, c));
    }
    for (i, d) in [2, 3, 3, 4].into_iter().enumerate() {
        let (b, c) = superops(&random_model(d, &mut r)).unwrap();
        models_.push((format!("random#{i} d={d}"), b, c));
    }
    let (b, c) = superops(&models::lambda(&LambdaParams::unit(), 10.0)).unwrap();
    models_.push(("lambda".into(), b, c));

    let mut d_err: f64 = 0.0;
    let mut k_err: f64 = 0.0;
    let mut conv_ok = true;
    let mut notes = Vec::new();
    let mut nil_blocks = 0;
    for (name, b, c) in &models_ {
        let res = (|| -> adiabloch::Result<Vec<f64>> {
            let dec = spectral::decompose(b, None)?;
            for l in 0..dec.blocks.len() {
                if dec.blocks[l].index > 1 {
                    nil_blocks += 1;
                }
                let rec = bloch::perturbative_d(&dec, c, l, 3);
                for (j, oracle) in d_closed_forms(&dec, c, l).iter().enumerate() {
                    d_err = d_err.max(rel(&rec.coeffs[j], oracle));
                }
                let closed = bloch::perturbative_k(&dec, c, l, 3)?;
                let composed = bloch::perturbative_k_series(&dec, c, l, 3);
                for j in 0..=3 {
                    k_err = k_err.max(rel(&composed.coeffs[j], &closed.coeffs[j]));
                }
            }
            // Truncation error against the nonperturbative K at 8x threshold.
            let gamma = 8.0 * max_gamma_l(&dec, c);
            let p = run_pipeline(b, c, gamma, None, &SolveOptions::default())?;
            let series = k_series(&dec, c, 6)?;
            Ok((0..=6).map(|j| sp(&(truncated_k(&series, gamma, j) - &p.effective.k.matrix))).collect())
        })();
        match res {
            Ok(errs) => {
                // Geometric decay: each order shrinks the error, and the average ratio stays well below 1.
                let floor = 1e-12 * errs[0].max(1.0);
                let active: Vec<f64> = errs.iter().copied().take_while(|&e| e > floor).collect();
                let monotone = active.windows(2).all(|w| w[1] < w[0]);
                let ratio = if active.len() >= 2 { (active[active.len() - 1] / active[0]).powf(1.0 / (active.len() - 1) as f64) } else { 0.0 };
                conv_ok &= monotone && ratio < 0.5;
                notes.push(format!("{name}: ratio {ratio:.2}"));
            }
            Err(e) => {
                conv_ok = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    let pass = d_err <= 1e-11 && k_err <= 1e-11 && conv_ok && nil_blocks > 0;
    outcome(
        pass,
        format!(
            "D closed forms {d_err:.1e}, K explicit vs composed {k_err:.1e} ({nil_blocks} nilpotent blocks); series convergence [{}]",
            notes.join(", ")
        ),
    )
}

fn main() {
    adiabloch::bench::init_threads();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Lambda-system nonperturbative generator", criterion_1),
        ("resonant closed forms", criterion_2),
        ("closed-form spectra", criterion_3),
        ("qubit with nilpotent", criterion_4),
        ("impossibility counterexample", criterion_5),
        ("breakaway phenomenology and scaling", criterion_6),
        ("eternal bound inequality", criterion_7),
        ("invariant suite", criterion_8),
        ("perturbative cross-checks", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("{} criterion {}: {name} ({})", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
