//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use super::curves::{self, Order};
use super::reproduce::{Case, ReproductionReport};
use super::{check_solvable, init_threads, models, run_pipeline, superops};
use crate::bloch::{self, Method, SolveOptions};
use crate::effective::{self, k_series, truncated_k};
use crate::error::{Error, Result};
use crate::liouville::{gkls_decompose, matrix_to_json, LindbladModel, Superoperator, Tag};
use crate::spectral;
use crate::NormKind;

const MODEL_SCHEMA: &str = "\
model JSON schema:
  {
    \"dim\": d,                      positive integer
    \"gamma\": g,                    positive coupling of the strong part
    \"strong\": {                    generator B
      \"H\": [[[re, im], ...], ...], d x d Hermitian matrix (optional, default 0)
      \"dissipators\": [{\"rate\": r, \"L\": [[[re, im], ...], ...]}, ...]
    },
    \"weak\": { same layout }        generator C
  }
--model also accepts builtin:NAME with NAME one of lambda, lambda_resonant,
lambda_slow, qubit, counterexample.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Auto,
    FixedPoint,
    Newton,
}

#[derive(Debug, Parser)]
#[command(name = "adiabloch", version, about = "Effective generators of strongly coupled Lindblad dynamics")]
#[command(after_help = MODEL_SCHEMA)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Model JSON file, or builtin:NAME
    #[arg(long, global = true)]
    model: Option<String>,
    /// Coupling gamma; overrides the value stored in the model
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Truncation order of the effective generator: integer or 'inf'
    #[arg(long, global = true)]
    order: Option<String>,
    /// Norm used for bounds and distances
    #[arg(long, global = true, default_value = "spectral")]
    norm: String,
    /// Cluster tolerance for `decompose`, residual tolerance otherwise
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write the result here instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral decomposition of the strong generator
    Decompose,
    /// Solve the Bloch equations block by block
    Solve {
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodArg,
        #[arg(long, default_value_t = bloch::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Attempt the solve even when the Kantorovich condition fails
        #[arg(long)]
        force: bool,
    },
    /// GKLS data of the effective generator K
    Effective,
    /// Eternal-adiabaticity bounds
    Bound {
        /// Also evaluate the bound for unitary models
        #[arg(long)]
        unitary: bool,
    },
    /// Distance between exact and effective propagation over time
    Evolve {
        #[command(flatten)]
        grid: Grid,
    },
    /// Run a reproduction case (or 'all')
    Reproduce { case: String },
    /// Breakaway-time exponents of the truncated generators
    Scaling {
        /// Comma-separated couplings
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 20.0, 40.0])]
        gammas: Vec<f64>,
        /// Comma-separated truncation orders
        #[arg(long, value_delimiter = ',', default_values_t = vec![0usize, 1, 2, 3])]
        orders: Vec<usize>,
        /// Breakaway level as a multiple of the first coupling's plateau
        #[arg(long, default_value_t = curves::DEFAULT_BREAKAWAY_FACTOR)]
        factor: f64,
        #[command(flatten)]
        grid: Grid,
    },
}

#[derive(Debug, Args)]
struct Grid {
    /// First positive time of the log grid [default: 1e-2]
    #[arg(long)]
    t_min: Option<f64>,
    /// Last time of the log grid [default: 1e6, 1e8 for scaling]
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of log-spaced points after t = 0 [default: 400, 500 for scaling]
    #[arg(long)]
    points: Option<usize>,
}

impl Grid {
    fn times(&self, t_max_default: f64, points_default: usize) -> Result<Vec<f64>> {
        let t_min = self.t_min.unwrap_or(curves::DEFAULT_T_MIN);
        let t_max = self.t_max.unwrap_or(t_max_default);
        let n = self.points.unwrap_or(points_default);
        if !(t_min > 0.0 && t_max > t_min && n >= 2) {
            return Err(Error::Input(format!("time grid needs 0 < t_min < t_max and at least 2 points (got {t_min}, {t_max}, {n})")));
        }
        Ok(curves::log_grid(t_min, t_max, n))
    }
}

struct Output {
    json: Value,
    csv: Option<String>,
}

/// Runs the CLI and returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            eprintln!("\n{MODEL_SCHEMA}");
            return 2;
        }
    };
    init_threads();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Input(_) | Error::Json(_)) && cli.global.model.is_some() {
                eprintln!("\n{MODEL_SCHEMA}");
            }
            if e.is_numerical() {
                1
            } else {
                2
            }
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    let norm: NormKind = g.norm.parse()?;
    let (out, code) = match &cli.command {
        Command::Decompose => (decompose(g)?, 0),
        Command::Solve { method, max_iter, force } => solve(g, *method, *max_iter, *force, norm)?,
        Command::Effective => (effective_cmd(g)?, 0),
        Command::Bound { unitary } => (bound(g, norm, *unitary)?, 0),
        Command::Evolve { grid } => (evolve(g, norm, grid)?, 0),
        Command::Reproduce { case } => reproduce_cmd(case)?,
        Command::Scaling { gammas, orders, factor, grid } => (scaling(g, norm, gammas, orders, *factor, grid)?, 0),
    };
    emit(g, out)?;
    Ok(code)
}

fn emit(g: &Global, out: Output) -> Result<()> {
    let text = match g.format {
        Format::Json => serde_json::to_string_pretty(&out.json)? + "\n",
        Format::Csv => out.csv.ok_or_else(|| Error::Input("this subcommand has no CSV output; use --format json".into()))?,
    };
    match &g.out {
        Some(path) => std::fs::write(path, text)?,
        None => match std::io::stdout().write_all(text.as_bytes()) {
            // a closed reader (e.g. `| head`) is not an error
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

fn load_model(g: &Global) -> Result<LindbladModel> {
    let source = g.model.as_deref().ok_or_else(|| Error::Input("--model is required for this subcommand".into()))?;
    let mut model = if let Some(name) = source.strip_prefix("builtin:") {
        models::builtin(name, g.gamma.unwrap_or(10.0))
            .ok_or_else(|| Error::Input(format!("unknown built-in model '{name}' (expected one of {})", models::BUILTIN_NAMES.join(", "))))?
    } else {
        let text = std::fs::read_to_string(source).map_err(|e| Error::Input(format!("cannot read model '{source}': {e}")))?;
        LindbladModel::from_json(&text)?
    };
    if let Some(gamma) = g.gamma {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Input(format!("--gamma must be positive and finite, got {gamma}")));
        }
        model.gamma = gamma;
    }
    Ok(model)
}

fn solve_options(g: &Global) -> SolveOptions {
    SolveOptions { tol: g.tol.unwrap_or(bloch::DEFAULT_TOL), ..Default::default() }
}

fn cplx(z: crate::C64) -> [f64; 2] {
    [z.re, z.im]
}

fn csv_table<S: AsRef<str>>(header: &str, rows: impl IntoIterator<Item = Vec<S>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let cells: Vec<&str> = r.iter().map(|c| c.as_ref()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn decompose(g: &Global) -> Result<Output> {
    let model = load_model(g)?;
    let (b, _) = superops(&model)?;
    let dec = spectral::decompose(&b, g.tol)?;
    let report = spectral::validate(&dec, &b);
    let blocks: Vec<Value> = dec
        .blocks
        .iter()
        .map(|blk| json!({"eigenvalue": cplx(blk.eigenvalue), "rank": blk.rank, "index": blk.index}))
        .collect();
    let csv = csv_table(
        "block,eigenvalue_re,eigenvalue_im,rank,index",
        dec.blocks.iter().enumerate().map(|(l, blk)| {
            vec![l.to_string(), curves::sig17(blk.eigenvalue.re), curves::sig17(blk.eigenvalue.im), blk.rank.to_string(), blk.index.to_string()]
        }),
    );
    Ok(Output { json: json!({"dim": dec.dim, "cluster_tol": dec.cluster_tol, "blocks": blocks, "validation": report}), csv: Some(csv) })
}

fn solve(g: &Global, method: MethodArg, max_iter: usize, force: bool, norm: NormKind) -> Result<(Output, i32)> {
    let model = load_model(g)?;
    let (b, c) = superops(&model)?;
    let dec = spectral::decompose(&b, None)?;
    let gamma = model.gamma;
    let reports: Vec<_> = (0..dec.blocks.len()).map(|l| bloch::kantorovich_report(&dec, &c, gamma, l, norm)).collect();
    if !force {
        check_solvable(&dec, &c, gamma, norm)?;
    }
    let method = match method {
        MethodArg::Auto => Method::Auto,
        MethodArg::FixedPoint => Method::FixedPoint,
        MethodArg::Newton => Method::Newton,
    };
    let opts = SolveOptions { method, max_iter, ..solve_options(g) };
    let sols = bloch::solve_all(&dec, &c, gamma, &opts)?;
    let blocks: Vec<Value> = sols
        .iter()
        .zip(&reports)
        .map(|(s, k)| {
            json!({
                "block": s.block,
                "eigenvalue": cplx(dec.blocks[s.block].eigenvalue),
                "method": s.method,
                "iterations": s.iterations,
                "certified": s.certified,
                "residuals": s.residuals,
                "kantorovich": k,
            })
        })
        .collect();
    let csv = csv_table(
        "block,iterations,omega_residual,omega_t_residual,certified",
        sols.iter().map(|s| {
            vec![s.block.to_string(), s.iterations.to_string(), curves::sig17(s.residuals.omega), curves::sig17(s.residuals.omega_t), s.certified.to_string()]
        }),
    );
    Ok((Output { json: json!({"gamma": gamma, "norm": norm, "blocks": blocks}), csv: Some(csv) }, 0))
}

fn parse_order(g: &Global) -> Result<Order> {
    g.order.as_deref().map(str::parse).transpose().map(|o| o.unwrap_or(Order::Infinite))
}

fn effective_cmd(g: &Global) -> Result<Output> {
    let model = load_model(g)?;
    let order = parse_order(g)?;
    let (b, c) = superops(&model)?;
    let gamma = model.gamma;
    let p = run_pipeline(&b, &c, gamma, None, &solve_options(g))?;
    let k = match order {
        Order::Infinite => p.effective.k.matrix.clone(),
        Order::Finite(n) => truncated_k(&k_series(&p.dec, &c, n)?, gamma, n),
    };
    let form = gkls_decompose(&Superoperator::new(k, Tag::EffectiveK)?)?;
    let mut doc = json!({
        "gamma": gamma,
        "order": order,
        "hamiltonian": matrix_to_json(&form.hamiltonian),
        "rates": form.rates,
        "jumps": form.jumps.iter().map(matrix_to_json).collect::<Vec<_>>(),
        "verdicts": form.verdicts,
    });
    if order == Order::Infinite {
        let sim = effective::verify_similarity(&p.dec, &p.effective, &p.solutions, &b, &c)?;
        doc["similarity"] = serde_json::to_value(sim)?;
    }
    let csv = csv_table("index,rate", form.rates.iter().enumerate().map(|(i, r)| vec![i.to_string(), curves::sig17(*r)]));
    Ok(Output { json: doc, csv: Some(csv) })
}

fn bound(g: &Global, norm: NormKind, unitary: bool) -> Result<Output> {
    let model = load_model(g)?;
    let (b, c) = superops(&model)?;
    let gamma = model.gamma;
    let dec = spectral::decompose(&b, None)?;
    let total = &b * crate::C64::new(gamma, 0.0) + &c;
    let m = effective::estimate_semigroup_bound(&total, &curves::default_grid(), norm)?;
    let rep = effective::eternal_bound(&dec, &c, gamma, norm, unitary, m);
    let v = serde_json::to_value(&rep)?;
    let csv = csv_table(
        "quantity,value",
        [
            ("loose_bound", rep.loose_bound),
            ("tight_bound_d", rep.tight_bound_d),
            ("tight_bound_k", rep.tight_bound_k),
            ("semigroup_m", rep.semigroup_m),
            ("applicable", rep.applicable as u8 as f64),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), curves::sig17(v)]),
    );
    Ok(Output { json: v, csv: Some(csv) })
}

fn evolve(g: &Global, norm: NormKind, grid: &Grid) -> Result<Output> {
    let model = load_model(g)?;
    let order = parse_order(g)?;
    let (b, c) = superops(&model)?;
    let times = grid.times(curves::DEFAULT_T_MAX, curves::DEFAULT_POINTS)?;
    let k = curves::effective_at_order(&b, &c, model.gamma, order, &solve_options(g))?;
    let curve = curves::distance_curve(&b, &c, model.gamma, &k, &times, norm, order)?;
    Ok(Output { csv: Some(curve.to_csv()), json: serde_json::to_value(&curve)? })
}

fn report_csv(reports: &[ReproductionReport]) -> String {
    csv_table(
        "case,name,expected,computed,provenance,tol,pass",
        reports.iter().flat_map(|r| {
            r.items.iter().map(move |i| {
                vec![
                    r.case.name().to_string(),
                    format!("\"{}\"", i.name.replace('"', "\"\"")),
                    curves::sig17(i.expected),
                    curves::sig17(i.computed),
                    i.provenance.clone(),
                    curves::sig17(i.tol),
                    i.pass.to_string(),
                ]
            })
        }),
    )
}

fn reproduce_cmd(case: &str) -> Result<(Output, i32)> {
    let cases: Vec<Case> = if case == "all" { Case::ALL.to_vec() } else { vec![case.parse()?] };
    let reports = cases.iter().map(|&c| super::reproduce(c)).collect::<Result<Vec<_>>>()?;
    let mut code = 0;
    for r in &reports {
        for f in r.failures() {
            eprintln!("FAIL {}: {} (expected {}, computed {}, tol {})", r.case.name(), f.name, f.expected, f.computed, f.tol);
            code = 1;
        }
    }
    let json = if reports.len() == 1 { serde_json::to_value(&reports[0])? } else { serde_json::to_value(&reports)? };
    Ok((Output { csv: Some(report_csv(&reports)), json }, code))
}

fn scaling(g: &Global, norm: NormKind, gammas: &[f64], orders: &[usize], factor: f64, grid: &Grid) -> Result<Output> {
    let model = match g.model {
        Some(_) => load_model(g)?,
        None => models::builtin("lambda_slow", 10.0).expect("built-in model"),
    };
    if gammas.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Input("couplings must be positive".into()));
    }
    let (b, c) = superops(&model)?;
    let times = grid.times(1e8, 500)?;
    let rep = curves::scaling_check(&b, &c, gammas, orders, &times, norm, factor, &solve_options(g))?;
    let rows = rep.orders.iter().flat_map(|o| {
        gammas.iter().zip(&o.breakaway).map(move |(gm, t)| vec![o.order.to_string(), curves::sig17(*gm), t.map(curves::sig17).unwrap_or_default()])
    });
    let csv = csv_table("order,gamma,breakaway", rows);
    Ok(Output { json: serde_json::to_value(&rep)?, csv: Some(csv) })
}
