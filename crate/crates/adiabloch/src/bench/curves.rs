//! Distance curves between exact and effective propagators.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bloch::SolveOptions;
use crate::effective::{k_series, truncated_k};
use crate::error::{Error, Result};
use crate::matcore::{expm, op_norm};
use crate::{CMatrix, NormKind, C64};

pub const DEFAULT_POINTS: usize = 400;
pub const DEFAULT_T_MIN: f64 = 1e-2;
pub const DEFAULT_T_MAX: f64 = 1e6;
pub const DEFAULT_BREAKAWAY_FACTOR: f64 = 3.0;

/// Truncation order of the effective generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Finite(usize),
    Infinite,
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::Finite(k) => write!(f, "{k}"),
            Order::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "nonperturbative" => Ok(Order::Infinite),
            _ => s.parse::<usize>().map(Order::Finite).map_err(|_| Error::Input(format!("order must be a nonnegative integer or 'inf', got '{s}'"))),
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Finite(k) => s.serialize_u64(*k as u64),
            Order::Infinite => s.serialize_str("inf"),
        }
    }
}

/// `t = 0` followed by `n` log-spaced points on `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.log10(), t_max.log10());
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for i in 0..n {
        let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        out.push(10f64.powf(a + s * (b - a)));
    }
    out
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_T_MIN, DEFAULT_T_MAX, DEFAULT_POINTS)
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceCurve {
    pub gamma: f64,
    pub order: Order,
    pub norm: NormKind,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Running maximum, restarted at every decade boundary.
    pub envelope: Vec<(f64, f64)>,
}

impl DistanceCurve {
    pub fn sup(&self) -> f64 {
        self.distances.iter().cloned().fold(0.0, f64::max)
    }

    /// First grid time at which the distance exceeds `level`.
    pub fn first_exceeding(&self, level: f64) -> Option<f64> {
        self.times.iter().zip(&self.distances).find(|(_, &d)| d > level).map(|(&t, _)| t)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,distance,order,norm\n");
        for (t, d) in self.times.iter().zip(&self.distances) {
            s.push_str(&format!("{},{},{},{}\n", sig17(*t), sig17(*d), self.order, self.norm));
        }
        s
    }
}

/// Decimal with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn decade(t: f64) -> i64 {
    if t <= 0.0 {
        i64::MIN
    } else {
        t.log10().floor() as i64
    }
}

pub fn envelope(times: &[f64], distances: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(times.len());
    let mut window = None;
    let mut run = 0.0f64;
    for (&t, &d) in times.iter().zip(distances) {
        // t = 0 joins the first decade
        let w = if t <= 0.0 { decade(times.iter().cloned().find(|&x| x > 0.0).unwrap_or(1.0)) } else { decade(t) };
        if window != Some(w) {
            window = Some(w);
            run = 0.0;
        }
        run = run.max(d);
        out.push((t, run));
    }
    out
}

/// Maximum over the trailing window `[t / 10^decades, t]`.
pub fn sliding_max(times: &[f64], values: &[f64], decades: f64) -> Vec<f64> {
    let f = 10f64.powf(decades);
    times
        .iter()
        .map(|&t| times.iter().zip(values).filter(|(&s, _)| s <= t && s * f >= t).map(|(_, &v)| v).fold(0.0, f64::max))
        .collect()
}

/// Least-squares slope of `log v` against `log t` over `[t_lo, t_hi]`.
pub fn loglog_slope(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, &v)| t >= t_lo && t <= t_hi && v > 0.0)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .collect();
    fit_slope(&pts)
}

pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// `||exp(t(gB + C)) - exp(t(gB + K))||` on the grid.
pub fn distance_curve(b: &CMatrix, c: &CMatrix, gamma: f64, k: &CMatrix, times: &[f64], norm: NormKind, order: Order) -> Result<DistanceCurve> {
    let gb = b * C64::new(gamma, 0.0);
    let exact = &gb + c;
    let approx = &gb + k;
    let distances: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(0.0);
            }
            let ct = C64::new(t, 0.0);
            Ok(op_norm(&(expm(&(&exact * ct))? - expm(&(&approx * ct))?), norm))
        })
        .collect::<Result<_>>()?;
    let envelope = envelope(times, &distances);
    Ok(DistanceCurve { gamma, order, norm, times: times.to_vec(), distances, envelope })
}

/// Effective generator at the requested order.
pub fn effective_at_order(b: &CMatrix, c: &CMatrix, gamma: f64, order: Order, opts: &SolveOptions) -> Result<CMatrix> {
    let p = super::run_pipeline(b, c, gamma, None, opts)?;
    Ok(match order {
        Order::Infinite => p.effective.k.matrix,
        Order::Finite(k) => truncated_k(&k_series(&p.dec, c, k)?, gamma, k),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderScaling {
    pub order: usize,
    /// Breakaway time per coupling; `None` if the grid ends first.
    pub breakaway: Vec<Option<f64>>,
    pub slope: Option<f64>,
    /// Set when some breakaway was not reached, so the slope only bounds the
    /// true exponent from below.
    pub lower_bound_only: bool,
}

impl OrderScaling {
    fn fit(order: usize, gammas: &[f64], breakaway: Vec<Option<f64>>, degenerate: bool) -> Self {
        let pts: Vec<(f64, f64)> = gammas.iter().zip(&breakaway).filter_map(|(g, t)| t.map(|t| (g.ln(), t.ln()))).collect();
        let lower_bound_only = breakaway.iter().any(|t| t.is_none());
        OrderScaling { order, slope: if degenerate { None } else { fit_slope(&pts) }, lower_bound_only, breakaway }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub gammas: Vec<f64>,
    pub norm: NormKind,
    pub threshold_factor: f64,
    /// Supremum of the nonperturbative distance per coupling.
    pub plateau: Vec<f64>,
    /// `threshold_factor * plateau[0]`, held fixed over the sweep.
    pub reference_level: f64,
    /// Log-log slope of the nonperturbative envelope over the last two decades.
    pub tail_slope: Vec<Option<f64>>,
    /// First time the nonperturbative curve exceeds the reference level (expected never).
    pub infinite_breakaway: Vec<Option<f64>>,
    /// Breakaway measured against the fixed reference level.
    pub orders: Vec<OrderScaling>,
    /// Breakaway measured against each coupling's own plateau. Since the
    /// plateau itself shrinks like `1/gamma`, these exponents sit one below
    /// the fixed-level ones.
    pub orders_relative: Vec<OrderScaling>,
    /// All distances vanish (no perturbation).
    pub degenerate: bool,
}

pub fn scaling_check(
    b: &CMatrix,
    c: &CMatrix,
    gammas: &[f64],
    orders: &[usize],
    times: &[f64],
    norm: NormKind,
    threshold_factor: f64,
    opts: &SolveOptions,
) -> Result<ScalingReport> {
    if gammas.is_empty() {
        return Err(Error::Input("scaling check needs at least one coupling".into()));
    }
    let max_order = orders.iter().copied().max().unwrap_or(0);
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let mut plateau = Vec::new();
    let mut tail_slope = Vec::new();
    let mut inf_curves = Vec::new();
    let mut curves: Vec<Vec<DistanceCurve>> = vec![Vec::new(); orders.len()];
    for &g in gammas {
        let p = super::run_pipeline(b, c, g, None, opts)?;
        let inf = distance_curve(b, c, g, &p.effective.k.matrix, times, norm, Order::Infinite)?;
        let smooth = sliding_max(&inf.times, &inf.distances, 1.0);
        tail_slope.push(loglog_slope(&inf.times, &smooth, t_max / 100.0, t_max));
        plateau.push(inf.sup());
        let series = k_series(&p.dec, c, max_order)?;
        for (i, &k) in orders.iter().enumerate() {
            curves[i].push(distance_curve(b, c, g, &truncated_k(&series, g, k), times, norm, Order::Finite(k))?);
        }
        inf_curves.push(inf);
    }
    let degenerate = plateau.iter().all(|&x| x == 0.0);
    let reference_level = threshold_factor * plateau[0];
    let crossing = |cur: &DistanceCurve, level: f64| if level > 0.0 { cur.first_exceeding(level) } else { None };
    let infinite_breakaway = inf_curves.iter().map(|cur| crossing(cur, reference_level)).collect();
    let mut fixed = Vec::new();
    let mut relative = Vec::new();
    for (&k, cs) in orders.iter().zip(&curves) {
        fixed.push(OrderScaling::fit(k, gammas, cs.iter().map(|cur| crossing(cur, reference_level)).collect(), degenerate));
        relative.push(OrderScaling::fit(
            k,
            gammas,
            cs.iter().zip(&plateau).map(|(cur, p)| crossing(cur, threshold_factor * p)).collect(),
            degenerate,
        ));
    }
    Ok(ScalingReport {
        gammas: gammas.to_vec(),
        norm,
        threshold_factor,
        plateau,
        reference_level,
        tail_slope,
        infinite_breakaway,
        orders: fixed,
        orders_relative: relative,
        degenerate,
    })
}
