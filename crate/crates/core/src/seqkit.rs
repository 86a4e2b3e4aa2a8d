//! Deterministic sequence and inequality toolkit.
//!
//! Finite-prefix versions of the discrete Gronwall envelope, the geometric
//! difference-equation solution, the weak recursive-supermartingale check, and
//! the weighted-minimum trend argument. These double as independent oracles
//! for the stochastic modules: every claim here is checkable by direct
//! iteration.

use crate::error::{Error, Result};
use serde::Serialize;

/// Relative tolerance for exact floating-point identities.
pub const EXACT_REL_TOL: f64 = 1e-10;

/// Trend verdicts compare decade means with this factor: the mean over the
/// final decade of indices must be below `factor * mean(first decade)`.
pub const DECADE_TREND_FACTOR: f64 = 0.5;

/// A finite real sequence indexed from `start_index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequencePrefix {
    values: Vec<f64>,
    start_index: usize,
}

impl SequencePrefix {
    /// Builds a prefix, rejecting empty or non-finite data.
    pub fn new(values: Vec<f64>, start_index: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sequence prefix must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sequence prefix contains non-finite values"));
        }
        Ok(SequencePrefix {
            values,
            start_index,
        })
    }

    /// Prefix starting at index 0.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        SequencePrefix::new(values, 0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Absolute indices `start_index .. start_index + len`.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.start_index..self.start_index + self.values.len()
    }
}

/// Outcome of a pointwise recursion check.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionVerdict {
    pub holds: bool,
    pub first_violation_index: Option<usize>,
    pub sup_y: f64,
    pub partial_sum_x: f64,
    /// Explicit dominating envelope `(Y_0 + sum Z) * prod(1 + a_s)`.
    pub envelope: SequencePrefix,
}

/// Outcome of a decade-mean trend check.
#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub passes: bool,
    pub first_decade_mean: f64,
    pub last_decade_mean: f64,
    /// `last_decade_mean / first_decade_mean` (infinite if the first mean is 0).
    pub ratio: f64,
}

/// Discrete Gronwall envelope: given `A >= 0` and nonnegative `c_0..c_{n-1}`,
/// returns `E` of length `n + 1` with `E_0 = A` and
/// `E_n = A * prod_{k=1..n} (1 + c_{k-1})`.
///
/// Any sequence with `X_0 <= A` and `X_n <= A + sum_{k<=n} c_{k-1} X_{k-1}` is
/// dominated by `E`.
pub fn gronwall_envelope(a: f64, c: &SequencePrefix) -> Result<SequencePrefix> {
    if a < 0.0 || a.is_nan() {
        return Err(Error::invalid(format!("gronwall: A must be >= 0, got {a}")));
    }
    if c.values().iter().any(|&ck| ck < 0.0) {
        return Err(Error::invalid("gronwall: all c_k must be >= 0"));
    }
    let mut env = Vec::with_capacity(c.len() + 1);
    let mut cur = a;
    env.push(cur);
    for &ck in c.values() {
        cur *= 1.0 + ck;
        env.push(cur);
    }
    SequencePrefix::new(env, c.start_index())
}

/// Closed-form solution of `Y_{n0+n} = beta^2 Y_{n0+n-1} + X_{n0+n-1}` with
/// `Y_{n0} = y`, i.e. `Y_{n0+n} = beta^{2n} y + sum_{k=0}^{n-1} beta^{2k} X_{n0+n-1-k}`.
///
/// Returns the prefix `Y_{n0} .. Y_{n0+len(X)}`. Sequences satisfying the
/// recursion with `<=` (resp. `>=`) are dominated by (resp. dominate) `Y`.
pub fn solve_geometric_recursion(
    beta: f64,
    y: f64,
    x: &SequencePrefix,
    n0: usize,
) -> Result<SequencePrefix> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "geometric recursion: beta must be in [0, 1), got {beta}"
        )));
    }
    let b2 = beta * beta;
    let n = x.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(y);
    // Horner evaluation of the convolution: each step multiplies the whole
    // partial sum by beta^2, which reproduces the closed form exactly.
    let mut geom = y;
    for &xk in x.values() {
        geom = b2 * geom + xk;
        out.push(geom);
    }
    SequencePrefix::new(out, n0)
}

/// Verifies the weak recursive inequality
/// `Y_t <= (1 + a_{t-1}) Y_{t-1} - X_{t-1} + Z_{t-1}` pointwise and reports
/// `sup_t Y_t`, `sum_t X_t`, and the explicit bound
/// `Y_t <= (Y_0 + sum Z) * prod_{s<t}(1 + a_s)`.
///
/// A violated recursion is reported through the verdict, not as an error.
pub fn check_weak_rs(
    y: &SequencePrefix,
    x: &SequencePrefix,
    z: &SequencePrefix,
    a: &SequencePrefix,
) -> Result<RecursionVerdict> {
    let n = y.len();
    for (name, s) in [("X", x), ("Z", z), ("a", a)] {
        if s.len() != n {
            return Err(Error::invalid(format!(
                "check_weak_rs: {name} has length {} but Y has length {n}",
                s.len()
            )));
        }
    }
    for (name, s) in [("Y", y), ("X", x), ("Z", z), ("a", a)] {
        if s.values().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(format!(
                "check_weak_rs: {name} must be nonnegative"
            )));
        }
    }

    let yv = y.values();
    let mut first_violation = None;
    for t in 1..n {
        let rhs = (1.0 + a.values()[t - 1]) * yv[t - 1] - x.values()[t - 1] + z.values()[t - 1];
        let slack = EXACT_REL_TOL * (1.0 + rhs.abs() + yv[t].abs());
        if yv[t] > rhs + slack {
            first_violation = Some(y.start_index() + t);
            break;
        }
    }

    let z_total: f64 = z.values().iter().sum();
    let mut env = Vec::with_capacity(n);
    let mut cur = yv[0] + z_total;
    env.push(cur);
    for t in 1..n {
        cur *= 1.0 + a.values()[t - 1];
        env.push(cur);
    }
    // The explicit product bound is implied by the recursion; a violation of
    // it counts against the verdict the same way.
    if first_violation.is_none() {
        for (t, (yt, et)) in yv.iter().zip(&env).enumerate() {
            if *yt > et * (1.0 + EXACT_REL_TOL) + f64::MIN_POSITIVE {
                first_violation = Some(y.start_index() + t);
                break;
            }
        }
    }
    let envelope = SequencePrefix::new(env, y.start_index())?;

    Ok(RecursionVerdict {
        holds: first_violation.is_none(),
        first_violation_index: first_violation,
        sup_y: yv.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        partial_sum_x: x.values().iter().sum(),
        envelope,
    })
}

/// Decade-mean trend over explicit (index, value) pairs: the mean over the
/// final decade `(t_max/10, t_max]` must fall below
/// `DECADE_TREND_FACTOR * mean([t_min, 10 t_min))`.
pub fn decade_trend(ts: &[f64], values: &[f64]) -> Result<TrendReport> {
    if ts.len() != values.len() || ts.is_empty() {
        return Err(Error::invalid("decade_trend: mismatched or empty inputs"));
    }
    let t0 = ts[0];
    let tn = ts[ts.len() - 1];
    if t0 < 1.0 || t0.is_nan() || tn < 100.0 * t0 {
        return Err(Error::invalid(format!(
            "decade_trend: window [{t0}, {tn}] spans fewer than two decades"
        )));
    }
    let mean_over = |lo: f64, hi: f64| -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (&t, &v) in ts.iter().zip(values) {
            if t >= lo && t < hi {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    };
    let first = mean_over(t0, 10.0 * t0);
    let last = mean_over(tn / 10.0, tn + 1.0);
    if !first.is_finite() || !last.is_finite() {
        return Err(Error::invalid("decade_trend: empty decade"));
    }
    let ratio = if first > 0.0 {
        last / first
    } else if last <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(TrendReport {
        passes: ratio < DECADE_TREND_FACTOR,
        first_decade_mean: first,
        last_decade_mean: last,
        ratio,
    })
}

/// Weighted-minimum rate check: with positive weights `alpha_t` and a
/// nonnegative path `x_t`, requires the partial sums of
/// `sum_t alpha_t min_{s<=t} x_s` to plateau (summability proxy), then tests
/// whether `m_t = t^r min_{s<=t} x_s` trends to zero by decade means.
///
/// Diverging weighted partial sums are a precondition failure.
pub fn knopp_min_rate_check(
    alpha: &SequencePrefix,
    x: &SequencePrefix,
    r: f64,
) -> Result<TrendReport> {
    if alpha.len() != x.len() {
        return Err(Error::invalid(format!(
            "knopp: alpha has length {}, x has length {}",
            alpha.len(),
            x.len()
        )));
    }
    if alpha.start_index() < 1 {
        return Err(Error::invalid("knopp: indices must start at t >= 1"));
    }
    if alpha.values().iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("knopp: weights must be positive"));
    }
    if x.values().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("knopp: path must be nonnegative"));
    }

    let n = x.len();
    let mut running_min = Vec::with_capacity(n);
    let mut cur = f64::INFINITY;
    for &v in x.values() {
        cur = cur.min(v);
        running_min.push(cur);
    }

    let mut partials = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (a, m) in alpha.values().iter().zip(&running_min) {
        acc += a * m;
        partials.push(acc);
    }
    if !plateaued(&partials) {
        return Err(Error::precondition(
            "knopp: weighted partial sums do not plateau (sum alpha_t min x diverges numerically)",
        ));
    }

    let ts: Vec<f64> = x.indices().map(|t| t as f64).collect();
    let m: Vec<f64> = ts
        .iter()
        .zip(&running_min)
        .map(|(t, v)| t.powf(r) * v)
        .collect();
    decade_trend(&ts, &m)
}

/// Plateau proxy for summability: over the last 10% of indices the partial
/// sums move by less than 1% of the final value.
pub fn plateaued(partial_sums: &[f64]) -> bool {
    if partial_sums.len() < 10 {
        return false;
    }
    let n = partial_sums.len();
    let tail = &partial_sums[n - n / 10..];
    let last = partial_sums[n - 1];
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).abs() <= 0.01 * last.abs().max(f64::MIN_POSITIVE)
}
