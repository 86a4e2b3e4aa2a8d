//! Stochastic gradient oracles and their noise certificates.
//!
//! The canonical assumption-compliant oracle is a finite sum: sampling a
//! uniformly random component of a finite dataset gives an unbiased gradient,
//! a finite worst-case loss at the minimizer, and enumerable expectations, so
//! every noise bound below can be checked exactly. An additive-noise oracle is
//! provided for ablations; its per-sample loss function is not certified
//! against the convexity/nonnegativity requirements, so the exact bound checks
//! refuse it.

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::optim::StepSchedule;
use crate::{dot, norm_sq};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// One stochastic draw: the sampled loss, its gradient, and the injected
/// noise `grad F(w) - grad`.
#[derive(Debug, Clone)]
pub struct GradientSample {
    pub z_id: u64,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub enum OracleKind {
    /// Components are the rows of the base least-squares dataset.
    FiniteSumLeastSquares,
    /// Components are positive multiples of the base cost with unit mean.
    FiniteSumScaled { weights: Vec<f64> },
    /// `grad = grad F(w) + sigma * xi`, `xi` standard normal per coordinate.
    AdditiveNoise { sigma: f64 },
}

/// A gradient estimator over a base objective.
#[derive(Debug, Clone, Serialize)]
pub struct StochasticOracle {
    base: Objective,
    kind: OracleKind,
    sup_loss_at_min: f64,
}

impl StochasticOracle {
    /// Finite-sum oracle over the rows of a least-squares objective.
    pub fn finite_sum_least_squares(base: Objective) -> Result<Self> {
        let sup = match base.kind() {
            crate::objectives::ObjectiveKind::LeastSquares { xs, ys } => xs
                .iter()
                .zip(ys)
                .map(|(x, y)| {
                    let r = dot(x, base.w_star()) - y;
                    0.5 * r * r
                })
                .fold(0.0f64, f64::max),
            _ => {
                return Err(Error::invalid(
                    "finite_sum_least_squares requires a least_squares objective",
                ))
            }
        };
        Ok(StochasticOracle {
            base,
            kind: OracleKind::FiniteSumLeastSquares,
            sup_loss_at_min: sup,
        })
    }

    /// Finite-sum oracle with multiplicative components `u_i * F`; the weights
    /// are renormalized to mean exactly one so enumeration recovers `grad F`.
    pub fn finite_sum_scaled(base: Objective, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&u| u.is_nan() || u <= 0.0) {
            return Err(Error::invalid("scaled oracle: weights must be positive"));
        }
        let mean: f64 = weights.iter().sum::<f64>() / weights.len() as f64;
        let weights: Vec<f64> = weights.iter().map(|u| u / mean).collect();
        let sup = weights.iter().cloned().fold(0.0, f64::max) * base.f_star();
        Ok(StochasticOracle {
            base,
            kind: OracleKind::FiniteSumScaled { weights },
            sup_loss_at_min: sup,
        })
    }

    /// Additive Gaussian gradient noise; flagged as not certified against the
    /// per-sample loss assumptions.
    pub fn additive_noise(base: Objective, sigma: f64) -> Result<Self> {
        if sigma < 0.0 || sigma.is_nan() {
            return Err(Error::invalid("additive oracle: sigma must be >= 0"));
        }
        let sup = base.f_star();
        Ok(StochasticOracle {
            base,
            kind: OracleKind::AdditiveNoise { sigma },
            sup_loss_at_min: sup,
        })
    }

    pub fn base(&self) -> &Objective {
        &self.base
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    pub fn sup_loss_at_min(&self) -> f64 {
        self.sup_loss_at_min
    }

    /// Whether the per-sample loss assumptions are certified for this oracle.
    pub fn certified(&self) -> bool {
        !matches!(self.kind, OracleKind::AdditiveNoise { .. })
    }

    pub fn n_components(&self) -> Option<usize> {
        match (&self.kind, self.base.kind()) {
            (
                OracleKind::FiniteSumLeastSquares,
                crate::objectives::ObjectiveKind::LeastSquares { xs, .. },
            ) => Some(xs.len()),
            (OracleKind::FiniteSumScaled { weights }, _) => Some(weights.len()),
            _ => None,
        }
    }

    /// Loss and gradient of component `i` at `w`.
    pub fn component_loss_grad(&self, i: usize, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        match (&self.kind, self.base.kind()) {
            (
                OracleKind::FiniteSumLeastSquares,
                crate::objectives::ObjectiveKind::LeastSquares { xs, ys },
            ) => {
                let x = xs
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("component {i} out of range")))?;
                if w.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        got: w.len(),
                    });
                }
                let r = dot(x, w) - ys[i];
                Ok((0.5 * r * r, x.iter().map(|xi| r * xi).collect()))
            }
            (OracleKind::FiniteSumScaled { weights }, _) => {
                let u = *weights
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("component {i} out of range")))?;
                let loss = u * self.base.eval(w)?;
                let grad = self.base.grad(w)?.iter().map(|g| u * g).collect();
                Ok((loss, grad))
            }
            _ => Err(Error::invalid(
                "component access requires a finite-sum oracle",
            )),
        }
    }

    /// Draws one stochastic gradient at `w`.
    pub fn sample<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R) -> Result<GradientSample> {
        let grad_f = self.base.grad(w)?;
        match &self.kind {
            OracleKind::AdditiveNoise { sigma } => {
                let z_id = rng.random::<u64>();
                let grad: Vec<f64> = grad_f
                    .iter()
                    .map(|g| {
                        g + sigma
                            * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                    })
                    .collect();
                let noise = grad_f.iter().zip(&grad).map(|(f, g)| f - g).collect();
                Ok(GradientSample {
                    z_id,
                    loss: self.base.eval(w)?,
                    grad,
                    noise,
                })
            }
            _ => {
                let n = self.n_components().expect("finite-sum oracle");
                let i = rng.random_range(0..n);
                let (loss, grad) = self.component_loss_grad(i, w)?;
                let noise = grad_f.iter().zip(&grad).map(|(f, g)| f - g).collect();
                Ok(GradientSample {
                    z_id: i as u64,
                    loss,
                    grad,
                    noise,
                })
            }
        }
    }

    /// Exact mean of component gradients (finite-sum only).
    pub fn enumerate_mean_grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        let n = self
            .n_components()
            .ok_or_else(|| Error::invalid("enumeration requires a finite-sum oracle"))?;
        let mut mean = vec![0.0; w.len()];
        for i in 0..n {
            let (_, g) = self.component_loss_grad(i, w)?;
            for (m, gi) in mean.iter_mut().zip(&g) {
                *m += gi / n as f64;
            }
        }
        Ok(mean)
    }
}

/// Closed-form noise constants for a convex `(gamma, L)`-smooth estimator with
/// bounded loss at the minimizer.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseConstants {
    /// Constant in `||grad F||^2 <= a1 F + a0` (the a2 formula built from `F*`).
    pub a0: f64,
    /// `||grad l||^2 <= a1 l + a2`.
    pub a1: f64,
    pub a2: f64,
    /// `||dm||^2 <= 6 L^2 ||w - w*||^{2 gamma} + a4`.
    pub a4: f64,
    /// `||grad l||^2 <= 2 L^2 ||w - w*||^{2 gamma} + a5`.
    pub a5: f64,
    /// `E ||dm||^2 <= a6 (F - F*) + a7`.
    pub a6: f64,
    pub a7: f64,
    /// Second-moment condition
    /// `E||grad l||^{1+gamma} <= A (F - F*) + B ||grad F||^{1+gamma} + C`.
    pub abc_a: f64,
    pub abc_b: f64,
    pub abc_c: f64,
}

/// Computes the noise constants from the smoothness certificate.
///
/// For `gamma < 1` the Young-inequality split gives
/// `a1 = 2 gamma / (1 + gamma)` and
/// `a2 = (1-gamma)/(1+gamma) ((1+gamma)/gamma L^{1/gamma})^{2 gamma/(1-gamma)}
///       + a1 sup_loss`; at `gamma = 1` the split degenerates and the direct
/// bound `||grad l||^2 <= 2 L l` applies (`a1 = 2L`, `a2 = 0`).
pub fn compute_noise_constants(
    l: f64,
    gamma: f64,
    sup_loss_at_min: f64,
    f_star: f64,
) -> Result<NoiseConstants> {
    if l.is_nan() || l <= 0.0 {
        return Err(Error::invalid("noise constants: L must be positive"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!(
            "noise constants: gamma must be in (0, 1], got {gamma}"
        )));
    }
    if sup_loss_at_min < 0.0 || f_star < 0.0 {
        return Err(Error::invalid(
            "noise constants: sup_loss_at_min and F* must be nonnegative",
        ));
    }
    // The gamma = 1 case skips the Young split entirely: || grad l ||^2
    // <= 2 L (l(z, w) - l(z, w*)) <= 2 L l(z, w), so both offsets vanish.
    let (a1, a2, a0) = if gamma == 1.0 {
        (2.0 * l, 0.0, 0.0)
    } else {
        let a1 = 2.0 * gamma / (1.0 + gamma);
        let young = (1.0 - gamma) / (1.0 + gamma)
            * ((1.0 + gamma) / gamma * l.powf(1.0 / gamma)).powf(2.0 * gamma / (1.0 - gamma));
        (a1, young + a1 * sup_loss_at_min, young + a1 * f_star)
    };
    let a4 = 4.0 * a1 * sup_loss_at_min + 4.0 * a2;
    let a5 = 2.0 * a1 * sup_loss_at_min + 2.0 * a2;
    let a6 = 4.0 * a1;
    let a7 = 2.0 * (a0 + a2 + a1 * f_star);
    // Second-moment triple with theta = gamma; B absorbs into A, and C keeps
    // the residual terms plus a bound on E||grad l(w*)||^{1+gamma} via a5.
    let abc_a = (2.0f64).powf(gamma) * l.powf(1.0 / gamma) * (1.0 + gamma);
    let abc_b = 0.0;
    let abc_c = (2.0f64).powf(gamma) * (1.0 - gamma)
        + (2.0f64).powf(gamma) * a5.powf((1.0 + gamma) / 2.0);
    let out = NoiseConstants {
        a0,
        a1,
        a2,
        a4,
        a5,
        a6,
        a7,
        abc_a,
        abc_b,
        abc_c,
    };
    for (name, v) in [
        ("a0", out.a0),
        ("a1", out.a1),
        ("a2", out.a2),
        ("a4", out.a4),
        ("a5", out.a5),
        ("a6", out.a6),
        ("a7", out.a7),
        ("A", out.abc_a),
        ("B", out.abc_b),
        ("C", out.abc_c),
    ] {
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "noise constants: {name} is not finite for gamma={gamma}, L={l}"
            )));
        }
    }
    Ok(out)
}

/// Verdict of one sampled-mean unbiasedness test.
#[derive(Debug, Clone, Serialize)]
pub struct UnbiasedReport {
    pub pass: bool,
    /// Worst componentwise `|mean| / (3 stderr)`; <= 1 passes.
    pub worst_normalized_bias: f64,
    pub n_samples: usize,
}

/// Monte Carlo check that the noise `dm = grad F - grad l` has zero mean:
/// each component mean must sit within three standard errors of zero.
pub fn check_unbiased<R: Rng + ?Sized>(
    oracle: &StochasticOracle,
    w: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<UnbiasedReport> {
    if n_samples < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: n_samples,
        });
    }
    let d = w.len();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..n_samples {
        let s = oracle.sample(w, rng)?;
        for j in 0..d {
            sum[j] += s.noise[j];
            sum_sq[j] += s.noise[j] * s.noise[j];
        }
    }
    let n = n_samples as f64;
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let mean = sum[j] / n;
        let var = (sum_sq[j] / n - mean * mean).max(0.0);
        let stderr = (var / n).sqrt();
        let tol = 3.0 * stderr + 1e-12;
        worst = worst.max(mean.abs() / tol);
    }
    Ok(UnbiasedReport {
        pass: worst <= 1.0,
        worst_normalized_bias: worst,
        n_samples,
    })
}

/// One named noise-bound verdict, with a witness on failure.
#[derive(Debug, Clone, Serialize)]
pub struct BoundVerdict {
    pub name: String,
    pub pass: bool,
    /// Worst `lhs / rhs` ratio observed.
    pub worst_ratio: f64,
    /// `(point index, component index)` of the witness when violated.
    pub witness: Option<(usize, usize)>,
}

const BOUND_SLACK: f64 = 1.0 + 1e-9;

/// Verifies the five noise bounds at the given points by full component
/// enumeration (finite-sum oracles only):
/// (a) `||grad l||^2 <= a1 l + a2`,
/// (b) `||dm||^2 <= 6 L^2 ||w-w*||^{2g} + a4`,
/// (c) `||grad l||^2 <= 2 L^2 ||w-w*||^{2g} + a5`,
/// (d) `E||dm||^2 <= a6 (F-F*) + a7`,
/// (e) `E||grad l||^{1+g} <= A (F-F*) + B ||grad F||^{1+g} + C`.
pub fn check_noise_bounds(
    oracle: &StochasticOracle,
    constants: &NoiseConstants,
    points: &[Vec<f64>],
) -> Result<Vec<BoundVerdict>> {
    let n = oracle.n_components().ok_or_else(|| {
        Error::invalid("check_noise_bounds requires a finite-sum oracle (enumeration)")
    })?;
    if points.is_empty() {
        return Err(Error::invalid("check_noise_bounds: no points given"));
    }
    let base = oracle.base();
    let g = base.gamma();
    let l = base.l_const();
    let mut worst = [(0.0f64, None::<(usize, usize)>); 5];
    let mut track = |slot: usize, lhs: f64, rhs: f64, wit: (usize, usize)| {
        let ratio = lhs / rhs.max(f64::MIN_POSITIVE);
        if ratio > worst[slot].0 {
            worst[slot] = (ratio, Some(wit));
        }
    };
    for (pi, w) in points.iter().enumerate() {
        let dist_sq = w
            .iter()
            .zip(base.w_star())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        let dist_2g = dist_sq.powf(g);
        let f_gap = base.gap(w)?;
        let grad_f = base.grad(w)?;
        let mut mean_dm_sq = 0.0;
        let mut mean_grad_pow = 0.0;
        for i in 0..n {
            let (loss, grad) = oracle.component_loss_grad(i, w)?;
            let gsq = norm_sq(&grad);
            let dm_sq = grad_f
                .iter()
                .zip(&grad)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            mean_dm_sq += dm_sq / n as f64;
            mean_grad_pow += gsq.sqrt().powf(1.0 + g) / n as f64;
            track(0, gsq, constants.a1 * loss + constants.a2, (pi, i));
            track(1, dm_sq, 6.0 * l * l * dist_2g + constants.a4, (pi, i));
            track(2, gsq, 2.0 * l * l * dist_2g + constants.a5, (pi, i));
        }
        track(3, mean_dm_sq, constants.a6 * f_gap + constants.a7, (pi, n));
        let abc_rhs = constants.abc_a * f_gap
            + constants.abc_b * norm_sq(&grad_f).sqrt().powf(1.0 + g)
            + constants.abc_c;
        track(4, mean_grad_pow, abc_rhs, (pi, n));
    }
    let names = [
        "grad_sq_vs_loss",
        "noise_sq_vs_dist",
        "grad_sq_vs_dist",
        "mean_noise_sq_vs_gap",
        "second_moment_abc",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, (ratio, wit))| BoundVerdict {
            name: (*name).into(),
            pass: ratio <= BOUND_SLACK,
            worst_ratio: ratio,
            witness: if ratio <= BOUND_SLACK { None } else { wit },
        })
        .collect())
}

/// Martingale-structure verdict.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub pass: bool,
    /// MC estimate of `E || sum alpha_s dm_s ||^2`.
    pub weighted_sum_sq: f64,
    /// `sum alpha_s^2 E ||dm_s||^2` (exact for finite sums, MC otherwise).
    pub diagonal_sum: f64,
    /// `|lhs - rhs|` in units of the MC standard error.
    pub deviation_in_stderrs: f64,
    /// Worst cross-time correlation in units of its standard error.
    pub worst_cross_corr_in_stderrs: f64,
}

/// Checks `E || sum_s alpha_s dm_s ||^2 = sum_s alpha_s^2 E ||dm_s||^2` at a
/// frozen iterate (`w* + 0.5` per coordinate) with i.i.d. draws, plus
/// vanishing cross-time noise correlations.
pub fn check_martingale_structure<R: Rng + ?Sized>(
    oracle: &StochasticOracle,
    schedule: &StepSchedule,
    t_len: usize,
    n_reps: usize,
    rng: &mut R,
) -> Result<MartingaleReport> {
    if t_len < 10 {
        return Err(Error::invalid("martingale check: T must be >= 10"));
    }
    if n_reps < 16 {
        return Err(Error::InsufficientSamples {
            needed: 16,
            got: n_reps,
        });
    }
    let w: Vec<f64> = oracle.base().w_star().iter().map(|x| x + 0.5).collect();
    let alphas: Vec<f64> = (1..=t_len).map(|t| schedule.alpha(t)).collect();

    // Exact diagonal when we can enumerate, MC otherwise.
    let dm_second_moment = match oracle.n_components() {
        Some(n) => {
            let grad_f = oracle.base().grad(&w)?;
            let mut m = 0.0;
            for i in 0..n {
                let (_, grad) = oracle.component_loss_grad(i, &w)?;
                m += grad_f
                    .iter()
                    .zip(&grad)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / n as f64;
            }
            m
        }
        None => {
            let mut m = 0.0;
            let probes = 4000;
            for _ in 0..probes {
                let s = oracle.sample(&w, rng)?;
                m += norm_sq(&s.noise) / probes as f64;
            }
            m
        }
    };
    let diagonal_sum: f64 = alphas.iter().map(|a| a * a * dm_second_moment).sum();

    let mut streams = Vec::with_capacity(n_reps);
    for _ in 0..n_reps {
        let stream: Result<Vec<Vec<f64>>> = (0..t_len)
            .map(|_| Ok(oracle.sample(&w, rng)?.noise))
            .collect();
        streams.push(stream?);
    }
    Ok(martingale_stats_from_draws(&alphas, &streams, diagonal_sum))
}

/// Statistics shared by the oracle-driven check and test fixtures: the
/// weighted-sum second moment against the diagonal, plus cross-time
/// correlations at a few lags.
pub fn martingale_stats_from_draws(
    alphas: &[f64],
    noise_streams: &[Vec<Vec<f64>>],
    diagonal_sum: f64,
) -> MartingaleReport {
    let n_reps = noise_streams.len();
    let t_len = alphas.len();
    let mut sums = Vec::with_capacity(n_reps);
    for stream in noise_streams {
        let d = stream[0].len();
        let mut acc = vec![0.0; d];
        for (a, dm) in alphas.iter().zip(stream) {
            for (s, x) in acc.iter_mut().zip(dm) {
                *s += a * x;
            }
        }
        sums.push(norm_sq(&acc));
    }
    let mean = sums.iter().sum::<f64>() / n_reps as f64;
    let var = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n_reps as f64;
    let stderr = (var / n_reps as f64).sqrt().max(f64::MIN_POSITIVE);
    let deviation = (mean - diagonal_sum).abs() / stderr;

    // Cross-time correlations E<dm_s, dm_t> at spread-out lags.
    let pairs = [
        (0, t_len / 2),
        (t_len / 4, 3 * t_len / 4),
        (0, t_len - 1),
        (t_len / 3, t_len / 3 + 1),
    ];
    let mut worst_cross: f64 = 0.0;
    for &(s, t) in &pairs {
        if s >= t || t >= t_len {
            continue;
        }
        let vals: Vec<f64> = noise_streams.iter().map(|st| dot(&st[s], &st[t])).collect();
        let m = vals.iter().sum::<f64>() / n_reps as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n_reps as f64;
        let se = (v / n_reps as f64).sqrt().max(f64::MIN_POSITIVE);
        worst_cross = worst_cross.max(m.abs() / se);
    }

    MartingaleReport {
        pass: deviation <= 5.0 && worst_cross <= 3.0,
        weighted_sum_sq: mean,
        diagonal_sum,
        deviation_in_stderrs: deviation,
        worst_cross_corr_in_stderrs: worst_cross,
    }
}
