//! SGD and stochastic heavy ball.
//!
//! The momentum recursion `w_{t+1} = w_t - alpha_t grad l(Z_t, w_t) + beta (w_t - w_{t-1})`
//! is run in its one-step form `v_{t+1} = beta v_t - alpha_t g`,
//! `z_{t+1} = z_t - alpha_t/(1-beta) g`, `w = z - beta/(1-beta) v`, which avoids
//! the cancellation between consecutive iterates; the two-term form is kept
//! for equivalence checks. Runs record per-iteration diagnostics and exact
//! running sums so the rate and envelope checks can be evaluated afterwards.

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::oracle::{NoiseConstants, StochasticOracle};
use crate::{dot, norm_sq};
use rand::Rng;
use serde::Serialize;

/// Which rate regime the schedule targets; controls the validity gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScheduleMode {
    /// Almost-sure rates: `p` in `(1/(1+gamma), 1)`.
    AsRate,
    /// High-probability rates: `gamma = 1` and `p` in `(1/2, 1)`.
    HpRate,
}

/// Polynomially decaying step size `alpha_t = min(alpha0, c t^{-p})`,
/// `alpha_0 = alpha0`, nonincreasing from `t = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepSchedule {
    pub c: f64,
    pub p: f64,
    pub alpha0: f64,
    pub mode: ScheduleMode,
}

impl StepSchedule {
    pub fn new(c: f64, p: f64, alpha0: f64, mode: ScheduleMode) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(c) || !positive(alpha0) || !p.is_finite() {
            return Err(Error::invalid(
                "schedule: c and alpha0 must be positive and finite, p finite",
            ));
        }
        Ok(StepSchedule { c, p, alpha0, mode })
    }

    pub fn alpha(&self, t: usize) -> f64 {
        if t == 0 {
            self.alpha0
        } else {
            self.alpha0.min(self.c * (t as f64).powf(-self.p))
        }
    }

    /// `sum_{t=lo..=hi} alpha_t^k`.
    pub fn sum_alpha_pow(&self, lo: usize, hi: usize, k: i32) -> f64 {
        (lo..=hi).map(|t| self.alpha(t).powi(k)).sum()
    }
}

/// Derived momentum constants plus the step-size cap and the Bernstein-based
/// gate constant.
#[derive(Debug, Clone, Serialize)]
pub struct ShbConstants {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    /// Step cap `K0 = min(1, 1/((a1 k0^2 + a1 k0 + a1 + k1)(1 - beta)))`.
    pub cap_k0: f64,
    /// Derived (or overridden) constant in the cap `alpha0 <= 1/(2 sqrt(K5))`.
    pub k5_estimate: f64,
    pub beta: f64,
    pub l: f64,
    pub gamma: f64,
    pub sup_loss_at_min: f64,
    pub noise: NoiseConstants,
}

/// Builds the momentum constant table from the smoothness certificate and the
/// noise constants: `k0 = beta/(1-beta)`, `k1 = a1/(1-beta)^2`,
/// `k2 = a2/(1-beta)^2`, `k3 = 2 sup_loss/(1-beta)`, `k4 = k0 + beta k0^2`,
/// `k5 = k2 + k3 + a2 k0^2`.
pub fn compute_shb_constants(
    l: f64,
    gamma: f64,
    beta: f64,
    sup_loss_at_min: f64,
    noise: &NoiseConstants,
) -> Result<ShbConstants> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "shb constants: beta must be in [0, 1), got {beta}"
        )));
    }
    if l.is_nan() || l <= 0.0 || sup_loss_at_min < 0.0 {
        return Err(Error::invalid(
            "shb constants: need L > 0 and sup_loss_at_min >= 0",
        ));
    }
    let omb = 1.0 - beta;
    let a1 = noise.a1;
    let a2 = noise.a2;
    let k0 = beta / omb;
    let k1 = a1 / (omb * omb);
    let k2 = a2 / (omb * omb);
    let k3 = 2.0 * sup_loss_at_min / omb;
    let k4 = k0 + beta * k0 * k0;
    let k5 = k2 + k3 + a2 * k0 * k0;
    let cap_k0 = 1.0f64.min(1.0 / ((a1 * k0 * k0 + a1 * k0 + a1 + k1) * omb));
    let k5_estimate = derive_k5(l, gamma, beta, k4, cap_k0, noise);
    Ok(ShbConstants {
        k0,
        k1,
        k2,
        k3,
        k4,
        k5,
        cap_k0,
        k5_estimate,
        beta,
        l,
        gamma,
        sup_loss_at_min,
        noise: noise.clone(),
    })
}

impl ShbConstants {
    /// Replaces the derived K5 with a configured value.
    pub fn with_k5_override(mut self, k5: f64) -> Result<Self> {
        if k5.is_nan() || k5 <= 0.0 {
            return Err(Error::invalid("K5 override must be positive"));
        }
        self.k5_estimate = k5;
        Ok(self)
    }
}

/// Bernstein-gate constant: bound the martingale increments by
/// `b = (k4+1)(6 L^2 K0^{(1+gamma)/2} + a4 sqrt(K0))` and the conditional
/// variance rate by `c = max(2 k11 a6 K0, k11 K0 a7, k11 a7)` with
/// `k11 = 2(k4^2+1)`, then pick `q` in `(0, 1]` by bisection so that
/// `theta = (e^q - q - 1)/q * c/b <= 1/2` and return `K5 = 2 theta / (1-beta)`.
fn derive_k5(l: f64, gamma: f64, beta: f64, k4: f64, cap_k0: f64, noise: &NoiseConstants) -> f64 {
    let b = (k4 + 1.0)
        * (6.0 * l * l * cap_k0.powf((1.0 + gamma) / 2.0) + noise.a4 * cap_k0.sqrt());
    let k11 = 2.0 * (k4 * k4 + 1.0);
    let c = (2.0 * k11 * noise.a6 * cap_k0)
        .max(k11 * cap_k0 * noise.a7)
        .max(k11 * noise.a7);
    if c <= 0.0 {
        // Noiseless at the minimizer: the martingale term vanishes and the
        // gate is vacuous.
        return 1e-12;
    }
    let f = |q: f64| ((q.exp() - q - 1.0) / q) * (c / b);
    let theta = if f(1.0) <= 0.5 {
        f(1.0)
    } else {
        let (mut lo, mut hi) = (1e-12, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        f(0.5 * (lo + hi)).min(0.5)
    };
    2.0 * theta / (1.0 - beta)
}

/// Optimizer state: the iterate, its predecessor, the displacement
/// `v = w - w_prev`, and the auxiliary point `z = w + beta/(1-beta) v`.
#[derive(Debug, Clone)]
pub struct ShbState {
    pub w: Vec<f64>,
    pub w_prev: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub t: usize,
}

impl ShbState {
    /// Start state at `t = 1` with `w_1 = w_0`, `v_1 = 0`, `z_1 = w_1`.
    pub fn init(w0: &[f64]) -> Self {
        ShbState {
            w: w0.to_vec(),
            w_prev: w0.to_vec(),
            v: vec![0.0; w0.len()],
            z: w0.to_vec(),
            t: 1,
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBlowup { index: self.t });
        }
        Ok(())
    }
}

/// One-step update: `v <- beta v - alpha g`, `z <- z - alpha/(1-beta) g`,
/// `w = z - beta/(1-beta) v`.
#[allow(clippy::needless_range_loop)]
pub fn shb_step_onestep(state: &mut ShbState, grad: &[f64], alpha: f64, beta: f64) -> Result<()> {
    let k0 = beta / (1.0 - beta);
    let scale = alpha / (1.0 - beta);
    state.w_prev.copy_from_slice(&state.w);
    for j in 0..state.w.len() {
        state.v[j] = beta * state.v[j] - alpha * grad[j];
        state.z[j] -= scale * grad[j];
        state.w[j] = state.z[j] - k0 * state.v[j];
    }
    state.t += 1;
    state.check_finite()
}

/// Two-term update: `w <- w - alpha g + beta (w - w_prev)`, with the derived
/// fields rebuilt to preserve the state invariants.
#[allow(clippy::needless_range_loop)]
pub fn shb_step_twoterm(state: &mut ShbState, grad: &[f64], alpha: f64, beta: f64) -> Result<()> {
    let k0 = beta / (1.0 - beta);
    for j in 0..state.w.len() {
        let next = state.w[j] - alpha * grad[j] + beta * (state.w[j] - state.w_prev[j]);
        state.w_prev[j] = state.w[j];
        state.w[j] = next;
        state.v[j] = state.w[j] - state.w_prev[j];
        state.z[j] = state.w[j] + k0 * state.v[j];
    }
    state.t += 1;
    state.check_finite()
}

/// Exact running sums over steps `s < t`.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct RunningSums {
    /// `sum_{s=0}^{t-1} alpha_s` (includes `alpha_0`).
    pub alpha: f64,
    /// `sum alpha_s (F(w_s) - F*)`.
    pub alpha_f_gap: f64,
    /// `sum alpha_s^2 l(Z_s, w_s)`.
    pub alpha2_loss: f64,
    /// `sum alpha_s ||grad F(w_s)||^2`.
    pub alpha_grad_sq: f64,
    /// `sum alpha_s <dm_s, v_s>`.
    pub alpha_dm_v: f64,
    /// `sum <grad F(w_s), -alpha_s grad l_s>`.
    pub gradf_step: f64,
    /// `sum alpha_s ||v_s||^2`.
    pub alpha_v_sq: f64,
    /// `sum <grad F(w_s), v_s>`.
    pub gradf_v: f64,
    /// `sum ||v_s||^2`.
    pub v_sq: f64,
}

/// Snapshot of the state and running sums at iteration `t`.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub t: usize,
    pub alpha: f64,
    pub f_gap: f64,
    pub grad_sq: f64,
    pub min_grad_sq: f64,
    pub min_f_gap: f64,
    pub v_sq: f64,
    pub z_dist_sq: f64,
    pub w_dist_sq: f64,
    /// Loss of the draw used at this step (NaN for the final snapshot).
    pub loss_sample: f64,
    /// `||dm_t||^2` of the draw used at this step (NaN for the final snapshot).
    pub noise_sq: f64,
    pub sums: RunningSums,
}

/// A recorded run.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub schedule: StepSchedule,
    pub beta: f64,
    /// Number of steps executed; the final snapshot is at `t = t_final + 1`.
    pub t_final: usize,
    pub w0_dist_sq: f64,
    /// Set when the run aborted on a non-finite state; records stop at the
    /// last valid iteration.
    pub aborted_at: Option<usize>,
}

impl Trajectory {
    pub fn ts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t as f64).collect()
    }

    pub fn extract<F: Fn(&Record) -> f64>(&self, f: F) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// Record at exactly iteration `t`, if recorded.
    pub fn record_at(&self, t: usize) -> Option<&Record> {
        self.records
            .binary_search_by_key(&t, |r| r.t)
            .ok()
            .map(|i| &self.records[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepForm {
    OneStep,
    TwoTerm,
}

fn should_record(t: usize, stride: usize, t_last: usize) -> bool {
    if t <= 1024 || t == t_last || t.is_multiple_of(stride) {
        return true;
    }
    // Powers of ten and their neighbours, so horizon lookups always hit.
    let mut p = 1000usize;
    while p <= t + 1 {
        if t + 1 == p || t == p || t == p + 1 {
            return true;
        }
        match p.checked_mul(10) {
            Some(next) => p = next,
            None => break,
        }
    }
    false
}

/// Runs `t_steps` iterations from `w0`, recording diagnostics at the given
/// stride (state snapshots are thinned; running sums accumulate every step).
/// The trajectory is deterministic given the RNG stream.
#[allow(clippy::too_many_arguments)]
pub fn run<R: Rng + ?Sized>(
    objective: &Objective,
    oracle: &StochasticOracle,
    schedule: &StepSchedule,
    beta: f64,
    t_steps: usize,
    w0: &[f64],
    rng: &mut R,
    record_every: usize,
) -> Result<Trajectory> {
    let traj = run_allow_partial(
        objective,
        oracle,
        schedule,
        beta,
        t_steps,
        w0,
        rng,
        record_every,
        StepForm::OneStep,
    )?;
    match traj.aborted_at {
        Some(index) => Err(Error::NumericalBlowup { index }),
        None => Ok(traj),
    }
}

/// Like [`run`] but returns the partial trajectory on numerical blowup, and
/// lets the caller pick the step form.
#[allow(clippy::too_many_arguments)]
pub fn run_allow_partial<R: Rng + ?Sized>(
    objective: &Objective,
    oracle: &StochasticOracle,
    schedule: &StepSchedule,
    beta: f64,
    t_steps: usize,
    w0: &[f64],
    rng: &mut R,
    record_every: usize,
    form: StepForm,
) -> Result<Trajectory> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("run: beta must be in [0, 1), got {beta}")));
    }
    if t_steps == 0 || record_every == 0 {
        return Err(Error::invalid("run: t_steps and record_every must be >= 1"));
    }
    if w0.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            got: w0.len(),
        });
    }
    let w_star = objective.w_star().to_vec();
    let dist_sq = |w: &[f64]| -> f64 {
        w.iter()
            .zip(&w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };

    let mut state = ShbState::init(w0);
    let mut sums = RunningSums {
        alpha: schedule.alpha(0),
        ..Default::default()
    };
    let mut min_grad_sq = f64::INFINITY;
    let mut min_f_gap = f64::INFINITY;
    let w0_dist_sq = dist_sq(w0);
    let mut records = Vec::new();
    let mut aborted_at = None;

    for t in 1..=t_steps {
        let alpha = schedule.alpha(t);
        let f_gap = objective.gap(&state.w)?;
        let grad_f = objective.grad(&state.w)?;
        let grad_sq = norm_sq(&grad_f);
        min_grad_sq = min_grad_sq.min(grad_sq);
        min_f_gap = min_f_gap.min(f_gap);
        let sample = oracle.sample(&state.w, rng)?;

        if should_record(t, record_every, t_steps + 1) {
            records.push(Record {
                t,
                alpha,
                f_gap,
                grad_sq,
                min_grad_sq,
                min_f_gap,
                v_sq: norm_sq(&state.v),
                z_dist_sq: dist_sq(&state.z),
                w_dist_sq: dist_sq(&state.w),
                loss_sample: sample.loss,
                noise_sq: norm_sq(&sample.noise),
                sums,
            });
        }

        let v_sq_t = norm_sq(&state.v);
        sums.alpha += alpha;
        sums.alpha_f_gap += alpha * f_gap;
        sums.alpha2_loss += alpha * alpha * sample.loss;
        sums.alpha_grad_sq += alpha * grad_sq;
        sums.alpha_dm_v += alpha * dot(&sample.noise, &state.v);
        sums.gradf_step -= alpha * dot(&grad_f, &sample.grad);
        sums.alpha_v_sq += alpha * v_sq_t;
        sums.gradf_v += dot(&grad_f, &state.v);
        sums.v_sq += v_sq_t;

        let stepped = match form {
            StepForm::OneStep => shb_step_onestep(&mut state, &sample.grad, alpha, beta),
            StepForm::TwoTerm => shb_step_twoterm(&mut state, &sample.grad, alpha, beta),
        };
        if let Err(Error::NumericalBlowup { index }) = stepped {
            aborted_at = Some(index);
            break;
        }
        stepped?;
    }

    if aborted_at.is_none() {
        let t = t_steps + 1;
        let f_gap = objective.gap(&state.w)?;
        let grad_sq = norm_sq(&objective.grad(&state.w)?);
        min_grad_sq = min_grad_sq.min(grad_sq);
        min_f_gap = min_f_gap.min(f_gap);
        records.push(Record {
            t,
            alpha: schedule.alpha(t),
            f_gap,
            grad_sq,
            min_grad_sq,
            min_f_gap,
            v_sq: norm_sq(&state.v),
            z_dist_sq: dist_sq(&state.z),
            w_dist_sq: dist_sq(&state.w),
            loss_sample: f64::NAN,
            noise_sq: f64::NAN,
            sums,
        });
    }

    Ok(Trajectory {
        records,
        schedule: *schedule,
        beta,
        t_final: t_steps,
        w0_dist_sq,
        aborted_at,
    })
}

/// Runs the same dynamics as [`run`] but returns snapshots of the iterate
/// every `stride` steps (plus the final one), for checks that need the actual
/// visited points rather than their recorded statistics.
#[allow(clippy::too_many_arguments)]
pub fn run_collect_iterates<R: Rng + ?Sized>(
    objective: &Objective,
    oracle: &StochasticOracle,
    schedule: &StepSchedule,
    beta: f64,
    t_steps: usize,
    w0: &[f64],
    rng: &mut R,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    if w0.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            got: w0.len(),
        });
    }
    if stride == 0 || t_steps == 0 {
        return Err(Error::invalid("collect: t_steps and stride must be >= 1"));
    }
    let mut state = ShbState::init(w0);
    let mut out = Vec::with_capacity(t_steps / stride + 2);
    for t in 1..=t_steps {
        if t % stride == 0 || t == 1 {
            out.push(state.w.clone());
        }
        let sample = oracle.sample(&state.w, rng)?;
        shb_step_onestep(&mut state, &sample.grad, schedule.alpha(t), beta)?;
    }
    out.push(state.w.clone());
    Ok(out)
}

/// One named schedule gate.
#[derive(Debug, Clone, Serialize)]
pub struct GateCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Verdict of [`validate_schedule`].
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleVerdict {
    pub pass: bool,
    pub gates: Vec<GateCheck>,
}

/// Checks the schedule against its mode's validity gates: exponent window,
/// monotonicity, the `alpha_0` caps, the `alpha_t sum_{s<t} alpha_s <= K0`
/// product bound (for `gamma = 1`), and the `l^{1+gamma}` summability plateau.
pub fn validate_schedule(
    schedule: &StepSchedule,
    constants: &ShbConstants,
    gamma: f64,
    horizon: usize,
) -> ScheduleVerdict {
    let mut gates = Vec::new();
    let mut gate = |name: &str, pass: bool, detail: String| {
        gates.push(GateCheck {
            name: name.into(),
            pass,
            detail,
        });
    };

    let p = schedule.p;
    match schedule.mode {
        ScheduleMode::AsRate => {
            let lo = 1.0 / (1.0 + gamma);
            gate(
                "exponent_window",
                p > lo && p < 1.0,
                format!("as_rate requires p in ({lo:.4}, 1), got {p}"),
            );
            let cap = 1.0f64.min(constants.cap_k0);
            gate(
                "alpha0_cap",
                schedule.alpha0 <= cap * (1.0 + 1e-12),
                format!("alpha0 = {} vs min(1, K0) = {cap}", schedule.alpha0),
            );
        }
        ScheduleMode::HpRate => {
            gate(
                "gamma_is_one",
                gamma == 1.0,
                format!("hp_rate requires gamma = 1, got {gamma}"),
            );
            gate(
                "exponent_window",
                p > 0.5 && p < 1.0,
                format!("hp_rate requires p in (1/2, 1), got {p}"),
            );
            let cap = 1.0f64
                .min(0.5 / constants.k5_estimate.sqrt())
                .min(constants.cap_k0);
            gate(
                "alpha0_cap",
                schedule.alpha0 <= cap * (1.0 + 1e-12),
                format!(
                    "alpha0 = {} vs min(1, 1/(2 sqrt(K5)), K0) = {cap}",
                    schedule.alpha0
                ),
            );
        }
    }

    let mut monotone = true;
    let mut prev = schedule.alpha(0);
    for t in 1..=horizon.min(100_000) {
        let a = schedule.alpha(t);
        if a > prev * (1.0 + 1e-15) {
            monotone = false;
            break;
        }
        prev = a;
    }
    gate("monotone", monotone, "alpha_{t+1} <= alpha_t".into());

    if gamma == 1.0 {
        let mut cum = schedule.alpha(0);
        let mut worst: f64 = 0.0;
        for t in 1..=horizon {
            worst = worst.max(schedule.alpha(t) * cum);
            cum += schedule.alpha(t);
        }
        gate(
            "stepsize_product",
            worst <= constants.cap_k0 * (1.0 + 1e-12),
            format!(
                "max_t alpha_t sum_(s<t) alpha_s = {worst} vs K0 = {}",
                constants.cap_k0
            ),
        );
    }

    let mut partials = Vec::with_capacity(horizon);
    let mut acc = 0.0;
    for t in 1..=horizon {
        acc += schedule.alpha(t).powf(1.0 + gamma);
        partials.push(acc);
    }
    gate(
        "summability_plateau",
        crate::seqkit::plateaued(&partials),
        "partial sums of alpha^{1+gamma} plateau over the final 10%".into(),
    );

    ScheduleVerdict {
        pass: gates.iter().all(|g| g.pass),
        gates,
    }
}

/// Verdict of the pathwise distance/loss-budget check.
#[derive(Debug, Clone, Serialize)]
pub struct PathwiseReport {
    pub pass: bool,
    /// First violated record: `(iteration, which bound)`.
    pub first_violation: Option<(usize, String)>,
    /// Worst `lhs/bound` ratio over the distance bounds.
    pub max_dist_ratio: f64,
    /// Worst `sum alpha^2 l / K2`.
    pub max_loss_sum_ratio: f64,
    pub k2: f64,
}

/// Asserts, per recorded iterate, the explicit distance budget
/// `||w_t - w*||^2 <= (1 + k0/2) ||w0 - w*||^2 + k5 sum_{s<t} alpha_s`
/// (extended to `v` and `z` through the state norm relations), and the loss
/// budget `sum_{s<t} alpha_s^2 l_s <= K2` with
/// `K2 = (1-beta)((k3 + a2) sum alpha^2 + alpha_1 ||w0 - w*||^2)`.
pub fn pathwise_bound_check(
    trajectory: &Trajectory,
    constants: &ShbConstants,
    w0_dist_sq: f64,
) -> PathwiseReport {
    let k0 = constants.k0;
    let slack = 1.0 + 1e-9;
    let s2 = trajectory
        .schedule
        .sum_alpha_pow(1, trajectory.t_final, 2);
    let k2 = (1.0 - constants.beta)
        * ((constants.k3 + constants.noise.a2) * s2 + trajectory.schedule.alpha(1) * w0_dist_sq);

    let mut rep = PathwiseReport {
        pass: true,
        first_violation: None,
        max_dist_ratio: 0.0,
        max_loss_sum_ratio: 0.0,
        k2,
    };
    for r in &trajectory.records {
        let budget = (1.0 + 0.5 * k0) * w0_dist_sq + constants.k5 * r.sums.alpha;
        let checks = [
            ("w_dist", r.w_dist_sq, budget),
            ("v_norm", r.v_sq, 4.0 * budget),
            ("z_dist", r.z_dist_sq, (2.0 + 8.0 * k0 * k0) * budget),
            ("loss_sum", r.sums.alpha2_loss, k2),
        ];
        for (name, lhs, bound) in checks {
            let ratio = lhs / bound.max(f64::MIN_POSITIVE);
            if name == "loss_sum" {
                rep.max_loss_sum_ratio = rep.max_loss_sum_ratio.max(ratio);
            } else {
                rep.max_dist_ratio = rep.max_dist_ratio.max(ratio);
            }
            if lhs > bound * slack && rep.first_violation.is_none() {
                rep.pass = false;
                rep.first_violation = Some((r.t, name.into()));
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::compute_noise_constants;
    use crate::seed_rng;

    fn quad_oracle(eigs: Vec<f64>, n_comp: usize, spread: f64) -> (Objective, StochasticOracle) {
        let obj = Objective::quadratic(eigs).unwrap();
        let weights: Vec<f64> = (0..n_comp)
            .map(|i| 1.0 + spread * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let o = StochasticOracle::finite_sum_scaled(obj.clone(), weights).unwrap();
        (obj, o)
    }

    #[test]
    fn schedule_alpha_monotone_and_capped() {
        let s = StepSchedule::new(0.25, 2.0 / 3.0, 0.25, ScheduleMode::AsRate).unwrap();
        assert_eq!(s.alpha(0), 0.25);
        assert_eq!(s.alpha(1), 0.25);
        let mut prev = s.alpha(0);
        for t in 1..2000 {
            let a = s.alpha(t);
            assert!(a <= prev);
            prev = a;
        }
    }

    #[test]
    fn shb_constants_sgd_case() {
        let noise = compute_noise_constants(1.0, 1.0, 1.0, 0.0).unwrap();
        let c = compute_shb_constants(1.0, 1.0, 0.0, 1.0, &noise).unwrap();
        assert_eq!(noise.a1, 2.0);
        assert_eq!(c.k0, 0.0);
        assert_eq!(c.k4, 0.0);
        assert_eq!(c.k1, 2.0);
        assert_eq!(c.cap_k0, 0.25);
    }

    #[test]
    fn shb_constants_momentum_half() {
        let noise = compute_noise_constants(1.0, 1.0, 1.0, 0.0).unwrap();
        let c = compute_shb_constants(1.0, 1.0, 0.5, 1.0, &noise).unwrap();
        assert_eq!(c.k0, 1.0);
        assert_eq!(c.k1, 8.0);
        assert_eq!(c.k2, 0.0);
        assert_eq!(c.k3, 4.0);
        assert!((c.k4 - 1.5).abs() < 1e-15);
        assert_eq!(c.k5, 4.0);
        assert!((c.cap_k0 - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn shb_constants_zero_sup_loss() {
        let noise = compute_noise_constants(1.0, 1.0, 0.0, 0.0).unwrap();
        let c = compute_shb_constants(1.0, 1.0, 0.5, 0.0, &noise).unwrap();
        assert_eq!(c.k3, 0.0);
        assert_eq!(c.k5, 0.0);
    }

    #[test]
    fn shb_constants_reject_beta_one() {
        let noise = compute_noise_constants(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(compute_shb_constants(1.0, 1.0, 1.0, 0.0, &noise).is_err());
    }

    #[test]
    fn sgd_step_is_plain_descent() {
        let mut st = ShbState::init(&[1.0, -2.0]);
        shb_step_onestep(&mut st, &[0.5, 0.5], 0.1, 0.0).unwrap();
        assert!((st.w[0] - 0.95).abs() < 1e-15);
        assert!((st.w[1] + 2.05).abs() < 1e-15);
        assert_eq!(st.w, st.z);
    }

    #[test]
    fn momentum_decay_with_zero_gradient() {
        let mut st = ShbState::init(&[0.0]);
        st.v = vec![1.0];
        st.w = vec![1.0];
        st.w_prev = vec![0.0];
        st.z = vec![2.0]; // w + k0 v with beta = 0.5
        shb_step_onestep(&mut st, &[0.0], 0.1, 0.5).unwrap();
        assert!((st.v[0] - 0.5).abs() < 1e-15);
        assert!((st.z[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn state_invariants_preserved_by_both_forms() {
        let mut rng = seed_rng(42, 0);
        for beta in [0.0, 0.3, 0.7] {
            let k0 = beta / (1.0 - beta);
            let mut one = ShbState::init(&[1.0, -0.5, 2.0]);
            let mut two = one.clone();
            for t in 1..500usize {
                let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let alpha = 0.05 * (t as f64).powf(-0.6);
                shb_step_onestep(&mut one, &g, alpha, beta).unwrap();
                shb_step_twoterm(&mut two, &g, alpha, beta).unwrap();
                for st in [&one, &two] {
                    for j in 0..3 {
                        let v_err = (st.v[j] - (st.w[j] - st.w_prev[j])).abs();
                        let z_err = (st.z[j] - (st.w[j] + k0 * st.v[j])).abs();
                        assert!(v_err <= 1e-12 * (1.0 + st.v[j].abs()));
                        assert!(z_err <= 1e-12 * (1.0 + st.z[j].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn two_forms_agree_over_long_runs() {
        let (obj, oracle) = quad_oracle(vec![1.0, 0.2], 6, 0.5);
        let sched = StepSchedule::new(0.2, 2.0 / 3.0, 0.2, ScheduleMode::AsRate).unwrap();
        for beta in [0.0, 0.5, 0.9] {
            let mut r1 = seed_rng(7, 3);
            let mut r2 = seed_rng(7, 3);
            let w0 = vec![2.0, -1.0];
            let a = run_allow_partial(
                &obj, &oracle, &sched, beta, 10_000, &w0, &mut r1, 1000, StepForm::OneStep,
            )
            .unwrap();
            let b = run_allow_partial(
                &obj, &oracle, &sched, beta, 10_000, &w0, &mut r2, 1000, StepForm::TwoTerm,
            )
            .unwrap();
            for (ra, rb) in a.records.iter().zip(&b.records) {
                assert_eq!(ra.t, rb.t);
                let scale = 1.0 + ra.w_dist_sq.abs();
                assert!(
                    (ra.w_dist_sq - rb.w_dist_sq).abs() <= 1e-10 * scale,
                    "beta {beta} t {}: {} vs {}",
                    ra.t,
                    ra.w_dist_sq,
                    rb.w_dist_sq
                );
            }
        }
    }

    #[test]
    fn beta_zero_matches_dedicated_sgd() {
        let (obj, oracle) = quad_oracle(vec![0.7, 1.3], 4, 0.3);
        let sched = StepSchedule::new(0.2, 0.7, 0.2, ScheduleMode::AsRate).unwrap();
        let w0 = vec![1.5, -0.5];
        let mut r1 = seed_rng(9, 1);
        let traj = run(&obj, &oracle, &sched, 0.0, 200, &w0, &mut r1, 1).unwrap();

        // Dedicated SGD stepper with the same draws.
        let mut r2 = seed_rng(9, 1);
        let mut w = w0.clone();
        for t in 1..=200usize {
            let s = oracle.sample(&w, &mut r2).unwrap();
            let a = sched.alpha(t);
            for (wj, gj) in w.iter_mut().zip(&s.grad) {
                *wj -= a * gj;
            }
        }
        let final_rec = traj.records.last().unwrap();
        let dist: f64 = w
            .iter()
            .zip(obj.w_star())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((final_rec.w_dist_sq - dist).abs() <= 1e-12 * (1.0 + dist));
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let (obj, oracle) = quad_oracle(vec![1.0], 5, 0.4);
        let sched = StepSchedule::new(0.25, 2.0 / 3.0, 0.25, ScheduleMode::AsRate).unwrap();
        let mut r1 = seed_rng(1234, 7);
        let mut r2 = seed_rng(1234, 7);
        let a = run(&obj, &oracle, &sched, 0.5, 500, &[1.0], &mut r1, 10).unwrap();
        let b = run(&obj, &oracle, &sched, 0.5, 500, &[1.0], &mut r2, 10).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.f_gap.to_bits(), rb.f_gap.to_bits());
            assert_eq!(ra.sums.alpha2_loss.to_bits(), rb.sums.alpha2_loss.to_bits());
        }
    }

    #[test]
    fn zero_noise_descent_is_monotone() {
        let obj = Objective::quadratic(vec![1.0, 0.5]).unwrap();
        let oracle = StochasticOracle::finite_sum_scaled(obj.clone(), vec![1.0; 3]).unwrap();
        let sched = StepSchedule::new(0.25, 2.0 / 3.0, 0.25, ScheduleMode::AsRate).unwrap();
        let mut rng = seed_rng(5, 0);
        let traj = run(&obj, &oracle, &sched, 0.0, 2000, &[3.0, -2.0], &mut rng, 1).unwrap();
        for pair in traj.records.windows(2) {
            assert!(pair[1].f_gap <= pair[0].f_gap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn running_minima_are_nonincreasing() {
        let (obj, oracle) = quad_oracle(vec![1.0, 0.3], 6, 0.8);
        let sched = StepSchedule::new(0.2, 2.0 / 3.0, 0.2, ScheduleMode::AsRate).unwrap();
        let mut rng = seed_rng(77, 0);
        let traj = run(&obj, &oracle, &sched, 0.5, 3000, &[2.0, 2.0], &mut rng, 1).unwrap();
        for pair in traj.records.windows(2) {
            assert!(pair[1].min_grad_sq <= pair[0].min_grad_sq);
            assert!(pair[1].min_f_gap <= pair[0].min_f_gap);
        }
    }

    #[test]
    fn blowup_reports_last_valid_index() {
        let obj = Objective::quadratic(vec![10.0]).unwrap();
        let oracle = StochasticOracle::finite_sum_scaled(obj.clone(), vec![1.0; 2]).unwrap();
        // alpha = 5 on eig 10 multiplies the iterate by -49 each step.
        let sched = StepSchedule::new(5.0, 0.0, 5.0, ScheduleMode::AsRate).unwrap();
        let mut rng = seed_rng(3, 0);
        let err = run(&obj, &oracle, &sched, 0.0, 10_000, &[1.0], &mut rng, 1).unwrap_err();
        match err {
            Error::NumericalBlowup { index } => assert!(index > 1),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn schedule_gates_pass_and_fail_by_mode() {
        let noise = compute_noise_constants(1.0, 1.0, 1.0, 0.0).unwrap();
        let c = compute_shb_constants(1.0, 1.0, 0.0, 1.0, &noise).unwrap();
        let k0 = c.cap_k0;

        let good = StepSchedule::new(k0, 2.0 / 3.0, k0, ScheduleMode::AsRate).unwrap();
        let v = validate_schedule(&good, &c, 1.0, 50_000);
        assert!(v.pass, "{:?}", v.gates);

        let good_hp = StepSchedule::new(k0, 2.0 / 3.0, k0, ScheduleMode::HpRate).unwrap();
        let v = validate_schedule(&good_hp, &c, 1.0, 50_000);
        assert!(v.pass, "{:?}", v.gates);

        let bad_hp = StepSchedule::new(k0, 0.4, k0, ScheduleMode::HpRate).unwrap();
        let v = validate_schedule(&bad_hp, &c, 1.0, 10_000);
        assert!(!v.pass);
        assert!(v
            .gates
            .iter()
            .any(|g| g.name == "exponent_window" && !g.pass));

        let bad_as = StepSchedule::new(k0, 0.6, k0, ScheduleMode::AsRate).unwrap();
        let v = validate_schedule(&bad_as, &c, 0.5, 10_000);
        assert!(!v.pass);
        assert!(v
            .gates
            .iter()
            .any(|g| g.name == "exponent_window" && !g.pass));
    }

    #[test]
    fn pathwise_bounds_hold_with_slack_for_zero_noise() {
        let obj = Objective::quadratic(vec![1.0, 0.4]).unwrap();
        let oracle = StochasticOracle::finite_sum_least_squares(
            Objective::least_squares(
                vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.8], vec![0.0, -0.8]],
                vec![0.2, 0.2, -0.1, 0.3],
            )
            .unwrap(),
        );
        // Zero-noise variant: scaled oracle over the quadratic itself.
        let oracle = oracle
            .or_else(|_| StochasticOracle::finite_sum_scaled(obj.clone(), vec![1.0; 3]))
            .unwrap();
        let noise =
            compute_noise_constants(obj.l_const(), 1.0, oracle.sup_loss_at_min(), obj.f_star())
                .unwrap();
        let c = compute_shb_constants(obj.l_const(), 1.0, 0.0, oracle.sup_loss_at_min(), &noise)
            .unwrap();
        let sched = StepSchedule::new(c.cap_k0, 2.0 / 3.0, c.cap_k0, ScheduleMode::AsRate).unwrap();
        let mut rng = seed_rng(11, 0);
        let w0 = vec![1.0, -1.0];
        let traj = run(&obj, &oracle, &sched, 0.0, 5000, &w0, &mut rng, 5).unwrap();
        let rep = pathwise_bound_check(&traj, &c, 2.0);
        assert!(rep.pass, "{:?}", rep.first_violation);
        assert!(rep.max_dist_ratio <= 1.0);
    }

    #[test]
    fn pathwise_bounds_fail_with_halved_k5() {
        // Least-squares with residual noise so the k5 budget is active.
        let ls = Objective::least_squares(
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![0.5, -0.5, 1.0, -1.0],
        )
        .unwrap();
        let oracle = StochasticOracle::finite_sum_least_squares(ls.clone()).unwrap();
        let noise =
            compute_noise_constants(ls.l_const(), 1.0, oracle.sup_loss_at_min(), ls.f_star())
                .unwrap();
        let mut c =
            compute_shb_constants(ls.l_const(), 1.0, 0.5, oracle.sup_loss_at_min(), &noise)
                .unwrap();
        let sched = StepSchedule::new(c.cap_k0, 2.0 / 3.0, c.cap_k0, ScheduleMode::HpRate).unwrap();
        let mut rng = seed_rng(13, 0);
        let w0 = vec![0.0, 0.0]; // start at w0 with dist > 0 from w* = (0, 0)? w* is 0 here
        let traj = run(&ls, &oracle, &sched, 0.5, 20_000, &w0, &mut rng, 5).unwrap();
        let w0_dist: f64 = w0
            .iter()
            .zip(ls.w_star())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let ok = pathwise_bound_check(&traj, &c, w0_dist);
        assert!(ok.pass, "{:?}", ok.first_violation);
        // Sabotage the budget: with k5 ~ 0 the noise-driven wander must escape.
        c.k5 *= 0.0;
        c.noise.a2 = 0.0;
        let mut c2 = c.clone();
        c2.k3 = 0.0;
        let bad = pathwise_bound_check(&traj, &c2, w0_dist * 1e-6);
        assert!(!bad.pass);
    }
}
