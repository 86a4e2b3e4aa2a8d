//! The verification suites.
//!
//! `run_unit_suite` exercises each module's property checks at small sample
//! counts (seconds); `run_paper_suite` runs the full statistical acceptance
//! criteria on seeded ensembles (minutes). Every criterion pins its
//! tolerances here; nothing is deferred to runtime calibration.

use crate::error::Result;
use crate::objectives::{check_descent_lemma, check_holder, check_lsg13, Objective};
use crate::optim::{
    compute_shb_constants, pathwise_bound_check, run, run_allow_partial, shb_step_onestep,
    shb_step_twoterm, validate_schedule, ScheduleMode, ShbConstants, ShbState, StepForm,
    StepSchedule,
};
use crate::oracle::{
    check_martingale_structure, check_noise_bounds, check_unbiased, compute_noise_constants,
    StochasticOracle,
};
use crate::presets::{bump_instance, convex_boundary_instance, hp_envelope_instance, Instance};
use crate::rates::{
    as_rate_check, beta_invariance_check, fit_rate, hp_envelope_check, hp_sums_check,
    predicted_exponent, Algo, Ensemble, EnsembleMeta, RateTarget,
};
use crate::seqkit::{
    gronwall_envelope, knopp_min_rate_check, solve_geometric_recursion, SequencePrefix,
};
use crate::{seed_rng, seqkit};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Outcome of one suite item.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub id: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

fn outcome(id: &str, name: &str, started: Instant, res: Result<(bool, String)>) -> SuiteOutcome {
    let (pass, detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    SuiteOutcome {
        id: id.into(),
        name: name.into(),
        pass,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Derives the canonical schedule for an instance: `c = alpha0 = K0`.
pub fn canonical_schedule(
    instance: &Instance,
    beta: f64,
    p: f64,
    mode: ScheduleMode,
) -> Result<(StepSchedule, ShbConstants)> {
    let obj = &instance.objective;
    let noise = compute_noise_constants(
        obj.l_const(),
        obj.gamma(),
        instance.oracle.sup_loss_at_min(),
        obj.f_star(),
    )?;
    let constants = compute_shb_constants(
        obj.l_const(),
        obj.gamma(),
        beta,
        instance.oracle.sup_loss_at_min(),
        &noise,
    )?;
    let sched = StepSchedule::new(constants.cap_k0, p, constants.cap_k0, mode)?;
    Ok((sched, constants))
}

#[allow(clippy::too_many_arguments)]
fn build_ensemble(
    instance: &Instance,
    beta: f64,
    p: f64,
    mode: ScheduleMode,
    t_steps: usize,
    n_seeds: usize,
    master_seed: u64,
    record_every: usize,
) -> Result<(Ensemble, ShbConstants)> {
    let (sched, constants) = canonical_schedule(instance, beta, p, mode)?;
    let verdict = validate_schedule(&sched, &constants, instance.objective.gamma(), t_steps);
    let meta = EnsembleMeta {
        master_seed,
        config_hash: format!("suite-{}-b{beta}-p{p}", instance.objective.name()),
        gamma: instance.objective.gamma(),
        convex: instance.objective.convex(),
        schedule_valid: verdict.pass,
    };
    let ens = Ensemble::generate(meta, n_seeds, |_i, rng| {
        run(
            &instance.objective,
            &instance.oracle,
            &sched,
            beta,
            t_steps,
            &instance.w0,
            rng,
            record_every,
        )
    })?;
    Ok((ens, constants))
}

// ---------------------------------------------------------------------------
// Acceptance criteria
// ---------------------------------------------------------------------------

fn criterion_two_form_equivalence() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let betas = [0.0, 0.3, 0.5, 0.9];
    let dims = [1usize, 10, 100];
    let configs: Vec<(usize, f64, usize)> = (0..50)
        .map(|i| (i, betas[i % betas.len()], dims[i % dims.len()]))
        .collect();
    let devs: Vec<f64> = configs
        .par_iter()
        .map(|&(i, beta, d)| {
            let mut rng = seed_rng(9100, i as u64);
            let eigs: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
            let obj = Objective::quadratic(eigs).expect("valid eigs");
            let weights: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..1.5)).collect();
            let oracle = StochasticOracle::finite_sum_scaled(obj.clone(), weights).unwrap();
            let sched = StepSchedule::new(0.2, 2.0 / 3.0, 0.2, ScheduleMode::AsRate).unwrap();
            let w0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut one = ShbState::init(&w0);
            let mut two = one.clone();
            let mut dev: f64 = 0.0;
            for t in 1..=10_000usize {
                let g = oracle.sample(&one.w, &mut rng).unwrap();
                let alpha = sched.alpha(t);
                shb_step_onestep(&mut one, &g.grad, alpha, beta).unwrap();
                shb_step_twoterm(&mut two, &g.grad, alpha, beta).unwrap();
                for j in 0..d {
                    let scale = 1.0 + one.w[j].abs().max(two.w[j].abs());
                    dev = dev.max((one.w[j] - two.w[j]).abs() / scale);
                }
            }
            dev
        })
        .collect();
    for d in devs {
        worst = worst.max(d);
    }
    Ok((
        worst <= 1e-10,
        format!("max relative deviation between step forms: {worst:.3e} (tol 1e-10)"),
    ))
}

fn criterion_seqkit_oracles() -> Result<(bool, String)> {
    let mut rng = seed_rng(9200, 0);
    let mut worst_gron: f64 = 0.0;
    let mut worst_geo: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let a: f64 = rng.random_range(0.0..5.0);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let env = gronwall_envelope(a, &SequencePrefix::from_values(c.clone())?)?;
        // Brute-force recursion with equality in the hypothesis.
        let mut x = vec![a];
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| c[j - 1] * x[j - 1]).sum();
            x.push(a + s);
        }
        for (xi, ei) in x.iter().zip(env.values()) {
            if *xi > ei * (1.0 + 1e-10) + 1e-300 {
                worst_gron = worst_gron.max(xi / ei.max(f64::MIN_POSITIVE) - 1.0);
            }
        }

        let beta: f64 = rng.random_range(0.0..0.999);
        let y0: f64 = rng.random_range(-5.0..5.0);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sol = solve_geometric_recursion(beta, y0, &SequencePrefix::from_values(xs.clone())?, 0)?;
        let mut direct = y0;
        for (k, &xk) in xs.iter().enumerate() {
            direct = beta * beta * direct + xk;
            let got = sol.values()[k + 1];
            worst_geo = worst_geo.max((got - direct).abs() / (1.0 + direct.abs()));
        }
    }
    let pass = worst_gron == 0.0 && worst_geo <= 1e-10;
    Ok((
        pass,
        format!(
            "1000 instances each: gronwall excess {worst_gron:.2e}, geometric mismatch {worst_geo:.2e} (tol 1e-10)"
        ),
    ))
}

fn criterion_analytic_lemmas() -> Result<(bool, String)> {
    let n_pairs = 10_000;
    let ls = convex_boundary_instance().objective;
    let objs: Vec<Objective> = vec![
        Objective::quadratic(vec![1.0, 1.0, 1.0, 1.0])?,
        Objective::quadratic(vec![0.2, 0.7, 1.5])?,
        Objective::power(3, 0.5)?,
        ls,
        Objective::bump(4)?,
    ];
    let mut lines = Vec::new();
    let mut all = true;
    for (i, obj) in objs.iter().enumerate() {
        let mut rng = seed_rng(9300, i as u64);
        let h = check_holder(obj, n_pairs, 10.0, &mut rng)?;
        let d = check_descent_lemma(obj, n_pairs, &mut rng)?;
        let mut ok = h.pass && d.pass;
        let mut extra = String::new();
        if obj.convex() {
            let s = check_lsg13(obj, n_pairs, &mut rng)?;
            ok &= s.pass;
            extra = format!(", sandwich viol {:.1e}/{:.1e}", s.max_lower_violation, s.max_upper_violation);
        }
        // Identity quadratic: both lemmas are equalities.
        if i == 0 {
            let scale = 1.0 + 100.0; // radius^2 scale of the sampled gaps
            ok &= d.max_abs_gap <= 1e-10 * scale;
            extra.push_str(&format!(", equality gap {:.1e}", d.max_abs_gap));
        }
        all &= ok;
        lines.push(format!(
            "{}: holder {:.4}<=L={:.4}, descent viol {:.1e}{extra} [{}]",
            obj.name(),
            h.max_observed,
            obj.l_const(),
            d.max_observed,
            if ok { "ok" } else { "FAIL" }
        ));
    }
    Ok((all, lines.join("; ")))
}

fn criterion_noise_lemmas() -> Result<(bool, String)> {
    let inst = hp_envelope_instance();
    let obj = &inst.objective;
    let noise = compute_noise_constants(
        obj.l_const(),
        obj.gamma(),
        inst.oracle.sup_loss_at_min(),
        obj.f_star(),
    )?;
    let (sched, _) = canonical_schedule(&inst, 0.5, 2.0 / 3.0, ScheduleMode::HpRate)?;
    let mut rng = seed_rng(9400, 0);
    // 100 points visited by an actual run.
    let points = crate::optim::run_collect_iterates(
        &inst.objective,
        &inst.oracle,
        &sched,
        0.5,
        20_000,
        &inst.w0,
        &mut rng,
        200,
    )?;
    assert!(points.len() >= 100);
    let verdicts = check_noise_bounds(&inst.oracle, &noise, &points)?;
    let bounds_ok = verdicts.iter().all(|v| v.pass);
    let detail_bounds: Vec<String> = verdicts
        .iter()
        .map(|v| format!("{} ratio {:.3}", v.name, v.worst_ratio))
        .collect();

    let mart = check_martingale_structure(&inst.oracle, &sched, 100, 200, &mut rng)?;
    let unb = check_unbiased(&inst.oracle, &inst.w0, 10_000, &mut rng)?;
    let pass = bounds_ok && mart.pass && unb.pass;
    Ok((
        pass,
        format!(
            "{}; martingale dev {:.2} se, cross {:.2} se; unbiased {:.2}",
            detail_bounds.join(", "),
            mart.deviation_in_stderrs,
            mart.worst_cross_corr_in_stderrs,
            unb.worst_normalized_bias
        ),
    ))
}

fn criterion_convex_as_rate() -> Result<(bool, String)> {
    let inst = convex_boundary_instance();
    let (ens, _) = build_ensemble(
        &inst,
        0.0,
        2.0 / 3.0,
        ScheduleMode::AsRate,
        100_000,
        100,
        51_001,
        25,
    )?;
    let rep = as_rate_check(&ens, RateTarget::LastIterate, 0.05, 0.15)?;
    let details: Vec<String> = rep
        .per_check_verdicts
        .iter()
        .map(|v| format!("{}: {}", v.name, v.detail))
        .collect();
    Ok((
        rep.pass,
        format!(
            "fitted {:.4} vs predicted {:.4}; {}",
            rep.fitted_slope,
            rep.predicted_slope,
            details.join("; ")
        ),
    ))
}

fn criterion_nonconvex_min_grad() -> Result<(bool, String)> {
    let inst = bump_instance(4, 0.1)?;
    let (sched, constants) = canonical_schedule(&inst, 0.0, 0.75, ScheduleMode::AsRate)?;
    let verdict = validate_schedule(&sched, &constants, 1.0, 100_000);
    if !verdict.pass {
        return Ok((false, "bump schedule failed its gates".into()));
    }
    let r = 1.0 - 0.75 - 0.05;
    let results: Vec<Result<bool>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed_rng(51_006, i);
            let traj = run(
                &inst.objective,
                &inst.oracle,
                &sched,
                0.0,
                100_000,
                &inst.w0,
                &mut rng,
                1,
            )?;
            let alphas: Vec<f64> = traj.records.iter().map(|rec| rec.alpha).collect();
            let grads: Vec<f64> = traj.records.iter().map(|rec| rec.grad_sq).collect();
            let n = alphas.len() - 1; // drop the final snapshot (alpha unused)
            let rep = knopp_min_rate_check(
                &SequencePrefix::new(alphas[..n].to_vec(), 1)?,
                &SequencePrefix::new(grads[..n].to_vec(), 1)?,
                r,
            )?;
            Ok(rep.passes)
        })
        .collect();
    let mut n_pass = 0;
    for res in results {
        if res? {
            n_pass += 1;
        }
    }
    Ok((
        n_pass >= 95,
        format!("{n_pass}/100 paths pass the weighted-minimum trend at r = {r}"),
    ))
}

fn criterion_hp_envelope(cache: &mut SuiteCache) -> Result<(bool, String)> {
    let ens = cache.hp_ensemble()?;
    let rep = hp_envelope_check(ens, 0.05, &[1000, 10_000, 100_000], 0.15)?;
    let details: Vec<String> = rep
        .per_check_verdicts
        .iter()
        .map(|v| format!("{} [{}]", v.detail, if v.pass { "ok" } else { "FAIL" }))
        .collect();
    Ok((
        rep.pass,
        format!(
            "corrected slope {:.4} vs {:.4} +- 0.15; {}",
            rep.fitted_slope,
            rep.predicted_slope,
            details.join("; ")
        ),
    ))
}

fn criterion_pathwise_bounds() -> Result<(bool, String)> {
    let inst = hp_envelope_instance();
    let (sched, constants) = canonical_schedule(&inst, 0.5, 2.0 / 3.0, ScheduleMode::HpRate)?;
    let verdict = validate_schedule(&sched, &constants, 1.0, 10_000);
    if !verdict.pass {
        return Ok((false, "schedule failed gates".into()));
    }
    let w0_dist: f64 = inst
        .w0
        .iter()
        .zip(inst.objective.w_star())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let reports: Vec<Result<(bool, f64, f64)>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed_rng(51_008, i);
            let traj = run(
                &inst.objective,
                &inst.oracle,
                &sched,
                0.5,
                10_000,
                &inst.w0,
                &mut rng,
                5,
            )?;
            let rep = pathwise_bound_check(&traj, &constants, w0_dist);
            Ok((rep.pass, rep.max_dist_ratio, rep.max_loss_sum_ratio))
        })
        .collect();
    let mut n_pass = 0;
    let mut worst_dist: f64 = 0.0;
    let mut worst_loss: f64 = 0.0;
    for r in reports {
        let (ok, d, l) = r?;
        n_pass += ok as usize;
        worst_dist = worst_dist.max(d);
        worst_loss = worst_loss.max(l);
    }
    Ok((
        n_pass == 100,
        format!(
            "{n_pass}/100 paths within budget; worst distance ratio {worst_dist:.3}, worst loss-sum ratio {worst_loss:.3}"
        ),
    ))
}

fn criterion_beta_invariance() -> Result<(bool, String)> {
    let inst = hp_envelope_instance();
    let mut ensembles = Vec::new();
    for (i, beta) in [0.0, 0.5, 0.9].into_iter().enumerate() {
        let (ens, _) = build_ensemble(
            &inst,
            beta,
            2.0 / 3.0,
            ScheduleMode::AsRate,
            100_000,
            100,
            51_009 + i as u64,
            100,
        )?;
        ensembles.push(ens);
    }
    let refs: Vec<&Ensemble> = ensembles.iter().collect();
    let rep = beta_invariance_check(&refs)?;
    let slopes: Vec<String> = rep
        .slopes
        .iter()
        .map(|(b, s, se)| format!("beta {b}: {s:.4}+-{se:.4}"))
        .collect();
    Ok((
        rep.pass == Some(true),
        format!("{}; {}", slopes.join(", "), rep.note),
    ))
}

fn criterion_hp_sums(cache: &mut SuiteCache) -> Result<(bool, String)> {
    let ens = cache.hp_ensemble()?;
    let verdicts = hp_sums_check(ens, 0.05, &[10, 100, 1000, 10_000])?;
    let all = verdicts.iter().all(|v| v.pass);
    let details: Vec<String> = verdicts
        .iter()
        .map(|v| {
            format!(
                "{} [{}] K={:.3e}",
                v.name,
                if v.pass { "ok" } else { "FAIL" },
                v.fitted_constant
            )
        })
        .collect();
    Ok((all, details.join("; ")))
}

/// Shared state across criteria (the HP ensemble feeds two of them).
#[derive(Default)]
pub struct SuiteCache {
    hp: Option<Ensemble>,
}

impl SuiteCache {
    fn hp_ensemble(&mut self) -> Result<&Ensemble> {
        if self.hp.is_none() {
            let inst = hp_envelope_instance();
            let (ens, _) = build_ensemble(
                &inst,
                0.5,
                2.0 / 3.0,
                ScheduleMode::HpRate,
                100_000,
                200,
                51_007,
                100,
            )?;
            self.hp = Some(ens);
        }
        Ok(self.hp.as_ref().unwrap())
    }
}

/// Runs the ten statistical acceptance criteria in order.
pub fn run_paper_suite() -> Vec<SuiteOutcome> {
    let mut cache = SuiteCache::default();
    let mut out = Vec::new();
    type Item = (&'static str, &'static str, Box<dyn FnMut(&mut SuiteCache) -> Result<(bool, String)>>);
    let items: Vec<Item> = vec![
        (
            "1",
            "two-form momentum equivalence",
            Box::new(|_c: &mut SuiteCache| criterion_two_form_equivalence()),
        ),
        (
            "2",
            "sequence-toolkit oracles",
            Box::new(|_c: &mut SuiteCache| criterion_seqkit_oracles()),
        ),
        (
            "3",
            "analytic lemma suite",
            Box::new(|_c: &mut SuiteCache| criterion_analytic_lemmas()),
        ),
        (
            "4",
            "noise lemma suite",
            Box::new(|_c: &mut SuiteCache| criterion_noise_lemmas()),
        ),
        (
            "5",
            "convex almost-sure rate",
            Box::new(|_c: &mut SuiteCache| criterion_convex_as_rate()),
        ),
        (
            "6",
            "non-convex minimum-gradient rate",
            Box::new(|_c: &mut SuiteCache| criterion_nonconvex_min_grad()),
        ),
        (
            "7",
            "high-probability envelope",
            Box::new(criterion_hp_envelope),
        ),
        (
            "8",
            "pathwise distance/loss budgets",
            Box::new(|_c: &mut SuiteCache| criterion_pathwise_bounds()),
        ),
        (
            "9",
            "momentum invariance of the rate",
            Box::new(|_c: &mut SuiteCache| criterion_beta_invariance()),
        ),
        ("10", "high-probability intermediate sums", Box::new(criterion_hp_sums)),
    ];
    for (id, name, mut f) in items {
        let started = Instant::now();
        let res = f(&mut cache);
        out.push(outcome(id, name, started, res));
    }
    out
}

// ---------------------------------------------------------------------------
// Unit suite: quick per-module property checks
// ---------------------------------------------------------------------------

/// Runs reduced-size property checks from every module; completes in seconds.
pub fn run_unit_suite() -> Vec<SuiteOutcome> {
    let mut out = Vec::new();

    let started = Instant::now();
    out.push(outcome(
        "u1",
        "sequence-toolkit oracles (reduced)",
        started,
        unit_seqkit(),
    ));

    let started = Instant::now();
    out.push(outcome(
        "u2",
        "analytic lemmas (reduced)",
        started,
        unit_lemmas(),
    ));

    let started = Instant::now();
    out.push(outcome("u3", "noise bounds (reduced)", started, unit_noise()));

    let started = Instant::now();
    out.push(outcome(
        "u4",
        "two-form equivalence (reduced)",
        started,
        unit_two_form(),
    ));

    let started = Instant::now();
    out.push(outcome("u5", "schedule gates", started, unit_gates()));

    let started = Instant::now();
    out.push(outcome(
        "u6",
        "rate-fit exactness and predictions",
        started,
        unit_rates(),
    ));

    out
}

fn unit_seqkit() -> Result<(bool, String)> {
    let mut rng = seed_rng(8800, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let a: f64 = rng.random_range(0.0..3.0);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let env = gronwall_envelope(a, &SequencePrefix::from_values(c.clone())?)?;
        let mut x = vec![a];
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| c[j - 1] * x[j - 1]).sum();
            x.push(a + s);
        }
        for (xi, ei) in x.iter().zip(env.values()) {
            if *xi > ei * (1.0 + 1e-10) + 1e-300 {
                return Ok((false, format!("gronwall domination failed: {xi} > {ei}")));
            }
        }
    }
    Ok((true, "200 random instances dominated".into()))
}

fn unit_lemmas() -> Result<(bool, String)> {
    let mut rng = seed_rng(8801, 0);
    for obj in [
        Objective::quadratic(vec![1.0, 0.5])?,
        Objective::power(2, 0.5)?,
        Objective::bump(3)?,
    ] {
        let h = check_holder(&obj, 1000, 10.0, &mut rng)?;
        let d = check_descent_lemma(&obj, 1000, &mut rng)?;
        if !(h.pass && d.pass) {
            return Ok((false, format!("{} failed a smoothness check", obj.name())));
        }
        if obj.convex() && !check_lsg13(&obj, 1000, &mut rng)?.pass {
            return Ok((false, format!("{} failed the sandwich check", obj.name())));
        }
    }
    Ok((true, "holder/descent/sandwich hold on built-ins".into()))
}

fn unit_noise() -> Result<(bool, String)> {
    let inst = hp_envelope_instance();
    let obj = &inst.objective;
    let noise = compute_noise_constants(
        obj.l_const(),
        obj.gamma(),
        inst.oracle.sup_loss_at_min(),
        obj.f_star(),
    )?;
    let mut rng = seed_rng(8802, 0);
    let points: Vec<Vec<f64>> = (0..20)
        .map(|_| crate::objectives::sample_in_ball(obj.w_star(), 3.0, &mut rng))
        .collect();
    let verdicts = check_noise_bounds(&inst.oracle, &noise, &points)?;
    let pass = verdicts.iter().all(|v| v.pass);
    Ok((pass, "five noise bounds by enumeration".into()))
}

fn unit_two_form() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (i, beta) in [0.0, 0.5, 0.9].into_iter().enumerate() {
        let mut rng = seed_rng(8803, i as u64);
        let obj = Objective::quadratic(vec![1.0, 0.3])?;
        let oracle = StochasticOracle::finite_sum_scaled(obj.clone(), vec![0.8, 1.2])?;
        let sched = StepSchedule::new(0.2, 2.0 / 3.0, 0.2, ScheduleMode::AsRate)?;
        let mut r2 = rng.clone();
        let a = run_allow_partial(
            &obj, &oracle, &sched, beta, 2000, &[1.0, -1.0], &mut rng, 500,
            StepForm::OneStep,
        )?;
        let b = run_allow_partial(
            &obj, &oracle, &sched, beta, 2000, &[1.0, -1.0], &mut r2, 500,
            StepForm::TwoTerm,
        )?;
        for (ra, rb) in a.records.iter().zip(&b.records) {
            worst = worst.max((ra.w_dist_sq - rb.w_dist_sq).abs() / (1.0 + ra.w_dist_sq));
        }
    }
    Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
}

fn unit_gates() -> Result<(bool, String)> {
    let noise = compute_noise_constants(1.0, 1.0, 0.5, 0.0)?;
    let c = compute_shb_constants(1.0, 1.0, 0.5, 0.5, &noise)?;
    let good = StepSchedule::new(c.cap_k0, 2.0 / 3.0, c.cap_k0, ScheduleMode::HpRate)?;
    let bad = StepSchedule::new(c.cap_k0, 0.45, c.cap_k0, ScheduleMode::HpRate)?;
    let vg = validate_schedule(&good, &c, 1.0, 20_000);
    let vb = validate_schedule(&bad, &c, 1.0, 20_000);
    Ok((
        vg.pass && !vb.pass,
        "valid schedule passes, p = 0.45 rejected in hp mode".to_string(),
    ))
}

fn unit_rates() -> Result<(bool, String)> {
    let ts: Vec<f64> = (1..=5000).map(|t| t as f64).collect();
    let ys: Vec<f64> = ts.iter().map(|t| 2.0 * t.powf(-0.5)).collect();
    let fit = fit_rate(&ts, &ys, 0.3)?;
    let slope_ok = (fit.slope + 0.5).abs() < 1e-6;
    let r = predicted_exponent(Algo::Shb, true, 0.5, 0.5, 0.8, RateTarget::LastIterate)?;
    let pred_ok = (r + 2.0 / 15.0).abs() < 1e-12;
    let trend = seqkit::decade_trend(&ts, &ys)?;
    Ok((
        slope_ok && pred_ok && trend.passes,
        format!("fit {:.6}, slowdown prediction {r:.4}", fit.slope),
    ))
}
