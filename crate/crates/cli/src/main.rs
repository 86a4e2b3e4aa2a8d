//! `stochrate`: configuration-driven optimizer runs, parameter sweeps, and
//! the verification suites.
//!
//! Exit codes: 0 all checks pass, 1 a check or run failed, 2 invalid input.

mod config;
mod output;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use rayon::prelude::*;
use std::path::PathBuf;
use stochrate_core::optim::{
    compute_shb_constants, run_allow_partial, validate_schedule, StepForm,
};
use stochrate_core::oracle::compute_noise_constants;
use stochrate_core::rates::{
    as_rate_check, fit_rate, Ensemble, EnsembleMeta, RateTarget, DEFAULT_FIT_WINDOW,
};
use stochrate_core::{seed_rng, suite};

#[derive(Parser)]
#[command(name = "stochrate", version, about = "stochastic optimizer experiments and rate checks")]
struct Cli {
    /// Worker threads for seed-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment; writes trajectory.csv, summary.json, plotdata.csv.
    Run(RunArgs),
    /// Run a parameter grid; writes rate_table.csv.
    Sweep(SweepArgs),
    /// Run a verification suite and report per-check pass/fail lines.
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of seeds in the config.
    #[arg(long)]
    seeds: Option<usize>,
    /// Override the master seed in the config.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Bypass schedule validity gates (clearly labeled in outputs).
    #[arg(long = "unsafe")]
    unsafe_mode: bool,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Bypass schedule validity gates (cells are labeled, none skipped).
    #[arg(long = "unsafe")]
    unsafe_mode: bool,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// unit (seconds) or paper (the full statistical suite, minutes).
    #[arg(long, default_value = "unit")]
    suite: String,
}

fn main() {
    let code = match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn real_main() -> Result<i32> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Verify(args) => cmd_verify(args),
    }
}

/// Instance plus derived constants and validated schedule for a config.
struct Prepared {
    instance: stochrate_core::presets::Instance,
    constants: stochrate_core::optim::ShbConstants,
    schedule: stochrate_core::optim::StepSchedule,
    verdict: stochrate_core::optim::ScheduleVerdict,
}

fn prepare(cfg: &ExperimentConfig, beta: f64, horizon: usize) -> Result<Prepared> {
    let instance = cfg.build_instance()?;
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
    let hp_cap = 0.5 / constants.k5_estimate.sqrt();
    let schedule = cfg.build_schedule(constants.cap_k0, hp_cap)?;
    let verdict = validate_schedule(&schedule, &constants, obj.gamma(), horizon);
    Ok(Prepared {
        instance,
        constants,
        schedule,
        verdict,
    })
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seeds {
        cfg.run.seeds = s;
    }
    if let Some(m) = args.master_seed {
        cfg.run.master_seed = m;
    }
    let prep = prepare(&cfg, cfg.run.beta, cfg.run.t)?;
    if !prep.verdict.pass && !args.unsafe_mode {
        let failed: Vec<&str> = prep
            .verdict
            .gates
            .iter()
            .filter(|g| !g.pass)
            .map(|g| g.name.as_str())
            .collect();
        bail!(
            "schedule failed gates [{}]; rerun with --unsafe to force",
            failed.join(", ")
        );
    }

    let trajectories: Vec<stochrate_core::optim::Trajectory> = (0..cfg.run.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed_rng(cfg.run.master_seed, i);
            run_allow_partial(
                &prep.instance.objective,
                &prep.instance.oracle,
                &prep.schedule,
                cfg.run.beta,
                cfg.run.t,
                &prep.instance.w0,
                &mut rng,
                cfg.run.record_every,
                StepForm::OneStep,
            )
        })
        .collect::<stochrate_core::Result<_>>()?;

    let aborted: Vec<(usize, usize)> = trajectories
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.aborted_at.map(|a| (i, a)))
        .collect();

    // Fitted slope of the median gap when every seed completed.
    let fitted = if aborted.is_empty() {
        let ts = trajectories[0].ts();
        let n_rec = trajectories[0].records.len();
        let mut med = Vec::with_capacity(n_rec);
        let mut buf = vec![0.0; trajectories.len()];
        for r in 0..n_rec {
            for (j, tr) in trajectories.iter().enumerate() {
                buf[j] = tr.records[r].f_gap;
            }
            buf.sort_by(|a, b| a.total_cmp(b));
            let n = buf.len();
            med.push(if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            });
        }
        fit_rate(&ts, &med, DEFAULT_FIT_WINDOW).ok().map(|f| (f.slope, f.stderr))
    } else {
        None
    };

    let t0 = &trajectories[0];
    output::atomic_write(&args.out.join("trajectory.csv"), &output::trajectory_csv(t0))?;

    let ts = t0.ts();
    let f_gap = t0.extract(|r| r.f_gap);
    let min_grad = t0.extract(|r| r.min_grad_sq);
    let w_dist = t0.extract(|r| r.w_dist_sq);
    output::atomic_write(
        &args.out.join("plotdata.csv"),
        &output::plot_data_csv(&[
            ("f_gap_seed0", &ts, &f_gap),
            ("min_grad_sq_seed0", &ts, &min_grad),
            ("w_dist_sq_seed0", &ts, &w_dist),
        ]),
    )?;

    // High-probability mode: emit the (horizon, quantile, envelope) table and
    // the envelope report when the ensemble qualifies.
    let hp_report = if prep.schedule.mode == stochrate_core::optim::ScheduleMode::HpRate
        && aborted.is_empty()
        && cfg.run.seeds as f64 >= 10.0 / cfg.run.delta
    {
        let horizons: Vec<usize> = (0..)
            .map(|k| 10usize.pow(3 + k))
            .take_while(|&h| h <= cfg.run.t)
            .collect();
        if horizons.len() >= 3 {
            let meta = EnsembleMeta {
                master_seed: cfg.run.master_seed,
                config_hash: cfg.hash(),
                gamma: prep.instance.objective.gamma(),
                convex: prep.instance.objective.convex(),
                schedule_valid: prep.verdict.pass,
            };
            let ens = Ensemble {
                trajectories: trajectories.clone(),
                meta,
            };
            match stochrate_core::rates::hp_envelope_check(&ens, cfg.run.delta, &horizons, 0.15) {
                Ok(rep) => {
                    let env = rep.quantile_envelope.expect("hp report carries an envelope");
                    let mut csv = String::from("horizon,quantile,envelope\n");
                    for &h in &horizons {
                        let mut vals: Vec<f64> = ens
                            .trajectories
                            .iter()
                            .filter_map(|tr| tr.record_at(h + 1).map(|r| r.f_gap))
                            .collect();
                        let q = stochrate_core::rates::upper_quantile(&mut vals, cfg.run.delta);
                        let e = env.c
                            * (h as f64).powf(env.exponent)
                            * (h as f64 / cfg.run.delta).ln().powf(env.log_power);
                        use std::fmt::Write as _;
                        let _ = writeln!(csv, "{h},{q},{e}");
                    }
                    output::atomic_write(&args.out.join("hp_envelope.csv"), &csv)?;
                    Some(rep)
                }
                Err(_) => None,
            }
        } else {
            None
        }
    } else {
        None
    };

    let final_rec = t0.records.last().context("empty trajectory")?;
    let summary = serde_json::json!({
        "config_hash": cfg.hash(),
        "gates": prep.verdict.gates,
        "gates_pass": prep.verdict.pass,
        "gates_bypassed": args.unsafe_mode && !prep.verdict.pass,
        "objective": prep.instance.objective.name(),
        "gamma": prep.instance.objective.gamma(),
        "l_const": prep.instance.objective.l_const(),
        "beta": cfg.run.beta,
        "schedule": prep.schedule,
        "t": cfg.run.t,
        "seeds": cfg.run.seeds,
        "master_seed": cfg.run.master_seed,
        "noise_constants": prep.constants.noise,
        "shb_constants": {
            "k0": prep.constants.k0,
            "k1": prep.constants.k1,
            "k2": prep.constants.k2,
            "k3": prep.constants.k3,
            "k4": prep.constants.k4,
            "k5": prep.constants.k5,
            "cap_k0": prep.constants.cap_k0,
            "k5_estimate": prep.constants.k5_estimate,
        },
        "final": {
            "t": final_rec.t,
            "f_gap": final_rec.f_gap,
            "min_grad_sq": final_rec.min_grad_sq,
            "min_f_gap": final_rec.min_f_gap,
            "w_dist_sq": final_rec.w_dist_sq,
            "sums": final_rec.sums,
        },
        "fitted_f_gap_slope": fitted.map(|f| f.0),
        "fitted_f_gap_stderr": fitted.map(|f| f.1),
        "hp_envelope": hp_report,
        "aborted_seeds": aborted,
        "error": if aborted.is_empty() { serde_json::Value::Null } else {
            serde_json::json!(format!("{} seed(s) hit numerical blowup", aborted.len()))
        },
    });
    output::atomic_write(
        &args.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;

    println!(
        "run complete: {} seeds, T = {}, outputs in {}",
        cfg.run.seeds,
        cfg.run.t,
        args.out.display()
    );
    if let Some((slope, stderr)) = fitted {
        println!("fitted f_gap slope: {slope:.4} +- {stderr:.4}");
    }
    Ok(if aborted.is_empty() { 0 } else { 1 })
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let sweep = cfg.sweep.clone().context("config has no [sweep] section")?;
    if sweep.p.is_empty() || sweep.algo.is_empty() {
        bail!("sweep needs non-empty p and algo lists");
    }
    let base_gamma = cfg.build_instance()?.objective.gamma();
    let gammas = if sweep.gamma.is_empty() {
        vec![base_gamma]
    } else {
        sweep.gamma.clone()
    };
    let shb_betas: Vec<f64> = if sweep.beta.iter().any(|&b| b > 0.0) {
        sweep.beta.iter().cloned().filter(|&b| b > 0.0).collect()
    } else {
        vec![0.5]
    };

    let mut rows = Vec::new();
    let mut all_pass = true;
    for algo in &sweep.algo {
        let betas: Vec<f64> = match algo.as_str() {
            "sgd" => vec![0.0],
            "shb" => shb_betas.clone(),
            other => bail!("unknown algo '{other}' (sgd | shb)"),
        };
        for &beta in &betas {
            for &gamma in &gammas {
                for &p in &sweep.p {
                    let row = sweep_cell(&cfg, &sweep, algo, beta, gamma, p, args.unsafe_mode)?;
                    if row.status == "ok" && !row.pass {
                        all_pass = false;
                    }
                    rows.push(row);
                }
            }
        }
    }

    let mut csv = String::from("algo,beta,gamma,p,status,predicted_exponent,fitted_exponent,pass\n");
    for r in &rows {
        use std::fmt::Write as _;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.algo,
            r.beta,
            r.gamma,
            r.p,
            r.status,
            r.predicted.map_or(String::new(), |v| v.to_string()),
            r.fitted.map_or(String::new(), |v| v.to_string()),
            r.pass
        );
    }
    output::atomic_write(&args.out.join("rate_table.csv"), &csv)?;
    let n_ok = rows.iter().filter(|r| r.status == "ok").count();
    let n_pass = rows.iter().filter(|r| r.status == "ok" && r.pass).count();
    println!(
        "sweep complete: {} cells ({} run, {} skipped), {}/{} passing; table in {}",
        rows.len(),
        n_ok,
        rows.len() - n_ok,
        n_pass,
        n_ok,
        args.out.display()
    );
    Ok(if all_pass { 0 } else { 1 })
}

struct SweepRow {
    algo: String,
    beta: f64,
    gamma: f64,
    p: f64,
    status: &'static str,
    predicted: Option<f64>,
    fitted: Option<f64>,
    pass: bool,
}

fn sweep_cell(
    cfg: &ExperimentConfig,
    sweep: &config::SweepSpec,
    algo: &str,
    beta: f64,
    gamma: f64,
    p: f64,
    unsafe_mode: bool,
) -> Result<SweepRow> {
    // Cells at the base gamma reuse the configured instance; other gammas use
    // the componentwise power objective at that exponent.
    let mut cell_cfg = cfg.clone();
    cell_cfg.schedule.p = p;
    cell_cfg.run.beta = beta;
    let base_gamma = cfg.build_instance()?.objective.gamma();
    if gamma != base_gamma {
        cell_cfg.objective = config::ObjectiveSpec {
            kind: "power".into(),
            dim: Some(cfg.objective.dim.unwrap_or(3)),
            gamma: Some(gamma),
            eigs: None,
            dataset: None,
            lambdas: None,
            energies: None,
            residual: None,
            name: None,
        };
        cell_cfg.oracle.kind = Some("finite_sum".into());
    }
    let prep = match prepare(&cell_cfg, beta, sweep.t) {
        Ok(p) => p,
        Err(_) => {
            return Ok(SweepRow {
                algo: algo.into(),
                beta,
                gamma,
                p,
                status: "skipped",
                predicted: None,
                fitted: None,
                pass: false,
            })
        }
    };
    if !prep.verdict.pass && !unsafe_mode {
        return Ok(SweepRow {
            algo: algo.into(),
            beta,
            gamma,
            p,
            status: "skipped",
            predicted: None,
            fitted: None,
            pass: false,
        });
    }
    let meta = EnsembleMeta {
        master_seed: cfg.run.master_seed,
        config_hash: cell_cfg.hash(),
        gamma: prep.instance.objective.gamma(),
        convex: prep.instance.objective.convex(),
        schedule_valid: prep.verdict.pass,
    };
    let ens = Ensemble::generate(meta, sweep.seeds, |_i, rng| {
        stochrate_core::optim::run(
            &prep.instance.objective,
            &prep.instance.oracle,
            &prep.schedule,
            beta,
            sweep.t,
            &prep.instance.w0,
            rng,
            100,
        )
    })?;
    let target = if prep.instance.objective.convex() {
        RateTarget::LastIterate
    } else {
        RateTarget::MinGrad
    };
    let rep = as_rate_check(&ens, target, 0.05, 0.15)?;
    Ok(SweepRow {
        algo: algo.into(),
        beta,
        gamma,
        p,
        status: "ok",
        predicted: Some(rep.predicted_slope),
        fitted: Some(rep.fitted_slope),
        pass: rep.pass,
    })
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let outcomes = match args.suite.as_str() {
        "unit" => suite::run_unit_suite(),
        "paper" | "full" => suite::run_paper_suite(),
        other => bail!("unknown suite '{other}' (unit | paper)"),
    };
    let mut all = true;
    for o in &outcomes {
        all &= o.pass;
        println!(
            "[{}] {}: {} ({:.2}s)\n    {}",
            o.id,
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.seconds,
            o.detail
        );
    }
    println!(
        "{}: {}/{} checks passed",
        if all { "OK" } else { "FAILED" },
        outcomes.iter().filter(|o| o.pass).count(),
        outcomes.len()
    );
    Ok(if all { 0 } else { 1 })
}

