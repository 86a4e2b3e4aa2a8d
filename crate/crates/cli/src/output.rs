//! File outputs: trajectory CSV, JSON summary, tidy plot data.
//!
//! Numbers are written with Rust's shortest round-trip formatting so reruns
//! of the same config are byte-identical across platforms.

use anyhow::{Context, Result};
use std::fmt::Write as _;
use std::path::Path;
use stochrate_core::optim::Trajectory;

/// Writes via a temp file and rename, so partial files never appear.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub const TRAJECTORY_COLUMNS: &str = "t,alpha,f_gap,grad_sq,min_grad_sq,min_f_gap,v_sq,z_dist_sq,w_dist_sq,loss_sample,noise_sq,sum_alpha,sum_alpha_f_gap,sum_alpha2_loss,sum_alpha_grad_sq,sum_alpha_dm_v,sum_gradf_step,sum_alpha_v_sq,sum_gradf_v,sum_v_sq";

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.records.len() * 160);
    out.push_str(TRAJECTORY_COLUMNS);
    out.push('\n');
    for r in &traj.records {
        let s = &r.sums;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.alpha,
            r.f_gap,
            r.grad_sq,
            r.min_grad_sq,
            r.min_f_gap,
            r.v_sq,
            r.z_dist_sq,
            r.w_dist_sq,
            r.loss_sample,
            r.noise_sq,
            s.alpha,
            s.alpha_f_gap,
            s.alpha2_loss,
            s.alpha_grad_sq,
            s.alpha_dm_v,
            s.gradf_step,
            s.alpha_v_sq,
            s.gradf_v,
            s.v_sq,
        );
    }
    out
}

/// Tidy (x, y, series) triples for external plotting.
pub fn plot_data_csv(series: &[(&str, &[f64], &[f64])]) -> String {
    let mut out = String::from("x,y,series\n");
    for (name, xs, ys) in series {
        for (x, y) in xs.iter().zip(*ys) {
            let _ = writeln!(out, "{x},{y},{name}");
        }
    }
    out
}
