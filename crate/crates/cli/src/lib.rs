//! Command layer of the `moldctl` tool: configuration parsing, command
//! dispatch and file output.

pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use moldctl_core::verify::{verify_default, DEFAULT_SEED};
use moldctl_core::{routh_hurwitz, simulate, tune, GainMapping, SimStatus, Stability};
use serde_json::json;

pub use config::{parse_config, RunConfig};
pub use error::CliError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_ABORT: u8 = 2;
pub const EXIT_VERIFY_FAIL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    Stability,
    Tune,
}

/// Result of a command that ran to completion, successfully or not.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: u8,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

pub fn run(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate => run_simulate(cfg, out_dir),
        Command::Verify => run_verify(cfg, out_dir),
        Command::Stability => run_stability(cfg, out_dir),
        Command::Tune => run_tune(cfg, out_dir),
    }
}

fn status_exit(status: SimStatus) -> u8 {
    match status {
        SimStatus::Completed => EXIT_OK,
        SimStatus::SingularityAbort | SimStatus::Diverged => EXIT_ABORT,
    }
}

fn run_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let res = simulate(&cfg.sim, &cfg.plant)?;
    log::info!(
        "simulation finished: {:?} at t = {}",
        res.status,
        res.t_stop
    );
    let traj = output::write_atomic(
        out_dir,
        "trajectory.csv",
        &output::trajectory_csv(&res.rows)?,
    )?;
    let doc = json!({
        "status": res.status,
        "t_stop": res.t_stop,
        "message": res.message,
        "settled": res.metrics.map(|m| m.settled()),
        "metrics": res.metrics,
        "saturated_fraction": res.saturated_fraction(),
        "rows": res.rows.len(),
        "assumed": cfg.assumed_for(false),
        "config": cfg.echo(false),
    });
    let metrics = output::write_atomic(out_dir, "metrics.json", &output::json_bytes(&doc)?)?;
    let summary = match res.metrics {
        Some(m) => format!(
            "{:?}: settling {} s, overshoot {:.3} %, final error {:.6}",
            res.status, m.settling_time_2pct, m.overshoot_pct, m.final_error
        ),
        None => format!(
            "{:?} at t = {}: {}",
            res.status,
            res.t_stop,
            res.message.as_deref().unwrap_or("")
        ),
    };
    Ok(Outcome {
        exit_code: status_exit(res.status),
        files: vec![traj, metrics],
        summary,
    })
}

fn run_verify(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let report = verify_default(&cfg.plant, DEFAULT_SEED)?;
    let doc = json!({
        "report": report,
        "assumed": cfg.assumed_for(false),
        "plant": cfg.plant.constants(),
        "q": cfg.plant.q(),
    });
    let path = output::write_atomic(out_dir, "verification.json", &output::json_bytes(&doc)?)?;
    let orders: Vec<String> = report
        .lie_chain
        .iter()
        .map(|c| format!("L{}: {:.2e}", c.order, c.max_rel_err))
        .collect();
    Ok(Outcome {
        exit_code: if report.pass {
            EXIT_OK
        } else {
            EXIT_VERIFY_FAIL
        },
        files: vec![path],
        summary: format!(
            "{} ({}; relative degree {}/{})",
            if report.pass { "PASS" } else { "FAIL" },
            orders.join(", "),
            report.relative_degree.passed,
            report.relative_degree.states
        ),
    })
}

fn run_stability(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let gains = cfg
        .gains
        .ok_or_else(|| CliError::Validation("stability requires a gains block".into()))?;
    let reports: Vec<_> = GainMapping::ALL
        .iter()
        .map(|&m| {
            let mut g = gains;
            g.mapping = m;
            routh_hurwitz(&g)
        })
        .collect();
    let doc = json!({
        "gains": gains.as_array(),
        "configured_mapping": gains.mapping,
        "mappings": reports,
    });
    let path = output::write_atomic(out_dir, "routh.json", &output::json_bytes(&doc)?)?;
    let summary = reports
        .iter()
        .map(|r| format!("{:?}: {:?}", r.mapping, r.verdict))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome {
        exit_code: EXIT_OK,
        files: vec![path],
        summary,
    })
}

fn run_tune(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let tcfg = cfg.tune_config()?;
    let seed_verdict = routh_hurwitz(&tcfg.initial_gains).verdict;
    if seed_verdict != Stability::Stable {
        log::warn!("seed gains are {seed_verdict:?}");
    }
    let outcome = tune(&tcfg, &cfg.plant)?;
    let trace = output::write_atomic(
        out_dir,
        "tune_trace.csv",
        &output::trace_csv(&outcome.trace)?,
    )?;

    let (best, resim) = match outcome.best {
        Some((g, cost)) => {
            let mut scenario = cfg.sim.clone();
            scenario.gains = Some(g);
            let res = simulate(&scenario, &cfg.plant)?;
            (
                Some(json!({ "gains": g, "cost": cost })),
                Some(json!({
                    "status": res.status,
                    "settled": res.metrics.map(|m| m.settled()),
                    "metrics": res.metrics,
                    "saturated_fraction": res.saturated_fraction(),
                })),
            )
        }
        None => (None, None),
    };
    let doc = json!({
        "feasible": best.is_some(),
        "best": best,
        "simulation": resim,
        "evaluations": outcome.trace.len(),
        "budget_exhausted": outcome.budget_exhausted,
        "initial_gains": tcfg.initial_gains,
        "assumed": cfg.assumed_for(true),
        "config": cfg.echo(true),
    });
    let best_path = output::write_atomic(out_dir, "best_gains.json", &output::json_bytes(&doc)?)?;
    let (exit_code, summary) = match outcome.best {
        Some((g, cost)) => (
            EXIT_OK,
            format!(
                "best cost {cost} at k = {:?} ({:?}) after {} evaluations",
                g.as_array(),
                g.mapping,
                outcome.trace.len()
            ),
        ),
        None => (EXIT_ABORT, "no stable candidate found".to_string()),
    };
    Ok(Outcome {
        exit_code,
        files: vec![trace, best_path],
        summary,
    })
}
