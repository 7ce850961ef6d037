//! Evaluation reports, loss histories and run manifests.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stable_ds_core::data::Demonstration;
use stable_ds_core::evaluation::{evaluate_demo, stability_audit, EvalReport, Integrator, Rollout};
use stable_ds_core::training::{IterationRecord, TrainConfig};
use stable_ds_core::StableDsModel;

use crate::error::{Error, Result};
use crate::persist::write_atomic;

/// Environment variable capping the evaluation worker count.
pub const THREADS_ENV: &str = "STABLE_DS_THREADS";

fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Usage(e.to_string()))
}

/// Scores every demonstration (in parallel, output in input order) and
/// optionally appends a stability audit of `audit` samples.
pub fn evaluate_dataset(
    model: &StableDsModel,
    demos: &[Demonstration],
    integrator: Integrator,
    audit: Option<(usize, u64)>,
) -> Result<(EvalReport, Vec<Rollout>)> {
    let results: Vec<_> = pool()?.install(|| {
        demos
            .par_iter()
            .map(|d| evaluate_demo(model, d, integrator))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let (metrics, rollouts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut report = EvalReport::from_demos(metrics);
    if let Some((samples, seed)) = audit {
        report.audit = Some(stability_audit(model, samples, seed)?);
    }
    Ok((report, rollouts))
}

pub fn report_to_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str, path: &Path) -> Result<EvalReport> {
    serde_json::from_str(text).map_err(|e| Error::format(path, Some(e.line()), e.to_string()))
}

/// Aligned-column summary of a report.
pub fn report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:>6}  {:>12}  {:>12}  {:>9}  {:>6}  {:>10}",
        "demo", "K", "SEA", "V_rmse", "converged", "steps", "V_increase"
    );
    for m in &report.per_demo {
        let status = match (m.converged, m.diverged, m.aborted) {
            (_, true, _) => "diverged",
            (_, _, true) => "aborted",
            (true, _, _) => "yes",
            _ => "no",
        };
        let steps = m.steps_to_converge.map_or("-".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{:>4}  {:>6}  {:>12.5e}  {:>12.5e}  {:>9}  {:>6}  {:>10}",
            m.index, m.samples, m.sea, m.v_rmse, status, steps, m.monotonicity_violations
        );
    }
    let _ = writeln!(out, "mean SEA     {:.6e}", report.mean_sea);
    let _ = writeln!(out, "mean V_rmse  {:.6e}", report.mean_v_rmse);
    let _ = writeln!(out, "converged    {:.1}%", 100.0 * report.convergence_fraction);
    if let Some(a) = &report.audit {
        let _ = writeln!(
            out,
            "audit        {} box + {} shell samples: {} V-dot violations, {} singular Jacobians, {} residual failures",
            a.box_samples, a.shell_samples, a.rate_violations, a.singular_jacobians, a.residual_failures
        );
        let _ = writeln!(
            out,
            "             V in box [{:.3e}, {:.3e}], on far shell [{:.3e}, {:.3e}]",
            a.box_v_min, a.box_v_max, a.shell_v_min, a.shell_v_max
        );
    }
    out
}

const HISTORY_HEADER: &str = "iteration,epoch,lr,loss,skipped";

pub fn history_to_csv(history: &[IterationRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{},{}", r.iteration, r.epoch, r.lr, r.loss, r.skipped);
    }
    out
}

pub fn history_from_csv(text: &str, path: &Path) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(Error::format(path, Some(1), format!("expected header `{HISTORY_HEADER}`"))),
    }
    lines
        .map(|(i, line)| {
            let err = || Error::format(path, Some(i + 1), format!("malformed row `{line}`"));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(err());
            }
            Ok(IterationRecord {
                iteration: f[0].parse().map_err(|_| err())?,
                epoch: f[1].parse().map_err(|_| err())?,
                lr: f[2].parse().map_err(|_| err())?,
                loss: f[3].parse().map_err(|_| err())?,
                skipped: f[4].parse().map_err(|_| err())?,
            })
        })
        .collect()
}

/// Provenance of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub dataset: String,
    pub dataset_sha256: String,
    pub model_path: String,
    pub metrics_path: String,
    pub best_iteration: usize,
    pub best_loss: f64,
    pub final_loss: f64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(path, Some(e.line()), e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use stable_ds_core::data::Normalization;
    use stable_ds_core::dynamics::DynamicsMode;
    use stable_ds_core::networks::Layout;

    fn demos() -> Vec<Demonstration> {
        (0..3)
            .map(|i| {
                let states = (0..20).map(|k| vec![1.0 - k as f64 / 19.0, 0.2 * i as f64 * (1.0 - k as f64 / 19.0)]).collect();
                Demonstration::from_states(states, 0.05, i).unwrap()
            })
            .collect()
    }

    #[test]
    fn parallel_matches_sequential() {
        let m = StableDsModel::initialize(2, &Layout::standard(2), 1.0, DynamicsMode::Learned, Normalization::identity(2)).unwrap();
        let d = demos();
        let (par, rollouts) = evaluate_dataset(&m, &d, Integrator::Euler, Some((50, 1))).unwrap();
        let seq = stable_ds_core::evaluation::evaluate(&m, &d, Integrator::Euler).unwrap();
        assert_eq!(par.per_demo, seq.per_demo);
        assert_eq!(rollouts.len(), 3);
        assert!(par.audit.is_some());
        let back = report_from_json(&report_to_json(&par), Path::new("r.json")).unwrap();
        assert_eq!(back, par);
        let table = report_table(&par);
        assert_eq!(table.lines().count(), 1 + 3 + 3 + 2);
    }

    #[test]
    fn history_round_trip() {
        let h = vec![
            IterationRecord { iteration: 0, epoch: 0, lr: 1e-3, loss: 0.5, skipped: 0 },
            IterationRecord { iteration: 1, epoch: 1, lr: 9.9e-4, loss: f64::NAN, skipped: 64 },
        ];
        let back = history_from_csv(&history_to_csv(&h), Path::new("h.csv")).unwrap();
        assert_eq!(back[0], h[0]);
        assert!(back[1].loss.is_nan() && back[1].skipped == 64);
        assert!(history_from_csv("a,b\n", Path::new("h.csv")).is_err());
    }
}
