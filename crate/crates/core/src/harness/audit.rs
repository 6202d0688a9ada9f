use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::metrics::summarize;
use super::run::{read_metrics_csv, read_summary, CONFIG_FILE, METRICS_FILE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub rows: u64,
    pub ttis: u64,
    pub generated_bytes: u64,
    pub delivered_bytes: u64,
    pub queued_bytes: u64,
}

/// Re-derives the summary of a written run from its metrics CSV and checks
/// it matches exactly, along with byte conservation and the RB constraint.
pub fn audit_run(dir: &Path) -> Result<AuditReport> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let rows = read_metrics_csv(&dir.join(METRICS_FILE))?;
    let stored = read_summary(dir)?;
    let recomputed = summarize(
        &rows,
        cfg.ttis,
        cfg.federation.fed_interval_tti,
        cfg.trajectory_bin_tti,
    );
    if recomputed != stored.metrics {
        return Err(Error::Audit(format!(
            "summary does not match the metrics rows: stored {:?}, recomputed {:?}",
            stored.metrics, recomputed
        )));
    }
    if stored.algorithm != cfg.algorithm || stored.seed != cfg.seed {
        return Err(Error::Audit(
            "summary and config describe different runs".into(),
        ));
    }
    if let Some(r) = rows.iter().find(|r| r.tti >= cfg.ttis) {
        return Err(Error::Audit(format!(
            "row at TTI {} beyond the run length {}",
            r.tti, cfg.ttis
        )));
    }
    let a = stored.audit;
    if a.rb_violations != 0 {
        return Err(Error::Audit(format!(
            "{} resource-block violations",
            a.rb_violations
        )));
    }
    if !a.conserved() {
        return Err(Error::Audit(format!(
            "bytes not conserved: generated {} != delivered {} + queued {}",
            a.generated_bytes, a.delivered_bytes, a.queued_bytes
        )));
    }
    Ok(AuditReport {
        rows: rows.len() as u64,
        ttis: cfg.ttis,
        generated_bytes: a.generated_bytes,
        delivered_bytes: a.delivered_bytes,
        queued_bytes: a.queued_bytes,
    })
}
