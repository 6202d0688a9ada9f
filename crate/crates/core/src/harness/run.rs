use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AlgorithmMode, RunConfig};
use super::metrics::{summarize, MetricsRow, Summary, CSV_HEADER};
use crate::error::{Error, Result};
use crate::federation::FedLogRow;
use crate::nn::{read_snapshot, write_snapshot, Mlp};
use crate::ran::TrafficType;
use crate::sim::{GlobalSnapshot, Simulation};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FEDERATION_FILE: &str = "federation.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const FED_ROUNDS_DIR: &str = "fed_rounds";

/// Byte and constraint accounting at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunAudit {
    pub generated_bytes: u64,
    pub delivered_bytes: u64,
    pub queued_bytes: u64,
    pub rb_violations: u64,
    pub ignored_actions: u64,
    pub federation_shape_errors: u64,
}

impl RunAudit {
    pub fn conserved(&self) -> bool {
        self.generated_bytes == self.delivered_bytes + self.queued_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: AlgorithmMode,
    pub seed: u64,
    pub avg_ues: f64,
    pub metrics: Summary,
    pub audit: RunAudit,
    pub federation_rounds: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub rows: Vec<MetricsRow>,
    pub summary: RunSummary,
    pub fed_log: Vec<FedLogRow>,
    pub snapshots: Vec<GlobalSnapshot>,
    /// Final global model per group, if any round ran.
    pub globals: BTreeMap<TrafficType, Mlp>,
    pub central: Option<Mlp>,
    /// Local model of the lowest-id active UE of each group at the end.
    pub sample_locals: BTreeMap<TrafficType, Mlp>,
}

/// Runs one configuration end to end in memory.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    run_with(cfg, BTreeMap::new(), false)
}

/// [`run_experiment`] with optional preloaded global models and per-round
/// snapshots.
pub fn run_with(
    cfg: &RunConfig,
    globals: BTreeMap<TrafficType, Mlp>,
    keep_snapshots: bool,
) -> Result<RunOutput> {
    let started = Instant::now();
    let mut sim = Simulation::with_globals(cfg.clone(), globals)?;
    sim.keep_global_snapshots(keep_snapshots);
    sim.run_to_end();
    let ignored = sim.ignored_actions();
    let mut sample_locals = BTreeMap::new();
    for (id, agent) in sim.agents() {
        if let Some(u) = sim.world().ue(*id) {
            sample_locals
                .entry(u.traffic)
                .or_insert_with(|| agent.local.clone());
        }
    }
    let (config, world, rows, fed_log, snapshots, global, central) = sim.into_parts();
    let a = world.audit();
    let audit = RunAudit {
        generated_bytes: a.generated_bytes,
        delivered_bytes: a.delivered_bytes,
        queued_bytes: world.queued_bytes(),
        rb_violations: a.rb_violations,
        ignored_actions: ignored,
        federation_shape_errors: global.shape_errors,
    };
    let metrics = summarize(
        &rows,
        config.ttis,
        config.federation.fed_interval_tti,
        config.trajectory_bin_tti,
    );
    log::info!(
        "{} seed {} M={} finished {} TTIs in {:.2?}",
        config.algorithm,
        config.seed,
        config.avg_ues,
        config.ttis,
        started.elapsed()
    );
    let globals = TrafficType::ALL
        .into_iter()
        .filter_map(|g| global.group(g).map(|m| (g, m.clone())))
        .collect();
    Ok(RunOutput {
        summary: RunSummary {
            algorithm: config.algorithm,
            seed: config.seed,
            avg_ues: config.avg_ues,
            metrics,
            audit,
            federation_rounds: global.rounds(),
        },
        config,
        rows,
        fed_log,
        snapshots,
        globals,
        central,
        sample_locals,
    })
}

pub fn write_metrics_csv<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("metrics csv", e))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Audit(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_fed_log_csv<W: std::io::Write>(out: W, rows: &[FedLogRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record([
        "round",
        "group",
        "ue_id",
        "reward_norm",
        "experience_norm",
        "achievement_norm",
        "weight",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("federation csv", e))?;
    Ok(())
}

/// Path of the snapshot of `group` for a `--save-model` prefix.
pub fn model_path(prefix: &Path, name: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("-{name}.mlp"));
    PathBuf::from(s)
}

/// Writes the final global models (and the central model for CL). Modes
/// without federation save the model of their lowest-id active UE per group
/// instead.
pub fn save_models(out: &RunOutput, prefix: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, m: &Mlp| -> Result<()> {
        let p = model_path(prefix, name);
        fs::write(&p, write_snapshot(m)).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for g in TrafficType::ALL {
        if let Some(m) = out.globals.get(&g).or_else(|| out.sample_locals.get(&g)) {
            put(g.as_str(), m)?;
        }
    }
    if let Some(m) = &out.central {
        put("central", m)?;
    }
    Ok(written)
}

/// Loads whichever per-group snapshots exist for a prefix.
pub fn load_models(prefix: &Path) -> Result<BTreeMap<TrafficType, Mlp>> {
    let mut models = BTreeMap::new();
    for g in TrafficType::ALL {
        let p = model_path(prefix, g.as_str());
        if p.exists() {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            models.insert(g, read_snapshot(&text)?);
        }
    }
    if models.is_empty() {
        return Err(Error::Config(format!(
            "no model snapshots found for prefix {}",
            prefix.display()
        )));
    }
    Ok(models)
}

/// Writes every run artefact into `dir`. If anything fails, the files
/// written so far are removed again.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    let created_dir = !dir.exists();
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file = |name: &str, written: &mut Vec<PathBuf>| -> Result<fs::File> {
            let p = dir.join(name);
            let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            Ok(f)
        };
        fs::write(dir.join(CONFIG_FILE), out.config.to_json())
            .map_err(|e| Error::io(dir.join(CONFIG_FILE), e))?;
        written.push(dir.join(CONFIG_FILE));
        write_metrics_csv(
            std::io::BufWriter::new(file(METRICS_FILE, &mut written)?),
            &out.rows,
        )?;
        write_fed_log_csv(
            std::io::BufWriter::new(file(FEDERATION_FILE, &mut written)?),
            &out.fed_log,
        )?;
        let summary = serde_json::to_string_pretty(&out.summary)?;
        fs::write(dir.join(SUMMARY_FILE), summary)
            .map_err(|e| Error::io(dir.join(SUMMARY_FILE), e))?;
        written.push(dir.join(SUMMARY_FILE));
        if !out.snapshots.is_empty() {
            let rounds = dir.join(FED_ROUNDS_DIR);
            fs::create_dir_all(&rounds).map_err(|e| Error::io(&rounds, e))?;
            for s in &out.snapshots {
                let p = rounds.join(format!("round-{:05}-{}.mlp", s.round, s.group.as_str()));
                fs::write(&p, write_snapshot(&s.model)).map_err(|e| Error::io(&p, e))?;
                written.push(p);
            }
        }
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        let _ = fs::remove_dir(dir.join(FED_ROUNDS_DIR));
        if created_dir {
            let _ = fs::remove_dir_all(dir);
        }
    }
    result
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let p = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ttis_gives_header_only_csv() {
        let cfg = RunConfig {
            ttis: 0,
            ..RunConfig::desk()
        };
        let out = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &out.rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{}\n", CSV_HEADER.join(","))
        );
    }

    #[test]
    fn model_paths_append_group() {
        assert_eq!(
            model_path(Path::new("/tmp/m"), "gbr"),
            PathBuf::from("/tmp/m-gbr.mlp")
        );
    }
}
