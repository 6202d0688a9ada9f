use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::{fs, path::Path};

use serde::Serialize;

use super::config::{AlgorithmMode, RunConfig};
use super::metrics::Summary;
use super::run::{run_experiment, RunSummary, CONFIG_FILE};
use crate::error::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const RUNS_FILE: &str = "runs.json";

/// Summary metrics aggregated by a sweep, with their direction.
pub const METRICS: [(&str, fn(&Summary) -> f64, bool); 8] = [
    ("mean_reward", |s| s.mean_reward, false),
    ("final_quarter_reward", |s| s.final_quarter_reward, false),
    ("mean_gbr_delay_ms", |s| s.mean_gbr_delay_ms, true),
    (
        "mean_non_gbr_throughput_bps",
        |s| s.mean_non_gbr_throughput_bps,
        false,
    ),
    ("blocking_rate", |s| s.blocking_rate, true),
    ("qos_violation_rate", |s| s.qos_violation_rate, true),
    (
        "mean_transmission_cycle_tti",
        |s| s.mean_transmission_cycle_tti,
        true,
    ),
    (
        "newcomer_first_window_reward",
        |s| s.newcomer_first_window_reward,
        false,
    ),
];

fn metric(name: &str) -> Result<(fn(&Summary) -> f64, bool)> {
    METRICS
        .iter()
        .find(|m| m.0 == name)
        .map(|m| (m.1, m.2))
        .ok_or_else(|| Error::Config(format!("unknown metric {name:?}")))
}

/// Mean and sample standard deviation over seeds for one (algorithm, M).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: AlgorithmMode,
    pub avg_ues: f64,
    pub seeds: usize,
    /// `(mean, std)` per entry of [`METRICS`].
    pub stats: Vec<(f64, f64)>,
}

impl SweepRow {
    pub fn get(&self, name: &str) -> Result<(f64, f64)> {
        let k = METRICS
            .iter()
            .position(|m| m.0 == name)
            .ok_or_else(|| Error::Config(format!("unknown metric {name:?}")))?;
        Ok(self.stats[k])
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates per-run summaries into one row per (algorithm, M), in the
/// order the cells first appear.
pub fn aggregate(summaries: &[RunSummary]) -> Vec<SweepRow> {
    let mut cells: Vec<(AlgorithmMode, f64)> = Vec::new();
    for s in summaries {
        if !cells.contains(&(s.algorithm, s.avg_ues)) {
            cells.push((s.algorithm, s.avg_ues));
        }
    }
    cells
        .into_iter()
        .map(|(algorithm, avg_ues)| {
            let runs: Vec<&Summary> = summaries
                .iter()
                .filter(|s| s.algorithm == algorithm && s.avg_ues == avg_ues)
                .map(|s| &s.metrics)
                .collect();
            let stats = METRICS
                .iter()
                .map(|(_, f, _)| mean_std(&runs.iter().map(|s| f(s)).collect::<Vec<_>>()))
                .collect();
            SweepRow {
                algorithm,
                avg_ues,
                seeds: runs.len(),
                stats,
            }
        })
        .collect()
}

/// Every (algorithm, M, seed) combination derived from `base`.
pub fn sweep_configs(
    base: &RunConfig,
    algorithms: &[AlgorithmMode],
    ues: &[f64],
    seeds: &[u64],
) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for &algorithm in algorithms {
        for &avg_ues in ues {
            for &seed in seeds {
                out.push(RunConfig {
                    algorithm,
                    avg_ues,
                    seed,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// Runs `jobs` on up to `workers` threads; results keep the input order.
pub fn run_parallel<T: Send>(
    jobs: &[RunConfig],
    workers: usize,
    f: impl Fn(&RunConfig) -> T + Sync,
) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs.len() {
                    break;
                }
                let r = f(&jobs[k]);
                results.lock().expect("no poisoned workers")[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs the full grid and returns the per-run summaries and the table.
pub fn sweep(
    base: &RunConfig,
    algorithms: &[AlgorithmMode],
    ues: &[f64],
    seeds: &[u64],
) -> Result<(Vec<RunSummary>, Vec<SweepRow>)> {
    if seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    let jobs = sweep_configs(base, algorithms, ues, seeds);
    let summaries = run_parallel(&jobs, default_workers(), |c| {
        run_experiment(c).map(|o| o.summary)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let table = aggregate(&summaries);
    Ok((summaries, table))
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["algorithm".to_string(), "avg_ues".into(), "seeds".into()];
    for (name, _, _) in METRICS {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.algorithm.to_string(),
            r.avg_ues.to_string(),
            r.seeds.to_string(),
        ];
        for (m, s) in &r.stats {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("sweep csv", e))?;
    Ok(())
}

/// Writes `sweep.csv`, `runs.json` and `config.json` into `dir`.
pub fn write_sweep(
    dir: &Path,
    base: &RunConfig,
    runs: &[RunSummary],
    table: &[SweepRow],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(SWEEP_FILE);
    write_sweep_csv(fs::File::create(&p).map_err(|e| Error::io(&p, e))?, table)?;
    let p = dir.join(RUNS_FILE);
    fs::write(&p, serde_json::to_string_pretty(runs)?).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(CONFIG_FILE);
    fs::write(&p, base.to_json()).map_err(|e| Error::io(&p, e))?;
    Ok(())
}

/// Relative improvement of `test` over `baseline` on `metric` at `avg_ues`:
/// `(b - t) / b` for metrics where lower is better, `(t - b) / b` otherwise.
pub fn compare(
    table: &[SweepRow],
    baseline: AlgorithmMode,
    test: AlgorithmMode,
    metric_name: &str,
    avg_ues: f64,
) -> Result<f64> {
    let (_, lower_is_better) = metric(metric_name)?;
    let cell = |a: AlgorithmMode| {
        table
            .iter()
            .find(|r| r.algorithm == a && r.avg_ues == avg_ues)
            .ok_or_else(|| Error::MissingCell(format!("{a} at M = {avg_ues}")))
            .and_then(|r| r.get(metric_name))
            .map(|s| s.0)
    };
    let (b, t) = (cell(baseline)?, cell(test)?);
    Ok(relative_delta(b, t, lower_is_better))
}

pub fn relative_delta(baseline: f64, test: f64, lower_is_better: bool) -> f64 {
    if lower_is_better {
        (baseline - test) / baseline
    } else {
        (test - baseline) / baseline
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::summarize;
    use crate::harness::run::RunAudit;

    fn summary(algorithm: AlgorithmMode, avg_ues: f64, seed: u64, reward: f64) -> RunSummary {
        let mut metrics = summarize(&[], 10, 30, 10);
        metrics.mean_reward = reward;
        metrics.mean_gbr_delay_ms = 100.0 * reward;
        RunSummary {
            algorithm,
            seed,
            avg_ues,
            metrics,
            audit: RunAudit {
                generated_bytes: 0,
                delivered_bytes: 0,
                queued_bytes: 0,
                rb_violations: 0,
                ignored_actions: 0,
                federation_shape_errors: 0,
            },
            federation_rounds: 0,
        }
    }

    #[test]
    fn table_shape_and_stats() {
        let mut runs = Vec::new();
        for a in [AlgorithmMode::Dil, AlgorithmMode::Ktfluc] {
            for m in [5.0, 10.0] {
                for (seed, r) in [(1, 1.0), (2, 2.0), (3, 3.0)] {
                    runs.push(summary(a, m, seed, r));
                }
            }
        }
        let t = aggregate(&runs);
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|r| r.seeds == 3));
        assert_eq!(t[0].get("mean_reward").unwrap(), (2.0, 1.0));
    }

    #[test]
    fn identical_repeats_have_zero_std() {
        let runs = vec![summary(AlgorithmMode::Fl, 5.0, 1, 0.7); 4];
        assert_eq!(aggregate(&runs)[0].get("mean_reward").unwrap(), (0.7, 0.0));
    }

    #[test]
    fn comparisons() {
        assert_eq!(relative_delta(100.0, 35.0, true), 0.65);
        assert!((relative_delta(1.0, 1.52, false) - 0.52).abs() < 1e-12);
        let t = aggregate(&[
            summary(AlgorithmMode::Cl, 5.0, 1, 1.0),
            summary(AlgorithmMode::Ktfluc, 5.0, 1, 0.35),
        ]);
        let d = compare(
            &t,
            AlgorithmMode::Cl,
            AlgorithmMode::Ktfluc,
            "mean_gbr_delay_ms",
            5.0,
        )
        .unwrap();
        assert!((d - 0.65).abs() < 1e-12);
        assert_eq!(
            compare(&t, AlgorithmMode::Cl, AlgorithmMode::Cl, "mean_reward", 5.0).unwrap(),
            0.0
        );
        assert!(matches!(
            compare(&t, AlgorithmMode::Fl, AlgorithmMode::Cl, "mean_reward", 5.0),
            Err(Error::MissingCell(_))
        ));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let jobs = sweep_configs(
            &RunConfig::default(),
            &[AlgorithmMode::Dil],
            &[1.0],
            &[5, 6, 7, 8],
        );
        assert_eq!(run_parallel(&jobs, 3, |c| c.seed), vec![5, 6, 7, 8]);
    }
}
