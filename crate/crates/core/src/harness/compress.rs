//! Model-sizing pre-simulation.
//!
//! One compression-controlled model drives every UE of the scenario. All
//! UEs act from it (recording PoZ), their transitions go into its replay
//! buffer and it takes one training step per TTI. The window reward is the
//! mean reward over every UE-TTI in the window. By default every window
//! replays the same environment from a fresh start, so the comparison
//! between windows is not drowned out by load fluctuations.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::agent::{Experience, UeAgent};
use crate::compression::{
    compression_threshold, effectiveness, smooth_effectiveness, CompressionEvent,
    CompressionSchedule, EffectivenessPoint, Phase, SizePoint,
};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::ran::RanWorld;
use crate::rng::{SeedTree, Stream};

pub const COMPRESSION_FILE: &str = "compression.csv";
pub const EFFECTIVENESS_FILE: &str = "effectiveness.json";

/// Effectiveness level that defines the compression threshold.
pub const THRESHOLD_LEVEL: f64 = 0.9;

/// Neighbours on each side averaged before picking the recommended size;
/// every size is seen for a single window, so the raw curve is noisy.
pub const SMOOTHING_HALF_WIDTH: usize = 4;

/// Index of the compression model in the seeded init/exploration streams,
/// kept clear of real UE ids.
const PRESIM_INDEX: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessReport {
    pub seed: u64,
    pub ttis_run: u64,
    /// Whether pruning reached the floor within the TTI budget.
    pub finished: bool,
    pub peak_hidden: [usize; 2],
    pub history: Vec<SizePoint>,
    pub curve: Vec<EffectivenessPoint>,
    pub threshold_level: f64,
    pub threshold: Option<EffectivenessPoint>,
    pub smoothed_curve: Vec<EffectivenessPoint>,
    pub smoothed_threshold: Option<EffectivenessPoint>,
    /// Hidden widths at the smoothed threshold (the peak if there is none).
    pub recommended_hidden: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct CompressionOutput {
    pub events: Vec<CompressionEvent>,
    pub report: EffectivenessReport,
    pub model: Mlp,
}

/// Runs grow-then-prune for at most `cfg.compression.max_ttis` TTIs.
pub fn run_compression(cfg: &RunConfig) -> Result<CompressionOutput> {
    cfg.validate()?;
    let seeds = SeedTree::new(cfg.seed);
    let fresh_world = || RanWorld::new(cfg.scenario.clone(), cfg.avg_ues, &seeds);
    let mut world = fresh_world()?;
    let mut tti = 0;
    let [h1, h2] = cfg.compression.initial_hidden;
    let sizes = [world.state_dim(), h1, h2, world.bs_count()];
    let model = Mlp::random(&sizes, &mut seeds.indexed(Stream::Init, PRESIM_INDEX))?;
    let mut agent = UeAgent::new(
        model,
        cfg.dqn.clone(),
        seeds.indexed(Stream::Exploration, PRESIM_INDEX),
        seeds.indexed(Stream::Replay, PRESIM_INDEX),
    );
    let mut schedule = CompressionSchedule::new(cfg.compression.clone());
    let interval = cfg.compression.split_interval_tti;
    let mut peak = [h1, h2];

    while tti < cfg.compression.max_ttis && schedule.phase() != Phase::Done {
        let mut pending = Vec::with_capacity(world.ues().len());
        for u in world.ues() {
            let s = world.observe_state(u.id).expect("active UE");
            let a = agent.select_action_recording_poz(&s);
            pending.push((u.id, s, a));
        }
        let actions: Vec<_> = pending.iter().map(|(id, _, a)| (*id, *a)).collect();
        let report = world.step(&actions);
        for (u, (_, state, action)) in report.ues.iter().zip(pending) {
            schedule.record_reward(u.reward);
            if u.departed {
                continue;
            }
            let next_state = world.observe_state(u.id).expect("active UE");
            agent.observe(
                Experience {
                    state,
                    next_state,
                    action,
                    reward: u.reward,
                },
                u.eligible,
            );
        }
        agent.train_local();
        if (tti + 1) % interval == 0 {
            let mut m = agent.local.clone();
            schedule.end_window(&mut m, tti)?;
            let s = m.layer_sizes();
            if s[1] + s[2] > peak[0] + peak[1] {
                peak = [s[1], s[2]];
            }
            agent.set_local(m);
            if cfg.compression.replay_environment {
                world = fresh_world()?;
            }
        }
        tti += 1;
    }

    let history = schedule.history().to_vec();
    let curve = if history.is_empty() {
        Vec::new()
    } else {
        effectiveness(&history)
    };
    let threshold = compression_threshold(&curve, THRESHOLD_LEVEL);
    let smoothed_curve = smooth_effectiveness(&curve, SMOOTHING_HALF_WIDTH);
    let smoothed_threshold = compression_threshold(&smoothed_curve, THRESHOLD_LEVEL);
    let recommended_hidden = smoothed_threshold
        .and_then(|t| history.iter().find(|p| p.total() == t.total_neurons))
        .map_or(peak, |p| [p.n1, p.n2]);
    if schedule.phase() != Phase::Done {
        log::warn!("compression stopped at TTI {tti} before pruning finished");
    }
    Ok(CompressionOutput {
        events: schedule.events().to_vec(),
        report: EffectivenessReport {
            seed: cfg.seed,
            ttis_run: tti,
            finished: schedule.phase() == Phase::Done,
            peak_hidden: peak,
            history,
            curve,
            threshold_level: THRESHOLD_LEVEL,
            threshold,
            smoothed_curve,
            smoothed_threshold,
            recommended_hidden,
        },
        model: agent.local,
    })
}

pub fn write_compression_csv<W: std::io::Write>(out: W, events: &[CompressionEvent]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record([
        "event_tti",
        "phase",
        "kind",
        "layer",
        "neuron",
        "poz",
        "n1",
        "n2",
        "window_reward",
        "plateau_counter",
    ])?;
    for e in events {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io("compression csv", e))?;
    Ok(())
}

pub fn write_compression(dir: &Path, out: &CompressionOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(COMPRESSION_FILE);
    let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    write_compression_csv(std::io::BufWriter::new(f), &out.events)?;
    let p = dir.join(EFFECTIVENESS_FILE);
    fs::write(&p, serde_json::to_string_pretty(&out.report)?).map_err(|e| Error::io(&p, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_budget_grows_only() {
        let mut cfg = RunConfig::desk();
        cfg.compression.max_ttis = 900;
        let out = run_compression(&cfg).unwrap();
        assert_eq!(out.report.ttis_run, 900);
        assert!(!out.report.finished);
        let first = &out.events[0];
        assert_eq!(first.event_tti, 299);
        // The very first window cannot stall, so it always splits.
        assert_eq!((first.n1, first.n2), (3, 3));
        assert!(out.events.iter().all(|e| e.phase == Phase::Growing));
    }
}
