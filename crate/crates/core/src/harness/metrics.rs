use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ran::{TrafficType, UeId, UeReport};

/// One per-TTI, per-UE line of the metrics CSV. The first nine columns are
/// the public schema; the rest carry what the summary is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tti: u64,
    pub ue_id: UeId,
    pub traffic_type: TrafficType,
    pub attached_bs: usize,
    pub reward: f64,
    pub delay_ms: f64,
    pub throughput_bps: f64,
    pub queue_len: usize,
    pub eligible: bool,
    pub backlogged: bool,
    pub blocked: bool,
    pub delivered_packets: u32,
    pub late_packets: u32,
    pub departed: bool,
}

impl MetricsRow {
    pub fn from_report(tti: u64, r: &UeReport) -> Self {
        Self {
            tti,
            ue_id: r.id,
            traffic_type: r.traffic,
            attached_bs: r.attached_bs,
            reward: r.reward,
            delay_ms: r.delay_ms,
            throughput_bps: r.throughput_bps,
            queue_len: r.queue_len,
            eligible: r.eligible,
            backlogged: r.backlogged,
            blocked: r.blocked,
            delivered_packets: r.delivered_packets,
            late_packets: r.late_packets,
            departed: r.departed,
        }
    }
}

pub const CSV_HEADER: [&str; 14] = [
    "tti",
    "ue_id",
    "traffic_type",
    "attached_bs",
    "reward",
    "delay_ms",
    "throughput_bps",
    "queue_len",
    "eligible",
    "backlogged",
    "blocked",
    "delivered_packets",
    "late_packets",
    "departed",
];

/// Per-run summary. Every field is a pure function of the per-TTI rows
/// plus the run length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ttis: u64,
    pub rows: u64,
    pub mean_reward: f64,
    /// Mean over rows in the last quarter of the run.
    pub final_quarter_reward: f64,
    pub mean_gbr_delay_ms: f64,
    pub mean_non_gbr_throughput_bps: f64,
    /// Blocked share of backlogged non-GBR UE-TTIs.
    pub blocking_rate: f64,
    /// Late share of delivered GBR packets.
    pub qos_violation_rate: f64,
    /// Mean TTIs from arrival to departure over departed UEs.
    pub mean_transmission_cycle_tti: f64,
    pub departed_ues: u64,
    pub mean_active_ues: f64,
    /// Mean reward of UEs that arrived after TTI 0 over their first
    /// `newcomer_window_tti` TTIs.
    pub newcomer_first_window_reward: f64,
    pub newcomers: u64,
    pub newcomer_window_tti: u64,
    pub trajectory_bin_tti: u64,
    /// Mean per-row reward of each bin of `trajectory_bin_tti` TTIs.
    pub reward_trajectory: Vec<f64>,
}

fn mean(sum: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: u64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        mean(self.sum, self.n)
    }
}

pub fn summarize(
    rows: &[MetricsRow],
    ttis: u64,
    newcomer_window_tti: u64,
    trajectory_bin_tti: u64,
) -> Summary {
    let quarter_start = ttis - ttis / 4;
    let mut reward = Acc::default();
    let mut final_quarter = Acc::default();
    let mut gbr_delay = Acc::default();
    let mut throughput = Acc::default();
    let (mut backlogged, mut blocked) = (0u64, 0u64);
    let (mut delivered, mut late) = (0u64, 0u64);
    let mut first_seen: BTreeMap<UeId, u64> = BTreeMap::new();
    let mut cycle = Acc::default();
    let mut newcomer: BTreeMap<UeId, Acc> = BTreeMap::new();
    let bins = ttis.div_ceil(trajectory_bin_tti) as usize;
    let mut trajectory: Vec<Acc> = (0..bins).map(|_| Acc::default()).collect();

    for r in rows {
        reward.add(r.reward);
        if r.tti >= quarter_start {
            final_quarter.add(r.reward);
        }
        trajectory[(r.tti / trajectory_bin_tti) as usize].add(r.reward);
        match r.traffic_type {
            TrafficType::Gbr => {
                gbr_delay.add(r.delay_ms);
                delivered += u64::from(r.delivered_packets);
                late += u64::from(r.late_packets);
            }
            TrafficType::NonGbr => {
                throughput.add(r.throughput_bps);
                if r.backlogged {
                    backlogged += 1;
                    blocked += u64::from(r.blocked);
                }
            }
        }
        let arrival = *first_seen.entry(r.ue_id).or_insert(r.tti);
        if arrival > 0 && r.tti < arrival + newcomer_window_tti {
            newcomer.entry(r.ue_id).or_default().add(r.reward);
        }
        if r.departed {
            cycle.add((r.tti + 1 - arrival) as f64);
        }
    }

    let mut newcomer_mean = Acc::default();
    for a in newcomer.values() {
        newcomer_mean.add(a.mean());
    }

    Summary {
        ttis,
        rows: rows.len() as u64,
        mean_reward: reward.mean(),
        final_quarter_reward: final_quarter.mean(),
        mean_gbr_delay_ms: gbr_delay.mean(),
        mean_non_gbr_throughput_bps: throughput.mean(),
        blocking_rate: mean(blocked as f64, backlogged),
        qos_violation_rate: mean(late as f64, delivered),
        mean_transmission_cycle_tti: cycle.mean(),
        departed_ues: cycle.n,
        mean_active_ues: mean(rows.len() as f64, ttis),
        newcomer_first_window_reward: newcomer_mean.mean(),
        newcomers: newcomer_mean.n,
        newcomer_window_tti,
        trajectory_bin_tti,
        reward_trajectory: trajectory.iter().map(Acc::mean).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tti: u64, id: UeId, traffic: TrafficType, reward: f64) -> MetricsRow {
        MetricsRow {
            tti,
            ue_id: id,
            traffic_type: traffic,
            attached_bs: 0,
            reward,
            delay_ms: 2.0,
            throughput_bps: 1e6,
            queue_len: 0,
            eligible: true,
            backlogged: true,
            blocked: false,
            delivered_packets: 1,
            late_packets: 0,
            departed: false,
        }
    }

    #[test]
    fn hand_counted_summary() {
        let mut rows = vec![
            row(0, 0, TrafficType::Gbr, 1.0),
            row(0, 1, TrafficType::NonGbr, 0.5),
            row(1, 0, TrafficType::Gbr, 0.8),
            row(1, 1, TrafficType::NonGbr, 0.1),
            row(2, 1, TrafficType::NonGbr, 0.3),
            row(2, 2, TrafficType::NonGbr, 0.2),
            row(3, 2, TrafficType::NonGbr, 0.4),
        ];
        rows[2].departed = true;
        rows[2].late_packets = 1;
        rows[3].blocked = true;
        rows[6].departed = true;
        let s = summarize(&rows, 4, 2, 2);
        assert!((s.mean_reward - 3.3 / 7.0).abs() < 1e-12);
        assert!((s.final_quarter_reward - 0.4).abs() < 1e-12);
        assert_eq!(s.blocking_rate, 0.2);
        assert_eq!(s.qos_violation_rate, 0.5);
        // UE 0: 0 -> 1, two TTIs; UE 2: 2 -> 3, two TTIs.
        assert_eq!(s.mean_transmission_cycle_tti, 2.0);
        assert_eq!(s.newcomers, 1);
        assert!((s.newcomer_first_window_reward - 0.3).abs() < 1e-12);
        assert_eq!(s.reward_trajectory.len(), 2);
        assert!((s.reward_trajectory[1] - 0.3).abs() < 1e-12);
        assert_eq!(s.mean_active_ues, 7.0 / 4.0);
    }

    #[test]
    fn empty_run() {
        let s = summarize(&[], 0, 30, 100);
        assert_eq!(s.rows, 0);
        assert_eq!(s.mean_reward, 0.0);
        assert!(s.reward_trajectory.is_empty());
    }
}
