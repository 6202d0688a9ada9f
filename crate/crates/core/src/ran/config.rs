use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rat {
    Lte,
    Nr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsConfig {
    pub rat: Rat,
    pub position_m: [f64; 2],
    pub carrier_ghz: f64,
    pub tx_power_w: f64,
    pub bandwidth_mhz: f64,
    pub rb_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficProfile {
    /// Share of arriving UEs carrying this traffic type.
    pub proportion: f64,
    pub file_bytes: u64,
    pub packet_bytes: u32,
    /// Constant-bit-rate inter-arrival, in TTIs.
    pub packet_interval_tti: u64,
}

impl TrafficProfile {
    pub fn packets_per_file(&self) -> u64 {
        self.file_bytes.div_ceil(u64::from(self.packet_bytes))
    }

    /// TTIs from arrival until the last packet can be delivered, assuming
    /// every packet leaves in the TTI it was generated.
    pub fn nominal_lifetime_tti(&self) -> f64 {
        (self.packets_per_file().saturating_sub(1) * self.packet_interval_tti + 1) as f64
    }
}

/// Constants used to scale the per-UE observation into O(1) ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateNormalization {
    pub rssi_ref_dbm: f64,
    pub rssi_scale_db: f64,
    pub queue_scale_packets: f64,
    pub delay_scale_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub base_stations: Vec<BsConfig>,
    /// UEs are dropped uniformly in a square of this side centred at the origin.
    pub area_side_m: f64,
    pub rb_bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub antenna_gain_db: f64,
    pub pathloss_intercept_db: f64,
    /// Pathloss slope per decade of distance in km.
    pub pathloss_slope_db: f64,
    pub shadowing_sigma_db: f64,
    pub gbr: TrafficProfile,
    pub non_gbr: TrafficProfile,
    pub d_max_ms: f64,
    pub b_max_bps: f64,
    pub gbr_eligible_delay_ms: f64,
    pub non_gbr_eligible_bps: f64,
    pub state_norm: StateNormalization,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let sbs = |x: f64, y: f64| BsConfig {
            rat: Rat::Nr,
            position_m: [x, y],
            carrier_ghz: 3.5,
            tx_power_w: 20.0,
            bandwidth_mhz: 20.0,
            rb_count: 100,
        };
        Self {
            base_stations: vec![
                BsConfig {
                    rat: Rat::Lte,
                    position_m: [0.0, 0.0],
                    carrier_ghz: 0.8,
                    tx_power_w: 40.0,
                    bandwidth_mhz: 10.0,
                    rb_count: 50,
                },
                sbs(250.0, 250.0),
                sbs(-250.0, -250.0),
                sbs(-250.0, 250.0),
                sbs(250.0, -250.0),
            ],
            area_side_m: 700.0,
            rb_bandwidth_hz: 180e3,
            noise_dbm_per_hz: -174.0,
            antenna_gain_db: 15.0,
            pathloss_intercept_db: 128.1,
            pathloss_slope_db: 37.6,
            shadowing_sigma_db: 8.0,
            gbr: TrafficProfile {
                proportion: 0.4,
                file_bytes: 50_000,
                packet_bytes: 1600,
                packet_interval_tti: 3,
            },
            non_gbr: TrafficProfile {
                proportion: 0.6,
                file_bytes: 250_000,
                packet_bytes: 3200,
                packet_interval_tti: 3,
            },
            d_max_ms: 10.0,
            b_max_bps: 200e6,
            gbr_eligible_delay_ms: 5.0,
            non_gbr_eligible_bps: 20e6,
            state_norm: StateNormalization {
                rssi_ref_dbm: -60.0,
                rssi_scale_db: 20.0,
                queue_scale_packets: 10.0,
                delay_scale_ms: 10.0,
            },
        }
    }
}

impl ScenarioConfig {
    /// Keeps the macro cell plus the first `count - 1` small cells.
    pub fn with_base_station_count(mut self, count: usize) -> Result<Self> {
        if count == 0 || count > self.base_stations.len() {
            return Err(Error::Config(format!(
                "cannot keep {count} of {} base stations",
                self.base_stations.len()
            )));
        }
        self.base_stations.truncate(count);
        Ok(self)
    }

    pub fn mean_lifetime_tti(&self) -> f64 {
        self.gbr.proportion * self.gbr.nominal_lifetime_tti()
            + self.non_gbr.proportion * self.non_gbr.nominal_lifetime_tti()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.base_stations.is_empty() {
            return bad("at least one base station is required".into());
        }
        for (i, bs) in self.base_stations.iter().enumerate() {
            if !(bs.tx_power_w > 0.0 && bs.carrier_ghz > 0.0 && bs.bandwidth_mhz > 0.0)
                || bs.rb_count == 0
            {
                return bad(format!(
                    "base station {i} needs positive power, carrier, bandwidth and RB count"
                ));
            }
        }
        for (name, t) in [("gbr", &self.gbr), ("non_gbr", &self.non_gbr)] {
            if !(0.0..=1.0).contains(&t.proportion) {
                return bad(format!("{name}.proportion must lie in [0, 1]"));
            }
            if t.file_bytes == 0 || t.packet_bytes == 0 || t.packet_interval_tti == 0 {
                return bad(format!(
                    "{name} file, packet size and interval must be positive"
                ));
            }
        }
        if (self.gbr.proportion + self.non_gbr.proportion - 1.0).abs() > 1e-9 {
            return bad("traffic proportions must sum to 1".into());
        }
        let positive = [
            ("area_side_m", self.area_side_m),
            ("rb_bandwidth_hz", self.rb_bandwidth_hz),
            ("d_max_ms", self.d_max_ms),
            ("b_max_bps", self.b_max_bps),
            ("gbr_eligible_delay_ms", self.gbr_eligible_delay_ms),
            ("non_gbr_eligible_bps", self.non_gbr_eligible_bps),
            ("state_norm.rssi_scale_db", self.state_norm.rssi_scale_db),
            (
                "state_norm.queue_scale_packets",
                self.state_norm.queue_scale_packets,
            ),
            ("state_norm.delay_scale_ms", self.state_norm.delay_scale_ms),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.shadowing_sigma_db < 0.0 {
            return bad("shadowing_sigma_db must be non-negative".into());
        }
        Ok(())
    }
}
