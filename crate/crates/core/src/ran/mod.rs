//! Dual-RAT radio access network: channel model, scheduler and the
//! TTI-stepped world that UEs act in.

pub mod channel;
pub mod config;
pub mod scheduler;
pub mod world;

use serde::{Deserialize, Serialize};

pub use config::{BsConfig, Rat, ScenarioConfig, StateNormalization, TrafficProfile};
pub use world::{
    reward, AuditCounters, BaseStation, Packet, RanWorld, StepReport, UeId, UeReport, UserEquipment,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficType {
    Gbr,
    NonGbr,
}

impl TrafficType {
    pub const ALL: [TrafficType; 2] = [TrafficType::Gbr, TrafficType::NonGbr];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficType::Gbr => "gbr",
            TrafficType::NonGbr => "non_gbr",
        }
    }

    pub fn index(self) -> usize {
        match self {
            TrafficType::Gbr => 0,
            TrafficType::NonGbr => 1,
        }
    }
}
