use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::DqnParams;
use crate::central::ClParams;
use crate::compression::CompressionParams;
use crate::error::{Error, Result};
use crate::federation::FedParams;
use crate::ran::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmMode {
    /// Federation with expert-model knowledge transfer.
    Ktfluc,
    /// Federation, newcomers start from random weights.
    Fl,
    /// Federation, newcomers copy the global model.
    Fli,
    /// Independent per-UE learners.
    Dil,
    /// One controller-side learner for all UEs.
    Cl,
    /// Always attach to the strongest cell; no learning.
    Rssi,
}

impl AlgorithmMode {
    pub const LEARNING: [AlgorithmMode; 5] = [
        AlgorithmMode::Ktfluc,
        AlgorithmMode::Fl,
        AlgorithmMode::Fli,
        AlgorithmMode::Dil,
        AlgorithmMode::Cl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmMode::Ktfluc => "ktfluc",
            AlgorithmMode::Fl => "fl",
            AlgorithmMode::Fli => "fli",
            AlgorithmMode::Dil => "dil",
            AlgorithmMode::Cl => "cl",
            AlgorithmMode::Rssi => "rssi",
        }
    }

    pub fn federated(self) -> bool {
        matches!(
            self,
            AlgorithmMode::Ktfluc | AlgorithmMode::Fl | AlgorithmMode::Fli
        )
    }
}

impl fmt::Display for AlgorithmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(
            match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
                "ktfluc" => AlgorithmMode::Ktfluc,
                "fl" => AlgorithmMode::Fl,
                "fli" => AlgorithmMode::Fli,
                "dil" => AlgorithmMode::Dil,
                "cl" => AlgorithmMode::Cl,
                "rssi" | "maxrssi" => AlgorithmMode::Rssi,
                _ => return Err(Error::Config(format!("unknown algorithm {s:?}"))),
            },
        )
    }
}

/// Expert model given to UEs present before any global model exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertInit {
    /// A copy of the UE's own initial local model.
    CopyLocal,
    /// All-zero weights, so the expert adds nothing until the first round.
    Zero,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub algorithm: AlgorithmMode,
    pub seed: u64,
    pub ttis: u64,
    /// Mean number of concurrently active UEs.
    pub avg_ues: f64,
    /// Widths of the two hidden layers of every per-UE model.
    pub hidden: [usize; 2],
    pub expert_init: ExpertInit,
    pub scenario: ScenarioConfig,
    pub dqn: DqnParams,
    pub federation: FedParams,
    pub compression: CompressionParams,
    pub cl: ClParams,
    /// Width of the bins of the reward trajectory in the summary.
    pub trajectory_bin_tti: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmMode::Ktfluc,
            seed: 1,
            ttis: 20_000,
            avg_ues: 25.0,
            hidden: [14, 28],
            expert_init: ExpertInit::CopyLocal,
            scenario: ScenarioConfig::default(),
            dqn: DqnParams::default(),
            federation: FedParams::default(),
            compression: CompressionParams::default(),
            cl: ClParams::default(),
            trajectory_bin_tti: 100,
        }
    }
}

impl RunConfig {
    /// Small scenario used for quick comparisons: the macro cell plus the
    /// first two small cells, ten UEs on average.
    pub fn desk() -> Self {
        Self {
            avg_ues: 10.0,
            scenario: ScenarioConfig::default()
                .with_base_station_count(3)
                .expect("default has five cells"),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.federation.validate()?;
        self.compression.validate()?;
        let d = &self.dqn;
        if !(0.0..1.0).contains(&d.gamma) {
            return Err(Error::Config(format!(
                "discount must lie in [0, 1), got {}",
                d.gamma
            )));
        }
        if !(d.learning_rate >= 0.0) || !(0.0..=1.0).contains(&d.epsilon) {
            return Err(Error::Config(
                "learning rate must be >= 0 and epsilon in [0, 1]".into(),
            ));
        }
        if d.buffer_capacity == 0 || d.batch_size > d.buffer_capacity {
            return Err(Error::Config(
                "batch size must not exceed a non-empty replay buffer".into(),
            ));
        }
        if self
            .hidden
            .iter()
            .chain(&self.cl.hidden)
            .any(|&w| w < crate::nn::HIDDEN_FLOOR)
        {
            return Err(Error::Config(
                "hidden layers need at least 2 neurons".into(),
            ));
        }
        if !(self.avg_ues >= 0.0) || !self.avg_ues.is_finite() {
            return Err(Error::Config(
                "average UE count must be finite and >= 0".into(),
            ));
        }
        if self.trajectory_bin_tti == 0 {
            return Err(Error::Config("trajectory bin must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
