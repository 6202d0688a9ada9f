//! Grouped, attention-weighted model federation run by the RAN controller.

use serde::{Deserialize, Serialize};

use crate::agent::{Indicators, UeAgent};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::ran::{TrafficType, UeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedParams {
    /// Blend rate of the aggregate into the global model.
    pub eta_global: f64,
    /// Blend rate of the global model into each local model.
    pub eta_local: f64,
    pub fed_interval_tti: u64,
    /// Divisor applied to the summed indicators before the softmax.
    pub score_divisor: f64,
}

impl Default for FedParams {
    fn default() -> Self {
        Self {
            eta_global: 0.9,
            eta_local: 0.9,
            fed_interval_tti: 30,
            score_divisor: 3.0,
        }
    }
}

impl FedParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.eta_global) || !unit(self.eta_local) {
            return Err(Error::Config(
                "federation blend rates must lie in [0, 1]".into(),
            ));
        }
        if self.fed_interval_tti == 0 {
            return Err(Error::Config("federation interval must be positive".into()));
        }
        if !(self.score_divisor > 0.0) {
            return Err(Error::Config("score divisor must be positive".into()));
        }
        Ok(())
    }
}

/// Indicators after max-normalisation within the group, plus the weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attention {
    pub normalized: Indicators,
    pub weight: f64,
}

fn max_normalize(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let max = values.fold(0.0_f64, f64::max);
    move |v| if max > 0.0 { v / max } else { 0.0 }
}

/// Softmax attention over a group. Each indicator is divided by its
/// maximum in the group (an all-zero indicator contributes 0), the three
/// are summed and divided by `divisor`, and the scores go through a
/// softmax.
pub fn attention_weights(indicators: &[Indicators], divisor: f64) -> Vec<Attention> {
    let r = max_normalize(indicators.iter().map(|i| i.mean_reward));
    let e = max_normalize(indicators.iter().map(|i| i.experience));
    let a = max_normalize(indicators.iter().map(|i| i.achievement));
    let normalized: Vec<Indicators> = indicators
        .iter()
        .map(|i| Indicators {
            mean_reward: r(i.mean_reward),
            experience: e(i.experience),
            achievement: a(i.achievement),
        })
        .collect();
    let scores: Vec<f64> = normalized
        .iter()
        .map(|n| (n.mean_reward + n.experience + n.achievement) / divisor)
        .collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = exp.iter().sum();
    normalized
        .into_iter()
        .zip(exp)
        .map(|(normalized, x)| Attention {
            normalized,
            weight: x / total,
        })
        .collect()
}

/// How the global model flows back to the UEs after aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushBack {
    /// Blend every local model toward the global model.
    BlendLocal,
    /// Replace every expert model by the global model.
    ReplaceExpert,
}

/// One row of the federation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedLogRow {
    pub round: u64,
    pub group: TrafficType,
    pub ue_id: UeId,
    pub reward_norm: f64,
    pub experience_norm: f64,
    pub achievement_norm: f64,
    pub weight: f64,
}

/// Per-traffic-group global models.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub params: FedParams,
    groups: [Option<Mlp>; 2],
    rounds: u64,
    /// Groups skipped because a member's model had a different shape.
    pub shape_errors: u64,
}

impl GlobalModel {
    pub fn new(params: FedParams) -> Self {
        Self {
            params,
            groups: [None, None],
            rounds: 0,
            shape_errors: 0,
        }
    }

    pub fn group(&self, g: TrafficType) -> Option<&Mlp> {
        self.groups[g.index()].as_ref()
    }

    pub fn set_group(&mut self, g: TrafficType, model: Mlp) {
        self.groups[g.index()] = Some(model);
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Whether a federation round is due at the end of TTI `tti`.
    pub fn is_boundary(&self, tti: u64) -> bool {
        (tti + 1).is_multiple_of(self.params.fed_interval_tti)
    }

    /// `theta_g = (1 - eta) theta_g + eta * sum_m w_m theta_m`. The first
    /// aggregation of a group takes the weighted sum as is.
    pub fn aggregate(&mut self, g: TrafficType, locals: &[(&Mlp, f64)]) -> Result<()> {
        if locals.is_empty() {
            return Ok(());
        }
        let sum = Mlp::weighted_sum(locals)?;
        match &mut self.groups[g.index()] {
            Some(global) => global.blend_toward(&sum, self.params.eta_global)?,
            slot @ None => *slot = Some(sum),
        }
        Ok(())
    }

    /// FL/FLI push-back: `theta_l = (1 - eta) theta_l + eta theta_g`.
    pub fn blend_into(&self, g: TrafficType, local: &mut Mlp) -> Result<()> {
        match self.group(g) {
            Some(global) => local.blend_toward(global, self.params.eta_local),
            None => Ok(()),
        }
    }

    /// Runs one round over `members` (UE id, group, agent), returning the
    /// log rows. Groups with no members keep their global model.
    pub fn federate(
        &mut self,
        members: &mut [(UeId, TrafficType, &mut UeAgent)],
        t_total: u64,
        mode: PushBack,
    ) -> Vec<FedLogRow> {
        let round = self.rounds;
        self.rounds += 1;
        let mut log = Vec::new();
        for g in TrafficType::ALL {
            let idx: Vec<usize> = (0..members.len()).filter(|&k| members[k].1 == g).collect();
            if idx.is_empty() {
                continue;
            }
            let indicators: Vec<Indicators> = idx
                .iter()
                .map(|&k| {
                    members[k]
                        .2
                        .window_indicators(self.params.fed_interval_tti, t_total)
                })
                .collect();
            let att = attention_weights(&indicators, self.params.score_divisor);
            for (&k, a) in idx.iter().zip(&att) {
                log.push(FedLogRow {
                    round,
                    group: g,
                    ue_id: members[k].0,
                    reward_norm: a.normalized.mean_reward,
                    experience_norm: a.normalized.experience,
                    achievement_norm: a.normalized.achievement,
                    weight: a.weight,
                });
            }
            let locals: Vec<(&Mlp, f64)> = idx
                .iter()
                .zip(&att)
                .map(|(&k, a)| (&members[k].2.local, a.weight))
                .collect();
            if self.aggregate(g, &locals).is_err() {
                self.shape_errors += 1;
                continue;
            }
            let global = self.group(g).expect("aggregated").clone();
            for &k in &idx {
                let agent = &mut *members[k].2;
                match mode {
                    PushBack::BlendLocal => {
                        if agent
                            .local
                            .blend_toward(&global, self.params.eta_local)
                            .is_err()
                        {
                            self.shape_errors += 1;
                        }
                    }
                    PushBack::ReplaceExpert => agent.expert = Some(global.clone()),
                }
            }
        }
        log
    }

    /// Copies the group's global model into a newly arrived agent: into the
    /// local model, and into the expert too when `with_expert`. Returns
    /// `false` (agent untouched) if the group has no global model yet.
    pub fn init_newcomer(&self, g: TrafficType, agent: &mut UeAgent, with_expert: bool) -> bool {
        let Some(global) = self.group(g) else {
            return false;
        };
        agent.set_local(global.clone());
        if with_expert {
            agent.expert = Some(global.clone());
        }
        agent.buffer.clear();
        true
    }
}
