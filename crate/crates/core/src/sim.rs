//! The TTI loop shared by every algorithm mode.
//!
//! Each TTI: agents observe and pick a serving cell, the world advances,
//! agents store the transition and train, federation runs at its boundary,
//! and newly arrived UEs get an agent initialised according to the mode.

use std::collections::BTreeMap;

use crate::agent::{Experience, UeAgent};
use crate::central::{CentralAgent, CentralExperience, SlotMap};
use crate::error::Result;
use crate::federation::{FedLogRow, GlobalModel, PushBack};
use crate::harness::config::{AlgorithmMode, ExpertInit, RunConfig};
use crate::harness::metrics::MetricsRow;
use crate::nn::Mlp;
use crate::ran::{RanWorld, TrafficType, UeId};
use crate::rng::{SeedTree, Stream};

/// Global model of one group after a federation round.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSnapshot {
    pub round: u64,
    pub group: TrafficType,
    pub model: Mlp,
}

struct Central {
    agent: CentralAgent,
    map: SlotMap,
    pending: Option<(Vec<f64>, Vec<Option<usize>>)>,
}

pub struct Simulation {
    cfg: RunConfig,
    seeds: SeedTree,
    world: RanWorld,
    agents: BTreeMap<UeId, UeAgent>,
    global: GlobalModel,
    central: Option<Central>,
    pending: BTreeMap<UeId, (Vec<f64>, usize)>,
    fed_log: Vec<FedLogRow>,
    snapshots: Vec<GlobalSnapshot>,
    keep_snapshots: bool,
    rows: Vec<MetricsRow>,
    ignored_actions: u64,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        Self::with_globals(cfg, BTreeMap::new())
    }

    /// Starts with the given global models already in place; every UE,
    /// including the initial ones, is then initialised from them.
    pub fn with_globals(cfg: RunConfig, globals: BTreeMap<TrafficType, Mlp>) -> Result<Self> {
        cfg.validate()?;
        let seeds = SeedTree::new(cfg.seed);
        let world = RanWorld::new(cfg.scenario.clone(), cfg.avg_ues, &seeds)?;
        let mut global = GlobalModel::new(cfg.federation.clone());
        for (g, m) in globals {
            global.set_group(g, m);
        }
        let central = (cfg.algorithm == AlgorithmMode::Cl).then(|| {
            let slots = cfg.cl.slot_count(cfg.avg_ues);
            let agent = CentralAgent::new(
                slots,
                world.state_dim(),
                world.bs_count(),
                cfg.dqn.clone(),
                cfg.cl.clone(),
                &mut seeds.stream(Stream::Central),
                seeds.indexed(Stream::Exploration, u64::MAX),
                seeds.indexed(Stream::Replay, u64::MAX),
            );
            Central {
                agent,
                map: SlotMap::new(slots),
                pending: None,
            }
        });
        let mut sim = Self {
            cfg,
            seeds,
            world,
            agents: BTreeMap::new(),
            global,
            central,
            pending: BTreeMap::new(),
            fed_log: Vec::new(),
            snapshots: Vec::new(),
            keep_snapshots: false,
            rows: Vec::new(),
            ignored_actions: 0,
        };
        let initial: Vec<(UeId, TrafficType)> =
            sim.world.ues().iter().map(|u| (u.id, u.traffic)).collect();
        for (id, traffic) in initial {
            sim.admit(id, traffic, true);
        }
        Ok(sim)
    }

    /// Keep a copy of every group's global model after each round.
    pub fn keep_global_snapshots(&mut self, keep: bool) {
        self.keep_snapshots = keep;
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn world(&self) -> &RanWorld {
        &self.world
    }

    pub fn agents(&self) -> &BTreeMap<UeId, UeAgent> {
        &self.agents
    }

    pub fn agent_mut(&mut self, id: UeId) -> Option<&mut UeAgent> {
        self.agents.get_mut(&id)
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    pub fn central_model(&self) -> Option<&Mlp> {
        self.central.as_ref().map(|c| &c.agent.model)
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn fed_log(&self) -> &[FedLogRow] {
        &self.fed_log
    }

    pub fn snapshots(&self) -> &[GlobalSnapshot] {
        &self.snapshots
    }

    pub fn ignored_actions(&self) -> u64 {
        self.ignored_actions
    }

    pub fn into_parts(
        self,
    ) -> (
        RunConfig,
        RanWorld,
        Vec<MetricsRow>,
        Vec<FedLogRow>,
        Vec<GlobalSnapshot>,
        GlobalModel,
        Option<Mlp>,
    ) {
        let central = self.central.map(|c| c.agent.model);
        (
            self.cfg,
            self.world,
            self.rows,
            self.fed_log,
            self.snapshots,
            self.global,
            central,
        )
    }

    fn admit(&mut self, id: UeId, traffic: TrafficType, initial: bool) {
        let mode = self.cfg.algorithm;
        if let Some(c) = &mut self.central {
            c.map.assign(id);
            return;
        }
        if mode == AlgorithmMode::Rssi {
            return;
        }
        let sizes = [
            self.world.state_dim(),
            self.cfg.hidden[0],
            self.cfg.hidden[1],
            self.world.bs_count(),
        ];
        let local =
            Mlp::random(&sizes, &mut self.seeds.indexed(Stream::Init, id)).expect("valid sizes");
        let mut agent = UeAgent::new(
            local,
            self.cfg.dqn.clone(),
            self.seeds.indexed(Stream::Exploration, id),
            self.seeds.indexed(Stream::Replay, id),
        );
        let copied = match mode {
            AlgorithmMode::Ktfluc => self.global.init_newcomer(traffic, &mut agent, true),
            AlgorithmMode::Fli => self.global.init_newcomer(traffic, &mut agent, false),
            // Plain FL only inherits a preloaded model at the very start.
            AlgorithmMode::Fl if initial => self.global.init_newcomer(traffic, &mut agent, false),
            _ => false,
        };
        if mode == AlgorithmMode::Ktfluc && !copied {
            agent.expert = Some(match self.cfg.expert_init {
                ExpertInit::CopyLocal => agent.local.clone(),
                ExpertInit::Zero => Mlp::zeros(&sizes).expect("valid sizes"),
            });
        }
        if !copied && !initial && matches!(mode, AlgorithmMode::Ktfluc | AlgorithmMode::Fli) {
            log::debug!("UE {id} arrived before any {traffic:?} global model; random init");
        }
        self.agents.insert(id, agent);
    }

    fn decide(&mut self) -> Vec<(UeId, usize)> {
        let mode = self.cfg.algorithm;
        let mut actions = Vec::with_capacity(self.world.ues().len());
        if let Some(c) = &mut self.central {
            // UEs that found every slot taken get one as soon as it frees up.
            for u in self.world.ues() {
                c.map.assign(u.id);
            }
            let state = c.agent.cell_state(&self.world, &c.map);
            let slot_actions = c.agent.select(&state, &c.map);
            for u in self.world.ues() {
                let a = c
                    .map
                    .slot_of(u.id)
                    .and_then(|k| slot_actions[k])
                    .unwrap_or_else(|| u.best_rssi_bs());
                actions.push((u.id, a));
            }
            c.pending = Some((state, slot_actions));
            return actions;
        }
        for u in self.world.ues() {
            match self.agents.get_mut(&u.id) {
                Some(agent) => {
                    let s = self.world.observe_state(u.id).expect("active UE");
                    let a = if mode == AlgorithmMode::Ktfluc {
                        agent.select_action_transfer(&s)
                    } else {
                        agent.select_action_local(&s)
                    };
                    self.pending.insert(u.id, (s, a));
                    actions.push((u.id, a));
                }
                None => actions.push((u.id, u.best_rssi_bs())),
            }
        }
        actions
    }

    /// Advances one TTI and returns its metrics rows.
    pub fn step(&mut self) -> &[MetricsRow] {
        let mode = self.cfg.algorithm;
        let actions = self.decide();
        let report = self.world.step(&actions);
        self.ignored_actions += report.ignored_actions as u64;
        let t = report.tti;
        let first_row = self.rows.len();
        self.rows
            .extend(report.ues.iter().map(|u| MetricsRow::from_report(t, u)));

        if let Some(c) = &mut self.central {
            let (state, slot_actions) = c.pending.take().expect("decided this TTI");
            let slotted: Vec<f64> = report
                .ues
                .iter()
                .filter(|u| c.map.slot_of(u.id).is_some())
                .map(|u| u.reward)
                .collect();
            for u in report.ues.iter().filter(|u| u.departed) {
                c.map.release(u.id);
            }
            if !slotted.is_empty() {
                let total: f64 = slotted.iter().sum();
                let reward = if c.agent.cl.sum_reward {
                    total
                } else {
                    total / slotted.len() as f64
                };
                let next_state = c.agent.cell_state(&self.world, &c.map);
                c.agent.observe(CentralExperience {
                    state,
                    next_state,
                    actions: slot_actions,
                    reward,
                });
                c.agent.train();
            }
        } else if mode != AlgorithmMode::Rssi {
            for u in &report.ues {
                let Some((state, action)) = self.pending.remove(&u.id) else {
                    continue;
                };
                if u.departed {
                    self.agents.remove(&u.id);
                    continue;
                }
                let agent = self.agents.get_mut(&u.id).expect("agent for active UE");
                let next_state = self.world.observe_state(u.id).expect("active UE");
                agent.observe(
                    Experience {
                        state,
                        next_state,
                        action,
                        reward: u.reward,
                    },
                    u.eligible,
                );
                if mode == AlgorithmMode::Ktfluc {
                    agent.train_transfer();
                } else {
                    agent.train_local();
                }
            }
        }

        if mode.federated() && self.global.is_boundary(t) {
            let push = if mode == AlgorithmMode::Ktfluc {
                PushBack::ReplaceExpert
            } else {
                PushBack::BlendLocal
            };
            let traffic: BTreeMap<UeId, TrafficType> =
                self.world.ues().iter().map(|u| (u.id, u.traffic)).collect();
            let mut members: Vec<(UeId, TrafficType, &mut UeAgent)> = self
                .agents
                .iter_mut()
                .map(|(id, a)| (*id, traffic[id], a))
                .collect();
            let round = self.global.rounds();
            self.fed_log
                .extend(self.global.federate(&mut members, self.cfg.ttis, push));
            if self.keep_snapshots {
                for g in TrafficType::ALL {
                    if let Some(m) = self.global.group(g) {
                        self.snapshots.push(GlobalSnapshot {
                            round,
                            group: g,
                            model: m.clone(),
                        });
                    }
                }
            }
        }

        for id in report.arrivals {
            let traffic = self.world.ue(id).expect("just arrived").traffic;
            self.admit(id, traffic, false);
        }
        &self.rows[first_row..]
    }

    /// Runs until the configured number of TTIs has elapsed.
    pub fn run_to_end(&mut self) {
        while self.world.tti() < self.cfg.ttis {
            self.step();
        }
    }
}
