//! Cell-centric baseline: one DQN at the controller that sees every UE.
//!
//! UEs occupy a fixed number of slots. The controller's state is the
//! concatenation of the per-UE states of all slots, each followed by a
//! validity flag (empty slots are all zeros). The network has one head of
//! `N` outputs per slot and the joint action is decoded slot by slot.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{greedy, DqnParams};
use crate::nn::{GradientTape, Mlp, Scratch};
use crate::ran::{RanWorld, UeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClParams {
    /// Number of UE slots; by default `ceil(M + 4 sqrt(M))`.
    pub slots: Option<usize>,
    pub hidden: [usize; 2],
    /// Train on the summed instead of the mean per-UE reward.
    pub sum_reward: bool,
}

impl Default for ClParams {
    fn default() -> Self {
        Self {
            slots: None,
            hidden: [64, 128],
            sum_reward: false,
        }
    }
}

impl ClParams {
    pub fn slot_count(&self, avg_ues: f64) -> usize {
        self.slots
            .unwrap_or_else(|| (avg_ues + 4.0 * avg_ues.sqrt()).ceil() as usize)
            .max(1)
    }
}

/// Mixed-radix index of a joint action, if it fits in 128 bits.
pub fn encode_joint(actions: &[usize], radix: usize) -> Option<u128> {
    let mut code: u128 = 0;
    for &a in actions.iter().rev() {
        assert!(a < radix, "action out of range");
        code = code.checked_mul(radix as u128)?.checked_add(a as u128)?;
    }
    Some(code)
}

pub fn decode_joint(mut code: u128, radix: usize, slots: usize) -> Vec<usize> {
    (0..slots)
        .map(|_| {
            let a = (code % radix as u128) as usize;
            code /= radix as u128;
            a
        })
        .collect()
}

/// Stable assignment of UEs to slots: a UE keeps its slot until it leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMap {
    slots: Vec<Option<UeId>>,
}

impl SlotMap {
    pub fn new(n: usize) -> Self {
        Self {
            slots: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Lowest free slot, or `None` if all are taken.
    pub fn assign(&mut self, id: UeId) -> Option<usize> {
        if let Some(k) = self.slot_of(id) {
            return Some(k);
        }
        let k = self.slots.iter().position(Option::is_none)?;
        self.slots[k] = Some(id);
        Some(k)
    }

    pub fn release(&mut self, id: UeId) {
        if let Some(k) = self.slot_of(id) {
            self.slots[k] = None;
        }
    }

    pub fn slot_of(&self, id: UeId) -> Option<usize> {
        self.slots.iter().position(|s| *s == Some(id))
    }

    pub fn occupant(&self, k: usize) -> Option<UeId> {
        self.slots[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralExperience {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    /// Action per slot; `None` for slots that were empty.
    pub actions: Vec<Option<usize>>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct CentralAgent {
    pub model: Mlp,
    pub params: DqnParams,
    pub cl: ClParams,
    slots: usize,
    actions: usize,
    ue_dim: usize,
    buffer: VecDeque<CentralExperience>,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    scratch: Scratch,
    next_scratch: Scratch,
    tape: GradientTape,
}

impl CentralAgent {
    pub fn new(
        slots: usize,
        ue_dim: usize,
        actions: usize,
        params: DqnParams,
        cl: ClParams,
        init_rng: &mut ChaCha8Rng,
        explore_rng: ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Self {
        let sizes = [
            slots * (ue_dim + 1),
            cl.hidden[0],
            cl.hidden[1],
            slots * actions,
        ];
        let model = Mlp::random(&sizes, init_rng).expect("valid sizes");
        let tape = GradientTape::zeros_like(&model);
        Self {
            model,
            buffer: VecDeque::with_capacity(params.buffer_capacity),
            params,
            cl,
            slots,
            actions,
            ue_dim,
            explore_rng,
            replay_rng,
            scratch: Scratch::default(),
            next_scratch: Scratch::default(),
            tape,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn state_dim(&self) -> usize {
        self.slots * (self.ue_dim + 1)
    }

    /// Cell-wide state for the current slot assignment.
    pub fn cell_state(&self, world: &RanWorld, map: &SlotMap) -> Vec<f64> {
        let mut s = vec![0.0; self.state_dim()];
        for k in 0..self.slots {
            if let Some(ue) = map.occupant(k).and_then(|id| world.observe_state(id)) {
                let base = k * (self.ue_dim + 1);
                s[base..base + self.ue_dim].copy_from_slice(&ue);
                s[base + self.ue_dim] = 1.0;
            }
        }
        s
    }

    /// Epsilon-greedy action for every occupied slot.
    pub fn select(&mut self, state: &[f64], map: &SlotMap) -> Vec<Option<usize>> {
        let q = self.model.predict_into(state, &mut self.scratch).to_vec();
        (0..self.slots)
            .map(|k| {
                map.occupant(k)?;
                let head = &q[k * self.actions..(k + 1) * self.actions];
                Some(if self.explore_rng.random::<f64>() < self.params.epsilon {
                    self.explore_rng.random_range(0..self.actions)
                } else {
                    greedy(head)
                })
            })
            .collect()
    }

    pub fn observe(&mut self, e: CentralExperience) {
        if self.buffer.len() == self.params.buffer_capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(e);
    }

    /// One SGD step; each occupied slot's head regresses on the shared
    /// reward plus its own bootstrapped value.
    pub fn train(&mut self) -> Option<f64> {
        let n = self.params.batch_size;
        if self.buffer.len() < n || n == 0 {
            return None;
        }
        let batch = index::sample(&mut self.replay_rng, self.buffer.len(), n).into_vec();
        self.tape.clear();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.slots * self.actions];
        for i in batch {
            let e = &self.buffer[i];
            let next = self
                .model
                .predict_into(&e.next_state, &mut self.next_scratch)
                .to_vec();
            let q = self.model.predict_into(&e.state, &mut self.scratch);
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (k, a) in e.actions.iter().enumerate() {
                let Some(a) = *a else { continue };
                let head = &next[k * self.actions..(k + 1) * self.actions];
                let target = e.reward + self.params.gamma * head[greedy(head)];
                let err = q[k * self.actions + a] - target;
                loss += err * err;
                grad[k * self.actions + a] = 2.0 * err;
            }
            self.model
                .accumulate(&mut self.scratch, &grad, 1.0, &mut self.tape);
        }
        self.model.sgd_step(&self.tape, self.params.learning_rate);
        Some(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn joint_action_round_trip(radix in 1usize..6, actions in proptest::collection::vec(0usize..6, 1..12)) {
            let actions: Vec<usize> = actions.into_iter().map(|a| a % radix).collect();
            let code = encode_joint(&actions, radix).unwrap();
            prop_assert_eq!(decode_joint(code, radix, actions.len()), actions);
        }
    }

    #[test]
    fn joint_codes_are_a_bijection() {
        let mut seen: Vec<u128> = (0..27)
            .map(|c| encode_joint(&decode_joint(c, 3, 3), 3).unwrap())
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..27).collect::<Vec<u128>>());
    }

    #[test]
    fn slots_are_stable_and_reused() {
        let mut m = SlotMap::new(2);
        assert_eq!(m.assign(7), Some(0));
        assert_eq!(m.assign(9), Some(1));
        assert_eq!(m.assign(11), None);
        m.release(7);
        assert_eq!(m.assign(11), Some(0));
        assert_eq!(m.slot_of(9), Some(1));
    }

    #[test]
    fn state_has_one_block_per_slot() {
        use crate::ran::ScenarioConfig;
        use crate::rng::SeedTree;
        let cfg = ScenarioConfig::default()
            .with_base_station_count(3)
            .unwrap();
        let world = RanWorld::new(cfg, 2.0, &SeedTree::new(4)).unwrap();
        let mut map = SlotMap::new(5);
        for u in world.ues() {
            map.assign(u.id);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = CentralAgent::new(
            5,
            world.state_dim(),
            3,
            DqnParams::default(),
            ClParams::default(),
            &mut rng,
            ChaCha8Rng::seed_from_u64(1),
            ChaCha8Rng::seed_from_u64(2),
        );
        let s = agent.cell_state(&world, &map);
        assert_eq!(s.len(), 5 * (world.state_dim() + 1));
        assert_eq!(agent.model.output_dim(), 15);
        let flags: Vec<f64> = (0..5).map(|k| s[k * 9 + 8]).collect();
        assert_eq!(flags, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(s[18..].iter().all(|&x| x == 0.0));
    }
}
