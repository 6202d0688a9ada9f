//! Per-UE DQN agent: replay buffer, epsilon-greedy selection, plain and
//! expert-assisted training, and federation window statistics.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{GradientTape, Mlp, Scratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnParams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Treat the bootstrapped target as a constant. With `false` the
    /// gradient also flows through the local `max_a' Q(s', a')` term.
    pub semi_gradient: bool,
}

impl Default for DqnParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            learning_rate: 0.001,
            epsilon: 0.05,
            buffer_capacity: 200,
            batch_size: 64,
            semi_gradient: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// Bounded FIFO of experiences; the oldest entry is evicted when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Distinct indices, uniformly without replacement.
    pub fn sample_indices(&self, rng: &mut impl Rng, n: usize) -> Vec<usize> {
        index::sample(rng, self.items.len(), n).into_vec()
    }
}

/// Federation indicators of one UE for one window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Indicators {
    pub mean_reward: f64,
    pub experience: f64,
    pub achievement: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct WindowStats {
    reward_sum: f64,
    eligible: u32,
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct UeAgent {
    pub local: Mlp,
    /// Frozen between federation rounds; `None` outside transfer mode.
    pub expert: Option<Mlp>,
    pub buffer: ReplayBuffer,
    pub params: DqnParams,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    window: WindowStats,
    scratch: Scratch,
    next_scratch: Scratch,
    expert_scratch: Scratch,
    tape: GradientTape,
    q: Vec<f64>,
}

impl UeAgent {
    pub fn new(
        local: Mlp,
        params: DqnParams,
        explore_rng: ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Self {
        let tape = GradientTape::zeros_like(&local);
        Self {
            buffer: ReplayBuffer::new(params.buffer_capacity),
            local,
            expert: None,
            params,
            explore_rng,
            replay_rng,
            window: WindowStats::default(),
            scratch: Scratch::default(),
            next_scratch: Scratch::default(),
            expert_scratch: Scratch::default(),
            tape,
            q: Vec::new(),
        }
    }

    pub fn actions(&self) -> usize {
        self.local.output_dim()
    }

    /// Replaces the local model, e.g. after a structural change or a copy
    /// from the global model.
    pub fn set_local(&mut self, model: Mlp) {
        self.tape = GradientTape::zeros_like(&model);
        self.local = model;
    }

    pub fn local_q(&mut self, state: &[f64]) -> Vec<f64> {
        self.local.predict_into(state, &mut self.scratch).to_vec()
    }

    /// `Q_local + Q_expert`; just `Q_local` if there is no expert.
    pub fn combined_q(&mut self, state: &[f64]) -> Vec<f64> {
        let mut q = self.local.predict_into(state, &mut self.scratch).to_vec();
        if let Some(e) = &self.expert {
            for (a, b) in q
                .iter_mut()
                .zip(e.predict_into(state, &mut self.expert_scratch))
            {
                *a += b;
            }
        }
        q
    }

    fn epsilon_greedy(&mut self, q: &[f64]) -> usize {
        // One uniform draw per decision in every mode so that seeded runs
        // stay aligned whatever the values look like.
        if self.explore_rng.random::<f64>() < self.params.epsilon {
            self.explore_rng.random_range(0..q.len())
        } else {
            greedy(q)
        }
    }

    pub fn select_action_local(&mut self, state: &[f64]) -> usize {
        let q = self.local_q(state);
        self.epsilon_greedy(&q)
    }

    /// [`UeAgent::select_action_local`] that also feeds the hidden
    /// activations into the local model's PoZ counters.
    pub fn select_action_recording_poz(&mut self, state: &[f64]) -> usize {
        let q = self.local.predict_into(state, &mut self.scratch).to_vec();
        self.local.record_poz(&self.scratch);
        self.epsilon_greedy(&q)
    }

    pub fn select_action_transfer(&mut self, state: &[f64]) -> usize {
        let q = self.combined_q(state);
        self.epsilon_greedy(&q)
    }

    /// Stores an experience and updates the window statistics.
    pub fn observe(&mut self, e: Experience, eligible: bool) {
        self.window.reward_sum += e.reward;
        if eligible {
            self.window.eligible += 1;
        }
        self.buffer.push(e);
    }

    /// Returns the indicators of the window that just ended and resets it.
    /// Reward and achievement are averaged over `fed_interval` TTIs, the
    /// experience count is taken relative to `t_total`.
    pub fn window_indicators(&mut self, fed_interval: u64, t_total: u64) -> Indicators {
        let w = std::mem::take(&mut self.window);
        Indicators {
            mean_reward: w.reward_sum / fed_interval as f64,
            experience: self.buffer.len() as f64 / t_total.max(1) as f64,
            achievement: f64::from(w.eligible) / fed_interval as f64,
        }
    }

    /// One SGD step on a minibatch with target `r + gamma * max Q(s')`.
    /// Returns the summed squared error, or `None` if the buffer is too
    /// small to fill a batch.
    pub fn train_local(&mut self) -> Option<f64> {
        self.train(false)
    }

    /// Like [`UeAgent::train_local`], but on the expert-assisted loss
    /// `(Q_l(s,a) + Q_e(s,a) - 2r - gamma * max[Q_l(s') + Q_e(s')])^2`.
    /// Only the local model moves.
    pub fn train_transfer(&mut self) -> Option<f64> {
        assert!(
            self.expert.is_some(),
            "transfer training needs an expert model"
        );
        self.train(true)
    }

    fn train(&mut self, transfer: bool) -> Option<f64> {
        let n = self.params.batch_size;
        if self.buffer.len() < n || n == 0 {
            return None;
        }
        let batch = self.buffer.sample_indices(&mut self.replay_rng, n);
        let loss = self.accumulate_batch(&batch, transfer);
        self.local.sgd_step(&self.tape, self.params.learning_rate);
        Some(loss)
    }

    /// Fills `self.tape` with the loss gradient over the given buffer
    /// entries and returns the loss.
    fn accumulate_batch(&mut self, batch: &[usize], transfer: bool) -> f64 {
        self.tape.clear();
        let gamma = self.params.gamma;
        let mut loss = 0.0;
        let expert = if transfer { self.expert.as_ref() } else { None };
        let outputs = self.local.output_dim();
        self.q.resize(outputs, 0.0);
        let mut grad = vec![0.0; outputs];
        for &i in batch {
            let e = self.buffer.get(i);

            // Bootstrapped part of the target.
            self.q.copy_from_slice(
                self.local
                    .predict_into(&e.next_state, &mut self.next_scratch),
            );
            if let Some(x) = expert {
                for (a, b) in self
                    .q
                    .iter_mut()
                    .zip(x.predict_into(&e.next_state, &mut self.expert_scratch))
                {
                    *a += b;
                }
            }
            let best = greedy(&self.q);
            let mut target = gamma * self.q[best];
            let mut current = self.local.predict_into(&e.state, &mut self.scratch)[e.action];
            if let Some(x) = expert {
                target += 2.0 * e.reward;
                current += x.predict_into(&e.state, &mut self.expert_scratch)[e.action];
            } else {
                target += e.reward;
            }

            let err = current - target;
            loss += err * err;
            grad[e.action] = 2.0 * err;
            self.local
                .accumulate(&mut self.scratch, &grad, 1.0, &mut self.tape);
            grad[e.action] = 0.0;
            if !self.params.semi_gradient {
                grad[best] = -2.0 * gamma * err;
                self.local
                    .accumulate(&mut self.next_scratch, &grad, 1.0, &mut self.tape);
                grad[best] = 0.0;
            }
        }
        loss
    }

    /// Loss and gradient over `batch`, in order, without stepping.
    pub fn loss_gradient(&mut self, batch: &[Experience], transfer: bool) -> (f64, GradientTape) {
        let mut buffer = ReplayBuffer::new(batch.len());
        for e in batch {
            buffer.push(e.clone());
        }
        let saved = std::mem::replace(&mut self.buffer, buffer);
        let order: Vec<usize> = (0..batch.len()).collect();
        let loss = self.accumulate_batch(&order, transfer && self.expert.is_some());
        self.buffer = saved;
        (loss, self.tape.clone())
    }
}

/// Summed squared error of `model` on `batch` with targets computed from
/// `target_model` (and optional expert). Reference implementation used by
/// tests and diagnostics; allocates freely.
pub fn batch_loss(
    model: &Mlp,
    target_model: &Mlp,
    expert: Option<&Mlp>,
    gamma: f64,
    batch: &[Experience],
) -> f64 {
    batch
        .iter()
        .map(|e| {
            let mut next = target_model.predict(&e.next_state).expect("state dim");
            let mut cur = model.predict(&e.state).expect("state dim")[e.action];
            let mut r = e.reward;
            if let Some(x) = expert {
                for (a, b) in next
                    .iter_mut()
                    .zip(x.predict(&e.next_state).expect("state dim"))
                {
                    *a += b;
                }
                cur += x.predict(&e.state).expect("state dim")[e.action];
                r *= 2.0;
            }
            let y = r + gamma * next[greedy(&next)];
            (cur - y).powi(2)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn agent(sizes: &[usize], seed: u64, params: DqnParams) -> UeAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mlp::random(sizes, &mut rng).unwrap();
        UeAgent::new(
            m,
            params,
            ChaCha8Rng::seed_from_u64(seed + 1),
            ChaCha8Rng::seed_from_u64(seed + 2),
        )
    }

    fn no_explore() -> DqnParams {
        DqnParams {
            epsilon: 0.0,
            ..DqnParams::default()
        }
    }

    #[test]
    fn greedy_breaks_ties_low() {
        assert_eq!(greedy(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(greedy(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn epsilon_zero_is_argmax() {
        let mut a = agent(&[3, 4, 4, 3], 1, no_explore());
        for k in 0..20 {
            let s = [k as f64 * 0.1, -0.3, 0.7];
            let q = a.local.predict(&s).unwrap();
            assert_eq!(a.select_action_local(&s), greedy(&q));
        }
    }

    #[test]
    fn zero_q_picks_first_bs() {
        let mut a = UeAgent::new(
            Mlp::zeros(&[2, 2, 2, 4]).unwrap(),
            no_explore(),
            ChaCha8Rng::seed_from_u64(0),
            ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(a.select_action_local(&[0.3, 0.1]), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let params = DqnParams {
            epsilon: 1.0,
            ..DqnParams::default()
        };
        let mut a = agent(&[2, 3, 3, 4], 5, params);
        let mut counts = [0u32; 4];
        for _ in 0..10_000 {
            counts[a.select_action_local(&[0.5, 0.5])] += 1;
        }
        // Binomial(10 000, 1/4): sigma = 43.3.
        for c in counts {
            assert!((f64::from(c) - 2500.0).abs() < 3.0 * 43.3, "{counts:?}");
        }
    }

    #[test]
    fn transfer_with_zero_expert_matches_local_choice() {
        let mut a = agent(&[3, 4, 4, 3], 2, no_explore());
        a.expert = Some(Mlp::zeros(&[3, 4, 4, 3]).unwrap());
        for k in 0..20 {
            let s = [0.2, k as f64 * -0.05, 0.4];
            let q = a.local.predict(&s).unwrap();
            assert_eq!(a.select_action_transfer(&s), greedy(&q));
        }
    }

    #[test]
    fn transfer_follows_expert_when_local_is_zero() {
        let mut a = UeAgent::new(
            Mlp::zeros(&[3, 4, 4, 3]).unwrap(),
            no_explore(),
            ChaCha8Rng::seed_from_u64(0),
            ChaCha8Rng::seed_from_u64(0),
        );
        let e = Mlp::random(&[3, 4, 4, 3], &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        a.expert = Some(e.clone());
        let s = [0.9, -0.1, 0.3];
        assert_eq!(
            a.select_action_transfer(&s),
            greedy(&e.predict(&s).unwrap())
        );
    }

    #[test]
    fn transfer_sum_overrides_local_argmax() {
        // Local prefers action 1, expert prefers action 2, the sum prefers 2.
        let mut local = Mlp::zeros(&[1, 2, 2, 3]).unwrap();
        local.set_bias(3, 0, 0.0);
        local.set_bias(3, 1, 1.0);
        local.set_bias(3, 2, 0.6);
        let mut expert = Mlp::zeros(&[1, 2, 2, 3]).unwrap();
        expert.set_bias(3, 0, 0.1);
        expert.set_bias(3, 1, 0.0);
        expert.set_bias(3, 2, 0.7);
        let mut a = UeAgent::new(
            local,
            no_explore(),
            ChaCha8Rng::seed_from_u64(0),
            ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(a.select_action_local(&[0.0]), 1);
        a.expert = Some(expert);
        assert_eq!(a.select_action_transfer(&[0.0]), 2);
    }

    #[test]
    fn small_buffer_skips_training() {
        let mut a = agent(&[2, 3, 3, 2], 3, DqnParams::default());
        let before = a.local.clone();
        a.observe(
            Experience {
                state: vec![0.0, 1.0],
                next_state: vec![1.0, 0.0],
                action: 0,
                reward: 1.0,
            },
            true,
        );
        assert_eq!(a.train_local(), None);
        assert_eq!(a.local, before);
    }

    #[test]
    fn gamma_zero_regresses_to_reward() {
        let params = DqnParams {
            gamma: 0.0,
            batch_size: 1,
            buffer_capacity: 1,
            learning_rate: 0.01,
            ..no_explore()
        };
        let mut a = agent(&[2, 4, 4, 2], 4, params);
        let s = vec![0.5, -0.5];
        a.observe(
            Experience {
                state: s.clone(),
                next_state: s.clone(),
                action: 1,
                reward: 0.7,
            },
            false,
        );
        for _ in 0..5000 {
            let loss = a.train_local().unwrap();
            assert!(loss >= 0.0);
        }
        assert!((a.local.predict(&s).unwrap()[1] - 0.7).abs() < 1e-3);
    }

    #[test]
    fn zero_expert_transfer_gradient_is_local_gradient_with_doubled_reward() {
        let mut a = agent(&[3, 5, 6, 3], 6, DqnParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let batch: Vec<Experience> = (0..16)
            .map(|_| Experience {
                state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                next_state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: rng.random_range(0..3),
                reward: rng.random_range(0.0..1.0),
            })
            .collect();
        let doubled: Vec<Experience> = batch
            .iter()
            .map(|e| Experience {
                reward: 2.0 * e.reward,
                ..e.clone()
            })
            .collect();
        let (_, local) = a.loss_gradient(&doubled, false);
        a.expert = Some(Mlp::zeros(&[3, 5, 6, 3]).unwrap());
        let (_, transfer) = a.loss_gradient(&batch, true);
        assert_eq!(local.flat(), transfer.flat());
    }

    #[test]
    fn expert_never_moves_during_transfer_training() {
        let mut a = agent(&[3, 4, 4, 2], 9, DqnParams::default());
        let e = Mlp::random(&[3, 4, 4, 2], &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        a.expert = Some(e.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            a.observe(
                Experience {
                    state: (0..3).map(|_| rng.random()).collect(),
                    next_state: (0..3).map(|_| rng.random()).collect(),
                    action: rng.random_range(0..2),
                    reward: rng.random(),
                },
                true,
            );
            a.train_transfer();
        }
        assert_eq!(a.expert.as_ref().unwrap().flat_params(), e.flat_params());
        assert_ne!(
            a.local.flat_params(),
            Mlp::random(&[3, 4, 4, 2], &mut ChaCha8Rng::seed_from_u64(9))
                .unwrap()
                .flat_params()
        );
    }

    #[test]
    fn window_indicator_arithmetic() {
        let mut a = agent(&[1, 2, 2, 1], 0, DqnParams::default());
        for r in [0.2, 0.4, 0.6] {
            a.observe(
                Experience {
                    state: vec![0.0],
                    next_state: vec![0.0],
                    action: 0,
                    reward: r,
                },
                false,
            );
        }
        let w = a.window_indicators(3, 30);
        assert!((w.mean_reward - 0.4).abs() < 1e-12);
        assert_eq!(w.achievement, 0.0);
        assert!((w.experience - 0.1).abs() < 1e-12);
        // Window resets; the buffer does not.
        let w = a.window_indicators(3, 30);
        assert_eq!(w.mean_reward, 0.0);
        assert!((w.experience - 0.1).abs() < 1e-12);
    }

    #[test]
    fn replay_buffer_is_bounded_fifo() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(Experience {
                state: vec![],
                next_state: vec![],
                action: k,
                reward: 0.0,
            });
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.get(0).action, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = b.sample_indices(&mut rng, 3);
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2]);
    }
}
