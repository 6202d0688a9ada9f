//! Grow-then-prune model sizing driven by per-neuron PoZ statistics.
//!
//! While growing, every window ends by splitting the most active neuron
//! (lowest PoZ) of each hidden layer. Once the window reward has failed to
//! improve for `n_required` consecutive windows the schedule switches to
//! pruning, removing the least active neuron (highest PoZ) per window until
//! both hidden layers are at the floor. The reward observed at every size
//! during pruning yields the effectiveness curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, HIDDEN_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionParams {
    pub split_interval_tti: u64,
    pub n_required: u32,
    /// Share of the parent's incoming weights kept by the first child.
    pub delta: f64,
    /// Count only strict declines (instead of any non-improvement) towards
    /// the plateau.
    pub strict_decline: bool,
    /// Absolute tolerance when comparing window rewards.
    pub tolerance: f64,
    /// Hidden widths the growing phase starts from.
    pub initial_hidden: [usize; 2],
    /// Restart the pre-simulation environment from the same seed at every
    /// window, so window rewards differ only through the model.
    pub replay_environment: bool,
    /// TTI budget of the pre-simulation.
    pub max_ttis: u64,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            split_interval_tti: 300,
            n_required: 3,
            delta: 0.5,
            strict_decline: false,
            tolerance: 1e-6,
            initial_hidden: [2, 2],
            replay_environment: true,
            max_ttis: 400_000,
        }
    }
}

impl CompressionParams {
    pub fn validate(&self) -> Result<()> {
        if self.split_interval_tti == 0 || self.n_required == 0 {
            return Err(Error::Config(
                "split interval and plateau length must be positive".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        if self.initial_hidden.iter().any(|&w| w < HIDDEN_FLOOR) {
            return Err(Error::Config(format!(
                "initial hidden widths must be at least {HIDDEN_FLOOR}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Growing,
    Pruning,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Split,
    Prune,
    /// Plateau detected; the schedule switches to pruning.
    Switch,
    /// Both layers reached the floor.
    Finish,
}

/// One row of the compression history CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionEvent {
    pub event_tti: u64,
    pub phase: Phase,
    pub kind: EventKind,
    pub layer: Option<usize>,
    pub neuron: Option<usize>,
    pub poz: Option<f64>,
    /// Hidden widths after the event.
    pub n1: usize,
    pub n2: usize,
    pub window_reward: f64,
    pub plateau_counter: u32,
}

/// Mean window reward observed at a given model size while pruning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub n1: usize,
    pub n2: usize,
    pub reward: f64,
}

impl SizePoint {
    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessPoint {
    pub total_neurons: usize,
    pub effectiveness: f64,
    pub compression_rate: f64,
}

#[derive(Debug, Clone)]
pub struct CompressionSchedule {
    pub params: CompressionParams,
    phase: Phase,
    counter: u32,
    window_sum: f64,
    window_count: u64,
    previous: Option<f64>,
    history: Vec<SizePoint>,
    events: Vec<CompressionEvent>,
}

fn widths(model: &Mlp) -> (usize, usize) {
    let s = model.layer_sizes();
    (s[1], s[2])
}

impl CompressionSchedule {
    pub fn new(params: CompressionParams) -> Self {
        Self {
            params,
            phase: Phase::Growing,
            counter: 0,
            window_sum: 0.0,
            window_count: 0,
            previous: None,
            history: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn plateau_counter(&self) -> u32 {
        self.counter
    }

    pub fn history(&self) -> &[SizePoint] {
        &self.history
    }

    pub fn events(&self) -> &[CompressionEvent] {
        &self.events
    }

    pub fn record_reward(&mut self, reward: f64) {
        self.window_sum += reward;
        self.window_count += 1;
    }

    /// Updates the non-improvement counter with the reward of the window
    /// that just ended and returns the resulting phase.
    pub fn plateau_check(&mut self, window_reward: f64) -> Phase {
        if self.phase != Phase::Growing {
            return self.phase;
        }
        let stalled = match self.previous {
            None => false,
            Some(prev) if self.params.strict_decline => {
                window_reward < prev - self.params.tolerance
            }
            Some(prev) => window_reward <= prev + self.params.tolerance,
        };
        self.counter = if stalled { self.counter + 1 } else { 0 };
        self.previous = Some(window_reward);
        if self.counter >= self.params.n_required {
            self.phase = Phase::Pruning;
        }
        self.phase
    }

    /// Splits the lowest-PoZ neuron of every hidden layer. Returns
    /// `(layer, neuron, poz)` per split.
    pub fn grow_step(&self, model: &mut Mlp) -> Result<Vec<(usize, usize, f64)>> {
        let mut done = Vec::new();
        for layer in 1..=model.hidden_layers() {
            let (j, p) = select(model, layer, |a, b| a < b)?;
            model.split_neuron(layer, j, self.params.delta)?;
            done.push((layer, j, p));
        }
        model.reset_poz();
        Ok(done)
    }

    /// Prunes the highest-PoZ neuron over all hidden layers still above the
    /// floor. Returns `None` if every layer is at the floor.
    pub fn prune_step(&self, model: &mut Mlp) -> Result<Option<(usize, usize, f64)>> {
        let mut best: Option<(usize, usize, f64)> = None;
        for layer in 1..=model.hidden_layers() {
            if model.hidden_width(layer)? <= HIDDEN_FLOOR {
                continue;
            }
            let (j, p) = select(model, layer, |a, b| a > b)?;
            if best.is_none_or(|(_, _, q)| p > q) {
                best = Some((layer, j, p));
            }
        }
        if let Some((layer, j, _)) = best {
            model.prune_neuron(layer, j)?;
        }
        model.reset_poz();
        Ok(best)
    }

    /// Closes the current window at `tti`, applying whatever structural
    /// change the schedule calls for. Returns the events emitted.
    pub fn end_window(&mut self, model: &mut Mlp, tti: u64) -> Result<Vec<CompressionEvent>> {
        let reward = if self.window_count > 0 {
            self.window_sum / self.window_count as f64
        } else {
            0.0
        };
        self.window_sum = 0.0;
        self.window_count = 0;
        let start = self.events.len();
        let event = |phase, kind, op: Option<(usize, usize, f64)>, model: &Mlp, counter| {
            let (n1, n2) = widths(model);
            CompressionEvent {
                event_tti: tti,
                phase,
                kind,
                layer: op.map(|o| o.0),
                neuron: op.map(|o| o.1),
                poz: op.map(|o| o.2),
                n1,
                n2,
                window_reward: reward,
                plateau_counter: counter,
            }
        };
        if self.phase == Phase::Growing {
            if self.plateau_check(reward) == Phase::Growing {
                for op in self.grow_step(model)? {
                    self.events.push(event(
                        Phase::Growing,
                        EventKind::Split,
                        Some(op),
                        model,
                        self.counter,
                    ));
                }
            } else {
                self.events.push(event(
                    Phase::Pruning,
                    EventKind::Switch,
                    None,
                    model,
                    self.counter,
                ));
            }
        }
        if self.phase == Phase::Pruning {
            let (n1, n2) = widths(model);
            self.history.push(SizePoint { n1, n2, reward });
            match self.prune_step(model)? {
                Some(op) => self.events.push(event(
                    Phase::Pruning,
                    EventKind::Prune,
                    Some(op),
                    model,
                    self.counter,
                )),
                None => {
                    self.phase = Phase::Done;
                    self.events.push(event(
                        Phase::Done,
                        EventKind::Finish,
                        None,
                        model,
                        self.counter,
                    ));
                }
            }
        }
        Ok(self.events[start..].to_vec())
    }
}

/// Neuron of `layer` whose PoZ wins under `better`; lowest index on ties.
fn select(model: &Mlp, layer: usize, better: impl Fn(f64, f64) -> bool) -> Result<(usize, f64)> {
    let mut best = (0, model.poz(layer, 0)?);
    for j in 1..model.hidden_width(layer)? {
        let p = model.poz(layer, j)?;
        if better(p, best.1) {
            best = (j, p);
        }
    }
    Ok(best)
}

/// Reward at each size relative to the best size, and the compression
/// rate relative to the largest size seen.
pub fn effectiveness(history: &[SizePoint]) -> Vec<EffectivenessPoint> {
    let best = history
        .iter()
        .map(|p| p.reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let peak = history.iter().map(SizePoint::total).max().unwrap_or(0);
    history
        .iter()
        .map(|p| EffectivenessPoint {
            total_neurons: p.total(),
            effectiveness: if best > 0.0 { p.reward / best } else { 0.0 },
            compression_rate: peak as f64 / p.total() as f64,
        })
        .collect()
}

/// Smallest size whose effectiveness, and that of every larger size, stays
/// at or above `level`. `None` if the largest size already falls short.
pub fn compression_threshold(
    curve: &[EffectivenessPoint],
    level: f64,
) -> Option<EffectivenessPoint> {
    let mut sorted = curve.to_vec();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.total_neurons));
    let mut last = None;
    for p in sorted {
        if p.effectiveness < level {
            break;
        }
        last = Some(p);
    }
    last
}

/// Centred moving average of effectiveness over `2 * half_width + 1`
/// neighbouring sizes (fewer at the ends). Sizes and rates are kept.
pub fn smooth_effectiveness(
    curve: &[EffectivenessPoint],
    half_width: usize,
) -> Vec<EffectivenessPoint> {
    let mut sorted = curve.to_vec();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.total_neurons));
    (0..sorted.len())
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width + 1).min(sorted.len());
            let mean =
                sorted[lo..hi].iter().map(|p| p.effectiveness).sum::<f64>() / (hi - lo) as f64;
            EffectivenessPoint {
                effectiveness: mean,
                ..sorted[i]
            }
        })
        .collect()
}
