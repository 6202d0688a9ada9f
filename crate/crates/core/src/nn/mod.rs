//! Small fully connected ReLU network used as the Q-function approximator.
//!
//! Layout follows the usual `N_0 -> N_1 -> ... -> N_out` convention. Layer
//! `i` (1-based, counting the input as layer 0) owns a weight matrix of
//! shape `N_{i-1} x N_i` stored row-major, so `weights[l * N_i + j]` is the
//! weight from input `l` into neuron `j`. Hidden layers use ReLU, the output
//! layer is linear.
//!
//! Besides forward/backward the model keeps per-hidden-neuron zero-activation
//! counters (PoZ) and supports structural edits: splitting a neuron into two
//! output-preserving children and pruning a neuron away.

mod snapshot;

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_TAG};

use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};

/// Minimum width of a hidden layer.
pub const HIDDEN_FLOOR: usize = 2;

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// `out = b + x W`.
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (l, &xl) in x.iter().enumerate() {
            if xl == 0.0 {
                continue;
            }
            let row = &self.weights[l * self.outputs..(l + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xl * w;
            }
        }
    }

    fn remove_output(&mut self, j: usize) {
        let mut weights = Vec::with_capacity(self.inputs * (self.outputs - 1));
        for l in 0..self.inputs {
            let row = &self.weights[l * self.outputs..(l + 1) * self.outputs];
            weights.extend(
                row.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, &w)| w),
            );
        }
        self.weights = weights;
        self.biases.remove(j);
        self.outputs -= 1;
    }

    fn remove_input(&mut self, l: usize) {
        self.weights.drain(l * self.outputs..(l + 1) * self.outputs);
        self.inputs -= 1;
    }
}

/// Zero/total activation counts of one hidden layer.
#[derive(Debug, Clone, Default, PartialEq)]
struct PozCounter {
    zeros: Vec<u64>,
    total: Vec<u64>,
}

impl PozCounter {
    fn new(width: usize) -> Self {
        Self {
            zeros: vec![0; width],
            total: vec![0; width],
        }
    }
}

/// Feed-forward ReLU network with a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    poz: Vec<PozCounter>,
}

/// Per-parameter gradients, laid out exactly like the model they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Reusable buffers for forward/backward passes.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Scratch {
    /// Output of the last forward pass run through this scratch.
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::Config(format!(
            "a network needs at least one hidden layer, got sizes {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive, got {sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        let poz = sizes[1..sizes.len() - 1]
            .iter()
            .map(|&w| PozCounter::new(w))
            .collect();
        Ok(Self { layers, poz })
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(sizes)?;
        for layer in &mut model.layers {
            let limit = 1.0 / (layer.inputs as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for w in &mut layer.weights {
                *w = dist.sample(rng);
            }
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.layers.len() + 1);
        sizes.push(self.layers[0].inputs);
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least two layers").outputs
    }

    /// Number of hidden layers.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Width of hidden layer `layer` (1-based).
    pub fn hidden_width(&self, layer: usize) -> Result<usize> {
        self.check_hidden(layer)?;
        Ok(self.layers[layer - 1].outputs)
    }

    /// Sum of all hidden widths.
    pub fn hidden_neurons(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Weight from input `l` into neuron `j` of layer `layer` (1-based).
    pub fn weight(&self, layer: usize, l: usize, j: usize) -> f64 {
        let d = &self.layers[layer - 1];
        d.weights[l * d.outputs + j]
    }

    pub fn set_weight(&mut self, layer: usize, l: usize, j: usize, value: f64) {
        let d = &mut self.layers[layer - 1];
        d.weights[l * d.outputs + j] = value;
    }

    pub fn bias(&self, layer: usize, j: usize) -> f64 {
        self.layers[layer - 1].biases[j]
    }

    pub fn set_bias(&mut self, layer: usize, j: usize, value: f64) {
        self.layers[layer - 1].biases[j] = value;
    }

    /// Parameters flattened layer by layer, weights then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Dimension {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    fn check_hidden(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer >= self.layers.len() {
            return Err(Error::InvalidIndex(format!(
                "layer {layer} is not a hidden layer (hidden layers are 1..={})",
                self.layers.len() - 1
            )));
        }
        Ok(())
    }

    fn check_neuron(&self, layer: usize, neuron: usize) -> Result<()> {
        self.check_hidden(layer)?;
        let width = self.layers[layer - 1].outputs;
        if neuron >= width {
            return Err(Error::InvalidIndex(format!(
                "neuron {neuron} out of range for layer {layer} of width {width}"
            )));
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the network. With `record_poz` every hidden neuron's
    /// zero/total counters are bumped once.
    pub fn forward(&mut self, input: &[f64], record_poz: bool) -> Result<Vec<f64>> {
        let mut scratch = Scratch::default();
        self.check_input(input)?;
        self.run(input, &mut scratch);
        if record_poz {
            self.record_poz(&scratch);
        }
        Ok(scratch.output().to_vec())
    }

    /// Forward pass without touching the PoZ counters.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut scratch = Scratch::default();
        self.run(input, &mut scratch);
        Ok(scratch.output().to_vec())
    }

    /// Forward pass into caller-owned buffers; returns the output slice.
    /// Panics if `input` has the wrong length.
    pub fn predict_into<'s>(&self, input: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        assert_eq!(input.len(), self.input_dim(), "input dimension");
        self.run(input, scratch);
        scratch.output()
    }

    fn run(&self, input: &[f64], scratch: &mut Scratch) {
        let n = self.layers.len();
        scratch.acts.resize_with(n + 1, Vec::new);
        scratch.acts[0].clear();
        scratch.acts[0].extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, todo) = scratch.acts.split_at_mut(i + 1);
            let out = &mut todo[0];
            layer.affine(&done[i], out);
            if i + 1 < n {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Bumps PoZ counters from the activations of the last pass in `scratch`.
    pub fn record_poz(&mut self, scratch: &Scratch) {
        for (h, counter) in self.poz.iter_mut().enumerate() {
            for (j, &a) in scratch.acts[h + 1].iter().enumerate() {
                counter.total[j] += 1;
                if a <= 0.0 {
                    counter.zeros[j] += 1;
                }
            }
        }
    }

    /// Exact gradient of `output_grad . f(input)` with respect to every
    /// parameter.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<GradientTape> {
        self.check_input(input)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        let mut scratch = Scratch::default();
        let mut tape = GradientTape::zeros_like(self);
        self.run(input, &mut scratch);
        self.accumulate(&mut scratch, output_grad, 1.0, &mut tape);
        Ok(tape)
    }

    /// Adds `scale * d(output_grad . f)/d theta` to `tape`, using the
    /// activations already stored in `scratch` by [`Mlp::predict_into`].
    pub fn accumulate(
        &self,
        scratch: &mut Scratch,
        output_grad: &[f64],
        scale: f64,
        tape: &mut GradientTape,
    ) {
        let Scratch {
            acts,
            delta,
            next_delta,
        } = scratch;
        delta.clear();
        delta.extend(output_grad.iter().map(|g| g * scale));
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &acts[i];
            let gw = &mut tape.weights[i];
            for (db, &d) in tape.biases[i].iter_mut().zip(delta.iter()) {
                *db += d;
            }
            for (l, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &mut gw[l * layer.outputs..(l + 1) * layer.outputs];
                for (g, &d) in row.iter_mut().zip(delta.iter()) {
                    *g += a * d;
                }
            }
            if i == 0 {
                break;
            }
            next_delta.clear();
            for (l, &a) in input.iter().enumerate() {
                // ReLU derivative, taken as 0 at the kink.
                if a <= 0.0 {
                    next_delta.push(0.0);
                    continue;
                }
                let row = &layer.weights[l * layer.outputs..(l + 1) * layer.outputs];
                next_delta.push(row.iter().zip(delta.iter()).map(|(w, d)| w * d).sum());
            }
            std::mem::swap(delta, next_delta);
        }
    }

    /// Plain gradient descent: `theta -= learning_rate * grad`.
    pub fn sgd_step(&mut self, tape: &GradientTape, learning_rate: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&tape.weights[i]) {
                *w -= learning_rate * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&tape.biases[i]) {
                *b -= learning_rate * g;
            }
        }
    }

    /// `self = (1 - rate) * self + rate * other`, parameter-wise.
    pub fn blend_toward(&mut self, other: &Mlp, rate: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Config(format!(
                "cannot blend {:?} with {:?}",
                self.layer_sizes(),
                other.layer_sizes()
            )));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x = (1.0 - rate) * *x + rate * y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x = (1.0 - rate) * *x + rate * y;
            }
        }
        Ok(())
    }

    /// Parameter-wise `sum_k weight_k * model_k`. All models must share a shape.
    pub fn weighted_sum(models: &[(&Mlp, f64)]) -> Result<Mlp> {
        let (first, _) = models
            .first()
            .ok_or_else(|| Error::Config("weighted sum of zero models".into()))?;
        let mut acc = Mlp::zeros(&first.layer_sizes())?;
        for (model, w) in models {
            if !acc.same_shape(model) {
                return Err(Error::Config(format!(
                    "shape {:?} differs from {:?}",
                    model.layer_sizes(),
                    first.layer_sizes()
                )));
            }
            for (a, b) in acc.layers.iter_mut().zip(&model.layers) {
                for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                    *x += w * y;
                }
                for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                    *x += w * y;
                }
            }
        }
        Ok(acc)
    }

    /// Fraction of recorded activations of a hidden neuron that were zero.
    pub fn poz(&self, layer: usize, neuron: usize) -> Result<f64> {
        self.check_neuron(layer, neuron)?;
        let c = &self.poz[layer - 1];
        if c.total[neuron] == 0 {
            return Err(Error::EmptyPozWindow { layer, neuron });
        }
        Ok(c.zeros[neuron] as f64 / c.total[neuron] as f64)
    }

    /// Activations recorded for a hidden neuron in the current window.
    pub fn poz_samples(&self, layer: usize, neuron: usize) -> Result<u64> {
        self.check_neuron(layer, neuron)?;
        Ok(self.poz[layer - 1].total[neuron])
    }

    pub fn reset_poz(&mut self) {
        for c in &mut self.poz {
            c.zeros.iter_mut().for_each(|z| *z = 0);
            c.total.iter_mut().for_each(|t| *t = 0);
        }
    }

    /// Splits neuron `neuron` of hidden layer `layer` into two children at
    /// positions `neuron` and `neuron + 1`. Incoming weights (and the bias)
    /// are divided as `delta` / `1 - delta`; both children inherit the
    /// parent's outgoing weights, so the network function is unchanged.
    pub fn split_neuron(&mut self, layer: usize, neuron: usize, delta: f64) -> Result<()> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidDelta(delta));
        }
        self.check_neuron(layer, neuron)?;
        let j = neuron;

        let incoming = &mut self.layers[layer - 1];
        let old_out = incoming.outputs;
        let mut weights = Vec::with_capacity(incoming.inputs * (old_out + 1));
        for l in 0..incoming.inputs {
            let row = &incoming.weights[l * old_out..(l + 1) * old_out];
            weights.extend_from_slice(&row[..j]);
            weights.push(delta * row[j]);
            weights.push((1.0 - delta) * row[j]);
            weights.extend_from_slice(&row[j + 1..]);
        }
        incoming.weights = weights;
        let b = incoming.biases[j];
        incoming.biases[j] = delta * b;
        incoming.biases.insert(j + 1, (1.0 - delta) * b);
        incoming.outputs += 1;

        let outgoing = &mut self.layers[layer];
        let k = outgoing.outputs;
        let row: Vec<f64> = outgoing.weights[j * k..(j + 1) * k].to_vec();
        outgoing.weights.splice((j + 1) * k..(j + 1) * k, row);
        outgoing.inputs += 1;

        let c = &mut self.poz[layer - 1];
        c.zeros.insert(j + 1, c.zeros[j]);
        c.total.insert(j + 1, c.total[j]);
        Ok(())
    }

    /// Removes neuron `neuron` of hidden layer `layer` together with its
    /// incoming column and outgoing row.
    pub fn prune_neuron(&mut self, layer: usize, neuron: usize) -> Result<()> {
        self.check_neuron(layer, neuron)?;
        let width = self.layers[layer - 1].outputs;
        if width <= HIDDEN_FLOOR {
            return Err(Error::PruneFloor { layer, width });
        }
        self.layers[layer - 1].remove_output(neuron);
        self.layers[layer].remove_input(neuron);
        let c = &mut self.poz[layer - 1];
        c.zeros.remove(neuron);
        c.total.remove(neuron);
        Ok(())
    }
}

impl GradientTape {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        self.weights.iter_mut().flatten().for_each(|g| *g = 0.0);
        self.biases.iter_mut().flatten().for_each(|g| *g = 0.0);
    }

    /// Same ordering as [`Mlp::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// True when the tape was produced for a model of this shape.
    pub fn matches(&self, model: &Mlp) -> bool {
        self.weights.len() == model.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&model.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }

    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .all(|&g| g == 0.0)
    }
}
