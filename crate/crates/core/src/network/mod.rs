//! Residual trial-function networks.
//!
//! A network is a stack of blocks. Each block holds two fully connected
//! layers of width `N` with activation `tanh(a_l * z)` and adds its input to
//! its output. The two-dimensional input is zero-padded to width `N` before the
//! first block, and a final affine map with bias produces the scalar output.
//!
//! Parameters live in a flat vector ([`ParamSet`]). For hidden layer `l` the
//! layout is the weight matrix `W` (row `i` = input neuron, column `j` =
//! output neuron), then the bias `b`, then the slope `a_l` when adaptive
//! activations are enabled. The output weights and the output bias follow the
//! last hidden layer.

mod batch;

pub use batch::{backward, forward as forward_batch, forward_cached, BatchCache, BatchOutput};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ExprGraph, NodeId};
use crate::error::{Error, Result};

/// Architecture of one trial-function network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    pub blocks: usize,
    pub neurons: usize,
    pub adaptive_activations: bool,
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
}

fn default_input_dim() -> usize {
    2
}

fn default_output_dim() -> usize {
    1
}

impl NetworkConfig {
    pub fn new(blocks: usize, neurons: usize, adaptive_activations: bool) -> Self {
        Self {
            input_dim: 2,
            blocks,
            neurons,
            adaptive_activations,
            output_dim: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 2 {
            return Err(Error::Config(format!(
                "input_dim must be 2, got {}",
                self.input_dim
            )));
        }
        if self.output_dim != 1 {
            return Err(Error::Config(format!(
                "output_dim must be 1, got {}",
                self.output_dim
            )));
        }
        if self.blocks == 0 {
            return Err(Error::Config("blocks must be at least 1".into()));
        }
        if self.neurons < self.input_dim {
            return Err(Error::Config(format!(
                "neurons ({}) must be at least input_dim ({})",
                self.neurons, self.input_dim
            )));
        }
        Ok(())
    }

    pub fn hidden_layers(&self) -> usize {
        2 * self.blocks
    }

    /// Scalars stored per hidden layer.
    pub fn layer_stride(&self) -> usize {
        let n = self.neurons;
        n * n + n + usize::from(self.adaptive_activations)
    }

    pub fn weight_offset(&self, layer: usize) -> usize {
        layer * self.layer_stride()
    }

    pub fn bias_offset(&self, layer: usize) -> usize {
        self.weight_offset(layer) + self.neurons * self.neurons
    }

    /// Offset of the slope of `layer`, if slopes are trainable.
    pub fn slope_offset(&self, layer: usize) -> Option<usize> {
        self.adaptive_activations
            .then(|| self.bias_offset(layer) + self.neurons)
    }

    pub fn output_offset(&self) -> usize {
        self.hidden_layers() * self.layer_stride()
    }
}

/// Exact number of trainable scalars of a network.
pub fn count_parameters(config: &NetworkConfig) -> usize {
    let (b, n) = (config.blocks, config.neurons);
    2 * b * (n * n + n) + (n + 1) + if config.adaptive_activations { 2 * b } else { 0 }
}

/// Flat parameter vector together with the architecture it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub config: NetworkConfig,
    pub params: Vec<f64>,
}

impl ParamSet {
    /// All weights and biases zero, slopes one.
    pub fn zeros(config: NetworkConfig) -> Self {
        let mut params = vec![0.0; count_parameters(&config)];
        for l in 0..config.hidden_layers() {
            if let Some(o) = config.slope_offset(l) {
                params[o] = 1.0;
            }
        }
        Self { config, params }
    }

    pub fn from_vec(config: NetworkConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = count_parameters(&config);
        if params.len() != expected {
            return Err(Error::LengthMismatch(format!(
                "{} parameters for a network that needs {expected}",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Config(format!("parameter {i} is not finite")));
        }
        Ok(Self { config, params })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn weight(&self, layer: usize, from: usize, to: usize) -> f64 {
        let n = self.config.neurons;
        self.params[self.config.weight_offset(layer) + from * n + to]
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let o = self.config.weight_offset(layer);
        let n = self.config.neurons;
        &self.params[o..o + n * n]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let o = self.config.bias_offset(layer);
        &self.params[o..o + self.config.neurons]
    }

    /// Activation slope of `layer` (1 when slopes are not trainable).
    pub fn slope(&self, layer: usize) -> f64 {
        self.config
            .slope_offset(layer)
            .map_or(1.0, |o| self.params[o])
    }

    pub fn output_weights(&self) -> &[f64] {
        let o = self.config.output_offset();
        &self.params[o..o + self.config.neurons]
    }

    pub fn output_bias(&self) -> f64 {
        self.params[self.config.output_offset() + self.config.neurons]
    }

    pub fn set_output_bias(&mut self, value: f64) {
        let o = self.config.output_offset() + self.config.neurons;
        self.params[o] = value;
    }

    /// Value and spatial gradient at one point.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let out = batch::forward(self, &[x]);
        (out.u[0], [out.ux[0], out.uy[0]])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ParamSet = serde_json::from_str(text)?;
        Self::from_vec(raw.config, raw.params)
    }
}

/// Xavier-uniform initialization: hidden weights in `±sqrt(6 / (N + N))`,
/// output weights in `±sqrt(6 / (N + 1))`, zero biases and unit slopes.
pub fn init_xavier(config: NetworkConfig, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.neurons;
    let mut set = ParamSet::zeros(config);
    let hidden = Uniform::new_inclusive(-xavier_bound(n, n), xavier_bound(n, n));
    for l in 0..config.hidden_layers() {
        let o = config.weight_offset(l);
        for v in &mut set.params[o..o + n * n] {
            *v = hidden.sample(&mut rng);
        }
    }
    let out = Uniform::new_inclusive(-xavier_bound(n, 1), xavier_bound(n, 1));
    let o = config.output_offset();
    for v in &mut set.params[o..o + n] {
        *v = out.sample(&mut rng);
    }
    set
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// A network whose parameters are variable nodes of an [`ExprGraph`].
#[derive(Debug, Clone)]
pub struct GraphNetwork {
    pub config: NetworkConfig,
    pub params: Vec<NodeId>,
    zero: NodeId,
}

/// Network output at one point together with its input variables.
#[derive(Debug, Clone, Copy)]
pub struct GraphPoint {
    pub inputs: [NodeId; 2],
    pub u: NodeId,
}

impl GraphNetwork {
    /// Registers every parameter of `set` as a variable of `graph`.
    pub fn bind(graph: &mut ExprGraph, set: &ParamSet) -> Self {
        let params = set.params.iter().map(|&p| graph.var(p)).collect();
        let zero = graph.constant(0.0);
        Self {
            config: set.config,
            params,
            zero,
        }
    }

    pub fn values(&self, graph: &ExprGraph) -> ParamSet {
        ParamSet {
            config: self.config,
            params: self.params.iter().map(|&p| graph.value(p)).collect(),
        }
    }

    /// Output node for the input nodes `x`.
    pub fn forward_nodes(&self, graph: &mut ExprGraph, x: [NodeId; 2]) -> NodeId {
        let c = &self.config;
        let n = c.neurons;
        let mut z: Vec<NodeId> = (0..n)
            .map(|i| if i < 2 { x[i] } else { self.zero })
            .collect();
        for block in 0..c.blocks {
            let input = z.clone();
            for layer in [2 * block, 2 * block + 1] {
                let w0 = c.weight_offset(layer);
                let b0 = c.bias_offset(layer);
                let slope = c.slope_offset(layer).map(|o| self.params[o]);
                let mut next = Vec::with_capacity(n);
                for j in 0..n {
                    let col: Vec<NodeId> = (0..n).map(|i| self.params[w0 + i * n + j]).collect();
                    let lin = graph.dot(&z, &col);
                    let mut h = graph.add(lin, self.params[b0 + j]);
                    if let Some(a) = slope {
                        h = graph.mul(a, h);
                    }
                    next.push(graph.tanh(h));
                }
                z = next;
            }
            z = z
                .iter()
                .zip(&input)
                .map(|(&out, &skip)| graph.add(out, skip))
                .collect();
        }
        let o = c.output_offset();
        let lin = graph.dot(&z, &self.params[o..o + n]);
        graph.add(lin, self.params[o + n])
    }

    /// Creates input variables at `x` and the network output there.
    pub fn forward(&self, graph: &mut ExprGraph, x: [f64; 2]) -> GraphPoint {
        let inputs = [graph.var(x[0]), graph.var(x[1])];
        let u = self.forward_nodes(graph, inputs);
        GraphPoint { inputs, u }
    }

    /// `(du/dx, du/dy)` as graph nodes, differentiable with respect to the
    /// parameters.
    pub fn spatial_gradient(&self, graph: &mut ExprGraph, point: &GraphPoint) -> Result<[NodeId; 2]> {
        let one = graph.constant(1.0);
        let zero = graph.constant(0.0);
        let dx = graph.jvp_nodes(&[point.u], &point.inputs, &[one, zero])?[0];
        let dy = graph.jvp_nodes(&[point.u], &point.inputs, &[zero, one])?[0];
        Ok([dx, dy])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts() {
        assert_eq!(count_parameters(&NetworkConfig::new(8, 15, true)), 3872);
        assert_eq!(count_parameters(&NetworkConfig::new(15, 15, true)), 7246);
        assert_eq!(count_parameters(&NetworkConfig::new(30, 24, false)), 36025);
        assert_eq!(count_parameters(&NetworkConfig::new(30, 24, true)), 36085);
    }

    #[test]
    fn layout_covers_vector() {
        let c = NetworkConfig::new(3, 5, true);
        assert_eq!(c.output_offset() + c.neurons + 1, count_parameters(&c));
        let c = NetworkConfig::new(3, 5, false);
        assert_eq!(c.output_offset() + c.neurons + 1, count_parameters(&c));
        assert_eq!(c.slope_offset(0), None);
    }

    #[test]
    fn xavier_properties() {
        let c = NetworkConfig::new(2, 15, true);
        let p = init_xavier(c, 7);
        assert_eq!(p, init_xavier(c, 7));
        assert_ne!(p, init_xavier(c, 8));
        let bound = xavier_bound(15, 15);
        assert!((bound - 0.447_213_595_499_958).abs() < 1e-12);
        for l in 0..c.hidden_layers() {
            assert!(p.weights(l).iter().all(|w| w.abs() <= bound));
            assert!(p.bias(l).iter().all(|&b| b == 0.0));
            assert_eq!(p.slope(l), 1.0);
        }
        assert_eq!(p.output_bias(), 0.0);
    }

    #[test]
    fn constant_network() {
        let c = NetworkConfig::new(2, 4, true);
        let mut p = ParamSet::zeros(c);
        p.set_output_bias(2.5);
        for x in [[0.0, 0.0], [0.3, -0.7], [10.0, 4.0]] {
            let (u, g) = p.eval(x);
            assert_eq!(u, 2.5);
            assert_eq!(g, [0.0, 0.0]);
        }
    }

    #[test]
    fn json_round_trip() {
        let p = init_xavier(NetworkConfig::new(1, 3, true), 1);
        let back = ParamSet::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"config":{"blocks":1,"neurons":3,"adaptive_activations":true},"params":[1.0]}"#;
        assert!(ParamSet::from_json(bad).is_err());
    }
}
