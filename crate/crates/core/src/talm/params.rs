use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::LabelClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_tokens_per_cell: usize,
    /// Dropout on the attention and feed-forward residual branches during
    /// training.
    pub dropout: f64,
    /// Standard deviation of the normal initializer for weight matrices.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            layers: 2,
            heads: 2,
            ffn_dim: 64,
            max_tokens_per_cell: 16,
            dropout: 0.0,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim ({}) must be a positive multiple of heads ({})",
                self.embed_dim, self.heads
            )));
        }
        if self.max_tokens_per_cell == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("max_tokens_per_cell and ffn_dim must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

/// One pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors. Projections act on row vectors (`x W + b`); the
/// output layer is `|labels| x d` and produces `W h + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gamma: Array1<f64>,
    pub final_beta: Array1<f64>,
    pub out_weight: Array2<f64>,
    pub out_bias: Array1<f64>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(ln1_gamma, ln1_beta, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gamma, ln2_beta, w1, b1, w2, b2)
    };
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        LayerParams {
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        macro_rules! collect {
            ($($f:ident),*) => {
                vec![$((stringify!($f), self.$f.as_slice().expect("standard layout"))),*]
            };
        }
        layer_fields!(collect)
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        macro_rules! collect {
            ($($f:ident),*) => {
                vec![$((stringify!($f), self.$f.as_slice_mut().expect("standard layout"))),*]
            };
        }
        layer_fields!(collect)
    }
}

impl ModelParameters {
    /// All-zero tensors with the shapes implied by `config` and a vocabulary
    /// of `vocab_size` tokens.
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let d = config.embed_dim;
        ModelParameters {
            token_embedding: Array2::zeros((vocab_size, d)),
            position_embedding: Array2::zeros((config.max_tokens_per_cell, d)),
            layers: (0..config.layers).map(|_| LayerParams::zeros(d, config.ffn_dim)).collect(),
            final_gamma: Array1::zeros(d),
            final_beta: Array1::zeros(d),
            out_weight: Array2::zeros((LabelClass::COUNT, d)),
            out_bias: Array1::zeros(LabelClass::COUNT),
        }
    }

    /// Scaled-normal weights, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let mut p = Self::zeros(config, vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).expect("valid std");
        for (name, t) in p.tensors_mut() {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            if leaf.contains("gamma") {
                t.fill(1.0);
            } else if leaf.starts_with('b') || leaf.ends_with("bias") || leaf.ends_with("beta") {
                t.fill(0.0);
            } else {
                t.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        z
    }

    pub fn embed_dim(&self) -> usize {
        self.token_embedding.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.nrows()
    }

    /// Named views of every tensor in a fixed order, row-major.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("token_embedding".into(), self.token_embedding.as_slice().expect("standard layout")),
            ("position_embedding".into(), self.position_embedding.as_slice().expect("standard layout")),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("layers.{l}.{n}"), t)));
        }
        out.push(("final_gamma".into(), self.final_gamma.as_slice().expect("standard layout")));
        out.push(("final_beta".into(), self.final_beta.as_slice().expect("standard layout")));
        out.push(("out_weight".into(), self.out_weight.as_slice().expect("standard layout")));
        out.push(("out_bias".into(), self.out_bias.as_slice().expect("standard layout")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("token_embedding".into(), self.token_embedding.as_slice_mut().expect("standard layout")),
            ("position_embedding".into(), self.position_embedding.as_slice_mut().expect("standard layout")),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.extend(layer.tensors_mut().into_iter().map(|(n, t)| (format!("layers.{l}.{n}"), t)));
        }
        out.push(("final_gamma".into(), self.final_gamma.as_slice_mut().expect("standard layout")));
        out.push(("final_beta".into(), self.final_beta.as_slice_mut().expect("standard layout")));
        out.push(("out_weight".into(), self.out_weight.as_slice_mut().expect("standard layout")));
        out.push(("out_bias".into(), self.out_bias.as_slice_mut().expect("standard layout")));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Check tensor shapes against a configuration.
    pub fn check_shapes(&self, config: &ModelConfig, vocab_size: usize) -> Result<()> {
        let expected = Self::zeros(config, vocab_size);
        let ours = self.tensors();
        let theirs = expected.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, config implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((name, a), (_, b)) in ours.iter().zip(&theirs) {
            if a.len() != b.len() {
                return Err(Error::Config(format!("tensor {name} has {} values, expected {}", a.len(), b.len())));
            }
        }
        Ok(())
    }
}
