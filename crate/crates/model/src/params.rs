//! Model configuration and the trainable tensors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Nonlinearity of the generator's hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}` (relu|tanh)")),
        }
    }
}

/// Network shape. The code dimension `l` comes from the code vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// Attention width; `None` means `hidden_dim`.
    pub attention_dim: Option<usize>,
    pub generator_dims: [usize; 2],
    pub activation: Activation,
    /// Most frequent training words kept; the rest map to `UNK`.
    pub max_words: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 128,
            hidden_dim: 512,
            attention_dim: None,
            generator_dims: [2048, 1024],
            activation: Activation::Relu,
            max_words: 2500,
        }
    }
}

impl ModelConfig {
    pub fn attention_width(&self) -> usize {
        self.attention_dim.unwrap_or(self.hidden_dim)
    }
}

/// One named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }
}

pub const EMBEDDING: usize = 0;
pub const FWD_WX: usize = 1;
pub const FWD_WH: usize = 2;
pub const FWD_B: usize = 3;
pub const BWD_WX: usize = 4;
pub const BWD_WH: usize = 5;
pub const BWD_B: usize = 6;
/// `d_a × 4d`; the first `2d` columns act on the number, the rest on `h_t`.
pub const ATTN_W: usize = 7;
pub const ATTN_U: usize = 8;
pub const GEN_W1: usize = 9;
pub const GEN_B1: usize = 10;
pub const GEN_W2: usize = 11;
pub const GEN_B2: usize = 12;
pub const GEN_W3: usize = 13;
pub const GEN_B3: usize = 14;
pub const GROUP_COUNT: usize = 15;

/// All trainable tensors, indexed by the group constants above. Gradients
/// share this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub groups: Vec<Tensor>,
}

impl Params {
    /// All-zero tensors shaped for `cfg`, `vocab` tokens and `l` codes.
    pub fn zeros(cfg: &ModelConfig, vocab: usize, l: usize) -> Self {
        let (de, d, da) = (cfg.embedding_dim, cfg.hidden_dim, cfg.attention_width());
        let [h1, h2] = cfg.generator_dims;
        let groups = vec![
            Tensor::zeros("embedding", vocab, de),
            Tensor::zeros("fwd_wx", 4 * d, de),
            Tensor::zeros("fwd_wh", 4 * d, d),
            Tensor::zeros("fwd_b", 4 * d, 1),
            Tensor::zeros("bwd_wx", 4 * d, de),
            Tensor::zeros("bwd_wh", 4 * d, d),
            Tensor::zeros("bwd_b", 4 * d, 1),
            Tensor::zeros("attn_w", da, 4 * d),
            Tensor::zeros("attn_u", da, 1),
            Tensor::zeros("gen_w1", h1, 4 * d),
            Tensor::zeros("gen_b1", h1, 1),
            Tensor::zeros("gen_w2", h2, h1),
            Tensor::zeros("gen_b2", h2, 1),
            Tensor::zeros("gen_w3", l, h2),
            Tensor::zeros("gen_b3", l, 1),
        ];
        debug_assert_eq!(groups.len(), GROUP_COUNT);
        Self { groups }
    }

    /// Uniform in `±1/√fan_in`. Embedding rows are looked up rather than
    /// multiplied, so their fan-in is one.
    pub fn init(cfg: &ModelConfig, vocab: usize, l: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(cfg, vocab, l);
        let d = cfg.hidden_dim;
        let [h1, h2] = cfg.generator_dims;
        let fan_in = [
            1,
            cfg.embedding_dim,
            d,
            d,
            cfg.embedding_dim,
            d,
            d,
            4 * d,
            cfg.attention_width(),
            4 * d,
            4 * d,
            h1,
            h1,
            h2,
            h2,
        ];
        for (t, fan) in p.groups.iter_mut().zip(fan_in) {
            let bound = 1.0 / (fan as f64).sqrt();
            for x in &mut t.data {
                *x = rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|t| Tensor::zeros(&t.name, t.rows, t.cols))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.groups {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            crate::linalg::add_assign(&mut a.data, &b.data);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.groups {
            t.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn norm(&self) -> f64 {
        self.groups
            .iter()
            .flat_map(|t| &t.data)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.groups
            .iter()
            .flat_map(|t| &t.data)
            .all(|x| x.is_finite())
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that every tensor matches the shape implied by `cfg`.
    pub fn shape_matches(&self, cfg: &ModelConfig, vocab: usize, l: usize) -> bool {
        let want = Self::zeros(cfg, vocab, l);
        want.groups.len() == self.groups.len()
            && want
                .groups
                .iter()
                .zip(&self.groups)
                .all(|(a, b)| a.rows == b.rows && a.cols == b.cols && b.data.len() == a.data.len())
    }
}
