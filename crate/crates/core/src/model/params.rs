use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::rng;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Vec<T>,
    pub ln1_bias: Vec<T>,
    /// `d x 3d`, columns ordered query | key | value.
    pub qkv_weight: Vec<T>,
    pub qkv_bias: Vec<T>,
    pub attn_out_weight: Vec<T>,
    pub attn_out_bias: Vec<T>,
    pub ln2_gain: Vec<T>,
    pub ln2_bias: Vec<T>,
    /// `d x 4d`
    pub fc_weight: Vec<T>,
    pub fc_bias: Vec<T>,
    /// `4d x d`
    pub proj_weight: Vec<T>,
    pub proj_bias: Vec<T>,
}

/// All learnable weights. Matrices are row-major `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T = f32> {
    pub config: ModelConfig,
    /// `(vocab_k + 1) x d`; the last row is the start-of-sequence token.
    pub tok_emb: Vec<T>,
    /// `seq_len x d`
    pub pos_emb: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_gain: Vec<T>,
    pub lnf_bias: Vec<T>,
    /// `d x vocab_k`
    pub head_weight: Vec<T>,
    pub head_bias: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fill {
    Normal,
    Zero,
    One,
}

/// Canonical tensor order: name, element count and initializer.
fn layout(config: &ModelConfig) -> Vec<(String, usize, Fill)> {
    let d = config.d_embed;
    let k = config.vocab_k;
    let mut out = vec![
        ("tok_emb".to_string(), (k + 1) * d, Fill::Normal),
        ("pos_emb".to_string(), config.seq_len * d, Fill::Normal),
    ];
    for i in 0..config.n_layers {
        let p = |s: &str| format!("layers.{i}.{s}");
        out.extend([
            (p("ln1.gain"), d, Fill::One),
            (p("ln1.bias"), d, Fill::Zero),
            (p("attn.qkv.weight"), 3 * d * d, Fill::Normal),
            (p("attn.qkv.bias"), 3 * d, Fill::Zero),
            (p("attn.out.weight"), d * d, Fill::Normal),
            (p("attn.out.bias"), d, Fill::Zero),
            (p("ln2.gain"), d, Fill::One),
            (p("ln2.bias"), d, Fill::Zero),
            (p("mlp.fc.weight"), 4 * d * d, Fill::Normal),
            (p("mlp.fc.bias"), 4 * d, Fill::Zero),
            (p("mlp.proj.weight"), 4 * d * d, Fill::Normal),
            (p("mlp.proj.bias"), d, Fill::Zero),
        ]);
    }
    out.extend([
        ("ln_f.gain".to_string(), d, Fill::One),
        ("ln_f.bias".to_string(), d, Fill::Zero),
        ("head.weight".to_string(), d * k, Fill::Normal),
        ("head.bias".to_string(), k, Fill::Zero),
    ]);
    out
}

/// Tensor names in canonical (checkpoint) order.
pub fn tensor_names(config: &ModelConfig) -> Vec<String> {
    layout(config).into_iter().map(|(n, _, _)| n).collect()
}

/// Element count of every tensor in canonical order.
pub fn tensor_sizes(config: &ModelConfig) -> Vec<usize> {
    layout(config).into_iter().map(|(_, s, _)| s).collect()
}

impl<T: Scalar> Parameters<T> {
    /// Build from flat tensors given in canonical order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Vec<T>>) -> Result<Self> {
        config.validate()?;
        let sizes = tensor_sizes(&config);
        if tensors.len() != sizes.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                sizes.len(),
                tensors.len()
            )));
        }
        let names = tensor_names(&config);
        for ((t, s), n) in tensors.iter().zip(&sizes).zip(&names) {
            if t.len() != *s {
                return Err(Error::Shape(format!("tensor {n} has {} elements, expected {s}", t.len())));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let tok_emb = next();
        let pos_emb = next();
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_gain: next(),
                ln1_bias: next(),
                qkv_weight: next(),
                qkv_bias: next(),
                attn_out_weight: next(),
                attn_out_bias: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                fc_weight: next(),
                fc_bias: next(),
                proj_weight: next(),
                proj_bias: next(),
            })
            .collect();
        Ok(Self {
            config,
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: next(),
            lnf_bias: next(),
            head_weight: next(),
            head_bias: next(),
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let tensors = tensor_sizes(&config).into_iter().map(|s| vec![T::zero(); s]).collect();
        Self::from_tensors(config, tensors)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut v = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            v.extend([
                &l.ln1_gain,
                &l.ln1_bias,
                &l.qkv_weight,
                &l.qkv_bias,
                &l.attn_out_weight,
                &l.attn_out_bias,
                &l.ln2_gain,
                &l.ln2_bias,
                &l.fc_weight,
                &l.fc_bias,
                &l.proj_weight,
                &l.proj_bias,
            ]);
        }
        v.extend([&self.lnf_gain, &self.lnf_bias, &self.head_weight, &self.head_bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            v.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.qkv_weight,
                &mut l.qkv_bias,
                &mut l.attn_out_weight,
                &mut l.attn_out_bias,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.fc_weight,
                &mut l.fc_bias,
                &mut l.proj_weight,
                &mut l.proj_bias,
            ]);
        }
        v.extend([
            &mut self.lnf_gain,
            &mut self.lnf_bias,
            &mut self.head_weight,
            &mut self.head_bias,
        ]);
        v
    }

    pub fn names(&self) -> Vec<String> {
        tensor_names(&self.config)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let tensors = self
            .tensors()
            .into_iter()
            .map(|t| t.iter().map(|&x| U::lit(x.as_f64())).collect())
            .collect();
        Parameters::from_tensors(self.config, tensors).expect("same layout")
    }

    /// `self += other`, tensor by tensor in canonical order.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.names().into_iter().zip(self.tensors()) {
            if let Some(index) = t.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { tensor: name, index });
            }
        }
        Ok(())
    }

    /// Flat element access in canonical order; used by gradient checks.
    pub fn get_flat(&self, mut index: usize) -> T {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut index: usize, value: T) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat index out of range")
    }

    /// Name of the tensor holding flat `index`.
    pub fn flat_name(&self, mut index: usize) -> String {
        for (name, t) in self.names().into_iter().zip(self.tensors()) {
            if index < t.len() {
                return format!("{name}[{index}]");
            }
            index -= t.len();
        }
        panic!("flat index out of range")
    }
}

/// Seeded initialization: weights and embeddings `N(0, 0.02^2)`, biases zero,
/// layer-norm gains one. Draws happen in canonical tensor order.
pub fn init_model(config: ModelConfig) -> Result<Parameters<f32>> {
    config.validate()?;
    let mut rng = rng::seeded(config.init_seed);
    let normal = Normal::new(0.0f32, INIT_STD as f32).expect("valid std");
    let tensors = layout(&config)
        .into_iter()
        .map(|(_, size, fill)| match fill {
            Fill::Normal => (0..size).map(|_| normal.sample(&mut rng)).collect(),
            Fill::Zero => vec![0.0; size],
            Fill::One => vec![1.0; size],
        })
        .collect();
    Parameters::from_tensors(config, tensors)
}
