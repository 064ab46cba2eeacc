//! Flat parameter storage for the toy transformer.
//!
//! All tensors live in one contiguous `Vec<f64>`; a [`Layout`] records the
//! name, shape and offset of each. Gradients and optimizer moments use the
//! same layout, which keeps Adam, serialization and finite-difference checks
//! down to plain slice arithmetic.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ToyConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Weight,
    Gain,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Tensor indices for one transformer block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIdx {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    pub(crate) wte: usize,
    pub(crate) wpe: usize,
    pub(crate) blocks: Vec<BlockIdx>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    pub(crate) unembed: usize,
    total: usize,
}

impl Layout {
    pub fn new(cfg: &ToyConfig) -> Self {
        let (v, d, f, c) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.context_len);
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>, kind: TensorKind| {
            let spec = TensorSpec {
                name,
                shape,
                offset: total,
                kind,
            };
            total += spec.len();
            tensors.push(spec);
            tensors.len() - 1
        };
        use TensorKind::*;
        let wte = push("wte".into(), vec![v, d], Weight);
        let wpe = push("wpe".into(), vec![c, d], Weight);
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("h{l}.{s}");
            blocks.push(BlockIdx {
                ln1_g: push(p("ln1.g"), vec![d], Gain),
                ln1_b: push(p("ln1.b"), vec![d], Bias),
                w_qkv: push(p("attn.w_qkv"), vec![d, 3 * d], Weight),
                b_qkv: push(p("attn.b_qkv"), vec![3 * d], Bias),
                w_o: push(p("attn.w_o"), vec![d, d], Weight),
                b_o: push(p("attn.b_o"), vec![d], Bias),
                ln2_g: push(p("ln2.g"), vec![d], Gain),
                ln2_b: push(p("ln2.b"), vec![d], Bias),
                w_fc: push(p("mlp.w_fc"), vec![d, f], Weight),
                b_fc: push(p("mlp.b_fc"), vec![f], Bias),
                w_proj: push(p("mlp.w_proj"), vec![f, d], Weight),
                b_proj: push(p("mlp.b_proj"), vec![d], Bias),
            });
        }
        let lnf_g = push("lnf.g".into(), vec![d], Gain);
        let lnf_b = push("lnf.b".into(), vec![d], Bias);
        let unembed = push("w_unembed".into(), vec![d, v], Weight);
        Self {
            tensors,
            wte,
            wpe,
            blocks,
            lnf_g,
            lnf_b,
            unembed,
            total,
        }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn spec(&self, idx: usize) -> &TensorSpec {
        &self.tensors[idx]
    }

    pub(crate) fn vec<'a>(&self, data: &'a [f64], idx: usize) -> ArrayView1<'a, f64> {
        ArrayView1::from(&data[self.tensors[idx].range()])
    }

    pub(crate) fn mat<'a>(&self, data: &'a [f64], idx: usize) -> ArrayView2<'a, f64> {
        let t = &self.tensors[idx];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &data[t.range()]).expect("layout shape")
    }

    pub(crate) fn vec_mut<'a>(&self, data: &'a mut [f64], idx: usize) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut data[self.tensors[idx].range()])
    }

    pub(crate) fn mat_mut<'a>(&self, data: &'a mut [f64], idx: usize) -> ArrayViewMut2<'a, f64> {
        let t = &self.tensors[idx];
        ArrayViewMut2::from_shape((t.shape[0], t.shape[1]), &mut data[t.range()])
            .expect("layout shape")
    }
}

/// Toy transformer parameters.
#[derive(Debug, Clone)]
pub struct ToyParams {
    cfg: ToyConfig,
    layout: Layout,
    data: Vec<f64>,
}

impl PartialEq for ToyParams {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ToyParams {
    /// All entries zero except normalization gains (set to 1).
    pub fn zeros(cfg: &ToyConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let mut data = vec![0.0; layout.total()];
        for t in layout.tensors() {
            if t.kind == TensorKind::Gain {
                data[t.range()].fill(1.0);
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            layout,
            data,
        })
    }

    pub fn from_data(cfg: &ToyConfig, data: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        if data.len() != layout.total() {
            return Err(Error::Toy(format!(
                "expected {} parameters, got {}",
                layout.total(),
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Toy("non-finite parameter".into()));
        }
        Ok(Self {
            cfg: cfg.clone(),
            layout,
            data,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.data[range])
    }
}

/// Weights i.i.d. normal(0, init_std²) from a generator seeded with `cfg.seed`;
/// gains 1, biases 0.
pub fn init_params(cfg: &ToyConfig) -> Result<ToyParams> {
    let mut params = ToyParams::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Toy(e.to_string()))?;
    let specs: Vec<TensorSpec> = params.layout.tensors().to_vec();
    for t in specs.iter().filter(|t| t.kind == TensorKind::Weight) {
        for x in &mut params.data[t.range()] {
            *x = normal.sample(&mut rng);
        }
    }
    Ok(params)
}
