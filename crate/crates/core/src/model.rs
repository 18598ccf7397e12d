//! Parameter bundle holding the environment encoder and the transformer,
//! with its architecture and checkpoint I/O.
//!
//! Parameter names (`L` = environment vector length, `H` = `d_hidden`,
//! `D` = `d_model`, `F` = `d_ffn`, `d` = planning dimension):
//!
//! | name | shape |
//! |------|-------|
//! | `eise.enc.0.w`, `eise.enc.0.b` | `L x H`, `H` (`L x D`, `D` with one layer) |
//! | `eise.enc.1.w`, `eise.enc.1.b` | `H x D`, `D` |
//! | `eise.dec.0.w`, `eise.dec.0.b` | `D x H`, `H` (`D x L`, `L` with one layer) |
//! | `eise.dec.1.w`, `eise.dec.1.b` | `H x L`, `L` |
//! | `mpt.embed.w`, `mpt.embed.b` | `(d + 4) x D`, `D` |
//! | `mpt.pos` | `max_seq_len x D` |
//! | `mpt.layer{l}.head{i}.w_q` / `w_k` / `w_v` | `D x D/h` |
//! | `mpt.layer{l}.w_o` | `D x D` |
//! | `mpt.layer{l}.ln1.alpha` / `delta`, `ln2.*` | `D` |
//! | `mpt.layer{l}.ffn.w1`, `b1`, `w2`, `b2` | `D x F`, `F`, `F x D`, `D` |
//! | `mpt.head.w`, `mpt.head.b` | `D x d`, `d` |

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path as FsPath;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::{AttentionConfig, ParamStore, Tape, Tensor, Var};
use crate::scalar::Real;

/// Number of token roles in the one-hot part of the state embedding input.
pub const ROLE_COUNT: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Planning-space dimension.
    pub dim: usize,
    pub attention: AttentionConfig,
    pub d_hidden: usize,
    /// 1 or 2 fully connected layers on each side of the encoder.
    pub eise_layers: usize,
    /// Obstacle slots in the environment vector.
    pub max_obstacles: usize,
    pub max_seq_len: usize,
    /// Append the normalized start and goal to the environment vector.
    pub eise_task_conditioning: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 2,
            attention: AttentionConfig::default(),
            d_hidden: 128,
            eise_layers: 2,
            max_obstacles: 16,
            max_seq_len: 64,
            eise_task_conditioning: false,
        }
    }
}

impl ModelConfig {
    pub fn env_len(&self) -> usize {
        let base = self.max_obstacles * 2 * self.dim;
        if self.eise_task_conditioning {
            base + 2 * self.dim
        } else {
            base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        if self.dim == 0 || self.d_hidden == 0 || self.max_obstacles == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(1..=2).contains(&self.eise_layers) {
            return Err(Error::Config("eise_layers must be 1 or 2".into()));
        }
        if self.max_seq_len < 3 {
            return Err(Error::Config("max_seq_len must hold at least SEI, goal and start".into()));
        }
        if self.attention.d_model < 2 {
            return Err(Error::Config("d_model must be at least 2 for layer normalization".into()));
        }
        Ok(())
    }

    /// Names and shapes of every parameter, in canonical order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let l = self.env_len();
        let h = self.d_hidden;
        let a = &self.attention;
        let (dm, dk, f) = (a.d_model, a.d_k(), a.d_ffn);
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| out.push((name, shape));
        if self.eise_layers == 2 {
            push("eise.enc.0.w".into(), vec![l, h]);
            push("eise.enc.0.b".into(), vec![h]);
            push("eise.enc.1.w".into(), vec![h, dm]);
            push("eise.enc.1.b".into(), vec![dm]);
            push("eise.dec.0.w".into(), vec![dm, h]);
            push("eise.dec.0.b".into(), vec![h]);
            push("eise.dec.1.w".into(), vec![h, l]);
            push("eise.dec.1.b".into(), vec![l]);
        } else {
            push("eise.enc.0.w".into(), vec![l, dm]);
            push("eise.enc.0.b".into(), vec![dm]);
            push("eise.dec.0.w".into(), vec![dm, l]);
            push("eise.dec.0.b".into(), vec![l]);
        }
        push("mpt.embed.w".into(), vec![self.dim + ROLE_COUNT, dm]);
        push("mpt.embed.b".into(), vec![dm]);
        push("mpt.pos".into(), vec![self.max_seq_len, dm]);
        for layer in 0..a.n_layers {
            for head in 0..a.n_heads {
                for w in ["w_q", "w_k", "w_v"] {
                    push(format!("mpt.layer{layer}.head{head}.{w}"), vec![dm, dk]);
                }
            }
            push(format!("mpt.layer{layer}.w_o"), vec![dm, dm]);
            push(format!("mpt.layer{layer}.ln1.alpha"), vec![dm]);
            push(format!("mpt.layer{layer}.ln1.delta"), vec![dm]);
            push(format!("mpt.layer{layer}.ffn.w1"), vec![dm, f]);
            push(format!("mpt.layer{layer}.ffn.b1"), vec![f]);
            push(format!("mpt.layer{layer}.ffn.w2"), vec![f, dm]);
            push(format!("mpt.layer{layer}.ffn.b2"), vec![dm]);
            push(format!("mpt.layer{layer}.ln2.alpha"), vec![dm]);
            push(format!("mpt.layer{layer}.ln2.delta"), vec![dm]);
        }
        push("mpt.head.w".into(), vec![dm, self.dim]);
        push("mpt.head.b".into(), vec![self.dim]);
        out
    }
}

/// Checkpoint header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BundleHeader {
    format_version: u32,
    model: ModelConfig,
}

/// All trainable parameters of the encoder and the transformer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Real> ModelBundle<T> {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes() {
            let t = if name.ends_with(".alpha") {
                Tensor::filled(&shape, T::one()).with_grad()
            } else if shape.len() == 1 {
                Tensor::zeros(&shape).with_grad()
            } else {
                Tensor::xavier(shape[0], shape[1], &mut rng)
            };
            params.insert(name, t);
        }
        Ok(ModelBundle { config, params })
    }

    pub fn param_count(&self) -> usize {
        crate::nn::tensor::param_count(&self.params)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let header = BundleHeader {
            format_version: crate::nn::checkpoint::FORMAT_VERSION,
            model: self.config.clone(),
        };
        write_checkpoint(BufWriter::new(f), &header, &self.params)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let (header, params): (BundleHeader, ParamStore<T>) = read_checkpoint(BufReader::new(f))?;
        let bundle = ModelBundle {
            config: header.model,
            params,
        };
        bundle.check_shapes()?;
        Ok(bundle)
    }

    pub fn check_shapes(&self) -> Result<()> {
        for (name, shape) in self.config.param_shapes() {
            match self.params.get(&name) {
                Some(t) if t.shape == shape => {}
                Some(t) => {
                    return Err(Error::Checkpoint(format!(
                        "{name}: shape {:?}, architecture expects {shape:?}",
                        t.shape
                    )))
                }
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> BoundParams {
        BoundParams(crate::nn::bind_params(tape, &self.params, requires_grad))
    }
}

/// Tape handles of every bundle parameter.
#[derive(Clone, Debug)]
pub struct BoundParams(pub IndexMap<String, Var>);

impl BoundParams {
    pub fn get(&self, name: &str) -> Var {
        *self.0.get(name).unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.0.iter()
    }
}
