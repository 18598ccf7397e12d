//! Environment encoder: obstacle vector in, semantic encoding out, plus the
//! mirror decoder that reconstructs the obstacle vector and the joint loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelBundle, ModelConfig};
use crate::nn::{linear, mse, Tape, Var};
use crate::scalar::Real;
use crate::world::{PlanningTask, Workspace};

/// Padding value for the center slots of unused obstacle entries.
pub const PAD_CENTER: f64 = 0.0;
/// Padding value for the half-extent slots; no real box has a negative extent.
pub const PAD_HALF_EXTENT: f64 = -1.0;

/// Fixed-length obstacle encoding: per slot the normalized center followed
/// by the normalized half extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EnvVector<T> {
    pub values: Vec<T>,
}

impl<T: Real> EnvVector<T> {
    pub fn from_workspace(ws: &Workspace<T>, max_obstacles: usize) -> Result<Self> {
        let d = ws.dim();
        if ws.obstacles().len() > max_obstacles {
            return Err(Error::invalid(format!(
                "workspace has {} obstacles, the encoder holds {max_obstacles}",
                ws.obstacles().len()
            )));
        }
        let mut values = Vec::with_capacity(max_obstacles * 2 * d);
        let two = T::lit(2.0);
        for obs in ws.obstacles() {
            values.extend(ws.normalize(&obs.center));
            values.extend(
                obs.half_extent
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| two * h / ws.span(i)),
            );
        }
        for _ in ws.obstacles().len()..max_obstacles {
            values.extend(std::iter::repeat_n(T::lit(PAD_CENTER), d));
            values.extend(std::iter::repeat_n(T::lit(PAD_HALF_EXTENT), d));
        }
        Ok(EnvVector { values })
    }

    /// Encoding for `task` under `config`, appending the normalized start
    /// and goal when task conditioning is enabled.
    pub fn for_task(task: &PlanningTask<T>, config: &ModelConfig) -> Result<Self> {
        let mut env = Self::from_workspace(&task.workspace, config.max_obstacles)?;
        if config.eise_task_conditioning {
            env.values.extend(task.workspace.normalize(&task.x_init));
            env.values.extend(task.workspace.normalize(&task.goal_center));
        }
        Ok(env)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One semantic token of width `d_model`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticEncoding<T> {
    pub values: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EiseLossWeights {
    /// Reconstruction weight.
    pub lambda: f64,
    /// Next-node prediction weight.
    pub eta: f64,
}

impl Default for EiseLossWeights {
    fn default() -> Self {
        EiseLossWeights { lambda: 1.0, eta: 1.0 }
    }
}

impl EiseLossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.eta < 0.0 || (self.lambda == 0.0 && self.eta == 0.0) {
            return Err(Error::Config("loss weights must be nonnegative and not both zero".into()));
        }
        Ok(())
    }
}

fn check_len<T: Real>(tape: &Tape<T>, v: Var, len: usize, what: &str) -> Result<()> {
    if tape.shape(v) != (1, len) {
        return Err(Error::invalid(format!(
            "{what}: expected a 1 x {len} row, got {:?}",
            tape.shape(v)
        )));
    }
    Ok(())
}

/// Encoder on the tape: `L -> d_hidden -> d_model` with ReLU after the first
/// layer (or `L -> d_model` with ReLU in single-layer mode).
pub fn encode<T: Real>(tape: &mut Tape<T>, p: &BoundParams, cfg: &ModelConfig, env: Var) -> Result<Var> {
    check_len(tape, env, cfg.env_len(), "environment vector")?;
    let h = linear(tape, env, p.get("eise.enc.0.w"), p.get("eise.enc.0.b"))?;
    let h = tape.relu(h);
    if cfg.eise_layers == 1 {
        return Ok(h);
    }
    linear(tape, h, p.get("eise.enc.1.w"), p.get("eise.enc.1.b"))
}

/// Decoder on the tape: `d_model -> d_hidden -> L`.
pub fn decode<T: Real>(tape: &mut Tape<T>, p: &BoundParams, cfg: &ModelConfig, sei: Var) -> Result<Var> {
    check_len(tape, sei, cfg.attention.d_model, "semantic encoding")?;
    let h = linear(tape, sei, p.get("eise.dec.0.w"), p.get("eise.dec.0.b"))?;
    if cfg.eise_layers == 1 {
        return Ok(h);
    }
    let h = tape.relu(h);
    linear(tape, h, p.get("eise.dec.1.w"), p.get("eise.dec.1.b"))
}

/// `lambda * MSE(O, O_hat) + eta * MSE(x, x_hat)` on the tape.
pub fn eise_loss<T: Real>(
    tape: &mut Tape<T>,
    env: Var,
    env_hat: Var,
    target: Var,
    prediction: Var,
    w: EiseLossWeights,
) -> Result<Var> {
    let recon = mse(tape, env, env_hat)?;
    let sem = mse(tape, target, prediction)?;
    let recon = tape.scale(recon, T::lit(w.lambda));
    let sem = tape.scale(sem, T::lit(w.eta));
    Ok(tape.add(recon, sem))
}

/// Plain-value version of [`eise_loss`].
pub fn eise_loss_value<T: Real>(env: &[T], env_hat: &[T], target: &[T], prediction: &[T], w: EiseLossWeights) -> Result<T> {
    if env.len() != env_hat.len() || target.len() != prediction.len() {
        return Err(Error::invalid("loss operands must have matching lengths"));
    }
    let ms = |a: &[T], b: &[T]| {
        a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / T::from_usize_lossy(a.len().max(1))
    };
    Ok(T::lit(w.lambda) * ms(env, env_hat) + T::lit(w.eta) * ms(target, prediction))
}

impl<T: Real> ModelBundle<T> {
    /// Semantic encoding of an environment vector (no gradients).
    pub fn encode_env(&self, env: &EnvVector<T>) -> Result<SemanticEncoding<T>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let o = tape.row_vector(env.values.clone(), false);
        let s = encode(&mut tape, &p, &self.config, o)?;
        Ok(SemanticEncoding {
            values: tape.value(s).to_vec(),
        })
    }

    pub fn decode_sei(&self, sei: &SemanticEncoding<T>) -> Result<EnvVector<T>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let s = tape.row_vector(sei.values.clone(), false);
        let o = decode(&mut tape, &p, &self.config, s)?;
        Ok(EnvVector {
            values: tape.value(o).to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AttentionConfig;
    use crate::world::BoxObstacle;

    fn cfg() -> ModelConfig {
        ModelConfig {
            attention: AttentionConfig {
                d_model: 8,
                n_heads: 2,
                n_layers: 1,
                d_ffn: 8,
            },
            d_hidden: 10,
            max_obstacles: 3,
            max_seq_len: 8,
            ..Default::default()
        }
    }

    #[test]
    fn env_vector_layout_and_padding() {
        let obs = BoxObstacle::new(vec![5.0, 2.5], vec![1.0, 0.5]).unwrap();
        let ws = Workspace::new(vec![(0.0, 10.0), (0.0, 10.0)], vec![obs]).unwrap();
        let env = EnvVector::from_workspace(&ws, 3).unwrap();
        assert_eq!(env.len(), 12);
        assert_eq!(&env.values[..4], &[0.0, -0.5, 0.2, 0.1]);
        assert_eq!(&env.values[4..8], &[0.0, 0.0, -1.0, -1.0]);
        assert!(EnvVector::from_workspace(&ws, 0).is_err());
    }

    #[test]
    fn zero_weights_give_zero_encoding() {
        let mut b = ModelBundle::<f64>::init(cfg(), 3).unwrap();
        for (name, t) in b.params.iter_mut() {
            if name.starts_with("eise.") {
                t.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let env = EnvVector {
            values: (0..12).map(|i| i as f64 * 0.1 - 0.5).collect(),
        };
        let s = b.encode_env(&env).unwrap();
        assert_eq!(s.values, vec![0.0; 8]);
        assert_eq!(b.decode_sei(&s).unwrap().len(), 12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let b = ModelBundle::<f64>::init(cfg(), 3).unwrap();
        assert!(b.encode_env(&EnvVector { values: vec![0.0; 5] }).is_err());
        assert!(b.decode_sei(&SemanticEncoding { values: vec![0.0; 3] }).is_err());
    }

    #[test]
    fn loss_values() {
        let w = EiseLossWeights { lambda: 1.0, eta: 0.0 };
        let o = vec![0.1; 8];
        let zeros = vec![0.0; 8];
        let l: f64 = eise_loss_value(&o, &zeros, &[0.0], &[5.0], w).unwrap();
        assert!((l - 0.01).abs() < 1e-15);
        assert_eq!(eise_loss_value(&o, &o, &[1.0, 2.0], &[1.0, 2.0], EiseLossWeights::default()).unwrap(), 0.0);
        assert!(EiseLossWeights { lambda: 0.0, eta: 0.0 }.validate().is_err());
    }
}
