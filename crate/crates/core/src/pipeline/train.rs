use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingExample;
use super::derive_seed;
use crate::eise::{decode, eise_loss, encode, EiseLossWeights};
use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelBundle, ModelConfig};
use crate::mpt::{forward, TokenSequence};
use crate::nn::{mse, Adam, AdamConfig, GradStore, LrSchedule, LrScheduleConfig, Tape, Var};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: EiseLossWeights,
    pub adam: AdamConfig,
    pub schedule: LrScheduleConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            loss: EiseLossWeights::default(),
            adam: AdamConfig::default(),
            schedule: LrScheduleConfig::default(),
            batch_size: 32,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: ModelBundle<T>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub log: Vec<EpochLog>,
}

pub fn write_log_csv<W: Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,lr")?;
    for e in log {
        writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.lr)?;
    }
    Ok(())
}

/// Loss handles of one example.
#[derive(Clone, Copy, Debug)]
pub struct ExampleLoss {
    pub total: Var,
    pub recons: Var,
    pub semantic: Var,
}

/// Builds encoder, decoder and transformer for one example on `tape`; the
/// prediction term reaches the encoder through the SEI.
pub fn example_loss<T: Real>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    ex: &TrainingExample<T>,
    w: EiseLossWeights,
) -> Result<ExampleLoss> {
    if ex.prefix.is_empty() || ex.target.len() != cfg.dim {
        return Err(Error::invalid("training example has an empty prefix or a target of the wrong dimension"));
    }
    let mut env = ex.env.clone();
    if cfg.eise_task_conditioning {
        env.extend_from_slice(&ex.prefix[0]);
        env.extend_from_slice(&ex.goal);
    }
    let o = tape.row_vector(env, false);
    let sei = encode(tape, p, cfg, o)?;
    let o_hat = decode(tape, p, cfg, sei)?;
    let seq = TokenSequence::from_normalized(Vec::new(), ex.goal.clone(), &ex.prefix, cfg.max_seq_len)?;
    let out = forward(tape, p, cfg, sei, &seq)?;
    let target = tape.row_vector(ex.target.clone(), false);
    let total = eise_loss(tape, o, o_hat, target, out.prediction, w)?;
    let recons = mse(tape, o, o_hat)?;
    let semantic = mse(tape, target, out.prediction)?;
    Ok(ExampleLoss { total, recons, semantic })
}

fn loss_and_grads<T: Real>(bundle: &ModelBundle<T>, ex: &TrainingExample<T>, w: EiseLossWeights) -> Result<(f64, GradStore<T>)> {
    let mut tape = Tape::new();
    let p = bundle.bind(&mut tape, true);
    let l = example_loss(&mut tape, &p, &bundle.config, ex, w)?;
    let grads = tape.backward(l.total);
    let store = p
        .iter()
        .map(|(name, &v)| (name.clone(), grads.get_or_zeros(v, bundle.params[name].len())))
        .collect();
    Ok((tape.scalar(l.total).as_f64(), store))
}

/// Mean combined loss over `examples`, evaluated in parallel and summed in order.
pub fn evaluate<T: Real>(bundle: &ModelBundle<T>, examples: &[TrainingExample<T>], w: EiseLossWeights) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples to evaluate"));
    }
    let losses: Vec<Result<f64>> = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let p = bundle.bind(&mut tape, false);
            let l = example_loss(&mut tape, &p, &bundle.config, ex, w)?;
            Ok(tape.scalar(l.total).as_f64())
        })
        .collect();
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / examples.len() as f64)
}

pub fn train<T: Real>(
    examples: &[TrainingExample<T>],
    val_examples: &[TrainingExample<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_observed(examples, val_examples, cfg, |_| {})
}

/// Mini-batch Adam on the joint loss. Per-example gradients are computed in
/// parallel and reduced in example order, so results do not depend on the
/// thread count. The validation loss after each epoch drives the schedule.
pub fn train_observed<T: Real>(
    examples: &[TrainingExample<T>],
    val_examples: &[TrainingExample<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if examples.is_empty() || val_examples.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut bundle = ModelBundle::<T>::init(cfg.model.clone(), cfg.seed)?;
    let mut schedule = LrSchedule::new(cfg.schedule);
    let mut adam = Adam::new(cfg.adam, schedule.lr());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(usize, f64, ModelBundle<T>)> = None;

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        adam.lr = lr;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let parts: Vec<Result<(f64, GradStore<T>)>> = idx
                .par_iter()
                .map(|&i| loss_and_grads(&bundle, &examples[i], cfg.loss))
                .collect();
            let mut batch_loss = 0.0;
            let mut total: Option<GradStore<T>> = None;
            for part in parts {
                let (l, g) = part?;
                batch_loss += l;
                match total.as_mut() {
                    None => total = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.values_mut().zip(g.values()) {
                            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch, lr });
            }
            epoch_sum += batch_loss;
            let mut grads = total.expect("batches are non-empty");
            let inv = T::one() / T::from_usize_lossy(idx.len());
            grads.values_mut().for_each(|g| g.iter_mut().for_each(|x| *x = *x * inv));
            adam.step(&mut bundle.params, &grads);
        }
        let val_loss = evaluate(&bundle, val_examples, cfg.loss)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                lr,
            });
        }
        let entry = EpochLog {
            epoch,
            train_loss: epoch_sum / examples.len() as f64,
            val_loss,
            lr,
        };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, bundle.clone()));
        }
        schedule.step(val_loss);
    }
    let (best_epoch, best_val_loss, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AttentionConfig;
    use crate::pipeline::dataset::Split;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                attention: AttentionConfig {
                    d_model: 8,
                    n_heads: 2,
                    n_layers: 1,
                    d_ffn: 8,
                },
                d_hidden: 8,
                max_obstacles: 2,
                max_seq_len: 8,
                ..Default::default()
            },
            batch_size: 4,
            max_epochs: 3,
            ..Default::default()
        }
    }

    fn examples(n: usize) -> Vec<TrainingExample<f64>> {
        (0..n)
            .map(|k| {
                let prefix: Vec<Vec<f64>> = (0..=k % 4).map(|i| vec![-0.8 + 0.1 * i as f64, -0.7]).collect();
                TrainingExample {
                    workspace_id: "w".into(),
                    split: Split::Train,
                    env: vec![0.1, -0.2, 0.3, 0.2, 0.0, 0.0, -1.0, -1.0],
                    goal: vec![0.8, 0.8],
                    target: vec![-0.7 + 0.1 * (k % 4) as f64, -0.6],
                    prefix,
                }
            })
            .collect()
    }

    fn grads_by_prefix(bundle: &ModelBundle<f64>, ex: &TrainingExample<f64>, w: EiseLossWeights) -> (f64, f64) {
        let (_, g) = loss_and_grads(bundle, ex, w).unwrap();
        let norm = |prefix: &str| {
            g.iter()
                .filter(|(n, _)| n.starts_with(prefix))
                .flat_map(|(_, v)| v.iter())
                .map(|x| x * x)
                .sum::<f64>()
        };
        (norm("eise.enc."), norm("mpt."))
    }

    #[test]
    fn semantic_term_reaches_the_encoder() {
        let b = ModelBundle::<f64>::init(tiny_cfg().model, 2).unwrap();
        let ex = &examples(3)[2];
        let (enc, mpt) = grads_by_prefix(&b, ex, EiseLossWeights { lambda: 0.0, eta: 1.0 });
        assert!(enc > 0.0 && mpt > 0.0);
        let (enc, mpt) = grads_by_prefix(&b, ex, EiseLossWeights { lambda: 1.0, eta: 0.0 });
        assert!(enc > 0.0);
        assert_eq!(mpt, 0.0);
    }

    #[test]
    fn loss_decomposes_into_weighted_terms() {
        let b = ModelBundle::<f64>::init(tiny_cfg().model, 2).unwrap();
        let ex = &examples(2)[1];
        let w = EiseLossWeights { lambda: 0.7, eta: 1.9 };
        let mut tape = Tape::new();
        let p = b.bind(&mut tape, true);
        let l = example_loss(&mut tape, &p, &b.config, ex, w).unwrap();
        let want = 0.7 * tape.scalar(l.recons) + 1.9 * tape.scalar(l.semantic);
        assert!((tape.scalar(l.total) - want).abs() < 1e-14);
        // Gradients are linear in the weights.
        let (_, g) = loss_and_grads(&b, ex, w).unwrap();
        let (_, gr) = loss_and_grads(&b, ex, EiseLossWeights { lambda: 1.0, eta: 0.0 }).unwrap();
        let (_, gs) = loss_and_grads(&b, ex, EiseLossWeights { lambda: 0.0, eta: 1.0 }).unwrap();
        for (name, v) in &g {
            for (i, &x) in v.iter().enumerate() {
                let y = 0.7 * gr[name][i] + 1.9 * gs[name][i];
                assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "{name}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_logs() {
        let ex = examples(10);
        let a = train(&ex, &ex[..4], &tiny_cfg()).unwrap();
        let b = train(&ex, &ex[..4], &tiny_cfg()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best.params, b.best.params);
        assert_eq!(a.log.len(), 3);
        let min = a.log.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_val_loss, min);
        let mut csv = Vec::new();
        write_log_csv(&mut csv, &a.log).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("epoch,train_loss,val_loss,lr\n1,"));
    }

    #[test]
    fn checkpoint_roundtrip_keeps_validation_loss() {
        let ex = examples(6);
        let out = train(&ex, &ex, &tiny_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        out.best.save(&path).unwrap();
        let back = ModelBundle::<f64>::load(&path).unwrap();
        let w = EiseLossWeights::default();
        assert_eq!(evaluate(&out.best, &ex, w).unwrap(), evaluate(&back, &ex, w).unwrap());
        assert_eq!(evaluate(&out.best, &ex, w).unwrap(), out.best_val_loss);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut ex = examples(4);
        ex[2].target = vec![f64::NAN, 0.0];
        match train(&ex, &ex, &tiny_cfg()) {
            Err(Error::NonFiniteLoss { epoch: 1, lr, .. }) => assert_eq!(lr, 0.001),
            other => panic!("{other:?}"),
        }
    }
}
