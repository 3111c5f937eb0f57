use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use super::checkpoint::Checkpoint;
use super::config::Hyper;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::exec::Exec;
use crate::model::{BoundaryDistributions, DropoutKey, Mode, Model, ParamSet, LOG_FLOOR};
use crate::tensor::Real;
use crate::text::{batch_indices, EncodedExample, Example, Span};

/// `−ln p_begin[b] − ln p_end[e]`, probabilities clamped at 1e-12.
pub fn span_loss(dists: &BoundaryDistributions, span: Span) -> Result<Real> {
    let n = dists.len();
    if span.begin < 1 || span.end > n || span.begin > span.end {
        return Err(Error::invalid(format!(
            "gold span {span:?} outside a passage of {n} tokens"
        )));
    }
    let pb = dists.p_begin[span.begin - 1];
    let pe = dists.p_end[span.end - 1];
    if pb.is_nan() || pe.is_nan() {
        return Err(Error::numeric("span loss"));
    }
    Ok(-(pb.max(LOG_FLOOR).ln() + pe.max(LOG_FLOOR).ln()))
}

/// Encodes training examples, truncating passages and dropping examples that
/// have no aligned answer within the cap.
pub fn prepare_training_set(
    model: &Model,
    examples: &[Example],
    max_passage_len: usize,
) -> Vec<EncodedExample> {
    let enc = model.encoder();
    let out: Vec<_> = examples
        .iter()
        .filter_map(|e| enc.encode_for_training(e, max_passage_len))
        .collect();
    if out.len() < examples.len() {
        log::info!(
            "{} of {} training examples unusable (no aligned answer within {max_passage_len} tokens)",
            examples.len() - out.len(),
            examples.len()
        );
    }
    out
}

/// Mean span loss over `examples` and its gradient. Per-example work runs
/// under `exec`; the sum is taken in input order.
pub fn batch_loss_and_gradients(
    model: &Model,
    examples: &[&EncodedExample],
    mode: Mode,
    exec: Exec,
) -> Result<(Real, ParamSet)> {
    if examples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let parts = exec.try_map(examples, |_, ex| model.loss_and_gradients(ex, mode))?;
    let inv = 1.0 / examples.len() as Real;
    let mut iter = parts.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty");
    for (l, g) in iter {
        loss += l;
        for ((_, acc), (_, x)) in total.iter_mut().zip(g.iter()) {
            for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
                *a += b;
            }
        }
    }
    for (_, t) in total.iter_mut() {
        t.data_mut().iter_mut().for_each(|x| *x *= inv);
    }
    Ok((loss * inv, total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: Real,
    pub grad_norm: Real,
}

/// One optimizer step on one batch.
pub fn train_step(
    model: &mut Model,
    optimizer: &mut OptimizerState,
    batch: &[&EncodedExample],
    hyper: &Hyper,
    exec: Exec,
) -> Result<StepStats> {
    let key = DropoutKey {
        seed: hyper.seed,
        step: optimizer.t,
    };
    let (loss, grads) = batch_loss_and_gradients(model, batch, Mode::Training(key), exec)?;
    let grad_norm = adam_step(&mut model.params.trainable, &grads, optimizer, hyper.clip())?;
    Ok(StepStats { loss, grad_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    pub mean_loss: Real,
    pub dev_em: Option<f64>,
    pub dev_f1: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &Model) -> Control + 'a;

#[derive(Default)]
pub struct TrainOptions<'a> {
    pub exec: Exec,
    /// Directory for `latest.ckpt`, `best.ckpt` and `history.json`.
    pub out_dir: Option<&'a Path>,
    /// Scored after every epoch; the best checkpoint is chosen on its F1.
    pub dev: Option<&'a [Example]>,
    pub on_epoch: Option<Box<EpochHook<'a>>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub latest: Checkpoint,
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (epoch as u64).wrapping_add(1)
}

/// Runs epochs `start.progress.epoch + 1 ..= hyper.epochs`. Each epoch
/// shuffles into length-bucketed batches, takes one ADAM step per batch,
/// then scores the dev set. Identical inputs give identical results.
/// A non-finite loss or gradient aborts the run; checkpoints already on disk
/// are left as they were.
pub fn train(
    start: Checkpoint,
    examples: &[Example],
    mut opts: TrainOptions,
) -> Result<TrainOutcome> {
    let mut ckpt = start;
    let hyper = ckpt.hyper.clone();
    let data = prepare_training_set(&ckpt.model, examples, hyper.max_passage_len);
    if data.is_empty() {
        return Err(Error::invalid("no usable training examples"));
    }
    if ckpt.optimizer.is_none() {
        ckpt.optimizer = Some(OptimizerState::with_settings(
            &ckpt.model.params.trainable,
            hyper.learning_rate,
            hyper.beta1,
            hyper.beta2,
            hyper.eps,
        ));
    }
    if let Some(dir) = opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut best = ckpt.clone();
    let mut history = Vec::new();
    for epoch in ckpt.progress.epoch + 1..=hyper.epochs {
        let started = Instant::now();
        let batches = batch_indices(&data, hyper.batch_size, epoch_seed(hyper.seed, epoch));
        let mut loss_sum = 0.0;
        for idx in &batches {
            let batch: Vec<&EncodedExample> = idx.iter().map(|&i| &data[i]).collect();
            let opt = ckpt.optimizer.as_mut().expect("set above");
            let stats = train_step(&mut ckpt.model, opt, &batch, &hyper, opts.exec).map_err(|e| {
                log::error!("epoch {epoch}: training diverged ({e}); keeping the last saved checkpoints");
                e
            })?;
            loss_sum += stats.loss;
        }
        ckpt.progress.epoch = epoch;
        ckpt.progress.step = ckpt.optimizer.as_ref().map_or(0, |o| o.t);

        let (dev_em, dev_f1) = match opts.dev {
            Some(dev) => {
                let eval_opts = EvalOptions {
                    max_span_len: hyper.span_cap(),
                    exec: opts.exec,
                };
                let r = evaluate(&ckpt.model, dev, eval_opts)?.report;
                (Some(r.exact_match), Some(r.f1))
            }
            None => (None, None),
        };
        let improved = match (dev_f1, ckpt.progress.best_dev_f1) {
            (Some(f), Some(b)) => f > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved && dev_f1.is_some() {
            ckpt.progress.best_dev_f1 = dev_f1;
        }
        let record = EpochRecord {
            epoch,
            steps: batches.len() as u64,
            mean_loss: loss_sum / batches.len() as Real,
            dev_em,
            dev_f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4}{} ({:.1}s)",
            record.mean_loss,
            dev_f1
                .map(|f| format!(", dev EM {:.2} F1 {f:.2}", dev_em.unwrap_or(0.0)))
                .unwrap_or_default(),
            record.seconds
        );
        if improved {
            best = ckpt.clone();
        } else {
            best.progress.best_dev_f1 = ckpt.progress.best_dev_f1;
        }
        history.push(record);
        if let Some(dir) = opts.out_dir {
            ckpt.save(dir.join("latest.ckpt"))?;
            if improved {
                best.save(dir.join("best.ckpt"))?;
            }
            let json = serde_json::to_string_pretty(&history).expect("history serializes");
            let path = dir.join("history.json");
            std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        }
        if let Some(hook) = opts.on_epoch.as_mut() {
            if hook(history.last().expect("just pushed"), &ckpt.model) == Control::Stop {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        latest: ckpt,
        best,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dists(pb: &[Real], pe: &[Real]) -> BoundaryDistributions {
        BoundaryDistributions {
            p_begin: pb.to_vec(),
            p_end: pe.to_vec(),
        }
    }

    #[test]
    fn span_loss_fixtures() {
        assert_eq!(
            span_loss(&dists(&[1.0, 0.0], &[0.0, 1.0]), Span::new(1, 2)).unwrap(),
            0.0
        );
        let u = [0.25; 4];
        let l = span_loss(&dists(&u, &u), Span::new(2, 3)).unwrap();
        assert!((l - 2.0 * (4.0 as Real).ln()).abs() < 1e-12);
        let l = span_loss(&dists(&[0.0, 1.0], &[0.0, 1.0]), Span::new(1, 2)).unwrap();
        assert!(l.is_finite() && l <= 2.0 * (1e12 as Real).ln());
        assert!(span_loss(&dists(&u, &u), Span::new(2, 5)).is_err());
    }
}
