use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{assemble_features, FeatureFlags, FeatureStats, PreparedSample};
use super::stats::{mae_by_subject, FoldSplit};
use super::PipelineError;
use crate::geom::Vec3;
use crate::model::{sample_coarse, Forward, GreatModel, ModelConfig, VatrModel};
use crate::nn::{adam_step, exp_lr_decay, AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::rng::{stream, substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub seed: u64,
    /// Evaluate every this many epochs (and always after the last); 0 = last only.
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            epochs: 400,
            batch_size: 256,
            lr: 3e-4,
            lr_decay: 1.0,
            seed: 0,
            eval_every: 1,
        }
    }

    pub fn finetune() -> Self {
        Self {
            epochs: 1000,
            batch_size: 8,
            lr: 3e-4,
            lr_decay: 0.9977,
            seed: 0,
            eval_every: 1,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) || !(self.lr_decay > 0.0) {
            return Err(PipelineError::BadConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::finetune()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    /// Training accuracy (fine-tuning) or MAE (pre-training) pooled over the epoch.
    pub metric: f64,
    /// Same metric on the held-out samples, when evaluated.
    pub eval_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
    /// Hash of every (sample, coarse subset) visited, in order.
    pub schedule_digest: u64,
}

impl RunLog {
    /// Epochs, learning rates, losses and metrics; wall-clock is left out so that
    /// identical runs give identical files.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss,metric,eval_metric\n");
        for r in &self.records {
            let eval = r.eval_metric.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{},{},{}", r.epoch, r.lr, r.loss, r.metric, eval).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn last(&self) -> &EpochRecord {
        self.records.last().expect("at least one epoch")
    }

    /// Last logged held-out metric.
    pub fn final_eval(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.eval_metric)
    }
}

/// Fixed evaluation subset for a sample, independent of training progress.
fn eval_coarse(id: usize, n: usize, n_coarse: usize, seed: u64) -> Result<Vec<usize>, PipelineError> {
    Ok(sample_coarse(n, n_coarse.min(n), &mut substream(seed, Stream::EvalSampling, id as u64))?)
}

/// One step's contribution: loss node, metric numerator and denominator.
type StepOut = (Var, f64, usize);

/// Shared minibatch loop: shuffled order from the shuffle stream, fresh coarse
/// subsets from the sampling stream on every forward, Adam with exponential decay.
fn fit<M>(
    model: &mut M,
    store_of: fn(&mut M) -> &mut ParamStore,
    sizes: &[usize],
    n_coarse: usize,
    cfg: &TrainConfig,
    step: impl Fn(&M, &mut Graph, usize, &[usize]) -> Result<StepOut, PipelineError>,
    evaluate: impl Fn(&M) -> Result<Option<f64>, PipelineError>,
) -> Result<RunLog, PipelineError> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(PipelineError::MissingField("empty training set".into()));
    }
    let start = Instant::now();
    let mut shuffle = stream(cfg.seed, Stream::Shuffle);
    let mut sampling = stream(cfg.seed, Stream::Sampling);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    let mut digest = DefaultHasher::new();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = exp_lr_decay(cfg.lr, cfg.lr_decay, epoch);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut num, mut den) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            store_of(model).zero_grad();
            for &i in batch {
                let coarse = sample_coarse(sizes[i], n_coarse.min(sizes[i]), &mut sampling)?;
                (i, &coarse).hash(&mut digest);
                let mut g = Graph::new();
                let (loss, a, b) = step(model, &mut g, i, &coarse)?;
                loss_sum += g.value(loss).item();
                num += a;
                den += b;
                g.backward(loss)?;
                store_of(model).accumulate(&g, 1.0 / batch.len() as f64);
            }
            adam_step(
                store_of(model),
                &AdamConfig {
                    lr,
                    ..AdamConfig::default()
                },
            );
        }
        let last = epoch + 1 == cfg.epochs;
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        let eval_metric = if last || due { evaluate(model)? } else { None };
        records.push(EpochRecord {
            epoch,
            lr,
            loss: loss_sum / sizes.len() as f64,
            metric: num / den.max(1) as f64,
            eval_metric,
        });
    }
    Ok(RunLog {
        seed: cfg.seed,
        records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        schedule_digest: digest.finish(),
    })
}

fn hks_target(s: &PreparedSample) -> Result<&crate::spectral::HksField, PipelineError> {
    s.hks
        .as_ref()
        .ok_or_else(|| PipelineError::MissingField(format!("sample {}: hks", s.id)))
}

fn positions_features(p: &[Vec3]) -> Tensor {
    Tensor::from_vec(p.len(), 3, p.iter().flat_map(|v| v.to_array()).collect()).expect("n x 3")
}

fn gather_target(s: &PreparedSample, coarse: &[usize]) -> Result<Tensor, PipelineError> {
    let h = hks_target(s)?;
    let data = coarse.iter().flat_map(|&i| h.row(i).iter().copied()).collect();
    Ok(Tensor::from_vec(coarse.len(), h.t(), data)?)
}

/// Per-sample MAE of the coarse-point HKS predictions on the fixed evaluation
/// subsets, summarized as (mean, population std) across samples.
pub fn pretrain_mae(model: &VatrModel, samples: &[&PreparedSample], seed: u64) -> Result<(f64, f64), PipelineError> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let coarse = eval_coarse(s.id, s.len(), model.config.n_coarse, seed)?;
        let mut g = Graph::new();
        let out = model.forward(&mut g, &positions_features(&s.positions), &s.positions, &coarse, false)?.output;
        preds.push(g.value(out).data.clone());
        targets.push(gather_target(s, &coarse)?.data);
    }
    mae_by_subject(&preds, &targets)
}

/// MAE of predicting the per-time training mean everywhere, on the same
/// evaluation subsets as [`pretrain_mae`].
pub fn constant_predictor_mae(
    train: &[&PreparedSample],
    val: &[&PreparedSample],
    n_coarse: usize,
    seed: u64,
) -> Result<(f64, f64), PipelineError> {
    let t = hks_target(train.first().ok_or_else(|| PipelineError::MissingField("empty training set".into()))?)?.t();
    let mut mean = vec![0.0; t];
    let mut count = 0usize;
    for s in train {
        let h = hks_target(s)?;
        for i in 0..h.n {
            mean.iter_mut().zip(h.row(i)).for_each(|(m, v)| *m += v);
        }
        count += h.n;
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for s in val {
        let coarse = eval_coarse(s.id, s.len(), n_coarse, seed)?;
        targets.push(gather_target(s, &coarse)?.data);
        preds.push(mean.repeat(coarse.len()));
    }
    mae_by_subject(&preds, &targets)
}

/// Coarse-point HKS regression with an L1 loss. Inputs are the standardized
/// positions; the eval metric is the validation MAE from [`pretrain_mae`].
pub fn pretrain(
    train: &[&PreparedSample],
    val: &[&PreparedSample],
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(VatrModel, RunLog), PipelineError> {
    for s in train.iter().chain(val) {
        let t = hks_target(s)?.t();
        if model_cfg.c_in != 3 || model_cfg.c_out != t || model_cfg.decode {
            return Err(PipelineError::BadConfig(format!(
                "pre-training needs c_in 3, c_out {t} and no decoding; got c_in {}, c_out {}, decode {}",
                model_cfg.c_in, model_cfg.c_out, model_cfg.decode
            )));
        }
    }
    let features: Vec<Tensor> = train.iter().map(|s| positions_features(&s.positions)).collect();
    let sizes: Vec<usize> = train.iter().map(|s| s.len()).collect();
    let n_coarse = model_cfg.n_coarse;
    let mut model = VatrModel::new(model_cfg, cfg.seed)?;
    let log = fit(
        &mut model,
        |m| &mut m.store,
        &sizes,
        n_coarse,
        cfg,
        |m, g, i, coarse| {
            let s = train[i];
            let out = m.forward(g, &features[i], &s.positions, coarse, false)?.output;
            let target = g.constant(gather_target(s, coarse)?);
            let loss = g.l1_loss(out, target)?;
            let count = coarse.len() * m.config.c_out;
            let abs_sum = g.value(loss).item() * count as f64;
            Ok((loss, abs_sum, count))
        },
        |m| {
            if val.is_empty() {
                Ok(None)
            } else {
                Ok(Some(pretrain_mae(m, val, cfg.seed)?.0))
            }
        },
    )?;
    Ok((model, log))
}

/// Fine-tuning input: standardized features and per-point labels.
#[derive(Debug, Clone)]
pub struct SegSample<'a> {
    pub id: usize,
    pub positions: &'a [Vec3],
    pub features: Tensor,
    pub labels: &'a [usize],
}

/// Segmentation model: the scratch baseline or the two-branch fused model.
#[derive(Debug, Clone)]
pub enum SegModel {
    Baseline(VatrModel),
    Great(GreatModel),
}

impl SegModel {
    pub fn store(&self) -> &ParamStore {
        match self {
            SegModel::Baseline(m) => &m.store,
            SegModel::Great(m) => &m.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            SegModel::Baseline(m) => &mut m.store,
            SegModel::Great(m) => &mut m.store,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            SegModel::Baseline(m) => &m.config,
            SegModel::Great(m) => &m.config,
        }
    }

    /// Per-point logits at fine resolution.
    pub fn forward(&self, g: &mut Graph, features: &Tensor, positions: &[Vec3], coarse: &[usize]) -> Result<Forward, PipelineError> {
        Ok(match self {
            SegModel::Baseline(m) => m.forward(g, features, positions, coarse, true)?,
            SegModel::Great(m) => m.forward(g, features, positions, coarse)?,
        })
    }

    pub fn predict(&self, features: &Tensor, positions: &[Vec3], coarse: &[usize]) -> Result<Vec<usize>, PipelineError> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, features, positions, coarse)?.output;
        Ok(argmax_rows(g.value(out)))
    }
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows)
        .map(|i| {
            t.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                .0
        })
        .collect()
}

/// Pooled accuracy over the samples' fixed evaluation subsets.
pub fn seg_accuracy(model: &SegModel, samples: &[SegSample], seed: u64) -> Result<f64, PipelineError> {
    let (mut correct, mut total) = (0usize, 0usize);
    for s in samples {
        let coarse = eval_coarse(s.id, s.positions.len(), model.config().n_coarse, seed)?;
        let pred = model.predict(&s.features, s.positions, &coarse)?;
        correct += pred.iter().zip(s.labels).filter(|(a, b)| a == b).count();
        total += pred.len();
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Cross-entropy training of the baseline (`pretrained == None`) or of a fused
/// model whose frozen branch is loaded from `pretrained`. Given the same seed
/// both see identical sample order and coarse subsets.
pub fn finetune(
    train: &[SegSample],
    eval: &[SegSample],
    pretrained: Option<&VatrModel>,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(SegModel, RunLog), PipelineError> {
    let model_cfg = ModelConfig {
        decode: true,
        ..model_cfg
    };
    let mut model = match pretrained {
        None => SegModel::Baseline(VatrModel::new(model_cfg.clone(), cfg.seed)?),
        Some(p) => {
            let frozen = ModelConfig {
                decode: false,
                ..p.config.clone()
            };
            let mut m = GreatModel::new(model_cfg.clone(), frozen, cfg.seed)?;
            m.load_pretrained(&p.store)?;
            SegModel::Great(m)
        }
    };
    let sizes: Vec<usize> = train.iter().map(|s| s.positions.len()).collect();
    let log = fit(
        &mut model,
        SegModel::store_mut,
        &sizes,
        model_cfg.n_coarse,
        cfg,
        |m, g, i, coarse| {
            let s = &train[i];
            let out = m.forward(g, &s.features, s.positions, coarse)?.output;
            let loss = g.cross_entropy(out, s.labels)?;
            let correct = argmax_rows(g.value(out)).iter().zip(s.labels).filter(|(a, b)| a == b).count();
            Ok((loss, correct as f64, s.labels.len()))
        },
        |m| {
            if eval.is_empty() {
                Ok(None)
            } else {
                Ok(Some(seg_accuracy(m, eval, cfg.seed)?))
            }
        },
    )?;
    Ok((model, log))
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub log: RunLog,
    /// Training accuracy of the last epoch.
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    pub stats: FeatureStats,
    pub model: SegModel,
}

/// Grouped cross validation. Feature statistics are fitted on each fold's
/// training samples only; fold `f` trains with seed `cfg.seed + f`.
pub fn cross_validate(
    samples: &[PreparedSample],
    split: &FoldSplit,
    flags: FeatureFlags,
    pretrained: Option<&VatrModel>,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<FoldResult>, PipelineError> {
    let mut raw = Vec::with_capacity(samples.len());
    let mut layout = None;
    for s in samples {
        let (t, l) = assemble_features(s, flags)?;
        layout = Some(l);
        raw.push(t);
    }
    let layout = layout.ok_or_else(|| PipelineError::MissingField("no samples".into()))?;
    let labels: Vec<&[usize]> = samples
        .iter()
        .map(|s| s.labels.as_deref().ok_or_else(|| PipelineError::MissingField(format!("sample {}: labels", s.id))))
        .collect::<Result<_, _>>()?;
    let model_cfg = ModelConfig {
        c_in: layout.c_in(),
        ..model_cfg
    };
    (0..split.k())
        .into_par_iter()
        .map(|fold| {
            let train_idx = split.train_indices(fold);
            let stats = FeatureStats::fit(&train_idx.iter().map(|&i| &raw[i]).collect::<Vec<_>>(), &layout)?;
            let seg = |i: usize| SegSample {
                id: samples[i].id,
                positions: &samples[i].positions,
                features: stats.apply(&raw[i]),
                labels: labels[i],
            };
            let train: Vec<SegSample> = train_idx.iter().map(|&i| seg(i)).collect();
            let eval: Vec<SegSample> = split.folds[fold].iter().map(|&i| seg(i)).collect();
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(fold as u64),
                ..cfg.clone()
            };
            let (model, log) = finetune(&train, &eval, pretrained, model_cfg.clone(), &fold_cfg)?;
            Ok(FoldResult {
                fold,
                train_accuracy: log.last().metric,
                eval_accuracy: log.final_eval().unwrap_or(f64::NAN),
                log,
                stats,
                model,
            })
        })
        .collect()
}
