use super::{decide, sgd_step, Decision, Mode, ModelInput, ModelParams, INPUT_LEN, OUTPUT_LEN};
use crate::error::{Error, Result};
use crate::muxdatagen::PucchRecord;
use crate::rng::{mix_seed, SimRng};
use crate::waveform::AlphaSet;

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hidden layer widths; input and output sizes are fixed.
    pub hidden: Vec<usize>,
    /// Multiplier applied to the UE-count input.
    pub meta_scale: f32,
    /// Rule used to score validation accuracy.
    pub decision: Decision,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            momentum: 0.9,
            dropout: 0.5,
            epochs: 40,
            batch_size: 128,
            seed: 0,
            hidden: vec![512, 512, 512],
            meta_scale: 1.0,
            decision: Decision::default(),
        }
    }
}

impl Hyper {
    pub fn arch(&self) -> Vec<usize> {
        let mut a = vec![INPUT_LEN];
        a.extend(&self.hidden);
        a.push(OUTPUT_LEN);
        a
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be non-zero".into()));
        }
        if !(self.meta_scale.is_finite()) {
            return Err(Error::Config("meta scale must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean mini-batch loss seen during the epoch (dropout active).
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams<f32>,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn pack(records: &[&PucchRecord], meta_scale: f32) -> Result<(Vec<f32>, Vec<AlphaSet>)> {
    let mut x = Vec::with_capacity(records.len() * INPUT_LEN);
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        x.extend_from_slice(&ModelInput::from_record(r, r.n_ue_true, meta_scale)?.x);
        y.push(r.label);
    }
    Ok((x, y))
}

/// Inference-mode loss and subset accuracy with the true UE count as metadata.
pub fn evaluate(
    params: &ModelParams<f32>,
    records: &[PucchRecord],
    meta_scale: f32,
    decision: Decision,
) -> Result<(f64, f64)> {
    const CHUNK: usize = 512;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in records.chunks(CHUNK) {
        let refs: Vec<&PucchRecord> = chunk.iter().collect();
        let (x, y) = pack(&refs, meta_scale)?;
        let pass = params.forward(&x, chunk.len(), Mode::Infer)?;
        loss += pass.loss(&y)? as f64 * chunk.len() as f64;
        let probs = pass.probabilities();
        for ((p, label), r) in probs.chunks_exact(OUTPUT_LEN).zip(&y).zip(chunk) {
            if decide(p, decision, r.n_ue_true) == *label {
                correct += 1;
            }
        }
    }
    let n = records.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch SGD with momentum. Records are reshuffled every epoch from a
/// seed derived from `hyper.seed`; the returned weights are those with the
/// highest validation subset accuracy (earliest epoch on ties).
pub fn train(train_set: &[PucchRecord], val_set: &[PucchRecord], hyper: &Hyper) -> Result<TrainOutcome> {
    hyper.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }

    let mut init_rng = SimRng::new(mix_seed(hyper.seed, &[0]));
    let mut params = ModelParams::<f32>::init(&hyper.arch(), &mut init_rng)?;
    let mut vel = params.zeros_like();
    let lr = hyper.lr as f32;
    let momentum = hyper.momentum as f32;

    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut log = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..hyper.epochs {
        let mut shuffle_rng = SimRng::new(mix_seed(hyper.seed, &[1, epoch as u64]));
        let mut dropout_rng = SimRng::new(mix_seed(hyper.seed, &[2, epoch as u64]));
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for idx in order.chunks(hyper.batch_size) {
            let refs: Vec<&PucchRecord> = idx.iter().map(|&i| &train_set[i]).collect();
            let (x, y) = pack(&refs, hyper.meta_scale)?;
            let pass = params.forward(
                &x,
                refs.len(),
                Mode::Train {
                    dropout: hyper.dropout,
                    rng: &mut dropout_rng,
                },
            )?;
            let loss = pass.loss(&y)? as f64;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss in epoch {epoch}")));
            }
            loss_sum += loss * refs.len() as f64;
            let grads = params.backward(&pass, &y)?;
            sgd_step(&mut params, &mut vel, &grads, lr, momentum)?;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("non-finite weights after epoch {epoch}")));
        }

        let (val_loss, val_accuracy) = evaluate(&params, val_set, hyper.meta_scale, hyper.decision)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss in epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy,
        });
        if best.as_ref().map_or(true, |(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, params.clone()));
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch,
        log,
    })
}
