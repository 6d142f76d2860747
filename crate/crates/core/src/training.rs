//! Maximum-likelihood training.
//!
//! The objective is the plain sum of per-step negative log-likelihoods under
//! teacher forcing; targets get EOS appended so the model learns to stop.
//! Reported losses are per-target-token means. Optimization is Adam with
//! global-norm gradient clipping; early stopping watches dev loss.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::ArrayD;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::{NodeId, Scalar, Tape};
use crate::corpus::{build_vocabulary, CorpusError, CorpusSplits, Meeting, EOS_ID, UNK_ID};
use crate::model::{
    decode_step, encode_meeting, init_decoder, BoundParams, Checkpoint, DecoderState, Dropout,
    ModelConfig, ModelError, SpeakerTable, StepNodes,
};
use crate::par;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("meeting {0} has no reference summary")]
    MissingSummary(String),
    #[error("training split is empty")]
    EmptyCorpus,
    #[error("divergence: {0}")]
    Divergence(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub dropout: f64,
    /// Meetings per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev-loss improvement before stopping.
    pub patience: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            max_grad_norm: 2.0,
            dropout: 0.5,
            batch_size: 1,
            max_epochs: 30,
            patience: 5,
            rng_seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 || self.batch_size == 0 {
            return Err(TrainError::Divergence(
                "learning rate, grad norm and batch size must be positive".into(),
            ));
        }
        if self.patience == 0 {
            return Err(TrainError::Divergence("patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Derives an independent stream seed from the run seed and a purpose label,
/// so partial reruns stay reproducible.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Target ids for teacher forcing: in-vocabulary words keep their ids, OOVs
/// present in the source use their extended copy id, the rest fall back to
/// UNK; EOS is appended.
pub fn target_ids<S: Scalar>(
    ckpt: &Checkpoint<S>,
    extended: &crate::corpus::ExtendedVocab,
    summary: &[String],
) -> Vec<usize> {
    summary
        .iter()
        .map(|w| {
            ckpt.vocab
                .id_of(w)
                .or_else(|| extended.id_of(w))
                .unwrap_or(UNK_ID)
        })
        .chain(std::iter::once(EOS_ID))
        .collect()
}

/// Builds the teacher-forced forward pass for one meeting on the given tape.
/// Returns the summed NLL node, the target ids, and per-step output nodes.
pub fn teacher_forced_loss<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundParams,
    ckpt: &Checkpoint<S>,
    meeting: &Meeting,
    dropout: &mut Dropout<'_, S>,
) -> Result<(NodeId, Vec<usize>, Vec<StepNodes>)> {
    let summary = meeting
        .reference_summary
        .as_ref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| TrainError::MissingSummary(meeting.meeting_id.clone()))?;
    let (enc, copy) = encode_meeting(
        tape,
        bound,
        &ckpt.config,
        &ckpt.speakers,
        &ckpt.vocab,
        meeting,
        dropout,
    )?;
    let targets = target_ids(ckpt, &copy.extended, summary);

    let mut state = init_decoder(tape, bound, &enc);
    let mut log_probs = Vec::with_capacity(targets.len());
    let mut steps = Vec::with_capacity(targets.len());
    for &target in &targets {
        let (next, nodes) =
            decode_step(tape, bound, &ckpt.config, &state, &enc, &copy, dropout)?;
        let p = tape.gather(nodes.final_dist, target);
        log_probs.push(tape.ln(p));
        steps.push(nodes);
        state = DecoderState {
            prev_token: target,
            ..next
        };
    }
    let total = tape.add_n(log_probs);
    let loss = tape.neg(total);
    Ok((loss, targets, steps))
}

/// Summed negative log-likelihood of one meeting plus its target length.
/// `dropout_rng` of `None` evaluates without dropout.
pub fn compute_loss<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meeting: &Meeting,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(S, usize)> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &ckpt.params);
    let mut dropout = match dropout_rng {
        Some(rng) => Dropout::train(ckpt.config.dropout, rng),
        None => Dropout::eval(),
    };
    let (loss, targets, _) = teacher_forced_loss(&mut tape, &bound, ckpt, meeting, &mut dropout)?;
    Ok((tape.scalar_value(loss), targets.len()))
}

/// Loss plus per-parameter gradients for one meeting.
pub fn loss_and_gradients<S: Scalar>(
    ckpt: &Checkpoint<S>,
    meeting: &Meeting,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(S, usize, BTreeMap<String, ArrayD<S>>)> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &ckpt.params);
    let mut dropout = match dropout_rng {
        Some(rng) => Dropout::train(ckpt.config.dropout, rng),
        None => Dropout::eval(),
    };
    let (loss, targets, _) = teacher_forced_loss(&mut tape, &bound, ckpt, meeting, &mut dropout)?;
    let value = tape.scalar_value(loss);
    if !value.as_f64().is_finite() {
        return Err(TrainError::Divergence(format!(
            "non-finite loss on meeting {}",
            meeting.meeting_id
        )));
    }
    let grads = tape.backward(loss);
    let grads = bound.gradients(&grads, &ckpt.params);
    Ok((value, targets.len(), grads))
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm; non-finite gradients signal divergence.
pub fn clip_gradients<S: Scalar>(
    grads: &mut BTreeMap<String, ArrayD<S>>,
    max_norm: f64,
) -> Result<f64> {
    let mut sq_sum = 0.0f64;
    for tensor in grads.values() {
        for v in tensor.iter() {
            let v = v.as_f64();
            sq_sum += v * v;
        }
    }
    if !sq_sum.is_finite() {
        return Err(TrainError::Divergence("non-finite gradient".into()));
    }
    let norm = sq_sum.sqrt();
    if norm > max_norm {
        let scale = S::from_f64(max_norm / norm);
        for tensor in grads.values_mut() {
            tensor.mapv_inplace(|v| v * scale);
        }
    }
    Ok(norm)
}

/// Adam with bias correction.
pub struct Adam<S> {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: usize,
    first: BTreeMap<String, ArrayD<S>>,
    second: BTreeMap<String, ArrayD<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(learning_rate: f64) -> Adam<S> {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn apply(
        &mut self,
        params: &mut crate::model::ModelParameters<S>,
        grads: &BTreeMap<String, ArrayD<S>>,
    ) {
        self.step += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one = S::one();
        let corr1 = S::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = S::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let lr = S::from_f64(self.learning_rate);
        let eps = S::from_f64(self.epsilon);
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = grads.get(name) else { continue };
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(tensor.raw_dim()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(tensor.raw_dim()));
            ndarray::Zip::from(&mut *m).and(grad).for_each(|m, &g| {
                *m = b1 * *m + (one - b1) * g;
            });
            ndarray::Zip::from(&mut *v).and(grad).for_each(|v, &g| {
                *v = b2 * *v + (one - b2) * g * g;
            });
            ndarray::Zip::from(tensor)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / corr1;
                    let v_hat = v / corr2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Dev-loss early stopping: stop after `patience` epochs without strict
/// improvement.
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Feeds one dev loss; returns (improved, should_stop).
    pub fn observe(&mut self, dev_loss: f64) -> (bool, bool) {
        if dev_loss < self.best {
            self.best = dev_loss;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Per-target-token mean training loss.
    pub train_loss: f64,
    /// Per-target-token mean dev loss.
    pub dev_loss: f64,
}

pub struct TrainOutcome<S> {
    pub best: Checkpoint<S>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub history: Vec<EpochStats>,
}

/// Mean per-token loss of a split, meetings evaluated concurrently.
pub fn mean_loss<S: Scalar>(ckpt: &Checkpoint<S>, meetings: &[Meeting]) -> Result<f64> {
    let results = par::map_slice(meetings, |m| compute_loss(ckpt, m, None));
    let mut total = 0.0;
    let mut tokens = 0usize;
    for r in results {
        let (loss, len) = r?;
        total += loss.as_f64();
        tokens += len;
    }
    if tokens == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    Ok(total / tokens as f64)
}

/// MLE training loop. Shuffles per epoch, clips gradients, applies Adam,
/// evaluates dev loss each epoch, retains the best-dev checkpoint, stops on
/// patience exhaustion or `max_epochs`.
///
/// With `initial` absent, a fresh model is built: vocabulary over the
/// training split only (capacity `model_config.vocab_size`), speakers from
/// the training split, weights uniform in [-0.1, 0.1]. An empty dev split
/// falls back to the training loss for model selection.
pub fn train<S: Scalar>(
    splits: &CorpusSplits,
    train_config: &TrainConfig,
    model_config: &ModelConfig,
    initial: Option<Checkpoint<S>>,
    log: &mut dyn Write,
) -> Result<TrainOutcome<S>> {
    train_with_checkpoints(splits, train_config, model_config, initial, log, None)
}

/// [`train`] that additionally writes `checkpoint_epoch_<n>.json` into
/// `checkpoint_dir` whenever epoch `n` improves the dev loss.
pub fn train_with_checkpoints<S: Scalar>(
    splits: &CorpusSplits,
    train_config: &TrainConfig,
    model_config: &ModelConfig,
    initial: Option<Checkpoint<S>>,
    log: &mut dyn Write,
    checkpoint_dir: Option<&std::path::Path>,
) -> Result<TrainOutcome<S>> {
    train_config.validate()?;
    if splits.train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    for m in &splits.train {
        if m.reference_summary.as_ref().filter(|s| !s.is_empty()).is_none() {
            return Err(TrainError::MissingSummary(m.meeting_id.clone()));
        }
    }
    let mut ckpt = match initial {
        Some(c) => c,
        None => {
            let vocab = build_vocabulary(&splits.train, model_config.vocab_size)?;
            let speakers = SpeakerTable::from_meetings(&splits.train);
            let mut config = model_config.clone();
            config.dropout = train_config.dropout;
            let mut init_rng =
                ChaCha8Rng::seed_from_u64(sub_seed(train_config.rng_seed, "init"));
            Checkpoint::fresh(config, vocab, speakers, &mut init_rng)?
        }
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sub_seed(train_config.rng_seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(sub_seed(train_config.rng_seed, "dropout"));
    let mut optimizer: Adam<S> = Adam::new(train_config.learning_rate);
    let mut stopper = EarlyStopper::new(train_config.patience);

    let mut best = ckpt.clone();
    let mut best_epoch = 0usize;
    let mut best_dev = f64::INFINITY;
    let mut history = Vec::new();

    for epoch in 1..=train_config.max_epochs {
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(train_config.batch_size) {
            let mut accum: Option<BTreeMap<String, ArrayD<S>>> = None;
            for &i in chunk {
                let meeting = &splits.train[i];
                let (loss, len, grads) =
                    loss_and_gradients(&ckpt, meeting, Some(&mut dropout_rng))?;
                epoch_loss += loss.as_f64();
                epoch_tokens += len;
                accum = Some(match accum {
                    None => grads,
                    Some(mut acc) => {
                        for (name, g) in grads {
                            let slot = acc.get_mut(&name).expect("same parameter set");
                            *slot = &*slot + &g;
                        }
                        acc
                    }
                });
            }
            let mut grads = accum.expect("non-empty chunk");
            if chunk.len() > 1 {
                let inv = S::from_f64(1.0 / chunk.len() as f64);
                for g in grads.values_mut() {
                    g.mapv_inplace(|v| v * inv);
                }
            }
            clip_gradients(&mut grads, train_config.max_grad_norm)?;
            optimizer.apply(&mut ckpt.params, &grads);
        }
        let train_loss = epoch_loss / epoch_tokens.max(1) as f64;
        let dev_loss = if splits.dev.is_empty() {
            train_loss
        } else {
            mean_loss(&ckpt, &splits.dev)?
        };
        writeln!(log, "epoch {epoch} train_loss {train_loss:.6} dev_loss {dev_loss:.6}")?;
        history.push(EpochStats {
            epoch,
            train_loss,
            dev_loss,
        });

        let (improved, should_stop) = stopper.observe(dev_loss);
        if improved {
            best = ckpt.clone();
            best_epoch = epoch;
            best_dev = dev_loss;
            if let Some(dir) = checkpoint_dir {
                best.save(dir.join(format!("checkpoint_epoch_{epoch}.json")))?;
            }
        }
        if should_stop {
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        best_dev_loss: best_dev,
        history,
    })
}

pub struct PretrainOutcome<S> {
    /// Best checkpoint of the pseudo phase (the zero-shot model).
    pub pretrained: Checkpoint<S>,
    pub pretrain_history: Vec<EpochStats>,
    /// Outcome of fine-tuning on the real corpus.
    pub finetuned: TrainOutcome<S>,
}

/// Pre-trains on the pseudo corpus until dev-pseudo convergence (patience on
/// dev-pseudo loss), then fine-tunes on the real corpus from that checkpoint.
/// The vocabulary and speaker table come from the real training split and are
/// shared by both phases.
pub fn pretrain_finetune<S: Scalar>(
    pseudo: &CorpusSplits,
    real: &CorpusSplits,
    pretrain_config: &TrainConfig,
    finetune_config: &TrainConfig,
    model_config: &ModelConfig,
    log: &mut dyn Write,
) -> Result<PretrainOutcome<S>> {
    if real.train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let vocab = build_vocabulary(&real.train, model_config.vocab_size)?;
    let speakers = SpeakerTable::from_meetings(&real.train);
    let mut config = model_config.clone();
    config.dropout = pretrain_config.dropout;
    let mut init_rng = ChaCha8Rng::seed_from_u64(sub_seed(pretrain_config.rng_seed, "init"));
    let initial: Checkpoint<S> = Checkpoint::fresh(config, vocab, speakers, &mut init_rng)?;

    let (pretrained, pretrain_history) = if pretrain_config.max_epochs == 0 {
        (initial, Vec::new())
    } else {
        if pseudo.train.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        writeln!(log, "phase pretrain")?;
        let outcome = train(pseudo, pretrain_config, model_config, Some(initial), log)?;
        (outcome.best, outcome.history)
    };

    writeln!(log, "phase finetune")?;
    let finetuned = train(
        real,
        finetune_config,
        model_config,
        Some(pretrained.clone()),
        log,
    )?;
    Ok(PretrainOutcome {
        pretrained,
        pretrain_history,
        finetuned,
    })
}
