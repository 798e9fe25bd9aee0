//! Toy bi-objective trainer: a sequence-to-sequence generator trained with
//! teacher forcing, plus a frozen discriminator that reads the generator's
//! logits and pushes them towards the counterfactual gender.
//!
//! Training runs in three phases: supervised warm-up, discriminator
//! pretraining on the warm generator's logits, then the combined objective
//! `L_gen + λ·L_disc` with the discriminator frozen.

mod discriminator;
mod generator;
mod gradcheck;
mod synthetic;
pub(crate) mod tensor;
mod vocab;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Gender;
use crate::{Error, Result};

pub use discriminator::{
    discriminator_forward, discriminator_loss, Discriminator, DiscriminatorTrace, BCE_EPS, LOGIT_CLAMP,
};
pub use generator::{generator_forward, generator_loss, greedy_decode, GeneratorParams, GENERATOR_TENSORS};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use synthetic::{flip_oracle, synthetic_corpus, SyntheticExample, GENDERED_PAIRS};
pub use tensor::Matrix;
pub use vocab::{toy_tokens, Vocab, BOS_ID, EOS_ID, PAD_ID, UNK_ID};

use discriminator::bce_from_logit;
use generator::{backward, forward_trace, generator_loss_grad};

/// A source/target pair of word-id sequences (no specials).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub source_gender: Gender,
}

impl Example {
    pub fn new(vocab: &Vocab, source: &str, target: &str, source_gender: Gender) -> Self {
        Example {
            source: vocab.encode(&toy_tokens(source)),
            target: vocab.encode(&toy_tokens(target)),
            source_gender,
        }
    }

    fn decoder_inputs(&self) -> Vec<usize> {
        std::iter::once(BOS_ID).chain(self.target.iter().copied()).collect()
    }

    fn gold(&self) -> Vec<usize> {
        self.target.iter().copied().chain(std::iter::once(EOS_ID)).collect()
    }

    /// The counterfactual label `1 - l_g`: the target's gender.
    pub fn counterfactual_label(&self) -> u8 {
        1 - self.source_gender.as_label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    #[serde(rename = "L_gen")]
    pub generator: f64,
    #[serde(rename = "L_disc")]
    pub discriminator: f64,
    pub total: f64,
}

/// Batch-mean losses and generator gradients of `L_gen + λ·L_disc`.
///
/// With `λ = 0` the discriminator is only evaluated for reporting and no
/// gradient flows through it.
pub fn combined_loss_and_grad(
    params: &GeneratorParams,
    disc: Option<&Discriminator>,
    batch: &[Example],
    lambda: f64,
) -> (LossComponents, GeneratorParams) {
    let mut grads = params.zeros_like();
    let (gen, dis) = accumulate(params, disc, batch, lambda, Some(&mut grads));
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    let generator = gen / n;
    let discriminator = dis / n;
    (
        LossComponents {
            generator,
            discriminator,
            total: generator + lambda * discriminator,
        },
        grads,
    )
}

/// Summed losses; gradients are summed into `grads` when given.
fn accumulate(
    params: &GeneratorParams,
    disc: Option<&Discriminator>,
    batch: &[Example],
    lambda: f64,
    mut grads: Option<&mut GeneratorParams>,
) -> (f64, f64) {
    let mut gen = 0.0;
    let mut dis = 0.0;
    for ex in batch {
        let trace = forward_trace(params, &ex.source, &ex.decoder_inputs());
        let (l, mut dlogits) = generator_loss_grad(&trace.logits, &ex.gold());
        gen += l;
        if let Some(d) = disc {
            let dt = d.forward(&trace.logits);
            let (ld, dlogit) = bce_from_logit(dt.logit, ex.counterfactual_label());
            dis += ld;
            if lambda != 0.0 && grads.is_some() {
                let through = d.backward(&dt, dlogit, None);
                tensor::axpy(&mut dlogits.data, lambda, &through.data);
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            backward(params, &trace, &dlogits, g);
        }
    }
    (gen, dis)
}

/// How [`combined_loss`] treats the discriminator's clamp and rectifier decisions.
pub(crate) enum Gates<'a> {
    /// Compute them and append one pattern per example.
    Record(&'a mut Vec<Vec<bool>>),
    /// Reuse previously recorded patterns.
    Replay(&'a [Vec<bool>]),
}

/// Batch-mean combined loss without gradients.
pub(crate) fn combined_loss(
    params: &GeneratorParams,
    disc: Option<&Discriminator>,
    batch: &[Example],
    lambda: f64,
    mut gates: Gates<'_>,
) -> f64 {
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let trace = forward_trace(params, &ex.source, &ex.decoder_inputs());
        total += generator_loss(&trace.logits, &ex.gold());
        if let Some(d) = disc {
            let dt = match &mut gates {
                Gates::Record(out) => {
                    let dt = d.forward(&trace.logits);
                    out.push(dt.pattern());
                    dt
                }
                Gates::Replay(patterns) => d.forward_gated(&trace.logits, Some(&patterns[i])),
            };
            total += lambda * bce_from_logit(dt.logit, ex.counterfactual_label()).0;
        }
    }
    total / batch.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Total epochs including warm-up.
    pub epochs: usize,
    /// Supervised epochs before the discriminator is pretrained.
    pub warmup_epochs: usize,
    pub disc_epochs: usize,
    pub disc_lr: f64,
    pub batch_size: usize,
    /// Weight of the discriminator loss; 0 trains without a discriminator.
    pub lambda_disc: f64,
    pub seed: u64,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub disc_dim: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.02,
            epochs: 14,
            warmup_epochs: 1,
            disc_epochs: 3,
            disc_lr: 0.05,
            batch_size: 1,
            lambda_disc: 1.0,
            seed: 0,
            emb_dim: 64,
            hidden_dim: 128,
            disc_dim: 64,
            clip_norm: Some(5.0),
            max_len: 40,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0) || !(self.disc_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lambda_disc >= 0.0) || !self.lambda_disc.is_finite() {
            return bad("lambda_disc must be a finite non-negative number");
        }
        if self.batch_size == 0 || self.emb_dim == 0 || self.hidden_dim == 0 || self.disc_dim == 0 {
            return bad("batch size and dimensions must be positive");
        }
        if self.warmup_epochs > self.epochs {
            return bad("warmup_epochs cannot exceed epochs");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm must be positive");
            }
        }
        Ok(())
    }

    pub fn uses_discriminator(&self) -> bool {
        self.lambda_disc > 0.0
    }
}

fn clip(grads: &mut GeneratorParams, max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let n = grads.norm();
        if n > max {
            grads.scale(max / n);
        }
    }
}

/// One SGD step on `L_gen + λ·L_disc` with the discriminator frozen.
pub fn combined_step(
    params: &mut GeneratorParams,
    disc: Option<&Discriminator>,
    batch: &[Example],
    config: &TrainConfig,
    batch_index: usize,
) -> Result<LossComponents> {
    if let Some(d) = disc {
        if !d.is_frozen() {
            return Err(Error::Config(
                "the discriminator must be frozen during generator training".into(),
            ));
        }
    }
    let (losses, mut grads) = combined_loss_and_grad(params, disc, batch, config.lambda_disc);
    if !losses.total.is_finite() || !grads.is_finite() {
        return Err(Error::NonFiniteLoss { batch: batch_index });
    }
    clip(&mut grads, config.clip_norm);
    params.sgd(&grads, config.lr);
    Ok(losses)
}

/// Teacher-forced logits of `generator` for every example.
pub fn teacher_forced_logits(generator: &GeneratorParams, examples: &[Example]) -> Vec<Matrix> {
    examples
        .iter()
        .map(|ex| forward_trace(generator, &ex.source, &ex.decoder_inputs()).logits)
        .collect()
}

/// Fraction of inputs whose thresholded discriminator output matches the label.
pub fn discriminator_accuracy(disc: &Discriminator, data: &[(Matrix, Gender)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|(m, g)| (discriminator_forward(disc, m) >= 0.5) == (*g == Gender::Female))
        .count();
    correct as f64 / data.len() as f64
}

/// Trains the discriminator with BCE on `(logits, gender)` pairs and returns
/// its training accuracy. Zero epochs leave it untouched.
pub fn train_discriminator(
    disc: &mut Discriminator,
    data: &[(Matrix, Gender)],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        for (b, chunk) in order.chunks(batch_size.max(1)).enumerate() {
            let mut grads = disc.zeros_like();
            let mut loss = 0.0;
            for &i in chunk {
                let (m, g) = &data[i];
                let t = disc.forward(m);
                let (l, dl) = bce_from_logit(t.logit, g.as_label());
                loss += l;
                disc.backward(&t, dl / chunk.len() as f64, Some(&mut grads));
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    batch: epoch * data.len() + b,
                });
            }
            disc.sgd(&grads, lr)?;
        }
    }
    Ok(discriminator_accuracy(disc, data))
}

/// Pretrains on the teacher-forced logits of a warm generator, labelled
/// with the true gender of each target.
pub fn pretrain_discriminator(
    disc: &mut Discriminator,
    generator: &GeneratorParams,
    examples: &[Example],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let data: Vec<(Matrix, Gender)> = teacher_forced_logits(generator, examples)
        .into_iter()
        .zip(examples)
        .map(|(m, ex)| (m, ex.source_gender.flip()))
        .collect();
    train_discriminator(disc, &data, epochs, lr, batch_size, rng)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub step: usize,
    #[serde(rename = "L_gen")]
    pub generator: f64,
    #[serde(rename = "L_disc")]
    pub discriminator: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Mean generator loss per epoch.
    pub epoch_generator_loss: Vec<f64>,
    pub discriminator_accuracy: Option<f64>,
    pub discriminator_checksum: Option<String>,
    pub steps: usize,
}

/// A trained generator with its vocabulary and (optional) discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub format: String,
    pub vocab: Vocab,
    pub generator: GeneratorParams,
    pub discriminator: Option<Discriminator>,
    pub max_len: usize,
}

pub const CHECKPOINT_FORMAT: &str = "cftk-toy-seq2seq/1";

impl ToyModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ToyModel =
            serde_json::from_str(&json).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if model.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {:?}", model.format)));
        }
        model.vocab.validate()?;
        model.generator.check_shapes()?;
        if model.generator.vocab_size() != model.vocab.len() {
            return Err(Error::Checkpoint("generator and vocabulary sizes differ".into()));
        }
        if let Some(d) = &model.discriminator {
            d.check_shapes()?;
            if d.input_size() != model.vocab.len() {
                return Err(Error::Checkpoint("discriminator and vocabulary sizes differ".into()));
            }
        }
        if !model.generator.is_finite() {
            return Err(Error::Checkpoint("non-finite generator parameters".into()));
        }
        Ok(model)
    }

    /// Greedy counterfactual of `text` (lowercased, word-level).
    pub fn generate(&self, text: &str) -> String {
        let ids = self.vocab.encode(&toy_tokens(text));
        let out = greedy_decode(&self.generator, &ids, self.max_len).expect("encoded ids are in range");
        self.vocab.decode(&out)
    }
}

/// A source text, its counterfactual and the source gender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source: String,
    pub target: String,
    pub source_gender: Gender,
}

impl From<&SyntheticExample> for TrainingPair {
    fn from(ex: &SyntheticExample) -> Self {
        TrainingPair {
            source: ex.text.clone(),
            target: ex.counterfactual.clone(),
            source_gender: ex.gender,
        }
    }
}

/// Warm-up, discriminator pretraining, then the combined objective.
/// `on_step` receives one log entry per optimisation step.
pub fn train(
    pairs: &[TrainingPair],
    config: &TrainConfig,
    mut on_step: impl FnMut(&LogEntry),
) -> Result<(ToyModel, TrainSummary)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("no training pairs".into()));
    }
    let tokens: Vec<Vec<String>> = pairs
        .iter()
        .flat_map(|p| [toy_tokens(&p.source), toy_tokens(&p.target)])
        .collect();
    let vocab = Vocab::build(tokens.iter().map(Vec::as_slice));
    let examples: Vec<Example> = pairs
        .iter()
        .map(|p| Example::new(&vocab, &p.source, &p.target, p.source_gender))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generator = GeneratorParams::init(vocab.len(), config.emb_dim, config.hidden_dim, &mut rng);
    let mut disc: Option<Discriminator> = None;
    let mut summary = TrainSummary {
        epoch_generator_loss: Vec::new(),
        discriminator_accuracy: None,
        discriminator_checksum: None,
        steps: 0,
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        if epoch == config.warmup_epochs && config.uses_discriminator() {
            let mut d = Discriminator::init(vocab.len(), config.disc_dim, &mut rng);
            let acc = pretrain_discriminator(
                &mut d,
                &generator,
                &examples,
                config.disc_epochs,
                config.disc_lr,
                config.batch_size,
                &mut rng,
            )?;
            log::info!("discriminator pretrained: accuracy {acc:.3}");
            d.freeze();
            summary.discriminator_accuracy = Some(acc);
            summary.discriminator_checksum = Some(d.checksum());
            disc = Some(d);
        }
        let step_config = if disc.is_some() {
            config.clone()
        } else {
            TrainConfig {
                lambda_disc: 0.0,
                ..config.clone()
            }
        };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let losses = combined_step(&mut generator, disc.as_ref(), &batch, &step_config, summary.steps)?;
            epoch_loss += losses.generator * batch.len() as f64;
            on_step(&LogEntry {
                epoch,
                step: b,
                generator: losses.generator,
                discriminator: losses.discriminator,
                total: losses.total,
            });
            summary.steps += 1;
        }
        let mean = epoch_loss / examples.len() as f64;
        log::info!("epoch {epoch}: L_gen {mean:.4}");
        summary.epoch_generator_loss.push(mean);
    }
    if let (Some(d), Some(sum)) = (&disc, &summary.discriminator_checksum) {
        debug_assert_eq!(&d.checksum(), sum);
    }
    Ok((
        ToyModel {
            format: CHECKPOINT_FORMAT.into(),
            vocab,
            generator,
            discriminator: disc,
            max_len: config.max_len,
        },
        summary,
    ))
}

/// Exact-match rate of generated counterfactuals against references.
pub fn exact_match_rate(model: &ToyModel, pairs: &[TrainingPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs
        .iter()
        .filter(|p| model.generate(&p.source) == toy_tokens(&p.target).join(" "))
        .count();
    hits as f64 / pairs.len() as f64
}
