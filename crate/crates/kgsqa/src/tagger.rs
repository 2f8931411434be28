//! Mention detection: tag each question token as entity (E) or context (C)
//! with a residual BiLSTM and decode a single mention span.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    AdamConfig, AdamState, Grads, LstmEncoder, LstmEncoderConfig, Mode, ParamId, ParamStore, Tape,
};
use crate::text::{TextSpace, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Entity,
    Context,
}

/// Per-token E/C labels with the probability of E for each token.
#[derive(Debug, Clone)]
pub struct TagSequence {
    pub labels: Vec<Tag>,
    pub p_entity: Vec<f64>,
}

/// A single contiguous mention span (inclusive end) with its surface
/// tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<Token>,
}

impl MentionSpan {
    pub fn from_tokens(tokens: &[Token], start: usize, end: usize) -> Result<MentionSpan> {
        if start > end || end >= tokens.len() {
            return Err(Error::InvalidSpan {
                start,
                end,
                len: tokens.len(),
            });
        }
        Ok(MentionSpan {
            start,
            end,
            tokens: tokens[start..=end].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for MdConfig {
    fn default() -> Self {
        MdConfig {
            hidden: 600,
            layers: 2,
            dropout: 0.4,
            lr: 1e-3,
            epochs: 50,
            batch: 300,
            seed: 0,
            threshold: 0.5,
        }
    }
}

/// Trained mention tagger: frozen word embeddings feeding a residual
/// BiLSTM and a per-token binary classifier.
pub struct MdModel {
    pub cfg: MdConfig,
    pub space: Arc<TextSpace>,
    pub store: ParamStore,
    encoder: LstmEncoder,
    clf_w: ParamId,
    clf_b: ParamId,
    /// Mean training loss per epoch, recorded during training.
    pub loss_curve: Vec<f64>,
}

fn build_params(
    store: &mut ParamStore,
    space: &TextSpace,
    cfg: &MdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(LstmEncoder, ParamId, ParamId)> {
    let enc_cfg = LstmEncoderConfig {
        input_dim: space.dim(),
        hidden: cfg.hidden,
        layers: cfg.layers,
        bidirectional: true,
        residual: true,
        dropout: cfg.dropout,
    };
    let encoder = LstmEncoder::init(store, "md.enc", enc_cfg, rng)?;
    let out_w = encoder.output_width();
    let clf_w = store.add_uniform("md.clf_w", 1, out_w, rng)?;
    let clf_b = store.add_zeros("md.clf_b", 1, 1)?;
    Ok((encoder, clf_w, clf_b))
}

impl MdModel {
    /// Untrained model with zeroed parameters; every token then scores
    /// exactly 0.5 and is labeled E by the >= rule.
    pub fn zeroed(space: Arc<TextSpace>, cfg: MdConfig) -> Result<MdModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let (encoder, clf_w, clf_b) = build_params(&mut store, &space, &cfg, &mut rng)?;
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).as_mut_slice() {
                *v = 0.0;
            }
        }
        Ok(MdModel {
            cfg,
            space,
            store,
            encoder,
            clf_w,
            clf_b,
            loss_curve: Vec::new(),
        })
    }

    fn token_logits(&self, tape: &mut Tape, tokens: &[Token], mode: Mode, rng: &mut ChaCha8Rng) -> Result<Vec<crate::nn::Var>> {
        let inputs: Vec<_> = tokens
            .iter()
            .map(|t| tape.leaf(self.space.embed(t).to_vec()))
            .collect();
        let enc = self.encoder.encode(tape, &inputs, mode, rng)?;
        let mut logits = Vec::with_capacity(tokens.len());
        for s in &enc.steps {
            let z = tape.affine(self.clf_w, *s, self.clf_b)?;
            logits.push(tape.pick(z, 0)?);
        }
        Ok(logits)
    }

    /// Teacher loss for one example; used by training and the gradient
    /// check harness.
    pub fn example_loss(
        &self,
        store: &ParamStore,
        tokens: &[Token],
        tags: &[Tag],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Grads)> {
        let shadow = MdModelRef {
            model: self,
            store,
        };
        shadow.loss(tokens, tags, mode, rng)
    }
}

// Forward passes during gradient checking must read the perturbed store,
// not the one owned by the model, so the loss is expressed against an
// explicit store reference.
struct MdModelRef<'a> {
    model: &'a MdModel,
    store: &'a ParamStore,
}

impl MdModelRef<'_> {
    fn loss(
        &self,
        tokens: &[Token],
        tags: &[Tag],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Grads)> {
        let mut tape = Tape::new(self.store);
        let inputs: Vec<_> = tokens
            .iter()
            .map(|t| tape.leaf(self.model.space.embed(t).to_vec()))
            .collect();
        let enc = self.model.encoder.encode(&mut tape, &inputs, mode, rng)?;
        let mut losses = Vec::with_capacity(tokens.len());
        for (s, tag) in enc.steps.iter().zip(tags) {
            let z = tape.affine(self.model.clf_w, *s, self.model.clf_b)?;
            let logit = tape.pick(z, 0)?;
            let target = if *tag == Tag::Entity { 1.0 } else { 0.0 };
            losses.push(tape.bce_with_logits(logit, target)?);
        }
        let loss = tape.mean_scalars(&losses)?;
        let mut grads = Grads::new(self.store);
        tape.backward(loss, &mut grads)?;
        Ok((tape.scalar_value(loss), grads))
    }
}

impl MdModel {
    pub fn save(&self, path: &std::path::Path) -> crate::error::Result<()> {
        let mut ckpt = crate::checkpoint::Checkpoint::new();
        ckpt.set_meta("kind", "md");
        ckpt.set_meta("hidden", self.cfg.hidden);
        ckpt.set_meta("layers", self.cfg.layers);
        ckpt.set_meta("dropout", self.cfg.dropout);
        ckpt.set_meta("lr", self.cfg.lr);
        ckpt.set_meta("epochs", self.cfg.epochs);
        ckpt.set_meta("batch", self.cfg.batch);
        ckpt.set_meta("seed", self.cfg.seed);
        ckpt.set_meta("threshold", self.cfg.threshold);
        ckpt.set_meta("embed_seed", self.space.table.seed());
        ckpt.set_meta("embed_dim", self.space.dim());
        ckpt.set_meta("vocab_hash", self.space.hash());
        ckpt.add_list("vocab", self.space.vocab.tokens().map(String::from).collect());
        ckpt.add_store(&self.store);
        ckpt.save(path)
    }

    pub fn load(path: &std::path::Path) -> crate::error::Result<MdModel> {
        let ckpt = crate::checkpoint::Checkpoint::load(path)?;
        if ckpt.meta("kind") != Some("md") {
            return Err(Error::Checkpoint("not a mention-detection checkpoint".into()));
        }
        let cfg = MdConfig {
            hidden: ckpt.parse_meta("hidden")?,
            layers: ckpt.parse_meta("layers")?,
            dropout: ckpt.parse_meta("dropout")?,
            lr: ckpt.parse_meta("lr")?,
            epochs: ckpt.parse_meta("epochs")?,
            batch: ckpt.parse_meta("batch")?,
            seed: ckpt.parse_meta("seed")?,
            threshold: ckpt.parse_meta("threshold")?,
        };
        let vocab = crate::text::Vocabulary::from_lines(&(ckpt.require_list("vocab")?.join("\n")))?;
        let space = Arc::new(crate::text::TextSpace::build(
            vocab,
            ckpt.parse_meta("embed_seed")?,
            ckpt.parse_meta("embed_dim")?,
        )?);
        let expected_hash: u64 = ckpt.parse_meta("vocab_hash")?;
        if space.hash() != expected_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        let mut model = MdModel::zeroed(space, cfg)?;
        ckpt.restore_store(&mut model.store)?;
        Ok(model)
    }
}

/// Train the tagger with per-token binary cross-entropy under Adam. Word
/// embeddings stay frozen; only encoder and classifier weights move.
pub fn train_md(
    data: &[(Vec<Token>, Vec<Tag>)],
    space: Arc<TextSpace>,
    cfg: MdConfig,
) -> Result<MdModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("mention-detection training set".into()));
    }
    for (tokens, tags) in data {
        if tokens.len() != tags.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} tokens with {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if tokens.is_empty() {
            return Err(Error::EmptyInput("empty training question".into()));
        }
        if !tags.contains(&Tag::Entity) {
            return Err(Error::Invalid(
                "gold tag sequence without any entity token".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let (encoder, clf_w, clf_b) = build_params(&mut store, &space, &cfg, &mut rng)?;
    let mut model = MdModel {
        cfg: cfg.clone(),
        space,
        store,
        encoder,
        clf_w,
        clf_b,
        loss_curve: Vec::new(),
    };

    let mut adam = AdamState::new(&model.store, AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let mut grads = Grads::new(&model.store);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (tokens, tags) = &data[i];
                let (loss, g) =
                    model.example_loss(&model.store, tokens, tags, Mode::Train, &mut rng)?;
                batch_loss += loss;
                grads.add_from(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.update(&mut model.store, &grads)?;
            epoch_loss += batch_loss;
        }
        model.loss_curve.push(epoch_loss / data.len() as f64);
    }
    Ok(model)
}

/// Tag a token sequence: label is E iff P(E) >= threshold.
pub fn tag(model: &MdModel, tokens: &[Token]) -> Result<TagSequence> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("tag of empty token sequence".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::new(&model.store);
    let logits = model.token_logits(&mut tape, tokens, Mode::Eval, &mut rng)?;
    let p_entity: Vec<f64> = logits
        .iter()
        .map(|l| 1.0 / (1.0 + (-tape.scalar_value(*l)).exp()))
        .collect();
    let labels: Vec<Tag> = p_entity
        .iter()
        .map(|&p| {
            if p >= model.cfg.threshold {
                Tag::Entity
            } else {
                Tag::Context
            }
        })
        .collect();
    Ok(TagSequence { labels, p_entity })
}

/// Decode a single mention: the longest contiguous run of E labels, ties
/// broken by highest mean P(E) then leftmost. With no E label at all, fall
/// back to the single token with maximal P(E).
pub fn decode_mention(tags: &TagSequence, tokens: &[Token]) -> Result<MentionSpan> {
    if tokens.is_empty() || tags.labels.len() != tokens.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} tags for {} tokens",
            tags.labels.len(),
            tokens.len()
        )));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    let mut i = 0;
    while i < tokens.len() {
        if tags.labels[i] == Tag::Entity {
            let start = i;
            while i < tokens.len() && tags.labels[i] == Tag::Entity {
                i += 1;
            }
            let end = i - 1;
            let len = end - start + 1;
            let mean_p: f64 =
                tags.p_entity[start..=end].iter().sum::<f64>() / len as f64;
            let better = match best {
                None => true,
                Some((bs, be, bp)) => {
                    let blen = be - bs + 1;
                    len > blen || (len == blen && mean_p > bp)
                }
            };
            if better {
                best = Some((start, end, mean_p));
            }
        } else {
            i += 1;
        }
    }
    let (start, end) = match best {
        Some((s, e, _)) => (s, e),
        None => {
            let mut arg = 0;
            for (j, &p) in tags.p_entity.iter().enumerate() {
                if p > tags.p_entity[arg] {
                    arg = j;
                }
            }
            (arg, arg)
        }
    };
    MentionSpan::from_tokens(tokens, start, end)
}

/// Locate the gold subject's display name inside a question: the longest
/// contiguous token run shared by question and name, leftmost in the
/// question on ties. Returns None when the overlap is empty.
pub fn locate_gold_span(question: &[Token], name: &[Token]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut best_len = 0;
    for qs in 0..question.len() {
        for ns in 0..name.len() {
            let mut len = 0;
            while qs + len < question.len()
                && ns + len < name.len()
                && question[qs + len] == name[ns + len]
            {
                len += 1;
            }
            if len > best_len {
                best_len = len;
                best = Some((qs, qs + len - 1));
            }
        }
    }
    best
}

/// Gold tag sequence induced by a located span.
pub fn tags_for_span(len: usize, start: usize, end: usize) -> Vec<Tag> {
    (0..len)
        .map(|i| {
            if i >= start && i <= end {
                Tag::Entity
            } else {
                Tag::Context
            }
        })
        .collect()
}
