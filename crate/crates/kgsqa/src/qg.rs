//! Question generation from a fact plus textual contexts, with attention
//! over the encoded fact components, attention over the encoded contexts,
//! and a pointer-mixture copy mechanism. Trained on source-domain
//! question-fact pairs and applied to facts of the held-out domain.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{io_err, Error, Result};
use crate::exec;
use crate::kg::{EntityId, Fact, FactId, KnowledgeGraph};
use crate::keywords::RelationKeywordTable;
use crate::nn::{
    AdamConfig, AdamState, AdditiveAttention, Grads, LstmCell, LstmEncoder, LstmEncoderConfig,
    Mode, ParamId, ParamStore, Tape, Var,
};
use crate::text::{
    tokenize, tokenize_relation_label, TextSpace, Token, BOS, EOS, PAD_ID, SBJ_ID, UNK_ID,
};

/// Optional entity-to-type-name table (TSV: entity_id \t type name).
#[derive(Debug, Clone, Default)]
pub struct TypeTable {
    types: HashMap<EntityId, String>,
}

impl TypeTable {
    pub fn empty() -> TypeTable {
        TypeTable::default()
    }

    pub fn insert(&mut self, entity: EntityId, type_name: String) {
        self.types.insert(entity, type_name);
    }

    pub fn get(&self, entity: &EntityId) -> Option<&str> {
        self.types.get(entity).map(String::as_str)
    }

    pub fn load(path: &Path) -> Result<TypeTable> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut table = TypeTable::empty();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (id, name) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "expected 2 tab-separated columns".into(),
            })?;
            table.insert(EntityId::new(id)?, name.to_string());
        }
        Ok(table)
    }
}

/// The three textual contexts fed to the generator: subject type, relation
/// keywords, object type. Never empty after assembly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextualContexts {
    pub c_s: Vec<Token>,
    pub c_r: Vec<Token>,
    pub c_o: Vec<Token>,
}

fn segment_tokens(segment: &str) -> Vec<Token> {
    segment
        .split('_')
        .filter(|s| !s.is_empty())
        .filter_map(|s| Token::new(s).ok())
        .collect()
}

/// Assemble contexts for a fact. Subject/object contexts come from the
/// type table, falling back to the relation label's 2nd segment (subject)
/// or the 3rd segment's tail word (object), then to "entity". The relation
/// context is the keyword list, falling back to the tokenized label.
pub fn assemble_contexts(
    fact: &Fact<'_>,
    types: &TypeTable,
    keywords: &RelationKeywordTable,
) -> TextualContexts {
    let segments: Vec<&str> = fact.relation.label.split('.').collect();
    let entity_fallback = || vec![Token::new("entity").unwrap()];

    let c_s = types
        .get(fact.subject)
        .map(|t| tokenize(t))
        .filter(|t| !t.is_empty())
        .or_else(|| segments.get(1).map(|s| segment_tokens(s)).filter(|t| !t.is_empty()))
        .unwrap_or_else(entity_fallback);

    let c_o = types
        .get(fact.object)
        .map(|t| tokenize(t))
        .filter(|t| !t.is_empty())
        .or_else(|| {
            segments
                .get(2)
                .and_then(|s| segment_tokens(s).pop())
                .map(|t| vec![t])
        })
        .unwrap_or_else(entity_fallback);

    let c_r = keywords
        .keywords(&fact.relation.label)
        .filter(|k| !k.is_empty())
        .map(|k| {
            k.iter()
                .filter_map(|(kw, _)| Token::new(kw.as_str()).ok())
                .collect::<Vec<_>>()
        })
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| tokenize_relation_label(&fact.relation.label));

    TextualContexts { c_s, c_r, c_o }
}

/// Where a generated token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Generated,
    CopiedContext,
    CopiedFactName,
}

/// Greedily decoded question with per-token provenance.
#[derive(Debug, Clone)]
pub struct GeneratedQuestion {
    pub tokens: Vec<Token>,
    pub provenance: Vec<Provenance>,
}

impl GeneratedQuestion {
    pub fn text(&self) -> String {
        crate::text::join_tokens(&self.tokens)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QgConfig {
    pub fact_dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Held-out domain: training pairs from this domain are rejected.
    pub target_domain: Option<String>,
}

impl Default for QgConfig {
    fn default() -> Self {
        QgConfig {
            fact_dim: 32,
            hidden: 48,
            attn_dim: 32,
            lr: 1e-3,
            epochs: 30,
            batch: 32,
            max_len: 20,
            seed: 0,
            target_domain: None,
        }
    }
}

/// One training pair: fact components by id, its contexts, and the gold
/// question.
#[derive(Debug, Clone)]
pub struct QgExample {
    pub subject_id: String,
    pub relation_id: String,
    pub object_id: String,
    pub subject_name: Vec<Token>,
    pub contexts: TextualContexts,
    pub gold: Vec<Token>,
}

struct QgParams {
    emb_subject: ParamId,
    emb_relation: ParamId,
    emb_object: ParamId,
    enc_cs: LstmEncoder,
    enc_cr: LstmEncoder,
    enc_co: LstmEncoder,
    enc_name: LstmEncoder,
    dec_init_w: ParamId,
    dec_init_b: ParamId,
    decoder: LstmCell,
    attn_fact: AdditiveAttention,
    attn_ctx: AdditiveAttention,
    readout_w: ParamId,
    readout_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
    copy_attn: AdditiveAttention,
}

/// Encoder-decoder question generator with a copy gate.
pub struct QgModel {
    pub cfg: QgConfig,
    pub space: Arc<TextSpace>,
    pub store: ParamStore,
    subject_rows: IndexMap<String, usize>,
    relation_rows: IndexMap<String, usize>,
    object_rows: IndexMap<String, usize>,
    params: QgParams,
    pub loss_curve: Vec<f64>,
}

fn ctx_encoder_cfg(space: &TextSpace, hidden: usize) -> LstmEncoderConfig {
    LstmEncoderConfig {
        input_dim: space.dim(),
        hidden,
        layers: 1,
        bidirectional: false,
        residual: false,
        dropout: 0.0,
    }
}

fn build_qg_params(
    store: &mut ParamStore,
    space: &TextSpace,
    cfg: &QgConfig,
    n_entities: usize,
    n_relations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<QgParams> {
    let f = cfg.fact_dim;
    let h = cfg.hidden;
    let emb_subject = store.add_uniform("qg.emb_subject", n_entities, f, rng)?;
    let emb_relation = store.add_uniform("qg.emb_relation", n_relations, f, rng)?;
    let emb_object = store.add_uniform("qg.emb_object", n_entities, f, rng)?;
    let enc_cs = LstmEncoder::init(store, "qg.enc_cs", ctx_encoder_cfg(space, h), rng)?;
    let enc_cr = LstmEncoder::init(store, "qg.enc_cr", ctx_encoder_cfg(space, h), rng)?;
    let enc_co = LstmEncoder::init(store, "qg.enc_co", ctx_encoder_cfg(space, h), rng)?;
    let enc_name = LstmEncoder::init(store, "qg.enc_name", ctx_encoder_cfg(space, h), rng)?;
    let dec_init_w = store.add_uniform("qg.dec_init_w", h, 3 * f, rng)?;
    let dec_init_b = store.add_zeros("qg.dec_init_b", h, 1)?;
    let decoder = LstmCell::init(store, "qg.dec", space.dim(), h, rng)?;
    let attn_fact = AdditiveAttention::init(store, "qg.attn_fact", h, f, cfg.attn_dim, rng)?;
    let attn_ctx = AdditiveAttention::init(store, "qg.attn_ctx", h, h, cfg.attn_dim, rng)?;
    let readout_w = store.add_uniform("qg.readout_w", h, h + f + h, rng)?;
    let readout_b = store.add_zeros("qg.readout_b", h, 1)?;
    let out_w = store.add_uniform("qg.out_w", space.vocab.len(), h, rng)?;
    let out_b = store.add_zeros("qg.out_b", space.vocab.len(), 1)?;
    let gate_w = store.add_uniform("qg.gate_w", 1, h, rng)?;
    let gate_b = store.add_zeros("qg.gate_b", 1, 1)?;
    let copy_attn = AdditiveAttention::init(store, "qg.copy", h, h, cfg.attn_dim, rng)?;
    Ok(QgParams {
        emb_subject,
        emb_relation,
        emb_object,
        enc_cs,
        enc_cr,
        enc_co,
        enc_name,
        dec_init_w,
        dec_init_b,
        decoder,
        attn_fact,
        attn_ctx,
        readout_w,
        readout_b,
        out_w,
        out_b,
        gate_w,
        gate_b,
        copy_attn,
    })
}

/// Encoded inputs for one fact, shared by all decode steps.
struct EncodedInputs {
    fact_components: Vec<Var>,
    ctx_states: Vec<Var>,
    copy_states: Vec<Var>,
    copy_surfaces: Vec<(Token, Provenance)>,
    dec_h0: Var,
    dec_c0: Var,
}

struct StepOutput {
    gate: Var,
    p_vocab: Var,
    p_copy: Var,
    h: Var,
    c: Var,
}

impl QgModel {
    pub fn init(kg: &KnowledgeGraph, space: Arc<TextSpace>, cfg: QgConfig) -> Result<QgModel> {
        let subject_rows: IndexMap<String, usize> = kg
            .entities()
            .enumerate()
            .map(|(i, (id, _))| (id.as_str().to_string(), i))
            .collect();
        let relation_rows: IndexMap<String, usize> = kg
            .relations()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        QgModel::init_with_rows(space, cfg, subject_rows, relation_rows)
    }

    fn init_with_rows(
        space: Arc<TextSpace>,
        cfg: QgConfig,
        subject_rows: IndexMap<String, usize>,
        relation_rows: IndexMap<String, usize>,
    ) -> Result<QgModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let object_rows = subject_rows.clone();
        let params = build_qg_params(
            &mut store,
            &space,
            &cfg,
            subject_rows.len().max(1),
            relation_rows.len().max(1),
            &mut rng,
        )?;
        Ok(QgModel {
            cfg,
            space,
            store,
            subject_rows,
            relation_rows,
            object_rows,
            params,
            loss_curve: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ckpt = crate::checkpoint::Checkpoint::new();
        ckpt.set_meta("kind", "qg");
        ckpt.set_meta("fact_dim", self.cfg.fact_dim);
        ckpt.set_meta("hidden", self.cfg.hidden);
        ckpt.set_meta("attn_dim", self.cfg.attn_dim);
        ckpt.set_meta("lr", self.cfg.lr);
        ckpt.set_meta("epochs", self.cfg.epochs);
        ckpt.set_meta("batch", self.cfg.batch);
        ckpt.set_meta("max_len", self.cfg.max_len);
        ckpt.set_meta("seed", self.cfg.seed);
        if let Some(t) = &self.cfg.target_domain {
            ckpt.set_meta("target_domain", t);
        }
        ckpt.set_meta("embed_seed", self.space.table.seed());
        ckpt.set_meta("embed_dim", self.space.dim());
        ckpt.set_meta("vocab_hash", self.space.hash());
        ckpt.add_list("vocab", self.space.vocab.tokens().map(String::from).collect());
        ckpt.add_list("subject_rows", self.subject_rows.keys().cloned().collect());
        ckpt.add_list("relation_rows", self.relation_rows.keys().cloned().collect());
        ckpt.add_store(&self.store);
        ckpt.save(path)
    }

    pub fn load(path: &Path) -> Result<QgModel> {
        let ckpt = crate::checkpoint::Checkpoint::load(path)?;
        if ckpt.meta("kind") != Some("qg") {
            return Err(Error::Checkpoint("not a question-generation checkpoint".into()));
        }
        let cfg = QgConfig {
            fact_dim: ckpt.parse_meta("fact_dim")?,
            hidden: ckpt.parse_meta("hidden")?,
            attn_dim: ckpt.parse_meta("attn_dim")?,
            lr: ckpt.parse_meta("lr")?,
            epochs: ckpt.parse_meta("epochs")?,
            batch: ckpt.parse_meta("batch")?,
            max_len: ckpt.parse_meta("max_len")?,
            seed: ckpt.parse_meta("seed")?,
            target_domain: ckpt.meta("target_domain").map(String::from),
        };
        let vocab =
            crate::text::Vocabulary::from_lines(&(ckpt.require_list("vocab")?.join("\n")))?;
        let space = Arc::new(TextSpace::build(
            vocab,
            ckpt.parse_meta("embed_seed")?,
            ckpt.parse_meta("embed_dim")?,
        )?);
        let expected_hash: u64 = ckpt.parse_meta("vocab_hash")?;
        if space.hash() != expected_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        let subject_rows: IndexMap<String, usize> = ckpt
            .require_list("subject_rows")?
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let relation_rows: IndexMap<String, usize> = ckpt
            .require_list("relation_rows")?
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let mut model = QgModel::init_with_rows(space, cfg, subject_rows, relation_rows)?;
        ckpt.restore_store(&mut model.store)?;
        Ok(model)
    }

    fn embed_seq(&self, tape: &mut Tape, tokens: &[Token]) -> Vec<Var> {
        tokens
            .iter()
            .map(|t| tape.leaf(self.space.embed(t).to_vec()))
            .collect()
    }

    fn encode_inputs(
        &self,
        tape: &mut Tape,
        subject_id: &str,
        relation_id: &str,
        object_id: &str,
        subject_name: &[Token],
        contexts: &TextualContexts,
        rng: &mut ChaCha8Rng,
    ) -> Result<EncodedInputs> {
        let p = &self.params;
        let s_row = *self
            .subject_rows
            .get(subject_id)
            .ok_or_else(|| Error::Invalid(format!("unknown subject entity `{subject_id}`")))?;
        let r_row = *self
            .relation_rows
            .get(relation_id)
            .ok_or_else(|| Error::Invalid(format!("unknown relation `{relation_id}`")))?;
        let o_row = *self
            .object_rows
            .get(object_id)
            .ok_or_else(|| Error::Invalid(format!("unknown object entity `{object_id}`")))?;
        let f_s = tape.param_row(p.emb_subject, s_row);
        let f_r = tape.param_row(p.emb_relation, r_row);
        let f_o = tape.param_row(p.emb_object, o_row);

        let cs_in = self.embed_seq(tape, &contexts.c_s);
        let cr_in = self.embed_seq(tape, &contexts.c_r);
        let co_in = self.embed_seq(tape, &contexts.c_o);
        let cs_enc = p.enc_cs.encode(tape, &cs_in, Mode::Eval, rng)?;
        let cr_enc = p.enc_cr.encode(tape, &cr_in, Mode::Eval, rng)?;
        let co_enc = p.enc_co.encode(tape, &co_in, Mode::Eval, rng)?;

        let mut ctx_states = Vec::new();
        ctx_states.extend_from_slice(&cs_enc.steps);
        ctx_states.extend_from_slice(&cr_enc.steps);
        ctx_states.extend_from_slice(&co_enc.steps);

        // copy sources: the context tokens plus the subject's name tokens
        let mut copy_states = ctx_states.clone();
        let mut copy_surfaces: Vec<(Token, Provenance)> = contexts
            .c_s
            .iter()
            .chain(&contexts.c_r)
            .chain(&contexts.c_o)
            .map(|t| (t.clone(), Provenance::CopiedContext))
            .collect();
        if !subject_name.is_empty() {
            let name_in = self.embed_seq(tape, subject_name);
            let name_enc = p.enc_name.encode(tape, &name_in, Mode::Eval, rng)?;
            copy_states.extend_from_slice(&name_enc.steps);
            copy_surfaces.extend(
                subject_name
                    .iter()
                    .map(|t| (t.clone(), Provenance::CopiedFactName)),
            );
        }

        let fact_concat = tape.concat(&[f_s, f_r, f_o])?;
        let init_pre = tape.affine(p.dec_init_w, fact_concat, p.dec_init_b)?;
        let dec_h0 = tape.tanh(init_pre);
        let dec_c0 = tape.zeros(self.cfg.hidden);

        Ok(EncodedInputs {
            fact_components: vec![f_s, f_r, f_o],
            ctx_states,
            copy_states,
            copy_surfaces,
            dec_h0,
            dec_c0,
        })
    }

    fn decode_step(
        &self,
        tape: &mut Tape,
        enc: &EncodedInputs,
        prev_token: &Token,
        h: Var,
        c: Var,
    ) -> Result<StepOutput> {
        let p = &self.params;
        let x = tape.leaf(self.space.embed(prev_token).to_vec());
        let (h_next, c_next) = p.decoder.step(tape, x, h, c)?;
        let (fact_ctx, _) = p
            .attn_fact
            .apply(tape, h_next, &enc.fact_components, &enc.fact_components)?;
        let (ctx_ctx, _) = p.attn_ctx.apply(tape, h_next, &enc.ctx_states, &enc.ctx_states)?;
        let combined = tape.concat(&[h_next, fact_ctx, ctx_ctx])?;
        let z_pre = tape.affine(p.readout_w, combined, p.readout_b)?;
        let z = tape.tanh(z_pre);

        let logits = tape.affine(p.out_w, z, p.out_b)?;
        let p_vocab = tape.softmax(logits);

        let gate_pre = tape.affine(p.gate_w, z, p.gate_b)?;
        let gate_vec = tape.sigmoid(gate_pre);
        let gate = tape.pick(gate_vec, 0)?;

        let copy_scores = p.copy_attn.scores(tape, z, &enc.copy_states)?;
        let stacked = tape.stack(&copy_scores)?;
        let p_copy = tape.softmax(stacked);

        Ok(StepOutput {
            gate,
            p_vocab,
            p_copy,
            h: h_next,
            c: c_next,
        })
    }

    /// Teacher-forced loss (mean over steps) for one example against the
    /// given store. Errors if some gold token is neither in the vocabulary
    /// nor among the copyable source tokens.
    pub fn example_loss(&self, store: &ParamStore, ex: &QgExample) -> Result<(f64, Grads)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new(store);
        let enc = self.encode_inputs(
            &mut tape,
            &ex.subject_id,
            &ex.relation_id,
            &ex.object_id,
            &ex.subject_name,
            &ex.contexts,
            &mut rng,
        )?;

        let bos = Token::new(BOS)?;
        let eos = Token::new(EOS)?;
        let mut inputs: Vec<&Token> = vec![&bos];
        inputs.extend(ex.gold.iter());
        let mut targets: Vec<&Token> = ex.gold.iter().collect();
        targets.push(&eos);

        let mut h = enc.dec_h0;
        let mut c = enc.dec_c0;
        let mut losses = Vec::with_capacity(targets.len());
        for (prev, gold) in inputs.iter().zip(&targets) {
            let step = self.decode_step(&mut tape, &enc, prev, h, c)?;
            h = step.h;
            c = step.c;

            let vocab_id = self.space.vocab.id(gold.as_str());
            let copy_positions: Vec<usize> = enc
                .copy_surfaces
                .iter()
                .enumerate()
                .filter(|(_, (t, _))| t == *gold)
                .map(|(j, _)| j)
                .collect();
            if vocab_id.is_none() && copy_positions.is_empty() {
                return Err(Error::Invalid(format!(
                    "gold token `{gold}` is neither in the vocabulary nor copyable"
                )));
            }

            let one_minus_gate = tape.affine_const(step.gate, -1.0, 1.0);
            let mut terms: Vec<Var> = Vec::with_capacity(2);
            if let Some(id) = vocab_id {
                let pv = tape.pick(step.p_vocab, id)?;
                terms.push(tape.mul(pv, one_minus_gate)?);
            }
            if !copy_positions.is_empty() {
                let pc = tape.sum_pick(step.p_copy, copy_positions)?;
                terms.push(tape.mul(pc, step.gate)?);
            }
            let prob = if terms.len() == 2 {
                tape.add(terms[0], terms[1])?
            } else {
                terms[0]
            };
            // floor keeps ln finite if the mixture mass underflows
            let floored = tape.affine_const(prob, 1.0, 1e-300);
            let lp = tape.ln_scalar(floored)?;
            losses.push(tape.affine_const(lp, -1.0, 0.0));
        }
        let loss = tape.mean_scalars(&losses)?;
        let mut grads = Grads::new(store);
        tape.backward(loss, &mut grads)?;
        Ok((tape.scalar_value(loss), grads))
    }

    /// Greedy decoding. The output distribution at each step is
    /// gate * P_copy + (1 - gate) * P_vocab aggregated by surface form;
    /// copied tokens keep their source surface. Stops at EOS or the
    /// configured maximum length.
    pub fn generate(
        &self,
        subject_id: &str,
        relation_id: &str,
        object_id: &str,
        subject_name: &[Token],
        contexts: &TextualContexts,
    ) -> Result<GeneratedQuestion> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new(&self.store);
        let enc = self.encode_inputs(
            &mut tape,
            subject_id,
            relation_id,
            object_id,
            subject_name,
            contexts,
            &mut rng,
        )?;
        let mut h = enc.dec_h0;
        let mut c = enc.dec_c0;
        let mut prev = Token::new(BOS)?;
        let mut tokens = Vec::new();
        let mut provenance = Vec::new();

        for _ in 0..self.cfg.max_len {
            let step = self.decode_step(&mut tape, &enc, &prev, h, c)?;
            h = step.h;
            c = step.c;
            let gate = tape.scalar_value(step.gate);
            let p_vocab = tape.value(step.p_vocab).to_vec();
            let p_copy = tape.value(step.p_copy).to_vec();

            // merge vocabulary and copy mass by surface form; vocabulary
            // surfaces enter first (id order) for a deterministic argmax
            let mut mass: IndexMap<&str, (f64, f64, Provenance)> = IndexMap::new();
            for (id, pv) in p_vocab.iter().enumerate() {
                if id == PAD_ID || id == UNK_ID || id == SBJ_ID || id == crate::text::BOS_ID {
                    continue;
                }
                let surface = self.space.vocab.token(id).unwrap();
                mass.insert(surface, ((1.0 - gate) * pv, 0.0, Provenance::Generated));
            }
            for (j, (tok, origin)) in enc.copy_surfaces.iter().enumerate() {
                let add = gate * p_copy[j];
                let entry = mass
                    .entry(tok.as_str())
                    .or_insert((0.0, 0.0, Provenance::Generated));
                // remember the strongest copy origin for provenance
                if add > entry.1 {
                    entry.2 = *origin;
                }
                entry.1 += add;
            }

            let mut best: Option<(&str, f64, f64, Provenance)> = None;
            for (surface, (v, cp, origin)) in &mass {
                let total = v + cp;
                if best.map_or(true, |(_, bv, bc, _)| total > bv + bc) {
                    best = Some((surface, *v, *cp, *origin));
                }
            }
            let (surface, v_mass, c_mass, origin) = best.unwrap();
            if surface == EOS {
                break;
            }
            let token = Token::new(surface)?;
            provenance.push(if c_mass > v_mass {
                origin
            } else {
                Provenance::Generated
            });
            tokens.push(token.clone());
            prev = token;
        }

        Ok(GeneratedQuestion { tokens, provenance })
    }
}

/// Train the generator with teacher-forced cross-entropy over the mixed
/// generate/copy distribution. Pairs from the configured held-out domain
/// are rejected as contamination.
pub fn train_qg(
    pairs: &[QgExample],
    kg: &KnowledgeGraph,
    space: Arc<TextSpace>,
    cfg: QgConfig,
) -> Result<QgModel> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("question-generation training set".into()));
    }
    for ex in pairs {
        if ex.gold.is_empty() {
            return Err(Error::EmptyInput("empty gold question".into()));
        }
        let rel = kg
            .relation_by_id(&ex.relation_id)
            .ok_or_else(|| Error::Invalid(format!("unknown relation `{}`", ex.relation_id)))?;
        if let Some(target) = &cfg.target_domain {
            if &rel.domain == target {
                return Err(Error::Contamination(format!(
                    "training pair with held-out domain relation `{}`",
                    rel.label
                )));
            }
        }
    }

    let mut model = QgModel::init(kg, space, cfg.clone())?;
    let mut adam = AdamState::new(&model.store, AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let mut grads = Grads::new(&model.store);
            for &i in chunk {
                let (loss, g) = model.example_loss(&model.store, &pairs[i])?;
                epoch_loss += loss;
                grads.add_from(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.update(&mut model.store, &grads)?;
        }
        model.loss_curve.push(epoch_loss / pairs.len() as f64);
    }
    Ok(model)
}

/// One generated question paired with the fact it was generated from.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub question: GeneratedQuestion,
    pub fact: FactId,
}

/// Generate one question per target-domain fact, deterministically under
/// greedy decoding. When the model was trained with a held-out domain,
/// every fact must belong to it.
pub fn synthesize_dataset(
    model: &QgModel,
    target_facts: &[FactId],
    kg: &KnowledgeGraph,
    keywords: &RelationKeywordTable,
    types: &TypeTable,
) -> Result<Vec<SyntheticPair>> {
    if let Some(target) = &model.cfg.target_domain {
        for fid in target_facts {
            let fact = kg.fact(*fid);
            if &fact.relation.domain != target {
                return Err(Error::Invalid(format!(
                    "fact with relation `{}` is outside target domain `{target}`",
                    fact.relation.label
                )));
            }
        }
    }
    let generated: Vec<Result<SyntheticPair>> = exec::map_ordered(target_facts, |fid| {
        let fact = kg.fact(*fid);
        let contexts = assemble_contexts(&fact, types, keywords);
        let name = tokenize(kg.entity_name(fact.subject).unwrap_or(""));
        let question = model.generate(
            fact.subject.as_str(),
            &fact.relation.id,
            fact.object.as_str(),
            &name,
            &contexts,
        )?;
        Ok(SyntheticPair {
            question,
            fact: *fid,
        })
    });
    generated.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::load_kg;
    use crate::text::Vocabulary;
    use std::io::Write;

    fn write_kg(dir: &tempfile::TempDir, names: &str, labels: &str, facts: &str) -> KnowledgeGraph {
        let w = |fname: &str, content: &str| {
            let p = dir.path().join(fname);
            let mut f = std::fs::File::create(&p).unwrap();
            f.write_all(content.as_bytes()).unwrap();
            p
        };
        let n = w("names.tsv", names);
        let l = w("labels.tsv", labels);
        let f = w("facts.tsv", facts);
        load_kg(&f, &n, &l).unwrap()
    }

    fn qg_kg(dir: &tempfile::TempDir) -> KnowledgeGraph {
        write_kg(
            dir,
            "f1\tHeat\nf2\tAlien\nd1\tMichael Mann\nd2\tRidley Scott\nb1\tDune\na1\tFrank Herbert\n",
            "r_dir\tfilm.film.directed_by\nr_auth\tbook.written_work.author\n",
            "f1\tr_dir\td1\nf2\tr_dir\td2\nb1\tr_auth\ta1\n",
        )
    }

    fn contexts(c_s: &str, c_r: &str, c_o: &str) -> TextualContexts {
        TextualContexts {
            c_s: tokenize(c_s),
            c_r: tokenize(c_r),
            c_o: tokenize(c_o),
        }
    }

    fn vocab_from(texts: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::new();
        for t in texts {
            v.add_all(&tokenize(t));
        }
        v
    }

    fn toy_cfg(seed: u64) -> QgConfig {
        QgConfig {
            fact_dim: 8,
            hidden: 16,
            attn_dim: 10,
            lr: 0.02,
            epochs: 150,
            batch: 1,
            max_len: 12,
            seed,
            target_domain: None,
        }
    }

    fn overfit_pairs(kg: &KnowledgeGraph) -> Vec<QgExample> {
        let rows = [
            ("f1", "r_dir", "d1", "Heat", "who directed heat ?"),
            ("f2", "r_dir", "d2", "Alien", "who directed alien ?"),
            ("b1", "r_auth", "a1", "Dune", "who wrote dune ?"),
            ("f1", "r_dir", "d1", "Heat", "who is the director of heat ?"),
            ("b1", "r_auth", "a1", "Dune", "who is the author of dune ?"),
        ];
        let _ = kg;
        rows.iter()
            .map(|(s, r, o, name, q)| QgExample {
                subject_id: (*s).to_string(),
                relation_id: (*r).to_string(),
                object_id: (*o).to_string(),
                subject_name: tokenize(name),
                contexts: contexts(
                    if *r == "r_dir" { "film" } else { "book" },
                    if *r == "r_dir" {
                        "directed director film"
                    } else {
                        "wrote author book"
                    },
                    "person",
                ),
                gold: tokenize(q),
            })
            .collect()
    }

    #[test]
    fn assemble_contexts_uses_types_and_fallbacks() {
        let dir = tempfile::tempdir().unwrap();
        let kg = write_kg(
            &dir,
            "alb\tThe Queen Is Dead\ngen\tAlternative Rock\n",
            "r\tmusic.album.genre\n",
            "alb\tr\tgen\n",
        );
        let (fid, _) = kg.facts().next().unwrap();
        let fact = kg.fact(fid);

        let mut types = TypeTable::empty();
        types.insert(EntityId::new("alb").unwrap(), "album".into());
        types.insert(EntityId::new("gen").unwrap(), "genre".into());
        let kws = RelationKeywordTable::empty(10);
        let ctx = assemble_contexts(&fact, &types, &kws);
        assert_eq!(ctx.c_s, tokenize("album"));
        assert_eq!(ctx.c_o, tokenize("genre"));
        // empty keyword table falls back to the tokenized label
        assert_eq!(ctx.c_r, tokenize("music album genre"));

        // no type entries: label segments take over
        let ctx = assemble_contexts(&fact, &TypeTable::empty(), &kws);
        assert_eq!(ctx.c_s, tokenize("album"));
        assert_eq!(ctx.c_o, tokenize("genre"));
    }

    #[test]
    fn object_fallback_uses_segment_tail_word() {
        let dir = tempfile::tempdir().unwrap();
        let kg = write_kg(
            &dir,
            "x\tX\ny\tY\n",
            "r\tfilm.film.directed_by\n",
            "x\tr\ty\n",
        );
        let fact = kg.fact(crate::kg::FactId(0));
        let ctx = assemble_contexts(&fact, &TypeTable::empty(), &RelationKeywordTable::empty(5));
        assert_eq!(ctx.c_o, tokenize("by"));
        assert_eq!(ctx.c_s, tokenize("film"));
    }

    #[test]
    fn contamination_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let pairs = overfit_pairs(&kg);
        let vocab = vocab_from(&["who directed heat ?", "film directed director person heat"]);
        let space = Arc::new(TextSpace::build(vocab, 1, 8).unwrap());
        let mut cfg = toy_cfg(0);
        cfg.target_domain = Some("film".into());
        match train_qg(&pairs, &kg, space, cfg) {
            Err(Error::Contamination(_)) => {}
            other => panic!("expected contamination error, got {:?}", other.err()),
        }
    }

    #[test]
    fn overfit_reproduces_gold_questions_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let pairs = overfit_pairs(&kg);
        let mut vocab = Vocabulary::new();
        for p in &pairs {
            vocab.add_all(&p.gold);
            vocab.add_all(&p.contexts.c_s);
            vocab.add_all(&p.contexts.c_r);
            vocab.add_all(&p.contexts.c_o);
            vocab.add_all(&p.subject_name);
        }
        let space = Arc::new(TextSpace::build(vocab, 2, 12).unwrap());
        let model = train_qg(&pairs, &kg, space, toy_cfg(5)).unwrap();
        for p in &pairs[..3] {
            let out = model
                .generate(
                    &p.subject_id,
                    &p.relation_id,
                    &p.object_id,
                    &p.subject_name,
                    &p.contexts,
                )
                .unwrap();
            assert_eq!(
                out.tokens, p.gold,
                "generated {:?} for gold {:?}",
                out.text(),
                crate::text::join_tokens(&p.gold)
            );
        }
    }

    #[test]
    fn training_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let pairs: Vec<QgExample> = overfit_pairs(&kg).into_iter().take(2).collect();
        let mut vocab = Vocabulary::new();
        for p in &pairs {
            vocab.add_all(&p.gold);
            vocab.add_all(&p.contexts.c_r);
            vocab.add_all(&p.subject_name);
        }
        let space = Arc::new(TextSpace::build(vocab, 2, 8).unwrap());
        let mut cfg = toy_cfg(7);
        cfg.epochs = 4;
        let m1 = train_qg(&pairs, &kg, space.clone(), cfg.clone()).unwrap();
        let m2 = train_qg(&pairs, &kg, space, cfg).unwrap();
        for (a, b) in m1.store.iter().zip(m2.store.iter()) {
            assert_eq!(a.1.as_slice(), b.1.as_slice());
        }
    }

    #[test]
    fn oov_subject_token_reachable_only_via_copy() {
        // the gold question contains the subject's name token, which is
        // deliberately left out of the vocabulary: only the copy path can
        // reach it, and generation must emit it with copy provenance
        let dir = tempfile::tempdir().unwrap();
        let kg = write_kg(
            &dir,
            "s1\tzorblax\ns2\tquphrin\no1\tSomeone\n",
            "r\tthing.thing.maker\n",
            "s1\tr\to1\ns2\tr\to1\n",
        );
        let mk = |s: &str, name: &str, q: &str| QgExample {
            subject_id: s.to_string(),
            relation_id: "r".to_string(),
            object_id: "o1".to_string(),
            subject_name: tokenize(name),
            contexts: contexts("thing", "made maker", "person"),
            gold: tokenize(q),
        };
        let pairs = vec![
            mk("s1", "zorblax", "who made zorblax ?"),
            mk("s2", "quphrin", "who made quphrin ?"),
        ];
        // vocabulary without the subject names
        let vocab = vocab_from(&["who made ?", "thing made maker person"]);
        assert!(vocab.id("zorblax").is_none());
        let space = Arc::new(TextSpace::build(vocab, 3, 10).unwrap());
        let mut cfg = toy_cfg(11);
        cfg.epochs = 200;
        let model = train_qg(&pairs, &kg, space, cfg).unwrap();
        let out = model
            .generate(
                "s1",
                "r",
                "o1",
                &tokenize("zorblax"),
                &contexts("thing", "made maker", "person"),
            )
            .unwrap();
        let text = out.text();
        assert!(text.contains("zorblax"), "generated `{text}`");
        let pos = out
            .tokens
            .iter()
            .position(|t| t.as_str() == "zorblax")
            .unwrap();
        assert_eq!(out.provenance[pos], Provenance::CopiedFactName);
    }

    #[test]
    fn zero_gate_emits_only_vocabulary_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let vocab = vocab_from(&["who directed heat ?"]);
        let space = Arc::new(TextSpace::build(vocab, 1, 8).unwrap());
        let mut model = QgModel::init(&kg, space.clone(), toy_cfg(0)).unwrap();
        // clamp the copy gate shut
        let gb = model.store.id("qg.gate_b").unwrap();
        model.store.get_mut(gb).as_mut_slice()[0] = -1.0e6;
        let out = model
            .generate(
                "f1",
                "r_dir",
                "d1",
                &tokenize("zorblax oddity"),
                &contexts("film", "directed", "person"),
            )
            .unwrap();
        assert!(out.tokens.len() <= model.cfg.max_len);
        for (t, p) in out.tokens.iter().zip(&out.provenance) {
            assert!(space.vocab.id(t.as_str()).is_some(), "OOV token `{t}` emitted");
            assert_eq!(*p, Provenance::Generated);
        }
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let vocab = vocab_from(&["who directed heat ?"]);
        let space = Arc::new(TextSpace::build(vocab, 1, 8).unwrap());
        let model = QgModel::init(&kg, space, toy_cfg(3)).unwrap();
        let ctx = contexts("film", "directed", "person");
        let a = model
            .generate("f1", "r_dir", "d1", &tokenize("Heat"), &ctx)
            .unwrap();
        let b = model
            .generate("f1", "r_dir", "d1", &tokenize("Heat"), &ctx)
            .unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert!(a.tokens.len() <= model.cfg.max_len);
    }

    #[test]
    fn mixture_is_a_probability_distribution() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let vocab = vocab_from(&["who directed heat ?"]);
        let space = Arc::new(TextSpace::build(vocab, 1, 8).unwrap());
        let model = QgModel::init(&kg, space, toy_cfg(4)).unwrap();
        let ctx = contexts("film", "directed", "person");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new(&model.store);
        let enc = model
            .encode_inputs(&mut tape, "f1", "r_dir", "d1", &tokenize("Heat"), &ctx, &mut rng)
            .unwrap();
        let bos = Token::new(BOS).unwrap();
        let step = model
            .decode_step(&mut tape, &enc, &bos, enc.dec_h0, enc.dec_c0)
            .unwrap();
        let gate = tape.scalar_value(step.gate);
        assert!((0.0..=1.0).contains(&gate));
        let pv: f64 = tape.value(step.p_vocab).iter().sum();
        let pc: f64 = tape.value(step.p_copy).iter().sum();
        assert!((pv - 1.0).abs() < 1e-9);
        assert!((pc - 1.0).abs() < 1e-9);
        // mixture total: gate*1 + (1-gate)*1 = 1
        let total = gate * pc + (1.0 - gate) * pv;
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_gold_token_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let vocab = vocab_from(&["who directed ?"]);
        let space = Arc::new(TextSpace::build(vocab, 1, 8).unwrap());
        let model = QgModel::init(&kg, space, toy_cfg(0)).unwrap();
        let ex = QgExample {
            subject_id: "f1".into(),
            relation_id: "r_dir".into(),
            object_id: "d1".into(),
            subject_name: tokenize("heat"),
            contexts: contexts("film", "directed", "person"),
            gold: tokenize("who directed nonexistentword ?"),
        };
        assert!(model.example_loss(&model.store, &ex).is_err());
    }

    #[test]
    fn synthesize_produces_one_pair_per_fact() {
        let dir = tempfile::tempdir().unwrap();
        let kg = qg_kg(&dir);
        let vocab = vocab_from(&["who directed heat alien ?"]);
        let space = Arc::new(TextSpace::build(vocab, 1, 8).unwrap());
        let mut cfg = toy_cfg(0);
        cfg.target_domain = Some("film".into());
        let model = QgModel::init(&kg, space, cfg).unwrap();
        let film_facts = kg.facts_in_domain("film");
        let out = synthesize_dataset(
            &model,
            &film_facts,
            &kg,
            &RelationKeywordTable::empty(5),
            &TypeTable::empty(),
        )
        .unwrap();
        assert_eq!(out.len(), film_facts.len());
        // facts outside the target domain are rejected
        let book_facts = kg.facts_in_domain("book");
        assert!(synthesize_dataset(
            &model,
            &book_facts,
            &kg,
            &RelationKeywordTable::empty(5),
            &TypeTable::empty(),
        )
        .is_err());
        // determinism across invocations
        let again = synthesize_dataset(
            &model,
            &film_facts,
            &kg,
            &RelationKeywordTable::empty(5),
            &TypeTable::empty(),
        )
        .unwrap();
        for (a, b) in out.iter().zip(&again) {
            assert_eq!(a.question.tokens, b.question.tokens);
        }
    }
}
