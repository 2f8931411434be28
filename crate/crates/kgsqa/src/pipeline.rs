//! End-to-end question answering: tokenize, tag, decode the mention, look
//! up candidates, predict the relation, select the subject by popularity,
//! and retrieve the answering fact.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result, Stage};
use crate::index::{CandidateSet, InvertedIndex};
use crate::kg::{EntityId, KnowledgeGraph, Relation};
use crate::ranker::{prepare_question, RpModel};
use crate::tagger::{decode_mention, tag, MdModel, MentionSpan};
use crate::text::tokenize;

/// A subject-relation reading of the question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    pub subject: EntityId,
    pub relation: Relation,
}

/// The selected fact. `object` is the first object in fact-load order;
/// when several facts share the subject-relation pair, the rest are in
/// `all_objects` too (which always contains `object`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerFact {
    pub subject: EntityId,
    pub relation: Relation,
    pub object: EntityId,
    pub all_objects: Vec<EntityId>,
}

/// Wall-clock milliseconds spent in each stage.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    pub mention_detection_ms: f64,
    pub candidate_generation_ms: f64,
    pub relation_prediction_ms: f64,
    pub answer_selection_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Answer {
    pub interpretation: Interpretation,
    pub fact: AnswerFact,
    pub mention: MentionSpan,
    pub candidates: CandidateSet,
    pub timings: StageTimings,
}

/// Among candidates that head at least one fact with `relation`, the one
/// with maximal popularity; ties go to the smallest entity id.
pub fn select_subject(
    candidates: &CandidateSet,
    relation: &Relation,
    kg: &KnowledgeGraph,
) -> Result<EntityId> {
    let mut best: Option<(&EntityId, u64)> = None;
    for e in candidates.ids() {
        if !kg.has_fact(e, relation) {
            continue;
        }
        let pop = kg.popularity(e);
        let better = match best {
            None => true,
            Some((be, bp)) => pop > bp || (pop == bp && e < be),
        };
        if better {
            best = Some((e, pop));
        }
    }
    match best {
        Some((e, _)) => Ok(e.clone()),
        None => Err(Error::NoAnswer(format!(
            "no candidate heads a fact with relation {}",
            relation.label
        ))),
    }
}

/// Answer a question with trained models over an immutable graph and
/// index. Stage errors carry the failing stage's name.
pub fn answer(
    question: &str,
    md: &MdModel,
    rp: &RpModel,
    index: &InvertedIndex,
    kg: &KnowledgeGraph,
    candidate_limit: usize,
) -> Result<Answer> {
    if md.space.hash() != rp.space.hash() {
        return Err(Error::Invalid(
            "mention and relation models were trained on different vocabularies".into(),
        ));
    }
    let tokens = tokenize(question);
    if tokens.is_empty() {
        return Err(Error::EmptyInput("question".into()));
    }
    let mut timings = StageTimings::default();

    let t0 = Instant::now();
    let tags = tag(md, &tokens).map_err(|e| e.at_stage(Stage::MentionDetection))?;
    let mention =
        decode_mention(&tags, &tokens).map_err(|e| e.at_stage(Stage::MentionDetection))?;
    timings.mention_detection_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t0 = Instant::now();
    let candidates = index
        .candidates(&mention, candidate_limit)
        .map_err(|e| e.at_stage(Stage::CandidateGeneration))?;
    timings.candidate_generation_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t0 = Instant::now();
    let placeholder =
        prepare_question(&tokens, &mention).map_err(|e| e.at_stage(Stage::RelationPrediction))?;
    let relation = rp
        .predict_relation(&placeholder, &candidates, kg)
        .map_err(|e| e.at_stage(Stage::RelationPrediction))?
        .clone();
    timings.relation_prediction_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t0 = Instant::now();
    let subject = select_subject(&candidates, &relation, kg)
        .map_err(|e| e.at_stage(Stage::AnswerSelection))?;
    let all_objects: Vec<EntityId> = kg
        .facts_by_subject(&subject)
        .into_iter()
        .map(|f| kg.fact(f))
        .filter(|f| f.relation.id == relation.id)
        .map(|f| f.object.clone())
        .collect();
    timings.answer_selection_ms = t0.elapsed().as_secs_f64() * 1e3;
    let object = all_objects
        .first()
        .cloned()
        .ok_or_else(|| Error::NoAnswer("selected subject lost its fact".into()))?;

    Ok(Answer {
        interpretation: Interpretation {
            subject: subject.clone(),
            relation: relation.clone(),
        },
        fact: AnswerFact {
            subject,
            relation,
            object,
            all_objects,
        },
        mention,
        candidates,
        timings,
    })
}
