//! Distant-supervision keyword extraction: harvest candidate sentences per
//! fact from an entity-linked corpus, keep the best sentence by
//! mean-embedding cosine against the relation label, pool per relation,
//! and rank keywords by tf-idf over the relation-document collection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use crate::error::{io_err, Error, Result};
use crate::exec;
use crate::kg::{EntityId, Fact, KnowledgeGraph, Relation};
use crate::text::{cosine, embed_mean, tokenize_relation_label, TextSpace, Token};

/// One pre-segmented sentence with the entities it links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub links: Vec<EntityId>,
}

impl Sentence {
    pub fn links_entity(&self, e: &EntityId) -> bool {
        self.links.iter().any(|l| l == e)
    }
}

/// An entity-linked document: the article's subject entity plus its
/// sentences.
#[derive(Debug, Clone)]
pub struct LinkedDocument {
    pub entity: EntityId,
    pub sentences: Vec<Sentence>,
}

/// The corpus with a lookup from entity id to its document.
#[derive(Debug, Clone, Default)]
pub struct LinkedCorpus {
    docs: Vec<LinkedDocument>,
    by_entity: HashMap<EntityId, usize>,
}

impl LinkedCorpus {
    pub fn new(docs: Vec<LinkedDocument>) -> LinkedCorpus {
        let by_entity = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.entity.clone(), i))
            .collect();
        LinkedCorpus { docs, by_entity }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn document(&self, entity: &EntityId) -> Option<&LinkedDocument> {
        self.by_entity.get(entity).map(|&i| &self.docs[i])
    }

    pub fn documents(&self) -> &[LinkedDocument] {
        &self.docs
    }
}

#[derive(Deserialize)]
struct RawSentence {
    tokens: Vec<String>,
    #[serde(default)]
    links: Vec<String>,
}

#[derive(Deserialize)]
struct RawDocument {
    entity: String,
    sentences: Vec<RawSentence>,
}

/// Load a JSON-lines corpus. Every linked entity (and each document's
/// subject) must exist in the knowledge graph; sentence tokens are
/// lowercased on load.
pub fn load_corpus(path: &Path, kg: &KnowledgeGraph) -> Result<LinkedCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        let entity = EntityId::new(&raw.entity)?;
        if !kg.contains_entity(&entity) {
            return Err(Error::Referential {
                kind: "entity",
                id: raw.entity,
                path: path.display().to_string(),
                line: i + 1,
            });
        }
        let mut sentences = Vec::with_capacity(raw.sentences.len());
        for s in raw.sentences {
            if s.tokens.is_empty() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: "sentence with no tokens".into(),
                });
            }
            let tokens = s
                .tokens
                .iter()
                .map(|t| Token::new(t.as_str()))
                .collect::<Result<Vec<_>>>()?;
            let mut links = Vec::with_capacity(s.links.len());
            for l in &s.links {
                let id = EntityId::new(l.as_str())?;
                if !kg.contains_entity(&id) {
                    return Err(Error::Referential {
                        kind: "entity",
                        id: l.clone(),
                        path: path.display().to_string(),
                        line: i + 1,
                    });
                }
                links.push(id);
            }
            sentences.push(Sentence { tokens, links });
        }
        docs.push(LinkedDocument { entity, sentences });
    }
    Ok(LinkedCorpus::new(docs))
}

/// Candidate sentences for a fact: sentences in the subject's document
/// that link the object, plus sentences in the object's document that link
/// the subject, deduplicated by token sequence.
pub fn extract_sentences<'c>(fact: &Fact<'_>, corpus: &'c LinkedCorpus) -> Vec<&'c Sentence> {
    let mut out: Vec<&Sentence> = Vec::new();
    let mut seen: HashSet<&[Token]> = HashSet::new();
    let push = |s: &'c Sentence, out: &mut Vec<&'c Sentence>, seen: &mut HashSet<&'c [Token]>| {
        if seen.insert(&s.tokens) {
            out.push(s);
        }
    };
    if let Some(doc) = corpus.document(fact.subject) {
        for s in &doc.sentences {
            if s.links_entity(fact.object) {
                push(s, &mut out, &mut seen);
            }
        }
    }
    if fact.object != fact.subject {
        if let Some(doc) = corpus.document(fact.object) {
            for s in &doc.sentences {
                if s.links_entity(fact.subject) {
                    push(s, &mut out, &mut seen);
                }
            }
        }
    }
    out
}

/// The sentence whose mean embedding is most cosine-similar to the mean
/// embedding of the relation label tokens; first occurrence wins ties.
pub fn best_sentence<'s>(
    sentences: &[&'s Sentence],
    relation: &Relation,
    space: &TextSpace,
) -> Result<&'s Sentence> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no candidate sentences for relation {}",
            relation.label
        )));
    }
    let label_vec = embed_mean(&tokenize_relation_label(&relation.label), space)?;
    let mut best = sentences[0];
    let mut best_score = f64::NEG_INFINITY;
    for s in sentences {
        let sv = embed_mean(&s.tokens, space)?;
        // a degenerate zero vector cannot win
        let score = cosine(&sv, &label_vec).unwrap_or(f64::NEG_INFINITY);
        if score > best_score {
            best_score = score;
            best = s;
        }
    }
    Ok(best)
}

/// Sentences selected for one relation, one best sentence per covered
/// fact.
#[derive(Debug, Clone)]
pub struct RelationDocument {
    pub relation: Relation,
    pub sentences: Vec<Vec<Token>>,
}

impl RelationDocument {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// For every fact of every requested relation, extract candidate sentences
/// and keep the best one; facts with no coverage are skipped. Relations
/// keep the given order; facts are processed in knowledge-graph load order
/// (parallel per fact with a deterministic merge).
pub fn build_relation_docs(
    kg: &KnowledgeGraph,
    corpus: &LinkedCorpus,
    relations: &[&Relation],
    space: &TextSpace,
) -> Result<Vec<RelationDocument>> {
    let mut out = Vec::with_capacity(relations.len());
    for rel in relations {
        let fact_ids = kg.facts_of_relation(&rel.id);
        let picked: Vec<Option<Vec<Token>>> = exec::map_ordered(&fact_ids, |fid| {
            let fact = kg.fact(*fid);
            let cands = extract_sentences(&fact, corpus);
            if cands.is_empty() {
                None
            } else {
                best_sentence(&cands, rel, space)
                    .ok()
                    .map(|s| s.tokens.clone())
            }
        });
        out.push(RelationDocument {
            relation: (*rel).clone(),
            sentences: picked.into_iter().flatten().collect(),
        });
    }
    Ok(out)
}

/// Ranked keyword lists per relation label, truncated to k.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationKeywordTable {
    pub k: usize,
    per_relation: BTreeMap<String, Vec<(String, f64)>>,
}

impl RelationKeywordTable {
    pub fn empty(k: usize) -> RelationKeywordTable {
        RelationKeywordTable {
            k,
            per_relation: BTreeMap::new(),
        }
    }

    pub fn keywords(&self, label: &str) -> Option<&[(String, f64)]> {
        self.per_relation.get(label).map(Vec::as_slice)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.per_relation.keys().map(String::as_str)
    }

    /// TSV serialization: relation_label, keyword, score; sorted by
    /// relation then rank.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (label, kws) in &self.per_relation {
            for (kw, score) in kws {
                out.push_str(&format!("{label}\t{kw}\t{score:.6}\n"));
            }
        }
        std::fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path, k: usize) -> Result<RelationKeywordTable> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut per_relation: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected 3 columns, got {}", cols.len()),
                });
            }
            let score: f64 = cols[2].parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("bad score `{}`", cols[2]),
            })?;
            per_relation
                .entry(cols[0].to_string())
                .or_default()
                .push((cols[1].to_string(), score));
        }
        Ok(RelationKeywordTable { k, per_relation })
    }
}

fn keyword_eligible(token: &Token, stoplist: &HashSet<String>) -> bool {
    let s = token.as_str();
    s.len() >= 2 && s.chars().all(|c| c.is_alphabetic()) && !stoplist.contains(s)
}

/// Score every eligible token of each relation document by
/// tf(t, S_r) * ln(N / df(t)) where N is the number of relation documents
/// and df counts documents containing t; keep the top-k per relation, ties
/// alphabetical. Tokens must be alphabetic with length >= 2; `stoplist`
/// filters further (empty by default).
pub fn extract_keywords(
    docs: &[RelationDocument],
    k: usize,
    stoplist: &HashSet<String>,
) -> Result<RelationKeywordTable> {
    if docs.iter().all(RelationDocument::is_empty) {
        return Err(Error::EmptyInput("all relation documents are empty".into()));
    }
    let n_docs = docs.len() as f64;

    // token counts per document, then document frequency
    let counts: Vec<HashMap<&str, usize>> = docs
        .iter()
        .map(|doc| {
            let mut m: HashMap<&str, usize> = HashMap::new();
            for sent in &doc.sentences {
                for t in sent {
                    if keyword_eligible(t, stoplist) {
                        *m.entry(t.as_str()).or_insert(0) += 1;
                    }
                }
            }
            m
        })
        .collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for m in &counts {
        for t in m.keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }

    let mut per_relation = BTreeMap::new();
    for (doc, m) in docs.iter().zip(&counts) {
        let mut scored: Vec<(String, f64)> = m
            .iter()
            .map(|(t, &tf)| {
                let idf = (n_docs / df[t] as f64).ln();
                ((*t).to_string(), tf as f64 * idf)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        per_relation.insert(doc.relation.label.clone(), scored);
    }
    Ok(RelationKeywordTable { k, per_relation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::load_kg;
    use crate::text::{tokenize, Vocabulary};
    use std::io::Write;

    fn mini_kg(dir: &tempfile::TempDir) -> KnowledgeGraph {
        let w = |fname: &str, content: &str| {
            let p = dir.path().join(fname);
            let mut f = std::fs::File::create(&p).unwrap();
            f.write_all(content.as_bytes()).unwrap();
            p
        };
        let n = w("names.tsv", "a\tHeat\nb\tMichael Mann\nc\tAl Pacino\n");
        let l = w(
            "labels.tsv",
            "r1\tfilm.film.directed_by\nr2\tfilm.film.starring\n",
        );
        let f = w("facts.tsv", "a\tr1\tb\na\tr2\tc\n");
        load_kg(&f, &n, &l).unwrap()
    }

    fn sent(text: &str, links: &[&str]) -> Sentence {
        Sentence {
            tokens: tokenize(text),
            links: links.iter().map(|l| EntityId::new(*l).unwrap()).collect(),
        }
    }

    fn space_for(texts: &[&str]) -> TextSpace {
        let mut vocab = Vocabulary::new();
        for t in texts {
            vocab.add_all(&tokenize(t));
        }
        TextSpace::build(vocab, 3, 16).unwrap()
    }

    #[test]
    fn extract_sentences_both_directions_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let kg = mini_kg(&dir);
        let corpus = LinkedCorpus::new(vec![
            LinkedDocument {
                entity: EntityId::new("a").unwrap(),
                sentences: vec![
                    sent("heat was directed by michael mann .", &["b"]),
                    sent("heat stars al pacino .", &["c"]),
                ],
            },
            LinkedDocument {
                entity: EntityId::new("b").unwrap(),
                sentences: vec![sent("michael mann directed heat .", &["a"])],
            },
        ]);
        let (fid, _) = kg.facts().next().unwrap();
        let fact = kg.fact(fid);
        let s = extract_sentences(&fact, &corpus);
        assert_eq!(s.len(), 2);
        // no document mentions the counterpart
        let fact2 = kg.fact(crate::kg::FactId(1));
        let corpus_empty = LinkedCorpus::new(vec![]);
        assert!(extract_sentences(&fact2, &corpus_empty).is_empty());
    }

    #[test]
    fn best_sentence_prefers_label_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let kg = mini_kg(&dir);
        let rel = kg.relation_by_id("r1").unwrap();
        let space = space_for(&[
            "heat was directed by michael mann .",
            "heat is a long movie .",
            "film film directed by",
        ]);
        let s1 = sent("heat was directed by michael mann .", &["b"]);
        let s2 = sent("heat is a long movie .", &["b"]);
        let cands = vec![&s2, &s1];
        let best = best_sentence(&cands, rel, &space).unwrap();
        assert_eq!(best.tokens, s1.tokens);

        // single candidate: returned as-is
        let only = vec![&s2];
        assert_eq!(best_sentence(&only, rel, &space).unwrap().tokens, s2.tokens);

        // sentence equal to the label tokens always wins (cosine 1)
        let s3 = sent("film film directed by", &["b"]);
        let cands = vec![&s2, &s3, &s1];
        assert_eq!(best_sentence(&cands, rel, &space).unwrap().tokens, s3.tokens);

        assert!(best_sentence(&[], rel, &space).is_err());
    }

    #[test]
    fn build_relation_docs_counts_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let kg = mini_kg(&dir);
        let space = space_for(&["heat was directed by michael mann ."]);
        let corpus = LinkedCorpus::new(vec![LinkedDocument {
            entity: EntityId::new("a").unwrap(),
            sentences: vec![sent("heat was directed by michael mann .", &["b"])],
        }]);
        let rels: Vec<&Relation> = kg.relations().collect();
        let docs = build_relation_docs(&kg, &corpus, &rels, &space).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].sentences.len(), 1); // directed_by covered
        assert!(docs[1].is_empty()); // starring has no coverage
    }

    fn doc(label: &str, sentences: &[&str]) -> RelationDocument {
        RelationDocument {
            relation: Relation {
                id: label.to_string(),
                label: label.to_string(),
                domain: label.split('.').next().unwrap().to_string(),
            },
            sentences: sentences.iter().map(|s| tokenize(s)).collect(),
        }
    }

    #[test]
    fn keywords_match_hand_computed_tfidf() {
        let docs = vec![
            doc("film.film.directed_by", &["x directed y", "z directed w film"]),
            doc("book.written_work.author", &["x wrote y", "z wrote w book"]),
        ];
        let table = extract_keywords(&docs, 10, &HashSet::new()).unwrap();
        let kws = table.keywords("film.film.directed_by").unwrap();
        // "directed": tf 2, df 1 -> 2 ln 2; "film": tf 1, df 1 -> ln 2;
        // x, y, z, w appear in both docs -> idf 0
        let ln2 = 2f64.ln();
        assert_eq!(kws[0].0, "directed");
        assert!((kws[0].1 - 2.0 * ln2).abs() < 1e-12);
        assert_eq!(kws[1].0, "film");
        assert!((kws[1].1 - ln2).abs() < 1e-12);
        for (kw, score) in kws {
            if ["directed", "film"].contains(&kw.as_str()) {
                continue;
            }
            assert_eq!(*score, 0.0);
        }
    }

    #[test]
    fn token_in_every_document_has_zero_score() {
        let docs = vec![
            doc("a.b.c", &["shared alpha"]),
            doc("d.e.f", &["shared beta"]),
        ];
        let table = extract_keywords(&docs, 1, &HashSet::new()).unwrap();
        // with k=1 the top keyword must be the distinctive one, not "shared"
        assert_eq!(table.keywords("a.b.c").unwrap()[0].0, "alpha");
        assert_eq!(table.keywords("d.e.f").unwrap()[0].0, "beta");
    }

    #[test]
    fn keyword_filter_drops_non_alphabetic_and_short() {
        let docs = vec![
            doc("a.b.c", &["x1 ab a . 1984 strong"]),
            doc("d.e.f", &["other words"]),
        ];
        let table = extract_keywords(&docs, 10, &HashSet::new()).unwrap();
        let kws: Vec<&str> = table
            .keywords("a.b.c")
            .unwrap()
            .iter()
            .map(|(k, _)| k.as_str())
            .collect();
        assert!(kws.contains(&"ab"));
        assert!(kws.contains(&"strong"));
        assert!(!kws.contains(&"x1"));
        assert!(!kws.contains(&"a"));
        assert!(!kws.contains(&"1984"));
        assert!(!kws.contains(&"."));
    }

    #[test]
    fn keywords_all_occur_in_their_document_and_scores_non_increasing() {
        let docs = vec![
            doc("a.b.c", &["alpha beta gamma alpha", "delta beta"]),
            doc("d.e.f", &["epsilon zeta"]),
            doc("g.h.i", &["eta theta alpha"]),
        ];
        let table = extract_keywords(&docs, 5, &HashSet::new()).unwrap();
        for d in &docs {
            let kws = table.keywords(&d.relation.label).unwrap();
            assert!(kws.len() <= 5);
            let all_tokens: HashSet<&str> = d
                .sentences
                .iter()
                .flatten()
                .map(Token::as_str)
                .collect();
            let mut prev = f64::INFINITY;
            for (kw, score) in kws {
                assert!(all_tokens.contains(kw.as_str()), "{kw} not in S_r");
                assert!(*score >= 0.0);
                assert!(*score <= prev);
                prev = *score;
            }
        }
    }

    #[test]
    fn keywords_invariant_to_document_order() {
        let d1 = doc("a.b.c", &["alpha beta", "gamma alpha"]);
        let d2 = doc("d.e.f", &["delta beta"]);
        let t_fwd = extract_keywords(&[d1.clone(), d2.clone()], 4, &HashSet::new()).unwrap();
        let t_rev = extract_keywords(&[d2, d1], 4, &HashSet::new()).unwrap();
        assert_eq!(t_fwd, t_rev);
    }

    #[test]
    fn all_empty_documents_is_an_error() {
        let docs = vec![doc("a.b.c", &[]), doc("d.e.f", &[])];
        assert!(extract_keywords(&docs, 3, &HashSet::new()).is_err());
    }

    #[test]
    fn table_roundtrips_through_tsv() {
        let docs = vec![
            doc("a.b.c", &["alpha beta gamma"]),
            doc("d.e.f", &["delta beta"]),
        ];
        let table = extract_keywords(&docs, 3, &HashSet::new()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keywords.tsv");
        table.save(&path).unwrap();
        let loaded = RelationKeywordTable::load(&path, 3).unwrap();
        for label in table.labels() {
            let a = table.keywords(label).unwrap();
            let b = loaded.keywords(label).unwrap();
            assert_eq!(a.len(), b.len());
            for ((ka, sa), (kb, sb)) in a.iter().zip(b) {
                assert_eq!(ka, kb);
                assert!((sa - sb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn corpus_loader_validates_links() {
        let dir = tempfile::tempdir().unwrap();
        let kg = mini_kg(&dir);
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"entity\":\"a\",\"sentences\":[{\"tokens\":[\"heat\"],\"links\":[\"zzz\"]}]}\n",
        )
        .unwrap();
        assert!(matches!(
            load_corpus(&path, &kg),
            Err(Error::Referential { .. })
        ));
        std::fs::write(
            &path,
            "{\"entity\":\"a\",\"sentences\":[{\"tokens\":[\"Heat\",\"rocks\"],\"links\":[\"b\"]}]}\n",
        )
        .unwrap();
        let corpus = load_corpus(&path, &kg).unwrap();
        let doc = corpus.document(&EntityId::new("a").unwrap()).unwrap();
        assert_eq!(doc.sentences[0].tokens[0].as_str(), "heat");
    }
}
