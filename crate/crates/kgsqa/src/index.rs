//! Entity candidate generation: a pre-built inverted index from n-grams of
//! entity names to entities with tf-idf scores, queried highest-order
//! first with back-off and an exact-match early stop.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::tagger::MentionSpan;
use crate::text::{tokenize, Token};

#[derive(Debug, Clone, PartialEq)]
struct Posting {
    entity: u32,
    score: f64,
}

/// Inverted index from n-grams (as space-joined token strings) to postings
/// sorted by descending score, ties by entity id. Scores are
/// tf(gram in name) * ln(N / df(gram)) with N the number of entity names
/// and df the number of names containing the gram.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    names: Vec<(EntityId, Vec<Token>)>,
    postings: HashMap<String, Vec<Posting>>,
    full_names: HashMap<String, Vec<u32>>,
}

/// Scored candidate entities for one mention, descending by score with no
/// duplicates.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub mention: Vec<Token>,
    pub entities: Vec<(EntityId, f64)>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.iter().map(|(e, _)| e)
    }
}

fn gram_key(tokens: &[Token]) -> String {
    crate::text::join_tokens(tokens)
}

/// Count occurrences of `gram` as a contiguous subsequence of `name`.
fn count_occurrences(name: &[Token], gram: &[Token]) -> usize {
    if gram.is_empty() || gram.len() > name.len() {
        return 0;
    }
    (0..=name.len() - gram.len())
        .filter(|&i| &name[i..i + gram.len()] == gram)
        .count()
}

/// Build the index over all tokenized entity names of the graph.
pub fn build_index(kg: &KnowledgeGraph) -> InvertedIndex {
    let names: Vec<(EntityId, Vec<Token>)> = kg
        .entities()
        .map(|(id, name)| (id.clone(), tokenize(name)))
        .filter(|(_, toks)| !toks.is_empty())
        .collect();
    let n_names = names.len() as f64;

    // term frequency per (gram, name), then document frequency per gram
    let mut tf: HashMap<String, Vec<(u32, usize)>> = HashMap::new();
    for (idx, (_, toks)) in names.iter().enumerate() {
        let mut local: HashMap<String, usize> = HashMap::new();
        for n in 1..=toks.len() {
            for start in 0..=toks.len() - n {
                *local.entry(gram_key(&toks[start..start + n])).or_insert(0) += 1;
            }
        }
        for (gram, count) in local {
            tf.entry(gram).or_default().push((idx as u32, count));
        }
    }

    let mut postings: HashMap<String, Vec<Posting>> = HashMap::with_capacity(tf.len());
    for (gram, entries) in tf {
        let df = entries.len() as f64;
        let idf = (n_names / df).ln();
        let mut posts: Vec<Posting> = entries
            .into_iter()
            .map(|(entity, count)| Posting {
                entity,
                score: count as f64 * idf,
            })
            .collect();
        posts.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then_with(|| names[a.entity as usize].0.cmp(&names[b.entity as usize].0))
        });
        postings.insert(gram, posts);
    }

    let mut full_names: HashMap<String, Vec<u32>> = HashMap::new();
    for (idx, (_, toks)) in names.iter().enumerate() {
        full_names.entry(gram_key(toks)).or_default().push(idx as u32);
    }

    InvertedIndex {
        names,
        postings,
        full_names,
    }
}

impl InvertedIndex {
    pub fn name_count(&self) -> usize {
        self.names.len()
    }

    pub fn entity_name_tokens(&self, id: &EntityId) -> Option<&[Token]> {
        self.names
            .iter()
            .find(|(e, _)| e == id)
            .map(|(_, t)| t.as_slice())
    }

    /// Candidate entities for a mention. Searches n-gram orders from the
    /// full mention length down to 1, accumulating each entity's best
    /// score. After finishing an order in which some n-gram equals a
    /// complete entity name, lower orders are not considered. Returns the
    /// top `limit` by score, ties by entity id.
    pub fn candidates(&self, mention: &MentionSpan, limit: usize) -> Result<CandidateSet> {
        self.candidates_for_tokens(&mention.tokens, limit)
    }

    pub fn candidates_for_tokens(&self, mention: &[Token], limit: usize) -> Result<CandidateSet> {
        if mention.is_empty() {
            return Err(Error::EmptyInput("candidate lookup for empty mention".into()));
        }
        if limit == 0 {
            return Err(Error::Invalid("candidate limit must be at least 1".into()));
        }
        let mut best: HashMap<u32, f64> = HashMap::new();
        for n in (1..=mention.len()).rev() {
            let mut exact_hit = false;
            for start in 0..=mention.len() - n {
                let key = gram_key(&mention[start..start + n]);
                if let Some(posts) = self.postings.get(&key) {
                    for p in posts {
                        let slot = best.entry(p.entity).or_insert(f64::NEG_INFINITY);
                        if p.score > *slot {
                            *slot = p.score;
                        }
                    }
                }
                if self.full_names.contains_key(&key) {
                    exact_hit = true;
                }
            }
            if exact_hit {
                break;
            }
        }
        let mut scored: Vec<(EntityId, f64)> = best
            .into_iter()
            .map(|(idx, score)| (self.names[idx as usize].0.clone(), score))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(limit);
        Ok(CandidateSet {
            mention: mention.to_vec(),
            entities: scored,
        })
    }

    /// Serialize to a single file. Scores are stored as raw f64 bits so a
    /// reloaded index answers queries identically.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("KGSQA-INDEX v1\n");
        out.push_str(&format!("names {}\n", self.names.len()));
        for (id, toks) in &self.names {
            out.push_str(&format!("{}\t{}\n", id, gram_key(toks)));
        }
        let mut grams: Vec<&String> = self.postings.keys().collect();
        grams.sort();
        out.push_str(&format!("postings {}\n", grams.len()));
        for gram in grams {
            out.push_str(gram);
            for p in &self.postings[gram] {
                out.push_str(&format!("\t{}:{:016x}", p.entity, p.score.to_bits()));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<InvertedIndex> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: line + 1,
            msg: msg.to_string(),
        };
        let (i, header) = lines.next().ok_or_else(|| bad(0, "empty index file"))?;
        if header != "KGSQA-INDEX v1" {
            return Err(bad(i, "bad index header"));
        }
        let (i, counts) = lines.next().ok_or_else(|| bad(1, "missing names count"))?;
        let n_names: usize = counts
            .strip_prefix("names ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i, "bad names count"))?;
        let mut names = Vec::with_capacity(n_names);
        for _ in 0..n_names {
            let (i, line) = lines.next().ok_or_else(|| bad(0, "truncated names"))?;
            let (id, name) = line.split_once('\t').ok_or_else(|| bad(i, "bad name line"))?;
            names.push((EntityId::new(id)?, tokenize(name)));
        }
        let (i, counts) = lines.next().ok_or_else(|| bad(0, "missing postings count"))?;
        let n_grams: usize = counts
            .strip_prefix("postings ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i, "bad postings count"))?;
        let mut postings = HashMap::with_capacity(n_grams);
        for _ in 0..n_grams {
            let (i, line) = lines.next().ok_or_else(|| bad(0, "truncated postings"))?;
            let mut parts = line.split('\t');
            let gram = parts.next().ok_or_else(|| bad(i, "bad posting line"))?.to_string();
            let mut posts = Vec::new();
            for part in parts {
                let (e, bits) = part.split_once(':').ok_or_else(|| bad(i, "bad posting"))?;
                let entity: u32 = e.parse().map_err(|_| bad(i, "bad entity ordinal"))?;
                let bits = u64::from_str_radix(bits, 16).map_err(|_| bad(i, "bad score bits"))?;
                posts.push(Posting {
                    entity,
                    score: f64::from_bits(bits),
                });
            }
            postings.insert(gram, posts);
        }
        let mut full_names: HashMap<String, Vec<u32>> = HashMap::new();
        for (idx, (_, toks)) in names.iter().enumerate() {
            full_names.entry(gram_key(toks)).or_default().push(idx as u32);
        }
        Ok(InvertedIndex {
            names,
            postings,
            full_names,
        })
    }
}

/// Index-free reference scorer implementing the same contract by direct
/// scans over all names. Used by tests as the oracle for `candidates`.
pub fn brute_force_candidates(
    names: &[(EntityId, Vec<Token>)],
    mention: &[Token],
    limit: usize,
) -> Vec<(EntityId, f64)> {
    let n_names = names.len() as f64;
    let df = |gram: &[Token]| -> f64 {
        names
            .iter()
            .filter(|(_, name)| count_occurrences(name, gram) > 0)
            .count() as f64
    };
    let mut best: HashMap<usize, f64> = HashMap::new();
    for n in (1..=mention.len()).rev() {
        let mut exact_hit = false;
        for start in 0..=mention.len() - n {
            let gram = &mention[start..start + n];
            let d = df(gram);
            for (idx, (_, name)) in names.iter().enumerate() {
                let tf = count_occurrences(name, gram);
                if tf > 0 {
                    let score = tf as f64 * (n_names / d).ln();
                    let slot = best.entry(idx).or_insert(f64::NEG_INFINITY);
                    if score > *slot {
                        *slot = score;
                    }
                }
            }
            if names.iter().any(|(_, name)| name.as_slice() == gram) {
                exact_hit = true;
            }
        }
        if exact_hit {
            break;
        }
    }
    let mut scored: Vec<(EntityId, f64)> = best
        .into_iter()
        .map(|(idx, score)| (names[idx].0.clone(), score))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(limit);
    scored
}
