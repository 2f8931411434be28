//! Knowledge graph loading, validation and structural queries.
//!
//! The graph is immutable after load: facts are deduplicated, indexed by
//! subject, and every entity carries a popularity count (subject plus
//! object occurrences across all facts).

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{io_err, Error, Result};

/// Opaque entity identifier (e.g. `m.0f4vbz`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(s: impl Into<String>) -> Result<EntityId> {
        let s = s.into();
        if s.is_empty() {
            return Err(Error::Invalid("empty entity id".into()));
        }
        Ok(EntityId(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A relation with its dotted textual label. The domain is the label's
/// first dot-separated segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub id: String,
    pub label: String,
    pub domain: String,
}

/// Domain of a relation label: the substring before the first `.`.
pub fn relation_domain(label: &str) -> Result<&str> {
    if label.is_empty() {
        return Err(Error::Invalid("empty relation label".into()));
    }
    match label.find('.') {
        Some(i) if i > 0 => Ok(&label[..i]),
        _ => Err(Error::RelationLabelFormat(label.to_string())),
    }
}

/// Handle into the fact list of a [`KnowledgeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct FactRec {
    subject: u32,
    relation: u32,
    object: u32,
}

/// Borrowed view of one fact with its components resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fact<'a> {
    pub subject: &'a EntityId,
    pub relation: &'a Relation,
    pub object: &'a EntityId,
}

/// Immutable set of subject-relation-object facts with entity names, a
/// relation table, the subject index, popularity counts and the domain
/// partition of relations.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: IndexMap<EntityId, String>,
    relations: IndexMap<String, Relation>,
    label_index: HashMap<String, usize>,
    facts: Vec<FactRec>,
    by_subject: HashMap<u32, Vec<u32>>,
    popularity: Vec<u64>,
    duplicates_dropped: usize,
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    /// Number of duplicate fact lines dropped at load time.
    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn entities(&self) -> impl Iterator<Item = (&EntityId, &str)> {
        self.entities.iter().map(|(id, name)| (id, name.as_str()))
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn entity_name(&self, id: &EntityId) -> Option<&str> {
        self.entities.get(id.as_str()).map(String::as_str)
    }

    pub fn relation_by_id(&self, rel_id: &str) -> Option<&Relation> {
        self.relations.get(rel_id)
    }

    pub fn relation_by_label(&self, label: &str) -> Option<&Relation> {
        self.label_index
            .get(label)
            .map(|&i| &self.relations[i])
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id.as_str())
    }

    pub fn fact(&self, id: FactId) -> Fact<'_> {
        let rec = &self.facts[id.0];
        Fact {
            subject: self.entities.get_index(rec.subject as usize).unwrap().0,
            relation: &self.relations[rec.relation as usize],
            object: self.entities.get_index(rec.object as usize).unwrap().0,
        }
    }

    pub fn facts(&self) -> impl Iterator<Item = (FactId, Fact<'_>)> {
        (0..self.facts.len()).map(|i| (FactId(i), self.fact(FactId(i))))
    }

    /// Ids of the facts headed by `subject`, in load order.
    pub fn facts_by_subject(&self, subject: &EntityId) -> Vec<FactId> {
        let Some(idx) = self.entities.get_index_of(subject.as_str()) else {
            return Vec::new();
        };
        self.by_subject
            .get(&(idx as u32))
            .map(|v| v.iter().map(|&i| FactId(i as usize)).collect())
            .unwrap_or_default()
    }

    /// Whether some fact `(subject, relation, ·)` exists.
    pub fn has_fact(&self, subject: &EntityId, relation: &Relation) -> bool {
        self.facts_by_subject(subject)
            .iter()
            .any(|&f| self.fact(f).relation.id == relation.id)
    }

    /// Look up a specific triple.
    pub fn find_fact(&self, subject: &EntityId, rel_id: &str, object: &EntityId) -> Option<FactId> {
        self.facts_by_subject(subject).into_iter().find(|&f| {
            let fact = self.fact(f);
            fact.relation.id == rel_id && fact.object == object
        })
    }

    /// Total appearances of `e` in the fact list, as subject or object. A
    /// self-loop fact counts twice. Unknown entities have popularity 0.
    pub fn popularity(&self, e: &EntityId) -> u64 {
        self.entities
            .get_index_of(e.as_str())
            .map(|i| self.popularity[i])
            .unwrap_or(0)
    }

    /// Union over the given entities of the relations of facts they head as
    /// subject, sorted by label (set semantics, deterministic order).
    pub fn relations_for_entities<'a, I>(&self, entities: I) -> Vec<&Relation>
    where
        I: IntoIterator<Item = &'a EntityId>,
    {
        let mut seen = vec![false; self.relations.len()];
        for e in entities {
            for f in self.facts_by_subject(e) {
                seen[self.facts[f.0].relation as usize] = true;
            }
        }
        let mut out: Vec<&Relation> = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| &self.relations[i])
            .collect();
        out.sort_by(|a, b| a.label.cmp(&b.label));
        out
    }

    /// All relations sorted by label.
    pub fn relations_sorted(&self) -> Vec<&Relation> {
        let mut out: Vec<&Relation> = self.relations.values().collect();
        out.sort_by(|a, b| a.label.cmp(&b.label));
        out
    }

    /// Domain partition: sorted domain names, each with its relations in
    /// table order.
    pub fn domains(&self) -> Vec<(&str, Vec<&Relation>)> {
        let mut map: IndexMap<&str, Vec<&Relation>> = IndexMap::new();
        for r in self.relations.values() {
            map.entry(r.domain.as_str()).or_default().push(r);
        }
        let mut out: Vec<(&str, Vec<&Relation>)> = map.into_iter().collect();
        out.sort_by_key(|(d, _)| *d);
        out
    }

    /// Ids of all facts whose relation belongs to `domain`, in load order.
    pub fn facts_in_domain(&self, domain: &str) -> Vec<FactId> {
        self.facts
            .iter()
            .enumerate()
            .filter(|(_, rec)| self.relations[rec.relation as usize].domain == domain)
            .map(|(i, _)| FactId(i))
            .collect()
    }

    /// Ids of all facts with the given relation, in load order.
    pub fn facts_of_relation(&self, rel_id: &str) -> Vec<FactId> {
        let Some(rel_idx) = self.relations.get_index_of(rel_id) else {
            return Vec::new();
        };
        self.facts
            .iter()
            .enumerate()
            .filter(|(_, rec)| rec.relation as usize == rel_idx)
            .map(|(i, _)| FactId(i))
            .collect()
    }
}

fn parse_tsv_line<'a>(
    path: &Path,
    lineno: usize,
    line: &'a str,
    cols: usize,
) -> Result<Option<Vec<&'a str>>> {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let parts: Vec<&str> = trimmed.split('\t').collect();
    if parts.len() != cols {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: lineno,
            msg: format!("expected {cols} tab-separated columns, got {}", parts.len()),
        });
    }
    Ok(Some(parts))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Load a knowledge graph from three TSV files: facts
/// (`subject\trelation\tobject`), entity names (`id\tname`) and relation
/// labels (`id\tlabel`). Lines starting with `#` are comments; blank lines
/// are ignored. Duplicate facts are dropped (the count is retained).
pub fn load_kg(facts_path: &Path, names_path: &Path, labels_path: &Path) -> Result<KnowledgeGraph> {
    let mut entities: IndexMap<EntityId, String> = IndexMap::new();
    for (i, line) in read_file(names_path)?.lines().enumerate() {
        let Some(cols) = parse_tsv_line(names_path, i + 1, line, 2)? else {
            continue;
        };
        let id = EntityId::new(cols[0]).map_err(|_| Error::Parse {
            path: names_path.display().to_string(),
            line: i + 1,
            msg: "empty entity id".into(),
        })?;
        if entities.insert(id, cols[1].to_string()).is_some() {
            return Err(Error::Parse {
                path: names_path.display().to_string(),
                line: i + 1,
                msg: format!("duplicate entity id `{}`", cols[0]),
            });
        }
    }

    let mut relations: IndexMap<String, Relation> = IndexMap::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    for (i, line) in read_file(labels_path)?.lines().enumerate() {
        let Some(cols) = parse_tsv_line(labels_path, i + 1, line, 2)? else {
            continue;
        };
        let (id, label) = (cols[0], cols[1]);
        let domain = relation_domain(label)
            .map_err(|e| Error::Parse {
                path: labels_path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?
            .to_string();
        if label_index.contains_key(label) {
            return Err(Error::Parse {
                path: labels_path.display().to_string(),
                line: i + 1,
                msg: format!("duplicate relation label `{label}`"),
            });
        }
        let rel = Relation {
            id: id.to_string(),
            label: label.to_string(),
            domain,
        };
        let idx = relations.len();
        if relations.insert(id.to_string(), rel).is_some() {
            return Err(Error::Parse {
                path: labels_path.display().to_string(),
                line: i + 1,
                msg: format!("duplicate relation id `{id}`"),
            });
        }
        label_index.insert(label.to_string(), idx);
    }

    let mut facts: Vec<FactRec> = Vec::new();
    let mut seen: std::collections::HashSet<FactRec> = std::collections::HashSet::new();
    let mut duplicates_dropped = 0usize;
    for (i, line) in read_file(facts_path)?.lines().enumerate() {
        let Some(cols) = parse_tsv_line(facts_path, i + 1, line, 3)? else {
            continue;
        };
        let sub = entities.get_index_of(cols[0]).ok_or_else(|| Error::Referential {
            kind: "entity",
            id: cols[0].to_string(),
            path: facts_path.display().to_string(),
            line: i + 1,
        })?;
        let rel = relations.get_index_of(cols[1]).ok_or_else(|| Error::Referential {
            kind: "relation",
            id: cols[1].to_string(),
            path: facts_path.display().to_string(),
            line: i + 1,
        })?;
        let obj = entities.get_index_of(cols[2]).ok_or_else(|| Error::Referential {
            kind: "entity",
            id: cols[2].to_string(),
            path: facts_path.display().to_string(),
            line: i + 1,
        })?;
        let rec = FactRec {
            subject: sub as u32,
            relation: rel as u32,
            object: obj as u32,
        };
        if seen.insert(rec) {
            facts.push(rec);
        } else {
            duplicates_dropped += 1;
        }
    }

    let mut by_subject: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut popularity = vec![0u64; entities.len()];
    for (i, rec) in facts.iter().enumerate() {
        by_subject.entry(rec.subject).or_default().push(i as u32);
        popularity[rec.subject as usize] += 1;
        popularity[rec.object as usize] += 1;
    }

    Ok(KnowledgeGraph {
        entities,
        relations,
        label_index,
        facts,
        by_subject,
        popularity,
        duplicates_dropped,
    })
}
