//! The shared question-dataset format: TSV rows of
//! `question \t subject_id \t relation_id \t object_id [\t provenance]`,
//! and their annotation against a knowledge graph (tokens, gold mention
//! span, domain).

use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::kg::{EntityId, FactId, KnowledgeGraph};
use crate::tagger::locate_gold_span;
use crate::text::{tokenize, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Gold,
    Synthetic,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Gold => "gold",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// One raw dataset row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionRecord {
    pub text: String,
    pub subject: EntityId,
    pub relation_id: String,
    pub object: EntityId,
    pub provenance: Provenance,
}

pub fn load_dataset(path: &Path) -> Result<Vec<QuestionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 4 && cols.len() != 5 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected 4 or 5 tab-separated columns, got {}", cols.len()),
            });
        }
        let provenance = match cols.get(4).copied() {
            None | Some("gold") => Provenance::Gold,
            Some("synthetic") => Provenance::Synthetic,
            Some(other) => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("unknown provenance `{other}`"),
                })
            }
        };
        rows.push(QuestionRecord {
            text: cols[0].to_string(),
            subject: EntityId::new(cols[1])?,
            relation_id: cols[2].to_string(),
            object: EntityId::new(cols[3])?,
            provenance,
        });
    }
    Ok(rows)
}

pub fn save_dataset(rows: &[QuestionRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.text,
            r.subject,
            r.relation_id,
            r.object,
            r.provenance.as_str()
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// A dataset row resolved against the graph: tokens, domain, fact handle,
/// and the gold mention span when the subject's name could be located in
/// the question.
#[derive(Debug, Clone)]
pub struct AnnotatedQuestion {
    pub record: QuestionRecord,
    pub tokens: Vec<Token>,
    pub relation_label: String,
    pub domain: String,
    pub fact: FactId,
    pub span: Option<(usize, usize)>,
}

impl AnnotatedQuestion {
    pub fn is_gold(&self) -> bool {
        self.record.provenance == Provenance::Gold
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnnotateStats {
    /// Rows whose subject name could not be located in the question; their
    /// span is None and they are skipped by span-dependent training.
    pub unlocatable_spans: usize,
}

/// Resolve rows against the graph. Unknown entities/relations and rows
/// whose triple is not a fact of the graph are errors; rows whose subject
/// name cannot be located keep a None span and are counted.
pub fn annotate(
    rows: &[QuestionRecord],
    kg: &KnowledgeGraph,
) -> Result<(Vec<AnnotatedQuestion>, AnnotateStats)> {
    let mut out = Vec::with_capacity(rows.len());
    let mut stats = AnnotateStats::default();
    for r in rows {
        let relation = kg
            .relation_by_id(&r.relation_id)
            .ok_or_else(|| Error::Invalid(format!("unknown relation id `{}`", r.relation_id)))?;
        let fact = kg
            .find_fact(&r.subject, &r.relation_id, &r.object)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "dataset row references a triple absent from the graph: ({}, {}, {})",
                    r.subject, r.relation_id, r.object
                ))
            })?;
        let tokens = tokenize(&r.text);
        if tokens.is_empty() {
            return Err(Error::EmptyInput(format!(
                "question with no tokens for subject {}",
                r.subject
            )));
        }
        let name_tokens = tokenize(kg.entity_name(&r.subject).unwrap_or(""));
        let span = locate_gold_span(&tokens, &name_tokens);
        if span.is_none() {
            stats.unlocatable_spans += 1;
        }
        out.push(AnnotatedQuestion {
            record: r.clone(),
            tokens,
            relation_label: relation.label.clone(),
            domain: relation.domain.clone(),
            fact,
            span,
        });
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::load_kg;

    fn kg(dir: &tempfile::TempDir) -> KnowledgeGraph {
        let w = |fname: &str, content: &str| {
            let p = dir.path().join(fname);
            std::fs::write(&p, content).unwrap();
            p
        };
        let n = w("names.tsv", "gf\tThe Godfather\ncop\tFrancis Ford Coppola\n");
        let l = w("labels.tsv", "r_dir\tfilm.film.directed_by\n");
        let f = w("facts.tsv", "gf\tr_dir\tcop\n");
        load_kg(&f, &n, &l).unwrap()
    }

    #[test]
    fn dataset_roundtrip_and_annotation() {
        let dir = tempfile::tempdir().unwrap();
        let kg = kg(&dir);
        let rows = vec![QuestionRecord {
            text: "who directed the godfather?".into(),
            subject: EntityId::new("gf").unwrap(),
            relation_id: "r_dir".into(),
            object: EntityId::new("cop").unwrap(),
            provenance: Provenance::Gold,
        }];
        let path = dir.path().join("data.tsv");
        save_dataset(&rows, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, rows);

        let (annotated, stats) = annotate(&loaded, &kg).unwrap();
        assert_eq!(stats.unlocatable_spans, 0);
        assert_eq!(annotated[0].domain, "film");
        assert_eq!(annotated[0].span, Some((2, 3)));
    }

    #[test]
    fn four_column_rows_default_to_gold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsv");
        std::fs::write(&path, "who directed x?\tgf\tr_dir\tcop\n").unwrap();
        let rows = load_dataset(&path).unwrap();
        assert_eq!(rows[0].provenance, Provenance::Gold);
    }

    #[test]
    fn unlocatable_subject_is_counted_not_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let kg = kg(&dir);
        let rows = vec![QuestionRecord {
            text: "who directed it?".into(),
            subject: EntityId::new("gf").unwrap(),
            relation_id: "r_dir".into(),
            object: EntityId::new("cop").unwrap(),
            provenance: Provenance::Gold,
        }];
        let (annotated, stats) = annotate(&rows, &kg).unwrap();
        assert_eq!(stats.unlocatable_spans, 1);
        assert_eq!(annotated.len(), 1);
        assert!(annotated[0].span.is_none());
    }

    #[test]
    fn missing_fact_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let kg = kg(&dir);
        let rows = vec![QuestionRecord {
            text: "who directed the godfather?".into(),
            subject: EntityId::new("cop").unwrap(),
            relation_id: "r_dir".into(),
            object: EntityId::new("gf").unwrap(),
            provenance: Provenance::Gold,
        }];
        assert!(annotate(&rows, &kg).is_err());
    }
}
