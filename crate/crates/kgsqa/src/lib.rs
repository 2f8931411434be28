//! Knowledge-graph simple question answering for unseen domains.
//!
//! A four-stage QA pipeline (mention detection, candidate generation,
//! relation prediction, answer selection) plus a distant-supervision
//! keyword extractor and a copy-mechanism question generator that
//! synthesizes training questions for KG domains with no gold questions,
//! and a leave-one-domain-out experiment harness around the whole thing.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod index;
pub mod keywords;
pub mod kg;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod qg;
pub mod ranker;
pub mod tagger;
pub mod text;

pub use error::{Error, Result, Stage};
