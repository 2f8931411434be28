//! Experiment configuration: a key=value text file with `#` comments. The
//! KGSQA_SEED environment variable overrides the configured seed.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationMode {
    None,
    RawSentences,
    Qg,
}

impl AugmentationMode {
    pub fn parse(s: &str) -> Result<AugmentationMode> {
        match s {
            "none" => Ok(AugmentationMode::None),
            "raw-sentences" => Ok(AugmentationMode::RawSentences),
            "qg" => Ok(AugmentationMode::Qg),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected none | raw-sentences | qg)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentationMode::None => "none",
            AugmentationMode::RawSentences => "raw-sentences",
            AugmentationMode::Qg => "qg",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kg_facts: PathBuf,
    pub kg_names: PathBuf,
    pub kg_labels: PathBuf,
    pub corpus: Option<PathBuf>,
    pub dataset: PathBuf,
    pub types: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub target_domain: Option<String>,
    pub mode: AugmentationMode,
    pub seed: u64,
    pub repeats: usize,
    pub k: usize,
    pub margin: f64,
    pub p_neg: f64,
    pub candidate_limit: usize,
    pub embedding_dim: usize,
    pub sweep_sizes: Vec<usize>,
    pub compare_with_none: bool,

    pub md_hidden: usize,
    pub md_layers: usize,
    pub md_dropout: f64,
    pub md_lr: f64,
    pub md_epochs: usize,
    pub md_batch: usize,

    pub rp_hidden: usize,
    pub rp_lr: f64,
    pub rp_epochs: usize,
    pub rp_negatives: usize,
    pub rp_batch: usize,

    pub qg_fact_dim: usize,
    pub qg_hidden: usize,
    pub qg_attn_dim: usize,
    pub qg_lr: f64,
    pub qg_epochs: usize,
    pub qg_batch: usize,
    pub qg_max_len: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kg_facts: PathBuf::new(),
            kg_names: PathBuf::new(),
            kg_labels: PathBuf::new(),
            corpus: None,
            dataset: PathBuf::new(),
            types: None,
            out_dir: PathBuf::from("out"),
            target_domain: None,
            mode: AugmentationMode::None,
            seed: 13,
            repeats: 1,
            k: 10,
            margin: 0.1,
            p_neg: 0.5,
            candidate_limit: 50,
            embedding_dim: 50,
            sweep_sizes: vec![50, 100, 200, 400, 800],
            compare_with_none: false,
            md_hidden: 600,
            md_layers: 2,
            md_dropout: 0.4,
            md_lr: 1e-3,
            md_epochs: 50,
            md_batch: 300,
            rp_hidden: 400,
            rp_lr: 1e-3,
            rp_epochs: 10,
            rp_negatives: 10,
            rp_batch: 200,
            qg_fact_dim: 32,
            qg_hidden: 48,
            qg_attn_dim: 32,
            qg_lr: 1e-3,
            qg_epochs: 30,
            qg_batch: 32,
            qg_max_len: 20,
        }
    }
}

impl ExperimentConfig {
    /// Parse a key=value config file. Unknown keys are rejected. The
    /// KGSQA_SEED environment variable, when set, overrides `seed`.
    pub fn parse_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = ExperimentConfig::parse_str(&text, base)?;
        if let Ok(seed) = std::env::var("KGSQA_SEED") {
            cfg.seed = seed
                .parse()
                .map_err(|_| Error::Config(format!("bad KGSQA_SEED value `{seed}`")))?;
        }
        Ok(cfg)
    }

    /// Parse config text; relative paths resolve against `base`.
    pub fn parse_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
        let mut kv: HashMap<&str, &str> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            kv.insert(k.trim(), v.trim());
        }

        let mut cfg = ExperimentConfig::default();
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut known = |key: &str| kv.remove(key).map(str::to_string);
        macro_rules! parse_into {
            ($field:expr, $key:literal) => {
                if let Some(v) = known($key) {
                    $field = v
                        .parse()
                        .map_err(|_| Error::Config(format!("bad value for `{}`: `{v}`", $key)))?;
                }
            };
        }

        if let Some(v) = known("kg.facts") {
            cfg.kg_facts = path(&v);
        }
        if let Some(v) = known("kg.names") {
            cfg.kg_names = path(&v);
        }
        if let Some(v) = known("kg.labels") {
            cfg.kg_labels = path(&v);
        }
        if let Some(v) = known("corpus") {
            cfg.corpus = Some(path(&v));
        }
        if let Some(v) = known("dataset") {
            cfg.dataset = path(&v);
        }
        if let Some(v) = known("types") {
            cfg.types = Some(path(&v));
        }
        if let Some(v) = known("out_dir") {
            cfg.out_dir = path(&v);
        }
        if let Some(v) = known("target_domain") {
            cfg.target_domain = Some(v);
        }
        if let Some(v) = known("mode") {
            cfg.mode = AugmentationMode::parse(&v)?;
        }
        if let Some(v) = known("sweep_sizes") {
            cfg.sweep_sizes = v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad sweep size `{s}`")))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = known("compare_with_none") {
            cfg.compare_with_none = v == "true" || v == "1";
        }
        parse_into!(cfg.seed, "seed");
        parse_into!(cfg.repeats, "repeats");
        parse_into!(cfg.k, "k");
        parse_into!(cfg.margin, "margin");
        parse_into!(cfg.p_neg, "p_neg");
        parse_into!(cfg.candidate_limit, "candidate_limit");
        parse_into!(cfg.embedding_dim, "embedding_dim");
        parse_into!(cfg.md_hidden, "md.hidden");
        parse_into!(cfg.md_layers, "md.layers");
        parse_into!(cfg.md_dropout, "md.dropout");
        parse_into!(cfg.md_lr, "md.lr");
        parse_into!(cfg.md_epochs, "md.epochs");
        parse_into!(cfg.md_batch, "md.batch");
        parse_into!(cfg.rp_hidden, "rp.hidden");
        parse_into!(cfg.rp_lr, "rp.lr");
        parse_into!(cfg.rp_epochs, "rp.epochs");
        parse_into!(cfg.rp_negatives, "rp.negatives");
        parse_into!(cfg.rp_batch, "rp.batch");
        parse_into!(cfg.qg_fact_dim, "qg.fact_dim");
        parse_into!(cfg.qg_hidden, "qg.hidden");
        parse_into!(cfg.qg_attn_dim, "qg.attn_dim");
        parse_into!(cfg.qg_lr, "qg.lr");
        parse_into!(cfg.qg_epochs, "qg.epochs");
        parse_into!(cfg.qg_batch, "qg.batch");
        parse_into!(cfg.qg_max_len, "qg.max_len");

        if let Some(unknown) = kv.keys().next() {
            return Err(Error::Config(format!("unknown config key `{unknown}`")));
        }
        if !(0.0..=1.0).contains(&cfg.p_neg) {
            return Err(Error::Config(format!("p_neg {} outside [0,1]", cfg.p_neg)));
        }
        if cfg.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn md_config(&self, seed: u64) -> crate::tagger::MdConfig {
        crate::tagger::MdConfig {
            hidden: self.md_hidden,
            layers: self.md_layers,
            dropout: self.md_dropout,
            lr: self.md_lr,
            epochs: self.md_epochs,
            batch: self.md_batch,
            seed,
            threshold: 0.5,
        }
    }

    pub fn rp_config(&self, seed: u64) -> crate::ranker::RpConfig {
        crate::ranker::RpConfig {
            hidden: self.rp_hidden,
            lr: self.rp_lr,
            epochs: self.rp_epochs,
            n_negatives: self.rp_negatives,
            batch: self.rp_batch,
            margin: self.margin,
            p_neg: self.p_neg,
            seed,
        }
    }

    pub fn qg_config(&self, seed: u64) -> crate::qg::QgConfig {
        crate::qg::QgConfig {
            fact_dim: self.qg_fact_dim,
            hidden: self.qg_hidden,
            attn_dim: self.qg_attn_dim,
            lr: self.qg_lr,
            epochs: self.qg_epochs,
            batch: self.qg_batch,
            max_len: self.qg_max_len,
            seed,
            target_domain: self.target_domain.clone(),
        }
    }
}
