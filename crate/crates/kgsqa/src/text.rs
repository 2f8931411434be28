//! Tokenization, vocabulary, frozen deterministic word embeddings and
//! mean-pooled text embeddings.

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// A single lowercase token. Non-empty and free of internal whitespace by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn new(s: impl Into<String>) -> Result<Token> {
        let s = s.into();
        if s.is_empty() {
            return Err(Error::Invalid("empty token".into()));
        }
        if s.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!("token `{s}` contains whitespace")));
        }
        Ok(Token(s.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for Token {
    fn borrow(&self) -> &str {
        &self.0
    }
}

fn is_split_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | '\'' | '"')
}

/// Lowercase, split on whitespace, and break the punctuation characters
/// `.,!?'"` into their own tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let mut cur = String::new();
        for ch in lower.chars() {
            if is_split_punct(ch) {
                if !cur.is_empty() {
                    out.push(Token(std::mem::take(&mut cur)));
                }
                out.push(Token(ch.to_string()));
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(Token(cur));
        }
    }
    out
}

/// Split a dotted relation label (e.g. `film.film.directed_by`) on `.` and
/// `_` into lowercase tokens.
pub fn tokenize_relation_label(label: &str) -> Vec<Token> {
    label
        .split(['.', '_'])
        .filter(|s| !s.is_empty())
        .map(|s| Token(s.to_lowercase()))
        .collect()
}

/// Join tokens back into a single space-separated string.
pub fn join_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(Token::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Reserved vocabulary entries, always present with the lowest ids in this
/// fixed order.
pub const RESERVED: [&str; 5] = [PAD, UNK, SBJ, BOS, EOS];
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const SBJ: &str = "<sbj>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const SBJ_ID: usize = 2;
pub const BOS_ID: usize = 3;
pub const EOS_ID: usize = 4;

/// Token-to-id bijection with dense ids `0..len`. Reserved entries come
/// first in the order PAD, UNK, SBJ, BOS, EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: IndexMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Vocabulary {
        let mut ids = IndexMap::new();
        for (i, r) in RESERVED.iter().enumerate() {
            ids.insert((*r).to_string(), i);
        }
        Vocabulary { ids }
    }

    /// Insert a token if absent; returns its id either way.
    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.ids.len();
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn add_all<'a>(&mut self, tokens: impl IntoIterator<Item = &'a Token>) {
        for t in tokens {
            self.add(t.as_str());
        }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    /// Id of `token`, falling back to the UNK id for out-of-vocabulary
    /// tokens.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.ids.get_index(id).map(|(t, _)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.ids.keys().map(String::as_str)
    }

    /// Serialize as one token per line; the line number is the id.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for t in self.tokens() {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_lines(lines: &str) -> Result<Vocabulary> {
        let mut ids = IndexMap::new();
        for (i, line) in lines.lines().enumerate() {
            if i < RESERVED.len() && line != RESERVED[i] {
                return Err(Error::Invalid(format!(
                    "vocabulary line {i} must be reserved token `{}`, got `{line}`",
                    RESERVED[i]
                )));
            }
            if ids.insert(line.to_string(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token `{line}`")));
            }
        }
        if ids.len() < RESERVED.len() {
            return Err(Error::Invalid("vocabulary missing reserved tokens".into()));
        }
        Ok(Vocabulary { ids })
    }

    /// Stable FNV-1a hash over the token list, used to check that two
    /// trained models share a vocabulary.
    pub fn hash(&self) -> u64 {
        let mut h = FNV_OFFSET;
        for t in self.tokens() {
            for b in t.as_bytes() {
                h = fnv_step(h, *b);
            }
            h = fnv_step(h, 0xff);
        }
        h
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x1000_0000_01b3;

fn fnv_step(h: u64, b: u8) -> u64 {
    (h ^ b as u64).wrapping_mul(FNV_PRIME)
}

fn fnv_seeded(seed: u64, s: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        h = fnv_step(h, b);
    }
    for &b in s.as_bytes() {
        h = fnv_step(h, b);
    }
    h
}

/// Frozen word-embedding table. Each row is drawn componentwise uniform in
/// `[-0.5/d, 0.5/d]` from a stream keyed by a hash of (seed, token), so the
/// table is bit-identical across runs given (vocabulary, seed, d). The PAD
/// row is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    rows: Vec<f64>,
}

impl EmbeddingTable {
    pub fn build(vocab: &Vocabulary, seed: u64, dim: usize) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        let mut rows = vec![0.0; vocab.len() * dim];
        let half = 0.5 / dim as f64;
        for (id, token) in vocab.tokens().enumerate() {
            if id == PAD_ID {
                continue;
            }
            let mut state = fnv_seeded(seed, token);
            let row = &mut rows[id * dim..(id + 1) * dim];
            for v in row.iter_mut() {
                // splitmix64 stream; uniform in [-half, half)
                state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
                z ^= z >> 31;
                let u = (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                *v = (2.0 * u - 1.0) * half;
            }
        }
        Ok(EmbeddingTable { dim, seed, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.rows[id * self.dim..(id + 1) * self.dim]
    }
}

/// A vocabulary together with its frozen embedding table. Shared by all
/// trained models of one experiment; the hash ties checkpoints together.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSpace {
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
}

impl TextSpace {
    pub fn build(vocab: Vocabulary, seed: u64, dim: usize) -> Result<TextSpace> {
        let table = EmbeddingTable::build(&vocab, seed, dim)?;
        Ok(TextSpace { vocab, table })
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    /// Embedding row for a token, with out-of-vocabulary tokens mapped to
    /// the UNK row.
    pub fn embed(&self, token: &Token) -> &[f64] {
        self.table.row(self.vocab.id_or_unk(token.as_str()))
    }

    pub fn embed_id(&self, id: usize) -> &[f64] {
        self.table.row(id)
    }

    pub fn hash(&self) -> u64 {
        let mut h = self.vocab.hash();
        for b in self.table.seed.to_le_bytes() {
            h = fnv_step(h, b);
        }
        for b in (self.table.dim as u64).to_le_bytes() {
            h = fnv_step(h, b);
        }
        h
    }
}

/// Arithmetic mean of the token embeddings. Unknown tokens use the UNK row.
pub fn embed_mean(tokens: &[Token], space: &TextSpace) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("embed_mean of empty token sequence".into()));
    }
    let d = space.dim();
    let mut acc = vec![0.0; d];
    for t in tokens {
        for (a, v) in acc.iter_mut().zip(space.embed(t)) {
            *a += v;
        }
    }
    let n = tokens.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(acc)
}

/// Cosine similarity of two equal-length, nonzero vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_question_with_punctuation() {
        let toks = tokenize("who directed the godfather?");
        let s: Vec<&str> = toks.iter().map(Token::as_str).collect();
        assert_eq!(s, ["who", "directed", "the", "godfather", "?"]);
    }

    #[test]
    fn tokenize_empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        let toks = tokenize("A  B");
        let s: Vec<&str> = toks.iter().map(Token::as_str).collect();
        assert_eq!(s, ["a", "b"]);
    }

    #[test]
    fn tokenize_relation_labels() {
        let s: Vec<String> = tokenize_relation_label("film.film.directed_by")
            .iter()
            .map(|t| t.to_string())
            .collect();
        assert_eq!(s, ["film", "film", "directed", "by"]);
        let s: Vec<String> = tokenize_relation_label("music.artist.label")
            .iter()
            .map(|t| t.to_string())
            .collect();
        assert_eq!(s, ["music", "artist", "label"]);
        let s: Vec<String> = tokenize_relation_label("a.b")
            .iter()
            .map(|t| t.to_string())
            .collect();
        assert_eq!(s, ["a", "b"]);
    }

    #[test]
    fn vocabulary_reserved_ids_and_roundtrip() {
        let mut v = Vocabulary::new();
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(EOS), Some(EOS_ID));
        let id = v.add("godfather");
        assert_eq!(id, 5);
        assert_eq!(v.id_or_unk("missing"), UNK_ID);

        let lines = v.to_lines();
        let back = Vocabulary::from_lines(&lines).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn embedding_table_deterministic_and_bounded() {
        let mut v = Vocabulary::new();
        v.add("alpha");
        v.add("beta");
        let t1 = EmbeddingTable::build(&v, 7, 8).unwrap();
        let t2 = EmbeddingTable::build(&v, 7, 8).unwrap();
        assert_eq!(t1, t2);
        let t3 = EmbeddingTable::build(&v, 8, 8).unwrap();
        assert_ne!(t1, t3);
        let bound = 0.5 / 8.0;
        for id in 0..v.len() {
            for &x in t1.row(id) {
                assert!(x.abs() <= bound);
                assert!(x.is_finite());
            }
        }
        assert!(t1.row(PAD_ID).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedding_rows_independent_of_vocab_order() {
        let mut a = Vocabulary::new();
        a.add("x");
        a.add("y");
        let mut b = Vocabulary::new();
        b.add("y");
        b.add("x");
        let ta = EmbeddingTable::build(&a, 3, 4).unwrap();
        let tb = EmbeddingTable::build(&b, 3, 4).unwrap();
        assert_eq!(ta.row(a.id("x").unwrap()), tb.row(b.id("x").unwrap()));
        assert_eq!(ta.row(a.id("y").unwrap()), tb.row(b.id("y").unwrap()));
    }

    #[test]
    fn embed_mean_cases() {
        let mut v = Vocabulary::new();
        v.add("a");
        v.add("b");
        let space = TextSpace::build(v, 1, 4).unwrap();
        let one = tokenize("a");
        let m = embed_mean(&one, &space).unwrap();
        assert_eq!(m.as_slice(), space.embed(&one[0]));
        assert!(embed_mean(&[], &space).is_err());

        // permutation invariance over the token multiset
        let ab = tokenize("a b");
        let ba = tokenize("b a");
        assert_eq!(embed_mean(&ab, &space).unwrap(), embed_mean(&ba, &space).unwrap());
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap()).abs() < 1e-12);
        let c = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - 0.70711).abs() < 1e-5);
        let u = [0.3, -0.2, 0.9];
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_positive_scale_invariance() {
        let u = [0.4, -1.2, 3.0];
        let v = [2.0, 0.5, -0.7];
        let su: Vec<f64> = u.iter().map(|x| x * 3.7).collect();
        let sv: Vec<f64> = v.iter().map(|x| x * 0.02).collect();
        let a = cosine(&u, &v).unwrap();
        let b = cosine(&su, &sv).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
