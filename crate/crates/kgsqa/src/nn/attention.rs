//! Additive (concat) attention: scores v·tanh(W_q·q + W_k·k_i + b),
//! softmax weights, weighted-sum context.

use rand_chacha::ChaCha8Rng;

use super::store::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdditiveAttention {
    pub w_query: ParamId,
    pub w_key: ParamId,
    pub v: ParamId,
    pub b: ParamId,
}

impl AdditiveAttention {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        query_dim: usize,
        key_dim: usize,
        attn_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<AdditiveAttention> {
        Ok(AdditiveAttention {
            w_query: store.add_uniform(&format!("{prefix}.w_query"), attn_dim, query_dim, rng)?,
            w_key: store.add_uniform(&format!("{prefix}.w_key"), attn_dim, key_dim, rng)?,
            v: store.add_uniform(&format!("{prefix}.v"), 1, attn_dim, rng)?,
            b: store.add_zeros(&format!("{prefix}.b"), attn_dim, 1)?,
        })
    }

    /// Raw scores for each key against the query (pre-softmax scalars).
    pub fn scores(&self, tape: &mut Tape, query: Var, keys: &[Var]) -> Result<Vec<Var>> {
        if keys.is_empty() {
            return Err(Error::EmptyInput("attention over zero keys".into()));
        }
        let q_proj = tape.matvec(self.w_query, query)?;
        let mut out = Vec::with_capacity(keys.len());
        for &k in keys {
            let k_proj = tape.matvec(self.w_key, k)?;
            let sum = tape.add(q_proj, k_proj)?;
            let pre = tape.add_bias(sum, self.b)?;
            let act = tape.tanh(pre);
            let score_vec = tape.matvec(self.v, act)?;
            out.push(tape.pick(score_vec, 0)?);
        }
        Ok(out)
    }

    /// Returns (context, weights). Weights are a softmax over the keys and
    /// the context is the weight-averaged value vector.
    pub fn apply(
        &self,
        tape: &mut Tape,
        query: Var,
        keys: &[Var],
        values: &[Var],
    ) -> Result<(Var, Var)> {
        if keys.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} keys for {} values",
                keys.len(),
                values.len()
            )));
        }
        let scores = self.scores(tape, query, keys)?;
        let stacked = tape.stack(&scores)?;
        let weights = tape.softmax(stacked);
        let context = tape.weighted_sum(weights, values)?;
        Ok((context, weights))
    }
}
