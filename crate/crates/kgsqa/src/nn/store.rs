//! Named parameter tensors with per-tensor trainable flags, plus the
//! gradient accumulator that mirrors the store's layout.

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Entry {
    tensor: Tensor,
    trainable: bool,
}

/// Uniform draw in [-bound, bound) from a ChaCha stream. Raw u64 bits are
/// mapped by hand so the values depend only on the stream.
pub fn uniform_in(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    use rand::RngCore;
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (2.0 * u - 1.0) * bound
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: IndexMap<String, usize>,
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<ParamId> {
        if self.names.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        self.names.insert(name.to_string(), id.0);
        self.entries.push(Entry { tensor, trainable });
        Ok(id)
    }

    /// Trainable tensor with entries uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn add_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        let mut t = Tensor::zeros(rows, cols);
        for v in t.as_mut_slice() {
            *v = uniform_in(rng, bound);
        }
        self.add(name, t, true)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(rows, cols), true)
    }

    /// Fused LSTM gate bias [i f g o] with the forget block at 1.0.
    pub fn add_lstm_bias(&mut self, name: &str, hidden: usize) -> Result<ParamId> {
        let mut t = Tensor::zeros(4 * hidden, 1);
        for i in hidden..2 * hidden {
            t.as_mut_slice()[i] = 1.0;
        }
        self.add(name, t, true)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.names.get_index(id.0).unwrap().0
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Tensors in creation order as (name, tensor, trainable).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.names
            .iter()
            .map(|(n, &i)| (n.as_str(), &self.entries[i].tensor, self.entries[i].trainable))
    }

    /// Add `delta` to one flat coordinate (gradient-check perturbations).
    pub fn nudge(&mut self, id: ParamId, coord: usize, delta: f64) {
        self.entries[id.0].tensor.as_mut_slice()[coord] += delta;
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (name, t, _) in self.iter() {
            if !t.all_finite() {
                return Err(Error::NonFinite(format!("parameter `{name}`")));
            }
        }
        Ok(())
    }
}

/// Per-parameter gradient buffers aligned with a [`ParamStore`]. Slots are
/// allocated lazily on first accumulation.
#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn new(store: &ParamStore) -> Grads {
        Grads {
            slots: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id.0].as_ref()
    }

    pub fn slot_mut(&mut self, id: ParamId, rows: usize, cols: usize) -> &mut Tensor {
        self.slots[id.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
    }

    /// Scale every accumulated gradient by `c` (e.g. 1/batch for means).
    pub fn scale(&mut self, c: f64) {
        for slot in self.slots.iter_mut().flatten() {
            for v in slot.as_mut_slice() {
                *v *= c;
            }
        }
    }

    /// Merge another gradient set into this one.
    pub fn add_from(&mut self, other: &Grads) {
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => {
                        for (a, b) in m.as_mut_slice().iter_mut().zip(t.as_slice()) {
                            *a += b;
                        }
                    }
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }
}
