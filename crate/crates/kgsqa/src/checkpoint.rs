//! Self-describing text checkpoint container: meta key/values, named
//! string lists (vocabularies), and named tensors with shapes and
//! trainable flags. Values are stored as raw f64 bits, so a save/load
//! cycle is bit-exact.

use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::nn::{ParamStore, Tensor};

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub lists: Vec<(String, Vec<String>)>,
    pub tensors: Vec<(String, Tensor, bool)>,
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key `{key}`")))
    }

    pub fn parse_meta<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require_meta(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad value for meta key `{key}`")))
    }

    pub fn add_list(&mut self, name: &str, items: Vec<String>) {
        self.lists.push((name.to_string(), items));
    }

    pub fn list(&self, name: &str) -> Option<&[String]> {
        self.lists
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn require_list(&self, name: &str) -> Result<&[String]> {
        self.list(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing list `{name}`")))
    }

    /// Capture every tensor of a store, in creation order.
    pub fn add_store(&mut self, store: &ParamStore) {
        for (name, tensor, trainable) in store.iter() {
            self.tensors
                .push((name.to_string(), tensor.clone(), trainable));
        }
    }

    /// Overwrite the values of an already-wired store with the checkpoint
    /// tensors. Tensor names and shapes must match exactly.
    pub fn restore_store(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, tensor, _) in &self.tensors {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{name}`")))?;
            if store.get(id).shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = tensor.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("KGSQA-CKPT v1\n");
        out.push_str(&format!("meta {}\n", self.meta.len()));
        for (k, v) in &self.meta {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        for (name, items) in &self.lists {
            out.push_str(&format!("list {name} {}\n", items.len()));
            for item in items {
                out.push_str(item);
                out.push('\n');
            }
        }
        for (name, tensor, trainable) in &self.tensors {
            out.push_str(&format!(
                "tensor {name} {} {} {}\n",
                tensor.rows(),
                tensor.cols(),
                u8::from(*trainable)
            ));
            for r in 0..tensor.rows() {
                let row: Vec<String> = tensor
                    .row(r)
                    .iter()
                    .map(|v| format!("{:016x}", v.to_bits()))
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        std::fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut lines = text.lines();
        let corrupt = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        if lines.next() != Some("KGSQA-CKPT v1") {
            return Err(corrupt("bad header"));
        }
        let meta_line = lines.next().ok_or_else(|| corrupt("missing meta count"))?;
        let n_meta: usize = meta_line
            .strip_prefix("meta ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad meta count"))?;
        let mut ckpt = Checkpoint::new();
        for _ in 0..n_meta {
            let line = lines.next().ok_or_else(|| corrupt("truncated meta"))?;
            let (k, v) = line.split_once('\t').ok_or_else(|| corrupt("bad meta line"))?;
            ckpt.meta.push((k.to_string(), v.to_string()));
        }
        while let Some(line) = lines.next() {
            if let Some(rest) = line.strip_prefix("list ") {
                let (name, count) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| corrupt("bad list header"))?;
                let count: usize = count.parse().map_err(|_| corrupt("bad list count"))?;
                let mut items = Vec::with_capacity(count);
                for _ in 0..count {
                    items.push(
                        lines
                            .next()
                            .ok_or_else(|| corrupt("truncated list"))?
                            .to_string(),
                    );
                }
                ckpt.lists.push((name.to_string(), items));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 4 {
                    return Err(corrupt("bad tensor header"));
                }
                let name = parts[0].to_string();
                let rows: usize = parts[1].parse().map_err(|_| corrupt("bad tensor rows"))?;
                let cols: usize = parts[2].parse().map_err(|_| corrupt("bad tensor cols"))?;
                let trainable = parts[3] == "1";
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let line = lines.next().ok_or_else(|| corrupt("truncated tensor"))?;
                    for bits in line.split(' ') {
                        let bits =
                            u64::from_str_radix(bits, 16).map_err(|_| corrupt("bad value bits"))?;
                        data.push(f64::from_bits(bits));
                    }
                }
                let tensor = Tensor::from_vec(rows, cols, data)
                    .map_err(|e| corrupt(&format!("tensor `{name}`: {e}")))?;
                ckpt.tensors.push((name, tensor, trainable));
            } else if line.is_empty() {
                continue;
            } else {
                return Err(corrupt("unexpected line"));
            }
        }
        Ok(ckpt)
    }
}
