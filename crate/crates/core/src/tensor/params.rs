use std::collections::HashMap;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Initialisation scheme for a freshly registered parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `(-scale, scale)`.
    Uniform(f64),
    Zeros,
}

/// Matrix init range.
pub const DEFAULT_INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Tensor,
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `name` or returns the existing id. An existing parameter
    /// must have the requested shape.
    pub fn get_or_init<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId> {
        if let Some(&id) = self.index.get(name) {
            let have = self.entries[id.0].value.shape();
            if have != shape {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {have:?}, model expects {shape:?}"
                )));
            }
            return Ok(id);
        }
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(s) => (0..n).map(|_| rng.gen_range(-s..s)).collect(),
        };
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    /// Matrices get the default uniform range, vectors start at zero.
    pub fn get_or_init_default<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        rng: &mut R,
    ) -> Result<ParamId> {
        let init = if shape.len() >= 2 {
            Init::Uniform(DEFAULT_INIT_SCALE)
        } else {
            Init::Zeros
        };
        self.get_or_init(name, shape, init, rng)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            value,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
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

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    /// Copies every tensor of `other` whose name exists here. Shapes must
    /// agree. Returns how many parameters were copied.
    pub fn load_matching(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for (name, t) in other.iter() {
            if let Some(id) = self.id(name) {
                let dst = self.get_mut(id);
                if dst.shape() != t.shape() {
                    return Err(Error::Config(format!(
                        "checkpoint parameter {name} has shape {:?}, model expects {:?}",
                        t.shape(),
                        dst.shape()
                    )));
                }
                dst.data_mut().copy_from_slice(t.data());
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Sub-store of parameters whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            if name.starts_with(prefix) {
                out.insert(name, t.clone()).expect("names are unique");
            }
        }
        out
    }

    /// Adds every parameter of `other`; names must not collide.
    pub fn extend_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in other.iter() {
            self.insert(name, t.clone())?;
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_init_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new();
        let w = ps.get_or_init_default("w", &[20, 30], &mut rng).unwrap();
        let b = ps.get_or_init_default("b", &[20], &mut rng).unwrap();
        assert!(ps.get(w).data().iter().all(|v| v.abs() < 0.08));
        assert!(ps.get(w).data().iter().any(|v| *v != 0.0));
        assert!(ps.get(b).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reregistering_checks_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new();
        let a = ps.get_or_init_default("w", &[2, 3], &mut rng).unwrap();
        let b = ps.get_or_init_default("w", &[2, 3], &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(ps.get_or_init_default("w", &[3, 2], &mut rng).is_err());
    }
}
