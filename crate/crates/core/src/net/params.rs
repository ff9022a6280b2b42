use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Cursor, Write as _};
use std::path::{Path, PathBuf};

use crate::autograd::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(value);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn size(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor on `g` as a trainable leaf.
    pub fn bind<'a>(&'a self, g: &mut Graph) -> Bound<'a> {
        let vars = self.tensors.iter().map(|t| g.param(t.clone())).collect();
        Bound { store: self, vars }
    }

    /// Writes concatenated PRLT records to `path` and a `name shape offset`
    /// manifest next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut data = Vec::new();
        let mut manifest = String::new();
        for (name, t) in self.iter() {
            let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(manifest, "{name} {} {}", shape.join("x"), data.len());
            t.write_prlt(&mut data)?;
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&data)?;
        fs::write(manifest_path(path), manifest)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`ParamStore::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let data = fs::read(path)?;
        let manifest = fs::read_to_string(manifest_path(path))?;
        let bad = |detail: String| Error::Format { format: "checkpoint manifest", detail };
        let mut store = ParamStore::new();
        for (n, line) in manifest.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, shape, offset] = fields[..] else {
                return Err(bad(format!("line {}: expected `name shape offset`", n + 1)));
            };
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| bad(format!("line {}: bad shape", n + 1))))
                .collect::<Result<_>>()?;
            let offset: usize = offset.parse().map_err(|_| bad(format!("line {}: bad offset", n + 1)))?;
            let slice = data.get(offset..).ok_or_else(|| bad(format!("line {}: offset past end", n + 1)))?;
            let t = Tensor::read_prlt(Cursor::new(slice))?;
            if t.shape() != shape.as_slice() {
                return Err(bad(format!("{name}: manifest shape {shape:?} vs stored {:?}", t.shape())));
            }
            if store.index.contains_key(name) {
                return Err(bad(format!("duplicate parameter {name}")));
            }
            store.insert(name, t);
        }
        Ok(store)
    }

    /// Replaces every value with the same-named tensor from `other`, which
    /// must hold exactly the same names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        let bad = |detail: String| Error::Format { format: "checkpoint", detail };
        if other.len() != self.len() {
            return Err(bad(format!("{} tensors, model expects {}", other.len(), self.len())));
        }
        for (name, t) in other.iter() {
            let dst = self.get_mut(name).ok_or_else(|| bad(format!("unexpected tensor {name}")))?;
            if dst.shape() != t.shape() {
                return Err(bad(format!("{name}: shape {:?}, model expects {:?}", t.shape(), dst.shape())));
            }
            *dst = t.clone();
        }
        Ok(())
    }
}

pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Parameters recorded on a graph.
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Var {
        match self.store.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("parameter {name} was never initialized"),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients in store order; parameters off the loss path get zeros.
    pub fn collect(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(self.store.tensors())
            .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
            .collect()
    }
}

/// Builds a store with the init scheme used across the network:
/// truncated-normal weights, zero biases, unit layer-norm gains.
pub struct Initializer {
    rng: Rng,
    store: ParamStore,
}

impl Initializer {
    pub fn new(rng: Rng) -> Self {
        Self { rng, store: ParamStore::new() }
    }

    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let w = self.rng.truncated_normal_tensor(&[fan_in, fan_out], INIT_STD);
        self.store.insert(&format!("{name}.w"), w);
        self.store.insert(&format!("{name}.b"), Tensor::zeros(&[fan_out]));
    }

    pub fn linear_no_bias(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let w = self.rng.truncated_normal_tensor(&[fan_in, fan_out], INIT_STD);
        self.store.insert(&format!("{name}.w"), w);
    }

    pub fn conv3x3(&mut self, name: &str, cin: usize, cout: usize) {
        let w = self.rng.truncated_normal_tensor(&[3, 3, cin, cout], INIT_STD);
        self.store.insert(&format!("{name}.w"), w);
        self.store.insert(&format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    pub fn layer_norm(&mut self, name: &str, width: usize) {
        self.store.insert(&format!("{name}.gamma"), Tensor::ones(&[width]));
        self.store.insert(&format!("{name}.beta"), Tensor::zeros(&[width]));
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }
}
