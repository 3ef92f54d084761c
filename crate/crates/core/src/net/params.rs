use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tape::Gradients;
use super::tensor::Tensor;
use super::NetError;

/// 64-bit FNV-1a hash, used to derive per-name seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(name.as_bytes()).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Rounds to the nearest `f32`, so stored parameters survive a 32-bit
/// checkpoint unchanged.
pub(crate) fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable arrays with matching gradient buffers.
///
/// Each array is initialized from its own stream seeded by the store seed
/// and the array name, so registration order does not affect values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    seed: u64,
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, NetError> {
        if self.index.contains_key(name) {
            return Err(NetError::DuplicateParameter(name.to_string()));
        }
        if value.rows() == 0 || value.cols() == 0 {
            return Err(NetError::Config(format!(
                "parameter '{name}' has zero width"
            )));
        }
        let id = ParamId(self.names.len());
        self.grads.push(Tensor::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
    ) -> Result<ParamId, NetError> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = rng_for(self.seed, name);
        let data = (0..rows * cols)
            .map(|_| to_f32_grid(rng.random_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId, NetError> {
        self.insert(name, Tensor::zeros(rows, cols))
    }

    pub fn add_normal(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        std: f64,
    ) -> Result<ParamId, NetError> {
        let mut rng = rng_for(self.seed, name);
        let dist = Normal::new(0.0, std).map_err(|e| NetError::Config(e.to_string()))?;
        let data = (0..rows * cols)
            .map(|_| to_f32_grid(dist.sample(&mut rng)))
            .collect();
        self.insert(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|t| t.data().len()).sum()
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NetError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NetError::UnknownParameter(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Direct write access. Callers that need checkpoint-exact values
    /// should keep entries `f32`-representable.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Adds `grads` into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in &grads.by_param {
            self.grads[id.0].add_assign(g);
        }
    }

    /// Replaces every value with the named tensor of `entries`. Names and
    /// shapes must match exactly.
    pub fn load_values(&mut self, entries: &[(String, Tensor)]) -> Result<(), NetError> {
        if entries.len() != self.len() {
            return Err(NetError::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                entries.len(),
                self.len()
            )));
        }
        for (name, t) in entries {
            let id = self.id(name)?;
            if self.values[id.0].shape() != t.shape() {
                return Err(NetError::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, model expects {:?}",
                    t.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0] = t.clone();
        }
        Ok(())
    }

    /// `(name, value)` pairs in registration order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Per-outfit learnable latent arrays, one row per template vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GarmentCode {
    rows: usize,
    width: usize,
    std: f64,
    entries: Vec<(String, ParamId)>,
}

impl GarmentCode {
    pub const DEFAULT_WIDTH: usize = 64;
    pub const DEFAULT_STD: f64 = 0.01;

    pub fn new(rows: usize, width: usize, std: f64) -> Self {
        Self {
            rows,
            width,
            std,
            entries: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn param_name(outfit: &str) -> String {
        format!("garment_code/{outfit}")
    }

    pub fn get(&self, outfit: &str) -> Option<ParamId> {
        self.entries.iter().find(|(o, _)| o == outfit).map(|e| e.1)
    }

    /// Returns the entry for `outfit`, creating it on first sight.
    pub fn ensure(
        &mut self,
        store: &mut ParameterStore,
        outfit: &str,
    ) -> Result<ParamId, NetError> {
        if let Some(id) = self.get(outfit) {
            return Ok(id);
        }
        let id = store.add_normal(&Self::param_name(outfit), self.rows, self.width, self.std)?;
        self.entries.push((outfit.to_string(), id));
        Ok(id)
    }

    /// Outfit ids in creation order.
    pub fn outfits(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }
}
