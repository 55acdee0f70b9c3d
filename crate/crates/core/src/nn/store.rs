use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

/// Non-trainable state (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer(Arc<Mutex<Tensor>>);

impl Buffer {
    pub fn new(t: Tensor) -> Self {
        Buffer(Arc::new(Mutex::new(t)))
    }

    pub fn get(&self) -> Tensor {
        self.0.lock().expect("buffer lock poisoned").clone()
    }

    pub fn set(&self, t: Tensor) {
        *self.0.lock().expect("buffer lock poisoned") = t;
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// He initialisation: `N(0, 2 / fan_in)`.
    Kaiming { fan_in: usize },
}

/// Named trainable parameters and buffers, kept in sorted name order so
/// optimiser state and checkpoints iterate deterministically.
#[derive(Debug)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Buffer>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            buffers: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn root(&mut self) -> Scope<'_> {
        Scope {
            store: self,
            prefix: String::new(),
        }
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn buffers(&self) -> &BTreeMap<String, Buffer> {
        &self.buffers
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Draws a tensor from the store's initialisation stream.
    pub fn sample(&mut self, dims: &[usize], init: Init) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => normal_vec(&mut self.rng, n, std),
            Init::Kaiming { fan_in } => {
                normal_vec(&mut self.rng, n, (2.0 / fan_in.max(1) as f64).sqrt())
            }
        };
        Ok(Tensor::from_vec(values, dims, &self.device)?.to_dtype(self.dtype)?)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// A name prefix into a [`ParamStore`].
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    pub fn sub(&mut self, name: &str) -> Scope<'_> {
        Scope {
            prefix: self.path(name),
            store: self.store,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn var(&mut self, name: &str, dims: &[usize], init: Init) -> Result<Var> {
        let path = self.path(name);
        assert!(!self.store.vars.contains_key(&path), "duplicate parameter {path}");
        let var = Var::from_tensor(&self.store.sample(dims, init)?)?;
        self.store.vars.insert(path, var.clone());
        Ok(var)
    }

    pub fn buffer(&mut self, name: &str, dims: &[usize], init: Init) -> Result<Buffer> {
        let path = self.path(name);
        assert!(!self.store.buffers.contains_key(&path), "duplicate buffer {path}");
        let buf = Buffer::new(self.store.sample(dims, init)?);
        self.store.buffers.insert(path, buf.clone());
        Ok(buf)
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }

    pub fn device(&self) -> Device {
        self.store.device.clone()
    }

    /// Tensor from the init stream that is not registered as a parameter.
    pub fn sample(&mut self, dims: &[usize], init: Init) -> Result<Tensor> {
        self.store.sample(dims, init)
    }
}
