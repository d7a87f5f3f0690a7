use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::path::Path;

use super::{Graph, NnError, Tensor};

const MAGIC: &[u8; 4] = b"GRWT";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub frozen: bool,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Param {
    /// Adam updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }
}

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(0);

fn next_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Named parameters in insertion order, with Adam state.
#[derive(Debug)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
    // distinguishes stores recorded on one graph; clones get a fresh id
    id: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
            id: next_id(),
        }
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            params: self.params.clone(),
            by_name: self.by_name.clone(),
            id: next_id(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        let n = value.data.len();
        let p = Param {
            name: name.clone(),
            value,
            grad: vec![0.0; n],
            frozen: false,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        };
        match self.by_name.get(&name) {
            Some(&i) => self.params[i] = p,
            None => {
                self.by_name.insert(name, self.params.len());
                self.params.push(p);
            }
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index(name).map(|i| &mut self.params[i])
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Freezes every parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        self.params
            .iter_mut()
            .filter(|p| p.name.starts_with(prefix))
            .for_each(|p| p.frozen = true);
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| !p.frozen).map(|p| p.value.data.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.iter_mut().for_each(|g| *g = 0.0));
    }

    /// Adds `scale ·` the graph's parameter gradients into the stored gradients.
    pub fn accumulate(&mut self, graph: &Graph, scale: f64) {
        for (i, var) in graph.param_nodes(self.id) {
            let p = &mut self.params[i];
            if p.frozen {
                continue;
            }
            if let Some(g) = graph.grad(var) {
                p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(DTYPE_F64);
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(p.value.rows as u32).to_le_bytes());
            out.extend_from_slice(&(p.value.cols as u32).to_le_bytes());
            for v in &p.value.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a weight file into a fresh store (no optimizer state, nothing frozen).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8], NnError> {
            if r.len() < n {
                return Err(NnError::BadWeights("truncated".into()));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(NnError::BadWeights("bad magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(NnError::BadWeights(format!("unsupported version {version}")));
        }
        let count = u32_at(take(4)?) as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| NnError::BadWeights("name is not UTF-8".into()))?;
            let dtype = take(1)?[0];
            let rank = u32_at(take(4)?) as usize;
            let dims: Vec<usize> = (0..rank).map(|_| take(4).map(|b| u32_at(b) as usize)).collect::<Result<_, _>>()?;
            let size: usize = dims.iter().product();
            let data: Vec<f64> = match dtype {
                DTYPE_F64 => take(size * 8)?.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                0 => take(size * 4)?
                    .chunks(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                other => return Err(NnError::BadWeights(format!("unknown dtype {other}"))),
            };
            let (rows, cols) = match dims[..] {
                [] => (1, 1),
                [c] => (1, c),
                [r, c] => (r, c),
                _ => return Err(NnError::BadWeights(format!("rank {rank} tensor '{name}'"))),
            };
            store.insert(name, Tensor::from_vec(rows, cols, data)?);
        }
        if !r.is_empty() {
            return Err(NnError::BadWeights("trailing bytes".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Copies values for every name present in both stores, renaming through `map`.
    /// Returns the number of parameters copied; shapes must agree.
    pub fn copy_from(&mut self, other: &ParamStore, map: impl Fn(&str) -> Option<String>) -> Result<usize, NnError> {
        let mut copied = 0;
        for p in &other.params {
            let Some(target) = map(&p.name) else { continue };
            let dst = self.get_mut(&target).ok_or_else(|| NnError::UnknownParam(target.clone()))?;
            if dst.value.shape() != p.value.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "copy_from",
                    detail: format!("{target}: {:?} vs {:?}", dst.value.shape(), p.value.shape()),
                });
            }
            dst.value = p.value.clone();
            copied += 1;
        }
        Ok(copied)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam on every trainable parameter. Frozen parameters keep
/// their values and optimizer state.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    for p in store.params.iter_mut().filter(|p| !p.frozen) {
        p.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(p.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(p.step as i32);
        for (((w, &g), m), v) in p.value.data.iter_mut().zip(&p.grad).zip(&mut p.m).zip(&mut p.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *w -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

pub fn exp_lr_decay(base_lr: f64, gamma: f64, epoch: usize) -> f64 {
    base_lr * gamma.powi(epoch as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::from_vec(2, 2, vec![1.0, -2.0, 3.5, 1e-300]).unwrap());
        s.insert("b", Tensor::from_vec(1, 3, vec![0.1, 0.2, f64::MIN_POSITIVE]).unwrap());
        s
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = store();
        s.params_mut().iter_mut().for_each(|p| p.grad.iter_mut().for_each(|g| *g = 1.0));
        let before = s.get("a").unwrap().value.clone();
        adam_step(&mut s, &AdamConfig::default());
        for (a, b) in s.get("a").unwrap().value.data.iter().zip(&before.data) {
            assert!(((b - a) / 3e-4 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_and_frozen_do_not_move() {
        let mut s = store();
        s.freeze_prefix("b");
        s.get_mut("b").unwrap().grad = vec![5.0; 3];
        let before = s.clone();
        adam_step(&mut s, &AdamConfig::default());
        for (p, q) in s.params().iter().zip(before.params()) {
            assert_eq!(p.value, q.value);
        }
        assert_eq!(s.get("b").unwrap().step(), 0);
    }

    #[test]
    fn weights_roundtrip_bit_exact() {
        let s = store();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"GRWT");
        let back = ParamStore::from_bytes(&bytes).unwrap();
        for (p, q) in s.params().iter().zip(back.params()) {
            assert_eq!(p.name, q.name);
            assert_eq!(p.value.shape(), q.value.shape());
            let bits = |t: &Tensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p.value), bits(&q.value));
        }
        assert_eq!(back.to_bytes(), bytes);
        assert!(ParamStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn lr_decay() {
        assert_eq!(exp_lr_decay(3e-4, 0.9977, 0), 3e-4);
        let r = exp_lr_decay(3e-4, 0.9977, 1000) / 3e-4;
        assert!((r - 0.9977f64.powi(1000)).abs() < 1e-15 && (r - 0.1003).abs() < 1e-3);
        assert_eq!(exp_lr_decay(1e-3, 1.0, 500), 1e-3);
    }
}
