//! Named parameter tensors and their flat-vector serialization.
//!
//! Checkpoints store one flat `f64` vector plus a named-shape index; models
//! rebuild by visiting their parameters in a fixed construction order.
//! Batch-norm running statistics travel as non-trainable entries so a
//! reloaded checkpoint reproduces inference exactly.

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::rng::sample_standard_normal;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        Param {
            trainable: false,
            ..Param::new(name, value)
        }
    }

    /// Gaussian init, the convention for conv/linear weights here.
    pub fn randn(
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| std * sample_standard_normal(rng)).collect();
        Param::new(name, ArrayD::from_shape_vec(IxDyn(shape), data).unwrap())
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Param::new(name, ArrayD::zeros(IxDyn(shape)))
    }

    pub fn full(name: impl Into<String>, shape: &[usize], fill: f64) -> Self {
        Param::new(name, ArrayD::from_elem(IxDyn(shape), fill))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Name + shape entry of the checkpoint index; data offsets follow from the
/// cumulative shapes.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorMeta {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn zero_grads(params: &mut [&mut Param]) {
    for p in params.iter_mut() {
        p.zero_grad();
    }
}

/// Flattens all parameters (trainable and buffers) into one vector plus its
/// named-shape index.
pub fn flatten(params: &[&Param]) -> (Vec<f64>, Vec<TensorMeta>) {
    let mut data = Vec::new();
    let mut index = Vec::new();
    for p in params {
        index.push(TensorMeta {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
        });
        data.extend(p.value.iter().copied());
    }
    (data, index)
}

/// Restores parameters from a flat vector; the index must match the model's
/// parameter order, names, and shapes exactly.
pub fn load_exact(params: &mut [&mut Param], index: &[TensorMeta], data: &[f64]) -> Result<()> {
    if params.len() != index.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count mismatch: model has {}, checkpoint has {}",
            params.len(),
            index.len()
        )));
    }
    let mut offset = 0usize;
    for (p, meta) in params.iter_mut().zip(index) {
        if p.name != meta.name || p.value.shape() != meta.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor mismatch: model `{}` {:?} vs checkpoint `{}` {:?}",
                p.name,
                p.value.shape(),
                meta.name,
                meta.shape
            )));
        }
        let n = meta.len();
        if offset + n > data.len() {
            return Err(Error::Checkpoint("parameter data truncated".into()));
        }
        p.value
            .iter_mut()
            .zip(&data[offset..offset + n])
            .for_each(|(dst, &src)| *dst = src);
        offset += n;
    }
    if offset != data.len() {
        return Err(Error::Checkpoint(format!(
            "parameter data length {} does not match index total {offset}",
            data.len()
        )));
    }
    Ok(())
}

/// Partial load: copies every checkpoint tensor whose name and shape match a
/// model parameter, leaving the rest at their fresh initialization.
/// Returns (loaded names, skipped checkpoint names).
pub fn load_matching(
    params: &mut [&mut Param],
    index: &[TensorMeta],
    data: &[f64],
) -> (Vec<String>, Vec<String>) {
    let mut loaded = Vec::new();
    let mut skipped = Vec::new();
    let mut offset = 0usize;
    for meta in index {
        let n = meta.len();
        let slice = &data[offset..offset + n];
        offset += n;
        match params
            .iter_mut()
            .find(|p| p.name == meta.name && p.value.shape() == meta.shape.as_slice())
        {
            Some(p) => {
                p.value
                    .iter_mut()
                    .zip(slice)
                    .for_each(|(dst, &src)| *dst = src);
                loaded.push(meta.name.clone());
            }
            None => skipped.push(meta.name.clone()),
        }
    }
    (loaded, skipped)
}

/// Values of trainable parameters only, in visit order.
pub fn trainable_values(params: &[&Param]) -> Vec<f64> {
    params
        .iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.value.iter().copied())
        .collect()
}

/// Gradients of trainable parameters only, in visit order.
pub fn trainable_grads(params: &[&Param]) -> Vec<f64> {
    params
        .iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.grad.iter().copied())
        .collect()
}

/// Overwrites one scalar of the flattened trainable vector; returns the old
/// value. Used by the finite-difference gradient checks.
pub fn set_trainable_scalar(params: &mut [&mut Param], flat_index: usize, value: f64) -> f64 {
    let mut base = 0usize;
    for p in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let n = p.value.len();
        if flat_index < base + n {
            let slot = p
                .value
                .as_slice_mut()
                .expect("parameters are contiguous")
                .get_mut(flat_index - base)
                .unwrap();
            let old = *slot;
            *slot = value;
            return old;
        }
        base += n;
    }
    panic!("flat index {flat_index} out of range ({base} trainable scalars)");
}

pub fn trainable_len(params: &[&Param]) -> usize {
    params
        .iter()
        .filter(|p| p.trainable)
        .map(|p| p.value.len())
        .sum()
}
