//! Downstream node classification on a refined adjacency.
//!
//! A three-layer GCN maps raw node features through the (possibly relaxed)
//! refined adjacency to class logits. Because the adjacency can itself be a
//! differentiable tape value, the classification loss back-propagates through
//! the edge probabilities into the encoder for joint training.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diff::{DiffError, ParamStore, Tape, Value};
use crate::matrix::Matrix;
use crate::seeds;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("node {0} in mask has no label")]
    UnlabeledNode(u32),
    #[error("node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: u32, nodes: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Names and shapes of the classifier's three GCN layers `D -> W -> W -> C`.
#[derive(Clone, Debug)]
pub struct ClassifierParams {
    pub input: usize,
    pub width: usize,
    pub classes: usize,
    prefix: String,
}

/// Tape handles for one classifier forward pass.
pub struct ClassifierHandles {
    w1: Value,
    w2: Value,
    w3: Value,
}

impl ClassifierParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        width: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self, DiffError> {
        let params = ClassifierParams { input, width, classes, prefix: String::from(prefix) };
        let rng_for = |tag: u64| seeds::rng(seeds::child(seed, tag));
        store.insert(&params.name("w1"), Matrix::glorot(input, width, &mut rng_for(0)))?;
        store.insert(&params.name("w2"), Matrix::glorot(width, width, &mut rng_for(1)))?;
        store.insert(&params.name("w3"), Matrix::glorot(width, classes, &mut rng_for(2)))?;
        Ok(params)
    }

    /// Describe parameters already present in a store.
    pub fn attach(prefix: &str, input: usize, width: usize, classes: usize) -> Self {
        ClassifierParams { input, width, classes, prefix: String::from(prefix) }
    }

    pub fn name(&self, suffix: &str) -> String {
        format!("{}.{}", self.prefix, suffix)
    }

    pub fn param_names(&self) -> Vec<String> {
        ["w1", "w2", "w3"].iter().map(|s| self.name(s)).collect()
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<ClassifierHandles, DiffError> {
        Ok(ClassifierHandles {
            w1: tape.param(store, &self.name("w1"))?,
            w2: tape.param(store, &self.name("w2"))?,
            w3: tape.param(store, &self.name("w3"))?,
        })
    }

    pub fn bind_frozen(&self, tape: &mut Tape, store: &ParamStore) -> Result<ClassifierHandles, DiffError> {
        let get = |store: &ParamStore, name: &str| -> Result<Matrix, DiffError> {
            store.get(name).cloned().ok_or_else(|| DiffError::UnknownParam(String::from(name)))
        };
        Ok(ClassifierHandles {
            w1: tape.constant(get(store, &self.name("w1"))?)?,
            w2: tape.constant(get(store, &self.name("w2"))?)?,
            w3: tape.constant(get(store, &self.name("w3"))?)?,
        })
    }
}

/// Logits and row-softmax probabilities of one classifier forward pass.
pub struct ClassifierOutput {
    pub logits: Value,
    pub probs: Value,
}

/// Three GCN layers over a weighted adjacency.
///
/// `a_tilde` is the raw refined adjacency (zero diagonal, relaxed weights
/// allowed); self-loop symmetric normalization is applied here so callers
/// feed the same matrix they would export.
pub fn classify(
    tape: &mut Tape,
    h: &ClassifierHandles,
    a_tilde: Value,
    x: Value,
) -> Result<ClassifierOutput, DiffError> {
    let adj = tape.sym_normalize(a_tilde)?;
    let xw = tape.matmul(x, h.w1)?;
    let l1 = tape.matmul(adj, xw)?;
    let l1 = tape.relu(l1)?;
    let hw = tape.matmul(l1, h.w2)?;
    let l2 = tape.matmul(adj, hw)?;
    let l2 = tape.relu(l2)?;
    let hw = tape.matmul(l2, h.w3)?;
    let logits = tape.matmul(adj, hw)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(ClassifierOutput { logits, probs })
}

/// Validate a mask against labels, returning usable `(index, label)` pairs.
fn masked_labels(
    labels: &[Option<u32>],
    mask: &[u32],
    classes: usize,
) -> Result<Vec<(usize, u32)>, ClassifierError> {
    if mask.is_empty() {
        return Err(ClassifierError::EmptyMask);
    }
    mask.iter()
        .map(|&n| {
            let idx = n as usize;
            if idx >= labels.len() {
                return Err(ClassifierError::NodeOutOfRange { node: n, nodes: labels.len() });
            }
            let label = labels[idx].ok_or(ClassifierError::UnlabeledNode(n))?;
            if label as usize >= classes {
                return Err(ClassifierError::LabelOutOfRange { label, classes });
            }
            Ok((idx, label))
        })
        .collect()
}

/// Mean cross-entropy `-log probs[node, label]` over the masked nodes, with
/// the probability clamped at 1e-12 before the log.
pub fn ce_loss(
    tape: &mut Tape,
    probs: Value,
    labels: &[Option<u32>],
    mask: &[u32],
) -> Result<Value, ClassifierError> {
    let classes = tape.value(probs).cols();
    let pairs = masked_labels(labels, mask, classes)?;
    let indices: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let rows = tape.gather_rows(probs, &indices)?;
    let onehot = Matrix::from_fn(pairs.len(), classes, |r, c| {
        if pairs[r].1 as usize == c {
            1.0
        } else {
            0.0
        }
    });
    let onehot = tape.constant(onehot)?;
    let picked = tape.mul_elem(rows, onehot)?;
    let p = tape.sum_rows(picked)?;
    let p = tape.clamp(p, 1e-12, 1.0)?;
    let logp = tape.log(p)?;
    let mean = tape.mean(logp)?;
    Ok(tape.neg(mean)?)
}

/// Fraction of masked nodes whose argmax class matches the label; argmax
/// ties resolve to the lowest class index.
pub fn accuracy(
    probs: &Matrix,
    labels: &[Option<u32>],
    mask: &[u32],
) -> Result<f64, ClassifierError> {
    let pairs = masked_labels(labels, mask, probs.cols())?;
    let correct = pairs
        .iter()
        .filter(|&&(idx, label)| argmax(probs.row(idx)) == label as usize)
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Index of the largest entry, first occurrence winning ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
