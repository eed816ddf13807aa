//! Edge refinement: from node embeddings to a new adjacency.
//!
//! Node representations from the trained encoder score every candidate edge
//! with `(cos(z_i, z_j) + 1) / 2`. During training the probabilities pass
//! through a relaxed Bernoulli so the downstream classifier loss stays
//! differentiable in the encoder; at evaluation the matrix is thresholded
//! hard at 0.5. Small graphs score all pairs; larger ones restrict to the
//! existing edges plus each node's top-k cosine neighbors.

use alloc::vec::Vec;

use rand::Rng;

use crate::diff::{DiffError, ParamStore, Tape, Value};
use crate::ecl::{encode, EclHandles, EclParams};
use crate::embed::DualAttributeGraph;
use crate::graph::{normalize_adjacency, Graph};
use crate::math;
use crate::matrix::Matrix;
use crate::seeds;

/// Probabilities are clamped into `[PROB_CLAMP_LO, PROB_CLAMP_HI]` before the
/// logit so saturated edges keep finite gradients.
pub const PROB_CLAMP_LO: f64 = 1e-6;
pub const PROB_CLAMP_HI: f64 = 1.0 - 1e-6;

/// Graphs up to this many nodes use a dense all-pairs probability matrix.
pub const DENSE_NODE_LIMIT: usize = 5000;

/// Hard cap on whole-graph encoding, guarding the dense normalized adjacency.
pub const MAX_EMBED_NODES: usize = 50_000;

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error("graph with {0} nodes exceeds the whole-graph embedding limit of 50000")]
    TooLarge(usize),
    #[error("need at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("candidate pair ({0}, {1}) out of range or not src < dst")]
    BadCandidate(u32, u32),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Whether refined edge values are continuous relaxations or hard {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMode {
    Relaxed,
    Hard,
}

/// Edge probabilities over a candidate support.
#[derive(Clone, Debug)]
pub enum EdgeProbs {
    /// Symmetric `V x V` matrix with zero diagonal.
    Dense(Matrix),
    /// Probabilities for an explicit canonical pair list (src < dst, sorted).
    Sparse {
        num_nodes: usize,
        pairs: Vec<(u32, u32)>,
        probs: Vec<f64>,
    },
}

impl EdgeProbs {
    pub fn num_nodes(&self) -> usize {
        match self {
            EdgeProbs::Dense(m) => m.rows(),
            EdgeProbs::Sparse { num_nodes, .. } => *num_nodes,
        }
    }

    /// Probability of an unordered pair; `None` when outside the support.
    pub fn prob(&self, i: u32, j: u32) -> Option<f64> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if a == b {
            return None;
        }
        match self {
            EdgeProbs::Dense(m) => Some(m.get(a as usize, b as usize)),
            EdgeProbs::Sparse { pairs, probs, .. } => {
                pairs.binary_search(&(a, b)).ok().map(|idx| probs[idx])
            }
        }
    }
}

/// Refined adjacency on the same support as the probabilities it came from.
#[derive(Clone, Debug)]
pub enum RefinedAdjacency {
    Dense { values: Matrix, mode: RefineMode },
    Sparse {
        num_nodes: usize,
        pairs: Vec<(u32, u32)>,
        values: Vec<f64>,
        mode: RefineMode,
    },
}

impl RefinedAdjacency {
    pub fn mode(&self) -> RefineMode {
        match self {
            RefinedAdjacency::Dense { mode, .. } => *mode,
            RefinedAdjacency::Sparse { mode, .. } => *mode,
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            RefinedAdjacency::Dense { values, .. } => values.rows(),
            RefinedAdjacency::Sparse { num_nodes, .. } => *num_nodes,
        }
    }

    /// Symmetric weighted adjacency with zero diagonal.
    pub fn to_dense(&self) -> Matrix {
        match self {
            RefinedAdjacency::Dense { values, .. } => values.clone(),
            RefinedAdjacency::Sparse { num_nodes, pairs, values, .. } => {
                let mut m = Matrix::zeros(*num_nodes, *num_nodes);
                for (&(i, j), &w) in pairs.iter().zip(values) {
                    m.set(i as usize, j as usize, w);
                    m.set(j as usize, i as usize, w);
                }
                m
            }
        }
    }

    /// All stored unordered pairs with their weights.
    pub fn edge_weights(&self) -> Vec<(u32, u32, f64)> {
        match self {
            RefinedAdjacency::Dense { values, .. } => {
                let v = values.rows();
                let mut out = Vec::new();
                for i in 0..v {
                    for j in (i + 1)..v {
                        out.push((i as u32, j as u32, values.get(i, j)));
                    }
                }
                out
            }
            RefinedAdjacency::Sparse { pairs, values, .. } => pairs
                .iter()
                .zip(values)
                .map(|(&(i, j), &w)| (i, j, w))
                .collect(),
        }
    }

    /// Canonical edge list of pairs whose value reaches 0.5 (for hard mode
    /// this is exactly the set of 1-entries).
    pub fn hard_edges(&self) -> Vec<(u32, u32)> {
        self.edge_weights()
            .into_iter()
            .filter(|&(_, _, w)| w >= 0.5)
            .map(|(i, j, _)| (i, j))
            .collect()
    }
}

/// Run the encoder once over the whole graph (normalized full adjacency and
/// concatenated dual features), without building a gradient graph.
pub fn full_node_embeddings(
    store: &ParamStore,
    params: &EclParams,
    dual: &DualAttributeGraph<'_>,
) -> Result<Matrix, RefineError> {
    let mut tape = Tape::new();
    let h = params.bind_frozen(&mut tape, store)?;
    let z = full_node_embeddings_on_tape(&mut tape, &h, dual)?;
    Ok(tape.value(z).clone())
}

/// Same as [`full_node_embeddings`] but on a caller-provided tape, so it can
/// participate in end-to-end training gradients.
pub fn full_node_embeddings_on_tape(
    tape: &mut Tape,
    h: &EclHandles,
    dual: &DualAttributeGraph<'_>,
) -> Result<Value, RefineError> {
    let v = dual.graph.num_nodes();
    if v > MAX_EMBED_NODES {
        return Err(RefineError::TooLarge(v));
    }
    let adj = tape.constant(normalize_adjacency(dual.graph).into_matrix())?;
    let x = tape.constant(dual.features().clone())?;
    Ok(encode(tape, h, adj, x)?)
}

fn row_norms(z: &Matrix) -> Vec<f64> {
    (0..z.rows())
        .map(|i| math::sqrt(z.row(i).iter().map(|&x| x * x).sum()))
        .collect()
}

/// Cosine with the zero-norm convention of the gradient tape: either row
/// having zero norm yields 0 (hence edge probability 0.5).
fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let d = na * nb;
    if d > 0.0 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / d
    } else {
        0.0
    }
}

/// Dense all-pairs edge probabilities `(cos(z_i, z_j) + 1) / 2`.
pub fn edge_probabilities(z: &Matrix) -> Result<EdgeProbs, RefineError> {
    let v = z.rows();
    if v < 2 {
        return Err(RefineError::TooSmall(v));
    }
    let norms = row_norms(z);
    let mut probs = Matrix::zeros(v, v);
    for i in 0..v {
        for j in (i + 1)..v {
            let p = (cosine(z.row(i), z.row(j), norms[i], norms[j]) + 1.0) / 2.0;
            probs.set(i, j, p);
            probs.set(j, i, p);
        }
    }
    Ok(EdgeProbs::Dense(probs))
}

/// Edge probabilities restricted to a canonical candidate pair list.
pub fn edge_probabilities_sparse(
    z: &Matrix,
    pairs: &[(u32, u32)],
) -> Result<EdgeProbs, RefineError> {
    let v = z.rows();
    if v < 2 {
        return Err(RefineError::TooSmall(v));
    }
    let norms = row_norms(z);
    let mut probs = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i >= j || j as usize >= v {
            return Err(RefineError::BadCandidate(i, j));
        }
        let (iu, ju) = (i as usize, j as usize);
        probs.push((cosine(z.row(iu), z.row(ju), norms[iu], norms[ju]) + 1.0) / 2.0);
    }
    Ok(EdgeProbs::Sparse { num_nodes: v, pairs: pairs.to_vec(), probs })
}

/// Differentiable dense edge probabilities on a tape (zero diagonal).
pub fn edge_probabilities_on_tape(tape: &mut Tape, z: Value) -> Result<Value, DiffError> {
    let cos = tape.cosine_sim(z, z)?;
    let half = tape.scale(cos, 0.5)?;
    let shifted = tape.add_scalar(half, 0.5)?;
    tape.zero_diag(shifted)
}

/// Candidate support for edge scoring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CandidateSet {
    /// Score all pairs (graphs up to [`DENSE_NODE_LIMIT`] nodes).
    Dense,
    /// Canonical pair list: existing edges plus top-k cosine neighbors.
    Pairs(Vec<(u32, u32)>),
}

/// Choose the scoring support: dense for small graphs, otherwise the union
/// of existing edges and each node's `k` nearest neighbors by cosine
/// similarity (exact scan, ties broken toward the lower node id).
pub fn build_candidates(z: &Matrix, g: &Graph, k: usize) -> CandidateSet {
    let v = g.num_nodes();
    if v <= DENSE_NODE_LIMIT {
        return CandidateSet::Dense;
    }
    let mut pairs: Vec<(u32, u32)> = g.edges().to_vec();
    if k > 0 {
        let norms = row_norms(z);
        for i in 0..v {
            // Running top-k selection: best[0] holds the current minimum.
            let mut best: Vec<(f64, u32)> = Vec::with_capacity(k);
            for j in 0..v {
                if i == j {
                    continue;
                }
                let c = cosine(z.row(i), z.row(j), norms[i], norms[j]);
                if best.len() < k {
                    best.push((c, j as u32));
                    best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)));
                } else if c > best[0].0 || (c == best[0].0 && (j as u32) < best[0].1) {
                    best[0] = (c, j as u32);
                    best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)));
                }
            }
            for &(_, j) in &best {
                let (a, b) = if (i as u32) < j { (i as u32, j) } else { (j, i as u32) };
                pairs.push((a, b));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    CandidateSet::Pairs(pairs)
}

/// One logistic noise draw for the unordered pair `(i, j)`: `log u - log(1-u)`
/// with `u ~ Uniform(0, 1)`. Depends only on `(seed, min, max)`, so results
/// are independent of traversal order.
pub fn pair_logistic_noise(seed: u64, i: u32, j: u32) -> f64 {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    let mut rng = seeds::rng(seeds::mix(seed, &[a as u64, b as u64]));
    let mut u: f64 = rng.random();
    while u <= 0.0 {
        u = rng.random();
    }
    math::log(u) - math::log(1.0 - u)
}

/// Symmetric matrix of per-pair logistic noise with zero diagonal, for the
/// tape-side relaxation.
pub fn logistic_noise_matrix(v: usize, seed: u64) -> Matrix {
    let mut m = Matrix::zeros(v, v);
    for i in 0..v {
        for j in (i + 1)..v {
            let l = pair_logistic_noise(seed, i as u32, j as u32);
            m.set(i, j, l);
            m.set(j, i, l);
        }
    }
    m
}

/// Turn probabilities into a refined adjacency.
///
/// Relaxed mode draws one logistic variable per unordered pair and applies
/// `sigmoid((logit(p) + L) / t)`; hard mode thresholds at `p >= 0.5`.
pub fn binarize(
    probs: &EdgeProbs,
    temperature: f64,
    mode: RefineMode,
    seed: u64,
) -> Result<RefinedAdjacency, RefineError> {
    if !(temperature > 0.0) {
        return Err(RefineError::BadTemperature(temperature));
    }
    let relax = |p: f64, i: u32, j: u32| {
        math::relaxed_bernoulli_scalar(
            p,
            pair_logistic_noise(seed, i, j),
            temperature,
            PROB_CLAMP_LO,
            PROB_CLAMP_HI,
        )
    };
    Ok(match probs {
        EdgeProbs::Dense(p) => {
            let v = p.rows();
            let mut values = Matrix::zeros(v, v);
            for i in 0..v {
                for j in (i + 1)..v {
                    let w = match mode {
                        RefineMode::Hard => {
                            if p.get(i, j) >= 0.5 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        RefineMode::Relaxed => relax(p.get(i, j), i as u32, j as u32),
                    };
                    values.set(i, j, w);
                    values.set(j, i, w);
                }
            }
            RefinedAdjacency::Dense { values, mode }
        }
        EdgeProbs::Sparse { num_nodes, pairs, probs } => {
            let values = pairs
                .iter()
                .zip(probs)
                .map(|(&(i, j), &p)| match mode {
                    RefineMode::Hard => {
                        if p >= 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    RefineMode::Relaxed => relax(p, i, j),
                })
                .collect();
            RefinedAdjacency::Sparse {
                num_nodes: *num_nodes,
                pairs: pairs.clone(),
                values,
                mode,
            }
        }
    })
}

/// Differentiable relaxed adjacency on a tape: probabilities in, relaxed
/// symmetric adjacency out, noise drawn exactly as in [`binarize`].
pub fn relaxed_adjacency_on_tape(
    tape: &mut Tape,
    probs: Value,
    temperature: f64,
    seed: u64,
) -> Result<Value, RefineError> {
    if !(temperature > 0.0) {
        return Err(RefineError::BadTemperature(temperature));
    }
    let v = tape.value(probs).rows();
    let noise = logistic_noise_matrix(v, seed);
    Ok(tape.relaxed_bernoulli(probs, &noise, temperature, PROB_CLAMP_LO, PROB_CLAMP_HI)?)
}
