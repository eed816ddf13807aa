//! Graph representation and structural utilities.
//!
//! Graphs are undirected and simple: edges are stored once as `(src, dst)`
//! with `src < dst`, sorted lexicographically, without duplicates or self
//! loops. Node features live in a dense `V x D` matrix; labels are optional
//! per node; train/val/test masks are sorted, disjoint node lists.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::matrix::Matrix;
use crate::seeds;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside the graph")]
    EdgeOutOfRange(u32, u32),
    #[error("feature matrix has {rows} rows for {nodes} nodes")]
    FeatureRows { rows: usize, nodes: usize },
    #[error("label vector has {len} entries for {nodes} nodes")]
    LabelLen { len: usize, nodes: usize },
    #[error("mask entry {0} is out of range")]
    MaskOutOfRange(u32),
    #[error("node {0} appears in more than one split mask")]
    OverlappingMasks(u32),
    #[error("invalid perturbation ratios: add {add}, remove {remove}")]
    InvalidRatio { add: f64, remove: f64 },
    #[error("graph too dense: cannot add {requested} edges, only {available} absent pairs")]
    TooDense { requested: usize, available: usize },
    #[error("invalid block model parameters: {0}")]
    InvalidBlockModel(&'static str),
    #[error("split needs {requested} labeled nodes but only {available} exist")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("invalid split specification: {0}")]
    InvalidSplit(&'static str),
}

/// Counts of entries dropped while canonicalizing an edge list.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CanonStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Normalize an edge list: orient `src < dst`, drop self loops, sort, and
/// deduplicate. Returns the canonical list plus drop counts.
pub fn canonicalize_edges(
    num_nodes: usize,
    edges: impl IntoIterator<Item = (u32, u32)>,
) -> Result<(Vec<(u32, u32)>, CanonStats), GraphError> {
    let mut stats = CanonStats::default();
    let mut out = Vec::new();
    for (a, b) in edges {
        if a as usize >= num_nodes || b as usize >= num_nodes {
            return Err(GraphError::EdgeOutOfRange(a, b));
        }
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    let before = out.len();
    out.dedup();
    stats.duplicates = before - out.len();
    Ok((out, stats))
}

/// Undirected attributed graph with optional labels and split masks.
#[derive(Clone, Debug)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    features: Matrix,
    labels: Vec<Option<u32>>,
    num_classes: usize,
    train_mask: Vec<u32>,
    val_mask: Vec<u32>,
    test_mask: Vec<u32>,
}

fn check_mask(mask: &mut Vec<u32>, num_nodes: usize) -> Result<(), GraphError> {
    mask.sort_unstable();
    mask.dedup();
    if let Some(&bad) = mask.iter().find(|&&v| v as usize >= num_nodes) {
        return Err(GraphError::MaskOutOfRange(bad));
    }
    Ok(())
}

impl Graph {
    /// Build a graph, canonicalizing `edges` and validating all invariants.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(u32, u32)>,
        features: Matrix,
        labels: Vec<Option<u32>>,
        train_mask: Vec<u32>,
        val_mask: Vec<u32>,
        test_mask: Vec<u32>,
    ) -> Result<Self, GraphError> {
        if num_nodes == 0 {
            return Err(GraphError::Empty);
        }
        if features.rows() != num_nodes {
            return Err(GraphError::FeatureRows { rows: features.rows(), nodes: num_nodes });
        }
        if labels.len() != num_nodes {
            return Err(GraphError::LabelLen { len: labels.len(), nodes: num_nodes });
        }
        let (edges, _) = canonicalize_edges(num_nodes, edges)?;
        let num_classes = labels.iter().flatten().max().map_or(0, |&m| m as usize + 1);
        let (mut train_mask, mut val_mask, mut test_mask) = (train_mask, val_mask, test_mask);
        check_mask(&mut train_mask, num_nodes)?;
        check_mask(&mut val_mask, num_nodes)?;
        check_mask(&mut test_mask, num_nodes)?;
        let mut seen = vec![false; num_nodes];
        for &v in train_mask.iter().chain(&val_mask).chain(&test_mask) {
            if seen[v as usize] {
                return Err(GraphError::OverlappingMasks(v));
            }
            seen[v as usize] = true;
        }
        Ok(Graph { num_nodes, edges, features, labels, num_classes, train_mask, val_mask, test_mask })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(src, dst)` list with `src < dst`, sorted, deduplicated.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    /// `max(label) + 1`, or 0 for fully unlabeled graphs.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn train_mask(&self) -> &[u32] {
        &self.train_mask
    }

    pub fn val_mask(&self) -> &[u32] {
        &self.val_mask
    }

    pub fn test_mask(&self) -> &[u32] {
        &self.test_mask
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    /// Sorted neighbor lists for all nodes.
    pub fn adjacency_list(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(a, b) in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }

    /// Same graph with different split masks.
    pub fn with_masks(&self, train: Vec<u32>, val: Vec<u32>, test: Vec<u32>) -> Result<Graph, GraphError> {
        Graph::new(
            self.num_nodes,
            self.edges.clone(),
            self.features.clone(),
            self.labels.clone(),
            train,
            val,
            test,
        )
    }

    /// Same graph with a different edge list.
    pub fn with_edges(&self, edges: Vec<(u32, u32)>) -> Result<Graph, GraphError> {
        Graph::new(
            self.num_nodes,
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.train_mask.clone(),
            self.val_mask.clone(),
            self.test_mask.clone(),
        )
    }

    /// Same graph with a different feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Graph, GraphError> {
        Graph::new(
            self.num_nodes,
            self.edges.clone(),
            features,
            self.labels.clone(),
            self.train_mask.clone(),
            self.val_mask.clone(),
            self.test_mask.clone(),
        )
    }
}

/// Dense self-loop symmetric-normalized adjacency `D^{-1/2}(A + I)D^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Matrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// `D^{-1/2}(W + I)D^{-1/2}` for a dense nonnegative square matrix, with
/// `D = diag(rowsum(W + I))`. This is the plain (non-differentiable) twin of
/// the tape's `sym_normalize` op.
pub fn sym_normalize_dense(w: &Matrix) -> Matrix {
    assert_eq!(w.rows(), w.cols(), "sym_normalize_dense needs a square matrix");
    let n = w.rows();
    let scale: Vec<f64> = (0..n)
        .map(|i| 1.0 / crate::math::sqrt(w.row(i).iter().sum::<f64>() + 1.0))
        .collect();
    Matrix::from_fn(n, n, |i, j| {
        let hat = w.get(i, j) + if i == j { 1.0 } else { 0.0 };
        scale[i] * hat * scale[j]
    })
}

/// Build the normalized operator the GCN layers propagate with. Isolated
/// nodes keep a unit self loop, so no degree is ever zero.
pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let mut scale: Vec<f64> = g.degrees().iter().map(|&d| 1.0 / crate::math::sqrt(d as f64 + 1.0)).collect();
    // Guard against pathological float issues; degrees + 1 are always >= 1.
    for s in &mut scale {
        debug_assert!(s.is_finite());
    }
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, scale[i] * scale[i]);
    }
    for &(a, b) in g.edges() {
        let (i, j) = (a as usize, b as usize);
        let v = scale[i] * scale[j];
        m.set(i, j, v);
        m.set(j, i, v);
    }
    NormalizedAdjacency { matrix: m }
}

/// Randomly corrupt a graph: remove `floor(remove_ratio * M)` existing edges
/// uniformly without replacement, then add `floor(add_ratio * M)` absent
/// pairs uniformly (`M` is the original edge count). Features, labels, and
/// masks are preserved.
pub fn perturb_edges(g: &Graph, add_ratio: f64, remove_ratio: f64, seed: u64) -> Result<Graph, GraphError> {
    if !(add_ratio >= 0.0) || !(0.0..=1.0).contains(&remove_ratio) {
        return Err(GraphError::InvalidRatio { add: add_ratio, remove: remove_ratio });
    }
    let m = g.num_edges();
    let remove_count = (remove_ratio * m as f64) as usize;
    let add_count = (add_ratio * m as f64) as usize;
    let total_pairs = g.num_nodes() * (g.num_nodes() - 1) / 2;
    let available = total_pairs - m;
    if add_count > available {
        return Err(GraphError::TooDense { requested: add_count, available });
    }

    let mut rng = seeds::rng(seeds::child(seed, 0));
    let mut order: Vec<usize> = (0..m).collect();
    // Partial Fisher-Yates: the first remove_count entries are the removals.
    for k in 0..remove_count {
        let j = rng.random_range(k..m);
        order.swap(k, j);
    }
    let mut removed = vec![false; m];
    for &idx in &order[..remove_count] {
        removed[idx] = true;
    }
    let mut edges: Vec<(u32, u32)> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed[*i])
        .map(|(_, &e)| e)
        .collect();

    let mut rng = seeds::rng(seeds::child(seed, 1));
    let mut added: Vec<(u32, u32)> = Vec::with_capacity(add_count);
    let n = g.num_nodes() as u32;
    while added.len() < add_count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if g.has_edge(pair.0, pair.1) || added.contains(&pair) {
            continue;
        }
        added.push(pair);
    }
    edges.extend(added);
    g.with_edges(edges)
}

/// Sample a stochastic block model graph with noisy one-hot block features.
///
/// Nodes `[b * nodes_per_block, (b+1) * nodes_per_block)` form block `b` and
/// carry label `b`. Each intra-block pair is an edge with probability
/// `p_intra`, each inter-block pair with `p_inter`. Features are the one-hot
/// block centroid (in the first `blocks` of `feat_dim` dimensions) plus
/// i.i.d. `N(0, feat_noise^2)` noise. Masks start empty; see [`make_split`].
#[allow(clippy::too_many_arguments)]
pub fn sbm_generate(
    blocks: usize,
    nodes_per_block: usize,
    p_intra: f64,
    p_inter: f64,
    feat_dim: usize,
    feat_noise: f64,
    seed: u64,
) -> Result<Graph, GraphError> {
    if blocks == 0 || nodes_per_block == 0 {
        return Err(GraphError::InvalidBlockModel("blocks and nodes_per_block must be positive"));
    }
    if !(0.0..=1.0).contains(&p_intra) || !(0.0..=1.0).contains(&p_inter) {
        return Err(GraphError::InvalidBlockModel("edge probabilities must lie in [0, 1]"));
    }
    if feat_dim < blocks {
        return Err(GraphError::InvalidBlockModel("feat_dim must be at least the number of blocks"));
    }
    if !(feat_noise >= 0.0) {
        return Err(GraphError::InvalidBlockModel("feat_noise must be nonnegative"));
    }
    let n = blocks * nodes_per_block;
    let block_of = |v: usize| (v / nodes_per_block) as u32;

    let mut rng = seeds::rng(seeds::child(seed, 0));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block_of(i) == block_of(j) { p_intra } else { p_inter };
            if rng.random::<f64>() < p {
                edges.push((i as u32, j as u32));
            }
        }
    }

    let mut rng = seeds::rng(seeds::child(seed, 1));
    let noise = Matrix::normal(n, feat_dim, 0.0, feat_noise, &mut rng);
    let features = Matrix::from_fn(n, feat_dim, |v, d| {
        let centroid = if d == block_of(v) as usize { 1.0 } else { 0.0 };
        centroid + noise.get(v, d)
    });

    let labels = (0..n).map(|v| Some(block_of(v))).collect();
    Graph::new(n, edges, features, labels, Vec::new(), Vec::new(), Vec::new())
}

/// How to carve train/val/test masks out of the labeled nodes.
#[derive(Clone, Debug)]
pub enum SplitSpec {
    /// Fixed sizes drawn from a seeded shuffle of all labeled nodes.
    Counts { train: usize, val: usize, test: usize, seed: u64 },
    /// `train_ratio` of labeled nodes for training, apportioned per class by
    /// largest remainder; `val_fraction` / `test_fraction` of labeled nodes
    /// from the remaining pool.
    Ratio { train_ratio: f64, val_fraction: f64, test_fraction: f64, seed: u64 },
}

/// Classes that ended up with no training nodes (possible under small
/// ratios); a warning condition, not an error.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SplitReport {
    pub classes_without_train: Vec<u32>,
}

/// Produce a copy of `g` with masks built per `spec`. Unlabeled nodes are
/// never assigned to a mask.
pub fn make_split(g: &Graph, spec: &SplitSpec) -> Result<(Graph, SplitReport), GraphError> {
    let labeled: Vec<u32> = (0..g.num_nodes() as u32)
        .filter(|&v| g.labels()[v as usize].is_some())
        .collect();
    let l = labeled.len();
    match *spec {
        SplitSpec::Counts { train, val, test, seed } => {
            if train + val + test > l {
                return Err(GraphError::SplitTooLarge { requested: train + val + test, available: l });
            }
            let mut pool = labeled;
            pool.shuffle(&mut seeds::rng(seeds::child(seed, 0)));
            let train_mask = pool[..train].to_vec();
            let val_mask = pool[train..train + val].to_vec();
            let test_mask = pool[train + val..train + val + test].to_vec();
            let graph = g.with_masks(train_mask, val_mask, test_mask)?;
            Ok((graph, SplitReport::default()))
        }
        SplitSpec::Ratio { train_ratio, val_fraction, test_fraction, seed } => {
            if !(0.0..=1.0).contains(&train_ratio)
                || !(0.0..=1.0).contains(&val_fraction)
                || !(0.0..=1.0).contains(&test_fraction)
            {
                return Err(GraphError::InvalidSplit("ratios must lie in [0, 1]"));
            }
            let train_total = (train_ratio * l as f64) as usize;
            // Apportion the train budget per class: floor of the exact share,
            // then distribute leftovers by largest fractional remainder
            // (ties to the smaller class id).
            let classes = g.num_classes();
            let mut per_class: Vec<Vec<u32>> = vec![Vec::new(); classes];
            for &v in &labeled {
                per_class[g.labels()[v as usize].unwrap() as usize].push(v);
            }
            let shares: Vec<f64> = per_class
                .iter()
                .map(|members| train_total as f64 * members.len() as f64 / l.max(1) as f64)
                .collect();
            let mut take: Vec<usize> = shares.iter().map(|&s| s as usize).collect();
            let mut leftover = train_total - take.iter().sum::<usize>();
            let mut by_remainder: Vec<usize> = (0..classes).collect();
            by_remainder.sort_by(|&a, &b| {
                let ra = shares[a] - take[a] as f64;
                let rb = shares[b] - take[b] as f64;
                rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
            });
            for &c in &by_remainder {
                if leftover == 0 {
                    break;
                }
                if take[c] < per_class[c].len() {
                    take[c] += 1;
                    leftover -= 1;
                }
            }

            let mut train_mask = Vec::with_capacity(train_total);
            let mut report = SplitReport::default();
            for (c, members) in per_class.iter_mut().enumerate() {
                members.shuffle(&mut seeds::rng(seeds::mix(seed, &[1, c as u64])));
                let k = take[c].min(members.len());
                train_mask.extend_from_slice(&members[..k]);
                if k == 0 && !members.is_empty() {
                    report.classes_without_train.push(c as u32);
                }
            }

            let in_train: alloc::collections::BTreeSet<u32> = train_mask.iter().copied().collect();
            let mut pool: Vec<u32> = labeled.iter().copied().filter(|v| !in_train.contains(v)).collect();
            pool.shuffle(&mut seeds::rng(seeds::child(seed, 0)));
            let val_count = (val_fraction * l as f64) as usize;
            let test_count = (test_fraction * l as f64) as usize;
            if val_count + test_count > pool.len() {
                return Err(GraphError::SplitTooLarge {
                    requested: train_mask.len() + val_count + test_count,
                    available: l,
                });
            }
            let val_mask = pool[..val_count].to_vec();
            let test_mask = pool[val_count..val_count + test_count].to_vec();
            let graph = g.with_masks(train_mask, val_mask, test_mask)?;
            Ok((graph, report))
        }
    }
}

/// Fraction of edges whose endpoints are both labeled and share a label.
/// `None` when no edge has two labeled endpoints.
pub fn intra_class_edge_fraction(labels: &[Option<u32>], edges: &[(u32, u32)]) -> Option<f64> {
    let mut counted = 0usize;
    let mut intra = 0usize;
    for &(a, b) in edges {
        if let (Some(la), Some(lb)) = (labels[a as usize], labels[b as usize]) {
            counted += 1;
            if la == lb {
                intra += 1;
            }
        }
    }
    if counted == 0 {
        None
    } else {
        Some(intra as f64 / counted as f64)
    }
}
