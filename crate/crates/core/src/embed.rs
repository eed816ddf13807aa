//! Structural node embeddings from random walks.
//!
//! A corpus of fixed-length uniform random walks feeds a skip-gram model with
//! negative sampling. The resulting input embeddings `X^s` capture structure
//! independently of node attributes; [`build_dual`] concatenates them with
//! the raw features into the encoder input `[X | X^s]`.

use alloc::vec::Vec;
use rand::Rng;

use crate::graph::Graph;
use crate::math;
use crate::matrix::Matrix;
use crate::seeds;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus references node {0}, outside the graph")]
    CorpusOutOfRange(u32),
    #[error("structural embeddings have {rows} rows for {nodes} nodes")]
    RowMismatch { rows: usize, nodes: usize },
}

/// A bag of random walks, each a node id sequence of length at most
/// `walk_length` (shorter only when a walk hits a node with no neighbors).
#[derive(Clone, Debug)]
pub struct WalkCorpus {
    walks: Vec<Vec<u32>>,
    walk_length: usize,
    walks_per_node: usize,
}

impl WalkCorpus {
    pub fn walks(&self) -> &[Vec<u32>] {
        &self.walks
    }

    pub fn walk_length(&self) -> usize {
        self.walk_length
    }

    pub fn walks_per_node(&self) -> usize {
        self.walks_per_node
    }
}

/// Sample `walks_per_node` uniform random walks rooted at every node.
pub fn random_walks(
    g: &Graph,
    walk_length: usize,
    walks_per_node: usize,
    seed: u64,
) -> Result<WalkCorpus, EmbedError> {
    if walk_length == 0 || walks_per_node == 0 {
        return Err(EmbedError::InvalidConfig("walk_length and walks_per_node must be positive"));
    }
    let adj = g.adjacency_list();
    let mut walks = Vec::with_capacity(g.num_nodes() * walks_per_node);
    for root in 0..g.num_nodes() as u32 {
        let mut rng = seeds::rng(seeds::child(seed, root as u64));
        for _ in 0..walks_per_node {
            let mut walk = Vec::with_capacity(walk_length);
            walk.push(root);
            while walk.len() < walk_length {
                let here = *walk.last().unwrap() as usize;
                let neighbors = &adj[here];
                if neighbors.is_empty() {
                    break;
                }
                walk.push(neighbors[rng.random_range(0..neighbors.len())]);
            }
            walks.push(walk);
        }
    }
    Ok(WalkCorpus { walks, walk_length, walks_per_node })
}

/// Skip-gram training hyperparameters.
#[derive(Clone, Debug)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { dim: 128, window: 5, negatives: 5, epochs: 5, lr: 0.025 }
    }
}

/// Input (center) and output (context) embedding tables of a trained
/// skip-gram model. `embeddings` is the structural representation consumers
/// use; `context` exists for loss evaluation and tests.
#[derive(Clone, Debug)]
pub struct SkipGramModel {
    pub embeddings: Matrix,
    pub context: Matrix,
}

/// Cumulative-sum sampling table over `degree^{3/4}` weights.
struct NegativeTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl NegativeTable {
    fn new(g: &Graph) -> Self {
        let mut cumulative = Vec::with_capacity(g.num_nodes());
        let mut total = 0.0;
        for &d in &g.degrees() {
            total += math::pow(d as f64, 0.75);
            cumulative.push(total);
        }
        NegativeTable { cumulative, total }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        let x = rng.random::<f64>() * self.total;
        self.cumulative.partition_point(|&c| c <= x) as u32
    }
}

fn validate_corpus(g: &Graph, corpus: &WalkCorpus) -> Result<(), EmbedError> {
    if corpus.walks.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    for walk in &corpus.walks {
        if let Some(&bad) = walk.iter().find(|&&v| v as usize >= g.num_nodes()) {
            return Err(EmbedError::CorpusOutOfRange(bad));
        }
    }
    Ok(())
}

/// Train skip-gram with negative sampling over the walk corpus and return
/// both embedding tables. Negatives follow the `degree^{3/4}` distribution;
/// the learning rate decays linearly per epoch; `epochs = 0` returns the
/// seeded initialization untouched (uniform inputs, zero contexts).
pub fn train_skipgram_model(
    g: &Graph,
    corpus: &WalkCorpus,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<SkipGramModel, EmbedError> {
    if cfg.dim == 0 {
        return Err(EmbedError::InvalidConfig("dim must be positive"));
    }
    if cfg.window == 0 {
        return Err(EmbedError::InvalidConfig("window must be positive"));
    }
    if !(cfg.lr > 0.0) {
        return Err(EmbedError::InvalidConfig("lr must be positive"));
    }
    validate_corpus(g, corpus)?;

    let v = g.num_nodes();
    let bound = 0.5 / cfg.dim as f64;
    let mut input = Matrix::uniform(v, cfg.dim, -bound, bound, &mut seeds::rng(seeds::child(seed, 0)));
    let mut output = Matrix::zeros(v, cfg.dim);
    let table = NegativeTable::new(g);

    let mut in_grad = alloc::vec![0.0; cfg.dim];
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr * (1.0 - epoch as f64 / cfg.epochs as f64);
        let mut rng = seeds::rng(seeds::mix(seed, &[1, epoch as u64]));
        for walk in &corpus.walks {
            for (i, &center) in walk.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(walk.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = walk[j];
                    in_grad.fill(0.0);
                    {
                        // Positive pair: push scores toward 1.
                        let (c, o) = (center as usize, context as usize);
                        let score: f64 = input.row(c).iter().zip(output.row(o)).map(|(a, b)| a * b).sum();
                        let err = math::sigmoid(score) - 1.0;
                        for (gacc, &ov) in in_grad.iter_mut().zip(output.row(o)) {
                            *gacc += err * ov;
                        }
                        let center_row: Vec<f64> = input.row(c).to_vec();
                        for (ov, cv) in output.row_mut(o).iter_mut().zip(&center_row) {
                            *ov -= lr * err * cv;
                        }
                    }
                    for _ in 0..cfg.negatives {
                        let neg = table.sample(&mut rng);
                        if neg == context {
                            continue;
                        }
                        let (c, n) = (center as usize, neg as usize);
                        let score: f64 = input.row(c).iter().zip(output.row(n)).map(|(a, b)| a * b).sum();
                        let err = math::sigmoid(score);
                        for (gacc, &nv) in in_grad.iter_mut().zip(output.row(n)) {
                            *gacc += err * nv;
                        }
                        let center_row: Vec<f64> = input.row(c).to_vec();
                        for (nv, cv) in output.row_mut(n).iter_mut().zip(&center_row) {
                            *nv -= lr * err * cv;
                        }
                    }
                    for (cv, &gacc) in input.row_mut(center as usize).iter_mut().zip(&in_grad) {
                        *cv -= lr * gacc;
                    }
                }
            }
        }
    }
    Ok(SkipGramModel { embeddings: input, context: output })
}

/// Structural embeddings `X^s` (the input table of the skip-gram model).
pub fn train_skipgram(
    g: &Graph,
    corpus: &WalkCorpus,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<Matrix, EmbedError> {
    train_skipgram_model(g, corpus, cfg, seed).map(|model| model.embeddings)
}

/// Mean skip-gram objective over the corpus under fixed embeddings:
/// `-log sigmoid(u_c . v_o) - sum_neg log sigmoid(-u_c . v_n)`, with
/// negatives drawn from `eval_seed`. Lower is better.
pub fn skipgram_loss(
    g: &Graph,
    corpus: &WalkCorpus,
    model: &SkipGramModel,
    window: usize,
    negatives: usize,
    eval_seed: u64,
) -> f64 {
    let table = NegativeTable::new(g);
    let mut rng = seeds::rng(eval_seed);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for walk in corpus.walks() {
        for (i, &center) in walk.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(walk.len() - 1);
            for j in lo..=hi {
                if j == i {
                    continue;
                }
                let (c, o) = (center as usize, walk[j] as usize);
                let pos: f64 = model.embeddings.row(c).iter().zip(model.context.row(o)).map(|(a, b)| a * b).sum();
                let mut loss = -math::log(math::sigmoid(pos).max(1e-12));
                for _ in 0..negatives {
                    let n = table.sample(&mut rng) as usize;
                    if n == o {
                        continue;
                    }
                    let neg: f64 = model.embeddings.row(c).iter().zip(model.context.row(n)).map(|(a, b)| a * b).sum();
                    loss -= math::log(math::sigmoid(-neg).max(1e-12));
                }
                total += loss;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// A graph together with the concatenated attribute matrix `[X | X^s]`.
#[derive(Debug)]
pub struct DualAttributeGraph<'g> {
    pub graph: &'g Graph,
    features: Matrix,
}

impl DualAttributeGraph<'_> {
    /// `V x (D + D_s)` concatenated features.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

/// Concatenate raw attributes with structural embeddings column-wise.
pub fn build_dual<'g>(g: &'g Graph, x_s: &Matrix) -> Result<DualAttributeGraph<'g>, EmbedError> {
    if x_s.rows() != g.num_nodes() {
        return Err(EmbedError::RowMismatch { rows: x_s.rows(), nodes: g.num_nodes() });
    }
    let x = g.features();
    let (d, ds) = (x.cols(), x_s.cols());
    let features = Matrix::from_fn(g.num_nodes(), d + ds, |i, j| {
        if j < d {
            x.get(i, j)
        } else {
            x_s.get(i, j - d)
        }
    });
    Ok(DualAttributeGraph { graph: g, features })
}
