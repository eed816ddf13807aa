//! Edge-seeded subgraph batches and two-view augmentation.
//!
//! Each subgraph is grown by drawing a fixed number of edges uniformly with
//! replacement and keeping their endpoints; the induced adjacency over those
//! nodes is self-loop symmetric-normalized once at sampling time. A view pair
//! is two independent additive-Gaussian corruptions of the subgraph features
//! over the same adjacency.

use alloc::vec::Vec;
use rand::Rng;

use crate::embed::DualAttributeGraph;
use crate::graph::sym_normalize_dense;
use crate::matrix::Matrix;
use crate::seeds;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("graph has no edges to sample subgraphs from")]
    NoEdges,
    #[error("a batch needs at least 2 subgraphs, got {0}")]
    BatchTooSmall(usize),
    #[error("edges_per_subgraph must be positive")]
    NoEdgesPerSubgraph,
    #[error("augmentation noise must be nonnegative, got {0}")]
    NegativeNoise(f64),
}

/// Induced subgraph: sorted global node ids, normalized local adjacency, and
/// the matching rows of the dual feature matrix.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub node_ids: Vec<u32>,
    pub local_adj: Matrix,
    pub features: Matrix,
}

/// Two noisy views of one subgraph's features.
#[derive(Clone, Debug)]
pub struct ViewPair {
    pub view_a: Matrix,
    pub view_b: Matrix,
}

/// A positive batch: one view pair per subgraph, aligned by index.
pub struct ViewBatch<'s> {
    subgraphs: &'s [Subgraph],
    pairs: Vec<ViewPair>,
}

impl<'s> ViewBatch<'s> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn subgraph(&self, idx: usize) -> &'s Subgraph {
        &self.subgraphs[idx]
    }

    pub fn pair(&self, idx: usize) -> &ViewPair {
        &self.pairs[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'s Subgraph, &ViewPair)> + '_ {
        self.subgraphs.iter().zip(&self.pairs)
    }
}

/// Draw `n` subgraphs, each spanned by `edges_per_subgraph` edges sampled
/// uniformly with replacement.
pub fn sample_subgraphs(
    dual: &DualAttributeGraph<'_>,
    n: usize,
    edges_per_subgraph: usize,
    seed: u64,
) -> Result<Vec<Subgraph>, SamplerError> {
    let g = dual.graph;
    if g.num_edges() == 0 {
        return Err(SamplerError::NoEdges);
    }
    if n < 2 {
        return Err(SamplerError::BatchTooSmall(n));
    }
    if edges_per_subgraph == 0 {
        return Err(SamplerError::NoEdgesPerSubgraph);
    }
    let edges = g.edges();
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let mut rng = seeds::rng(seeds::child(seed, idx as u64));
        let mut node_ids: Vec<u32> = Vec::with_capacity(2 * edges_per_subgraph);
        for _ in 0..edges_per_subgraph {
            let (a, b) = edges[rng.random_range(0..edges.len())];
            node_ids.push(a);
            node_ids.push(b);
        }
        node_ids.sort_unstable();
        node_ids.dedup();

        let nl = node_ids.len();
        let mut adj01 = Matrix::zeros(nl, nl);
        for i in 0..nl {
            for j in (i + 1)..nl {
                if g.has_edge(node_ids[i], node_ids[j]) {
                    adj01.set(i, j, 1.0);
                    adj01.set(j, i, 1.0);
                }
            }
        }
        let local_adj = sym_normalize_dense(&adj01);

        let feats = dual.features();
        let features = Matrix::from_fn(nl, feats.cols(), |i, j| feats.get(node_ids[i] as usize, j));
        out.push(Subgraph { node_ids, local_adj, features });
    }
    Ok(out)
}

/// Two independent additive-Gaussian corruptions of a subgraph's features.
pub fn augment_pair(sg: &Subgraph, sigma: f64, seed: u64) -> Result<ViewPair, SamplerError> {
    if !(sigma >= 0.0) {
        return Err(SamplerError::NegativeNoise(sigma));
    }
    let (r, c) = sg.features.shape();
    let noise_a = Matrix::normal(r, c, 0.0, sigma, &mut seeds::rng(seeds::child(seed, 0)));
    let noise_b = Matrix::normal(r, c, 0.0, sigma, &mut seeds::rng(seeds::child(seed, 1)));
    Ok(ViewPair {
        view_a: sg.features.zip_map(&noise_a, |x, n| x + n),
        view_b: sg.features.zip_map(&noise_b, |x, n| x + n),
    })
}

/// Augment every subgraph into a positive pair; the batch index is folded
/// into the seed so pairs are independent but reproducible.
pub fn make_view_batch<'s>(
    subgraphs: &'s [Subgraph],
    sigma: f64,
    seed: u64,
) -> Result<ViewBatch<'s>, SamplerError> {
    if subgraphs.len() < 2 {
        return Err(SamplerError::BatchTooSmall(subgraphs.len()));
    }
    let pairs = subgraphs
        .iter()
        .enumerate()
        .map(|(i, sg)| augment_pair(sg, sigma, seeds::child(seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ViewBatch { subgraphs, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::build_dual;
    use crate::graph::{sbm_generate, Graph};
    use alloc::vec;

    fn dual_fixture(g: &Graph) -> DualAttributeGraph<'_> {
        let x_s = Matrix::from_fn(g.num_nodes(), 3, |i, j| (i * 3 + j) as f64 * 0.1);
        build_dual(g, &x_s).unwrap()
    }

    #[test]
    fn induced_adjacency_matches_brute_force() {
        let g = sbm_generate(3, 15, 0.25, 0.05, 4, 0.1, 41).unwrap();
        let dual = dual_fixture(&g);
        for sg in sample_subgraphs(&dual, 6, 5, 12).unwrap() {
            let nl = sg.node_ids.len();
            // Re-derive the 0/1 induced matrix and normalize it by hand.
            let mut adj01 = Matrix::zeros(nl, nl);
            for i in 0..nl {
                for j in 0..nl {
                    if i != j && g.has_edge(sg.node_ids[i], sg.node_ids[j]) {
                        adj01.set(i, j, 1.0);
                    }
                }
            }
            let n = nl;
            let mut a_hat = adj01.clone();
            for i in 0..n {
                a_hat.set(i, i, 1.0);
            }
            let mut d = Matrix::zeros(n, n);
            for i in 0..n {
                d.set(i, i, 1.0 / a_hat.row(i).iter().sum::<f64>().sqrt());
            }
            let expected = d.matmul(&a_hat).matmul(&d);
            assert!(sg.local_adj.max_abs_diff(&expected) < 1e-14);
        }
    }

    #[test]
    fn subgraph_nodes_are_sorted_unique_and_non_isolated() {
        let g = sbm_generate(3, 15, 0.25, 0.05, 4, 0.1, 42).unwrap();
        let dual = dual_fixture(&g);
        for sg in sample_subgraphs(&dual, 8, 16, 3).unwrap() {
            assert!(sg.node_ids.windows(2).all(|w| w[0] < w[1]), "ids not sorted/unique");
            assert!(sg.node_ids.len() <= 32);
            // Every node arrived via a sampled edge, so its partner is in the
            // set too: each row must touch at least one other node.
            for i in 0..sg.node_ids.len() {
                let off_diag: f64 = sg
                    .local_adj
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .sum();
                assert!(off_diag > 0.0, "node {i} isolated inside its subgraph");
            }
            // Features are the gathered dual rows.
            for (i, &v) in sg.node_ids.iter().enumerate() {
                assert_eq!(sg.features.row(i), dual.features().row(v as usize));
            }
        }
    }

    #[test]
    fn single_edge_subgraphs_cover_edges_uniformly() {
        // With edges_per_subgraph = 1 the node set names the sampled edge.
        let g = Graph::new(
            4,
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
            Matrix::zeros(4, 2),
            vec![None; 4],
            vec![],
            vec![],
            vec![],
        )
        .unwrap();
        let dual = dual_fixture(&g);
        let mut counts = [0usize; 4];
        let subgraphs = sample_subgraphs(&dual, 2000, 1, 77).unwrap();
        for sg in &subgraphs {
            assert_eq!(sg.node_ids.len(), 2);
            let pair = (sg.node_ids[0], sg.node_ids[1]);
            let idx = g.edges().iter().position(|&e| e == pair).expect("subgraph not an edge");
            counts[idx] += 1;
        }
        // Binomial(2000, 1/4): 5 sigma is about 97.
        for (i, &c) in counts.iter().enumerate() {
            assert!((403..=597).contains(&c), "edge {i} sampled {c} times");
        }
    }

    #[test]
    fn augmentation_noise_has_requested_scale_and_differs_between_views() {
        let g = sbm_generate(2, 20, 0.3, 0.05, 4, 0.0, 8).unwrap();
        let dual = dual_fixture(&g);
        let sg = &sample_subgraphs(&dual, 2, 16, 5).unwrap()[0];
        let pair = augment_pair(sg, 0.1, 99).unwrap();
        assert_ne!(pair.view_a, pair.view_b);

        let deltas: Vec<f64> = pair
            .view_a
            .data()
            .iter()
            .zip(sg.features.data())
            .map(|(&v, &f)| v - f)
            .collect();
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "noise mean {mean}");
        assert!((var.sqrt() - 0.1).abs() < 0.05, "noise std {}", var.sqrt());

        // Zero sigma reproduces the features exactly.
        let clean = augment_pair(sg, 0.0, 99).unwrap();
        assert_eq!(clean.view_a, sg.features);
        assert_eq!(clean.view_b, sg.features);
    }

    #[test]
    fn batches_are_deterministic_and_validated() {
        let g = sbm_generate(2, 20, 0.3, 0.05, 4, 0.1, 9).unwrap();
        let dual = dual_fixture(&g);
        let sgs = sample_subgraphs(&dual, 4, 8, 21).unwrap();
        let sgs2 = sample_subgraphs(&dual, 4, 8, 21).unwrap();
        for (a, b) in sgs.iter().zip(&sgs2) {
            assert_eq!(a.node_ids, b.node_ids);
            assert_eq!(a.local_adj, b.local_adj);
        }
        let other = sample_subgraphs(&dual, 4, 8, 22).unwrap();
        assert!(sgs.iter().zip(&other).any(|(a, b)| a.node_ids != b.node_ids));

        let batch = make_view_batch(&sgs, 0.1, 7).unwrap();
        let batch2 = make_view_batch(&sgs, 0.1, 7).unwrap();
        assert_eq!(batch.len(), 4);
        for i in 0..batch.len() {
            assert_eq!(batch.pair(i).view_a, batch2.pair(i).view_a);
            assert_eq!(batch.subgraph(i).node_ids, sgs[i].node_ids);
        }

        assert!(matches!(sample_subgraphs(&dual, 1, 8, 0), Err(SamplerError::BatchTooSmall(1))));
        assert!(matches!(sample_subgraphs(&dual, 4, 0, 0), Err(SamplerError::NoEdgesPerSubgraph)));
        assert!(matches!(make_view_batch(&sgs[..1], 0.1, 0), Err(SamplerError::BatchTooSmall(1))));
        assert!(matches!(augment_pair(&sgs[0], -0.5, 0), Err(SamplerError::NegativeNoise(_))));

        let empty = Graph::new(3, vec![], Matrix::zeros(3, 1), vec![None; 3], vec![], vec![], vec![]).unwrap();
        let x_s = Matrix::zeros(3, 2);
        let dual_empty = build_dual(&empty, &x_s).unwrap();
        assert!(matches!(sample_subgraphs(&dual_empty, 4, 2, 0), Err(SamplerError::NoEdges)));
    }
}
