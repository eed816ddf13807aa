//! End-to-end experiment pipeline: joint training of the energy model and
//! the downstream classifier, evaluation on the refined graph, a plain-GCN
//! control, and the sweep protocols built on top of them.
//!
//! One training batch does, on a single tape:
//!
//! 1. sample `N` edge-seeded subgraphs and build two augmented views;
//! 2. evaluate the contrastive/generative/regularization objective (Langevin
//!    samples are drawn outside the tape and held fixed);
//! 3. re-encode the whole graph, turn pairwise cosines into edge
//!    probabilities, and relax them into a differentiable adjacency;
//! 4. classify every node on that adjacency and add the cross-entropy on the
//!    training mask, weighted by `mu`.
//!
//! One backward pass then updates encoder, projector, and classifier with a
//! single Adam step. Evaluation always binarizes hard (`p >= 0.5`) so
//! reported accuracies are deterministic in the checkpoint alone.

use std::time::Instant;

use ecl_gsr_core::classifier::{self, ClassifierParams};
use ecl_gsr_core::diff::{ParamStore, Tape};
use ecl_gsr_core::ecl::{ecl_loss, EclDims, EclParams};
use ecl_gsr_core::embed::{build_dual, random_walks, train_skipgram};
use ecl_gsr_core::graph::{self, make_split, perturb_edges, Graph, SplitSpec};
use ecl_gsr_core::math::halving_schedule;
use ecl_gsr_core::matrix::Matrix;
use ecl_gsr_core::refine::{
    binarize, edge_probabilities, full_node_embeddings, full_node_embeddings_on_tape,
    edge_probabilities_on_tape, relaxed_adjacency_on_tape, RefineMode, RefinedAdjacency,
    DENSE_NODE_LIMIT,
};
use ecl_gsr_core::sampler::{make_view_batch, sample_subgraphs};
use ecl_gsr_core::seeds;

use crate::checkpoint::{Checkpoint, ModelShape};
use crate::config::{DeepWalkConfig, TrainConfig};
use crate::dataset::fmt_f64;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training failed at epoch {epoch}, batch {batch}: {message}")]
    Diverged {
        epoch: usize,
        batch: usize,
        message: String,
    },
    #[error("structural embedding failed: {0}")]
    Embed(#[from] ecl_gsr_core::embed::EmbedError),
    #[error(transparent)]
    Graph(#[from] ecl_gsr_core::graph::GraphError),
    #[error(transparent)]
    Refine(#[from] ecl_gsr_core::refine::RefineError),
    #[error(transparent)]
    Classifier(#[from] ecl_gsr_core::classifier::ClassifierError),
    #[error(transparent)]
    Diff(#[from] ecl_gsr_core::diff::DiffError),
}

// Seed-stream tags; every stochastic component hangs off the run seed via an
// independent tag so streams never collide.
const TAG_ECL_INIT: u64 = 1;
const TAG_CLF_INIT: u64 = 2;
const TAG_SUBGRAPHS: u64 = 10;
const TAG_VIEWS: u64 = 11;
const TAG_SGLD: u64 = 12;
const TAG_BERNOULLI: u64 = 13;
const TAG_WALKS: u64 = 30;
const TAG_SKIPGRAM: u64 = 31;
const TAG_PERTURB: u64 = 20;
const TAG_SPLIT: u64 = 40;

/// Losses and held-out accuracy at the end of one epoch. `wall_time_s` is
/// seconds since training started; it is logged to CSV only on request so
/// equal-seed runs stay byte-identical.
#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub discriminative: f64,
    pub generative: f64,
    pub regularization: f64,
    pub ecl_total: f64,
    pub class_loss: f64,
    pub total: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time_s: f64,
}

/// Per-epoch training log.
#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    pub records: Vec<EpochRecord>,
}

impl MetricsLog {
    /// Render as CSV. Column order matches the header below; floats use
    /// shortest-round-trip rendering so equal runs produce equal bytes.
    pub fn to_csv(&self, include_wall_time: bool) -> String {
        let mut out = String::from(
            "epoch,disc_loss,gen_loss,reg_loss,ecl_loss,class_loss,total_loss,val_accuracy,test_accuracy",
        );
        if include_wall_time {
            out.push_str(",wall_time_s");
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                r.epoch,
                fmt_f64(r.discriminative),
                fmt_f64(r.generative),
                fmt_f64(r.regularization),
                fmt_f64(r.ecl_total),
                fmt_f64(r.class_loss),
                fmt_f64(r.total),
                fmt_f64(r.val_accuracy),
                fmt_f64(r.test_accuracy),
            ));
            if include_wall_time {
                out.push(',');
                out.push_str(&fmt_f64(r.wall_time_s));
            }
            out.push('\n');
        }
        out
    }

    /// True when every logged number (losses and accuracies) is finite.
    pub fn all_finite(&self) -> bool {
        self.records.iter().all(|r| {
            [
                r.discriminative,
                r.generative,
                r.regularization,
                r.ecl_total,
                r.class_loss,
                r.total,
                r.val_accuracy,
                r.test_accuracy,
            ]
            .iter()
            .all(|v| v.is_finite())
        })
    }
}

/// A trained model: selected parameters plus shapes and the training log.
#[derive(Debug)]
pub struct TrainedModel {
    pub store: ParamStore,
    pub ecl: EclParams,
    pub clf: ClassifierParams,
    pub shape: ModelShape,
    pub metrics: MetricsLog,
    /// Epoch whose parameters `store` holds (last epoch unless best-val
    /// selection picked an earlier one). `None` when trained for 0 epochs.
    pub selected_epoch: Option<usize>,
}

impl TrainedModel {
    pub fn into_checkpoint(self, config: TrainConfig) -> Checkpoint {
        Checkpoint {
            config,
            shape: self.shape,
            store: self.store,
        }
    }
}

/// Random-walk structural embedding `X_s` for `g` under `dw`, seeded from
/// the run seed.
pub fn structural_embedding(
    g: &Graph,
    dw: &DeepWalkConfig,
    seed: u64,
) -> Result<Matrix, PipelineError> {
    let corpus = random_walks(g, dw.walk_length, dw.walks_per_node, seeds::mix(seed, &[TAG_WALKS]))?;
    Ok(train_skipgram(g, &corpus, &dw.skipgram(), seeds::mix(seed, &[TAG_SKIPGRAM]))?)
}

fn require(cond: bool, msg: &str) -> Result<(), PipelineError> {
    if cond {
        Ok(())
    } else {
        Err(PipelineError::Input(msg.to_string()))
    }
}

fn check_trainable(g: &Graph) -> Result<(), PipelineError> {
    require(g.num_edges() > 0, "graph has no edges to sample subgraphs from")?;
    require(g.num_classes() > 0, "graph has no labeled nodes")?;
    require(!g.train_mask().is_empty(), "training mask is empty")?;
    require(!g.val_mask().is_empty(), "validation mask is empty")?;
    require(!g.test_mask().is_empty(), "test mask is empty")?;
    require(
        g.num_nodes() <= DENSE_NODE_LIMIT,
        "joint refinement training builds a dense refined adjacency and is limited to 5000 nodes",
    )
}

/// Batches per epoch: `ceil(E / (N * m))`, at least 1.
pub fn batches_per_epoch(num_edges: usize, batch_pairs: usize, edges_per_subgraph: usize) -> usize {
    let per_batch = batch_pairs * edges_per_subgraph;
    num_edges.div_ceil(per_batch).max(1)
}

/// Jointly train the energy model and classifier on `g` with structural
/// embedding `x_s`.
///
/// Returns the parameters of the best-validation epoch when
/// `cfg.select_best_val` is set (ties to the earlier epoch), otherwise of the
/// final epoch. With `cfg.epochs == 0` the freshly initialized parameters
/// come back with an empty log.
pub fn train(g: &Graph, x_s: &Matrix, cfg: &TrainConfig) -> Result<TrainedModel, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    check_trainable(g)?;
    let dual = build_dual(g, x_s)?;
    let d = g.features().cols();
    let dims = EclDims::new(d + x_s.cols());
    let shape = ModelShape {
        feature_dim: d,
        struct_dim: x_s.cols(),
        encoder_hidden: dims.hidden,
        projection_dim: dims.proj,
        classifier_width: cfg.classifier_width,
        classes: g.num_classes(),
    };

    let mut store = ParamStore::new();
    let ecl = EclParams::init(&mut store, "ecl", dims, seeds::child(cfg.seed, TAG_ECL_INIT))?;
    let clf = ClassifierParams::init(
        &mut store,
        "clf",
        d,
        cfg.classifier_width,
        g.num_classes(),
        seeds::child(cfg.seed, TAG_CLF_INIT),
    )?;

    let hyper = cfg.hyper();
    let batches = batches_per_epoch(g.num_edges(), cfg.batch_pairs, cfg.edges_per_subgraph);
    let raw_x = g.features().clone();

    let mut metrics = MetricsLog::default();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        let lr = halving_schedule(cfg.lr, epoch, cfg.lr_half_period);
        let mut sums = [0.0f64; 6]; // disc, gen, reg, ecl, class, total

        for batch_idx in 0..batches {
            let step = |tag: u64| seeds::mix(cfg.seed, &[tag, epoch as u64, batch_idx as u64]);
            let run = (|| -> Result<[f64; 6], String> {
                let err = |e: &dyn std::fmt::Display| e.to_string();
                let subgraphs =
                    sample_subgraphs(&dual, cfg.batch_pairs, cfg.edges_per_subgraph, step(TAG_SUBGRAPHS))
                        .map_err(|e| err(&e))?;
                let batch = make_view_batch(&subgraphs, cfg.sigma, step(TAG_VIEWS))
                    .map_err(|e| err(&e))?;

                let mut tape = Tape::new();
                let (ecl_value, comps) =
                    ecl_loss(&mut tape, &store, &ecl, &batch, &hyper, step(TAG_SGLD))
                        .map_err(|e| err(&e))?;

                // The whole-graph branch: encoder output -> edge probabilities
                // -> relaxed adjacency -> classifier loss, all differentiable.
                let enc = ecl.bind(&mut tape, &store).map_err(|e| err(&e))?;
                let z = full_node_embeddings_on_tape(&mut tape, &enc, &dual).map_err(|e| err(&e))?;
                let probs = edge_probabilities_on_tape(&mut tape, z).map_err(|e| err(&e))?;
                let a_rel =
                    relaxed_adjacency_on_tape(&mut tape, probs, cfg.bernoulli_temp, step(TAG_BERNOULLI))
                        .map_err(|e| err(&e))?;
                let ch = clf.bind(&mut tape, &store).map_err(|e| err(&e))?;
                let x = tape.constant(raw_x.clone()).map_err(|e| err(&e))?;
                let out = classifier::classify(&mut tape, &ch, a_rel, x).map_err(|e| err(&e))?;
                let class_loss =
                    classifier::ce_loss(&mut tape, out.probs, g.labels(), g.train_mask())
                        .map_err(|e| err(&e))?;

                let weighted = tape.scale(class_loss, cfg.mu).map_err(|e| err(&e))?;
                let total = tape.add(ecl_value, weighted).map_err(|e| err(&e))?;

                let class_v = tape.value(class_loss).get(0, 0);
                let total_v = tape.value(total).get(0, 0);
                if !total_v.is_finite() {
                    return Err(format!("non-finite total loss {total_v}"));
                }

                tape.backward(total).map_err(|e| err(&e))?;
                store.zero_grads();
                tape.apply_grads(&mut store).map_err(|e| err(&e))?;
                store.adam_step(lr, 0.9, 0.999, 1e-8).map_err(|e| err(&e))?;

                Ok([
                    comps.discriminative,
                    comps.generative,
                    comps.regularization,
                    comps.total,
                    class_v,
                    total_v,
                ])
            })();
            let values = run.map_err(|message| PipelineError::Diverged {
                epoch,
                batch: batch_idx,
                message,
            })?;
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v;
            }
        }

        let inv = 1.0 / batches as f64;
        let eval = evaluate(&store, &ecl, &clf, g, x_s)?;
        let val_accuracy = eval.val_accuracy.unwrap_or(f64::NAN);
        let test_accuracy = eval.test_accuracy.unwrap_or(f64::NAN);
        metrics.records.push(EpochRecord {
            epoch,
            discriminative: sums[0] * inv,
            generative: sums[1] * inv,
            regularization: sums[2] * inv,
            ecl_total: sums[3] * inv,
            class_loss: sums[4] * inv,
            total: sums[5] * inv,
            val_accuracy,
            test_accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        if cfg.select_best_val {
            let better = match &best {
                Some((best_val, _, _)) => val_accuracy > *best_val,
                None => true,
            };
            if better {
                best = Some((val_accuracy, epoch, store.clone()));
            }
        }
    }

    let (store, selected_epoch) = match best {
        Some((_, epoch, snapshot)) if cfg.select_best_val => (snapshot, Some(epoch)),
        _ => {
            let last = cfg.epochs.checked_sub(1);
            (store, last)
        }
    };

    Ok(TrainedModel {
        store,
        ecl,
        clf,
        shape,
        metrics,
        selected_epoch,
    })
}

/// Evaluation of a trained model on its graph: accuracies on each mask plus
/// refined-graph statistics, all computed from the hard (thresholded)
/// adjacency.
pub struct EvalReport {
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Node-class probabilities (V x C) on the refined graph.
    pub probs: Matrix,
    /// Hard refined adjacency.
    pub refined: RefinedAdjacency,
    /// Edges in the hard refined graph.
    pub refined_edge_count: usize,
    /// Fraction of refined edges joining same-label nodes (labeled pairs
    /// only); `None` when no refined edge connects two labeled nodes.
    pub refined_intra_class_fraction: Option<f64>,
}

fn mask_accuracy(probs: &Matrix, g: &Graph, mask: &[u32]) -> Result<Option<f64>, PipelineError> {
    if mask.is_empty() {
        return Ok(None);
    }
    Ok(Some(classifier::accuracy(probs, g.labels(), mask)?))
}

/// Evaluate `store`'s model on `g`: encode all nodes, threshold edge
/// probabilities at 0.5, classify on the hard refined graph.
pub fn evaluate(
    store: &ParamStore,
    ecl: &EclParams,
    clf: &ClassifierParams,
    g: &Graph,
    x_s: &Matrix,
) -> Result<EvalReport, PipelineError> {
    require(
        g.num_nodes() <= DENSE_NODE_LIMIT,
        "evaluation classifies on a dense refined adjacency and is limited to 5000 nodes",
    )?;
    let dual = build_dual(g, x_s)?;
    let z = full_node_embeddings(store, ecl, &dual)?;
    let probs = edge_probabilities(&z)?;
    // Hard mode ignores the noise seed; pass a fixed one.
    let refined = binarize(&probs, 1.0, RefineMode::Hard, 0)?;
    let class_probs = classify_on(store, clf, &refined.to_dense(), g)?;

    let edges = refined.hard_edges();
    let refined_intra_class_fraction = graph::intra_class_edge_fraction(g.labels(), &edges);
    Ok(EvalReport {
        train_accuracy: mask_accuracy(&class_probs, g, g.train_mask())?,
        val_accuracy: mask_accuracy(&class_probs, g, g.val_mask())?,
        test_accuracy: mask_accuracy(&class_probs, g, g.test_mask())?,
        probs: class_probs,
        refined_edge_count: edges.len(),
        refined,
        refined_intra_class_fraction,
    })
}

/// Forward the classifier over an explicit adjacency (no gradients), giving
/// class probabilities per node.
pub fn classify_on(
    store: &ParamStore,
    clf: &ClassifierParams,
    adjacency: &Matrix,
    g: &Graph,
) -> Result<Matrix, PipelineError> {
    let mut tape = Tape::new();
    let h = clf.bind_frozen(&mut tape, store)?;
    let a = tape.constant(adjacency.clone())?;
    let x = tape.constant(g.features().clone())?;
    let out = classifier::classify(&mut tape, &h, a, x)?;
    Ok(tape.value(out.probs).clone())
}

fn raw_adjacency(g: &Graph) -> Matrix {
    let v = g.num_nodes();
    let mut a = Matrix::zeros(v, v);
    for &(i, j) in g.edges() {
        a.set(i as usize, j as usize, 1.0);
        a.set(j as usize, i as usize, 1.0);
    }
    a
}

/// A plain GCN trained on the unrefined graph: the paired control for every
/// experiment. Matches the joint run's optimizer, schedule, step count, and
/// best-validation selection; only the adjacency differs.
pub struct GcnControl {
    pub store: ParamStore,
    pub clf: ClassifierParams,
    pub selected_epoch: Option<usize>,
}

pub fn train_gcn_control(g: &Graph, cfg: &TrainConfig) -> Result<GcnControl, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    require(!g.train_mask().is_empty(), "training mask is empty")?;
    require(!g.val_mask().is_empty(), "validation mask is empty")?;
    require(g.num_classes() > 0, "graph has no labeled nodes")?;
    require(
        g.num_nodes() <= DENSE_NODE_LIMIT,
        "the dense GCN control is limited to 5000 nodes",
    )?;

    let mut store = ParamStore::new();
    let clf = ClassifierParams::init(
        &mut store,
        "clf",
        g.features().cols(),
        cfg.classifier_width,
        g.num_classes(),
        seeds::child(cfg.seed, TAG_CLF_INIT),
    )?;
    let a = raw_adjacency(g);
    let batches = batches_per_epoch(g.num_edges(), cfg.batch_pairs, cfg.edges_per_subgraph);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        let lr = halving_schedule(cfg.lr, epoch, cfg.lr_half_period);
        // Same optimizer-step count per epoch as the joint run, so the
        // comparison is step-for-step fair.
        for _ in 0..batches {
            let mut tape = Tape::new();
            let h = clf.bind(&mut tape, &store)?;
            let av = tape.constant(a.clone())?;
            let x = tape.constant(g.features().clone())?;
            let out = classifier::classify(&mut tape, &h, av, x)?;
            let loss = classifier::ce_loss(&mut tape, out.probs, g.labels(), g.train_mask())?;
            tape.backward(loss)?;
            store.zero_grads();
            tape.apply_grads(&mut store)?;
            store.adam_step(lr, 0.9, 0.999, 1e-8)?;
        }
        if cfg.select_best_val {
            let probs = classify_on(&store, &clf, &a, g)?;
            let val = classifier::accuracy(&probs, g.labels(), g.val_mask())?;
            let better = best.as_ref().is_none_or(|(b, _, _)| val > *b);
            if better {
                best = Some((val, epoch, store.clone()));
            }
        }
    }

    let (store, selected_epoch) = match best {
        Some((_, epoch, snapshot)) if cfg.select_best_val => (snapshot, Some(epoch)),
        _ => {
            let last = cfg.epochs.checked_sub(1);
            (store, last)
        }
    };
    Ok(GcnControl {
        store,
        clf,
        selected_epoch,
    })
}

/// Accuracy of a GCN control on each mask (raw adjacency).
pub fn evaluate_gcn_control(
    control: &GcnControl,
    g: &Graph,
) -> Result<(Option<f64>, Option<f64>, Option<f64>), PipelineError> {
    let probs = classify_on(&control.store, &control.clf, &raw_adjacency(g), g)?;
    Ok((
        mask_accuracy(&probs, g, g.train_mask())?,
        mask_accuracy(&probs, g, g.val_mask())?,
        mask_accuracy(&probs, g, g.test_mask())?,
    ))
}

/// Which direction a robustness sweep perturbs edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbMode {
    Add,
    Remove,
}

impl PerturbMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbMode::Add => "add",
            PerturbMode::Remove => "remove",
        }
    }
}

/// One completed run inside a robustness sweep.
#[derive(Clone, Copy, Debug)]
pub struct RobustnessPoint {
    pub mode: PerturbMode,
    pub ratio: f64,
    pub seed: u64,
    pub ecl_test_accuracy: f64,
    pub gcn_test_accuracy: f64,
}

/// All runs of a robustness sweep, with CSV rendering.
#[derive(Debug)]
pub struct RobustnessSweep {
    pub points: Vec<RobustnessPoint>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RobustnessSweep {
    /// Rows `mode,ratio,seed,ecl_test_accuracy,gcn_test_accuracy`, then one
    /// `mean` and one `std` row per (mode, ratio) in the seed column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,ratio,seed,ecl_test_accuracy,gcn_test_accuracy\n");
        let mut groups: Vec<(PerturbMode, f64)> = Vec::new();
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.mode.as_str(),
                fmt_f64(p.ratio),
                p.seed,
                fmt_f64(p.ecl_test_accuracy),
                fmt_f64(p.gcn_test_accuracy),
            ));
            if !groups.iter().any(|&(m, r)| m == p.mode && r == p.ratio) {
                groups.push((p.mode, p.ratio));
            }
        }
        for (mode, ratio) in groups {
            let ecl: Vec<f64> = self
                .points
                .iter()
                .filter(|p| p.mode == mode && p.ratio == ratio)
                .map(|p| p.ecl_test_accuracy)
                .collect();
            let gcn: Vec<f64> = self
                .points
                .iter()
                .filter(|p| p.mode == mode && p.ratio == ratio)
                .map(|p| p.gcn_test_accuracy)
                .collect();
            let (em, es) = mean_std(&ecl);
            let (gm, gs) = mean_std(&gcn);
            out.push_str(&format!(
                "{},{},mean,{},{}\n",
                mode.as_str(),
                fmt_f64(ratio),
                fmt_f64(em),
                fmt_f64(gm)
            ));
            out.push_str(&format!(
                "{},{},std,{},{}\n",
                mode.as_str(),
                fmt_f64(ratio),
                fmt_f64(es),
                fmt_f64(gs)
            ));
        }
        out
    }
}

fn test_accuracy_required(report: &EvalReport) -> Result<f64, PipelineError> {
    report
        .test_accuracy
        .ok_or_else(|| PipelineError::Input("test mask is empty".to_string()))
}

/// Train on perturbed copies of `g` across `ratios` x `seeds` and compare
/// against the paired GCN control on the same perturbed graph.
///
/// The structural embedding is recomputed per perturbed graph, since it is a
/// function of the (corrupted) topology. Ratios are capped at 0.8; beyond
/// that a remove-sweep leaves too little structure to embed.
pub fn robustness_sweep(
    g: &Graph,
    cfg: &TrainConfig,
    mode: PerturbMode,
    ratios: &[f64],
    seeds_list: &[u64],
) -> Result<RobustnessSweep, PipelineError> {
    require(!ratios.is_empty(), "no perturbation ratios given")?;
    require(!seeds_list.is_empty(), "no seeds given")?;
    for &r in ratios {
        if !(0.0..=0.8).contains(&r) {
            return Err(PipelineError::Config(format!(
                "perturbation ratio must be in [0, 0.8], got {r}"
            )));
        }
    }
    let mut points = Vec::new();
    for &ratio in ratios {
        for &seed in seeds_list {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = seed;
            let (add, remove) = match mode {
                PerturbMode::Add => (ratio, 0.0),
                PerturbMode::Remove => (0.0, ratio),
            };
            let perturbed = perturb_edges(g, add, remove, seeds::child(seed, TAG_PERTURB))?;
            let x_s = structural_embedding(&perturbed, &run_cfg.deepwalk, seed)?;
            let model = train(&perturbed, &x_s, &run_cfg)?;
            let report = evaluate(&model.store, &model.ecl, &model.clf, &perturbed, &x_s)?;
            let control = train_gcn_control(&perturbed, &run_cfg)?;
            let (_, _, gcn_test) = evaluate_gcn_control(&control, &perturbed)?;
            points.push(RobustnessPoint {
                mode,
                ratio,
                seed,
                ecl_test_accuracy: test_accuracy_required(&report)?,
                gcn_test_accuracy: gcn_test
                    .ok_or_else(|| PipelineError::Input("test mask is empty".to_string()))?,
            });
        }
    }
    Ok(RobustnessSweep { points })
}

/// One Langevin-depth setting in an SGLD sweep.
#[derive(Clone, Copy, Debug)]
pub struct SgldPoint {
    pub k_steps: usize,
    pub test_accuracy: f64,
    pub train_wall_time_s: f64,
}

/// Train once per Langevin depth in `k_values` and record test accuracy and
/// wall time; everything else in `cfg` is held fixed.
pub fn sgld_sweep(
    g: &Graph,
    x_s: &Matrix,
    cfg: &TrainConfig,
    k_values: &[usize],
) -> Result<Vec<SgldPoint>, PipelineError> {
    require(!k_values.is_empty(), "no k values given")?;
    let mut points = Vec::new();
    for &k in k_values {
        let mut run_cfg = cfg.clone();
        run_cfg.k_steps = k;
        let start = Instant::now();
        let model = train(g, x_s, &run_cfg)?;
        let train_wall_time_s = start.elapsed().as_secs_f64();
        let report = evaluate(&model.store, &model.ecl, &model.clf, g, x_s)?;
        points.push(SgldPoint {
            k_steps: k,
            test_accuracy: test_accuracy_required(&report)?,
            train_wall_time_s,
        });
    }
    Ok(points)
}

/// CSV for an SGLD sweep: `k_steps,test_accuracy,train_wall_time_s`.
pub fn sgld_sweep_csv(points: &[SgldPoint]) -> String {
    let mut out = String::from("k_steps,test_accuracy,train_wall_time_s\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.k_steps,
            fmt_f64(p.test_accuracy),
            fmt_f64(p.train_wall_time_s)
        ));
    }
    out
}

/// One run of a label-ratio sweep.
#[derive(Clone, Copy, Debug)]
pub struct RatioPoint {
    pub train_ratio: f64,
    pub seed: u64,
    pub ecl_test_accuracy: f64,
    pub gcn_test_accuracy: f64,
}

/// Label-efficiency protocol: rebuild the split at each training-label ratio
/// (per-class apportionment; fixed validation/test fractions), then train
/// the joint model and the GCN control on identical splits.
pub fn ratio_sweep(
    g: &Graph,
    x_s: &Matrix,
    cfg: &TrainConfig,
    ratios: &[f64],
    seeds_list: &[u64],
    val_fraction: f64,
    test_fraction: f64,
) -> Result<Vec<RatioPoint>, PipelineError> {
    require(!ratios.is_empty(), "no label ratios given")?;
    require(!seeds_list.is_empty(), "no seeds given")?;
    let mut points = Vec::new();
    for &ratio in ratios {
        for &seed in seeds_list {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = seed;
            let spec = SplitSpec::Ratio {
                train_ratio: ratio,
                val_fraction,
                test_fraction,
                seed: seeds::child(seed, TAG_SPLIT),
            };
            let (split_g, _report) = make_split(g, &spec)?;
            let model = train(&split_g, x_s, &run_cfg)?;
            let report = evaluate(&model.store, &model.ecl, &model.clf, &split_g, x_s)?;
            let control = train_gcn_control(&split_g, &run_cfg)?;
            let (_, _, gcn_test) = evaluate_gcn_control(&control, &split_g)?;
            points.push(RatioPoint {
                train_ratio: ratio,
                seed,
                ecl_test_accuracy: test_accuracy_required(&report)?,
                gcn_test_accuracy: gcn_test
                    .ok_or_else(|| PipelineError::Input("test mask is empty".to_string()))?,
            });
        }
    }
    Ok(points)
}

/// CSV for a label-ratio sweep, with per-ratio mean/std rows appended as in
/// [`RobustnessSweep::to_csv`].
pub fn ratio_sweep_csv(points: &[RatioPoint]) -> String {
    let mut out = String::from("train_ratio,seed,ecl_test_accuracy,gcn_test_accuracy\n");
    let mut ratios: Vec<f64> = Vec::new();
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.train_ratio),
            p.seed,
            fmt_f64(p.ecl_test_accuracy),
            fmt_f64(p.gcn_test_accuracy)
        ));
        if !ratios.contains(&p.train_ratio) {
            ratios.push(p.train_ratio);
        }
    }
    for ratio in ratios {
        let ecl: Vec<f64> = points
            .iter()
            .filter(|p| p.train_ratio == ratio)
            .map(|p| p.ecl_test_accuracy)
            .collect();
        let gcn: Vec<f64> = points
            .iter()
            .filter(|p| p.train_ratio == ratio)
            .map(|p| p.gcn_test_accuracy)
            .collect();
        let (em, es) = mean_std(&ecl);
        let (gm, gs) = mean_std(&gcn);
        out.push_str(&format!(
            "{},mean,{},{}\n{},std,{},{}\n",
            fmt_f64(ratio),
            fmt_f64(em),
            fmt_f64(gm),
            fmt_f64(ratio),
            fmt_f64(es),
            fmt_f64(gs)
        ));
    }
    out
}
