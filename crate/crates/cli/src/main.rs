//! Command-line interface: dataset generation and perturbation, structural
//! embedding caches, joint training, evaluation, sweeps, and heatmaps.
//!
//! Exit codes: 0 on success, 1 on usage errors (unknown flags, malformed
//! values), 2 on runtime failures (missing files, divergence, bad data).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecl_gsr_core::graph::{make_split, perturb_edges, sbm_generate, Graph, SplitSpec};
use ecl_gsr_core::matrix::Matrix;
use ecl_gsr_core::refine::{binarize, edge_probabilities, full_node_embeddings, EdgeProbs, RefineMode};
use ecl_gsr_core::seeds;

use ecl_gsr::checkpoint::Checkpoint;
use ecl_gsr::config::TrainConfig;
use ecl_gsr::dataset;
use ecl_gsr::heatmap::{class_grouped_order, emit_heatmap};
use ecl_gsr::pipeline::{
    evaluate, ratio_sweep, ratio_sweep_csv, robustness_sweep, sgld_sweep, sgld_sweep_csv,
    structural_embedding, train, PerturbMode,
};

#[derive(Parser)]
#[command(
    name = "ecl-gsr",
    version,
    about = "Energy-based contrastive learning for graph structure refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Hyperparameter source shared by the training-style subcommands: an
/// optional JSON config file plus individual flag overrides.
#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Langevin steps per batch.
    #[arg(long)]
    k_steps: Option<usize>,
    /// Subgraph pairs per batch (N).
    #[arg(long)]
    batch_pairs: Option<usize>,
    /// Edges per sampled subgraph (m).
    #[arg(long)]
    edges_per_subgraph: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Gaussian view-augmentation std.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    bernoulli_temp: Option<f64>,
    #[arg(long)]
    classifier_width: Option<usize>,
    /// Keep the final epoch instead of the best-validation checkpoint.
    #[arg(long)]
    final_epoch: bool,
    /// Add a wall-time column to metrics.csv (breaks byte-identical logs).
    #[arg(long)]
    log_wall_time: bool,
}

impl ConfigArgs {
    fn build(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            seed, epochs, alpha, beta, mu, tau, lambda, k_steps, batch_pairs,
            edges_per_subgraph, lr, sigma, bernoulli_temp, classifier_width
        );
        if self.final_epoch {
            cfg.select_best_val = false;
        }
        if self.log_wall_time {
            cfg.log_wall_time = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Add,
    Remove,
}

impl From<ModeArg> for PerturbMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Add => PerturbMode::Add,
            ModeArg::Remove => PerturbMode::Remove,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the random-walk structural embedding and cache it as x_s.csv.
    Embed {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overwrite an existing cache.
        #[arg(long)]
        force: bool,
    },
    /// Jointly train the energy model and classifier; write metrics.csv,
    /// model.json, refined_edges.tsv, and predictions.tsv.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: accuracies plus refined-graph statistics.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed for recomputing the structural embedding when no cache
        /// exists (default: the seed stored in the checkpoint).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write predictions.tsv and refined_edges.tsv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a randomly perturbed copy of a dataset.
    Perturb {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of edges to add.
        #[arg(long, default_value_t = 0.0)]
        add: f64,
        /// Fraction of edges to remove.
        #[arg(long, default_value_t = 0.0)]
        remove: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a stochastic-block-model dataset (all four files).
    Sbm {
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 50)]
        per_block: usize,
        #[arg(long, default_value_t = 0.1)]
        p_intra: f64,
        #[arg(long, default_value_t = 0.02)]
        p_inter: f64,
        #[arg(long, default_value_t = 16)]
        feat_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        feat_noise: f64,
        /// Fraction of labeled nodes used for training.
        #[arg(long, default_value_t = 0.1)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on perturbed graphs across ratios x seeds, with a paired
    /// plain-GCN control.
    SweepRobustness {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Perturbation ratios in [0, 0.8], comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        ratios: Vec<f64>,
        /// Run seeds, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Write the CSV here (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per Langevin depth and report accuracy and wall time.
    SweepSgld {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Langevin depths, comma-separated (e.g. 0,1,3,5).
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild splits at several training-label ratios and train at each.
    SweepRatio {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Training-label ratios, comma-separated (e.g. 0.01,0.03,0.05,0.10).
        #[arg(long, value_delimiter = ',', required = true)]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the refined adjacency, rows/columns grouped by class, as a
    /// PGM image plus exact CSV.
    Heatmap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed for recomputing the structural embedding when no cache
        /// exists (default: the seed stored in the checkpoint).
        #[arg(long)]
        seed: Option<u64>,
        /// Threshold edge probabilities at 0.5 instead of rendering them.
        #[arg(long)]
        hard: bool,
        /// Output prefix; writes PREFIX.pgm and PREFIX.csv.
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

fn load_dataset(dir: &Path) -> anyhow::Result<Graph> {
    let (g, report) = dataset::load_graph(dir)?;
    if report.self_loops_dropped > 0 {
        eprintln!(
            "warning: dropped {} self-loop edge line(s) in {}",
            report.self_loops_dropped,
            dir.join("edges.tsv").display()
        );
    }
    if report.duplicates_merged > 0 {
        eprintln!(
            "warning: merged {} duplicate edge line(s) in {}",
            report.duplicates_merged,
            dir.join("edges.tsv").display()
        );
    }
    Ok(g)
}

/// Cached `x_s.csv` if present, otherwise a fresh structural embedding
/// (not written back; `embed` owns the cache).
fn obtain_embedding(
    dir: &Path,
    g: &Graph,
    dw: &ecl_gsr::config::DeepWalkConfig,
    seed: u64,
) -> anyhow::Result<Matrix> {
    if let Some(cached) = dataset::load_cached_embedding(dir, g.num_nodes())? {
        return Ok(cached);
    }
    Ok(structural_embedding(g, dw, seed)?)
}

fn write_or_print(csv: &str, out: Option<&Path>) -> anyhow::Result<()> {
    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(path, csv).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn fmt_opt(acc: Option<f64>) -> String {
    match acc {
        Some(a) => format!("{a:.4}"),
        None => "n/a (empty mask)".to_string(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Embed { data, cfg, force } => {
            let cfg = cfg.build()?;
            let g = load_dataset(&data)?;
            let cache = data.join("x_s.csv");
            if cache.exists() && !force {
                anyhow::bail!("{} already exists; pass --force to overwrite", cache.display());
            }
            let x_s = structural_embedding(&g, &cfg.deepwalk, cfg.seed)?;
            dataset::save_cached_embedding(&data, &x_s)?;
            println!(
                "wrote {} ({} nodes x {} dims)",
                cache.display(),
                x_s.rows(),
                x_s.cols()
            );
        }
        Command::Train { data, cfg, out } => {
            let cfg = cfg.build()?;
            let g = load_dataset(&data)?;
            let x_s = obtain_embedding(&data, &g, &cfg.deepwalk, cfg.seed)?;
            let model = train(&g, &x_s, &cfg)?;
            let report = evaluate(&model.store, &model.ecl, &model.clf, &g, &x_s)?;

            std::fs::create_dir_all(&out)
                .map_err(|e| anyhow::anyhow!("{}: {e}", out.display()))?;
            let csv = model.metrics.to_csv(cfg.log_wall_time);
            std::fs::write(out.join("metrics.csv"), &csv)
                .map_err(|e| anyhow::anyhow!("{}: {e}", out.join("metrics.csv").display()))?;
            dataset::export_refined_edges(&out.join("refined_edges.tsv"), &report.refined)?;
            dataset::export_predictions(&out.join("predictions.tsv"), &report.probs)?;
            let selected = model.selected_epoch;
            let ckpt = model.into_checkpoint(cfg);
            ckpt.save(&out.join("model.json"))?;

            match selected {
                Some(e) => println!("selected epoch: {e}"),
                None => println!("selected epoch: none (0 epochs trained)"),
            }
            println!("train accuracy: {}", fmt_opt(report.train_accuracy));
            println!("val accuracy:   {}", fmt_opt(report.val_accuracy));
            println!("test accuracy:  {}", fmt_opt(report.test_accuracy));
            println!("refined edges:  {}", report.refined_edge_count);
            println!(
                "refined intra-class fraction: {}",
                fmt_opt(report.refined_intra_class_fraction)
            );
            println!("wrote {}", out.join("metrics.csv").display());
            println!("wrote {}", out.join("model.json").display());
        }
        Command::Eval {
            data,
            checkpoint,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let g = load_dataset(&data)?;
            let embed_seed = seed.unwrap_or(ckpt.config.seed);
            let x_s = obtain_embedding(&data, &g, &ckpt.config.deepwalk, embed_seed)?;
            let ecl = ckpt.ecl_params();
            let clf = ckpt.classifier_params();
            let report = evaluate(&ckpt.store, &ecl, &clf, &g, &x_s)?;
            println!("train accuracy: {}", fmt_opt(report.train_accuracy));
            println!("val accuracy:   {}", fmt_opt(report.val_accuracy));
            println!("test accuracy:  {}", fmt_opt(report.test_accuracy));
            println!("refined edges:  {}", report.refined_edge_count);
            println!(
                "refined intra-class fraction: {}",
                fmt_opt(report.refined_intra_class_fraction)
            );
            if let Some(out) = out {
                std::fs::create_dir_all(&out)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", out.display()))?;
                dataset::export_refined_edges(&out.join("refined_edges.tsv"), &report.refined)?;
                dataset::export_predictions(&out.join("predictions.tsv"), &report.probs)?;
                println!("wrote {}", out.join("predictions.tsv").display());
            }
        }
        Command::Perturb {
            data,
            out,
            add,
            remove,
            seed,
        } => {
            let g = load_dataset(&data)?;
            let perturbed = perturb_edges(&g, add, remove, seed)?;
            dataset::save_graph(&out, &perturbed)?;
            println!(
                "{} edges -> {} edges; wrote {}",
                g.num_edges(),
                perturbed.num_edges(),
                out.display()
            );
        }
        Command::Sbm {
            blocks,
            per_block,
            p_intra,
            p_inter,
            feat_dim,
            feat_noise,
            train_ratio,
            val_fraction,
            test_fraction,
            seed,
            out,
        } => {
            let g = sbm_generate(
                blocks,
                per_block,
                p_intra,
                p_inter,
                feat_dim,
                feat_noise,
                seeds::child(seed, 0),
            )?;
            let (g, report) = make_split(
                &g,
                &SplitSpec::Ratio {
                    train_ratio,
                    val_fraction,
                    test_fraction,
                    seed: seeds::child(seed, 1),
                },
            )?;
            if !report.classes_without_train.is_empty() {
                eprintln!(
                    "warning: classes without training nodes: {:?}",
                    report.classes_without_train
                );
            }
            dataset::save_graph(&out, &g)?;
            println!(
                "wrote {} ({} nodes, {} edges, {} classes, split {}/{}/{})",
                out.display(),
                g.num_nodes(),
                g.num_edges(),
                g.num_classes(),
                g.train_mask().len(),
                g.val_mask().len(),
                g.test_mask().len()
            );
        }
        Command::SweepRobustness {
            data,
            cfg,
            mode,
            ratios,
            seeds,
            out,
        } => {
            let cfg = cfg.build()?;
            let g = load_dataset(&data)?;
            let sweep = robustness_sweep(&g, &cfg, mode.into(), &ratios, &seeds)?;
            write_or_print(&sweep.to_csv(), out.as_deref())?;
        }
        Command::SweepSgld { data, cfg, k, out } => {
            let cfg = cfg.build()?;
            let g = load_dataset(&data)?;
            let x_s = obtain_embedding(&data, &g, &cfg.deepwalk, cfg.seed)?;
            let points = sgld_sweep(&g, &x_s, &cfg, &k)?;
            write_or_print(&sgld_sweep_csv(&points), out.as_deref())?;
        }
        Command::SweepRatio {
            data,
            cfg,
            ratios,
            seeds,
            val_fraction,
            test_fraction,
            out,
        } => {
            let cfg = cfg.build()?;
            let g = load_dataset(&data)?;
            let x_s = obtain_embedding(&data, &g, &cfg.deepwalk, cfg.seed)?;
            let points = ratio_sweep(&g, &x_s, &cfg, &ratios, &seeds, val_fraction, test_fraction)?;
            write_or_print(&ratio_sweep_csv(&points), out.as_deref())?;
        }
        Command::Heatmap {
            data,
            checkpoint,
            seed,
            hard,
            out_prefix,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let g = load_dataset(&data)?;
            let embed_seed = seed.unwrap_or(ckpt.config.seed);
            let x_s = obtain_embedding(&data, &g, &ckpt.config.deepwalk, embed_seed)?;
            let dual = ecl_gsr_core::embed::build_dual(&g, &x_s)?;
            let ecl = ckpt.ecl_params();
            let z = full_node_embeddings(&ckpt.store, &ecl, &dual)?;
            let probs = edge_probabilities(&z)?;
            let matrix = if hard {
                binarize(&probs, 1.0, RefineMode::Hard, 0)?.to_dense()
            } else {
                match probs {
                    EdgeProbs::Dense(m) => m,
                    EdgeProbs::Sparse { .. } => {
                        anyhow::bail!("heatmaps need the dense all-pairs probability matrix")
                    }
                }
            };
            let order = class_grouped_order(g.labels());
            let pgm = out_prefix.with_extension("pgm");
            let csv = out_prefix.with_extension("csv");
            emit_heatmap(&matrix, &order, &pgm, &csv)?;
            println!("wrote {} and {}", pgm.display(), csv.display());

            // Companion statistic: mean weight on intra- vs inter-class
            // pairs, over labeled nodes.
            let labels = g.labels();
            let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
            for i in 0..g.num_nodes() {
                for j in (i + 1)..g.num_nodes() {
                    if let (Some(a), Some(b)) = (labels[i], labels[j]) {
                        let w = matrix.get(i, j);
                        if a == b {
                            intra = (intra.0 + w, intra.1 + 1);
                        } else {
                            inter = (inter.0 + w, inter.1 + 1);
                        }
                    }
                }
            }
            if intra.1 > 0 && inter.1 > 0 {
                println!(
                    "mean weight: intra-class {:.4}, inter-class {:.4}",
                    intra.0 / intra.1 as f64,
                    inter.0 / inter.1 as f64
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
