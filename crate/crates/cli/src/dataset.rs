//! On-disk dataset format: loading, saving, embedding caches, and result
//! exports.
//!
//! A dataset directory holds four files:
//!
//! - `edges.tsv` — one `src<TAB>dst` per line, 0-indexed decimal integers;
//! - `features.csv` — one row per node, comma-separated decimal floats
//!   (the row count defines the node count);
//! - `labels.tsv` — `node<TAB>label` lines; nodes may be unlabeled;
//! - `split.json` — `{"train":[ids],"val":[ids],"test":[ids]}`.
//!
//! All files are UTF-8 with LF line endings. Parse errors carry the file and
//! 1-based line they came from. Duplicate and reversed duplicate edges are
//! merged and self-loops dropped; [`LoadReport`] counts both so callers can
//! warn about dirty inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ecl_gsr_core::graph::Graph;
use ecl_gsr_core::matrix::Matrix;
use ecl_gsr_core::refine::RefinedAdjacency;
use serde::{Deserialize, Serialize};

/// What the loader cleaned up while reading `edges.tsv`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Self-loop lines dropped.
    pub self_loops_dropped: usize,
    /// Duplicate (including reversed) edge lines merged away.
    pub duplicates_merged: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", file.display())]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", file.display())]
    File { file: PathBuf, message: String },
    #[error("inconsistent dataset: {0}")]
    Graph(#[from] ecl_gsr_core::graph::GraphError),
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        file: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines of `text` with their 1-based line numbers. A trailing
/// newline does not produce a phantom last line.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_index(path: &Path, line: usize, token: &str, what: &str) -> Result<u32, DataError> {
    token
        .trim()
        .parse::<u32>()
        .map_err(|_| parse_err(path, line, format!("{what}: non-numeric token {token:?}")))
}

fn parse_edges(path: &Path, text: &str) -> Result<(Vec<(u32, u32)>, LoadReport), DataError> {
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut report = LoadReport::default();
    for (lineno, line) in numbered_lines(text) {
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(
                path,
                lineno,
                format!("expected \"src<TAB>dst\", got {line:?}"),
            ));
        };
        let src = parse_index(path, lineno, a, "src")?;
        let dst = parse_index(path, lineno, b, "dst")?;
        if src == dst {
            report.self_loops_dropped += 1;
            continue;
        }
        edges.push((src.min(dst), src.max(dst)));
    }
    edges.sort_unstable();
    let before = edges.len();
    edges.dedup();
    report.duplicates_merged = before - edges.len();
    Ok((edges, report))
}

fn parse_features(path: &Path, text: &str) -> Result<Matrix, DataError> {
    let mut data: Vec<f64> = Vec::new();
    let mut num_rows = 0usize;
    let mut width: Option<usize> = None;
    for (lineno, line) in numbered_lines(text) {
        let before = data.len();
        for token in line.split(',') {
            let v: f64 = token.trim().parse().map_err(|_| {
                parse_err(path, lineno, format!("non-numeric token {token:?}"))
            })?;
            data.push(v);
        }
        let row_len = data.len() - before;
        if let Some(w) = width {
            if row_len != w {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("ragged row: expected {w} values, got {row_len}"),
                ));
            }
        } else {
            width = Some(row_len);
        }
        num_rows += 1;
    }
    if num_rows == 0 {
        return Err(DataError::File {
            file: path.to_path_buf(),
            message: "no feature rows".into(),
        });
    }
    Ok(Matrix::from_vec(num_rows, width.unwrap_or(0), data))
}

fn parse_labels(
    path: &Path,
    text: &str,
    num_nodes: usize,
) -> Result<Vec<Option<u32>>, DataError> {
    let mut labels = vec![None; num_nodes];
    for (lineno, line) in numbered_lines(text) {
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(
                path,
                lineno,
                format!("expected \"node<TAB>label\", got {line:?}"),
            ));
        };
        let node = parse_index(path, lineno, a, "node")?;
        let label = parse_index(path, lineno, b, "label")?;
        if node as usize >= num_nodes {
            return Err(parse_err(
                path,
                lineno,
                format!("node index {node} out of range for {num_nodes} nodes"),
            ));
        }
        if labels[node as usize].is_some() {
            return Err(parse_err(path, lineno, format!("node {node} labeled twice")));
        }
        labels[node as usize] = Some(label);
    }
    Ok(labels)
}

#[derive(Serialize, Deserialize, Default)]
struct SplitFile {
    train: Vec<u32>,
    val: Vec<u32>,
    test: Vec<u32>,
}

/// Load a dataset directory into a [`Graph`].
///
/// All four files must exist. Edge endpoints and split ids are validated
/// against the node count implied by `features.csv`.
pub fn load_graph(dir: &Path) -> Result<(Graph, LoadReport), DataError> {
    let edges_path = dir.join("edges.tsv");
    let features_path = dir.join("features.csv");
    let labels_path = dir.join("labels.tsv");
    let split_path = dir.join("split.json");

    let features = parse_features(&features_path, &read_text(&features_path)?)?;
    let num_nodes = features.rows();
    let (edges, report) = parse_edges(&edges_path, &read_text(&edges_path)?)?;
    for &(a, b) in &edges {
        if a.max(b) as usize >= num_nodes {
            return Err(DataError::File {
                file: edges_path.clone(),
                message: format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes (node count comes from features.csv)"
                ),
            });
        }
    }
    let labels = parse_labels(&labels_path, &read_text(&labels_path)?, num_nodes)?;
    let split: SplitFile =
        serde_json::from_str(&read_text(&split_path)?).map_err(|e| DataError::Parse {
            file: split_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;

    let graph = Graph::new(
        num_nodes,
        edges,
        features,
        labels,
        split.train,
        split.val,
        split.test,
    )?;
    Ok((graph, report))
}

/// Render one float the way every writer here does: shortest decimal string
/// that parses back to the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io {
        file: path.to_path_buf(),
        source,
    })
}

/// Write `g` as a dataset directory (the inverse of [`load_graph`]).
///
/// Edge lists round-trip bit-exactly; features are rendered as
/// shortest-round-trip decimals, so they reload to identical values.
pub fn save_graph(dir: &Path, g: &Graph) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        file: dir.to_path_buf(),
        source,
    })?;

    let mut edges = String::new();
    for &(a, b) in g.edges() {
        writeln!(edges, "{a}\t{b}").expect("string write");
    }
    write_text(&dir.join("edges.tsv"), &edges)?;

    let mut feats = String::new();
    let x = g.features();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            if c > 0 {
                feats.push(',');
            }
            feats.push_str(&fmt_f64(x.get(r, c)));
        }
        feats.push('\n');
    }
    write_text(&dir.join("features.csv"), &feats)?;

    let mut labels = String::new();
    for (node, label) in g.labels().iter().enumerate() {
        if let Some(l) = label {
            writeln!(labels, "{node}\t{l}").expect("string write");
        }
    }
    write_text(&dir.join("labels.tsv"), &labels)?;

    let split = SplitFile {
        train: g.train_mask().to_vec(),
        val: g.val_mask().to_vec(),
        test: g.test_mask().to_vec(),
    };
    let json = serde_json::to_string_pretty(&split).expect("split serializes");
    write_text(&dir.join("split.json"), &format!("{json}\n"))?;
    Ok(())
}

/// Matrix → CSV with one row per line (features.csv convention).
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let mut out = String::new();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m.get(r, c)));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// CSV → Matrix (features.csv convention).
pub fn read_matrix_csv(path: &Path) -> Result<Matrix, DataError> {
    parse_features(path, &read_text(path)?)
}

/// Load the cached structural embedding if `x_s.csv` exists in `dir` and has
/// the right number of rows; `Ok(None)` means "compute it yourself".
pub fn load_cached_embedding(dir: &Path, num_nodes: usize) -> Result<Option<Matrix>, DataError> {
    let path = dir.join("x_s.csv");
    if !path.exists() {
        return Ok(None);
    }
    let m = read_matrix_csv(&path)?;
    if m.rows() != num_nodes {
        return Err(DataError::File {
            file: path,
            message: format!(
                "cached embedding has {} rows but the graph has {num_nodes} nodes",
                m.rows()
            ),
        });
    }
    Ok(Some(m))
}

/// Cache the structural embedding as `dir/x_s.csv`.
pub fn save_cached_embedding(dir: &Path, x_s: &Matrix) -> Result<(), DataError> {
    write_matrix_csv(&dir.join("x_s.csv"), x_s)
}

/// Export a refined adjacency as `src<TAB>dst<TAB>weight` lines, one per
/// unordered pair with nonzero weight, sorted by (src, dst).
pub fn export_refined_edges(path: &Path, a: &RefinedAdjacency) -> Result<(), DataError> {
    let mut rows = a.edge_weights();
    rows.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut out = String::new();
    for (src, dst, w) in rows {
        if w != 0.0 {
            writeln!(out, "{src}\t{dst}\t{}", fmt_f64(w)).expect("string write");
        }
    }
    write_text(path, &out)
}

/// Export per-node predictions as `node<TAB>predicted_label<TAB>max_prob`.
///
/// `probs` has one row per node; the predicted label is the argmax with ties
/// going to the lower class index.
pub fn export_predictions(path: &Path, probs: &Matrix) -> Result<(), DataError> {
    let mut out = String::new();
    for node in 0..probs.rows() {
        let row: Vec<f64> = (0..probs.cols()).map(|c| probs.get(node, c)).collect();
        let label = ecl_gsr_core::classifier::argmax(&row);
        writeln!(out, "{node}\t{label}\t{}", fmt_f64(row[label as usize])).expect("string write");
    }
    write_text(path, &out)
}
