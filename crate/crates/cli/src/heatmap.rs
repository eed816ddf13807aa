//! Adjacency heatmaps: reorder a (possibly weighted) adjacency by a node
//! permutation — usually class-grouped, so block structure is visible — and
//! write it as a binary PGM image plus an exact-value CSV.

use std::fs;
use std::path::Path;

use ecl_gsr_core::matrix::Matrix;

use crate::dataset::fmt_f64;

#[derive(Debug, thiserror::Error)]
pub enum HeatmapError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("node order must be a permutation of 0..{nodes}: {message}")]
    BadOrder { nodes: usize, message: String },
    #[error("{}: {source}", file.display())]
    Io {
        file: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Node permutation that groups nodes by label (ascending; ties by node id;
/// unlabeled nodes last). Rendering an adjacency in this order makes
/// intra-class blocks sit on the diagonal.
pub fn class_grouped_order(labels: &[Option<u32>]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..labels.len() as u32).collect();
    order.sort_by_key(|&v| match labels[v as usize] {
        Some(l) => (0u8, l, v),
        None => (1u8, 0, v),
    });
    order
}

fn validate_order(nodes: usize, order: &[u32]) -> Result<(), HeatmapError> {
    if order.len() != nodes {
        return Err(HeatmapError::BadOrder {
            nodes,
            message: format!("got {} indices", order.len()),
        });
    }
    let mut seen = vec![false; nodes];
    for &v in order {
        if (v as usize) >= nodes {
            return Err(HeatmapError::BadOrder {
                nodes,
                message: format!("index {v} out of range"),
            });
        }
        if seen[v as usize] {
            return Err(HeatmapError::BadOrder {
                nodes,
                message: format!("index {v} appears twice"),
            });
        }
        seen[v as usize] = true;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HeatmapError> {
    fs::write(path, bytes).map_err(|source| HeatmapError::Io {
        file: path.to_path_buf(),
        source,
    })
}

/// Write the reordered adjacency as `pgm_path` (8-bit binary PGM, weight `w`
/// mapped to `floor(255 * clamp(w, 0, 1))`) and `csv_path` (exact values).
pub fn emit_heatmap(
    a: &Matrix,
    node_order: &[u32],
    pgm_path: &Path,
    csv_path: &Path,
) -> Result<(), HeatmapError> {
    if a.rows() != a.cols() {
        return Err(HeatmapError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let v = a.rows();
    validate_order(v, node_order)?;

    let mut pgm = format!("P5\n{v} {v}\n255\n").into_bytes();
    let mut csv = String::new();
    for (ri, &r) in node_order.iter().enumerate() {
        for (ci, &c) in node_order.iter().enumerate() {
            let w = a.get(r as usize, c as usize);
            pgm.push((255.0 * w.clamp(0.0, 1.0)).floor() as u8);
            if ci > 0 {
                csv.push(',');
            }
            csv.push_str(&fmt_f64(w));
        }
        csv.push('\n');
        let _ = ri;
    }
    write_file(pgm_path, &pgm)?;
    write_file(csv_path, csv.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_grouping_sorts_by_label_then_id_with_unlabeled_last() {
        let labels = [Some(1), None, Some(0), Some(1), Some(0)];
        assert_eq!(class_grouped_order(&labels), vec![2, 4, 0, 3, 1]);
    }

    #[test]
    fn pgm_has_correct_header_and_reordered_pixels() {
        let a = Matrix::from_vec(
            3,
            3,
            vec![0.0, 1.0, 0.5, 1.0, 0.0, 0.25, 0.5, 0.25, 0.0],
        );
        let dir = tempfile::tempdir().unwrap();
        let pgm_path = dir.path().join("h.pgm");
        let csv_path = dir.path().join("h.csv");
        emit_heatmap(&a, &[2, 0, 1], &pgm_path, &csv_path).unwrap();

        let bytes = fs::read(&pgm_path).unwrap();
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let pixels = &bytes[header.len()..];
        // Row order 2,0,1; so first pixel row is a[2][2], a[2][0], a[2][1].
        assert_eq!(pixels.len(), 9);
        assert_eq!(pixels[0], 0); // a[2][2] = 0.0
        assert_eq!(pixels[1], 127); // floor(255 * 0.5)
        assert_eq!(pixels[2], 63); // floor(255 * 0.25)
        assert_eq!(pixels[3], 127); // a[0][2]
        assert_eq!(pixels[4], 0); // a[0][0]
        assert_eq!(pixels[5], 255); // a[0][1]

        let csv = fs::read_to_string(&csv_path).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "0,0.5,0.25");
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn weights_outside_unit_interval_are_clamped_in_the_image_only() {
        let a = Matrix::from_vec(2, 2, vec![-0.5, 2.0, 2.0, -0.5]);
        let dir = tempfile::tempdir().unwrap();
        let pgm_path = dir.path().join("h.pgm");
        let csv_path = dir.path().join("h.csv");
        emit_heatmap(&a, &[0, 1], &pgm_path, &csv_path).unwrap();
        let bytes = fs::read(&pgm_path).unwrap();
        let pixels = &bytes[b"P5\n2 2\n255\n".len()..];
        assert_eq!(pixels, &[0, 255, 255, 0]);
        // CSV keeps the raw values.
        let csv = fs::read_to_string(&csv_path).unwrap();
        assert!(csv.starts_with("-0.5,2"));
    }

    #[test]
    fn invalid_orders_are_rejected() {
        let a = Matrix::zeros(3, 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.pgm");
        let c = dir.path().join("h.csv");
        for order in [vec![0u32, 1], vec![0, 1, 3], vec![0, 1, 1]] {
            assert!(matches!(
                emit_heatmap(&a, &order, &p, &c),
                Err(HeatmapError::BadOrder { .. })
            ));
        }
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(
            emit_heatmap(&rect, &[0, 1], &p, &c),
            Err(HeatmapError::NotSquare { .. })
        ));
    }
}
