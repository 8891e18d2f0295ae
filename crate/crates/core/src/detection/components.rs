use std::collections::VecDeque;

use super::{KnotDetection, ProbabilityMap};

/// Thresholds the map at `binarize_at`, labels 4-connected components (θ
/// wraps, so seam-straddling blobs stay whole), drops components smaller than
/// `min_area_cells`, and emits one detection per component scored by its
/// maximum probability. Components are ordered by their first cell in
/// row-major order.
pub fn extract_detections(pmap: &ProbabilityMap, min_area_cells: usize, binarize_at: f64) -> Vec<KnotDetection> {
    let cols = pmap.theta_bins;
    let rows = pmap.l_bins;
    let on: Vec<bool> = pmap.values.iter().map(|&v| v > 0.0 && v >= binarize_at).collect();
    let mut seen = vec![false; on.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        let mut score: f64 = 0.0;
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / cols, i % cols);
            cells.push((r, c));
            score = score.max(pmap.values[i]);
            let mut nbrs = [None; 4];
            nbrs[0] = Some(r * cols + (c + 1) % cols);
            nbrs[1] = Some(r * cols + (c + cols - 1) % cols);
            if r > 0 {
                nbrs[2] = Some(i - cols);
            }
            if r + 1 < rows {
                nbrs[3] = Some(i + cols);
            }
            for j in nbrs.into_iter().flatten() {
                if on[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if cells.len() >= min_area_cells.max(1) {
            out.push(KnotDetection::from_cells(cells, score, cols, rows, pmap.l_extent));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(cols: usize, rows: usize) -> ProbabilityMap {
        ProbabilityMap::zeros(cols, rows, (rows - 1) as f64 * 10.0)
    }

    #[test]
    fn all_zero_gives_nothing() {
        assert!(extract_detections(&map(36, 10), 1, 0.5).is_empty());
        assert!(extract_detections(&map(36, 10), 1, 0.0).is_empty());
    }

    #[test]
    fn single_component_score_is_max() {
        let mut m = map(36, 10);
        for r in 2..6 {
            for c in 10..15 {
                m.set(r, c, 0.6);
            }
        }
        m.set(3, 12, 0.9);
        let d = extract_detections(&m, 5, 0.5);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].area_cells(), 20);
        assert_eq!(d[0].score, 0.9);
    }

    #[test]
    fn small_components_dropped() {
        let mut m = map(36, 10);
        m.set(1, 1, 1.0);
        m.set(1, 2, 1.0);
        assert!(extract_detections(&m, 4, 0.5).is_empty());
        assert_eq!(extract_detections(&m, 2, 0.5).len(), 1);
    }

    #[test]
    fn seam_blob_is_one_detection() {
        let mut m = map(36, 10);
        for r in 4..7 {
            for c in [34, 35, 0, 1, 2] {
                m.set(r, c, 0.8);
            }
        }
        let d = extract_detections(&m, 4, 0.5);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].area_cells(), 15);
        assert!(crate::circular_distance_deg(d[0].theta_deg, 0.0) < 1e-9);
    }

    #[test]
    fn diagonal_cells_are_not_connected() {
        let mut m = map(36, 10);
        m.set(1, 1, 1.0);
        m.set(2, 2, 1.0);
        assert_eq!(extract_detections(&m, 1, 0.5).len(), 2);
    }
}
