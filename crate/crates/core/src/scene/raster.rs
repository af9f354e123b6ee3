use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use super::geometry::{bounds, point_in_polygon, polygon_distance};
use super::{GroundTruth, GroupClassMatrix, GroupMap, HyperspectralScene, LabelMap, Result, SceneError};

/// Index of the single polygon whose interior holds each pixel center.
///
/// Pixels covered by two same-class polygons are left unassigned; covering
/// by polygons of different classes is an annotation conflict.
pub fn polygon_index_map(height: usize, width: usize, gt: &GroundTruth) -> Result<Vec<Option<usize>>> {
    let boxes: Vec<_> = gt.polygons.iter().map(|p| bounds(&p.vertices)).collect();
    let rows: Vec<Result<Vec<Option<usize>>>> = (0..height)
        .into_par_iter()
        .map(|row| {
            let y = row as f64 + 0.5;
            let active: Vec<usize> = (0..gt.polygons.len()).filter(|&i| boxes[i].1 <= y && y <= boxes[i].3).collect();
            let mut out = vec![None; width];
            for (col, slot) in out.iter_mut().enumerate() {
                let x = col as f64 + 0.5;
                let mut hit: Option<usize> = None;
                let mut multiple = false;
                for &i in &active {
                    let b = boxes[i];
                    if x < b.0 || x > b.2 || !point_in_polygon([x, y], &gt.polygons[i].vertices) {
                        continue;
                    }
                    match hit {
                        None => hit = Some(i),
                        Some(first) => {
                            let (c1, c2) = (gt.polygons[first].class_id, gt.polygons[i].class_id);
                            if c1 != c2 {
                                return Err(SceneError::AnnotationConflict {
                                    first,
                                    first_class: c1,
                                    second: i,
                                    second_class: c2,
                                    row,
                                    col,
                                });
                            }
                            multiple = true;
                        }
                    }
                }
                *slot = if multiple { None } else { hit };
            }
            Ok(out)
        })
        .collect();
    let mut map = Vec::with_capacity(height * width);
    for r in rows {
        map.extend(r?);
    }
    Ok(map)
}

pub fn rasterize_ground_truth(scene: &HyperspectralScene, gt: &GroundTruth) -> Result<LabelMap> {
    let (h, w) = (scene.height(), scene.width());
    let idx = polygon_index_map(h, w, gt)?;
    Ok(LabelMap {
        height: h,
        width: w,
        labels: idx.iter().map(|p| p.map_or(0, |i| gt.polygons[i].class_id)).collect(),
    })
}

/// Connected components of the graph joining polygons whose boundaries are
/// within `radius` metres. Group ids follow the smallest member polygon index.
pub fn group_polygons(gt: &GroundTruth, radius: f64, gsd: f64) -> Result<(GroundTruth, usize)> {
    if !(radius > 0.0) || !(gsd > 0.0) {
        return Err(SceneError::InvalidScene(format!("grouping radius {radius} m and gsd {gsd} m must be positive")));
    }
    let n = gt.polygons.len();
    let threshold = radius / gsd;
    let boxes: Vec<_> = gt.polygons.iter().map(|p| bounds(&p.vertices)).collect();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (boxes[i], boxes[j]);
            let gap_x = (b.0 - a.2).max(a.0 - b.2).max(0.0);
            let gap_y = (b.1 - a.3).max(a.1 - b.3).max(0.0);
            if gap_x.hypot(gap_y) > threshold {
                continue;
            }
            if polygon_distance(&gt.polygons[i].vertices, &gt.polygons[j].vertices) <= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut ids: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    let mut out = gt.clone();
    for i in 0..n {
        let root = uf.find(i);
        let g = *ids[root].get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        out.polygons[i].group_id = Some(g);
    }
    Ok((out, next))
}

/// Per-pixel group ids from a grouped ground truth.
pub fn group_map(height: usize, width: usize, gt: &GroundTruth) -> Result<GroupMap> {
    let idx = polygon_index_map(height, width, gt)?;
    let mut groups = Vec::with_capacity(idx.len());
    for p in idx {
        groups.push(match p {
            None => None,
            Some(i) => Some(gt.polygons[i].group_id.ok_or_else(|| SceneError::InvalidPolygon {
                polygon: i,
                reason: "no group id; run grouping first".into(),
            })?),
        });
    }
    Ok(GroupMap { height, width, groups })
}

pub fn class_pixel_counts(labels: &LabelMap, groups: &GroupMap, n_groups: usize, n_classes: usize) -> Result<GroupClassMatrix> {
    if labels.height != groups.height || labels.width != groups.width {
        return Err(SceneError::DimensionMismatch(format!(
            "label map {}x{} vs group map {}x{}",
            labels.height, labels.width, groups.height, groups.width
        )));
    }
    let mut counts = vec![0u64; n_groups * n_classes];
    for (&l, g) in labels.labels.iter().zip(&groups.groups) {
        if l == 0 {
            continue;
        }
        let Some(g) = *g else { continue };
        if g >= n_groups || l as usize > n_classes {
            return Err(SceneError::DimensionMismatch(format!("group {g} / class {l} outside {n_groups}x{n_classes}")));
        }
        counts[g * n_classes + l as usize - 1] += 1;
    }
    GroupClassMatrix::new(n_groups, n_classes, counts)
}
