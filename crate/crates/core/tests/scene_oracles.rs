//! Scene operations checked against naive oracles.

use std::collections::BTreeSet;

use hyperbench::scene::{
    class_pixel_counts, group_map, group_polygons, rasterize_ground_truth, AnnotatedPolygon, GroundTruth, GroupMap, HyperspectralScene,
    LabelMap, SpectralAxis, SyntheticSceneConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Winding number of a closed polygon around `p`; nonzero means inside for simple polygons.
fn winding_number(p: [f64; 2], poly: &[[f64; 2]]) -> i32 {
    let mut wn = 0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let is_left = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && is_left > 0.0 {
                wn += 1;
            }
        } else if b[1] <= p[1] && is_left < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn blank(h: usize, w: usize) -> HyperspectralScene {
    HyperspectralScene::new(h, w, 1.0, SpectralAxis::new(vec![0.55]).unwrap(), vec![0.0; h * w]).unwrap()
}

/// Random convex polygons (triangles to hexagons) each confined to its own
/// grid cell, so no two overlap.
fn random_layout(seed: u64, n: usize, cell: f64, cols: usize) -> GroundTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let polygons = (0..n)
        .map(|i| {
            let (cx, cy) = ((i % cols) as f64 * cell + cell / 2.0, (i / cols) as f64 * cell + cell / 2.0);
            let sides = rng.random_range(3..=6);
            let phase: f64 = rng.random_range(0.0..1.0);
            let vertices = (0..sides)
                .map(|s| {
                    let ang = std::f64::consts::TAU * (s as f64 + phase) / sides as f64;
                    let r = rng.random_range(0.2..0.48) * cell;
                    [cx + r * ang.cos(), cy + r * ang.sin()]
                })
                .collect();
            AnnotatedPolygon { vertices, class_id: rng.random_range(1..=4), land_use_id: 0, group_id: None }
        })
        .collect();
    GroundTruth { polygons }
}

#[test]
fn rasterization_matches_per_pixel_scan() {
    for seed in 0..5 {
        let gt = random_layout(seed, 10, 12.0, 4);
        let (h, w) = (36, 48);
        let map = rasterize_ground_truth(&blank(h, w), &gt).unwrap();
        for row in 0..h {
            for col in 0..w {
                let c = [col as f64 + 0.5, row as f64 + 0.5];
                let hits: Vec<u32> = gt.polygons.iter().filter(|p| winding_number(c, &p.vertices) != 0).map(|p| p.class_id).collect();
                let expected = if hits.len() == 1 { hits[0] } else { 0 };
                assert_eq!(map.get(row, col), expected, "seed {seed} pixel ({row}, {col})");
            }
        }
        // Idempotent.
        assert_eq!(rasterize_ground_truth(&blank(h, w), &gt).unwrap(), map);
    }
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    (p[0] - a[0] - t * ab[0]).hypot(p[1] - a[1] - t * ab[1])
}

/// Distance between two disjoint polygons: the closest pair always involves a vertex.
fn disjoint_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let one_way = |a: &[[f64; 2]], b: &[[f64; 2]]| {
        a.iter()
            .flat_map(|&p| (0..b.len()).map(move |j| (p, j)))
            .map(|(p, j)| point_segment(p, b[j], b[(j + 1) % b.len()]))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

/// Components of the all-pairs threshold graph via breadth-first search.
fn oracle_partition(gt: &GroundTruth, threshold_px: f64) -> BTreeSet<BTreeSet<usize>> {
    let n = gt.polygons.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && disjoint_distance(&gt.polygons[i].vertices, &gt.polygons[j].vertices) <= threshold_px).collect())
        .collect();
    let mut seen = vec![false; n];
    let mut parts = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = vec![s];
        seen[s] = true;
        while let Some(u) = queue.pop() {
            comp.insert(u);
            for v in 0..n {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        parts.insert(comp);
    }
    parts
}

fn partition_of(gt: &GroundTruth) -> BTreeSet<BTreeSet<usize>> {
    let n_groups = gt.group_count().unwrap();
    (0..n_groups)
        .map(|g| (0..gt.polygons.len()).filter(|&i| gt.polygons[i].group_id == Some(g)).collect())
        .collect()
}

#[test]
fn grouping_matches_connected_components() {
    for seed in 0..6 {
        let gt = random_layout(100 + seed, 20, 10.0, 5);
        for (radius, gsd) in [(2.0, 1.0), (5.0, 1.0), (5.0, 2.0), (12.0, 1.3)] {
            let (grouped, n) = group_polygons(&gt, radius, gsd).unwrap();
            let expected = oracle_partition(&gt, radius / gsd);
            assert_eq!(n, expected.len());
            assert_eq!(partition_of(&grouped), expected, "seed {seed} radius {radius} gsd {gsd}");
            let ids: BTreeSet<usize> = grouped.polygons.iter().map(|p| p.group_id.unwrap()).collect();
            assert_eq!(ids, (0..n).collect());
        }
    }
}

#[test]
fn class_counts_match_per_pixel_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let (h, w, g, c) = (rng.random_range(1..20), rng.random_range(1..20), rng.random_range(1..6), rng.random_range(1..5));
        let labels = LabelMap { height: h, width: w, labels: (0..h * w).map(|_| rng.random_range(0..=c as u32)).collect() };
        let groups = GroupMap { height: h, width: w, groups: (0..h * w).map(|_| rng.random_bool(0.9).then(|| rng.random_range(0..g))).collect() };
        let p = class_pixel_counts(&labels, &groups, g, c).unwrap();
        for gi in 0..g {
            for k in 0..c {
                let tally = (0..h * w).filter(|&i| groups.groups[i] == Some(gi) && labels.labels[i] == k as u32 + 1).count() as u64;
                assert_eq!(p.get(gi, k), tally);
            }
        }
        let totals = p.class_totals();
        for k in 0..c {
            let direct = (0..h * w).filter(|&i| groups.groups[i].is_some() && labels.labels[i] == k as u32 + 1).count() as u64;
            assert_eq!(totals[k], direct);
        }
    }
}

#[test]
fn synthetic_scene_counts_cover_labeled_pixels() {
    let (scene, gt) = hyperbench::scene::generate_synthetic_scene(0, 64, 64, 310, 5, 12).unwrap();
    let labels = rasterize_ground_truth(&scene, &gt).unwrap();
    let (grouped, n) = group_polygons(&gt, 50.0, scene.gsd()).unwrap();
    let groups = group_map(64, 64, &grouped).unwrap();
    let p = class_pixel_counts(&labels, &groups, n, 5).unwrap();
    assert_eq!(p.total(), labels.labeled_count() as u64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grouping_is_order_invariant(seed in 0u64..1000, radius in 0.5f64..15.0) {
        let gt = random_layout(seed, 12, 10.0, 4);
        let (a, _) = group_polygons(&gt, radius, 1.0).unwrap();
        let mut perm: Vec<usize> = (0..gt.polygons.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled = GroundTruth { polygons: perm.iter().map(|&i| gt.polygons[i].clone()).collect() };
        let (b, _) = group_polygons(&shuffled, radius, 1.0).unwrap();
        let back: BTreeSet<BTreeSet<usize>> = partition_of(&b).into_iter().map(|s| s.into_iter().map(|i| perm[i]).collect()).collect();
        prop_assert_eq!(partition_of(&a), back);
    }

    #[test]
    fn grand_total_equals_labeled_pixels(seed in 0u64..1000) {
        let gt = random_layout(seed, 9, 10.0, 3);
        let scene = blank(30, 30);
        let labels = rasterize_ground_truth(&scene, &gt).unwrap();
        let (grouped, n) = group_polygons(&gt, 4.0, 1.0).unwrap();
        let groups = group_map(30, 30, &grouped).unwrap();
        let p = class_pixel_counts(&labels, &groups, n, 4).unwrap();
        prop_assert_eq!(p.total(), labels.labeled_count() as u64);
    }

    #[test]
    fn synthetic_scenes_are_valid(seed in 0u64..10_000) {
        let cfg = SyntheticSceneConfig { height: 24, width: 24, bands: 12, n_polygons: 4, max_side: 8, ..Default::default() };
        let (scene, gt) = cfg.generate(seed).unwrap();
        prop_assert!(scene.cube().iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!(gt.validate(24, 24, cfg.n_materials, 12).is_ok());
        prop_assert!(rasterize_ground_truth(&scene, &gt).is_ok());
    }
}
