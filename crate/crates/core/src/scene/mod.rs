//! Scene, ground-truth and nomenclature data model.

mod geometry;
pub mod io;
mod raster;
mod synthetic;

pub use geometry::{point_in_polygon, polygon_distance, Point};
pub use raster::{class_pixel_counts, group_map, group_polygons, polygon_index_map, rasterize_ground_truth};
pub use synthetic::{generate_synthetic_scene, Endmember, SyntheticSceneConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid spectral axis: {0}")]
    InvalidAxis(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid nomenclature: {0}")]
    InvalidNomenclature(String),
    #[error("invalid ground truth: polygon {polygon}: {reason}")]
    InvalidPolygon { polygon: usize, reason: String },
    #[error("annotation conflict: polygons {first} (class {first_class}) and {second} (class {second_class}) overlap at pixel ({row}, {col})")]
    AnnotationConflict {
        first: usize,
        first_class: u32,
        second: usize,
        second_class: u32,
        row: usize,
        col: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("synthetic generation failed: {0}")]
    Generation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, SceneError>;

/// Band-center wavelengths in micrometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAxis {
    wavelengths: Vec<f64>,
}

impl SpectralAxis {
    pub fn new(wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(SceneError::InvalidAxis("no bands".into()));
        }
        if let Some(w) = wavelengths.iter().find(|w| !(**w > 0.3 && **w < 3.0)) {
            return Err(SceneError::InvalidAxis(format!("wavelength {w} µm outside (0.3, 3.0)")));
        }
        if wavelengths.windows(2).any(|p| p[1] <= p[0]) {
            return Err(SceneError::InvalidAxis("wavelengths not strictly ascending".into()));
        }
        Ok(Self { wavelengths })
    }

    /// `bands` centers evenly spaced over `[first, last]`.
    pub fn linear(first: f64, last: f64, bands: usize) -> Result<Self> {
        if bands == 1 {
            return Self::new(vec![first]);
        }
        let step = (last - first) / (bands - 1) as f64;
        Self::new((0..bands).map(|i| first + step * i as f64).collect())
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn band_count(&self) -> usize {
        self.wavelengths.len()
    }
}

/// Reflectance cube stored band-interleaved-by-pixel: `cube[(row * width + col) * bands + band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralScene {
    height: usize,
    width: usize,
    gsd: f64,
    axis: SpectralAxis,
    cube: Vec<f32>,
}

impl HyperspectralScene {
    pub fn new(height: usize, width: usize, gsd: f64, axis: SpectralAxis, cube: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SceneError::InvalidScene("empty raster".into()));
        }
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(SceneError::InvalidScene(format!("ground sampling distance {gsd} must be positive")));
        }
        let expected = height * width * axis.band_count();
        if cube.len() != expected {
            return Err(SceneError::InvalidScene(format!(
                "cube holds {} values, expected {height}x{width}x{} = {expected}",
                cube.len(),
                axis.band_count()
            )));
        }
        if let Some(i) = cube.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(SceneError::InvalidScene(format!("reflectance at flat index {i} is {} (must be finite and >= 0)", cube[i])));
        }
        Ok(Self { height, width, gsd, axis, cube })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.axis.band_count()
    }

    pub fn gsd(&self) -> f64 {
        self.gsd
    }

    pub fn axis(&self) -> &SpectralAxis {
        &self.axis
    }

    pub fn cube(&self) -> &[f32] {
        &self.cube
    }

    pub fn spectrum(&self, row: usize, col: usize) -> &[f32] {
        let b = self.bands();
        let start = (row * self.width + col) * b;
        &self.cube[start..start + b]
    }

    pub fn value(&self, row: usize, col: usize, band: usize) -> f32 {
        self.cube[(row * self.width + col) * self.bands() + band]
    }

    /// Sub-scene of `size`×`size` pixels with its top-left corner at `(row, col)`.
    pub fn patch(&self, row: usize, col: usize, size: usize) -> Result<Self> {
        if row + size > self.height || col + size > self.width || size == 0 {
            return Err(SceneError::DimensionMismatch(format!(
                "patch ({row}, {col}) size {size} exceeds {}x{} scene",
                self.height, self.width
            )));
        }
        let b = self.bands();
        let mut cube = Vec::with_capacity(size * size * b);
        for r in row..row + size {
            let start = (r * self.width + col) * b;
            cube.extend_from_slice(&self.cube[start..start + size * b]);
        }
        Ok(Self { height: size, width: size, gsd: self.gsd, axis: self.axis.clone(), cube })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomenclatureNode {
    pub name: String,
    pub parent: Option<usize>,
    /// Set on leaves only; leaf ids are `1..=c`.
    pub leaf_id: Option<u32>,
}

/// Land-cover tree (rooted at "land cover") plus the flat land-use list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nomenclature {
    nodes: Vec<NomenclatureNode>,
    land_use: Vec<String>,
}

pub const LAND_USE_CLASSES: [&str; 12] = [
    "Roads",
    "Railways",
    "Roofs",
    "Parking lots",
    "Building sites",
    "Sport facilities",
    "Lakes / rivers / harbors",
    "Swimming pools",
    "Forests",
    "Cultivated fields",
    "Boats",
    "Open areas",
];

impl Nomenclature {
    pub fn new(nodes: Vec<NomenclatureNode>, land_use: Vec<String>) -> Result<Self> {
        let n = Self { nodes, land_use };
        n.validate()?;
        Ok(n)
    }

    /// Root -> {impermeable, permeable} -> leaves, numbered impermeable first.
    pub fn two_level(impermeable: &[&str], permeable: &[&str]) -> Result<Self> {
        let mut nodes = vec![
            NomenclatureNode { name: "land cover".into(), parent: None, leaf_id: None },
            NomenclatureNode { name: "impermeable".into(), parent: Some(0), leaf_id: None },
            NomenclatureNode { name: "permeable".into(), parent: Some(0), leaf_id: None },
        ];
        let mut id = 1;
        for (parent, names) in [(1, impermeable), (2, permeable)] {
            for name in names {
                nodes.push(NomenclatureNode { name: (*name).into(), parent: Some(parent), leaf_id: Some(id) });
                id += 1;
            }
        }
        Self::new(nodes, LAND_USE_CLASSES.iter().map(|s| s.to_string()).collect())
    }

    /// Urban layout with 16 impermeable and 16 permeable leaf classes.
    pub fn urban_32() -> Self {
        let imp: Vec<String> = (1..=16).map(|i| format!("impermeable material {i:02}")).collect();
        let per: Vec<String> = (1..=16).map(|i| format!("permeable material {i:02}")).collect();
        let imp: Vec<&str> = imp.iter().map(String::as_str).collect();
        let per: Vec<&str> = per.iter().map(String::as_str).collect();
        Self::two_level(&imp, &per).expect("static nomenclature is valid")
    }

    /// Flat tree with `c` leaves named `material 1..c`, used for synthetic scenes.
    pub fn flat(c: usize) -> Result<Self> {
        let mut nodes = vec![NomenclatureNode { name: "land cover".into(), parent: None, leaf_id: None }];
        for i in 1..=c {
            nodes.push(NomenclatureNode { name: format!("material {i}"), parent: Some(0), leaf_id: Some(i as u32) });
        }
        Self::new(nodes, LAND_USE_CLASSES.iter().map(|s| s.to_string()).collect())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SceneError::InvalidNomenclature(m));
        match self.nodes.first() {
            Some(root) if root.parent.is_none() && root.name == "land cover" => {}
            _ => return bad("node 0 must be the root named \"land cover\"".into()),
        }
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            // Walk to the root; more than `nodes.len()` steps means a cycle.
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.nodes[cur].parent {
                if p >= self.nodes.len() {
                    return bad(format!("node {i} has dangling parent {p}"));
                }
                cur = p;
                steps += 1;
                if steps > self.nodes.len() {
                    return bad(format!("node {i} is on a cycle"));
                }
            }
            if cur != 0 {
                return bad(format!("node {i} ({}) is not connected to the root", node.name));
            }
        }
        let has_child: Vec<bool> = {
            let mut v = vec![false; self.nodes.len()];
            for n in &self.nodes {
                if let Some(p) = n.parent {
                    v[p] = true;
                }
            }
            v
        };
        let mut ids: Vec<u32> = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            match (n.leaf_id, has_child[i]) {
                (Some(_), true) => return bad(format!("internal node {} carries a leaf id", n.name)),
                (None, false) if i != 0 => return bad(format!("leaf {} has no leaf id", n.name)),
                (Some(id), false) => ids.push(id),
                _ => {}
            }
        }
        ids.sort_unstable();
        if ids.is_empty() || ids.iter().enumerate().any(|(i, id)| *id != i as u32 + 1) {
            return bad("leaf ids must be exactly 1..c".into());
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.leaf_id.is_some()).count()
    }

    pub fn land_use(&self) -> &[String] {
        &self.land_use
    }

    pub fn nodes(&self) -> &[NomenclatureNode] {
        &self.nodes
    }

    /// Names from the root down to the leaf with this id.
    pub fn path(&self, leaf_id: u32) -> Option<Vec<&str>> {
        let mut cur = self.nodes.iter().position(|n| n.leaf_id == Some(leaf_id))?;
        let mut out = vec![self.nodes[cur].name.as_str()];
        while let Some(p) = self.nodes[cur].parent {
            cur = p;
            out.push(self.nodes[cur].name.as_str());
        }
        out.reverse();
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPolygon {
    /// `[x, y]` vertices in pixel coordinates, pixel `(row, col)` spans `[col, col+1] x [row, row+1]`.
    pub vertices: Vec<Point>,
    pub class_id: u32,
    pub land_use_id: u32,
    #[serde(default)]
    pub group_id: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub polygons: Vec<AnnotatedPolygon>,
}

impl GroundTruth {
    /// Checks bounds, simplicity and class ids. Land-use id 0 means "not annotated".
    pub fn validate(&self, height: usize, width: usize, n_classes: usize, n_land_use: usize) -> Result<()> {
        for (i, p) in self.polygons.iter().enumerate() {
            let fail = |reason: String| Err(SceneError::InvalidPolygon { polygon: i, reason });
            if p.vertices.len() < 3 {
                return fail(format!("{} vertices", p.vertices.len()));
            }
            if let Some(v) = p.vertices.iter().find(|v| {
                !(v[0].is_finite() && v[1].is_finite()) || v[0] < 0.0 || v[1] < 0.0 || v[0] > width as f64 || v[1] > height as f64
            }) {
                return fail(format!("vertex ({}, {}) outside {width}x{height} scene", v[0], v[1]));
            }
            if !geometry::is_simple(&p.vertices) {
                return fail("self-intersecting".into());
            }
            if p.class_id == 0 || p.class_id as usize > n_classes {
                return fail(format!("class id {} not a leaf in 1..={n_classes}", p.class_id));
            }
            if p.land_use_id as usize > n_land_use {
                return fail(format!("land-use id {} outside 0..={n_land_use}", p.land_use_id));
            }
        }
        Ok(())
    }

    pub fn group_count(&self) -> Option<usize> {
        self.polygons.iter().map(|p| p.group_id.map(|g| g + 1)).try_fold(0, |acc, g| g.map(|g| acc.max(g)))
    }
}

/// Row-major raster of class ids (0 = unlabeled).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| **l != 0).count()
    }

    /// Pixel counts per class id `1..=n_classes` (index 0 of the result is class 1).
    pub fn class_histogram(&self, n_classes: usize) -> Vec<u64> {
        let mut h = vec![0u64; n_classes];
        for &l in &self.labels {
            if l != 0 && (l as usize) <= n_classes {
                h[l as usize - 1] += 1;
            }
        }
        h
    }
}

/// Row-major raster of group ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    pub height: usize,
    pub width: usize,
    pub groups: Vec<Option<usize>>,
}

/// `P[i, k]`: labeled pixels of class `k + 1` inside group `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupClassMatrix {
    n_groups: usize,
    n_classes: usize,
    counts: Vec<u64>,
}

impl GroupClassMatrix {
    pub fn new(n_groups: usize, n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_groups * n_classes {
            return Err(SceneError::DimensionMismatch(format!(
                "{} counts for a {n_groups}x{n_classes} matrix",
                counts.len()
            )));
        }
        Ok(Self { n_groups, n_classes, counts })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_classes) {
            return Err(SceneError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), n_classes, rows.concat())
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, group: usize, class: usize) -> u64 {
        self.counts[group * self.n_classes + class]
    }

    pub fn row(&self, group: usize) -> &[u64] {
        &self.counts[group * self.n_classes..(group + 1) * self.n_classes]
    }

    pub fn row_sum(&self, group: usize) -> u64 {
        self.row(group).iter().sum()
    }

    pub fn class_totals(&self) -> Vec<u64> {
        (0..self.n_classes).map(|k| (0..self.n_groups).map(|i| self.get(i, k)).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self { counts: self.counts.iter().map(|c| c * factor).collect(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_rejects_unsorted_and_out_of_range() {
        assert!(SpectralAxis::new(vec![0.5, 0.4]).is_err());
        assert!(SpectralAxis::new(vec![0.2, 0.4]).is_err());
        assert!(SpectralAxis::new(vec![]).is_err());
        let ax = SpectralAxis::linear(0.4, 2.5, 310).unwrap();
        assert_eq!(ax.band_count(), 310);
        assert!((ax.wavelengths()[309] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn scene_rejects_negative_and_nan() {
        let ax = SpectralAxis::linear(0.4, 0.8, 2).unwrap();
        assert!(HyperspectralScene::new(1, 1, 1.0, ax.clone(), vec![0.1, -0.1]).is_err());
        assert!(HyperspectralScene::new(1, 1, 1.0, ax.clone(), vec![0.1, f32::NAN]).is_err());
        assert!(HyperspectralScene::new(1, 2, 1.0, ax.clone(), vec![0.1, 0.2]).is_err());
        assert!(HyperspectralScene::new(1, 1, 1.0, ax, vec![0.1, 0.2]).is_ok());
    }

    #[test]
    fn patch_extracts_window() {
        let ax = SpectralAxis::linear(0.4, 0.8, 2).unwrap();
        let cube: Vec<f32> = (0..3 * 3 * 2).map(|v| v as f32).collect();
        let s = HyperspectralScene::new(3, 3, 1.0, ax, cube).unwrap();
        let p = s.patch(1, 1, 2).unwrap();
        assert_eq!(p.spectrum(0, 0), s.spectrum(1, 1));
        assert_eq!(p.spectrum(1, 1), s.spectrum(2, 2));
        assert!(s.patch(2, 2, 2).is_err());
    }

    #[test]
    fn urban_nomenclature_shape() {
        let n = Nomenclature::urban_32();
        assert_eq!(n.class_count(), 32);
        assert_eq!(n.land_use().len(), 12);
        assert_eq!(n.path(1).unwrap(), vec!["land cover", "impermeable", "impermeable material 01"]);
        assert_eq!(n.path(32).unwrap()[1], "permeable");
    }

    #[test]
    fn nomenclature_rejects_gaps_and_cycles() {
        let mut nodes = Nomenclature::flat(3).unwrap().nodes().to_vec();
        nodes[2].leaf_id = Some(7);
        assert!(Nomenclature::new(nodes, vec![]).is_err());
        let mut nodes = Nomenclature::flat(2).unwrap().nodes().to_vec();
        nodes.push(NomenclatureNode { name: "a".into(), parent: Some(4), leaf_id: None });
        nodes.push(NomenclatureNode { name: "b".into(), parent: Some(3), leaf_id: Some(3) });
        assert!(Nomenclature::new(nodes, vec![]).is_err());
    }

    #[test]
    fn polygon_validation() {
        let sq = |x: f64| AnnotatedPolygon {
            vertices: vec![[x, 0.0], [x + 2.0, 0.0], [x + 2.0, 2.0], [x, 2.0]],
            class_id: 1,
            land_use_id: 3,
            group_id: None,
        };
        let gt = GroundTruth { polygons: vec![sq(0.0)] };
        assert!(gt.validate(4, 4, 2, 12).is_ok());
        let gt = GroundTruth { polygons: vec![sq(3.0)] };
        assert!(matches!(gt.validate(4, 4, 2, 12), Err(SceneError::InvalidPolygon { polygon: 0, .. })));
        let mut p = sq(0.0);
        p.class_id = 3;
        assert!(GroundTruth { polygons: vec![p] }.validate(4, 4, 2, 12).is_err());
    }
}
