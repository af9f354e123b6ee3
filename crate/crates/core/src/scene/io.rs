//! Scene files: a raw band-interleaved-by-pixel little-endian `f32` cube
//! (`<stem>.bin`) with a JSON header (`<stem>.json`). Ground truth is a JSON
//! document of polygons.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GroundTruth, HyperspectralScene, Result, SceneError, SpectralAxis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub gsd_m: f64,
    pub wavelengths_um: Vec<f64>,
}

/// Header and data paths for a scene given either file (or the bare stem).
pub fn scene_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("bin"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, reason: impl ToString) -> SceneError {
    SceneError::Format { path: path.display().to_string(), reason: reason.to_string() }
}

pub fn write_scene(scene: &HyperspectralScene, path: &Path) -> Result<()> {
    let (header_path, data_path) = scene_paths(path);
    let header = SceneHeader {
        height: scene.height(),
        width: scene.width(),
        bands: scene.bands(),
        gsd_m: scene.gsd(),
        wavelengths_um: scene.axis().wavelengths().to_vec(),
    };
    let mut bytes = Vec::with_capacity(scene.cube().len() * 4);
    for v in scene.cube() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(io_err(&data_path))?;
    let json = serde_json::to_string_pretty(&header).map_err(|e| format_err(&header_path, e))?;
    fs::write(&header_path, json).map_err(io_err(&header_path))
}

pub fn read_scene(path: &Path) -> Result<HyperspectralScene> {
    let (header_path, data_path) = scene_paths(path);
    let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: SceneHeader = serde_json::from_str(&text).map_err(|e| format_err(&header_path, e))?;
    if header.wavelengths_um.len() != header.bands {
        return Err(format_err(
            &header_path,
            format!("{} wavelengths for {} bands", header.wavelengths_um.len(), header.bands),
        ));
    }
    let bytes = fs::read(&data_path).map_err(io_err(&data_path))?;
    let expected = header.height * header.width * header.bands * 4;
    if bytes.len() != expected {
        return Err(format_err(&data_path, format!("{} bytes, expected {expected}", bytes.len())));
    }
    let cube = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let axis = SpectralAxis::new(header.wavelengths_um)?;
    HyperspectralScene::new(header.height, header.width, header.gsd_m, axis, cube)
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(gt).map_err(|e| format_err(path, e))?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::generate_synthetic_scene;

    #[test]
    fn scene_and_ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (scene, gt) = generate_synthetic_scene(1, 16, 12, 9, 3, 3).unwrap();
        write_scene(&scene, &dir.path().join("scene.json")).unwrap();
        write_ground_truth(&gt, &dir.path().join("gt.json")).unwrap();
        assert_eq!(read_scene(&dir.path().join("scene.bin")).unwrap(), scene);
        assert_eq!(read_ground_truth(&dir.path().join("gt.json")).unwrap(), gt);
        let bytes = fs::read(dir.path().join("scene.bin")).unwrap();
        assert_eq!(bytes.len(), 16 * 12 * 9 * 4);
        assert_eq!(&bytes[..4], &scene.cube()[0].to_le_bytes());
    }

    #[test]
    fn truncated_cube_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (scene, _) = generate_synthetic_scene(1, 8, 8, 4, 2, 2).unwrap();
        let p = dir.path().join("s.json");
        write_scene(&scene, &p).unwrap();
        fs::write(dir.path().join("s.bin"), [0u8; 12]).unwrap();
        assert!(matches!(read_scene(&p), Err(SceneError::Format { .. })));
    }
}
