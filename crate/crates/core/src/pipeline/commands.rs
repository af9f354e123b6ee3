use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{io_err, sha256_file, RunManifest, StageRecord};
use super::{PipelineConfig, PipelineError, Result, SolverChoice};
use crate::classifiers::{knn_fit_predict, rf_fit, rf_predict, Extractor, Identity, LabeledSet};
use crate::features::{extract_scene_features, FeatureConfig};
use crate::mae::{load_ae, load_mae, save_ae, save_mae, train_autoencoder, train_mae};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::rng;
use crate::scene::io::{read_ground_truth, read_scene, write_ground_truth, write_scene};
use crate::scene::{class_pixel_counts, group_map, group_polygons, rasterize_ground_truth, GroundTruth, GroupClassMatrix, HyperspectralScene, LabelMap};
use crate::split::io::SplitFile;
use crate::split::{enumerate_diverse_splits, DiversityOptions, SplitProblem, SplitSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Split,
    Features,
    Pretrain,
    Classify,
    Evaluate,
    Report,
}

/// Optional command arguments that change what a stage produces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageArgs {
    pub model: Option<String>,
    pub split_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    Knn,
    AeKnn,
    MaeKnn,
    Rf,
    AeRf,
    MaeRf,
}

pub const MODELS: [Model; 6] = [Model::Knn, Model::AeKnn, Model::MaeKnn, Model::Rf, Model::AeRf, Model::MaeRf];

#[derive(Clone, Copy, PartialEq)]
enum Encoder {
    Raw,
    Ae,
    Mae,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Knn => "knn",
            Model::AeKnn => "ae+knn",
            Model::MaeKnn => "mae+knn",
            Model::Rf => "rf",
            Model::AeRf => "ae+rf",
            Model::MaeRf => "mae+rf",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Model::Knn => "KNN",
            Model::AeKnn => "AE + KNN",
            Model::MaeKnn => "MAE + KNN",
            Model::Rf => "RF",
            Model::AeRf => "AE + RF",
            Model::MaeRf => "MAE + RF",
        }
    }

    fn encoder(self) -> Encoder {
        match self {
            Model::Knn | Model::Rf => Encoder::Raw,
            Model::AeKnn | Model::AeRf => Encoder::Ae,
            Model::MaeKnn | Model::MaeRf => Encoder::Mae,
        }
    }

    fn is_knn(self) -> bool {
        matches!(self, Model::Knn | Model::AeKnn | Model::MaeKnn)
    }
}

impl FromStr for Model {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        MODELS
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| PipelineError::Config(vec![format!("unknown model {s:?}; expected one of {}", MODELS.map(|m| m.name()).join(", "))]))
    }
}

fn models_for(args: &StageArgs) -> Result<Vec<Model>> {
    match &args.model {
        Some(m) => Ok(vec![m.parse()?]),
        None => Ok(MODELS.to_vec()),
    }
}

// Run-directory layout.
const SCENE_STEM: &str = "scene";
const GROUND_TRUTH: &str = "ground_truth.json";
const GROUPS: &str = "groups.json";
const SPLITS: &str = "splits";
const FEATURES: &str = "features.csv";
const MODELS_DIR: &str = "models";
const PREDICTIONS: &str = "predictions";
const METRICS: &str = "metrics";
const REPORT: &str = "report.json";

const PRETRAIN_STREAM: u64 = 0x5052_4554;

fn scene_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.scene.clone().unwrap_or_else(|| cfg.out.join(SCENE_STEM))
}

fn gt_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.ground_truth.clone().unwrap_or_else(|| cfg.out.join(GROUND_TRUTH))
}

fn require(path: &Path, command: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact { path: path.display().to_string(), command })
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, json).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format { path: path.display().to_string(), reason: e.to_string() })
}

fn relative(cfg: &PipelineConfig, path: &Path) -> String {
    path.strip_prefix(&cfg.out).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn run_generate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let (scene, gt) = cfg.generate.generate(cfg.seed)?;
    let stem = cfg.out.join(SCENE_STEM);
    write_scene(&scene, &stem)?;
    let gt_file = cfg.out.join(GROUND_TRUTH);
    write_ground_truth(&gt, &gt_file)?;
    Ok(vec![stem.with_extension("json"), stem.with_extension("bin"), gt_file])
}

struct Inputs {
    scene: HyperspectralScene,
    gt: GroundTruth,
    labels: LabelMap,
    n_classes: usize,
}

fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let stem = scene_path(cfg);
    require(&stem.with_extension("json"), "generate")?;
    let gt_file = gt_path(cfg);
    require(&gt_file, "generate")?;
    let scene = read_scene(&stem)?;
    let gt = read_ground_truth(&gt_file)?;
    let labels = rasterize_ground_truth(&scene, &gt)?;
    let n_classes = gt.polygons.iter().map(|p| p.class_id as usize).max().unwrap_or(0);
    Ok(Inputs { scene, gt, labels, n_classes })
}

/// Groups, split problem and the per-group pixel counts over classes that
/// actually occur.
fn split_problem(cfg: &PipelineConfig, inp: &Inputs) -> Result<(GroundTruth, usize, SplitProblem)> {
    let (grouped, n_groups) = group_polygons(&inp.gt, cfg.split.radius_m, inp.scene.gsd())?;
    let gm = group_map(inp.scene.height(), inp.scene.width(), &grouped)?;
    let full = class_pixel_counts(&inp.labels, &gm, n_groups, inp.n_classes)?;
    let present: Vec<usize> = (0..inp.n_classes).filter(|&k| full.class_totals()[k] > 0).collect();
    let rows: Vec<Vec<u64>> = (0..n_groups).map(|g| present.iter().map(|&k| full.get(g, k)).collect()).collect();
    let problem = SplitProblem::new(GroupClassMatrix::from_rows(&rows)?, cfg.split.proportions)?;
    Ok((grouped, n_groups, problem))
}

fn run_split(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let inp = load_inputs(cfg)?;
    let (grouped, _, problem) = split_problem(cfg, &inp)?;
    let exact_cap = match cfg.split.solver {
        SolverChoice::Auto => DiversityOptions::default().exact_cap,
        SolverChoice::Exact => usize::MAX,
        SolverChoice::Heuristic => 0,
    };
    let opts = DiversityOptions { exact_cap, heuristic_budget: cfg.split.heuristic_budget };
    let portfolio = enumerate_diverse_splits(&problem, cfg.split.k, cfg.split.min_hamming, cfg.seed, opts)?;
    if portfolio.assignments.is_empty() {
        return Err(PipelineError::Infeasible);
    }
    let groups_file = cfg.out.join(GROUPS);
    write_ground_truth(&grouped, &groups_file)?;
    let dir = cfg.out.join(SPLITS);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    mkdir(&dir)?;
    let mut outputs = vec![groups_file];
    for (i, a) in portfolio.assignments.iter().enumerate() {
        let path = dir.join(format!("split_{i}.json"));
        SplitFile::new(&problem, a)?.write(&path)?;
        outputs.push(path);
    }
    Ok(outputs)
}

/// 400-dimensional descriptors of every full patch, as CSV.
fn run_features(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let stem = scene_path(cfg);
    require(&stem.with_extension("json"), "generate")?;
    let scene = read_scene(&stem)?;
    let table = extract_scene_features(&scene, &FeatureConfig::for_gsd(scene.gsd())?)?;
    let path = cfg.out.join(FEATURES);
    table.write_csv(&path)?;
    Ok(vec![path])
}

fn pixels(scene: &HyperspectralScene) -> Vec<f64> {
    scene.cube().iter().map(|&v| v as f64).collect()
}

/// Trains the masked autoencoder and/or the autoencoder on scene pixels.
/// `args.model` selects `mae` or `ae`; both when absent.
fn run_pretrain(cfg: &PipelineConfig, args: &StageArgs) -> Result<Vec<PathBuf>> {
    let (do_mae, do_ae) = match args.model.as_deref() {
        None => (true, true),
        Some("mae") => (true, false),
        Some("ae") => (false, true),
        Some(m) => return Err(PipelineError::Config(vec![format!("pretrain model {m:?} must be mae or ae")])),
    };
    let stem = scene_path(cfg);
    require(&stem.with_extension("json"), "generate")?;
    let scene = read_scene(&stem)?;
    let b = scene.bands();
    let all = pixels(&scene);
    let n = all.len() / b;
    let data = match cfg.pretrain_pixels {
        Some(cap) if cap < n => {
            let mut pick = index::sample(&mut rng::stream(cfg.seed, &[PRETRAIN_STREAM]), n, cap).into_vec();
            pick.sort_unstable();
            pick.iter().flat_map(|&i| all[i * b..(i + 1) * b].to_vec()).collect()
        }
        _ => all,
    };
    let dir = cfg.out.join(MODELS_DIR);
    mkdir(&dir)?;
    let mut outputs = Vec::new();
    if do_mae {
        let (model, curve) = train_mae(&data, b, &cfg.mae)?;
        let path = dir.join("mae.bin");
        save_mae(&model, &curve, &path)?;
        outputs.extend([path.clone(), path.with_extension("json"), path.with_extension("loss.csv")]);
    }
    if do_ae {
        let (model, curve) = train_autoencoder(&data, b, &cfg.ae)?;
        let path = dir.join("ae.bin");
        save_ae(&model, &curve, &path)?;
        outputs.extend([path.clone(), path.with_extension("json"), path.with_extension("loss.csv")]);
    }
    Ok(outputs)
}

fn split_files(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.out.join(SPLITS);
    require(&dir, "split")?;
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(&dir)
        .map_err(io_err(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let i = p.file_stem()?.to_str()?.strip_prefix("split_")?.parse().ok()?;
            Some((i, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::MissingArtifact { path: dir.join("split_0.json").display().to_string(), command: "split" });
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn split_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Labeled pixel ids (`row * width + col`) per set for one split file.
fn pixels_by_set(cfg: &PipelineConfig, inp: &Inputs, split: &Path) -> Result<BTreeMap<SplitSet, Vec<usize>>> {
    let groups_file = cfg.out.join(GROUPS);
    require(&groups_file, "split")?;
    let grouped = read_ground_truth(&groups_file)?;
    let n_groups = grouped.group_count().ok_or_else(|| PipelineError::Format { path: groups_file.display().to_string(), reason: "polygons without group ids".into() })?;
    let gm = group_map(inp.scene.height(), inp.scene.width(), &grouped)?;
    let sets = SplitFile::read(split)?.sets(n_groups)?;
    let mut out: BTreeMap<SplitSet, Vec<usize>> = BTreeMap::new();
    for (i, (&label, g)) in inp.labels.labels.iter().zip(&gm.groups).enumerate() {
        if let (true, Some(g)) = (label != 0, g) {
            out.entry(sets[*g]).or_default().push(i);
        }
    }
    Ok(out)
}

fn labeled_set(inp: &Inputs, ids: &[usize], tag: SplitSet) -> Result<LabeledSet> {
    let b = inp.scene.bands();
    let cube = inp.scene.cube();
    let features = ids.iter().flat_map(|&i| cube[i * b..(i + 1) * b].iter().map(|&v| v as f64)).collect();
    let labels = ids.iter().map(|&i| inp.labels.labels[i]).collect();
    Ok(LabeledSet::new(features, b, labels, inp.n_classes, tag)?)
}

const PREDICTION_HEADER: [&str; 5] = ["pixel_id", "row", "col", "true_label", "predicted_label"];

fn write_predictions(path: &Path, width: usize, ids: &[usize], truth: &[u32], predicted: &[u32]) -> Result<()> {
    let fail = |e: csv::Error| PipelineError::Format { path: path.display().to_string(), reason: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(PREDICTION_HEADER).map_err(fail)?;
    for ((&id, t), p) in ids.iter().zip(truth).zip(predicted) {
        w.write_record([id.to_string(), (id / width).to_string(), (id % width).to_string(), t.to_string(), p.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

/// `(pixel id, true label, predicted label)` rows.
fn read_predictions(path: &Path) -> Result<Vec<(usize, u32, u32)>> {
    let fail = |reason: String| PipelineError::Format { path: path.display().to_string(), reason };
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| fail(e.to_string()))?.iter().map(String::from).collect();
    if header != PREDICTION_HEADER {
        return Err(fail(format!("header must be {}", PREDICTION_HEADER.join(","))));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<u64>().map_err(|e| fail(format!("column {}: {e}", PREDICTION_HEADER[i])));
            Ok((num(0)? as usize, num(3)? as u32, num(4)? as u32))
        })
        .collect()
}

/// Trains KNN and RF heads on the train pixels of every split (raw, AE and
/// MAE features) and writes test-pixel predictions.
fn run_classify(cfg: &PipelineConfig, args: &StageArgs) -> Result<Vec<PathBuf>> {
    let models = models_for(args)?;
    let inp = load_inputs(cfg)?;
    let splits = split_files(cfg)?;
    let mut extractors: Vec<(Encoder, Box<dyn Extractor>)> = Vec::new();
    let b = inp.scene.bands();
    for enc in [Encoder::Raw, Encoder::Ae, Encoder::Mae] {
        if !models.iter().any(|m| m.encoder() == enc) {
            continue;
        }
        let boxed: Box<dyn Extractor> = match enc {
            Encoder::Raw => Box::new(Identity(b)),
            Encoder::Ae => {
                let path = cfg.out.join(MODELS_DIR).join("ae.bin");
                require(&path, "pretrain")?;
                Box::new(load_ae(&path)?)
            }
            Encoder::Mae => {
                let path = cfg.out.join(MODELS_DIR).join("mae.bin");
                require(&path, "pretrain")?;
                Box::new(load_mae(&path)?)
            }
        };
        extractors.push((enc, boxed));
    }
    let mut outputs = Vec::new();
    for split in &splits {
        let by_set = pixels_by_set(cfg, &inp, split)?;
        let train_ids = by_set.get(&SplitSet::Train).cloned().unwrap_or_default();
        let test_ids = by_set.get(&SplitSet::Test).cloned().unwrap_or_default();
        let train_raw = labeled_set(&inp, &train_ids, SplitSet::Train)?;
        let test_raw = labeled_set(&inp, &test_ids, SplitSet::Test)?;
        let dir = cfg.out.join(PREDICTIONS).join(split_name(split));
        mkdir(&dir)?;
        for (enc, ex) in &extractors {
            let train = train_raw.map_features(ex.as_ref())?;
            let test = test_raw.map_features(ex.as_ref())?;
            for m in models.iter().filter(|m| m.encoder() == *enc) {
                let predicted = if m.is_knn() {
                    knn_fit_predict(&train, test.features(), cfg.classifier.knn_k.min(train.len().max(1)))?
                } else {
                    rf_predict(&rf_fit(&train, &cfg.classifier.forest)?, test.features())?
                };
                let path = dir.join(format!("{}.csv", m.name()));
                write_predictions(&path, inp.scene.width(), &test_ids, test.labels(), &predicted)?;
                outputs.push(path);
            }
        }
    }
    Ok(outputs)
}

fn resolve_split(cfg: &PipelineConfig, path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        cfg.out.join(path)
    } else {
        path.to_path_buf()
    }
}

/// Scores predictions against the test pixels of their split. Fails when a
/// prediction file does not cover exactly those pixels.
fn run_evaluate(cfg: &PipelineConfig, args: &StageArgs) -> Result<Vec<PathBuf>> {
    let models = models_for(args)?;
    let inp = load_inputs(cfg)?;
    let splits = match &args.split_file {
        Some(p) => {
            let p = resolve_split(cfg, p);
            require(&p, "split")?;
            vec![p]
        }
        None => split_files(cfg)?,
    };
    let mut outputs = Vec::new();
    for split in &splits {
        let test_ids = pixels_by_set(cfg, &inp, split)?.remove(&SplitSet::Test).unwrap_or_default();
        let dir = cfg.out.join(METRICS).join(split_name(split));
        mkdir(&dir)?;
        for m in &models {
            let pred_path = cfg.out.join(PREDICTIONS).join(split_name(split)).join(format!("{}.csv", m.name()));
            if args.model.is_none() && !pred_path.exists() {
                continue;
            }
            require(&pred_path, "classify")?;
            let rows = read_predictions(&pred_path)?;
            let ids: BTreeSet<usize> = rows.iter().map(|r| r.0).collect();
            if ids.len() != rows.len() || ids.iter().ne(test_ids.iter()) {
                return Err(PipelineError::Format {
                    path: pred_path.display().to_string(),
                    reason: format!("predictions cover {} pixels, the split's test set has {}; they must match exactly", ids.len(), test_ids.len()),
                });
            }
            if let Some(r) = rows.iter().find(|r| r.1 != inp.labels.labels[r.0]) {
                return Err(PipelineError::Format { path: pred_path.display().to_string(), reason: format!("pixel {} has label {} in the ground truth, not {}", r.0, inp.labels.labels[r.0], r.1) });
            }
            let truth: Vec<u32> = rows.iter().map(|r| r.1).collect();
            let predicted: Vec<u32> = rows.iter().map(|r| r.2).collect();
            let report = MetricsReport::new(&ConfusionMatrix::from_labels(&truth, &predicted, inp.n_classes)?)?;
            let path = dir.join(format!("{}.json", m.name()));
            write_json(&path, &report)?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub label: String,
    pub mean_oa: f64,
    pub mean_macro_f1: f64,
    pub splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// In the fixed order KNN, AE + KNN, MAE + KNN, RF, AE + RF, MAE + RF.
    pub rows: Vec<ReportRow>,
    /// split -> model -> `[oa, macro_f1]`.
    pub per_split: BTreeMap<String, BTreeMap<String, [f64; 2]>>,
}

/// Averages OA and macro-F1 over every evaluated split.
fn run_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.out.join(METRICS);
    require(&dir, "evaluate")?;
    let mut per_split: BTreeMap<String, BTreeMap<String, [f64; 2]>> = BTreeMap::new();
    for split in split_files(cfg)? {
        let name = split_name(&split);
        for m in MODELS {
            let path = dir.join(&name).join(format!("{}.json", m.name()));
            if path.exists() {
                let r: MetricsReport = read_json(&path)?;
                per_split.entry(name.clone()).or_default().insert(m.name().into(), [r.oa, r.macro_f1]);
            }
        }
    }
    let rows = MODELS
        .iter()
        .filter_map(|m| {
            let vals: Vec<[f64; 2]> = per_split.values().filter_map(|s| s.get(m.name()).copied()).collect();
            (!vals.is_empty()).then(|| {
                let n = vals.len() as f64;
                ReportRow {
                    model: m.name().into(),
                    label: m.label().into(),
                    mean_oa: vals.iter().map(|v| v[0]).sum::<f64>() / n,
                    mean_macro_f1: vals.iter().map(|v| v[1]).sum::<f64>() / n,
                    splits: vals.len(),
                }
            })
        })
        .collect::<Vec<_>>();
    if rows.is_empty() {
        return Err(PipelineError::MissingArtifact { path: dir.display().to_string(), command: "evaluate" });
    }
    let path = cfg.out.join(REPORT);
    write_json(&path, &Report { rows, per_split })?;
    Ok(vec![path])
}

/// Writes a seeded synthetic scene and its ground truth into the run directory.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<StageRecord> {
    execute(cfg, Stage::Generate, &StageArgs::default(), false)
}

/// Groups the polygons, solves the split problem and writes `split.k`
/// diverse split files.
pub fn cmd_split(cfg: &PipelineConfig) -> Result<StageRecord> {
    execute(cfg, Stage::Split, &StageArgs::default(), false)
}

pub fn cmd_features(cfg: &PipelineConfig) -> Result<StageRecord> {
    execute(cfg, Stage::Features, &StageArgs::default(), false)
}

/// `args.model` selects `mae` or `ae`; both when absent.
pub fn cmd_pretrain(cfg: &PipelineConfig, args: &StageArgs) -> Result<StageRecord> {
    execute(cfg, Stage::Pretrain, args, false)
}

pub fn cmd_classify(cfg: &PipelineConfig, args: &StageArgs) -> Result<StageRecord> {
    execute(cfg, Stage::Classify, args, false)
}

pub fn cmd_evaluate(cfg: &PipelineConfig, args: &StageArgs) -> Result<StageRecord> {
    execute(cfg, Stage::Evaluate, args, false)
}

pub fn cmd_report(cfg: &PipelineConfig) -> Result<StageRecord> {
    execute(cfg, Stage::Report, &StageArgs::default(), false)
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Files a stage reads, used to key its cache entry.
fn stage_inputs(cfg: &PipelineConfig, stage: Stage) -> Result<Vec<PathBuf>> {
    let stem = scene_path(cfg);
    let mut files = Vec::new();
    if stage != Stage::Generate && stage != Stage::Report {
        files.extend([stem.with_extension("json"), stem.with_extension("bin"), gt_path(cfg)]);
    }
    let dirs: &[&str] = match stage {
        Stage::Generate | Stage::Split | Stage::Features | Stage::Pretrain => &[],
        Stage::Classify => &[GROUPS, SPLITS, MODELS_DIR],
        Stage::Evaluate => &[GROUPS, SPLITS, PREDICTIONS],
        Stage::Report => &[SPLITS, METRICS],
    };
    for d in dirs {
        let p = cfg.out.join(d);
        if p.is_file() {
            files.push(p);
        } else {
            files_under(&p, &mut files)?;
        }
    }
    files.retain(|f| f.exists());
    files.sort();
    Ok(files)
}

fn cache_key(cfg: &PipelineConfig, stage: Stage, args: &StageArgs) -> Result<String> {
    let settings = match stage {
        Stage::Generate => serde_json::json!([cfg.seed, cfg.generate]),
        Stage::Split => serde_json::json!([cfg.seed, cfg.split]),
        Stage::Pretrain => serde_json::json!([cfg.seed, cfg.mae, cfg.ae, cfg.pretrain_pixels]),
        Stage::Classify => serde_json::json!([cfg.seed, cfg.classifier]),
        Stage::Features | Stage::Evaluate | Stage::Report => serde_json::Value::Null,
    };
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(stage, args, settings)).expect("settings serialize"));
    for f in stage_inputs(cfg, stage)? {
        h.update(relative(cfg, &f).as_bytes());
        h.update(sha256_file(&f)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn still_valid(cfg: &PipelineConfig, rec: &StageRecord) -> bool {
    rec.outputs.iter().all(|(rel, hash)| sha256_file(&cfg.out.join(rel)).is_ok_and(|h| &h == hash))
}

/// Runs one stage, or reuses its previous outputs when its configuration,
/// arguments and input files are unchanged and the outputs are intact.
fn execute(cfg: &PipelineConfig, stage: Stage, args: &StageArgs, force: bool) -> Result<StageRecord> {
    cfg.validate()?;
    mkdir(&cfg.out)?;
    let args = StageArgs { split_file: args.split_file.as_ref().map(|p| PathBuf::from(relative(cfg, &resolve_split(cfg, p)))), ..args.clone() };
    let mut manifest = RunManifest::load_or_new(cfg)?;
    let key = cache_key(cfg, stage, &args)?;
    if !force {
        if let Some(rec) = manifest.stages.iter().find(|r| r.stage == stage && r.args == args && r.key == key && still_valid(cfg, r)) {
            return Ok(rec.clone());
        }
    }
    let started = Instant::now();
    let outputs = match stage {
        Stage::Generate => run_generate(cfg),
        Stage::Split => run_split(cfg),
        Stage::Features => run_features(cfg),
        Stage::Pretrain => run_pretrain(cfg, &args),
        Stage::Classify => run_classify(cfg, &args),
        Stage::Evaluate => run_evaluate(cfg, &args),
        Stage::Report => run_report(cfg),
    }?;
    if stage != Stage::Generate {
        for p in [cfg.scene.as_ref().map(|s| s.with_extension("json")), cfg.scene.as_ref().map(|s| s.with_extension("bin")), cfg.ground_truth.clone()].into_iter().flatten() {
            manifest.inputs.insert(p.display().to_string(), sha256_file(&p)?);
        }
    }
    let outputs = outputs.iter().map(|p| Ok((relative(cfg, p), sha256_file(p)?))).collect::<Result<BTreeMap<_, _>>>()?;
    let rec = StageRecord { stage, args, key, outputs, seconds: started.elapsed().as_secs_f64() };
    manifest.record(rec.clone());
    manifest.write_atomic(&cfg.out)?;
    Ok(rec)
}

/// Reruns every stage of `manifest` into `out` and checks that each output
/// file hashes to its recorded value.
pub fn replay(manifest: &RunManifest, out: &Path) -> Result<RunManifest> {
    let mut cfg = manifest.config.clone();
    cfg.out = out.to_path_buf();
    let mut mismatches = Vec::new();
    for (path, hash) in &manifest.inputs {
        let now = sha256_file(Path::new(path))?;
        if &now != hash {
            mismatches.push(format!("input {path} changed since the recorded run"));
        }
    }
    if !mismatches.is_empty() {
        return Err(PipelineError::ReplayMismatch(mismatches));
    }
    for rec in &manifest.stages {
        let new = execute(&cfg, rec.stage, &rec.args, true)?;
        for (path, hash) in &rec.outputs {
            match new.outputs.get(path) {
                Some(h) if h == hash => {}
                Some(_) => mismatches.push(format!("{path} differs")),
                None => mismatches.push(format!("{path} was not produced")),
            }
        }
    }
    if mismatches.is_empty() {
        RunManifest::read(&out.join(super::manifest::MANIFEST_FILE))
    } else {
        Err(PipelineError::ReplayMismatch(mismatches))
    }
}
