//! Command implementations. Each writes its artifacts under the output
//! directory plus a run record (`runs/<command>.json`) holding the full
//! config, the seeds and the crate version, and returns its results.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use maplur_core::autodiff::{decode_checkpoint, encode_checkpoint};
use maplur_core::evalstat::{
    area_sweep_batch, compare_models, data_sweep_batch, evaluate, model_seed, multirun_batch, run_seed, EvalResult,
    Metric, RunSample, SignificanceReport, SweepModel, SweepTable,
};
use maplur_core::features::FEATURE_NAMES;
use maplur_core::geo::GeoPoint;
use maplur_core::interpret::{
    area_probe, distance_probe, entity_probe, guided_saliency, EntityTable, ProbeCurves, SaliencyMap,
};
use maplur_core::model::{predict_batch, EpochRecord, MapLurSpec, TrainedModel};
use maplur_core::rng::derive;
use maplur_core::scene::{Palette, RoadClass, TileImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, IoContext, Result};
use crate::io::{self, ColumnType};
use crate::manifest::{self, Manifest, Metadata};
use crate::models::{ModelKind, Workspace};
use crate::render;
use crate::synth::{self, Split, Summary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a command ran with, enough to re-run it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub command: String,
    pub version: String,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<PathBuf>,
    pub config: ExperimentConfig,
}

fn record(cfg: &ExperimentConfig, command: &str, seeds: BTreeMap<String, u64>, outputs: Vec<PathBuf>) -> Result<()> {
    let file = RunFile { command: command.into(), version: VERSION.into(), seeds, outputs, config: cfg.clone() };
    io::write_json(&cfg.output_dir.join("runs").join(format!("{}.json", command.replace(' ', "-"))), &file)
}

fn seeds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Config(e.to_string()))
}

/// Runs `f` once per seed on at most `jobs` threads, preserving order.
fn run_all<F>(jobs: usize, seeds: &[u64], f: F) -> Vec<maplur_core::Result<EvalResult>>
where
    F: Fn(u64) -> Result<EvalResult> + Sync,
{
    let run = |s: u64| match f(s) {
        Ok(r) => Ok(r),
        Err(Error::Core(e)) => Err(e),
        Err(e) => Err(maplur_core::Error::InvalidArgument(e.to_string())),
    };
    match pool(jobs) {
        Ok(p) => p.install(|| seeds.par_iter().map(|&s| run(s)).collect()),
        Err(_) => seeds.iter().map(|&s| run(s)).collect(),
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

// ---------------------------------------------------------------- synth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub set: String,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryRow {
    fn new(set: &str, s: Summary) -> Self {
        Self { set: set.into(), count: s.count, mean: s.mean, std_dev: s.std_dev, min: s.min, max: s.max }
    }
}

pub struct SynthOutput {
    pub dir: PathBuf,
    pub summary: Vec<SummaryRow>,
}

/// Generates a city, places and renders the sample windows and writes the
/// dataset to `<output_dir>/dataset` with target statistics per split.
pub fn synth(cfg: &ExperimentConfig) -> Result<SynthOutput> {
    let scene = synth::city(&cfg.synth, cfg.seed)?;
    let dataset = pool(cfg.jobs)?.install(|| synth::synthesize(&cfg.synth, &scene, cfg.seed))?;
    let dir = cfg.output_dir.join("dataset");
    manifest::write(&dir, &Metadata::new(&cfg.synth, cfg.seed), &scene, &dataset)?;
    let mut summary = Vec::new();
    for (name, split) in [("train", Some(Split::Train)), ("test", Some(Split::Test)), ("all", None)] {
        let idx: Vec<usize> = match split {
            Some(s) => dataset.indices(s),
            None => (0..dataset.samples.len()).collect(),
        };
        if let Some(s) = synth::summarize(&dataset.targets(&idx)) {
            summary.push(SummaryRow::new(name, s));
        }
    }
    let summary_path = cfg.output_dir.join("synth").join("summary.csv");
    io::write_csv(&summary_path, &summary)?;
    record(cfg, "synth", seeds(&[("base", cfg.seed)]), vec![dir.join(manifest::SAMPLES_CSV), summary_path])?;
    Ok(SynthOutput { dir, summary })
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Manifest> {
    let m = manifest::read(&cfg.dataset_dir())?;
    let expected = format!("{:016x}", cfg.synth.palette.fingerprint());
    if m.metadata.palette_hash != expected {
        return Err(Error::data(
            m.dir.join(manifest::METADATA_JSON),
            format!("dataset palette {} differs from the configured palette {expected}", m.metadata.palette_hash),
        ));
    }
    Ok(m)
}

/// The dataset's tile geometry carried into the config, so models and
/// probes match the stored images.
fn aligned(cfg: &ExperimentConfig, m: &Manifest) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.synth.tile_px = m.metadata.tile_px;
    c.synth.channels = m.metadata.channels;
    c.synth.side_m = m.metadata.side_m;
    c.synth.zoom = m.metadata.zoom;
    c
}

// ------------------------------------------------------------- features

pub fn features(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let m = load_dataset(cfg)?;
    let scene = m.scene()?;
    let ws = Workspace::new(cfg, &m.dataset, Some(&scene))?;
    let table = ws.features.as_ref().expect("scene given");
    let mut header = vec!["id", "split"];
    header.extend(FEATURE_NAMES.iter());
    let rows: Vec<Vec<String>> = m
        .dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = vec![s.id.clone(), split_name(s.split).to_string()];
            r.extend(table.row(i).iter().map(|v| v.to_string()));
            r
        })
        .collect();
    let path = cfg.output_dir.join("features").join("features.csv");
    io::write_csv_records(&path, &header, &rows)?;
    record(cfg, "features", seeds(&[]), vec![path.clone()])?;
    Ok(path)
}

pub fn features_schema() -> Vec<(&'static str, ColumnType)> {
    let mut s = vec![("id", ColumnType::Text), ("split", ColumnType::Text)];
    s.extend(FEATURE_NAMES.iter().map(|n| (*n, ColumnType::Real)));
    s
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: MapLurSpec,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_score: f64,
    pub stopped_early: bool,
    pub epochs_run: usize,
    /// Sample ids the network trained on, validation rows included.
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

pub const MODEL_CHECKPOINT: &str = "model.ckpt";
pub const MODEL_JSON: &str = "model.json";

pub fn model_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("model")
}

/// Seed of the model trained by `train`: the first CNN evaluation run.
pub fn train_seed(cfg: &ExperimentConfig) -> u64 {
    run_seed(model_seed(cfg.seed, ModelKind::Cnn as usize), 0)
}

pub fn save_model(dir: &Path, model: &TrainedModel, file: &ModelFile) -> Result<()> {
    io::write_atomic(&dir.join(MODEL_CHECKPOINT), &encode_checkpoint(&model.net))?;
    io::write_json(&dir.join(MODEL_JSON), file)?;
    io::write_csv(&dir.join("history.csv"), &model.history)
}

pub fn load_model(dir: &Path) -> Result<(TrainedModel, ModelFile)> {
    let file: ModelFile = io::read_json(&dir.join(MODEL_JSON))?;
    let ckpt = dir.join(MODEL_CHECKPOINT);
    let bytes = std::fs::read(&ckpt).at(&ckpt)?;
    let net = decode_checkpoint(&bytes).map_err(|e| Error::data(&ckpt, e))?;
    let mut model = TrainedModel::from_network(file.spec.clone(), net);
    model.best_epoch = file.best_epoch;
    model.best_val_score = file.best_val_score;
    model.stopped_early = file.stopped_early;
    Ok((model, file))
}

pub struct TrainOutput {
    pub model: TrainedModel,
    pub file: ModelFile,
    pub test: EvalResult,
}

/// Trains the CNN on the training split, saves it and scores the test split.
pub fn train(cfg: &ExperimentConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutput> {
    let m = load_dataset(cfg)?;
    let cfg = &aligned(cfg, &m);
    let tr = m.dataset.indices(Split::Train);
    let te = m.dataset.indices(Split::Test);
    let seed = train_seed(cfg);
    let images = m.dataset.images(&tr);
    let model = maplur_core::model::train_with(
        &cfg.model_spec()?,
        &images,
        &m.dataset.targets(&tr),
        &maplur_core::model::TrainConfig { seed, ..cfg.train.clone() },
        on_epoch,
    )?;
    let test = evaluate(&m.dataset.targets(&te), &predict_batch(&model, &m.dataset.images(&te))?)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| m.dataset.samples[i].id.clone()).collect::<Vec<_>>();
    let file = ModelFile {
        spec: model.spec.clone(),
        seed,
        best_epoch: model.best_epoch,
        best_val_score: model.best_val_score,
        stopped_early: model.stopped_early,
        epochs_run: model.epochs_run(),
        train_ids: ids(&tr),
        validation_ids: model.validation_indices.iter().map(|&i| m.dataset.samples[tr[i]].id.clone()).collect(),
    };
    let dir = model_dir(cfg);
    save_model(&dir, &model, &file)?;
    record(cfg, "train", seeds(&[("base", cfg.seed), ("train", seed)]), vec![dir.join("history.csv")])?;
    Ok(TrainOutput { model, file, test })
}

// ----------------------------------------------------------------- eval

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub model: String,
    pub run: usize,
    pub seed: u64,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub n_test: Option<usize>,
    pub failure: Option<String>,
}

pub fn run_rows(sample: &RunSample) -> Vec<RunRow> {
    sample
        .runs
        .iter()
        .map(|r| RunRow {
            model: sample.model.clone(),
            run: r.index,
            seed: r.seed,
            r2: r.result.map(|e| e.r2),
            rmse: r.result.map(|e| e.rmse),
            n_test: r.result.map(|e| e.n_test),
            failure: r.failure.clone(),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub model: ModelKind,
    pub split: Split,
    /// Defaults to the configured run count.
    pub runs: Option<usize>,
    /// Score the saved CNN instead of retraining.
    pub use_checkpoint: bool,
}

/// Fits the model `runs` times with seeded restarts on the training split
/// and scores each fit on the chosen split.
pub fn eval(cfg: &ExperimentConfig, opts: &EvalOptions) -> Result<RunSample> {
    let m = load_dataset(cfg)?;
    let cfg = &aligned(cfg, &m);
    let tr = m.dataset.indices(Split::Train);
    let target = m.dataset.indices(opts.split);
    let y = m.dataset.targets(&target);
    let base = model_seed(cfg.seed, opts.model as usize);
    let sample = if opts.use_checkpoint {
        if opts.model != ModelKind::Cnn {
            return Err(Error::Config("only the CNN has a checkpoint".into()));
        }
        let (model, file) = load_model(&model_dir(cfg))?;
        let r = evaluate(&y, &predict_batch(&model, &m.dataset.images(&target))?)?;
        RunSample {
            model: opts.model.name().into(),
            runs: vec![maplur_core::evalstat::run_record(0, file.seed, Ok(r))?],
        }
    } else {
        let scene = if opts.model.uses_images() { None } else { Some(m.scene()?) };
        let ws = Workspace::new(cfg, &m.dataset, scene.as_ref())?;
        let runs = opts.runs.unwrap_or(cfg.runs);
        multirun_batch(opts.model.name(), runs, base, |seeds| {
            run_all(cfg.jobs, seeds, |s| Ok(evaluate(&y, &ws.fit_predict(opts.model, &tr, &target, None, s)?)?))
        })?
    };
    let dir = cfg.output_dir.join("eval");
    let stem = format!("{}-{}", opts.model.name(), split_name(opts.split));
    let csv = dir.join(format!("{stem}.csv"));
    io::write_csv(&csv, &run_rows(&sample))?;
    io::write_json(&dir.join(format!("{stem}.json")), &sample)?;
    record(cfg, &format!("eval-{stem}"), seeds(&[("base", cfg.seed), ("model", base)]), vec![csv])?;
    Ok(sample)
}

pub const RUNS_SCHEMA: &[(&str, ColumnType)] = &[
    ("model", ColumnType::Text),
    ("run", ColumnType::Integer),
    ("seed", ColumnType::Integer),
    ("r2", ColumnType::Real),
    ("rmse", ColumnType::Real),
    ("n_test", ColumnType::Integer),
    ("failure", ColumnType::Text),
];

// -------------------------------------------------------------- compare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub test: String,
    pub statistic: f64,
    pub p: f64,
    pub threshold: f64,
    pub significant: bool,
    pub degenerate: bool,
    pub mean_difference: f64,
    pub n_pairs: usize,
}

#[derive(Clone, Debug)]
pub struct CompareOutput {
    pub r2: SignificanceReport,
    pub rmse: SignificanceReport,
}

/// Pairwise significance tests between run samples. With a reference
/// model only pairs involving it are kept; the hypothesis count defaults
/// to the number of pairs reported.
pub fn compare(
    cfg: &ExperimentConfig,
    samples: &[RunSample],
    reference: Option<&str>,
    hypotheses: Option<usize>,
) -> Result<CompareOutput> {
    if samples.len() < 2 {
        return Err(Error::Config("comparison needs at least two run samples".into()));
    }
    if let Some(r) = reference {
        if !samples.iter().any(|s| s.model == r) {
            return Err(Error::Config(format!("reference model `{r}` is not among the inputs")));
        }
    }
    let n_pairs = match reference {
        Some(_) => samples.len() - 1,
        None => samples.len() * (samples.len() - 1) / 2,
    };
    let n_hyp = hypotheses.unwrap_or(n_pairs);
    let run = |metric| -> Result<SignificanceReport> {
        let mut rep = compare_models(samples, n_hyp, metric)?;
        if let Some(r) = reference {
            rep.pairs.retain(|p| p.a == r || p.b == r);
        }
        Ok(rep)
    };
    let out = CompareOutput { r2: run(Metric::R2)?, rmse: run(Metric::Rmse)? };
    let dir = cfg.output_dir.join("compare");
    let mut rows = Vec::new();
    let mut normality = Vec::new();
    for (name, rep) in [("r2", &out.r2), ("rmse", &out.rmse)] {
        for p in &rep.pairs {
            rows.push(PairRow {
                metric: name.into(),
                a: p.a.clone(),
                b: p.b.clone(),
                test: format!("{:?}", p.test).to_lowercase(),
                statistic: p.statistic,
                p: p.p,
                threshold: rep.threshold,
                significant: p.significant,
                degenerate: p.degenerate,
                mean_difference: p.mean_difference,
                n_pairs: p.n_pairs,
            });
        }
        for n in &rep.normality {
            normality.push(vec![
                name.to_string(),
                n.model.clone(),
                n.test.map_or(String::new(), |t| t.k2.to_string()),
                n.test.map_or(String::new(), |t| t.p.to_string()),
                n.normal.to_string(),
            ]);
        }
    }
    let csv = dir.join("pairs.csv");
    io::write_csv(&csv, &rows)?;
    io::write_csv_records(&dir.join("normality.csv"), &["metric", "model", "k2", "p", "normal"], &normality)?;
    io::write_json(&dir.join("report.json"), &(&out.r2, &out.rmse))?;
    let mut s = seeds(&[]);
    for sample in samples {
        for r in &sample.runs {
            s.insert(format!("{}/{}", sample.model, r.index), r.seed);
        }
    }
    record(cfg, "compare", s, vec![csv])?;
    Ok(out)
}

pub fn read_samples(paths: &[PathBuf]) -> Result<Vec<RunSample>> {
    paths.iter().map(|p| io::read_json(p)).collect()
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub setting: f64,
    pub model: String,
    pub n_train: usize,
    pub runs: usize,
    pub completed: usize,
    pub mean_r2: f64,
    pub mean_rmse: f64,
    pub seeds: String,
}

fn sweep_rows(t: &SweepTable) -> Vec<SweepCsvRow> {
    t.rows
        .iter()
        .map(|r| SweepCsvRow {
            setting: r.setting,
            model: r.model.clone(),
            n_train: r.n_train,
            runs: r.sample.runs.len(),
            completed: r.sample.completed(),
            mean_r2: r.mean_r2,
            mean_rmse: r.mean_rmse,
            seeds: r.sample.seeds().iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        })
        .collect()
}

fn sweep_models(cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Vec<SweepModel> {
    ModelKind::ALL
        .iter()
        .map(|k| SweepModel {
            name: k.name().into(),
            runs: if kinds.contains(k) {
                if *k == ModelKind::Cnn {
                    cfg.cnn_sweep_runs
                } else {
                    cfg.runs
                }
            } else {
                0
            },
            min_train: if *k == ModelKind::Cnn { 2 * cfg.train.batch_size } else { 2 * cfg.rf.folds.max(cfg.mlp.folds) },
        })
        .collect()
}

/// Model list in [`ModelKind::ALL`] order (so sweep seeds match `eval`),
/// with unrequested models dropped.
fn sweep_over(
    cfg: &ExperimentConfig,
    kinds: &[ModelKind],
    mut f: impl FnMut(&[SweepModel]) -> maplur_core::Result<SweepTable>,
) -> Result<SweepTable> {
    let all = sweep_models(cfg, kinds);
    let mut table = f(&all.iter().map(|m| SweepModel { runs: m.runs.max(1), ..m.clone() }).collect::<Vec<_>>())?;
    let wanted: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    table.rows.retain(|r| wanted.contains(&r.model.as_str()));
    table.skipped.retain(|s| wanted.contains(&s.1.as_str()));
    Ok(table)
}

fn write_sweep(cfg: &ExperimentConfig, name: &str, table: &SweepTable) -> Result<PathBuf> {
    let dir = cfg.output_dir.join("sweep");
    let csv = dir.join(format!("{name}.csv"));
    io::write_csv(&csv, &sweep_rows(table))?;
    io::write_json(&dir.join(format!("{name}.json")), table)?;
    Ok(csv)
}

/// Data-size sweep over nested subsets of the training split.
pub fn sweep_data(cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Result<SweepTable> {
    let m = load_dataset(cfg)?;
    let cfg = &aligned(cfg, &m);
    let tr = m.dataset.indices(Split::Train);
    let te = m.dataset.indices(Split::Test);
    let y = m.dataset.targets(&te);
    let needs_scene = kinds.iter().any(|k| !k.uses_images());
    let scene = if needs_scene { Some(m.scene()?) } else { None };
    let ws = Workspace::new(cfg, &m.dataset, scene.as_ref())?;
    let table = sweep_over(cfg, kinds, |models| {
        data_sweep_batch(&cfg.fractions, models, tr.len(), cfg.seed, |mi, subset, seeds| {
            let kind = ModelKind::ALL[mi];
            if !kinds.contains(&kind) {
                return seeds.iter().map(|_| Ok(EvalResult { r2: f64::NAN, rmse: f64::NAN, n_test: 0 })).collect();
            }
            let rows: Vec<usize> = subset.iter().map(|&i| tr[i]).collect();
            run_all(cfg.jobs, seeds, |s| Ok(evaluate(&y, &ws.fit_predict(kind, &rows, &te, None, s)?)?))
        })
    })?;
    let csv = write_sweep(cfg, "data", &table)?;
    record(cfg, "sweep-data", seeds(&[("base", cfg.seed)]), vec![csv])?;
    Ok(table)
}

/// Area-size sweep: the dataset's windows re-rendered at each side length
/// (same centers, same targets, same tile size).
pub fn sweep_area(cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Result<SweepTable> {
    let m = load_dataset(cfg)?;
    let cfg = &aligned(cfg, &m);
    let scene = m.scene()?;
    let tr = m.dataset.indices(Split::Train);
    let te = m.dataset.indices(Split::Test);
    let y = m.dataset.targets(&te);
    let ws = Workspace::new(cfg, &m.dataset, Some(&scene))?;
    let mut tiles: HashMap<u64, Vec<TileImage>> = HashMap::new();
    let table = sweep_over(cfg, kinds, |models| {
        area_sweep_batch(&cfg.area_sides_m, models, cfg.seed, |side, mi, seeds| {
            let kind = ModelKind::ALL[mi];
            if !kinds.contains(&kind) {
                return seeds.iter().map(|_| Ok(EvalResult { r2: f64::NAN, rmse: f64::NAN, n_test: 0 })).collect();
            }
            let images = if kind.uses_images() {
                match tiles.entry(side.to_bits()) {
                    std::collections::hash_map::Entry::Occupied(e) => Some(&*e.into_mut()),
                    std::collections::hash_map::Entry::Vacant(v) => match rerender(cfg, &scene, &m, side) {
                        Ok(t) => Some(&*v.insert(t)),
                        Err(e) => {
                            let msg = e.to_string();
                            return seeds.iter().map(|_| Err(maplur_core::Error::InvalidArgument(msg.clone()))).collect();
                        }
                    },
                }
            } else {
                None
            };
            run_all(cfg.jobs, seeds, |s| Ok(evaluate(&y, &ws.fit_predict(kind, &tr, &te, images.map(|v| &v[..]), s)?)?))
        })
    })?;
    let csv = write_sweep(cfg, "area", &table)?;
    record(cfg, "sweep-area", seeds(&[("base", cfg.seed)]), vec![csv])?;
    Ok(table)
}

fn rerender(
    cfg: &ExperimentConfig,
    scene: &maplur_core::scene::Scene,
    m: &Manifest,
    side_m: f64,
) -> Result<Vec<TileImage>> {
    let mut sc = cfg.synth.clone();
    sc.side_m = side_m;
    pool(cfg.jobs)?.install(|| {
        m.dataset
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let c = GeoPoint::new(s.x_m, s.y_m, sc.city.lat_deg)?;
                synth::render_tile(scene, &sc, &c, derive(m.metadata.seed, 0x5A7_0000 + i as u64))
            })
            .collect()
    })
}

// ---------------------------------------------------------------- probe

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    Saliency,
    Entity,
    Area,
    Distance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyRow {
    pub id: String,
    pub raw_max: f64,
    pub degenerate: bool,
    pub road_pixels: usize,
    pub road_mean: Option<f64>,
    pub background_mean: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum ProbeOutput {
    Saliency(Vec<SaliencyRow>),
    Entity(EntityTable),
    Curves(ProbeCurves),
}

/// Pixels whose color is within one 8-bit step of a road color.
pub fn road_mask(tile: &TileImage, palette: &Palette) -> Vec<bool> {
    let colors: Vec<[f32; 3]> = RoadClass::ALL.iter().map(|c| palette.road(*c)).collect();
    let mut mask = Vec::with_capacity(tile.height() * tile.width());
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            let p = tile.pixel(y, x);
            mask.push(colors.iter().any(|c| c.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1.0 / 255.0 + 1e-6)));
        }
    }
    mask
}

/// Mean saliency over road pixels and over all other pixels.
pub fn road_background_means(map: &SaliencyMap, mask: &[bool]) -> (Option<f64>, Option<f64>) {
    let inverse: Vec<bool> = mask.iter().map(|m| !m).collect();
    (map.masked_mean(mask), map.masked_mean(&inverse))
}

/// Runs one probe family against the saved model. Saliency maps default to
/// the first `count` test samples.
pub fn probe(cfg: &ExperimentConfig, kind: ProbeKind, ids: &[String], count: usize) -> Result<ProbeOutput> {
    let (model, file) = load_model(&model_dir(cfg))?;
    let palette = &cfg.synth.palette;
    let dir = cfg.output_dir.join("probe");
    let mut cfg = cfg.clone();
    cfg.synth.tile_px = model.spec.input_px;
    let base_seeds = seeds(&[("model", file.seed)]);
    let out = match kind {
        ProbeKind::Entity => {
            let table = entity_probe(&model, palette, cfg.probe_road_width())?;
            let mut rows = Vec::new();
            for (oi, overlay) in table.overlays.iter().enumerate() {
                for (ei, entity) in table.entities.iter().enumerate() {
                    if let Some(v) = table.cells[oi][ei] {
                        let o = overlay.map_or("none".to_string(), |c| c.name().to_string());
                        rows.push(vec![o, entity.name().to_string(), v.to_string()]);
                    }
                }
            }
            let csv = dir.join("entity.csv");
            io::write_csv_records(&csv, &["overlay", "entity", "estimate_ugm3"], &rows)?;
            record(&cfg, "probe-entity", base_seeds, vec![csv])?;
            ProbeOutput::Entity(table)
        }
        ProbeKind::Area | ProbeKind::Distance => {
            let (curves, name, col) = if kind == ProbeKind::Area {
                (area_probe(&model, palette, &cfg.probe.area_widths_px)?, "area", "width_px")
            } else {
                let c = distance_probe(&model, palette, cfg.probe.distance_width_px, &cfg.probe.distance_offsets_px)?;
                (c, "distance", "offset_px")
            };
            let mut rows = Vec::new();
            for c in [&curves.horizontal, &curves.vertical] {
                for (a, e) in c.abscissa.iter().zip(&c.estimates) {
                    rows.push(vec![format!("{:?}", c.axis).to_lowercase(), a.to_string(), e.to_string()]);
                }
            }
            let csv = dir.join(format!("{name}.csv"));
            io::write_csv_records(&csv, &["axis", col, "estimate_ugm3"], &rows)?;
            io::write_json(&dir.join(format!("{name}.json")), &curves)?;
            record(&cfg, &format!("probe-{name}"), base_seeds, vec![csv])?;
            ProbeOutput::Curves(curves)
        }
        ProbeKind::Saliency => {
            let m = load_dataset(&cfg)?;
            let chosen: Vec<usize> = if ids.is_empty() {
                m.dataset.indices(Split::Test).into_iter().take(count).collect()
            } else {
                ids.iter()
                    .map(|id| {
                        m.dataset
                            .samples
                            .iter()
                            .position(|s| &s.id == id)
                            .ok_or_else(|| Error::data(m.dir.join(manifest::SAMPLES_CSV), format!("no sample `{id}`")))
                    })
                    .collect::<Result<_>>()?
            };
            let sdir = dir.join("saliency");
            let rows = pool(cfg.jobs)?.install(|| {
                chosen
                    .par_iter()
                    .map(|&i| {
                        let s = &m.dataset.samples[i];
                        let tile = &m.dataset.images[i];
                        let map = guided_saliency(&model, tile, &s.id)?;
                        let map_tile = first_three(tile)?;
                        let mask = road_mask(&map_tile, palette);
                        let (road_mean, background_mean) = road_background_means(&map, &mask);
                        io::write_atomic(&sdir.join(format!("{}.png", s.id)), &io::tile_png(&map_tile)?)?;
                        io::write_atomic(
                            &sdir.join(format!("{}.saliency.png", s.id)),
                            &io::encode_png_gray(map.width, map.height, &render::saliency_gray(&map))?,
                        )?;
                        Ok(SaliencyRow {
                            id: s.id.clone(),
                            raw_max: map.raw_max,
                            degenerate: map.degenerate,
                            road_pixels: mask.iter().filter(|m| **m).count(),
                            road_mean,
                            background_mean,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let csv = dir.join("saliency.csv");
            io::write_csv(&csv, &rows)?;
            record(&cfg, "probe-saliency", base_seeds, vec![csv])?;
            ProbeOutput::Saliency(rows)
        }
    };
    Ok(out)
}

/// The map channels of a tile.
fn first_three(tile: &TileImage) -> Result<TileImage> {
    if tile.channels() == 3 {
        return Ok(tile.clone());
    }
    let n = 3 * tile.height() * tile.width();
    Ok(TileImage::new(tile.height(), tile.width(), maplur_core::scene::ChannelSemantics::Map, tile.data()[..n].to_vec())?)
}

// ------------------------------------------------------------------ map

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub row: usize,
    pub col: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub estimate_ugm3: f64,
}

pub struct MapOutput {
    pub cells: Vec<MapCell>,
    pub png: PathBuf,
    pub csv: PathBuf,
}

/// Predicts every cell of a square lattice of windows (row 0 north) and
/// renders the estimates with the fixed color scale.
pub fn map(cfg: &ExperimentConfig) -> Result<MapOutput> {
    let m = load_dataset(cfg)?;
    let cfg = &aligned(cfg, &m);
    let (model, file) = load_model(&model_dir(cfg))?;
    let scene = m.scene()?;
    let n = cfg.map.cells;
    let spacing = cfg.map.spacing_m.unwrap_or(cfg.synth.side_m);
    let span = spacing * (n - 1) as f64;
    let [ox, oy] =
        cfg.map.origin_m.unwrap_or([(cfg.synth.city.width_m - span) / 2.0, (cfg.synth.city.height_m - span) / 2.0]);
    let mut cells = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let x_m = ox + col as f64 * spacing;
            let y_m = oy + (n - 1 - row) as f64 * spacing;
            cells.push(MapCell { row, col, x_m, y_m, estimate_ugm3: f64::NAN });
        }
    }
    let tiles = pool(cfg.jobs)?.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let p = GeoPoint::new(c.x_m, c.y_m, cfg.synth.city.lat_deg)?;
                synth::render_tile(&scene, &cfg.synth, &p, derive(cfg.seed, 0x3A9_0000 + i as u64))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (c, v) in cells.iter_mut().zip(predict_batch(&model, &tiles)?) {
        c.estimate_ugm3 = v;
    }
    let dir = cfg.output_dir.join("map");
    let values: Vec<f64> = cells.iter().map(|c| c.estimate_ugm3).collect();
    let rgb = render::grid_rgb(&values, n, n, cfg.map.cell_px, cfg.map.min_ugm3, cfg.map.max_ugm3);
    let png = dir.join("map.png");
    io::write_atomic(&png, &io::encode_png_rgb(n * cfg.map.cell_px, n * cfg.map.cell_px, &rgb)?)?;
    let csv = dir.join("map.csv");
    io::write_csv(&csv, &cells)?;
    record(cfg, "map", seeds(&[("base", cfg.seed), ("model", file.seed)]), vec![png.clone(), csv.clone()])?;
    Ok(MapOutput { cells, png, csv })
}

pub const MAP_SCHEMA: &[(&str, ColumnType)] = &[
    ("row", ColumnType::Integer),
    ("col", ColumnType::Integer),
    ("x_m", ColumnType::Real),
    ("y_m", ColumnType::Real),
    ("estimate_ugm3", ColumnType::Real),
];
