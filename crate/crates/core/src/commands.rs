//! The pipeline steps behind each command-line subcommand. Every command is
//! deterministic in its inputs and writes only to the paths it is given.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::data::{
    parse_gnt, read_gnt_file, read_pgm, shuffle_split, synth_glyphs, write_gnt, BlurSpec, Dataset,
    DatasetSplit, InkPolarity, LabelMap, PreparedSet,
};
use crate::ensemble::{Ensemble, EnsembleSpec};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::rng::{Rng, Stream};
use crate::train::{
    evaluate, load_checkpoint, save_checkpoint, train, write_metrics_csv, CheckpointHeader,
    TrainOutcome,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.hcrb";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn load_dataset(source: &DataSource, polarity: InkPolarity) -> Result<Dataset> {
    match source {
        DataSource::Gnt(paths) => {
            let mut records = Vec::new();
            for p in paths {
                records.extend(read_gnt_file(p)?);
            }
            Ok(Dataset::from_records(records, polarity))
        }
        &DataSource::Synth {
            classes,
            per_class,
            side,
            seed,
        } => synth_glyphs(classes, per_class, side, seed),
    }
}

/// A dataset split and preprocessed with one blur variant.
pub struct PreparedData {
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub train: PreparedSet,
    pub test: PreparedSet,
}

impl PreparedData {
    pub fn train_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.dataset.num_classes()];
        for &l in self.train.labels() {
            counts[l] += 1;
        }
        counts
    }
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let dataset = load_dataset(&cfg.data.source, cfg.data.polarity)?;
    if dataset.is_empty() {
        return Err(Error::config("the dataset is empty"));
    }
    let split = shuffle_split(dataset.len(), cfg.data.split_seed, cfg.data.train_fraction)?;
    let side = cfg.model.input_side;
    let train = PreparedSet::new(&dataset, &split.train, side, &cfg.blur)?;
    let test = PreparedSet::new(&dataset, &split.test, side, &cfg.blur)?;
    Ok(PreparedData {
        dataset,
        split,
        train,
        test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub num_bricks: usize,
    pub param_count: usize,
    pub gamma: f32,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_test_top1: Option<f32>,
    pub stopped_early: bool,
}

/// Trains one model under `out_dir`, writing the checkpoint, metrics CSV and
/// a JSON summary.
pub fn run_training(cfg: &RunConfig, data: &PreparedData, out_dir: &Path) -> Result<RunSummary> {
    let classes = data.dataset.num_classes();
    if cfg.model.num_classes != classes {
        return Err(Error::config(format!(
            "model has {} classes but the dataset has {classes}",
            cfg.model.num_classes
        )));
    }
    let loss = cfg.loss.resolve(&data.train_class_counts())?;
    let test = (!data.test.is_empty()).then_some(&data.test);
    let mut model = Model::new(
        cfg.model.clone(),
        &mut Rng::new(cfg.train.seed).substream(Stream::Init),
    )?;
    let outcome: TrainOutcome = train(&mut model, &data.train, test, &loss, &cfg.train, |_| {})?;

    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let header = CheckpointHeader {
        spec: cfg.model.clone(),
        epoch: outcome.best_epoch,
        rng: Some(outcome.rng.clone()),
        tag_codes: data.dataset.labels.codes().to_vec(),
    };
    save_checkpoint(out_dir.join(CHECKPOINT_FILE), &model, &header)?;
    let metrics = out_dir.join(METRICS_FILE);
    let file = File::create(&metrics).map_err(|e| Error::file(&metrics, e))?;
    write_metrics_csv(BufWriter::new(file), &outcome.history)?;
    let summary = RunSummary {
        num_bricks: cfg.model.num_bricks,
        param_count: model.param_count(),
        gamma: loss.gamma,
        train_size: data.train.len(),
        test_size: data.test.len(),
        epochs_run: outcome.epochs_run(),
        best_epoch: outcome.best_epoch,
        best_test_top1: outcome.best_test_top1,
        stopped_early: outcome.stopped_early,
    };
    write_json(out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<RunSummary> {
    let data = prepare_data(cfg)?;
    run_training(cfg, &data, &cfg.output_dir)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    /// Samples whose tag code the checkpoint does not know; counted wrong.
    pub unknown_codes: usize,
    pub top1: f32,
}

/// Main-head accuracy of a checkpoint on a GNT file. Labels come from the
/// checkpoint's tag codes.
pub fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    blur: &BlurSpec,
    polarity: InkPolarity,
    batch_size: usize,
) -> Result<EvalReport> {
    let (model, header) = load_checkpoint(checkpoint, None)?;
    let records = read_gnt_file(data)?;
    if records.is_empty() {
        return Err(Error::config(format!(
            "{} holds no samples",
            data.display()
        )));
    }
    let labels = if header.tag_codes.is_empty() {
        LabelMap::from_codes(records.iter().map(|r| r.tag_code))
    } else {
        LabelMap::from_codes(header.tag_codes.iter().copied())
    };
    let total = records.len();
    let mut dataset = Dataset::from_records(records, polarity);
    dataset
        .samples
        .retain(|s| labels.label(s.tag_code).is_some());
    let unknown_codes = total - dataset.len();
    for s in &mut dataset.samples {
        s.label = labels.label(s.tag_code).expect("retained above");
    }
    dataset.labels = labels;
    let correct = if dataset.is_empty() {
        0.0
    } else {
        let idx: Vec<usize> = (0..dataset.len()).collect();
        let set = PreparedSet::new(&dataset, &idx, model.spec().input_side, blur)?;
        (evaluate(&model, &set, batch_size)? as f64 * set.len() as f64).round()
    };
    Ok(EvalReport {
        samples: total,
        unknown_codes,
        top1: (correct / total as f64) as f32,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedClass {
    pub class_index: usize,
    pub tag_code: Option<String>,
    pub probability: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictReport {
    pub class_index: usize,
    pub tag_code: Option<String>,
    pub top5: Vec<RankedClass>,
}

pub fn cmd_predict(ensemble: &Path, image: &Path) -> Result<PredictReport> {
    let spec = EnsembleSpec::from_file(ensemble)?;
    let ensemble = Ensemble::load(&spec)?;
    let img = read_pgm(image)?;
    let p = ensemble.predict(&img)?;
    let code = |i: usize| ensemble_code(&ensemble, i);
    Ok(PredictReport {
        class_index: p.class_index,
        tag_code: p.tag_code.map(|t| t.to_string()),
        top5: p
            .top(5)
            .into_iter()
            .map(|(class_index, probability)| RankedClass {
                class_index,
                tag_code: code(class_index),
                probability,
            })
            .collect(),
    })
}

fn ensemble_code(ensemble: &Ensemble, i: usize) -> Option<String> {
    ensemble.tag_code(i).map(|t| t.to_string())
}

/// One row per gamma: `gamma,final_accuracy,epochs_run`.
pub fn cmd_sweep_gamma(cfg: &RunConfig, gammas: &[f32]) -> Result<PathBuf> {
    if gammas.is_empty() {
        return Err(Error::config("no gamma values given"));
    }
    let data = prepare_data(cfg)?;
    let mut rows = vec!["gamma,final_accuracy,epochs_run".to_string()];
    for &g in gammas {
        let mut run = cfg.clone();
        run.loss.gamma = g;
        let s = run_training(&run, &data, &cfg.output_dir.join(format!("gamma_{g}")))?;
        log::info!("gamma {g}: {:?}", s.best_test_top1);
        rows.push(format!(
            "{g},{},{}",
            fmt_acc(s.best_test_top1),
            s.epochs_run
        ));
    }
    write_rows(&cfg.output_dir.join("sweep_gamma.csv"), &rows)
}

/// One row per depth: `bricks,params,final_accuracy,epochs_run`.
pub fn cmd_sweep_bricks(cfg: &RunConfig, bricks: &[usize]) -> Result<PathBuf> {
    if bricks.is_empty() {
        return Err(Error::config("no brick counts given"));
    }
    for &b in bricks {
        ModelSpec {
            num_bricks: b,
            ..cfg.model.clone()
        }
        .validate()?;
    }
    let data = prepare_data(cfg)?;
    let mut rows = vec!["bricks,params,final_accuracy,epochs_run".to_string()];
    for &b in bricks {
        let mut run = cfg.clone();
        run.model.num_bricks = b;
        let s = run_training(&run, &data, &cfg.output_dir.join(format!("bricks_{b}")))?;
        log::info!("{b} bricks: {:?}", s.best_test_top1);
        rows.push(format!(
            "{b},{},{},{}",
            s.param_count,
            fmt_acc(s.best_test_top1),
            s.epochs_run
        ));
    }
    write_rows(&cfg.output_dir.join("sweep_bricks.csv"), &rows)
}

fn fmt_acc(a: Option<f32>) -> String {
    a.map_or(String::new(), |v| v.to_string())
}

fn write_rows(path: &Path, rows: &[String]) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let mut text = rows.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::file(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GntSummary {
    pub count: usize,
    pub classes: usize,
    /// Samples per tag code (hex).
    pub histogram: BTreeMap<String, usize>,
    pub width: Option<Range>,
    pub height: Option<Range>,
}

pub fn cmd_gnt_inspect(path: &Path) -> Result<GntSummary> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut summary = GntSummary {
        count: 0,
        classes: 0,
        histogram: BTreeMap::new(),
        width: None,
        height: None,
    };
    let widen = |r: &mut Option<Range>, v: usize| {
        let e = r.get_or_insert(Range { min: v, max: v });
        e.min = e.min.min(v);
        e.max = e.max.max(v);
    };
    for rec in parse_gnt(std::io::BufReader::new(file)) {
        let rec = rec?;
        summary.count += 1;
        *summary
            .histogram
            .entry(rec.tag_code.to_string())
            .or_default() += 1;
        widen(&mut summary.width, rec.image.width());
        widen(&mut summary.height, rec.image.height());
    }
    summary.classes = summary.histogram.len();
    Ok(summary)
}

pub fn cmd_make_synth(
    classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
    out: &Path,
) -> Result<usize> {
    let ds = synth_glyphs(classes, per_class, side, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let file = File::create(out).map_err(|e| Error::file(out, e))?;
    write_gnt(BufWriter::new(file), &ds.to_records())?;
    Ok(ds.len())
}
