//! Experiment commands behind the `lpnet` binary. Each command records a
//! [`RunManifest`] next to its outputs; replaying the manifest's invocation
//! reproduces the outputs byte for byte.

mod manifest;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use manifest::{version_string, RunManifest, MANIFEST_FILE};
use report::{
    fmt_f, fmt_opt, reference_sweep_error, CsvTable, COMPARE_HEADER, REFERENCE_MS_ERROR, REFERENCE_SS_ERROR,
    RANK_HEADER, SWEEP_HEADER, SWEEP_SUMMARY_HEADER, TRAIN_HEADER,
};

use crate::data::{
    build_validation_split, idx_to_images, read_container, read_idx, shuffle_epoch, write_container, Dataset,
    LabeledImages, Pixels, SplitSource, SplitSpec,
};
use crate::error::{Error, Result};
use crate::layers::PoolExponent;
use crate::model::{build_model, shape_plan, Model, ModelConfig};
use crate::training::{evaluate, TrainConfig, Trainer};

pub const TRAIN_CSV: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.cnd";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SUMMARY_CSV: &str = "sweep_summary.csv";
pub const COMPARE_CSV: &str = "compare.csv";
pub const RANK_CSV: &str = "energy_rank.csv";
pub const RANK_DUMP: &str = "top_energy_y.cnd";

/// Stream id reserved for the hold-out permutation, far from any epoch index.
const HOLDOUT_STREAM: u64 = u64::MAX;

pub fn default_p_list() -> Vec<PoolExponent> {
    [1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 32.0]
        .into_iter()
        .map(PoolExponent::Finite)
        .chain([PoolExponent::Infinity])
        .collect()
}

/// Where training and validation samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub train: PathBuf,
    /// Without a validation file, `holdout_fraction` of the training file is
    /// held out by a permutation seeded with `holdout_seed`.
    pub val: Option<PathBuf>,
    pub holdout_fraction: f64,
    pub holdout_seed: u64,
    /// Keep only the first samples of each set (after any hold-out).
    pub max_train: Option<usize>,
    pub max_val: Option<usize>,
}

impl DataSpec {
    pub fn new(train: impl Into<PathBuf>) -> Self {
        Self {
            train: train.into(),
            val: None,
            holdout_fraction: 0.1,
            holdout_seed: 0,
            max_train: None,
            max_val: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    pub data: DataSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    pub data: DataSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub p_values: Vec<PoolExponent>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareArgs {
    pub data: DataSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub k: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessArgs {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArgs {
    pub train: PathBuf,
    pub extra: PathBuf,
    pub spec: SplitSpec,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertCheckArgs {
    pub data: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportIdxArgs {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub pad_to: usize,
    pub output: PathBuf,
}

/// A fully resolved command, as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Train(TrainArgs),
    Sweep(SweepArgs),
    CompareMsSs(CompareArgs),
    RankEnergy(RankArgs),
    Preprocess(PreprocessArgs),
    Split(SplitArgs),
    ConvertCheck(ConvertCheckArgs),
    ImportIdx(ImportIdxArgs),
}

impl Invocation {
    /// Points every output of the invocation somewhere else.
    pub fn redirect(&mut self, out_dir: &Path) {
        match self {
            Self::Train(a) => a.out_dir = out_dir.into(),
            Self::Sweep(a) => a.out_dir = out_dir.into(),
            Self::CompareMsSs(a) => a.out_dir = out_dir.into(),
            Self::RankEnergy(a) => a.out_dir = out_dir.into(),
            Self::Split(a) => a.out_dir = out_dir.into(),
            Self::Preprocess(a) => a.output = out_dir.join(file_name(&a.output)),
            Self::ImportIdx(a) => a.output = out_dir.join(file_name(&a.output)),
            Self::ConvertCheck(_) => {}
        }
    }

    pub fn run(&self) -> Result<()> {
        match self {
            Self::Train(a) => cmd_train(a).map(drop),
            Self::Sweep(a) => cmd_sweep_pooling(a).map(drop),
            Self::CompareMsSs(a) => cmd_compare_ms_ss(a).map(drop),
            Self::RankEnergy(a) => cmd_rank_energy(a).map(drop),
            Self::Preprocess(a) => cmd_preprocess(a),
            Self::Split(a) => cmd_split(a).map(drop),
            Self::ConvertCheck(a) => cmd_convert_check(a).map(|s| println!("{s}")),
            Self::ImportIdx(a) => cmd_import_idx(a),
        }
    }
}

fn file_name(p: &Path) -> PathBuf {
    p.file_name().map_or_else(|| PathBuf::from("out.cnd"), PathBuf::from)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

/// Manifest path for commands whose output is a single file.
fn sidecar(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub struct LoadedData {
    pub train: Dataset,
    pub val: Dataset,
}

pub fn load_data(spec: &DataSpec) -> Result<LoadedData> {
    let all = Dataset::from_images(&read_container(&spec.train)?)?;
    let (mut train, mut val) = match &spec.val {
        Some(path) => (all, Dataset::from_images(&read_container(path)?)?),
        None => {
            if all.len() < 2 || !(spec.holdout_fraction > 0.0 && spec.holdout_fraction < 1.0) {
                return Err(Error::invalid(format!(
                    "hold-out needs 2+ samples and a fraction in (0, 1), got {} samples and {}",
                    all.len(),
                    spec.holdout_fraction
                )));
            }
            let perm = shuffle_epoch(all.len(), spec.holdout_seed, HOLDOUT_STREAM);
            let n_val = ((all.len() as f64 * spec.holdout_fraction).round() as usize).clamp(1, all.len() - 1);
            let (v, t) = perm.split_at(n_val);
            let (mut v, mut t) = (v.to_vec(), t.to_vec());
            v.sort_unstable();
            t.sort_unstable();
            (all.subset(&t), all.subset(&v))
        }
    };
    if let Some(n) = spec.max_train {
        train = train.subset(&(0..n.min(train.len())).collect::<Vec<_>>());
    }
    if let Some(n) = spec.max_val {
        val = val.subset(&(0..n.min(val.len())).collect::<Vec<_>>());
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    Ok(LoadedData { train, val })
}

fn check_geometry(config: &ModelConfig, data: &Dataset) -> Result<()> {
    let shape = data.samples[0].shape();
    let want = [config.input_channels, config.input_size, config.input_size];
    if shape != want {
        return Err(Error::invalid(format!(
            "samples are {shape:?} but the model expects {want:?}"
        )));
    }
    Ok(())
}

/// Outcome of one training run. Error rates are percentages.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: Model,
    pub val_error: f64,
    pub train_energy: Vec<f64>,
}

/// Trains one model, appending a row per epoch to `csv` and optionally
/// rewriting `checkpoint` after every epoch.
pub fn train_run(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    data: &LoadedData,
    mut csv: Option<&mut CsvTable>,
    checkpoint: Option<&Path>,
) -> Result<RunResult> {
    check_geometry(model_config, &data.train)?;
    check_geometry(model_config, &data.val)?;
    let model = build_model(model_config, model_config.seed)?;
    let mut trainer = Trainer::new(model, train_config.clone())?;
    let mut val_error = 100.0;
    let mut energies = Vec::with_capacity(train_config.epochs);
    for epoch in 0..train_config.epochs {
        let energy = trainer.train_epoch(&data.train, epoch as u64)?;
        val_error = 100.0 * evaluate(&trainer.model, &data.val)?.error_rate;
        info!(
            "epoch {}/{}: energy {energy:.4}, val error {val_error:.2}%",
            epoch + 1,
            train_config.epochs
        );
        if let Some(t) = csv.as_deref_mut() {
            t.row(&[
                (epoch + 1).to_string(),
                fmt_f(energy),
                fmt_f(val_error),
                fmt_f(trainer.current_lr()),
            ]);
        }
        if let Some(path) = checkpoint {
            trainer.model.save_checkpoint(path)?;
        }
        energies.push(energy);
    }
    if train_config.epochs == 0 {
        val_error = 100.0 * evaluate(&trainer.model, &data.val)?.error_rate;
    }
    Ok(RunResult {
        model: trainer.model,
        val_error,
        train_energy: energies,
    })
}

fn note_data(m: &mut RunManifest, data: &LoadedData) {
    m.note("train_samples", data.train.len());
    m.note("val_samples", data.val.len());
}

pub fn cmd_train(args: &TrainArgs) -> Result<RunResult> {
    args.train.validate()?;
    let plan = shape_plan(&args.model)?;
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start(Invocation::Train(args.clone()));
    manifest.note("classifier_inputs", plan.classifier_input());
    let data = load_data(&args.data)?;
    note_data(&mut manifest, &data);
    let mut csv = CsvTable::new(TRAIN_HEADER);
    let result = train_run(
        &args.model,
        &args.train,
        &data,
        Some(&mut csv),
        Some(&args.out_dir.join(CHECKPOINT_FILE)),
    )?;
    if args.train.epochs == 0 {
        result.model.save_checkpoint(&args.out_dir.join(CHECKPOINT_FILE))?;
    }
    csv.write(&args.out_dir.join(TRAIN_CSV))?;
    manifest.note("final_val_error_pct", fmt_f(result.val_error));
    manifest.finish(&args.out_dir.join(MANIFEST_FILE))?;
    Ok(result)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// `(p, seed, val_error %)` in output order.
    pub runs: Vec<(PoolExponent, u64, f64)>,
    /// Median validation error per p, in `p_values` order.
    pub medians: Vec<(PoolExponent, f64)>,
}

impl SweepOutcome {
    pub fn median_for(&self, p: PoolExponent) -> Option<f64> {
        self.medians.iter().find(|(q, _)| *q == p).map(|&(_, m)| m)
    }
}

pub fn cmd_sweep_pooling(args: &SweepArgs) -> Result<SweepOutcome> {
    args.train.validate()?;
    if args.p_values.is_empty() || args.seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one p value and one seed"));
    }
    for p in &args.p_values {
        p.validated()?;
        shape_plan(&ModelConfig { pooling_p: *p, ..args.model.clone() })?;
    }
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start(Invocation::Sweep(args.clone()));
    let data = load_data(&args.data)?;
    note_data(&mut manifest, &data);
    manifest.note(
        "training_set",
        "train file minus any hold-out, capped by max_train; validation from the val file or hold-out",
    );
    let mut csv = CsvTable::new(SWEEP_HEADER);
    let mut summary = CsvTable::new(SWEEP_SUMMARY_HEADER);
    let mut outcome = SweepOutcome { runs: Vec::new(), medians: Vec::new() };
    for &p in &args.p_values {
        let mut errors = Vec::with_capacity(args.seeds.len());
        for &seed in &args.seeds {
            info!("sweep p={p} seed={seed}");
            let model = ModelConfig { pooling_p: p, seed, ..args.model.clone() };
            let train = TrainConfig { seed, ..args.train.clone() };
            let run = train_run(&model, &train, &data, None, None)?;
            csv.row(&[
                p.to_string(),
                p.plot_value().to_string(),
                seed.to_string(),
                fmt_f(run.val_error),
                fmt_opt(reference_sweep_error(p)),
            ]);
            outcome.runs.push((p, seed, run.val_error));
            errors.push(run.val_error);
        }
        let m = median(&mut errors);
        summary.row(&[p.to_string(), p.plot_value().to_string(), fmt_f(m), fmt_opt(reference_sweep_error(p))]);
        outcome.medians.push((p, m));
    }
    csv.write(&args.out_dir.join(SWEEP_CSV))?;
    summary.write(&args.out_dir.join(SWEEP_SUMMARY_CSV))?;
    manifest.finish(&args.out_dir.join(MANIFEST_FILE))?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparePair {
    pub seed: u64,
    pub ss_error: f64,
    pub ms_error: f64,
}

impl ComparePair {
    /// Percentage points gained by the multi-stage variant.
    pub fn delta(&self) -> f64 {
        self.ss_error - self.ms_error
    }

    pub fn improvement_pct(&self) -> f64 {
        if self.ss_error == 0.0 {
            0.0
        } else {
            100.0 * self.delta() / self.ss_error
        }
    }
}

pub fn cmd_compare_ms_ss(args: &CompareArgs) -> Result<Vec<ComparePair>> {
    args.train.validate()?;
    if args.seeds.is_empty() {
        return Err(Error::invalid("comparison needs at least one seed"));
    }
    let ss_model = ModelConfig { multi_stage: false, ..args.model.clone() };
    let ms_model = ModelConfig { multi_stage: true, ..args.model.clone() };
    let (ss_width, ms_width) = (
        shape_plan(&ss_model)?.classifier_input(),
        shape_plan(&ms_model)?.classifier_input(),
    );
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start(Invocation::CompareMsSs(args.clone()));
    manifest.note("classifier_inputs_ss", ss_width);
    manifest.note("classifier_inputs_ms", ms_width);
    manifest.note("classifier_inputs_extra_ms", ms_width - ss_width);
    let data = load_data(&args.data)?;
    note_data(&mut manifest, &data);
    let mut csv = CsvTable::new(COMPARE_HEADER);
    let mut pairs = Vec::with_capacity(args.seeds.len());
    for &seed in &args.seeds {
        let train = TrainConfig { seed, ..args.train.clone() };
        info!("compare seed={seed}: single-stage");
        let ss = train_run(&ModelConfig { seed, ..ss_model.clone() }, &train, &data, None, None)?;
        info!("compare seed={seed}: multi-stage");
        let ms = train_run(&ModelConfig { seed, ..ms_model.clone() }, &train, &data, None, None)?;
        let pair = ComparePair { seed, ss_error: ss.val_error, ms_error: ms.val_error };
        for (variant, width, err, reference) in [
            ("SS", ss_width, pair.ss_error, REFERENCE_SS_ERROR),
            ("MS", ms_width, pair.ms_error, REFERENCE_MS_ERROR),
        ] {
            csv.row(&[
                seed.to_string(),
                variant.to_string(),
                width.to_string(),
                fmt_f(err),
                fmt_f(pair.delta()),
                fmt_f(pair.improvement_pct()),
                fmt_opt(Some(reference)),
            ]);
        }
        pairs.push(pair);
    }
    csv.write(&args.out_dir.join(COMPARE_CSV))?;
    manifest.finish(&args.out_dir.join(MANIFEST_FILE))?;
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSample {
    pub index: usize,
    pub label: u8,
    pub prediction: u8,
    pub energy: f64,
}

/// Lists the `k` highest-energy samples (ties by ascending index) and dumps
/// their preprocessed Y planes as an `f64` container.
pub fn cmd_rank_energy(args: &RankArgs) -> Result<Vec<RankedSample>> {
    let model = Model::load_checkpoint(&args.checkpoint)?;
    let data = Dataset::from_images(&read_container(&args.data)?)?;
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    check_geometry(model.config(), &data)?;
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start(Invocation::RankEnergy(args.clone()));
    let k = if args.k > data.len() {
        warn!("k = {} exceeds {} samples; listing all", args.k, data.len());
        data.len()
    } else {
        args.k
    };
    manifest.note("k_effective", k);
    let metrics = evaluate(&model, &data)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        metrics.per_sample_energy[b]
            .total_cmp(&metrics.per_sample_energy[a])
            .then(a.cmp(&b))
    });
    let ranked: Vec<RankedSample> = order[..k]
        .iter()
        .map(|&i| RankedSample {
            index: i,
            label: data.labels[i],
            prediction: metrics.predictions[i],
            energy: metrics.per_sample_energy[i],
        })
        .collect();
    let mut csv = CsvTable::new(RANK_HEADER);
    for (rank, r) in ranked.iter().enumerate() {
        csv.row(&[
            (rank + 1).to_string(),
            r.index.to_string(),
            r.label.to_string(),
            r.prediction.to_string(),
            format!("{:.12e}", r.energy),
        ]);
    }
    csv.write(&args.out_dir.join(RANK_CSV))?;
    let (_, h, w) = data.samples[0].chw()?;
    let mut planes = Vec::with_capacity(k * h * w);
    for r in &ranked {
        planes.extend_from_slice(data.samples[r.index].channel(0));
    }
    let dump = LabeledImages::new(
        [k, 1, h, w],
        Pixels::F64(planes),
        ranked.iter().map(|r| r.label).collect(),
    )?;
    write_container(&args.out_dir.join(RANK_DUMP), &dump)?;
    manifest.finish(&args.out_dir.join(MANIFEST_FILE))?;
    Ok(ranked)
}

/// Converts a raw 8-bit dataset into its preprocessed `f64` form.
pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let mut manifest = RunManifest::start(Invocation::Preprocess(args.clone()));
    let images = read_container(&args.input)?;
    if !matches!(images.pixels(), Pixels::U8(_)) {
        return Err(Error::invalid("preprocess expects raw 8-bit images"));
    }
    let data = Dataset::from_images(&images)?;
    create_parent(&args.output)?;
    write_container(&args.output, &data.to_images()?)?;
    manifest.note("samples", data.len());
    manifest.finish(&sidecar(&args.output))
}

pub const SPLIT_VALIDATION: &str = "validation.cnd";
pub const SPLIT_TRAIN_REST: &str = "train_rest.cnd";
pub const SPLIT_EXTRA_REST: &str = "extra_rest.cnd";

/// Builds the per-class validation set and the two remainders; returns the
/// validation size.
pub fn cmd_split(args: &SplitArgs) -> Result<usize> {
    let mut manifest = RunManifest::start(Invocation::Split(args.clone()));
    let train = read_container(&args.train)?;
    let extra = read_container(&args.extra)?;
    let split = build_validation_split(train.labels(), extra.labels(), &args.spec)?;
    let pick = |source| -> Vec<usize> {
        split
            .validation
            .iter()
            .filter(|(s, _)| *s == source)
            .map(|&(_, i)| i)
            .collect()
    };
    let validation = train
        .select(&pick(SplitSource::Train))?
        .concat(&extra.select(&pick(SplitSource::Extra))?)?;
    create_dir(&args.out_dir)?;
    write_container(&args.out_dir.join(SPLIT_VALIDATION), &validation)?;
    write_container(&args.out_dir.join(SPLIT_TRAIN_REST), &train.select(&split.train_rest)?)?;
    write_container(&args.out_dir.join(SPLIT_EXTRA_REST), &extra.select(&split.extra_rest)?)?;
    manifest.note("validation", validation.len());
    manifest.note("train_rest", split.train_rest.len());
    manifest.note("extra_rest", split.extra_rest.len());
    manifest.finish(&args.out_dir.join(MANIFEST_FILE))?;
    Ok(validation.len())
}

/// Validates a dataset container and summarizes it.
pub fn cmd_convert_check(args: &ConvertCheckArgs) -> Result<String> {
    let images = read_container(&args.data)?;
    let [n, c, h, w] = images.dims();
    let dtype = match images.pixels() {
        Pixels::U8(_) => "u8",
        Pixels::F32(_) => "f32",
        Pixels::F64(_) => "f64",
    };
    let hist = images.class_histogram();
    Ok(format!(
        "{}: {n} samples, {c}x{h}x{w} {dtype}, class counts {hist:?}",
        args.data.display()
    ))
}

/// Imports an IDX image/label pair as a 1-channel 8-bit container,
/// zero-padded to `pad_to × pad_to`.
pub fn cmd_import_idx(args: &ImportIdxArgs) -> Result<()> {
    let mut manifest = RunManifest::start(Invocation::ImportIdx(args.clone()));
    let images = idx_to_images(&read_idx(&args.images)?, &read_idx(&args.labels)?, args.pad_to)?;
    create_parent(&args.output)?;
    write_container(&args.output, &images)?;
    manifest.note("samples", images.len());
    manifest.finish(&sidecar(&args.output))
}
