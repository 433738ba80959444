//! End-to-end orchestration with a content-addressed stage cache.
//!
//! Stages run in order: preprocess (per record: filter, segment at annotated R
//! positions), split (paradigm, class filter, desk-scale caps, training-side
//! balancing), spectrogram (only the beats the split references), train and
//! evaluate. Each stage's key hashes its own configuration together with the
//! keys of its inputs, so a change anywhere invalidates exactly the stages
//! downstream of it.

mod cache;
mod config;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{sha256_hex, stage_key, Cache};
pub use config::{
    Architecture, BalanceConfig, ModelConfig, PipelineConfig, ReportConfig, SplitConfig,
    SubsampleConfig,
};
pub use store::{read_beats, spectrogram_file, write_beats, SpgSource};

use crate::dataset::{
    balance_training, census_from_annotations, census_from_beats, filter_classes,
    inter_patient_split, intra_patient_split, map_aami, write_census_csv, AamiClass, BeatLabel,
    BeatRef, ClassCensus, DatasetSplit, Paradigm, SplitManifest, DS1, DS2,
};
use crate::dsp::{preprocess, segment_heartbeats, Heartbeat};
use crate::eval::{
    metrics, pct, write_report_csv, write_report_json, ConfusionMatrix, Report, ReportMeta,
    LEAKAGE_WARNING,
};
use crate::model::{load_weights, predict_source, save_weights, train, Model};
use crate::stft::{write_pgm, write_spg, StftPlan, IMAGE_SIZE};
use crate::wfdb::{load_record, parse_header, read_annotations};

pub const BUILD_ID: &str = concat!("ecg-stft-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    Config(String),
    MissingData {
        data_root: PathBuf,
        missing: Vec<String>,
    },
    RangeOutOfBounds {
        record: u32,
        requested: usize,
        max_valid: Option<usize>,
    },
    Stage {
        stage: &'static str,
        message: String,
    },
}

impl PipelineError {
    /// Process exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::RangeOutOfBounds { .. } => 2,
            PipelineError::MissingData { .. } => 3,
            PipelineError::Stage { .. } => 4,
        }
    }

    fn stage(stage: &'static str, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Config(m) => write!(f, "config error: {m}"),
            PipelineError::MissingData { data_root, missing } => write!(
                f,
                "missing data under {}: {} record(s) absent: {}",
                data_root.display(),
                missing.len(),
                missing.join(", ")
            ),
            PipelineError::RangeOutOfBounds {
                record,
                requested,
                max_valid,
            } => match max_valid {
                Some(m) => write!(
                    f,
                    "record {record}: beat {requested} out of range, max valid index is {m}"
                ),
                None => write!(
                    f,
                    "record {record}: beat {requested} out of range, record has no segmented beats"
                ),
            },
            PipelineError::Stage { stage, message } => write!(f, "{stage}: {message}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::stage("io", e)
    }
}

/// Cache outcome of one stage execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage: String,
    pub key: String,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub stages: Vec<StageRun>,
}

impl RunLog {
    fn note(&mut self, stage: &str, key: &str, hit: bool) {
        log::info!(
            "{stage} {}: {}",
            &key[..12],
            if hit { "cached" } else { "built" }
        );
        self.stages.push(StageRun {
            stage: stage.into(),
            key: key.into(),
            cache_hit: hit,
        });
    }

    pub fn all_hits(&self) -> bool {
        self.stages.iter().all(|s| s.cache_hit)
    }
}

/// Names of records whose `.hea`, `.dat` or `.atr` is absent.
pub fn missing_records(data_root: &Path, records: &[u32]) -> Vec<String> {
    records
        .iter()
        .filter(|r| {
            ["hea", "dat", "atr"]
                .iter()
                .any(|ext| !data_root.join(format!("{r}.{ext}")).is_file())
        })
        .map(|r| r.to_string())
        .collect()
}

fn require_data(cfg: &PipelineConfig) -> Result<Vec<u32>, PipelineError> {
    let records = cfg.record_list();
    let missing = missing_records(&cfg.data_root, &records);
    if !missing.is_empty() {
        return Err(PipelineError::MissingData {
            data_root: cfg.data_root.clone(),
            missing,
        });
    }
    Ok(records)
}

/// Beat annotations of a record: sample positions and symbols.
fn beat_annotations(events: &[crate::wfdb::AnnotationEvent]) -> (Vec<usize>, Vec<char>) {
    events
        .iter()
        .filter(|e| matches!(map_aami(e.symbol), BeatLabel::Beat(_)))
        .map(|e| (e.sample_index as usize, e.symbol))
        .unzip()
}

// ---------------------------------------------------------------- census

/// Table of per-class counts for the full set, DS1, DS2 and (given a seed)
/// an intra-patient split, from annotations and after segmentation.
pub fn census_rows(cfg: &PipelineConfig) -> Result<Vec<(String, ClassCensus)>, PipelineError> {
    let records = require_data(cfg)?;
    let per_record: Vec<(u32, ClassCensus, Vec<BeatRef>, ClassCensus)> = records
        .par_iter()
        .map(|&r| {
            let read = |ext: &str| std::fs::read(cfg.data_root.join(format!("{r}.{ext}")));
            let atr = read("atr").map_err(|e| PipelineError::stage("census", e))?;
            let hea = read("hea").map_err(|e| PipelineError::stage("census", e))?;
            let events = read_annotations(&atr)
                .map_err(|e| PipelineError::stage("census", format!("{r}: {e}")))?;
            let header = parse_header(&String::from_utf8_lossy(&hea))
                .map_err(|e| PipelineError::stage("census", format!("{r}: {e}")))?;
            let census = census_from_annotations(&events);
            let (pos, sym) = beat_annotations(&events);
            let refs = pos
                .iter()
                .zip(&sym)
                .enumerate()
                .filter_map(|(i, (_, &s))| match map_aami(s) {
                    BeatLabel::Beat(class) => Some(BeatRef {
                        record: r,
                        beat_index: i,
                        class,
                    }),
                    BeatLabel::NonBeat => None,
                })
                .collect();
            // window bounds only depend on positions and record length
            let zeros = vec![0.0; header.n_samples];
            let seg = census_from_beats(&segment_heartbeats(
                &zeros,
                &pos,
                &sym,
                header.sampling_rate,
                r,
            ));
            Ok((r, census, refs, seg))
        })
        .collect::<Result<_, PipelineError>>()?;

    let sum = |pred: &dyn Fn(u32) -> bool| {
        let mut c = ClassCensus::default();
        per_record
            .iter()
            .filter(|p| pred(p.0))
            .for_each(|p| c.merge(&p.1));
        c
    };
    let mut rows = vec![
        ("full".to_string(), sum(&|_| true)),
        ("DS1".to_string(), sum(&|r| DS1.contains(&r))),
        ("DS2".to_string(), sum(&|r| DS2.contains(&r))),
    ];
    if let Some(seed) = cfg.split.seed {
        let refs: Vec<BeatRef> = per_record
            .iter()
            .flat_map(|p| p.2.iter().copied())
            .collect();
        let split = intra_patient_split(&refs, cfg.split.fraction, seed, cfg.split.stratified)
            .map_err(|e| PipelineError::stage("census", e))?;
        rows.push(("intra_train".into(), split.train_census()));
        rows.push(("intra_test".into(), split.test_census()));
    }
    let mut seg = ClassCensus::default();
    per_record.iter().for_each(|p| seg.merge(&p.3));
    rows.push(("full_segmented".into(), seg));
    Ok(rows)
}

/// Writes `census.csv` into the output directory and returns its path.
pub fn cmd_census(cfg: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    cfg.validate()?;
    let rows = census_rows(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("census.csv");
    let f = std::fs::File::create(&path)?;
    write_census_csv(&rows, f).map_err(|e| PipelineError::stage("census", e))?;
    Ok(path)
}

// ---------------------------------------------------------------- stages

#[derive(Serialize)]
struct PreprocessKey<'a> {
    preprocess: &'a crate::dsp::PreprocessConfig,
    channel: usize,
}

fn record_content_key(dir: &Path, record: u32) -> Result<String, PipelineError> {
    let mut parts = Vec::new();
    for ext in ["hea", "dat", "atr"] {
        let bytes = std::fs::read(dir.join(format!("{record}.{ext}")))
            .map_err(|e| PipelineError::stage("preprocess", format!("{record}.{ext}: {e}")))?;
        parts.push(sha256_hex(&bytes));
    }
    Ok(stage_key(
        "record",
        &record,
        &[&parts[0], &parts[1], &parts[2]],
    ))
}

/// Filters and segments one record; returns the stage key.
fn stage_preprocess(
    cfg: &PipelineConfig,
    cache: &Cache,
    record: u32,
) -> Result<(String, bool), PipelineError> {
    let content = record_content_key(&cfg.data_root, record)?;
    let key = stage_key(
        "preprocess",
        &PreprocessKey {
            preprocess: &cfg.preprocess,
            channel: cfg.channel,
        },
        &[&content],
    );
    let (_, hit) = cache.get_or_build("preprocess", &key, |dir| {
        let rec = load_record(&cfg.data_root, &record.to_string())
            .map_err(|e| PipelineError::stage("preprocess", format!("{record}: {e}")))?;
        let fs = rec.header.sampling_rate;
        let mv = rec.channel_mv(cfg.channel).ok_or_else(|| {
            PipelineError::stage(
                "preprocess",
                format!("{record}: no channel {}", cfg.channel),
            )
        })?;
        let x = preprocess(&mv, fs, &cfg.preprocess)
            .map_err(|e| PipelineError::stage("preprocess", e))?;
        let (pos, sym) = beat_annotations(&rec.annotations);
        let beats = segment_heartbeats(&x, &pos, &sym, fs, record);
        let f = std::fs::File::create(dir.join("beats.bin"))?;
        write_beats(&beats, std::io::BufWriter::new(f))?;
        Ok::<(), PipelineError>(())
    })?;
    Ok((key, hit))
}

fn load_beats(cache: &Cache, key: &str) -> Result<Vec<Heartbeat>, PipelineError> {
    let path = cache.dir("preprocess", key).join("beats.bin");
    let f = std::fs::File::open(&path)
        .map_err(|e| PipelineError::stage("preprocess", format!("{}: {e}", path.display())))?;
    read_beats(std::io::BufReader::new(f)).map_err(|e| PipelineError::stage("preprocess", e))
}

#[derive(Serialize)]
struct SplitKey<'a> {
    split: &'a SplitConfig,
    subsample: &'a SubsampleConfig,
    balance: &'a BalanceConfig,
    records: &'a [u32],
}

/// Keeps at most `cap` beats of each class, chosen by a seeded shuffle,
/// in their original order.
pub fn cap_per_class<T: Clone>(
    items: &[T],
    class_of: impl Fn(&T) -> AamiClass,
    cap: usize,
    seed: u64,
) -> Vec<T> {
    let mut by_class: BTreeMap<AamiClass, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_class.entry(class_of(it)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = BTreeSet::new();
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        keep.extend(idx.iter().take(cap).copied());
    }
    keep.into_iter().map(|i| items[i].clone()).collect()
}

fn build_split(cfg: &PipelineConfig, beats: &[BeatRef]) -> Result<DatasetSplit, PipelineError> {
    let err = |e: crate::dataset::DatasetError| PipelineError::stage("split", e);
    let split = match cfg.split.paradigm {
        Paradigm::InterPatient => inter_patient_split(beats).map_err(err)?,
        Paradigm::IntraPatient => intra_patient_split(
            beats,
            cfg.split.fraction,
            cfg.split.seed.expect("validated"),
            cfg.split.stratified,
        )
        .map_err(err)?,
    };
    let mut split = filter_classes(&split, &AamiClass::KEPT);
    let sub = &cfg.subsample;
    if let Some(cap) = sub.train_per_class {
        split.train = cap_per_class(
            &split.train,
            |s| s.beat.class,
            cap,
            sub.seed.expect("validated"),
        );
    }
    if let Some(cap) = sub.test_per_class {
        split.test = cap_per_class(
            &split.test,
            |b| b.class,
            cap,
            sub.seed.expect("validated") ^ 0x7E57,
        );
    }
    if let Some(mode) = cfg.balance.mode {
        let before = split.test_census();
        split = balance_training(
            &split,
            mode,
            cfg.balance.seed.expect("validated"),
            &cfg.balance.augment,
        )
        .map_err(err)?;
        debug_assert_eq!(before, split.test_census());
    }
    if split.train.is_empty() {
        return Err(PipelineError::stage("split", "training side is empty"));
    }
    if split.test.is_empty() {
        return Err(PipelineError::stage("split", "test side is empty"));
    }
    Ok(split)
}

fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    stage: &'static str,
) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::stage(stage, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| PipelineError::stage("io", e))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Everything produced by one run of the stage chain.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub report: Report,
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub report_txt: PathBuf,
}

fn run_stages(
    cfg: &PipelineConfig,
    cache: &Cache,
    log: &mut RunLog,
) -> Result<RunOutcome, PipelineError> {
    let records = require_data(cfg)?;

    // preprocess, record-parallel
    let pre: Vec<(u32, String, bool)> = records
        .par_iter()
        .map(|&r| stage_preprocess(cfg, cache, r).map(|(k, hit)| (r, k, hit)))
        .collect::<Result<_, _>>()?;
    let mut pre_keys: BTreeMap<u32, String> = BTreeMap::new();
    for (r, k, hit) in pre {
        log.note("preprocess", &k, hit);
        pre_keys.insert(r, k);
    }

    // split
    let input_keys: Vec<&str> = pre_keys.values().map(String::as_str).collect();
    let split_key = stage_key(
        "split",
        &SplitKey {
            split: &cfg.split,
            subsample: &cfg.subsample,
            balance: &cfg.balance,
            records: &records,
        },
        &input_keys,
    );
    let (split_dir, hit) = cache.get_or_build("split", &split_key, |dir| {
        let mut refs = Vec::new();
        for (&r, k) in &pre_keys {
            refs.extend(load_beats(cache, k)?.iter().map(|b| BeatRef {
                record: r,
                beat_index: b.beat_index,
                class: b.aami_class,
            }));
        }
        let split = build_split(cfg, &refs)?;
        write_json(&dir.join("manifest.json"), &split.to_manifest(|_| None))
    })?;
    log.note("split", &split_key, hit);
    let split = read_json::<SplitManifest>(&split_dir.join("manifest.json"), "split")?.into_split();

    // spectrograms of every referenced source beat
    let spec_key = stage_key("spectrogram", &cfg.stft, &[&split_key]);
    let (spec_dir, hit) = cache.get_or_build("spectrogram", &spec_key, |dir| {
        let mut wanted: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
        for b in split.train.iter().map(|s| &s.beat).chain(&split.test) {
            wanted.entry(b.record).or_default().insert(b.beat_index);
        }
        let plan = StftPlan::new(cfg.stft).map_err(|e| PipelineError::stage("spectrogram", e))?;
        for (r, idx) in &wanted {
            let beats = load_beats(cache, &pre_keys[r])?;
            let chosen: Vec<&Heartbeat> = beats
                .iter()
                .filter(|b| idx.contains(&b.beat_index))
                .collect();
            chosen.par_iter().try_for_each(|b| {
                let img = plan.beat_image(&b.samples).quantized();
                let f = std::fs::File::create(dir.join(spectrogram_file(*r, b.beat_index)))?;
                write_spg(&img, std::io::BufWriter::new(f))
                    .map_err(|e| PipelineError::stage("spectrogram", e))
            })?;
        }
        write_json(
            &dir.join("manifest.json"),
            &split.to_manifest(|b| Some(spectrogram_file(b.record, b.beat_index))),
        )
    })?;
    log.note("spectrogram", &spec_key, hit);

    let label = |c: AamiClass| c.index();
    let size = (IMAGE_SIZE, IMAGE_SIZE);
    let train_src = SpgSource::new(
        &spec_dir,
        split
            .train
            .iter()
            .map(|s| {
                (
                    spectrogram_file(s.beat.record, s.beat.beat_index),
                    label(s.beat.class),
                    s.augmentation,
                )
            })
            .collect(),
        size,
    );
    let test_src = SpgSource::new(
        &spec_dir,
        split
            .test
            .iter()
            .map(|b| {
                (
                    spectrogram_file(b.record, b.beat_index),
                    label(b.class),
                    None,
                )
            })
            .collect(),
        size,
    );

    // train
    let spec = cfg.model.arch.spec()?;
    let weights_key = match &cfg.model.weights {
        Some(p) => sha256_hex(&std::fs::read(p)?),
        None => String::new(),
    };
    let train_key = stage_key("train", &(&cfg.model, &spec), &[&spec_key, &weights_key]);
    let (train_dir, hit) = cache.get_or_build("train", &train_key, |dir| {
        let mut model = match &cfg.model.weights {
            Some(p) => load_weights(p, &spec).map_err(|e| PipelineError::stage("train", e))?,
            None => Model::new(spec.clone(), cfg.model.seed)
                .map_err(|e| PipelineError::stage("train", e))?,
        };
        let report = train(&mut model, &train_src, &cfg.model.train_config())
            .map_err(|e| PipelineError::stage("train", e))?;
        save_weights(&model, &dir.join("weights.cpw"))
            .map_err(|e| PipelineError::stage("train", e))?;
        let f = std::fs::File::create(dir.join("loss.csv"))?;
        report
            .write_csv(f)
            .map_err(|e| PipelineError::stage("train", e))?;
        Ok::<(), PipelineError>(())
    })?;
    log.note("train", &train_key, hit);

    // evaluate
    let meta = ReportMeta {
        paradigm: split.paradigm.tag().to_string(),
        seed: match split.paradigm {
            Paradigm::InterPatient => None,
            Paradigm::IntraPatient => split.seed,
        },
        config_hash: sha256_hex(cfg.experiment_json().as_bytes()),
        build_id: BUILD_ID.to_string(),
        excluded: AamiClass::KEPT
            .iter()
            .filter(|c| split.train_census().get(**c) == 0)
            .map(|c| c.as_str().to_string())
            .collect(),
        warning: (split.paradigm == Paradigm::IntraPatient).then(|| LEAKAGE_WARNING.to_string()),
    };
    let eval_key = stage_key("evaluate", &(&cfg.report, &meta), &[&train_key, &spec_key]);
    let (eval_dir, hit) = cache.get_or_build("evaluate", &eval_key, |dir| {
        let model = load_weights(&train_dir.join("weights.cpw"), &spec)
            .map_err(|e| PipelineError::stage("evaluate", e))?;
        let preds =
            predict_source(&model, &test_src).map_err(|e| PipelineError::stage("evaluate", e))?;
        let cm = ConfusionMatrix::from_pairs(
            test_src
                .labels()
                .into_iter()
                .zip(preds.iter().map(|p| p.class)),
        );
        let m = metrics(&cm, cfg.report.specificity)
            .map_err(|e| PipelineError::stage("evaluate", e))?;
        let report = Report {
            meta: meta.clone(),
            confusion: cm,
            metrics: m,
        };
        write_report_files(&report, dir, "report")
    })?;
    log.note("evaluate", &eval_key, hit);

    // publish
    let tag = split.paradigm.tag();
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut out = Vec::new();
    for ext in ["csv", "json", "txt"] {
        let dst = cfg.output_dir.join(format!("report_{tag}.{ext}"));
        std::fs::copy(eval_dir.join(format!("report.{ext}")), &dst)?;
        out.push(dst);
    }
    std::fs::copy(
        train_dir.join("loss.csv"),
        cfg.output_dir.join(format!("loss_{tag}.csv")),
    )?;
    std::fs::copy(
        spec_dir.join("manifest.json"),
        cfg.output_dir.join(format!("split_{tag}.json")),
    )?;
    let report: Report = read_json(&eval_dir.join("report.json"), "evaluate")?;
    Ok(RunOutcome {
        log: log.clone(),
        report,
        report_csv: out[0].clone(),
        report_json: out[1].clone(),
        report_txt: out[2].clone(),
    })
}

/// Plain-text table, with the leakage banner for intra-patient runs.
pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    if let Some(w) = &r.meta.warning {
        s.push_str(&format!("{}\n{w}\n{}\n\n", "!".repeat(72), "!".repeat(72)));
    }
    s.push_str(&format!("paradigm: {}\n", r.meta.paradigm));
    s.push_str(&format!(
        "{:<8}{:>8}{:>10}{:>10}\n",
        "class", "n", "Pre %", "Rec %"
    ));
    for c in &r.metrics.per_class {
        let cell = |v: f64| {
            if r.meta.excluded.contains(&c.class) {
                "NA".to_string()
            } else {
                pct(v)
            }
        };
        s.push_str(&format!(
            "{:<8}{:>8}{:>10}{:>10}\n",
            c.class,
            c.n,
            cell(c.precision),
            cell(c.recall)
        ));
    }
    s.push_str(&format!(
        "accuracy {}% over {} beats\n",
        pct(r.metrics.accuracy),
        r.metrics.total
    ));
    s
}

fn write_report_files(report: &Report, dir: &Path, stem: &str) -> Result<(), PipelineError> {
    let io = |e: crate::eval::EvalError| PipelineError::stage("evaluate", e);
    let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_report_csv(&report.metrics, &report.meta, f).map_err(io)?;
    let mut json = Vec::new();
    write_report_json(report, &mut json).map_err(io)?;
    json.push(b'\n');
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    std::fs::write(dir.join(format!("{stem}.txt")), render_text(report))?;
    Ok(())
}

/// Runs every stage for the configured paradigm and writes
/// `report_{inter|intra}.{csv,json,txt}` to the output directory.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let cache = Cache::new(cfg.cache_root());
    run_stages(cfg, &cache, &mut RunLog::default())
}

// ---------------------------------------------------------------- comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub class: String,
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub delta_precision: f64,
    pub delta_recall: f64,
}

/// Two metric blocks side by side; deltas are second minus first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tags: [String; 2],
    pub rows: Vec<ComparisonRow>,
    pub accuracy: [f64; 2],
    pub accuracy_delta: f64,
    pub warnings: Vec<String>,
    pub reports: [Report; 2],
}

pub fn compare_reports(a: &Report, b: &Report) -> Comparison {
    let rows = a
        .metrics
        .per_class
        .iter()
        .zip(&b.metrics.per_class)
        .map(|(x, y)| ComparisonRow {
            class: x.class.clone(),
            precision: [x.precision, y.precision],
            recall: [x.recall, y.recall],
            delta_precision: y.precision - x.precision,
            delta_recall: y.recall - x.recall,
        })
        .collect();
    let warnings = [a, b]
        .iter()
        .filter_map(|r| r.meta.warning.clone())
        .collect::<BTreeSet<_>>();
    Comparison {
        tags: [a.meta.paradigm.clone(), b.meta.paradigm.clone()],
        rows,
        accuracy: [a.metrics.accuracy, b.metrics.accuracy],
        accuracy_delta: b.metrics.accuracy - a.metrics.accuracy,
        warnings: warnings.into_iter().collect(),
        reports: [a.clone(), b.clone()],
    }
}

pub fn write_comparison_csv<W: std::io::Write>(
    c: &Comparison,
    out: W,
) -> Result<(), PipelineError> {
    let err = |e: csv::Error| PipelineError::stage("compare", e);
    let mut w = csv::Writer::from_writer(out);
    let [t0, t1] = &c.tags;
    w.write_record([
        "class".to_string(),
        format!("{t0}_precision_pct"),
        format!("{t0}_recall_pct"),
        format!("{t1}_precision_pct"),
        format!("{t1}_recall_pct"),
        "delta_precision_pct".to_string(),
        "delta_recall_pct".to_string(),
    ])
    .map_err(err)?;
    for r in &c.rows {
        w.write_record([
            r.class.clone(),
            pct(r.precision[0]),
            pct(r.recall[0]),
            pct(r.precision[1]),
            pct(r.recall[1]),
            pct(r.delta_precision),
            pct(r.delta_recall),
        ])
        .map_err(err)?;
    }
    w.write_record([
        "accuracy".to_string(),
        pct(c.accuracy[0]),
        pct(c.accuracy[0]),
        pct(c.accuracy[1]),
        pct(c.accuracy[1]),
        pct(c.accuracy_delta),
        pct(c.accuracy_delta),
    ])
    .map_err(err)?;
    w.flush().map_err(|e| PipelineError::stage("compare", e))?;
    Ok(())
}

/// Trains the same model under both paradigms and writes `comparison.{csv,json}`.
pub fn cmd_compare_splits(cfg: &PipelineConfig) -> Result<Comparison, PipelineError> {
    let mut inter = cfg.clone();
    inter.split.paradigm = Paradigm::InterPatient;
    let mut intra = cfg.clone();
    intra.split.paradigm = Paradigm::IntraPatient;
    if intra.split.seed.is_none() {
        return Err(PipelineError::Config(
            "split.seed: required to compare against the intra-patient split".into(),
        ));
    }
    inter.validate()?;
    intra.validate()?;
    let cache = Cache::new(cfg.cache_root());
    let mut log = RunLog::default();
    let a = run_stages(&inter, &cache, &mut log)?;
    let b = run_stages(&intra, &cache, &mut log)?;
    let cmp = compare_reports(&a.report, &b.report);
    let f = std::fs::File::create(cfg.output_dir.join("comparison.csv"))?;
    write_comparison_csv(&cmp, f)?;
    write_json(&cfg.output_dir.join("comparison.json"), &cmp)?;
    let mut txt = String::new();
    for w in &cmp.warnings {
        txt.push_str(&format!("{w}\n"));
    }
    txt.push_str(&format!(
        "accuracy {}: {}%  {}: {}%  delta {} points\n",
        cmp.tags[0],
        pct(cmp.accuracy[0]),
        cmp.tags[1],
        pct(cmp.accuracy[1]),
        pct(cmp.accuracy_delta)
    ));
    std::fs::write(cfg.output_dir.join("comparison.txt"), txt)?;
    Ok(cmp)
}

// ---------------------------------------------------------------- export

/// Writes `{record}_{i}_{class}.pgm` for segmented beats `start..end` of one
/// record, where `i` counts segmented beats from 0.
pub fn cmd_export_spectrograms(
    cfg: &PipelineConfig,
    record: u32,
    start: usize,
    end: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut one = cfg.clone();
    one.records = Some(vec![record]);
    one.validate()?;
    require_data(&one)?;
    let cache = Cache::new(one.cache_root());
    let (key, _) = stage_preprocess(&one, &cache, record)?;
    let beats = load_beats(&cache, &key)?;
    if start >= end {
        return Ok(Vec::new());
    }
    if end > beats.len() {
        return Err(PipelineError::RangeOutOfBounds {
            record,
            requested: end - 1,
            max_valid: beats.len().checked_sub(1),
        });
    }
    let plan = StftPlan::new(one.stft).map_err(|e| PipelineError::stage("spectrogram", e))?;
    let dir = one.output_dir.join("spectrograms");
    std::fs::create_dir_all(&dir)?;
    (start..end)
        .into_par_iter()
        .map(|i| {
            let b = &beats[i];
            let path = dir.join(format!("{record}_{i}_{}.pgm", b.aami_class));
            let f = std::fs::File::create(&path)?;
            write_pgm(&plan.beat_image(&b.samples), std::io::BufWriter::new(f))
                .map_err(|e| PipelineError::stage("spectrogram", e))?;
            Ok(path)
        })
        .collect()
}

// ---------------------------------------------------------------- fetch

pub const MITDB_URL: &str = "https://physionet.org/files/mitdb/1.0.0";

/// Each MIT-BIH `.dat` file: 650,000 samples x 2 channels x 1.5 bytes.
pub const MITDB_DAT_BYTES: u64 = 1_950_000;

/// Download instructions. Checksums are published by PhysioNet in
/// `SHA256SUMS.txt` next to the files; this tool does not embed copies.
pub fn fetch_instructions(records: &[u32]) -> String {
    let mut s = String::new();
    s.push_str(&format!("# MIT-BIH Arrhythmia Database, {MITDB_URL}\n"));
    s.push_str(&format!("# checksums: {MITDB_URL}/SHA256SUMS.txt\n"));
    s.push_str(&format!("# every .dat file is {MITDB_DAT_BYTES} bytes\n"));
    for r in records {
        for ext in ["hea", "dat", "atr"] {
            s.push_str(&format!("{MITDB_URL}/{r}.{ext}\n"));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{write_corpus, SynthConfig};

    fn cfg_for(dir: &Path, records: &[u32]) -> PipelineConfig {
        let text = format!(
            r#"{{
                "data_root": "{}",
                "output_dir": "{}",
                "records": {:?},
                "split": {{"paradigm": "intra_patient", "seed": 5}},
                "stft": {{"hop": 32}},
                "subsample": {{"train_per_class": 6, "test_per_class": 3, "seed": 2}},
                "model": {{"seed": 3, "max_epochs": 1, "batch_size": 8}}
            }}"#,
            dir.join("data").display(),
            dir.join("out").display(),
            records
        );
        PipelineConfig::from_json(&text).unwrap()
    }

    #[test]
    fn empty_root_lists_all_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_for(dir.path(), &[100]);
        cfg.records = None;
        match cmd_census(&cfg).unwrap_err() {
            PipelineError::MissingData { missing, .. } => {
                assert_eq!(missing.len(), 48);
                assert!(missing.contains(&"232".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            PipelineError::MissingData {
                data_root: PathBuf::new(),
                missing: vec![]
            }
            .exit_code(),
            3
        );
    }

    #[test]
    fn census_of_two_records_sums_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            duration_s: 40.0,
            ..Default::default()
        };
        write_corpus(&dir.path().join("data"), &[100, 101], &synth).unwrap();
        let cfg = cfg_for(dir.path(), &[100, 101]);
        let rows = census_rows(&cfg).unwrap();
        let mut expect = ClassCensus::default();
        for r in [100, 101] {
            let s = crate::synth::synth_record(r, &synth);
            for (_, sym) in s.annotations {
                if let BeatLabel::Beat(c) = map_aami(sym) {
                    expect.add(c);
                }
            }
        }
        assert_eq!(rows[0], ("full".to_string(), expect));
        // 101 is DS1, 100 is DS2
        assert_eq!(rows[1].1.total() + rows[2].1.total(), expect.total());
        let intra: u64 = rows[3].1.total() + rows[4].1.total();
        assert_eq!(intra, expect.total());
        let seg = &rows.last().unwrap().1;
        assert!(seg.total() < expect.total() && seg.total() + 4 >= expect.total());
    }

    #[test]
    fn export_range_rules() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(
            &dir.path().join("data"),
            &[100],
            &SynthConfig {
                duration_s: 20.0,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = cfg_for(dir.path(), &[100]);
        let files = cmd_export_spectrograms(&cfg, 100, 0, 4).unwrap();
        assert_eq!(files.len(), 4);
        for f in &files {
            let img = crate::stft::read_pgm(std::fs::File::open(f).unwrap()).unwrap();
            assert_eq!((img.height, img.width), (224, 224));
            let name = f.file_name().unwrap().to_str().unwrap();
            assert!(name.starts_with("100_") && name.ends_with(".pgm"));
        }
        assert!(cmd_export_spectrograms(&cfg, 100, 2, 2).unwrap().is_empty());
        match cmd_export_spectrograms(&cfg, 100, 0, 10_000).unwrap_err() {
            PipelineError::RangeOutOfBounds {
                max_valid: Some(m), ..
            } => assert!(m > 10 && m < 40),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cap_keeps_order_and_limit() {
        let items: Vec<BeatRef> = (0..20)
            .map(|i| BeatRef {
                record: 100,
                beat_index: i,
                class: if i % 4 == 0 {
                    AamiClass::V
                } else {
                    AamiClass::N
                },
            })
            .collect();
        let kept = cap_per_class(&items, |b| b.class, 3, 1);
        assert_eq!(kept.len(), 6);
        assert!(kept.windows(2).all(|w| w[0].beat_index < w[1].beat_index));
        assert_eq!(kept, cap_per_class(&items, |b| b.class, 3, 1));
    }

    #[test]
    fn identical_reports_compare_to_zero() {
        let cm = ConfusionMatrix::from_pairs([(0, 0), (1, 0), (2, 2), (3, 1)]);
        let r = Report {
            meta: ReportMeta {
                paradigm: "inter".into(),
                seed: None,
                config_hash: "h".into(),
                build_id: BUILD_ID.into(),
                excluded: BTreeSet::new(),
                warning: None,
            },
            confusion: cm,
            metrics: metrics(&cm, false).unwrap(),
        };
        let c = compare_reports(&r, &r);
        assert_eq!(c.accuracy_delta, 0.0);
        assert!(c
            .rows
            .iter()
            .all(|row| row.delta_precision == 0.0 && row.delta_recall == 0.0));
    }

    #[test]
    fn fetch_lists_every_file() {
        let text = fetch_instructions(&crate::dataset::all_records());
        assert_eq!(
            text.lines().filter(|l| l.starts_with("https://")).count(),
            144
        );
        assert!(text.contains("1950000"));
    }
}
