//! Train the compact residual network on synthetic beat spectrograms, save the
//! weights and reload them.

use ecg_stft::dataset::{map_aami, AamiClass, BeatLabel};
use ecg_stft::dsp::{preprocess, segment_heartbeats, PreprocessConfig};
use ecg_stft::model::{
    load_weights, predict_source, save_weights, train, InMemoryImages, Model, ModelSpec,
    TrainConfig,
};
use ecg_stft::stft::{StftConfig, StftPlan};
use ecg_stft::synth::{synth_record, SynthConfig};
use ecg_stft::wfdb::load_record;

fn images(
    record: u32,
    per_class: usize,
    dir: &std::path::Path,
) -> Result<InMemoryImages, Box<dyn std::error::Error>> {
    synth_record(
        record,
        &SynthConfig {
            duration_s: 120.0,
            ..Default::default()
        },
    )
    .write_to(dir)?;
    let rec = load_record(dir, &record.to_string())?;
    let fs = rec.header.sampling_rate;
    let x = preprocess(
        &rec.channel_mv(0).unwrap(),
        fs,
        &PreprocessConfig::default(),
    )?;
    let (pos, sym): (Vec<usize>, Vec<char>) = rec
        .annotations
        .iter()
        .filter(|a| matches!(map_aami(a.symbol), BeatLabel::Beat(_)))
        .map(|a| (a.sample_index as usize, a.symbol))
        .unzip();
    let beats = segment_heartbeats(&x, &pos, &sym, fs, record);
    let plan = StftPlan::new(StftConfig {
        hop: 16,
        ..Default::default()
    })?;
    let mut set = InMemoryImages::new(224, 224);
    for class in AamiClass::KEPT {
        for b in beats
            .iter()
            .filter(|b| b.aami_class == class)
            .take(per_class)
        {
            set.push(&plan.beat_image(&b.samples).pixels, class.index());
        }
    }
    Ok(set)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let train_set = images(101, 6, tmp.path())?;
    let test_set = images(100, 4, tmp.path())?;
    let mut model = Model::new(ModelSpec::compact(), 1)?;
    println!("compact model, {} parameters", model.n_parameters());
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 40,
        lr: 1e-3,
        seed: 2,
        early_stop: false,
        ..Default::default()
    };
    let report = train(&mut model, &train_set, &cfg)?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  train acc {:.3}",
            e.epoch, e.mean_loss, e.train_accuracy
        );
    }
    let path = tmp.path().join("compact.cpw");
    save_weights(&model, &path)?;
    let reloaded = load_weights(&path, &ModelSpec::compact())?;
    let preds = predict_source(&reloaded, &test_set)?;
    let hits = preds
        .iter()
        .zip(test_set.labels())
        .filter(|(p, &l)| p.class == l)
        .count();
    println!("held-out patient: {hits}/{} correct", preds.len());
    Ok(())
}
