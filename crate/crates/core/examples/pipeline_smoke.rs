//! The full cached pipeline on two synthetic records, run twice to show
//! cache hits, then compared across split paradigms.
//!
//!     cargo run --release --example pipeline_smoke -- out_dir

use ecg_stft::pipeline::{cmd_compare_splits, cmd_run, PipelineConfig};
use ecg_stft::synth::{write_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "smoke_out".into()),
    );
    let data = out.join("data");
    write_corpus(
        &data,
        &[100, 101],
        &SynthConfig {
            duration_s: 120.0,
            ..Default::default()
        },
    )?;
    let cfg = PipelineConfig::from_json(&format!(
        r#"{{
            "data_root": {data:?},
            "output_dir": {out:?},
            "records": [100, 101],
            "split": {{"paradigm": "inter_patient", "seed": 1}},
            "subsample": {{"train_per_class": 20, "test_per_class": 10, "seed": 2}},
            "balance": {{"mode": "oversample", "seed": 3}},
            "model": {{"seed": 4, "max_epochs": 2, "batch_size": 16}}
        }}"#
    ))?;
    for pass in 1..=2 {
        let run = cmd_run(&cfg)?;
        println!("pass {pass}:");
        for s in &run.log.stages {
            println!(
                "  {:<12} {}  {}",
                s.stage,
                &s.key[..12],
                if s.cache_hit { "cached" } else { "built" }
            );
        }
    }
    print!("{}", std::fs::read_to_string(out.join("report_inter.txt"))?);
    let cmp = cmd_compare_splits(&cfg)?;
    println!(
        "accuracy inter {:.3}, intra {:.3}, delta {:+.3}",
        cmp.accuracy[0], cmp.accuracy[1], cmp.accuracy_delta
    );
    Ok(())
}
