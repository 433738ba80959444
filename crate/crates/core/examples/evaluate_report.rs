//! Confusion matrix to per-class precision and recall, written as CSV and JSON.

use std::collections::BTreeSet;

use ecg_stft::eval::{
    metrics, write_report_csv, write_report_json, ConfusionMatrix, Report, ReportMeta,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // rows are true classes N, S, V, F
    let mut cm = ConfusionMatrix::default();
    for (t, row) in [
        [410, 30, 12, 8],
        [25, 60, 9, 1],
        [14, 6, 120, 5],
        [3, 0, 4, 11],
    ]
    .iter()
    .enumerate()
    {
        for (p, &n) in row.iter().enumerate() {
            for _ in 0..n {
                cm.accumulate(t, p);
            }
        }
    }
    let m = metrics(&cm, true)?;
    let meta = ReportMeta {
        paradigm: "inter".into(),
        seed: None,
        config_hash: "example".into(),
        build_id: ecg_stft::pipeline::BUILD_ID.into(),
        excluded: BTreeSet::new(),
        warning: None,
    };
    write_report_csv(&m, &meta, std::io::stdout())?;
    println!();
    write_report_json(
        &Report {
            meta,
            confusion: cm,
            metrics: m,
        },
        std::io::stdout(),
    )?;
    println!();
    Ok(())
}
