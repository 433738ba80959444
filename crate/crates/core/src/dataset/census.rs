use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{map_aami, AamiClass, BeatLabel};
use crate::dsp::Heartbeat;
use crate::wfdb::AnnotationEvent;

/// Per-class beat counts in (N, S, V, F, Q) order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCensus {
    pub counts: [u64; 5],
}

impl ClassCensus {
    pub fn add(&mut self, class: AamiClass) {
        self.counts[class.index()] += 1;
    }

    pub fn get(&self, class: AamiClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ClassCensus) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn from_classes(classes: impl IntoIterator<Item = AamiClass>) -> Self {
        let mut c = ClassCensus::default();
        classes.into_iter().for_each(|k| c.add(k));
        c
    }
}

/// Counts beat annotations; non-beat symbols are skipped.
pub fn census_from_annotations(events: &[AnnotationEvent]) -> ClassCensus {
    ClassCensus::from_classes(events.iter().filter_map(|e| match map_aami(e.symbol) {
        BeatLabel::Beat(c) => Some(c),
        BeatLabel::NonBeat => None,
    }))
}

pub fn census_from_beats(beats: &[Heartbeat]) -> ClassCensus {
    ClassCensus::from_classes(beats.iter().map(|b| b.aami_class))
}

/// CSV with columns `subset,N,S,V,F,Q,total`.
pub fn write_census_csv<W: Write>(rows: &[(String, ClassCensus)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subset", "N", "S", "V", "F", "Q", "total"])?;
    for (name, c) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(c.counts.iter().map(u64::to_string));
        rec.push(c.total().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
