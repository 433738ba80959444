//! AAMI class consolidation, inter/intra-patient splits, class filtering and
//! training-side balancing.

mod census;
mod split;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use census::{census_from_annotations, census_from_beats, write_census_csv, ClassCensus};
pub use split::{
    balance_training, filter_classes, inter_patient_split, intra_patient_split, BalanceMode,
    BeatRef, DatasetSplit, ManifestEntry, Paradigm, SplitManifest, TrainSample,
};

/// Training set of the inter-patient protocol.
pub const DS1: [u32; 22] = [
    101, 106, 108, 109, 112, 114, 115, 116, 118, 119, 122, 124, 201, 203, 205, 207, 208, 209, 215,
    220, 223, 230,
];

/// Test set of the inter-patient protocol.
pub const DS2: [u32; 22] = [
    100, 103, 105, 111, 113, 117, 121, 123, 200, 202, 210, 212, 213, 214, 219, 221, 222, 228, 231,
    232, 233, 234,
];

/// Paced records, left out of both inter-patient sets.
pub const EXCLUDED: [u32; 4] = [102, 104, 107, 217];

/// All 48 records of the arrhythmia database, ascending.
pub fn all_records() -> Vec<u32> {
    let mut v: Vec<u32> = DS1.iter().chain(&DS2).chain(&EXCLUDED).copied().collect();
    v.sort_unstable();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AamiClass {
    N,
    S,
    V,
    F,
    Q,
}

impl AamiClass {
    /// Reporting order.
    pub const ALL: [AamiClass; 5] = [
        AamiClass::N,
        AamiClass::S,
        AamiClass::V,
        AamiClass::F,
        AamiClass::Q,
    ];
    /// Classes the classifier is trained on.
    pub const KEPT: [AamiClass; 4] = [AamiClass::N, AamiClass::S, AamiClass::V, AamiClass::F];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<AamiClass> {
        AamiClass::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AamiClass::N => "N",
            AamiClass::S => "S",
            AamiClass::V => "V",
            AamiClass::F => "F",
            AamiClass::Q => "Q",
        }
    }
}

impl fmt::Display for AamiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeatLabel {
    Beat(AamiClass),
    NonBeat,
}

/// EC57 consolidation of MIT-BIH beat symbols.
pub fn map_aami(symbol: char) -> BeatLabel {
    use AamiClass::*;
    match symbol {
        'N' | 'L' | 'R' | 'e' | 'j' => BeatLabel::Beat(N),
        'A' | 'a' | 'J' | 'S' => BeatLabel::Beat(S),
        'V' | 'E' => BeatLabel::Beat(V),
        'F' => BeatLabel::Beat(F),
        '/' | 'f' | 'Q' => BeatLabel::Beat(Q),
        other => {
            if crate::wfdb::symbol_to_code(other).is_none() {
                log::debug!("unknown annotation symbol {other:?} treated as non-beat");
            }
            BeatLabel::NonBeat
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    UnknownPatient(u32),
    EmptyClass(AamiClass),
    InvalidFraction(f64),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::UnknownPatient(p) => {
                write!(
                    f,
                    "record {p} belongs to neither DS1, DS2 nor the excluded list"
                )
            }
            DatasetError::EmptyClass(c) => write!(f, "class {c} has no training beats"),
            DatasetError::InvalidFraction(x) => write!(f, "split fraction {x} not in (0, 1)"),
        }
    }
}

impl std::error::Error for DatasetError {}
