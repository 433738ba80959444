use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AamiClass, ClassCensus, DatasetError, DS1, DS2, EXCLUDED};
use crate::stft::{random_augmentation, AugmentConfig, Augmentation};

/// Identity of one segmented beat: record number plus position among that
/// record's beat annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeatRef {
    pub record: u32,
    pub beat_index: usize,
    pub class: AamiClass,
}

impl BeatRef {
    pub fn key(&self) -> (u32, usize) {
        (self.record, self.beat_index)
    }
}

/// A training example: a real beat, or a synthetic copy produced by applying
/// `augmentation` to that beat's spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub beat: BeatRef,
    pub augmentation: Option<Augmentation>,
}

impl From<BeatRef> for TrainSample {
    fn from(beat: BeatRef) -> Self {
        TrainSample {
            beat,
            augmentation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    InterPatient,
    IntraPatient,
}

impl Paradigm {
    pub fn tag(self) -> &'static str {
        match self {
            Paradigm::InterPatient => "inter",
            Paradigm::IntraPatient => "intra",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    Oversample,
    Undersample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub paradigm: Paradigm,
    pub seed: Option<u64>,
    pub train: Vec<TrainSample>,
    pub test: Vec<BeatRef>,
    pub train_patients: BTreeSet<u32>,
    pub test_patients: BTreeSet<u32>,
}

impl DatasetSplit {
    pub fn train_census(&self) -> ClassCensus {
        ClassCensus::from_classes(self.train.iter().map(|s| s.beat.class))
    }

    pub fn test_census(&self) -> ClassCensus {
        ClassCensus::from_classes(self.test.iter().map(|b| b.class))
    }

    /// No beat identity sits on both sides.
    pub fn beats_disjoint(&self) -> bool {
        let train: HashSet<_> = self.train.iter().map(|s| s.beat.key()).collect();
        self.test.iter().all(|b| !train.contains(&b.key()))
    }

    pub fn shared_patients(&self) -> BTreeSet<u32> {
        self.train_patients
            .intersection(&self.test_patients)
            .copied()
            .collect()
    }

    pub fn to_manifest(
        &self,
        spectrogram_path: impl Fn(&BeatRef) -> Option<String>,
    ) -> SplitManifest {
        let entry = |beat: &BeatRef, augmentation: Option<Augmentation>| ManifestEntry {
            record: beat.record,
            beat_index: beat.beat_index,
            class: beat.class,
            augmentation,
            spectrogram: spectrogram_path(beat),
        };
        SplitManifest {
            paradigm: self.paradigm,
            seed: self.seed,
            train_patients: self.train_patients.iter().copied().collect(),
            test_patients: self.test_patients.iter().copied().collect(),
            train: self
                .train
                .iter()
                .map(|s| entry(&s.beat, s.augmentation))
                .collect(),
            test: self.test.iter().map(|b| entry(b, None)).collect(),
        }
    }
}

/// JSON form of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub paradigm: Paradigm,
    pub seed: Option<u64>,
    pub train_patients: Vec<u32>,
    pub test_patients: Vec<u32>,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record: u32,
    pub beat_index: usize,
    pub class: AamiClass,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub augmentation: Option<Augmentation>,
    /// Path of the cached spectrogram of the source beat.
    pub spectrogram: Option<String>,
}

impl SplitManifest {
    pub fn into_split(self) -> DatasetSplit {
        let beat = |e: &ManifestEntry| BeatRef {
            record: e.record,
            beat_index: e.beat_index,
            class: e.class,
        };
        DatasetSplit {
            paradigm: self.paradigm,
            seed: self.seed,
            train: self
                .train
                .iter()
                .map(|e| TrainSample {
                    beat: beat(e),
                    augmentation: e.augmentation,
                })
                .collect(),
            test: self.test.iter().map(beat).collect(),
            train_patients: self.train_patients.into_iter().collect(),
            test_patients: self.test_patients.into_iter().collect(),
        }
    }
}

/// DS1 trains, DS2 tests, paced records are dropped.
pub fn inter_patient_split(beats: &[BeatRef]) -> Result<DatasetSplit, DatasetError> {
    let mut split = DatasetSplit {
        paradigm: Paradigm::InterPatient,
        seed: None,
        train: Vec::new(),
        test: Vec::new(),
        train_patients: BTreeSet::new(),
        test_patients: BTreeSet::new(),
    };
    for b in beats {
        if DS1.contains(&b.record) {
            split.train.push((*b).into());
            split.train_patients.insert(b.record);
        } else if DS2.contains(&b.record) {
            split.test.push(*b);
            split.test_patients.insert(b.record);
        } else if !EXCLUDED.contains(&b.record) {
            return Err(DatasetError::UnknownPatient(b.record));
        }
    }
    Ok(split)
}

/// Seeded random beat-level partition. With `stratified` each class is
/// shuffled and cut separately.
pub fn intra_patient_split(
    beats: &[BeatRef],
    fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<DatasetSplit, DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut cut = |pool: &mut Vec<BeatRef>, rng: &mut ChaCha8Rng| {
        pool.shuffle(rng);
        let k = (fraction * pool.len() as f64).round() as usize;
        train.extend(pool[..k].iter().map(|&b| TrainSample::from(b)));
        test.extend_from_slice(&pool[k..]);
    };
    if stratified {
        let mut by_class: BTreeMap<AamiClass, Vec<BeatRef>> = BTreeMap::new();
        for b in beats {
            by_class.entry(b.class).or_default().push(*b);
        }
        for pool in by_class.values_mut() {
            cut(pool, &mut rng);
        }
    } else {
        cut(&mut beats.to_vec(), &mut rng);
    }
    let train_patients = train.iter().map(|s| s.beat.record).collect();
    let test_patients = test.iter().map(|b| b.record).collect();
    Ok(DatasetSplit {
        paradigm: Paradigm::IntraPatient,
        seed: Some(seed),
        train,
        test,
        train_patients,
        test_patients,
    })
}

/// Drops every beat (both sides) whose class is not in `keep`.
pub fn filter_classes(split: &DatasetSplit, keep: &[AamiClass]) -> DatasetSplit {
    let mut out = split.clone();
    out.train.retain(|s| keep.contains(&s.beat.class));
    out.test.retain(|b| keep.contains(&b.class));
    out
}

/// Equalizes class counts on the training side only.
///
/// Oversampling appends augmented copies of minority beats (round-robin over
/// the source beats, each copy with its own random operation) until every kept
/// class matches the largest one. Undersampling keeps a random subset of each
/// class the size of the smallest one, in original order.
pub fn balance_training(
    split: &DatasetSplit,
    mode: BalanceMode,
    seed: u64,
    augment: &AugmentConfig,
) -> Result<DatasetSplit, DatasetError> {
    let mut by_class: BTreeMap<AamiClass, Vec<TrainSample>> = BTreeMap::new();
    for s in &split.train {
        by_class.entry(s.beat.class).or_default().push(*s);
    }
    for class in AamiClass::ALL {
        let present_anywhere = split.test.iter().any(|b| b.class == class);
        if present_anywhere && !by_class.contains_key(&class) {
            return Err(DatasetError::EmptyClass(class));
        }
    }
    if by_class.is_empty() {
        return Ok(split.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = split.clone();
    match mode {
        BalanceMode::Oversample => {
            let target = by_class.values().map(Vec::len).max().unwrap_or(0);
            for samples in by_class.values() {
                for j in 0..target - samples.len() {
                    let source = samples[j % samples.len()].beat;
                    out.train.push(TrainSample {
                        beat: source,
                        augmentation: Some(random_augmentation(&mut rng, augment)),
                    });
                }
            }
        }
        BalanceMode::Undersample => {
            let target = by_class.values().map(Vec::len).min().unwrap_or(0);
            let mut keep: HashSet<(u32, usize)> = HashSet::new();
            for samples in by_class.values() {
                let mut idx: Vec<usize> = (0..samples.len()).collect();
                idx.shuffle(&mut rng);
                keep.extend(idx[..target].iter().map(|&i| samples[i].beat.key()));
            }
            out.train.retain(|s| keep.contains(&s.beat.key()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use AamiClass::*;

    fn beats(record: u32, classes: &[(AamiClass, usize)]) -> Vec<BeatRef> {
        let mut v = Vec::new();
        for &(class, n) in classes {
            for _ in 0..n {
                v.push(BeatRef {
                    record,
                    beat_index: v.len(),
                    class,
                });
            }
        }
        v
    }

    fn corpus() -> Vec<BeatRef> {
        let mut v = Vec::new();
        for (i, r) in crate::dataset::all_records().into_iter().enumerate() {
            v.extend(beats(
                r,
                &[
                    (N, 40 + i),
                    (S, i % 3),
                    (V, 2 + i % 4),
                    (F, i % 2),
                    (Q, (i % 5 == 0) as usize),
                ],
            ));
        }
        v
    }

    #[test]
    fn inter_patient_respects_lists() {
        let split = inter_patient_split(&corpus()).unwrap();
        assert!(split.shared_patients().is_empty());
        for r in EXCLUDED {
            assert!(!split.train_patients.contains(&r) && !split.test_patients.contains(&r));
            assert!(split.train.iter().all(|s| s.beat.record != r));
        }
        assert!(split.beats_disjoint());
        assert_eq!(split.train_patients.len(), 22);
        assert_eq!(split.test_patients.len(), 22);
    }

    #[test]
    fn unknown_patient_rejected() {
        let err = inter_patient_split(&beats(999, &[(N, 1)])).unwrap_err();
        assert_eq!(err, DatasetError::UnknownPatient(999));
    }

    #[test]
    fn intra_split_is_seeded_partition() {
        let all = corpus();
        let a = intra_patient_split(&all, 0.8, 42, false).unwrap();
        let b = intra_patient_split(&all, 0.8, 42, false).unwrap();
        assert_eq!(a, b);
        assert!(a.beats_disjoint());
        assert_eq!(a.train.len() + a.test.len(), all.len());
        assert_eq!(a.train.len(), (0.8 * all.len() as f64).round() as usize);
        let c = intra_patient_split(&all, 0.8, 43, false).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn stratified_split_per_class_share() {
        let all = corpus();
        let s = intra_patient_split(&all, 0.8, 1, true).unwrap();
        let full = ClassCensus::from_classes(all.iter().map(|b| b.class));
        for c in AamiClass::ALL {
            let expect = (0.8 * full.get(c) as f64).round() as u64;
            assert_eq!(s.train_census().get(c), expect);
        }
        assert!(intra_patient_split(&all, 1.0, 1, false).is_err());
        assert!(intra_patient_split(&all, 0.0, 1, false).is_err());
    }

    #[test]
    fn filter_is_idempotent() {
        let split = inter_patient_split(&corpus()).unwrap();
        let once = filter_classes(&split, &AamiClass::KEPT);
        assert_eq!(once.train_census().get(Q), 0);
        assert_eq!(once.test_census().get(Q), 0);
        assert_eq!(filter_classes(&once, &AamiClass::KEPT), once);
        assert_eq!(once.train_census().get(N), split.train_census().get(N));
    }

    #[test]
    fn oversample_and_undersample_counts() {
        let split = filter_classes(&inter_patient_split(&corpus()).unwrap(), &AamiClass::KEPT);
        let before = split.test.clone();
        let tc = split.train_census();
        let max = AamiClass::KEPT.iter().map(|&c| tc.get(c)).max().unwrap();
        let min = AamiClass::KEPT.iter().map(|&c| tc.get(c)).min().unwrap();

        let over = balance_training(
            &split,
            BalanceMode::Oversample,
            5,
            &AugmentConfig::default(),
        )
        .unwrap();
        assert_eq!(&over.train_census().counts[..4], &[max; 4]);
        assert_eq!(over.test, before);
        assert!(over
            .train
            .iter()
            .filter(|s| s.beat.class == N)
            .all(|s| s.augmentation.is_none()));

        let under = balance_training(
            &split,
            BalanceMode::Undersample,
            5,
            &AugmentConfig::default(),
        )
        .unwrap();
        assert_eq!(&under.train_census().counts[..4], &[min; 4]);
        assert_eq!(under.test, before);
        assert_eq!(
            under,
            balance_training(
                &split,
                BalanceMode::Undersample,
                5,
                &AugmentConfig::default()
            )
            .unwrap()
        );
    }

    #[test]
    fn empty_training_class_is_an_error() {
        let mut split = filter_classes(&inter_patient_split(&corpus()).unwrap(), &AamiClass::KEPT);
        split.train.retain(|s| s.beat.class != F);
        let err = balance_training(
            &split,
            BalanceMode::Oversample,
            1,
            &AugmentConfig::default(),
        );
        assert_eq!(err.unwrap_err(), DatasetError::EmptyClass(F));
    }

    #[test]
    fn manifest_round_trip() {
        let split = balance_training(
            &filter_classes(&inter_patient_split(&corpus()).unwrap(), &AamiClass::KEPT),
            BalanceMode::Oversample,
            3,
            &AugmentConfig::default(),
        )
        .unwrap();
        let m = split.to_manifest(|b| Some(format!("spg/{}_{}.spg", b.record, b.beat_index)));
        let json = serde_json::to_string(&m).unwrap();
        let back: SplitManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.clone().into_split(), split);
        assert_eq!(back, m);
    }
}
