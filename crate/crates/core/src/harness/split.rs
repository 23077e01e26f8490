use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    FixedPerClass,
    RepeatedRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCount {
    Count(usize),
    /// Everything not drawn for training.
    Rest,
}

impl Serialize for TestCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TestCount::Count(n) => s.serialize_u64(*n as u64),
            TestCount::Rest => s.serialize_str("rest"),
        }
    }
}

impl<'de> Deserialize<'de> for TestCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(TestCount::Count(n)),
            Raw::S(s) if s == "rest" => Ok(TestCount::Rest),
            Raw::S(s) => Err(serde::de::Error::custom(format!("test_per_class must be a count or \"rest\", got {s:?}"))),
        }
    }
}

impl fmt::Display for TestCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestCount::Count(n) => write!(f, "{n}"),
            TestCount::Rest => f.write_str("rest"),
        }
    }
}

impl FromStr for TestCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "rest" {
            return Ok(TestCount::Rest);
        }
        s.parse().map(TestCount::Count).map_err(|_| format!("expected a count or \"rest\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitProtocol {
    pub kind: SplitKind,
    pub train_per_class: usize,
    pub test_per_class: TestCount,
    pub repetitions: usize,
    pub seed: u64,
}

impl SplitProtocol {
    /// 80 train / 20 test per class, one split.
    pub fn mit67(seed: u64) -> Self {
        Self { kind: SplitKind::FixedPerClass, train_per_class: 80, test_per_class: TestCount::Count(20), repetitions: 1, seed }
    }

    /// 100 train per class, the rest for testing, 10 splits.
    pub fn scene15(seed: u64) -> Self {
        Self { kind: SplitKind::RepeatedRandom, train_per_class: 100, test_per_class: TestCount::Rest, repetitions: 10, seed }
    }

    /// 70 train / 60 test per class, 10 splits.
    pub fn event8(seed: u64) -> Self {
        Self { kind: SplitKind::RepeatedRandom, train_per_class: 70, test_per_class: TestCount::Count(60), repetitions: 10, seed }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "mit67" => Some(Self::mit67(seed)),
            "scene15" => Some(Self::scene15(seed)),
            "event8" => Some(Self::event8(seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repetitions == 0 {
            return Err(HarnessError::Protocol("repetitions must be at least 1".into()));
        }
        if self.train_per_class == 0 {
            return Err(HarnessError::Protocol("train_per_class must be at least 1".into()));
        }
        if self.test_per_class == TestCount::Count(0) {
            return Err(HarnessError::Protocol("test_per_class must be at least 1".into()));
        }
        Ok(())
    }

    fn needed(&self) -> usize {
        match self.test_per_class {
            TestCount::Count(n) => self.train_per_class + n,
            TestCount::Rest => self.train_per_class + 1,
        }
    }
}

/// Indices into each class's path list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repetition {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub repetitions: Vec<Repetition>,
}

/// The shuffle for repetition `r` of class `k` uses ChaCha8 seeded with
/// `seed` on stream `(r << 32) | k`, so each (repetition, class) pair is
/// independent of how many others exist.
fn class_stream(seed: u64, r: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((r as u64) << 32) | k as u64);
    rng
}

pub fn make_split(manifest: &DatasetManifest, protocol: &SplitProtocol) -> Result<SplitPlan, HarnessError> {
    protocol.validate()?;
    let needed = protocol.needed();
    for class in &manifest.classes {
        if class.paths.len() < needed {
            return Err(HarnessError::ClassTooSmall {
                class: class.name.clone(),
                available: class.paths.len(),
                needed,
            });
        }
    }
    let repetitions = (0..protocol.repetitions)
        .map(|r| {
            let mut train = Vec::with_capacity(manifest.classes.len());
            let mut test = Vec::with_capacity(manifest.classes.len());
            for (k, class) in manifest.classes.iter().enumerate() {
                let mut idx: Vec<usize> = (0..class.paths.len()).collect();
                idx.shuffle(&mut class_stream(protocol.seed, r, k));
                let n_test = match protocol.test_per_class {
                    TestCount::Count(n) => n,
                    TestCount::Rest => idx.len() - protocol.train_per_class,
                };
                let (tr, rest) = idx.split_at(protocol.train_per_class);
                let mut tr = tr.to_vec();
                let mut te = rest[..n_test].to_vec();
                tr.sort_unstable();
                te.sort_unstable();
                train.push(tr);
                test.push(te);
            }
            Repetition { train, test }
        })
        .collect();
    Ok(SplitPlan { seed: protocol.seed, repetitions })
}

/// JSON split listing by class name and path, for supplying externally
/// published train/test lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub dataset: String,
    pub seed: u64,
    pub repetitions: Vec<SplitFileRepetition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFileRepetition {
    pub train: BTreeMap<String, Vec<PathBuf>>,
    pub test: BTreeMap<String, Vec<PathBuf>>,
}

impl SplitFile {
    pub fn from_plan(manifest: &DatasetManifest, plan: &SplitPlan) -> Self {
        let by_class = |sets: &[Vec<usize>]| {
            manifest
                .classes
                .iter()
                .zip(sets)
                .map(|(c, idx)| (c.name.clone(), idx.iter().map(|&i| c.paths[i].clone()).collect()))
                .collect()
        };
        Self {
            dataset: manifest.name.clone(),
            seed: plan.seed,
            repetitions: plan
                .repetitions
                .iter()
                .map(|r| SplitFileRepetition { train: by_class(&r.train), test: by_class(&r.test) })
                .collect(),
        }
    }

    /// Resolves paths back to per-class indices. Every class must appear in
    /// every repetition; paths must belong to their class and train/test
    /// must not overlap.
    pub fn to_plan(&self, manifest: &DatasetManifest) -> Result<SplitPlan, HarnessError> {
        if self.repetitions.is_empty() {
            return Err(HarnessError::SplitMismatch("no repetitions".into()));
        }
        let resolve = |map: &BTreeMap<String, Vec<PathBuf>>, r: usize| -> Result<Vec<Vec<usize>>, HarnessError> {
            if let Some(extra) = map.keys().find(|k| !manifest.classes.iter().any(|c| &c.name == *k)) {
                return Err(HarnessError::SplitMismatch(format!("repetition {r}: unknown class {extra:?}")));
            }
            manifest
                .classes
                .iter()
                .map(|c| {
                    let paths = map
                        .get(&c.name)
                        .ok_or_else(|| HarnessError::SplitMismatch(format!("repetition {r}: class {:?} missing", c.name)))?;
                    let mut idx = paths
                        .iter()
                        .map(|p| {
                            c.paths.iter().position(|q| q == p).ok_or_else(|| {
                                HarnessError::SplitMismatch(format!(
                                    "repetition {r}: {} is not in class {:?}",
                                    p.display(),
                                    c.name
                                ))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    idx.sort_unstable();
                    if idx.windows(2).any(|w| w[0] == w[1]) {
                        return Err(HarnessError::SplitMismatch(format!("repetition {r}: duplicate path in {:?}", c.name)));
                    }
                    Ok(idx)
                })
                .collect()
        };
        let mut repetitions = Vec::with_capacity(self.repetitions.len());
        for (r, rep) in self.repetitions.iter().enumerate() {
            let train = resolve(&rep.train, r)?;
            let test = resolve(&rep.test, r)?;
            for (k, (tr, te)) in train.iter().zip(&test).enumerate() {
                if tr.is_empty() || te.is_empty() {
                    return Err(HarnessError::SplitMismatch(format!(
                        "repetition {r}: class {:?} needs train and test images",
                        manifest.classes[k].name
                    )));
                }
                if tr.iter().any(|i| te.binary_search(i).is_ok()) {
                    return Err(HarnessError::SplitMismatch(format!(
                        "repetition {r}: class {:?} has overlapping train and test",
                        manifest.classes[k].name
                    )));
                }
            }
            repetitions.push(Repetition { train, test });
        }
        Ok(SplitPlan { seed: self.seed, repetitions })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ClassEntry;

    fn manifest(sizes: &[usize]) -> DatasetManifest {
        DatasetManifest {
            name: "toy".into(),
            classes: sizes
                .iter()
                .enumerate()
                .map(|(k, &n)| ClassEntry {
                    name: format!("c{k}"),
                    paths: (0..n).map(|i| PathBuf::from(format!("/d/c{k}/{i:03}.ppm"))).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn rest_takes_remainder() {
        let m = manifest(&[12, 15]);
        let p = SplitProtocol { kind: SplitKind::RepeatedRandom, train_per_class: 10, test_per_class: TestCount::Rest, repetitions: 2, seed: 1 };
        let plan = make_split(&m, &p).unwrap();
        assert_eq!(plan.repetitions[0].test[0].len(), 2);
        assert_eq!(plan.repetitions[0].test[1].len(), 5);
    }

    #[test]
    fn too_small_names_class() {
        let m = manifest(&[150, 129]);
        match make_split(&m, &SplitProtocol::event8(0)) {
            Err(HarnessError::ClassTooSmall { class, available: 129, needed: 130 }) => assert_eq!(class, "c1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adding_repetitions_keeps_earlier_ones() {
        let m = manifest(&[20, 20, 20]);
        let mut p = SplitProtocol { kind: SplitKind::RepeatedRandom, train_per_class: 5, test_per_class: TestCount::Count(5), repetitions: 2, seed: 9 };
        let short = make_split(&m, &p).unwrap();
        p.repetitions = 5;
        let long = make_split(&m, &p).unwrap();
        assert_eq!(short.repetitions[..], long.repetitions[..2]);
        assert_ne!(long.repetitions[0], long.repetitions[1]);
    }

    #[test]
    fn split_file_round_trip() {
        let m = manifest(&[10, 10]);
        let p = SplitProtocol { kind: SplitKind::FixedPerClass, train_per_class: 6, test_per_class: TestCount::Count(4), repetitions: 3, seed: 4 };
        let plan = make_split(&m, &p).unwrap();
        let file = SplitFile::from_plan(&m, &plan);
        let json = serde_json::to_string(&file).unwrap();
        let back: SplitFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_plan(&m).unwrap(), plan);

        let mut bad = file.clone();
        let stolen = bad.repetitions[0].test["c0"][0].clone();
        bad.repetitions[0].train.get_mut("c0").unwrap().push(stolen);
        assert!(matches!(bad.to_plan(&m), Err(HarnessError::SplitMismatch(_))));
    }

    #[test]
    fn protocol_json_shape() {
        let json = serde_json::to_value(SplitProtocol::scene15(3)).unwrap();
        assert_eq!(json["test_per_class"], "rest");
        assert_eq!(json["kind"], "repeated_random");
        let back: SplitProtocol = serde_json::from_value(json).unwrap();
        assert_eq!(back, SplitProtocol::scene15(3));
        assert!(SplitProtocol { repetitions: 0, ..SplitProtocol::mit67(0) }.validate().is_err());
    }
}
