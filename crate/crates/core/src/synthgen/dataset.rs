use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{MixtureExample, RecordMeta, Waveform};
use crate::binio;
use crate::error::{CassError, Result};
use crate::kv::KvDoc;
use crate::seed::{self, stream};

pub const MANIFEST: &str = "manifest.txt";
pub const FORMAT_TAG: &str = "cass-dataset-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Ecg,
    Ppg,
    Audio,
    Harmonic,
}

impl DatasetKind {
    pub fn default_component_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            DatasetKind::Ecg => &["maternal", "fetal"],
            DatasetKind::Ppg => &["heartbeat", "respiratory"],
            DatasetKind::Audio | DatasetKind::Harmonic => &["bass", "reed"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Ecg => "ecg",
            DatasetKind::Ppg => "ppg",
            DatasetKind::Audio => "audio",
            DatasetKind::Harmonic => "harmonic",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = CassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ecg" => Ok(DatasetKind::Ecg),
            "ppg" => Ok(DatasetKind::Ppg),
            "audio" => Ok(DatasetKind::Audio),
            "harmonic" => Ok(DatasetKind::Harmonic),
            other => Err(CassError::config(format!(
                "unknown dataset kind `{other}` (expected ecg, ppg, audio or harmonic)"
            ))),
        }
    }
}

/// Record indices of the train and test partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle `0..n` with the split stream of `seed` and put the first
/// `round(n · test_fraction)` indices (at least one when `n ≥ 2`) in the test
/// partition. Both partitions are returned sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(CassError::arg(format!("test fraction must be in [0, 1), got {test_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, &[stream::SPLIT]));
    let mut n_test = (n as f64 * test_fraction).round() as usize;
    if test_fraction > 0.0 && n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    }
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

/// A generated or ingested corpus with its deterministic split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub component_names: Vec<String>,
    pub seed: u64,
    pub examples: Vec<MixtureExample>,
    pub split: Split,
}

fn record_file(index: usize) -> String {
    format!("records/rec_{index:05}.bin")
}

impl Dataset {
    pub fn new(
        kind: DatasetKind,
        component_names: Vec<String>,
        seed: u64,
        examples: Vec<MixtureExample>,
        test_fraction: f64,
    ) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| CassError::arg("dataset must contain at least one record"))?;
        if component_names.len() != first.k() {
            return Err(CassError::arg(format!(
                "{} component names for K = {}",
                component_names.len(),
                first.k()
            )));
        }
        for ex in &examples {
            if ex.k() != first.k() || ex.len() != first.len() || ex.sample_rate() != first.sample_rate() {
                return Err(CassError::arg("records differ in K, length or sample rate"));
            }
        }
        let split = split_indices(examples.len(), test_fraction, seed)?;
        Ok(Self {
            kind,
            component_names,
            seed,
            examples,
            split,
        })
    }

    pub fn k(&self) -> usize {
        self.component_names.len()
    }

    pub fn sample_rate(&self) -> f64 {
        self.examples[0].sample_rate()
    }

    pub fn record_length(&self) -> usize {
        self.examples[0].len()
    }

    pub fn train(&self) -> Vec<&MixtureExample> {
        self.split.train.iter().map(|&i| &self.examples[i]).collect()
    }

    pub fn test(&self) -> Vec<&MixtureExample> {
        self.split.test.iter().map(|&i| &self.examples[i]).collect()
    }

    pub fn manifest(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("format", FORMAT_TAG);
        doc.set("kind", self.kind);
        doc.set("k", self.k());
        doc.set_list("components", &self.component_names);
        doc.set("sample_rate", self.sample_rate());
        doc.set("seed", self.seed);
        doc.set("records", self.examples.len());
        doc.set("record_length", self.record_length());
        doc.set("layout", "rows = mixture, components..., noise; float32");
        doc.set_list("split.train", &self.split.train);
        doc.set_list("split.test", &self.split.test);
        for (i, ex) in self.examples.iter().enumerate() {
            let p = format!("record.{i:05}");
            doc.set(format!("{p}.file"), record_file(i));
            doc.set(format!("{p}.seed"), ex.meta.seed);
            doc.set(format!("{p}.noise"), ex.noise.is_some());
            for (k, v) in &ex.meta.params {
                doc.set(format!("{p}.{k}"), v);
            }
        }
        doc
    }

    /// Write the manifest plus one `[K + 2, len]` float32 array per record.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let records = dir.join("records");
        fs::create_dir_all(&records).map_err(|e| CassError::io(&records, e))?;
        for (i, ex) in self.examples.iter().enumerate() {
            let len = ex.len();
            let mut rows = Array2::<f64>::zeros((ex.k() + 2, len));
            rows.row_mut(0).assign(&ndarray::aview1(ex.mixture.samples()));
            for (c, w) in ex.components.iter().enumerate() {
                rows.row_mut(c + 1).assign(&ndarray::aview1(w.samples()));
            }
            if let Some(noise) = &ex.noise {
                rows.row_mut(ex.k() + 1).assign(&ndarray::aview1(noise.samples()));
            }
            let mut bytes = Vec::new();
            binio::encode_array_f32(&mut bytes, &rows.view().into_dyn());
            binio::write_file(&dir.join(record_file(i)), &bytes)?;
        }
        self.manifest().write(&dir.join(MANIFEST))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(CassError::format(&manifest_path, "dataset manifest not found"));
        }
        let doc = KvDoc::read(&manifest_path)?;
        let bad = |msg: String| CassError::format(&manifest_path, msg);
        if doc.get("format") != Some(FORMAT_TAG) {
            return Err(bad("not a dataset manifest".into()));
        }
        let kind: DatasetKind = doc.require("kind")?.parse()?;
        let names: Vec<String> = doc.parse_list("components")?.unwrap_or_default();
        let k: usize = doc.parse_required("k")?;
        if names.len() != k {
            return Err(bad(format!("{} component names for k = {k}", names.len())));
        }
        let fs: f64 = doc.parse_required("sample_rate")?;
        let seed: u64 = doc.parse_required("seed")?;
        let n: usize = doc.parse_required("records")?;
        let len: usize = doc.parse_required("record_length")?;
        let split = Split {
            train: doc.parse_list("split.train")?.unwrap_or_default(),
            test: doc.parse_list("split.test")?.unwrap_or_default(),
        };
        if split.train.iter().chain(&split.test).any(|&i| i >= n) {
            return Err(bad("split index out of range".into()));
        }
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let p = format!("record.{i:05}");
            let file: PathBuf = dir.join(doc.require(&format!("{p}.file"))?);
            let mut arrays = binio::load_arrays::<f64>(&file)?;
            if arrays.len() != 1 || arrays[0].shape() != [k + 2, len] {
                return Err(CassError::format(&file, format!("expected one [{}, {len}] array", k + 2)));
            }
            let rows = arrays.pop().expect("one array").into_dimensionality::<ndarray::Ix2>().expect("2-D");
            let wave = |r: usize| Waveform::new(rows.row(r).to_vec(), fs);
            let components = (1..=k).map(wave).collect::<Result<Vec<_>>>()?;
            let noise = if doc.parse_required::<bool>(&format!("{p}.noise"))? {
                Some(wave(k + 1)?)
            } else {
                None
            };
            let mut meta = RecordMeta::new(doc.parse_required(&format!("{p}.seed"))?);
            for (key, value) in doc.section(&p).iter() {
                if !matches!(key, "file" | "seed" | "noise") {
                    let v = value
                        .parse::<f64>()
                        .map_err(|e| bad(format!("{p}.{key}: {e}")))?;
                    meta.params.insert(key.to_string(), v);
                }
            }
            examples.push(MixtureExample::new(wave(0)?, components, noise, meta)?);
        }
        Ok(Self {
            kind,
            component_names: names,
            seed,
            examples,
            split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{make_ecg_dataset, EcgParamSampler};

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let s = split_indices(100, 0.2, 4).unwrap();
        assert_eq!(s, split_indices(100, 0.2, 4).unwrap());
        assert_eq!(s.test.len(), 20);
        assert_eq!(s.train.len(), 80);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(4, 0.2, 1).unwrap().test.len(), 1);
        assert!(split_indices(4, 0.0, 1).unwrap().test.is_empty());
        assert!(split_indices(4, 1.0, 1).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ex = make_ecg_dataset(6, &EcgParamSampler::default(), 3).unwrap();
        let ds = Dataset::new(DatasetKind::Ecg, DatasetKind::Ecg.default_component_names(), 3, ex, 0.2).unwrap();
        ds.save(dir.path()).unwrap();
        assert!(dir.path().join("records/rec_00005.bin").exists());
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.split, ds.split);
        assert_eq!(back.manifest(), ds.manifest());
        for (a, b) in back.examples.iter().zip(&ds.examples) {
            for (x, y) in a.mixture.samples().iter().zip(b.mixture.samples()) {
                assert_eq!(*x, *y as f32 as f64);
            }
            assert!(a.additivity_residual() < 1e-5);
        }
    }

    #[test]
    fn load_reports_missing_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Dataset::load(dir.path()).is_err());
        let ex = make_ecg_dataset(2, &EcgParamSampler::default(), 3).unwrap();
        let ds = Dataset::new(DatasetKind::Ecg, DatasetKind::Ecg.default_component_names(), 3, ex, 0.5).unwrap();
        ds.save(dir.path()).unwrap();
        std::fs::write(dir.path().join("records/rec_00001.bin"), b"junk").unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(CassError::Format { .. })));
    }
}
