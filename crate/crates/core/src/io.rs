//! Dataset and checkpoint files.
//!
//! Both are JSON with a format tag and version. Datasets store agent
//! positions only; channels are rebuilt on load. Checkpoints store every AP
//! network's tensors as base64 little-endian `f64`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use cfisac_nn::Scalar;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::model::{ArchitectureSpec, DistributedModel, NetState};
use crate::scenario::{split_point, AgentPositions, Dataset};
use crate::training::{CeilingEstimates, Seeds};
use crate::{Error, Result, SystemConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const DATASET_FORMAT: &str = "cfisac-dataset";
pub const CHECKPOINT_FORMAT: &str = "cfisac-checkpoint";

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!("expected a {expected} file, found {format:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{expected} version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: String,
    version: u32,
    system: SystemConfig,
    seed: u64,
    train_fraction: f64,
    size: usize,
    split: usize,
    positions: Vec<AgentPositions>,
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_json(
        path,
        &DatasetFile {
            format: DATASET_FORMAT.into(),
            version: FORMAT_VERSION,
            system: dataset.config.clone(),
            seed: dataset.seed,
            train_fraction: dataset.train_fraction,
            size: dataset.len(),
            split: dataset.split,
            positions: dataset.positions.clone(),
        },
    )
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file: DatasetFile = read_json(path)?;
    check_header(&file.format, file.version, DATASET_FORMAT)?;
    if file.positions.len() != file.size || split_point(file.size, file.train_fraction) != file.split {
        return Err(Error::Format(format!(
            "dataset header (size {}, split {}) disagrees with its contents",
            file.size, file.split
        )));
    }
    Dataset::from_positions(file.system, file.seed, file.train_fraction, file.positions)
}

/// Training provenance stored with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub role: String,
    /// Epoch the stored weights come from (1-based).
    pub epoch: usize,
    pub lambda: Option<f64>,
    pub val_g1: f64,
    pub val_g2: f64,
    pub ceilings: Option<CeilingEstimates>,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    precision: String,
    architecture: ArchitectureSpec,
    system: SystemConfig,
    metadata: CheckpointMeta,
    /// Per AP, per tensor: base64 of little-endian `f64`s.
    aps: Vec<Vec<String>>,
}

/// A loaded checkpoint, independent of the precision it will run in.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub precision: String,
    pub spec: ArchitectureSpec,
    pub system: SystemConfig,
    pub meta: CheckpointMeta,
    pub state: Vec<NetState>,
}

pub fn precision_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("bad tensor encoding: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("tensor blob of {} bytes is not a whole number of f64s", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &DistributedModel<T>, meta: CheckpointMeta) -> Self {
        Self {
            precision: precision_name::<T>().into(),
            spec: model.spec.clone(),
            system: model.system.clone(),
            meta,
            state: model.state(),
        }
    }

    /// Rebuilds the networks in precision `T`.
    pub fn model<T: Scalar>(&self) -> Result<DistributedModel<T>> {
        let mut model = DistributedModel::init(&self.spec, &self.system, 0)?;
        model.load_state(&self.state)?;
        Ok(model)
    }

    /// Fails unless the checkpoint was trained for `system`.
    pub fn ensure_system(&self, system: &SystemConfig) -> Result<()> {
        self.system.ensure_matches(system, "checkpoint")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &CheckpointFile {
                format: CHECKPOINT_FORMAT.into(),
                version: FORMAT_VERSION,
                precision: self.precision.clone(),
                architecture: self.spec.clone(),
                system: self.system.clone(),
                metadata: self.meta.clone(),
                aps: self
                    .state
                    .iter()
                    .map(|net| net.iter().map(|t| encode(t)).collect())
                    .collect(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: CheckpointFile = read_json(path)?;
        check_header(&file.format, file.version, CHECKPOINT_FORMAT)?;
        let state = file
            .aps
            .iter()
            .map(|net| net.iter().map(|t| decode(t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            precision: file.precision,
            spec: file.architecture,
            system: file.system,
            meta: file.metadata,
            state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchitectureKind;
    use crate::scenario::generate_dataset;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            role: "student".into(),
            epoch: 7,
            lambda: Some(0.25),
            val_g1: 1.5,
            val_g2: 0.75,
            ceilings: Some(CeilingEstimates { g1_max: 3.1, g2_max: 1.2 }),
            seeds: Seeds::default(),
        }
    }

    #[test]
    fn tensor_encoding_round_trips_exactly() {
        let v = vec![0.1, -3.5e-300, f64::MAX, 1.0 / 3.0, -0.0];
        let back = decode(&encode(&v)).unwrap();
        assert_eq!(v.len(), back.len());
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(decode("AAA=").is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d/data.json");
        let data = generate_dataset(&SystemConfig::default(), 40, 0.9, 11).unwrap();
        save_dataset(&path, &data).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, data);
        let again = dir.path().join("again.json");
        save_dataset(&again, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn dataset_header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        let data = generate_dataset(&SystemConfig::default(), 10, 0.5, 1).unwrap();
        save_dataset(&path, &data).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("\"split\": 5", "\"split\": 4");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Format(_))));
        fs::write(&path, "{\"format\":\"other\"}").unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn checkpoint_round_trip_reproduces_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let system = SystemConfig::with_counts(2, 4, 2);
        let spec = ArchitectureSpec::toy(ArchitectureKind::Cae);
        let model = DistributedModel::<f64>::init(&spec, &system, 5).unwrap();
        Checkpoint::from_model(&model, meta()).save(&path).unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt.precision, "f64");
        assert_eq!(ckpt.meta, meta());
        let back: DistributedModel<f64> = ckpt.model().unwrap();
        let data = generate_dataset(&system, 3, 1.0, 2).unwrap();
        let scenes: Vec<_> = data.scenes.iter().collect();
        assert_eq!(model.beamformers(&scenes).unwrap(), back.beamformers(&scenes).unwrap());
    }

    #[test]
    fn checkpoint_rejects_other_systems() {
        let system = SystemConfig::with_counts(2, 4, 2);
        let model = DistributedModel::<f32>::init(&ArchitectureSpec::toy(ArchitectureKind::Cnn1d), &system, 1).unwrap();
        let ckpt = Checkpoint::from_model(&model, meta());
        assert_eq!(ckpt.precision, "f32");
        assert!(ckpt.ensure_system(&system).is_ok());
        let mut other = system.clone();
        other.power_budget = 2.0;
        assert!(matches!(ckpt.ensure_system(&other), Err(Error::Mismatch(_))));
    }
}
