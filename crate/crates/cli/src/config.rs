use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stackdenoise::kspace::NoiseSpec;
use stackdenoise::nnet::Variant;
use stackdenoise::trainer::{DatasetKind, TrainConfig};
use stackdenoise::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub manifest: PathBuf,
    pub dataset_kind: DatasetKind,
    /// Second noisy copy, required for copy-supervised training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub n_in: usize,
    pub width_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    /// Noise the data was generated with; recorded, not applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub model: ModelSection,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Parses a config file. Relative paths resolve against the file's
    /// directory; the top-level sampler and dataset kind win over the
    /// copies inside `train`, and a `train` section without `augment`
    /// gets the dataset kind's default.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let has_augment = value
            .get("train")
            .and_then(|t| t.get("augment"))
            .is_some();
        let mut cfg: RunConfig =
            serde_json::from_value(value).with_context(|| format!("config schema in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.manifest = base.join(&cfg.data.manifest);
        cfg.data.target_manifest = cfg.data.target_manifest.map(|p| base.join(p));
        cfg.out_dir = base.join(&cfg.out_dir);
        if !has_augment {
            cfg.train.augment = cfg.data.dataset_kind.default_augment();
        }
        cfg.sync();
        Ok(cfg)
    }

    /// Copies the top-level sampler and dataset kind into `train`.
    pub fn sync(&mut self) {
        self.train.sampler = self.sampler;
        self.train.dataset_kind = self.data.dataset_kind;
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.train.validate()?;
        let expected = self.sampler.input_planes();
        if self.model.n_in != expected {
            bail!(
                "model n_in = {} does not match the sampler, which produces {expected} input planes",
                self.model.n_in
            );
        }
        if !self.data.manifest.is_file() {
            bail!("manifest {} does not exist", self.data.manifest.display());
        }
        if let Some(t) = &self.data.target_manifest {
            if !t.is_file() {
                bail!("target manifest {} does not exist", t.display());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stackdenoise::trainer::AugmentKind;

    fn write(dir: &Path, body: &str) -> PathBuf {
        std::fs::write(dir.join("m.json"), "[]").unwrap();
        let p = dir.join("run.json");
        std::fs::write(&p, body).unwrap();
        p
    }

    const BASE: &str = r#"{
        "data": {"manifest": "m.json", "dataset_kind": "mri"},
        "sampler": {"neighbors_per_side": 2, "mode": "self_supervised"},
        "train": {"epochs": 3},
        "model": {"variant": "mri", "n_in": 4, "width_scale": 0.25},
        "out_dir": "run"
    }"#;

    #[test]
    fn paths_resolve_and_defaults_apply() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_file(&write(dir.path(), BASE)).unwrap();
        assert_eq!(cfg.data.manifest, dir.path().join("m.json"));
        assert_eq!(cfg.out_dir, dir.path().join("run"));
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.sampler, cfg.sampler);
        assert_eq!(cfg.train.augment, AugmentKind::MriTranslate { max_shift: 64 });
        cfg.validate().unwrap();
    }

    #[test]
    fn n_in_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let body = BASE.replace("\"n_in\": 4", "\"n_in\": 5");
        let cfg = RunConfig::from_file(&write(dir.path(), &body)).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("n_in = 5"), "{err}");
    }

    #[test]
    fn unknown_fields_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let body = BASE.replace("\"out_dir\"", "\"outdir\": \"x\", \"out_dir\"");
        assert!(RunConfig::from_file(&write(dir.path(), &body)).is_err());
    }
}
