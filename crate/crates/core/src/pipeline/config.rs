use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::EncodeMode;
use crate::checksum::sha256_hex;
use crate::dataset::{DatasetConfig, PromptSet};
use crate::error::{Error, Result};
use crate::intervention::SweepConfig;
use crate::probe::{ProbeConfig, DEFAULT_REPLICATES, MIN_REPLICATES};

/// Environment variable naming the default WordNet `dict/` directory.
pub const WORDNET_ENV: &str = "RELPROBE_WORDNET";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub wordnet: Option<PathBuf>,
    /// Pooled activations for the main dataset.
    pub activations: Option<PathBuf>,
    /// Activations for the order-reversed test set.
    pub reversed_activations: Option<PathBuf>,
    /// Bare-lemma activations for the word list.
    pub word_activations: Option<PathBuf>,
    /// One RELSAE1 file per patched layer; the layer comes from its manifest.
    pub sae: Vec<PathBuf>,
    /// Activations of the alternate prompt sets used by `robustness`.
    pub robustness: BTreeMap<PromptSet, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub replicates: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    pub control_seeds: usize,
    pub encode_mode: EncodeMode,
}

impl Default for PatchSection {
    fn default() -> Self {
        Self {
            control_seeds: 5,
            encode_mode: EncodeMode::Pooled,
        }
    }
}

/// Stages executed by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub dataset: bool,
    pub probe: bool,
    pub depth: bool,
    pub geometry: bool,
    pub reverse: bool,
    pub sweep: bool,
    pub patch: bool,
    pub robustness: bool,
    pub report: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            dataset: true,
            probe: true,
            depth: true,
            geometry: true,
            reverse: true,
            sweep: true,
            patch: true,
            robustness: true,
            report: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Template family of the main dataset.
    pub prompt_set: PromptSet,
    pub paths: Paths,
    pub dataset: DatasetConfig,
    pub probe: ProbeConfig,
    /// Absent: the reference grid rescaled to the dictionary size.
    pub sweep: Option<SweepConfig>,
    pub bootstrap: BootstrapSection,
    pub patch: PatchSection,
    pub stages: StageToggles,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("relprobe-out"),
            jobs: 0,
            prompt_set: PromptSet::Original,
            paths: Paths::default(),
            dataset: DatasetConfig::default(),
            probe: ProbeConfig::default(),
            sweep: None,
            bootstrap: BootstrapSection::default(),
            patch: PatchSection::default(),
            stages: StageToggles::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses TOML, rejecting unknown keys. Relative paths are resolved
    /// against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.dataset.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        let p = &mut self.paths;
        for slot in [&mut p.wordnet, &mut p.activations, &mut p.reversed_activations, &mut p.word_activations] {
            if let Some(path) = slot {
                resolve(base, path);
            }
        }
        for path in p.sae.iter_mut().chain(p.robustness.values_mut()) {
            resolve(base, path);
        }
    }

    /// Replaces the run seed (and the dataset seed derived from it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.probe.validate()?;
        self.dataset.pos_targets.validate()?;
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        if self.bootstrap.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "bootstrap.replicates = {} is below the minimum of {MIN_REPLICATES}",
                self.bootstrap.replicates
            )));
        }
        if self.patch.control_seeds == 0 {
            return Err(Error::Config("patch.control_seeds must be positive".into()));
        }
        if self.paths.robustness.contains_key(&self.prompt_set) {
            return Err(Error::Config(format!(
                "robustness prompt set {} is the main prompt set",
                self.prompt_set
            )));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())[..16].to_string()
    }

    /// The WordNet directory from the config or, failing that, the
    /// environment.
    pub fn wordnet_dir(&self) -> Result<PathBuf> {
        self.paths
            .wordnet
            .clone()
            .or_else(|| std::env::var_os(WORDNET_ENV).map(PathBuf::from))
            .ok_or_else(|| Error::Config(format!("no WordNet directory: set paths.wordnet or {WORDNET_ENV}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("seed = 1\nsede = 2\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::from_toml("[probe]\nlambda = 2.0\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn paths_resolve_and_seed_propagates() {
        let text = r#"
            seed = 3
            prompt_set = "original"
            [paths]
            activations = "acts.relact"
            sae = ["/abs/l1.relsae"]
            robustness = { novel = "novel.relact", none = "bare.relact" }
        "#;
        let cfg = RunConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.dataset.seed, 3);
        assert_eq!(cfg.paths.activations.as_deref(), Some(Path::new("/base/acts.relact")));
        assert_eq!(cfg.paths.sae[0], Path::new("/abs/l1.relsae"));
        assert_eq!(cfg.paths.robustness[&PromptSet::NoContext], Path::new("/base/bare.relact"));
        assert_eq!(cfg.hash(), cfg.clone().hash());
        assert_ne!(cfg.hash(), cfg.clone().with_seed(4).hash());
    }

    #[test]
    fn small_bootstrap_is_a_config_error() {
        let err = RunConfig::from_toml("[bootstrap]\nreplicates = 10\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
