use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::balance::PosTargets;
use super::prompts::{PromptInstance, PromptSet, Split, SplitPair};
use super::{DatasetConfig, RelationPair};
use crate::checksum::{manifest_path, sha256_hex};
use crate::error::{Error, Result};
use crate::relation::RelationLabel;
use crate::wordnet::Pos;

pub const DATASET_FORMAT: &str = "relprobe-dataset/1";
pub const WORD_LIST_FORMAT: &str = "relprobe-words/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub seed: u64,
    pub prompt_set: PromptSet,
    pub templates: Vec<String>,
    pub n_instances: usize,
    /// Pairs per label, with their train/test split.
    pub pairs: BTreeMap<RelationLabel, SplitCounts>,
    pub pos_proportions: BTreeMap<RelationLabel, BTreeMap<Pos, f64>>,
    pub pos_targets: BTreeMap<RelationLabel, PosTargets>,
    pub split_ratio: f64,
    pub achieved_train_ratio: f64,
    /// Checksum of the dataset this one was derived from, if any.
    pub source_checksum: Option<String>,
    /// SHA-256 of the JSONL file; filled in when written.
    pub checksum: String,
}

impl DatasetManifest {
    pub fn describe(
        config: &DatasetConfig,
        pairs: &[SplitPair],
        instances: &[PromptInstance],
        prompt_set: PromptSet,
        source_checksum: Option<String>,
        effective: &[(RelationLabel, PosTargets)],
    ) -> Self {
        let mut split_counts: BTreeMap<RelationLabel, SplitCounts> = BTreeMap::new();
        let mut pos_counts: BTreeMap<RelationLabel, BTreeMap<Pos, usize>> = BTreeMap::new();
        for sp in pairs {
            let c = split_counts.entry(sp.pair.label).or_default();
            match sp.split {
                Split::Train => c.train += 1,
                Split::Test => c.test += 1,
            }
            *pos_counts.entry(sp.pair.label).or_default().entry(sp.pair.pos).or_insert(0) += 1;
        }
        let pos_proportions = pos_counts
            .into_iter()
            .map(|(label, counts)| {
                let total: usize = counts.values().sum();
                let shares = counts.into_iter().map(|(p, c)| (p, c as f64 / total as f64)).collect();
                (label, shares)
            })
            .collect();
        let n_train = pairs.iter().filter(|p| p.split == Split::Train).count();
        Self {
            format: DATASET_FORMAT.into(),
            seed: config.seed,
            prompt_set,
            templates: prompt_set.templates().iter().map(|s| s.to_string()).collect(),
            n_instances: instances.len(),
            pairs: split_counts,
            pos_proportions,
            pos_targets: effective.iter().cloned().collect(),
            split_ratio: config.split_ratio,
            achieved_train_ratio: if pairs.is_empty() { 0.0 } else { n_train as f64 / pairs.len() as f64 },
            source_checksum,
            checksum: String::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceLine {
    text: String,
    word_a: String,
    word_b: String,
    label: RelationLabel,
    pos: Pos,
    template_id: u8,
    split: Split,
}

fn write_with_manifest<M: Serialize>(path: &Path, body: &[u8], manifest: &M) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

fn read_verified(path: &Path, what: &str) -> Result<(Vec<u8>, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let mtext = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&mtext)?;
    let expected = manifest
        .get("checksum")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let found = sha256_hex(&bytes);
    if expected != found {
        return Err(Error::Checksum {
            what: format!("{what} {}", path.display()),
            expected,
            found,
        });
    }
    Ok((bytes, manifest))
}

/// Writes instances as JSONL and a sidecar manifest carrying the file's
/// checksum. Returns the checksum.
pub fn write_dataset(path: &Path, instances: &[PromptInstance], manifest: &DatasetManifest) -> Result<String> {
    let mut body = Vec::new();
    for inst in instances {
        let line = InstanceLine {
            text: inst.text.clone(),
            word_a: inst.pair.word_a.clone(),
            word_b: inst.pair.word_b.clone(),
            label: inst.pair.label,
            pos: inst.pair.pos,
            template_id: inst.template_id,
            split: inst.split,
        };
        serde_json::to_writer(&mut body, &line)?;
        body.push(b'\n');
    }
    let checksum = sha256_hex(&body);
    let mut manifest = manifest.clone();
    manifest.checksum = checksum.clone();
    manifest.n_instances = instances.len();
    write_with_manifest(path, &body, &manifest)?;
    Ok(checksum)
}

/// Reads a dataset written by [`write_dataset`], verifying its checksum.
pub fn read_dataset(path: &Path) -> Result<(Vec<PromptInstance>, DatasetManifest)> {
    let (bytes, manifest) = read_verified(path, "dataset")?;
    let manifest: DatasetManifest = serde_json::from_value(manifest)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: e.valid_up_to() as u64,
        message: "invalid UTF-8".into(),
    })?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end();
        if !trimmed.is_empty() {
            let l: InstanceLine = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                offset,
                message: e.to_string(),
            })?;
            out.push(PromptInstance {
                pair: RelationPair {
                    word_a: l.word_a,
                    word_b: l.word_b,
                    label: l.label,
                    pos: l.pos,
                },
                template_id: l.template_id,
                text: l.text,
                split: l.split,
                prompt_set: manifest.prompt_set,
            });
        }
        offset += line.len() as u64;
    }
    if out.len() != manifest.n_instances {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: manifest.n_instances as u64,
            found: out.len() as u64,
        });
    }
    Ok((out, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordListManifest {
    pub format: String,
    pub n_words: usize,
    pub source_checksum: Option<String>,
    pub checksum: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WordLine {
    word: String,
}

/// Writes a word list (one `{"word": ...}` object per line) with manifest.
pub fn write_word_list(path: &Path, words: &[String], source_checksum: Option<String>) -> Result<String> {
    let mut body = Vec::new();
    for w in words {
        serde_json::to_writer(&mut body, &WordLine { word: w.clone() })?;
        body.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    let checksum = sha256_hex(&body);
    let manifest = WordListManifest {
        format: WORD_LIST_FORMAT.into(),
        n_words: words.len(),
        source_checksum,
        checksum: checksum.clone(),
    };
    write_with_manifest(path, &body, &manifest)?;
    Ok(checksum)
}

pub fn read_word_list(path: &Path) -> Result<(Vec<String>, WordListManifest)> {
    let (bytes, manifest) = read_verified(path, "word list")?;
    let manifest: WordListManifest = serde_json::from_value(manifest)?;
    let mut words = Vec::new();
    let mut offset = 0u64;
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        let trimmed = line.trim_ascii();
        if !trimmed.is_empty() {
            let w: WordLine = serde_json::from_slice(trimmed).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                offset,
                message: e.to_string(),
            })?;
            words.push(w.word);
        }
        offset += line.len() as u64;
    }
    Ok((words, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::apply_prompts;

    fn sample() -> Vec<SplitPair> {
        vec![
            SplitPair {
                pair: RelationPair {
                    word_a: "dog".into(),
                    word_b: "animal".into(),
                    label: RelationLabel::Hypernym,
                    pos: Pos::Noun,
                },
                split: Split::Train,
            },
            SplitPair {
                pair: RelationPair {
                    word_a: "sad".into(),
                    word_b: "happy".into(),
                    label: RelationLabel::Antonym,
                    pos: Pos::Adj,
                },
                split: Split::Test,
            },
        ]
    }

    #[test]
    fn dataset_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let pairs = sample();
        let inst = apply_prompts(&pairs, PromptSet::Original);
        let manifest = DatasetManifest::describe(&DatasetConfig::default(), &pairs, &inst, PromptSet::Original, None, &[]);
        let sum = write_dataset(&path, &inst, &manifest).unwrap();
        let (back, m) = read_dataset(&path).unwrap();
        assert_eq!(back, inst);
        assert_eq!(m.checksum, sum);
        assert_eq!(m.pairs[&RelationLabel::Antonym], SplitCounts { train: 0, test: 1 });

        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Checksum { .. })));
    }

    #[test]
    fn jsonl_line_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let pairs = sample();
        let inst = apply_prompts(&pairs[..1], PromptSet::Novel);
        let manifest = DatasetManifest::describe(&DatasetConfig::default(), &pairs, &inst, PromptSet::Novel, None, &[]);
        write_dataset(&path, &inst, &manifest).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"text\":\"dog occurs with animal\",\"word_a\":\"dog\",\"word_b\":\"animal\",\"label\":\"hypernym\",\"pos\":\"noun\",\"template_id\":0,\"split\":\"train\"}\n"
        );
    }

    #[test]
    fn word_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("words.jsonl");
        let words = vec!["animal".to_string(), "dog".to_string()];
        write_word_list(&path, &words, Some("abc".into())).unwrap();
        let (back, m) = read_word_list(&path).unwrap();
        assert_eq!(back, words);
        assert_eq!(m.n_words, 2);
    }
}
