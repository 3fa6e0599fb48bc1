use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{cell, num, opt_num, read_json, write_json, Table};
use super::Pipeline;
use crate::activation::{read_activations_checked, read_sae, ActivationSet, EncodeMode, SaeParams, StreamId};
use crate::checksum::file_sha256;
use crate::dataset::{
    apply_prompts, build_dataset, read_dataset, read_word_list, write_dataset, write_word_list, DatasetManifest,
    PromptInstance, PromptSet, RelationPair, Split, SplitPair,
};
use crate::depth::{block_deltas, profile_ci, DepthProfileCI};
use crate::directionality::{build_reversed_set, reversal_gap, EvalSet, ReversalResult, REVERSIBLE};
use crate::error::{Error, Result};
use crate::geometry::{build_groups, similarity_table};
use crate::intervention::{
    injection_values, necessity_report, rank_features, robustness_row, selection_score, sufficiency_report, sweep_k,
    FrozenPatch, InterventionReport, LatentSet, ReportOptions, RobustnessRow, ScoreVariant, SweepConfig,
};
use crate::probe::{per_class_recall, ProbeModel};
use crate::relation::RelationLabel;
use crate::wordnet::load_wordnet;

pub(super) const DATASET_FILE: &str = "dataset/dataset.jsonl";
pub(super) const REVERSED_FILE: &str = "dataset/reversed.jsonl";
pub(super) const WORDS_FILE: &str = "dataset/words.jsonl";

pub(super) fn alternate_file(set: PromptSet) -> String {
    format!("dataset/dataset.{}.jsonl", set.name())
}

fn probe_file(stream: StreamId, layer: usize) -> String {
    format!("probe/probes/{}_L{layer}.json", stream.name())
}

fn sae_probe_file(layer: usize) -> String {
    format!("sweep/sae_probes/L{layer}.json")
}

/// Dense-probe training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    pub dataset_checksum: String,
    pub config_hash: String,
    pub n_layers: usize,
    pub streams: Vec<StreamId>,
}

/// Test-split predictions of every dense probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionState {
    pub dataset_checksum: String,
    /// Dataset rows of the test split.
    pub test_rows: Vec<usize>,
    pub gold: Vec<RelationLabel>,
    /// `(stream, layer, predictions)` per probe.
    pub predictions: Vec<(StreamId, usize, Vec<RelationLabel>)>,
}

impl PredictionState {
    fn layers(&self, stream: StreamId) -> Vec<(usize, &Vec<RelationLabel>)> {
        let mut v: Vec<(usize, &Vec<RelationLabel>)> = self
            .predictions
            .iter()
            .filter(|(s, _, _)| *s == stream)
            .map(|(_, l, p)| (*l, p))
            .collect();
        v.sort_by_key(|(l, _)| *l);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub stream: StreamId,
    pub relation: RelationLabel,
    pub layer_accs: Vec<f64>,
    /// Absent when the profile is undefined (all-zero accuracy or a single
    /// layer).
    pub profile: Option<DepthProfileCI>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalState {
    pub dataset_checksum: String,
    pub results: Vec<ReversalResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRelation {
    pub relation: RelationLabel,
    /// Leading part of the ranking (long enough for every k used).
    pub ranking: Vec<usize>,
    pub chosen_k: usize,
    pub qualified: bool,
    pub reference_score: f64,
    pub curve: Vec<(usize, f64)>,
    /// Remove-only score at the chosen k.
    pub remove_only_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLayer {
    pub layer: usize,
    pub sae_path: PathBuf,
    pub sae_payload_sha256: String,
    pub n_latents: usize,
    pub sweep: SweepConfig,
    pub relations: Vec<SweepRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepState {
    pub dataset_checksum: String,
    pub config_hash: String,
    pub encode_mode: EncodeMode,
    pub layers: Vec<SweepLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchResults {
    pub dataset_checksum: String,
    pub sufficiency: Vec<InterventionReport>,
    pub necessity: Vec<InterventionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct RobustnessState {
    pub dataset_checksum: String,
    pub rows: Vec<RobustnessRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct GeometryState {
    pub dataset_checksum: String,
    pub cells: Vec<crate::geometry::SimilarityCell>,
    pub empty_groups: Vec<crate::geometry::SimilarityGroup>,
}

fn unique_pairs(instances: &[PromptInstance]) -> Vec<SplitPair> {
    let mut seen = BTreeSet::new();
    instances
        .iter()
        .filter(|i| seen.insert((i.pair.word_a.clone(), i.pair.word_b.clone(), i.pair.label)))
        .map(|i| SplitPair {
            pair: i.pair.clone(),
            split: i.split,
        })
        .collect()
}

fn rows_of(instances: &[PromptInstance], split: Split) -> Vec<usize> {
    (0..instances.len()).filter(|&i| instances[i].split == split).collect()
}

fn labels_at(instances: &[PromptInstance], rows: &[usize]) -> Vec<RelationLabel> {
    rows.iter().map(|&i| instances[i].pair.label).collect()
}

fn check_source(manifest: &DatasetManifest, expected: &str, path: &Path) -> Result<()> {
    match &manifest.source_checksum {
        Some(c) if c == expected => Ok(()),
        other => Err(Error::Checksum {
            what: format!("source dataset of {}", path.display()),
            expected: expected.to_string(),
            found: other.clone().unwrap_or_else(|| "none".into()),
        }),
    }
}

fn check_state(what: &str, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Checksum {
            what: format!("{what} (re-run the producing stage)"),
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

fn undefined_profile(e: &Error) -> bool {
    match e {
        Error::UndefinedCenterOfMass | Error::InsufficientData(_) => true,
        Error::Replicate { source, .. } => undefined_profile(source),
        _ => false,
    }
}

fn required<'a>(slot: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} is required for this stage")))
}

/// Latents of `rows` at `layer` (post-residual stream).
fn latents(sae: &SaeParams, acts: &ActivationSet, layer: usize, rows: &[usize]) -> Result<Array2<f64>> {
    sae.encode_batch(acts.matrix(layer, StreamId::PostResidual, rows)?.view())
}

impl Pipeline {
    fn seed_for(&self, name: &str) -> u64 {
        crate::rng::stream(self.config.seed, name).next_u64()
    }

    pub(super) fn main_dataset(&self) -> Result<(Vec<PromptInstance>, DatasetManifest)> {
        let path = self.out(DATASET_FILE);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        read_dataset(&path)
    }

    fn main_activations(&self, manifest: &DatasetManifest) -> Result<ActivationSet> {
        let path = required(&self.config.paths.activations, "activations")?;
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let acts = read_activations_checked(path, &manifest.checksum)?;
        if acts.n_instances() != manifest.n_instances {
            return Err(Error::Shape(format!(
                "{} has {} instances, dataset has {}",
                path.display(),
                acts.n_instances(),
                manifest.n_instances
            )));
        }
        Ok(acts)
    }

    fn load_sae(&self, path: &Path, d_model: usize) -> Result<(SaeParams, usize, String)> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let (sae, manifest) = read_sae(path)?;
        let layer = manifest
            .layer
            .ok_or_else(|| Error::Config(format!("SAE {} does not record its layer", path.display())))?;
        if sae.d_model() != d_model {
            return Err(Error::Shape(format!(
                "SAE {} has d_model {}, activations have {d_model}",
                path.display(),
                sae.d_model()
            )));
        }
        Ok((sae, layer, manifest.payload_sha256))
    }

    pub(super) fn stage_dataset(&self) -> Result<()> {
        let cfg = &self.config;
        let dir = cfg.wordnet_dir()?;
        let db = load_wordnet(&dir)?;
        let ds = build_dataset(&db, &cfg.dataset)?;
        let main = cfg.prompt_set;
        let instances = if main == PromptSet::Original {
            ds.instances.clone()
        } else {
            apply_prompts(&ds.pairs, main)
        };
        let manifest = DatasetManifest::describe(&cfg.dataset, &ds.pairs, &instances, main, None, &ds.effective_targets);
        let checksum = write_dataset(&self.out(DATASET_FILE), &instances, &manifest)?;
        self.log.line(format!(
            "[dataset] {} pairs, {} instances, checksum {checksum}",
            ds.pairs.len(),
            instances.len()
        ))?;

        let reversible: Vec<PromptInstance> = instances
            .iter()
            .filter(|i| i.split == Split::Test && REVERSIBLE.contains(&i.pair.label))
            .cloned()
            .collect();
        let reversed = build_reversed_set(&reversible)?;
        let rmanifest = DatasetManifest::describe(
            &cfg.dataset,
            &unique_pairs(&reversed),
            &reversed,
            main,
            Some(checksum.clone()),
            &ds.effective_targets,
        );
        write_dataset(&self.out(REVERSED_FILE), &reversed, &rmanifest)?;

        let words: Vec<String> = ds
            .pairs
            .iter()
            .flat_map(|p| [p.pair.word_a.clone(), p.pair.word_b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        write_word_list(&self.out(WORDS_FILE), &words, Some(checksum.clone()))?;

        for set in PromptSet::ALL.into_iter().filter(|s| *s != main) {
            let alt = apply_prompts(&ds.pairs, set);
            let m = DatasetManifest::describe(&cfg.dataset, &ds.pairs, &alt, set, Some(checksum.clone()), &ds.effective_targets);
            write_dataset(&self.out(alternate_file(set)), &alt, &m)?;
        }

        let mut t = Table::new("dataset", &self.hash, &["relation", "train_pairs", "test_pairs", "pos", "proportion"]);
        for (label, counts) in &manifest.pairs {
            for (pos, share) in manifest.pos_proportions.get(label).into_iter().flatten() {
                t.row(vec![cell(label), cell(counts.train), cell(counts.test), cell(pos), num(*share)]);
            }
        }
        t.write(&self.out("dataset/summary.tsv"))
    }

    pub(super) fn stage_probe(&self) -> Result<()> {
        let (instances, manifest) = self.main_dataset()?;
        let acts = self.main_activations(&manifest)?;
        let train_rows = rows_of(&instances, Split::Train);
        let test_rows = rows_of(&instances, Split::Test);
        let (y_train, y_test) = (labels_at(&instances, &train_rows), labels_at(&instances, &test_rows));
        let slots: Vec<(StreamId, usize)> = acts
            .meta()
            .streams
            .iter()
            .flat_map(|&s| acts.meta().layers_of(s).map(move |l| (s, l)))
            .collect();
        std::fs::create_dir_all(self.out("probe/probes")).map_err(|e| Error::io(self.out("probe/probes"), e))?;

        let fitted: Vec<(StreamId, usize, ProbeModel, Vec<RelationLabel>)> = slots
            .par_iter()
            .map(|&(stream, layer)| {
                let x = acts.matrix(layer, stream, &train_rows)?;
                let probe = ProbeModel::train(x.view(), &y_train, &self.config.probe)?;
                let pred = probe.predict(acts.matrix(layer, stream, &test_rows)?.view())?;
                probe.save(&self.out(probe_file(stream, layer)))?;
                Ok((stream, layer, probe, pred))
            })
            .collect::<Result<_>>()?;

        let mut t = Table::new(
            "probe",
            &self.hash,
            &["stream", "layer", "relation", "recall", "converged", "iterations"],
        );
        let classes: Vec<RelationLabel> = RelationLabel::ALL.to_vec();
        for (stream, layer, probe, pred) in &fitted {
            let recall = per_class_recall(pred, &y_test, &classes)?;
            for (rel, r) in recall {
                t.row(vec![
                    cell(stream.name()),
                    cell(layer),
                    cell(rel),
                    num(r),
                    cell(probe.status.converged),
                    cell(probe.status.iterations),
                ]);
            }
            if !probe.status.converged {
                self.log.line(format!(
                    "[probe] warning: {} layer {layer} stopped after {} iterations",
                    stream.name(),
                    probe.status.iterations
                ))?;
            }
        }
        t.write(&self.out("probe/accuracy.tsv"))?;
        write_json(
            &self.out("probe/predictions.json"),
            &PredictionState {
                dataset_checksum: manifest.checksum.clone(),
                test_rows,
                gold: y_test,
                predictions: fitted.into_iter().map(|(s, l, _, p)| (s, l, p)).collect(),
            },
        )?;
        write_json(
            &self.out("probe/state.json"),
            &ProbeState {
                dataset_checksum: manifest.checksum,
                config_hash: self.hash.clone(),
                n_layers: acts.n_layers(),
                streams: acts.meta().streams.clone(),
            },
        )
    }

    fn predictions(&self, checksum: &str) -> Result<PredictionState> {
        let state: PredictionState = read_json(&self.out("probe/predictions.json"))?;
        check_state("probe predictions", &state.dataset_checksum, checksum)?;
        Ok(state)
    }

    fn dense_probe(&self, stream: StreamId, layer: usize) -> Result<ProbeModel> {
        let path = self.out(probe_file(stream, layer));
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        ProbeModel::load(&path)
    }

    pub(super) fn stage_depth(&self) -> Result<()> {
        let (_, manifest) = self.main_dataset()?;
        let preds = self.predictions(&manifest.checksum)?;
        let streams: Vec<StreamId> = preds
            .predictions
            .iter()
            .map(|(s, _, _)| *s)
            .filter(|s| *s != StreamId::Embedding)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let b = self.config.bootstrap.replicates;

        let mut rows = Vec::new();
        for &stream in &streams {
            let layers = preds.layers(stream);
            for relation in RelationLabel::ALL {
                let members: Vec<usize> = (0..preds.gold.len()).filter(|&i| preds.gold[i] == relation).collect();
                if members.is_empty() {
                    return Err(Error::AbsentClass(relation.index()));
                }
                let correct: Vec<Vec<bool>> = layers
                    .iter()
                    .map(|(_, p)| members.iter().map(|&i| p[i] == relation).collect())
                    .collect();
                let layer_accs: Vec<f64> = correct
                    .iter()
                    .map(|c| c.iter().filter(|x| **x).count() as f64 / c.len() as f64)
                    .collect();
                let seed = self.seed_for(&format!("depth:{}:{}", stream.name(), relation.name()));
                let profile = match profile_ci(&correct, &vec![0; members.len()], b, seed) {
                    Ok(p) => Some(p),
                    Err(e) if undefined_profile(&e) => None,
                    Err(e) => return Err(e),
                };
                rows.push(DepthRow {
                    stream,
                    relation,
                    layer_accs,
                    profile,
                });
            }
        }

        let mut table = Table::new(
            "depth",
            &self.hash,
            &[
                "stream", "relation", "mean", "mean_lo", "mean_hi", "peak", "peak_lo", "peak_hi", "peak_depth",
                "peak_depth_norm", "com", "com_lo", "com_hi", "com_norm", "com_norm_lo", "com_norm_hi",
            ],
        );
        let mut curve = Table::new("depth", &self.hash, &["stream", "relation", "layer", "accuracy", "lo", "hi"]);
        for r in &rows {
            match &r.profile {
                Some(p) => {
                    table.row(vec![
                        cell(r.stream.name()),
                        cell(r.relation),
                        num(p.mean.point),
                        num(p.mean.lo),
                        num(p.mean.hi),
                        num(p.peak.point),
                        num(p.peak.lo),
                        num(p.peak.hi),
                        cell(p.profile.peak_depth),
                        num(p.profile.peak_depth_norm),
                        num(p.com.point),
                        num(p.com.lo),
                        num(p.com.hi),
                        num(p.com_norm.point),
                        num(p.com_norm.lo),
                        num(p.com_norm.hi),
                    ]);
                    for (l, ci) in p.layer_accs.iter().enumerate() {
                        curve.row(vec![cell(r.stream.name()), cell(r.relation), cell(l), num(ci.point), num(ci.lo), num(ci.hi)]);
                    }
                }
                None => {
                    let mean = r.layer_accs.iter().sum::<f64>() / r.layer_accs.len() as f64;
                    let peak = r.layer_accs.iter().copied().fold(0.0, f64::max);
                    let mut cells = vec![cell(r.stream.name()), cell(r.relation), num(mean), "NA".into(), "NA".into(), num(peak)];
                    cells.extend(std::iter::repeat_n("NA".to_string(), 10));
                    table.row(cells);
                    for (l, a) in r.layer_accs.iter().enumerate() {
                        curve.row(vec![cell(r.stream.name()), cell(r.relation), cell(l), num(*a), "NA".into(), "NA".into()]);
                    }
                }
            }
        }
        table.write(&self.out("depth/depth.tsv"))?;
        curve.write(&self.out("depth/curve.tsv"))?;

        let mut deltas = Table::new("depth", &self.hash, &["relation", "layer", "delta_attn", "delta_mlp"]);
        if StreamId::BLOCK.iter().all(|s| streams.contains(s)) {
            for relation in RelationLabel::ALL {
                let by_stream: BTreeMap<StreamId, Vec<f64>> = rows
                    .iter()
                    .filter(|r| r.relation == relation && StreamId::BLOCK.contains(&r.stream))
                    .map(|r| (r.stream, r.layer_accs.clone()))
                    .collect();
                for d in block_deltas(&by_stream)? {
                    deltas.row(vec![cell(relation), cell(d.layer), num(d.delta_attn), num(d.delta_mlp)]);
                }
            }
        }
        deltas.write(&self.out("depth/block_deltas.tsv"))?;
        write_json(&self.out("depth/results.json"), &rows)
    }

    pub(super) fn stage_geometry(&self) -> Result<()> {
        let (instances, manifest) = self.main_dataset()?;
        let words_path = self.out(WORDS_FILE);
        if !words_path.is_file() {
            return Err(Error::MissingFile(words_path));
        }
        let (words, wmanifest) = read_word_list(&words_path)?;
        if wmanifest.source_checksum.as_deref() != Some(manifest.checksum.as_str()) {
            return Err(Error::Checksum {
                what: format!("source dataset of {}", words_path.display()),
                expected: manifest.checksum.clone(),
                found: wmanifest.source_checksum.unwrap_or_else(|| "none".into()),
            });
        }
        let path = required(&self.config.paths.word_activations, "word_activations")?;
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let acts = read_activations_checked(path, &file_sha256(&words_path)?)?;
        let pairs: Vec<RelationPair> = unique_pairs(&instances).into_iter().map(|p| p.pair).collect();
        let groups = build_groups(&pairs, self.seed_for("geometry"));
        let (cells, empty) = similarity_table(&acts, &words, &groups)?;
        for g in &empty {
            self.log.line(format!("[geometry] group {g} has no pairs"))?;
        }
        let mut t = Table::new("geometry", &self.hash, &["group", "slot", "mean_cos", "n_pairs"]);
        for c in &cells {
            t.row(vec![cell(c.group), cell(c.layer_slot.name()), num(c.mean_cos), cell(c.n_pairs)]);
        }
        t.write(&self.out("geometry/similarity.tsv"))?;
        write_json(
            &self.out("geometry/results.json"),
            &GeometryState {
                dataset_checksum: manifest.checksum,
                cells,
                empty_groups: empty,
            },
        )
    }

    pub(super) fn stage_reverse(&self) -> Result<()> {
        let (_, manifest) = self.main_dataset()?;
        let preds = self.predictions(&manifest.checksum)?;
        let rpath = self.out(REVERSED_FILE);
        if !rpath.is_file() {
            return Err(Error::MissingFile(rpath));
        }
        let (reversed, rmanifest) = read_dataset(&rpath)?;
        check_source(&rmanifest, &manifest.checksum, &rpath)?;
        let apath = required(&self.config.paths.reversed_activations, "reversed_activations")?;
        if !apath.is_file() {
            return Err(Error::MissingFile(apath.to_path_buf()));
        }
        let racts = read_activations_checked(apath, &rmanifest.checksum)?;

        let post = preds.layers(StreamId::PostResidual);
        if post.is_empty() {
            return Err(Error::InvalidArgument("no post-residual probes; run the probe stage".into()));
        }
        let keep: Vec<usize> = (0..preds.gold.len()).filter(|&i| REVERSIBLE.contains(&preds.gold[i])).collect();
        let orig = EvalSet {
            gold: keep.iter().map(|&i| preds.gold[i]).collect(),
            origin: keep.iter().map(|&i| preds.gold[i]).collect(),
            predictions: post.iter().map(|(_, p)| keep.iter().map(|&i| p[i]).collect()).collect(),
        };
        let all_rows: Vec<usize> = (0..reversed.len()).collect();
        let flip_preds: Vec<Vec<RelationLabel>> = post
            .par_iter()
            .map(|(layer, _)| {
                let probe = self.dense_probe(StreamId::PostResidual, *layer)?;
                probe.predict(racts.matrix(*layer, StreamId::PostResidual, &all_rows)?.view())
            })
            .collect::<Result<_>>()?;
        let flip = EvalSet {
            gold: reversed.iter().map(|i| i.pair.label).collect(),
            origin: reversed.iter().map(|i| i.pair.label.inverted()).collect(),
            predictions: flip_preds,
        };
        let results = reversal_gap(&orig, &flip, self.config.bootstrap.replicates, self.seed_for("reverse"))?;

        let mut t = Table::new(
            "reverse",
            &self.hash,
            &[
                "relation", "acc_orig", "orig_lo", "orig_hi", "peak_layer_orig", "acc_flip", "flip_lo", "flip_hi",
                "peak_layer_flip", "delta", "delta_lo", "delta_hi",
            ],
        );
        for r in &results {
            t.row(vec![
                cell(r.relation),
                num(r.acc_orig.point),
                num(r.acc_orig.lo),
                num(r.acc_orig.hi),
                cell(r.peak_layer_orig),
                num(r.acc_flip.point),
                num(r.acc_flip.lo),
                num(r.acc_flip.hi),
                cell(r.peak_layer_flip),
                num(r.delta),
                num(r.delta_ci.lo),
                num(r.delta_ci.hi),
            ]);
        }
        t.write(&self.out("reverse/reversal.tsv"))?;
        write_json(
            &self.out("reverse/results.json"),
            &ReversalState {
                dataset_checksum: manifest.checksum,
                results,
            },
        )
    }

    fn check_encode_mode(&self) -> Result<()> {
        match self.config.patch.encode_mode {
            EncodeMode::Pooled => Ok(()),
            EncodeMode::TokenThenPool => Err(Error::Config(
                "patch.encode_mode = token_then_pool needs token-level activations; pooled files only support pooled".into(),
            )),
        }
    }

    pub(super) fn stage_sweep(&self) -> Result<()> {
        self.check_encode_mode()?;
        let (instances, manifest) = self.main_dataset()?;
        let acts = self.main_activations(&manifest)?;
        if self.config.paths.sae.is_empty() {
            return Err(Error::Config("paths.sae lists no SAE files".into()));
        }
        let train_rows = rows_of(&instances, Split::Train);
        let test_rows = rows_of(&instances, Split::Test);
        let y_train = labels_at(&instances, &train_rows);
        std::fs::create_dir_all(self.out("sweep/sae_probes")).map_err(|e| Error::io(self.out("sweep/sae_probes"), e))?;

        let mut layers = Vec::new();
        for path in &self.config.paths.sae {
            let (sae, layer, payload) = self.load_sae(path, acts.d_model())?;
            if layer >= acts.n_layers() {
                return Err(Error::Shape(format!("SAE {} targets layer {layer} of {}", path.display(), acts.n_layers())));
            }
            let z_train = latents(&sae, &acts, layer, &train_rows)?;
            let z_test = latents(&sae, &acts, layer, &test_rows)?;
            let probe = ProbeModel::train(z_train.view(), &y_train, &self.config.probe)?;
            probe.save(&self.out(sae_probe_file(layer)))?;
            let m = sae.n_latents();
            let sweep = self.config.sweep.clone().unwrap_or_else(|| SweepConfig::for_dictionary(m));
            let keep = sweep.grid.iter().copied().chain([sweep.k_ref]).max().unwrap_or(0).min(m);
            let relations: Vec<SweepRelation> = RelationLabel::SEMANTIC
                .par_iter()
                .map(|&relation| {
                    let ranking = rank_features(&probe, relation, layer)?.ranked_indices;
                    let score = |k: usize| selection_score(&probe, z_test.view(), relation, &ranking, k.min(m), ScoreVariant::KeepOnly);
                    let outcome = sweep_k(&sweep, score)?;
                    let remove_only_score = selection_score(
                        &probe,
                        z_test.view(),
                        relation,
                        &ranking,
                        outcome.chosen_k.min(m),
                        ScoreVariant::RemoveOnly,
                    )?;
                    Ok(SweepRelation {
                        relation,
                        ranking: ranking[..keep].to_vec(),
                        chosen_k: outcome.chosen_k.min(m),
                        qualified: outcome.qualified,
                        reference_score: outcome.reference_score,
                        curve: outcome.curve,
                        remove_only_score,
                    })
                })
                .collect::<Result<_>>()?;
            layers.push(SweepLayer {
                layer,
                sae_path: path.clone(),
                sae_payload_sha256: payload,
                n_latents: m,
                sweep,
                relations,
            });
        }
        layers.sort_by_key(|l| l.layer);

        let mut curve = Table::new("sweep", &self.hash, &["layer", "relation", "k", "score", "reference_score"]);
        let mut choice = Table::new(
            "sweep",
            &self.hash,
            &["layer", "relation", "chosen_k", "qualified", "reference_score", "keep_only_score", "remove_only_score"],
        );
        for l in &layers {
            for r in &l.relations {
                for (k, s) in &r.curve {
                    curve.row(vec![cell(l.layer), cell(r.relation), cell(k), num(*s), num(r.reference_score)]);
                }
                let keep_only = r.curve.iter().find(|(k, _)| *k == r.chosen_k).map(|(_, s)| *s);
                choice.row(vec![
                    cell(l.layer),
                    cell(r.relation),
                    cell(r.chosen_k),
                    cell(r.qualified),
                    num(r.reference_score),
                    opt_num(keep_only),
                    num(r.remove_only_score),
                ]);
            }
        }
        curve.write(&self.out("sweep/curve.tsv"))?;
        choice.write(&self.out("sweep/choice.tsv"))?;
        write_json(
            &self.out("sweep/state.json"),
            &SweepState {
                dataset_checksum: manifest.checksum,
                config_hash: self.hash.clone(),
                encode_mode: self.config.patch.encode_mode,
                layers,
            },
        )
    }

    fn sweep_state(&self, checksum: &str) -> Result<SweepState> {
        let state: SweepState = read_json(&self.out("sweep/state.json"))?;
        check_state("sweep state", &state.dataset_checksum, checksum)?;
        Ok(state)
    }

    /// SAE and SAE probe of a swept layer, verified against the sweep state.
    fn swept_layer(&self, l: &SweepLayer, d_model: usize) -> Result<(SaeParams, ProbeModel)> {
        let (sae, layer, payload) = self.load_sae(&l.sae_path, d_model)?;
        if layer != l.layer {
            return Err(Error::Shape(format!("SAE {} now targets layer {layer}", l.sae_path.display())));
        }
        check_state(&format!("SAE payload {}", l.sae_path.display()), &payload, &l.sae_payload_sha256)?;
        let probe = ProbeModel::load(&self.out(sae_probe_file(l.layer)))?;
        Ok((sae, probe))
    }

    fn report_options(&self, name: &str) -> ReportOptions {
        ReportOptions {
            replicates: self.config.bootstrap.replicates,
            seed: self.seed_for(name),
            control_seeds: self.config.patch.control_seeds,
        }
    }

    pub(super) fn stage_patch(&self) -> Result<()> {
        self.check_encode_mode()?;
        let (instances, manifest) = self.main_dataset()?;
        let acts = self.main_activations(&manifest)?;
        let state = self.sweep_state(&manifest.checksum)?;
        let train_rows = rows_of(&instances, Split::Train);
        let test_rows = rows_of(&instances, Split::Test);
        let (y_train, y_test) = (labels_at(&instances, &train_rows), labels_at(&instances, &test_rows));

        let mut sufficiency = Vec::new();
        let mut necessity = Vec::new();
        for l in &state.layers {
            let (sae, probe) = self.swept_layer(l, acts.d_model())?;
            let z_train = latents(&sae, &acts, l.layer, &train_rows)?;
            let z_test = latents(&sae, &acts, l.layer, &test_rows)?;
            let train = LatentSet::new(z_train.view(), &y_train)?;
            let test = LatentSet::new(z_test.view(), &y_test)?;
            let reports: Vec<(InterventionReport, InterventionReport)> = l
                .relations
                .par_iter()
                .map(|r| {
                    let name = format!("patch:{}:{}", l.layer, r.relation.name());
                    let opts = self.report_options(&name);
                    let s = sufficiency_report(&probe, train, test, r.relation, l.layer, &r.ranking, r.chosen_k, &opts)?;
                    let n = necessity_report(&probe, test, r.relation, l.layer, &r.ranking, r.chosen_k, &opts)?;
                    Ok((s, n))
                })
                .collect::<Result<_>>()?;
            for (s, n) in reports {
                sufficiency.push(s);
                necessity.push(n);
            }
        }

        let columns = [
            "relation", "layer", "k", "n_items", "dld_raw", "dld_raw_lo", "dld_raw_hi", "dld_std", "dld_std_lo",
            "dld_std_hi", "baseline_sd", "rate", "rate_lo", "rate_hi", "target_rate_after", "control_ratio",
        ];
        for (name, reports) in [("sufficiency", &sufficiency), ("necessity", &necessity)] {
            let mut t = Table::new("patch", &self.hash, &columns);
            for r in reports.iter() {
                t.row(vec![
                    cell(r.relation),
                    cell(r.layer),
                    cell(r.k),
                    cell(r.n_items),
                    num(r.delta_ld_raw.point),
                    num(r.delta_ld_raw.lo),
                    num(r.delta_ld_raw.hi),
                    opt_num(r.delta_ld_std.map(|c| c.point)),
                    opt_num(r.delta_ld_std.map(|c| c.lo)),
                    opt_num(r.delta_ld_std.map(|c| c.hi)),
                    num(r.baseline_sd),
                    num(r.rate.point),
                    num(r.rate.lo),
                    num(r.rate.hi),
                    num(r.target_rate_after),
                    opt_num(r.control_ratio),
                ]);
            }
            t.write(&self.out(format!("patch/{name}.tsv")))?;
        }
        write_json(
            &self.out("patch/results.json"),
            &PatchResults {
                dataset_checksum: manifest.checksum,
                sufficiency,
                necessity,
            },
        )
    }

    pub(super) fn stage_robustness(&self) -> Result<()> {
        self.check_encode_mode()?;
        let (instances, manifest) = self.main_dataset()?;
        let acts = self.main_activations(&manifest)?;
        let preds = self.predictions(&manifest.checksum)?;
        let state = self.sweep_state(&manifest.checksum)?;
        let patch: PatchResults = read_json(&self.out("patch/results.json"))?;
        check_state("patch results", &patch.dataset_checksum, &manifest.checksum)?;

        let train_rows = rows_of(&instances, Split::Train);
        let y_train = labels_at(&instances, &train_rows);
        let post_layers: Vec<usize> = preds.layers(StreamId::PostResidual).iter().map(|(l, _)| *l).collect();
        let probes: Vec<ProbeModel> = post_layers
            .iter()
            .map(|&l| self.dense_probe(StreamId::PostResidual, l))
            .collect::<Result<_>>()?;

        // frozen pieces: SAE, SAE probe, ranking, k and injection values at
        // each relation's peak sufficiency layer
        let mut saes: BTreeMap<usize, (SaeParams, ProbeModel)> = BTreeMap::new();
        for l in &state.layers {
            saes.insert(l.layer, self.swept_layer(l, acts.d_model())?);
        }
        let mut frozen = Vec::new();
        for relation in RelationLabel::SEMANTIC {
            let reports: Vec<InterventionReport> =
                patch.sufficiency.iter().filter(|r| r.relation == relation).cloned().collect();
            let Some(peak) = crate::intervention::peak_sufficiency(&reports) else {
                continue;
            };
            let layer_state = state.layers.iter().find(|l| l.layer == peak.layer).expect("swept layer");
            let rel_state = layer_state.relations.iter().find(|r| r.relation == relation).expect("swept relation");
            let (sae, _) = &saes[&peak.layer];
            let z_train = latents(sae, &acts, peak.layer, &train_rows)?;
            frozen.push((relation, peak.layer, rel_state.ranking.clone(), rel_state.chosen_k, injection_values(z_train.view(), &y_train, relation)?));
        }

        let mut sets: Vec<(PromptSet, Vec<PromptInstance>, ActivationSet)> = Vec::new();
        for (&set, path) in &self.config.paths.robustness {
            let dpath = self.out(alternate_file(set));
            if !dpath.is_file() {
                return Err(Error::MissingFile(dpath));
            }
            let (alt, amanifest) = read_dataset(&dpath)?;
            check_source(&amanifest, &manifest.checksum, &dpath)?;
            if !path.is_file() {
                return Err(Error::MissingFile(path.clone()));
            }
            let alt_acts = read_activations_checked(path, &amanifest.checksum)?;
            sets.push((set, alt, alt_acts));
        }

        let mut rows = Vec::new();
        let main_set = (self.config.prompt_set, instances.clone(), acts.clone());
        for (set, insts, set_acts) in std::iter::once(&main_set).chain(sets.iter()) {
            let test_rows = rows_of(insts, Split::Test);
            let y_test = labels_at(insts, &test_rows);
            let classes = RelationLabel::ALL.to_vec();
            let layer_recall: Vec<BTreeMap<RelationLabel, f64>> = post_layers
                .par_iter()
                .zip(probes.par_iter())
                .map(|(&l, probe)| {
                    let pred = probe.predict(set_acts.matrix(l, StreamId::PostResidual, &test_rows)?.view())?;
                    per_class_recall(&pred, &y_test, &classes)
                })
                .collect::<Result<_>>()?;
            let mut z_cache: BTreeMap<usize, Array2<f64>> = BTreeMap::new();
            for (_, layer, _, _, _) in &frozen {
                if !z_cache.contains_key(layer) {
                    z_cache.insert(*layer, latents(&saes[layer].0, set_acts, *layer, &test_rows)?);
                }
            }
            let patches: Vec<FrozenPatch<'_>> = frozen
                .iter()
                .map(|(relation, layer, ranking, k, values)| FrozenPatch {
                    relation: *relation,
                    layer: *layer,
                    probe: &saes[layer].1,
                    ranking,
                    k: *k,
                    injection_values: values.clone(),
                })
                .collect();
            let row = robustness_row(set.name(), &layer_recall, &patches, |layer| {
                LatentSet::new(z_cache[&layer].view(), &y_test)
            })?;
            rows.push(row);
        }

        let mut t = Table::new("robustness", &self.hash, &["prompt_set", "mean_acc", "peak_acc", "delta_fr", "drop_rate"]);
        for r in &rows {
            t.row(vec![cell(&r.prompt_set), num(r.mean_acc), num(r.peak_acc), num(r.delta_fr), num(r.drop_rate)]);
        }
        t.write(&self.out("robustness/robustness.tsv"))?;
        write_json(
            &self.out("robustness/results.json"),
            &RobustnessState {
                dataset_checksum: manifest.checksum,
                rows,
            },
        )
    }
}
