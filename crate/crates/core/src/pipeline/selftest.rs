//! End-to-end run on generated data: a synthetic lexicon in WordNet format,
//! a seeded toy transformer for activations and exact-reconstruction toy
//! SAEs. Every stage runs, then structural invariants are checked on the
//! outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::config::RunConfig;
use super::output::read_json;
use super::stages::{alternate_file, DepthRow, PatchResults, DATASET_FILE, REVERSED_FILE, WORDS_FILE};
use super::Pipeline;
use crate::activation::{read_activations, write_activations, write_sae, ActivationSet, StreamId};
use crate::checksum::file_sha256;
use crate::dataset::{read_dataset, read_word_list, shared_lemmas, PromptSet, Split};
use crate::directionality::{build_reversed_set, REVERSIBLE};
use crate::error::Result;
use crate::intervention::SweepConfig;
use crate::probe::BootstrapCI;
use crate::synthetic::{
    concept_vectors, generate_lexicon, toy_activations, toy_sae, write_wordnet, LexiconSpec, ToyModel,
    ToyModelSpec, Vocabulary,
};

const PAIRS_PER_LABEL: usize = 100;
const REPLICATES: usize = 200;
const STREAM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub out_dir: PathBuf,
    pub checks: Vec<SelftestCheck>,
    pub elapsed: Duration,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// The run configuration used by the self-test, rooted at `out_dir`.
pub fn selftest_config(out_dir: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        out_dir: out_dir.to_path_buf(),
        sweep: Some(SweepConfig {
            grid: vec![1, 2, 4, 8, 16],
            k_ref: 16,
            cutoff: 0.9,
        }),
        ..RunConfig::default()
    }
    .with_seed(seed);
    cfg.dataset.pairs_per_label = PAIRS_PER_LABEL;
    cfg.bootstrap.replicates = REPLICATES;
    let inputs = out_dir.join("inputs");
    cfg.paths.wordnet = Some(inputs.join("wordnet"));
    cfg.paths.activations = Some(inputs.join("main.relact"));
    cfg.paths.reversed_activations = Some(inputs.join("reversed.relact"));
    cfg.paths.word_activations = Some(inputs.join("words.relact"));
    let spec = ToyModelSpec::default();
    cfg.paths.sae = (0..spec.n_layers).map(|l| inputs.join(format!("sae_L{l}.relsae"))).collect();
    cfg.paths.robustness = PromptSet::ALL
        .into_iter()
        .filter(|s| *s != cfg.prompt_set)
        .map(|s| (s, inputs.join(format!("{}.relact", s.name()))))
        .collect();
    cfg
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> SelftestCheck {
    SelftestCheck {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

/// Largest deviation from `post_l = post_{l-1} + attn_l + mlp_l`, with the
/// embedding as `post_{-1}`.
fn stream_identity_error(acts: &ActivationSet) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..acts.n_instances() {
        let mut prev: Vec<f32> = acts.vector(i, 0, StreamId::Embedding)?.to_vec();
        for l in 0..acts.n_layers() {
            let attn = acts.vector(i, l, StreamId::AttentionOut)?;
            let mlp = acts.vector(i, l, StreamId::MlpOut)?;
            let post = acts.vector(i, l, StreamId::PostResidual)?;
            for j in 0..post.len() {
                let expected = f64::from(prev[j]) + f64::from(attn[j]) + f64::from(mlp[j]);
                let scale = 1.0f64.max(expected.abs());
                worst = worst.max((f64::from(post[j]) - expected).abs() / scale);
            }
            prev = post.to_vec();
        }
    }
    Ok(worst)
}

fn ci_holds(ci: &BootstrapCI) -> bool {
    ci.lo <= ci.hi && ci.contains(ci.point)
}

impl Pipeline {
    /// Writes the lexicon, activations and SAEs the configured run reads.
    fn selftest_inputs(&self) -> Result<()> {
        let paths = &self.config.paths;
        let wordnet = paths.wordnet.as_deref().expect("selftest config sets wordnet");
        let lex = generate_lexicon(&LexiconSpec {
            seed: self.config.seed,
            ..LexiconSpec::default()
        });
        write_wordnet(&lex, wordnet)?;
        self.run(super::Stage::Dataset)?;

        let (main, manifest) = self.main_dataset()?;
        let (reversed, rmanifest) = read_dataset(&self.out(REVERSED_FILE))?;
        let (words, _) = read_word_list(&self.out(WORDS_FILE))?;
        let mut alternates = Vec::new();
        for set in paths.robustness.keys() {
            alternates.push((*set, read_dataset(&self.out(alternate_file(*set)))?));
        }

        let texts = |insts: &[crate::dataset::PromptInstance]| -> Vec<String> { insts.iter().map(|i| i.text.clone()).collect() };
        let mut corpus: Vec<String> = texts(&main);
        corpus.extend(texts(&reversed));
        corpus.extend(words.iter().cloned());
        for (_, (insts, _)) in &alternates {
            corpus.extend(texts(insts));
        }
        let spec = ToyModelSpec {
            seed: self.config.seed,
            ..ToyModelSpec::default()
        };
        let vocab = Vocabulary::build(corpus.iter().map(String::as_str), spec.vocab_size)?;
        let vectors = concept_vectors(&lex, spec.d_model, self.config.seed);
        let model = ToyModel::new(spec.clone(), vocab, Some(&vectors))?;

        let main_path = paths.activations.as_deref().expect("selftest config sets activations");
        write_activations(main_path, &toy_activations(&model, &texts(&main), &manifest.checksum)?)?;
        let rev_path = paths.reversed_activations.as_deref().expect("selftest config sets reversed");
        write_activations(rev_path, &toy_activations(&model, &texts(&reversed), &rmanifest.checksum)?)?;
        let words_path = paths.word_activations.as_deref().expect("selftest config sets words");
        write_activations(words_path, &toy_activations(&model, &words, &file_sha256(&self.out(WORDS_FILE))?)?)?;
        for (set, (insts, m)) in &alternates {
            write_activations(&paths.robustness[set], &toy_activations(&model, &texts(insts), &m.checksum)?)?;
        }
        for (l, path) in paths.sae.iter().enumerate() {
            let sae = toy_sae(spec.d_model, self.config.seed ^ (l as u64 + 1))?;
            write_sae(path, &sae, Some(l), crate::synthetic::toy_model::TOY_MODEL_NAME)?;
        }
        Ok(())
    }

    fn selftest_checks(&self) -> Result<Vec<SelftestCheck>> {
        let mut checks = Vec::new();

        let acts = read_activations(self.config.paths.activations.as_deref().expect("activations"))?;
        let err = stream_identity_error(&acts)?;
        checks.push(check(
            "stream identity",
            err <= STREAM_TOLERANCE,
            format!("max relative error {err:.2e} (tolerance {STREAM_TOLERANCE:.0e})"),
        ));

        let (main, _) = read_dataset(&self.out(DATASET_FILE))?;
        let mut seen = BTreeMap::new();
        for inst in &main {
            seen.entry((inst.pair.word_a.clone(), inst.pair.word_b.clone(), inst.pair.label))
                .or_insert((inst.pair.clone(), inst.split));
        }
        let (pairs, assignment): (Vec<_>, Vec<Split>) = seen.into_values().unzip();
        let shared = shared_lemmas(&pairs, &assignment);
        checks.push(check(
            "lemma-disjoint split",
            shared.is_empty(),
            format!("{} pairs, {} shared lemmas", pairs.len(), shared.len()),
        ));

        let reversible: Vec<_> = main
            .iter()
            .filter(|i| i.split == Split::Test && REVERSIBLE.contains(&i.pair.label))
            .cloned()
            .collect();
        let (reversed, _) = read_dataset(&self.out(REVERSED_FILE))?;
        let twice = build_reversed_set(&reversed)?;
        checks.push(check(
            "reversal involution",
            twice == reversible && reversed == build_reversed_set(&reversible)?,
            format!("{} reversible test instances", reversible.len()),
        ));

        let patch: PatchResults = read_json(&self.out("patch/results.json"))?;
        let fr_ok = patch.sufficiency.iter().all(|r| (-1.0..=1.0).contains(&r.rate.point));
        checks.push(check("delta FR in [-1, 1]", fr_ok, format!("{} sufficiency reports", patch.sufficiency.len())));
        let dr_ok = patch.necessity.iter().all(|r| (0.0..=1.0).contains(&r.rate.point));
        checks.push(check("DR in [0, 1]", dr_ok, format!("{} necessity reports", patch.necessity.len())));
        let all_reports = || patch.sufficiency.iter().chain(&patch.necessity);
        let sign_ok = all_reports().all(|r| match r.delta_ld_std {
            Some(s) => s.point.signum() == r.delta_ld_raw.point.signum() || r.delta_ld_raw.point == 0.0,
            None => true,
        });
        checks.push(check("std/raw delta LD sign agreement", sign_ok, ""));

        let depth: Vec<DepthRow> = read_json(&self.out("depth/results.json"))?;
        let profiles: Vec<_> = depth.iter().filter_map(|r| r.profile.as_ref()).collect();
        let ci_ok = profiles.iter().all(|p| ci_holds(&p.mean) && p.layer_accs.iter().all(ci_holds))
            && all_reports().all(|r| ci_holds(&r.delta_ld_raw));
        checks.push(check(
            "CI containment",
            ci_ok,
            format!("{} depth profiles, {} intervention reports", profiles.len(), all_reports().count()),
        ));
        let peak_ok = depth.iter().all(|r| {
            let mean = r.layer_accs.iter().sum::<f64>() / r.layer_accs.len() as f64;
            r.layer_accs.iter().copied().fold(f64::MIN, f64::max) >= mean - 1e-12
        });
        checks.push(check("peak >= mean", peak_ok, format!("{} profiles", depth.len())));

        let report_files = [
            "table2_probing.tsv",
            "table3_reversal.tsv",
            "table4_sufficiency.tsv",
            "table5_necessity.tsv",
            "table6_robustness.tsv",
            "table_geometry.tsv",
        ];
        let missing: Vec<&str> = report_files
            .into_iter()
            .filter(|f| !self.out(format!("report/{f}")).is_file())
            .collect();
        checks.push(check("report tables written", missing.is_empty(), missing.join(", ")));
        Ok(checks)
    }
}

/// Runs the whole pipeline on generated data under `out_dir`.
pub fn run_selftest(out_dir: &Path, seed: u64, verbose: bool) -> Result<SelftestReport> {
    let start = Instant::now();
    let mut pipeline = Pipeline::new(selftest_config(out_dir, seed))?;
    if verbose {
        pipeline = pipeline.verbose();
    }
    pipeline.selftest_inputs()?;
    for stage in super::Stage::ALL.into_iter().skip(1) {
        pipeline.run(stage)?;
    }
    let checks = pipeline.selftest_checks()?;
    Ok(SelftestReport {
        out_dir: out_dir.to_path_buf(),
        checks,
        elapsed: start.elapsed(),
    })
}
