//! Seeded generator for WordNet-format lexicons.
//!
//! Produces noun and verb hypernym trees, lexical antonym pairs for all three
//! parts of speech and multi-lemma synsets, then writes them as `index.*` /
//! `data.*` files with correct byte offsets, so the regular loader reads them
//! like a real database.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::wordnet::Pos;

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconSpec {
    pub seed: u64,
    pub noun_trees: usize,
    pub verb_trees: usize,
    pub branching: usize,
    /// Levels below each root.
    pub depth: usize,
    pub noun_antonyms: usize,
    pub verb_antonyms: usize,
    pub adj_antonyms: usize,
    /// Lemmas per synset are drawn uniformly from `1..=max_lemmas`.
    pub max_lemmas: usize,
}

impl Default for LexiconSpec {
    /// Large enough for 300 POS-balanced pairs per relation.
    fn default() -> Self {
        Self {
            seed: 11,
            noun_trees: 24,
            verb_trees: 12,
            branching: 3,
            depth: 2,
            noun_antonyms: 250,
            verb_antonyms: 100,
            adj_antonyms: 60,
            max_lemmas: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSynset {
    pub lemmas: Vec<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Lexical antonym: (index of the partner synset); first lemmas are linked.
    pub antonym: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticLexicon {
    pub nouns: Vec<SynthSynset>,
    pub verbs: Vec<SynthSynset>,
    pub adjs: Vec<SynthSynset>,
}

impl SyntheticLexicon {
    pub fn synsets(&self, pos: Pos) -> &[SynthSynset] {
        match pos {
            Pos::Noun => &self.nouns,
            Pos::Verb => &self.verbs,
            Pos::Adj => &self.adjs,
        }
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

struct WordSource {
    rng: rng::StreamRng,
    used: BTreeSet<String>,
}

impl WordSource {
    fn fresh(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=4);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[self.rng.random_range(0..ONSETS.len())]);
                w.push_str(VOWELS[self.rng.random_range(0..VOWELS.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn synset(&mut self, max_lemmas: usize, parent: Option<usize>) -> SynthSynset {
        let n = self.rng.random_range(1..=max_lemmas.max(1));
        SynthSynset {
            lemmas: (0..n).map(|_| self.fresh()).collect(),
            parent,
            children: Vec::new(),
            antonym: None,
        }
    }
}

fn grow_trees(src: &mut WordSource, out: &mut Vec<SynthSynset>, spec: &LexiconSpec, trees: usize) {
    for _ in 0..trees {
        let root = out.len();
        out.push(src.synset(spec.max_lemmas, None));
        let mut frontier = vec![root];
        for _ in 0..spec.depth {
            let mut next = Vec::new();
            for &p in &frontier {
                for _ in 0..spec.branching {
                    let id = out.len();
                    out.push(src.synset(spec.max_lemmas, Some(p)));
                    out[p].children.push(id);
                    next.push(id);
                }
            }
            frontier = next;
        }
    }
}

fn add_antonyms(src: &mut WordSource, out: &mut Vec<SynthSynset>, max_lemmas: usize, pairs: usize) {
    for _ in 0..pairs {
        let (a, b) = (out.len(), out.len() + 1);
        let mut sa = src.synset(max_lemmas, None);
        let mut sb = src.synset(max_lemmas, None);
        sa.antonym = Some(b);
        sb.antonym = Some(a);
        out.push(sa);
        out.push(sb);
    }
}

pub fn generate_lexicon(spec: &LexiconSpec) -> SyntheticLexicon {
    let mut src = WordSource {
        rng: rng::stream(spec.seed, "lexicon"),
        used: BTreeSet::new(),
    };
    let mut lex = SyntheticLexicon::default();
    grow_trees(&mut src, &mut lex.nouns, spec, spec.noun_trees);
    add_antonyms(&mut src, &mut lex.nouns, spec.max_lemmas, spec.noun_antonyms);
    grow_trees(&mut src, &mut lex.verbs, spec, spec.verb_trees);
    add_antonyms(&mut src, &mut lex.verbs, spec.max_lemmas, spec.verb_antonyms);
    add_antonyms(&mut src, &mut lex.adjs, spec.max_lemmas, spec.adj_antonyms);
    lex
}

const HEADER: &str = "  1 Synthetic lexicon in the WordNet 3.0 database format.\n  2 Generated for tests; every word is a made-up string.\n";

fn data_line(pos: Pos, synsets: &[SynthSynset], i: usize, offsets: &[u32]) -> String {
    let s = &synsets[i];
    let code = match pos {
        Pos::Noun => "n",
        Pos::Verb => "v",
        Pos::Adj => "a",
    };
    let mut line = format!("{:08} 00 {code} {:02x}", offsets[i], s.lemmas.len());
    for w in &s.lemmas {
        let _ = write!(line, " {w} 0");
    }
    let mut ptrs = Vec::new();
    if let Some(p) = s.parent {
        ptrs.push(format!("@ {:08} {code} 0000", offsets[p]));
    }
    for &c in &s.children {
        ptrs.push(format!("~ {:08} {code} 0000", offsets[c]));
    }
    if let Some(a) = s.antonym {
        ptrs.push(format!("! {:08} {code} 0101", offsets[a]));
    }
    let _ = write!(line, " {:03}", ptrs.len());
    for p in ptrs {
        let _ = write!(line, " {p}");
    }
    if pos == Pos::Verb {
        line.push_str(" 01 + 02 00");
    }
    line.push_str(" | synthetic gloss  \n");
    line
}

/// Writes `index.{noun,verb,adj}` and `data.{noun,verb,adj}` into `dir`.
pub fn write_wordnet(lex: &SyntheticLexicon, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for pos in Pos::ALL {
        let synsets = lex.synsets(pos);
        // every offset is rendered with 8 digits, so line lengths do not
        // depend on offset values
        let dummy = vec![0u32; synsets.len()];
        let mut offsets = Vec::with_capacity(synsets.len());
        let mut at = HEADER.len() as u32;
        for i in 0..synsets.len() {
            offsets.push(at);
            at += data_line(pos, synsets, i, &dummy).len() as u32;
        }
        let mut data = String::from(HEADER);
        for i in 0..synsets.len() {
            data.push_str(&data_line(pos, synsets, i, &offsets));
        }

        let code = match pos {
            Pos::Noun => "n",
            Pos::Verb => "v",
            Pos::Adj => "a",
        };
        let mut entries: Vec<(String, usize)> = synsets
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.lemmas.iter().map(move |w| (w.clone(), i)))
            .collect();
        entries.sort();
        let mut index = String::from(HEADER);
        for (w, i) in entries {
            let s = &synsets[i];
            let mut syms = Vec::new();
            if s.antonym.is_some() {
                syms.push("!");
            }
            if s.parent.is_some() {
                syms.push("@");
            }
            if !s.children.is_empty() {
                syms.push("~");
            }
            let _ = writeln!(
                index,
                "{w} {code} 1 {}{} 1 0 {:08}  ",
                syms.len(),
                syms.iter().map(|s| format!(" {s}")).collect::<String>(),
                offsets[i]
            );
        }
        for (name, text) in [("index", &index), ("data", &data)] {
            let path = dir.join(format!("{name}.{}", pos.file_suffix()));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
