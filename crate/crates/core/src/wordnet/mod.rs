//! WordNet 3.0 lexical database, read straight from the `index.*` / `data.*`
//! flat files.

mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::{parse_data_line, parse_index_line, DataLine, IndexLine, Pointer};

/// Parts of speech covered by the relation dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
}

impl Pos {
    pub const ALL: [Pos; 3] = [Pos::Noun, Pos::Verb, Pos::Adj];

    /// File suffix used by the database (`index.noun`, `data.adj`, ...).
    pub fn file_suffix(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adj => "adj",
        }
    }

    pub fn name(self) -> &'static str {
        self.file_suffix()
    }

    /// Maps a synset-type / pointer-pos character. Adjective satellites
    /// (`s`) live in the adjective files. Adverbs are not part of the
    /// dataset and map to `None`.
    pub fn from_code(c: &str) -> Option<Pos> {
        match c {
            "n" => Some(Pos::Noun),
            "v" => Some(Pos::Verb),
            "a" | "s" => Some(Pos::Adj),
            _ => None,
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noun" | "n" => Ok(Pos::Noun),
            "verb" | "v" => Ok(Pos::Verb),
            "adj" | "a" | "s" => Ok(Pos::Adj),
            _ => Err(Error::InvalidArgument(format!("unknown part of speech {s:?}"))),
        }
    }
}

/// A synset is identified by its file (part of speech) and byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SynsetId {
    pub pos: Pos,
    pub offset: u32,
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:08}", self.pos, self.offset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: SynsetId,
    /// Member lemmas as they appear in the data file (case preserved,
    /// adjective position markers stripped).
    pub lemmas: Vec<String>,
}

/// Directed hypernymy edge: `specific` IS-A `general`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HypernymEdge {
    pub specific: SynsetId,
    pub general: SynsetId,
}

/// Lexical antonymy between two specific words. `None` word indices mean the
/// pointer was semantic (whole synset to whole synset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AntonymEdge {
    pub from: SynsetId,
    pub from_word: Option<usize>,
    pub to: SynsetId,
    pub to_word: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct LexicalDB {
    /// Index lemmas and the parts of speech they occur under.
    pub lemmas: BTreeMap<String, BTreeSet<Pos>>,
    pub synsets: BTreeMap<SynsetId, Synset>,
    pub hypernyms: Vec<HypernymEdge>,
    pub antonyms: Vec<AntonymEdge>,
    word_synsets: HashMap<String, Vec<SynsetId>>,
    parents: HashMap<SynsetId, Vec<SynsetId>>,
}

impl LexicalDB {
    /// Assembles a database from parsed parts, validating that every edge
    /// endpoint exists.
    pub fn from_parts(
        lemmas: BTreeMap<String, BTreeSet<Pos>>,
        synsets: BTreeMap<SynsetId, Synset>,
        mut hypernyms: Vec<HypernymEdge>,
        mut antonyms: Vec<AntonymEdge>,
    ) -> Result<Self> {
        let check = |from: SynsetId, to: SynsetId| -> Result<()> {
            if synsets.contains_key(&to) {
                Ok(())
            } else {
                Err(Error::DanglingPointer {
                    from: from.to_string(),
                    to: to.to_string(),
                })
            }
        };
        for e in &hypernyms {
            check(e.specific, e.general)?;
        }
        for e in &antonyms {
            check(e.from, e.to)?;
        }
        hypernyms.sort();
        hypernyms.dedup();
        antonyms.sort();
        antonyms.dedup();

        let mut word_synsets: HashMap<String, Vec<SynsetId>> = HashMap::new();
        for s in synsets.values() {
            for lemma in &s.lemmas {
                let ids = word_synsets.entry(lemma.clone()).or_default();
                if !ids.contains(&s.id) {
                    ids.push(s.id);
                }
            }
        }
        let mut parents: HashMap<SynsetId, Vec<SynsetId>> = HashMap::new();
        for e in &hypernyms {
            parents.entry(e.specific).or_default().push(e.general);
        }
        Ok(Self {
            lemmas,
            synsets,
            hypernyms,
            antonyms,
            word_synsets,
            parents,
        })
    }

    pub fn synset(&self, id: SynsetId) -> Option<&Synset> {
        self.synsets.get(&id)
    }

    /// Synsets whose member list contains `word` (exact, case-sensitive).
    pub fn synsets_of(&self, word: &str) -> &[SynsetId] {
        self.word_synsets.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every distinct member word across all synsets, sorted.
    pub fn words(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.word_synsets.keys().map(String::as_str).collect();
        words.sort_unstable();
        words
    }

    /// Words occurring in at least one synset of the given part of speech,
    /// sorted.
    pub fn words_with_pos(&self, pos: Pos) -> Vec<&str> {
        let mut words: Vec<&str> = self
            .word_synsets
            .iter()
            .filter(|(_, ids)| ids.iter().any(|id| id.pos == pos))
            .map(|(w, _)| w.as_str())
            .collect();
        words.sort_unstable();
        words
    }

    pub fn hypernyms_of(&self, id: SynsetId) -> &[SynsetId] {
        self.parents.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Synsets reachable from `id` by following hypernym edges at most
    /// `depth` times (excluding `id` itself).
    pub fn hypernym_closure(&self, id: SynsetId, depth: usize) -> BTreeSet<SynsetId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([(id, 0usize)]);
        while let Some((cur, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            for &p in self.hypernyms_of(cur) {
                if seen.insert(p) {
                    queue.push_back((p, d + 1));
                }
            }
        }
        seen
    }

    /// Whether two words stand in any of the dataset relations: shared
    /// synset, antonymy between any of their synsets, or hypernymy in either
    /// direction within `depth` hops.
    pub fn related(&self, a: &str, b: &str, depth: usize) -> bool {
        let sa = self.synsets_of(a);
        let sb = self.synsets_of(b);
        if sa.iter().any(|x| sb.contains(x)) {
            return true;
        }
        let antonym = self.antonyms.iter().any(|e| {
            (sa.contains(&e.from) && sb.contains(&e.to)) || (sb.contains(&e.from) && sa.contains(&e.to))
        });
        if antonym {
            return true;
        }
        let up_a: BTreeSet<SynsetId> = sa.iter().flat_map(|&s| self.hypernym_closure(s, depth)).collect();
        if sb.iter().any(|s| up_a.contains(s)) {
            return true;
        }
        let up_b: BTreeSet<SynsetId> = sb.iter().flat_map(|&s| self.hypernym_closure(s, depth)).collect();
        sa.iter().any(|s| up_b.contains(s))
    }
}

/// Loads the noun, verb and adjective index and data files from a WordNet 3.0
/// `dict/` directory.
pub fn load_wordnet(dir: &Path) -> Result<LexicalDB> {
    let mut lemmas: BTreeMap<String, BTreeSet<Pos>> = BTreeMap::new();
    let mut synsets = BTreeMap::new();
    let mut hypernyms = Vec::new();
    let mut antonyms = Vec::new();

    for pos in Pos::ALL {
        let index_path = dir.join(format!("index.{}", pos.file_suffix()));
        let data_path = dir.join(format!("data.{}", pos.file_suffix()));
        for p in [&index_path, &data_path] {
            if !p.is_file() {
                return Err(Error::MissingFile(p.clone()));
            }
        }

        let index = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        for (offset, line) in content_lines(&index) {
            let entry = parse_index_line(line).map_err(|message| Error::Parse {
                path: index_path.clone(),
                offset,
                message,
            })?;
            lemmas.entry(entry.lemma).or_default().insert(pos);
        }

        let data = std::fs::read_to_string(&data_path).map_err(|e| Error::io(&data_path, e))?;
        for (offset, line) in content_lines(&data) {
            let entry = parse_data_line(line).map_err(|message| Error::Parse {
                path: data_path.clone(),
                offset,
                message,
            })?;
            let id = SynsetId {
                pos,
                offset: entry.offset,
            };
            for ptr in &entry.pointers {
                let Some(target_pos) = Pos::from_code(&ptr.pos) else {
                    continue;
                };
                let target = SynsetId {
                    pos: target_pos,
                    offset: ptr.offset,
                };
                match ptr.symbol.as_str() {
                    "@" => hypernyms.push(HypernymEdge {
                        specific: id,
                        general: target,
                    }),
                    "!" => antonyms.push(AntonymEdge {
                        from: id,
                        from_word: ptr.source.map(|w| w - 1),
                        to: target,
                        to_word: ptr.target.map(|w| w - 1),
                    }),
                    _ => {}
                }
            }
            synsets.insert(
                id,
                Synset {
                    id,
                    lemmas: entry.words,
                },
            );
        }
    }

    LexicalDB::from_parts(lemmas, synsets, hypernyms, antonyms)
}

/// Non-header lines with their starting byte offsets. License header lines
/// begin with two spaces.
fn content_lines(text: &str) -> impl Iterator<Item = (u64, &str)> {
    let mut offset = 0u64;
    text.split_inclusive('\n').filter_map(move |raw| {
        let start = offset;
        offset += raw.len() as u64;
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.is_empty() || line.starts_with("  ") {
            None
        } else {
            Some((start, line))
        }
    })
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;

    fn fixture() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/wordnet-mini")
    }

    #[test]
    fn mini_fixture_counts() {
        let db = load_wordnet(&fixture()).unwrap();
        assert_eq!(db.synsets.len(), 12);
        assert_eq!(db.hypernyms.len(), 4);
        // two antonym pairs, each stored in both directions
        assert_eq!(db.antonyms.len(), 4);
        assert_eq!(db.synsets.keys().filter(|id| id.pos == Pos::Noun).count(), 6);
        assert_eq!(db.synsets.keys().filter(|id| id.pos == Pos::Verb).count(), 2);
        assert_eq!(db.synsets.keys().filter(|id| id.pos == Pos::Adj).count(), 4);
    }

    #[test]
    fn adjective_markers_are_stripped() {
        let db = load_wordnet(&fixture()).unwrap();
        assert!(!db.synsets_of("glad").is_empty());
        assert!(db.synsets_of("glad(p)").is_empty());
    }

    #[test]
    fn closure_and_relatedness() {
        let db = load_wordnet(&fixture()).unwrap();
        let beagle = db.synsets_of("beagle")[0];
        let up: Vec<String> = db
            .hypernym_closure(beagle, 10)
            .into_iter()
            .map(|id| db.synset(id).unwrap().lemmas[0].clone())
            .collect();
        assert_eq!(up.len(), 2);
        assert!(up.contains(&"dog".to_string()) && up.contains(&"animal".to_string()));
        assert_eq!(db.hypernym_closure(beagle, 1).len(), 1);
        assert!(db.related("beagle", "animal", 10));
        assert!(!db.related("beagle", "animal", 1));
        assert!(db.related("happy", "sad", 10));
        assert!(db.related("happy", "glad", 10));
        assert!(!db.related("happy", "table", 10));
    }

    #[test]
    fn empty_directory_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        match load_wordnet(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("index.noun")),
            other => panic!("expected missing file, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        for entry in std::fs::read_dir(fixture()).unwrap() {
            let entry = entry.unwrap();
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
        let path = dir.path().join("data.verb");
        let mut text = std::fs::read_to_string(&path).unwrap();
        let bad_offset = text.len() as u64;
        text.push_str("00000999 29 v zz walk 0 000 | broken\n");
        std::fs::write(&path, text).unwrap();
        match load_wordnet(dir.path()) {
            Err(Error::Parse { offset, path: p, .. }) => {
                assert_eq!(offset, bad_offset);
                assert!(p.ends_with("data.verb"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    /// Counts lemmas of a full WordNet 3.0 install. Set `RELPROBE_WORDNET` to
    /// the `dict/` directory to run.
    #[test]
    #[ignore]
    fn full_wordnet_noun_index() {
        let dir = std::env::var("RELPROBE_WORDNET").expect("RELPROBE_WORDNET not set");
        let db = load_wordnet(Path::new(&dir)).unwrap();
        let nouns = db.lemmas.values().filter(|p| p.contains(&Pos::Noun)).count();
        assert!(nouns > 100_000, "{nouns}");
    }
}
