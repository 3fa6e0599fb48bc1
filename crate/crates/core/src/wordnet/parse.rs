//! Line parsers for the WordNet database format (`wndb(5WN)`).

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexLine {
    pub lemma: String,
    pub pos: String,
    pub synset_offsets: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pointer {
    pub symbol: String,
    pub offset: u32,
    pub pos: String,
    /// 1-based source word number, `None` for semantic pointers.
    pub source: Option<usize>,
    /// 1-based target word number, `None` for semantic pointers.
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLine {
    pub offset: u32,
    pub ss_type: String,
    pub words: Vec<String>,
    pub pointers: Vec<Pointer>,
}

struct Fields<'a> {
    inner: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, String> {
        self.inner.next().ok_or_else(|| format!("missing {what}"))
    }

    fn dec<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, String> {
        let raw = self.next(what)?;
        raw.parse().map_err(|_| format!("bad {what} {raw:?}"))
    }

    fn hex(&mut self, what: &str) -> Result<usize, String> {
        let raw = self.next(what)?;
        usize::from_str_radix(raw, 16).map_err(|_| format!("bad {what} {raw:?}"))
    }
}

pub fn parse_index_line(line: &str) -> Result<IndexLine, String> {
    let mut f = Fields {
        inner: line.split_whitespace(),
    };
    let lemma = f.next("lemma")?.to_string();
    let pos = f.next("pos")?.to_string();
    let synset_cnt: usize = f.dec("synset_cnt")?;
    let p_cnt: usize = f.dec("p_cnt")?;
    for _ in 0..p_cnt {
        f.next("ptr_symbol")?;
    }
    let _sense_cnt: usize = f.dec("sense_cnt")?;
    let _tagsense_cnt: usize = f.dec("tagsense_cnt")?;
    let synset_offsets = (0..synset_cnt)
        .map(|_| f.dec::<u32>("synset_offset"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IndexLine {
        lemma,
        pos,
        synset_offsets,
    })
}

/// Strips the adjective syntactic marker, e.g. `galore(ip)` -> `galore`.
fn strip_marker(word: &str) -> &str {
    match word.find('(') {
        Some(i) if word.ends_with(')') => &word[..i],
        _ => word,
    }
}

pub fn parse_data_line(line: &str) -> Result<DataLine, String> {
    let body = match line.find(" | ") {
        Some(i) => &line[..i],
        None => line.strip_suffix(" |").unwrap_or(line),
    };
    let mut f = Fields {
        inner: body.split_whitespace(),
    };
    let offset: u32 = f.dec("synset_offset")?;
    let _lex_filenum: u32 = f.dec("lex_filenum")?;
    let ss_type = f.next("ss_type")?.to_string();
    if !matches!(ss_type.as_str(), "n" | "v" | "a" | "s" | "r") {
        return Err(format!("bad ss_type {ss_type:?}"));
    }
    let w_cnt = f.hex("w_cnt")?;
    if w_cnt == 0 {
        return Err("synset without words".to_string());
    }
    let mut words = Vec::with_capacity(w_cnt);
    for _ in 0..w_cnt {
        words.push(strip_marker(f.next("word")?).to_string());
        f.hex("lex_id")?;
    }
    let p_cnt: usize = f.dec("p_cnt")?;
    let mut pointers = Vec::with_capacity(p_cnt);
    for _ in 0..p_cnt {
        let symbol = f.next("pointer_symbol")?.to_string();
        let ptr_offset: u32 = f.dec("pointer offset")?;
        let pos = f.next("pointer pos")?.to_string();
        let st = f.next("source/target")?;
        if st.len() != 4 {
            return Err(format!("bad source/target {st:?}"));
        }
        let source = usize::from_str_radix(&st[..2], 16).map_err(|_| format!("bad source/target {st:?}"))?;
        let target = usize::from_str_radix(&st[2..], 16).map_err(|_| format!("bad source/target {st:?}"))?;
        if source > w_cnt {
            return Err(format!("pointer source word {source} out of range"));
        }
        pointers.push(Pointer {
            symbol,
            offset: ptr_offset,
            pos,
            source: (source != 0).then_some(source),
            target: (target != 0).then_some(target),
        });
    }
    // verb frames follow; they carry nothing the dataset needs
    Ok(DataLine {
        offset,
        ss_type,
        words,
        pointers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_real_noun_line() {
        let line = "02084071 05 n 03 dog 0 domestic_dog 0 Canis_familiaris 0 002 @ 02083346 n 0000 ~ 01322604 n 0000 | a member of the genus Canis";
        let d = parse_data_line(line).unwrap();
        assert_eq!(d.offset, 2084071);
        assert_eq!(d.words, ["dog", "domestic_dog", "Canis_familiaris"]);
        assert_eq!(d.pointers.len(), 2);
        assert_eq!(d.pointers[0].symbol, "@");
        assert_eq!(d.pointers[0].offset, 2083346);
        assert_eq!(d.pointers[0].source, None);
    }

    #[test]
    fn parses_verb_frames_and_lexical_pointers() {
        let line = "01904930 38 v 01 walk 0 002 ! 01909397 v 0101 @ 01835496 v 0000 02 + 08 00 + 09 00 | use one's feet";
        let d = parse_data_line(line).unwrap();
        assert_eq!(d.pointers[0].source, Some(1));
        assert_eq!(d.pointers[0].target, Some(1));
    }

    #[test]
    fn parses_index_line() {
        let line = "dog n 7 5 @ ~ #m #p %p 7 1 02084071 10114209 10023039 09886220 07676602 03907626 02005890";
        let i = parse_index_line(line).unwrap();
        assert_eq!(i.lemma, "dog");
        assert_eq!(i.synset_offsets.len(), 7);
        assert!(parse_index_line("dog n 7").is_err());
    }

    #[test]
    fn rejects_truncated_pointer_list() {
        assert!(parse_data_line("00000001 00 n 01 cat 0 002 @ 00000002 n 0000 | x").is_err());
        assert!(parse_data_line("00000001 00 q 01 cat 0 000 | x").is_err());
    }
}
