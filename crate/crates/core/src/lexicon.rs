//! Word → concept/semantic-group lexicon backing the two augmentation
//! mechanisms.
//!
//! The lexicon answers the two queries the model needs: which semantic
//! group a word belongs to (for the group embedding added to its input
//! vector) and which words share a concept id with it (for multi-label
//! mask targets). It is loaded from a three-column TSV file:
//!
//! ```text
//! word<TAB>cui[,cui...]<TAB>GROUP_NAME
//! ```
//!
//! Lines starting with `#` are comments. Words are lowercased on load and
//! on lookup, must be single tokens (no whitespace), and carry exactly one
//! semantic group; multiple comma-separated CUIs per word are allowed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead};

use thiserror::Error;

/// Concept unique identifier: `C` followed by seven decimal digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn parse(s: &str) -> Option<Self> {
        let bytes = s.as_bytes();
        if bytes.len() == 8 && bytes[0] == b'C' && bytes[1..].iter().all(u8::is_ascii_digit) {
            Some(ConceptId(s.to_owned()))
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A semantic group: contiguous id plus its uppercase name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticGroup {
    pub id: usize,
    pub name: String,
}

/// One lexicon row: a word, its concept ids, and its single group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub cuis: BTreeSet<ConceptId>,
    pub group: usize,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: expected 3 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: malformed CUI `{cui}` (expected C followed by 7 digits)")]
    BadCui { line: usize, cui: String },
    #[error("line {line}: empty word")]
    EmptyWord { line: usize },
    #[error("line {line}: word `{word}` contains whitespace; only single-token entries are supported")]
    MultiWord { line: usize, word: String },
    #[error("line {line}: empty group name")]
    EmptyGroup { line: usize },
    #[error("line {line}: duplicate word `{word}` with conflicting group `{group}` (previously `{previous}`)")]
    ConflictingGroup {
        line: usize,
        word: String,
        group: String,
        previous: String,
    },
    #[error("line {line}: no CUIs listed")]
    NoCuis { line: usize },
    #[error("I/O error reading lexicon: {0}")]
    Io(#[from] io::Error),
}

/// Immutable word → {CUIs, group} mapping with a CUI → words inverse index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    cui_index: BTreeMap<ConceptId, BTreeSet<String>>,
    groups: Vec<SemanticGroup>,
}

impl Lexicon {
    /// Parses the TSV format described in the module docs.
    ///
    /// Group ids are assigned in first-appearance order. A word listed
    /// twice merges its CUI sets, but listing it with two different groups
    /// is an error.
    pub fn load<R: BufRead>(source: R) -> Result<Lexicon, LexiconError> {
        let mut lex = Lexicon::default();
        let mut group_ids: BTreeMap<String, usize> = BTreeMap::new();

        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }

            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(LexiconError::ColumnCount {
                    line: line_no,
                    found: cols.len(),
                });
            }

            let word = cols[0].trim().to_lowercase();
            if word.is_empty() {
                return Err(LexiconError::EmptyWord { line: line_no });
            }
            if word.chars().any(char::is_whitespace) {
                return Err(LexiconError::MultiWord {
                    line: line_no,
                    word,
                });
            }

            let mut cuis = BTreeSet::new();
            for raw in cols[1].split(',') {
                let raw = raw.trim();
                if raw.is_empty() {
                    continue;
                }
                let cui = ConceptId::parse(raw).ok_or_else(|| LexiconError::BadCui {
                    line: line_no,
                    cui: raw.to_owned(),
                })?;
                cuis.insert(cui);
            }
            if cuis.is_empty() {
                return Err(LexiconError::NoCuis { line: line_no });
            }

            let group_name = cols[2].trim().to_uppercase();
            if group_name.is_empty() {
                return Err(LexiconError::EmptyGroup { line: line_no });
            }
            let next_id = group_ids.len();
            let group = *group_ids.entry(group_name.clone()).or_insert(next_id);
            if group == lex.groups.len() {
                lex.groups.push(SemanticGroup {
                    id: group,
                    name: group_name.clone(),
                });
            }

            match lex.entries.get_mut(&word) {
                Some(existing) => {
                    if existing.group != group {
                        return Err(LexiconError::ConflictingGroup {
                            line: line_no,
                            word,
                            group: group_name,
                            previous: lex.groups[existing.group].name.clone(),
                        });
                    }
                    existing.cuis.extend(cuis.iter().cloned());
                }
                None => {
                    lex.entries.insert(
                        word.clone(),
                        LexiconEntry {
                            word: word.clone(),
                            cuis: cuis.clone(),
                            group,
                        },
                    );
                }
            }
            for cui in cuis {
                lex.cui_index.entry(cui).or_default().insert(word.clone());
            }
        }

        Ok(lex)
    }

    pub fn load_str(source: &str) -> Result<Lexicon, LexiconError> {
        Lexicon::load(source.as_bytes())
    }

    /// Semantic-group id for a word, if the (lowercased) word is present.
    pub fn group_of(&self, word: &str) -> Option<usize> {
        self.entries.get(&word.to_lowercase()).map(|e| e.group)
    }

    /// All words sharing at least one CUI with `word`, the word itself
    /// included. Empty if the word is not in the lexicon.
    pub fn siblings(&self, word: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(entry) = self.entries.get(&word.to_lowercase()) {
            for cui in &entry.cuis {
                if let Some(words) = self.cui_index.get(cui) {
                    out.extend(words.iter().cloned());
                }
            }
        }
        out
    }

    /// Number of distinct semantic groups.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[SemanticGroup] {
        &self.groups
    }

    pub fn group_name(&self, id: usize) -> Option<&str> {
        self.groups.get(id).map(|g| g.name.as_str())
    }

    pub fn entry(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words_for_cui(&self, cui: &ConceptId) -> Option<&BTreeSet<String>> {
        self.cui_index.get(cui)
    }

    /// Serializes back to the TSV input format, entries sorted by word.
    /// Reloading the output yields an equal lexicon (group ids may be
    /// renumbered by first appearance, which sorting makes deterministic).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for entry in self.entries.values() {
            let cuis: Vec<&str> = entry.cuis.iter().map(|c| c.as_str()).collect();
            out.push_str(&entry.word);
            out.push('\t');
            out.push_str(&cuis.join(","));
            out.push('\t');
            out.push_str(&self.groups[entry.group].name);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
heart\tC0018787\tANATOMY
liver\tC0023884\tANATOMY
lungs\tC0024109\tANATOMY
lung\tC0024109\tANATOMY
pulmonary\tC0024109\tANATOMY
kidney\tC0022646\tANATOMY
ren\tC0022646\tANATOMY
mass\tC0577559\tDISORDER
lump\tC0577559\tDISORDER
bleeding\tC0019080\tDISORDER
hem\tC0019080\tDISORDER
";

    fn fixture() -> Lexicon {
        Lexicon::load_str(FIXTURE).unwrap()
    }

    #[test]
    fn single_line_entry() {
        let lex = Lexicon::load_str("lungs\tC0024109\tANATOMY\n").unwrap();
        let entry = lex.entry("lungs").unwrap();
        assert_eq!(entry.word, "lungs");
        assert_eq!(entry.cuis.len(), 1);
        assert!(entry.cuis.contains(&ConceptId::parse("C0024109").unwrap()));
        assert_eq!(lex.group_name(entry.group), Some("ANATOMY"));
    }

    #[test]
    fn empty_file_is_empty_lexicon() {
        let lex = Lexicon::load_str("").unwrap();
        assert_eq!(lex.len(), 0);
        assert_eq!(lex.group_count(), 0);
    }

    #[test]
    fn shared_cui_builds_inverse_index() {
        let lex = Lexicon::load_str("mass\tC0577559\tDISORDER\nlump\tC0577559\tDISORDER\n").unwrap();
        let cui = ConceptId::parse("C0577559").unwrap();
        let words = lex.words_for_cui(&cui).unwrap();
        assert_eq!(
            words.iter().cloned().collect::<Vec<_>>(),
            vec!["lump".to_string(), "mass".to_string()]
        );
    }

    #[test]
    fn group_lookup() {
        let lex = fixture();
        let anatomy = lex.group_of("heart").unwrap();
        assert_eq!(lex.group_name(anatomy), Some("ANATOMY"));
        let disorder = lex.group_of("bleeding").unwrap();
        assert_eq!(lex.group_name(disorder), Some("DISORDER"));
        assert_eq!(lex.group_of("the"), None);
    }

    #[test]
    fn lookup_lowercases() {
        let lex = fixture();
        assert_eq!(lex.group_of("Heart"), lex.group_of("heart"));
        assert!(lex.group_of("HEART").is_some());
    }

    #[test]
    fn siblings_of_lungs() {
        let lex = fixture();
        let sib: Vec<String> = lex.siblings("lungs").into_iter().collect();
        assert_eq!(sib, vec!["lung", "lungs", "pulmonary"]);
    }

    #[test]
    fn siblings_of_kidney() {
        let lex = fixture();
        let sib: Vec<String> = lex.siblings("kidney").into_iter().collect();
        assert_eq!(sib, vec!["kidney", "ren"]);
    }

    #[test]
    fn siblings_of_absent_word_empty() {
        let lex = fixture();
        assert!(lex.siblings("the").is_empty());
    }

    #[test]
    fn group_count_from_fixture() {
        assert_eq!(fixture().group_count(), 2);
        assert_eq!(Lexicon::default().group_count(), 0);
    }

    #[test]
    fn group_ids_first_appearance_order() {
        let lex = fixture();
        assert_eq!(lex.groups()[0].name, "ANATOMY");
        assert_eq!(lex.groups()[1].name, "DISORDER");
        assert_eq!(lex.groups()[0].id, 0);
        assert_eq!(lex.groups()[1].id, 1);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let lex = Lexicon::load_str("# header\n\nheart\tC0018787\tANATOMY\n").unwrap();
        assert_eq!(lex.len(), 1);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let err = Lexicon::load_str("heart\tC0018787\tANATOMY\nbroken\tC0000001\n").unwrap_err();
        match err {
            LexiconError::ColumnCount { line, found } => {
                assert_eq!(line, 2);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_cui_rejected() {
        for bad in ["X0024109", "C24109", "C00241090", "C002410a", ""] {
            let input = format!("lungs\t{bad}\tANATOMY\n");
            assert!(Lexicon::load_str(&input).is_err(), "accepted `{bad}`");
        }
    }

    #[test]
    fn multi_word_entry_rejected() {
        let err = Lexicon::load_str("heart attack\tC0027051\tDISORDER\n").unwrap_err();
        assert!(matches!(err, LexiconError::MultiWord { line: 1, .. }));
    }

    #[test]
    fn conflicting_group_rejected() {
        let err =
            Lexicon::load_str("mass\tC0577559\tDISORDER\nmass\tC0577559\tANATOMY\n").unwrap_err();
        assert!(matches!(err, LexiconError::ConflictingGroup { line: 2, .. }));
    }

    #[test]
    fn duplicate_word_same_group_merges_cuis() {
        let lex = Lexicon::load_str("mass\tC0577559\tDISORDER\nmass\tC0026339\tDISORDER\n").unwrap();
        assert_eq!(lex.entry("mass").unwrap().cuis.len(), 2);
        assert_eq!(lex.len(), 1);
    }

    #[test]
    fn multiple_cuis_per_word_union_siblings() {
        let lex = Lexicon::load_str(
            "cold\tC0009443,C0234192\tDISORDER\nchill\tC0234192\tDISORDER\nflu\tC0009443\tDISORDER\n",
        )
        .unwrap();
        let sib: Vec<String> = lex.siblings("cold").into_iter().collect();
        assert_eq!(sib, vec!["chill", "cold", "flu"]);
    }

    #[test]
    fn sibling_symmetry_and_reflexivity() {
        let lex = fixture();
        let words: Vec<String> = lex.entries().map(|e| e.word.clone()).collect();
        for a in &words {
            assert!(lex.siblings(a).contains(a), "{a} not in its own siblings");
            for b in &words {
                let a_in_b = lex.siblings(b).contains(a);
                let b_in_a = lex.siblings(a).contains(b);
                assert_eq!(a_in_b, b_in_a, "asymmetry between {a} and {b}");
            }
        }
    }

    #[test]
    fn cui_index_matches_brute_force_rebuild() {
        let lex = fixture();
        let mut rebuilt: BTreeMap<ConceptId, BTreeSet<String>> = BTreeMap::new();
        for entry in lex.entries() {
            for cui in &entry.cuis {
                rebuilt
                    .entry(cui.clone())
                    .or_default()
                    .insert(entry.word.clone());
            }
        }
        for (cui, words) in &rebuilt {
            assert_eq!(lex.words_for_cui(cui), Some(words));
        }
        let index_cuis: Vec<_> = lex
            .entries()
            .flat_map(|e| e.cuis.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(rebuilt.keys().cloned().collect::<Vec<_>>(), index_cuis);
    }

    #[test]
    fn tsv_round_trip() {
        let lex = fixture();
        let reloaded = Lexicon::load_str(&lex.to_tsv()).unwrap();

        // Same words, same CUI sets, same group names. Group ids follow
        // first appearance in the sorted output, so compare by name.
        assert_eq!(lex.len(), reloaded.len());
        for entry in lex.entries() {
            let other = reloaded.entry(&entry.word).unwrap();
            assert_eq!(entry.cuis, other.cuis);
            assert_eq!(
                lex.group_name(entry.group),
                reloaded.group_name(other.group)
            );
        }

        // A second pass is the identity: sorted TSV is the normal form.
        let again = Lexicon::load_str(&reloaded.to_tsv()).unwrap();
        assert_eq!(reloaded, again);
        assert_eq!(reloaded.to_tsv(), again.to_tsv());
    }
}
