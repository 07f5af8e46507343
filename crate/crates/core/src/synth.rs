//! Deterministic generator for a small clinical-note-flavoured corpus with
//! a matching lexicon: four semantic groups, ten planted synonym pairs that
//! share a concept id, and group-specific sentence templates that make the
//! members of a pair substitutable for one another. The integration tests
//! train on this material; it is also handy for quick experiments.

use rand::Rng;

use crate::lexicon::Lexicon;
use crate::rng::stream;

/// Semantic groups of the generated lexicon, in group-id order.
pub const GROUP_NAMES: [&str; 4] = ["ANATOMY", "DISORDER", "PROCEDURE", "FINDING"];

/// The planted synonym pairs: both words carry the same concept id, so the
/// expanded targets treat each as evidence for the other.
const PAIRS: [(&str, &str, &str, usize); 10] = [
    ("lung", "pulmonary", "C0100001", 0),
    ("kidney", "renal", "C0100002", 0),
    ("liver", "hepatic", "C0100003", 0),
    ("mass", "lump", "C0100004", 1),
    ("bleeding", "hemorrhage", "C0100005", 1),
    ("stroke", "infarct", "C0100006", 1),
    ("scan", "imaging", "C0100007", 2),
    ("biopsy", "sampling", "C0100008", 2),
    ("fever", "pyrexia", "C0100009", 3),
    ("swelling", "edema", "C0100010", 3),
];

/// Lexicon words without a planted synonym, each with its own concept id.
const SINGLETONS: [(&str, &str, usize); 16] = [
    ("spleen", "C0200001", 0),
    ("femur", "C0200002", 0),
    ("aorta", "C0200003", 0),
    ("colon", "C0200004", 0),
    ("ulcer", "C0200005", 1),
    ("lesion", "C0200006", 1),
    ("tremor", "C0200007", 1),
    ("rash", "C0200008", 1),
    ("dialysis", "C0200009", 2),
    ("suture", "C0200010", 2),
    ("lavage", "C0200011", 2),
    ("drainage", "C0200012", 2),
    ("pallor", "C0200013", 3),
    ("fatigue", "C0200014", 3),
    ("cough", "C0200015", 3),
    ("nausea", "C0200016", 3),
];

/// Sentence shapes per group. `{}` marks the slot a group member fills;
/// every other word is deliberately kept out of the lexicon so that a
/// sentence's only lexicon word is its slot.
const TEMPLATES: [&[&str]; 4] = [
    &[
        "the {} appeared stable on the morning round",
        "review of the {} found nothing new today",
        "the left {} was checked again before discharge",
        "notes described the {} as unremarkable during the stay",
    ],
    &[
        "a small {} was noted near the lower margin",
        "the chart recorded a {} seen last month",
        "no new {} appeared while the patient rested",
        "the team watched the {} closely for two days",
    ],
    &[
        "a repeat {} was ordered for tomorrow morning",
        "the {} went smoothly without any complication",
        "results from the {} arrived later that evening",
        "a bedside {} confirmed the earlier impression",
    ],
    &[
        "mild {} was present when the nurse checked",
        "the {} settled overnight without extra medication",
        "the patient reported {} beginning two days before admission",
        "persistent {} remained the only complaint at discharge",
    ],
];

/// A generated corpus with the lexicon it was written against.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub sentences: Vec<String>,
    pub lexicon: Lexicon,
    /// The planted synonym pairs, for similarity scoring.
    pub pairs: Vec<(String, String)>,
}

/// The generator's lexicon in loadable form. Fixed — only sentence
/// sampling depends on the seed.
pub fn lexicon_tsv() -> String {
    let mut out = String::new();
    for (a, b, cui, g) in PAIRS {
        out.push_str(&format!("{a}\t{cui}\t{}\n", GROUP_NAMES[g]));
        out.push_str(&format!("{b}\t{cui}\t{}\n", GROUP_NAMES[g]));
    }
    for (w, cui, g) in SINGLETONS {
        out.push_str(&format!("{w}\t{cui}\t{}\n", GROUP_NAMES[g]));
    }
    out
}

fn group_members() -> [Vec<&'static str>; 4] {
    let mut members: [Vec<&'static str>; 4] = Default::default();
    for (a, b, _, g) in PAIRS {
        members[g].push(a);
        members[g].push(b);
    }
    for (w, _, g) in SINGLETONS {
        members[g].push(w);
    }
    members
}

/// Generate `sentence_count` sentences, cycling through the four groups so
/// each is equally represented, with template and slot word drawn from a
/// seeded stream. Identical seeds give identical corpora.
pub fn corpus(master_seed: u64, sentence_count: usize) -> SynthData {
    let members = group_members();
    let mut rng = stream(master_seed, "synth", 0);
    let sentences = (0..sentence_count)
        .map(|i| {
            let g = i % GROUP_NAMES.len();
            let template = TEMPLATES[g][rng.gen_range(0..TEMPLATES[g].len())];
            let word = members[g][rng.gen_range(0..members[g].len())];
            template.replace("{}", word)
        })
        .collect();
    let lexicon = Lexicon::load_str(&lexicon_tsv()).expect("generator lexicon is well-formed");
    let pairs = PAIRS
        .iter()
        .map(|&(a, b, _, _)| (a.to_string(), b.to_string()))
        .collect();
    SynthData {
        sentences,
        lexicon,
        pairs,
    }
}

/// Like [`corpus`], but rendered as `word/TAG` lines where the slot word
/// carries its semantic group and everything else is tagged `O`. Drawn
/// from its own stream, so tagged and untagged corpora for one seed are
/// independent samples of the same distribution.
pub fn tagged_corpus(master_seed: u64, sentence_count: usize) -> String {
    let members = group_members();
    let mut rng = stream(master_seed, "synth", 1);
    let mut out = String::new();
    for i in 0..sentence_count {
        let g = i % GROUP_NAMES.len();
        let template = TEMPLATES[g][rng.gen_range(0..TEMPLATES[g].len())];
        let word = members[g][rng.gen_range(0..members[g].len())];
        let tagged: Vec<String> = template
            .split_whitespace()
            .map(|t| {
                if t == "{}" {
                    format!("{word}/{}", GROUP_NAMES[g])
                } else {
                    format!("{t}/O")
                }
            })
            .collect();
        out.push_str(&tagged.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TaggedCorpus;
    use crate::tokenizer::Vocab;
    use std::collections::BTreeMap;

    #[test]
    fn generation_is_seed_deterministic() {
        let a = corpus(7, 200);
        let b = corpus(7, 200);
        assert_eq!(a.sentences, b.sentences);
        let c = corpus(8, 200);
        assert_ne!(a.sentences, c.sentences);
    }

    #[test]
    fn vocabulary_lands_in_the_intended_band() {
        let data = corpus(1, 2000);
        let vocab = Vocab::build_from_lines(data.sentences.iter());
        let words = vocab.words().count();
        assert!(
            (100..=140).contains(&words),
            "expected a vocabulary near 120 words, got {words}"
        );
        for entry in data.lexicon.entries() {
            assert!(
                vocab.id(&entry.word).is_some(),
                "lexicon word {:?} never sampled",
                entry.word
            );
        }
    }

    #[test]
    fn planted_pairs_share_a_concept() {
        let data = corpus(3, 100);
        for (a, b) in &data.pairs {
            assert!(
                data.lexicon.siblings(a).contains(b),
                "{a} and {b} should be siblings"
            );
            assert_eq!(data.lexicon.group_of(a), data.lexicon.group_of(b));
        }
        assert_eq!(data.pairs.len(), 10);
        assert_eq!(data.lexicon.group_count(), 4);
    }

    #[test]
    fn both_members_of_every_pair_occur() {
        let data = corpus(5, 2000);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &data.sentences {
            for w in s.split_whitespace() {
                *counts.entry(w).or_default() += 1;
            }
        }
        for (a, b) in &data.pairs {
            assert!(counts[a.as_str()] >= 5, "{a} occurs {}", counts[a.as_str()]);
            assert!(counts[b.as_str()] >= 5, "{b} occurs {}", counts[b.as_str()]);
        }
    }

    #[test]
    fn sentences_stay_short_and_balanced() {
        let data = corpus(11, 400);
        for s in &data.sentences {
            let words = s.split_whitespace().count();
            assert!(words <= 10, "template too long: {s}");
        }
        // Round-robin group assignment keeps the groups balanced exactly.
        let mut per_group = [0usize; 4];
        for (i, _) in data.sentences.iter().enumerate() {
            per_group[i % 4] += 1;
        }
        assert_eq!(per_group, [100, 100, 100, 100]);
    }

    #[test]
    fn template_words_stay_out_of_the_lexicon() {
        let data = corpus(2, 400);
        for group in TEMPLATES {
            for template in group {
                for word in template.split_whitespace() {
                    if word != "{}" {
                        assert!(
                            data.lexicon.group_of(word).is_none(),
                            "template word {word:?} collides with the lexicon"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn tagged_output_parses_and_tags_match_the_lexicon() {
        let text = tagged_corpus(9, 400);
        let corpus_data = corpus(9, 400);
        let tagged = TaggedCorpus::parse_str(&text).unwrap();
        assert_eq!(tagged.sentences.len(), 400);
        assert_eq!(tagged.tags.len(), 5, "O plus the four groups");
        let mut seen = [false; 4];
        for s in &tagged.sentences {
            for (w, &t) in s.words.iter().zip(&s.tag_ids) {
                let tag = tagged.tags[t].as_str();
                match corpus_data.lexicon.group_of(w) {
                    Some(g) => {
                        assert_eq!(tag, GROUP_NAMES[g], "slot word {w} mistagged");
                        seen[g] = true;
                    }
                    None => assert_eq!(tag, "O", "filler word {w} mistagged"),
                }
            }
        }
        assert_eq!(seen, [true; 4], "every group should appear");
    }
}
